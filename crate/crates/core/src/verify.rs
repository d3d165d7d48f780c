//! Invariant check suites over the corpus, with counterexample reporting.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{check_label_independence, hot_one_encode, layer_forward, synthesize_layer};
use crate::graph::{digest_words, readout_multiset, refines, LabelledGraph, Labelling};
use crate::io::GraphFile;
use crate::mpnn::{
    feature_dim, integer_features, mpnn_step, powersum_encoder, run_mpnn, BigIntCountableSimulator, FeatureMatrix,
    InternedSimulator, RandomMpnn, UncountableSimulator, DEFAULT_DIMENSION_CAP,
};
use crate::oracle::{
    brute_force_partition, corpus, gen_named_pair, named_member, partition_of, random_member, random_permutation,
    CorpusGraph, NAMED_GRAPHS,
};
use crate::refinement::{ceil_log2, compare_graphs, run_to_stable, step, Procedure, RefinementTrace, Verdict};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifyError {
    #[error("unknown suite {0:?}; known suites: {known}", known = SUITES.join(", "))]
    UnknownSuite(String),
}

/// Deliberate defects for checking that the suites can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutant {
    /// Production walk refinement runs with `ℓ + 1` instead of `ℓ`.
    WalkLengthOffByOne,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Restrict to these suites.
    pub only: Option<Vec<String>>,
    /// Offset for every random seed the suites draw.
    pub seed: u64,
    #[doc(hidden)]
    pub mutant: Option<Mutant>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub case: String,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub graph: Option<GraphFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub counterexample: Option<Counterexample>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

pub const SUITES: &[&str] = &[
    "feature-dim",
    "fixpoint",
    "monotone",
    "cross-ell",
    "speedup-bound",
    "round-counts",
    "mpnn-upper-bound",
    "countable-sim",
    "powersum",
    "gnn-sim",
    "witnesses",
    "oracle",
    "permutation-invariance",
    "golden",
];

/// Result of checking one case: number of checks, or the first failure.
type CaseResult = Result<u64, Counterexample>;

fn fail(case: &CorpusGraph, detail: impl Into<String>) -> Counterexample {
    Counterexample { case: case.name.clone(), detail: detail.into(), graph: Some(GraphFile::from_graph(&case.graph)) }
}

struct Ctx {
    seed: u64,
    mutant: Option<Mutant>,
}

impl Ctx {
    /// The walk length production code is asked to use for `ℓ`.
    fn ell(&self, ell: usize) -> usize {
        match self.mutant {
            Some(Mutant::WalkLengthOffByOne) => ell + 1,
            None => ell,
        }
    }

    fn walk(&self, ell: usize) -> Procedure {
        Procedure::Walk(self.ell(ell))
    }

    fn trace(&self, g: &LabelledGraph, procedure: Procedure) -> Result<RefinementTrace, String> {
        run_to_stable(g, procedure, None).map_err(|e| e.to_string())
    }
}

fn finish(suite: &str, results: Vec<CaseResult>) -> SuiteReport {
    let mut checks = 0;
    for r in results {
        match r {
            Ok(c) => checks += c,
            Err(ce) => {
                return SuiteReport { suite: suite.into(), passed: false, checks, counterexample: Some(ce) };
            }
        }
    }
    SuiteReport { suite: suite.into(), passed: true, checks, counterexample: None }
}

fn check(
    cond: bool,
    checks: &mut u64,
    case: &CorpusGraph,
    detail: impl FnOnce() -> String,
) -> Result<(), Counterexample> {
    *checks += 1;
    if cond {
        Ok(())
    } else {
        Err(fail(case, detail()))
    }
}

fn suite_feature_dim(_: &Ctx) -> SuiteReport {
    let mut results = Vec::new();
    let mut push = |ok: bool, detail: String| {
        results.push(if ok { Ok(1) } else { Err(Counterexample { case: "feature_dim".into(), detail, graph: None }) })
    };
    let a = feature_dim(10, 2, 1);
    push(a == BigUint::from(66u32), format!("feature_dim(10, 2, 1) = {a}"));
    let b = feature_dim(10, 2, 66);
    push(b == BigUint::from(664_226_242_466_073u64), format!("feature_dim(10, 2, 66) = {b}"));
    let refused = UncountableSimulator::new(10, 2, 1, 2, DEFAULT_DIMENSION_CAP).is_err();
    push(refused, "second round for n = 10 was not refused".into());
    finish("feature-dim", results)
}

fn per_case<F>(cases: &[CorpusGraph], f: F) -> Vec<CaseResult>
where
    F: Fn(&CorpusGraph) -> CaseResult + Sync + Send,
{
    cases.par_iter().map(f).collect()
}

const ELLS: [usize; 3] = [2, 3, 4];

fn suite_fixpoint(ctx: &Ctx, cases: &[CorpusGraph]) -> SuiteReport {
    finish(
        "fixpoint",
        per_case(cases, |case| {
            let wl = ctx.trace(&case.graph, Procedure::Wl2).map_err(|e| fail(case, e))?;
            let mut checks = 0;
            for ell in ELLS {
                let w = ctx.trace(&case.graph, ctx.walk(ell)).map_err(|e| fail(case, e))?;
                let eq = w.stable().equivalent(wl.stable()).unwrap_or(false);
                check(eq, &mut checks, case, || format!("stable W[{ell}] differs from stable WL2"))?;
            }
            Ok(checks)
        }),
    )
}

fn suite_monotone(ctx: &Ctx, cases: &[CorpusGraph]) -> SuiteReport {
    finish(
        "monotone",
        per_case(cases, |case| {
            let mut checks = 0;
            let procs = [Procedure::Wl2].into_iter().chain(ELLS.map(|l| ctx.walk(l)));
            for p in procs {
                let tr = ctx.trace(&case.graph, p).map_err(|e| fail(case, e))?;
                for t in 1..tr.rounds.len() {
                    let ok = refines(&tr.rounds[t], &tr.rounds[t - 1]).unwrap_or(false);
                    check(ok, &mut checks, case, || format!("{} round {t} does not refine round {}", p.name(), t - 1))?;
                }
            }
            Ok(checks)
        }),
    )
}

fn walk_traces(ctx: &Ctx, case: &CorpusGraph) -> Result<Vec<(usize, RefinementTrace)>, Counterexample> {
    ELLS.iter().map(|&ell| Ok((ell, ctx.trace(&case.graph, ctx.walk(ell)).map_err(|e| fail(case, e))?))).collect()
}

fn suite_cross_ell(ctx: &Ctx, cases: &[CorpusGraph]) -> SuiteReport {
    finish(
        "cross-ell",
        per_case(cases, |case| {
            let traces = walk_traces(ctx, case)?;
            let horizon = traces.iter().map(|(_, t)| t.rounds.len()).max().unwrap_or(1);
            let mut checks = 0;
            for (ell, big) in &traces {
                for (k, small) in traces.iter().filter(|(k, _)| k <= ell) {
                    for t in 0..horizon {
                        let ok = refines(big.at(t), small.at(t)).unwrap_or(false);
                        check(ok, &mut checks, case, || {
                            format!("W[{ell}] round {t} does not refine W[{k}] round {t}")
                        })?;
                    }
                }
            }
            Ok(checks)
        }),
    )
}

fn suite_speedup(ctx: &Ctx, cases: &[CorpusGraph]) -> SuiteReport {
    finish(
        "speedup-bound",
        per_case(cases, |case| {
            let wl = ctx.trace(&case.graph, Procedure::Wl2).map_err(|e| fail(case, e))?;
            let mut checks = 0;
            for (ell, w) in walk_traces(ctx, case)? {
                let factor = ceil_log2(ell);
                let horizon = w.rounds.len().max(wl.rounds.len());
                for t in 0..horizon {
                    let ok = refines(wl.at(t * factor), w.at(t)).unwrap_or(false);
                    check(ok, &mut checks, case, || {
                        format!("WL2 round {} does not refine W[{ell}] round {t}", t * factor)
                    })?;
                }
            }
            Ok(checks)
        }),
    )
}

fn suite_round_counts(ctx: &Ctx, cases: &[CorpusGraph]) -> SuiteReport {
    finish(
        "round-counts",
        per_case(cases, |case| {
            let wl = ctx.trace(&case.graph, Procedure::Wl2).map_err(|e| fail(case, e))?.stable_round;
            let mut checks = 0;
            for (ell, w) in walk_traces(ctx, case)? {
                let r = w.stable_round;
                let upper = r * ceil_log2(ell);
                check(r <= wl && wl <= upper, &mut checks, case, || {
                    format!("stable rounds W[{ell}] = {r}, WL2 = {wl}, bound {r} ≤ {wl} ≤ {upper} fails")
                })?;
            }
            Ok(checks)
        }),
    )
}

fn suite_mpnn_upper_bound(ctx: &Ctx) -> SuiteReport {
    let results = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let case = random_member(ctx.seed + i);
            let ell = 2 + (i % 2) as usize;
            let mpnn = RandomMpnn::new(ell, ctx.seed.wrapping_mul(31) + i);
            let tr = ctx.trace(&case.graph, ctx.walk(ell)).map_err(|e| fail(&case, e))?;
            let rounds = run_mpnn(&mpnn, integer_features(&case.graph.labelling()), tr.rounds.len())
                .map_err(|e| fail(&case, e.to_string()))?;
            let mut checks = 0;
            for (t, fm) in rounds.iter().enumerate() {
                let ok = refines(tr.at(t), &fm.partition()).unwrap_or(false);
                check(ok, &mut checks, &case, || {
                    format!("W[{ell}] round {t} does not refine MPNN seed {i} round {t}")
                })?;
            }
            Ok(checks)
        })
        .collect();
    finish("mpnn-upper-bound", results)
}

fn suite_countable(ctx: &Ctx) -> SuiteReport {
    let results = (0..50u64)
        .into_par_iter()
        .flat_map_iter(|i| [2usize, 3].into_iter().map(move |ell| (i, ell)))
        .map(|(i, ell)| {
            let seed = ctx.seed + i;
            let n = 3 + (seed % 3) as usize;
            let alphabet = 1 + ((seed / 3) % 3) as usize;
            let graph = crate::oracle::gen_random_labelled(n, alphabet, seed).expect("valid parameters");
            let case = CorpusGraph {
                family: "random",
                name: format!("random-n{n}-a{alphabet}-s{seed}"),
                seed: Some(seed),
                alphabet: Some(alphabet),
                graph,
            };
            let tr = ctx.trace(&case.graph, ctx.walk(ell)).map_err(|e| fail(&case, e))?;
            let l = case.graph.labelling();
            let sim = crate::mpnn::countable_simulator(n, ell).map_err(|e| fail(&case, e.to_string()))?;
            let rounds = run_mpnn(&sim, sim.lift(&l), tr.rounds.len()).map_err(|e| fail(&case, e.to_string()))?;
            let interned = InternedSimulator::new(ell);
            let alt =
                run_mpnn(&interned, interned.lift(&l), tr.rounds.len()).map_err(|e| fail(&case, e.to_string()))?;
            let mut checks = 0;
            for (t, fm) in rounds.iter().enumerate() {
                let ok = fm.partition().equivalent(tr.at(t)).unwrap_or(false);
                check(ok, &mut checks, &case, || format!("countable simulator round {t} differs from W[{ell}]"))?;
                let natural = fm.cells.iter().all(|&id| sim.is_natural(id));
                check(natural, &mut checks, &case, || format!("round {t} has a feature that is not a natural number"))?;
                let same = alt[t].partition().equivalent(&fm.partition()).unwrap_or(false);
                check(same, &mut checks, &case, || format!("interned simulator disagrees at round {t}"))?;
            }
            // Plain big integers agree wherever they are still representable.
            let big = BigIntCountableSimulator::new(n, ell);
            if let Ok(first) = mpnn_step(&big, &big.lift(&l)) {
                let ok = first
                    .cells
                    .iter()
                    .zip(&rounds[1].cells)
                    .all(|(b, &id)| sim.value(id, big.max_bits).as_ref() == Some(b));
                check(ok, &mut checks, &case, || "tower and big-integer features differ at round 1".into())?;
            }
            Ok(checks)
        })
        .collect();
    finish("countable-sim", results)
}

fn suite_powersum(ctx: &Ctx) -> SuiteReport {
    let mut results = Vec::new();
    let half = BigRational::new(1.into(), 2.into());
    let values = [BigRational::from_integer(0.into()), half, BigRational::from_integer(1.into())];
    let vectors: Vec<Vec<BigRational>> =
        values.iter().flat_map(|x| values.iter().map(move |y| vec![x.clone(), y.clone()])).collect();
    let mut seen = BTreeSet::new();
    let mut multisets = 0u64;
    let mut collision = None;
    for a in 0..vectors.len() {
        for b in a..vectors.len() {
            for c in b..vectors.len() {
                multisets += 1;
                let rows = [vectors[a].clone(), vectors[b].clone(), vectors[c].clone()];
                let code = powersum_encoder(&rows).expect("well-formed rows");
                if !seen.insert(code) && collision.is_none() {
                    collision = Some(format!("multiset ({a}, {b}, {c}) collides"));
                }
            }
        }
    }
    results.push(match collision {
        None => Ok(multisets),
        Some(detail) => Err(Counterexample { case: "powersum-exhaustive".into(), detail, graph: None }),
    });
    let mut cases: Vec<CorpusGraph> =
        (0..100).map(|i| random_member(ctx.seed + i)).filter(|c| c.graph.n() <= 3).collect();
    cases.extend(["K1", "K2", "K3", "path2", "path3", "C3"].iter().map(|n| named_member(n).expect("fixture")));
    results.extend(per_case(&cases, |case| {
        let n = case.graph.n();
        let l = case.graph.labelling();
        let sim = UncountableSimulator::new(n, ctx.ell(2), 1, 1, DEFAULT_DIMENSION_CAP)
            .map_err(|e| fail(case, e.to_string()))?;
        let init = sim
            .lift(l.ids().iter().map(|&id| vec![BigRational::from_integer(id.into())]).collect(), n)
            .map_err(|e| fail(case, e.to_string()))?;
        let out = mpnn_step(&sim, &init).map_err(|e| fail(case, e.to_string()))?;
        let expected = step(&l, Procedure::Walk(2)).map_err(|e| fail(case, e.to_string()))?;
        let mut checks = 0;
        let ok = out.partition().equivalent(&expected).unwrap_or(false);
        check(ok, &mut checks, case, || "uncountable simulator round 1 differs from W[2]".into())?;
        Ok(checks)
    }));
    finish("powersum", results)
}

/// Named graphs with `n ≤ 6` and the first 25 random members with `n ≤ 5`.
pub fn gnn_cases(seed: u64) -> Vec<CorpusGraph> {
    let mut cases: Vec<CorpusGraph> =
        NAMED_GRAPHS.iter().map(|n| named_member(n).expect("fixture")).filter(|c| c.graph.n() <= 6).collect();
    cases.extend((0..).map(|i| random_member(seed + i)).filter(|c| c.graph.n() <= 5).take(25));
    cases
}

fn suite_gnn(ctx: &Ctx) -> SuiteReport {
    let cases = gnn_cases(ctx.seed);
    finish(
        "gnn-sim",
        per_case(&cases, |case| {
            let tr = ctx.trace(&case.graph, Procedure::Wl2).map_err(|e| fail(case, e))?;
            let mut a = hot_one_encode(&case.graph.labelling());
            let mut checks = 0;
            check(check_label_independence(&a), &mut checks, case, || "hot-one input is dependent".into())?;
            for t in 1..tr.rounds.len() {
                let w = synthesize_layer(&a).map_err(|e| fail(case, format!("round {t}: {e}")))?;
                a = layer_forward(&a, &w).map_err(|e| fail(case, format!("round {t}: {e}")))?;
                let part = a.partition().map_err(|e| fail(case, e.to_string()))?;
                check(part.equivalent(tr.at(t)).unwrap_or(false), &mut checks, case, || {
                    format!("layer {t} partition differs from WL2 round {t}")
                })?;
                check(check_label_independence(&a), &mut checks, case, || format!("layer {t} labels are dependent"))?;
            }
            Ok(checks)
        }),
    )
}

fn suite_witnesses(ctx: &Ctx) -> SuiteReport {
    let cases = [
        ("C6-vs-C3+C3", Procedure::Wl2, true),
        ("shrikhande-vs-rook4x4", Procedure::Wl2, false),
        ("shrikhande-vs-rook4x4", ctx.walk(3), false),
    ];
    let results = cases
        .par_iter()
        .map(|&(name, procedure, distinguished)| {
            let (a, b) = gen_named_pair(name).expect("fixture");
            let ce =
                |detail: String| Counterexample { case: format!("{name} {}", procedure.name()), detail, graph: None };
            let verdict = compare_graphs(&a, &b, procedure, None).map_err(|e| ce(e.to_string()))?;
            let got = matches!(verdict, Verdict::Distinguished { .. });
            if got == distinguished {
                Ok(1)
            } else {
                Err(ce(format!("unexpected verdict {verdict:?}")))
            }
        })
        .collect();
    finish("witnesses", results)
}

fn suite_oracle(ctx: &Ctx, cases: &[CorpusGraph]) -> SuiteReport {
    finish(
        "oracle",
        per_case(cases, |case| {
            let n = case.graph.n();
            let mut checks = 0;
            let mut procs = vec![(Procedure::Wl2, Procedure::Wl2)];
            if n <= 8 {
                procs.extend(ELLS.iter().map(|&ell| (Procedure::Walk(ell), ctx.walk(ell))));
            }
            for (reference, production) in procs {
                let tr = ctx.trace(&case.graph, production).map_err(|e| fail(case, e))?;
                for t in 0..tr.rounds.len() {
                    let expected = brute_force_partition(&case.graph, reference, t);
                    let got = partition_of(tr.at(t));
                    check(expected == got, &mut checks, case, || {
                        format!("{} round {t}: production partition differs from the oracle", reference.name())
                    })?;
                }
            }
            Ok(checks)
        }),
    )
}

fn unpermute(l: &Labelling, perm: &[usize]) -> Labelling {
    let n = l.n();
    Labelling::from_keys(n, (0..n * n).map(|c| l.get(perm[c / n], perm[c % n])))
}

fn suite_permutation(ctx: &Ctx, cases: &[CorpusGraph]) -> SuiteReport {
    finish(
        "permutation-invariance",
        per_case(cases, |case| {
            let perm = random_permutation(case.graph.n(), ctx.seed + case.seed.unwrap_or(7));
            let permuted = case.graph.permute(&perm).map_err(|e| fail(case, e.to_string()))?;
            let mut checks = 0;
            for p in [Procedure::Wl2, ctx.walk(3)] {
                let a = ctx.trace(&case.graph, p).map_err(|e| fail(case, e))?;
                let b = ctx.trace(&permuted, p).map_err(|e| fail(case, e))?;
                let back = unpermute(b.stable(), &perm);
                check(back.equivalent(a.stable()).unwrap_or(false), &mut checks, case, || {
                    format!("{}: stable labelling of the permuted graph differs", p.name())
                })?;
                check(readout_multiset(a.stable()) == readout_multiset(b.stable()), &mut checks, case, || {
                    format!("{}: readout changed under permutation", p.name())
                })?;
            }
            Ok(checks)
        }),
    )
}

/// One golden record of the corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub family: String,
    pub name: String,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alphabet: Option<usize>,
    pub procedure: String,
    pub stable_round: usize,
    pub class_count: usize,
    /// Digest of the stable readout multiset.
    pub fingerprint: String,
    /// Digest of the canonically renumbered stable matrix.
    pub matrix_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
}

/// The committed manifest.
pub const GOLDEN_MANIFEST: &str = include_str!("../data/corpus_manifest.json");

/// Digest of a labelling's canonical id matrix.
pub fn matrix_digest(l: &Labelling) -> String {
    let c = l.canonicalized();
    let words: Vec<u64> = std::iter::once(c.n() as u64).chain(c.ids().iter().map(|&x| u64::from(x))).collect();
    digest_words(&words)
}

/// Manifest recomputed from the current code: every corpus graph under
/// WL2 and W[3].
pub fn build_manifest() -> CorpusManifest {
    let cases = corpus();
    let entries = cases
        .par_iter()
        .flat_map_iter(|case| {
            [Procedure::Wl2, Procedure::Walk(3)].into_iter().map(move |p| {
                let tr = run_to_stable(&case.graph, p, None).expect("corpus stabilizes");
                ManifestEntry {
                    family: case.family.to_string(),
                    name: case.name.clone(),
                    n: case.graph.n(),
                    seed: case.seed,
                    alphabet: case.alphabet,
                    procedure: p.name(),
                    stable_round: tr.stable_round,
                    class_count: tr.stable().class_count(),
                    fingerprint: readout_multiset(tr.stable()).digest(),
                    matrix_digest: matrix_digest(tr.stable()),
                }
            })
        })
        .collect();
    CorpusManifest { version: 1, entries }
}

pub fn manifest_json(m: &CorpusManifest) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("plain data");
    s.push('\n');
    s
}

fn suite_golden(ctx: &Ctx) -> SuiteReport {
    let ce = |detail: String| Counterexample { case: "corpus-manifest".into(), detail, graph: None };
    let golden: CorpusManifest = match serde_json::from_str(GOLDEN_MANIFEST) {
        Ok(m) => m,
        Err(e) => return finish("golden", vec![Err(ce(format!("unreadable manifest: {e}")))]),
    };
    let mut fresh = build_manifest();
    if ctx.mutant.is_some() {
        // Recompute the W[3] records with the defective walk length.
        for (entry, case) in fresh.entries.iter_mut().zip(corpus().iter().flat_map(|c| [c, c])) {
            if entry.procedure == Procedure::Walk(3).name() {
                let tr = run_to_stable(&case.graph, ctx.walk(3), None).expect("corpus stabilizes");
                entry.stable_round = tr.stable_round;
                entry.matrix_digest = matrix_digest(tr.stable());
            }
        }
    }
    if golden.entries.is_empty() {
        return finish("golden", vec![Err(ce("manifest has no entries; regenerate it".into()))]);
    }
    let results =
        if golden.entries.len() != fresh.entries.len() {
            vec![Err(ce(format!("manifest has {} entries, corpus has {}", golden.entries.len(), fresh.entries.len())))]
        } else {
            golden
                .entries
                .iter()
                .zip(&fresh.entries)
                .map(|(g, f)| {
                    if g == f {
                        Ok(1)
                    } else {
                        Err(ce(format!("{} {}: expected {g:?}, got {f:?}", g.name, g.procedure)))
                    }
                })
                .collect()
        };
    finish("golden", results)
}

/// Runs the selected suites in their canonical order.
pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport, VerifyError> {
    let selected: Vec<&str> = match &opts.only {
        None => SUITES.to_vec(),
        Some(names) => {
            for name in names {
                if !SUITES.contains(&name.as_str()) {
                    return Err(VerifyError::UnknownSuite(name.clone()));
                }
            }
            SUITES.iter().copied().filter(|s| names.iter().any(|n| n == s)).collect()
        }
    };
    let ctx = Ctx { seed: opts.seed, mutant: opts.mutant };
    let needs_corpus = selected.iter().any(|s| {
        matches!(
            *s,
            "fixpoint"
                | "monotone"
                | "cross-ell"
                | "speedup-bound"
                | "round-counts"
                | "oracle"
                | "permutation-invariance"
        )
    });
    let cases = if needs_corpus { corpus_with_seed(opts.seed) } else { Vec::new() };
    let suites: Vec<SuiteReport> = selected
        .iter()
        .map(|&name| match name {
            "feature-dim" => suite_feature_dim(&ctx),
            "fixpoint" => suite_fixpoint(&ctx, &cases),
            "monotone" => suite_monotone(&ctx, &cases),
            "cross-ell" => suite_cross_ell(&ctx, &cases),
            "speedup-bound" => suite_speedup(&ctx, &cases),
            "round-counts" => suite_round_counts(&ctx, &cases),
            "mpnn-upper-bound" => suite_mpnn_upper_bound(&ctx),
            "countable-sim" => suite_countable(&ctx),
            "powersum" => suite_powersum(&ctx),
            "gnn-sim" => suite_gnn(&ctx),
            "witnesses" => suite_witnesses(&ctx),
            "oracle" => suite_oracle(&ctx, &cases),
            "permutation-invariance" => suite_permutation(&ctx, &cases),
            "golden" => suite_golden(&ctx),
            other => unreachable!("validated suite name {other}"),
        })
        .collect();
    Ok(VerifyReport { passed: suites.iter().all(|s| s.passed), suites })
}

/// The corpus with random seeds shifted by `seed`.
pub fn corpus_with_seed(seed: u64) -> Vec<CorpusGraph> {
    if seed == 0 {
        return corpus();
    }
    let mut out: Vec<CorpusGraph> = (0..100).map(|i| random_member(seed + i)).collect();
    out.extend(NAMED_GRAPHS.iter().map(|n| named_member(n).expect("fixture")));
    out
}

/// Suite helper for callers that hold their own feature matrices.
pub fn mpnn_refined_by_walk<F: Clone + Eq + std::hash::Hash>(
    trace: &RefinementTrace,
    rounds: &[FeatureMatrix<F>],
) -> bool {
    rounds.iter().enumerate().all(|(t, fm)| refines(trace.at(t), &fm.partition()).unwrap_or(false))
}
