//! WL[2] and ℓ-walk refinement, stabilization, and graph-pair comparison.
//!
//! A step maps each cell `(i, j)` to a canonical key describing the multiset
//! of label tuples along walks from `i` to `j`, then renumbers keys by first
//! occurrence. Keys are sorted, run-length encoded id lists, so distinct
//! multisets always get distinct keys.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    canonical_family, equivalent, family_equivalent, histogram_digest, readout_multiset, GraphError, LabelledGraph,
    Labelling,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RefineError {
    #[error("walk length must be at least 2, got {0}")]
    WalkTooShort(usize),
    #[error("no stable labelling within {max_rounds} rounds")]
    NotStabilized { max_rounds: usize },
    #[error("equivalence and matrix equality disagree at round {round}")]
    InconsistentFixpoint { round: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Which refinement to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "ell")]
pub enum Procedure {
    Wl2,
    Walk(usize),
}

impl Procedure {
    pub fn walk(ell: usize) -> Result<Self, RefineError> {
        if ell < 2 {
            return Err(RefineError::WalkTooShort(ell));
        }
        Ok(Procedure::Walk(ell))
    }

    /// Number of edges per walk: 2 for WL[2].
    pub fn walk_length(self) -> usize {
        match self {
            Procedure::Wl2 => 2,
            Procedure::Walk(ell) => ell,
        }
    }

    pub fn name(self) -> String {
        match self {
            Procedure::Wl2 => "wl2".to_string(),
            Procedure::Walk(ell) => format!("walk{ell}"),
        }
    }
}

/// How a walk step enumerates its multisets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WalkStrategy {
    /// All `n^(ℓ-1)` intermediate tuples per cell.
    #[default]
    Naive,
    /// Left-to-right counts of interned label-tuple prefixes per endpoint.
    PrefixCounts,
}

/// `⌈log₂ ℓ⌉`.
pub fn ceil_log2(ell: usize) -> usize {
    assert!(ell >= 1);
    (usize::BITS - (ell - 1).leading_zeros()) as usize
}

// Sorted run-length encoding of fixed-width tuples stored back to back.
fn rle_sorted_tuples(flat: &[u32], width: usize) -> Vec<u32> {
    let count = flat.len() / width;
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_unstable_by(|&a, &b| flat[a * width..(a + 1) * width].cmp(&flat[b * width..(b + 1) * width]));
    let mut key = Vec::new();
    let mut idx = 0;
    while idx < count {
        let tuple = &flat[order[idx] * width..(order[idx] + 1) * width];
        let mut run = 1;
        while idx + run < count && &flat[order[idx + run] * width..(order[idx + run] + 1) * width] == tuple {
            run += 1;
        }
        key.extend_from_slice(tuple);
        key.push(run as u32);
        idx += run;
    }
    key
}

fn wl2_keys(prev: &Labelling) -> Vec<Vec<u32>> {
    let n = prev.n();
    let ids = prev.ids();
    (0..n * n)
        .into_par_iter()
        .map(|cell| {
            let (i, j) = (cell / n, cell % n);
            let mut pairs: Vec<u64> =
                (0..n).map(|k| (u64::from(ids[i * n + k]) << 32) | u64::from(ids[k * n + j])).collect();
            pairs.sort_unstable();
            let mut key = Vec::new();
            let mut idx = 0;
            while idx < pairs.len() {
                let run = pairs[idx..].iter().take_while(|&&p| p == pairs[idx]).count();
                key.extend_from_slice(&[(pairs[idx] >> 32) as u32, pairs[idx] as u32, run as u32]);
                idx += run;
            }
            key
        })
        .collect()
}

fn walk_keys_naive(prev: &Labelling, ell: usize) -> Vec<Vec<u32>> {
    let n = prev.n();
    let ids = prev.ids();
    let inner = ell - 1;
    let tuples = n.pow(inner as u32);
    (0..n * n)
        .into_par_iter()
        .map(|cell| {
            let (i, j) = (cell / n, cell % n);
            let mut flat = Vec::with_capacity(tuples * ell);
            let mut via = vec![0usize; inner];
            for _ in 0..tuples {
                let mut from = i;
                for &v in &via {
                    flat.push(ids[from * n + v]);
                    from = v;
                }
                flat.push(ids[from * n + j]);
                // odometer over [n]^(ℓ-1)
                for digit in via.iter_mut().rev() {
                    *digit += 1;
                    if *digit < n {
                        break;
                    }
                    *digit = 0;
                }
            }
            rle_sorted_tuples(&flat, ell)
        })
        .collect()
}

/// Injective ids for label-tuple prefixes, shared by every cell of a step.
#[derive(Default)]
struct PrefixInterner {
    ids: HashMap<(u32, u32), u32>,
}

impl PrefixInterner {
    const EMPTY: u32 = 0;

    fn extend(&mut self, prefix: u32, label: u32) -> u32 {
        let next = self.ids.len() as u32 + 1;
        *self.ids.entry((prefix, label)).or_insert(next)
    }
}

fn walk_keys_prefix(prev: &Labelling, ell: usize, prefixes: &mut PrefixInterner) -> Vec<Vec<u64>> {
    let n = prev.n();
    let ids = prev.ids();
    let mut keys = Vec::with_capacity(n * n);
    for i in 0..n {
        // layer[v] = (prefix id, number of walks i → v carrying that prefix)
        let mut layer: Vec<Vec<(u32, u64)>> = vec![Vec::new(); n];
        layer[i].push((PrefixInterner::EMPTY, 1));
        for _ in 0..ell - 1 {
            let mut next: Vec<HashMap<u32, u64>> = vec![HashMap::new(); n];
            for (v, states) in layer.iter().enumerate() {
                for &(p, c) in states {
                    for (w, acc) in next.iter_mut().enumerate() {
                        *acc.entry(prefixes.extend(p, ids[v * n + w])).or_insert(0) += c;
                    }
                }
            }
            layer = next
                .into_iter()
                .map(|m| {
                    let mut v: Vec<(u32, u64)> = m.into_iter().collect();
                    v.sort_unstable();
                    v
                })
                .collect();
        }
        for j in 0..n {
            let mut full: HashMap<u32, u64> = HashMap::new();
            for (v, states) in layer.iter().enumerate() {
                for &(p, c) in states {
                    *full.entry(prefixes.extend(p, ids[v * n + j])).or_insert(0) += c;
                }
            }
            let mut entries: Vec<(u32, u64)> = full.into_iter().collect();
            entries.sort_unstable();
            keys.push(entries.into_iter().flat_map(|(t, c)| [u64::from(t), c]).collect());
        }
    }
    keys
}

/// One WL[2] round under the loop-distinct rule: `(i, j)` receives the
/// multiset of `(prev(i,k), prev(k,j))` over all `k`.
pub fn wl2_step(prev: &Labelling) -> Labelling {
    canonical_family(vec![(prev.n(), wl2_keys(prev))]).pop().expect("one member")
}

/// One ℓ-walk round, enumerating every intermediate tuple.
pub fn walk_step(prev: &Labelling, ell: usize) -> Result<Labelling, RefineError> {
    walk_step_with(prev, ell, WalkStrategy::Naive)
}

pub fn walk_step_with(prev: &Labelling, ell: usize, strategy: WalkStrategy) -> Result<Labelling, RefineError> {
    let mut out = step_family(std::slice::from_ref(prev), Procedure::walk(ell)?, strategy)?;
    Ok(out.pop().expect("one member"))
}

/// One round of `procedure`, applied to several labellings in one shared id
/// space. Equal keys in different members receive equal ids, which is what
/// makes graph-level readouts comparable.
pub fn step_family(
    prev: &[Labelling],
    procedure: Procedure,
    strategy: WalkStrategy,
) -> Result<Vec<Labelling>, RefineError> {
    match procedure {
        Procedure::Wl2 => Ok(canonical_family(prev.iter().map(|l| (l.n(), wl2_keys(l))).collect())),
        Procedure::Walk(ell) if ell < 2 => Err(RefineError::WalkTooShort(ell)),
        Procedure::Walk(ell) => match strategy {
            WalkStrategy::Naive => {
                Ok(canonical_family(prev.iter().map(|l| (l.n(), walk_keys_naive(l, ell))).collect()))
            }
            WalkStrategy::PrefixCounts => {
                let mut prefixes = PrefixInterner::default();
                let members = prev.iter().map(|l| (l.n(), walk_keys_prefix(l, ell, &mut prefixes))).collect();
                Ok(canonical_family(members))
            }
        },
    }
}

pub fn step(prev: &Labelling, procedure: Procedure) -> Result<Labelling, RefineError> {
    Ok(step_family(std::slice::from_ref(prev), procedure, WalkStrategy::Naive)?.pop().expect("one member"))
}

/// Default round budget: the class count strictly grows until the fixpoint
/// and never exceeds `n²`.
pub fn default_budget(n: usize) -> usize {
    n * n + 1
}

/// Rounds `0..=stable_round + 1` of one refinement run.
#[derive(Debug, Clone)]
pub struct RefinementTrace {
    pub procedure: Procedure,
    pub rounds: Vec<Labelling>,
    pub stable_round: usize,
    pub class_counts: Vec<usize>,
}

impl RefinementTrace {
    /// Round `t`; past the recorded rounds the fixpoint repeats.
    pub fn at(&self, t: usize) -> &Labelling {
        &self.rounds[t.min(self.rounds.len() - 1)]
    }

    pub fn stable(&self) -> &Labelling {
        &self.rounds[self.stable_round]
    }

    pub fn records(&self, with_matrix: bool) -> Vec<TraceRecord> {
        self.rounds
            .iter()
            .enumerate()
            .map(|(t, l)| TraceRecord {
                t,
                class_count: l.class_count(),
                fingerprint: readout_multiset(l).digest(),
                matrix: with_matrix.then(|| l.ids().to_vec()),
            })
            .collect()
    }

    /// JSON lines, one record per round.
    pub fn to_jsonl(&self, with_matrix: bool) -> String {
        let mut out = String::new();
        for r in self.records(with_matrix) {
            out.push_str(&serde_json::to_string(&r).expect("plain record"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub class_count: usize,
    pub fingerprint: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub matrix: Option<Vec<u32>>,
}

/// Iterates from the graph's own labelling until `round t+1 ≡ round t`.
pub fn run_to_stable(
    g: &LabelledGraph,
    procedure: Procedure,
    max_rounds: Option<usize>,
) -> Result<RefinementTrace, RefineError> {
    run_labelling_to_stable(g.labelling(), procedure, max_rounds.unwrap_or_else(|| default_budget(g.n())))
}

pub fn run_labelling_to_stable(
    initial: Labelling,
    procedure: Procedure,
    max_rounds: usize,
) -> Result<RefinementTrace, RefineError> {
    if let Procedure::Walk(ell) = procedure {
        if ell < 2 {
            return Err(RefineError::WalkTooShort(ell));
        }
    }
    let mut rounds = vec![initial.canonicalized()];
    for t in 0..max_rounds {
        let next = step(&rounds[t], procedure)?;
        let eq = equivalent(&next, &rounds[t])?;
        if eq != (next.ids() == rounds[t].ids()) {
            return Err(RefineError::InconsistentFixpoint { round: t + 1 });
        }
        rounds.push(next);
        if eq {
            let class_counts = rounds.iter().map(Labelling::class_count).collect();
            return Ok(RefinementTrace { procedure, rounds, stable_round: t, class_counts });
        }
    }
    Err(RefineError::NotStabilized { max_rounds })
}

/// Outcome of running a procedure on two graphs with a shared label space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// Vertex counts differ; nothing was run.
    Distinguished {
        round: usize,
        reason: String,
    },
    Indistinguishable {
        stable_rounds: [usize; 2],
    },
}

/// Whole-graph comparison: both graphs are refined in one shared
/// label space and their label multisets compared after every round.
pub fn compare_graphs(
    g1: &LabelledGraph,
    g2: &LabelledGraph,
    procedure: Procedure,
    max_rounds: Option<usize>,
) -> Result<Verdict, RefineError> {
    if g1.n() != g2.n() {
        return Ok(Verdict::Distinguished { round: 0, reason: "size".into() });
    }
    let budget = max_rounds.unwrap_or_else(|| 2 * g1.n() * g1.n() + 1);
    let key_matrix = |g: &LabelledGraph| {
        let n = g.n();
        (n, (0..n * n).map(|c| g.key(c / n, c % n).to_vec()).collect::<Vec<_>>())
    };
    let mut family = canonical_family(vec![key_matrix(g1), key_matrix(g2)]);
    for t in 0..=budget {
        if family[0].histogram() != family[1].histogram() {
            return Ok(Verdict::Distinguished { round: t, reason: "readout".into() });
        }
        let next = step_family(&family, procedure, WalkStrategy::Naive)?;
        if family_equivalent(&next, &family)? {
            let r1 = run_to_stable(g1, procedure, max_rounds)?.stable_round;
            let r2 = run_to_stable(g2, procedure, max_rounds)?.stable_round;
            return Ok(Verdict::Indistinguishable { stable_rounds: [r1, r2] });
        }
        family = next;
    }
    Err(RefineError::NotStabilized { max_rounds: budget })
}

/// Per-round shared-space readout digests, for reporting.
pub fn joint_readouts(
    g1: &LabelledGraph,
    g2: &LabelledGraph,
    procedure: Procedure,
    rounds: usize,
) -> Result<Vec<[String; 2]>, RefineError> {
    let key_matrix = |g: &LabelledGraph| {
        let n = g.n();
        (n, (0..n * n).map(|c| g.key(c / n, c % n).to_vec()).collect::<Vec<_>>())
    };
    let mut family = canonical_family(vec![key_matrix(g1), key_matrix(g2)]);
    let mut out = Vec::new();
    for t in 0..=rounds {
        out.push([histogram_digest(&family[0].histogram()), histogram_digest(&family[1].histogram())]);
        if t < rounds {
            family = step_family(&family, procedure, WalkStrategy::Naive)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{refines, LabelledGraph};

    fn uniform_complete(n: usize) -> LabelledGraph {
        LabelledGraph::from_key_matrix(n, &vec![b"e".to_vec(); n * n]).unwrap().normalize()
    }

    fn cycle(n: usize) -> LabelledGraph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        LabelledGraph::from_undirected_edges(n, &edges).unwrap()
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(4), 2);
        assert_eq!(ceil_log2(5), 3);
    }

    #[test]
    fn uniform_graph_is_stable_immediately() {
        for n in 2..6 {
            let l = uniform_complete(n).labelling();
            let s = wl2_step(&l);
            assert_eq!(s.class_count(), 2);
            assert!(equivalent(&s, &l).unwrap());
            assert!(equivalent(&wl2_step(&s), &s).unwrap());
        }
    }

    #[test]
    fn single_vertex() {
        let g = uniform_complete(1);
        let tr = run_to_stable(&g, Procedure::Wl2, None).unwrap();
        assert_eq!(tr.stable_round, 0);
        assert_eq!(tr.class_counts, vec![1, 1]);
    }

    #[test]
    fn walk_two_matches_wl2() {
        let g = cycle(6);
        let l = g.labelling();
        assert!(equivalent(&walk_step(&l, 2).unwrap(), &wl2_step(&l)).unwrap());
    }

    #[test]
    fn walk_three_on_uniform() {
        let l = uniform_complete(3).labelling();
        assert_eq!(walk_step(&l, 3).unwrap().class_count(), 2);
    }

    #[test]
    fn short_walk_rejected() {
        let l = uniform_complete(2).labelling();
        assert_eq!(walk_step(&l, 1).unwrap_err(), RefineError::WalkTooShort(1));
        assert!(Procedure::walk(0).is_err());
    }

    #[test]
    fn prefix_strategy_matches_naive() {
        let g = cycle(7);
        let mut l = g.labelling();
        for ell in 2..5 {
            let a = walk_step_with(&l, ell, WalkStrategy::Naive).unwrap();
            let b = walk_step_with(&l, ell, WalkStrategy::PrefixCounts).unwrap();
            assert!(equivalent(&a, &b).unwrap());
            l = a;
        }
    }

    #[test]
    fn stable_rerun_is_round_zero() {
        let g = cycle(6);
        let tr = run_to_stable(&g, Procedure::Wl2, None).unwrap();
        let again = run_labelling_to_stable(tr.stable().clone(), Procedure::Wl2, 10).unwrap();
        assert_eq!(again.stable_round, 0);
        for t in 1..tr.rounds.len() {
            assert!(refines(&tr.rounds[t], &tr.rounds[t - 1]).unwrap());
        }
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let g = cycle(6);
        assert_eq!(
            run_to_stable(&g, Procedure::Wl2, Some(0)).unwrap_err(),
            RefineError::NotStabilized { max_rounds: 0 }
        );
    }

    #[test]
    fn trace_jsonl_shape() {
        let tr = run_to_stable(&cycle(4), Procedure::Wl2, None).unwrap();
        let text = tr.to_jsonl(false);
        assert_eq!(text.lines().count(), tr.rounds.len());
        let first: TraceRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first.t, 0);
        assert!(first.matrix.is_none());
        assert!(tr.to_jsonl(true).contains("\"matrix\""));
    }

    #[test]
    fn compare_cycle_vs_triangles() {
        let c6 = cycle(6);
        let tt = LabelledGraph::from_undirected_edges(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]).unwrap();
        let v = compare_graphs(&c6, &tt, Procedure::Wl2, None).unwrap();
        assert_eq!(v, Verdict::Distinguished { round: 1, reason: "readout".into() });
        let p = c6.permute(&[3, 1, 4, 0, 5, 2]).unwrap();
        assert!(matches!(compare_graphs(&c6, &p, Procedure::Wl2, None).unwrap(), Verdict::Indistinguishable { .. }));
        let small = cycle(5);
        assert_eq!(
            compare_graphs(&c6, &small, Procedure::Wl2, None).unwrap(),
            Verdict::Distinguished { round: 0, reason: "size".into() }
        );
    }
}
