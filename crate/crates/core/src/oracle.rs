//! Graph generators, named fixtures and a deliberately naive refinement
//! oracle.
//!
//! [`brute_force_partition`] shares nothing with the production refinement
//! beyond the graph type: partitions are explicit lists of blocks of pairs,
//! multisets are literal sorted vectors, and there is no interning.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{GraphError, LabelledGraph, Labelling};
use crate::refinement::Procedure;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("unknown graph name {0:?}")]
    UnknownGraph(String),
    #[error("embedded graph {name} fails its self-check: {detail}")]
    SelfCheck { name: &'static str, detail: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Complete graph with independent uniform edge labels (loops included)
/// from an alphabet of `alphabet` symbols, normalized.
pub fn gen_random_labelled(n: usize, alphabet: usize, seed: u64) -> Result<LabelledGraph, GraphError> {
    if alphabet == 0 {
        return Err(GraphError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            edges.push((i, j, format!("l{}", rng.gen_range(0..alphabet))));
        }
    }
    Ok(LabelledGraph::from_labelled_edges(n, &edges)?.normalize())
}

/// A uniformly random permutation of `0..n`.
pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5045_524d));
    perm
}

const SHRIKHANDE: [[u8; 6]; 16] = [
    [1, 3, 4, 5, 12, 15],
    [0, 2, 5, 6, 12, 13],
    [1, 3, 6, 7, 13, 14],
    [0, 2, 4, 7, 14, 15],
    [0, 3, 5, 7, 8, 9],
    [0, 1, 4, 6, 9, 10],
    [1, 2, 5, 7, 10, 11],
    [2, 3, 4, 6, 8, 11],
    [4, 7, 9, 11, 12, 13],
    [4, 5, 8, 10, 13, 14],
    [5, 6, 9, 11, 14, 15],
    [6, 7, 8, 10, 12, 15],
    [0, 1, 8, 11, 13, 15],
    [1, 2, 8, 9, 12, 14],
    [2, 3, 9, 10, 13, 15],
    [0, 3, 10, 11, 12, 14],
];

const ROOK_4X4: [[u8; 6]; 16] = [
    [1, 2, 3, 4, 8, 12],
    [0, 2, 3, 5, 9, 13],
    [0, 1, 3, 6, 10, 14],
    [0, 1, 2, 7, 11, 15],
    [0, 5, 6, 7, 8, 12],
    [1, 4, 6, 7, 9, 13],
    [2, 4, 5, 7, 10, 14],
    [3, 4, 5, 6, 11, 15],
    [0, 4, 9, 10, 11, 12],
    [1, 5, 8, 10, 11, 13],
    [2, 6, 8, 9, 11, 14],
    [3, 7, 8, 9, 10, 15],
    [0, 4, 8, 13, 14, 15],
    [1, 5, 9, 12, 14, 15],
    [2, 6, 10, 12, 13, 15],
    [3, 7, 11, 12, 13, 14],
];

/// Symmetric adjacency matrix from adjacency lists, checked to be
/// strongly regular with parameters (16, 6, 2, 2).
fn srg_16_6_2_2(name: &'static str, lists: &[[u8; 6]; 16]) -> Result<Vec<bool>, OracleError> {
    let n = 16;
    let mut adj = vec![false; n * n];
    for (v, list) in lists.iter().enumerate() {
        for &w in list {
            adj[v * n + usize::from(w)] = true;
        }
    }
    let fail = |detail: String| OracleError::SelfCheck { name, detail };
    for v in 0..n {
        if adj[v * n + v] {
            return Err(fail(format!("loop at {v}")));
        }
        for w in 0..n {
            if adj[v * n + w] != adj[w * n + v] {
                return Err(fail(format!("asymmetric pair ({v}, {w})")));
            }
            if v == w {
                continue;
            }
            let common = (0..n).filter(|&u| adj[v * n + u] && adj[w * n + u]).count();
            let want = 2;
            if common != want {
                return Err(fail(format!("({v}, {w}) has {common} common neighbours")));
            }
        }
        let degree = (0..n).filter(|&w| adj[v * n + w]).count();
        if degree != 6 {
            return Err(fail(format!("vertex {v} has degree {degree}")));
        }
    }
    Ok(adj)
}

/// Fixture names accepted by [`gen_named`], besides the parametric
/// `C<n>`, `K<n>` and `path<n>`.
pub const NAMED_GRAPHS: &[&str] =
    &["C6", "C3+C3", "K3", "K4", "K5", "K6", "path3", "path4", "path5", "path6", "petersen", "shrikhande", "rook4x4"];

fn parametric(name: &str, prefix: &str) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    let rest = rest.strip_prefix("_n").or_else(|| rest.strip_prefix('_')).unwrap_or(rest);
    let rest = rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')).unwrap_or(rest);
    rest.parse().ok()
}

fn uniform(n: usize, adjacent: impl Fn(usize, usize) -> bool) -> Result<LabelledGraph, OracleError> {
    Ok(LabelledGraph::from_vertex_labels(n, &vec![""; n], adjacent)?)
}

/// Undirected adjacency of a named fixture.
pub fn named_adjacency(name: &str) -> Result<(usize, Vec<bool>), OracleError> {
    let from_fn = |n: usize, f: &dyn Fn(usize, usize) -> bool| {
        let mut adj = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                adj[i * n + j] = i != j && (f(i, j) || f(j, i));
            }
        }
        (n, adj)
    };
    match name {
        "C3+C3" => Ok(from_fn(6, &|i, j| i / 3 == j / 3)),
        "petersen" => Ok(from_fn(10, &|i, j| match (i < 5, j < 5) {
            (true, true) => (i + 1) % 5 == j,
            (true, false) => j == i + 5,
            (false, false) => (i - 5 + 2) % 5 == j - 5,
            (false, true) => false,
        })),
        "shrikhande" => Ok((16, srg_16_6_2_2("shrikhande", &SHRIKHANDE)?)),
        "rook4x4" => Ok((16, srg_16_6_2_2("rook4x4", &ROOK_4X4)?)),
        _ => {
            if let Some(n) = parametric(name, "C").filter(|&n| n >= 3) {
                Ok(from_fn(n, &|i, j| (i + 1) % n == j))
            } else if let Some(n) = parametric(name, "K").filter(|&n| n >= 1) {
                Ok(from_fn(n, &|_, _| true))
            } else if let Some(n) = parametric(name, "path").filter(|&n| n >= 1) {
                Ok(from_fn(n, &|i, j| i + 1 == j))
            } else {
                Err(OracleError::UnknownGraph(name.to_string()))
            }
        }
    }
}

/// A named fixture as a normalized complete graph with uniform vertex labels.
pub fn gen_named(name: &str) -> Result<LabelledGraph, OracleError> {
    let (n, adj) = named_adjacency(name)?;
    uniform(n, |i, j| adj[i * n + j])
}

/// A named pair of fixtures, written `a-vs-b`.
pub fn gen_named_pair(name: &str) -> Result<(LabelledGraph, LabelledGraph), OracleError> {
    let (a, b) = name.split_once("-vs-").ok_or_else(|| OracleError::UnknownGraph(name.to_string()))?;
    Ok((gen_named(a)?, gen_named(b)?))
}

/// A set partition of `[n]²`: sorted blocks of sorted pairs.
pub type PairPartition = Vec<Vec<(usize, usize)>>;

/// The set partition induced by a labelling, in the oracle's canonical form.
pub fn partition_of(l: &Labelling) -> PairPartition {
    let n = l.n();
    let mut blocks: Vec<(u32, Vec<(usize, usize)>)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let id = l.get(i, j);
            match blocks.iter_mut().find(|(b, _)| *b == id) {
                Some((_, members)) => members.push((i, j)),
                None => blocks.push((id, vec![(i, j)])),
            }
        }
    }
    let mut out: PairPartition = blocks.into_iter().map(|(_, b)| b).collect();
    out.sort();
    out
}

fn block_of(partition: &PairPartition, pair: (usize, usize)) -> usize {
    partition.iter().position(|b| b.contains(&pair)).expect("partition covers every pair")
}

fn walk_tuples(n: usize, ell: usize, i: usize, j: usize, colour: &dyn Fn(usize, usize) -> usize) -> Vec<Vec<usize>> {
    // every vertex sequence i = v0, v1, …, v_{ℓ-1}, v_ℓ = j
    let mut out = Vec::new();
    let mut stack: Vec<Vec<usize>> = vec![vec![i]];
    while let Some(seq) = stack.pop() {
        if seq.len() == ell {
            let mut full = seq.clone();
            full.push(j);
            out.push(full.windows(2).map(|w| colour(w[0], w[1])).collect());
            continue;
        }
        for v in 0..n {
            let mut next = seq.clone();
            next.push(v);
            stack.push(next);
        }
    }
    out.sort();
    out
}

/// A cell's literal sorted multiset, plus its own colour for WL2.
type Signature = Vec<Vec<usize>>;

/// Partition of pairs after `t` rounds of `procedure`, recomputed from the
/// definitions. WL[2] uses the textbook rule that keeps the pair's own
/// colour next to the multiset; `W[ℓ]` uses the multiset of colour tuples
/// along all walks of length `ℓ`.
pub fn brute_force_partition(g: &LabelledGraph, procedure: Procedure, t: usize) -> PairPartition {
    let n = g.n();
    let mut partition: PairPartition = Vec::new();
    for i in 0..n {
        for j in 0..n {
            match partition.iter_mut().find(|b| g.label(b[0].0, b[0].1) == g.label(i, j)) {
                Some(b) => b.push((i, j)),
                None => partition.push(vec![(i, j)]),
            }
        }
    }
    partition.sort();
    for _ in 0..t {
        let mut colour = vec![0usize; n * n];
        for i in 0..n {
            for j in 0..n {
                colour[i * n + j] = block_of(&partition, (i, j));
            }
        }
        let colour_fn = |a: usize, b: usize| colour[a * n + b];
        let mut signatures: Vec<(Signature, Vec<(usize, usize)>)> = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let signature = match procedure {
                    Procedure::Wl2 => {
                        let mut s = walk_tuples(n, 2, i, j, &colour_fn);
                        s.insert(0, vec![colour_fn(i, j)]);
                        s
                    }
                    Procedure::Walk(ell) => walk_tuples(n, ell, i, j, &colour_fn),
                };
                match signatures.iter_mut().find(|(s, _)| *s == signature) {
                    Some((_, members)) => members.push((i, j)),
                    None => signatures.push((signature, vec![(i, j)])),
                }
            }
        }
        partition = signatures.into_iter().map(|(_, b)| b).collect();
        partition.sort();
    }
    partition
}

/// One member of the test corpus.
#[derive(Debug, Clone)]
pub struct CorpusGraph {
    pub family: &'static str,
    pub name: String,
    pub seed: Option<u64>,
    pub alphabet: Option<usize>,
    pub graph: LabelledGraph,
}

/// Random member `seed`: `n = 3 + seed mod 4`, alphabet `1 + (seed / 4) mod 3`.
pub fn random_member(seed: u64) -> CorpusGraph {
    let n = 3 + (seed % 4) as usize;
    let alphabet = 1 + ((seed / 4) % 3) as usize;
    CorpusGraph {
        family: "random",
        name: format!("random-n{n}-a{alphabet}-s{seed}"),
        seed: Some(seed),
        alphabet: Some(alphabet),
        graph: gen_random_labelled(n, alphabet, seed).expect("valid parameters"),
    }
}

pub fn named_member(name: &str) -> Result<CorpusGraph, OracleError> {
    Ok(CorpusGraph { family: "named", name: name.to_string(), seed: None, alphabet: None, graph: gen_named(name)? })
}

/// The `count` random members with seeds `0..count`.
pub fn random_corpus(count: u64) -> Vec<CorpusGraph> {
    (0..count).map(random_member).collect()
}

/// 100 random graphs followed by every named fixture.
pub fn corpus() -> Vec<CorpusGraph> {
    let mut out = random_corpus(100);
    out.extend(NAMED_GRAPHS.iter().map(|name| named_member(name).expect("built-in fixture")));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refinement::step;

    #[test]
    fn random_is_deterministic_and_normalized() {
        let a = gen_random_labelled(5, 3, 42).unwrap();
        let b = gen_random_labelled(5, 3, 42).unwrap();
        assert_eq!(a.labels(), b.labels());
        assert!(a.is_loop_distinct() && a.is_transpose_respecting());
        assert_eq!(gen_random_labelled(4, 1, 7).unwrap().labelling().class_count(), 2);
    }

    #[test]
    fn named_fixtures() {
        for name in NAMED_GRAPHS {
            let g = gen_named(name).unwrap();
            assert!(g.is_loop_distinct() && g.is_transpose_respecting(), "{name}");
        }
        assert_eq!(gen_named("C7").unwrap().n(), 7);
        assert_eq!(gen_named("K_n(5)").unwrap().n(), 5);
        assert_eq!(gen_named("path(4)").unwrap().n(), 4);
        assert!(matches!(gen_named("dodecahedron"), Err(OracleError::UnknownGraph(_))));
        let (a, b) = gen_named_pair("shrikhande-vs-rook4x4").unwrap();
        assert_eq!((a.n(), b.n()), (16, 16));
    }

    #[test]
    fn degrees_of_fixtures() {
        for (name, n, degree) in
            [("shrikhande", 16, 6), ("rook4x4", 16, 6), ("petersen", 10, 3), ("C3+C3", 6, 2), ("C6", 6, 2)]
        {
            let (m, adj) = named_adjacency(name).unwrap();
            assert_eq!(m, n);
            for v in 0..n {
                assert_eq!((0..n).filter(|&w| adj[v * n + w]).count(), degree, "{name}");
            }
        }
    }

    #[test]
    fn srg_check_rejects_corruption() {
        let mut broken = SHRIKHANDE;
        broken[0][0] = 2;
        assert!(matches!(srg_16_6_2_2("broken", &broken), Err(OracleError::SelfCheck { .. })));
    }

    #[test]
    fn brute_force_small_cases() {
        let k3 = gen_named("K3").unwrap();
        let p = brute_force_partition(&k3, Procedure::Wl2, 1);
        assert_eq!(p, vec![vec![(0, 0), (1, 1), (2, 2)], vec![(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]]);
        assert_eq!(brute_force_partition(&k3, Procedure::Wl2, 0), partition_of(&k3.labelling()));
        let path = gen_named("path4").unwrap();
        let l1 = step(&path.labelling(), Procedure::Walk(3)).unwrap();
        assert_eq!(brute_force_partition(&path, Procedure::Walk(3), 1), partition_of(&l1));
    }

    #[test]
    fn permutations_are_permutations() {
        let mut p = random_permutation(9, 3);
        p.sort();
        assert_eq!(p, (0..9).collect::<Vec<_>>());
    }
}
