//! Edge-labelled complete graphs, labellings and the refinement order.
//!
//! Every graph handled by this crate is complete: each ordered vertex pair
//! `(i, j)`, loops included, carries exactly one label. Labels are interned
//! into dense [`LabelId`]s as soon as a graph is built, and all refinement
//! logic works on those ids only.
//!
//! A [`Labelling`] is the partition-carrying state that the refinement
//! procedures produce. Labellings are always stored in canonical form: ids
//! are assigned by first occurrence in row-major order, so two labellings
//! inducing the same partition of `[n]²` have identical id matrices.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Errors raised while building or comparing graphs and labellings.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graphs must have at least one vertex")]
    Empty,
    #[error("vertex {vertex} out of range for a graph on {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("pair ({i}, {j}) is labelled more than once")]
    DuplicatePair { i: usize, j: usize },
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: {left} vs {right} vertices")]
    DimensionMismatch { left: usize, right: usize },
    #[error("not a permutation of 0..{n}")]
    InvalidPermutation { n: usize },
}

/// Dense index into a [`LabelInterner`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelId(pub u32);

impl LabelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Bijection between canonical label keys and contiguous [`LabelId`]s.
#[derive(Debug, Clone, Default)]
pub struct LabelInterner {
    index: HashMap<Vec<u8>, LabelId>,
    keys: Vec<Vec<u8>>,
}

impl LabelInterner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `key`, allocating the next free id on first sight.
    pub fn intern(&mut self, key: &[u8]) -> LabelId {
        if let Some(&id) = self.index.get(key) {
            return id;
        }
        let id = LabelId(self.keys.len() as u32);
        self.keys.push(key.to_vec());
        self.index.insert(key.to_vec(), id);
        id
    }

    pub fn get(&self, key: &[u8]) -> Option<LabelId> {
        self.index.get(key).copied()
    }

    pub fn key(&self, id: LabelId) -> &[u8] {
        &self.keys[id.index()]
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

// Canonical key layout. The first byte is a tag; nested keys are length
// prefixed so that concatenations stay injective.
const TAG_USER: u8 = 0x01;
const TAG_NON_EDGE: u8 = 0x02;
const TAG_VERTEX_PAIR: u8 = 0x03;
const TAG_NORMALIZED: u8 = 0x04;

const MARK_EDGE: u8 = 1;
const MARK_NON_EDGE: u8 = 2;
const MARK_LOOP: u8 = 3;

fn push_prefixed(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(bytes);
}

/// Key for a user supplied edge label.
pub fn user_label_key(label: &[u8]) -> Vec<u8> {
    let mut key = Vec::with_capacity(label.len() + 1);
    key.push(TAG_USER);
    key.extend_from_slice(label);
    key
}

/// The single reserved key given to pairs that are not edges.
pub fn non_edge_key() -> Vec<u8> {
    vec![TAG_NON_EDGE]
}

/// A complete edge-labelled directed graph on `n` vertices.
#[derive(Debug, Clone)]
pub struct LabelledGraph {
    n: usize,
    labels: Vec<LabelId>,
    interner: LabelInterner,
    loop_distinct: bool,
    transpose_respecting: bool,
}

impl LabelledGraph {
    /// Builds a graph from one canonical key per cell, in row-major order.
    pub fn from_key_matrix<K: AsRef<[u8]>>(n: usize, keys: &[K]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if keys.len() != n * n {
            return Err(GraphError::LengthMismatch { expected: n * n, got: keys.len() });
        }
        let mut interner = LabelInterner::new();
        let labels = keys.iter().map(|k| interner.intern(k.as_ref())).collect();
        let mut g = Self { n, labels, interner, loop_distinct: false, transpose_respecting: false };
        g.loop_distinct = g.check_loop_distinct();
        g.transpose_respecting = g.check_transpose_respecting();
        Ok(g)
    }

    /// Builds a graph from labelled edges; omitted pairs receive the reserved
    /// non-edge label. The result is complete but not normalized.
    pub fn from_labelled_edges<K: AsRef<[u8]>>(n: usize, edges: &[(usize, usize, K)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut keys: Vec<Option<Vec<u8>>> = vec![None; n * n];
        for (i, j, label) in edges {
            for &v in [i, j] {
                if v >= n {
                    return Err(GraphError::VertexOutOfRange { vertex: v, n });
                }
            }
            let slot = &mut keys[i * n + j];
            if slot.is_some() {
                return Err(GraphError::DuplicatePair { i: *i, j: *j });
            }
            *slot = Some(user_label_key(label.as_ref()));
        }
        let keys: Vec<Vec<u8>> = keys.into_iter().map(|k| k.unwrap_or_else(non_edge_key)).collect();
        Self::from_key_matrix(n, &keys)
    }

    /// Turns a vertex-labelled graph into a complete edge-labelled one.
    ///
    /// Pair `(i, j)` is labelled by `(ν(i), ν(j))` together with an
    /// edge/non-edge/loop marker; the result is then normalized, so it is
    /// loop-distinct and transpose-respecting.
    pub fn from_vertex_labels<K: AsRef<[u8]>>(
        n: usize,
        vertex_labels: &[K],
        adjacent: impl Fn(usize, usize) -> bool,
    ) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if vertex_labels.len() != n {
            return Err(GraphError::LengthMismatch { expected: n, got: vertex_labels.len() });
        }
        let mut keys = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let marker = if i == j {
                    MARK_LOOP
                } else if adjacent(i, j) {
                    MARK_EDGE
                } else {
                    MARK_NON_EDGE
                };
                let mut key = vec![TAG_VERTEX_PAIR, marker];
                push_prefixed(&mut key, vertex_labels[i].as_ref());
                if i != j {
                    push_prefixed(&mut key, vertex_labels[j].as_ref());
                }
                keys.push(key);
            }
        }
        Ok(Self::from_key_matrix(n, &keys)?.normalize())
    }

    /// Uniformly labelled vertices over an undirected adjacency list.
    pub fn from_undirected_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut adj = vec![false; n * n];
        for &(u, v) in edges {
            for w in [u, v] {
                if w >= n {
                    return Err(GraphError::VertexOutOfRange { vertex: w, n });
                }
            }
            adj[u * n + v] = true;
            adj[v * n + u] = true;
        }
        let labels = vec![""; n];
        Self::from_vertex_labels(n, &labels, |i, j| adj[i * n + j])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn label(&self, i: usize, j: usize) -> LabelId {
        self.labels[i * self.n + j]
    }

    pub fn key(&self, i: usize, j: usize) -> &[u8] {
        self.interner.key(self.label(i, j))
    }

    pub fn labels(&self) -> &[LabelId] {
        &self.labels
    }

    pub fn interner(&self) -> &LabelInterner {
        &self.interner
    }

    /// Always true: construction fills every cell.
    pub fn is_complete(&self) -> bool {
        self.labels.len() == self.n * self.n
    }

    pub fn is_loop_distinct(&self) -> bool {
        self.loop_distinct
    }

    pub fn is_transpose_respecting(&self) -> bool {
        self.transpose_respecting
    }

    fn check_loop_distinct(&self) -> bool {
        let mut is_loop_label = vec![None::<bool>; self.interner.len()];
        for i in 0..self.n {
            for j in 0..self.n {
                let slot = &mut is_loop_label[self.label(i, j).index()];
                match *slot {
                    None => *slot = Some(i == j),
                    Some(seen) if seen != (i == j) => return false,
                    _ => {}
                }
            }
        }
        true
    }

    fn check_transpose_respecting(&self) -> bool {
        let mut transpose_of = vec![None::<LabelId>; self.interner.len()];
        for i in 0..self.n {
            for j in 0..self.n {
                let t = self.label(j, i);
                let slot = &mut transpose_of[self.label(i, j).index()];
                match *slot {
                    None => *slot = Some(t),
                    Some(seen) if seen != t => return false,
                    _ => {}
                }
            }
        }
        true
    }

    /// Replaces each label by `(label(i,j), label(j,i), is_loop)`.
    ///
    /// The result refines `self` and is loop-distinct and
    /// transpose-respecting.
    pub fn normalize(&self) -> LabelledGraph {
        let n = self.n;
        let mut keys = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut key = vec![TAG_NORMALIZED, u8::from(i == j)];
                push_prefixed(&mut key, self.key(i, j));
                push_prefixed(&mut key, self.key(j, i));
                keys.push(key);
            }
        }
        Self::from_key_matrix(n, &keys).expect("dimensions preserved")
    }

    /// Relabels vertices: old vertex `v` becomes `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<LabelledGraph, GraphError> {
        let n = self.n;
        if !is_permutation(perm, n) {
            return Err(GraphError::InvalidPermutation { n });
        }
        let mut keys: Vec<&[u8]> = vec![&[]; n * n];
        for i in 0..n {
            for j in 0..n {
                keys[perm[i] * n + perm[j]] = self.key(i, j);
            }
        }
        Self::from_key_matrix(n, &keys)
    }

    /// The initial labelling, in canonical form.
    pub fn labelling(&self) -> Labelling {
        Labelling::from_keys(self.n, self.labels.iter().copied())
    }
}

pub(crate) fn is_permutation(perm: &[usize], n: usize) -> bool {
    if perm.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

/// One refinement state: an `n × n` matrix of canonical label ids.
///
/// `id_space` is the number of ids in the (possibly shared) id space the
/// matrix draws from; for a labelling built on its own it equals the number
/// of classes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Labelling {
    n: usize,
    ids: Vec<u32>,
    id_space: u32,
}

impl Labelling {
    /// Canonical labelling of a single matrix of hashable cell values.
    pub fn from_keys<K, I>(n: usize, keys: I) -> Self
    where
        K: Hash + Eq,
        I: IntoIterator<Item = K>,
    {
        canonical_family(vec![(n, keys.into_iter().collect::<Vec<_>>())]).pop().expect("one member")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.ids[i * self.n + j]
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn id_space(&self) -> u32 {
        self.id_space
    }

    /// Number of distinct ids actually present.
    pub fn class_count(&self) -> usize {
        let mut seen = vec![false; self.id_space as usize];
        let mut count = 0;
        for &id in &self.ids {
            if !seen[id as usize] {
                seen[id as usize] = true;
                count += 1;
            }
        }
        count
    }

    /// `(id, multiplicity)` pairs sorted by id. Within a shared id space this
    /// is the graph-level readout.
    pub fn histogram(&self) -> Vec<(u32, usize)> {
        let mut counts = vec![0usize; self.id_space as usize];
        for &id in &self.ids {
            counts[id as usize] += 1;
        }
        counts.into_iter().enumerate().filter(|(_, c)| *c > 0).map(|(id, c)| (id as u32, c)).collect()
    }

    /// The classes of the induced partition of `[n]²`, each listed in
    /// row-major order, ordered by their first cell.
    pub fn blocks(&self) -> Vec<Vec<(usize, usize)>> {
        let mut index: HashMap<u32, usize> = HashMap::new();
        let mut blocks: Vec<Vec<(usize, usize)>> = Vec::new();
        for (cell, &id) in self.ids.iter().enumerate() {
            let next = blocks.len();
            let b = *index.entry(id).or_insert(next);
            if b == next {
                blocks.push(Vec::new());
            }
            blocks[b].push((cell / self.n, cell % self.n));
        }
        blocks
    }

    /// Same partition, renumbered into a standalone canonical id space.
    pub fn canonicalized(&self) -> Labelling {
        Labelling::from_keys(self.n, self.ids.iter().copied())
    }

    pub fn refines(&self, other: &Labelling) -> Result<bool, GraphError> {
        refines(self, other)
    }

    pub fn equivalent(&self, other: &Labelling) -> Result<bool, GraphError> {
        equivalent(self, other)
    }
}

/// Canonically numbers several matrices in one shared id space.
///
/// Ids are handed out by first occurrence, scanning the members in order and
/// each member row-major. Equal keys get equal ids across members.
pub fn canonical_family<K: Hash + Eq>(members: Vec<(usize, Vec<K>)>) -> Vec<Labelling> {
    let mut index: HashMap<K, u32> = HashMap::new();
    let mut out = Vec::with_capacity(members.len());
    for (n, keys) in members {
        assert_eq!(keys.len(), n * n, "key matrix must be n×n");
        let ids = keys
            .into_iter()
            .map(|k| {
                let next = index.len() as u32;
                *index.entry(k).or_insert(next)
            })
            .collect();
        out.push(Labelling { n, ids, id_space: 0 });
    }
    let space = index.len() as u32;
    for l in &mut out {
        l.id_space = space;
    }
    out
}

/// `a ⊑ b`: equal labels under `a` imply equal labels under `b`.
pub fn refines(a: &Labelling, b: &Labelling) -> Result<bool, GraphError> {
    if a.n != b.n {
        return Err(GraphError::DimensionMismatch { left: a.n, right: b.n });
    }
    Ok(functional_dependency(a.ids.iter().copied(), b.ids.iter().copied(), a.id_space as usize))
}

/// Mutual refinement.
pub fn equivalent(a: &Labelling, b: &Labelling) -> Result<bool, GraphError> {
    Ok(refines(a, b)? && refines(b, a)?)
}

/// `a ⊑ b` over the concatenation of several labellings. Members must share
/// id spaces within each side.
pub fn family_refines(a: &[Labelling], b: &[Labelling]) -> Result<bool, GraphError> {
    if a.len() != b.len() {
        return Err(GraphError::LengthMismatch { expected: a.len(), got: b.len() });
    }
    for (x, y) in a.iter().zip(b) {
        if x.n != y.n {
            return Err(GraphError::DimensionMismatch { left: x.n, right: y.n });
        }
    }
    let space = a.iter().map(|l| l.id_space as usize).max().unwrap_or(0);
    Ok(functional_dependency(
        a.iter().flat_map(|l| l.ids.iter().copied()),
        b.iter().flat_map(|l| l.ids.iter().copied()),
        space,
    ))
}

pub fn family_equivalent(a: &[Labelling], b: &[Labelling]) -> Result<bool, GraphError> {
    Ok(family_refines(a, b)? && family_refines(b, a)?)
}

fn functional_dependency(from: impl Iterator<Item = u32>, to: impl Iterator<Item = u32>, from_space: usize) -> bool {
    let mut image = vec![u32::MAX; from_space];
    for (x, y) in from.zip(to) {
        let slot = &mut image[x as usize];
        if *slot == u32::MAX {
            *slot = y;
        } else if *slot != y {
            return false;
        }
    }
    true
}

/// Interner-independent readout: the sorted multiset of class sizes.
///
/// Two labellings get equal fingerprints iff some bijection between their
/// classes preserves multiplicities.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub Vec<usize>);

impl Fingerprint {
    /// Short stable hex digest, for traces and reports.
    pub fn digest(&self) -> String {
        let words: Vec<u64> = self.0.iter().map(|&c| c as u64).collect();
        digest_words(&words)
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.digest())
    }
}

pub(crate) fn digest_words(words: &[u64]) -> String {
    let mut hasher = Sha256::new();
    for w in words {
        hasher.update(w.to_le_bytes());
    }
    let out = hasher.finalize();
    out[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of a shared-id-space histogram.
pub fn histogram_digest(hist: &[(u32, usize)]) -> String {
    let words: Vec<u64> = hist.iter().flat_map(|&(id, c)| [u64::from(id), c as u64]).collect();
    digest_words(&words)
}

pub fn readout_multiset(a: &Labelling) -> Fingerprint {
    let mut sizes: Vec<usize> = a.histogram().into_iter().map(|(_, c)| c).collect();
    sizes.sort_unstable();
    Fingerprint(sizes)
}
