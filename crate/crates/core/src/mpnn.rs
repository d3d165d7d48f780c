//! ℓ-walk message passing over vertex pairs, with exact arithmetic.
//!
//! Every round, each pair `(v, w)` sums `Msg` over all `n^(ℓ-1)` walks
//! `(v, v₁, …, v_{ℓ-1}, w)` of the complete graph and then applies
//! `Upd(own, sum)`. Summation is the only aggregator.
//!
//! Besides the engine this module carries the two simulations of walk
//! refinement: [`CountableSimulator`] (natural-number features, one scalar
//! per pair) and [`UncountableSimulator`] (power-sum features over the
//! rationals, with exploding dimensions).

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;
use std::sync::Mutex;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::Labelling;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MpnnError {
    #[error("walk length must be at least 2, got {0}")]
    WalkTooShort(usize),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("feature needs about {demanded_bits} bits, over the cap of {cap_bits}")]
    FeatureTooLarge { demanded_bits: String, cap_bits: u64 },
    #[error("round {round} needs feature dimension {demanded}, over the cap of {cap}")]
    DimensionCap { round: usize, demanded: BigUint, cap: u64 },
    #[error("digit {digit} does not fit base {base}")]
    DigitOverflow { digit: u64, base: u64 },
    #[error("round {round} is outside the configured rounds 1..={configured}")]
    RoundOutOfRange { round: usize, configured: usize },
    #[error("power sums need at least one row and one column")]
    EmptyMultiset,
}

/// Summation of messages.
pub trait Aggregate: Sized + Send {
    fn accumulate(&mut self, rhs: Self) -> Result<(), MpnnError>;
}

fn add_vectors<T: for<'a> std::ops::AddAssign<&'a T>>(lhs: &mut [T], rhs: &[T]) -> Result<(), MpnnError> {
    if lhs.len() != rhs.len() {
        return Err(MpnnError::DimensionMismatch { expected: lhs.len(), got: rhs.len() });
    }
    for (a, b) in lhs.iter_mut().zip(rhs) {
        *a += b;
    }
    Ok(())
}

impl Aggregate for Vec<i64> {
    fn accumulate(&mut self, rhs: Self) -> Result<(), MpnnError> {
        add_vectors(self, &rhs)
    }
}

impl Aggregate for Vec<BigInt> {
    fn accumulate(&mut self, rhs: Self) -> Result<(), MpnnError> {
        add_vectors(self, &rhs)
    }
}

impl Aggregate for Vec<BigRational> {
    fn accumulate(&mut self, rhs: Self) -> Result<(), MpnnError> {
        add_vectors(self, &rhs)
    }
}

impl Aggregate for BigUint {
    fn accumulate(&mut self, rhs: Self) -> Result<(), MpnnError> {
        *self += rhs;
        Ok(())
    }
}

/// A formal sum `Σ count · B^τ(key)`, kept as a multiset of keys.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FormalSum<K: Ord>(pub BTreeMap<K, u64>);

impl<K: Ord + Send> Aggregate for FormalSum<K> {
    fn accumulate(&mut self, rhs: Self) -> Result<(), MpnnError> {
        for (k, c) in rhs.0 {
            *self.0.entry(k).or_insert(0) += c;
        }
        Ok(())
    }
}

/// One ℓ-walk MPNN: per-round message and update functions.
///
/// Implementations must be pure; the engine may call `message` from several
/// threads at once. `update` is called sequentially in row-major order.
pub trait WalkMpnn: Sync {
    type Feature: Clone + Eq + Hash + Send + Sync;
    type Message: Aggregate;

    fn ell(&self) -> usize;

    /// `Msg^(round)` applied to the labels along one walk.
    fn message(&self, round: usize, walk: &[&Self::Feature]) -> Result<Self::Message, MpnnError>;

    /// `Upd^(round)(own, aggregated)`.
    fn update(&self, round: usize, own: &Self::Feature, aggregated: Self::Message) -> Result<Self::Feature, MpnnError>;
}

/// `η^(t)_M`: one feature per ordered pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMatrix<F> {
    pub n: usize,
    pub round: usize,
    pub cells: Vec<F>,
}

impl<F: Clone + Eq + Hash> FeatureMatrix<F> {
    pub fn new(n: usize, cells: Vec<F>) -> Result<Self, MpnnError> {
        if cells.len() != n * n {
            return Err(MpnnError::DimensionMismatch { expected: n * n, got: cells.len() });
        }
        Ok(Self { n, round: 0, cells })
    }

    pub fn get(&self, i: usize, j: usize) -> &F {
        &self.cells[i * self.n + j]
    }

    /// The partition induced by feature equality.
    pub fn partition(&self) -> Labelling {
        Labelling::from_keys(self.n, self.cells.iter())
    }
}

/// One round of `m` on `prev`.
pub fn mpnn_step<M: WalkMpnn>(m: &M, prev: &FeatureMatrix<M::Feature>) -> Result<FeatureMatrix<M::Feature>, MpnnError> {
    let ell = m.ell();
    if ell < 2 {
        return Err(MpnnError::WalkTooShort(ell));
    }
    let n = prev.n;
    let round = prev.round + 1;
    let inner = ell - 1;
    let walks = n.pow(inner as u32);
    let aggregated: Vec<Result<M::Message, MpnnError>> = (0..n * n)
        .into_par_iter()
        .map(|cell| {
            let (v, w) = (cell / n, cell % n);
            let mut via = vec![0usize; inner];
            let mut walk: Vec<&M::Feature> = Vec::with_capacity(ell);
            let mut sum: Option<M::Message> = None;
            for _ in 0..walks {
                walk.clear();
                let mut from = v;
                for &u in &via {
                    walk.push(prev.get(from, u));
                    from = u;
                }
                walk.push(prev.get(from, w));
                let msg = m.message(round, &walk)?;
                match sum.as_mut() {
                    None => sum = Some(msg),
                    Some(s) => s.accumulate(msg)?,
                }
                for digit in via.iter_mut().rev() {
                    *digit += 1;
                    if *digit < n {
                        break;
                    }
                    *digit = 0;
                }
            }
            Ok(sum.expect("at least one walk"))
        })
        .collect();
    let mut cells = Vec::with_capacity(n * n);
    for (cell, agg) in aggregated.into_iter().enumerate() {
        cells.push(m.update(round, &prev.cells[cell], agg?)?);
    }
    Ok(FeatureMatrix { n, round, cells })
}

/// Rounds `0..=rounds`.
pub fn run_mpnn<M: WalkMpnn>(
    m: &M,
    initial: FeatureMatrix<M::Feature>,
    rounds: usize,
) -> Result<Vec<FeatureMatrix<M::Feature>>, MpnnError> {
    let mut out = vec![initial];
    for _ in 0..rounds {
        let next = mpnn_step(m, out.last().expect("non-empty"))?;
        out.push(next);
    }
    Ok(out)
}

/// Integer features from a labelling's ids.
pub fn integer_features(l: &Labelling) -> FeatureMatrix<Vec<i64>> {
    FeatureMatrix { n: l.n(), round: 0, cells: l.ids().iter().map(|&id| vec![i64::from(id)]).collect() }
}

/// An MPNN assembled from two closures.
pub struct FnMpnn<F, Msg, MsgFn, UpdFn> {
    ell: usize,
    msg: MsgFn,
    upd: UpdFn,
    _marker: std::marker::PhantomData<fn() -> (F, Msg)>,
}

impl<F, Msg, MsgFn, UpdFn> FnMpnn<F, Msg, MsgFn, UpdFn>
where
    MsgFn: Fn(usize, &[&F]) -> Msg + Sync,
    UpdFn: Fn(usize, &F, Msg) -> F + Sync,
{
    pub fn new(ell: usize, msg: MsgFn, upd: UpdFn) -> Self {
        Self { ell, msg, upd, _marker: std::marker::PhantomData }
    }
}

impl<F, Msg, MsgFn, UpdFn> WalkMpnn for FnMpnn<F, Msg, MsgFn, UpdFn>
where
    F: Clone + Eq + Hash + Send + Sync,
    Msg: Aggregate,
    MsgFn: Fn(usize, &[&F]) -> Msg + Sync,
    UpdFn: Fn(usize, &F, Msg) -> F + Sync,
{
    type Feature = F;
    type Message = Msg;

    fn ell(&self) -> usize {
        self.ell
    }

    fn message(&self, round: usize, walk: &[&F]) -> Result<Msg, MpnnError> {
        Ok((self.msg)(round, walk))
    }

    fn update(&self, round: usize, own: &F, aggregated: Msg) -> Result<F, MpnnError> {
        Ok((self.upd)(round, own, aggregated))
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_words(seed: u64, words: impl IntoIterator<Item = u64>) -> u64 {
    words.into_iter().fold(mix64(seed), |h, w| mix64(h ^ w))
}

/// Random message and update tables over integer vectors.
///
/// Each table is a seeded hash of its full argument, reduced to a small
/// range, so it is a fixed total function that collides often. Used to
/// quantify over "arbitrary" MPNNs in property tests.
#[derive(Debug, Clone)]
pub struct RandomMpnn {
    pub ell: usize,
    pub seed: u64,
    pub input_dim: usize,
    pub message_dim: usize,
    pub message_range: u64,
    pub feature_dim: usize,
    pub feature_range: u64,
}

impl RandomMpnn {
    pub fn new(ell: usize, seed: u64) -> Self {
        Self { ell, seed, input_dim: 1, message_dim: 2, message_range: 3, feature_dim: 1, feature_range: 5 }
    }

    fn expected_dim(&self, round: usize) -> usize {
        if round <= 1 {
            self.input_dim
        } else {
            self.feature_dim
        }
    }
}

impl WalkMpnn for RandomMpnn {
    type Feature = Vec<i64>;
    type Message = Vec<i64>;

    fn ell(&self) -> usize {
        self.ell
    }

    fn message(&self, round: usize, walk: &[&Vec<i64>]) -> Result<Vec<i64>, MpnnError> {
        let dim = self.expected_dim(round);
        let mut words = vec![round as u64, 0x006d_7367];
        for x in walk {
            if x.len() != dim {
                return Err(MpnnError::DimensionMismatch { expected: dim, got: x.len() });
            }
            words.extend(x.iter().map(|&v| v as u64));
        }
        Ok((0..self.message_dim)
            .map(|s| {
                let h = hash_words(self.seed, words.iter().copied().chain([s as u64]));
                (h % self.message_range) as i64
            })
            .collect())
    }

    fn update(&self, round: usize, own: &Vec<i64>, aggregated: Vec<i64>) -> Result<Vec<i64>, MpnnError> {
        let words: Vec<u64> = [round as u64, 0x0075_7064]
            .into_iter()
            .chain(own.iter().map(|&v| v as u64))
            .chain([u64::MAX])
            .chain(aggregated.iter().map(|&v| v as u64))
            .collect();
        Ok((0..self.feature_dim)
            .map(|s| (hash_words(self.seed, words.iter().copied().chain([s as u64])) % self.feature_range) as i64)
            .collect())
    }
}

/// The first `k` primes.
pub fn first_primes(k: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(k);
    let mut candidate = 2u64;
    while primes.len() < k {
        if primes.iter().take_while(|&&p| p * p <= candidate).all(|&p| !candidate.is_multiple_of(p)) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Prime-power pairing `τ(a₁,…,a_ℓ) = p₁^a₁ ⋯ p_ℓ^a_ℓ`.
pub fn tau(walk: &[u32]) -> BigUint {
    first_primes(walk.len()).into_iter().zip(walk).fold(BigUint::one(), |acc, (p, &a)| acc * BigUint::from(p).pow(a))
}

/// Multiset base `n^(ℓ-1) + 1`: one more than the largest multiplicity.
pub fn multiset_base(n: usize, ell: usize) -> u64 {
    (n as u64).pow((ell - 1) as u32) + 1
}

/// `h(a) = (n^(ℓ-1) + 1)^τ(a)`.
pub fn h(n: usize, ell: usize, walk: &[u32]) -> BigUint {
    let t = tau(walk).to_u32().expect("τ fits u32 for desk-scale labels");
    BigUint::from(multiset_base(n, ell)).pow(t)
}

/// `φ(S) = Σ_{a ∈ S} h(a)`.
pub fn phi(n: usize, ell: usize, multiset: &[Vec<u32>]) -> BigUint {
    multiset.iter().map(|a| h(n, ell, a)).sum()
}

/// Countable simulation with plain big integers: `Msg = h`, `Upd(a,b) = b`.
///
/// Only usable while `τ` stays small; features of round `t ≥ 1` are
/// astronomically large, so from round 2 on this almost always hits
/// `max_bits`. [`CountableSimulator`] computes the same numbers in a
/// representation that stays small.
#[derive(Debug, Clone)]
pub struct BigIntCountableSimulator {
    pub n: usize,
    pub ell: usize,
    pub max_bits: u64,
}

impl BigIntCountableSimulator {
    pub fn new(n: usize, ell: usize) -> Self {
        Self { n, ell, max_bits: 1 << 22 }
    }

    pub fn lift(&self, l: &Labelling) -> FeatureMatrix<BigUint> {
        FeatureMatrix { n: l.n(), round: 0, cells: l.ids().iter().map(|&id| BigUint::from(id)).collect() }
    }
}

impl WalkMpnn for BigIntCountableSimulator {
    type Feature = BigUint;
    type Message = BigUint;

    fn ell(&self) -> usize {
        self.ell
    }

    fn message(&self, _round: usize, walk: &[&BigUint]) -> Result<BigUint, MpnnError> {
        let base = multiset_base(self.n, self.ell);
        let log_base = (base as f64).log2();
        let primes = first_primes(walk.len());
        // log₂ of the result is τ·log₂(base); bail out before materializing.
        let mut log2_tau = 0f64;
        for (p, a) in primes.iter().zip(walk) {
            log2_tau += a.to_f64().unwrap_or(f64::INFINITY) * (*p as f64).log2();
        }
        let demanded = log2_tau.exp2() * log_base;
        if !demanded.is_finite() || demanded > self.max_bits as f64 {
            return Err(MpnnError::FeatureTooLarge {
                demanded_bits: format!("{demanded:.3e}"),
                cap_bits: self.max_bits,
            });
        }
        let exps: Vec<u32> = walk.iter().map(|a| a.to_u32().expect("bounded above")).collect();
        Ok(h(self.n, self.ell, &exps))
    }

    fn update(&self, _round: usize, _own: &BigUint, aggregated: BigUint) -> Result<BigUint, MpnnError> {
        Ok(aggregated)
    }
}

/// Handle to a natural number stored in a [`NatArena`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NatId(u32);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum NatNode {
    /// Values below `2^small_bits`.
    Small(BigUint),
    /// `Σ digit · B^τ(exps)` with `1 ≤ digit < B`, distinct exponent tuples,
    /// sorted by tuple. Only used for values of at least `2^small_bits`.
    Tower(Vec<(Vec<NatId>, u64)>),
}

/// Hash-consed exact natural numbers in hereditary base-`B` form.
///
/// A number is either stored outright (when below `2^small_bits`) or as its
/// base-`B` digit expansion whose digit positions are `τ(a₁,…,a_ℓ)` for
/// exponent tuples of arena numbers. Base-`B` expansions are unique and `τ`
/// is injective, so two ids are equal exactly when the numbers are equal.
#[derive(Debug)]
pub struct NatArena {
    base: u64,
    small_bits: u64,
    primes: Vec<u64>,
    nodes: Vec<NatNode>,
    index: HashMap<NatNode, NatId>,
}

impl NatArena {
    pub fn new(base: u64, ell: usize) -> Self {
        Self { base, small_bits: 4096, primes: first_primes(ell), nodes: Vec::new(), index: HashMap::new() }
    }

    fn intern(&mut self, node: NatNode) -> NatId {
        if let Some(&id) = self.index.get(&node) {
            return id;
        }
        let id = NatId(self.nodes.len() as u32);
        self.nodes.push(node.clone());
        self.index.insert(node, id);
        id
    }

    pub fn small(&mut self, value: BigUint) -> NatId {
        assert!(value.bits() <= self.small_bits, "small values only");
        self.intern(NatNode::Small(value))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    /// The value, if it has at most `max_bits` bits.
    pub fn value(&self, id: NatId, max_bits: u64) -> Option<BigUint> {
        match &self.nodes[id.0 as usize] {
            NatNode::Small(v) => (v.bits() <= max_bits).then(|| v.clone()),
            NatNode::Tower(terms) => self.eval_terms(terms.iter().map(|(e, c)| (e.as_slice(), *c)), max_bits),
        }
    }

    fn eval_terms<'a>(&self, terms: impl Iterator<Item = (&'a [NatId], u64)>, max_bits: u64) -> Option<BigUint> {
        let base = BigUint::from(self.base);
        let mut sum = BigUint::zero();
        for (exps, digit) in terms {
            let mut tau = BigUint::one();
            for (p, &e) in self.primes.iter().zip(exps) {
                // p^e ≥ 2^e, and B^τ ≥ 2^τ
                let e = self.value(e, 64)?.to_u64()?;
                if e > max_bits {
                    return None;
                }
                tau *= BigUint::from(*p).pow(e as u32);
                if tau > BigUint::from(max_bits) {
                    return None;
                }
            }
            let tau = tau.to_u32()?;
            sum += base.pow(tau) * digit;
            if sum.bits() > max_bits {
                return None;
            }
        }
        Some(sum)
    }

    /// Interns `Σ count · B^τ(key)`. Requires every count below `B`, which
    /// makes the formal sum its own base-`B` expansion.
    pub fn power_sum(&mut self, terms: FormalSum<Vec<NatId>>) -> Result<NatId, MpnnError> {
        for &c in terms.0.values() {
            if c == 0 || c >= self.base {
                return Err(MpnnError::DigitOverflow { digit: c, base: self.base });
            }
        }
        let small = self.eval_terms(terms.0.iter().map(|(e, c)| (e.as_slice(), *c)), self.small_bits);
        Ok(match small {
            Some(v) => self.intern(NatNode::Small(v)),
            None => self.intern(NatNode::Tower(terms.0.into_iter().collect())),
        })
    }

    /// Structural check that `id` denotes a natural number in canonical form.
    pub fn is_canonical_natural(&self, id: NatId) -> bool {
        match self.nodes.get(id.0 as usize) {
            None => false,
            Some(NatNode::Small(v)) => v.bits() <= self.small_bits,
            Some(NatNode::Tower(terms)) => {
                terms.windows(2).all(|w| w[0].0 < w[1].0)
                    && terms.iter().all(|(exps, c)| {
                        *c >= 1
                            && *c < self.base
                            && exps.len() == self.primes.len()
                            && exps.iter().all(|e| (e.0 as usize) < self.nodes.len())
                    })
            }
        }
    }

    /// Bit length when materializable.
    pub fn bits(&self, id: NatId) -> Option<u64> {
        match &self.nodes[id.0 as usize] {
            NatNode::Small(v) => Some(v.bits()),
            NatNode::Tower(_) => None,
        }
    }
}

/// Countable-domain simulation of `W[ℓ]` with `Msg = h` and `Upd(a,b) = b`.
///
/// Features are exact natural numbers held in a [`NatArena`]. A message
/// `h(a) = B^τ(a)` is represented by the exponent tuple `a` itself, and the
/// engine's sum of messages is the formal sum whose digits are the walk
/// multiplicities, all below `B`.
#[derive(Debug)]
pub struct CountableSimulator {
    n: usize,
    ell: usize,
    arena: Mutex<NatArena>,
}

/// The countable simulator for graphs on `n` vertices.
pub fn countable_simulator(n: usize, ell: usize) -> Result<CountableSimulator, MpnnError> {
    if ell < 2 {
        return Err(MpnnError::WalkTooShort(ell));
    }
    Ok(CountableSimulator { n, ell, arena: Mutex::new(NatArena::new(multiset_base(n, ell), ell)) })
}

impl CountableSimulator {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Round-0 features: the label ids as natural numbers.
    pub fn lift(&self, l: &Labelling) -> FeatureMatrix<NatId> {
        let mut arena = self.arena.lock().expect("arena lock");
        let cells = l.ids().iter().map(|&id| arena.small(BigUint::from(id))).collect();
        FeatureMatrix { n: l.n(), round: 0, cells }
    }

    pub fn value(&self, id: NatId, max_bits: u64) -> Option<BigUint> {
        self.arena.lock().expect("arena lock").value(id, max_bits)
    }

    pub fn is_natural(&self, id: NatId) -> bool {
        self.arena.lock().expect("arena lock").is_canonical_natural(id)
    }

    pub fn arena_size(&self) -> usize {
        self.arena.lock().expect("arena lock").len()
    }
}

impl WalkMpnn for CountableSimulator {
    type Feature = NatId;
    type Message = FormalSum<Vec<NatId>>;

    fn ell(&self) -> usize {
        self.ell
    }

    fn message(&self, _round: usize, walk: &[&NatId]) -> Result<Self::Message, MpnnError> {
        let mut m = BTreeMap::new();
        m.insert(walk.iter().map(|&&id| id).collect(), 1);
        Ok(FormalSum(m))
    }

    fn update(&self, _round: usize, _own: &NatId, aggregated: Self::Message) -> Result<NatId, MpnnError> {
        self.arena.lock().expect("arena lock").power_sum(aggregated)
    }
}

/// Sorted walk tuples with multiplicities.
type WalkMultiset = Vec<(Vec<u32>, u64)>;

/// The countable simulator with `h` replaced by the walk tuple itself and
/// `φ` by an injective interner. Same partitions, bounded memory.
#[derive(Debug)]
pub struct InternedSimulator {
    ell: usize,
    table: Mutex<HashMap<WalkMultiset, u32>>,
}

impl InternedSimulator {
    pub fn new(ell: usize) -> Self {
        Self { ell, table: Mutex::new(HashMap::new()) }
    }

    pub fn lift(&self, l: &Labelling) -> FeatureMatrix<u32> {
        FeatureMatrix { n: l.n(), round: 0, cells: l.ids().to_vec() }
    }
}

impl WalkMpnn for InternedSimulator {
    type Feature = u32;
    type Message = FormalSum<Vec<u32>>;

    fn ell(&self) -> usize {
        self.ell
    }

    fn message(&self, _round: usize, walk: &[&u32]) -> Result<Self::Message, MpnnError> {
        let mut m = BTreeMap::new();
        m.insert(walk.iter().map(|&&x| x).collect(), 1);
        Ok(FormalSum(m))
    }

    fn update(&self, _round: usize, _own: &u32, aggregated: Self::Message) -> Result<u32, MpnnError> {
        let mut table = self.table.lock().expect("table lock");
        let next = table.len() as u32;
        Ok(*table.entry(aggregated.0.into_iter().collect()).or_insert(next))
    }
}

/// All `α ∈ {0,…,m}^a` with `|α| ≤ m`, in graded lexicographic order:
/// ascending total degree, and within one degree descending lexicographic
/// (so `(2,0)` precedes `(1,1)` precedes `(0,2)`).
pub fn multi_indices(m: usize, a: usize) -> Vec<Vec<u32>> {
    fn fill(prefix: &mut Vec<u32>, remaining_len: usize, remaining_deg: u32, out: &mut Vec<Vec<u32>>) {
        if remaining_len == 1 {
            prefix.push(remaining_deg);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=remaining_deg).rev() {
            prefix.push(first);
            fill(prefix, remaining_len - 1, remaining_deg - first, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if a == 0 {
        return out;
    }
    for degree in 0..=m as u32 {
        fill(&mut Vec::with_capacity(a), a, degree, &mut out);
    }
    out
}

/// Exact binomial coefficient.
pub fn binomial(top: &BigUint, k: u64) -> BigUint {
    let k_big = BigUint::from(k);
    if &k_big > top {
        return BigUint::zero();
    }
    let k = std::cmp::min(k_big.clone(), top - &k_big);
    let mut acc = BigUint::one();
    let mut i = BigUint::zero();
    while i < k {
        acc = acc * (top - &i) / (&i + 1u32);
        i += 1u32;
    }
    acc
}

/// `s_t = C(n^(ℓ-1) + ℓ·s_prev, ℓ·s_prev)`.
pub fn feature_dim(n: u64, ell: u64, s_prev: u64) -> BigUint {
    let m = BigUint::from(n).pow(ell as u32 - 1);
    let a = ell * s_prev;
    binomial(&(m + a), a)
}

fn monomial(z: &[BigRational], alpha: &[u32]) -> BigRational {
    z.iter().zip(alpha).fold(BigRational::one(), |acc, (x, &e)| if e == 0 { acc } else { acc * x.pow(e as i32) })
}

/// `u(X) = (p_α(X) | |α| ≤ m)` with `p_α(X) = Σ_j (X_j)^α`, over the
/// multi-indices of [`multi_indices`]. Injective on multisets of `m` rows.
pub fn powersum_encoder(rows: &[Vec<BigRational>]) -> Result<Vec<BigRational>, MpnnError> {
    let m = rows.len();
    let a = rows.first().map(Vec::len).unwrap_or(0);
    if m == 0 || a == 0 {
        return Err(MpnnError::EmptyMultiset);
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != a) {
        return Err(MpnnError::DimensionMismatch { expected: a, got: bad.len() });
    }
    Ok(multi_indices(m, a)
        .iter()
        .map(|alpha| rows.iter().map(|r| monomial(r, alpha)).fold(BigRational::zero(), |s, x| s + x))
        .collect())
}

/// Uncountable-domain simulation: `Msg` emits every monomial
/// `(x₁,…,x_ℓ)^α` with `|α| ≤ n^(ℓ-1)`, and `Upd(x,y) = y`.
#[derive(Debug, Clone)]
pub struct UncountableSimulator {
    n: usize,
    ell: usize,
    /// `dims[t]` is `s_t`.
    dims: Vec<usize>,
    /// `indices[t-1]` are the multi-indices of round `t`.
    indices: Vec<Vec<Vec<u32>>>,
}

pub const DEFAULT_DIMENSION_CAP: u64 = 100_000;

impl UncountableSimulator {
    /// Prepares `rounds` rounds, refusing any `s_t` above `cap`.
    pub fn new(n: usize, ell: usize, s0: usize, rounds: usize, cap: u64) -> Result<Self, MpnnError> {
        if ell < 2 {
            return Err(MpnnError::WalkTooShort(ell));
        }
        let m = n.pow(ell as u32 - 1);
        let mut dims = vec![s0];
        let mut indices = Vec::new();
        for round in 1..=rounds {
            let prev = *dims.last().expect("non-empty");
            let demanded = feature_dim(n as u64, ell as u64, prev as u64);
            if demanded > BigUint::from(cap) {
                return Err(MpnnError::DimensionCap { round, demanded, cap });
            }
            let set = multi_indices(m, ell * prev);
            debug_assert_eq!(BigUint::from(set.len()), demanded);
            dims.push(set.len());
            indices.push(set);
        }
        Ok(Self { n, ell, dims, indices })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn lift(
        &self,
        features: Vec<Vec<BigRational>>,
        n: usize,
    ) -> Result<FeatureMatrix<Vec<BigRational>>, MpnnError> {
        if let Some(bad) = features.iter().find(|f| f.len() != self.dims[0]) {
            return Err(MpnnError::DimensionMismatch { expected: self.dims[0], got: bad.len() });
        }
        FeatureMatrix::new(n, features)
    }
}

impl WalkMpnn for UncountableSimulator {
    type Feature = Vec<BigRational>;
    type Message = Vec<BigRational>;

    fn ell(&self) -> usize {
        self.ell
    }

    fn message(&self, round: usize, walk: &[&Vec<BigRational>]) -> Result<Vec<BigRational>, MpnnError> {
        let configured = self.indices.len();
        if round == 0 || round > configured {
            return Err(MpnnError::RoundOutOfRange { round, configured });
        }
        let dim = self.dims[round - 1];
        let mut z = Vec::with_capacity(self.ell * dim);
        for x in walk {
            if x.len() != dim {
                return Err(MpnnError::DimensionMismatch { expected: dim, got: x.len() });
            }
            z.extend(x.iter().cloned());
        }
        Ok(self.indices[round - 1].iter().map(|alpha| monomial(&z, alpha)).collect())
    }

    fn update(
        &self,
        _round: usize,
        _own: &Vec<BigRational>,
        aggregated: Vec<BigRational>,
    ) -> Result<Vec<BigRational>, MpnnError> {
        Ok(aggregated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LabelledGraph;
    use crate::refinement::{walk_step, wl2_step};

    fn q(num: i64, den: i64) -> BigRational {
        BigRational::new(num.into(), den.into())
    }

    fn path(n: usize) -> LabelledGraph {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        LabelledGraph::from_undirected_edges(n, &edges).unwrap()
    }

    #[test]
    fn tau_and_h_small_values() {
        assert_eq!(tau(&[1, 0]), BigUint::from(2u32));
        assert_eq!(h(2, 2, &[1, 0]), BigUint::from(9u32));
        assert_eq!(phi(2, 2, &[vec![0, 0], vec![0, 0]]), BigUint::from(6u32));
        assert_eq!(first_primes(5), vec![2, 3, 5, 7, 11]);
    }

    #[test]
    fn constant_message_sums_to_walk_count() {
        let g = path(4);
        let fm = integer_features(&g.labelling());
        let m = FnMpnn::new(3, |_, _: &[&Vec<i64>]| vec![2i64, 5], |_, _: &Vec<i64>, y: Vec<i64>| y);
        let out = mpnn_step(&m, &fm).unwrap();
        assert!(out.cells.iter().all(|c| c == &vec![32, 80]));
    }

    #[test]
    fn first_argument_message_is_row_sum() {
        let g = path(4);
        let fm = integer_features(&g.labelling());
        let m = FnMpnn::new(2, |_, w: &[&Vec<i64>]| w[0].clone(), |_, _: &Vec<i64>, y: Vec<i64>| y);
        let out = mpnn_step(&m, &fm).unwrap();
        for v in 0..4 {
            let row: i64 = (0..4).map(|k| fm.get(v, k)[0]).sum();
            for w in 0..4 {
                assert_eq!(out.get(v, w), &vec![row]);
            }
        }
    }

    #[test]
    fn dimension_mismatch_surfaces() {
        let g = path(3);
        let mut fm = integer_features(&g.labelling());
        fm.cells[4] = vec![1, 2];
        let err = mpnn_step(&RandomMpnn::new(2, 1), &fm).unwrap_err();
        assert!(matches!(err, MpnnError::DimensionMismatch { .. }));
    }

    #[test]
    fn random_mpnn_is_coarser_than_walk_refinement() {
        let g = path(5);
        let l = g.labelling();
        for seed in 0..10 {
            for ell in [2, 3] {
                let out = mpnn_step(&RandomMpnn::new(ell, seed), &integer_features(&l)).unwrap();
                assert!(walk_step(&l, ell).unwrap().refines(&out.partition()).unwrap());
            }
        }
    }

    #[test]
    fn countable_modes_agree_on_round_one() {
        let g = path(3);
        let l = g.labelling();
        let exact = countable_simulator(3, 2).unwrap();
        let big = BigIntCountableSimulator::new(3, 2);
        let a = mpnn_step(&exact, &exact.lift(&l)).unwrap();
        let b = mpnn_step(&big, &big.lift(&l)).unwrap();
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(exact.value(*x, 1 << 20).as_ref(), Some(y));
        }
        assert!(a.partition().equivalent(&wl2_step(&l)).unwrap());
    }

    #[test]
    fn bigint_mode_refuses_towers() {
        let big = BigIntCountableSimulator::new(3, 2);
        let huge = BigUint::from(1u32) << 100u32;
        assert!(matches!(big.message(2, &[&huge, &huge]), Err(MpnnError::FeatureTooLarge { .. })));
    }

    #[test]
    fn tower_features_stay_natural_beyond_materialization() {
        let g = path(5);
        let l = g.labelling();
        let sim = countable_simulator(5, 3).unwrap();
        let rounds = run_mpnn(&sim, sim.lift(&l), 3).unwrap();
        let mut expected = l.clone();
        for fm in &rounds[1..] {
            expected = walk_step(&expected, 3).unwrap();
            assert!(fm.partition().equivalent(&expected).unwrap());
            assert!(fm.cells.iter().all(|&id| sim.is_natural(id)));
        }
        // round-2 features are far beyond 2^4096
        assert!(rounds[2].cells.iter().all(|&id| sim.value(id, 1 << 16).is_none()));
    }

    #[test]
    fn digit_overflow_is_rejected() {
        let mut arena = NatArena::new(3, 2);
        let zero = arena.small(BigUint::zero());
        let mut m = BTreeMap::new();
        m.insert(vec![zero, zero], 3);
        assert!(matches!(arena.power_sum(FormalSum(m)), Err(MpnnError::DigitOverflow { .. })));
    }

    #[test]
    fn arena_small_and_computed_values_coincide() {
        // n = 2, ℓ = 2: φ({(0,0),(0,0)}) = 6
        let mut arena = NatArena::new(3, 2);
        let zero = arena.small(BigUint::zero());
        let six = arena.small(BigUint::from(6u32));
        let mut m = BTreeMap::new();
        m.insert(vec![zero, zero], 2);
        assert_eq!(arena.power_sum(FormalSum(m)).unwrap(), six);
    }

    #[test]
    fn multi_index_order_and_count() {
        assert_eq!(multi_indices(2, 1), vec![vec![0], vec![1], vec![2]]);
        assert_eq!(multi_indices(2, 2), vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
        for (m, a) in [(3, 2), (4, 3), (2, 5)] {
            let expected = binomial(&BigUint::from((m + a) as u64), a as u64);
            assert_eq!(BigUint::from(multi_indices(m, a).len()), expected);
        }
    }

    #[test]
    fn powersum_small_example() {
        let u = powersum_encoder(&[vec![q(1, 1)], vec![q(2, 1)]]).unwrap();
        assert_eq!(u, vec![q(2, 1), q(3, 1), q(5, 1)]);
        let swapped = powersum_encoder(&[vec![q(2, 1)], vec![q(1, 1)]]).unwrap();
        assert_eq!(u, swapped);
        assert_eq!(powersum_encoder(&[]).unwrap_err(), MpnnError::EmptyMultiset);
    }

    #[test]
    fn feature_dim_values() {
        assert_eq!(feature_dim(10, 2, 1), BigUint::from(66u32));
        assert_eq!(feature_dim(10, 2, 66), BigUint::from(664_226_242_466_073u64));
        assert_eq!(feature_dim(1, 2, 1), BigUint::from(3u32));
    }

    #[test]
    fn uncountable_refuses_large_dimensions() {
        let err = UncountableSimulator::new(10, 2, 1, 2, DEFAULT_DIMENSION_CAP).unwrap_err();
        assert_eq!(
            err,
            MpnnError::DimensionCap {
                round: 2,
                demanded: BigUint::from(664_226_242_466_073u64),
                cap: DEFAULT_DIMENSION_CAP
            }
        );
        let ok = UncountableSimulator::new(10, 2, 1, 1, DEFAULT_DIMENSION_CAP).unwrap();
        assert_eq!(ok.dims(), &[1, 66]);
    }

    #[test]
    fn uncountable_round_one_on_two_vertices() {
        let g = LabelledGraph::from_vertex_labels(2, &["a", "b"], |i, j| i != j).unwrap();
        let l = g.labelling();
        let sim = UncountableSimulator::new(2, 2, 1, 1, DEFAULT_DIMENSION_CAP).unwrap();
        let init = sim.lift(l.ids().iter().map(|&id| vec![q(i64::from(id), 1)]).collect(), 2).unwrap();
        let out = mpnn_step(&sim, &init).unwrap();
        assert!(out.partition().equivalent(&wl2_step(&l)).unwrap());
    }
}
