//! The non-linear second-order layer
//!
//! ```text
//! A'_{ijs} = ReLU( Σ_k Σ_{c,d} A_{ikc} A_{kjd} W_{cds} − q )
//! ```
//!
//! together with the weight construction that makes it track WL[2] round by
//! round. Everything is exact rational arithmetic.

use std::collections::HashMap;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::Labelling;
use crate::mpnn::{MpnnError, WalkMpnn};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GnnError {
    #[error("tensor shape {shape:?} needs {expected} entries, got {got}")]
    Storage { shape: Vec<usize>, expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unique labels are linearly dependent (rank {rank} < {labels}); hot-one encode the input first")]
    NotLabelIndependent { rank: usize, labels: usize },
    #[error("threshold tower for n = {n} needs about {bits} bits, over the cap of {cap}")]
    ThresholdTooLarge { n: u64, bits: BigUint, cap: u64 },
    #[error("internal: {0}")]
    Internal(String),
}

/// Dense tensor of exact rationals in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalTensor {
    shape: Vec<usize>,
    data: Vec<BigRational>,
}

impl RationalTensor {
    pub fn new(shape: Vec<usize>, data: Vec<BigRational>) -> Result<Self, GnnError> {
        let expected = shape.iter().product();
        if data.len() != expected {
            return Err(GnnError::Storage { shape, expected, got: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { shape, data: vec![BigRational::zero(); len] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[BigRational] {
        &self.data
    }

    fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index rank");
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &dim)| {
            assert!(i < dim, "index out of bounds");
            acc * dim + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> &BigRational {
        &self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: BigRational) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    /// `(n, s)` of an `(n, n, s)` tensor.
    pub fn pair_dims(&self) -> Result<(usize, usize), GnnError> {
        match self.shape[..] {
            [n, m, s] if n == m && n > 0 => Ok((n, s)),
            _ => Err(GnnError::Shape(format!("expected (n, n, s), got {:?}", self.shape))),
        }
    }

    /// The feature vector of pair `(i, j)` in an `(n, n, s)` tensor.
    pub fn cell(&self, i: usize, j: usize) -> &[BigRational] {
        let (n, s) = (self.shape[0], self.shape[2]);
        let start = (i * n + j) * s;
        &self.data[start..start + s]
    }

    /// Partition of pairs induced by equal feature vectors.
    pub fn partition(&self) -> Result<Labelling, GnnError> {
        let (n, s) = self.pair_dims()?;
        Ok(Labelling::from_keys(n, (0..n * n).map(|c| &self.data[c * s..(c + 1) * s])))
    }

    /// Distinct feature vectors in first-occurrence order, and each cell's
    /// index into them.
    pub fn unique_labels(&self) -> Result<(Vec<Vec<BigRational>>, Vec<usize>), GnnError> {
        let (n, s) = self.pair_dims()?;
        let mut index: HashMap<&[BigRational], usize> = HashMap::new();
        let mut uniq = Vec::new();
        let mut of_cell = Vec::with_capacity(n * n);
        for c in 0..n * n {
            let row = &self.data[c * s..(c + 1) * s];
            let next = uniq.len();
            let id = *index.entry(row).or_insert_with(|| {
                uniq.push(row.to_vec());
                next
            });
            of_cell.push(id);
        }
        Ok((uniq, of_cell))
    }

    /// Largest bit length over all numerators and denominators.
    pub fn max_bits(&self) -> u64 {
        self.data.iter().map(|x| x.numer().bits().max(x.denom().bits())).max().unwrap_or(0)
    }
}

/// Weights of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerWeights {
    /// Shape `(s_prev, s_prev, s_next)`.
    pub w: RationalTensor,
    pub q: BigRational,
}

fn lcm_of_denominators<'a>(xs: impl Iterator<Item = &'a BigRational>) -> BigInt {
    // Denominators repeat a lot; a remainder test is far cheaper than a gcd.
    xs.fold(BigInt::one(), |acc, x| if (&acc % x.denom()).is_zero() { acc } else { acc.lcm(x.denom()) })
}

/// Product of two reduced fractions by cross-cancellation, which leaves the
/// result reduced without a gcd of the full products.
fn mul_reduced(x: &BigRational, y: &BigRational) -> BigRational {
    let g1 = x.numer().gcd(y.denom());
    let g2 = y.numer().gcd(x.denom());
    let numer = (x.numer() / &g1) * (y.numer() / &g2);
    let denom = (x.denom() / &g2) * (y.denom() / &g1);
    if numer.is_zero() {
        return BigRational::zero();
    }
    BigRational::new_raw(numer, denom)
}

/// `x / k` for a positive integer `k`, reduced.
fn div_reduced(x: &BigRational, k: &BigInt) -> BigRational {
    let g = x.numer().gcd(k);
    if x.numer().is_zero() {
        return BigRational::zero();
    }
    BigRational::new_raw(x.numer() / &g, x.denom() * (k / &g))
}

/// Scales a rational vector to integers: returns `(x̂, den)` with `x = x̂ / den`.
fn scale_to_integers(xs: &[BigRational]) -> (Vec<BigInt>, BigInt) {
    let den = lcm_of_denominators(xs.iter());
    let ints = xs.iter().map(|x| x.numer() * (&den / x.denom())).collect();
    (ints, den)
}

/// `ReLU(Σ_k Σ_{c,d} A_ikc A_kjd W_cds − q)` for all `(i, j, s)`.
///
/// The contraction is grouped by distinct labels and carried out over
/// integers with a common denominator, then reduced once per output entry.
pub fn layer_forward(a_prev: &RationalTensor, w: &LayerWeights) -> Result<RationalTensor, GnnError> {
    let (n, s_prev) = a_prev.pair_dims()?;
    let (s1, s2, s_next) = match w.w.shape[..] {
        [x, y, z] => (x, y, z),
        _ => return Err(GnnError::Shape(format!("weights must be rank 3, got {:?}", w.w.shape))),
    };
    if s1 != s_prev || s2 != s_prev {
        return Err(GnnError::Shape(format!("features have dimension {s_prev}, weights expect ({s1}, {s2})")));
    }
    let (uniq, of_cell) = a_prev.unique_labels()?;
    let (w_int, w_den) = scale_to_integers(&w.w.data);
    let scaled: Vec<(Vec<BigInt>, BigInt)> = uniq.iter().map(|u| scale_to_integers(u)).collect();

    // X̂(u)_{d,s} = Σ_c û_c Ŵ_{cds}
    let partial: Vec<Vec<BigInt>> = scaled
        .par_iter()
        .map(|(u, _)| {
            let mut x = vec![BigInt::zero(); s_prev * s_next];
            for (c, uc) in u.iter().enumerate() {
                if uc.is_zero() {
                    continue;
                }
                let block = &w_int[c * s_prev * s_next..(c + 1) * s_prev * s_next];
                for (acc, wv) in x.iter_mut().zip(block) {
                    if !wv.is_zero() {
                        *acc += uc * wv;
                    }
                }
            }
            x
        })
        .collect();

    // Y(u, v)_s = Σ_d v_d X(u)_{d,s}, only for pairs that occur on a walk.
    let mut pair_index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut pairs = Vec::new();
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                let key = (of_cell[i * n + k], of_cell[k * n + j]);
                if let std::collections::hash_map::Entry::Vacant(e) = pair_index.entry(key) {
                    e.insert(pairs.len());
                    pairs.push(key);
                }
            }
        }
    }
    let pair_values: Vec<Vec<BigRational>> = pairs
        .par_iter()
        .map(|&(u, v)| {
            let (v_int, v_den) = &scaled[v];
            let den = &scaled[u].1 * v_den * &w_den;
            let x = &partial[u];
            (0..s_next)
                .map(|s| {
                    let mut acc = BigInt::zero();
                    for (d, vd) in v_int.iter().enumerate() {
                        if !vd.is_zero() {
                            acc += vd * &x[d * s_next + s];
                        }
                    }
                    BigRational::new(acc, den.clone())
                })
                .collect()
        })
        .collect();

    let cells: Vec<Vec<BigRational>> = (0..n * n)
        .into_par_iter()
        .map(|cell| {
            let (i, j) = (cell / n, cell % n);
            let mut out = vec![-w.q.clone(); s_next];
            for k in 0..n {
                let y = &pair_values[pair_index[&(of_cell[i * n + k], of_cell[k * n + j])]];
                for (o, v) in out.iter_mut().zip(y) {
                    *o += v;
                }
            }
            out.into_iter().map(relu).collect()
        })
        .collect();
    RationalTensor::new(vec![n, n, s_next], cells.into_iter().flatten().collect())
}

fn relu(x: BigRational) -> BigRational {
    if x.is_negative() {
        BigRational::zero()
    } else {
        x
    }
}

/// Hot-one encoding of a labelling's classes, in first-occurrence order.
pub fn hot_one_encode(l: &Labelling) -> RationalTensor {
    let c = l.canonicalized();
    let n = c.n();
    let s = c.class_count();
    let mut data = vec![BigRational::zero(); n * n * s];
    for (cell, &id) in c.ids().iter().enumerate() {
        data[cell * s + id as usize] = BigRational::one();
    }
    RationalTensor { shape: vec![n, n, s], data }
}

/// Integer matrix `R̂ = D_r R D_c` with diagonal `D_c` (per-column lcm of
/// denominators) applied first, then `D_r` clearing what is left per row.
/// Column-first scaling keeps entries near the size of the originals when
/// denominators are shared down a column.
fn integer_matrix(rows: &[Vec<BigRational>]) -> (Vec<Vec<BigInt>>, Vec<BigInt>, Vec<BigInt>) {
    let cols = rows.first().map(Vec::len).unwrap_or(0);
    let col_scale: Vec<BigInt> = (0..cols).map(|c| lcm_of_denominators(rows.iter().map(|r| &r[c]))).collect();
    let mut ints = Vec::with_capacity(rows.len());
    let mut row_scale = Vec::with_capacity(rows.len());
    for r in rows {
        let scaled: Vec<BigRational> =
            r.iter().zip(&col_scale).map(|(x, d)| x * BigRational::from_integer(d.clone())).collect();
        let (row, den) = scale_to_integers(&scaled);
        ints.push(row);
        row_scale.push(den);
    }
    (ints, row_scale, col_scale)
}

/// Fraction-free (Bareiss) elimination in place. Returns the pivot columns;
/// their count is the rank.
pub fn bareiss_eliminate(m: &mut [Vec<BigInt>]) -> Vec<usize> {
    let rows = m.len();
    let cols = m.first().map(Vec::len).unwrap_or(0);
    let mut pivots = Vec::new();
    let mut prev_pivot = BigInt::one();
    let mut r = 0;
    for col in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !m[i][col].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        for i in r + 1..rows {
            for j in col + 1..cols {
                let v = (&m[r][col] * &m[i][j] - &m[i][col] * &m[r][j]) / &prev_pivot;
                m[i][j] = v;
            }
            m[i][col] = BigInt::zero();
        }
        prev_pivot = m[r][col].clone();
        pivots.push(col);
        r += 1;
    }
    pivots
}

/// Exact rank of a set of rational row vectors.
pub fn rational_rank(rows: &[Vec<BigRational>]) -> usize {
    bareiss_eliminate(&mut integer_matrix(rows).0).len()
}

/// True iff the distinct feature vectors of `a` are linearly independent.
pub fn check_label_independence(a: &RationalTensor) -> bool {
    match a.unique_labels() {
        Ok((uniq, _)) => rational_rank(&uniq) == uniq.len(),
        Err(_) => false,
    }
}

/// Right inverse `V` (`s × c`) of a full-row-rank `c × s` matrix `R`:
/// `R V = Id`. Rows of `V` outside the pivot columns are zero.
pub fn right_inverse(r: &[Vec<BigRational>]) -> Result<Vec<Vec<BigRational>>, GnnError> {
    let c = r.len();
    let s = r.first().map(Vec::len).unwrap_or(0);
    let (ints, row_scale, col_scale) = integer_matrix(r);
    let pivots = bareiss_eliminate(&mut ints.clone());
    if pivots.len() < c {
        return Err(GnnError::NotLabelIndependent { rank: pivots.len(), labels: c });
    }
    // With R̂ = D_r R D_c, solving R̂_P X = D_r gives R_P⁻¹ = D_c X.
    let mut aug: Vec<Vec<BigInt>> = ints
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut line: Vec<BigInt> = pivots.iter().map(|&p| row[p].clone()).collect();
            line.extend((0..c).map(|k| if k == i { row_scale[i].clone() } else { BigInt::zero() }));
            line
        })
        .collect();
    if bareiss_eliminate_columns(&mut aug, c) < c {
        return Err(GnnError::Internal("pivot submatrix became singular".into()));
    }
    // The last Bareiss pivot is the determinant; det·X is integral, so the
    // back-substitution divides exactly.
    let det = aug[c - 1][c - 1].clone();
    let mut y = vec![vec![BigInt::zero(); c]; c];
    for col in 0..c {
        for i in (0..c).rev() {
            let mut acc = &det * &aug[i][c + col];
            for k in i + 1..c {
                acc -= &aug[i][k] * &y[k][col];
            }
            let (quot, rem) = acc.div_rem(&aug[i][i]);
            if !rem.is_zero() {
                return Err(GnnError::Internal("inexact fraction-free back-substitution".into()));
            }
            y[i][col] = quot;
        }
    }
    let mut v = vec![vec![BigRational::zero(); c]; s];
    for (k, &p) in pivots.iter().enumerate() {
        v[p] = y[k].iter().map(|x| BigRational::new(&col_scale[p] * x, det.clone())).collect();
    }
    Ok(v)
}

// Bareiss forward pass that pivots only within the first `square` columns
// and carries the remaining columns along. Returns the rank reached.
fn bareiss_eliminate_columns(m: &mut [Vec<BigInt>], square: usize) -> usize {
    let rows = m.len();
    let cols = m.first().map(Vec::len).unwrap_or(0);
    let mut prev_pivot = BigInt::one();
    for r in 0..square.min(rows) {
        let Some(p) = (r..rows).find(|&i| !m[i][r].is_zero()) else {
            return r;
        };
        m.swap(r, p);
        for i in r + 1..rows {
            for j in r + 1..cols {
                let v = (&m[r][r] * &m[i][j] - &m[i][r] * &m[r][j]) / &prev_pivot;
                m[i][j] = v;
            }
            m[i][r] = BigInt::zero();
        }
        prev_pivot = m[r][r].clone();
    }
    square.min(rows)
}

/// Everything the weight construction computes along the way.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub weights: LayerWeights,
    /// Distinct input labels, first-occurrence order (`c_t × s_prev`).
    pub uniq: Vec<Vec<BigRational>>,
    /// `s_prev × c_t` with `uniq · V = Id`.
    pub v: Vec<Vec<BigRational>>,
    /// Largest entry of `C`.
    pub c_max: u64,
    /// Largest entry of `D`.
    pub d_max: BigUint,
    /// `M_d = (c_max + 1)^d`.
    pub m: Vec<BigUint>,
    /// `N_c = (d_max + 1)^c`.
    pub n_vec: Vec<BigUint>,
    /// `E_ij`, row-major.
    pub e: Vec<BigUint>,
    /// Distinct values of `E`, descending.
    pub e_values: Vec<BigUint>,
}

/// Weights for the next layer, per the constructive simulation argument.
pub fn synthesize_layer(a_prev: &RationalTensor) -> Result<LayerWeights, GnnError> {
    Ok(synthesize_layer_detailed(a_prev)?.weights)
}

pub fn synthesize_layer_detailed(a_prev: &RationalTensor) -> Result<Synthesis, GnnError> {
    let (n, s_prev) = a_prev.pair_dims()?;
    let (uniq, of_cell) = a_prev.unique_labels()?;
    let c_t = uniq.len();
    let v = right_inverse(&uniq)?;

    // B = A V must be the class indicator. B_ij depends on A_ij only, so it
    // is checked once per distinct label.
    let v_cols: Vec<(Vec<BigInt>, BigInt)> =
        (0..c_t).map(|c| scale_to_integers(&v.iter().map(|row| row[c].clone()).collect::<Vec<_>>())).collect();
    for (label, row) in uniq.iter().enumerate() {
        let (row_int, row_den) = scale_to_integers(row);
        for (c, (col_int, col_den)) in v_cols.iter().enumerate() {
            let dot: BigInt = row_int.iter().zip(col_int).map(|(x, y)| x * y).sum();
            let want = if c == label { &row_den * col_den } else { BigInt::zero() };
            if dot != want {
                return Err(GnnError::Internal(format!("B is not the class indicator at label {label}, column {c}")));
            }
        }
    }
    let class_of = of_cell;

    // C_ijcd = number of k with class(i,k) = c and class(k,j) = d.
    let mut counts: Vec<HashMap<(usize, usize), u64>> = vec![HashMap::new(); n * n];
    let mut c_max = 0;
    for i in 0..n {
        for j in 0..n {
            let entry = &mut counts[i * n + j];
            for k in 0..n {
                let x = entry.entry((class_of[i * n + k], class_of[k * n + j])).or_insert(0);
                *x += 1;
                c_max = c_max.max(*x);
            }
        }
    }
    let base_m = BigUint::from(c_max + 1);
    let m: Vec<BigUint> = (0..c_t).map(|d| base_m.pow(d as u32)).collect();
    let mut d_tensor = vec![BigUint::zero(); n * n * c_t];
    for (cell, entry) in counts.iter().enumerate() {
        for (&(c, d), &cnt) in entry {
            d_tensor[cell * c_t + c] += &m[d] * cnt;
        }
    }
    let d_max = d_tensor.iter().max().cloned().unwrap_or_default();
    let base_n = &d_max + 1u32;
    let n_vec: Vec<BigUint> = (0..c_t).map(|c| base_n.pow(c as u32)).collect();
    let e: Vec<BigUint> =
        (0..n * n).map(|cell| (0..c_t).map(|c| &d_tensor[cell * c_t + c] * &n_vec[c]).sum()).collect();
    let mut e_values = e.clone();
    e_values.sort_unstable_by(|a, b| b.cmp(a));
    e_values.dedup();
    if e_values.last().is_some_and(Zero::is_zero) {
        return Err(GnnError::Internal("E has a zero entry".into()));
    }
    let s_next = e_values.len();
    let to_q = |x: &BigUint| BigRational::from_integer(BigInt::from_biguint(Sign::Plus, x.clone()));
    let u: Vec<BigRational> = e_values.iter().map(|x| to_q(x).recip()).collect();

    // q: the largest E_ij / e_s below 1.
    let mut q: Option<BigRational> = None;
    for x in &e_values {
        for (s, es) in e_values.iter().enumerate() {
            if x < es {
                let f = to_q(x) * &u[s];
                if q.as_ref().is_none_or(|cur| &f > cur) {
                    q = Some(f);
                }
            }
        }
    }
    let q = q.unwrap_or_else(|| BigRational::new(1.into(), 2.into()));

    // W_cds = (Σ_c' V_cc' N_c') (Σ_d' V_dd' M_d') U_s
    let alpha: Vec<BigRational> =
        v.iter().map(|row| row.iter().zip(&n_vec).map(|(x, nc)| x * to_q(nc)).sum()).collect();
    let beta: Vec<BigRational> = v.iter().map(|row| row.iter().zip(&m).map(|(x, md)| x * to_q(md)).sum()).collect();
    let mut data = Vec::with_capacity(s_prev * s_prev * s_next);
    for a in &alpha {
        for b in &beta {
            let ab = mul_reduced(a, b);
            for es in &e_values {
                data.push(div_reduced(&ab, &BigInt::from_biguint(Sign::Plus, es.clone())));
            }
        }
    }
    let w = RationalTensor::new(vec![s_prev, s_prev, s_next], data)?;
    Ok(Synthesis { weights: LayerWeights { w, q }, uniq, v, c_max, d_max, m, n_vec, e, e_values })
}

/// Bit budget above which [`uniform_threshold`] refuses.
pub const THRESHOLD_BIT_CAP: u64 = 1 << 20;

/// The graph-size-only threshold `(x − 1)/x` with `x = n^((n²)^(n²))`.
/// Any `q` in `((x−1)/x, 1)` works for every round; it is astronomically
/// close to 1, so only tiny `n` are representable.
pub fn uniform_threshold(n: u64) -> Result<BigRational, GnnError> {
    let n2 = BigUint::from(n * n);
    let exponent = n2.pow((n * n) as u32);
    let bits = &exponent * BigUint::from(64 - n.leading_zeros() as u64);
    if bits > BigUint::from(THRESHOLD_BIT_CAP) {
        return Err(GnnError::ThresholdTooLarge { n, bits, cap: THRESHOLD_BIT_CAP });
    }
    let e = exponent.to_u32().expect("bounded by the cap");
    let x = BigInt::from(n).pow(e);
    Ok(BigRational::new(&x - 1, x))
}

/// The layer cast as a 2-walk MPNN:
/// `Msg(a, b)_s = Σ_{c,d} a_c b_d W_cds − q/n` and `Upd(_, y) = ReLU(y)`.
///
/// The message subtracts `q/n` so that the sum over the `n` intermediate
/// vertices subtracts exactly `q` once.
pub struct GnnLayerMpnn {
    pub weights: LayerWeights,
    pub n: usize,
}

impl WalkMpnn for GnnLayerMpnn {
    type Feature = Vec<BigRational>;
    type Message = Vec<BigRational>;

    fn ell(&self) -> usize {
        2
    }

    fn message(&self, _round: usize, walk: &[&Vec<BigRational>]) -> Result<Vec<BigRational>, MpnnError> {
        let shape = self.weights.w.shape();
        let (s_prev, s_next) = (shape[0], shape[2]);
        let (a, b) = (walk[0], walk[1]);
        for x in [a, b] {
            if x.len() != s_prev {
                return Err(MpnnError::DimensionMismatch { expected: s_prev, got: x.len() });
            }
        }
        let shift = &self.weights.q / BigRational::from_integer(BigInt::from(self.n));
        let mut out = vec![-shift; s_next];
        for (c, ac) in a.iter().enumerate() {
            if ac.is_zero() {
                continue;
            }
            for (d, bd) in b.iter().enumerate() {
                if bd.is_zero() {
                    continue;
                }
                let coeff = ac * bd;
                for (s, o) in out.iter_mut().enumerate() {
                    *o += &coeff * self.weights.w.get(&[c, d, s]);
                }
            }
        }
        Ok(out)
    }

    fn update(
        &self,
        _round: usize,
        _own: &Vec<BigRational>,
        aggregated: Vec<BigRational>,
    ) -> Result<Vec<BigRational>, MpnnError> {
        Ok(aggregated.into_iter().map(relu).collect())
    }
}

/// Synthesize-and-forward for `rounds` rounds starting from the hot-one
/// encoding of `initial`. Returns `A^(0..=rounds)`.
pub fn simulate_wl2(initial: &Labelling, rounds: usize) -> Result<Vec<RationalTensor>, GnnError> {
    let mut out = vec![hot_one_encode(initial)];
    for _ in 0..rounds {
        let prev = out.last().expect("non-empty");
        let w = synthesize_layer(prev)?;
        out.push(layer_forward(prev, &w)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LabelledGraph;
    use crate::mpnn::{mpnn_step, FeatureMatrix};
    use crate::refinement::{run_to_stable, wl2_step, Procedure};

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn uniform(n: usize) -> Labelling {
        LabelledGraph::from_key_matrix(n, &vec![b"e".to_vec(); n * n]).unwrap().normalize().labelling()
    }

    fn cycle(n: usize) -> LabelledGraph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        LabelledGraph::from_undirected_edges(n, &edges).unwrap()
    }

    // Direct five-index sum, for cross-checking the grouped contraction.
    fn forward_reference(a: &RationalTensor, w: &LayerWeights) -> RationalTensor {
        let (n, s) = a.pair_dims().unwrap();
        let s_next = w.w.shape()[2];
        let mut out = RationalTensor::zeros(vec![n, n, s_next]);
        for i in 0..n {
            for j in 0..n {
                for t in 0..s_next {
                    let mut acc = -w.q.clone();
                    for k in 0..n {
                        for c in 0..s {
                            for d in 0..s {
                                acc += a.get(&[i, k, c]) * a.get(&[k, j, d]) * w.w.get(&[c, d, t]);
                            }
                        }
                    }
                    out.set(&[i, j, t], relu(acc));
                }
            }
        }
        out
    }

    #[test]
    fn zero_weights_give_zero() {
        let a = hot_one_encode(&uniform(3));
        let w = LayerWeights { w: RationalTensor::zeros(vec![2, 2, 3]), q: q(1, 2) };
        let out = layer_forward(&a, &w).unwrap();
        assert!(out.data().iter().all(Zero::is_zero));
    }

    #[test]
    fn single_cell_contraction() {
        let a = RationalTensor::new(vec![1, 1, 1], vec![q(3, 2)]).unwrap();
        let w = LayerWeights { w: RationalTensor::new(vec![1, 1, 1], vec![q(-2, 5)]).unwrap(), q: q(0, 1) };
        assert_eq!(layer_forward(&a, &w).unwrap().data(), &[q(0, 1)]);
        let w = LayerWeights { w: RationalTensor::new(vec![1, 1, 1], vec![q(2, 5)]).unwrap(), q: q(0, 1) };
        assert_eq!(layer_forward(&a, &w).unwrap().data(), &[q(9, 10)]);
    }

    #[test]
    fn shape_errors() {
        assert!(RationalTensor::new(vec![2, 2], vec![q(1, 1)]).is_err());
        let a = hot_one_encode(&uniform(2));
        let w = LayerWeights { w: RationalTensor::zeros(vec![3, 3, 1]), q: q(1, 2) };
        assert!(matches!(layer_forward(&a, &w), Err(GnnError::Shape(_))));
    }

    #[test]
    fn hot_one_basics() {
        let l = uniform(2);
        let a = hot_one_encode(&l);
        assert_eq!(a.shape(), &[2, 2, 2]);
        assert_eq!(a.cell(0, 0), &[q(1, 1), q(0, 1)]);
        assert_eq!(a.cell(0, 1), &[q(0, 1), q(1, 1)]);
        assert!(a.partition().unwrap().equivalent(&l).unwrap());
        assert!(check_label_independence(&a));
    }

    #[test]
    fn dependent_labels_detected() {
        let a = RationalTensor::new(vec![1, 2, 2], vec![q(1, 1), q(0, 1), q(2, 1), q(0, 1)]);
        assert!(a.is_ok());
        let a = RationalTensor::new(
            vec![2, 2, 2],
            vec![q(1, 1), q(0, 1), q(2, 1), q(0, 1), q(2, 1), q(0, 1), q(1, 1), q(0, 1)],
        )
        .unwrap();
        assert!(!check_label_independence(&a));
        assert!(matches!(synthesize_layer(&a), Err(GnnError::NotLabelIndependent { rank: 1, labels: 2 })));
    }

    #[test]
    fn right_inverse_is_exact() {
        let r = vec![vec![q(1, 2), q(3, 1), q(0, 1)], vec![q(2, 1), q(-1, 3), q(5, 7)]];
        let v = right_inverse(&r).unwrap();
        for (i, row) in r.iter().enumerate() {
            for c in 0..2 {
                let x: BigRational = row.iter().zip(&v).map(|(a, vr)| a * &vr[c]).sum();
                assert_eq!(x, if i == c { q(1, 1) } else { q(0, 1) });
            }
        }
    }

    #[test]
    fn grouped_contraction_matches_reference() {
        let a0 = hot_one_encode(&cycle(4).labelling());
        let w = synthesize_layer(&a0).unwrap();
        let a1 = layer_forward(&a0, &w).unwrap();
        assert_eq!(a1, forward_reference(&a0, &w));
        let w2 = synthesize_layer(&a1).unwrap();
        assert_eq!(layer_forward(&a1, &w2).unwrap(), forward_reference(&a1, &w2));
    }

    #[test]
    fn uniform_k2_and_k3() {
        for n in [2, 3] {
            let l = uniform(n);
            let a0 = hot_one_encode(&l);
            let syn = synthesize_layer_detailed(&a0).unwrap();
            assert!(syn.weights.q > q(0, 1) && syn.weights.q < q(1, 1));
            let a1 = layer_forward(&a0, &syn.weights).unwrap();
            assert_eq!(a1.partition().unwrap().class_count(), 2);
            assert!(a1.partition().unwrap().equivalent(&wl2_step(&l)).unwrap());
        }
    }

    #[test]
    fn cycle_tracks_wl2_every_round() {
        let g = cycle(6);
        let trace = run_to_stable(&g, Procedure::Wl2, None).unwrap();
        let tensors = simulate_wl2(&g.labelling(), trace.stable_round + 1).unwrap();
        for (t, a) in tensors.iter().enumerate() {
            assert!(a.partition().unwrap().equivalent(trace.at(t)).unwrap(), "round {t}");
            assert!(check_label_independence(a), "round {t}");
        }
    }

    #[test]
    fn output_labels_are_triangular() {
        let a0 = hot_one_encode(&cycle(5).labelling());
        let syn = synthesize_layer_detailed(&a0).unwrap();
        let a1 = layer_forward(&a0, &syn.weights).unwrap();
        let q_t = &syn.weights.q;
        assert!(q_t > &q(0, 1) && q_t < &q(1, 1));
        let diag = q(1, 1) - q_t;
        for (cell, e) in syn.e.iter().enumerate() {
            let s = syn.e_values.iter().position(|x| x == e).unwrap();
            let row = &a1.data()[cell * syn.e_values.len()..(cell + 1) * syn.e_values.len()];
            assert_eq!(row[s], diag);
            assert!(row[..s].iter().all(Zero::is_zero));
            assert!(row[s + 1..].iter().all(Signed::is_positive));
        }
    }

    #[test]
    fn mpnn_form_is_bit_identical() {
        let a0 = hot_one_encode(&cycle(4).labelling());
        let w = synthesize_layer(&a0).unwrap();
        let direct = layer_forward(&a0, &w).unwrap();
        let (n, s) = a0.pair_dims().unwrap();
        let fm = FeatureMatrix::new(n, (0..n * n).map(|c| a0.data()[c * s..(c + 1) * s].to_vec()).collect()).unwrap();
        let via = mpnn_step(&GnnLayerMpnn { weights: w, n }, &fm).unwrap();
        let flat: Vec<BigRational> = via.cells.into_iter().flatten().collect();
        assert_eq!(flat, direct.data());
    }

    #[test]
    fn single_class_uses_half() {
        let a = RationalTensor::new(vec![1, 1, 1], vec![q(1, 1)]).unwrap();
        let syn = synthesize_layer_detailed(&a).unwrap();
        assert_eq!(syn.weights.q, q(1, 2));
        assert_eq!(layer_forward(&a, &syn.weights).unwrap().data(), &[q(1, 2)]);
    }

    #[test]
    fn uniform_threshold_small_n() {
        assert_eq!(uniform_threshold(1).unwrap(), q(0, 1));
        let t = uniform_threshold(2).unwrap();
        assert_eq!(t.denom(), &(BigInt::one() << 256u32));
        assert!(matches!(uniform_threshold(3), Err(GnnError::ThresholdTooLarge { .. })));
    }
}
