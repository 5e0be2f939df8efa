//! Matrix permanents for the capacity bound.
//!
//! `per([I, B])` for a 2N×2M nonnegative `B` is evaluated three ways: by the
//! definition, by expanding over column subsets of `B`, and by exploiting
//! columns repeated within each subarray, which only needs one representative
//! matrix per count vector.

use std::fmt;

use nalgebra::DMatrix;
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// 12!: the default cap on terms summed by [`permanent_def`].
pub const DEFAULT_TERM_LIMIT: u128 = 479_001_600;

/// Largest row count handled by the row-mask recursions.
pub const MAX_ROWS: usize = 24;

/// Relative tolerance when checking that tied columns agree.
pub const TIE_TOL: f64 = 1e-9;

fn falling(n: u128, k: u128, limit: u128) -> Option<u128> {
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)?;
        if acc > limit {
            return None;
        }
    }
    Some(acc)
}

/// Permanent of an X×Y matrix by its definition: the sum over all injective
/// maps from the shorter side into the longer one.
///
/// ```
/// # use nalgebra::DMatrix;
/// # use xpdmimo_core::permanent::permanent_def;
/// let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
/// assert_eq!(permanent_def(&a).unwrap(), 10.0);
/// ```
pub fn permanent_def(a: &DMatrix<f64>) -> Result<f64> {
    permanent_def_with_limit(a, DEFAULT_TERM_LIMIT)
}

pub fn permanent_def_with_limit(a: &DMatrix<f64>, limit: u128) -> Result<f64> {
    let (x, y) = a.shape();
    let (short, long) = if x <= y { (x, y) } else { (y, x) };
    if short == 0 {
        return Ok(1.0);
    }
    let terms = falling(long as u128, short as u128, limit)
        .ok_or(Error::GuardExceeded { terms: limit.saturating_add(1), limit })?;
    if terms > limit {
        return Err(Error::GuardExceeded { terms, limit });
    }
    let at = |i: usize, j: usize| if x <= y { a[(i, j)] } else { a[(j, i)] };
    let mut used = vec![false; long];
    fn walk(i: usize, short: usize, used: &mut [bool], at: &dyn Fn(usize, usize) -> f64) -> f64 {
        if i == short {
            return 1.0;
        }
        let mut sum = 0.0;
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                sum += at(i, j) * walk(i + 1, short, used, at);
                used[j] = false;
            }
        }
        sum
    }
    Ok(walk(0, short, &mut used, &at))
}

/// Permanent of a tall R×k matrix (k ≤ R) by dynamic programming over the
/// set of rows already matched. Returns the value and the multiplications
/// performed.
fn permanent_tall(rows: usize, cols: &[&[f64]]) -> (f64, u64) {
    let mut scratch = Vec::new();
    permanent_tall_in(rows, cols, &mut scratch)
}

fn permanent_tall_in(rows: usize, cols: &[&[f64]], scratch: &mut Vec<f64>) -> (f64, u64) {
    let k = cols.len();
    if k == 0 {
        return (1.0, 0);
    }
    let full = 1usize << rows;
    scratch.clear();
    scratch.resize(2 * full, 0.0);
    let (mut dp, mut next) = scratch.split_at_mut(full);
    dp[0] = 1.0;
    let mut mults = 0u64;
    for (c, col) in cols.iter().enumerate() {
        next.iter_mut().for_each(|v| *v = 0.0);
        for mask in 0..full {
            if dp[mask] == 0.0 || mask.count_ones() as usize != c {
                continue;
            }
            for (r, &v) in col.iter().enumerate() {
                if mask & (1 << r) == 0 {
                    next[mask | (1 << r)] += dp[mask] * v;
                    mults += 1;
                }
            }
        }
        std::mem::swap(&mut dp, &mut next);
    }
    (dp.iter().sum(), mults)
}

fn check_rows(rows: usize) -> Result<()> {
    if rows > MAX_ROWS {
        return Err(Error::GuardExceeded { terms: rows as u128, limit: MAX_ROWS as u128 });
    }
    Ok(())
}

/// `per([I, B])` as the sum, over every column subset of `B` with at most
/// as many columns as rows, of the permanent of that submatrix.
pub fn permanent_expanded(b: &DMatrix<f64>) -> Result<f64> {
    let (rows, ncols) = b.shape();
    check_rows(rows)?;
    let columns: Vec<&[f64]> = b.as_slice().chunks(rows.max(1)).take(ncols).collect();
    let mut total = 0.0;
    let mut chosen: Vec<&[f64]> = Vec::with_capacity(rows);
    fn subsets<'a>(
        start: usize,
        rows: usize,
        columns: &[&'a [f64]],
        chosen: &mut Vec<&'a [f64]>,
        total: &mut f64,
    ) {
        *total += permanent_tall(rows, chosen).0;
        if chosen.len() == rows {
            return;
        }
        for j in start..columns.len() {
            chosen.push(columns[j]);
            subsets(j + 1, rows, columns, chosen, total);
            chosen.pop();
        }
    }
    subsets(0, rows, &columns, &mut chosen, &mut total);
    Ok(total)
}

/// How many columns of each subarray-polarization block enter a subset.
/// Entries are ordered V blocks for subarrays 1..S, then H blocks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct CountVector {
    pub b: Vec<usize>,
}

impl CountVector {
    pub fn k(&self) -> usize {
        self.b.iter().sum()
    }
}

/// All count vectors of length 2S with entries in `0..=m0` summing to `k`,
/// first entry descending.
pub fn enumerate_count_vectors(s: usize, m0: usize, k: usize) -> Vec<CountVector> {
    let len = 2 * s;
    let mut out = Vec::new();
    let mut cur = vec![0usize; len];
    fn fill(pos: usize, left: usize, m0: usize, cur: &mut Vec<usize>, out: &mut Vec<CountVector>) {
        let len = cur.len();
        if pos == len {
            if left == 0 {
                out.push(CountVector { b: cur.clone() });
            }
            return;
        }
        // remaining slots must be able to absorb what is left
        let rest_cap = (len - pos - 1) * m0;
        let hi = m0.min(left);
        let lo = left.saturating_sub(rest_cap);
        for v in (lo..=hi).rev() {
            cur[pos] = v;
            fill(pos + 1, left - v, m0, cur, out);
        }
        cur[pos] = 0;
    }
    if len == 0 {
        if k == 0 {
            out.push(CountVector { b: vec![] });
        }
        return out;
    }
    fill(0, k, m0, &mut cur, &mut out);
    out
}

pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Number of column subsets sharing count vector `b`.
pub fn multiplicity(b: &CountVector, m0: usize) -> BigUint {
    b.b.iter().map(|&x| binomial(m0, x)).product()
}

/// Precomputed count vectors and multiplicities for a subarray layout.
#[derive(Debug, Clone)]
pub struct StructuredPlan {
    pub s: usize,
    pub m0: usize,
    pub rows: usize,
    terms: Vec<(CountVector, f64)>,
}

impl StructuredPlan {
    pub fn new(s: usize, m0: usize, rows: usize) -> Result<Self> {
        if s == 0 || m0 == 0 {
            return Err(Error::InvalidParameter("S and M0 must be at least 1".into()));
        }
        check_rows(rows)?;
        let mut terms = Vec::new();
        for k in 0..=rows.min(2 * s * m0) {
            for b in enumerate_count_vectors(s, m0, k) {
                let mult = multiplicity(&b, m0).to_f64().unwrap_or(f64::INFINITY);
                terms.push((b, mult));
            }
        }
        Ok(Self { s, m0, rows, terms })
    }

    pub fn num_count_vectors(&self) -> usize {
        self.terms.len()
    }

    /// `f = per([I, B])` where `B` repeats each column of `templates`
    /// (2N×2S) M0 times.
    pub fn evaluate(&self, templates: &DMatrix<f64>) -> Result<StructuredValue> {
        if templates.shape() != (self.rows, 2 * self.s) {
            return Err(Error::Shape(format!(
                "templates are {:?}, expected ({}, {})",
                templates.shape(),
                self.rows,
                2 * self.s
            )));
        }
        let cols: Vec<&[f64]> = templates.as_slice().chunks(self.rows.max(1)).take(2 * self.s).collect();
        let mut value = 0.0;
        let mut mults = 0u64;
        let mut rep: Vec<&[f64]> = Vec::with_capacity(self.rows);
        let mut scratch = Vec::with_capacity(2 << self.rows);
        for (b, mult) in &self.terms {
            rep.clear();
            for (j, &count) in b.b.iter().enumerate() {
                rep.extend(std::iter::repeat_n(cols[j], count));
            }
            let (p, m) = permanent_tall_in(self.rows, &rep, &mut scratch);
            value += mult * p;
            mults += m + 1;
        }
        Ok(StructuredValue { value, multiplications: mults, count_vectors: self.terms.len() })
    }
}

impl StructuredPlan {
    /// Same sum as [`StructuredPlan::evaluate`], accumulated one template at
    /// a time over sets of matched rows: taking `t` of the `m0` copies of a
    /// template into row set `T` contributes `m0!/(m0−t)!·Π_{r∈T} col[r]`.
    pub fn evaluate_factored(&self, templates: &DMatrix<f64>) -> Result<f64> {
        if templates.shape() != (self.rows, 2 * self.s) {
            return Err(Error::Shape(format!(
                "templates are {:?}, expected ({}, {})",
                templates.shape(),
                self.rows,
                2 * self.s
            )));
        }
        let full = 1usize << self.rows;
        let falling: Vec<f64> = (0..=self.rows)
            .map(|t| if t > self.m0 { 0.0 } else { (0..t).map(|i| (self.m0 - i) as f64).product() })
            .collect();
        let mut dp = vec![0.0f64; full];
        let mut next = vec![0.0f64; full];
        let mut weight = vec![0.0f64; full];
        dp[0] = 1.0;
        for col in templates.as_slice().chunks(self.rows.max(1)).take(2 * self.s) {
            weight[0] = 1.0;
            for set in 1..full {
                let low = set.trailing_zeros() as usize;
                weight[set] = weight[set & (set - 1)] * col[low];
            }
            for set in 0..full {
                weight[set] *= falling[set.count_ones() as usize];
            }
            next.copy_from_slice(&dp);
            for mask in 0..full {
                let base = dp[mask];
                if base == 0.0 {
                    continue;
                }
                let free = (full - 1) & !mask;
                let mut sub = free;
                while sub != 0 {
                    next[mask | sub] += base * weight[sub];
                    sub = (sub - 1) & free;
                }
            }
            std::mem::swap(&mut dp, &mut next);
        }
        Ok(dp.iter().sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StructuredValue {
    pub value: f64,
    /// Multiplications actually performed, including one per multiplicity.
    pub multiplications: u64,
    pub count_vectors: usize,
}

/// `per([I, B])` from the 2S distinct column templates of `B`.
pub fn permanent_structured(templates: &DMatrix<f64>, s: usize, m0: usize) -> Result<f64> {
    Ok(StructuredPlan::new(s, m0, templates.nrows())?.evaluate(templates)?.value)
}

/// Extracts the 2S column templates of a 2N×2M matrix whose columns are
/// constant within each subarray-polarization block.
pub fn templates_from_tied(b: &DMatrix<f64>, s: usize, m0: usize) -> Result<DMatrix<f64>> {
    let (rows, cols) = b.shape();
    let m = s * m0;
    if cols != 2 * m {
        return Err(Error::Shape(format!("{cols} columns, expected 2·{s}·{m0} = {}", 2 * m)));
    }
    let mut out = DMatrix::zeros(rows, 2 * s);
    for (p, pol) in ["V", "H"].into_iter().enumerate() {
        for sub in 0..s {
            let first = p * m + sub * m0;
            let reference = b.column(first);
            for j in first + 1..first + m0 {
                let c = b.column(j);
                for r in 0..rows {
                    let (x, y) = (c[r], reference[r]);
                    if (x - y).abs() > TIE_TOL * x.abs().max(y.abs()) {
                        return Err(Error::Untied { subarray: sub, polarization: pol });
                    }
                }
            }
            out.set_column(p * s + sub, &reference);
        }
    }
    Ok(out)
}

/// Multiplication count of the direct evaluation: (2N−1)·Π_{i=1}^{2N}(2M+i).
pub fn complexity_ori(m: usize, n: usize) -> BigUint {
    let base = BigUint::from(2 * m);
    let prod: BigUint = (1..=2 * n).map(|i| &base + BigUint::from(i)).product();
    prod * BigUint::from(2 * n - 1)
}

fn factorial(n: usize) -> BigUint {
    (1..=n).map(BigUint::from).product()
}

fn ratio(num: BigUint, den: BigUint) -> BigRational {
    BigRational::new(num.into(), den.into())
}

/// Multiplication count of the structured evaluation. The per-k subset count it
/// uses is not always an integer, so the sum is exact rational.
pub fn complexity_sim(s: usize, n: usize) -> BigRational {
    let two_n = 2 * n;
    let f2n = factorial(two_n);
    let f2s = factorial(2 * s);
    let mut total = BigRational::zero();
    for k in 0..=two_n {
        let lead = ratio(f2n.clone(), factorial(two_n - k));
        let coef = BigRational::from_integer((k as i64 - 1).into()) * lead + BigRational::one();
        let count = ratio(factorial(2 * s + k), factorial(k + 1) * &f2s);
        total += coef * count;
    }
    total
}

/// (2S+2N)!·(2N−1)/(2S)!.
pub fn complexity_sim_bound(s: usize, n: usize) -> BigUint {
    let prod: BigUint = (2 * s + 1..=2 * s + 2 * n).map(BigUint::from).product();
    prod * BigUint::from(2 * n - 1)
}

/// Subset counts per k: enumerated, and the two printed closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetCounts {
    pub k: usize,
    pub enumerated: usize,
    pub in_text: BigRational,
    pub summation_limit: Option<BigRational>,
}

pub fn subset_counts(s: usize, m0: usize, k: usize) -> SubsetCounts {
    let f2s = factorial(2 * s);
    let in_text = ratio(factorial(2 * s + k), factorial(k + 1) * f2s);
    let summation_limit = (1..=2 * s).contains(&k)
        .then(|| ratio(factorial(2 * s - 1), factorial(2 * s - k) * factorial(2 * k - 1)));
    SubsetCounts { k, enumerated: enumerate_count_vectors(s, m0, k).len(), in_text, summation_limit }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub m0: usize,
    pub n_ori: BigUint,
    pub n_sim: BigRational,
    pub n_sim_bound: BigUint,
    pub ratio: f64,
    /// Multiplications the structured evaluator actually performs.
    pub measured: Option<u64>,
}

impl ComplexityReport {
    pub fn new(s: usize, m0: usize, n: usize) -> Result<Self> {
        if s == 0 || m0 == 0 || n == 0 {
            return Err(Error::InvalidParameter("S, M0 and N must be at least 1".into()));
        }
        let m = s * m0;
        let n_ori = complexity_ori(m, n);
        let n_sim = complexity_sim(s, n);
        let ratio = (BigRational::from_integer(n_ori.clone().into()) / &n_sim).to_f64().unwrap_or(f64::NAN);
        Ok(Self { m, n, s, m0, n_ori, n_sim, n_sim_bound: complexity_sim_bound(s, n), ratio, measured: None })
    }

    /// Adds the measured multiplication count of one structured evaluation.
    pub fn with_measurement(mut self) -> Result<Self> {
        if 2 * self.n <= MAX_ROWS {
            let plan = StructuredPlan::new(self.s, self.m0, 2 * self.n)?;
            let ones = DMatrix::from_element(2 * self.n, 2 * self.s, 1.0);
            self.measured = Some(plan.evaluate(&ones)?.multiplications);
        }
        Ok(self)
    }
}

fn rational_string(r: &BigRational) -> String {
    if r.is_integer() {
        r.to_integer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for ComplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "M={} N={} S={} n_ori={} n_sim={} bound={} ratio={:.6e}",
            self.m,
            self.n,
            self.s,
            self.n_ori,
            rational_string(&self.n_sim),
            self.n_sim_bound,
            self.ratio
        )
    }
}

impl Serialize for ComplexityReport {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = ser.serialize_struct("ComplexityReport", 9)?;
        st.serialize_field("m", &self.m)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("s", &self.s)?;
        st.serialize_field("m0", &self.m0)?;
        st.serialize_field("n_ori", &self.n_ori.to_string())?;
        st.serialize_field("n_sim", &rational_string(&self.n_sim))?;
        st.serialize_field("n_sim_bound", &self.n_sim_bound.to_string())?;
        st.serialize_field("ratio", &self.ratio)?;
        st.serialize_field("measured", &self.measured)?;
        st.end()
    }
}

/// `[I, B]` for a given `B`.
pub fn identity_augmented(b: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = b.nrows();
    let mut out = DMatrix::zeros(rows, rows + b.ncols());
    out.view_mut((0, 0), (rows, rows)).fill_with_identity();
    out.view_mut((0, rows), (rows, b.ncols())).copy_from(b);
    out
}
