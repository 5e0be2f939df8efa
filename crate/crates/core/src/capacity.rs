//! Ergodic capacity by Monte Carlo and its permanent-based upper bound.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_channel, ChannelStats, Complex64, FadingParams};
use crate::error::{Error, Result};
use crate::optimizer::PowerAllocation;
use crate::permanent::{StructuredPlan, StructuredValue};

/// Smallest eigenvalue of `Q` tolerated before it is rejected as not PSD.
pub const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub mean_bits_per_symbol: f64,
    pub std_error: f64,
    pub trials: u64,
}

fn is_diagonal(q: &DMatrix<f64>) -> bool {
    (0..q.nrows()).all(|i| (0..q.ncols()).all(|j| i == j || q[(i, j)] == 0.0))
}

fn check_psd(q: &DMatrix<f64>) -> Result<()> {
    if !q.is_square() {
        return Err(Error::Shape(format!("covariance is {:?}", q.shape())));
    }
    let min = if is_diagonal(q) {
        q.diagonal().min()
    } else {
        SymmetricEigen::new(q.clone()).eigenvalues.min()
    };
    if min < -PSD_TOL {
        return Err(Error::NotPsd(min));
    }
    Ok(())
}

fn log2_det_identity_plus(g: &DMatrix<Complex64>, q: &DMatrix<f64>, gamma: f64) -> f64 {
    let mut a = if is_diagonal(q) {
        let mut gs = g.clone();
        for (j, mut col) in gs.column_iter_mut().enumerate() {
            col.scale_mut((gamma * q[(j, j)]).max(0.0).sqrt());
        }
        &gs * gs.adjoint()
    } else {
        let qc = q.map(|x| Complex64::new(x * gamma, 0.0));
        g * qc * g.adjoint()
    };
    for i in 0..a.nrows() {
        a[(i, i)] += Complex64::new(1.0, 0.0);
    }
    // enforce exact Hermitian symmetry before factorising
    let a = (&a + a.adjoint()).map(|z| z * 0.5);
    match a.clone().cholesky() {
        Some(ch) => {
            let l = ch.l_dirty();
            2.0 * (0..a.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>() / std::f64::consts::LN_2
        }
        None => SymmetricEigen::new(a)
            .eigenvalues
            .iter()
            .map(|&e| e.max(1e-12).log2())
            .sum(),
    }
}

/// `log2 det(I + γ G Q Gᴴ)`.
pub fn instantaneous_capacity(g: &DMatrix<Complex64>, q: &DMatrix<f64>, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("SNR must be non-negative, got {gamma}")));
    }
    check_psd(q)?;
    if g.ncols() != q.nrows() {
        return Err(Error::Shape(format!("channel has {} columns, covariance is {}", g.ncols(), q.nrows())));
    }
    Ok(log2_det_identity_plus(g, q, gamma).max(0.0))
}

/// Mean and standard error of the instantaneous capacity over `trials`
/// channel draws. Trials run in parallel; the reduction is in trial order.
pub fn ergodic_capacity_mc(
    stats: &ChannelStats,
    q: &DMatrix<f64>,
    gamma: f64,
    trials: u64,
    fading: &FadingParams,
) -> Result<CapacityEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("SNR must be non-negative, got {gamma}")));
    }
    check_psd(q)?;
    if q.nrows() != stats.omega().ncols() {
        return Err(Error::Shape(format!("covariance is {} but the channel has {} inputs", q.nrows(), stats.omega().ncols())));
    }
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| log2_det_identity_plus(&sample_channel(stats, fading, t), q, gamma).max(0.0))
        .collect();
    let n = trials as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let std_error = if trials > 1 {
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(CapacityEstimate { mean_bits_per_symbol: mean, std_error, trials })
}

/// Evaluates `log2 per([I, γΩΛ])` for many allocations on fixed tied stats.
#[derive(Debug, Clone)]
pub struct BoundEvaluator {
    templates: DMatrix<f64>,
    plan: StructuredPlan,
    gamma: f64,
}

impl BoundEvaluator {
    pub fn new(stats: &ChannelStats, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("SNR must be finite and non-negative, got {gamma}")));
        }
        let templates = stats.templates()?;
        let sub = stats.subarrays();
        let plan = StructuredPlan::new(sub.s, sub.m0, templates.nrows())?;
        Ok(Self { templates, plan, gamma })
    }

    pub fn num_variables(&self) -> usize {
        self.templates.ncols()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn scaled(&self, lambda: &[f64]) -> Result<DMatrix<f64>> {
        if lambda.len() != self.num_variables() {
            return Err(Error::Shape(format!("{} powers for {} blocks", lambda.len(), self.num_variables())));
        }
        let mut t = self.templates.clone();
        for (j, &x) in lambda.iter().enumerate() {
            t.column_mut(j).scale_mut(self.gamma * x.max(0.0));
        }
        Ok(t)
    }

    /// `f(Λ)` for per-block powers ordered V then H. Negative entries are
    /// treated as zero.
    pub fn f(&self, lambda: &[f64]) -> Result<f64> {
        self.plan.evaluate_factored(&self.scaled(lambda)?)
    }

    /// `f(Λ)` by the per-count-vector sum, with its multiplication count.
    pub fn f_by_count_vectors(&self, lambda: &[f64]) -> Result<StructuredValue> {
        self.plan.evaluate(&self.scaled(lambda)?)
    }

    pub fn log2_f(&self, lambda: &[f64]) -> Result<f64> {
        let f = self.f(lambda)?;
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::NonFinite(format!("permanent {f} at allocation {lambda:?}")));
        }
        Ok(f.log2())
    }
}

/// Capacity upper bound for a subarray power allocation on tied stats.
pub fn capacity_upper_bound(stats: &ChannelStats, allocation: &PowerAllocation, gamma: f64) -> Result<f64> {
    if allocation.subarrays() != stats.subarrays() {
        return Err(Error::Shape(format!(
            "allocation is for {:?}, stats for {:?}",
            allocation.subarrays(),
            stats.subarrays()
        )));
    }
    let f = BoundEvaluator::new(stats, gamma)?.f_by_count_vectors(&allocation.to_vec())?.value;
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::NonFinite(format!("permanent {f}")));
    }
    Ok(f.log2())
}
