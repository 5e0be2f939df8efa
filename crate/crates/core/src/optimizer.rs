//! Transmit covariance optimisation.
//!
//! Far users get the scalar covariance. Near users get a diagonal covariance
//! with one power level per subarray and polarization, found by maximising
//! the capacity bound under a quadratic penalty that grows each outer round.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{xpd_distance_closed, BoundaryThresholds, ClosedFormDistance};
use crate::capacity::BoundEvaluator;
use crate::channel::{build_channel_stats, ChannelStats, SubarrayConfig};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, ClusterSet, SphericalPosition};
use crate::polarization::{PathlossParams, XpdParams};

pub const ARMIJO_C: f64 = 1e-4;
pub const LINE_SEARCH_SHRINK: f64 = 0.5;
pub const LINE_SEARCH_HALVINGS: usize = 60;
pub const MAX_INNER_ITERATIONS: usize = 5000;

/// One power level per subarray and polarization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub s: usize,
    pub m0: usize,
    pub lambda_v: Vec<f64>,
    pub lambda_h: Vec<f64>,
}

impl PowerAllocation {
    pub fn uniform(sub: SubarrayConfig, value: f64) -> Self {
        Self { s: sub.s, m0: sub.m0, lambda_v: vec![value; sub.s], lambda_h: vec![value; sub.s] }
    }

    /// From a 2S vector ordered V blocks then H blocks.
    pub fn from_vec(sub: SubarrayConfig, x: &[f64]) -> Result<Self> {
        if x.len() != 2 * sub.s {
            return Err(Error::Shape(format!("{} powers for 2·{} blocks", x.len(), sub.s)));
        }
        Ok(Self { s: sub.s, m0: sub.m0, lambda_v: x[..sub.s].to_vec(), lambda_h: x[sub.s..].to_vec() })
    }

    pub fn subarrays(&self) -> SubarrayConfig {
        SubarrayConfig { s: self.s, m0: self.m0 }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.lambda_v.iter().chain(&self.lambda_h).copied().collect()
    }

    /// Per-antenna powers, V antennas then H antennas.
    pub fn expand(&self) -> Vec<f64> {
        self.to_vec().into_iter().flat_map(|x| std::iter::repeat_n(x, self.m0)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.m0 as f64 * self.to_vec().iter().sum::<f64>()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.expand()))
    }

    /// Total power of each subarray, V plus H.
    pub fn per_subarray(&self) -> Vec<f64> {
        self.lambda_v.iter().zip(&self.lambda_h).map(|(v, h)| self.m0 as f64 * (v + h)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    pub mu_0: f64,
    pub growth: f64,
    pub max_outer: usize,
    pub inner_tol: f64,
    pub feas_tol: f64,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        Self { mu_0: 10.0, growth: 10.0, max_outer: 8, inner_tol: 1e-8, feas_tol: 1e-6 }
    }
}

impl PenaltySchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_0 > 0.0) || !(self.growth > 1.0) || self.max_outer == 0 {
            return Err(Error::InvalidParameter(format!(
                "penalty schedule needs mu_0 > 0, growth > 1, max_outer ≥ 1; got {self:?}"
            )));
        }
        if !(self.inner_tol > 0.0 && self.feas_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Target for the sum of the 2S block powers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// 1/M0, so the covariance has unit trace.
    #[default]
    UnitTrace,
    /// 1/S with a 1/(2S) starting point.
    InverseS,
}

impl Budget {
    pub fn value(self, sub: SubarrayConfig) -> f64 {
        match self {
            Budget::UnitTrace => 1.0 / sub.m0 as f64,
            Budget::InverseS => 1.0 / sub.s as f64,
        }
    }

    pub fn initial(self, sub: SubarrayConfig) -> f64 {
        match self {
            Budget::UnitTrace => 1.0 / (2 * sub.num_elements()) as f64,
            Budget::InverseS => 1.0 / (2 * sub.s) as f64,
        }
    }
}

/// `(1/(2M))·I` of size 2M.
pub fn scalar_covariance(m: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal_element(2 * m, 2 * m, 1.0 / (2 * m) as f64)
}

pub fn penalty_value(x: &[f64], mu: f64, q0: f64, budget: f64) -> f64 {
    let gap = x.iter().sum::<f64>() - budget;
    let cap: f64 = x.iter().map(|v| (v - q0).max(0.0).powi(2)).sum();
    let neg: f64 = x.iter().map(|v| (-v).max(0.0).powi(2)).sum();
    mu * (gap * gap + cap + neg)
}

/// Largest of the budget gap, cap excess and negativity.
pub fn violation(x: &[f64], q0: f64, budget: f64) -> f64 {
    let gap = (x.iter().sum::<f64>() - budget).abs();
    x.iter().fold(gap, |acc, v| acc.max(v - q0).max(-v))
}

/// `log2 f(Λ)` minus the penalty; maximised.
pub fn penalized_objective(x: &[f64], eval: &BoundEvaluator, mu: f64, q0: f64, budget: f64) -> Result<f64> {
    Ok(eval.log2_f(x)? - penalty_value(x, mu, q0, budget))
}

/// Central-difference gradient with step `max(1e-7, 1e-6·|x_i|)`.
pub fn gradient<F>(f: &F, x: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let h = (1e-6 * x[i].abs()).max(1e-7);
            let mut p = x.to_vec();
            p[i] = x[i] + h;
            let up = f(&p)?;
            p[i] = x[i] - h;
            let down = f(&p)?;
            if !(up.is_finite() && down.is_finite()) {
                return Err(Error::NonFinite(format!("objective probe around coordinate {i}")));
            }
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// The line search failed to find an ascent step.
    pub stalled: bool,
}

/// Gradient ascent with Armijo backtracking.
pub fn solve_unconstrained<F>(f: &F, init: &[f64], schedule: &PenaltySchedule) -> Result<InnerResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let mut x = init.to_vec();
    let mut fx = f(&x)?;
    if !fx.is_finite() {
        return Err(Error::NonFinite(format!("objective at {x:?}")));
    }
    let mut iterations = 0;
    let mut stalled = false;
    while iterations < MAX_INNER_ITERATIONS {
        let g = gradient(f, &x)?;
        let gg: f64 = g.iter().map(|v| v * v).sum();
        if gg == 0.0 {
            break;
        }
        let mut t = 1.0;
        let mut step = None;
        for _ in 0..=LINE_SEARCH_HALVINGS {
            let xn: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + t * b).collect();
            let fxn = f(&xn)?;
            if fxn.is_finite() && fxn >= fx + ARMIJO_C * t * gg {
                step = Some((xn, fxn));
                break;
            }
            t *= LINE_SEARCH_SHRINK;
        }
        let Some((xn, fxn)) = step else {
            stalled = true;
            break;
        };
        let delta = fxn - fx;
        x = xn;
        fx = fxn;
        iterations += 1;
        if delta.abs() < schedule.inner_tol {
            break;
        }
    }
    Ok(InnerResult { x, objective: fx, iterations, stalled })
}

/// Euclidean projection onto `{0 ≤ x ≤ q0, Σx = budget}`.
pub fn project_capped_simplex(y: &[f64], q0: f64, budget: f64) -> Result<Vec<f64>> {
    let n = y.len() as f64;
    if !(budget >= 0.0 && q0 * n >= budget) {
        return Err(Error::InfeasibleCap(q0 * n / budget));
    }
    let sum_at = |tau: f64| y.iter().map(|v| (v - tau).clamp(0.0, q0)).sum::<f64>();
    let mut lo = y.iter().copied().fold(f64::INFINITY, f64::min) - q0;
    let mut hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sum_at(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let hi_sum = sum_at(hi);
    let lo_sum = sum_at(lo);
    let tau = if (hi_sum - budget).abs() <= (lo_sum - budget).abs() { hi } else { lo };
    Ok(y.iter().map(|v| (v - tau).clamp(0.0, q0)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub outer: usize,
    pub mu: f64,
    /// `log2 f` at the penalised iterate.
    pub objective: f64,
    pub violation: f64,
    pub inner_iterations: usize,
    pub stalled: bool,
    /// `log2 f` after projecting the iterate onto the feasible set.
    pub projected_objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    FarField,
    NearField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceResult {
    pub branch: Branch,
    /// Diagonal of `Q`; `U = I`.
    pub q_diagonal: Vec<f64>,
    pub allocation: PowerAllocation,
    pub capacity_bound: f64,
    pub scalar_capacity_bound: f64,
    pub iterations: Vec<OuterRecord>,
    pub converged: bool,
    pub warning: Option<String>,
    pub r_u_th: Option<f64>,
}

impl CovarianceResult {
    pub fn q(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.q_diagonal.clone()))
    }

    pub fn trace(&self) -> f64 {
        self.q_diagonal.iter().sum()
    }
}

fn check_cap(q0: f64, m: usize) -> Result<()> {
    let cap = q0 * (2 * m) as f64;
    if !(cap >= 1.0 - 1e-12) {
        return Err(Error::InfeasibleCap(cap));
    }
    Ok(())
}

/// Penalty-method power allocation on tied statistics, without the far-field
/// shortcut.
pub fn allocate_power(
    stats: &ChannelStats,
    gamma: f64,
    q0: f64,
    schedule: &PenaltySchedule,
    budget: Budget,
) -> Result<CovarianceResult> {
    schedule.validate()?;
    let sub = stats.subarrays();
    check_cap(q0, sub.num_elements())?;
    let eval = BoundEvaluator::new(stats, gamma)?;
    let b = budget.value(sub);
    let nvar = 2 * sub.s;
    let scalar = 1.0 / (2 * sub.num_elements()) as f64;
    let scalar_bound = eval.log2_f(&vec![scalar; nvar])?;

    let mut x = vec![budget.initial(sub); nvar];
    let mut best: Option<(Vec<f64>, f64)> = None;
    if violation(&x, q0, b) <= 1e-12 {
        best = Some((x.clone(), eval.log2_f(&x)?));
    }
    let mut prev = eval.log2_f(&x)?;
    let mut records = Vec::new();
    let mut converged = false;
    let mut mu = schedule.mu_0;
    for outer in 0..schedule.max_outer {
        let objective = |v: &[f64]| penalized_objective(v, &eval, mu, q0, b);
        let inner = solve_unconstrained(&objective, &x, schedule)?;
        x = inner.x;
        let value = eval.log2_f(&x)?;
        let viol = violation(&x, q0, b);
        let projected = project_capped_simplex(&x, q0, b)?;
        let projected_value = eval.log2_f(&projected)?;
        if best.as_ref().is_none_or(|(_, v)| projected_value > *v) {
            best = Some((projected, projected_value));
        }
        records.push(OuterRecord {
            outer,
            mu,
            objective: value,
            violation: viol,
            inner_iterations: inner.iterations,
            stalled: inner.stalled,
            projected_objective: projected_value,
        });
        if (value - prev).abs() < schedule.inner_tol && viol < schedule.feas_tol {
            converged = true;
            break;
        }
        prev = value;
        mu *= schedule.growth;
    }
    let (x, value) = best.expect("at least one outer round ran");
    let allocation = PowerAllocation::from_vec(sub, &x)?;
    Ok(CovarianceResult {
        branch: Branch::NearField,
        q_diagonal: allocation.expand(),
        allocation,
        capacity_bound: value,
        scalar_capacity_bound: scalar_bound,
        iterations: records,
        converged,
        warning: (!converged).then(|| {
            format!("penalty loop did not meet both stopping criteria in {} rounds; best feasible point returned", schedule.max_outer)
        }),
        r_u_th: None,
    })
}

/// Everything needed to build channel statistics for one user.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub geom: ArrayGeometry,
    pub user: SphericalPosition,
    pub clusters: ClusterSet,
    /// Cluster range over user range, for the closed-form distance.
    pub c_ratios: Vec<f64>,
    pub xpd: XpdParams,
    pub pathloss: PathlossParams,
    pub num_ue_antennas: usize,
    pub subarrays: SubarrayConfig,
}

impl Scenario {
    pub fn stats(&self) -> Result<ChannelStats> {
        build_channel_stats(
            &self.geom,
            &self.user,
            &self.clusters,
            &self.xpd,
            &self.pathloss,
            self.num_ue_antennas,
            self.subarrays,
        )
    }

    pub fn threshold(&self, thresholds: &BoundaryThresholds) -> Result<ClosedFormDistance> {
        xpd_distance_closed(&self.geom, &self.user, &self.clusters, &self.c_ratios, &self.xpd, thresholds)
    }
}

/// Scalar covariance beyond the non-uniform XPD distance, penalty-method
/// allocation inside it.
pub fn optimize_covariance(
    scenario: &Scenario,
    thresholds: &BoundaryThresholds,
    gamma: f64,
    q0: f64,
    schedule: &PenaltySchedule,
    budget: Budget,
) -> Result<CovarianceResult> {
    let sub = scenario.subarrays;
    let m = sub.num_elements();
    check_cap(q0, m)?;
    let r_th = scenario.threshold(thresholds)?.r_u_th;
    let stats = scenario.stats()?.tie_to_subarrays();
    if scenario.user.r > r_th {
        let scalar = 1.0 / (2 * m) as f64;
        let allocation = PowerAllocation::uniform(sub, scalar);
        let bound = BoundEvaluator::new(&stats, gamma)?.log2_f(&allocation.to_vec())?;
        return Ok(CovarianceResult {
            branch: Branch::FarField,
            q_diagonal: scalar_covariance(m).diagonal().as_slice().to_vec(),
            allocation,
            capacity_bound: bound,
            scalar_capacity_bound: bound,
            iterations: Vec::new(),
            converged: true,
            warning: None,
            r_u_th: Some(r_th),
        });
    }
    let mut out = allocate_power(&stats, gamma, q0, schedule, budget)?;
    out.r_u_th = Some(r_th);
    Ok(out)
}
