//! Near/far-field boundaries induced by non-uniform XPD across the array.
//!
//! Closed forms follow the diagonal-endpoint argument: the extreme values of
//! the distance term sit at the ends of the array diagonal (or at the
//! projection of the user onto it), and the AoD term is linearised around
//! the centre element. The numeric search evaluates the max/min ratios over
//! every element directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{delta_l, delta_u, ArrayGeometry, Cartesian, ClusterSet, SphericalPosition};
use crate::polarization::{chi2_raw, element_aods, XpdParams};

/// Step for the central difference of the AoD term.
pub const CHI2_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryThresholds {
    pub gamma1: f64,
    pub gamma2: f64,
    pub power_ratio: f64,
}

impl BoundaryThresholds {
    pub fn new(gamma1: f64, gamma2: f64, power_ratio: f64) -> Result<Self> {
        for (name, v) in [("gamma1", gamma1), ("gamma2", gamma2), ("power_ratio", power_ratio)] {
            if !(v > 1.0) {
                return Err(Error::InvalidParameter(format!("{name} threshold must exceed 1, got {v}")));
            }
        }
        Ok(Self { gamma1, gamma2, power_ratio })
    }
}

/// Which geometric case produced a distance threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Extremes at the two diagonal ends.
    Endpoint,
    /// Minimum at the user's projection onto the diagonal.
    Projection,
    /// Exactly on the case boundary; the larger branch value is reported.
    Tie,
    /// Projection branch with a vanishing denominator.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub branch: Branch,
}

/// Shared two-case solve: the max/min distance ratio raised to `exponent`
/// reaches `ratio_th`. `endpoint` supplies the first case's value, which
/// differs between the linearised XPD form and the exact power form.
fn two_case_distance(
    diag: f64,
    delta: f64,
    g: f64,
    endpoint: impl Fn() -> f64,
) -> Threshold {
    let switch = (1.0 - 4.0 / (g + 3.0)).sqrt();
    let projection = || {
        let den = 2.0 * (1.0 - g + g * delta * delta);
        if den == 0.0 {
            return None;
        }
        let num = -diag * delta - ((g - 1.0) * diag * diag * (1.0 - delta * delta)).sqrt();
        Some(num / den)
    };
    let indicator = delta - switch;
    if indicator > 0.0 {
        Threshold { value: endpoint(), branch: Branch::Endpoint }
    } else if indicator < 0.0 {
        match projection() {
            Some(v) => Threshold { value: v, branch: Branch::Projection },
            None => Threshold { value: 0.0, branch: Branch::Degenerate },
        }
    } else {
        let e = endpoint();
        let p = projection().unwrap_or(0.0);
        Threshold { value: e.max(p), branch: Branch::Tie }
    }
}

/// Distance below which the distance-dependent XPD term varies by at least
/// `gamma1` across the array.
pub fn r1_threshold(diag: f64, delta_u: f64, eta: f64, gamma1: f64) -> Result<Threshold> {
    if !(diag > 0.0) {
        return Err(Error::InvalidParameter(format!("diagonal must be positive, got {diag}")));
    }
    if !(0.0..=1.0 + 1e-12).contains(&delta_u) {
        return Err(Error::InvalidParameter(format!("delta_u must lie in [0, 1], got {delta_u}")));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    if !(gamma1 > 1.0) {
        return Err(Error::InvalidParameter(format!("gamma1 must exceed 1, got {gamma1}")));
    }
    let delta = delta_u.min(1.0);
    let g = gamma1.powf(2.0 / eta);
    Ok(two_case_distance(diag, delta, g, || {
        (gamma1 + 1.0) / (gamma1 - 1.0) * eta * diag * delta / 2.0
    }))
}

/// Partial derivatives of the normalised AoD term with respect to each
/// cluster azimuth, at the azimuths `phi0`. Central differences.
pub fn chi2_gradient(phi0: &[f64], clusters: &ClusterSet) -> Result<Vec<f64>> {
    let base = chi2_raw(phi0, clusters)?;
    let mut probe = phi0.to_vec();
    (0..phi0.len())
        .map(|l| {
            probe[l] = phi0[l] + CHI2_FD_STEP;
            let up = chi2_raw(&probe, clusters)?;
            probe[l] = phi0[l] - CHI2_FD_STEP;
            let down = chi2_raw(&probe, clusters)?;
            probe[l] = phi0[l];
            Ok((up - down) / (2.0 * CHI2_FD_STEP) / base)
        })
        .collect()
}

/// Cluster-to-array range divided by the user range, for each cluster.
pub fn c_ratios_at(clusters: &ClusterSet, r_u: f64) -> Vec<f64> {
    clusters.iter().map(|c| c.position.norm() / r_u).collect()
}

/// AoD-dependent part of the closed-form XPD distance.
pub fn chi2_distance_term(
    diag: f64,
    k: f64,
    clusters: &ClusterSet,
    c_ratios: &[f64],
    gamma2: f64,
) -> Result<f64> {
    if c_ratios.len() != clusters.len() {
        return Err(Error::Shape(format!("{} distance ratios for {} clusters", c_ratios.len(), clusters.len())));
    }
    let sph: Vec<SphericalPosition> = clusters.iter().map(|c| c.spherical()).collect();
    let phi0: Vec<f64> = sph.iter().map(|s| s.phi).collect();
    let grad = chi2_gradient(&phi0, clusters)?;
    let mut sum = 0.0;
    for (l, ((s, &c), d)) in sph.iter().zip(c_ratios).zip(&grad).enumerate() {
        if !(c > 0.0) {
            return Err(Error::InvalidCluster { index: l, reason: format!("distance ratio c = {c} must be positive") });
        }
        let st = s.theta.sin();
        if st.abs() < 1e-12 {
            return Err(Error::InvalidCluster { index: l, reason: "cluster lies on the array normal".into() });
        }
        sum += d * (k.atan() + s.phi).sin() * diag / (2.0 * c * st);
    }
    Ok((gamma2 + 1.0) / (gamma2 - 1.0) * sum.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormDistance {
    pub r_u_th: f64,
    pub r_1_th: f64,
    pub r1_branch: Branch,
    pub chi2_term: f64,
}

/// Closed-form non-uniform XPD distance: the larger of the distance-term
/// and AoD-term thresholds.
pub fn xpd_distance_closed(
    geom: &ArrayGeometry,
    user_dir: &SphericalPosition,
    clusters: &ClusterSet,
    c_ratios: &[f64],
    params: &XpdParams,
    thresholds: &BoundaryThresholds,
) -> Result<ClosedFormDistance> {
    let k = geom.aspect_ratio();
    let diag = geom.diagonal();
    let r1 = r1_threshold(diag, delta_u(user_dir, k), params.eta, thresholds.gamma1)?;
    let chi2_term = chi2_distance_term(diag, k, clusters, c_ratios, thresholds.gamma2)?;
    Ok(ClosedFormDistance {
        r_u_th: r1.value.max(chi2_term),
        r_1_th: r1.value,
        r1_branch: r1.branch,
        chi2_term,
    })
}

/// How the two ratio conditions are combined in the numeric search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    /// Either ratio reaches its threshold; consistent with taking the larger
    /// of the two closed-form terms.
    #[default]
    Either,
    /// Both ratios reach their thresholds.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub max_iter: usize,
    pub abs_tol: f64,
    pub scan_points: usize,
    pub combine: Combine,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { r_min: 0.5, r_max: 2000.0, max_iter: 60, abs_tol: 1e-3, scan_points: 128, combine: Combine::Either }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchOutcome {
    Found,
    /// Conditions hold nowhere in the bracket.
    Empty,
    /// Conditions hold at the top of the bracket.
    UnboundedBracket,
    /// The predicate flipped more than once on the scan; the largest scan
    /// point satisfying it is returned.
    NonMonotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericDistance {
    pub r: f64,
    pub outcome: SearchOutcome,
    pub evaluations: usize,
}

/// Max/min ratios of the two XPD components over all elements with the user
/// at range `r` and clusters at `c[l] * r`.
pub fn component_ratios(
    geom: &ArrayGeometry,
    user_dir: &SphericalPosition,
    clusters: &ClusterSet,
    c_ratios: &[f64],
    eta: f64,
    r: f64,
) -> Result<(f64, f64)> {
    let user: Cartesian = user_dir.with_range(r).to_cartesian();
    let scaled = clusters.scaled_to(c_ratios, r)?;
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
    let (mut cmin, mut cmax) = (f64::INFINITY, 0.0f64);
    for m in 0..geom.num_elements() {
        let d = geom.distance_to_point(m, &user)?;
        dmin = dmin.min(d);
        dmax = dmax.max(d);
        // the normaliser cancels in the ratio
        let c = chi2_raw(&element_aods(geom, m, &scaled)?, &scaled)?;
        cmin = cmin.min(c);
        cmax = cmax.max(c);
    }
    Ok(((dmax / dmin).powf(eta), cmax / cmin))
}

/// Largest user range in the bracket at which the ratio conditions hold,
/// by scan plus bisection.
pub fn xpd_distance_numeric(
    geom: &ArrayGeometry,
    user_dir: &SphericalPosition,
    clusters: &ClusterSet,
    c_ratios: &[f64],
    params: &XpdParams,
    thresholds: &BoundaryThresholds,
    cfg: &SearchConfig,
) -> Result<NumericDistance> {
    if !(cfg.r_min > 0.0 && cfg.r_max > cfg.r_min) {
        return Err(Error::InvalidParameter(format!("bad bracket [{}, {}]", cfg.r_min, cfg.r_max)));
    }
    let mut evaluations = 0usize;
    let mut holds = |r: f64| -> Result<bool> {
        evaluations += 1;
        let (q1, q2) = component_ratios(geom, user_dir, clusters, c_ratios, params.eta, r)?;
        let a = q1 >= thresholds.gamma1;
        let b = q2 >= thresholds.gamma2;
        Ok(match cfg.combine {
            Combine::Either => a || b,
            Combine::Both => a && b,
        })
    };

    let n = cfg.scan_points.max(2);
    let ratio = (cfg.r_max / cfg.r_min).ln();
    let grid: Vec<f64> = (0..n)
        .map(|i| cfg.r_min * (ratio * i as f64 / (n - 1) as f64).exp())
        .collect();
    let mut flags = Vec::with_capacity(n);
    for &r in &grid {
        flags.push(holds(r)?);
    }
    let flips = flags.windows(2).filter(|w| w[0] != w[1]).count();
    let last_true = flags.iter().rposition(|&f| f);

    let Some(idx) = last_true else {
        return Ok(NumericDistance { r: cfg.r_min, outcome: SearchOutcome::Empty, evaluations });
    };
    if idx == n - 1 {
        return Ok(NumericDistance { r: cfg.r_max, outcome: SearchOutcome::UnboundedBracket, evaluations });
    }
    if flips > 1 {
        return Ok(NumericDistance { r: grid[idx], outcome: SearchOutcome::NonMonotone, evaluations });
    }

    let (mut lo, mut hi) = (grid[idx], grid[idx + 1]);
    for _ in 0..cfg.max_iter {
        if hi - lo <= cfg.abs_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if holds(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(NumericDistance { r: lo, outcome: SearchOutcome::Found, evaluations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApertureReport {
    pub a_th: f64,
    /// Distance-term requirement, linear in `r_u` as printed.
    pub chi1_term: f64,
    /// AoD-term requirement, squared as printed.
    pub chi2_term: f64,
    pub b: f64,
    pub delta_u: f64,
}

/// Linearisation slope of the AoD term along the diagonal.
pub fn aperture_slope(clusters: &ClusterSet, k: f64) -> Result<f64> {
    let sph: Vec<SphericalPosition> = clusters.iter().map(|c| c.spherical()).collect();
    let phi0: Vec<f64> = sph.iter().map(|s| s.phi).collect();
    // derivative of the unnormalised term; paired with the unnormalised value
    let base = chi2_raw(&phi0, clusters)?;
    let grad = chi2_gradient(&phi0, clusters)?;
    let mut sum = 0.0;
    for (l, ((cl, s), g)) in clusters.iter().zip(&sph).zip(&grad).enumerate() {
        let dl = delta_l(cl, k);
        if dl == 0.0 {
            return Err(Error::InvalidCluster { index: l, reason: "cluster direction orthogonal to the diagonal".into() });
        }
        let st = s.theta.sin();
        if st.abs() < 1e-12 {
            return Err(Error::InvalidCluster { index: l, reason: "cluster lies on the array normal".into() });
        }
        sum += g * base * (-dl * (1.0 - dl * dl).max(0.0).sqrt()) / (dl.abs() * s.r * st);
    }
    Ok(sum.abs())
}

/// Smallest aperture at which the XPD components vary by the thresholds,
/// for a user at `user` and clusters at their given positions.
pub fn xpd_aperture(
    user: &SphericalPosition,
    clusters: &ClusterSet,
    params: &XpdParams,
    thresholds: &BoundaryThresholds,
    k: f64,
) -> Result<ApertureReport> {
    if !(k >= 0.0) {
        return Err(Error::InvalidParameter(format!("aspect ratio must be non-negative, got {k}")));
    }
    let shape = k / (1.0 + k * k);
    let du = delta_u(user, k);
    let g1 = thresholds.gamma1;
    let g2 = thresholds.gamma2;
    let chi1_term = if du > 0.0 && params.eta > 0.0 {
        shape * (2.0 * user.r / (params.eta * du) * (1.0 - 2.0 / (g1 + 1.0)))
    } else {
        f64::INFINITY
    };
    let phi0: Vec<f64> = clusters.iter().map(|c| c.spherical().phi).collect();
    let chi2_centre = chi2_raw(&phi0, clusters)?;
    let b = aperture_slope(clusters, k)?;
    let chi2_term = if b > 0.0 {
        shape * (2.0 * chi2_centre * (g2 - 1.0) / ((g2 + 1.0) * b)).powi(2)
    } else {
        f64::INFINITY
    };
    Ok(ApertureReport { a_th: chi1_term.max(chi2_term), chi1_term, chi2_term, b, delta_u: du })
}

/// Classic far-field distance 2D^2/lambda.
pub fn rayleigh_distance(diag: f64, wavelength: f64) -> f64 {
    2.0 * diag * diag / wavelength
}

/// Distance below which the pathloss max/min ratio across the array reaches
/// `power_ratio`, using the same two-case diagonal argument as the XPD
/// distance term with the exact endpoint ratio.
pub fn uniform_power_distance(diag: f64, delta_u: f64, alpha: f64, power_ratio: f64) -> Result<Threshold> {
    if !(diag > 0.0 && alpha > 0.0) {
        return Err(Error::InvalidParameter("diagonal and alpha must be positive".into()));
    }
    if !(power_ratio > 1.0) {
        return Err(Error::InvalidParameter(format!("power ratio threshold must exceed 1, got {power_ratio}")));
    }
    let delta = delta_u.clamp(0.0, 1.0);
    let rho = power_ratio.powf(1.0 / alpha);
    Ok(two_case_distance(diag, delta, rho * rho, || diag * delta / 2.0 * (rho + 1.0) / (rho - 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub user: SphericalPosition,
    pub diagonal: f64,
    pub aspect_ratio: f64,
    pub delta_u: f64,
    pub r_u_th: f64,
    pub r_1_th: f64,
    pub r1_branch: Branch,
    pub chi2_component: f64,
    pub aperture: ApertureReport,
    pub rayleigh: f64,
    pub uniform_power: f64,
    pub uniform_power_branch: Branch,
    pub c_ratios: Vec<f64>,
    pub params: XpdParams,
    pub thresholds: BoundaryThresholds,
}

/// Every closed-form boundary quantity for one user position.
pub fn boundary_report(
    geom: &ArrayGeometry,
    user: &SphericalPosition,
    clusters: &ClusterSet,
    c_ratios: &[f64],
    params: &XpdParams,
    alpha: f64,
    thresholds: &BoundaryThresholds,
) -> Result<BoundaryReport> {
    let k = geom.aspect_ratio();
    let diag = geom.diagonal();
    let du = delta_u(user, k);
    let closed = xpd_distance_closed(geom, user, clusters, c_ratios, params, thresholds)?;
    let aperture = xpd_aperture(user, clusters, params, thresholds, k)?;
    let up = uniform_power_distance(diag, du, alpha, thresholds.power_ratio)?;
    Ok(BoundaryReport {
        user: *user,
        diagonal: diag,
        aspect_ratio: k,
        delta_u: du,
        r_u_th: closed.r_u_th,
        r_1_th: closed.r_1_th,
        r1_branch: closed.r1_branch,
        chi2_component: closed.chi2_term,
        aperture,
        rayleigh: rayleigh_distance(diag, geom.wavelength()),
        uniform_power: up.value,
        uniform_power_branch: up.branch,
        c_ratios: c_ratios.to_vec(),
        params: *params,
        thresholds: *thresholds,
    })
}
