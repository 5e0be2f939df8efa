//! Figure sweeps and single-shot reports.
//!
//! Sweep points run in parallel; rows are collected in sweep order, and a
//! failing point truncates the table there with the error attached.

use rayon::prelude::*;
use serde::Serialize;

use xpdmimo_core::boundary::{
    boundary_report, rayleigh_distance, uniform_power_distance, xpd_aperture, xpd_distance_closed, xpd_distance_numeric,
    BoundaryThresholds, SearchConfig, SearchOutcome,
};
use xpdmimo_core::capacity::{capacity_upper_bound, ergodic_capacity_mc, CapacityEstimate};
use xpdmimo_core::channel::{ChannelStats, SubarrayConfig};
use xpdmimo_core::geometry::{delta_u, ArrayGeometry, SphericalPosition};
use xpdmimo_core::optimizer::{allocate_power, optimize_covariance, scalar_covariance, Branch, PowerAllocation, Scenario};
use xpdmimo_core::permanent::ComplexityReport;
use xpdmimo_core::polarization::XpdParams;
use xpdmimo_core::{Error, Result};

use crate::config::ScenarioConfig;
use crate::output::{Cell, Table};

pub const EXPERIMENTS: [&str; 11] =
    ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "boundary", "aperture", "capacity", "optimize", "complexity"];

pub const FIG2_ELEMENTS: usize = 70;
pub const FIG2_POINTS: usize = 36;
pub const FIG3_THETA_DEG: f64 = 30.0;
pub const FIG3_PHI_DEG: f64 = 90.0;
pub const FIG3_GAMMA: f64 = 1.1;
pub const FIG3_ETAS: [f64; 5] = [0.4, 0.6, 0.8, 1.0, 1.2];
pub const FIG4_POWERS_DBM: [f64; 5] = [23.0, 28.0, 33.0, 38.0, 43.0];
pub const FIG4_SUBARRAY_SIZES: [usize; 2] = [10, 5];
pub const FIG5_START: f64 = 5.0;
pub const FIG5_STEP: f64 = 5.0;
pub const FIG5_POINTS: usize = 24;
pub const FIG6_M0: usize = 10;
pub const FIG6_MAX_S: usize = 20;
pub const FIG7_THETA_DEG: f64 = 90.0;
pub const FIG7_PHI_DEG: f64 = 90.0;

/// A finished (or partially finished) experiment.
#[derive(Debug)]
pub struct Run {
    pub table: Table,
    pub failure: Option<Error>,
}

type Rows = Vec<Vec<Cell>>;

fn run_sweep<P, F>(mut table: Table, points: &[P], f: F) -> Run
where
    P: Sync,
    F: Fn(&P) -> Result<Rows> + Sync,
{
    let results: Vec<Result<Rows>> = points.par_iter().map(&f).collect();
    let mut failure = None;
    for r in results {
        match r {
            Ok(rows) => rows.into_iter().for_each(|row| table.push(row)),
            Err(e) => {
                table.error = Some(e.to_string());
                failure = Some(e);
                break;
            }
        }
    }
    Run { table, failure }
}

fn table(cfg: &ScenarioConfig, id: &str, columns: &[&str]) -> Table {
    Table::new(id, columns, cfg.hash(), cfg.fading.seed)
}

pub fn run_experiment(id: &str, cfg: &ScenarioConfig) -> std::result::Result<Run, String> {
    Ok(match id {
        "fig2" => fig2(cfg),
        "fig3" => fig3(cfg),
        "fig4" => fig4(cfg),
        "fig5" => fig5(cfg),
        "fig6" => fig6(cfg),
        "fig7" => fig7(cfg),
        "boundary" => boundary(cfg),
        "aperture" => aperture(cfg),
        "capacity" => capacity(cfg),
        "optimize" => optimize(cfg),
        "complexity" => complexity(cfg),
        other => return Err(format!("unknown experiment {other:?}; expected one of {}", EXPERIMENTS.join(", "))),
    })
}

fn outcome_name(o: SearchOutcome) -> &'static str {
    match o {
        SearchOutcome::Found => "found",
        SearchOutcome::Empty => "empty",
        SearchOutcome::UnboundedBracket => "unbounded_bracket",
        SearchOutcome::NonMonotone => "non_monotone",
    }
}

fn branch_name<T: Serialize>(b: &T) -> String {
    serde_json::to_value(b).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn scenario_for(cfg: &ScenarioConfig, geom: ArrayGeometry, user: SphericalPosition, xpd: XpdParams, sub: SubarrayConfig) -> Result<Scenario> {
    Ok(Scenario {
        geom,
        user,
        clusters: cfg.clusters()?,
        c_ratios: cfg.c_ratios()?,
        xpd,
        pathloss: cfg.pathloss_params()?,
        num_ue_antennas: cfg.user.num_antennas,
        subarrays: sub,
    })
}

fn thresholds_with(cfg: &ScenarioConfig, gamma: f64) -> Result<BoundaryThresholds> {
    BoundaryThresholds::new(gamma, gamma, cfg.thresholds.power_ratio)
}

pub const FIG2_COLUMNS: [&str; 10] = [
    "phi_deg",
    "r_u_th_m",
    "r_1_th_m",
    "chi2_term_m",
    "numeric_m",
    "numeric_outcome",
    "rayleigh_m",
    "rayleigh_directional_m",
    "uniform_power_m",
    "r1_branch",
];

/// Boundary curves over a full turn of user azimuth on a 70-element
/// linear array with η = 1.
pub fn fig2(cfg: &ScenarioConfig) -> Run {
    let t = table(cfg, "fig2", &FIG2_COLUMNS);
    let phis: Vec<f64> = (0..FIG2_POINTS).map(|i| 360.0 * i as f64 / FIG2_POINTS as f64).collect();
    run_sweep(t, &phis, |&phi_deg| {
        let geom = cfg.geometry_with(FIG2_ELEMENTS)?;
        let xpd = XpdParams::new(cfg.xpd_params()?.xpd_at_unit_distance, 1.0)?;
        let th = cfg.thresholds()?;
        let clusters = cfg.clusters()?;
        let c = cfg.c_ratios()?;
        let user = SphericalPosition::new(cfg.user.r, cfg.user.theta_deg.to_radians(), phi_deg.to_radians())?;
        let closed = xpd_distance_closed(&geom, &user, &clusters, &c, &xpd, &th)?;
        let numeric = xpd_distance_numeric(&geom, &user, &clusters, &c, &xpd, &th, &SearchConfig::default())?;
        let diag = geom.diagonal();
        let du = delta_u(&user, geom.aspect_ratio());
        let rayleigh = rayleigh_distance(diag, geom.wavelength());
        let up = uniform_power_distance(diag, du, cfg.pathloss.alpha, th.power_ratio)?;
        Ok(vec![vec![
            phi_deg.into(),
            closed.r_u_th.into(),
            closed.r_1_th.into(),
            closed.chi2_term.into(),
            numeric.r.into(),
            outcome_name(numeric.outcome).into(),
            rayleigh.into(),
            (rayleigh * (1.0 - du * du)).into(),
            up.value.into(),
            branch_name(&closed.r1_branch).into(),
        ]])
    })
}

pub const FIG3_COLUMNS: [&str; 7] = ["eta", "r_m", "a_th", "chi1_term", "chi2_term", "b", "delta_u"];

/// Aperture threshold over user range for several XPD decay exponents.
pub fn fig3(cfg: &ScenarioConfig) -> Run {
    let t = table(cfg, "fig3", &FIG3_COLUMNS);
    let points: Vec<(f64, f64)> = FIG3_ETAS
        .iter()
        .flat_map(|&eta| (1..=10).map(move |i| (eta, 10.0 * i as f64)))
        .collect();
    run_sweep(t, &points, |&(eta, r)| {
        let xpd = XpdParams::new(cfg.xpd_params()?.xpd_at_unit_distance, eta)?;
        let th = thresholds_with(cfg, FIG3_GAMMA)?;
        let user = SphericalPosition::new(r, FIG3_THETA_DEG.to_radians(), FIG3_PHI_DEG.to_radians())?;
        let a = xpd_aperture(&user, &cfg.clusters()?, &xpd, &th, 1.0)?;
        Ok(vec![vec![
            eta.into(),
            r.into(),
            a.a_th.into(),
            a.chi1_term.into(),
            a.chi2_term.into(),
            a.b.into(),
            a.delta_u.into(),
        ]])
    })
}

/// Monte Carlo estimate of the capacity of `q` on the untied statistics.
fn mc(cfg: &ScenarioConfig, stats: &ChannelStats, q: &nalgebra::DMatrix<f64>, gamma: f64) -> Result<CapacityEstimate> {
    ergodic_capacity_mc(stats, q, gamma, cfg.fading.trials, &cfg.fading()?)
}

pub const FIG4_COLUMNS: [&str; 17] = [
    "m0",
    "s",
    "p_dbm",
    "branch",
    "cub_opt",
    "cub_scalar",
    "mc_opt",
    "se_opt",
    "mc_scalar",
    "se_scalar",
    "combined_se",
    "trace",
    "max_q",
    "q0",
    "converged",
    "r_u_th_m",
    "trials",
];

/// Optimised versus scalar covariance over transmit power, for two
/// subarray sizes at the configured array and user.
pub fn fig4(cfg: &ScenarioConfig) -> Run {
    let t = table(cfg, "fig4", &FIG4_COLUMNS);
    let m = cfg.geometry.num_elements;
    let points: Vec<(usize, f64)> = FIG4_SUBARRAY_SIZES
        .iter()
        .filter(|&&m0| m % m0 == 0)
        .flat_map(|&m0| FIG4_POWERS_DBM.iter().map(move |&p| (m0, p)))
        .collect();
    run_sweep(t, &points, |&(m0, p)| {
        let sub = SubarrayConfig::new(m / m0, m0)?;
        let sc = scenario_for(cfg, cfg.geometry()?, cfg.user()?, cfg.xpd_params()?, sub)?;
        let gamma = cfg.snr_at(p);
        let q0 = cfg.q0();
        let res = optimize_covariance(&sc, &cfg.thresholds()?, gamma, q0, &cfg.schedule(), cfg.budget())?;
        let stats = sc.stats()?;
        let opt = mc(cfg, &stats, &res.q(), gamma)?;
        let scalar = mc(cfg, &stats, &scalar_covariance(m), gamma)?;
        let max_q = res.q_diagonal.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(vec![vec![
            m0.into(),
            sub.s.into(),
            p.into(),
            branch_name(&res.branch).into(),
            res.capacity_bound.into(),
            res.scalar_capacity_bound.into(),
            opt.mean_bits_per_symbol.into(),
            opt.std_error.into(),
            scalar.mean_bits_per_symbol.into(),
            scalar.std_error.into(),
            opt.std_error.hypot(scalar.std_error).into(),
            res.trace().into(),
            max_q.into(),
            q0.into(),
            res.converged.into(),
            res.r_u_th.unwrap_or(f64::NAN).into(),
            (cfg.fading.trials as usize).into(),
        ]])
    })
}

pub const FIG5_COLUMNS: [&str; 13] = [
    "r_m",
    "branch",
    "r_u_th_m",
    "beyond_threshold",
    "improvement_ratio",
    "bound_ratio",
    "forced_bound_ratio",
    "mc_opt",
    "mc_scalar",
    "combined_se",
    "cub_opt",
    "cub_scalar",
    "cub_forced",
];

/// Capacity improvement of the optimised covariance over the scalar one
/// as the user recedes along endfire, with η = 1.
pub fn fig5(cfg: &ScenarioConfig) -> Run {
    let t = table(cfg, "fig5", &FIG5_COLUMNS);
    let rs: Vec<f64> = (0..FIG5_POINTS).map(|i| FIG5_START + FIG5_STEP * i as f64).collect();
    run_sweep(t, &rs, |&r| {
        let xpd = XpdParams::new(cfg.xpd_params()?.xpd_at_unit_distance, 1.0)?;
        let user = SphericalPosition::new(r, std::f64::consts::FRAC_PI_2, 0.0)?;
        let sc = scenario_for(cfg, cfg.geometry()?, user, xpd, cfg.subarrays()?)?;
        let gamma = cfg.snr();
        let (q0, schedule, budget) = (cfg.q0(), cfg.schedule(), cfg.budget());
        let res = optimize_covariance(&sc, &cfg.thresholds()?, gamma, q0, &schedule, budget)?;
        let forced = allocate_power(&sc.stats()?.tie_to_subarrays(), gamma, q0, &schedule, budget)?;
        let stats = sc.stats()?;
        let opt = mc(cfg, &stats, &res.q(), gamma)?;
        let scalar = mc(cfg, &stats, &scalar_covariance(stats.num_bs_antennas()), gamma)?;
        let r_th = res.r_u_th.unwrap_or(f64::NAN);
        Ok(vec![vec![
            r.into(),
            branch_name(&res.branch).into(),
            r_th.into(),
            (r > r_th).into(),
            (opt.mean_bits_per_symbol / scalar.mean_bits_per_symbol).into(),
            (res.capacity_bound / res.scalar_capacity_bound).into(),
            (forced.capacity_bound / forced.scalar_capacity_bound).into(),
            opt.mean_bits_per_symbol.into(),
            scalar.mean_bits_per_symbol.into(),
            opt.std_error.hypot(scalar.std_error).into(),
            res.capacity_bound.into(),
            res.scalar_capacity_bound.into(),
            forced.capacity_bound.into(),
        ]])
    })
}

pub const FIG6_COLUMNS: [&str; 9] = ["m", "s", "m0", "n", "n_ori", "n_sim", "n_sim_bound", "ratio", "measured"];

/// Complexity ratio of the direct and structured permanent over array size.
pub fn fig6(cfg: &ScenarioConfig) -> Run {
    let t = table(cfg, "fig6", &FIG6_COLUMNS);
    let ss: Vec<usize> = (1..=FIG6_MAX_S).collect();
    run_sweep(t, &ss, |&s| Ok(vec![complexity_row(s, FIG6_M0, cfg.user.num_antennas)?]))
}

fn complexity_row(s: usize, m0: usize, n: usize) -> Result<Vec<Cell>> {
    let r = ComplexityReport::new(s, m0, n)?.with_measurement()?;
    let v = serde_json::to_value(&r).expect("report serialises");
    let text = |k: &str| Cell::Text(v[k].as_str().unwrap_or_default().to_string());
    Ok(vec![
        r.m.into(),
        s.into(),
        m0.into(),
        n.into(),
        text("n_ori"),
        text("n_sim"),
        text("n_sim_bound"),
        r.ratio.into(),
        r.measured.map_or(Cell::Text(String::new()), |x| Cell::Int(x as i64)),
    ])
}

/// Ranks with ties given their average rank, starting at 1.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks). NaN when either
/// input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

pub const FIG7_COLUMNS: [&str; 9] =
    ["panel", "subarray", "beta_mean", "xpd_mean", "co_gain_mean", "lambda_v", "lambda_h", "power", "spearman"];

/// Per-subarray allocation with one of pathloss or XPD held at its centre
/// value. Panel `pathloss` varies β only, panel `xpd` varies XPD only. The
/// allocator runs regardless of the far-field test.
pub fn fig7(cfg: &ScenarioConfig) -> Run {
    let t = table(cfg, "fig7", &FIG7_COLUMNS);
    run_sweep(t, &["pathloss", "xpd"], |&panel| {
        let user = SphericalPosition::new(cfg.user.r, FIG7_THETA_DEG.to_radians(), FIG7_PHI_DEG.to_radians())?;
        let sub = cfg.subarrays()?;
        let geom = cfg.geometry()?;
        let centre = geom.center_index();
        let sc = scenario_for(cfg, geom, user, cfg.xpd_params()?, sub)?;
        let full = sc.stats()?;
        let (mut beta, mut l) = (full.beta().to_vec(), full.l().to_vec());
        match panel {
            "pathloss" => l.iter_mut().for_each(|x| *x = full.l()[centre]),
            _ => beta.iter_mut().for_each(|x| *x = full.beta()[centre]),
        }
        let stats = ChannelStats::from_columns(full.num_ue_antennas(), beta, l, sub)?.tie_to_subarrays();
        let res = allocate_power(&stats, cfg.snr(), cfg.q0(), &cfg.schedule(), cfg.budget())?;
        fig7_rows(panel, &stats, &res.allocation)
    })
}

fn fig7_rows(panel: &str, stats: &ChannelStats, alloc: &PowerAllocation) -> Result<Rows> {
    let (beta_means, co_means) = stats.subarray_means();
    let m0 = stats.subarrays().m0;
    let xpd = stats.xpd();
    let xpd_means: Vec<f64> = xpd.chunks(m0).map(|c| c.iter().sum::<f64>() / m0 as f64).collect();
    let power = alloc.per_subarray();
    let rho = spearman(&power, &co_means);
    Ok((0..power.len())
        .map(|i| {
            vec![
                panel.into(),
                (i + 1).into(),
                beta_means[i].into(),
                xpd_means[i].into(),
                co_means[i].into(),
                alloc.lambda_v[i].into(),
                alloc.lambda_h[i].into(),
                power[i].into(),
                rho.into(),
            ]
        })
        .collect())
}

pub const BOUNDARY_COLUMNS: [&str; 14] = [
    "r_m",
    "theta_deg",
    "phi_deg",
    "r_u_th_m",
    "r_1_th_m",
    "chi2_term_m",
    "numeric_m",
    "numeric_outcome",
    "rayleigh_m",
    "uniform_power_m",
    "a_th",
    "delta_u",
    "diagonal_m",
    "near_field",
];

pub fn boundary(cfg: &ScenarioConfig) -> Run {
    let t = table(cfg, "boundary", &BOUNDARY_COLUMNS);
    let report = std::sync::Mutex::new(None);
    let mut run = run_sweep(t, &[()], |_| {
        let geom = cfg.geometry()?;
        let user = cfg.user()?;
        let (clusters, c, xpd, th) = (cfg.clusters()?, cfg.c_ratios()?, cfg.xpd_params()?, cfg.thresholds()?);
        let rep = boundary_report(&geom, &user, &clusters, &c, &xpd, cfg.pathloss.alpha, &th)?;
        let numeric = xpd_distance_numeric(&geom, &user, &clusters, &c, &xpd, &th, &SearchConfig::default())?;
        let row = vec![
            user.r.into(),
            cfg.user.theta_deg.into(),
            cfg.user.phi_deg.into(),
            rep.r_u_th.into(),
            rep.r_1_th.into(),
            rep.chi2_component.into(),
            numeric.r.into(),
            outcome_name(numeric.outcome).into(),
            rep.rayleigh.into(),
            rep.uniform_power.into(),
            rep.aperture.a_th.into(),
            rep.delta_u.into(),
            rep.diagonal.into(),
            (user.r <= rep.r_u_th).into(),
        ];
        *report.lock().expect("unpoisoned") = Some(rep);
        Ok(vec![row])
    });
    if let Some(rep) = report.into_inner().expect("unpoisoned") {
        run.table = run.table.with_detail(&rep);
    }
    run
}

pub const APERTURE_COLUMNS: [&str; 9] =
    ["r_m", "theta_deg", "phi_deg", "k", "a_th", "chi1_term", "chi2_term", "b", "delta_u"];

pub fn aperture(cfg: &ScenarioConfig) -> Run {
    let t = table(cfg, "aperture", &APERTURE_COLUMNS);
    run_sweep(t, &[()], |_| {
        let a = xpd_aperture(&cfg.user()?, &cfg.clusters()?, &cfg.xpd_params()?, &cfg.thresholds()?, cfg.geometry.k)?;
        Ok(vec![vec![
            cfg.user.r.into(),
            cfg.user.theta_deg.into(),
            cfg.user.phi_deg.into(),
            cfg.geometry.k.into(),
            a.a_th.into(),
            a.chi1_term.into(),
            a.chi2_term.into(),
            a.b.into(),
            a.delta_u.into(),
        ]])
    })
}

pub const CAPACITY_COLUMNS: [&str; 5] = ["gamma_db", "mean", "std_error", "cub", "trials"];

/// Ergodic capacity of the scalar covariance and its bound on tied stats.
pub fn capacity(cfg: &ScenarioConfig) -> Run {
    let t = table(cfg, "capacity", &CAPACITY_COLUMNS);
    run_sweep(t, &[()], |_| {
        let sc = cfg.scenario()?;
        let stats = sc.stats()?;
        let m = stats.num_bs_antennas();
        let gamma = cfg.snr();
        let est = mc(cfg, &stats, &scalar_covariance(m), gamma)?;
        let alloc = PowerAllocation::uniform(sc.subarrays, 1.0 / (2 * m) as f64);
        let cub = capacity_upper_bound(&stats.tie_to_subarrays(), &alloc, gamma)?;
        Ok(vec![vec![
            (cfg.power.p_dbm - cfg.power.sigma2_dbm).into(),
            est.mean_bits_per_symbol.into(),
            est.std_error.into(),
            cub.into(),
            (est.trials as usize).into(),
        ]])
    })
}

pub const OPTIMIZE_COLUMNS: [&str; 6] = ["subarray", "lambda_v", "lambda_h", "power", "branch", "capacity_bound"];

/// Algorithm output for the configured user: one row per subarray, with
/// the full result (iteration trace included) in the JSON detail.
pub fn optimize(cfg: &ScenarioConfig) -> Run {
    let t = table(cfg, "optimize", &OPTIMIZE_COLUMNS);
    let result = std::sync::Mutex::new(None);
    let mut run = run_sweep(t, &[()], |_| {
        let sc = cfg.scenario()?;
        let res = optimize_covariance(&sc, &cfg.thresholds()?, cfg.snr(), cfg.q0(), &cfg.schedule(), cfg.budget())?;
        let a = &res.allocation;
        let rows = a
            .per_subarray()
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                vec![
                    (i + 1).into(),
                    a.lambda_v[i].into(),
                    a.lambda_h[i].into(),
                    p.into(),
                    branch_name(&res.branch).into(),
                    res.capacity_bound.into(),
                ]
            })
            .collect();
        *result.lock().expect("unpoisoned") = Some(res);
        Ok(rows)
    });
    if let Some(res) = result.into_inner().expect("unpoisoned") {
        run.table = run.table.with_detail(&res);
    }
    run
}

pub const COMPLEXITY_COLUMNS: [&str; 9] = FIG6_COLUMNS;

pub fn complexity(cfg: &ScenarioConfig) -> Run {
    let t = table(cfg, "complexity", &COMPLEXITY_COLUMNS);
    run_sweep(t, &[()], |_| Ok(vec![complexity_row(cfg.optimizer.s, cfg.optimizer.m0, cfg.user.num_antennas)?]))
}

/// True when the branch string in a table row marks the far-field path.
pub fn is_far_field(label: &str) -> bool {
    label == branch_name(&Branch::FarField)
}
