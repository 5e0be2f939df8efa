//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs as a plain binary (`harness = false`).

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xpdmimo::experiments::{fig2, fig3, fig4, fig5, fig7, is_far_field, FIG3_ETAS};
use xpdmimo::{ScenarioConfig, Table};
use xpdmimo_core::capacity::{capacity_upper_bound, ergodic_capacity_mc};
use xpdmimo_core::channel::{ChannelStats, FadingParams, SubarrayConfig};
use xpdmimo_core::geometry::SphericalPosition;
use xpdmimo_core::optimizer::{allocate_power, optimize_covariance, scalar_covariance, Branch, CovarianceResult, PowerAllocation};
use xpdmimo_core::permanent::{
    complexity_ori, complexity_sim, identity_augmented, permanent_def, permanent_expanded, permanent_structured,
};
use xpdmimo_core::polarization::l_of_xpd;

type Outcome = (bool, String);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn texts(t: &Table, name: &str) -> Vec<String> {
    let j = t.column(name).expect("column");
    t.rows.iter().map(|r| r[j].as_str().unwrap_or_default().to_string()).collect()
}

fn permanent_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst: f64 = 0.0;
    let instances = 1200;
    for _ in 0..instances {
        let n = rng.random_range(1..=2usize);
        let m = rng.random_range(1..=4usize);
        let divisors: Vec<usize> = (1..=m).filter(|d| m % d == 0).collect();
        let m0 = divisors[rng.random_range(0..divisors.len())];
        let sub = SubarrayConfig::new(m / m0, m0).unwrap();
        let mut beta = Vec::new();
        let mut l = Vec::new();
        for _ in 0..sub.s {
            let (b, x) = (rng.random_range(0.1..2.0), rng.random_range(0.0..0.5));
            beta.extend(std::iter::repeat_n(b, m0));
            l.extend(std::iter::repeat_n(x, m0));
        }
        let stats = ChannelStats::from_columns(n, beta, l, sub).unwrap();
        let gamma = rng.random_range(0.1..10.0);
        let lambda: Vec<f64> = (0..2 * sub.s).map(|_| rng.random_range(0.0..1.0)).collect();
        let alloc = PowerAllocation::from_vec(sub, &lambda).unwrap();
        let weights = DVector::from_vec(alloc.expand().iter().map(|x| gamma * x).collect());
        let b = stats.omega() * DMatrix::from_diagonal(&weights);
        let mut t = stats.templates().unwrap();
        for (j, x) in lambda.iter().enumerate() {
            t.column_mut(j).scale_mut(gamma * x);
        }
        let def = permanent_def(&identity_augmented(&b)).unwrap();
        let exp = permanent_expanded(&b).unwrap();
        let st = permanent_structured(&t, sub.s, sub.m0).unwrap();
        worst = worst.max(rel(st, def)).max(rel(exp, def)).max(rel(st, exp));
    }
    (worst <= 1e-10, format!("{instances} instances, worst relative gap {worst:.2e} (limit 1e-10)"))
}

fn complexity_counters() -> Outcome {
    let ori = complexity_ori(50, 2);
    let ok_ori = ori == BigUint::from(331_065_072u64);
    let mut violations = Vec::new();
    for s in 1..=20usize {
        for n in 1..=4usize {
            let num: BigUint = (2 * s + 1..=2 * s + 2 * n).map(BigUint::from).product::<BigUint>() * BigUint::from(2 * n - 1);
            let bound = BigRational::from_integer(num.into());
            if complexity_sim(s, n) > bound {
                violations.push((s, n));
            }
        }
    }
    (
        ok_ori && violations.is_empty(),
        format!("complexity_ori(50,2) = {ori}; n_sim bound violations over S≤20, N≤4: {violations:?}"),
    )
}

fn boundary_consistency(t2: &Table) -> Outcome {
    let closed = t2.floats("r_u_th_m");
    let numeric = t2.floats("numeric_m");
    let outcomes = texts(t2, "numeric_outcome");
    let worst = closed.iter().zip(&numeric).map(|(c, n)| (c - n).abs() / n).fold(0.0, f64::max);
    let found = outcomes.iter().all(|o| o == "found");
    (
        found && worst <= 0.10 && closed.len() == 36,
        format!("{} angles, worst closed/numeric gap {:.2}% (limit 10%), all searches found: {found}", closed.len(), 100.0 * worst),
    )
}

fn boundary_ordering(t2: &Table) -> Outcome {
    let r_th = t2.floats("r_u_th_m");
    let r1 = t2.floats("r_1_th_m");
    let up = t2.floats("uniform_power_m");
    let phi = t2.floats("phi_deg");
    let bad: Vec<String> = (0..phi.len())
        .filter(|&i| r_th[i] > up[i])
        .map(|i| format!("{}° ({:.3} > {:.3})", phi[i], r_th[i], up[i]))
        .collect();
    let r1_bad = (0..phi.len()).filter(|&i| r1[i] > up[i]).count();
    (
        bad.is_empty(),
        format!(
            "r_U^th ≤ uniform-power distance fails at {} of {} angles {:?}; distance term alone fails at {r1_bad}",
            bad.len(),
            phi.len(),
            bad
        ),
    )
}

fn strictly(v: &[f64], up: bool) -> bool {
    v.windows(2).all(|w| if up { w[1] > w[0] } else { w[1] < w[0] })
}

fn aperture_trends(t3: &Table) -> Outcome {
    let eta = t3.floats("eta");
    let r = t3.floats("r_m");
    let a = t3.floats("a_th");
    let chi1 = t3.floats("chi1_term");
    let pick = |v: &[f64], f: &dyn Fn(usize) -> bool| -> Vec<f64> { (0..v.len()).filter(|&i| f(i)).map(|i| v[i]).collect() };
    let mut r_fail = Vec::new();
    let mut r_fail_chi1 = 0;
    for &e in &FIG3_ETAS {
        let sel = |i: usize| eta[i] == e;
        if !strictly(&pick(&a, &sel), true) {
            r_fail.push(e);
        }
        if !strictly(&pick(&chi1, &sel), true) {
            r_fail_chi1 += 1;
        }
    }
    let mut eta_fail = Vec::new();
    let mut eta_fail_chi1 = 0;
    for k in 1..=10 {
        let rk = 10.0 * k as f64;
        let sel = |i: usize| r[i] == rk;
        if !strictly(&pick(&a, &sel), false) {
            eta_fail.push(rk);
        }
        if !strictly(&pick(&chi1, &sel), false) {
            eta_fail_chi1 += 1;
        }
    }
    (
        r_fail.is_empty() && eta_fail.is_empty(),
        format!(
            "non-increasing in r at η = {r_fail:?}; non-decreasing in η at r = {eta_fail:?}; distance term alone: {r_fail_chi1} r-sweep and {eta_fail_chi1} η-sweep failures"
        ),
    )
}

fn jensen_bound() -> Outcome {
    let cfg = ScenarioConfig::default();
    let fading = FadingParams::new(cfg.fading.mu, cfg.fading.seed).unwrap();
    let trials = 10_000;
    let mut cells = 0;
    let mut fails = Vec::new();
    let mut worst_margin = f64::INFINITY;
    for n in [1usize, 2] {
        for s in [2usize, 3] {
            for m0 in [2usize, 5] {
                let m = s * m0;
                let mut c = cfg.clone();
                c.geometry.num_elements = m;
                c.optimizer.s = s;
                c.optimizer.m0 = m0;
                c.user.num_antennas = n;
                c.user.r = 5.0;
                c.user.phi_deg = 30.0;
                let sc = c.scenario().unwrap();
                let raw = sc.stats().unwrap().tie_to_subarrays();
                let stats = raw.scaled(1.0 / raw.mean_co_gain()).unwrap();
                let alloc = PowerAllocation::uniform(sc.subarrays, 1.0 / (2 * m) as f64);
                for gamma_db in [0.0f64, 10.0, 20.0, 30.0] {
                    let gamma = 10f64.powf(gamma_db / 10.0);
                    let est = ergodic_capacity_mc(&stats, &scalar_covariance(m), gamma, trials, &fading).unwrap();
                    let cub = capacity_upper_bound(&stats, &alloc, gamma).unwrap();
                    let margin = cub + 3.0 * est.std_error - est.mean_bits_per_symbol;
                    worst_margin = worst_margin.min(margin);
                    cells += 1;
                    if margin < 0.0 {
                        fails.push(format!("N={n} S={s} M0={m0} γ={gamma_db}dB"));
                    }
                }
            }
        }
    }
    (fails.is_empty(), format!("{cells} cells × {trials} trials, smallest C^ub + 3·SE − MC = {worst_margin:.4}; failing {fails:?}"))
}

fn uniform_degeneracy() -> (Outcome, CovarianceResult) {
    let cfg = ScenarioConfig::default();
    let sub = cfg.subarrays().unwrap();
    let m = sub.num_elements();
    let beta = cfg.pathloss_params().unwrap().gain(cfg.user.r);
    let l = l_of_xpd(cfg.xpd_params().unwrap().xpd_at_unit_distance).unwrap();
    let stats = ChannelStats::from_columns(cfg.user.num_antennas, vec![beta; m], vec![l; m], sub).unwrap();
    let res = allocate_power(&stats, cfg.snr(), cfg.q0(), &cfg.schedule(), cfg.budget()).unwrap();
    let target = 1.0 / (2 * m) as f64;
    let worst = res.q_diagonal.iter().map(|q| (q - target).abs()).fold(0.0, f64::max);
    ((worst <= 1e-3, format!("uniform statistics, largest |q − 1/(2M)| = {worst:.2e} (limit 1e-3)")), res)
}

fn optimization_dominance(t4: &Table) -> Outcome {
    let p = t4.floats("p_dbm");
    let m0 = t4.floats("m0");
    let (co, cs) = (t4.floats("cub_opt"), t4.floats("cub_scalar"));
    let (mo, ms, se) = (t4.floats("mc_opt"), t4.floats("mc_scalar"), t4.floats("combined_se"));
    let mut fails = Vec::new();
    for i in 0..p.len() {
        if co[i] < cs[i] || mo[i] < ms[i] - 2.0 * se[i] {
            fails.push(format!("M0={} P={}dBm", m0[i], p[i]));
        }
    }
    let gain = (0..p.len()).map(|i| co[i] - cs[i]).fold(f64::INFINITY, f64::min);
    (
        fails.is_empty() && !p.is_empty(),
        format!("{} powers × subarray sizes, smallest bound gain {gain:.4} bit/s/Hz; failing {fails:?}", p.len()),
    )
}

fn far_field_branch(t5: &Table) -> Outcome {
    let cfg = ScenarioConfig::default();
    let mut sc = cfg.scenario().unwrap();
    sc.user = SphericalPosition::new(200.0, sc.user.theta, sc.user.phi).unwrap();
    let res = optimize_covariance(&sc, &cfg.thresholds().unwrap(), cfg.snr(), cfg.q0(), &cfg.schedule(), cfg.budget()).unwrap();
    let m = sc.subarrays.num_elements();
    let exact = res.branch == Branch::FarField && res.q() == scalar_covariance(m);

    let ratio = t5.floats("improvement_ratio");
    let beyond = texts(t5, "beyond_threshold");
    let branches = texts(t5, "branch");
    let r_th = t5.floats("r_u_th_m").first().copied().unwrap_or(f64::NAN);
    let far: Vec<usize> = (0..ratio.len()).filter(|&i| beyond[i] == "true").collect();
    let worst = far.iter().map(|&i| (ratio[i] - 1.0).abs()).fold(0.0, f64::max);
    let branch_ok = far.iter().all(|&i| is_far_field(&branches[i]));
    (
        exact && branch_ok && !far.is_empty() && worst <= 0.01,
        format!(
            "Q = I/(2M) exactly at r = 200 m: {exact}; fig5 r_U^th = {r_th:.2} m, {} points beyond it, worst |ratio − 1| = {worst:.2e}",
            far.len()
        ),
    )
}

fn allocation_alignment(t7: &Table) -> Outcome {
    let panels = texts(t7, "panel");
    let rho = t7.floats("spearman");
    let get = |p: &str| panels.iter().position(|x| x == p).map(|i| rho[i]).unwrap_or(f64::NAN);
    let (a, b) = (get("pathloss"), get("xpd"));
    (a > 0.0 && b > 0.0, format!("Spearman ρ: varying pathloss {a:.3}, varying XPD {b:.3}"))
}

fn constraints(t4: &Table, extra: &[&CovarianceResult], q0: f64) -> Outcome {
    let trace = t4.floats("trace");
    let max_q = t4.floats("max_q");
    let mut checked = 0;
    let mut fails = Vec::new();
    for i in 0..trace.len() {
        checked += 1;
        if (trace[i] - 1.0).abs() > 1e-6 || max_q[i] > q0 + 1e-9 {
            fails.push(format!("fig4 row {i}: trace {}, max q {}", trace[i], max_q[i]));
        }
    }
    for r in extra {
        checked += 1;
        let mq = r.q_diagonal.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if (r.trace() - 1.0).abs() > 1e-6 || mq > q0 + 1e-9 {
            fails.push(format!("trace {}, max q {mq}", r.trace()));
        }
    }
    (fails.is_empty() && checked > 0, format!("{checked} results checked; violations {fails:?}"))
}

fn main() {
    let cfg = ScenarioConfig::default();
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut timed = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let out = f();
        let secs = t.elapsed().as_secs_f64();
        println!("criterion {id:>2} {name}: {} ({}) [{secs:.1}s]", if out.0 { "PASS" } else { "FAIL" }, out.1);
        results.push((id, name, out, secs));
    };

    timed(1, "permanent oracle equivalence", &mut permanent_oracles);
    timed(2, "complexity counters", &mut complexity_counters);
    let t2 = fig2(&cfg);
    assert!(t2.failure.is_none(), "fig2 failed: {:?}", t2.failure);
    timed(3, "boundary consistency", &mut || boundary_consistency(&t2.table));
    timed(4, "boundary ordering", &mut || boundary_ordering(&t2.table));
    let t3 = fig3(&cfg);
    assert!(t3.failure.is_none(), "fig3 failed: {:?}", t3.failure);
    timed(5, "aperture trends", &mut || aperture_trends(&t3.table));
    timed(6, "Jensen bound", &mut jensen_bound);
    let mut uniform_run = None;
    timed(7, "scalar allocation under uniform statistics", &mut || {
        let (o, r) = uniform_degeneracy();
        uniform_run = Some(r);
        o
    });
    let mut t4 = None;
    timed(8, "optimization dominance", &mut || {
        let run = fig4(&cfg);
        let out = match &run.failure {
            Some(e) => (false, format!("fig4 failed: {e}")),
            None => optimization_dominance(&run.table),
        };
        t4 = Some(run.table);
        out
    });
    timed(9, "far-field branch", &mut || {
        let run = fig5(&cfg);
        match &run.failure {
            Some(e) => (false, format!("fig5 failed: {e}")),
            None => far_field_branch(&run.table),
        }
    });
    timed(10, "allocation alignment", &mut || {
        let run = fig7(&cfg);
        match &run.failure {
            Some(e) => (false, format!("fig7 failed: {e}")),
            None => allocation_alignment(&run.table),
        }
    });
    let t4 = t4.expect("criterion 8 ran");
    let uniform_run = uniform_run.expect("criterion 7 ran");
    timed(11, "constraint satisfaction", &mut || constraints(&t4, &[&uniform_run], cfg.q0()));

    let failed: Vec<usize> = results.iter().filter(|r| !r.2 .0).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria pass{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failing {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
