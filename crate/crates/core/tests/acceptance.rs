//! Acceptance suite. Runs every criterion in order, one at a time so the
//! timed sections do not compete for cores, and prints one line
//! `criterion <n> PASS|FAIL: <measurement>` per criterion.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rategame::closed_form::{value_function, VasicekSolution};
use rategame::game::{
    observable_refinement, observable_strategy, pointwise_conditions, reduction_refinement,
    verify_saddle, Perturbations, SaddleSetup,
};
use rategame::market::{vasicek_to_model, GameState, MarketModel, VasicekParams};
use rategame::pde::{self, closed_form_errors, spatial_self_convergence, PdeGrid, SchemeConfig};
use rategame::sim::{
    estimate_objective, feynman_kac_f, feynman_kac_g, measure_consistency, simulate_recorded,
    LogSlopeField, McConfig, Measure, ObjectiveMethod, Recording,
};

/// Seed shared by every stochastic criterion; fixed before any run.
const SEED: u64 = 2026;

const RESIDUAL_TOL: f64 = 1e-8;
const PDE_REL_TOL: f64 = 1e-3;
const MIN_ORDER: f64 = 1.8;
const Z_MAX: f64 = 3.0;
const RATIO_MAX: f64 = 0.75;
const DEGENERATE_PDE_TOL: f64 = 1e-4;
/// Closed forms agree with the constant-rate limit to rounding.
const DEGENERATE_CF_TOL: f64 = 1e-13;
/// Half-width, in stationary sd, of the window where PDE errors are read.
const INTERIOR_SD: f64 = 4.0;

fn report(n: u32, pass: bool, detail: String) {
    println!(
        "criterion {n} {}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} failed");
}

fn params() -> VasicekParams {
    VasicekParams::default()
}

fn model() -> MarketModel {
    vasicek_to_model(&params()).unwrap()
}

fn closed_form() -> VasicekSolution {
    VasicekSolution::new(params()).unwrap()
}

fn init() -> GameState {
    let p = params();
    GameState::new(1.0, 1.0, p.stationary_mean(), 0.0).unwrap()
}

fn setup() -> SaddleSetup {
    SaddleSetup::new(Arc::new(closed_form().surface()), model(), init()).unwrap()
}

fn interior() -> (f64, f64) {
    let p = params();
    let (m, s) = (p.stationary_mean(), p.stationary_sd());
    (m - INTERIOR_SD * s, m + INTERIOR_SD * s)
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn criterion_01_closed_form_residuals() {
    let start = Instant::now();
    let p = params();
    let cf = closed_form();
    let (lam, sb, th, a, horizon) = (p.lambda, p.sigma_bar, p.theta_bar, p.alpha, p.horizon);
    let (lo, hi) = p.default_domain();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut first, mut second, mut a1_ode) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let r = rng.random_range(lo..hi);
        let t = rng.random_range(0.0..horizon);
        let tau = horizon - t;
        let b1 = (1.0 - (-a * tau).exp()) / a;
        let db1 = -(-a * tau).exp();
        let a1 = cf.a1(t).unwrap();
        let a2 = cf.a2(t).unwrap();
        // d/dt of −exp(∫_t^T f) is −f(t) times the value.
        let da1 = -a1 * ((th - sb * lam) * b1 - 0.5 * sb * sb * b1 * b1);
        let da2 = -a2 * (lam + sb * b1).powi(2);
        let h = a1 * (b1 * r).exp();
        let (h_r, h_rr, h_t) = (b1 * h, b1 * b1 * h, (da1 + a1 * db1 * r) * (b1 * r).exp());
        let mu = th - a * r;
        let e1 =
            h_t + r * h + (mu - sb * lam) * h_r + 0.5 * sb * sb * h_rr - sb * sb * h_r * h_r / h;
        let (g, g_t) = (a2, da2);
        let e2 = g_t + (lam + sb * h_r / h).powi(2) * g;
        first = first.max(e1.abs());
        second = second.max(e2.abs());
        // The quadrature behind A1 must have the derivative used above.
        let s = 1e-4;
        let fd = (-cf.a1(t + 2.0 * s).unwrap() + 8.0 * cf.a1(t + s).unwrap()
            - 8.0 * cf.a1(t - s).unwrap()
            + cf.a1(t - 2.0 * s).unwrap())
            / (12.0 * s);
        if t > 2.0 * s && t < horizon - 2.0 * s {
            a1_ode = a1_ode.max((fd - da1).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = first <= RESIDUAL_TOL
        && second <= RESIDUAL_TOL
        && a1_ode <= RESIDUAL_TOL
        && secs(elapsed) < 1.0;
    report(
        1,
        pass,
        format!(
            "max residual H-eq {first:.2e}, G-eq {second:.2e}, A1 derivative {a1_ode:.2e} (tol {RESIDUAL_TOL:e}); {:.3}s (< 1s)",
            secs(elapsed)
        ),
    );
}

fn criterion_02_pde_against_closed_form() {
    let start = Instant::now();
    let m = model();
    let cf = closed_form();
    let scheme = SchemeConfig::default();
    let grid = PdeGrid::vasicek_default(&params(), 400, 400).unwrap();
    let sol = pde::solve(&m, &grid, &scheme).unwrap();
    let err = closed_form_errors(&sol, &cf, interior()).unwrap();
    let base = PdeGrid::vasicek_default(&params(), 101, 400).unwrap();
    let study = spatial_self_convergence(&m, &base, &scheme, 3, interior(), Some(&cf)).unwrap();
    let order = study.min_self_order();
    let elapsed = start.elapsed();
    let pass = err.h_rel <= PDE_REL_TOL
        && err.g_rel <= PDE_REL_TOL
        && order >= MIN_ORDER
        && secs(elapsed) < 30.0;
    report(
        2,
        pass,
        format!(
            "400x400 interior rel err H {:.2e}, G {:.2e} (tol {PDE_REL_TOL:e}); self-convergence orders {:?} (min {MIN_ORDER}); {:.2}s (< 30s)",
            err.h_rel,
            err.g_rel,
            study.self_orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>(),
            secs(elapsed)
        ),
    );
}

fn criterion_03_feynman_kac_consistency() {
    let start = Instant::now();
    let p = params();
    let m = model();
    let cf = closed_form();
    let cfg = McConfig::new(SEED).with_paths(200_000).with_dt(1.0 / 500.0);
    let (mean, sd) = (p.stationary_mean(), p.stationary_sd());
    let mut worst_f = 0.0f64;
    let mut worst_g = 0.0f64;
    let mut worst_sampling = 0.0f64;
    for k in 0..5 {
        let t = p.horizon * k as f64 / 4.0;
        for j in -2..=2 {
            let r = mean + j as f64 * sd;
            let f = feynman_kac_f(&m, r, t, &cfg).unwrap();
            let zf = f.z_score(cf.f(r, t).unwrap());
            let g = feynman_kac_g(&m, LogSlopeField::Vasicek(&cf), r, t, &cfg).unwrap();
            let zg = g.z_score(-cf.g(t).unwrap());
            worst_f = worst_f.max(zf.abs());
            worst_g = worst_g.max(zg.abs());
            worst_sampling = worst_sampling.max(f.z_sampling(cf.f(r, t).unwrap()).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_f <= Z_MAX && worst_g <= Z_MAX && secs(elapsed) < 120.0;
    report(
        3,
        pass,
        format!(
            "5x5 probes, 2e5 paths, dt 1/500: max |z| F {worst_f:.2}, G {worst_g:.2} (<= {Z_MAX}; sampling-only F {worst_sampling:.2}); {:.1}s (< 120s)",
            secs(elapsed)
        ),
    );
}

fn criterion_04_value_identity() {
    let start = Instant::now();
    let s = setup();
    let cfg = McConfig::new(SEED).with_paths(200_000).with_dt(1e-3);
    let q = simulate_recorded(
        &s.model,
        &s.pi_star(),
        &s.eta_star(),
        &s.init,
        &cfg,
        Measure::QEta,
        Recording::Terminal,
    )
    .unwrap();
    let j = estimate_objective(&q, ObjectiveMethod::Direct).unwrap();
    let v = value_function(&s.init, &s.surface);
    let z = j.z_score(v);
    let elapsed = start.elapsed();
    let pass = z.abs() <= Z_MAX && secs(elapsed) < 60.0;
    report(
        4,
        pass,
        format!(
            "J = {:.6} (SE {:.2e}) vs V = {v:.6}: z = {z:.2} (|z| <= {Z_MAX}); {:.1}s (< 60s)",
            j.mean,
            j.se,
            secs(elapsed)
        ),
    );
}

fn criterion_05_saddle_inequalities() {
    let start = Instant::now();
    let s = setup();
    let rep = verify_saddle(&s, &Perturbations::default(), &McConfig::new(SEED)).unwrap();
    let elapsed = start.elapsed();
    let lines: Vec<String> = rep
        .verdicts
        .iter()
        .map(|v| format!("{} {:?} z={:.1}", v.name, v.status, v.z))
        .collect();
    let pass = rep.all_pass() && !rep.any_inconclusive();
    report(
        5,
        pass,
        format!(
            "{} paths, dt {:.5}: [{}]; {:.1}s",
            rep.n_paths,
            rep.dt,
            lines.join(", "),
            secs(elapsed)
        ),
    );
}

fn criterion_06_reduction_identity() {
    let s = setup();
    let cfg = McConfig::new(SEED).with_paths(10_000).with_dt(1e-3);
    let study = reduction_refinement(&s, &cfg, 4).unwrap();
    let ratio = study.mean_ratio();
    let pass =
        ratio <= RATIO_MAX && study.within_tolerance() && (study.finest().dt - 1e-3).abs() < 1e-15;
    report(
        6,
        pass,
        format!(
            "max |2GY + HX - c0| over dt {:?}: {:?}; mean ratio {ratio:.3} (<= {RATIO_MAX}, per-halving {:?}); finest {:.2e} vs calibrated tol {:.2e}",
            study.levels.iter().map(|l| l.dt).collect::<Vec<_>>(),
            study.levels.iter().map(|l| format!("{:.2e}", l.max_deviation)).collect::<Vec<_>>(),
            study.ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
            study.finest().max_deviation,
            study.calibrated_tolerance
        ),
    );
}

fn criterion_07_observable_strategy() {
    let s = setup();
    let cfg = McConfig::new(SEED).with_paths(10_000).with_dt(1e-3);
    let study = observable_refinement(&s, &cfg, 4).unwrap();
    let ratio = study.mean_ratio();
    let obs = observable_strategy(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (lo, hi) = params().default_domain();
    let mut invariant = true;
    for _ in 0..100 {
        let x = rng.random_range(-5.0..5.0);
        let r = rng.random_range(lo..hi);
        let t = rng.random_range(0.0..1.0);
        let a = obs.eval(
            &s.model,
            &GameState::new(x, rng.random_range(0.01..10.0), r, t).unwrap(),
        );
        let b = obs.eval(
            &s.model,
            &GameState::new(x, rng.random_range(0.01..10.0), r, t).unwrap(),
        );
        invariant &= a.to_bits() == b.to_bits();
    }
    let pass = ratio <= RATIO_MAX && invariant;
    report(
        7,
        pass,
        format!(
            "max |X(observable) - X(saddle)|: {:?}; mean ratio {ratio:.3} (<= {RATIO_MAX}, per-halving {:?}); y-invariance bit-identical: {invariant}",
            study.levels.iter().map(|l| format!("{:.2e}", l.max_deviation)).collect::<Vec<_>>(),
            study.ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
        ),
    );
}

fn criterion_08_pointwise_hjbi() {
    let m = model();
    let surface = closed_form().surface();
    let (lo, hi) = params().default_domain();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut eta, mut pi, mut hjbi) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let s = GameState::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(0.05..5.0),
            rng.random_range(lo..hi),
            rng.random_range(0.0..1.0),
        )
        .unwrap();
        let c = pointwise_conditions(&m, &surface, &s, rng.random_range(-5.0..5.0));
        eta = eta.max(c.eta_foc.abs()).max(c.eta_consistency.abs());
        pi = pi.max(c.pi_foc.abs());
        hjbi = hjbi.max(c.hjbi.abs());
    }
    let pass = eta <= RESIDUAL_TOL && pi <= RESIDUAL_TOL && hjbi <= RESIDUAL_TOL;
    report(
        8,
        pass,
        format!(
            "100 states: eta FOC {eta:.2e}, pi FOC {pi:.2e}, L V {hjbi:.2e} (tol {RESIDUAL_TOL:e})"
        ),
    );
}

fn criterion_09_martingale_and_measures() {
    let s = setup();
    let cfg = McConfig::new(SEED);
    let c = measure_consistency(&s.model, &s.pi_star(), &s.eta_star(), &s.init, &cfg).unwrap();
    let comparisons: Vec<String> = c
        .comparisons
        .iter()
        .map(|q| format!("{} z={:.2}", q.quantity, q.z))
        .collect();
    let pass = c.max_abs_z() <= Z_MAX;
    report(
        9,
        pass,
        format!(
            "E[Y_T] = {:.6} (SE {:.1e}) vs y0 = {}: z = {:.2}; direct vs reweighted: [{}] (|z| <= {Z_MAX})",
            c.y_terminal.mean,
            c.y_terminal.se,
            c.y0,
            c.martingale_z,
            comparisons.join(", ")
        ),
    );
}

fn criterion_10_degenerate_reductions() {
    let (lam, sigma, horizon, r0) = (0.2, 0.3, 1.0, 0.04);
    // Closed form with sigma_bar = 0 and the rate at its fixed point.
    let p = VasicekParams {
        lambda: lam,
        sigma: rategame::market::SigmaSchedule::Constant(sigma),
        theta_bar: r0,
        alpha: 1.0,
        sigma_bar: 0.0,
        horizon,
    };
    let cf = VasicekSolution::new(p).unwrap();
    let mut cf_err = 0.0f64;
    for k in 0..=20 {
        let t = horizon * k as f64 / 20.0;
        let tau = horizon - t;
        let eh = (cf.h(r0, t).unwrap() + (r0 * tau).exp()).abs() / (r0 * tau).exp();
        let eg = (cf.g(t).unwrap() + (lam * lam * tau).exp()).abs() / (lam * lam * tau).exp();
        cf_err = cf_err.max(eh).max(eg);
    }

    // PDE path at sigma_bar = 1e-6 with the floor lowered to admit it.
    let sigma_bar = 1e-6;
    let m = MarketModel::constant(lam, sigma, 0.0, sigma_bar, horizon, (-0.1, 0.2)).unwrap();
    let grid = PdeGrid::new(-0.1, 0.2, 121, 400, pde::BoundaryCondition::Linearity).unwrap();
    let scheme = SchemeConfig {
        ellipticity_floor: sigma_bar * sigma_bar,
        ..SchemeConfig::default()
    };
    let sol = pde::solve(&m, &grid, &scheme).unwrap();
    let mut pde_err = 0.0f64;
    for n in 0..=grid.n_t {
        let tau = horizon - sol.f.t(n);
        for i in 0..grid.n_r {
            let r = grid.r(i);
            let eh = (sol.h(n, i) + (r * tau).exp()).abs() / (r * tau).exp();
            let eg = (sol.g(n, i) + (lam * lam * tau).exp()).abs() / (lam * lam * tau).exp();
            pde_err = pde_err.max(eh).max(eg);
        }
    }
    let pass = cf_err <= DEGENERATE_CF_TOL && pde_err <= DEGENERATE_PDE_TOL;
    report(
        10,
        pass,
        format!(
            "closed form at sigma_bar = 0: max rel err {cf_err:.1e} (tol {DEGENERATE_CF_TOL:e}); PDE at sigma_bar = {sigma_bar:e}: max rel err {pde_err:.2e} (tol {DEGENERATE_PDE_TOL:e})"
        ),
    );
}

fn main() -> ExitCode {
    let criteria: [fn(); 10] = [
        criterion_01_closed_form_residuals,
        criterion_02_pde_against_closed_form,
        criterion_03_feynman_kac_consistency,
        criterion_04_value_identity,
        criterion_05_saddle_inequalities,
        criterion_06_reduction_identity,
        criterion_07_observable_strategy,
        criterion_08_pointwise_hjbi,
        criterion_09_martingale_and_measures,
        criterion_10_degenerate_reductions,
    ];
    let mut failed = 0;
    for (i, run) in criteria.iter().enumerate() {
        if let Err(payload) = panic::catch_unwind(AssertUnwindSafe(run)) {
            // A failed check has already printed its own line.
            let reported = payload
                .downcast_ref::<String>()
                .is_some_and(|m| m.starts_with("criterion"));
            if !reported {
                println!("criterion {} FAIL: panicked before reporting", i + 1);
            }
            failed += 1;
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
