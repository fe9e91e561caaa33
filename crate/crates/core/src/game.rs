//! Saddle-point assembly and simulation checks of the game claims.

use std::sync::Arc;

use serde::Serialize;

use crate::closed_form::{eta_best_response, eta_star_at, pi_star_at};
use crate::error::{invalid, Result};
use crate::market::{GameState, MarketModel};
use crate::sim::{
    run_paths, AdversaryField, Control, Estimate, McConfig, Measure, PathBundle, PathObserver,
    PathSamples, StepView, StrategyField,
};
use crate::surface::{SurfacePoint, ValueSurface};

/// Partial derivatives of a value function at one state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ValueDerivatives {
    pub v_t: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub v_r: f64,
    pub v_xx: f64,
    pub v_yy: f64,
    pub v_rr: f64,
    pub v_xy: f64,
    pub v_xr: f64,
    pub v_yr: f64,
}

impl ValueDerivatives {
    /// Derivatives of `V = H x + G y`.
    pub fn linear(p: &SurfacePoint, x: f64, y: f64) -> Self {
        Self {
            v_t: p.h_t * x + p.g_t * y,
            v_x: p.h,
            v_y: p.g,
            v_r: p.h_r * x + p.g_r * y,
            v_xx: 0.0,
            v_yy: 0.0,
            v_rr: p.h_rr * x + p.g_rr * y,
            v_xy: 0.0,
            v_xr: p.h_r,
            v_yr: p.g_r,
        }
    }
}

/// Coefficients `(λ, σ, μ̄, σ̄)` at `(r, t)`.
#[derive(Debug, Clone, Copy)]
pub struct Coefficients {
    pub lambda: f64,
    pub sigma: f64,
    pub mu_bar: f64,
    pub sigma_bar: f64,
}

impl Coefficients {
    pub fn at(model: &MarketModel, r: f64, t: f64) -> Self {
        Self {
            lambda: model.lambda(r),
            sigma: model.sigma(r, t),
            mu_bar: model.mu_bar(r),
            sigma_bar: model.sigma_bar(r),
        }
    }
}

/// `L^{π,η} V` with every term of the generator under `Q^η`.
pub fn operator(c: &Coefficients, d: &ValueDerivatives, s: &GameState, pi: f64, eta: f64) -> f64 {
    let Coefficients {
        lambda,
        sigma,
        mu_bar,
        sigma_bar,
    } = *c;
    let GameState { x, y, r, .. } = *s;
    d.v_t
        + (pi * sigma * (lambda + eta) + r * x) * d.v_x
        + eta * eta * y * d.v_y
        + (mu_bar + sigma_bar * eta) * d.v_r
        + 0.5 * pi * pi * sigma * sigma * d.v_xx
        + 0.5 * eta * eta * y * y * d.v_yy
        + 0.5 * sigma_bar * sigma_bar * d.v_rr
        + pi * sigma * eta * y * d.v_xy
        + pi * sigma * sigma_bar * d.v_xr
        + eta * sigma_bar * y * d.v_yr
}

/// Pointwise HJBI checks at one state of `V = H x + G y`.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct PointwiseConditions {
    pub pi_star: f64,
    pub eta_star: f64,
    /// `∂_η L^{π,η}V` at `η = η*(π)`, for the probe `π`.
    pub eta_foc: f64,
    /// `∂²_η L^{π,η}V`; negative for a maximum.
    pub eta_curvature: f64,
    /// `d/dπ L^{π,η*(π)}V` at `π*`.
    pub pi_foc: f64,
    /// `d²/dπ² L^{π,η*(π)}V`; positive for a minimum.
    pub pi_curvature: f64,
    /// `∂_π L^{π,η*}V` with `η*` held fixed.
    pub pi_slope_fixed_eta: f64,
    /// `L^{π*,η*}V`.
    pub hjbi: f64,
    /// `η*(π*) − η*` from the two formulas.
    pub eta_consistency: f64,
}

impl PointwiseConditions {
    pub fn max_residual(&self) -> f64 {
        [self.eta_foc, self.pi_foc, self.hjbi, self.eta_consistency]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Evaluates the first-order conditions with exact central differences of
/// the quadratic maps (step 1 is exact up to rounding for a quadratic).
pub fn pointwise_conditions(
    model: &MarketModel,
    surface: &ValueSurface,
    s: &GameState,
    probe_pi: f64,
) -> PointwiseConditions {
    let p = surface.point(s.r, s.t);
    let c = Coefficients::at(model, s.r, s.t);
    let d = ValueDerivatives::linear(&p, s.x, s.y);
    let l = |pi: f64, eta: f64| operator(&c, &d, s, pi, eta);
    let best = |pi: f64| eta_best_response(&p, s.x, s.y, pi, c.sigma, c.sigma_bar);
    let upper = |pi: f64| l(pi, best(pi));

    let pi_star = pi_star_at(&p, s.x, s.y, c.lambda, c.sigma, c.sigma_bar);
    let eta_star = eta_star_at(&p, c.lambda, c.sigma_bar);
    let h = 1.0;
    let e = best(probe_pi);
    PointwiseConditions {
        pi_star,
        eta_star,
        eta_foc: (l(probe_pi, e + h) - l(probe_pi, e - h)) / (2.0 * h),
        eta_curvature: (l(probe_pi, e + h) - 2.0 * l(probe_pi, e) + l(probe_pi, e - h)) / (h * h),
        pi_foc: (upper(pi_star + h) - upper(pi_star - h)) / (2.0 * h),
        pi_curvature: (upper(pi_star + h) - 2.0 * upper(pi_star) + upper(pi_star - h)) / (h * h),
        pi_slope_fixed_eta: (l(pi_star + h, eta_star) - l(pi_star - h, eta_star)) / (2.0 * h),
        hjbi: l(pi_star, eta_star),
        eta_consistency: best(pi_star) - eta_star,
    }
}

/// Saddle point anchored at a fixed initial state.
#[derive(Debug, Clone)]
pub struct SaddleSetup {
    pub surface: Arc<ValueSurface>,
    pub model: MarketModel,
    pub init: GameState,
    /// `2 G(r0,t0) y0 + H(r0,t0) x0`.
    pub c0: f64,
}

impl SaddleSetup {
    pub fn new(surface: Arc<ValueSurface>, model: MarketModel, init: GameState) -> Result<Self> {
        if !(init.y > 0.0) {
            return Err(invalid("y0", "must be positive"));
        }
        let c0 = Self::conserved(&surface, &init);
        Ok(Self {
            surface,
            model,
            init,
            c0,
        })
    }

    fn conserved(surface: &ValueSurface, s: &GameState) -> f64 {
        let p = surface.point(s.r, s.t);
        2.0 * p.g * s.y + p.h * s.x
    }

    /// Recomputes `c0` from the surface; must equal the stored value.
    pub fn c0_consistent(&self) -> bool {
        Self::conserved(&self.surface, &self.init) == self.c0
    }

    /// `V(x0, y0, r0, t0)`.
    pub fn value(&self) -> f64 {
        let p = self.surface.point(self.init.r, self.init.t);
        p.h * self.init.x + p.g * self.init.y
    }

    pub fn pi_star(&self) -> StrategyField {
        StrategyField::saddle(self.surface.clone())
    }

    pub fn eta_star(&self) -> AdversaryField {
        AdversaryField::saddle(self.surface.clone())
    }
}

/// `π̂*(x, r, t)`, which does not read the `y` state.
pub fn observable_strategy(setup: &SaddleSetup) -> StrategyField {
    StrategyField::Observable {
        surface: setup.surface.clone(),
        c0: setup.c0,
        scale: 1.0,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReductionReport {
    /// `max |2GY + HX − c0|` over paths and recorded steps.
    pub max_abs: f64,
    pub max_abs_terminal: f64,
    pub max_abs_initial: f64,
    pub n_paths: usize,
    pub dt: f64,
}

/// Deviation `D_t = 2G(r_t,t)Y_t + H(r_t,t)X_t − c0` along saddle paths.
pub fn check_reduction_identity(
    paths: &PathBundle,
    setup: &SaddleSetup,
) -> Result<ReductionReport> {
    if !paths.control.saddle {
        return Err(invalid(
            "paths",
            format!(
                "reduction identity needs saddle paths, got strategy {} against {}",
                paths.control.strategy, paths.control.adversary
            ),
        ));
    }
    if paths.measure != Measure::P {
        return Err(invalid(
            "paths",
            "reduction identity is checked on paths simulated under P",
        ));
    }
    if paths.init != setup.init {
        return Err(invalid(
            "paths",
            "paths start from a different initial state",
        ));
    }
    let steps = paths.recorded_steps();
    let slices: Vec<_> = steps
        .iter()
        .map(|&k| setup.surface.slice(paths.times[k]))
        .collect();
    let last = paths.n_steps();
    let mut rep = ReductionReport {
        max_abs: 0.0,
        max_abs_terminal: 0.0,
        max_abs_initial: 0.0,
        n_paths: paths.n_paths,
        dt: paths.dt,
    };
    for p in 0..paths.n_paths {
        for (j, &k) in steps.iter().enumerate() {
            let pt = slices[j].point(paths.r(p, k));
            let d = (2.0 * pt.g * paths.y(p, k) + pt.h * paths.x(p, k) - setup.c0).abs();
            rep.max_abs = rep.max_abs.max(d);
            if k == 0 {
                rep.max_abs_initial = rep.max_abs_initial.max(d);
            }
            if k == last {
                rep.max_abs_terminal = rep.max_abs_terminal.max(d);
            }
        }
    }
    Ok(rep)
}

/// One level of a step-refinement study.
#[derive(Debug, Clone, Serialize)]
pub struct RefinementLevel {
    pub dt: f64,
    pub noise_substeps: usize,
    pub max_deviation: f64,
    pub max_deviation_terminal: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementStudy {
    pub quantity: String,
    pub levels: Vec<RefinementLevel>,
    /// `max_deviation[k+1] / max_deviation[k]`.
    pub ratios: Vec<f64>,
    /// Threshold `safety · C · dt^p` at the finest level, with `(C, p)`
    /// fitted on the coarser levels.
    pub calibrated_tolerance: f64,
    pub fitted_order: f64,
}

impl RefinementStudy {
    fn from_levels(quantity: &str, levels: Vec<RefinementLevel>, safety: f64) -> Self {
        let ratios = levels
            .windows(2)
            .map(|w| w[1].max_deviation / w[0].max_deviation)
            .collect();
        let fit = &levels[..levels.len() - 1];
        let (sx, sy, sxx, sxy, n) = fit.iter().fold((0.0, 0.0, 0.0, 0.0, 0.0), |a, l| {
            let (x, y) = (l.dt.ln(), l.max_deviation.ln());
            (a.0 + x, a.1 + y, a.2 + x * x, a.3 + x * y, a.4 + 1.0)
        });
        let p = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let ln_c = (sy - p * sx) / n;
        let finest = levels.last().expect("levels").dt;
        Self {
            quantity: quantity.into(),
            ratios,
            calibrated_tolerance: safety * (ln_c + p * finest.ln()).exp(),
            fitted_order: p,
            levels,
        }
    }

    pub fn max_ratio(&self) -> f64 {
        self.ratios
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Geometric mean of the per-halving ratios.
    pub fn mean_ratio(&self) -> f64 {
        let first = self.levels.first().expect("levels").max_deviation;
        (self.finest().max_deviation / first).powf(1.0 / self.ratios.len() as f64)
    }

    pub fn finest(&self) -> &RefinementLevel {
        self.levels.last().expect("levels")
    }

    pub fn within_tolerance(&self) -> bool {
        self.finest().max_deviation <= self.calibrated_tolerance
    }
}

/// Safety factor applied to the extrapolated finest-level deviation.
pub const REFINEMENT_SAFETY: f64 = 1.5;

type Deviation = fn(&StepView<'_>, f64) -> f64;

struct MaxDeviation {
    f: Deviation,
    c0: f64,
    all: f64,
    terminal: f64,
}

impl PathObserver for MaxDeviation {
    fn observe(&mut self, v: &StepView<'_>) {
        let d = (self.f)(v, self.c0);
        self.all = self.all.max(d);
        if v.last {
            self.terminal = self.terminal.max(d);
        }
    }

    fn merge(&mut self, later: Self) {
        self.all = self.all.max(later.all);
        self.terminal = self.terminal.max(later.terminal);
    }
}

/// Brownian-consistent step levels `dt_fine·2^j`, coarsest first.
fn levels(cfg: &McConfig, n_levels: usize) -> Vec<McConfig> {
    (0..n_levels)
        .rev()
        .map(|j| McConfig {
            dt: cfg.dt * (1 << j) as f64,
            noise_substeps: cfg.noise_substeps * (1 << j),
            ..*cfg
        })
        .collect()
}

fn study(
    setup: &SaddleSetup,
    controls: &[Control],
    cfg: &McConfig,
    n_levels: usize,
    quantity: &str,
    f: Deviation,
) -> Result<RefinementStudy> {
    if n_levels < 3 {
        return Err(invalid("levels", "need at least three step sizes"));
    }
    let mut out = Vec::new();
    for c in levels(cfg, n_levels) {
        let (_, dt) = c.step_grid(setup.init.t, setup.model.horizon())?;
        let m = run_paths(&setup.model, controls, &setup.init, &c, Measure::P, || {
            MaxDeviation {
                f,
                c0: setup.c0,
                all: 0.0,
                terminal: 0.0,
            }
        })?;
        out.push(RefinementLevel {
            dt,
            noise_substeps: c.noise_substeps,
            max_deviation: m.all,
            max_deviation_terminal: m.terminal,
        });
    }
    Ok(RefinementStudy::from_levels(
        quantity,
        out,
        REFINEMENT_SAFETY,
    ))
}

/// Max of `|2GY + HX − c0|` at the saddle under `P`, on steps
/// `cfg.dt·2^j` for `j = n_levels−1, …, 0` with shared Brownian paths.
pub fn reduction_refinement(
    setup: &SaddleSetup,
    cfg: &McConfig,
    n_levels: usize,
) -> Result<RefinementStudy> {
    let controls = [Control::new(setup.pi_star(), setup.eta_star())];
    study(
        setup,
        &controls,
        cfg,
        n_levels,
        "reduction identity |2GY + HX - C0|",
        |v, c0| {
            let s = &v.legs[0];
            (2.0 * s.point.g * s.y + s.point.h * s.x - c0).abs()
        },
    )
}

/// Max of `|X^{π̂*} − X^{π*}|` on shared noise under `P`.
pub fn observable_refinement(
    setup: &SaddleSetup,
    cfg: &McConfig,
    n_levels: usize,
) -> Result<RefinementStudy> {
    let controls = [
        Control::new(setup.pi_star(), setup.eta_star()),
        Control::new(observable_strategy(setup), setup.eta_star()),
    ];
    study(
        setup,
        &controls,
        cfg,
        n_levels,
        "wealth gap |X(observable) - X(saddle)|",
        |v, _| (v.legs[1].x - v.legs[0].x).abs(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub name: String,
    /// Signed margin; positive means the claimed ordering holds.
    pub margin: f64,
    /// Standard error the verdict is based on.
    pub se: f64,
    /// Margin in units of `se`.
    pub z: f64,
    pub threshold_sigmas: f64,
    pub status: VerdictStatus,
    pub strict: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Perturbation {
    pub label: String,
    /// `δ` for η-shifts, `c` for π-scalings.
    pub parameter: f64,
    pub estimate: Estimate,
    /// Paired `J_perturbed − J*` on common random numbers.
    pub paired_difference: Estimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct GameReport {
    pub value: f64,
    pub j_star: Estimate,
    /// `|j_star − V| / SE`.
    pub value_gap: f64,
    pub j_eta_perturbed: Vec<Perturbation>,
    pub j_pi_perturbed: Vec<Perturbation>,
    pub verdicts: Vec<Verdict>,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub antithetic: bool,
    pub note: String,
}

impl GameReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts
            .iter()
            .all(|v| v.status == VerdictStatus::Pass)
    }

    pub fn any_inconclusive(&self) -> bool {
        self.verdicts
            .iter()
            .any(|v| v.status == VerdictStatus::Inconclusive)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

/// Perturbation families and verdict thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Perturbations {
    pub eta_shifts: Vec<f64>,
    pub pi_scales: Vec<f64>,
    pub sigmas: f64,
    /// A verdict whose `sigmas · SE` exceeds this is inconclusive.
    pub resolution: f64,
}

impl Default for Perturbations {
    fn default() -> Self {
        Self {
            eta_shifts: vec![-0.3, -0.1, 0.1, 0.3],
            pi_scales: vec![0.5, 1.5, 2.0],
            sigmas: 3.0,
            resolution: 5e-3,
        }
    }
}

struct Legs {
    antithetic: bool,
    j: Vec<PathSamples>,
    diff: Vec<PathSamples>,
}

impl PathObserver for Legs {
    fn observe(&mut self, v: &StepView<'_>) {
        if !v.last {
            return;
        }
        let base = -v.legs[0].x - v.legs[0].y;
        for (i, s) in v.legs.iter().enumerate() {
            let j = -s.x - s.y;
            self.j[i].push(v.path, j);
            self.diff[i].push(v.path, j - base);
        }
    }

    fn merge(&mut self, later: Self) {
        debug_assert_eq!(self.antithetic, later.antithetic);
        for (a, b) in self.j.iter_mut().zip(later.j) {
            a.merge(b);
        }
        for (a, b) in self.diff.iter_mut().zip(later.diff) {
            a.merge(b);
        }
    }
}

fn verdict(
    name: String,
    margin: f64,
    se: f64,
    p: &Perturbations,
    strict_possible: bool,
) -> Verdict {
    let z = if margin == 0.0 { 0.0 } else { margin / se };
    let status = if p.sigmas * se > p.resolution {
        VerdictStatus::Inconclusive
    } else if margin >= -p.sigmas * se {
        VerdictStatus::Pass
    } else {
        VerdictStatus::Fail
    };
    Verdict {
        name,
        margin,
        se,
        z,
        threshold_sigmas: p.sigmas,
        status,
        strict: strict_possible && margin > p.sigmas * se,
    }
}

/// Estimates `J^{π*,η*+δ}` and `J^{cπ*,η*}` on common random numbers under
/// the respective `Q^η` and checks the saddle inequalities. The families
/// are finite, so a pass is evidence for a necessary condition only.
pub fn verify_saddle(
    setup: &SaddleSetup,
    perturbations: &Perturbations,
    cfg: &McConfig,
) -> Result<GameReport> {
    if perturbations.eta_shifts.is_empty() || perturbations.pi_scales.is_empty() {
        return Err(invalid(
            "perturbations",
            "need at least one eta shift and one pi scale",
        ));
    }
    let mut controls = vec![Control::new(setup.pi_star(), setup.eta_star())];
    for &d in &perturbations.eta_shifts {
        controls.push(Control::new(setup.pi_star(), setup.eta_star().shifted(d)));
    }
    for &c in &perturbations.pi_scales {
        controls.push(Control::new(setup.pi_star().scaled(c), setup.eta_star()));
    }
    let n = controls.len();
    let legs = run_paths(
        &setup.model,
        &controls,
        &setup.init,
        cfg,
        Measure::QEta,
        || Legs {
            antithetic: cfg.antithetic,
            j: vec![PathSamples::new(cfg.antithetic); n],
            diff: vec![PathSamples::new(cfg.antithetic); n],
        },
    )?;
    let j: Vec<Estimate> = legs.j.iter().map(|s| s.estimate()).collect();
    let diff: Vec<Estimate> = legs.diff.iter().map(|s| s.estimate()).collect();

    let value = setup.value();
    let j_star = j[0];
    let value_gap = (j_star.mean - value).abs() / j_star.se;
    let mut verdicts = vec![Verdict {
        name: "value-identity".into(),
        margin: -(j_star.mean - value).abs(),
        se: j_star.se,
        z: value_gap,
        threshold_sigmas: perturbations.sigmas,
        status: if perturbations.sigmas * j_star.se > perturbations.resolution {
            VerdictStatus::Inconclusive
        } else if value_gap <= perturbations.sigmas {
            VerdictStatus::Pass
        } else {
            VerdictStatus::Fail
        },
        strict: false,
    }];

    let mut j_eta = Vec::new();
    for (i, &d) in perturbations.eta_shifts.iter().enumerate() {
        let k = 1 + i;
        let label = format!("eta*{d:+}");
        // J^{π*,η*+δ} ≤ J*: margin J* − J_δ.
        verdicts.push(verdict(
            format!("eta-shift {d:+}"),
            -diff[k].mean,
            diff[k].se,
            perturbations,
            true,
        ));
        j_eta.push(Perturbation {
            label,
            parameter: d,
            estimate: j[k],
            paired_difference: diff[k],
        });
    }
    let mut j_pi = Vec::new();
    for (i, &c) in perturbations.pi_scales.iter().enumerate() {
        let k = 1 + perturbations.eta_shifts.len() + i;
        verdicts.push(verdict(
            format!("pi-scale {c}"),
            diff[k].mean,
            diff[k].se,
            perturbations,
            false,
        ));
        j_pi.push(Perturbation {
            label: format!("{c}*pi*"),
            parameter: c,
            estimate: j[k],
            paired_difference: diff[k],
        });
    }
    let (_, dt) = cfg.step_grid(setup.init.t, setup.model.horizon())?;
    Ok(GameReport {
        value,
        j_star,
        value_gap,
        j_eta_perturbed: j_eta,
        j_pi_perturbed: j_pi,
        verdicts,
        n_paths: cfg.n_paths,
        dt,
        seed: cfg.seed,
        antithetic: cfg.antithetic,
        note: "finite perturbation families: passes are necessary-condition evidence, not a proof of optimality".into(),
    })
}
