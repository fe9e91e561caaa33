use serde::Serialize;

use super::engine::{run_paths, step_times, Control, McConfig, Measure, PathObserver, StepView};
use super::fields::{AdversaryField, ControlTag, StrategyField};
use super::stats::{Estimate, PathSamples};
use crate::error::{Error, Result};
use crate::market::{GameState, MarketModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recording {
    /// Every step of every path.
    Full,
    /// Initial and terminal states only.
    Terminal,
}

/// Simulated trajectories of one control pair.
#[derive(Debug, Clone)]
pub struct PathBundle {
    /// Step times of the simulation (all steps, even when only terminal
    /// states are stored).
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub recording: Recording,
    /// Path-major storage with `columns()` entries per path.
    x: Vec<f64>,
    y: Vec<f64>,
    r: Vec<f64>,
    w: Vec<f64>,
    pub measure: Measure,
    pub control: ControlTag,
    pub seed: u64,
    pub dt: f64,
    pub antithetic: bool,
    pub init: GameState,
}

impl PathBundle {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Stored states per path.
    pub fn columns(&self) -> usize {
        match self.recording {
            Recording::Full => self.times.len(),
            Recording::Terminal => 2,
        }
    }

    /// Index of the stored column that holds step `k`; terminal recordings
    /// hold only the first and last steps.
    fn col(&self, k: usize) -> usize {
        match self.recording {
            Recording::Full => k,
            Recording::Terminal => {
                assert!(k == 0 || k == self.n_steps(), "step {k} not recorded");
                usize::from(k != 0)
            }
        }
    }

    fn at(&self, v: &[f64], path: usize, k: usize) -> f64 {
        v[path * self.columns() + self.col(k)]
    }

    pub fn x(&self, path: usize, k: usize) -> f64 {
        self.at(&self.x, path, k)
    }

    pub fn y(&self, path: usize, k: usize) -> f64 {
        self.at(&self.y, path, k)
    }

    pub fn r(&self, path: usize, k: usize) -> f64 {
        self.at(&self.r, path, k)
    }

    /// Driving Brownian path at step `k`.
    pub fn w(&self, path: usize, k: usize) -> f64 {
        self.at(&self.w, path, k)
    }

    pub fn terminal(&self, path: usize) -> (f64, f64, f64) {
        let k = self.n_steps();
        (self.x(path, k), self.y(path, k), self.r(path, k))
    }

    /// Mean and standard error of `f(X_T, Y_T, r_T)` across paths.
    pub fn terminal_estimate(&self, f: impl Fn(f64, f64, f64) -> f64) -> Estimate {
        let mut s = PathSamples::new(self.antithetic);
        for p in 0..self.n_paths {
            let (x, y, r) = self.terminal(p);
            s.push(p, f(x, y, r));
        }
        s.estimate()
    }

    pub fn recorded_steps(&self) -> Vec<usize> {
        match self.recording {
            Recording::Full => (0..=self.n_steps()).collect(),
            Recording::Terminal => vec![0, self.n_steps()],
        }
    }
}

struct Recorder {
    full: bool,
    cols: usize,
    base: Option<usize>,
    x: Vec<f64>,
    y: Vec<f64>,
    r: Vec<f64>,
    w: Vec<f64>,
}

impl PathObserver for Recorder {
    fn observe(&mut self, v: &StepView<'_>) {
        let col = if self.full {
            v.step
        } else if v.step == 0 {
            0
        } else if v.last {
            1
        } else {
            return;
        };
        let base = *self.base.get_or_insert(v.path);
        let idx = (v.path - base) * self.cols + col;
        if idx >= self.x.len() {
            let len = (v.path - base + 1) * self.cols;
            for a in [&mut self.x, &mut self.y, &mut self.r, &mut self.w] {
                a.resize(len, f64::NAN);
            }
        }
        let s = &v.legs[0];
        self.x[idx] = s.x;
        self.y[idx] = s.y;
        self.r[idx] = s.r;
        self.w[idx] = v.w;
    }

    fn merge(&mut self, later: Self) {
        self.x.extend(later.x);
        self.y.extend(later.y);
        self.r.extend(later.r);
        self.w.extend(later.w);
    }
}

/// Euler simulation of `(X, Y, r)` with all three driven by one Brownian
/// increment per step. `Y` is advanced in log space so it stays positive.
pub fn simulate(
    model: &MarketModel,
    strategy: &StrategyField,
    adversary: &AdversaryField,
    init: &GameState,
    cfg: &McConfig,
    measure: Measure,
) -> Result<PathBundle> {
    simulate_recorded(
        model,
        strategy,
        adversary,
        init,
        cfg,
        measure,
        Recording::Full,
    )
}

pub fn simulate_recorded(
    model: &MarketModel,
    strategy: &StrategyField,
    adversary: &AdversaryField,
    init: &GameState,
    cfg: &McConfig,
    measure: Measure,
    recording: Recording,
) -> Result<PathBundle> {
    let (n, dt) = cfg.step_grid(init.t, model.horizon())?;
    let full = recording == Recording::Full;
    let cols = if full { n + 1 } else { 2 };
    let controls = [Control::new(strategy.clone(), adversary.clone())];
    let rec = run_paths(model, &controls, init, cfg, measure, || Recorder {
        full,
        cols,
        base: None,
        x: Vec::new(),
        y: Vec::new(),
        r: Vec::new(),
        w: Vec::new(),
    })?;
    Ok(PathBundle {
        times: step_times(init.t, model.horizon(), n),
        n_paths: cfg.n_paths,
        recording,
        x: rec.x,
        y: rec.y,
        r: rec.r,
        w: rec.w,
        measure,
        control: ControlTag::new(strategy, adversary),
        seed: cfg.seed,
        dt,
        antithetic: cfg.antithetic,
        init: *init,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveMethod {
    /// Mean of `−X_T − Y_T` over paths simulated under `Q^η`.
    Direct,
    /// Mean of `(Y_T/y0)(−X_T) − Y_T²/y0` over paths simulated under `P`.
    Importance,
}

impl ObjectiveMethod {
    pub fn required_measure(&self) -> Measure {
        match self {
            ObjectiveMethod::Direct => Measure::QEta,
            ObjectiveMethod::Importance => Measure::P,
        }
    }

    /// Per-path sample of `J`.
    #[inline]
    pub fn sample(&self, x_t: f64, y_t: f64, y0: f64) -> f64 {
        match self {
            ObjectiveMethod::Direct => -x_t - y_t,
            ObjectiveMethod::Importance => (y_t / y0) * (-x_t) - y_t * y_t / y0,
        }
    }
}

/// Estimate of `J^{π,η} = E^η[−X_T − Y_T]`.
pub fn estimate_objective(paths: &PathBundle, method: ObjectiveMethod) -> Result<Estimate> {
    let need = method.required_measure();
    if paths.measure != need {
        return Err(Error::MeasureMismatch {
            expected: need.name().into(),
            found: paths.measure.name().into(),
        });
    }
    let y0 = paths.init.y;
    Ok(paths.terminal_estimate(|x, y, _| method.sample(x, y, y0)))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::closed_form::VasicekSolution;
    use crate::market::{vasicek_to_model, VasicekParams};

    fn model() -> MarketModel {
        vasicek_to_model(&VasicekParams::default()).unwrap()
    }

    fn cfg(n: usize, dt: f64) -> McConfig {
        McConfig::new(11).with_paths(n).with_dt(dt)
    }

    #[test]
    fn zero_eta_keeps_density_fixed() {
        let m = model();
        let init = GameState::new(1.0, 0.7, 0.03, 0.0).unwrap();
        let b = simulate(
            &m,
            &StrategyField::zero(),
            &AdversaryField::zero(),
            &init,
            &cfg(20, 0.01),
            Measure::P,
        )
        .unwrap();
        for p in 0..b.n_paths {
            for k in b.recorded_steps() {
                assert_eq!(b.y(p, k), 0.7);
            }
        }
    }

    #[test]
    fn money_account_growth() {
        let m = MarketModel::constant(0.2, 0.3, 0.0, 1e-12, 1.0, (-1.0, 1.0)).unwrap();
        let init = GameState::new(2.0, 1.0, 0.05, 0.25).unwrap();
        let c = cfg(4, 1e-4);
        let b = simulate(
            &m,
            &StrategyField::zero(),
            &AdversaryField::zero(),
            &init,
            &c,
            Measure::P,
        )
        .unwrap();
        let exact = 2.0 * (0.05f64 * 0.75).exp();
        for p in 0..4 {
            let (x, _, _) = b.terminal(p);
            assert!(
                (x - exact).abs() < 2.0 * 0.05f64.powi(2) * 0.75 * 1e-4 * exact,
                "{x} vs {exact}"
            );
        }
    }

    #[test]
    fn one_increment_drives_all_components() {
        let m = model();
        let p = VasicekParams::default();
        let init = GameState::default();
        let eta = 0.25;
        let c = cfg(6, 0.01);
        let b = simulate(
            &m,
            &StrategyField::Constant(0.5),
            &AdversaryField::Constant(eta),
            &init,
            &c,
            Measure::P,
        )
        .unwrap();
        let dt = b.dt;
        let sigma = 0.3;
        for path in 0..b.n_paths {
            for k in 0..b.n_steps() {
                let dw = b.w(path, k + 1) - b.w(path, k);
                let (r0, r1) = (b.r(path, k), b.r(path, k + 1));
                let dr = (p.theta_bar - p.alpha * r0) * dt + p.sigma_bar * dw;
                assert!((r1 - r0 - dr).abs() < 1e-14);
                let dly = (b.y(path, k + 1) / b.y(path, k)).ln();
                assert!((dly - (-0.5 * eta * eta * dt + eta * dw)).abs() < 1e-12);
                let (x0, x1) = (b.x(path, k), b.x(path, k + 1));
                let dx = (0.5 * p.lambda * sigma + r0 * x0) * dt + 0.5 * sigma * dw;
                assert!((x1 - x0 - dx).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn antithetic_partners_mirror_noise() {
        let m = model();
        let b = simulate(
            &m,
            &StrategyField::zero(),
            &AdversaryField::zero(),
            &GameState::default(),
            &cfg(4, 0.05),
            Measure::P,
        )
        .unwrap();
        for k in b.recorded_steps() {
            assert_eq!(b.w(0, k), -b.w(1, k));
            assert_eq!(b.w(2, k), -b.w(3, k));
        }
        assert_ne!(b.w(0, 3), b.w(2, 3));
    }

    #[test]
    fn step_grid_hits_horizon() {
        let c = cfg(2, 0.3);
        let (n, dt) = c.step_grid(0.1, 1.0).unwrap();
        assert_eq!(n, 3);
        assert!((dt - 0.3).abs() < 1e-15);
        let t = step_times(0.1, 1.0, n);
        assert_eq!(*t.last().unwrap(), 1.0);
        assert!(c.step_grid(1.0, 1.0).is_err());
    }

    #[test]
    fn invalid_inputs() {
        let m = model();
        let z = (StrategyField::zero(), AdversaryField::zero());
        let bad_y = GameState {
            y: 0.0,
            ..Default::default()
        };
        assert!(simulate(&m, &z.0, &z.1, &bad_y, &cfg(4, 0.1), Measure::P).is_err());
        assert!(simulate(
            &m,
            &z.0,
            &z.1,
            &GameState::default(),
            &cfg(1, 0.1),
            Measure::P
        )
        .is_err());
        let late = GameState {
            t: 1.0,
            ..Default::default()
        };
        assert!(simulate(&m, &z.0, &z.1, &late, &cfg(4, 0.1), Measure::P).is_err());
        let blow = StrategyField::custom("nan", |_: &GameState| f64::NAN);
        let e = simulate(
            &m,
            &blow,
            &z.1,
            &GameState::default(),
            &cfg(4, 0.1),
            Measure::P,
        )
        .unwrap_err();
        assert!(e.to_string().contains("step 1"), "{e}");
    }

    #[test]
    fn measure_tag_is_checked() {
        let m = model();
        let b = simulate_recorded(
            &m,
            &StrategyField::zero(),
            &AdversaryField::zero(),
            &GameState::default(),
            &cfg(4, 0.1),
            Measure::P,
            Recording::Terminal,
        )
        .unwrap();
        assert!(matches!(
            estimate_objective(&b, ObjectiveMethod::Direct),
            Err(Error::MeasureMismatch { .. })
        ));
        assert!(estimate_objective(&b, ObjectiveMethod::Importance).is_ok());
    }

    #[test]
    fn frozen_objective() {
        let m = MarketModel::constant(0.2, 0.3, 0.0, 1e-9, 1.0, (-1.0, 1.0)).unwrap();
        let init = GameState::new(1.5, 0.5, 0.0, 0.0).unwrap();
        let b = simulate_recorded(
            &m,
            &StrategyField::zero(),
            &AdversaryField::zero(),
            &init,
            &cfg(100, 0.01),
            Measure::QEta,
            Recording::Terminal,
        )
        .unwrap();
        let e = estimate_objective(&b, ObjectiveMethod::Direct).unwrap();
        assert!((e.mean + 2.0).abs() < 1e-9);
    }

    #[test]
    fn density_is_a_martingale() {
        let m = model();
        let s = Arc::new(
            VasicekSolution::new(VasicekParams::default())
                .unwrap()
                .surface(),
        );
        let c = McConfig::new(3).with_paths(20_000).with_dt(0.02);
        let b = simulate_recorded(
            &m,
            &StrategyField::zero(),
            &AdversaryField::saddle(s),
            &GameState::default(),
            &c,
            Measure::P,
            Recording::Terminal,
        )
        .unwrap();
        let e = b.terminal_estimate(|_, y, _| y);
        assert!(e.z_score(1.0).abs() <= 3.0, "{e:?}");
    }

    #[test]
    fn terminal_and_full_recordings_agree_and_repeat() {
        let m = model();
        let s = Arc::new(
            VasicekSolution::new(VasicekParams::default())
                .unwrap()
                .surface(),
        );
        let pi = StrategyField::saddle(s.clone());
        let eta = AdversaryField::saddle(s);
        let c = cfg(600, 0.05);
        let full = simulate(&m, &pi, &eta, &GameState::default(), &c, Measure::QEta).unwrap();
        let again = simulate(&m, &pi, &eta, &GameState::default(), &c, Measure::QEta).unwrap();
        let term = simulate_recorded(
            &m,
            &pi,
            &eta,
            &GameState::default(),
            &c,
            Measure::QEta,
            Recording::Terminal,
        )
        .unwrap();
        for p in 0..c.n_paths {
            assert_eq!(full.terminal(p), term.terminal(p));
            for k in full.recorded_steps() {
                assert_eq!(full.x(p, k).to_bits(), again.x(p, k).to_bits());
                assert_eq!(full.y(p, k).to_bits(), again.y(p, k).to_bits());
                assert_eq!(full.r(p, k).to_bits(), again.r(p, k).to_bits());
            }
        }
        assert!(full.control.saddle);
    }
}
