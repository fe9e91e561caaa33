use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fields::{AdversaryField, StrategyField};
use crate::error::{invalid, Error, Result};
use crate::market::{GameState, MarketModel};
use crate::surface::{SurfacePoint, SurfaceSlice, ValueSurface};

/// Path groups (single paths, or antithetic pairs) per parallel block.
const BLOCK_GROUPS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    /// Requested step; the horizon is split into `ceil((T − t0)/dt)` equal
    /// steps.
    pub dt: f64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub antithetic: bool,
    /// Standard normals summed into each Brownian increment. A run with
    /// step `k·dt` and `k` substeps sees the same Brownian path as a run
    /// with step `dt` and one substep.
    #[serde(default = "default_one")]
    pub noise_substeps: usize,
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

impl McConfig {
    pub const DEFAULT_PATHS: usize = 200_000;
    pub const DEFAULT_DT: f64 = 1.0 / 252.0;

    pub fn new(seed: u64) -> Self {
        Self {
            n_paths: Self::DEFAULT_PATHS,
            dt: Self::DEFAULT_DT,
            seed,
            antithetic: true,
            noise_substeps: 1,
        }
    }

    pub fn with_paths(mut self, n: usize) -> Self {
        self.n_paths = n;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(invalid(
                "n_paths",
                format!("need at least 2 paths, got {}", self.n_paths),
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt", format!("must be > 0, got {}", self.dt)));
        }
        if self.noise_substeps == 0 {
            return Err(invalid("noise_substeps", "must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps and the effective step on `[t0, t1]`.
    pub fn step_grid(&self, t0: f64, t1: f64) -> Result<(usize, f64)> {
        if !(t1 > t0) {
            return Err(invalid("t0", format!("start time {t0} must precede {t1}")));
        }
        let n = (((t1 - t0) / self.dt) - 1e-9).ceil().max(1.0) as usize;
        Ok((n, (t1 - t0) / n as f64))
    }

    pub(crate) fn groups(&self) -> usize {
        if self.antithetic {
            self.n_paths.div_ceil(2)
        } else {
            self.n_paths
        }
    }
}

/// `t0 + (t1 − t0) k / n` for `k = 0..=n`, with the last entry exactly `t1`.
pub fn step_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=n)
        .map(|k| t0 + (t1 - t0) * k as f64 / n as f64)
        .collect();
    v[n] = t1;
    v
}

/// Independent stream for path group `g` of a run seeded with `seed`.
pub(crate) fn group_rng(seed: u64, g: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(g as u64);
    rng
}

/// Brownian increment of length `dt` built from `substeps` normals.
#[inline]
pub(crate) fn increment(rng: &mut ChaCha8Rng, substeps: usize, sqrt_sub: f64) -> f64 {
    let mut z = 0.0;
    for _ in 0..substeps {
        let d: f64 = StandardNormal.sample(rng);
        z += d;
    }
    z * sqrt_sub
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    /// Reference measure; the noise is `W`.
    #[default]
    P,
    /// Girsanov-shifted measure of the adversary; the noise is `W^η`.
    QEta,
}

impl Measure {
    pub fn name(&self) -> &'static str {
        match self {
            Measure::P => "p",
            Measure::QEta => "q-eta",
        }
    }
}

/// One strategy/adversary pair simulated on the shared noise.
#[derive(Debug, Clone)]
pub struct Control {
    pub strategy: StrategyField,
    pub adversary: AdversaryField,
}

impl Control {
    pub fn new(strategy: StrategyField, adversary: AdversaryField) -> Self {
        Self {
            strategy,
            adversary,
        }
    }
}

/// State of one control leg, with the controls applied from it.
#[derive(Debug, Clone, Copy, Default)]
pub struct LegState {
    pub x: f64,
    pub y: f64,
    pub r: f64,
    pub pi: f64,
    pub eta: f64,
    /// Surface point at `(r, t)` for the leg's strategy surface, else the
    /// adversary's; zero when the leg uses neither.
    pub point: SurfacePoint,
}

pub struct StepView<'a> {
    pub path: usize,
    pub step: usize,
    pub t: f64,
    /// Increment that led to this step; zero at step 0.
    pub dw: f64,
    /// Driving Brownian path (`W` under `P`, `W^η` under `Q^η`).
    pub w: f64,
    pub last: bool,
    pub legs: &'a [LegState],
}

/// Receives every state of every path. One observer is created per block
/// of paths; blocks are merged in path order.
pub trait PathObserver: Send {
    fn observe(&mut self, view: &StepView<'_>);
    fn merge(&mut self, later: Self)
    where
        Self: Sized;
}

#[derive(Clone, Copy, Default)]
struct Aux {
    log_growth: f64,
    lambda: f64,
    sigma: f64,
    mu_bar: f64,
    sigma_bar: f64,
}

struct PreparedLeg<'a> {
    strategy: &'a StrategyField,
    adversary: &'a AdversaryField,
    s_idx: Option<usize>,
    a_idx: Option<usize>,
}

struct Engine<'a> {
    model: &'a MarketModel,
    legs: Vec<PreparedLeg<'a>>,
    slices: Vec<Vec<SurfaceSlice<'a>>>,
    times: Vec<f64>,
    dt: f64,
    sqrt_sub: f64,
    substeps: usize,
    measure: Measure,
    seed: u64,
    antithetic: bool,
    n_paths: usize,
    init: GameState,
}

impl Engine<'_> {
    #[inline]
    fn controls(&self, k: usize, st: &mut LegState, aux: &mut Aux, leg: &PreparedLeg<'_>) {
        let t = self.times[k];
        let r = st.r;
        aux.lambda = self.model.lambda(r);
        aux.sigma = self.model.sigma(r, t);
        aux.mu_bar = self.model.mu_bar(r);
        aux.sigma_bar = self.model.sigma_bar(r);
        let ps = leg.s_idx.map(|i| self.slices[i][k].point(r));
        let pa = if leg.a_idx == leg.s_idx {
            ps
        } else {
            leg.a_idx.map(|i| self.slices[i][k].point(r))
        };
        let ps = ps.unwrap_or_default();
        let pa = pa.unwrap_or_default();
        let gs = GameState {
            x: st.x,
            y: st.y,
            r,
            t,
        };
        st.pi = leg
            .strategy
            .eval_at(&gs, &ps, aux.lambda, aux.sigma, aux.sigma_bar);
        st.eta = leg.adversary.eval_at(r, t, &pa, aux.lambda, aux.sigma_bar);
        st.point = if leg.s_idx.is_some() { ps } else { pa };
    }

    #[inline]
    fn advance(&self, st: &mut LegState, aux: &mut Aux, dw: f64) {
        let dt = self.dt;
        let (pi, eta, r, x) = (st.pi, st.eta, st.r, st.x);
        let vol = pi * aux.sigma;
        match self.measure {
            Measure::P => {
                st.x = x + (vol * aux.lambda + r * x) * dt + vol * dw;
                aux.log_growth += -0.5 * eta * eta * dt + eta * dw;
                st.r = r + aux.mu_bar * dt + aux.sigma_bar * dw;
            }
            Measure::QEta => {
                st.x = x + (vol * (aux.lambda + eta) + r * x) * dt + vol * dw;
                aux.log_growth += 0.5 * eta * eta * dt + eta * dw;
                st.r = r + (aux.mu_bar + aux.sigma_bar * eta) * dt + aux.sigma_bar * dw;
            }
        }
        st.y = self.init.y * aux.log_growth.exp();
    }

    fn group<O: PathObserver>(
        &self,
        g: usize,
        obs: &mut O,
        states: &mut Vec<LegState>,
        aux: &mut Vec<Aux>,
    ) -> Result<()> {
        let nl = self.legs.len();
        let (first, count) = if self.antithetic {
            (2 * g, (self.n_paths - 2 * g).min(2))
        } else {
            (g, 1)
        };
        states.clear();
        aux.clear();
        let init = LegState {
            x: self.init.x,
            y: self.init.y,
            r: self.init.r,
            ..Default::default()
        };
        states.resize(count * nl, init);
        aux.resize(count * nl, Aux::default());
        for j in 0..count * nl {
            self.controls(0, &mut states[j], &mut aux[j], &self.legs[j % nl]);
        }
        let n = self.times.len() - 1;
        let mut w = 0.0;
        for j in 0..count {
            obs.observe(&StepView {
                path: first + j,
                step: 0,
                t: self.times[0],
                dw: 0.0,
                w,
                last: n == 0,
                legs: &states[j * nl..(j + 1) * nl],
            });
        }
        let mut rng = group_rng(self.seed, g);
        for k in 0..n {
            let z = increment(&mut rng, self.substeps, self.sqrt_sub);
            w += z;
            for j in 0..count {
                let (dw, wj) = if j == 0 { (z, w) } else { (-z, -w) };
                for l in 0..nl {
                    let idx = j * nl + l;
                    self.advance(&mut states[idx], &mut aux[idx], dw);
                    self.controls(k + 1, &mut states[idx], &mut aux[idx], &self.legs[l]);
                    let s = &states[idx];
                    if !(s.x.is_finite()
                        && s.r.is_finite()
                        && s.y.is_finite()
                        && s.y > 0.0
                        && s.pi.is_finite()
                        && s.eta.is_finite())
                    {
                        return Err(Error::Numerical {
                            stage: "path simulation",
                            detail: format!(
                                "non-finite state at step {} of path {} (leg {l}): x = {}, y = {}, r = {}, pi = {}, eta = {}",
                                k + 1,
                                first + j,
                                s.x,
                                s.y,
                                s.r,
                                s.pi,
                                s.eta
                            ),
                        });
                    }
                }
                obs.observe(&StepView {
                    path: first + j,
                    step: k + 1,
                    t: self.times[k + 1],
                    dw,
                    w: wj,
                    last: k + 1 == n,
                    legs: &states[j * nl..(j + 1) * nl],
                });
            }
        }
        Ok(())
    }
}

fn surface_index<'a>(
    list: &mut Vec<&'a Arc<ValueSurface>>,
    s: Option<&'a Arc<ValueSurface>>,
) -> Option<usize> {
    let s = s?;
    if let Some(i) = list.iter().position(|v| Arc::ptr_eq(v, s)) {
        return Some(i);
    }
    list.push(s);
    Some(list.len() - 1)
}

pub(crate) fn check_init(model: &MarketModel, init: &GameState) -> Result<()> {
    if !(init.y > 0.0 && init.y.is_finite()) {
        return Err(invalid("y0", format!("must be positive, got {}", init.y)));
    }
    if !(init.x.is_finite() && init.r.is_finite()) {
        return Err(invalid("init", "x0 and r0 must be finite"));
    }
    if !(init.t >= 0.0 && init.t < model.horizon()) {
        return Err(invalid(
            "t0",
            format!("must lie in [0, {}), got {}", model.horizon(), init.t),
        ));
    }
    Ok(())
}

/// Simulates every control leg on shared noise from `init` to the horizon.
pub fn run_paths<O, M>(
    model: &MarketModel,
    controls: &[Control],
    init: &GameState,
    cfg: &McConfig,
    measure: Measure,
    make: M,
) -> Result<O>
where
    O: PathObserver,
    M: Fn() -> O + Sync,
{
    cfg.validate()?;
    check_init(model, init)?;
    if controls.is_empty() {
        return Err(invalid("controls", "need at least one control leg"));
    }
    let (n, dt) = cfg.step_grid(init.t, model.horizon())?;
    let times = step_times(init.t, model.horizon(), n);

    let mut surfaces = Vec::new();
    let legs: Vec<PreparedLeg<'_>> = controls
        .iter()
        .map(|c| PreparedLeg {
            strategy: &c.strategy,
            adversary: &c.adversary,
            s_idx: surface_index(&mut surfaces, c.strategy.surface()),
            a_idx: surface_index(&mut surfaces, c.adversary.surface()),
        })
        .collect();
    let slices = surfaces
        .iter()
        .map(|s| times.iter().map(|&t| s.slice(t)).collect())
        .collect();

    let engine = Engine {
        model,
        legs,
        slices,
        times,
        dt,
        sqrt_sub: (dt / cfg.noise_substeps as f64).sqrt(),
        substeps: cfg.noise_substeps,
        measure,
        seed: cfg.seed,
        antithetic: cfg.antithetic,
        n_paths: cfg.n_paths,
        init: *init,
    };
    let groups = cfg.groups();
    let blocks = groups.div_ceil(BLOCK_GROUPS);
    let parts: Vec<Result<O>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut obs = make();
            let mut states = Vec::new();
            let mut aux = Vec::new();
            for g in b * BLOCK_GROUPS..((b + 1) * BLOCK_GROUPS).min(groups) {
                engine.group(g, &mut obs, &mut states, &mut aux)?;
            }
            Ok(obs)
        })
        .collect();
    let mut it = parts.into_iter();
    let mut acc = it.next().expect("at least one block")?;
    for p in it {
        acc.merge(p?);
    }
    Ok(acc)
}
