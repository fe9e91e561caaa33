//! Finite-difference solution of the reduced linear PDE chain.
//!
//! The semilinear `H` equation is never discretised directly. Instead the
//! substitution `H = −e^{r(T−t)}/F` turns it into the linear problem
//!
//! ```text
//! F_t + φ F + [μ̄ − σ̄λ − σ̄²(T−t)] F_r + ½σ̄² F_rr = 0,   F(r,T) = 1
//! φ(r,t) = ½σ̄²(T−t)² − (T−t)(μ̄ − σ̄λ)
//! ```
//!
//! and, with `q = (T−t) − F_r/F = H_r/H`, the `G` equation becomes
//!
//! ```text
//! G_t + ½σ̄² G_rr + (λ + σ̄q)² G + (μ̄ − 2σ̄λ − 2σ̄²q) G_r = 0,   G(r,T) = −1
//! ```
//!
//! Both are marched backward in time with a θ-weighted scheme (default
//! Crank–Nicolson) and one tridiagonal solve per step.

mod residual;
mod tridiag;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::closed_form::VasicekSolution;
use crate::error::{invalid, Error, Result};
use crate::market::{MarketModel, VasicekParams, DEFAULT_ELLIPTICITY_FLOOR};
use crate::surface::{GridSurface, ValueSurface};

pub use residual::{
    closed_form_errors, residual_report, spatial_self_convergence, ClosedFormErrors,
    ConvergenceStudy, ResidualReport,
};
pub use tridiag::solve_tridiagonal;

pub type BoundaryFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Conditions imposed at `r_min` and `r_max`.
#[derive(Clone)]
pub enum BoundaryCondition {
    /// `u_rr = 0` at both ends, imposed as linear extrapolation from the
    /// two nearest interior nodes.
    Linearity,
    /// Prescribed boundary values for `F` and `G`.
    Dirichlet { f: BoundaryFn, g: BoundaryFn },
}

impl fmt::Debug for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl BoundaryCondition {
    /// Dirichlet data taken from the Vasicek closed form.
    pub fn closed_form(sol: &VasicekSolution) -> Self {
        let fs = sol.clone();
        let gs = sol.clone();
        let t_max = sol.horizon();
        BoundaryCondition::Dirichlet {
            f: Arc::new(move |r, t| fs.f(r, t.clamp(0.0, t_max)).expect("clamped time")),
            g: Arc::new(move |_, t| gs.g(t.clamp(0.0, t_max)).expect("clamped time")),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BoundaryCondition::Linearity => "linearity",
            BoundaryCondition::Dirichlet { .. } => "dirichlet",
        }
    }
}

/// Uniform `(r, t)` grid on `[r_min, r_max] × [0, T]`.
#[derive(Debug, Clone)]
pub struct PdeGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub n_t: usize,
    pub boundary: BoundaryCondition,
}

impl PdeGrid {
    pub fn new(
        r_min: f64,
        r_max: f64,
        n_r: usize,
        n_t: usize,
        boundary: BoundaryCondition,
    ) -> Result<Self> {
        if !(r_min.is_finite() && r_max.is_finite() && r_min < r_max) {
            return Err(invalid(
                "r_min",
                format!("need r_min < r_max, got [{r_min}, {r_max}]"),
            ));
        }
        if n_r < 3 {
            return Err(invalid("nr", format!("need at least 3 nodes, got {n_r}")));
        }
        if n_r < 4 && matches!(boundary, BoundaryCondition::Linearity) {
            return Err(invalid("nr", "linearity boundaries need at least 4 nodes"));
        }
        if n_t < 1 {
            return Err(invalid("nt", "need at least one time step"));
        }
        Ok(Self {
            r_min,
            r_max,
            n_r,
            n_t,
            boundary,
        })
    }

    /// Stationary mean ± 6 stationary standard deviations.
    pub fn vasicek_default(params: &VasicekParams, n_r: usize, n_t: usize) -> Result<Self> {
        let (lo, hi) = params.default_domain();
        Self::new(lo, hi, n_r, n_t, BoundaryCondition::Linearity)
    }

    pub fn dr(&self) -> f64 {
        (self.r_max - self.r_min) / (self.n_r - 1) as f64
    }

    pub fn r(&self, i: usize) -> f64 {
        self.r_min + self.dr() * i as f64
    }

    /// Same domain with `n_r` replaced.
    pub fn with_nodes(&self, n_r: usize) -> Result<Self> {
        Self::new(self.r_min, self.r_max, n_r, self.n_t, self.boundary.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpwindMode {
    Off,
    /// One-sided first derivatives where the cell Péclet number exceeds 1.
    Auto,
    Always,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchemeConfig {
    /// Implicit weight; 0.5 is Crank–Nicolson, 1.0 fully implicit.
    pub theta: f64,
    pub upwind: UpwindMode,
    pub ellipticity_floor: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            upwind: UpwindMode::Auto,
            ellipticity_floor: DEFAULT_ELLIPTICITY_FLOOR,
        }
    }
}

impl SchemeConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(invalid(
                "theta",
                format!("must lie in [0, 1], got {}", self.theta),
            ));
        }
        if !(self.ellipticity_floor >= 0.0) {
            return Err(invalid("ellipticity_floor", "must be non-negative"));
        }
        Ok(())
    }
}

/// Zeroth-order coefficient of the F-equation:
/// `φ(r,t) = ½σ̄²(T−t)² − (T−t)(μ̄ − σ̄λ)`.
pub fn potential_phi(r: f64, t: f64, model: &MarketModel) -> f64 {
    let tau = model.horizon() - t;
    let sb = model.sigma_bar(r);
    0.5 * sb * sb * tau * tau - tau * (model.mu_bar(r) - sb * model.lambda(r))
}

/// Solved `F` with the stored log-slope `F_r/F`.
#[derive(Debug, Clone)]
pub struct FSolution {
    pub grid: PdeGrid,
    pub scheme: SchemeConfig,
    horizon: f64,
    /// `f[n * n_r + i]` at `(r_i, t_n)`.
    f: Vec<f64>,
    f_r_over_f: Vec<f64>,
}

impl FSolution {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.grid.n_t as f64
    }

    pub fn t(&self, n: usize) -> f64 {
        if n == self.grid.n_t {
            self.horizon
        } else {
            self.dt() * n as f64
        }
    }

    pub fn f(&self, n: usize, i: usize) -> f64 {
        self.f[n * self.grid.n_r + i]
    }

    pub fn f_r_over_f(&self, n: usize, i: usize) -> f64 {
        self.f_r_over_f[n * self.grid.n_r + i]
    }

    pub fn f_values(&self) -> &[f64] {
        &self.f
    }

    /// Bilinear interpolation of `F_r/F`; rates outside the grid take the
    /// boundary value.
    pub fn f_r_over_f_clamped(&self, r: f64, t: f64) -> f64 {
        bilinear(&self.f_r_over_f, &self.grid, self.dt(), r, t)
    }

    pub fn f_interp(&self, r: f64, t: f64) -> f64 {
        bilinear(&self.f, &self.grid, self.dt(), r, t)
    }

    /// `(T − t) − F_r/F`, which equals `H_r/H`.
    pub fn log_slope_h(&self, r: f64, t: f64) -> f64 {
        (self.horizon - t) - self.f_r_over_f_clamped(r, t)
    }

    pub fn contains(&self, r: f64, t: f64) -> bool {
        r >= self.grid.r_min && r <= self.grid.r_max && (0.0..=self.horizon).contains(&t)
    }
}

fn bilinear(v: &[f64], grid: &PdeGrid, dt: f64, r: f64, t: f64) -> f64 {
    let nr = grid.n_r;
    let nt = grid.n_t;
    let x = ((r - grid.r_min) / grid.dr()).clamp(0.0, (nr - 1) as f64);
    let i = (x.floor() as usize).min(nr - 2);
    let u = x - i as f64;
    let s = (t / dt).clamp(0.0, nt as f64);
    let n = (s.floor() as usize).min(nt - 1);
    let w = s - n as f64;
    let at = |n: usize| {
        let k = n * nr + i;
        v[k] + u * (v[k + 1] - v[k])
    };
    let a = at(n);
    a + w * (at(n + 1) - a)
}

/// Reconstructed `H = −e^{r(T−t)}/F` and `H_r = H·((T−t) − F_r/F)`.
#[derive(Debug, Clone)]
pub struct HGrid {
    pub h: Vec<f64>,
    pub h_r: Vec<f64>,
}

/// Full solution of the chain: `F`, `H` and `G` on one grid.
#[derive(Debug, Clone)]
pub struct PdeSolution {
    pub f: FSolution,
    pub h: HGrid,
    g: Vec<f64>,
    g_r: Vec<f64>,
}

impl PdeSolution {
    pub fn grid(&self) -> &PdeGrid {
        &self.f.grid
    }

    pub fn g(&self, n: usize, i: usize) -> f64 {
        self.g[n * self.f.grid.n_r + i]
    }

    pub fn h(&self, n: usize, i: usize) -> f64 {
        self.h.h[n * self.f.grid.n_r + i]
    }

    pub fn h_r(&self, n: usize, i: usize) -> f64 {
        self.h.h_r[n * self.f.grid.n_r + i]
    }

    pub fn g_values(&self) -> &[f64] {
        &self.g
    }

    /// Interpolating value surface with finite-difference second and time
    /// derivatives.
    pub fn surface(&self) -> ValueSurface {
        let grid = &self.f.grid;
        let (nr, nt) = (grid.n_r, grid.n_t);
        let dt = self.f.dt();
        let dr = grid.dr();
        let h_rr = d_dr(&self.h.h_r, nr, nt, dr);
        let g_rr = d_dr(&self.g_r, nr, nt, dr);
        let h_t = d_dt(&self.h.h, nr, nt, dt);
        let g_t = d_dt(&self.g, nr, nt, dt);
        ValueSurface::Grid(GridSurface {
            r_min: grid.r_min,
            dr,
            n_r: nr,
            t_start: 0.0,
            dt,
            n_t: nt,
            h: self.h.h.clone(),
            h_r: self.h.h_r.clone(),
            h_rr,
            h_t,
            g: self.g.clone(),
            g_r: self.g_r.clone(),
            g_rr,
            g_t,
        })
    }
}

/// `d/dr` per time level: central inside, second-order one-sided at ends.
fn d_dr(v: &[f64], nr: usize, nt: usize, dr: f64) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for n in 0..=nt {
        let row = &v[n * nr..(n + 1) * nr];
        let o = &mut out[n * nr..(n + 1) * nr];
        slope_row(row, dr, o);
    }
    out
}

fn slope_row(row: &[f64], dr: f64, out: &mut [f64]) {
    let nr = row.len();
    for i in 1..nr - 1 {
        out[i] = (row[i + 1] - row[i - 1]) / (2.0 * dr);
    }
    if nr >= 3 {
        out[0] = (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * dr);
        out[nr - 1] = (3.0 * row[nr - 1] - 4.0 * row[nr - 2] + row[nr - 3]) / (2.0 * dr);
    }
}

fn d_dt(v: &[f64], nr: usize, nt: usize, dt: f64) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for i in 0..nr {
        let at = |n: usize| v[n * nr + i];
        for n in 0..=nt {
            out[n * nr + i] = if nt == 1 {
                (at(1) - at(0)) / dt
            } else if n == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * dt)
            } else if n == nt {
                (3.0 * at(nt) - 4.0 * at(nt - 1) + at(nt - 2)) / (2.0 * dt)
            } else {
                (at(n + 1) - at(n - 1)) / (2.0 * dt)
            };
        }
    }
    out
}

fn check_ellipticity(model: &MarketModel, grid: &PdeGrid, floor: f64) -> Result<()> {
    for i in 0..grid.n_r {
        let r = grid.r(i);
        let v = model.sigma_bar(r).powi(2);
        if !(v >= floor && v > 0.0) {
            return Err(Error::Degenerate { r, value: v, floor });
        }
    }
    Ok(())
}

/// Spatial operator weights `L u_i = lo u_{i−1} + di u_i + up u_{i+1}`
/// for `a u_rr + b u_r + c u`.
#[derive(Clone)]
struct Weights {
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
}

impl Weights {
    fn build(coeffs: &[[f64; 3]], dr: f64, upwind: UpwindMode) -> Self {
        let n = coeffs.len();
        let mut w = Weights {
            lo: vec![0.0; n],
            di: vec![0.0; n],
            up: vec![0.0; n],
        };
        let dr2 = dr * dr;
        for (i, &[a, b, c]) in coeffs.iter().enumerate() {
            let one_sided = match upwind {
                UpwindMode::Off => false,
                UpwindMode::Always => true,
                UpwindMode::Auto => b.abs() * dr > 2.0 * a,
            };
            let (lo, di, up) = if !one_sided {
                (
                    a / dr2 - b / (2.0 * dr),
                    -2.0 * a / dr2 + c,
                    a / dr2 + b / (2.0 * dr),
                )
            } else if b > 0.0 {
                (a / dr2, -2.0 * a / dr2 - b / dr + c, a / dr2 + b / dr)
            } else {
                (a / dr2 - b / dr, -2.0 * a / dr2 + b / dr + c, a / dr2)
            };
            w.lo[i] = lo;
            w.di[i] = di;
            w.up[i] = up;
        }
        w
    }
}

struct MarchPlan<'a> {
    stage: &'static str,
    terminal: f64,
    dirichlet: Option<&'a BoundaryFn>,
    /// Accepts a node value; sign convention of the unknown.
    admissible: fn(f64) -> bool,
}

/// Marches `u_t + a u_rr + b u_r + c u = 0` from `t = T` down to `t = 0`.
fn march<C>(
    grid: &PdeGrid,
    scheme: &SchemeConfig,
    horizon: f64,
    coeffs: C,
    plan: MarchPlan<'_>,
) -> Result<Vec<f64>>
where
    C: Fn(usize, f64, f64) -> [f64; 3],
{
    let nr = grid.n_r;
    let nt = grid.n_t;
    let dr = grid.dr();
    let dt = horizon / nt as f64;
    let theta = scheme.theta;
    let time = |n: usize| if n == nt { horizon } else { dt * n as f64 };
    let rs: Vec<f64> = (0..nr).map(|i| grid.r(i)).collect();
    let level_weights = |n: usize| {
        let t = time(n);
        let c: Vec<[f64; 3]> = (0..nr).map(|i| coeffs(n, rs[i], t)).collect();
        Weights::build(&c, dr, scheme.upwind)
    };

    let mut field = vec![0.0; (nt + 1) * nr];
    field[nt * nr..].fill(plan.terminal);

    let m = nr - 2;
    let mut sub = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut sup = vec![0.0; m];
    let mut rhs = vec![0.0; m];

    let mut w_next = level_weights(nt);
    for n in (0..nt).rev() {
        let w_now = level_weights(n);
        let t_now = time(n);
        let (head, tail) = field.split_at_mut((n + 1) * nr);
        let u_next = &tail[..nr];
        let u_now = &mut head[n * nr..];

        for i in 1..nr - 1 {
            let j = i - 1;
            let lu = w_next.lo[i] * u_next[i - 1]
                + w_next.di[i] * u_next[i]
                + w_next.up[i] * u_next[i + 1];
            rhs[j] = u_next[i] + (1.0 - theta) * dt * lu;
            sub[j] = -theta * dt * w_now.lo[i];
            diag[j] = 1.0 - theta * dt * w_now.di[i];
            sup[j] = -theta * dt * w_now.up[i];
        }

        let (b_lo, b_hi) = match plan.dirichlet {
            Some(bf) => {
                let lo = bf(rs[0], t_now);
                let hi = bf(rs[nr - 1], t_now);
                rhs[0] += theta * dt * w_now.lo[1] * lo;
                rhs[m - 1] += theta * dt * w_now.up[nr - 2] * hi;
                (Some(lo), Some(hi))
            }
            None => {
                // u_0 = 2u_1 − u_2 and u_{N−1} = 2u_{N−2} − u_{N−3}
                let l1 = w_now.lo[1];
                diag[0] -= theta * dt * 2.0 * l1;
                sup[0] += theta * dt * l1;
                let pn = w_now.up[nr - 2];
                diag[m - 1] -= theta * dt * 2.0 * pn;
                sub[m - 1] += theta * dt * pn;
                (None, None)
            }
        };

        solve_tridiagonal(&sub, &diag, &sup, &mut rhs)?;
        u_now[1..nr - 1].copy_from_slice(&rhs);
        u_now[0] = b_lo.unwrap_or(2.0 * u_now[1] - u_now[2]);
        u_now[nr - 1] = b_hi.unwrap_or(2.0 * u_now[nr - 2] - u_now[nr - 3]);

        if let Some(i) = (0..nr).find(|&i| !(u_now[i].is_finite() && (plan.admissible)(u_now[i]))) {
            return Err(Error::Numerical {
                stage: plan.stage,
                detail: format!(
                    "value {} at r = {}, t = {} (step {n} of {nt}, n_r = {nr}, theta = {theta}, boundary = {})",
                    u_now[i],
                    rs[i],
                    t_now,
                    grid.boundary.name()
                ),
            });
        }
        w_next = w_now;
    }
    Ok(field)
}

/// Solves the linear F-equation with `F(·,T) = 1`.
pub fn solve_f(model: &MarketModel, grid: &PdeGrid, scheme: &SchemeConfig) -> Result<FSolution> {
    scheme.validate()?;
    check_ellipticity(model, grid, scheme.ellipticity_floor)?;
    let horizon = model.horizon();
    let dirichlet = match &grid.boundary {
        BoundaryCondition::Dirichlet { f, .. } => Some(f),
        BoundaryCondition::Linearity => None,
    };
    let f = march(
        grid,
        scheme,
        horizon,
        |_, r, t| {
            let sb = model.sigma_bar(r);
            let drift = model.mu_bar(r) - sb * model.lambda(r) - sb * sb * (horizon - t);
            [0.5 * sb * sb, drift, potential_phi(r, t, model)]
        },
        MarchPlan {
            stage: "F solve (F must stay positive)",
            terminal: 1.0,
            dirichlet,
            admissible: |v| v > 0.0,
        },
    )?;

    let (nr, nt) = (grid.n_r, grid.n_t);
    let dr = grid.dr();
    let mut ratio = d_dr(&f, nr, nt, dr);
    for (q, v) in ratio.iter_mut().zip(&f) {
        *q /= v;
    }
    Ok(FSolution {
        grid: grid.clone(),
        scheme: *scheme,
        horizon,
        f,
        f_r_over_f: ratio,
    })
}

/// `H = −e^{r(T−t)}/F` and `H_r = H·((T−t) − F_r/F)` at every node.
pub fn reconstruct_h(sol: &FSolution) -> HGrid {
    let grid = &sol.grid;
    let nr = grid.n_r;
    let mut h = vec![0.0; sol.f.len()];
    let mut h_r = vec![0.0; sol.f.len()];
    for n in 0..=grid.n_t {
        let tau = sol.horizon - sol.t(n);
        for i in 0..nr {
            let k = n * nr + i;
            let r = grid.r(i);
            let hv = -(r * tau).exp() / sol.f[k];
            h[k] = hv;
            h_r[k] = hv * (tau - sol.f_r_over_f[k]);
        }
    }
    HGrid { h, h_r }
}

/// Solves the G-equation on the grid of `f_sol`, using its stored `F_r/F`.
pub fn solve_g(model: &MarketModel, f_sol: &FSolution) -> Result<PdeSolution> {
    let grid = &f_sol.grid;
    let scheme = &f_sol.scheme;
    check_ellipticity(model, grid, scheme.ellipticity_floor)?;
    let horizon = f_sol.horizon;
    let nr = grid.n_r;
    let dirichlet = match &grid.boundary {
        BoundaryCondition::Dirichlet { g, .. } => Some(g),
        BoundaryCondition::Linearity => None,
    };
    let g = march(
        grid,
        scheme,
        horizon,
        |n, r, t| {
            let i = ((r - grid.r_min) / grid.dr()).round() as usize;
            let q = (horizon - t) - f_sol.f_r_over_f[n * nr + i];
            let sb = model.sigma_bar(r);
            let lam = model.lambda(r);
            let k = lam + sb * q;
            [
                0.5 * sb * sb,
                model.mu_bar(r) - 2.0 * sb * lam - 2.0 * sb * sb * q,
                k * k,
            ]
        },
        MarchPlan {
            stage: "G solve (G must stay negative)",
            terminal: -1.0,
            dirichlet,
            admissible: |v| v < 0.0,
        },
    )?;
    let g_r = d_dr(&g, nr, grid.n_t, grid.dr());
    Ok(PdeSolution {
        h: reconstruct_h(f_sol),
        f: f_sol.clone(),
        g,
        g_r,
    })
}

/// `solve_f` followed by `solve_g`.
pub fn solve(model: &MarketModel, grid: &PdeGrid, scheme: &SchemeConfig) -> Result<PdeSolution> {
    let f = solve_f(model, grid, scheme)?;
    solve_g(model, &f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{vasicek_to_model, SigmaSchedule};
    use crate::quadrature::GaussLegendre;

    fn vasicek() -> VasicekParams {
        VasicekParams {
            lambda: 0.2,
            sigma: SigmaSchedule::Constant(0.3),
            theta_bar: 0.02,
            alpha: 1.0,
            sigma_bar: 0.1,
            horizon: 1.0,
        }
    }

    #[test]
    fn phi_values() {
        let m = MarketModel::constant(0.2, 0.3, 0.02, 0.1, 2.0, (-1.0, 1.0)).unwrap();
        assert_eq!(potential_phi(0.0, 2.0, &m), 0.0);
        // T − t = 1: ½·0.01·1 − 1·(0.02 − 0.02)
        assert!((potential_phi(0.3, 1.0, &m) - 0.005).abs() < 1e-16);

        let v = vasicek_to_model(&vasicek()).unwrap();
        let t = 0.25;
        let slope = (potential_phi(0.2, t, &v) - potential_phi(-0.1, t, &v)) / 0.3;
        assert!((slope - 1.0 * 0.75).abs() < 1e-13);
    }

    #[test]
    fn grid_validation() {
        assert!(PdeGrid::new(0.0, 0.0, 10, 10, BoundaryCondition::Linearity).is_err());
        assert!(PdeGrid::new(0.0, 1.0, 2, 10, BoundaryCondition::Linearity).is_err());
        assert!(PdeGrid::new(0.0, 1.0, 3, 10, BoundaryCondition::Linearity).is_err());
        assert!(PdeGrid::new(0.0, 1.0, 10, 0, BoundaryCondition::Linearity).is_err());
        let g = PdeGrid::new(0.0, 1.0, 11, 4, BoundaryCondition::Linearity).unwrap();
        assert!((g.dr() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn degenerate_sigma_bar_is_rejected() {
        let m = MarketModel::constant(0.2, 0.3, 0.0, 0.0, 1.0, (-1.0, 1.0)).unwrap();
        let g = PdeGrid::new(-0.1, 0.1, 21, 10, BoundaryCondition::Linearity).unwrap();
        assert!(matches!(
            solve_f(&m, &g, &SchemeConfig::default()),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn r_constant_coefficients_give_flat_f() {
        let m = MarketModel::constant(0.2, 0.3, 0.01, 0.15, 1.0, (-1.0, 1.0)).unwrap();
        let g = PdeGrid::new(-0.5, 0.5, 101, 200, BoundaryCondition::Linearity).unwrap();
        let sol = solve_f(&m, &g, &SchemeConfig::default()).unwrap();
        let q = GaussLegendre::new(32);
        for n in 0..=g.n_t {
            let t = sol.t(n);
            let oracle = q.integrate(|s| potential_phi(0.0, s, &m), t, 1.0).exp();
            let row: Vec<f64> = (0..g.n_r).map(|i| sol.f(n, i)).collect();
            let spread = row.iter().cloned().fold(f64::MIN, f64::max)
                - row.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread <= 1e-10, "spread {spread} at n = {n}");
            assert!((row[50] / oracle - 1.0).abs() < 1e-6);
        }
        assert!((0..g.n_r).all(|i| sol.f(g.n_t, i) == 1.0));
    }

    #[test]
    fn zero_potential_reconstruction() {
        // mu_bar = sigma_bar·lambda with tiny sigma_bar gives phi ≈ 0 and F ≈ 1.
        let m = MarketModel::constant(0.0, 0.3, 0.0, 1e-6, 1.0, (-1.0, 1.0)).unwrap();
        let g = PdeGrid::new(-0.2, 0.2, 41, 20, BoundaryCondition::Linearity).unwrap();
        let scheme = SchemeConfig {
            ellipticity_floor: 1e-12,
            ..Default::default()
        };
        let sol = solve(&m, &g, &scheme).unwrap();
        for n in [0, 7, 20] {
            let tau = 1.0 - sol.f.t(n);
            for i in [0, 13, 40] {
                let r = g.r(i);
                assert!((sol.h(n, i) + (r * tau).exp()).abs() < 1e-9);
                assert!((sol.h_r(n, i) / sol.h(n, i) - tau).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn terminal_slices_are_exact() {
        let m = vasicek_to_model(&vasicek()).unwrap();
        let g = PdeGrid::vasicek_default(&vasicek(), 61, 30).unwrap();
        let sol = solve(&m, &g, &SchemeConfig::default()).unwrap();
        for i in 0..g.n_r {
            assert_eq!(sol.f.f(g.n_t, i), 1.0);
            assert_eq!(sol.g(g.n_t, i), -1.0);
            assert_eq!(sol.h(g.n_t, i), -1.0);
        }
    }

    #[test]
    fn vasicek_f_h_g_match_closed_form() {
        let p = vasicek();
        let m = vasicek_to_model(&p).unwrap();
        let cf = VasicekSolution::new(p.clone()).unwrap();
        let g = PdeGrid::vasicek_default(&p, 201, 200).unwrap();
        let sol = solve(&m, &g, &SchemeConfig::default()).unwrap();
        let mut worst = [0.0f64; 4];
        for n in 0..=g.n_t {
            let t = sol.f.t(n);
            for i in 20..g.n_r - 20 {
                let r = g.r(i);
                let f_err = (sol.f.f(n, i) / cf.f(r, t).unwrap() - 1.0).abs();
                let h_err = (sol.h(n, i) / cf.h(r, t).unwrap() - 1.0).abs();
                let q_err = (sol.h_r(n, i) / sol.h(n, i) - cf.b1(t).unwrap()).abs();
                let g_err = (sol.g(n, i) / cf.g(t).unwrap() - 1.0).abs();
                for (w, e) in worst.iter_mut().zip([f_err, h_err, q_err, g_err]) {
                    *w = w.max(e);
                }
            }
        }
        assert!(worst.iter().all(|&e| e < 1e-3), "{worst:?}");
    }

    #[test]
    fn dirichlet_closed_form_boundaries() {
        let p = vasicek();
        let m = vasicek_to_model(&p).unwrap();
        let cf = VasicekSolution::new(p.clone()).unwrap();
        let (lo, hi) = p.default_domain();
        let g = PdeGrid::new(lo, hi, 101, 100, BoundaryCondition::closed_form(&cf)).unwrap();
        let sol = solve(&m, &g, &SchemeConfig::default()).unwrap();
        assert!((sol.f.f(0, 0) / cf.f(lo, 0.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((sol.g(0, 50) / cf.g(0.0).unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn degenerate_constant_rate_g() {
        // sigma_bar = 1e-6: G(t) ≈ −exp(λ²(T − t)).
        let m = MarketModel::constant(0.3, 0.2, 0.0, 1e-6, 1.0, (-1.0, 1.0)).unwrap();
        let g = PdeGrid::new(-0.1, 0.2, 31, 100, BoundaryCondition::Linearity).unwrap();
        let scheme = SchemeConfig {
            ellipticity_floor: 1e-12,
            ..Default::default()
        };
        let sol = solve(&m, &g, &scheme).unwrap();
        for n in [0, 50, 100] {
            let tau = 1.0 - sol.f.t(n);
            let exact = -(0.09 * tau).exp();
            assert!((sol.g(n, 15) / exact - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn vasicek_g_is_flat_in_r() {
        let p = vasicek();
        let m = vasicek_to_model(&p).unwrap();
        let g = PdeGrid::vasicek_default(&p, 201, 100).unwrap();
        let sol = solve(&m, &g, &SchemeConfig::default()).unwrap();
        for n in 0..=g.n_t {
            let row: Vec<f64> = (0..g.n_r).map(|i| sol.g(n, i)).collect();
            let spread = row.iter().cloned().fold(f64::MIN, f64::max)
                - row.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread < 1e-4, "spread {spread}");
        }
    }
}
