//! Explicit Vasicek solution and the saddle-point feedback formulas.
//!
//! With `τ = T − t`:
//!
//! ```text
//! B1(t) = (1 − e^{−ατ}) / α
//! A1(t) = −exp{ ∫_t^T (θ̄ − σ̄λ) B1(s) − ½ σ̄² B1(s)² ds }
//! A2(t) = −exp{ ∫_t^T (λ + σ̄ B1(s))² ds }
//! H(r,t) = A1(t) e^{B1(t) r},   G(r,t) = A2(t)
//! ```
//!
//! The integrals use fixed-node Gauss–Legendre quadrature. All derivatives
//! are analytic: `A1' = −A1·f1(t)`, `A2' = −A2·f2(t)`, `B1' = −e^{−ατ}`.
//!
//! The feedback formulas [`pi_star`], [`eta_star`] and [`eta_best_response`]
//! are written against a generic [`ValueSurface`] and are shared with the
//! PDE-grid surfaces.

use crate::error::{Error, Result};
use crate::market::{GameState, MarketModel, VasicekParams};
use crate::quadrature::GaussLegendre;
use crate::surface::{SurfacePoint, ValueSurface};

pub const DEFAULT_QUADRATURE_NODES: usize = 64;

#[derive(Debug, Clone)]
pub struct VasicekSolution {
    params: VasicekParams,
    quadrature: GaussLegendre,
}

impl VasicekSolution {
    pub fn new(params: VasicekParams) -> Result<Self> {
        Self::with_nodes(params, DEFAULT_QUADRATURE_NODES)
    }

    pub fn with_nodes(params: VasicekParams, quadrature_nodes: usize) -> Result<Self> {
        params.validate()?;
        if quadrature_nodes == 0 {
            return Err(crate::error::invalid(
                "quadrature_nodes",
                "must be positive",
            ));
        }
        Ok(Self {
            params,
            quadrature: GaussLegendre::new(quadrature_nodes),
        })
    }

    pub fn params(&self) -> &VasicekParams {
        &self.params
    }

    pub fn horizon(&self) -> f64 {
        self.params.horizon
    }

    pub fn quadrature_nodes(&self) -> usize {
        self.quadrature.len()
    }

    fn check(&self, t: f64) -> Result<()> {
        let hi = self.params.horizon;
        if !(0.0..=hi).contains(&t) {
            return Err(Error::TimeOutOfRange { t, lo: 0.0, hi });
        }
        Ok(())
    }

    #[inline]
    fn b1_raw(&self, t: f64) -> f64 {
        let tau = self.params.horizon - t;
        -(-self.params.alpha * tau).exp_m1() / self.params.alpha
    }

    fn f1(&self, s: f64) -> f64 {
        let p = &self.params;
        let b = self.b1_raw(s);
        (p.theta_bar - p.sigma_bar * p.lambda) * b - 0.5 * p.sigma_bar * p.sigma_bar * b * b
    }

    fn f2(&self, s: f64) -> f64 {
        let p = &self.params;
        let e = p.lambda + p.sigma_bar * self.b1_raw(s);
        e * e
    }

    fn a1_raw(&self, t: f64) -> f64 {
        let i = self
            .quadrature
            .integrate(|s| self.f1(s), t, self.params.horizon);
        -i.exp()
    }

    fn a2_raw(&self, t: f64) -> f64 {
        let i = self
            .quadrature
            .integrate(|s| self.f2(s), t, self.params.horizon);
        -i.exp()
    }

    pub fn b1(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.b1_raw(t))
    }

    pub fn a1(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.a1_raw(t))
    }

    pub fn a2(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.a2_raw(t))
    }

    /// `H(r,t) = A1(t) e^{B1(t) r}`.
    pub fn h(&self, r: f64, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.a1_raw(t) * (self.b1_raw(t) * r).exp())
    }

    /// `H_r = B1 H`.
    pub fn h_r(&self, r: f64, t: f64) -> Result<f64> {
        Ok(self.b1(t)? * self.h(r, t)?)
    }

    /// `G(r,t) = A2(t)`; the rate argument is irrelevant.
    pub fn g(&self, t: f64) -> Result<f64> {
        self.a2(t)
    }

    /// `F = −e^{r(T−t)} / H`, the solution of the linear F-equation.
    pub fn f(&self, r: f64, t: f64) -> Result<f64> {
        let h = self.h(r, t)?;
        Ok(-(r * (self.params.horizon - t)).exp() / h)
    }

    /// `η*(π*) = −λ − σ̄ B1(t)`.
    pub fn eta_star(&self, t: f64) -> Result<f64> {
        Ok(-self.params.lambda - self.params.sigma_bar * self.b1(t)?)
    }

    /// Saddle investment written in the Vasicek-specific form
    /// `(2y/σ)(λ + σ̄B1)(A2/A1)e^{−B1 r} − x(σ̄/σ)B1`.
    pub fn pi_star_vasicek(&self, state: &GameState) -> Result<f64> {
        self.check(state.t)?;
        let p = &self.params;
        let t = state.t;
        let (b1, a1, a2) = (self.b1_raw(t), self.a1_raw(t), self.a2_raw(t));
        let sigma = p.sigma.eval(t);
        Ok(
            2.0 * state.y / sigma * (p.lambda + p.sigma_bar * b1) * a2 / a1 * (-b1 * state.r).exp()
                - state.x * p.sigma_bar / sigma * b1,
        )
    }

    /// Time-only quantities at `t`, clamped into `[0, T]`.
    pub fn slice_clamped(&self, t: f64) -> VasicekSlice {
        let t = t.clamp(0.0, self.params.horizon);
        let a1 = self.a1_raw(t);
        let a2 = self.a2_raw(t);
        VasicekSlice {
            b1: self.b1_raw(t),
            b1_dot: -(-self.params.alpha * (self.params.horizon - t)).exp(),
            a1,
            a1_dot: -a1 * self.f1(t),
            a2,
            a2_dot: -a2 * self.f2(t),
        }
    }

    pub fn slice(&self, t: f64) -> Result<VasicekSlice> {
        self.check(t)?;
        Ok(self.slice_clamped(t))
    }

    pub fn surface(self) -> ValueSurface {
        ValueSurface::ClosedForm(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VasicekSlice {
    pub b1: f64,
    pub b1_dot: f64,
    pub a1: f64,
    pub a1_dot: f64,
    pub a2: f64,
    pub a2_dot: f64,
}

impl VasicekSlice {
    #[inline]
    pub fn point(&self, r: f64) -> SurfacePoint {
        let e = (self.b1 * r).exp();
        let h = self.a1 * e;
        SurfacePoint {
            h,
            h_r: self.b1 * h,
            h_rr: self.b1 * self.b1 * h,
            h_t: (self.a1_dot + self.a1 * self.b1_dot * r) * e,
            g: self.a2,
            g_r: 0.0,
            g_rr: 0.0,
            g_t: self.a2_dot,
        }
    }
}

/// `V(x, y, r, t) = H(r,t) x + G(r,t) y`.
pub fn value_function(state: &GameState, surface: &ValueSurface) -> f64 {
    let p = surface.point(state.r, state.t);
    p.h * state.x + p.g * state.y
}

/// `η*(π*) = −λ(r) − σ̄(r) H_r / H` at a surface point.
#[inline]
pub fn eta_star_at(p: &SurfacePoint, lambda: f64, sigma_bar: f64) -> f64 {
    -lambda - sigma_bar * p.h_r / p.h
}

/// Saddle investment at a surface point:
/// `2yG[(λ/σ)/H + (σ̄/σ)(H_r/H² − G_r/(GH))] − x(σ̄/σ)H_r/H`.
#[inline]
pub fn pi_star_at(
    p: &SurfacePoint,
    x: f64,
    y: f64,
    lambda: f64,
    sigma: f64,
    sigma_bar: f64,
) -> f64 {
    2.0 * y * p.g * pi_star_kernel(p, lambda, sigma, sigma_bar)
        - x * sigma_bar / sigma * p.h_r / p.h
}

/// The bracket `(λ/σ)/H + (σ̄/σ)(H_r/H² − G_r/(GH))` shared by `π*` and
/// the observable strategy.
#[inline]
pub fn pi_star_kernel(p: &SurfacePoint, lambda: f64, sigma: f64, sigma_bar: f64) -> f64 {
    lambda / sigma / p.h + sigma_bar / sigma * (p.h_r / (p.h * p.h) - p.g_r / (p.g * p.h))
}

/// Maximiser over `η` for a fixed `π`:
/// `η*(π) = −σHπ/(2yG) − σ̄(xH_r + 2yG_r)/(2yG)`.
#[inline]
pub fn eta_best_response(
    p: &SurfacePoint,
    x: f64,
    y: f64,
    pi: f64,
    sigma: f64,
    sigma_bar: f64,
) -> f64 {
    -(sigma * p.h * pi + sigma_bar * (x * p.h_r + 2.0 * y * p.g_r)) / (2.0 * y * p.g)
}

pub fn eta_star(r: f64, t: f64, surface: &ValueSurface, model: &MarketModel) -> f64 {
    eta_star_at(&surface.point(r, t), model.lambda(r), model.sigma_bar(r))
}

pub fn pi_star(state: &GameState, surface: &ValueSurface, model: &MarketModel) -> f64 {
    let GameState { x, y, r, t } = *state;
    pi_star_at(
        &surface.point(r, t),
        x,
        y,
        model.lambda(r),
        model.sigma(r, t),
        model.sigma_bar(r),
    )
}
