//! Value surfaces `H(r,t)`, `G(r,t)` and their derivatives.
//!
//! A surface comes either from the Vasicek closed form or from a solved PDE
//! grid. Evaluation goes through a per-time [`SurfaceSlice`] so that the
//! time-only parts (quadratures, interpolation weights) are computed once per
//! time point and reused across many rates.

use serde::Serialize;

use crate::closed_form::{VasicekSlice, VasicekSolution};

/// `H`, `G` and the derivatives used by the operator evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SurfacePoint {
    pub h: f64,
    pub h_r: f64,
    pub h_rr: f64,
    pub h_t: f64,
    pub g: f64,
    pub g_r: f64,
    pub g_rr: f64,
    pub g_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceKind {
    ClosedForm,
    PdeGrid,
}

#[derive(Debug, Clone)]
pub enum ValueSurface {
    ClosedForm(VasicekSolution),
    Grid(GridSurface),
}

pub enum SurfaceSlice<'a> {
    ClosedForm(VasicekSlice),
    Grid(GridSlice<'a>),
}

impl SurfaceSlice<'_> {
    #[inline]
    pub fn point(&self, r: f64) -> SurfacePoint {
        match self {
            SurfaceSlice::ClosedForm(s) => s.point(r),
            SurfaceSlice::Grid(s) => s.point(r),
        }
    }
}

impl ValueSurface {
    pub fn kind(&self) -> SurfaceKind {
        match self {
            ValueSurface::ClosedForm(_) => SurfaceKind::ClosedForm,
            ValueSurface::Grid(_) => SurfaceKind::PdeGrid,
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            ValueSurface::ClosedForm(s) => s.horizon(),
            ValueSurface::Grid(g) => g.t_end(),
        }
    }

    /// Time slice at `t`; `t` is clamped to the surface's time range.
    pub fn slice(&self, t: f64) -> SurfaceSlice<'_> {
        match self {
            ValueSurface::ClosedForm(s) => SurfaceSlice::ClosedForm(s.slice_clamped(t)),
            ValueSurface::Grid(g) => SurfaceSlice::Grid(g.slice(t)),
        }
    }

    pub fn point(&self, r: f64, t: f64) -> SurfacePoint {
        self.slice(t).point(r)
    }

    pub fn h(&self, r: f64, t: f64) -> f64 {
        self.point(r, t).h
    }

    pub fn g(&self, r: f64, t: f64) -> f64 {
        self.point(r, t).g
    }

    pub fn h_r(&self, r: f64, t: f64) -> f64 {
        self.point(r, t).h_r
    }

    pub fn g_r(&self, r: f64, t: f64) -> f64 {
        self.point(r, t).g_r
    }
}

/// Node values on a uniform `(r, t)` grid, stored time-major:
/// `field[n * n_r + i]` is the value at `(r_min + i Δr, t_start + n Δt)`.
#[derive(Debug, Clone)]
pub struct GridSurface {
    pub(crate) r_min: f64,
    pub(crate) dr: f64,
    pub(crate) n_r: usize,
    pub(crate) t_start: f64,
    pub(crate) dt: f64,
    pub(crate) n_t: usize,
    pub(crate) h: Vec<f64>,
    pub(crate) h_r: Vec<f64>,
    pub(crate) h_rr: Vec<f64>,
    pub(crate) h_t: Vec<f64>,
    pub(crate) g: Vec<f64>,
    pub(crate) g_r: Vec<f64>,
    pub(crate) g_rr: Vec<f64>,
    pub(crate) g_t: Vec<f64>,
}

impl GridSurface {
    pub fn r_bounds(&self) -> (f64, f64) {
        (self.r_min, self.r_min + self.dr * (self.n_r - 1) as f64)
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.dt * self.n_t as f64
    }

    pub fn slice(&self, t: f64) -> GridSlice<'_> {
        let s = ((t - self.t_start) / self.dt).clamp(0.0, self.n_t as f64);
        let n = (s.floor() as usize).min(self.n_t.saturating_sub(1));
        let w = (s - n as f64).clamp(0.0, 1.0);
        GridSlice { surf: self, n, w }
    }
}

pub struct GridSlice<'a> {
    surf: &'a GridSurface,
    n: usize,
    w: f64,
}

impl GridSlice<'_> {
    /// Bilinear interpolation; rates outside the grid take boundary values.
    pub fn point(&self, r: f64) -> SurfacePoint {
        let s = self.surf;
        let x = ((r - s.r_min) / s.dr).clamp(0.0, (s.n_r - 1) as f64);
        let i = (x.floor() as usize).min(s.n_r - 2);
        let u = x - i as f64;
        let lo = self.n * s.n_r + i;
        let hi = lo + if s.n_t > 0 { s.n_r } else { 0 };
        let w = self.w;
        let f = |v: &[f64]| {
            let a = v[lo] + u * (v[lo + 1] - v[lo]);
            let b = v[hi] + u * (v[hi + 1] - v[hi]);
            a + w * (b - a)
        };
        SurfacePoint {
            h: f(&s.h),
            h_r: f(&s.h_r),
            h_rr: f(&s.h_rr),
            h_t: f(&s.h_t),
            g: f(&s.g),
            g_r: f(&s.g_r),
            g_rr: f(&s.g_rr),
            g_t: f(&s.g_t),
        }
    }
}

impl From<VasicekSolution> for ValueSurface {
    fn from(s: VasicekSolution) -> Self {
        ValueSurface::ClosedForm(s)
    }
}
