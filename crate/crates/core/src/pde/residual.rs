//! Independent residual and convergence diagnostics for solved grids.

use serde::Serialize;

use super::{potential_phi, solve, PdeGrid, PdeSolution, SchemeConfig};
use crate::closed_form::VasicekSolution;
use crate::error::{invalid, Result};
use crate::market::MarketModel;

/// Largest absolute stencil residuals of the three equations.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct ResidualReport {
    pub f_equation: f64,
    /// Semilinear H-equation evaluated on the reconstructed `H`.
    pub h_equation: f64,
    pub g_equation: f64,
    pub nodes_checked: usize,
}

/// Relative errors against the Vasicek closed form.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct ClosedFormErrors {
    pub f_rel: f64,
    pub h_rel: f64,
    pub g_rel: f64,
    /// Absolute error of `H_r/H` against `B1`.
    pub log_slope_abs: f64,
    pub nodes_checked: usize,
}

fn window(grid: &PdeGrid, interior: (f64, f64)) -> impl Iterator<Item = usize> + '_ {
    (1..grid.n_r - 1).filter(move |&i| {
        let r = grid.r(i);
        r >= interior.0 && r <= interior.1
    })
}

/// Plugs grid values into a time-centred stencil of each equation at nodes
/// with `1 ≤ n < n_t` and `r` in `interior`.
pub fn residual_report(
    model: &MarketModel,
    sol: &PdeSolution,
    interior: (f64, f64),
) -> ResidualReport {
    let grid = sol.grid();
    let dt = sol.f.dt();
    let dr = grid.dr();
    let horizon = sol.f.horizon();
    let mut rep = ResidualReport {
        f_equation: 0.0,
        h_equation: 0.0,
        g_equation: 0.0,
        nodes_checked: 0,
    };
    let cols: Vec<usize> = window(grid, interior).collect();
    for n in 1..grid.n_t {
        let t = sol.f.t(n);
        let tau = horizon - t;
        for &i in &cols {
            let r = grid.r(i);
            let sb = model.sigma_bar(r);
            let lam = model.lambda(r);
            let mu = model.mu_bar(r);
            let a = 0.5 * sb * sb;

            let f = |n: usize, i: usize| sol.f.f(n, i);
            let f_t = (f(n + 1, i) - f(n - 1, i)) / (2.0 * dt);
            let f_r = (f(n, i + 1) - f(n, i - 1)) / (2.0 * dr);
            let f_rr = (f(n, i + 1) - 2.0 * f(n, i) + f(n, i - 1)) / (dr * dr);
            let res_f = f_t
                + potential_phi(r, t, model) * f(n, i)
                + (mu - sb * lam - sb * sb * tau) * f_r
                + a * f_rr;

            let h = |n: usize, i: usize| sol.h(n, i);
            let hv = h(n, i);
            let h_t = (h(n + 1, i) - h(n - 1, i)) / (2.0 * dt);
            let h_r = (h(n, i + 1) - h(n, i - 1)) / (2.0 * dr);
            let h_rr = (h(n, i + 1) - 2.0 * hv + h(n, i - 1)) / (dr * dr);
            let res_h = h_t + r * hv + (mu - sb * lam) * h_r + a * h_rr - sb * sb * h_r * h_r / hv;

            let g = |n: usize, i: usize| sol.g(n, i);
            let g_t = (g(n + 1, i) - g(n - 1, i)) / (2.0 * dt);
            let g_r = (g(n, i + 1) - g(n, i - 1)) / (2.0 * dr);
            let g_rr = (g(n, i + 1) - 2.0 * g(n, i) + g(n, i - 1)) / (dr * dr);
            let q = h_r / hv;
            let k = lam + sb * q;
            let res_g =
                g_t + a * g_rr + k * k * g(n, i) + (mu - 2.0 * sb * lam - 2.0 * sb * sb * q) * g_r;

            rep.f_equation = rep.f_equation.max(res_f.abs());
            rep.h_equation = rep.h_equation.max(res_h.abs());
            rep.g_equation = rep.g_equation.max(res_g.abs());
            rep.nodes_checked += 1;
        }
    }
    rep
}

/// Maximum errors over all time levels at nodes with `r` in `interior`.
pub fn closed_form_errors(
    sol: &PdeSolution,
    cf: &VasicekSolution,
    interior: (f64, f64),
) -> Result<ClosedFormErrors> {
    let grid = sol.grid();
    let mut e = ClosedFormErrors {
        f_rel: 0.0,
        h_rel: 0.0,
        g_rel: 0.0,
        log_slope_abs: 0.0,
        nodes_checked: 0,
    };
    let cols: Vec<usize> = window(grid, interior).collect();
    for n in 0..=grid.n_t {
        let t = sol.f.t(n);
        let b1 = cf.b1(t)?;
        let g_exact = cf.g(t)?;
        for &i in &cols {
            let r = grid.r(i);
            let h_exact = cf.h(r, t)?;
            e.f_rel = e.f_rel.max((sol.f.f(n, i) / cf.f(r, t)? - 1.0).abs());
            e.h_rel = e.h_rel.max((sol.h(n, i) / h_exact - 1.0).abs());
            e.g_rel = e.g_rel.max((sol.g(n, i) / g_exact - 1.0).abs());
            e.log_slope_abs = e
                .log_slope_abs
                .max((sol.h_r(n, i) / sol.h(n, i) - b1).abs());
            e.nodes_checked += 1;
        }
    }
    Ok(e)
}

/// Errors on a sequence of spatial grids with `n_t` held fixed.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub n_r: Vec<usize>,
    pub n_t: usize,
    /// Max interior |ΔH/H| between consecutive grids on shared nodes.
    pub self_differences: Vec<f64>,
    /// `log2` of consecutive self-difference ratios.
    pub self_orders: Vec<f64>,
    /// Max interior relative H error against the closed form, if given.
    pub reference_errors: Vec<f64>,
    pub reference_orders: Vec<f64>,
}

impl ConvergenceStudy {
    pub fn min_self_order(&self) -> f64 {
        self.self_orders
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_reference_order(&self) -> f64 {
        self.reference_orders
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

fn orders(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Solves on grids with `n_r − 1 = (base − 1)·2^k` for `k < levels` and
/// compares the H-surfaces. Time stepping is identical across levels, so
/// the self-differences isolate the spatial error.
pub fn spatial_self_convergence(
    model: &MarketModel,
    base: &PdeGrid,
    scheme: &SchemeConfig,
    levels: usize,
    interior: (f64, f64),
    reference: Option<&VasicekSolution>,
) -> Result<ConvergenceStudy> {
    if levels < 3 {
        return Err(invalid(
            "levels",
            "need at least three grids for an order estimate",
        ));
    }
    let mut sols = Vec::with_capacity(levels);
    let mut n_rs = Vec::with_capacity(levels);
    for k in 0..levels {
        let nr = (base.n_r - 1) * (1 << k) + 1;
        n_rs.push(nr);
        sols.push(solve(model, &base.with_nodes(nr)?, scheme)?);
    }

    let coarse = &sols[0];
    let cols: Vec<usize> = window(coarse.grid(), interior).collect();
    let mut self_differences = Vec::new();
    for k in 0..levels - 1 {
        let (a, b) = (&sols[k], &sols[k + 1]);
        let step_a = 1 << k;
        let mut worst = 0.0f64;
        for n in 0..=base.n_t {
            for &i in &cols {
                let ia = i * step_a;
                let ib = ia * 2;
                worst = worst.max((a.h(n, ia) / b.h(n, ib) - 1.0).abs());
            }
        }
        self_differences.push(worst);
    }

    let mut reference_errors = Vec::new();
    if let Some(cf) = reference {
        for (k, s) in sols.iter().enumerate() {
            let step = 1 << k;
            let mut worst = 0.0f64;
            for n in 0..=base.n_t {
                let t = s.f.t(n);
                for &i in &cols {
                    let j = i * step;
                    worst = worst.max((s.h(n, j) / cf.h(s.grid().r(j), t)? - 1.0).abs());
                }
            }
            reference_errors.push(worst);
        }
    }

    Ok(ConvergenceStudy {
        self_orders: orders(&self_differences),
        reference_orders: orders(&reference_errors),
        n_r: n_rs,
        n_t: base.n_t,
        self_differences,
        reference_errors,
    })
}
