//! Monte Carlo Feynman–Kac estimators for `F` and `−G`.
//!
//! `F(r,t) = E[exp ∫_t^T φ(r̃_s, s) ds]`, where `r̃` has drift
//! `μ̄ − σ̄λ − σ̄²(T−s)` and volatility `σ̄`.
//!
//! `−G(r,t) = E[exp ∫_t^T ψ(r̂_s, s) ds]`, with `ψ = (λ + σ̄q)²`,
//! `q = H_r/H`, and `r̂` having drift `μ̄ − 2σ̄λ − 2σ̄²q`. The expectation is
//! positive; callers apply the sign.

use rayon::prelude::*;
use serde::Serialize;

use super::engine::{group_rng, increment, step_times, McConfig};
use super::stats::{Estimate, PathSamples};
use crate::closed_form::VasicekSolution;
use crate::error::{invalid, Error, Result};
use crate::market::MarketModel;
use crate::pde::FSolution;

const BLOCK_GROUPS: usize = 256;

/// A Feynman–Kac estimate with a step-doubling discretisation check.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct FkEstimate {
    /// Euler paths on step `dt`, trapezoidal path integral.
    pub estimate: Estimate,
    /// Same Brownian paths sampled on step `2dt`.
    pub coarse_mean: f64,
    /// Richardson combination `2·fine − coarse`, with its paired SE.
    pub extrapolated: Estimate,
    pub steps: usize,
}

impl FkEstimate {
    fn exact(v: f64) -> Self {
        Self {
            estimate: Estimate::exact(v),
            coarse_mean: v,
            extrapolated: Estimate::exact(v),
            steps: 0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.estimate.mean
    }

    pub fn se(&self) -> f64 {
        self.estimate.se
    }

    /// `|mean(dt) − mean(2dt)|` on the same Brownian paths; estimates the
    /// weak discretisation error at step `dt`.
    pub fn discretisation_gap(&self) -> f64 {
        (self.estimate.mean - self.coarse_mean).abs()
    }

    /// `(mean − reference)/√(SE² + gap²)`. The gap term accounts for the
    /// step bias, and keeps the score finite when the path integrand is
    /// deterministic and SE vanishes.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = self.estimate.mean - reference;
        if d == 0.0 {
            return 0.0;
        }
        d / self.se().hypot(self.discretisation_gap())
    }

    /// Sampling-only score `(mean − reference)/SE`.
    pub fn z_sampling(&self, reference: f64) -> f64 {
        self.estimate.z_score(reference)
    }

    pub fn negated(&self) -> Self {
        Self {
            estimate: self.estimate.scaled(-1.0),
            coarse_mean: -self.coarse_mean,
            extrapolated: self.extrapolated.scaled(-1.0),
            steps: self.steps,
        }
    }
}

/// Source of `q = H_r/H = (T − t) − F_r/F` along `r̂`.
#[derive(Clone, Copy)]
pub enum LogSlopeField<'a> {
    /// Interpolated from a solved F-grid.
    Pde(&'a FSolution),
    /// `q = B1(t)` from the Vasicek closed form.
    Vasicek(&'a VasicekSolution),
}

struct Accum {
    fine: PathSamples,
    coarse: PathSamples,
    extrapolated: PathSamples,
}

/// Runs `n_paths` scalar paths of `dr = drift(r, k) ds + vol(r) dW` and
/// averages `exp` of the trapezoid integral of `pot(r, k)`.
fn path_integral_mean<D>(r0: f64, t0: f64, t1: f64, cfg: &McConfig, coeff: D) -> Result<FkEstimate>
where
    D: Fn(f64, usize) -> (f64, f64, f64) + Sync,
{
    cfg.validate()?;
    let (n, dt) = cfg.step_grid(t0, t1)?;
    let sqrt_sub = (dt / cfg.noise_substeps as f64).sqrt();
    let groups = cfg.groups();
    let blocks = groups.div_ceil(BLOCK_GROUPS);
    let per_group = if cfg.antithetic { 2 } else { 1 };

    // Fine Euler path on step dt, and a coarse Euler path on step 2dt
    // driven by the same Brownian increments (summed in pairs).
    let run_pair = |z: &[f64], sign: f64| -> (f64, f64) {
        let mut r = r0;
        let (mut drift, mut vol, mut pot) = coeff(r, 0);
        let mut fine = 0.0;
        for k in 0..n {
            r += drift * dt + vol * sign * z[k];
            let p_prev = pot;
            (drift, vol, pot) = coeff(r, k + 1);
            fine += 0.5 * dt * (p_prev + pot);
        }
        let mut r = r0;
        let (mut drift, mut vol, mut pot) = coeff(r, 0);
        let mut coarse = 0.0;
        let mut k = 0;
        while k < n {
            let m = (n - k).min(2);
            let h = m as f64 * dt;
            r += drift * h + vol * sign * z[k..k + m].iter().sum::<f64>();
            let p_prev = pot;
            (drift, vol, pot) = coeff(r, k + m);
            coarse += 0.5 * h * (p_prev + pot);
            k += m;
        }
        (fine.exp(), coarse.exp())
    };

    let parts: Vec<Result<Accum>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = Accum {
                fine: PathSamples::new(cfg.antithetic),
                coarse: PathSamples::new(cfg.antithetic),
                extrapolated: PathSamples::new(cfg.antithetic),
            };
            let mut z = vec![0.0; n];
            for g in b * BLOCK_GROUPS..((b + 1) * BLOCK_GROUPS).min(groups) {
                let mut rng = group_rng(cfg.seed, g);
                for v in z.iter_mut() {
                    *v = increment(&mut rng, cfg.noise_substeps, sqrt_sub);
                }
                let first = g * per_group;
                let count = per_group.min(cfg.n_paths - first);
                for j in 0..count {
                    let sign = if j == 0 { 1.0 } else { -1.0 };
                    let (f, c) = run_pair(&z, sign);
                    if !(f.is_finite() && c.is_finite()) {
                        return Err(Error::Numerical {
                            stage: "Feynman-Kac path integral",
                            detail: format!("non-finite exponential on path {}", first + j),
                        });
                    }
                    acc.fine.push(first + j, f);
                    acc.coarse.push(first + j, c);
                    acc.extrapolated.push(first + j, 2.0 * f - c);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut it = parts.into_iter();
    let mut acc = it.next().expect("at least one block")?;
    for p in it {
        let p = p?;
        acc.fine.merge(p.fine);
        acc.coarse.merge(p.coarse);
        acc.extrapolated.merge(p.extrapolated);
    }
    Ok(FkEstimate {
        estimate: acc.fine.estimate(),
        coarse_mean: acc.coarse.estimate().mean,
        extrapolated: acc.extrapolated.estimate(),
        steps: n,
    })
}

fn check_time(model: &MarketModel, t: f64) -> Result<()> {
    let hi = model.horizon();
    if !(0.0..=hi).contains(&t) {
        return Err(Error::TimeOutOfRange { t, lo: 0.0, hi });
    }
    Ok(())
}

/// Monte Carlo estimate of `F(r, t)`.
pub fn feynman_kac_f(model: &MarketModel, r: f64, t: f64, cfg: &McConfig) -> Result<FkEstimate> {
    check_time(model, t)?;
    if !r.is_finite() {
        return Err(invalid("r", "must be finite"));
    }
    let horizon = model.horizon();
    if t == horizon {
        return Ok(FkEstimate::exact(1.0));
    }
    let (n, _) = cfg.step_grid(t, horizon)?;
    let times = step_times(t, horizon, n);
    path_integral_mean(r, t, horizon, cfg, |r, k| {
        let tau = horizon - times[k];
        let sb = model.sigma_bar(r);
        let m = model.mu_bar(r) - sb * model.lambda(r);
        (m - sb * sb * tau, sb, 0.5 * sb * sb * tau * tau - tau * m)
    })
}

/// Monte Carlo estimate of `−G(r, t)` (a positive number).
pub fn feynman_kac_g(
    model: &MarketModel,
    field: LogSlopeField<'_>,
    r: f64,
    t: f64,
    cfg: &McConfig,
) -> Result<FkEstimate> {
    check_time(model, t)?;
    let horizon = model.horizon();
    if let LogSlopeField::Pde(f) = field {
        let (lo, hi) = (f.grid.r_min, f.grid.r_max);
        if !(r >= lo && r <= hi) {
            return Err(Error::RateOutOfRange { r, lo, hi });
        }
        if (f.horizon() - horizon).abs() > 1e-12 {
            return Err(invalid(
                "horizon",
                "F-grid horizon differs from the model horizon",
            ));
        }
    }
    if t == horizon {
        return Ok(FkEstimate::exact(1.0));
    }
    let (n, _) = cfg.step_grid(t, horizon)?;
    let times = step_times(t, horizon, n);
    let b1: Vec<f64> = match field {
        LogSlopeField::Vasicek(s) => times
            .iter()
            .map(|&u| s.b1(u.min(s.horizon())))
            .collect::<Result<_>>()?,
        LogSlopeField::Pde(_) => Vec::new(),
    };
    path_integral_mean(r, t, horizon, cfg, |r, k| {
        let q = match field {
            LogSlopeField::Vasicek(_) => b1[k],
            LogSlopeField::Pde(f) => f.log_slope_h(r, times[k]),
        };
        let sb = model.sigma_bar(r);
        let lam = model.lambda(r);
        let kq = lam + sb * q;
        (
            model.mu_bar(r) - 2.0 * sb * lam - 2.0 * sb * sb * q,
            sb,
            kq * kq,
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{vasicek_to_model, VasicekParams};
    use crate::pde::potential_phi;
    use crate::quadrature::GaussLegendre;

    fn cfg(n: usize) -> McConfig {
        McConfig::new(7).with_paths(n).with_dt(1.0 / 200.0)
    }

    #[test]
    fn terminal_time_is_exact() {
        let m = vasicek_to_model(&VasicekParams::default()).unwrap();
        let s = VasicekSolution::new(VasicekParams::default()).unwrap();
        assert_eq!(feynman_kac_f(&m, 0.03, 1.0, &cfg(10)).unwrap().mean(), 1.0);
        let g = feynman_kac_g(&m, LogSlopeField::Vasicek(&s), 0.03, 1.0, &cfg(10)).unwrap();
        assert_eq!(g.negated().mean(), -1.0);
        assert!(feynman_kac_f(&m, 0.03, 1.5, &cfg(10)).is_err());
    }

    #[test]
    fn zero_potential_g_is_one() {
        let m =
            crate::market::MarketModel::constant(0.0, 0.3, 0.01, 0.0, 1.0, (-1.0, 1.0)).unwrap();
        let p = VasicekParams {
            lambda: 0.0,
            sigma_bar: 0.0,
            ..Default::default()
        };
        let s = VasicekSolution::new(p).unwrap();
        for t in [0.0, 0.4] {
            let g = feynman_kac_g(&m, LogSlopeField::Vasicek(&s), 0.02, t, &cfg(10)).unwrap();
            assert_eq!(g.mean(), 1.0);
        }
    }

    #[test]
    fn constant_coefficients_match_quadrature() {
        let m =
            crate::market::MarketModel::constant(0.2, 0.3, 0.03, 0.15, 1.0, (-1.0, 1.0)).unwrap();
        let q = GaussLegendre::new(32);
        for t in [0.0, 0.5] {
            let oracle = q.integrate(|s| potential_phi(0.0, s, &m), t, 1.0).exp();
            let e = feynman_kac_f(&m, 0.01, t, &cfg(2000)).unwrap();
            // Deterministic integrand: no sampling noise.
            assert!(e.se() < 1e-12);
            assert!((e.mean() - oracle).abs() < 1e-6, "{} vs {oracle}", e.mean());
        }
    }

    #[test]
    fn vasicek_f_within_three_se() {
        let p = VasicekParams::default();
        let m = vasicek_to_model(&p).unwrap();
        let s = VasicekSolution::new(p).unwrap();
        let e = feynman_kac_f(&m, 0.05, 0.0, &cfg(20_000)).unwrap();
        let z = e.z_score(s.f(0.05, 0.0).unwrap());
        assert!(z.abs() <= 3.0, "z = {z}");
    }

    #[test]
    fn reproducible() {
        let m = vasicek_to_model(&VasicekParams::default()).unwrap();
        let a = feynman_kac_f(&m, 0.0, 0.2, &cfg(1000)).unwrap();
        let b = feynman_kac_f(&m, 0.0, 0.2, &cfg(1000)).unwrap();
        assert_eq!(a, b);
    }
}
