//! Investment and adversary feedback controls.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::closed_form::{eta_star_at, pi_star_at, pi_star_kernel};
use crate::market::{GameState, MarketModel};
use crate::surface::{SurfacePoint, ValueSurface};

pub type CustomPi = Arc<dyn Fn(&GameState) -> f64 + Send + Sync>;
pub type CustomEta = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategySource {
    Saddle,
    Observable,
    Constant,
    Custom,
}

/// Investment amount `π(x, y, r, t)`.
#[derive(Clone)]
pub enum StrategyField {
    /// `scale · π*` with `y` taken from the simulated density state.
    Saddle {
        surface: Arc<ValueSurface>,
        scale: f64,
    },
    /// `scale · π̂*`, which uses the conserved constant `c0` in place of `y`.
    Observable {
        surface: Arc<ValueSurface>,
        c0: f64,
        scale: f64,
    },
    Constant(f64),
    Custom {
        label: String,
        pi: CustomPi,
    },
}

impl fmt::Debug for StrategyField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// `[c0 − H x]·kernel − x (σ̄/σ) H_r/H`.
#[inline]
pub fn observable_pi_at(
    p: &SurfacePoint,
    x: f64,
    c0: f64,
    lambda: f64,
    sigma: f64,
    sigma_bar: f64,
) -> f64 {
    (c0 - p.h * x) * pi_star_kernel(p, lambda, sigma, sigma_bar)
        - x * sigma_bar / sigma * p.h_r / p.h
}

impl StrategyField {
    pub fn saddle(surface: Arc<ValueSurface>) -> Self {
        StrategyField::Saddle {
            surface,
            scale: 1.0,
        }
    }

    pub fn zero() -> Self {
        StrategyField::Constant(0.0)
    }

    pub fn custom(
        label: impl Into<String>,
        pi: impl Fn(&GameState) -> f64 + Send + Sync + 'static,
    ) -> Self {
        StrategyField::Custom {
            label: label.into(),
            pi: Arc::new(pi),
        }
    }

    /// Multiplies the control by `c`.
    pub fn scaled(self, c: f64) -> Self {
        match self {
            StrategyField::Saddle { surface, scale } => StrategyField::Saddle {
                surface,
                scale: scale * c,
            },
            StrategyField::Observable { surface, c0, scale } => StrategyField::Observable {
                surface,
                c0,
                scale: scale * c,
            },
            StrategyField::Constant(v) => StrategyField::Constant(v * c),
            StrategyField::Custom { label, pi } => StrategyField::Custom {
                label: format!("{c}*{label}"),
                pi: Arc::new(move |s| c * pi(s)),
            },
        }
    }

    pub fn source(&self) -> StrategySource {
        match self {
            StrategyField::Saddle { .. } => StrategySource::Saddle,
            StrategyField::Observable { .. } => StrategySource::Observable,
            StrategyField::Constant(_) => StrategySource::Constant,
            StrategyField::Custom { .. } => StrategySource::Custom,
        }
    }

    pub fn label(&self) -> String {
        match self {
            StrategyField::Saddle { scale, .. } if *scale == 1.0 => "saddle".into(),
            StrategyField::Saddle { scale, .. } => format!("saddle*{scale}"),
            StrategyField::Observable { scale, .. } if *scale == 1.0 => "observable".into(),
            StrategyField::Observable { scale, .. } => format!("observable*{scale}"),
            StrategyField::Constant(v) if *v == 0.0 => "zero".into(),
            StrategyField::Constant(v) => format!("constant={v}"),
            StrategyField::Custom { label, .. } => label.clone(),
        }
    }

    pub fn surface(&self) -> Option<&Arc<ValueSurface>> {
        match self {
            StrategyField::Saddle { surface, .. } | StrategyField::Observable { surface, .. } => {
                Some(surface)
            }
            _ => None,
        }
    }

    /// Evaluates the control given coefficient values and, for surface-based
    /// controls, the surface point at `(r, t)`.
    #[inline]
    pub(crate) fn eval_at(
        &self,
        s: &GameState,
        p: &SurfacePoint,
        lambda: f64,
        sigma: f64,
        sigma_bar: f64,
    ) -> f64 {
        match self {
            StrategyField::Saddle { scale, .. } => {
                scale * pi_star_at(p, s.x, s.y, lambda, sigma, sigma_bar)
            }
            StrategyField::Observable { c0, scale, .. } => {
                scale * observable_pi_at(p, s.x, *c0, lambda, sigma, sigma_bar)
            }
            StrategyField::Constant(v) => *v,
            StrategyField::Custom { pi, .. } => pi(s),
        }
    }

    pub fn eval(&self, model: &MarketModel, s: &GameState) -> f64 {
        let p = self
            .surface()
            .map(|v| v.point(s.r, s.t))
            .unwrap_or_default();
        self.eval_at(
            s,
            &p,
            model.lambda(s.r),
            model.sigma(s.r, s.t),
            model.sigma_bar(s.r),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversarySource {
    Saddle,
    Constant,
    Custom,
}

/// Girsanov drift `η(r, t)`.
#[derive(Clone)]
pub enum AdversaryField {
    /// `η*(r,t) + shift`.
    Saddle {
        surface: Arc<ValueSurface>,
        shift: f64,
    },
    Constant(f64),
    Custom {
        label: String,
        eta: CustomEta,
    },
}

impl fmt::Debug for AdversaryField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl AdversaryField {
    pub fn saddle(surface: Arc<ValueSurface>) -> Self {
        AdversaryField::Saddle {
            surface,
            shift: 0.0,
        }
    }

    pub fn zero() -> Self {
        AdversaryField::Constant(0.0)
    }

    pub fn custom(
        label: impl Into<String>,
        eta: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        AdversaryField::Custom {
            label: label.into(),
            eta: Arc::new(eta),
        }
    }

    pub fn shifted(self, delta: f64) -> Self {
        match self {
            AdversaryField::Saddle { surface, shift } => AdversaryField::Saddle {
                surface,
                shift: shift + delta,
            },
            AdversaryField::Constant(v) => AdversaryField::Constant(v + delta),
            AdversaryField::Custom { label, eta } => AdversaryField::Custom {
                label: format!("{label}+{delta}"),
                eta: Arc::new(move |r, t| eta(r, t) + delta),
            },
        }
    }

    pub fn source(&self) -> AdversarySource {
        match self {
            AdversaryField::Saddle { .. } => AdversarySource::Saddle,
            AdversaryField::Constant(_) => AdversarySource::Constant,
            AdversaryField::Custom { .. } => AdversarySource::Custom,
        }
    }

    pub fn label(&self) -> String {
        match self {
            AdversaryField::Saddle { shift, .. } if *shift == 0.0 => "saddle".into(),
            AdversaryField::Saddle { shift, .. } => format!("saddle{shift:+}"),
            AdversaryField::Constant(v) if *v == 0.0 => "zero".into(),
            AdversaryField::Constant(v) => format!("constant={v}"),
            AdversaryField::Custom { label, .. } => label.clone(),
        }
    }

    pub fn surface(&self) -> Option<&Arc<ValueSurface>> {
        match self {
            AdversaryField::Saddle { surface, .. } => Some(surface),
            _ => None,
        }
    }

    #[inline]
    pub(crate) fn eval_at(
        &self,
        r: f64,
        t: f64,
        p: &SurfacePoint,
        lambda: f64,
        sigma_bar: f64,
    ) -> f64 {
        match self {
            AdversaryField::Saddle { shift, .. } => eta_star_at(p, lambda, sigma_bar) + shift,
            AdversaryField::Constant(v) => *v,
            AdversaryField::Custom { eta, .. } => eta(r, t),
        }
    }

    pub fn eval(&self, model: &MarketModel, r: f64, t: f64) -> f64 {
        let p = self.surface().map(|v| v.point(r, t)).unwrap_or_default();
        self.eval_at(r, t, &p, model.lambda(r), model.sigma_bar(r))
    }
}

/// Labels identifying the controls a bundle was simulated with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlTag {
    pub strategy: String,
    pub strategy_source: StrategySource,
    pub adversary: String,
    pub adversary_source: AdversarySource,
    /// Unscaled `π*` against unshifted `η*` on one surface.
    pub saddle: bool,
}

impl ControlTag {
    pub fn new(strategy: &StrategyField, adversary: &AdversaryField) -> Self {
        let saddle = match (strategy, adversary) {
            (
                StrategyField::Saddle { surface: a, scale },
                AdversaryField::Saddle { surface: b, shift },
            ) => *scale == 1.0 && *shift == 0.0 && Arc::ptr_eq(a, b),
            _ => false,
        };
        Self {
            strategy: strategy.label(),
            strategy_source: strategy.source(),
            adversary: adversary.label(),
            adversary_source: adversary.source(),
            saddle,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::VasicekSolution;
    use crate::market::{vasicek_to_model, VasicekParams};

    fn surface() -> Arc<ValueSurface> {
        Arc::new(
            VasicekSolution::new(VasicekParams::default())
                .unwrap()
                .surface(),
        )
    }

    #[test]
    fn labels_and_tags() {
        let s = surface();
        let pi = StrategyField::saddle(s.clone());
        let eta = AdversaryField::saddle(s.clone());
        assert!(ControlTag::new(&pi, &eta).saddle);
        assert!(!ControlTag::new(&pi.clone().scaled(2.0), &eta).saddle);
        assert!(!ControlTag::new(&pi, &eta.clone().shifted(0.1)).saddle);
        let other = surface();
        assert!(!ControlTag::new(&pi, &AdversaryField::saddle(other)).saddle);
        assert_eq!(StrategyField::zero().label(), "zero");
        assert_eq!(eta.shifted(-0.3).label(), "saddle-0.3");
    }

    #[test]
    fn observable_equals_saddle_when_c0_matches() {
        let s = surface();
        let m = vasicek_to_model(&VasicekParams::default()).unwrap();
        let st = GameState::new(1.3, 0.7, 0.04, 0.2).unwrap();
        let p = s.point(st.r, st.t);
        let c0 = 2.0 * p.g * st.y + p.h * st.x;
        let a = StrategyField::saddle(s.clone()).eval(&m, &st);
        let b = StrategyField::Observable {
            surface: s,
            c0,
            scale: 1.0,
        }
        .eval(&m, &st);
        assert!((a - b).abs() <= 1e-13 * a.abs());
    }

    #[test]
    fn shifts_and_scales_compose() {
        let s = surface();
        let m = vasicek_to_model(&VasicekParams::default()).unwrap();
        let eta = AdversaryField::saddle(s.clone());
        let base = eta.eval(&m, 0.03, 0.5);
        assert!((eta.shifted(0.1).shifted(0.2).eval(&m, 0.03, 0.5) - base - 0.3).abs() < 1e-15);
        let st = GameState::default();
        let pi = StrategyField::saddle(s);
        let v = pi.eval(&m, &st);
        assert!((pi.scaled(1.5).eval(&m, &st) - 1.5 * v).abs() < 1e-15);
        let c = StrategyField::custom("lin", |s: &GameState| s.x).scaled(2.0);
        assert_eq!(c.eval(&m, &st), 2.0);
    }
}
