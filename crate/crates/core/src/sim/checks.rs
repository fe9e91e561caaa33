use serde::Serialize;

use super::bundle::{simulate_recorded, ObjectiveMethod, Recording};
use super::engine::{McConfig, Measure};
use super::fields::{AdversaryField, StrategyField};
use super::stats::{Estimate, PathSamples};
use crate::error::Result;
use crate::market::{GameState, MarketModel};

#[derive(Debug, Clone, Serialize)]
pub struct MeasureComparison {
    pub quantity: String,
    /// `E^η[Z]` from paths simulated under `Q^η`.
    pub direct: Estimate,
    /// `E^P[(Y_T/y0) Z]` from paths simulated under `P`.
    pub reweighted: Estimate,
    /// Per-path difference of the two samples on shared normals.
    pub paired_difference: Estimate,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasureCheck {
    /// `E^P[Y_T]`, which should equal `y0`.
    pub y_terminal: Estimate,
    pub y0: f64,
    pub martingale_z: f64,
    pub comparisons: Vec<MeasureComparison>,
}

impl MeasureCheck {
    pub fn max_abs_z(&self) -> f64 {
        self.comparisons
            .iter()
            .map(|c| c.z.abs())
            .fold(self.martingale_z.abs(), f64::max)
    }
}

/// Martingale property of `Y` under `P` and agreement of direct `Q^η`
/// estimates with `P`-reweighted ones for `−X_T`, `−Y_T` and `J`.
pub fn measure_consistency(
    model: &MarketModel,
    strategy: &StrategyField,
    adversary: &AdversaryField,
    init: &GameState,
    cfg: &McConfig,
) -> Result<MeasureCheck> {
    let p = simulate_recorded(
        model,
        strategy,
        adversary,
        init,
        cfg,
        Measure::P,
        Recording::Terminal,
    )?;
    let q = simulate_recorded(
        model,
        strategy,
        adversary,
        init,
        cfg,
        Measure::QEta,
        Recording::Terminal,
    )?;
    let y0 = init.y;
    let y_terminal = p.terminal_estimate(|_, y, _| y);

    type Quantity = fn(f64, f64, f64) -> f64;
    let quantities: [(&str, Quantity); 3] = [
        ("-X_T", |x, _, _| -x),
        ("-Y_T", |_, y, _| -y),
        ("objective", |x, y, y0| {
            ObjectiveMethod::Direct.sample(x, y, y0)
        }),
    ];
    let mut comparisons = Vec::new();
    for (name, z) in quantities {
        let mut d = PathSamples::new(cfg.antithetic);
        let mut a = PathSamples::new(cfg.antithetic);
        let mut b = PathSamples::new(cfg.antithetic);
        for i in 0..cfg.n_paths {
            let (xq, yq, _) = q.terminal(i);
            let (xp, yp, _) = p.terminal(i);
            let direct = z(xq, yq, y0);
            let weighted = yp / y0 * z(xp, yp, y0);
            a.push(i, direct);
            b.push(i, weighted);
            d.push(i, direct - weighted);
        }
        let diff = d.estimate();
        comparisons.push(MeasureComparison {
            quantity: name.into(),
            direct: a.estimate(),
            reweighted: b.estimate(),
            z: diff.z_score(0.0),
            paired_difference: diff,
        });
    }
    Ok(MeasureCheck {
        martingale_z: y_terminal.z_score(y0),
        y_terminal,
        y0,
        comparisons,
    })
}
