//! Euler–Maruyama simulation of the wealth, density and rate system under
//! `P` and under the Girsanov-shifted measure `Q^η`.
//!
//! Each path group (one path, or an antithetic pair) draws from its own
//! ChaCha stream derived from the master seed, so results do not depend on
//! the number of worker threads.

mod bundle;
mod checks;
mod engine;
mod feynman_kac;
mod fields;
mod stats;

pub use bundle::{
    estimate_objective, simulate, simulate_recorded, ObjectiveMethod, PathBundle, Recording,
};
pub use checks::{measure_consistency, MeasureCheck, MeasureComparison};
pub use engine::{
    run_paths, step_times, Control, LegState, McConfig, Measure, PathObserver, StepView,
};
pub use feynman_kac::{feynman_kac_f, feynman_kac_g, FkEstimate, LogSlopeField};
pub use fields::{
    observable_pi_at, AdversaryField, AdversarySource, ControlTag, CustomEta, CustomPi,
    StrategyField, StrategySource,
};
pub use stats::{Estimate, Moments, PathSamples};
