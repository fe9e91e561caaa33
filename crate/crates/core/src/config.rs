//! Experiment configuration documents.
//!
//! A configuration is a TOML document with a mandatory `kind` and `seed`
//! and one table per concern:
//!
//! ```toml
//! kind = "verify"
//! seed = 42
//!
//! [model]
//! type = "vasicek"
//! alpha = 1.0
//!
//! [mc]
//! paths = 200000
//! ```
//!
//! Missing keys take their documented defaults; unknown keys are rejected
//! together in one error. [`ExperimentConfig::resolved`] fills every
//! default in, and its TOML rendering is the run manifest.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::closed_form::{VasicekSolution, DEFAULT_QUADRATURE_NODES};
use crate::error::{invalid, Error, Result};
use crate::game::Perturbations;
use crate::market::{
    GameState, MarketModel, SigmaSchedule, VasicekParams, DEFAULT_ELLIPTICITY_FLOOR,
};
use crate::pde::{BoundaryCondition, PdeGrid, SchemeConfig, UpwindMode};
use crate::sim::{AdversaryField, McConfig, Measure, StrategyField};
use crate::surface::ValueSurface;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ClosedForm,
    Pde,
    Simulate,
    Verify,
    FkCompare,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ClosedForm => "closed-form",
            ExperimentKind::Pde => "pde",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Verify => "verify",
            ExperimentKind::FkCompare => "fk-compare",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub init: Option<InitSection>,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub mc: Option<McSection>,
    #[serde(default)]
    pub closed_form: Option<ClosedFormSection>,
    #[serde(default)]
    pub pde: Option<PdeOutputSection>,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub verify: Option<VerifySection>,
    #[serde(default)]
    pub fk_compare: Option<FkCompareSection>,
    /// Build information written into manifests; ignored on input.
    #[serde(default)]
    pub manifest: Option<ManifestInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelType {
    #[default]
    Vasicek,
    Table,
}

/// A coefficient given as one number or as samples on the `r` knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Scalar(f64),
    Samples(Vec<f64>),
}

/// Either Vasicek constants or coefficient tables on `r` knots with linear
/// interpolation and flat extrapolation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelSection {
    #[serde(rename = "type", default)]
    pub kind: ModelType,
    pub horizon: Option<f64>,
    pub lambda: Option<Coefficient>,
    pub sigma: Option<SigmaSchedule>,
    pub sigma_bar: Option<Coefficient>,
    pub theta_bar: Option<f64>,
    pub alpha: Option<f64>,
    pub r: Option<Vec<f64>>,
    pub mu_bar: Option<Coefficient>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSection {
    #[serde(default = "one")]
    pub x: f64,
    #[serde(default = "one")]
    pub y: f64,
    pub r: Option<f64>,
    #[serde(default)]
    pub t: f64,
}

impl Default for InitSection {
    fn default() -> Self {
        Self {
            x: 1.0,
            y: 1.0,
            r: None,
            t: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    #[default]
    Linearity,
    DirichletClosedForm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSection {
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    #[serde(default = "default_nodes")]
    pub n_r: usize,
    #[serde(default = "default_nodes")]
    pub n_t: usize,
    #[serde(default = "half")]
    pub theta: f64,
    #[serde(default)]
    pub boundary: BoundaryKind,
    #[serde(default = "default_upwind")]
    pub upwind: UpwindMode,
    #[serde(default = "default_floor")]
    pub ellipticity_floor: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            r_min: None,
            r_max: None,
            n_r: 400,
            n_t: 400,
            theta: 0.5,
            boundary: BoundaryKind::Linearity,
            upwind: UpwindMode::Auto,
            ellipticity_floor: DEFAULT_ELLIPTICITY_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSection {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "yes")]
    pub antithetic: bool,
    #[serde(default = "one_usize")]
    pub noise_substeps: usize,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            paths: McConfig::DEFAULT_PATHS,
            dt: McConfig::DEFAULT_DT,
            antithetic: true,
            noise_substeps: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormSection {
    #[serde(default = "default_out_r")]
    pub n_r: usize,
    #[serde(default = "default_out_t")]
    pub n_t: usize,
    #[serde(default = "default_quadrature")]
    pub quadrature_nodes: usize,
}

impl Default for ClosedFormSection {
    fn default() -> Self {
        Self {
            n_r: 41,
            n_t: 11,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
        }
    }
}

/// Which grid nodes the `pde` experiment writes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeOutputSection {
    #[serde(default = "default_out_t")]
    pub t_slices: usize,
    #[serde(default = "one_usize")]
    pub r_stride: usize,
    /// Half-width of the error window in stationary standard deviations.
    #[serde(default = "default_window")]
    pub interior_sd: f64,
}

impl Default for PdeOutputSection {
    fn default() -> Self {
        Self {
            t_slices: 11,
            r_stride: 1,
            interior_sd: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceSource {
    /// Closed form for Vasicek models, PDE otherwise.
    #[default]
    Auto,
    ClosedForm,
    Pde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    #[default]
    Saddle,
    Observable,
    Zero,
    /// `π = custom_pi[0] + custom_pi[1]·x`.
    Custom,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateSection {
    #[serde(default)]
    pub strategy: StrategyKind,
    pub custom_pi: Option<[f64; 2]>,
    #[serde(default = "one")]
    pub scale: f64,
    /// `saddle`, `zero`, or `shift=<v>` for `η* + v`.
    #[serde(default = "default_eta")]
    pub eta: String,
    #[serde(default)]
    pub measure: Measure,
    #[serde(default)]
    pub surface: SurfaceSource,
    /// Full trajectories of this many leading paths are written out.
    #[serde(default = "default_written")]
    pub write_paths: usize,
    #[serde(default)]
    pub measure_check: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            strategy: StrategyKind::Saddle,
            custom_pi: None,
            scale: 1.0,
            eta: "saddle".into(),
            measure: Measure::P,
            surface: SurfaceSource::Auto,
            write_paths: 10,
            measure_check: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifySection {
    #[serde(default = "default_eta_shifts")]
    pub eta_shifts: Vec<f64>,
    #[serde(default = "default_pi_scales")]
    pub pi_scales: Vec<f64>,
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default)]
    pub surface: SurfaceSource,
    /// Also run the dt-refinement studies of the conserved quantity and
    /// of the observable strategy.
    #[serde(default)]
    pub refinement: bool,
    #[serde(default = "default_refinement_paths")]
    pub refinement_paths: usize,
    #[serde(default = "default_refinement_dt")]
    pub refinement_dt: f64,
    #[serde(default = "default_refinement_levels")]
    pub refinement_levels: usize,
    #[serde(default)]
    pub measure_check: bool,
}

impl Default for VerifySection {
    fn default() -> Self {
        let p = Perturbations::default();
        Self {
            eta_shifts: p.eta_shifts,
            pi_scales: p.pi_scales,
            sigmas: p.sigmas,
            resolution: p.resolution,
            surface: SurfaceSource::Auto,
            refinement: false,
            refinement_paths: 10_000,
            refinement_dt: 1e-3,
            refinement_levels: 4,
            measure_check: false,
        }
    }
}

impl VerifySection {
    pub fn perturbations(&self) -> Perturbations {
        Perturbations {
            eta_shifts: self.eta_shifts.clone(),
            pi_scales: self.pi_scales.clone(),
            sigmas: self.sigmas,
            resolution: self.resolution,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FkCompareSection {
    /// Probe rates; defaults to five points spanning ±2 stationary sd
    /// (Vasicek) or the middle half of the table range.
    pub r: Option<Vec<f64>>,
    /// Probe times; defaults to `{0, T/4, T/2, 3T/4, T}`.
    pub t: Option<Vec<f64>>,
    /// Step for the Monte Carlo legs, used instead of `mc.dt`.
    #[serde(default = "default_fk_dt")]
    pub dt: f64,
    #[serde(default = "default_sigmas")]
    pub threshold: f64,
}

impl Default for FkCompareSection {
    fn default() -> Self {
        Self {
            r: None,
            t: None,
            dt: default_fk_dt(),
            threshold: 3.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestInfo {
    pub program: String,
    pub version: String,
    pub csv_schema: u32,
    #[serde(default)]
    pub outputs: Vec<String>,
}

pub const CSV_SCHEMA: u32 = 1;

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn one_usize() -> usize {
    1
}
fn default_nodes() -> usize {
    400
}
fn default_upwind() -> UpwindMode {
    UpwindMode::Auto
}
fn default_floor() -> f64 {
    DEFAULT_ELLIPTICITY_FLOOR
}
fn default_paths() -> usize {
    McConfig::DEFAULT_PATHS
}
fn default_dt() -> f64 {
    McConfig::DEFAULT_DT
}
fn default_out_r() -> usize {
    41
}
fn default_out_t() -> usize {
    11
}
fn default_quadrature() -> usize {
    DEFAULT_QUADRATURE_NODES
}
fn default_window() -> f64 {
    4.0
}
fn default_fk_dt() -> f64 {
    1.0 / 500.0
}
fn default_eta() -> String {
    "saddle".into()
}
fn default_written() -> usize {
    10
}
fn default_eta_shifts() -> Vec<f64> {
    Perturbations::default().eta_shifts
}
fn default_pi_scales() -> Vec<f64> {
    Perturbations::default().pi_scales
}
fn default_sigmas() -> f64 {
    3.0
}
fn default_resolution() -> f64 {
    Perturbations::default().resolution
}
fn default_refinement_paths() -> usize {
    10_000
}
fn default_refinement_dt() -> f64 {
    1e-3
}
fn default_refinement_levels() -> usize {
    4
}

/// Adversary choice parsed from `saddle`, `zero` or `shift=<v>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaChoice {
    Saddle,
    Zero,
    Shift(f64),
}

impl std::str::FromStr for EtaChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "saddle" => Ok(EtaChoice::Saddle),
            "zero" => Ok(EtaChoice::Zero),
            other => other
                .strip_prefix("shift=")
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .map(EtaChoice::Shift)
                .ok_or_else(|| {
                    invalid(
                        "eta",
                        format!("expected saddle, zero or shift=<v>, got `{other}`"),
                    )
                }),
        }
    }
}

impl ExperimentConfig {
    /// A configuration of the given kind with every section at its defaults.
    pub fn with_defaults(kind: ExperimentKind, seed: u64) -> Self {
        let mut c = Self {
            kind,
            seed,
            out: None,
            model: Some(ModelSection::default()),
            init: Some(InitSection::default()),
            grid: None,
            mc: None,
            closed_form: None,
            pde: None,
            simulate: None,
            verify: None,
            fk_compare: None,
            manifest: None,
        };
        c.ensure_sections();
        c
    }

    /// Parses a TOML document, reporting every unknown key at once.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let value = toml::Value::Table(table);
        let mut unknown = Vec::new();
        let parsed: std::result::Result<Self, _> = serde_ignored::deserialize(value, |path| {
            unknown.push(path.to_string().replace(".?", ""))
        });
        let cfg = parsed.map_err(|e| Error::Config(e.to_string()))?;
        // `manifest` tables describe the build and never affect a run.
        unknown.retain(|k| !k.starts_with("manifest."));
        if !unknown.is_empty() {
            return Err(Error::Config(format!(
                "unknown keys: {}",
                unknown.join(", ")
            )));
        }
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Adds empty sections needed by `kind`, so defaults apply.
    pub fn ensure_sections(&mut self) {
        use ExperimentKind::*;
        self.model.get_or_insert_with(Default::default);
        self.init.get_or_insert_with(Default::default);
        match self.kind {
            ClosedForm => {
                self.closed_form.get_or_insert_with(Default::default);
            }
            Pde => {
                self.grid.get_or_insert_with(Default::default);
                self.pde.get_or_insert_with(Default::default);
            }
            Simulate => {
                self.mc.get_or_insert_with(Default::default);
                self.simulate.get_or_insert_with(Default::default);
            }
            Verify => {
                self.mc.get_or_insert_with(Default::default);
                self.verify.get_or_insert_with(Default::default);
            }
            FkCompare => {
                self.grid.get_or_insert_with(Default::default);
                self.mc.get_or_insert_with(Default::default);
                self.fk_compare.get_or_insert_with(Default::default);
            }
        }
    }

    /// Checks that the sections `kind` reads are present and valid.
    pub fn validate(&self) -> Result<()> {
        use ExperimentKind::*;
        let need = |present: bool, name: &str| {
            if present {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "kind `{}` needs a [{name}] section",
                    self.kind.name()
                )))
            }
        };
        need(self.model.is_some(), "model")?;
        match self.kind {
            ClosedForm => {}
            Pde => need(self.grid.is_some(), "grid")?,
            Simulate | Verify => {
                need(self.mc.is_some(), "mc")?;
                if self.surface_source() == SurfaceSource::Pde {
                    need(self.grid.is_some(), "grid")?;
                }
            }
            FkCompare => {
                need(self.grid.is_some(), "grid")?;
                need(self.mc.is_some(), "mc")?;
            }
        }
        let model = self.build_model()?;
        if self.kind == ClosedForm && model.vasicek.is_none() {
            return Err(invalid(
                "model.type",
                "closed-form experiments need a vasicek model",
            ));
        }
        self.init_state(&model)?;
        if self.grid.is_some() {
            self.scheme()?;
            self.pde_grid(&model)?;
        }
        if let Some(m) = &self.mc {
            self.mc_config(m)?.validate()?;
        }
        if let Some(c) = &self.closed_form {
            if c.n_r < 2 || c.n_t < 2 {
                return Err(invalid(
                    "closed_form.n_r",
                    "output grid needs at least 2 points per axis",
                ));
            }
        }
        if let Some(p) = &self.pde {
            if p.t_slices < 2 || p.r_stride == 0 {
                return Err(invalid(
                    "pde.t_slices",
                    "need at least 2 slices and a positive stride",
                ));
            }
            if !(p.interior_sd > 0.0) {
                return Err(invalid("pde.interior_sd", "must be > 0"));
            }
        }
        if let Some(s) = &self.simulate {
            s.eta.parse::<EtaChoice>()?;
            if s.strategy == StrategyKind::Custom && s.custom_pi.is_none() {
                return Err(invalid(
                    "simulate.custom_pi",
                    "custom strategy needs custom_pi = [a, b]",
                ));
            }
            if !s.scale.is_finite() {
                return Err(invalid("simulate.scale", "must be finite"));
            }
        }
        if let Some(v) = &self.verify {
            if v.eta_shifts
                .iter()
                .chain(&v.pi_scales)
                .any(|p| !p.is_finite())
            {
                return Err(invalid("verify.eta_shifts", "perturbations must be finite"));
            }
            if !(v.sigmas > 0.0 && v.resolution > 0.0) {
                return Err(invalid(
                    "verify.sigmas",
                    "sigmas and resolution must be > 0",
                ));
            }
            if v.refinement && v.refinement_levels < 3 {
                return Err(invalid(
                    "verify.refinement_levels",
                    "need at least 3 levels",
                ));
            }
        }
        if let Some(f) = &self.fk_compare {
            let horizon = model.model.horizon();
            for &t in f.t.iter().flatten() {
                if !(0.0..=horizon).contains(&t) {
                    return Err(Error::TimeOutOfRange {
                        t,
                        lo: 0.0,
                        hi: horizon,
                    });
                }
            }
            if !(f.dt > 0.0) {
                return Err(invalid("fk_compare.dt", "must be > 0"));
            }
        }
        Ok(())
    }

    /// Copy with every default made explicit, suitable as a manifest.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        c.ensure_sections();
        let model = c.build_model()?;
        let section = c.model.as_mut().expect("model section");
        if let Some(p) = model.model.vasicek() {
            *section = ModelSection {
                kind: ModelType::Vasicek,
                horizon: Some(p.horizon),
                lambda: Some(Coefficient::Scalar(p.lambda)),
                sigma: Some(p.sigma.clone()),
                sigma_bar: Some(Coefficient::Scalar(p.sigma_bar)),
                theta_bar: Some(p.theta_bar),
                alpha: Some(p.alpha),
                r: None,
                mu_bar: None,
            };
        }
        let init = c.init_state(&model)?;
        c.init = Some(InitSection {
            x: init.x,
            y: init.y,
            r: Some(init.r),
            t: init.t,
        });
        if c.grid.is_some() {
            let g = c.pde_grid(&model)?;
            if let Some(grid) = c.grid.as_mut() {
                grid.r_min = Some(g.r_min);
                grid.r_max = Some(g.r_max);
            }
        }
        if let Some(f) = c.fk_compare.as_mut() {
            let (r, t) = probe_points(f, &model);
            f.r = Some(r);
            f.t = Some(t);
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build_model(&self) -> Result<BuiltModel> {
        let section = self.model.clone().unwrap_or_default();
        match section.kind {
            ModelType::Vasicek => {
                if section.r.is_some() || section.mu_bar.is_some() {
                    return Err(invalid(
                        "model.r",
                        "r and mu_bar tables belong to table models",
                    ));
                }
                let d = VasicekParams::default();
                let scalar = |c: Option<Coefficient>, name: &'static str, default: f64| match c {
                    None => Ok(default),
                    Some(Coefficient::Scalar(v)) => Ok(v),
                    Some(Coefficient::Samples(_)) => {
                        Err(invalid(name, "vasicek models take a number"))
                    }
                };
                let params = VasicekParams {
                    lambda: scalar(section.lambda, "lambda", d.lambda)?,
                    sigma: section.sigma.unwrap_or(d.sigma),
                    theta_bar: section.theta_bar.unwrap_or(d.theta_bar),
                    alpha: section.alpha.unwrap_or(d.alpha),
                    sigma_bar: scalar(section.sigma_bar, "sigma_bar", d.sigma_bar)?,
                    horizon: section.horizon.unwrap_or(d.horizon),
                };
                let nodes = self
                    .closed_form
                    .map_or(DEFAULT_QUADRATURE_NODES, |c| c.quadrature_nodes);
                let solution = VasicekSolution::with_nodes(params, nodes)?;
                let model = crate::market::vasicek_to_model(solution.params())?;
                Ok(BuiltModel {
                    model,
                    vasicek: Some(solution),
                })
            }
            ModelType::Table => {
                if section.theta_bar.is_some() || section.alpha.is_some() {
                    return Err(invalid(
                        "model.alpha",
                        "theta_bar and alpha belong to vasicek models",
                    ));
                }
                let knots = section
                    .r
                    .ok_or_else(|| invalid("model.r", "table models need rate knots"))?;
                if knots.len() < 2
                    || knots.windows(2).any(|w| !(w[1] > w[0]))
                    || knots.iter().any(|k| !k.is_finite())
                {
                    return Err(invalid(
                        "model.r",
                        "need at least 2 finite, strictly increasing knots",
                    ));
                }
                let horizon = section
                    .horizon
                    .ok_or_else(|| invalid("horizon", "table models need a horizon"))?;
                let sigma = section
                    .sigma
                    .ok_or_else(|| invalid("sigma", "table models need sigma"))?;
                validate_sigma(&sigma)?;
                let lambda = table(&knots, section.lambda, "lambda")?;
                let mu_bar = table(&knots, section.mu_bar, "mu_bar")?;
                let sigma_bar = table(&knots, section.sigma_bar, "sigma_bar")?;
                let model = MarketModel::new(
                    Arc::new(move |r| lambda.eval(r)),
                    Arc::new(move |_, t| sigma.eval(t)),
                    Arc::new(move |r| mu_bar.eval(r)),
                    Arc::new(move |r| sigma_bar.eval(r)),
                    horizon,
                    (knots[0], knots[knots.len() - 1]),
                )?;
                Ok(BuiltModel {
                    model,
                    vasicek: None,
                })
            }
        }
    }

    pub fn init_state(&self, model: &BuiltModel) -> Result<GameState> {
        let init = self.init.unwrap_or_default();
        let r = match (init.r, model.model.vasicek()) {
            (Some(r), _) => r,
            (None, Some(p)) => p.stationary_mean(),
            (None, None) => {
                let (lo, hi) = model.model.r_range();
                0.5 * (lo + hi)
            }
        };
        let state = GameState::new(init.x, init.y, r, init.t)?;
        let horizon = model.model.horizon();
        if !(0.0..horizon).contains(&state.t) {
            return Err(Error::TimeOutOfRange {
                t: state.t,
                lo: 0.0,
                hi: horizon,
            });
        }
        Ok(state)
    }

    pub fn scheme(&self) -> Result<SchemeConfig> {
        let g = self.grid.clone().unwrap_or_default();
        if !(0.0..=1.0).contains(&g.theta) {
            return Err(invalid(
                "theta",
                format!("must lie in [0, 1], got {}", g.theta),
            ));
        }
        if !(g.ellipticity_floor >= 0.0) {
            return Err(invalid("ellipticity_floor", "must be >= 0"));
        }
        Ok(SchemeConfig {
            theta: g.theta,
            upwind: g.upwind,
            ellipticity_floor: g.ellipticity_floor,
        })
    }

    pub fn pde_grid(&self, model: &BuiltModel) -> Result<PdeGrid> {
        let g = self.grid.clone().unwrap_or_default();
        let (lo, hi) = match model.model.vasicek() {
            Some(p) => p.default_domain(),
            None => model.model.r_range(),
        };
        let boundary = match g.boundary {
            BoundaryKind::Linearity => BoundaryCondition::Linearity,
            BoundaryKind::DirichletClosedForm => {
                let cf = model.vasicek.as_ref().ok_or_else(|| {
                    invalid("boundary", "closed-form boundaries need a vasicek model")
                })?;
                BoundaryCondition::closed_form(cf)
            }
        };
        PdeGrid::new(
            g.r_min.unwrap_or(lo),
            g.r_max.unwrap_or(hi),
            g.n_r,
            g.n_t,
            boundary,
        )
    }

    pub fn mc_config(&self, m: &McSection) -> Result<McConfig> {
        let cfg = McConfig {
            n_paths: m.paths,
            dt: m.dt,
            seed: self.seed,
            antithetic: m.antithetic,
            noise_substeps: m.noise_substeps,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn surface_source(&self) -> SurfaceSource {
        let s = match self.kind {
            ExperimentKind::Simulate => self.simulate.as_ref().map(|s| s.surface),
            ExperimentKind::Verify => self.verify.as_ref().map(|v| v.surface),
            _ => None,
        }
        .unwrap_or_default();
        match (
            s,
            self.model.as_ref().map_or(ModelType::Vasicek, |m| m.kind),
        ) {
            (SurfaceSource::Auto, ModelType::Vasicek) => SurfaceSource::ClosedForm,
            (SurfaceSource::Auto, ModelType::Table) => SurfaceSource::Pde,
            (s, _) => s,
        }
    }

    /// Builds the controls named in `[simulate]`.
    pub fn controls(
        &self,
        surface: &Arc<ValueSurface>,
        c0: f64,
    ) -> Result<(StrategyField, AdversaryField)> {
        let s = self.simulate.clone().unwrap_or_default();
        let base = match s.strategy {
            StrategyKind::Saddle => StrategyField::saddle(surface.clone()),
            StrategyKind::Observable => StrategyField::Observable {
                surface: surface.clone(),
                c0,
                scale: 1.0,
            },
            StrategyKind::Zero => StrategyField::zero(),
            StrategyKind::Custom => {
                let [a, b] = s.custom_pi.ok_or_else(|| {
                    invalid("simulate.custom_pi", "custom strategy needs custom_pi")
                })?;
                StrategyField::custom(format!("affine({a},{b})"), move |st: &GameState| {
                    a + b * st.x
                })
            }
        };
        let strategy = if s.scale == 1.0 {
            base
        } else {
            base.scaled(s.scale)
        };
        let adversary = match s.eta.parse::<EtaChoice>()? {
            EtaChoice::Saddle => AdversaryField::saddle(surface.clone()),
            EtaChoice::Zero => AdversaryField::zero(),
            EtaChoice::Shift(v) => AdversaryField::saddle(surface.clone()).shifted(v),
        };
        Ok((strategy, adversary))
    }
}

/// The market model plus its closed form when it is a Vasicek model.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub model: MarketModel,
    pub vasicek: Option<VasicekSolution>,
}

/// Probe rates and times for `fk-compare`, with defaults filled in.
pub fn probe_points(f: &FkCompareSection, model: &BuiltModel) -> (Vec<f64>, Vec<f64>) {
    let horizon = model.model.horizon();
    let r = f.r.clone().unwrap_or_else(|| match model.model.vasicek() {
        Some(p) => {
            let (m, s) = (p.stationary_mean(), p.stationary_sd());
            (-2..=2).map(|k| m + k as f64 * s).collect()
        }
        None => {
            let (lo, hi) = model.model.r_range();
            (0..5)
                .map(|k| lo + (hi - lo) * (0.25 + 0.125 * k as f64))
                .collect()
        }
    });
    let t =
        f.t.clone()
            .unwrap_or_else(|| (0..5).map(|k| horizon * k as f64 / 4.0).collect());
    (r, t)
}

fn validate_sigma(s: &SigmaSchedule) -> Result<()> {
    let ok = match s {
        SigmaSchedule::Constant(v) => v.is_finite() && *v > 0.0,
        SigmaSchedule::Table(k) => {
            !k.is_empty()
                && k.windows(2).all(|w| w[1].0 > w[0].0)
                && k.iter()
                    .all(|(t, v)| t.is_finite() && v.is_finite() && *v > 0.0)
        }
    };
    if ok {
        Ok(())
    } else {
        Err(invalid(
            "sigma",
            "must be positive with strictly increasing table times",
        ))
    }
}

/// Piecewise-linear function of `r` with flat extrapolation.
#[derive(Debug, Clone)]
struct Table1d {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl Table1d {
    fn eval(&self, r: f64) -> f64 {
        let k = &self.knots;
        if r <= k[0] {
            return self.values[0];
        }
        let n = k.len();
        if r >= k[n - 1] {
            return self.values[n - 1];
        }
        let i = k.partition_point(|&x| x <= r) - 1;
        let u = (r - k[i]) / (k[i + 1] - k[i]);
        self.values[i] + u * (self.values[i + 1] - self.values[i])
    }
}

fn table(knots: &[f64], c: Option<Coefficient>, name: &'static str) -> Result<Table1d> {
    let values = match c {
        None => return Err(invalid(name, "table models need every coefficient")),
        Some(Coefficient::Scalar(v)) => vec![v; knots.len()],
        Some(Coefficient::Samples(v)) => v,
    };
    if values.len() != knots.len() {
        return Err(invalid(
            name,
            format!(
                "expected {} samples to match model.r, got {}",
                knots.len(),
                values.len()
            ),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid(name, "samples must be finite"));
    }
    Ok(Table1d {
        knots: knots.to_vec(),
        values,
    })
}
