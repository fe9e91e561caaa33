//! Experiment dispatch and artifact emission.
//!
//! Every run writes its artifacts plus `manifest.toml` into the output
//! directory. The manifest is the resolved configuration, so
//! `rategame run --config <dir>/manifest.toml` reproduces the CSV files
//! byte for byte.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use crate::closed_form::{eta_star_at, pi_star_at, value_function};
use crate::config::{
    probe_points, BuiltModel, ExperimentConfig, ExperimentKind, ManifestInfo, SurfaceSource,
    CSV_SCHEMA,
};
use crate::error::{Error, Result};
use crate::game::{
    observable_refinement, reduction_refinement, verify_saddle, RefinementStudy, SaddleSetup,
};
use crate::market::MarketModel;
use crate::pde::{self, closed_form_errors, residual_report, PdeSolution};
use crate::sim::{
    estimate_objective, feynman_kac_f, feynman_kac_g, measure_consistency, simulate_recorded,
    LogSlopeField, McConfig, Measure, ObjectiveMethod, Recording,
};
use crate::surface::ValueSurface;

pub const DEFAULT_OUT_DIR: &str = "rategame-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Success,
    /// A verification check failed.
    Failed,
    /// Some verdict could not be resolved at the given budget.
    Inconclusive,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::Failed => 2,
            RunStatus::Inconclusive => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub kind: ExperimentKind,
    pub out_dir: PathBuf,
    /// Artifact file names, manifest last.
    pub files: Vec<String>,
    pub status: RunStatus,
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn csv(
        &mut self,
        name: &str,
        table: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<()> {
        let mut out = BufWriter::new(File::create(self.dir.join(name))?);
        writeln!(
            out,
            "# rategame {} {table} schema v{CSV_SCHEMA}",
            env!("CARGO_PKG_VERSION")
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        self.files.push(name.into());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut out = BufWriter::new(File::create(self.dir.join(name))?);
        serde_json::to_writer_pretty(&mut out, value)?;
        writeln!(out)?;
        out.flush()?;
        self.files.push(name.into());
        Ok(())
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Validates `cfg`, runs the experiment it names and writes artifacts.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let cfg = cfg.resolved()?;
    let out_dir = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let mut art = Artifacts::new(&out_dir)?;
    let model = cfg.build_model()?;
    info!(
        "running {} (seed {}) into {}",
        cfg.kind.name(),
        cfg.seed,
        out_dir.display()
    );
    let status = match cfg.kind {
        ExperimentKind::ClosedForm => run_closed_form(&cfg, &model, &mut art)?,
        ExperimentKind::Pde => run_pde(&cfg, &model, &mut art)?,
        ExperimentKind::Simulate => run_simulate(&cfg, &model, &mut art)?,
        ExperimentKind::Verify => run_verify(&cfg, &model, &mut art)?,
        ExperimentKind::FkCompare => run_fk_compare(&cfg, &model, &mut art)?.status,
    };
    let mut manifest = cfg.clone();
    manifest.manifest = Some(ManifestInfo {
        program: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        csv_schema: CSV_SCHEMA,
        outputs: art.files.clone(),
    });
    fs::write(out_dir.join("manifest.toml"), manifest.to_toml()?)?;
    art.files.push("manifest.toml".into());
    Ok(RunOutcome {
        kind: cfg.kind,
        out_dir,
        files: art.files,
        status,
    })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            if k + 1 == n {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            }
        })
        .collect()
}

fn run_closed_form(
    cfg: &ExperimentConfig,
    model: &BuiltModel,
    art: &mut Artifacts,
) -> Result<RunStatus> {
    let sol = model.vasicek.as_ref().expect("validated vasicek model");
    let p = sol.params();
    let out = cfg.closed_form.expect("closed_form section");
    let init = cfg.init_state(model)?;
    let (lo, hi) = p.default_domain();
    let mut rows = Vec::new();
    for t in linspace(0.0, p.horizon, out.n_t) {
        let (b1, a1, a2) = (sol.b1(t)?, sol.a1(t)?, sol.a2(t)?);
        let slice = sol.slice(t)?;
        for r in linspace(lo, hi, out.n_r) {
            let pt = slice.point(r);
            let sigma = model.model.sigma(r, t);
            rows.push(vec![
                num(t),
                num(r),
                num(b1),
                num(a1),
                num(a2),
                num(pt.h),
                num(pt.h_r),
                num(pt.g),
                num(sol.f(r, t)?),
                num(eta_star_at(&pt, p.lambda, p.sigma_bar)),
                num(pi_star_at(
                    &pt,
                    init.x,
                    init.y,
                    p.lambda,
                    sigma,
                    p.sigma_bar,
                )),
            ]);
        }
    }
    art.csv(
        "closed_form.csv",
        "closed-form",
        &[
            "t", "r", "b1", "a1", "a2", "h", "h_r", "g", "f", "eta_star", "pi_star",
        ],
        &rows,
    )?;
    let surface = sol.clone().surface();
    let pt = surface.point(init.r, init.t);
    let summary = json!({
        "init": init,
        "value": value_function(&init, &surface),
        "h": pt.h,
        "g": pt.g,
        "conserved_c0": 2.0 * pt.g * init.y + pt.h * init.x,
        "eta_star": eta_star_at(&pt, p.lambda, p.sigma_bar),
        "pi_star": pi_star_at(&pt, init.x, init.y, p.lambda, model.model.sigma(init.r, init.t), p.sigma_bar),
        "quadrature_nodes": sol.quadrature_nodes(),
    });
    art.json("closed_form_summary.json", &summary)?;
    Ok(RunStatus::Success)
}

fn solve_pde(cfg: &ExperimentConfig, model: &BuiltModel) -> Result<PdeSolution> {
    let grid = cfg.pde_grid(model)?;
    let scheme = cfg.scheme()?;
    info!(
        "solving on [{}, {}] with {}x{} nodes, {} boundaries",
        grid.r_min,
        grid.r_max,
        grid.n_r,
        grid.n_t,
        grid.boundary.name()
    );
    pde::solve(&model.model, &grid, &scheme)
}

fn interior_window(cfg: &ExperimentConfig, model: &BuiltModel, sol: &PdeSolution) -> (f64, f64) {
    let k = cfg.pde.map_or(4.0, |p| p.interior_sd);
    match model.model.vasicek() {
        Some(p) => {
            let (m, s) = (p.stationary_mean(), p.stationary_sd());
            (m - k * s, m + k * s)
        }
        None => {
            let g = sol.grid();
            let w = g.r_max - g.r_min;
            (g.r_min + 0.1 * w, g.r_max - 0.1 * w)
        }
    }
}

fn run_pde(cfg: &ExperimentConfig, model: &BuiltModel, art: &mut Artifacts) -> Result<RunStatus> {
    let sol = solve_pde(cfg, model)?;
    let out = cfg.pde.expect("pde section");
    let grid = sol.grid().clone();
    let n_t = grid.n_t;
    let mut slices: Vec<usize> = (0..out.t_slices)
        .map(|k| ((k as f64 * n_t as f64 / (out.t_slices - 1) as f64).round() as usize).min(n_t))
        .collect();
    slices.dedup();
    let cf = model.vasicek.as_ref();
    let mut rows = Vec::new();
    for &n in &slices {
        let t = sol.f.t(n);
        for i in (0..grid.n_r).step_by(out.r_stride) {
            let r = grid.r(i);
            let mut row = vec![
                num(t),
                num(r),
                num(sol.f.f(n, i)),
                num(sol.h(n, i)),
                num(sol.h_r(n, i)),
                num(sol.g(n, i)),
            ];
            if let Some(cf) = cf {
                row.push(num(cf.h(r, t)?));
                row.push(num(cf.g(t)?));
            }
            rows.push(row);
        }
    }
    let header: &[&str] = if cf.is_some() {
        &[
            "t",
            "r",
            "f",
            "h",
            "h_r",
            "g",
            "h_closed_form",
            "g_closed_form",
        ]
    } else {
        &["t", "r", "f", "h", "h_r", "g"]
    };
    art.csv("pde_surface.csv", "pde-surface", header, &rows)?;

    let window = interior_window(cfg, model, &sol);
    let residuals = residual_report(&model.model, &sol, window);
    let errors = cf
        .map(|c| closed_form_errors(&sol, c, window))
        .transpose()?;
    let init = cfg.init_state(model)?;
    let surface = sol.surface();
    let value = sol
        .f
        .contains(init.r, init.t)
        .then(|| value_function(&init, &surface));
    let report = json!({
        "grid": {
            "r_min": grid.r_min,
            "r_max": grid.r_max,
            "n_r": grid.n_r,
            "n_t": grid.n_t,
            "boundary": grid.boundary.name(),
        },
        "scheme": sol.f.scheme,
        "interior": [window.0, window.1],
        "residuals": residuals,
        "closed_form_errors": errors,
        "init": init,
        "value": value,
        "value_closed_form": cf.map(|c| value_function(&init, &c.clone().surface())),
    });
    art.json("pde_report.json", &report)?;
    Ok(RunStatus::Success)
}

fn value_surface(cfg: &ExperimentConfig, model: &BuiltModel) -> Result<Arc<ValueSurface>> {
    match cfg.surface_source() {
        SurfaceSource::Pde => Ok(Arc::new(solve_pde(cfg, model)?.surface())),
        _ => {
            let sol = model
                .vasicek
                .as_ref()
                .ok_or_else(|| Error::Config("closed-form surfaces need a vasicek model".into()))?;
            Ok(Arc::new(sol.clone().surface()))
        }
    }
}

fn run_simulate(
    cfg: &ExperimentConfig,
    model: &BuiltModel,
    art: &mut Artifacts,
) -> Result<RunStatus> {
    let section = cfg.simulate.clone().expect("simulate section");
    let mc = cfg.mc_config(&cfg.mc.expect("mc section"))?;
    let init = cfg.init_state(model)?;
    let surface = value_surface(cfg, model)?;
    let setup = SaddleSetup::new(surface.clone(), model.model.clone(), init)?;
    let (strategy, adversary) = cfg.controls(&surface, setup.c0)?;
    let m = &model.model;
    let bundle = simulate_recorded(
        m,
        &strategy,
        &adversary,
        &init,
        &mc,
        section.measure,
        Recording::Terminal,
    )?;
    let method = match section.measure {
        Measure::P => ObjectiveMethod::Importance,
        Measure::QEta => ObjectiveMethod::Direct,
    };
    let objective = estimate_objective(&bundle, method)?;
    let value = setup.value();

    let written = section.write_paths.min(mc.n_paths);
    if written > 0 {
        // Paths are generated per index from the seed, so these are the
        // leading paths of the run above.
        let head_cfg = McConfig {
            n_paths: written.max(2),
            ..mc
        };
        let head = simulate_recorded(
            m,
            &strategy,
            &adversary,
            &init,
            &head_cfg,
            section.measure,
            Recording::Full,
        )?;
        let mut rows = Vec::new();
        for p in 0..written {
            for (k, &t) in head.times.iter().enumerate() {
                rows.push(vec![
                    p.to_string(),
                    k.to_string(),
                    num(t),
                    num(head.x(p, k)),
                    num(head.y(p, k)),
                    num(head.r(p, k)),
                    num(head.w(p, k)),
                ]);
            }
        }
        art.csv(
            "paths.csv",
            "paths",
            &["path", "step", "t", "x", "y", "r", "w"],
            &rows,
        )?;
    }

    let check = if section.measure_check {
        Some(measure_consistency(m, &strategy, &adversary, &init, &mc)?)
    } else {
        None
    };
    let summary = json!({
        "control": bundle.control,
        "measure": section.measure,
        "objective_method": match method {
            ObjectiveMethod::Direct => "direct",
            ObjectiveMethod::Importance => "importance",
        },
        "objective": objective,
        "terminal_wealth": bundle.terminal_estimate(|x, _, _| x),
        "terminal_density": bundle.terminal_estimate(|_, y, _| y),
        "value": value,
        "value_z": bundle.control.saddle.then(|| objective.z_score(value)),
        "n_paths": mc.n_paths,
        "steps": bundle.n_steps(),
        "dt": bundle.dt,
        "seed": mc.seed,
        "antithetic": mc.antithetic,
        "measure_check": check,
    });
    art.json("simulate_summary.json", &summary)?;
    Ok(RunStatus::Success)
}

fn refinement_rows(study: &RefinementStudy, rows: &mut Vec<Vec<String>>) {
    for l in &study.levels {
        rows.push(vec![
            study.quantity.clone(),
            num(l.dt),
            l.noise_substeps.to_string(),
            num(l.max_deviation),
            num(l.max_deviation_terminal),
        ]);
    }
}

fn run_verify(
    cfg: &ExperimentConfig,
    model: &BuiltModel,
    art: &mut Artifacts,
) -> Result<RunStatus> {
    let v = cfg.verify.clone().expect("verify section");
    let mc = cfg.mc_config(&cfg.mc.expect("mc section"))?;
    let init = cfg.init_state(model)?;
    let surface = value_surface(cfg, model)?;
    let setup = SaddleSetup::new(surface, model.model.clone(), init)?;
    let report = verify_saddle(&setup, &v.perturbations(), &mc)?;
    art.json("game_report.json", &report)?;
    let rows: Vec<Vec<String>> = report
        .verdicts
        .iter()
        .map(|d| {
            vec![
                d.name.clone(),
                num(d.margin),
                num(d.se),
                num(d.z),
                num(d.threshold_sigmas),
                serde_json::to_value(d.status)
                    .ok()
                    .and_then(|s| s.as_str().map(String::from))
                    .unwrap_or_default(),
                d.strict.to_string(),
            ]
        })
        .collect();
    art.csv(
        "verdicts.csv",
        "verdicts",
        &[
            "name",
            "margin",
            "se",
            "z",
            "threshold_sigmas",
            "status",
            "strict",
        ],
        &rows,
    )?;
    let mut rows = Vec::new();
    for (family, list) in [
        ("eta-shift", &report.j_eta_perturbed),
        ("pi-scale", &report.j_pi_perturbed),
    ] {
        for p in list {
            rows.push(vec![
                family.into(),
                p.label.clone(),
                num(p.parameter),
                num(p.estimate.mean),
                num(p.estimate.se),
                num(p.paired_difference.mean),
                num(p.paired_difference.se),
            ]);
        }
    }
    art.csv(
        "perturbations.csv",
        "perturbations",
        &[
            "family",
            "label",
            "parameter",
            "j",
            "se",
            "paired_difference",
            "paired_se",
        ],
        &rows,
    )?;

    if v.refinement {
        let rcfg = McConfig {
            n_paths: v.refinement_paths,
            dt: v.refinement_dt,
            noise_substeps: 1,
            ..mc
        };
        let studies = [
            reduction_refinement(&setup, &rcfg, v.refinement_levels)?,
            observable_refinement(&setup, &rcfg, v.refinement_levels)?,
        ];
        let mut rows = Vec::new();
        for s in &studies {
            refinement_rows(s, &mut rows);
        }
        art.csv(
            "refinement.csv",
            "refinement",
            &[
                "quantity",
                "dt",
                "noise_substeps",
                "max_deviation",
                "max_deviation_terminal",
            ],
            &rows,
        )?;
        let summary: Vec<_> = studies
            .iter()
            .map(|s| {
                json!({
                    "quantity": s.quantity,
                    "ratios": s.ratios,
                    "mean_ratio": s.mean_ratio(),
                    "fitted_order": s.fitted_order,
                    "calibrated_tolerance": s.calibrated_tolerance,
                    "finest_max_deviation": s.finest().max_deviation,
                    "within_tolerance": s.within_tolerance(),
                })
            })
            .collect();
        art.json("refinement.json", &summary)?;
    }
    if v.measure_check {
        let check = measure_consistency(
            &setup.model,
            &setup.pi_star(),
            &setup.eta_star(),
            &init,
            &mc,
        )?;
        art.json("measure_check.json", &check)?;
    }
    Ok(if report.any_inconclusive() {
        RunStatus::Inconclusive
    } else if report.all_pass() {
        RunStatus::Success
    } else {
        RunStatus::Failed
    })
}

/// One probe of the Feynman–Kac comparison.
#[derive(Debug, Clone, Serialize)]
pub struct FkRow {
    /// `F`, or `G` (sign included).
    pub quantity: &'static str,
    pub r: f64,
    pub t: f64,
    pub pde: f64,
    pub closed_form: Option<f64>,
    pub mc: f64,
    pub se: f64,
    pub discretisation_gap: f64,
    pub z: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FkComparison {
    pub rows: Vec<FkRow>,
    pub threshold: f64,
    pub max_abs_z: f64,
    pub flagged: usize,
    #[serde(skip)]
    pub status: RunStatus,
}

/// Compares PDE values of `F` and `G` with Monte Carlo Feynman–Kac
/// estimates at the configured probes.
pub fn fk_compare(cfg: &ExperimentConfig) -> Result<FkComparison> {
    cfg.validate()?;
    let cfg = cfg.resolved()?;
    let model = cfg.build_model()?;
    fk_table(&cfg, &model)
}

fn fk_table(cfg: &ExperimentConfig, model: &BuiltModel) -> Result<FkComparison> {
    let section = cfg.fk_compare.clone().expect("fk_compare section");
    let mc = McConfig {
        dt: section.dt,
        ..cfg.mc_config(&cfg.mc.expect("mc section"))?
    };
    let sol = solve_pde(cfg, model)?;
    let surface = sol.surface();
    let (rs, ts) = probe_points(&section, model);
    let m: &MarketModel = &model.model;
    let mut rows = Vec::new();
    for &t in &ts {
        for &r in &rs {
            if !sol.f.contains(r, t) {
                let g = sol.grid();
                return Err(Error::RateOutOfRange {
                    r,
                    lo: g.r_min,
                    hi: g.r_max,
                });
            }
            let f_mc = feynman_kac_f(m, r, t, &mc)?;
            let f_pde = sol.f.f_interp(r, t);
            rows.push(FkRow {
                quantity: "F",
                r,
                t,
                pde: f_pde,
                closed_form: model.vasicek.as_ref().map(|c| c.f(r, t)).transpose()?,
                mc: f_mc.mean(),
                se: f_mc.se(),
                discretisation_gap: f_mc.discretisation_gap(),
                z: f_mc.z_score(f_pde),
                flagged: false,
            });
            let g_mc = feynman_kac_g(m, LogSlopeField::Pde(&sol.f), r, t, &mc)?.negated();
            let g_pde = surface.g(r, t);
            rows.push(FkRow {
                quantity: "G",
                r,
                t,
                pde: g_pde,
                closed_form: model.vasicek.as_ref().map(|c| c.g(t)).transpose()?,
                mc: g_mc.mean(),
                se: g_mc.se(),
                discretisation_gap: g_mc.discretisation_gap(),
                z: g_mc.z_score(g_pde),
                flagged: false,
            });
        }
    }
    for row in &mut rows {
        row.flagged = !(row.z.abs() <= section.threshold);
        if row.flagged {
            warn!(
                "{} at r = {}, t = {}: z = {:.2}",
                row.quantity, row.r, row.t, row.z
            );
        }
    }
    let flagged = rows.iter().filter(|r| r.flagged).count();
    let max_abs_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    Ok(FkComparison {
        rows,
        threshold: section.threshold,
        max_abs_z,
        flagged,
        status: if flagged == 0 {
            RunStatus::Success
        } else {
            RunStatus::Failed
        },
    })
}

fn run_fk_compare(
    cfg: &ExperimentConfig,
    model: &BuiltModel,
    art: &mut Artifacts,
) -> Result<FkComparison> {
    let table = fk_table(cfg, model)?;
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.quantity.into(),
                num(r.r),
                num(r.t),
                num(r.pde),
                opt(r.closed_form),
                num(r.mc),
                num(r.se),
                num(r.discretisation_gap),
                num(r.z),
                r.flagged.to_string(),
            ]
        })
        .collect();
    art.csv(
        "fk_compare.csv",
        "fk-compare",
        &[
            "quantity",
            "r",
            "t",
            "pde",
            "closed_form",
            "mc",
            "se",
            "discretisation_gap",
            "z",
            "flagged",
        ],
        &rows,
    )?;
    art.json(
        "fk_summary.json",
        &json!({
            "threshold": table.threshold,
            "max_abs_z": table.max_abs_z,
            "flagged": table.flagged,
            "probes": table.rows.len(),
        }),
    )?;
    Ok(table)
}

/// Exit code for a failed run.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical { .. } | Error::Degenerate { .. } => 2,
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: ExperimentKind, dir: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::with_defaults(kind, 9);
        c.out = Some(dir.to_path_buf());
        if let Some(g) = c.grid.as_mut() {
            g.n_r = 61;
            g.n_t = 40;
        }
        if let Some(m) = c.mc.as_mut() {
            m.paths = 200;
            m.dt = 0.05;
        }
        c
    }

    #[test]
    fn closed_form_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&tiny(ExperimentKind::ClosedForm, dir.path())).unwrap();
        assert_eq!(out.status, RunStatus::Success);
        assert_eq!(
            out.files,
            [
                "closed_form.csv",
                "closed_form_summary.json",
                "manifest.toml"
            ]
        );
        let text = fs::read_to_string(dir.path().join("closed_form.csv")).unwrap();
        assert!(text.starts_with("# rategame "));
        assert!(text.lines().next().unwrap().ends_with("schema v1"));
        assert_eq!(text.lines().count(), 2 + 41 * 11);
    }

    #[test]
    fn pde_run_reports_closed_form_errors() {
        let dir = tempfile::tempdir().unwrap();
        run(&tiny(ExperimentKind::Pde, dir.path())).unwrap();
        let rep: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("pde_report.json")).unwrap())
                .unwrap();
        assert!(rep["closed_form_errors"]["h_rel"].as_f64().unwrap() < 1e-2);
    }

    #[test]
    fn fk_terminal_probes_are_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny(ExperimentKind::FkCompare, dir.path());
        let f = c.fk_compare.as_mut().unwrap();
        f.t = Some(vec![1.0]);
        f.dt = 0.05;
        let table = fk_compare(&c).unwrap();
        for row in &table.rows {
            let want = if row.quantity == "F" { 1.0 } else { -1.0 };
            assert_eq!(row.mc, want);
            assert_eq!(row.pde, want);
            assert_eq!(row.z, 0.0);
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(RunStatus::Inconclusive.exit_code(), 3);
        let e = Error::Numerical {
            stage: "x",
            detail: String::new(),
        };
        assert_eq!(error_exit_code(&e), 2);
        assert_eq!(error_exit_code(&Error::Config(String::new())), 1);
    }
}
