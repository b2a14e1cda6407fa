//! The four harness commands: `gen`, `fit`, `sweep`, `spectrum`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linops::{markov_parameters, MarkovSequence};
use crate::metrics::{hankel_spectrum, recovery_error_markov};
use crate::numeric::ls_slope;
use crate::solvers::{
    bm_solve, nuc_solve, shared_init, sp_solve, Certificate, EvalHooks, Method, SolveReport,
};
use crate::system::{generate, GenConfig, RolloutBatch};

use super::config::{ExperimentConfig, ReportFormat, SweepAxis};
use super::io;
use super::svg;

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOverrides {
    /// Replaces both the generator seed and the solver init seed.
    pub seed: Option<u64>,
    /// Wall-clock budget per method, in seconds.
    pub budget_s: Option<f64>,
}

impl RunOverrides {
    fn applied(&self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = cfg.clone();
        if let Some(seed) = self.seed {
            cfg.force_seed(seed);
        }
        if let Some(budget) = self.budget_s {
            cfg.force_budget(budget);
        }
        cfg
    }
}

/// A dataset on disk: rollouts, ground-truth system parameters, and the true
/// Markov parameters, all named by the manifest.
pub struct Dataset {
    pub gen: GenConfig,
    pub batch: RolloutBatch,
    pub gstar: MarkovSequence,
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = io::read_manifest(dir)?;
    let batch = RolloutBatch::read_file(&dir.join(&manifest.batch_file))?;
    let gstar = io::read_markov(&dir.join(&manifest.gstar_file))?;
    Ok(Dataset { gen: manifest.gen, batch, gstar })
}

/// Generate a dataset directory: rollout container, ground-truth system,
/// true Markov parameters, a CSV export for inspection, and the manifest.
/// Deterministic in the config, so regeneration is byte-identical.
pub fn cmd_gen(cfg: &ExperimentConfig, out: &Path, overrides: &RunOverrides) -> Result<()> {
    let cfg = overrides.applied(cfg);
    let (sys, batch) = generate(&cfg.gen)?;
    std::fs::create_dir_all(out)?;
    batch.write_file(&out.join(io::BATCH_FILE))?;
    sys.write_file(&out.join(io::SYSTEM_FILE))?;
    io::write_markov(&out.join(io::GSTAR_FILE), &markov_parameters(&sys, cfg.gen.l))?;
    batch.export_csv(&out.join("batch.csv"))?;
    io::write_manifest(out, &cfg.gen)?;
    Ok(())
}

/// Per-method result of a fit: the report, or the divergence that ended it.
pub struct MethodOutcome {
    pub method: Method,
    pub result: std::result::Result<SolveReport, Error>,
}

pub struct FitOutcome {
    pub outcomes: Vec<MethodOutcome>,
}

impl FitOutcome {
    pub fn all_diverged(&self) -> bool {
        self.outcomes.iter().all(|o| o.result.is_err())
    }

    pub fn report(&self, method: Method) -> Option<&SolveReport> {
        self.outcomes
            .iter()
            .find(|o| o.method == method)
            .and_then(|o| o.result.as_ref().ok())
    }
}

/// Run every configured method on a batch from the shared initialization.
///
/// Methods run one after another: each is single-threaded and deterministic,
/// and sequential execution gives every method its full wall-clock budget as
/// actual CPU time, which keeps budgeted comparisons fair on any core count.
pub fn run_fit(cfg: &ExperimentConfig, batch: &RolloutBatch, gstar: &MarkovSequence) -> Result<FitOutcome> {
    let r_init = cfg.base_solver.r_init;
    let init_seed = cfg.base_solver.seed;
    let (init_markov, init_factors, init_params) = shared_init(batch, init_seed, r_init)?;

    let mut outcomes = Vec::new();
    for &method in &cfg.methods {
        let spec = cfg.solver_spec(method);
        let solver_cfg = spec.resolve(method, batch, Some(&init_factors))?;
        let hooks = EvalHooks {
            gstar: Some(gstar),
            eval_every: cfg.eval_every,
            record_checkpoints: true,
        };
        let result = match method {
            Method::Nuc => nuc_solve(batch, &solver_cfg, &init_markov, &hooks),
            Method::Bm => bm_solve(batch, &solver_cfg, &init_factors, &hooks),
            Method::Sp => sp_solve(batch, &solver_cfg, &init_params, &hooks),
        };
        outcomes.push(MethodOutcome { method, result });
    }
    Ok(FitOutcome { outcomes })
}

fn certificate_label(report: &SolveReport) -> String {
    report.certificate.to_string()
}

fn final_recovery(report: &SolveReport, gstar: &MarkovSequence) -> Result<f64> {
    recovery_error_markov(&report.final_markov, gstar)
}

/// Write the per-method trace, checkpoints, final Markov estimate, a summary
/// table, and the effective configuration into `out`.
pub fn cmd_fit(cfg: &ExperimentConfig, data_dir: &Path, out: &Path, overrides: &RunOverrides) -> Result<FitOutcome> {
    let cfg = overrides.applied(cfg);
    let dataset = load_dataset(data_dir)?;
    std::fs::create_dir_all(out)?;
    let outcome = run_fit(&cfg, &dataset.batch, &dataset.gstar)?;

    let mut summary = String::from("method,final_error,certificate,total_time_s,final_rank,effective_rank\n");
    for mo in &outcome.outcomes {
        match &mo.result {
            Ok(report) => {
                match cfg.report_format {
                    ReportFormat::Csv => {
                        io::write_text(&out.join(format!("trace_{}.csv", mo.method)), &report.trace_csv())?
                    }
                    ReportFormat::StructuredText => {
                        io::write_text(&out.join(format!("trace_{}.txt", mo.method)), &report.trace_text())?
                    }
                }
                io::write_checkpoints(&out.join(format!("checkpoints_{}.bin", mo.method)), &report.checkpoints)?;
                io::write_markov(&out.join(format!("markov_{}.bin", mo.method)), &report.final_markov)?;
                let err = final_recovery(report, &dataset.gstar)?;
                let time = report.trace.last().map(|r| r.wall_clock_s).unwrap_or(0.0);
                summary.push_str(&io::csv_row(&[
                    mo.method.to_string(),
                    err.to_string(),
                    certificate_label(report),
                    format!("{time:.6}"),
                    report.final_rank.to_string(),
                    report.effective_rank.to_string(),
                ]));
            }
            Err(e) => {
                io::write_text(&out.join(format!("diverged_{}.txt", mo.method)), &format!("{e}\n"))?;
                summary.push_str(&io::csv_row(&[
                    mo.method.to_string(),
                    String::new(),
                    "diverged".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]));
            }
        }
    }
    io::write_text(&out.join("summary.csv"), &summary)?;
    io::write_text(&out.join("config_resolved.txt"), &render_resolved(&cfg, &dataset.batch)?)?;

    if cfg.emit_svg {
        let series: Vec<svg::Series> = outcome
            .outcomes
            .iter()
            .filter_map(|mo| mo.result.as_ref().ok())
            .map(|report| svg::Series {
                label: report.method.to_string(),
                points: report
                    .trace
                    .iter()
                    .filter_map(|r| r.recovery_error.map(|e| (r.wall_clock_s.max(1e-6), e)))
                    .collect(),
            })
            .collect();
        svg::write_line_chart(
            &out.join("recovery_vs_time.svg"),
            "recovery error vs solver time",
            "seconds",
            "recovery error",
            &series,
            false,
            true,
        )?;
    }
    Ok(outcome)
}

fn render_resolved(cfg: &ExperimentConfig, batch: &RolloutBatch) -> Result<String> {
    let mut text = cfg.render();
    text.push_str("# resolved solver knobs for this dataset\n");
    let (_, init_factors, _) = shared_init(batch, cfg.base_solver.seed, cfg.base_solver.r_init)?;
    for &method in &cfg.methods {
        let solver_cfg = cfg.solver_spec(method).resolve(method, batch, Some(&init_factors))?;
        text.push_str(&format!(
            "# {method}: lr = {:e}, momentum = {}\n",
            solver_cfg.lr, solver_cfg.momentum
        ));
    }
    Ok(text)
}

pub struct SweepPoint {
    pub method: Method,
    pub axis_value: usize,
    pub final_error: f64,
    pub time_s: f64,
    pub certificate: Certificate,
}

pub struct SweepTable {
    pub axis_name: &'static str,
    pub points: Vec<SweepPoint>,
    /// Per-method log-log slope of error against the axis.
    pub slopes: Vec<(Method, f64)>,
}

impl SweepTable {
    pub fn errors_for(&self, method: Method) -> Vec<(usize, f64)> {
        self.points
            .iter()
            .filter(|p| p.method == method)
            .map(|p| (p.axis_value, p.final_error))
            .collect()
    }

    pub fn slope_for(&self, method: Method) -> Option<f64> {
        self.slopes.iter().find(|(m, _)| *m == method).map(|(_, s)| *s)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("row_kind,method,axis,final_error,time_s,certificate,slope\n");
        for p in &self.points {
            s.push_str(&io::csv_row(&[
                "point".into(),
                p.method.to_string(),
                p.axis_value.to_string(),
                p.final_error.to_string(),
                format!("{:.6}", p.time_s),
                p.certificate.to_string(),
                String::new(),
            ]));
        }
        for (m, slope) in &self.slopes {
            s.push_str(&io::csv_row(&[
                "slope".into(),
                m.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                slope.to_string(),
            ]));
        }
        s
    }
}

/// Run the configured sweep, returning one summary row per
/// `(method, grid point)` plus fitted slopes. For the samples axis the grid
/// re-subsamples prefixes of one dataset; for the length axis datasets are
/// regenerated per horizon with the shared system seed.
pub fn run_sweep(cfg: &ExperimentConfig, dataset: Option<&Dataset>) -> Result<SweepTable> {
    struct Job {
        axis_value: usize,
        batch: RolloutBatch,
        gstar: MarkovSequence,
    }
    let (axis_name, jobs): (&'static str, Vec<Job>) = match &cfg.sweep {
        SweepAxis::None => {
            return Err(Error::invalid("sweep.axis must be `samples` or `length`"));
        }
        SweepAxis::Samples(list) => {
            let dataset = dataset.ok_or_else(|| {
                Error::invalid("sample-size sweep needs a generated dataset (--data)")
            })?;
            let jobs = list
                .iter()
                .map(|&n| {
                    Ok(Job {
                        axis_value: n,
                        batch: dataset.batch.prefix(n)?,
                        gstar: dataset.gstar.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            ("n_rollouts", jobs)
        }
        SweepAxis::Length { lengths, rollouts } => {
            let jobs = lengths
                .iter()
                .enumerate()
                .map(|(i, &l)| {
                    let mut gen = cfg.gen.clone();
                    gen.l = l;
                    if let Some(r) = rollouts {
                        gen.n_rollouts = r[i];
                    }
                    let (sys, batch) = generate(&gen)?;
                    Ok(Job { axis_value: l, batch, gstar: markov_parameters(&sys, l) })
                })
                .collect::<Result<Vec<_>>>()?;
            ("l", jobs)
        }
    };

    // Grid points run one after another for the same budget-fairness reason
    // as the methods inside a fit.
    let mut points = Vec::new();
    for job in &jobs {
        let outcome = run_fit(cfg, &job.batch, &job.gstar)?;
        for mo in &outcome.outcomes {
            if let Ok(report) = &mo.result {
                points.push(SweepPoint {
                    method: mo.method,
                    axis_value: job.axis_value,
                    final_error: final_recovery(report, &job.gstar)?,
                    time_s: report.trace.last().map(|r| r.wall_clock_s).unwrap_or(0.0),
                    certificate: report.certificate,
                });
            }
        }
    }
    let mut slopes = Vec::new();
    for &method in &cfg.methods {
        let series: Vec<(usize, f64)> = points
            .iter()
            .filter(|p| p.method == method && p.final_error > 0.0)
            .map(|p| (p.axis_value, p.final_error))
            .collect();
        if series.len() >= 2 {
            let xs: Vec<f64> = series.iter().map(|(x, _)| (*x as f64).ln()).collect();
            let ys: Vec<f64> = series.iter().map(|(_, y)| y.ln()).collect();
            slopes.push((method, ls_slope(&xs, &ys)));
        }
    }
    Ok(SweepTable { axis_name, points, slopes })
}

/// Run the sweep and write `sweep.csv` (plus an optional chart).
pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    data_dir: Option<&Path>,
    out: &Path,
    overrides: &RunOverrides,
) -> Result<SweepTable> {
    let cfg = overrides.applied(cfg);
    let dataset = match data_dir {
        Some(dir) => Some(load_dataset(dir)?),
        None => None,
    };
    let table = run_sweep(&cfg, dataset.as_ref())?;
    std::fs::create_dir_all(out)?;
    io::write_text(&out.join("sweep.csv"), &table.to_csv())?;
    if cfg.emit_svg {
        let series: Vec<svg::Series> = cfg
            .methods
            .iter()
            .map(|&m| svg::Series {
                label: m.to_string(),
                points: table
                    .errors_for(m)
                    .into_iter()
                    .map(|(x, y)| (x as f64, y))
                    .collect(),
            })
            .collect();
        svg::write_line_chart(
            &out.join("sweep.svg"),
            &format!("recovery error vs {}", table.axis_name),
            table.axis_name,
            "recovery error",
            &series,
            true,
            true,
        )?;
    }
    Ok(table)
}

/// Emit the Hankel spectra stored in a completed fit: one long-format CSV row
/// per `(method, checkpoint, singular value index)`, with the true system's
/// spectrum as reference rows under method `true`.
pub fn cmd_spectrum(data_dir: &Path, fit_dir: &Path, out: &Path) -> Result<()> {
    let dataset = load_dataset(data_dir)?;
    let mut rows = String::from("method,checkpoint_iter,sv_index,value\n");
    let true_spectrum = hankel_spectrum(&dataset.gstar);
    for (idx, v) in true_spectrum.iter().enumerate() {
        rows.push_str(&io::csv_row(&[
            "true".into(),
            "0".into(),
            idx.to_string(),
            v.to_string(),
        ]));
    }

    let mut found = false;
    for method in Method::ALL {
        let path = fit_dir.join(format!("checkpoints_{method}.bin"));
        if !path.exists() {
            continue;
        }
        found = true;
        for (iter, k) in io::read_checkpoints(&path)? {
            let spectrum = hankel_spectrum(&k);
            for (idx, v) in spectrum.iter().enumerate() {
                rows.push_str(&io::csv_row(&[
                    method.to_string(),
                    iter.to_string(),
                    idx.to_string(),
                    v.to_string(),
                ]));
            }
        }
    }
    if !found {
        return Err(Error::invalid(format!(
            "no checkpoint files found in {}",
            fit_dir.display()
        )));
    }
    std::fs::create_dir_all(out)?;
    io::write_text(&out.join("spectrum.csv"), &rows)
}

/// Paths used by the CLI identifying one fit directory.
pub fn trace_file(out: &Path, method: Method, format: ReportFormat) -> PathBuf {
    match format {
        ReportFormat::Csv => out.join(format!("trace_{method}.csv")),
        ReportFormat::StructuredText => out.join(format!("trace_{method}.txt")),
    }
}
