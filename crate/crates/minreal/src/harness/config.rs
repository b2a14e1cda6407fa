//! Experiment configuration: a flat `key = value` text format with dotted
//! sections. Unknown keys are errors, so typos fail loudly; `#` starts a
//! comment. Units are spelled in key names (`noise_var`, `time_budget_s`).

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::solvers::{Method, SolverConfig};
use crate::system::{GenConfig, RolloutBatch, SystemKind};

/// A numeric knob that can also be resolved from the data at fit time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamSpec {
    Auto,
    Fixed(f64),
}

impl ParamSpec {
    fn parse(value: &str, line: usize) -> Result<Self> {
        if value == "auto" {
            Ok(ParamSpec::Auto)
        } else {
            Ok(ParamSpec::Fixed(parse_f64(value, line)?))
        }
    }

    fn render(&self) -> String {
        match self {
            ParamSpec::Auto => "auto".into(),
            ParamSpec::Fixed(v) => v.to_string(),
        }
    }
}

/// Solver knobs as written in the config; `lr`/`momentum` may be `auto`.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverSpec {
    pub lambda: f64,
    pub lr: ParamSpec,
    pub momentum: ParamSpec,
    pub max_iter: usize,
    pub r_init: usize,
    pub r_max: usize,
    pub polar_tol: f64,
    pub stat_tol: f64,
    pub a_bound: f64,
    pub seed: u64,
    pub time_budget_s: Option<f64>,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            lambda: 1e-3,
            lr: ParamSpec::Auto,
            momentum: ParamSpec::Auto,
            max_iter: 20_000,
            r_init: 2,
            r_max: 10,
            polar_tol: 1e-2,
            stat_tol: 1e-6,
            a_bound: 0.999,
            seed: 11,
            time_budget_s: None,
        }
    }
}

impl SolverSpec {
    fn set(&mut self, field: &str, value: &str, line: usize) -> Result<()> {
        match field {
            "lambda" => self.lambda = parse_f64(value, line)?,
            "lr" => self.lr = ParamSpec::parse(value, line)?,
            "momentum" => self.momentum = ParamSpec::parse(value, line)?,
            "max_iter" => self.max_iter = parse_usize(value, line)?,
            "r_init" => self.r_init = parse_usize(value, line)?,
            "r_max" => self.r_max = parse_usize(value, line)?,
            "polar_tol" => self.polar_tol = parse_f64(value, line)?,
            "stat_tol" => self.stat_tol = parse_f64(value, line)?,
            "a_bound" => self.a_bound = parse_f64(value, line)?,
            "seed" => self.seed = parse_u64(value, line)?,
            "time_budget_s" => {
                self.time_budget_s =
                    if value == "none" { None } else { Some(parse_f64(value, line)?) };
            }
            other => return Err(Error::config(line, format!("unknown solver key `{other}`"))),
        }
        Ok(())
    }

    /// Resolve `auto` knobs against a concrete batch. The factored method
    /// needs its starting factors to size the step.
    pub fn resolve(
        &self,
        method: Method,
        batch: &RolloutBatch,
        init_factors: Option<&crate::solvers::FactorPair>,
    ) -> Result<SolverConfig> {
        let lr = match self.lr {
            ParamSpec::Fixed(v) => v,
            ParamSpec::Auto => match method {
                Method::Nuc => crate::solvers::auto_lr_nuc(batch),
                Method::Bm => {
                    let f = init_factors
                        .ok_or_else(|| Error::invalid("auto lr for bm needs starting factors"))?;
                    crate::solvers::auto_lr_bm(batch, f)
                }
                Method::Sp => crate::solvers::auto_lr_sp(batch, self.a_bound),
            },
        };
        let momentum = match self.momentum {
            ParamSpec::Fixed(v) => v,
            ParamSpec::Auto => match method {
                Method::Nuc => crate::solvers::auto_momentum_nuc(batch, self.lambda),
                Method::Bm => {
                    let f = init_factors
                        .ok_or_else(|| Error::invalid("auto momentum for bm needs starting factors"))?;
                    crate::solvers::auto_momentum_bm(batch, f, self.lambda)
                }
                Method::Sp => crate::solvers::auto_momentum_sp(batch, self.a_bound, self.lambda),
            },
        };
        let cfg = SolverConfig {
            lambda: self.lambda,
            lr,
            momentum,
            max_iter: self.max_iter,
            r_init: self.r_init,
            r_max: self.r_max,
            polar_tol: self.polar_tol,
            stat_tol: self.stat_tol,
            a_bound: self.a_bound,
            seed: self.seed,
            time_budget_s: self.time_budget_s,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Which experiment axis a sweep walks.
#[derive(Clone, Debug, PartialEq)]
pub enum SweepAxis {
    None,
    /// Rollout counts; each point reuses the first `n` rollouts of one
    /// dataset so the curves are coupled.
    Samples(Vec<usize>),
    /// Horizons, optionally paired with per-horizon rollout counts (to hold
    /// `N·L` fixed, for instance). The system seed is shared across points.
    Length { lengths: Vec<usize>, rollouts: Option<Vec<usize>> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    StructuredText,
}

/// Full experiment description backing the `gen`, `fit`, and `sweep`
/// commands.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub gen: GenConfig,
    pub methods: Vec<Method>,
    pub eval_every: usize,
    pub report_format: ReportFormat,
    pub emit_svg: bool,
    pub output_dir: Option<PathBuf>,
    pub sweep: SweepAxis,
    pub base_solver: SolverSpec,
    overrides: Vec<(Method, String, String, usize)>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            gen: GenConfig {
                n_x_star: 5,
                n_u: 8,
                n_y: 8,
                n_rollouts: 500,
                l: 50,
                noise_var: 0.01,
                system_kind: SystemKind::DiagonalizableSymmetric,
                spectral_radius_cap: 1.0,
                seed: 7,
            },
            methods: vec![Method::Nuc, Method::Bm, Method::Sp],
            eval_every: 25,
            report_format: ReportFormat::Csv,
            emit_svg: false,
            output_dir: None,
            sweep: SweepAxis::None,
            base_solver: SolverSpec::default(),
            overrides: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    /// Parse the text format; every key falls back to the default benchmark
    /// configuration when absent.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(line_no, "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            if value.is_empty() {
                return Err(Error::config(line_no, format!("empty value for `{key}`")));
            }
            cfg.apply(key, value, line_no)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "gen.n_x_star" => self.gen.n_x_star = parse_usize(value, line)?,
            "gen.n_u" => self.gen.n_u = parse_usize(value, line)?,
            "gen.n_y" => self.gen.n_y = parse_usize(value, line)?,
            "gen.n_rollouts" => self.gen.n_rollouts = parse_usize(value, line)?,
            "gen.l" => self.gen.l = parse_usize(value, line)?,
            "gen.noise_var" => self.gen.noise_var = parse_f64(value, line)?,
            "gen.system_kind" => {
                self.gen.system_kind =
                    value.parse().map_err(|e: Error| Error::config(line, e.to_string()))?;
            }
            "gen.spectral_radius_cap" => self.gen.spectral_radius_cap = parse_f64(value, line)?,
            "gen.seed" => self.gen.seed = parse_u64(value, line)?,
            "methods" => {
                let mut methods = Vec::new();
                for tok in value.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                    let m: Method =
                        tok.parse().map_err(|e: Error| Error::config(line, e.to_string()))?;
                    if !methods.contains(&m) {
                        methods.push(m);
                    }
                }
                self.methods = methods;
            }
            "eval_every" => self.eval_every = parse_usize(value, line)?,
            "report_format" => {
                self.report_format = match value {
                    "csv" => ReportFormat::Csv,
                    "structured-text" => ReportFormat::StructuredText,
                    other => {
                        return Err(Error::config(line, format!("unknown report_format `{other}`")))
                    }
                };
            }
            "emit_svg" => {
                self.emit_svg = match value {
                    "true" => true,
                    "false" => false,
                    other => return Err(Error::config(line, format!("expected bool, got `{other}`"))),
                };
            }
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "sweep.axis" => {
                self.sweep = match value {
                    "none" => SweepAxis::None,
                    "samples" => SweepAxis::Samples(match &self.sweep {
                        SweepAxis::Samples(list) => list.clone(),
                        _ => Vec::new(),
                    }),
                    "length" => SweepAxis::Length {
                        lengths: match &self.sweep {
                            SweepAxis::Length { lengths, .. } => lengths.clone(),
                            _ => Vec::new(),
                        },
                        rollouts: match &self.sweep {
                            SweepAxis::Length { rollouts, .. } => rollouts.clone(),
                            _ => None,
                        },
                    },
                    other => return Err(Error::config(line, format!("unknown sweep axis `{other}`"))),
                };
            }
            "sweep.samples" => {
                let list = parse_usize_list(value, line)?;
                self.sweep = SweepAxis::Samples(list);
            }
            "sweep.lengths" => {
                let lengths = parse_usize_list(value, line)?;
                let rollouts = match &self.sweep {
                    SweepAxis::Length { rollouts, .. } => rollouts.clone(),
                    _ => None,
                };
                self.sweep = SweepAxis::Length { lengths, rollouts };
            }
            "sweep.lengths_n" => {
                let rollouts = Some(parse_usize_list(value, line)?);
                let lengths = match &self.sweep {
                    SweepAxis::Length { lengths, .. } => lengths.clone(),
                    _ => Vec::new(),
                };
                self.sweep = SweepAxis::Length { lengths, rollouts };
            }
            _ => {
                if let Some(rest) = key.strip_prefix("solver.") {
                    if let Some((method_tok, field)) = rest.split_once('.') {
                        let method: Method = method_tok
                            .parse()
                            .map_err(|e: Error| Error::config(line, e.to_string()))?;
                        // Validate the field name eagerly against a scratch spec.
                        let mut probe = self.base_solver.clone();
                        probe.set(field, value, line)?;
                        self.overrides.push((method, field.to_string(), value.to_string(), line));
                    } else {
                        self.base_solver.set(rest, value, line)?;
                    }
                } else {
                    return Err(Error::config(line, format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        self.gen.validate().map_err(|e| Error::config(0, e.to_string()))?;
        if self.methods.is_empty() {
            return Err(Error::config(0, "methods list is empty"));
        }
        if self.eval_every == 0 {
            return Err(Error::config(0, "eval_every must be at least 1"));
        }
        let check_list = |list: &[usize], what: &str| -> Result<()> {
            if list.is_empty() {
                return Err(Error::config(0, format!("{what} list is empty")));
            }
            if !list.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::config(0, format!("{what} list must be strictly increasing")));
            }
            Ok(())
        };
        match &self.sweep {
            SweepAxis::None => {}
            SweepAxis::Samples(list) => check_list(list, "sweep.samples")?,
            SweepAxis::Length { lengths, rollouts } => {
                check_list(lengths, "sweep.lengths")?;
                if let Some(r) = rollouts {
                    if r.len() != lengths.len() {
                        return Err(Error::config(0, "sweep.lengths_n must pair with sweep.lengths"));
                    }
                    if r.iter().any(|&n| n == 0) {
                        return Err(Error::config(0, "sweep.lengths_n entries must be positive"));
                    }
                }
            }
        }
        // Shared initialization requires one starting rank across methods.
        for (method, field, value, line) in &self.overrides {
            if field == "r_init" {
                let v = parse_usize(value, *line)?;
                if v != self.base_solver.r_init {
                    return Err(Error::config(
                        *line,
                        format!(
                            "solver.{method}.r_init = {v} conflicts with shared initialization (base r_init = {})",
                            self.base_solver.r_init
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Force one seed for generation and initialization, discarding any
    /// per-method seed overrides.
    pub fn force_seed(&mut self, seed: u64) {
        self.gen.seed = seed;
        self.base_solver.seed = seed;
        self.overrides.retain(|(_, field, _, _)| field != "seed");
    }

    /// Force one wall-clock budget for every method, discarding per-method
    /// budget overrides.
    pub fn force_budget(&mut self, budget_s: f64) {
        self.base_solver.time_budget_s = Some(budget_s);
        self.overrides.retain(|(_, field, _, _)| field != "time_budget_s");
    }

    /// The solver spec for one method, with its overrides applied.
    pub fn solver_spec(&self, method: Method) -> SolverSpec {
        let mut spec = self.base_solver.clone();
        for (m, field, value, line) in &self.overrides {
            if *m == method {
                spec.set(field, value, *line).expect("validated at parse time");
            }
        }
        spec
    }

    /// Text form that reparses to the same configuration; used to record the
    /// effective config (including resolved knobs as comments) next to runs.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("gen.n_x_star = {}\n", self.gen.n_x_star));
        s.push_str(&format!("gen.n_u = {}\n", self.gen.n_u));
        s.push_str(&format!("gen.n_y = {}\n", self.gen.n_y));
        s.push_str(&format!("gen.n_rollouts = {}\n", self.gen.n_rollouts));
        s.push_str(&format!("gen.l = {}\n", self.gen.l));
        s.push_str(&format!("gen.noise_var = {}\n", self.gen.noise_var));
        s.push_str(&format!("gen.system_kind = {}\n", self.gen.system_kind));
        s.push_str(&format!("gen.spectral_radius_cap = {}\n", self.gen.spectral_radius_cap));
        s.push_str(&format!("gen.seed = {}\n", self.gen.seed));
        let methods: Vec<String> = self.methods.iter().map(|m| m.to_string()).collect();
        s.push_str(&format!("methods = {}\n", methods.join(",")));
        s.push_str(&format!("eval_every = {}\n", self.eval_every));
        s.push_str(&format!(
            "report_format = {}\n",
            match self.report_format {
                ReportFormat::Csv => "csv",
                ReportFormat::StructuredText => "structured-text",
            }
        ));
        s.push_str(&format!("emit_svg = {}\n", self.emit_svg));
        match &self.sweep {
            SweepAxis::None => s.push_str("sweep.axis = none\n"),
            SweepAxis::Samples(list) => {
                s.push_str("sweep.axis = samples\n");
                s.push_str(&format!("sweep.samples = {}\n", render_list(list)));
            }
            SweepAxis::Length { lengths, rollouts } => {
                s.push_str("sweep.axis = length\n");
                s.push_str(&format!("sweep.lengths = {}\n", render_list(lengths)));
                if let Some(r) = rollouts {
                    s.push_str(&format!("sweep.lengths_n = {}\n", render_list(r)));
                }
            }
        }
        let b = &self.base_solver;
        s.push_str(&format!("solver.lambda = {}\n", b.lambda));
        s.push_str(&format!("solver.lr = {}\n", b.lr.render()));
        s.push_str(&format!("solver.momentum = {}\n", b.momentum.render()));
        s.push_str(&format!("solver.max_iter = {}\n", b.max_iter));
        s.push_str(&format!("solver.r_init = {}\n", b.r_init));
        s.push_str(&format!("solver.r_max = {}\n", b.r_max));
        s.push_str(&format!("solver.polar_tol = {}\n", b.polar_tol));
        s.push_str(&format!("solver.stat_tol = {}\n", b.stat_tol));
        s.push_str(&format!("solver.a_bound = {}\n", b.a_bound));
        s.push_str(&format!("solver.seed = {}\n", b.seed));
        s.push_str(&format!(
            "solver.time_budget_s = {}\n",
            b.time_budget_s.map(|v| v.to_string()).unwrap_or_else(|| "none".into())
        ));
        for (method, field, value, _) in &self.overrides {
            s.push_str(&format!("solver.{method}.{field} = {value}\n"));
        }
        s
    }
}

fn render_list(list: &[usize]) -> String {
    list.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_f64(value: &str, line: usize) -> Result<f64> {
    value.parse().map_err(|_| Error::config(line, format!("expected a number, got `{value}`")))
}

fn parse_usize(value: &str, line: usize) -> Result<usize> {
    value.parse().map_err(|_| Error::config(line, format!("expected an integer, got `{value}`")))
}

fn parse_u64(value: &str, line: usize) -> Result<u64> {
    value.parse().map_err(|_| Error::config(line, format!("expected an integer, got `{value}`")))
}

fn parse_usize_list(value: &str, line: usize) -> Result<Vec<usize>> {
    value.split(',').map(str::trim).filter(|t| !t.is_empty()).map(|t| parse_usize(t, line)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rerenders() {
        let text = "\
# comment
gen.n_x_star = 2
gen.n_u = 3
gen.l = 10            # inline comment
methods = sp,bm
solver.lambda = 0.0001
solver.bm.max_iter = 5000
sweep.axis = samples
sweep.samples = 50,100,200
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.gen.n_x_star, 2);
        assert_eq!(cfg.methods, vec![Method::Sp, Method::Bm]);
        assert_eq!(cfg.solver_spec(Method::Bm).max_iter, 5000);
        assert_eq!(cfg.solver_spec(Method::Sp).max_iter, 20_000);
        assert_eq!(cfg.sweep, SweepAxis::Samples(vec![50, 100, 200]));

        let again = ExperimentConfig::parse(&cfg.render()).unwrap();
        assert_eq!(again.gen, cfg.gen);
        assert_eq!(again.solver_spec(Method::Bm), cfg.solver_spec(Method::Bm));
    }

    #[test]
    fn unknown_keys_report_line_numbers() {
        let err = ExperimentConfig::parse("gen.n_u = 2\ngen.bogus = 1\n").unwrap_err();
        match err {
            Error::Config { line, .. } => assert_eq!(line, 2),
            other => panic!("wrong error {other}"),
        }
        assert!(ExperimentConfig::parse("solver.nuc.what = 1\n").is_err());
        assert!(ExperimentConfig::parse("methods = nuc,carrier\n").is_err());
    }

    #[test]
    fn validation_catches_bad_lists_and_empty_methods() {
        assert!(ExperimentConfig::parse("methods = \n").is_err());
        let err = ExperimentConfig::parse("sweep.axis = samples\nsweep.samples = 100,50\n");
        assert!(err.is_err());
        assert!(ExperimentConfig::parse("sweep.axis = length\nsweep.lengths = 10,20\nsweep.lengths_n = 5\n").is_err());
    }
}
