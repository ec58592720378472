//! Experiment orchestration: several solver configurations on one dataset,
//! relative-error series against a shared reference optimum, CSV and JSON export.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_dataset, Format, SyntheticSpec};
use crate::error::{invalid, Result, SsnError};
use crate::model::{Dataset, Family, FiniteSum, Glm};
use crate::solvers::{run, RunDiagnostics, SolverConfig, StopFlag, Trace};

/// Environment variable capping the number of runs executed at once.
pub const THREADS_ENV: &str = "SSN_THREADS";

pub const CSV_HEADER: &str =
    "solver,rep,k,wall_seconds,f_value,grad_norm,alpha,sample_h,sample_g,rel_err_x,rel_err_f,stop_flag";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetRef {
    File {
        path: PathBuf,
        #[serde(default)]
        format: Option<Format>,
    },
    Synthetic(SyntheticSpec),
}

impl DatasetRef {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetRef::File { path, format } => {
                load_dataset(path, format.unwrap_or_else(|| Format::from_path(path)))
            }
            DatasetRef::Synthetic(spec) => Ok(generate_synthetic(spec)?.dataset),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: DatasetRef,
    pub family: Family,
    /// Ridge penalty folded into every component.
    #[serde(default)]
    pub reg: f64,
    pub solvers: Vec<SolverConfig>,
    /// Overrides every solver's tolerance.
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    /// Overrides every solver's time limit (seconds).
    #[serde(default)]
    pub time_limit: Option<f64>,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Starting point; zero when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Run count executed at once; `SSN_THREADS` or all cores when absent.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_grad_tol() -> f64 {
    1e-8
}

fn one() -> usize {
    1
}

impl ExperimentSpec {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let spec: Self = serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(invalid("solvers", "experiment lists no solver"));
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions", "must be >= 1"));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads", "must be >= 1"));
        }
        for c in &self.solvers {
            self.configure(c, 0).validate()?;
        }
        Ok(())
    }

    /// The configuration actually run for repetition `rep`.
    pub fn configure(&self, base: &SolverConfig, rep: usize) -> SolverConfig {
        let mut c = base.clone();
        c.grad_tol = self.grad_tol;
        if self.time_limit.is_some() {
            c.time_limit = self.time_limit;
        }
        c.seed = base.seed.wrapping_add(rep as u64);
        c.record_iterates = true;
        c
    }
}

/// Reference optimum shared by every series of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub solver: String,
    pub rep: usize,
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub k: usize,
    pub wall_seconds: f64,
    pub rel_err_x: f64,
    pub rel_err_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub solver: String,
    pub rep: usize,
    pub seed: u64,
    /// `||grad F||` at the final iterate, evaluated after the run.
    pub final_grad_norm: f64,
    pub trace: Trace,
    /// Empty when no reference optimum exists.
    pub series: Vec<SeriesPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub solver: String,
    pub rep: usize,
    pub stop: StopFlag,
    pub diagnostics: RunDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultHeader {
    pub spec: ExperimentSpec,
    pub n: usize,
    pub p: usize,
    pub reference: Option<Reference>,
    pub runs: Vec<RunHeader>,
    /// Caller-supplied settings echoed for reproducibility.
    #[serde(default)]
    pub echo: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub header: ResultHeader,
    pub runs: Vec<RunResult>,
}

impl ExperimentResult {
    pub fn reference(&self) -> Result<&Reference> {
        self.header.reference.as_ref().ok_or(SsnError::NoConvergedRun)
    }

    pub fn run(&self, solver: &str, rep: usize) -> Option<&RunResult> {
        self.runs.iter().find(|r| r.solver == solver && r.rep == rep)
    }
}

fn thread_cap(spec: &ExperimentSpec) -> Option<usize> {
    spec.threads.or_else(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|&t: &usize| t > 0)
    })
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let data = spec.dataset.load()?;
    let model = Glm::new(data, spec.family, spec.reg)?;
    run_experiment_on(spec, &model)
}

/// Runs `spec` against an already built model; the spec's dataset entry is
/// only recorded.
pub fn run_experiment_on<M: FiniteSum + ?Sized>(spec: &ExperimentSpec, model: &M) -> Result<ExperimentResult> {
    spec.validate()?;
    let x0 = match &spec.x0 {
        Some(v) if v.len() != model.dim() => {
            return Err(SsnError::DimensionMismatch {
                expected: model.dim(),
                got: v.len(),
            })
        }
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(model.dim()),
    };
    let jobs: Vec<(usize, SolverConfig)> = (0..spec.repetitions)
        .flat_map(|rep| spec.solvers.iter().map(move |c| (rep, c)))
        .map(|(rep, c)| (rep, spec.configure(c, rep)))
        .collect();

    let execute = |(rep, cfg): &(usize, SolverConfig)| -> Result<RunResult> {
        let trace = run(model, cfg, &x0)?;
        let final_grad_norm = model.gradient(&trace.final_x()).map_or(f64::MAX, |g| g.norm());
        Ok(RunResult {
            solver: trace.solver.clone(),
            rep: *rep,
            seed: cfg.seed,
            final_grad_norm,
            trace,
            series: Vec::new(),
        })
    };
    let outcomes: Vec<Result<RunResult>> = match thread_cap(spec) {
        Some(1) => jobs.iter().map(execute).collect(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| invalid("threads", e.to_string()))?
            .install(|| jobs.par_iter().map(execute).collect()),
        None => jobs.par_iter().map(execute).collect(),
    };
    let mut runs = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let reference = pick_reference(model, &runs)?;
    if let Some(r) = &reference {
        for run in &mut runs {
            run.series = relative_errors(&run.trace, r);
        }
    } else {
        log::warn!("no run converged; relative errors are unavailable");
    }
    let header = ResultHeader {
        spec: spec.clone(),
        n: model.n(),
        p: model.dim(),
        reference,
        runs: runs
            .iter()
            .map(|r| RunHeader {
                solver: r.solver.clone(),
                rep: r.rep,
                stop: r.trace.stop,
                diagnostics: r.trace.diagnostics.clone(),
            })
            .collect(),
        echo: BTreeMap::new(),
    };
    Ok(ExperimentResult { header, runs })
}

/// Converged run with the smallest final gradient norm; ties go to the lower value.
fn pick_reference<M: FiniteSum + ?Sized>(model: &M, runs: &[RunResult]) -> Result<Option<Reference>> {
    let best = runs
        .iter()
        .filter(|r| matches!(r.trace.stop, StopFlag::GradTol | StopFlag::SigmaStop))
        .min_by(|a, b| {
            a.final_grad_norm
                .total_cmp(&b.final_grad_norm)
                .then(a.trace.last().f_value.total_cmp(&b.trace.last().f_value))
        });
    let Some(best) = best else {
        return Ok(None);
    };
    let x = best.trace.final_x();
    Ok(Some(Reference {
        solver: best.solver.clone(),
        rep: best.rep,
        f_star: model.value(&x)?,
        x_star: best.trace.x_final.clone(),
        grad_norm: best.final_grad_norm,
    }))
}

fn relative(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

/// Errors of the recorded iterates against `r`.
pub fn relative_errors(trace: &Trace, r: &Reference) -> Vec<SeriesPoint> {
    let xs = DVector::from_column_slice(&r.x_star);
    let xs_norm = xs.norm();
    trace
        .records
        .iter()
        .zip(&trace.iterates)
        .map(|(rec, x)| {
            let dx = (DVector::from_column_slice(x) - &xs).norm();
            SeriesPoint {
                k: rec.k,
                wall_seconds: rec.wall_nanos as f64 * 1e-9,
                rel_err_x: relative(dx, xs_norm),
                rel_err_f: relative((rec.f_value - r.f_star).abs(), r.f_star.abs()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = SsnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(invalid("format", format!("unknown export format `{other}`"))),
        }
    }
}

pub fn export(result: &ExperimentResult, format: ExportFormat, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        ExportFormat::Csv => write_csv(result, &mut w)?,
        ExportFormat::Json => serde_json::to_writer_pretty(&mut w, result)?,
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(result: &ExperimentResult, w: &mut W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for run in &result.runs {
        write_trace_rows(&run.trace, run.rep, &run.series, w)?;
    }
    Ok(())
}

/// One CSV row per record; relative-error cells stay empty without a series.
pub fn write_trace_rows<W: Write>(trace: &Trace, rep: usize, series: &[SeriesPoint], w: &mut W) -> Result<()> {
    for (i, r) in trace.records.iter().enumerate() {
        let (ex, ef) = match series.get(i) {
            Some(s) => (s.rel_err_x.to_string(), s.rel_err_f.to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            trace.solver,
            rep,
            r.k,
            r.wall_nanos as f64 * 1e-9,
            r.f_value,
            r.grad_norm(),
            r.alpha,
            r.sample_h,
            r.sample_g,
            ex,
            ef,
            r.stopped.map_or("", |s| s.as_str()),
        )?;
    }
    Ok(())
}

pub fn read_json(path: &Path) -> Result<ExperimentResult> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{SampleSizing, Variant};

    fn spec(solvers: Vec<SolverConfig>) -> ExperimentSpec {
        ExperimentSpec {
            dataset: DatasetRef::Synthetic(SyntheticSpec {
                condition_target: 20.0,
                ..SyntheticSpec::new(300, 6, Family::Logistic)
            }),
            family: Family::Logistic,
            reg: 1e-3,
            solvers,
            grad_tol: 1e-8,
            time_limit: None,
            repetitions: 2,
            x0: None,
            threads: Some(1),
        }
    }

    fn ssn() -> SolverConfig {
        SolverConfig {
            hessian_sample: SampleSizing::Fraction(0.2),
            ..SolverConfig::new(Variant::SsnHessian)
        }
    }

    #[test]
    fn identical_configs_give_identical_blocks() {
        let r = run_experiment(&spec(vec![ssn(), ssn()])).unwrap();
        assert_eq!(r.runs.len(), 4);
        let strip = |t: &Trace| t.records.iter().map(|r| (r.k, r.f_value, r.alpha)).collect::<Vec<_>>();
        assert_eq!(strip(&r.runs[0].trace), strip(&r.runs[1].trace));
        assert_eq!(r.runs[0].series.len(), r.runs[0].trace.records.len());
        // repetitions reseed
        assert_eq!(r.runs[2].seed, 1);
    }

    #[test]
    fn newton_defines_the_reference() {
        let r = run_experiment(&spec(vec![SolverConfig::new(Variant::Newton), SolverConfig::new(Variant::Gd)])).unwrap();
        let reference = r.reference().unwrap();
        assert_eq!(reference.solver, "newton");
        let newton = r.run("newton", 0).unwrap();
        assert!(newton.series.last().unwrap().rel_err_x <= 1e-6);
    }

    #[test]
    fn csv_rows_and_json_round_trip() {
        let r = run_experiment(&spec(vec![ssn(), SolverConfig::new(Variant::Bfgs)])).unwrap();
        let mut buf = Vec::new();
        write_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let total: usize = r.runs.iter().map(|x| x.trace.records.len()).sum();
        assert_eq!(text.lines().count(), total + 1);
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        export(&r, ExportFormat::Json, &path).unwrap();
        assert_eq!(read_json(&path).unwrap(), r);
    }

    #[test]
    fn empty_result_is_header_only() {
        let r = run_experiment(&spec(vec![ssn()])).unwrap();
        let empty = ExperimentResult {
            header: r.header.clone(),
            runs: vec![],
        };
        let mut buf = Vec::new();
        write_csv(&empty, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn no_converged_run_leaves_series_empty() {
        let mut c = SolverConfig::new(Variant::Gd);
        c.max_iters = 2;
        let r = run_experiment(&spec(vec![c])).unwrap();
        assert!(r.reference().is_err());
        assert!(r.runs.iter().all(|x| x.series.is_empty()));
    }

    #[test]
    fn wall_time_is_monotone() {
        let r = run_experiment(&spec(vec![SolverConfig::new(Variant::Agd)])).unwrap();
        for run in &r.runs {
            let t: Vec<u64> = run.trace.records.iter().map(|x| x.wall_nanos).collect();
            assert!(t.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn spec_parses_from_json() {
        let text = r#"{
            "dataset": {"kind": "file", "path": "d.svm"},
            "family": "logistic",
            "solvers": [{"variant": {"kind": "newton"}}, {"variant": {"kind": "lbfgs", "memory": 5}}]
        }"#;
        let s: ExperimentSpec = serde_json::from_str(text).unwrap();
        assert_eq!(s.repetitions, 1);
        assert_eq!(s.grad_tol, 1e-8);
        assert_eq!(s.solvers[1].variant, Variant::Lbfgs { memory: 5 });
    }
}
