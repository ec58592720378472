use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use ssn_core::bench::{self, ExperimentSpec, ExportFormat};
use ssn_core::data::{self, DatasetMeta, Format, SyntheticSpec};
use ssn_core::linesearch::LineSearchParams;
use ssn_core::linsolve::InexactnessSpec;
use ssn_core::model::{Dataset, Family, FiniteSum, Glm};
use ssn_core::sampling::{self, Replacement};
use ssn_core::solvers::{self, Eps2Schedule, SampleSizing, SolverConfig, StopFlag, Trace, Variant};

use crate::args::*;
use crate::{exit, Failure};

type CmdResult = Result<u8, Failure>;

pub fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Verify(a) => verify(a),
        Command::Rates(a) => rates(a),
        Command::Inspect(a) => inspect(a),
    }
}

fn family(f: FamilyArg) -> Family {
    match f {
        FamilyArg::Ridge => Family::Ridge,
        FamilyArg::Logistic => Family::Logistic,
        FamilyArg::Poisson => Family::Poisson,
    }
}

fn format(f: FormatArg) -> Format {
    match f {
        FormatArg::Svmlight => Format::Svmlight,
        FormatArg::Csv => Format::Csv,
    }
}

fn replacement(r: ReplacementArg) -> Replacement {
    match r {
        ReplacementArg::With => Replacement::With,
        ReplacementArg::Without => Replacement::Without,
    }
}

/// Generator metadata lives next to the dataset as `<file>.meta.json`.
fn meta_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn argv_echo() -> String {
    std::env::args().skip(1).collect::<Vec<_>>().join(" ")
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path).map_err(ssn_core::SsnError::from)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(ssn_core::SsnError::from)?;
    writeln!(w).map_err(ssn_core::SsnError::from)?;
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let s = serde_json::to_string_pretty(value).map_err(ssn_core::SsnError::from)?;
    println!("{s}");
    Ok(())
}

fn gen(a: GenArgs) -> CmdResult {
    let spec = SyntheticSpec {
        n: a.n,
        p: a.p,
        density: a.density,
        condition_target: a.condition,
        family: family(a.family),
        seed: a.seed,
        signal: a.signal,
        noise: a.noise,
    };
    let s = data::generate_synthetic(&spec)?;
    let fmt = a.format.map_or_else(|| Format::from_path(&a.output), format);
    data::save_dataset(&s.dataset, &a.output, fmt)?;
    write_json(&meta_path(&a.output), &s.meta)?;
    println!(
        "wrote {} (n = {}, p = {}, density = {:.4}, gram condition = {})",
        a.output.display(),
        s.dataset.n(),
        s.dataset.p(),
        s.meta.measured_density,
        s.meta
            .measured_condition
            .map_or_else(|| "not computed".to_string(), |c| format!("{c:.6e}"))
    );
    Ok(exit::OK)
}

struct Loaded {
    dataset: Dataset,
    family: Family,
    meta: Option<DatasetMeta>,
}

fn load(flags: &DataFlags) -> Result<Loaded, Failure> {
    let path = flags
        .data
        .as_ref()
        .ok_or_else(|| Failure::usage("--data is required"))?;
    let fmt = flags.format.map_or_else(|| Format::from_path(path), format);
    let dataset = data::load_dataset(path, fmt)?;
    let meta: Option<DatasetMeta> = File::open(meta_path(path))
        .ok()
        .and_then(|f| serde_json::from_reader(std::io::BufReader::new(f)).ok());
    let family = flags
        .family
        .map(family)
        .or_else(|| meta.as_ref().map(|m| m.spec.family))
        .unwrap_or(Family::Logistic);
    Ok(Loaded { dataset, family, meta })
}

fn model(flags: &DataFlags) -> Result<(Glm, Loaded), Failure> {
    let loaded = load(flags)?;
    let m = Glm::new(loaded.dataset.clone(), loaded.family, flags.reg)?;
    Ok((m, loaded))
}

/// Builds and validates the configuration; runs before any data is read.
fn solver_config(solver: &str, f: &SolverFlags) -> Result<SolverConfig, Failure> {
    let variant: Variant = solver.parse()?;
    let mut c = SolverConfig::new(variant);
    if let Some(v) = f.eps {
        c.eps = v;
        if f.eps1.is_none() {
            c.eps1 = v;
        }
    }
    if let Some(v) = f.eps1 {
        c.eps1 = v;
    }
    if let Some(v) = f.eps2 {
        c.eps2 = v;
    }
    if let Some(rho2) = f.rho2 {
        c.eps2_schedule = Eps2Schedule::Geometric { rho2 };
    }
    if let Some(v) = f.delta {
        c.delta = v;
    }
    c.line_search = LineSearchParams {
        beta: f.beta.unwrap_or(c.line_search.beta),
        alpha_hat: f.alpha_hat.unwrap_or(c.line_search.alpha_hat),
        ..c.line_search
    };
    if f.theta1.is_some() || f.theta2.is_some() {
        c.inexact = Some(InexactnessSpec {
            theta1: f.theta1.unwrap_or(0.1),
            theta2: f.theta2.unwrap_or(0.5),
            max_iters: f.cg_max_iters.unwrap_or(InexactnessSpec::DEFAULT_MAX_ITERS),
        });
    }
    if let Some(v) = f.lambda {
        c.lambda_user = v;
    }
    c.sigma = f.sigma;
    if let Some(v) = f.sample_frac_h {
        c.hessian_sample = SampleSizing::Fraction(v);
    }
    if let Some(v) = f.sample_frac_g {
        c.gradient_sample = SampleSizing::Fraction(v);
    }
    if let Some(v) = f.seed {
        c.seed = v;
    }
    if let Some(v) = f.grad_tol {
        c.grad_tol = v;
    }
    if let Some(v) = f.max_iters {
        c.max_iters = v;
    }
    if let Some(r) = f.replacement {
        c.replacement = replacement(r);
    }
    c.gd_step = f.gd_step;
    c.time_limit = f.time_limit;
    c.radius = f.radius;
    if let Some(v) = f.resample_retries {
        c.resample_retries = v;
    }
    c.diagnostics = f.diagnostics;
    c.validate()?;
    Ok(c)
}

fn echo_header(w: &mut impl Write, entries: &BTreeMap<String, String>) -> std::io::Result<()> {
    for (k, v) in entries {
        writeln!(w, "# {k}: {v}")?;
    }
    Ok(())
}

fn zero_timing(trace: &mut Trace) {
    for r in &mut trace.records {
        r.wall_nanos = 0;
    }
}

fn run(a: RunArgs) -> CmdResult {
    let cfg = solver_config(&a.solver, &a.solver_flags)?;
    let (m, loaded) = model(&a.data)?;
    let x0 = DVector::zeros(m.dim());
    let mut trace = solvers::run(&m, &cfg, &x0)?;
    if a.omit_timing {
        zero_timing(&mut trace);
    }

    let mut echo = BTreeMap::new();
    echo.insert("argv".to_string(), argv_echo());
    echo.insert("config".to_string(), serde_json::to_string(&cfg).map_err(ssn_core::SsnError::from)?);
    echo.insert("family".to_string(), loaded.family.name().to_string());
    echo.insert("reg".to_string(), a.data.reg.to_string());
    if let Some(meta) = &loaded.meta {
        echo.insert("generator".to_string(), serde_json::to_string(&meta.spec).map_err(ssn_core::SsnError::from)?);
    }
    if cfg.hessian_sample != SampleSizing::Lemma || cfg.gradient_sample != SampleSizing::Lemma {
        echo.insert("sample_sizes".to_string(), "set directly, lemma calculators bypassed".to_string());
    }
    if let Some(rate) = &trace.diagnostics.rate {
        echo.insert("rate".to_string(), serde_json::to_string(rate).map_err(ssn_core::SsnError::from)?);
    }

    let file = File::create(&a.output).map_err(ssn_core::SsnError::from)?;
    let mut w = BufWriter::new(file);
    echo_header(&mut w, &echo).map_err(ssn_core::SsnError::from)?;
    writeln!(w, "{}", bench::CSV_HEADER).map_err(ssn_core::SsnError::from)?;
    bench::write_trace_rows(&trace, 0, &[], &mut w)?;
    w.flush().map_err(ssn_core::SsnError::from)?;
    if let Some(path) = &a.json {
        let doc = serde_json::json!({ "header": echo, "trace": trace });
        write_json(path, &doc)?;
    }

    let last = trace.last();
    println!(
        "{}: {} iterations, F = {:.12e}, |grad| = {:.3e}, stop = {}",
        trace.solver,
        last.k,
        last.f_value,
        last.grad_norm(),
        trace.stop.as_str()
    );
    match trace.stop {
        StopFlag::Error | StopFlag::Diverged => {
            eprintln!("error: {}", trace.error.as_deref().unwrap_or("run failed"));
            Ok(exit::NUMERICAL)
        }
        _ => Ok(exit::OK),
    }
}

fn compare(a: CompareArgs) -> CmdResult {
    let mut spec = ExperimentSpec::from_json_file(&a.spec)?;
    if let Some(t) = a.threads {
        spec.threads = Some(t);
    }
    spec.validate()?;
    let mut result = bench::run_experiment(&spec)?;
    if a.omit_timing {
        for r in &mut result.runs {
            zero_timing(&mut r.trace);
            r.series.iter_mut().for_each(|s| s.wall_seconds = 0.0);
        }
    }
    result.header.echo.insert("argv".to_string(), argv_echo());
    let csv = a.output.with_extension("csv");
    let json = a.output.with_extension("json");
    bench::export(&result, ExportFormat::Csv, &csv)?;
    bench::export(&result, ExportFormat::Json, &json)?;
    for r in &result.runs {
        let last = r.trace.last();
        println!(
            "{} rep {}: {} iterations, |grad| = {:.3e}, stop = {}",
            r.solver,
            r.rep,
            last.k,
            r.final_grad_norm,
            r.trace.stop.as_str()
        );
    }
    println!("wrote {} and {}", csv.display(), json.display());
    match result.reference() {
        Ok(r) => {
            println!("reference optimum from {} rep {}: F* = {:.12e}", r.solver, r.rep, r.f_star);
            Ok(exit::OK)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(exit::NUMERICAL)
        }
    }
}

/// Logistic problem used by `verify` when no dataset is given.
fn default_verify_problem(reg: f64) -> Result<Glm, Failure> {
    let spec = SyntheticSpec {
        condition_target: 10.0,
        seed: 7,
        ..SyntheticSpec::new(2000, 20, Family::Logistic)
    };
    Ok(Glm::new(data::generate_synthetic(&spec)?.dataset, Family::Logistic, reg)?)
}

fn verify(a: VerifyArgs) -> CmdResult {
    if a.resamples == 0 {
        return Err(Failure::usage("--resamples must be >= 1"));
    }
    if !(a.margin >= 0.0) {
        return Err(Failure::usage("--margin must be >= 0"));
    }
    let m = if a.data.data.is_some() {
        model(&a.data)?.0
    } else {
        default_verify_problem(a.data.reg)?
    };
    let x = data::random_point(m.dim(), a.point_seed);
    let mode = replacement(a.replacement);
    let (name, outcome) = match a.lemma {
        LemmaArg::Hessian => (
            "hessian",
            sampling::hessian_lemma_frequency(&m, &x, a.eps, a.delta, a.resamples, mode, a.seed)?,
        ),
        LemmaArg::Gradient => (
            "gradient",
            sampling::gradient_lemma_frequency(&m, &x, a.eps, a.delta, a.resamples, mode, a.seed)?,
        ),
    };
    let pass = outcome.passes(a.margin);
    print_json(&serde_json::json!({
        "argv": argv_echo(),
        "lemma": name,
        "n": m.n(),
        "p": m.dim(),
        "sample_size": outcome.sample_size,
        "resamples": outcome.resamples,
        "failures": outcome.failures,
        "frequency": outcome.frequency(),
        "threshold": outcome.threshold,
        "allowed": a.delta + a.margin,
    }))?;
    println!(
        "{} {name} lemma: failure frequency {:.4} vs allowed {:.4}",
        if pass { "PASS" } else { "FAIL" },
        outcome.frequency(),
        a.delta + a.margin
    );
    Ok(if pass { exit::OK } else { exit::VERIFICATION })
}

fn rates(a: RatesArgs) -> CmdResult {
    let cfg = solver_config(&a.solver, &a.solver_flags)?;
    if !cfg.variant.is_subsampled() {
        return Err(Failure::usage(format!(
            "{} has no rate prediction; pick a sub-sampled variant",
            cfg.variant.name()
        )));
    }
    let (m, _) = model(&a.data)?;
    let x0 = DVector::zeros(m.dim());
    let diag = solvers::predict_diagnostics(&m, &cfg, &x0)?;
    print_json(&serde_json::json!({
        "argv": argv_echo(),
        "config": cfg,
        "diagnostics": diag,
    }))?;
    Ok(exit::OK)
}

fn inspect(a: InspectArgs) -> CmdResult {
    if !(a.sample_frac > 0.0 && a.sample_frac <= 1.0) {
        return Err(Failure::usage("--sample-frac must lie in (0, 1]"));
    }
    let (m, loaded) = model(&a.data)?;
    let d = &loaded.dataset;
    let labels = d.labels();
    let gram = if d.p() <= ssn_core::model::EXACT_GAMMA_MAX_DIM {
        Some(data::gram_spectrum(d)?)
    } else {
        None
    };
    let radius = a.radius.or_else(|| m.needs_radius().then_some(1.0));
    let est = m.curvature_constants(radius)?;
    let q = ((a.sample_frac * d.n() as f64).ceil() as usize).max(1);
    let finite = |v: f64| v.is_finite().then_some(v);
    print_json(&serde_json::json!({
        "n": d.n(),
        "p": d.p(),
        "nnz": d.design().nnz(),
        "density": d.density(),
        "sparse": d.design().is_sparse(),
        "labels": { "min": labels.min(), "max": labels.max(), "mean": labels.mean() },
        "gram": gram,
        "family": loaded.family.name(),
        "reg": a.data.reg,
        "radius": radius,
        "curvature": {
            "gamma": est.gamma,
            "big_k": est.big_k,
            "kappa": finite(est.kappa()),
            "kappa1": finite(est.kappa1()),
            "sample_size": q,
            "khat": est.khat(q),
        },
        "generator": loaded.meta,
    }))?;
    Ok(exit::OK)
}
