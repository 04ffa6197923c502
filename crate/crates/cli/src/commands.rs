use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use cuwls::estimator::{fit_ranks, FitReport, WeightPolicy};
use cuwls::gof::GofSpec;
use cuwls::simulate::{mc_study, StudySpec};
use cuwls::stdf::{compute_ranks, ProfileLeastSquares, TailFraction};
use serde::{Deserialize, Serialize};

use crate::args::{FitArgs, SimulateArgs, StudyArgs};
use crate::data::{read_matrix, write_matrix};
use crate::setup::{build_model, estimation, sample_spec};
use crate::{exit_code, Failure};

pub const REPORT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub version: String,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub fit: Option<FitReport>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub wall_time_seconds: f64,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let (spec, _) = sample_spec(&args.model, &args.sample, args.seed)?;
    let sample = spec.draw(0)?;
    for w in &sample.warnings {
        eprintln!("warning: {w}");
    }
    match &args.output {
        Some(path) => {
            let mut out = create(path)?;
            write_matrix(&mut out, &sample.data)?;
            out.flush()?;
            let meta = serde_json::json!({
                "version": REPORT_VERSION,
                "tool_version": env!("CARGO_PKG_VERSION"),
                "command": "simulate",
                "seed": args.seed,
                "config": args,
                "n": sample.data.n(),
                "d": sample.data.d(),
                "warnings": sample.warnings,
            });
            let mut meta_path = path.clone().into_os_string();
            meta_path.push(".meta.json");
            write_json(Some(&PathBuf::from(meta_path)), &meta)?;
        }
        None => write_matrix(&mut io::stdout().lock(), &sample.data)?,
    }
    Ok(())
}

/// `fit` and `gof`; `gof` defaults to the optimal-weight test.
pub fn fit(args: &FitArgs, command: &str) -> std::result::Result<(), Failure> {
    let start = Instant::now();
    let data = read_matrix(&args.input)?;
    let setup = build_model(&args.model, Some(data.d()))?;
    let mut est = estimation(&args.estimation, &setup)?;
    if command == "gof" && est.gof.is_none() {
        est.gof = Some(GofSpec::Optimal);
    }
    if let (Some(GofSpec::Optimal), policy) = (est.gof, est.policy) {
        if policy != WeightPolicy::InverseSigma {
            return Err(anyhow!("--gof optimal requires --weight optimal; use --gof spectral for other weights").into());
        }
    }
    let ranks = compute_ranks(&data)?;
    let tf = match est.kind {
        cuwls::stdf::EstimatorKind::BiasCorrected { k1, .. } => TailFraction::with_k1(args.k, k1, data.n())?,
        _ => TailFraction::new(args.k, data.n())?,
    };

    let mut report = ReportFile {
        version: REPORT_VERSION.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed: args.estimation.seed,
        config: serde_json::to_value(args).map_err(anyhow::Error::from)?,
        fit: None,
        warnings: Vec::new(),
        error: None,
        wall_time_seconds: 0.0,
    };
    let outcome = fit_ranks(
        &ranks,
        tf,
        est.kind,
        &ProfileLeastSquares,
        setup.model.as_ref(),
        &est.points,
        est.policy,
        &est.optimizer,
    )
    .map_err(anyhow::Error::from)
    .and_then(|fitted| {
        let mut rep = fitted.report.clone();
        if let Some(g) = est.gof {
            rep.gof = Some(g.apply(&fitted)?);
        }
        Ok(rep)
    });
    let result = match outcome {
        Ok(rep) => {
            report.warnings = rep.diagnostics.warnings.clone();
            report.fit = Some(rep);
            Ok(())
        }
        Err(e) => {
            let mut e = e;
            if exit_code(&e) == 2
                && (est.policy == WeightPolicy::InverseSigma || est.gof == Some(GofSpec::Optimal))
            {
                e = e.context("estimation failed; try --weight tikhonov together with --gof spectral");
            }
            report.error = Some(format!("{e:#}"));
            Err(e)
        }
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    if result.is_ok() || exit_code(result.as_ref().unwrap_err()) == 2 {
        write_json(args.output.as_deref(), &report)?;
    }
    result.map_err(Failure::from)
}

pub fn study(args: &StudyArgs) -> Result<()> {
    let (sample, setup) = sample_spec(&args.model, &args.sample, args.estimation.seed)?;
    let est = estimation(&args.estimation, &setup)?;
    if let (Some(GofSpec::Optimal), policy) = (est.gof, est.policy) {
        if policy != WeightPolicy::InverseSigma {
            return Err(anyhow!("--gof optimal requires --weight optimal; use --gof spectral for other weights"));
        }
    }
    if args.k_grid.iter().any(|&k| k == 0 || k > args.sample.n) {
        return Err(anyhow!("every k in --k-grid must lie in 1..={}", args.sample.n));
    }
    let spec = StudySpec {
        sample,
        model: setup.model.as_ref(),
        points: &est.points,
        truth: args.sample.theta.clone(),
        k_grid: args.k_grid.clone(),
        estimator: est.kind,
        provider: &ProfileLeastSquares,
        policy: est.policy,
        optimizer: est.optimizer.clone(),
        gof: est.gof,
        reps: args.reps,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        if j == 0 {
            return Err(anyhow!("--jobs must be at least 1"));
        }
        pool = pool.num_threads(j);
    }
    let report = pool.build()?.install(|| mc_study(&spec))?;
    for w in report.warnings.iter().take(5) {
        eprintln!("warning: {w}");
    }
    for f in report.failures.iter().take(5) {
        eprintln!("replicate {} at k = {} failed: {}", f.replicate, f.k, f.message);
    }

    let label = est.kind.label();
    let mut out: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["estimator", "k", "parameter", "truth", "mean", "bias", "sd", "rmse", "n_ok", "n_failed"])?;
        for s in &report.summary {
            let failed = report.failures.iter().filter(|f| f.k == s.k).count();
            w.write_record([
                label.to_string(),
                s.k.to_string(),
                s.parameter.clone(),
                s.truth.to_string(),
                s.mean.to_string(),
                s.bias.to_string(),
                s.sd.to_string(),
                s.rmse.to_string(),
                s.n_ok.to_string(),
                failed.to_string(),
            ])?;
        }
        w.flush()?;
    }
    out.flush()?;

    if let Some(path) = &args.replicates {
        let mut w = csv::Writer::from_writer(create(path)?);
        let mut header = vec!["replicate".to_string(), "k".to_string()];
        header.extend(report.param_names.iter().cloned());
        header.extend(["objective", "gof_statistic", "gof_p_value"].map(String::from));
        w.write_record(&header)?;
        let mut rows = report.rows.clone();
        rows.sort_by_key(|r| (r.replicate, r.k));
        for r in rows {
            let mut rec = vec![r.replicate.to_string(), r.k.to_string()];
            rec.extend(r.theta.iter().map(|v| v.to_string()));
            rec.push(r.objective.to_string());
            rec.push(r.gof_statistic.map_or(String::new(), |v| v.to_string()));
            rec.push(r.gof_p_value.map_or(String::new(), |v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    Ok(())
}
