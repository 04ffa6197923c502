//! Turning flag values into library objects.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use cuwls::estimator::{extremal_coeff_point_set, grid_point_set, neighbour_pairs, OptimizerConfig, PointSet, WeightPolicy};
use cuwls::gof::GofSpec;
use cuwls::models::{dag_to_coeffs, BrownResnick, Dag, DagModel, GridLocations, Logistic, TailModel};
use cuwls::simulate::{SampleModel, SampleSpec};
use cuwls::stdf::EstimatorKind;

use crate::args::{EstimationArgs, EstimatorArg, ModelArgs, ModelKind, SampleArgs};
use crate::data::read_matrix;

pub fn parse_grid(text: &str) -> Result<GridLocations> {
    let (r, c) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("--grid expects ROWSxCOLS, got `{text}`"))?;
    let rows: usize = r.trim().parse().with_context(|| format!("invalid grid rows `{r}`"))?;
    let cols: usize = c.trim().parse().with_context(|| format!("invalid grid columns `{c}`"))?;
    Ok(GridLocations::grid(rows, cols)?)
}

pub fn load_dag(path: &Path) -> Result<Dag> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read DAG file {}", path.display()))?;
    Dag::parse(&text).with_context(|| format!("in DAG file {}", path.display()))
}

/// Fitted family, plus the fixed structure needed to simulate from it.
pub struct ModelSetup {
    pub model: Box<dyn TailModel>,
    pub dag: Option<Dag>,
    pub locs: Option<GridLocations>,
}

/// Build the model; `d` is the data dimension when known.
pub fn build_model(args: &ModelArgs, d: Option<usize>) -> Result<ModelSetup> {
    let setup = match args.model {
        ModelKind::Logistic => {
            let d = d.ok_or_else(|| anyhow!("the logistic model needs a dimension (--d)"))?;
            ModelSetup {
                model: Box::new(Logistic::new(d)?),
                dag: None,
                locs: None,
            }
        }
        ModelKind::Br => {
            let grid = args.grid.as_deref().ok_or_else(|| anyhow!("--model br requires --grid RxC"))?;
            let locs = parse_grid(grid)?;
            ModelSetup {
                model: Box::new(BrownResnick::new(locs.clone())?),
                dag: None,
                locs: Some(locs),
            }
        }
        ModelKind::Maxlinear => {
            let path = args.dag.as_deref().ok_or_else(|| anyhow!("--model maxlinear requires --dag FILE"))?;
            let dag = load_dag(path)?;
            ModelSetup {
                model: Box::new(DagModel::new(dag.clone())),
                dag: Some(dag),
                locs: None,
            }
        }
    };
    if let Some(d) = d {
        if setup.model.dim() != d {
            bail!("model dimension {} does not match data dimension {d}", setup.model.dim());
        }
    }
    Ok(setup)
}

pub fn parse_points(spec: &str, d: usize, locs: Option<&GridLocations>) -> Result<PointSet> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| anyhow!("--points expects KIND:ARGS, got `{spec}`"))?;
    let points = match kind {
        "grid" => {
            let (levels, counts) = rest
                .split_once(':')
                .ok_or_else(|| anyhow!("grid points expect grid:LEVELS:COUNTS, e.g. grid:0,0.5,1:2,3"))?;
            let levels = parse_list::<f64>(levels, "grid level")?;
            let counts = parse_list::<usize>(counts, "nonzero count")?;
            grid_point_set(d, &levels, &counts)?
        }
        "pairs" => {
            let a: usize = rest.parse().with_context(|| format!("invalid subset size `{rest}`"))?;
            extremal_coeff_point_set(d, a)?
        }
        "neighbours" => {
            let dist: f64 = rest.parse().with_context(|| format!("invalid distance `{rest}`"))?;
            let locs = locs.ok_or_else(|| anyhow!("neighbour points need the Brown-Resnick --grid"))?;
            neighbour_pairs(locs, dist)?
        }
        "file" => {
            let m = read_matrix(Path::new(rest))?;
            let rows: Vec<Vec<f64>> = (0..m.n()).map(|i| m.row(i).to_vec()).collect();
            PointSet::new(d, rows).with_context(|| format!("in point file {rest}"))?
        }
        other => bail!("unknown point kind `{other}` (grid, pairs, neighbours, file)"),
    };
    Ok(points)
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| anyhow!("invalid {what} `{s}`"))
        })
        .collect()
}

pub fn parse_weight(text: &str) -> Result<WeightPolicy> {
    let policy = match text.split_once(':') {
        None if text == "identity" => WeightPolicy::Identity,
        None if text == "optimal" => WeightPolicy::InverseSigma,
        None if text == "tikhonov" => WeightPolicy::Tikhonov { c: None },
        Some(("tikhonov", c)) => WeightPolicy::Tikhonov {
            c: Some(c.parse().with_context(|| format!("invalid tikhonov constant `{c}`"))?),
        },
        _ => bail!("--weight expects identity, optimal or tikhonov[:C], got `{text}`"),
    };
    policy.validate()?;
    Ok(policy)
}

pub fn parse_gof(text: &str) -> Result<GofSpec> {
    match text.split_once(':') {
        None if text == "optimal" => Ok(GofSpec::Optimal),
        None if text == "spectral" => Ok(GofSpec::Spectral {
            threshold: cuwls::gof::DEFAULT_EIG_THRESHOLD,
        }),
        Some(("spectral", t)) => {
            let threshold: f64 = t.parse().with_context(|| format!("invalid eigenvalue threshold `{t}`"))?;
            if !(threshold >= 0.0) {
                bail!("eigenvalue threshold must be non-negative");
            }
            Ok(GofSpec::Spectral { threshold })
        }
        _ => bail!("--gof expects optimal or spectral[:THRESHOLD], got `{text}`"),
    }
}

pub fn estimator_kind(args: &EstimationArgs) -> Result<EstimatorKind> {
    Ok(match args.estimator {
        EstimatorArg::Shifted => EstimatorKind::Shifted,
        EstimatorArg::Raw => EstimatorKind::Raw,
        EstimatorArg::Kernel => EstimatorKind::Kernel { tau: args.tau },
        EstimatorArg::Biascorr => EstimatorKind::BiasCorrected {
            k1: args.k1.ok_or_else(|| anyhow!("--estimator biascorr requires --k1"))?,
            tau: args.tau,
        },
    })
}

pub fn optimizer(args: &EstimationArgs) -> Result<OptimizerConfig> {
    let cfg = OptimizerConfig {
        max_iter: args.max_iter,
        restarts: args.restarts,
        seed: args.seed,
        ..OptimizerConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Parsed estimation flags.
pub struct Estimation {
    pub points: PointSet,
    pub kind: EstimatorKind,
    pub policy: WeightPolicy,
    pub gof: Option<GofSpec>,
    pub optimizer: OptimizerConfig,
}

pub fn estimation(args: &EstimationArgs, setup: &ModelSetup) -> Result<Estimation> {
    let est = Estimation {
        points: parse_points(&args.points, setup.model.dim(), setup.locs.as_ref())?,
        kind: estimator_kind(args)?,
        policy: parse_weight(&args.weight)?,
        gof: args.gof.as_deref().map(parse_gof).transpose()?,
        optimizer: optimizer(args)?,
    };
    est.kind.sigma_scale()?;
    let (q, p) = (est.points.q(), setup.model.n_params());
    if q < p {
        bail!("q must be >= p (q = {q}, p = {p})");
    }
    Ok(est)
}

pub fn sample_spec(model: &ModelArgs, sample: &SampleArgs, seed: u64) -> Result<(SampleSpec, ModelSetup)> {
    let setup = build_model(model, sample.d)?;
    let theta = &sample.theta;
    let space = setup.model.param_space();
    if theta.len() != space.dim() {
        bail!(
            "--theta needs {} values ({}) for this model, got {}",
            space.dim(),
            space.names().join(", "),
            theta.len()
        );
    }
    space.check(theta)?;
    let sample_model = match model.model {
        ModelKind::Logistic => SampleModel::Logistic {
            d: setup.model.dim(),
            theta: theta[0],
        },
        ModelKind::Br => SampleModel::BrownResnick {
            locs: setup.locs.clone().expect("grid parsed"),
            alpha: theta[0],
            rho: theta[1],
            max_points: sample.max_points,
        },
        ModelKind::Maxlinear => SampleModel::MaxLinear {
            coeffs: dag_to_coeffs(setup.dag.as_ref().expect("dag parsed"), theta)?,
        },
    };
    let spec = SampleSpec {
        n: sample.n,
        model: sample_model,
        noise_sd: sample.noise.then_some(sample.noise_sd),
        seed,
    };
    spec.validate()?;
    Ok((spec, setup))
}
