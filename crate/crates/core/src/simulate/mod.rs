//! Seeded samplers and Monte Carlo studies.

mod samplers;
mod study;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use samplers::{
    perturb_noise, positive_stable, sample_brown_resnick, sample_logistic, sample_maxlinear,
    BrownResnickSample, DEFAULT_MAX_POINTS,
};
pub use study::{mc_study, Failure, ReplicateRow, StudyReport, StudySpec, SummaryRow};

use crate::error::{domain, Result};
use crate::models::{GridLocations, MaxLinearCoeffs};
use crate::stdf::DataMatrix;

/// Noise standard deviation used when noise is switched on.
pub const DEFAULT_NOISE_SD: f64 = 0.5;

/// Generator for replicate `stream` under `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone)]
pub enum SampleModel {
    Logistic {
        d: usize,
        theta: f64,
    },
    MaxLinear {
        coeffs: MaxLinearCoeffs,
    },
    BrownResnick {
        locs: GridLocations,
        alpha: f64,
        rho: f64,
        max_points: usize,
    },
}

#[derive(Debug, Clone)]
pub struct SampleSpec {
    pub n: usize,
    pub model: SampleModel,
    /// Standard deviation of the additive `|N(0, sd^2)|` noise, if any.
    pub noise_sd: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub data: DataMatrix,
    pub warnings: Vec<String>,
}

impl SampleSpec {
    pub fn d(&self) -> usize {
        match &self.model {
            SampleModel::Logistic { d, .. } => *d,
            SampleModel::MaxLinear { coeffs } => coeffs.d(),
            SampleModel::BrownResnick { locs, .. } => locs.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return domain("n must be at least 1");
        }
        match &self.model {
            SampleModel::Logistic { d, theta } => {
                if *d == 0 || !(*theta > 0.0 && *theta <= 1.0) {
                    return domain(format!("invalid logistic parameters d = {d}, theta = {theta}"));
                }
            }
            SampleModel::MaxLinear { .. } => {}
            SampleModel::BrownResnick {
                alpha,
                rho,
                max_points,
                ..
            } => {
                if !(*alpha > 0.0 && *alpha <= 2.0) || !(*rho > 0.0) || *max_points == 0 {
                    return domain(format!(
                        "invalid Brown-Resnick parameters alpha = {alpha}, rho = {rho}, max_points = {max_points}"
                    ));
                }
            }
        }
        if let Some(sd) = self.noise_sd {
            if !(sd >= 0.0) || !sd.is_finite() {
                return domain(format!("noise sd must be non-negative, got {sd}"));
            }
        }
        Ok(())
    }

    /// Draw replicate `stream`; identical `(spec, stream)` gives identical data.
    pub fn draw(&self, stream: u64) -> Result<Sample> {
        self.validate()?;
        let mut rng = rng_stream(self.seed, stream);
        let mut warnings = Vec::new();
        let data = match &self.model {
            SampleModel::Logistic { d, theta } => sample_logistic(self.n, *d, *theta, &mut rng)?,
            SampleModel::MaxLinear { coeffs } => sample_maxlinear(self.n, coeffs, &mut rng)?,
            SampleModel::BrownResnick {
                locs,
                alpha,
                rho,
                max_points,
            } => {
                let s = sample_brown_resnick(self.n, locs, *alpha, *rho, *max_points, &mut rng)?;
                if s.capped_rows > 0 {
                    warnings.push(format!(
                        "{} of {} rows hit the cap of {max_points} Poisson points; those rows are approximate",
                        s.capped_rows, self.n
                    ));
                }
                s.data
            }
        };
        let data = match self.noise_sd {
            Some(sd) => perturb_noise(&data, sd, &mut rng)?,
            None => data,
        };
        Ok(Sample { data, warnings })
    }
}
