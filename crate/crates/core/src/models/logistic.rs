use crate::error::{domain, Result};

use super::{check_x, ParamBound, ParamSpace, ParamSpec, Stdf, TailModel};

/// `(sum_j x_j^{1/theta})^theta`.
pub fn logistic_stdf(x: &[f64], theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return domain(format!("logistic parameter must lie in (0, 1], got {theta}"));
    }
    check_x(x, x.len())?;
    Ok(eval(x, theta))
}

fn eval(x: &[f64], theta: f64) -> f64 {
    let m = x.iter().cloned().fold(0.0, f64::max);
    if m == 0.0 {
        return 0.0;
    }
    if theta == 1.0 {
        return x.iter().sum();
    }
    let inv = 1.0 / theta;
    let s: f64 = x.iter().filter(|&&v| v > 0.0).map(|&v| (v / m).powf(inv)).sum();
    m * s.powf(theta)
}

/// Symmetric logistic family in dimension `d`, one parameter in `(0, 1]`.
#[derive(Debug, Clone)]
pub struct Logistic {
    d: usize,
    space: ParamSpace,
}

impl Logistic {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return domain(format!("logistic model needs d >= 2, got {d}"));
        }
        Ok(Self {
            d,
            space: ParamSpace {
                params: vec![ParamSpec {
                    name: "theta".into(),
                    bound: ParamBound::Interval { lo: 0.0, hi: 1.0 },
                    init: (0.1, 0.95),
                }],
            },
        })
    }
}

impl TailModel for Logistic {
    fn dim(&self) -> usize {
        self.d
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn label(&self) -> String {
        format!("logistic(d={})", self.d)
    }

    fn bind(&self, theta: &[f64]) -> Result<Box<dyn Stdf>> {
        self.space.check(theta)?;
        Ok(Box::new(LogisticStdf {
            d: self.d,
            theta: theta[0],
        }))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LogisticStdf {
    d: usize,
    theta: f64,
}

impl LogisticStdf {
    pub fn new(d: usize, theta: f64) -> Result<Self> {
        Logistic::new(d)?.space.check(&[theta])?;
        Ok(Self { d, theta })
    }
}

impl Stdf for LogisticStdf {
    fn dim(&self) -> usize {
        self.d
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        check_x(x, self.d)?;
        Ok(eval(x, self.theta))
    }

    /// `(x_j / l(x))^{1/theta - 1}`, which equals
    /// `(sum_i x_i^{1/theta})^{theta - 1} x_j^{1/theta - 1}`.
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_x(x, self.d)?;
        let l = eval(x, self.theta);
        let p = 1.0 / self.theta - 1.0;
        Ok(x.iter()
            .map(|&v| if v > 0.0 { (v / l).powf(p) } else { 0.0 })
            .collect())
    }
}
