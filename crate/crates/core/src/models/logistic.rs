use nalgebra::DMatrix;

use super::{ItemDerivatives, ItemLikelihood};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Prior `N(0, 4 I)` on the coefficients.
pub const PRIOR_VARIANCE: f64 = 4.0;

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Bernoulli regression with logit link. Row `i` of the design starts with
/// an intercept 1.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    n: usize,
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    prior_variance: f64,
}

impl LogisticModel {
    /// `x` is the row-major `N x d` design including the intercept column.
    pub fn new(x: Vec<f64>, y: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 || y.is_empty() || x.len() != y.len() * d {
            return Err(Error::invalid("design shape does not match responses"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design has non-finite entries"));
        }
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("logistic responses must be 0 or 1"));
        }
        if x.chunks(d).any(|r| r[0] != 1.0) {
            return Err(Error::invalid("first design column must be the intercept"));
        }
        Ok(Self {
            n: y.len(),
            d,
            x,
            y,
            prior_variance: PRIOR_VARIANCE,
        })
    }

    /// Prepends the intercept to the dataset's covariates.
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let p = data.covariate_dim();
        let d = p + 1;
        let mut x = Vec::with_capacity(data.len() * d);
        for i in 0..data.len() {
            x.push(1.0);
            x.extend_from_slice(data.row(i));
        }
        Self::new(x, data.response().to_vec(), d)
    }

    /// Covariates without the intercept column.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let p = self.d - 1;
        let mut cov = Vec::with_capacity(self.n * p);
        for i in 0..self.n {
            cov.extend_from_slice(&self.row(i)[1..]);
        }
        Dataset::new(cov, self.y.clone(), p)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn response(&self) -> &[f64] {
        &self.y
    }

    /// Label-signed covariates `z_i = (2 y_i - 1) x_i`, row-major.
    pub fn signed_covariates(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.x.len());
        for i in 0..self.n {
            let s = 2.0 * self.y[i] - 1.0;
            z.extend(self.row(i).iter().map(|v| s * v));
        }
        z
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut x = Vec::with_capacity(indices.len() * self.d);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Self {
            n: indices.len(),
            d: self.d,
            x,
            y,
            prior_variance: self.prior_variance,
        }
    }

    fn eta(&self, i: usize, theta: &[f64]) -> f64 {
        dot(self.row(i), theta)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Derivatives of `log sigma(z . theta)`.
fn signed_derivatives(z: &[f64], theta: &[f64]) -> ItemDerivatives {
    let d = z.len();
    let eta = dot(z, theta);
    let s = sigmoid(-eta);
    let w = s * sigmoid(eta);
    ItemDerivatives {
        value: log_sigmoid(eta),
        gradient: z.iter().map(|v| s * v).collect(),
        hessian: DMatrix::from_fn(d, d, |a, b| -w * z[a] * z[b]),
    }
}

impl ItemLikelihood for LogisticModel {
    fn n_items(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn item_loglik(&self, i: usize, theta: &[f64]) -> f64 {
        let eta = self.eta(i, theta);
        self.y[i] * eta - softplus(eta)
    }

    fn item_derivatives(&self, i: usize, theta: &[f64]) -> ItemDerivatives {
        let x = self.row(i);
        let eta = self.eta(i, theta);
        let p = sigmoid(eta);
        let w = p * (1.0 - p);
        let r = self.y[i] - p;
        let d = self.d;
        ItemDerivatives {
            value: self.y[i] * eta - softplus(eta),
            gradient: x.iter().map(|v| r * v).collect(),
            hessian: DMatrix::from_fn(d, d, |a, b| -w * x[a] * x[b]),
        }
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let v = self.prior_variance;
        let d = theta.len() as f64;
        -0.5 * theta.iter().map(|t| t * t).sum::<f64>() / v
            - 0.5 * d * (2.0 * std::f64::consts::PI * v).ln()
    }

    fn item_features(&self, i: usize) -> Option<Vec<f64>> {
        let s = 2.0 * self.y[i] - 1.0;
        Some(self.row(i).iter().map(|v| s * v).collect())
    }

    fn feature_derivatives(&self, features: &[f64], theta: &[f64]) -> Option<ItemDerivatives> {
        Some(signed_derivatives(features, theta))
    }
}

/// Design with an intercept and `d - 1` Unif(0,1) covariates, responses
/// Bernoulli(sigma(x . theta_true)).
pub fn generate_logistic(
    n: usize,
    theta_true: &[f64],
    rng: &mut RngStream,
) -> Result<LogisticModel> {
    let d = theta_true.len();
    if d == 0 || n == 0 {
        return Err(Error::invalid("need N >= 1 and d >= 1"));
    }
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let start = x.len();
        x.push(1.0);
        for _ in 1..d {
            x.push(rng.uniform());
        }
        let p = sigmoid(dot(&x[start..], theta_true));
        y.push(f64::from(u8::from(rng.uniform() < p)));
    }
    LogisticModel::new(x, y, d)
}
