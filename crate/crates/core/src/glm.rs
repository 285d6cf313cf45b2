//! Model fitting: closed-form Gaussian least squares and logistic
//! regression via iteratively reweighted least squares.
//!
//! Both fitters return maximum-likelihood estimates with the asymptotic
//! covariance of the coefficients. The Gaussian dispersion is the MLE
//! `rss / n` (not the unbiased `rss / (n - k)`), so log-likelihoods across
//! models of different size are directly comparable.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Family;
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::scalar::Real;

const LN_2PI: f64 = 1.8378770664093453;

/// A fitted model.
#[derive(Debug, Clone)]
pub struct GlmFit<T: Real> {
    pub family: Family,
    pub coefficients: DVector<T>,
    /// Asymptotic covariance of the coefficients.
    pub covariance: DMatrix<T>,
    pub loglik: T,
    /// Gaussian error variance MLE; `None` for binomial.
    pub dispersion: Option<T>,
    pub n: usize,
    pub iterations: usize,
}

impl<T: Real> GlmFit<T> {
    pub fn k(&self) -> usize {
        self.coefficients.len()
    }

    pub fn se(&self, j: usize) -> T {
        self.covariance[(j, j)].max(T::zero()).sqrt()
    }

    pub fn z(&self, j: usize) -> T {
        self.coefficients[j] / self.se(j)
    }

    /// A Gaussian fit with zero residual variance: the likelihood is
    /// unbounded and the fit carries no uncertainty, so downstream scoring
    /// refuses to weight it.
    pub fn is_degenerate(&self) -> bool {
        matches!(self.dispersion, Some(d) if d == T::zero())
    }
}

/// Tuning knobs for the logistic fitter.
#[derive(Debug, Clone, Copy)]
pub struct LogisticOptions {
    pub max_iterations: usize,
    /// Convergence when the max absolute score component drops below this.
    pub gradient_tol: f64,
    /// Convergence when a Newton step improves the log-likelihood by less
    /// than this, relative to its magnitude.
    pub loglik_rel_tol: f64,
    /// Coefficient magnitude treated as (quasi-)separation.
    pub separation_threshold: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            max_iterations: 100,
            gradient_tol: 1e-8,
            loglik_rel_tol: 1e-12,
            separation_threshold: 30.0,
        }
    }
}

/// Fit `y ~ x` for the given family with default settings.
pub fn fit<T: Real>(y: &DVector<T>, x: &DMatrix<T>, family: Family) -> Result<GlmFit<T>> {
    match family {
        Family::Gaussian => fit_gaussian(y, x),
        Family::Binomial => fit_logistic(y, x, &LogisticOptions::default()),
    }
}

fn check_shape<T: Real>(y: &DVector<T>, x: &DMatrix<T>) -> Result<()> {
    if y.len() != x.nrows() {
        return Err(Error::Dimension(format!(
            "response has {} rows, design has {}",
            y.len(),
            x.nrows()
        )));
    }
    if x.nrows() <= x.ncols() {
        return Err(Error::InsufficientData {
            n: x.nrows(),
            k: x.ncols(),
        });
    }
    Ok(())
}

/// Ordinary least squares through the normal equations.
pub fn fit_gaussian<T: Real>(y: &DVector<T>, x: &DMatrix<T>) -> Result<GlmFit<T>> {
    check_shape(y, x)?;
    let gram = x.transpose() * x;
    let xty = x.transpose() * y;
    let factor = SpdFactor::new(&gram).map_err(|col| {
        Error::SingularDesign(format!("Gram pivot collapsed at design column {col}"))
    })?;
    let beta = factor.solve(&xty);
    let resid = y - x * &beta;
    let rss = resid.dot(&resid);
    let yty = y.dot(y);
    gaussian_from_parts(beta, rss, yty, &factor, x.nrows())
}

/// Least squares from precomputed cross-products: `gram = XᵀX`,
/// `xty = Xᵀy`, `yty = yᵀy`. Used by the model-space engines, which slice
/// one full-design Gram matrix instead of rebuilding submatrices.
pub fn fit_gaussian_gram<T: Real>(
    gram: &DMatrix<T>,
    xty: &DVector<T>,
    yty: T,
    n: usize,
) -> Result<GlmFit<T>> {
    if n <= gram.ncols() {
        return Err(Error::InsufficientData { n, k: gram.ncols() });
    }
    let factor = SpdFactor::new(gram).map_err(|col| {
        Error::SingularDesign(format!("Gram pivot collapsed at design column {col}"))
    })?;
    let beta = factor.solve(xty);
    // rss = yᵀy - βᵀXᵀy, clamped: rounding can push a perfect fit negative.
    let rss = (yty - beta.dot(xty)).max(T::zero());
    gaussian_from_parts(beta, rss, yty, &factor, n)
}

fn gaussian_from_parts<T: Real>(
    beta: DVector<T>,
    rss: T,
    yty: T,
    factor: &SpdFactor<T>,
    n: usize,
) -> Result<GlmFit<T>> {
    let n_t = T::of_usize(n);
    // A residual this small relative to the response scale means an exactly
    // (or numerically) perfect fit; flag rather than report zero variance.
    let degenerate = rss <= T::default_epsilon().powf(T::of_f64(1.5)) * n_t * (yty + T::one());
    let phi = if degenerate { T::zero() } else { rss / n_t };
    let (loglik, covariance) = if degenerate {
        (T::infinity(), factor.inverse() * T::zero())
    } else {
        let half = T::of_f64(0.5);
        let ll = -half * n_t * (T::of_f64(LN_2PI) + phi.ln() + T::one());
        (ll, factor.inverse() * phi)
    };
    Ok(GlmFit {
        family: Family::Gaussian,
        coefficients: beta,
        covariance,
        loglik,
        dispersion: Some(phi),
        n,
        iterations: 0,
    })
}

fn sigmoid<T: Real>(eta: T) -> T {
    if eta >= T::zero() {
        T::one() / (T::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^eta)` without overflow.
fn softplus<T: Real>(eta: T) -> T {
    eta.max(T::zero()) + (-eta.abs()).exp().ln_1p()
}

fn binomial_loglik<T: Real>(y: &DVector<T>, eta: &DVector<T>) -> T {
    let mut ll = T::zero();
    for i in 0..y.len() {
        ll += y[i] * eta[i] - softplus(eta[i]);
    }
    ll
}

/// Logistic regression by Newton steps with step halving. Errors on
/// separation (runaway coefficients) and on non-convergence, in the latter
/// case attaching the log-likelihood trace.
pub fn fit_logistic<T: Real>(
    y: &DVector<T>,
    x: &DMatrix<T>,
    options: &LogisticOptions,
) -> Result<GlmFit<T>> {
    check_shape(y, x)?;
    for i in 0..y.len() {
        if y[i] != T::zero() && y[i] != T::one() {
            return Err(Error::Family(format!(
                "binomial response must be 0/1, found {} at row {i}",
                y[i].as_f64()
            )));
        }
    }
    let n = x.nrows();
    let k = x.ncols();
    let grad_tol = T::of_f64(options.gradient_tol);
    let sep_threshold = T::of_f64(options.separation_threshold);
    let weight_floor = T::of_f64(1e-10);

    let mut beta: DVector<T> = DVector::zeros(k);
    let mut eta: DVector<T> = DVector::zeros(n);
    let mut loglik = binomial_loglik(y, &eta);
    let mut trace = vec![loglik.as_f64()];
    let mut grad_norm = T::infinity();

    let rel_tol = T::of_f64(options.loglik_rel_tol);
    for iter in 1..=options.max_iterations {
        let mu = eta.map(sigmoid);
        let score = x.transpose() * (y - &mu);
        grad_norm = score.amax();
        if grad_norm < grad_tol {
            return logistic_fit_at(x, &eta, beta, loglik, n, iter - 1, weight_floor);
        }

        // Newton direction from the observed information XᵀWX.
        let mut xw = x.clone();
        for i in 0..n {
            let w = (mu[i] * (T::one() - mu[i])).max(weight_floor);
            for j in 0..k {
                xw[(i, j)] *= w;
            }
        }
        let info = x.transpose() * xw;
        let factor = SpdFactor::new(&info).map_err(|col| {
            Error::SingularDesign(format!(
                "weighted Gram pivot collapsed at design column {col}"
            ))
        })?;
        let direction = factor.solve(&score);

        // Step halving keeps the likelihood monotone.
        let previous = loglik;
        let mut step = T::one();
        let mut improved = false;
        for _ in 0..30 {
            let candidate = &beta + &direction * step;
            let cand_eta = x * &candidate;
            let cand_ll = binomial_loglik(y, &cand_eta);
            if cand_ll > loglik {
                beta = candidate;
                eta = cand_eta;
                loglik = cand_ll;
                improved = true;
                break;
            }
            step *= T::of_f64(0.5);
        }
        trace.push(loglik.as_f64());

        if beta.amax() > sep_threshold {
            return Err(Error::Separation {
                max_coef: beta.amax().as_f64(),
                threshold: options.separation_threshold,
                iterations: iter,
            });
        }
        // The likelihood is concave, so a step that gains nothing (or next
        // to nothing) means we sit at its rounding floor: converged, even
        // when the raw score is still above `gradient_tol`.
        if !improved || loglik - previous <= rel_tol * (loglik.abs() + T::one()) {
            return logistic_fit_at(x, &eta, beta, loglik, n, iter, weight_floor);
        }
    }

    Err(Error::NonConvergence {
        iterations: options.max_iterations,
        gradient_norm: grad_norm.as_f64(),
        loglik_trace: trace,
    })
}

fn logistic_fit_at<T: Real>(
    x: &DMatrix<T>,
    eta: &DVector<T>,
    beta: DVector<T>,
    loglik: T,
    n: usize,
    iterations: usize,
    weight_floor: T,
) -> Result<GlmFit<T>> {
    let covariance = observed_information_inverse(x, eta, weight_floor)?;
    Ok(GlmFit {
        family: Family::Binomial,
        coefficients: beta,
        covariance,
        loglik,
        dispersion: None,
        n,
        iterations,
    })
}

fn observed_information_inverse<T: Real>(
    x: &DMatrix<T>,
    eta: &DVector<T>,
    weight_floor: T,
) -> Result<DMatrix<T>> {
    let (n, k) = x.shape();
    let mut xw = x.clone();
    for i in 0..n {
        let mu = sigmoid(eta[i]);
        let w = (mu * (T::one() - mu)).max(weight_floor);
        for j in 0..k {
            xw[(i, j)] *= w;
        }
    }
    let info = x.transpose() * xw;
    let factor = SpdFactor::new(&info).map_err(|col| {
        Error::SingularDesign(format!(
            "weighted Gram pivot collapsed at design column {col}"
        ))
    })?;
    Ok(factor.inverse())
}

/// Log-likelihood of arbitrary coefficients. For the Gaussian family the
/// dispersion is profiled out (`rss(beta) / n`), matching what the fitters
/// report at the MLE.
pub fn loglik_at<T: Real>(
    y: &DVector<T>,
    x: &DMatrix<T>,
    coefficients: &DVector<T>,
    family: Family,
) -> Result<T> {
    if y.len() != x.nrows() || coefficients.len() != x.ncols() {
        return Err(Error::Dimension(
            "loglik_at: response/design/coefficient shapes disagree".into(),
        ));
    }
    let eta = x * coefficients;
    match family {
        Family::Gaussian => {
            let resid = y - eta;
            let rss = resid.dot(&resid);
            let n_t = T::of_usize(y.len());
            if rss == T::zero() {
                return Ok(T::infinity());
            }
            let half = T::of_f64(0.5);
            Ok(-half * n_t * (T::of_f64(LN_2PI) + (rss / n_t).ln() + T::one()))
        }
        Family::Binomial => Ok(binomial_loglik(y, &eta)),
    }
}
