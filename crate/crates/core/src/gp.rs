//! Gaussian-process regression for surrogate modeling of the objective and
//! constraint functions.
//!
//! Inputs are design vectors normalized to [0, 1] per dimension (see
//! [`encode_config`]); targets are standardized to zero mean and unit
//! variance per fit. Kernel hyper-parameters are chosen by maximizing the log
//! marginal likelihood with a seeded multi-start pattern search in log space,
//! followed by a ±20% polish so the returned optimum is locally optimal at
//! that scale. Factorization retries with jitter escalating 1e-10 → 1e-4 in
//! ×10 steps and fails loudly beyond.

use crate::cascade::CascadeConfig;
use crate::error::{Error, Result};
use crate::space::DesignSpace;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

const SQRT5: f64 = 2.236_067_977_499_79;
const JITTER_FIRST: f64 = 1e-10;
const JITTER_LAST: f64 = 1e-4;

/// Covariance function family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    Matern52,
    SquaredExponential,
}

/// Kernel hyper-parameters, in standardized-target space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub family: KernelFamily,
    pub signal_variance: f64,
    pub length_scales: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !self.signal_variance.is_finite() || self.signal_variance < 0.0 {
            return Err(Error::Argument("signal_variance must be finite and >= 0".into()));
        }
        if !self.noise_variance.is_finite() || self.noise_variance < 0.0 {
            return Err(Error::Argument("noise_variance must be finite and >= 0".into()));
        }
        if self.length_scales.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return Err(Error::Argument("length_scales must be finite and > 0".into()));
        }
        Ok(())
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for ((&x, &y), &l) in a.iter().zip(b).zip(&self.length_scales) {
            let d = (x - y) / l;
            r2 += d * d;
        }
        match self.family {
            KernelFamily::SquaredExponential => self.signal_variance * (-0.5 * r2).exp(),
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                self.signal_variance
                    * (1.0 + SQRT5 * r + (5.0 / 3.0) * r2)
                    * (-SQRT5 * r).exp()
            }
        }
    }
}

/// Whether the observation-noise variance is fitted or pinned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSetting {
    Fixed(f64),
    Fitted,
}

/// Fit configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub family: KernelFamily,
    /// Random restarts on top of the default start.
    pub restarts: usize,
    pub seed: u64,
    pub noise: NoiseSetting,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            family: KernelFamily::Matern52,
            restarts: 1,
            seed: 0,
            noise: NoiseSetting::Fitted,
        }
    }
}

/// A fitted Gaussian-process model.
#[derive(Debug)]
pub struct GpModel {
    x: Vec<Vec<f64>>,
    params: KernelParams,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y_mean: f64,
    y_scale: f64,
    jitter: f64,
    lml: f64,
    /// Posterior-variance clamps larger than 1e-8, for diagnostics.
    clamp_events: AtomicU64,
}

impl GpModel {
    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn input_dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn training_len(&self) -> usize {
        self.x.len()
    }

    /// Jitter the final factorization needed, 0 when none.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Prior variance in original target units (what predictions revert to
    /// far from the data).
    pub fn prior_variance(&self) -> f64 {
        self.params.signal_variance * self.y_scale * self.y_scale
    }

    pub fn prior_mean(&self) -> f64 {
        self.y_mean
    }

    /// How many posterior variances were clamped up to zero by more than 1e-8.
    pub fn variance_clamp_events(&self) -> u64 {
        self.clamp_events.load(Ordering::Relaxed)
    }

    /// Fits hyper-parameters by maximizing log marginal likelihood.
    /// Deterministic for a fixed seed.
    pub fn fit(x: &[Vec<f64>], y: &[f64], options: &FitOptions) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::Argument(format!(
                "GP fit needs at least 2 observations, got {}",
                x.len()
            )));
        }
        if x.len() != y.len() {
            return Err(Error::Argument(format!(
                "{} inputs for {} targets",
                x.len(),
                y.len()
            )));
        }
        let dim = x[0].len();
        if dim == 0 {
            return Err(Error::Argument("GP inputs must have at least one dimension".into()));
        }
        if x.iter().any(|r| r.len() != dim) {
            return Err(Error::Argument("ragged input rows".into()));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("non-finite training data".into()));
        }

        let n = y.len() as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
        let y_scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let y_std: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();

        let noise_fitted = matches!(options.noise, NoiseSetting::Fitted);
        // log-space parameter vector: [ln sv, ln ls_1.., (ln noise)]
        let lo_hi = |i: usize| -> (f64, f64) {
            if i == 0 {
                ((1e-3f64).ln(), (1e3f64).ln())
            } else if i <= dim {
                ((1e-2f64).ln(), (1e2f64).ln())
            } else {
                ((1e-8f64).ln(), 1.0f64.ln())
            }
        };
        let n_hyper = 1 + dim + usize::from(noise_fitted);
        let to_params = |theta: &[f64]| -> KernelParams {
            KernelParams {
                family: options.family,
                signal_variance: theta[0].exp(),
                length_scales: theta[1..=dim].iter().map(|t| t.exp()).collect(),
                noise_variance: match options.noise {
                    NoiseSetting::Fixed(v) => v,
                    NoiseSetting::Fitted => theta[dim + 1].exp(),
                },
            }
        };
        let objective = |theta: &[f64]| -> f64 {
            match factorize(x, &y_std, &to_params(theta)) {
                Ok(f) => f.lml,
                Err(_) => f64::NEG_INFINITY,
            }
        };

        let mut default_start = vec![0.0; n_hyper]; // sv = 1
        for t in default_start.iter_mut().take(dim + 1).skip(1) {
            *t = 0.5f64.ln();
        }
        if noise_fitted {
            default_start[dim + 1] = (1e-4f64).ln();
        }

        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let mut starts = vec![default_start];
        for _ in 0..options.restarts {
            let s: Vec<f64> = (0..n_hyper)
                .map(|i| {
                    let (lo, hi) = lo_hi(i);
                    rng.gen_range(lo..=hi)
                })
                .collect();
            starts.push(s);
        }

        let mut best_theta: Option<Vec<f64>> = None;
        let mut best_value = f64::NEG_INFINITY;
        for start in &starts {
            let (theta, value) = pattern_search(start, &objective, &lo_hi, 80);
            if value > best_value {
                best_value = value;
                best_theta = Some(theta);
            }
        }
        let mut theta = best_theta
            .ok_or_else(|| Error::Numerical("no usable kernel hyper-parameters found".into()))?;

        // ±20% polish: accept any improving multiplicative-1.2 move so the
        // returned optimum is locally optimal at that perturbation size.
        let polish_step = 1.2f64.ln();
        let mut value = objective(&theta);
        'polish: for _ in 0..20 {
            for d in 0..n_hyper {
                for sign in [1.0, -1.0] {
                    let mut cand = theta.clone();
                    cand[d] += sign * polish_step;
                    let v = objective(&cand);
                    if v > value + 1e-12 {
                        theta = cand;
                        value = v;
                        continue 'polish;
                    }
                }
            }
            break;
        }

        let params = to_params(&theta);
        let fact = factorize(x, &y_std, &params)?;
        Ok(Self {
            x: x.to_vec(),
            params,
            chol: fact.chol,
            alpha: fact.alpha,
            y_mean,
            y_scale,
            jitter: fact.jitter,
            lml: fact.lml,
            clamp_events: AtomicU64::new(0),
        })
    }

    /// Builds a model with the given kernel hyper-parameters, skipping the
    /// marginal-likelihood search. Used to refresh the factorization with new
    /// data between full refits.
    pub fn with_params(x: &[Vec<f64>], y: &[f64], params: &KernelParams) -> Result<Self> {
        if x.len() < 2 || x.len() != y.len() {
            return Err(Error::Argument("need >= 2 matching observations".into()));
        }
        let dim = x[0].len();
        if dim == 0 || x.iter().any(|r| r.len() != dim) {
            return Err(Error::Argument("inputs must be non-empty and rectangular".into()));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("non-finite training data".into()));
        }
        if params.length_scales.len() != dim {
            return Err(Error::Argument(format!(
                "{} length scales for {dim}-dimensional inputs",
                params.length_scales.len()
            )));
        }
        let n = y.len() as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
        let y_scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let y_std: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();
        let fact = factorize(x, &y_std, params)?;
        Ok(Self {
            x: x.to_vec(),
            params: params.clone(),
            chol: fact.chol,
            alpha: fact.alpha,
            y_mean,
            y_scale,
            jitter: fact.jitter,
            lml: fact.lml,
            clamp_events: AtomicU64::new(0),
        })
    }

    /// Posterior mean and variance at `x`, de-standardized to original target
    /// units. Variance is clamped at zero after floating-point cancellation.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.input_dim() {
            return Err(Error::Argument(format!(
                "query has {} dimensions, model has {}",
                x.len(),
                self.input_dim()
            )));
        }
        let k_star = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| self.params.kernel(xi, x)),
        );
        let mean_std = k_star.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k_star)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let k_xx = self.params.kernel(x, x);
        let raw = k_xx - v.norm_squared();
        if raw < -1e-8 {
            self.clamp_events.fetch_add(1, Ordering::Relaxed);
        }
        let var_std = raw.max(0.0);
        Ok((
            self.y_mean + self.y_scale * mean_std,
            self.y_scale * self.y_scale * var_std,
        ))
    }

    /// Log marginal likelihood of the standardized targets under the fitted
    /// kernel.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }
}

struct Factorized {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    lml: f64,
    jitter: f64,
}

/// Builds K + (noise + jitter)·I and factorizes, escalating jitter on failure.
fn factorize(x: &[Vec<f64>], y_std: &[f64], params: &KernelParams) -> Result<Factorized> {
    params.validate()?;
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = params.kernel(&x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    for i in 0..n {
        k[(i, i)] += params.noise_variance;
    }

    let mut jitter = 0.0;
    loop {
        let mut kj = k.clone();
        if jitter > 0.0 {
            for i in 0..n {
                kj[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(kj) {
            let y = DVector::from_column_slice(y_std);
            let alpha = chol.solve(&y);
            let log_det: f64 = (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
            let lml = -0.5 * y.dot(&alpha)
                - 0.5 * log_det
                - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            if !lml.is_finite() {
                return Err(Error::Numerical("non-finite log marginal likelihood".into()));
            }
            return Ok(Factorized { chol, alpha, lml, jitter });
        }
        jitter = if jitter == 0.0 { JITTER_FIRST } else { jitter * 10.0 };
        if jitter > JITTER_LAST {
            return Err(Error::Numerical(format!(
                "kernel matrix not positive definite even with jitter {JITTER_LAST}"
            )));
        }
    }
}

/// Coordinate pattern search maximizing `objective` within per-dimension
/// bounds; `budget` caps objective evaluations.
fn pattern_search(
    start: &[f64],
    objective: &dyn Fn(&[f64]) -> f64,
    bounds: &dyn Fn(usize) -> (f64, f64),
    budget: usize,
) -> (Vec<f64>, f64) {
    let mut theta = start.to_vec();
    let mut value = objective(&theta);
    let mut evals = 1;
    let mut step = 0.4;
    while step >= 0.04 && evals < budget {
        let mut improved = false;
        for d in 0..theta.len() {
            let (lo, hi) = bounds(d);
            for sign in [1.0, -1.0] {
                if evals >= budget {
                    break;
                }
                let cand_v = (theta[d] + sign * step).clamp(lo, hi);
                if cand_v == theta[d] {
                    continue;
                }
                let mut cand = theta.clone();
                cand[d] = cand_v;
                let v = objective(&cand);
                evals += 1;
                if v > value {
                    theta = cand;
                    value = v;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (theta, value)
}

/// Maps a design point into [0, 1]^dim: each architecture hyper-parameter is
/// scaled affinely from its range, threshold dimensions pass through
/// unchanged. The encoding is injective on the lattice.
pub fn encode_config(config: &CascadeConfig, space: &DesignSpace) -> Result<Vec<f64>> {
    if config.stages() != space.stages() {
        return Err(Error::Argument(format!(
            "config has {} stages, design space has {}",
            config.stages(),
            space.stages()
        )));
    }
    let mut out = Vec::new();
    for (slot, params) in config.slots.iter().enumerate() {
        let values = space.flatten(slot, params)?;
        for (dim, v) in space.slot_dimensions(slot).iter().zip(values) {
            let span = f64::from(dim.range.max - dim.range.min);
            out.push(if span > 0.0 {
                f64::from(v - dim.range.min) / span
            } else {
                0.0
            });
        }
    }
    for &t in &config.thresholds {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Argument(format!("threshold {t} outside [0,1]")));
        }
        out.push(t);
    }
    Ok(out)
}
