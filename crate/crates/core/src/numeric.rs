//! Small numeric helpers: compensated summation, the shared θ grid, and the
//! standard normal distribution functions used by the acquisition terms.

use crate::error::{Error, Result};

/// Neumaier-compensated sum. Used wherever two evaluation routes must agree
/// to 1e-12 regardless of accumulation order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// The θ lattice value at `index` for a grid of `resolution` points on [0, 1].
///
/// Every component of the crate goes through this single definition so that
/// grid points compare bit-equal across proposals, sweeps, and baselines.
pub fn theta_value(index: usize, resolution: usize) -> f64 {
    debug_assert!(resolution >= 2 && index < resolution);
    index as f64 / (resolution - 1) as f64
}

/// The full θ grid {0, 1/(T−1), …, 1}.
pub fn theta_grid(resolution: usize) -> Result<Vec<f64>> {
    if resolution < 2 {
        return Err(Error::Argument(format!(
            "theta grid resolution must be >= 2, got {resolution}"
        )));
    }
    Ok((0..resolution).map(|i| theta_value(i, resolution)).collect())
}

/// Standard normal density φ(z).
pub fn std_normal_pdf(z: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF Φ(z).
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}
