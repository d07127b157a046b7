//! Small numerical helpers shared across the crate.

pub use statrs::function::gamma::ln_gamma;

pub const LN_2PI: f64 = 1.8378770664093453;

/// log(sum(exp(x))) over possibly -inf entries; returns -inf for an empty
/// or all -inf input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return f64::NEG_INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
}

/// log Poisson pmf; handles rate = 0 (point mass at k = 0).
pub fn poisson_logpmf(k: u64, rate: f64) -> f64 {
    if rate == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * rate.ln() - rate - ln_gamma(k as f64 + 1.0)
}

/// Draw an index from unnormalized log weights. Entries equal to -inf are
/// never selected. Panics if every weight is -inf.
pub fn sample_log_categorical<R: rand::Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let total = log_sum_exp(log_weights);
    assert!(
        total.is_finite(),
        "categorical draw over all-zero weights"
    );
    let u: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    let mut last_valid = 0;
    for (i, &lw) in log_weights.iter().enumerate() {
        if lw == f64::NEG_INFINITY {
            continue;
        }
        last_valid = i;
        acc += (lw - total).exp();
        if u < acc {
            return i;
        }
    }
    last_valid
}
