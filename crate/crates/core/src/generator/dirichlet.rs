use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::Rng;

/// Settings for the empirical Dirichlet property check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletCheckConfig {
    pub num_topics: usize,
    /// alpha_i = scales[i] / K^exponent.
    pub exponent: f64,
    pub scales: Vec<f64>,
    pub num_samples: usize,
    /// Coordinates >= K^-c0 count as large; more than c0 ln K of them is a
    /// sparsity violation.
    pub c0: f64,
    /// Tail threshold for P(Y_i > x0).
    pub x0: f64,
    /// Conditioning threshold exponent: coordinates of the conditioning set
    /// must be below K^-c1.
    pub c1: f64,
    /// Size of the conditioning set; defaults to ceil(ln K).
    #[serde(default)]
    pub conditioning_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletCheckResult {
    pub sparsity_violation_rate: f64,
    pub mean_large_coords: f64,
    /// max_i P(Y_i > x0) / min_j P(Y_j > x0); infinite when some tail is empty.
    pub max_tail_prob_ratio: f64,
    /// Largest relative change of P(Y_i > x0) when conditioning on a small
    /// set of coordinates being below K^-c1.
    pub correlation_deviation: f64,
}

/// Draws from Dirichlet(alphas) in log space, which stays accurate for very
/// small alphas where plain Gamma draws underflow to zero.
pub fn sample_dirichlet(alphas: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    let mut logs = Vec::with_capacity(alphas.len());
    for &a in alphas {
        if !(a > 0.0 && a.is_finite()) {
            return Err(invalid(format!("Dirichlet parameter {a} must be positive")));
        }
        // Gamma(a) = Gamma(a + 1) * U^(1/a).
        let g: f64 = Gamma::new(a + 1.0, 1.0)
            .map_err(|e| invalid(format!("gamma draw: {e}")))?
            .sample(rng);
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        logs.push(g.ln() + u.ln() / a);
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut y: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = y.iter().sum();
    y.iter_mut().for_each(|v| *v /= total);
    Ok(y)
}

/// Empirically checks sparsity, tail balance and weak correlation of
/// Dirichlet draws with small parameters.
pub fn dirichlet_property_check(config: &DirichletCheckConfig, rng: &mut Rng) -> Result<DirichletCheckResult> {
    let k = config.num_topics;
    if k < 2 {
        return Err(invalid("the Dirichlet check needs at least two topics"));
    }
    if config.scales.len() != k {
        return Err(invalid(format!("{} scales for {k} topics", config.scales.len())));
    }
    if config.num_samples < 1000 {
        return Err(invalid("the Dirichlet check needs at least 1000 samples"));
    }
    if !(config.x0 > 0.0 && config.x0 < 1.0) || !config.exponent.is_finite() {
        return Err(invalid("x0 must lie in (0, 1) and the exponent must be finite"));
    }
    let kf = k as f64;
    let alphas: Vec<f64> = config.scales.iter().map(|c| c / kf.powf(config.exponent)).collect();
    let large = kf.powf(-config.c0);
    let allowed = config.c0 * kf.ln();
    let small = kf.powf(-config.c1);
    let set_size = config
        .conditioning_size
        .unwrap_or_else(|| kf.ln().ceil() as usize)
        .clamp(1, k - 1);

    let mut violations = 0usize;
    let mut large_total = 0usize;
    let mut tails = vec![0usize; k];
    let mut cond_tails = vec![0usize; k];
    let mut cond_count = 0usize;
    for _ in 0..config.num_samples {
        let y = sample_dirichlet(&alphas, rng)?;
        let n_large = y.iter().filter(|&&v| v >= large).count();
        large_total += n_large;
        if n_large as f64 > allowed {
            violations += 1;
        }
        let conditioned = y[..set_size].iter().all(|&v| v < small);
        if conditioned {
            cond_count += 1;
        }
        for (i, &v) in y.iter().enumerate() {
            if v > config.x0 {
                tails[i] += 1;
                if conditioned {
                    cond_tails[i] += 1;
                }
            }
        }
    }
    let n = config.num_samples as f64;
    let hi = tails.iter().copied().max().unwrap_or(0) as f64;
    let lo = tails.iter().copied().min().unwrap_or(0) as f64;
    let max_tail_prob_ratio = if lo > 0.0 { hi / lo } else { f64::INFINITY };

    let mut correlation_deviation = 0.0f64;
    if cond_count > 0 {
        for i in set_size..k {
            let base = tails[i] as f64 / n;
            if base > 0.0 {
                let cond = cond_tails[i] as f64 / cond_count as f64;
                correlation_deviation = correlation_deviation.max((cond / base - 1.0).abs());
            }
        }
    } else {
        correlation_deviation = f64::INFINITY;
    }

    Ok(DirichletCheckResult {
        sparsity_violation_rate: violations as f64 / n,
        mean_large_coords: large_total as f64 / n,
        max_tail_prob_ratio,
        correlation_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn draws_are_on_the_simplex() {
        let mut r = rng::seeded(1);
        let y = sample_dirichlet(&[1e-3, 1e-3, 2.0], &mut r).unwrap();
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(y.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn flat_dirichlet_marginal_mean() {
        // Dirichlet(1,1,1): each coordinate has mean 1/3 and P(Y > 1/2) = 1/4.
        let mut r = rng::seeded(2);
        let n = 20_000;
        let mut mean = 0.0;
        let mut tail = 0.0;
        for _ in 0..n {
            let y = sample_dirichlet(&[1.0, 1.0, 1.0], &mut r).unwrap();
            mean += y[0];
            tail += f64::from(u8::from(y[1] > 0.5));
        }
        assert!((mean / n as f64 - 1.0 / 3.0).abs() < 0.01);
        assert!((tail / n as f64 - 0.25).abs() < 0.01);
    }

    #[test]
    fn rejects_degenerate_alpha() {
        let mut r = rng::seeded(0);
        assert!(sample_dirichlet(&[0.0, 1.0], &mut r).is_err());
        let cfg = DirichletCheckConfig {
            num_topics: 3,
            exponent: 1.0,
            scales: vec![1.0, f64::NAN, 1.0],
            num_samples: 1000,
            c0: 2.0,
            x0: 0.1,
            c1: 2.0,
            conditioning_size: None,
        };
        assert!(dirichlet_property_check(&cfg, &mut r).is_err());
    }
}
