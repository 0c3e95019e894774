//! Spherical averages of norms and their concentration.
//!
//! Monte Carlo estimators here sample the uniform measure on `S^{n-1}` (or
//! standard Gaussian vectors) in fixed-size chunks on derived streams, so
//! every figure is reproducible from the seed alone.

use std::collections::BTreeMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{check_dim, invalid, Result};
use crate::norms::{comparison_constants, NormSpec};
use crate::random::{chunked, sample_gaussian_vector, sample_sphere, RandomSource};
use crate::stats::{covariance, median, Estimate};

/// Mean/median of `‖·‖` over the uniform measure on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereStatistics {
    pub mean: f64,
    pub median: f64,
    pub stderr: f64,
    pub samples: usize,
    /// Lipschitz constant of the norm on the sphere (= `b_upper`).
    pub lipschitz: f64,
}

/// Monte Carlo mean and median of `‖θ‖` for uniform `θ ∈ S^{n-1}`.
pub fn estimate_sphere_mean(
    spec: &NormSpec,
    n: usize,
    samples: usize,
    rng: &mut RandomSource,
) -> Result<SphereStatistics> {
    check_dim(spec.dim(), n)?;
    if samples < 2 {
        return Err(invalid("need at least 2 samples"));
    }
    let lipschitz = comparison_constants(spec)?.b_upper;
    let values = chunked(rng, samples, |r, len| {
        (0..len).map(|_| spec.eval(&sample_sphere(n, r))).collect()
    });
    let est = Estimate::from_samples(&values);
    Ok(SphereStatistics {
        mean: est.mean,
        median: median(&values),
        stderr: est.stderr,
        samples,
        lipschitz,
    })
}

/// Levy's bound `2·exp(−ε²n / (2L²))` on `μ{|f − E f| > ε}` for an
/// `L`-Lipschitz `f` on `S^{n-1}`.
pub fn levy_tail_bound(eps: f64, n: usize, lipschitz: f64) -> Result<f64> {
    if !(eps > 0.0) || !(lipschitz > 0.0) || n == 0 {
        return Err(invalid("levy bound needs eps > 0, L > 0 and n >= 1"));
    }
    Ok(2.0 * (-eps * eps * n as f64 / (2.0 * lipschitz * lipschitz)).exp())
}

/// How the tail is centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Center {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub fraction: f64,
    /// Binomial standard deviation of `fraction`.
    pub sigma: f64,
    pub center: f64,
    pub samples: usize,
    /// Fewer than 10 events observed; the fraction resolves poorly.
    pub low_resolution: bool,
}

/// Fraction of sphere samples with `|‖x‖ − center| > eps`. The center is
/// estimated first on an independent stream with the same sample budget.
pub fn empirical_tail(
    spec: &NormSpec,
    n: usize,
    eps: f64,
    samples: usize,
    rng: &mut RandomSource,
    center: Center,
) -> Result<TailEstimate> {
    if !(eps > 0.0) {
        return Err(invalid("eps must be positive"));
    }
    let mut center_rng = rng.fork();
    let stats = estimate_sphere_mean(spec, n, samples, &mut center_rng)?;
    let c = match center {
        Center::Mean => stats.mean,
        Center::Median => stats.median,
    };
    let hits = chunked(rng, samples, |r, len| {
        (0..len)
            .map(|_| (spec.eval(&sample_sphere(n, r)) - c).abs() > eps)
            .collect()
    })
    .into_iter()
    .filter(|&h| h)
    .count();
    let fraction = hits as f64 / samples as f64;
    Ok(TailEstimate {
        fraction,
        sigma: (fraction * (1.0 - fraction) / samples as f64).sqrt(),
        center: c,
        samples,
        low_resolution: hits < 10,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub ratio: f64,
    /// Delta-method standard error of the ratio.
    pub stderr: f64,
    pub numerator: Estimate,
    pub denominator: Estimate,
}

/// `E‖g‖ / E‖g‖₂` for a standard Gaussian `g`; equals the spherical mean of
/// `‖·‖` because `g/‖g‖₂` and `‖g‖₂` are independent.
pub fn gaussian_norm_ratio_mean(
    spec: &NormSpec,
    n: usize,
    samples: usize,
    rng: &mut RandomSource,
) -> Result<RatioEstimate> {
    check_dim(spec.dim(), n)?;
    if samples < 2 {
        return Err(invalid("need at least 2 samples"));
    }
    let pairs = chunked(rng, samples, |r, len| {
        (0..len)
            .map(|_| {
                let g = sample_gaussian_vector(n, r);
                (spec.eval(&g), g.iter().map(|x| x * x).sum::<f64>().sqrt())
            })
            .collect()
    });
    let (num, den): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let numerator = Estimate::from_samples(&num);
    let denominator = Estimate::from_samples(&den);
    let ratio = numerator.mean / denominator.mean;
    let var_x = numerator.stderr.powi(2) * samples as f64;
    let var_y = denominator.stderr.powi(2) * samples as f64;
    let cov = covariance(&num, &den);
    let var_r = (var_x - 2.0 * ratio * cov + ratio * ratio * var_y).max(0.0)
        / (denominator.mean * denominator.mean)
        / samples as f64;
    Ok(RatioEstimate {
        ratio,
        stderr: var_r.sqrt(),
        numerator,
        denominator,
    })
}

/// Monte Carlo estimate of `E max_{i≤m} |gᵢ|`.
pub fn expected_max_abs_gaussian(m: usize, samples: usize, rng: &mut RandomSource) -> Result<Estimate> {
    if m == 0 || samples < 2 {
        return Err(invalid("need m >= 1 and samples >= 2"));
    }
    let values = chunked(rng, samples, |r, len| {
        (0..len)
            .map(|_| (0..m).fold(0.0, |acc: f64, _| acc.max(r.gaussian().abs())))
            .collect()
    });
    Ok(Estimate::from_samples(&values))
}

/// `E max_{i≤m} |gᵢ| = ∫₀^∞ 1 − erf(t/√2)^m dt` by composite Simpson.
///
/// The integrand is evaluated as `−expm1(m·ln1p(−erfc(t/√2)))` to keep full
/// precision in the tail.
pub fn expected_max_abs_gaussian_quadrature(m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let mf = m as f64;
    let integrand = |t: f64| -> f64 {
        let tail = erfc(t / std::f64::consts::SQRT_2);
        -(mf * (-tail).ln_1p()).exp_m1()
    };
    let upper = 12.0 + (2.0 * mf.ln().max(0.0)).sqrt();
    let steps = 20_000;
    let h = upper / steps as f64;
    let mut s = integrand(0.0) + integrand(upper);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * integrand(i as f64 * h);
    }
    s * h / 3.0
}

fn gaussian_max_table() -> &'static Mutex<BTreeMap<usize, f64>> {
    static TABLE: OnceLock<Mutex<BTreeMap<usize, f64>>> = OnceLock::new();
    TABLE.get_or_init(|| Mutex::new(BTreeMap::new()))
}

/// Cached [`expected_max_abs_gaussian_quadrature`].
pub fn expected_max_abs_gaussian_cached(m: usize) -> f64 {
    let mut table = gaussian_max_table().lock().expect("table lock poisoned");
    *table
        .entry(m)
        .or_insert_with(|| expected_max_abs_gaussian_quadrature(m))
}

/// `(1/2e) · E max_{i≤⌊n/2⌋}|gᵢ| / √n`: a lower bound on the spherical mean
/// of any norm whose unit ball has `B₂ⁿ` as maximal inscribed ellipsoid.
pub fn milman_lower_bound_e(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid("need n >= 2"));
    }
    let top = expected_max_abs_gaussian_cached(n / 2);
    Ok(top / (2.0 * std::f64::consts::E) / (n as f64).sqrt())
}
