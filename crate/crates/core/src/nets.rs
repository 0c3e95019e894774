//! ε-nets on unit spheres.
//!
//! Nets are built by randomized greedy packing: uniform candidates are kept
//! when they are at distance at least ε from every kept point. The output is
//! always ε-separated, so the volumetric argument caps its size at
//! `(1 + 2/ε)^k`. Maximality (and hence covering) is only approximate and is
//! checked separately with [`verify_covering`].
//!
//! ## Amplification
//!
//! If a norm satisfies `B ≤ ‖x‖ ≤ A` on an ε-net of the unit sphere of a
//! subspace `V`, then for every unit `y ∈ V`:
//!
//! * write `y = x + r` with `x` in the net and `‖r‖₂ ≤ ε`; with
//!   `M = max_{V∩S} ‖·‖` homogeneity gives `‖r‖ ≤ εM`, hence
//!   `M ≤ A + εM`, i.e. `M ≤ A/(1−ε)`;
//! * likewise `‖y‖ ≥ ‖x‖ − ‖r‖ ≥ B − ε·A/(1−ε)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::random::{chunked, sample_sphere, RandomSource};

/// Stopping rule for greedy net construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetBudget {
    /// Stop after this many consecutive rejected candidates.
    Consecutive(usize),
    /// Stop after `factor × current size` consecutive rejections.
    PerPoint(usize),
}

impl Default for NetBudget {
    fn default() -> Self {
        NetBudget::PerPoint(200)
    }
}

impl NetBudget {
    fn exhausted(&self, rejections: usize, size: usize) -> bool {
        match *self {
            NetBudget::Consecutive(b) => rejections >= b.max(1),
            NetBudget::PerPoint(f) => rejections >= f.max(1) * size.max(1),
        }
    }
}

/// A finite ε-separated point set on `S^{k-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsNet {
    pub k: usize,
    pub eps: f64,
    pub points: Vec<Vec<f64>>,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    /// Candidate draws used during construction.
    #[serde(default)]
    pub construction_budget: usize,
}

impl EpsNet {
    /// The exact angular net on `S¹` with `count` equally spaced points.
    /// Its covering radius is `2·sin(π/(2·count))`.
    pub fn circle(count: usize, eps: f64) -> Self {
        let points = (0..count)
            .map(|j| {
                let t = std::f64::consts::TAU * j as f64 / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        EpsNet {
            k: 2,
            eps,
            points,
            seed: 0,
            stream: 0,
            construction_budget: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest pairwise Euclidean distance (∞ for fewer than two points).
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                best = best.min(d.sqrt());
            }
        }
        best
    }

    /// Euclidean distance from a unit vector to the nearest net point.
    pub fn nearest_distance(&self, x: &[f64]) -> f64 {
        let best = self
            .points
            .iter()
            .map(|p| p.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        (2.0 - 2.0 * best).max(0.0).sqrt()
    }
}

/// `(1 + 2/ε)^k`, the packing bound on an ε-separated subset of `S^{k-1}`.
pub fn cardinality_bound(k: usize, eps: f64) -> f64 {
    (1.0 + 2.0 / eps).powi(k as i32)
}

/// Greedy randomized packing on `S^{k-1}`.
pub fn build_net(k: usize, eps: f64, budget: NetBudget, rng: &mut RandomSource) -> Result<EpsNet> {
    build_net_limited(k, eps, budget, usize::MAX, rng)
}

/// [`build_net`] that gives up with [`Error::SizeLimit`] once the net would
/// exceed `max_points`.
pub fn build_net_limited(
    k: usize,
    eps: f64,
    budget: NetBudget,
    max_points: usize,
    rng: &mut RandomSource,
) -> Result<EpsNet> {
    if k == 0 {
        return Err(invalid("net dimension k must be at least 1"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must lie in (0,1), got {eps}")));
    }
    let seed = rng.master_seed();
    let stream = rng.stream_id();
    // |x - y| >= eps  <=>  <x, y> <= 1 - eps^2/2 for unit vectors.
    let threshold = 1.0 - 0.5 * eps * eps;
    let mut flat: Vec<f64> = Vec::new();
    let mut count = 0usize;
    let mut rejections = 0usize;
    let mut draws = 0usize;
    while !budget.exhausted(rejections, count) {
        let x = sample_sphere(k, rng);
        draws += 1;
        let covered = flat
            .chunks_exact(k)
            .any(|p| p.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() > threshold);
        if covered {
            rejections += 1;
        } else {
            if count == max_points {
                return Err(Error::SizeLimit(format!(
                    "net on S^{} at eps={eps} exceeds {max_points} points",
                    k - 1
                )));
            }
            flat.extend_from_slice(&x);
            count += 1;
            rejections = 0;
        }
    }
    Ok(EpsNet {
        k,
        eps,
        points: flat.chunks_exact(k).map(<[f64]>::to_vec).collect(),
        seed,
        stream,
        construction_budget: draws,
    })
}

/// Statistical covering check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringReport {
    pub max_observed_distance: f64,
    pub fraction_within_eps: f64,
    pub trials: usize,
}

/// Sample `trials` uniform points and measure their distance to the net.
pub fn verify_covering(net: &EpsNet, trials: usize, rng: &mut RandomSource) -> Result<CoveringReport> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if net.is_empty() {
        return Err(invalid("cannot verify an empty net"));
    }
    let distances = chunked(rng, trials, |r, len| {
        (0..len)
            .map(|_| net.nearest_distance(&sample_sphere(net.k, r)))
            .collect()
    });
    let within = distances.par_iter().filter(|&&d| d <= net.eps).count();
    Ok(CoveringReport {
        max_observed_distance: distances.iter().cloned().fold(0.0, f64::max),
        fraction_within_eps: within as f64 / trials as f64,
        trials,
    })
}

/// Interval certified for the whole unit sphere of a subspace from bounds on
/// an ε-net of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedInterval {
    pub lo: f64,
    pub hi: f64,
}

impl CertifiedInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }

    /// `hi / lo` (∞ when `lo = 0`).
    pub fn distortion(&self) -> f64 {
        if self.lo > 0.0 {
            self.hi / self.lo
        } else {
            f64::INFINITY
        }
    }
}

/// Successive approximation: from `net_min ≤ ‖x‖ ≤ net_max` on an ε-net,
/// `hi = net_max/(1−ε)` and `lo = max(0, net_min − ε·hi)` hold on the whole
/// sphere of the subspace.
pub fn amplify_net_bounds(net_min: f64, net_max: f64, eps: f64) -> Result<CertifiedInterval> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must lie in (0,1), got {eps}")));
    }
    if !(net_min >= 0.0) || net_min > net_max {
        return Err(invalid(format!(
            "need 0 <= net_min <= net_max, got [{net_min}, {net_max}]"
        )));
    }
    let hi = net_max / (1.0 - eps);
    let lo = (net_min - eps * hi).max(0.0);
    Ok(CertifiedInterval { lo, hi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::NormSpec;
    use crate::random::sample_subspace;

    #[test]
    fn zero_sphere_net_has_both_points() {
        let net = build_net(1, 0.5, NetBudget::Consecutive(100), &mut RandomSource::new(1, 0)).unwrap();
        assert_eq!(net.len(), 2);
        assert!(net.points.iter().all(|p| p[0].abs() == 1.0));
        assert!(net.len() as f64 <= cardinality_bound(1, 0.5));
        let report = verify_covering(&net, 50, &mut RandomSource::new(2, 0)).unwrap();
        assert_eq!(report.max_observed_distance, 0.0);
        assert_eq!(report.fraction_within_eps, 1.0);
    }

    #[test]
    fn circle_net_size_between_packing_bounds() {
        let eps = 0.2;
        let net = build_net(2, eps, NetBudget::default(), &mut RandomSource::new(3, 0)).unwrap();
        // Exact packing on the circle: consecutive points of a maximal
        // eps-separated set are between theta and 2 theta apart in angle,
        // theta = 2 asin(eps/2), so its size lies in [pi/theta, 2 pi/theta].
        let theta = 2.0 * (eps / 2.0).asin();
        let max_pack = (std::f64::consts::TAU / theta).floor();
        assert!(net.len() as f64 <= max_pack);
        assert!(net.len() as f64 <= cardinality_bound(2, eps));
        assert!(net.len() as f64 >= (std::f64::consts::PI / theta).ceil(), "{}", net.len());
        assert!(net.min_separation() >= eps - 1e-12);
    }

    #[test]
    fn five_dim_net_respects_volume_bound() {
        let net = build_net(5, 0.5, NetBudget::PerPoint(50), &mut RandomSource::new(4, 0)).unwrap();
        assert!(net.len() as f64 <= 3125.0);
        assert!(net.min_separation() >= 0.5 - 1e-12);
        for p in &net.points {
            let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn size_limit_is_reported() {
        let err = build_net_limited(6, 0.3, NetBudget::default(), 10, &mut RandomSource::new(5, 0)).unwrap_err();
        assert!(matches!(err, Error::SizeLimit(_)));
    }

    #[test]
    fn cardinality_bound_values() {
        assert_eq!(cardinality_bound(1, 1.0), 3.0);
        assert_eq!(cardinality_bound(0, 0.3), 1.0);
        assert_eq!(cardinality_bound(3, 0.5), 125.0);
    }

    #[test]
    fn exact_circle_net_covers() {
        // 32 points: covering radius 2 sin(pi/64) ~ 0.098 < 0.1
        let net = EpsNet::circle(32, 0.1);
        let r = verify_covering(&net, 10_000, &mut RandomSource::new(6, 0)).unwrap();
        assert_eq!(r.fraction_within_eps, 1.0);
        assert!(r.max_observed_distance <= 2.0 * (std::f64::consts::PI / 64.0).sin() + 1e-12);
    }

    #[test]
    fn punctured_net_is_caught() {
        let mut net = EpsNet::circle(32, 0.1);
        net.points.remove(7);
        let r = verify_covering(&net, 10_000, &mut RandomSource::new(7, 0)).unwrap();
        assert!(r.fraction_within_eps < 1.0);
    }

    #[test]
    fn amplification_formula() {
        let i = amplify_net_bounds(1.0, 1.0, 0.1).unwrap();
        assert!((i.hi - 1.0 / 0.9).abs() < 1e-15);
        assert!((i.lo - (1.0 - 0.1 / 0.9)).abs() < 1e-15);

        let i = amplify_net_bounds(0.95, 1.05, 0.25).unwrap();
        assert!((i.hi - 1.4).abs() < 1e-14);
        assert!((i.lo - 0.6).abs() < 1e-14);

        let i = amplify_net_bounds(2.0, 2.0, 1e-9).unwrap();
        assert!((i.lo - 2.0).abs() < 1e-8 && (i.hi - 2.0).abs() < 1e-8);

        assert!(amplify_net_bounds(1.1, 1.0, 0.1).is_err());
        assert!(amplify_net_bounds(0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn amplification_contains_grid_extrema() {
        // Brute force: true extrema over a fine grid of a planar section must
        // land inside the interval amplified from an exact circle net.
        let mut rng = RandomSource::new(8, 0);
        let norms = [NormSpec::l1(6), NormSpec::lp(3.0, 6), NormSpec::linf(6), NormSpec::lp(1.5, 6)];
        for trial in 0..100 {
            let spec = &norms[trial % norms.len()];
            let frame = sample_subspace(6, 2, &mut rng).unwrap();
            let count = 8 + trial % 24;
            let eps = 2.0 * (std::f64::consts::PI / (2.0 * count as f64)).sin() + 1e-12;
            let net = EpsNet::circle(count, eps);
            let values: Vec<f64> = net.points.iter().map(|p| spec.eval(&frame.apply(p))).collect();
            let (b, a) = values.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
            let interval = amplify_net_bounds(b, a, eps).unwrap();
            for j in 0..10_000 {
                let t = std::f64::consts::TAU * j as f64 / 10_000.0;
                let v = spec.eval(&frame.apply(&[t.cos(), t.sin()]));
                assert!(interval.contains(v), "trial {trial}: {v} not in {interval:?}");
            }
        }
    }

    #[test]
    fn amplification_monotonicity() {
        let base = amplify_net_bounds(0.8, 1.0, 0.2).unwrap();
        let bigger_a = amplify_net_bounds(0.8, 1.2, 0.2).unwrap();
        let bigger_eps = amplify_net_bounds(0.8, 1.0, 0.3).unwrap();
        assert!(bigger_a.hi >= base.hi);
        assert!(bigger_eps.hi >= base.hi);
        assert!(bigger_eps.lo <= base.lo);
    }

    #[test]
    fn net_json_has_documented_fields() {
        let net = EpsNet::circle(4, 0.5);
        let v: serde_json::Value = serde_json::to_value(&net).unwrap();
        for key in ["k", "eps", "points", "seed"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: EpsNet = serde_json::from_value(v).unwrap();
        assert_eq!(back, net);
    }
}
