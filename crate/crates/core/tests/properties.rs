//! Randomized invariants for norms, frames and nets.

use dvoretzky::nets::{amplify_net_bounds, build_net, cardinality_bound, NetBudget};
use dvoretzky::norms::{comparison_constants, figiel_norm_spec, norm_eval};
use dvoretzky::random::{sample_subspace, RandomSource};
use dvoretzky::NormSpec;
use proptest::prelude::*;

fn norm_strategy() -> impl Strategy<Value = NormSpec> {
    let dim = 1usize..24;
    prop_oneof![
        dim.clone().prop_map(NormSpec::l1),
        dim.clone().prop_map(NormSpec::l2),
        dim.clone().prop_map(NormSpec::linf),
        (dim.clone(), 1.0f64..12.0).prop_map(|(n, p)| NormSpec::lp(p, n)),
        (20usize..200, 0.0f64..1.0).prop_map(|(n, t)| figiel_norm_spec(n, figiel_eps(n, t)).unwrap()),
        prop::collection::vec(0.1f64..5.0, 1..24).prop_map(|w| NormSpec::weighted_sup(w).unwrap()),
        (dim, 1.0f64..6.0, 0.1f64..3.0, 0.1f64..3.0).prop_map(|(n, p, a, b)| {
            NormSpec::sum(vec![(a, NormSpec::l1(n)), (b, NormSpec::lp(p, n))]).unwrap()
        }),
    ]
}

/// A valid Figiel parameter for dimension `n`: eps in (n^{-1/4}, 1/2).
fn figiel_eps(n: usize, t: f64) -> f64 {
    let lo = (n as f64).powf(-0.25) * 1.001;
    lo + t * (0.499 - lo)
}

fn with_vectors() -> impl Strategy<Value = (NormSpec, Vec<f64>, Vec<f64>, f64)> {
    norm_strategy().prop_flat_map(|spec| {
        let n = spec.dim();
        (
            Just(spec),
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
            -20.0f64..20.0,
        )
    })
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn triangle_inequality((spec, x, y, _) in with_vectors()) {
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let lhs = norm_eval(&spec, &sum).unwrap();
        let rhs = norm_eval(&spec, &x).unwrap() + norm_eval(&spec, &y).unwrap();
        prop_assert!(lhs <= rhs + 1e-9, "{lhs} > {rhs}");
    }

    #[test]
    fn positive_homogeneity((spec, x, _, lambda) in with_vectors()) {
        let scaled: Vec<f64> = x.iter().map(|v| lambda * v).collect();
        let lhs = norm_eval(&spec, &scaled).unwrap();
        let rhs = lambda.abs() * norm_eval(&spec, &x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300) * 4.0 + f64::MIN_POSITIVE);
    }

    #[test]
    fn comparison_constants_bracket_the_ratio((spec, x, _, _) in with_vectors()) {
        let r = l2(&x);
        prop_assume!(r > 1e-9);
        let c = comparison_constants(&spec).unwrap();
        let ratio = norm_eval(&spec, &x).unwrap() / r;
        prop_assert!(c.b_lower * (1.0 - 1e-12) <= ratio, "{} > {ratio}", c.b_lower);
        prop_assert!(ratio <= c.b_upper * (1.0 + 1e-12), "{ratio} > {}", c.b_upper);
    }

    #[test]
    fn one_symmetric_under_permutation_and_signs(
        (spec, x, _, _) in with_vectors().prop_filter("no weights", |(s, ..)| !matches!(s, NormSpec::WeightedSup { .. })),
        seed in any::<u64>(),
    ) {
        let mut rng = RandomSource::new(seed, 0);
        let mut y: Vec<f64> = x.iter().map(|v| v * rng.sign()).collect();
        y.reverse();
        let (a, b) = (norm_eval(&spec, &x).unwrap(), norm_eval(&spec, &y).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn figiel_norm_is_two_equivalent_to_euclidean(
        n in 20usize..4096,
        t in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let eps = figiel_eps(n, t);
        let spec = figiel_norm_spec(n, eps).unwrap();
        let c = comparison_constants(&spec).unwrap();
        prop_assert!((c.b_upper - 2.0).abs() < 1e-12);
        prop_assert!((c.b_lower - (1.0 + 2.0 * eps)).abs() < 1e-9);
        prop_assert!(c.distortion() <= 2.0 + 1e-12);
        let mut rng = RandomSource::new(seed, 1);
        let x: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let ratio = norm_eval(&spec, &x).unwrap() / l2(&x);
        prop_assert!((1.0..=2.0 + 1e-12).contains(&ratio));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_frames_are_orthonormal(n in 1usize..48, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let k = 1 + ((n - 1) as f64 * frac) as usize;
        let frame = sample_subspace(n, k, &mut RandomSource::new(seed, 3)).unwrap();
        prop_assert_eq!((frame.n(), frame.k()), (n, k));
        prop_assert!(frame.gram_error() < 1e-10);
    }

    #[test]
    fn nets_are_separated_and_small(k in 1usize..5, eps in 0.4f64..0.9, seed in any::<u64>()) {
        let net = build_net(k, eps, NetBudget::PerPoint(50), &mut RandomSource::new(seed, 0)).unwrap();
        prop_assert!(net.len() as f64 <= cardinality_bound(k, eps));
        for (i, a) in net.points.iter().enumerate() {
            for b in &net.points[i + 1..] {
                let d = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                prop_assert!(d >= eps - 1e-12);
            }
        }
    }

    #[test]
    fn amplification_is_monotone(
        b in 0.1f64..2.0,
        gap in 0.0f64..2.0,
        da in 0.0f64..1.0,
        eps in 0.01f64..0.8,
        de in 0.0f64..0.15,
    ) {
        let a = b + gap;
        let base = amplify_net_bounds(b, a, eps).unwrap();
        let bigger_a = amplify_net_bounds(b, a + da, eps).unwrap();
        let bigger_eps = amplify_net_bounds(b, a, eps + de).unwrap();
        prop_assert!(bigger_a.hi >= base.hi);
        prop_assert!(bigger_eps.hi >= base.hi);
        prop_assert!(bigger_eps.lo <= base.lo);
        prop_assert!(base.lo >= 0.0 && base.lo <= b && base.hi >= a);
    }
}
