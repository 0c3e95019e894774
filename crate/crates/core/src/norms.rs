//! The family of norms on ℝⁿ the toolkit works with.
//!
//! Every norm here is given in closed form: `ℓ_p` (including `p = ∞`),
//! weighted sup norms, and positive combinations of those. Each comes with
//! analytic comparison constants against the Euclidean norm, so no
//! John-ellipsoid computation is ever needed.
//!
//! JSON form:
//!
//! ```text
//! {"kind":"lp","p":3.0,"dim":128}
//! {"kind":"lp","p":"inf","dim":128}
//! {"kind":"wsup","weights":[1.0,2.0,0.5]}
//! {"kind":"sum","terms":[{"w":1.0,"spec":{"kind":"lp","p":2.0,"dim":64}}, ...]}
//! ```

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, invalid, Error, Result};

/// Exponent of an `ℓ_p` norm. `∞` is its own case, not a large finite `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn from_f64(p: f64) -> Self {
        if p.is_infinite() {
            Exponent::Infinity
        } else {
            Exponent::Finite(p)
        }
    }

    /// `1/p`, with `1/∞ = 0`.
    pub fn reciprocal(&self) -> f64 {
        match *self {
            Exponent::Finite(p) => 1.0 / p,
            Exponent::Infinity => 0.0,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            Exponent::Finite(p) => p,
            Exponent::Infinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => f.write_str("inf"),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Exponent::Finite(p) => s.serialize_f64(p),
            Exponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct ExponentVisitor;

        impl Visitor<'_> for ExponentVisitor {
            type Value = Exponent;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number >= 1 or the string \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Exponent, E> {
                Ok(Exponent::from_f64(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Exponent, E> {
                Ok(Exponent::Finite(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Exponent, E> {
                Ok(Exponent::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Exponent, E> {
                match v {
                    "inf" | "infinity" | "∞" => Ok(Exponent::Infinity),
                    other => other
                        .parse::<f64>()
                        .map(Exponent::from_f64)
                        .map_err(|_| E::custom(format!("bad exponent {other:?}"))),
                }
            }
        }

        d.deserialize_any(ExponentVisitor)
    }
}

/// One weighted summand of a [`NormSpec::Sum`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormTerm {
    pub w: f64,
    pub spec: NormSpec,
}

/// Symbolic description of a norm on ℝⁿ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum NormSpec {
    #[serde(rename = "lp")]
    Lp { p: Exponent, dim: usize },
    #[serde(rename = "sum")]
    Sum { terms: Vec<NormTerm> },
    #[serde(rename = "wsup")]
    WeightedSup { weights: Vec<f64> },
}

/// Comparison constants against the Euclidean norm:
/// `b_lower·‖x‖₂ ≤ ‖x‖ ≤ b_upper·‖x‖₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConstants {
    pub b_upper: f64,
    pub b_lower: f64,
    /// `true` when both constants are the sharp closed-form values; `false`
    /// means "valid bound, unknown tightness".
    pub analytic: bool,
}

impl ComparisonConstants {
    /// Whole-space distortion `b_upper / b_lower`.
    pub fn distortion(&self) -> f64 {
        self.b_upper / self.b_lower
    }
}

impl NormSpec {
    pub fn lp(p: f64, dim: usize) -> Self {
        NormSpec::Lp {
            p: Exponent::from_f64(p),
            dim,
        }
    }

    pub fn l1(dim: usize) -> Self {
        Self::lp(1.0, dim)
    }

    pub fn l2(dim: usize) -> Self {
        Self::lp(2.0, dim)
    }

    pub fn linf(dim: usize) -> Self {
        NormSpec::Lp {
            p: Exponent::Infinity,
            dim,
        }
    }

    pub fn sum(terms: Vec<(f64, NormSpec)>) -> Result<Self> {
        let spec = NormSpec::Sum {
            terms: terms
                .into_iter()
                .map(|(w, spec)| NormTerm { w, spec })
                .collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn weighted_sup(weights: Vec<f64>) -> Result<Self> {
        let spec = NormSpec::WeightedSup { weights };
        spec.validate()?;
        Ok(spec)
    }

    /// Parse and validate a JSON norm description.
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: NormSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical compact JSON (used as the `norm_json` CSV column).
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("norm specs always serialize")
    }

    pub fn dim(&self) -> usize {
        match self {
            NormSpec::Lp { dim, .. } => *dim,
            NormSpec::Sum { terms } => terms.first().map_or(0, |t| t.spec.dim()),
            NormSpec::WeightedSup { weights } => weights.len(),
        }
    }

    /// Same norm family in a different dimension. Weighted sup norms cannot
    /// be resized.
    pub fn with_dim(&self, n: usize) -> Result<Self> {
        Ok(match self {
            NormSpec::Lp { p, .. } => NormSpec::Lp { p: *p, dim: n },
            NormSpec::Sum { terms } => NormSpec::Sum {
                terms: terms
                    .iter()
                    .map(|t| {
                        Ok(NormTerm {
                            w: t.w,
                            spec: t.spec.with_dim(n)?,
                        })
                    })
                    .collect::<Result<_>>()?,
            },
            NormSpec::WeightedSup { weights } if weights.len() == n => self.clone(),
            NormSpec::WeightedSup { .. } => {
                return Err(invalid("weighted sup norms have a fixed dimension"))
            }
        })
    }

    /// Check well-formedness: `p ≥ 1`, positive weights, matching dimensions.
    pub fn validate(&self) -> Result<()> {
        match self {
            NormSpec::Lp { p, dim } => {
                if *dim == 0 {
                    return Err(invalid("norm dimension must be positive"));
                }
                if let Exponent::Finite(p) = p {
                    if !(p.is_finite() && *p >= 1.0) {
                        return Err(invalid(format!("p must be >= 1 or inf, got {p}")));
                    }
                }
                Ok(())
            }
            NormSpec::Sum { terms } => {
                let first = terms
                    .first()
                    .ok_or_else(|| invalid("sum norm needs at least one term"))?;
                let dim = first.spec.dim();
                for t in terms {
                    if !(t.w.is_finite() && t.w > 0.0) {
                        return Err(invalid(format!("term weight must be positive, got {}", t.w)));
                    }
                    t.spec.validate()?;
                    check_dim(dim, t.spec.dim())?;
                }
                Ok(())
            }
            NormSpec::WeightedSup { weights } => {
                if weights.is_empty() {
                    return Err(invalid("weighted sup norm needs at least one weight"));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(invalid("weights must be positive and finite"));
                }
                Ok(())
            }
        }
    }

    /// Evaluate without the dimension check. Callers inside the crate have
    /// already validated shapes.
    pub(crate) fn eval(&self, v: &[f64]) -> f64 {
        match self {
            NormSpec::Lp { p, .. } => lp_norm(v, *p),
            NormSpec::Sum { terms } => terms.iter().map(|t| t.w * t.spec.eval(v)).sum(),
            NormSpec::WeightedSup { weights } => weights
                .iter()
                .zip(v)
                .fold(0.0, |acc: f64, (w, x)| acc.max(w * x.abs())),
        }
    }

    /// True when the norm is a positive multiple of the Euclidean norm.
    pub fn is_euclidean(&self) -> bool {
        match self {
            NormSpec::Lp { p, .. } => *p == Exponent::Finite(2.0),
            NormSpec::Sum { terms } => terms.iter().all(|t| t.spec.is_euclidean()),
            NormSpec::WeightedSup { weights } => weights.len() == 1,
        }
    }

    /// Accumulate `scale · g` into `out`, where `g` is a subgradient of the
    /// norm at `v` (so `⟨g, v⟩ = ‖v‖`). Ties go to the first index.
    pub(crate) fn add_subgradient(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            NormSpec::Lp { p, .. } => match *p {
                Exponent::Infinity => {
                    if let Some(i) = argmax_abs(v, None) {
                        out[i] += scale * v[i].signum();
                    }
                }
                Exponent::Finite(1.0) => {
                    for (o, x) in out.iter_mut().zip(v) {
                        if *x != 0.0 {
                            *o += scale * x.signum();
                        }
                    }
                }
                Exponent::Finite(p) => {
                    let m = lp_norm(v, Exponent::Finite(p));
                    if m > 0.0 {
                        for (o, x) in out.iter_mut().zip(v) {
                            if *x != 0.0 {
                                *o += scale * x.signum() * pow(x.abs() / m, p - 1.0);
                            }
                        }
                    }
                }
            },
            NormSpec::Sum { terms } => {
                for t in terms {
                    t.spec.add_subgradient(v, scale * t.w, out);
                }
            }
            NormSpec::WeightedSup { weights } => {
                if let Some(i) = argmax_abs(v, Some(weights)) {
                    out[i] += scale * weights[i] * v[i].signum();
                }
            }
        }
    }

    /// Smooth surrogate of the norm with smoothing scale `mu`; accumulates
    /// `scale · ∇` into `grad` and returns the surrogate value.
    ///
    /// The surrogate is within `O(mu · log n)` of the norm (`O(n·mu)` for ℓ₁).
    pub(crate) fn add_smoothed(&self, v: &[f64], mu: f64, scale: f64, grad: &mut [f64]) -> f64 {
        match self {
            NormSpec::Lp { p, .. } => match *p {
                Exponent::Infinity => soft_max_abs(v, None, mu, scale, grad),
                Exponent::Finite(1.0) => {
                    let mut total = 0.0;
                    for (g, x) in grad.iter_mut().zip(v) {
                        let r = (x * x + mu * mu).sqrt();
                        total += r;
                        *g += scale * x / r;
                    }
                    total
                }
                Exponent::Finite(2.0) => {
                    let r = (v.iter().map(|x| x * x).sum::<f64>() + mu * mu).sqrt();
                    for (g, x) in grad.iter_mut().zip(v) {
                        *g += scale * x / r;
                    }
                    r
                }
                Exponent::Finite(_) => {
                    self.add_subgradient(v, scale, grad);
                    self.eval(v)
                }
            },
            NormSpec::Sum { terms } => terms
                .iter()
                .map(|t| t.w * t.spec.add_smoothed(v, mu, scale * t.w, grad))
                .sum(),
            NormSpec::WeightedSup { weights } => soft_max_abs(v, Some(weights), mu, scale, grad),
        }
    }
}

fn argmax_abs(v: &[f64], weights: Option<&[f64]>) -> Option<usize> {
    let mut best = None;
    let mut best_val = 0.0;
    for (i, x) in v.iter().enumerate() {
        let val = weights.map_or(1.0, |w| w[i]) * x.abs();
        if val > best_val {
            best_val = val;
            best = Some(i);
        }
    }
    best
}

/// `mu · ln Σ (e^{w x/mu} + e^{-w x/mu})`, computed with a max shift.
fn soft_max_abs(v: &[f64], weights: Option<&[f64]>, mu: f64, scale: f64, grad: &mut [f64]) -> f64 {
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let top = v
        .iter()
        .enumerate()
        .fold(0.0_f64, |acc, (i, x)| acc.max(w(i) * x.abs()));
    let mut z = 0.0;
    for (i, x) in v.iter().enumerate() {
        let t = w(i) * x;
        z += ((t - top) / mu).exp() + ((-t - top) / mu).exp();
    }
    for (i, x) in v.iter().enumerate() {
        let t = w(i) * x;
        let d = ((t - top) / mu).exp() - ((-t - top) / mu).exp();
        grad[i] += scale * w(i) * d / z;
    }
    top + mu * z.ln()
}

fn pow(x: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() <= 64.0 {
        x.powi(e as i32)
    } else {
        x.powf(e)
    }
}

fn lp_norm(v: &[f64], p: Exponent) -> f64 {
    match p {
        Exponent::Infinity => v.iter().fold(0.0, |acc: f64, x| acc.max(x.abs())),
        Exponent::Finite(1.0) => v.iter().map(|x| x.abs()).sum(),
        Exponent::Finite(2.0) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        Exponent::Finite(p) => {
            let m = v.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()));
            if m == 0.0 {
                return 0.0;
            }
            let s: f64 = v.iter().map(|x| pow(x.abs() / m, p)).sum();
            m * s.powf(1.0 / p)
        }
    }
}

/// Evaluate `‖v‖` for the given norm.
pub fn norm_eval(spec: &NormSpec, v: &[f64]) -> Result<f64> {
    check_dim(spec.dim(), v.len())?;
    Ok(spec.eval(v))
}

/// Closed-form comparison constants against `‖·‖₂`.
///
/// For `ℓ_p` the extremal directions are the coordinate vectors and the
/// diagonal. For sums the constants are `Σ wᵢ·b_upper(i)` and
/// `Σ wᵢ·b_lower(i)`. Both are always valid; they are attained (and flagged
/// analytic) when all terms are `ℓ_p` with `p` on the same side of 2, since
/// then the terms share their extremal directions.
pub fn comparison_constants(spec: &NormSpec) -> Result<ComparisonConstants> {
    spec.validate()?;
    Ok(match spec {
        NormSpec::Lp { p, dim } => {
            let n = *dim as f64;
            let scale = n.powf(p.reciprocal() - 0.5);
            if p.reciprocal() <= 0.5 {
                ComparisonConstants {
                    b_upper: 1.0,
                    b_lower: scale,
                    analytic: true,
                }
            } else {
                ComparisonConstants {
                    b_upper: scale,
                    b_lower: 1.0,
                    analytic: true,
                }
            }
        }
        NormSpec::WeightedSup { weights } => {
            let top = weights.iter().cloned().fold(0.0, f64::max);
            let inv: f64 = weights.iter().map(|w| 1.0 / (w * w)).sum();
            ComparisonConstants {
                b_upper: top,
                b_lower: 1.0 / inv.sqrt(),
                analytic: true,
            }
        }
        NormSpec::Sum { terms } => {
            let mut upper = 0.0;
            let mut lower = 0.0;
            let mut analytic = true;
            for t in terms {
                let c = comparison_constants(&t.spec)?;
                upper += t.w * c.b_upper;
                lower += t.w * c.b_lower;
                analytic &= c.analytic;
            }
            let side = |want_low: bool| {
                terms.iter().all(|t| match &t.spec {
                    NormSpec::Lp { p, .. } => (p.reciprocal() <= 0.5) == want_low || p.reciprocal() == 0.5,
                    _ => false,
                })
            };
            let tight = terms.len() == 1 || side(true) || side(false);
            ComparisonConstants {
                b_upper: upper,
                b_lower: lower,
                analytic: analytic && tight,
            }
        }
    })
}

/// Directions attaining `b_upper` and `b_lower` for an `ℓ_p` norm, as
/// `(argmax, argmin)` unit vectors. `None` for other kinds.
pub fn extremal_directions(spec: &NormSpec) -> Option<(Vec<f64>, Vec<f64>)> {
    let NormSpec::Lp { p, dim } = spec else {
        return None;
    };
    let n = *dim;
    let mut coordinate = vec![0.0; n];
    coordinate[0] = 1.0;
    let diagonal = vec![1.0 / (n as f64).sqrt(); n];
    if p.reciprocal() <= 0.5 {
        Some((coordinate, diagonal))
    } else {
        Some((diagonal, coordinate))
    }
}

/// Exponent `p` solving `n^{1/p − 1/2} = 2ε`.
pub fn figiel_exponent(n: usize, eps: f64) -> f64 {
    1.0 / (0.5 + (2.0 * eps).ln() / (n as f64).ln())
}

/// The 1-symmetric norm `‖x‖₂ + ‖x‖_p` with `n^{1/p − 1/2} = 2ε`: it is
/// 2-equivalent to `ℓ₂` but has no `(1+ε)`-Euclidean sections of dimension
/// beyond `C·ε²·n`.
pub fn figiel_norm_spec(n: usize, eps: f64) -> Result<NormSpec> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Precondition(format!("eps must lie in (0,1), got {eps}")));
    }
    if (n as f64) <= eps.powi(-4) {
        return Err(Error::Precondition(format!(
            "need n > eps^-4 = {:.3}, got n = {n}",
            eps.powi(-4)
        )));
    }
    let p = figiel_exponent(n, eps);
    if !(p > 2.0 && p < 4.0) {
        return Err(Error::Precondition(format!(
            "solved exponent p = {p} is outside (2, 4); eps must be below 1/2"
        )));
    }
    NormSpec::sum(vec![(1.0, NormSpec::l2(n)), (1.0, NormSpec::lp(p, n))])
}

/// Parse either JSON or a shorthand (`l1`, `l2`, `linf`, `lp:<p>`,
/// `figiel:<eps>`) into a norm of dimension `dim`.
pub fn parse_norm(s: &str, dim: usize) -> Result<NormSpec> {
    let s = s.trim();
    if s.starts_with('{') {
        return NormSpec::from_json(s);
    }
    let spec = match s {
        "l1" => NormSpec::l1(dim),
        "l2" => NormSpec::l2(dim),
        "linf" | "inf" => NormSpec::linf(dim),
        _ => {
            if let Some(p) = s.strip_prefix("lp:").or_else(|| s.strip_prefix('l')) {
                let p = match p {
                    "inf" => f64::INFINITY,
                    other => other
                        .parse::<f64>()
                        .map_err(|_| invalid(format!("cannot parse norm {s:?}")))?,
                };
                NormSpec::lp(p, dim)
            } else if let Some(eps) = s.strip_prefix("figiel:") {
                let eps = eps
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("cannot parse norm {s:?}")))?;
                return figiel_norm_spec(dim, eps);
            } else {
                return Err(invalid(format!("unknown norm {s:?}")));
            }
        }
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_basic_norms() {
        assert_eq!(norm_eval(&NormSpec::l2(2), &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(norm_eval(&NormSpec::linf(3), &[1.0, -2.0, 0.5]).unwrap(), 2.0);
        let figiel_like = NormSpec::sum(vec![(1.0, NormSpec::l2(5)), (1.0, NormSpec::lp(3.0, 5))]).unwrap();
        let e1 = [1.0, 0.0, 0.0, 0.0, 0.0];
        assert!((norm_eval(&figiel_like, &e1).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_only_at_origin() {
        for spec in [NormSpec::l1(3), NormSpec::lp(3.5, 3), NormSpec::linf(3)] {
            assert_eq!(spec.eval(&[0.0; 3]), 0.0);
            assert!(spec.eval(&[0.0, 1e-300, 0.0]) > 0.0);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_input_error() {
        let err = norm_eval(&NormSpec::l2(3), &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 3, got: 2 }));
        assert!(err.is_input());
    }

    #[test]
    fn lp_constants() {
        let c = comparison_constants(&NormSpec::linf(4)).unwrap();
        assert_eq!((c.b_upper, c.b_lower), (1.0, 0.5));
        assert!((c.distortion() - 2.0).abs() < 1e-15);

        let c = comparison_constants(&NormSpec::l2(17)).unwrap();
        assert_eq!((c.b_upper, c.b_lower), (1.0, 1.0));

        let c = comparison_constants(&NormSpec::l1(9)).unwrap();
        assert!((c.b_upper - 3.0).abs() < 1e-14);
        assert_eq!(c.b_lower, 1.0);
        assert!(c.analytic);
    }

    #[test]
    fn l1_constants_match_extremal_directions() {
        // Diagonal maximizes, coordinate vectors minimize.
        let spec = NormSpec::l1(9);
        let (argmax, argmin) = extremal_directions(&spec).unwrap();
        assert!((spec.eval(&argmax) - 3.0).abs() < 1e-14);
        assert_eq!(spec.eval(&argmin), 1.0);
    }

    #[test]
    fn weighted_sup_constants() {
        let spec = NormSpec::weighted_sup(vec![1.0, 2.0]).unwrap();
        let c = comparison_constants(&spec).unwrap();
        assert_eq!(c.b_upper, 2.0);
        // min of max(|a|, 2|b|) on the circle: |a| = 2|b| -> 2/sqrt(5)
        assert!((c.b_lower - 2.0 / 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sum_constants() {
        // e1 and the diagonal extremize both terms at once.
        let spec = NormSpec::sum(vec![(1.0, NormSpec::l2(16)), (1.0, NormSpec::lp(3.0, 16))]).unwrap();
        let c = comparison_constants(&spec).unwrap();
        assert_eq!(c.b_upper, 2.0);
        let flat = vec![0.25; 16];
        assert!((c.b_lower - spec.eval(&flat)).abs() < 1e-14);
        assert!(c.analytic);

        let euclid = NormSpec::sum(vec![(2.0, NormSpec::l2(4)), (0.5, NormSpec::l2(4))]).unwrap();
        let c = comparison_constants(&euclid).unwrap();
        assert!(c.analytic);
        assert_eq!((c.b_upper, c.b_lower), (2.5, 2.5));

        // l1 + linf: extremal directions disagree, so the bounds are loose.
        let mixed = NormSpec::sum(vec![(1.0, NormSpec::l1(4)), (1.0, NormSpec::linf(4))]).unwrap();
        let c = comparison_constants(&mixed).unwrap();
        assert_eq!((c.b_upper, c.b_lower), (3.0, 1.5));
        assert!(!c.analytic);
        assert!(mixed.eval(&[1.0, 0.0, 0.0, 0.0]) > c.b_lower);
        assert!(mixed.eval(&[0.5; 4]) < c.b_upper);
    }

    #[test]
    fn figiel_exponents() {
        // 1/p = 1/2 + ln(0.2)/ln(10^4)
        let oracle = 1.0 / (0.5 + 0.2f64.ln() / 10_000f64.ln());
        assert!((oracle - 3.0745).abs() < 1e-3);
        let spec = figiel_norm_spec(10_000, 0.1).unwrap();
        let NormSpec::Sum { terms } = &spec else { panic!() };
        assert_eq!(terms[1].spec, NormSpec::lp(oracle, 10_000));

        let p = figiel_exponent(65_536, 0.25);
        assert!((p - 16.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn figiel_precondition() {
        let eps: f64 = 0.1;
        let boundary = eps.powi(-4).ceil() as usize - 1;
        assert!(matches!(figiel_norm_spec(boundary, eps), Err(Error::Precondition(_))));
        assert!(matches!(figiel_norm_spec(10_000, 0.5), Err(Error::Precondition(_))));
    }

    #[test]
    fn json_round_trip_and_schema() {
        let spec: NormSpec = serde_json::from_str(r#"{"kind":"lp","p":3.0,"dim":128}"#).unwrap();
        assert_eq!(spec, NormSpec::lp(3.0, 128));
        let inf = NormSpec::linf(8);
        assert_eq!(inf.to_json(), r#"{"kind":"lp","p":"inf","dim":8}"#);
        let nested = NormSpec::from_json(
            r#"{"kind":"sum","terms":[{"w":1.0,"spec":{"kind":"lp","p":2,"dim":4}},{"w":0.5,"spec":{"kind":"lp","p":"inf","dim":4}}]}"#,
        )
        .unwrap();
        assert_eq!(nested.dim(), 4);
        assert_eq!(NormSpec::from_json(&nested.to_json()).unwrap(), nested);
    }

    #[test]
    fn rejects_malformed_specs() {
        assert!(NormSpec::from_json(r#"{"kind":"lp","p":0.5,"dim":4}"#).is_err());
        assert!(NormSpec::from_json(r#"{"kind":"sum","terms":[]}"#).is_err());
        assert!(NormSpec::sum(vec![(1.0, NormSpec::l2(3)), (1.0, NormSpec::l1(4))]).is_err());
        assert!(NormSpec::weighted_sup(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn shorthand_parsing() {
        assert_eq!(parse_norm("l1", 5).unwrap(), NormSpec::l1(5));
        assert_eq!(parse_norm("linf", 5).unwrap(), NormSpec::linf(5));
        assert_eq!(parse_norm("lp:3.5", 5).unwrap(), NormSpec::lp(3.5, 5));
        assert_eq!(parse_norm("l4", 5).unwrap(), NormSpec::lp(4.0, 5));
        assert!(parse_norm("figiel:0.25", 4096).is_ok());
        assert!(parse_norm("cube", 5).is_err());
    }

    #[test]
    fn subgradient_satisfies_euler_identity() {
        let v = [0.3, -1.2, 0.0, 2.5, -0.7];
        let specs = [
            NormSpec::l1(5),
            NormSpec::l2(5),
            NormSpec::lp(3.0, 5),
            NormSpec::lp(1.5, 5),
            NormSpec::linf(5),
            NormSpec::weighted_sup(vec![1.0, 2.0, 1.0, 0.5, 3.0]).unwrap(),
            NormSpec::sum(vec![(1.0, NormSpec::l2(5)), (1.0, NormSpec::lp(2.5, 5))]).unwrap(),
        ];
        for spec in specs {
            let mut g = vec![0.0; 5];
            spec.add_subgradient(&v, 1.0, &mut g);
            let dot: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
            assert!((dot - spec.eval(&v)).abs() < 1e-12, "{spec:?}");
        }
    }

    #[test]
    fn smoothed_surrogate_tracks_norm() {
        let v = [0.3, -1.2, 0.0, 2.5, -0.7];
        for spec in [NormSpec::l1(5), NormSpec::linf(5), NormSpec::l2(5)] {
            let mut g = vec![0.0; 5];
            let s = spec.add_smoothed(&v, 1e-9, 1.0, &mut g);
            assert!((s - spec.eval(&v)).abs() < 1e-7, "{spec:?}");
        }
    }
}
