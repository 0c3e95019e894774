//! `ℓ∞` structure inside normed spaces.
//!
//! The central quantity is the `ℓ∞` basis constant of a finite system
//! `x₁,…,x_m`: the least `L` with `‖∑aᵢxᵢ‖ ≤ L·max|aᵢ|`. The left side is
//! convex in `a`, so its maximum over the cube is attained at a vertex and
//! the constant is an exact maximum over sign vectors. Flipping every sign
//! does not change the norm, so `ε₁ = +1` is fixed and `2^{m−1}` patterns
//! remain.
//!
//! On top of that: James's blocking step (`L → √L` at the price of
//! `m → ⌊√m⌋`) and its iteration, the sign-flip and small-ball
//! probabilities, Gaussian block selection, and the explicit net embedding
//! of `ℓ₂ᵏ` into `ℓ∞ⁿ` with the matching dimension bounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::nets::{build_net, EpsNet, NetBudget};
use crate::norms::NormSpec;
use crate::random::{chunked, sample_gaussian_vector, sample_signs, sample_sphere, RandomSource};
use crate::stats::Estimate;

/// Largest system handled by exact enumeration.
pub const MAX_EXACT: usize = 24;
/// Largest system for exact sign-flip probabilities (all `2^m` patterns).
pub const MAX_EXACT_FLIP: usize = 20;

/// Relative slack used when checking asserted norm bounds.
const NORM_SLACK: f64 = 1e-12;

/// Vectors `x₁,…,x_m` in `(ℝⁿ, ‖·‖)` with an asserted lower bound on their
/// norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorSystem {
    pub ambient: NormSpec,
    pub vectors: Vec<Vec<f64>>,
    pub lower_norm_bound: f64,
}

impl VectorSystem {
    /// Checks `m ≥ 1`, dimensions, and `‖xᵢ‖ ≥ lower_norm_bound`.
    pub fn new(ambient: NormSpec, vectors: Vec<Vec<f64>>, lower_norm_bound: f64) -> Result<Self> {
        ambient.validate()?;
        if vectors.is_empty() {
            return Err(invalid("a vector system needs at least one vector"));
        }
        if !(lower_norm_bound >= 0.0) {
            return Err(invalid("lower_norm_bound must be non-negative"));
        }
        for (i, v) in vectors.iter().enumerate() {
            check_dim(ambient.dim(), v.len())?;
            let norm = ambient.eval(v);
            if norm < lower_norm_bound * (1.0 - NORM_SLACK) {
                return Err(Error::Precondition(format!(
                    "vector {i} has norm {norm} < asserted lower bound {lower_norm_bound}"
                )));
            }
        }
        Ok(VectorSystem {
            ambient,
            vectors,
            lower_norm_bound,
        })
    }

    /// The unit vector basis `e₁,…,e_n` of the ambient space.
    pub fn standard_basis(ambient: NormSpec) -> Result<Self> {
        let n = ambient.dim();
        let vectors: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
        let lower = vectors.iter().map(|v| ambient.eval(v)).fold(f64::INFINITY, f64::min);
        Self::new(ambient, vectors, lower)
    }

    /// `m` copies of the same vector.
    pub fn aligned(ambient: NormSpec, vector: Vec<f64>, m: usize) -> Result<Self> {
        let norm = ambient.eval(&vector);
        Self::new(ambient, vec![vector; m], norm)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.ambient.dim()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.vectors.iter().map(|v| self.ambient.eval(v)).collect()
    }

    pub fn min_norm(&self) -> f64 {
        self.norms().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// `∑ aᵢxᵢ`, summed left to right.
    pub fn combination(&self, a: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.len(), a.len())?;
        let mut out = vec![0.0; self.dim()];
        for (ai, x) in a.iter().zip(&self.vectors) {
            for (o, xi) in out.iter_mut().zip(x) {
                *o += ai * xi;
            }
        }
        Ok(out)
    }

    /// The sub-system at `indices` (same ambient norm and lower bound).
    pub fn subsystem(&self, indices: &[usize]) -> Result<Self> {
        if indices.iter().any(|&i| i >= self.len()) {
            return Err(invalid("subsystem index out of range"));
        }
        Self::new(
            self.ambient.clone(),
            indices.iter().map(|&i| self.vectors[i].clone()).collect(),
            self.lower_norm_bound,
        )
    }
}

// ---------------------------------------------------------------------------
// Basis constants

/// How a basis constant was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstantMethod {
    /// Exact maximum over all sign vectors.
    Exact,
    /// Best of sampled sign vectors: a lower bound only.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisConstant {
    pub value: f64,
    pub method: ConstantMethod,
    /// A sign vector attaining `value`.
    pub signs: Vec<f64>,
    /// Sign patterns evaluated.
    pub patterns: u64,
}

impl BasisConstant {
    pub fn is_exact(&self) -> bool {
        self.method == ConstantMethod::Exact
    }
}

/// Maximum and minimum of `‖∑εᵢxᵢ‖` over sign vectors with `ε₁ = +1`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct VertexRange {
    max: f64,
    argmax: u32,
    min: f64,
    argmin: u32,
}

impl VertexRange {
    fn merge(self, other: VertexRange) -> VertexRange {
        // Ties go to the smaller pattern so the result is schedule independent.
        let (max, argmax) = if other.max > self.max || (other.max == self.max && other.argmax < self.argmax) {
            (other.max, other.argmax)
        } else {
            (self.max, self.argmax)
        };
        let (min, argmin) = if other.min < self.min || (other.min == self.min && other.argmin < self.argmin) {
            (other.min, other.argmin)
        } else {
            (self.min, self.argmin)
        };
        VertexRange { max, argmax, min, argmin }
    }

    fn empty() -> VertexRange {
        VertexRange {
            max: f64::NEG_INFINITY,
            argmax: u32::MAX,
            min: f64::INFINITY,
            argmin: u32::MAX,
        }
    }
}

/// Depth-first enumeration below a fixed prefix. `stack[d]` holds
/// `∑_{i<d} εᵢxᵢ`, accumulated left to right exactly like a naive loop.
/// Bit `i` of a pattern set means `εᵢ = −1`.
fn enumerate_below(spec: &NormSpec, vectors: &[Vec<f64>], stack: &mut [Vec<f64>], depth: usize, bits: u32, acc: &mut VertexRange) {
    let m = vectors.len();
    if depth == m {
        let v = spec.eval(&stack[m]);
        *acc = acc.merge(VertexRange {
            max: v,
            argmax: bits,
            min: v,
            argmin: bits,
        });
        return;
    }
    for (bit, e) in [(0u32, 1.0f64), (1, -1.0)] {
        let (lo, hi) = stack.split_at_mut(depth + 1);
        for ((o, p), x) in hi[0].iter_mut().zip(&lo[depth]).zip(&vectors[depth]) {
            *o = p + e * x;
        }
        enumerate_below(spec, vectors, stack, depth + 1, bits | (bit << depth), acc);
    }
}

fn vertex_range(spec: &NormSpec, vectors: &[Vec<f64>]) -> VertexRange {
    let m = vectors.len();
    let n = spec.dim();
    // Prefix depth: the first `split` signs after ε₁ are fixed per task.
    let split = (m - 1).min(10);
    (0u32..1 << split)
        .into_par_iter()
        .map(|prefix| {
            let mut stack = vec![vec![0.0; n]; m + 1];
            let mut bits = 0u32;
            for d in 0..=split {
                let e = if d == 0 || prefix >> (d - 1) & 1 == 0 { 1.0 } else { -1.0 };
                if e < 0.0 {
                    bits |= 1 << d;
                }
                let (lo, hi) = stack.split_at_mut(d + 1);
                for ((o, p), x) in hi[0].iter_mut().zip(&lo[d]).zip(&vectors[d]) {
                    *o = p + e * x;
                }
            }
            let mut acc = VertexRange::empty();
            enumerate_below(spec, vectors, &mut stack, split + 1, bits, &mut acc);
            acc
        })
        .reduce(VertexRange::empty, VertexRange::merge)
}

fn pattern_signs(bits: u32, m: usize) -> Vec<f64> {
    (0..m).map(|i| if bits >> i & 1 == 1 { -1.0 } else { 1.0 }).collect()
}

/// Exact `ℓ∞` basis constant by enumeration of `2^{m−1}` sign patterns.
pub fn linf_basis_constant(system: &VectorSystem) -> Result<BasisConstant> {
    let m = system.len();
    if m > MAX_EXACT {
        return Err(Error::SizeLimit(format!(
            "exact enumeration supports m <= {MAX_EXACT}, got m = {m}; use the sampled estimator instead"
        )));
    }
    let r = vertex_range(&system.ambient, &system.vectors);
    Ok(BasisConstant {
        value: r.max,
        method: ConstantMethod::Exact,
        signs: pattern_signs(r.argmax, m),
        patterns: 1u64 << (m - 1),
    })
}

/// Closed form for sup-type ambient norms, any `m`: with weights `w`,
/// `max_ε ‖∑εᵢxᵢ‖ = max_j w_j ∑ᵢ|xᵢ(j)|` (take `εᵢ = sign xᵢ(j)`).
pub fn sup_norm_basis_constant(system: &VectorSystem) -> Option<f64> {
    let n = system.dim();
    let weights: Vec<f64> = match &system.ambient {
        NormSpec::Lp {
            p: crate::norms::Exponent::Infinity,
            ..
        } => vec![1.0; n],
        NormSpec::WeightedSup { weights } => weights.clone(),
        _ => return None,
    };
    Some(
        (0..n)
            .map(|j| weights[j] * system.vectors.iter().map(|x| x[j].abs()).sum::<f64>())
            .fold(0.0, f64::max),
    )
}

/// Sampled lower bound on the basis constant: random sign vectors, each
/// improved by single-sign flips until no flip increases the norm.
pub fn linf_basis_constant_sampled(system: &VectorSystem, samples: usize, rng: &mut RandomSource) -> Result<BasisConstant> {
    if samples == 0 {
        return Err(invalid("samples must be at least 1"));
    }
    let m = system.len();
    let results = chunked(rng, samples, |r, len| {
        (0..len)
            .map(|_| {
                let mut signs = sample_signs(m, r);
                let mut sum = system.combination(&signs).expect("matching length");
                let mut value = system.ambient.eval(&sum);
                let mut evaluated = 1u64;
                loop {
                    let mut improved = false;
                    for (sign, xi) in signs.iter_mut().zip(&system.vectors) {
                        let e = *sign;
                        let cand: Vec<f64> = sum.iter().zip(xi).map(|(s, x)| s - 2.0 * e * x).collect();
                        let v = system.ambient.eval(&cand);
                        evaluated += 1;
                        if v > value * (1.0 + 1e-15) {
                            *sign = -e;
                            sum = cand;
                            value = v;
                            improved = true;
                        }
                    }
                    if !improved {
                        break;
                    }
                }
                // Re-evaluate in enumeration order so sampled values never
                // exceed the exact constant through rounding.
                let value = system.ambient.eval(&system.combination(&signs).expect("matching length"));
                (value, signs, evaluated)
            })
            .collect()
    });
    let patterns = results.iter().map(|r| r.2).sum();
    let (value, signs, _) = results
        .into_iter()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("samples > 0");
    Ok(BasisConstant {
        value,
        method: ConstantMethod::Sampled,
        signs,
        patterns,
    })
}

// ---------------------------------------------------------------------------
// James iteration

/// Where the constant `L` fed to a James step came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstantSource {
    Exact,
    /// [`sup_norm_basis_constant`].
    ClosedForm,
    Asserted,
    /// `∑‖xᵢ‖`, the triangle-inequality bound.
    Triangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JamesStep {
    pub system: VectorSystem,
    pub input_constant: f64,
    pub input_source: ConstantSource,
    /// `Some(j)` when block `j` already had constant `≤ √L` and was kept.
    pub kept_block: Option<usize>,
    /// Exact constant of each block (in block order).
    pub block_constants: Vec<f64>,
    pub output_constant: BasisConstant,
}

/// A valid constant `L` for `system`: the asserted one if given (checked
/// against the exact value when `m ≤ 24`), otherwise exact or the triangle
/// bound.
fn input_constant(system: &VectorSystem, asserted: Option<f64>) -> Result<(f64, ConstantSource)> {
    let exact = if system.len() <= MAX_EXACT {
        Some((linf_basis_constant(system)?.value, ConstantSource::Exact))
    } else {
        sup_norm_basis_constant(system).map(|v| (v, ConstantSource::ClosedForm))
    };
    match (asserted, exact) {
        (Some(l), Some((e, _))) if e > l * (1.0 + NORM_SLACK) => Err(invalid(format!(
            "hypothesis violated: exact constant {e} exceeds asserted L = {l}"
        ))),
        (Some(l), _) => {
            let triangle: f64 = system.norms().iter().sum();
            if l < system.min_norm() * (1.0 - NORM_SLACK) {
                return Err(invalid(format!("asserted L = {l} is below the largest single norm")));
            }
            Ok((l.min(triangle), ConstantSource::Asserted))
        }
        (None, Some(e)) => Ok(e),
        (None, None) => Ok((system.norms().iter().sum(), ConstantSource::Triangle)),
    }
}

fn isqrt(m: usize) -> usize {
    let mut r = (m as f64).sqrt() as usize;
    while r * r > m {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= m {
        r += 1;
    }
    r
}

/// One application of James's lemma.
///
/// Splits the first `b²` vectors (`b = ⌊√m⌋`) into `b` blocks of size `b`.
/// If some block has exact constant `≤ √L` it is returned; otherwise each
/// block contributes `yⱼ = ∑ εᵢxᵢ / ‖∑ εᵢxᵢ‖` for its maximizing sign
/// pattern `ε`, whose coefficients satisfy `√L·max|aᵢ| < 1`.
pub fn james_step(system: &VectorSystem, asserted: Option<f64>) -> Result<JamesStep> {
    let m = system.len();
    if m < 4 {
        return Err(Error::Precondition(format!("james_step needs m >= 4, got {m}")));
    }
    if system.min_norm() < 1.0 - NORM_SLACK {
        return Err(Error::Precondition("james_step needs ||x_i|| >= 1 for all i".into()));
    }
    let b = isqrt(m);
    if b > MAX_EXACT {
        return Err(Error::SizeLimit(format!(
            "block size {b} exceeds the exact enumeration limit {MAX_EXACT}"
        )));
    }
    let (l, source) = input_constant(system, asserted)?;
    let root = l.sqrt();
    let mut block_constants = Vec::with_capacity(b);
    let mut ys = Vec::with_capacity(b);
    for j in 0..b {
        let block = system.subsystem(&(j * b..(j + 1) * b).collect::<Vec<_>>())?;
        let c = linf_basis_constant(&block)?;
        block_constants.push(c.value);
        if c.value <= root {
            return Ok(JamesStep {
                system: block,
                input_constant: l,
                input_source: source,
                kept_block: Some(j),
                block_constants,
                output_constant: c,
            });
        }
        let y: Vec<f64> = block.combination(&c.signs)?.iter().map(|v| v / c.value).collect();
        ys.push(y);
    }
    let out = VectorSystem::new(system.ambient.clone(), ys, 1.0)?;
    let output_constant = linf_basis_constant(&out)?;
    if output_constant.value > root + 1e-12 {
        return Err(Error::Internal(format!(
            "james_step output constant {} exceeds sqrt(L) = {root}",
            output_constant.value
        )));
    }
    Ok(JamesStep {
        system: out,
        input_constant: l,
        input_source: source,
        kept_block: None,
        block_constants,
        output_constant,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JamesLevel {
    pub length: usize,
    /// Exact constant when the level is small enough to enumerate,
    /// otherwise the guaranteed bound.
    pub constant: f64,
    pub source: ConstantSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JamesIteration {
    pub system: VectorSystem,
    pub levels: Vec<JamesLevel>,
    /// `⌈log₂(ln L / ln(1+ε))⌉`.
    pub planned_steps: usize,
    pub steps_taken: usize,
    pub final_constant: f64,
    pub eps: f64,
    /// The target `‖∑aᵢyᵢ‖ ≤ (1+ε)·max|aᵢ|` holds exactly.
    pub reached_target: bool,
    /// Minimum and maximum of `‖∑εᵢyᵢ‖` over sign vertices (exact), when the
    /// final system is small enough.
    pub vertex_min: Option<f64>,
    pub vertex_max: Option<f64>,
    /// `(1−ε) ≤ vertex_min` and `vertex_max ≤ 1+ε`.
    pub two_sided: Option<bool>,
    pub note: Option<String>,
}

/// `⌈log₂(ln L / ln(1+ε))⌉`, the number of James steps needed to bring `L`
/// down to `1+ε` (0 when `L ≤ 1+ε`).
pub fn james_steps_needed(l: f64, eps: f64) -> usize {
    if l <= 1.0 + eps {
        return 0;
    }
    (l.ln() / eps.ln_1p()).log2().ceil().max(0.0) as usize
}

/// Iterate [`james_step`] until the exact constant is at most `1+ε`, for at
/// most the planned number of steps.
pub fn james_iterate(system: &VectorSystem, eps: f64, asserted: Option<f64>) -> Result<JamesIteration> {
    if !(eps > 0.0 && eps < 1.0 + 1e-12) {
        return Err(invalid(format!("eps must lie in (0,1], got {eps}")));
    }
    let (l, source) = input_constant(system, asserted)?;
    let planned = james_steps_needed(l, eps);
    let mut levels = vec![JamesLevel {
        length: system.len(),
        constant: l,
        source,
    }];
    let mut current = system.clone();
    let mut constant = l;
    let mut current_source = source;
    let mut steps = 0;
    let mut note = None;
    while constant > 1.0 + eps && steps < planned {
        if current.len() < 4 {
            note = Some(format!(
                "system too short to continue: length {} after {steps} of {planned} steps",
                current.len()
            ));
            break;
        }
        let asserted = match current_source {
            ConstantSource::Exact | ConstantSource::ClosedForm => None,
            _ => Some(constant),
        };
        let step = james_step(&current, asserted)?;
        steps += 1;
        constant = step.output_constant.value;
        current_source = ConstantSource::Exact;
        current = step.system;
        levels.push(JamesLevel {
            length: current.len(),
            constant,
            source: current_source,
        });
    }
    let reached = constant <= 1.0 + eps;
    if note.is_none() && !reached {
        note = Some(format!("constant {constant} still above 1+eps after {steps} steps"));
    }
    let (vertex_min, vertex_max, two_sided) = if current.len() <= MAX_EXACT {
        let r = vertex_range(&current.ambient, &current.vectors);
        let ok = r.min >= 1.0 - eps - 1e-12 && r.max <= 1.0 + eps + 1e-12;
        (Some(r.min), Some(r.max), Some(ok))
    } else {
        (None, None, None)
    };
    Ok(JamesIteration {
        system: current,
        levels,
        planned_steps: planned,
        steps_taken: steps,
        final_constant: constant,
        eps,
        reached_target: reached,
        vertex_min,
        vertex_max,
        two_sided,
        note,
    })
}

// ---------------------------------------------------------------------------
// ℓ₂ → ℓ∞ embedding and dimension bounds

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetEmbedding {
    pub net: EpsNet,
    /// Target dimension `n = |net|`.
    pub n: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `max_ratio / min_ratio` over the sampled directions.
    pub distortion: f64,
    /// `(1 − ε²/2)^{-1}`.
    pub distortion_bound: f64,
    pub samples: usize,
}

/// Directions sampled when measuring the embedding.
pub const EMBEDDING_SAMPLES: usize = 10_000;

/// Embed `ℓ₂ᵏ` into `ℓ∞ⁿ` by `x ↦ (⟨x, xᵢ⟩)ᵢ` over an ε-net `{xᵢ}` of
/// `S^{k−1}`.
pub fn net_embedding_l2_to_linf(k: usize, eps: f64, rng: &mut RandomSource) -> Result<NetEmbedding> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must lie in (0,1), got {eps}")));
    }
    let net = build_net(k, eps, NetBudget::default(), &mut rng.fork())?;
    let ratios = chunked(rng, EMBEDDING_SAMPLES, |r, len| {
        (0..len)
            .map(|_| {
                let x = sample_sphere(k, r);
                net.points
                    .iter()
                    .map(|p| p.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>().abs())
                    .fold(0.0, f64::max)
            })
            .collect()
    });
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(NetEmbedding {
        n: net.len(),
        net,
        min_ratio,
        max_ratio,
        distortion: max_ratio / min_ratio,
        distortion_bound: 1.0 / (1.0 - 0.5 * eps * eps),
        samples: EMBEDDING_SAMPLES,
    })
}

/// `4 ln n / ln(1/(32ε))`: no `ℓ₂ᵏ` embeds `(1+ε)`-isomorphically into
/// `ℓ∞ⁿ` above this `k`.
pub fn linf_upper_bound_dim(n: usize, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0 / 32.0) {
        return Err(Error::Domain(format!("need 0 < eps < 1/32, got {eps}")));
    }
    if n < 2 {
        return Err(Error::Domain(format!("need n >= 2, got {n}")));
    }
    Ok(4.0 * (n as f64).ln() / (1.0 / (32.0 * eps)).ln())
}

/// `E|g|^p = 2^{p/2} Γ((p+1)/2) / √π` for a standard Gaussian `g`.
pub fn gaussian_abs_moment(p: f64) -> f64 {
    2f64.powf(p / 2.0) * statrs::function::gamma::gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

/// `C² (E|g|^p)^{2/p} n^{2/p}`, the largest `k` for which `ℓ₂ᵏ` can
/// `C`-embed into `ℓ_pⁿ`.
pub fn bdgjn_upper_bound(p: f64, c: f64, n: usize, gaussian_moment: Option<f64>) -> Result<f64> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(invalid(format!("need finite p >= 2, got {p}")));
    }
    if !(c >= 1.0) {
        return Err(invalid(format!("need C >= 1, got {c}")));
    }
    let moment = gaussian_moment.unwrap_or_else(|| gaussian_abs_moment(p));
    Ok(c * c * moment.powf(2.0 / p) * (n as f64).powf(2.0 / p))
}

// ---------------------------------------------------------------------------
// Sign flips, small balls, block selection

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignMode {
    /// All `2^m` sign vectors.
    Exact,
    Sampled(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probability {
    pub value: f64,
    /// Zero in exact mode.
    pub stderr: f64,
    pub exact: bool,
    pub trials: u64,
}

/// `P_ε(‖∑ εᵢaᵢxᵢ‖ < max|aᵢ|)` over independent uniform signs.
pub fn sign_flip_probability(system: &VectorSystem, a: &[f64], mode: SignMode, rng: &mut RandomSource) -> Result<Probability> {
    let m = system.len();
    check_dim(m, a.len())?;
    if system.min_norm() < 1.0 - NORM_SLACK {
        return Err(Error::Precondition("sign_flip_probability needs ||x_i|| >= 1".into()));
    }
    let amax = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let below = |signs: &[f64]| {
        let coeffs: Vec<f64> = signs.iter().zip(a).map(|(e, ai)| e * ai).collect();
        let v = system.ambient.eval(&system.combination(&coeffs).expect("matching length"));
        v < amax
    };
    match mode {
        SignMode::Exact => {
            if m > MAX_EXACT_FLIP {
                return Err(Error::SizeLimit(format!(
                    "exact sign enumeration supports m <= {MAX_EXACT_FLIP}, got {m}; use sampled mode"
                )));
            }
            let total = 1u64 << m;
            let count = (0..total)
                .into_par_iter()
                .filter(|&bits| below(&pattern_signs(bits as u32, m)))
                .count();
            Ok(Probability {
                value: count as f64 / total as f64,
                stderr: 0.0,
                exact: true,
                trials: total,
            })
        }
        SignMode::Sampled(samples) => {
            if samples == 0 {
                return Err(invalid("samples must be at least 1"));
            }
            let hits = chunked(rng, samples, |r, len| {
                (0..len).map(|_| below(&sample_signs(m, r))).collect()
            });
            let p = hits.iter().filter(|&&h| h).count() as f64 / samples as f64;
            Ok(Probability {
                value: p,
                stderr: (p * (1.0 - p) / samples as f64).sqrt(),
                exact: false,
                trials: samples as u64,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallBallReport {
    pub fraction: f64,
    pub sigma: f64,
    /// `√(ln m)/100`.
    pub threshold: f64,
    pub samples: usize,
    /// `fraction ≤ 2/3 + 3σ`.
    pub within_bound: bool,
}

/// Monte-Carlo `P(‖∑ gᵢxᵢ‖ < √(ln m)/100)` for independent standard
/// Gaussians `gᵢ`.
pub fn small_ball_check(system: &VectorSystem, samples: usize, rng: &mut RandomSource) -> Result<SmallBallReport> {
    if samples == 0 {
        return Err(invalid("samples must be at least 1"));
    }
    if system.min_norm() < 0.1 * (1.0 - NORM_SLACK) {
        return Err(Error::Precondition("small_ball_check needs ||x_i|| >= 1/10".into()));
    }
    let m = system.len();
    let threshold = (m as f64).ln().sqrt() / 100.0;
    let hits = chunked(rng, samples, |r, len| {
        (0..len)
            .map(|_| {
                let g = sample_gaussian_vector(m, r);
                system.ambient.eval(&system.combination(&g).expect("matching length")) < threshold
            })
            .collect()
    });
    let fraction = hits.iter().filter(|&&h| h).count() as f64 / samples as f64;
    let sigma = (fraction * (1.0 - fraction) / samples as f64).sqrt();
    Ok(SmallBallReport {
        fraction,
        sigma,
        threshold,
        samples,
        within_bound: fraction <= 2.0 / 3.0 + 3.0 * sigma,
    })
}

/// Retries allowed in [`select_good_blocks`].
pub const SELECTION_RETRIES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSelection {
    /// Disjoint index blocks `σⱼ`, each of size `⌊√n⌋`.
    pub blocks: Vec<Vec<usize>>,
    /// Indices `j` with `‖∑_{i∈σⱼ} gᵢxᵢ‖ > √(ln n)/200`.
    pub selected: Vec<usize>,
    /// `‖ȳⱼ‖` for every block on the recorded draw.
    pub block_norms: Vec<f64>,
    /// `yⱼ = ȳⱼ/‖ȳⱼ‖` for `j ∈ J`, in the order of `selected`.
    pub y_vectors: Vec<Vec<f64>>,
    pub threshold: f64,
    pub gaussian_draw_seed: u64,
    pub gaussian_draw_stream: u64,
    /// 1-based index of the recorded draw.
    pub draws_used: usize,
    pub success: bool,
}

/// Partition into `⌊√n⌋` blocks, draw Gaussians, keep the blocks whose
/// combination exceeds `√(ln n)/200`; redraw until `|J| ≥ ⌊√n⌋/4` or the
/// retry budget runs out (then the best draw is reported with
/// `success = false`).
pub fn select_good_blocks(system: &VectorSystem, rng: &mut RandomSource) -> Result<BlockSelection> {
    let n = system.len();
    if n < 16 {
        return Err(Error::Precondition(format!("block selection needs n >= 16, got {n}")));
    }
    let b = isqrt(n);
    let blocks: Vec<Vec<usize>> = (0..b).map(|j| (j * b..(j + 1) * b).collect()).collect();
    let threshold = (n as f64).ln().sqrt() / 200.0;
    let base = rng.fork();
    let mut best: Option<BlockSelection> = None;
    for draw in 0..SELECTION_RETRIES {
        let mut local = base.substream(draw as u64);
        let g = sample_gaussian_vector(n, &mut local);
        let mut block_norms = Vec::with_capacity(b);
        let mut selected = Vec::new();
        let mut y_vectors = Vec::new();
        for (j, block) in blocks.iter().enumerate() {
            let mut ybar = vec![0.0; system.dim()];
            for &i in block {
                for (o, x) in ybar.iter_mut().zip(&system.vectors[i]) {
                    *o += g[i] * x;
                }
            }
            let r = system.ambient.eval(&ybar);
            block_norms.push(r);
            if r > threshold {
                selected.push(j);
                y_vectors.push(ybar.iter().map(|v| v / r).collect());
            }
        }
        let success = 4 * selected.len() >= b;
        let candidate = BlockSelection {
            blocks: blocks.clone(),
            selected,
            block_norms,
            y_vectors,
            threshold,
            gaussian_draw_seed: local.master_seed(),
            gaussian_draw_stream: local.stream_id(),
            draws_used: draw + 1,
            success,
        };
        if success {
            return Ok(candidate);
        }
        if best.as_ref().is_none_or(|bst| candidate.selected.len() > bst.selected.len()) {
            best = Some(candidate);
        }
    }
    let mut best = best.expect("at least one draw");
    best.draws_used = SELECTION_RETRIES;
    Ok(best)
}

/// Knobs for [`gaussian_linf_subspace`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinfOptions {
    /// Gaussian samples for estimating `L` when it is not supplied.
    pub gaussian_samples: usize,
    pub rademacher_samples: usize,
}

impl Default for LinfOptions {
    fn default() -> Self {
        LinfOptions {
            gaussian_samples: 2000,
            rademacher_samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinfSubspace {
    pub selection: BlockSelection,
    /// The extracted sub-system of the `yⱼ`.
    pub system: VectorSystem,
    /// Block indices of the extracted vectors, in order of addition.
    pub chosen: Vec<usize>,
    pub requested_count: usize,
    pub constant: BasisConstant,
    /// Exact constant after each greedy addition.
    pub greedy_constants: Vec<f64>,
    /// `L` with `E‖∑gᵢxᵢ‖ ≤ L√(ln n)`.
    pub l: f64,
    pub l_estimated: bool,
    /// `E_r‖∑_{j∈J} rⱼyⱼ‖` over all selected blocks.
    pub rademacher: Estimate,
    /// `rademacher.mean ≤ 80L + 3σ`.
    pub rademacher_within_bound: bool,
    pub note: String,
}

/// Select good Gaussian blocks, then grow an `ℓ∞`-like sub-system of the
/// `yⱼ` greedily: each round adds the vector that keeps the exact basis
/// constant smallest.
pub fn gaussian_linf_subspace(
    system: &VectorSystem,
    target_count: usize,
    l: Option<f64>,
    opts: &LinfOptions,
    rng: &mut RandomSource,
) -> Result<LinfSubspace> {
    if target_count == 0 || target_count > MAX_EXACT {
        return Err(invalid(format!("target_count must lie in 1..={MAX_EXACT}")));
    }
    if system.min_norm() < 0.1 * (1.0 - NORM_SLACK) {
        return Err(Error::Precondition("needs ||x_i|| >= 1/10".into()));
    }
    let n = system.len();
    let log_n = (n as f64).ln().sqrt();
    let (l, l_estimated) = match l {
        Some(l) if l > 0.0 => (l, false),
        Some(l) => return Err(invalid(format!("L must be positive, got {l}"))),
        None => {
            if opts.gaussian_samples == 0 {
                return Err(invalid("gaussian_samples must be at least 1"));
            }
            let values = chunked(&mut rng.fork(), opts.gaussian_samples, |r, len| {
                (0..len)
                    .map(|_| {
                        let g = sample_gaussian_vector(n, r);
                        system.ambient.eval(&system.combination(&g).expect("matching length"))
                    })
                    .collect()
            });
            (Estimate::from_samples(&values).mean / log_n, true)
        }
    };
    let selection = select_good_blocks(system, rng)?;
    if !selection.success {
        return Err(Error::SelectionFailed(format!(
            "no draw in {SELECTION_RETRIES} gave |J| >= floor(sqrt n)/4 (best |J| = {} of {}); \
             the hypothesis E||sum g_i x_i|| <= L sqrt(log n) may be badly violated or n too small",
            selection.selected.len(),
            selection.blocks.len()
        )));
    }
    let ys = VectorSystem::new(system.ambient.clone(), selection.y_vectors.clone(), 1.0)?;
    let count = target_count.min(ys.len());

    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    let mut greedy_constants = Vec::with_capacity(count);
    while chosen.len() < count {
        let mut best: Option<(f64, usize)> = None;
        for j in 0..ys.len() {
            if chosen.contains(&j) {
                continue;
            }
            let mut trial = chosen.clone();
            trial.push(j);
            let c = linf_basis_constant(&ys.subsystem(&trial)?)?.value;
            if best.is_none_or(|b| c < b.0) {
                best = Some((c, j));
            }
        }
        let (c, j) = best.expect("enough candidates");
        chosen.push(j);
        greedy_constants.push(c);
    }
    let extracted = ys.subsystem(&chosen)?;
    let constant = linf_basis_constant(&extracted)?;

    if opts.rademacher_samples == 0 {
        return Err(invalid("rademacher_samples must be at least 1"));
    }
    let values = chunked(rng, opts.rademacher_samples, |r, len| {
        (0..len)
            .map(|_| {
                let s = sample_signs(ys.len(), r);
                ys.ambient.eval(&ys.combination(&s).expect("matching length"))
            })
            .collect()
    });
    let rademacher = Estimate::from_samples(&values);
    let within = rademacher.mean <= 80.0 * l + 3.0 * rademacher.stderr;
    Ok(LinfSubspace {
        chosen: chosen.iter().map(|&j| selection.selected[j]).collect(),
        selection,
        system: extracted,
        requested_count: target_count,
        constant,
        greedy_constants,
        l,
        l_estimated,
        rademacher,
        rademacher_within_bound: within,
        note: "the sub-system is found by greedy exact enumeration, which certifies its constant \
               but does not guarantee the n^(1/4)/CL dimension"
            .into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_system(m: usize, n: usize, rng: &mut RandomSource) -> VectorSystem {
        VectorSystem::new(NormSpec::l2(n), (0..m).map(|_| sample_sphere(n, rng)).collect(), 1.0).unwrap()
    }

    /// All `2^m` sign vectors, summed left to right.
    fn brute_force(system: &VectorSystem) -> f64 {
        let m = system.len();
        let mut best = f64::NEG_INFINITY;
        for bits in 0u32..1 << m {
            let mut s = vec![0.0; system.dim()];
            for (i, x) in system.vectors.iter().enumerate() {
                let e = if bits >> i & 1 == 1 { -1.0 } else { 1.0 };
                for (o, xi) in s.iter_mut().zip(x) {
                    *o += e * xi;
                }
            }
            best = best.max(system.ambient.eval(&s));
        }
        best
    }

    #[test]
    fn small_constants() {
        let l = linf_basis_constant(&VectorSystem::standard_basis(NormSpec::linf(2)).unwrap()).unwrap();
        assert_eq!(l.value, 1.0);
        assert!(l.is_exact());
        let l = linf_basis_constant(&VectorSystem::standard_basis(NormSpec::l2(2)).unwrap()).unwrap();
        assert!((l.value - 2f64.sqrt()).abs() < 1e-15);
        let l = linf_basis_constant(&VectorSystem::aligned(NormSpec::l1(3), vec![1.0, 0.0, 0.0], 2).unwrap()).unwrap();
        assert_eq!(l.value, 2.0);
        let one = VectorSystem::new(NormSpec::l1(2), vec![vec![0.5, -1.5]], 1.0).unwrap();
        assert_eq!(linf_basis_constant(&one).unwrap().value, 2.0);
    }

    #[test]
    fn enumeration_matches_brute_force_bit_exactly() {
        let mut rng = RandomSource::new(21, 0);
        for m in 1..=12 {
            for spec in [NormSpec::l2(7), NormSpec::l1(7), NormSpec::linf(7), NormSpec::lp(3.0, 7)] {
                let vectors = (0..m).map(|_| sample_gaussian_vector(7, &mut rng)).collect();
                let sys = VectorSystem::new(spec, vectors, 0.0).unwrap();
                let fast = linf_basis_constant(&sys).unwrap();
                assert_eq!(fast.value.to_bits(), brute_force(&sys).to_bits(), "m={m}");
                let at = sys.ambient.eval(&sys.combination(&fast.signs).unwrap());
                assert_eq!(at.to_bits(), fast.value.to_bits());
            }
        }
    }

    #[test]
    fn enumeration_size_limit() {
        let sys = VectorSystem::standard_basis(NormSpec::linf(25)).unwrap();
        assert!(matches!(linf_basis_constant(&sys), Err(Error::SizeLimit(_))));
        let s = linf_basis_constant_sampled(&sys, 10, &mut RandomSource::new(0, 0)).unwrap();
        assert_eq!(s.value, 1.0);
        assert!(!s.is_exact());
    }

    #[test]
    fn sampled_constant_is_a_lower_bound() {
        let mut rng = RandomSource::new(22, 0);
        let sys = random_system(12, 5, &mut rng);
        let exact = linf_basis_constant(&sys).unwrap().value;
        let sampled = linf_basis_constant_sampled(&sys, 50, &mut rng).unwrap().value;
        assert!(sampled <= exact);
        assert!(sampled >= 0.9 * exact);
    }

    #[test]
    fn james_step_fixed_point_and_aligned() {
        let sys = VectorSystem::standard_basis(NormSpec::linf(16)).unwrap();
        let step = james_step(&sys, Some(1.0)).unwrap();
        assert_eq!(step.output_constant.value, 1.0);
        assert_eq!(step.system.len(), 4);

        let aligned = VectorSystem::aligned(NormSpec::l2(3), vec![1.0, 0.0, 0.0], 16).unwrap();
        let step = james_step(&aligned, Some(16.0)).unwrap();
        assert_eq!(step.system.len(), 4);
        assert!(step.output_constant.value <= 4.0);
    }

    #[test]
    fn james_step_contract_on_random_systems() {
        let mut rng = RandomSource::new(23, 0);
        for _ in 0..10 {
            let sys = random_system(16, 16, &mut rng);
            let l = linf_basis_constant(&sys).unwrap().value;
            let step = james_step(&sys, None).unwrap();
            assert!(step.output_constant.value <= l.sqrt() + 1e-12);
            assert!(step.system.min_norm() >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn james_step_rejects_false_hypothesis() {
        let sys = VectorSystem::standard_basis(NormSpec::l2(16)).unwrap();
        assert!(matches!(james_step(&sys, Some(2.0)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn james_iteration_on_aligned_system() {
        assert_eq!(james_steps_needed(16.0, 1.0), 2);
        assert_eq!(james_steps_needed(1.5, 1.0), 0);
        let aligned = VectorSystem::aligned(NormSpec::linf(2), vec![1.0, 0.0], 256).unwrap();
        let it = james_iterate(&aligned, 1.0, None).unwrap();
        let constants: Vec<f64> = it.levels.iter().map(|l| l.constant).collect();
        assert_eq!(constants, vec![256.0, 16.0, 4.0, 2.0]);
        assert!(it.reached_target);
        assert_eq!(it.two_sided, Some(true));
    }

    #[test]
    fn sup_norm_closed_form_matches_enumeration() {
        let mut rng = RandomSource::new(29, 0);
        for spec in [NormSpec::linf(6), NormSpec::weighted_sup(vec![1.0, 0.5, 2.0, 1.0, 3.0, 0.25]).unwrap()] {
            let vectors = (0..9).map(|_| sample_gaussian_vector(6, &mut rng)).collect();
            let sys = VectorSystem::new(spec, vectors, 0.0).unwrap();
            let closed = sup_norm_basis_constant(&sys).unwrap();
            assert!((closed - linf_basis_constant(&sys).unwrap().value).abs() < 1e-12);
        }
        assert!(sup_norm_basis_constant(&random_system(3, 3, &mut rng)).is_none());
        let big = VectorSystem::standard_basis(NormSpec::linf(256)).unwrap();
        let it = james_iterate(&big, 0.5, None).unwrap();
        assert_eq!(it.levels[0].source, ConstantSource::ClosedForm);
        assert_eq!(it.final_constant, 1.0);
    }

    #[test]
    fn james_iteration_identity_when_already_good() {
        let sys = VectorSystem::standard_basis(NormSpec::linf(9)).unwrap();
        let it = james_iterate(&sys, 0.5, None).unwrap();
        assert_eq!(it.steps_taken, 0);
        assert_eq!(it.system, sys);
        assert_eq!(it.two_sided, Some(true));
    }

    #[test]
    fn net_embedding_distortion() {
        let mut rng = RandomSource::new(24, 0);
        let e = net_embedding_l2_to_linf(1, 0.5, &mut rng).unwrap();
        assert_eq!(e.n, 2);
        assert!((e.distortion - 1.0).abs() < 1e-15);
        let e = net_embedding_l2_to_linf(2, 0.1, &mut rng).unwrap();
        assert!(e.distortion <= 1.0 / (1.0 - 0.005), "{}", e.distortion);
        let e = net_embedding_l2_to_linf(3, 0.5, &mut rng).unwrap();
        assert!(e.n <= 125);
        assert!(e.distortion <= 1.0 / (1.0 - 0.125));
    }

    #[test]
    fn dimension_bounds() {
        let v = linf_upper_bound_dim(1_000_000, 1.0 / 64.0).unwrap();
        assert!((v - 4.0 * 1e6f64.ln() / 2f64.ln()).abs() < 1e-12);
        assert!((v - 79.7).abs() < 0.05);
        assert!(linf_upper_bound_dim(1000, 0.01).unwrap() > linf_upper_bound_dim(1000, 0.001).unwrap());
        assert!(matches!(linf_upper_bound_dim(1000, 1.0 / 32.0), Err(Error::Domain(_))));

        assert!((gaussian_abs_moment(2.0) - 1.0).abs() < 1e-12);
        assert!((gaussian_abs_moment(4.0) - 3.0).abs() < 1e-12);
        assert!((gaussian_abs_moment(1.0) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!((bdgjn_upper_bound(4.0, 1.0, 10_000, None).unwrap() - 3f64.sqrt() * 100.0).abs() < 1e-9);
        assert!((bdgjn_upper_bound(2.0, 3.0, 50, None).unwrap() - 450.0).abs() < 1e-9);
        assert!(bdgjn_upper_bound(4.0, 0.5, 10, None).is_err());
    }

    #[test]
    fn sign_flip_examples() {
        let mut rng = RandomSource::new(25, 0);
        let pair = VectorSystem::aligned(NormSpec::l2(2), vec![1.0, 0.0], 2).unwrap();
        let p = sign_flip_probability(&pair, &[1.0, 1.0], SignMode::Exact, &mut rng).unwrap();
        assert_eq!(p.value, 0.5);
        let single = VectorSystem::new(NormSpec::l1(3), vec![vec![0.2, 0.5, -0.3]], 1.0).unwrap();
        assert_eq!(sign_flip_probability(&single, &[1.0], SignMode::Exact, &mut rng).unwrap().value, 0.0);
        for _ in 0..20 {
            let sys = random_system(8, 8, &mut rng);
            let a = sample_gaussian_vector(8, &mut rng);
            assert!(sign_flip_probability(&sys, &a, SignMode::Exact, &mut rng).unwrap().value <= 0.5);
        }
        let s = sign_flip_probability(&pair, &[1.0, 1.0], SignMode::Sampled(4000), &mut rng).unwrap();
        assert!((s.value - 0.5).abs() < 4.0 * s.stderr);
    }

    #[test]
    fn small_ball_examples() {
        let mut rng = RandomSource::new(26, 0);
        for spec in [NormSpec::l2(256), NormSpec::linf(256)] {
            let r = small_ball_check(&VectorSystem::standard_basis(spec).unwrap(), 2000, &mut rng).unwrap();
            assert_eq!(r.fraction, 0.0);
            assert!(r.within_bound);
        }
        let tenth = VectorSystem::aligned(NormSpec::l2(4), vec![0.1, 0.0, 0.0, 0.0], 256).unwrap();
        let r = small_ball_check(&tenth, 4000, &mut rng).unwrap();
        assert!(r.within_bound, "{r:?}");
    }

    #[test]
    fn block_selection_examples() {
        let mut rng = RandomSource::new(27, 0);
        for spec in [NormSpec::l2(256), NormSpec::linf(256)] {
            let sel = select_good_blocks(&VectorSystem::standard_basis(spec).unwrap(), &mut rng).unwrap();
            assert!(sel.success);
            assert_eq!(sel.selected.len(), 16);
            assert_eq!(sel.draws_used, 1);
            for b in &sel.blocks {
                assert_eq!(b.len(), 16);
            }
        }
        let sel = select_good_blocks(&VectorSystem::standard_basis(NormSpec::l1(20)).unwrap(), &mut rng).unwrap();
        assert_eq!(sel.blocks.len(), 4);
        assert!(!sel.selected.is_empty());
        for y in &sel.y_vectors {
            assert!((NormSpec::l1(20).eval(y) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linf_subspace_positive_and_negative_controls() {
        let mut rng = RandomSource::new(28, 0);
        let cube = VectorSystem::standard_basis(NormSpec::linf(256)).unwrap();
        let out = gaussian_linf_subspace(&cube, 8, None, &LinfOptions::default(), &mut rng).unwrap();
        assert_eq!(out.constant.value, 1.0);
        assert!(out.rademacher_within_bound);

        let ball = VectorSystem::standard_basis(NormSpec::l2(256)).unwrap();
        let out = gaussian_linf_subspace(&ball, 6, None, &LinfOptions::default(), &mut rng).unwrap();
        assert!((out.constant.value - 6f64.sqrt()).abs() < 1e-9);

        let out = gaussian_linf_subspace(&ball, 1, Some(1.0), &LinfOptions::default(), &mut rng).unwrap();
        assert!((out.constant.value - 1.0).abs() < 1e-12);
    }
}
