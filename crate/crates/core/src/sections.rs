//! Almost-Euclidean sections.
//!
//! * [`norm_extremum_on_section`] maximizes or minimizes `y ↦ ‖F·y‖` over the
//!   unit sphere of a section `F`. Maximization uses projected subgradient
//!   ascent with unbounded step, `y ← Fᵀg/‖Fᵀg‖` for `g ∈ ∂‖F·y‖`, which never
//!   decreases a convex 1-homogeneous objective. Minimization uses Riemannian
//!   gradient descent with Armijo backtracking on a smoothed surrogate, with
//!   the smoothing scale shrunk geometrically. Both only return values
//!   actually attained, so a maximum is a lower bound on the true maximum and
//!   a minimum an upper bound on the true minimum.
//! * [`dvoretzky_rogers_basis`] picks, greedily, a unit vector of maximal norm
//!   orthogonal to those already chosen.
//! * [`find_euclidean_section`] is the randomized search: sample a subspace,
//!   test the norm against `(1±ε)E` on a fixed net of it, amplify.
//! * [`kmax_search`] looks for the largest dimension with a random section of
//!   distortion at most `1+ε`.

use serde::{Deserialize, Serialize};

use crate::concentration::estimate_sphere_mean;
use crate::error::{check_dim, invalid, Error, Result};
use crate::nets::{amplify_net_bounds, build_net_limited, CertifiedInterval, NetBudget};
use crate::norms::{comparison_constants, NormSpec};
use crate::random::{sample_sphere, sample_subspace, OrthoFrame, RandomSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Max,
    Min,
}

/// Iteration limits for the sphere optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub ascent_iters: usize,
    pub stage_iters: usize,
    /// First and last smoothing scale, relative to the objective value.
    pub mu_start: f64,
    pub mu_end: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            ascent_iters: 500,
            stage_iters: 80,
            mu_start: 0.05,
            mu_end: 1e-11,
        }
    }
}

impl OptimizerSettings {
    /// Coarser settings for screening many large sections.
    pub fn fast() -> Self {
        OptimizerSettings {
            ascent_iters: 60,
            stage_iters: 25,
            mu_start: 0.05,
            mu_end: 1e-4,
        }
    }
}

/// Best value found, its witness, and the per-restart values (their
/// agreement is the optimizer's quality signal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub value: f64,
    /// Unit vector in the section, in ambient coordinates.
    pub witness: Vec<f64>,
    /// The same vector in section coordinates.
    pub coords: Vec<f64>,
    pub restart_values: Vec<f64>,
}

impl Extremum {
    /// Number of restarts that landed within `tol` (relative) of the best.
    pub fn agreement(&self, tol: f64) -> usize {
        self.restart_values
            .iter()
            .filter(|v| (*v - self.value).abs() <= tol * self.value.abs().max(1e-300))
            .count()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let r = dot(v, v).sqrt();
    if r > 0.0 {
        v.iter_mut().for_each(|x| *x /= r);
    }
    r
}

struct Workspace<'a> {
    spec: &'a NormSpec,
    frame: &'a OrthoFrame,
    ambient: Vec<f64>,
    grad: Vec<f64>,
}

impl<'a> Workspace<'a> {
    fn new(spec: &'a NormSpec, frame: &'a OrthoFrame) -> Self {
        Workspace {
            spec,
            frame,
            ambient: vec![0.0; frame.n()],
            grad: vec![0.0; frame.n()],
        }
    }

    fn value(&mut self, y: &[f64]) -> f64 {
        self.frame.apply_into(y, &mut self.ambient);
        self.spec.eval(&self.ambient)
    }

    /// Smoothed value at `y`; leaves `∇` (pulled back to ℝᵏ) in the return.
    fn smoothed_with_grad(&mut self, y: &[f64], mu: f64) -> (f64, Vec<f64>) {
        self.frame.apply_into(y, &mut self.ambient);
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let s = self.spec.add_smoothed(&self.ambient, mu, 1.0, &mut self.grad);
        (s, self.frame.apply_transpose(&self.grad))
    }

    fn smoothed(&mut self, y: &[f64], mu: f64) -> f64 {
        self.frame.apply_into(y, &mut self.ambient);
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        self.spec.add_smoothed(&self.ambient, mu, 1.0, &mut self.grad)
    }

    fn ascend(&mut self, start: Vec<f64>, iters: usize) -> (f64, Vec<f64>) {
        let mut y = start;
        let mut f = self.value(&y);
        for _ in 0..iters {
            self.grad.iter_mut().for_each(|g| *g = 0.0);
            self.spec.add_subgradient(&self.ambient, 1.0, &mut self.grad);
            let mut next = self.frame.apply_transpose(&self.grad);
            if normalize(&mut next) == 0.0 {
                break;
            }
            let f_next = self.value(&next);
            if f_next <= f * (1.0 + 1e-14) {
                if f_next > f {
                    y = next;
                }
                break;
            }
            y = next;
            f = f_next;
        }
        // Recompute so that `ambient` and the reported value match `y`.
        let f = self.value(&y);
        (f, y)
    }

    fn descend(&mut self, start: Vec<f64>, settings: &OptimizerSettings) -> (f64, Vec<f64>) {
        let mut y = start;
        let mut best_y = y.clone();
        let mut best = self.value(&y);
        let scale = best.max(1e-300);
        let mut mu = settings.mu_start * scale;
        let mu_end = settings.mu_end * scale;
        while mu >= mu_end {
            let mut eta: Option<f64> = None;
            let mut stalled = 0;
            for _ in 0..settings.stage_iters {
                let (s, g) = self.smoothed_with_grad(&y, mu);
                let gy = dot(&g, &y);
                let tangent: Vec<f64> = g.iter().zip(&y).map(|(gi, yi)| gi - gy * yi).collect();
                let tn2 = dot(&tangent, &tangent);
                if tn2.sqrt() <= 1e-14 * s {
                    break;
                }
                let mut step = eta.unwrap_or(0.1 / tn2.sqrt());
                let mut accepted = false;
                for _ in 0..40 {
                    let mut cand: Vec<f64> = y.iter().zip(&tangent).map(|(yi, ti)| yi - step * ti).collect();
                    normalize(&mut cand);
                    let s_new = self.smoothed(&cand, mu);
                    if s_new <= s - 1e-4 * step * tn2 {
                        let f = self.value(&cand);
                        if f < best {
                            best = f;
                            best_y.clone_from(&cand);
                        }
                        stalled = if s - s_new <= 1e-13 * s { stalled + 1 } else { 0 };
                        y = cand;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted || stalled >= 3 {
                    break;
                }
                eta = Some(step * 2.0);
            }
            mu *= 0.1;
        }
        (best, best_y)
    }
}

/// Optimize from the given starting coordinates (each a unit vector in ℝᵏ).
pub(crate) fn extremum_from_starts(
    spec: &NormSpec,
    frame: &OrthoFrame,
    direction: Direction,
    starts: Vec<Vec<f64>>,
    settings: &OptimizerSettings,
) -> Extremum {
    let mut ws = Workspace::new(spec, frame);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut restart_values = Vec::with_capacity(starts.len());
    for start in starts {
        let (value, coords) = match direction {
            Direction::Max => ws.ascend(start, settings.ascent_iters),
            Direction::Min => ws.descend(start, settings),
        };
        restart_values.push(value);
        let better = match (&best, direction) {
            (None, _) => true,
            (Some((b, _)), Direction::Max) => value > *b,
            (Some((b, _)), Direction::Min) => value < *b,
        };
        if better {
            best = Some((value, coords));
        }
    }
    let (_, coords) = best.expect("at least one start");
    let witness = frame.apply(&coords);
    Extremum {
        value: spec.eval(&witness),
        witness,
        coords,
        restart_values,
    }
}

/// Multi-start maximization or minimization of `‖·‖` over the unit sphere
/// of the section spanned by `frame`.
pub fn norm_extremum_on_section(
    spec: &NormSpec,
    frame: &OrthoFrame,
    direction: Direction,
    restarts: usize,
    rng: &mut RandomSource,
) -> Result<Extremum> {
    norm_extremum_with(spec, frame, direction, restarts, &OptimizerSettings::default(), rng)
}

pub fn norm_extremum_with(
    spec: &NormSpec,
    frame: &OrthoFrame,
    direction: Direction,
    restarts: usize,
    settings: &OptimizerSettings,
    rng: &mut RandomSource,
) -> Result<Extremum> {
    check_dim(spec.dim(), frame.n())?;
    if restarts == 0 {
        return Err(invalid("restarts must be at least 1"));
    }
    let starts = (0..restarts).map(|_| sample_sphere(frame.k(), rng)).collect();
    Ok(extremum_from_starts(spec, frame, direction, starts, settings))
}

// ---------------------------------------------------------------------------
// Dvoretzky–Rogers basis

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentStep {
    pub best: f64,
    /// Restarts within 1e-6 of the best value.
    pub agreeing_restarts: usize,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrBasis {
    pub frame: OrthoFrame,
    pub norms: Vec<f64>,
    pub ascent_report: Vec<AscentStep>,
}

impl DrBasis {
    /// `e^{-1}(1 − (i−1)/n)` for 1-based `i`.
    pub fn lower_bound(i: usize, n: usize) -> f64 {
        (1.0 - (i as f64 - 1.0) / n as f64) / std::f64::consts::E
    }

    /// Indices (1-based) where the achieved norm falls below the bound by
    /// more than `tol`.
    pub fn violations(&self, tol: f64) -> Vec<usize> {
        let n = self.norms.len();
        (1..=n)
            .filter(|&i| self.norms[i - 1] < Self::lower_bound(i, n) - tol)
            .collect()
    }
}

/// Orthonormal basis of `y^⊥` inside the span of `complement`, via the
/// Householder reflector that maps `e₁` to `±y`.
fn shrink_complement(complement: &nalgebra::DMatrix<f64>, y: &[f64]) -> nalgebra::DMatrix<f64> {
    let d = y.len();
    let s = if y[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut u: Vec<f64> = y.iter().map(|v| s * v).collect();
    u[0] += 1.0;
    normalize(&mut u);
    // H = I − 2uuᵀ; columns 1.. of C·H.
    let cu = complement * nalgebra::DVector::from_column_slice(&u);
    let n = complement.nrows();
    nalgebra::DMatrix::from_fn(n, d - 1, |r, c| complement[(r, c + 1)] - 2.0 * cu[r] * u[c + 1])
}

/// Greedy Dvoretzky–Rogers basis. The norm must be normalized so that
/// `b_upper = 1` (Euclidean ball touching the unit ball from inside).
pub fn dvoretzky_rogers_basis(spec: &NormSpec, n: usize, restarts: usize, rng: &mut RandomSource) -> Result<DrBasis> {
    check_dim(spec.dim(), n)?;
    let c = comparison_constants(spec)?;
    if (c.b_upper - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "norm must satisfy b_upper = 1 (got {}); rescale it first",
            c.b_upper
        )));
    }
    if restarts == 0 {
        return Err(invalid("restarts must be at least 1"));
    }
    let settings = OptimizerSettings::default();
    let mut complement = nalgebra::DMatrix::<f64>::identity(n, n);
    let mut chosen: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut norms = Vec::with_capacity(n);
    let mut report = Vec::with_capacity(n);
    for _ in 0..n {
        let frame = OrthoFrame::from_matrix_unchecked(complement.clone());
        let ext = norm_extremum_with(spec, &frame, Direction::Max, restarts, &settings, rng)?;
        report.push(AscentStep {
            best: ext.value,
            agreeing_restarts: ext.agreement(1e-6),
            restarts,
        });
        norms.push(ext.value);
        chosen.push(ext.witness);
        if complement.ncols() > 1 {
            complement = shrink_complement(&complement, &ext.coords);
        }
    }
    let frame = OrthoFrame::from_columns(n, &chosen)?;
    Ok(DrBasis {
        frame,
        norms,
        ascent_report: report,
    })
}

// ---------------------------------------------------------------------------
// Milman's randomized section search

/// `max(1, ⌊c · ε²/ln(3/ε) · (E/b)² · n⌋)`.
pub fn milman_candidate_dim(mean: f64, b: f64, eps: f64, n: usize, c: f64) -> Result<usize> {
    if !(mean >= 0.0 && b > 0.0 && eps > 0.0 && eps < 3.0 && c > 0.0) {
        return Err(invalid("need E >= 0, b > 0, 0 < eps < 3 and c > 0"));
    }
    let ratio = mean / b;
    let k = (c * eps * eps / (3.0 / eps).ln() * ratio * ratio * n as f64).floor();
    Ok((k as usize).max(1))
}

/// Knobs for [`find_euclidean_section`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinderOptions {
    /// Sphere samples used to estimate `E`.
    pub mean_samples: usize,
    pub net_budget: NetBudget,
    pub max_net_points: usize,
    pub distortion_samples: usize,
    pub distortion_restarts: usize,
}

impl Default for FinderOptions {
    fn default() -> Self {
        FinderOptions {
            mean_samples: 4000,
            net_budget: NetBudget::default(),
            max_net_points: 50_000,
            distortion_samples: 256,
            distortion_restarts: 8,
        }
    }
}

/// Summary of the net a certificate was checked on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetSummary {
    pub k: usize,
    pub eps: f64,
    pub size: usize,
    pub seed: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionCertificate {
    pub subspace: OrthoFrame,
    /// `None` when the norm is analytically Euclidean and no net is needed.
    pub net: Option<NetSummary>,
    pub net_min: f64,
    pub net_max: f64,
    pub mean_estimate: f64,
    pub certified_interval: CertifiedInterval,
    pub empirical_distortion: f64,
    pub attempts_used: usize,
    pub seed: u64,
    pub stream: u64,
    pub target_eps: f64,
}

impl SectionCertificate {
    /// Norms of `samples` fresh uniform points of the section falling
    /// outside the certified interval.
    pub fn violations(&self, spec: &NormSpec, samples: usize, rng: &mut RandomSource) -> usize {
        (0..samples)
            .filter(|_| {
                let y = sample_sphere(self.subspace.k(), rng);
                !self.certified_interval.contains(spec.eval(&self.subspace.apply(&y)))
            })
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub reason: String,
    pub attempts_used: usize,
    /// Smallest `max(A/E − 1, 1 − B/E)` over attempts.
    pub best_deviation: Option<f64>,
    pub best_net_min: Option<f64>,
    pub best_net_max: Option<f64>,
    pub seed: u64,
    pub target_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum SectionOutcome {
    Certified(Box<SectionCertificate>),
    Failed(FailureReport),
}

impl SectionOutcome {
    pub fn certificate(&self) -> Option<&SectionCertificate> {
        match self {
            SectionOutcome::Certified(c) => Some(c),
            SectionOutcome::Failed(_) => None,
        }
    }
}

/// Randomized search for a `k`-dimensional section on which
/// `(1−ε)E ≤ ‖x‖ ≤ (1+ε)E` holds on an `ε/2`-net; the net bounds are then
/// amplified to the whole section and an independent distortion
/// measurement is attached.
pub fn find_euclidean_section(
    spec: &NormSpec,
    n: usize,
    eps: f64,
    k: usize,
    max_attempts: usize,
    rng: &mut RandomSource,
    opts: &FinderOptions,
) -> Result<SectionOutcome> {
    check_dim(spec.dim(), n)?;
    if k == 0 || k > n {
        return Err(invalid(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must lie in (0,1), got {eps}")));
    }
    if max_attempts == 0 {
        return Err(invalid("max_attempts must be at least 1"));
    }
    let seed = rng.master_seed();
    let stream = rng.stream_id();
    let eps_net = eps / 2.0;
    let constants = comparison_constants(spec)?;
    let failure = |reason: String, attempts_used, best: Option<(f64, f64, f64)>| FailureReport {
        reason,
        attempts_used,
        best_deviation: best.map(|b| b.0),
        best_net_min: best.map(|b| b.1),
        best_net_max: best.map(|b| b.2),
        seed,
        target_eps: eps,
    };

    if k == n && constants.analytic && constants.distortion() > (1.0 + eps) / (1.0 - eps) {
        return Ok(SectionOutcome::Failed(failure(
            format!(
                "the only {n}-dimensional section is the whole space, whose distortion {:.6} exceeds (1+eps)/(1-eps)",
                constants.distortion()
            ),
            0,
            None,
        )));
    }

    let attempts_rng = rng.fork();
    if constants.analytic && constants.b_upper == constants.b_lower {
        let b = constants.b_upper;
        let subspace = sample_subspace(n, k, &mut attempts_rng.substream(0))?;
        return Ok(SectionOutcome::Certified(Box::new(SectionCertificate {
            subspace,
            net: None,
            net_min: b,
            net_max: b,
            mean_estimate: b,
            certified_interval: amplify_net_bounds(b, b, eps_net)?,
            empirical_distortion: 1.0,
            attempts_used: 1,
            seed,
            stream,
            target_eps: eps,
        })));
    }

    let mean = estimate_sphere_mean(spec, n, opts.mean_samples, &mut rng.fork())?.mean;
    let mut net_rng = rng.fork();
    let net = build_net_limited(k, eps_net, opts.net_budget, opts.max_net_points, &mut net_rng)?;
    let summary = NetSummary {
        k,
        eps: eps_net,
        size: net.len(),
        seed: net.seed,
        stream: net.stream,
    };

    let mut best: Option<(f64, f64, f64)> = None;
    for attempt in 0..max_attempts {
        let mut local = attempts_rng.substream(attempt as u64);
        let subspace = sample_subspace(n, k, &mut local)?;
        let (lo, hi) = net.points.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
            let v = spec.eval(&subspace.apply(p));
            (lo.min(v), hi.max(v))
        });
        let deviation = (hi / mean - 1.0).max(1.0 - lo / mean);
        if best.is_none_or(|b| deviation < b.0) {
            best = Some((deviation, lo, hi));
        }
        if (1.0 - eps) * mean <= lo && hi <= (1.0 + eps) * mean {
            let certified_interval = amplify_net_bounds(lo, hi, eps_net)?;
            let measured = measure_distortion(
                spec,
                &subspace,
                opts.distortion_samples,
                opts.distortion_restarts,
                &mut local,
            )?;
            return Ok(SectionOutcome::Certified(Box::new(SectionCertificate {
                subspace,
                net: Some(summary),
                net_min: lo,
                net_max: hi,
                mean_estimate: mean,
                certified_interval,
                empirical_distortion: measured.distortion,
                attempts_used: attempt + 1,
                seed,
                stream,
                target_eps: eps,
            })));
        }
    }
    Ok(SectionOutcome::Failed(failure(
        format!("no sampled subspace passed the net test in {max_attempts} attempts"),
        max_attempts,
        best,
    )))
}

// ---------------------------------------------------------------------------
// Distortion measurement

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub max: f64,
    pub min: f64,
    /// `max / min`, a lower bound on the true distortion.
    pub distortion: f64,
    pub max_witness: Vec<f64>,
    pub min_witness: Vec<f64>,
    /// True when the measurement stopped early because the distortion
    /// already exceeded the requested threshold.
    pub aborted: bool,
}

/// Knobs for [`measure_distortion_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureOptions {
    pub samples: usize,
    pub restarts: usize,
    pub settings: OptimizerSettings,
    /// Stop as soon as the distortion is known to exceed this.
    pub abort_above: Option<f64>,
}

/// Empirical distortion of `‖·‖` on the section: sampling plus optimizer
/// runs in both directions, started from the best samples and from random
/// points.
pub fn measure_distortion(
    spec: &NormSpec,
    frame: &OrthoFrame,
    samples: usize,
    restarts: usize,
    rng: &mut RandomSource,
) -> Result<DistortionReport> {
    measure_distortion_with(
        spec,
        frame,
        &MeasureOptions {
            samples,
            restarts,
            settings: OptimizerSettings::default(),
            abort_above: None,
        },
        rng,
    )
}

pub fn measure_distortion_with(
    spec: &NormSpec,
    frame: &OrthoFrame,
    opts: &MeasureOptions,
    rng: &mut RandomSource,
) -> Result<DistortionReport> {
    check_dim(spec.dim(), frame.n())?;
    if opts.samples == 0 {
        return Err(invalid("samples must be at least 1"));
    }
    let k = frame.k();
    let mut ws = Workspace::new(spec, frame);
    // (value, coords) of the two largest and two smallest samples
    let mut top: Vec<(f64, Vec<f64>)> = Vec::with_capacity(3);
    let mut bottom: Vec<(f64, Vec<f64>)> = Vec::with_capacity(3);
    for _ in 0..opts.samples {
        let y = sample_sphere(k, rng);
        let v = ws.value(&y);
        if top.len() < 2 || v > top[top.len() - 1].0 {
            top.push((v, y.clone()));
            top.sort_by(|a, b| b.0.total_cmp(&a.0));
            top.truncate(2);
        }
        if bottom.len() < 2 || v < bottom[bottom.len() - 1].0 {
            bottom.push((v, y));
            bottom.sort_by(|a, b| a.0.total_cmp(&b.0));
            bottom.truncate(2);
        }
    }
    let report = |max: (f64, &[f64]), min: (f64, &[f64]), aborted| DistortionReport {
        max: max.0,
        min: min.0,
        distortion: max.0 / min.0,
        max_witness: frame.apply(max.1),
        min_witness: frame.apply(min.1),
        aborted,
    };
    let exceeds = |max: f64, min: f64| opts.abort_above.is_some_and(|t| max / min > t);
    if exceeds(top[0].0, bottom[0].0) {
        return Ok(report((top[0].0, &top[0].1), (bottom[0].0, &bottom[0].1), true));
    }
    if k == 1 {
        return Ok(report((top[0].0, &top[0].1), (top[0].0, &top[0].1), false));
    }

    let mut starts: Vec<Vec<f64>> = top.iter().map(|t| t.1.clone()).collect();
    starts.extend((0..opts.restarts).map(|_| sample_sphere(k, rng)));
    let hi = extremum_from_starts(spec, frame, Direction::Max, starts, &opts.settings);
    let (max_val, max_coords) = if hi.value >= top[0].0 {
        (hi.value, hi.coords)
    } else {
        (top[0].0, top[0].1.clone())
    };
    if exceeds(max_val, bottom[0].0) {
        return Ok(report((max_val, &max_coords), (bottom[0].0, &bottom[0].1), true));
    }

    let mut starts: Vec<Vec<f64>> = bottom.iter().map(|b| b.1.clone()).collect();
    starts.extend((0..opts.restarts).map(|_| sample_sphere(k, rng)));
    let lo = extremum_from_starts(spec, frame, Direction::Min, starts, &opts.settings);
    let (min_val, min_coords) = if lo.value <= bottom[0].0 {
        (lo.value, lo.coords)
    } else {
        (bottom[0].0, bottom[0].1.clone())
    };
    Ok(report((max_val, &max_coords), (min_val, &min_coords), false))
}

// ---------------------------------------------------------------------------
// Largest Euclidean section

/// Knobs for [`kmax_search`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmaxOptions {
    pub samples: usize,
    pub restarts: usize,
    pub settings: OptimizerSettings,
}

impl Default for KmaxOptions {
    fn default() -> Self {
        KmaxOptions {
            samples: 64,
            restarts: 2,
            settings: OptimizerSettings::fast(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KTrial {
    pub k: usize,
    pub success: bool,
    pub attempts: usize,
    /// Smallest distortion measured at this `k`.
    pub best_distortion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmaxReport {
    pub kmax: usize,
    pub trials: Vec<KTrial>,
}

/// Largest `k` for which a random `k`-dimensional section with measured
/// distortion at most `1+ε` turns up within `attempts_per_k` tries.
///
/// Doubling, then bisection. This assumes success is monotone in `k`, which
/// holds for the true largest section but only approximately for the
/// randomized test.
pub fn kmax_search(
    spec: &NormSpec,
    n: usize,
    eps: f64,
    attempts_per_k: usize,
    rng: &mut RandomSource,
    opts: &KmaxOptions,
) -> Result<KmaxReport> {
    check_dim(spec.dim(), n)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must lie in (0,1), got {eps}")));
    }
    if attempts_per_k == 0 {
        return Err(invalid("attempts_per_k must be at least 1"));
    }
    let constants = comparison_constants(spec)?;
    let whole_space_ok = constants.distortion() <= 1.0 + eps;
    let base = rng.fork();
    let target = 1.0 + eps;
    let mut trials: Vec<KTrial> = Vec::new();
    let mut test = |k: usize| -> Result<bool> {
        if k == 1 || whole_space_ok {
            trials.push(KTrial {
                k,
                success: true,
                attempts: 0,
                best_distortion: if k == 1 { 1.0 } else { constants.distortion() },
            });
            return Ok(true);
        }
        let mut best = f64::INFINITY;
        for attempt in 0..attempts_per_k {
            let mut local = base.substream(((k as u64) << 20) | attempt as u64);
            let frame = sample_subspace(n, k, &mut local)?;
            let m = measure_distortion_with(
                spec,
                &frame,
                &MeasureOptions {
                    samples: opts.samples,
                    restarts: opts.restarts,
                    settings: opts.settings,
                    abort_above: Some(target),
                },
                &mut local,
            )?;
            best = best.min(m.distortion);
            if m.distortion <= target {
                trials.push(KTrial {
                    k,
                    success: true,
                    attempts: attempt + 1,
                    best_distortion: best,
                });
                return Ok(true);
            }
        }
        trials.push(KTrial {
            k,
            success: false,
            attempts: attempts_per_k,
            best_distortion: best,
        });
        Ok(false)
    };

    let mut lo = 1usize;
    let mut hi: Option<usize> = None;
    let mut k = 2usize;
    while lo < n {
        let probe = k.min(n);
        if test(probe)? {
            lo = probe;
            k = probe * 2;
        } else {
            hi = Some(probe);
            break;
        }
    }
    if let Some(mut hi) = hi {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if test(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    trials.sort_by_key(|t| t.k);
    Ok(KmaxReport { kmax: lo, trials })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(n: usize, i: usize, j: usize) -> OrthoFrame {
        OrthoFrame::coordinate(n, &[i, j]).unwrap()
    }

    #[test]
    fn euclidean_extrema_are_one() {
        let mut rng = RandomSource::new(1, 0);
        let frame = sample_subspace(6, 3, &mut rng).unwrap();
        for dir in [Direction::Max, Direction::Min] {
            let e = norm_extremum_on_section(&NormSpec::l2(6), &frame, dir, 4, &mut rng).unwrap();
            assert!((e.value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coordinate_plane_extrema_are_recovered() {
        let mut rng = RandomSource::new(2, 0);
        let n = 7;
        let frame = plane(n, 1, 4);
        let sqrt2 = 2f64.sqrt();
        let cases = [
            (NormSpec::linf(n), 1.0, 1.0 / sqrt2),
            (NormSpec::l1(n), sqrt2, 1.0),
            (NormSpec::lp(4.0, n), 1.0, 0.5f64.powf(0.25)),
            (NormSpec::lp(1.5, n), 2f64.powf(1.0 / 1.5 - 0.5), 1.0),
        ];
        for (spec, max, min) in cases {
            let hi = norm_extremum_on_section(&spec, &frame, Direction::Max, 32, &mut rng).unwrap();
            let lo = norm_extremum_on_section(&spec, &frame, Direction::Min, 32, &mut rng).unwrap();
            assert!((hi.value - max).abs() < 1e-6, "{spec:?} max {}", hi.value);
            assert!((lo.value - min).abs() < 1e-6, "{spec:?} min {}", lo.value);
            assert!((spec.eval(&hi.witness) - hi.value).abs() < 1e-10);
            assert!((spec.eval(&lo.witness) - lo.value).abs() < 1e-10);
        }
    }

    #[test]
    fn single_vector_section() {
        let mut rng = RandomSource::new(3, 0);
        let n = 5;
        let mut v = vec![0.0; n];
        v[0] = 1.0 / 2f64.sqrt();
        v[1] = 1.0 / 2f64.sqrt();
        let frame = OrthoFrame::from_columns(n, &[v]).unwrap();
        for dir in [Direction::Max, Direction::Min] {
            let e = norm_extremum_on_section(&NormSpec::l1(n), &frame, dir, 3, &mut rng).unwrap();
            assert!((e.value - 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn distortion_of_known_sections() {
        let mut rng = RandomSource::new(4, 0);
        let d = measure_distortion(&NormSpec::linf(4), &OrthoFrame::identity(4), 256, 16, &mut rng).unwrap();
        assert!((d.distortion - 2.0).abs() < 1e-6, "{}", d.distortion);
        let d = measure_distortion(&NormSpec::l1(9), &plane(9, 0, 5), 256, 16, &mut rng).unwrap();
        assert!((d.distortion - 2f64.sqrt()).abs() < 1e-6);
        let frame = sample_subspace(9, 4, &mut rng).unwrap();
        let d = measure_distortion(&NormSpec::l2(9), &frame, 64, 4, &mut rng).unwrap();
        assert!((d.distortion - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dr_basis_for_linf_and_l2() {
        let mut rng = RandomSource::new(5, 0);
        let dr = dvoretzky_rogers_basis(&NormSpec::linf(4), 4, 8, &mut rng).unwrap();
        assert!(dr.norms.iter().all(|v| (v - 1.0).abs() < 1e-9), "{:?}", dr.norms);
        assert!(dr.frame.gram_error() < 1e-10);
        let dr = dvoretzky_rogers_basis(&NormSpec::l2(6), 6, 2, &mut rng).unwrap();
        assert!(dr.norms.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn dr_basis_for_l4_meets_bound() {
        let mut rng = RandomSource::new(6, 0);
        let dr = dvoretzky_rogers_basis(&NormSpec::lp(4.0, 16), 16, 8, &mut rng).unwrap();
        assert!(dr.violations(1e-6).is_empty(), "{:?}", dr.norms);
        assert!(dr.frame.gram_error() < 1e-10);
        for w in dr.norms.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "{:?}", dr.norms);
        }
    }

    #[test]
    fn dr_basis_requires_normalization() {
        let err = dvoretzky_rogers_basis(&NormSpec::l1(4), 4, 2, &mut RandomSource::new(0, 0)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn candidate_dimension_formula() {
        assert_eq!(milman_candidate_dim(1.0, 1.0, 0.5, 1000, 1.0).unwrap(), 139);
        assert_eq!(milman_candidate_dim(1e-9, 1.0, 0.5, 1000, 1.0).unwrap(), 1);
        let a = milman_candidate_dim(0.7, 1.0, 0.3, 5000, 0.5).unwrap();
        let b = milman_candidate_dim(0.7, 1.0, 0.3, 10_000, 0.5).unwrap();
        assert!(b == 2 * a || b == 2 * a + 1);
    }

    #[test]
    fn euclidean_finder_succeeds_immediately() {
        let mut rng = RandomSource::new(7, 0);
        let out = find_euclidean_section(&NormSpec::l2(20), 20, 0.3, 12, 5, &mut rng, &FinderOptions::default()).unwrap();
        let cert = out.certificate().expect("certified");
        assert_eq!(cert.attempts_used, 1);
        let expected = amplify_net_bounds(1.0, 1.0, 0.15).unwrap();
        assert_eq!(cert.certified_interval, expected);
    }

    #[test]
    fn whole_cube_is_not_euclidean() {
        for n in [4, 6, 9] {
            let out = find_euclidean_section(&NormSpec::linf(n), n, 0.1, n, 10, &mut RandomSource::new(8, 0), &FinderOptions::default()).unwrap();
            assert!(matches!(out, SectionOutcome::Failed(_)));
        }
    }

    #[test]
    fn l1_finder_certifies_small_sections() {
        let n = 256;
        let spec = NormSpec::l1(n);
        let mut rng = RandomSource::new(9, 0);
        let mean = estimate_sphere_mean(&spec, n, 4000, &mut rng).unwrap().mean;
        let b = comparison_constants(&spec).unwrap().b_upper;
        let k = milman_candidate_dim(mean, b, 0.5, n, 0.1).unwrap();
        let out = find_euclidean_section(&spec, n, 0.5, k, 50, &mut rng, &FinderOptions::default()).unwrap();
        let cert = out.certificate().expect("certified");
        assert!(cert.empirical_distortion <= 1.5);
        assert!(cert.certified_interval.distortion() >= cert.empirical_distortion);
        assert_eq!(cert.violations(&spec, 1000, &mut rng), 0);
    }

    #[test]
    fn one_dimensional_sections_always_succeed() {
        let mut rng = RandomSource::new(10, 0);
        let out = find_euclidean_section(&NormSpec::linf(30), 30, 0.2, 1, 3, &mut rng, &FinderOptions::default()).unwrap();
        assert!(out.certificate().is_some());
    }

    #[test]
    fn kmax_of_euclidean_space_is_n() {
        let r = kmax_search(&NormSpec::l2(50), 50, 0.3, 2, &mut RandomSource::new(11, 0), &KmaxOptions::default()).unwrap();
        assert_eq!(r.kmax, 50);
    }

    #[test]
    fn kmax_is_reproducible() {
        let run = || kmax_search(&NormSpec::lp(4.0, 64), 64, 0.5, 3, &mut RandomSource::new(12, 0), &KmaxOptions::default()).unwrap();
        assert_eq!(run(), run());
    }
}
