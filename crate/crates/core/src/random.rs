//! Reproducible sampling: Gaussian vectors, the uniform measure on
//! `S^{n-1}`, Haar measure on `O(n)`, random subspaces and random signs.
//!
//! Every sampler draws from a [`RandomSource`], a ChaCha8 stream identified by
//! `(master_seed, stream_id)`. Parallel Monte Carlo splits its budget into
//! fixed-size chunks and gives chunk `c` its own derived stream, so results do
//! not depend on how many worker threads run.

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, invalid, Result};

/// Samples per chunk in chunked Monte Carlo.
pub const CHUNK: usize = 2048;

/// A reproducible random stream.
#[derive(Debug, Clone)]
pub struct RandomSource {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        RandomSource {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A deterministic child stream that does not advance `self`.
    pub fn substream(&self, index: u64) -> RandomSource {
        RandomSource::new(self.master_seed, mix(self.stream_id, index))
    }

    /// A fresh child stream keyed by the next value of `self`.
    pub fn fork(&mut self) -> RandomSource {
        let key = self.rng.next_u64();
        RandomSource::new(self.master_seed, mix(self.stream_id, key))
    }

    pub fn gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn sign(&mut self) -> f64 {
        if self.rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a parent stream id with a child index.
pub fn mix(parent: u64, index: u64) -> u64 {
    splitmix(parent ^ splitmix(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Stable 64-bit FNV-1a hash, used to derive stream ids from grid points.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Run `f` on `total` items split into chunks of [`CHUNK`]; chunk `c` gets
/// its own stream derived from one draw of `rng`. The output concatenates
/// chunk outputs in chunk order.
pub(crate) fn chunked<T, F>(rng: &mut RandomSource, total: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RandomSource, usize) -> Vec<T> + Sync,
{
    let key = rng.next_u64();
    let master = rng.master_seed;
    let chunks = total.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut local = RandomSource::new(master, mix(key, c as u64));
            let len = CHUNK.min(total - c * CHUNK);
            f(&mut local, len)
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// `n` independent standard normal coordinates.
pub fn sample_gaussian_vector(n: usize, rng: &mut RandomSource) -> Vec<f64> {
    (0..n).map(|_| rng.gaussian()).collect()
}

/// A uniform point on `S^{n-1}` (normalized Gaussian vector).
pub fn sample_sphere(n: usize, rng: &mut RandomSource) -> Vec<f64> {
    loop {
        let mut g = sample_gaussian_vector(n, rng);
        let r = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 0.0 {
            g.iter_mut().for_each(|x| *x /= r);
            return g;
        }
    }
}

/// `m` independent uniform signs.
pub fn sample_signs(m: usize, rng: &mut RandomSource) -> Vec<f64> {
    (0..m).map(|_| rng.sign()).collect()
}

/// An `n×k` matrix with orthonormal columns spanning a `k`-dimensional
/// subspace of ℝⁿ. With `k = n` it is an orthogonal transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoFrame {
    columns: DMatrix<f64>,
}

impl OrthoFrame {
    /// Wrap a matrix, checking that its columns are orthonormal to `1e-10`.
    pub fn from_matrix(columns: DMatrix<f64>) -> Result<Self> {
        let frame = OrthoFrame { columns };
        if frame.k() > frame.n() || frame.k() == 0 {
            return Err(invalid(format!("frame must have 1 <= k <= n, got {}x{}", frame.n(), frame.k())));
        }
        let err = frame.gram_error();
        if err > 1e-10 {
            return Err(invalid(format!("columns are not orthonormal (Gram error {err:.3e})")));
        }
        Ok(frame)
    }

    pub fn from_columns(n: usize, cols: &[Vec<f64>]) -> Result<Self> {
        for c in cols {
            check_dim(n, c.len())?;
        }
        let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        Self::from_matrix(m)
    }

    pub(crate) fn from_matrix_unchecked(columns: DMatrix<f64>) -> Self {
        OrthoFrame { columns }
    }

    pub fn identity(n: usize) -> Self {
        OrthoFrame {
            columns: DMatrix::identity(n, n),
        }
    }

    /// The coordinate subspace spanned by `e_i`, `i ∈ indices`.
    pub fn coordinate(n: usize, indices: &[usize]) -> Result<Self> {
        let cols: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| {
                let mut e = vec![0.0; n];
                *e.get_mut(i).ok_or_else(|| invalid(format!("index {i} out of range")))? = 1.0;
                Ok(e)
            })
            .collect::<Result<_>>()?;
        Self::from_columns(n, &cols)
    }

    pub fn n(&self) -> usize {
        self.columns.nrows()
    }

    pub fn k(&self) -> usize {
        self.columns.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.columns.column(j).iter().copied().collect()
    }

    /// `max |FᵀF − I|`.
    pub fn gram_error(&self) -> f64 {
        let gram = self.columns.transpose() * &self.columns;
        let k = self.k();
        let mut err: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((gram[(i, j)] - target).abs());
            }
        }
        err
    }

    /// `F·y` for section coordinates `y ∈ ℝᵏ`.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.apply_into(y, &mut out);
        out
    }

    pub(crate) fn apply_into(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, &c) in y.iter().enumerate() {
            if c != 0.0 {
                let col = self.columns.column(j);
                for (o, v) in out.iter_mut().zip(col.iter()) {
                    *o += c * v;
                }
            }
        }
    }

    /// `Fᵀ·v` for an ambient vector `v ∈ ℝⁿ`.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        (0..self.k())
            .map(|j| self.columns.column(j).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct FrameRepr {
    n: usize,
    k: usize,
    columns: Vec<Vec<f64>>,
}

impl Serialize for OrthoFrame {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FrameRepr {
            n: self.n(),
            k: self.k(),
            columns: (0..self.k()).map(|j| self.column(j)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for OrthoFrame {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = FrameRepr::deserialize(d)?;
        if repr.columns.len() != repr.k {
            return Err(serde::de::Error::custom("column count does not match k"));
        }
        OrthoFrame::from_columns(repr.n, &repr.columns).map_err(serde::de::Error::custom)
    }
}

/// Orthonormalize an `n×k` Gaussian block. Flipping the columns of `Q` so the
/// diagonal of `R` is nonnegative makes the factorization unique, and the
/// result is Haar distributed.
fn orthonormalized_gaussian(n: usize, k: usize, rng: &mut RandomSource) -> OrthoFrame {
    let g = DMatrix::from_fn(n, k, |_, _| rng.gaussian());
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    OrthoFrame::from_matrix_unchecked(q)
}

/// A Haar-distributed orthogonal matrix.
pub fn sample_orthogonal(n: usize, rng: &mut RandomSource) -> Result<OrthoFrame> {
    if n == 0 {
        return Err(invalid("dimension must be positive"));
    }
    Ok(orthonormalized_gaussian(n, n, rng))
}

/// A uniformly random `k`-dimensional subspace of ℝⁿ, i.e. `U·V₀` for Haar
/// `U` and a fixed `V₀`.
pub fn sample_subspace(n: usize, k: usize, rng: &mut RandomSource) -> Result<OrthoFrame> {
    if k == 0 || k > n {
        return Err(invalid(format!("subspace dimension must satisfy 1 <= k <= n, got k={k}, n={n}")));
    }
    Ok(orthonormalized_gaussian(n, k, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_critical, ks_two_sample, mean, variance};

    #[test]
    fn streams_replay_and_differ() {
        let a = sample_gaussian_vector(5, &mut RandomSource::new(7, 0));
        let b = sample_gaussian_vector(5, &mut RandomSource::new(7, 0));
        let c = sample_gaussian_vector(5, &mut RandomSource::new(7, 1));
        assert_eq!(a, b);
        assert_ne!(a, c);
        let one = sample_gaussian_vector(1, &mut RandomSource::new(3, 9));
        assert_eq!(one, sample_gaussian_vector(1, &mut RandomSource::new(3, 9)));
    }

    #[test]
    fn gaussian_moments() {
        let n = 100_000;
        let g = sample_gaussian_vector(n, &mut RandomSource::new(11, 0));
        assert!(mean(&g).abs() < 4.0 / (n as f64).sqrt());
        assert!((variance(&g) - 1.0).abs() < 0.02);
        let abs: Vec<f64> = g.iter().map(|x| x.abs()).collect();
        assert!((mean(&abs) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.01);
    }

    #[test]
    fn sphere_points_are_unit() {
        let mut rng = RandomSource::new(1, 2);
        for n in [1, 2, 3, 17, 500] {
            let x = sample_sphere(n, &mut rng);
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_coordinates_are_centered() {
        let mut rng = RandomSource::new(5, 0);
        let mut sums = [0.0; 3];
        let trials = 100_000;
        for _ in 0..trials {
            let x = sample_sphere(3, &mut rng);
            sums.iter_mut().zip(&x).for_each(|(s, v)| *s += v);
        }
        for s in sums {
            assert!((s / trials as f64).abs() < 0.02);
        }
    }

    #[test]
    fn circle_angles_are_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let mut rng = RandomSource::new(8, 0);
        let bins = 16;
        let trials = 100_000;
        let mut counts = vec![0usize; bins];
        for _ in 0..trials {
            let x = sample_sphere(2, &mut rng);
            let theta = x[1].atan2(x[0]).rem_euclid(std::f64::consts::TAU);
            let b = ((theta / std::f64::consts::TAU) * bins as f64) as usize;
            counts[b.min(bins - 1)] += 1;
        }
        let expected = trials as f64 / bins as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let q = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(chi2 < q, "chi2 {chi2} vs {q}");
    }

    #[test]
    fn haar_on_o1_is_a_fair_sign() {
        let mut rng = RandomSource::new(21, 0);
        let draws = 10_000;
        let plus = (0..draws)
            .filter(|_| sample_orthogonal(1, &mut rng).unwrap().matrix()[(0, 0)] > 0.0)
            .count();
        assert!((plus as f64 / draws as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn frames_are_orthonormal() {
        let mut rng = RandomSource::new(4, 4);
        for n in [1, 2, 7, 40] {
            assert!(sample_orthogonal(n, &mut rng).unwrap().gram_error() < 1e-10);
        }
        let f = sample_subspace(5, 2, &mut rng).unwrap();
        assert_eq!((f.n(), f.k()), (5, 2));
        assert!(f.gram_error() < 1e-10);
        let full = sample_subspace(6, 6, &mut rng).unwrap();
        assert_eq!(full.k(), 6);
        assert!(sample_subspace(3, 4, &mut rng).is_err());
        assert!(sample_subspace(3, 0, &mut rng).is_err());
    }

    #[test]
    fn rotated_point_is_uniform_on_sphere() {
        let n = 8;
        let draws = 10_000;
        let mut rng = RandomSource::new(99, 0);
        let x = sample_sphere(n, &mut rng);
        let rotated: Vec<f64> = (0..draws)
            .map(|_| sample_orthogonal(n, &mut rng).unwrap().apply(&x)[0])
            .collect();
        let direct: Vec<f64> = (0..draws).map(|_| sample_sphere(n, &mut rng)[0]).collect();
        let d = ks_two_sample(&rotated, &direct);
        assert!(d < ks_critical(1e-3, draws, draws), "KS {d}");
    }

    #[test]
    fn one_dimensional_subspace_is_uniform_direction() {
        let draws = 10_000;
        let mut rng = RandomSource::new(100, 0);
        let col: Vec<f64> = (0..draws)
            .map(|_| sample_subspace(8, 1, &mut rng).unwrap().column(0)[0])
            .collect();
        let direct: Vec<f64> = (0..draws).map(|_| sample_sphere(8, &mut rng)[0]).collect();
        assert!(ks_two_sample(&col, &direct) < ks_critical(1e-3, draws, draws));
    }

    #[test]
    fn subspace_law_is_rotation_invariant() {
        // Left-multiplying by a fixed orthogonal matrix must not change the
        // law of a fixed coordinate of the first column.
        let draws = 10_000;
        let mut rng = RandomSource::new(101, 0);
        let fixed = sample_orthogonal(6, &mut rng).unwrap();
        let plain: Vec<f64> = (0..draws)
            .map(|_| sample_subspace(6, 2, &mut rng).unwrap().column(1)[2])
            .collect();
        let rotated: Vec<f64> = (0..draws)
            .map(|_| {
                let f = sample_subspace(6, 2, &mut rng).unwrap();
                fixed.apply(&f.column(1))[2]
            })
            .collect();
        assert!(ks_two_sample(&plain, &rotated) < ks_critical(1e-3, draws, draws));
    }

    #[test]
    fn signs() {
        let s = sample_signs(100_000, &mut RandomSource::new(1, 1));
        assert!(mean(&s).abs() < 0.02);
        assert!(s.iter().all(|v| *v == 1.0 || *v == -1.0));
        let one = sample_signs(1, &mut RandomSource::new(2, 2));
        assert!(one[0] == 1.0 || one[0] == -1.0);
        assert_eq!(sample_signs(64, &mut RandomSource::new(3, 3)), sample_signs(64, &mut RandomSource::new(3, 3)));
    }

    #[test]
    fn chunked_is_deterministic() {
        let run = || {
            let mut rng = RandomSource::new(42, 0);
            chunked(&mut rng, 5000, |r, len| (0..len).map(|_| r.gaussian()).collect())
        };
        let a: Vec<f64> = run();
        assert_eq!(a.len(), 5000);
        assert_eq!(a, run());
    }

    #[test]
    fn frame_json_round_trip() {
        let f = sample_subspace(4, 2, &mut RandomSource::new(0, 0)).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let back: OrthoFrame = serde_json::from_str(&s).unwrap();
        assert!((back.matrix() - f.matrix()).abs().max() < 1e-15);
        assert!(serde_json::from_str::<OrthoFrame>(r#"{"n":2,"k":2,"columns":[[1,0],[1,0]]}"#).is_err());
    }
}
