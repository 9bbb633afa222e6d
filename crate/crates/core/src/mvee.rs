//! Minimum-volume enclosing ellipsoid and shell sampling.
//!
//! The ellipsoid `{z : ||Az + b|| <= 1}` of the encoded authorized samples is
//! fitted with Khachiyan's first-order ascent on barycentric weights, then a
//! thin shell around its boundary is sampled uniformly (by volume, in the
//! mapped space) and decoded back to signal space as candidate outliers.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generative::{AeModel, GenError};
use crate::nn::Tensor;
use crate::seed;
use crate::sim::SignalSample;

#[derive(Debug, Error)]
pub enum MveeError {
    #[error("degenerate point cloud")]
    DegeneratePointCloud,
    #[error("mvee not converged: containment violation {violation:.3e} after {iters} iterations")]
    NotConverged { violation: f64, iters: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Gen(#[from] GenError),
}

/// Ridge added to scatter matrices before inversion so near-collapsed latent
/// clouds degrade instead of crashing mid-fit.
const SCATTER_RIDGE: f64 = 1e-9;
/// Default containment tolerance.
pub const DEFAULT_TOL: f64 = 1e-5;
/// Default iteration cap for the dual ascent.
pub const DEFAULT_MAX_ITERS: usize = 100_000;

/// `{z : ||Az + b||_2 <= 1}` with `A` symmetric positive definite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    dim: usize,
    /// Row-major `dim x dim`, symmetric positive definite.
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Ellipsoid {
    pub fn new(dim: usize, a: Vec<f64>, b: Vec<f64>) -> Self {
        assert_eq!(a.len(), dim * dim);
        assert_eq!(b.len(), dim);
        Ellipsoid { dim, a, b }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// The unit ball.
    pub fn unit(dim: usize) -> Self {
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            a[i * dim + i] = 1.0;
        }
        Ellipsoid { dim, a, b: vec![0.0; dim] }
    }

    /// Center `-A^{-1} b`.
    pub fn center(&self) -> Vec<f64> {
        let chol = linalg::cholesky(self.dim, &self.a).expect("A is SPD");
        let neg_b: Vec<f64> = self.b.iter().map(|v| -v).collect();
        linalg::cholesky_solve(self.dim, &chol, &neg_b)
    }

    /// `||Az + b||_2`; at most 1 inside the ellipsoid.
    pub fn mahalanobis_norm(&self, z: &[f64]) -> f64 {
        assert_eq!(z.len(), self.dim, "dimension mismatch");
        let mut sq = 0.0;
        for i in 0..self.dim {
            let mut acc = self.b[i];
            for j in 0..self.dim {
                acc += self.a[i * self.dim + j] * z[j];
            }
            sq += acc * acc;
        }
        sq.sqrt()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        self.mahalanobis_norm(z) <= 1.0
    }

    /// log(volume) up to the dimension-dependent unit-ball constant:
    /// `-log det A`.
    pub fn log_volume_offset(&self) -> f64 {
        let chol = linalg::cholesky(self.dim, &self.a).expect("A is SPD");
        // det A = (prod diag L)^2
        -2.0 * (0..self.dim).map(|i| chol[i * self.dim + i].ln()).sum::<f64>()
    }

    /// Image of this ellipsoid under `w = T z + t`, re-symmetrized so the
    /// returned `A` stays SPD. Membership values are preserved exactly:
    /// `||A' (Tz + t) + b'|| == ||A z + b||`.
    pub fn affine_image(&self, t_mat: &[f64], t_vec: &[f64]) -> Ellipsoid {
        let n = self.dim;
        let t_inv = linalg::invert(n, t_mat).expect("transform must be invertible");
        // M' = T^{-T} (A^T A) T^{-1}
        let m = linalg::mat_mul(n, &linalg::mat_transpose(n, &self.a), &self.a);
        let mt = linalg::mat_mul(n, &linalg::mat_mul(n, &linalg::mat_transpose(n, &t_inv), &m), &t_inv);
        let a_new = linalg::spd_sqrt(n, &mt).expect("transformed shape stays SPD");
        // center maps to T c + t; b' = -A' c'
        let c = self.center();
        let mut c_new = t_vec.to_vec();
        for i in 0..n {
            for j in 0..n {
                c_new[i] += t_mat[i * n + j] * c[j];
            }
        }
        let mut b_new = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                b_new[i] -= a_new[i * n + j] * c_new[j];
            }
        }
        Ellipsoid { dim: n, a: a_new, b: b_new }
    }
}

/// Shell sampling parameters: thickness `delta` in the mapped (unit-ball)
/// space and the number of points to draw.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ShellConfig {
    pub delta: f64,
    pub count: usize,
}

impl ShellConfig {
    pub fn validate(&self) -> Result<(), MveeError> {
        if self.delta > 0.0 && self.delta <= 10.0 {
            Ok(())
        } else {
            Err(MveeError::InvalidConfig(format!(
                "delta must be in (0, 10], got {}",
                self.delta
            )))
        }
    }
}

/// Fits the minimum-volume enclosing ellipsoid of `points` (each of dimension
/// `n`, needing at least `n + 1` affinely independent points).
///
/// Khachiyan's ascent maximizes `log det sum_i u_i q_i q_i^T` over the
/// simplex with `q_i = [z_i; 1]`; the weights convert to `(A, b)` through the
/// center `c = sum u_i z_i` and shape `M = (1/n)(sum u_i z_i z_i^T - c c^T)^{-1}`,
/// `A = M^{1/2}`, `b = -A c`.
pub fn fit_mvee(points: &[Vec<f64>], tol: f64) -> Result<Ellipsoid, MveeError> {
    Ok(fit_mvee_traced(points, tol, DEFAULT_MAX_ITERS)?.0)
}

/// As [`fit_mvee`], also returning the dual objective value per iteration
/// (non-decreasing) and honoring an iteration cap.
pub fn fit_mvee_traced(
    points: &[Vec<f64>],
    tol: f64,
    max_iters: usize,
) -> Result<(Ellipsoid, Vec<f64>), MveeError> {
    if points.is_empty() {
        return Err(MveeError::DegeneratePointCloud);
    }
    let n = points[0].len();
    let m = points.len();
    if n == 0 || points.iter().any(|p| p.len() != n) {
        return Err(MveeError::InvalidConfig("inconsistent point dimensions".into()));
    }
    if m < n + 1 {
        return Err(MveeError::DegeneratePointCloud);
    }
    if !(tol > 0.0 && tol <= 1e-2) {
        return Err(MveeError::InvalidConfig(format!(
            "tol must be in (0, 1e-2], got {tol}"
        )));
    }

    // exactly rank-deficient input (points in an affine subspace) is an
    // error; the ridge below only cushions near-degenerate clouds
    {
        let mut mean = vec![0.0f64; n];
        for p in points {
            for (mv, &v) in mean.iter_mut().zip(p) {
                *mv += v / m as f64;
            }
        }
        let mut s0 = vec![0.0f64; n * n];
        for p in points {
            for r in 0..n {
                let dr = p[r] - mean[r];
                for c in 0..n {
                    s0[r * n + c] += dr * (p[c] - mean[c]) / m as f64;
                }
            }
        }
        let evals = linalg::sym_eigen(n, &s0).0;
        let max_eig = evals.iter().cloned().fold(0.0f64, f64::max);
        let min_eig = evals.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min_eig > 1e-12 * max_eig.max(1e-300)) {
            return Err(MveeError::DegeneratePointCloud);
        }
    }

    let d = n + 1;
    // lifted points q_i = [z_i; 1], stored row-major m x d
    let mut q = vec![0.0f64; m * d];
    for (i, p) in points.iter().enumerate() {
        q[i * d..i * d + n].copy_from_slice(p);
        q[i * d + n] = 1.0;
    }

    let mut u = vec![1.0 / m as f64; m];
    let mut trace = Vec::new();
    // stop once the worst membership value (kappa - 1)/n is within (1+tol)^2
    let target_kappa = n as f64 * (1.0 + tol) * (1.0 + tol) + 1.0;
    let mut worst_value = f64::INFINITY;
    let mut converged = false;
    let df = d as f64;

    for _iter in 0..max_iters {
        // X = sum u_i q_i q_i^T (+ ridge), inverted once per iteration
        let mut x = vec![0.0f64; d * d];
        for (i, &ui) in u.iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            let qi = &q[i * d..(i + 1) * d];
            for r in 0..d {
                let s = ui * qi[r];
                for c in 0..d {
                    x[r * d + c] += s * qi[c];
                }
            }
        }
        for r in 0..d {
            x[r * d + r] += SCATTER_RIDGE;
        }
        let chol = match linalg::cholesky(d, &x) {
            Some(c) => c,
            None => return Err(MveeError::DegeneratePointCloud),
        };
        trace.push(2.0 * (0..d).map(|i| chol[i * d + i].ln()).sum::<f64>());
        let x_inv = linalg::cholesky_inverse(d, &chol);

        // M_i = q_i^T X^{-1} q_i for every point; the farthest point drives
        // an increase step, the closest active point a decrease step
        let mut kappa = f64::NEG_INFINITY;
        let mut j_max = 0;
        let mut kappa_min = f64::INFINITY;
        let mut j_min = 0;
        for i in 0..m {
            let qi = &q[i * d..(i + 1) * d];
            let mut mi = 0.0;
            for r in 0..d {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += x_inv[r * d + c] * qi[c];
                }
                mi += qi[r] * acc;
            }
            if mi > kappa {
                kappa = mi;
                j_max = i;
            }
            if u[i] > 0.0 && mi < kappa_min {
                kappa_min = mi;
                j_min = i;
            }
        }

        worst_value = ((kappa - 1.0) / n as f64).max(0.0);
        if kappa <= target_kappa {
            converged = true;
            break;
        }

        // Wolfe-Atwood ascent: pick whichever of the increase/decrease steps
        // moves the dual objective more
        if kappa - df >= df - kappa_min {
            let step = (kappa - df) / (df * (kappa - 1.0));
            if !(step > 0.0) || !step.is_finite() {
                converged = kappa <= target_kappa * (1.0 + 1e-9);
                break;
            }
            for v in u.iter_mut() {
                *v *= 1.0 - step;
            }
            u[j_max] += step;
        } else {
            // u' = (1 + step) u - step e_j, capped so u'_j stays nonnegative
            let uj = u[j_min];
            let raw = (df - kappa_min) / (df * (kappa_min - 1.0));
            let cap = uj / (1.0 - uj);
            let step = raw.min(cap);
            if !(step > 0.0) || !step.is_finite() {
                converged = kappa <= target_kappa * (1.0 + 1e-9);
                break;
            }
            for v in u.iter_mut() {
                *v *= 1.0 + step;
            }
            u[j_min] = (u[j_min] - step).max(0.0);
        }
    }

    if !converged {
        return Err(MveeError::NotConverged {
            violation: worst_value.sqrt() - 1.0,
            iters: max_iters,
        });
    }

    // convert weights to (A, b)
    let mut center = vec![0.0f64; n];
    for (i, &ui) in u.iter().enumerate() {
        for r in 0..n {
            center[r] += ui * q[i * d + r];
        }
    }
    let mut scatter = vec![0.0f64; n * n];
    for (i, &ui) in u.iter().enumerate() {
        let zi = &q[i * d..i * d + n];
        for r in 0..n {
            let s = ui * zi[r];
            for c in 0..n {
                scatter[r * n + c] += s * zi[c];
            }
        }
    }
    for r in 0..n {
        for c in 0..n {
            scatter[r * n + c] -= center[r] * center[c];
        }
        scatter[r * n + r] += SCATTER_RIDGE;
    }
    let chol = linalg::cholesky(n, &scatter).ok_or(MveeError::DegeneratePointCloud)?;
    let mut shape = linalg::cholesky_inverse(n, &chol);
    for v in shape.iter_mut() {
        *v /= n as f64;
    }
    let a = linalg::spd_sqrt(n, &shape).ok_or(MveeError::DegeneratePointCloud)?;
    let mut b = vec![0.0f64; n];
    for r in 0..n {
        for c in 0..n {
            b[r] -= a[r * n + c] * center[c];
        }
    }
    Ok((Ellipsoid { dim: n, a, b }, trace))
}

/// Draws points in the shell `1 < ||Az + b|| <= 1 + delta`.
///
/// Directions are uniform on the mapped-space unit sphere; the radius density
/// is proportional to `r^{n-1}` (volume-uniform in mapped space), inverted
/// through its CDF.
pub fn sample_shell(
    ellipsoid: &Ellipsoid,
    cfg: &ShellConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>, MveeError> {
    cfg.validate()?;
    let n = ellipsoid.dim;
    let chol = linalg::cholesky(n, &ellipsoid.a).ok_or(MveeError::DegeneratePointCloud)?;
    let outer = 1.0 + cfg.delta;
    let range = outer.powi(n as i32) - 1.0;
    let mut out = Vec::with_capacity(cfg.count);
    for _ in 0..cfg.count {
        // direction: normalized gaussian
        let mut dir = vec![0.0f64; n];
        loop {
            let mut norm_sq = 0.0;
            for v in dir.iter_mut() {
                *v = seed::randn(rng);
                norm_sq += *v * *v;
            }
            if norm_sq > 1e-24 {
                let norm = norm_sq.sqrt();
                for v in dir.iter_mut() {
                    *v /= norm;
                }
                break;
            }
        }
        // radius on (1, 1+delta] with density r^{n-1}
        let uu: f64 = 1.0 - rand::Rng::gen::<f64>(rng); // (0, 1]
        let r = (1.0 + uu * range).powf(1.0 / n as f64);
        // z = A^{-1} (r * dir - b)
        let rhs: Vec<f64> = dir
            .iter()
            .zip(&ellipsoid.b)
            .map(|(&dv, &bv)| r * dv - bv)
            .collect();
        out.push(linalg::cholesky_solve(n, &chol, &rhs));
    }
    Ok(out)
}

/// Result of the full ellipsoidal generation pipeline.
pub struct EllipsoidalOutliers {
    pub samples: Vec<SignalSample>,
    pub ellipsoid: Ellipsoid,
    /// Fraction of generated samples that re-encode outside the fitted
    /// ellipsoid (decoder round-trip diagnostic).
    pub fraction_outside: f64,
}

/// Encodes the authorized samples, fits their MVEE, samples a `delta` shell
/// and decodes every point.
pub fn generate_ellipsoidal_outliers(
    ae: &AeModel,
    authorized: &[&SignalSample],
    delta: f64,
    count: usize,
    seed_value: u64,
) -> Result<EllipsoidalOutliers, MveeError> {
    if authorized.len() < ae.latent_dim + 1 {
        return Err(MveeError::DegeneratePointCloud);
    }
    let encoded = ae.encode(authorized)?;
    let points = tensor_rows_f64(&encoded);
    let ellipsoid = fit_mvee(&points, DEFAULT_TOL)?;

    let mut rng = seed::stream(seed_value, 0x7368_656c_6c);
    let latents = sample_shell(&ellipsoid, &ShellConfig { delta, count }, &mut rng)?;
    if latents.is_empty() {
        return Ok(EllipsoidalOutliers { samples: Vec::new(), ellipsoid, fraction_outside: 0.0 });
    }

    let l = ae.latent_dim;
    let mut samples = Vec::with_capacity(count);
    for chunk in latents.chunks(512) {
        let z = Tensor::from_vec(
            &[chunk.len(), l],
            chunk.iter().flatten().map(|&v| v as f32).collect(),
        );
        samples.extend(ae.decode(&z)?);
    }

    // round-trip diagnostic: how many decoded outliers stay outside?
    let sample_refs: Vec<&SignalSample> = samples.iter().collect();
    let re_encoded = tensor_rows_f64(&ae.encode(&sample_refs)?);
    let outside = re_encoded
        .par_iter()
        .filter(|z| ellipsoid.mahalanobis_norm(z) > 1.0)
        .count();
    let fraction_outside = outside as f64 / samples.len() as f64;

    Ok(EllipsoidalOutliers { samples, ellipsoid, fraction_outside })
}

fn tensor_rows_f64(t: &Tensor) -> Vec<Vec<f64>> {
    let rows = t.shape()[0];
    let cols = t.numel() / rows.max(1);
    (0..rows)
        .map(|r| t.data()[r * cols..(r + 1) * cols].iter().map(|&v| v as f64).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// small dense linear algebra (f64, row-major, dimensions <= ~64)
// ---------------------------------------------------------------------------

mod linalg {
    /// Lower-triangular Cholesky factor of an SPD matrix, or `None` if the
    /// matrix is not positive definite.
    pub fn cholesky(n: usize, a: &[f64]) -> Option<Vec<f64>> {
        let mut l = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return None;
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Some(l)
    }

    /// Solves `A x = b` given the Cholesky factor of `A`.
    pub fn cholesky_solve(n: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0f64; n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= l[i * n + k] * y[k];
            }
            y[i] = sum / l[i * n + i];
        }
        let mut x = vec![0.0f64; n];
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in i + 1..n {
                sum -= l[k * n + i] * x[k];
            }
            x[i] = sum / l[i * n + i];
        }
        x
    }

    /// Inverse of an SPD matrix from its Cholesky factor.
    pub fn cholesky_inverse(n: usize, l: &[f64]) -> Vec<f64> {
        let mut inv = vec![0.0f64; n * n];
        let mut e = vec![0.0f64; n];
        for col in 0..n {
            e.fill(0.0);
            e[col] = 1.0;
            let x = cholesky_solve(n, l, &e);
            for row in 0..n {
                inv[row * n + col] = x[row];
            }
        }
        inv
    }

    /// General matrix inverse via Gauss-Jordan with partial pivoting.
    pub fn invert(n: usize, a: &[f64]) -> Option<Vec<f64>> {
        let mut aug = vec![0.0f64; n * 2 * n];
        for r in 0..n {
            aug[r * 2 * n..r * 2 * n + n].copy_from_slice(&a[r * n..(r + 1) * n]);
            aug[r * 2 * n + n + r] = 1.0;
        }
        for col in 0..n {
            let pivot = (col..n).max_by(|&i, &j| {
                aug[i * 2 * n + col]
                    .abs()
                    .total_cmp(&aug[j * 2 * n + col].abs())
            })?;
            if aug[pivot * 2 * n + col].abs() < 1e-300 {
                return None;
            }
            if pivot != col {
                for k in 0..2 * n {
                    aug.swap(col * 2 * n + k, pivot * 2 * n + k);
                }
            }
            let diag = aug[col * 2 * n + col];
            for k in 0..2 * n {
                aug[col * 2 * n + k] /= diag;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = aug[r * 2 * n + col];
                if f == 0.0 {
                    continue;
                }
                for k in 0..2 * n {
                    aug[r * 2 * n + k] -= f * aug[col * 2 * n + k];
                }
            }
        }
        let mut inv = vec![0.0f64; n * n];
        for r in 0..n {
            inv[r * n..(r + 1) * n].copy_from_slice(&aug[r * 2 * n + n..(r + 1) * 2 * n]);
        }
        Some(inv)
    }

    pub fn mat_mul(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0f64; n * n];
        for i in 0..n {
            for k in 0..n {
                let aik = a[i * n + k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    c[i * n + j] += aik * b[k * n + j];
                }
            }
        }
        c
    }

    pub fn mat_transpose(n: usize, a: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                t[j * n + i] = a[i * n + j];
            }
        }
        t
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    /// Returns `(eigenvalues, eigenvectors)` with eigenvectors in columns.
    pub fn sym_eigen(n: usize, a: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut m = a.to_vec();
        let mut v = vec![0.0f64; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    off += m[i * n + j] * m[i * n + j];
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m[p * n + q];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let app = m[p * n + p];
                    let aqq = m[q * n + q];
                    let theta = 0.5 * (aqq - app) / apq;
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[k * n + p];
                        let mkq = m[k * n + q];
                        m[k * n + p] = c * mkp - s * mkq;
                        m[k * n + q] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[p * n + k];
                        let mqk = m[q * n + k];
                        m[p * n + k] = c * mpk - s * mqk;
                        m[q * n + k] = s * mpk + c * mqk;
                    }
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let evals = (0..n).map(|i| m[i * n + i]).collect();
        (evals, v)
    }

    /// Symmetric square root of an SPD matrix; `None` if any eigenvalue is
    /// non-positive.
    pub fn spd_sqrt(n: usize, a: &[f64]) -> Option<Vec<f64>> {
        let (evals, evecs) = sym_eigen(n, a);
        if evals.iter().any(|&e| e <= 0.0 || !e.is_finite()) {
            return None;
        }
        let mut out = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for (k, &ev) in evals.iter().enumerate() {
                    acc += evecs[i * n + k] * ev.sqrt() * evecs[j * n + k];
                }
                out[i * n + j] = acc;
            }
        }
        // exact symmetry despite rounding
        for i in 0..n {
            for j in 0..i {
                let avg = 0.5 * (out[i * n + j] + out[j * n + i]);
                out[i * n + j] = avg;
                out[j * n + i] = avg;
            }
        }
        Some(out)
    }

    /// Smallest eigenvalue (for SPD checks in tests).
    pub fn min_eigenvalue(n: usize, a: &[f64]) -> f64 {
        sym_eigen(n, a).0.into_iter().fold(f64::INFINITY, f64::min)
    }
}

pub use linalg::{invert as mat_invert, min_eigenvalue, sym_eigen};

#[cfg(test)]
mod tests;
