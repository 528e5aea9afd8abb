//! Null covariance of the standardized within/between differences.
//!
//! Under the null the covariance of the `n` standardized differences depends
//! only on group membership: one value for pairs inside group `k`, one value
//! for pairs straddling groups `k` and `l`, and a unit diagonal. With
//! `c = 1/(n - n_k) + 1/(n_k - 1)`:
//!
//! ```text
//! within_k   = [c p12 - (3 p12 - p22) / (n_k - 1)^2] / [c (p22 - p12)]
//! between_kl = sqrt((n_k-1)(n_l-1)) (p22 - (n+2) p12)
//!              / [sqrt((n-n_k)(n-n_l)) (n-1) (p22 - p12)]
//! ```
//!
//! The denominator of the within value is read with `p12` (the published
//! display prints `p21`, a symbol defined nowhere else).

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::GroupLayout;
use crate::rng::{derive_seed, rng_from};

/// Compact form of the group-structured covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStructuredCovariance {
    layout: GroupLayout,
    /// Off-diagonal value for two observations of group `k`.
    pub within: Vec<f64>,
    /// Value for observations of groups `k != l`; the diagonal is unused and zero.
    pub between: DMatrix<f64>,
}

impl GroupStructuredCovariance {
    pub fn k(&self) -> usize {
        self.layout.k()
    }

    pub fn sizes(&self) -> &[usize] {
        self.layout.sizes()
    }

    pub fn layout(&self) -> &GroupLayout {
        &self.layout
    }

    /// Entry `(i, j)` of the dense matrix.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let (gi, gj) = (self.layout.group(i), self.layout.group(j));
        if i == j {
            1.0
        } else if gi == gj {
            self.within[gi]
        } else {
            self.between[(gi, gj)]
        }
    }

    /// Dense symmetric `n x n` matrix with unit diagonal.
    pub fn materialize(&self) -> DMatrix<f64> {
        let n = self.layout.n();
        DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }

    /// Reads the compact form back from a dense matrix laid out like `layout`.
    pub fn from_dense(dense: &DMatrix<f64>, layout: &GroupLayout) -> Self {
        let k = layout.k();
        let mut within = vec![0.0; k];
        let mut between = DMatrix::zeros(k, k);
        let n = layout.n();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (gi, gj) = (layout.group(i), layout.group(j));
                if gi == gj {
                    within[gi] = dense[(i, j)];
                } else {
                    between[(gi, gj)] = dense[(i, j)];
                }
            }
        }
        Self { layout: layout.clone(), within, between }
    }
}

/// `sigma^(1/2)` or `sigma^(-1/2)` of a group-structured covariance in compact form.
///
/// Inside group `g` every vector summing to zero is an eigenvector with
/// eigenvalue `1 - within_g`; the remaining `k` directions are spanned by the
/// normalized group indicators, where `sigma` acts as the `k x k` matrix
/// `M_gg = 1 + (n_g - 1) within_g`, `M_gh = sqrt(n_g n_h) between_gh`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredRoot {
    layout: GroupLayout,
    /// Power of `1 - within_g`, applied to the zero-sum part of group `g`.
    group_scale: Vec<f64>,
    /// Same power of `M`.
    reduced: DMatrix<f64>,
    clipped: bool,
}

impl StructuredRoot {
    fn new(sigma: &GroupStructuredCovariance, exponent: f64, ridge: f64) -> Result<Self> {
        let k = sigma.k();
        let sizes: Vec<f64> = sigma.sizes().iter().map(|&s| s as f64).collect();
        let m = DMatrix::from_fn(k, k, |a, b| {
            if a == b {
                1.0 + (sizes[a] - 1.0) * sigma.within[a]
            } else {
                (sizes[a] * sizes[b]).sqrt() * sigma.between[(a, b)]
            }
        });
        let eig = symmetric_eigen(&m)?;
        let mut values: Vec<f64> = sigma.within.iter().map(|w| 1.0 - w).collect();
        values.extend(eig.eigenvalues.iter());
        let clipped = clip_eigenvalues(&mut values, ridge)?;
        let group_scale = values[..k].iter().map(|v| v.powf(exponent)).collect();
        let mut scaled = eig.eigenvectors.clone();
        for (c, lambda) in values[k..].iter().enumerate() {
            scaled.column_mut(c).scale_mut(lambda.powf(exponent));
        }
        let reduced = scaled * eig.eigenvectors.transpose();
        let reduced = (&reduced + reduced.transpose()) * 0.5;
        Ok(Self { layout: sigma.layout.clone(), group_scale, reduced, clipped })
    }

    /// Whether an eigenvalue was raised to the floor.
    pub fn clipped(&self) -> bool {
        self.clipped
    }

    /// Writes the root applied to `z` into `out`, in `O(n + k^2)`.
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        let k = self.group_scale.len();
        let sizes = self.layout.sizes();
        let mut mean = vec![0.0; k];
        for (i, &v) in z.iter().enumerate() {
            mean[self.layout.group(i)] += v;
        }
        for (g, m) in mean.iter_mut().enumerate() {
            *m /= sizes[g] as f64;
        }
        let y: Vec<f64> = (0..k).map(|g| (sizes[g] as f64).sqrt() * mean[g]).collect();
        let u: Vec<f64> = (0..k)
            .map(|g| (0..k).map(|h| self.reduced[(g, h)] * y[h]).sum::<f64>() / (sizes[g] as f64).sqrt())
            .collect();
        for (i, o) in out.iter_mut().enumerate() {
            let g = self.layout.group(i);
            *o = self.group_scale[g] * (z[i] - mean[g]) + u[g];
        }
    }

    /// Dense `n x n` form.
    pub fn materialize(&self) -> DMatrix<f64> {
        let n = self.layout.n();
        let sizes = self.layout.sizes();
        DMatrix::from_fn(n, n, |i, j| {
            let (gi, gj) = (self.layout.group(i), self.layout.group(j));
            let mut v = self.reduced[(gi, gj)] / ((sizes[gi] * sizes[gj]) as f64).sqrt();
            if gi == gj {
                v -= self.group_scale[gi] / sizes[gi] as f64;
                if i == j {
                    v += self.group_scale[gi];
                }
            }
            v
        })
    }
}

impl GroupStructuredCovariance {
    /// Symmetric square root, eigenvalues floored at `ridge * lambda_max`.
    pub fn sqrt(&self, ridge: f64) -> Result<StructuredRoot> {
        StructuredRoot::new(self, 0.5, ridge)
    }

    /// Symmetric inverse square root, eigenvalues floored at `ridge * lambda_max`.
    pub fn inv_sqrt(&self, ridge: f64) -> Result<InvSqrt> {
        let root = StructuredRoot::new(self, -0.5, ridge)?;
        Ok(InvSqrt { matrix: root.materialize(), clipped: root.clipped })
    }
}

/// Plug-in group-structured covariance for pooled estimates `p0` and `p12`.
pub fn estimate_sigma(p0: f64, p12: f64, layout: &GroupLayout) -> Result<GroupStructuredCovariance> {
    let p22 = p0 * (1.0 - p0);
    let spread = p22 - p12;
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::DegenerateVariance { observation: None });
    }
    let n = layout.n() as f64;
    let sizes: Vec<f64> = layout.sizes().iter().map(|&s| s as f64).collect();
    let k = sizes.len();

    let within = sizes
        .iter()
        .map(|&nk| {
            let c = 1.0 / (n - nk) + 1.0 / (nk - 1.0);
            (c * p12 - (3.0 * p12 - p22) / ((nk - 1.0) * (nk - 1.0))) / (c * spread)
        })
        .collect();

    let scale = (p22 - (n + 2.0) * p12) / ((n - 1.0) * spread);
    let mut between = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            if a != b {
                let (na, nb) = (sizes[a], sizes[b]);
                between[(a, b)] =
                    ((na - 1.0).sqrt() * (nb - 1.0).sqrt()) / ((n - na).sqrt() * (n - nb).sqrt()) * scale;
            }
        }
    }
    Ok(GroupStructuredCovariance { layout: layout.clone(), within, between })
}

/// Symmetric inverse square root together with whether the eigenvalue floor fired.
#[derive(Debug, Clone, PartialEq)]
pub struct InvSqrt {
    pub matrix: DMatrix<f64>,
    pub clipped: bool,
}

fn symmetric_eigen(sigma: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !sigma.is_square() {
        return Err(Error::EigenFailure("matrix is not square".into()));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("matrix has non-finite entries".into()));
    }
    // The QR iteration can stop early on clustered spectra, so check the
    // reconstruction and fall back to Jacobi rotations if it is off.
    let tol = 1e-10 * sigma.amax().max(1.0);
    if let Some(eig) = SymmetricEigen::try_new(sigma.clone(), 1e-15, 0) {
        if eig.recompose().relative_eq(sigma, tol, 0.0) {
            return Ok(eig);
        }
    }
    let eig = jacobi_eigen(sigma);
    if eig.recompose().relative_eq(sigma, tol, 0.0) {
        Ok(eig)
    } else {
        Err(Error::EigenFailure("decomposition did not converge to the input".into()))
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
fn jacobi_eigen(sigma: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let n = sigma.nrows();
    let mut a = (sigma + sigma.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = (t * t + 1.0).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    SymmetricEigen { eigenvalues: a.diagonal(), eigenvectors: v }
}

/// Raises eigenvalues below `ridge * max(lambda_max, 0)` to that floor.
fn clip_eigenvalues(values: &mut [f64], ridge: f64) -> Result<bool> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::EigenFailure("matrix has no positive eigenvalue".into()));
    }
    let floor = (ridge * max).max(f64::MIN_POSITIVE);
    let mut clipped = false;
    for v in values.iter_mut() {
        if *v < floor {
            *v = floor;
            clipped = true;
        }
    }
    Ok(clipped)
}

/// `U diag(lambda^-1/2) U^T` from the symmetric eigendecomposition of `sigma`.
pub fn inv_sqrt(sigma: &DMatrix<f64>, ridge: f64) -> Result<InvSqrt> {
    let eig = symmetric_eigen(sigma)?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let clipped = clip_eigenvalues(&mut values, ridge)?;
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (c, lambda) in values.iter().enumerate() {
        scaled.column_mut(c).scale_mut(lambda.sqrt().recip());
    }
    let mut matrix = scaled * u.transpose();
    // symmetrize away rounding
    let n = matrix.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(InvSqrt { matrix, clipped })
}

/// Draws of `max_i O_i^2` for `O ~ N(0, sigma)`, from one factorization of `sigma`.
#[derive(Debug, Clone)]
pub struct MaxSquareSampler {
    factor: Factor,
    fallback: bool,
}

#[derive(Debug, Clone)]
enum Factor {
    Dense(DMatrix<f64>),
    Structured(StructuredRoot),
}

/// Draws generated per derived seed; fixed so results do not depend on threads.
const BLOCK: usize = 256;

impl MaxSquareSampler {
    /// Cholesky factor of `sigma`, or `U diag(sqrt(lambda))` with the eigenvalue
    /// floor when `sigma` is not numerically positive definite.
    pub fn new(sigma: &DMatrix<f64>, ridge: f64) -> Result<Self> {
        if let Some(chol) = sigma.clone().cholesky() {
            return Ok(Self { factor: Factor::Dense(chol.l()), fallback: false });
        }
        let eig = symmetric_eigen(sigma)?;
        let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        clip_eigenvalues(&mut values, ridge)?;
        let mut factor = eig.eigenvectors;
        for (c, lambda) in values.iter().enumerate() {
            factor.column_mut(c).scale_mut(lambda.sqrt());
        }
        Ok(Self { factor: Factor::Dense(factor), fallback: true })
    }

    /// Uses the structured square root: `O(n)` work per draw instead of `O(n^2)`.
    ///
    /// The maximum does not depend on the order of observations, so draws are
    /// made for a contiguous layout with groups sorted by decreasing size. The
    /// draws are then unchanged by permuting observations or renaming groups.
    pub fn structured(sigma: &GroupStructuredCovariance, ridge: f64) -> Result<Self> {
        let sizes = sigma.sizes();
        let mut order: Vec<usize> = (0..sigma.k()).collect();
        order.sort_by_key(|&g| std::cmp::Reverse(sizes[g]));
        let canonical = GroupStructuredCovariance {
            layout: GroupLayout::contiguous(&order.iter().map(|&g| sizes[g]).collect::<Vec<_>>())?,
            within: order.iter().map(|&g| sigma.within[g]).collect(),
            between: DMatrix::from_fn(order.len(), order.len(), |a, b| sigma.between[(order[a], order[b])]),
        };
        let root = canonical.sqrt(ridge)?;
        let fallback = root.clipped();
        Ok(Self { factor: Factor::Structured(root), fallback })
    }

    /// Whether eigenvalues had to be floored to obtain a factor.
    pub fn used_fallback(&self) -> bool {
        self.fallback
    }

    pub fn dim(&self) -> usize {
        match &self.factor {
            Factor::Dense(f) => f.nrows(),
            Factor::Structured(r) => r.layout.n(),
        }
    }

    fn draw_block(&self, count: usize, seed: u64) -> Vec<f64> {
        let n = self.dim();
        let mut rng = rng_from(seed);
        let z: Vec<f64> = (0..n * count).map(|_| StandardNormal.sample(&mut rng)).collect();
        let max_sq = |col: &[f64]| col.iter().fold(0.0f64, |m, v| m.max(v * v));
        match &self.factor {
            Factor::Dense(f) => {
                let o = f * DMatrix::from_vec(n, count, z);
                o.as_slice().chunks(n).map(max_sq).collect()
            }
            Factor::Structured(root) => {
                let mut out = vec![0.0; n];
                z.chunks(n)
                    .map(|col| {
                        root.apply(col, &mut out);
                        max_sq(&out)
                    })
                    .collect()
            }
        }
    }

    /// `draws` independent maxima, fully determined by `seed`.
    pub fn draw(&self, draws: usize, seed: u64) -> Vec<f64> {
        let blocks = draws.div_ceil(BLOCK);
        let parts: Vec<Vec<f64>> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let count = BLOCK.min(draws - b * BLOCK);
                self.draw_block(count, derive_seed(seed, &[b as u64]))
            })
            .collect();
        parts.concat()
    }
}

/// Convenience wrapper: factor `sigma` and draw `draws` maxima.
pub fn sample_max_sq(sigma: &DMatrix<f64>, draws: usize, seed: u64, ridge: f64) -> Result<(Vec<f64>, bool)> {
    let sampler = MaxSquareSampler::new(sigma, ridge)?;
    Ok((sampler.draw(draws, seed), sampler.used_fallback()))
}
