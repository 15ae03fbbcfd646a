//! Gaussian-process preference model.
//!
//! The latent utility has a GP prior with constant mean and RBF covariance.
//! Choices follow the softmax likelihood `P(i) ∝ exp(f(x_i)/λ)`. The posterior
//! over the latent values at the dataset's distinct points is approximated by
//! a Gaussian centred at its mode (Laplace), and predictions elsewhere follow
//! from GP conditioning.
//!
//! Inputs are mapped to the unit cube of the domain's bounding box before the
//! kernel is applied, so lengthscales are expressed in unit-cube units.
//!
//! The Newton iteration never inverts the kernel matrix. With `W = L Lᵀ` the
//! negative Hessian of the log-likelihood and `f = m + K a`, one step is
//! `a ← (I + W K)⁻¹ (W (f - m) + ∇ log p(y|f))`, evaluated through
//! `B = I + Lᵀ K L`, which is always well conditioned.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, PreferenceDataset};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jitter, log_sum_exp, symmetrize};
use crate::optim::{projected_ascent, AscentOptions};

pub const NEWTON_TOL: f64 = 1e-6;
pub const NEWTON_MAX_ITERS: usize = 100;
pub const NEWTON_MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Per-dimension RBF lengthscales (unit-cube units inside the model).
    pub lengthscales: Vec<f64>,
    /// Prior variance of the latent utility.
    pub outputscale: f64,
    /// Constant prior mean.
    pub mean_const: f64,
    /// Softmax temperature λ of the choice likelihood.
    pub noise_level: f64,
}

impl Hyperparameters {
    pub fn default_for(dim: usize) -> Self {
        Self {
            lengthscales: vec![0.5; dim],
            outputscale: 1.0,
            mean_const: 0.0,
            noise_level: 0.1,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.lengthscales.is_empty() || self.lengthscales.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter("lengthscales must be positive".into()));
        }
        if !(self.outputscale > 0.0 && self.outputscale.is_finite()) {
            return Err(Error::InvalidParameter("outputscale must be positive".into()));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::InvalidParameter("noise level must be non-negative".into()));
        }
        if !self.mean_const.is_finite() {
            return Err(Error::InvalidParameter("mean constant must be finite".into()));
        }
        Ok(())
    }
}

/// `σ² exp(-½ Σ ((x_i - y_i)/ℓ_i)²)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], hyper: &Hyperparameters) -> Result<f64> {
    let d = hyper.dim();
    if x.len() != d || y.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: if x.len() != d { x.len() } else { y.len() },
        });
    }
    Ok(rbf(x, y, &hyper.lengthscales, hyper.outputscale))
}

#[inline]
fn rbf(x: &[f64], y: &[f64], ls: &[f64], s2: f64) -> f64 {
    let mut r2 = 0.0;
    for i in 0..x.len() {
        let t = (x[i] - y[i]) / ls[i];
        r2 += t * t;
    }
    s2 * (-0.5 * r2).exp()
}

/// Softmax choice probabilities `exp(u_i/λ) / Σ_j exp(u_j/λ)`.
///
/// At `λ = 0` this is the right-hand limit: uniform over the argmax set.
pub fn choice_likelihood(utilities: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if utilities.is_empty() {
        return Err(Error::InvalidParameter("empty utility vector".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise level must be >= 0, got {lambda}")));
    }
    let max = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lambda == 0.0 {
        let ties = utilities.iter().filter(|&&u| u == max).count() as f64;
        return Ok(utilities
            .iter()
            .map(|&u| if u == max { 1.0 / ties } else { 0.0 })
            .collect());
    }
    let e: Vec<f64> = utilities.iter().map(|u| ((u - max) / lambda).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / z).collect())
}

/// Affine map from a domain's bounding box onto the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub lower: Vec<f64>,
    pub width: Vec<f64>,
}

impl Normalizer {
    pub fn for_domain(domain: &Domain) -> Self {
        let (lo, hi) = domain.bounding_box();
        let width = lo.iter().zip(&hi).map(|(l, h)| h - l).collect();
        Self { lower: lo, width }
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.lower)
            .zip(&self.width)
            .map(|((v, l), w)| (v - l) / w)
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.lower)
            .zip(&self.width)
            .map(|((v, l), w)| l + v * w)
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Joint Gaussian over the latent utility at a finite set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Posterior at `k` points together with derivatives with respect to the
/// raw coordinates of each point.
#[derive(Debug, Clone)]
pub struct PosteriorGradient {
    pub posterior: GaussianPosterior,
    /// `dmean[k][j] = ∂μ_k / ∂x_kj` (μ_i does not depend on x_k for i ≠ k).
    pub dmean: Vec<Vec<f64>>,
    /// `dcov[k][j][i] = ∂Σ_ik / ∂x_kj`; the column is the same by symmetry and
    /// all other entries are zero.
    pub dcov: Vec<Vec<Vec<f64>>>,
}

struct ObsTerm {
    idx: Vec<usize>,
    choice: usize,
}

/// The Laplace-approximate posterior.
#[derive(Debug, Clone)]
pub struct PosteriorModel {
    hyper: Hyperparameters,
    norm: Normalizer,
    domain: Domain,
    anchors: Vec<Vec<f64>>,
    mode: DVector<f64>,
    alpha: DVector<f64>,
    /// `(K + W⁻¹)⁻¹`, so that `Σ(X) = K(X,X) - K(X,A) R K(A,X)`.
    reduce: DMatrix<f64>,
    dataset: PreferenceDataset,
    log_evidence: f64,
    newton_iterations: usize,
}

struct LaplaceCore {
    alpha: DVector<f64>,
    f: DVector<f64>,
    reduce: DMatrix<f64>,
    log_evidence: f64,
    iterations: usize,
}

fn obs_terms(ds: &PreferenceDataset) -> Vec<ObsTerm> {
    (0..ds.len())
        .map(|i| ObsTerm {
            idx: ds.observation_indices(i).to_vec(),
            choice: ds.observations()[i].response.0,
        })
        .collect()
}

fn kernel_matrix(pts: &[Vec<f64>], hyper: &Hyperparameters) -> DMatrix<f64> {
    let m = pts.len();
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        k[(i, i)] = hyper.outputscale;
        for j in 0..i {
            let v = rbf(&pts[i], &pts[j], &hyper.lengthscales, hyper.outputscale);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Log-likelihood, its gradient and a square-root factor of the negative
/// Hessian, all at latent values `f`.
fn likelihood_terms(
    f: &DVector<f64>,
    obs: &[ObsTerm],
    lambda: f64,
    q: usize,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let m = f.len();
    let cols_per = if q == 2 { 1 } else { q };
    let mut ll = 0.0;
    let mut g = DVector::zeros(m);
    let mut lmat = DMatrix::zeros(m, obs.len() * cols_per);
    let mut z = vec![0.0; q];
    for (o, t) in obs.iter().enumerate() {
        for (j, &i) in t.idx.iter().enumerate() {
            z[j] = f[i] / lambda;
        }
        let lse = log_sum_exp(&z);
        ll += z[t.choice] - lse;
        let p: Vec<f64> = z.iter().map(|v| (v - lse).exp()).collect();
        g[t.idx[t.choice]] += 1.0 / lambda;
        for (j, &i) in t.idx.iter().enumerate() {
            g[i] -= p[j] / lambda;
        }
        if q == 2 {
            // H = p0 p1 / λ² (e0 - e1)(e0 - e1)ᵀ
            let c = (p[0] * p[1]).sqrt() / lambda;
            lmat[(t.idx[0], o)] += c;
            lmat[(t.idx[1], o)] -= c;
        } else {
            // H = (diag(p) - ppᵀ)/λ² = S Sᵀ with S = (diag(√p) - p √pᵀ)/λ
            for j in 0..q {
                let sj = p[j].sqrt();
                for (i, &a) in t.idx.iter().enumerate() {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    lmat[(a, o * q + j)] += (delta - p[i]) * sj / lambda;
                }
            }
        }
    }
    (ll, g, lmat)
}

fn log_lik(f: &DVector<f64>, obs: &[ObsTerm], lambda: f64) -> f64 {
    let mut z = Vec::new();
    obs.iter()
        .map(|t| {
            z.clear();
            z.extend(t.idx.iter().map(|&i| f[i] / lambda));
            z[t.choice] - log_sum_exp(&z)
        })
        .sum()
}

fn laplace_core(
    anchors: &[Vec<f64>],
    obs: &[ObsTerm],
    q: usize,
    hyper: &Hyperparameters,
    warm: Option<&DVector<f64>>,
) -> Result<LaplaceCore> {
    let m = anchors.len();
    let lambda = hyper.noise_level;
    let m0 = hyper.mean_const;
    let kmat = kernel_matrix(anchors, hyper);
    let mut a = match warm {
        Some(w) if w.len() == m => w.clone(),
        _ => DVector::zeros(m),
    };
    let mut ka = &kmat * &a;
    let mut f = ka.add_scalar(m0);
    let mut psi = log_lik(&f, obs, lambda) - 0.5 * a.dot(&ka);
    let mut iterations = 0;

    loop {
        let (_, g, lmat) = likelihood_terms(&f, obs, lambda, q);
        let grad_norm = (&g - &a).amax();
        if grad_norm <= NEWTON_TOL {
            break;
        }
        if iterations >= NEWTON_MAX_ITERS {
            return Err(Error::NewtonNonConvergence {
                grad_norm,
                iterations,
            });
        }
        iterations += 1;

        let lt_k = lmat.transpose() * &kmat;
        let mut bmat = &lt_k * &lmat;
        for i in 0..bmat.nrows() {
            bmat[(i, i)] += 1.0;
        }
        let (chol, _) = cholesky_jitter(&bmat)?;
        let b = &lmat * (lmat.transpose() * &ka) + &g;
        let correction = &lmat * chol.solve(&(&lt_k * &b));
        let a_new = b - correction;
        let da = &a_new - &a;

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            let a_t = &a + &da * t;
            let ka_t = &kmat * &a_t;
            let f_t = ka_t.add_scalar(m0);
            let psi_t = log_lik(&f_t, obs, lambda) - 0.5 * a_t.dot(&ka_t);
            if psi_t.is_finite() && psi_t >= psi {
                a = a_t;
                ka = ka_t;
                f = f_t;
                psi = psi_t;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // The full Newton direction cannot improve the objective at
            // floating-point resolution: the mode is as accurate as it gets.
            let (_, g, _) = likelihood_terms(&f, obs, lambda, q);
            let grad_norm = (&g - &a).amax();
            if grad_norm <= NEWTON_TOL * (1.0 + a.amax()) {
                break;
            }
            return Err(Error::NewtonNonConvergence {
                grad_norm,
                iterations,
            });
        }
    }

    let (_, _, lmat) = likelihood_terms(&f, obs, lambda, q);
    let lt_k = lmat.transpose() * &kmat;
    let mut bmat = &lt_k * &lmat;
    for i in 0..bmat.nrows() {
        bmat[(i, i)] += 1.0;
    }
    let (chol, _) = cholesky_jitter(&bmat)?;
    let log_det_b: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let linv_lt = chol.solve(&lmat.transpose());
    let mut reduce = &lmat * linv_lt;
    symmetrize(&mut reduce);
    Ok(LaplaceCore {
        alpha: a,
        f,
        reduce,
        log_evidence: psi - 0.5 * log_det_b,
        iterations,
    })
}

/// Gradient of the Laplace log evidence in `(ln ℓ₁.., ln σ², ln λ)`, including
/// the implicit dependence of the mode on the hyperparameters.
fn log_evidence_grad(
    anchors: &[Vec<f64>],
    obs: &[ObsTerm],
    q: usize,
    hyper: &Hyperparameters,
    core: &LaplaceCore,
) -> Vec<f64> {
    let m = anchors.len();
    let d = hyper.dim();
    let lambda = hyper.noise_level;
    let kmat = kernel_matrix(anchors, hyper);
    let (a, f, r) = (&core.alpha, &core.f, &core.reduce);
    let kr = &kmat * r;
    // C = (K⁻¹ + W)⁻¹
    let cmat = &kmat - &kr * &kmat;

    // s_i = ∂ ln|I + KW| / ∂f_i, from the third derivatives of the softmax
    let mut s = DVector::zeros(m);
    let mut z = vec![0.0; q];
    let mut p = vec![0.0; q];
    let mut cp = vec![0.0; q];
    for t in obs {
        for (j, &i) in t.idx.iter().enumerate() {
            z[j] = f[i] / lambda;
        }
        let lse = log_sum_exp(&z);
        for j in 0..q {
            p[j] = (z[j] - lse).exp();
        }
        for i in 0..q {
            cp[i] = (0..q).map(|j| cmat[(t.idx[i], t.idx[j])] * p[j]).sum();
        }
        let pcp: f64 = (0..q).map(|j| p[j] * cp[j]).sum();
        let diag_p: f64 = (0..q).map(|j| cmat[(t.idx[j], t.idx[j])] * p[j]).sum();
        for k in 0..q {
            // dp = p ∘ (e_k - p); tr(C_t ∂H/∂z_k) = Σ_j C_jj dp_j - 2 dpᵀ C_t p
            let diag_term = p[k] * cmat[(t.idx[k], t.idx[k])] - p[k] * diag_p;
            let cross = p[k] * cp[k] - p[k] * pcp;
            s[t.idx[k]] += (diag_term - 2.0 * cross) / lambda.powi(3);
        }
    }
    // u = (I - KR)ᵀ s
    let u = &s - r * (&kmat * &s);

    let mut grad = vec![0.0; d + 2];
    for (j, g) in grad.iter_mut().enumerate().take(d) {
        let l2 = hyper.lengthscales[j] * hyper.lengthscales[j];
        let mut dk_a = DVector::zeros(m);
        let mut tr = 0.0;
        for b in 0..m {
            for c in 0..b {
                let diff = anchors[b][j] - anchors[c][j];
                let v = kmat[(b, c)] * diff * diff / l2;
                dk_a[b] += v * a[c];
                dk_a[c] += v * a[b];
                tr += 2.0 * r[(b, c)] * v;
            }
        }
        *g = 0.5 * a.dot(&dk_a) - 0.5 * tr - 0.5 * u.dot(&dk_a);
    }
    let ka = &kmat * a;
    let tr_rk = kr.trace();
    grad[d] = 0.5 * a.dot(&ka) - 0.5 * tr_rk - 0.5 * u.dot(&ka);

    let (_, _, lmat) = likelihood_terms(f, obs, lambda, q);
    let wf = &lmat * (lmat.transpose() * f);
    let df = &kmat * (&wf - a);
    let df = &df - &kmat * (r * &df);
    grad[d + 1] = -f.dot(a) + tr_rk + 0.5 * s.dot(f) - 0.5 * s.dot(&df);
    grad
}

/// Fits the Laplace approximation for fixed hyperparameters.
pub fn fit_laplace(
    ds: &PreferenceDataset,
    hyper: &Hyperparameters,
    domain: &Domain,
) -> Result<PosteriorModel> {
    fit_laplace_warm(ds, hyper, domain, None)
}

fn fit_laplace_warm(
    ds: &PreferenceDataset,
    hyper: &Hyperparameters,
    domain: &Domain,
    warm: Option<&DVector<f64>>,
) -> Result<PosteriorModel> {
    hyper.check()?;
    if hyper.dim() != domain.dim() {
        return Err(Error::Dimension {
            expected: domain.dim(),
            got: hyper.dim(),
        });
    }
    if !(hyper.noise_level > 0.0) {
        return Err(Error::InvalidParameter(
            "the fitted likelihood needs a positive noise level".into(),
        ));
    }
    if let Some(d) = ds.dim() {
        if d != domain.dim() {
            return Err(Error::Dimension {
                expected: domain.dim(),
                got: d,
            });
        }
    }
    let norm = Normalizer::for_domain(domain);
    let anchors: Vec<Vec<f64>> = ds.distinct_points().iter().map(|p| norm.to_unit(p)).collect();
    let obs = obs_terms(ds);
    let core = laplace_core(&anchors, &obs, ds.q(), hyper, warm)?;
    Ok(PosteriorModel {
        hyper: hyper.clone(),
        norm,
        domain: domain.clone(),
        anchors,
        mode: core.f,
        alpha: core.alpha,
        reduce: core.reduce,
        dataset: ds.clone(),
        log_evidence: core.log_evidence,
        newton_iterations: core.iterations,
    })
}

impl PosteriorModel {
    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.norm
    }

    pub fn dataset(&self) -> &PreferenceDataset {
        &self.dataset
    }

    /// Laplace mode of the latent utility at the dataset's distinct points.
    pub fn mode(&self) -> &DVector<f64> {
        &self.mode
    }

    /// `K⁻¹ (f̂ - m)`: the representer weights of the posterior mean.
    pub fn representer_weights(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn anchors_unit(&self) -> &[Vec<f64>] {
        &self.anchors
    }

    /// Laplace approximation of the log marginal likelihood.
    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    pub fn newton_iterations(&self) -> usize {
        self.newton_iterations
    }

    fn unit_checked(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.norm.dim() {
            return Err(Error::Dimension {
                expected: self.norm.dim(),
                got: x.len(),
            });
        }
        Ok(self.norm.to_unit(x))
    }

    fn cross(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.anchors.len(),
            self.anchors
                .iter()
                .map(|a| rbf(u, a, &self.hyper.lengthscales, self.hyper.outputscale)),
        )
    }

    /// Predictive mean at a single point.
    pub fn mean_at(&self, x: &[f64]) -> Result<f64> {
        let u = self.unit_checked(x)?;
        Ok(self.hyper.mean_const + self.cross(&u).dot(&self.alpha))
    }

    /// Predictive mean and its gradient with respect to raw coordinates.
    pub fn mean_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let u = self.unit_checked(x)?;
        let d = u.len();
        let ls = &self.hyper.lengthscales;
        let mut mean = self.hyper.mean_const;
        let mut grad = vec![0.0; d];
        for (a, w) in self.anchors.iter().zip(self.alpha.iter()) {
            let k = rbf(&u, a, ls, self.hyper.outputscale);
            mean += k * w;
            for j in 0..d {
                grad[j] -= k * w * (u[j] - a[j]) / (ls[j] * ls[j]);
            }
        }
        for j in 0..d {
            grad[j] /= self.norm.width[j];
        }
        Ok((mean, grad))
    }

    /// Joint Gaussian over `f(points)`.
    pub fn posterior_at(&self, points: &[Vec<f64>]) -> Result<GaussianPosterior> {
        let us = points
            .iter()
            .map(|x| self.unit_checked(x))
            .collect::<Result<Vec<_>>>()?;
        let k = us.len();
        let ks: Vec<DVector<f64>> = us.iter().map(|u| self.cross(u)).collect();
        let rk: Vec<DVector<f64>> = ks.iter().map(|c| &self.reduce * c).collect();
        let mut mean = DVector::zeros(k);
        let mut cov = DMatrix::zeros(k, k);
        for i in 0..k {
            mean[i] = self.hyper.mean_const + ks[i].dot(&self.alpha);
            for j in 0..=i {
                let prior = rbf(&us[i], &us[j], &self.hyper.lengthscales, self.hyper.outputscale);
                let v = prior - ks[i].dot(&rk[j]);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        Ok(GaussianPosterior {
            mean,
            covariance: cov,
        })
    }

    /// Posterior at `points` plus derivatives of mean and covariance with
    /// respect to every coordinate of every point.
    pub fn posterior_with_grad(&self, points: &[Vec<f64>]) -> Result<PosteriorGradient> {
        let us = points
            .iter()
            .map(|x| self.unit_checked(x))
            .collect::<Result<Vec<_>>>()?;
        let k = us.len();
        let d = self.norm.dim();
        let m = self.anchors.len();
        let ls = &self.hyper.lengthscales;
        let s2 = self.hyper.outputscale;
        let ks: Vec<DVector<f64>> = us.iter().map(|u| self.cross(u)).collect();
        let rk: Vec<DVector<f64>> = ks.iter().map(|c| &self.reduce * c).collect();

        let mut mean = DVector::zeros(k);
        let mut cov = DMatrix::zeros(k, k);
        for i in 0..k {
            mean[i] = self.hyper.mean_const + ks[i].dot(&self.alpha);
            for j in 0..=i {
                let v = rbf(&us[i], &us[j], ls, s2) - ks[i].dot(&rk[j]);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }

        let mut dmean = vec![vec![0.0; d]; k];
        let mut dcov = vec![vec![vec![0.0; k]; d]; k];
        let mut dk = vec![0.0; m];
        for p in 0..k {
            for j in 0..d {
                let inv_l2 = 1.0 / (ls[j] * ls[j]);
                for (a_idx, a) in self.anchors.iter().enumerate() {
                    dk[a_idx] = -ks[p][a_idx] * (us[p][j] - a[j]) * inv_l2;
                }
                let scale = 1.0 / self.norm.width[j];
                let dm: f64 = dk.iter().zip(self.alpha.iter()).map(|(x, y)| x * y).sum();
                dmean[p][j] = dm * scale;
                for i in 0..k {
                    let reduce_term: f64 = dk.iter().zip(rk[i].iter()).map(|(x, y)| x * y).sum();
                    let v = if i == p {
                        -2.0 * reduce_term
                    } else {
                        let kij = rbf(&us[i], &us[p], ls, s2);
                        -kij * (us[p][j] - us[i][j]) * inv_l2 - reduce_term
                    };
                    dcov[p][j][i] = v * scale;
                }
            }
        }
        Ok(PosteriorGradient {
            posterior: GaussianPosterior {
                mean,
                covariance: cov,
            },
            dmean,
            dcov,
        })
    }

    /// Laplace covariance of the latent values at the anchors.
    pub fn anchor_covariance(&self) -> DMatrix<f64> {
        let k = kernel_matrix(&self.anchors, &self.hyper);
        let mut c = &k - &k * &self.reduce * &k;
        symmetrize(&mut c);
        c
    }

    /// Prior covariance at the anchors (no jitter).
    pub fn anchor_prior_covariance(&self) -> DMatrix<f64> {
        kernel_matrix(&self.anchors, &self.hyper)
    }

    /// Snapshot suitable for persistence; the mode is recomputed on load.
    pub fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            hyperparameters: self.hyper.clone(),
            domain: self.domain.clone(),
            dataset: self.dataset.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub hyperparameters: Hyperparameters,
    pub domain: Domain,
    pub dataset: PreferenceDataset,
}

impl ModelSnapshot {
    pub fn refit(&self) -> Result<PosteriorModel> {
        fit_laplace(&self.dataset, &self.hyperparameters, &self.domain)
    }
}

/// Bounds, priors and search effort for [`fit_hyperparameters`]. Missing
/// fields deserialize to their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperFitConfig {
    /// Lengthscale bounds in unit-cube units.
    pub lengthscale_bounds: (f64, f64),
    pub outputscale_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
    /// Log-normal prior `(mean of ln σ², sd)` on the outputscale. The softmax
    /// likelihood only sees `f/λ`, so without it the evidence is flat along
    /// `(σ, λ) → (cσ, cλ)`.
    pub outputscale_prior: Option<(f64, f64)>,
    /// Log-normal prior `(mean of ln ℓ, sd)` on each lengthscale.
    pub lengthscale_prior: Option<(f64, f64)>,
    /// Log-normal prior `(mean of ln λ, sd)` on the noise level.
    pub noise_prior: Option<(f64, f64)>,
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for HyperFitConfig {
    fn default() -> Self {
        Self {
            lengthscale_bounds: (0.01, 10.0),
            outputscale_bounds: (0.01, 100.0),
            noise_bounds: (1e-3, 10.0),
            outputscale_prior: Some((0.0, 1.0)),
            lengthscale_prior: Some((0.5f64.ln(), 1.0)),
            noise_prior: Some((0.0, 0.5)),
            restarts: 3,
            max_iters: 30,
        }
    }
}

impl HyperFitConfig {
    fn theta_bounds(&self, d: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![self.lengthscale_bounds.0.ln(); d];
        let mut hi = vec![self.lengthscale_bounds.1.ln(); d];
        lo.push(self.outputscale_bounds.0.ln());
        hi.push(self.outputscale_bounds.1.ln());
        lo.push(self.noise_bounds.0.ln());
        hi.push(self.noise_bounds.1.ln());
        (lo, hi)
    }

    /// Projects hyperparameters onto the configured bounds.
    pub fn project(&self, h: &Hyperparameters) -> Hyperparameters {
        Hyperparameters {
            lengthscales: h
                .lengthscales
                .iter()
                .map(|l| l.clamp(self.lengthscale_bounds.0, self.lengthscale_bounds.1))
                .collect(),
            outputscale: h.outputscale.clamp(self.outputscale_bounds.0, self.outputscale_bounds.1),
            mean_const: h.mean_const,
            noise_level: h.noise_level.clamp(self.noise_bounds.0, self.noise_bounds.1),
        }
    }

    fn log_prior(&self, h: &Hyperparameters) -> f64 {
        let lognormal = |x: f64, (mu, sd): (f64, f64)| {
            let z = (x.ln() - mu) / sd;
            -0.5 * z * z
        };
        let mut lp = 0.0;
        if let Some(p) = self.outputscale_prior {
            lp += lognormal(h.outputscale, p);
        }
        if let Some(p) = self.lengthscale_prior {
            lp += h.lengthscales.iter().map(|&l| lognormal(l, p)).sum::<f64>();
        }
        if let Some(p) = self.noise_prior {
            lp += lognormal(h.noise_level, p);
        }
        lp
    }

    /// Gradient of [`Self::log_prior`] in `(ln ℓ₁.., ln σ², ln λ)`.
    fn log_prior_grad(&self, h: &Hyperparameters) -> Vec<f64> {
        let dlog = |x: f64, (mu, sd): (f64, f64)| -(x.ln() - mu) / (sd * sd);
        let d = h.dim();
        let mut g = vec![0.0; d + 2];
        if let Some(p) = self.lengthscale_prior {
            for (gj, &l) in g.iter_mut().zip(&h.lengthscales) {
                *gj = dlog(l, p);
            }
        }
        if let Some(p) = self.outputscale_prior {
            g[d] = dlog(h.outputscale, p);
        }
        if let Some(p) = self.noise_prior {
            g[d + 1] = dlog(h.noise_level, p);
        }
        g
    }
}

fn to_theta(h: &Hyperparameters) -> Vec<f64> {
    let mut t: Vec<f64> = h.lengthscales.iter().map(|l| l.ln()).collect();
    t.push(h.outputscale.ln());
    t.push(h.noise_level.ln());
    t
}

fn from_theta(t: &[f64], mean_const: f64) -> Hyperparameters {
    let d = t.len() - 2;
    Hyperparameters {
        lengthscales: t[..d].iter().map(|v| v.exp()).collect(),
        outputscale: t[d].exp(),
        mean_const,
        noise_level: t[d + 1].exp(),
    }
}

/// Objective maximized by [`fit_hyperparameters`]: Laplace log evidence plus
/// the configured log hyperpriors.
pub fn hyper_objective(
    ds: &PreferenceDataset,
    domain: &Domain,
    hyper: &Hyperparameters,
    cfg: &HyperFitConfig,
) -> Result<f64> {
    let model = fit_laplace(ds, hyper, domain)?;
    Ok(model.log_evidence + cfg.log_prior(hyper))
}

/// Maximizes the Laplace-approximate marginal likelihood (plus hyperpriors)
/// over log lengthscales, log outputscale and log noise level.
///
/// The constant mean is left at `init.mean_const`: the softmax likelihood is
/// invariant to shifting every utility, so the evidence does not depend on it.
/// Restart 0 starts from the (projected) initialization; the others from
/// uniform draws in log-space. The best restart wins, lowest index on ties.
pub fn fit_hyperparameters<R: Rng + ?Sized>(
    ds: &PreferenceDataset,
    domain: &Domain,
    init: &Hyperparameters,
    cfg: &HyperFitConfig,
    rng: &mut R,
) -> Result<Hyperparameters> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = domain.dim();
    if init.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            got: init.dim(),
        });
    }
    let (lo, hi) = cfg.theta_bounds(d);
    let mut starts = vec![to_theta(&cfg.project(init))];
    for _ in 1..cfg.restarts.max(1) {
        starts.push(
            lo.iter()
                .zip(&hi)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect(),
        );
    }
    let norm = Normalizer::for_domain(domain);
    let anchors: Vec<Vec<f64>> = ds.distinct_points().iter().map(|p| norm.to_unit(p)).collect();
    let obs = obs_terms(ds);
    let m0 = init.mean_const;

    let run = |theta0: &Vec<f64>| -> Option<(Vec<f64>, f64)> {
        let mut warm: Option<DVector<f64>> = None;
        let mut eval = |t: &[f64], with_grad: bool| -> Option<(f64, Vec<f64>)> {
            let h = from_theta(t, m0);
            let core = laplace_core(&anchors, &obs, ds.q(), &h, warm.as_ref()).ok()?;
            let v = core.log_evidence + cfg.log_prior(&h);
            let g = if with_grad {
                log_evidence_grad(&anchors, &obs, ds.q(), &h, &core)
                    .iter()
                    .zip(cfg.log_prior_grad(&h))
                    .map(|(a, b)| a + b)
                    .collect()
            } else {
                Vec::new()
            };
            warm = Some(core.alpha);
            (v.is_finite() && g.iter().all(|x: &f64| x.is_finite())).then_some((v, g))
        };
        let (f0, _) = eval(theta0, false)?;
        let result = projected_ascent(
            theta0.clone(),
            &lo,
            &hi,
            |t| eval(t, true),
            &AscentOptions {
                max_iters: cfg.max_iters,
                initial_step: 0.05,
                x_tol: 1e-4,
                f_tol: 1e-9,
                max_halvings: 20,
            },
        );
        match result {
            Some((t, v)) if v >= f0 => Some((t, v)),
            _ => Some((theta0.clone(), f0)),
        }
    };

    let results: Vec<Option<(Vec<f64>, f64)>> = starts.par_iter().map(run).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (t, v) in results.into_iter().flatten() {
        if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
            best = Some((t, v));
        }
    }
    match best {
        Some((t, _)) => Ok(cfg.project(&from_theta(&t, m0))),
        None => Err(Error::HyperparameterFit(
            "every restart failed to evaluate".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Query, Response};
    use crate::linalg::min_eigenvalue;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn unit_hyper(d: usize) -> Hyperparameters {
        Hyperparameters {
            lengthscales: vec![1.0; d],
            outputscale: 1.0,
            mean_const: 0.0,
            noise_level: 0.1,
        }
    }

    #[test]
    fn rbf_values() {
        let h = unit_hyper(1);
        assert_eq!(rbf_kernel(&[0.3], &[0.3], &h).unwrap(), 1.0);
        assert!((rbf_kernel(&[0.0], &[1.0], &h).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert!((rbf_kernel(&[0.0], &[1.0], &h).unwrap() - 0.60653).abs() < 1e-5);
        let h2 = Hyperparameters {
            lengthscales: vec![0.3, 2.0],
            outputscale: 2.5,
            ..unit_hyper(2)
        };
        let (x, y) = ([0.1, -0.4], [0.7, 0.2]);
        assert_eq!(rbf_kernel(&x, &y, &h2).unwrap(), rbf_kernel(&y, &x, &h2).unwrap());
        assert!(matches!(rbf_kernel(&[0.0], &[0.0, 1.0], &h2), Err(Error::Dimension { .. })));
    }

    #[test]
    fn likelihood_examples() {
        let p = choice_likelihood(&[0.4, 0.4, 0.4], 0.7).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(choice_likelihood(&[1.0, 0.0], 0.0).unwrap(), vec![1.0, 0.0]);
        let p = choice_likelihood(&[1.0, 0.0], 1e-6).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12);
        let p = choice_likelihood(&[1.0, 0.0], 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p[0] - 0.73106).abs() < 1e-5 && (p[1] - 0.26894).abs() < 1e-5);
        assert_eq!(choice_likelihood(&[2.0, 1.0, 2.0], 0.0).unwrap(), vec![0.5, 0.0, 0.5]);
        assert!(choice_likelihood(&[1.0, 0.0], -0.1).is_err());
        assert!(choice_likelihood(&[], 0.1).is_err());
        // overflow safety
        let p = choice_likelihood(&[1e300, 0.0], 1e-3).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
    }

    fn pair(a: f64, b: f64) -> Query {
        Query::new(vec![vec![a], vec![b]])
    }

    #[test]
    fn empty_dataset_gives_prior() {
        let dom = Domain::unit_cube(1);
        let h = Hyperparameters {
            mean_const: 0.7,
            outputscale: 2.0,
            ..unit_hyper(1)
        };
        let model = fit_laplace(&PreferenceDataset::new(2).unwrap(), &h, &dom).unwrap();
        let post = model.posterior_at(&[vec![0.25]]).unwrap();
        assert_eq!(post.mean[0], 0.7);
        assert_eq!(post.covariance[(0, 0)], 2.0);
    }

    #[test]
    fn repeated_wins_order_the_means() {
        let dom = Domain::unit_cube(1);
        let mut ds = PreferenceDataset::new(2).unwrap();
        for _ in 0..25 {
            ds.push(pair(0.2, 0.8), Response(0)).unwrap();
        }
        let model = fit_laplace(&ds, &unit_hyper(1), &dom).unwrap();
        assert!(model.mean_at(&[0.2]).unwrap() > model.mean_at(&[0.8]).unwrap());
    }

    #[test]
    fn anchor_mean_reproduces_mode() {
        let dom = Domain::unit_cube(1);
        let ds = PreferenceDataset::new(2)
            .unwrap()
            .append(pair(0.1, 0.5), Response(1))
            .unwrap()
            .append(pair(0.5, 0.9), Response(0))
            .unwrap();
        let model = fit_laplace(&ds, &unit_hyper(1), &dom).unwrap();
        for (i, p) in ds.distinct_points().iter().enumerate() {
            let post = model.posterior_at(&[p.clone()]).unwrap();
            assert!((post.mean[0] - model.mode()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn three_point_order_is_respected() {
        // x0 > x1 > x2 observed consistently.
        let dom = Domain::unit_cube(1);
        let mut ds = PreferenceDataset::new(2).unwrap();
        for _ in 0..3 {
            ds.push(pair(0.1, 0.5), Response(0)).unwrap();
            ds.push(pair(0.5, 0.9), Response(0)).unwrap();
            ds.push(pair(0.9, 0.1), Response(1)).unwrap();
        }
        let h = Hyperparameters {
            lengthscales: vec![0.3],
            ..unit_hyper(1)
        };
        let model = fit_laplace(&ds, &h, &dom).unwrap();
        let m: Vec<f64> = [0.1, 0.5, 0.9].iter().map(|&x| model.mean_at(&[x]).unwrap()).collect();
        assert!(m[0] > m[1] && m[1] > m[2], "{m:?}");
    }

    #[test]
    fn far_point_reverts_to_prior() {
        let dom = Domain::new_box(vec![0.0], vec![100.0]).unwrap();
        let h = Hyperparameters {
            lengthscales: vec![0.01],
            mean_const: 0.3,
            outputscale: 1.5,
            noise_level: 0.1,
        };
        let ds = PreferenceDataset::new(2)
            .unwrap()
            .append(pair(1.0, 2.0), Response(0))
            .unwrap();
        let model = fit_laplace(&ds, &h, &dom).unwrap();
        let post = model.posterior_at(&[vec![90.0]]).unwrap();
        assert!((post.mean[0] - 0.3).abs() < 1e-3 * 1.5f64.sqrt());
        assert!((post.covariance[(0, 0)] - 1.5).abs() < 1e-3 * 1.5);
    }

    #[test]
    fn duplicated_query_point_is_degenerate() {
        let dom = Domain::unit_cube(2);
        let ds = PreferenceDataset::new(2)
            .unwrap()
            .append(Query::new(vec![vec![0.1, 0.1], vec![0.6, 0.3]]), Response(0))
            .unwrap();
        let model = fit_laplace(&ds, &unit_hyper(2), &dom).unwrap();
        let x = vec![0.4, 0.4];
        let post = model.posterior_at(&[x.clone(), x]).unwrap();
        let c = &post.covariance;
        assert!((c[(0, 0)] - c[(0, 1)]).abs() < 1e-14 && (c[(1, 1)] - c[(1, 0)]).abs() < 1e-14);
        assert!(c.determinant() <= 1e-8);
    }

    #[test]
    fn posterior_gradient_matches_finite_differences() {
        let dom = Domain::new_box(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let mut rng = rng_from_seed(3);
        let mut ds = PreferenceDataset::new(2).unwrap();
        for _ in 0..6 {
            ds.push(Query::new(vec![dom.sample(&mut rng), dom.sample(&mut rng)]), Response(rng.random_range(0..2)))
                .unwrap();
        }
        let h = Hyperparameters {
            lengthscales: vec![0.4, 0.7],
            outputscale: 1.3,
            mean_const: 0.1,
            noise_level: 0.2,
        };
        let model = fit_laplace(&ds, &h, &dom).unwrap();
        let pts = vec![dom.sample(&mut rng), dom.sample(&mut rng), dom.sample(&mut rng)];
        let pg = model.posterior_with_grad(&pts).unwrap();
        let eps = 1e-6;
        for p in 0..3 {
            for j in 0..2 {
                let mut up = pts.clone();
                up[p][j] += eps;
                let mut dn = pts.clone();
                dn[p][j] -= eps;
                let a = model.posterior_at(&up).unwrap();
                let b = model.posterior_at(&dn).unwrap();
                let dm = (a.mean[p] - b.mean[p]) / (2.0 * eps);
                assert!((dm - pg.dmean[p][j]).abs() < 1e-6, "dmean {dm} vs {}", pg.dmean[p][j]);
                for i in 0..3 {
                    let dc = (a.covariance[(i, p)] - b.covariance[(i, p)]) / (2.0 * eps);
                    assert!((dc - pg.dcov[p][j][i]).abs() < 1e-6, "dcov {dc} vs {}", pg.dcov[p][j][i]);
                }
                let (_, g) = model.mean_and_grad(&pts[p]).unwrap();
                assert!((g[j] - pg.dmean[p][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hyper_fit_respects_bounds_and_improves() {
        let dom = Domain::unit_cube(2);
        let mut rng = rng_from_seed(11);
        let mut ds = PreferenceDataset::new(2).unwrap();
        for _ in 0..20 {
            let a = dom.sample(&mut rng);
            let b = dom.sample(&mut rng);
            let u = |x: &[f64]| -(x[0] - 0.3).powi(2) - (x[1] - 0.6).powi(2);
            let c = if u(&a) >= u(&b) { 0 } else { 1 };
            ds.push(Query::new(vec![a, b]), Response(c)).unwrap();
        }
        let cfg = HyperFitConfig::default();
        let init = Hyperparameters::default_for(2);
        let fitted = fit_hyperparameters(&ds, &dom, &init, &cfg, &mut rng).unwrap();
        for l in &fitted.lengthscales {
            assert!(*l >= 0.01 && *l <= 10.0);
        }
        assert!(fitted.outputscale >= 0.01 && fitted.outputscale <= 100.0);
        assert!(fitted.noise_level >= 1e-3 && fitted.noise_level <= 10.0);
        let before = hyper_objective(&ds, &dom, &init, &cfg).unwrap();
        let after = hyper_objective(&ds, &dom, &fitted, &cfg).unwrap();
        assert!(after >= before - 1e-9, "{after} < {before}");
        assert!(fit_hyperparameters(&PreferenceDataset::new(2).unwrap(), &dom, &init, &cfg, &mut rng).is_err());
    }

    #[test]
    fn evidence_gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(12);
        for (q, d, n) in [(2, 2, 15), (3, 3, 12), (4, 2, 8)] {
            let dom = Domain::unit_cube(d);
            let mut ds = PreferenceDataset::new(q).unwrap();
            for _ in 0..n {
                let pts: Vec<Vec<f64>> = (0..q).map(|_| dom.sample(&mut rng)).collect();
                let c = rng.random_range(0..q);
                ds.push(Query::new(pts), Response(c)).unwrap();
            }
            let norm = Normalizer::for_domain(&dom);
            let anchors: Vec<Vec<f64>> = ds.distinct_points().iter().map(|p| norm.to_unit(p)).collect();
            let obs = obs_terms(&ds);
            let theta: Vec<f64> = (0..d + 2).map(|_| rng.random_range(-1.5..0.5)).collect();
            let value = |t: &[f64]| laplace_core(&anchors, &obs, q, &from_theta(t, 0.0), None).unwrap().log_evidence;
            let h = from_theta(&theta, 0.0);
            let core = laplace_core(&anchors, &obs, q, &h, None).unwrap();
            let g = log_evidence_grad(&anchors, &obs, q, &h, &core);
            for i in 0..theta.len() {
                let step = 1e-5;
                let mut up = theta.clone();
                up[i] += step;
                let mut dn = theta.clone();
                dn[i] -= step;
                let fd = (value(&up) - value(&dn)) / (2.0 * step);
                assert!((g[i] - fd).abs() <= 1e-5 * (1.0 + fd.abs()), "q={q} θ{i}: {} vs {fd}", g[i]);
            }
        }
    }

    #[test]
    fn prior_gradient_matches_finite_differences() {
        let cfg = HyperFitConfig::default();
        let theta = [-0.3, 0.8, 0.4, -1.2];
        let g = cfg.log_prior_grad(&from_theta(&theta, 0.0));
        for i in 0..theta.len() {
            let mut up = theta;
            up[i] += 1e-6;
            let mut dn = theta;
            dn[i] -= 1e-6;
            let fd = (cfg.log_prior(&from_theta(&up, 0.0)) - cfg.log_prior(&from_theta(&dn, 0.0))) / 2e-6;
            assert!((g[i] - fd).abs() < 1e-6, "θ{i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn partial_fit_config_fills_defaults() {
        let cfg: HyperFitConfig = serde_json::from_str(r#"{"restarts": 5, "noise_prior": null}"#).unwrap();
        assert_eq!(cfg.restarts, 5);
        assert_eq!(cfg.noise_prior, None);
        assert_eq!(cfg.lengthscale_prior, HyperFitConfig::default().lengthscale_prior);
    }

    #[test]
    fn snapshot_roundtrip_refits_identically() {
        let dom = Domain::unit_cube(1);
        let ds = PreferenceDataset::new(2)
            .unwrap()
            .append(pair(0.1, 0.5), Response(1))
            .unwrap();
        let model = fit_laplace(&ds, &unit_hyper(1), &dom).unwrap();
        let json = serde_json::to_string(&model.snapshot()).unwrap();
        assert!(json.contains("\"noise_level\""));
        let back: ModelSnapshot = serde_json::from_str(&json).unwrap();
        let refit = back.refit().unwrap();
        assert_eq!(refit.mode(), model.mode());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn likelihood_sums_to_one_and_is_shift_invariant(
            u in proptest::collection::vec(-50.0f64..50.0, 2..7),
            lambda in 1e-3f64..10.0,
            shift in -100.0f64..100.0,
        ) {
            let p = choice_likelihood(&u, lambda).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = u.iter().map(|v| v + shift).collect();
            let ps = choice_likelihood(&shifted, lambda).unwrap();
            for (a, b) in p.iter().zip(&ps) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn likelihood_is_monotone(
            u in proptest::collection::vec(-5.0f64..5.0, 2..6),
            lambda in 0.05f64..5.0,
            bump in 0.01f64..1.0,
        ) {
            let p = choice_likelihood(&u, lambda).unwrap();
            // strictness is only observable before the probability saturates
            prop_assume!(p[0] < 1.0 - 1e-6);
            let mut v = u.clone();
            v[0] += bump;
            let pv = choice_likelihood(&v, lambda).unwrap();
            prop_assert!(pv[0] > p[0]);
        }

        #[test]
        fn predictive_covariance_is_psd(seed in 0u64..1000, n in 1usize..12, q in 2usize..4) {
            let mut rng = rng_from_seed(seed);
            let dom = Domain::unit_cube(2);
            let mut ds = PreferenceDataset::new(q).unwrap();
            for _ in 0..n {
                let pts = (0..q).map(|_| dom.sample(&mut rng)).collect();
                ds.push(Query::new(pts), Response(rng.random_range(0..q))).unwrap();
            }
            let h = Hyperparameters {
                lengthscales: vec![rng.random_range(0.05..1.0), rng.random_range(0.05..1.0)],
                outputscale: rng.random_range(0.1..5.0),
                mean_const: 0.0,
                noise_level: rng.random_range(0.01..1.0),
            };
            let model = fit_laplace(&ds, &h, &dom).unwrap();
            let mut pts: Vec<Vec<f64>> = (0..4).map(|_| dom.sample(&mut rng)).collect();
            pts.extend(ds.distinct_points().iter().take(4).cloned());
            let post = model.posterior_at(&pts).unwrap();
            prop_assert!(min_eigenvalue(&post.covariance) >= -1e-8 * h.outputscale);
            let anchor = model.anchor_covariance();
            prop_assert!(min_eigenvalue(&anchor) >= -1e-8 * h.outputscale);
            for i in 0..anchor.nrows() {
                for j in 0..anchor.ncols() {
                    prop_assert_eq!(anchor[(i, j)], anchor[(j, i)]);
                }
            }
        }
    }
}
