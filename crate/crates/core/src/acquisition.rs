//! Acquisition functions and the query optimizer.
//!
//! qEUBO and qEI are estimated by sample average approximation: one matrix of
//! standard-normal base samples is drawn per optimization call and reused for
//! every evaluation, which turns the Monte Carlo estimate into a deterministic,
//! almost-everywhere differentiable function of the query.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Point, PreferenceDataset, Query};
use crate::error::{Error, Result};
use crate::linalg::{argmax, cholesky_jitter, norm_cdf, norm_pdf, norm_ppf};
use crate::model::{GaussianPosterior, PosteriorModel};
use crate::optim::{projected_ascent, AscentOptions};

/// Finite domains are enumerated exhaustively up to this many ordered queries.
pub const MAX_ENUMERATION: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AcquisitionKind {
    #[serde(rename = "qeubo")]
    Qeubo,
    #[serde(rename = "qei")]
    Qei,
    #[serde(rename = "qts", alias = "thompson")]
    Thompson,
    #[serde(rename = "random")]
    Random,
}

impl AcquisitionKind {
    pub fn name(&self) -> &'static str {
        match self {
            AcquisitionKind::Qeubo => "qeubo",
            AcquisitionKind::Qei => "qei",
            AcquisitionKind::Thompson => "qts",
            AcquisitionKind::Random => "random",
        }
    }
}

impl std::fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qeubo" => Ok(AcquisitionKind::Qeubo),
            "qei" => Ok(AcquisitionKind::Qei),
            "qts" | "thompson" | "ts" => Ok(AcquisitionKind::Thompson),
            "random" => Ok(AcquisitionKind::Random),
            other => Err(Error::UnknownName(format!("acquisition '{other}'"))),
        }
    }
}

fn default_mc() -> usize {
    128
}
fn default_restarts() -> usize {
    16
}
fn default_raw() -> usize {
    512
}
fn default_iters() -> usize {
    100
}
fn default_features() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionSpec {
    #[serde(rename = "algo", alias = "kind")]
    pub kind: AcquisitionKind,
    pub q: usize,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_raw")]
    pub raw_candidates: usize,
    /// Iteration limit of each local ascent.
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    /// Random Fourier features per Thompson sample path.
    #[serde(default = "default_features")]
    pub rff_features: usize,
}

impl AcquisitionSpec {
    pub fn new(kind: AcquisitionKind, q: usize) -> Self {
        Self {
            kind,
            q,
            mc_samples: default_mc(),
            restarts: default_restarts(),
            raw_candidates: default_raw(),
            max_iters: default_iters(),
            rff_features: default_features(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::QueryTooShort(self.q));
        }
        if self.mc_samples == 0 || self.restarts == 0 || self.raw_candidates == 0 || self.rff_features == 0 {
            return Err(Error::InvalidParameter(
                "mc_samples, restarts, raw_candidates and rff_features must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// `N × q` standard-normal draws held fixed during one maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseSampleSet {
    samples: DMatrix<f64>,
}

impl BaseSampleSet {
    /// Randomized quasi-Monte Carlo draws: a randomly shifted Halton sequence
    /// mapped through the normal quantile. Falls back to [`Self::draw_iid`]
    /// beyond 24 columns.
    pub fn draw<R: Rng + ?Sized>(n: usize, q: usize, rng: &mut R) -> Self {
        if q > PRIMES.len() {
            return Self::draw_iid(n, q, rng);
        }
        let shift: Vec<f64> = (0..q).map(|_| rng.random()).collect();
        let samples = DMatrix::from_fn(n, q, |s, i| {
            let u = (radical_inverse(s as u64 + 1, PRIMES[i]) + shift[i]).fract();
            norm_ppf(u.clamp(1e-16, 1.0 - 1e-16))
        });
        Self { samples }
    }

    pub fn draw_iid<R: Rng + ?Sized>(n: usize, q: usize, rng: &mut R) -> Self {
        let mut samples = DMatrix::zeros(n, q);
        for s in 0..n {
            for i in 0..q {
                samples[(s, i)] = StandardNormal.sample(rng);
            }
        }
        Self { samples }
    }

    pub fn from_matrix(samples: DMatrix<f64>) -> Self {
        Self { samples }
    }

    pub fn n(&self) -> usize {
        self.samples.nrows()
    }

    pub fn q(&self) -> usize {
        self.samples.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.samples
    }

    /// Base set whose column `i` is column `perm[i]` of this one.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut m = DMatrix::zeros(self.n(), self.q());
        for (i, &p) in perm.iter().enumerate() {
            m.set_column(i, &self.samples.column(p));
        }
        Self { samples: m }
    }
}

/// The two SAA objectives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SaaObjective {
    /// `E[max_i f(x_i)]`.
    Qeubo,
    /// `E[(max_i f(x_i) - I)⁺]` for incumbent value `I`.
    Qei(f64),
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaaEstimate {
    pub value: f64,
    pub std_error: f64,
}

fn check_base(x: &Query, base: &BaseSampleSet) -> Result<()> {
    if x.q() < 2 {
        return Err(Error::QueryTooShort(x.q()));
    }
    if base.q() != x.q() {
        return Err(Error::Dimension {
            expected: x.q(),
            got: base.q(),
        });
    }
    if base.n() == 0 {
        return Err(Error::InvalidParameter("empty base sample set".into()));
    }
    Ok(())
}

/// SAA estimate of an objective given the Gaussian posterior at the query.
pub fn saa_from_posterior(
    post: &GaussianPosterior,
    objective: SaaObjective,
    base: &BaseSampleSet,
) -> Result<SaaEstimate> {
    let (chol, _) = cholesky_jitter(&post.covariance)?;
    let l = chol.l();
    let q = post.mean.len();
    let n = base.n();
    let eps = base.matrix();
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut y = vec![0.0; q];
    for s in 0..n {
        for i in 0..q {
            let mut v = post.mean[i];
            for j in 0..=i {
                v += l[(i, j)] * eps[(s, j)];
            }
            y[i] = v;
        }
        let best = y[argmax(&y)];
        let z = match objective {
            SaaObjective::Qeubo => best,
            SaaObjective::Qei(inc) => (best - inc).max(0.0),
        };
        sum += z;
        sum2 += z * z;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sum2 - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(SaaEstimate {
        value: mean,
        std_error: (var / nf).sqrt(),
    })
}

pub fn qeubo_estimate(model: &PosteriorModel, x: &Query, base: &BaseSampleSet) -> Result<SaaEstimate> {
    check_base(x, base)?;
    let post = model.posterior_at(&x.points)?;
    saa_from_posterior(&post, SaaObjective::Qeubo, base)
}

/// SAA estimate of `E[max{f(x_1), …, f(x_q)}]`.
pub fn qeubo_value(model: &PosteriorModel, x: &Query, base: &BaseSampleSet) -> Result<f64> {
    Ok(qeubo_estimate(model, x, base)?.value)
}

pub fn qei_estimate(
    model: &PosteriorModel,
    x: &Query,
    incumbent: f64,
    base: &BaseSampleSet,
) -> Result<SaaEstimate> {
    check_base(x, base)?;
    let post = model.posterior_at(&x.points)?;
    saa_from_posterior(&post, SaaObjective::Qei(incumbent), base)
}

/// SAA estimate of `E[(max_i f(x_i) - I)⁺]`.
pub fn qei_value(model: &PosteriorModel, x: &Query, incumbent: f64, base: &BaseSampleSet) -> Result<f64> {
    Ok(qei_estimate(model, x, incumbent, base)?.value)
}

/// Closed-form `E[max(Y₀, Y₁)]` for a bivariate Gaussian.
pub fn eubo_closed_form_q2(mean: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    if mean.len() != 2 || cov.nrows() != 2 || cov.ncols() != 2 {
        return Err(Error::Dimension {
            expected: 2,
            got: mean.len(),
        });
    }
    let (a, b, c) = (cov[(0, 0)], cov[(1, 1)], cov[(0, 1)]);
    let tol = 1e-12 * (1.0 + a.abs() + b.abs());
    if a < -tol || b < -tol || (cov[(1, 0)] - c).abs() > tol || c * c > a.max(0.0) * b.max(0.0) + tol {
        return Err(Error::InvalidParameter("covariance is not symmetric PSD".into()));
    }
    let s = (a + b - 2.0 * c).max(0.0).sqrt();
    if s <= 1e-12 {
        return Ok(mean[0].max(mean[1]));
    }
    let delta = mean[0] - mean[1];
    let z = delta / s;
    Ok(mean[0] * norm_cdf(z) + mean[1] * norm_cdf(-z) + s * norm_pdf(z))
}

/// Distinct dataset point with the largest posterior mean, and that mean.
pub fn incumbent(model: &PosteriorModel, ds: &PreferenceDataset) -> Result<(Point, f64)> {
    let pts = ds.distinct_points();
    if pts.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let means = pts
        .iter()
        .map(|p| model.mean_at(p))
        .collect::<Result<Vec<_>>>()?;
    let i = argmax(&means);
    Ok((pts[i].clone(), means[i]))
}

/// `I_n`: maximum posterior mean over the points queried so far.
pub fn incumbent_value(model: &PosteriorModel, ds: &PreferenceDataset) -> Result<f64> {
    Ok(incumbent(model, ds)?.1)
}

/// SAA value and gradient with respect to every query coordinate.
pub fn saa_value_and_grad(
    model: &PosteriorModel,
    x: &Query,
    objective: SaaObjective,
    base: &BaseSampleSet,
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_base(x, base)?;
    let pg = model.posterior_with_grad(&x.points)?;
    let q = x.q();
    let d = x.points[0].len();
    let (chol, _) = cholesky_jitter(&pg.posterior.covariance)?;
    let l = chol.l();
    let mean = &pg.posterior.mean;
    let eps = base.matrix();
    let n = base.n();

    // Per winning coordinate: how often it wins and the summed base draws.
    let mut wins = vec![0usize; q];
    let mut eps_sum = vec![DVector::<f64>::zeros(q); q];
    let mut total = 0.0;
    let mut y = vec![0.0; q];
    for s in 0..n {
        for i in 0..q {
            let mut v = mean[i];
            for j in 0..=i {
                v += l[(i, j)] * eps[(s, j)];
            }
            y[i] = v;
        }
        let w = argmax(&y);
        let contributes = match objective {
            SaaObjective::Qeubo => {
                total += y[w];
                true
            }
            SaaObjective::Qei(inc) => {
                let imp = y[w] - inc;
                if imp > 0.0 {
                    total += imp;
                    true
                } else {
                    false
                }
            }
        };
        if contributes {
            wins[w] += 1;
            for j in 0..q {
                eps_sum[w][j] += eps[(s, j)];
            }
        }
    }
    let nf = n as f64;

    let linv = l
        .clone()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite { jitter: 0.0 })?;
    let mut grad = vec![vec![0.0; d]; q];
    let mut dsigma = DMatrix::zeros(q, q);
    for p in 0..q {
        for j in 0..d {
            dsigma.fill(0.0);
            for i in 0..q {
                let v = pg.dcov[p][j][i];
                dsigma[(i, p)] = v;
                dsigma[(p, i)] = v;
            }
            // dL = L Φ(L⁻¹ dΣ L⁻ᵀ), Φ = lower triangle with halved diagonal.
            let mut phi = &linv * &dsigma * linv.transpose();
            for r in 0..q {
                phi[(r, r)] *= 0.5;
                for c in (r + 1)..q {
                    phi[(r, c)] = 0.0;
                }
            }
            let dl = &l * phi;
            let mut g = wins[p] as f64 * pg.dmean[p][j];
            for i in 0..q {
                if wins[i] > 0 {
                    g += dl.row(i).dot(&eps_sum[i].transpose());
                }
            }
            grad[p][j] = g / nf;
        }
    }
    Ok((total / nf, grad))
}

/// `q` uniform draws from the domain.
pub fn random_query<R: Rng + ?Sized>(domain: &Domain, q: usize, rng: &mut R) -> Query {
    Query::new((0..q).map(|_| domain.sample(rng)).collect())
}

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base as u64) as f64 * inv;
        i /= base as u64;
        inv /= b;
    }
    r
}

/// Randomly shifted Halton points in the domain (uniform draws beyond 24
/// dimensions or for finite domains).
pub fn quasi_random_points<R: Rng + ?Sized>(domain: &Domain, n: usize, rng: &mut R) -> Vec<Point> {
    match domain {
        Domain::Box { lower, upper } if lower.len() <= PRIMES.len() => {
            let shift: Vec<f64> = (0..lower.len()).map(|_| rng.random::<f64>()).collect();
            (1..=n as u64)
                .map(|i| {
                    (0..lower.len())
                        .map(|j| {
                            let u = (radical_inverse(i, PRIMES[j]) + shift[j]).fract();
                            lower[j] + (upper[j] - lower[j]) * u
                        })
                        .collect()
                })
                .collect()
        }
        _ => (0..n).map(|_| domain.sample(rng)).collect(),
    }
}

/// Batch Thompson sampling: each point maximizes an independent approximate
/// posterior sample path over `candidates`.
///
/// Paths are random-Fourier-feature prior draws updated pathwise (Matheron's
/// rule) onto a joint draw from the Laplace posterior at the anchors.
pub fn thompson_query<R: Rng + ?Sized>(
    model: &PosteriorModel,
    q: usize,
    candidates: &[Point],
    features: usize,
    rng: &mut R,
) -> Result<Query> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("empty candidate set".into()));
    }
    if q < 2 {
        return Err(Error::QueryTooShort(q));
    }
    let hyper = model.hyper();
    let norm = model.normalizer();
    let d = norm.dim();
    let cand_u: Vec<Vec<f64>> = candidates
        .iter()
        .map(|c| {
            if c.len() != d {
                Err(Error::Dimension {
                    expected: d,
                    got: c.len(),
                })
            } else {
                Ok(norm.to_unit(c))
            }
        })
        .collect::<Result<_>>()?;
    let anchors = model.anchors_unit();
    let m = anchors.len();

    // Shared factorizations for the pathwise update.
    let update = if m > 0 {
        let (kchol, _) = cholesky_jitter(&model.anchor_prior_covariance())?;
        let (schol, _) = cholesky_jitter(&model.anchor_covariance())?;
        let mut cross = DMatrix::zeros(cand_u.len(), m);
        for (i, c) in cand_u.iter().enumerate() {
            for (j, a) in anchors.iter().enumerate() {
                cross[(i, j)] = crate::model::rbf_kernel(c, a, hyper)?;
            }
        }
        Some((kchol, schol.l(), cross))
    } else {
        None
    };

    let scale = (2.0 * hyper.outputscale / features as f64).sqrt();
    let mut points = Vec::with_capacity(q);
    for _ in 0..q {
        let omega: Vec<Vec<f64>> = (0..features)
            .map(|_| {
                (0..d)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(rng);
                        z / hyper.lengthscales[j]
                    })
                    .collect()
            })
            .collect();
        let phase: Vec<f64> = (0..features)
            .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
            .collect();
        let weights: Vec<f64> = (0..features).map(|_| StandardNormal.sample(rng)).collect();
        let prior_path = |u: &[f64]| -> f64 {
            let mut s = 0.0;
            for k in 0..features {
                let mut arg = phase[k];
                for j in 0..d {
                    arg += omega[k][j] * u[j];
                }
                s += weights[k] * arg.cos();
            }
            hyper.mean_const + scale * s
        };
        let mut values: Vec<f64> = cand_u.iter().map(|u| prior_path(u)).collect();
        if let Some((kchol, sl, cross)) = &update {
            let z = DVector::from_iterator(m, (0..m).map(|_| StandardNormal.sample(rng)));
            let f_anchor = model.mode() + sl * z;
            let prior_anchor = DVector::from_iterator(m, anchors.iter().map(|a| prior_path(a)));
            let v = kchol.solve(&(f_anchor - prior_anchor));
            let delta = cross * v;
            for (val, dv) in values.iter_mut().zip(delta.iter()) {
                *val += dv;
            }
        }
        points.push(candidates[argmax(&values)].clone());
    }
    Ok(Query::new(points))
}

/// Details of one acquisition maximization.
#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub query: Query,
    /// SAA value of `query`.
    pub value: f64,
    /// Best SAA value among the scored starting queries.
    pub best_raw_value: f64,
    pub base: BaseSampleSet,
    pub objective: SaaObjective,
}

fn objective_for(
    spec: &AcquisitionSpec,
    model: &PosteriorModel,
    ds: &PreferenceDataset,
) -> Result<SaaObjective> {
    match spec.kind {
        AcquisitionKind::Qeubo => Ok(SaaObjective::Qeubo),
        AcquisitionKind::Qei => {
            if ds.is_empty() {
                // No incumbent yet; the positive part is inactive for I → -∞
                // and qEI ranks queries exactly like qEUBO.
                Ok(SaaObjective::Qeubo)
            } else {
                Ok(SaaObjective::Qei(incumbent_value(model, ds)?))
            }
        }
        other => Err(Error::InvalidParameter(format!(
            "{other} is not optimized by sample average approximation"
        ))),
    }
}

/// Maximizes qEUBO or qEI by SAA.
///
/// Continuous boxes: `raw_candidates` uniform joint queries plus two seeded
/// queries (the incumbent repeated `q` times and the raw point with the
/// largest posterior mean repeated `q` times) are scored; the best
/// `restarts` of them, always including the incumbent seed, are refined by
/// projected gradient ascent. Finite domains are enumerated exhaustively when
/// there are at most [`MAX_ENUMERATION`] ordered queries.
pub fn optimize_acquisition<R: Rng + ?Sized>(
    model: &PosteriorModel,
    spec: &AcquisitionSpec,
    ds: &PreferenceDataset,
    rng: &mut R,
) -> Result<OptimizeReport> {
    spec.check()?;
    let objective = objective_for(spec, model, ds)?;
    let base = BaseSampleSet::draw(spec.mc_samples, spec.q, rng);
    match model.domain() {
        Domain::Finite { points } => optimize_finite(model, spec, points, objective, base, rng),
        Domain::Box { .. } => optimize_box(model, spec, ds, objective, base, rng),
    }
}

fn optimize_finite<R: Rng + ?Sized>(
    model: &PosteriorModel,
    spec: &AcquisitionSpec,
    points: &[Point],
    objective: SaaObjective,
    base: BaseSampleSet,
    rng: &mut R,
) -> Result<OptimizeReport> {
    let n = points.len();
    let q = spec.q;
    let total = (n as f64).powi(q as i32);
    let joint = if n <= 2000 {
        Some(model.posterior_at(points)?)
    } else {
        None
    };
    let evaluate = |idx: &[usize]| -> Result<f64> {
        let post = match &joint {
            Some(j) => GaussianPosterior {
                mean: DVector::from_iterator(q, idx.iter().map(|&i| j.mean[i])),
                covariance: DMatrix::from_fn(q, q, |r, c| j.covariance[(idx[r], idx[c])]),
            },
            None => model.posterior_at(&idx.iter().map(|&i| points[i].clone()).collect::<Vec<_>>())?,
        };
        Ok(saa_from_posterior(&post, objective, &base)?.value)
    };
    let candidates: Vec<Vec<usize>> = if total <= MAX_ENUMERATION as f64 {
        let mut all = Vec::with_capacity(total as usize);
        let mut idx = vec![0usize; q];
        loop {
            all.push(idx.clone());
            let mut k = q;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
            }
            if idx.iter().all(|&v| v == 0) {
                break;
            }
        }
        all
    } else {
        let count = spec.raw_candidates.max(4096);
        (0..count)
            .map(|_| (0..q).map(|_| rng.random_range(0..n)).collect())
            .collect()
    };
    let values = candidates
        .par_iter()
        .map(|c| evaluate(c))
        .collect::<Result<Vec<f64>>>()?;
    let best = argmax(&values);
    Ok(OptimizeReport {
        query: Query::new(candidates[best].iter().map(|&i| points[i].clone()).collect()),
        value: values[best],
        best_raw_value: values[best],
        base,
        objective,
    })
}

fn optimize_box<R: Rng + ?Sized>(
    model: &PosteriorModel,
    spec: &AcquisitionSpec,
    ds: &PreferenceDataset,
    objective: SaaObjective,
    base: BaseSampleSet,
    rng: &mut R,
) -> Result<OptimizeReport> {
    let domain = model.domain();
    let q = spec.q;
    let d = domain.dim();
    let norm = model.normalizer();

    let mut starts: Vec<Query> = (0..spec.raw_candidates)
        .map(|_| random_query(domain, q, rng))
        .collect();
    // Seed: the raw point with the best posterior mean, replicated.
    let mut best_point: Option<(f64, &Point)> = None;
    for s in &starts {
        for p in &s.points {
            let m = model.mean_at(p)?;
            if best_point.is_none_or(|(bm, _)| m > bm) {
                best_point = Some((m, p));
            }
        }
    }
    let mean_seed = best_point.map(|(_, p)| Query::new(vec![p.clone(); q]));
    let incumbent_seed = if ds.is_empty() {
        None
    } else {
        let (p, _) = incumbent(model, ds)?;
        Some(Query::new(vec![p; q]))
    };
    let incumbent_idx = incumbent_seed.as_ref().map(|_| starts.len());
    starts.extend(incumbent_seed);
    starts.extend(mean_seed);

    let raw_values = starts
        .par_iter()
        .map(|s| {
            let post = model.posterior_at(&s.points)?;
            Ok(saa_from_posterior(&post, objective, &base)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let best_raw_value = raw_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut order: Vec<usize> = (0..starts.len()).collect();
    order.sort_by(|&a, &b| raw_values[b].total_cmp(&raw_values[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = order.into_iter().take(spec.restarts).collect();
    if let Some(ii) = incumbent_idx {
        if !chosen.contains(&ii) {
            let last = chosen.len() - 1;
            chosen[last] = ii;
        }
    }

    let lo = vec![0.0; q * d];
    let hi = vec![1.0; q * d];
    let to_query = |u: &[f64]| -> Query {
        let mut pts: Vec<Point> = u.chunks(d).map(|c| norm.from_unit(c)).collect();
        for p in pts.iter_mut() {
            domain.clamp(p);
        }
        Query::new(pts)
    };
    let opts = AscentOptions {
        max_iters: spec.max_iters,
        initial_step: 0.05,
        x_tol: 1e-7,
        f_tol: 1e-10,
        max_halvings: 20,
    };
    let refined: Vec<(Query, f64)> = chosen
        .par_iter()
        .map(|&si| {
            let u0: Vec<f64> = starts[si].points.iter().flat_map(|p| norm.to_unit(p)).collect();
            let result = projected_ascent(
                u0,
                &lo,
                &hi,
                |u| {
                    let x = to_query(u);
                    let (v, g) = saa_value_and_grad(model, &x, objective, &base).ok()?;
                    let gu = g
                        .iter()
                        .flat_map(|gp| gp.iter().enumerate().map(|(j, v)| v * norm.width[j]))
                        .collect();
                    Some((v, gu))
                },
                &opts,
            );
            match result {
                Some((u, _)) => {
                    let x = to_query(&u);
                    let post = model.posterior_at(&x.points).ok();
                    let v = post
                        .and_then(|p| saa_from_posterior(&p, objective, &base).ok())
                        .map(|e| e.value)
                        .unwrap_or(f64::NEG_INFINITY);
                    if v >= raw_values[si] {
                        (x, v)
                    } else {
                        (starts[si].clone(), raw_values[si])
                    }
                }
                None => (starts[si].clone(), raw_values[si]),
            }
        })
        .collect();

    let mut best = 0;
    for i in 1..refined.len() {
        if refined[i].1 > refined[best].1 {
            best = i;
        }
    }
    let (query, value) = refined.into_iter().nth(best).expect("at least one restart");
    Ok(OptimizeReport {
        query,
        value,
        best_raw_value,
        base,
        objective,
    })
}

/// Next query for any acquisition kind.
pub fn next_query<R: Rng + ?Sized>(
    model: &PosteriorModel,
    spec: &AcquisitionSpec,
    ds: &PreferenceDataset,
    rng: &mut R,
) -> Result<Query> {
    spec.check()?;
    match spec.kind {
        AcquisitionKind::Qeubo | AcquisitionKind::Qei => {
            Ok(optimize_acquisition(model, spec, ds, rng)?.query)
        }
        AcquisitionKind::Random => Ok(random_query(model.domain(), spec.q, rng)),
        AcquisitionKind::Thompson => {
            let mut cands = match model.domain() {
                Domain::Finite { points } => points.clone(),
                dom => quasi_random_points(dom, spec.raw_candidates, rng),
            };
            if !model.domain().is_finite() {
                cands.extend(ds.distinct_points().iter().cloned());
            }
            thompson_query(model, spec.q, &cands, spec.rff_features, rng)
        }
    }
}
