//! Exact Bayesian preference learning over a finite set of alternatives with
//! finitely many candidate utility functions.
//!
//! Every expectation here is a weighted sum over hypotheses, so acquisition
//! values, the one-step value `V_n` and Bayesian regret are computed without
//! Monte Carlo error. This is the reference used to check the optimality and
//! consistency properties of qEUBO and qEI.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::model::choice_likelihood;
use crate::rng::{derive_seed, rng_from_seed, PboRng};

/// Queries are tuples of alternative indices.
pub type FiniteQuery = Vec<usize>;

/// Response model of the decision-maker given the true utilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChoiceModel {
    /// Softmax with temperature λ; λ = 0 is the noise-free argmax.
    Softmax { lambda: f64 },
    /// The best alternative is picked with constant probability `a`, any other
    /// uniformly with the remaining mass. Ties share the best-alternative mass.
    ConstantCorrect { a: f64 },
}

impl ChoiceModel {
    pub fn noise_free() -> Self {
        ChoiceModel::Softmax { lambda: 0.0 }
    }

    pub fn probabilities(&self, utilities: &[f64]) -> Vec<f64> {
        match *self {
            ChoiceModel::Softmax { lambda } => {
                choice_likelihood(utilities, lambda).expect("lambda validated on construction")
            }
            ChoiceModel::ConstantCorrect { a } => {
                let q = utilities.len();
                let max = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let best = utilities.iter().filter(|&&u| u == max).count();
                if best == q {
                    return vec![1.0 / q as f64; q];
                }
                utilities
                    .iter()
                    .map(|&u| {
                        if u == max {
                            a / best as f64
                        } else {
                            (1.0 - a) / (q - best) as f64
                        }
                    })
                    .collect()
            }
        }
    }

    fn check(&self) -> Result<()> {
        match *self {
            ChoiceModel::Softmax { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => {
                Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")))
            }
            ChoiceModel::ConstantCorrect { a } if !(a > 0.0 && a <= 1.0) => {
                Err(Error::InvalidParameter(format!("a must lie in (0, 1], got {a}")))
            }
            _ => Ok(()),
        }
    }
}

/// Posterior over a finite set of utility hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteHypothesisState {
    pub n_alternatives: usize,
    /// `hypotheses[h][x]` = utility of alternative `x` under hypothesis `h`.
    pub hypotheses: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub likelihood: ChoiceModel,
}

impl FiniteHypothesisState {
    pub fn new(hypotheses: Vec<Vec<f64>>, weights: Vec<f64>, likelihood: ChoiceModel) -> Result<Self> {
        likelihood.check()?;
        let Some(first) = hypotheses.first() else {
            return Err(Error::InvalidParameter("no hypotheses".into()));
        };
        let n = first.len();
        if n < 2 {
            return Err(Error::InvalidParameter("need at least 2 alternatives".into()));
        }
        if hypotheses.iter().any(|h| h.len() != n) {
            return Err(Error::InvalidParameter("hypotheses differ in length".into()));
        }
        if weights.len() != hypotheses.len() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParameter("weights must be non-negative, one per hypothesis".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        Ok(Self {
            n_alternatives: n,
            weights: weights.iter().map(|w| w / total).collect(),
            hypotheses,
            likelihood,
        })
    }

    pub fn with_likelihood(&self, likelihood: ChoiceModel) -> Self {
        Self {
            likelihood,
            ..self.clone()
        }
    }

    fn check_query(&self, x: &[usize]) -> Result<()> {
        if x.len() < 2 {
            return Err(Error::QueryTooShort(x.len()));
        }
        if let Some((i, _)) = x.iter().enumerate().find(|(_, &a)| a >= self.n_alternatives) {
            return Err(Error::NotInFiniteSet { point: i });
        }
        Ok(())
    }

    fn utilities(&self, h: usize, x: &[usize]) -> Vec<f64> {
        x.iter().map(|&a| self.hypotheses[h][a]).collect()
    }

    /// `P(r | state, X)` for every response `r`.
    pub fn response_distribution(&self, x: &[usize]) -> Result<Vec<f64>> {
        self.check_query(x)?;
        let mut p = vec![0.0; x.len()];
        for (h, w) in self.weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for (r, l) in self.likelihood.probabilities(&self.utilities(h, x)).iter().enumerate() {
                p[r] += w * l;
            }
        }
        Ok(p)
    }
}

/// Bayes update `w_h ← w_h P(r | h, X)`, renormalized.
pub fn exact_update(state: &FiniteHypothesisState, x: &[usize], r: usize) -> Result<FiniteHypothesisState> {
    state.check_query(x)?;
    if r >= x.len() {
        return Err(Error::ChoiceOutOfRange { choice: r, q: x.len() });
    }
    let mut w: Vec<f64> = state
        .weights
        .iter()
        .enumerate()
        .map(|(h, &wh)| wh * state.likelihood.probabilities(&state.utilities(h, x))[r])
        .collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ImpossibleObservation);
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok(FiniteHypothesisState {
        weights: w,
        ..state.clone()
    })
}

pub fn exact_posterior_mean(state: &FiniteHypothesisState, x: usize) -> f64 {
    state
        .weights
        .iter()
        .zip(&state.hypotheses)
        .map(|(w, h)| w * h[x])
        .sum()
}

pub fn posterior_means(state: &FiniteHypothesisState) -> Vec<f64> {
    (0..state.n_alternatives).map(|x| exact_posterior_mean(state, x)).collect()
}

pub fn max_posterior_mean(state: &FiniteHypothesisState) -> f64 {
    posterior_means(state).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// `Σ_h w_h max_j f_h(x_j)`.
pub fn exact_qeubo(state: &FiniteHypothesisState, x: &[usize]) -> f64 {
    state
        .weights
        .iter()
        .zip(&state.hypotheses)
        .map(|(w, h)| w * x.iter().map(|&a| h[a]).fold(f64::NEG_INFINITY, f64::max))
        .sum()
}

/// `Σ_h w_h (max_j f_h(x_j) - I)⁺`.
pub fn exact_qei(state: &FiniteHypothesisState, x: &[usize], incumbent: f64) -> f64 {
    state
        .weights
        .iter()
        .zip(&state.hypotheses)
        .map(|(w, h)| {
            let best = x.iter().map(|&a| h[a]).fold(f64::NEG_INFINITY, f64::max);
            w * (best - incumbent).max(0.0)
        })
        .sum()
}

/// Expected utility of the alternative the decision-maker actually picks.
pub fn exact_expected_chosen_utility(state: &FiniteHypothesisState, x: &[usize]) -> f64 {
    state
        .weights
        .iter()
        .enumerate()
        .map(|(h, w)| {
            let u = state.utilities(h, x);
            let p = state.likelihood.probabilities(&u);
            w * p.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>()
        })
        .sum()
}

/// One-step value: expected maximum posterior mean after observing the
/// response to `x`.
pub fn exact_v(state: &FiniteHypothesisState, x: &[usize]) -> Result<f64> {
    let dist = state.response_distribution(x)?;
    let mut v = 0.0;
    for (r, pr) in dist.iter().enumerate() {
        if *pr <= 0.0 {
            continue;
        }
        v += pr * max_posterior_mean(&exact_update(state, x, r)?);
    }
    Ok(v)
}

/// All ordered queries of length `q`, lexicographic.
pub fn all_queries(n: usize, q: usize) -> Vec<FiniteQuery> {
    let total = n.pow(q as u32);
    (0..total)
        .map(|mut k| {
            let mut idx = vec![0; q];
            for slot in (0..q).rev() {
                idx[slot] = k % n;
                k /= n;
            }
            idx
        })
        .collect()
}

pub const TIE_TOL: f64 = 1e-9;

/// Indices within `tol` of the maximum.
pub fn argmax_set(values: &[f64], tol: f64) -> Vec<usize> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (0..values.len()).filter(|&i| values[i] >= max - tol).collect()
}

/// Principal branch of the Lambert W function, `w e^w = z`, for `z >= -1/e`.
pub fn lambert_w(z: f64) -> Result<f64> {
    let branch_point = -(-1.0f64).exp();
    if z.is_nan() || z < branch_point - 1e-15 {
        return Err(Error::InvalidParameter(format!("lambert_w needs z >= -1/e, got {z}")));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if z <= branch_point {
        return Ok(-1.0);
    }
    let mut w = if z < -0.25 {
        let p = (2.0 * (std::f64::consts::E * z + 1.0)).sqrt();
        -1.0 + p - p * p / 3.0
    } else if z < 3.0 {
        (1.0 + z).ln() * 0.8
    } else {
        let l = z.ln();
        l - l.ln()
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        // Halley step
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 1e-16 * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

/// `L_W((q-1)/e)`, the approximation-gap constant for `q` alternatives.
pub fn gap_constant(q: usize) -> f64 {
    lambert_w((q as f64 - 1.0) / std::f64::consts::E).expect("argument is non-negative")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub theorem: String,
    pub instance: String,
    pub passed: bool,
    /// Argmax sets, slacks or traces backing the verdict; a failing report
    /// carries a concrete counterexample.
    pub witness: serde_json::Value,
}

/// Noise-free optimality: every qEUBO maximizer maximizes `V_n`.
pub fn verify_theorem1(state: &FiniteHypothesisState, q: usize) -> Result<TheoremReport> {
    let state = state.with_likelihood(ChoiceModel::noise_free());
    let queries = all_queries(state.n_alternatives, q);
    let qeubo: Vec<f64> = queries.iter().map(|x| exact_qeubo(&state, x)).collect();
    let v = queries
        .iter()
        .map(|x| exact_v(&state, x))
        .collect::<Result<Vec<f64>>>()?;
    let a_qeubo = argmax_set(&qeubo, TIE_TOL);
    let a_v = argmax_set(&v, TIE_TOL);
    let missing: Vec<&FiniteQuery> = a_qeubo
        .iter()
        .filter(|i| !a_v.contains(i))
        .map(|&i| &queries[i])
        .collect();
    Ok(TheoremReport {
        theorem: "qeubo-argmax-within-v-argmax".into(),
        instance: format!(
            "{} alternatives, {} hypotheses, q = {q}",
            state.n_alternatives,
            state.hypotheses.len()
        ),
        passed: missing.is_empty(),
        witness: json!({
            "argmax_qeubo": a_qeubo.iter().map(|&i| &queries[i]).collect::<Vec<_>>(),
            "argmax_v": a_v.iter().map(|&i| &queries[i]).collect::<Vec<_>>(),
            "max_qeubo": qeubo[a_qeubo[0]],
            "max_v": v[a_v[0]],
            "counterexamples": missing,
        }),
    })
}

/// Softmax near-optimality: every qEUBO maximizer `X*` satisfies
/// `V^λ(X*) >= max V⁰ - λ L_W((q-1)/e)`.
pub fn verify_theorem2(state: &FiniteHypothesisState, q: usize, lambda: f64) -> Result<TheoremReport> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }
    let noisy = state.with_likelihood(ChoiceModel::Softmax { lambda });
    let clean = state.with_likelihood(ChoiceModel::noise_free());
    let queries = all_queries(state.n_alternatives, q);
    let qeubo: Vec<f64> = queries.iter().map(|x| exact_qeubo(state, x)).collect();
    let v0_max = queries
        .iter()
        .map(|x| exact_v(&clean, x))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let c = gap_constant(q);
    let bound = v0_max - lambda * c;
    let mut worst_slack = f64::INFINITY;
    let mut worst_query = None;
    for i in argmax_set(&qeubo, TIE_TOL) {
        let slack = exact_v(&noisy, &queries[i])? - bound;
        if slack < worst_slack {
            worst_slack = slack;
            worst_query = Some(queries[i].clone());
        }
    }
    Ok(TheoremReport {
        theorem: "softmax-qeubo-gap-bound".into(),
        instance: format!(
            "{} alternatives, {} hypotheses, q = {q}, lambda = {lambda}",
            state.n_alternatives,
            state.hypotheses.len()
        ),
        passed: worst_slack >= -TIE_TOL,
        witness: json!({
            "gap_constant": c,
            "max_v_noise_free": v0_max,
            "bound": bound,
            "worst_slack": worst_slack,
            "worst_query": worst_query,
        }),
    })
}

/// Softmax-weighted average of `s` is at least `max s - λ C`.
pub fn verify_lemma_a1(s: &[f64], lambda: f64) -> Result<TheoremReport> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }
    let p = choice_likelihood(s, lambda)?;
    let lhs: f64 = p.iter().zip(s).map(|(a, b)| a * b).sum();
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let c = gap_constant(s.len());
    let slack = lhs - (max - lambda * c);
    Ok(TheoremReport {
        theorem: "softmax-average-gap".into(),
        instance: format!("q = {}, lambda = {lambda}", s.len()),
        passed: slack >= -TIE_TOL,
        witness: json!({ "s": s, "lhs": lhs, "max": max, "gap_constant": c, "slack": slack }),
    })
}

/// Expected chosen utility under softmax λ is at least `qEUBO - λ C` for
/// every query.
pub fn verify_lemma_a2(state: &FiniteHypothesisState, q: usize, lambda: f64) -> Result<TheoremReport> {
    let noisy = state.with_likelihood(ChoiceModel::Softmax { lambda });
    let c = gap_constant(q);
    let mut worst = (f64::INFINITY, Vec::new());
    for x in all_queries(state.n_alternatives, q) {
        let slack = exact_expected_chosen_utility(&noisy, &x) - (exact_qeubo(state, &x) - lambda * c);
        if slack < worst.0 {
            worst = (slack, x);
        }
    }
    Ok(TheoremReport {
        theorem: "expected-choice-gap".into(),
        instance: format!("{} alternatives, q = {q}, lambda = {lambda}", state.n_alternatives),
        passed: worst.0 >= -TIE_TOL,
        witness: json!({ "worst_slack": worst.0, "worst_query": worst.1, "gap_constant": c }),
    })
}

/// Random instance: `n_alt` alternatives, `n_hyp` hypotheses with i.i.d.
/// uniform(-1, 1) utilities (resampled until each hypothesis has distinct
/// values) and random positive weights.
pub fn random_state<R: Rng + ?Sized>(
    n_alt: usize,
    n_hyp: usize,
    likelihood: ChoiceModel,
    rng: &mut R,
) -> Result<FiniteHypothesisState> {
    let hypotheses = (0..n_hyp)
        .map(|_| loop {
            let h: Vec<f64> = (0..n_alt).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut sorted = h.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).all(|w| w[0] < w[1]) {
                break h;
            }
        })
        .collect();
    let weights = (0..n_hyp).map(|_| rng.random_range(0.05..1.0)).collect();
    FiniteHypothesisState::new(hypotheses, weights, likelihood)
}

/// Acquisition policy for the greedy exact loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinitePolicy {
    Qei,
    Qeubo,
}

/// Greedy exact maximizer over ordered queries of distinct alternatives.
///
/// `queried` are the alternatives seen so far, which define the qEI
/// incumbent. Among values within [`TIE_TOL`] of the best, `previous` is kept
/// if present, otherwise the lowest lexicographic index wins. Repeating an
/// alternative never raises either acquisition value, and the stickiness stops
/// rounding (e.g. `w₁ + ½w₂` vs `w₁ + w₂` once `w₂` underflows relative to
/// `w₁`) from flipping the choice.
pub fn greedy_query(
    state: &FiniteHypothesisState,
    policy: FinitePolicy,
    q: usize,
    queried: &[usize],
    previous: Option<&[usize]>,
) -> FiniteQuery {
    let mut queries = all_queries(state.n_alternatives, q);
    if state.n_alternatives >= q {
        queries.retain(|x| (0..x.len()).all(|i| !x[i + 1..].contains(&x[i])));
    }
    let values: Vec<f64> = match policy {
        FinitePolicy::Qeubo => queries.iter().map(|x| exact_qeubo(state, x)).collect(),
        FinitePolicy::Qei => {
            let inc = queried
                .iter()
                .map(|&x| exact_posterior_mean(state, x))
                .fold(f64::NEG_INFINITY, f64::max);
            queries.iter().map(|x| exact_qei(state, x, inc)).collect()
        }
    };
    let best = argmax_set(&values, TIE_TOL);
    if let Some(prev) = previous {
        if best.iter().any(|&i| queries[i] == prev) {
            return prev.to_vec();
        }
    }
    queries[best[0]].clone()
}

/// Lowest-index maximizer of the posterior mean.
pub fn recommendation(state: &FiniteHypothesisState) -> usize {
    argmax_set(&posterior_means(state), TIE_TOL)[0]
}

/// The four-alternative instance on which qEI is inconsistent.
///
/// Alternatives are 0-based (`0..4` stand for 1..4). Every hypothesis has
/// `f(1) = -1`, `f(2) = 0`; alternatives 3 and 4 take values
/// `(1, ½)`, `(½, 1)`, `(-½, -1)`, `(-1, -½)` with prior weights
/// `(p/2, p/2, (1-p)/2, (1-p)/2)`. Responses are correct with probability `a`.
pub fn theorem4_prior(p: f64, a: f64) -> Result<FiniteHypothesisState> {
    if !(p > 0.0 && p < 1.0 / 3.0) {
        return Err(Error::InvalidParameter(format!("p must lie in (0, 1/3), got {p}")));
    }
    if !(a > 0.5 && a < 1.0) {
        return Err(Error::InvalidParameter(format!("a must lie in (1/2, 1), got {a}")));
    }
    let hyps = vec![
        vec![-1.0, 0.0, 1.0, 0.5],
        vec![-1.0, 0.0, 0.5, 1.0],
        vec![-1.0, 0.0, -0.5, -1.0],
        vec![-1.0, 0.0, -1.0, -0.5],
    ];
    let rest = 1.0 - p;
    FiniteHypothesisState::new(
        hyps,
        vec![p / 2.0, p / 2.0, rest / 2.0, rest / 2.0],
        ChoiceModel::ConstantCorrect { a },
    )
}

/// Result of [`run_theorem4_instance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem4Trace {
    pub policy: FinitePolicy,
    pub runs: usize,
    /// Bayesian simple regret after `n` queries, `n = 0..=n_steps`.
    pub regret: Vec<f64>,
    /// Whether every run posed the same query at step `n` (and which).
    pub common_queries: Vec<Option<FiniteQuery>>,
    /// Whether every run recommended the same alternative at step `n`.
    pub common_recommendations: Vec<Option<usize>>,
    /// The initial observation left the prior unchanged.
    pub initial_observation_uninformative: bool,
}

/// Runs the greedy policy on the four-alternative instance.
///
/// Each run draws a true hypothesis from the prior and simulates responses;
/// posteriors are exact. The regret at step `n` averages the exact posterior
/// expected regret `E_n[max f - f(x̂_n)]` over runs, which is unbiased for
/// `E[f(x*) - f(x̂_n)]`. For qEI on this instance it is `w₁ + w₂ = p` on every
/// path.
pub fn run_theorem4_instance<R: Rng + ?Sized>(
    p: f64,
    a: f64,
    n_steps: usize,
    policy: FinitePolicy,
    runs: usize,
    rng: &mut R,
) -> Result<Theorem4Trace> {
    let prior = theorem4_prior(p, a)?;
    // D⁽⁰⁾: query (1, 2) answered with alternative 2.
    let start = exact_update(&prior, &[0, 1], 1)?;
    let uninformative = start
        .weights
        .iter()
        .zip(&prior.weights)
        .all(|(x, y)| (x - y).abs() <= 1e-15);
    let runs = runs.max(1);
    let mut sum_regret = vec![0.0; n_steps + 1];
    let mut common_q: Vec<Option<FiniteQuery>> = vec![None; n_steps];
    let mut q_consistent = vec![true; n_steps];
    let mut common_r: Vec<Option<usize>> = vec![None; n_steps + 1];
    let mut r_consistent = vec![true; n_steps + 1];

    for run in 0..runs {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut truth = prior.hypotheses.len() - 1;
        for (h, w) in prior.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                truth = h;
                break;
            }
        }
        let mut state = start.clone();
        let mut queried = vec![0usize, 1];
        let mut last: Option<FiniteQuery> = None;
        for n in 0..=n_steps {
            let rec = recommendation(&state);
            sum_regret[n] += state
                .weights
                .iter()
                .zip(&state.hypotheses)
                .map(|(w, h)| w * (h.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - h[rec]))
                .sum::<f64>();
            if run == 0 {
                common_r[n] = Some(rec);
            } else if common_r[n] != Some(rec) {
                r_consistent[n] = false;
            }
            if n == n_steps {
                break;
            }
            let x = greedy_query(&state, policy, 2, &queried, last.as_deref());
            last = Some(x.clone());
            if run == 0 {
                common_q[n] = Some(x.clone());
            } else if common_q[n].as_ref() != Some(&x) {
                q_consistent[n] = false;
            }
            for &v in &x {
                if !queried.contains(&v) {
                    queried.push(v);
                }
            }
            let probs = state
                .likelihood
                .probabilities(&x.iter().map(|&v| state.hypotheses[truth][v]).collect::<Vec<_>>());
            let draw: f64 = rng.random();
            let mut acc = 0.0;
            let mut r = probs.len() - 1;
            for (i, pr) in probs.iter().enumerate() {
                acc += pr;
                if draw < acc {
                    r = i;
                    break;
                }
            }
            state = exact_update(&state, &x, r)?;
        }
    }
    let regret = sum_regret.iter().map(|s| s / runs as f64).collect();
    Ok(Theorem4Trace {
        policy,
        runs,
        regret,
        common_queries: common_q
            .into_iter()
            .zip(q_consistent)
            .map(|(q, ok)| if ok { q } else { None })
            .collect(),
        common_recommendations: common_r
            .into_iter()
            .zip(r_consistent)
            .map(|(r, ok)| if ok { r } else { None })
            .collect(),
        initial_observation_uninformative: uninformative,
    })
}

/// Outcome of a batch of checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub trials: usize,
    pub passed: usize,
    pub seconds: f64,
    pub reports: Vec<TheoremReport>,
}

impl SuiteReport {
    fn collect(suite: &str, seed: u64, start: Instant, reports: Vec<TheoremReport>) -> Self {
        SuiteReport {
            suite: suite.into(),
            seed,
            trials: reports.len(),
            passed: reports.iter().filter(|r| r.passed).count(),
            seconds: start.elapsed().as_secs_f64(),
            reports,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.passed == self.trials
    }

    pub fn failures(&self) -> impl Iterator<Item = &TheoremReport> {
        self.reports.iter().filter(|r| !r.passed)
    }
}

const FUZZ_LAMBDAS: [f64; 3] = [0.05, 0.2, 1.0];

fn trial_rng(seed: u64, suite: u64, trial: usize) -> PboRng {
    rng_from_seed(derive_seed(seed, &[suite, trial as u64]))
}

/// 3 to 5 alternatives, 2 to 5 hypotheses, q in {2, 3}.
fn fuzz_state(rng: &mut PboRng, likelihood: ChoiceModel) -> Result<(FiniteHypothesisState, usize)> {
    let n_alt = rng.random_range(3..=5);
    let n_hyp = rng.random_range(2..=5);
    let q = rng.random_range(2..=3);
    Ok((random_state(n_alt, n_hyp, likelihood, rng)?, q))
}

/// `trials` random noise-free instances through [`verify_theorem1`].
pub fn theorem1_suite(seed: u64, trials: usize) -> Result<SuiteReport> {
    let start = Instant::now();
    let reports = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, 1, i);
            let (state, q) = fuzz_state(&mut rng, ChoiceModel::noise_free())?;
            verify_theorem1(&state, q)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport::collect("theorem1", seed, start, reports))
}

/// `trials` random instances through [`verify_theorem2`], cycling λ over
/// 0.05, 0.2 and 1.
pub fn theorem2_suite(seed: u64, trials: usize) -> Result<SuiteReport> {
    let start = Instant::now();
    let reports = (0..trials)
        .into_par_iter()
        .map(|i| {
            let lambda = FUZZ_LAMBDAS[i % FUZZ_LAMBDAS.len()];
            let mut rng = trial_rng(seed, 2, i);
            let (state, q) = fuzz_state(&mut rng, ChoiceModel::Softmax { lambda })?;
            verify_theorem2(&state, q, lambda)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport::collect("theorem2", seed, start, reports))
}

/// `vector_trials` random `(s, λ, q)` draws through [`verify_lemma_a1`] and
/// `state_trials` random states through [`verify_lemma_a2`].
///
/// `s` has 2 to 6 entries, uniform on `(-3, 3)`, and λ is log-uniform on
/// `(1e-3, 10)`.
pub fn lemma_suite(seed: u64, vector_trials: usize, state_trials: usize) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut reports = (0..vector_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, 3, i);
            let q = rng.random_range(2..=6);
            let s: Vec<f64> = (0..q).map(|_| rng.random_range(-3.0..3.0)).collect();
            let lambda = 10f64.powf(rng.random_range(-3.0..1.0));
            verify_lemma_a1(&s, lambda)
        })
        .collect::<Result<Vec<_>>>()?;
    reports.extend(
        (0..state_trials)
            .into_par_iter()
            .map(|i| {
                let lambda = FUZZ_LAMBDAS[i % FUZZ_LAMBDAS.len()];
                let mut rng = trial_rng(seed, 4, i);
                let (state, q) = fuzz_state(&mut rng, ChoiceModel::Softmax { lambda })?;
                verify_lemma_a2(&state, q, lambda)
            })
            .collect::<Result<Vec<_>>>()?,
    );
    Ok(SuiteReport::collect("lemmas", seed, start, reports))
}

/// Checks on the four-alternative instance with `p = 0.2`, `a = 0.75`.
pub const THEOREM4_P: f64 = 0.2;
pub const THEOREM4_A: f64 = 0.75;
/// qEUBO's averaged regret must be below this by [`THEOREM4_QEUBO_STEP`].
pub const THEOREM4_QEUBO_BOUND: f64 = 0.02;
pub const THEOREM4_QEUBO_STEP: usize = 60;

/// Runs both policies for `n_steps` steps and `runs` runs each.
///
/// The qEI report passes when its regret equals `p` within 1e-12 at every
/// step, every query is alternatives 3 and 4, and the recommendation is
/// always alternative 2. The qEUBO report passes when its regret at step
/// [`THEOREM4_QEUBO_STEP`] is below [`THEOREM4_QEUBO_BOUND`].
pub fn theorem4_suite(seed: u64, runs: usize, n_steps: usize) -> Result<SuiteReport> {
    let start = Instant::now();
    let (p, a) = (THEOREM4_P, THEOREM4_A);
    let qei = run_theorem4_instance(p, a, n_steps, FinitePolicy::Qei, runs, &mut trial_rng(seed, 5, 0))?;
    let max_dev = qei.regret.iter().map(|r| (r - p).abs()).fold(0.0, f64::max);
    let queries_ok = qei.common_queries.iter().all(|x| x.as_deref() == Some(&[2, 3][..]));
    let recs_ok = qei.common_recommendations.iter().all(|r| *r == Some(1));
    let instance = format!("p = {p}, a = {a}, {n_steps} steps, {} runs", qei.runs);
    let mut reports = vec![TheoremReport {
        theorem: "qei-stalls".into(),
        instance: instance.clone(),
        passed: max_dev <= 1e-12 && queries_ok && recs_ok && qei.initial_observation_uninformative,
        witness: json!({
            "max_regret_deviation": max_dev,
            "queries_constant": queries_ok,
            "recommendation_constant": recs_ok,
            "initial_observation_uninformative": qei.initial_observation_uninformative,
            "regret": qei.regret,
        }),
    }];
    let qeubo = run_theorem4_instance(p, a, n_steps, FinitePolicy::Qeubo, runs, &mut trial_rng(seed, 5, 1))?;
    let at = qeubo.regret.get(THEOREM4_QEUBO_STEP).copied();
    reports.push(TheoremReport {
        theorem: "qeubo-consistent".into(),
        instance,
        passed: at.is_some_and(|r| r < THEOREM4_QEUBO_BOUND),
        witness: json!({
            "step": THEOREM4_QEUBO_STEP,
            "regret_at_step": at,
            "bound": THEOREM4_QEUBO_BOUND,
            "regret": qeubo.regret,
        }),
    });
    Ok(SuiteReport::collect("theorem4", seed, start, reports))
}
