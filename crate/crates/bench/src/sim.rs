//! Synthetic test problems, simulated decision-makers and noise calibration.
//!
//! All problems are posed as maximization: standard minimization benchmarks
//! are negated.

use pbo_core::rng::PboRng;
use pbo_core::{Domain, Point, PreferenceDataset, Query, Response};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{BenchError, Result};

const ACKLEY_A: f64 = 20.0;
const ACKLEY_B: f64 = 0.2;
const ACKLEY_C: f64 = 2.0 * std::f64::consts::PI;

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];
pub const HARTMANN6_ARGMAX: [f64; 6] = [
    0.201_689_52,
    0.150_010_69,
    0.476_873_98,
    0.275_332_43,
    0.311_651_62,
    0.657_300_54,
];

/// Built-in utility families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilityKind {
    /// Negated Ackley.
    Ackley,
    /// Negated Alpine1, `-Σ |x sin x + 0.1 x|`.
    Alpine1,
    /// Hartmann 6-d, `Σ αᵢ exp(-Σ Aᵢⱼ (xⱼ - Pᵢⱼ)²)`.
    Hartmann6,
    /// `-Σ (xⱼ - cⱼ)²`.
    Quadratic { center: Vec<f64> },
}

impl UtilityKind {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            UtilityKind::Ackley => {
                let d = x.len() as f64;
                let sq = x.iter().map(|v| v * v).sum::<f64>() / d;
                let cs = x.iter().map(|v| (ACKLEY_C * v).cos()).sum::<f64>() / d;
                ACKLEY_A * (-ACKLEY_B * sq.sqrt()).exp() + cs.exp() - ACKLEY_A - std::f64::consts::E
            }
            UtilityKind::Alpine1 => -x.iter().map(|v| (v * v.sin() + 0.1 * v).abs()).sum::<f64>(),
            UtilityKind::Hartmann6 => HARTMANN_ALPHA
                .iter()
                .zip(HARTMANN_A.iter().zip(HARTMANN_P.iter()))
                .map(|(alpha, (a, p))| {
                    let inner: f64 = (0..6).map(|j| a[j] * (x[j] - p[j]).powi(2)).sum();
                    alpha * (-inner).exp()
                })
                .sum(),
            UtilityKind::Quadratic { center } => {
                -x.iter().zip(center).map(|(v, c)| (v - c).powi(2)).sum::<f64>()
            }
        }
    }

    /// Global maximizer if it lies in `[lower, upper]`.
    fn optimum(&self, lower: &[f64], upper: &[f64]) -> Option<Point> {
        let x: Point = match self {
            UtilityKind::Ackley | UtilityKind::Alpine1 => vec![0.0; lower.len()],
            UtilityKind::Hartmann6 => HARTMANN6_ARGMAX.to_vec(),
            UtilityKind::Quadratic { center } => center.clone(),
        };
        let inside = x.len() == lower.len()
            && x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| l <= v && v <= u);
        inside.then_some(x)
    }
}

/// JSON description of a custom problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(flatten)]
    pub utility: UtilityKind,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

/// A maximization problem over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct TestProblem {
    pub name: String,
    pub domain: Domain,
    pub utility: UtilityKind,
    /// Utilities are multiplied by this positive factor.
    pub scale: f64,
    pub known_optimum: Option<(Point, f64)>,
}

impl TestProblem {
    pub fn from_spec(spec: ProblemSpec) -> Result<Self> {
        let domain = Domain::new_box(spec.lower.clone(), spec.upper.clone())?;
        let d = domain.dim();
        if !(spec.scale > 0.0 && spec.scale.is_finite()) {
            return Err(BenchError::Config(format!("scale must be positive, got {}", spec.scale)));
        }
        match &spec.utility {
            UtilityKind::Hartmann6 if d != 6 => {
                return Err(BenchError::Config("hartmann6 needs 6 dimensions".into()))
            }
            UtilityKind::Quadratic { center } if center.len() != d => {
                return Err(BenchError::Config("quadratic center has wrong dimension".into()))
            }
            _ => {}
        }
        let mut p = TestProblem {
            name: spec.name,
            domain,
            utility: spec.utility,
            scale: spec.scale,
            known_optimum: None,
        };
        p.known_optimum = p
            .utility
            .optimum(&spec.lower, &spec.upper)
            .map(|x| {
                let v = p.scale * p.utility.eval(&x);
                (x, v)
            });
        Ok(p)
    }

    /// `ackley6`, `alpine1-7`, `hartmann6`, or `quadratic<d>` on the unit cube
    /// centered at 0.3.
    pub fn by_name(name: &str) -> Result<Self> {
        let spec = |lo: f64, hi: f64, d: usize, utility| ProblemSpec {
            name: name.to_string(),
            lower: vec![lo; d],
            upper: vec![hi; d],
            utility,
            scale: 1.0,
        };
        let s = match name {
            "ackley6" => spec(-32.768, 32.768, 6, UtilityKind::Ackley),
            "alpine1-7" => spec(-10.0, 10.0, 7, UtilityKind::Alpine1),
            "hartmann6" => spec(0.0, 1.0, 6, UtilityKind::Hartmann6),
            _ => match name.strip_prefix("quadratic").and_then(|d| d.parse::<usize>().ok()) {
                Some(d) if d >= 1 => spec(0.0, 1.0, d, UtilityKind::Quadratic { center: vec![0.3; d] }),
                _ => return Err(BenchError::UnknownProblem(name.to_string())),
            },
        };
        Self::from_spec(s)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let spec: ProblemSpec =
            serde_json::from_str(json).map_err(|e| BenchError::Config(format!("problem spec: {e}")))?;
        Self::from_spec(spec)
    }

    /// Same problem with utilities multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let (lo, hi) = self.domain.bounding_box();
        Self::from_spec(ProblemSpec {
            name: format!("{}x{c}", self.name),
            lower: lo,
            upper: hi,
            utility: self.utility.clone(),
            scale: self.scale * c,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Utility with no bounds check, for callers that already validated `x`.
    pub fn utility_unchecked(&self, x: &[f64]) -> f64 {
        self.scale * self.utility.eval(x)
    }

    pub fn optimum_value(&self) -> Option<f64> {
        self.known_optimum.as_ref().map(|(_, v)| *v)
    }
}

/// Utility of `x`; errors when `x` is outside the problem's domain.
pub fn eval_problem(problem: &TestProblem, x: &[f64]) -> Result<f64> {
    problem.domain.check_point(0, x)?;
    Ok(problem.utility_unchecked(x))
}

/// Softmax choice among `utilities` at temperature `lambda`, sampled as the
/// argmax of Gumbel-perturbed utilities. `lambda = 0` is the exact argmax.
/// Ties go to the lowest index.
pub fn sample_choice<R: Rng + ?Sized>(utilities: &[f64], lambda: f64, rng: &mut R) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, u) in utilities.iter().enumerate() {
        let v = if lambda > 0.0 {
            let e: f64 = rng.random::<f64>();
            // Gumbel(0, 1) = -ln(-ln U); U in (0, 1)
            let g = -(-(e.max(f64::MIN_POSITIVE)).ln()).ln();
            u + lambda * g
        } else {
            *u
        };
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// A decision-maker answering queries about a test problem.
#[derive(Debug, Clone)]
pub struct SimulatedDM {
    pub problem: TestProblem,
    pub lambda: f64,
    rng: PboRng,
}

impl SimulatedDM {
    pub fn new(problem: TestProblem, lambda: f64, rng: PboRng) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(BenchError::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self { problem, lambda, rng })
    }

    pub fn respond(&mut self, query: &Query) -> Result<Response> {
        let u = query
            .points
            .iter()
            .map(|x| eval_problem(&self.problem, x))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Response(sample_choice(&u, self.lambda, &mut self.rng)))
    }
}

pub fn simulate_response(dm: &mut SimulatedDM, query: &Query) -> Result<Response> {
    dm.respond(query)
}

pub const CALIBRATION_POINTS: usize = 100_000;
pub const CALIBRATION_TOP_FRACTION: f64 = 0.01;

/// Utilities of the top 1% of `CALIBRATION_POINTS` uniform points.
pub fn calibration_set<R: Rng + ?Sized>(problem: &TestProblem, rng: &mut R) -> Vec<f64> {
    let mut u: Vec<f64> = (0..CALIBRATION_POINTS)
        .map(|_| problem.utility_unchecked(&problem.domain.sample(rng)))
        .collect();
    u.sort_by(|a, b| b.total_cmp(a));
    u.truncate(((CALIBRATION_POINTS as f64 * CALIBRATION_TOP_FRACTION) as usize).max(2));
    u
}

/// Expected fraction of pairs of `top` on which a softmax DM at `lambda`
/// picks the strictly worse alternative. Equal pairs never count.
pub fn mistake_rate(top: &[f64], lambda: f64) -> f64 {
    let n = top.len();
    let pairs = (n * (n - 1) / 2) as f64;
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (top[i] - top[j]).abs();
            if gap > 0.0 {
                total += if lambda > 0.0 {
                    1.0 / (1.0 + (gap / lambda).exp())
                } else {
                    0.0
                };
            }
        }
    }
    total / pairs
}

/// Finds `λ` such that the expected mistake rate on random pairs of the top
/// 1% of a fresh uniform sample matches `target`, by bisection in `ln λ`.
pub fn calibrate_noise<R: Rng + ?Sized>(problem: &TestProblem, target: f64, rng: &mut R) -> Result<f64> {
    if !(target > 0.0 && target < 0.5) {
        return Err(BenchError::Calibration(format!("target must lie in (0, 0.5), got {target}")));
    }
    let top = calibration_set(problem, rng);
    let range = top[0] - top[top.len() - 1];
    if !(range > 0.0) {
        return Err(BenchError::Calibration("utility is constant on the top set".into()));
    }
    let mut lo = (range * 1e-9).ln();
    let mut hi = (range * 1e6).ln();
    if mistake_rate(&top, hi.exp()) < target {
        return Err(BenchError::Calibration(format!("target {target} unreachable")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let rate = mistake_rate(&top, mid.exp());
        if (rate - target).abs() < 1e-5 {
            return Ok(mid.exp());
        }
        if rate < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// `4·d` uniformly random queries, each answered by `dm`.
pub fn initial_design<R: Rng + ?Sized>(
    dm: &mut SimulatedDM,
    q: usize,
    rng: &mut R,
) -> Result<PreferenceDataset> {
    let mut ds = PreferenceDataset::new(q)?;
    for _ in 0..4 * dm.problem.dim() {
        let query = pbo_core::acquisition::random_query(&dm.problem.domain, q, rng);
        let r = dm.respond(&query)?;
        ds.push(query, r)?;
    }
    Ok(ds)
}

/// `n` pairwise comparisons of `anchor` against uniform random points, the
/// anchor shown first.
pub fn anchored_design<R: Rng + ?Sized>(
    dm: &mut SimulatedDM,
    anchor: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<PreferenceDataset> {
    dm.problem.domain.check_point(0, anchor)?;
    let mut ds = PreferenceDataset::new(2)?;
    for _ in 0..n {
        let other = dm.problem.domain.sample(rng);
        let query = Query::new(vec![anchor.to_vec(), other]);
        let r = dm.respond(&query)?;
        ds.push(query, r)?;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pbo_core::model::choice_likelihood;
    use pbo_core::rng::rng_from_seed;

    /// Straight-line transcription of the 6-d Hartmann function.
    fn hartmann_reference(x: &[f64]) -> f64 {
        let t1 = 10.0 * (x[0] - 0.1312).powi(2)
            + 3.0 * (x[1] - 0.1696).powi(2)
            + 17.0 * (x[2] - 0.5569).powi(2)
            + 3.5 * (x[3] - 0.0124).powi(2)
            + 1.7 * (x[4] - 0.8283).powi(2)
            + 8.0 * (x[5] - 0.5886).powi(2);
        let t2 = 0.05 * (x[0] - 0.2329).powi(2)
            + 10.0 * (x[1] - 0.4135).powi(2)
            + 17.0 * (x[2] - 0.8307).powi(2)
            + 0.1 * (x[3] - 0.3736).powi(2)
            + 8.0 * (x[4] - 0.1004).powi(2)
            + 14.0 * (x[5] - 0.9991).powi(2);
        let t3 = 3.0 * (x[0] - 0.2348).powi(2)
            + 3.5 * (x[1] - 0.1451).powi(2)
            + 1.7 * (x[2] - 0.3522).powi(2)
            + 10.0 * (x[3] - 0.2883).powi(2)
            + 17.0 * (x[4] - 0.3047).powi(2)
            + 8.0 * (x[5] - 0.6650).powi(2);
        let t4 = 17.0 * (x[0] - 0.4047).powi(2)
            + 8.0 * (x[1] - 0.8828).powi(2)
            + 0.05 * (x[2] - 0.8732).powi(2)
            + 10.0 * (x[3] - 0.5743).powi(2)
            + 0.1 * (x[4] - 0.1091).powi(2)
            + 14.0 * (x[5] - 0.0381).powi(2);
        1.0 * (-t1).exp() + 1.2 * (-t2).exp() + 3.0 * (-t3).exp() + 3.2 * (-t4).exp()
    }

    #[test]
    fn hartmann_matches_reference() {
        let p = TestProblem::by_name("hartmann6").unwrap();
        for x in [
            vec![0.5; 6],
            vec![0.1, 0.9, 0.3, 0.7, 0.2, 0.8],
            HARTMANN6_ARGMAX.to_vec(),
        ] {
            assert!((eval_problem(&p, &x).unwrap() - hartmann_reference(&x)).abs() < 1e-10);
        }
        let opt = p.optimum_value().unwrap();
        assert!((opt - 3.322_368_011_415_5).abs() < 1e-8, "{opt}");
    }

    #[test]
    fn optima_at_origin() {
        let a = TestProblem::by_name("ackley6").unwrap();
        assert!(eval_problem(&a, &[0.0; 6]).unwrap().abs() < 1e-14);
        let b = TestProblem::by_name("alpine1-7").unwrap();
        assert_eq!(eval_problem(&b, &[0.0; 7]).unwrap(), 0.0);
        assert!(eval_problem(&b, &[11.0; 7]).is_err());
    }

    #[test]
    fn known_optima_dominate_probes() {
        let mut rng = rng_from_seed(5);
        for name in ["ackley6", "alpine1-7", "hartmann6", "quadratic2"] {
            let p = TestProblem::by_name(name).unwrap();
            let opt = p.optimum_value().unwrap();
            for _ in 0..10_000 {
                let x = p.domain.sample(&mut rng);
                assert!(eval_problem(&p, &x).unwrap() <= opt + 1e-12, "{name}");
            }
        }
        assert!(TestProblem::by_name("branin").is_err());
    }

    #[test]
    fn custom_problem_from_json() {
        let p = TestProblem::from_json(
            r#"{"name": "bowl", "kind": "quadratic", "center": [0.5, 0.5], "lower": [0, 0], "upper": [1, 1], "scale": 2}"#,
        )
        .unwrap();
        assert_eq!(p.known_optimum, Some((vec![0.5, 0.5], 0.0)));
        assert!((eval_problem(&p, &[0.0, 0.5]).unwrap() + 0.5).abs() < 1e-15);
        assert!(TestProblem::from_json(r#"{"name": "h", "kind": "hartmann6", "lower": [0], "upper": [1]}"#).is_err());
    }

    #[test]
    fn noise_free_choice_is_argmax() {
        let mut rng = rng_from_seed(1);
        for _ in 0..100 {
            assert_eq!(sample_choice(&[0.3, 0.9], 0.0, &mut rng), 1);
        }
        assert_eq!(sample_choice(&[0.5, 0.5], 0.0, &mut rng), 0);
    }

    #[test]
    fn choice_frequencies_match_softmax() {
        let mut rng = rng_from_seed(2);
        let n = 100_000;
        let hits = (0..n).filter(|_| sample_choice(&[1.0, 0.0], 1.0, &mut rng) == 0).count();
        let e = std::f64::consts::E;
        assert!((hits as f64 / n as f64 - e / (e + 1.0)).abs() < 0.01);
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_choice(&[0.2, 0.2, 0.2], 0.5, &mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn gumbel_argmax_equals_softmax_in_distribution() {
        let mut rng = rng_from_seed(3);
        for _ in 0..20 {
            let q = rng.random_range(2..5);
            let u: Vec<f64> = (0..q).map(|_| rng.random_range(-2.0..2.0)).collect();
            let lambda = rng.random_range(0.1..2.0);
            let p = choice_likelihood(&u, lambda).unwrap();
            let mut counts = vec![0usize; q];
            let n = 100_000;
            for _ in 0..n {
                counts[sample_choice(&u, lambda, &mut rng)] += 1;
            }
            let tv: f64 = 0.5
                * counts
                    .iter()
                    .zip(&p)
                    .map(|(c, pi)| (*c as f64 / n as f64 - pi).abs())
                    .sum::<f64>();
            assert!(tv < 0.01, "tv = {tv}");
        }
    }

    #[test]
    fn mistake_rate_is_monotone() {
        let p = TestProblem::by_name("hartmann6").unwrap();
        let top = calibration_set(&p, &mut rng_from_seed(7));
        let mut prev = mistake_rate(&top, 0.0);
        assert_eq!(prev, 0.0);
        for k in -12..6 {
            let r = mistake_rate(&top, 2f64.powi(k));
            assert!(r >= prev);
            prev = r;
        }
        assert!(prev < 0.5);
    }

    #[test]
    fn calibration_round_trip_and_scaling() {
        let p = TestProblem::by_name("hartmann6").unwrap();
        let lambda = calibrate_noise(&p, 0.2, &mut rng_from_seed(11)).unwrap();
        let fresh = calibration_set(&p, &mut rng_from_seed(12));
        assert!((mistake_rate(&fresh, lambda) - 0.2).abs() < 0.01);

        let scaled = p.scaled(7.0).unwrap();
        let l2 = calibrate_noise(&scaled, 0.2, &mut rng_from_seed(11)).unwrap();
        assert!((l2 / (7.0 * lambda) - 1.0).abs() < 0.05, "{l2} vs {}", 7.0 * lambda);

        let small = calibrate_noise(&p, 1e-4, &mut rng_from_seed(11)).unwrap();
        assert!(small < lambda);
        assert!(calibrate_noise(&p, 0.6, &mut rng_from_seed(11)).is_err());
    }

    #[test]
    fn initial_design_shape() {
        let p = TestProblem::by_name("hartmann6").unwrap();
        let run = |seed| {
            let mut dm = SimulatedDM::new(p.clone(), 0.05, rng_from_seed(seed)).unwrap();
            initial_design(&mut dm, 2, &mut rng_from_seed(seed + 1)).unwrap()
        };
        let ds = run(1);
        assert_eq!(ds.len(), 24);
        assert_eq!(ds, run(1));
        assert_ne!(ds, run(2));
        for obs in ds.observations() {
            for x in &obs.query.points {
                assert!(p.domain.contains(x));
            }
        }
    }
}
