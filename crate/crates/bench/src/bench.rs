//! Replicated optimization runs against simulated decision-makers.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::Instant;

use pbo_core::acquisition::{next_query, AcquisitionSpec};
use pbo_core::model::{fit_hyperparameters, fit_laplace, HyperFitConfig, Hyperparameters, PosteriorModel};
use pbo_core::recommend::{recommend, RecommendOptions};
use pbo_core::rng::{stream, SeedTree};
use pbo_core::{Point, PreferenceDataset};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sim::{calibrate_noise, initial_design, SimulatedDM, TestProblem};
use crate::{BenchError, Result};

pub const LOG_CLAMP: f64 = 1e-12;
pub const CSV_HEADER: &str = "problem,algo,q,noise,seed,query_index,regret,log10_regret,acq_seconds";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Built-in problem name or path to a JSON problem spec.
    pub problem: String,
    pub algo: AcquisitionSpec,
    pub n_queries: usize,
    pub n_replications: usize,
    /// Target mistake rate of the simulated DM; 0 is noise-free.
    pub noise: f64,
    /// Replication `r` uses seed `seed + r`.
    pub seed: u64,
    pub refit_every: usize,
    pub hyper_fit: HyperFitConfig,
}

impl BenchConfig {
    pub fn new(problem: &str, algo: AcquisitionSpec) -> Self {
        Self {
            problem: problem.to_string(),
            algo,
            n_queries: 150,
            n_replications: 1,
            noise: 0.2,
            seed: 0,
            refit_every: 5,
            hyper_fit: HyperFitConfig::default(),
        }
    }

    pub fn check(&self) -> Result<()> {
        self.algo.check()?;
        if self.n_queries < 1 || self.n_replications < 1 {
            return Err(BenchError::Config("need at least one query and one replication".into()));
        }
        if self.refit_every < 1 {
            return Err(BenchError::Config("refit_every must be >= 1".into()));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(BenchError::Config(format!("noise must lie in [0, 0.5), got {}", self.noise)));
        }
        Ok(())
    }

    pub fn load_problem(&self) -> Result<TestProblem> {
        if self.problem.ends_with(".json") {
            TestProblem::from_json(&std::fs::read_to_string(&self.problem)?)
        } else {
            TestProblem::by_name(&self.problem)
        }
    }
}

/// Simple regret per query index, index 0 being the state right after the
/// initial design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub problem: String,
    pub algo: String,
    pub q: usize,
    pub noise: f64,
    pub seed: u64,
    pub regret: Vec<f64>,
    /// Acquisition wall time that produced query `i`; 0 at index 0.
    pub acq_seconds: Vec<f64>,
    pub recommendations: Vec<Point>,
    /// Set when the replication aborted; the trace then stops early.
    pub failure: Option<String>,
}

impl RegretTrace {
    pub fn len(&self) -> usize {
        self.regret.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regret.is_empty()
    }
}

fn refit(
    cfg: &BenchConfig,
    problem: &TestProblem,
    ds: &PreferenceDataset,
    hyper: &mut Hyperparameters,
    seeds: &SeedTree,
    t: usize,
) -> Result<PosteriorModel> {
    if t % cfg.refit_every == 0 && !ds.is_empty() {
        let mut rng = seeds.child2(stream::MODEL_FIT, t as u64).rng();
        *hyper = fit_hyperparameters(ds, &problem.domain, hyper, &cfg.hyper_fit, &mut rng)?;
    }
    Ok(fit_laplace(ds, hyper, &problem.domain)?)
}

/// One replication: initial design of `4·d` random queries, then
/// `cfg.n_queries` acquisitions.
pub fn run_replication(cfg: &BenchConfig, problem: &TestProblem, lambda_sim: f64, seed: u64) -> RegretTrace {
    run_replication_from(cfg, problem, lambda_sim, seed, None)
}

/// As [`run_replication`], but starting from `initial` instead of a random
/// design when given.
pub fn run_replication_from(
    cfg: &BenchConfig,
    problem: &TestProblem,
    lambda_sim: f64,
    seed: u64,
    initial: Option<PreferenceDataset>,
) -> RegretTrace {
    let mut trace = RegretTrace {
        problem: problem.name.clone(),
        algo: cfg.algo.kind.to_string(),
        q: cfg.algo.q,
        noise: cfg.noise,
        seed,
        regret: Vec::new(),
        acq_seconds: Vec::new(),
        recommendations: Vec::new(),
        failure: None,
    };
    if let Err(e) = replication_loop(cfg, problem, lambda_sim, seed, initial, &mut trace) {
        trace.failure = Some(e.to_string());
    }
    trace
}

fn replication_loop(
    cfg: &BenchConfig,
    problem: &TestProblem,
    lambda_sim: f64,
    seed: u64,
    initial: Option<PreferenceDataset>,
    trace: &mut RegretTrace,
) -> Result<()> {
    cfg.check()?;
    let opt = problem
        .optimum_value()
        .ok_or_else(|| BenchError::Config(format!("{} has no known optimum", problem.name)))?;
    let seeds = SeedTree::new(seed);
    let mut dm = SimulatedDM::new(problem.clone(), lambda_sim, seeds.child(stream::DM).rng())?;
    let mut ds = match initial {
        Some(ds) if ds.q() == cfg.algo.q => ds,
        Some(ds) => {
            return Err(BenchError::Config(format!(
                "initial data has q = {}, config has q = {}",
                ds.q(),
                cfg.algo.q
            )))
        }
        None => initial_design(&mut dm, cfg.algo.q, &mut seeds.child(stream::INIT_DESIGN).rng())?,
    };
    let mut hyper = Hyperparameters::default_for(problem.dim());
    let rec_opts = RecommendOptions::default();

    let record = |model: &PosteriorModel, t: usize, secs: f64, trace: &mut RegretTrace| -> Result<()> {
        let rec = recommend(model, &rec_opts, &mut seeds.child2(stream::RECOMMEND, t as u64).rng())?;
        trace.regret.push(opt - problem.utility_unchecked(&rec.point));
        trace.acq_seconds.push(secs);
        trace.recommendations.push(rec.point);
        Ok(())
    };

    let mut model = refit(cfg, problem, &ds, &mut hyper, &seeds, 0)?;
    record(&model, 0, 0.0, trace)?;
    for t in 1..=cfg.n_queries {
        let mut rng = seeds.child2(stream::ACQUISITION, t as u64).rng();
        let start = Instant::now();
        let query = next_query(&model, &cfg.algo, &ds, &mut rng)?;
        let secs = start.elapsed().as_secs_f64();
        let r = dm.respond(&query)?;
        ds.push(query, r)?;
        model = refit(cfg, problem, &ds, &mut hyper, &seeds, t)?;
        record(&model, t, secs, trace)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub lambda_sim: f64,
    pub traces: Vec<RegretTrace>,
}

/// Simulated DM noise for `cfg`: calibrated to `cfg.noise` on a stream of
/// `cfg.seed`, or 0 when `cfg.noise == 0`.
pub fn simulated_noise(cfg: &BenchConfig, problem: &TestProblem) -> Result<f64> {
    if cfg.noise == 0.0 {
        return Ok(0.0);
    }
    calibrate_noise(problem, cfg.noise, &mut SeedTree::new(cfg.seed).child(stream::CALIBRATION).rng())
}

/// Runs all replications (in parallel); traces are ordered by seed.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchResult> {
    cfg.check()?;
    let problem = cfg.load_problem()?;
    let lambda_sim = simulated_noise(cfg, &problem)?;
    let traces = (0..cfg.n_replications as u64)
        .into_par_iter()
        .map(|r| run_replication(cfg, &problem, lambda_sim, cfg.seed + r))
        .collect();
    Ok(BenchResult { lambda_sim, traces })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub query_index: usize,
    pub mean_log10_regret: f64,
    /// `1.96 · sd / √R`, sample sd (0 for a single trace).
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub replications: usize,
    pub rows: Vec<SummaryRow>,
    /// Mean acquisition seconds per query, by algorithm.
    pub mean_acq_seconds: BTreeMap<String, f64>,
}

pub fn log10_regret(r: f64) -> f64 {
    r.max(LOG_CLAMP).log10()
}

/// Mean log10 simple regret with a 1.96-standard-error band per query index.
pub fn aggregate(traces: &[RegretTrace]) -> Result<Summary> {
    let first = traces.first().ok_or(BenchError::NoTraces)?;
    let n = first.len();
    if let Some(t) = traces.iter().find(|t| t.len() != n) {
        return Err(BenchError::LengthMismatch(n, t.len()));
    }
    let r = traces.len() as f64;
    let rows = (0..n)
        .map(|i| {
            let logs: Vec<f64> = traces.iter().map(|t| log10_regret(t.regret[i])).collect();
            let mean = logs.iter().sum::<f64>() / r;
            let sd = if traces.len() > 1 {
                (logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                query_index: i,
                mean_log10_regret: mean,
                half_width: 1.96 * sd / r.sqrt(),
            }
        })
        .collect();
    Ok(Summary {
        replications: traces.len(),
        rows,
        mean_acq_seconds: runtime_table(traces),
    })
}

/// Mean acquisition seconds per query (index 0 excluded), by algorithm.
pub fn runtime_table(traces: &[RegretTrace]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for t in traces {
        let e = acc.entry(t.algo.clone()).or_default();
        for s in t.acq_seconds.iter().skip(1) {
            e.0 += s;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(k, (s, c))| (k, if c > 0 { s / c as f64 } else { 0.0 }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub problem: String,
    pub algo: String,
    pub q: usize,
    pub noise: f64,
    pub seed: u64,
    pub query_index: usize,
    pub regret: f64,
    pub log10_regret: f64,
    pub acq_seconds: f64,
}

/// One row per (trace, query index), sorted by (seed, query_index).
pub fn csv_rows(traces: &[RegretTrace]) -> Vec<CsvRow> {
    let mut rows: Vec<CsvRow> = traces
        .iter()
        .flat_map(|t| {
            (0..t.len()).map(move |i| CsvRow {
                problem: t.problem.clone(),
                algo: t.algo.clone(),
                q: t.q,
                noise: t.noise,
                seed: t.seed,
                query_index: i,
                regret: t.regret[i],
                log10_regret: log10_regret(t.regret[i]),
                acq_seconds: t.acq_seconds[i],
            })
        })
        .collect();
    rows.sort_by(|a, b| (a.seed, a.query_index).cmp(&(b.seed, b.query_index)));
    rows
}

pub fn write_csv<W: Write>(out: W, traces: &[RegretTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in csv_rows(traces) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(BenchError::Config(format!("unexpected csv header {:?}", header.join(","))));
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<CsvRow>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(seed: u64, regret: Vec<f64>) -> RegretTrace {
        RegretTrace {
            problem: "p".into(),
            algo: "qeubo".into(),
            q: 2,
            noise: 0.2,
            seed,
            acq_seconds: vec![0.0; regret.len()],
            recommendations: vec![vec![0.0]; regret.len()],
            regret,
            failure: None,
        }
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[trace(0, vec![0.5])]).unwrap();
        assert_eq!(s.rows[0].half_width, 0.0);
        let s = aggregate(&[trace(0, vec![0.5, 0.1]), trace(1, vec![0.5, 0.1])]).unwrap();
        assert!(s.rows.iter().all(|r| r.half_width == 0.0));
        let s = aggregate(&[trace(0, vec![0.1]), trace(1, vec![0.001])]).unwrap();
        assert!((s.rows[0].mean_log10_regret + 2.0).abs() < 1e-12);
        assert!((s.rows[0].half_width - 1.96).abs() < 1e-12);
        assert!(matches!(
            aggregate(&[trace(0, vec![0.1]), trace(1, vec![0.1, 0.2])]),
            Err(BenchError::LengthMismatch(1, 2))
        ));
        assert!(matches!(aggregate(&[]), Err(BenchError::NoTraces)));
        let s = aggregate(&[trace(0, vec![0.0])]).unwrap();
        assert_eq!(s.rows[0].mean_log10_regret, -12.0);
    }

    #[test]
    fn csv_round_trip_sorted() {
        let traces = [trace(3, vec![0.5, 0.25]), trace(1, vec![0.1, 0.01])];
        let mut buf = Vec::new();
        write_csv(&mut buf, &traces).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        let rows = read_csv(buf.as_slice()).unwrap();
        let keys: Vec<(u64, usize)> = rows.iter().map(|r| (r.seed, r.query_index)).collect();
        assert_eq!(keys, vec![(1, 0), (1, 1), (3, 0), (3, 1)]);
        assert_eq!(rows[1].log10_regret, -2.0);
        assert_eq!(rows, csv_rows(&traces));
    }

    #[test]
    fn config_validation() {
        use pbo_core::acquisition::AcquisitionKind;
        let mut cfg = BenchConfig::new("hartmann6", AcquisitionSpec::new(AcquisitionKind::Random, 2));
        assert!(cfg.check().is_ok());
        cfg.n_queries = 0;
        assert!(cfg.check().is_err());
        cfg.n_queries = 3;
        cfg.noise = 0.7;
        assert!(cfg.check().is_err());
    }
}
