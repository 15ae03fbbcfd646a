//! Pure state transitions of a session.
//!
//! Every random choice is drawn from a seed derived from the session seed and
//! the position in the interaction, so a branch computed ahead of time and
//! the same branch computed on demand are bit-identical.

use pbo_core::acquisition::{next_query, AcquisitionSpec};
use pbo_core::model::{fit_hyperparameters, fit_laplace, HyperFitConfig, Hyperparameters};
use pbo_core::recommend::{recommend, RecommendOptions};
use pbo_core::rng::{derive_seed, rng_from_seed, stream};
use pbo_core::{Domain, Point, PreferenceDataset, Query, Response};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

/// Label used in place of a revision for the first query.
const FIRST_QUERY: u64 = u64::MAX;

fn default_refit() -> usize {
    5
}

fn default_true() -> bool {
    true
}

/// Everything that determines a session's behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub domain: Domain,
    #[serde(flatten)]
    pub acquisition: AcquisitionSpec,
    pub seed: u64,
    /// Hyperparameters are refit whenever the number of responses is a
    /// multiple of this.
    #[serde(default = "default_refit")]
    pub refit_every: usize,
    #[serde(default = "default_true")]
    pub prefetch: bool,
    #[serde(default)]
    pub hyper_fit: HyperFitConfig,
}

impl SessionConfig {
    pub fn new(domain: Domain, acquisition: AcquisitionSpec, seed: u64) -> Self {
        Self {
            domain,
            acquisition,
            seed,
            refit_every: default_refit(),
            prefetch: true,
            hyper_fit: HyperFitConfig::default(),
        }
    }

    pub fn check(&self) -> Result<()> {
        self.domain.check()?;
        self.acquisition.check()?;
        if self.refit_every == 0 {
            return Err(ServiceError::Invalid("refit_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn q(&self) -> usize {
        self.acquisition.q
    }

    /// Seed of the query issued after answering the query at `revision` with
    /// `choice`.
    pub fn branch_seed(&self, revision: u64, choice: usize) -> u64 {
        derive_seed(self.seed, &[stream::ACQUISITION, revision, choice as u64])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub revision: u64,
    pub point: Point,
    pub mean: f64,
}

/// State between two responses: the data so far, the current
/// hyperparameters, the pending query and the current recommendation.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub revision: u64,
    pub dataset: PreferenceDataset,
    pub hyper: Hyperparameters,
    pub query: Query,
    pub incumbent: Incumbent,
}

fn finish(
    cfg: &SessionConfig,
    revision: u64,
    dataset: PreferenceDataset,
    hyper: Hyperparameters,
    query_seed: u64,
) -> Result<Round> {
    let model = fit_laplace(&dataset, &hyper, &cfg.domain)?;
    let query = next_query(&model, &cfg.acquisition, &dataset, &mut rng_from_seed(query_seed))?;
    let rec = recommend(
        &model,
        &RecommendOptions::default(),
        &mut rng_from_seed(derive_seed(cfg.seed, &[stream::RECOMMEND, revision])),
    )?;
    Ok(Round {
        revision,
        dataset,
        hyper,
        query,
        incumbent: Incumbent {
            revision,
            point: rec.point,
            mean: rec.mean,
        },
    })
}

/// Revision 0: prior model, first query and prior recommendation.
pub fn first_round(cfg: &SessionConfig) -> Result<Round> {
    cfg.check()?;
    let dataset = PreferenceDataset::new(cfg.q())?;
    let hyper = Hyperparameters::default_for(cfg.domain.dim());
    finish(
        cfg,
        0,
        dataset,
        hyper,
        derive_seed(cfg.seed, &[stream::ACQUISITION, FIRST_QUERY]),
    )
}

/// The round after answering `prev.query` with `choice`.
pub fn next_round(cfg: &SessionConfig, prev: &Round, choice: usize) -> Result<Round> {
    if choice >= prev.query.q() {
        return Err(ServiceError::ChoiceOutOfRange {
            choice,
            q: prev.query.q(),
        });
    }
    let dataset = prev.dataset.append(prev.query.clone(), Response(choice))?;
    let n = dataset.len();
    let hyper = if n % cfg.refit_every == 0 {
        let mut rng = rng_from_seed(derive_seed(cfg.seed, &[stream::MODEL_FIT, n as u64]));
        fit_hyperparameters(&dataset, &cfg.domain, &prev.hyper, &cfg.hyper_fit, &mut rng)?
    } else {
        prev.hyper.clone()
    };
    finish(
        cfg,
        prev.revision + 1,
        dataset,
        hyper,
        cfg.branch_seed(prev.revision, choice),
    )
}

/// Recomputes every round from a list of choices.
pub fn replay_choices(cfg: &SessionConfig, choices: &[usize]) -> Result<Round> {
    let mut round = first_round(cfg)?;
    for &c in choices {
        round = next_round(cfg, &round, c)?;
    }
    Ok(round)
}
