//! Session manager: per-session state machine, prefetching and persistence.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};

use pbo_core::{Point, Query};
use serde::{Deserialize, Serialize};

use crate::engine::{first_round, next_round, Incumbent, Round, SessionConfig};
use crate::error::{Result, ServiceError};
use crate::journal::{journal_path, now, read_events, Journal, JournalEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    AwaitingResponse,
    Computing,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefetchStatus {
    Complete,
    Pending,
    Absent,
}

/// One prefetched branch: the round that follows a given response.
struct Branch {
    slot: Mutex<Option<Result<Round>>>,
    done: Condvar,
    cancelled: AtomicBool,
}

impl Branch {
    fn spawn(cfg: Arc<SessionConfig>, prev: Arc<Round>, choice: usize) -> Arc<Self> {
        let b = Arc::new(Branch {
            slot: Mutex::new(None),
            done: Condvar::new(),
            cancelled: AtomicBool::new(false),
        });
        let worker = b.clone();
        std::thread::spawn(move || {
            let result = if worker.cancelled.load(Ordering::Acquire) {
                Err(ServiceError::Invalid("branch cancelled".into()))
            } else {
                next_round(&cfg, &prev, choice)
            };
            *worker.slot.lock().unwrap() = Some(result);
            worker.done.notify_all();
        });
        b
    }

    fn is_done(&self) -> bool {
        self.slot.lock().unwrap().is_some()
    }

    fn wait(&self) -> Result<Round> {
        let mut slot = self.slot.lock().unwrap();
        while slot.is_none() {
            slot = self.done.wait(slot).unwrap();
        }
        match slot.as_ref().unwrap() {
            Ok(r) => Ok(r.clone()),
            Err(e) => Err(ServiceError::Invalid(e.to_string())),
        }
    }
}

/// Immutable view published after every transition.
#[derive(Clone)]
struct Snapshot {
    round: Arc<Round>,
    status: Status,
    trace: Arc<Vec<Incumbent>>,
    branches: Arc<Vec<Option<Arc<Branch>>>>,
}

struct Session {
    id: String,
    config: Arc<SessionConfig>,
    /// Serializes state transitions.
    writer: Mutex<()>,
    journal: Mutex<Option<Journal>>,
    view: RwLock<Snapshot>,
}

impl Session {
    fn snapshot(&self) -> Snapshot {
        self.view.read().unwrap().clone()
    }

    fn publish(&self, s: Snapshot) {
        *self.view.write().unwrap() = s;
    }

    fn journal(&self, events: &[JournalEvent]) -> Result<()> {
        if let Some(j) = self.journal.lock().unwrap().as_mut() {
            j.append(events)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub revision: u64,
    pub query: Query,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submitted {
    pub revision: u64,
    pub query: Query,
    pub incumbent: Point,
    pub incumbent_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    pub revision: u64,
    pub point: Point,
    pub mean: f64,
    /// Recommendation after each revision, oldest first.
    pub trace: Vec<Incumbent>,
}

/// Full session state for client hydration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub revision: u64,
    pub status: Status,
    pub config: SessionConfig,
    pub pending_query: Option<Query>,
    pub dataset: serde_json::Value,
    pub incumbent: Incumbent,
    pub incumbent_trace: Vec<Incumbent>,
    pub prefetch: BTreeMap<usize, PrefetchStatus>,
}

#[derive(Debug, Default)]
pub struct Stats {
    pub prefetch_hits: AtomicU64,
    pub sync_computations: AtomicU64,
}

/// Owns all sessions; optionally persists them under a data directory.
pub struct SessionManager {
    data_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    stats: Stats,
}

impl SessionManager {
    /// Sessions live in memory only.
    pub fn in_memory() -> Self {
        Self {
            data_dir: None,
            sessions: RwLock::new(HashMap::new()),
            stats: Stats::default(),
        }
    }

    /// Loads every journal under `dir` (created if missing) and resumes the
    /// sessions they describe.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mgr = Self {
            data_dir: Some(dir),
            sessions: RwLock::new(HashMap::new()),
            stats: Stats::default(),
        };
        for p in paths {
            let s = restore(&p)?;
            mgr.sessions.write().unwrap().insert(s.id.clone(), s);
        }
        Ok(mgr)
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    fn get(&self, id: &str) -> Result<Arc<Session>> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn create_session(&self, config: SessionConfig) -> Result<Created> {
        config.check()?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let round = Arc::new(first_round(&config)?);
        let mut journal = match &self.data_dir {
            Some(d) => Some(Journal::create(d, &id)?),
            None => None,
        };
        if let Some(j) = journal.as_mut() {
            j.append(&[
                JournalEvent::Created {
                    session_id: id.clone(),
                    config: config.clone(),
                    ts: now(),
                },
                issued(&round),
            ])?;
        }
        let config = Arc::new(config);
        let session = Arc::new(Session {
            id: id.clone(),
            writer: Mutex::new(()),
            journal: Mutex::new(journal),
            view: RwLock::new(Snapshot {
                branches: Arc::new(prefetch(&config, &round)),
                trace: Arc::new(vec![round.incumbent.clone()]),
                round: round.clone(),
                status: Status::AwaitingResponse,
            }),
            config,
        });
        self.sessions.write().unwrap().insert(id.clone(), session);
        Ok(Created {
            session_id: id,
            revision: round.revision,
            query: round.query.clone(),
        })
    }

    /// Accepts `choice` for the query issued at `revision`.
    ///
    /// A prefetched branch for `choice` is used (awaited if still running);
    /// otherwise the next round is computed synchronously. The journal is
    /// synced before the new state becomes visible.
    pub fn submit_response(&self, id: &str, revision: u64, choice: usize) -> Result<Submitted> {
        let s = self.get(id)?;
        let _guard = s.writer.lock().unwrap();
        let snap = s.snapshot();
        if snap.status == Status::Closed {
            return Err(ServiceError::SessionClosed(id.to_string()));
        }
        if revision != snap.round.revision {
            return Err(ServiceError::RevisionConflict {
                current: snap.round.revision,
                requested: revision,
            });
        }
        let q = snap.round.query.q();
        if choice >= q {
            return Err(ServiceError::ChoiceOutOfRange { choice, q });
        }
        s.publish(Snapshot {
            status: Status::Computing,
            ..snap.clone()
        });

        let result = match snap.branches.get(choice).cloned().flatten() {
            Some(branch) => {
                for (c, b) in snap.branches.iter().enumerate() {
                    if c != choice {
                        if let Some(b) = b {
                            b.cancelled.store(true, Ordering::Release);
                        }
                    }
                }
                self.stats.prefetch_hits.fetch_add(1, Ordering::Relaxed);
                branch.wait()
            }
            None => {
                self.stats.sync_computations.fetch_add(1, Ordering::Relaxed);
                next_round(&s.config, &snap.round, choice)
            }
        };
        let next = match result.and_then(|r| {
            s.journal(&[
                JournalEvent::ResponseAccepted {
                    revision,
                    choice,
                    ts: now(),
                },
                issued(&r),
            ])?;
            Ok(r)
        }) {
            Ok(r) => Arc::new(r),
            Err(e) => {
                s.publish(snap);
                return Err(e);
            }
        };

        let mut trace = (*snap.trace).clone();
        trace.push(next.incumbent.clone());
        s.publish(Snapshot {
            branches: Arc::new(prefetch(&s.config, &next)),
            trace: Arc::new(trace),
            round: next.clone(),
            status: Status::AwaitingResponse,
        });
        Ok(Submitted {
            revision: next.revision,
            query: next.query.clone(),
            incumbent: next.incumbent.point.clone(),
            incumbent_mean: next.incumbent.mean,
        })
    }

    pub fn get_recommendation(&self, id: &str) -> Result<RecommendationView> {
        let s = self.get(id)?;
        let snap = s.snapshot();
        let inc = &snap.round.incumbent;
        s.journal(&[JournalEvent::RecommendationServed {
            revision: inc.revision,
            point: inc.point.clone(),
            mean: inc.mean,
            ts: now(),
        }])?;
        Ok(RecommendationView {
            revision: inc.revision,
            point: inc.point.clone(),
            mean: inc.mean,
            trace: (*snap.trace).clone(),
        })
    }

    pub fn get_session(&self, id: &str) -> Result<SessionState> {
        let s = self.get(id)?;
        let snap = s.snapshot();
        let prefetch = (0..s.config.q())
            .map(|c| {
                let st = match snap.branches.get(c).and_then(|b| b.as_ref()) {
                    Some(b) if b.is_done() => PrefetchStatus::Complete,
                    Some(_) => PrefetchStatus::Pending,
                    None => PrefetchStatus::Absent,
                };
                (c, st)
            })
            .collect();
        Ok(SessionState {
            session_id: s.id.clone(),
            revision: snap.round.revision,
            status: snap.status,
            config: (*s.config).clone(),
            pending_query: (snap.status != Status::Closed).then(|| snap.round.query.clone()),
            dataset: snap.round.dataset.to_json(),
            incumbent: snap.round.incumbent.clone(),
            incumbent_trace: (*snap.trace).clone(),
            prefetch,
        })
    }

    /// Stops accepting responses; the session stays readable.
    pub fn close_session(&self, id: &str) -> Result<()> {
        let s = self.get(id)?;
        let _guard = s.writer.lock().unwrap();
        let snap = s.snapshot();
        if snap.status == Status::Closed {
            return Ok(());
        }
        s.journal(&[JournalEvent::Closed {
            revision: snap.round.revision,
            ts: now(),
        }])?;
        s.publish(Snapshot {
            status: Status::Closed,
            branches: Arc::new(Vec::new()),
            ..snap
        });
        Ok(())
    }

    /// Current round (data, hyperparameters, pending query).
    pub fn current_round(&self, id: &str) -> Result<Arc<Round>> {
        Ok(self.get(id)?.snapshot().round)
    }

    pub fn config(&self, id: &str) -> Result<SessionConfig> {
        Ok((*self.get(id)?.config).clone())
    }

    /// Waits for the prefetched branch of `choice`; `None` when prefetching is
    /// off or the session is closed.
    pub fn prefetched_round(&self, id: &str, choice: usize) -> Result<Option<Round>> {
        let snap = self.get(id)?.snapshot();
        match snap.branches.get(choice).cloned().flatten() {
            Some(b) => Ok(Some(b.wait()?)),
            None => Ok(None),
        }
    }

    /// Blocks until every prefetch branch of the current round has finished.
    pub fn wait_for_prefetch(&self, id: &str) -> Result<()> {
        let snap = self.get(id)?.snapshot();
        for b in snap.branches.iter().flatten() {
            let _ = b.wait();
        }
        Ok(())
    }
}

fn issued(r: &Round) -> JournalEvent {
    JournalEvent::QueryIssued {
        revision: r.revision,
        query: r.query.clone(),
        hyper: r.hyper.clone(),
        incumbent: r.incumbent.clone(),
        ts: now(),
    }
}

fn prefetch(cfg: &Arc<SessionConfig>, round: &Arc<Round>) -> Vec<Option<Arc<Branch>>> {
    (0..cfg.q())
        .map(|c| cfg.prefetch.then(|| Branch::spawn(cfg.clone(), round.clone(), c)))
        .collect()
}

/// Rebuilds a session from its journal. A response that was accepted but
/// whose next query never reached the journal is recomputed and appended.
fn restore(path: &Path) -> Result<Arc<Session>> {
    let events = read_events(path)?;
    let bad = |m: &str| ServiceError::Journal(format!("{}: {m}", path.display()));
    let mut it = events.into_iter();
    let (id, config) = match it.next() {
        Some(JournalEvent::Created { session_id, config, .. }) => (session_id, config),
        _ => return Err(bad("first event is not 'created'")),
    };
    let mut dataset = pbo_core::PreferenceDataset::new(config.q())?;
    let mut round: Option<Round> = None;
    let mut trace = Vec::new();
    let mut pending_choice: Option<usize> = None;
    let mut closed = false;
    for e in it {
        match e {
            JournalEvent::QueryIssued {
                revision,
                query,
                hyper,
                incumbent,
                ..
            } => {
                if revision != dataset.len() as u64 || pending_choice.is_some() != (revision > 0) {
                    return Err(bad("query revision out of sequence"));
                }
                pending_choice = None;
                trace.push(incumbent.clone());
                round = Some(Round {
                    revision,
                    dataset: dataset.clone(),
                    hyper,
                    query,
                    incumbent,
                });
            }
            JournalEvent::ResponseAccepted { revision, choice, .. } => {
                let r = round.as_ref().ok_or_else(|| bad("response before first query"))?;
                if revision != r.revision || pending_choice.is_some() {
                    return Err(bad("response revision out of sequence"));
                }
                dataset.push(r.query.clone(), pbo_core::Response(choice))?;
                pending_choice = Some(choice);
            }
            JournalEvent::Closed { .. } => closed = true,
            JournalEvent::RecommendationServed { .. } | JournalEvent::Created { .. } => {}
        }
    }
    let config = Arc::new(config);
    let mut journal = Journal::open(path)?;
    let mut round = round.ok_or_else(|| bad("no query issued"))?;
    if let Some(choice) = pending_choice {
        round = next_round(&config, &round, choice)?;
        journal.append(&[issued(&round)])?;
        trace.push(round.incumbent.clone());
    }
    let round = Arc::new(round);
    let branches = if closed { Vec::new() } else { prefetch(&config, &round) };
    Ok(Arc::new(Session {
        id,
        writer: Mutex::new(()),
        journal: Mutex::new(Some(journal)),
        view: RwLock::new(Snapshot {
            round,
            status: if closed { Status::Closed } else { Status::AwaitingResponse },
            trace: Arc::new(trace),
            branches: Arc::new(branches),
        }),
        config,
    }))
}

/// Path of a session's journal under `dir`.
pub fn session_journal(dir: &Path, id: &str) -> PathBuf {
    journal_path(dir, id)
}
