//! Interactive preference-optimization sessions for human decision-makers.
//!
//! A session issues a query, waits for the decision-maker's choice and
//! answers with the next query and the current recommendation. While the
//! person deliberates, the next query is computed for every possible answer,
//! so a response is usually acknowledged without running the optimizer.

pub mod engine;
pub mod error;
pub mod http;
pub mod journal;
pub mod session;

pub use engine::{first_round, next_round, replay_choices, Incumbent, Round, SessionConfig};
pub use error::{ErrorBody, Result, ServiceError};
pub use session::{SessionManager, SessionState, Status};
