//! HTTP JSON service for running a live pre-screening round.
//!
//! A coordinator creates a session on a graph, asks for the next edge to
//! query, reports the real-world answer and repeats until the budget is
//! spent, then finalizes to get the matching. Each session is persisted as
//! an append-only event log and rebuilt from it on restart.
//!
//! | method | path | body |
//! |--------|------|------|
//! | POST | `/sessions` | [`CreateSession`] |
//! | GET | `/sessions` | |
//! | GET | `/sessions/{id}` | |
//! | GET | `/sessions/{id}/recommendation` | |
//! | POST | `/sessions/{id}/responses` | `{edge_id, response}` |
//! | POST | `/sessions/{id}/finalize` | |
//! | GET | `/sessions/{id}/events` | |
//! | GET, POST | `/graphs` | `{graph}` |
//! | GET | `/graphs/{id}` | |
//!
//! Errors are `{code, message, detail}` with status 400 (malformed input),
//! 401, 404, 409 (finalized session, edge already queried) or 422 (edge
//! unknown or not legal to query).

pub mod api;
pub mod error;
pub mod session;
pub mod store;

pub use api::{router, AppState, ServiceConfig};
pub use error::{ApiError, ApiResult, ErrorBody};
pub use session::{CreateSession, Event, Session, SessionView};
