//! Live trial sessions: a durable event-log store and the HTTP API a
//! monitoring client talks to.

pub mod api;
pub mod store;

pub use api::{router, serve, NewObservation, SessionList, SessionSummary, SessionView};
pub use store::{Observation, Page, SessionId, SessionRecord, SessionStore, StoreError, TrajectoryPoint};
