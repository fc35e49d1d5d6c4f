//! HTTP/JSON gateway over the DCX twin: an event-sourced engine, a
//! single-writer coordinator, the axum API, plot tables and the scenario
//! runner.

pub mod api;
pub mod coordinator;
pub mod engine;
pub mod log;
pub mod plots;
pub mod scenario;
