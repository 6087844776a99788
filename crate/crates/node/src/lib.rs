//! Controller and peer nodes.
//!
//! [`controller::Controller`] and [`agent::Agent`] hold all protocol state and
//! perform no I/O. The [`daemon`] module drives them over UDP and HTTP;
//! [`sim`] drives them over an in-memory network on a virtual clock.

pub mod agent;
pub mod api;
pub mod audit;
pub mod config;
pub mod controller;
pub mod daemon;
pub mod keys;
pub mod provision;
pub mod records;
pub mod sim;
pub mod time;
