//! Secure intent-based management plane: Noise IK tunnels between
//! stakeholders and a central controller, the controller's certificate
//! registry, and the intent model the tunnels carry.
//!
//! Everything here is sans-IO. Sockets, clocks and randomness are supplied by
//! the caller so that the protocol logic can be driven deterministically.

pub mod crypto;
pub mod intent;
pub mod pki;
pub mod plane;
pub mod tunnel;
