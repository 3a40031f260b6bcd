//! Executables and supporting library for the `rrt` runtime.
//!
//! Three binaries ship from this crate:
//!
//! * `node` — a standalone daemon that builds the objects listed in a
//!   manifest file, exposes them, and serves until killed;
//! * `p2p` — a ring-routing demonstration whose application code runs
//!   unchanged either across two runtimes over loopback HTTP or entirely
//!   within one process, printing the routing trace either way;
//! * `bench` — a call-cost harness measuring per-call latency for
//!   no-argument calls, calls carrying ten structured arguments, and the
//!   marginal cost of transmission-policy resolution.
//!
//! Everything the binaries do is reachable through this library, so
//! integration tests drive the same code paths the executables use.

pub mod bench;
pub mod demo;
pub mod manifest;
pub mod p2p;
