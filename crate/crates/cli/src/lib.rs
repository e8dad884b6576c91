//! Library half of the benchmark driver, so the timing protocol,
//! verification sweep, and demo network are testable without spawning the
//! binary.

pub mod bench;
pub mod config;
pub mod demo;
pub mod engines;
pub mod verify;
