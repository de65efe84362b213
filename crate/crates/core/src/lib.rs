pub mod channel;
pub mod cli;
pub mod coincidence;
pub mod config;
pub mod decoy;
pub mod error;
pub mod events;
pub mod keyrate;
pub mod pdtc;
pub mod quad;
pub mod rng;
pub mod satellite;
pub mod selftest;
pub mod snrf;
