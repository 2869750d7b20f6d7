//! File formats, experiment runner and command-line front end for
//! [`fsic_core`].

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod episode_io;
pub mod error;
pub mod predictions;
pub mod runner;
pub mod selftest;

pub use error::{Error, Result};
