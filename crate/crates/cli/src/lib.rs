//! Scenario runner behind the `levy-parametrix` command line.

pub mod compare;
pub mod config;
pub mod error;
pub mod runner;
