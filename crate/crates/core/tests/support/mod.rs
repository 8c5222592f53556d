//! Shared oracles for the integration tests.
#![allow(dead_code)]

pub mod oracle;
