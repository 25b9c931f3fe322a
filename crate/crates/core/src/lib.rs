//! Closed-form safety filters built from a soft-minimum composition of
//! higher-order control barrier functions.

pub mod cascade;
pub mod composer;
pub mod controller;
pub mod error;
pub mod qp;
pub mod hocbf;
pub mod sim;
pub mod smoothfield;

pub use error::{Error, Result};
