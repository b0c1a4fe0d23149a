//! Persistence, HTTP serving and command-line tools around `tracescope-core`.
//!
//! * [`store`] bundles traces into an on-disk catalog and loads them back.
//! * [`service`] turns query parameters into core queries; the API and the
//!   CLI export share it.
//! * [`api`] is the axum router under `/api/v1`.
//! * [`cli`] implements the `tracescope` binary.

pub mod api;
pub mod cli;
pub mod error;
pub mod service;
pub mod store;

pub use error::{ApiError, ErrorKind};
pub use store::{BundleOutcome, Store, StoreError};
