//! Core engine for analysing task-parallel execution traces.
//!
//! The crate turns a line-oriented trace into a [`Dataset`]: paired intervals,
//! an execution tree keyed by primitive context, summed area tables over time,
//! static interval trees and a parent/child index. Every view-feeding query
//! (utilization, Gantt rasters, histograms, counter rate statistics,
//! aggregated Gantt bars, dependency chains) runs against that immutable
//! bundle.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. File IO, persistence and serving live in the `tracescope` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod dataset;
pub mod index;
pub mod ingest;
pub mod model;
pub mod pixels;
pub mod query;
pub mod tracegen;
pub mod tree;

pub use dataset::{BuildOptions, Dataset, DatasetError};
pub use ingest::{ingest_text, pair_events, parse_event, parse_trace, IngestError, RawTrace, TraceEvent};
pub use model::{
    CounterId, CounterSample, DatasetMeta, Guid, Interner, Interval, Location, LocationId, PrimitiveContext,
    PrimitiveId, TimePoint, Warning, WarningCode,
};
pub use pixels::PixelGrid;
pub use tree::{build_execution_tree, ContextNode, ExecutionTree, NodeId};
