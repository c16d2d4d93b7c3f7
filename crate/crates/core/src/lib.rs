//! Blocked particle filtering for hidden spatiotemporal Markov random fields
//! whose set of active locations changes over time.

pub mod bench;
pub mod bounds;
pub mod car;
pub mod error;
pub mod filter;
pub mod graph;
pub mod model;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
pub use filter::{
    run_filter, Algorithm, FilterConfig, FilterOutput, LoglikMethod, ObservationFrame,
};
pub use graph::{ClusterPartition, Identifier, RegionalPartition, SpatialLayout, VertexId};
pub use model::{Configuration, HstmrfModel, Neighbors, VertexContext};
pub use rng::{Purpose, RngPolicy, StreamRng};
