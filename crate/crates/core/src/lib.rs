//! Active sensing and object retrieval in a confined voxel shelf.

pub mod belief;
pub mod bench;
pub mod camera;
pub mod error;
pub mod executor;
pub mod fas;
pub mod gripper;
pub mod grid;
pub mod mcts;
pub mod metrics;
pub mod reachability;
pub mod scene;
pub mod sensing;
pub mod snapshot;
pub mod trace;

pub use error::{Error, Result};
