//! Streaming engine that infers multi-person trajectories, individual
//! activities, pairwise interactions, and collective (group) activities from
//! per-frame person detections, via a three-stage hypergraph optimization:
//! activity-aware tracking, joint interaction recognition with occlusion
//! recovery, and collective activity inference. Ships with a synthetic
//! scenario simulator and a CLEAR MOT / accuracy evaluation harness.

pub mod config;
pub mod error;
pub mod eval;
pub mod grouping;
pub mod hypergraph;
pub mod interaction;
pub mod io;
pub mod pipeline;
pub mod render;
pub mod sim;
pub mod tracking;
pub mod types;

pub use error::{Error, Result};
