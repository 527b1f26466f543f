//! Simulator and distributed-optimization library for collaborative task
//! processing in a two-tier UAV network.
//!
//! Mobile sensing agents (MSAs) roam a rectangular region and accumulate
//! task bits at rates driven by points of interest. Mobile compute agents
//! (MCAs) estimate the spatial task field from queue observations, partition
//! the region into latency-metric Voronoi cells, and reposition themselves
//! with two distributed gradient algorithms: consensus projected gradient
//! descent on total offloading cost, followed by capacity balancing that
//! drives Voronoi workloads proportional to per-agent capacities.

pub mod channel;
pub mod config;
pub mod engine;
pub mod geometry;
pub mod optimize;
pub mod output;
pub mod taskfield;
pub mod workload;

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
