//! Simulation and exact-computation toolkit for random walks on discrete
//! cylinders, their disconnection times, lattice potential theory, random
//! interlacements and the Brownian local-time limit law.

pub mod disconnect;
pub mod error;
pub mod harness;
pub mod interlace;
pub mod lattice;
pub mod limitlaw;
pub mod percolation;
pub mod potential;
pub mod rng;
pub mod stats;
pub mod unionfind;
pub mod walk;

pub use error::{Error, Result};
pub use lattice::{BoxSpec, Geometry, Point, PointSet, VertexSet};
