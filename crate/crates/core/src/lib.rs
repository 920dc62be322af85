//! Contact-exploiting motion planning for torque-limited planar arms.
//!
//! A lazy weighted-A* search over a joint-angle lattice whose edges are
//! solved by risk-sensitive iLQR over penalty contact dynamics.

pub mod bench;
pub mod contact;
pub mod dynamics;
pub mod geometry;
pub mod lattice;
pub mod search;
pub mod trajopt;
