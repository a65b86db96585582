//! Analytical memory-hierarchy model for operator-graph workloads on a SIMD core
//! with an L1 scratchpad, a software-managed LLC, and DRAM.

pub mod config;
pub mod costmodel;
pub mod graph;
pub mod mapper;
pub mod report;
pub mod residency;
pub mod sweep;
pub mod synth;
pub mod units;
