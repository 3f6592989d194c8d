//! File formats, synthetic fixtures, the benchmark harness and report writers
//! around [`gtvsr_core`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fixtures;
pub mod harness;
pub mod io;
pub mod report;

pub use gtvsr_core as core;
