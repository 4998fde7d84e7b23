//! Turns teleoperated robot trajectory logs into grounded multiple-choice
//! visual question answering items, and scores model endpoints on them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annotate;
pub mod config;
pub mod datasetio;
pub mod evalharness;
pub mod geom;
pub mod ground;
pub mod keyframe;
pub mod par;
pub mod phaseseg;
pub mod pipeline;
pub mod qgen;
pub mod rng;
pub mod trajmodel;
