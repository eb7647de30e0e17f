//! Idea landscapes: spoken ideas become trees on category islands that a
//! user can walk between.

pub mod cli;
pub mod engine;
pub mod geometry;
pub mod layout;
pub mod metrics;
pub mod model;
pub mod navigation;
pub mod organizer;
pub mod service;
pub mod session_log;
pub mod synth;
