//! The `sphconv` command-line pipeline: planning, exact targets,
//! distillation, evaluation and the data and picture utilities around them.

pub mod commands;
pub mod config;
pub mod io;
pub mod prep;
pub mod viz;
