//! Test-time adaptation engine for zero-shot medical image segmentation.

pub mod ablation;
pub mod backends;
pub mod eval;
pub mod image_ops;
pub mod io;
pub mod pipeline;
pub mod prompt_boost;
pub mod search_space;
pub mod task;
pub mod tpe;
pub mod types;
pub mod validator;
