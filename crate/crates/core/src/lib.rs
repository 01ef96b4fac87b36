//! Survey cleaning, baseline need labeling, question reduction and
//! clustering of coded survey responses.

pub mod baseline;
pub mod clustering;
pub mod evaluation;
pub mod ingest;
pub mod linalg;
pub mod pipeline;
pub mod reduction;
pub mod rule;
pub mod schema;
pub mod synth;
