mod data;
mod explain;
mod model;

pub use data::{featurize, graph_stats, ingest, synth};
pub use explain::{explain, report};
pub use model::{evaluate, model_file, train};
