pub mod crf;
pub mod inference;
pub mod labeling;
pub mod losses;
pub mod metrics;
pub mod noise;
pub mod prediction;
pub mod probability;
pub mod render;
pub mod rng;
pub mod sampler;
pub mod schema;
