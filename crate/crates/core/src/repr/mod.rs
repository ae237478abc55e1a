//! Segment embeddings from (start raster, end raster) pairs.
//!
//! Each raster goes through its own multilayer perceptron; the two projected
//! outputs are concatenated and L2-normalized. The encoder is trained with a
//! supervised contrastive objective on augmented expert samples.

mod encoder;
mod io;
mod loss;
mod train;

pub use encoder::{encode, Architecture, Branch, Dense, Embedding, EncoderParams, SparseInput};
pub use io::{load_params, read_params, save_params, write_params};
pub use loss::supcon_loss;
pub use train::{train, TrainConfig, TrainOutcome};
