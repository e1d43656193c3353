pub mod autoencoder;
pub mod data;
pub mod experiments;
pub mod neural;
pub mod par;
pub mod pca;
pub mod rng;
pub mod tensor;

pub use par::Execution;
pub use rng::RngStream;
pub use tensor::{Matrix, Vector};
