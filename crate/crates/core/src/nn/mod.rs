//! Registration networks: layers, the U-Net, the optimizer and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod network;
pub mod scalar;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, read_checkpoint_header, save_checkpoint, CheckpointHeader};
pub use layers::Features;
pub use network::{ForwardCache, NetworkConfig, NetworkMode, RegistrationNetwork, TensorInfo};
pub use scalar::Scalar;
