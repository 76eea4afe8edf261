//! Modality-agnostic 3D deformable image registration.
//!
//! The crate covers the volume data model and I/O, differentiable losses,
//! U-Net registration networks with hand-written backward passes, synthetic
//! multi-modal training pairs, the teacher/student/test-time training
//! drivers, and the evaluation stack.

pub mod affine;
pub mod diff;
pub mod error;
pub mod eval;
pub mod filter;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod nn;
pub mod resample;
pub mod synth;
pub mod train;
pub mod volume;
pub mod warp;

pub use error::{Error, Result};
pub use resample::{pad_or_resample_for_network, restore_native, FitMode, ResampleRecord};
pub use volume::{DisplacementField, Mask3D, Shape3, Spacing, Volume3D};
