//! Simulation, reconstruction and geometric self-calibration for symmetric
//! multi-linear-trajectory CT.
//!
//! The crate covers the whole loop: analytic phantoms are projected along
//! `T` rotated linear segments with optional misalignment and photon noise,
//! every segment is reconstructed on a common grid, opposite segment pairs
//! are registered with a bow-tie windowed phase correlation, and the pair
//! offsets are converted into a source-distance error and a trajectory
//! shift that correct the geometry. The same registration estimates the
//! center-of-rotation offset of a conventional rotated scan.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod config;
pub mod error;
pub mod fft;
pub mod geometry;
pub mod image;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod projector;
pub mod recon;
pub mod registration;
pub mod vec2;

pub use calibration::{apply_correction, run_calibration, CalibrationResult, MaskParams};
pub use error::{Error, Result};
pub use geometry::{fov_radius, segment_layout, visible_angles, GeometryParams, Pose, ScanGeometry, VisibleAngles};
pub use image::{ImageGrid, SegmentImage};
pub use phantom::{line_integral, rasterize, Ellipse, EllipsePhantom, Preset};
pub use projector::{apply_poisson_noise, forward_project_segment, ErrorSet, NoiseModel, Sinogram};
pub use recon::rct::{RctGeometry, RctSinogram, ScanMode};
pub use recon::{assemble_smlct, reconstruct_segment, FilterSpec};
pub use registration::{bow_tie_mask, gcc_phat_vw, peak_offset, BowTieMask, CcsMap, OffsetEstimate};
pub use vec2::Vec2;
