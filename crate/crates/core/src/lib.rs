//! Differential phase contrast (DPC) workbench for plane-wave ultrasound.
//!
//! The crate synthesizes pulse-echo data through thin sound-speed aberrators,
//! beamforms per-tilt complex images, builds angularly compounded DPC images
//! with an adjustable shear depth, and evaluates a paraxial wave-acoustic
//! forward model for comparison.

pub mod beamform;
pub mod domain;
pub mod dpc;
pub mod error;
pub mod forward;
pub mod image;
pub mod io;
pub mod presets;
pub mod stats;
pub mod synth;

pub use beamform::{analytic_signal, compound_bmode, das_beamform, BeamformedStack};
pub use domain::{validate_scene, AberratorProfile, ImageGrid, MediumConfig, Scene, SequenceConfig, TransducerConfig};
pub use dpc::{compound_dpc, focus_map, pair_phase, shear_untilt, DpcImage, DpcRecipe, FocusMap, PhasePairMap};
pub use error::{Error, Result};
pub use image::{Roi, ScalarImage};
pub use synth::{gen_scatterers, synthesize_rf, RfDataset, ScattererField};
