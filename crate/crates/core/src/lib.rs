//! Detection and analysis of nanoparticles in grayscale electron-microscopy images.
//!
//! The library is organized around a recursive detection loop: an image is
//! thresholded (Otsu by default), cleaned up with binary morphology, labeled
//! into connected components, and measured; detected regions are then masked
//! out with the image mean and the loop repeats at a lower threshold to
//! surface fainter particles. Supporting modules provide bit-exact PGM I/O,
//! an exact Euclidean distance transform with marker-based watershed as an
//! alternative separation strategy, a deterministic synthetic image generator
//! with exact ground truth, and point-based detection scoring.

pub mod evaluate;
pub mod labeling;
pub mod morphology;
pub mod pipeline;
pub mod raster;
pub mod regionprops;
pub mod synthgen;
pub mod threshold;
pub mod watershed;

pub use evaluate::{GroundTruth, MatchReport};
pub use labeling::Connectivity;
pub use morphology::StructuringElement;
pub use pipeline::{DetectConfig, DetectResult, Separation, ThresholdMode};
pub use raster::{BinaryMask, GrayImage, Histogram256, LabelMap};
pub use regionprops::{Particle, ParticleRow};
pub use synthgen::{SynthConfig, SynthTruth};
