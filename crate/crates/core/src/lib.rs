//! Post-processing for contour-driven panoptic segmentation.
//!
//! Turns per-pixel semantic probabilities, instance-contour probabilities and
//! center offsets into instance and panoptic maps, and provides the training
//! losses (with gradients), ground-truth contour generation, evaluation
//! metrics and a synthetic scene generator used to test all of it.

pub mod contour;
pub mod dbscan;
pub mod derive;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod panoptic;
pub mod pipeline;
pub mod raster;
pub mod refine;
pub mod stf;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{
    argmax_semantic, ClassCatalog, ClassId, ClassInfo, ContourMask, ContourProbMap, Grid,
    InstanceIds, InstanceLabelMap, InstanceRecord, Mask, OffsetField, PanopticMap, PanopticPixel,
    SemanticLabelMap, SemanticProbMap,
};
