//! Detection of starting cyclists from segmented image sequences.
//!
//! The pipeline turns per-frame silhouette masks into motion history images
//! (MHIs) cropped around the cyclist's head, classifies each MHI as
//! *waiting* vs. *moving* with one of two back-ends, and evaluates detectors
//! scene-wise by the first threshold crossing of the moving probability.
//!
//! - [`silhouette`]: class maps, binary masks, head-anchored ROI crops, frame stacks
//! - [`mhi`]: motion history images with linear decay, bilinear resizing, file formats
//! - [`mchog`]: gradient cell histograms computed on MHIs (no block normalization)
//! - [`svm`]: linear SVM training, Platt probability calibration, model files
//! - [`resnet`]: a small configurable residual network trained with RMSProp
//! - [`eval`]: scene outcomes, threshold sweeps, mean detection time
//! - [`synth`]: scripted synthetic scenes with waiting/starting/moving phases
//! - [`pipeline`]: glue that chains the stages for whole scenes

pub mod eval;
pub mod mchog;
pub mod mhi;
pub mod pipeline;
pub mod resnet;
pub mod silhouette;
pub mod svm;
pub mod synth;
