//! Scene-level wiring from silhouettes to probability traces.
//!
//! A scene's frame `t` gets a motion history image built from the `depth`
//! most recent frames, every one cropped at frame `t`'s head label. Using
//! the current label for the whole window keeps a moving cyclist's past
//! positions visible inside the window as a motion streak instead of
//! re-centering it away frame by frame. MHIs exist from frame `depth - 1`
//! on; traces are padded with probability zero before that.

use thiserror::Error;

use crate::eval::{EvalError, Phase, ProbabilityTrace, SceneAnnotation};
use crate::mchog::{self, MchogError, MchogParams};
use crate::mhi::{generate_mhi, resize_bilinear, MhiError, MotionHistoryImage, Raster8};
use crate::resnet::train::ValScene;
use crate::resnet::{ResNet, ResNetError};
use crate::silhouette::{crop_roi, stack, BinaryFrame, LoadedScene, RoiSpec, SceneMeta, SilhouetteError};
use crate::svm::{predict_proba, LinearSvmModel, PlattCalibration, SvmError, SvmModelFile, TrainSet};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Silhouette(#[from] SilhouetteError),
    #[error(transparent)]
    Mhi(#[from] MhiError),
    #[error(transparent)]
    Mchog(#[from] MchogError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    ResNet(#[from] ResNetError),
    #[error("scene has {frames} frames but {heads} head labels")]
    HeadCountMismatch { frames: usize, heads: usize },
}

/// SVM training label: phase I is the negative class, phases II and III
/// merge into the positive one.
pub fn phase_label(phase: Phase) -> i8 {
    match phase {
        Phase::Waiting => -1,
        Phase::Starting | Phase::Moving => 1,
    }
}

/// Network class index with the same merge: 0 = waiting, 1 = moving.
pub fn class_index(phase: Phase) -> usize {
    match phase {
        Phase::Waiting => 0,
        Phase::Starting | Phase::Moving => 1,
    }
}

/// Crops the history window ending at frame `t` with every frame anchored
/// at frame `t`'s head label, newest first.
fn roi_window(
    frames: &[BinaryFrame],
    meta: &SceneMeta,
    t: usize,
    depth: usize,
    roi: &RoiSpec,
) -> Result<Vec<BinaryFrame>, PipelineError> {
    let (head_x, head_y) = meta.head_positions[t];
    let mut window = Vec::with_capacity(depth);
    for source in &frames[t + 1 - depth..=t] {
        window.push(crop_roi(source, head_x, head_y, roi)?);
    }
    Ok(window)
}

/// One MHI per frame from `first_frame = depth - 1` to the scene end.
#[derive(Debug, Clone)]
pub struct SceneMhis {
    pub first_frame: usize,
    pub images: Vec<MotionHistoryImage>,
}

impl SceneMhis {
    /// Total frame count of the scene the MHIs were computed from.
    pub fn scene_len(&self) -> usize {
        self.first_frame + self.images.len()
    }
}

pub fn scene_mhis(
    meta: &SceneMeta,
    frames: &[BinaryFrame],
    roi: &RoiSpec,
    depth: usize,
) -> Result<SceneMhis, PipelineError> {
    if meta.head_positions.len() != frames.len() {
        return Err(PipelineError::HeadCountMismatch {
            frames: frames.len(),
            heads: meta.head_positions.len(),
        });
    }
    if depth == 0 {
        return Err(SilhouetteError::EmptyStack.into());
    }
    if frames.len() < depth {
        return Err(SilhouetteError::InsufficientHistory {
            needed: depth,
            available: frames.len(),
        }
        .into());
    }
    let mut images = Vec::with_capacity(frames.len() - depth + 1);
    for t in depth - 1..frames.len() {
        let window = roi_window(frames, meta, t, depth, roi)?;
        images.push(generate_mhi(&stack(&window, depth)?));
    }
    Ok(SceneMhis {
        first_frame: depth - 1,
        images,
    })
}

pub fn scene_mhis_loaded(
    scene: &LoadedScene,
    roi: &RoiSpec,
    depth: usize,
) -> Result<SceneMhis, PipelineError> {
    scene_mhis(&scene.meta, &scene.frames, roi, depth)
}

/// Resize to the target size unless the image already has it.
fn fit_to(
    image: &MotionHistoryImage,
    width: u32,
    height: u32,
) -> Result<std::borrow::Cow<'_, MotionHistoryImage>, MhiError> {
    if image.width() == width && image.height() == height {
        Ok(std::borrow::Cow::Borrowed(image))
    } else {
        Ok(std::borrow::Cow::Owned(resize_bilinear(image, width, height)?))
    }
}

/// The MCHOG + linear SVM + Platt path from an MHI to `P_moving`.
#[derive(Debug, Clone)]
pub struct MchogDetector {
    pub params: MchogParams,
    pub model: LinearSvmModel,
    pub calibration: PlattCalibration,
}

impl MchogDetector {
    pub fn from_model_file(file: &SvmModelFile) -> Self {
        Self {
            params: file.descriptor,
            model: file.model(),
            calibration: file.calibration(),
        }
    }

    /// `P_moving` for one MHI, resizing to the descriptor input size.
    pub fn probability(&self, image: &MotionHistoryImage) -> Result<f64, PipelineError> {
        let fitted = fit_to(image, self.params.input_w, self.params.input_h)?;
        let descriptor = mchog::descriptor(&fitted, &self.params)?;
        let (_, p_moving) = predict_proba(&self.model, &self.calibration, &descriptor.values)?;
        Ok(p_moving)
    }

    /// Scene trace aligned to the annotation, zero before `first_frame`.
    pub fn trace(&self, mhis: &SceneMhis) -> Result<ProbabilityTrace, PipelineError> {
        let mut p_moving = vec![0.0; mhis.first_frame];
        for image in &mhis.images {
            p_moving.push(self.probability(image)?);
        }
        Ok(ProbabilityTrace::new(p_moving)?)
    }
}

/// Appends one sample per `stride`-th frame of the scene, returning how
/// many samples were added. Labels come from the per-frame phase.
pub fn append_scene_samples(
    set: &mut TrainSet,
    mhis: &SceneMhis,
    annotation: &SceneAnnotation,
    params: &MchogParams,
    stride: usize,
) -> Result<usize, PipelineError> {
    let stride = stride.max(1);
    let mut added = 0;
    for (i, image) in mhis.images.iter().enumerate().step_by(stride) {
        let frame = mhis.first_frame + i;
        let fitted = fit_to(image, params.input_w, params.input_h)?;
        let descriptor = mchog::descriptor(&fitted, params)?;
        set.push(phase_label(annotation.phase(frame)), &descriptor.values)?;
        added += 1;
    }
    Ok(added)
}

/// 8-bit network input at the configured size.
pub fn mhi_to_raster(
    image: &MotionHistoryImage,
    width: u32,
    height: u32,
) -> Result<Raster8, PipelineError> {
    let fitted = fit_to(image, width, height)?;
    Ok(Raster8::from_mhi(&fitted))
}

/// Per-frame network inputs plus everything frame-aligned scoring needs.
pub fn val_scene(
    mhis: &SceneMhis,
    annotation: &SceneAnnotation,
    width: u32,
    height: u32,
) -> Result<ValScene, PipelineError> {
    if annotation.len() != mhis.scene_len() {
        return Err(EvalError::LengthMismatch {
            trace: mhis.scene_len(),
            annotation: annotation.len(),
        }
        .into());
    }
    let mut images = Vec::with_capacity(mhis.images.len());
    for image in &mhis.images {
        images.push(mhi_to_raster(image, width, height)?);
    }
    Ok(ValScene {
        images,
        first_frame: mhis.first_frame,
        annotation: annotation.clone(),
    })
}

/// Whole-scene trace for the network path.
pub fn resnet_trace(
    model: &ResNet,
    mhis: &SceneMhis,
    annotation: &SceneAnnotation,
) -> Result<ProbabilityTrace, PipelineError> {
    let config = model.config();
    let scene = val_scene(
        mhis,
        annotation,
        config.input_w as u32,
        config.input_h as u32,
    )?;
    Ok(crate::resnet::train::scene_trace(model, &scene, 32)?)
}
