//! RMSProp training with periodic scene-level validation.
//!
//! Every `validation_every` iterations the current network scores each
//! validation scene frame by frame, the threshold sweep runs over the
//! resulting traces, and a checkpoint records the model together with its
//! best validation F1 and mean detection delay. Training returns the whole
//! checkpoint series plus the index of the best one (highest F1, ties broken
//! by smaller delay, then by earlier iteration).

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BnMode, ResNet, ResNetError, Tensor};
use crate::eval::{self, ProbabilityTrace, SceneAnnotation};
use crate::mhi::Raster8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropHyper {
    pub learning_rate: f64,
    /// Accumulator decay, usually written rho.
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropHyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// One RMSProp update: `acc <- rho*acc + (1-rho)*g^2`, then
/// `p <- p - lr*g/sqrt(acc + eps)`, element-wise.
pub fn rmsprop_step(params: &mut [f64], grads: &[f64], acc: &mut [f64], hyper: &RmsPropHyper) {
    assert_eq!(params.len(), grads.len(), "rmsprop shapes");
    assert_eq!(params.len(), acc.len(), "rmsprop accumulator shape");
    for i in 0..params.len() {
        let g = grads[i];
        acc[i] = hyper.decay * acc[i] + (1.0 - hyper.decay) * g * g;
        params[i] -= hyper.learning_rate * g / (acc[i] + hyper.epsilon).sqrt();
    }
}

#[derive(Debug, Clone)]
pub struct TrainRegime {
    pub hyper: RmsPropHyper,
    pub batch_size: usize,
    pub iterations: usize,
    pub validation_every: usize,
    pub seed: u64,
    /// Detection thresholds swept during validation.
    pub thresholds: Vec<f64>,
}

impl Default for TrainRegime {
    fn default() -> Self {
        Self {
            hyper: RmsPropHyper::default(),
            batch_size: 10,
            iterations: 2000,
            validation_every: 250,
            seed: 0,
            thresholds: eval::default_thresholds(),
        }
    }
}

/// A validation scene: one image per frame from `first_frame` on, plus the
/// full annotation. Frames before `first_frame` (where no image stack can
/// exist yet) score probability zero.
#[derive(Debug, Clone)]
pub struct ValScene {
    pub images: Vec<Raster8>,
    pub first_frame: usize,
    pub annotation: SceneAnnotation,
}

#[derive(Debug, Clone)]
pub struct ResnetTrainData {
    pub train_images: Vec<Raster8>,
    /// 0 = waiting, 1 = moving; parallel to `train_images`.
    pub train_labels: Vec<usize>,
    pub val_scenes: Vec<ValScene>,
}

#[derive(Debug, Clone)]
pub struct CheckpointRecord {
    pub iteration: usize,
    /// Training loss of the batch that completed this iteration.
    pub loss: f64,
    pub f1: f64,
    pub mean_delay_s: Option<f64>,
    pub threshold: f64,
    pub model: ResNet,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoints: Vec<CheckpointRecord>,
    /// Index into `checkpoints` of the selected model.
    pub best: usize,
    /// `(iteration, loss)` for every iteration.
    pub loss_history: Vec<(usize, f64)>,
}

impl TrainOutcome {
    pub fn best_checkpoint(&self) -> &CheckpointRecord {
        &self.checkpoints[self.best]
    }
}

fn batch_tensor(
    images: &[&Raster8],
    input_h: usize,
    input_w: usize,
) -> Result<Tensor, ResNetError> {
    let mut data = Vec::with_capacity(images.len() * input_h * input_w);
    for image in images {
        if image.width as usize != input_w || image.height as usize != input_h {
            return Err(ResNetError::ShapeMismatch(format!(
                "image {}x{} does not match the configured {}x{} input",
                image.width, image.height, input_w, input_h
            )));
        }
        data.extend(image.to_unit_f64());
    }
    Ok(Tensor::from_vec(images.len(), 1, input_h, input_w, data))
}

/// Scores every frame of a scene and returns the trace aligned to the
/// annotation, padding the pre-history frames with probability zero.
pub fn scene_trace(
    model: &ResNet,
    scene: &ValScene,
    max_batch: usize,
) -> Result<ProbabilityTrace, ResNetError> {
    let (input_h, input_w) = (model.config().input_h, model.config().input_w);
    let expected = scene.first_frame + scene.images.len();
    if expected != scene.annotation.len() {
        return Err(ResNetError::ShapeMismatch(format!(
            "scene with {} frames but images for {}..{}",
            scene.annotation.len(),
            scene.first_frame,
            expected
        )));
    }
    let mut p_moving = vec![0.0; scene.first_frame];
    for chunk in scene.images.chunks(max_batch.max(1)) {
        let refs: Vec<&Raster8> = chunk.iter().collect();
        let x = batch_tensor(&refs, input_h, input_w)?;
        let probs = model.predict(&x)?;
        for bi in 0..chunk.len() {
            p_moving.push(probs.data[bi * model.config().n_classes + 1]);
        }
    }
    Ok(ProbabilityTrace::new(p_moving).expect("probabilities are in [0, 1]"))
}

fn validate_model(
    model: &ResNet,
    scenes: &[ValScene],
    thresholds: &[f64],
) -> Result<(f64, Option<f64>, f64), ResNetError> {
    let mut traces = Vec::with_capacity(scenes.len());
    for scene in scenes {
        traces.push(scene_trace(model, scene, 32)?);
    }
    let pairs: Vec<(&ProbabilityTrace, &SceneAnnotation)> = traces
        .iter()
        .zip(scenes)
        .map(|(t, s)| (t, &s.annotation))
        .collect();
    let curve = eval::sweep(&pairs, thresholds)
        .map_err(|e| ResNetError::ShapeMismatch(format!("validation sweep: {e}")))?;
    let point = eval::select_operating_point(&curve)
        .ok_or_else(|| ResNetError::ShapeMismatch("empty threshold sweep".into()))?;
    Ok((point.f1, point.mean_delay_s, point.threshold))
}

/// Picks the checkpoint with the highest F1; ties prefer the smaller mean
/// delay (a missing delay loses), then the earlier iteration.
fn best_checkpoint_index(records: &[CheckpointRecord]) -> usize {
    let mut best = 0;
    for (i, record) in records.iter().enumerate().skip(1) {
        let b = &records[best];
        let better = record.f1 > b.f1
            || (record.f1 == b.f1
                && record.mean_delay_s.unwrap_or(f64::INFINITY)
                    < b.mean_delay_s.unwrap_or(f64::INFINITY));
        if better {
            best = i;
        }
    }
    best
}

pub fn train(
    model: &mut ResNet,
    data: &ResnetTrainData,
    regime: &TrainRegime,
) -> Result<TrainOutcome, ResNetError> {
    if data.train_images.is_empty() {
        return Err(ResNetError::ShapeMismatch("no training images".into()));
    }
    if data.train_images.len() != data.train_labels.len() {
        return Err(ResNetError::ShapeMismatch(format!(
            "{} training images with {} labels",
            data.train_images.len(),
            data.train_labels.len()
        )));
    }
    if regime.batch_size == 0 || regime.iterations == 0 {
        return Err(ResNetError::BadConfig(
            "batch size and iteration count must be at least 1".into(),
        ));
    }

    let (input_h, input_w) = (model.config().input_h, model.config().input_w);
    let mut rng = ChaCha8Rng::seed_from_u64(regime.seed);
    let mut acc: Vec<Vec<f64>> = Vec::new();
    model.visit_params(&mut |_, values, _| acc.push(vec![0.0; values.len()]));

    let mut checkpoints = Vec::new();
    let mut loss_history = Vec::with_capacity(regime.iterations);

    for iteration in 1..=regime.iterations {
        let indices: Vec<usize> = (0..regime.batch_size)
            .map(|_| rng.gen_range(0..data.train_images.len()))
            .collect();
        let refs: Vec<&Raster8> = indices.iter().map(|&i| &data.train_images[i]).collect();
        let labels: Vec<usize> = indices.iter().map(|&i| data.train_labels[i]).collect();

        let x = batch_tensor(&refs, input_h, input_w)?;
        let loss = model.loss_and_grads(&x, &labels, BnMode::Train)?;
        if !loss.is_finite() {
            return Err(ResNetError::DivergenceDetected { iteration, loss });
        }
        loss_history.push((iteration, loss));

        let mut slot = 0;
        model.visit_params(&mut |_, values, grads| {
            rmsprop_step(values, grads, &mut acc[slot], &regime.hyper);
            slot += 1;
        });

        let due = iteration % regime.validation_every == 0 || iteration == regime.iterations;
        if due && !data.val_scenes.is_empty() {
            let (f1, mean_delay_s, threshold) =
                validate_model(model, &data.val_scenes, &regime.thresholds)?;
            let mut snapshot = model.clone();
            snapshot.clear_caches();
            checkpoints.push(CheckpointRecord {
                iteration,
                loss,
                f1,
                mean_delay_s,
                threshold,
                model: snapshot,
            });
        }
    }

    if checkpoints.is_empty() {
        // No validation scenes: keep the final model as the only checkpoint.
        let mut snapshot = model.clone();
        snapshot.clear_caches();
        let (iteration, loss) = *loss_history.last().expect("at least one iteration");
        checkpoints.push(CheckpointRecord {
            iteration,
            loss,
            f1: 0.0,
            mean_delay_s: None,
            threshold: 0.0,
            model: snapshot,
        });
    }
    let best = best_checkpoint_index(&checkpoints);
    Ok(TrainOutcome {
        checkpoints,
        best,
        loss_history,
    })
}

/// `iteration,loss,val_f1,val_mean_delay_s,threshold` per checkpoint; the
/// delay cell stays empty when no true positive existed.
pub fn write_train_log_csv<W: Write>(
    mut out: W,
    records: &[CheckpointRecord],
) -> std::io::Result<()> {
    writeln!(out, "iteration,loss,val_f1,val_mean_delay_s,threshold")?;
    for r in records {
        let delay = r
            .mean_delay_s
            .map(|d| format!("{d}"))
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration, r.loss, r.f1, delay, r.threshold
        )?;
    }
    Ok(())
}
