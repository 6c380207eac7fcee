//! The subcommand implementations.
//!
//! Each command reads the dataset through the manifest written by
//! `synth`, works scene-parallel where it can, and writes its artifacts
//! atomically with the configuration echoed beside them.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use startdet_core::eval::{
    select_operating_point, sweep, write_curve_csv, write_trace_csv, ProbabilityTrace,
    SceneAnnotation,
};
use startdet_core::mchog::{
    cell_histograms, descriptor_length, gradients, read_samples, write_samples, MchogParams,
};
use startdet_core::mhi::{export_png, resize_bilinear, write_mhi};
use startdet_core::pipeline::{
    append_scene_samples, class_index, mhi_to_raster, phase_label, resnet_trace,
    scene_mhis_loaded, val_scene, MchogDetector, PipelineError, SceneMhis,
};
use startdet_core::resnet::train::{train, write_train_log_csv, ResnetTrainData};
use startdet_core::resnet::ResNet;
use startdet_core::silhouette::{load_scene_dir, LoadedScene, RoiSpec, SilhouetteError};
use startdet_core::svm::{
    fit_platt, train_fingerprint, train_svm, SvmModelFile, SvmParams, TrainSet,
};
use startdet_core::synth::{make_dataset, render_scene, write_scene_dir};

use crate::config::PipelineConfig;
use crate::manifest::{
    echo_config, load_manifest, write_atomic, write_dir_via_temp, write_via_temp,
    write_json_atomic, Manifest, SceneEntry, MANIFEST_FILE,
};

/// Generate, render and store the train/val/test scene splits.
pub fn cmd_synth(config: &PipelineConfig, out: &Path) -> Result<()> {
    let d = &config.dataset;
    let splits = make_dataset(
        &d.distribution,
        d.n_scenes,
        (d.train_ratio, d.val_ratio, d.test_ratio),
        d.seed,
    )?;

    let render_split = |name: &str, scripts: &[startdet_core::synth::SceneScript]| {
        scripts
            .par_iter()
            .enumerate()
            .map(|(i, script)| {
                let rel = format!("{name}/scene_{i:03}");
                let scene = render_scene(script)
                    .with_context(|| format!("rendering {rel}"))?;
                write_dir_via_temp(&out.join(&rel), |tmp| {
                    Ok(write_scene_dir(&scene, tmp)?)
                })?;
                Ok(SceneEntry {
                    dir: rel,
                    seed: script.seed,
                    frames: script.duration() as usize,
                })
            })
            .collect::<Result<Vec<_>>>()
    };

    let manifest = Manifest {
        seed: d.seed,
        train: render_split("train", &splits.train)?,
        val: render_split("val", &splits.val)?,
        test: render_split("test", &splits.test)?,
        config: config.clone(),
    };
    write_json_atomic(&out.join(MANIFEST_FILE), &manifest)?;
    println!(
        "wrote {} scenes ({} train / {} val / {} test) to {}",
        d.n_scenes,
        manifest.train.len(),
        manifest.val.len(),
        manifest.test.len(),
        out.display()
    );
    Ok(())
}

fn scene_paths<'m>(manifest: &'m Manifest, split: Option<&str>) -> Result<Vec<&'m SceneEntry>> {
    match split {
        Some(name) => Ok(manifest.split(name)?.iter().collect()),
        None => Ok(manifest.all().collect()),
    }
}

/// A scene plus its annotation, loaded from a dataset directory.
fn load_scene(dataset: &Path, entry: &SceneEntry) -> Result<(LoadedScene, SceneAnnotation)> {
    let scene = load_scene_dir(&dataset.join(&entry.dir))
        .with_context(|| format!("loading scene {}", entry.dir))?;
    let annotation = scene.annotation()?;
    Ok((scene, annotation))
}

/// MHIs for one scene, or `None` (with a log line) when the scene is too
/// short to fill even one history window.
fn try_scene_mhis(
    entry: &SceneEntry,
    scene: &LoadedScene,
    roi: &RoiSpec,
    depth: usize,
) -> Result<Option<SceneMhis>> {
    match scene_mhis_loaded(scene, roi, depth) {
        Ok(mhis) => Ok(Some(mhis)),
        Err(PipelineError::Silhouette(SilhouetteError::InsufficientHistory {
            needed,
            available,
        })) => {
            log::warn!(
                "skipping {}: {available} frames cannot fill a window of {needed}",
                entry.dir
            );
            Ok(None)
        }
        Err(e) => Err(e).with_context(|| format!("building MHIs for {}", entry.dir)),
    }
}

/// Write every scene's motion history images as `mhi_FFFFFF.mhi` files,
/// named by the frame each image describes.
pub fn cmd_mhi(
    config: &PipelineConfig,
    dataset: &Path,
    out: &Path,
    png: bool,
    split: Option<&str>,
) -> Result<()> {
    let manifest = load_manifest(dataset)?;
    let depth = config.mhi.depth as usize;
    let entries = scene_paths(&manifest, split)?;
    let written: usize = entries
        .par_iter()
        .map(|entry| {
            let (scene, _) = load_scene(dataset, entry)?;
            let Some(mhis) = try_scene_mhis(entry, &scene, &config.roi, depth)? else {
                return Ok(0);
            };
            let dir = out.join(&entry.dir);
            for (i, image) in mhis.images.iter().enumerate() {
                let frame = mhis.first_frame + i;
                write_via_temp(&dir.join(format!("mhi_{frame:06}.mhi")), |tmp| {
                    Ok(write_mhi(tmp, image)?)
                })?;
                if png {
                    write_via_temp(&dir.join(format!("mhi_{frame:06}.png")), |tmp| {
                        Ok(export_png(tmp, image)?)
                    })?;
                }
            }
            Ok(mhis.images.len())
        })
        .sum::<Result<usize>>()?;
    echo_config(out, config)?;
    println!("wrote {written} MHIs to {}", out.display());
    Ok(())
}

/// Labelled descriptor samples for one scene, in frame order.
fn scene_samples(
    entry: &SceneEntry,
    scene: &LoadedScene,
    annotation: &SceneAnnotation,
    config: &PipelineConfig,
    stride: usize,
) -> Result<Vec<(i8, Vec<f64>)>> {
    let Some(mhis) = try_scene_mhis(entry, scene, &config.roi, config.mhi.depth as usize)?
    else {
        return Ok(Vec::new());
    };
    let mut set = TrainSet::new(descriptor_length(&config.mchog));
    append_scene_samples(&mut set, &mhis, annotation, &config.mchog, stride)?;
    Ok((0..set.n_samples())
        .map(|i| (set.label(i), set.features(i).to_vec()))
        .collect())
}

/// Extract one `label,v0,v1,...` sample file per split.
pub fn cmd_features(config: &PipelineConfig, dataset: &Path, out: &Path) -> Result<()> {
    let manifest = load_manifest(dataset)?;
    for name in ["train", "val", "test"] {
        // The stride thins training data only; calibration and scoring
        // always see every frame.
        let stride = if name == "train" { config.eval.frame_stride } else { 1 };
        let rows: Vec<Vec<(i8, Vec<f64>)>> = manifest
            .split(name)?
            .par_iter()
            .map(|entry| {
                let (scene, annotation) = load_scene(dataset, entry)?;
                scene_samples(entry, &scene, &annotation, config, stride)
            })
            .collect::<Result<_>>()?;
        let mut buf = Vec::new();
        let flat: Vec<(i8, &[f64])> = rows
            .iter()
            .flatten()
            .map(|(label, values)| (*label, values.as_slice()))
            .collect();
        write_samples(&mut buf, &flat)?;
        write_atomic(&out.join(format!("{name}.csv")), &buf)?;
        println!("{name}: {} samples", flat.len());
    }
    echo_config(out, config)?;
    Ok(())
}

/// Train the linear model on the train split's samples and calibrate its
/// probabilities on the validation split's.
pub fn cmd_train_svm(
    config: &PipelineConfig,
    features: &Path,
    out: &Path,
) -> Result<()> {
    let read_split = |name: &str| -> Result<Vec<(i8, Vec<f64>)>> {
        let path = features.join(format!("{name}.csv"));
        let file = fs::File::open(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(read_samples(std::io::BufReader::new(file))?)
    };
    let train_rows = read_split("train")?;
    let val_rows = read_split("val")?;
    let set = TrainSet::from_rows(descriptor_length(&config.mchog), &train_rows)?;
    let fit = train_svm(&set, &config.svm)?;
    log::info!(
        "trained on {} samples in {} epochs, objective {:.6}",
        set.n_samples(),
        fit.epochs,
        fit.objective_by_epoch.last().copied().unwrap_or(f64::NAN)
    );

    let decisions: Vec<f64> = val_rows
        .iter()
        .map(|(_, x)| fit.model.decision(x))
        .collect::<Result<_, _>>()?;
    let labels: Vec<i8> = val_rows.iter().map(|(label, _)| *label).collect();
    let platt = fit_platt(&decisions, &labels)?;

    let file = SvmModelFile {
        descriptor: config.mchog,
        mhi_depth: config.mhi.depth,
        roi: config.roi,
        weights: fit.model.weights.clone(),
        bias: fit.model.bias,
        c: config.svm.c,
        platt_a: platt.a,
        platt_b: platt.b,
        train_fingerprint: train_fingerprint(&set),
    };
    write_via_temp(out, |tmp| Ok(file.save(tmp)?))?;
    println!(
        "model written to {} (calibration a {:.4}, b {:.4})",
        out.display(),
        platt.a,
        platt.b
    );
    Ok(())
}

/// One grid-search result row.
struct SweepRow {
    params: MchogParams,
    c: f64,
    threshold: f64,
    f1: f64,
    mean_delay_s: Option<f64>,
}

/// Per-frame gradient fields for one scene, resized to the descriptor
/// input, plus everything scoring needs.
struct SweepScene {
    fields: Vec<startdet_core::mchog::GradientField>,
    first_frame: usize,
    annotation: SceneAnnotation,
}

fn sweep_scene(
    entry: &SceneEntry,
    dataset: &Path,
    config: &PipelineConfig,
) -> Result<Option<SweepScene>> {
    let (scene, annotation) = load_scene(dataset, entry)?;
    let Some(mhis) = try_scene_mhis(entry, &scene, &config.roi, config.mhi.depth as usize)?
    else {
        return Ok(None);
    };
    let (w, h) = (config.mchog.input_w, config.mchog.input_h);
    let fields = mhis
        .images
        .iter()
        .map(|image| {
            let fitted = if image.width() == w && image.height() == h {
                std::borrow::Cow::Borrowed(image)
            } else {
                std::borrow::Cow::Owned(resize_bilinear(image, w, h)?)
            };
            Ok(gradients(&fitted, config.mchog.signed))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(SweepScene {
        fields,
        first_frame: mhis.first_frame,
        annotation,
    }))
}

/// Grid-search descriptor geometry and C, scoring each candidate at its
/// best validation threshold.
pub fn cmd_sweep_mchog(config: &PipelineConfig, dataset: &Path, out: &Path) -> Result<()> {
    let manifest = load_manifest(dataset)?;
    let thresholds = config.thresholds();

    // The gradient field of a resized MHI is identical for every grid
    // point, so it is computed once per frame up front. Only the cell
    // binning and the SVM are re-run per combination.
    let load_split = |name: &str| -> Result<Vec<SweepScene>> {
        let scenes: Vec<Option<SweepScene>> = manifest
            .split(name)?
            .par_iter()
            .map(|entry| sweep_scene(entry, dataset, config))
            .collect::<Result<_>>()?;
        Ok(scenes.into_iter().flatten().collect())
    };
    let train_scenes = load_split("train")?;
    let val_scenes = load_split("val")?;
    if train_scenes.is_empty() || val_scenes.is_empty() {
        bail!("sweep needs at least one usable scene in both train and val splits");
    }

    let mut combos = Vec::new();
    for &cell_w in &config.sweep.cell_w {
        for &cell_h in &config.sweep.cell_h {
            for &n_bins in &config.sweep.n_bins {
                let params = MchogParams {
                    cell_w,
                    cell_h,
                    n_bins,
                    ..config.mchog
                };
                params.validate().with_context(|| {
                    format!("sweep cell {cell_w}x{cell_h}, {n_bins} bins")
                })?;
                combos.push(params);
            }
        }
    }

    let mut rows: Vec<SweepRow> = combos
        .par_iter()
        .map(|params| -> Result<Vec<SweepRow>> {
            let mut set = TrainSet::new(descriptor_length(params));
            for scene in &train_scenes {
                for (i, field) in scene
                    .fields
                    .iter()
                    .enumerate()
                    .step_by(config.eval.frame_stride)
                {
                    let frame = scene.first_frame + i;
                    let values = cell_histograms(field, params)?.values;
                    set.push(phase_label(scene.annotation.phase(frame)), &values)?;
                }
            }
            let val_descriptors: Vec<Vec<Vec<f64>>> = val_scenes
                .iter()
                .map(|scene| {
                    scene
                        .fields
                        .iter()
                        .map(|field| Ok(cell_histograms(field, params)?.values))
                        .collect::<Result<_>>()
                })
                .collect::<Result<_>>()?;

            let mut rows = Vec::with_capacity(config.sweep.c.len());
            for &c in &config.sweep.c {
                let svm_params = SvmParams { c, ..config.svm };
                let fit = train_svm(&set, &svm_params)?;
                let mut traces = Vec::with_capacity(val_scenes.len());
                for (scene, descriptors) in val_scenes.iter().zip(&val_descriptors) {
                    let mut p = vec![0.0; scene.first_frame];
                    // Calibration is fit per candidate on its own
                    // validation decisions, mirroring the final pipeline.
                    p.extend(
                        descriptors
                            .iter()
                            .map(|x| fit.model.decision(x))
                            .collect::<Result<Vec<_>, _>>()?,
                    );
                    traces.push(p);
                }
                let decisions: Vec<f64> = traces
                    .iter()
                    .zip(&val_scenes)
                    .flat_map(|(p, s)| p[s.first_frame..].iter().copied())
                    .collect();
                let labels: Vec<i8> = val_scenes
                    .iter()
                    .flat_map(|s| {
                        (s.first_frame..s.annotation.len())
                            .map(|f| phase_label(s.annotation.phase(f)))
                    })
                    .collect();
                let platt = fit_platt(&decisions, &labels)?;
                let probability_traces: Vec<ProbabilityTrace> = traces
                    .into_iter()
                    .zip(&val_scenes)
                    .map(|(mut p, s)| {
                        for v in &mut p[s.first_frame..] {
                            *v = platt.probability(*v);
                        }
                        ProbabilityTrace::new(p)
                    })
                    .collect::<Result<_, _>>()?;
                let pairs: Vec<(&ProbabilityTrace, &SceneAnnotation)> = probability_traces
                    .iter()
                    .zip(val_scenes.iter().map(|s| &s.annotation))
                    .collect();
                let curve = sweep(&pairs, &thresholds)?;
                let best = select_operating_point(&curve)
                    .context("threshold sweep produced no points")?;
                rows.push(SweepRow {
                    params: *params,
                    c,
                    threshold: best.threshold,
                    f1: best.f1,
                    mean_delay_s: best.mean_delay_s,
                });
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    // Best first: F1 descending, then mean delay ascending with missing
    // delays last, then the grid axes for a stable order.
    rows.sort_by(|a, b| {
        b.f1.total_cmp(&a.f1)
            .then_with(|| match (a.mean_delay_s, b.mean_delay_s) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            })
            .then(a.params.cell_w.cmp(&b.params.cell_w))
            .then(a.params.cell_h.cmp(&b.params.cell_h))
            .then(a.params.n_bins.cmp(&b.params.n_bins))
            .then(a.c.total_cmp(&b.c))
    });

    let mut csv = String::from("cell_w,cell_h,n_bins,c,threshold,f1,mean_delay_s\n");
    for row in &rows {
        let delay = row.mean_delay_s.map(|d| format!("{d:.6}")).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{:.6},{}\n",
            row.params.cell_w, row.params.cell_h, row.params.n_bins, row.c, row.threshold,
            row.f1, delay
        ));
    }
    write_atomic(out, csv.as_bytes())?;
    if let Some(best) = rows.first() {
        println!(
            "{} rows; best: cell {}x{}, {} bins, C {} -> F1 {:.4} at threshold {}",
            rows.len(),
            best.params.cell_w,
            best.params.cell_h,
            best.params.n_bins,
            best.c,
            best.f1,
            best.threshold
        );
    }
    write_json_atomic(&sidecar_config_path(out)?, config)?;
    Ok(())
}

/// Train the network detector; keep the best validation checkpoint.
pub fn cmd_train_resnet(config: &PipelineConfig, dataset: &Path, out: &Path) -> Result<()> {
    let manifest = load_manifest(dataset)?;
    let depth = config.mhi.depth as usize;
    let (w, h) = (config.resnet.input_w as u32, config.resnet.input_h as u32);

    let train_parts: Vec<(Vec<startdet_core::mhi::Raster8>, Vec<usize>)> = manifest
        .train
        .par_iter()
        .map(|entry| {
            let (scene, annotation) = load_scene(dataset, entry)?;
            let Some(mhis) = try_scene_mhis(entry, &scene, &config.roi, depth)? else {
                return Ok((Vec::new(), Vec::new()));
            };
            let mut images = Vec::with_capacity(mhis.images.len());
            let mut labels = Vec::with_capacity(mhis.images.len());
            for (i, image) in mhis.images.iter().enumerate() {
                images.push(mhi_to_raster(image, w, h)?);
                labels.push(class_index(annotation.phase(mhis.first_frame + i)));
            }
            Ok((images, labels))
        })
        .collect::<Result<_>>()?;
    let val_scenes = manifest
        .val
        .par_iter()
        .map(|entry| {
            let (scene, annotation) = load_scene(dataset, entry)?;
            let mhis = try_scene_mhis(entry, &scene, &config.roi, depth)?;
            Ok(mhis.map(|m| val_scene(&m, &annotation, w, h)).transpose()?)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut train_images = Vec::new();
    let mut train_labels = Vec::new();
    for (images, labels) in train_parts {
        train_images.extend(images);
        train_labels.extend(labels);
    }
    let data = ResnetTrainData {
        train_images,
        train_labels,
        val_scenes,
    };
    log::info!(
        "{} training images, {} validation scenes",
        data.train_images.len(),
        data.val_scenes.len()
    );

    let mut model = ResNet::new(config.resnet.clone(), config.train.seed)?;
    let regime = config.train.regime(config.thresholds());
    let outcome = train(&mut model, &data, &regime)?;
    let best = outcome.best_checkpoint();

    write_via_temp(&out.join("model.ckpt"), |tmp| {
        Ok(best.model.save_checkpoint(tmp)?)
    })?;
    let mut log_buf = Vec::new();
    write_train_log_csv(&mut log_buf, &outcome.checkpoints)?;
    write_atomic(&out.join("train_log.csv"), &log_buf)?;
    echo_config(out, config)?;
    println!(
        "best checkpoint at iteration {}: val F1 {:.4} at threshold {} ({} checkpoints)",
        best.iteration,
        best.f1,
        best.threshold,
        outcome.checkpoints.len()
    );
    Ok(())
}

/// Either trained detector, told apart by file extension.
enum Model {
    Linear(Box<SvmModelFile>),
    Network(Box<ResNet>),
}

fn load_model(path: &Path) -> Result<Model> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => Ok(Model::Linear(Box::new(SvmModelFile::load(path)?))),
        Some("ckpt") => Ok(Model::Network(Box::new(ResNet::load_checkpoint(path)?))),
        _ => bail!(
            "{}: unknown model kind, expected a .json or .ckpt file",
            path.display()
        ),
    }
}

/// Score one scene with either detector. Scenes too short for a single
/// history window get an all-zero trace: the detector never saw them.
fn model_trace(
    model: &Model,
    config: &PipelineConfig,
    entry: &SceneEntry,
    scene: &LoadedScene,
    annotation: &SceneAnnotation,
) -> Result<ProbabilityTrace> {
    // The linear model file carries its own history geometry; the
    // checkpoint's input size is fixed by the network config it embeds.
    let (roi, depth) = match model {
        Model::Linear(file) => (file.roi, file.mhi_depth as usize),
        Model::Network(_) => (config.roi, config.mhi.depth as usize),
    };
    let Some(mhis) = try_scene_mhis(entry, scene, &roi, depth)? else {
        return Ok(ProbabilityTrace::new(vec![0.0; annotation.len()])?);
    };
    let trace = match model {
        Model::Linear(file) => MchogDetector::from_model_file(file).trace(&mhis)?,
        Model::Network(net) => resnet_trace(net, &mhis, annotation)?,
    };
    Ok(trace)
}

/// Sweep detection thresholds for a trained model over one split.
pub fn cmd_evaluate(
    config: &PipelineConfig,
    dataset: &Path,
    model_path: &Path,
    split: &str,
    out: &Path,
) -> Result<()> {
    let manifest = load_manifest(dataset)?;
    let model = load_model(model_path)?;
    let scored: Vec<(ProbabilityTrace, SceneAnnotation)> = manifest
        .split(split)?
        .par_iter()
        .map(|entry| {
            let (scene, annotation) = load_scene(dataset, entry)?;
            let trace = model_trace(&model, config, entry, &scene, &annotation)?;
            Ok((trace, annotation))
        })
        .collect::<Result<_>>()?;
    if scored.is_empty() {
        bail!("split {split:?} has no scenes");
    }

    let pairs: Vec<(&ProbabilityTrace, &SceneAnnotation)> =
        scored.iter().map(|(t, a)| (t, a)).collect();
    let curve = sweep(&pairs, &config.thresholds())?;
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, &curve)?;
    write_atomic(out, &buf)?;
    write_json_atomic(&sidecar_config_path(out)?, config)?;

    let best = select_operating_point(&curve).context("empty threshold sweep")?;
    let delay = best
        .mean_delay_s
        .map(|d| format!("{d:.3} s"))
        .unwrap_or_else(|| "n/a".into());
    println!(
        "{} scenes; best F1 {:.4} at threshold {} (mean detection delay {delay})",
        scored.len(),
        best.f1,
        best.threshold
    );
    Ok(())
}

/// Write one scene's per-frame probability trace as CSV.
pub fn cmd_trace(
    config: &PipelineConfig,
    dataset: &Path,
    model_path: &Path,
    scene_dir: &str,
    out: &Path,
) -> Result<()> {
    let manifest = load_manifest(dataset)?;
    let entry = manifest
        .all()
        .find(|e| e.dir == scene_dir)
        .with_context(|| format!("scene {scene_dir:?} is not in the manifest"))?;
    let model = load_model(model_path)?;
    let (scene, annotation) = load_scene(dataset, entry)?;
    let trace = model_trace(&model, config, entry, &scene, &annotation)?;
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, &trace, &annotation)?;
    write_atomic(out, &buf)?;
    let peak = trace.values().iter().cloned().fold(0.0, f64::max);
    println!(
        "{}: {} frames, peak probability {peak:.4}",
        entry.dir,
        trace.len()
    );
    Ok(())
}

/// `curve.csv` gets its echo as `curve.config.json`.
fn sidecar_config_path(out: &Path) -> Result<PathBuf> {
    let stem = out
        .file_stem()
        .with_context(|| format!("{} has no file name", out.display()))?;
    Ok(out.with_file_name(format!("{}.config.json", stem.to_string_lossy())))
}
