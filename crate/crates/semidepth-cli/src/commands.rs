//! Implementations of the experiment subcommands. Every command that
//! produces files also writes the resolved configuration next to them, and
//! all JSON output is byte-stable for a fixed config and seed.

use std::fs;
use std::path::Path;

use serde::Serialize;

use semidepth::diff::fd_check;
use semidepth::error::{Error, Result};
use semidepth::eval::{compute_metrics, format_metrics_table, CropKind, EvalConfig, Metrics};
use semidepth::field::{CameraRig, ImageField, Pyramid, ScalarField, SparseDepthMap};
use semidepth::io::{save_image_pfm, save_image_png, save_scalar_pfm};
use semidepth::lidar::{
    encode_depth_png, occlusion_filter, pointcloud_to_bin, project_points, read_pointcloud_bin,
    save_depth_png,
};
use semidepth::losses::{LossBreakdown, LossWeights, StereoSample, NUM_SCALES};
use semidepth::synth::{make_scene, right_view_raw_gt, scene_hash, SceneSpec};
use semidepth::varopt::{optimize_pair, StepTrace};

use crate::config::{materialize, read_depth_map, read_prediction, ExperimentConfig};

/// Occlusion-filter defaults shared by `lidar-filter` and `ablate`,
/// matched to the parallax magnitude of the built-in rig.
pub const FILTER_WINDOW: usize = 7;
pub const FILTER_REL_TOL: f64 = 0.05;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("json encode: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn mask_image(mask: &[bool], h: usize, w: usize) -> Result<ImageField> {
    ImageField::from_fn(h, w, 1, |i, j, _| if mask[i * w + j] { 1.0 } else { 0.0 })
}

/// Converts an inverse-depth field to depth, clamped to what the 16-bit
/// container can hold; the PFM artifact keeps the unclamped values.
fn depth_for_png(rho: &ScalarField) -> Result<SparseDepthMap> {
    let (h, w) = (rho.height(), rho.width());
    let depth = ScalarField::from_fn(h, w, |i, j| (1.0 / rho.get(i, j)).min(255.99));
    SparseDepthMap::new(depth, vec![true; h * w])
}

/// Renders the configured synthetic scene and writes every part of it.
pub fn synth(cfg: &ExperimentConfig) -> Result<()> {
    let spec = cfg.scene.resolve_spec()?.ok_or_else(|| {
        Error::InvalidConfig("synth needs a synthetic scene source, not input files".into())
    })?;
    let scene = make_scene(&spec)?;
    let (h, w) = (spec.height, spec.width);
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;

    save_image_png(&scene.left, &dir.join("left.png"))?;
    save_image_png(&scene.right, &dir.join("right.png"))?;
    save_image_pfm(&scene.left, &dir.join("left.pfm"))?;
    save_image_pfm(&scene.right, &dir.join("right.pfm"))?;
    save_scalar_pfm(&scene.true_depth_l, &dir.join("true_depth_l.pfm"))?;
    save_scalar_pfm(&scene.true_depth_r, &dir.join("true_depth_r.pfm"))?;
    save_depth_png(&encode_depth_png(&scene.gt_raw)?, &dir.join("gt_raw.png"))?;
    save_depth_png(&encode_depth_png(&scene.gt_clean)?, &dir.join("gt_clean.png"))?;
    save_image_png(
        &mask_image(&scene.visible_l, h, w)?,
        &dir.join("visible_l.png"),
    )?;
    save_image_png(
        &mask_image(&scene.textured_l, h, w)?,
        &dir.join("textured_l.png"),
    )?;
    save_image_png(
        &mask_image(&scene.artifact_labels, h, w)?,
        &dir.join("artifacts.png"),
    )?;
    fs::write(dir.join("scan.bin"), pointcloud_to_bin(&scene.cloud))?;

    #[derive(Serialize)]
    struct Manifest<'a> {
        spec: &'a SceneSpec,
        scene_hash: String,
    }
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            spec: &spec,
            scene_hash: format!("{:016x}", scene_hash(&scene)),
        },
    )?;
    write_json(&dir.join("config.json"), cfg)?;
    println!(
        "scene {}x{} ({} returns) written to {} (hash {:016x})",
        h,
        w,
        scene.cloud.points.len(),
        dir.display(),
        scene_hash(&scene)
    );
    Ok(())
}

#[derive(Serialize)]
struct TraceDoc<'a> {
    initial: &'a LossBreakdown,
    #[serde(rename = "final")]
    final_loss: &'a LossBreakdown,
    steps: &'a [StepTrace],
}

/// Optimizes the inverse-depth pair for the configured sample and writes
/// the fields, quantized depths, loss trace, and (for synthetic scenes)
/// metrics against the true surface.
pub fn optimize(cfg: &ExperimentConfig) -> Result<()> {
    let bundle = materialize(cfg)?;
    let result = optimize_pair(
        &bundle.sample,
        &cfg.weights,
        &cfg.adam,
        cfg.init_rho,
        cfg.seed,
    )?;
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;

    let rho_l = result.rho_l.level(1);
    let rho_r = result.rho_r.level(1);
    save_scalar_pfm(rho_l, &dir.join("rho_l.pfm"))?;
    save_scalar_pfm(rho_r, &dir.join("rho_r.pfm"))?;
    save_depth_png(&encode_depth_png(&depth_for_png(rho_l)?)?, &dir.join("depth_l.png"))?;
    save_depth_png(&encode_depth_png(&depth_for_png(rho_r)?)?, &dir.join("depth_r.png"))?;
    write_json(
        &dir.join("trace.json"),
        &TraceDoc {
            initial: &result.initial,
            final_loss: &result.final_loss,
            steps: &result.steps,
        },
    )?;
    write_json(&dir.join("config.json"), cfg)?;

    if let Some(scene) = &bundle.scene {
        let (h, w) = (scene.spec.height, scene.spec.width);
        let truth = SparseDepthMap::new(scene.true_depth_l.clone(), scene.visible_l.clone())?;
        let pred = ScalarField::from_fn(h, w, |i, j| 1.0 / rho_l.get(i, j));
        let metrics = compute_metrics(&pred, &truth, &cfg.eval)?;
        write_json(&dir.join("metrics.json"), &metrics)?;
        print!(
            "{}",
            format_metrics_table(&[("left vs truth".to_string(), metrics)])
        );
    }
    println!(
        "loss {:.6} -> {:.6} over {} steps; outputs in {}",
        result.initial.total,
        result.final_loss.total,
        result.steps.len(),
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalDoc<'a> {
    pred: &'a Path,
    gt: &'a Path,
    eval: &'a EvalConfig,
}

/// Scores a predicted depth file against a ground-truth depth file. When
/// the prediction is itself sparse (16-bit PNG), scoring is restricted to
/// pixels valid in both maps.
pub fn eval(cfg: &ExperimentConfig, pred_path: &Path, gt_path: &Path) -> Result<()> {
    let (pred, pred_mask) = read_prediction(pred_path)?;
    let mut gt = read_depth_map(gt_path)?;
    if let Some(pm) = pred_mask {
        if pm.len() != gt.mask().len() {
            return Err(Error::ShapeMismatch(format!(
                "prediction {}x{} vs ground truth {}x{}",
                pred.height(),
                pred.width(),
                gt.height(),
                gt.width()
            )));
        }
        let both: Vec<bool> = gt.mask().iter().zip(&pm).map(|(g, p)| *g && *p).collect();
        gt = SparseDepthMap::new(gt.depth().clone(), both)?;
    }
    let metrics = compute_metrics(&pred, &gt, &cfg.eval)?;
    ensure_dir(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("metrics.json"), &metrics)?;
    write_json(
        &cfg.output_dir.join("config.json"),
        &EvalDoc {
            pred: pred_path,
            gt: gt_path,
            eval: &cfg.eval,
        },
    )?;
    print!(
        "{}",
        format_metrics_table(&[("pred".to_string(), metrics)])
    );
    Ok(())
}

#[derive(Serialize)]
struct ProjectDoc<'a> {
    cloud: &'a Path,
    offset: [f64; 3],
    rig: &'a CameraRig,
}

/// Projects a binary point cloud into a sparse depth PNG.
pub fn lidar_project(
    cfg: &ExperimentConfig,
    cloud_path: &Path,
    offset: [f64; 3],
    rig: &CameraRig,
) -> Result<()> {
    let cloud = read_pointcloud_bin(&fs::read(cloud_path)?)?;
    let map = project_points(&cloud, rig, offset)?;
    ensure_dir(&cfg.output_dir)?;
    save_depth_png(&encode_depth_png(&map)?, &cfg.output_dir.join("projected.png"))?;
    write_json(
        &cfg.output_dir.join("config.json"),
        &ProjectDoc {
            cloud: cloud_path,
            offset,
            rig,
        },
    )?;
    println!(
        "projected {} points into {}x{}: {} pixels hit",
        cloud.points.len(),
        rig.height,
        rig.width,
        map.count()
    );
    Ok(())
}

#[derive(Serialize)]
struct FilterDoc<'a> {
    depth: &'a Path,
    window: usize,
    rel_tol: f64,
}

/// Removes occlusion leaks from a sparse depth PNG.
pub fn lidar_filter(
    cfg: &ExperimentConfig,
    depth_path: &Path,
    window: usize,
    rel_tol: f64,
) -> Result<()> {
    let raw = read_depth_map(depth_path)?;
    let filtered = occlusion_filter(&raw, window, rel_tol)?;
    ensure_dir(&cfg.output_dir)?;
    save_depth_png(
        &encode_depth_png(&filtered)?,
        &cfg.output_dir.join("filtered.png"),
    )?;
    write_json(
        &cfg.output_dir.join("config.json"),
        &FilterDoc {
            depth: depth_path,
            window,
            rel_tol,
        },
    )?;
    println!(
        "kept {} of {} returns ({} removed)",
        filtered.count(),
        raw.count(),
        raw.count() - filtered.count()
    );
    Ok(())
}

fn lcg(state: &mut u64) -> f64 {
    *state = state
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    (*state >> 11) as f64 / (1u64 << 53) as f64
}

/// The deterministic random instance the gradient check runs on: a 16x32
/// stereo pair with sparse ground truth on both sides and independent
/// inverse-depth pyramids.
fn gradcheck_instance(
    seed: u64,
) -> Result<(StereoSample, Pyramid<ScalarField>, Pyramid<ScalarField>)> {
    let (h, w) = (16usize, 32usize);
    let mut state = seed;
    let image = |state: &mut u64| ImageField::from_fn(h, w, 3, |_, _, _| lcg(state));
    let left = image(&mut state)?;
    let right = image(&mut state)?;
    let gt = |state: &mut u64| -> Result<SparseDepthMap> {
        let mut map = SparseDepthMap::empty(h, w);
        for i in 0..h {
            for j in 0..w {
                if lcg(state) < 0.12 {
                    map.insert(i, j, 2.0 + 8.0 * lcg(state))?;
                }
            }
        }
        Ok(map)
    };
    let gt_left = gt(&mut state)?;
    let gt_right = gt(&mut state)?;
    let pyramid = |state: &mut u64| -> Result<Pyramid<ScalarField>> {
        let mut levels = Vec::new();
        let (mut lh, mut lw) = (h, w);
        for _ in 0..NUM_SCALES {
            levels.push(ScalarField::from_fn(lh, lw, |_, _| {
                0.1 + 0.75 * lcg(state)
            }));
            lh = lh.div_ceil(2);
            lw = lw.div_ceil(2);
        }
        Pyramid::from_levels(levels)
    };
    let rho_l = pyramid(&mut state)?;
    let rho_r = pyramid(&mut state)?;
    let sample = StereoSample {
        left,
        right,
        gt_left: Some(gt_left),
        gt_right: Some(gt_right),
        rig: CameraRig::new(8.0, 0.25, w, h, [0.0, 0.0, 0.0])?,
    };
    Ok((sample, rho_l, rho_r))
}

/// Compares analytic gradients with central finite differences on a seeded
/// random instance; returns the process exit code.
pub fn gradcheck(cfg: &ExperimentConfig, probes: usize, step: f64, threshold: f64) -> Result<i32> {
    let (sample, rho_l, rho_r) = gradcheck_instance(cfg.seed)?;
    let max_rel = fd_check(&sample, &rho_l, &rho_r, &cfg.weights, step, probes, cfg.seed)?;
    let pass = max_rel < threshold;
    println!(
        "max_rel_error = {max_rel:.3e} (threshold {threshold:.1e}): {}",
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(if pass { 0 } else { 3 })
}

#[derive(Serialize)]
struct AblateRun {
    gt: &'static str,
    consistency: bool,
    metrics: Metrics,
    final_loss: LossBreakdown,
}

#[derive(Serialize)]
struct AblateDoc {
    runs: Vec<AblateRun>,
}

/// Runs the 2x2 grid (raw vs occlusion-filtered ground truth, with and
/// without the left-right consistency term) on a synthetic scene. Both
/// views are supervised, mirroring a two-camera ground-truth setup, and
/// metrics are taken over non-occluded pixels — the population an
/// occlusion-filtered ground truth covers by construction.
pub fn ablate(cfg: &ExperimentConfig, threads: usize) -> Result<()> {
    let spec = cfg.scene.resolve_spec()?.ok_or_else(|| {
        Error::InvalidConfig("ablate needs a synthetic scene source, not input files".into())
    })?;
    let scene = make_scene(&spec)?;
    let raw_l = scene.gt_raw.clone();
    let raw_r = right_view_raw_gt(&scene)?;
    let filt_l = occlusion_filter(&raw_l, FILTER_WINDOW, FILTER_REL_TOL)?;
    let filt_r = occlusion_filter(&raw_r, FILTER_WINDOW, FILTER_REL_TOL)?;

    let cells: Vec<(&'static str, bool, &SparseDepthMap, &SparseDepthMap)> = vec![
        ("raw", false, &raw_l, &raw_r),
        ("raw", true, &raw_l, &raw_r),
        ("filtered", false, &filt_l, &filt_r),
        ("filtered", true, &filt_l, &filt_r),
    ];
    let truth = SparseDepthMap::new(scene.true_depth_l.clone(), scene.visible_l.clone())?;
    let eval_cfg = EvalConfig {
        crop: CropKind::None,
        ..cfg.eval
    };

    let run_cell = |&(gt_name, lr, gt_l, gt_r): &(
        &'static str,
        bool,
        &SparseDepthMap,
        &SparseDepthMap,
    )|
     -> Result<AblateRun> {
        let weights = LossWeights {
            lambda2: if lr { cfg.weights.lambda2 } else { 0.0 },
            ..cfg.weights.clone()
        };
        let sample = StereoSample {
            left: scene.left.clone(),
            right: scene.right.clone(),
            gt_left: Some(gt_l.clone()),
            gt_right: Some(gt_r.clone()),
            rig: spec.rig.clone(),
        };
        let result = optimize_pair(&sample, &weights, &cfg.adam, cfg.init_rho, cfg.seed)?;
        let rho = result.rho_l.level(1);
        let pred = ScalarField::from_fn(rho.height(), rho.width(), |i, j| 1.0 / rho.get(i, j));
        let metrics = compute_metrics(&pred, &truth, &eval_cfg)?;
        Ok(AblateRun {
            gt: gt_name,
            consistency: lr,
            metrics,
            final_loss: result.final_loss,
        })
    };

    let runs: Vec<AblateRun> = if threads > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = cells.iter().map(|cell| scope.spawn(|| run_cell(cell))).collect();
            handles
                .into_iter()
                .map(|j| j.join().expect("ablation worker panicked"))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        cells.iter().map(run_cell).collect::<Result<Vec<_>>>()?
    };

    let rows: Vec<(String, Metrics)> = runs
        .iter()
        .map(|r| {
            (
                format!(
                    "{} GT, LR {}",
                    r.gt,
                    if r.consistency { "on" } else { "off" }
                ),
                r.metrics,
            )
        })
        .collect();
    let best = runs
        .iter()
        .min_by(|a, b| a.metrics.abs_rel.total_cmp(&b.metrics.abs_rel))
        .expect("four runs");
    let best_line = format!(
        "best Abs Rel: {} GT, LR {}",
        best.gt,
        if best.consistency { "on" } else { "off" }
    );

    ensure_dir(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("ablate.json"), &AblateDoc { runs })?;
    write_json(&cfg.output_dir.join("config.json"), cfg)?;
    print!("{}", format_metrics_table(&rows));
    println!("{best_line}");
    Ok(())
}
