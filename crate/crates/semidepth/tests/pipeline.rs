//! End-to-end chain: render a scene, optimize the inverse-depth fields for a
//! short budget, push every artifact through its on-disk format, and score
//! the reloaded prediction against the scene's true depth.

use semidepth::eval::{compute_metrics, CropKind, EvalConfig};
use semidepth::field::{ScalarField, SparseDepthMap};
use semidepth::io::{load_scalar_pfm, save_image_png, save_scalar_pfm};
use semidepth::lidar::{
    encode_depth_png, load_depth_png, pointcloud_to_bin, read_pointcloud_bin, save_depth_png,
};
use semidepth::losses::LossWeights;
use semidepth::synth::{make_scene, GtSelection, SceneSpec};
use semidepth::varopt::{optimize_pair, AdamConfig};

#[test]
fn scene_to_files_to_metrics_round_trip() {
    let scene = make_scene(&SceneSpec::default_scene()).unwrap();
    let sample = scene.to_sample(GtSelection::Clean);
    let adam = AdamConfig {
        lr0: 0.02,
        plateau_steps: 240,
        halve_every: 80,
        total_steps: 400,
        ..AdamConfig::default()
    };
    let result = optimize_pair(&sample, &LossWeights::default(), &adam, 0.2, 17).unwrap();

    assert_eq!(result.steps.len(), adam.total_steps);
    assert!(
        result.final_loss.total < result.initial.total,
        "optimization did not reduce the objective: {} -> {}",
        result.initial.total,
        result.final_loss.total
    );

    let dir = tempfile::tempdir().unwrap();
    let rho = result.rho_l.level(1);
    let (h, w) = (rho.height(), rho.width());

    // Inverse depth as PFM: 32-bit storage, so reloads agree to f32 grain.
    let rho_path = dir.path().join("rho_l.pfm");
    save_scalar_pfm(rho, &rho_path).unwrap();
    let rho_back = load_scalar_pfm(&rho_path).unwrap();
    let pfm_err = rho
        .data()
        .iter()
        .zip(rho_back.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(pfm_err <= 1e-6, "PFM round trip drift {pfm_err}");

    // Depth as 16-bit PNG: quantized to 1/256 m, sentinel-free here because
    // every pixel carries a prediction.
    let depth = ScalarField::from_fn(h, w, |i, j| 1.0 / rho.get(i, j));
    let dense = SparseDepthMap::new(depth.clone(), vec![true; h * w]).unwrap();
    let png_path = dir.path().join("depth_l.png");
    save_depth_png(&encode_depth_png(&dense).unwrap(), &png_path).unwrap();
    let decoded_png = load_depth_png(&png_path).unwrap();
    assert_eq!(decoded_png.width, w);
    assert_eq!(decoded_png.height, h);
    let decoded = semidepth::lidar::decode_depth_png(&decoded_png).unwrap();
    let mut png_err = 0.0f64;
    for i in 0..h {
        for j in 0..w {
            assert!(decoded.is_valid(i, j));
            png_err = png_err.max((decoded.depth_at(i, j) - depth.get(i, j)).abs());
        }
    }
    assert!(png_err <= 1.0 / 512.0, "PNG16 round trip drift {png_err}");

    // The rendered pair itself survives PNG export.
    save_image_png(&scene.left, &dir.path().join("left.png")).unwrap();

    // Score the reloaded prediction against the scene's true surface over
    // textured pixels visible in both views; a short budget still has to
    // land in the right depth range.
    let mask: Vec<bool> = (0..h * w)
        .map(|k| scene.textured_l[k] && scene.visible_l[k])
        .collect();
    let truth = SparseDepthMap::new(scene.true_depth_l.clone(), mask).unwrap();
    let pred = ScalarField::from_fn(h, w, |i, j| decoded.depth_at(i, j));
    let cfg = EvalConfig {
        crop: CropKind::None,
        ..EvalConfig::default()
    };
    let metrics = compute_metrics(&pred, &truth, &cfg).unwrap();
    assert!(
        metrics.abs_rel < 0.35,
        "short run landed far from the surface: Abs Rel {}",
        metrics.abs_rel
    );
    assert!(metrics.rmse.is_finite() && metrics.delta1 > 0.0);

    // The binary scan container quantizes to f32 once; after that the
    // write/read cycle is byte-stable.
    let bin_path = dir.path().join("scan.bin");
    let bytes = pointcloud_to_bin(&scene.cloud);
    std::fs::write(&bin_path, &bytes).unwrap();
    let cloud_back = read_pointcloud_bin(&std::fs::read(&bin_path).unwrap()).unwrap();
    assert_eq!(cloud_back.points.len(), scene.cloud.points.len());
    assert_eq!(pointcloud_to_bin(&cloud_back), bytes);
}

#[test]
fn identical_runs_produce_identical_traces() {
    let scene = make_scene(&SceneSpec::default_scene()).unwrap();
    let sample = scene.to_sample(GtSelection::Raw);
    let adam = AdamConfig {
        lr0: 0.02,
        plateau_steps: 40,
        halve_every: 20,
        total_steps: 60,
        ..AdamConfig::default()
    };
    let a = optimize_pair(&sample, &LossWeights::default(), &adam, 0.2, 9).unwrap();
    let b = optimize_pair(&sample, &LossWeights::default(), &adam, 0.2, 9).unwrap();
    assert_eq!(a.final_loss.total.to_bits(), b.final_loss.total.to_bits());
    assert_eq!(a.steps.len(), b.steps.len());
    for (x, y) in a.steps.iter().zip(&b.steps) {
        assert_eq!(x.loss.to_bits(), y.loss.to_bits());
        assert_eq!(x.lr.to_bits(), y.lr.to_bits());
        assert_eq!((x.step, x.scale), (y.step, y.scale));
    }
    assert_eq!(
        a.rho_l.level(1).data(),
        b.rho_l.level(1).data(),
        "final fields differ between identical runs"
    );
}
