//! Experiment configuration: the JSON schema, flag overrides, validation,
//! and materialization of the scene source into a runnable stereo sample.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use semidepth::error::{Error, Result};
use semidepth::eval::EvalConfig;
use semidepth::field::{CameraRig, ScalarField, SparseDepthMap};
use semidepth::io::{load_image_png, load_scalar_pfm};
use semidepth::lidar::{decode_depth_png, load_depth_png};
use semidepth::losses::{LossWeights, StereoSample};
use semidepth::synth::{make_scene, GtSelection, SceneSpec, SynthScene};
use semidepth::varopt::{AdamConfig, RHO_MAX};

/// Which ground-truth map drives the supervised term on synthetic scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GtChoice {
    None,
    Clean,
    Raw,
}

impl From<GtChoice> for GtSelection {
    fn from(c: GtChoice) -> Self {
        match c {
            GtChoice::None => GtSelection::None,
            GtChoice::Clean => GtSelection::Clean,
            GtChoice::Raw => GtSelection::Raw,
        }
    }
}

/// Where the stereo pair comes from: a built-in scene name, a full inline
/// scene description, or pre-rendered files on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneSource {
    Named(String),
    Spec(SceneSpec),
    Files {
        left: PathBuf,
        right: PathBuf,
        rig: CameraRig,
        #[serde(default)]
        gt_left: Option<PathBuf>,
        #[serde(default)]
        gt_right: Option<PathBuf>,
    },
}

impl SceneSource {
    /// The synthetic scene description, if this source is synthetic.
    pub fn resolve_spec(&self) -> Result<Option<SceneSpec>> {
        match self {
            SceneSource::Named(name) => match name.as_str() {
                "default" => Ok(Some(SceneSpec::default_scene())),
                "lidar-benchmark" => Ok(Some(SceneSpec::lidar_benchmark())),
                other => Err(Error::InvalidConfig(format!(
                    "unknown scene name {other:?}; expected \"default\" or \"lidar-benchmark\""
                ))),
            },
            SceneSource::Spec(spec) => Ok(Some(spec.clone())),
            SceneSource::Files { .. } => Ok(None),
        }
    }
}

/// One experiment, fully described. Serialized next to every command's
/// outputs so a run can be reproduced from its artifacts alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scene: SceneSource,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub eval: EvalConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Constant inverse-depth value the optimizer starts from.
    pub init_rho: f64,
    /// Ground-truth variant used for supervision on synthetic scenes.
    pub gt: GtChoice,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: SceneSource::Named("default".into()),
            weights: LossWeights::default(),
            // Direct optimization of the inverse-depth fields wants a much
            // larger rate than the library's net-parameter default.
            adam: AdamConfig {
                lr0: 0.02,
                ..AdamConfig::default()
            },
            eval: EvalConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 17,
            init_rho: 0.2,
            gt: GtChoice::Clean,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(spec) = self.scene.resolve_spec()? {
            spec.validate()?;
        }
        if let SceneSource::Files { rig, .. } = &self.scene {
            rig.validate()?;
        }
        self.weights.validate()?;
        self.adam.validate()?;
        self.eval.validate()?;
        if !(self.init_rho > 0.0 && self.init_rho < RHO_MAX) {
            return Err(Error::InvalidConfig(format!(
                "init_rho must lie in (0, {RHO_MAX}), got {}",
                self.init_rho
            )));
        }
        Ok(())
    }
}

/// A runnable sample plus the rendered scene when the source is synthetic.
pub struct SceneBundle {
    pub sample: StereoSample,
    pub scene: Option<SynthScene>,
}

/// Renders or loads the configured scene source.
pub fn materialize(cfg: &ExperimentConfig) -> Result<SceneBundle> {
    match &cfg.scene {
        SceneSource::Files {
            left,
            right,
            rig,
            gt_left,
            gt_right,
        } => {
            let sample = StereoSample {
                left: load_image_png(left)?,
                right: load_image_png(right)?,
                gt_left: gt_left.as_deref().map(read_depth_map).transpose()?,
                gt_right: gt_right.as_deref().map(read_depth_map).transpose()?,
                rig: rig.clone(),
            };
            sample.validate()?;
            Ok(SceneBundle {
                sample,
                scene: None,
            })
        }
        _ => {
            let spec = cfg.scene.resolve_spec()?.expect("synthetic source");
            let scene = make_scene(&spec)?;
            let sample = scene.to_sample(cfg.gt.into());
            Ok(SceneBundle {
                sample,
                scene: Some(scene),
            })
        }
    }
}

/// Loads a sparse depth map from a 16-bit PNG or a PFM file; PFM samples
/// are valid wherever they are strictly positive.
pub fn read_depth_map(path: &Path) -> Result<SparseDepthMap> {
    match extension_of(path)? {
        DepthFormat::Png16 => decode_depth_png(&load_depth_png(path)?),
        DepthFormat::Pfm => {
            let field = load_scalar_pfm(path)?;
            let mask = field.data().iter().map(|v| *v > 0.0).collect();
            SparseDepthMap::new(field, mask)
        }
    }
}

/// Loads a predicted depth map. PFM predictions are dense; PNG16
/// predictions also return their validity mask so evaluation can be
/// restricted to pixels where both maps carry a value.
pub fn read_prediction(path: &Path) -> Result<(ScalarField, Option<Vec<bool>>)> {
    match extension_of(path)? {
        DepthFormat::Png16 => {
            let map = decode_depth_png(&load_depth_png(path)?)?;
            let (h, w) = (map.height(), map.width());
            let field = ScalarField::from_fn(h, w, |i, j| map.depth_at(i, j));
            Ok((field, Some(map.mask().to_vec())))
        }
        DepthFormat::Pfm => Ok((load_scalar_pfm(path)?, None)),
    }
}

enum DepthFormat {
    Png16,
    Pfm,
}

fn extension_of(path: &Path) -> Result<DepthFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => Ok(DepthFormat::Png16),
        Some("pfm") => Ok(DepthFormat::Pfm),
        _ => Err(Error::Format(format!(
            "depth files must end in .png or .pfm, got {}",
            path.display()
        ))),
    }
}
