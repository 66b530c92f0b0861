//! Direct variational optimization of inverse-depth pyramids with Adam.
//!
//! Instead of training a network, the per-scale inverse-depth fields are
//! free variables: each entry is a logit mapped through
//! `ρ = RHO_MAX · sigmoid(logit)`, which keeps ρ strictly inside
//! `(0, RHO_MAX)` without projection steps. Optimization runs coarse to
//! fine — the total loss decouples across scales, so each phase optimizes
//! one scale exactly, and each finer scale starts from a 2× upsampling of
//! the coarser solution to sidestep photometric local minima.
//!
//! The learning rate holds at `lr0` through a plateau and is then halved
//! once per `halve_every` steps, counted over the global step budget that
//! the phases share. Moments (and the bias-correction clock) restart each
//! phase, since each phase optimizes a different set of variables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::scale_value_and_grad;
use crate::error::{Error, Result};
use crate::field::{Pyramid, ScalarField};
use crate::losses::{LossBreakdown, LossWeights, PreparedSample, StereoSample, NUM_SCALES};

/// Upper bound of the sigmoid output range for inverse depth (1/m).
pub const RHO_MAX: f64 = 1.0;

/// Adam hyperparameters and the step/learning-rate schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Initial learning rate.
    pub lr0: f64,
    /// Steps at `lr0` before decay starts.
    pub plateau_steps: usize,
    /// After the plateau, halve the rate once per this many steps.
    pub halve_every: usize,
    /// Global step budget, shared by the coarse-to-fine phases.
    pub total_steps: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lr0: 1e-4,
            plateau_steps: 1800,
            halve_every: 600,
            total_steps: 3000,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if !self.lr0.is_finite() || self.lr0 <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lr0 must be finite and > 0, got {}",
                self.lr0
            )));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be finite and > 0, got {}",
                self.epsilon
            )));
        }
        if self.halve_every == 0 {
            return Err(Error::InvalidConfig("halve_every must be >= 1".into()));
        }
        if self.total_steps < self.plateau_steps {
            return Err(Error::InvalidConfig(format!(
                "total_steps ({}) must be >= plateau_steps ({})",
                self.total_steps, self.plateau_steps
            )));
        }
        Ok(())
    }
}

/// Learning rate at a (0-based) global step: `lr0` through the plateau,
/// then halved once per `halve_every` further steps.
pub fn lr_schedule(step: usize, cfg: &AdamConfig) -> f64 {
    if step < cfg.plateau_steps {
        cfg.lr0
    } else {
        let halvings = 1 + (step - cfg.plateau_steps) / cfg.halve_every;
        cfg.lr0 / (1u64 << halvings.min(62)) as f64
    }
}

/// One bias-corrected Adam update on a parameter field. `t` is the 1-based
/// step number of the *current moment accumulators*; `scale` only labels
/// errors.
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    params: &mut ScalarField,
    grads: &ScalarField,
    m: &mut ScalarField,
    v: &mut ScalarField,
    t: usize,
    lr: f64,
    cfg: &AdamConfig,
    scale: usize,
) -> Result<()> {
    if t == 0 {
        return Err(Error::Domain("adam step number must be >= 1".into()));
    }
    let (h, w) = (params.height(), params.width());
    for (name, f) in [("gradient", grads), ("first moment", m), ("second moment", v)] {
        if f.height() != h || f.width() != w {
            return Err(Error::ShapeMismatch(format!(
                "{name} {}x{} vs parameters {h}x{w}",
                f.height(),
                f.width()
            )));
        }
    }
    for i in 0..h {
        for j in 0..w {
            if !grads.get(i, j).is_finite() {
                return Err(Error::NonFinite {
                    what: "gradient".into(),
                    scale,
                    row: i,
                    col: j,
                });
            }
        }
    }
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for k in 0..params.data().len() {
        let g = grads.data()[k];
        let mk = cfg.beta1 * m.data()[k] + (1.0 - cfg.beta1) * g;
        let vk = cfg.beta2 * v.data()[k] + (1.0 - cfg.beta2) * g * g;
        m.data_mut()[k] = mk;
        v.data_mut()[k] = vk;
        params.data_mut()[k] -= lr * (mk / bc1) / ((vk / bc2).sqrt() + cfg.epsilon);
    }
    Ok(())
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Optimizer state: per-scale logit fields for both views with their Adam
/// moment accumulators, the shared global step counter, and the per-step
/// loss history of the active phase's objective.
pub struct OptState {
    pub logits_l: Pyramid<ScalarField>,
    pub logits_r: Pyramid<ScalarField>,
    pub m_l: Pyramid<ScalarField>,
    pub v_l: Pyramid<ScalarField>,
    pub m_r: Pyramid<ScalarField>,
    pub v_r: Pyramid<ScalarField>,
    /// Global (0-based) count of applied steps, across phases.
    pub step: usize,
    pub history: Vec<f64>,
}

impl OptState {
    /// Constant-ρ initialization with a small seeded logit jitter that
    /// breaks ties between the two views deterministically.
    pub fn new(level_dims: &[(usize, usize)], init_rho: f64, seed: u64) -> Result<Self> {
        if !(init_rho > 0.0 && init_rho < RHO_MAX) {
            return Err(Error::Domain(format!(
                "initial inverse depth must lie in (0, {RHO_MAX}), got {init_rho}"
            )));
        }
        let base = logit(init_rho / RHO_MAX);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut make = |jitter: bool| -> Result<Pyramid<ScalarField>> {
            let levels = level_dims
                .iter()
                .map(|&(h, w)| {
                    ScalarField::from_fn(h, w, |_, _| {
                        if jitter {
                            base + rng.random_range(-1e-3..1e-3)
                        } else {
                            0.0
                        }
                    })
                })
                .collect();
            Pyramid::from_levels(levels)
        };
        Ok(Self {
            logits_l: make(true)?,
            logits_r: make(true)?,
            m_l: make(false)?,
            v_l: make(false)?,
            m_r: make(false)?,
            v_r: make(false)?,
            step: 0,
            history: Vec::new(),
        })
    }

    /// Materializes the inverse-depth field of one level (0 = left).
    pub fn rho_level(&self, side: usize, scale: usize) -> ScalarField {
        let logits = if side == 0 {
            self.logits_l.level(scale)
        } else {
            self.logits_r.level(scale)
        };
        ScalarField::from_fn(logits.height(), logits.width(), |i, j| {
            RHO_MAX * sigmoid(logits.get(i, j))
        })
    }

    /// Materializes a full inverse-depth pyramid (0 = left).
    pub fn rho_pyramid(&self, side: usize) -> Pyramid<ScalarField> {
        Pyramid::from_levels((1..=NUM_SCALES).map(|s| self.rho_level(side, s)).collect()).unwrap()
    }

    /// Initializes the logits of `scale` by 2× nearest-neighbor upsampling
    /// of the next-coarser level's result.
    fn seed_from_coarser(&mut self, scale: usize) {
        for side in [0, 1] {
            let logits = if side == 0 {
                &mut self.logits_l
            } else {
                &mut self.logits_r
            };
            let coarse = logits.level(scale + 1).clone();
            let fine = logits.level_mut(scale);
            for i in 0..fine.height() {
                for j in 0..fine.width() {
                    fine.set(i, j, coarse.get(i / 2, j / 2));
                }
            }
        }
    }

    fn reset_moments(&mut self, scale: usize) {
        for pyr in [&mut self.m_l, &mut self.v_l, &mut self.m_r, &mut self.v_r] {
            let level = pyr.level_mut(scale);
            level.data_mut().fill(0.0);
        }
    }
}

/// Per-step trace entry: the active scale's weighted objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepTrace {
    pub step: usize,
    pub scale: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Final fields and the optimization record.
pub struct OptimizeResult {
    pub rho_l: Pyramid<ScalarField>,
    pub rho_r: Pyramid<ScalarField>,
    pub steps: Vec<StepTrace>,
    pub initial: LossBreakdown,
    pub final_loss: LossBreakdown,
}

/// Splits the global budget into four phase lengths (coarse to fine); the
/// finest phase absorbs the remainder.
fn phase_lengths(total: usize) -> [usize; NUM_SCALES] {
    let base = total / NUM_SCALES;
    [base, base, base, total - 3 * base]
}

/// Optimizes both inverse-depth pyramids for one stereo sample, coarse to
/// fine, and returns the final fields with the loss trace.
pub fn optimize_pair(
    sample: &StereoSample,
    weights: &LossWeights,
    adam: &AdamConfig,
    init_rho: f64,
    seed: u64,
) -> Result<OptimizeResult> {
    adam.validate()?;
    weights.validate()?;
    let prep = PreparedSample::new(sample)?;
    let dims: Vec<(usize, usize)> = (1..=NUM_SCALES)
        .map(|s| (prep.left.level(s).height(), prep.left.level(s).width()))
        .collect();
    let mut state = OptState::new(&dims, init_rho, seed)?;

    let initial = prep.total_loss(&state.rho_pyramid(0), &state.rho_pyramid(1), weights)?;
    if !initial.total.is_finite() {
        return Err(Error::Diverged {
            step: 0,
            last_total: f64::NAN,
        });
    }
    let mut steps = Vec::with_capacity(adam.total_steps);
    let lengths = phase_lengths(adam.total_steps);
    for (phase, &len) in lengths.iter().enumerate() {
        let scale = NUM_SCALES - phase;
        if phase > 0 {
            state.seed_from_coarser(scale);
        }
        state.reset_moments(scale);
        for phase_t in 1..=len {
            let rho_l = state.rho_level(0, scale);
            let rho_r = state.rho_level(1, scale);
            let (value, g_rho_l, g_rho_r) =
                scale_value_and_grad(&prep, &rho_l, &rho_r, weights, scale)?;
            if !value.is_finite() {
                return Err(Error::Diverged {
                    step: state.step,
                    last_total: state.history.last().copied().unwrap_or(f64::NAN),
                });
            }
            let lr = lr_schedule(state.step, adam);
            for (side, g_rho) in [(0, &g_rho_l), (1, &g_rho_r)] {
                // dρ/dlogit = RHO_MAX · σ(1−σ) = ρ · (1 − ρ/RHO_MAX).
                let rho = if side == 0 { &rho_l } else { &rho_r };
                let g_logit = ScalarField::from_fn(rho.height(), rho.width(), |i, j| {
                    let r = rho.get(i, j);
                    g_rho.get(i, j) * r * (1.0 - r / RHO_MAX)
                });
                let (logits, m, v) = if side == 0 {
                    (&mut state.logits_l, &mut state.m_l, &mut state.v_l)
                } else {
                    (&mut state.logits_r, &mut state.m_r, &mut state.v_r)
                };
                adam_step(
                    logits.level_mut(scale),
                    &g_logit,
                    m.level_mut(scale),
                    v.level_mut(scale),
                    phase_t,
                    lr,
                    adam,
                    scale,
                )?;
            }
            steps.push(StepTrace {
                step: state.step,
                scale,
                lr,
                loss: value,
            });
            state.history.push(value);
            state.step += 1;
        }
    }
    let rho_l = state.rho_pyramid(0);
    let rho_r = state.rho_pyramid(1);
    let final_loss = prep.total_loss(&rho_l, &rho_r, weights)?;
    Ok(OptimizeResult {
        rho_l,
        rho_r,
        steps,
        initial,
        final_loss,
    })
}
