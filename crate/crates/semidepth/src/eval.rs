//! Depth evaluation metrics with the standard cap, floor, and crop
//! conventions.
//!
//! Predictions are clamped into `[floor, cap]` while ground truth outside
//! `(floor, cap]` is excluded from scoring; an optional fractional crop
//! restricts evaluation to the usual central road region. All seven
//! numbers are computed over the same surviving pixel set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, SparseDepthMap};

/// The evaluation summary, in the conventional column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

/// Region restriction applied before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CropKind {
    None,
    Garg,
}

/// Cap/floor/crop conventions for one evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub depth_cap: f64,
    pub depth_floor: f64,
    pub crop: CropKind,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            depth_cap: 80.0,
            depth_floor: 1e-3,
            crop: CropKind::Garg,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.depth_floor.is_finite() || !self.depth_cap.is_finite() {
            return Err(Error::InvalidConfig("depth bounds must be finite".into()));
        }
        if !(self.depth_floor > 0.0 && self.depth_floor < self.depth_cap) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < floor < cap, got floor {} cap {}",
                self.depth_floor, self.depth_cap
            )));
        }
        Ok(())
    }
}

/// The standard fractional evaluation crop: rows
/// `[0.40810811·H, 0.99189189·H)`, columns `[0.03594771·W, 0.96405229·W)`,
/// truncated to integers. Returned as (row0, row1, col0, col1), exclusive
/// upper bounds.
pub fn garg_crop(height: usize, width: usize) -> (usize, usize, usize, usize) {
    let h = height as f64;
    let w = width as f64;
    (
        (0.40810811 * h) as usize,
        (0.99189189 * h) as usize,
        (0.03594771 * w) as usize,
        (0.96405229 * w) as usize,
    )
}

/// Scores a predicted depth field against sparse ground truth. Predictions
/// are clamped to `[floor, cap]`; ground-truth pixels outside `(floor, cap]`
/// or outside the crop are skipped.
pub fn compute_metrics(
    pred: &ScalarField,
    gt: &SparseDepthMap,
    cfg: &EvalConfig,
) -> Result<Metrics> {
    cfg.validate()?;
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let (r0, r1, c0, c1) = match cfg.crop {
        CropKind::Garg => garg_crop(pred.height(), pred.width()),
        CropKind::None => (0, pred.height(), 0, pred.width()),
    };
    let mut n = 0usize;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let (mut d1, mut d2, mut d3) = (0usize, 0usize, 0usize);
    for i in r0..r1 {
        for j in c0..c1 {
            if !gt.is_valid(i, j) {
                continue;
            }
            let g = gt.depth_at(i, j);
            if !(g > cfg.depth_floor && g <= cfg.depth_cap) {
                continue;
            }
            let p = pred.get(i, j).clamp(cfg.depth_floor, cfg.depth_cap);
            if !p.is_finite() {
                return Err(Error::Domain(format!(
                    "non-finite prediction at ({i}, {j})"
                )));
            }
            n += 1;
            abs_rel += (p - g).abs() / g;
            sq_rel += (p - g) * (p - g) / g;
            sq += (p - g) * (p - g);
            let dl = p.ln() - g.ln();
            sq_log += dl * dl;
            let ratio = (p / g).max(g / p);
            if ratio < 1.25 {
                d1 += 1;
            }
            if ratio < 1.25 * 1.25 {
                d2 += 1;
            }
            if ratio < 1.25 * 1.25 * 1.25 {
                d3 += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::Degenerate(
            "no ground-truth pixels survive the crop and depth bounds".into(),
        ));
    }
    let nf = n as f64;
    Ok(Metrics {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (sq / nf).sqrt(),
        rmse_log: (sq_log / nf).sqrt(),
        delta1: d1 as f64 / nf,
        delta2: d2 as f64 / nf,
        delta3: d3 as f64 / nf,
    })
}

/// Renders labeled metric rows as an aligned plain-text table in the
/// conventional column order.
pub fn format_metrics_table(rows: &[(String, Metrics)]) -> String {
    let headers = [
        "Abs Rel", "Sq Rel", "RMSE", "RMSE_log", "d<1.25", "d<1.25^2", "d<1.25^3",
    ];
    let label_width = rows
        .iter()
        .map(|(l, _)| l.len())
        .chain(std::iter::once(6))
        .max()
        .unwrap();
    let mut out = String::new();
    out.push_str(&format!("{:label_width$}", ""));
    for h in headers {
        out.push_str(&format!("  {h:>9}"));
    }
    out.push('\n');
    for (label, m) in rows {
        out.push_str(&format!("{label:label_width$}"));
        for v in [
            m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3,
        ] {
            out.push_str(&format!("  {v:>9.4}"));
        }
        out.push('\n');
    }
    out
}
