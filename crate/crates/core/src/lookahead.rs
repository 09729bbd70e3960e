//! Lookahead targets: the generated batch is drifted `k + 1` times in
//! sequence, each stage using the current drifted batch as its own negative
//! set, and the regression target is the raw output plus the weighted sum of
//! the stage drifts.
//!
//! With unit weights the target telescopes to the final drifted batch; with
//! `k = 0` it is the ordinary single-drift target.

use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::drift::{drift, DriftConfig, DriftField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookaheadPlan {
    pub k: usize,
    /// `k + 1` stage weights; defaults to all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl LookaheadPlan {
    pub fn uniform(k: usize) -> Self {
        Self { k, weights: None }
    }

    pub fn weighted(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("plan.weights: need at least one weight".into()));
        }
        let plan = Self {
            k: weights.len() - 1,
            weights: Some(weights),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn stage_weights(&self) -> Vec<f64> {
        self.weights.clone().unwrap_or_else(|| vec![1.0; self.k + 1])
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = &self.weights {
            if w.len() != self.k + 1 {
                return Err(Error::Config(format!(
                    "plan.weights: expected k+1={} weights, got {}",
                    self.k + 1,
                    w.len()
                )));
            }
            if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::Config(format!(
                    "plan.weights: weights must be finite and non-negative, got {bad}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub index: usize,
    /// The empirical stage distribution: queries and negatives for this stage.
    pub negatives: SampleBatch,
    pub drift: DriftField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookaheadTrace {
    pub stages: Vec<Stage>,
    /// Batch after the last stage's drift has been applied.
    pub final_batch: SampleBatch,
    pub target: SampleBatch,
}

impl LookaheadTrace {
    /// Batch-mean drift norm for each stage.
    pub fn stage_norms(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.drift.mean_norm()).collect()
    }
}

pub fn lookahead_trace(
    outputs: &SampleBatch,
    positives: &SampleBatch,
    plan: &LookaheadPlan,
    cfg: &DriftConfig,
) -> Result<LookaheadTrace> {
    plan.validate()?;
    if outputs.dim() != positives.dim() {
        return Err(Error::invalid(format!(
            "outputs have dimension {}, positives {}",
            outputs.dim(),
            positives.dim()
        )));
    }
    let weights = plan.stage_weights();

    let mut stages = Vec::with_capacity(plan.k + 1);
    let mut current = outputs.clone();
    let mut displacement = vec![0.0; outputs.as_slice().len()];
    for (index, &w) in weights.iter().enumerate() {
        let field = drift(&current, positives, &current, cfg)?;
        for (d, v) in displacement.iter_mut().zip(field.vectors().as_slice()) {
            *d += w * v;
        }
        let next = current.add(field.vectors())?;
        stages.push(Stage {
            index,
            negatives: std::mem::replace(&mut current, next),
            drift: field,
        });
    }
    let target = outputs.add(&SampleBatch::new(outputs.rows(), outputs.dim(), displacement)?)?;
    Ok(LookaheadTrace {
        stages,
        final_batch: current,
        target,
    })
}

/// The (detached) regression target of a lookahead trace.
pub fn lookahead_target(
    outputs: &SampleBatch,
    positives: &SampleBatch,
    plan: &LookaheadPlan,
    cfg: &DriftConfig,
) -> Result<SampleBatch> {
    Ok(lookahead_trace(outputs, positives, plan, cfg)?.target)
}

/// Single-drift target `outputs + V(outputs)`, computed without the stage
/// machinery.
pub fn standard_target(
    outputs: &SampleBatch,
    positives: &SampleBatch,
    cfg: &DriftConfig,
) -> Result<(SampleBatch, DriftField)> {
    let field = drift(outputs, positives, outputs, cfg)?;
    let target = outputs.add(field.vectors())?;
    Ok((target, field))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(rows: &[&[f64]]) -> SampleBatch {
        SampleBatch::from_rows(rows).unwrap()
    }

    #[test]
    fn hand_traced_two_stage_example() {
        let out = b(&[&[0.0]]);
        let pos = b(&[&[2.0]]);
        let t = lookahead_trace(&out, &pos, &LookaheadPlan::uniform(1), &DriftConfig::default()).unwrap();
        assert_eq!(t.stages.len(), 2);
        assert_eq!(t.stages[0].drift.row(0), &[2.0]);
        assert_eq!(t.stages[1].negatives.row(0), &[2.0]);
        assert_eq!(t.stages[1].drift.row(0), &[0.0]);
        assert_eq!(t.target.row(0), &[2.0]);
        assert_eq!(t.stage_norms(), vec![2.0, 0.0]);
    }

    #[test]
    fn zero_weights_give_outputs() {
        let out = b(&[&[0.0, 1.0], &[2.0, -1.0]]);
        let pos = b(&[&[3.0, 3.0], &[-1.0, 0.0]]);
        let plan = LookaheadPlan::weighted(vec![0.0, 0.0, 0.0]).unwrap();
        let t = lookahead_target(&out, &pos, &plan, &DriftConfig::default()).unwrap();
        assert_eq!(t, out);
    }

    #[test]
    fn k0_matches_standard_target_bitwise() {
        let out = b(&[&[0.0, 1.0], &[2.0, -1.0], &[0.5, 0.5]]);
        let pos = b(&[&[3.0, 3.0], &[-1.0, 0.0]]);
        let cfg = DriftConfig::default();
        let t = lookahead_target(&out, &pos, &LookaheadPlan::uniform(0), &cfg).unwrap();
        let (s, _) = standard_target(&out, &pos, &cfg).unwrap();
        assert_eq!(t, s);
    }

    #[test]
    fn plan_validation() {
        assert!(LookaheadPlan { k: 2, weights: Some(vec![1.0, 1.0]) }.validate().is_err());
        assert!(LookaheadPlan { k: 1, weights: Some(vec![1.0, -0.5]) }.validate().is_err());
        assert!(LookaheadPlan { k: 1, weights: Some(vec![1.0, f64::NAN]) }.validate().is_err());
        assert!(LookaheadPlan::weighted(vec![]).is_err());
        assert_eq!(LookaheadPlan::uniform(3).stage_weights(), vec![1.0; 4]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let r = lookahead_trace(
            &b(&[&[0.0]]),
            &b(&[&[0.0, 1.0]]),
            &LookaheadPlan::uniform(1),
            &DriftConfig::default(),
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }
}
