//! Rollout error metrics over held-out trajectories.

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{invalid, Error, Result};
use crate::integrators::{NetworkMap, StepperConfig};
use crate::network::TwoLayerNetParams;
use crate::tensor::Field;

/// Per-step errors for `m = 1..=horizon`: the max-abs error over all
/// sequences and entries, the mean over sequences of `‖E‖²/p²`, and the mean
/// over sequences of `‖E‖/‖Uᵐ‖`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub horizon: usize,
    pub max_abs: Vec<f64>,
    pub mse: Vec<f64>,
    pub rel: Vec<f64>,
}

impl MetricSeries {
    pub const CSV_HEADER: &'static str = "m,maxE,mse,rE";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for m in 0..self.horizon {
            s.push_str(&format!(
                "{},{:e},{:e},{:e}\n",
                m + 1,
                self.max_abs[m],
                self.mse[m],
                self.rel[m]
            ));
        }
        s
    }
}

/// Metrics of predicted frames against targets. `predictions[n][m-1]` is
/// compared with `targets[n][m]`.
pub fn metrics_from_predictions(
    predictions: &[Vec<Field>],
    targets: &[Vec<Field>],
    horizon: usize,
) -> Result<MetricSeries> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(invalid("need one prediction per target sequence"));
    }
    let n_seq = predictions.len() as f64;
    let mut out = MetricSeries {
        horizon,
        max_abs: vec![0.0; horizon],
        mse: vec![0.0; horizon],
        rel: vec![0.0; horizon],
    };
    for (n, (pred, tgt)) in predictions.iter().zip(targets).enumerate() {
        if pred.len() < horizon || tgt.len() < horizon + 1 {
            return Err(invalid(format!("sequence {n} is shorter than the horizon {horizon}")));
        }
        for m in 1..=horizon {
            let target = &tgt[m];
            let err = pred[m - 1].sub(target);
            let sq = err.dot(&err);
            let p2 = (target.p() * target.p()) as f64;
            let tn = target.norm();
            if tn == 0.0 {
                return Err(Error::DegenerateInput(format!(
                    "target frame has zero norm at (n, m) = ({n}, {m})"
                )));
            }
            out.max_abs[m - 1] = out.max_abs[m - 1].max(err.max_abs());
            out.mse[m - 1] += sq / p2 / n_seq;
            out.rel[m - 1] += sq.sqrt() / tn / n_seq;
        }
    }
    Ok(out)
}

/// Rolls the learned map out from each clean `Uⁿ₀` for `horizon` steps.
pub fn eval_metrics(
    theta: &TwoLayerNetParams,
    cfg: &StepperConfig,
    test: &Dataset,
    horizon: usize,
) -> Result<MetricSeries> {
    if horizon == 0 || horizon > test.m() {
        return Err(invalid(format!(
            "horizon {horizon} must be between 1 and the dataset's M = {}",
            test.m()
        )));
    }
    let map = NetworkMap::new(theta, *cfg);
    let preds = test
        .sequences()
        .iter()
        .map(|s| map.rollout(&s[0], horizon))
        .collect::<Result<Vec<_>>>()?;
    metrics_from_predictions(&preds, test.sequences(), horizon)
}
