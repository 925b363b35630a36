//! Advection stabilisation study: the same training budget spent on plain,
//! noise-injected, norm-projected and combined variants, compared by their
//! relative rollout error at the horizon.

use serde::Serialize;

use pixelpde_core::datagen::Dataset;
use pixelpde_core::integrators::{NetworkMap, Scheme, StepperConfig};
use pixelpde_core::metrics::{eval_metrics, MetricSeries};
use pixelpde_core::network::{Activation, TwoLayerNetParams};
use pixelpde_core::train::{train_curriculum, EpochRecord, TrainConfig};
use pixelpde_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct StudyOptions {
    pub epochs: usize,
    pub seed: u64,
    pub channels: usize,
    pub ksize: usize,
    pub substeps: usize,
    pub noise_eps: f64,
    pub horizon: usize,
    pub batch_size: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            epochs: 300,
            seed: 0,
            channels: 2,
            ksize: 5,
            substeps: 5,
            noise_eps: 0.01,
            horizon: 40,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug)]
pub struct VariantResult {
    pub name: &'static str,
    pub scheme: Scheme,
    pub noise_eps: f64,
    pub theta: TwoLayerNetParams,
    pub history: Vec<EpochRecord>,
    /// `None` when the evaluation rollout diverged.
    pub metrics: Option<MetricSeries>,
    /// Relative error at the horizon; infinite after divergence.
    pub rel_at_horizon: f64,
    /// Largest `|‖Uₘ‖ − ‖U₀‖| / ‖U₀‖` over predicted test frames.
    pub norm_drift: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// `lower ≤ higher` with a relative margin: PASS when `lower ≤ (1−margin)·higher`,
/// FAIL when `higher ≤ (1−margin)·lower`, otherwise INCONCLUSIVE.
pub fn compare(lower: f64, higher: f64, margin: f64) -> Verdict {
    if lower <= (1.0 - margin) * higher {
        Verdict::Pass
    } else if higher <= (1.0 - margin) * lower {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

pub const MARGIN: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct StudyReport {
    pub variants: Vec<VariantResult>,
    /// norm-projected vs noise-injected.
    pub projected_vs_noise: Verdict,
    /// noise-injected vs plain.
    pub noise_vs_plain: Verdict,
}

impl StudyReport {
    pub fn variant(&self, name: &str) -> &VariantResult {
        self.variants
            .iter()
            .find(|v| v.name == name)
            .expect("known variant name")
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("variant,scheme,noise_eps,final_loss,rE_horizon,norm_drift\n");
        for v in &self.variants {
            let scheme = match v.scheme {
                Scheme::Euler => "euler",
                Scheme::NormProjectedEuler => "norm-projected",
            };
            let loss = v.history.last().map_or(f64::NAN, |r| r.loss);
            s.push_str(&format!(
                "{},{},{},{:e},{:e},{:e}\n",
                v.name, scheme, v.noise_eps, loss, v.rel_at_horizon, v.norm_drift
            ));
        }
        s
    }
}

pub const VARIANTS: [(&str, Scheme, bool); 4] = [
    ("plain", Scheme::Euler, false),
    ("noise", Scheme::Euler, true),
    ("projected", Scheme::NormProjectedEuler, false),
    ("projected+noise", Scheme::NormProjectedEuler, true),
];

/// Trains every variant from the same initial weights with the same schedule
/// and evaluates on `test`.
pub fn run_advection_study(train: &Dataset, test: &Dataset, opts: &StudyOptions) -> Result<StudyReport> {
    let mut init_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let theta0 = TwoLayerNetParams::random(opts.channels, opts.ksize, opts.ksize, Activation::Relu, &mut init_rng)?;
    let mut tc = TrainConfig::scaled(opts.epochs);
    tc.seed = opts.seed;
    tc.batch_size = opts.batch_size;
    let mut variants = Vec::new();
    for (name, scheme, noisy) in VARIANTS {
        let eps = if noisy { opts.noise_eps } else { 0.0 };
        let cfg = StepperConfig::new(train.dt, opts.substeps, scheme)?;
        let (theta, history) = train_curriculum(&theta0, train, &tc, &cfg, eps)?;
        let (metrics, rel, drift) = match eval_metrics(&theta, &cfg, test, opts.horizon) {
            Ok(m) => {
                let rel = m.rel[opts.horizon - 1];
                (Some(m), rel, norm_drift(&theta, &cfg, test, opts.horizon)?)
            }
            Err(Error::Divergence { .. }) => (None, f64::INFINITY, f64::INFINITY),
            Err(e) => return Err(e),
        };
        variants.push(VariantResult {
            name,
            scheme,
            noise_eps: eps,
            theta,
            history,
            metrics,
            rel_at_horizon: rel,
            norm_drift: drift,
        });
    }
    let rel = |n: &str| variants.iter().find(|v| v.name == n).map(|v| v.rel_at_horizon).unwrap();
    Ok(StudyReport {
        projected_vs_noise: compare(rel("projected"), rel("noise"), MARGIN),
        noise_vs_plain: compare(rel("noise"), rel("plain"), MARGIN),
        variants,
    })
}

fn norm_drift(theta: &TwoLayerNetParams, cfg: &StepperConfig, test: &Dataset, horizon: usize) -> Result<f64> {
    let map = NetworkMap::new(theta, *cfg);
    let mut worst: f64 = 0.0;
    for seq in test.sequences() {
        let n0 = seq[0].norm();
        for f in map.rollout(&seq[0], horizon)? {
            worst = worst.max((f.norm() - n0).abs() / n0);
        }
    }
    Ok(worst)
}
