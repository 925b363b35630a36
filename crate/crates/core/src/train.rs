//! Rollout losses, reverse-mode gradients through the unrolled network map,
//! Adam, and the curriculum schedule over increasing rollout lengths.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{invalid, Error, Result};
use crate::integrators::{project_tangent, Scheme, StepperConfig};
use crate::network::TwoLayerNetParams;
use crate::tensor::{dot, filter_grad_acc, pad_for, correlate_padded_acc, Field, FilterBank};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub rollout_len: usize,
    pub noise_eps: f64,
}

impl LossConfig {
    pub fn new(rollout_len: usize, noise_eps: f64) -> Result<Self> {
        if rollout_len == 0 {
            return Err(invalid("rollout length must be positive"));
        }
        if !(noise_eps >= 0.0) || !noise_eps.is_finite() {
            return Err(invalid(format!("noise magnitude must be finite and ≥ 0, got {noise_eps}")));
        }
        Ok(Self {
            rollout_len,
            noise_eps,
        })
    }
}

/// Gradient of a scalar with respect to every network parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub k_bank: FilterBank,
    pub h_bank: FilterBank,
    pub b1: Vec<f64>,
    pub b2: f64,
}

impl Gradients {
    pub fn zeros_like(theta: &TwoLayerNetParams) -> Self {
        let kb = &theta.k_bank;
        let hb = &theta.h_bank;
        Self {
            k_bank: FilterBank::zeros(kb.c_out(), kb.c_in(), kb.k()).expect("shape of a valid bank"),
            h_bank: FilterBank::zeros(hb.c_out(), hb.c_in(), hb.k()).expect("shape of a valid bank"),
            b1: vec![0.0; theta.b1.len()],
            b2: 0.0,
        }
    }

    /// Same ordering as [`TwoLayerNetParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.k_bank.len() + self.h_bank.len() + self.b1.len() + 1);
        v.extend_from_slice(self.k_bank.weights());
        v.extend_from_slice(self.h_bank.weights());
        v.extend_from_slice(&self.b1);
        v.push(self.b2);
        v
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|g| g.is_finite())
    }
}

// ---------------------------------------------------------------------------
// Forward pass with tape

struct SubTape {
    u: Field,
    hidden: Vec<Vec<f64>>,
    r: Field,
    proj: Option<ProjTape>,
}

struct ProjTape {
    a: f64,
    uu: f64,
    trial: Field,
    n0: f64,
    n1: f64,
}

/// One sub-step of the learned map, recording what the backward pass needs.
/// Arithmetic matches [`crate::integrators::NetworkMap::step`] operation for
/// operation.
fn substep_forward(theta: &TwoLayerNetParams, scheme: Scheme, u: &Field, h: f64) -> Result<(Field, SubTape)> {
    let hidden = theta.pre_activations(u);
    let r = theta.output_from_hidden(u, &hidden);
    match scheme {
        Scheme::Euler => {
            let mut next = u.clone();
            next.axpy(h, &r);
            Ok((
                next,
                SubTape {
                    u: u.clone(),
                    hidden,
                    r,
                    proj: None,
                },
            ))
        }
        Scheme::NormProjectedEuler => {
            let uu = u.dot(u);
            let g = project_tangent(u, &r)?;
            let a = u.dot(&r) / uu;
            let mut trial = u.clone();
            trial.axpy(h, &g);
            let n1 = trial.norm();
            if n1 == 0.0 {
                return Err(Error::DegenerateInput(
                    "projected Euler intermediate has zero norm".into(),
                ));
            }
            let n0 = u.norm();
            let next = trial.scaled(n0 / n1);
            Ok((
                next,
                SubTape {
                    u: u.clone(),
                    hidden,
                    r,
                    proj: Some(ProjTape {
                        a,
                        uu,
                        trial,
                        n0,
                        n1,
                    }),
                },
            ))
        }
    }
}

/// Backward through one sub-step: given `∂L/∂U'` returns `∂L/∂U` and
/// accumulates parameter gradients.
fn substep_backward(
    theta: &TwoLayerNetParams,
    tape: &SubTape,
    h: f64,
    g_next: &[f64],
    grads: &mut Gradients,
) -> Vec<f64> {
    let u = tape.u.as_slice();
    let (mut g_u, g_r) = match &tape.proj {
        None => (g_next.to_vec(), g_next.iter().map(|g| h * g).collect::<Vec<_>>()),
        Some(pt) => {
            let trial = pt.trial.as_slice();
            let s = pt.n0 / pt.n1;
            let gt_dot = dot(g_next, trial);
            let c_trial = pt.n0 * gt_dot / (pt.n1 * pt.n1 * pt.n1);
            let g_trial: Vec<f64> = g_next
                .iter()
                .zip(trial)
                .map(|(g, t)| s * g - c_trial * t)
                .collect();
            // U' depends on U through n0 = ‖U‖ and through the trial step.
            let c_n0 = if pt.n0 > 0.0 { gt_dot / (pt.n1 * pt.n0) } else { 0.0 };
            let mut g_u: Vec<f64> = u
                .iter()
                .zip(&g_trial)
                .map(|(x, gt)| c_n0 * x + gt)
                .collect();
            let g_g: Vec<f64> = g_trial.iter().map(|gt| h * gt).collect();
            // G = R − a U with a = ⟨U,R⟩/⟨U,U⟩.
            let gg_u = dot(&g_g, u) / pt.uu;
            let r = tape.r.as_slice();
            let g_r: Vec<f64> = g_g.iter().zip(u).map(|(g, x)| g - gg_u * x).collect();
            for i in 0..g_u.len() {
                g_u[i] += -pt.a * g_g[i] - gg_u * (r[i] - 2.0 * pt.a * u[i]);
            }
            (g_u, g_r)
        }
    };
    net_backward(theta, &tape.u, &tape.hidden, &g_r, grads, &mut g_u);
    g_u
}

/// Backward through `R = ℋ * σ(𝒦 * U + b₁) + b₂`.
fn net_backward(
    theta: &TwoLayerNetParams,
    u: &Field,
    hidden: &[Vec<f64>],
    g_r: &[f64],
    grads: &mut Gradients,
    g_u: &mut [f64],
) {
    let p = u.p();
    let k = theta.k_bank.k();
    let k_out = theta.h_bank.k();
    let act = theta.activation;
    grads.b2 += g_r.iter().sum::<f64>();
    let padded_gr = pad_for(g_r, p, k_out);
    let padded_u = pad_for(u.as_slice(), p, k);
    for (c, y) in hidden.iter().enumerate() {
        let z: Vec<f64> = y.iter().map(|&v| act.apply(v)).collect();
        filter_grad_acc(&pad_for(&z, p, k_out), p, g_r, k_out, grads.h_bank.filter_slice_mut(0, c));

        let h_flip = flip(theta.h_bank.filter_slice(0, c), k_out);
        let mut g_y = vec![0.0; p * p];
        correlate_padded_acc(&padded_gr, p, &h_flip, k_out, &mut g_y);
        for (g, &v) in g_y.iter_mut().zip(y) {
            *g *= act.derivative(v);
        }
        grads.b1[c] += g_y.iter().sum::<f64>();
        filter_grad_acc(&padded_u, p, &g_y, k, grads.k_bank.filter_slice_mut(c, 0));

        let k_flip = flip(theta.k_bank.filter_slice(c, 0), k);
        correlate_padded_acc(&pad_for(&g_y, p, k), p, &k_flip, k, g_u);
    }
}

fn flip(w: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            out[i * k + j] = w[(k - 1 - i) * k + (k - 1 - j)];
        }
    }
    out
}

/// Perturbed initial condition `U⁰ + δ`, `δ ~ U(−ε, ε)` entrywise. Does not
/// touch the generator when `ε = 0`.
fn perturb<R: Rng>(u0: &Field, eps: f64, rng: &mut R) -> Field {
    if eps == 0.0 {
        return u0.clone();
    }
    u0.map(|v| v + rng.random_range(-eps..=eps))
}

/// Loss and (optionally) gradients over the listed sequences.
fn objective<R: Rng>(
    theta: &TwoLayerNetParams,
    cfg: &StepperConfig,
    data: &Dataset,
    batch: &[usize],
    loss_cfg: LossConfig,
    rng: &mut R,
    mut grads: Option<&mut Gradients>,
) -> Result<f64> {
    let q = loss_cfg.rollout_len;
    if q == 0 || q > data.m() {
        return Err(invalid(format!(
            "rollout length {q} must be between 1 and the dataset's M = {}",
            data.m()
        )));
    }
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    let scale = 1.0 / (batch.len() * q) as f64;
    let h = cfg.sub_dt();
    let mut total = 0.0;
    for &n in batch {
        let seq = data
            .sequences()
            .get(n)
            .ok_or_else(|| invalid(format!("sequence index {n} out of range")))?;
        let mut cur = perturb(&seq[0], loss_cfg.noise_eps, rng);
        let mut tapes: Vec<SubTape> = Vec::new();
        let mut residuals: Vec<Vec<f64>> = Vec::with_capacity(q);
        let mut seq_loss = 0.0;
        for step in 1..=q {
            for _ in 0..cfg.substeps {
                let (next, tape) = substep_forward(theta, cfg.scheme, &cur, h)?;
                if grads.is_some() {
                    tapes.push(tape);
                }
                cur = next;
            }
            if !cur.is_finite() {
                return Err(Error::Divergence {
                    step,
                    detail: format!("non-finite prediction for sequence {n}"),
                });
            }
            let diff = cur.sub(&seq[step]);
            seq_loss += diff.dot(&diff);
            residuals.push(diff.into_vec());
        }
        total += seq_loss;
        if let Some(g) = grads.as_deref_mut() {
            let mut g_u = vec![0.0; cur.as_slice().len()];
            for step in (1..=q).rev() {
                for (gu, r) in g_u.iter_mut().zip(&residuals[step - 1]) {
                    *gu += 2.0 * scale * r;
                }
                for s in (0..cfg.substeps).rev() {
                    let tape = &tapes[(step - 1) * cfg.substeps + s];
                    g_u = substep_backward(theta, tape, h, &g_u, g);
                }
            }
        }
    }
    let loss = total * scale;
    if !loss.is_finite() {
        return Err(Error::Divergence {
            step: q,
            detail: "non-finite loss".into(),
        });
    }
    if let Some(g) = grads {
        if !g.is_finite() {
            return Err(Error::Divergence {
                step: q,
                detail: "non-finite gradient".into(),
            });
        }
    }
    Ok(loss)
}

/// `(1/(N·Q)) Σₙ Σ_q ‖𝒩^q(U⁰ₙ + δₙ) − Uⁿ_q‖²` over the whole dataset.
pub fn loss<R: Rng>(
    theta: &TwoLayerNetParams,
    cfg: &StepperConfig,
    data: &Dataset,
    loss_cfg: LossConfig,
    rng: &mut R,
) -> Result<f64> {
    let all: Vec<usize> = (0..data.n_sequences()).collect();
    objective(theta, cfg, data, &all, loss_cfg, rng, None)
}

/// Loss over `batch` and its exact gradient.
pub fn grad_loss<R: Rng>(
    theta: &TwoLayerNetParams,
    cfg: &StepperConfig,
    data: &Dataset,
    batch: &[usize],
    loss_cfg: LossConfig,
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros_like(theta);
    let l = objective(theta, cfg, data, batch, loss_cfg, rng, Some(&mut grads))?;
    Ok((l, grads))
}

/// Loss over `batch` without gradients.
pub fn batch_loss<R: Rng>(
    theta: &TwoLayerNetParams,
    cfg: &StepperConfig,
    data: &Dataset,
    batch: &[usize],
    loss_cfg: LossConfig,
    rng: &mut R,
) -> Result<f64> {
    objective(theta, cfg, data, batch, loss_cfg, rng, None)
}

// ---------------------------------------------------------------------------
// Adam

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of the flat parameter vector.
pub fn adam_update(w: &mut [f64], g: &[f64], state: &mut AdamState, lr: f64, hp: AdamParams) {
    assert_eq!(w.len(), g.len());
    assert_eq!(w.len(), state.m.len());
    state.t += 1;
    let bc1 = 1.0 - hp.beta1.powi(state.t as i32);
    let bc2 = 1.0 - hp.beta2.powi(state.t as i32);
    for i in 0..w.len() {
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g[i];
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g[i] * g[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        w[i] -= lr * m_hat / (v_hat.sqrt() + hp.eps_hat);
    }
}

pub fn adam_step(
    theta: &mut TwoLayerNetParams,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    hp: AdamParams,
) -> Result<()> {
    let mut w = theta.to_flat();
    if state.m.len() != w.len() {
        return Err(invalid("optimizer state does not match the parameter count"));
    }
    adam_update(&mut w, &grads.to_flat(), state, lr, hp);
    theta.set_flat(&w)
}

// ---------------------------------------------------------------------------
// Curriculum

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs_per_stage: usize,
    pub lr0: f64,
    pub lr_drop_epochs: Vec<usize>,
    pub lr_drop_factor: f64,
    pub stage_rollouts: Vec<usize>,
    pub stage_lr_halving: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_per_stage: 300,
            lr0: 5e-3,
            lr_drop_epochs: vec![135, 270],
            lr_drop_factor: 10.0,
            stage_rollouts: vec![2, 3, 4],
            stage_lr_halving: 2.0,
            batch_size: 32,
            seed: 0,
            adam: AdamParams::default(),
        }
    }
}

impl TrainConfig {
    /// Default schedule with `epochs` per stage and the drop epochs scaled
    /// proportionally (60 epochs → drops at 27 and 54).
    pub fn scaled(epochs: usize) -> Self {
        let base = Self::default();
        let ratio = epochs as f64 / base.epochs_per_stage as f64;
        let drops = base
            .lr_drop_epochs
            .iter()
            .map(|&e| (e as f64 * ratio).round() as usize)
            .filter(|&e| e > 0 && e < epochs)
            .collect::<Vec<_>>();
        let mut drops_dedup = drops;
        drops_dedup.dedup();
        Self {
            epochs_per_stage: epochs,
            lr_drop_epochs: drops_dedup,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr0 > 0.0) || !(self.lr_drop_factor > 0.0) || !(self.stage_lr_halving > 0.0) {
            return bad("learning rate, drop factor and halving factor must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.stage_rollouts.is_empty() || self.stage_rollouts.contains(&0) {
            return bad("stage rollout lengths must be positive");
        }
        if self.lr_drop_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return bad("learning-rate drop epochs must be strictly increasing");
        }
        if self.epochs_per_stage > 0 && self.lr_drop_epochs.iter().any(|&e| e >= self.epochs_per_stage) {
            return bad("learning-rate drop epochs must precede the end of a stage");
        }
        let a = self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps_hat > 0.0) {
            return bad("Adam needs β₁, β₂ in [0, 1) and ε̂ > 0");
        }
        Ok(())
    }

    /// Learning rate used during `epoch` (0-based) of `stage` (0-based).
    pub fn lr_at(&self, stage: usize, epoch: usize) -> f64 {
        let start = self.lr0 / self.stage_lr_halving.powi(stage as i32);
        let drops = self.lr_drop_epochs.iter().filter(|&&d| d <= epoch).count();
        start / self.lr_drop_factor.powi(drops as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: usize,
    pub rollout_len: usize,
    pub epoch: usize,
    pub lr: f64,
    /// Mean over the epoch's batches, weighted by batch size.
    pub loss: f64,
    /// Smallest batch loss seen during the epoch.
    pub min_batch_loss: f64,
}

pub const HISTORY_HEADER: &str = "stage,epoch,lr,loss";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in history {
        s.push_str(&format!("{},{},{:e},{:e}\n", r.stage, r.epoch, r.lr, r.loss));
    }
    s
}

/// [`train_curriculum_with`] without a per-epoch hook.
pub fn train_curriculum(
    theta0: &TwoLayerNetParams,
    data: &Dataset,
    cfg: &TrainConfig,
    stepper: &StepperConfig,
    noise_eps: f64,
) -> Result<(TwoLayerNetParams, Vec<EpochRecord>)> {
    train_curriculum_with(theta0, data, cfg, stepper, noise_eps, |_, _| Ok(()))
}

/// Mini-batch Adam over the stages of `cfg.stage_rollouts`. The hook runs
/// after every epoch with the record and the current parameters.
///
/// The shuffle and the input noise draw from separate ChaCha streams of
/// `cfg.seed`, so clean runs consume no noise randomness.
pub fn train_curriculum_with(
    theta0: &TwoLayerNetParams,
    data: &Dataset,
    cfg: &TrainConfig,
    stepper: &StepperConfig,
    noise_eps: f64,
    mut on_epoch: impl FnMut(&EpochRecord, &TwoLayerNetParams) -> Result<()>,
) -> Result<(TwoLayerNetParams, Vec<EpochRecord>)> {
    cfg.validate()?;
    if let Some(&q) = cfg.stage_rollouts.iter().max() {
        if q > data.m() {
            return Err(Error::Config(format!(
                "rollout length {q} exceeds the dataset's M = {}",
                data.m()
            )));
        }
    }
    let mut theta = theta0.clone();
    let mut history = Vec::new();
    if cfg.epochs_per_stage == 0 {
        return Ok((theta, history));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.n_sequences()).collect();
    for (stage, &q) in cfg.stage_rollouts.iter().enumerate() {
        let loss_cfg = LossConfig::new(q, noise_eps)?;
        let mut adam = AdamState::new(theta.count_params());
        for epoch in 0..cfg.epochs_per_stage {
            let lr = cfg.lr_at(stage, epoch);
            order.shuffle(&mut shuffle_rng);
            let mut weighted = 0.0;
            let mut min_batch = f64::INFINITY;
            for batch in order.chunks(cfg.batch_size) {
                let (l, g) = grad_loss(&theta, stepper, data, batch, loss_cfg, &mut noise_rng)?;
                adam_step(&mut theta, &g, &mut adam, lr, cfg.adam)?;
                if !theta.is_finite() {
                    return Err(Error::Divergence {
                        step: epoch,
                        detail: format!("non-finite parameters in stage {stage}"),
                    });
                }
                weighted += l * batch.len() as f64;
                min_batch = min_batch.min(l);
            }
            let rec = EpochRecord {
                stage,
                rollout_len: q,
                epoch,
                lr,
                loss: weighted / order.len() as f64,
                min_batch_loss: min_batch,
            };
            on_epoch(&rec, &theta)?;
            history.push(rec);
        }
    }
    Ok((theta, history))
}
