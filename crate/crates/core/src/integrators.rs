//! One-step maps built from a vector field: composed explicit Euler sub-steps
//! and the norm-preserving projected Euler method, plus rollouts and a local
//! error diagnostic against an RK4 reference flow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::TwoLayerNetParams;
use crate::stencils::{eval_rhs, PdeSpec};
use crate::tensor::Field;

/// An evaluable map `Field → Field` on a fixed grid.
pub trait VectorField {
    fn eval(&self, u: &Field) -> Result<Field>;
}

impl VectorField for PdeSpec {
    fn eval(&self, u: &Field) -> Result<Field> {
        Ok(eval_rhs(self, u))
    }
}

impl VectorField for TwoLayerNetParams {
    fn eval(&self, u: &Field) -> Result<Field> {
        Ok(TwoLayerNetParams::eval(self, u))
    }
}

impl<T: VectorField + ?Sized> VectorField for &T {
    fn eval(&self, u: &Field) -> Result<Field> {
        (**self).eval(u)
    }
}

/// Adapts a closure into a [`VectorField`].
pub struct FnField<F>(pub F);

impl<F: Fn(&Field) -> Field> VectorField for FnField<F> {
    fn eval(&self, u: &Field) -> Result<Field> {
        Ok((self.0)(u))
    }
}

/// `F(U) - U ⟨U, F(U)⟩ / ⟨U, U⟩`: the component of `F` tangent to the sphere
/// of matrices with norm `‖U‖`.
pub struct TangentProjected<F>(pub F);

impl<F: VectorField> VectorField for TangentProjected<F> {
    fn eval(&self, u: &Field) -> Result<Field> {
        project_tangent(u, &self.0.eval(u)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    NormProjectedEuler,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub substeps: usize,
    pub scheme: Scheme,
}

impl StepperConfig {
    pub fn new(dt: f64, substeps: usize, scheme: Scheme) -> Result<Self> {
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(invalid(format!("time step must be finite and non-negative, got {dt}")));
        }
        if substeps == 0 {
            return Err(invalid("at least one sub-step is required"));
        }
        Ok(Self {
            dt,
            substeps,
            scheme,
        })
    }

    pub fn sub_dt(&self) -> f64 {
        self.dt / self.substeps as f64
    }
}

/// `u + h f(u)`.
pub fn euler_step(f: &impl VectorField, u: &Field, h: f64) -> Result<Field> {
    let mut out = u.clone();
    out.axpy(h, &f.eval(u)?);
    Ok(out)
}

/// Removes the component of `v` along `u` (Frobenius inner product).
pub fn project_tangent(u: &Field, v: &Field) -> Result<Field> {
    let uu = u.dot(u);
    if uu == 0.0 {
        return Err(Error::DegenerateInput(
            "tangent projection at a zero-norm field".into(),
        ));
    }
    let mut out = v.clone();
    out.axpy(-u.dot(v) / uu, u);
    Ok(out)
}

/// Euler step rescaled to the input norm:
/// `(u + h f(u)) ‖u‖ / ‖u + h f(u)‖`.
pub fn norm_projected_euler_step(f: &impl VectorField, u: &Field, h: f64) -> Result<Field> {
    let trial = euler_step(f, u, h)?;
    let n1 = trial.norm();
    if n1 == 0.0 {
        return Err(Error::DegenerateInput(
            "projected Euler intermediate has zero norm".into(),
        ));
    }
    let ratio = u.norm() / n1;
    Ok(trial.scaled(ratio))
}

/// `k`-fold composition of the configured scheme with step `dt/k`.
pub fn step(cfg: &StepperConfig, f: &impl VectorField, u: &Field) -> Result<Field> {
    let h = cfg.sub_dt();
    let mut cur = u.clone();
    for _ in 0..cfg.substeps {
        cur = match cfg.scheme {
            Scheme::Euler => euler_step(f, &cur, h)?,
            Scheme::NormProjectedEuler => norm_projected_euler_step(f, &cur, h)?,
        };
    }
    Ok(cur)
}

/// Applies [`step`] `m` times and returns frames `1..=m`.
pub fn rollout(cfg: &StepperConfig, f: &impl VectorField, u0: &Field, m: usize) -> Result<Vec<Field>> {
    let mut frames = Vec::with_capacity(m);
    let mut cur = u0.clone();
    for i in 1..=m {
        cur = step(cfg, f, &cur)?;
        if !cur.is_finite() {
            return Err(Error::Divergence {
                step: i,
                detail: "non-finite values in predicted frame".into(),
            });
        }
        frames.push(cur.clone());
    }
    Ok(frames)
}

/// The learned one-step map 𝒩_θ: the network vector field, tangent-projected
/// when the scheme is norm-preserving, advanced by the configured stepper.
#[derive(Clone, Debug)]
pub struct NetworkMap<'a> {
    pub theta: &'a TwoLayerNetParams,
    pub cfg: StepperConfig,
}

impl<'a> NetworkMap<'a> {
    pub fn new(theta: &'a TwoLayerNetParams, cfg: StepperConfig) -> Self {
        Self { theta, cfg }
    }

    pub fn vector_field(&self, u: &Field) -> Result<Field> {
        match self.cfg.scheme {
            Scheme::Euler => Ok(self.theta.eval(u)),
            Scheme::NormProjectedEuler => TangentProjected(self.theta).eval(u),
        }
    }

    pub fn step(&self, u: &Field) -> Result<Field> {
        match self.cfg.scheme {
            Scheme::Euler => step(&self.cfg, self.theta, u),
            Scheme::NormProjectedEuler => step(&self.cfg, &TangentProjected(self.theta), u),
        }
    }

    pub fn rollout(&self, u0: &Field, m: usize) -> Result<Vec<Field>> {
        match self.cfg.scheme {
            Scheme::Euler => rollout(&self.cfg, self.theta, u0, m),
            Scheme::NormProjectedEuler => rollout(&self.cfg, &TangentProjected(self.theta), u0, m),
        }
    }
}

/// Classic fourth-order Runge–Kutta with `n` steps of size `t/n`. Returns the
/// final state and every intermediate state (including the start).
pub fn rk4_flow(f: &impl VectorField, u0: &Field, t: f64, n: usize) -> Result<(Field, Vec<Field>)> {
    let h = t / n as f64;
    let mut states = Vec::with_capacity(n + 1);
    let mut u = u0.clone();
    states.push(u.clone());
    for i in 0..n {
        let k1 = f.eval(&u)?;
        let mut tmp = u.clone();
        tmp.axpy(0.5 * h, &k1);
        let k2 = f.eval(&tmp)?;
        let mut tmp = u.clone();
        tmp.axpy(0.5 * h, &k2);
        let k3 = f.eval(&tmp)?;
        let mut tmp = u.clone();
        tmp.axpy(h, &k3);
        let k4 = f.eval(&tmp)?;
        u.axpy(h / 6.0, &k1);
        u.axpy(h / 3.0, &k2);
        u.axpy(h / 3.0, &k3);
        u.axpy(h / 6.0, &k4);
        if !u.is_finite() {
            return Err(Error::Divergence {
                step: i + 1,
                detail: "reference flow produced non-finite values".into(),
            });
        }
        states.push(u.clone());
    }
    Ok((u, states))
}

/// Local error report for one step of the learned map against the exact
/// semi-discrete flow (proxied by fine RK4).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub dt: f64,
    pub k: usize,
    /// `‖Φ^δt_F(u₀) − Ψ^δt_{F_θ}(u₀)‖`.
    pub flow_error: f64,
    /// Largest `‖F(V) − F_θ(V)‖` over the sampled states.
    pub vf_mismatch_sup: f64,
    /// Largest sampled `‖F(V) − F(W)‖ / ‖V − W‖`.
    pub lipschitz_estimate: f64,
}

pub fn local_error_diagnostic(
    spec: &PdeSpec,
    theta: &TwoLayerNetParams,
    cfg: &StepperConfig,
    u0: &Field,
    exact_proxy_steps: usize,
) -> Result<DiagnosticReport> {
    if exact_proxy_steps < 100 {
        return Err(invalid(format!(
            "the reference flow needs at least 100 sub-steps, got {exact_proxy_steps}"
        )));
    }
    let (exact, states) = rk4_flow(spec, u0, cfg.dt, exact_proxy_steps)?;
    let map = NetworkMap::new(theta, *cfg);
    let predicted = map.step(u0)?;
    let flow_error = exact.sub(&predicted).norm();

    let mut vf_mismatch_sup: f64 = 0.0;
    let mut lipschitz_estimate: f64 = 0.0;
    // Fixed seed: the report is a deterministic function of its inputs.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let stride = (states.len() / 16).max(1);
    for v in states.iter().step_by(stride) {
        let fv = eval_rhs(spec, v);
        vf_mismatch_sup = vf_mismatch_sup.max(fv.sub(&map.vector_field(v)?).norm());

        let scale = 1e-3 * (v.max_abs().max(1.0));
        let w = v.map(|x| x + scale * rng.random_range(-1.0..1.0));
        let dist = v.sub(&w).norm();
        if dist > 0.0 {
            let ratio = fv.sub(&eval_rhs(spec, &w)).norm() / dist;
            lipschitz_estimate = lipschitz_estimate.max(ratio);
        }
    }

    Ok(DiagnosticReport {
        dt: cfg.dt,
        k: cfg.substeps,
        flow_error,
        vf_mismatch_sup,
        lipschitz_estimate,
    })
}
