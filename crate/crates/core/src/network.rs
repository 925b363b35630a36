//! Two-layer convolutional vector field `F_θ(U) = ℋ * σ(𝒦 * U + b₁) + b₂`
//! and the weight assignments that make it reproduce a finite-difference
//! right-hand side exactly.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stencils::{PdeSpec, Stencil};
use crate::tensor::{correlate_padded_acc, pad_for, Field, FilterBank, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Squared ReLU, `max{0,x}²`.
    Relu2,
    LeakyRelu { slope: f64 },
}

impl Activation {
    pub fn leaky(slope: f64) -> Result<Self> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(invalid(format!("leaky slope must lie in (0,1), got {slope}")));
        }
        Ok(Self::LeakyRelu { slope })
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Relu => x.max(0.0),
            Self::Relu2 => {
                let r = x.max(0.0);
                r * r
            }
            Self::LeakyRelu { slope } => (slope * x).max(x),
        }
    }

    /// Derivative, with value 0 (relu) or `slope` (leaky) at the kink.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Self::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Relu2 => 2.0 * x.max(0.0),
            Self::LeakyRelu { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Self::Relu => "relu",
            Self::Relu2 => "relu2",
            Self::LeakyRelu { .. } => "leaky_relu",
        }
    }
}

/// Free function form of [`Activation::apply`].
pub fn activate(a: Activation, x: f64) -> f64 {
    a.apply(x)
}

/// Parameters θ = (𝒦, ℋ, b₁, b₂) plus the activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerNetParams {
    pub k_bank: FilterBank,
    pub h_bank: FilterBank,
    pub b1: Vec<f64>,
    pub b2: f64,
    pub activation: Activation,
}

impl TwoLayerNetParams {
    /// All-zero parameters with `channels` hidden channels, first-layer filters
    /// of size `k` and second-layer filters of size `k_out`.
    pub fn zeros(channels: usize, k: usize, k_out: usize, activation: Activation) -> Result<Self> {
        Self::new(
            FilterBank::zeros(channels, 1, k)?,
            FilterBank::zeros(1, channels, k_out)?,
            vec![0.0; channels],
            0.0,
            activation,
        )
    }

    pub fn new(
        k_bank: FilterBank,
        h_bank: FilterBank,
        b1: Vec<f64>,
        b2: f64,
        activation: Activation,
    ) -> Result<Self> {
        if k_bank.c_in() != 1 || h_bank.c_out() != 1 {
            return Err(invalid("the network maps one channel to one channel"));
        }
        if h_bank.c_in() != k_bank.c_out() || b1.len() != k_bank.c_out() {
            return Err(invalid(format!(
                "hidden channel mismatch: K has {}, H expects {}, b1 has {}",
                k_bank.c_out(),
                h_bank.c_in(),
                b1.len()
            )));
        }
        if let Activation::LeakyRelu { slope } = activation {
            Activation::leaky(slope)?;
        }
        Ok(Self {
            k_bank,
            h_bank,
            b1,
            b2,
            activation,
        })
    }

    /// Fan-in scaled uniform initialisation: each bank draws from
    /// `U[-s, s]` with `s = 1/sqrt(c_in·k²)`; biases start at zero.
    pub fn random<R: Rng>(
        channels: usize,
        k: usize,
        k_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut theta = Self::zeros(channels, k, k_out, activation)?;
        let s1 = 1.0 / ((k * k) as f64).sqrt();
        for w in theta.k_bank.weights_mut() {
            *w = rng.random_range(-s1..=s1);
        }
        let s2 = 1.0 / ((channels * k_out * k_out) as f64).sqrt();
        for w in theta.h_bank.weights_mut() {
            *w = rng.random_range(-s2..=s2);
        }
        Ok(theta)
    }

    pub fn channels(&self) -> usize {
        self.k_bank.c_out()
    }

    pub fn count_params(&self) -> usize {
        self.k_bank.len() + self.h_bank.len() + self.b1.len() + 1
    }

    /// Parameters flattened in the order 𝒦, ℋ, b₁, b₂.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.count_params());
        v.extend_from_slice(self.k_bank.weights());
        v.extend_from_slice(self.h_bank.weights());
        v.extend_from_slice(&self.b1);
        v.push(self.b2);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.count_params() {
            return Err(invalid(format!(
                "expected {} parameters, got {}",
                self.count_params(),
                flat.len()
            )));
        }
        let (k, rest) = flat.split_at(self.k_bank.len());
        let (h, rest) = rest.split_at(self.h_bank.len());
        let (b1, b2) = rest.split_at(self.b1.len());
        self.k_bank.weights_mut().copy_from_slice(k);
        self.h_bank.weights_mut().copy_from_slice(h);
        self.b1.copy_from_slice(b1);
        self.b2 = b2[0];
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }

    /// Hidden pre-activations `𝒦 * u + b₁`, one flat `p²` buffer per channel.
    pub(crate) fn pre_activations(&self, u: &Field) -> Vec<Vec<f64>> {
        let p = u.p();
        let k = self.k_bank.k();
        let padded = pad_for(u.as_slice(), p, k);
        (0..self.channels())
            .map(|c| {
                let mut y = vec![0.0; p * p];
                correlate_padded_acc(&padded, p, self.k_bank.filter_slice(c, 0), k, &mut y);
                let b = self.b1[c];
                if b != 0.0 {
                    for v in &mut y {
                        *v += b;
                    }
                }
                y
            })
            .collect()
    }

    /// Output layer `ℋ * σ(y) + b₂` given hidden pre-activations.
    pub(crate) fn output_from_hidden(&self, u: &Field, hidden: &[Vec<f64>]) -> Field {
        let p = u.p();
        let k = self.h_bank.k();
        let mut out = vec![0.0; p * p];
        let act = self.activation;
        for (c, y) in hidden.iter().enumerate() {
            let w = self.h_bank.filter_slice(0, c);
            if w.iter().all(|&x| x == 0.0) {
                continue;
            }
            let z: Vec<f64> = y.iter().map(|&v| act.apply(v)).collect();
            let padded = pad_for(&z, p, k);
            correlate_padded_acc(&padded, p, w, k, &mut out);
        }
        if self.b2 != 0.0 {
            for v in &mut out {
                *v += self.b2;
            }
        }
        u.with_data(out)
    }

    pub fn eval(&self, u: &Field) -> Field {
        let hidden = self.pre_activations(u);
        self.output_from_hidden(u, &hidden)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CheckpointDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: CheckpointDoc = serde_json::from_str(s)?;
        doc.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// `F_θ(u)`.
pub fn eval_net(theta: &TwoLayerNetParams, u: &Field) -> Field {
    theta.eval(u)
}

pub fn count_params(theta: &TwoLayerNetParams) -> usize {
    theta.count_params()
}

/// On-disk checkpoint layout. serde_json writes shortest round-trip decimals,
/// and `float_roundtrip` parsing restores the exact bit pattern.
#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    channels: usize,
    k: usize,
    k_out: usize,
    activation: Activation,
    k_bank: Vec<f64>,
    h_bank: Vec<f64>,
    b1: Vec<f64>,
    b2: f64,
}

const CHECKPOINT_FORMAT: &str = "pixelpde-net-v1";

impl From<&TwoLayerNetParams> for CheckpointDoc {
    fn from(t: &TwoLayerNetParams) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            channels: t.channels(),
            k: t.k_bank.k(),
            k_out: t.h_bank.k(),
            activation: t.activation,
            k_bank: t.k_bank.weights().to_vec(),
            h_bank: t.h_bank.weights().to_vec(),
            b1: t.b1.clone(),
            b2: t.b2,
        }
    }
}

impl TryFrom<CheckpointDoc> for TwoLayerNetParams {
    type Error = Error;

    fn try_from(d: CheckpointDoc) -> Result<Self> {
        if d.format != CHECKPOINT_FORMAT {
            return Err(invalid(format!("unknown checkpoint format {:?}", d.format)));
        }
        let all_finite = d
            .k_bank
            .iter()
            .chain(&d.h_bank)
            .chain(&d.b1)
            .chain(std::iter::once(&d.b2))
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(invalid("checkpoint contains non-finite weights"));
        }
        Self::new(
            FilterBank::from_vec(d.channels, 1, d.k, d.k_bank)?,
            FilterBank::from_vec(1, d.channels, d.k_out, d.h_bank)?,
            d.b1,
            d.b2,
            d.activation,
        )
    }
}

/// Two-channel network reproducing `U ↦ L*U` via `x = σ(x) - σ(-x)` (ReLU)
/// or `x = (σ(x) - σ(-x)) / (1+a)` (LeakyReLU with slope `a`).
pub fn construct_linear(
    l: &Stencil,
    filter_size: usize,
    activation: Activation,
) -> Result<TwoLayerNetParams> {
    let out_weight = match activation {
        Activation::Relu => 1.0,
        Activation::LeakyRelu { slope } => {
            Activation::leaky(slope)?;
            1.0 / (1.0 + slope)
        }
        Activation::Relu2 => {
            return Err(invalid(
                "the two-channel linear construction needs relu or leaky relu; use construct_quadratic for relu2",
            ))
        }
    };
    let mut theta = TwoLayerNetParams::zeros(2, filter_size, filter_size, activation)?;
    let lm = l.coeffs();
    theta.k_bank.set_filter(0, 0, lm)?;
    theta.k_bank.set_filter(1, 0, &lm.scaled(-1.0))?;
    theta.h_bank.set_filter(0, 0, &point(out_weight))?;
    theta.h_bank.set_filter(0, 1, &point(-out_weight))?;
    Ok(theta)
}

/// `(4 + 6I)`-channel squared-ReLU network reproducing
/// `L*U + Σ β_i (D_a*U) ⊙ (D_b*U)` through
/// `x = ½(σ(x+1) + σ(-x-1) - σ(x) - σ(-x)) - ½` and
/// `ab = ½((a+b)² - a² - b²)` with `y² = σ(y) + σ(-y)`.
pub fn construct_quadratic(spec: &PdeSpec, filter_size: usize) -> Result<TwoLayerNetParams> {
    let n = spec.num_interactions();
    let channels = 4 + 6 * n;
    let mut theta = TwoLayerNetParams::zeros(channels, filter_size, filter_size, Activation::Relu2)?;
    theta.b1[0] = 1.0;
    theta.b1[1] = -1.0;
    theta.b2 = -0.5;

    let l = spec.linear.coeffs();
    let neg_l = l.scaled(-1.0);
    for (c, m) in [l, &neg_l, l, &neg_l].into_iter().enumerate() {
        theta.k_bank.set_filter(c, 0, m)?;
    }
    for (c, w) in [0.5, 0.5, -0.5, -0.5].into_iter().enumerate() {
        theta.h_bank.set_filter(0, c, &point(w))?;
    }

    for (i, term) in spec.interactions.iter().enumerate() {
        let base = 4 + 6 * i;
        let sum = term.d_a.plus(&term.d_b);
        let filters = [
            sum.coeffs().clone(),
            sum.coeffs().scaled(-1.0),
            term.d_a.coeffs().clone(),
            term.d_a.coeffs().scaled(-1.0),
            term.d_b.coeffs().clone(),
            term.d_b.coeffs().scaled(-1.0),
        ];
        let half = term.beta / 2.0;
        let weights = [half, half, -half, -half, -half, -half];
        for (j, (f, w)) in filters.iter().zip(weights).enumerate() {
            theta.k_bank.set_filter(base + j, 0, f)?;
            theta.h_bank.set_filter(0, base + j, &point(w))?;
        }
    }
    Ok(theta)
}

fn point(w: f64) -> Matrix {
    Matrix::from_rows([[w]])
}
