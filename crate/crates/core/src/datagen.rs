//! Reference trajectories: random initial conditions, spectral implicit
//! solvers for advection, heat and Fisher dynamics on the periodic grid, and
//! the binary dataset format.
//!
//! The solvers use the same 3×3 stencils as the networks, diagonalised by the
//! 2-D DFT. Time stepping is implicit midpoint / Crank–Nicolson, so every
//! scheme is second order in time and inherits the stencils' second order in
//! space.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stencils::{d_dx, d_dy, laplacian_5pt, Stencil};
use crate::tensor::Field;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeKind {
    Advection,
    Heat,
    Fisher,
}

impl PdeKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Advection => "advection",
            Self::Heat => "heat",
            Self::Fisher => "fisher",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "advection" => Ok(Self::Advection),
            "heat" => Ok(Self::Heat),
            "fisher" => Ok(Self::Fisher),
            other => Err(invalid(format!("unknown PDE tag {other:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Initial conditions

/// `sin(2πα₁(x−x_s)) cos(2πα₂(y−y_s)) + 1` on the p×p grid.
pub fn advection_ic(p: usize, a1: f64, a2: f64, xs: f64, ys: f64) -> Result<Field> {
    Field::sample(p, |x, y| {
        (2.0 * PI * a1 * (x - xs)).sin() * (2.0 * PI * a2 * (y - ys)).cos() + 1.0
    })
}

/// α₁, α₂ uniform on {5,6,7,8}; x_s, y_s uniform on [0,1].
pub fn random_ic_advection<R: Rng>(p: usize, rng: &mut R) -> Result<Field> {
    let a1 = rng.random_range(5..=8) as f64;
    let a2 = rng.random_range(5..=8) as f64;
    let xs = rng.random::<f64>();
    let ys = rng.random::<f64>();
    advection_ic(p, a1, a2, xs, ys)
}

/// `sin(kπ(x−x_p)) sin(kπ(y−y_p))`. For odd `k` this is not 1-periodic; the
/// samples on `[0,1)²` are used as-is.
pub fn heat_ic(p: usize, k: f64, xp: f64, yp: f64) -> Result<Field> {
    Field::sample(p, |x, y| (k * PI * (x - xp)).sin() * (k * PI * (y - yp)).sin())
}

/// `k` uniform on {2,…,7}; x_p, y_p normal with mean 1 and variance 0.5.
pub fn random_ic_heat<R: Rng>(p: usize, rng: &mut R) -> Result<Field> {
    let k = rng.random_range(2..=7) as f64;
    let normal = Normal::new(1.0, 0.5f64.sqrt()).expect("valid normal parameters");
    let xp = normal.sample(rng);
    let yp = normal.sample(rng);
    heat_ic(p, k, xp, yp)
}

// ---------------------------------------------------------------------------
// Spectral machinery

/// 2-D DFT on a p×p periodic grid.
pub struct Spectral {
    p: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Spectral {
    pub fn new(p: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            p,
            forward: planner.plan_fft_forward(p),
            inverse: planner.plan_fft_inverse(p),
        }
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let p = self.p;
        // rows
        fft.process(data);
        // columns via transpose
        let mut t = vec![Complex64::new(0.0, 0.0); p * p];
        for i in 0..p {
            for j in 0..p {
                t[j * p + i] = data[i * p + j];
            }
        }
        fft.process(&mut t);
        for i in 0..p {
            for j in 0..p {
                data[i * p + j] = t[j * p + i];
            }
        }
    }

    pub fn fft2(&self, u: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    /// Inverse transform, keeping the real part.
    pub fn ifft2_real(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut data, &self.inverse);
        let scale = 1.0 / (self.p * self.p) as f64;
        data.iter().map(|c| c.re * scale).collect()
    }

    /// Eigenvalue of periodic correlation with `s` on the Fourier mode
    /// `exp(2πi(a h + b k)/p)`, for every `(a, b)` in DFT order.
    pub fn stencil_symbol(&self, s: &Stencil) -> Vec<Complex64> {
        let p = self.p;
        let m = s.coeffs();
        let mut out = Vec::with_capacity(p * p);
        for a in 0..p {
            for b in 0..p {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..3 {
                    for j in 0..3 {
                        let w = m.get(i, j);
                        if w == 0.0 {
                            continue;
                        }
                        let phase = 2.0 * PI
                            * ((a as f64) * (i as f64 - 1.0) + (b as f64) * (j as f64 - 1.0))
                            / p as f64;
                        acc += Complex64::from_polar(w, phase);
                    }
                }
                out.push(acc);
            }
        }
        out
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

/// Repeatedly multiplies the spectrum by `multiplier`. Returns frames `0..=n`.
fn spectral_march(u0: &Field, multiplier: &[Complex64], n_steps: usize, sp: &Spectral) -> Vec<Field> {
    let mut frames = Vec::with_capacity(n_steps + 1);
    frames.push(u0.clone());
    let mut cur = u0.clone();
    for _ in 0..n_steps {
        let mut hat = sp.fft2(cur.as_slice());
        for (c, m) in hat.iter_mut().zip(multiplier) {
            *c *= m;
        }
        cur = cur.with_data(sp.ifft2_real(hat));
        frames.push(cur.clone());
    }
    frames
}

/// Implicit midpoint (Cayley) steps for `∂t u = b₁∂x u + b₂∂y u` with centred
/// differences: `(I − dt/2 L) u₊ = (I + dt/2 L) u`. The stencil is
/// skew-adjoint, so every step is an isometry in the Frobenius norm.
/// Returns frames `0..=n_steps`.
pub fn ref_solve_advection(u0: &Field, dt: f64, n_steps: usize, b: [f64; 2]) -> Result<Vec<Field>> {
    check_dt(dt)?;
    let l = d_dx(u0.dx())?.scaled(b[0]).plus(&d_dy(u0.dx())?.scaled(b[1]));
    let sp = Spectral::new(u0.p());
    let multiplier: Vec<Complex64> = sp
        .stencil_symbol(&l)
        .into_iter()
        .map(|s| {
            let den = Complex64::new(1.0, 0.0) - 0.5 * dt * s;
            assert!(den.norm() >= 1.0 - 1e-12, "skew symbol has |1 - dt/2 s| >= 1");
            (Complex64::new(1.0, 0.0) + 0.5 * dt * s) / den
        })
        .collect();
    Ok(spectral_march(u0, &multiplier, n_steps, &sp))
}

/// Crank–Nicolson for `∂t u = αΔu` with the five-point Laplacian.
/// Returns frames `0..=n_steps`.
pub fn ref_solve_heat(u0: &Field, dt: f64, n_steps: usize, alpha: f64) -> Result<Vec<Field>> {
    check_dt(dt)?;
    if !(alpha >= 0.0) {
        return Err(invalid(format!("diffusivity must be non-negative, got {alpha}")));
    }
    let lap = laplacian_5pt(u0.dx())?;
    let sp = Spectral::new(u0.p());
    let multiplier: Vec<Complex64> = sp
        .stencil_symbol(&lap)
        .into_iter()
        .map(|s| {
            let z = 0.5 * dt * alpha * s.re;
            Complex64::new((1.0 + z) / (1.0 - z), 0.0)
        })
        .collect();
    Ok(spectral_march(u0, &multiplier, n_steps, &sp))
}

pub const FISHER_TOL: f64 = 1e-12;
pub const FISHER_MAX_SWEEPS: usize = 50;

/// Second-order implicit scheme for `∂t u = αΔu + u(1−u)`:
///
/// `u₁ = u₀ + dt [αΔu_½ + u_½ − (u₁² + u₁u₀ + u₀²)/3]`, `u_½ = (u₀+u₁)/2`.
///
/// Each step runs a fixed-point iteration that lags the quadratic term and
/// solves the linear Crank–Nicolson part spectrally, until successive
/// iterates agree to [`FISHER_TOL`] in the max norm.
pub fn ref_solve_fisher(u0: &Field, dt: f64, n_steps: usize, alpha: f64) -> Result<Vec<Field>> {
    check_dt(dt)?;
    if !(alpha >= 0.0) {
        return Err(invalid(format!("diffusivity must be non-negative, got {alpha}")));
    }
    let linear = laplacian_5pt(u0.dx())?.scaled(alpha).plus(&Stencil::identity());
    let sp = Spectral::new(u0.p());
    let symbol: Vec<f64> = sp.stencil_symbol(&linear).into_iter().map(|s| s.re).collect();
    let mut explicit = Vec::with_capacity(symbol.len());
    let mut implicit = Vec::with_capacity(symbol.len());
    for &a in &symbol {
        let den = 1.0 - 0.5 * dt * a;
        if den.abs() < 1e-12 {
            return Err(invalid(format!(
                "time step {dt} makes the implicit Fisher operator singular"
            )));
        }
        explicit.push(1.0 + 0.5 * dt * a);
        implicit.push(1.0 / den);
    }

    let mut frames = Vec::with_capacity(n_steps + 1);
    frames.push(u0.clone());
    let mut cur = u0.clone();
    for _ in 0..n_steps {
        let u0h = sp.fft2(cur.as_slice());
        let base: Vec<Complex64> = u0h.iter().zip(&explicit).map(|(c, e)| c * e).collect();
        let mut iterate = cur.as_slice().to_vec();
        let mut converged = false;
        let mut residual = f64::INFINITY;
        for _ in 0..FISHER_MAX_SWEEPS {
            let quad: Vec<f64> = iterate
                .iter()
                .zip(cur.as_slice())
                .map(|(&a, &b)| (a * a + a * b + b * b) / 3.0)
                .collect();
            let qh = sp.fft2(&quad);
            let rhs: Vec<Complex64> = base
                .iter()
                .zip(&qh)
                .zip(&implicit)
                .map(|((b, q), i)| (b - dt * q) * i)
                .collect();
            let next = sp.ifft2_real(rhs);
            if next.iter().any(|v| !v.is_finite()) {
                residual = f64::INFINITY;
                break;
            }
            residual = next
                .iter()
                .zip(&iterate)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            iterate = next;
            if residual <= FISHER_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::SolverFailure {
                sweeps: FISHER_MAX_SWEEPS,
                residual,
            });
        }
        cur = cur.with_data(iterate);
        frames.push(cur.clone());
    }
    Ok(frames)
}

// ---------------------------------------------------------------------------
// Datasets

/// N trajectories of M+1 frames each on a common p×p grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dt: f64,
    pub dx: f64,
    pub p: usize,
    pub pde_tag: String,
    sequences: Vec<Vec<Field>>,
}

impl Dataset {
    pub fn new(sequences: Vec<Vec<Field>>, dt: f64, pde_tag: impl Into<String>) -> Result<Self> {
        let first = sequences
            .first()
            .and_then(|s| s.first())
            .ok_or_else(|| invalid("dataset needs at least one sequence with one frame"))?;
        let p = first.p();
        let dx = first.dx();
        let frames = sequences[0].len();
        for s in &sequences {
            if s.len() != frames {
                return Err(invalid("all sequences must have the same number of frames"));
            }
            if s.iter().any(|f| f.p() != p || !f.is_finite()) {
                return Err(invalid("frames must share the grid size and be finite"));
            }
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        let pde_tag = pde_tag.into();
        if pde_tag.len() > u8::MAX as usize || !pde_tag.is_ascii() {
            return Err(invalid("PDE tag must be ASCII and at most 255 bytes"));
        }
        Ok(Self {
            dt,
            dx,
            p,
            pde_tag,
            sequences,
        })
    }

    pub fn n_sequences(&self) -> usize {
        self.sequences.len()
    }

    /// Number of steps M (frames per sequence minus one).
    pub fn m(&self) -> usize {
        self.sequences[0].len() - 1
    }

    pub fn sequence(&self, n: usize) -> &[Field] {
        &self.sequences[n]
    }

    pub fn sequences(&self) -> &[Vec<Field>] {
        &self.sequences
    }

    /// Sequences with the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let seqs = indices
            .iter()
            .map(|&i| {
                self.sequences
                    .get(i)
                    .cloned()
                    .ok_or_else(|| invalid(format!("sequence index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(seqs, self.dt, self.pde_tag.clone())
    }

    /// First `frames` frames of every sequence.
    pub fn truncated(&self, frames: usize) -> Result<Self> {
        if frames == 0 || frames > self.m() + 1 {
            return Err(invalid(format!("cannot keep {frames} of {} frames", self.m() + 1)));
        }
        let seqs = self.sequences.iter().map(|s| s[..frames].to_vec()).collect();
        Self::new(seqs, self.dt, self.pde_tag.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n_vals = self.sequences.len() * (self.m() + 1) * self.p * self.p;
        let mut out = Vec::with_capacity(HEADER_FIXED + self.pde_tag.len() + 8 * n_vals);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sequences.len() as u32).to_le_bytes());
        out.extend_from_slice(&((self.m() + 1) as u32).to_le_bytes());
        out.extend_from_slice(&(self.p as u32).to_le_bytes());
        out.extend_from_slice(&self.dt.to_le_bytes());
        out.extend_from_slice(&self.dx.to_le_bytes());
        out.push(self.pde_tag.len() as u8);
        out.extend_from_slice(self.pde_tag.as_bytes());
        for seq in &self.sequences {
            for frame in seq {
                for v in frame.as_slice() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                detail: format!("bad magic {magic:?}, expected \"PXD1\""),
            });
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format {
                offset: 4,
                detail: format!("unsupported version {version}"),
            });
        }
        let n = r.u32()? as usize;
        let frames = r.u32()? as usize;
        let p = r.u32()? as usize;
        let dt = r.f64()?;
        let dx = r.f64()?;
        let tag_len = r.take(1)?[0] as usize;
        let tag_off = r.pos;
        let tag = std::str::from_utf8(r.take(tag_len)?)
            .ok()
            .filter(|t| t.is_ascii())
            .ok_or_else(|| Error::Format {
                offset: tag_off as u64,
                detail: "PDE tag is not ASCII".into(),
            })?
            .to_string();
        if n == 0 || frames == 0 || p < 3 {
            return Err(Error::Format {
                offset: 8,
                detail: format!("invalid dimensions N={n}, frames={frames}, p={p}"),
            });
        }
        let expected = r.pos as u64 + 8 * (n as u64) * (frames as u64) * (p as u64) * (p as u64);
        if bytes.len() as u64 != expected {
            return Err(Error::Format {
                offset: bytes.len() as u64,
                detail: format!(
                    "expected {expected} bytes for N={n}, frames={frames}, p={p}, got {}",
                    bytes.len()
                ),
            });
        }
        let mut sequences = Vec::with_capacity(n);
        for _ in 0..n {
            let mut seq = Vec::with_capacity(frames);
            for _ in 0..frames {
                let mut data = Vec::with_capacity(p * p);
                for _ in 0..p * p {
                    let off = r.pos;
                    let v = r.f64()?;
                    if !v.is_finite() {
                        return Err(Error::Format {
                            offset: off as u64,
                            detail: format!("non-finite value {v}"),
                        });
                    }
                    data.push(v);
                }
                seq.push(Field::from_vec(p, dx, data).map_err(|e| Error::Format {
                    offset: 0,
                    detail: e.to_string(),
                })?);
            }
            sequences.push(seq);
        }
        Self::new(sequences, dt, tag).map_err(|e| Error::Format {
            offset: 0,
            detail: e.to_string(),
        })
    }
}

const MAGIC: &[u8; 4] = b"PXD1";
const FORMAT_VERSION: u32 = 1;
const HEADER_FIXED: usize = 4 + 4 * 4 + 8 * 2 + 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                offset: self.bytes.len() as u64,
                detail: format!(
                    "truncated file: expected at least {} bytes, got {}",
                    self.pos + n,
                    self.bytes.len()
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    if ds.n_sequences() == 0 {
        return Err(invalid("refusing to save an empty dataset"));
    }
    fs::write(path, ds.to_bytes())?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::from_bytes(&fs::read(path)?)
}

/// `data.pxd` → `data.meta.json`.
pub fn sidecar_path(path: impl AsRef<Path>) -> PathBuf {
    path.as_ref().with_extension("meta.json")
}

// ---------------------------------------------------------------------------
// Generation

/// Parameters for [`generate_dataset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub pde: PdeKind,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    /// Defaults to 0.02 for advection and `0.24 dx²/α` for heat and Fisher.
    pub dt: Option<f64>,
    pub alpha: f64,
    pub b: [f64; 2],
    pub seed: u64,
    /// Fisher only: keep initial conditions with `‖U⁰‖_F` above this value.
    /// Defaults to `10 · p/100`.
    pub min_norm: Option<f64>,
    /// Solve on a grid `refine` times finer and subsample to `p`.
    pub refine: usize,
}

impl GenConfig {
    pub fn new(pde: PdeKind, n: usize, m: usize, p: usize, seed: u64) -> Self {
        Self {
            pde,
            n,
            m,
            p,
            dt: None,
            alpha: 0.01,
            b: [1.0, 1.0],
            seed,
            min_norm: None,
            refine: 1,
        }
    }

    pub fn resolved_dt(&self) -> Result<f64> {
        if let Some(dt) = self.dt {
            check_dt(dt)?;
            return Ok(dt);
        }
        match self.pde {
            PdeKind::Advection => Ok(0.02),
            PdeKind::Heat | PdeKind::Fisher => {
                if !(self.alpha > 0.0) {
                    return Err(Error::Config(
                        "the default time step 0.24 dx²/α needs α > 0; pass dt explicitly".into(),
                    ));
                }
                Ok(diffusive_dt(self.p, self.alpha))
            }
        }
    }

    pub fn resolved_min_norm(&self) -> f64 {
        self.min_norm.unwrap_or(10.0 * self.p as f64 / 100.0)
    }
}

/// `0.24 dx² / α` with `dx = 1/p`.
pub fn diffusive_dt(p: usize, alpha: f64) -> f64 {
    let dx = 1.0 / p as f64;
    0.24 * dx * dx / alpha
}

pub const MAX_REJECTIONS: usize = 1000;

/// Per-sequence generator: stream `index` of a ChaCha stream seeded with `seed`,
/// so sequences are independent of generation order.
pub fn sequence_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn generate_dataset(cfg: &GenConfig) -> Result<Dataset> {
    if cfg.n == 0 {
        return Err(Error::Config("N must be positive".into()));
    }
    if cfg.p < 3 {
        return Err(Error::Config(format!("p must be at least 3, got {}", cfg.p)));
    }
    if cfg.refine == 0 {
        return Err(Error::Config("refine factor must be positive".into()));
    }
    if !(cfg.alpha >= 0.0) {
        return Err(Error::Config(format!("α must be non-negative, got {}", cfg.alpha)));
    }
    let dt = cfg.resolved_dt()?;
    let fine_p = cfg.p * cfg.refine;
    let mut sequences = Vec::with_capacity(cfg.n);
    for idx in 0..cfg.n {
        let mut rng = sequence_rng(cfg.seed, idx as u64);
        let u0 = match cfg.pde {
            PdeKind::Advection => random_ic_advection(fine_p, &mut rng)?,
            PdeKind::Heat => random_ic_heat(fine_p, &mut rng)?,
            PdeKind::Fisher => {
                let threshold = cfg.resolved_min_norm();
                let mut accepted = None;
                for _ in 0..MAX_REJECTIONS {
                    let cand = random_ic_heat(fine_p, &mut rng)?;
                    if subsample(&cand, cfg.refine)?.norm() > threshold {
                        accepted = Some(cand);
                        break;
                    }
                }
                accepted.ok_or_else(|| {
                    Error::Config(format!(
                        "rejected {MAX_REJECTIONS} consecutive initial conditions for sequence {idx}: none had norm above {threshold}"
                    ))
                })?
            }
        };
        let frames = match cfg.pde {
            PdeKind::Advection => ref_solve_advection(&u0, dt, cfg.m, cfg.b)?,
            PdeKind::Heat => ref_solve_heat(&u0, dt, cfg.m, cfg.alpha)?,
            PdeKind::Fisher => ref_solve_fisher(&u0, dt, cfg.m, cfg.alpha)?,
        };
        sequences.push(
            frames
                .iter()
                .map(|f| subsample(f, cfg.refine))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Dataset::new(sequences, dt, cfg.pde.tag())
}

/// Keeps every `factor`-th grid point along each axis.
pub fn subsample(u: &Field, factor: usize) -> Result<Field> {
    if factor == 1 {
        return Ok(u.clone());
    }
    let p = u.p() / factor;
    let mut data = Vec::with_capacity(p * p);
    for h in 0..p {
        for k in 0..p {
            data.push(u.get(h * factor, k * factor));
        }
    }
    Field::from_vec(p, u.dx() * factor as f64, data)
}

/// Sidecar document recording how a dataset was produced.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: GenConfig,
    pub dt: f64,
    pub dx: f64,
}

pub fn write_sidecar(path: impl AsRef<Path>, cfg: &GenConfig, ds: &Dataset) -> Result<()> {
    let meta = DatasetMeta {
        generator: cfg.clone(),
        dt: ds.dt,
        dx: ds.dx,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}
