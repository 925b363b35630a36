//! Dense fields on a uniform periodic grid, filter banks, and periodic "same"
//! correlation.
//!
//! Row index `h` runs along x and column index `k` along y, so
//! `field.get(h, k) ≈ u(x_h, y_k)`. Every convolution in this crate is a
//! correlation: the output at `(h, k)` is the Frobenius inner product of the
//! filter with the periodically padded window centred at `(h, k)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Square matrix stored row-major. Used for filters, stencils and padded grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(invalid(format!(
                "matrix of size {n} needs {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    pub fn from_rows<const N: usize>(rows: [[f64; N]; N]) -> Self {
        Self {
            n: N,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    /// The K×K delta filter: zero everywhere except the centre.
    pub fn delta(k: usize) -> Self {
        let mut m = Self::zeros(k);
        m.set(k / 2, k / 2, 1.0);
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|x| s * x).collect(),
        }
    }

    /// Entry-wise sum; sizes must agree.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(invalid(format!(
                "matrix size mismatch: {} vs {}",
                self.n, other.n
            )));
        }
        Ok(Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Filter rotated by 180 degrees. Correlating with the flipped filter is the
    /// adjoint of correlating with the original under periodic padding.
    pub fn flipped(&self) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().rev().copied().collect(),
        }
    }
}

/// Nodal values of a scalar function on a p×p periodic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    p: usize,
    dx: f64,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(p: usize, dx: f64) -> Result<Self> {
        Self::from_vec(p, dx, vec![0.0; p * p])
    }

    pub fn constant(p: usize, dx: f64, c: f64) -> Result<Self> {
        Self::from_vec(p, dx, vec![c; p * p])
    }

    pub fn from_vec(p: usize, dx: f64, data: Vec<f64>) -> Result<Self> {
        if p < 3 {
            return Err(invalid(format!("grid size p must be at least 3, got {p}")));
        }
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(invalid(format!("grid spacing must be positive, got {dx}")));
        }
        if data.len() != p * p {
            return Err(invalid(format!(
                "field with p={p} needs {} entries, got {}",
                p * p,
                data.len()
            )));
        }
        Ok(Self { p, dx, data })
    }

    /// Samples `f(x_h, y_k)` at `x_h = h/p`, `y_k = k/p` on the unit square
    /// (endpoint excluded), with `dx = 1/p`.
    pub fn sample(p: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let dx = 1.0 / p as f64;
        let mut data = Vec::with_capacity(p * p);
        for h in 0..p {
            for k in 0..p {
                data.push(f(h as f64 * dx, k as f64 * dx));
            }
        }
        Self::from_vec(p, dx, data)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn get(&self, h: usize, k: usize) -> f64 {
        self.data[h * self.p + k]
    }

    pub fn set(&mut self, h: usize, k: usize, v: f64) {
        self.data[h * self.p + k] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Same grid, new values.
    pub fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            p: self.p,
            dx: self.dx,
            data,
        }
    }

    pub fn zeros_like(&self) -> Self {
        self.with_data(vec![0.0; self.data.len()])
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        self.with_data(self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.p, other.p);
        self.with_data(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|x| s * x)
    }

    pub fn add(&self, other: &Field) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Field) {
        for (y, &xi) in self.data.iter_mut().zip(&x.data) {
            *y += a * xi;
        }
    }

    /// Frobenius inner product `trace(selfᵀ other)`.
    pub fn dot(&self, other: &Field) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Circular shift: `out[h][k] = self[(h - a) mod p][(k - b) mod p]`.
    pub fn shifted(&self, a: isize, b: isize) -> Self {
        let p = self.p as isize;
        let mut out = self.zeros_like();
        for h in 0..p {
            for k in 0..p {
                let sh = (h - a).rem_euclid(p) as usize;
                let sk = (k - b).rem_euclid(p) as usize;
                out.set(h as usize, k as usize, self.get(sh, sk));
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ordered collection of fields sharing one grid (a third-order tensor).
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStack {
    channels: Vec<Field>,
}

impl ChannelStack {
    pub fn new(channels: Vec<Field>) -> Result<Self> {
        let Some(first) = channels.first() else {
            return Err(invalid("channel stack needs at least one channel"));
        };
        if channels.iter().any(|c| c.p() != first.p()) {
            return Err(invalid("all channels must share the same grid size"));
        }
        Ok(Self { channels })
    }

    pub fn single(field: Field) -> Self {
        Self {
            channels: vec![field],
        }
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channel(&self, i: usize) -> &Field {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Field] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Field> {
        self.channels
    }
}

/// Order-four tensor of filters with shape `c_out × c_in × k × k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    c_out: usize,
    c_in: usize,
    k: usize,
    weights: Vec<f64>,
}

impl FilterBank {
    pub fn zeros(c_out: usize, c_in: usize, k: usize) -> Result<Self> {
        Self::from_vec(c_out, c_in, k, vec![0.0; c_out * c_in * k * k])
    }

    pub fn from_vec(c_out: usize, c_in: usize, k: usize, weights: Vec<f64>) -> Result<Self> {
        if c_out == 0 || c_in == 0 {
            return Err(invalid("filter bank channel counts must be positive"));
        }
        check_odd(k)?;
        if weights.len() != c_out * c_in * k * k {
            return Err(invalid(format!(
                "filter bank {c_out}x{c_in}x{k}x{k} needs {} weights, got {}",
                c_out * c_in * k * k,
                weights.len()
            )));
        }
        Ok(Self {
            c_out,
            c_in,
            k,
            weights,
        })
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn offset(&self, o: usize, i: usize) -> usize {
        (o * self.c_in + i) * self.k * self.k
    }

    pub fn filter_slice(&self, o: usize, i: usize) -> &[f64] {
        let off = self.offset(o, i);
        &self.weights[off..off + self.k * self.k]
    }

    pub fn filter_slice_mut(&mut self, o: usize, i: usize) -> &mut [f64] {
        let off = self.offset(o, i);
        let kk = self.k * self.k;
        &mut self.weights[off..off + kk]
    }

    pub fn filter(&self, o: usize, i: usize) -> Matrix {
        Matrix {
            n: self.k,
            data: self.filter_slice(o, i).to_vec(),
        }
    }

    /// Stores `m` (embedded to this bank's filter size) at `[o][i]`.
    pub fn set_filter(&mut self, o: usize, i: usize, m: &Matrix) -> Result<()> {
        let embedded = embed_stencil(m, self.k)?;
        self.filter_slice_mut(o, i)
            .copy_from_slice(embedded.as_slice());
        Ok(())
    }
}

fn check_odd(k: usize) -> Result<()> {
    if k % 2 == 0 {
        return Err(invalid(format!("filter size must be odd, got {k}")));
    }
    Ok(())
}

/// Pads `u` periodically by `margin` on every side.
/// `out[i][j] = u[(i - margin) mod p][(j - margin) mod p]`.
pub fn pad_periodic(u: &Field, margin: usize) -> Result<Matrix> {
    if margin > u.p() {
        return Err(invalid(format!(
            "padding margin {margin} exceeds grid size {}",
            u.p()
        )));
    }
    Ok(Matrix {
        n: u.p() + 2 * margin,
        data: pad_raw(u.as_slice(), u.p(), margin),
    })
}

fn pad_raw(src: &[f64], p: usize, margin: usize) -> Vec<f64> {
    let n = p + 2 * margin;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let row = (i + p * 2 - margin) % p;
        let src_row = &src[row * p..(row + 1) * p];
        for j in 0..n {
            out.push(src_row[(j + p * 2 - margin) % p]);
        }
    }
    out
}

/// Accumulates `out += w ⋆ src` (periodic correlation, `k×k` filter `w`).
///
/// Per output entry the additions follow window rows then columns. Zero taps
/// are skipped.
pub(crate) fn correlate_acc(src: &[f64], p: usize, w: &[f64], k: usize, out: &mut [f64]) {
    let r = k / 2;
    let padded = pad_raw(src, p, r);
    correlate_padded_acc(&padded, p, w, k, out);
}

pub(crate) fn correlate_padded_acc(padded: &[f64], p: usize, w: &[f64], k: usize, out: &mut [f64]) {
    let n = p + 2 * (k / 2);
    for i in 0..k {
        for j in 0..k {
            let wij = w[i * k + j];
            if wij == 0.0 {
                continue;
            }
            for h in 0..p {
                let prow = &padded[(h + i) * n + j..(h + i) * n + j + p];
                let orow = &mut out[h * p..(h + 1) * p];
                for (o, x) in orow.iter_mut().zip(prow) {
                    *o += wij * x;
                }
            }
        }
    }
}

/// Gradient of `⟨g, w ⋆ src⟩` with respect to `w`, accumulated into `gw`.
pub(crate) fn filter_grad_acc(padded_src: &[f64], p: usize, g: &[f64], k: usize, gw: &mut [f64]) {
    let n = p + 2 * (k / 2);
    for i in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for h in 0..p {
                let prow = &padded_src[(h + i) * n + j..(h + i) * n + j + p];
                s += dot(&g[h * p..(h + 1) * p], prow);
            }
            gw[i * k + j] += s;
        }
    }
}

pub(crate) fn pad_for(src: &[f64], p: usize, k: usize) -> Vec<f64> {
    pad_raw(src, p, k / 2)
}

/// Periodic "same" correlation of a field with a single odd-sized filter.
pub fn conv2d_same(u: &Field, filter: &Matrix) -> Result<Field> {
    let k = filter.size();
    check_odd(k)?;
    if k > 2 * u.p() + 1 {
        return Err(invalid(format!(
            "filter size {k} too large for grid size {}",
            u.p()
        )));
    }
    let mut out = vec![0.0; u.p() * u.p()];
    correlate_acc(u.as_slice(), u.p(), filter.as_slice(), k, &mut out);
    Ok(u.with_data(out))
}

/// Multi-channel correlation: output channel `o` is `Σ_i bank[o][i] ⋆ x_i`.
pub fn conv_bank(x: &ChannelStack, bank: &FilterBank) -> Result<ChannelStack> {
    if x.len() != bank.c_in() {
        return Err(invalid(format!(
            "filter bank expects {} input channels, got {}",
            bank.c_in(),
            x.len()
        )));
    }
    let first = x.channel(0);
    let p = first.p();
    let k = bank.k();
    if k > 2 * p + 1 {
        return Err(invalid(format!("filter size {k} too large for grid size {p}")));
    }
    let padded: Vec<Vec<f64>> = x
        .channels()
        .iter()
        .map(|c| pad_for(c.as_slice(), p, k))
        .collect();
    let mut outs = Vec::with_capacity(bank.c_out());
    for o in 0..bank.c_out() {
        let mut out = vec![0.0; p * p];
        for (i, pad) in padded.iter().enumerate() {
            correlate_padded_acc(pad, p, bank.filter_slice(o, i), k, &mut out);
        }
        outs.push(first.with_data(out));
    }
    ChannelStack::new(outs)
}

/// Centres a small (odd-sized) filter inside a zero `target_k × target_k` filter.
/// Correlation with the result equals correlation with `s`.
pub fn embed_stencil(s: &Matrix, target_k: usize) -> Result<Matrix> {
    check_odd(target_k)?;
    check_odd(s.size())?;
    if target_k < s.size() {
        return Err(invalid(format!(
            "cannot embed a {0}x{0} filter into {target_k}x{target_k}",
            s.size()
        )));
    }
    let off = (target_k - s.size()) / 2;
    let mut out = Matrix::zeros(target_k);
    for i in 0..s.size() {
        for j in 0..s.size() {
            out.set(i + off, j + off, s.get(i, j));
        }
    }
    Ok(out)
}
