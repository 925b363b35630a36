//! Second-order finite-difference stencils on a periodic grid, and the
//! semi-discrete right-hand side `F(U) = L*U + Σ β_i (D_a*U) ⊙ (D_b*U)`.
//!
//! Stencils carry their `1/dx` or `1/dx²` scaling. Rows follow x, columns y:
//! the stencil entry `[i][j]` multiplies `u[h+i-1][k+j-1]`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::{conv2d_same, Field, Matrix};

/// A 3×3 finite-difference stencil applied by periodic correlation.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil(Matrix);

impl Stencil {
    pub fn new(coeffs: Matrix) -> Result<Self> {
        if coeffs.size() != 3 {
            return Err(invalid(format!(
                "stencils are 3x3, got {0}x{0}",
                coeffs.size()
            )));
        }
        if coeffs.as_slice().iter().any(|c| !c.is_finite()) {
            return Err(invalid("stencil coefficients must be finite"));
        }
        Ok(Self(coeffs))
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows))
    }

    pub fn from_slice(coeffs: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_vec(3, coeffs.to_vec())?)
    }

    pub fn zero() -> Self {
        Self(Matrix::zeros(3))
    }

    pub fn identity() -> Self {
        Self(Matrix::delta(3))
    }

    pub fn coeffs(&self) -> &Matrix {
        &self.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.scaled(s))
    }

    pub fn plus(&self, other: &Stencil) -> Self {
        Self(self.0.add(&other.0).expect("3x3 stencils"))
    }

    pub fn apply(&self, u: &Field) -> Field {
        conv2d_same(u, &self.0).expect("3x3 stencil on p >= 3")
    }
}

fn check_dx(dx: f64) -> Result<()> {
    if !(dx > 0.0) || !dx.is_finite() {
        return Err(invalid(format!("grid spacing must be positive, got {dx}")));
    }
    Ok(())
}

/// Five-point Laplacian `(1/dx²)[[0,1,0],[1,-4,1],[0,1,0]]`.
pub fn laplacian_5pt(dx: f64) -> Result<Stencil> {
    check_dx(dx)?;
    Stencil::from_rows([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
        .map(|s| s.scaled(1.0 / (dx * dx)))
}

/// Centred `∂/∂x`: `(u[h+1][k] - u[h-1][k]) / 2dx`.
pub fn d_dx(dx: f64) -> Result<Stencil> {
    check_dx(dx)?;
    let c = 0.5 / dx;
    Stencil::from_rows([[0.0, -c, 0.0], [0.0, 0.0, 0.0], [0.0, c, 0.0]])
}

/// Centred `∂/∂y`: `(u[h][k+1] - u[h][k-1]) / 2dx`.
pub fn d_dy(dx: f64) -> Result<Stencil> {
    check_dx(dx)?;
    let c = 0.5 / dx;
    Stencil::from_rows([[0.0, 0.0, 0.0], [-c, 0.0, c], [0.0, 0.0, 0.0]])
}

pub fn d2_dx2(dx: f64) -> Result<Stencil> {
    check_dx(dx)?;
    let c = 1.0 / (dx * dx);
    Stencil::from_rows([[0.0, c, 0.0], [0.0, -2.0 * c, 0.0], [0.0, c, 0.0]])
}

pub fn d2_dy2(dx: f64) -> Result<Stencil> {
    check_dx(dx)?;
    let c = 1.0 / (dx * dx);
    Stencil::from_rows([[0.0, 0.0, 0.0], [c, -2.0 * c, c], [0.0, 0.0, 0.0]])
}

/// Four-corner cross stencil for `∂²/∂x∂y`.
pub fn d_dxdy(dx: f64) -> Result<Stencil> {
    check_dx(dx)?;
    let c = 0.25 / (dx * dx);
    Stencil::from_rows([[c, 0.0, -c], [0.0, 0.0, 0.0], [-c, 0.0, c]])
}

/// One quadratic term `β (D_a*U) ⊙ (D_b*U)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Interaction {
    pub beta: f64,
    pub d_a: Stencil,
    pub d_b: Stencil,
}

/// Linear stencil plus quadratic interactions on a grid of spacing `dx`.
#[derive(Clone, Debug, PartialEq)]
pub struct PdeSpec {
    pub linear: Stencil,
    pub interactions: Vec<Interaction>,
    pub dx: f64,
}

impl PdeSpec {
    pub fn linear(linear: Stencil, dx: f64) -> Self {
        Self {
            linear,
            interactions: Vec::new(),
            dx,
        }
    }

    pub fn num_interactions(&self) -> usize {
        self.interactions.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PdeSpecDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: PdeSpecDoc = serde_json::from_str(s)?;
        doc.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct InteractionDoc {
    beta: f64,
    d_a: Vec<f64>,
    d_b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PdeSpecDoc {
    linear: Vec<f64>,
    interactions: Vec<InteractionDoc>,
    dx: f64,
}

impl From<&PdeSpec> for PdeSpecDoc {
    fn from(s: &PdeSpec) -> Self {
        Self {
            linear: s.linear.coeffs().as_slice().to_vec(),
            interactions: s
                .interactions
                .iter()
                .map(|i| InteractionDoc {
                    beta: i.beta,
                    d_a: i.d_a.coeffs().as_slice().to_vec(),
                    d_b: i.d_b.coeffs().as_slice().to_vec(),
                })
                .collect(),
            dx: s.dx,
        }
    }
}

impl TryFrom<PdeSpecDoc> for PdeSpec {
    type Error = Error;

    fn try_from(doc: PdeSpecDoc) -> Result<Self> {
        check_dx(doc.dx)?;
        let interactions = doc
            .interactions
            .into_iter()
            .map(|i| {
                Ok(Interaction {
                    beta: i.beta,
                    d_a: Stencil::from_slice(&i.d_a)?,
                    d_b: Stencil::from_slice(&i.d_b)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            linear: Stencil::from_slice(&doc.linear)?,
            interactions,
            dx: doc.dx,
        })
    }
}

/// Evaluates the semi-discrete right-hand side at `u`.
pub fn eval_rhs(spec: &PdeSpec, u: &Field) -> Field {
    let mut out = spec.linear.apply(u);
    for term in &spec.interactions {
        let a = term.d_a.apply(u);
        let b = term.d_b.apply(u);
        for ((o, x), y) in out.as_mut_slice().iter_mut().zip(a.as_slice()).zip(b.as_slice()) {
            *o += term.beta * (x * y);
        }
    }
    out
}

/// `∂t u = b₁ ∂x u + b₂ ∂y u`.
pub fn advection_spec(b1: f64, b2: f64, dx: f64) -> Result<PdeSpec> {
    let l = d_dx(dx)?.scaled(b1).plus(&d_dy(dx)?.scaled(b2));
    Ok(PdeSpec::linear(l, dx))
}

/// `∂t u = α Δu`.
pub fn heat_spec(alpha: f64, dx: f64) -> Result<PdeSpec> {
    check_alpha(alpha)?;
    Ok(PdeSpec::linear(laplacian_5pt(dx)?.scaled(alpha), dx))
}

/// `∂t u = α Δu + u(1-u)`, written as `L = αΔ + I` with one interaction
/// `-1 · (I*u) ⊙ (I*u)`.
pub fn fisher_spec(alpha: f64, dx: f64) -> Result<PdeSpec> {
    check_alpha(alpha)?;
    let linear = laplacian_5pt(dx)?.scaled(alpha).plus(&Stencil::identity());
    Ok(PdeSpec {
        linear,
        interactions: vec![Interaction {
            beta: -1.0,
            d_a: Stencil::identity(),
            d_b: Stencil::identity(),
        }],
        dx,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(invalid(format!("diffusivity must be non-negative, got {alpha}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(rng: &mut ChaCha8Rng, p: usize) -> Field {
        Field::from_vec(
            p,
            1.0 / p as f64,
            (0..p * p).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn observed_orders(errors: &[f64]) -> Vec<f64> {
        errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
    }

    #[test]
    fn laplacian_unit_spacing() {
        let l = laplacian_5pt(1.0).unwrap();
        assert_eq!(
            l.coeffs(),
            &Matrix::from_rows([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
        );
        assert!(laplacian_5pt(0.0).is_err());
        assert!(d_dx(-1.0).is_err());
    }

    #[test]
    fn derivatives_annihilate_constants() {
        let c = Field::constant(8, 0.125, 3.7).unwrap();
        for s in [
            laplacian_5pt(0.125),
            d_dx(0.125),
            d_dy(0.125),
            d2_dx2(0.125),
            d2_dy2(0.125),
            d_dxdy(0.125),
        ] {
            assert!(s.unwrap().apply(&c).max_abs() <= 1e-12);
        }
    }

    #[test]
    fn second_derivatives_sum_to_laplacian() {
        let dx = 0.05;
        let sum = d2_dx2(dx).unwrap().plus(&d2_dy2(dx).unwrap());
        let lap = laplacian_5pt(dx).unwrap();
        for (a, b) in sum.coeffs().as_slice().iter().zip(lap.coeffs().as_slice()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn laplacian_second_order() {
        let errs: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&p| {
                let f = |x: f64, y: f64| (2.0 * PI * x).sin() * (2.0 * PI * y).sin();
                let u = Field::sample(p, f).unwrap();
                let exact = u.scaled(-8.0 * PI * PI);
                laplacian_5pt(u.dx()).unwrap().apply(&u).sub(&exact).max_abs()
            })
            .collect();
        for order in observed_orders(&errs) {
            assert!((order - 2.0).abs() <= 0.1, "order {order}");
        }
    }

    #[test]
    fn first_derivatives_second_order() {
        let ps = [16, 32, 64, 128];
        let mut ex = Vec::new();
        let mut ey = Vec::new();
        for &p in &ps {
            let u = Field::sample(p, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).cos()).unwrap();
            let ux = Field::sample(p, |x, y| 2.0 * PI * (2.0 * PI * x).cos() * (2.0 * PI * y).cos())
                .unwrap();
            let uy = Field::sample(p, |x, y| -2.0 * PI * (2.0 * PI * x).sin() * (2.0 * PI * y).sin())
                .unwrap();
            ex.push(d_dx(u.dx()).unwrap().apply(&u).sub(&ux).max_abs());
            ey.push(d_dy(u.dx()).unwrap().apply(&u).sub(&uy).max_abs());
        }
        for order in observed_orders(&ex).into_iter().chain(observed_orders(&ey)) {
            assert!((1.9..=2.1).contains(&order), "order {order}");
        }
    }

    #[test]
    fn mixed_derivative_converges() {
        let errs: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&p| {
                let u = Field::sample(p, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).sin()).unwrap();
                let exact = Field::sample(p, |x, y| {
                    4.0 * PI * PI * (2.0 * PI * x).cos() * (2.0 * PI * y).cos()
                })
                .unwrap();
                d_dxdy(u.dx()).unwrap().apply(&u).sub(&exact).max_abs()
            })
            .collect();
        for order in observed_orders(&errs) {
            assert!((order - 2.0).abs() <= 0.1, "order {order}");
        }
    }

    #[test]
    fn advection_stencil_is_skew_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = advection_spec(1.0, 1.0, 1.0 / 12.0).unwrap();
        for _ in 0..10 {
            let u = random_field(&mut rng, 12);
            let v = random_field(&mut rng, 12);
            let lhs = spec.linear.apply(&u).dot(&v);
            let rhs = -u.dot(&spec.linear.apply(&v));
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn laplacian_is_negative_semidefinite_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lap = laplacian_5pt(0.1).unwrap();
        for _ in 0..10 {
            let u = random_field(&mut rng, 10);
            let v = random_field(&mut rng, 10);
            assert!(lap.apply(&u).dot(&u) <= 1e-10);
            let a = lap.apply(&u).dot(&v);
            let b = u.dot(&lap.apply(&v));
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn advection_spec_sums_derivatives() {
        let dx = 0.1;
        let spec = advection_spec(1.0, 1.0, dx).unwrap();
        let expect = d_dx(dx).unwrap().plus(&d_dy(dx).unwrap());
        assert_eq!(spec.linear, expect);
        assert!(spec.interactions.is_empty());
    }

    #[test]
    fn heat_rhs_and_zero_diffusivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = random_field(&mut rng, 9);
        let spec = heat_spec(0.01, u.dx()).unwrap();
        let expect = laplacian_5pt(u.dx()).unwrap().apply(&u).scaled(0.01);
        assert!(eval_rhs(&spec, &u).sub(&expect).max_abs() <= 1e-12);
        assert_eq!(heat_spec(0.0, 0.1).unwrap().linear.coeffs(), &Matrix::zeros(3));
        assert!(heat_spec(-1.0, 0.1).is_err());
        assert!(fisher_spec(-1.0, 0.1).is_err());
    }

    #[test]
    fn zero_field_gives_zero_rhs() {
        let u = Field::zeros(6, 1.0 / 6.0).unwrap();
        let spec = fisher_spec(0.3, u.dx()).unwrap();
        assert_eq!(eval_rhs(&spec, &u).max_abs(), 0.0);
    }

    #[test]
    fn fisher_rhs_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = 16;
        let u = Field::from_vec(
            p,
            1.0 / p as f64,
            (0..p * p).map(|_| rng.random_range(0.0..2.0)).collect(),
        )
        .unwrap();
        let alpha = 0.01;
        let spec = fisher_spec(alpha, u.dx()).unwrap();
        // Direct oracle: explicit neighbour arithmetic.
        let inv = 1.0 / (u.dx() * u.dx());
        let mut expect = u.zeros_like();
        for h in 0..p {
            for k in 0..p {
                let up = u.get((h + 1) % p, k);
                let dn = u.get((h + p - 1) % p, k);
                let rt = u.get(h, (k + 1) % p);
                let lf = u.get(h, (k + p - 1) % p);
                let c = u.get(h, k);
                let lap = (up + dn + rt + lf - 4.0 * c) * inv;
                expect.set(h, k, alpha * lap + c * (1.0 - c));
            }
        }
        let got = eval_rhs(&spec, &u);
        assert!(got.sub(&expect).max_abs() <= 1e-14 * (1.0 + expect.max_abs()));
    }

    #[test]
    fn fisher_on_uniform_data_is_logistic() {
        let c = 0.3;
        let u = Field::constant(8, 0.125, c).unwrap();
        let out = eval_rhs(&fisher_spec(0.7, 0.125).unwrap(), &u);
        for &v in out.as_slice() {
            assert!((v - c * (1.0 - c)).abs() <= 1e-12);
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = fisher_spec(0.01, 1.0 / 32.0).unwrap();
        let json = spec.to_json().unwrap();
        let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(doc["linear"].as_array().unwrap().len(), 9);
        assert_eq!(doc["interactions"][0]["beta"], -1.0);
        assert_eq!(PdeSpec::from_json(&json).unwrap(), spec);
        assert!(PdeSpec::from_json(r#"{"linear":[1,2],"interactions":[],"dx":0.1}"#).is_err());
    }
}
