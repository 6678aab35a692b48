//! Scalar coefficient fields on `[0,1] x M` with analytic derivatives.
//!
//! On the torus a field is a trigonometric polynomial in `(t, q)`, on the
//! sphere a polynomial in the embedding coordinates `z in R^3` (possibly with
//! trigonometric time dependence through the same term type).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::manifold::Manifold;

/// `coeff * cos(2 pi (kt t + kq . q))`, or `sin` when `sine` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub coeff: f64,
    #[serde(default)]
    pub kt: i32,
    #[serde(default)]
    pub kq: Vec<i32>,
    #[serde(default)]
    pub sine: bool,
}

/// `coeff * z1^a z2^b z3^c * cos(2 pi kt t)` on the embedded sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonomialTerm {
    pub coeff: f64,
    pub powers: [u32; 3],
    #[serde(default)]
    pub kt: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "terms", rename_all = "snake_case")]
pub enum ScalarField {
    Trig(Vec<TrigTerm>),
    Embedded(Vec<MonomialTerm>),
}

/// Value and derivatives of a scalar field at one point.
#[derive(Debug, Clone)]
pub struct FieldJet {
    pub value: f64,
    pub dt: f64,
    pub dq: DVector<f64>,
    pub dqq: DMatrix<f64>,
}

impl ScalarField {
    pub fn constant(c: f64) -> Self {
        ScalarField::Trig(vec![TrigTerm { coeff: c, kt: 0, kq: Vec::new(), sine: false }])
    }

    pub fn zero() -> Self {
        ScalarField::Trig(Vec::new())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ScalarField::Trig(t) => t.iter().all(|x| x.coeff == 0.0),
            ScalarField::Embedded(t) => t.iter().all(|x| x.coeff == 0.0),
        }
    }

    pub fn is_autonomous(&self) -> bool {
        match self {
            ScalarField::Trig(t) => t.iter().all(|x| x.kt == 0 || x.coeff == 0.0),
            ScalarField::Embedded(t) => t.iter().all(|x| x.kt == 0 || x.coeff == 0.0),
        }
    }

    /// Whether the field can be evaluated on `m`.
    pub fn compatible(&self, m: &Manifold) -> bool {
        match (self, m) {
            (ScalarField::Trig(t), Manifold::FlatTorus { n }) => t.iter().all(|x| x.kq.len() <= *n),
            (ScalarField::Trig(t), Manifold::Sphere) => t.iter().all(|x| x.kq.iter().all(|&k| k == 0)),
            (ScalarField::Embedded(_), Manifold::Sphere) => true,
            (ScalarField::Embedded(t), Manifold::FlatTorus { .. }) => t.is_empty(),
        }
    }

    pub fn jet(&self, m: &Manifold, t: f64, q: &DVector<f64>) -> FieldJet {
        let n = q.len();
        let mut out = FieldJet { value: 0.0, dt: 0.0, dq: DVector::zeros(n), dqq: DMatrix::zeros(n, n) };
        match self {
            ScalarField::Trig(terms) => {
                for term in terms {
                    let k = |i: usize| term.kq.get(i).copied().unwrap_or(0) as f64;
                    let phase = 2.0 * PI * (term.kt as f64 * t + (0..n).map(|i| k(i) * q[i]).sum::<f64>());
                    // f, f', f'' of cos or sin with respect to the phase.
                    let (f, df, ddf) = if term.sine {
                        (phase.sin(), phase.cos(), -phase.sin())
                    } else {
                        (phase.cos(), -phase.sin(), -phase.cos())
                    };
                    let c = term.coeff;
                    out.value += c * f;
                    out.dt += c * df * 2.0 * PI * term.kt as f64;
                    for i in 0..n {
                        out.dq[i] += c * df * 2.0 * PI * k(i);
                        for j in 0..n {
                            out.dqq[(i, j)] += c * ddf * 4.0 * PI * PI * k(i) * k(j);
                        }
                    }
                }
            }
            ScalarField::Embedded(terms) => {
                let z = m.embed(q);
                let (d1, d2, dd) = sphere_derivatives(q);
                let mut grad = DVector::zeros(3);
                let mut hess = DMatrix::zeros(3, 3);
                let mut value = 0.0;
                let mut dt = 0.0;
                for term in terms {
                    let w = 2.0 * PI * term.kt as f64;
                    let (tf, dtf) = ((w * t).cos(), -w * (w * t).sin());
                    let (val, g, h) = monomial_jet(&z, term.powers);
                    value += term.coeff * tf * val;
                    dt += term.coeff * dtf * val;
                    grad += g * (term.coeff * tf);
                    hess += h * (term.coeff * tf);
                }
                let first = [d1, d2];
                out.value = value;
                out.dt = dt;
                for i in 0..2 {
                    out.dq[i] = grad.dot(&first[i]);
                    for j in 0..2 {
                        out.dqq[(i, j)] = (first[i].transpose() * &hess * &first[j])[(0, 0)] + grad.dot(&dd[i][j]);
                    }
                }
            }
        }
        out
    }
}

fn monomial_jet(z: &DVector<f64>, p: [u32; 3]) -> (f64, DVector<f64>, DMatrix<f64>) {
    // d^k/dx^k x^a for k = 0, 1, 2
    let pw = |x: f64, a: u32, k: u32| -> f64 {
        if k > a {
            0.0
        } else {
            let fall: f64 = (0..k).map(|j| (a - j) as f64).product();
            fall * x.powi((a - k) as i32)
        }
    };
    let mut val = 1.0;
    for i in 0..3 {
        val *= pw(z[i], p[i], 0);
    }
    let mut g = DVector::zeros(3);
    let mut h = DMatrix::zeros(3, 3);
    for i in 0..3 {
        for j in 0..3 {
            let mut prod = 1.0;
            for k in 0..3 {
                let order = (i == k) as u32 + (j == k) as u32;
                prod *= pw(z[k], p[k], order);
            }
            h[(i, j)] = prod;
        }
        let mut prod = 1.0;
        for k in 0..3 {
            prod *= pw(z[k], p[k], (i == k) as u32);
        }
        g[i] = prod;
    }
    (val, g, h)
}

/// First and second chart derivatives of the sphere embedding.
fn sphere_derivatives(q: &DVector<f64>) -> (DVector<f64>, DVector<f64>, [[DVector<f64>; 2]; 2]) {
    let (th, ph) = (q[0], q[1]);
    let (st, ct, sp, cp) = (th.sin(), th.cos(), ph.sin(), ph.cos());
    let v = |a: f64, b: f64, c: f64| DVector::from_vec(vec![a, b, c]);
    let d1 = v(ct * cp, ct * sp, -st);
    let d2 = v(-st * sp, st * cp, 0.0);
    let tt = v(-st * cp, -st * sp, -ct);
    let tp = v(-ct * sp, ct * cp, 0.0);
    let pp = v(-st * cp, -st * sp, 0.0);
    (d1, d2, [[tt, tp.clone()], [tp, pp]])
}
