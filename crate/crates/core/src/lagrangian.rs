//! Lagrangians of physical type and their Legendre-dual Hamiltonians.
//!
//! A [`Lagrangian`] only has to provide its second-order jet; the Legendre
//! transform, the Hamiltonian with its derivatives, the Hamiltonian vector
//! field and its linearization are derived from it generically.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fields::ScalarField;
use crate::manifold::Manifold;
use crate::{Error, Result};

/// Value and derivatives of `L` at `(t, q, v)`. `dqv[(k, l)]` is
/// `d_{q_k} d_{v_l} L` and `dt_dv` is `d_t d_v L`.
#[derive(Debug, Clone)]
pub struct LagrangianJet {
    pub l: f64,
    pub dq: DVector<f64>,
    pub dv: DVector<f64>,
    pub dqq: DMatrix<f64>,
    pub dqv: DMatrix<f64>,
    pub dvv: DMatrix<f64>,
    pub dt_dv: DVector<f64>,
}

/// Value and derivatives of `H` at `(t, q, p)`; `v` is the velocity dual to
/// `p`. `dpq[(j, k)]` is `d_{p_j} d_{q_k} H`.
#[derive(Debug, Clone)]
pub struct HamiltonianJet {
    pub h: f64,
    pub v: DVector<f64>,
    pub dq: DVector<f64>,
    pub dp: DVector<f64>,
    pub dqq: DMatrix<f64>,
    pub dpq: DMatrix<f64>,
    pub dpp: DMatrix<f64>,
}

impl HamiltonianJet {
    /// Linearization of `X_H = (H_p, -H_q)` in `(q, p)` coordinates.
    pub fn dxh(&self) -> DMatrix<f64> {
        let n = self.v.len();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.dpq);
        m.view_mut((0, n), (n, n)).copy_from(&self.dpp);
        m.view_mut((n, 0), (n, n)).copy_from(&-&self.dqq);
        m.view_mut((n, n), (n, n)).copy_from(&-self.dpq.transpose());
        m
    }
}

fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::Convexity("fiber Hessian is not positive definite".into()))
}

pub trait Lagrangian: Sync {
    fn manifold(&self) -> &Manifold;

    fn jet(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<LagrangianJet>;

    fn is_autonomous(&self) -> bool;

    fn dim(&self) -> usize {
        self.manifold().dim()
    }

    fn value(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        Ok(self.jet(t, q, v)?.l)
    }

    /// Fiber derivative `p = d_v L` and `H = p[v] - L`.
    fn legendre(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        let j = self.jet(t, q, v)?;
        let h = j.dv.dot(v) - j.l;
        Ok((j.dv, h))
    }

    /// The velocity `v` with `d_v L(t, q, v) = p`, by Newton's method.
    fn inverse_legendre(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(p.len());
        for _ in 0..50 {
            let j = self.jet(t, q, &v)?;
            let r = &j.dv - p;
            if r.amax() <= 1e-14 * (1.0 + p.amax()) {
                return Ok(v);
            }
            let step = cholesky(&j.dvv)?.solve(&r);
            v -= &step;
            if step.amax() <= 1e-15 * (1.0 + v.amax()) {
                return Ok(v);
            }
        }
        Err(Error::Convexity(format!("Legendre inversion did not converge at q = {q:?}")))
    }

    fn hamiltonian(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<HamiltonianJet> {
        let v = self.inverse_legendre(t, q, p)?;
        let j = self.jet(t, q, &v)?;
        let chol = cholesky(&j.dvv)?;
        let dpp = chol.inverse();
        let dqv_t = j.dqv.transpose();
        let dv_dq = -chol.solve(&dqv_t);
        let dqq = -&j.dqq + &j.dqv * chol.solve(&dqv_t);
        Ok(HamiltonianJet {
            h: p.dot(&v) - j.l,
            dq: -j.dq,
            dp: v.clone(),
            dqq: (&dqq + dqq.transpose()) * 0.5,
            dpq: dv_dq,
            dpp: (&dpp + dpp.transpose()) * 0.5,
            v,
        })
    }

    /// `X_H(t, q, p) = (d_p H, -d_q H)` stacked as a `2n` vector.
    fn hamiltonian_vector_field(&self, t: f64, q: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
        let h = self.hamiltonian(t, q, p)?;
        let n = q.len();
        let mut x = DVector::zeros(2 * n);
        x.rows_mut(0, n).copy_from(&h.dp);
        x.rows_mut(n, n).copy_from(&-h.dq);
        Ok(x)
    }

    /// Chart acceleration of solutions of the Euler-Lagrange equation.
    fn euler_lagrange_accel(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        let j = self.jet(t, q, v)?;
        let rhs = &j.dq - j.dqv.transpose() * v - &j.dt_dv;
        Ok(cholesky(&j.dvv)?.solve(&rhs))
    }
}

/// `L(t, q, v) = 1/2 |T(t, q) v - A(t, q)|_G^2 - V(t, q)` with `G` the
/// metric of the manifold. `T = None` means the identity, `A = None` zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalLagrangian {
    pub manifold: Manifold,
    #[serde(default)]
    pub t: Option<Vec<Vec<ScalarField>>>,
    #[serde(default)]
    pub a: Option<Vec<ScalarField>>,
    pub v: ScalarField,
}

impl PhysicalLagrangian {
    pub fn new(manifold: Manifold, v: ScalarField) -> Self {
        PhysicalLagrangian { manifold, t: None, a: None, v }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.manifold.dim();
        let mut fields = vec![&self.v];
        if let Some(t) = &self.t {
            if t.len() != n || t.iter().any(|r| r.len() != n) {
                return Err(Error::Invalid(format!("T must be {n} x {n}")));
            }
            fields.extend(t.iter().flatten());
        }
        if let Some(a) = &self.a {
            if a.len() != n {
                return Err(Error::Invalid(format!("A must have {n} components")));
            }
            fields.extend(a.iter());
        }
        if fields.iter().any(|f| !f.compatible(&self.manifold)) {
            return Err(Error::Invalid("coefficient field does not match the manifold".into()));
        }
        if let Manifold::Sphere = self.manifold {
            // Chart-coordinate T and A are not globally meaningful on the
            // sphere, so only the potential may be nontrivial there.
            if self.t.is_some() || self.a.as_ref().is_some_and(|a| a.iter().any(|f| !f.is_zero())) {
                return Err(Error::Invalid("sphere Lagrangians support a potential only".into()));
            }
        }
        Ok(())
    }
}

impl Lagrangian for PhysicalLagrangian {
    fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    fn is_autonomous(&self) -> bool {
        self.v.is_autonomous()
            && self.t.iter().flatten().flatten().all(|f| f.is_autonomous())
            && self.a.iter().flatten().all(|f| f.is_autonomous())
    }

    fn jet(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<LagrangianJet> {
        let m = &self.manifold;
        let n = m.dim();
        let gj = m.metric_jet(q)?;
        let g = &gj.g;

        let mut tm = DMatrix::identity(n, n);
        let mut dtt = DMatrix::zeros(n, n);
        let mut d_t = vec![DMatrix::zeros(n, n); n];
        let mut dd_t = vec![vec![DMatrix::zeros(n, n); n]; n];
        if let Some(tf) = &self.t {
            for i in 0..n {
                for j in 0..n {
                    let fj = tf[i][j].jet(m, t, q);
                    tm[(i, j)] = fj.value;
                    dtt[(i, j)] = fj.dt;
                    for k in 0..n {
                        d_t[k][(i, j)] = fj.dq[k];
                        for l in 0..n {
                            dd_t[k][l][(i, j)] = fj.dqq[(k, l)];
                        }
                    }
                }
            }
        }
        let mut a = DVector::zeros(n);
        let mut dta = DVector::zeros(n);
        let mut d_a = vec![DVector::zeros(n); n];
        let mut dd_a = vec![vec![DVector::zeros(n); n]; n];
        if let Some(af) = &self.a {
            for i in 0..n {
                let fj = af[i].jet(m, t, q);
                a[i] = fj.value;
                dta[i] = fj.dt;
                for k in 0..n {
                    d_a[k][i] = fj.dq[k];
                    for l in 0..n {
                        dd_a[k][l][i] = fj.dqq[(k, l)];
                    }
                }
            }
        }
        let pot = self.v.jet(m, t, q);

        let u = &tm * v - &a;
        let gu = g * &u;
        let du: Vec<DVector<f64>> = (0..n).map(|k| &d_t[k] * v - &d_a[k]).collect();
        let l = 0.5 * u.dot(&gu) - pot.value;
        let dv = tm.transpose() * &gu;
        let dvv = tm.transpose() * g * &tm;
        let mut dq = DVector::zeros(n);
        let mut dqv = DMatrix::zeros(n, n);
        let mut dqq = DMatrix::zeros(n, n);
        for k in 0..n {
            dq[k] = du[k].dot(&gu) + 0.5 * u.dot(&(&gj.dg[k] * &u)) - pot.dq[k];
            let row = d_t[k].transpose() * &gu + tm.transpose() * (&gj.dg[k] * &u + g * &du[k]);
            dqv.set_row(k, &row.transpose());
            for l2 in 0..n {
                let ddu = &dd_t[k][l2] * v - &dd_a[k][l2];
                dqq[(k, l2)] = ddu.dot(&gu)
                    + du[k].dot(&(g * &du[l2]))
                    + du[k].dot(&(&gj.dg[l2] * &u))
                    + du[l2].dot(&(&gj.dg[k] * &u))
                    + 0.5 * u.dot(&(&gj.ddg[k][l2] * &u))
                    - pot.dqq[(k, l2)];
            }
        }
        let dt_dv = dtt.transpose() * &gu + tm.transpose() * g * (&dtt * v - &dta);
        Ok(LagrangianJet { l, dq, dv, dqq: (&dqq + dqq.transpose()) * 0.5, dqv, dvv, dt_dv })
    }
}

/// Sampling region for growth certificates.
#[derive(Debug, Clone)]
pub struct GrowthGrid {
    pub time_samples: usize,
    pub chart_samples: usize,
    /// Radius of the sampled velocity or momentum ball.
    pub p_max: f64,
    pub fiber_samples: usize,
    pub seed: u64,
}

impl Default for GrowthGrid {
    fn default() -> Self {
        GrowthGrid { time_samples: 4, chart_samples: 6, p_max: 10.0, fiber_samples: 40, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LagrangianGrowth {
    pub l0: f64,
    pub l1: f64,
    /// `(t, q, v)` where the smallest fiber eigenvalue was found.
    pub worst_convexity: Vec<f64>,
    pub violation: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HamiltonianGrowth {
    pub h0: f64,
    pub h1: f64,
    pub h2: f64,
    pub worst_coercivity: Vec<f64>,
    pub violation: Option<String>,
}

fn chart_samples(m: &Manifold, k: usize) -> Vec<DVector<f64>> {
    match m {
        Manifold::FlatTorus { n } => {
            let total = k.pow(*n as u32);
            (0..total)
                .map(|mut idx| {
                    let mut q = DVector::zeros(*n);
                    for i in 0..*n {
                        q[i] = (idx % k) as f64 / k as f64;
                        idx /= k;
                    }
                    q
                })
                .collect()
        }
        Manifold::Sphere => {
            let mut out = Vec::new();
            for i in 0..k {
                for j in 0..k {
                    let th = 0.2 + (std::f64::consts::PI - 0.4) * i as f64 / (k - 1).max(1) as f64;
                    let ph = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
                    out.push(DVector::from_vec(vec![th, ph]));
                }
            }
            out
        }
    }
}

fn fiber_samples(n: usize, grid: &GrowthGrid) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    let mut out = vec![DVector::zeros(n)];
    for i in 0..grid.fiber_samples {
        let dir = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let r = grid.p_max * (i + 1) as f64 / grid.fiber_samples as f64;
        out.push(dir.normalize() * r);
    }
    out
}

fn each_base_point<F: FnMut(f64, &DVector<f64>)>(m: &Manifold, grid: &GrowthGrid, mut f: F) {
    let qs = chart_samples(m, grid.chart_samples);
    for i in 0..grid.time_samples {
        let t = i as f64 / grid.time_samples as f64;
        for q in &qs {
            f(t, q);
        }
    }
}

/// Sampled constants for the fiberwise convexity and second-derivative
/// bounds on the Lagrangian.
pub fn check_lagrangian_growth<L: Lagrangian + ?Sized>(l: &L, grid: &GrowthGrid) -> LagrangianGrowth {
    let n = l.dim();
    let vs = fiber_samples(n, grid);
    let mut l0 = f64::INFINITY;
    let mut l1 = 0.0f64;
    let mut worst = Vec::new();
    let mut error = None;
    each_base_point(l.manifold(), grid, |t, q| {
        for v in &vs {
            match l.jet(t, q, v) {
                Ok(j) => {
                    let e = j.dvv.clone().symmetric_eigenvalues().min();
                    if e < l0 {
                        l0 = e;
                        worst = std::iter::once(t).chain(q.iter().copied()).chain(v.iter().copied()).collect();
                    }
                    let nv = v.norm();
                    l1 = l1
                        .max(j.dvv.norm())
                        .max(j.dqv.norm() / (1.0 + nv))
                        .max(j.dqq.norm() / (1.0 + nv * nv));
                }
                Err(e) => error = Some(e.to_string()),
            }
        }
    });
    let violation = error.or_else(|| {
        (l0 <= 0.0).then(|| format!("fiber Hessian has eigenvalue {l0:.3e} <= 0 at {worst:?}"))
    });
    LagrangianGrowth { l0, l1, worst_convexity: worst, violation }
}

/// Sampled constants for the coercivity `dH[p d/dp] - H >= h0 |p|^2 - h1` and
/// the first-derivative bounds on the dual Hamiltonian.
pub fn check_hamiltonian_growth<L: Lagrangian + ?Sized>(l: &L, grid: &GrowthGrid) -> HamiltonianGrowth {
    let n = l.dim();
    let ps = fiber_samples(n, grid);
    let mut h0 = f64::INFINITY;
    let mut h2 = 0.0f64;
    let mut rows: Vec<(f64, f64)> = Vec::new();
    let mut worst = Vec::new();
    let mut error = None;
    each_base_point(l.manifold(), grid, |t, q| {
        let mut f0 = None;
        for p in &ps {
            match l.hamiltonian(t, q, p) {
                Ok(h) => {
                    let f = p.dot(&h.dp) - h.h;
                    let np2 = p.norm_squared();
                    let base = *f0.get_or_insert(f);
                    if np2 > 0.0 {
                        let ratio = (f - base) / np2;
                        if ratio < h0 {
                            h0 = ratio;
                            worst = std::iter::once(t).chain(q.iter().copied()).chain(p.iter().copied()).collect();
                        }
                    }
                    rows.push((np2, f));
                    h2 = h2.max(h.dq.norm() / (1.0 + np2)).max(h.dp.norm() / (1.0 + np2.sqrt()));
                }
                Err(e) => error = Some(e.to_string()),
            }
        }
    });
    let h1 = rows.iter().map(|&(np2, f)| h0 * np2 - f).fold(f64::NEG_INFINITY, f64::max);
    let violation = error.or_else(|| {
        (h0 <= 0.0).then(|| format!("no positive coercivity constant (h0 = {h0:.3e}) at {worst:?}"))
    });
    HamiltonianGrowth { h0, h1, h2, worst_coercivity: worst, violation }
}
