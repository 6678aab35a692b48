//! Supported configuration manifolds: flat tori `T^n` (n <= 4) with the global
//! periodic chart, and the round unit sphere in `R^3` through its embedding.
//!
//! Sphere points are handled in spherical coordinates `(theta, phi)`
//! (colatitude, longitude); the chart is valid away from the poles and the
//! longitude is periodic with period `2 pi`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::linalg::{polar_orthogonal, so_log, spd_inv_sqrt};
use crate::{Error, Result};

/// Distance from the poles (in `sin theta`) below which the sphere chart is
/// considered singular.
const POLE_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Manifold {
    FlatTorus { n: usize },
    Sphere,
}

/// Metric and its first two chart derivatives:
/// `dg[k] = d_k G`, `ddg[k][l] = d_k d_l G`.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub g: DMatrix<f64>,
    pub dg: Vec<DMatrix<f64>>,
    pub ddg: Vec<Vec<DMatrix<f64>>>,
}

impl Manifold {
    pub fn flat_torus(n: usize) -> Result<Self> {
        if n == 0 || n > 4 {
            return Err(Error::Invalid(format!("flat torus dimension {n} not in 1..=4")));
        }
        Ok(Manifold::FlatTorus { n })
    }

    pub fn dim(&self) -> usize {
        match self {
            Manifold::FlatTorus { n } => *n,
            Manifold::Sphere => 2,
        }
    }

    pub fn embed_dim(&self) -> usize {
        match self {
            Manifold::FlatTorus { n } => *n,
            Manifold::Sphere => 3,
        }
    }

    /// Period of each chart coordinate, `None` for non-periodic ones.
    pub fn periods(&self) -> Vec<Option<f64>> {
        match self {
            Manifold::FlatTorus { n } => vec![Some(1.0); *n],
            Manifold::Sphere => vec![None, Some(2.0 * PI)],
        }
    }

    pub fn check_domain(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.dim() || q.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(q.iter().copied().collect()));
        }
        if let Manifold::Sphere = self {
            if q[0].sin() < POLE_GUARD {
                return Err(Error::Domain(q.iter().copied().collect()));
            }
        }
        Ok(())
    }

    /// Point in the ambient space (the identity for the torus chart).
    pub fn embed(&self, q: &DVector<f64>) -> DVector<f64> {
        match self {
            Manifold::FlatTorus { .. } => q.clone(),
            Manifold::Sphere => {
                let z = sphere_point(q[0], q[1]);
                DVector::from_column_slice(z.as_slice())
            }
        }
    }

    /// Chart coordinates of an ambient point, after projecting onto the
    /// manifold.
    pub fn chart(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Manifold::FlatTorus { .. } => Ok(z.clone()),
            Manifold::Sphere => {
                let norm = z.norm();
                if !(norm > 0.0) {
                    return Err(Error::Domain(z.iter().copied().collect()));
                }
                let u = z / norm;
                let q = DVector::from_vec(vec![u[2].clamp(-1.0, 1.0).acos(), u[1].atan2(u[0])]);
                self.check_domain(&q)?;
                Ok(q)
            }
        }
    }

    pub fn metric(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_domain(q)?;
        Ok(match self {
            Manifold::FlatTorus { n } => DMatrix::identity(*n, *n),
            Manifold::Sphere => {
                let s = q[0].sin();
                DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, s * s]))
            }
        })
    }

    pub fn metric_jet(&self, q: &DVector<f64>) -> Result<MetricJet> {
        let g = self.metric(q)?;
        let n = self.dim();
        let mut dg = vec![DMatrix::zeros(n, n); n];
        let mut ddg = vec![vec![DMatrix::zeros(n, n); n]; n];
        if let Manifold::Sphere = self {
            dg[0][(1, 1)] = (2.0 * q[0]).sin();
            ddg[0][0][(1, 1)] = 2.0 * (2.0 * q[0]).cos();
        }
        Ok(MetricJet { g, dg, ddg })
    }

    /// Christoffel symbols, `gamma[k][(i, j)] = Gamma^k_{ij}`.
    pub fn christoffel(&self, q: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        let g = self.metric(q)?;
        let n = self.dim();
        match self {
            Manifold::FlatTorus { .. } => Ok(vec![DMatrix::zeros(n, n); n]),
            Manifold::Sphere => {
                let (d1, d2) = sphere_frame(q[0], q[1]);
                let first = [d1, d2];
                let second = sphere_hessian(q[0], q[1]);
                let ginv = g.try_inverse().ok_or_else(|| Error::Domain(q.iter().copied().collect()))?;
                let mut gamma = vec![DMatrix::zeros(n, n); n];
                for (k, gk) in gamma.iter_mut().enumerate() {
                    for i in 0..n {
                        for j in 0..n {
                            gk[(i, j)] = (0..n)
                                .map(|l| ginv[(k, l)] * first[l].dot(&second[i][j]))
                                .sum();
                        }
                    }
                }
                Ok(gamma)
            }
        }
    }

    /// Parallel transport of `v0` from the start of `curve` to its end.
    pub fn parallel_transport(&self, curve: &SampledCurve, v0: &DVector<f64>) -> Result<DVector<f64>> {
        let vs = self.transport_all(curve, std::slice::from_ref(v0))?;
        Ok(vs.into_iter().last().unwrap().remove(0))
    }

    /// Transport each vector in `v0` along the curve, returning the
    /// transported vectors at every sample.
    fn transport_all(&self, curve: &SampledCurve, v0: &[DVector<f64>]) -> Result<Vec<Vec<DVector<f64>>>> {
        let n_int = curve.intervals();
        let sub = transport_substeps(n_int);
        let dt = 1.0 / (n_int * sub) as f64;
        let mut cur: Vec<DVector<f64>> = v0.to_vec();
        let mut out = vec![cur.clone()];
        let rhs = |t: f64, v: &DVector<f64>| -> Result<DVector<f64>> {
            let (q, qd) = curve.eval(t);
            let gamma = self.christoffel(&q)?;
            let mut a = DVector::zeros(v.len());
            for (k, gk) in gamma.iter().enumerate() {
                a[k] = -(qd.transpose() * gk * v)[(0, 0)];
            }
            Ok(a)
        };
        for i in 0..n_int {
            for s in 0..sub {
                let t = (i * sub + s) as f64 * dt;
                for v in cur.iter_mut() {
                    let k1 = rhs(t, v)?;
                    let k2 = rhs(t + 0.5 * dt, &(&*v + &k1 * (0.5 * dt)))?;
                    let k3 = rhs(t + 0.5 * dt, &(&*v + &k2 * (0.5 * dt)))?;
                    let k4 = rhs(t + dt, &(&*v + &k3 * dt))?;
                    *v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::Integration("non-finite transported vector".into()));
                    }
                }
            }
            out.push(cur.clone());
        }
        Ok(out)
    }

    /// A `G`-orthonormal frame along the curve: parallel transport from a
    /// symmetric start frame, followed (for closed curves) by a rotation
    /// spread uniformly in `t` that cancels the holonomy.
    pub fn periodic_orthonormal_frame(&self, curve: &SampledCurve) -> Result<FrameLoop> {
        let n = self.dim();
        let g0 = self.metric(&curve.nodes[0])?;
        let f0 = spd_inv_sqrt(&g0)?;
        let cols: Vec<DVector<f64>> = (0..n).map(|j| f0.column(j).into_owned()).collect();
        let transported = self.transport_all(curve, &cols)?;
        let mut frames: Vec<DMatrix<f64>> = transported
            .iter()
            .map(|vs| DMatrix::from_columns(vs))
            .collect();
        let n_int = curve.intervals();
        let mut closure_defect = 0.0;
        if curve.closed {
            let f_end = &frames[n_int];
            let r = polar_orthogonal(&((&g0 * &f0).transpose() * f_end))?;
            let log_r = so_log(&r)?;
            for (i, f) in frames.iter_mut().enumerate() {
                let t = i as f64 / n_int as f64;
                *f = &*f * (&log_r * -t).exp();
            }
            closure_defect = (&frames[n_int] - &f0).amax();
            frames[n_int] = f0.clone();
        }
        for (i, f) in frames.iter_mut().enumerate() {
            let g = self.metric(&curve.nodes[i])?;
            *f = &*f * spd_inv_sqrt(&(f.transpose() * &g * &*f))?;
        }
        if curve.closed {
            frames[n_int] = frames[0].clone();
        }
        let mut orth = 0.0f64;
        for (i, f) in frames.iter().enumerate() {
            let g = self.metric(&curve.nodes[i])?;
            orth = orth.max((f.transpose() * g * f - DMatrix::identity(n, n)).amax());
        }
        Ok(FrameLoop {
            t: (0..=n_int).map(|i| i as f64 / n_int as f64).collect(),
            frames,
            periodic: curve.closed,
            closure_defect,
            orthonormality_residual: orth,
        })
    }
}

/// Number of RK4 substeps per sample interval so that the transport step is
/// at most 1/512.
fn transport_substeps(intervals: usize) -> usize {
    512usize.div_ceil(intervals)
}

fn sphere_point(th: f64, ph: f64) -> Vector3<f64> {
    Vector3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos())
}

fn sphere_frame(th: f64, ph: f64) -> (Vector3<f64>, Vector3<f64>) {
    (
        Vector3::new(th.cos() * ph.cos(), th.cos() * ph.sin(), -th.sin()),
        Vector3::new(-th.sin() * ph.sin(), th.sin() * ph.cos(), 0.0),
    )
}

fn sphere_hessian(th: f64, ph: f64) -> [[Vector3<f64>; 2]; 2] {
    let tt = -sphere_point(th, ph);
    let tp = Vector3::new(-th.cos() * ph.sin(), th.cos() * ph.cos(), 0.0);
    let pp = Vector3::new(-th.sin() * ph.cos(), -th.sin() * ph.sin(), 0.0);
    [[tt, tp], [tp, pp]]
}

/// A curve given by uniformly spaced chart samples `q(i/N)`, `i = 0..=N`,
/// and node velocities, interpolated by cubic Hermite splines. A closed
/// curve has `q(1) = q(0) + lattice shift`.
#[derive(Debug, Clone)]
pub struct SampledCurve {
    pub nodes: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
    pub closed: bool,
}

impl SampledCurve {
    /// Node velocities from centered differences (one-sided at the ends of
    /// open curves).
    pub fn from_nodes(nodes: Vec<DVector<f64>>, closed: bool) -> Result<Self> {
        let n = nodes.len().checked_sub(1).filter(|&n| n >= 2).ok_or_else(|| {
            Error::Invalid("a sampled curve needs at least three nodes".into())
        })?;
        let h = 1.0 / n as f64;
        let shift = &nodes[n] - &nodes[0];
        let mut velocities = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let v = if closed {
                let prev = if i == 0 { &nodes[n - 1] - &shift } else { nodes[i - 1].clone() };
                let next = if i == n { &nodes[1] + &shift } else { nodes[i + 1].clone() };
                (next - prev) / (2.0 * h)
            } else if i == 0 {
                (&nodes[1] * 4.0 - &nodes[0] * 3.0 - &nodes[2]) / (2.0 * h)
            } else if i == n {
                (&nodes[n] * 3.0 - &nodes[n - 1] * 4.0 + &nodes[n - 2]) / (2.0 * h)
            } else {
                (&nodes[i + 1] - &nodes[i - 1]) / (2.0 * h)
            };
            velocities.push(v);
        }
        Ok(SampledCurve { nodes, velocities, closed })
    }

    pub fn with_velocities(nodes: Vec<DVector<f64>>, velocities: Vec<DVector<f64>>, closed: bool) -> Result<Self> {
        if nodes.len() != velocities.len() || nodes.len() < 3 {
            return Err(Error::Invalid("curve nodes and velocities do not match".into()));
        }
        Ok(SampledCurve { nodes, velocities, closed })
    }

    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Position and velocity at `t in [0, 1]`.
    pub fn eval(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let n = self.intervals();
        let h = 1.0 / n as f64;
        let i = ((t * n as f64).floor() as usize).min(n - 1);
        let s = t * n as f64 - i as f64;
        let (q0, q1) = (&self.nodes[i], &self.nodes[i + 1]);
        let (v0, v1) = (&self.velocities[i] * h, &self.velocities[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let q = q0 * (2.0 * s3 - 3.0 * s2 + 1.0)
            + &v0 * (s3 - 2.0 * s2 + s)
            + q1 * (-2.0 * s3 + 3.0 * s2)
            + &v1 * (s3 - s2);
        let dq = q0 * (6.0 * s2 - 6.0 * s)
            + &v0 * (3.0 * s2 - 4.0 * s + 1.0)
            + q1 * (-6.0 * s2 + 6.0 * s)
            + &v1 * (3.0 * s2 - 2.0 * s);
        (q, dq / h)
    }
}

#[derive(Debug, Clone)]
pub struct FrameLoop {
    pub t: Vec<f64>,
    /// Columns are the frame vectors at each sample.
    pub frames: Vec<DMatrix<f64>>,
    pub periodic: bool,
    /// Distance of the holonomy-corrected end frame from the start frame
    /// before closure was enforced.
    pub closure_defect: f64,
    pub orthonormality_residual: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn latitude(theta: f64, n: usize) -> SampledCurve {
        let nodes = (0..=n).map(|i| v(&[theta, 2.0 * PI * i as f64 / n as f64])).collect();
        let vel = (0..=n).map(|_| v(&[0.0, 2.0 * PI])).collect();
        SampledCurve::with_velocities(nodes, vel, true).unwrap()
    }

    fn random_sphere_loop(rng: &mut ChaCha8Rng, n: usize) -> SampledCurve {
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let wind = rng.gen_range(-1..=1) as f64;
        let nodes = (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                let w = 2.0 * PI * t;
                v(&[
                    PI / 2.0 + c[0] * w.sin() + c[1] * w.cos() + c[2] * (2.0 * w).sin() - c[1],
                    wind * w + c[3] * w.sin() + c[4] * (2.0 * w).cos() + c[5] * (3.0 * w).sin() - c[4],
                ])
            })
            .collect();
        SampledCurve::from_nodes(nodes, true).unwrap()
    }

    #[test]
    fn flat_metric_and_connection() {
        let m = Manifold::flat_torus(2).unwrap();
        let q = v(&[0.3, 0.7]);
        assert_eq!(m.metric(&q).unwrap(), DMatrix::identity(2, 2));
        assert!(m.christoffel(&q).unwrap().iter().all(|g| g.amax() == 0.0));
    }

    #[test]
    fn sphere_metric_is_pullback_of_embedding() {
        let m = Manifold::Sphere;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let q = v(&[rng.gen_range(0.1..3.0), rng.gen_range(-PI..PI)]);
            let eps = 1e-6;
            let mut jac = DMatrix::zeros(3, 2);
            for k in 0..2 {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[k] += eps;
                qm[k] -= eps;
                jac.set_column(k, &((m.embed(&qp) - m.embed(&qm)) / (2.0 * eps)));
            }
            let g = m.metric(&q).unwrap();
            assert!((jac.transpose() * &jac - &g).amax() < 1e-8);
            assert_eq!(g, g.transpose());
            assert!(g.clone().symmetric_eigenvalues().min() > 0.0);
        }
    }

    #[test]
    fn sphere_metric_jet_matches_finite_differences() {
        let m = Manifold::Sphere;
        let q = v(&[0.8, 1.3]);
        let jet = m.metric_jet(&q).unwrap();
        let eps = 1e-5;
        for k in 0..2 {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += eps;
            qm[k] -= eps;
            let fd = (m.metric(&qp).unwrap() - m.metric(&qm).unwrap()) / (2.0 * eps);
            assert!((fd - &jet.dg[k]).amax() < 1e-8);
            let jp = m.metric_jet(&qp).unwrap();
            let jm = m.metric_jet(&qm).unwrap();
            for l in 0..2 {
                let fd2 = (&jp.dg[l] - &jm.dg[l]) / (2.0 * eps);
                assert!((fd2 - &jet.ddg[k][l]).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn sphere_christoffel_matches_round_metric_formulas() {
        let m = Manifold::Sphere;
        for &th in &[0.3, 1.0, PI / 2.0, 2.5] {
            let g = m.christoffel(&v(&[th, 0.4])).unwrap();
            assert!((g[0][(1, 1)] + th.sin() * th.cos()).abs() < 1e-12);
            assert!((g[1][(0, 1)] - th.cos() / th.sin()).abs() < 1e-12);
            assert!((g[1][(1, 0)] - th.cos() / th.sin()).abs() < 1e-12);
            assert!(g[0][(0, 0)].abs() < 1e-14 && g[0][(0, 1)].abs() < 1e-14);
            assert!(g[1][(0, 0)].abs() < 1e-14 && g[1][(1, 1)].abs() < 1e-14);
            for gk in &g {
                assert_eq!(gk, &gk.transpose());
            }
        }
    }

    #[test]
    fn sphere_chart_rejects_poles() {
        assert!(matches!(Manifold::Sphere.metric(&v(&[0.0, 1.0])), Err(Error::Domain(_))));
        assert!(matches!(Manifold::Sphere.metric(&v(&[f64::NAN, 1.0])), Err(Error::Domain(_))));
    }

    #[test]
    fn chart_round_trips_through_embedding() {
        let q = v(&[1.1, -2.0]);
        let z = Manifold::Sphere.embed(&q);
        assert!((z.norm() - 1.0).abs() < 1e-12);
        assert!((Manifold::Sphere.chart(&(z * 3.0)).unwrap() - q).amax() < 1e-12);
    }

    #[test]
    fn latitude_holonomy() {
        let m = Manifold::Sphere;
        // Equator: holonomy is trivial.
        let v0 = v(&[0.3, 0.5]);
        let v1 = m.parallel_transport(&latitude(PI / 2.0, 64), &v0).unwrap();
        assert!((v1 - &v0).amax() < 1e-6);
        // Colatitude pi/3 encloses area pi, so the holonomy is a half turn.
        let v0 = v(&[1.0, 0.0]);
        let v1 = m.parallel_transport(&latitude(PI / 3.0, 64), &v0).unwrap();
        assert!((v1 + &v0).amax() < 1e-6);
    }

    #[test]
    fn transport_preserves_norm_and_flat_transport_is_trivial() {
        let m = Manifold::Sphere;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let c = random_sphere_loop(&mut rng, 64);
            let v0 = v(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            let v1 = m.parallel_transport(&c, &v0).unwrap();
            let n0 = (v0.transpose() * m.metric(&c.nodes[0]).unwrap() * &v0)[(0, 0)];
            let n1 = (v1.transpose() * m.metric(&c.nodes[64]).unwrap() * &v1)[(0, 0)];
            assert!((n1 / n0 - 1.0).abs() < 1e-8, "{n0} {n1}");
        }
        let t = Manifold::flat_torus(3).unwrap();
        let nodes = (0..=16).map(|i| v(&[0.1 * i as f64, (i as f64).sin(), 0.0])).collect();
        let c = SampledCurve::from_nodes(nodes, false).unwrap();
        assert_eq!(t.parallel_transport(&c, &v(&[1.0, 2.0, 3.0])).unwrap(), v(&[1.0, 2.0, 3.0]));
    }

    #[test]
    fn constant_curve_leaves_vectors_unchanged() {
        let nodes = vec![v(&[1.0, 0.2]); 17];
        let c = SampledCurve::from_nodes(nodes, true).unwrap();
        let v0 = v(&[0.4, -0.7]);
        assert!((Manifold::Sphere.parallel_transport(&c, &v0).unwrap() - v0).amax() < 1e-15);
    }

    #[test]
    fn periodic_frames_close_and_stay_orthonormal() {
        let m = Manifold::Sphere;
        let f = m.periodic_orthonormal_frame(&latitude(PI / 2.0, 64)).unwrap();
        assert!(f.closure_defect < 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let c = random_sphere_loop(&mut rng, 32);
            let f = m.periodic_orthonormal_frame(&c).unwrap();
            assert!(f.orthonormality_residual < 1e-10);
            assert_eq!(f.frames[0], f.frames[32]);
        }
        let t = Manifold::flat_torus(2).unwrap();
        let nodes = (0..=16).map(|i| v(&[i as f64 / 16.0, 0.3])).collect();
        let f = t.periodic_orthonormal_frame(&SampledCurve::from_nodes(nodes, true).unwrap()).unwrap();
        assert!(f.frames.iter().all(|x| (x - DMatrix::identity(2, 2)).amax() < 1e-15));
    }

    #[test]
    fn hermite_interpolation_is_exact_for_cubics() {
        let nodes = (0..=8).map(|i| {
            let t = i as f64 / 8.0;
            v(&[t * t * t - t])
        });
        let vel = (0..=8).map(|i| {
            let t = i as f64 / 8.0;
            v(&[3.0 * t * t - 1.0])
        });
        let c = SampledCurve::with_velocities(nodes.collect(), vel.collect(), false).unwrap();
        let (q, dq) = c.eval(0.37);
        assert!((q[0] - (0.37f64.powi(3) - 0.37)).abs() < 1e-14);
        assert!((dq[0] - (3.0 * 0.37 * 0.37 - 1.0)).abs() < 1e-13);
    }
}
