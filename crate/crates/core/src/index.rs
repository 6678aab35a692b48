//! Conley-Zehnder and relative Maslov indices, vertical-preserving
//! trivializations along orbits, and the Maslov index of an orbit.
//!
//! Both indices come from one routine for pairs of Lagrangian paths. A
//! Lagrangian frame `Z = [X; Y]` with orthonormal columns gives the unitary
//! `U = X - iY`; for a pair `(a, b)` the unitary symmetric matrix
//! `W W^T` with `W = U_b^* U_a` has eigenvalue 1 with multiplicity
//! `dim(a ∩ b)`. The index is the spectral flow of its eigenvalue angles
//! through 0, with half contributions at the endpoints; it is read off from a
//! continuous lift of `arg det(W W^T)` and the endpoint spectra.
//!
//! The Conley-Zehnder index of `gamma` is the index of its graph against the
//! diagonal in `R^2n x R^2n` with the form `(-omega) + omega`.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::lagrangian::Lagrangian;
use crate::linalg::{complex_eigenvalues, j0, min_singular_value, orthonormalize_columns, symplectic_residual};
use crate::manifold::SampledCurve;
use crate::orbits::{integrate_with_monodromy, CriticalPoint, QUARANTINE_MARGIN};
use crate::{Error, Result};

/// Eigenvalue angles closer than this to 0 count as intersections.
const AT_ONE: f64 = 1e-9;
/// Angles between `AT_ONE` and this are too close to call.
const AMBIGUOUS: f64 = 1e-6;
/// Largest admissible change of `arg det(W W^T)` between samples.
const MAX_STEP: f64 = PI / 2.0;

/// Sampled path in `Sp(2n)` starting at the identity.
#[derive(Debug, Clone)]
pub struct SymplecticPath {
    pub samples: Vec<DMatrix<f64>>,
}

impl SymplecticPath {
    pub fn new(samples: Vec<DMatrix<f64>>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Invalid("a path needs at least two samples".into()));
        }
        let m = samples[0].nrows();
        if !m.is_multiple_of(2) || (&samples[0] - DMatrix::identity(m, m)).amax() > 1e-8 {
            return Err(Error::Invalid("symplectic path must start at the identity".into()));
        }
        if let Some(r) = samples.iter().map(symplectic_residual).find(|&r| !(r < 1e-8)) {
            return Err(Error::Invalid(format!("sample is not symplectic (residual {r:.2e})")));
        }
        Ok(SymplecticPath { samples })
    }

    /// Samples `f(i / (count - 1))` for `i = 0..count`.
    pub fn from_fn<F: Fn(f64) -> DMatrix<f64>>(count: usize, f: F) -> Result<Self> {
        Self::new((0..count).map(|i| f(i as f64 / (count - 1) as f64)).collect())
    }

    pub fn n(&self) -> usize {
        self.samples[0].nrows() / 2
    }

    /// `sigma_min(gamma(1) - I)`; zero iff 1 is an eigenvalue.
    pub fn endpoint_margin(&self) -> f64 {
        let g = self.samples.last().unwrap();
        min_singular_value(&(g - DMatrix::identity(g.nrows(), g.nrows())))
    }
}

/// Sampled path of Lagrangian subspaces given by `2n x n` frames.
#[derive(Debug, Clone)]
pub struct LagrangianPath {
    pub frames: Vec<DMatrix<f64>>,
}

impl LagrangianPath {
    pub fn new(frames: Vec<DMatrix<f64>>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Invalid("empty Lagrangian path".into()));
        }
        let n = frames[0].ncols();
        let j = j0(n);
        for f in &frames {
            if f.nrows() != 2 * n || f.ncols() != n {
                return Err(Error::Invalid("Lagrangian frames must be 2n x n".into()));
            }
            let scale = f.norm_squared().max(1e-300);
            if (f.transpose() * &j * f).amax() / scale > 1e-8 {
                return Err(Error::Invalid("frame is not isotropic".into()));
            }
            if f.clone().svd(false, false).singular_values.min() < 1e-10 * scale.sqrt() {
                return Err(Error::Invalid("frame is rank deficient".into()));
            }
        }
        Ok(LagrangianPath { frames })
    }

    pub fn from_fn<F: Fn(f64) -> DMatrix<f64>>(count: usize, f: F) -> Result<Self> {
        Self::new((0..count).map(|i| f(i as f64 / (count - 1) as f64)).collect())
    }

    /// `t -> A(t) L(t)` for a path of matrices sampled at the same times.
    pub fn transformed(&self, a: &[DMatrix<f64>]) -> Result<Self> {
        Self::new(self.frames.iter().zip(a).map(|(f, a)| a * f).collect())
    }

    pub fn constant(frame: DMatrix<f64>, count: usize) -> Result<Self> {
        Self::new(vec![frame; count])
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// The vertical Lagrangian `{0} x R^n` as a frame.
pub fn vertical(n: usize) -> DMatrix<f64> {
    let mut f = DMatrix::zeros(2 * n, n);
    f.view_mut((n, 0), (n, n)).fill_with_identity();
    f
}

fn unitary(frame: &DMatrix<f64>) -> Result<DMatrix<Complex<f64>>> {
    let z = orthonormalize_columns(frame)?;
    let n = z.ncols();
    Ok(DMatrix::from_fn(n, n, |i, j| Complex::new(z[(i, j)], -z[(n + i, j)])))
}

fn souriau(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<Complex<f64>>> {
    let w = unitary(b)?.adjoint() * unitary(a)?;
    Ok(&w * w.transpose())
}

/// Contribution `phi(rho)` of an endpoint eigenvalue `e^{i rho}`.
fn endpoint_term(ev: &[Complex<f64>]) -> Result<f64> {
    let mut s = 0.0;
    for z in ev {
        let rho = z.arg();
        if rho.abs() < AT_ONE {
            s += rho / (2.0 * PI);
        } else if rho.abs() < AMBIGUOUS {
            return Err(Error::Resolution(format!("endpoint eigenvalue angle {rho:.2e} is too close to 0")));
        } else {
            let r = rho.rem_euclid(2.0 * PI);
            s += r / (2.0 * PI) - 0.5;
        }
    }
    Ok(s)
}

fn det_arg(m: &DMatrix<Complex<f64>>) -> f64 {
    m.clone().determinant().arg()
}

fn near_identity(m: &DMatrix<Complex<f64>>) -> bool {
    let n = m.nrows();
    (m - DMatrix::<Complex<f64>>::identity(n, n)).clone().determinant().norm() < 1e-12
}

/// Relative Maslov index of two Lagrangian paths sampled at the same times.
/// The result is a half-integer.
pub fn relative_maslov(a: &LagrangianPath, b: &LagrangianPath) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Invalid("Lagrangian paths must have the same number (>= 2) of samples".into()));
    }
    let mats = a
        .frames
        .iter()
        .zip(&b.frames)
        .map(|(x, y)| souriau(x, y))
        .collect::<Result<Vec<_>>>()?;
    if mats.iter().all(near_identity) {
        return Err(Error::Invalid("the pair intersects at every sample; its index is not defined".into()));
    }
    let mut lift = 0.0;
    let mut prev = det_arg(&mats[0]);
    for m in &mats[1..] {
        let cur = det_arg(m);
        let d = (cur - prev + PI).rem_euclid(2.0 * PI) - PI;
        if d.abs() > MAX_STEP {
            return Err(Error::Resolution(format!("phase jump {d:.3} between samples; refine the path")));
        }
        lift += d;
        prev = cur;
    }
    let start = endpoint_term(&complex_eigenvalues(&mats[0])?)?;
    let end = endpoint_term(&complex_eigenvalues(mats.last().unwrap())?)?;
    let mu = lift / (2.0 * PI) - end + start;
    let rounded = (2.0 * mu).round() / 2.0;
    if (mu - rounded).abs() > 1e-6 {
        return Err(Error::Resolution(format!("index {mu} is not a half-integer")));
    }
    Ok(rounded)
}

/// Graph frame of `gamma` in `R^2n x R^2n`, with the first factor flipped by
/// `(q, p) -> (q, -p)` so the split form becomes the standard one, in
/// `(Q, P)` ordering.
fn graph_frame(g: &DMatrix<f64>) -> DMatrix<f64> {
    let m = g.nrows();
    let n = m / 2;
    let mut f = DMatrix::zeros(2 * m, m);
    for c in 0..m {
        for i in 0..n {
            // Q = (q1, q2), P = (-p1, p2)
            f[(i, c)] = if i == c { 1.0 } else { 0.0 };
            f[(n + i, c)] = g[(i, c)];
            f[(m + i, c)] = if n + i == c { -1.0 } else { 0.0 };
            f[(m + n + i, c)] = g[(n + i, c)];
        }
    }
    f
}

/// Conley-Zehnder index of a symplectic path with nondegenerate endpoint.
pub fn conley_zehnder(path: &SymplecticPath) -> Result<i64> {
    let margin = path.endpoint_margin();
    if margin < 1e-8 {
        return Err(Error::Degenerate(format!("gamma(1) has eigenvalue 1 (margin {margin:.2e})")));
    }
    let m = 2 * path.n();
    let graph = LagrangianPath::new(path.samples.iter().map(graph_frame).collect())?;
    let diag = LagrangianPath::constant(graph_frame(&DMatrix::identity(m, m)), path.samples.len())?;
    let mu = relative_maslov(&graph, &diag)?;
    if mu.fract() != 0.0 {
        return Err(Error::Consistency(format!("Conley-Zehnder index {mu} is not an integer")));
    }
    Ok(mu as i64)
}

/// Symplectic frames `Phi(t) = diag(F(t), G(q(t)) F(t))` along an orbit, where
/// `F` is a `G`-orthonormal frame; `Phi(t)` maps the vertical `{0} x R^n`
/// onto the vertical space at `x(t)`.
#[derive(Debug, Clone)]
pub struct Trivialization {
    pub phi: Vec<DMatrix<f64>>,
    /// `max |Phi^T J0 Phi - J0|` and `max |Phi^T diag(G, G^-1) Phi - I|`.
    pub symplectic_residual: f64,
    pub unitary_residual: f64,
    /// `max` of the upper-right block of `Phi` (maps vertical to vertical).
    pub verticality_residual: f64,
    /// The frame on the vertical space is orientation preserving.
    pub oriented: bool,
}

/// Frames along the orbit of `cp` sampled at `samples + 1` times, together
/// with the linearized flow at those times.
pub struct OrbitSamples {
    pub triv: Trivialization,
    pub dphi: Vec<DMatrix<f64>>,
}

/// Build the trivialization along the orbit through `(q0, p0)`. The optional
/// `reframe(t)` multiplies the tangent frame on the right (used to test
/// independence of the choice of frame).
pub fn vertical_trivialization<L: Lagrangian + ?Sized>(
    l: &L,
    cp: &CriticalPoint,
    samples: usize,
    flow_steps: usize,
    reframe: Option<&dyn Fn(f64) -> DMatrix<f64>>,
) -> Result<OrbitSamples> {
    let m = l.manifold();
    let n = m.dim();
    let steps = samples * flow_steps.div_ceil(samples);
    let flow = integrate_with_monodromy(l, &cp.q0, &cp.p0, (0.0, 1.0), steps, samples, f64::INFINITY)?;
    let vel = flow
        .t
        .iter()
        .zip(flow.q.iter().zip(&flow.p))
        .map(|(&t, (q, p))| l.inverse_legendre(t, q, p))
        .collect::<Result<Vec<_>>>()?;
    let mut nodes = flow.q.clone();
    let closed = cp.is_periodic();
    if closed {
        // Close the sampled curve exactly on the chart lattice.
        let shift = match &cp.path.class {
            crate::loops::LoopClass::Periodic { shift } => shift.clone(),
            crate::loops::LoopClass::Fixed => DVector::zeros(n),
        };
        let last = nodes.len() - 1;
        nodes[last] = &nodes[0] + shift;
    }
    let curve = SampledCurve::with_velocities(nodes, vel, closed)?;
    let frames = m.periodic_orthonormal_frame(&curve)?;
    let j = j0(n);
    let mut phi = Vec::with_capacity(frames.frames.len());
    let (mut sr, mut ur, mut vr) = (0.0f64, 0.0f64, 0.0f64);
    let mut oriented = true;
    for (i, f) in frames.frames.iter().enumerate() {
        let f = match reframe {
            Some(r) => f * r(frames.t[i]),
            None => f.clone(),
        };
        let g = m.metric(&curve.nodes[i])?;
        let gf = &g * &f;
        let mut p = DMatrix::zeros(2 * n, 2 * n);
        p.view_mut((0, 0), (n, n)).copy_from(&f);
        p.view_mut((n, n), (n, n)).copy_from(&gf);
        sr = sr.max((p.transpose() * &j * &p - &j).amax());
        let ginv = g.clone().try_inverse().ok_or_else(|| Error::Frame("singular metric".into()))?;
        let metric = crate::linalg::block_diag(&g, &ginv);
        ur = ur.max((p.transpose() * metric * &p - DMatrix::identity(2 * n, 2 * n)).amax());
        vr = vr.max(p.view((0, n), (n, n)).amax());
        oriented &= gf.determinant() > 0.0;
        phi.push(p);
    }
    Ok(OrbitSamples {
        triv: Trivialization { phi, symplectic_residual: sr, unitary_residual: ur, verticality_residual: vr, oriented },
        dphi: flow.dphi,
    })
}

fn maslov_at<L: Lagrangian + ?Sized>(
    l: &L,
    cp: &CriticalPoint,
    samples: usize,
    flow_steps: usize,
    reframe: Option<&dyn Fn(f64) -> DMatrix<f64>>,
) -> Result<i64> {
    let n = l.dim();
    let os = vertical_trivialization(l, cp, samples, flow_steps, reframe)?;
    let phi0 = &os.triv.phi[0];
    let conj = os
        .triv
        .phi
        .iter()
        .zip(&os.dphi)
        .map(|(p, d)| {
            let inv = p.clone().try_inverse().ok_or_else(|| Error::Frame("singular trivialization".into()))?;
            Ok(inv * d * phi0)
        })
        .collect::<Result<Vec<_>>>()?;
    if cp.is_periodic() {
        conley_zehnder(&SymplecticPath::new(conj)?)
    } else {
        if !os.triv.oriented {
            return Err(Error::Frame("vertical frame is not orientation preserving".into()));
        }
        let v = vertical(n);
        let a = LagrangianPath::new(conj.iter().map(|g| g * &v).collect())?;
        let b = LagrangianPath::constant(v, conj.len())?;
        let mu = relative_maslov(&a, &b)? - n as f64 / 2.0;
        if (mu - mu.round()).abs() > 1e-8 {
            return Err(Error::Consistency(format!("shifted Maslov index {mu} is not an integer")));
        }
        Ok(mu.round() as i64)
    }
}

/// `mu_Lambda` (periodic) or `mu_Omega` (fixed ends) of the orbit of a
/// certified critical point, confirmed at doubled sampling (refining up to
/// eight times if two resolutions disagree).
pub fn maslov_of_orbit<L: Lagrangian + ?Sized>(l: &L, cp: &CriticalPoint, samples: usize, flow_steps: usize) -> Result<i64> {
    maslov_of_orbit_reframed(l, cp, samples, flow_steps, None)
}

pub fn maslov_of_orbit_reframed<L: Lagrangian + ?Sized>(
    l: &L,
    cp: &CriticalPoint,
    samples: usize,
    flow_steps: usize,
    reframe: Option<&dyn Fn(f64) -> DMatrix<f64>>,
) -> Result<i64> {
    if cp.nondeg_margin < QUARANTINE_MARGIN {
        return Err(Error::Degenerate("orbit is not certified nondegenerate".into()));
    }
    let attempt = |s: usize| maslov_at(l, cp, s, flow_steps.max(s), reframe);
    let mut prev = attempt(samples);
    let mut s = samples * 2;
    loop {
        let cur = attempt(s);
        match (&prev, &cur) {
            (Ok(a), Ok(b)) if a == b => return cur,
            _ if s >= samples * 8 => {
                return match cur {
                    Ok(b) => Err(Error::Resolution(format!("Maslov index not stable under refinement (last {b})"))),
                    Err(e) => Err(e),
                }
            }
            _ => {}
        }
        prev = cur;
        s *= 2;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexReport {
    pub morse: usize,
    pub maslov: i64,
    pub equal: bool,
}

pub fn verify_index_theorem<L: Lagrangian + ?Sized>(l: &L, cp: &CriticalPoint, samples: usize, flow_steps: usize) -> Result<IndexReport> {
    let mu = maslov_of_orbit(l, cp, samples, flow_steps)?;
    Ok(IndexReport { morse: cp.morse_index, maslov: mu, equal: mu == cp.morse_index as i64 })
}

/// An index with a known closed-form value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Normalization {
    pub case: String,
    pub expected: f64,
    pub computed: f64,
}

impl Normalization {
    pub fn holds(&self) -> bool {
        self.expected == self.computed
    }
}

/// Conley-Zehnder indices of the rotations `exp(t theta J)` (value `theta / pi`
/// for odd multiples of pi) and of hyperbolic paths (0, or 1 after a half
/// turn), and relative Maslov indices of the rotated vertical against the
/// vertical (`theta / pi`).
pub fn normalization_table() -> Result<Vec<Normalization>> {
    let rot = |theta: f64| (j0(1) * theta).exp();
    let hyp = |a: f64| DMatrix::from_diagonal(&DVector::from_vec(vec![a.exp(), (-a).exp()]));
    let mut out = Vec::new();
    for k in [1.0, -1.0, 3.0, -3.0] {
        let theta = k * PI;
        let cz = conley_zehnder(&SymplecticPath::from_fn(257, |t| rot(t * theta))?)?;
        out.push(Normalization { case: format!("cz rotation {k} pi"), expected: k, computed: cz as f64 });
    }
    for a in [0.5, 1.0, 2.0] {
        let cz = conley_zehnder(&SymplecticPath::from_fn(129, |t| hyp(a * t))?)?;
        out.push(Normalization { case: format!("cz hyperbolic {a}"), expected: 0.0, computed: cz as f64 });
        let cz = conley_zehnder(&SymplecticPath::from_fn(257, |t| rot(PI * t) * hyp(a * t))?)?;
        out.push(Normalization { case: format!("cz negative hyperbolic {a}"), expected: 1.0, computed: cz as f64 });
    }
    let base = LagrangianPath::constant(vertical(1), 129)?;
    for k in [0.5, -0.5, 1.5] {
        let theta = k * PI;
        let path = LagrangianPath::from_fn(129, |t| rot(t * theta) * vertical(1))?;
        out.push(Normalization {
            case: format!("maslov rotated vertical {k} pi"),
            expected: k,
            computed: relative_maslov(&path, &base)?,
        });
    }
    Ok(out)
}
