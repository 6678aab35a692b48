//! Periodic orbits and fixed-endpoint solutions: integration with the
//! variational equations, multi-start Newton on the discrete Euler-Lagrange
//! system, nondegeneracy certificates and Morse indices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::lagrangian::Lagrangian;
use crate::linalg::{min_singular_value, symplectic_residual};
use crate::loops::{DiscreteLoop, LoopClass, PhaseLoop};
use crate::manifold::Manifold;
use crate::rng::{stream, Stage};
use crate::{Error, Result};

/// Nondegeneracy margins below this are quarantined.
pub const QUARANTINE_MARGIN: f64 = 1e-6;
/// Residual required of every emitted critical point.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Hessian eigenvalues (scaled by `1/h`) below this count as zero.
const ZERO_EIGENVALUE: f64 = 1e-8;

/// Samples of the Hamiltonian flow and its linearization.
#[derive(Debug, Clone)]
pub struct FlowSamples {
    pub t: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub p: Vec<DVector<f64>>,
    pub dphi: Vec<DMatrix<f64>>,
}

impl FlowSamples {
    pub fn end_q(&self) -> &DVector<f64> {
        self.q.last().unwrap()
    }

    pub fn end_p(&self) -> &DVector<f64> {
        self.p.last().unwrap()
    }

    pub fn monodromy(&self) -> &DMatrix<f64> {
        self.dphi.last().unwrap()
    }
}

/// RK4 integration of `X_H` together with `d/dt Dphi = DX_H Dphi` over
/// `t_span` in `steps` steps, recording `samples + 1` evenly spaced states.
pub fn integrate_with_monodromy<L: Lagrangian + ?Sized>(
    l: &L,
    q0: &DVector<f64>,
    p0: &DVector<f64>,
    t_span: (f64, f64),
    steps: usize,
    samples: usize,
    p_bound: f64,
) -> Result<FlowSamples> {
    if samples == 0 || !steps.is_multiple_of(samples) {
        return Err(Error::Invalid(format!("{steps} steps cannot be split into {samples} samples")));
    }
    let n = q0.len();
    let dt = (t_span.1 - t_span.0) / steps as f64;
    let rhs = |t: f64, q: &DVector<f64>, p: &DVector<f64>, m: &DMatrix<f64>| -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
        let h = l.hamiltonian(t, q, p)?;
        let dm = h.dxh() * m;
        Ok((h.dp, -h.dq, dm))
    };
    let (mut q, mut p, mut m) = (q0.clone(), p0.clone(), DMatrix::identity(2 * n, 2 * n));
    let mut out = FlowSamples { t: vec![t_span.0], q: vec![q.clone()], p: vec![p.clone()], dphi: vec![m.clone()] };
    let every = steps / samples;
    for s in 0..steps {
        let t = t_span.0 + s as f64 * dt;
        let (a1, b1, c1) = rhs(t, &q, &p, &m)?;
        let half = 0.5 * dt;
        let (a2, b2, c2) = rhs(t + half, &(&q + &a1 * half), &(&p + &b1 * half), &(&m + &c1 * half))?;
        let (a3, b3, c3) = rhs(t + half, &(&q + &a2 * half), &(&p + &b2 * half), &(&m + &c2 * half))?;
        let (a4, b4, c4) = rhs(t + dt, &(&q + &a3 * dt), &(&p + &b3 * dt), &(&m + &c3 * dt))?;
        let w = dt / 6.0;
        q += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * w;
        p += (b1 + b2 * 2.0 + b3 * 2.0 + b4) * w;
        m += (c1 + c2 * 2.0 + c3 * 2.0 + c4) * w;
        if !(p.amax() <= p_bound) || q.iter().any(|x| !x.is_finite()) {
            return Err(Error::Escape { bound: p_bound });
        }
        if (s + 1) % every == 0 {
            out.t.push(t + dt);
            out.q.push(q.clone());
            out.p.push(p.clone());
            out.dphi.push(m.clone());
        }
    }
    Ok(out)
}

/// Boundary condition of a search.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    /// 1-periodic orbits whose lift closes up with `q(1) = q(0) + shift`
    /// (`shift` measured in coordinate periods).
    Periodic { winding: Vec<i64> },
    /// Solutions from `q0` to the chart point `q1` (a lift of the target;
    /// different lifts select different path classes).
    Fixed { q0: DVector<f64>, q1: DVector<f64> },
}

/// Free homotopy class of a loop or path: the winding vector on the torus,
/// nothing on the sphere.
pub fn homotopy_class(m: &Manifold, problem: &Problem) -> Vec<i64> {
    match (m, problem) {
        (Manifold::Sphere, _) => Vec::new(),
        (_, Problem::Periodic { winding }) => winding.clone(),
        (_, Problem::Fixed { q0, q1 }) => (q1 - q0).iter().map(|d| d.floor() as i64).collect(),
    }
}

fn lattice_shift(m: &Manifold, winding: &[i64]) -> DVector<f64> {
    let periods = m.periods();
    DVector::from_fn(m.dim(), |i, _| winding.get(i).copied().unwrap_or(0) as f64 * periods[i].unwrap_or(0.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchConfig {
    /// Node count `N` of the discrete loops.
    pub resolution: usize,
    /// Constant seeds per periodic coordinate.
    pub grid_per_dim: usize,
    pub random_seeds: usize,
    pub fourier_modes: usize,
    pub amplitude: f64,
    pub seed: u64,
    pub action_bound: f64,
    pub flow_steps: usize,
    pub p_bound: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            resolution: 64,
            grid_per_dim: 4,
            random_seeds: 24,
            fourier_modes: 3,
            amplitude: 0.3,
            seed: 0,
            action_bound: 1e3,
            flow_steps: 2048,
            p_bound: 1e3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub path: DiscreteLoop,
    pub class: Vec<i64>,
    pub action: f64,
    pub morse_index: usize,
    /// Smallest singular value of `Dphi - I` (periodic) or of the
    /// upper-right block of `Dphi` (fixed ends).
    pub nondeg_margin: f64,
    pub monodromy: DMatrix<f64>,
    pub residual: f64,
    /// Initial phase point of the continuous orbit.
    pub q0: DVector<f64>,
    pub p0: DVector<f64>,
    /// Distance between the shooting-refined initial momentum and the
    /// discrete Legendre momentum of the critical point.
    pub discretization_error: f64,
    /// Action of the discrete Legendre lift and its Hamilton residual.
    pub lift_action: f64,
    pub hamilton_residual: f64,
}

impl CriticalPoint {
    pub fn is_periodic(&self) -> bool {
        self.path.is_periodic()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Quarantined {
    pub class: Vec<i64>,
    pub action: f64,
    pub nondeg_margin: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct OrbitSearch {
    pub generators: Vec<CriticalPoint>,
    pub quarantined: Vec<Quarantined>,
    /// Seeds whose Newton iteration failed.
    pub dropped: usize,
}

/// Levenberg-Marquardt damped Newton on the discrete Euler-Lagrange system.
pub fn polish<L: Lagrangian + ?Sized>(l: &L, start: &DiscreteLoop, tol: f64, max_iter: usize) -> Result<DiscreteLoop> {
    let mut cur = start.clone();
    let mut g = cur.gradient(l)?;
    let h = cur.step();
    let mut mu = 1e-3;
    for _ in 0..max_iter {
        if g.amax() / h < tol {
            return Ok(cur);
        }
        let hess = cur.hessian(l)?;
        let mut accepted = false;
        while mu < 1e8 {
            let mut a = hess.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += mu * h;
            }
            let Some(step) = a.lu().solve(&g) else {
                mu *= 10.0;
                continue;
            };
            let trial = cur.with_free(&(cur.free_vector() - step));
            if let Ok(gt) = trial.gradient(l) {
                if gt.norm() < g.norm() {
                    cur = trial;
                    g = gt;
                    mu = (mu * 0.1).max(1e-14);
                    accepted = true;
                    break;
                }
            }
            mu *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    if g.amax() / h < tol {
        Ok(cur)
    } else {
        Err(Error::Numerical(format!("Newton stalled at residual {:.3e}", g.amax() / h)))
    }
}

/// Least-squares solve through the SVD, dropping singular values below
/// `rel * sigma_max`.
fn pseudo_solve(a: &DMatrix<f64>, b: &DVector<f64>, rel: f64) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.solve(b, rel * smax).unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Refine the initial momentum (and, for loops, the initial point) so the
/// continuous flow satisfies the boundary condition.
fn shoot<L: Lagrangian + ?Sized>(
    l: &L,
    problem: &Problem,
    q0: &DVector<f64>,
    p0: &DVector<f64>,
    cfg: &SearchConfig,
    m: &Manifold,
) -> Result<(DVector<f64>, DVector<f64>, FlowSamples)> {
    let n = q0.len();
    let (mut q, mut p) = (q0.clone(), p0.clone());
    let mut flow = integrate_with_monodromy(l, &q, &p, (0.0, 1.0), cfg.flow_steps, 1, cfg.p_bound)?;
    for _ in 0..30 {
        let mono = flow.monodromy().clone();
        match problem {
            Problem::Periodic { winding } => {
                let shift = lattice_shift(m, winding);
                let mut f = DVector::zeros(2 * n);
                f.rows_mut(0, n).copy_from(&(flow.end_q() - &q - &shift));
                f.rows_mut(n, n).copy_from(&(flow.end_p() - &p));
                if f.amax() < 1e-12 {
                    break;
                }
                let jac = mono - DMatrix::identity(2 * n, 2 * n);
                let dx = pseudo_solve(&jac, &f, 1e-9);
                q -= dx.rows(0, n);
                p -= dx.rows(n, n);
            }
            Problem::Fixed { q1, .. } => {
                let f = flow.end_q() - q1;
                if f.amax() < 1e-12 {
                    break;
                }
                let b = mono.view((0, n), (n, n)).into_owned();
                p -= pseudo_solve(&b, &f, 1e-9);
            }
        }
        flow = integrate_with_monodromy(l, &q, &p, (0.0, 1.0), cfg.flow_steps, 1, cfg.p_bound)?;
    }
    Ok((q, p, flow))
}

pub fn nondeg_margin(problem: &Problem, monodromy: &DMatrix<f64>) -> f64 {
    let n = monodromy.nrows() / 2;
    match problem {
        Problem::Periodic { .. } => min_singular_value(&(monodromy - DMatrix::identity(2 * n, 2 * n))),
        Problem::Fixed { .. } => min_singular_value(&monodromy.view((0, n), (n, n)).into_owned()),
    }
}

/// Number of negative eigenvalues of the discrete second variation and the
/// smallest eigenvalue modulus, both of `Hessian / h`.
pub fn hessian_spectrum<L: Lagrangian + ?Sized>(l: &L, path: &DiscreteLoop) -> Result<(usize, f64)> {
    let h = path.step();
    let ev = path.hessian(l)?.symmetric_eigenvalues() / h;
    let neg = ev.iter().filter(|&&x| x < 0.0).count();
    let min_abs = ev.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    Ok((neg, min_abs))
}

/// Morse index of a discrete critical point, confirmed at twice the
/// resolution (and up to eight times if the two counts disagree).
pub fn morse_index<L: Lagrangian + ?Sized>(l: &L, path: &DiscreteLoop) -> Result<usize> {
    let (m1, z1) = hessian_spectrum(l, path)?;
    let mut fine = polish(l, &path.refine(), 1e-10, 50)?;
    let (mut m2, z2) = hessian_spectrum(l, &fine)?;
    if z1 < ZERO_EIGENVALUE && z2 < ZERO_EIGENVALUE {
        return Err(Error::Degenerate(format!("second variation has eigenvalue {:.2e} at two resolutions", z2)));
    }
    let mut prev = m1;
    let mut level = 2;
    while m2 != prev && level < 8 {
        fine = polish(l, &fine.refine(), 1e-10, 50)?;
        prev = m2;
        m2 = hessian_spectrum(l, &fine)?.0;
        level *= 2;
    }
    if m2 != prev {
        return Err(Error::Resolution(format!("Morse index not stable under refinement ({prev} vs {m2})")));
    }
    Ok(m2)
}

/// Translate a periodic loop so `q_0` lies in the fundamental domain.
fn canonicalize(m: &Manifold, path: &DiscreteLoop) -> DiscreteLoop {
    if !path.is_periodic() {
        return path.clone();
    }
    let periods = m.periods();
    let mut shift = DVector::zeros(path.dim());
    for (i, per) in periods.iter().enumerate() {
        if let Some(per) = per {
            shift[i] = ((path.nodes[0][i] + 1e-7) / per).floor() * per;
        }
    }
    DiscreteLoop { nodes: path.nodes.iter().map(|q| q - &shift).collect(), class: path.class.clone() }
}

/// Max nodewise distance modulo the chart lattice (and modulo cyclic node
/// shifts when `shifts` is set).
pub fn loop_distance(m: &Manifold, a: &DiscreteLoop, b: &DiscreteLoop, shifts: bool) -> f64 {
    if a.intervals() != b.intervals() {
        return f64::INFINITY;
    }
    let n = a.intervals();
    let periods = m.periods();
    let offsets: Vec<usize> = if shifts && a.is_periodic() { (0..n).collect() } else { vec![0] };
    let mut best = f64::INFINITY;
    for off in offsets {
        let node_b = |i: usize| -> DVector<f64> {
            let j = i + off;
            if j < n {
                b.nodes[j].clone()
            } else {
                match &b.class {
                    LoopClass::Periodic { shift } => &b.nodes[j - n] + shift,
                    LoopClass::Fixed => b.nodes[j].clone(),
                }
            }
        };
        let diffs: Vec<DVector<f64>> = (0..n).map(|i| &a.nodes[i] - node_b(i)).collect();
        let mut d = 0.0f64;
        for k in 0..a.dim() {
            let lattice = match periods[k] {
                Some(per) if a.is_periodic() => {
                    let mean = diffs.iter().map(|x| x[k]).sum::<f64>() / n as f64;
                    (mean / per).round() * per
                }
                _ => 0.0,
            };
            for x in &diffs {
                d = d.max((x[k] - lattice).abs());
            }
        }
        best = best.min(d);
    }
    best
}

fn lex_cmp(a: &DiscreteLoop, b: &DiscreteLoop) -> std::cmp::Ordering {
    for (x, y) in a.nodes.iter().zip(&b.nodes) {
        for (u, v) in x.iter().zip(y.iter()) {
            match u.total_cmp(v) {
                std::cmp::Ordering::Equal => continue,
                o => return o,
            }
        }
    }
    std::cmp::Ordering::Equal
}

enum Outcome {
    Generator(Box<CriticalPoint>),
    Quarantined(Quarantined),
    Dropped,
}

/// Certify a polished discrete critical point.
fn certify<L: Lagrangian + ?Sized>(
    l: &L,
    problem: &Problem,
    path: DiscreteLoop,
    cfg: &SearchConfig,
) -> Result<Outcome> {
    let m = *l.manifold();
    let path = canonicalize(&m, &path);
    let class = homotopy_class(&m, problem);
    let residual = path.residual(l)?;
    let action = path.action(l)?;
    if residual >= RESIDUAL_TOL || action > cfg.action_bound {
        return Ok(Outcome::Dropped);
    }
    let p_disc = path.initial_momentum(l)?;
    let (q0, p0, flow) = shoot(l, problem, &path.nodes[0], &p_disc, cfg, &m)?;
    let monodromy = flow.monodromy().clone();
    let margin = nondeg_margin(problem, &monodromy);
    if margin < QUARANTINE_MARGIN {
        return Ok(Outcome::Quarantined(Quarantined {
            class,
            action,
            nondeg_margin: margin,
            reason: "monodromy degenerate".into(),
        }));
    }
    let morse = match morse_index(l, &path) {
        Ok(k) => k,
        Err(e @ (Error::Degenerate(_) | Error::Resolution(_))) => {
            return Ok(Outcome::Quarantined(Quarantined { class, action, nondeg_margin: margin, reason: e.to_string() }))
        }
        Err(e) => return Err(e),
    };
    let lift = path.lift(l)?;
    Ok(Outcome::Generator(Box::new(CriticalPoint {
        discretization_error: (&p0 - &p_disc).amax(),
        lift_action: lift.action(l)?,
        hamilton_residual: lift.hamilton_residual(l)?,
        path,
        class,
        action,
        morse_index: morse,
        nondeg_margin: margin,
        monodromy,
        residual,
        q0,
        p0,
    })))
}

/// Seed loops: constants (plus the winding) on a grid, then random Fourier
/// loops with `1/k^2` decay. Fixed problems use the straight segment plus
/// sine perturbations.
fn seeds(m: &Manifold, problem: &Problem, cfg: &SearchConfig) -> Result<Vec<DiscreteLoop>> {
    let n = m.dim();
    let nt = cfg.resolution;
    let mut out = Vec::new();
    match problem {
        Problem::Periodic { winding } => {
            let shift = lattice_shift(m, winding);
            let bases: Vec<DVector<f64>> = match m {
                Manifold::FlatTorus { .. } => {
                    let k = cfg.grid_per_dim.max(1);
                    (0..k.pow(n as u32))
                        .map(|mut idx| {
                            DVector::from_fn(n, |_, _| {
                                let c = (idx % k) as f64 / k as f64;
                                idx /= k;
                                c
                            })
                        })
                        .collect()
                }
                Manifold::Sphere => {
                    let k = cfg.grid_per_dim.max(1);
                    (0..k * k)
                        .map(|idx| {
                            let th = std::f64::consts::PI * ((idx / k) as f64 + 0.5) / k as f64;
                            let ph = 2.0 * std::f64::consts::PI * (idx % k) as f64 / k as f64;
                            DVector::from_vec(vec![th, ph])
                        })
                        .collect()
                }
            };
            for b in &bases {
                let nodes = (0..nt).map(|i| b + &shift * (i as f64 / nt as f64)).collect();
                out.push(DiscreteLoop::periodic(nodes, shift.clone())?);
            }
            for s in 0..cfg.random_seeds {
                let mut rng = stream(cfg.seed, Stage::Seeds, s as u64);
                let base = bases[rng.gen_range(0..bases.len())].clone();
                let coef: Vec<(f64, f64)> = (0..cfg.fourier_modes * n)
                    .map(|_| (rng.gen_range(-cfg.amplitude..cfg.amplitude), rng.gen_range(-cfg.amplitude..cfg.amplitude)))
                    .collect();
                let nodes = (0..nt)
                    .map(|i| {
                        let t = i as f64 / nt as f64;
                        let mut q = &base + &shift * t;
                        for d in 0..n {
                            for k in 1..=cfg.fourier_modes {
                                let (a, b) = coef[(k - 1) * n + d];
                                let w = 2.0 * std::f64::consts::PI * k as f64 * t;
                                q[d] += (a * w.cos() + b * w.sin()) / (k * k) as f64;
                            }
                        }
                        q
                    })
                    .collect();
                out.push(DiscreteLoop::periodic(nodes, shift.clone())?);
            }
        }
        Problem::Fixed { q0, q1 } => {
            let line = |t: f64| q0 + (q1 - q0) * t;
            out.push(DiscreteLoop::fixed((0..=nt).map(|i| line(i as f64 / nt as f64)).collect())?);
            for s in 0..cfg.random_seeds {
                let mut rng = stream(cfg.seed, Stage::Seeds, s as u64);
                let coef: Vec<f64> = (0..cfg.fourier_modes * n).map(|_| rng.gen_range(-cfg.amplitude..cfg.amplitude)).collect();
                let nodes = (0..=nt)
                    .map(|i| {
                        let t = i as f64 / nt as f64;
                        let mut q = line(t);
                        for d in 0..n {
                            for k in 1..=cfg.fourier_modes {
                                q[d] += coef[(k - 1) * n + d] * (std::f64::consts::PI * k as f64 * t).sin() / (k * k) as f64;
                            }
                        }
                        q
                    })
                    .collect();
                out.push(DiscreteLoop::fixed(nodes)?);
            }
        }
    }
    Ok(out)
}

/// For fixed problems: shoot from the seed's discrete initial momentum,
/// sample the resulting orbit at the nodes; fall back to the seed itself.
fn shooting_start<L: Lagrangian + ?Sized>(l: &L, problem: &Problem, seed: &DiscreteLoop, cfg: &SearchConfig) -> DiscreteLoop {
    let Problem::Fixed { q0, q1 } = problem else {
        return seed.clone();
    };
    let attempt = || -> Result<DiscreteLoop> {
        let p0 = seed.initial_momentum(l)?;
        let (_, p, _) = shoot(l, problem, q0, &p0, cfg, l.manifold())?;
        let nt = seed.intervals();
        let steps = nt * (cfg.flow_steps / nt).max(1);
        let flow = integrate_with_monodromy(l, q0, &p, (0.0, 1.0), steps, nt, cfg.p_bound)?;
        if (flow.end_q() - q1).amax() > 1e-8 {
            return Err(Error::Numerical("shooting missed the endpoint".into()));
        }
        let mut nodes = flow.q.clone();
        nodes[0] = q0.clone();
        nodes[nt] = q1.clone();
        DiscreteLoop::fixed(nodes)
    };
    attempt().unwrap_or_else(|_| seed.clone())
}

fn search<L: Lagrangian + ?Sized>(l: &L, problem: &Problem, cfg: &SearchConfig) -> Result<OrbitSearch> {
    let m = *l.manifold();
    let seeds = seeds(&m, problem, cfg)?;
    let outcomes: Vec<Result<Outcome>> = seeds
        .par_iter()
        .map(|s| {
            let start = shooting_start(l, problem, s, cfg);
            match polish(l, &start, 1e-11, 100) {
                Ok(path) => certify(l, problem, path, cfg).or_else(|e| match e {
                    Error::Escape { .. } | Error::Domain(_) | Error::Numerical(_) | Error::Convexity(_) => Ok(Outcome::Dropped),
                    e => Err(e),
                }),
                Err(_) => Ok(Outcome::Dropped),
            }
        })
        .collect();
    let shifts = l.is_autonomous();
    let mut result = OrbitSearch::default();
    for o in outcomes {
        match o? {
            Outcome::Generator(cp) => {
                if !result.generators.iter().any(|g| loop_distance(&m, &g.path, &cp.path, shifts) < 1e-6) {
                    result.generators.push(*cp);
                }
            }
            Outcome::Quarantined(q) => {
                if !result.quarantined.iter().any(|x| x.class == q.class && (x.action - q.action).abs() < 1e-6) {
                    result.quarantined.push(q);
                }
            }
            Outcome::Dropped => result.dropped += 1,
        }
    }
    result
        .generators
        .sort_by(|a, b| a.action.total_cmp(&b.action).then_with(|| lex_cmp(&a.path, &b.path)));
    result.quarantined.sort_by(|a, b| a.action.total_cmp(&b.action));
    Ok(result)
}

/// Nondegenerate 1-periodic orbits in the free homotopy class `winding` with
/// action at most `cfg.action_bound`.
pub fn find_periodic_orbits<L: Lagrangian + ?Sized>(l: &L, winding: &[i64], cfg: &SearchConfig) -> Result<OrbitSearch> {
    search(l, &Problem::Periodic { winding: winding.to_vec() }, cfg)
}

/// Nondegenerate solutions from `q0` to the lift `q1` of the target point.
pub fn find_bvp_solutions<L: Lagrangian + ?Sized>(
    l: &L,
    q0: &DVector<f64>,
    q1: &DVector<f64>,
    cfg: &SearchConfig,
) -> Result<OrbitSearch> {
    l.manifold().check_domain(q0)?;
    l.manifold().check_domain(q1)?;
    search(l, &Problem::Fixed { q0: q0.clone(), q1: q1.clone() }, cfg)
}

/// Phase loop of the discrete Legendre lift, after checking the discrete
/// Hamilton equations and the equality of the two actions.
pub fn legendre_lift<L: Lagrangian + ?Sized>(l: &L, cp: &CriticalPoint) -> Result<PhaseLoop> {
    let x = cp.path.lift(l)?;
    let r = x.hamilton_residual(l)?;
    let gap = (x.action(l)? - cp.path.action(l)?).abs();
    if r >= 1e-6 || gap >= 1e-6 {
        return Err(Error::InconsistentPair(format!("Hamilton residual {r:.2e}, |A - E| = {gap:.2e}")));
    }
    Ok(x)
}

pub fn monodromy_symplectic_residual(cp: &CriticalPoint) -> f64 {
    symplectic_residual(&cp.monodromy)
}
