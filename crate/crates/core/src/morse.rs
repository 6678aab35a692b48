//! Morse complex of the discrete action: negative W^{1,2} gradient flow,
//! signed counts of connecting flow lines, boundary matrices, homology and
//! the action filtration.
//!
//! The flow metric on free coordinates is `P = s K (x) I + h W (x) I`, with
//! `K` the second difference matrix scaled by `1/h` (periodic or Dirichlet),
//! `s` a stiffness factor and `W` diagonal node weights. `s = 1, W = I` is the
//! discrete W^{1,2} inner product `sum h (|D xi|^2 + |xi|^2)`.
//!
//! Orientation of `W^u(x)`: the negative generalized eigenvectors of
//! `(Hessian, P)` in order of decreasing `|lambda|`, each with its first
//! significant component positive. A line from an index-one generator
//! leaving along `+u` counts `+1`, along `-u` counts `-1`. For index two the
//! unstable circle is swept counterclockwise in the `(u_1, u_2)` plane; a
//! crossing of the stable manifold of `y` counts the sign of the `u_y`
//! component of (after - before) at closest approach to `y`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::lagrangian::Lagrangian;
use crate::loops::{DiscreteLoop, LoopClass};
use crate::manifold::Manifold;
use crate::orbits::CriticalPoint;
use crate::snf::{self, Homology, IntMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowMetric {
    /// Factor on the difference quotient term.
    pub stiffness: f64,
    /// Node weights `1 + mass_modulation * sin(2 pi t_i)` on the zeroth
    /// order term.
    pub mass_modulation: f64,
}

impl FlowMetric {
    pub const STANDARD: FlowMetric = FlowMetric { stiffness: 1.0, mass_modulation: 0.0 };

    pub fn perturbed(delta: f64) -> Self {
        FlowMetric { stiffness: 1.0 + delta, mass_modulation: delta }
    }
}

impl Default for FlowMetric {
    fn default() -> Self {
        Self::STANDARD
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowConfig {
    pub r0: f64,
    pub armijo: f64,
    pub gradient_tol: f64,
    pub match_tol: f64,
    pub max_steps: usize,
    pub sphere_samples: usize,
    pub max_depth: usize,
    pub metric: FlowMetric,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            r0: 1e-3,
            armijo: 1e-4,
            gradient_tol: 1e-8,
            match_tol: 1e-5,
            max_steps: 20_000,
            sphere_samples: 64,
            max_depth: 40,
            metric: FlowMetric::STANDARD,
        }
    }
}

/// Flow metric matrix on the free coordinates of `template`.
pub fn preconditioner(template: &DiscreteLoop, metric: &FlowMetric) -> DMatrix<f64> {
    let n = template.intervals();
    let d = template.dim();
    let h = template.step();
    let free = template.free_nodes();
    let offset = usize::from(!template.is_periodic());
    let mut p = DMatrix::zeros(free * d, free * d);
    let k = metric.stiffness / h;
    for s in 0..free {
        let t = (s + offset) as f64 * h;
        let w = h * (1.0 + metric.mass_modulation * (2.0 * PI * t).sin());
        for c in 0..d {
            p[(s * d + c, s * d + c)] += 2.0 * k + w;
        }
        let next = if template.is_periodic() { Some((s + 1) % n) } else { (s + 1 < free).then_some(s + 1) };
        if let Some(r) = next {
            for c in 0..d {
                p[(s * d + c, r * d + c)] -= k;
                p[(r * d + c, s * d + c)] -= k;
            }
        }
    }
    p
}

/// W^{1,2} gradient `P^{-1} dE` of the discrete action.
pub fn w12_gradient<L: Lagrangian + ?Sized>(l: &L, path: &DiscreteLoop, metric: &FlowMetric) -> Result<DVector<f64>> {
    let p = preconditioner(path, metric);
    let chol = p.cholesky().ok_or_else(|| Error::Numerical("flow metric is not positive definite".into()))?;
    Ok(chol.solve(&path.gradient(l)?))
}

/// Where a trajectory ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Limit {
    /// A listed generator, reached modulo the given lattice translation.
    Generator { index: usize, shift: Vec<i64> },
    /// Converged to a critical point that is not in the list.
    Unmatched,
    /// Left the action window.
    Divergent,
    /// Line search failed or the step budget ran out.
    Stalled,
}

/// Closest approach of a trajectory to one generator.
#[derive(Debug, Clone)]
pub struct Approach {
    pub distance: f64,
    pub step: usize,
    pub shift: Vec<i64>,
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub limit: Limit,
    /// Free-coordinate states with strictly decreasing action.
    pub states: Vec<DVector<f64>>,
    pub energies: Vec<f64>,
    /// Indexed like the generator list of the flow.
    pub approach: Vec<Approach>,
}

/// A connecting flow line between generators of adjacent index.
#[derive(Debug, Clone)]
pub struct FlowLine {
    pub source: usize,
    pub target: usize,
    pub target_shift: Vec<i64>,
    pub sign: i32,
    pub energy_drop: f64,
    pub trajectory: Vec<DiscreteLoop>,
    pub energies: Vec<f64>,
}

impl FlowLine {
    /// `|(E(x) - E(y)) - sum of step drops|`; zero up to the endpoint offset.
    pub fn energy_identity_defect(&self) -> f64 {
        let drops: f64 = self.energies.windows(2).map(|w| w[0] - w[1]).sum();
        (self.energy_drop - drops).abs()
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.energies.windows(2).all(|w| w[1] < w[0])
    }
}

/// Gradient flow restricted to one homotopy class.
pub struct ClassFlow<'a, L: ?Sized> {
    l: &'a L,
    manifold: Manifold,
    template: DiscreteLoop,
    p: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    cfg: &'a FlowConfig,
    /// `(global index, free vector, Morse index, action)` of each generator.
    gens: Vec<(usize, DVector<f64>, usize, f64)>,
    alpha: f64,
    floor: f64,
}

impl<'a, L: Lagrangian + ?Sized> ClassFlow<'a, L> {
    pub fn new(l: &'a L, all: &[CriticalPoint], members: &[usize], cfg: &'a FlowConfig) -> Result<Self> {
        let template = all[members[0]].path.clone();
        let p = preconditioner(&template, &cfg.metric);
        let chol = p.clone().cholesky().ok_or_else(|| Error::Numerical("flow metric is not positive definite".into()))?;
        let gens = members
            .iter()
            .map(|&i| (i, all[i].path.free_vector(), all[i].morse_index, all[i].action))
            .collect::<Vec<_>>();
        let lowest = gens.iter().map(|g| g.3).fold(f64::INFINITY, f64::min);
        let mut flow = ClassFlow {
            l,
            manifold: *l.manifold(),
            template,
            p,
            chol,
            cfg,
            gens,
            alpha: 1.0,
            floor: lowest - 1e-6 * (1.0 + lowest.abs()),
        };
        // Step length from the stiffest preconditioned Hessian at the
        // generators.
        let mut lmax = 1e-12f64;
        for &i in members {
            let (vals, _) = flow.generalized_eigen(&all[i].path)?;
            lmax = lmax.max(vals.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        }
        flow.alpha = 1.0 / lmax;
        Ok(flow)
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.p
    }

    fn norm(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.p * v)).max(0.0).sqrt()
    }

    /// Eigenpairs of `H u = lambda P u`, `P`-orthonormal, ascending.
    fn generalized_eigen(&self, path: &DiscreteLoop) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
        let h = path.hessian(self.l)?;
        let lo = self.chol.l();
        let linv = lo.clone().try_inverse().ok_or_else(|| Error::Numerical("singular metric factor".into()))?;
        let a = &linv * h * linv.transpose();
        let eig = ((&a + a.transpose()) * 0.5).symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let lt = linv.transpose();
        let vecs = order.iter().map(|&i| &lt * eig.eigenvectors.column(i)).collect();
        Ok((order.iter().map(|&i| eig.eigenvalues[i]).collect(), vecs))
    }

    /// Oriented basis of the unstable space at a generator: negative
    /// eigenvectors by decreasing `|lambda|`, first significant component
    /// positive.
    pub fn unstable_basis(&self, cp: &CriticalPoint) -> Result<Vec<DVector<f64>>> {
        let (vals, vecs) = self.generalized_eigen(&cp.path)?;
        let mut neg: Vec<(f64, DVector<f64>)> =
            vals.into_iter().zip(vecs).filter(|(v, _)| *v < 0.0).collect();
        if neg.len() != cp.morse_index {
            return Err(Error::Resolution(format!(
                "flow Hessian has {} negative directions, generator index is {}",
                neg.len(),
                cp.morse_index
            )));
        }
        neg.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
        Ok(neg
            .into_iter()
            .map(|(_, mut u)| {
                let big = u.amax();
                if let Some(c) = u.iter().find(|c| c.abs() > 1e-6 * big) {
                    if *c < 0.0 {
                        u.neg_mut();
                    }
                }
                &u / self.norm(&u)
            })
            .collect())
    }

    /// `P`-distance modulo the chart lattice, with the lattice translation
    /// of `b` that realizes it.
    pub fn distance(&self, a: &DVector<f64>, b: &DVector<f64>) -> (f64, Vec<i64>) {
        let mut diff = a - b;
        let d = self.template.dim();
        let mut shift = Vec::new();
        if self.template.is_periodic() {
            let nodes = self.template.free_nodes();
            for (k, per) in self.manifold.periods().into_iter().enumerate() {
                let m = match per {
                    Some(per) => {
                        let mean = (0..nodes).map(|s| diff[s * d + k]).sum::<f64>() / nodes as f64;
                        let m = (mean / per).round();
                        for s in 0..nodes {
                            diff[s * d + k] -= m * per;
                        }
                        m as i64
                    }
                    None => 0,
                };
                shift.push(m);
            }
        }
        (self.norm(&diff), shift)
    }

    fn energy(&self, x: &DVector<f64>) -> Option<f64> {
        self.template.with_free(x).action(self.l).ok().filter(|e| e.is_finite())
    }

    /// Armijo-controlled gradient descent from `start` until the gradient
    /// norm drops below tolerance.
    pub fn descend(&self, start: &DVector<f64>) -> Result<FlowOutcome> {
        let mut x = start.clone();
        let mut e = self.energy(&x).ok_or_else(|| Error::Numerical("flow start is outside the chart".into()))?;
        let mut states = vec![x.clone()];
        let mut energies = vec![e];
        let mut approach: Vec<Approach> =
            self.gens.iter().map(|_| Approach { distance: f64::INFINITY, step: 0, shift: Vec::new() }).collect();
        let mut limit = Limit::Stalled;
        for _ in 0..self.cfg.max_steps {
            for (a, g) in approach.iter_mut().zip(&self.gens) {
                let (dist, shift) = self.distance(&x, &g.1);
                if dist < a.distance {
                    *a = Approach { distance: dist, step: states.len() - 1, shift };
                }
            }
            let grad = self.template.with_free(&x).gradient(self.l)?;
            let g = self.chol.solve(&grad);
            let g2 = grad.dot(&g);
            if g2.sqrt() < self.cfg.gradient_tol {
                limit = self.identify(&x);
                break;
            }
            if e < self.floor {
                limit = Limit::Divergent;
                break;
            }
            let slack = 1e-14 * (1.0 + e.abs());
            let mut a = self.alpha;
            let mut accepted = None;
            while a > self.alpha * 1e-12 {
                let xn = &x - &g * a;
                if let Some(en) = self.energy(&xn) {
                    if en <= e - self.cfg.armijo * a * g2 + slack {
                        accepted = Some((xn, en));
                        break;
                    }
                }
                a *= 0.5;
            }
            let Some((xn, en)) = accepted else { break };
            x = xn;
            if en < e {
                states.push(x.clone());
                energies.push(en);
            }
            e = en;
        }
        Ok(FlowOutcome { limit, states, energies, approach })
    }

    fn identify(&self, x: &DVector<f64>) -> Limit {
        let mut best: Option<(f64, usize, Vec<i64>)> = None;
        for g in &self.gens {
            let (d, s) = self.distance(x, &g.1);
            if d < self.cfg.match_tol && best.as_ref().is_none_or(|b| d < b.0) {
                best = Some((d, g.0, s));
            }
        }
        match best {
            Some((_, index, shift)) => Limit::Generator { index, shift },
            None => Limit::Unmatched,
        }
    }

    fn local(&self, global: usize) -> usize {
        self.gens.iter().position(|g| g.0 == global).expect("generator belongs to the class")
    }

    /// The discrete flow line `x`, states of `out` up to step `upto` with
    /// action above the target, then the (translated) target itself.
    #[allow(clippy::too_many_arguments)]
    fn witness(&self, source: usize, target: usize, shift: Vec<i64>, sign: i32, x: &DVector<f64>, out: &FlowOutcome, upto: usize) -> FlowLine {
        let gs = &self.gens[self.local(source)];
        let gt = &self.gens[self.local(target)];
        let mut states = vec![x.clone()];
        let mut energies = vec![gs.3];
        for (s, e) in out.states.iter().zip(&out.energies).take(upto + 1) {
            if *e < *energies.last().unwrap() && *e > gt.3 {
                states.push(s.clone());
                energies.push(*e);
            }
        }
        states.push(self.translate(&gt.1, &shift));
        energies.push(gt.3);
        FlowLine {
            source,
            target,
            target_shift: shift,
            sign,
            energy_drop: gs.3 - gt.3,
            trajectory: states.iter().map(|s| self.template.with_free(s)).collect(),
            energies,
        }
    }

    /// Largest `P`-distance between consecutive states of a witness.
    pub fn max_jump(&self, line: &FlowLine) -> f64 {
        line.trajectory
            .windows(2)
            .map(|w| self.norm(&(w[1].free_vector() - w[0].free_vector())))
            .fold(0.0, f64::max)
    }

    fn sphere_point(&self, x: &DVector<f64>, basis: &[DVector<f64>], theta: f64) -> DVector<f64> {
        x + (&basis[0] * theta.cos() + &basis[1] * theta.sin()) * self.cfg.r0
    }

    /// All flow lines from the generator `source` (index 1 or 2) to
    /// generators of one lower index, plus transversality warnings.
    pub fn lines_from(&self, all: &[CriticalPoint], source: usize) -> Result<(Vec<FlowLine>, Vec<String>)> {
        let cp = &all[source];
        let k = cp.morse_index;
        let x = cp.path.free_vector();
        let basis = self.unstable_basis(cp)?;
        let mut warnings = Vec::new();
        let mut lines = Vec::new();
        let index_of = |i: usize| all[i].morse_index;
        match k {
            0 => {}
            1 => {
                let outs: Vec<Result<FlowOutcome>> = [1.0, -1.0]
                    .par_iter()
                    .map(|s| self.descend(&(&x + &basis[0] * (s * self.cfg.r0))))
                    .collect();
                for (out, sign) in outs.into_iter().zip([1, -1]) {
                    let out = out?;
                    match &out.limit {
                        Limit::Generator { index, shift } if index_of(*index) == 0 => {
                            let upto = out.states.len() - 1;
                            lines.push(self.witness(source, *index, shift.clone(), sign, &x, &out, upto));
                        }
                        Limit::Generator { index, .. } => warnings.push(format!(
                            "flow line from generator {source} (index 1) ends at generator {index} of index {}",
                            index_of(*index)
                        )),
                        other => {
                            return Err(Error::Consistency(format!(
                                "unstable branch of generator {source} ended as {other:?}"
                            )))
                        }
                    }
                }
            }
            2 => {
                let s = self.cfg.sphere_samples;
                let thetas: Vec<f64> = (0..s).map(|j| 2.0 * PI * (j as f64 + 0.5) / s as f64).collect();
                let outs = thetas
                    .par_iter()
                    .map(|&t| self.descend(&self.sphere_point(&x, &basis, t)))
                    .collect::<Result<Vec<_>>>()?;
                for o in &outs {
                    match &o.limit {
                        Limit::Generator { index, .. } if index_of(*index) >= k => warnings.push(format!(
                            "unstable sphere of generator {source} flows into generator {index} of index {}",
                            index_of(*index)
                        )),
                        Limit::Generator { .. } => {}
                        other => {
                            return Err(Error::Consistency(format!(
                                "unstable sphere sample of generator {source} ended as {other:?}"
                            )))
                        }
                    }
                }
                let mut intervals = Vec::new();
                for j in 0..s {
                    let jn = (j + 1) % s;
                    if outs[j].limit != outs[jn].limit {
                        let hi = if jn == 0 { thetas[0] + 2.0 * PI } else { thetas[jn] };
                        intervals.push((thetas[j], outs[j].clone(), hi, outs[jn].clone()));
                    }
                }
                let found = intervals
                    .into_par_iter()
                    .map(|(lo, olo, hi, ohi)| self.resolve_boundary(all, source, &x, &basis, lo, olo, hi, ohi))
                    .collect::<Result<Vec<_>>>()?;
                for (ls, ws) in found {
                    lines.extend(ls);
                    warnings.extend(ws);
                }
            }
            _ => {
                return Err(Error::Invalid(format!(
                    "connecting orbits from index {k} generators are not supported (unstable spheres of dimension > 1)"
                )))
            }
        }
        Ok((lines, warnings))
    }

    #[allow(clippy::too_many_arguments)]
    fn resolve_boundary(
        &self,
        all: &[CriticalPoint],
        source: usize,
        x: &DVector<f64>,
        basis: &[DVector<f64>],
        lo: f64,
        olo: FlowOutcome,
        hi: f64,
        ohi: FlowOutcome,
    ) -> Result<(Vec<FlowLine>, Vec<String>)> {
        let k = all[source].morse_index;
        let mut stack = vec![(lo, olo, hi, ohi, 0usize)];
        let mut lines = Vec::new();
        let mut warnings = Vec::new();
        while let Some((lo, olo, hi, ohi, depth)) = stack.pop() {
            // Closest common approach to a generator other than the source.
            // Near a saddle the approach distance of a trajectory off the
            // separatrix by `delta` scales like `delta^(ls/(ls+lu))`, so at
            // full bisection depth the strict tolerance may be out of reach in
            // double precision; a passage within `r0` with the two trajectories
            // on opposite sides of the stable manifold is then accepted.
            let exhausted = depth >= self.cfg.max_depth;
            let tol = if exhausted { self.cfg.r0 } else { self.cfg.match_tol };
            let hit = self
                .gens
                .iter()
                .enumerate()
                .filter(|(_, g)| g.0 != source)
                .filter(|(i, _)| {
                    let (a, b) = (&olo.approach[*i], &ohi.approach[*i]);
                    a.distance < tol && b.distance < tol && a.shift == b.shift
                })
                .min_by(|a, b| olo.approach[a.0].distance.total_cmp(&olo.approach[b.0].distance));
            let mut crossing = None;
            if let Some((i, g)) = hit {
                if g.2 + 1 != k {
                    warnings.push(format!(
                        "basin boundary of generator {source} passes generator {} of index {}",
                        g.0, g.2
                    ));
                    continue;
                }
                let uy = self.unstable_basis(&all[g.0])?;
                let side = |o: &FlowOutcome, a: &Approach| -> f64 {
                    let target = self.translate(&g.1, &a.shift);
                    (&o.states[a.step] - target).dot(&(&self.p * &uy[0]))
                };
                let (sl, sh) = (side(&olo, &olo.approach[i]), side(&ohi, &ohi.approach[i]));
                if !exhausted || sl * sh < 0.0 {
                    crossing = Some((i, g.0, if sh - sl > 0.0 { 1 } else { -1 }));
                }
            }
            if let Some((i, target, sign)) = crossing {
                let al = &olo.approach[i];
                lines.push(self.witness(source, target, al.shift.clone(), sign, x, &olo, al.step));
                continue;
            }
            if exhausted {
                return Err(Error::Resolution(format!(
                    "basin boundary of generator {source} near angle {lo:.6} not resolved after {depth} bisections"
                )));
            }
            let mut mid = 0.5 * (lo + hi);
            let mut om = self.descend(&self.sphere_point(x, basis, mid))?;
            if let Limit::Generator { index, .. } = &om.limit {
                if all[*index].morse_index + 1 == k {
                    // Landed on a stable manifold; step off it.
                    mid = lo + 0.6 * (hi - lo);
                    om = self.descend(&self.sphere_point(x, basis, mid))?;
                }
            }
            if om.limit == olo.limit {
                stack.push((mid, om, hi, ohi, depth + 1));
            } else if om.limit == ohi.limit {
                stack.push((lo, olo, mid, om, depth + 1));
            } else {
                stack.push((mid, om.clone(), hi, ohi, depth + 1));
                stack.push((lo, olo, mid, om, depth + 1));
            }
        }
        lines.sort_by(|a, b| (a.target, &a.target_shift).cmp(&(b.target, &b.target_shift)));
        Ok((lines, warnings))
    }

    fn translate(&self, v: &DVector<f64>, shift: &[i64]) -> DVector<f64> {
        let mut out = v.clone();
        if shift.is_empty() {
            return out;
        }
        let d = self.template.dim();
        let periods = self.manifold.periods();
        for s in 0..self.template.free_nodes() {
            for (k, per) in periods.iter().enumerate() {
                if let Some(per) = per {
                    out[s * d + k] += shift[k] as f64 * per;
                }
            }
        }
        out
    }
}

/// Limit of the flow from `start`, matched against `generators` (all in the
/// class of `start`).
pub fn flow_to_limit<L: Lagrangian + ?Sized>(
    l: &L,
    generators: &[CriticalPoint],
    start: &DiscreteLoop,
    cfg: &FlowConfig,
) -> Result<FlowOutcome> {
    let members: Vec<usize> = (0..generators.len()).collect();
    if members.is_empty() {
        return Err(Error::Invalid("no generators to flow to".into()));
    }
    let flow = ClassFlow::new(l, generators, &members, cfg)?;
    flow.descend(&start.free_vector())
}

/// Signed count `n(x, y)` with its witnesses.
pub fn count_connecting_orbits<L: Lagrangian + ?Sized>(
    l: &L,
    generators: &[CriticalPoint],
    x: usize,
    y: usize,
    cfg: &FlowConfig,
) -> Result<(i64, Vec<FlowLine>)> {
    if generators[x].morse_index != generators[y].morse_index + 1 {
        return Err(Error::Invalid("connecting orbits are counted between adjacent indices".into()));
    }
    let key = ClassKey::of(&generators[x]);
    let members: Vec<usize> = (0..generators.len()).filter(|&i| ClassKey::of(&generators[i]) == key).collect();
    if !members.contains(&y) {
        return Ok((0, Vec::new()));
    }
    let flow = ClassFlow::new(l, generators, &members, cfg)?;
    let (lines, _) = flow.lines_from(generators, x)?;
    let lines: Vec<FlowLine> = lines.into_iter().filter(|f| f.target == y).collect();
    Ok((lines.iter().map(|f| f.sign as i64).sum(), lines))
}

/// Connected component of the loop or path space: periodic or fixed ends,
/// and the winding class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ClassKey {
    pub periodic: bool,
    pub class: Vec<i64>,
}

impl ClassKey {
    pub fn of(cp: &CriticalPoint) -> Self {
        ClassKey { periodic: cp.is_periodic(), class: cp.class.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct ClassComplex {
    pub key: ClassKey,
    /// Generator indices by Morse index, each sorted by action.
    pub graded: Vec<Vec<usize>>,
    /// `boundary[k]`: `C_k -> C_{k-1}`, shape `|graded[k-1]| x |graded[k]|`;
    /// `boundary[0]` is `0 x |graded[0]|`.
    pub boundary: Vec<IntMatrix>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexMetadata {
    pub resolution: usize,
    pub flow: FlowConfig,
}

#[derive(Debug, Clone)]
pub struct MorseComplexData {
    pub generators: Vec<CriticalPoint>,
    pub classes: Vec<ClassComplex>,
    pub lines: Vec<FlowLine>,
    pub warnings: Vec<String>,
    pub metadata: ComplexMetadata,
}

impl MorseComplexData {
    pub fn filtration(&self) -> Vec<f64> {
        self.generators.iter().map(|g| g.action).collect()
    }
}

/// Build the Morse complex of `generators` (certified, one resolution).
pub fn assemble_complex<L: Lagrangian + ?Sized>(
    l: &L,
    generators: Vec<CriticalPoint>,
    cfg: &FlowConfig,
) -> Result<MorseComplexData> {
    let resolution = generators.first().map_or(0, |g| g.path.intervals());
    if generators.iter().any(|g| g.path.intervals() != resolution) {
        return Err(Error::Invalid("generators must share one resolution".into()));
    }
    let mut groups: BTreeMap<ClassKey, Vec<usize>> = BTreeMap::new();
    for (i, g) in generators.iter().enumerate() {
        groups.entry(ClassKey::of(g)).or_default().push(i);
    }
    check_fixed_endpoints(&generators, &groups)?;
    let mut classes = Vec::new();
    let mut lines = Vec::new();
    let mut warnings = Vec::new();
    for (key, members) in groups {
        let top = members.iter().map(|&i| generators[i].morse_index).max().unwrap_or(0);
        let mut graded = vec![Vec::new(); top + 1];
        for &i in &members {
            graded[generators[i].morse_index].push(i);
        }
        for g in graded.iter_mut() {
            g.sort_by(|&a, &b| generators[a].action.total_cmp(&generators[b].action));
        }
        let mut boundary = vec![IntMatrix::zeros(0, graded[0].len())];
        for k in 1..=top {
            boundary.push(IntMatrix::zeros(graded[k - 1].len(), graded[k].len()));
        }
        let sources: Vec<usize> =
            (1..=top).filter(|&k| !graded[k - 1].is_empty()).flat_map(|k| graded[k].clone()).collect();
        if !sources.is_empty() {
            let flow = ClassFlow::new(l, &generators, &members, cfg)?;
            let found = sources.par_iter().map(|&x| flow.lines_from(&generators, x)).collect::<Result<Vec<_>>>()?;
            for (ls, ws) in found {
                for line in ls {
                    let (x, y) = (&generators[line.source], &generators[line.target]);
                    if y.action >= x.action {
                        return Err(Error::Consistency(format!(
                            "flow line {} -> {} increases the action",
                            line.source, line.target
                        )));
                    }
                    let k = x.morse_index;
                    let col = graded[k].iter().position(|&i| i == line.source).unwrap();
                    let row = graded[k - 1].iter().position(|&i| i == line.target).unwrap();
                    let b = &mut boundary[k];
                    let v = b.get(row, col) + line.sign as i64;
                    b.set(row, col, v);
                    lines.push(line);
                }
                warnings.extend(ws);
            }
        }
        let cc = ClassComplex { key, graded, boundary };
        check_boundary_square(&cc)?;
        classes.push(cc);
    }
    Ok(MorseComplexData { generators, classes, lines, warnings, metadata: ComplexMetadata { resolution, flow: cfg.clone() } })
}

fn check_fixed_endpoints(generators: &[CriticalPoint], groups: &BTreeMap<ClassKey, Vec<usize>>) -> Result<()> {
    for (key, members) in groups {
        if key.periodic {
            continue;
        }
        let first = &generators[members[0]].path;
        let n = first.intervals();
        for &i in members {
            let p = &generators[i].path;
            if (&p.nodes[0] - &first.nodes[0]).amax() > 1e-12 || (&p.nodes[n] - &first.nodes[n]).amax() > 1e-12 {
                return Err(Error::Invalid("fixed-end generators in one class must share endpoints".into()));
            }
        }
        debug_assert!(matches!(first.class, LoopClass::Fixed));
    }
    Ok(())
}

/// `boundary[k-1] * boundary[k] = 0` in exact integer arithmetic.
pub fn check_boundary_square(c: &ClassComplex) -> Result<()> {
    for k in 2..c.boundary.len() {
        let sq = c.boundary[k - 1].checked_mul(&c.boundary[k])?;
        for r in 0..sq.rows {
            for col in 0..sq.cols {
                if sq.get(r, col) != 0 {
                    return Err(Error::BoundarySquare(format!(
                        "class {:?}: boundary squared maps generator {} to {} times generator {}",
                        c.key.class,
                        c.graded[k][col],
                        sq.get(r, col),
                        c.graded[k - 2][r]
                    )));
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassHomology {
    pub key: ClassKey,
    pub homology: Homology,
}

pub fn homology(data: &MorseComplexData) -> Result<Vec<ClassHomology>> {
    data.classes
        .iter()
        .map(|c| {
            let dims: Vec<usize> = c.graded.iter().map(Vec::len).collect();
            Ok(ClassHomology { key: c.key.clone(), homology: snf::homology(&dims, &c.boundary)? })
        })
        .collect()
}

/// The subcomplex spanned by generators of action `< a`.
pub fn filtered_subcomplex(data: &MorseComplexData, a: f64) -> MorseComplexData {
    let keep: Vec<bool> = data.generators.iter().map(|g| g.action < a).collect();
    let mut renumber = vec![usize::MAX; keep.len()];
    let mut generators = Vec::new();
    for (i, g) in data.generators.iter().enumerate() {
        if keep[i] {
            renumber[i] = generators.len();
            generators.push(g.clone());
        }
    }
    let mut classes = Vec::new();
    for c in &data.classes {
        let kept: Vec<Vec<usize>> = c.graded.iter().map(|g| g.iter().copied().filter(|&i| keep[i]).collect()).collect();
        let top = match kept.iter().rposition(|g| !g.is_empty()) {
            Some(t) => t,
            None => continue,
        };
        let pos = |k: usize, i: usize| c.graded[k].iter().position(|&j| j == i).unwrap();
        let mut boundary = vec![IntMatrix::zeros(0, kept[0].len())];
        for k in 1..=top {
            let mut b = IntMatrix::zeros(kept[k - 1].len(), kept[k].len());
            for (col, &x) in kept[k].iter().enumerate() {
                for (row, &y) in kept[k - 1].iter().enumerate() {
                    b.set(row, col, c.boundary[k].get(pos(k - 1, y), pos(k, x)));
                }
            }
            boundary.push(b);
        }
        let graded = kept[..=top].iter().map(|g| g.iter().map(|&i| renumber[i]).collect()).collect();
        classes.push(ClassComplex { key: c.key.clone(), graded, boundary });
    }
    let lines = data
        .lines
        .iter()
        .filter(|f| keep[f.source] && keep[f.target])
        .map(|f| FlowLine { source: renumber[f.source], target: renumber[f.target], ..f.clone() })
        .collect();
    MorseComplexData {
        generators,
        classes,
        lines,
        warnings: data.warnings.clone(),
        metadata: data.metadata.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ScalarField, TrigTerm};
    use crate::lagrangian::PhysicalLagrangian;
    use crate::orbits::{find_bvp_solutions, find_periodic_orbits, SearchConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cosines(n: usize, coeffs: &[f64]) -> PhysicalLagrangian {
        let terms = coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let mut kq = vec![0; n];
                kq[i] = 1;
                TrigTerm { coeff: -c, kt: 0, kq, sine: false }
            })
            .collect();
        PhysicalLagrangian::new(Manifold::flat_torus(n).unwrap(), ScalarField::Trig(terms))
    }

    fn search() -> SearchConfig {
        SearchConfig { resolution: 32, random_seeds: 4, ..Default::default() }
    }

    fn pendulum_generators() -> (PhysicalLagrangian, Vec<CriticalPoint>) {
        let l = cosines(1, &[0.25]);
        let s = find_periodic_orbits(&l, &[0], &search()).unwrap();
        assert_eq!(s.generators.len(), 2);
        (l, s.generators)
    }

    #[test]
    fn gradient_of_a_constant_loop_is_the_force() {
        let l = cosines(1, &[0.25]);
        let c = 0.13;
        let path = DiscreteLoop::periodic(vec![DVector::from_element(1, c); 32], DVector::zeros(1)).unwrap();
        let g = w12_gradient(&l, &path, &FlowMetric::STANDARD).unwrap();
        // E(c) = -V(c) = 0.25 cos(2 pi c), so dE/dc = -0.5 pi sin(2 pi c).
        let expected = -0.5 * PI * (2.0 * PI * c).sin();
        assert!(g.iter().all(|x| (x - expected).abs() < 1e-12));
    }

    #[test]
    fn gradient_vanishes_at_generators() {
        let (l, gens) = pendulum_generators();
        for g in &gens {
            let v = w12_gradient(&l, &g.path, &FlowMetric::STANDARD).unwrap();
            let p = preconditioner(&g.path, &FlowMetric::STANDARD);
            assert!(v.dot(&(&p * &v)).sqrt() < 1e-9);
        }
    }

    #[test]
    fn small_gradient_steps_decrease_the_action() {
        let l = cosines(2, &[0.25, 0.16]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let shift = DVector::from_vec(vec![rng.gen_range(-1..=1) as f64, rng.gen_range(-1..=1) as f64]);
            let nodes = (0..16).map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0))).collect();
            let path = DiscreteLoop::periodic(nodes, shift).unwrap();
            let g = w12_gradient(&l, &path, &FlowMetric::STANDARD).unwrap();
            let stepped = path.with_free(&(path.free_vector() - &g * 1e-4));
            assert!(stepped.action(&l).unwrap() < path.action(&l).unwrap());
        }
    }

    #[test]
    fn flows_near_generators() {
        let (l, gens) = pendulum_generators();
        let cfg = FlowConfig::default();
        let flow = ClassFlow::new(&l, &gens, &[0, 1], &cfg).unwrap();
        // A stable perturbation of the minimum returns to it.
        let (_, vecs) = flow.generalized_eigen(&gens[0].path).unwrap();
        let start = gens[0].path.with_free(&(gens[0].path.free_vector() + &vecs[3] * 1e-3));
        let out = flow_to_limit(&l, &gens, &start, &cfg).unwrap();
        assert_eq!(out.limit, Limit::Generator { index: 0, shift: vec![0] });
        // The unstable direction of the maximum leads to the minimum.
        let u = flow.unstable_basis(&gens[1]).unwrap();
        let start = gens[1].path.with_free(&(gens[1].path.free_vector() + &u[0] * 1e-3));
        let out = flow_to_limit(&l, &gens, &start, &cfg).unwrap();
        assert!(matches!(out.limit, Limit::Generator { index: 0, .. }));
        assert!(out.energies.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn pendulum_complex_is_a_circle() {
        let (l, gens) = pendulum_generators();
        let data = assemble_complex(&l, gens, &FlowConfig::default()).unwrap();
        assert_eq!(data.classes.len(), 1);
        assert_eq!(data.classes[0].boundary[1], IntMatrix::from_rows(&[vec![0]]));
        let mut signs: Vec<i32> = data.lines.iter().map(|f| f.sign).collect();
        signs.sort();
        assert_eq!(signs, vec![-1, 1]);
        for f in &data.lines {
            assert!(f.strictly_decreasing());
            assert!(f.energy_identity_defect() < 1e-4);
            assert!((f.energy_drop - 0.5).abs() < 1e-12);
            assert_eq!(f.trajectory[0], data.generators[f.source].path);
            let end = f.trajectory.last().unwrap();
            assert!(crate::orbits::loop_distance(&l.manifold, end, &data.generators[f.target].path, false) < 1e-12);
        }
        let (n, lines) = count_connecting_orbits(&l, &data.generators, 1, 0, &FlowConfig::default()).unwrap();
        assert_eq!((n, lines.len()), (0, 2));
        let h = homology(&data).unwrap();
        assert_eq!(h[0].homology.betti, vec![1, 1]);
        // Below the saddle value only the minimum survives.
        let sub = filtered_subcomplex(&data, 0.0);
        assert_eq!(homology(&sub).unwrap()[0].homology.betti, vec![1]);
        assert!(filtered_subcomplex(&data, -1.0).classes.is_empty());
        assert_eq!(homology(&filtered_subcomplex(&data, 1.0)).unwrap()[0].homology.betti, vec![1, 1]);
        assert!(data.warnings.is_empty());
    }

    #[test]
    fn torus_complex() {
        let l = cosines(2, &[0.25, 0.16]);
        let s = find_periodic_orbits(&l, &[0, 0], &SearchConfig { grid_per_dim: 4, ..search() }).unwrap();
        let mut idx: Vec<usize> = s.generators.iter().map(|g| g.morse_index).collect();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 1, 2]);
        let data = assemble_complex(&l, s.generators, &FlowConfig::default()).unwrap();
        let c = &data.classes[0];
        assert!(c.boundary.iter().all(IntMatrix::is_zero));
        assert_eq!((c.boundary[2].rows, c.boundary[2].cols), (2, 1));
        assert_eq!(homology(&data).unwrap()[0].homology.betti, vec![1, 2, 1]);
        // Four lines leave the maximum, two pass each saddle.
        let top = c.graded[2][0];
        assert_eq!(data.lines.iter().filter(|f| f.source == top).count(), 4);
        for f in &data.lines {
            assert!(f.strictly_decreasing());
            assert!(f.energy_identity_defect() < 1e-4);
            let end = f.trajectory.last().unwrap();
            assert!(crate::orbits::loop_distance(&l.manifold, end, &data.generators[f.target].path, false) < 1e-12);
        }
        assert!(data.warnings.is_empty(), "{:?}", data.warnings);
    }

    #[test]
    fn homology_does_not_depend_on_the_flow_metric() {
        let l = cosines(2, &[0.25, 0.16]);
        let s = find_periodic_orbits(&l, &[0, 0], &SearchConfig { grid_per_dim: 4, ..search() }).unwrap();
        let cfg = FlowConfig { metric: FlowMetric::perturbed(0.1), ..Default::default() };
        let data = assemble_complex(&l, s.generators, &cfg).unwrap();
        assert_eq!(homology(&data).unwrap()[0].homology.betti, vec![1, 2, 1]);
    }

    #[test]
    fn path_classes_on_the_circle_are_points() {
        let l = PhysicalLagrangian::new(Manifold::flat_torus(1).unwrap(), ScalarField::zero());
        let mut gens = Vec::new();
        for k in -2..=2 {
            let s = find_bvp_solutions(&l, &DVector::zeros(1), &DVector::from_element(1, 0.5 + k as f64), &search()).unwrap();
            gens.extend(s.generators);
        }
        let data = assemble_complex(&l, gens, &FlowConfig::default()).unwrap();
        assert_eq!(data.classes.len(), 5);
        for h in homology(&data).unwrap() {
            assert_eq!(h.homology.betti, vec![1]);
        }
    }

    #[test]
    fn nonzero_boundary_square_is_reported() {
        let c = ClassComplex {
            key: ClassKey { periodic: true, class: vec![0] },
            graded: vec![vec![0], vec![1], vec![2]],
            boundary: vec![IntMatrix::zeros(0, 1), IntMatrix::from_rows(&[vec![1]]), IntMatrix::from_rows(&[vec![2]])],
        };
        assert!(matches!(check_boundary_square(&c), Err(Error::BoundarySquare(_))));
    }

    #[test]
    fn perturbed_metric_is_positive_definite() {
        let path = DiscreteLoop::fixed((0..=32).map(|i| DVector::from_element(2, i as f64 / 32.0)).collect()).unwrap();
        let p = preconditioner(&path, &FlowMetric::perturbed(0.1));
        assert_eq!(p.nrows(), 31 * 2);
        assert!(p.cholesky().is_some());
    }
}
