//! Broken-curve discretization of loops and paths, the discrete Lagrangian
//! and Hamiltonian actions, and their first and second variations.
//!
//! A discrete loop has nodes `q_0, ..., q_N` at `t_i = i/N`. Periodic loops
//! satisfy `q_N = q_0 + shift` for a chart lattice vector; fixed-endpoint
//! paths pin `q_0` and `q_N`. On each interval the curve has velocity
//! `v_i = (q_{i+1} - q_i) N`, and the action is the midpoint sum
//! `E = sum_i h L(t_i + h/2, (q_i + q_{i+1})/2, v_i)`.
//!
//! Phase loops carry one momentum per interval (staggered momenta). With
//! `A = sum_i [p_i . (q_{i+1} - q_i) - h H(t_i + h/2, m_i, p_i)]` the gap
//! `E - A` is a sum of Fenchel gaps, hence nonnegative term by term, and
//! vanishes exactly on the Legendre lift.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::lagrangian::{Lagrangian, LagrangianJet};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum LoopClass {
    /// `q_N = q_0 + shift`.
    Periodic { shift: DVector<f64> },
    /// Both endpoints pinned.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLoop {
    pub nodes: Vec<DVector<f64>>,
    pub class: LoopClass,
}

/// Hessian blocks of one interval term with respect to its two end nodes
/// `a = q_i` and `b = q_{i+1}`.
struct IntervalBlocks {
    aa: DMatrix<f64>,
    ab: DMatrix<f64>,
    bb: DMatrix<f64>,
}

fn interval_blocks(j: &LagrangianJet, h: f64) -> IntervalBlocks {
    let sym = &j.dqv + j.dqv.transpose();
    let skew = &j.dqv - j.dqv.transpose();
    let quarter = &j.dqq * (0.25 * h);
    let vv = &j.dvv / h;
    IntervalBlocks {
        aa: &quarter - &sym * 0.5 + &vv,
        bb: &quarter + &sym * 0.5 + &vv,
        ab: &quarter + &skew * 0.5 - &vv,
    }
}

impl DiscreteLoop {
    /// Periodic loop from `N` nodes `q_0..q_{N-1}`.
    pub fn periodic(mut nodes: Vec<DVector<f64>>, shift: DVector<f64>) -> Result<Self> {
        check_count(nodes.len())?;
        nodes.push(&nodes[0] + &shift);
        Ok(DiscreteLoop { nodes, class: LoopClass::Periodic { shift } })
    }

    /// Fixed-endpoint path from all `N + 1` nodes.
    pub fn fixed(nodes: Vec<DVector<f64>>) -> Result<Self> {
        check_count(nodes.len().saturating_sub(1))?;
        Ok(DiscreteLoop { nodes, class: LoopClass::Fixed })
    }

    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn step(&self) -> f64 {
        1.0 / self.intervals() as f64
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.class, LoopClass::Periodic { .. })
    }

    /// Position of node `i` in the free-coordinate vector, if it is free.
    fn free_slot(&self, i: usize) -> Option<usize> {
        let n = self.intervals();
        match self.class {
            LoopClass::Periodic { .. } => Some(i % n),
            LoopClass::Fixed => (i > 0 && i < n).then(|| i - 1),
        }
    }

    pub fn free_nodes(&self) -> usize {
        match self.class {
            LoopClass::Periodic { .. } => self.intervals(),
            LoopClass::Fixed => self.intervals() - 1,
        }
    }

    pub fn free_len(&self) -> usize {
        self.free_nodes() * self.dim()
    }

    pub fn free_vector(&self) -> DVector<f64> {
        let d = self.dim();
        let offset = usize::from(!self.is_periodic());
        DVector::from_fn(self.free_len(), |r, _| self.nodes[r / d + offset][r % d])
    }

    pub fn with_free(&self, x: &DVector<f64>) -> DiscreteLoop {
        let d = self.dim();
        let mut out = self.clone();
        let offset = usize::from(!self.is_periodic());
        for s in 0..self.free_nodes() {
            out.nodes[s + offset].copy_from(&x.rows(s * d, d));
        }
        if let LoopClass::Periodic { shift } = &self.class {
            let n = self.intervals();
            out.nodes[n] = &out.nodes[0] + shift;
        }
        out
    }

    pub fn midpoint(&self, i: usize) -> DVector<f64> {
        (&self.nodes[i] + &self.nodes[i + 1]) * 0.5
    }

    pub fn velocity(&self, i: usize) -> DVector<f64> {
        (&self.nodes[i + 1] - &self.nodes[i]) * self.intervals() as f64
    }

    pub fn mid_time(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.step()
    }

    fn interval_jet<L: Lagrangian + ?Sized>(&self, l: &L, i: usize) -> Result<LagrangianJet> {
        l.jet(self.mid_time(i), &self.midpoint(i), &self.velocity(i))
    }

    /// Discrete Lagrangian action.
    pub fn action<L: Lagrangian + ?Sized>(&self, l: &L) -> Result<f64> {
        let h = self.step();
        let mut e = 0.0;
        for i in 0..self.intervals() {
            e += h * l.value(self.mid_time(i), &self.midpoint(i), &self.velocity(i))?;
        }
        Ok(e)
    }

    /// Gradient of the discrete action with respect to the free coordinates.
    pub fn gradient<L: Lagrangian + ?Sized>(&self, l: &L) -> Result<DVector<f64>> {
        let d = self.dim();
        let h = self.step();
        let mut g = DVector::zeros(self.free_len());
        for i in 0..self.intervals() {
            let j = self.interval_jet(l, i)?;
            let ga = &j.dq * (0.5 * h) - &j.dv;
            let gb = &j.dq * (0.5 * h) + &j.dv;
            if let Some(s) = self.free_slot(i) {
                let mut r = g.rows_mut(s * d, d);
                r += ga;
            }
            if let Some(s) = self.free_slot(i + 1) {
                let mut r = g.rows_mut(s * d, d);
                r += gb;
            }
        }
        Ok(g)
    }

    /// Discrete Euler-Lagrange residual, scaled to be consistent with the
    /// continuum equation: `|grad E| / h` in the max norm.
    pub fn residual<L: Lagrangian + ?Sized>(&self, l: &L) -> Result<f64> {
        Ok(self.gradient(l)?.amax() / self.step())
    }

    /// Hessian of the discrete action in the free coordinates.
    pub fn hessian<L: Lagrangian + ?Sized>(&self, l: &L) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let h = self.step();
        let m = self.free_len();
        let mut hess = DMatrix::zeros(m, m);
        for i in 0..self.intervals() {
            let b = interval_blocks(&self.interval_jet(l, i)?, h);
            let (sa, sb) = (self.free_slot(i), self.free_slot(i + 1));
            let mut add = |r: Option<usize>, c: Option<usize>, blk: &DMatrix<f64>| {
                if let (Some(r), Some(c)) = (r, c) {
                    let mut view = hess.view_mut((r * d, c * d), (d, d));
                    view += blk;
                }
            };
            add(sa, sa, &b.aa);
            add(sb, sb, &b.bb);
            add(sa, sb, &b.ab);
            add(sb, sa, &b.ab.transpose());
        }
        Ok((&hess + hess.transpose()) * 0.5)
    }

    /// The loop at twice the resolution, new nodes at interval midpoints.
    pub fn refine(&self) -> DiscreteLoop {
        let n = self.intervals();
        let mut nodes = Vec::with_capacity(2 * n + 1);
        for i in 0..n {
            nodes.push(self.nodes[i].clone());
            nodes.push(self.midpoint(i));
        }
        nodes.push(self.nodes[n].clone());
        DiscreteLoop { nodes, class: self.class.clone() }
    }

    /// Legendre lift: one momentum `p_i = d_v L` per interval.
    pub fn lift<L: Lagrangian + ?Sized>(&self, l: &L) -> Result<PhaseLoop> {
        let p = (0..self.intervals())
            .map(|i| Ok(self.interval_jet(l, i)?.dv))
            .collect::<Result<Vec<_>>>()?;
        Ok(PhaseLoop { q: self.clone(), p })
    }

    /// Momentum at `t = 0` for the solution through a discrete critical
    /// point: the discrete Legendre transform at the left end of the first
    /// interval, `p_0 = d_v L - (h/2) d_q L`.
    pub fn initial_momentum<L: Lagrangian + ?Sized>(&self, l: &L) -> Result<DVector<f64>> {
        let j = self.interval_jet(l, 0)?;
        Ok(&j.dv - &j.dq * (0.5 * self.step()))
    }
}

fn check_count(n: usize) -> Result<()> {
    if n < 16 || !n.is_power_of_two() {
        return Err(Error::Invalid(format!("loop resolution {n} must be a power of two >= 16")));
    }
    Ok(())
}

/// A discrete loop in phase space: configuration nodes and one momentum per
/// interval.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseLoop {
    pub q: DiscreteLoop,
    pub p: Vec<DVector<f64>>,
}

impl PhaseLoop {
    /// Discrete Hamiltonian action `sum p . dq - h H`.
    pub fn action<L: Lagrangian + ?Sized>(&self, l: &L) -> Result<f64> {
        let h = self.q.step();
        let mut a = 0.0;
        for (i, p) in self.p.iter().enumerate() {
            let dq = &self.q.nodes[i + 1] - &self.q.nodes[i];
            a += p.dot(&dq) - h * l.hamiltonian(self.q.mid_time(i), &self.q.midpoint(i), p)?.h;
        }
        Ok(a)
    }

    /// `E(q) - A(x)`.
    pub fn duality_gap<L: Lagrangian + ?Sized>(&self, l: &L) -> Result<f64> {
        let h = self.q.step();
        let mut gap = 0.0;
        for (i, p) in self.p.iter().enumerate() {
            let (t, m, v) = (self.q.mid_time(i), self.q.midpoint(i), self.q.velocity(i));
            let lv = l.value(t, &m, &v)?;
            let hp = l.hamiltonian(t, &m, p)?.h;
            gap += h * (lv + hp - p.dot(&v));
        }
        Ok(gap)
    }

    /// Largest violation of the discrete Hamilton equations
    /// `(q_{i+1} - q_i)/h = H_p(t_m, m_i, p_i)` and the momentum balance at
    /// interior nodes `(p_i - p_{i-1})/h = -(H_q(i-1) + H_q(i))/2`.
    pub fn hamilton_residual<L: Lagrangian + ?Sized>(&self, l: &L) -> Result<f64> {
        let n = self.q.intervals();
        let h = self.q.step();
        let jets = (0..n)
            .map(|i| l.hamiltonian(self.q.mid_time(i), &self.q.midpoint(i), &self.p[i]))
            .collect::<Result<Vec<_>>>()?;
        let mut r = 0.0f64;
        for i in 0..n {
            r = r.max((self.q.velocity(i) - &jets[i].dp).amax());
        }
        let balance = |a: usize, b: usize| ((&self.p[b] - &self.p[a]) / h + (&jets[a].dq + &jets[b].dq) * 0.5).amax();
        for i in 1..n {
            r = r.max(balance(i - 1, i));
        }
        if self.q.is_periodic() {
            r = r.max(balance(n - 1, 0));
        }
        Ok(r)
    }
}

/// Displacement of a phase loop: one vector per node (compatible with the
/// boundary class) and one per momentum.
#[derive(Debug, Clone)]
pub struct PhaseVariation {
    pub dq: Vec<DVector<f64>>,
    pub dp: Vec<DVector<f64>>,
}

impl PhaseVariation {
    /// Random trigonometric variation with `modes` harmonics of decaying
    /// amplitude: Fourier modes for periodic loops, sine modes (vanishing at
    /// the ends) for fixed-end paths.
    pub fn random_trig<R: Rng>(path: &DiscreteLoop, rng: &mut R, modes: usize, amplitude: f64) -> Self {
        let n = path.intervals();
        let d = path.dim();
        let h = path.step();
        let mut coeffs = |count: usize| -> Vec<DVector<f64>> {
            (0..count).map(|_| DVector::from_fn(d, |_, _| rng.gen_range(-amplitude..amplitude))).collect()
        };
        let (qa, qb, pa, pb) = (coeffs(modes + 1), coeffs(modes + 1), coeffs(modes + 1), coeffs(modes + 1));
        let series = |t: f64, a: &[DVector<f64>], b: &[DVector<f64>], periodic: bool| -> DVector<f64> {
            let mut v = if periodic { a[0].clone() } else { DVector::zeros(d) };
            for k in 1..=modes {
                let w = k as f64;
                if periodic {
                    v += &a[k] * ((2.0 * PI * w * t).cos() / w) + &b[k] * ((2.0 * PI * w * t).sin() / w);
                } else {
                    v += &a[k] * ((PI * w * t).sin() / w);
                }
            }
            v
        };
        let periodic = path.is_periodic();
        let mut dq: Vec<DVector<f64>> = (0..n).map(|i| series(i as f64 * h, &qa, &qb, periodic)).collect();
        if periodic {
            dq.push(dq[0].clone());
        } else {
            dq[0].fill(0.0);
            dq.push(DVector::zeros(d));
        }
        let dp = (0..n).map(|i| series((i as f64 + 0.5) * h, &pa, &pb, true)).collect();
        PhaseVariation { dq, dp }
    }
}

impl PhaseLoop {
    /// `self + eps * v`.
    pub fn displaced(&self, v: &PhaseVariation, eps: f64) -> PhaseLoop {
        PhaseLoop {
            q: DiscreteLoop {
                nodes: self.q.nodes.iter().zip(&v.dq).map(|(q, d)| q + d * eps).collect(),
                class: self.q.class.clone(),
            },
            p: self.p.iter().zip(&v.dp).map(|(p, d)| p + d * eps).collect(),
        }
    }

    /// Central second differences `(d^2 A[z, z], d^2 E[z_q, z_q])` along the
    /// variation `z`, with step `eps`.
    pub fn second_variations<L: Lagrangian + ?Sized>(&self, l: &L, v: &PhaseVariation, eps: f64) -> Result<(f64, f64)> {
        let n = self.q.intervals();
        if v.dq.len() != n + 1 || v.dp.len() != n {
            return Err(Error::Invalid("variation does not match the loop resolution".into()));
        }
        let compatible = match self.q.class {
            LoopClass::Periodic { .. } => (&v.dq[n] - &v.dq[0]).amax() == 0.0,
            LoopClass::Fixed => v.dq[0].amax() == 0.0 && v.dq[n].amax() == 0.0,
        };
        if !compatible {
            return Err(Error::Invalid("variation violates the boundary class".into()));
        }
        let (plus, minus) = (self.displaced(v, eps), self.displaced(v, -eps));
        let d2 = |f: &dyn Fn(&PhaseLoop) -> Result<f64>| -> Result<f64> {
            Ok((f(&plus)? - 2.0 * f(self)? + f(&minus)?) / (eps * eps))
        };
        Ok((d2(&|x: &PhaseLoop| x.action(l))?, d2(&|x: &PhaseLoop| x.q.action(l))?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ScalarField, TrigTerm};
    use crate::lagrangian::PhysicalLagrangian;
    use crate::manifold::Manifold;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn pendulum() -> PhysicalLagrangian {
        PhysicalLagrangian::new(
            Manifold::flat_torus(1).unwrap(),
            ScalarField::Trig(vec![TrigTerm { coeff: -0.25, kt: 0, kq: vec![1], sine: false }]),
        )
    }

    fn forced2() -> PhysicalLagrangian {
        let t = |c: f64, kt: i32, kq: &[i32], sine: bool| TrigTerm { coeff: c, kt, kq: kq.to_vec(), sine };
        PhysicalLagrangian {
            manifold: Manifold::flat_torus(2).unwrap(),
            t: None,
            a: Some(vec![
                ScalarField::Trig(vec![t(0.2, 1, &[0, 1], false)]),
                ScalarField::Trig(vec![t(-0.3, 0, &[1, 0], true)]),
            ]),
            v: ScalarField::Trig(vec![t(0.3, 1, &[1, 1], true), t(-0.1, 0, &[1, 0], false)]),
        }
    }

    fn random_loop(rng: &mut ChaCha8Rng, n: usize, dim: usize, periodic: bool) -> DiscreteLoop {
        let c: Vec<f64> = (0..4 * dim).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let f = |t: f64, k: usize| {
            let w = 2.0 * PI * t;
            0.3 + c[4 * k] * w.sin() + c[4 * k + 1] * (w.cos() - 1.0) + c[4 * k + 2] * (2.0 * w).sin() + c[4 * k + 3] * t
        };
        if periodic {
            let nodes = (0..n).map(|i| DVector::from_fn(dim, |k, _| f(i as f64 / n as f64, k) - c[4 * k + 3] * i as f64 / n as f64)).collect();
            DiscreteLoop::periodic(nodes, DVector::from_fn(dim, |k, _| k as f64)).unwrap()
        } else {
            let nodes = (0..=n).map(|i| DVector::from_fn(dim, |k, _| f(i as f64 / n as f64, k))).collect();
            DiscreteLoop::fixed(nodes).unwrap()
        }
    }

    #[test]
    fn rejects_bad_resolutions() {
        assert!(DiscreteLoop::periodic(vec![dv(&[0.0]); 12], dv(&[0.0])).is_err());
        assert!(DiscreteLoop::fixed(vec![dv(&[0.0]); 17]).is_ok());
    }

    #[test]
    fn action_of_simple_loops() {
        let l = pendulum();
        let c = DiscreteLoop::periodic(vec![dv(&[0.1]); 16], dv(&[0.0])).unwrap();
        assert!((c.action(&l).unwrap() - 0.25 * (2.0 * PI * 0.1).cos()).abs() < 1e-15);
        let free = PhysicalLagrangian::new(Manifold::flat_torus(1).unwrap(), ScalarField::zero());
        let nodes = (0..32).map(|i| dv(&[i as f64 / 32.0])).collect();
        let rot = DiscreteLoop::periodic(nodes, dv(&[1.0])).unwrap();
        assert!((rot.action(&free).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn action_converges_at_second_order() {
        let l = forced2();
        let curve = |n: usize| {
            let nodes = (0..n)
                .map(|i| {
                    let t = i as f64 / n as f64;
                    dv(&[t + 0.1 * (2.0 * PI * t).sin(), 0.4 + 0.2 * (2.0 * PI * t).cos()])
                })
                .collect();
            DiscreteLoop::periodic(nodes, dv(&[1.0, 0.0])).unwrap()
        };
        let e: Vec<f64> = [32, 64, 128, 256].iter().map(|&n| curve(n).action(&l).unwrap()).collect();
        let ratio = (e[1] - e[0]) / (e[2] - e[1]);
        assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
        assert!((e[3] - e[2]).abs() < 1.1 * (e[1] - e[0]).abs() / 16.0);
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let l = forced2();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for periodic in [true, false] {
            let c = random_loop(&mut rng, 16, 2, periodic);
            let x = c.free_vector();
            let g = c.gradient(&l).unwrap();
            let hs = c.hessian(&l).unwrap();
            let eps = 1e-6;
            for k in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += eps;
                xm[k] -= eps;
                let (cp, cm) = (c.with_free(&xp), c.with_free(&xm));
                let fd = (cp.action(&l).unwrap() - cm.action(&l).unwrap()) / (2.0 * eps);
                assert!((fd - g[k]).abs() < 1e-7, "{fd} {}", g[k]);
                let fdg = (cp.gradient(&l).unwrap() - cm.gradient(&l).unwrap()) / (2.0 * eps);
                assert!((fdg - hs.column(k)).amax() < 1e-5);
            }
        }
    }

    #[test]
    fn constant_loop_hessian_has_the_fourier_symbol() {
        // At a constant loop of L = v^2/2 - V the discrete second variation is
        // h(2 - 2cos(2 pi k h))/h^2 - h V'' on the k-th Fourier mode
        // (to second order in the midpoint averaging of V'').
        let l = pendulum();
        let n = 64;
        for q0 in [0.0, 0.5] {
            let c = DiscreteLoop::periodic(vec![dv(&[q0]); n], dv(&[0.0])).unwrap();
            let mut ev: Vec<f64> = c.hessian(&l).unwrap().symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let vpp = if q0 == 0.0 { PI * PI } else { -PI * PI };
            let h = 1.0 / n as f64;
            let mut expected: Vec<f64> = (0..n)
                .map(|k| {
                    let s = (PI * k as f64 * h).sin();
                    let c2 = (PI * k as f64 * h).cos().powi(2);
                    4.0 * s * s / h - h * vpp * c2
                })
                .collect();
            expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (a, b) in ev.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-10, "{a} {b}");
            }
            let negatives = ev.iter().filter(|&&x| x < 0.0).count();
            assert_eq!(negatives, if q0 == 0.0 { 1 } else { 0 });
        }
    }

    #[test]
    fn duality_gap_vanishes_on_lifts_and_is_nonnegative() {
        let l = forced2();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let c = random_loop(&mut rng, 32, 2, true);
            let x = c.lift(&l).unwrap();
            let gap = x.duality_gap(&l).unwrap();
            assert!(gap.abs() < 1e-12);
            assert!((c.action(&l).unwrap() - x.action(&l).unwrap()).abs() < 1e-12);
            let mut y = x.clone();
            for p in y.p.iter_mut() {
                *p += DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            }
            assert!(y.duality_gap(&l).unwrap() > 0.0);
        }
    }

    #[test]
    fn gap_for_constant_momentum_on_a_constant_loop() {
        let free = PhysicalLagrangian::new(Manifold::flat_torus(1).unwrap(), ScalarField::zero());
        let q = DiscreteLoop::periodic(vec![dv(&[0.0]); 16], dv(&[0.0])).unwrap();
        let x = PhaseLoop { q, p: vec![dv(&[1.5]); 16] };
        assert!((x.action(&free).unwrap() + 0.5 * 1.5 * 1.5).abs() < 1e-14);
        assert!((x.duality_gap(&free).unwrap() - 0.5 * 1.5 * 1.5).abs() < 1e-14);
    }

    #[test]
    fn hamiltonian_action_of_harmonic_loop_matches_closed_form() {
        // q = a sin(2 pi t), p = b cos(2 pi t), H = p^2/2 + c q on R.
        // A = int p q' - H = pi a b - b^2/4.
        let (a, b, c) = (0.3, 0.7, 0.2);
        let l = PhysicalLagrangian::new(
            Manifold::flat_torus(1).unwrap(),
            ScalarField::Trig(vec![TrigTerm { coeff: c / (2.0 * PI), kt: 0, kq: vec![1], sine: true }]),
        );
        // Near q = 0 the potential c sin(2 pi q)/(2 pi) is c q to third order;
        // compare against the exact integral of that potential instead.
        let n = 16384;
        let nodes = (0..n).map(|i| dv(&[a * (2.0 * PI * i as f64 / n as f64).sin()])).collect();
        let q = DiscreteLoop::periodic(nodes, dv(&[0.0])).unwrap();
        let p = (0..n).map(|i| dv(&[b * (2.0 * PI * q.mid_time(i)).cos()])).collect();
        let x = PhaseLoop { q, p };
        // int_0^1 c sin(2 pi a sin(2 pi t)) / (2 pi) dt = 0 by oddness.
        let exact = PI * a * b - b * b / 4.0;
        assert!((x.action(&l).unwrap() - exact).abs() < 1e-8);
    }

    #[test]
    fn lift_satisfies_discrete_hamilton_equations_at_critical_points() {
        // The constant loop at a potential extremum is critical.
        let l = pendulum();
        let c = DiscreteLoop::periodic(vec![dv(&[0.5]); 16], dv(&[0.0])).unwrap();
        assert!(c.residual(&l).unwrap() < 1e-14);
        let x = c.lift(&l).unwrap();
        assert!(x.hamilton_residual(&l).unwrap() < 1e-14);
        let p0 = c.initial_momentum(&l).unwrap();
        assert!(p0[0].abs() < 1e-15);
    }

    #[test]
    fn refinement_keeps_the_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_loop(&mut rng, 16, 2, true);
        let r = c.refine();
        assert_eq!(r.intervals(), 32);
        assert_eq!(r.nodes[32], &r.nodes[0] + dv(&[0.0, 1.0]));
    }

    #[test]
    fn second_variation_inequality_at_critical_pairs() {
        let pendulum = PhysicalLagrangian::new(
            Manifold::flat_torus(1).unwrap(),
            ScalarField::Trig(vec![TrigTerm { coeff: -0.25, kt: 0, kq: vec![1], sine: false }]),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let zero = DVector::zeros(1);
        let crit = [
            DiscreteLoop::periodic(vec![zero.clone(); 32], zero.clone()).unwrap(),
            DiscreteLoop::periodic(vec![DVector::from_element(1, 0.5); 32], zero.clone()).unwrap(),
            DiscreteLoop::fixed((0..=32).map(|_| DVector::from_element(1, 0.5)).collect()).unwrap(),
        ];
        for q in &crit {
            assert!(q.residual(&pendulum).unwrap() < 1e-12);
            let x = q.lift(&pendulum).unwrap();
            for _ in 0..100 {
                let v = PhaseVariation::random_trig(q, &mut rng, 4, 0.5);
                let (a, e) = x.second_variations(&pendulum, &v, 1e-4).unwrap();
                assert!(a <= e + 1e-6, "{a} > {e}");
            }
        }
        let bad = PhaseVariation { dq: vec![DVector::from_element(1, 1.0); 33], dp: vec![zero.clone(); 32] };
        assert!(crit[2].lift(&pendulum).unwrap().second_variations(&pendulum, &bad, 1e-4).is_err());
    }
}
