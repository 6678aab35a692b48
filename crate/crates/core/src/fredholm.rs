//! Truncated Cauchy-Riemann type operators `D = d/ds - J0 d/dt - S(s)` on the
//! cylinder, the strip and their halves, and their numerical Fredholm index.
//!
//! The discretization is Galerkin in `t` (Fourier modes on the circle; sines
//! for the first and cosines for the second component on `[0, 1]`, which
//! builds the `{0} x R^n` boundary condition into the basis) and a fourth
//! order Hermite scheme for the resulting system `c' = M(s) c` in `s`. The
//! truncated ends carry spectral conditions: at `+S0` the component in the
//! unstable eigenspace of `M(+inf)` vanishes, at `-S0` the component in the
//! stable eigenspace of `M(-inf)`. On half domains the `s = 0` edge carries
//! `u_1(0, t) = 0`.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::index::{conley_zehnder, relative_maslov, vertical, LagrangianPath, SymplecticPath};
use crate::linalg::{bipartite_components, j0, min_singular_value, orthonormalize_columns};
use crate::{Error, Result};

/// Smallest admissible distance of a limit path from degeneracy.
pub const LIMIT_MARGIN: f64 = 1e-6;
/// Samples of the limit paths handed to the index module.
const PATH_SAMPLES: usize = 513;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DomainKind {
    Cylinder,
    Strip,
    HalfCylinder,
    HalfStrip,
}

impl DomainKind {
    pub fn is_half(self) -> bool {
        matches!(self, DomainKind::HalfCylinder | DomainKind::HalfStrip)
    }

    pub fn is_strip(self) -> bool {
        matches!(self, DomainKind::Strip | DomainKind::HalfStrip)
    }
}

/// Coefficient families. All are independent of `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Coefficient {
    /// `theta * I`.
    Theta(f64),
    /// `alpha * [[0, I], [I, 0]]`.
    Q(f64),
    /// A constant symmetric `2n x 2n` matrix, row by row.
    Constant(Vec<Vec<f64>>),
    /// `S- + b(s) (S+ - S-)` with `b(s) = (1 + tanh s) / 2`.
    Interpolated { minus: Box<Coefficient>, plus: Box<Coefficient> },
}

impl Coefficient {
    fn constant_matrix(&self, n: usize) -> Result<DMatrix<f64>> {
        let m = 2 * n;
        match self {
            Coefficient::Theta(theta) => Ok(DMatrix::identity(m, m) * *theta),
            Coefficient::Q(alpha) => Ok(DMatrix::from_fn(m, m, |i, j| if i.abs_diff(j) == n { *alpha } else { 0.0 })),
            Coefficient::Constant(rows) => {
                if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                    return Err(Error::Invalid(format!("coefficient matrix must be {m}x{m}")));
                }
                let s = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
                if (&s - s.transpose()).amax() > 1e-12 {
                    return Err(Error::Invalid("coefficient matrix is not symmetric".into()));
                }
                Ok(s)
            }
            Coefficient::Interpolated { .. } => {
                Err(Error::Invalid("interpolation limits must themselves be s-independent".into()))
            }
        }
    }

    /// `S(s)` and `dS/ds`.
    pub fn at(&self, n: usize, s: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        match self {
            Coefficient::Interpolated { minus, plus } => {
                let a = minus.constant_matrix(n)?;
                let b = plus.constant_matrix(n)?;
                let th = s.tanh();
                let diff = &b - &a;
                Ok((&a + &diff * (0.5 * (1.0 + th)), diff * (0.5 * (1.0 - th * th))))
            }
            _ => {
                let c = self.constant_matrix(n)?;
                Ok((c, DMatrix::zeros(2 * n, 2 * n)))
            }
        }
    }

    /// `S(+inf)` or `S(-inf)`.
    pub fn limit(&self, n: usize, plus: bool) -> Result<DMatrix<f64>> {
        match self {
            Coefficient::Interpolated { minus, plus: p } => {
                if plus {
                    p.constant_matrix(n)
                } else {
                    minus.constant_matrix(n)
                }
            }
            _ => self.constant_matrix(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truncation {
    /// Fourier cutoff `|k| <= K` on the circle, sine/cosine count on the interval.
    pub modes: usize,
    pub s0: f64,
    pub step: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation { modes: 8, s0: 8.0, step: 1.0 / 16.0 }
    }
}

impl Truncation {
    /// Every parameter enlarged by the given factor (the step shrunk by it).
    pub fn refined(&self, factor: f64) -> Truncation {
        Truncation {
            modes: (self.modes as f64 * factor).ceil() as usize,
            s0: self.s0 * factor,
            step: self.step / factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedCROperator {
    pub kind: DomainKind,
    pub n: usize,
    pub coefficient: Coefficient,
    pub truncation: Truncation,
}

/// Distance of one asymptotic limit from degeneracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitMargin {
    pub plus: bool,
    pub margin: f64,
}

/// Sparse matrix as `(row, col, value)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    /// One `row col value` line per entry.
    pub fn to_triplets(&self) -> String {
        let mut s = String::new();
        for &(r, c, v) in &self.entries {
            s.push_str(&format!("{r} {c} {v:e}\n"));
        }
        s
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            a[(r, c)] += v;
        }
        a
    }
}

impl TruncatedCROperator {
    pub fn new(kind: DomainKind, n: usize, coefficient: Coefficient, truncation: Truncation) -> Self {
        TruncatedCROperator { kind, n, coefficient, truncation }
    }

    pub fn refined(&self, factor: f64) -> Self {
        TruncatedCROperator { truncation: self.truncation.refined(factor), ..self.clone() }
    }

    /// Number of `t`-coefficients per node.
    pub fn width(&self) -> usize {
        let k = self.truncation.modes;
        if self.kind.is_strip() {
            self.n * (2 * k + 1)
        } else {
            2 * self.n * (2 * k + 1)
        }
    }

    /// `s`-nodes of the truncated domain.
    pub fn nodes(&self) -> Result<Vec<f64>> {
        let Truncation { modes, s0, step } = self.truncation;
        if self.n == 0 || modes == 0 || !(step > 0.0) || !(s0 > 0.0) {
            return Err(Error::Invalid("need n >= 1, K >= 1, S0 > 0 and h > 0".into()));
        }
        let len = if self.kind.is_half() { s0 } else { 2.0 * s0 };
        let steps = (len / step).round();
        if (steps * step - len).abs() > 1e-9 * len {
            return Err(Error::Invalid(format!("step {step} does not divide the interval length {len}")));
        }
        let start = if self.kind.is_half() { 0.0 } else { -s0 };
        Ok((0..=steps as usize).map(|j| start + j as f64 * step).collect())
    }

    /// Offset of the coefficient block of phase component `c` (`q_i` for
    /// `c < n`, `p_i` otherwise).
    fn offset(&self, c: usize) -> usize {
        let (n, k) = (self.n, self.truncation.modes);
        if self.kind.is_strip() {
            if c < n {
                c * k
            } else {
                n * k + (c - n) * (k + 1)
            }
        } else {
            c * (2 * k + 1)
        }
    }

    /// Number of basis functions carried by phase component `c`.
    fn basis_len(&self, c: usize) -> usize {
        let k = self.truncation.modes;
        match (self.kind.is_strip(), c < self.n) {
            (true, true) => k,
            (true, false) => k + 1,
            (false, _) => 2 * k + 1,
        }
    }

    /// `<b_a, b'_b>` for the scalar basis of component `c` against that of `d`
    /// (the latter differentiated).
    fn derivative_pairing(&self, c: usize, a: usize, b: usize) -> f64 {
        if self.kind.is_strip() {
            // q carries sqrt2 sin(k pi t), k = a + 1; p carries 1, sqrt2 cos(k pi t).
            if c < self.n {
                // <psi_a, chi_b'> with chi_b' = -b pi psi_b
                if b == a + 1 {
                    -(b as f64) * PI
                } else {
                    0.0
                }
            } else {
                // <chi_a, psi_b'> with psi_b' = (b+1) pi chi_{b+1}
                if a == b + 1 {
                    a as f64 * PI
                } else {
                    0.0
                }
            }
        } else {
            // 1, sqrt2 cos(2 pi k t), sqrt2 sin(2 pi k t) at indices 0, 2k-1, 2k
            if a == 0 || b == 0 {
                return 0.0;
            }
            let (ka, kb) = (a.div_ceil(2), b.div_ceil(2));
            if ka != kb {
                return 0.0;
            }
            let w = 2.0 * PI * ka as f64;
            match (a % 2, b % 2) {
                (1, 0) => w,
                (0, 1) => -w,
                _ => 0.0,
            }
        }
    }

    /// `<b_a, b_b>` between the bases of components `c` and `d`.
    fn mass(&self, c: usize, d: usize, a: usize, b: usize) -> f64 {
        let n = self.n;
        if !self.kind.is_strip() || (c < n) == (d < n) {
            return if a == b { 1.0 } else { 0.0 };
        }
        // sine index k = a + 1 against cosine index l = b (or swapped)
        let (k, l) = if c < n { (a + 1, b) } else { (b + 1, a) };
        let prim = |m: i64| {
            if m == 0 || m % 2 == 0 {
                0.0
            } else {
                2.0 / (m as f64 * PI)
            }
        };
        let (k, l) = (k as i64, l as i64);
        if l == 0 {
            SQRT_2 * prim(k)
        } else {
            prim(k + l) + prim(k - l)
        }
    }

    /// Galerkin matrix of `J0 d/dt + S` on one node.
    fn galerkin(&self, s: &DMatrix<f64>, with_dt: bool) -> DMatrix<f64> {
        let n = self.n;
        let m = self.width();
        let mut g = DMatrix::zeros(m, m);
        for c in 0..2 * n {
            for d in 0..2 * n {
                let (oc, od) = (self.offset(c), self.offset(d));
                for a in 0..self.basis_len(c) {
                    for b in 0..self.basis_len(d) {
                        let mut v = 0.0;
                        if s[(c, d)] != 0.0 {
                            v += s[(c, d)] * self.mass(c, d, a, b);
                        }
                        // (J0 v)_q = v_p, (J0 v)_p = -v_q
                        if with_dt && c < n && d == c + n {
                            v += self.derivative_pairing(c, a, b);
                        }
                        if with_dt && c >= n && d + n == c {
                            v -= self.derivative_pairing(c, a, b);
                        }
                        g[(oc + a, od + b)] = v;
                    }
                }
            }
        }
        g
    }

    /// `gamma(t) = exp(t J0 S(+-inf))` for `t` in `[0, 1]`.
    pub fn limit_path(&self, plus: bool) -> Result<SymplecticPath> {
        let a = j0(self.n) * self.coefficient.limit(self.n, plus)?;
        SymplecticPath::from_fn(PATH_SAMPLES, |t| (&a * t).exp())
    }

    /// Margins of the limits that matter for this domain.
    pub fn limit_margins(&self) -> Result<Vec<LimitMargin>> {
        let ends: &[bool] = if self.kind.is_half() { &[true] } else { &[false, true] };
        let n = self.n;
        ends.iter()
            .map(|&plus| {
                let g1 = self.limit_path(plus)?.samples.last().unwrap().clone();
                let margin = if self.kind.is_strip() {
                    min_singular_value(&g1.view((0, n), (n, n)).into_owned())
                } else {
                    min_singular_value(&(g1 - DMatrix::identity(2 * n, 2 * n)))
                };
                Ok(LimitMargin { plus, margin })
            })
            .collect()
    }

    fn check_limits(&self) -> Result<()> {
        for lm in self.limit_margins()? {
            if lm.margin < LIMIT_MARGIN {
                let end = if lm.plus { "+inf" } else { "-inf" };
                return Err(Error::Degenerate(format!(
                    "limit path at {end} is degenerate (margin {:.3e} < {LIMIT_MARGIN:.0e})",
                    lm.margin
                )));
            }
        }
        Ok(())
    }

    /// Discretized operator. Columns are node-major coefficient vectors;
    /// the first rows are the interior scheme, followed by the `s = 0` or
    /// `-S0` conditions and then the `+S0` conditions.
    pub fn assemble(&self) -> Result<SparseMatrix> {
        self.check_limits()?;
        let nodes = self.nodes()?;
        let m = self.width();
        let h = self.truncation.step;
        let cols = nodes.len() * m;
        let mut entries = Vec::new();
        let eye = DMatrix::<f64>::identity(m, m);
        let node_mats = nodes
            .iter()
            .map(|&s| {
                let (sm, ds) = self.coefficient.at(self.n, s)?;
                let mm = self.galerkin(&sm, true);
                let nn = self.galerkin(&ds, false) + &mm * &mm;
                let hi = (&eye - &mm * (h / 2.0) + &nn * (h * h / 12.0)) / h;
                let lo = (&eye + &mm * (h / 2.0) + &nn * (h * h / 12.0)) / h;
                Ok((hi, lo))
            })
            .collect::<Result<Vec<_>>>()?;
        for j in 0..nodes.len() - 1 {
            let (hi, _) = &node_mats[j + 1];
            let (_, lo) = &node_mats[j];
            for r in 0..m {
                for c in 0..m {
                    if hi[(r, c)] != 0.0 {
                        entries.push((j * m + r, (j + 1) * m + c, hi[(r, c)]));
                    }
                    if lo[(r, c)] != 0.0 {
                        entries.push((j * m + r, j * m + c, -lo[(r, c)]));
                    }
                }
            }
        }
        let mut row = (nodes.len() - 1) * m;
        if self.kind.is_half() {
            for c in 0..self.n {
                for a in 0..self.basis_len(c) {
                    entries.push((row, self.offset(c) + a, 1.0 / h));
                    row += 1;
                }
            }
        } else {
            for v in self.spectral_rows(false)? {
                for (i, x) in v.iter().enumerate() {
                    if *x != 0.0 {
                        entries.push((row, i, x / h));
                    }
                }
                row += 1;
            }
        }
        let last = (nodes.len() - 1) * m;
        for v in self.spectral_rows(true)? {
            for (i, x) in v.iter().enumerate() {
                if *x != 0.0 {
                    entries.push((row, last + i, x / h));
                }
            }
            row += 1;
        }
        Ok(SparseMatrix { rows: row, cols, entries })
    }

    /// Eigenvectors of `M(+inf)` with positive eigenvalue, or of `M(-inf)`
    /// with negative eigenvalue. Computed per coupled block so vectors never
    /// mix decoupled modes.
    fn spectral_rows(&self, plus: bool) -> Result<Vec<Vec<f64>>> {
        let m = self.width();
        let mm = self.galerkin(&self.coefficient.limit(self.n, plus)?, true);
        let pattern: Vec<(usize, usize, f64)> = (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .filter(|&(i, j)| i == j || mm[(i, j)] != 0.0)
            .map(|(i, j)| (i, j, 1.0))
            .collect();
        let mut out = Vec::new();
        for (block, _) in bipartite_components(m, m, &pattern) {
            let b = DMatrix::from_fn(block.len(), block.len(), |i, j| mm[(block[i], block[j])]);
            let eig = SymmetricEigen::new(b);
            // Sorted so equivalent blocks produce their rows in the same order.
            let mut order: Vec<usize> = (0..block.len()).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
            for k in order {
                let lambda = eig.eigenvalues[k];
                if lambda.abs() < 1e-9 {
                    return Err(Error::Degenerate(format!("asymptotic operator has eigenvalue {lambda:.2e}")));
                }
                if (lambda > 0.0) == plus {
                    let mut v = vec![0.0; m];
                    for (i, &g) in block.iter().enumerate() {
                        v[g] = eig.eigenvectors[(i, k)];
                    }
                    out.push(v);
                }
            }
        }
        Ok(out)
    }
}

/// Numerical rank policy: singular values below `candidate * sigma_max` may
/// be declared zero; the cut goes at the largest ratio between consecutive
/// values, which must be at least `min_ratio`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapPolicy {
    pub candidate: f64,
    pub min_ratio: f64,
}

impl Default for GapPolicy {
    fn default() -> Self {
        GapPolicy { candidate: 1e-3, min_ratio: 1e3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumericIndex {
    pub rows: usize,
    pub cols: usize,
    pub dim_ker: usize,
    pub dim_coker: usize,
    pub index: i64,
    pub sigma_max: f64,
    /// Smallest singular value kept in the rank.
    pub sigma_kept: f64,
    /// Largest singular value declared zero, if any.
    pub sigma_dropped: Option<f64>,
    pub gap_ratio: f64,
    /// Orthonormal kernel basis, one column per kernel vector.
    #[serde(skip)]
    pub kernel: DMatrix<f64>,
}

struct Block {
    rows: Vec<usize>,
    cols: Vec<usize>,
    dense: DMatrix<f64>,
    sigma: Vec<f64>,
}

fn split_blocks(a: &SparseMatrix) -> Vec<Block> {
    let comps = bipartite_components(a.rows, a.cols, &a.entries);
    let mut where_row = vec![(0, 0); a.rows];
    for (b, (rows, _)) in comps.iter().enumerate() {
        for (i, &r) in rows.iter().enumerate() {
            where_row[r] = (b, i);
        }
    }
    let mut col_pos = vec![0; a.cols];
    for (_, cols) in &comps {
        for (i, &c) in cols.iter().enumerate() {
            col_pos[c] = i;
        }
    }
    let mut blocks: Vec<Block> = comps
        .into_iter()
        .map(|(rows, cols)| Block {
            dense: DMatrix::zeros(rows.len(), cols.len()),
            rows,
            cols,
            sigma: Vec::new(),
        })
        .collect();
    for &(r, c, v) in &a.entries {
        let (b, i) = where_row[r];
        blocks[b].dense[(i, col_pos[c])] += v;
    }
    // Blocks that agree up to row and column signs share singular values;
    // the cos/sin partners of every Fourier mode are such pairs.
    let mut seen: Vec<(DMatrix<f64>, Vec<f64>)> = Vec::new();
    for b in &mut blocks {
        if b.rows.is_empty() || b.cols.is_empty() {
            continue;
        }
        let canon = sign_canonical(&b.dense);
        let scale = canon.amax();
        let hit = seen.iter().find(|(c, _)| c.shape() == canon.shape() && (c - &canon).amax() <= 1e-13 * scale);
        b.sigma = match hit {
            Some((_, sigma)) => sigma.clone(),
            None => {
                let sigma: Vec<f64> = b.dense.clone().svd(false, false).singular_values.iter().copied().collect();
                seen.push((canon, sigma.clone()));
                sigma
            }
        };
    }
    blocks
}

/// `D1 A D2` with diagonal sign matrices chosen so that the entries of a
/// breadth-first spanning forest of the nonzero pattern are positive.
fn sign_canonical(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = a.shape();
    let mut row_sign = vec![0.0; r];
    let mut col_sign = vec![0.0; c];
    let mut queue = std::collections::VecDeque::new();
    for start in 0..r {
        if row_sign[start] != 0.0 {
            continue;
        }
        row_sign[start] = 1.0;
        queue.push_back((true, start));
        while let Some((is_row, i)) = queue.pop_front() {
            if is_row {
                for j in 0..c {
                    let v = a[(i, j)];
                    if v != 0.0 && col_sign[j] == 0.0 {
                        col_sign[j] = row_sign[i] * v.signum();
                        queue.push_back((false, j));
                    }
                }
            } else {
                for k in 0..r {
                    let v = a[(k, i)];
                    if v != 0.0 && row_sign[k] == 0.0 {
                        row_sign[k] = col_sign[i] * v.signum();
                        queue.push_back((true, k));
                    }
                }
            }
        }
    }
    DMatrix::from_fn(r, c, |i, j| {
        let cs = if col_sign[j] == 0.0 { 1.0 } else { col_sign[j] };
        row_sign[i] * a[(i, j)] * cs
    })
}

/// Kernel and cokernel dimensions by a gap-detected numerical rank.
pub fn numeric_index(a: &SparseMatrix, policy: GapPolicy) -> Result<NumericIndex> {
    let blocks = split_blocks(a);
    let mut all: Vec<f64> = blocks.iter().flat_map(|b| b.sigma.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    let sigma_max = all.last().copied().unwrap_or(0.0);
    if !(sigma_max > 0.0) {
        return Err(Error::Indeterminate("operator is numerically zero".into()));
    }
    // The floor stands for an exact zero so that "no kernel" competes too.
    let floor = f64::EPSILON * sigma_max;
    let mut best: Option<(f64, f64)> = None;
    let mut prev = floor;
    for &s in &all {
        let ratio = s / prev.max(floor);
        if prev < policy.candidate * sigma_max && best.is_none_or(|(r, _)| ratio > r) {
            best = Some((ratio, prev));
        }
        prev = s;
    }
    let (gap_ratio, threshold) = best.expect("at least one singular value");
    if gap_ratio < policy.min_ratio {
        return Err(Error::Indeterminate(format!(
            "largest relative gap {gap_ratio:.2e} below the candidate level is under {:.0e}",
            policy.min_ratio
        )));
    }
    let mut rank = 0;
    let mut kernel_cols: Vec<Vec<f64>> = Vec::new();
    for b in &blocks {
        let r = b.sigma.iter().filter(|&&s| s > threshold).count();
        rank += r;
        if b.cols.len() > r {
            // Pad to square so the full right singular basis is available.
            let size = b.rows.len().max(b.cols.len());
            let mut sq = DMatrix::zeros(size, b.cols.len());
            sq.view_mut((0, 0), (b.rows.len(), b.cols.len())).copy_from(&b.dense);
            let svd = sq.svd(false, true);
            let vt = svd.v_t.expect("requested");
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
            for &k in order.iter().take(b.cols.len() - r) {
                let mut v = vec![0.0; a.cols];
                for (i, &c) in b.cols.iter().enumerate() {
                    v[c] = vt[(k, i)];
                }
                kernel_cols.push(v);
            }
        }
    }
    let sigma_kept = all.iter().copied().find(|&s| s > threshold).unwrap_or(sigma_max);
    let sigma_dropped = all.iter().copied().rev().find(|&s| s <= threshold);
    let kernel = DMatrix::from_fn(a.cols, kernel_cols.len(), |i, j| kernel_cols[j][i]);
    let (dim_ker, dim_coker) = (a.cols - rank, a.rows - rank);
    Ok(NumericIndex {
        rows: a.rows,
        cols: a.cols,
        dim_ker,
        dim_coker,
        index: dim_ker as i64 - dim_coker as i64,
        sigma_max,
        sigma_kept,
        sigma_dropped,
        gap_ratio,
        kernel,
    })
}

/// Index from the asymptotic limits: `-mu_CZ(gamma+)` on the half
/// cylinder, `n/2 - mu(gamma+ l0, l0)` on the half strip, and differences
/// of the limit indices on full domains.
pub fn predicted_index(op: &TruncatedCROperator) -> Result<i64> {
    op.check_limits()?;
    let n = op.n;
    let lag = |plus: bool| -> Result<f64> {
        let g = op.limit_path(plus)?;
        let frames = LagrangianPath::new(g.samples.iter().map(|m| m * vertical(n)).collect())?;
        relative_maslov(&frames, &LagrangianPath::constant(vertical(n), g.samples.len())?)
    };
    let cz = |plus: bool| -> Result<i64> { conley_zehnder(&op.limit_path(plus)?) };
    let value = match op.kind {
        DomainKind::HalfCylinder => -cz(true)? as f64,
        DomainKind::Cylinder => (cz(false)? - cz(true)?) as f64,
        DomainKind::HalfStrip => n as f64 / 2.0 - lag(true)?,
        DomainKind::Strip => lag(false)? - lag(true)?,
    };
    if value.fract() != 0.0 {
        return Err(Error::Consistency(format!("predicted index {value} is not an integer")));
    }
    Ok(value as i64)
}

/// Closed-form kernel of the `theta * I` half-domain operators, sampled on
/// the grid, one column per basis function.
pub fn analytic_kernel(op: &TruncatedCROperator) -> Result<DMatrix<f64>> {
    let Coefficient::Theta(theta) = op.coefficient else {
        return Err(Error::Invalid("closed-form kernels are only known for theta * I".into()));
    };
    if !op.kind.is_half() {
        return Err(Error::Invalid("closed-form kernels are only known on half domains".into()));
    }
    let nodes = op.nodes()?;
    let m = op.width();
    let n = op.n;
    let k_max = op.truncation.modes;
    // Frequency unit: 2 pi on the circle, pi on the interval.
    let unit = if op.kind.is_strip() { PI } else { 2.0 * PI };
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut push = |f: &dyn Fn(f64, &mut [f64])| {
        let mut v = vec![0.0; nodes.len() * m];
        for (j, &s) in nodes.iter().enumerate() {
            f(s, &mut v[j * m..(j + 1) * m]);
        }
        cols.push(v);
    };
    if theta >= 0.0 {
        return Ok(DMatrix::zeros(nodes.len() * m, 0));
    }
    for i in 0..n {
        let (oq, op_) = (op.offset(i), op.offset(n + i));
        // the constant mode (0, 1) e^{theta s}
        push(&|s, c| c[op_] = (theta * s).exp());
        let mut h = 1;
        while theta + unit * h as f64 <= 0.0 && h <= k_max {
            let (lo, hi) = (theta - unit * h as f64, theta + unit * h as f64);
            if op.kind.is_strip() {
                // u1 = sin(h pi t)(e^{lo s} - e^{hi s}), u2 = cos(h pi t)(e^{lo s} + e^{hi s})
                push(&|s, c| {
                    c[oq + h - 1] = ((lo * s).exp() - (hi * s).exp()) / SQRT_2;
                    c[op_ + h] = ((lo * s).exp() + (hi * s).exp()) / SQRT_2;
                });
            } else {
                // e^{lo s} e^{2 pi h t J0} (x, y) + e^{hi s} e^{-2 pi h t J0} (-x, y)
                // for (x, y) = (1, 0) and (0, 1); cos at index 2h-1, sin at 2h.
                let (ci, si) = (2 * h - 1, 2 * h);
                push(&|s, c| {
                    let (a, b) = ((lo * s).exp() / SQRT_2, (hi * s).exp() / SQRT_2);
                    c[oq + ci] = a - b;
                    c[op_ + si] = -a - b;
                });
                push(&|s, c| {
                    let (a, b) = ((lo * s).exp() / SQRT_2, (hi * s).exp() / SQRT_2);
                    c[op_ + ci] = a + b;
                    c[oq + si] = a - b;
                });
            }
            h += 1;
        }
    }
    Ok(DMatrix::from_fn(nodes.len() * m, cols.len(), |r, c| cols[c][r]))
}

/// Largest principal angle between the numerical kernel and the closed-form
/// one.
pub fn kernel_basis_check(op: &TruncatedCROperator, numeric: &NumericIndex) -> Result<f64> {
    let exact = analytic_kernel(op)?;
    if exact.nrows() != numeric.kernel.nrows() || exact.ncols() != numeric.kernel.ncols() {
        return Err(Error::Invalid(format!(
            "kernel dimension mismatch: numeric {} vs closed form {}",
            numeric.kernel.ncols(),
            exact.ncols()
        )));
    }
    if exact.ncols() == 0 {
        return Ok(0.0);
    }
    let a = orthonormalize_columns(&exact)?;
    let b = orthonormalize_columns(&numeric.kernel)?;
    let cos = min_singular_value(&(a.transpose() * b)).min(1.0);
    Ok(cos.acos())
}

/// Outcome for one operator at the base and the refined truncation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FredholmReport {
    pub name: String,
    pub operator: TruncatedCROperator,
    pub margins: Vec<LimitMargin>,
    pub predicted: i64,
    pub base: NumericIndex,
    pub refined: NumericIndex,
    /// Largest kernel angle over both truncations, where a closed form exists.
    pub kernel_angle: Option<f64>,
    pub stable: bool,
    pub matches: bool,
}

pub const REFINEMENT: f64 = 1.5;
pub const ANGLE_TOLERANCE: f64 = 1e-3;

impl FredholmReport {
    pub fn passed(&self) -> bool {
        self.matches && self.stable && self.kernel_angle.is_none_or(|a| a < ANGLE_TOLERANCE)
    }
}

pub fn evaluate(name: &str, op: &TruncatedCROperator, policy: GapPolicy) -> Result<FredholmReport> {
    let margins = op.limit_margins()?;
    let predicted = predicted_index(op)?;
    let fine = op.refined(REFINEMENT);
    let base = numeric_index(&op.assemble()?, policy)?;
    let refined = numeric_index(&fine.assemble()?, policy)?;
    let closed_form = matches!(op.coefficient, Coefficient::Theta(_)) && op.kind.is_half();
    let kernel_angle = if closed_form {
        Some(kernel_basis_check(op, &base)?.max(kernel_basis_check(&fine, &refined)?))
    } else {
        None
    };
    let stable = (base.dim_ker, base.dim_coker) == (refined.dim_ker, refined.dim_coker);
    Ok(FredholmReport {
        name: name.to_string(),
        operator: op.clone(),
        margins,
        predicted,
        matches: base.index == predicted && refined.index == predicted,
        base,
        refined,
        kernel_angle,
        stable,
    })
}

/// The reference operators with known indices.
pub fn acceptance_suite() -> Vec<(String, TruncatedCROperator)> {
    let t = Truncation::default();
    let mut out = Vec::new();
    let thetas = [("pi/2", 0.5), ("pi", 1.0), ("3pi/2", 1.5)];
    for (label, x) in thetas {
        for sign in [1.0, -1.0] {
            let s = if sign > 0.0 { "+" } else { "-" };
            out.push((
                format!("half-cylinder theta={s}{label}"),
                TruncatedCROperator::new(DomainKind::HalfCylinder, 1, Coefficient::Theta(sign * x * PI), t),
            ));
        }
    }
    for alpha in [1.0, -1.0] {
        out.push((
            format!("half-cylinder Q alpha={alpha:+}"),
            TruncatedCROperator::new(DomainKind::HalfCylinder, 1, Coefficient::Q(alpha), t),
        ));
    }
    for (label, x) in [("pi/2", 0.5), ("3pi/2", 1.5)] {
        for sign in [1.0, -1.0] {
            let s = if sign > 0.0 { "+" } else { "-" };
            out.push((
                format!("half-strip theta={s}{label}"),
                TruncatedCROperator::new(DomainKind::HalfStrip, 1, Coefficient::Theta(sign * x * PI), t),
            ));
        }
    }
    out.push((
        "cylinder theta=pi..3pi".into(),
        TruncatedCROperator::new(
            DomainKind::Cylinder,
            1,
            Coefficient::Interpolated {
                minus: Box::new(Coefficient::Theta(PI)),
                plus: Box::new(Coefficient::Theta(3.0 * PI)),
            },
            t,
        ),
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half(kind: DomainKind, theta: f64) -> TruncatedCROperator {
        TruncatedCROperator::new(kind, 1, Coefficient::Theta(theta), Truncation::default())
    }

    #[test]
    fn galerkin_matrix_is_symmetric() {
        let s = DMatrix::from_row_slice(4, 4, &[1.0, 0.3, 0.2, -0.5, 0.3, 2.0, 0.7, 0.1, 0.2, 0.7, -1.0, 0.4, -0.5, 0.1, 0.4, 0.5]);
        for kind in [DomainKind::Cylinder, DomainKind::HalfStrip] {
            let op = TruncatedCROperator::new(kind, 2, Coefficient::Constant(vec![]), Truncation::default());
            let g = op.galerkin(&s, true);
            assert!((&g - g.transpose()).amax() < 1e-14, "{kind:?}");
        }
    }

    #[test]
    fn strip_mass_matches_quadrature() {
        let op = half(DomainKind::HalfStrip, 0.5);
        let samples = 20000;
        for k in 1..=4usize {
            for l in 0..=4usize {
                let q: f64 = (0..samples)
                    .map(|i| {
                        let t = (i as f64 + 0.5) / samples as f64;
                        let cosine = if l == 0 { 1.0 } else { SQRT_2 * (l as f64 * PI * t).cos() };
                        SQRT_2 * (k as f64 * PI * t).sin() * cosine
                    })
                    .sum::<f64>()
                    / samples as f64;
                assert!((op.mass(0, 1, k - 1, l) - q).abs() < 1e-7, "k={k} l={l}");
            }
        }
    }

    #[test]
    fn assembled_sizes() {
        let op = half(DomainKind::HalfCylinder, PI);
        let a = op.assemble().unwrap();
        // 129 nodes, 34 coefficients each; 128 * 34 scheme rows + 17 edge rows + 18 end rows
        assert_eq!(a.cols, 129 * 34);
        assert_eq!(a.rows, 128 * 34 + 17 + 18);
        let q = TruncatedCROperator::new(DomainKind::HalfCylinder, 1, Coefficient::Q(1.0), Truncation::default());
        let d = q.galerkin(&Coefficient::Q(1.0).limit(1, true).unwrap(), false);
        assert_eq!(d[(0, 17)], 1.0);
    }

    #[test]
    fn degenerate_limits_are_rejected() {
        let err = half(DomainKind::HalfCylinder, 2.0 * PI).assemble().unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)), "{err}");
        let err = predicted_index(&half(DomainKind::HalfStrip, PI)).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)), "{err}");
    }

    #[test]
    fn half_cylinder_indices() {
        for (x, ker, coker) in [(0.5, 0, 1), (1.0, 0, 1), (-0.5, 1, 0), (-1.0, 1, 0)] {
            let op = half(DomainKind::HalfCylinder, x * PI);
            let ni = numeric_index(&op.assemble().unwrap(), GapPolicy::default()).unwrap();
            assert_eq!((ni.dim_ker, ni.dim_coker), (ker, coker), "theta = {x} pi");
            assert_eq!(predicted_index(&op).unwrap(), ni.index);
            let angle = kernel_basis_check(&op, &ni).unwrap();
            assert!(angle < ANGLE_TOLERANCE, "theta = {x} pi: angle {angle:e}");
        }
    }

    #[test]
    fn half_strip_kernels_match_closed_form() {
        for (x, ker) in [(-0.5, 1), (-1.5, 2), (-2.5, 3), (0.5, 0)] {
            let op = half(DomainKind::HalfStrip, x * PI);
            let ni = numeric_index(&op.assemble().unwrap(), GapPolicy::default()).unwrap();
            assert_eq!(ni.dim_ker, ker, "theta = {x} pi");
            assert_eq!(ni.index, predicted_index(&op).unwrap());
            let angle = kernel_basis_check(&op, &ni).unwrap();
            assert!(angle < ANGLE_TOLERANCE, "theta = {x} pi: angle {angle:e}");
        }
    }

    #[test]
    fn wide_negative_theta_on_the_circle() {
        // -5 pi admits the frequency-one pair besides the constant mode.
        let op = TruncatedCROperator::new(
            DomainKind::HalfCylinder,
            1,
            Coefficient::Theta(-2.5 * PI),
            Truncation { modes: 4, s0: 4.0, step: 1.0 / 32.0 },
        );
        let ni = numeric_index(&op.assemble().unwrap(), GapPolicy::default()).unwrap();
        assert_eq!(ni.dim_ker, 3);
        assert_eq!(ni.index, predicted_index(&op).unwrap());
        let angle = kernel_basis_check(&op, &ni).unwrap();
        assert!(angle < ANGLE_TOLERANCE, "angle {angle:e}");
    }

    #[test]
    fn equal_limits_on_the_cylinder_are_invertible() {
        let op = TruncatedCROperator::new(
            DomainKind::Cylinder,
            1,
            Coefficient::Theta(PI),
            Truncation { modes: 4, s0: 4.0, step: 1.0 / 16.0 },
        );
        let ni = numeric_index(&op.assemble().unwrap(), GapPolicy::default()).unwrap();
        assert_eq!((ni.dim_ker, ni.dim_coker), (0, 0));
        assert!(ni.sigma_kept > 1e-3 * ni.sigma_max);
    }

    #[test]
    fn strip_with_coupled_coefficient() {
        // A constant coefficient coupling q and p on the full strip: equal
        // limits, index zero.
        let s = vec![vec![0.5 * PI, 0.4], vec![0.4, 0.5 * PI]];
        let op = TruncatedCROperator::new(
            DomainKind::Strip,
            1,
            Coefficient::Constant(s),
            Truncation { modes: 6, s0: 4.0, step: 1.0 / 16.0 },
        );
        assert_eq!(predicted_index(&op).unwrap(), 0);
        let ni = numeric_index(&op.assemble().unwrap(), GapPolicy::default()).unwrap();
        assert_eq!(ni.index, 0);
    }

    #[test]
    fn no_gap_is_indeterminate() {
        let entries = (0..19).map(|i| (i, i, 10f64.powi(-(i as i32)))).collect();
        let a = SparseMatrix { rows: 19, cols: 19, entries };
        assert!(matches!(numeric_index(&a, GapPolicy::default()), Err(Error::Indeterminate(_))));
    }

    #[test]
    fn triplet_dump() {
        let a = SparseMatrix { rows: 2, cols: 2, entries: vec![(0, 1, 2.5), (1, 0, -1.0)] };
        assert_eq!(a.to_triplets(), "0 1 2.5e0\n1 0 -1e0\n");
    }
}
