//! Small dense linear-algebra helpers shared by the geometry, index and
//! Fredholm modules.

use nalgebra::{Complex, DMatrix, Schur, SymmetricEigen};

use crate::{Error, Result};

/// Standard complex structure `J0 = [[0, I], [-I, 0]]` on `R^{2n}` in
/// `(q, p)` ordering.
pub fn j0(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// `|A^T J0 A - J0|` in the max norm.
pub fn symplectic_residual(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows() / 2;
    let j = j0(n);
    (a.transpose() * &j * a - j).amax()
}

/// Block-diagonal matrix `diag(a, b)`.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    m
}

/// Inverse square root of a symmetric positive definite matrix.
pub fn spd_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Numerical("matrix is not positive definite".into()));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Orthogonal factor of the polar decomposition `m = U P`.
pub fn polar_orthogonal(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numerical("polar decomposition failed".into())),
    };
    Ok(u * vt)
}

/// Orthonormalize the columns of `z` symmetrically: `z (z^T z)^{-1/2}`.
pub fn orthonormalize_columns(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(z * spd_inv_sqrt(&(z.transpose() * z))?)
}

/// Principal logarithm of a rotation matrix, returned as a skew matrix.
///
/// Rotations by exactly `pi` have no principal logarithm; the returned
/// logarithm is then one of the two minimal ones.
pub fn so_log(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = r.nrows();
    if n == 1 {
        if r[(0, 0)] < 0.0 {
            return Err(Error::Frame("reflection in SO(1)".into()));
        }
        return Ok(DMatrix::zeros(1, 1));
    }
    if n == 2 {
        let a = (r[(1, 0)] - r[(0, 1)]).atan2(r[(0, 0)] + r[(1, 1)]);
        return Ok(DMatrix::from_row_slice(2, 2, &[0.0, -a, a, 0.0]));
    }
    let det = r.determinant();
    if det < 0.0 {
        return Err(Error::Frame(format!("orientation reversing holonomy (det = {det:.3})")));
    }
    let (q, t) = Schur::new(r.clone()).unpack();
    let mut log_t = DMatrix::zeros(n, n);
    let mut reflections = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > 1e-12 {
            let a = (t[(i + 1, i)] - t[(i, i + 1)]).atan2(t[(i, i)] + t[(i + 1, i + 1)]);
            log_t[(i, i + 1)] = -a;
            log_t[(i + 1, i)] = a;
            i += 2;
        } else {
            if t[(i, i)] < 0.0 {
                reflections.push(i);
            }
            i += 1;
        }
    }
    if reflections.len() % 2 != 0 {
        return Err(Error::Frame("unpaired -1 eigenvalue in rotation".into()));
    }
    for pair in reflections.chunks(2) {
        log_t[(pair[0], pair[1])] = -std::f64::consts::PI;
        log_t[(pair[1], pair[0])] = std::f64::consts::PI;
    }
    let l = &q * log_t * q.transpose();
    Ok((&l - l.transpose()) * 0.5)
}

/// Complex eigenvalues of a real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    m.clone().complex_eigenvalues().iter().copied().collect()
}

/// Eigenvalues of a complex square matrix (via complex Schur form).
pub fn complex_eigenvalues(m: &DMatrix<Complex<f64>>) -> Result<Vec<Complex<f64>>> {
    let schur = Schur::try_new(m.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("complex Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Smallest singular value.
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().min()
}

/// Connected components of the bipartite graph of nonzero entries.
///
/// Returns, for each component, its sorted row and column indices. Empty
/// rows and empty columns form singleton components of their own.
pub fn bipartite_components(
    rows: usize,
    cols: usize,
    entries: &[(usize, usize, f64)],
) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut parent: Vec<usize> = (0..rows + cols).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(r, c, v) in entries {
        if v == 0.0 {
            continue;
        }
        let a = find(&mut parent, r);
        let b = find(&mut parent, rows + c);
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> = Default::default();
    for x in 0..rows + cols {
        let root = find(&mut parent, x);
        let g = groups.entry(root).or_default();
        if x < rows {
            g.0.push(x);
        } else {
            g.1.push(x - rows);
        }
    }
    groups.into_values().collect()
}
