//! Integer matrices, Smith normal form over arbitrary precision integers, and
//! homology of finite chain complexes.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::{Error, Result};

/// Dense row-major integer matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i64>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
        IntMatrix { rows: rows.len(), cols, data: rows.concat() }
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: i64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0)
    }

    /// Product with overflow checking.
    pub fn checked_mul(&self, other: &IntMatrix) -> Result<IntMatrix> {
        if self.cols != other.rows {
            return Err(Error::Invalid(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let overflow = || Error::Numerical("integer overflow in matrix product".into());
        let mut out = IntMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut s: i64 = 0;
                for k in 0..self.cols {
                    let p = self.get(i, k).checked_mul(other.get(k, j)).ok_or_else(overflow)?;
                    s = s.checked_add(p).ok_or_else(overflow)?;
                }
                out.set(i, j, s);
            }
        }
        Ok(out)
    }

    /// One row per line, entries separated by single spaces.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Nonzero diagonal entries `d_1 | d_2 | ... ` of the Smith normal form,
/// all positive.
pub fn invariant_factors(m: &IntMatrix) -> Vec<BigInt> {
    let (rows, cols) = (m.rows, m.cols);
    let mut a: Vec<Vec<BigInt>> = (0..rows).map(|i| (0..cols).map(|j| BigInt::from(m.get(i, j))).collect()).collect();
    let mut out = Vec::new();
    for t in 0..rows.min(cols) {
        // Smallest nonzero entry of the trailing block becomes the pivot.
        let pick = |a: &Vec<Vec<BigInt>>| {
            let mut best: Option<(usize, usize)> = None;
            for i in t..rows {
                for j in t..cols {
                    if !a[i][j].is_zero() && best.is_none_or(|(bi, bj)| a[i][j].abs() < a[bi][bj].abs()) {
                        best = Some((i, j));
                    }
                }
            }
            best
        };
        let Some((pi, pj)) = pick(&a) else { break };
        a.swap(t, pi);
        for row in a.iter_mut() {
            row.swap(t, pj);
        }
        loop {
            let mut dirty = false;
            for i in t + 1..rows {
                if a[i][t].is_zero() {
                    continue;
                }
                let q = &a[i][t] / &a[t][t];
                for j in t..cols {
                    let d = &q * &a[t][j];
                    a[i][j] -= d;
                }
                if !a[i][t].is_zero() {
                    dirty = true;
                }
            }
            for j in t + 1..cols {
                if a[t][j].is_zero() {
                    continue;
                }
                let q = &a[t][j] / &a[t][t];
                for i in t..rows {
                    let d = &q * &a[i][t];
                    a[i][j] -= d;
                }
                if !a[t][j].is_zero() {
                    dirty = true;
                }
            }
            if !dirty {
                // Enforce divisibility by the rest of the block.
                let bad = (t + 1..rows)
                    .find(|&i| (t + 1..cols).any(|j| !(&a[i][j] % &a[t][t]).is_zero()));
                match bad {
                    Some(i) => {
                        for j in t..cols {
                            let v = a[i][j].clone();
                            a[t][j] += v;
                        }
                    }
                    None => break,
                }
            }
            // Move the smallest entry of row t / column t to the pivot.
            let mut best = (t, t);
            for i in t..rows {
                if !a[i][t].is_zero() && a[i][t].abs() < a[best.0][best.1].abs() {
                    best = (i, t);
                }
            }
            for j in t..cols {
                if !a[t][j].is_zero() && a[t][j].abs() < a[best.0][best.1].abs() {
                    best = (t, j);
                }
            }
            a.swap(t, best.0);
            for row in a.iter_mut() {
                row.swap(t, best.1);
            }
        }
        out.push(a[t][t].abs());
    }
    out
}

pub fn rank(m: &IntMatrix) -> usize {
    invariant_factors(m).len()
}

/// Integral homology of a chain complex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Homology {
    pub betti: Vec<usize>,
    /// Torsion coefficients (invariant factors > 1) in each degree.
    #[serde(serialize_with = "torsion_strings")]
    pub torsion: Vec<Vec<BigInt>>,
}

fn torsion_strings<S: serde::Serializer>(t: &[Vec<BigInt>], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(t.len()))?;
    for deg in t {
        let v: Vec<String> = deg.iter().map(|x| x.to_string()).collect();
        seq.serialize_element(&v)?;
    }
    seq.end()
}

/// `dims[k] = rank C_k`; `boundary[k]` maps `C_k -> C_{k-1}` and is a
/// `dims[k-1] x dims[k]` matrix (`boundary[0]` is ignored).
pub fn homology(dims: &[usize], boundary: &[IntMatrix]) -> Result<Homology> {
    if boundary.len() != dims.len() {
        return Err(Error::Invalid("need one boundary matrix per degree".into()));
    }
    for k in 1..dims.len() {
        if boundary[k].rows != dims[k - 1] || boundary[k].cols != dims[k] {
            return Err(Error::Invalid(format!("boundary in degree {k} has the wrong shape")));
        }
    }
    let factors: Vec<Vec<BigInt>> =
        (0..dims.len()).map(|k| if k == 0 { Vec::new() } else { invariant_factors(&boundary[k]) }).collect();
    let mut betti = Vec::with_capacity(dims.len());
    let mut torsion = Vec::with_capacity(dims.len());
    for k in 0..dims.len() {
        let out_rank = factors[k].len();
        let in_rank = factors.get(k + 1).map_or(0, Vec::len);
        let b = dims[k]
            .checked_sub(out_rank + in_rank)
            .ok_or_else(|| Error::BoundarySquare(format!("ranks exceed the chain group in degree {k}")))?;
        betti.push(b);
        let tor = factors.get(k + 1).map_or_else(Vec::new, |f| f.iter().filter(|d| !d.is_one()).cloned().collect());
        torsion.push(tor);
    }
    Ok(Homology { betti, torsion })
}
