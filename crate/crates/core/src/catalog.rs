//! Reference systems with known generators and loop or path space homology.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::fields::{ScalarField, TrigTerm};
use crate::lagrangian::PhysicalLagrangian;
use crate::manifold::Manifold;
use crate::{Error, Result};

/// Which boundary value problems a system is posed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryClass {
    /// Loops, one search per free homotopy class.
    Periodic { windings: Vec<Vec<i64>> },
    /// Paths from `q0`, one search per chart lift of the target.
    Fixed { q0: Vec<f64>, targets: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedGenerator {
    pub index: usize,
    pub action: f64,
}

/// Homology of the subcomplex of generators with action below `below`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SublevelExpectation {
    pub below: f64,
    pub betti: Vec<usize>,
}

/// Expectations for one homotopy class (or target lift).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassExpectation {
    pub class: Vec<i64>,
    pub generators: Vec<ExpectedGenerator>,
    pub betti: Vec<usize>,
    pub sublevels: Vec<SublevelExpectation>,
}

impl ClassExpectation {
    pub fn indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.generators.iter().map(|g| g.index).collect();
        v.sort_unstable();
        v
    }

    pub fn counts(&self) -> Vec<usize> {
        let top = self.generators.iter().map(|g| g.index + 1).max().unwrap_or(0);
        let mut c = vec![0; top];
        for g in &self.generators {
            c[g.index] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceSystem {
    pub name: &'static str,
    pub manifold: Manifold,
    pub potential: ScalarField,
    pub boundary: BoundaryClass,
    pub classes: Vec<ClassExpectation>,
    /// Whether every boundary map of the expected complex vanishes.
    pub zero_differential: bool,
}

pub const NAMES: [&str; 4] = ["pendulum-omega-pi", "flat-circle-bvp", "torus2-product-potential", "round-sphere-bvp"];

fn alternating(v: &[usize]) -> i64 {
    v.iter().enumerate().map(|(k, &b)| if k % 2 == 0 { b as i64 } else { -(b as i64) }).sum()
}

impl ReferenceSystem {
    pub fn lagrangian(&self) -> PhysicalLagrangian {
        PhysicalLagrangian::new(self.manifold, self.potential.clone())
    }

    pub fn class(&self, class: &[i64]) -> Option<&ClassExpectation> {
        self.classes.iter().find(|c| c.class == class)
    }

    /// The Betti tables agree with the expected generators through the Euler
    /// characteristic, and equal the generator counts when no differential
    /// is expected.
    pub fn check_consistency(&self) -> Result<()> {
        for c in &self.classes {
            let counts = c.counts();
            if alternating(&c.betti) != alternating(&counts) {
                return Err(Error::Consistency(format!(
                    "{}: class {:?} has Euler characteristic {} but generators sum to {}",
                    self.name,
                    c.class,
                    alternating(&c.betti),
                    alternating(&counts)
                )));
            }
            let trimmed = |v: &[usize]| {
                let end = v.iter().rposition(|&x| x != 0).map_or(0, |i| i + 1);
                v[..end].to_vec()
            };
            if self.zero_differential && trimmed(&c.betti) != trimmed(&counts) {
                return Err(Error::Consistency(format!(
                    "{}: class {:?} expects a zero differential but Betti {:?} differ from counts {:?}",
                    self.name, c.class, c.betti, counts
                )));
            }
        }
        Ok(())
    }
}

fn cosine_potential(coeffs: &[f64]) -> ScalarField {
    let n = coeffs.len();
    ScalarField::Trig(
        coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let mut kq = vec![0; n];
                kq[i] = 1;
                TrigTerm { coeff: -c, kt: 0, kq, sine: false }
            })
            .collect(),
    )
}

fn gen(index: usize, action: f64) -> ExpectedGenerator {
    ExpectedGenerator { index, action }
}

/// `V = -(omega / 2 pi)^2 cos(2 pi q)` with `omega = pi`. The constant loop
/// at the top of `V` is the minimum of the action; the bottom one has
/// index 1.
fn pendulum() -> ReferenceSystem {
    let c = 0.25;
    ReferenceSystem {
        name: "pendulum-omega-pi",
        manifold: Manifold::FlatTorus { n: 1 },
        potential: cosine_potential(&[c]),
        boundary: BoundaryClass::Periodic { windings: vec![vec![0]] },
        classes: vec![ClassExpectation {
            class: vec![0],
            generators: vec![gen(0, -c), gen(1, c)],
            betti: vec![1, 1],
            // below the saddle value only the minimum survives
            sublevels: vec![SublevelExpectation { below: c, betti: vec![1] }],
        }],
        zero_differential: true,
    }
}

/// Free motion on the circle from 0 to the lifts `k + 1/2` of the
/// half-way point.
fn flat_circle() -> ReferenceSystem {
    let ks: Vec<i64> = (-2..=2).collect();
    ReferenceSystem {
        name: "flat-circle-bvp",
        manifold: Manifold::FlatTorus { n: 1 },
        potential: ScalarField::zero(),
        boundary: BoundaryClass::Fixed { q0: vec![0.0], targets: ks.iter().map(|&k| vec![k as f64 + 0.5]).collect() },
        classes: ks
            .iter()
            .map(|&k| {
                let d = k as f64 + 0.5;
                ClassExpectation { class: vec![k], generators: vec![gen(0, 0.5 * d * d)], betti: vec![1], sublevels: vec![] }
            })
            .collect(),
        zero_differential: true,
    }
}

/// Two uncoupled pendulum factors with `omega = pi` and `omega = 0.8 pi`.
fn torus2() -> ReferenceSystem {
    let (a, b) = (0.25, 0.16);
    ReferenceSystem {
        name: "torus2-product-potential",
        manifold: Manifold::FlatTorus { n: 2 },
        potential: cosine_potential(&[a, b]),
        boundary: BoundaryClass::Periodic { windings: vec![vec![0, 0]] },
        classes: vec![ClassExpectation {
            class: vec![0, 0],
            generators: vec![gen(0, -a - b), gen(1, -a + b), gen(1, a - b), gen(2, a + b)],
            betti: vec![1, 2, 1],
            sublevels: vec![
                SublevelExpectation { below: -a + b, betti: vec![1] },
                SublevelExpectation { below: a - b, betti: vec![1, 1] },
                SublevelExpectation { below: a + b, betti: vec![1, 2] },
            ],
        }],
        zero_differential: true,
    }
}

/// Equatorial geodesics of the unit sphere from longitude 0 to longitude
/// 1/2, the short arc and the one through the antipode. Only the low
/// degrees of the path space homology are registered.
fn round_sphere() -> ReferenceSystem {
    let d = 0.5;
    let long = 2.0 * PI - d;
    ReferenceSystem {
        name: "round-sphere-bvp",
        manifold: Manifold::Sphere,
        potential: ScalarField::zero(),
        boundary: BoundaryClass::Fixed {
            q0: vec![PI / 2.0, 0.0],
            targets: vec![vec![PI / 2.0, d], vec![PI / 2.0, d - 2.0 * PI]],
        },
        classes: vec![ClassExpectation {
            class: vec![],
            generators: vec![gen(0, 0.5 * d * d), gen(1, 0.5 * long * long)],
            betti: vec![1, 1],
            sublevels: vec![],
        }],
        zero_differential: true,
    }
}

pub fn lookup(name: &str) -> Result<ReferenceSystem> {
    let sys = match name {
        "pendulum-omega-pi" => pendulum(),
        "flat-circle-bvp" => flat_circle(),
        "torus2-product-potential" => torus2(),
        "round-sphere-bvp" => round_sphere(),
        _ => return Err(Error::UnknownSystem(name.to_string())),
    };
    Ok(sys)
}

pub fn all() -> Vec<ReferenceSystem> {
    NAMES.iter().map(|n| lookup(n).expect("registered")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_are_consistent() {
        for s in all() {
            s.check_consistency().unwrap();
            s.lagrangian().validate().unwrap();
        }
    }

    #[test]
    fn lookup_examples() {
        let p = lookup("pendulum-omega-pi").unwrap();
        assert_eq!(p.classes[0].indices(), vec![0, 1]);
        assert_eq!(p.classes[0].betti, vec![1, 1]);
        let c = lookup("flat-circle-bvp").unwrap();
        assert_eq!(c.classes.len(), 5);
        assert!(c.classes.iter().all(|k| k.indices() == vec![0] && k.betti == vec![1]));
        let t = lookup("torus2-product-potential").unwrap();
        assert_eq!(t.classes[0].indices(), vec![0, 1, 1, 2]);
        assert_eq!(t.classes[0].betti, vec![1, 2, 1]);
        assert!(matches!(lookup("klein-bottle"), Err(Error::UnknownSystem(_))));
    }

    #[test]
    fn inconsistent_tables_are_caught() {
        let mut t = lookup("torus2-product-potential").unwrap();
        t.classes[0].betti = vec![1, 1, 1];
        assert!(t.check_consistency().is_err());
        let mut p = lookup("pendulum-omega-pi").unwrap();
        p.classes[0].betti = vec![0, 0];
        p.zero_differential = false;
        p.check_consistency().unwrap();
        p.zero_differential = true;
        assert!(p.check_consistency().is_err());
    }
}
