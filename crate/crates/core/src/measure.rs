//! Points of the circle ℝ/ℤ and finitely supported measures on it.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atoms closer than this are the same point.
pub const MERGE_TOLERANCE: f64 = 1e-14;

/// Reduces a real number to its representative in `[0, 1)`.
#[inline]
pub fn reduce(x: f64) -> f64 {
    let r = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance between two circle points.
#[inline]
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = reduce(a - b);
    d.min(1.0 - d)
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Cos,
    Sin,
}

/// A test function `cos(2πky)` or `sin(2πky)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Harmonic {
    pub k: u32,
    pub phase: Phase,
}

impl Harmonic {
    pub fn cos(k: u32) -> Self {
        Harmonic {
            k,
            phase: Phase::Cos,
        }
    }

    pub fn sin(k: u32) -> Self {
        Harmonic {
            k,
            phase: Phase::Sin,
        }
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        let arg = TAU * self.k as f64 * y;
        match self.phase {
            Phase::Cos => arg.cos(),
            Phase::Sin => arg.sin(),
        }
    }

    /// The harmonics `cos, sin` for `k = 1..=k_max`.
    pub fn basis(k_max: u32) -> Vec<Harmonic> {
        (1..=k_max)
            .flat_map(|k| [Harmonic::cos(k), Harmonic::sin(k)])
            .collect()
    }
}

impl fmt::Display for Harmonic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.phase {
            Phase::Cos => write!(f, "cos{}", self.k),
            Phase::Sin => write!(f, "sin{}", self.k),
        }
    }
}

impl std::str::FromStr for Harmonic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (phase, rest) = if let Some(r) = s.strip_prefix("cos") {
            (Phase::Cos, r)
        } else if let Some(r) = s.strip_prefix("sin") {
            (Phase::Sin, r)
        } else {
            return Err(Error::Config(format!(
                "harmonic `{s}` must look like cos1 or sin2"
            )));
        };
        let k: u32 = rest
            .parse()
            .map_err(|_| Error::Config(format!("harmonic `{s}` has no frequency")))?;
        if k == 0 {
            return Err(Error::Config("harmonic frequency must be positive".into()));
        }
        Ok(Harmonic { k, phase })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub position: f64,
    pub weight: f64,
}

/// Weighted Dirac atoms on the circle, kept sorted by position with
/// coincident atoms merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicCircleMeasure {
    atoms: Vec<Atom>,
    normalized: bool,
}

impl AtomicCircleMeasure {
    /// Builds a measure from raw atoms. Negative weights are rejected.
    /// With `normalize` the weights are rescaled to total mass one.
    pub fn from_atoms(atoms: impl IntoIterator<Item = Atom>, normalize: bool) -> Result<Self> {
        let mut atoms: Vec<Atom> = atoms
            .into_iter()
            .map(|a| Atom {
                position: reduce(a.position),
                weight: a.weight,
            })
            .collect();
        if let Some(bad) = atoms
            .iter()
            .find(|a| !(a.weight >= 0.0) || !a.position.is_finite())
        {
            return Err(Error::Domain(format!(
                "atom at {} with weight {} is not a finite nonnegative atom",
                bad.position, bad.weight
            )));
        }
        atoms.sort_by(|a, b| a.position.total_cmp(&b.position));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if a.position - last.position <= MERGE_TOLERANCE => {
                    last.weight += a.weight
                }
                _ => merged.push(a),
            }
        }
        if merged.len() > 1 {
            let first = merged[0].position;
            let last = merged[merged.len() - 1].position;
            if first + 1.0 - last <= MERGE_TOLERANCE {
                let tail = merged.pop().unwrap();
                merged[0].weight += tail.weight;
            }
        }
        let mut m = AtomicCircleMeasure {
            atoms: merged,
            normalized: false,
        };
        if normalize {
            m = m.normalized()?;
        }
        Ok(m)
    }

    pub fn dirac(position: f64) -> Self {
        AtomicCircleMeasure {
            atoms: vec![Atom {
                position: reduce(position),
                weight: 1.0,
            }],
            normalized: true,
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn mass(&self) -> f64 {
        compensated_sum(self.atoms.iter().map(|a| a.weight))
    }

    /// Rescales to a probability measure.
    pub fn normalized(&self) -> Result<Self> {
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(Error::Domain(
                "cannot normalize a measure of zero mass".into(),
            ));
        }
        Ok(AtomicCircleMeasure {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    position: a.position,
                    weight: a.weight / mass,
                })
                .collect(),
            normalized: true,
        })
    }

    /// Marks the measure as normalized if its mass is one to 1e-12.
    pub(crate) fn with_normalized_flag(mut self) -> Self {
        self.normalized = (self.mass() - 1.0).abs() <= 1e-12;
        self
    }

    pub fn integrate(&self, phi: impl Fn(f64) -> f64) -> f64 {
        compensated_sum(self.atoms.iter().map(|a| a.weight * phi(a.position)))
    }

    /// Total variation distance `sup_A |self(A) - other(A)|`, after pairing
    /// atoms of the two measures that lie within `tol` of each other.
    pub fn tv_distance(&self, other: &AtomicCircleMeasure, tol: f64) -> f64 {
        let mut tagged: Vec<(f64, f64)> = self
            .atoms
            .iter()
            .map(|a| (a.position, a.weight))
            .chain(other.atoms.iter().map(|a| (a.position, -a.weight)))
            .collect();
        tagged.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut clusters: Vec<(f64, f64)> = Vec::new();
        for (pos, w) in tagged {
            match clusters.last_mut() {
                Some(c) if pos - c.0 <= tol => c.1 += w,
                _ => clusters.push((pos, w)),
            }
        }
        if clusters.len() > 1 {
            let first = clusters[0].0;
            let last = clusters[clusters.len() - 1].0;
            if first + 1.0 - last <= tol {
                let tail = clusters.pop().unwrap();
                clusters[0].1 += tail.1;
            }
        }
        0.5 * compensated_sum(clusters.iter().map(|c| c.1.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_stays_in_unit_interval() {
        assert_eq!(reduce(1.25), 0.25);
        assert_eq!(reduce(-0.25), 0.75);
        assert_eq!(reduce(-1e-20), 0.0);
        assert!(reduce(-1e-17) < 1.0);
    }

    #[test]
    fn merge_collapses_wraparound_atoms() {
        let m = AtomicCircleMeasure::from_atoms(
            [
                Atom {
                    position: 1.0 - 1e-16,
                    weight: 0.5,
                },
                Atom {
                    position: 0.0,
                    weight: 0.25,
                },
                Atom {
                    position: 0.5,
                    weight: 0.25,
                },
            ],
            true,
        )
        .unwrap();
        assert_eq!(m.len(), 2);
        assert!((m.mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tv_distance_of_disjoint_measures_is_one() {
        let a = AtomicCircleMeasure::dirac(0.1);
        let b = AtomicCircleMeasure::dirac(0.6);
        assert!((a.tv_distance(&b, 1e-9) - 1.0).abs() < 1e-15);
        assert_eq!(a.tv_distance(&a, 1e-9), 0.0);
    }

    #[test]
    fn harmonic_parses() {
        assert_eq!("cos2".parse::<Harmonic>().unwrap(), Harmonic::cos(2));
        assert_eq!("sin1".parse::<Harmonic>().unwrap(), Harmonic::sin(1));
        assert!("tan1".parse::<Harmonic>().is_err());
        assert!("cos0".parse::<Harmonic>().is_err());
    }

    #[test]
    fn negative_weights_rejected() {
        assert!(AtomicCircleMeasure::from_atoms(
            [Atom {
                position: 0.0,
                weight: -1.0
            }],
            false
        )
        .is_err());
    }
}
