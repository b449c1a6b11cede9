//! Flat complex space `C^n = R^{2n}` with its standard Kähler structure.
//!
//! Coordinates are ordered `(x_1..x_n, y_1..y_n)` and the complex structure
//! acts blockwise: `J(∂x_j) = ∂y_j`, `J(∂y_j) = -∂x_j`. The ambient metric is
//! the Euclidean one, so its Christoffel symbols and curvature vanish
//! identically and are never stored.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbientStructure {
    n: usize,
    /// Optional period per ambient coordinate for quotient tori. Only used when
    /// positions are wrapped for storage or rendering.
    lattice: Option<Vec<f64>>,
}

impl AmbientStructure {
    pub fn new(n: usize) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(Error::InvalidParameter(format!(
                "complex dimension must be 1 or 2, got {n}"
            )));
        }
        Ok(Self { n, lattice: None })
    }

    pub fn with_lattice(n: usize, periods: Vec<f64>) -> Result<Self> {
        let mut s = Self::new(n)?;
        if periods.len() != 2 * n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                got: periods.len(),
            });
        }
        if periods.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidParameter(
                "lattice periods must be positive".into(),
            ));
        }
        s.lattice = Some(periods);
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Real dimension `2n`.
    pub fn real_dim(&self) -> usize {
        2 * self.n
    }

    pub fn lattice(&self) -> Option<&[f64]> {
        self.lattice.as_deref()
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != 2 * self.n {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.n,
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn apply_j(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        let mut out = vec![0.0; v.len()];
        apply_j_into(v, &mut out);
        Ok(out)
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(dot(u, v))
    }

    /// Kähler form `ω̄(u, v) = ⟨Ju, v⟩`.
    pub fn ambient_symplectic(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(symplectic(u, v))
    }

    /// Reduce a position modulo the lattice, if one is configured.
    pub fn wrap(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.check(p)?;
        Ok(match &self.lattice {
            Some(periods) => p
                .iter()
                .zip(periods)
                .map(|(x, l)| x.rem_euclid(*l))
                .collect(),
            None => p.to_vec(),
        })
    }
}

/// `out = J v` for a vector of even length; no dimension checks.
#[inline]
pub(crate) fn apply_j_into(v: &[f64], out: &mut [f64]) {
    let n = v.len() / 2;
    for j in 0..n {
        out[j] = -v[n + j];
        out[n + j] = v[j];
    }
}

/// Euclidean inner product summed as `x`-block plus `y`-block, so that
/// `dot(Ju, Jv) == dot(u, v)` holds bit for bit.
#[inline]
pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len() / 2;
    let x: f64 = (0..n).map(|j| u[j] * v[j]).sum();
    let y: f64 = (n..u.len()).map(|j| u[j] * v[j]).sum();
    x + y
}

/// `⟨Ju, v⟩ = Σ_j (u_{x_j} v_{y_j} - u_{y_j} v_{x_j})`.
#[inline]
pub(crate) fn symplectic(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len() / 2;
    (0..n).map(|j| u[j] * v[n + j] - u[n + j] * v[j]).sum()
}
