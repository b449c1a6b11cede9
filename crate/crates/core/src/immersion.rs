use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, ParamGrid};

/// Grid-sampled immersion `F: T^n → R^{2n}`.
///
/// `F(x) = W x + P(x)` where `W` is a constant `2n × n` winding matrix (the
/// lattice translation picked up around each parameter loop) and `P` is
/// periodic. Graphs over the torus such as `F = (x, ∇u)` have `W ≠ 0`; closed
/// curves and product tori have `W = 0`. Derivatives only ever see `P` and the
/// constant columns of `W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImmersionField {
    periodic: Field,
    /// Row-major `[α][i]`.
    winding: Vec<f64>,
}

impl ImmersionField {
    pub fn new(periodic: Field, winding: Vec<f64>) -> Result<Self> {
        let n = periodic.grid().dim();
        if periodic.ncomp() != 2 * n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                got: periodic.ncomp(),
            });
        }
        if winding.len() != 2 * n * n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n * n,
                got: winding.len(),
            });
        }
        Ok(Self { periodic, winding })
    }

    /// Sample a full position map and split off the winding part.
    pub fn sample(
        grid: ParamGrid,
        winding: Vec<f64>,
        mut position: impl FnMut([f64; 2], &mut [f64]),
    ) -> Result<Self> {
        let n = grid.dim();
        let m = 2 * n;
        if winding.len() != m * n {
            return Err(Error::DimensionMismatch {
                expected: m * n,
                got: winding.len(),
            });
        }
        let periodic = Field::from_fn(grid, m, |x, out| {
            position(x, out);
            for (a, o) in out.iter_mut().enumerate() {
                for i in 0..n {
                    *o -= winding[a * n + i] * x[i];
                }
            }
        });
        Self::new(periodic, winding)
    }

    pub fn grid(&self) -> &ParamGrid {
        self.periodic.grid()
    }

    pub fn dim(&self) -> usize {
        self.grid().dim()
    }

    pub fn ambient_dim(&self) -> usize {
        2 * self.dim()
    }

    pub fn periodic(&self) -> &Field {
        &self.periodic
    }

    pub fn winding(&self) -> &[f64] {
        &self.winding
    }

    /// `∂W x / ∂x^i` contribution to `e_i^α`.
    pub fn winding_entry(&self, alpha: usize, i: usize) -> f64 {
        self.winding[alpha * self.dim() + i]
    }

    pub fn position(&self, node: usize) -> Vec<f64> {
        let n = self.dim();
        let x = self.grid().coords(node);
        self.periodic
            .node(node)
            .iter()
            .enumerate()
            .map(|(a, p)| p + (0..n).map(|i| self.winding[a * n + i] * x[i]).sum::<f64>())
            .collect()
    }

    pub fn positions(&self) -> Field {
        let g = *self.grid();
        let mut out = Field::zeros(g, self.ambient_dim());
        for p in 0..g.node_count() {
            out.node_mut(p).copy_from_slice(&self.position(p));
        }
        out
    }

    /// `F + dt · v` for an ambient vector field `v`.
    pub fn displaced(&self, v: &Field, dt: f64) -> Result<Self> {
        Ok(Self {
            periodic: self.periodic.lin_comb(1.0, v, dt)?,
            winding: self.winding.clone(),
        })
    }

    /// Same immersion resampled under another derivative scheme.
    pub fn with_scheme(&self, scheme: crate::grid::Scheme) -> Self {
        let grid = self.grid().with_scheme(scheme);
        Self {
            periodic: Field::new(grid, self.periodic.ncomp(), self.periodic.data().to_vec())
                .expect("same layout"),
            winding: self.winding.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Scheme;

    #[test]
    fn winding_split_roundtrip() {
        let g = ParamGrid::new(&[8, 8], Scheme::Spectral).unwrap();
        let w = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let f = ImmersionField::sample(g, w, |x, o| {
            o[0] = x[0];
            o[1] = x[1];
            o[2] = x[0].sin();
            o[3] = 0.0;
        })
        .unwrap();
        assert!(f.periodic().node(5)[0].abs() < 1e-15);
        let p = f.position(9);
        let x = g.coords(9);
        assert!((p[0] - x[0]).abs() < 1e-15 && (p[2] - x[0].sin()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_shapes() {
        let g = ParamGrid::new(&[8], Scheme::Spectral).unwrap();
        assert!(ImmersionField::new(Field::zeros(g, 3), vec![0.0; 2]).is_err());
        assert!(ImmersionField::new(Field::zeros(g, 2), vec![0.0; 3]).is_err());
    }
}
