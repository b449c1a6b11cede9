//! Coordinate tensor fields over the parameter grid.
//!
//! A rank-`r` tensor on an `n`-dimensional grid holds `n^r` components per node,
//! row-major in its indices (`T[a][b][c]` at offset `(a*n + b)*n + c`). Every
//! index is covariant unless a doc comment says otherwise. Layouts used across
//! the crate:
//!
//! | quantity          | indices      | meaning                       |
//! |-------------------|--------------|-------------------------------|
//! | `g`, `omega`, ... | `[i][j]`     | `g_ij`, `ω_ij`                |
//! | `h`               | `[k][i][j]`  | `h_kij`                       |
//! | Christoffels      | `[k][i][j]`  | `Γ^k_ij`                      |
//! | `∇T`              | `[..][j]`    | derivative index appended     |
//! | `∇∇T`             | `[..][j][k]` | `∇_k ∇_j T`, outer index last |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, ParamGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variance {
    Covariant,
    Contravariant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorField {
    rank: usize,
    field: Field,
}

impl TensorField {
    pub fn new(field: Field, rank: usize) -> Result<Self> {
        let n = field.grid().dim();
        let expected = n.pow(rank as u32);
        if field.ncomp() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: field.ncomp(),
            });
        }
        Ok(Self { rank, field })
    }

    pub fn zeros(grid: ParamGrid, rank: usize) -> Self {
        let n = grid.dim();
        Self {
            rank,
            field: Field::zeros(grid, n.pow(rank as u32).max(1)),
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.field.grid().dim()
    }

    pub fn grid(&self) -> &ParamGrid {
        self.field.grid()
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn into_field(self) -> Field {
        self.field
    }

    pub fn node(&self, p: usize) -> &[f64] {
        self.field.node(p)
    }

    pub fn node_mut(&mut self, p: usize) -> &mut [f64] {
        self.field.node_mut(p)
    }

    pub fn get(&self, p: usize, idx: &[usize]) -> f64 {
        self.field.node(p)[flat_index(self.dim(), idx)]
    }

    pub fn max_abs(&self) -> f64 {
        self.field.max_abs()
    }
}

pub fn flat_index(n: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

/// Iterate over all multi-indices of the given rank in row-major order.
pub fn multi_indices(n: usize, rank: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = n.pow(rank as u32);
    (0..total).map(move |mut f| {
        let mut idx = vec![0; rank];
        for s in (0..rank).rev() {
            idx[s] = f % n;
            f /= n;
        }
        idx
    })
}

/// Determinant of an `n × n` matrix, `n ≤ 2`.
pub(crate) fn det(n: usize, m: &[f64]) -> f64 {
    match n {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        _ => unreachable!("dimension {n} not supported"),
    }
}

/// Inverse of a symmetric `n × n` matrix, `n ≤ 2`; returned symmetric.
pub(crate) fn inverse_sym(n: usize, m: &[f64]) -> Vec<f64> {
    match n {
        1 => vec![1.0 / m[0]],
        2 => {
            let d = det(2, m);
            let off = -0.5 * (m[1] + m[2]) / d;
            vec![m[3] / d, off, off, m[0] / d]
        }
        _ => unreachable!("dimension {n} not supported"),
    }
}

/// Smallest eigenvalue of a symmetric `n × n` matrix, `n ≤ 2`.
pub(crate) fn min_eig_sym(n: usize, m: &[f64]) -> f64 {
    match n {
        1 => m[0],
        2 => {
            let a = m[0];
            let d = m[3];
            let b = 0.5 * (m[1] + m[2]);
            let mean = 0.5 * (a + d);
            let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            mean - r
        }
        _ => unreachable!("dimension {n} not supported"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_row_major() {
        assert_eq!(flat_index(2, &[1, 0, 1]), 5);
        let all: Vec<_> = multi_indices(2, 2).collect();
        assert_eq!(all, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(multi_indices(2, 0).count(), 1);
    }

    #[test]
    fn small_matrix_helpers() {
        let m = [2.0, 1.0, 1.0, 3.0];
        let inv = inverse_sym(2, &m);
        assert!((inv[0] * m[0] + inv[1] * m[2] - 1.0).abs() < 1e-15);
        assert!((inv[0] * m[1] + inv[1] * m[3]).abs() < 1e-15);
        let l = min_eig_sym(2, &m);
        assert!((l - (2.5 - 1.25f64.sqrt())).abs() < 1e-14);
        assert_eq!(det(1, &[4.0]), 4.0);
    }

    #[test]
    fn rank_must_match_components() {
        let g = ParamGrid::new(&[8, 8], crate::grid::Scheme::Spectral).unwrap();
        assert!(TensorField::new(Field::zeros(g, 3), 2).is_err());
        assert!(TensorField::new(Field::zeros(g, 8), 3).is_ok());
    }
}
