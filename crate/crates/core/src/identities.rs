//! Structural identities of immersions into flat `C^n`, evaluated as residual
//! fields (left side minus right side, maximized over free indices per node).
//!
//! Every ambient curvature and ambient Christoffel term is zero here and is
//! dropped. Storage conventions used below:
//!
//! | symbol              | layout            | meaning             |
//! |---------------------|-------------------|---------------------|
//! | `dw[i][k][j]`       | `∇ω`              | `∇_j ω_ik`          |
//! | `ddw[l][i][j][k]`   | `∇∇ω`             | `∇_k ∇_j ω_li`      |
//! | `dh[i][k][j][l]`    | `∇h`              | `∇_l h_ikj`         |
//! | `ddh[r][s][k][j][i]`| `∇∇h`             | `∇_i ∇_j h_rsk`     |
//! | `rup[s][i][l][j]`   | curvature, raised | `R^s_ilj`           |
//! | `rlo[i][j][k][l]`   | curvature, lowered| `R_ijkl`            |
//! | `wu[i][l]`          | raised `ω`        | `ω_i^l`             |
//!
//! | id      | identity                                                                    |
//! |---------|-----------------------------------------------------------------------------|
//! | `P1_1`  | `h_kij = h_ikj + ∇_j ω_ik`                                                  |
//! | `P1_2`  | `∇_k∇_j ω_li - ∇_l∇_j ω_ki - ∇_j∇_i ω_lk = R^s_ilj ω_ks + R^s_ijk ω_ls - R^s_jkl ω_si` |
//! | `P1_3b` | `∇_l h_ikj - ∇_k h_ilj = η^{mn}[ω_n^s(h_mlj h_ski - h_mkj h_sli) + ω_i^s(h_mkj h_nls - h_mlj h_nks)]` |
//! | `P1_3c` | `R_ijkl = η^{mn}(h_mik h_njl - h_mil h_njk)`                                 |
//! | `L1_4`  | `∇_l h_kij - ∇_k h_lij = ∇_j∇_i ω_lk + ω_k^s R_silj + ω_l^s R_sijk + η^{mn}ω_n^s(h_mlj h_ski - h_mkj h_sli)` |
//! | `P2_1a` | `h_ijk = h_jik = h_jki` (Lagrangian)                                        |
//! | `P2_1d` | `R_ijkl = g^{mn}(h_mik h_njl - h_mil h_njk)` (Lagrangian)                    |
//! | `P2_1e` | `dH = 0` (Lagrangian)                                                       |
//! | `P2_2a` | `h_jkl = ⟨J e_jk, e_l⟩` (Lagrangian)                                         |
//! | `P2_2b` | `∂_i ν_s = Γ^l_is ν_l + h_si^l e_l` (Lagrangian)                             |
//! | `P2_8`  | `∇_i∇_j h_rsk = ∇_r∇_s h_ijk + h^n_sk(h_nr^m h_mji - h_ni^m h_mjr) + h^n_jk(h_nr^m h_msi - h_ni^m h_msr) + h^n_js(h_nr^m h_mki - h_ni^m h_mkr)` (Lagrangian) |

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambient::{apply_j_into, dot};
use crate::error::{Error, Result};
use crate::geometry::{
    covariant_derivative, intrinsic_riemann, CurvatureTensor, GeometryState, TOL_LAG,
};
use crate::grid::{Field, ParamGrid, Scheme};
use crate::hodge::exterior_derivative;
use crate::scenarios::Scenario;
use crate::tensor::{TensorField, Variance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IdentityId {
    P1_1,
    P1_2,
    P1_3b,
    P1_3c,
    L1_4,
    P2_1a,
    P2_1d,
    P2_1e,
    P2_2a,
    P2_2b,
    P2_8,
}

impl IdentityId {
    pub const ALL: [IdentityId; 11] = [
        IdentityId::P1_1,
        IdentityId::P1_2,
        IdentityId::P1_3b,
        IdentityId::P1_3c,
        IdentityId::L1_4,
        IdentityId::P2_1a,
        IdentityId::P2_1d,
        IdentityId::P2_1e,
        IdentityId::P2_2a,
        IdentityId::P2_2b,
        IdentityId::P2_8,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IdentityId::P1_1 => "P1_1",
            IdentityId::P1_2 => "P1_2",
            IdentityId::P1_3b => "P1_3b",
            IdentityId::P1_3c => "P1_3c",
            IdentityId::L1_4 => "L1_4",
            IdentityId::P2_1a => "P2_1a",
            IdentityId::P2_1d => "P2_1d",
            IdentityId::P2_1e => "P2_1e",
            IdentityId::P2_2a => "P2_2a",
            IdentityId::P2_2b => "P2_2b",
            IdentityId::P2_8 => "P2_8",
        }
    }

    /// Identities that only hold when the pulled-back Kähler form vanishes.
    pub fn lagrangian_only(self) -> bool {
        matches!(
            self,
            IdentityId::P2_1a
                | IdentityId::P2_1d
                | IdentityId::P2_1e
                | IdentityId::P2_2a
                | IdentityId::P2_2b
                | IdentityId::P2_8
        )
    }

    /// Identities built from rank-4 (or higher) antisymmetric objects; they are
    /// vacuous on curves.
    pub fn vacuous_on_curves(self) -> bool {
        matches!(
            self,
            IdentityId::P1_2
                | IdentityId::P1_3b
                | IdentityId::P1_3c
                | IdentityId::L1_4
                | IdentityId::P2_1d
                | IdentityId::P2_8
        )
    }

    pub fn applies_to(self, scenario: &Scenario) -> bool {
        (!self.lagrangian_only() || scenario.is_lagrangian())
            && !(self.vacuous_on_curves() && scenario.dim() == 1)
    }
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IdentityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IdentityId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown identity {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub id: IdentityId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub sizes: Vec<usize>,
    pub scheme: Scheme,
    pub max_residual: f64,
    /// Mean over nodes of the per-node maximum over free indices.
    pub mean_residual: f64,
    pub lagrangian_only: bool,
}

/// Pass threshold for the identity suite on a grid.
pub fn threshold(grid: &ParamGrid) -> f64 {
    if grid.sizes().iter().all(|&s| s >= 128) {
        1e-8
    } else {
        1e-6
    }
}

/// Lazily computes and caches the derived tensors shared between identities.
pub struct IdentityEvaluator<'a> {
    state: &'a GeometryState,
    d_omega: OnceLock<TensorField>,
    dd_omega: OnceLock<TensorField>,
    d_h: OnceLock<TensorField>,
    dd_h: OnceLock<TensorField>,
    curvature: OnceLock<CurvatureTensor>,
}

fn cached<T>(cell: &OnceLock<T>, init: impl FnOnce() -> Result<T>) -> Result<&T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = init()?;
    Ok(cell.get_or_init(|| v))
}

const CO: Variance = Variance::Covariant;

impl<'a> IdentityEvaluator<'a> {
    pub fn new(state: &'a GeometryState) -> Self {
        Self {
            state,
            d_omega: OnceLock::new(),
            dd_omega: OnceLock::new(),
            d_h: OnceLock::new(),
            dd_h: OnceLock::new(),
            curvature: OnceLock::new(),
        }
    }

    fn d_omega(&self) -> Result<&TensorField> {
        cached(&self.d_omega, || {
            covariant_derivative(self.state.omega(), &[CO; 2], self.state.gamma())
        })
    }

    fn dd_omega(&self) -> Result<&TensorField> {
        let dw = self.d_omega()?;
        cached(&self.dd_omega, || {
            covariant_derivative(dw, &[CO; 3], self.state.gamma())
        })
    }

    fn d_h(&self) -> Result<&TensorField> {
        cached(&self.d_h, || {
            covariant_derivative(self.state.h(), &[CO; 3], self.state.gamma())
        })
    }

    fn dd_h(&self) -> Result<&TensorField> {
        let dh = self.d_h()?;
        cached(&self.dd_h, || {
            covariant_derivative(dh, &[CO; 4], self.state.gamma())
        })
    }

    fn curvature(&self) -> Result<&CurvatureTensor> {
        cached(&self.curvature, || {
            intrinsic_riemann(self.state.gamma(), self.state.g())
        })
    }

    /// Per-node residual (max over free indices).
    pub fn residual_field(&self, id: IdentityId) -> Result<Field> {
        let st = self.state;
        if id.lagrangian_only() && !st.is_lagrangian() {
            return Err(Error::NotLagrangian {
                omega_max: st.omega_max(),
                tol: TOL_LAG,
            });
        }
        let grid = *st.grid();
        let n = grid.dim();
        let i3 = move |a: usize, b: usize, c: usize| (a * n + b) * n + c;
        let i4 = move |a: usize, b: usize, c: usize, d: usize| ((a * n + b) * n + c) * n + d;
        let i5 = move |a: usize, b: usize, c: usize, d: usize, e: usize| {
            (((a * n + b) * n + c) * n + d) * n + e
        };
        let range = 0..n;
        let quads = move || {
            range.clone().flat_map(move |a| {
                (0..n)
                    .flat_map(move |b| (0..n).flat_map(move |c| (0..n).map(move |d| (a, b, c, d))))
            })
        };

        let values: Vec<f64> = match id {
            IdentityId::P1_1 => {
                let dw = self.d_omega()?;
                per_node(&grid, |p| {
                    let h = st.h().node(p);
                    let dw = dw.node(p);
                    let mut worst: f64 = 0.0;
                    for k in 0..n {
                        for i in 0..n {
                            for j in 0..n {
                                let r = h[i3(k, i, j)] - h[i3(i, k, j)] - dw[i3(i, k, j)];
                                worst = worst.max(r.abs());
                            }
                        }
                    }
                    worst
                })
            }
            IdentityId::P1_2 => {
                let ddw = self.dd_omega()?;
                let rup = &self.curvature()?.raised;
                per_node(&grid, |p| {
                    let ddw = ddw.node(p);
                    let rup = rup.node(p);
                    let w = st.omega().node(p);
                    let w2 = |a: usize, b: usize| w[a * n + b];
                    quads().fold(0.0f64, |worst, (l, i, j, k)| {
                        let lhs = ddw[i4(l, i, j, k)] - ddw[i4(k, i, j, l)] - ddw[i4(l, k, i, j)];
                        let rhs: f64 = (0..n)
                            .map(|s| {
                                rup[i4(s, i, l, j)] * w2(k, s) + rup[i4(s, i, j, k)] * w2(l, s)
                                    - rup[i4(s, j, k, l)] * w2(s, i)
                            })
                            .sum();
                        worst.max((lhs - rhs).abs())
                    })
                })
            }
            IdentityId::P1_3b => {
                let dh = self.d_h()?;
                per_node(&grid, |p| {
                    let dh = dh.node(p);
                    let h = st.h().node(p);
                    let ei = st.eta_inv().node(p);
                    let wu = st.omega_up().node(p);
                    quads().fold(0.0f64, |worst, (i, k, j, l)| {
                        let lhs = dh[i4(i, k, j, l)] - dh[i4(i, l, j, k)];
                        let mut rhs = 0.0;
                        for m in 0..n {
                            for q in 0..n {
                                let e = ei[m * n + q];
                                for s in 0..n {
                                    rhs += e
                                        * (wu[q * n + s]
                                            * (h[i3(m, l, j)] * h[i3(s, k, i)]
                                                - h[i3(m, k, j)] * h[i3(s, l, i)])
                                            + wu[i * n + s]
                                                * (h[i3(m, k, j)] * h[i3(q, l, s)]
                                                    - h[i3(m, l, j)] * h[i3(q, k, s)]));
                                }
                            }
                        }
                        worst.max((lhs - rhs).abs())
                    })
                })
            }
            IdentityId::P1_3c | IdentityId::P2_1d => {
                let rlo = &self.curvature()?.lowered;
                let gauss_metric = if id == IdentityId::P1_3c {
                    st.eta_inv()
                } else {
                    st.g_inv()
                };
                per_node(&grid, |p| {
                    let r = rlo.node(p);
                    let h = st.h().node(p);
                    let c = gauss_metric.node(p);
                    quads().fold(0.0f64, |worst, (i, j, k, l)| {
                        let mut rhs = 0.0;
                        for m in 0..n {
                            for q in 0..n {
                                rhs += c[m * n + q]
                                    * (h[i3(m, i, k)] * h[i3(q, j, l)]
                                        - h[i3(m, i, l)] * h[i3(q, j, k)]);
                            }
                        }
                        worst.max((r[i4(i, j, k, l)] - rhs).abs())
                    })
                })
            }
            IdentityId::L1_4 => {
                let dh = self.d_h()?;
                let ddw = self.dd_omega()?;
                let rlo = &self.curvature()?.lowered;
                per_node(&grid, |p| {
                    let dh = dh.node(p);
                    let ddw = ddw.node(p);
                    let rlo = rlo.node(p);
                    let h = st.h().node(p);
                    let ei = st.eta_inv().node(p);
                    let wu = st.omega_up().node(p);
                    quads().fold(0.0f64, |worst, (k, i, j, l)| {
                        let lhs = dh[i4(k, i, j, l)] - dh[i4(l, i, j, k)];
                        let mut rhs = ddw[i4(l, k, i, j)];
                        for s in 0..n {
                            rhs += wu[k * n + s] * rlo[i4(s, i, l, j)]
                                + wu[l * n + s] * rlo[i4(s, i, j, k)];
                        }
                        for m in 0..n {
                            for q in 0..n {
                                for s in 0..n {
                                    rhs += ei[m * n + q]
                                        * wu[q * n + s]
                                        * (h[i3(m, l, j)] * h[i3(s, k, i)]
                                            - h[i3(m, k, j)] * h[i3(s, l, i)]);
                                }
                            }
                        }
                        worst.max((lhs - rhs).abs())
                    })
                })
            }
            IdentityId::P2_1a => per_node(&grid, |p| {
                let h = st.h().node(p);
                let mut worst: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            worst = worst
                                .max((h[i3(i, j, k)] - h[i3(j, i, k)]).abs())
                                .max((h[i3(i, j, k)] - h[i3(j, k, i)]).abs());
                        }
                    }
                }
                worst
            }),
            IdentityId::P2_1e => {
                let dh = exterior_derivative(st.mean_curvature())?;
                per_node(&grid, |p| {
                    dh.node(p).iter().fold(0.0f64, |w, v| w.max(v.abs()))
                })
            }
            IdentityId::P2_2a => {
                let frame = st.frame();
                per_node(&grid, |p| {
                    let h = st.h().node(p);
                    let mut je = vec![0.0; 2 * n];
                    let mut worst: f64 = 0.0;
                    for j in 0..n {
                        for k in 0..n {
                            apply_j_into(frame.edd(p, j, k), &mut je);
                            for l in 0..n {
                                let r = h[i3(j, k, l)] - dot(&je, frame.e(p, l));
                                worst = worst.max(r.abs());
                            }
                        }
                    }
                    worst
                })
            }
            IdentityId::P2_2b => {
                let orders: Vec<[usize; 2]> = (0..n)
                    .map(|a| {
                        let mut o = [0; 2];
                        o[a] = 1;
                        o
                    })
                    .collect();
                let dnu = grid.derivatives(st.nu(), &orders)?;
                let m = 2 * n;
                let frame = st.frame();
                per_node(&grid, |p| {
                    let gam = st.gamma().node(p);
                    let h = st.h().node(p);
                    let gi = st.g_inv().node(p);
                    let mut worst: f64 = 0.0;
                    for i in 0..n {
                        for s in 0..n {
                            let mut r = dnu[i].node(p)[s * m..(s + 1) * m].to_vec();
                            for l in 0..n {
                                let c = gam[i3(l, i, s)];
                                for (a, v) in st.nu_vec(p, l).iter().enumerate() {
                                    r[a] -= c * v;
                                }
                                // h_si^l = h_sim g^{ml}
                                let c: f64 = (0..n).map(|q| h[i3(s, i, q)] * gi[q * n + l]).sum();
                                for (a, v) in frame.e(p, l).iter().enumerate() {
                                    r[a] -= c * v;
                                }
                            }
                            worst = r.iter().fold(worst, |w, v| w.max(v.abs()));
                        }
                    }
                    worst
                })
            }
            IdentityId::P2_8 => {
                let ddh = self.dd_h()?;
                per_node(&grid, |p| {
                    let ddh = ddh.node(p);
                    let h = st.h().node(p);
                    let gi = st.g_inv().node(p);
                    // hu[n][s][k] = g^{np} h_psk, hd[n][r][m] = h_nrp g^{pm}
                    let mut hu = vec![0.0; n * n * n];
                    let mut hd = vec![0.0; n * n * n];
                    for a in 0..n {
                        for b in 0..n {
                            for c in 0..n {
                                for q in 0..n {
                                    hu[i3(a, b, c)] += gi[a * n + q] * h[i3(q, b, c)];
                                    hd[i3(a, b, c)] += h[i3(a, b, q)] * gi[q * n + c];
                                }
                            }
                        }
                    }
                    let mut worst: f64 = 0.0;
                    for (r, s, k, j) in quads() {
                        for i in 0..n {
                            let lhs = ddh[i5(r, s, k, j, i)] - ddh[i5(i, j, k, s, r)];
                            let mut rhs = 0.0;
                            for q in 0..n {
                                for m in 0..n {
                                    let a = hd[i3(q, r, m)];
                                    let b = hd[i3(q, i, m)];
                                    rhs += hu[i3(q, s, k)]
                                        * (a * h[i3(m, j, i)] - b * h[i3(m, j, r)])
                                        + hu[i3(q, j, k)]
                                            * (a * h[i3(m, s, i)] - b * h[i3(m, s, r)])
                                        + hu[i3(q, j, s)]
                                            * (a * h[i3(m, k, i)] - b * h[i3(m, k, r)]);
                                }
                            }
                            worst = worst.max((lhs - rhs).abs());
                        }
                    }
                    worst
                })
            }
        };
        Field::new(grid, 1, values)
    }

    pub fn evaluate(&self, id: IdentityId) -> Result<ResidualReport> {
        let field = self.residual_field(id)?;
        let data = field.data();
        let max_residual = data.iter().fold(0.0f64, |m, v| m.max(*v));
        let mean_residual = data.iter().sum::<f64>() / data.len() as f64;
        let grid = self.state.grid();
        Ok(ResidualReport {
            id,
            scenario: None,
            sizes: grid.sizes().to_vec(),
            scheme: grid.scheme(),
            max_residual,
            // The sum can exceed the max by an ulp when all nodes agree.
            mean_residual: mean_residual.min(max_residual),
            lagrangian_only: id.lagrangian_only(),
        })
    }
}

fn per_node(grid: &ParamGrid, f: impl Fn(usize) -> f64 + Sync + Send) -> Vec<f64> {
    (0..grid.node_count()).into_par_iter().map(f).collect()
}

pub fn evaluate_identity(id: IdentityId, state: &GeometryState) -> Result<ResidualReport> {
    IdentityEvaluator::new(state).evaluate(id)
}

/// Evaluate one identity for a scenario on a ladder of cube grids.
pub fn convergence_study(
    id: IdentityId,
    scenario: &Scenario,
    sizes: &[usize],
    scheme: Scheme,
) -> Result<Vec<ResidualReport>> {
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidGrid(
            "convergence sizes must be strictly ascending".into(),
        ));
    }
    sizes
        .iter()
        .map(|&size| {
            let grid = ParamGrid::cube(scenario.dim(), size, scheme)?;
            let state = GeometryState::build(&scenario.immersion(&grid)?)?;
            let mut report = evaluate_identity(id, &state)?;
            report.scenario = Some(scenario.to_string());
            Ok(report)
        })
        .collect()
}

/// Whether residuals never grow along the ladder, treating anything at or
/// below `floor` as converged to roundoff.
pub fn decays_monotonically(reports: &[ResidualReport], floor: f64) -> bool {
    reports
        .windows(2)
        .all(|w| w[1].max_residual <= w[0].max_residual || w[1].max_residual <= floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::make_scenario;
    use serde_json::Value;

    fn state(name: &str, size: usize) -> GeometryState {
        let s = make_scenario(name, &Value::Null).unwrap();
        let grid = ParamGrid::cube(s.dim(), size, Scheme::Spectral).unwrap();
        GeometryState::build(&s.immersion(&grid).unwrap()).unwrap()
    }

    #[test]
    fn clifford_torus_symmetry_is_exact() {
        let st = state("product_torus(1,1)", 32);
        assert!(
            evaluate_identity(IdentityId::P2_1a, &st)
                .unwrap()
                .max_residual
                <= 1e-12
        );
        assert!(
            evaluate_identity(IdentityId::P2_1e, &st)
                .unwrap()
                .max_residual
                <= 1e-13
        );
    }

    #[test]
    fn curves_have_vacuous_rank4_identities() {
        let st = state("ellipse(1,2)", 32);
        for id in [IdentityId::P1_3c, IdentityId::P1_2] {
            assert!(
                evaluate_identity(id, &st).unwrap().max_residual <= 1e-12,
                "{id}"
            );
        }
    }

    #[test]
    fn affine_sheet_codazzi_vanishes() {
        let st = state("affine_sheet", 16);
        assert_eq!(
            evaluate_identity(IdentityId::P1_1, &st)
                .unwrap()
                .max_residual,
            0.0
        );
    }

    #[test]
    fn lagrangian_only_ids_reject_symplectic_data() {
        let st = state("perturbed_lagrangian(0.05)", 16);
        assert!(matches!(
            evaluate_identity(IdentityId::P2_8, &st),
            Err(Error::NotLagrangian { .. })
        ));
    }

    #[test]
    fn graph_fourth_order_identity() {
        let st = state("lagrangian_graph", 64);
        let r = evaluate_identity(IdentityId::P2_8, &st).unwrap();
        assert!(r.max_residual <= 1e-5, "{r:?}");
        assert!(r.max_residual >= r.mean_residual && r.mean_residual >= 0.0);
    }

    #[test]
    fn codazzi_matches_symmetry_on_lagrangian_data() {
        let st = state("lagrangian_graph", 32);
        let a = evaluate_identity(IdentityId::P1_1, &st)
            .unwrap()
            .max_residual;
        let b = evaluate_identity(IdentityId::P2_1a, &st)
            .unwrap()
            .max_residual;
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn ids_parse_and_serialize() {
        assert_eq!("p2_8".parse::<IdentityId>().unwrap(), IdentityId::P2_8);
        assert_eq!(
            serde_json::to_string(&IdentityId::P1_3b).unwrap(),
            "\"P1_3b\""
        );
        assert!("P9".parse::<IdentityId>().is_err());
    }

    #[test]
    fn convergence_ladder_requires_ascending_sizes() {
        let s = make_scenario("ellipse(1,2)", &Value::Null).unwrap();
        assert!(convergence_study(IdentityId::P2_1a, &s, &[32, 16], Scheme::Spectral).is_err());
        let reports = convergence_study(IdentityId::P1_2, &s, &[16, 32], Scheme::Spectral).unwrap();
        assert!(reports.iter().all(|r| r.max_residual <= 1e-12));
    }
}
