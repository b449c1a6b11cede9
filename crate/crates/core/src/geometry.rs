//! Pointwise geometry of an immersion `F: T^n → C^n`.
//!
//! Conventions (all verified by the identity suite):
//! - `e_i = ∂_i F`, `e_ij = ∂_i ∂_j F`; the ambient connection is flat, so
//!   `∇̄_{e_i} e_j = e_ij`.
//! - `ω_ij = ⟨J e_i, e_j⟩`, raised as `ω_i^l = ω_ik g^{kl}`.
//! - `ν_i = N(e_i) = J e_i - ω_i^l e_l`, `η_ij = ⟨ν_i, ν_j⟩ = g_ij + ω_i^l ω_lj`.
//! - `h_kij = -⟨ν_k, e_ij⟩`, `H_i = g^{kl} h_ikl`.
//! - `R^l_kij = ∂_i Γ^l_jk - ∂_j Γ^l_ik + Γ^l_im Γ^m_jk - Γ^l_jm Γ^m_ik` and
//!   `R_lkij = g_lm R^m_kij`.

use std::sync::OnceLock;

use serde::Serialize;

use crate::ambient::{apply_j_into, dot};
use crate::error::{Error, Result};
use crate::grid::{Field, ParamGrid};
use crate::immersion::ImmersionField;
use crate::tensor::{
    det, flat_index, inverse_sym, min_eig_sym, multi_indices, TensorField, Variance,
};

/// States with `max |ω|_g` at or below this are treated as Lagrangian.
pub const TOL_LAG: f64 = 1e-8;
/// `det g` below this is a degenerate immersion.
pub const DET_G_MIN: f64 = 1e-12;
/// Smallest admissible eigenvalue of `η`.
pub const ETA_EIG_MIN: f64 = 1e-10;

/// First and second parameter derivatives of an immersion.
#[derive(Clone, Debug, Serialize)]
pub struct Frame {
    /// `[i][α]`: `e_i^α`.
    e: Field,
    /// `[i][j][α]`: `e_ij^α`, stored in full and exactly symmetric in `(i, j)`.
    edd: Field,
}

impl Frame {
    pub fn grid(&self) -> &ParamGrid {
        self.e.grid()
    }

    pub fn dim(&self) -> usize {
        self.grid().dim()
    }

    pub fn ambient_dim(&self) -> usize {
        2 * self.dim()
    }

    pub fn e(&self, p: usize, i: usize) -> &[f64] {
        let m = self.ambient_dim();
        &self.e.node(p)[i * m..(i + 1) * m]
    }

    pub fn edd(&self, p: usize, i: usize, j: usize) -> &[f64] {
        let m = self.ambient_dim();
        let n = self.dim();
        &self.edd.node(p)[(i * n + j) * m..(i * n + j + 1) * m]
    }

    pub fn e_field(&self) -> &Field {
        &self.e
    }

    pub fn edd_field(&self) -> &Field {
        &self.edd
    }
}

pub fn build_frame(f: &ImmersionField) -> Result<Frame> {
    let grid = *f.grid();
    let n = grid.dim();
    let m = 2 * n;
    let mut orders: Vec<[usize; 2]> = Vec::new();
    for i in 0..n {
        let mut o = [0; 2];
        o[i] = 1;
        orders.push(o);
    }
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i..n {
            let mut o = [0; 2];
            o[i] += 1;
            o[j] += 1;
            orders.push(o);
            pairs.push((i, j));
        }
    }
    let d = grid.derivatives(f.periodic(), &orders)?;

    let mut e = Field::zeros(grid, n * m);
    let mut edd = Field::zeros(grid, n * n * m);
    for p in 0..grid.node_count() {
        let en = e.node_mut(p);
        for i in 0..n {
            let di = d[i].node(p);
            for a in 0..m {
                en[i * m + a] = f.winding_entry(a, i) + di[a];
            }
        }
        let ed = edd.node_mut(p);
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let dij = d[n + k].node(p);
            for a in 0..m {
                ed[(i * n + j) * m + a] = dij[a];
                ed[(j * n + i) * m + a] = dij[a];
            }
        }
    }
    Ok(Frame { e, edd })
}

/// Induced metric, its inverse and the density `√det g`.
pub fn pullback_metric(frame: &Frame) -> Result<(TensorField, TensorField, Field)> {
    let grid = *frame.grid();
    let n = grid.dim();
    let mut g = Field::zeros(grid, n * n);
    let mut g_inv = Field::zeros(grid, n * n);
    let mut sqrt_det = Field::zeros(grid, 1);
    for p in 0..grid.node_count() {
        let mut gm = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = dot(frame.e(p, i), frame.e(p, j));
                gm[i * n + j] = v;
                gm[j * n + i] = v;
            }
        }
        let d = det(n, &gm);
        if d.is_nan() || d < DET_G_MIN {
            return Err(Error::DegenerateImmersion { node: p, det: d });
        }
        g_inv.node_mut(p).copy_from_slice(&inverse_sym(n, &gm));
        g.node_mut(p).copy_from_slice(&gm);
        sqrt_det.node_mut(p)[0] = d.sqrt();
    }
    Ok((
        TensorField::new(g, 2)?,
        TensorField::new(g_inv, 2)?,
        sqrt_det,
    ))
}

/// `ω_ij = ⟨J e_i, e_j⟩`, antisymmetrized so that `ω_ij = -ω_ji` exactly.
pub fn pullback_symplectic(frame: &Frame) -> TensorField {
    let grid = *frame.grid();
    let n = grid.dim();
    let m = 2 * n;
    let mut out = Field::zeros(grid, n * n);
    let mut je = vec![0.0; m];
    for p in 0..grid.node_count() {
        let mut raw = vec![0.0; n * n];
        for i in 0..n {
            apply_j_into(frame.e(p, i), &mut je);
            for j in 0..n {
                raw[i * n + j] = dot(&je, frame.e(p, j));
            }
        }
        let o = out.node_mut(p);
        for i in 0..n {
            for j in 0..n {
                o[i * n + j] = 0.5 * (raw[i * n + j] - raw[j * n + i]);
            }
        }
    }
    TensorField::new(out, 2).expect("rank 2 layout")
}

/// Index-raising convention for `ω`. Only `Standard` is geometrically
/// consistent; `Flipped` exists so that tests can confirm the consistency
/// checks detect a mis-signed convention.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum OmegaRaising {
    /// `ω_i^l = ω_ik g^{kl}`.
    #[default]
    Standard,
    /// `ω_i^l = ω_ki g^{kl}`.
    Flipped,
}

/// `[i][l]`: `ω_i^l` under the given convention.
pub fn raise_omega(
    omega: &TensorField,
    g_inv: &TensorField,
    convention: OmegaRaising,
) -> TensorField {
    let grid = *omega.grid();
    let n = grid.dim();
    let sign = match convention {
        OmegaRaising::Standard => 1.0,
        OmegaRaising::Flipped => -1.0,
    };
    let mut out = Field::zeros(grid, n * n);
    for p in 0..grid.node_count() {
        let w = omega.node(p);
        let gi = g_inv.node(p);
        let o = out.node_mut(p);
        for i in 0..n {
            for l in 0..n {
                o[i * n + l] = sign * (0..n).map(|k| w[i * n + k] * gi[k * n + l]).sum::<f64>();
            }
        }
    }
    TensorField::new(out, 2).expect("rank 2 layout")
}

/// `ν_i = N(e_i) = J e_i - ω_i^l e_l`; layout `[i][α]`.
pub fn normal_map(frame: &Frame, g_inv: &TensorField, omega: &TensorField) -> Field {
    normal_map_with(frame, &raise_omega(omega, g_inv, OmegaRaising::Standard))
}

fn normal_map_with(frame: &Frame, omega_up: &TensorField) -> Field {
    let grid = *frame.grid();
    let n = grid.dim();
    let m = 2 * n;
    let mut nu = Field::zeros(grid, n * m);
    let mut je = vec![0.0; m];
    for p in 0..grid.node_count() {
        let wu = omega_up.node(p);
        for i in 0..n {
            apply_j_into(frame.e(p, i), &mut je);
            for l in 0..n {
                let c = wu[i * n + l];
                if c != 0.0 {
                    for (a, v) in frame.e(p, l).iter().enumerate() {
                        je[a] -= c * v;
                    }
                }
            }
            nu.node_mut(p)[i * m..(i + 1) * m].copy_from_slice(&je);
        }
    }
    nu
}

/// `ν_i = J e_i`, valid on Lagrangian states.
fn normal_map_lagrangian(frame: &Frame) -> Field {
    let grid = *frame.grid();
    let n = grid.dim();
    let m = 2 * n;
    let mut nu = Field::zeros(grid, n * m);
    for p in 0..grid.node_count() {
        for i in 0..n {
            let mut je = vec![0.0; m];
            apply_j_into(frame.e(p, i), &mut je);
            nu.node_mut(p)[i * m..(i + 1) * m].copy_from_slice(&je);
        }
    }
    nu
}

/// `η_ij = g_ij + ω_i^l ω_lj` and its inverse.
pub fn eta_tensor(
    g: &TensorField,
    g_inv: &TensorField,
    omega: &TensorField,
) -> Result<(TensorField, TensorField)> {
    eta_tensor_with(g, omega, &raise_omega(omega, g_inv, OmegaRaising::Standard))
}

fn eta_tensor_with(
    g: &TensorField,
    omega: &TensorField,
    omega_up: &TensorField,
) -> Result<(TensorField, TensorField)> {
    let grid = *g.grid();
    let n = grid.dim();
    let mut eta = Field::zeros(grid, n * n);
    let mut eta_inv = Field::zeros(grid, n * n);
    for p in 0..grid.node_count() {
        let gm = g.node(p);
        let w = omega.node(p);
        let wu = omega_up.node(p);
        let mut e = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                e[i * n + j] =
                    gm[i * n + j] + (0..n).map(|l| wu[i * n + l] * w[l * n + j]).sum::<f64>();
            }
        }
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (e[i * n + j] + e[j * n + i]);
                e[i * n + j] = s;
                e[j * n + i] = s;
            }
        }
        let lmin = min_eig_sym(n, &e);
        if lmin.is_nan() || lmin <= ETA_EIG_MIN {
            return Err(Error::NIsomorphismFailure {
                node: p,
                min_eig: lmin,
            });
        }
        eta_inv.node_mut(p).copy_from_slice(&inverse_sym(n, &e));
        eta.node_mut(p).copy_from_slice(&e);
    }
    Ok((TensorField::new(eta, 2)?, TensorField::new(eta_inv, 2)?))
}

/// `h_kij = -⟨ν_k, e_ij⟩`, symmetric in `(i, j)` exactly.
pub fn second_fundamental(frame: &Frame, nu: &Field) -> TensorField {
    let grid = *frame.grid();
    let n = grid.dim();
    let m = 2 * n;
    let mut h = Field::zeros(grid, n * n * n);
    for p in 0..grid.node_count() {
        let nn = nu.node(p);
        let out = h.node_mut(p);
        for k in 0..n {
            let nk = &nn[k * m..(k + 1) * m];
            for i in 0..n {
                for j in i..n {
                    let v = -dot(nk, frame.edd(p, i, j));
                    out[(k * n + i) * n + j] = v;
                    out[(k * n + j) * n + i] = v;
                }
            }
        }
    }
    TensorField::new(h, 3).expect("rank 3 layout")
}

/// Mean curvature form `H_i = g^{kl} h_ikl`.
pub fn mean_curvature_form(g_inv: &TensorField, h: &TensorField) -> TensorField {
    let grid = *h.grid();
    let n = grid.dim();
    let mut out = Field::zeros(grid, n);
    for p in 0..grid.node_count() {
        let gi = g_inv.node(p);
        let hn = h.node(p);
        for i in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                for l in 0..n {
                    s += gi[k * n + l] * hn[(i * n + k) * n + l];
                }
            }
            out.node_mut(p)[i] = s;
        }
    }
    TensorField::new(out, 1).expect("rank 1 layout")
}

/// `Γ^k_ij = ½ g^{kl} (∂_i g_jl + ∂_j g_il - ∂_l g_ij)` from grid derivatives of `g`.
pub fn christoffels(g: &TensorField, g_inv: &TensorField) -> Result<TensorField> {
    let grid = *g.grid();
    let n = grid.dim();
    let orders: Vec<[usize; 2]> = (0..n)
        .map(|a| {
            let mut o = [0; 2];
            o[a] = 1;
            o
        })
        .collect();
    let dg = grid.derivatives(g.field(), &orders)?;
    let mut out = Field::zeros(grid, n * n * n);
    for p in 0..grid.node_count() {
        let gi = g_inv.node(p);
        // d(l, i, j) = ∂_l g_ij
        let d = |l: usize, i: usize, j: usize| dg[l].node(p)[i * n + j];
        let o = out.node_mut(p);
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += gi[k * n + l] * (d(i, j, l) + d(j, i, l) - d(l, i, j));
                    }
                    o[(k * n + i) * n + j] = 0.5 * s;
                    o[(k * n + j) * n + i] = 0.5 * s;
                }
            }
        }
    }
    TensorField::new(out, 3)
}

/// Covariant derivative of a coordinate tensor; the derivative index is
/// appended last. Covariant slots subtract one `Γ` contraction each,
/// contravariant slots add one.
pub fn covariant_derivative(
    t: &TensorField,
    signature: &[Variance],
    gamma: &TensorField,
) -> Result<TensorField> {
    let r = t.rank();
    if signature.len() != r {
        return Err(Error::SignatureMismatch {
            signature: signature.len(),
            rank: r,
        });
    }
    let grid = *t.grid();
    let n = grid.dim();
    let orders: Vec<[usize; 2]> = (0..n)
        .map(|a| {
            let mut o = [0; 2];
            o[a] = 1;
            o
        })
        .collect();
    let dt = grid.derivatives(t.field(), &orders)?;
    let ncomp_in = n.pow(r as u32);
    let mut out = Field::zeros(grid, ncomp_in * n);
    let indices: Vec<Vec<usize>> = multi_indices(n, r).collect();
    for p in 0..grid.node_count() {
        let tn = t.node(p);
        let gm = gamma.node(p);
        let o = out.node_mut(p);
        for idx in &indices {
            let fi = flat_index(n, idx);
            for j in 0..n {
                let mut v = dt[j].node(p)[fi];
                for (s, var) in signature.iter().enumerate() {
                    let mut moved = idx.clone();
                    for q in 0..n {
                        moved[s] = q;
                        let tq = tn[flat_index(n, &moved)];
                        match var {
                            Variance::Covariant => v -= gm[(q * n + j) * n + idx[s]] * tq,
                            Variance::Contravariant => v += gm[(idx[s] * n + j) * n + q] * tq,
                        }
                    }
                }
                o[fi * n + j] = v;
            }
        }
    }
    TensorField::new(out, r + 1)
}

/// Intrinsic Riemann tensor in both index positions.
#[derive(Clone, Debug, Serialize)]
pub struct CurvatureTensor {
    /// `[l][k][i][j]`: `R^l_kij`.
    pub raised: TensorField,
    /// `[l][k][i][j]`: `R_lkij = g_lm R^m_kij`.
    pub lowered: TensorField,
}

pub fn intrinsic_riemann(gamma: &TensorField, g: &TensorField) -> Result<CurvatureTensor> {
    let grid = *gamma.grid();
    let n = grid.dim();
    let orders: Vec<[usize; 2]> = (0..n)
        .map(|a| {
            let mut o = [0; 2];
            o[a] = 1;
            o
        })
        .collect();
    let dgam = grid.derivatives(gamma.field(), &orders)?;
    let n4 = n * n * n * n;
    let mut raised = Field::zeros(grid, n4);
    let mut lowered = Field::zeros(grid, n4);
    let i3 = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let i4 = |a: usize, b: usize, c: usize, d: usize| ((a * n + b) * n + c) * n + d;
    for p in 0..grid.node_count() {
        let gm = gamma.node(p);
        let up = raised.node_mut(p);
        for l in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut v = dgam[i].node(p)[i3(l, j, k)] - dgam[j].node(p)[i3(l, i, k)];
                        for m in 0..n {
                            v += gm[i3(l, i, m)] * gm[i3(m, j, k)]
                                - gm[i3(l, j, m)] * gm[i3(m, i, k)];
                        }
                        up[i4(l, k, i, j)] = v;
                    }
                }
            }
        }
        let up = raised.node(p).to_vec();
        let gn = g.node(p);
        let lo = lowered.node_mut(p);
        for l in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        lo[i4(l, k, i, j)] =
                            (0..n).map(|m| gn[l * n + m] * up[i4(m, k, i, j)]).sum();
                    }
                }
            }
        }
    }
    Ok(CurvatureTensor {
        raised: TensorField::new(raised, 4)?,
        lowered: TensorField::new(lowered, 4)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometryOptions {
    pub lagrangian_tol: f64,
    /// Use `η = g`, `ν = J e` when the state is Lagrangian within tolerance.
    pub fast_path: bool,
    pub omega_raising: OmegaRaising,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self {
            lagrangian_tol: TOL_LAG,
            fast_path: true,
            omega_raising: OmegaRaising::Standard,
        }
    }
}

/// All pointwise tensors of an immersion at one instant. Immutable once built.
#[derive(Clone, Debug, Serialize)]
pub struct GeometryState {
    frame: Frame,
    g: TensorField,
    g_inv: TensorField,
    sqrt_det_g: Field,
    omega: TensorField,
    omega_up: TensorField,
    eta: TensorField,
    eta_inv: TensorField,
    nu: Field,
    h: TensorField,
    mean_curvature: TensorField,
    /// Built on first use; the flow stepper never needs it.
    #[serde(skip)]
    gamma: OnceLock<TensorField>,
    omega_max: f64,
    lagrangian_path: bool,
}

impl GeometryState {
    pub fn build(f: &ImmersionField) -> Result<Self> {
        Self::build_with(f, &GeometryOptions::default())
    }

    pub fn build_with(f: &ImmersionField, opts: &GeometryOptions) -> Result<Self> {
        let frame = build_frame(f)?;
        let (g, g_inv, sqrt_det_g) = pullback_metric(&frame)?;
        let omega = pullback_symplectic(&frame);
        let omega_max = omega_norm_sq(&omega, &g_inv)
            .data()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.sqrt()));
        let omega_up = raise_omega(&omega, &g_inv, opts.omega_raising);
        let lagrangian_path = opts.fast_path && omega_max <= opts.lagrangian_tol;
        let (nu, eta, eta_inv) = if lagrangian_path {
            (normal_map_lagrangian(&frame), g.clone(), g_inv.clone())
        } else {
            let nu = normal_map_with(&frame, &omega_up);
            let (eta, eta_inv) = eta_tensor_with(&g, &omega, &omega_up)?;
            (nu, eta, eta_inv)
        };
        let h = second_fundamental(&frame, &nu);
        let mean_curvature = mean_curvature_form(&g_inv, &h);
        Ok(Self {
            frame,
            g,
            g_inv,
            sqrt_det_g,
            omega,
            omega_up,
            eta,
            eta_inv,
            nu,
            h,
            mean_curvature,
            gamma: OnceLock::new(),
            omega_max,
            lagrangian_path,
        })
    }

    pub fn grid(&self) -> &ParamGrid {
        self.frame.grid()
    }

    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn g(&self) -> &TensorField {
        &self.g
    }

    pub fn g_inv(&self) -> &TensorField {
        &self.g_inv
    }

    pub fn sqrt_det_g(&self) -> &Field {
        &self.sqrt_det_g
    }

    pub fn omega(&self) -> &TensorField {
        &self.omega
    }

    /// `[i][l]`: `ω_i^l`.
    pub fn omega_up(&self) -> &TensorField {
        &self.omega_up
    }

    pub fn eta(&self) -> &TensorField {
        &self.eta
    }

    pub fn eta_inv(&self) -> &TensorField {
        &self.eta_inv
    }

    /// `[i][α]`: `ν_i^α`.
    pub fn nu(&self) -> &Field {
        &self.nu
    }

    pub fn h(&self) -> &TensorField {
        &self.h
    }

    pub fn mean_curvature(&self) -> &TensorField {
        &self.mean_curvature
    }

    pub fn gamma(&self) -> &TensorField {
        self.gamma.get_or_init(|| {
            christoffels(&self.g, &self.g_inv).expect("metric lives on the state's grid")
        })
    }

    /// `max_x |ω|_g`.
    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    pub fn is_lagrangian(&self) -> bool {
        self.omega_max <= TOL_LAG
    }

    /// Whether the `η = g` shortcut was taken while building.
    pub fn used_lagrangian_path(&self) -> bool {
        self.lagrangian_path
    }

    pub fn nu_vec(&self, p: usize, i: usize) -> &[f64] {
        let m = 2 * self.dim();
        &self.nu.node(p)[i * m..(i + 1) * m]
    }

    pub fn min_eig_g(&self) -> f64 {
        let n = self.dim();
        (0..self.grid().node_count())
            .map(|p| min_eig_sym(n, self.g.node(p)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Total volume `∫ dμ`.
    pub fn area(&self) -> f64 {
        let one = Field::constant(*self.grid(), &[1.0]);
        self.grid()
            .integrate(&one, &self.sqrt_det_g)
            .expect("√det g is positive on a built state")
    }

    /// `max_{i,j,x} |⟨ν_i, ν_j⟩ - η_ij|`.
    pub fn nu_eta_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for p in 0..self.grid().node_count() {
            for i in 0..n {
                for j in 0..n {
                    let d = dot(self.nu_vec(p, i), self.nu_vec(p, j)) - self.eta.node(p)[i * n + j];
                    worst = worst.max(d.abs());
                }
            }
        }
        worst
    }

    /// `max_{i,j,x} |⟨ν_i, e_j⟩|`.
    pub fn nu_tangency_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for p in 0..self.grid().node_count() {
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max(dot(self.nu_vec(p, i), self.frame.e(p, j)).abs());
                }
            }
        }
        worst
    }

    /// Max over nodes and indices of `|e_ij - Γ^k_ij e_k + η^{mn} h_mij ν_n|`.
    pub fn gauss_weingarten_residual(&self) -> f64 {
        let n = self.dim();
        let m = 2 * n;
        let mut worst: f64 = 0.0;
        for p in 0..self.grid().node_count() {
            let gm = self.gamma().node(p);
            let ei = self.eta_inv.node(p);
            let hn = self.h.node(p);
            for i in 0..n {
                for j in 0..n {
                    let mut r = self.frame.edd(p, i, j).to_vec();
                    for k in 0..n {
                        let c = gm[(k * n + i) * n + j];
                        for (a, v) in self.frame.e(p, k).iter().enumerate() {
                            r[a] -= c * v;
                        }
                    }
                    for mm in 0..n {
                        for q in 0..n {
                            let c = ei[mm * n + q] * hn[(mm * n + i) * n + j];
                            for (a, v) in self.nu_vec(p, q).iter().enumerate() {
                                r[a] += c * v;
                            }
                        }
                    }
                    worst = r.iter().take(m).fold(worst, |w, v| w.max(v.abs()));
                }
            }
        }
        worst
    }
}

/// Ambient deformation field `-η^{mn} θ_m ν_n` for a one-form `θ`.
pub fn deformation(state: &GeometryState, theta: &TensorField) -> Result<Field> {
    if theta.rank() != 1 || theta.grid() != state.grid() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            got: theta.field().ncomp(),
        });
    }
    let grid = *state.grid();
    let n = grid.dim();
    let m = 2 * n;
    let mut out = Field::zeros(grid, m);
    for p in 0..grid.node_count() {
        let ei = state.eta_inv.node(p);
        let th = theta.node(p);
        let o = out.node_mut(p);
        for nn in 0..n {
            let c: f64 = (0..n).map(|mm| ei[mm * n + nn] * th[mm]).sum();
            for (a, v) in state.nu_vec(p, nn).iter().enumerate() {
                o[a] -= c * v;
            }
        }
    }
    Ok(out)
}

/// Mean curvature flow velocity `-η^{mn} H_m ν_n`.
pub fn mcf_velocity(state: &GeometryState) -> Field {
    deformation(state, &state.mean_curvature).expect("H lives on the state's grid")
}

#[derive(Clone, Debug)]
pub struct Norms {
    /// `|ω|² = g^{ik} g^{jl} ω_ij ω_kl`.
    pub omega_sq: Field,
    /// `|H|² = g^{ij} H_i H_j`.
    pub h_sq: Field,
    pub omega_max: f64,
}

fn omega_norm_sq(omega: &TensorField, g_inv: &TensorField) -> Field {
    let grid = *omega.grid();
    let n = grid.dim();
    let mut out = Field::zeros(grid, 1);
    for p in 0..grid.node_count() {
        let gi = g_inv.node(p);
        let w = omega.node(p);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        s += gi[i * n + k] * gi[j * n + l] * w[i * n + j] * w[k * n + l];
                    }
                }
            }
        }
        out.node_mut(p)[0] = s;
    }
    out
}

pub fn norms(state: &GeometryState) -> Norms {
    let grid = *state.grid();
    let n = grid.dim();
    let omega_sq = omega_norm_sq(&state.omega, &state.g_inv);
    let mut h_sq = Field::zeros(grid, 1);
    for p in 0..grid.node_count() {
        let gi = state.g_inv.node(p);
        let hh = state.mean_curvature.node(p);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += gi[i * n + j] * hh[i] * hh[j];
            }
        }
        h_sq.node_mut(p)[0] = s;
    }
    let omega_max = omega_sq.data().iter().fold(0.0f64, |m, v| m.max(v.sqrt()));
    Norms {
        omega_sq,
        h_sq,
        omega_max,
    }
}
