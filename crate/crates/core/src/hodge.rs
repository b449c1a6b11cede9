//! Exterior calculus of 0- and 1-forms on the parameter torus with the induced
//! metric: `d`, `d†`, the Laplace–Beltrami operator, Hodge decomposition,
//! loop periods and the potential tracker for flows.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Snapshot;
use crate::geometry::{GeometryOptions, GeometryState};
use crate::grid::{wavenumber, Fft2, Field, ParamGrid, Scheme};
use crate::tensor::TensorField;

/// A rank-1 covariant tensor field `θ_i`.
pub type OneForm = TensorField;

fn unit_orders(n: usize) -> Vec<[usize; 2]> {
    (0..n)
        .map(|a| {
            let mut o = [0; 2];
            o[a] = 1;
            o
        })
        .collect()
}

fn check_one_form(theta: &OneForm) -> Result<()> {
    if theta.rank() != 1 {
        return Err(Error::DimensionMismatch {
            expected: theta.dim(),
            got: theta.field().ncomp(),
        });
    }
    Ok(())
}

fn check_same_grid(a: &ParamGrid, b: &ParamGrid) -> Result<()> {
    if a != b {
        return Err(Error::InvalidGrid(
            "form and state live on different grids".into(),
        ));
    }
    Ok(())
}

/// `(dθ)_ij = ∂_i θ_j - ∂_j θ_i`, exactly antisymmetric.
pub fn exterior_derivative(theta: &OneForm) -> Result<TensorField> {
    check_one_form(theta)?;
    let grid = *theta.grid();
    let n = grid.dim();
    let d = grid.derivatives(theta.field(), &unit_orders(n))?;
    let mut out = Field::zeros(grid, n * n);
    for p in 0..grid.node_count() {
        let o = out.node_mut(p);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = d[i].node(p)[j] - d[j].node(p)[i];
                o[i * n + j] = v;
                o[j * n + i] = -v;
            }
        }
    }
    TensorField::new(out, 2)
}

/// `dφ` for a scalar field.
pub fn gradient(phi: &Field) -> Result<OneForm> {
    if phi.ncomp() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: phi.ncomp(),
        });
    }
    let grid = *phi.grid();
    let n = grid.dim();
    let d = grid.derivatives(phi, &unit_orders(n))?;
    let mut out = Field::zeros(grid, n);
    for p in 0..grid.node_count() {
        for (a, da) in d.iter().enumerate() {
            out.node_mut(p)[a] = da.node(p)[0];
        }
    }
    TensorField::new(out, 1)
}

/// `d†θ = g^{ij}(∂_i θ_j - Γ^k_ij θ_k)`.
pub fn codifferential(theta: &OneForm, state: &GeometryState) -> Result<Field> {
    check_one_form(theta)?;
    check_same_grid(theta.grid(), state.grid())?;
    let grid = *theta.grid();
    let n = grid.dim();
    let d = grid.derivatives(theta.field(), &unit_orders(n))?;
    let mut out = Field::zeros(grid, 1);
    for p in 0..grid.node_count() {
        let gi = state.g_inv().node(p);
        let gam = state.gamma().node(p);
        let th = theta.node(p);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut cov = d[i].node(p)[j];
                for k in 0..n {
                    cov -= gam[(k * n + i) * n + j] * th[k];
                }
                s += gi[i * n + j] * cov;
            }
        }
        out.node_mut(p)[0] = s;
    }
    Ok(out)
}

/// `Δφ = d†dφ`.
pub fn laplace_beltrami(phi: &Field, state: &GeometryState) -> Result<Field> {
    codifferential(&gradient(phi)?, state)
}

/// `∂_i(√g g^{ij} θ_j)` (no `1/√g` factor).
fn weighted_divergence(theta: &Field, state: &GeometryState) -> Result<Field> {
    let grid = *theta.grid();
    let n = grid.dim();
    let mut flux = Field::zeros(grid, n);
    for p in 0..grid.node_count() {
        let gi = state.g_inv().node(p);
        let w = state.sqrt_det_g().node(p)[0];
        let th = theta.node(p);
        for i in 0..n {
            flux.node_mut(p)[i] = w * (0..n).map(|j| gi[i * n + j] * th[j]).sum::<f64>();
        }
    }
    let d = grid.derivatives(&flux, &unit_orders(n))?;
    let mut out = Field::zeros(grid, 1);
    for p in 0..grid.node_count() {
        out.node_mut(p)[0] = (0..n).map(|i| d[i].node(p)[i]).sum();
    }
    Ok(out)
}

/// `Δφ = (1/√g) ∂_i(√g g^{ij} ∂_j φ)`, the divergence form of the same operator.
pub fn laplace_beltrami_divergence(phi: &Field, state: &GeometryState) -> Result<Field> {
    check_same_grid(phi.grid(), state.grid())?;
    let dphi = gradient(phi)?;
    let mut out = weighted_divergence(dphi.field(), state)?;
    for p in 0..phi.grid().node_count() {
        out.node_mut(p)[0] /= state.sqrt_det_g().node(p)[0];
    }
    Ok(out)
}

/// `θ = ψ + dφ` with `d†ψ = 0` and `φ(basepoint) = 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HodgeSplit {
    pub psi: OneForm,
    pub phi: Field,
    pub basepoint: usize,
    pub iterations: usize,
    /// Final relative residual of the potential solve.
    pub residual: f64,
}

pub const SOLVER_TOL: f64 = 1e-10;

/// Per-axis symbol of the grid's first derivative (imaginary part).
fn derivative_symbol(grid: &ParamGrid, axis: usize, j: usize) -> f64 {
    let n = grid.sizes()[axis];
    match grid.scheme() {
        Scheme::Spectral => wavenumber(j, n),
        Scheme::Central4 => {
            let k = if 2 * j <= n {
                j as f64
            } else {
                j as f64 - n as f64
            };
            let h = grid.spacing(axis);
            (8.0 * (k * h).sin() - (2.0 * k * h).sin()) / (6.0 * h)
        }
    }
}

/// Constant-coefficient preconditioner `(-c^{ij} D_i D_j)^+` applied via FFT.
struct FlatPreconditioner {
    fft: Fft2,
    inv_symbol: Vec<f64>,
}

impl FlatPreconditioner {
    fn new(state: &GeometryState) -> Self {
        let grid = *state.grid();
        let n = grid.dim();
        let nodes = grid.node_count();
        let mut c = vec![0.0; n * n];
        for p in 0..nodes {
            let w = state.sqrt_det_g().node(p)[0];
            for (ci, gi) in c.iter_mut().zip(state.g_inv().node(p)) {
                *ci += w * gi / nodes as f64;
            }
        }
        let sizes = grid.sizes();
        let full = [sizes[0], sizes.get(1).copied().unwrap_or(1)];
        let inv_symbol = (0..nodes)
            .map(|p| {
                let idx = grid.multi_index(p);
                let d: Vec<f64> = (0..n)
                    .map(|a| derivative_symbol(&grid, a, idx[a]))
                    .collect();
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += c[i * n + j] * d[i] * d[j];
                    }
                }
                if s > 1e-12 {
                    1.0 / (s * nodes as f64)
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            fft: Fft2::new(full),
            inv_symbol,
        }
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = r.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.fft.forward(&mut buf);
        for (z, s) in buf.iter_mut().zip(&self.inv_symbol) {
            *z *= *s;
        }
        self.fft.inverse(&mut buf);
        buf.iter().map(|z| z.re).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `Δφ = d†θ` by preconditioned conjugate gradients on the symmetric
/// form `-∂_i(√g g^{ij} ∂_j φ) = -∂_i(√g g^{ij} θ_j)`, then split off `ψ`.
pub fn hodge_decompose(
    theta: &OneForm,
    state: &GeometryState,
    basepoint: usize,
) -> Result<HodgeSplit> {
    check_one_form(theta)?;
    check_same_grid(theta.grid(), state.grid())?;
    let grid = *theta.grid();
    let nodes = grid.node_count();
    if basepoint >= nodes {
        return Err(Error::InvalidParameter(format!(
            "basepoint {basepoint} outside grid of {nodes} nodes"
        )));
    }
    let max_side = grid.sizes().iter().copied().max().unwrap_or(1);
    let cap = 10 * max_side * max_side;

    let apply_a = |x: &[f64]| -> Result<Vec<f64>> {
        let f = Field::new(grid, 1, x.to_vec())?;
        let d = gradient(&f)?;
        Ok(weighted_divergence(d.field(), state)?
            .into_data()
            .into_iter()
            .map(|v| -v)
            .collect())
    };
    let mut b: Vec<f64> = weighted_divergence(theta.field(), state)?
        .into_data()
        .into_iter()
        .map(|v| -v)
        .collect();
    // A divergence integrates to zero; drop the roundoff mean so b lies in
    // the range of the operator.
    let mean = b.iter().sum::<f64>() / nodes as f64;
    b.iter_mut().for_each(|v| *v -= mean);
    let b_norm = dot(&b, &b).sqrt();
    // Residual level reachable in floating point: differentiating the flux
    // amplifies its roundoff by about the largest wavenumber.
    let weight = (0..nodes)
        .map(|p| {
            let w = state.sqrt_det_g().node(p)[0];
            state
                .g_inv()
                .node(p)
                .iter()
                .fold(0.0f64, |m, v| m.max(w * v.abs()))
        })
        .fold(0.0f64, f64::max);
    let floor = 100.0
        * f64::EPSILON
        * max_side as f64
        * weight
        * dot(theta.field().data(), theta.field().data()).sqrt();
    let precond = FlatPreconditioner::new(state);

    let mut x = vec![0.0; nodes];
    let mut iterations = 0;
    let mut rel = 0.0;
    if b_norm > floor {
        let mut r = b.clone();
        let mut z = precond.apply(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        loop {
            let r_norm = dot(&r, &r).sqrt();
            rel = r_norm / b_norm;
            if rel <= SOLVER_TOL || r_norm <= floor {
                break;
            }
            if iterations >= cap || !rel.is_finite() {
                return Err(Error::SolverDivergence {
                    iterations,
                    residual: rel,
                });
            }
            let ap = apply_a(&p)?;
            let alpha = rz / dot(&p, &ap);
            for k in 0..nodes {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            z = precond.apply(&r);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..nodes {
                p[k] = z[k] + beta * p[k];
            }
            iterations += 1;
        }
    }
    let shift = x[basepoint];
    for v in &mut x {
        *v -= shift;
    }
    let phi = Field::new(grid, 1, x)?;
    let dphi = gradient(&phi)?;
    let psi = TensorField::new(theta.field().lin_comb(1.0, dphi.field(), -1.0)?, 1)?;
    Ok(HodgeSplit {
        psi,
        phi,
        basepoint,
        iterations,
        residual: rel,
    })
}

/// `∫_0^{2π} θ_k dx^k` along the coordinate line through node `through`.
pub fn loop_periods_through(theta: &OneForm, through: usize) -> Result<Vec<f64>> {
    check_one_form(theta)?;
    let grid = *theta.grid();
    let n = grid.dim();
    let base = grid.multi_index(through);
    Ok((0..n)
        .map(|k| {
            let size = grid.sizes()[k];
            let sum: f64 = (0..size)
                .map(|j| {
                    let mut idx = base;
                    idx[k] = j;
                    theta.node(grid.node_index(idx))[k]
                })
                .sum();
            sum * 2.0 * PI / size as f64
        })
        .collect())
}

/// Periods along the coordinate loops through the origin node.
pub fn loop_periods(theta: &OneForm) -> Result<Vec<f64>> {
    loop_periods_through(theta, 0)
}

/// One entry of [`potential_track`].
#[derive(Clone, Debug, Serialize)]
pub struct PotentialSample {
    pub t: f64,
    pub periods: Vec<f64>,
    /// `max_k |period_k(t) - period_k(0)|`.
    pub period_drift: f64,
    /// `max |ψ|` over nodes and components.
    pub psi_max: f64,
    /// `max |∂_t φ - Δφ - mean(∂_t φ - Δφ)|`, centered in time; only at
    /// interior snapshots.
    pub heat_defect: Option<f64>,
    pub split: HodgeSplit,
}

/// Decompose the mean curvature form at every snapshot and check the heat
/// equation satisfied by its potential.
pub fn potential_track(snapshots: &[Snapshot], basepoint: usize) -> Result<Vec<PotentialSample>> {
    let opts = GeometryOptions::default();
    let mut out: Vec<PotentialSample> = Vec::with_capacity(snapshots.len());
    let mut laplacians = Vec::with_capacity(snapshots.len());
    for snap in snapshots {
        let state = GeometryState::build_with(&snap.immersion, &opts)?;
        let h = state.mean_curvature();
        let split = hodge_decompose(h, &state, basepoint)?;
        laplacians.push(laplace_beltrami(&split.phi, &state)?);
        let periods = loop_periods(h)?;
        let period_drift = match out.first() {
            Some(first) => periods
                .iter()
                .zip(&first.periods)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())),
            None => 0.0,
        };
        out.push(PotentialSample {
            t: snap.t,
            periods,
            period_drift,
            psi_max: split.psi.max_abs(),
            heat_defect: None,
            split,
        });
    }
    for k in 1..out.len().saturating_sub(1) {
        let dt_prev = out[k].t - out[k - 1].t;
        let dt_next = out[k + 1].t - out[k].t;
        if (dt_prev - dt_next).abs() > 1e-9 * dt_prev.abs().max(dt_next.abs()) {
            return Err(Error::NonUniformSnapshots { index: k });
        }
        let nodes = out[k].split.phi.data().len();
        let defect: Vec<f64> = (0..nodes)
            .map(|p| {
                let dphi = (out[k + 1].split.phi.data()[p] - out[k - 1].split.phi.data()[p])
                    / (dt_prev + dt_next);
                dphi - laplacians[k].data()[p]
            })
            .collect();
        let mean = defect.iter().sum::<f64>() / nodes as f64;
        out[k].heat_defect = Some(defect.iter().fold(0.0f64, |m, d| m.max((d - mean).abs())));
    }
    Ok(out)
}
