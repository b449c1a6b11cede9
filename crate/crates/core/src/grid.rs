//! Uniform periodic parameter grids on `[0, 2π)^n` and sampled fields on them.
//!
//! Nodes are stored row-major: for `n = 2` the node index is `i0 * N1 + i1`.
//! A one-dimensional grid is stored as `[N, 1]` internally.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Fourier differentiation; the Nyquist wavenumber is treated as zero so
    /// that higher derivatives equal repeated first derivatives.
    Spectral,
    /// Fourth-order central differences.
    Central4,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(Scheme::Spectral),
            "central4" => Ok(Scheme::Central4),
            other => Err(Error::InvalidParameter(format!("unknown scheme `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Spectral => "spectral",
            Scheme::Central4 => "central4",
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GridSpec {
    sizes: Vec<usize>,
    scheme: Scheme,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct ParamGrid {
    dim: usize,
    sizes: [usize; 2],
    scheme: Scheme,
}

impl TryFrom<GridSpec> for ParamGrid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        ParamGrid::new(&spec.sizes, spec.scheme)
    }
}

impl From<ParamGrid> for GridSpec {
    fn from(g: ParamGrid) -> Self {
        GridSpec {
            sizes: g.sizes().to_vec(),
            scheme: g.scheme,
        }
    }
}

impl ParamGrid {
    pub fn new(sizes: &[usize], scheme: Scheme) -> Result<Self> {
        if !(1..=2).contains(&sizes.len()) {
            return Err(Error::InvalidGrid(format!(
                "grid dimension must be 1 or 2, got {}",
                sizes.len()
            )));
        }
        for &s in sizes {
            if s < 8 || s % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "nodes per axis must be even and at least 8, got {s}"
                )));
            }
        }
        let mut arr = [1, 1];
        arr[..sizes.len()].copy_from_slice(sizes);
        Ok(Self {
            dim: sizes.len(),
            sizes: arr,
            scheme,
        })
    }

    /// `n`-dimensional grid with `size` nodes per axis.
    pub fn cube(dim: usize, size: usize, scheme: Scheme) -> Result<Self> {
        Self::new(&vec![size; dim], scheme)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes[..self.dim]
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn node_count(&self) -> usize {
        self.sizes[0] * self.sizes[1]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * PI / self.sizes[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    /// Volume element of the trapezoid rule, `Π spacing`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn node_index(&self, idx: [usize; 2]) -> usize {
        idx[0] * self.sizes[1] + idx[1]
    }

    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        [node / self.sizes[1], node % self.sizes[1]]
    }

    /// Parameter coordinates of a node; the unused axis of a 1d grid is 0.
    pub fn coords(&self, node: usize) -> [f64; 2] {
        let [i0, i1] = self.multi_index(node);
        let mut x = [0.0; 2];
        x[0] = 2.0 * PI * i0 as f64 / self.sizes[0] as f64;
        if self.dim > 1 {
            x[1] = 2.0 * PI * i1 as f64 / self.sizes[1] as f64;
        }
        x
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.dim {
            return Err(Error::AxisOutOfRange {
                axis,
                dim: self.dim,
            });
        }
        Ok(())
    }

    fn check_field(&self, f: &Field) -> Result<()> {
        if f.grid != *self {
            return Err(Error::InvalidGrid(
                "field sampled on a different grid".into(),
            ));
        }
        Ok(())
    }

    pub fn partial(&self, f: &Field, axis: usize) -> Result<Field> {
        self.check_axis(axis)?;
        let mut order = [0; 2];
        order[axis] = 1;
        Ok(self.derivatives(f, &[order])?.pop().unwrap())
    }

    pub fn second_partial(&self, f: &Field, i: usize, j: usize) -> Result<Field> {
        self.check_axis(i)?;
        self.check_axis(j)?;
        let mut order = [0; 2];
        order[i] += 1;
        order[j] += 1;
        Ok(self.derivatives(f, &[order])?.pop().unwrap())
    }

    /// Several mixed partial derivatives of one field; `orders[k][a]` is the
    /// number of derivatives along axis `a`. The spectral scheme transforms the
    /// field forward once and shares the spectrum between all requests.
    pub fn derivatives(&self, f: &Field, orders: &[[usize; 2]]) -> Result<Vec<Field>> {
        self.check_field(f)?;
        for o in orders {
            if self.dim == 1 && o[1] > 0 {
                return Err(Error::AxisOutOfRange { axis: 1, dim: 1 });
            }
        }
        match self.scheme {
            Scheme::Spectral => Ok(self.spectral_derivatives(f, orders)),
            Scheme::Central4 => Ok(orders
                .iter()
                .map(|o| self.central_derivative(f, *o))
                .collect()),
        }
    }

    fn spectral_derivatives(&self, f: &Field, orders: &[[usize; 2]]) -> Vec<Field> {
        let nodes = self.node_count();
        let fft = Fft2::new(self.sizes);
        let per_comp: Vec<Vec<Vec<f64>>> = (0..f.ncomp)
            .into_par_iter()
            .map(|c| {
                let mut spec: Vec<Complex64> = (0..nodes)
                    .map(|p| Complex64::new(f.data[p * f.ncomp + c], 0.0))
                    .collect();
                fft.forward(&mut spec);
                orders
                    .iter()
                    .map(|o| {
                        let mut buf = spec.clone();
                        if o[0] + o[1] > 0 {
                            for (p, z) in buf.iter_mut().enumerate() {
                                *z *= self.symbol(p, *o);
                            }
                        }
                        fft.inverse(&mut buf);
                        let scale = 1.0 / nodes as f64;
                        buf.iter().map(|z| z.re * scale).collect()
                    })
                    .collect()
            })
            .collect();
        (0..orders.len())
            .map(|k| {
                let mut data = vec![0.0; nodes * f.ncomp];
                for (c, comp) in per_comp.iter().enumerate() {
                    for (p, v) in comp[k].iter().enumerate() {
                        data[p * f.ncomp + c] = *v;
                    }
                }
                Field {
                    grid: *self,
                    ncomp: f.ncomp,
                    data,
                }
            })
            .collect()
    }

    /// Fourier multiplier `Π_a (i k_a)^{order_a}` at spectral index `p`.
    fn symbol(&self, p: usize, order: [usize; 2]) -> Complex64 {
        let idx = self.multi_index(p);
        let mut z = Complex64::new(1.0, 0.0);
        for a in 0..2 {
            if order[a] == 0 {
                continue;
            }
            let ik = Complex64::new(0.0, wavenumber(idx[a], self.sizes[a]));
            for _ in 0..order[a] {
                z *= ik;
            }
        }
        z
    }

    fn central_derivative(&self, f: &Field, order: [usize; 2]) -> Field {
        let mut out = f.clone();
        for (axis, &k) in order.iter().enumerate() {
            let mut remaining = k;
            while remaining >= 2 {
                out = self.stencil(&out, axis, &[-1.0, 16.0, -30.0, 16.0, -1.0], 12.0, 2);
                remaining -= 2;
            }
            if remaining == 1 {
                out = self.stencil(&out, axis, &[1.0, -8.0, 0.0, 8.0, -1.0], 12.0, 1);
            }
        }
        out
    }

    /// Five-point periodic stencil over offsets `-2..=2` along `axis`, divided
    /// by `denom * h^power`.
    fn stencil(&self, f: &Field, axis: usize, w: &[f64; 5], denom: f64, power: i32) -> Field {
        let h = self.spacing(axis);
        let scale = 1.0 / (denom * h.powi(power));
        let n_axis = self.sizes[axis] as isize;
        let mut out = Field::zeros(*self, f.ncomp);
        for p in 0..self.node_count() {
            let idx = self.multi_index(p);
            for (s, wk) in w.iter().enumerate() {
                if *wk == 0.0 {
                    continue;
                }
                let mut q = idx;
                q[axis] = (idx[axis] as isize + s as isize - 2).rem_euclid(n_axis) as usize;
                let qn = self.node_index(q);
                for c in 0..f.ncomp {
                    out.data[p * f.ncomp + c] += wk * f.data[qn * f.ncomp + c];
                }
            }
            for c in 0..f.ncomp {
                out.data[p * f.ncomp + c] *= scale;
            }
        }
        out
    }

    /// Exponential spectral filter `σ(k) = Π_a exp(-36 (|k_a| / k_nyq)^36)`.
    /// Resolved modes pass unchanged to roundoff; the top few modes near
    /// Nyquist are damped to machine zero.
    pub fn exponential_filter(&self, f: &Field) -> Result<Field> {
        self.check_field(f)?;
        let nodes = self.node_count();
        let fft = Fft2::new(self.sizes);
        let sigma: Vec<f64> = (0..nodes)
            .map(|p| {
                let idx = self.multi_index(p);
                (0..self.dim)
                    .map(|a| {
                        let n = self.sizes[a];
                        let k = if 2 * idx[a] <= n { idx[a] } else { n - idx[a] };
                        let ratio = k as f64 / (n / 2) as f64;
                        (-36.0 * ratio.powi(36)).exp()
                    })
                    .product()
            })
            .collect();
        let comps: Vec<Vec<f64>> = (0..f.ncomp)
            .into_par_iter()
            .map(|c| {
                let mut buf: Vec<Complex64> = (0..nodes)
                    .map(|p| Complex64::new(f.data[p * f.ncomp + c], 0.0))
                    .collect();
                fft.forward(&mut buf);
                for (z, s) in buf.iter_mut().zip(&sigma) {
                    *z *= *s / nodes as f64;
                }
                fft.inverse(&mut buf);
                buf.iter().map(|z| z.re).collect()
            })
            .collect();
        let mut out = Field::zeros(*self, f.ncomp);
        for (c, comp) in comps.iter().enumerate() {
            for (p, v) in comp.iter().enumerate() {
                out.data[p * f.ncomp + c] = *v;
            }
        }
        Ok(out)
    }

    /// Trapezoid rule `Σ f · density · Π spacing` (spectrally accurate for
    /// smooth periodic integrands).
    pub fn integrate(&self, f: &Field, density: &Field) -> Result<f64> {
        self.check_field(f)?;
        self.check_field(density)?;
        if f.ncomp != 1 || density.ncomp != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: f.ncomp.max(density.ncomp),
            });
        }
        let mut sum = 0.0;
        for (node, (a, d)) in f.data.iter().zip(&density.data).enumerate() {
            if d.is_nan() || *d <= 0.0 {
                return Err(Error::NonPositiveDensity { node, value: *d });
            }
            sum += a * d;
        }
        Ok(sum * self.cell_volume())
    }
}

/// Signed wavenumber of DFT index `j` on `n` points, Nyquist mapped to zero.
pub(crate) fn wavenumber(j: usize, n: usize) -> f64 {
    if 2 * j < n {
        j as f64
    } else if 2 * j == n {
        0.0
    } else {
        j as f64 - n as f64
    }
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut p = planner().lock().unwrap();
            (p.plan_fft_forward(n), p.plan_fft_inverse(n))
        })
        .clone()
}

/// Unnormalized 2d complex FFT on a row-major `[s0][s1]` buffer.
pub(crate) struct Fft2 {
    sizes: [usize; 2],
    rows: PlanPair,
    cols: PlanPair,
}

impl Fft2 {
    pub(crate) fn new(sizes: [usize; 2]) -> Self {
        Self {
            sizes,
            rows: plans(sizes[1]),
            cols: plans(sizes[0]),
        }
    }

    pub(crate) fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, true);
    }

    pub(crate) fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, false);
    }

    fn run(&self, buf: &mut [Complex64], forward: bool) {
        let [s0, s1] = self.sizes;
        if s1 > 1 {
            let p = if forward { &self.rows.0 } else { &self.rows.1 };
            p.process(buf);
        }
        let p = if forward { &self.cols.0 } else { &self.cols.1 };
        if s1 == 1 {
            p.process(buf);
            return;
        }
        let mut t = vec![Complex64::new(0.0, 0.0); buf.len()];
        for i in 0..s0 {
            for j in 0..s1 {
                t[j * s0 + i] = buf[i * s1 + j];
            }
        }
        p.process(&mut t);
        for i in 0..s0 {
            for j in 0..s1 {
                buf[i * s1 + j] = t[j * s0 + i];
            }
        }
    }
}

/// Node-major sampled field with `ncomp` values per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field {
    grid: ParamGrid,
    ncomp: usize,
    data: Vec<f64>,
}

/// A field with one component per node.
pub type ScalarField = Field;
/// A field with several components per node (ambient vectors, tensors, ...).
pub type VectorField = Field;

impl Field {
    pub fn new(grid: ParamGrid, ncomp: usize, data: Vec<f64>) -> Result<Self> {
        if ncomp == 0 || data.len() != grid.node_count() * ncomp {
            return Err(Error::DimensionMismatch {
                expected: grid.node_count() * ncomp,
                got: data.len(),
            });
        }
        Ok(Self { grid, ncomp, data })
    }

    pub fn zeros(grid: ParamGrid, ncomp: usize) -> Self {
        Self {
            grid,
            ncomp,
            data: vec![0.0; grid.node_count() * ncomp],
        }
    }

    pub fn constant(grid: ParamGrid, value: &[f64]) -> Self {
        let data = value
            .iter()
            .copied()
            .cycle()
            .take(grid.node_count() * value.len())
            .collect();
        Self {
            grid,
            ncomp: value.len(),
            data,
        }
    }

    /// Sample `f(x, out)` at every node.
    pub fn from_fn(grid: ParamGrid, ncomp: usize, mut f: impl FnMut([f64; 2], &mut [f64])) -> Self {
        let mut out = Self::zeros(grid, ncomp);
        for p in 0..grid.node_count() {
            f(grid.coords(p), &mut out.data[p * ncomp..(p + 1) * ncomp]);
        }
        out
    }

    pub fn scalar_from_fn(grid: ParamGrid, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        Self::from_fn(grid, 1, |x, out| out[0] = f(x))
    }

    pub fn grid(&self) -> &ParamGrid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn node(&self, p: usize) -> &[f64] {
        &self.data[p * self.ncomp..(p + 1) * self.ncomp]
    }

    pub fn node_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.data[p * self.ncomp..(p + 1) * self.ncomp]
    }

    pub fn component(&self, c: usize) -> Field {
        Field {
            grid: self.grid,
            ncomp: 1,
            data: self
                .data
                .iter()
                .skip(c)
                .step_by(self.ncomp)
                .copied()
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        if self.grid != other.grid || self.ncomp != other.ncomp {
            return Err(Error::DimensionMismatch {
                expected: self.data.len(),
                got: other.data.len(),
            });
        }
        Ok(Field {
            grid: self.grid,
            ncomp: self.ncomp,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            ncomp: self.ncomp,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    /// CSV snapshot: one row per node, parameter coordinates then values.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dim = self.grid.dim();
        let mut header: Vec<String> = (1..=dim).map(|a| format!("x{a}")).collect();
        header.extend((0..self.ncomp).map(|c| format!("v{c}")));
        writeln!(w, "{}", header.join(","))?;
        for p in 0..self.grid.node_count() {
            let x = self.grid.coords(p);
            let mut row: Vec<String> = x[..dim].iter().map(|v| format!("{v:.17e}")).collect();
            row.extend(self.node(p).iter().map(|v| format!("{v:.17e}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_err(a: &Field, f: impl Fn([f64; 2]) -> f64) -> f64 {
        (0..a.grid.node_count())
            .map(|p| (a.data[p] - f(a.grid.coords(p))).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_validation() {
        assert!(ParamGrid::new(&[6], Scheme::Spectral).is_err());
        assert!(ParamGrid::new(&[9], Scheme::Spectral).is_err());
        assert!(ParamGrid::new(&[8, 8, 8], Scheme::Spectral).is_err());
        let g = ParamGrid::new(&[16, 8], Scheme::Spectral).unwrap();
        assert_eq!(g.node_count(), 128);
        assert!((g.spacing(1) - PI / 4.0).abs() < 1e-15);
        let x = g.coords(g.node_index([3, 5]));
        assert!((x[0] - 2.0 * PI * 3.0 / 16.0).abs() < 1e-15);
        assert!((x[1] - 2.0 * PI * 5.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn grid_serde_roundtrip() {
        let g = ParamGrid::new(&[16, 32], Scheme::Central4).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"sizes":[16,32],"scheme":"central4"}"#);
        let back: ParamGrid = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<ParamGrid>(r#"{"sizes":[7],"scheme":"spectral"}"#).is_err());
    }

    #[test]
    fn spectral_sine_derivative() {
        let g = ParamGrid::new(&[64], Scheme::Spectral).unwrap();
        let f = Field::scalar_from_fn(g, |x| x[0].sin());
        let d = g.partial(&f, 0).unwrap();
        assert!(max_err(&d, |x| x[0].cos()) <= 1e-12);
        let dd = g.second_partial(&f, 0, 0).unwrap();
        assert!(max_err(&dd, |x| -x[0].sin()) <= 1e-11);
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        for scheme in [Scheme::Spectral, Scheme::Central4] {
            let g = ParamGrid::new(&[16, 16], scheme).unwrap();
            let f = Field::constant(g, &[3.5]);
            assert_eq!(g.partial(&f, 1).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn axis_out_of_range() {
        let g = ParamGrid::new(&[16], Scheme::Spectral).unwrap();
        let f = Field::constant(g, &[1.0]);
        assert!(matches!(
            g.partial(&f, 1),
            Err(Error::AxisOutOfRange { axis: 1, dim: 1 })
        ));
        assert!(g.second_partial(&f, 0, 1).is_err());
    }

    #[test]
    fn mixed_second_partial() {
        let g = ParamGrid::new(&[32, 32], Scheme::Spectral).unwrap();
        let f = Field::scalar_from_fn(g, |x| x[0].sin() * x[1].sin());
        let d01 = g.second_partial(&f, 0, 1).unwrap();
        assert!(max_err(&d01, |x| x[0].cos() * x[1].cos()) <= 1e-11);
        let d10 = g.partial(&g.partial(&f, 1).unwrap(), 0).unwrap();
        let sym = d01.lin_comb(1.0, &d10, -1.0).unwrap().max_abs();
        assert!(sym <= 1e-12);
    }

    #[test]
    fn central4_order() {
        let err = |n: usize| {
            let g = ParamGrid::new(&[n], Scheme::Central4).unwrap();
            let f = Field::scalar_from_fn(g, |x| (3.0 * x[0]).sin());
            max_err(&g.partial(&f, 0).unwrap(), |x| 3.0 * (3.0 * x[0]).cos())
        };
        let ratio = err(32) / err(64);
        assert!((14.0..18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn central4_second_derivative() {
        let g = ParamGrid::new(&[128], Scheme::Central4).unwrap();
        let f = Field::scalar_from_fn(g, |x| x[0].sin());
        let dd = g.second_partial(&f, 0, 0).unwrap();
        assert!(max_err(&dd, |x| -x[0].sin()) <= 1e-6);
    }

    #[test]
    fn filter_keeps_resolved_modes() {
        let g = ParamGrid::cube(2, 32, Scheme::Spectral).unwrap();
        let f = Field::scalar_from_fn(g, |x| (x[0] + 2.0 * x[1]).sin() + (5.0 * x[0]).cos());
        let filtered = g.exponential_filter(&f).unwrap();
        assert!(filtered.lin_comb(1.0, &f, -1.0).unwrap().max_abs() <= 1e-14);
        let nyq = Field::scalar_from_fn(g, |x| (16.0 * x[0]).cos());
        assert!(g.exponential_filter(&nyq).unwrap().max_abs() <= 1e-15);
    }

    #[test]
    fn integrate_examples() {
        for n in [8, 16, 64] {
            let g = ParamGrid::new(&[n], Scheme::Spectral).unwrap();
            let one = Field::constant(g, &[1.0]);
            assert!((g.integrate(&one, &one).unwrap() - 2.0 * PI).abs() <= 1e-13);
            let s = Field::scalar_from_fn(g, |x| x[0].sin());
            assert!(g.integrate(&s, &one).unwrap().abs() <= 1e-13);
            // Circle of radius 2: √g = 2, so the length is 4π.
            let two = Field::constant(g, &[2.0]);
            assert!((g.integrate(&one, &two).unwrap() - 4.0 * PI).abs() <= 1e-13);
        }
    }

    #[test]
    fn integrate_rejects_nonpositive_density() {
        let g = ParamGrid::new(&[8], Scheme::Spectral).unwrap();
        let one = Field::constant(g, &[1.0]);
        let mut d = one.clone();
        d.data_mut()[3] = 0.0;
        assert!(matches!(
            g.integrate(&one, &d),
            Err(Error::NonPositiveDensity { node: 3, .. })
        ));
    }

    #[test]
    fn csv_layout() {
        let g = ParamGrid::new(&[8], Scheme::Spectral).unwrap();
        let f = Field::from_fn(g, 2, |x, o| {
            o[0] = x[0];
            o[1] = 1.0;
        });
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[0], "x1,v0,v1");
        assert_eq!(lines[1].split(',').count(), 3);
    }

    fn trig_coeffs() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0f64..1.0, 8)
    }

    fn trig_poly(c: &[f64], x: [f64; 2]) -> f64 {
        c[0] * x[0].sin()
            + c[1] * (2.0 * x[1]).cos()
            + c[2] * (x[0] + 3.0 * x[1]).sin()
            + c[3] * (5.0 * x[0] - x[1]).cos()
            + c[4]
            + c[5] * (7.0 * x[1]).sin()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn spectral_exact_on_trig_polynomials(c in trig_coeffs()) {
            let g = ParamGrid::new(&[32, 32], Scheme::Spectral).unwrap();
            let f = Field::scalar_from_fn(g, |x| trig_poly(&c, x));
            let d = g.partial(&f, 1).unwrap();
            let exact = |x: [f64; 2]| 2.0 * -c[1] * (2.0 * x[1]).sin()
                + 3.0 * c[2] * (x[0] + 3.0 * x[1]).cos()
                + c[3] * (5.0 * x[0] - x[1]).sin()
                + 7.0 * c[5] * (7.0 * x[1]).cos();
            prop_assert!(max_err(&d, exact) <= 1e-11);
        }

        #[test]
        fn partial_is_linear(c in trig_coeffs(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = ParamGrid::new(&[16, 16], Scheme::Spectral).unwrap();
            let f = Field::scalar_from_fn(g, |x| trig_poly(&c, x));
            let h = Field::scalar_from_fn(g, |x| (x[0] - x[1]).cos() * c[6] + c[7] * x[1].sin());
            let lhs = g.partial(&f.lin_comb(a, &h, b).unwrap(), 0).unwrap();
            let rhs = g.partial(&f, 0).unwrap().lin_comb(a, &g.partial(&h, 0).unwrap(), b).unwrap();
            prop_assert!(lhs.lin_comb(1.0, &rhs, -1.0).unwrap().max_abs() <= 1e-13);
        }

        #[test]
        fn integration_by_parts(c in trig_coeffs()) {
            let g = ParamGrid::new(&[32, 32], Scheme::Spectral).unwrap();
            let f = Field::scalar_from_fn(g, |x| trig_poly(&c, x));
            let h = Field::scalar_from_fn(g, |x| (x[0] + x[1]).sin() * c[6] + c[7] * (2.0 * x[0]).cos());
            let one = Field::constant(g, &[1.0]);
            for axis in 0..2 {
                let df = g.partial(&f, axis).unwrap();
                let dh = g.partial(&h, axis).unwrap();
                let a: Vec<f64> = df.data().iter().zip(h.data()).map(|(x, y)| x * y).collect();
                let b: Vec<f64> = f.data().iter().zip(dh.data()).map(|(x, y)| x * y).collect();
                let s = g.integrate(&Field::new(g, 1, a).unwrap(), &one).unwrap()
                    + g.integrate(&Field::new(g, 1, b).unwrap(), &one).unwrap();
                prop_assert!(s.abs() <= 1e-11);
            }
        }
    }
}
