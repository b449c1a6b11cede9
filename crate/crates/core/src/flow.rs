//! Method-of-lines integration of `dF/dt = -η^{mn} θ_m ν_n` with classical RK4,
//! for `θ = H` (mean curvature flow) or `θ = df` for a fixed function `f` on
//! the parameter torus, plus finite-difference-in-time checks of the
//! evolution equations for `g`, `dμ`, `h` and `H`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::{
    covariant_derivative, deformation, norms, GeometryOptions, GeometryState, TOL_LAG,
};
use crate::grid::{Field, ParamGrid, Scheme};
use crate::hodge::{codifferential, exterior_derivative, gradient, loop_periods, OneForm};
use crate::immersion::ImmersionField;
use crate::tensor::Variance;

/// Bound on `max |ω|_g` asserted at every record point of a Lagrangian run.
pub const LAGRANGIAN_RUN_TOL: f64 = 1e-9;

/// Named scalar functions on the parameter torus usable as `θ = df`.
pub fn scalar_function(name: &str) -> Result<fn([f64; 2]) -> f64> {
    Ok(match name {
        "zero" => |_| 0.0,
        "sin_x1" => |x| x[0].sin(),
        "cos_x1" => |x| x[0].cos(),
        "sin_x2" => |x| x[1].sin(),
        "cos_x2" => |x| x[1].cos(),
        "sin_x1_sin_x2" => |x| x[0].sin() * x[1].sin(),
        "cos_x1_plus_cos_x2" => |x| x[0].cos() + x[1].cos(),
        _ => return Err(Error::UnknownFunction(name.to_string())),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ThetaSource {
    MeanCurvature,
    /// `θ = df` for a function from [`scalar_function`].
    GradientOf(String),
}

impl fmt::Display for ThetaSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThetaSource::MeanCurvature => f.write_str("mcf"),
            ThetaSource::GradientOf(name) => write!(f, "grad:{name}"),
        }
    }
}

impl FromStr for ThetaSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mcf" | "mean_curvature" => Ok(ThetaSource::MeanCurvature),
            _ => match s.strip_prefix("grad:") {
                Some(name) => {
                    scalar_function(name)?;
                    Ok(ThetaSource::GradientOf(name.to_string()))
                }
                None => Err(Error::InvalidParameter(format!(
                    "theta must be `mcf` or `grad:<function>`, got {s:?}"
                ))),
            },
        }
    }
}

impl Serialize for ThetaSource {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ThetaSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub theta: ThetaSource,
    pub dt: f64,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub stop_min_eig_g: f64,
    pub snapshot_stride: usize,
    /// Derivative scheme; `None` keeps the scheme of the initial data.
    pub scheme: Option<Scheme>,
    /// Keep the immersion at every record point (needed by the evolution checks).
    pub keep_snapshots: bool,
    /// Apply the exponential spectral filter to every stage velocity.
    pub filter: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            theta: ThetaSource::MeanCurvature,
            dt: 1e-4,
            t_end: 0.1,
            cfl_safety: 0.9,
            stop_min_eig_g: 1e-6,
            snapshot_stride: 100,
            scheme: None,
            keep_snapshots: true,
            filter: true,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be non-negative");
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad("cfl_safety must lie in (0, 1]");
        }
        if self.stop_min_eig_g.is_nan() || self.stop_min_eig_g <= 0.0 {
            return bad("stop_min_eig_g must be positive");
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be at least 1");
        }
        if let ThetaSource::GradientOf(name) = &self.theta {
            scalar_function(name)?;
        }
        Ok(())
    }
}

/// `θ = df` sampled once on the grid; `None` for mean curvature flow.
fn fixed_theta(config: &FlowConfig, grid: &ParamGrid) -> Result<Option<OneForm>> {
    match &config.theta {
        ThetaSource::MeanCurvature => Ok(None),
        ThetaSource::GradientOf(name) => {
            let f = scalar_function(name)?;
            Ok(Some(gradient(&Field::scalar_from_fn(*grid, f))?))
        }
    }
}

/// Evolving state plus the one-form driving it.
struct Stage {
    state: GeometryState,
    velocity: Field,
}

fn stage(
    f: &ImmersionField,
    theta: Option<&OneForm>,
    config: &FlowConfig,
    t: f64,
) -> Result<Stage> {
    let state = GeometryState::build_with(f, &GeometryOptions::default())?;
    let min_eig = state.min_eig_g();
    if min_eig < config.stop_min_eig_g {
        return Err(Error::SingularityStop { t, min_eig });
    }
    let mut velocity = deformation(&state, theta.unwrap_or(state.mean_curvature()))?;
    if config.filter {
        // Without this, modes next to Nyquist grow at a rate ~ N/r²: the
        // frame products push content past the resolved band, and the
        // purely normal velocity supplies no tangential damping there.
        velocity = state.grid().exponential_filter(&velocity)?;
    }
    Ok(Stage { state, velocity })
}

/// `-η^{mn} θ_m ν_n` for the configured `θ`.
pub fn deformation_field(state: &GeometryState, config: &FlowConfig) -> Result<Field> {
    match fixed_theta(config, state.grid())? {
        Some(theta) => deformation(state, &theta),
        None => deformation(state, state.mean_curvature()),
    }
}

/// Largest stable step for the current state.
fn effective_dt(state: &GeometryState, config: &FlowConfig) -> f64 {
    let h = state.grid().min_spacing();
    let h_sq_max = norms(state)
        .h_sq
        .data()
        .iter()
        .fold(0.0f64, |m, v| m.max(*v));
    let limit = config.cfl_safety * h * h * state.min_eig_g() / h_sq_max.max(1.0);
    config.dt.min(limit)
}

fn rk4(
    f: &ImmersionField,
    first: Stage,
    theta: Option<&OneForm>,
    config: &FlowConfig,
    t: f64,
    dt: f64,
) -> Result<ImmersionField> {
    let k1 = first.velocity;
    let k2 = stage(&f.displaced(&k1, 0.5 * dt)?, theta, config, t)?.velocity;
    let k3 = stage(&f.displaced(&k2, 0.5 * dt)?, theta, config, t)?.velocity;
    let k4 = stage(&f.displaced(&k3, dt)?, theta, config, t)?.velocity;
    let mut sum = k1.lin_comb(1.0, &k2, 2.0)?;
    sum = sum.lin_comb(1.0, &k3, 2.0)?;
    sum = sum.lin_comb(1.0, &k4, 1.0)?;
    f.displaced(&sum, dt / 6.0)
}

/// One RK4 step of at most `config.dt`; returns the new immersion and the
/// step actually taken.
pub fn step_rk4(f: &ImmersionField, config: &FlowConfig) -> Result<(ImmersionField, f64)> {
    config.validate()?;
    let theta = fixed_theta(config, f.grid())?;
    let first = stage(f, theta.as_ref(), config, 0.0)?;
    let dt = effective_dt(&first.state, config);
    Ok((rk4(f, first, theta.as_ref(), config, 0.0, dt)?, dt))
}

/// Scalar diagnostics at one record time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub area: f64,
    pub omega_max: f64,
    pub h_sq_max: f64,
    pub min_eig_g: f64,
    /// Loop periods of the mean curvature form.
    pub periods: Vec<f64>,
    /// `max |dH|`.
    pub dh_max: f64,
}

impl Diagnostics {
    fn of(state: &GeometryState, t: f64) -> Result<Self> {
        let nm = norms(state);
        Ok(Self {
            t,
            area: state.area(),
            omega_max: nm.omega_max,
            h_sq_max: nm.h_sq.data().iter().fold(0.0f64, |m, v| m.max(*v)),
            min_eig_g: state.min_eig_g(),
            periods: loop_periods(state.mean_curvature())?,
            dh_max: exterior_derivative(state.mean_curvature())?.max_abs(),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub immersion: ImmersionField,
    #[serde(rename = "H")]
    pub mean_curvature: OneForm,
    /// The driving one-form when it is not `H`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<OneForm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    /// `min eig g` dropped below the stop threshold during the step that
    /// would have started at `t`, the last valid time.
    SingularityStop {
        t: f64,
        min_eig: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowRecord {
    pub config: FlowConfig,
    /// Set when the initial data is Lagrangian within tolerance.
    pub lagrangian: bool,
    pub diagnostics: Vec<Diagnostics>,
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    pub termination: Termination,
}

impl FlowRecord {
    pub fn times(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.t).collect()
    }
}

pub fn run_flow(f0: &ImmersionField, config: &FlowConfig) -> Result<FlowRecord> {
    config.validate()?;
    let mut f = match config.scheme {
        Some(s) => f0.with_scheme(s),
        None => f0.clone(),
    };
    let theta = fixed_theta(config, f.grid())?;
    let mut record = FlowRecord {
        config: config.clone(),
        lagrangian: false,
        diagnostics: Vec::new(),
        snapshots: Vec::new(),
        steps: 0,
        termination: Termination::Completed,
    };
    let mut t = 0.0;
    let mut current = match stage(&f, theta.as_ref(), config, t) {
        Ok(s) => s,
        Err(Error::SingularityStop { t, min_eig }) => {
            record.termination = Termination::SingularityStop { t, min_eig };
            return Ok(record);
        }
        Err(e) => return Err(e),
    };
    record.lagrangian = current.state.omega_max() <= TOL_LAG;
    push_record(&mut record, &current.state, &f, theta.as_ref(), t)?;

    let mut since_record = 0;
    while config.t_end - t > 1e-9 * config.dt {
        let dt = effective_dt(&current.state, config).min(config.t_end - t);
        let next = rk4(&f, current, theta.as_ref(), config, t, dt).and_then(|g| {
            let s = stage(&g, theta.as_ref(), config, t + dt)?;
            Ok((g, s))
        });
        let (g, s) = match next {
            Ok(v) => v,
            Err(Error::SingularityStop { min_eig, .. }) => {
                record.termination = Termination::SingularityStop { t, min_eig };
                if since_record > 0 {
                    let state = GeometryState::build(&f)?;
                    push_record(&mut record, &state, &f, theta.as_ref(), t)?;
                }
                return Ok(record);
            }
            Err(e) => return Err(e),
        };
        record.steps += 1;
        t = if dt == config.dt {
            // Avoid drift so record times stay on the `k · dt` lattice.
            (record.steps as f64) * config.dt
        } else {
            t + dt
        };
        f = g;
        current = s;
        since_record += 1;
        let last = config.t_end - t <= 1e-9 * config.dt;
        if since_record == config.snapshot_stride || last {
            push_record(&mut record, &current.state, &f, theta.as_ref(), t)?;
            since_record = 0;
        }
    }
    Ok(record)
}

fn push_record(
    record: &mut FlowRecord,
    state: &GeometryState,
    f: &ImmersionField,
    theta: Option<&OneForm>,
    t: f64,
) -> Result<()> {
    let d = Diagnostics::of(state, t)?;
    if record.lagrangian && d.omega_max > LAGRANGIAN_RUN_TOL {
        return Err(Error::LagrangianViolation {
            t,
            omega_max: d.omega_max,
        });
    }
    record.diagnostics.push(d);
    if record.config.keep_snapshots {
        record.snapshots.push(Snapshot {
            t,
            immersion: f.clone(),
            mean_curvature: state.mean_curvature().clone(),
            theta: theta.cloned(),
        });
    }
    Ok(())
}

/// Three consecutive snapshots around the middle of the record, with their
/// common spacing.
fn middle_triple(record: &FlowRecord) -> Result<(&Snapshot, &Snapshot, &Snapshot, f64)> {
    let s = &record.snapshots;
    if s.len() < 3 {
        return Err(Error::InsufficientSnapshots {
            needed: 3,
            got: s.len(),
        });
    }
    let mid = s.len() / 2;
    let (a, b, c) = (&s[mid - 1], &s[mid], &s[mid + 1]);
    let (h0, h1) = (b.t - a.t, c.t - b.t);
    if (h0 - h1).abs() > 1e-9 * h0.max(h1) {
        return Err(Error::NonUniformSnapshots { index: mid });
    }
    Ok((a, b, c, h0))
}

/// Max over nodes and components of `(X(t+Δ) - X(t-Δ))/(2Δ) - rhs`.
fn fd_residual(before: &Field, after: &Field, spacing: f64, rhs: &Field) -> Result<f64> {
    let fd = after.lin_comb(1.0 / (2.0 * spacing), before, -1.0 / (2.0 * spacing))?;
    Ok(fd.lin_comb(1.0, rhs, -1.0)?.max_abs())
}

struct Triple {
    before: GeometryState,
    mid: GeometryState,
    after: GeometryState,
    theta: OneForm,
    spacing: f64,
}

fn triple(record: &FlowRecord) -> Result<Triple> {
    let (a, b, c, spacing) = middle_triple(record)?;
    let build = |s: &Snapshot| GeometryState::build(&s.immersion);
    let mid = build(b)?;
    let theta = b
        .theta
        .clone()
        .unwrap_or_else(|| mid.mean_curvature().clone());
    Ok(Triple {
        before: build(a)?,
        after: build(c)?,
        mid,
        theta,
        spacing,
    })
}

/// `d/dt g_ij = -2 η^{kl} θ_k h_lij`.
pub fn check_evolution_g(record: &FlowRecord) -> Result<f64> {
    let tr = triple(record)?;
    let st = &tr.mid;
    let grid = *st.grid();
    let n = grid.dim();
    let mut rhs = Field::zeros(grid, n * n);
    for p in 0..grid.node_count() {
        let ei = st.eta_inv().node(p);
        let th = tr.theta.node(p);
        let h = st.h().node(p);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        s += ei[k * n + l] * th[k] * h[(l * n + i) * n + j];
                    }
                }
                rhs.node_mut(p)[i * n + j] = -2.0 * s;
            }
        }
    }
    fd_residual(
        tr.before.g().field(),
        tr.after.g().field(),
        tr.spacing,
        &rhs,
    )
}

/// `d/dt √det g = -η^{mn} θ_m H_n √det g`.
pub fn check_evolution_volume(record: &FlowRecord) -> Result<f64> {
    let tr = triple(record)?;
    let st = &tr.mid;
    let grid = *st.grid();
    let n = grid.dim();
    let mut rhs = Field::zeros(grid, 1);
    for p in 0..grid.node_count() {
        let ei = st.eta_inv().node(p);
        let th = tr.theta.node(p);
        let hh = st.mean_curvature().node(p);
        let mut s = 0.0;
        for m in 0..n {
            for q in 0..n {
                s += ei[m * n + q] * th[m] * hh[q];
            }
        }
        rhs.node_mut(p)[0] = -s * st.sqrt_det_g().node(p)[0];
    }
    fd_residual(
        tr.before.sqrt_det_g(),
        tr.after.sqrt_det_g(),
        tr.spacing,
        &rhs,
    )
}

/// `d/dt h_jkl = ∇_k ∇_j H_l - H^n (h_nj^m h_mkl + h_nl^m h_mkj)` along
/// Lagrangian mean curvature flow.
pub fn check_evolution_h(record: &FlowRecord) -> Result<f64> {
    if record.config.theta != ThetaSource::MeanCurvature {
        return Err(Error::InvalidParameter(
            "the second fundamental form check needs θ = H".into(),
        ));
    }
    let tr = triple(record)?;
    let st = &tr.mid;
    if !st.is_lagrangian() {
        return Err(Error::NotLagrangian {
            omega_max: st.omega_max(),
            tol: TOL_LAG,
        });
    }
    let grid = *st.grid();
    let n = grid.dim();
    let co = Variance::Covariant;
    let dh1 = covariant_derivative(st.mean_curvature(), &[co], st.gamma())?;
    // ddh[l][j][k] = ∇_k ∇_j H_l
    let ddh = covariant_derivative(&dh1, &[co, co], st.gamma())?;
    let i3 = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let mut rhs = Field::zeros(grid, n * n * n);
    for p in 0..grid.node_count() {
        let gi = st.g_inv().node(p);
        let h = st.h().node(p);
        let hh = st.mean_curvature().node(p);
        let dd = ddh.node(p);
        let h_up: Vec<f64> = (0..n)
            .map(|a| (0..n).map(|q| gi[a * n + q] * hh[q]).sum())
            .collect();
        // hm[n][j][m] = h_nj^m
        let mut hm = vec![0.0; n * n * n];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    hm[i3(a, b, c)] = (0..n).map(|q| h[i3(a, b, q)] * gi[q * n + c]).sum();
                }
            }
        }
        let out = rhs.node_mut(p);
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut s = 0.0;
                    for a in 0..n {
                        for m in 0..n {
                            s += h_up[a]
                                * (hm[i3(a, j, m)] * h[i3(m, k, l)]
                                    + hm[i3(a, l, m)] * h[i3(m, k, j)]);
                        }
                    }
                    out[i3(j, k, l)] = dd[i3(l, j, k)] - s;
                }
            }
        }
    }
    fd_residual(
        tr.before.h().field(),
        tr.after.h().field(),
        tr.spacing,
        &rhs,
    )
}

/// `d/dt H = d(d†θ)`.
pub fn check_evolution_mean_curvature(record: &FlowRecord) -> Result<f64> {
    let tr = triple(record)?;
    let div = codifferential(&tr.theta, &tr.mid)?;
    let rhs = gradient(&div)?;
    fd_residual(
        tr.before.mean_curvature().field(),
        tr.after.mean_curvature().field(),
        tr.spacing,
        rhs.field(),
    )
}

/// Centered `d(area)/dt + ∫|H|² dμ` at interior records of an MCF run,
/// relative to the area.
pub fn area_derivative_defects(record: &FlowRecord) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for k in 1..record.snapshots.len().saturating_sub(1) {
        let (a, b, c) = (
            &record.snapshots[k - 1],
            &record.snapshots[k],
            &record.snapshots[k + 1],
        );
        let (h0, h1) = (b.t - a.t, c.t - b.t);
        if (h0 - h1).abs() > 1e-9 * h0.max(h1) {
            continue;
        }
        let sa = GeometryState::build(&a.immersion)?;
        let sb = GeometryState::build(&b.immersion)?;
        let sc = GeometryState::build(&c.immersion)?;
        let nm = norms(&sb);
        let int_h_sq = sb.grid().integrate(&nm.h_sq, sb.sqrt_det_g())?;
        let d_area = (sc.area() - sa.area()) / (2.0 * h0);
        out.push((d_area + int_h_sq).abs() / sb.area());
    }
    Ok(out)
}
