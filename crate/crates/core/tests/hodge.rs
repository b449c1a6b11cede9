use lagflow_core::hodge::{
    codifferential, gradient, hodge_decompose, loop_periods, loop_periods_through,
};
use lagflow_core::{Field, GeometryState, ParamGrid, Scenario, Scheme, TensorField};
use proptest::prelude::*;

fn state(s: Scenario, n: usize) -> GeometryState {
    let grid = ParamGrid::cube(s.dim(), n, Scheme::Spectral).unwrap();
    GeometryState::build(&s.immersion(&grid).unwrap()).unwrap()
}

const GRAPH: Scenario = Scenario::LagrangianGraph {
    amplitude: 0.1,
    dim: 2,
};

fn smooth_scalar(grid: ParamGrid, c: &[f64]) -> Field {
    Field::scalar_from_fn(grid, |x| {
        c[0] * x[0].sin() + c[1] * (x[0] + x[1]).cos() + c[2] * (2.0 * x[1]).sin() * x[0].cos()
    })
}

fn smooth_one_form(grid: ParamGrid, c: &[f64]) -> TensorField {
    let n = grid.dim();
    let f = Field::from_fn(grid, n, |x, o| {
        o[0] = c[0] + c[1] * x[0].cos() * x[1].sin();
        if n == 2 {
            o[1] = c[2] * (x[0] - x[1]).sin() + 0.3;
        }
    });
    TensorField::new(f, 1).unwrap()
}

/// `|∫⟨dφ, θ⟩_g dμ + ∫ φ d†θ dμ|` scaled by the size of either term.
fn adjointness_defect(st: &GeometryState, phi: &Field, theta: &TensorField) -> f64 {
    let grid = *st.grid();
    let n = grid.dim();
    let dphi = gradient(phi).unwrap();
    let mut pair = Field::zeros(grid, 1);
    for p in 0..grid.node_count() {
        let gi = st.g_inv().node(p);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += gi[i * n + j] * dphi.node(p)[i] * theta.node(p)[j];
            }
        }
        pair.node_mut(p)[0] = s;
    }
    let cod = codifferential(theta, st).unwrap();
    let mut prod = Field::zeros(grid, 1);
    for p in 0..grid.node_count() {
        prod.node_mut(p)[0] = phi.node(p)[0] * cod.node(p)[0];
    }
    let lhs = grid.integrate(&pair, st.sqrt_det_g()).unwrap();
    let rhs = grid.integrate(&prod, st.sqrt_det_g()).unwrap();
    (lhs + rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0)
}

#[test]
fn adjointness_on_ellipse() {
    let st = state(Scenario::Ellipse { a: 1.0, b: 2.0 }, 128);
    let phi = Field::scalar_from_fn(*st.grid(), |x| x[0].sin() + 0.5 * (3.0 * x[0]).cos());
    let theta = smooth_one_form(*st.grid(), &[0.2, 1.0, 0.0]);
    let d = adjointness_defect(&st, &phi, &theta);
    assert!(d <= 1e-9, "{d}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn adjointness_on_every_scenario(c in proptest::collection::vec(-1.0f64..1.0, 6)) {
        for s in Scenario::library() {
            let st = state(s, 32);
            let phi = smooth_scalar(*st.grid(), &c[..3]);
            let theta = smooth_one_form(*st.grid(), &c[3..]);
            let d = adjointness_defect(&st, &phi, &theta);
            prop_assert!(d <= 1e-8, "{}: {}", s, d);
        }
    }

    #[test]
    fn exact_forms_have_no_periods(c in proptest::collection::vec(-1.0f64..1.0, 3)) {
        let grid = ParamGrid::cube(2, 32, Scheme::Spectral).unwrap();
        let dphi = gradient(&smooth_scalar(grid, &c)).unwrap();
        for v in loop_periods(&dphi).unwrap() {
            prop_assert!(v.abs() <= 1e-10);
        }
    }

    #[test]
    fn decomposition_is_idempotent(c in proptest::collection::vec(-1.0f64..1.0, 3)) {
        let st = state(Scenario::PerturbedLagrangian { eps: 0.05, amplitude: 0.1 }, 32);
        let theta = smooth_one_form(*st.grid(), &c);
        let first = hodge_decompose(&theta, &st, 0).unwrap();
        prop_assert!(codifferential(&first.psi, &st).unwrap().max_abs() <= 1e-9);
        let again = hodge_decompose(&first.psi, &st, 0).unwrap();
        prop_assert!(again.phi.max_abs() <= 1e-9, "{}", again.phi.max_abs());
    }
}

#[test]
fn flat_codifferential_is_flat_laplacian() {
    let st = state(Scenario::FlatPlane, 32);
    let phi = Field::scalar_from_fn(*st.grid(), |x| x[0].sin() * (2.0 * x[1]).cos());
    let lap = codifferential(&gradient(&phi).unwrap(), &st).unwrap();
    let want = phi.map(|v| -5.0 * v);
    assert!(lap.lin_comb(1.0, &want, -1.0).unwrap().max_abs() <= 1e-12);
}

#[test]
fn constant_form_on_clifford_torus_is_coclosed() {
    let st = state(Scenario::ProductTorus { r: 1.0, s: 1.0 }, 32);
    let theta = TensorField::new(Field::constant(*st.grid(), &[0.7, -1.3]), 1).unwrap();
    assert!(codifferential(&theta, &st).unwrap().max_abs() <= 1e-12);
}

#[test]
fn clifford_torus_periods() {
    let st = state(Scenario::ProductTorus { r: 1.0, s: 1.0 }, 32);
    let tau = std::f64::consts::TAU;
    let periods = loop_periods(st.mean_curvature()).unwrap();
    assert!((periods[0] + tau).abs() <= 1e-12 && (periods[1] + tau).abs() <= 1e-12);
    let c = TensorField::new(Field::constant(*st.grid(), &[0.25, 0.0]), 1).unwrap();
    let periods = loop_periods(&c).unwrap();
    assert!((periods[0] - 0.25 * tau).abs() <= 1e-14 && periods[1].abs() <= 1e-14);
}

#[test]
fn periods_do_not_depend_on_transverse_loop() {
    let st = state(GRAPH, 64);
    let base = loop_periods(st.mean_curvature()).unwrap();
    for node in [5, 64 * 17 + 3, 64 * 40 + 50] {
        let other = loop_periods_through(st.mean_curvature(), node).unwrap();
        for (a, b) in base.iter().zip(&other) {
            assert!((a - b).abs() <= 1e-9);
        }
    }
}

/// Lagrangian angle `Σ arctan λ_i(D²u)` of the gradient graph of
/// `u = a sin x₁ sin x₂`, used as an independent potential for `H`.
fn lagrangian_angle(x: [f64; 2], a: f64) -> f64 {
    let (s1, c1) = x[0].sin_cos();
    let (s2, c2) = x[1].sin_cos();
    let (uxx, uxy, uyy) = (-a * s1 * s2, a * c1 * c2, -a * s1 * s2);
    let mean = 0.5 * (uxx + uyy);
    let rad = (0.25 * (uxx - uyy).powi(2) + uxy * uxy).sqrt();
    (mean + rad).atan() + (mean - rad).atan()
}

#[test]
fn graph_mean_curvature_is_exact() {
    let st = state(GRAPH, 64);
    let split = hodge_decompose(st.mean_curvature(), &st, 0).unwrap();
    assert!(split.psi.max_abs() <= 1e-7, "{}", split.psi.max_abs());
    // H = -dΘ for the gradient graph, so φ = -(Θ - Θ(x₀)).
    let grid = *st.grid();
    let theta0 = lagrangian_angle(grid.coords(0), 0.1);
    let mut worst: f64 = 0.0;
    for p in 0..grid.node_count() {
        let want = -(lagrangian_angle(grid.coords(p), 0.1) - theta0);
        worst = worst.max((split.phi.node(p)[0] - want).abs());
    }
    assert!(worst <= 1e-8, "{worst}");
}

#[test]
fn exact_input_recovers_potential() {
    let st = state(Scenario::Ellipse { a: 1.0, b: 2.0 }, 64);
    let phi0 = Field::scalar_from_fn(*st.grid(), |x| (2.0 * x[0]).sin() + x[0].cos());
    let split = hodge_decompose(&gradient(&phi0).unwrap(), &st, 3).unwrap();
    assert!(split.psi.max_abs() <= 1e-9);
    let shift = phi0.node(3)[0];
    let want = phi0.map(|v| v - shift);
    assert!(split.phi.lin_comb(1.0, &want, -1.0).unwrap().max_abs() <= 1e-9);
    assert_eq!(split.phi.node(3)[0], 0.0);
}
