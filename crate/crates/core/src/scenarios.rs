//! Analytic initial data with closed-form reference quantities.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::grid::ParamGrid;
use crate::immersion::ImmersionField;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Scenario {
    /// `F = (x¹, x², 0, 0)`.
    FlatPlane,
    /// `F = r (cos(x + φ), sin(x + φ))`.
    Circle { r: f64, phase: f64 },
    /// `F = (a cos x, b sin x)`.
    Ellipse { a: f64, b: f64 },
    /// `S¹(r) × S¹(s)`: `F = (r cos x¹, s cos x², r sin x¹, s sin x²)`.
    ProductTorus { r: f64, s: f64 },
    /// `F = (x, ∇u)` with `u = amplitude · Π_i sin xⁱ`.
    LagrangianGraph { amplitude: f64, dim: usize },
    /// `F = (x¹, x², x², 0)`, a flat sheet with `ω₁₂ = 1`.
    AffineSheet,
    /// Graph of `∇u` plus `ε (sin x², -sin x¹)` in the `y` slots.
    PerturbedLagrangian { eps: f64, amplitude: f64 },
}

pub const DEFAULT_GRAPH_AMPLITUDE: f64 = 0.1;

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::FlatPlane => write!(f, "flat_plane"),
            Scenario::Circle { r, phase } if *phase == 0.0 => write!(f, "circle({r})"),
            Scenario::Circle { r, phase } => write!(f, "circle({r},{phase})"),
            Scenario::Ellipse { a, b } => write!(f, "ellipse({a},{b})"),
            Scenario::ProductTorus { r, s } => write!(f, "product_torus({r},{s})"),
            Scenario::LagrangianGraph { amplitude, dim } => {
                write!(f, "lagrangian_graph({amplitude},{dim})")
            }
            Scenario::AffineSheet => write!(f, "affine_sheet"),
            Scenario::PerturbedLagrangian { eps, amplitude } => {
                write!(f, "perturbed_lagrangian({eps},{amplitude})")
            }
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite")))
    }
}

/// Parameter lookup by key, falling back to position for the call syntax
/// `circle(1.5)`.
struct Params<'a> {
    named: &'a Map<String, Value>,
    positional: Vec<f64>,
}

impl Params<'_> {
    fn get(&self, key: &str, pos: usize, default: Option<f64>) -> Result<f64> {
        if let Some(v) = self.named.get(key) {
            return v
                .as_f64()
                .ok_or_else(|| Error::InvalidParameter(format!("{key} must be a number")));
        }
        if let Some(v) = self.positional.get(pos) {
            return Ok(*v);
        }
        default.ok_or_else(|| Error::InvalidParameter(format!("missing parameter {key}")))
    }
}

/// Build a scenario from its name and parameters.
///
/// The name may carry positional arguments, e.g. `product_torus(1,3)`; named
/// parameters in `params` take precedence.
pub fn make_scenario(name: &str, params: &Value) -> Result<Scenario> {
    let empty = Map::new();
    let named = match params {
        Value::Null => &empty,
        Value::Object(m) => m,
        _ => return Err(Error::InvalidParameter("params must be an object".into())),
    };
    let (base, positional) = match name.find('(') {
        Some(open) => {
            let inner = name[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::UnknownScenario(name.to_string()))?;
            let args = inner
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidParameter(format!("bad argument {s:?} in {name}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (name[..open].trim(), args)
        }
        None => (name.trim(), Vec::new()),
    };
    let p = Params { named, positional };
    Ok(match base {
        "flat_plane" => Scenario::FlatPlane,
        "circle" => Scenario::Circle {
            r: positive("r", p.get("r", 0, Some(1.0))?)?,
            phase: finite("phase", p.get("phase", 1, Some(0.0))?)?,
        },
        "ellipse" => Scenario::Ellipse {
            a: positive("a", p.get("a", 0, Some(1.0))?)?,
            b: positive("b", p.get("b", 1, Some(2.0))?)?,
        },
        "product_torus" | "clifford_torus" => Scenario::ProductTorus {
            r: positive("r", p.get("r", 0, Some(1.0))?)?,
            s: positive("s", p.get("s", 1, Some(1.0))?)?,
        },
        "lagrangian_graph" => {
            let dim = p.get("dim", 1, Some(2.0))?;
            if dim != 1.0 && dim != 2.0 {
                return Err(Error::InvalidParameter(format!(
                    "dim must be 1 or 2, got {dim}"
                )));
            }
            Scenario::LagrangianGraph {
                amplitude: finite(
                    "amplitude",
                    p.get("amplitude", 0, Some(DEFAULT_GRAPH_AMPLITUDE))?,
                )?,
                dim: dim as usize,
            }
        }
        "affine_sheet" => Scenario::AffineSheet,
        "perturbed_lagrangian" => Scenario::PerturbedLagrangian {
            eps: finite("eps", p.get("eps", 0, Some(0.05))?)?,
            amplitude: finite(
                "amplitude",
                p.get("amplitude", 1, Some(DEFAULT_GRAPH_AMPLITUDE))?,
            )?,
        },
        _ => return Err(Error::UnknownScenario(name.to_string())),
    })
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::FlatPlane => "flat_plane",
            Scenario::Circle { .. } => "circle",
            Scenario::Ellipse { .. } => "ellipse",
            Scenario::ProductTorus { .. } => "product_torus",
            Scenario::LagrangianGraph { .. } => "lagrangian_graph",
            Scenario::AffineSheet => "affine_sheet",
            Scenario::PerturbedLagrangian { .. } => "perturbed_lagrangian",
        }
    }

    /// Complex dimension `n` of the ambient space (= dimension of the torus).
    pub fn dim(&self) -> usize {
        match self {
            Scenario::Circle { .. } | Scenario::Ellipse { .. } => 1,
            Scenario::LagrangianGraph { dim, .. } => *dim,
            _ => 2,
        }
    }

    pub fn is_lagrangian(&self) -> bool {
        match self {
            Scenario::AffineSheet => false,
            Scenario::PerturbedLagrangian { eps, .. } => *eps == 0.0,
            _ => true,
        }
    }

    /// The scenario library used by the identity suite.
    pub fn library() -> Vec<Scenario> {
        vec![
            Scenario::Ellipse { a: 1.0, b: 2.0 },
            Scenario::ProductTorus { r: 1.0, s: 3.0 },
            Scenario::LagrangianGraph {
                amplitude: DEFAULT_GRAPH_AMPLITUDE,
                dim: 2,
            },
            Scenario::AffineSheet,
            Scenario::PerturbedLagrangian {
                eps: 0.05,
                amplitude: DEFAULT_GRAPH_AMPLITUDE,
            },
        ]
    }

    fn check_grid(&self, grid: &ParamGrid) -> Result<()> {
        if grid.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: grid.dim(),
            });
        }
        Ok(())
    }

    /// Constant winding matrix `W` (`2n × n`, row-major `[α][i]`).
    fn winding(&self) -> Vec<f64> {
        let n = self.dim();
        let mut w = vec![0.0; 2 * n * n];
        match self {
            Scenario::FlatPlane
            | Scenario::LagrangianGraph { .. }
            | Scenario::PerturbedLagrangian { .. } => {
                for i in 0..n {
                    w[i * n + i] = 1.0;
                }
            }
            Scenario::AffineSheet => {
                w[0] = 1.0; // x1 = x¹
                w[3] = 1.0; // x2 = x²
                w[5] = 1.0; // y1 = x²
            }
            _ => {}
        }
        w
    }

    /// `y`-block of `e_i` for the graph-type scenarios: `Y[i][j] = ∂_i ∂_j u + ε ∂_i P_j`.
    fn graph_y_jacobian(&self, x: [f64; 2]) -> Option<Vec<f64>> {
        match *self {
            Scenario::LagrangianGraph {
                amplitude: a,
                dim: 1,
            } => Some(vec![-a * x[0].sin()]),
            Scenario::LagrangianGraph { amplitude: a, .. } => Some(hessian_sin_sin(a, x)),
            Scenario::PerturbedLagrangian { eps, amplitude } => {
                let mut y = hessian_sin_sin(amplitude, x);
                // P = (sin x², -sin x¹)
                y[1] += -eps * x[0].cos();
                y[2] += eps * x[1].cos();
                Some(y)
            }
            _ => None,
        }
    }

    /// Sample the immersion on a grid.
    pub fn immersion(&self, grid: &ParamGrid) -> Result<ImmersionField> {
        self.check_grid(grid)?;
        let s = *self;
        ImmersionField::sample(*grid, self.winding(), move |x, o| match s {
            Scenario::FlatPlane => {
                o.copy_from_slice(&[x[0], x[1], 0.0, 0.0]);
            }
            Scenario::Circle { r, phase } => {
                o[0] = r * (x[0] + phase).cos();
                o[1] = r * (x[0] + phase).sin();
            }
            Scenario::Ellipse { a, b } => {
                o[0] = a * x[0].cos();
                o[1] = b * x[0].sin();
            }
            Scenario::ProductTorus { r, s } => {
                o.copy_from_slice(&[
                    r * x[0].cos(),
                    s * x[1].cos(),
                    r * x[0].sin(),
                    s * x[1].sin(),
                ]);
            }
            Scenario::LagrangianGraph {
                amplitude: a,
                dim: 1,
            } => {
                o[0] = x[0];
                o[1] = a * x[0].cos();
            }
            Scenario::LagrangianGraph { amplitude: a, .. } => {
                o.copy_from_slice(&[
                    x[0],
                    x[1],
                    a * x[0].cos() * x[1].sin(),
                    a * x[0].sin() * x[1].cos(),
                ]);
            }
            Scenario::AffineSheet => {
                o.copy_from_slice(&[x[0], x[1], x[1], 0.0]);
            }
            Scenario::PerturbedLagrangian { eps, amplitude: a } => {
                o.copy_from_slice(&[
                    x[0],
                    x[1],
                    a * x[0].cos() * x[1].sin() + eps * x[1].sin(),
                    a * x[0].sin() * x[1].cos() - eps * x[0].sin(),
                ]);
            }
        })
    }

    /// Closed-form induced metric `g_ij` at a parameter point.
    pub fn reference_metric(&self, x: [f64; 2]) -> Vec<f64> {
        match *self {
            Scenario::FlatPlane => vec![1.0, 0.0, 0.0, 1.0],
            Scenario::Circle { r, .. } => vec![r * r],
            Scenario::Ellipse { a, b } => {
                let (s, c) = x[0].sin_cos();
                vec![a * a * s * s + b * b * c * c]
            }
            Scenario::ProductTorus { r, s } => vec![r * r, 0.0, 0.0, s * s],
            Scenario::AffineSheet => vec![1.0, 0.0, 0.0, 2.0],
            _ => {
                let y = self.graph_y_jacobian(x).expect("graph-type scenario");
                let n = self.dim();
                let mut g = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        g[i * n + j] = if i == j { 1.0 } else { 0.0 }
                            + (0..n).map(|k| y[i * n + k] * y[j * n + k]).sum::<f64>();
                    }
                }
                g
            }
        }
    }

    /// Closed-form `h_kij` where one is known.
    pub fn reference_second_fundamental(&self, x: [f64; 2]) -> Option<Vec<f64>> {
        match *self {
            Scenario::FlatPlane | Scenario::AffineSheet => Some(vec![0.0; 8]),
            Scenario::Circle { r, .. } => Some(vec![-r * r]),
            Scenario::Ellipse { a, b } => {
                let _ = x;
                Some(vec![-a * b])
            }
            Scenario::ProductTorus { r, s } => {
                let mut h = vec![0.0; 8];
                h[0] = -r * r;
                h[7] = -s * s;
                Some(h)
            }
            _ => None,
        }
    }

    /// Closed-form mean curvature form `H_i` where one is known.
    pub fn reference_mean_curvature(&self, x: [f64; 2]) -> Option<Vec<f64>> {
        match *self {
            Scenario::FlatPlane | Scenario::AffineSheet => Some(vec![0.0, 0.0]),
            Scenario::Circle { .. } => Some(vec![-1.0]),
            Scenario::Ellipse { a, b } => Some(vec![-a * b / self.reference_metric(x)[0]]),
            Scenario::ProductTorus { .. } => Some(vec![-1.0, -1.0]),
            _ => None,
        }
    }

    /// Radius of the self-similarly shrinking circle, `√(r² - 2t)`.
    pub fn reference_radius(&self, t: f64) -> Option<f64> {
        match *self {
            Scenario::Circle { r, .. } => Some((r * r - 2.0 * t).sqrt()),
            _ => None,
        }
    }

    /// Total volume along mean curvature flow, where known in closed form.
    pub fn reference_area(&self, t: f64) -> Option<f64> {
        match *self {
            Scenario::FlatPlane => Some(4.0 * PI * PI),
            Scenario::Circle { r, .. } => Some(2.0 * PI * (r * r - 2.0 * t).sqrt()),
            Scenario::ProductTorus { r, s } => {
                Some(4.0 * PI * PI * ((r * r - 2.0 * t) * (s * s - 2.0 * t)).sqrt())
            }
            _ => None,
        }
    }

    /// Loop periods of `H`, conserved along Lagrangian mean curvature flow.
    pub fn reference_periods(&self) -> Option<Vec<f64>> {
        match self {
            Scenario::FlatPlane | Scenario::AffineSheet => Some(vec![0.0, 0.0]),
            Scenario::Circle { .. } | Scenario::Ellipse { .. } => Some(vec![-2.0 * PI]),
            Scenario::ProductTorus { .. } => Some(vec![-2.0 * PI, -2.0 * PI]),
            Scenario::LagrangianGraph { dim, .. } => Some(vec![0.0; *dim]),
            Scenario::PerturbedLagrangian { .. } => None,
        }
    }
}

/// Hessian of `a sin x¹ sin x²`.
fn hessian_sin_sin(a: f64, x: [f64; 2]) -> Vec<f64> {
    let (s1, c1) = x[0].sin_cos();
    let (s2, c2) = x[1].sin_cos();
    vec![-a * s1 * s2, a * c1 * c2, a * c1 * c2, -a * s1 * s2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryState;
    use crate::grid::Scheme;
    use serde_json::json;

    #[test]
    fn parses_names_and_params() {
        assert_eq!(
            make_scenario("product_torus(1,3)", &Value::Null).unwrap(),
            Scenario::ProductTorus { r: 1.0, s: 3.0 }
        );
        assert_eq!(
            make_scenario("circle", &json!({"r": 2.0})).unwrap(),
            Scenario::Circle { r: 2.0, phase: 0.0 }
        );
        assert!(matches!(
            make_scenario("sphere", &Value::Null),
            Err(Error::UnknownScenario(_))
        ));
        assert!(matches!(
            make_scenario("circle(0)", &Value::Null),
            Err(Error::InvalidParameter(_))
        ));
        assert!(make_scenario("ellipse(1,-2)", &Value::Null).is_err());
    }

    #[test]
    fn display_roundtrips() {
        for s in Scenario::library() {
            assert_eq!(make_scenario(&s.to_string(), &Value::Null).unwrap(), s);
        }
    }

    #[test]
    fn reference_metric_matches_pullback() {
        let mut all = Scenario::library();
        all.extend([Scenario::FlatPlane, Scenario::Circle { r: 2.0, phase: 0.3 }]);
        for s in all {
            let grid = ParamGrid::cube(s.dim(), 64, Scheme::Spectral).unwrap();
            let st = GeometryState::build(&s.immersion(&grid).unwrap()).unwrap();
            let mut worst: f64 = 0.0;
            for p in 0..grid.node_count() {
                let r = s.reference_metric(grid.coords(p));
                for (a, b) in st.g().node(p).iter().zip(&r) {
                    worst = worst.max((a - b).abs());
                }
            }
            assert!(worst <= 1e-10, "{s}: {worst:e}");
        }
    }

    #[test]
    fn lagrangian_tags_hold() {
        for s in Scenario::library().into_iter().chain([Scenario::FlatPlane]) {
            let grid = ParamGrid::cube(s.dim(), 64, Scheme::Spectral).unwrap();
            let st = GeometryState::build(&s.immersion(&grid).unwrap()).unwrap();
            if s.is_lagrangian() {
                assert!(st.omega_max() <= 1e-12, "{s}: {}", st.omega_max());
            } else {
                assert!(st.omega_max() > 1e-3, "{s}");
            }
        }
    }

    #[test]
    fn closed_form_references() {
        let c = make_scenario("circle(1)", &Value::Null).unwrap();
        assert!((c.reference_radius(0.375).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(c.reference_mean_curvature([0.0; 2]).unwrap(), vec![-1.0]);
        let t = make_scenario("product_torus(1,1)", &Value::Null).unwrap();
        assert!((t.reference_area(0.25).unwrap() - 2.0 * PI * PI).abs() < 1e-13);
        assert_eq!(t.reference_periods().unwrap(), vec![-2.0 * PI, -2.0 * PI]);
    }

    #[test]
    fn grid_dimension_checked() {
        let grid = ParamGrid::cube(2, 16, Scheme::Spectral).unwrap();
        assert!(Scenario::Circle { r: 1.0, phase: 0.0 }
            .immersion(&grid)
            .is_err());
    }
}
