//! Scenario configuration, read from TOML.
//!
//! ```toml
//! scenario = "analyze"          # analyze | verify | refine | flow | curvature
//!
//! [source]                      # metric on the domain chart
//! metric = "euclidean"          # poincare_disc | hyperbolic_scaled | euclidean | sphere | custom
//! # sigma = 2.0                 # hyperbolic_scaled: curvature is -sigma
//! # factor = "1/(1+x^2+y^2)"    # custom: conformal factor rho(x, y)
//! # radius = 1.0                # custom: optional chart radius
//!
//! [target]
//! metric = "euclidean"
//!
//! [map]
//! preset = "paper_example"      # paper_example | identity | z_squared | mobius | affine
//!                               # | constant | scale | expression
//! # a = [0.2, 0.1]              # mobius
//! # matrix = [1.0, 0.0, 0.0, 1.0]  # affine, row major
//! # value = [0.0, 0.0]          # constant
//! # k = 0.5                     # scale
//! # expression = "x, y"         # expression
//! # bump = 0.01                 # optional bump amplitude vanishing on the grid edges
//!
//! [grid]
//! x = [-2.0, 2.0]
//! y = [-3.141592653589793, 3.141592653589793]
//! n = 129                       # or nx, ny
//! boundary = "dirichlet"        # dirichlet | periodic
//!
//! [tolerance]
//! classify = 1e-9
//! certificate = 1e-6
//! minimality_factor = 10.0
//! mask_floor = 1e-8
//!
//! [hypotheses]                  # optional curvature bounds
//! sigma = 1.0
//! beta = 1.0
//!
//! [refine]
//! levels = 3
//!
//! [flow]
//! dt_initial = 1e-3
//! dt_max = 1.0
//! cfl_factor = 0.2
//! stop_tension = 1e-8
//! max_steps = 50000
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use minmap_core::flow::FlowConfig;
use minmap_core::surface::TheoremHypotheses;
use minmap_core::verifier::{MASK_FLOOR, MINIMALITY_FACTOR};
use minmap_core::{expr, BoundaryMode, Bump, ConformalMetric, GridChart, MapFormula};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Analyze,
    Verify,
    Refine,
    Flow,
    Curvature,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub metric: String,
    pub sigma: Option<f64>,
    pub factor: Option<String>,
    pub radius: Option<f64>,
}

impl MetricSpec {
    pub fn named(name: &str) -> Self {
        Self {
            metric: name.into(),
            sigma: None,
            factor: None,
            radius: None,
        }
    }

    pub fn build(&self) -> Result<ConformalMetric, CliError> {
        match self.metric.as_str() {
            "poincare_disc" | "poincare" => Ok(ConformalMetric::poincare_disc()),
            "hyperbolic_scaled" => {
                let s = self
                    .sigma
                    .ok_or_else(|| CliError::config("hyperbolic_scaled needs `sigma`"))?;
                Ok(ConformalMetric::hyperbolic_scaled(s)?)
            }
            "euclidean" => Ok(ConformalMetric::euclidean()),
            "sphere" | "sphere_stereographic" => Ok(ConformalMetric::sphere_stereographic()),
            "custom" => {
                let f = self
                    .factor
                    .as_deref()
                    .ok_or_else(|| CliError::config("custom metric needs `factor`"))?;
                Ok(ConformalMetric::custom_expression(f, self.radius)?)
            }
            other => Err(CliError::config(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub preset: String,
    pub a: Option<[f64; 2]>,
    pub matrix: Option<[f64; 4]>,
    pub value: Option<[f64; 2]>,
    pub k: Option<f64>,
    pub expression: Option<String>,
    pub bump: Option<f64>,
}

impl MapSpec {
    pub fn named(name: &str) -> Self {
        Self {
            preset: name.into(),
            ..Default::default()
        }
    }

    pub fn build(&self, grid: &GridChart) -> Result<MapFormula, CliError> {
        let need =
            |what: &str| CliError::config(format!("map preset `{}` needs `{what}`", self.preset));
        let base = match self.preset.as_str() {
            "paper_example" => MapFormula::PaperExample,
            "identity" => MapFormula::Identity,
            "z_squared" => MapFormula::ZSquared,
            "mobius" => MapFormula::Mobius {
                a: self.a.ok_or_else(|| need("a"))?,
            },
            "affine" => {
                let [a, b, c, d] = self.matrix.ok_or_else(|| need("matrix"))?;
                MapFormula::Affine { a, b, c, d }
            }
            "constant" => MapFormula::Constant {
                value: self.value.unwrap_or([0.0, 0.0]),
            },
            "scale" => MapFormula::Scale(self.k.ok_or_else(|| need("k"))?),
            "expression" => {
                let text = self
                    .expression
                    .as_deref()
                    .ok_or_else(|| need("expression"))?;
                MapFormula::Expression(
                    expr::parse_map_expression(text).map_err(minmap_core::Error::from)?,
                )
            }
            other => return Err(CliError::config(format!("unknown map preset `{other}`"))),
        };
        Ok(match self.bump {
            Some(eps) if eps != 0.0 => base.perturbed(Bump::on_grid(grid, eps)),
            _ => base,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub n: Option<usize>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    #[serde(default)]
    pub boundary: Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Dirichlet,
    Periodic,
}

impl GridSpec {
    pub fn build(&self) -> Result<GridChart, CliError> {
        let nx = self
            .nx
            .or(self.n)
            .ok_or_else(|| CliError::config("grid needs `n` or `nx`"))?;
        let ny = self
            .ny
            .or(self.n)
            .ok_or_else(|| CliError::config("grid needs `n` or `ny`"))?;
        let mode = match self.boundary {
            Boundary::Dirichlet => BoundaryMode::Dirichlet,
            Boundary::Periodic => BoundaryMode::Periodic,
        };
        Ok(GridChart::new(
            (self.x[0], self.x[1]),
            (self.y[0], self.y[1]),
            nx,
            ny,
            mode,
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub classify: f64,
    pub certificate: f64,
    pub minimality_factor: f64,
    pub mask_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            classify: 1e-9,
            certificate: 1e-6,
            minimality_factor: MINIMALITY_FACTOR,
            mask_floor: MASK_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesesSpec {
    pub sigma: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSpec {
    pub levels: usize,
}

impl Default for RefineSpec {
    fn default() -> Self {
        Self { levels: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSpec {
    pub dt_initial: f64,
    pub dt_max: f64,
    pub cfl_factor: f64,
    pub stop_tension: f64,
    pub max_steps: usize,
}

impl Default for FlowSpec {
    fn default() -> Self {
        let d = FlowConfig::default();
        Self {
            dt_initial: d.dt_initial,
            dt_max: d.dt_max,
            cfl_factor: d.cfl_factor,
            stop_tension: d.stop_tension,
            max_steps: d.max_steps,
        }
    }
}

impl FlowSpec {
    pub fn config(&self) -> FlowConfig {
        FlowConfig {
            dt_initial: self.dt_initial,
            dt_max: self.dt_max,
            cfl_factor: self.cfl_factor,
            stop_tension: self.stop_tension,
            max_steps: self.max_steps,
            ..FlowConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Option<Scenario>,
    pub source: MetricSpec,
    pub target: MetricSpec,
    pub map: MapSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub tolerance: Tolerances,
    pub hypotheses: Option<HypothesesSpec>,
    #[serde(default)]
    pub refine: RefineSpec,
    #[serde(default)]
    pub flow: FlowSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Built-in scenario for a map preset: its natural metrics and grid.
    pub fn preset(name: &str) -> Result<Self, CliError> {
        let square = |half: f64, n| GridSpec {
            x: [-half, half],
            y: [-half, half],
            n: Some(n),
            nx: None,
            ny: None,
            boundary: Boundary::Dirichlet,
        };
        let (metric, map, grid, hypotheses) = match name {
            "paper_example" => (
                "euclidean",
                MapSpec::named(name),
                GridSpec {
                    x: [-2.0, 2.0],
                    y: [-std::f64::consts::PI, std::f64::consts::PI],
                    n: Some(129),
                    nx: None,
                    ny: None,
                    boundary: Boundary::Dirichlet,
                },
                None,
            ),
            "z_squared" | "identity" | "constant" => (
                "poincare_disc",
                MapSpec {
                    bump: None,
                    ..MapSpec::named(name)
                },
                square(0.6, 65),
                Some(HypothesesSpec {
                    sigma: 1.0,
                    beta: 1.0,
                }),
            ),
            "perturbed_z_squared" => (
                "poincare_disc",
                MapSpec {
                    bump: Some(0.01),
                    ..MapSpec::named("z_squared")
                },
                square(0.6, 65),
                Some(HypothesesSpec {
                    sigma: 1.0,
                    beta: 1.0,
                }),
            ),
            other => {
                return Err(CliError::config(format!(
                    "no built-in scenario for preset `{other}`"
                )))
            }
        };
        Ok(Self {
            scenario: None,
            source: MetricSpec::named(metric),
            target: MetricSpec::named(metric),
            map,
            grid,
            tolerance: Tolerances::default(),
            hypotheses,
            refine: RefineSpec::default(),
            flow: FlowSpec::default(),
            output: OutputSpec::default(),
        })
    }

    pub fn hypotheses(&self) -> Result<Option<TheoremHypotheses>, CliError> {
        self.hypotheses
            .map(|h| TheoremHypotheses::new(h.sigma, h.beta).map_err(CliError::from))
            .transpose()
    }
}
