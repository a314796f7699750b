//! Tension-field flow `df/dt = tau(f)` with respect to the evolving graph
//! metric, integrated by explicit Euler with a CFL guard and step rejection.
//! Stationary points are exactly the maps with minimal graphs.

use std::fmt;

use nalgebra::{Matrix2, Vector2, Vector4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph_geometry::{induced_metric, product_christoffel, ProductMetric};
use crate::map::MapField;
use crate::pointwise::{differential, second_derivatives, PointwiseGeometry};
use crate::surface::{Christoffels, LogFactor};
use crate::verifier::{area_decreasing_certificate, check_map_hypotheses, Certificate};

fn christoffels_of(lf: &LogFactor) -> Christoffels {
    crate::surface::christoffels_from_log_gradient(lf.ux, lf.uy)
}

/// `d_k g_ij` of the induced metric, by the chain rule from the map's
/// derivatives and the analytic derivatives of both conformal factors.
fn induced_metric_derivatives(
    df: &Matrix2<f64>,
    hess: &[Matrix2<f64>; 2],
    src: &LogFactor,
    tgt: &LogFactor,
) -> [Matrix2<f64>; 2] {
    let rho_n2 = tgt.rho * tgt.rho;
    let g_n = Matrix2::identity() * rho_n2;
    std::array::from_fn(|k| {
        let dk_gm =
            Matrix2::identity() * (2.0 * src.rho * src.rho * if k == 0 { src.ux } else { src.uy });
        // (d_k df)[gamma, i] = d_i d_k f^gamma
        let d_df = Matrix2::new(
            hess[0][(0, k)],
            hess[0][(1, k)],
            hess[1][(0, k)],
            hess[1][(1, k)],
        );
        let dk_gn =
            Matrix2::identity() * (2.0 * rho_n2 * (tgt.ux * df[(0, k)] + tgt.uy * df[(1, k)]));
        dk_gm
            + d_df.transpose() * g_n * df
            + df.transpose() * g_n * d_df
            + df.transpose() * dk_gn * df
    })
}

/// Tension field of `f` with respect to the graph metric from its derivatives.
pub fn tension_from_derivatives(
    df: &Matrix2<f64>,
    hess: &[Matrix2<f64>; 2],
    src: &LogFactor,
    tgt: &LogFactor,
) -> Result<Vector2<f64>> {
    let g_m = Matrix2::identity() * (src.rho * src.rho);
    let g_n = Matrix2::identity() * (tgt.rho * tgt.rho);
    let g = induced_metric(df, &g_m, &g_n)?;
    let inv = g.try_inverse().ok_or(Error::NotPositiveDefinite {
        what: "induced metric",
    })?;
    let dg = induced_metric_derivatives(df, hess, src, tgt);
    // Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)
    let lowered =
        |i: usize, j: usize, l: usize| 0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
    let gamma_n = christoffels_of(tgt);
    let mut tau = Vector2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            let w = inv[(i, j)];
            if w == 0.0 {
                continue;
            }
            let mut term = Vector2::new(hess[0][(i, j)], hess[1][(i, j)]);
            for k in 0..2 {
                let gk: f64 = (0..2).map(|l| inv[(k, l)] * lowered(i, j, l)).sum();
                term -= df.column(k) * gk;
            }
            for gamma in 0..2 {
                let mut s = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        s += gamma_n[gamma][a][b] * df[(a, i)] * df[(b, j)];
                    }
                }
                term[gamma] += s;
            }
            tau += term * w;
        }
    }
    Ok(tau)
}

/// Tension field at grid point `(i, j)`.
pub fn tension_field(map: &MapField, i: usize, j: usize) -> Result<Vector2<f64>> {
    let df = differential(map, i, j)?;
    let hess = second_derivatives(map, i, j)?;
    let [x, y] = map.grid().point(i, j);
    let [fx, fy] = map.value(i, j);
    tension_from_derivatives(
        &df,
        &hess,
        &map.source().log_factor(x, y)?,
        &map.target().log_factor(fx, fy)?,
    )
}

/// Mean curvature vector `(g^ij B_ij)^normal` as a product-chart 4-vector.
fn mean_curvature_vector(
    df: &Matrix2<f64>,
    hess: &[Matrix2<f64>; 2],
    ginv: &Matrix2<f64>,
    metric: &ProductMetric,
    gamma_m: &Christoffels,
    gamma_n: &Christoffels,
) -> Vector4<f64> {
    let d_f = [
        Vector4::new(1.0, 0.0, df[(0, 0)], df[(1, 0)]),
        Vector4::new(0.0, 1.0, df[(0, 1)], df[(1, 1)]),
    ];
    let mut trace = Vector4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            let b = Vector4::new(0.0, 0.0, hess[0][(i, j)], hess[1][(i, j)])
                + product_christoffel(gamma_m, gamma_n, &d_f[i], &d_f[j]);
            trace += b * ginv[(i, j)];
        }
    }
    let proj = Vector2::new(metric.inner(&trace, &d_f[0]), metric.inner(&trace, &d_f[1]));
    let coeff = ginv * proj;
    trace - d_f[0] * coeff[0] - d_f[1] * coeff[1]
}

/// Per-point quantities needed by one flow step.
#[derive(Debug, Clone, Copy)]
struct PointEval {
    tau: Vector2<f64>,
    tau_norm: f64,
    h_norm: f64,
    phi: f64,
    theta: f64,
    jf: f64,
    /// Largest eigenvalue of `g^-1`.
    ginv_max: f64,
}

fn evaluate(map: &MapField, src: &LogFactor, i: usize, j: usize) -> Result<PointEval> {
    let df = differential(map, i, j)?;
    let hess = second_derivatives(map, i, j)?;
    let [fx, fy] = map.value(i, j);
    let tgt = map.target().log_factor(fx, fy)?;
    let metric = ProductMetric::new(
        Matrix2::identity() * (src.rho * src.rho),
        Matrix2::identity() * (tgt.rho * tgt.rho),
    );
    let tau = tension_from_derivatives(&df, &hess, src, &tgt)?;
    let g = induced_metric(&df, &metric.g_m, &metric.g_n)?;
    let ginv = g.try_inverse().ok_or(Error::NotPositiveDefinite {
        what: "induced metric",
    })?;
    let h = mean_curvature_vector(
        &df,
        &hess,
        &ginv,
        &metric,
        &christoffels_of(src),
        &christoffels_of(&tgt),
    );
    let p = PointwiseGeometry::new(&df, &metric.g_m, &metric.g_n)?;
    let tr = ginv.trace();
    let disc = ((ginv[(0, 0)] - ginv[(1, 1)]).powi(2) + 4.0 * ginv[(0, 1)] * ginv[(1, 0)])
        .max(0.0)
        .sqrt();
    Ok(PointEval {
        tau,
        tau_norm: tgt.rho * tau.norm(),
        h_norm: metric.inner(&h, &h).sqrt(),
        phi: p.phi,
        theta: p.theta,
        jf: p.jf,
        ginv_max: 0.5 * (tr + disc),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub dt_initial: f64,
    pub dt_max: f64,
    /// `dt <= cfl_factor * h_min^2 / max eig(g^-1)`.
    pub cfl_factor: f64,
    pub stop_tension: f64,
    /// Limit on accepted steps.
    pub max_steps: usize,
    /// Factor applied to `dt` after an accepted step.
    pub growth: f64,
    /// A step is rejected when `||tau||` grows by more than this factor.
    pub max_tension_growth: f64,
    /// Below this `dt` the flow is declared stalled.
    pub dt_min: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt_initial: 1e-3,
            dt_max: 1.0,
            cfl_factor: 0.2,
            stop_tension: 1e-8,
            max_steps: 50_000,
            growth: 1.1,
            max_tension_growth: 10.0,
            dt_min: 1e-14,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt_initial", self.dt_initial),
            ("dt_max", self.dt_max),
            ("cfl_factor", self.cfl_factor),
            ("dt_min", self.dt_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.stop_tension < 0.0
            || self.growth.is_nan()
            || self.growth < 1.0
            || self.max_tension_growth.is_nan()
            || self.max_tension_growth <= 1.0
        {
            return Err(Error::InvalidParameter(
                "inconsistent flow step controls".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the monitor time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub min_phi: f64,
    pub min_theta: f64,
    pub max_abs_jf: f64,
    pub norm_h: f64,
    pub norm_tau: f64,
}

#[derive(Debug, Clone)]
struct Evaluation {
    /// Indices of the points that move.
    active: Vec<(usize, usize)>,
    points: Vec<PointEval>,
}

impl Evaluation {
    fn tension_sup(&self) -> f64 {
        self.points.iter().map(|p| p.tau_norm).fold(0.0, f64::max)
    }

    fn ginv_max(&self) -> f64 {
        self.points.iter().map(|p| p.ginv_max).fold(0.0, f64::max)
    }

    fn monitor(&self, step: usize, t: f64, dt: f64) -> MonitorRecord {
        let mut r = MonitorRecord {
            step,
            t,
            dt,
            min_phi: f64::INFINITY,
            min_theta: f64::INFINITY,
            max_abs_jf: 0.0,
            norm_h: 0.0,
            norm_tau: 0.0,
        };
        for p in &self.points {
            r.min_phi = r.min_phi.min(p.phi);
            r.min_theta = r.min_theta.min(p.theta);
            r.max_abs_jf = r.max_abs_jf.max(p.jf.abs());
            r.norm_h = r.norm_h.max(p.h_norm);
            r.norm_tau = r.norm_tau.max(p.tau_norm);
        }
        r
    }
}

/// Why a step was not taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Cfl,
    Escaped,
    TensionGrowth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    Rejected(Rejection),
}

#[derive(Debug, Clone)]
pub struct FlowState {
    map: MapField,
    source: Vec<LogFactor>,
    eval: Evaluation,
    pub t: f64,
    pub dt: f64,
    pub steps: usize,
    pub rejected: usize,
    pub tension_norm: f64,
    /// Row 0 describes the initial map; each accepted step appends one row.
    pub monitors: Vec<MonitorRecord>,
}

fn evaluate_all(
    map: &MapField,
    source: &[LogFactor],
    active: &[(usize, usize)],
) -> Result<Evaluation> {
    let grid = map.grid();
    let points = active
        .par_iter()
        .map(|&(i, j)| evaluate(map, &source[grid.index(i, j)], i, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        active: active.to_vec(),
        points,
    })
}

impl FlowState {
    pub fn new(map: MapField, config: &FlowConfig) -> Result<Self> {
        config.validate()?;
        let grid = map.grid().clone();
        let active: Vec<_> = grid
            .points()
            .filter(|&(i, j)| grid.margin(i, j) >= 1)
            .collect();
        if active.is_empty() {
            return Err(Error::InvalidGrid("no interior points to evolve".into()));
        }
        let source = grid
            .points()
            .map(|(i, j)| {
                let [x, y] = grid.point(i, j);
                map.source().log_factor(x, y)
            })
            .collect::<Result<Vec<_>>>()?;
        let eval = evaluate_all(&map, &source, &active)?;
        let tension_norm = eval.tension_sup();
        let monitors = vec![eval.monitor(0, 0.0, config.dt_initial)];
        Ok(Self {
            map,
            source,
            eval,
            t: 0.0,
            dt: config.dt_initial,
            steps: 0,
            rejected: 0,
            tension_norm,
            monitors,
        })
    }

    pub fn map(&self) -> &MapField {
        &self.map
    }

    pub fn into_map(self) -> MapField {
        self.map
    }

    /// Largest stable step for the current map.
    pub fn cfl_limit(&self, config: &FlowConfig) -> f64 {
        let g = self.map.grid();
        let h = g.hx().min(g.hy());
        config.cfl_factor * h * h / self.eval.ginv_max()
    }

    /// Current tension field at the moving points.
    pub fn tension(&self) -> impl Iterator<Item = ((usize, usize), Vector2<f64>)> + '_ {
        self.eval
            .active
            .iter()
            .copied()
            .zip(self.eval.points.iter().map(|p| p.tau))
    }

    fn reject(&mut self, why: Rejection, config: &FlowConfig) -> Result<StepOutcome> {
        self.dt *= 0.5;
        self.rejected += 1;
        if self.dt < config.dt_min {
            return Err(Error::FlowStalled {
                t: self.t,
                dt: self.dt,
            });
        }
        Ok(StepOutcome::Rejected(why))
    }

    /// Attempts one explicit Euler step with the current `dt`.
    pub fn step(&mut self, config: &FlowConfig) -> Result<StepOutcome> {
        let dt = self.dt;
        if dt > self.cfl_limit(config) {
            return self.reject(Rejection::Cfl, config);
        }
        let grid = self.map.grid().clone();
        let target = self.map.target().clone();
        let mut values = self.map.values().to_vec();
        for (&(i, j), p) in self.eval.active.iter().zip(&self.eval.points) {
            let v = &mut values[grid.index(i, j)];
            let next = [v[0] + dt * p.tau[0], v[1] + dt * p.tau[1]];
            if !target.contains(next[0], next[1]) {
                return self.reject(Rejection::Escaped, config);
            }
            *v = next;
        }
        let candidate = self.map.with_values(values);
        let eval = match evaluate_all(&candidate, &self.source, &self.eval.active) {
            Ok(e) => e,
            Err(e) if e.is_domain_error() || matches!(e, Error::NonPositiveFactor { .. }) => {
                return self.reject(Rejection::Escaped, config)
            }
            Err(e) => return Err(e),
        };
        let tension = eval.tension_sup();
        if !tension.is_finite()
            || tension > config.max_tension_growth * self.tension_norm.max(f64::MIN_POSITIVE)
        {
            return self.reject(Rejection::TensionGrowth, config);
        }
        self.map = candidate;
        self.eval = eval;
        self.tension_norm = tension;
        self.t += dt;
        self.steps += 1;
        self.monitors
            .push(self.eval.monitor(self.steps, self.t, dt));
        self.dt = (dt * config.growth)
            .min(config.dt_max)
            .min(self.cfl_limit(config));
        Ok(StepOutcome::Accepted)
    }

    /// Steps until one is accepted.
    pub fn advance(&mut self, config: &FlowConfig) -> Result<()> {
        loop {
            if self.step(config)? == StepOutcome::Accepted {
                return Ok(());
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowStatus {
    Converged,
    MaxSteps,
}

impl fmt::Display for FlowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowStatus::Converged => "converged",
            FlowStatus::MaxSteps => "max_steps",
        })
    }
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub state: FlowState,
    pub certificate: Certificate,
    pub status: FlowStatus,
}

/// Runs the flow until `||tau||_inf <= stop_tension` or `max_steps` accepted steps.
///
/// With `hypotheses`, the certificate records whether the curvature bounds hold.
pub fn run_to_minimal(
    map: MapField,
    config: &FlowConfig,
    hypotheses: Option<&crate::surface::TheoremHypotheses>,
    certificate_tol: f64,
) -> Result<FlowOutcome> {
    let mut state = FlowState::new(map, config)?;
    while state.tension_norm > config.stop_tension && state.steps < config.max_steps {
        state.advance(config)?;
    }
    let status = if state.tension_norm <= config.stop_tension {
        FlowStatus::Converged
    } else {
        FlowStatus::MaxSteps
    };
    let mut certificate = area_decreasing_certificate(state.map(), certificate_tol)?;
    if let Some(h) = hypotheses {
        certificate = certificate.with_hypotheses(check_map_hypotheses(state.map(), h)?.ok);
    }
    Ok(FlowOutcome {
        state,
        certificate,
        status,
    })
}

/// Sup over the interior of `||tau||` measured in `g_N`.
pub fn tension_sup(map: &MapField) -> Result<f64> {
    let grid = map.grid();
    let pts: Vec<_> = grid
        .points()
        .filter(|&(i, j)| grid.margin(i, j) >= 1)
        .collect();
    pts.par_iter()
        .map(|&(i, j)| {
            let tau = tension_field(map, i, j)?;
            let [fx, fy] = map.value(i, j);
            Ok(map.target().factor(fx, fy)? * tau.norm())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}
