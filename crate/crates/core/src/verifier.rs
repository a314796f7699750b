//! Residual checks of the structure identities on a sampled graph, refinement
//! studies, curvature-hypothesis checks and area-decreasing certificates.
//!
//! Residuals are `left side - right side` per grid point. `Delta` is the trace
//! of the Hessian, so the identities read `-Delta u = ...`.

use std::fmt;

use nalgebra::Matrix4;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph_geometry::{
    ambient_curvature, form_in_frame, gradient_norm_sq, laplace_beltrami, GeometryField,
    GraphGeometry, MetricField, ParallelForm, ScalarField,
};
use crate::map::MapField;
use crate::pointwise::{differential, PointwiseGeometry};
use crate::surface::{ConformalMetric, GridChart, TheoremHypotheses};

/// Default floor on `1 - phi^2` (resp. `1 - theta^2`) for the gradient identities.
pub const MASK_FLOOR: f64 = 1e-8;
/// A map counts as minimal when `||H||_inf <= MINIMALITY_FACTOR * h^2`.
pub const MINIMALITY_FACTOR: f64 = 10.0;
/// Residual norms at or below this are reported as exact.
pub const EXACT_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Identity {
    PullbackDerivative,
    FormLaplacian,
    JacobianLaplacians,
    GradientIdentities,
    AngleLaplacians,
}

impl Identity {
    pub const ALL: [Identity; 5] = [
        Identity::PullbackDerivative,
        Identity::FormLaplacian,
        Identity::JacobianLaplacians,
        Identity::GradientIdentities,
        Identity::AngleLaplacians,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Identity::PullbackDerivative => "pullback_derivative",
            Identity::FormLaplacian => "form_laplacian",
            Identity::JacobianLaplacians => "jacobian_laplacians",
            Identity::GradientIdentities => "gradient_identities",
            Identity::AngleLaplacians => "angle_laplacians",
        }
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Deliberate corruptions used to show that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Mutation {
    /// Replace `sigma_perp` by `-sigma_perp` in every right side.
    pub flip_sigma_perp: bool,
    /// Exchange `sigma_M` and `sigma_N` in the `u_2` equation.
    pub swap_curvatures_u2: bool,
}

/// Axis-aligned box restricting where norms are taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Region {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let eps = 1e-9 * (self.x.1 - self.x.0).abs().max((self.y.1 - self.y.0).abs());
        p[0] >= self.x.0 - eps
            && p[0] <= self.x.1 + eps
            && p[1] >= self.y.0 - eps
            && p[1] <= self.y.1 + eps
    }

    /// Points of `grid` at distance at least `margin` cells from the boundary.
    pub fn inset(grid: &GridChart, margin: usize) -> Self {
        let (x0, x1) = grid.x_range();
        let (y0, y1) = grid.y_range();
        let (mx, my) = (margin as f64 * grid.hx(), margin as f64 * grid.hy());
        Self {
            x: (x0 + mx, x1 - mx),
            y: (y0 + my, y1 - my),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub mutation: Mutation,
    pub mask_floor: f64,
    pub minimality_factor: f64,
    pub region: Option<Region>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            mutation: Mutation::default(),
            mask_floor: MASK_FLOOR,
            minimality_factor: MINIMALITY_FACTOR,
            region: None,
        }
    }
}

/// One residual field of an identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualComponent {
    pub name: String,
    pub field: Vec<Option<f64>>,
    pub norm_inf: f64,
    pub norm_l2: f64,
    /// Points excluded by the mask.
    pub masked: usize,
    /// Points contributing to the norms.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub identity: Identity,
    pub grid: GridChart,
    pub components: Vec<ResidualComponent>,
    pub norm_inf: f64,
    pub norm_l2: f64,
    pub h: f64,
    pub minimality_defect: f64,
    pub minimality_threshold: f64,
    pub warnings: Vec<String>,
}

impl ResidualReport {
    pub fn is_minimal(&self) -> bool {
        self.minimality_defect <= self.minimality_threshold
    }

    pub fn component(&self, name: &str) -> Option<&ResidualComponent> {
        self.components.iter().find(|c| c.name == name)
    }

    /// Largest absolute component residual per grid point.
    pub fn residual_field(&self) -> Vec<Option<f64>> {
        (0..self.grid.len())
            .map(|k| {
                self.components
                    .iter()
                    .filter_map(|c| c.field[k])
                    .map(f64::abs)
                    .reduce(f64::max)
            })
            .collect()
    }
}

impl fmt::Display for ResidualReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: inf {:.3e}  l2 {:.3e}  h {:.4e}  |H|inf {:.3e}",
            self.identity, self.norm_inf, self.norm_l2, self.h, self.minimality_defect
        )?;
        for c in &self.components {
            writeln!(
                f,
                "  {:<16} inf {:.3e}  l2 {:.3e}  samples {}  masked {}",
                c.name, c.norm_inf, c.norm_l2, c.samples, c.masked
            )?;
        }
        for w in &self.warnings {
            writeln!(f, "  warning: {w}")?;
        }
        Ok(())
    }
}

/// Per-point evaluation result of one component.
enum Cell {
    Skip,
    Masked,
    Value(f64),
}

struct Context<'a> {
    geom: &'a GeometryField,
    metric: MetricField,
    opts: VerifyOptions,
}

impl<'a> Context<'a> {
    fn new(geom: &'a GeometryField, opts: VerifyOptions) -> Self {
        Self {
            geom,
            metric: geom.metric_field(),
            opts,
        }
    }

    fn sigma_perp(&self, p: &GraphGeometry) -> f64 {
        if self.opts.mutation.flip_sigma_perp {
            -p.sigma_perp
        } else {
            p.sigma_perp
        }
    }

    fn component(
        &self,
        name: &str,
        eval: impl Fn(usize, usize, &GraphGeometry) -> Result<Cell> + Sync,
    ) -> Result<ResidualComponent> {
        let grid = self.geom.grid();
        let cells = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j) = grid.coords(idx);
                match self.geom.get(i, j) {
                    None => Ok(Cell::Skip),
                    Some(p) => match eval(i, j, p) {
                        Err(Error::Stencil { .. }) => Ok(Cell::Skip),
                        other => other,
                    },
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut field = vec![None; grid.len()];
        let (mut inf, mut sq, mut masked, mut samples) = (0.0f64, 0.0, 0, 0);
        for (idx, cell) in cells.into_iter().enumerate() {
            let (i, j) = grid.coords(idx);
            let inside = self
                .opts
                .region
                .is_none_or(|r| r.contains(grid.point(i, j)));
            match cell {
                Cell::Skip => {}
                Cell::Masked => masked += usize::from(inside),
                Cell::Value(v) => {
                    if !v.is_finite() {
                        return Err(Error::NonFinite("residual field"));
                    }
                    field[idx] = Some(v);
                    if inside {
                        inf = inf.max(v.abs());
                        sq += v * v;
                        samples += 1;
                    }
                }
            }
        }
        Ok(ResidualComponent {
            name: name.to_string(),
            field,
            norm_inf: inf,
            norm_l2: (sq * grid.hx() * grid.hy()).sqrt(),
            masked,
            samples,
        })
    }

    fn report(&self, identity: Identity, components: Vec<ResidualComponent>) -> ResidualReport {
        let grid = self.geom.grid().clone();
        let h = grid.h();
        let defect = self.geom.mean_curvature_sup();
        let threshold = self.opts.minimality_factor * h * h;
        let mut warnings = Vec::new();
        if defect > threshold {
            warnings.push(format!(
                "minimality defect {defect:.3e} exceeds {threshold:.3e}; the identity assumes a minimal map"
            ));
        }
        for c in &components {
            if c.samples == 0 {
                warnings.push(format!("component {} has no unmasked samples", c.name));
            }
        }
        ResidualReport {
            identity,
            norm_inf: components.iter().map(|c| c.norm_inf).fold(0.0, f64::max),
            norm_l2: components
                .iter()
                .map(|c| c.norm_l2 * c.norm_l2)
                .sum::<f64>()
                .sqrt(),
            grid,
            components,
            h,
            minimality_defect: defect,
            minimality_threshold: threshold,
            warnings,
        }
    }
}

fn form_label(which: ParallelForm) -> &'static str {
    match which {
        ParallelForm::Omega1 => "omega1",
        ParallelForm::Omega2 => "omega2",
    }
}

/// `e_k(u) = sum_a A^a_k1 w(e_a, e_2) + A^a_k2 w(e_1, e_a)` for `u = *(F* w)`.
fn pullback_derivative_components(
    ctx: &Context<'_>,
    which: ParallelForm,
) -> Result<Vec<ResidualComponent>> {
    let u = ctx.geom.scalar(|p| p.form_scalar(which));
    (0..2)
        .map(|k| {
            let name = format!("{}_e{}", form_label(which), k + 1);
            ctx.component(&name, |i, j, p| {
                let du = u.gradient(i, j)?;
                let c = p.frame.source_parts()[k];
                let w = form_in_frame(which, &p.metric, &p.frame);
                let rhs: f64 = (0..2)
                    .map(|a| {
                        p.shape.a[a][(k, 0)] * w[(a + 2, 1)] + p.shape.a[a][(k, 1)] * w[(0, a + 2)]
                    })
                    .sum();
                Ok(Cell::Value(c.dot(&du) - rhs))
            })
        })
        .collect()
}

pub fn verify_pullback_derivative(
    geom: &GeometryField,
    which: ParallelForm,
    opts: VerifyOptions,
) -> Result<ResidualReport> {
    let ctx = Context::new(geom, opts);
    let comps = pullback_derivative_components(&ctx, which)?;
    Ok(ctx.report(Identity::PullbackDerivative, comps))
}

/// Right side of the form-Laplacian identity at `(i, j) = (1, 2)`.
pub fn form_laplacian_rhs(p: &GraphGeometry, which: ParallelForm) -> f64 {
    let w: Matrix4<f64> = form_in_frame(which, &p.metric, &p.frame);
    let a = |alpha: usize, i: usize, j: usize| p.shape.a[alpha - 2][(i, j)];
    let e = &p.frame.e;
    let r = |x: usize, y: usize, z: usize, t: usize| {
        ambient_curvature(
            &p.metric,
            p.curvature_m,
            p.curvature_n,
            [&e[x], &e[y], &e[z], &e[t]],
        )
    };
    let (i, j) = (0, 1);
    let mut s = 0.0;
    for alpha in 2..4 {
        for k in 0..2 {
            for l in 0..2 {
                s += a(alpha, k, i) * a(alpha, k, l) * w[(l, j)]
                    + a(alpha, k, j) * a(alpha, k, l) * w[(i, l)];
            }
        }
    }
    for alpha in 2..4 {
        for beta in 2..4 {
            for k in 0..2 {
                s -= 2.0 * a(alpha, k, i) * a(beta, k, j) * w[(alpha, beta)];
            }
        }
    }
    for alpha in 2..4 {
        for k in 0..2 {
            s += r(k, i, k, alpha) * w[(alpha, j)] + r(k, j, k, alpha) * w[(i, alpha)];
        }
    }
    s
}

fn form_laplacian_component(ctx: &Context<'_>, which: ParallelForm) -> Result<ResidualComponent> {
    let u = ctx.geom.scalar(|p| p.form_scalar(which));
    ctx.component(form_label(which), |i, j, p| {
        let lap = laplace_beltrami(&ctx.metric, &u, i, j)?;
        Ok(Cell::Value(-lap - form_laplacian_rhs(p, which)))
    })
}

pub fn verify_form_laplacian(
    geom: &GeometryField,
    which: ParallelForm,
    opts: VerifyOptions,
) -> Result<ResidualReport> {
    let ctx = Context::new(geom, opts);
    let comp = form_laplacian_component(&ctx, which)?;
    Ok(ctx.report(Identity::FormLaplacian, vec![comp]))
}

pub fn verify_jacobian_laplacians(
    geom: &GeometryField,
    opts: VerifyOptions,
) -> Result<ResidualReport> {
    let ctx = Context::new(geom, opts);
    let u1 = geom.scalar(|p| p.point.u1);
    let u2 = geom.scalar(|p| p.point.u2);
    let c1 = ctx.component("u1", |i, j, p| {
        let (a1, a2) = (p.point.u1, p.point.u2);
        let (sm, sn) = (p.curvature_m, p.curvature_n);
        let rhs =
            p.norm_a2 * a1 + 2.0 * ctx.sigma_perp(p) * a2 + sm * (1.0 - a1 * a1 - a2 * a2) * a1
                - 2.0 * sn * a1 * a2 * a2;
        Ok(Cell::Value(
            -laplace_beltrami(&ctx.metric, &u1, i, j)? - rhs,
        ))
    })?;
    let c2 = ctx.component("u2", |i, j, p| {
        let (a1, a2) = (p.point.u1, p.point.u2);
        let (sm, sn) = if ctx.opts.mutation.swap_curvatures_u2 {
            (p.curvature_n, p.curvature_m)
        } else {
            (p.curvature_m, p.curvature_n)
        };
        let rhs =
            p.norm_a2 * a2 + 2.0 * ctx.sigma_perp(p) * a1 + sn * (1.0 - a1 * a1 - a2 * a2) * a2
                - 2.0 * sm * a1 * a1 * a2;
        Ok(Cell::Value(
            -laplace_beltrami(&ctx.metric, &u2, i, j)? - rhs,
        ))
    })?;
    Ok(ctx.report(Identity::JacobianLaplacians, vec![c1, c2]))
}

/// `2 |grad phi|^2 = (|A|^2 - 2 sigma_perp)(1 - phi^2)` and the `theta` version.
///
/// Each identity is masked where its own `1 - angle^2` falls below the floor.
pub fn verify_gradient_identities(
    geom: &GeometryField,
    opts: VerifyOptions,
) -> Result<ResidualReport> {
    let ctx = Context::new(geom, opts);
    let mut comps = Vec::new();
    for (name, sign) in [("grad_phi", -1.0), ("grad_theta", 1.0)] {
        let angle = move |p: &GraphGeometry| {
            if sign < 0.0 {
                p.point.phi
            } else {
                p.point.theta
            }
        };
        let field = geom.scalar(angle);
        comps.push(ctx.component(name, |i, j, p| {
            let a = angle(p);
            let gap = 1.0 - a * a;
            if gap < ctx.opts.mask_floor {
                return Ok(Cell::Masked);
            }
            let lhs = 2.0 * gradient_norm_sq(&ctx.metric, &field, i, j)?;
            Ok(Cell::Value(
                lhs - (p.norm_a2 + sign * 2.0 * ctx.sigma_perp(p)) * gap,
            ))
        })?);
    }
    Ok(ctx.report(Identity::GradientIdentities, comps))
}

/// The `-Delta phi` and `-Delta theta` equations.
pub fn verify_angle_laplacians(
    geom: &GeometryField,
    opts: VerifyOptions,
) -> Result<ResidualReport> {
    let ctx = Context::new(geom, opts);
    let phi = geom.scalar(|p| p.point.phi);
    let theta = geom.scalar(|p| p.point.theta);
    let c1 = ctx.component("lap_phi", |i, j, p| {
        let (f, t) = (p.point.phi, p.point.theta);
        let (sm, sn) = (p.curvature_m, p.curvature_n);
        let rhs = (p.norm_a2 - 2.0 * ctx.sigma_perp(p)) * f
            + 0.5 * (sm * (f + t) + sn * (f - t)) * (1.0 - f * f);
        Ok(Cell::Value(
            -laplace_beltrami(&ctx.metric, &phi, i, j)? - rhs,
        ))
    })?;
    let c2 = ctx.component("lap_theta", |i, j, p| {
        let (f, t) = (p.point.phi, p.point.theta);
        let (sm, sn) = (p.curvature_m, p.curvature_n);
        let rhs = (p.norm_a2 + 2.0 * ctx.sigma_perp(p)) * t
            + 0.5 * (sm * (f + t) - sn * (f - t)) * (1.0 - t * t);
        Ok(Cell::Value(
            -laplace_beltrami(&ctx.metric, &theta, i, j)? - rhs,
        ))
    })?;
    Ok(ctx.report(Identity::AngleLaplacians, vec![c1, c2]))
}

/// Runs one identity; the form identities cover both parallel forms.
pub fn verify(
    geom: &GeometryField,
    identity: Identity,
    opts: VerifyOptions,
) -> Result<ResidualReport> {
    match identity {
        Identity::PullbackDerivative => {
            let ctx = Context::new(geom, opts);
            let mut comps = pullback_derivative_components(&ctx, ParallelForm::Omega1)?;
            comps.extend(pullback_derivative_components(&ctx, ParallelForm::Omega2)?);
            Ok(ctx.report(identity, comps))
        }
        Identity::FormLaplacian => {
            let ctx = Context::new(geom, opts);
            let comps = vec![
                form_laplacian_component(&ctx, ParallelForm::Omega1)?,
                form_laplacian_component(&ctx, ParallelForm::Omega2)?,
            ];
            Ok(ctx.report(identity, comps))
        }
        Identity::JacobianLaplacians => verify_jacobian_laplacians(geom, opts),
        Identity::GradientIdentities => verify_gradient_identities(geom, opts),
        Identity::AngleLaplacians => verify_angle_laplacians(geom, opts),
    }
}

pub fn verify_all(geom: &GeometryField, opts: VerifyOptions) -> Result<Vec<ResidualReport>> {
    Identity::ALL
        .iter()
        .map(|id| verify(geom, *id, opts))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order {
    /// Every residual is at rounding level.
    Exact,
    Measured(f64),
}

impl Order {
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        match self {
            Order::Exact => true,
            Order::Measured(p) => (lo..=hi).contains(p),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Order::Exact => None,
            Order::Measured(p) => Some(*p),
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Exact => f.write_str("exact"),
            Order::Measured(p) => write!(f, "{p:.3}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub label: String,
    pub spacings: Vec<f64>,
    pub norms: Vec<f64>,
    /// `log2(norm(h) / norm(h/2))` for consecutive levels.
    pub pair_orders: Vec<f64>,
    pub estimated_order: Order,
}

impl ConvergenceStudy {
    pub fn from_norms(
        label: impl Into<String>,
        spacings: Vec<f64>,
        norms: Vec<f64>,
    ) -> Result<Self> {
        if spacings.len() < 3 || norms.len() != spacings.len() {
            return Err(Error::TooFewLevels {
                needed: 3,
                got: spacings.len().min(norms.len()),
            });
        }
        for w in spacings.windows(2) {
            if ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
                return Err(Error::NonNestedSpacings {
                    coarse: w[0],
                    fine: w[1],
                });
            }
        }
        let pair_orders: Vec<f64> = norms.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        let estimated_order = if norms.iter().all(|n| *n <= EXACT_FLOOR) {
            Order::Exact
        } else {
            Order::Measured(pair_orders.iter().sum::<f64>() / pair_orders.len() as f64)
        };
        Ok(Self {
            label: label.into(),
            spacings,
            norms,
            pair_orders,
            estimated_order,
        })
    }

    pub fn passes(&self, lo: f64, hi: f64) -> bool {
        self.estimated_order.within(lo, hi)
    }
}

impl fmt::Display for ConvergenceStudy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: order {}", self.label, self.estimated_order)?;
        for (h, n) in self.spacings.iter().zip(&self.norms) {
            write!(f, "  [h {h:.4e}: {n:.3e}]")?;
        }
        Ok(())
    }
}

/// Samples `formula` on `levels` successively refined copies of `grid`.
pub fn refinement_levels(
    grid: &GridChart,
    formula: &crate::map::MapFormula,
    source: &ConformalMetric,
    target: &ConformalMetric,
    levels: usize,
) -> Result<Vec<MapField>> {
    let mut out = Vec::with_capacity(levels);
    let mut g = grid.clone();
    for _ in 0..levels {
        out.push(MapField::sample(
            g.clone(),
            formula.clone(),
            source.clone(),
            target.clone(),
        )?);
        g = g.refined();
    }
    Ok(out)
}

fn check_nested(levels: &[MapField]) -> Result<()> {
    if levels.len() < 3 {
        return Err(Error::TooFewLevels {
            needed: 3,
            got: levels.len(),
        });
    }
    for w in levels.windows(2) {
        let (a, b) = (w[0].grid(), w[1].grid());
        for (c, f) in [(a.hx(), b.hx()), (a.hy(), b.hy())] {
            if ((c / f) - 2.0).abs() > 1e-9 {
                return Err(Error::NonNestedSpacings { coarse: c, fine: f });
            }
        }
    }
    Ok(())
}

/// Residual norms of `identity` over nested grids, measured on the coarsest
/// level's margin-3 box so every level is compared on the same region.
pub fn refinement_study(
    levels: &[MapField],
    identity: Identity,
    opts: VerifyOptions,
) -> Result<ConvergenceStudy> {
    check_nested(levels)?;
    let opts = VerifyOptions {
        region: opts.region.or(Some(Region::inset(levels[0].grid(), 3))),
        ..opts
    };
    let mut spacings = Vec::new();
    let mut norms = Vec::new();
    for m in levels {
        let geom = GeometryField::compute(m)?;
        let report = verify(&geom, identity, opts)?;
        spacings.push(m.grid().h());
        norms.push(report.norm_inf);
    }
    ConvergenceStudy::from_norms(identity.label(), spacings, norms)
}

/// `||H||_inf` over nested grids.
pub fn mean_curvature_study(levels: &[MapField]) -> Result<ConvergenceStudy> {
    check_nested(levels)?;
    let mut spacings = Vec::new();
    let mut norms = Vec::new();
    for m in levels {
        spacings.push(m.grid().h());
        norms.push(GeometryField::compute(m)?.mean_curvature_sup());
    }
    ConvergenceStudy::from_norms("mean_curvature", spacings, norms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypothesisBound {
    /// `sigma_M >= -sigma`
    SourceLower,
    /// `sigma_N <= -sigma`
    TargetUpper,
    /// `sigma_N >= -beta`
    TargetLower,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisViolation {
    pub bound: HypothesisBound,
    pub point: [f64; 2],
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisCheck {
    pub ok: bool,
    pub min_source: f64,
    pub max_target: f64,
    pub min_target: f64,
    /// Worst violations first, at most [`HypothesisCheck::MAX_REPORTED`].
    pub violations: Vec<HypothesisViolation>,
}

impl HypothesisCheck {
    pub const MAX_REPORTED: usize = 16;
}

/// Samples the source curvature at `source_points` and the target curvature at `target_points`.
pub fn check_hypotheses(
    source: &ConformalMetric,
    target: &ConformalMetric,
    hyp: &TheoremHypotheses,
    source_points: &[[f64; 2]],
    target_points: &[[f64; 2]],
) -> Result<HypothesisCheck> {
    let mut v: Vec<(f64, HypothesisViolation)> = Vec::new();
    let (mut min_s, mut max_t, mut min_t) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    for p in source_points {
        let k = source.gauss_curvature(p[0], p[1])?;
        min_s = min_s.min(k);
        if k < -hyp.sigma {
            v.push((
                -hyp.sigma - k,
                HypothesisViolation {
                    bound: HypothesisBound::SourceLower,
                    point: *p,
                    curvature: k,
                },
            ));
        }
    }
    for p in target_points {
        let k = target.gauss_curvature(p[0], p[1])?;
        max_t = max_t.max(k);
        min_t = min_t.min(k);
        if k > -hyp.sigma {
            v.push((
                k + hyp.sigma,
                HypothesisViolation {
                    bound: HypothesisBound::TargetUpper,
                    point: *p,
                    curvature: k,
                },
            ));
        }
        if k < -hyp.beta {
            v.push((
                -hyp.beta - k,
                HypothesisViolation {
                    bound: HypothesisBound::TargetLower,
                    point: *p,
                    curvature: k,
                },
            ));
        }
    }
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    let ok = v.is_empty();
    Ok(HypothesisCheck {
        ok,
        min_source: min_s,
        max_target: max_t,
        min_target: min_t,
        violations: v
            .into_iter()
            .take(HypothesisCheck::MAX_REPORTED)
            .map(|x| x.1)
            .collect(),
    })
}

/// Hypotheses sampled on the map's grid and its image.
pub fn check_map_hypotheses(map: &MapField, hyp: &TheoremHypotheses) -> Result<HypothesisCheck> {
    let grid = map.grid();
    let src: Vec<[f64; 2]> = grid.points().map(|(i, j)| grid.point(i, j)).collect();
    check_hypotheses(map.source(), map.target(), hyp, &src, map.values())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub value: f64,
    pub index: (usize, usize),
    pub point: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub min_phi: Extremum,
    pub min_theta: Extremum,
    pub max_abs_jf: Extremum,
    /// `None` when no hypotheses were checked.
    pub hypothesis_ok: Option<bool>,
    pub area_decreasing: bool,
    pub tol: f64,
}

impl Certificate {
    pub fn from_points<'a>(
        grid: &GridChart,
        points: impl Iterator<Item = ((usize, usize), &'a PointwiseGeometry)>,
        tol: f64,
    ) -> Result<Self> {
        let mut best: Option<[Extremum; 3]> = None;
        for ((i, j), p) in points {
            let point = grid.point(i, j);
            let mk = |value| Extremum {
                value,
                index: (i, j),
                point,
            };
            let cur = [mk(p.phi), mk(p.theta), mk(p.jf.abs())];
            best = Some(match best {
                None => cur,
                Some(b) => [
                    if cur[0].value < b[0].value {
                        cur[0]
                    } else {
                        b[0]
                    },
                    if cur[1].value < b[1].value {
                        cur[1]
                    } else {
                        b[1]
                    },
                    if cur[2].value > b[2].value {
                        cur[2]
                    } else {
                        b[2]
                    },
                ],
            });
        }
        let [min_phi, min_theta, max_abs_jf] =
            best.ok_or_else(|| Error::InvalidGrid("no interior points".into()))?;
        Ok(Self {
            min_phi,
            min_theta,
            max_abs_jf,
            hypothesis_ok: None,
            area_decreasing: min_phi.value >= -tol && min_theta.value >= -tol,
            tol,
        })
    }

    pub fn with_hypotheses(mut self, ok: bool) -> Self {
        self.hypothesis_ok = Some(ok);
        self
    }
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = |x: &Extremum| format!("{:.6e} at ({:.4}, {:.4})", x.value, x.point[0], x.point[1]);
        writeln!(f, "min phi      {}", e(&self.min_phi))?;
        writeln!(f, "min theta    {}", e(&self.min_theta))?;
        writeln!(f, "max |J_f|    {}", e(&self.max_abs_jf))?;
        let hyp = match self.hypothesis_ok {
            Some(true) => "satisfied",
            Some(false) => "violated",
            None => "not checked",
        };
        writeln!(f, "hypotheses   {hyp}")?;
        write!(
            f,
            "area decreasing (tol {:.1e}): {}",
            self.tol, self.area_decreasing
        )
    }
}

/// Pointwise geometry at the stencil-interior points from central differences.
pub fn interior_pointwise(map: &MapField) -> Result<Vec<((usize, usize), PointwiseGeometry)>> {
    let grid = map.grid();
    (0..grid.len())
        .into_par_iter()
        .filter_map(|idx| {
            let (i, j) = grid.coords(idx);
            (grid.margin(i, j) >= 1).then_some((i, j))
        })
        .map(|(i, j)| {
            let df = differential(map, i, j)?;
            let [x, y] = grid.point(i, j);
            let [fx, fy] = map.value(i, j);
            let p = PointwiseGeometry::new(
                &df,
                &map.source().tensor(x, y)?,
                &map.target().tensor(fx, fy)?,
            )?;
            Ok(((i, j), p))
        })
        .collect()
}

pub fn area_decreasing_certificate(map: &MapField, tol: f64) -> Result<Certificate> {
    let pts = interior_pointwise(map)?;
    Certificate::from_points(map.grid(), pts.iter().map(|(ij, p)| (*ij, p)), tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleField {
    Phi,
    Theta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeStatus {
    /// No inconsistency found.
    Passed,
    /// The minimum sits in the boundary band where the Laplacian is unavailable.
    Inconclusive,
    /// The map is not minimal to tolerance, so the probe does not apply.
    Refused,
    /// A negative interior minimum on a certified minimal map under the hypotheses.
    Violation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRecord {
    pub field: AngleField,
    pub status: ProbeStatus,
    pub value: f64,
    pub index: (usize, usize),
    pub point: [f64; 2],
    pub gradient_norm: f64,
    pub laplacian: f64,
    pub minimality_defect: f64,
}

/// Locates the interior minimizer of `phi` or `theta` and checks it against
/// the maximum-principle argument.
pub fn interior_minimum_probe(
    geom: &GeometryField,
    field: AngleField,
    hypotheses_hold: bool,
    tol_h: f64,
) -> Result<ProbeRecord> {
    let grid = geom.grid();
    let scalar: ScalarField = geom.scalar(|p| match field {
        AngleField::Phi => p.point.phi,
        AngleField::Theta => p.point.theta,
    });
    let metric = geom.metric_field();
    let mut global = f64::INFINITY;
    let mut inner: Option<((usize, usize), f64)> = None;
    for (i, j) in grid.points() {
        if let Some(v) = scalar.get(i, j) {
            global = global.min(v);
            if grid.margin(i, j) >= 3 && inner.is_none_or(|(_, b)| v < b) {
                inner = Some(((i, j), v));
            }
        }
    }
    let ((i, j), value) =
        inner.ok_or_else(|| Error::InvalidGrid("grid too small for the probe".into()))?;
    let defect = geom.mean_curvature_sup();
    let h = grid.h();
    let mut record = ProbeRecord {
        field,
        status: ProbeStatus::Passed,
        value,
        index: (i, j),
        point: grid.point(i, j),
        gradient_norm: gradient_norm_sq(&metric, &scalar, i, j)?.sqrt(),
        laplacian: laplace_beltrami(&metric, &scalar, i, j)?,
        minimality_defect: defect,
    };
    record.status = if defect > MINIMALITY_FACTOR * h * h {
        ProbeStatus::Refused
    } else if global >= -tol_h {
        ProbeStatus::Passed
    } else if global < value - tol_h {
        ProbeStatus::Inconclusive
    } else if hypotheses_hold && value < -tol_h && record.laplacian >= -tol_h {
        ProbeStatus::Violation
    } else {
        ProbeStatus::Passed
    };
    Ok(record)
}
