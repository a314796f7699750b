//! Riemann surfaces as conformal metrics `rho^2 (dx^2 + dy^2)` on planar charts,
//! and the rectangular grids the maps are sampled on.
//!
//! With `u = log rho` the Gauss curvature is `K = -rho^-2 (u_xx + u_yy)` and the
//! Christoffel symbols are first derivatives of `u`. Presets evaluate both in
//! closed form; custom factors use central differences.

use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix2;
use num_dual::Dual64;

use crate::error::{Error, Result};
use crate::expr::{parse_scalar, Expr};

/// Step used for central differences of custom analytic conformal factors.
pub const CUSTOM_CURVATURE_STEP: f64 = 1e-4;

/// `gamma[k][i][j]` holds the symbol with upper index `k` and lower `i, j`.
pub type Christoffels = [[[f64; 2]; 2]; 2];

/// `log rho` together with its first derivatives at a chart point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogFactor {
    pub rho: f64,
    pub ux: f64,
    pub uy: f64,
}

#[derive(Debug, Clone)]
pub enum FactorKind {
    /// `rho = 2 / (1 - r^2)` on the unit disc, curvature -1.
    PoincareDisc,
    /// The disc model rescaled to constant curvature `-sigma`.
    HyperbolicScaled(f64),
    Euclidean,
    /// Inverse stereographic projection of the unit sphere, `rho = 2 / (1 + r^2)`.
    SphereStereographic,
    Custom(CustomFactor),
}

#[derive(Debug, Clone)]
pub enum CustomFactor {
    Expression {
        source: String,
        expr: Arc<Expr>,
        /// Chart domain is the open disc of this radius when set, else the plane.
        domain_radius: Option<f64>,
    },
    Sampled(Arc<SampledFactor>),
}

/// A conformal metric on a planar chart. Immutable once built.
#[derive(Debug, Clone)]
pub struct ConformalMetric {
    kind: FactorKind,
}

impl ConformalMetric {
    pub fn poincare_disc() -> Self {
        Self {
            kind: FactorKind::PoincareDisc,
        }
    }

    pub fn hyperbolic_scaled(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "hyperbolic curvature scale must be positive, got {sigma}"
            )));
        }
        Ok(Self {
            kind: FactorKind::HyperbolicScaled(sigma),
        })
    }

    pub fn euclidean() -> Self {
        Self {
            kind: FactorKind::Euclidean,
        }
    }

    pub fn sphere_stereographic() -> Self {
        Self {
            kind: FactorKind::SphereStereographic,
        }
    }

    /// Custom factor `rho(x, y)` given as an expression.
    pub fn custom_expression(source: &str, domain_radius: Option<f64>) -> Result<Self> {
        let expr = parse_scalar(source)?;
        Ok(Self {
            kind: FactorKind::Custom(CustomFactor::Expression {
                source: source.to_string(),
                expr: Arc::new(expr),
                domain_radius,
            }),
        })
    }

    pub fn sampled(factor: SampledFactor) -> Self {
        Self {
            kind: FactorKind::Custom(CustomFactor::Sampled(Arc::new(factor))),
        }
    }

    pub fn kind(&self) -> &FactorKind {
        &self.kind
    }

    pub fn name(&self) -> String {
        match &self.kind {
            FactorKind::PoincareDisc => "poincare_disc".into(),
            FactorKind::HyperbolicScaled(s) => format!("hyperbolic_scaled({s})"),
            FactorKind::Euclidean => "euclidean".into(),
            FactorKind::SphereStereographic => "sphere_stereographic".into(),
            FactorKind::Custom(CustomFactor::Expression { source, .. }) => {
                format!("custom({source})")
            }
            FactorKind::Custom(CustomFactor::Sampled(_)) => "custom(sampled)".into(),
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        if !(x.is_finite() && y.is_finite()) {
            return false;
        }
        match &self.kind {
            FactorKind::PoincareDisc | FactorKind::HyperbolicScaled(_) => x * x + y * y < 1.0,
            FactorKind::Euclidean | FactorKind::SphereStereographic => true,
            FactorKind::Custom(CustomFactor::Expression { domain_radius, .. }) => {
                domain_radius.is_none_or(|r| x * x + y * y < r * r)
            }
            FactorKind::Custom(CustomFactor::Sampled(s)) => s.contains(x, y),
        }
    }

    fn check(&self, x: f64, y: f64) -> Result<()> {
        if self.contains(x, y) {
            Ok(())
        } else {
            Err(Error::OutsideChart {
                x,
                y,
                metric: self.name(),
            })
        }
    }

    fn positive(rho: f64, x: f64, y: f64) -> Result<f64> {
        if rho > 0.0 && rho.is_finite() {
            Ok(rho)
        } else {
            Err(Error::NonPositiveFactor { x, y, rho })
        }
    }

    /// The conformal factor `rho(x, y)`.
    pub fn factor(&self, x: f64, y: f64) -> Result<f64> {
        Ok(self.log_factor(x, y)?.rho)
    }

    /// `rho` and the gradient of `log rho`.
    pub fn log_factor(&self, x: f64, y: f64) -> Result<LogFactor> {
        self.check(x, y)?;
        let r2 = x * x + y * y;
        let lf = match &self.kind {
            FactorKind::PoincareDisc => {
                let w = 1.0 - r2;
                LogFactor {
                    rho: 2.0 / w,
                    ux: 2.0 * x / w,
                    uy: 2.0 * y / w,
                }
            }
            FactorKind::HyperbolicScaled(sigma) => {
                let w = 1.0 - r2;
                LogFactor {
                    rho: 2.0 / (w * sigma.sqrt()),
                    ux: 2.0 * x / w,
                    uy: 2.0 * y / w,
                }
            }
            FactorKind::Euclidean => LogFactor {
                rho: 1.0,
                ux: 0.0,
                uy: 0.0,
            },
            FactorKind::SphereStereographic => {
                let w = 1.0 + r2;
                LogFactor {
                    rho: 2.0 / w,
                    ux: -2.0 * x / w,
                    uy: -2.0 * y / w,
                }
            }
            FactorKind::Custom(CustomFactor::Expression { expr, .. }) => {
                let rho = expr.eval(x, y);
                Self::positive(rho, x, y)?;
                let dx = expr.eval(Dual64::new(x, 1.0), Dual64::from(y));
                let dy = expr.eval(Dual64::from(x), Dual64::new(y, 1.0));
                LogFactor {
                    rho,
                    ux: dx.eps / rho,
                    uy: dy.eps / rho,
                }
            }
            FactorKind::Custom(CustomFactor::Sampled(s)) => s.log_factor(x, y),
        };
        Self::positive(lf.rho, x, y)?;
        Ok(lf)
    }

    /// Metric tensor `rho^2 I` at a chart point.
    pub fn tensor(&self, x: f64, y: f64) -> Result<Matrix2<f64>> {
        let rho = self.factor(x, y)?;
        Ok(Matrix2::identity() * (rho * rho))
    }

    pub fn christoffels(&self, x: f64, y: f64) -> Result<Christoffels> {
        let lf = self.log_factor(x, y)?;
        Ok(christoffels_from_log_gradient(lf.ux, lf.uy))
    }

    /// Gauss curvature; closed form for presets, central differences otherwise.
    pub fn gauss_curvature(&self, x: f64, y: f64) -> Result<f64> {
        self.check(x, y)?;
        match &self.kind {
            FactorKind::PoincareDisc => Ok(-1.0),
            FactorKind::HyperbolicScaled(sigma) => Ok(-sigma),
            FactorKind::Euclidean => Ok(0.0),
            FactorKind::SphereStereographic => Ok(1.0),
            FactorKind::Custom(CustomFactor::Expression { .. }) => {
                // central differences of the exact gradient of log rho
                let h = CUSTOM_CURVATURE_STEP;
                let rho = self.factor(x, y)?;
                let xp = self.log_factor(x + h, y)?;
                let xm = self.log_factor(x - h, y)?;
                let yp = self.log_factor(x, y + h)?;
                let ym = self.log_factor(x, y - h)?;
                let lap = (xp.ux - xm.ux + yp.uy - ym.uy) / (2.0 * h);
                Ok(-lap / (rho * rho))
            }
            FactorKind::Custom(CustomFactor::Sampled(s)) => {
                let rho = s.log_factor(x, y).rho;
                Ok(-s.log_laplacian(x, y) / (rho * rho))
            }
        }
    }

    /// Curvature from the five-point Laplacian of `log rho` with step `h`.
    pub fn gauss_curvature_fd(&self, x: f64, y: f64, h: f64) -> Result<f64> {
        let u = |px: f64, py: f64| -> Result<f64> { Ok(self.factor(px, py)?.ln()) };
        let rho = self.factor(x, y)?;
        let c = u(x, y)?;
        let lap = (u(x + h, y)? - 2.0 * c + u(x - h, y)?) / (h * h)
            + (u(x, y + h)? - 2.0 * c + u(x, y - h)?) / (h * h);
        Ok(-lap / (rho * rho))
    }
}

impl fmt::Display for ConformalMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

pub fn christoffels_from_log_gradient(ux: f64, uy: f64) -> Christoffels {
    let mut g = [[[0.0; 2]; 2]; 2];
    g[0][0][0] = ux;
    g[0][0][1] = uy;
    g[0][1][0] = uy;
    g[0][1][1] = -ux;
    g[1][0][0] = -uy;
    g[1][0][1] = ux;
    g[1][1][0] = ux;
    g[1][1][1] = uy;
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    Dirichlet,
    Periodic,
}

/// A rectangular grid on a chart. Periodic grids identify `x_max` with `x_min`
/// (and likewise in `y`), so the last stored column sits one step before `x_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridChart {
    x_range: (f64, f64),
    y_range: (f64, f64),
    nx: usize,
    ny: usize,
    boundary: BoundaryMode,
}

/// A grid neighbour plus the number of periods wrapped in each direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub i: usize,
    pub j: usize,
    pub wrap_x: i32,
    pub wrap_y: i32,
}

impl GridChart {
    pub fn new(
        x_range: (f64, f64),
        y_range: (f64, f64),
        nx: usize,
        ny: usize,
        boundary: BoundaryMode,
    ) -> Result<Self> {
        if nx < 5 || ny < 5 {
            return Err(Error::InvalidGrid(format!(
                "need at least 5x5 points, got {nx}x{ny}"
            )));
        }
        for (lo, hi) in [x_range, y_range] {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidGrid(format!(
                    "empty or non-finite range [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self {
            x_range,
            y_range,
            nx,
            ny,
            boundary,
        })
    }

    /// Square Dirichlet grid `[-half, half]^2` with `n x n` points.
    pub fn centered_square(half: f64, n: usize) -> Result<Self> {
        Self::new((-half, half), (-half, half), n, n, BoundaryMode::Dirichlet)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn boundary(&self) -> BoundaryMode {
        self.boundary
    }

    pub fn x_range(&self) -> (f64, f64) {
        self.x_range
    }

    pub fn y_range(&self) -> (f64, f64) {
        self.y_range
    }

    pub fn periods(&self) -> (f64, f64) {
        (
            self.x_range.1 - self.x_range.0,
            self.y_range.1 - self.y_range.0,
        )
    }

    pub fn hx(&self) -> f64 {
        let cells = match self.boundary {
            BoundaryMode::Dirichlet => self.nx - 1,
            BoundaryMode::Periodic => self.nx,
        };
        (self.x_range.1 - self.x_range.0) / cells as f64
    }

    pub fn hy(&self) -> f64 {
        let cells = match self.boundary {
            BoundaryMode::Dirichlet => self.ny - 1,
            BoundaryMode::Periodic => self.ny,
        };
        (self.y_range.1 - self.y_range.0) / cells as f64
    }

    /// The coarser of the two spacings.
    pub fn h(&self) -> f64 {
        self.hx().max(self.hy())
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.x_range.0 + i as f64 * self.hx(),
            self.y_range.0 + j as f64 * self.hy(),
        ]
    }

    /// Distance (in grid steps) to the nearest Dirichlet edge; unbounded when periodic.
    pub fn margin(&self, i: usize, j: usize) -> usize {
        match self.boundary {
            BoundaryMode::Periodic => usize::MAX,
            BoundaryMode::Dirichlet => i.min(j).min(self.nx - 1 - i).min(self.ny - 1 - j),
        }
    }

    pub fn neighbor(&self, i: usize, j: usize, di: isize, dj: isize) -> Option<Neighbor> {
        let (ti, wx) = wrap(i as isize + di, self.nx, self.boundary)?;
        let (tj, wy) = wrap(j as isize + dj, self.ny, self.boundary)?;
        Some(Neighbor {
            i: ti,
            j: tj,
            wrap_x: wx,
            wrap_y: wy,
        })
    }

    /// Same chart with spacing halved.
    pub fn refined(&self) -> Self {
        let (nx, ny) = match self.boundary {
            BoundaryMode::Dirichlet => (2 * self.nx - 1, 2 * self.ny - 1),
            BoundaryMode::Periodic => (2 * self.nx, 2 * self.ny),
        };
        Self {
            nx,
            ny,
            ..self.clone()
        }
    }

    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| (i, j)))
    }

    /// Fails fast if any grid point lies outside the metric's chart domain.
    pub fn check_domain(&self, metric: &ConformalMetric) -> Result<()> {
        for (i, j) in self.points() {
            let [x, y] = self.point(i, j);
            metric.log_factor(x, y)?;
        }
        Ok(())
    }
}

fn wrap(k: isize, n: usize, mode: BoundaryMode) -> Option<(usize, i32)> {
    let n = n as isize;
    match mode {
        BoundaryMode::Dirichlet => (0..n).contains(&k).then_some((k as usize, 0)),
        BoundaryMode::Periodic => Some((k.rem_euclid(n) as usize, k.div_euclid(n) as i32)),
    }
}

/// A conformal factor known only at the nodes of a grid.
///
/// `log rho`, its gradient and its Laplacian are stored at the nodes (central
/// differences in the interior, second-order one-sided gradients on Dirichlet
/// edges, Laplacian copied inward on edges) and interpolated bilinearly.
#[derive(Debug, Clone)]
pub struct SampledFactor {
    grid: GridChart,
    log_rho: Vec<f64>,
    grad: Vec<[f64; 2]>,
    lap: Vec<f64>,
}

impl SampledFactor {
    pub fn new(grid: GridChart, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "sampled factor has {} values for {} grid points",
                rho.len(),
                grid.len()
            )));
        }
        for (idx, &r) in rho.iter().enumerate() {
            if !(r > 0.0 && r.is_finite()) {
                let (i, j) = grid.coords(idx);
                let [x, y] = grid.point(i, j);
                return Err(Error::NonPositiveFactor { x, y, rho: r });
            }
        }
        let log_rho: Vec<f64> = rho.iter().map(|r| r.ln()).collect();
        let (hx, hy) = (grid.hx(), grid.hy());
        let at = |i: usize, j: usize| log_rho[grid.index(i, j)];
        let d1 = |i: usize, j: usize, axis: usize| -> f64 {
            let (n, h) = if axis == 0 {
                (grid.nx, hx)
            } else {
                (grid.ny, hy)
            };
            let k = if axis == 0 { i } else { j };
            let get = |o: isize| {
                let nb = if axis == 0 {
                    grid.neighbor(i, j, o, 0)
                } else {
                    grid.neighbor(i, j, 0, o)
                };
                nb.map(|nb| at(nb.i, nb.j))
            };
            match (get(-1), get(1)) {
                (Some(m), Some(p)) => (p - m) / (2.0 * h),
                (None, _) => {
                    (-3.0 * at(i, j) + 4.0 * get(1).unwrap() - get(2).unwrap()) / (2.0 * h)
                }
                (_, None) => {
                    debug_assert_eq!(k, n - 1);
                    (3.0 * at(i, j) - 4.0 * get(-1).unwrap() + get(-2).unwrap()) / (2.0 * h)
                }
            }
        };
        let mut grad = vec![[0.0; 2]; grid.len()];
        for (i, j) in grid.points() {
            grad[grid.index(i, j)] = [d1(i, j, 0), d1(i, j, 1)];
        }
        let mut lap = vec![0.0; grid.len()];
        for (i, j) in grid.points() {
            if grid.margin(i, j) >= 1 {
                let c = at(i, j);
                let n = |di, dj| {
                    let nb = grid.neighbor(i, j, di, dj).unwrap();
                    at(nb.i, nb.j)
                };
                lap[grid.index(i, j)] = (n(1, 0) - 2.0 * c + n(-1, 0)) / (hx * hx)
                    + (n(0, 1) - 2.0 * c + n(0, -1)) / (hy * hy);
            }
        }
        if grid.boundary == BoundaryMode::Dirichlet {
            for (i, j) in grid.points() {
                if grid.margin(i, j) == 0 {
                    let ci = i.clamp(1, grid.nx - 2);
                    let cj = j.clamp(1, grid.ny - 2);
                    lap[grid.index(i, j)] = lap[grid.index(ci, cj)];
                }
            }
        }
        Ok(Self {
            grid,
            log_rho,
            grad,
            lap,
        })
    }

    pub fn grid(&self) -> &GridChart {
        &self.grid
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self.grid.boundary {
            BoundaryMode::Periodic => true,
            BoundaryMode::Dirichlet => {
                let (x0, x1) = self.grid.x_range;
                let (y0, y1) = self.grid.y_range;
                (x0..=x1).contains(&x) && (y0..=y1).contains(&y)
            }
        }
    }

    fn interpolate<T, F>(&self, x: f64, y: f64, pick: F) -> T
    where
        F: Fn(usize) -> T,
        T: std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let locate = |v: f64, lo: f64, h: f64, n: usize| -> (usize, usize, f64) {
            let s = (v - lo) / h;
            match self.grid.boundary {
                BoundaryMode::Dirichlet => {
                    let k = (s.floor() as isize).clamp(0, n as isize - 2) as usize;
                    (k, k + 1, s - k as f64)
                }
                BoundaryMode::Periodic => {
                    let f = s.floor();
                    let k = (f as isize).rem_euclid(n as isize) as usize;
                    (k, (k + 1) % n, s - f)
                }
            }
        };
        let (i0, i1, tx) = locate(x, self.grid.x_range.0, self.grid.hx(), self.grid.nx);
        let (j0, j1, ty) = locate(y, self.grid.y_range.0, self.grid.hy(), self.grid.ny);
        let g = &self.grid;
        pick(g.index(i0, j0)) * ((1.0 - tx) * (1.0 - ty))
            + pick(g.index(i1, j0)) * (tx * (1.0 - ty))
            + pick(g.index(i0, j1)) * ((1.0 - tx) * ty)
            + pick(g.index(i1, j1)) * (tx * ty)
    }

    fn log_factor(&self, x: f64, y: f64) -> LogFactor {
        let u = self.interpolate(x, y, |k| self.log_rho[k]);
        let ux = self.interpolate(x, y, |k| self.grad[k][0]);
        let uy = self.interpolate(x, y, |k| self.grad[k][1]);
        LogFactor {
            rho: u.exp(),
            ux,
            uy,
        }
    }

    fn log_laplacian(&self, x: f64, y: f64) -> f64 {
        self.interpolate(x, y, |k| self.lap[k])
    }
}

/// The curvature bounds `sigma_M >= -sigma >= sigma_N >= -beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremHypotheses {
    pub sigma: f64,
    pub beta: f64,
}

impl TheoremHypotheses {
    pub fn new(sigma: f64, beta: f64) -> Result<Self> {
        if !(sigma > 0.0 && beta > 0.0 && sigma.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "hypothesis constants must be positive, got sigma = {sigma}, beta = {beta}"
            )));
        }
        Ok(Self { sigma, beta })
    }

    pub fn holds(&self, sigma_m: f64, sigma_n: f64) -> bool {
        sigma_m >= -self.sigma && -self.sigma >= sigma_n && sigma_n >= -self.beta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Symbolic oracle: u = log rho differentiated by hand for each preset.
    fn disc_log_laplacian(x: f64, y: f64) -> f64 {
        let w = 1.0 - x * x - y * y;
        4.0 / (w * w)
    }

    #[test]
    fn preset_curvatures() {
        assert_eq!(
            ConformalMetric::euclidean()
                .gauss_curvature(3.0, -1.0)
                .unwrap(),
            0.0
        );
        let disc = ConformalMetric::poincare_disc();
        let rho = disc.factor(0.0, 0.0).unwrap();
        assert_abs_diff_eq!(
            -disc_log_laplacian(0.0, 0.0) / (rho * rho),
            -1.0,
            epsilon = 1e-15
        );
        assert_eq!(disc.gauss_curvature(0.0, 0.0).unwrap(), -1.0);
        // sphere oracle: u = log 2 - log(1 + r^2), lap u = -4/(1+r^2)^2
        let s = ConformalMetric::sphere_stereographic();
        let rho = s.factor(0.0, 0.0).unwrap();
        assert_abs_diff_eq!(4.0 / (rho * rho), 1.0, epsilon = 1e-15);
        assert_eq!(s.gauss_curvature(0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn hyperbolic_scaled_has_constant_curvature() {
        let m = ConformalMetric::hyperbolic_scaled(2.5).unwrap();
        for &(x, y) in &[(0.0, 0.0), (0.3, -0.4), (-0.7, 0.1)] {
            assert_abs_diff_eq!(m.gauss_curvature(x, y).unwrap(), -2.5, epsilon = 1e-10);
            // closed form rho, symbolic Laplacian of log rho
            let rho = m.factor(x, y).unwrap();
            assert_abs_diff_eq!(
                -disc_log_laplacian(x, y) / (rho * rho),
                -2.5,
                epsilon = 1e-10
            );
        }
        assert!(ConformalMetric::hyperbolic_scaled(0.0).is_err());
    }

    #[test]
    fn christoffels_of_presets() {
        let flat = ConformalMetric::euclidean().christoffels(0.4, 0.2).unwrap();
        assert!(flat.iter().flatten().flatten().all(|&g| g == 0.0));
        let disc = ConformalMetric::poincare_disc();
        let c0 = disc.christoffels(0.0, 0.0).unwrap();
        assert!(c0.iter().flatten().flatten().all(|&g| g == 0.0));
        // u_x = 2x / (1 - r^2) = 1 / 0.75 at (0.5, 0)
        let c = disc.christoffels(0.5, 0.0).unwrap();
        assert_abs_diff_eq!(c[0][0][0], 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[0][1][1], -4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[1][0][1], 4.0 / 3.0, epsilon = 1e-15);
        assert_eq!(c[1][0][0], 0.0);
        for ck in &c {
            assert_eq!(ck[0][1], ck[1][0]);
        }
    }

    #[test]
    fn fd_curvature_converges_at_second_order() {
        let metrics = [
            ConformalMetric::poincare_disc(),
            ConformalMetric::hyperbolic_scaled(3.0).unwrap(),
            ConformalMetric::sphere_stereographic(),
        ];
        for m in &metrics {
            let (x, y) = (0.31, -0.22);
            let exact = m.gauss_curvature(x, y).unwrap();
            let e1 = (m.gauss_curvature_fd(x, y, 0.02).unwrap() - exact).abs();
            let e2 = (m.gauss_curvature_fd(x, y, 0.01).unwrap() - exact).abs();
            let ratio = e1 / e2;
            assert!((3.5..=4.5).contains(&ratio), "{m}: ratio {ratio}");
        }
    }

    #[test]
    fn custom_expression_matches_preset() {
        let custom = ConformalMetric::custom_expression("2 / (1 - x^2 - y^2)", Some(1.0)).unwrap();
        let disc = ConformalMetric::poincare_disc();
        let (x, y) = (0.2, 0.35);
        let a = custom.log_factor(x, y).unwrap();
        let b = disc.log_factor(x, y).unwrap();
        assert_abs_diff_eq!(a.rho, b.rho, epsilon = 1e-14);
        assert_abs_diff_eq!(a.ux, b.ux, epsilon = 1e-13);
        assert_abs_diff_eq!(a.uy, b.uy, epsilon = 1e-13);
        assert_abs_diff_eq!(custom.gauss_curvature(x, y).unwrap(), -1.0, epsilon = 1e-6);
        assert!(custom.factor(0.9, 0.9).is_err());
    }

    #[test]
    fn non_positive_custom_factor_is_rejected() {
        let m = ConformalMetric::custom_expression("x", None).unwrap();
        assert!(matches!(
            m.factor(-1.0, 0.0),
            Err(Error::NonPositiveFactor { .. })
        ));
    }

    #[test]
    fn disc_domain_is_enforced() {
        let disc = ConformalMetric::poincare_disc();
        assert!(matches!(
            disc.factor(1.0, 0.0),
            Err(Error::OutsideChart { .. })
        ));
        let grid = GridChart::centered_square(0.8, 9).unwrap();
        assert!(grid.check_domain(&disc).is_err());
        let grid = GridChart::centered_square(0.6, 9).unwrap();
        assert!(grid.check_domain(&disc).is_ok());
    }

    #[test]
    fn sampled_factor_reproduces_disc_curvature() {
        let grid = GridChart::centered_square(0.5, 161).unwrap();
        let disc = ConformalMetric::poincare_disc();
        let rho: Vec<f64> = grid
            .points()
            .map(|(i, j)| {
                let [x, y] = grid.point(i, j);
                disc.factor(x, y).unwrap()
            })
            .collect();
        let sampled = ConformalMetric::sampled(SampledFactor::new(grid, rho).unwrap());
        let k = sampled.gauss_curvature(0.1, 0.12).unwrap();
        assert_abs_diff_eq!(k, -1.0, epsilon = 1e-3);
        let a = sampled.log_factor(0.1, 0.12).unwrap();
        let b = disc.log_factor(0.1, 0.12).unwrap();
        assert_abs_diff_eq!(a.ux, b.ux, epsilon = 1e-3);
        assert!(!sampled.contains(0.6, 0.0));
    }

    #[test]
    fn grid_spacing_and_wrapping() {
        let g = GridChart::new((0.0, 1.0), (0.0, 2.0), 5, 9, BoundaryMode::Dirichlet).unwrap();
        assert_eq!(g.hx(), 0.25);
        assert_eq!(g.hy(), 0.25);
        assert_eq!(g.margin(0, 4), 0);
        assert_eq!(g.margin(2, 4), 2);
        assert!(g.neighbor(0, 0, -1, 0).is_none());
        let p = GridChart::new((0.0, 1.0), (0.0, 1.0), 8, 8, BoundaryMode::Periodic).unwrap();
        assert_eq!(p.hx(), 0.125);
        let nb = p.neighbor(7, 0, 1, -1).unwrap();
        assert_eq!(
            nb,
            Neighbor {
                i: 0,
                j: 7,
                wrap_x: 1,
                wrap_y: -1
            }
        );
        assert_eq!(g.refined().nx(), 9);
        assert_eq!(p.refined().nx(), 16);
        assert!(GridChart::centered_square(1.0, 4).is_err());
    }

    #[test]
    fn hypotheses() {
        let h = TheoremHypotheses::new(1.0, 2.0).unwrap();
        assert!(h.holds(-1.0, -1.0));
        assert!(h.holds(-0.5, -2.0));
        assert!(!h.holds(-1.5, -1.0));
        assert!(!h.holds(0.0, 0.0));
        assert!(!h.holds(-1.0, -2.5));
    }
}
