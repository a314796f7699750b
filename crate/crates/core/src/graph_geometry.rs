//! Geometry of the graph `F = (I, f)` inside the product `M x N`.
//!
//! Vectors tangent to the product are stored as 4-vectors `(x, y, xi, eta)` in
//! the product chart. Tensors are computed in chart coordinates and converted
//! to the adapted orthonormal frame at the end.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::map::MapField;
use crate::pointwise::{
    complex_structure, differential, second_derivatives, PointwiseGeometry, SingularDecomposition,
};
use crate::surface::{Christoffels, GridChart};

/// `g_M` at a point `p` together with `g_N` at `f(p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductMetric {
    pub g_m: Matrix2<f64>,
    pub g_n: Matrix2<f64>,
}

pub fn split(v: &Vector4<f64>) -> (Vector2<f64>, Vector2<f64>) {
    (Vector2::new(v[0], v[1]), Vector2::new(v[2], v[3]))
}

pub fn join(m: &Vector2<f64>, n: &Vector2<f64>) -> Vector4<f64> {
    Vector4::new(m[0], m[1], n[0], n[1])
}

impl ProductMetric {
    pub fn new(g_m: Matrix2<f64>, g_n: Matrix2<f64>) -> Self {
        Self { g_m, g_n }
    }

    pub fn inner(&self, a: &Vector4<f64>, b: &Vector4<f64>) -> f64 {
        let (am, an) = split(a);
        let (bm, bn) = split(b);
        am.dot(&(self.g_m * bm)) + an.dot(&(self.g_n * bn))
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut out = Matrix4::zeros();
        out.fixed_view_mut::<2, 2>(0, 0).copy_from(&self.g_m);
        out.fixed_view_mut::<2, 2>(2, 2).copy_from(&self.g_n);
        out
    }
}

/// Orthonormal frame `e_1, e_2` tangent and `e_3, e_4` normal to the graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptedFrame {
    pub e: [Vector4<f64>; 4],
}

impl AdaptedFrame {
    pub fn gram(&self, metric: &ProductMetric) -> Matrix4<f64> {
        Matrix4::from_fn(|a, b| metric.inner(&self.e[a], &self.e[b]))
    }

    /// Chart components of the source tangent vectors `v_1, v_2` with `dF(v_a) = e_a`.
    pub fn source_parts(&self) -> [Vector2<f64>; 2] {
        [split(&self.e[0]).0, split(&self.e[1]).0]
    }
}

/// Frame built from the singular decomposition.
///
/// When `f` reverses orientation `e_4` is negated so that `(e_1, .., e_4)` is
/// positively oriented in the product; the signed `u_2` identities rely on it.
pub fn adapted_frame(sd: &SingularDecomposition) -> AdaptedFrame {
    let (l, m) = (sd.lambda, sd.mu);
    let [a1, a2] = sd.alpha;
    let [b1, b2] = sd.beta;
    let nl = (1.0 + l * l).sqrt();
    let nm = (1.0 + m * m).sqrt();
    let e1 = join(&a1, &(b1 * l)) / nl;
    let e2 = join(&a2, &(b2 * m)) / nm;
    let e3 = join(&(-a1 * l), &b1) / nl;
    let mut e4 = join(&(-a2 * m), &b2) / nm;
    if sd.orientation < 0 {
        e4 = -e4;
    }
    AdaptedFrame {
        e: [e1, e2, e3, e4],
    }
}

/// `g = g_M + df^T g_N df`.
pub fn induced_metric(
    df: &Matrix2<f64>,
    g_m: &Matrix2<f64>,
    g_n: &Matrix2<f64>,
) -> Result<Matrix2<f64>> {
    let g = g_m + df.transpose() * g_n * df;
    if g.iter().all(|v| v.is_finite()) && g[(0, 0)] > 0.0 && g.determinant() > 0.0 {
        Ok(g)
    } else {
        Err(Error::NotPositiveDefinite {
            what: "induced metric",
        })
    }
}

fn contract(gamma: &Christoffels, x: &Vector2<f64>, y: &Vector2<f64>) -> Vector2<f64> {
    Vector2::from_fn(|k, _| {
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                s += gamma[k][i][j] * x[i] * y[j];
            }
        }
        s
    })
}

/// Product-connection term `Gamma(X, Y)` with factor Christoffels at `p` and `f(p)`.
pub fn product_christoffel(
    gamma_m: &Christoffels,
    gamma_n: &Christoffels,
    x: &Vector4<f64>,
    y: &Vector4<f64>,
) -> Vector4<f64> {
    let (xm, xn) = split(x);
    let (ym, yn) = split(y);
    join(&contract(gamma_m, &xm, &ym), &contract(gamma_n, &xn, &yn))
}

/// Shape matrices `A^3`, `A^4` in the adapted orthonormal frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeOperator {
    pub a: [Matrix2<f64>; 2],
}

impl ShapeOperator {
    pub fn zero() -> Self {
        Self {
            a: [Matrix2::zeros(); 2],
        }
    }

    pub fn mean_curvature(&self) -> [f64; 2] {
        [
            self.a[0][(0, 0)] + self.a[0][(1, 1)],
            self.a[1][(0, 0)] + self.a[1][(1, 1)],
        ]
    }

    pub fn norm_sq(&self) -> f64 {
        self.a
            .iter()
            .map(|m| m.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    /// `-A3_11 A4_12 + A3_12 A4_11 - A3_12 A4_22 + A3_22 A4_12`.
    pub fn sigma_perp(&self) -> f64 {
        let (p, q) = (&self.a[0], &self.a[1]);
        (p[(0, 1)] * q[(0, 0)] + p[(1, 1)] * q[(0, 1)])
            - (p[(0, 0)] * q[(0, 1)] + p[(0, 1)] * q[(1, 1)])
    }

    /// `-e_1^T [A^3, A^4] e_2` from an explicit matrix commutator.
    pub fn commutator_sigma_perp(&self) -> f64 {
        let (p, q) = (&self.a[0], &self.a[1]);
        let pq = p[(0, 0)] * q[(0, 1)] + p[(0, 1)] * q[(1, 1)];
        let qp = q[(0, 0)] * p[(0, 1)] + q[(0, 1)] * p[(1, 1)];
        qp - pq
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.a
            .iter()
            .map(|m| (m[(0, 1)] - m[(1, 0)]).abs())
            .fold(0.0, f64::max)
    }
}

/// Second fundamental form of the graph from the map's first and second derivatives.
pub fn second_fundamental_form(
    df: &Matrix2<f64>,
    hess: &[Matrix2<f64>; 2],
    gamma_m: &Christoffels,
    gamma_n: &Christoffels,
    frame: &AdaptedFrame,
    metric: &ProductMetric,
) -> ShapeOperator {
    let d_f = [
        Vector4::new(1.0, 0.0, df[(0, 0)], df[(1, 0)]),
        Vector4::new(0.0, 1.0, df[(0, 1)], df[(1, 1)]),
    ];
    let b = |i: usize, j: usize| {
        let dd = Vector4::new(0.0, 0.0, hess[0][(i, j)], hess[1][(i, j)]);
        dd + product_christoffel(gamma_m, gamma_n, &d_f[i], &d_f[j])
    };
    let b_coord = [b(0, 0), b(0, 1), b(1, 1)];
    let [c1, c2] = frame.source_parts();
    let c = Matrix2::from_columns(&[c1, c2]);
    let mut a = [Matrix2::zeros(); 2];
    for (slot, e) in a.iter_mut().zip(&frame.e[2..]) {
        let p = [
            metric.inner(&b_coord[0], e),
            metric.inner(&b_coord[1], e),
            metric.inner(&b_coord[2], e),
        ];
        let coord = Matrix2::new(p[0], p[1], p[1], p[2]);
        let m = c.transpose() * coord * c;
        *slot = Matrix2::new(m[(0, 0)], m[(0, 1)], m[(0, 1)], m[(1, 1)]);
    }
    ShapeOperator { a }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalScalars {
    pub h: [f64; 2],
    pub norm_a2: f64,
    pub sigma_perp: f64,
    pub sigma_n: f64,
}

pub fn normal_scalars(shape: &ShapeOperator, rtilde_1234: f64) -> NormalScalars {
    let sigma_perp = shape.sigma_perp();
    NormalScalars {
        h: shape.mean_curvature(),
        norm_a2: shape.norm_sq(),
        sigma_perp,
        sigma_n: rtilde_1234 - sigma_perp,
    }
}

/// `R(X,Y,Z,W) = sigma_M G_M + sigma_N G_N` with
/// `G(X,Y,Z,W) = <X,Z><Y,W> - <X,W><Y,Z>` on each factor.
pub fn ambient_curvature(
    metric: &ProductMetric,
    sigma_m: f64,
    sigma_n: f64,
    v: [&Vector4<f64>; 4],
) -> f64 {
    let parts: Vec<_> = v.iter().map(|x| split(x)).collect();
    let m: Vec<Vector2<f64>> = parts.iter().map(|p| p.0).collect();
    let n: Vec<Vector2<f64>> = parts.iter().map(|p| p.1).collect();
    let g = |g: &Matrix2<f64>, w: &[Vector2<f64>]| {
        let ip = |a: usize, b: usize| w[a].dot(&(g * w[b]));
        ip(0, 2) * ip(1, 3) - ip(0, 3) * ip(1, 2)
    };
    sigma_m * g(&metric.g_m, &m) + sigma_n * g(&metric.g_n, &n)
}

/// `R(e_1, e_2, e_3, e_4)`.
pub fn ambient_curvature_term(
    frame: &AdaptedFrame,
    metric: &ProductMetric,
    sigma_m: f64,
    sigma_n: f64,
) -> f64 {
    let e = &frame.e;
    ambient_curvature(metric, sigma_m, sigma_n, [&e[0], &e[1], &e[2], &e[3]])
}

/// The parallel forms pulled back from the factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParallelForm {
    Omega1,
    Omega2,
}

/// `omega(X, Y)` with `omega = rho^2 dx ^ dy` on the selected factor.
pub fn pullback_form_component(
    which: ParallelForm,
    metric: &ProductMetric,
    x: &Vector4<f64>,
    y: &Vector4<f64>,
) -> f64 {
    let (g, a, b) = match which {
        ParallelForm::Omega1 => (&metric.g_m, split(x).0, split(y).0),
        ParallelForm::Omega2 => (&metric.g_n, split(x).1, split(y).1),
    };
    g.determinant().sqrt() * (a[0] * b[1] - a[1] * b[0])
}

/// Frame components `omega(e_a, e_b)`.
pub fn form_in_frame(
    which: ParallelForm,
    metric: &ProductMetric,
    frame: &AdaptedFrame,
) -> Matrix4<f64> {
    Matrix4::from_fn(|a, b| pullback_form_component(which, metric, &frame.e[a], &frame.e[b]))
}

/// `(g(J_1 e_1, e_2), g(J_2 e_1, e_2))` with `J_1 = J_M - J_N`, `J_2 = J_M + J_N`.
pub fn kahler_angle_crosscheck(frame: &AdaptedFrame, metric: &ProductMetric) -> (f64, f64) {
    let jm = complex_structure(&metric.g_m);
    let jn = complex_structure(&metric.g_n);
    let (m, n) = split(&frame.e[0]);
    let j1 = join(&(jm * m), &(-(jn * n)));
    let j2 = join(&(jm * m), &(jn * n));
    (
        metric.inner(&j1, &frame.e[1]),
        metric.inner(&j2, &frame.e[1]),
    )
}

/// Everything known about the graph at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphGeometry {
    pub point: PointwiseGeometry,
    pub g: Matrix2<f64>,
    pub metric: ProductMetric,
    pub frame: AdaptedFrame,
    pub shape: ShapeOperator,
    pub h: [f64; 2],
    pub norm_a2: f64,
    pub sigma_perp: f64,
    pub sigma_n: f64,
    pub rtilde_1234: f64,
    /// Gauss curvature of the source at `p`.
    pub curvature_m: f64,
    /// Gauss curvature of the target at `f(p)`.
    pub curvature_n: f64,
}

impl GraphGeometry {
    pub fn at(map: &MapField, i: usize, j: usize) -> Result<Self> {
        let df = differential(map, i, j)?;
        let hess = second_derivatives(map, i, j)?;
        let [x, y] = map.grid().point(i, j);
        let [fx, fy] = map.value(i, j);
        let (src, tgt) = (map.source(), map.target());
        let metric = ProductMetric::new(src.tensor(x, y)?, tgt.tensor(fx, fy)?);
        let point = PointwiseGeometry::new(&df, &metric.g_m, &metric.g_n)?;
        let g = induced_metric(&df, &metric.g_m, &metric.g_n)?;
        let frame = adapted_frame(&point.decomposition());
        let shape = second_fundamental_form(
            &df,
            &hess,
            &src.christoffels(x, y)?,
            &tgt.christoffels(fx, fy)?,
            &frame,
            &metric,
        );
        let curvature_m = src.gauss_curvature(x, y)?;
        let curvature_n = tgt.gauss_curvature(fx, fy)?;
        let rtilde_1234 = ambient_curvature_term(&frame, &metric, curvature_m, curvature_n);
        let ns = normal_scalars(&shape, rtilde_1234);
        Ok(Self {
            point,
            g,
            metric,
            frame,
            shape,
            h: ns.h,
            norm_a2: ns.norm_a2,
            sigma_perp: ns.sigma_perp,
            sigma_n: ns.sigma_n,
            rtilde_1234,
            curvature_m,
            curvature_n,
        })
    }

    pub fn mean_curvature_norm(&self) -> f64 {
        self.h[0].hypot(self.h[1])
    }

    /// `(u_1, u_2)` as Hodge stars of the pulled-back factor forms.
    pub fn hodge_jacobians(&self) -> (f64, f64) {
        let e = &self.frame.e;
        (
            pullback_form_component(ParallelForm::Omega1, &self.metric, &e[0], &e[1]),
            pullback_form_component(ParallelForm::Omega2, &self.metric, &e[0], &e[1]),
        )
    }

    pub fn form_scalar(&self, which: ParallelForm) -> f64 {
        match which {
            ParallelForm::Omega1 => self.point.u1,
            ParallelForm::Omega2 => self.point.u2,
        }
    }
}

/// Graph geometry at every grid point whose stencil fits.
#[derive(Debug, Clone)]
pub struct GeometryField {
    grid: GridChart,
    points: Vec<Option<GraphGeometry>>,
}

impl GeometryField {
    pub fn compute(map: &MapField) -> Result<Self> {
        let grid = map.grid().clone();
        let points = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j) = grid.coords(idx);
                if grid.margin(i, j) >= 1 {
                    GraphGeometry::at(map, i, j).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, points })
    }

    pub fn grid(&self) -> &GridChart {
        &self.grid
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&GraphGeometry> {
        self.points[self.grid.index(i, j)].as_ref()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &GraphGeometry)> + '_ {
        self.points
            .iter()
            .enumerate()
            .filter_map(|(idx, p)| p.as_ref().map(|p| (self.grid.coords(idx), p)))
    }

    pub fn scalar(&self, f: impl Fn(&GraphGeometry) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.points.iter().map(|p| p.as_ref().map(&f)).collect(),
        }
    }

    pub fn metric_field(&self) -> MetricField {
        MetricField {
            grid: self.grid.clone(),
            g: self
                .points
                .iter()
                .map(|p| p.as_ref().map(|p| p.g))
                .collect(),
        }
    }

    pub fn mean_curvature_sup(&self) -> f64 {
        self.iter()
            .map(|(_, p)| p.mean_curvature_norm())
            .fold(0.0, f64::max)
    }
}

/// A scalar per grid point; `None` where it is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridChart,
    pub values: Vec<Option<f64>>,
}

impl ScalarField {
    pub fn from_fn(grid: &GridChart, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = grid
            .points()
            .map(|(i, j)| {
                let [x, y] = grid.point(i, j);
                Some(f(x, y))
            })
            .collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[self.grid.index(i, j)]
    }

    fn at_offset(&self, i: usize, j: usize, di: isize, dj: isize) -> Option<f64> {
        let n = self.grid.neighbor(i, j, di, dj)?;
        self.get(n.i, n.j)
    }

    /// Central-difference chart gradient.
    pub fn gradient(&self, i: usize, j: usize) -> Result<Vector2<f64>> {
        let v = |di, dj| self.at_offset(i, j, di, dj).ok_or(Error::Stencil { i, j });
        Ok(Vector2::new(
            (v(1, 0)? - v(-1, 0)?) / (2.0 * self.grid.hx()),
            (v(0, 1)? - v(0, -1)?) / (2.0 * self.grid.hy()),
        ))
    }
}

/// A 2x2 metric per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    pub grid: GridChart,
    pub g: Vec<Option<Matrix2<f64>>>,
}

impl MetricField {
    pub fn from_fn(grid: &GridChart, f: impl Fn(f64, f64) -> Matrix2<f64>) -> Self {
        let g = grid
            .points()
            .map(|(i, j)| {
                let [x, y] = grid.point(i, j);
                Some(f(x, y))
            })
            .collect();
        Self {
            grid: grid.clone(),
            g,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<Matrix2<f64>> {
        self.g[self.grid.index(i, j)]
    }
}

fn metric_at(metric: &MetricField, i: usize, j: usize) -> Result<(Matrix2<f64>, f64)> {
    let g = metric.get(i, j).ok_or(Error::Stencil { i, j })?;
    let inv = g.try_inverse().ok_or(Error::NotPositiveDefinite {
        what: "graph metric",
    })?;
    Ok((inv, g.determinant().sqrt()))
}

/// `g^{ij} d_i u d_j u`.
pub fn gradient_norm_sq(
    metric: &MetricField,
    field: &ScalarField,
    i: usize,
    j: usize,
) -> Result<f64> {
    let du = field.gradient(i, j)?;
    let (inv, _) = metric_at(metric, i, j)?;
    Ok(du.dot(&(inv * du)))
}

/// Divergence-form Laplace-Beltrami operator by nested central differences.
pub fn laplace_beltrami(
    metric: &MetricField,
    field: &ScalarField,
    i: usize,
    j: usize,
) -> Result<f64> {
    let grid = &field.grid;
    let flux = |di: isize, dj: isize, comp: usize| -> Result<f64> {
        let n = grid.neighbor(i, j, di, dj).ok_or(Error::Stencil { i, j })?;
        let du = field
            .gradient(n.i, n.j)
            .map_err(|_| Error::Stencil { i, j })?;
        let (inv, vol) = metric_at(metric, n.i, n.j).map_err(|e| match e {
            Error::Stencil { .. } => Error::Stencil { i, j },
            other => other,
        })?;
        Ok(vol * (inv * du)[comp])
    };
    let (_, vol) = metric_at(metric, i, j)?;
    let dx = (flux(1, 0, 0)? - flux(-1, 0, 0)?) / (2.0 * grid.hx());
    let dy = (flux(0, 1, 1)? - flux(0, -1, 1)?) / (2.0 * grid.hy());
    Ok((dx + dy) / vol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::MapFormula;
    use crate::pointwise::singular_decomposition;
    use crate::surface::{BoundaryMode, ConformalMetric};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn eye() -> Matrix2<f64> {
        Matrix2::identity()
    }

    fn euclid_pair() -> ProductMetric {
        ProductMetric::new(eye(), eye())
    }

    #[test]
    fn induced_metric_examples() {
        assert_eq!(induced_metric(&eye(), &eye(), &eye()).unwrap(), eye() * 2.0);
        assert_eq!(
            induced_metric(&Matrix2::zeros(), &eye(), &eye()).unwrap(),
            eye()
        );
        let df = Matrix2::new(2.0, 0.0, 0.0, 3.0);
        assert_eq!(
            induced_metric(&df, &eye(), &eye()).unwrap(),
            Matrix2::new(5.0, 0.0, 0.0, 10.0)
        );
        assert!(induced_metric(&df, &-eye(), &Matrix2::zeros()).is_err());
    }

    #[test]
    fn frame_examples() {
        let sd = singular_decomposition(&Matrix2::zeros(), &eye(), &eye()).unwrap();
        let f = adapted_frame(&sd);
        assert_eq!(f.e[0], join(&sd.alpha[0], &Vector2::zeros()));
        assert_eq!(f.e[2], join(&Vector2::zeros(), &sd.beta[0]));

        let sd = singular_decomposition(&eye(), &eye(), &eye()).unwrap();
        let f = adapted_frame(&sd);
        let s = 0.5f64.sqrt();
        assert!((f.e[0] - join(&sd.alpha[0], &sd.beta[0]) * s).norm() < 1e-15);
        assert!((f.e[2] - join(&(-sd.alpha[0]), &sd.beta[0]) * s).norm() < 1e-15);
    }

    #[test]
    fn normal_scalar_examples() {
        let ns = normal_scalars(&ShapeOperator::zero(), 0.7);
        assert_eq!(
            (ns.h, ns.norm_a2, ns.sigma_perp, ns.sigma_n),
            ([0.0, 0.0], 0.0, 0.0, 0.7)
        );

        let shape = ShapeOperator {
            a: [
                Matrix2::new(1.0, 0.0, 0.0, -1.0),
                Matrix2::new(0.0, 1.0, 1.0, 0.0),
            ],
        };
        let ns = normal_scalars(&shape, 0.0);
        assert_eq!(ns.sigma_perp, -2.0);
        assert_eq!(ns.norm_a2, 4.0);
        assert_eq!(ns.h, [0.0, 0.0]);
        let c = shape.a[0] * shape.a[1] - shape.a[1] * shape.a[0];
        assert_eq!(ns.sigma_perp, -c[(0, 1)]);
        assert_eq!(shape.commutator_sigma_perp(), -2.0);
    }

    #[test]
    fn ambient_curvature_examples() {
        let sd = singular_decomposition(&eye(), &eye(), &eye()).unwrap();
        let frame = adapted_frame(&sd);
        assert_eq!(
            ambient_curvature_term(&frame, &euclid_pair(), 0.0, 0.0),
            0.0
        );

        let sd = singular_decomposition(&Matrix2::zeros(), &eye(), &eye()).unwrap();
        let frame = adapted_frame(&sd);
        assert_eq!(
            ambient_curvature_term(&frame, &euclid_pair(), -1.0, -1.0),
            0.0
        );

        let sd = singular_decomposition(&eye(), &eye(), &eye()).unwrap();
        let frame = adapted_frame(&sd);
        let r = ambient_curvature_term(&frame, &euclid_pair(), -1.0, -1.0);
        // closed form (sigma_M + sigma_N) lambda mu u1^2 with lambda = mu = 1, u1 = 1/2
        assert_abs_diff_eq!(r, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn pullback_form_examples() {
        let df = Matrix2::new(2.0, 0.5, -0.3, 0.7);
        let pm = ProductMetric::new(eye() * 1.7, eye() * 0.6);
        let sd = singular_decomposition(&df, &pm.g_m, &pm.g_n).unwrap();
        let p = PointwiseGeometry::new(&df, &pm.g_m, &pm.g_n).unwrap();
        let frame = adapted_frame(&sd);
        let e = &frame.e;
        assert_abs_diff_eq!(
            pullback_form_component(ParallelForm::Omega1, &pm, &e[0], &e[1]),
            p.u1,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            pullback_form_component(ParallelForm::Omega2, &pm, &e[0], &e[1]),
            p.u2,
            epsilon = 1e-12
        );
        let nn = pullback_form_component(ParallelForm::Omega1, &pm, &e[2], &e[3]);
        assert_abs_diff_eq!(nn.abs(), p.lambda * p.mu * p.u1, epsilon = 1e-12);
    }

    #[test]
    fn kahler_crosscheck_examples() {
        let frame = adapted_frame(&singular_decomposition(&eye(), &eye(), &eye()).unwrap());
        let (phi, theta) = kahler_angle_crosscheck(&frame, &euclid_pair());
        assert_abs_diff_eq!(phi, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(theta, 1.0, epsilon = 1e-15);
        let frame =
            adapted_frame(&singular_decomposition(&Matrix2::zeros(), &eye(), &eye()).unwrap());
        assert_eq!(kahler_angle_crosscheck(&frame, &euclid_pair()), (1.0, 1.0));
    }

    fn field_of(
        formula: MapFormula,
        src: ConformalMetric,
        tgt: ConformalMetric,
        half: f64,
        n: usize,
    ) -> GeometryField {
        let grid = GridChart::centered_square(half, n).unwrap();
        GeometryField::compute(&MapField::sample(grid, formula, src, tgt).unwrap()).unwrap()
    }

    #[test]
    fn flat_and_diagonal_graphs_are_totally_geodesic() {
        let e = ConformalMetric::euclidean();
        let aff = MapFormula::Affine {
            a: 1.3,
            b: -0.4,
            c: 0.2,
            d: 0.9,
        };
        for (_, p) in field_of(aff, e.clone(), e, 1.0, 9).iter() {
            assert!(p.norm_a2 < 1e-20);
        }
        let h = ConformalMetric::poincare_disc();
        for (_, p) in field_of(MapFormula::Identity, h.clone(), h, 0.6, 17).iter() {
            assert!(p.norm_a2.sqrt() < 1e-10, "{}", p.norm_a2);
        }
    }

    #[test]
    fn holomorphic_graph_identities() {
        let h = ConformalMetric::poincare_disc();
        let field = field_of(MapFormula::ZSquared, h.clone(), h, 0.6, 33);
        let mut nontrivial = false;
        for (_, p) in field.iter() {
            assert!(p.mean_curvature_norm() < 1e-9);
            assert_abs_diff_eq!(p.point.theta, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(
                p.sigma_perp,
                -0.5 * p.norm_a2,
                epsilon = 1e-9 * (1.0 + p.norm_a2)
            );
            nontrivial |= p.norm_a2 > 1e-2;
        }
        assert!(nontrivial);
    }

    #[test]
    fn operator_examples() {
        let grid = GridChart::centered_square(1.0, 11).unwrap();
        let c = 2.5;
        let metric = MetricField::from_fn(&grid, |_, _| eye() * c);
        let constant = ScalarField::from_fn(&grid, |_, _| 3.0);
        let quad = ScalarField::from_fn(&grid, |x, y| x * x + y * y);
        assert_eq!(laplace_beltrami(&metric, &constant, 5, 5).unwrap(), 0.0);
        assert_abs_diff_eq!(
            laplace_beltrami(&metric, &quad, 5, 4).unwrap(),
            4.0 / c,
            epsilon = 1e-12
        );
        assert!(matches!(
            laplace_beltrami(&metric, &quad, 1, 5),
            Err(Error::Stencil { i: 1, j: 5 })
        ));
        assert_eq!(gradient_norm_sq(&metric, &constant, 3, 3).unwrap(), 0.0);
        let lin = ScalarField::from_fn(&grid, |x, _| x);
        assert_abs_diff_eq!(
            gradient_norm_sq(&metric, &lin, 3, 3).unwrap(),
            1.0 / c,
            epsilon = 1e-12
        );
        let diag = MetricField::from_fn(&grid, |_, _| Matrix2::new(2.0, 0.0, 0.0, 5.0));
        let sum = ScalarField::from_fn(&grid, |x, y| x + y);
        assert_abs_diff_eq!(
            gradient_norm_sq(&diag, &sum, 3, 3).unwrap(),
            0.5 + 0.2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn laplace_beltrami_converges_at_second_order() {
        // u = sin x cos y on the metric (1 + x^2) I: Delta u = -2 u / (1 + x^2)
        let err = |n: usize| {
            let grid =
                GridChart::new((-1.0, 1.0), (-1.0, 1.0), n, n, BoundaryMode::Dirichlet).unwrap();
            let metric = MetricField::from_fn(&grid, |x, _| eye() * (1.0 + x * x));
            let u = ScalarField::from_fn(&grid, |x, y| x.sin() * y.cos());
            let (i, j) = (n / 2 + n / 4, n / 2 - n / 5);
            let [x, y] = grid.point(i, j);
            (laplace_beltrami(&metric, &u, i, j).unwrap() + 2.0 * x.sin() * y.cos() / (1.0 + x * x))
                .abs()
        };
        let ratio = err(41) / err(81);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    fn spd() -> impl Strategy<Value = Matrix2<f64>> {
        (0.2f64..3.0, 0.2f64..3.0, -1.0f64..1.0).prop_map(|(a, c, t)| {
            let off = t * (a * c).sqrt() * 0.9;
            Matrix2::new(a, off, off, c)
        })
    }

    proptest! {
        #[test]
        fn frame_is_orthonormal(v in prop::array::uniform4(-3.0f64..3.0), gm in spd(), gn in spd()) {
            let df = Matrix2::new(v[0], v[1], v[2], v[3]);
            let pm = ProductMetric::new(gm, gn);
            let sd = singular_decomposition(&df, &gm, &gn).unwrap();
            let frame = adapted_frame(&sd);
            prop_assert!((frame.gram(&pm) - Matrix4::identity()).abs().max() < 1e-12);
            let p = PointwiseGeometry::new(&df, &gm, &gn).unwrap();
            let (phi, theta) = kahler_angle_crosscheck(&frame, &pm);
            prop_assert!((phi - p.phi).abs() < 1e-10);
            prop_assert!((theta - p.theta).abs() < 1e-10);
            let e = &frame.e;
            let u1 = pullback_form_component(ParallelForm::Omega1, &pm, &e[0], &e[1]);
            let u2 = pullback_form_component(ParallelForm::Omega2, &pm, &e[0], &e[1]);
            prop_assert!((u1 - p.u1).abs() < 1e-10 && (u2 - p.u2).abs() < 1e-10);
            // positively oriented product frame
            let m = Matrix4::from_columns(&frame.e);
            prop_assert!(m.determinant() > -1e-12);
        }

        #[test]
        fn sigma_perp_matches_commutator(a in prop::array::uniform6(-5.0f64..5.0)) {
            let shape = ShapeOperator {
                a: [Matrix2::new(a[0], a[1], a[1], a[2]), Matrix2::new(a[3], a[4], a[4], a[5])],
            };
            prop_assert_eq!(shape.sigma_perp(), shape.commutator_sigma_perp());
            prop_assert!(shape.norm_sq() - 2.0 * shape.sigma_perp().abs() >= -1e-12);
        }

        #[test]
        fn ambient_term_closed_form(v in prop::array::uniform4(-3.0f64..3.0), sm in -2.0f64..2.0, sn in -2.0f64..2.0) {
            let df = Matrix2::new(v[0], v[1], v[2], v[3]);
            let sd = singular_decomposition(&df, &eye(), &eye()).unwrap();
            let p = PointwiseGeometry::new(&df, &eye(), &eye()).unwrap();
            let r = ambient_curvature_term(&adapted_frame(&sd), &euclid_pair(), sm, sn);
            let closed = (sm + sn) * p.u1 * p.u2;
            prop_assert!((r - closed).abs() < 1e-10);
        }
    }
}
