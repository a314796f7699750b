//! Per-point linear algebra of a map: the differential, its singular
//! decomposition relative to the two metrics, the projection Jacobians `u1`,
//! `u2`, the Jacobian determinant and the cosines of the two Kähler angles.

use std::fmt;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::map::MapField;

/// Relative gap below which `lambda = mu` is treated as a conformal point.
const CONFORMAL_GAP: f64 = 1e-14;

/// Order-2 central-difference differential at grid point `(i, j)`,
/// `df[(gamma, k)] = d_k f^gamma`.
pub fn differential(map: &MapField, i: usize, j: usize) -> Result<Matrix2<f64>> {
    let g = map.grid();
    let get = |di, dj| {
        map.value_at_offset(i, j, di, dj)
            .ok_or(Error::Stencil { i, j })
    };
    let (xp, xm, yp, ym) = (get(1, 0)?, get(-1, 0)?, get(0, 1)?, get(0, -1)?);
    let (hx, hy) = (g.hx(), g.hy());
    Ok(Matrix2::new(
        (xp[0] - xm[0]) / (2.0 * hx),
        (yp[0] - ym[0]) / (2.0 * hy),
        (xp[1] - xm[1]) / (2.0 * hx),
        (yp[1] - ym[1]) / (2.0 * hy),
    ))
}

/// Central second derivatives; entry `gamma` is the Hessian of `f^gamma`.
pub fn second_derivatives(map: &MapField, i: usize, j: usize) -> Result<[Matrix2<f64>; 2]> {
    let g = map.grid();
    let get = |di, dj| {
        map.value_at_offset(i, j, di, dj)
            .ok_or(Error::Stencil { i, j })
    };
    let c = get(0, 0)?;
    let (xp, xm, yp, ym) = (get(1, 0)?, get(-1, 0)?, get(0, 1)?, get(0, -1)?);
    let (pp, pm, mp, mm) = (get(1, 1)?, get(1, -1)?, get(-1, 1)?, get(-1, -1)?);
    let (hx, hy) = (g.hx(), g.hy());
    let hess = |k: usize| {
        let fxx = (xp[k] - 2.0 * c[k] + xm[k]) / (hx * hx);
        let fyy = (yp[k] - 2.0 * c[k] + ym[k]) / (hy * hy);
        let fxy = (pp[k] - pm[k] - mp[k] + mm[k]) / (4.0 * hx * hy);
        Matrix2::new(fxx, fxy, fxy, fyy)
    };
    Ok([hess(0), hess(1)])
}

fn check_spd(m: &Matrix2<f64>, what: &'static str) -> Result<()> {
    let scale = m.abs().max();
    let symmetric = (m[(0, 1)] - m[(1, 0)]).abs() <= 1e-12 * scale;
    if symmetric && m[(0, 0)] > 0.0 && m.determinant() > 0.0 && m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite { what })
    }
}

/// Complex structure of a 2D metric: `g(J X, Y) = sqrt(det g) (X x Y)`.
pub fn complex_structure(g: &Matrix2<f64>) -> Matrix2<f64> {
    let rot = Matrix2::new(0.0, -1.0, 1.0, 0.0);
    let inv = g.try_inverse().unwrap_or_else(Matrix2::zeros);
    inv * rot * g.determinant().sqrt()
}

fn inner(g: &Matrix2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.dot(&(g * b))
}

fn normalize(g: &Matrix2<f64>, v: Vector2<f64>) -> Vector2<f64> {
    v / inner(g, &v, &v).sqrt()
}

/// Singular values and frames of `df` relative to `g_M` at `p` and `g_N` at `f(p)`.
///
/// `alpha` is a positively oriented `g_M`-orthonormal frame with
/// `df alpha_1 = lambda beta_1`, `df alpha_2 = mu beta_2`; `beta` is
/// `g_N`-orthonormal and its orientation is `orientation` (positive when `s = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularDecomposition {
    pub lambda: f64,
    pub mu: f64,
    pub alpha: [Vector2<f64>; 2],
    pub beta: [Vector2<f64>; 2],
    /// Sign of `det df`, one of -1, 0, +1.
    pub orientation: i8,
}

impl SingularDecomposition {
    /// Rebuilds `df` as `lambda beta_1 (g_M alpha_1)^T + mu beta_2 (g_M alpha_2)^T`.
    pub fn reconstruct(&self, g_m: &Matrix2<f64>) -> Matrix2<f64> {
        let c1 = g_m * self.alpha[0];
        let c2 = g_m * self.alpha[1];
        self.beta[0] * c1.transpose() * self.lambda + self.beta[1] * c2.transpose() * self.mu
    }
}

pub fn singular_decomposition(
    df: &Matrix2<f64>,
    g_m: &Matrix2<f64>,
    g_n: &Matrix2<f64>,
) -> Result<SingularDecomposition> {
    check_spd(g_m, "source metric")?;
    check_spd(g_n, "target metric")?;
    if df.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("differential"));
    }
    let det = df.determinant();
    let orientation: i8 = if det > 0.0 {
        1
    } else if det < 0.0 {
        -1
    } else {
        0
    };
    // f*g_N relative to g_M: trace and determinant give lambda^2 + mu^2 and lambda mu.
    // Whitened pullback C = L^-1 (df^T g_N df) L^-T with g_M = L L^T; its
    // eigenvalues are lambda^2 <= mu^2. The gap is formed without cancellation.
    let l = g_m.cholesky().ok_or(Error::NotPositiveDefinite {
        what: "source metric",
    })?;
    let l_inv = l.l().try_inverse().ok_or(Error::NotPositiveDefinite {
        what: "source metric",
    })?;
    let c = l_inv * (df.transpose() * g_n * df) * l_inv.transpose();
    let trace = (c[(0, 0)] + c[(1, 1)]).max(0.0);
    let off = 0.5 * (c[(0, 1)] + c[(1, 0)]);
    let gap = (c[(0, 0)] - c[(1, 1)]).hypot(2.0 * off);
    let lm = det.abs() * (g_n.determinant() / g_m.determinant()).sqrt();
    let mu = ((trace + gap) / 2.0).sqrt();
    let lambda = if mu > 0.0 { (lm / mu).min(mu) } else { 0.0 };

    let j_m = complex_structure(g_m);
    let j_n = complex_structure(g_n);
    let alpha1 = if gap <= CONFORMAL_GAP * trace || trace == 0.0 {
        normalize(g_m, Vector2::new(1.0, 0.0))
    } else {
        let psi = 0.5 * (2.0 * off).atan2(c[(0, 0)] - c[(1, 1)]);
        let v_min = Vector2::new(-psi.sin(), psi.cos());
        normalize(g_m, l_inv.transpose() * v_min)
    };
    let alpha2 = j_m * alpha1;

    let beta2 = {
        let img = df * alpha2;
        let n = inner(g_n, &img, &img).sqrt();
        if mu > 0.0 && n > 0.0 {
            img / n
        } else {
            j_n * normalize(g_n, Vector2::new(1.0, 0.0))
        }
    };
    let beta1 = if orientation < 0 {
        j_n * beta2
    } else {
        -(j_n * beta2)
    };
    Ok(SingularDecomposition {
        lambda,
        mu,
        alpha: [alpha1, alpha2],
        beta: [beta1, beta2],
        orientation,
    })
}

/// `u1 = 1/sqrt((1+lambda^2)(1+mu^2))`, `u2 = s lambda mu u1`.
pub fn jacobians(lambda: f64, mu: f64, orientation: i8) -> (f64, f64) {
    let u1 = 1.0 / ((1.0 + lambda * lambda) * (1.0 + mu * mu)).sqrt();
    (u1, f64::from(orientation) * lambda * mu * u1)
}

/// Cosines of the Kähler angles: `(phi, theta) = (u1 - u2, u1 + u2)`.
pub fn kahler_cosines(u1: f64, u2: f64) -> (f64, f64) {
    (u1 - u2, u1 + u2)
}

pub fn jacobian_determinant(u1: f64, u2: f64) -> f64 {
    u2 / u1
}

/// Singular values of `f` when the source carries the graph metric.
pub fn graph_metric_singular_values(lambda: f64, mu: f64) -> (f64, f64) {
    (
        lambda / (1.0 + lambda * lambda).sqrt(),
        mu / (1.0 + mu * mu).sqrt(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Complex,
    AntiComplex,
    Lagrangian1,
    Lagrangian2,
    Generic,
}

/// Which product complex structure a classification refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComplexStructure {
    J1,
    J2,
}

/// Every classification that applies at a point, with the structure that triggered it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Classification {
    pub complex_j1: bool,
    pub complex_j2: bool,
    pub anti_complex_j1: bool,
    pub anti_complex_j2: bool,
    pub lagrangian1: bool,
    pub lagrangian2: bool,
}

impl Classification {
    pub fn contains(&self, kind: PointKind) -> bool {
        match kind {
            PointKind::Complex => self.complex_j1 || self.complex_j2,
            PointKind::AntiComplex => self.anti_complex_j1 || self.anti_complex_j2,
            PointKind::Lagrangian1 => self.lagrangian1,
            PointKind::Lagrangian2 => self.lagrangian2,
            PointKind::Generic => self.is_generic(),
        }
    }

    pub fn is_generic(&self) -> bool {
        *self == Self::default()
    }

    /// Highest-priority kind: complex, anti-complex, Lagrangian (J1 then J2), generic.
    pub fn primary(&self) -> PointKind {
        [
            PointKind::Complex,
            PointKind::AntiComplex,
            PointKind::Lagrangian1,
            PointKind::Lagrangian2,
        ]
        .into_iter()
        .find(|k| self.contains(*k))
        .unwrap_or(PointKind::Generic)
    }

    pub fn hits(&self) -> Vec<(PointKind, ComplexStructure)> {
        let mut out = Vec::new();
        let flags = [
            (self.complex_j1, PointKind::Complex, ComplexStructure::J1),
            (self.complex_j2, PointKind::Complex, ComplexStructure::J2),
            (
                self.anti_complex_j1,
                PointKind::AntiComplex,
                ComplexStructure::J1,
            ),
            (
                self.anti_complex_j2,
                PointKind::AntiComplex,
                ComplexStructure::J2,
            ),
            (
                self.lagrangian1,
                PointKind::Lagrangian1,
                ComplexStructure::J1,
            ),
            (
                self.lagrangian2,
                PointKind::Lagrangian2,
                ComplexStructure::J2,
            ),
        ];
        for (set, kind, s) in flags {
            if set {
                out.push((kind, s));
            }
        }
        out
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hits = self.hits();
        if hits.is_empty() {
            return f.write_str("Generic");
        }
        let labels: Vec<String> = hits
            .into_iter()
            .map(|(k, s)| match k {
                PointKind::Complex => format!("Complex({s:?})"),
                PointKind::AntiComplex => format!("AntiComplex({s:?})"),
                other => format!("{other:?}"),
            })
            .collect();
        f.write_str(&labels.join("|"))
    }
}

pub fn classify_point(phi: f64, theta: f64, tol: f64) -> Classification {
    Classification {
        complex_j1: (phi - 1.0).abs() <= tol,
        complex_j2: (theta - 1.0).abs() <= tol,
        anti_complex_j1: phi <= -1.0 + tol,
        anti_complex_j2: theta <= -1.0 + tol,
        lagrangian1: phi.abs() <= tol,
        lagrangian2: theta.abs() <= tol,
    }
}

/// Everything the pointwise module knows about one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseGeometry {
    pub df: Matrix2<f64>,
    pub lambda: f64,
    pub mu: f64,
    pub orientation: i8,
    pub alpha: [Vector2<f64>; 2],
    pub beta: [Vector2<f64>; 2],
    pub u1: f64,
    pub u2: f64,
    pub jf: f64,
    pub phi: f64,
    pub theta: f64,
    pub angle_a1: f64,
    pub angle_a2: f64,
}

impl PointwiseGeometry {
    pub fn new(df: &Matrix2<f64>, g_m: &Matrix2<f64>, g_n: &Matrix2<f64>) -> Result<Self> {
        let sd = singular_decomposition(df, g_m, g_n)?;
        let (u1, u2) = jacobians(sd.lambda, sd.mu, sd.orientation);
        let (phi, theta) = kahler_cosines(u1, u2);
        Ok(Self {
            df: *df,
            lambda: sd.lambda,
            mu: sd.mu,
            orientation: sd.orientation,
            alpha: sd.alpha,
            beta: sd.beta,
            u1,
            u2,
            jf: jacobian_determinant(u1, u2),
            phi,
            theta,
            angle_a1: phi.clamp(-1.0, 1.0).acos(),
            angle_a2: theta.clamp(-1.0, 1.0).acos(),
        })
    }

    pub fn decomposition(&self) -> SingularDecomposition {
        SingularDecomposition {
            lambda: self.lambda,
            mu: self.mu,
            alpha: self.alpha,
            beta: self.beta,
            orientation: self.orientation,
        }
    }

    pub fn classify(&self, tol: f64) -> Classification {
        classify_point(self.phi, self.theta, tol)
    }

    pub fn area_decreasing(&self, tol: f64) -> bool {
        self.phi >= -tol && self.theta >= -tol
    }
}

/// Pointwise geometry at an arbitrary chart point from the map's exact differential.
pub fn pointwise_at_point(
    formula: &crate::map::MapFormula,
    source: &crate::surface::ConformalMetric,
    target: &crate::surface::ConformalMetric,
    x: f64,
    y: f64,
) -> Result<PointwiseGeometry> {
    let [fx, fy] = formula.eval(x, y);
    let df = formula.jacobian(x, y);
    PointwiseGeometry::new(&df, &source.tensor(x, y)?, &target.tensor(fx, fy)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::MapFormula;
    use crate::surface::{ConformalMetric, GridChart};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn eye() -> Matrix2<f64> {
        Matrix2::identity()
    }

    #[test]
    fn differential_of_simple_maps() {
        let grid = GridChart::centered_square(0.5, 9).unwrap();
        let e = ConformalMetric::euclidean();
        let id =
            MapField::sample(grid.clone(), MapFormula::Identity, e.clone(), e.clone()).unwrap();
        assert!((differential(&id, 4, 4).unwrap() - eye()).abs().max() < 1e-14);
        let aff = MapField::sample(
            grid,
            MapFormula::Affine {
                a: 2.0,
                b: 0.0,
                c: 0.0,
                d: 3.0,
            },
            e.clone(),
            e,
        )
        .unwrap();
        let df = differential(&aff, 3, 5).unwrap();
        assert!((df - Matrix2::new(2.0, 0.0, 0.0, 3.0)).abs().max() < 1e-14);
        assert!(matches!(
            differential(&aff, 0, 5),
            Err(Error::Stencil { i: 0, j: 5 })
        ));
    }

    #[test]
    fn differential_of_explicit_map_converges() {
        // symbolic oracle: df(0,0) = diag(2, 1/2)
        let e = ConformalMetric::euclidean();
        let mut errs = Vec::new();
        for n in [17, 33] {
            let grid = GridChart::centered_square(1.0, n).unwrap();
            let m = MapField::sample(grid, MapFormula::PaperExample, e.clone(), e.clone()).unwrap();
            let df = differential(&m, n / 2, n / 2).unwrap();
            errs.push((df - Matrix2::new(2.0, 0.0, 0.0, 0.5)).abs().max());
        }
        let ratio = errs[0] / errs[1];
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn singular_values_examples() {
        let sd = singular_decomposition(&eye(), &eye(), &eye()).unwrap();
        assert_eq!((sd.lambda, sd.mu, sd.orientation), (1.0, 1.0, 1));

        let df = Matrix2::new(2.0, 0.0, 0.0, 0.5);
        let sd = singular_decomposition(&df, &eye(), &eye()).unwrap();
        assert_abs_diff_eq!(sd.lambda, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sd.mu, 2.0, epsilon = 1e-15);
        assert_eq!(sd.orientation, 1);
        // alpha_1 is the y axis up to sign
        assert_abs_diff_eq!(sd.alpha[0][0].abs(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sd.alpha[0][1].abs(), 1.0, epsilon = 1e-15);

        let sd = singular_decomposition(&Matrix2::zeros(), &eye(), &eye()).unwrap();
        assert_eq!((sd.lambda, sd.mu, sd.orientation), (0.0, 0.0, 0));
        assert_eq!(sd.alpha[0], Vector2::new(1.0, 0.0));
    }

    #[test]
    fn non_spd_metric_is_rejected() {
        let bad = Matrix2::new(1.0, 0.0, 0.0, -1.0);
        assert!(singular_decomposition(&eye(), &bad, &eye()).is_err());
        assert!(singular_decomposition(&eye(), &eye(), &Matrix2::new(1.0, 2.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn jacobian_examples() {
        assert_eq!(jacobians(0.0, 0.0, 0), (1.0, 0.0));
        assert_eq!(jacobians(1.0, 1.0, 1), (0.5, 0.5));
        let (u1, u2) = jacobians(0.5, 2.0, 1);
        assert_abs_diff_eq!(u1, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(u2, 0.4, epsilon = 1e-15);
        assert_eq!(kahler_cosines(1.0, 0.0), (1.0, 1.0));
        assert_eq!(kahler_cosines(0.5, 0.5), (0.0, 1.0));
        let (p, t) = kahler_cosines(u1, u2);
        assert_abs_diff_eq!(p, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t, 0.8, epsilon = 1e-15);
        assert_eq!(jacobian_determinant(0.5, 0.5), 1.0);
        assert_abs_diff_eq!(jacobian_determinant(u1, u2), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn explicit_map_jacobian_values() {
        let e = ConformalMetric::euclidean();
        let jf = |x: f64, y: f64| {
            pointwise_at_point(&MapFormula::PaperExample, &e, &e, x, y)
                .unwrap()
                .jf
        };
        assert_abs_diff_eq!(jf(0.0, 0.3), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(jf(0.5 * 3f64.ln(), -1.0), 0.0, epsilon = 1e-12);
        // symbolic: J = -(e^{2x} - 9 e^{-2x}) / 8
        let x = 0.7f64;
        let exact = -((2.0 * x).exp() - 9.0 * (-2.0 * x).exp()) / 8.0;
        assert_abs_diff_eq!(jf(x, 1.1), exact, epsilon = 1e-12);
    }

    #[test]
    fn classification_examples() {
        let c = classify_point(0.0, 1.0, 1e-9);
        assert!(c.contains(PointKind::Lagrangian1));
        assert!(c.complex_j2 && !c.complex_j1);
        assert_eq!(c.to_string(), "Complex(J2)|Lagrangian1");
        let c = classify_point(1.0, 1.0, 1e-9);
        assert_eq!(c.primary(), PointKind::Complex);
        assert!(classify_point(0.3, 0.5, 1e-9).is_generic());
        assert_eq!(classify_point(0.3, 0.5, 1e-9).primary(), PointKind::Generic);
        // phi = 1 is complex whatever theta does
        for theta in [-1.0, -0.2, 0.0, 0.5, 1.0] {
            assert_eq!(
                classify_point(1.0, theta, 1e-9).primary(),
                PointKind::Complex
            );
        }
        assert!(classify_point(-1.0, 0.3, 1e-9).contains(PointKind::AntiComplex));
        assert!(classify_point(0.4, 0.0, 1e-9).contains(PointKind::Lagrangian2));
    }

    #[test]
    fn graph_metric_values() {
        assert_eq!(graph_metric_singular_values(0.0, 0.0), (0.0, 0.0));
        let (a, b) = graph_metric_singular_values(1.0, 1.0);
        assert_abs_diff_eq!(a, 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(b, 0.5f64.sqrt(), epsilon = 1e-15);
        let (a, b) = graph_metric_singular_values(0.5, 2.0);
        assert_abs_diff_eq!(a, 1.0 / 5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(b, 2.0 / 5f64.sqrt(), epsilon = 1e-15);
    }

    fn spd() -> impl Strategy<Value = Matrix2<f64>> {
        (0.2f64..3.0, 0.2f64..3.0, -1.0f64..1.0).prop_map(|(a, c, t)| {
            let off = t * (a * c).sqrt() * 0.9;
            Matrix2::new(a, off, off, c)
        })
    }

    fn matrix() -> impl Strategy<Value = Matrix2<f64>> {
        prop::array::uniform4(-3.0f64..3.0).prop_map(|v| Matrix2::new(v[0], v[1], v[2], v[3]))
    }

    proptest! {
        #[test]
        fn decomposition_reconstructs_differential(df in matrix(), gm in spd(), gn in spd()) {
            let sd = singular_decomposition(&df, &gm, &gn).unwrap();
            prop_assert!(sd.lambda >= 0.0 && sd.lambda <= sd.mu);
            let rebuilt = sd.reconstruct(&gm);
            prop_assert!((rebuilt - df).abs().max() <= 1e-10 * (1.0 + df.abs().max()));
            for a in 0..2 {
                for b in 0..2 {
                    let want = if a == b { 1.0 } else { 0.0 };
                    prop_assert!((inner(&gm, &sd.alpha[a], &sd.alpha[b]) - want).abs() < 1e-12);
                    prop_assert!((inner(&gn, &sd.beta[a], &sd.beta[b]) - want).abs() < 1e-12);
                }
            }
            // alpha positively oriented
            let a = &sd.alpha;
            prop_assert!(a[0][0] * a[1][1] - a[0][1] * a[1][0] > 0.0);
        }

        #[test]
        fn jacobian_invariants(lambda in 0.0f64..50.0, extra in 0.0f64..50.0, s in -1i8..=1) {
            let mu = lambda + extra;
            let (u1, u2) = jacobians(lambda, mu, s);
            prop_assert!((u1 * u1 * (1.0 + lambda * lambda) * (1.0 + mu * mu) - 1.0).abs() < 1e-12);
            let (phi, theta) = kahler_cosines(u1, u2);
            prop_assert!(phi > -1.0 && phi <= 1.0);
            prop_assert!(theta > -1.0 && theta <= 1.0);
            prop_assert!(phi + theta > 0.0);
            prop_assert!((phi + theta - 2.0 * u1).abs() < 1e-15);
            let (a, b) = graph_metric_singular_values(lambda, mu);
            prop_assert!(a < 1.0 && b < 1.0);
        }

        #[test]
        fn orientation_matches_determinant(df in matrix(), gm in spd(), gn in spd()) {
            let p = PointwiseGeometry::new(&df, &gm, &gn).unwrap();
            let det = df.determinant();
            if det.abs() > 1e-9 {
                prop_assert_eq!(p.jf.signum(), det.signum());
            }
        }
    }
}
