//! Maps between charts: closed-form formulas and their grid samples.

use nalgebra::Matrix2;
use num_dual::{Dual64, DualNum};

use crate::error::{Error, Result};
use crate::expr::MapExpression;
use crate::surface::{BoundaryMode, ConformalMetric, GridChart};

/// A smooth bump `sin(pi s) sin(pi t)` on a rectangle, vanishing on its edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub epsilon: f64,
    pub direction: [f64; 2],
}

impl Bump {
    pub fn on_grid(grid: &GridChart, epsilon: f64) -> Self {
        Self {
            x_range: grid.x_range(),
            y_range: grid.y_range(),
            epsilon,
            direction: [1.0, 1.0],
        }
    }

    fn profile<D: DualNum<Primitive = f64> + Copy>(&self, x: D, y: D) -> D {
        let pi = std::f64::consts::PI;
        let s = (x - self.x_range.0) * (pi / (self.x_range.1 - self.x_range.0));
        let t = (y - self.y_range.0) * (pi / (self.y_range.1 - self.y_range.0));
        s.sin() * t.sin() * self.epsilon
    }
}

/// Closed-form maps. All of them evaluate over dual numbers, so exact
/// differentials are available alongside values.
#[derive(Debug, Clone, PartialEq)]
pub enum MapFormula {
    /// `(1/2)(e^x - 3e^-x)(cos(y/2), -sin(y/2))`, a minimal map of the plane
    /// whose Jacobian determinant takes every real value.
    PaperExample,
    Identity,
    /// `z -> z^2`.
    ZSquared,
    /// The disc automorphism `z -> (z - a) / (1 - conj(a) z)`.
    Mobius {
        a: [f64; 2],
    },
    /// The linear map with matrix `[[a, b], [c, d]]`.
    Affine {
        a: f64,
        b: f64,
        c: f64,
        d: f64,
    },
    Constant {
        value: [f64; 2],
    },
    /// `z -> k z` for real `k`.
    Scale(f64),
    Expression(MapExpression),
    Perturbed {
        base: Box<MapFormula>,
        bump: Bump,
    },
}

impl MapFormula {
    pub fn perturbed(self, bump: Bump) -> Self {
        MapFormula::Perturbed {
            base: Box::new(self),
            bump,
        }
    }

    pub fn name(&self) -> String {
        match self {
            MapFormula::PaperExample => "paper_example".into(),
            MapFormula::Identity => "identity".into(),
            MapFormula::ZSquared => "z_squared".into(),
            MapFormula::Mobius { a } => format!("mobius({}, {})", a[0], a[1]),
            MapFormula::Affine { a, b, c, d } => format!("affine({a}, {b}, {c}, {d})"),
            MapFormula::Constant { value } => format!("constant({}, {})", value[0], value[1]),
            MapFormula::Scale(k) => format!("scale({k})"),
            MapFormula::Expression(e) => format!("expression({})", e.source()),
            MapFormula::Perturbed { base, bump } => {
                format!("{} + {}*bump", base.name(), bump.epsilon)
            }
        }
    }

    pub fn apply<D: DualNum<Primitive = f64> + Copy>(&self, x: D, y: D) -> [D; 2] {
        match self {
            MapFormula::PaperExample => {
                let r = (x.exp() - (-x).exp() * 3.0) * 0.5;
                let half = y * 0.5;
                [r * half.cos(), -(r * half.sin())]
            }
            MapFormula::Identity => [x, y],
            MapFormula::ZSquared => [x * x - y * y, x * y * 2.0],
            MapFormula::Mobius { a } => {
                // (z - a) / (1 - conj(a) z)
                let (nr, ni) = (x - a[0], y - a[1]);
                let dr = -(x * a[0] + y * a[1]) + 1.0;
                let di = -(y * a[0] - x * a[1]);
                let den = dr * dr + di * di;
                [(nr * dr + ni * di) / den, (ni * dr - nr * di) / den]
            }
            MapFormula::Affine { a, b, c, d } => [x * *a + y * *b, x * *c + y * *d],
            MapFormula::Constant { value } => [D::from(value[0]), D::from(value[1])],
            MapFormula::Scale(k) => [x * *k, y * *k],
            MapFormula::Expression(e) => e.apply(x, y),
            MapFormula::Perturbed { base, bump } => {
                let [f1, f2] = base.apply(x, y);
                let b = bump.profile(x, y);
                [f1 + b * bump.direction[0], f2 + b * bump.direction[1]]
            }
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        self.apply(x, y)
    }

    /// Exact differential, `df[(gamma, i)] = d_i f^gamma`.
    pub fn jacobian(&self, x: f64, y: f64) -> Matrix2<f64> {
        let dx = self.apply(Dual64::new(x, 1.0), Dual64::from(y));
        let dy = self.apply(Dual64::from(x), Dual64::new(y, 1.0));
        Matrix2::new(dx[0].eps, dy[0].eps, dx[1].eps, dy[1].eps)
    }
}

/// A map sampled on a grid, with the metrics of its source and target charts.
///
/// On periodic grids the map is a lift: stepping one period in `x` adds
/// `periodic_shift[0]` to the value (likewise in `y`), which lets linear maps of
/// tori live on a periodic grid.
#[derive(Debug, Clone)]
pub struct MapField {
    grid: GridChart,
    values: Vec<[f64; 2]>,
    source: ConformalMetric,
    target: ConformalMetric,
    formula: Option<MapFormula>,
    periodic_shift: [[f64; 2]; 2],
}

impl MapField {
    /// Samples `formula` on `grid`. Checks both chart domains eagerly.
    pub fn sample(
        grid: GridChart,
        formula: MapFormula,
        source: ConformalMetric,
        target: ConformalMetric,
    ) -> Result<Self> {
        let values = grid
            .points()
            .map(|(i, j)| {
                let [x, y] = grid.point(i, j);
                formula.eval(x, y)
            })
            .collect();
        let periodic_shift = match grid.boundary() {
            BoundaryMode::Dirichlet => [[0.0; 2]; 2],
            BoundaryMode::Periodic => {
                let [x0, y0] = grid.point(0, 0);
                let (lx, ly) = grid.periods();
                let base = formula.eval(x0, y0);
                let fx = formula.eval(x0 + lx, y0);
                let fy = formula.eval(x0, y0 + ly);
                [
                    [fx[0] - base[0], fx[1] - base[1]],
                    [fy[0] - base[0], fy[1] - base[1]],
                ]
            }
        };
        let field = Self {
            grid,
            values,
            source,
            target,
            formula: Some(formula),
            periodic_shift,
        };
        field.validate()?;
        Ok(field)
    }

    pub fn from_values(
        grid: GridChart,
        values: Vec<[f64; 2]>,
        source: ConformalMetric,
        target: ConformalMetric,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} map values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        let field = Self {
            grid,
            values,
            source,
            target,
            formula: None,
            periodic_shift: [[0.0; 2]; 2],
        };
        field.validate()?;
        Ok(field)
    }

    pub fn with_periodic_shift(mut self, shift: [[f64; 2]; 2]) -> Self {
        self.periodic_shift = shift;
        self
    }

    fn validate(&self) -> Result<()> {
        self.grid.check_domain(&self.source)?;
        for (idx, v) in self.values.iter().enumerate() {
            if !self.target.contains(v[0], v[1]) {
                let (i, j) = self.grid.coords(idx);
                return Err(Error::Escaped { i, j });
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &GridChart {
        &self.grid
    }

    pub fn source(&self) -> &ConformalMetric {
        &self.source
    }

    pub fn target(&self) -> &ConformalMetric {
        &self.target
    }

    pub fn formula(&self) -> Option<&MapFormula> {
        self.formula.as_ref()
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn periodic_shift(&self) -> [[f64; 2]; 2] {
        self.periodic_shift
    }

    pub fn value(&self, i: usize, j: usize) -> [f64; 2] {
        self.values[self.grid.index(i, j)]
    }

    /// Value at an offset, with the lift shift applied across periodic seams.
    pub fn value_at_offset(&self, i: usize, j: usize, di: isize, dj: isize) -> Option<[f64; 2]> {
        let nb = self.grid.neighbor(i, j, di, dj)?;
        let v = self.value(nb.i, nb.j);
        let (wx, wy) = (nb.wrap_x as f64, nb.wrap_y as f64);
        let s = &self.periodic_shift;
        Some([
            v[0] + wx * s[0][0] + wy * s[1][0],
            v[1] + wx * s[0][1] + wy * s[1][1],
        ])
    }

    /// A copy with replaced values and the same grid, metrics and periodic shift.
    /// The analytic formula is dropped since it no longer describes the samples.
    pub fn with_values(&self, values: Vec<[f64; 2]>) -> Self {
        Self {
            grid: self.grid.clone(),
            values,
            source: self.source.clone(),
            target: self.target.clone(),
            formula: None,
            periodic_shift: self.periodic_shift,
        }
    }
}
