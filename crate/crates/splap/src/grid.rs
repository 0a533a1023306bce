//! Discrete periodic box and its calculus.
//!
//! The spatial domain is the periodic box [-R, R)^d sampled on a uniform
//! lattice with n points per axis. `grad` is the one-sided forward
//! difference and `div` the backward difference, so the pair satisfies the
//! summation-by-parts identity
//!
//! ```text
//! inner(grad u, F) == -inner(u, div F)
//! ```
//!
//! exactly in exact arithmetic. Every lattice integral is the plain
//! cell-volume-weighted sum, which keeps that identity and the discrete
//! energy bookkeeping downstream exact.

/// Uniform periodic lattice on [-R, R)^d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    points_per_axis: usize,
    half_width: f64,
    spacing: f64,
    len: usize,
}

impl Grid {
    /// Build a grid with `dim` in 1..=3, `points_per_axis >= 2` and box
    /// half-width `half_width > 0`. Panics on invalid input; the config
    /// layer performs keyed validation before calling this.
    pub fn new(dim: usize, points_per_axis: usize, half_width: f64) -> Self {
        assert!(
            (1..=3).contains(&dim),
            "grid dim must be 1, 2 or 3, got {dim}"
        );
        assert!(
            points_per_axis >= 2,
            "grid needs at least 2 points per axis"
        );
        assert!(
            half_width > 0.0 && half_width.is_finite(),
            "grid half-width must be positive and finite"
        );
        let len = points_per_axis
            .checked_pow(dim as u32)
            .expect("grid point count overflows usize");
        Grid {
            dim,
            points_per_axis,
            half_width,
            spacing: 2.0 * half_width / points_per_axis as f64,
            len,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Lattice spacing h = 2R/n.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of lattice points, n^d.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell volume h^d, the quadrature weight of every lattice sum.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Linear-index stride of one step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        debug_assert!(axis < self.dim);
        self.points_per_axis.pow(axis as u32)
    }

    /// Physical coordinates of lattice point `idx` (first `dim` entries).
    pub fn point(&self, idx: usize) -> [f64; 3] {
        debug_assert!(idx < self.len);
        let mut out = [0.0; 3];
        let mut rem = idx;
        for a in 0..self.dim {
            let c = rem % self.points_per_axis;
            rem /= self.points_per_axis;
            out[a] = -self.half_width + c as f64 * self.spacing;
        }
        out
    }
}

/// Scalar lattice function; the discrete member of L^2 of the box.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Field {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Field {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Build a field by evaluating `f` at each lattice point.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let p = grid.point(i);
                f(&p[..grid.dim()])
            })
            .collect();
        Field { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "value count does not match grid");
        Field { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// self + c * other
    pub fn axpy(&self, c: f64, other: &Field) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + c * b)
            .collect();
        Field {
            grid: self.grid,
            values,
        }
    }

    pub fn scale(&self, c: f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add_scaled(&mut self, c: f64, other: &Field) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }
}

/// d-component lattice vector function; holds gradients and fluxes.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        VectorField {
            grid,
            components: vec![vec![0.0; grid.len()]; grid.dim()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.components[axis]
    }

    /// Euclidean magnitude |F(x)| over the d components at point `idx`.
    pub fn magnitude_sq(&self, idx: usize) -> f64 {
        self.components.iter().map(|c| c[idx] * c[idx]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.iter().all(|v| v.is_finite()))
    }
}

/// Forward-difference gradient with periodic wraparound.
///
/// Component i at x is (u(x + h e_i) - u(x)) / h.
pub fn grad(u: &Field) -> VectorField {
    let g = u.grid();
    let n = g.points_per_axis();
    let inv_h = 1.0 / g.spacing();
    let mut out = VectorField::zeros(g);
    for axis in 0..g.dim() {
        let stride = g.stride(axis);
        let comp = out.component_mut(axis);
        for idx in 0..g.len() {
            let c = (idx / stride) % n;
            let up = if c + 1 == n {
                idx + stride - n * stride
            } else {
                idx + stride
            };
            comp[idx] = (u.values[up] - u.values[idx]) * inv_h;
        }
    }
    out
}

/// Backward-difference divergence, the exact negative adjoint of [`grad`].
///
/// Value at x is sum_i (F_i(x) - F_i(x - h e_i)) / h.
pub fn div(f: &VectorField) -> Field {
    let g = f.grid();
    let n = g.points_per_axis();
    let inv_h = 1.0 / g.spacing();
    let mut out = Field::zeros(g);
    for axis in 0..g.dim() {
        let stride = g.stride(axis);
        let comp = f.component(axis);
        for idx in 0..g.len() {
            let c = (idx / stride) % n;
            let down = if c == 0 {
                idx + (n - 1) * stride
            } else {
                idx - stride
            };
            out.values[idx] += (comp[idx] - comp[down]) * inv_h;
        }
    }
    out
}

/// Cell-volume-weighted inner product of two scalar fields.
pub fn inner(u: &Field, v: &Field) -> f64 {
    debug_assert_eq!(u.grid, v.grid);
    let dot: f64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    u.grid.cell_volume() * dot
}

/// Cell-volume-weighted inner product of two vector fields.
pub fn inner_vec(u: &VectorField, v: &VectorField) -> f64 {
    debug_assert_eq!(u.grid, v.grid);
    let mut dot = 0.0;
    for axis in 0..u.grid.dim() {
        dot += u.components[axis]
            .iter()
            .zip(&v.components[axis])
            .map(|(a, b)| a * b)
            .sum::<f64>();
    }
    u.grid.cell_volume() * dot
}

pub fn norm_l2(u: &Field) -> f64 {
    inner(u, u).sqrt()
}

pub fn norm_l2_vec(f: &VectorField) -> f64 {
    inner_vec(f, f).sqrt()
}

/// L^p lattice norm of a scalar field, p in (1, inf).
pub fn norm_lp(u: &Field, p: f64) -> f64 {
    assert!(p > 1.0, "lattice L^p norm requires p > 1, got {p}");
    let s: f64 = u.values.iter().map(|v| v.abs().powf(p)).sum();
    (u.grid.cell_volume() * s).powf(1.0 / p)
}

/// L^p lattice norm of a vector field, using the pointwise Euclidean
/// magnitude over components.
pub fn norm_lp_vec(f: &VectorField, p: f64) -> f64 {
    assert!(p > 1.0, "lattice L^p norm requires p > 1, got {p}");
    let mut s = 0.0;
    for idx in 0..f.grid.len() {
        s += f.magnitude_sq(idx).powf(0.5 * p);
    }
    (f.grid.cell_volume() * s).powf(1.0 / p)
}

/// Graph norm ||u||_2 + ||grad u||_p of the energy space.
pub fn norm_graph(u: &Field, p: f64) -> f64 {
    norm_l2(u) + norm_lp_vec(&grad(u), p)
}
