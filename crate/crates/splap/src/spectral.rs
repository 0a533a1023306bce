//! Constant-coefficient resolvents on the periodic lattice via FFT.
//!
//! The forward/backward difference pair diagonalizes in the discrete
//! Fourier basis with the nonnegative symbol
//!
//! ```text
//! lambda(j) = sum_axes (2 - 2 cos(2 pi j_a / n)) / h^2
//! ```
//!
//! so (gamma I - c * div grad)^{-1} is a pointwise division in frequency
//! space. The per-step solver uses this as a preconditioner; at p = 2 it
//! is the exact inverse of the step operator.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::grid::{Field, Grid};

pub struct Spectral {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// 1D symbol (2 - 2 cos(2 pi j / n)) / h^2 per frequency index.
    symbol_1d: Vec<f64>,
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        let n = grid.points_per_axis();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let h2 = grid.spacing() * grid.spacing();
        let symbol_1d = (0..n)
            .map(|j| (2.0 - 2.0 * (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()) / h2)
            .collect();
        Spectral {
            grid,
            forward,
            inverse,
            symbol_1d,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Symbol of -div grad at the multi-frequency `freqs` (one per axis).
    pub fn laplacian_symbol(&self, freqs: &[usize]) -> f64 {
        freqs.iter().map(|&j| self.symbol_1d[j]).sum()
    }

    /// Solve (gamma I - c * div grad) v = rhs exactly. Requires gamma > 0
    /// and c >= 0 so the symbol gamma + c*lambda never vanishes.
    pub fn solve_helmholtz(&self, rhs: &Field, gamma: f64, c: f64) -> Field {
        assert!(gamma > 0.0 && c >= 0.0);
        let g = self.grid;
        let n = g.points_per_axis();
        let len = g.len();
        let mut data: Vec<Complex<f64>> =
            rhs.values().iter().map(|&v| Complex::new(v, 0.0)).collect();

        for axis in 0..g.dim() {
            self.transform_axis(&mut data, axis, true);
        }

        // pointwise division by the symbol
        for idx in 0..len {
            let mut rem = idx;
            let mut lam = 0.0;
            for _ in 0..g.dim() {
                lam += self.symbol_1d[rem % n];
                rem /= n;
            }
            data[idx] /= gamma + c * lam;
        }

        for axis in 0..g.dim() {
            self.transform_axis(&mut data, axis, false);
        }

        let scale = 1.0 / len as f64;
        Field::from_values(g, data.iter().map(|z| z.re * scale).collect())
    }

    /// FFT along one axis of the row-major n^d array.
    fn transform_axis(&self, data: &mut [Complex<f64>], axis: usize, forward: bool) {
        let g = self.grid;
        let n = g.points_per_axis();
        let stride = g.stride(axis);
        let fft = if forward {
            &self.forward
        } else {
            &self.inverse
        };
        let mut line = vec![Complex::new(0.0, 0.0); n];

        // iterate over all lines parallel to `axis`
        let len = g.len();
        let lines = len / n;
        for l in 0..lines {
            // decompose the line index into the non-axis coordinates
            let base = {
                let inner = l % stride; // coordinates below `axis`
                let outer = l / stride; // coordinates above `axis`
                outer * stride * n + inner
            };
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = data[base + k * stride];
            }
            fft.process(&mut line);
            for (k, &v) in line.iter().enumerate() {
                data[base + k * stride] = v;
            }
        }
    }
}
