//! Uniform grids on the 2-torus `[0, 2*pi)^2` with cached FFT plans.
//!
//! Physical samples live at `x_ij = (2*pi*i/nx, 2*pi*j/ny)`. Spectral data is
//! kept in FFT order: index `i` along an axis of length `n` carries the
//! integer frequency `i` for `i < n/2` and `i - n` otherwise. The forward
//! transform divides by `nx*ny`, so spectral values are Fourier coefficients
//! and the inverse transform is plain synthesis:
//! `f(x) = sum_k c_k exp(i k . x)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

/// Errors from grid construction.
#[derive(Debug, Error)]
pub enum GridError {
    /// Grid axes must be powers of two so every dyadic band is representable.
    #[error("grid size {0} is not a power of two >= 4")]
    BadSize(usize),
}

struct GridInner {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

/// Shared handle to an `nx` by `ny` grid. Cloning is cheap and clones refer
/// to the same cached FFT plans.
#[derive(Clone)]
pub struct Grid(Arc<GridInner>);

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("nx", &self.nx())
            .field("ny", &self.ny())
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.nx() == other.nx() && self.ny() == other.ny()
    }
}

impl Grid {
    /// Builds an `nx` by `ny` grid; both sizes must be powers of two >= 4.
    pub fn new(nx: usize, ny: usize) -> Result<Self, GridError> {
        for n in [nx, ny] {
            if n < 4 || !n.is_power_of_two() {
                return Err(GridError::BadSize(n));
            }
        }
        let mut planner = FftPlanner::new();
        let inner = GridInner {
            nx,
            ny,
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_y: planner.plan_fft_inverse(ny),
        };
        Ok(Grid(Arc::new(inner)))
    }

    /// Builds a square `n` by `n` grid.
    pub fn square(n: usize) -> Result<Self, GridError> {
        Self::new(n, n)
    }

    pub fn nx(&self) -> usize {
        self.0.nx
    }

    pub fn ny(&self) -> usize {
        self.0.ny
    }

    /// Number of grid points (and of spectral modes).
    pub fn len(&self) -> usize {
        self.0.nx * self.0.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Linear index of the sample or mode at `(ix, iy)`.
    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.0.nx + ix
    }

    /// Physical coordinates of the sample at `(ix, iy)`.
    #[inline]
    pub fn point(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            2.0 * PI * ix as f64 / self.0.nx as f64,
            2.0 * PI * iy as f64 / self.0.ny as f64,
        ]
    }

    /// Integer frequency carried by axis index `i` on an axis of length `n`.
    #[inline]
    pub fn freq_of(i: usize, n: usize) -> i64 {
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// Integer x-frequency of mode column `ix`.
    #[inline]
    pub fn freq_x(&self, ix: usize) -> i64 {
        Self::freq_of(ix, self.0.nx)
    }

    /// Integer y-frequency of mode row `iy`.
    #[inline]
    pub fn freq_y(&self, iy: usize) -> i64 {
        Self::freq_of(iy, self.0.ny)
    }

    /// Axis index carrying frequency `k` (must satisfy `-n/2 <= k < n/2`).
    #[inline]
    pub fn index_of_freq(k: i64, n: usize) -> usize {
        debug_assert!(k >= -(n as i64) / 2 && k < n as i64 / 2);
        k.rem_euclid(n as i64) as usize
    }

    /// Largest frequency magnitude representable along either axis.
    pub fn max_freq(&self) -> i64 {
        (self.0.nx.min(self.0.ny) / 2) as i64 - 1
    }

    /// Quadrature weight of one grid cell, `(2*pi)^2 / (nx*ny)`.
    pub fn cell_area(&self) -> f64 {
        (2.0 * PI) * (2.0 * PI) / self.len() as f64
    }

    /// In-place forward transform of one component: physical samples to
    /// Fourier coefficients (includes the `1/(nx*ny)` normalization).
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, true);
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// In-place inverse transform of one component: Fourier coefficients to
    /// physical samples (plain synthesis, no normalization).
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let g = &*self.0;
        assert_eq!(data.len(), g.nx * g.ny, "component length mismatch");
        let (fx, fy) = if forward {
            (&g.fwd_x, &g.fwd_y)
        } else {
            (&g.inv_x, &g.inv_y)
        };
        // Rows are contiguous; `process` handles all ny of them in one call.
        let mut scratch = vec![Complex64::default(); fx.get_inplace_scratch_len()];
        fx.process_with_scratch(data, &mut scratch);
        // Columns via transpose, batch transform, transpose back.
        let mut tr = vec![Complex64::default(); data.len()];
        transpose(data, &mut tr, g.nx, g.ny);
        scratch.resize(fy.get_inplace_scratch_len(), Complex64::default());
        fy.process_with_scratch(&mut tr, &mut scratch);
        transpose(&tr, data, g.ny, g.nx);
    }
}

/// Cache-blocked transpose: `src` is `cols` wide and `rows` tall, row-major;
/// `dst` becomes `rows` wide and `cols` tall.
fn transpose(src: &[Complex64], dst: &mut [Complex64], cols: usize, rows: usize) {
    const B: usize = 32;
    for jb in (0..rows).step_by(B) {
        for ib in (0..cols).step_by(B) {
            for j in jb..(jb + B).min(rows) {
                for i in ib..(ib + B).min(cols) {
                    dst[i * rows + j] = src[j * cols + i];
                }
            }
        }
    }
}
