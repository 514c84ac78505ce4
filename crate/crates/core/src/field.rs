//! Scalar, vector, and symmetric 2-tensor fields with physical and spectral
//! representations.
//!
//! A [`Field`] stores one complex array per component, component-major.
//! Physical data is real-valued (imaginary parts are kept at exactly zero by
//! every constructor and product in this module), so spectral data is
//! Hermitian-symmetric up to FFT roundoff. Symmetric tensors store the
//! components `[xx, xy, yy]`; pointwise magnitudes weight the off-diagonal
//! component twice, matching the Frobenius norm.

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::Grid;

/// Errors from field construction and pointwise algebra.
#[derive(Debug, Error)]
pub enum FieldError {
    #[error("expected a {expected:?} field, got {got:?}")]
    RankMismatch { expected: Rank, got: Rank },
    #[error("expected the field in {expected:?} space, got {got:?}")]
    SpaceMismatch { expected: Space, got: Space },
    #[error("fields live on different grids ({0}x{1} vs {2}x{3})")]
    GridMismatch(usize, usize, usize, usize),
}

/// Tensor rank of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    Scalar,
    Vector,
    SymTensor,
}

impl Rank {
    /// Number of stored components.
    pub fn ncomp(self) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => 2,
            Rank::SymTensor => 3,
        }
    }

    /// Pointwise magnitude weights per component; `xy` counts twice.
    pub fn weights(self) -> &'static [f64] {
        match self {
            Rank::Scalar => &[1.0],
            Rank::Vector => &[1.0, 1.0],
            Rank::SymTensor => &[1.0, 2.0, 1.0],
        }
    }

    /// On-disk tag used by the snapshot format.
    pub fn tag(self) -> u8 {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => 2,
            Rank::SymTensor => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Rank> {
        match tag {
            1 => Some(Rank::Scalar),
            2 => Some(Rank::Vector),
            3 => Some(Rank::SymTensor),
            _ => None,
        }
    }
}

/// Which representation the data currently holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Physical,
    Spectral,
}

/// Component indices of a symmetric tensor field.
pub const SYM_XX: usize = 0;
pub const SYM_XY: usize = 1;
pub const SYM_YY: usize = 2;

/// A field on a [`Grid`], in either representation.
#[derive(Clone)]
pub struct Field {
    grid: Grid,
    rank: Rank,
    space: Space,
    data: Vec<Complex64>,
}

impl std::fmt::Debug for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Field")
            .field("grid", &self.grid)
            .field("rank", &self.rank)
            .field("space", &self.space)
            .finish()
    }
}

impl Field {
    /// All-zero field.
    pub fn zeros(grid: &Grid, rank: Rank, space: Space) -> Field {
        Field {
            grid: grid.clone(),
            rank,
            space,
            data: vec![Complex64::default(); rank.ncomp() * grid.len()],
        }
    }

    /// Constant real field (physical space).
    pub fn constant(grid: &Grid, rank: Rank, values: &[f64]) -> Field {
        assert_eq!(values.len(), rank.ncomp(), "one value per component");
        let mut f = Field::zeros(grid, rank, Space::Physical);
        for (c, &v) in values.iter().enumerate() {
            for cell in f.comp_mut(c) {
                *cell = Complex64::new(v, 0.0);
            }
        }
        f
    }

    /// Builds a physical scalar field by sampling `f(x1, x2)`.
    pub fn from_fn_scalar(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Field {
        let mut out = Field::zeros(grid, Rank::Scalar, Space::Physical);
        for iy in 0..grid.ny() {
            for ix in 0..grid.nx() {
                let [x1, x2] = grid.point(ix, iy);
                out.data[grid.index(ix, iy)] = Complex64::new(f(x1, x2), 0.0);
            }
        }
        out
    }

    /// Builds a physical field of any rank by sampling one closure per
    /// component.
    pub fn from_fn(grid: &Grid, rank: Rank, f: impl Fn(usize, f64, f64) -> f64) -> Field {
        let mut out = Field::zeros(grid, rank, Space::Physical);
        for c in 0..rank.ncomp() {
            for iy in 0..grid.ny() {
                for ix in 0..grid.nx() {
                    let [x1, x2] = grid.point(ix, iy);
                    let idx = grid.index(ix, iy);
                    out.comp_mut(c)[idx] = Complex64::new(f(c, x1, x2), 0.0);
                }
            }
        }
        out
    }

    /// Random real field with Gaussian mode amplitudes damped by
    /// `exp(-(|k|/k_cut)^2)`, zero mean, deterministic in `seed`.
    pub fn random_smooth(grid: &Grid, rank: Rank, seed: u64, k_cut: f64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Field::zeros(grid, rank, Space::Spectral);
        let (nx, ny) = (grid.nx(), grid.ny());
        for c in 0..rank.ncomp() {
            for iy in 0..ny {
                for ix in 0..nx {
                    let (k1, k2) = (grid.freq_x(ix), grid.freq_y(iy));
                    // Two draws per mode, consumed regardless, so the stream
                    // position (and hence every later mode) is seed-only.
                    let (z1, z2) = normal_pair(&mut rng);
                    if k1 == 0 && k2 == 0 {
                        continue;
                    }
                    let k2norm = (k1 * k1 + k2 * k2) as f64;
                    let env = (-k2norm / (k_cut * k_cut)).exp();
                    f.comp_mut(c)[grid.index(ix, iy)] = Complex64::new(z1, z2) * env;
                }
            }
        }
        f.hermitian_project();
        f
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn space(&self) -> Space {
        self.space
    }

    /// One component as a slice, `grid.len()` entries.
    pub fn comp(&self, c: usize) -> &[Complex64] {
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [Complex64] {
        let n = self.grid.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// All components, flat, component-major.
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Checks rank, returning `self` for chaining.
    pub fn expect_rank(&self, rank: Rank) -> Result<&Field, FieldError> {
        if self.rank != rank {
            return Err(FieldError::RankMismatch {
                expected: rank,
                got: self.rank,
            });
        }
        Ok(self)
    }

    pub fn expect_space(&self, space: Space) -> Result<&Field, FieldError> {
        if self.space != space {
            return Err(FieldError::SpaceMismatch {
                expected: space,
                got: self.space,
            });
        }
        Ok(self)
    }

    /// Converts to spectral representation in place (no-op if already there).
    pub fn make_spectral(&mut self) {
        if self.space == Space::Spectral {
            return;
        }
        let n = self.grid.len();
        for c in 0..self.rank.ncomp() {
            let grid = self.grid.clone();
            grid.forward(&mut self.data[c * n..(c + 1) * n]);
        }
        self.space = Space::Spectral;
    }

    /// Converts to physical representation in place; imaginary parts are
    /// zeroed (they carry only FFT roundoff for Hermitian data).
    pub fn make_physical(&mut self) {
        if self.space == Space::Physical {
            return;
        }
        let n = self.grid.len();
        for c in 0..self.rank.ncomp() {
            let grid = self.grid.clone();
            grid.inverse(&mut self.data[c * n..(c + 1) * n]);
        }
        for v in self.data.iter_mut() {
            v.im = 0.0;
        }
        self.space = Space::Physical;
    }

    /// Spectral clone.
    pub fn to_spectral(&self) -> Field {
        let mut f = self.clone();
        f.make_spectral();
        f
    }

    /// Physical clone.
    pub fn to_physical(&self) -> Field {
        let mut f = self.clone();
        f.make_physical();
        f
    }

    /// Fourier coefficient of component `c` at integer frequency `(k1, k2)`.
    pub fn mode(&self, c: usize, k1: i64, k2: i64) -> Complex64 {
        debug_assert_eq!(self.space, Space::Spectral);
        let ix = Grid::index_of_freq(k1, self.grid.nx());
        let iy = Grid::index_of_freq(k2, self.grid.ny());
        self.comp(c)[self.grid.index(ix, iy)]
    }

    pub fn set_mode(&mut self, c: usize, k1: i64, k2: i64, value: Complex64) {
        debug_assert_eq!(self.space, Space::Spectral);
        let ix = Grid::index_of_freq(k1, self.grid.nx());
        let iy = Grid::index_of_freq(k2, self.grid.ny());
        let idx = self.grid.index(ix, iy);
        self.comp_mut(c)[idx] = value;
    }

    /// Real value of component `c` at grid point `(ix, iy)` (physical space).
    pub fn value(&self, c: usize, ix: usize, iy: usize) -> f64 {
        debug_assert_eq!(self.space, Space::Physical);
        self.comp(c)[self.grid.index(ix, iy)].re
    }

    /// Largest deviation from Hermitian symmetry, `max |c(k) - conj(c(-k))|`.
    pub fn hermitian_defect(&self) -> f64 {
        debug_assert_eq!(self.space, Space::Spectral);
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let mut worst = 0.0f64;
        for c in 0..self.rank.ncomp() {
            let a = self.comp(c);
            for iy in 0..ny {
                let jy = (ny - iy) % ny;
                for ix in 0..nx {
                    let jx = (nx - ix) % nx;
                    let d = (a[self.grid.index(ix, iy)]
                        - a[self.grid.index(jx, jy)].conj())
                    .norm();
                    worst = worst.max(d);
                }
            }
        }
        worst
    }

    /// Projects onto the Hermitian-symmetric part,
    /// `c(k) <- (c(k) + conj(c(-k))) / 2`, making the physical field real.
    pub fn hermitian_project(&mut self) {
        debug_assert_eq!(self.space, Space::Spectral);
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        for c in 0..self.rank.ncomp() {
            let a = self.comp_mut(c);
            for iy in 0..ny {
                let jy = (ny - iy) % ny;
                for ix in 0..nx {
                    let jx = (nx - ix) % nx;
                    let i = iy * nx + ix;
                    let j = jy * nx + jx;
                    if i > j {
                        continue;
                    }
                    let avg = 0.5 * (a[i] + a[j].conj());
                    a[i] = avg;
                    a[j] = avg.conj();
                }
            }
        }
    }

    /// Pointwise squared magnitude at a physical index (Frobenius weights).
    #[inline]
    pub fn mag2_at(&self, idx: usize) -> f64 {
        let mut s = 0.0;
        for (c, w) in self.rank.weights().iter().enumerate() {
            let v = self.comp(c)[idx].re;
            s += w * v * v;
        }
        s
    }

    /// Sup norm of the pointwise magnitude. Converts a clone to physical
    /// space if needed.
    pub fn sup_norm(&self) -> f64 {
        if self.space == Space::Spectral {
            return self.to_physical().sup_norm();
        }
        (0..self.grid.len())
            .map(|i| self.mag2_at(i))
            .fold(0.0f64, f64::max)
            .sqrt()
    }

    /// `L^p` norm `( integral |f|^p dx )^(1/p)` over `[0, 2*pi)^2`; the
    /// constant field 1 has `L^p` norm `(2*pi)^(2/p)`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        assert!(p >= 1.0 && p.is_finite(), "p must be in [1, inf)");
        if self.space == Space::Spectral {
            return self.to_physical().lp_norm(p);
        }
        let mut acc = 0.0;
        for i in 0..self.grid.len() {
            acc += self.mag2_at(i).powf(p / 2.0);
        }
        (acc * self.grid.cell_area()).powf(1.0 / p)
    }

    /// `L^2` norm via the same quadrature as [`Field::lp_norm`].
    pub fn l2_norm(&self) -> f64 {
        self.lp_norm(2.0)
    }

    /// Sum of squared spectral magnitudes times `(2*pi)^2`, which equals the
    /// squared `L^2` norm by Parseval.
    pub fn l2_norm_spectral(&self) -> f64 {
        let f = self.to_spectral();
        let mut acc = 0.0;
        for c in 0..f.rank.ncomp() {
            let w = f.rank.weights()[c];
            for v in f.comp(c) {
                acc += w * v.norm_sqr();
            }
        }
        (acc * (2.0 * std::f64::consts::PI).powi(2)).sqrt()
    }

    /// `self <- self + a * other`.
    pub fn axpy(&mut self, a: f64, other: &Field) {
        self.check_compatible(other);
        for (x, y) in self.data.iter_mut().zip(other.data.iter()) {
            *x += a * y;
        }
    }

    /// `self <- a * self`.
    pub fn scale(&mut self, a: f64) {
        for x in self.data.iter_mut() {
            *x *= a;
        }
    }

    /// Largest pointwise magnitude of `self - other`.
    pub fn sup_distance(&self, other: &Field) -> f64 {
        let mut d = self.clone();
        d.axpy(-1.0, other);
        d.sup_norm()
    }

    /// Largest spectral coefficient difference across components.
    pub fn mode_distance(&self, other: &Field) -> f64 {
        self.check_compatible(other);
        debug_assert_eq!(self.space, Space::Spectral);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    fn check_compatible(&self, other: &Field) {
        assert_eq!(self.rank, other.rank, "rank mismatch");
        assert_eq!(self.space, other.space, "space mismatch");
        assert!(
            self.grid == *other.grid(),
            "grid mismatch: {:?} vs {:?}",
            self.grid,
            other.grid
        );
    }
}

impl std::ops::Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl std::ops::Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl std::ops::Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        let mut out = self.clone();
        out.scale(rhs);
        out
    }
}

/// Pointwise product of a physical scalar with a physical field of any rank.
/// Imaginary parts of the result are exactly zero.
pub fn scalar_mul(a: &Field, b: &Field) -> Result<Field, FieldError> {
    a.expect_rank(Rank::Scalar)?;
    a.expect_space(Space::Physical)?;
    b.expect_space(Space::Physical)?;
    check_grids(a, b)?;
    let mut out = Field::zeros(b.grid(), b.rank(), Space::Physical);
    let s = a.comp(0);
    for c in 0..b.rank().ncomp() {
        let src = b.comp(c);
        let dst = out.comp_mut(c);
        for i in 0..s.len() {
            dst[i] = Complex64::new(s[i].re * src[i].re, 0.0);
        }
    }
    Ok(out)
}

/// Symmetric outer product of two physical vector fields,
/// `(u (x) v + v (x) u) / 2`; for `u == v` this is exactly `v (x) v`.
pub fn sym_outer(u: &Field, v: &Field) -> Result<Field, FieldError> {
    u.expect_rank(Rank::Vector)?;
    v.expect_rank(Rank::Vector)?;
    u.expect_space(Space::Physical)?;
    v.expect_space(Space::Physical)?;
    check_grids(u, v)?;
    let mut out = Field::zeros(u.grid(), Rank::SymTensor, Space::Physical);
    let (u1, u2) = (u.comp(0), u.comp(1));
    let (v1, v2) = (v.comp(0), v.comp(1));
    let n = u1.len();
    for i in 0..n {
        let xx = u1[i].re * v1[i].re;
        let xy = 0.5 * (u1[i].re * v2[i].re + u2[i].re * v1[i].re);
        let yy = u2[i].re * v2[i].re;
        out.comp_mut(SYM_XX)[i] = Complex64::new(xx, 0.0);
        out.comp_mut(SYM_XY)[i] = Complex64::new(xy, 0.0);
        out.comp_mut(SYM_YY)[i] = Complex64::new(yy, 0.0);
    }
    Ok(out)
}

/// Pointwise dot product of two physical vector fields.
pub fn dot(u: &Field, v: &Field) -> Result<Field, FieldError> {
    u.expect_rank(Rank::Vector)?;
    v.expect_rank(Rank::Vector)?;
    u.expect_space(Space::Physical)?;
    v.expect_space(Space::Physical)?;
    check_grids(u, v)?;
    let mut out = Field::zeros(u.grid(), Rank::Scalar, Space::Physical);
    for i in 0..u.grid().len() {
        let s = u.comp(0)[i].re * v.comp(0)[i].re + u.comp(1)[i].re * v.comp(1)[i].re;
        out.comp_mut(0)[i] = Complex64::new(s, 0.0);
    }
    Ok(out)
}

fn check_grids(a: &Field, b: &Field) -> Result<(), FieldError> {
    if a.grid() == b.grid() {
        Ok(())
    } else {
        Err(FieldError::GridMismatch(
            a.grid().nx(),
            a.grid().ny(),
            b.grid().nx(),
            b.grid().ny(),
        ))
    }
}

/// One standard normal pair via Box-Muller on raw 53-bit uniforms; keeps the
/// stream layout independent of any distribution crate.
fn normal_pair(rng: &mut impl RngCore) -> (f64, f64) {
    let u1 = ((rng.next_u64() >> 11) as f64 + 1.0) / (9007199254740992.0 + 1.0);
    let u2 = (rng.next_u64() >> 11) as f64 / 9007199254740992.0;
    let r = (-2.0 * u1.ln()).sqrt();
    let th = 2.0 * std::f64::consts::PI * u2;
    (r * th.cos(), r * th.sin())
}
