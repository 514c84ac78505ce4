//! Level-by-level assembly of the inverse cascade.
//!
//! Each level holds per-row amplitude fields obtained from the pointwise
//! matrix decompositions, scalar potential profiles built from pipe-masked
//! shear waves, and the stresses those potentials induce. From the
//! potentials the module synthesizes exponentially damped principal fields,
//! closed-form Duhamel fields driven by the next level, inverse-divergence
//! primitives for both, and the forcing pair that closes the mild momentum
//! and tracer equations exactly at any truncation depth.
//!
//! Row order follows [`rows`]: four velocity rows, then twelve tracer rows.
//! Vector-valued potentials are `psi * perp(eta)` with a scalar profile
//! `psi`; the constant direction factor is carried analytically, so only
//! scalar fields are stored. Every phase uses the synthesis frequency
//! `n q / gcd(n, q)`, the smallest multiple of the row frequency that puts
//! the wave vector on the integer lattice; the same value scales the
//! prefactors and the exponential decay, keeping every stored wave an exact
//! heat eigenfunction.

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::field::{Field, Rank, Space, SYM_XX, SYM_XY, SYM_YY};
use crate::geometry::{
    epsilon_star, rows, tv_decompose, vel_amplitudes, Family, GeometryError, Sym2, ROW_COUNT,
};
use crate::grid::Grid;
use crate::ladder::{synthesis_frequency, FrequencyLadder, LadderMode};
use crate::ops::{self, OpsError};
use crate::pipes::{
    build_cutoff, chi_field, cutoff_field, level_geometry, LevelGeometry, PipeError, PipeSpec,
};

/// Number of tracer rows (the combined family).
const TRACER_COUNT: usize = ROW_COUNT - 4;

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("cascade construction needs a field-scale ladder")]
    AsymptoticLadder,
    #[error("truncation {requested} needs {needed} materialized ladder levels, got {available}")]
    TruncationTooDeep {
        requested: usize,
        needed: usize,
        available: usize,
    },
    #[error("row {j} of level {k} synthesizes at frequency {frequency}, above the grid limit {max_freq}")]
    GridTooCoarse {
        j: usize,
        k: usize,
        frequency: u64,
        max_freq: i64,
    },
    #[error("amplitude decomposition left its ball at level {k}, x = ({x:.4}, {y:.4}): {source}")]
    OutOfBall {
        k: usize,
        x: f64,
        y: f64,
        source: GeometryError,
    },
    #[error("forcing assembly needs one engine per truncated level: expected {expected}, got {got}")]
    EngineMismatch { expected: usize, got: usize },
    #[error("residual window needs dt > 0 and t - dt >= 0, got t = {t}, dt = {dt}")]
    BadWindow { t: f64, dt: f64 },
    #[error(transparent)]
    Ops(#[from] OpsError),
    #[error(transparent)]
    Pipes(#[from] PipeError),
}

// ---- pointwise field helpers ----

/// Adds `w * scalar` to the two components of a vector field; both fields
/// must share grid and representation.
fn accumulate_vector(dst: &mut Field, scalar: &Field, w: [f64; 2]) {
    debug_assert_eq!(dst.space(), scalar.space());
    let src = scalar.comp(0).to_vec();
    for (c, &wc) in w.iter().enumerate() {
        if wc == 0.0 {
            continue;
        }
        let d = dst.comp_mut(c);
        for (dv, sv) in d.iter_mut().zip(&src) {
            *dv += *sv * wc;
        }
    }
}

/// Multiplies every component of a physical field by a physical scalar.
fn pointwise_scale(dst: &mut Field, scalar: &Field) {
    debug_assert_eq!(dst.space(), Space::Physical);
    debug_assert_eq!(scalar.space(), Space::Physical);
    let src: Vec<f64> = scalar.comp(0).iter().map(|v| v.re).collect();
    for c in 0..dst.rank().ncomp() {
        let d = dst.comp_mut(c);
        for (dv, sv) in d.iter_mut().zip(&src) {
            *dv = Complex64::new(dv.re * sv, 0.0);
        }
    }
}

/// Symmetrized outer product `(a (x) b + b (x) a) / 2` of two physical
/// vector fields.
fn sym_outer(a: &Field, b: &Field) -> Field {
    debug_assert_eq!(a.space(), Space::Physical);
    debug_assert_eq!(b.space(), Space::Physical);
    let grid = a.grid().clone();
    let mut out = Field::zeros(&grid, Rank::SymTensor, Space::Physical);
    let n = grid.len();
    for i in 0..n {
        let (ax, ay) = (a.comp(0)[i].re, a.comp(1)[i].re);
        let (bx, by) = (b.comp(0)[i].re, b.comp(1)[i].re);
        out.comp_mut(SYM_XX)[i] = Complex64::new(ax * bx, 0.0);
        out.comp_mut(SYM_XY)[i] = Complex64::new(0.5 * (ax * by + ay * bx), 0.0);
        out.comp_mut(SYM_YY)[i] = Complex64::new(ay * by, 0.0);
    }
    out
}

/// Product of a physical vector field with a physical scalar field.
fn scalar_product(v: &Field, s: &Field) -> Field {
    let mut out = v.clone();
    pointwise_scale(&mut out, s);
    out
}

/// Copies one component out as a scalar field.
fn component_scalar(f: &Field, c: usize) -> Field {
    let mut out = Field::zeros(f.grid(), Rank::Scalar, f.space());
    out.comp_mut(0).copy_from_slice(f.comp(c));
    out
}

/// Largest dyadic `c = 2^-m`, `m >= 0`, with `c * bound <= eps / 2`.
fn dyadic_ball_constant(bound: f64, eps: f64) -> f64 {
    if bound <= 0.0 {
        return 1.0;
    }
    let target = 0.5 * eps / bound;
    if target >= 1.0 {
        return 1.0;
    }
    (-(-target.log2()).ceil()).exp2()
}

// ---- amplitudes ----

/// Per-row scalar amplitude fields for one level, in row order.
pub struct AmplitudeSet {
    pub k: usize,
    /// Dyadic ball constant used to produce this set; prescribed levels
    /// carry `None`.
    pub c_small: Option<f64>,
    fields: Vec<Field>,
}

impl AmplitudeSet {
    /// The prescribed start of the recursion: the first velocity row is 1,
    /// every other amplitude vanishes.
    pub fn level_zero(grid: &Grid) -> AmplitudeSet {
        let mut fields: Vec<Field> = (0..ROW_COUNT)
            .map(|_| Field::zeros(grid, Rank::Scalar, Space::Physical))
            .collect();
        fields[0] = Field::constant(grid, Rank::Scalar, &[1.0]);
        AmplitudeSet {
            k: 0,
            c_small: None,
            fields,
        }
    }

    /// Amplitude field of one row (physical space).
    pub fn row(&self, idx: usize) -> &Field {
        &self.fields[idx]
    }

    /// Largest amplitude sup over all rows.
    pub fn max_sup(&self) -> f64 {
        self.fields
            .iter()
            .map(Field::sup_norm)
            .fold(0.0f64, f64::max)
    }

    /// Reported derivative constants: `C_n = max_rows |grad^n a| / S^n`
    /// for `n = 0, 1, 2`, with `S` the last row frequency of the previous
    /// level (1 at level zero). The second derivative uses the symmetric
    /// gradient of the gradient, which equals the full Hessian.
    pub fn derivative_envelope(
        &self,
        ladder: &FrequencyLadder,
    ) -> Result<[f64; 3], CascadeError> {
        let scale = if self.k >= 1 {
            ladder.ln_n(ladder.params().rows, self.k - 1).exp()
        } else {
            1.0
        };
        let mut out = [0.0f64; 3];
        for f in &self.fields {
            let s = f.to_spectral();
            out[0] = out[0].max(f.sup_norm());
            let g = ops::grad(&s)?;
            out[1] = out[1].max(g.sup_norm() / scale);
            let h = ops::sym_grad(&g)?;
            out[2] = out[2].max(h.sup_norm() / (scale * scale));
        }
        Ok(out)
    }
}

/// Produces the next level's amplitudes from the current stresses and the
/// mask for the incoming level. The dyadic constant is the largest
/// `c = 2^-m` with `c * max(|S_u|, |S_c|, |S_b|^2) <= eps_* / 2`, which
/// keeps both decompositions strictly inside their ball at every point.
pub fn amplitudes_next(stresses: &Stresses, chi: &Field) -> Result<AmplitudeSet, CascadeError> {
    debug_assert_eq!(chi.space(), Space::Physical);
    let grid = stresses.s_u.grid().clone();
    let eps = epsilon_star();
    let bound = stresses
        .s_u
        .sup_norm()
        .max(stresses.s_c.sup_norm())
        .max(stresses.s_b.sup_norm().powi(2));
    let c = dyadic_ball_constant(bound, eps);
    let root_c = c.sqrt();
    let inv_root_c = 1.0 / root_c;
    let k_next = stresses.k + 1;

    let mut fields: Vec<Field> = (0..ROW_COUNT)
        .map(|_| Field::zeros(&grid, Rank::Scalar, Space::Physical))
        .collect();
    let (uxx, uxy, uyy) = (
        stresses.s_u.comp(SYM_XX),
        stresses.s_u.comp(SYM_XY),
        stresses.s_u.comp(SYM_YY),
    );
    let (cxx, cxy, cyy) = (
        stresses.s_c.comp(SYM_XX),
        stresses.s_c.comp(SYM_XY),
        stresses.s_c.comp(SYM_YY),
    );
    let (bx, by) = (stresses.s_b.comp(0), stresses.s_b.comp(1));
    let chi_vals = chi.comp(0);

    for iy in 0..grid.ny() {
        for ix in 0..grid.nx() {
            let i = grid.index(ix, iy);
            let fail = |source: GeometryError| {
                let [x, y] = grid.point(ix, iy);
                CascadeError::OutOfBall {
                    k: k_next,
                    x,
                    y,
                    source,
                }
            };
            let r_u = Sym2 {
                xx: 1.0 + c * uxx[i].re,
                xy: c * uxy[i].re,
                yy: 1.0 + c * uyy[i].re,
            };
            let a_u = vel_amplitudes(r_u).map_err(fail)?;
            let r_c = Sym2 {
                xx: 1.0 + c * cxx[i].re,
                xy: c * cxy[i].re,
                yy: 1.0 + c * cyy[i].re,
            };
            let g = [root_c * bx[i].re, root_c * by[i].re];
            let tv = tv_decompose(r_c, g).map_err(fail)?;
            let m = chi_vals[i].re * inv_root_c;
            for (j, aj) in a_u.iter().enumerate() {
                fields[j].comp_mut(0)[i] = Complex64::new(m * aj, 0.0);
            }
            for (s, gs) in tv.gamma.iter().enumerate() {
                fields[4 + s].comp_mut(0)[i] = Complex64::new(m * gs, 0.0);
            }
        }
    }
    Ok(AmplitudeSet {
        k: k_next,
        c_small: Some(c),
        fields,
    })
}

// ---- potentials ----

/// Scalar potential profiles for one level. `flow` holds the sixteen
/// profiles whose vector form `psi * perp(eta)` feeds the velocity (rows
/// 0..4 from the velocity amplitudes, rows 4..16 from the coupling
/// amplitudes); `tracer` holds the twelve scalar tracer profiles.
pub struct PotentialSet {
    pub k: usize,
    /// Mollification scale; applied only for `k >= 1`.
    pub ell: f64,
    pub n_phase: [u64; ROW_COUNT],
    flow: Vec<Field>,
    tracer: Vec<Field>,
}

impl PotentialSet {
    /// Scalar flow profile of one row (spectral).
    pub fn flow_potential(&self, idx: usize) -> &Field {
        &self.flow[idx]
    }

    /// Scalar tracer profile of one tracer row (spectral).
    pub fn tracer_potential(&self, s: usize) -> &Field {
        &self.tracer[s]
    }

    /// The vector form `psi * perp(eta)` of one flow profile.
    pub fn vector_potential(&self, idx: usize) -> Field {
        let row = rows()[idx];
        let mut out = Field::zeros(self.flow[idx].grid(), Rank::Vector, Space::Spectral);
        accumulate_vector(&mut out, &self.flow[idx], row.dir.perp().unit());
        out
    }

    /// Largest relative share of squared mass any row carries beyond
    /// `enlargement` times its own pipe radius, measured against the
    /// matching spec of `geometry`. Mollifier tails are the only leakage
    /// mechanism, so this stays many orders below any support tolerance
    /// when the pipe radius dominates the mollification scale.
    pub fn support_defect(&self, geometry: &LevelGeometry, enlargement: f64) -> f64 {
        let grid = self.flow[0].grid().clone();
        let mut worst = 0.0f64;
        let mut scan = |f: &Field, idx: usize| {
            if f.sup_norm() == 0.0 {
                return;
            }
            let spec = &geometry.specs[idx];
            let limit = enlargement * spec.radius();
            let p = f.to_physical();
            let vals = p.comp(0);
            let mut total = 0.0;
            let mut leaked = 0.0;
            for iy in 0..grid.ny() {
                for ix in 0..grid.nx() {
                    let v = vals[grid.index(ix, iy)].re;
                    let sq = v * v;
                    total += sq;
                    if spec.distance(grid.point(ix, iy)) > limit {
                        leaked += sq;
                    }
                }
            }
            if total > 0.0 {
                worst = worst.max(leaked / total);
            }
        };
        for (idx, f) in self.flow.iter().enumerate() {
            scan(f, idx);
        }
        for (s, f) in self.tracer.iter().enumerate() {
            scan(f, 4 + s);
        }
        worst
    }

    /// Reported derivative constants: `C_n = max_rows |grad^n psi| * N^(2-n)`
    /// for `n = 0..3`, normalizing each row by its own synthesis frequency.
    /// The third order takes the worst gradient over Hessian components, a
    /// fixed-constant proxy for the full derivative tensor norm.
    pub fn derivative_envelope(&self) -> Result<[f64; 4], CascadeError> {
        let mut out = [0.0f64; 4];
        let mut scan = |f: &Field, np: f64| -> Result<(), CascadeError> {
            if f.sup_norm() == 0.0 {
                return Ok(());
            }
            let s = f.to_spectral();
            out[0] = out[0].max(s.sup_norm() * np * np);
            let g = ops::grad(&s)?;
            out[1] = out[1].max(g.sup_norm() * np);
            let h = ops::sym_grad(&g)?;
            out[2] = out[2].max(h.sup_norm());
            for c in 0..3 {
                let third = ops::grad(&component_scalar(&h, c))?;
                out[3] = out[3].max(third.sup_norm() / np);
            }
            Ok(())
        };
        for (idx, f) in self.flow.iter().enumerate() {
            scan(f, self.n_phase[idx] as f64)?;
        }
        for (s, f) in self.tracer.iter().enumerate() {
            scan(f, self.n_phase[4 + s] as f64)?;
        }
        Ok(out)
    }
}

/// Builds one level's potentials: `psi = N^-2 mollify(a phi sin(N eta . x))`
/// per row, with the pipe cutoff `phi` and the mollifier active only for
/// `k >= 1`. Tracer profiles drop the amplitude factor; coupling rows reuse
/// the tracer amplitudes. `cutoffs`, when given, holds one physical cutoff
/// field per row.
pub fn build_potentials(
    ladder: &FrequencyLadder,
    grid: &Grid,
    k: usize,
    amplitudes: &AmplitudeSet,
    cutoffs: Option<&[Field]>,
) -> Result<PotentialSet, CascadeError> {
    debug_assert_eq!(amplitudes.k, k);
    let ell = ladder.ell(k);
    let max_freq = grid.max_freq();
    let mut n_phase = [0u64; ROW_COUNT];
    let mut flow = Vec::with_capacity(ROW_COUNT);
    let mut tracer = Vec::with_capacity(TRACER_COUNT);

    for (idx, row) in rows().iter().enumerate() {
        let j = idx + 1;
        let np = synthesis_frequency(ladder.n(j, k), row.dir.q as u64);
        if np > max_freq as u64 {
            return Err(CascadeError::GridTooCoarse {
                j,
                k,
                frequency: np,
                max_freq,
            });
        }
        n_phase[idx] = np;
        let wave_vec = [
            np as i64 * row.dir.p[0] / row.dir.q,
            np as i64 * row.dir.p[1] / row.dir.q,
        ];
        let wave = Field::from_fn_scalar(grid, |x1, x2| {
            (wave_vec[0] as f64 * x1 + wave_vec[1] as f64 * x2).sin()
        });
        let scale = 1.0 / (np as f64 * np as f64);

        let mut prof = wave.clone();
        pointwise_scale(&mut prof, amplitudes.row(idx));
        if let Some(cuts) = cutoffs {
            pointwise_scale(&mut prof, &cuts[idx]);
        }
        prof.scale(scale);
        prof.make_spectral();
        flow.push(if k >= 1 { ops::mollify(&prof, ell)? } else { prof });

        if matches!(row.family, Family::Tracer) {
            let mut tr = wave;
            if let Some(cuts) = cutoffs {
                pointwise_scale(&mut tr, &cuts[idx]);
            }
            tr.scale(scale);
            tr.make_spectral();
            tracer.push(if k >= 1 { ops::mollify(&tr, ell)? } else { tr });
        }
    }
    Ok(PotentialSet {
        k,
        ell,
        n_phase,
        flow,
        tracer,
    })
}

// ---- stresses ----

/// Stress inputs for the next amplitude step, stored in physical space.
pub struct Stresses {
    pub k: usize,
    /// `2 D sum_u N psi`, symmetric tensor.
    pub s_u: Field,
    /// `2 D sum_b N psi_c`, symmetric tensor.
    pub s_c: Field,
    /// `2 grad sum_b N psi_b`, vector.
    pub s_b: Field,
}

/// Computes the three stresses of one level from its potentials by exact
/// spectral differentiation.
pub fn compute_stresses(potentials: &PotentialSet) -> Result<Stresses, CascadeError> {
    let grid = potentials.flow[0].grid().clone();
    let mut sum_u = Field::zeros(&grid, Rank::Vector, Space::Spectral);
    let mut sum_c = Field::zeros(&grid, Rank::Vector, Space::Spectral);
    let mut sum_b = Field::zeros(&grid, Rank::Scalar, Space::Spectral);
    for (idx, row) in rows().iter().enumerate() {
        let np = potentials.n_phase[idx] as f64;
        let perp = row.dir.perp().unit();
        let w = [np * perp[0], np * perp[1]];
        match row.family {
            Family::Velocity => accumulate_vector(&mut sum_u, &potentials.flow[idx], w),
            Family::Tracer => {
                accumulate_vector(&mut sum_c, &potentials.flow[idx], w);
                sum_b.axpy(np, &potentials.tracer[idx - 4]);
            }
        }
    }
    let mut s_u = ops::op_d(&sum_u)?;
    s_u.scale(2.0);
    s_u.make_physical();
    let mut s_c = ops::op_d(&sum_c)?;
    s_c.scale(2.0);
    s_c.make_physical();
    let mut s_b = ops::grad(&sum_b)?;
    s_b.scale(2.0);
    s_b.make_physical();
    Ok(Stresses {
        k: potentials.k,
        s_u,
        s_c,
        s_b,
    })
}

// ---- levels and principal fields ----

/// One built cascade level: amplitudes, potentials, and the stresses the
/// potentials induce (the input for the next level's amplitudes).
pub struct CascadeLevel {
    pub k: usize,
    pub amplitudes: AmplitudeSet,
    pub potentials: PotentialSet,
    pub stresses: Stresses,
}

/// A velocity/tracer pair with inverse-divergence primitives, all spectral:
/// `div(velocity_primitive) = velocity` and `div(tracer_primitive) = tracer`
/// hold identically by construction.
pub struct FieldQuartet {
    pub t: f64,
    pub velocity: Field,
    pub tracer: Field,
    pub velocity_primitive: Field,
    pub tracer_primitive: Field,
}

impl FieldQuartet {
    fn zeros(grid: &Grid, t: f64) -> FieldQuartet {
        FieldQuartet {
            t,
            velocity: Field::zeros(grid, Rank::Vector, Space::Spectral),
            tracer: Field::zeros(grid, Rank::Scalar, Space::Spectral),
            velocity_primitive: Field::zeros(grid, Rank::SymTensor, Space::Spectral),
            tracer_primitive: Field::zeros(grid, Rank::Vector, Space::Spectral),
        }
    }

    fn accumulate(&mut self, other: &FieldQuartet) {
        self.velocity.axpy(1.0, &other.velocity);
        self.tracer.axpy(1.0, &other.tracer);
        self.velocity_primitive.axpy(1.0, &other.velocity_primitive);
        self.tracer_primitive.axpy(1.0, &other.tracer_primitive);
    }
}

/// Accumulates the damped potential sums of one level at time `t`: the
/// vector sum over all flow rows and the scalar sum over tracer rows, each
/// row weighted by `-N exp(-N^2 t)`.
fn weighted_potentials(level: &CascadeLevel, t: f64) -> (Field, Field) {
    let grid = level.potentials.flow[0].grid().clone();
    let mut psi = Field::zeros(&grid, Rank::Vector, Space::Spectral);
    let mut psi_b = Field::zeros(&grid, Rank::Scalar, Space::Spectral);
    for (idx, row) in rows().iter().enumerate() {
        let np = level.potentials.n_phase[idx] as f64;
        let w = -np * (-np * np * t).exp();
        let perp = row.dir.perp().unit();
        accumulate_vector(&mut psi, &level.potentials.flow[idx], [w * perp[0], w * perp[1]]);
        if matches!(row.family, Family::Tracer) {
            psi_b.axpy(w, &level.potentials.tracer[idx - 4]);
        }
    }
    (psi, psi_b)
}

/// Evaluates one level's principal quartet at time `t`. The velocity is the
/// Laplacian of the Leray-projected potential sum and its primitive applies
/// the modified stress operator to the same projection, so the divergence
/// identities hold exactly; the tracer pair uses the plain Laplacian and
/// gradient of the scalar sum.
pub fn principal_quartet(level: &CascadeLevel, t: f64) -> Result<FieldQuartet, CascadeError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(CascadeError::Ops(OpsError::BadTime(t)));
    }
    let (psi, psi_b) = weighted_potentials(level, t);
    let proj = ops::leray(&psi)?;
    Ok(FieldQuartet {
        t,
        velocity: ops::laplacian(&proj)?,
        tracer: ops::laplacian(&psi_b)?,
        velocity_primitive: ops::op_d_tilde(&proj)?,
        tracer_primitive: ops::grad(&psi_b)?,
    })
}

/// Relative size of the gradient part removed by the projection inside the
/// principal velocity, `|lap (1 - P) psi| / |lap psi|`. Zero for pure
/// shears; small but nonzero once amplitudes vary along the wave.
pub fn leray_defect(level: &CascadeLevel, t: f64) -> Result<f64, CascadeError> {
    let (psi, _) = weighted_potentials(level, t);
    let proj = ops::leray(&psi)?;
    let diff = &psi - &proj;
    let num = ops::laplacian(&diff)?.sup_norm();
    let den = ops::laplacian(&psi)?.sup_norm();
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

// ---- Duhamel engine ----

struct RowCache {
    x: Vec<f64>,
    y: Vec<f64>,
}

struct RateGroup {
    rate: u64,
    /// `(i, i2, weight)` over flow-row pairs, weight 2 off the diagonal.
    tensor_pairs: Vec<(usize, usize, f64)>,
    /// `(flow row, tracer row)` ordered pairs.
    vector_pairs: Vec<(usize, usize)>,
}

/// Closed-form evaluator for one level's Duhamel quartet. Built from the
/// next level's damped shears, it caches their physical components, groups
/// direction pairs by the integer decay rate `N^2 + N'^2` of their product,
/// and per requested time applies the exact mode integral
/// `int_0^t exp(-|xi|^2 (t-s)) exp(-rate s) ds` to each group before the
/// final multiplier pass. Memory stays linear in rows plus requested times.
pub struct DuhamelEngine {
    level: usize,
    grid: Grid,
    vel: Vec<Option<RowCache>>,
    tracer: Vec<Option<Vec<f64>>>,
    groups: Vec<RateGroup>,
}

impl DuhamelEngine {
    /// Caches the damped shears of `next` (level `k + 1`) for producing
    /// level-`k` fields. Rows with vanishing potentials are dropped from
    /// the pair lists.
    ///
    /// Panics if `next` is level zero, which drives no Duhamel level.
    pub fn new(next: &CascadeLevel) -> Result<DuhamelEngine, CascadeError> {
        assert!(next.k >= 1, "level zero drives no Duhamel level");
        let grid = next.potentials.flow[0].grid().clone();
        let mut vel: Vec<Option<RowCache>> = Vec::with_capacity(ROW_COUNT);
        let mut tracer: Vec<Option<Vec<f64>>> = Vec::with_capacity(TRACER_COUNT);
        for (idx, row) in rows().iter().enumerate() {
            let np = next.potentials.n_phase[idx] as f64;
            if next.potentials.flow[idx].sup_norm() == 0.0 {
                vel.push(None);
            } else {
                let mut psi = Field::zeros(&grid, Rank::Vector, Space::Spectral);
                accumulate_vector(&mut psi, &next.potentials.flow[idx], row.dir.perp().unit());
                let mut g = ops::laplacian(&ops::leray(&psi)?)?;
                g.scale(-np);
                g.make_physical();
                vel.push(Some(RowCache {
                    x: g.comp(0).iter().map(|v| v.re).collect(),
                    y: g.comp(1).iter().map(|v| v.re).collect(),
                }));
            }
            if matches!(row.family, Family::Tracer) {
                let s = idx - 4;
                if next.potentials.tracer[s].sup_norm() == 0.0 {
                    tracer.push(None);
                } else {
                    let mut z = ops::laplacian(&next.potentials.tracer[s])?;
                    z.scale(-np);
                    z.make_physical();
                    tracer.push(Some(z.comp(0).iter().map(|v| v.re).collect()));
                }
            }
        }

        let np = &next.potentials.n_phase;
        let mut map: BTreeMap<u64, RateGroup> = BTreeMap::new();
        let fresh = |rate: u64| RateGroup {
            rate,
            tensor_pairs: Vec::new(),
            vector_pairs: Vec::new(),
        };
        for i in 0..ROW_COUNT {
            if vel[i].is_none() {
                continue;
            }
            for i2 in i..ROW_COUNT {
                if vel[i2].is_none() {
                    continue;
                }
                let rate = np[i] * np[i] + np[i2] * np[i2];
                let weight = if i == i2 { 1.0 } else { 2.0 };
                map.entry(rate)
                    .or_insert_with(|| fresh(rate))
                    .tensor_pairs
                    .push((i, i2, weight));
            }
            for s in 0..TRACER_COUNT {
                if tracer[s].is_none() {
                    continue;
                }
                let nps = np[4 + s];
                let rate = np[i] * np[i] + nps * nps;
                map.entry(rate)
                    .or_insert_with(|| fresh(rate))
                    .vector_pairs
                    .push((i, s));
            }
        }
        Ok(DuhamelEngine {
            level: next.k - 1,
            grid,
            vel,
            tracer,
            groups: map.into_values().collect(),
        })
    }

    /// The level this engine produces.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Evaluates the quartet at one time.
    pub fn eval(&self, t: f64) -> Result<FieldQuartet, CascadeError> {
        Ok(self.eval_many(&[t])?.pop().expect("one quartet per time"))
    }

    /// Evaluates the quartet at several times in one sweep over the source
    /// groups, sharing the per-group products and transforms.
    pub fn eval_many(&self, times: &[f64]) -> Result<Vec<FieldQuartet>, CascadeError> {
        for &t in times {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(CascadeError::Ops(OpsError::BadTime(t)));
            }
        }
        let g = &self.grid;
        let len = g.len();
        let mut xi2 = vec![0.0f64; len];
        for iy in 0..g.ny() {
            let k2 = g.freq_y(iy) as f64;
            for ix in 0..g.nx() {
                let k1 = g.freq_x(ix) as f64;
                xi2[g.index(ix, iy)] = k1 * k1 + k2 * k2;
            }
        }

        let mut st: Vec<Field> = times
            .iter()
            .map(|_| Field::zeros(g, Rank::SymTensor, Space::Spectral))
            .collect();
        let mut sv: Vec<Field> = times
            .iter()
            .map(|_| Field::zeros(g, Rank::Vector, Space::Spectral))
            .collect();
        let mut txx = vec![0.0f64; len];
        let mut txy = vec![0.0f64; len];
        let mut tyy = vec![0.0f64; len];
        let mut vx = vec![0.0f64; len];
        let mut vy = vec![0.0f64; len];
        let mut wbuf = vec![0.0f64; len];

        for grp in &self.groups {
            let has_tensor = !grp.tensor_pairs.is_empty();
            let has_vector = !grp.vector_pairs.is_empty();
            if has_tensor {
                txx.fill(0.0);
                txy.fill(0.0);
                tyy.fill(0.0);
                for &(i, i2, w) in &grp.tensor_pairs {
                    let a = self.vel[i].as_ref().expect("paired rows are cached");
                    let b = self.vel[i2].as_ref().expect("paired rows are cached");
                    for idx in 0..len {
                        txx[idx] += w * a.x[idx] * b.x[idx];
                        txy[idx] += 0.5 * w * (a.x[idx] * b.y[idx] + a.y[idx] * b.x[idx]);
                        tyy[idx] += w * a.y[idx] * b.y[idx];
                    }
                }
            }
            if has_vector {
                vx.fill(0.0);
                vy.fill(0.0);
                for &(i, s) in &grp.vector_pairs {
                    let a = self.vel[i].as_ref().expect("paired rows are cached");
                    let z = self.tracer[s].as_ref().expect("paired rows are cached");
                    for idx in 0..len {
                        vx[idx] += a.x[idx] * z[idx];
                        vy[idx] += a.y[idx] * z[idx];
                    }
                }
            }
            let tensor_hat = if has_tensor {
                let mut f = Field::zeros(g, Rank::SymTensor, Space::Physical);
                fill_component(&mut f, SYM_XX, &txx);
                fill_component(&mut f, SYM_XY, &txy);
                fill_component(&mut f, SYM_YY, &tyy);
                f.make_spectral();
                Some(f)
            } else {
                None
            };
            let vector_hat = if has_vector {
                let mut f = Field::zeros(g, Rank::Vector, Space::Physical);
                fill_component(&mut f, 0, &vx);
                fill_component(&mut f, 1, &vy);
                f.make_spectral();
                Some(f)
            } else {
                None
            };

            let lam = grp.rate as f64;
            for (ti, &t) in times.iter().enumerate() {
                for idx in 0..len {
                    wbuf[idx] = ops::duhamel_mode_integral(xi2[idx], lam, t);
                }
                if let Some(th) = &tensor_hat {
                    for c in 0..3 {
                        let src = th.comp(c);
                        let dst = st[ti].comp_mut(c);
                        for idx in 0..len {
                            dst[idx] += src[idx] * wbuf[idx];
                        }
                    }
                }
                if let Some(vh) = &vector_hat {
                    for c in 0..2 {
                        let src = vh.comp(c);
                        let dst = sv[ti].comp_mut(c);
                        for idx in 0..len {
                            dst[idx] += src[idx] * wbuf[idx];
                        }
                    }
                }
            }
        }

        let mut out = Vec::with_capacity(times.len());
        for (ti, &t) in times.iter().enumerate() {
            let w = ops::leray(&ops::div(&st[ti])?)?;
            let mut velocity = w.clone();
            velocity.scale(-1.0);
            let mut velocity_primitive = ops::op_r(&w)?;
            velocity_primitive.scale(-1.0);
            let dv = ops::div(&sv[ti])?;
            let mut tracer = dv.clone();
            tracer.scale(-1.0);
            let mut tracer_primitive = ops::op_r1(&dv)?;
            tracer_primitive.scale(-1.0);
            out.push(FieldQuartet {
                t,
                velocity,
                tracer,
                velocity_primitive,
                tracer_primitive,
            });
        }
        Ok(out)
    }
}

fn fill_component(f: &mut Field, c: usize, values: &[f64]) {
    let dst = f.comp_mut(c);
    for (d, &v) in dst.iter_mut().zip(values) {
        *d = Complex64::new(v, 0.0);
    }
}

// ---- the cascade ----

/// A fully built cascade: the frequency ladder, the pipe geometry of every
/// masked level, and the per-level amplitude/potential/stress data up to
/// the truncation depth.
pub struct Cascade {
    ladder: FrequencyLadder,
    grid: Grid,
    delta0: f64,
    geoms: Vec<LevelGeometry>,
    levels: Vec<CascadeLevel>,
}

impl Cascade {
    /// Builds levels `0..=truncation` in recursion order: stresses of level
    /// `k` produce the amplitudes of level `k + 1`, which combine with that
    /// level's pipe cutoffs and mollifier into its potentials. Needs
    /// `truncation + 2` materialized ladder levels (the mollification scale
    /// of level `k` reads frequencies of level `k + 1`).
    pub fn build(
        ladder: FrequencyLadder,
        grid: &Grid,
        delta0: f64,
        truncation: usize,
    ) -> Result<Cascade, CascadeError> {
        if ladder.mode() != LadderMode::FieldScale {
            return Err(CascadeError::AsymptoticLadder);
        }
        let available = ladder.params().levels;
        if truncation + 2 > available {
            return Err(CascadeError::TruncationTooDeep {
                requested: truncation,
                needed: truncation + 2,
                available,
            });
        }
        for k in 0..=truncation {
            for (idx, row) in rows().iter().enumerate() {
                let np = synthesis_frequency(ladder.n(idx + 1, k), row.dir.q as u64);
                if np > grid.max_freq() as u64 {
                    return Err(CascadeError::GridTooCoarse {
                        j: idx + 1,
                        k,
                        frequency: np,
                        max_freq: grid.max_freq(),
                    });
                }
            }
        }
        let geoms: Vec<LevelGeometry> = (1..=truncation)
            .map(|k| level_geometry(&ladder, k, delta0))
            .collect();

        let mut levels = Vec::with_capacity(truncation + 1);
        let amp0 = AmplitudeSet::level_zero(grid);
        let pot0 = build_potentials(&ladder, grid, 0, &amp0, None)?;
        let str0 = compute_stresses(&pot0)?;
        levels.push(CascadeLevel {
            k: 0,
            amplitudes: amp0,
            potentials: pot0,
            stresses: str0,
        });
        for k in 1..=truncation {
            let chi = chi_field(grid, &geoms[..k - 1]);
            let amps = amplitudes_next(&levels[k - 1].stresses, &chi)?;
            let mut cutoffs = Vec::with_capacity(ROW_COUNT);
            for (idx, row) in rows().iter().enumerate() {
                let spec = PipeSpec::new(row.dir, ladder.m(idx + 1, k), delta0);
                cutoffs.push(cutoff_field(grid, &build_cutoff(spec)?)?);
            }
            let pots = build_potentials(&ladder, grid, k, &amps, Some(&cutoffs))?;
            let strs = compute_stresses(&pots)?;
            levels.push(CascadeLevel {
                k,
                amplitudes: amps,
                potentials: pots,
                stresses: strs,
            });
        }
        Ok(Cascade {
            ladder,
            grid: grid.clone(),
            delta0,
            geoms,
            levels,
        })
    }

    pub fn ladder(&self) -> &FrequencyLadder {
        &self.ladder
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    /// Deepest built level.
    pub fn truncation(&self) -> usize {
        self.levels.len() - 1
    }

    /// Pipe geometry of masked levels; entry `i` describes level `i + 1`.
    pub fn geometries(&self) -> &[LevelGeometry] {
        &self.geoms
    }

    /// One built level. Panics if `k` exceeds the truncation depth.
    pub fn level(&self, k: usize) -> &CascadeLevel {
        &self.levels[k]
    }

    /// Principal quartet of level `k` at time `t`.
    pub fn principal(&self, k: usize, t: f64) -> Result<FieldQuartet, CascadeError> {
        principal_quartet(&self.levels[k], t)
    }

    /// Engine producing the level-`k` Duhamel quartet from level `k + 1`.
    pub fn engine(&self, k: usize) -> Result<DuhamelEngine, CascadeError> {
        if k + 1 > self.truncation() {
            return Err(CascadeError::EngineMismatch {
                expected: self.truncation(),
                got: k + 1,
            });
        }
        DuhamelEngine::new(&self.levels[k + 1])
    }

    /// Engines for every produced level `0..truncation`.
    pub fn engines(&self) -> Result<Vec<DuhamelEngine>, CascadeError> {
        (0..self.truncation()).map(|k| self.engine(k)).collect()
    }

    /// Largest synthesis frequency over all built levels, the resolution
    /// driver for grid choice.
    pub fn max_frequency(&self) -> u64 {
        self.levels
            .iter()
            .flat_map(|lvl| lvl.potentials.n_phase.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

/// Sums the Duhamel quartets of all produced levels at each time. An empty
/// engine slice (truncation zero) gives zero fields.
pub fn full_quartets(
    cascade: &Cascade,
    engines: &[DuhamelEngine],
    times: &[f64],
) -> Result<Vec<FieldQuartet>, CascadeError> {
    if engines.is_empty() {
        return Ok(times
            .iter()
            .map(|&t| FieldQuartet::zeros(cascade.grid(), t))
            .collect());
    }
    let mut acc = engines[0].eval_many(times)?;
    for engine in &engines[1..] {
        let next = engine.eval_many(times)?;
        for (a, b) in acc.iter_mut().zip(&next) {
            a.accumulate(b);
        }
    }
    Ok(acc)
}

// ---- forcing and residuals ----

/// The assembled forcing pair at one time, with its constituents: one
/// difference part per produced level, the telescoping boundary terms, and
/// the cross-level products. All fields are spectral.
pub struct ForcingPair {
    pub t: f64,
    pub f_u: Field,
    pub f_b: Field,
    pub parts_u: Vec<Field>,
    pub parts_b: Vec<Field>,
    pub boundary_u: Field,
    pub boundary_b: Field,
    pub cross_u: Field,
    pub cross_b: Field,
}

/// Assembles the forcing pair at time `t`:
///
/// - parts: `v_k (x) v_k - vbar_k (x) vbar_k` and `v_k h_k - vbar_k hbar_k`
///   for each produced level `k`;
/// - boundary: `vbar_0 (x) vbar_0 - vbar_K (x) vbar_K` and the matching
///   tracer products, which close the telescoping sum at truncation `K`;
/// - cross: `sum_{k1 != k2} v_k1 (x) v_k2` and `sum_{k1 != k2} v_k1 h_k2`.
///
/// With these terms the mild momentum and tracer equations hold exactly for
/// the truncated sums, up to roundoff.
pub fn assemble_forcing(
    cascade: &Cascade,
    engines: &[DuhamelEngine],
    t: f64,
) -> Result<ForcingPair, CascadeError> {
    let depth = cascade.truncation();
    if engines.len() != depth {
        return Err(CascadeError::EngineMismatch {
            expected: depth,
            got: engines.len(),
        });
    }
    let mut v_phys = Vec::with_capacity(depth);
    let mut h_phys = Vec::with_capacity(depth);
    for engine in engines {
        let q = engine.eval(t)?;
        v_phys.push(q.velocity.to_physical());
        h_phys.push(q.tracer.to_physical());
    }
    let mut vbar_phys = Vec::with_capacity(depth + 1);
    let mut hbar_phys = Vec::with_capacity(depth + 1);
    for k in 0..=depth {
        let q = cascade.principal(k, t)?;
        vbar_phys.push(q.velocity.to_physical());
        hbar_phys.push(q.tracer.to_physical());
    }

    let grid = cascade.grid();
    let mut parts_u = Vec::with_capacity(depth);
    let mut parts_b = Vec::with_capacity(depth);
    for k in 0..depth {
        let mut pu = sym_outer(&v_phys[k], &v_phys[k]);
        pu.axpy(-1.0, &sym_outer(&vbar_phys[k], &vbar_phys[k]));
        pu.make_spectral();
        parts_u.push(pu);
        let mut pb = scalar_product(&v_phys[k], &h_phys[k]);
        pb.axpy(-1.0, &scalar_product(&vbar_phys[k], &hbar_phys[k]));
        pb.make_spectral();
        parts_b.push(pb);
    }
    let mut boundary_u = sym_outer(&vbar_phys[0], &vbar_phys[0]);
    boundary_u.axpy(-1.0, &sym_outer(&vbar_phys[depth], &vbar_phys[depth]));
    boundary_u.make_spectral();
    let mut boundary_b = scalar_product(&vbar_phys[0], &hbar_phys[0]);
    boundary_b.axpy(-1.0, &scalar_product(&vbar_phys[depth], &hbar_phys[depth]));
    boundary_b.make_spectral();

    let mut cross_u = Field::zeros(grid, Rank::SymTensor, Space::Spectral);
    let mut cross_b = Field::zeros(grid, Rank::Vector, Space::Spectral);
    for k1 in 0..depth {
        for k2 in k1 + 1..depth {
            let mut mu = sym_outer(&v_phys[k1], &v_phys[k2]);
            mu.scale(2.0);
            mu.make_spectral();
            cross_u.axpy(1.0, &mu);
            let mut mb = scalar_product(&v_phys[k1], &h_phys[k2]);
            mb.axpy(1.0, &scalar_product(&v_phys[k2], &h_phys[k1]));
            mb.make_spectral();
            cross_b.axpy(1.0, &mb);
        }
    }

    let mut f_u = boundary_u.clone();
    for p in &parts_u {
        f_u.axpy(1.0, p);
    }
    f_u.axpy(1.0, &cross_u);
    let mut f_b = boundary_b.clone();
    for p in &parts_b {
        f_b.axpy(1.0, p);
    }
    f_b.axpy(1.0, &cross_b);

    Ok(ForcingPair {
        t,
        f_u,
        f_b,
        parts_u,
        parts_b,
        boundary_u,
        boundary_b,
        cross_u,
        cross_b,
    })
}

/// Sup norms of the mild-equation residuals at one central-difference step.
#[derive(Debug, Clone, Copy)]
pub struct ResidualReport {
    pub t: f64,
    pub dt: f64,
    pub velocity_residual: f64,
    pub tracer_residual: f64,
    /// `max(|dv/dt|, |lap v|)`, the scale the residual is judged against.
    pub velocity_scale: f64,
    pub tracer_scale: f64,
}

/// Measures both mild equations at time `t` with a central time difference
/// of step `dt`: the momentum residual
/// `dv/dt - lap v + P div(v (x) v) - P div f_u` and the tracer residual
/// `dh/dt - lap h + div(v h) - div f_b`. Spatial terms are spectral and
/// exact, so the result isolates the `dt^2` differencing error.
pub fn equation_residual(
    cascade: &Cascade,
    engines: &[DuhamelEngine],
    t: f64,
    dt: f64,
) -> Result<ResidualReport, CascadeError> {
    if !(dt > 0.0 && t - dt >= 0.0) || !t.is_finite() {
        return Err(CascadeError::BadWindow { t, dt });
    }
    let q = full_quartets(cascade, engines, &[t - dt, t, t + dt])?;
    let mut dv = &q[2].velocity - &q[0].velocity;
    dv.scale(0.5 / dt);
    let lap_v = ops::laplacian(&q[1].velocity)?;
    let v_phys = q[1].velocity.to_physical();
    let h_phys = q[1].tracer.to_physical();
    let nl_u = ops::leray(&ops::div(&sym_outer(&v_phys, &v_phys).to_spectral())?)?;
    let forcing = assemble_forcing(cascade, engines, t)?;
    let rhs_u = ops::leray(&ops::div(&forcing.f_u)?)?;
    let velocity_scale = dv.sup_norm().max(lap_v.sup_norm());
    let mut res_u = dv;
    res_u.axpy(-1.0, &lap_v);
    res_u.axpy(1.0, &nl_u);
    res_u.axpy(-1.0, &rhs_u);

    let mut dh = &q[2].tracer - &q[0].tracer;
    dh.scale(0.5 / dt);
    let lap_h = ops::laplacian(&q[1].tracer)?;
    let nl_b = ops::div(&scalar_product(&v_phys, &h_phys).to_spectral())?;
    let rhs_b = ops::div(&forcing.f_b)?;
    let tracer_scale = dh.sup_norm().max(lap_h.sup_norm());
    let mut res_b = dh;
    res_b.axpy(-1.0, &lap_h);
    res_b.axpy(1.0, &nl_b);
    res_b.axpy(-1.0, &rhs_b);

    Ok(ResidualReport {
        t,
        dt,
        velocity_residual: res_u.sup_norm(),
        tracer_residual: res_b.sup_norm(),
        velocity_scale,
        tracer_scale,
    })
}

/// Residuals at steps `dt` and `dt / 2` with the step-halving ratio and the
/// second-order extrapolation `(4 r_fine - r_coarse) / 3`, which cancels
/// the leading `dt^2` term and exposes whatever error is left.
#[derive(Debug, Clone, Copy)]
pub struct RichardsonReport {
    pub coarse: ResidualReport,
    pub fine: ResidualReport,
    pub velocity_ratio: f64,
    pub tracer_ratio: f64,
    pub velocity_extrapolated: f64,
    pub tracer_extrapolated: f64,
}

pub fn richardson_residual(
    cascade: &Cascade,
    engines: &[DuhamelEngine],
    t: f64,
    dt: f64,
) -> Result<RichardsonReport, CascadeError> {
    let coarse = equation_residual(cascade, engines, t, dt)?;
    let fine = equation_residual(cascade, engines, t, 0.5 * dt)?;
    Ok(RichardsonReport {
        coarse,
        fine,
        velocity_ratio: coarse.velocity_residual / fine.velocity_residual,
        tracer_ratio: coarse.tracer_residual / fine.tracer_residual,
        velocity_extrapolated: (4.0 * fine.velocity_residual - coarse.velocity_residual).abs()
            / 3.0,
        tracer_extrapolated: (4.0 * fine.tracer_residual - coarse.tracer_residual).abs() / 3.0,
    })
}

// ---- scale separation ----

/// Interaction weight of two damped shears over `[0, t]` in log arguments:
/// `N N' (1 - exp(-(N^2 + N'^2) t)) / (N^2 + N'^2)` evaluated stably from
/// `ln N`, `ln N'`, and `ln t`. Saturation (`t` large against both decay
/// times) gives `N N' / (N^2 + N'^2)`; the diagonal saturates at `1/2`.
pub fn pair_interaction(ln_n: f64, ln_np: f64, ln_t: f64) -> f64 {
    let gap = (ln_n - ln_np).abs();
    let tail = (-2.0 * gap).exp().ln_1p();
    let prefactor = (-gap - tail).exp();
    let ln_rate = 2.0 * ln_n.max(ln_np) + tail;
    let exponent = (ln_rate + ln_t).exp();
    prefactor * (-(-exponent).exp_m1())
}

/// Pairwise interaction weights of one level's rows.
pub struct SeparationTable {
    pub k: usize,
    pub ln_t: f64,
    ln_freqs: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl SeparationTable {
    /// Entry for rows `j` and `j2` (1-based).
    pub fn value(&self, j: usize, j2: usize) -> f64 {
        self.values[j - 1][j2 - 1]
    }

    /// Diagonal entries, to be compared with the saturation value `1/2`.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.values[i][i]).collect()
    }

    /// Off-diagonal entry over the frequency ratio `N_lo / N_hi`; the
    /// saturated value never exceeds that ratio.
    pub fn off_diagonal_ratio(&self, j_hi: usize, j_lo: usize) -> f64 {
        let ratio = (self.ln_freqs[j_lo - 1] - self.ln_freqs[j_hi - 1]).exp();
        self.value(j_hi, j_lo) / ratio
    }
}

/// Tabulates all pairwise interaction weights of level `k` at log time
/// `ln_t`. Log arguments keep the table meaningful in asymptotic mode,
/// where neither the frequencies nor the times fit in a float.
pub fn scale_separation_table(
    ladder: &FrequencyLadder,
    k: usize,
    ln_t: f64,
) -> SeparationTable {
    let j_count = ladder.params().rows;
    let ln_freqs: Vec<f64> = (1..=j_count).map(|j| ladder.ln_n(j, k)).collect();
    let values = ln_freqs
        .iter()
        .map(|&a| {
            ln_freqs
                .iter()
                .map(|&b| pair_interaction(a, b, ln_t))
                .collect()
        })
        .collect();
    SeparationTable {
        k,
        ln_t,
        ln_freqs,
        values,
    }
}

// ---- envelope probe ----

/// Peak of `sqrt(t) |vbar_k(t)|_inf` over a log-spaced time sweep, against
/// the reference `e^-1 max_j |a_j|_inf`.
#[derive(Debug, Clone, Copy)]
pub struct EnvelopeProbe {
    pub k: usize,
    pub peak: f64,
    pub peak_time: f64,
    pub reference: f64,
    pub ratio: f64,
}

/// Sweeps `sqrt(t) |vbar_k(t)|_inf` over times bracketing every row's decay
/// scale and compares the peak with the amplitude reference.
pub fn envelope_probe(level: &CascadeLevel) -> Result<EnvelopeProbe, CascadeError> {
    let n_max = *level.potentials.n_phase.iter().max().expect("rows") as f64;
    let n_min = *level.potentials.n_phase.iter().min().expect("rows") as f64;
    let t_lo = 0.01 / (n_max * n_max);
    let t_hi = 10.0 / (n_min * n_min);
    let steps = 48;
    let mut peak = 0.0f64;
    let mut peak_time = t_lo;
    for i in 0..=steps {
        let t = t_lo * (t_hi / t_lo).powf(i as f64 / steps as f64);
        let value = t.sqrt() * principal_quartet(level, t)?.velocity.sup_norm();
        if value > peak {
            peak = value;
            peak_time = t;
        }
    }
    let reference = level.amplitudes.max_sup() * (-1.0f64).exp();
    let ratio = if reference > 0.0 {
        peak / reference
    } else {
        f64::INFINITY
    };
    Ok(EnvelopeProbe {
        k: level.k,
        peak,
        peak_time,
        reference,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PERP_PARTNER;
    use crate::ladder::{build_ladder, LadderParams};
    use once_cell::sync::Lazy;
    use std::f64::consts::PI;

    fn toy_ladder() -> FrequencyLadder {
        build_ladder(LadderParams::toy(), LadderMode::FieldScale).unwrap()
    }

    /// Pipeless toy cascade: duty >= 1 for every family, flat cutoffs.
    static FLAT: Lazy<Cascade> = Lazy::new(|| {
        Cascade::build(toy_ladder(), &Grid::square(256).unwrap(), PI, 1).unwrap()
    });
    static FLAT_ENGINE: Lazy<DuhamelEngine> = Lazy::new(|| FLAT.engine(0).unwrap());

    /// Piped toy cascade at the demonstration radius; 1024 resolves the
    /// narrowest Gaussian profile of level one.
    static PIPED: Lazy<Cascade> = Lazy::new(|| {
        Cascade::build(toy_ladder(), &Grid::square(1024).unwrap(), 0.6, 1).unwrap()
    });

    fn perp_units() -> Vec<[f64; 2]> {
        rows().iter().map(|r| r.dir.perp().unit()).collect()
    }

    #[test]
    fn level_zero_is_a_single_prescribed_shear() {
        let lvl = FLAT.level(0);
        let one = Field::constant(FLAT.grid(), Rank::Scalar, &[1.0]);
        assert_eq!(lvl.amplitudes.row(0).sup_distance(&one), 0.0);
        for idx in 1..ROW_COUNT {
            assert_eq!(lvl.amplitudes.row(idx).sup_norm(), 0.0);
        }
        assert!(lvl.amplitudes.c_small.is_none());
        assert!(lvl.potentials.flow_potential(0).sup_norm() > 0.0);
        for idx in 1..ROW_COUNT {
            assert_eq!(lvl.potentials.flow_potential(idx).sup_norm(), 0.0);
        }
        // First tracer row: direction (3,4)/5 at frequency 15, wave vector
        // (9,12), profile 15^-2 sin, mode coefficient -i/450.
        assert_eq!(lvl.potentials.n_phase[4], 15);
        let m = lvl.potentials.tracer_potential(0).mode(0, 9, 12);
        assert!((m - Complex64::new(0.0, -1.0 / 450.0)).norm() < 1e-15);
        // The lone velocity row synthesizes at frequency 5.
        assert_eq!(lvl.potentials.n_phase[0], 5);
    }

    #[test]
    fn flat_decomposition_values_at_zero_stress() {
        let grid = Grid::square(64).unwrap();
        let zero_sym = Field::zeros(&grid, Rank::SymTensor, Space::Physical);
        let stresses = Stresses {
            k: 0,
            s_u: zero_sym.clone(),
            s_c: zero_sym,
            s_b: Field::zeros(&grid, Rank::Vector, Space::Physical),
        };
        let chi = chi_field(&grid, &[]);
        let amps = amplitudes_next(&stresses, &chi).unwrap();
        assert_eq!(amps.c_small, Some(1.0));
        let half_sqrt = 0.5f64.sqrt();
        for j in 0..4 {
            let one = Field::constant(&grid, Rank::Scalar, &[half_sqrt]);
            assert!(amps.row(j).sup_distance(&one) < 1e-15);
        }
        for s in 0..8 {
            let half = Field::constant(&grid, Rank::Scalar, &[0.5]);
            assert!(amps.row(4 + s).sup_distance(&half) < 1e-15);
        }
        let axis = [half_sqrt, half_sqrt, -half_sqrt, -half_sqrt];
        for (s, &v) in axis.iter().enumerate() {
            let c = Field::constant(&grid, Rank::Scalar, &[v]);
            assert!(amps.row(12 + s).sup_distance(&c) < 1e-15);
        }
    }

    #[test]
    fn dyadic_constant_is_maximal_with_margin() {
        let lvl0 = FLAT.level(0);
        let c = FLAT.level(1).amplitudes.c_small.unwrap();
        // Level-zero stress sups have closed forms: the single shear gives
        // |S_u| = 2 sqrt(2), and the two surviving tracer waves are
        // parallel, peaking at |S_b| = 4 on the grid.
        assert!((lvl0.stresses.s_u.sup_norm() - 2.0 * 2.0f64.sqrt()).abs() < 1e-12);
        assert!((lvl0.stresses.s_b.sup_norm() - 4.0).abs() < 1e-12);
        assert_eq!(lvl0.stresses.s_c.sup_norm(), 0.0);
        assert_eq!(c, 0.0078125);
        let bound = lvl0
            .stresses
            .s_u
            .sup_norm()
            .max(lvl0.stresses.s_b.sup_norm().powi(2));
        let eps = epsilon_star();
        assert!(c * bound <= 0.5 * eps);
        assert!(2.0 * c * bound > 0.5 * eps);
        assert_eq!(c.log2().fract(), 0.0);
    }

    #[test]
    fn amplitude_identities_hold_where_the_mask_is_one() {
        let lvl0 = FLAT.level(0);
        let amps = &FLAT.level(1).amplitudes;
        let c = amps.c_small.unwrap();
        let c_inv = 1.0 / c;
        let grid = FLAT.grid().clone();
        let perp = perp_units();
        let tol_tensor = 1e-10 * (1.0 + 2.0 * c_inv);
        let tol_vector = 1e-10 * (1.0 + lvl0.stresses.s_b.sup_norm());
        let mut worst_tensor = 0.0f64;
        let mut worst_vector = 0.0f64;
        for i in 0..grid.len() {
            let mut l_u = Sym2::ZERO;
            for j in 0..4 {
                let a = amps.row(j).comp(0)[i].re;
                let p = perp[j];
                l_u = l_u
                    + Sym2 {
                        xx: a * a * p[0] * p[0],
                        xy: a * a * p[0] * p[1],
                        yy: a * a * p[1] * p[1],
                    };
            }
            let su = Sym2 {
                xx: lvl0.stresses.s_u.comp(SYM_XX)[i].re,
                xy: lvl0.stresses.s_u.comp(SYM_XY)[i].re,
                yy: lvl0.stresses.s_u.comp(SYM_YY)[i].re,
            };
            let r_u = su + Sym2::IDENTITY * c_inv;
            worst_tensor = worst_tensor.max((l_u - r_u).frobenius_norm());

            let mut l_c = Sym2::ZERO;
            let mut l_b = [0.0f64; 2];
            let mut g_sq = 0.0;
            for s in 0..TRACER_COUNT {
                let a = amps.row(4 + s).comp(0)[i].re;
                let p = perp[4 + s];
                l_c = l_c
                    + Sym2 {
                        xx: a * a * p[0] * p[0],
                        xy: a * a * p[0] * p[1],
                        yy: a * a * p[1] * p[1],
                    };
                l_b[0] += a * p[0];
                l_b[1] += a * p[1];
            }
            let sbx = lvl0.stresses.s_b.comp(0)[i].re;
            let sby = lvl0.stresses.s_b.comp(1)[i].re;
            g_sq += c * (sbx * sbx + sby * sby);
            let sc = Sym2 {
                xx: lvl0.stresses.s_c.comp(SYM_XX)[i].re,
                xy: lvl0.stresses.s_c.comp(SYM_XY)[i].re,
                yy: lvl0.stresses.s_c.comp(SYM_YY)[i].re,
            };
            let r_c = sc + Sym2::IDENTITY * (c_inv * (2.0 + g_sq));
            worst_tensor = worst_tensor.max((l_c - r_c).frobenius_norm());
            worst_vector = worst_vector
                .max((l_b[0] - sbx).abs())
                .max((l_b[1] - sby).abs());
        }
        assert!(worst_tensor < tol_tensor, "tensor defect {worst_tensor}");
        assert!(worst_vector < tol_vector, "vector defect {worst_vector}");

        // The vector identity's left side is a gradient in disguise: its
        // spectral curl stays at roundoff level.
        let mut combo = Field::zeros(&grid, Rank::Vector, Space::Physical);
        for s in 0..TRACER_COUNT {
            accumulate_vector(&mut combo, amps.row(4 + s), perp[4 + s]);
        }
        combo.make_spectral();
        let gx = ops::grad(&component_scalar(&combo, 1)).unwrap();
        let gy = ops::grad(&component_scalar(&combo, 0)).unwrap();
        let curl = &component_scalar(&gx, 0) - &component_scalar(&gy, 1);
        let scale = lvl0.stresses.s_b.sup_norm() * 15.0;
        assert!(curl.sup_norm() <= 1e-10 * scale, "curl {}", curl.sup_norm());
    }

    #[test]
    fn masked_amplitudes_vanish_off_the_envelope() {
        // Any resolvable pipe radius makes the doubled region cylinders of
        // the diagonal families cover the torus, so a nontrivial mask needs
        // a narrower prior geometry than the built pipes; the decomposition
        // itself is independent of that choice.
        let lvl1 = FLAT.level(1);
        let grid = FLAT.grid().clone();
        let prior = [level_geometry(FLAT.ladder(), 1, 0.05)];
        let chi = chi_field(&grid, &prior);
        let amps = amplitudes_next(&lvl1.stresses, &chi).unwrap();
        let c = amps.c_small.unwrap();
        let c_inv = 1.0 / c;
        let perp = perp_units();
        let mut masked = 0u64;
        let mut active = 0u64;
        let mut worst = 0.0f64;
        for iy in (0..grid.ny()).step_by(2) {
            for ix in (0..grid.nx()).step_by(2) {
                let i = grid.index(ix, iy);
                let cv = chi.comp(0)[i].re;
                if cv == 0.0 {
                    masked += 1;
                    for idx in 0..ROW_COUNT {
                        assert_eq!(amps.row(idx).comp(0)[i].re, 0.0);
                    }
                } else if cv == 1.0 {
                    active += 1;
                    let mut l_u = Sym2::ZERO;
                    for j in 0..4 {
                        let a = amps.row(j).comp(0)[i].re;
                        let p = perp[j];
                        l_u = l_u
                            + Sym2 {
                                xx: a * a * p[0] * p[0],
                                xy: a * a * p[0] * p[1],
                                yy: a * a * p[1] * p[1],
                            };
                    }
                    let su = Sym2 {
                        xx: lvl1.stresses.s_u.comp(SYM_XX)[i].re,
                        xy: lvl1.stresses.s_u.comp(SYM_XY)[i].re,
                        yy: lvl1.stresses.s_u.comp(SYM_YY)[i].re,
                    };
                    let r_u = su + Sym2::IDENTITY * c_inv;
                    worst = worst.max((l_u - r_u).frobenius_norm());
                }
            }
        }
        assert!(masked > 1_000, "masked sample count {masked}");
        assert!(active > 1_000, "active sample count {active}");
        assert!(worst < 1e-10 * (1.0 + 2.0 * c_inv), "defect {worst}");
    }

    #[test]
    fn principal_fields_satisfy_their_divergence_identities() {
        for k in 0..=1 {
            for &t in &[0.0, 6.25e-6, 1.0e-4] {
                let q = FLAT.principal(k, t).unwrap();
                let v_sup = q.velocity.sup_norm();
                let freq = *FLAT.level(k).potentials.n_phase.iter().max().unwrap() as f64;
                let div_v = ops::div(&q.velocity).unwrap().sup_norm();
                assert!(div_v <= 1e-11 * (1.0 + freq * v_sup), "div vbar {div_v}");
                let dr = &ops::div(&q.velocity_primitive).unwrap() - &q.velocity;
                assert!(dr.sup_norm() <= 1e-11 * (1.0 + v_sup));
                let dh = &ops::div(&q.tracer_primitive).unwrap() - &q.tracer;
                assert!(dh.sup_norm() <= 1e-11 * (1.0 + q.tracer.sup_norm()));
            }
        }
        // Level zero at t = 0 is the exact shear sin((3,4).x) (-4, 3).
        let q0 = FLAT.principal(0, 0.0).unwrap();
        let v = q0.velocity.to_physical();
        let grid = FLAT.grid();
        for &(ix, iy) in &[(0usize, 0usize), (13, 40), (101, 7), (200, 233)] {
            let [x1, x2] = grid.point(ix, iy);
            let s = (3.0 * x1 + 4.0 * x2).sin();
            assert!(
                (v.value(0, ix, iy) + 4.0 * s).abs() < 1e-11,
                "x-component {} vs {}",
                v.value(0, ix, iy),
                -4.0 * s
            );
            assert!(
                (v.value(1, ix, iy) - 3.0 * s).abs() < 1e-11,
                "y-component {} vs {}",
                v.value(1, ix, iy),
                3.0 * s
            );
        }
        // Level zero keeps a tracer remainder from the one frequency-
        // mismatched direction pair: mode (12, -9) carries 15 sin.
        let h0 = FLAT.principal(0, 0.0).unwrap().tracer;
        assert!((h0.mode(0, 12, -9) - Complex64::new(0.0, -7.5)).norm() < 1e-12);
        // Pure shears lose nothing to the projection beyond the Laplacian-
        // amplified transform noise floor; level one loses a real but small
        // share.
        assert!(leray_defect(FLAT.level(0), 0.0).unwrap() < 1e-11);
        let d1 = leray_defect(FLAT.level(1), 0.0).unwrap();
        assert!(d1 > 1e-6 && d1 < 1.0, "level-one defect {d1}");
    }

    #[test]
    fn duhamel_fields_vanish_at_time_zero() {
        let q = FLAT_ENGINE.eval(0.0).unwrap();
        assert_eq!(q.velocity.sup_norm(), 0.0);
        assert_eq!(q.tracer.sup_norm(), 0.0);
        assert_eq!(q.velocity_primitive.sup_norm(), 0.0);
        assert_eq!(q.tracer_primitive.sup_norm(), 0.0);
    }

    #[test]
    fn duhamel_primitives_track_their_fields() {
        let quartets = FLAT_ENGINE.eval_many(&[6.25e-6, 1.0e-4]).unwrap();
        for q in &quartets {
            let v_sup = q.velocity.sup_norm();
            assert!(v_sup > 0.0);
            let dr = &ops::div(&q.velocity_primitive).unwrap() - &q.velocity;
            assert!(dr.sup_norm() <= 1e-11 * v_sup);
            let dh = &ops::div(&q.tracer_primitive).unwrap() - &q.tracer;
            assert!(dh.sup_norm() <= 1e-11 * q.tracer.sup_norm());
            let div_v = ops::div(&q.velocity).unwrap().sup_norm();
            assert!(div_v <= 1e-11 * (1.0 + 150.0 * v_sup));
        }
    }

    #[test]
    fn duhamel_fields_match_a_time_quadrature_oracle() {
        let t = 2.0e-5;
        let modes: [(i64, i64); 3] = [(8, -1), (5, 0), (10, -3)];
        let steps = 128usize;
        let h = t / steps as f64;
        let mut sums = [[Complex64::default(); 2]; 3];
        for node in 0..=steps {
            let s = h * node as f64;
            let w = if node == 0 || node == steps {
                1.0
            } else if node % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let prin = FLAT.principal(1, s).unwrap();
            let v = prin.velocity.to_physical();
            let prod = sym_outer(&v, &v).to_spectral();
            for (mi, &(k1, k2)) in modes.iter().enumerate() {
                let txx = prod.mode(SYM_XX, k1, k2);
                let txy = prod.mode(SYM_XY, k1, k2);
                let tyy = prod.mode(SYM_YY, k1, k2);
                let (k1f, k2f) = (k1 as f64, k2 as f64);
                let i_unit = Complex64::new(0.0, 1.0);
                let d1 = i_unit * (txx * k1f + txy * k2f);
                let d2 = i_unit * (txy * k1f + tyy * k2f);
                let kk = k1f * k1f + k2f * k2f;
                let kd = (d1 * k1f + d2 * k2f) / kk;
                let p = [d1 - kd * k1f, d2 - kd * k2f];
                let decay = (-kk * (t - s)).exp();
                sums[mi][0] += p[0] * (w * decay);
                sums[mi][1] += p[1] * (w * decay);
            }
        }
        let got = FLAT_ENGINE.eval(t).unwrap();
        let mut engine_mag = 0.0f64;
        let mut defect = 0.0f64;
        for (mi, &(k1, k2)) in modes.iter().enumerate() {
            for c in 0..2 {
                let oracle = -sums[mi][c] * (h / 3.0);
                let value = got.velocity.mode(c, k1, k2);
                engine_mag = engine_mag.max(value.norm());
                defect = defect.max((oracle - value).norm());
            }
        }
        assert!(engine_mag > 1e-10, "probe modes carry no signal");
        assert!(defect <= 1e-9 * engine_mag, "defect {defect} vs {engine_mag}");
    }

    #[test]
    fn forcing_parts_match_the_difference_product_form() {
        let t = 1.0e-4;
        let engines = FLAT.engines().unwrap();
        let forcing = assemble_forcing(&FLAT, &engines, t).unwrap();
        assert_eq!(forcing.parts_u.len(), 1);
        assert_eq!(forcing.cross_u.sup_norm(), 0.0);
        assert_eq!(forcing.cross_b.sup_norm(), 0.0);

        let v0 = engines[0].eval(t).unwrap().velocity.to_physical();
        let vbar0 = FLAT.principal(0, t).unwrap().velocity.to_physical();
        let diff = &v0 - &vbar0;
        let mut alt = sym_outer(&diff, &v0);
        alt.axpy(1.0, &sym_outer(&vbar0, &diff));
        alt.make_spectral();
        let gap = &alt - &forcing.parts_u[0];
        let scale = forcing.parts_u[0].sup_norm();
        assert!(gap.sup_norm() <= 1e-12 * (1.0 + scale));

        // The base shear feeds nothing into the projected divergence; the
        // tolerance carries the differentiation factor of the highest mode
        // roundoff noise can populate.
        let base = sym_outer(&vbar0, &vbar0).to_spectral();
        let fed = ops::leray(&ops::div(&base).unwrap()).unwrap();
        let tol = 1e-12 * (1.0 + base.sup_norm() * FLAT.grid().max_freq() as f64);
        assert!(
            fed.sup_norm() <= tol,
            "fed {} vs tol {}",
            fed.sup_norm(),
            tol
        );
    }

    #[test]
    fn mild_equations_close_to_central_difference_accuracy() {
        let engines = FLAT.engines().unwrap();
        let report = richardson_residual(&FLAT, &engines, 1.0e-3, 2.0e-5).unwrap();
        assert!(
            report.velocity_ratio > 3.0 && report.velocity_ratio < 5.0,
            "velocity ratio {}",
            report.velocity_ratio
        );
        assert!(
            report.tracer_ratio > 3.0 && report.tracer_ratio < 5.0,
            "tracer ratio {}",
            report.tracer_ratio
        );
        assert!(report.velocity_extrapolated <= 1e-6 * report.fine.velocity_scale);
        assert!(report.tracer_extrapolated <= 1e-6 * report.fine.tracer_scale);
    }

    #[test]
    fn separation_table_matches_closed_forms() {
        let v = pair_interaction(100f64.ln(), 10f64.ln(), 0.0);
        assert!((v - 1000.0 / 10100.0).abs() < 1e-12);
        assert_eq!(pair_interaction(5f64.ln(), 3f64.ln(), f64::NEG_INFINITY), 0.0);

        let toy = toy_ladder();
        let table = scale_separation_table(&toy, 1, 0.0);
        for d in table.diagonal() {
            assert!(d >= 0.45 && d <= 0.5 + 1e-12, "diagonal {d}");
        }
        for j_hi in 2..=16 {
            for j_lo in 1..j_hi {
                let r = table.off_diagonal_ratio(j_hi, j_lo);
                assert!(r <= 1.1, "ratio {r} at ({j_hi}, {j_lo})");
                assert!(r >= 0.5 - 1e-12, "ratio {r} at ({j_hi}, {j_lo})");
            }
        }
        // At the previous level's time window the toy diagonal is nowhere
        // near saturation; only far larger times reach the 1/2 band.
        let early = scale_separation_table(&toy, 1, toy.t(0).ln());
        assert!(early.value(1, 1) < 0.05);

        let asym = build_ladder(LadderParams::asymptotic(), LadderMode::Asymptotic).unwrap();
        let ln_t = -4.0 * asym.ln_n(asym.params().rows, 0);
        let deep = scale_separation_table(&asym, 1, ln_t);
        for d in deep.diagonal() {
            assert!(d >= 0.45 && d <= 0.5 + 1e-12, "asymptotic diagonal {d}");
        }
    }

    #[test]
    fn envelope_peak_sits_within_a_factor_of_three() {
        // With a single active frequency the peak lands near 1/(2 N^2) and
        // within a factor 3 of the amplitude reference.
        let probe = envelope_probe(FLAT.level(0)).unwrap();
        assert!(
            probe.ratio >= 1.0 / 3.0 && probe.ratio <= 3.0,
            "ratio {} (peak {} at t = {}, reference {})",
            probe.ratio,
            probe.peak,
            probe.peak_time,
            probe.reference
        );
        assert!(
            probe.peak_time >= 0.01 && probe.peak_time <= 0.04,
            "peak time {}",
            probe.peak_time
        );
        // Level one packs sixteen rows into under two octaves, so their
        // envelopes stack well beyond the single-row factor; the value is
        // deterministic, pinned here against regressions.
        let stacked = envelope_probe(FLAT.level(1)).unwrap();
        assert!(
            stacked.ratio > 5.3 && stacked.ratio < 5.9,
            "stacked ratio {}",
            stacked.ratio
        );
    }

    #[test]
    fn potentials_stay_inside_their_own_pipes() {
        // Per-row support is the sharp statement at desk scale; the union
        // of all rows' doubled cylinders already covers the torus at any
        // resolvable radius. The axis rows carry the widest gaps between
        // pipes, so they dominate this measurement.
        let lvl1 = PIPED.level(1);
        let geometry = &PIPED.geometries()[0];
        let defect = lvl1.potentials.support_defect(geometry, 2.0);
        assert!(defect <= 1e-8, "support defect {defect}");
        // A flat cutoff occupies everything; the defect is zero by duty.
        let flat_defect = FLAT
            .level(1)
            .potentials
            .support_defect(&level_geometry(FLAT.ladder(), 1, PI), 2.0);
        assert_eq!(flat_defect, 0.0);
    }

    #[test]
    fn derivative_envelopes_stay_bounded() {
        let lvl1 = FLAT.level(1);
        let a_env = lvl1.amplitudes.derivative_envelope(FLAT.ladder()).unwrap();
        for (n, v) in a_env.iter().enumerate() {
            assert!(v.is_finite() && *v > 0.0, "amplitude C_{n} = {v}");
        }
        assert!(a_env[0] > 1.0 && a_env[0] < 100.0, "C_0 = {}", a_env[0]);
        let p_env = lvl1.potentials.derivative_envelope().unwrap();
        for (n, v) in p_env.iter().enumerate() {
            assert!(v.is_finite() && *v > 0.0, "potential C_{n} = {v}");
            assert!(*v < 1e4, "potential C_{n} = {v}");
        }
    }

    #[test]
    fn rejects_bad_grids_ladders_and_depths() {
        let grid64 = Grid::square(64).unwrap();
        match Cascade::build(toy_ladder(), &grid64, PI, 1).err() {
            Some(CascadeError::GridTooCoarse { k: 1, .. }) => {}
            other => panic!("expected a grid rejection, got {other:?}"),
        }
        match Cascade::build(toy_ladder(), &Grid::square(256).unwrap(), PI, 2).err() {
            Some(CascadeError::TruncationTooDeep {
                requested: 2,
                needed: 4,
                available: 3,
            }) => {}
            other => panic!("expected a depth rejection, got {other:?}"),
        }
        let asym = build_ladder(LadderParams::asymptotic(), LadderMode::Asymptotic).unwrap();
        match Cascade::build(asym, &Grid::square(256).unwrap(), PI, 1).err() {
            Some(CascadeError::AsymptoticLadder) => {}
            other => panic!("expected a mode rejection, got {other:?}"),
        }
    }

    #[test]
    fn tracer_diagonal_rows_stay_paired() {
        // The two diagonal tracer rows of each direction carry identical
        // coefficients, and with no coupling stress at level zero they sit
        // at the flat value 0.5 / sqrt(c) wherever the mask is one.
        let amps = &FLAT.level(1).amplitudes;
        let flat_value = 0.5 / amps.c_small.unwrap().sqrt();
        let grid = FLAT.grid();
        for &(ix, iy) in &[(11usize, 27usize), (100, 3), (222, 141)] {
            let i = grid.index(ix, iy);
            for j in 0..4 {
                let a_u = amps.row(j).comp(0)[i].re;
                let a_diag = amps.row(4 + j).comp(0)[i].re;
                let a_neg = amps.row(8 + j).comp(0)[i].re;
                assert!(a_u > 0.0);
                assert!((a_diag - a_neg).abs() < 1e-14);
                assert!((a_diag - flat_value).abs() < 1e-12 * flat_value);
                assert_eq!(PERP_PARTNER[PERP_PARTNER[j]], j);
            }
        }
    }
}
