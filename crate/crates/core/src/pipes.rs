//! Pipe cutoffs, nested region masks, and their volume probes.
//!
//! Each cascade row past the seed level localizes its oscillation inside a
//! periodic family of parallel strips ("pipes"). For a direction
//! `eta = p/q` with pipe count `M`, the strip axes sit at perpendicular
//! coordinate `s = eta_perp . x` in `(2 pi / (q M)) Z`, and the cutoff is a
//! function of `s` alone, hence exactly constant along the pipe axis. The
//! profile is a periodized Gaussian of width `sigma = r0 / 8` with
//! `r0 = delta0 / M`, scaled so the torus mean of `phi^2` is exactly 2;
//! once the duty cycle `delta0 q / pi` reaches 1 the strips overlap and the
//! cutoff degenerates to the constant `sqrt(2)`, which is also the profile
//! pipe-free builds use everywhere.
//!
//! The active regions intersect unions of widened pipe cylinders level by
//! level; their volume halves per level, which is the intermittency driving
//! the construction. Volumes are measured by seeded Monte Carlo on the
//! exact folded distance because at the production radius parameter the
//! strips are far narrower than any affordable grid cell.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::field::Field;
use crate::geometry::{rows, Direction};
use crate::grid::Grid;
use crate::ladder::FrequencyLadder;
use crate::ops::smooth_step;

/// Errors from pipe construction.
#[derive(Debug, Error)]
pub enum PipeError {
    #[error(
        "pipe profile of width sigma = {sigma:.3e} aliases on this grid, \
         needs sigma >= {min_sigma:.3e}"
    )]
    Unresolvable { sigma: f64, min_sigma: f64 },
    #[error("radius parameter must be positive and finite, got {0}")]
    BadRadius(f64),
}

/// Geometry of one pipe family: a direction, the pipe count `M`, and the
/// radius parameter `delta0`.
#[derive(Debug, Clone, Copy)]
pub struct PipeSpec {
    pub dir: Direction,
    pub pipe_count: u64,
    pub delta0: f64,
}

impl PipeSpec {
    pub fn new(dir: Direction, pipe_count: u64, delta0: f64) -> PipeSpec {
        PipeSpec {
            dir,
            pipe_count,
            delta0,
        }
    }

    /// Perpendicular spacing between adjacent pipe axes, `2 pi / (q M)`.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / (self.dir.q as f64 * self.pipe_count as f64)
    }

    /// Strip half-width `r0 = delta0 / M`.
    pub fn radius(&self) -> f64 {
        self.delta0 / self.pipe_count as f64
    }

    /// Fraction of one spacing period covered by the strips of half-width
    /// `delta0 / M`; at 1 and beyond the strips tile the torus.
    pub fn duty(&self) -> f64 {
        self.delta0 * self.dir.q as f64 / PI
    }

    /// Perpendicular coordinate `eta_perp . x` of a point.
    pub fn s_coord(&self, x: [f64; 2]) -> f64 {
        (-self.dir.p[1] as f64 * x[0] + self.dir.p[0] as f64 * x[1]) / self.dir.q as f64
    }

    /// Distance from `x` to the nearest pipe axis, by exact folding into
    /// one spacing period.
    pub fn distance(&self, x: [f64; 2]) -> f64 {
        let s = self.s_coord(x);
        let d = s - (s / self.spacing()).round() * self.spacing();
        d.abs()
    }

    /// Membership in the cylinder of radius `rho * delta0 / M`.
    pub fn in_cylinder(&self, x: [f64; 2], rho: f64) -> bool {
        self.distance(x) <= rho * self.radius()
    }

    /// Exact torus fraction of the cylinder of radius `rho * delta0 / M`.
    pub fn cylinder_fraction(&self, rho: f64) -> f64 {
        (rho * self.delta0 * self.dir.q as f64 / PI).min(1.0)
    }
}

/// Perpendicular profile of a pipe cutoff.
#[derive(Debug, Clone, Copy)]
pub enum PipeProfile {
    /// Constant `sqrt(2)`: overlapping strips, or pipes disabled.
    Flat,
    /// `amp * sum_m exp(-(s - m spacing)^2 / (2 sigma^2))`.
    Gaussian { sigma: f64, amp: f64 },
}

/// A pipe cutoff: family geometry plus the normalized profile.
#[derive(Debug, Clone, Copy)]
pub struct PipeCutoff {
    pub spec: PipeSpec,
    pub profile: PipeProfile,
}

/// Builds the normalized cutoff for one family. The amplitude comes from
/// the exact mean of the squared periodized Gaussian over one period,
/// `amp^2 (sigma sqrt(pi) / spacing) sum_m exp(-(m spacing)^2/(4 sigma^2))
/// = 2`; a duty cycle of 1 or more degenerates to the flat profile.
pub fn build_cutoff(spec: PipeSpec) -> Result<PipeCutoff, PipeError> {
    if !(spec.delta0 > 0.0 && spec.delta0.is_finite()) {
        return Err(PipeError::BadRadius(spec.delta0));
    }
    if spec.duty() >= 1.0 {
        return Ok(flat_cutoff(spec));
    }
    let sigma = spec.radius() / 8.0;
    let delta = spec.spacing();
    let theta: f64 = (-8i32..=8)
        .map(|m| (-(m as f64 * delta).powi(2) / (4.0 * sigma * sigma)).exp())
        .sum();
    let mean_sq = sigma * PI.sqrt() / delta * theta;
    let amp = (2.0 / mean_sq).sqrt();
    Ok(PipeCutoff {
        spec,
        profile: PipeProfile::Gaussian { sigma, amp },
    })
}

/// The constant-`sqrt(2)` cutoff used when pipes are disabled.
pub fn flat_cutoff(spec: PipeSpec) -> PipeCutoff {
    PipeCutoff {
        spec,
        profile: PipeProfile::Flat,
    }
}

impl PipeCutoff {
    /// Profile value at perpendicular coordinate `s`.
    pub fn eval_s(&self, s: f64) -> f64 {
        match self.profile {
            PipeProfile::Flat => SQRT_2,
            PipeProfile::Gaussian { sigma, amp } => {
                let delta = self.spec.spacing();
                let d = s - (s / delta).round() * delta;
                let mut v = 0.0;
                for m in -2i32..=2 {
                    v += (-(d - m as f64 * delta).powi(2) / (2.0 * sigma * sigma)).exp();
                }
                amp * v
            }
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.eval_s(self.spec.s_coord(x))
    }
}

/// Samples a cutoff on the grid as a physical scalar field. A Gaussian
/// profile lives on torus harmonics at multiples of `q M eta_perp` with
/// weights `exp(-(q M sigma m)^2 / 2)`; the largest representable multiple
/// is about `n / (2 M p_max)`, so keeping the truncated tail below
/// roundoff needs `q sigma n / (2 p_max) >= 9.5`. Profiles below that are
/// rejected, since their aliased harmonics would corrupt the spectral
/// invariants (axis constancy most visibly).
pub fn cutoff_field(grid: &Grid, cutoff: &PipeCutoff) -> Result<Field, PipeError> {
    if let PipeProfile::Gaussian { sigma, .. } = cutoff.profile {
        let n = grid.nx().min(grid.ny()) as f64;
        let p_max = cutoff.spec.dir.p.iter().map(|c| c.abs()).max().unwrap() as f64;
        let min_sigma = 19.0 * p_max / (cutoff.spec.dir.q as f64 * n);
        if sigma < min_sigma {
            return Err(PipeError::Unresolvable { sigma, min_sigma });
        }
    }
    Ok(Field::from_fn_scalar(grid, |x, y| cutoff.eval([x, y])))
}

/// Sup norm of the order-`n` spectral derivative of a scalar field along
/// the integer direction `p / q`.
pub fn directional_derivative_sup(field: &Field, dir: [i64; 2], q: i64, order: u32) -> f64 {
    let mut g = field.to_spectral();
    let (nx, ny) = (g.grid().nx(), g.grid().ny());
    let fx: Vec<f64> = (0..nx).map(|ix| g.grid().freq_x(ix) as f64).collect();
    let fy: Vec<f64> = (0..ny).map(|iy| g.grid().freq_y(iy) as f64).collect();
    let data = g.comp_mut(0);
    for iy in 0..ny {
        for ix in 0..nx {
            let w = (fx[ix] * dir[0] as f64 + fy[iy] * dir[1] as f64) / q as f64;
            data[iy * nx + ix] *= Complex64::new(0.0, w).powu(order);
        }
    }
    g.make_physical();
    g.sup_norm()
}

/// Spectral defect of constancy along the pipe axis, `sup |eta . grad phi|`.
pub fn axis_defect(field: &Field, dir: Direction) -> f64 {
    directional_derivative_sup(field, dir.p, dir.q, 1)
}

/// Largest profile value at folded distance beyond the cylinder radius
/// `delta0 / M`; exact-zero for flat cutoffs by convention.
pub fn support_defect(grid: &Grid, cutoff: &PipeCutoff) -> f64 {
    if matches!(cutoff.profile, PipeProfile::Flat) {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for iy in 0..grid.ny() {
        for ix in 0..grid.nx() {
            let x = grid.point(ix, iy);
            if cutoff.spec.distance(x) > cutoff.spec.radius() {
                worst = worst.max(cutoff.eval(x).abs());
            }
        }
    }
    worst
}

/// All pipe families of one level (`k >= 1`): the sixteen rows with their
/// ladder pipe counts at that level.
#[derive(Debug, Clone)]
pub struct LevelGeometry {
    pub level: usize,
    pub specs: Vec<PipeSpec>,
}

pub fn level_geometry(ladder: &FrequencyLadder, k: usize, delta0: f64) -> LevelGeometry {
    let specs = rows()
        .iter()
        .map(|r| PipeSpec::new(r.dir, ladder.m(r.j, k), delta0))
        .collect();
    LevelGeometry { level: k, specs }
}

impl LevelGeometry {
    /// Is `x` inside the union of this level's cylinders at radius
    /// `rho * delta0 / M_j`?
    pub fn in_union(&self, x: [f64; 2], rho: f64) -> bool {
        self.specs.iter().any(|s| s.in_cylinder(x, rho))
    }

    /// One representative per geometric family: a direction and its
    /// negation with equal pipe counts trace the same axis lines.
    pub fn distinct_specs(&self) -> Vec<PipeSpec> {
        let mut seen = std::collections::BTreeSet::new();
        self.specs
            .iter()
            .filter(|s| {
                let mut p = s.dir.p;
                if p[0] < 0 || (p[0] == 0 && p[1] < 0) {
                    p = [-p[0], -p[1]];
                }
                seen.insert((p, s.pipe_count))
            })
            .copied()
            .collect()
    }

    /// Union fraction under the independence model across distinct
    /// families. Same-axis families with different pipe counts still share
    /// lattice points, so this is a coarse diagnostic, not an oracle.
    pub fn union_fraction_prediction(&self, rho: f64) -> f64 {
        1.0 - self
            .distinct_specs()
            .iter()
            .map(|s| 1.0 - s.cylinder_fraction(rho))
            .product::<f64>()
    }
}

/// Radius multiple for the level-`k'` cylinders inside the depth-`d`
/// region, `d = k - k'`: the region uses `(3 - 2^-d) delta0`, its widened
/// envelope `(3 - (3/4) 2^-d) delta0`.
fn region_rho(d: usize) -> f64 {
    3.0 - 0.5f64.powi(d as i32)
}

fn envelope_rho(d: usize) -> f64 {
    3.0 - 0.75 * 0.5f64.powi(d as i32)
}

/// Membership of `x` in the level-`k` active region, where `levels` holds
/// the pipe geometry of levels `1..=k` in order. An empty slice is the
/// whole torus.
pub fn in_region(levels: &[LevelGeometry], x: [f64; 2]) -> bool {
    levels
        .iter()
        .enumerate()
        .all(|(idx, lg)| lg.in_union(x, region_rho(levels.len() - 1 - idx)))
}

/// Membership in the widened envelope of the active region.
pub fn in_envelope(levels: &[LevelGeometry], x: [f64; 2]) -> bool {
    levels
        .iter()
        .enumerate()
        .all(|(idx, lg)| lg.in_union(x, envelope_rho(levels.len() - 1 - idx)))
}

/// A Monte Carlo volume measurement.
#[derive(Debug, Clone, Copy)]
pub struct VolumeEstimate {
    /// Measured torus fraction.
    pub fraction: f64,
    /// Binomial standard error of the measurement.
    pub std_error: f64,
    pub samples: u64,
    /// Independence-model prediction (product over levels of union
    /// fractions), for reporting.
    pub prediction: f64,
}

/// Measures the active-region volume fraction with seeded uniform samples.
pub fn region_volume(levels: &[LevelGeometry], samples: u64, seed: u64) -> VolumeEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..samples {
        let x = [rng.gen::<f64>() * 2.0 * PI, rng.gen::<f64>() * 2.0 * PI];
        if in_region(levels, x) {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    let prediction = levels
        .iter()
        .enumerate()
        .map(|(idx, lg)| lg.union_fraction_prediction(region_rho(levels.len() - 1 - idx)))
        .product();
    VolumeEstimate {
        fraction: p,
        std_error: (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
        prediction,
    }
}

/// Result of the local-density probe over random cubes.
#[derive(Debug, Clone, Copy)]
pub struct CubeProbe {
    /// Worst observed `|region intersect Q| / |Q|`.
    pub max_ratio: f64,
    /// The halving bound `2^-(k - k0)` the ratio is tested against.
    pub bound: f64,
    pub cubes: usize,
    pub min_side: f64,
}

/// Samples axis-parallel cubes with side at least `2 pi / M_{1,k0}` and
/// measures the worst local density of the level-`k` region, which the
/// halving lemma bounds by `2^-(k - k0)` for admissible cubes.
pub fn cube_probe(
    levels: &[LevelGeometry],
    k0: usize,
    cubes: usize,
    samples_per_cube: u64,
    seed: u64,
) -> CubeProbe {
    let k = levels.len();
    assert!(k0 >= 1 && k0 <= k, "probe base level out of range");
    let m10 = levels[k0 - 1].specs[0].pipe_count as f64;
    let min_side = (2.0 * PI / m10).min(0.99 * 2.0 * PI);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = 0.0f64;
    for _ in 0..cubes {
        let side = min_side + rng.gen::<f64>() * (0.99 * 2.0 * PI - min_side);
        let corner = [rng.gen::<f64>() * 2.0 * PI, rng.gen::<f64>() * 2.0 * PI];
        let mut hits = 0u64;
        for _ in 0..samples_per_cube {
            let x = [
                corner[0] + rng.gen::<f64>() * side,
                corner[1] + rng.gen::<f64>() * side,
            ];
            if in_region(levels, x) {
                hits += 1;
            }
        }
        max_ratio = max_ratio.max(hits as f64 / samples_per_cube as f64);
    }
    CubeProbe {
        max_ratio,
        bound: 0.5f64.powi((k - k0) as i32),
        cubes,
        min_side,
    }
}

/// Largest radius parameter obeying the per-family volume precondition
/// `|C_jk(4 delta0)| <= 1 / (10 J)` over a direction set with maximal
/// denominator `q_max`; the binding family gives `pi / (40 J q_max)`.
pub fn production_delta0(j_rows: usize, q_max: i64) -> f64 {
    PI / (40.0 * j_rows as f64 * q_max as f64)
}

/// Amplitude cutoff value for the level after `prior` (levels `1..=k` in
/// order): a C-infinity product over the prior levels' cylinder unions,
/// exactly 1 on the level-`k` region and supported in its envelope. An
/// empty slice gives the constant 1 of the first level.
pub fn chi_value(prior: &[LevelGeometry], x: [f64; 2]) -> f64 {
    let mut product = 1.0;
    for (idx, lg) in prior.iter().enumerate() {
        let d = prior.len() - 1 - idx;
        let (rho_in, rho_out) = (region_rho(d), envelope_rho(d));
        let mut miss = 1.0;
        for spec in &lg.specs {
            let r_in = rho_in * spec.radius();
            let r_out = rho_out * spec.radius();
            let edge = 1.0 - smooth_step((spec.distance(x) - r_in) / (r_out - r_in));
            miss *= 1.0 - edge;
            if miss == 0.0 {
                break;
            }
        }
        product *= 1.0 - miss;
        if product == 0.0 {
            break;
        }
    }
    product
}

/// Samples the amplitude cutoff on the grid as a physical scalar field.
pub fn chi_field(grid: &Grid, prior: &[LevelGeometry]) -> Field {
    Field::from_fn_scalar(grid, |x, y| chi_value(prior, [x, y]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ladder::{build_ladder, LadderMode, LadderParams};

    fn diag() -> Direction {
        Direction::new(3, 4, 5)
    }

    fn toy_levels(k: usize, delta0: f64) -> Vec<LevelGeometry> {
        let ladder = build_ladder(LadderParams::toy(), LadderMode::FieldScale).unwrap();
        (1..=k).map(|k| level_geometry(&ladder, k, delta0)).collect()
    }

    #[test]
    fn cutoff_mean_square_is_two_on_the_grid() {
        let grid = Grid::square(512).unwrap();
        let cutoff = build_cutoff(PipeSpec::new(diag(), 2, 0.6)).unwrap();
        assert!(matches!(cutoff.profile, PipeProfile::Gaussian { .. }));
        let f = cutoff_field(&grid, &cutoff).unwrap();
        let mean_sq: f64 =
            f.comp(0).iter().map(|v| v.re * v.re).sum::<f64>() / f.comp(0).len() as f64;
        assert!((mean_sq - 2.0).abs() < 1e-10, "mean(phi^2) = {mean_sq}");
    }

    #[test]
    fn cutoff_vanishes_outside_its_cylinder() {
        let grid = Grid::square(256).unwrap();
        for (dir, m) in [(diag(), 3), (Direction::new(1, 0, 1), 1)] {
            let cutoff = build_cutoff(PipeSpec::new(dir, m, 0.6)).unwrap();
            let defect = support_defect(&grid, &cutoff);
            assert!(defect < 1e-12, "support defect {defect} for {dir:?}");
        }
    }

    #[test]
    fn cutoff_is_constant_along_its_axis_spectrally() {
        let grid = Grid::square(512).unwrap();
        let cutoff = build_cutoff(PipeSpec::new(diag(), 2, 0.6)).unwrap();
        let f = cutoff_field(&grid, &cutoff).unwrap();
        let defect = axis_defect(&f, diag());
        // The perpendicular gradient is ~7e1, so 1e-10 means the axis
        // component is pure rounding noise.
        assert!(defect < 1e-10, "axis defect {defect}");
        let perp = directional_derivative_sup(&f, diag().perp().p, 5, 1);
        assert!(perp > 10.0);
    }

    #[test]
    fn overlapping_pipes_degenerate_to_the_flat_profile() {
        let spec = PipeSpec::new(diag(), 4, std::f64::consts::FRAC_PI_2);
        assert!(spec.duty() >= 1.0);
        let cutoff = build_cutoff(spec).unwrap();
        assert!(matches!(cutoff.profile, PipeProfile::Flat));
        assert_eq!(cutoff.eval([0.3, 1.7]), SQRT_2);
    }

    #[test]
    fn derivative_sup_scales_linearly_with_pipe_count() {
        let grid = Grid::square(1024).unwrap();
        let sups: Vec<f64> = [2u64, 4]
            .iter()
            .map(|&m| {
                let cutoff = build_cutoff(PipeSpec::new(diag(), m, 0.6)).unwrap();
                let f = cutoff_field(&grid, &cutoff).unwrap();
                directional_derivative_sup(&f, diag().perp().p, 5, 1)
            })
            .collect();
        let ratio = sups[1] / sups[0];
        assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn under_resolved_profiles_are_rejected() {
        let grid = Grid::square(64).unwrap();
        let cutoff = build_cutoff(PipeSpec::new(Direction::new(1, 0, 1), 4, 0.6)).unwrap();
        assert!(matches!(
            cutoff_field(&grid, &cutoff),
            Err(PipeError::Unresolvable { .. })
        ));
    }

    #[test]
    fn region_volumes_respect_the_halving_bound() {
        let delta0 = production_delta0(16, 5);
        let levels = toy_levels(2, delta0);
        let v1 = region_volume(&levels[..1], 200_000, 7);
        let v2 = region_volume(&levels, 200_000, 8);
        assert!(v1.fraction <= 0.5 * 1.02, "level 1 fraction {}", v1.fraction);
        assert!(v2.fraction <= 0.25 * 1.02, "level 2 fraction {}", v2.fraction);
        // Hard union bound over the distinct families, then a loose match
        // against the independence diagnostic (same-axis pipe-count pairs
        // overlap, so a few percent of slack is expected).
        let union_bound: f64 = levels[0]
            .distinct_specs()
            .iter()
            .map(|s| s.cylinder_fraction(2.0))
            .sum();
        assert!(v1.fraction <= union_bound + 3.0 * v1.std_error);
        assert!((v1.fraction - v1.prediction).abs() < 0.25 * v1.prediction);
        assert!(v2.fraction < v1.fraction);
        assert!(v2.fraction > 0.0);
    }

    #[test]
    fn chi_is_one_on_the_region_and_vanishes_off_the_envelope() {
        let delta0 = production_delta0(16, 5);
        let levels = toy_levels(1, delta0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut on_region, mut off_envelope) = (0u32, 0u32);
        for _ in 0..50_000 {
            let x = [rng.gen::<f64>() * 2.0 * PI, rng.gen::<f64>() * 2.0 * PI];
            let chi = chi_value(&levels, x);
            assert!((0.0..=1.0).contains(&chi));
            if in_region(&levels, x) {
                assert_eq!(chi, 1.0);
                on_region += 1;
            }
            if !in_envelope(&levels, x) {
                assert_eq!(chi, 0.0);
                off_envelope += 1;
            }
        }
        // Negated directions share axis lines, so the distinct union covers
        // about 2 percent of the torus here.
        assert!(on_region > 700, "on_region {on_region}");
        assert!(off_envelope > 10_000);
    }

    #[test]
    fn chi_with_no_prior_levels_is_identically_one() {
        assert_eq!(chi_value(&[], [1.0, 2.0]), 1.0);
        let grid = Grid::square(16).unwrap();
        let f = chi_field(&grid, &[]);
        assert!(f.comp(0).iter().all(|v| v.re == 1.0 && v.im == 0.0));
    }

    #[test]
    fn chi_transition_matches_the_profile_calculus() {
        let delta0 = production_delta0(16, 5);
        let spec = PipeSpec::new(diag(), 4, delta0);
        let prior = [LevelGeometry {
            level: 1,
            specs: vec![spec],
        }];
        let r_in = 2.0 * spec.radius();
        let r_out = 2.25 * spec.radius();
        let width = r_out - r_in;
        // Maximal slope of the C-infinity step, by the same finite
        // difference the transect scan uses below.
        let h = 1e-7;
        let step_slope = (1..2000)
            .map(|i| {
                let t = i as f64 / 2000.0;
                (smooth_step(t + h) - smooth_step(t - h)) / (2.0 * h)
            })
            .fold(0.0f64, f64::max);
        assert!(
            step_slope > 2.0 && step_slope < 2.7,
            "step slope {step_slope}"
        );
        // A transect along eta_perp crosses exactly one edge: chi is 1
        // up to the inner radius, 0 past the outer one, and its slope is
        // the step slope compressed into the (1/4) delta0 / M width.
        let chi_at = |s: f64| chi_value(&prior, [-0.8 * s, 0.6 * s]);
        assert_eq!(chi_at(r_in - 1e-9), 1.0);
        assert_eq!(chi_at(r_out + 1e-9), 0.0);
        let hs = width * 1e-5;
        let slope = (0..=2000)
            .map(|i| {
                let s = r_in + width * i as f64 / 2000.0;
                ((chi_at(s + hs) - chi_at(s - hs)) / (2.0 * hs)).abs()
            })
            .fold(0.0f64, f64::max);
        let bound = step_slope / width;
        assert!((slope / bound - 1.0).abs() < 1e-3, "slope {slope} vs {bound}");
    }

    #[test]
    fn chi_gradient_stays_within_the_analytic_envelope() {
        // An isolated edge has slope at most step_slope * M_j / ((1/4)
        // delta0) with |grad s| = 1; where two transition shells cross the
        // product rule can add a second edge's slope, hence the factor 2.
        let delta0 = production_delta0(16, 5);
        let levels = toy_levels(1, delta0);
        let max_m = levels[0].specs.iter().map(|s| s.pipe_count).max().unwrap() as f64;
        let bound = 2.0 * 2.7 * max_m / (0.25 * delta0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-9;
        let mut sup = 0.0f64;
        for _ in 0..20_000 {
            let x = [rng.gen::<f64>() * 2.0 * PI, rng.gen::<f64>() * 2.0 * PI];
            let dx = (chi_value(&levels, [x[0] + h, x[1]])
                - chi_value(&levels, [x[0] - h, x[1]]))
                / (2.0 * h);
            let dy = (chi_value(&levels, [x[0], x[1] + h])
                - chi_value(&levels, [x[0], x[1] - h]))
                / (2.0 * h);
            sup = sup.max(dx.abs().max(dy.abs()));
        }
        assert!(sup < bound, "sup {sup} vs bound {bound}");
        assert!(sup > 0.05 * bound, "sup {sup} never saw an edge");
    }

    #[test]
    fn cube_probe_passes_the_local_density_bound() {
        let delta0 = production_delta0(16, 5);
        let levels = toy_levels(2, delta0);
        let probe = cube_probe(&levels, 1, 100, 2000, 13);
        assert_eq!(probe.bound, 0.5);
        assert!(
            probe.max_ratio <= probe.bound + 0.05,
            "max ratio {}",
            probe.max_ratio
        );
    }

    #[test]
    fn production_radius_matches_the_binding_family() {
        assert_eq!(production_delta0(16, 5), PI / 3200.0);
    }

    #[test]
    fn distance_folds_exactly_across_periods() {
        let spec = PipeSpec::new(diag(), 3, 0.6);
        let x = [0.37, 1.91];
        let s = spec.s_coord(x);
        let shifted = [x[0] + 2.0 * PI, x[1]];
        // One torus period along x1 shifts s by an integer multiple of the
        // pipe spacing (q M / q = M pipes per torus width).
        assert!((spec.distance(shifted) - spec.distance(x)).abs() < 1e-12);
        assert!(spec.distance(x) <= spec.spacing() / 2.0 + 1e-15);
        assert!(s.is_finite());
    }
}
