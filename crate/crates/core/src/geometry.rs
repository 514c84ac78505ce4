//! Rational direction sets on the 2-torus and the exact pointwise stress
//! decompositions that drive the cascade amplitudes.
//!
//! The velocity family uses the four Pythagorean directions
//! `{(3,4), (4,3), (3,-4), (4,-3)} / 5`, whose rank-one tensors `eta (x) eta`
//! sum to `2 Id` and span the symmetric 2x2 matrices. The combined family
//! adds the four negated diagonals and the four coordinate axes. Both
//! decompositions below reconstruct their input exactly (they are algebraic
//! identities, not least-squares fits); the ball radius only guards
//! positivity of the coefficients under the square roots.

use thiserror::Error;

/// Errors from the pointwise decompositions.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("matrix at weighted distance {dist:.6} from Id is outside the radius-{radius:.6} ball")]
    OutOfBall { dist: f64, radius: f64 },
    #[error("non-finite input")]
    NonFinite,
}

/// A rational unit direction `(p1, p2) / q` with `p1^2 + p2^2 = q^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Direction {
    pub p: [i64; 2],
    pub q: i64,
}

impl Direction {
    pub const fn new(p1: i64, p2: i64, q: i64) -> Direction {
        assert!(q > 0 && p1 * p1 + p2 * p2 == q * q);
        Direction { p: [p1, p2], q }
    }

    /// Unit vector as floats.
    pub fn unit(&self) -> [f64; 2] {
        [self.p[0] as f64 / self.q as f64, self.p[1] as f64 / self.q as f64]
    }

    /// Counterclockwise perpendicular `(-eta2, eta1)`.
    pub fn perp(&self) -> Direction {
        Direction {
            p: [-self.p[1], self.p[0]],
            q: self.q,
        }
    }

    pub fn negate(&self) -> Direction {
        Direction {
            p: [-self.p[0], -self.p[1]],
            q: self.q,
        }
    }
}

/// The four velocity directions, in row order `j = 1..=4`.
pub const LAMBDA_U: [Direction; 4] = [
    Direction::new(3, 4, 5),
    Direction::new(4, 3, 5),
    Direction::new(3, -4, 5),
    Direction::new(4, -3, 5),
];

/// Perpendicular partner permutation on `LAMBDA_U`: `perp(eta_j)` equals
/// `+-eta_{PERP_PARTNER[j]}`, so the rank-one tensors satisfy
/// `perp(eta_j) (x) perp(eta_j) = eta_sigma(j) (x) eta_sigma(j)`.
pub const PERP_PARTNER: [usize; 4] = [3, 2, 1, 0];

/// The twelve combined-family directions, in row order `j = 5..=16`:
/// the diagonals, their negatives, then the coordinate axes.
pub const LAMBDA_B: [Direction; 12] = [
    Direction::new(3, 4, 5),
    Direction::new(4, 3, 5),
    Direction::new(3, -4, 5),
    Direction::new(4, -3, 5),
    Direction::new(-3, -4, 5),
    Direction::new(-4, -3, 5),
    Direction::new(-3, 4, 5),
    Direction::new(-4, 3, 5),
    Direction::new(1, 0, 1),
    Direction::new(-1, 0, 1),
    Direction::new(0, 1, 1),
    Direction::new(0, -1, 1),
];

/// Which decomposition a cascade row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Velocity,
    Tracer,
}

/// One cascade row: its 1-based index, direction, and family.
#[derive(Debug, Clone, Copy)]
pub struct Row {
    pub j: usize,
    pub dir: Direction,
    pub family: Family,
}

/// Total number of cascade rows per level.
pub const ROW_COUNT: usize = 16;

/// The sixteen rows: velocity rows `j = 1..=4`, then tracer rows
/// `j = 5..=16`.
pub fn rows() -> [Row; ROW_COUNT] {
    let mut out = [Row {
        j: 0,
        dir: LAMBDA_U[0],
        family: Family::Velocity,
    }; ROW_COUNT];
    for (i, d) in LAMBDA_U.iter().enumerate() {
        out[i] = Row {
            j: i + 1,
            dir: *d,
            family: Family::Velocity,
        };
    }
    for (i, d) in LAMBDA_B.iter().enumerate() {
        out[4 + i] = Row {
            j: 5 + i,
            dir: *d,
            family: Family::Tracer,
        };
    }
    out
}

/// Symmetric 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 {
        xx: 1.0,
        xy: 0.0,
        yy: 1.0,
    };

    pub const ZERO: Sym2 = Sym2 {
        xx: 0.0,
        xy: 0.0,
        yy: 0.0,
    };

    /// Frobenius distance to the identity (the off-diagonal counts twice).
    pub fn dist_to_id(&self) -> f64 {
        let dx = self.xx - 1.0;
        let dy = self.yy - 1.0;
        (dx * dx + dy * dy + 2.0 * self.xy * self.xy).sqrt()
    }

    pub fn frobenius_norm(&self) -> f64 {
        (self.xx * self.xx + self.yy * self.yy + 2.0 * self.xy * self.xy).sqrt()
    }

    fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }
}

impl std::ops::Add for Sym2 {
    type Output = Sym2;
    fn add(self, r: Sym2) -> Sym2 {
        Sym2 {
            xx: self.xx + r.xx,
            xy: self.xy + r.xy,
            yy: self.yy + r.yy,
        }
    }
}

impl std::ops::Sub for Sym2 {
    type Output = Sym2;
    fn sub(self, r: Sym2) -> Sym2 {
        Sym2 {
            xx: self.xx - r.xx,
            xy: self.xy - r.xy,
            yy: self.yy - r.yy,
        }
    }
}

impl std::ops::Mul<f64> for Sym2 {
    type Output = Sym2;
    fn mul(self, a: f64) -> Sym2 {
        Sym2 {
            xx: self.xx * a,
            xy: self.xy * a,
            yy: self.yy * a,
        }
    }
}

/// Rank-one tensor `u (x) u` of a float direction.
pub fn rank_one(u: [f64; 2]) -> Sym2 {
    Sym2 {
        xx: u[0] * u[0],
        xy: u[0] * u[1],
        yy: u[1] * u[1],
    }
}

/// Rows of the minimal-Frobenius-norm right inverse of the map
/// `c -> sum_j c_j eta_j (x) eta_j`, written in the weighted coordinates
/// `(S_xx, S_yy, sqrt(2) S_xy)`. Exact rationals; every row has the same
/// norm, which sets the decomposition ball radius.
const L_ROWS: [[f64; 3]; 4] = [
    [-9.0 / 14.0, 8.0 / 7.0, SQRT_CROSS],
    [8.0 / 7.0, -9.0 / 14.0, SQRT_CROSS],
    [-9.0 / 14.0, 8.0 / 7.0, -SQRT_CROSS],
    [8.0 / 7.0, -9.0 / 14.0, -SQRT_CROSS],
];

const SQRT_CROSS: f64 = 25.0 * std::f64::consts::SQRT_2 / 96.0;

/// Squared norm of each right-inverse row, `337/196 + 625/4608`.
pub fn l_row_norm_sq() -> f64 {
    337.0 / 196.0 + 625.0 / 4608.0
}

/// Radius of the decomposition ball around the identity: inside it every
/// coefficient `c_j = 1/2 + <L_j, R - Id>` stays positive.
pub fn epsilon_u() -> f64 {
    0.5 / l_row_norm_sq().sqrt()
}

/// Radius used by the cascade amplitude maps; both decompositions share the
/// same binding row norm.
pub fn epsilon_star() -> f64 {
    epsilon_u()
}

fn weighted_coords(s: Sym2) -> [f64; 3] {
    [s.xx, s.yy, std::f64::consts::SQRT_2 * s.xy]
}

/// Decomposes a symmetric matrix near the identity over the velocity
/// directions: returns `c` with `sum_j c_j eta_j (x) eta_j = R` exactly and
/// `c_j = 1/2` at `R = Id`. Errors outside the open ball of radius
/// [`epsilon_u`], where positivity of the coefficients would be lost.
pub fn sym_decompose(r: Sym2) -> Result<[f64; 4], GeometryError> {
    if !r.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    let dist = r.dist_to_id();
    let radius = epsilon_u();
    if dist >= radius {
        return Err(GeometryError::OutOfBall { dist, radius });
    }
    let w = weighted_coords(r - Sym2::IDENTITY);
    let mut c = [0.0f64; 4];
    for (j, row) in L_ROWS.iter().enumerate() {
        c[j] = 0.5 + row[0] * w[0] + row[1] * w[1] + row[2] * w[2];
        debug_assert!(c[j] > 0.0);
    }
    Ok(c)
}

/// Velocity-row amplitudes `a_j = sqrt(c_sigma(j)(R))`, ordered like
/// `LAMBDA_U`; they satisfy
/// `sum_j a_j^2 perp(eta_j) (x) perp(eta_j) = R` exactly.
pub fn vel_amplitudes(r: Sym2) -> Result<[f64; 4], GeometryError> {
    let c = sym_decompose(r)?;
    let mut a = [0.0f64; 4];
    for j in 0..4 {
        a[j] = c[PERP_PARTNER[j]].sqrt();
    }
    Ok(a)
}

/// Output of [`tv_decompose`]: one coefficient per `LAMBDA_B` row plus the
/// pressure-like trace term.
#[derive(Debug, Clone, Copy)]
pub struct TvCoeffs {
    pub gamma: [f64; 12],
    pub pressure: f64,
}

/// Joint tracer-velocity decomposition. Given a flux vector `g` and a
/// symmetric matrix `R` in the decomposition ball, produces coefficients
/// over `LAMBDA_B` satisfying, exactly,
///
/// - `sum_xi Gamma_xi perp(xi)                      = g`
/// - `sum_xi Gamma_xi^2 perp(xi) (x) perp(xi) + p Id = R`
///
/// with `p = -(1 + |g|^2)`. The diagonal pairs carry equal coefficients
/// (their vector contributions cancel); the axis coefficients come from the
/// closed-form root pairs below, and the first axis coefficient is always
/// negative; signs are part of the identity.
pub fn tv_decompose(r: Sym2, g: [f64; 2]) -> Result<TvCoeffs, GeometryError> {
    if !(g[0].is_finite() && g[1].is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let c = sym_decompose(r)?;
    let m = 1.0 + g[0] * g[0] + g[1] * g[1];
    let s1 = (2.0 * m - g[0] * g[0]).sqrt();
    let s2 = (2.0 * m - g[1] * g[1]).sqrt();
    let alpha1 = (-g[0] - s1) / 2.0;
    let beta1 = (g[0] - s1) / 2.0;
    let alpha2 = (g[1] + s2) / 2.0;
    let beta2 = (s2 - g[1]) / 2.0;
    let mut gamma = [0.0f64; 12];
    for j in 0..4 {
        let a = c[PERP_PARTNER[j]].sqrt() / std::f64::consts::SQRT_2;
        gamma[j] = a;
        gamma[j + 4] = a;
    }
    gamma[8] = alpha2;
    gamma[9] = beta2;
    gamma[10] = alpha1;
    gamma[11] = beta1;
    Ok(TvCoeffs {
        gamma,
        pressure: -m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(rng: &mut impl RngCore) -> f64 {
        (rng.next_u64() >> 11) as f64 / 9007199254740992.0
    }

    fn random_ball_matrix(rng: &mut impl RngCore, radius: f64) -> Sym2 {
        // Uniform direction in weighted coordinates, uniform radius.
        let (a, b, c) = (
            uniform(rng) - 0.5,
            uniform(rng) - 0.5,
            uniform(rng) - 0.5,
        );
        let norm = (a * a + b * b + c * c).sqrt().max(1e-12);
        let scale = radius * uniform(rng) / norm;
        Sym2 {
            xx: 1.0 + a * scale,
            yy: 1.0 + b * scale,
            xy: c * scale / std::f64::consts::SQRT_2,
        }
    }

    #[test]
    fn lambda_u_tensors_sum_to_twice_identity() {
        let mut s = Sym2::ZERO;
        for d in LAMBDA_U {
            s = s + rank_one(d.unit());
        }
        assert!((s - Sym2::IDENTITY * 2.0).frobenius_norm() < 1e-15);
    }

    #[test]
    fn perp_partner_permutation_is_correct() {
        for (j, d) in LAMBDA_U.iter().enumerate() {
            let p = d.perp();
            let partner = LAMBDA_U[PERP_PARTNER[j]];
            let same = p.p == partner.p;
            let negated = p.p == [-partner.p[0], -partner.p[1]];
            assert!(same || negated, "row {j}: {p:?} vs {partner:?}");
        }
    }

    #[test]
    fn ball_radius_matches_the_hand_derived_value() {
        assert!((l_row_norm_sq() - 1.8550214).abs() < 1e-6);
        assert!((epsilon_u() - 0.3671095).abs() < 1e-6);
    }

    #[test]
    fn right_inverse_rows_match_a_numerical_pseudoinverse() {
        // Solve (A A^T) X = A by Gaussian elimination in the weighted
        // coordinates and compare column by column with the frozen rationals.
        let cols: Vec<[f64; 3]> = LAMBDA_U
            .iter()
            .map(|d| weighted_coords(rank_one(d.unit())))
            .collect();
        let mut aat = [[0.0f64; 3]; 3];
        for col in &cols {
            for r in 0..3 {
                for c in 0..3 {
                    aat[r][c] += col[r] * col[c];
                }
            }
        }
        for (j, col) in cols.iter().enumerate() {
            // Solve aat * x = col.
            let mut m = [[0.0f64; 4]; 3];
            for r in 0..3 {
                m[r][..3].copy_from_slice(&aat[r]);
                m[r][3] = col[r];
            }
            for p in 0..3 {
                let pivot = (p..3)
                    .max_by(|&a, &b| m[a][p].abs().total_cmp(&m[b][p].abs()))
                    .unwrap();
                m.swap(p, pivot);
                for r in 0..3 {
                    if r != p {
                        let f = m[r][p] / m[p][p];
                        for c in p..4 {
                            m[r][c] -= f * m[p][c];
                        }
                    }
                }
            }
            for c in 0..3 {
                let x = m[c][3] / m[c][c];
                assert!(
                    (x - L_ROWS[j][c]).abs() < 1e-12,
                    "L[{j}][{c}]: {x} vs {}",
                    L_ROWS[j][c]
                );
            }
        }
    }

    #[test]
    fn sym_decompose_reconstructs_exactly_across_the_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(1001);
        for _ in 0..1000 {
            let r = random_ball_matrix(&mut rng, epsilon_u() * 0.5);
            let c = sym_decompose(r).unwrap();
            let mut s = Sym2::ZERO;
            for (j, d) in LAMBDA_U.iter().enumerate() {
                assert!(c[j] > 0.0, "coefficient {j} not positive: {}", c[j]);
                s = s + rank_one(d.unit()) * c[j];
            }
            assert!((s - r).frobenius_norm() < 1e-14);
        }
    }

    #[test]
    fn sym_decompose_is_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r0 = random_ball_matrix(&mut rng, epsilon_u() * 0.3);
        let r1 = random_ball_matrix(&mut rng, epsilon_u() * 0.3);
        let c0 = sym_decompose(r0).unwrap();
        let c1 = sym_decompose(r1).unwrap();
        let mid = sym_decompose((r0 + r1) * 0.5).unwrap();
        for j in 0..4 {
            assert!((mid[j] - 0.5 * (c0[j] + c1[j])).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_ball_inputs_are_rejected_with_the_right_boundary() {
        let eps = epsilon_u();
        let inside = Sym2 {
            xx: 1.0 + 0.999 * eps,
            xy: 0.0,
            yy: 1.0,
        };
        let outside = Sym2 {
            xx: 1.0 + 1.001 * eps,
            xy: 0.0,
            yy: 1.0,
        };
        assert!(sym_decompose(inside).is_ok());
        assert!(matches!(
            sym_decompose(outside),
            Err(GeometryError::OutOfBall { .. })
        ));
    }

    #[test]
    fn vel_amplitudes_reconstruct_through_the_perp_tensors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2002);
        for _ in 0..300 {
            let r = random_ball_matrix(&mut rng, epsilon_u() * 0.5);
            let a = vel_amplitudes(r).unwrap();
            let mut s = Sym2::ZERO;
            for (j, d) in LAMBDA_U.iter().enumerate() {
                s = s + rank_one(d.perp().unit()) * (a[j] * a[j]);
            }
            assert!((s - r).frobenius_norm() < 1e-14);
        }
    }

    #[test]
    fn tv_frozen_example_centered() {
        // g = 0, R = Id: axis coefficients +-sqrt(2)/2, diagonals 1/2.
        let tv = tv_decompose(Sym2::IDENTITY, [0.0, 0.0]).unwrap();
        let h = std::f64::consts::SQRT_2 / 2.0;
        for j in 0..8 {
            assert!((tv.gamma[j] - 0.5).abs() < 1e-15);
        }
        assert!((tv.gamma[8] - h).abs() < 1e-15);
        assert!((tv.gamma[9] - h).abs() < 1e-15);
        assert!((tv.gamma[10] + h).abs() < 1e-15);
        assert!((tv.gamma[11] + h).abs() < 1e-15);
        assert!((tv.pressure + 1.0).abs() < 1e-15);
    }

    #[test]
    fn tv_frozen_example_unit_flux() {
        // g = (1, 0), R = Id: the first-axis pair is (1, 1) and the
        // second-axis pair is ((-1-sqrt 3)/2, (1-sqrt 3)/2).
        let tv = tv_decompose(Sym2::IDENTITY, [1.0, 0.0]).unwrap();
        let s3 = 3.0f64.sqrt();
        assert!((tv.gamma[8] - 1.0).abs() < 1e-15);
        assert!((tv.gamma[9] - 1.0).abs() < 1e-15);
        assert!((tv.gamma[10] - (-1.0 - s3) / 2.0).abs() < 1e-15);
        assert!((tv.gamma[11] - (1.0 - s3) / 2.0).abs() < 1e-15);
        assert!((tv.pressure + 2.0).abs() < 1e-15);
        // The first axis coefficient of the e2 pair is negative for every
        // input; the signs are load-bearing for the reconstruction.
        assert!(tv.gamma[10] < 0.0);
    }

    #[test]
    fn tv_reconstructs_vector_and_tensor_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3003);
        for _ in 0..1000 {
            let r = random_ball_matrix(&mut rng, epsilon_u() * 0.5);
            let g = [2.0 * (uniform(&mut rng) - 0.5), 2.0 * (uniform(&mut rng) - 0.5)];
            let tv = tv_decompose(r, g).unwrap();
            let mut vec_sum = [0.0f64; 2];
            let mut ten_sum = Sym2::ZERO;
            for (i, d) in LAMBDA_B.iter().enumerate() {
                let pu = d.perp().unit();
                vec_sum[0] += tv.gamma[i] * pu[0];
                vec_sum[1] += tv.gamma[i] * pu[1];
                ten_sum = ten_sum + rank_one(pu) * (tv.gamma[i] * tv.gamma[i]);
            }
            assert!((vec_sum[0] - g[0]).abs() < 1e-13);
            assert!((vec_sum[1] - g[1]).abs() < 1e-13);
            let with_p = ten_sum + Sym2::IDENTITY * tv.pressure;
            assert!((with_p - r).frobenius_norm() < 1e-13);
        }
    }

    #[test]
    fn tv_is_smooth_inside_the_ball() {
        // Centered second differences of a nonlinear output component shrink
        // by a factor of ~4 when the step halves.
        let dr = Sym2 {
            xx: 0.04,
            xy: -0.03,
            yy: 0.02,
        };
        let dg = [0.05, -0.07];
        let eval = |h: f64| {
            let r = Sym2::IDENTITY + dr * h;
            let g = [dg[0] * h, dg[1] * h];
            tv_decompose(r, g).unwrap().gamma[10]
        };
        let second = |h: f64| eval(h) - 2.0 * eval(0.0) + eval(-h);
        let ratio = second(0.2) / second(0.1);
        assert!(
            (ratio - 4.0).abs() < 0.2,
            "second-difference ratio {ratio} not ~4"
        );
    }
}
