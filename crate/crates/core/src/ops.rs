//! Exact Fourier-multiplier operators on spectral fields.
//!
//! Every operator here acts mode by mode on integer frequencies `k`, so
//! operator identities such as `div D = lap P` hold to floating-point
//! roundoff with no discretization error. Inverse-Laplacian-type multipliers
//! send the `k = 0` mode to zero; the Leray projection passes it through
//! unchanged.

use num_complex::Complex64;
use once_cell::sync::Lazy;
use thiserror::Error;

use crate::field::{Field, FieldError, Rank, Space, SYM_XX, SYM_XY, SYM_YY};

/// Errors from operator application.
#[derive(Debug, Error)]
pub enum OpsError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("evolution time must be >= 0 and finite, got {0}")]
    BadTime(f64),
    #[error("length scale must be >= 0 and finite, got {0}")]
    BadScale(f64),
    #[error("band center must be > 0 and finite, got {0}")]
    BadBand(f64),
}

fn split2(data: &mut [Complex64]) -> (&mut [Complex64], &mut [Complex64]) {
    let n = data.len() / 2;
    data.split_at_mut(n)
}

fn split3(data: &mut [Complex64]) -> (&mut [Complex64], &mut [Complex64], &mut [Complex64]) {
    let n = data.len() / 3;
    let (a, rest) = data.split_at_mut(n);
    let (b, c) = rest.split_at_mut(n);
    (a, b, c)
}

/// Applies `m(|k|^2)` to every component.
fn radial_multiplier(f: &Field, m: impl Fn(f64) -> f64) -> Result<Field, OpsError> {
    f.expect_space(Space::Spectral)?;
    let g = f.grid().clone();
    let mut out = f.clone();
    let mut row_m = vec![0.0f64; g.nx()];
    for c in 0..f.rank().ncomp() {
        let dst = out.comp_mut(c);
        for iy in 0..g.ny() {
            let k2 = g.freq_y(iy) as f64;
            for (ix, slot) in row_m.iter_mut().enumerate() {
                let k1 = g.freq_x(ix) as f64;
                *slot = m(k1 * k1 + k2 * k2);
            }
            for ix in 0..g.nx() {
                dst[g.index(ix, iy)] *= row_m[ix];
            }
        }
    }
    Ok(out)
}

/// Heat semigroup `exp(t lap)`.
pub fn heat(f: &Field, t: f64) -> Result<Field, OpsError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(OpsError::BadTime(t));
    }
    radial_multiplier(f, |k2| (-k2 * t).exp())
}

/// Laplacian, multiplier `-|k|^2`.
pub fn laplacian(f: &Field) -> Result<Field, OpsError> {
    radial_multiplier(f, |k2| -k2)
}

/// Inverse Laplacian, multiplier `-1/|k|^2`, zero on the mean mode.
pub fn inv_laplacian(f: &Field) -> Result<Field, OpsError> {
    radial_multiplier(f, |k2| if k2 == 0.0 { 0.0 } else { -1.0 / k2 })
}

/// Gaussian mollifier at scale `ell`, multiplier `exp(-|k|^2 ell^2 / 2)`.
pub fn mollify(f: &Field, ell: f64) -> Result<Field, OpsError> {
    if !(ell >= 0.0 && ell.is_finite()) {
        return Err(OpsError::BadScale(ell));
    }
    radial_multiplier(f, |k2| (-0.5 * k2 * ell * ell).exp())
}

/// Gradient of a scalar, `(i k1 c, i k2 c)`.
pub fn grad(f: &Field) -> Result<Field, OpsError> {
    f.expect_rank(Rank::Scalar)?;
    f.expect_space(Space::Spectral)?;
    let g = f.grid().clone();
    let mut out = Field::zeros(&g, Rank::Vector, Space::Spectral);
    let src = f.comp(0);
    let (o1, o2) = split2(out.data_mut());
    for iy in 0..g.ny() {
        let k2 = g.freq_y(iy) as f64;
        for ix in 0..g.nx() {
            let k1 = g.freq_x(ix) as f64;
            let idx = g.index(ix, iy);
            let ic = Complex64::new(-src[idx].im, src[idx].re);
            o1[idx] = k1 * ic;
            o2[idx] = k2 * ic;
        }
    }
    Ok(out)
}

/// Divergence: vector to scalar `i k . f`, or symmetric tensor to vector
/// `(div T)_a = i sum_b k_b T_ab`.
pub fn div(f: &Field) -> Result<Field, OpsError> {
    f.expect_space(Space::Spectral)?;
    let g = f.grid().clone();
    match f.rank() {
        Rank::Vector => {
            let mut out = Field::zeros(&g, Rank::Scalar, Space::Spectral);
            let (f1, f2) = (f.comp(0), f.comp(1));
            let dst = out.comp_mut(0);
            for iy in 0..g.ny() {
                let k2 = g.freq_y(iy) as f64;
                for ix in 0..g.nx() {
                    let k1 = g.freq_x(ix) as f64;
                    let idx = g.index(ix, iy);
                    let s = k1 * f1[idx] + k2 * f2[idx];
                    dst[idx] = Complex64::new(-s.im, s.re);
                }
            }
            Ok(out)
        }
        Rank::SymTensor => {
            let mut out = Field::zeros(&g, Rank::Vector, Space::Spectral);
            let (txx, txy, tyy) = (f.comp(SYM_XX), f.comp(SYM_XY), f.comp(SYM_YY));
            let (o1, o2) = split2(out.data_mut());
            for iy in 0..g.ny() {
                let k2 = g.freq_y(iy) as f64;
                for ix in 0..g.nx() {
                    let k1 = g.freq_x(ix) as f64;
                    let idx = g.index(ix, iy);
                    let s1 = k1 * txx[idx] + k2 * txy[idx];
                    let s2 = k1 * txy[idx] + k2 * tyy[idx];
                    o1[idx] = Complex64::new(-s1.im, s1.re);
                    o2[idx] = Complex64::new(-s2.im, s2.re);
                }
            }
            Ok(out)
        }
        Rank::Scalar => Err(OpsError::Field(FieldError::RankMismatch {
            expected: Rank::Vector,
            got: Rank::Scalar,
        })),
    }
}

/// Symmetric gradient `(grad (x) f + f (x) grad) / 2` of a vector field.
pub fn sym_grad(f: &Field) -> Result<Field, OpsError> {
    f.expect_rank(Rank::Vector)?;
    f.expect_space(Space::Spectral)?;
    let g = f.grid().clone();
    let mut out = Field::zeros(&g, Rank::SymTensor, Space::Spectral);
    let (f1, f2) = (f.comp(0), f.comp(1));
    let (oxx, oxy, oyy) = split3(out.data_mut());
    for iy in 0..g.ny() {
        let k2 = g.freq_y(iy) as f64;
        for ix in 0..g.nx() {
            let k1 = g.freq_x(ix) as f64;
            let idx = g.index(ix, iy);
            let a = k1 * f1[idx];
            let b = 0.5 * (k1 * f2[idx] + k2 * f1[idx]);
            let c = k2 * f2[idx];
            oxx[idx] = Complex64::new(-a.im, a.re);
            oxy[idx] = Complex64::new(-b.im, b.re);
            oyy[idx] = Complex64::new(-c.im, c.re);
        }
    }
    Ok(out)
}

/// Leray projection onto divergence-free vector fields,
/// `P f = f - k (k . f) / |k|^2`; the mean mode passes through.
pub fn leray(f: &Field) -> Result<Field, OpsError> {
    f.expect_rank(Rank::Vector)?;
    f.expect_space(Space::Spectral)?;
    let g = f.grid().clone();
    let mut out = f.clone();
    let (o1, o2) = split2(out.data_mut());
    for iy in 0..g.ny() {
        let k2 = g.freq_y(iy) as f64;
        for ix in 0..g.nx() {
            let k1 = g.freq_x(ix) as f64;
            let kk = k1 * k1 + k2 * k2;
            if kk == 0.0 {
                continue;
            }
            let idx = g.index(ix, iy);
            let kdotf = (k1 * o1[idx] + k2 * o2[idx]) / kk;
            o1[idx] -= k1 * kdotf;
            o2[idx] -= k2 * kdotf;
        }
    }
    Ok(out)
}

/// Adds `coeff * s * Id` to a symmetric tensor field (spectral, pointwise in
/// modes), where `s` is a scalar field.
fn add_scalar_diag(t: &mut Field, s: &Field, coeff: f64) {
    let n = t.grid().len();
    for i in 0..n {
        let v = coeff * s.comp(0)[i];
        t.comp_mut(SYM_XX)[i] += v;
        t.comp_mut(SYM_YY)[i] += v;
    }
}

/// Stress operator `D f = 2 sym_grad f - 2 (div f) Id`.
pub fn op_d(f: &Field) -> Result<Field, OpsError> {
    let mut out = sym_grad(f)?;
    out.scale(2.0);
    let dv = div(f)?;
    add_scalar_diag(&mut out, &dv, -2.0);
    Ok(out)
}

/// Modified stress operator `Dt f = 2 sym_grad f - (div f) Id`, which
/// satisfies `div Dt = lap` exactly.
pub fn op_d_tilde(f: &Field) -> Result<Field, OpsError> {
    let mut out = sym_grad(f)?;
    out.scale(2.0);
    let dv = div(f)?;
    add_scalar_diag(&mut out, &dv, -1.0);
    Ok(out)
}

/// Order-minus-one stress inverse `R f = inv_lap Dt f`; `div R = P` on
/// mean-zero fields.
pub fn op_r(f: &Field) -> Result<Field, OpsError> {
    inv_laplacian(&op_d_tilde(f)?)
}

/// Tensor-to-tensor projection `Q T = 2 inv_lap sym_grad P div T`.
pub fn op_q(t: &Field) -> Result<Field, OpsError> {
    t.expect_rank(Rank::SymTensor)?;
    let mut out = inv_laplacian(&sym_grad(&leray(&div(t)?)?)?)?;
    out.scale(2.0);
    Ok(out)
}

/// Scalar potential gradient `R1 f = inv_lap grad f`; `div R1 = Id` on
/// mean-zero scalars.
pub fn op_r1(f: &Field) -> Result<Field, OpsError> {
    f.expect_rank(Rank::Scalar)?;
    inv_laplacian(&grad(f)?)
}

// ---- Littlewood-Paley profile ----

/// Transition integrand `exp(-1/(t(1-t)))`; vanishes to all orders at both
/// endpoints, so its normalized primitive is a C-infinity step.
fn bump(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (t * (1.0 - t))).exp()
    }
}

struct StepTable {
    h: f64,
    val: Vec<f64>,
    total: f64,
}

/// Cumulative Simpson table of `bump` on 4096 subintervals; cubic Hermite
/// between nodes using the exact integrand as slope data.
static STEP: Lazy<StepTable> = Lazy::new(|| {
    let n = 4096usize;
    let h = 1.0 / n as f64;
    let mut val = vec![0.0f64; n + 1];
    for i in 0..n {
        let a = i as f64 * h;
        let piece = h / 6.0 * (bump(a) + 4.0 * bump(a + 0.5 * h) + bump(a + h));
        val[i + 1] = val[i] + piece;
    }
    let total = val[n];
    StepTable { h, val, total }
});

impl StepTable {
    fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s >= 1.0 {
            return 1.0;
        }
        let n = self.val.len() - 1;
        let i = ((s / self.h) as usize).min(n - 1);
        let t0 = i as f64 * self.h;
        let u = (s - t0) / self.h;
        let (p0, p1) = (self.val[i], self.val[i + 1]);
        let m0 = self.h * bump(t0);
        let m1 = self.h * bump(t0 + self.h);
        let u2 = u * u;
        let u3 = u2 * u;
        let v = p0 * (2.0 * u3 - 3.0 * u2 + 1.0)
            + m0 * (u3 - 2.0 * u2 + u)
            + p1 * (-2.0 * u3 + 3.0 * u2)
            + m1 * (u3 - u2);
        v / self.total
    }
}

/// C-infinity step: 0 for `s <= 0`, 1 for `s >= 1`, strictly monotone
/// between.
pub fn smooth_step(s: f64) -> f64 {
    STEP.eval(s)
}

/// Low-frequency profile: 1 on `[0, 4/3]`, 0 on `[3/2, inf)`, a normalized
/// C-infinity step in between.
pub fn lp_chi(r: f64) -> f64 {
    if r <= 4.0 / 3.0 {
        1.0
    } else if r >= 1.5 {
        0.0
    } else {
        1.0 - STEP.eval((r - 4.0 / 3.0) * 6.0)
    }
}

/// Band profile `psi(r) = chi(r) - chi(2r)`, supported in `(2/3, 3/2)`.
/// The dyadic family telescopes exactly:
/// `chi(2r) + sum_{j>=0} psi(r / 2^j) = 1` for every `r >= 0`.
pub fn lp_psi(r: f64) -> f64 {
    lp_chi(r) - lp_chi(2.0 * r)
}

/// Low-pass projection, multiplier `chi(|k| / n)`.
pub fn lp_low(f: &Field, n: f64) -> Result<Field, OpsError> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(OpsError::BadBand(n));
    }
    radial_multiplier(f, |k2| lp_chi(k2.sqrt() / n))
}

/// Dyadic band projection, multiplier `psi(|k| / n)`.
pub fn lp_band(f: &Field, n: f64) -> Result<Field, OpsError> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(OpsError::BadBand(n));
    }
    radial_multiplier(f, |k2| lp_psi(k2.sqrt() / n))
}

// ---- Duhamel mode integral ----

/// `integral_0^t exp(-mu (t-s)) exp(-lambda s) ds`, evaluated as
/// `(exp(-lambda t) - exp(-mu t)) / (mu - lambda)` away from confluence and
/// by a 3-term series in `z = (mu - lambda) t` when `|z| < 1e-6`.
pub fn duhamel_mode_integral(mu: f64, lambda: f64, t: f64) -> f64 {
    let z = (mu - lambda) * t;
    if z.abs() < 1e-6 {
        (-mu * t).exp() * t * (1.0 + z / 2.0 + z * z / 6.0)
    } else {
        ((-lambda * t).exp() - (-mu * t).exp()) / (mu - lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn duhamel_frozen_values() {
        assert!((duhamel_mode_integral(1.0, 1.0, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!(
            (duhamel_mode_integral(2.0, 0.0, 1.0) - 0.5 * (1.0 - (-2.0f64).exp())).abs() < 1e-15
        );
        assert!((duhamel_mode_integral(0.0, 0.0, 7.0) - 7.0).abs() < 1e-15);
    }

    #[test]
    fn duhamel_series_branch_agrees_with_the_closed_form() {
        // Just inside the series branch the closed form still has ~10 good
        // digits, enough to cross-check the series at the same point.
        for &(mu, t) in &[(3.0, 0.5), (100.0, 0.01), (0.2, 2.0)] {
            let lambda = mu - 0.9e-6 / t;
            let series = duhamel_mode_integral(mu, lambda, t);
            let closed = ((-lambda * t).exp() - (-mu * t).exp()) / (mu - lambda);
            assert!(
                (series - closed).abs() < 1e-9 * series.abs(),
                "branch mismatch: {series} vs {closed}"
            );
        }
    }

    #[test]
    fn chi_plateau_support_and_psi_partition() {
        assert_eq!(lp_chi(0.0), 1.0);
        assert_eq!(lp_chi(4.0 / 3.0), 1.0);
        assert_eq!(lp_chi(1.5), 0.0);
        assert_eq!(lp_chi(7.3), 0.0);
        let mid = lp_chi(1.4166666);
        assert!(mid > 0.0 && mid < 1.0);
        assert!(lp_psi(0.5) == 0.0 && lp_psi(2.0) == 0.0);
        // Exact telescoping partition of unity.
        for &r in &[0.0, 0.3, 0.75, 0.9, 1.0, 1.41, 2.0, 77.3, 1e6] {
            let mut sum = lp_chi(2.0 * r);
            let mut n = 1.0;
            while n <= 4.0 * r.max(1.0) {
                sum += lp_psi(r / n);
                n *= 2.0;
            }
            assert!(
                (sum - 1.0).abs() < 1e-15,
                "partition failed at r = {r}: {sum}"
            );
        }
    }

    #[test]
    fn chi_is_monotone_on_the_transition() {
        let mut prev = 1.0;
        for i in 0..=1000 {
            let r = 4.0 / 3.0 + (i as f64 / 1000.0) / 6.0;
            let v = lp_chi(r);
            assert!(v <= prev + 1e-15, "chi not monotone at r = {r}");
            prev = v;
        }
    }

    #[test]
    fn grad_and_div_match_plane_wave_calculus() {
        let g = Grid::square(32).unwrap();
        // f = sin(3 x1 - 2 x2): grad f = (3, -2) cos(...), lap f = -13 f.
        let f = Field::from_fn_scalar(&g, |x1, x2| (3.0 * x1 - 2.0 * x2).sin()).to_spectral();
        let gf = grad(&f).unwrap().to_physical();
        let lf = laplacian(&f).unwrap().to_physical();
        let fp = f.to_physical();
        for iy in 0..g.ny() {
            for ix in 0..g.nx() {
                let [x1, x2] = g.point(ix, iy);
                let c = (3.0 * x1 - 2.0 * x2).cos();
                assert!((gf.value(0, ix, iy) - 3.0 * c).abs() < 1e-10);
                assert!((gf.value(1, ix, iy) + 2.0 * c).abs() < 1e-10);
                assert!((lf.value(0, ix, iy) + 13.0 * fp.value(0, ix, iy)).abs() < 1e-10);
            }
        }
        let back = div(&grad(&f).unwrap()).unwrap();
        let lap = laplacian(&f).unwrap();
        assert!(back.mode_distance(&lap) < 1e-13);
    }

    #[test]
    fn leray_is_an_idempotent_projection_with_zero_divergence() {
        let g = Grid::square(64).unwrap();
        let f = Field::random_smooth(&g, Rank::Vector, 11, 12.0);
        let pf = leray(&f).unwrap();
        let ppf = leray(&pf).unwrap();
        assert!(pf.mode_distance(&ppf) < 1e-13);
        assert!(div(&pf).unwrap().sup_norm() < 1e-11);
        // Mean mode passes through.
        let mut c = Field::zeros(&g, Rank::Vector, Space::Spectral);
        c.set_mode(0, 0, 0, Complex64::new(2.0, 0.0));
        c.set_mode(1, 0, 0, Complex64::new(-1.0, 0.0));
        assert!(leray(&c).unwrap().mode_distance(&c) == 0.0);
    }

    #[test]
    fn heat_at_zero_time_is_identity_and_contracts() {
        let g = Grid::square(32).unwrap();
        let f = Field::random_smooth(&g, Rank::Scalar, 5, 8.0);
        assert_eq!(heat(&f, 0.0).unwrap().mode_distance(&f), 0.0);
        let h = heat(&f, 0.1).unwrap();
        assert!(h.l2_norm_spectral() < f.l2_norm_spectral());
        assert!(heat(&f, -1.0).is_err());
    }

    #[test]
    fn inv_laplacian_kills_the_mean_and_inverts_elsewhere() {
        let g = Grid::square(16).unwrap();
        let mut f = Field::random_smooth(&g, Rank::Scalar, 9, 4.0);
        f.set_mode(0, 0, 0, Complex64::new(3.0, 0.0));
        let li = laplacian(&inv_laplacian(&f).unwrap()).unwrap();
        let mut expect = f.clone();
        expect.set_mode(0, 0, 0, Complex64::default());
        assert!(li.mode_distance(&expect) < 1e-12);
    }
}
