//! Empirical probes of the construction's quantitative behavior: power-law
//! rate scans with an analytic envelope extension, borderline space-time
//! norm quadrature, intermittency ratios against mask measures, and the
//! heat-commutator bound.
//!
//! The rate machinery works throughout in log coordinates. Envelope levels
//! carry per-row log frequencies and amplitude prefactors, so the same scan
//! accepts built levels (exact sampled fields) and analytic levels whose
//! frequencies exist only as logarithms.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use thiserror::Error;

use std::collections::BTreeMap;

use crate::cascade::{principal_quartet, CascadeError, CascadeLevel};
use crate::field::{self, Field, FieldError, Rank, Space};
use crate::geometry::{rows, Family, ROW_COUNT};
use crate::ladder::LadderParams;
use crate::ops::{self, OpsError};

/// Errors from probe evaluation.
#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("rate fit needs at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("rate fit needs 2 decades of time span, got {got:.3}")]
    InsufficientSpan { got: f64 },
    #[error("sample times must be finite, strictly increasing, and produce finite log values")]
    BadTimes,
    #[error("time window [{lo:e}, {hi:e}] is not positive and ordered")]
    BadWindow { lo: f64, hi: f64 },
    #[error("log-grid quadrature needs at least 4 samples per decade, got {0}")]
    BadSampleRate(usize),
    #[error("level has no active rows")]
    EmptyLevel,
    #[error("envelope rows need the fixed direction table ({ROW_COUNT} rows), got {0}")]
    BadRowCount(usize),
    #[error("norm exponent must be at least 1, got {0}")]
    BadExponent(f64),
    #[error("interior order m = {m} must be at least n + 3 = {min}")]
    BadProbeOrder { m: u32, min: u32 },
    #[error("probe mode must be nonzero")]
    ZeroMode,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Ops(#[from] OpsError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
}

// ---- log-log fitting ----

/// Least-squares power law through log-log samples. Times and values are
/// stored as natural logs so that asymptotic-mode magnitudes, which exceed
/// every float, stay representable.
#[derive(Debug, Clone)]
pub struct RateFit {
    pub ln_times: Vec<f64>,
    pub ln_values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square of the log-space fit residuals.
    pub residual: f64,
    /// Standard error of the slope estimate.
    pub slope_stderr: f64,
}

/// Fits `ln value = intercept + slope ln t` by centered least squares.
/// Requires at least 6 samples spanning at least 2 decades in `t`.
pub fn fit_power_law(ln_times: &[f64], ln_values: &[f64]) -> Result<RateFit, ProbeError> {
    let n = ln_times.len();
    if n < 6 || ln_values.len() != n {
        return Err(ProbeError::TooFewSamples {
            need: 6,
            got: n.min(ln_values.len()),
        });
    }
    if ln_times
        .iter()
        .chain(ln_values.iter())
        .any(|v| !v.is_finite())
    {
        return Err(ProbeError::BadTimes);
    }
    let span = ln_times[n - 1] - ln_times[0];
    let decades = span / std::f64::consts::LN_10;
    if decades < 2.0 {
        return Err(ProbeError::InsufficientSpan { got: decades });
    }
    let xbar = ln_times.iter().sum::<f64>() / n as f64;
    let ybar = ln_values.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in ln_times.iter().zip(ln_values) {
        sxx += (x - xbar) * (x - xbar);
        sxy += (x - xbar) * (y - ybar);
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let mut ss_res = 0.0;
    for (&x, &y) in ln_times.iter().zip(ln_values) {
        let r = y - intercept - slope * x;
        ss_res += r * r;
    }
    Ok(RateFit {
        ln_times: ln_times.to_vec(),
        ln_values: ln_values.to_vec(),
        slope,
        intercept,
        residual: (ss_res / n as f64).sqrt(),
        slope_stderr: (ss_res / (n - 2) as f64 / sxx).sqrt(),
    })
}

/// Plain centered linear fit, for regressions that are already linear in
/// the abscissa.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - xbar) * (x - xbar);
        sxy += (x - xbar) * (y - ybar);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, ybar - slope * xbar)
}

fn logsumexp(terms: &[f64]) -> f64 {
    let m = terms.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    let sum: f64 = terms.iter().map(|&t| (t - m).exp()).sum();
    m + sum.ln()
}

// ---- envelope levels ----

/// Log time in split representation `hi + lo`. Asymptotic-mode log times
/// reach magnitudes near 1e43, where a plain f64 carries absolute rounding
/// noise around 1e27; a row-peak time stored as `(-2 ln N, -ln 2)` keeps
/// the sample's placement relative to the row exact, which is what the
/// decay factor `exp(2 ln N + ln t)` depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LnTime {
    pub hi: f64,
    pub lo: f64,
}

impl LnTime {
    /// Plain log time with no split correction.
    pub fn new(ln_t: f64) -> LnTime {
        LnTime { hi: ln_t, lo: 0.0 }
    }

    /// The peak time `ln(1 / (2 N^2))` of a row with log frequency `ln_n`,
    /// split so that the row's own decay evaluates exactly.
    pub fn row_peak(ln_n: f64) -> LnTime {
        LnTime {
            hi: -2.0 * ln_n,
            lo: -LN_2,
        }
    }

    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

/// Which field of a level an envelope quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeComponent {
    Velocity,
    Tracer,
}

/// One oscillatory row of an envelope level: the log of its synthesis
/// frequency and the sup-norm prefactors its velocity and tracer pieces
/// carry in front of `N exp(-N^2 t)`.
#[derive(Debug, Clone, Copy)]
pub struct EnvelopeRow {
    pub ln_n: f64,
    pub velocity_amp: f64,
    pub tracer_amp: f64,
}

impl EnvelopeRow {
    fn amp(&self, component: EnvelopeComponent) -> f64 {
        match component {
            EnvelopeComponent::Velocity => self.velocity_amp,
            EnvelopeComponent::Tracer => self.tracer_amp,
        }
    }
}

/// Per-level row data feeding the analytic envelope proxy
/// `sum_j N_j^(1+order) exp(-N_j^2 t) amp_j`.
#[derive(Debug, Clone)]
pub struct LevelEnvelope {
    pub k: usize,
    pub rows: Vec<EnvelopeRow>,
}

impl LevelEnvelope {
    /// Ideal-formula envelope with unit amplitudes: row frequencies follow
    /// `ln N = b^(k + (j-1)/J) ln A + ln m*` over the fixed direction
    /// table, velocity prefactors on every row and tracer prefactors on
    /// the tracer rows.
    pub fn ideal(params: &LadderParams, k: usize) -> Result<LevelEnvelope, ProbeError> {
        if params.rows != ROW_COUNT {
            return Err(ProbeError::BadRowCount(params.rows));
        }
        let ln_a = params.a.ln();
        let ln_mstar = (params.m_star as f64).ln();
        let table = rows();
        let rows = (0..ROW_COUNT)
            .map(|idx| {
                let e = params.b.powf(k as f64 + idx as f64 / ROW_COUNT as f64);
                EnvelopeRow {
                    ln_n: e * ln_a + ln_mstar,
                    velocity_amp: 1.0,
                    tracer_amp: if matches!(table[idx].family, Family::Tracer) {
                        1.0
                    } else {
                        0.0
                    },
                }
            })
            .collect();
        Ok(LevelEnvelope { k, rows })
    }

    /// Measured envelope of a built level. Rows sharing a synthesis
    /// frequency also share the decay weight exactly, so they are grouped:
    /// the velocity prefactor of a frequency is the sup norm of the
    /// Laplacian of its rows' combined vector potential
    /// `sum_j psi_j perp(eta_j)`, the tracer prefactor the same for the
    /// scalar sum, which is exactly what multiplies `N exp(-N^2 t)` in the
    /// principal fields. Frequencies whose potentials vanish are dropped.
    pub fn from_level(level: &CascadeLevel) -> Result<LevelEnvelope, ProbeError> {
        let table = rows();
        let grid = level.potentials.flow_potential(0).grid().clone();
        let mut groups: BTreeMap<u64, (Field, Field)> = BTreeMap::new();
        for idx in 0..ROW_COUNT {
            let np = level.potentials.n_phase[idx];
            let (vel, tr) = groups.entry(np).or_insert_with(|| {
                (
                    Field::zeros(&grid, Rank::Vector, Space::Spectral),
                    Field::zeros(&grid, Rank::Scalar, Space::Spectral),
                )
            });
            let flow = level.potentials.flow_potential(idx);
            let perp = table[idx].dir.perp().unit();
            for c in 0..2 {
                for (d, s) in vel.comp_mut(c).iter_mut().zip(flow.comp(0)) {
                    *d += *s * perp[c];
                }
            }
            if matches!(table[idx].family, Family::Tracer) {
                tr.axpy(1.0, level.potentials.tracer_potential(idx - 4));
            }
        }
        let mut out = Vec::new();
        for (np, (vel, tr)) in &groups {
            let velocity_amp = if vel.sup_norm() > 0.0 {
                ops::laplacian(vel)?.sup_norm()
            } else {
                0.0
            };
            let tracer_amp = if tr.sup_norm() > 0.0 {
                ops::laplacian(tr)?.sup_norm()
            } else {
                0.0
            };
            if velocity_amp > 0.0 || tracer_amp > 0.0 {
                out.push(EnvelopeRow {
                    ln_n: (*np as f64).ln(),
                    velocity_amp,
                    tracer_amp,
                });
            }
        }
        if out.is_empty() {
            return Err(ProbeError::EmptyLevel);
        }
        Ok(LevelEnvelope {
            k: level.k,
            rows: out,
        })
    }

    /// Peak times `ln(1 / (2 N^2))` of the rows active in `component`,
    /// ascending and deduplicated.
    pub fn peak_ln_times(&self, component: EnvelopeComponent) -> Vec<LnTime> {
        let mut out: Vec<LnTime> = self
            .rows
            .iter()
            .filter(|r| r.amp(component) > 0.0)
            .map(|r| LnTime::row_peak(r.ln_n))
            .collect();
        out.sort_by(|a, b| a.value().partial_cmp(&b.value()).expect("finite peaks"));
        out.dedup_by(|a, b| a.value() == b.value());
        out
    }
}

/// Weighted log terms `(1 + order) ln N + weight ln t + ln amp - N^2 t`
/// of every active row, evaluated in split arithmetic so that row-peak
/// sample times stay exact at asymptotic magnitudes.
fn ln_terms(
    levels: &[LevelEnvelope],
    component: EnvelopeComponent,
    order: u32,
    lt: LnTime,
    weight: f64,
) -> Vec<f64> {
    let mut terms = Vec::new();
    for level in levels {
        for row in &level.rows {
            let amp = row.amp(component);
            if amp <= 0.0 {
                continue;
            }
            let rate = (2.0 * row.ln_n + lt.hi) + lt.lo;
            let decay = if rate > 700.0 {
                f64::INFINITY
            } else {
                rate.exp()
            };
            let scale = ((1 + order) as f64 * row.ln_n + weight * lt.hi) + weight * lt.lo;
            terms.push(scale + amp.ln() - decay);
        }
    }
    terms
}

/// Log of the envelope proxy `sum N^(1+order) exp(-N^2 t) amp` over the
/// given levels at log time `lt`; `order` 0 gives the sup-norm proxy and
/// 1 the gradient proxy. Negative infinity when every term vanishes.
pub fn ln_envelope(
    levels: &[LevelEnvelope],
    component: EnvelopeComponent,
    order: u32,
    lt: LnTime,
) -> f64 {
    logsumexp(&ln_terms(levels, component, order, lt, 0.0))
}

// ---- rate scans ----

/// One level's contribution to a rate scan: a built level sampled exactly,
/// or an analytic envelope evaluated in closed form.
pub enum RateSource<'a> {
    Built(&'a CascadeLevel),
    Analytic(LevelEnvelope),
}

impl RateSource<'_> {
    fn envelope(&self) -> Result<LevelEnvelope, ProbeError> {
        match self {
            RateSource::Built(level) => LevelEnvelope::from_level(level),
            RateSource::Analytic(env) => Ok(env.clone()),
        }
    }
}

/// Upper and lower constants of a `sqrt(t)`-weighted sup-norm scan:
/// `upper` is the largest weighted total over all samples, `lower` the
/// smallest of the per-source weighted peaks, so every source attains at
/// least `lower` at its own scale while the combined envelope never
/// exceeds `upper`.
#[derive(Debug, Clone, Copy)]
pub struct EnvelopeBand {
    pub upper: f64,
    pub lower: f64,
}

/// The four power-law fits of one rate scan plus the envelope bands of the
/// two sup-norm series, weighted by `sqrt(t)`.
pub struct RateScan {
    pub velocity: RateFit,
    pub velocity_gradient: RateFit,
    pub tracer: RateFit,
    pub tracer_gradient: RateFit,
    pub velocity_band: EnvelopeBand,
    pub tracer_band: EnvelopeBand,
}

/// Canonical sample times of a source list: the union of every row's peak
/// time `1 / (2 N^2)` in split log form, ascending.
pub fn rate_sample_times(sources: &[RateSource]) -> Result<Vec<LnTime>, ProbeError> {
    let mut out = Vec::new();
    for source in sources {
        let env = source.envelope()?;
        out.extend(env.peak_ln_times(EnvelopeComponent::Velocity));
        out.extend(env.peak_ln_times(EnvelopeComponent::Tracer));
    }
    out.sort_by(|a, b| a.value().partial_cmp(&b.value()).expect("finite peaks"));
    out.dedup_by(|a, b| a.value() == b.value());
    Ok(out)
}

fn band(per_source_weighted: &[Vec<f64>]) -> EnvelopeBand {
    let samples = per_source_weighted.first().map_or(0, Vec::len);
    let mut upper = f64::NEG_INFINITY;
    for i in 0..samples {
        let col: Vec<f64> = per_source_weighted.iter().map(|v| v[i]).collect();
        upper = upper.max(logsumexp(&col));
    }
    let lower = per_source_weighted
        .iter()
        .map(|v| v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
        .filter(|m| m.is_finite())
        .fold(f64::INFINITY, f64::min);
    EnvelopeBand {
        upper: if upper.is_finite() { upper.exp() } else { 0.0 },
        lower: if lower.is_finite() { lower.exp() } else { 0.0 },
    }
}

/// Scans the sup-norm and gradient sup-norm envelopes of the sources over
/// the given log times and fits power laws to all four series. Built
/// sources are sampled exactly through their principal fields; analytic
/// sources use the closed-form proxy. Per-sample totals combine sources by
/// summation in log space. Each fit uses only the samples at its own
/// component's row peaks: away from them a component sits on undamped
/// plateaus or collapses entirely, so those samples carry no rate
/// information.
pub fn rate_scan(sources: &[RateSource], lts: &[LnTime]) -> Result<RateScan, ProbeError> {
    if sources.is_empty() {
        return Err(ProbeError::EmptyLevel);
    }
    let ln_times: Vec<f64> = lts.iter().map(LnTime::value).collect();
    if ln_times.is_empty() || ln_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ProbeError::BadTimes);
    }
    let envelopes: Vec<LevelEnvelope> = sources
        .iter()
        .map(RateSource::envelope)
        .collect::<Result<_, _>>()?;
    let mut series: [Vec<f64>; 4] = Default::default();
    let mut weighted_v: Vec<Vec<f64>> = vec![Vec::new(); sources.len()];
    let mut weighted_h: Vec<Vec<f64>> = vec![Vec::new(); sources.len()];
    for &lt in lts {
        let mut terms: [Vec<f64>; 4] = Default::default();
        for (si, (source, env)) in sources.iter().zip(&envelopes).enumerate() {
            match source {
                RateSource::Built(level) => {
                    let q = principal_quartet(level, lt.value().exp())?;
                    let v = q.velocity.sup_norm();
                    let h = q.tracer.sup_norm();
                    terms[0].push(v.ln());
                    terms[1].push(gradient_sup(&q.velocity)?.ln());
                    terms[2].push(h.ln());
                    terms[3].push(gradient_sup(&q.tracer)?.ln());
                    weighted_v[si].push(v.ln() + 0.5 * lt.value());
                    weighted_h[si].push(h.ln() + 0.5 * lt.value());
                }
                RateSource::Analytic(_) => {
                    let env = std::slice::from_ref(env);
                    terms[0].push(ln_envelope(env, EnvelopeComponent::Velocity, 0, lt));
                    terms[1].push(ln_envelope(env, EnvelopeComponent::Velocity, 1, lt));
                    terms[2].push(ln_envelope(env, EnvelopeComponent::Tracer, 0, lt));
                    terms[3].push(ln_envelope(env, EnvelopeComponent::Tracer, 1, lt));
                    weighted_v[si].push(logsumexp(&ln_terms(
                        env,
                        EnvelopeComponent::Velocity,
                        0,
                        lt,
                        0.5,
                    )));
                    weighted_h[si].push(logsumexp(&ln_terms(
                        env,
                        EnvelopeComponent::Tracer,
                        0,
                        lt,
                        0.5,
                    )));
                }
            }
        }
        for (s, t) in series.iter_mut().zip(&terms) {
            s.push(logsumexp(t));
        }
    }
    let peak_values = |component: EnvelopeComponent| -> Vec<f64> {
        let mut out: Vec<f64> = envelopes
            .iter()
            .flat_map(|env| env.peak_ln_times(component))
            .map(|p| p.value())
            .collect();
        out.sort_by(|a, b| a.partial_cmp(b).expect("finite peaks"));
        out.dedup();
        out
    };
    let indices = |peaks: &[f64]| -> Vec<usize> {
        ln_times
            .iter()
            .enumerate()
            .filter(|(_, x)| {
                peaks
                    .binary_search_by(|p| p.partial_cmp(x).expect("finite peaks"))
                    .is_ok()
            })
            .map(|(i, _)| i)
            .collect()
    };
    let pick = |idx: &[usize], v: &[f64]| -> Vec<f64> { idx.iter().map(|&i| v[i]).collect() };
    let vel_idx = indices(&peak_values(EnvelopeComponent::Velocity));
    let tr_idx = indices(&peak_values(EnvelopeComponent::Tracer));
    let vel_x = pick(&vel_idx, &ln_times);
    let tr_x = pick(&tr_idx, &ln_times);
    Ok(RateScan {
        velocity: fit_power_law(&vel_x, &pick(&vel_idx, &series[0]))?,
        velocity_gradient: fit_power_law(&vel_x, &pick(&vel_idx, &series[1]))?,
        tracer: fit_power_law(&tr_x, &pick(&tr_idx, &series[2]))?,
        tracer_gradient: fit_power_law(&tr_x, &pick(&tr_idx, &series[3]))?,
        velocity_band: band(&weighted_v),
        tracer_band: band(&weighted_h),
    })
}

// ---- envelope validation ----

/// Comparison of the analytic envelope against the measured sup norms of
/// one built level over a log sweep bracketing every row's decay scale.
/// Peak ratios divide the peaks of the weighted curves (`sqrt(t)` for sup
/// norms, `t` for gradients); worst ratios take the largest pointwise
/// proxy-to-measured quotient over the sweep.
#[derive(Debug, Clone, Copy)]
pub struct EnvelopeValidation {
    pub k: usize,
    pub velocity_peak_ratio: f64,
    pub velocity_worst_ratio: f64,
    pub gradient_peak_ratio: f64,
    pub tracer_peak_ratio: f64,
    pub tracer_worst_ratio: f64,
    pub tracer_gradient_peak_ratio: f64,
}

/// Sweeps one built level and compares measured sup norms with the
/// analytic proxy built from its own measured row prefactors.
pub fn validate_envelope(
    level: &CascadeLevel,
    steps: usize,
) -> Result<EnvelopeValidation, ProbeError> {
    if steps < 2 {
        return Err(ProbeError::BadSampleRate(steps));
    }
    let env = LevelEnvelope::from_level(level)?;
    let levels = std::slice::from_ref(&env);
    let ln_n_lo = env
        .rows
        .iter()
        .map(|r| r.ln_n)
        .fold(f64::INFINITY, f64::min);
    let ln_n_hi = env
        .rows
        .iter()
        .map(|r| r.ln_n)
        .fold(f64::NEG_INFINITY, f64::max);
    let lt_lo = -(2.0 * ln_n_hi) + (0.01f64).ln();
    let lt_hi = -(2.0 * ln_n_lo) + (10.0f64).ln();

    let mut peaks = [f64::NEG_INFINITY; 8];
    let mut worst_v = 0.0f64;
    let mut worst_h = 0.0f64;
    for i in 0..=steps {
        let lt = lt_lo + (lt_hi - lt_lo) * i as f64 / steps as f64;
        let t = lt.exp();
        let q = principal_quartet(level, t)?;
        let measured = [
            q.velocity.sup_norm(),
            gradient_sup(&q.velocity)?,
            q.tracer.sup_norm(),
            gradient_sup(&q.tracer)?,
        ];
        let at = LnTime::new(lt);
        let proxy = [
            ln_envelope(levels, EnvelopeComponent::Velocity, 0, at).exp(),
            ln_envelope(levels, EnvelopeComponent::Velocity, 1, at).exp(),
            ln_envelope(levels, EnvelopeComponent::Tracer, 0, at).exp(),
            ln_envelope(levels, EnvelopeComponent::Tracer, 1, at).exp(),
        ];
        for s in 0..4 {
            let weight = if s % 2 == 0 { 0.5 } else { 1.0 };
            let w = (weight * lt).exp();
            peaks[2 * s] = peaks[2 * s].max(w * proxy[s]);
            peaks[2 * s + 1] = peaks[2 * s + 1].max(w * measured[s]);
        }
        if measured[0] > 0.0 {
            worst_v = worst_v.max(proxy[0] / measured[0]);
        }
        if measured[2] > 0.0 {
            worst_h = worst_h.max(proxy[2] / measured[2]);
        }
    }
    Ok(EnvelopeValidation {
        k: level.k,
        velocity_peak_ratio: peaks[0] / peaks[1],
        gradient_peak_ratio: peaks[2] / peaks[3],
        tracer_peak_ratio: peaks[4] / peaks[5],
        tracer_gradient_peak_ratio: peaks[6] / peaks[7],
        velocity_worst_ratio: worst_v,
        tracer_worst_ratio: worst_h,
    })
}

// ---- borderline norm quadrature ----

/// Cumulative borderline norms of one field family over a log time grid:
/// the `t^(-1/2) dt`-weighted L1 norm of the sup curve, the squared L2
/// norm in plain time, their sum, and the linear regression of that sum
/// against `ln(t / t_lo)`.
#[derive(Debug, Clone)]
pub struct CriticalCurve {
    pub ln_ratio: Vec<f64>,
    pub weighted_l1: Vec<f64>,
    pub l2_squared: Vec<f64>,
    pub combined: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

/// Borderline norm curves for a velocity and a tracer family, over the
/// log-time window `[lt_lo, lt_hi]`.
pub struct CriticalNormReport {
    pub lt_lo: f64,
    pub lt_hi: f64,
    pub velocity: CriticalCurve,
    pub tracer: CriticalCurve,
}

fn critical_curve<F>(
    mut ln_sup: F,
    lt_lo: f64,
    lt_hi: f64,
    nodes: usize,
) -> Result<CriticalCurve, ProbeError>
where
    F: FnMut(f64) -> Result<f64, ProbeError>,
{
    let step = (lt_hi - lt_lo) / nodes as f64;
    let integrands = |ls: f64, lt: f64| -> Result<(f64, f64), ProbeError> {
        let g1 = (ls + 0.5 * lt).exp();
        let g2 = (2.0 * ls + lt).exp();
        if ls.is_nan() || !g1.is_finite() || !g2.is_finite() {
            return Err(ProbeError::BadTimes);
        }
        Ok((g1, g2))
    };
    let mut ln_ratio = Vec::with_capacity(nodes);
    let mut weighted_l1 = Vec::with_capacity(nodes);
    let mut l2_squared = Vec::with_capacity(nodes);
    let mut combined = Vec::with_capacity(nodes);
    let (mut prev_g1, mut prev_g2) = integrands(ln_sup(lt_lo)?, lt_lo)?;
    let mut acc_l1 = 0.0;
    let mut acc_l2 = 0.0;
    for i in 1..=nodes {
        let lt = lt_lo + step * i as f64;
        let (g1, g2) = integrands(ln_sup(lt)?, lt)?;
        acc_l1 += 0.5 * (prev_g1 + g1) * step;
        acc_l2 += 0.5 * (prev_g2 + g2) * step;
        ln_ratio.push(lt - lt_lo);
        weighted_l1.push(acc_l1);
        l2_squared.push(acc_l2);
        combined.push(acc_l1 + acc_l2);
        prev_g1 = g1;
        prev_g2 = g2;
    }
    let (slope, intercept) = linear_fit(&ln_ratio, &combined);
    Ok(CriticalCurve {
        ln_ratio,
        weighted_l1,
        l2_squared,
        combined,
        slope,
        intercept,
    })
}

/// Computes the borderline space-time norms of two sup-value families by
/// trapezoid quadrature on a uniform log-time grid over `[lt_lo, lt_hi]`
/// and regresses the accumulated norm against `ln(t / t_lo)`. The closures
/// map a log time to the log of the sup value, so families whose scales
/// overflow physical time stay evaluable; the integrands
/// `exp(ln s + ln t / 2)` and `exp(2 ln s + ln t)` are order one near the
/// active scales.
pub fn critical_norm_scan<F, G>(
    ln_velocity_sup: F,
    ln_tracer_sup: G,
    lt_lo: f64,
    lt_hi: f64,
    per_decade: usize,
) -> Result<CriticalNormReport, ProbeError>
where
    F: FnMut(f64) -> Result<f64, ProbeError>,
    G: FnMut(f64) -> Result<f64, ProbeError>,
{
    if !(lt_lo.is_finite() && lt_hi.is_finite() && lt_hi > lt_lo) {
        return Err(ProbeError::BadWindow { lo: lt_lo, hi: lt_hi });
    }
    if per_decade < 4 {
        return Err(ProbeError::BadSampleRate(per_decade));
    }
    let decades = (lt_hi - lt_lo) / std::f64::consts::LN_10;
    let nodes = ((decades * per_decade as f64).ceil() as usize).max(2);
    Ok(CriticalNormReport {
        lt_lo,
        lt_hi,
        velocity: critical_curve(ln_velocity_sup, lt_lo, lt_hi, nodes)?,
        tracer: critical_curve(ln_tracer_sup, lt_lo, lt_hi, nodes)?,
    })
}

// ---- intermittency scans ----

/// One integrability exponent's curves for a level: normalized norms of
/// the velocity and tracer over the sweep, their L2-in-time integrals, and
/// the largest norm-to-sup ratios.
#[derive(Debug, Clone)]
pub struct LpCurve {
    pub p: f64,
    pub times: Vec<f64>,
    pub velocity_norms: Vec<f64>,
    pub tracer_norms: Vec<f64>,
    pub velocity_l2_time: f64,
    pub tracer_l2_time: f64,
    pub velocity_ratio: f64,
    pub tracer_ratio: f64,
}

/// All requested exponents for one level, alongside the mask fraction the
/// ratios are compared against.
pub struct LpLevelReport {
    pub k: usize,
    pub mask_fraction: f64,
    pub curves: Vec<LpCurve>,
}

/// Norm against the normalized measure `dx / (2 pi)^2`, so that the ratio
/// to the sup norm is bounded by the support fraction to the power `1/p`.
fn normalized_lp(f: &Field, p: f64) -> f64 {
    if p.is_infinite() {
        f.sup_norm()
    } else {
        f.lp_norm(p) / (2.0 * PI).powf(2.0 / p)
    }
}

/// Sweeps each level over its rows' decay scales and reports normalized
/// integrability curves per exponent. The L2-in-time integral adds the
/// undamped plateau below the first node to the log-grid trapezoid sum, so
/// it covers the whole interval from time zero.
pub fn lp_scan(
    levels: &[(&CascadeLevel, f64)],
    p_list: &[f64],
    steps: usize,
) -> Result<Vec<LpLevelReport>, ProbeError> {
    if steps < 2 {
        return Err(ProbeError::BadSampleRate(steps));
    }
    for &p in p_list {
        if !(p >= 1.0) {
            return Err(ProbeError::BadExponent(p));
        }
    }
    let mut out = Vec::new();
    for &(level, mask_fraction) in levels {
        let env = LevelEnvelope::from_level(level)?;
        let ln_n_lo = env
            .rows
            .iter()
            .map(|r| r.ln_n)
            .fold(f64::INFINITY, f64::min);
        let ln_n_hi = env
            .rows
            .iter()
            .map(|r| r.ln_n)
            .fold(f64::NEG_INFINITY, f64::max);
        let lt_lo = -(2.0 * ln_n_hi) + (0.01f64).ln();
        let lt_hi = -(2.0 * ln_n_lo) + (10.0f64).ln();

        let times: Vec<f64> = (0..=steps)
            .map(|i| (lt_lo + (lt_hi - lt_lo) * i as f64 / steps as f64).exp())
            .collect();
        let mut vel_sup = Vec::with_capacity(times.len());
        let mut tr_sup = Vec::with_capacity(times.len());
        let mut vel_norms: Vec<Vec<f64>> = vec![Vec::new(); p_list.len()];
        let mut tr_norms: Vec<Vec<f64>> = vec![Vec::new(); p_list.len()];
        for &t in &times {
            let q = principal_quartet(level, t)?;
            let v = q.velocity.to_physical();
            let h = q.tracer.to_physical();
            vel_sup.push(v.sup_norm());
            tr_sup.push(h.sup_norm());
            for (pi, &p) in p_list.iter().enumerate() {
                vel_norms[pi].push(normalized_lp(&v, p));
                tr_norms[pi].push(normalized_lp(&h, p));
            }
        }
        let integral = |values: &[f64]| -> f64 {
            let mut acc = values[0] * values[0] * times[0];
            for i in 1..values.len() {
                let dx = (times[i] / times[i - 1]).ln();
                acc += 0.5
                    * (values[i - 1] * values[i - 1] * times[i - 1]
                        + values[i] * values[i] * times[i])
                    * dx;
            }
            acc.sqrt()
        };
        let ratio = |values: &[f64], sups: &[f64]| -> f64 {
            values
                .iter()
                .zip(sups)
                .filter(|(_, &s)| s > 0.0)
                .map(|(&v, &s)| v / s)
                .fold(0.0f64, f64::max)
        };
        let curves = p_list
            .iter()
            .enumerate()
            .map(|(pi, &p)| LpCurve {
                p,
                times: times.clone(),
                velocity_norms: vel_norms[pi].clone(),
                tracer_norms: tr_norms[pi].clone(),
                velocity_l2_time: integral(&vel_norms[pi]),
                tracer_l2_time: integral(&tr_norms[pi]),
                velocity_ratio: ratio(&vel_norms[pi], &vel_sup),
                tracer_ratio: ratio(&tr_norms[pi], &tr_sup),
            })
            .collect();
        out.push(LpLevelReport {
            k: level.k,
            mask_fraction,
            curves,
        });
    }
    Ok(out)
}

// ---- heat commutator probe ----

/// Evaluation of the heat-commutator bound at one probe configuration: the
/// exact left side, the bound's shape with implied constant one, and their
/// ratios over the time list.
#[derive(Debug, Clone)]
pub struct CommutatorProbe {
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Largest ratio over the time list: the empirical implied constant.
    pub constant: f64,
}

/// Largest sup norm over all order-`order` partial derivatives of a
/// spectral scalar field.
fn derivative_sup(f: &Field, order: u32) -> f64 {
    if order == 0 {
        return f.sup_norm();
    }
    let grid = f.grid().clone();
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut worst = 0.0f64;
    for b1 in 0..=order {
        let b2 = order - b1;
        let mut g = f.clone();
        let data = g.comp_mut(0);
        for iy in 0..ny {
            let ky = grid.freq_y(iy) as f64;
            for ix in 0..nx {
                let kx = grid.freq_x(ix) as f64;
                data[iy * nx + ix] *= Complex64::new(0.0, kx).powu(b1)
                    * Complex64::new(0.0, ky).powu(b2);
            }
        }
        worst = worst.max(g.sup_norm());
    }
    worst
}

/// Sup over the grid of the Frobenius magnitude of the full gradient,
/// across all components of `f`.
fn gradient_sup(f: &Field) -> Result<f64, ProbeError> {
    let spec = f.to_spectral();
    let grid = spec.grid().clone();
    let mut acc = vec![0.0f64; grid.len()];
    for c in 0..spec.rank().ncomp() {
        let mut comp = Field::zeros(&grid, Rank::Scalar, Space::Spectral);
        comp.comp_mut(0).copy_from_slice(spec.comp(c));
        let mut g = ops::grad(&comp)?;
        g.make_physical();
        for gc in 0..2 {
            for (a, v) in acc.iter_mut().zip(g.comp(gc)) {
                *a += v.re * v.re;
            }
        }
    }
    Ok(acc.iter().fold(0.0f64, |m, &s| m.max(s)).sqrt())
}

/// Probes the commutator of the heat semigroup with multiplication by `a`
/// against an oscillation at mode `xi`: evaluates
/// `|grad^n (e^{t lap}(a sin) - a e^{t lap} sin)|_inf` exactly through two
/// semigroup applications and divides by the bound's shape
/// `|xi|^n sum_i ((A_i^(1-1/m) A_(m+i)^(1/m) + A_i^(1-2/m) A_(m+i)^(2/m))
/// e^(-|xi|^2 t / 4) + A_(m+i))` with `A_i = |xi|^(-i) |grad^i a|_inf`.
pub fn bound_probe_commutator(
    a: &Field,
    xi: [i64; 2],
    t_list: &[f64],
    n: u32,
    m: u32,
) -> Result<CommutatorProbe, ProbeError> {
    a.expect_rank(Rank::Scalar)?;
    if xi == [0, 0] {
        return Err(ProbeError::ZeroMode);
    }
    if m < n + 3 {
        return Err(ProbeError::BadProbeOrder { m, min: n + 3 });
    }
    if t_list.is_empty() || t_list.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(ProbeError::BadTimes);
    }
    let grid = a.grid().clone();
    let a_phys = a.to_physical();
    let a_spec = a.to_spectral();
    let xi_mag = ((xi[0] * xi[0] + xi[1] * xi[1]) as f64).sqrt();
    let wave = Field::from_fn_scalar(&grid, |x, y| (xi[0] as f64 * x + xi[1] as f64 * y).sin());
    let mut product = field::scalar_mul(&a_phys, &wave)?;
    product.make_spectral();
    let wave_spec = wave.to_spectral();

    let amps: Vec<f64> = (0..=(n + 2 * m))
        .map(|i| derivative_sup(&a_spec, i) / xi_mag.powi(i as i32))
        .collect();

    let mut lhs_list = Vec::with_capacity(t_list.len());
    let mut rhs_list = Vec::with_capacity(t_list.len());
    let mut ratios = Vec::with_capacity(t_list.len());
    let mut constant = 0.0f64;
    for &t in t_list {
        let heated = ops::heat(&product, t)?;
        let mut heated_wave = ops::heat(&wave_spec, t)?;
        heated_wave.make_physical();
        let mut second = field::scalar_mul(&a_phys, &heated_wave)?;
        second.make_spectral();
        let mut comm = heated;
        comm.axpy(-1.0, &second);
        let lhs = derivative_sup(&comm, n);

        let decay = (-xi_mag * xi_mag * t / 4.0).exp();
        let mut shape = 0.0;
        for i in 0..=(n as usize) {
            let a_i = amps[i];
            let a_mi = amps[m as usize + i];
            let fm = f64::from(m);
            let oscillatory =
                a_i.powf(1.0 - 1.0 / fm) * a_mi.powf(1.0 / fm)
                    + a_i.powf(1.0 - 2.0 / fm) * a_mi.powf(2.0 / fm);
            shape += oscillatory * decay + a_mi;
        }
        let rhs = xi_mag.powi(n as i32) * shape;
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        lhs_list.push(lhs);
        rhs_list.push(rhs);
        ratios.push(ratio);
        constant = constant.max(ratio);
    }
    Ok(CommutatorProbe {
        times: t_list.to_vec(),
        lhs: lhs_list,
        rhs: rhs_list,
        ratios,
        constant,
    })
}
