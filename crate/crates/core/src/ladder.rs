//! Doubly exponential frequency ladders and their admissibility
//! certificates.
//!
//! A ladder has `J` rows per level and levels `k = 0, 1, ...`. Row
//! frequencies and pipe counts are
//!
//! ```text
//! N_jk = m* ceil(A^(b^(k + (j-1)/J)))        (seed override: N_10 = 1)
//! M_jk =    ceil(A^(gamma b^(k + (j-1)/J)))  (k >= 1 only)
//! ```
//!
//! with the derived scales `t_k = N_Jk^-4` (time window) and
//! `l_k = (N_1k N_1,k+1)^-1/2` (mollification length). Pipe counts exist
//! only on levels that carry pipes, so every interleaving condition that
//! mentions `M` starts at `k = 1`. Field-scale ladders materialize exact
//! integers and merely warn when the interleaving is degenerate, which is
//! unavoidable at desk-scale parameters; asymptotic ladders work in log
//! space, reject any violation, and certify the margins.

use thiserror::Error;

/// Errors from ladder construction.
#[derive(Debug, Error)]
pub enum LadderError {
    #[error("invalid ladder parameters: {0}")]
    BadParams(String),
    #[error("frequency overflows u64 at row (j={j}, k={k}); use asymptotic mode")]
    Overflow { j: usize, k: usize },
    #[error("asymptotic ladder is not strictly ordered: {0}")]
    NotOrdered(String),
}

/// Ladder shape parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderParams {
    /// Base amplitude `A > 1`.
    pub a: f64,
    /// Level growth rate `b > 1`.
    pub b: f64,
    /// Pipe-count exponent fraction `gamma` in `(0, 1)`; the interleaving
    /// chain binds exactly when `gamma > b^(-1/J)`.
    pub gamma: f64,
    /// Rows per level `J`.
    pub rows: usize,
    /// Row frequencies are multiples of `m*`, which puts every diagonal
    /// phase vector on the integer lattice.
    pub m_star: u64,
    /// Number of levels to materialize (`k = 0 .. levels`).
    pub levels: usize,
}

impl LadderParams {
    /// Desk-scale parameters; every frequency fits on a modest grid.
    pub fn toy() -> LadderParams {
        LadderParams {
            a: 2.0,
            b: 2.0,
            gamma: 0.5,
            rows: 16,
            m_star: 5,
            levels: 3,
        }
    }

    /// Parameters in the regime where every ordering margin is positive;
    /// frequencies only exist in log space.
    pub fn asymptotic() -> LadderParams {
        LadderParams {
            a: 1e100,
            b: 131072.0,
            gamma: 0.5,
            rows: 16,
            m_star: 5,
            levels: 8,
        }
    }

    fn validate(&self) -> Result<(), LadderError> {
        let ok = self.a > 1.0
            && self.a.is_finite()
            && self.b > 1.0
            && self.b.is_finite()
            && self.gamma > 0.0
            && self.gamma < 1.0
            && self.rows >= 2
            && self.m_star >= 1
            && self.levels >= 2;
        if ok {
            Ok(())
        } else {
            Err(LadderError::BadParams(format!("{self:?}")))
        }
    }
}

/// Whether a ladder materializes integer frequencies or stays in log space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LadderMode {
    FieldScale,
    Asymptotic,
}

/// Ceiling with an integer snap: arguments within a relative 1e-9 of an
/// integer (several ladder entries are exact powers) round instead of
/// spuriously ceiling up from `k + ulp`.
fn ceil_guard(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// A built ladder. Log frequencies are always available; integer accessors
/// exist only in field-scale mode.
#[derive(Debug, Clone)]
pub struct FrequencyLadder {
    params: LadderParams,
    mode: LadderMode,
    ln_n: Vec<Vec<f64>>,
    /// Indexed `[k - 1][j - 1]`; level 0 carries no pipes.
    ln_m: Vec<Vec<f64>>,
    n_int: Option<Vec<Vec<u64>>>,
    m_int: Option<Vec<Vec<u64>>>,
    warnings: Vec<String>,
}

/// Builds a ladder, certifying strict ordering in asymptotic mode and
/// collecting warnings in field-scale mode.
pub fn build_ladder(
    params: LadderParams,
    mode: LadderMode,
) -> Result<FrequencyLadder, LadderError> {
    params.validate()?;
    let (rows, levels) = (params.rows, params.levels);
    let exponent = |j: usize, k: usize| params.b.powf(k as f64 + (j - 1) as f64 / rows as f64);
    let mut ladder = FrequencyLadder {
        params,
        mode,
        ln_n: vec![vec![0.0; rows]; levels],
        ln_m: vec![vec![0.0; rows]; levels - 1],
        n_int: None,
        m_int: None,
        warnings: Vec::new(),
    };
    match mode {
        LadderMode::FieldScale => {
            let mut n_int = vec![vec![0u64; rows]; levels];
            let mut m_int = vec![vec![0u64; rows]; levels - 1];
            for k in 0..levels {
                for j in 1..=rows {
                    let e = exponent(j, k);
                    let raw_n = ceil_guard(params.a.powf(e));
                    if raw_n * params.m_star as f64 > 2f64.powi(62) {
                        return Err(LadderError::Overflow { j, k });
                    }
                    n_int[k][j - 1] = if j == 1 && k == 0 {
                        1
                    } else {
                        params.m_star * raw_n as u64
                    };
                    ladder.ln_n[k][j - 1] = (n_int[k][j - 1] as f64).ln();
                    if k >= 1 {
                        let raw_m = ceil_guard(params.a.powf(params.gamma * e));
                        if raw_m > 2f64.powi(62) {
                            return Err(LadderError::Overflow { j, k });
                        }
                        m_int[k - 1][j - 1] = raw_m as u64;
                        ladder.ln_m[k - 1][j - 1] = (m_int[k - 1][j - 1] as f64).ln();
                    }
                }
            }
            ladder.n_int = Some(n_int);
            ladder.m_int = Some(m_int);
            let cert = ladder.certificate();
            for w in cert.violations() {
                ladder.warnings.push(w);
            }
        }
        LadderMode::Asymptotic => {
            let ln_a = params.a.ln();
            let ln_mstar = (params.m_star as f64).ln();
            for k in 0..levels {
                for j in 1..=rows {
                    let e = exponent(j, k);
                    ladder.ln_n[k][j - 1] = e * ln_a + ln_mstar;
                    if k >= 1 {
                        ladder.ln_m[k - 1][j - 1] = params.gamma * e * ln_a;
                    }
                }
            }
            let cert = ladder.certificate();
            let violations = cert.violations();
            if !violations.is_empty() {
                return Err(LadderError::NotOrdered(violations.join("; ")));
            }
        }
    }
    Ok(ladder)
}

impl FrequencyLadder {
    pub fn params(&self) -> &LadderParams {
        &self.params
    }

    pub fn mode(&self) -> LadderMode {
        self.mode
    }

    /// Ordering warnings collected at build time (field-scale mode).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Integer row frequency `N_jk` (field-scale mode only), `j` is 1-based.
    pub fn n(&self, j: usize, k: usize) -> u64 {
        self.n_int.as_ref().expect("integer frequencies need field-scale mode")[k][j - 1]
    }

    /// Integer pipe count `M_jk` (field-scale mode only, `k >= 1`).
    pub fn m(&self, j: usize, k: usize) -> u64 {
        assert!(k >= 1, "level 0 carries no pipes");
        self.m_int.as_ref().expect("integer pipe counts need field-scale mode")[k - 1][j - 1]
    }

    pub fn ln_n(&self, j: usize, k: usize) -> f64 {
        self.ln_n[k][j - 1]
    }

    pub fn ln_m(&self, j: usize, k: usize) -> f64 {
        assert!(k >= 1, "level 0 carries no pipes");
        self.ln_m[k - 1][j - 1]
    }

    /// Time window `t_k = N_Jk^-4`.
    pub fn t(&self, k: usize) -> f64 {
        (4.0 * -self.ln_n(self.params.rows, k)).exp()
    }

    /// Mollification length `l_k = (N_1k N_1,k+1)^-1/2`; needs level `k+1`.
    pub fn ell(&self, k: usize) -> f64 {
        (-0.5 * (self.ln_n(1, k) + self.ln_n(1, k + 1))).exp()
    }

    /// All rows in build order `(k, j)` with their log frequencies.
    pub fn iter_rows(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.params.levels).flat_map(move |k| {
            (1..=self.params.rows).map(move |j| (k, j, self.ln_n(j, k)))
        })
    }

    /// Computes the admissibility certificate in log space.
    pub fn certificate(&self) -> LadderCertificate {
        let (rows, levels) = (self.params.rows, self.params.levels);
        let ln_a = self.params.a.ln();
        let mut cert = LadderCertificate {
            gamma_margin: self.params.gamma - self.params.b.powf(-1.0 / rows as f64),
            chain_left_margin: f64::INFINITY,
            chain_left_argmin: (0, 0),
            chain_right_margin: f64::INFINITY,
            chain_right_argmin: (0, 0),
            monotone_margin: f64::INFINITY,
            monotone_argmin: (0, 0),
            ell_margin: f64::INFINITY,
            t_lower_margin: f64::INFINITY,
            t_upper_margin: f64::INFINITY,
            max_admissible_c: f64::NAN,
        };
        // Strict growth of ln N along the build order.
        let mut prev: Option<f64> = None;
        for (k, j, ln_n) in self.iter_rows() {
            if let Some(ln_prev) = prev {
                let mono = ln_n - ln_prev;
                if mono < cert.monotone_margin {
                    cert.monotone_margin = mono;
                    cert.monotone_argmin = (j, k);
                }
            }
            prev = Some(ln_n);
        }
        // Interleaving chain N_prev << M_jk << N_jk over the piped levels,
        // with prev = (j-1, k) inside a level and (J, k-1) across the seam.
        for k in 1..levels {
            for j in 1..=rows {
                let ln_prev = if j == 1 {
                    self.ln_n(rows, k - 1)
                } else {
                    self.ln_n(j - 1, k)
                };
                let left = self.ln_m(j, k) - ln_prev;
                if left < cert.chain_left_margin {
                    cert.chain_left_margin = left;
                    cert.chain_left_argmin = (j, k);
                }
                let right = self.ln_n(j, k) - self.ln_m(j, k);
                if right < cert.chain_right_margin {
                    cert.chain_right_margin = right;
                    cert.chain_right_argmin = (j, k);
                }
            }
        }
        for k in 0..levels {
            // t_k = N_Jk^-4 << N_Jk^-3 has margin ln N_Jk.
            cert.t_upper_margin = cert.t_upper_margin.min(self.ln_n(rows, k));
        }
        for k in 0..levels.saturating_sub(1) {
            let half_sum = 0.5 * (self.ln_n(1, k) + self.ln_n(1, k + 1));
            cert.ell_margin = cert.ell_margin.min(half_sum - self.ln_n(rows, k));
            cert.t_lower_margin = cert
                .t_lower_margin
                .min(2.0 * self.ln_n(1, k + 1) - 4.0 * self.ln_n(rows, k));
        }
        cert.max_admissible_c =
            cert.chain_left_margin.min(cert.chain_right_margin) / ln_a;
        cert
    }
}

/// Log-space ordering margins of a ladder. All entries must be positive for
/// the construction to interleave; `max_admissible_c` is the largest `c`
/// with `A^c N_prev <= M_jk <= A^-c N_jk` across the piped levels.
#[derive(Debug, Clone, Copy)]
pub struct LadderCertificate {
    /// `gamma - b^(-1/J)`; positivity is the parameter-level chain condition.
    pub gamma_margin: f64,
    /// `min ln M_jk - ln N_prev` over rows with `k >= 1`.
    pub chain_left_margin: f64,
    pub chain_left_argmin: (usize, usize),
    /// `min ln N_jk - ln M_jk` over rows with `k >= 1`.
    pub chain_right_margin: f64,
    pub chain_right_argmin: (usize, usize),
    /// `min ln N_next - ln N_cur` along the build order (strict growth).
    pub monotone_margin: f64,
    pub monotone_argmin: (usize, usize),
    /// `min -ln(l_k N_Jk)`: mollification finer than the last row.
    pub ell_margin: f64,
    /// `min 2 ln N_1,k+1 - 4 ln N_Jk`: the window `t_k` starts after the
    /// slowest next-level mode peaks (needs `b^(1/J) >= 2`).
    pub t_lower_margin: f64,
    /// `min ln N_Jk`: the window ends well inside `N_Jk^-3`.
    pub t_upper_margin: f64,
    pub max_admissible_c: f64,
}

impl LadderCertificate {
    /// Human-readable descriptions of every nonpositive margin.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut push = |name: &str, value: f64, at: Option<(usize, usize)>| {
            if value <= 0.0 {
                match at {
                    Some((j, k)) => v.push(format!("{name} = {value:.3e} at (j={j}, k={k})")),
                    None => v.push(format!("{name} = {value:.3e}")),
                }
            }
        };
        push("gamma margin", self.gamma_margin, None);
        push(
            "chain left margin",
            self.chain_left_margin,
            Some(self.chain_left_argmin),
        );
        push(
            "chain right margin",
            self.chain_right_margin,
            Some(self.chain_right_argmin),
        );
        push(
            "monotone margin",
            self.monotone_margin,
            Some(self.monotone_argmin),
        );
        push("ell margin", self.ell_margin, None);
        push("t lower margin", self.t_lower_margin, None);
        push("t upper margin", self.t_upper_margin, None);
        v
    }

    pub fn all_positive(&self) -> bool {
        self.violations().is_empty()
    }
}

/// Smallest multiple of `n` whose product with the direction denominator
/// lands the phase vector `n * eta` on the integer lattice.
pub fn synthesis_frequency(n: u64, q: u64) -> u64 {
    let g = gcd(n, q);
    n * (q / g)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_tables_match_the_frozen_oracle_values() {
        let l = build_ladder(LadderParams::toy(), LadderMode::FieldScale).unwrap();
        let n0: Vec<u64> = (1..=16).map(|j| l.n(j, 0)).collect();
        let n1: Vec<u64> = (1..=16).map(|j| l.n(j, 1)).collect();
        let n2: Vec<u64> = (1..=16).map(|j| l.n(j, 2)).collect();
        let m1: Vec<u64> = (1..=16).map(|j| l.m(j, 1)).collect();
        let m2: Vec<u64> = (1..=16).map(|j| l.m(j, 2)).collect();
        assert_eq!(n0, vec![1, 15, 15, 15, 15, 15, 15, 15, 15, 15, 15, 20, 20, 20, 20, 20]);
        assert_eq!(n1, vec![20, 25, 25, 25, 30, 30, 35, 35, 40, 40, 45, 50, 55, 60, 65, 75]);
        assert_eq!(
            n2,
            vec![80, 95, 105, 120, 140, 160, 185, 215, 255, 305, 360, 435, 530, 655, 810, 1015]
        );
        assert_eq!(m1, vec![2, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 4, 4, 4, 4, 4]);
        assert_eq!(m2, vec![4, 5, 5, 5, 6, 6, 7, 7, 8, 8, 9, 10, 11, 12, 13, 15]);
        assert!((l.t(0) - 6.25e-6).abs() < 1e-18);
        assert!((l.t(1) - 75f64.powi(-4)).abs() < 1e-20);
        assert!((l.ell(0) - 0.05f64.sqrt()).abs() < 1e-15);
        assert!((l.ell(1) - 0.025).abs() < 1e-15);
    }

    #[test]
    fn toy_ladder_warns_about_degenerate_interleaving() {
        let l = build_ladder(LadderParams::toy(), LadderMode::FieldScale).unwrap();
        assert!(!l.warnings().is_empty());
        let cert = l.certificate();
        // Equal consecutive frequencies (15, 15, ...) kill strictness, the
        // pipe counts are far too small for the chain at these scales, and
        // b = 2 sits below the parameter-level threshold b > 2^J.
        assert!(cert.monotone_margin <= 0.0);
        assert!(cert.chain_left_margin <= 0.0);
        assert!(cert.gamma_margin < 0.0);
        // The upper half of the chain does hold: pipe counts stay far below
        // the row frequencies.
        assert!(cert.chain_right_margin > 0.0);
    }

    #[test]
    fn asymptotic_ladder_is_strictly_ordered_with_frozen_margins() {
        let l = build_ladder(LadderParams::asymptotic(), LadderMode::Asymptotic).unwrap();
        let cert = l.certificate();
        assert!(cert.all_positive(), "{:?}", cert.violations());
        assert!((cert.gamma_margin - 0.0211983596507132).abs() < 1e-10);
        // Both chain sides bind at the first piped row (j=1, k=1).
        assert_eq!(cert.chain_left_argmin, (1, 1));
        assert!((cert.chain_left_margin - 639774.282708295).abs() < 1e-4);
        assert!((cert.chain_right_margin - 15090223.2748837).abs() < 1e-3);
        assert!((cert.max_admissible_c - 2778.50440643823).abs() < 1e-7);
        // In closed form the binding margin is M_1,1 against N_J,0.
        let p = LadderParams::asymptotic();
        let expect_c = p.b.powf(15.0 / 16.0) * (p.gamma * p.b.powf(1.0 / 16.0) - 1.0)
            - 5f64.ln() / p.a.ln();
        assert!((cert.max_admissible_c - expect_c).abs() < 1e-7);
    }

    #[test]
    fn asymptotic_mode_rejects_a_gamma_below_the_chain_condition() {
        let mut p = LadderParams::asymptotic();
        p.gamma = 0.4; // below b^(-1/J) = 0.4788
        match build_ladder(p, LadderMode::Asymptotic) {
            Err(LadderError::NotOrdered(msg)) => assert!(msg.contains("chain")),
            other => panic!("expected ordering rejection, got {other:?}"),
        }
    }

    #[test]
    fn field_mode_overflows_gracefully() {
        let mut p = LadderParams::toy();
        p.levels = 7;
        assert!(matches!(
            build_ladder(p, LadderMode::FieldScale),
            Err(LadderError::Overflow { .. })
        ));
    }

    #[test]
    fn synthesis_frequency_fixes_only_off_lattice_rows() {
        // Diagonal directions have q = 5; the seed row N = 1 needs the
        // multiplier, every larger multiple of 5 does not.
        assert_eq!(synthesis_frequency(1, 5), 5);
        assert_eq!(synthesis_frequency(15, 5), 15);
        assert_eq!(synthesis_frequency(20, 5), 20);
        assert_eq!(synthesis_frequency(7, 5), 35);
        assert_eq!(synthesis_frequency(12, 1), 12);
    }

    #[test]
    fn log_frequencies_agree_between_modes_up_to_ceiling() {
        let f = build_ladder(LadderParams::toy(), LadderMode::FieldScale).unwrap();
        let p = LadderParams::toy();
        // Asymptotic toy parameters are not ordered, so compare raw logs via
        // the formula instead of a built ladder.
        let ln_a = p.a.ln();
        for k in 0..3 {
            for j in 1..=16 {
                if j == 1 && k == 0 {
                    continue;
                }
                let ideal = p.b.powf(k as f64 + (j - 1) as f64 / 16.0) * ln_a
                    + (p.m_star as f64).ln();
                let actual = f.ln_n(j, k);
                assert!(actual >= ideal - 1e-9, "ceil only rounds up");
                assert!(actual <= ideal + 0.8, "within one ceiling step");
            }
        }
    }
}
