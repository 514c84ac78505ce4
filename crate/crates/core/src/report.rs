//! Diagnostics report: a flat list of named numeric checks, fitted
//! exponents with confidence intervals, and the configuration fingerprint,
//! serialized to a fixed five-column CSV and a readable text summary.

use std::fmt::Write as _;

/// How a check's value relates to its target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `|value - target| <= tol`.
    Within,
    /// `value <= target + tol`.
    AtMost,
    /// `value >= target - tol`.
    AtLeast,
}

/// One named numeric check. The pass flag is computed at construction and
/// never revised; non-finite values fail.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: String,
    pub value: f64,
    pub target: f64,
    pub tol: f64,
    pub pass: bool,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || matches!(c, '_' | '.' | '-'))
}

impl Check {
    pub fn new(id: &str, value: f64, target: f64, tol: f64, sense: Sense) -> Check {
        assert!(valid_id(id), "check id {id:?} must be lowercase [a-z0-9_.-]");
        assert!(
            target.is_finite() && tol.is_finite() && tol >= 0.0,
            "check {id}: target and tolerance must be finite, tolerance nonnegative"
        );
        let pass = value.is_finite()
            && match sense {
                Sense::Within => (value - target).abs() <= tol,
                Sense::AtMost => value <= target + tol,
                Sense::AtLeast => value >= target - tol,
            };
        Check {
            id: id.to_string(),
            value,
            target,
            tol,
            pass,
        }
    }

    pub fn within(id: &str, value: f64, target: f64, tol: f64) -> Check {
        Check::new(id, value, target, tol, Sense::Within)
    }

    pub fn at_most(id: &str, value: f64, bound: f64, tol: f64) -> Check {
        Check::new(id, value, bound, tol, Sense::AtMost)
    }

    pub fn at_least(id: &str, value: f64, bound: f64, tol: f64) -> Check {
        Check::new(id, value, bound, tol, Sense::AtLeast)
    }
}

/// A fitted power-law exponent with its standard error. Recording one in a
/// report also records the corresponding slope check.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    pub id: String,
    pub slope: f64,
    pub stderr: f64,
    pub target: f64,
    pub tol: f64,
}

impl ExponentFit {
    /// Symmetric 95% confidence interval `slope +- 1.96 stderr`.
    pub fn confidence(&self) -> (f64, f64) {
        (
            self.slope - 1.96 * self.stderr,
            self.slope + 1.96 * self.stderr,
        )
    }
}

/// Accumulates checks in insertion order under a configuration hash.
/// Check ids are unique; inserting a duplicate panics, so each criterion
/// appears exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    config_hash: String,
    checks: Vec<Check>,
    fits: Vec<ExponentFit>,
}

impl DiagnosticsReport {
    pub fn new(config_hash: &str) -> DiagnosticsReport {
        DiagnosticsReport {
            config_hash: config_hash.to_string(),
            checks: Vec::new(),
            fits: Vec::new(),
        }
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn push(&mut self, check: Check) {
        assert!(
            self.checks.iter().all(|c| c.id != check.id),
            "check id {:?} recorded twice",
            check.id
        );
        self.checks.push(check);
    }

    /// Records the fit and a `Within` check on its slope under the same id.
    pub fn push_fit(&mut self, fit: ExponentFit) {
        self.push(Check::within(&fit.id, fit.slope, fit.target, fit.tol));
        self.fits.push(fit);
    }

    pub fn checks(&self) -> &[Check] {
        &self.checks
    }

    pub fn fits(&self) -> &[ExponentFit] {
        &self.fits
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.id.as_str())
            .collect()
    }

    /// Fixed-schema CSV: header `check_id,value,target,tol,pass`, one row
    /// per check in insertion order, shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("check_id,value,target,tol,pass\n");
        for c in &self.checks {
            writeln!(
                out,
                "{},{},{},{},{}",
                c.id, c.value, c.target, c.tol, c.pass
            )
            .expect("string write");
        }
        out
    }

    /// Readable summary: provenance, verdict, per-check lines, and fitted
    /// exponents with 95% confidence intervals.
    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "diagnostics report").expect("string write");
        writeln!(out, "config {}", self.config_hash).expect("string write");
        let failed = self.failures();
        if failed.is_empty() {
            writeln!(out, "verdict: all {} checks pass", self.checks.len()).expect("string write");
        } else {
            writeln!(
                out,
                "verdict: {} of {} checks fail",
                failed.len(),
                self.checks.len()
            )
            .expect("string write");
        }
        writeln!(out).expect("string write");
        for c in &self.checks {
            writeln!(
                out,
                "[{}] {}  value {:.6e}  target {:.6e}  tol {:.6e}",
                if c.pass { "pass" } else { "FAIL" },
                c.id,
                c.value,
                c.target,
                c.tol
            )
            .expect("string write");
        }
        if !self.fits.is_empty() {
            writeln!(out).expect("string write");
            writeln!(out, "fitted exponents").expect("string write");
            for f in &self.fits {
                let (lo, hi) = f.confidence();
                writeln!(
                    out,
                    "{}  slope {:.6}  ci95 [{:.6}, {:.6}]  target {:.3} +- {:.3}",
                    f.id, f.slope, lo, hi, f.target, f.tol
                )
                .expect("string write");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_flags_follow_the_comparison_sense() {
        assert!(Check::within("a", 1.05, 1.0, 0.1).pass);
        assert!(!Check::within("a", 1.2, 1.0, 0.1).pass);
        assert!(Check::at_most("a", 0.9, 1.0, 0.0).pass);
        assert!(!Check::at_most("a", 1.1, 1.0, 0.05).pass);
        assert!(Check::at_least("a", 1.1, 1.0, 0.0).pass);
        assert!(!Check::at_least("a", 0.8, 1.0, 0.1).pass);
        assert!(!Check::within("a", f64::NAN, 1.0, 0.1).pass);
        assert!(!Check::at_most("a", f64::INFINITY, 1.0, 0.1).pass);
    }

    #[test]
    #[should_panic(expected = "recorded twice")]
    fn duplicate_check_ids_panic() {
        let mut report = DiagnosticsReport::new("h");
        report.push(Check::within("dup", 0.0, 0.0, 0.0));
        report.push(Check::within("dup", 1.0, 1.0, 0.0));
    }

    #[test]
    #[should_panic(expected = "lowercase")]
    fn uppercase_check_ids_panic() {
        Check::within("Bad,Id", 0.0, 0.0, 0.0);
    }

    #[test]
    fn csv_has_the_fixed_header_and_one_row_per_check() {
        let mut report = DiagnosticsReport::new("cafe");
        report.push(Check::within("ops.identity", 3.0e-12, 0.0, 1.0e-11));
        report.push(Check::at_most("masks.volume", 0.49, 0.5, 0.01));
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "check_id,value,target,tol,pass");
        assert_eq!(lines[1], "ops.identity,0.000000000003,0,0.00000000001,true");
        assert_eq!(lines[2], "masks.volume,0.49,0.5,0.01,true");
        assert!(csv.ends_with('\n'));
    }

    #[test]
    fn identical_reports_serialize_identically() {
        let build = || {
            let mut r = DiagnosticsReport::new("feed");
            r.push(Check::within("alpha", 0.1234567890123, 0.0, 1.0));
            r.push_fit(ExponentFit {
                id: "rates.velocity".to_string(),
                slope: -0.5000000001,
                stderr: 1.2e-9,
                target: -0.5,
                tol: 0.05,
            });
            r
        };
        assert_eq!(build().to_csv(), build().to_csv());
        assert_eq!(build().render(), build().render());
    }

    #[test]
    fn fits_record_a_slope_check_and_a_confidence_interval() {
        let mut report = DiagnosticsReport::new("h");
        report.push_fit(ExponentFit {
            id: "rates.tracer".to_string(),
            slope: -1.02,
            stderr: 0.01,
            target: -1.0,
            tol: 0.1,
        });
        assert_eq!(report.checks().len(), 1);
        assert_eq!(report.checks()[0].id, "rates.tracer");
        assert!(report.checks()[0].pass);
        let (lo, hi) = report.fits()[0].confidence();
        assert!(lo < -1.02 && -1.02 < hi);
        assert!((hi - lo - 2.0 * 1.96 * 0.01).abs() < 1e-15);
    }

    #[test]
    fn render_lists_provenance_verdict_and_failures() {
        let mut report = DiagnosticsReport::new("0123abcd");
        report.push(Check::within("good", 1.0, 1.0, 0.1));
        report.push(Check::at_most("bad", 2.0, 1.0, 0.0));
        assert!(!report.all_pass());
        assert_eq!(report.failures(), vec!["bad"]);
        let text = report.render();
        assert!(text.contains("config 0123abcd"));
        assert!(text.contains("1 of 2 checks fail"));
        assert!(text.contains("[pass] good"));
        assert!(text.contains("[FAIL] bad"));
    }
}
