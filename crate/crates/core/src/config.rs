//! Run configuration: a flat plain-text `key = value` format with `#`
//! comments, a canonical manifest that round-trips through the parser, and
//! a content hash that fingerprints every field for reproducibility checks.

use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{self, rows};
use crate::ladder::{LadderMode, LadderParams};
use crate::pipes::production_delta0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: key {key:?} rejects value {value:?}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("reading config file")]
    Io(#[from] std::io::Error),
}

/// Named background pair for the corrector stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundKind {
    /// `U = amp (sin x2, sin x1)`, `H = amp cos(x1 + x2)`.
    Standing,
    /// The zero pair.
    Still,
    /// `U = amp (0, sin x1)`, `H = amp cos x1`; advection-free.
    Shear,
}

impl BackgroundKind {
    fn name(&self) -> &'static str {
        match self {
            BackgroundKind::Standing => "standing",
            BackgroundKind::Still => "still",
            BackgroundKind::Shear => "shear",
        }
    }
}

/// Every knob of a pipeline run. The canonical serialization is
/// [`RunConfig::manifest`]; [`RunConfig::parse`] accepts any subset of the
/// keys and fills the rest with defaults, so the empty string is the
/// default configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Integer-frequency construction or log-space tables.
    pub mode: LadderMode,
    /// Square grid side, a power of two.
    pub grid: usize,
    /// Deepest built cascade level.
    pub levels: usize,
    /// Seed for every sampled quantity downstream.
    pub seed: u64,
    /// Output directory for reports, tables, and snapshots.
    pub out: PathBuf,
    /// Base frequency of the ladder.
    pub a: f64,
    /// Per-level frequency exponent ratio.
    pub b: f64,
    /// Mollification exponent.
    pub gamma: f64,
    /// Rows per level.
    pub rows: usize,
    /// Pipe-count multiplier floor.
    pub m_star: u64,
    /// Materialized ladder depth; the build needs `levels + 2`.
    pub ladder_levels: usize,
    /// Pipe radius parameter.
    pub delta0: f64,
    /// Velocity amplitude margin recorded alongside the build.
    pub epsilon_u: f64,
    /// Amplitude constant recorded alongside the build.
    pub c: f64,
    /// Blowup instant; applied as an output-time offset only.
    pub t_star: f64,
    /// Run the rate scan stage.
    pub rates: bool,
    /// Run the corrector stage.
    pub corrector: bool,
    /// Path-norm weight exponent.
    pub corrector_alpha: f64,
    /// Path-norm gap exponent.
    pub corrector_kappa: f64,
    /// Contraction margin exponent.
    pub corrector_epsilon: f64,
    /// Corrector time horizon.
    pub corrector_tbar: f64,
    /// Picard ball radius.
    pub corrector_delta: f64,
    /// Zoom frequency for the rescaled corrector problem.
    pub corrector_n0: u64,
    /// Background pair preset.
    pub background: BackgroundKind,
    /// Background pair amplitude.
    pub background_amp: f64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        let q_max = rows().iter().map(|r| r.dir.q).max().expect("rows");
        RunConfig {
            mode: LadderMode::FieldScale,
            grid: 256,
            levels: 1,
            seed: 7,
            out: PathBuf::from("out"),
            a: 2.0,
            b: 2.0,
            gamma: 0.5,
            rows: 16,
            m_star: 5,
            ladder_levels: 3,
            delta0: production_delta0(16, q_max),
            epsilon_u: geometry::epsilon_u(),
            c: 1.0,
            t_star: 0.0,
            rates: true,
            corrector: false,
            corrector_alpha: 0.08,
            corrector_kappa: 0.04,
            corrector_epsilon: 0.04,
            corrector_tbar: 6.25e-6,
            corrector_delta: 0.05,
            corrector_n0: 1,
            background: BackgroundKind::Standing,
            background_amp: 0.2,
        }
    }
}

/// The recognized keys, in manifest order.
const KEYS: [&str; 25] = [
    "mode",
    "grid",
    "levels",
    "seed",
    "out",
    "a",
    "b",
    "gamma",
    "rows",
    "m_star",
    "ladder_levels",
    "delta0",
    "epsilon_u",
    "c",
    "t_star",
    "rates",
    "corrector",
    "corrector_alpha",
    "corrector_kappa",
    "corrector_epsilon",
    "corrector_tbar",
    "corrector_delta",
    "corrector_n0",
    "background",
    "background_amp",
];

impl RunConfig {
    /// Parses the plain-text format: one `key = value` per line, `#` starts
    /// a comment, blank lines are skipped. Unknown and repeated keys are
    /// errors; absent keys keep their defaults.
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<&'static str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: stripped.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let canon = KEYS
                .iter()
                .find(|k| **k == key)
                .copied()
                .ok_or_else(|| ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })?;
            if seen.contains(&canon) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(canon);
            cfg.assign(canon, value).map_err(|_| ConfigError::BadValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
            })?;
        }
        Ok(cfg)
    }

    /// Reads and parses a config file.
    pub fn load(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text)
    }

    fn assign(&mut self, key: &'static str, value: &str) -> Result<(), ()> {
        fn num<T: std::str::FromStr>(value: &str) -> Result<T, ()> {
            value.parse::<T>().map_err(|_| ())
        }
        fn finite(value: &str) -> Result<f64, ()> {
            let x: f64 = num(value)?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(())
            }
        }
        match key {
            "mode" => {
                self.mode = match value {
                    "field" => LadderMode::FieldScale,
                    "asymptotic" => LadderMode::Asymptotic,
                    _ => return Err(()),
                }
            }
            "grid" => self.grid = num(value)?,
            "levels" => self.levels = num(value)?,
            "seed" => self.seed = num(value)?,
            "out" => {
                if value.is_empty() {
                    return Err(());
                }
                self.out = PathBuf::from(value);
            }
            "a" => self.a = finite(value)?,
            "b" => self.b = finite(value)?,
            "gamma" => self.gamma = finite(value)?,
            "rows" => self.rows = num(value)?,
            "m_star" => self.m_star = num(value)?,
            "ladder_levels" => self.ladder_levels = num(value)?,
            "delta0" => self.delta0 = finite(value)?,
            "epsilon_u" => self.epsilon_u = finite(value)?,
            "c" => self.c = finite(value)?,
            "t_star" => self.t_star = finite(value)?,
            "rates" => self.rates = num::<bool>(value)?,
            "corrector" => self.corrector = num::<bool>(value)?,
            "corrector_alpha" => self.corrector_alpha = finite(value)?,
            "corrector_kappa" => self.corrector_kappa = finite(value)?,
            "corrector_epsilon" => self.corrector_epsilon = finite(value)?,
            "corrector_tbar" => self.corrector_tbar = finite(value)?,
            "corrector_delta" => self.corrector_delta = finite(value)?,
            "corrector_n0" => self.corrector_n0 = num(value)?,
            "background" => {
                self.background = match value {
                    "standing" => BackgroundKind::Standing,
                    "still" => BackgroundKind::Still,
                    "shear" => BackgroundKind::Shear,
                    _ => return Err(()),
                }
            }
            "background_amp" => self.background_amp = finite(value)?,
            _ => unreachable!("key filtered against KEYS"),
        }
        Ok(())
    }

    fn value_of(&self, key: &'static str) -> String {
        match key {
            "mode" => match self.mode {
                LadderMode::FieldScale => "field".to_string(),
                LadderMode::Asymptotic => "asymptotic".to_string(),
            },
            "grid" => self.grid.to_string(),
            "levels" => self.levels.to_string(),
            "seed" => self.seed.to_string(),
            "out" => self.out.display().to_string(),
            "a" => self.a.to_string(),
            "b" => self.b.to_string(),
            "gamma" => self.gamma.to_string(),
            "rows" => self.rows.to_string(),
            "m_star" => self.m_star.to_string(),
            "ladder_levels" => self.ladder_levels.to_string(),
            "delta0" => self.delta0.to_string(),
            "epsilon_u" => self.epsilon_u.to_string(),
            "c" => self.c.to_string(),
            "t_star" => self.t_star.to_string(),
            "rates" => self.rates.to_string(),
            "corrector" => self.corrector.to_string(),
            "corrector_alpha" => self.corrector_alpha.to_string(),
            "corrector_kappa" => self.corrector_kappa.to_string(),
            "corrector_epsilon" => self.corrector_epsilon.to_string(),
            "corrector_tbar" => self.corrector_tbar.to_string(),
            "corrector_delta" => self.corrector_delta.to_string(),
            "corrector_n0" => self.corrector_n0.to_string(),
            "background" => self.background.name().to_string(),
            "background_amp" => self.background_amp.to_string(),
            _ => unreachable!("key filtered against KEYS"),
        }
    }

    /// Canonical serialization: every key in fixed order, shortest
    /// round-trip float formatting. `parse(manifest(c)) == c`.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{} = {}", key, self.value_of(key)).expect("string write");
        }
        out
    }

    /// Content hash of the canonical manifest, framed like a blob object:
    /// `sha256("config <len>\0" + manifest)`, hex-encoded.
    pub fn content_hash(&self) -> String {
        let body = self.manifest();
        let mut hasher = Sha256::new();
        hasher.update(format!("config {}\0", body.len()).as_bytes());
        hasher.update(body.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            write!(hex, "{byte:02x}").expect("string write");
        }
        hex
    }

    /// Ladder parameters assembled from the scalar fields.
    pub fn ladder_params(&self) -> LadderParams {
        LadderParams {
            a: self.a,
            b: self.b,
            gamma: self.gamma,
            rows: self.rows,
            m_star: self.m_star,
            levels: self.ladder_levels,
        }
    }

    /// Cross-field checks the parser cannot express per line.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.grid < 4 || !self.grid.is_power_of_two() {
            return Err(ConfigError::Invalid {
                field: "grid",
                reason: format!("side {} is not a power of two at least 4", self.grid),
            });
        }
        if self.ladder_levels < self.levels + 2 {
            return Err(ConfigError::Invalid {
                field: "ladder_levels",
                reason: format!(
                    "building level {} reads ladder level {}, but only {} are materialized",
                    self.levels,
                    self.levels + 1,
                    self.ladder_levels
                ),
            });
        }
        if !(self.delta0 > 0.0 && self.delta0 <= std::f64::consts::PI) {
            return Err(ConfigError::Invalid {
                field: "delta0",
                reason: format!("radius parameter {} outside (0, pi]", self.delta0),
            });
        }
        if !(self.t_star >= 0.0) {
            return Err(ConfigError::Invalid {
                field: "t_star",
                reason: format!("offset {} is negative", self.t_star),
            });
        }
        if !(self.background_amp > 0.0) {
            return Err(ConfigError::Invalid {
                field: "background_amp",
                reason: format!("amplitude {} is not positive", self.background_amp),
            });
        }
        if !(self.corrector_delta > 0.0) {
            return Err(ConfigError::Invalid {
                field: "corrector_delta",
                reason: format!("radius {} is not positive", self.corrector_delta),
            });
        }
        if self.corrector_n0 == 0 {
            return Err(ConfigError::Invalid {
                field: "corrector_n0",
                reason: "zoom frequency is zero".to_string(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_yields_the_defaults() {
        let cfg = RunConfig::parse("").expect("empty config");
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().expect("defaults validate");
    }

    #[test]
    fn defaults_round_trip_through_the_manifest() {
        let cfg = RunConfig::default();
        let text = cfg.manifest();
        let reparsed = RunConfig::parse(&text).expect("canonical text parses");
        assert_eq!(reparsed, cfg);
        for key in KEYS {
            assert!(
                text.contains(&format!("{key} = ")),
                "manifest is missing {key}"
            );
        }
    }

    #[test]
    fn comments_blanks_and_spacing_are_tolerated() {
        let text = "
            # pipeline shape
            grid=512
            levels  =   2      # deepest level
            ladder_levels = 4

            mode = asymptotic
            out = runs/deep dir
            corrector_tbar = 6.25e-6
        ";
        let cfg = RunConfig::parse(text).expect("config parses");
        assert_eq!(cfg.grid, 512);
        assert_eq!(cfg.levels, 2);
        assert_eq!(cfg.ladder_levels, 4);
        assert_eq!(cfg.mode, LadderMode::Asymptotic);
        assert_eq!(cfg.out, PathBuf::from("runs/deep dir"));
        assert_eq!(cfg.corrector_tbar, 6.25e-6);
        assert_eq!(cfg.seed, RunConfig::default().seed);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = RunConfig::parse("grid = 256\nspice = 11\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { line, key } => {
                assert_eq!(line, 2);
                assert_eq!(key, "spice");
            }
            other => panic!("expected UnknownKey, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let err = RunConfig::parse("seed = 1\nseed = 2\n").unwrap_err();
        match err {
            ConfigError::DuplicateKey { line, key } => {
                assert_eq!(line, 2);
                assert_eq!(key, "seed");
            }
            other => panic!("expected DuplicateKey, got {other:?}"),
        }
    }

    #[test]
    fn malformed_values_name_the_offending_key() {
        for (text, want_key) in [
            ("grid = twelve", "grid"),
            ("mode = spectral", "mode"),
            ("background = vortex", "background"),
            ("gamma = inf", "gamma"),
            ("rates = yes", "rates"),
            ("out =", "out"),
        ] {
            let err = RunConfig::parse(text).unwrap_err();
            match err {
                ConfigError::BadValue { key, .. } => assert_eq!(key, want_key),
                other => panic!("expected BadValue for {text:?}, got {other:?}"),
            }
        }
        let err = RunConfig::parse("just words\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }));
    }

    #[test]
    fn content_hash_is_stable_and_field_sensitive() {
        let base = RunConfig::default();
        let hash = base.content_hash();
        assert_eq!(hash.len(), 64);
        assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
        assert_eq!(base.content_hash(), hash);

        let mut reseeded = RunConfig::default();
        reseeded.seed = 8;
        assert_ne!(reseeded.content_hash(), hash);

        let mut moved = RunConfig::default();
        moved.out = PathBuf::from("elsewhere");
        assert_ne!(moved.content_hash(), hash);
    }

    #[test]
    fn validation_enforces_ladder_depth_and_ranges() {
        let mut cfg = RunConfig::default();
        cfg.levels = 2;
        let err = cfg.validate().unwrap_err();
        assert!(matches!(
            err,
            ConfigError::Invalid {
                field: "ladder_levels",
                ..
            }
        ));

        let mut cfg = RunConfig::default();
        cfg.grid = 300;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.delta0 = 0.0;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.corrector_n0 = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ladder_params_mirror_the_scalar_fields() {
        let cfg = RunConfig::parse("a = 4\nb = 3\ngamma = 0.25\nladder_levels = 5\n")
            .expect("config parses");
        let params = cfg.ladder_params();
        assert_eq!(params.a, 4.0);
        assert_eq!(params.b, 3.0);
        assert_eq!(params.gamma, 0.25);
        assert_eq!(params.rows, 16);
        assert_eq!(params.m_star, 5);
        assert_eq!(params.levels, 5);
    }
}
