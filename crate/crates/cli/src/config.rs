//! Experiment config files.

use std::path::PathBuf;

use entrance_core::finite::ChainSpec;
use entrance_core::laws::LawSpec;
use entrance_core::measures::Orthant;
use entrance_core::target::TargetSet;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::Spanned;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("line {line}: experiment `{name}`: {message}")]
    Invalid { line: usize, name: String, message: String },
    #[error("no seed: pass --seed or set `seed` in the config")]
    MissingSeed,
    #[error("config has no [[experiment]] tables")]
    Empty,
    #[error("unknown suite `{0}`; expected exact, mc-fast or mc-full")]
    UnknownSuite(String),
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    FiniteLab,
    FiniteChain,
    Measure,
    Stationarity,
    Alternation,
    LlnOvershoots,
    CltLevelCrossings,
    ExpectedCrossings,
    Kac,
    HopfRatio,
    CrossOracle,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 11] = [
        ExperimentKind::FiniteLab,
        ExperimentKind::FiniteChain,
        ExperimentKind::Measure,
        ExperimentKind::Stationarity,
        ExperimentKind::Alternation,
        ExperimentKind::LlnOvershoots,
        ExperimentKind::CltLevelCrossings,
        ExperimentKind::ExpectedCrossings,
        ExperimentKind::Kac,
        ExperimentKind::HopfRatio,
        ExperimentKind::CrossOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::FiniteLab => "finite_lab",
            ExperimentKind::FiniteChain => "finite_chain",
            ExperimentKind::Measure => "measure",
            ExperimentKind::Stationarity => "stationarity",
            ExperimentKind::Alternation => "alternation",
            ExperimentKind::LlnOvershoots => "lln_overshoots",
            ExperimentKind::CltLevelCrossings => "clt_level_crossings",
            ExperimentKind::ExpectedCrossings => "expected_crossings",
            ExperimentKind::Kac => "kac",
            ExperimentKind::HopfRatio => "hopf_ratio",
            ExperimentKind::CrossOracle => "cross_oracle",
        }
    }

    /// One-line description and the fields the kind needs.
    pub fn describe(self) -> (&'static str, &'static str) {
        match self {
            ExperimentKind::FiniteLab => ("identity checks on seeded random irreducible chains", "n_chains, n_states [exact]"),
            ExperimentKind::FiniteChain => ("identity checks on one given chain", "chain [exact]"),
            ExperimentKind::Measure => ("CSV dump of a closed-form lattice measure", "law, measure [target, window, exact]"),
            ExperimentKind::Stationarity => ("one-step stationarity of pi_+ / pi_- for the entrance chain", "law, target, n_samples [horizon]"),
            ExperimentKind::Alternation => ("pi_- -> pi_+ and pi_+ -> pi_- alternation", "law, n_samples [horizon]"),
            ExperimentKind::LlnOvershoots => ("law of large numbers for overshoots", "law, n_crossings [starts, max_steps]"),
            ExperimentKind::CltLevelCrossings => ("half-normal limit of zero-crossing counts", "law, n_steps, n_replicas [starts]"),
            ExperimentKind::ExpectedCrossings => ("expected level crossings per excursion", "law, side, n_excursions [levels, horizon]"),
            ExperimentKind::Kac => ("Kac reconstruction of lambda on a window", "law, n_excursions [window, horizon]"),
            ExperimentKind::HopfRatio => ("entrance-count ratio for a planar walk", "law, b1, b2, n_entrances [start_point, max_steps]"),
            ExperimentKind::CrossOracle => ("sampled subchain kernels against exact kernels", "n_chains, n_states, samples_per_row [horizon]"),
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpec {
    /// `[0, inf)^d`.
    Nonneg,
    /// `(-inf, 0)^d`.
    Neg,
}

impl TargetSpec {
    pub fn build(self) -> TargetSet {
        match self {
            TargetSpec::Nonneg => TargetSet::nonneg_orthant(),
            TargetSpec::Neg => TargetSet::neg_orthant(),
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SideSpec {
    Plus,
    Minus,
}

impl SideSpec {
    pub fn orthant(self) -> Orthant {
        match self {
            SideSpec::Plus => Orthant::Plus,
            SideSpec::Minus => Orthant::Minus,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Pi,
    PiPlus,
    PiMinus,
    LambdaEntrance,
    LambdaExit,
}

/// One `[[experiment]]` table. Which fields are required depends on `kind`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub name: Option<String>,
    /// Failures of optional experiments are reported but do not fail the run.
    #[serde(default)]
    pub optional: bool,
    pub law: Option<LawSpec>,
    pub chain: Option<ChainSpec>,
    pub target: Option<TargetSpec>,
    pub side: Option<SideSpec>,
    pub measure: Option<MeasureKind>,
    /// Exact rational arithmetic for finite chains and measure dumps.
    #[serde(default)]
    pub exact: bool,
    pub n_chains: Option<u64>,
    pub n_states: Option<u64>,
    pub n_samples: Option<u64>,
    pub n_steps: Option<u64>,
    pub n_replicas: Option<u64>,
    pub n_crossings: Option<u64>,
    pub n_excursions: Option<u64>,
    pub n_entrances: Option<u64>,
    pub samples_per_row: Option<u64>,
    pub horizon: Option<u64>,
    pub max_steps: Option<u64>,
    pub starts: Option<Vec<f64>>,
    pub levels: Option<Vec<f64>>,
    /// Per-axis window `[lo, hi]` in span units.
    pub window: Option<Vec<(i64, i64)>>,
    pub start_point: Option<Vec<i64>>,
    pub b1: Option<Vec<Vec<i64>>>,
    pub b2: Option<Vec<Vec<i64>>>,
    /// Overrides the default tolerance of every report of this experiment.
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub reports: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    #[serde(default)]
    output: OutputConfig,
    #[serde(default)]
    experiment: Vec<Spanned<ExperimentConfig>>,
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub name: String,
    pub line: usize,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug)]
pub struct Config {
    pub seed: Option<u64>,
    pub output: OutputConfig,
    pub experiments: Vec<Experiment>,
    /// Hex SHA-256 of the config text.
    pub hash: String,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if raw.experiment.is_empty() {
            return Err(ConfigError::Empty);
        }
        let mut experiments = Vec::with_capacity(raw.experiment.len());
        for (i, spanned) in raw.experiment.into_iter().enumerate() {
            let line = line_of(text, spanned.span().start);
            let config = spanned.into_inner();
            let name = config.name.clone().unwrap_or_else(|| format!("{}-{i}", config.kind.name()));
            let e = Experiment { name, line, config };
            e.validate()?;
            experiments.push(e);
        }
        Ok(Config { seed: raw.seed, output: raw.output, experiments, hash: sha256_hex(text.as_bytes()) })
    }

    pub fn load(path: &std::path::Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Config::parse(&text)
    }
}

impl Experiment {
    pub fn invalid(&self, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid { line: self.line, name: self.name.clone(), message: message.into() }
    }

    fn missing(&self, field: &str) -> ConfigError {
        self.invalid(format!("missing field `{field}` (required for kind `{}`)", self.config.kind.name()))
    }

    pub fn law(&self) -> Result<&LawSpec, ConfigError> {
        self.config.law.as_ref().ok_or_else(|| self.missing("law"))
    }

    pub fn size(&self, field: &'static str) -> Result<u64, ConfigError> {
        let c = &self.config;
        let v = match field {
            "n_chains" => c.n_chains,
            "n_states" => c.n_states,
            "n_samples" => c.n_samples,
            "n_steps" => c.n_steps,
            "n_replicas" => c.n_replicas,
            "n_crossings" => c.n_crossings,
            "n_excursions" => c.n_excursions,
            "n_entrances" => c.n_entrances,
            "samples_per_row" => c.samples_per_row,
            _ => unreachable!("unknown size field {field}"),
        };
        v.ok_or_else(|| self.missing(field))
    }

    pub fn require<'a, T>(&self, field: &str, v: &'a Option<T>) -> Result<&'a T, ConfigError> {
        v.as_ref().ok_or_else(|| self.missing(field))
    }

    fn validate(&self) -> Result<(), ConfigError> {
        use ExperimentKind::*;
        let c = &self.config;
        let sizes: &[&'static str] = match c.kind {
            FiniteLab => &["n_chains", "n_states"],
            FiniteChain | Measure => &[],
            Stationarity | Alternation => &["n_samples"],
            LlnOvershoots => &["n_crossings"],
            CltLevelCrossings => &["n_steps", "n_replicas"],
            ExpectedCrossings | Kac => &["n_excursions"],
            HopfRatio => &["n_entrances"],
            CrossOracle => &["n_chains", "n_states", "samples_per_row"],
        };
        for f in sizes {
            self.size(f)?;
        }
        let needs_law = !matches!(c.kind, FiniteLab | FiniteChain | CrossOracle);
        if needs_law {
            self.law()?;
        }
        match c.kind {
            FiniteChain => {
                self.require("chain", &c.chain)?;
            }
            Measure => {
                let m = self.require("measure", &c.measure)?;
                if matches!(m, MeasureKind::LambdaEntrance | MeasureKind::LambdaExit) {
                    self.require("target", &c.target)?;
                }
            }
            Stationarity => {
                self.require("target", &c.target)?;
            }
            ExpectedCrossings => {
                self.require("side", &c.side)?;
            }
            HopfRatio => {
                self.require("b1", &c.b1)?;
                self.require("b2", &c.b2)?;
            }
            _ => {}
        }
        let all_sizes = [
            ("n_chains", c.n_chains),
            ("n_states", c.n_states),
            ("n_samples", c.n_samples),
            ("n_steps", c.n_steps),
            ("n_replicas", c.n_replicas),
            ("n_crossings", c.n_crossings),
            ("n_excursions", c.n_excursions),
            ("n_entrances", c.n_entrances),
            ("samples_per_row", c.samples_per_row),
            ("horizon", c.horizon),
            ("max_steps", c.max_steps),
        ];
        for (field, v) in all_sizes {
            if v == Some(0) {
                return Err(self.invalid(format!("field `{field}` must be positive")));
            }
        }
        if matches!(c.kind, FiniteLab | CrossOracle) && c.n_states.is_some_and(|n| n < 2) {
            return Err(self.invalid("field `n_states` must be at least 2"));
        }
        if let Some(t) = c.tolerance {
            if !(t.is_finite() && t >= 0.0) {
                return Err(self.invalid("field `tolerance` must be a nonnegative number"));
            }
        }
        if let Some(w) = &c.window {
            if w.iter().any(|(lo, hi)| lo > hi) {
                return Err(self.invalid("field `window` has an axis with lo > hi"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_law_names_the_field() {
        let text = "seed = 1\n\n[[experiment]]\nkind = \"stationarity\"\ntarget = \"nonneg\"\nn_samples = 10\n";
        let err = Config::parse(text).unwrap_err().to_string();
        assert!(err.contains("`law`"), "{err}");
        assert!(err.starts_with("line 3"), "{err}");
    }

    #[test]
    fn zero_sizes_are_rejected() {
        let text = "[[experiment]]\nkind = \"finite_lab\"\nn_chains = 0\nn_states = 4\n";
        let err = Config::parse(text).unwrap_err().to_string();
        assert!(err.contains("`n_chains` must be positive"), "{err}");
    }

    #[test]
    fn unknown_fields_and_kinds_fail_to_parse() {
        let err = Config::parse("[[experiment]]\nkind = \"finite_lab\"\nn_chain = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)), "{err}");
        assert!(Config::parse("[[experiment]]\nkind = \"bogus\"\n").is_err());
    }

    #[test]
    fn rational_law_entries_parse() {
        let text = r#"
seed = 3
[[experiment]]
kind = "alternation"
law = { kind = "lattice", entries = [[-1, "2/3"], [2, "1/3"]] }
n_samples = 100
"#;
        let c = Config::parse(text).unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.experiments[0].name, "alternation-0");
        assert_eq!(c.hash.len(), 64);
        c.experiments[0].law().unwrap().build().unwrap();
    }
}
