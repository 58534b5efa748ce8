//! Experiment configuration in TOML.
//!
//! ```toml
//! seed = 7                      # optional, overrides optimizer.seed
//! out = "results"               # optional, overridden by --out
//! patterns = ["uniform", "alternating", "custom:ru,rd"]
//! n_v = [4, 6]
//!
//! [model]
//! kind = "diagonal-chains"      # fermi-surface | band-insulator | pip-sc
//! direction = -1                # | diagonal-chains | staggered-onsite
//!
//! [lattice]
//! lx = 16
//! ly = 16
//! bc_x = "anti-periodic"        # default
//! bc_y = "periodic"             # default
//!
//! [optimizer]                   # every key optional
//! n_starts = 10
//!
//! [observables]
//! occupation = true
//! correlator_max_x = 20
//! chern_radii = [4.0, 8.0, 12.0]
//! ```

use std::path::{Path, PathBuf};

use isogftns::iso::{ArrowPattern, LegSet};
use isogftns::optimize::common_cell;
use isogftns::{Boundary, CellShape, ModelKind, ModelSpec, MomentumGrid, OptimConfig};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::CliError;

fn anti_periodic() -> Boundary {
    Boundary::AntiPeriodic
}

fn periodic() -> Boundary {
    Boundary::Periodic
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub lx: usize,
    pub ly: usize,
    #[serde(default = "anti_periodic")]
    pub bc_x: Boundary,
    #[serde(default = "periodic")]
    pub bc_y: Boundary,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservableRequest {
    /// Unfolded `n(k)` on the full momentum grid.
    pub occupation: bool,
    /// Correlator `Γ¹²_{(x,0),(0,0)}` for `x = 0..=correlator_max_x`.
    pub correlator_max_x: Option<usize>,
    /// Real-space Chern number at each radius.
    pub chern_radii: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub lattice: LatticeConfig,
    pub patterns: Vec<String>,
    pub n_v: Vec<usize>,
    #[serde(default)]
    pub optimizer: OptimConfig,
    #[serde(default)]
    pub observables: ObservableRequest,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Parses `unconstrained`, `uniform`, `alternating` or
/// `custom:<legs>,<legs>[,<legs>,<legs>]` with legs drawn from `l d r u`.
pub fn parse_pattern(s: &str) -> Result<ArrowPattern, String> {
    match s {
        "unconstrained" => Ok(ArrowPattern::Unconstrained),
        "uniform" => Ok(ArrowPattern::Uniform),
        "alternating" => Ok(ArrowPattern::Alternating),
        _ => {
            let body = s.strip_prefix("custom:").ok_or_else(|| {
                format!("unknown pattern {s:?} (expected unconstrained, uniform, alternating or custom:<legs>,...)")
            })?;
            let sets = body
                .split(',')
                .map(|part| {
                    LegSet::parse(part.trim())
                        .ok_or_else(|| format!("invalid leg set {part:?} in pattern {s:?}"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if ![1, 2, 4].contains(&sets.len()) {
                return Err(format!("custom pattern {s:?} must list 1, 2 or 4 sites"));
            }
            Ok(ArrowPattern::Custom(sets))
        }
    }
}

/// A config with every derived object built and checked.
#[derive(Clone, Debug)]
pub struct ValidatedConfig {
    pub raw: ExperimentConfig,
    pub patterns: Vec<ArrowPattern>,
    pub optimizer: OptimConfig,
    /// Hex SHA-256 of the config file bytes.
    pub hash: String,
}

impl ValidatedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let field = |name: &str, msg: String| CliError::Config(format!("field `{name}`: {msg}"));
        if raw.patterns.is_empty() {
            return Err(field("patterns", "at least one pattern is required".into()));
        }
        if raw.n_v.is_empty() {
            return Err(field("n_v", "at least one bond size is required".into()));
        }
        let patterns = raw
            .patterns
            .iter()
            .map(|p| parse_pattern(p).map_err(|e| field("patterns", e)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut optimizer = raw.optimizer.clone();
        if let Some(seed) = raw.seed {
            optimizer.seed = seed;
        }
        optimizer.validate().map_err(|e| field("optimizer", e.to_string()))?;
        for r in &raw.observables.chern_radii {
            if !(*r > 0.0) {
                return Err(field("observables.chern_radii", format!("radius {r} must be positive")));
            }
        }
        let cfg = ValidatedConfig {
            hash: Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect(),
            raw,
            patterns,
            optimizer,
        };
        for pattern in &cfg.patterns {
            for &n_v in &cfg.raw.n_v {
                cfg.model_for(pattern)?;
                isogftns::iso::site_layouts(pattern, n_v, cfg.cell_for(pattern))
                    .map_err(|e| field("patterns", format!("{} at n_v = {n_v}: {e}", pattern.name())))?;
            }
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.optimizer.seed
    }

    /// Overrides the seed from the command line.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(seed) = seed {
            self.optimizer.seed = seed;
        }
        self
    }

    pub fn cell_for(&self, pattern: &ArrowPattern) -> CellShape {
        common_cell(self.raw.model.min_cell(), pattern.min_cell())
    }

    pub fn model_with_cell(&self, cell: CellShape) -> Result<ModelSpec, CliError> {
        let l = &self.raw.lattice;
        let grid = MomentumGrid::new(l.lx, l.ly, l.bc_x, l.bc_y, cell)
            .map_err(|e| CliError::Config(format!("field `lattice`: {e}")))?;
        ModelSpec::new(self.raw.model, grid).map_err(|e| CliError::Config(format!("field `model`: {e}")))
    }

    pub fn model_for(&self, pattern: &ArrowPattern) -> Result<ModelSpec, CliError> {
        self.model_with_cell(self.cell_for(pattern))
    }

    pub fn describe(&self) -> String {
        format!(
            "model={} lattice={}x{} patterns=[{}] n_v={:?} cells=[{}]",
            self.raw.model.name(),
            self.raw.lattice.lx,
            self.raw.lattice.ly,
            self.raw.patterns.join(","),
            self.raw.n_v,
            self.patterns.iter().map(|p| self.cell_for(p).to_string()).collect::<Vec<_>>().join(","),
        )
    }
}
