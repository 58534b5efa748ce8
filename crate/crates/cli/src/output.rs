//! CSV emission. Every file starts with a `#` header block naming the code
//! version, the config hash and the seed, followed by one column-name row.

use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Provenance lines written at the top of every CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub extra: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(config_hash: &str, seed: u64) -> Self {
        Provenance {
            config_hash: config_hash.to_string(),
            seed,
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.to_string(), value.to_string()));
        self
    }
}

/// In-memory CSV flushed with a single write.
#[derive(Clone, Debug)]
pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(provenance: &Provenance, columns: &[&str]) -> Self {
        let mut buf = String::new();
        let _ = writeln!(buf, "# version: {VERSION}");
        let _ = writeln!(buf, "# config-sha256: {}", provenance.config_hash);
        let _ = writeln!(buf, "# seed: {}", provenance.seed);
        for (k, v) in &provenance.extra {
            let _ = writeln!(buf, "# {k}: {v}");
        }
        buf.push_str(&columns.join(","));
        buf.push('\n');
        Csv {
            buf,
            columns: columns.len(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        debug_assert_eq!(fields.len(), self.columns);
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, &self.buf).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
    }
}

/// Shortest round-trip form of a float, switching to exponent notation for
/// very small or large magnitudes.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}
