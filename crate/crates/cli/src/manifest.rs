use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Record of one run, written beside its outputs.
///
/// `argv` plus the listed inputs reproduce the outputs bit for bit: all
/// randomness derives from `seeds` through named sub-streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Full command line.
    pub argv: Vec<String>,
    /// Subcommand chain, e.g. `["fit", "g2"]`.
    pub command: Vec<String>,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Seconds since the Unix epoch at start.
    pub started_unix_s: f64,
    pub wall_clock_s: f64,
}

/// What a subcommand produced, before timing is attached.
#[derive(Debug)]
pub struct Outcome {
    pub command: Vec<&'static str>,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Where the manifest goes.
    pub manifest_path: PathBuf,
    /// One-line human summary for stdout.
    pub summary: String,
}

impl Outcome {
    pub fn new(command: Vec<&'static str>, config: serde_json::Value) -> Self {
        Outcome {
            command,
            config,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            manifest_path: PathBuf::new(),
            summary: String::new(),
        }
    }

    pub fn input(mut self, p: &Path) -> Self {
        self.inputs.push(p.to_path_buf());
        self
    }

    pub fn output(mut self, p: &Path) -> Self {
        self.outputs.push(p.to_path_buf());
        self
    }

    pub fn seed(mut self, s: u64) -> Self {
        self.seeds.push(s);
        self
    }

    pub fn manifest_at(mut self, p: PathBuf) -> Self {
        self.manifest_path = p;
        self
    }

    pub fn summary(mut self, s: impl Into<String>) -> Self {
        self.summary = s.into();
        self
    }
}
