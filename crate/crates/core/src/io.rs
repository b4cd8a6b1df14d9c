//! Measure files, run configuration and report envelopes.
//!
//! A measure file is a JSON object:
//!
//! ```json
//! {"version": 1, "kind": "tree", "depth": 1, "support_mode": "boundary-only", "masses": [0, 0.5, 0.5]}
//! {"version": 1, "kind": "bitree", "depths": [1, 1], "masses": [[0.25, 0.25], [0.25, 0.25]]}
//! ```
//!
//! Tree masses are listed in heap order from the root; bi-tree masses are the
//! boundary grid, one inner list per row. `version` may be omitted.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bitree::{build_bitree, BiMeasure};
use crate::error::{Error, Result};
use crate::tree::{build_tree, NodeValues, SupportMode, TreeMeasure};

/// Version written into every file and report this crate produces.
pub const FORMAT_VERSION: u32 = 1;

fn default_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeMeasureFile {
    #[serde(default = "default_version")]
    pub version: u32,
    pub depth: u32,
    pub support_mode: SupportMode,
    pub masses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiMeasureFile {
    #[serde(default = "default_version")]
    pub version: u32,
    pub depths: [u32; 2],
    pub masses: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MeasureFile {
    Tree(TreeMeasureFile),
    Bitree(BiMeasureFile),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParsedMeasure {
    Tree(TreeMeasure),
    BiTree(BiMeasure),
}

impl ParsedMeasure {
    pub fn kind(&self) -> &'static str {
        match self {
            ParsedMeasure::Tree(_) => "tree",
            ParsedMeasure::BiTree(_) => "bitree",
        }
    }
}

fn check_version(version: u32) -> Result<()> {
    if version == FORMAT_VERSION {
        Ok(())
    } else {
        Err(Error::MeasureFile(format!(
            "unsupported version {version}, expected {FORMAT_VERSION}"
        )))
    }
}

impl MeasureFile {
    pub fn from_tree(mu: &TreeMeasure) -> Self {
        MeasureFile::Tree(TreeMeasureFile {
            version: FORMAT_VERSION,
            depth: mu.shape().depth(),
            support_mode: mu.mode(),
            masses: mu.masses().to_vec(),
        })
    }

    pub fn from_bitree(mu: &BiMeasure) -> Self {
        let (n, m) = mu.shape().depths();
        let cols = mu.shape().grid().1;
        MeasureFile::Bitree(BiMeasureFile {
            version: FORMAT_VERSION,
            depths: [n, m],
            masses: mu.cells().chunks(cols).map(<[f64]>::to_vec).collect(),
        })
    }

    /// Validates shape and masses.
    pub fn into_measure(self) -> Result<ParsedMeasure> {
        match self {
            MeasureFile::Tree(file) => {
                check_version(file.version)?;
                let shape = build_tree(file.depth)?;
                if file.masses.len() != shape.node_count() {
                    return Err(Error::MeasureFile(format!(
                        "a depth-{} tree has {} nodes but {} masses were given",
                        file.depth,
                        shape.node_count(),
                        file.masses.len()
                    )));
                }
                Ok(ParsedMeasure::Tree(TreeMeasure::new(
                    shape,
                    file.masses,
                    file.support_mode,
                )?))
            }
            MeasureFile::Bitree(file) => {
                check_version(file.version)?;
                let [n, m] = file.depths;
                let shape = build_bitree(n, m)?;
                let (rows, cols) = shape.grid();
                if file.masses.len() != rows {
                    return Err(Error::MeasureFile(format!(
                        "depths [{n}, {m}] need {rows} rows but {} were given",
                        file.masses.len()
                    )));
                }
                if let Some((i, row)) = file.masses.iter().enumerate().find(|(_, r)| r.len() != cols) {
                    return Err(Error::MeasureFile(format!(
                        "row {i} has {} entries, expected {cols}",
                        row.len()
                    )));
                }
                let cells = file.masses.into_iter().flatten().collect();
                Ok(ParsedMeasure::BiTree(BiMeasure::new(shape, cells)?))
            }
        }
    }
}

/// Parses and validates a measure file.
pub fn parse_measure_file(bytes: &[u8]) -> Result<ParsedMeasure> {
    let file: MeasureFile = serde_json::from_slice(bytes)?;
    file.into_measure()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

/// Settings shared by every harness run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub trials: usize,
    pub depth: Option<u32>,
    pub depths: Option<(u32, u32)>,
    pub tol: f64,
    pub format: OutputFormat,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 100,
            depth: None,
            depths: None,
            tol: 1e-12,
            format: OutputFormat::Json,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Precondition(format!(
                "tolerance must be positive and finite, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Envelope for JSON reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report<S, R> {
    pub version: u32,
    pub command: String,
    pub config: RunConfig,
    pub summary: S,
    pub rows: Vec<R>,
}

impl<S, R> Report<S, R> {
    pub fn new(command: &str, config: &RunConfig, summary: S, rows: Vec<R>) -> Self {
        Self {
            version: FORMAT_VERSION,
            command: command.to_string(),
            config: config.clone(),
            summary,
            rows,
        }
    }
}

impl<S: Serialize, R: Serialize> Report<S, R> {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// Comment lines that precede CSV rows: version, command and summary.
    pub fn csv_preamble(&self) -> Result<String> {
        Ok(format!(
            "# carleson report version {}\n# command: {}\n# summary: {}\n",
            self.version,
            self.command,
            serde_json::to_string(&self.summary)?
        ))
    }
}
