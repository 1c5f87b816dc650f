//! On-disk formats: the MSFC tensor container, ground truth and fit
//! documents.
//!
//! An MSFC file is the 4-byte magic `MSFC`, a little-endian u64 giving the
//! length of a UTF-8 JSON metadata document, the document itself, and the
//! payload: every entry of every full V×V slice, subject-major then state,
//! as little-endian f64 (continuous) or one byte per entry (binary).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cavi::FitDiagnostics;
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::sim::GroundTruth;
use crate::state::VariationalState;
use crate::summary::FitSummary;
use crate::tensor::{ConnectivityTensor, Family};

pub const MAGIC: &[u8; 4] = b"MSFC";
pub const FORMAT_VERSION: u32 = 1;
/// File name of the tensor inside a data directory.
pub const TENSOR_FILE: &str = "tensor.msfc";
/// File name of the ground truth inside a data directory.
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsfcMeta {
    pub format_version: u32,
    pub n_subjects: usize,
    pub n_states: usize,
    pub n_nodes: usize,
    pub family: Family,
    pub state_names: Vec<String>,
    pub endianness: String,
    /// Free-form record of how the data were produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl MsfcMeta {
    pub fn for_tensor(tensor: &ConnectivityTensor, state_names: Option<Vec<String>>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            n_subjects: tensor.n_subjects(),
            n_states: tensor.n_states(),
            n_nodes: tensor.n_nodes(),
            family: tensor.family(),
            state_names: state_names.unwrap_or_else(|| (1..=tensor.n_states()).map(|m| format!("state{m}")).collect()),
            endianness: "little".into(),
            provenance: None,
        }
    }

    fn entry_bytes(&self) -> usize {
        match self.family {
            Family::Continuous => 8,
            Family::Binary => 1,
        }
    }

    fn payload_len(&self) -> Option<usize> {
        self.n_subjects
            .checked_mul(self.n_states)?
            .checked_mul(self.n_nodes)?
            .checked_mul(self.n_nodes)?
            .checked_mul(self.entry_bytes())
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn encode_msfc(tensor: &ConnectivityTensor, meta: &MsfcMeta) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(meta)?;
    let mut out = Vec::with_capacity(12 + json.len() + meta.payload_len().unwrap_or(0));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    match tensor.family() {
        Family::Continuous => tensor.values().iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        Family::Binary => out.extend(tensor.values().iter().map(|&x| x as u8)),
    }
    Ok(out)
}

pub fn decode_msfc(bytes: &[u8]) -> Result<(ConnectivityTensor, MsfcMeta)> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing MSFC magic bytes".into()));
    }
    let meta_len = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
    let meta_end = usize::try_from(meta_len)
        .ok()
        .and_then(|n| n.checked_add(12))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::Format(format!("metadata length {meta_len} runs past the end of the file")))?;
    let meta: MsfcMeta = parse_json(&bytes[12..meta_end])?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            meta.format_version
        )));
    }
    if meta.endianness != "little" {
        return Err(Error::Format(format!("unsupported endianness {:?}", meta.endianness)));
    }
    if meta.n_subjects == 0 || meta.n_states == 0 || meta.n_nodes == 0 {
        return Err(Error::Format("metadata dimensions must be positive".into()));
    }
    if meta.state_names.len() != meta.n_states {
        return Err(Error::Format(format!(
            "{} state names for {} states",
            meta.state_names.len(),
            meta.n_states
        )));
    }
    let expected = meta
        .payload_len()
        .ok_or_else(|| Error::Format("metadata dimensions overflow".into()))?;
    let payload = &bytes[meta_end..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload holds {} bytes but the metadata requires {expected}",
            payload.len()
        )));
    }
    let values: Vec<f64> = match meta.family {
        Family::Continuous => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
        Family::Binary => payload.iter().map(|&b| f64::from(b)).collect(),
    };
    let tensor = ConnectivityTensor::validate(values, meta.n_subjects, meta.n_states, meta.n_nodes, meta.family)?;
    Ok((tensor, meta))
}

pub fn write_msfc(tensor: &ConnectivityTensor, path: &Path) -> Result<()> {
    write_msfc_with(tensor, &MsfcMeta::for_tensor(tensor, None), path)
}

pub fn write_msfc_with(tensor: &ConnectivityTensor, meta: &MsfcMeta, path: &Path) -> Result<()> {
    write_atomic(path, &encode_msfc(tensor, meta)?)
}

pub fn read_msfc(path: &Path) -> Result<ConnectivityTensor> {
    read_msfc_with_meta(path).map(|(t, _)| t)
}

pub fn read_msfc_with_meta(path: &Path) -> Result<(ConnectivityTensor, MsfcMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_msfc(&bytes)
}

/// The tensor file for a `--data` argument: the argument itself, or
/// `tensor.msfc` inside it when it is a directory.
pub fn tensor_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join(TENSOR_FILE)
    } else {
        data.to_path_buf()
    }
}

/// Deserialises JSON, reporting the path of the offending field.
pub fn parse_json<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_json(&bytes)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn write_truth(truth: &GroundTruth, path: &Path) -> Result<()> {
    write_json(truth, path)
}

pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    read_json(path)
}

/// Everything needed to reuse or audit a fit. Floats are written in the
/// shortest form that parses back to the identical f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDocument {
    pub format_version: u32,
    pub config: ModelConfig,
    pub state: VariationalState,
    pub summary: FitSummary,
    pub diagnostics: FitDiagnostics,
}

impl FitDocument {
    pub fn new(config: ModelConfig, state: VariationalState, summary: FitSummary, diagnostics: FitDiagnostics) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config,
            state,
            summary,
            diagnostics,
        }
    }

    /// Checks the state against the block counts recorded in the config.
    pub fn check(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported fit format_version {}", self.format_version)));
        }
        let s = &self.state;
        let shapes_ok = s.n_states() == self.config.n_states()
            && s.eta.len() == s.n_states()
            && s.zeta.len() == s.n_states()
            && s.truncation == self.config.truncation
            && (0..s.n_states()).all(|m| {
                s.n_blocks(m) == self.config.blocks_per_state[m] && s.zeta[m].len() == s.n_pairs(m)
            });
        if !shapes_ok {
            return Err(Error::Schema {
                path: "state".into(),
                message: format!("dimensions do not match blocks_per_state {:?}", self.config.blocks_per_state),
            });
        }
        s.check()
    }
}

pub fn save_fit(doc: &FitDocument, path: &Path) -> Result<()> {
    write_json(doc, path)
}

pub fn load_fit(path: &Path) -> Result<FitDocument> {
    let doc: FitDocument = read_json(path)?;
    doc.check()?;
    Ok(doc)
}

/// Reads one V×V matrix from a comma-separated file without a header.
pub fn read_csv_matrix(path: &Path) -> Result<(Vec<f64>, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        for (c, field) in record.iter().enumerate() {
            let x: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("{}: row {}, column {}: {field:?} is not a number", path.display(), r + 1, c + 1)))?;
            values.push(x);
        }
        rows += 1;
    }
    if rows == 0 || values.len() != rows * rows {
        return Err(Error::Format(format!(
            "{}: expected a square matrix, got {} values in {rows} rows",
            path.display(),
            values.len()
        )));
    }
    Ok((values, rows))
}

/// Builds a tensor from one CSV matrix per (subject, state): `paths[i][m]`.
pub fn import_csv(paths: &[Vec<PathBuf>], family: Family) -> Result<ConnectivityTensor> {
    let n_states = paths.first().map_or(0, Vec::len);
    if paths.is_empty() || n_states == 0 || paths.iter().any(|p| p.len() != n_states) {
        return Err(Error::Dimension("every subject needs one matrix per state".into()));
    }
    let mut values = Vec::new();
    let mut n_nodes = None;
    for row in paths {
        for path in row {
            let (x, v) = read_csv_matrix(path)?;
            if *n_nodes.get_or_insert(v) != v {
                return Err(Error::Dimension(format!("{} is {v}×{v}, expected {}", path.display(), n_nodes.unwrap())));
            }
            values.extend(x);
        }
    }
    ConnectivityTensor::validate(values, paths.len(), n_states, n_nodes.unwrap_or(0), family)
}
