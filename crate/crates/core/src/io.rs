//! On-disk formats: binary matrix files, network bundles and JSON artifacts.
//!
//! A matrix file is a 16-byte header followed by the entries as row-major
//! little-endian `f64`:
//!
//! ```text
//! offset 0  magic  b"SEMB"
//! offset 4  u16    format version (1)
//! offset 6  u32    rows
//! offset 10 u32    cols
//! offset 14 [u8;2] reserved, zero
//! ```
//!
//! A bundle is a directory holding `manifest.json`, one matrix file per
//! agent and an optional `labels.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{validate_network, AgentEmbeddings, StackedEmbeddings};

pub const MAGIC: &[u8; 4] = b"SEMB";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const MANIFEST: &str = "manifest.json";

/// Serializes a matrix as a list of rows.
pub mod serde_matrix {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}

pub fn encode_matrix(m: &Mat) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    out.extend_from_slice(&[0, 0]);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
    out
}

pub fn decode_matrix(bytes: &[u8], what: &str) -> Result<Mat> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("{what}: {} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("{what}: bad magic")));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("{what}: unsupported version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + 8 * rows * cols;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{what}: {} bytes, header {rows}×{cols} needs {expected}",
            bytes.len()
        )));
    }
    let body = &bytes[HEADER_LEN..];
    Ok(Mat::from_fn(rows, cols, |r, c| {
        let at = 8 * (r * cols + c);
        f64::from_le_bytes(body[at..at + 8].try_into().unwrap())
    }))
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_matrix(path: &Path, m: &Mat) -> Result<String> {
    let bytes = encode_matrix(m);
    write_atomic(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn read_matrix(path: &Path) -> Result<Mat> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes, &path.display().to_string())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEntry {
    pub name: String,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u16,
    #[serde(rename = "V")]
    pub num_agents: usize,
    pub d: usize,
    pub n: usize,
    pub endianness: String,
    pub agents: Vec<AgentEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub families: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_sha256: Option<String>,
    /// Free-form provenance (e.g. the generating spec or extraction settings).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

/// A loaded bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub names: Vec<String>,
    pub embeddings: StackedEmbeddings,
    pub labels: Option<Vec<usize>>,
    pub families: Option<Vec<usize>>,
    pub provenance: Option<serde_json::Value>,
}

pub fn write_network(
    dir: &Path,
    names: &[String],
    agents: &[AgentEmbeddings],
    labels: Option<&[usize]>,
    families: Option<&[usize]>,
    provenance: Option<serde_json::Value>,
) -> Result<Manifest> {
    let net = validate_network(agents.to_vec())?;
    if names.len() != agents.len() {
        return Err(Error::ManifestMismatch(format!(
            "{} names for {} agents",
            names.len(),
            agents.len()
        )));
    }
    if let Some(f) = families {
        if f.len() != agents.len() {
            return Err(Error::ManifestMismatch(format!("{} family labels for {} agents", f.len(), agents.len())));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(agents.len());
    for (i, (name, agent)) in names.iter().zip(net.blocks()).enumerate() {
        let file = format!("agent_{i:03}.semb");
        let sha256 = write_matrix(&dir.join(&file), &agent.matrix)?;
        entries.push(AgentEntry {
            name: name.clone(),
            file,
            sha256,
        });
    }
    let (labels_file, labels_sha256) = match labels {
        Some(l) => {
            if l.len() != net.samples() {
                return Err(Error::ManifestMismatch(format!(
                    "{} labels for {} samples",
                    l.len(),
                    net.samples()
                )));
            }
            let mut bytes = serde_json::to_vec(l)?;
            bytes.push(b'\n');
            write_atomic(&dir.join("labels.json"), &bytes)?;
            (Some("labels.json".to_string()), Some(sha256_hex(&bytes)))
        }
        None => (None, None),
    };
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        num_agents: net.num_agents(),
        d: net.dim(),
        n: net.samples(),
        endianness: "little".into(),
        agents: entries,
        families: families.map(|f| f.to_vec()),
        labels_file,
        labels_sha256,
        provenance,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn check_sha(expected: &str, bytes: &[u8], what: &str) -> Result<()> {
    if !expected.is_empty() && !expected.eq_ignore_ascii_case(&sha256_hex(bytes)) {
        return Err(Error::Checksum(what.to_string()));
    }
    Ok(())
}

/// Loads and validates a bundle: header, checksums and declared shapes.
pub fn read_network(dir: &Path) -> Result<Network> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "manifest format_version {} is not {FORMAT_VERSION}",
            manifest.format_version
        )));
    }
    if manifest.endianness != "little" {
        return Err(Error::Format(format!("unsupported endianness `{}`", manifest.endianness)));
    }
    if manifest.agents.len() != manifest.num_agents {
        return Err(Error::ManifestMismatch(format!(
            "V = {} but {} agent entries",
            manifest.num_agents,
            manifest.agents.len()
        )));
    }
    let mut agents = Vec::with_capacity(manifest.num_agents);
    for (i, entry) in manifest.agents.iter().enumerate() {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let m = decode_matrix(&bytes, &entry.file)?;
        check_sha(&entry.sha256, &bytes, &entry.file)?;
        if m.shape() != (manifest.d, manifest.n) {
            return Err(Error::ManifestMismatch(format!(
                "{} is {}×{}, manifest declares {}×{}",
                entry.file,
                m.nrows(),
                m.ncols(),
                manifest.d,
                manifest.n
            )));
        }
        agents.push(AgentEmbeddings::new(i, m));
    }
    let labels = match &manifest.labels_file {
        Some(file) => {
            let path = dir.join(file);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if let Some(sha) = &manifest.labels_sha256 {
                check_sha(sha, &bytes, file)?;
            }
            let labels: Vec<usize> = serde_json::from_slice(&bytes)?;
            if labels.len() != manifest.n {
                return Err(Error::ManifestMismatch(format!(
                    "{} labels, manifest declares n = {}",
                    labels.len(),
                    manifest.n
                )));
            }
            Some(labels)
        }
        None => None,
    };
    if let Some(f) = &manifest.families {
        if f.len() != manifest.num_agents {
            return Err(Error::ManifestMismatch(format!(
                "{} family labels for V = {}",
                f.len(),
                manifest.num_agents
            )));
        }
    }
    Ok(Network {
        names: manifest.agents.iter().map(|a| a.name.clone()).collect(),
        embeddings: validate_network(agents)?,
        labels,
        families: manifest.families,
        provenance: manifest.provenance,
    })
}
