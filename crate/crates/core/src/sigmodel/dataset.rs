//! On-disk dataset layout: `manifest.json` plus one `PKF1` binary per split.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! "PKF1" | count: u64 | count × { n: u32 | P: u32 | s: f64[n] | p: f64[n]
//!                                 | z: f64[n] | P × (position: u32, amplitude: f64) }
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DatasetSpec, Peak, RecordGenerator, SignalTriple, Split, DEFAULT_TRUNC_EPS};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PKF1";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub split: Split,
    pub file: String,
    pub records: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub name: String,
    #[serde(flatten)]
    pub spec: DatasetSpec,
    pub kernel_trunc_eps: f64,
    pub splits: Vec<SplitEntry>,
}

impl Manifest {
    pub fn entry(&self, split: Split) -> Option<&SplitEntry> {
        self.splits.iter().find(|e| e.split == split)
    }
}

/// Generates all records of one split, in index order.
pub fn generate_split(generator: &RecordGenerator, split: Split, count: usize) -> Result<Vec<SignalTriple>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            generator.record(split, i).map_err(|e| Error::Record {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn encode_records(records: &[SignalTriple]) -> Vec<u8> {
    let bytes: usize = records
        .iter()
        .map(|r| 8 + 24 * r.n() + 12 * r.peaks.len())
        .sum();
    let mut buf = Vec::with_capacity(12 + bytes);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        buf.extend_from_slice(&(r.n() as u32).to_le_bytes());
        buf.extend_from_slice(&(r.peaks.len() as u32).to_le_bytes());
        for v in r.s.iter().chain(&r.p).chain(&r.z) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for pk in &r.peaks {
            buf.extend_from_slice(&(pk.position as u32).to_le_bytes());
            buf.extend_from_slice(&pk.amplitude.to_le_bytes());
        }
    }
    buf
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < len {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                reason: format!("truncated at byte {}", self.pos),
            });
        }
        let out = &self.data[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_records(data: &[u8], path: &Path) -> Result<Vec<SignalTriple>> {
    let mut cur = Cursor { data, pos: 0, path };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "bad magic".into(),
        });
    }
    let count = cur.u64()? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let n = cur.u32()? as usize;
        let np = cur.u32()? as usize;
        let s = cur.f64s(n)?;
        let p = cur.f64s(n)?;
        let z = cur.f64s(n)?;
        let mut peaks = Vec::with_capacity(np);
        for _ in 0..np {
            let position = cur.u32()? as usize;
            let amplitude = cur.f64()?;
            peaks.push(Peak { position, amplitude });
        }
        records.push(SignalTriple { s, p, z, peaks });
    }
    if cur.pos != data.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("{} trailing bytes", data.len() - cur.pos),
        });
    }
    Ok(records)
}

/// Writes `records` to `path`, returning the hex SHA-256 of the bytes.
pub fn write_records(path: &Path, records: &[SignalTriple]) -> Result<String> {
    let buf = encode_records(records);
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&buf)))
}

pub fn read_records(path: &Path) -> Result<Vec<SignalTriple>> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_records(&data, path)
}

/// Generates every split of `spec` under `out_dir` and writes the manifest.
pub fn generate_dataset(spec: &DatasetSpec, name: &str, out_dir: &Path) -> Result<Manifest> {
    let generator = RecordGenerator::new(spec)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut splits = Vec::new();
    for split in Split::ALL {
        let count = spec.count(split);
        let records = generate_split(&generator, split, count)?;
        let file = format!("{}.bin", split.name());
        let sha256 = write_records(&out_dir.join(&file), &records)?;
        splits.push(SplitEntry {
            split,
            file,
            records: count,
            sha256,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        name: name.to_string(),
        spec: spec.clone(),
        kernel_trunc_eps: DEFAULT_TRUNC_EPS,
        splits,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// A dataset directory opened through its manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format {
            path,
            reason: format!("unsupported format version {}", manifest.format_version),
        });
    }
    Ok(Dataset {
        dir: dir.to_path_buf(),
        manifest,
    })
}

impl Dataset {
    pub fn spec(&self) -> &DatasetSpec {
        &self.manifest.spec
    }

    pub fn name(&self) -> &str {
        &self.manifest.name
    }

    /// Reads a split and checks it against the manifest checksum.
    pub fn load_split(&self, split: Split) -> Result<Vec<SignalTriple>> {
        let entry = self.manifest.entry(split).ok_or_else(|| Error::Format {
            path: self.dir.join(MANIFEST_FILE),
            reason: format!("no {} split", split.name()),
        })?;
        let path = self.dir.join(&entry.file);
        let data = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let digest = hex::encode(Sha256::digest(&data));
        if digest != entry.sha256 {
            return Err(Error::Format {
                path,
                reason: "checksum mismatch".into(),
            });
        }
        let records = decode_records(&data, &path)?;
        if records.len() != entry.records {
            return Err(Error::Format {
                path,
                reason: format!("expected {} records, found {}", entry.records, records.len()),
            });
        }
        Ok(records)
    }
}
