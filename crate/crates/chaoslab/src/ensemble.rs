//! Seeded collections of per-replica measure statistics, with associative
//! merge and lossless persistence.
//!
//! A store is a 32-byte header followed by fixed-width records of
//! little-endian doubles, plus a JSON sidecar carrying the provenance
//! (seed, field spec, measure kind, stream range, column layout). CSV
//! export writes 17-significant-digit decimals so re-import reproduces
//! records exactly.

use crate::error::{Error, Result};
use crate::kernels::FieldSpec;
use crate::measure::MeasureKind;
use crate::stats;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const STORE_MAGIC: &[u8; 4] = b"CHAO";
const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleMeta {
    pub master_seed: u64,
    pub spec: FieldSpec,
    pub kind: MeasureKind,
    pub n: u64,
    /// Stream id range `[stream_lo, stream_hi)` covered by the records.
    pub stream_lo: u64,
    pub stream_hi: u64,
    /// Dyadic levels whose per-replica maximum mass is recorded.
    pub levels: Vec<u32>,
    /// Names of additional per-replica columns.
    pub extras: Vec<String>,
}

impl EnsembleMeta {
    /// Column names after `replica_id`, in record order.
    pub fn float_columns(&self) -> Vec<String> {
        let mut cols = vec!["total".to_string(), "m0".to_string(), "m1".to_string()];
        for level in &self.levels {
            cols.push(format!("max_level_{level}"));
        }
        cols.extend(self.extras.iter().cloned());
        cols
    }

    /// Identifier of the record layout; merging requires equal ids.
    pub fn schema_id(&self) -> u32 {
        let descriptor = format!("v{STORE_VERSION}|{}", self.float_columns().join(","));
        fnv1a(descriptor.as_bytes())
    }

    fn record_len(&self) -> usize {
        1 + 3 + self.levels.len() + self.extras.len()
    }
}

fn fnv1a(bytes: &[u8]) -> u32 {
    let mut hash: u32 = 0x811c9dc5;
    for &b in bytes {
        hash ^= b as u32;
        hash = hash.wrapping_mul(0x01000193);
    }
    hash
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaRecord {
    pub replica_id: u64,
    pub total: f64,
    pub m0: f64,
    pub m1: f64,
    pub max_masses: Vec<f64>,
    pub extras: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub meta: EnsembleMeta,
    pub records: Vec<ReplicaRecord>,
}

impl Ensemble {
    pub fn new(meta: EnsembleMeta, mut records: Vec<ReplicaRecord>) -> Result<Self> {
        records.sort_by_key(|r| r.replica_id);
        for r in &records {
            if r.max_masses.len() != meta.levels.len() || r.extras.len() != meta.extras.len() {
                return Err(Error::Config(
                    "record shape does not match ensemble schema".into(),
                ));
            }
        }
        if records.windows(2).any(|w| w[0].replica_id == w[1].replica_id) {
            return Err(Error::Config("duplicate replica ids in ensemble".into()));
        }
        let meta = EnsembleMeta {
            n: records.len() as u64,
            ..meta
        };
        Ok(Ensemble { meta, records })
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn totals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.total).collect()
    }

    pub fn halves(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.m0, r.m1)).collect()
    }

    /// Column of per-replica maxima for a recorded level.
    pub fn max_column(&self, level: u32) -> Result<Vec<f64>> {
        let idx = self
            .meta
            .levels
            .iter()
            .position(|&l| l == level)
            .ok_or_else(|| Error::Config(format!("level {level} not recorded")))?;
        Ok(self.records.iter().map(|r| r.max_masses[idx]).collect())
    }

    pub fn extra_column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .meta
            .extras
            .iter()
            .position(|e| e == name)
            .ok_or_else(|| Error::Config(format!("extra column {name:?} not recorded")))?;
        Ok(self.records.iter().map(|r| r.extras[idx]).collect())
    }

    /// Merge ensembles generated from the same configuration over disjoint
    /// stream ranges. Associative: records are keyed and re-sorted by
    /// replica id.
    pub fn merge(parts: &[Ensemble]) -> Result<Ensemble> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Config("merge of zero ensembles".into()))?;
        let schema = first.meta.schema_id();
        for p in &parts[1..] {
            if p.meta.schema_id() != schema {
                return Err(Error::Config("schema id mismatch in merge".into()));
            }
            if p.meta.master_seed != first.meta.master_seed
                || p.meta.spec != first.meta.spec
                || p.meta.kind != first.meta.kind
            {
                return Err(Error::Config("provenance mismatch in merge".into()));
            }
        }
        let mut records: Vec<ReplicaRecord> = Vec::new();
        for p in parts {
            records.extend(p.records.iter().cloned());
        }
        let meta = EnsembleMeta {
            stream_lo: parts.iter().map(|p| p.meta.stream_lo).min().unwrap(),
            stream_hi: parts.iter().map(|p| p.meta.stream_hi).max().unwrap(),
            ..first.meta.clone()
        };
        // `new` re-sorts and rejects overlapping stream ids.
        Ensemble::new(meta, records).map_err(|_| {
            Error::Config("overlapping stream id ranges in merge".into())
        })
    }

    pub fn write_store<W: Write>(&self, mut w: W) -> Result<()> {
        let record_len = self.meta.record_len() as u32;
        w.write_all(STORE_MAGIC)?;
        w.write_all(&STORE_VERSION.to_le_bytes())?;
        w.write_all(&self.meta.schema_id().to_le_bytes())?;
        w.write_all(&record_len.to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        w.write_all(&[0u8; 8])?;
        for r in &self.records {
            w.write_all(&(r.replica_id as f64).to_le_bytes())?;
            w.write_all(&r.total.to_le_bytes())?;
            w.write_all(&r.m0.to_le_bytes())?;
            w.write_all(&r.m1.to_le_bytes())?;
            for v in &r.max_masses {
                w.write_all(&v.to_le_bytes())?;
            }
            for v in &r.extras {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_store<R: Read>(mut r: R, meta: EnsembleMeta) -> Result<Ensemble> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != STORE_MAGIC {
            return Err(Error::Config("bad magic in ensemble store".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        if u32::from_le_bytes(u32buf) != STORE_VERSION {
            return Err(Error::Config("unsupported store version".into()));
        }
        r.read_exact(&mut u32buf)?;
        let schema = u32::from_le_bytes(u32buf);
        if schema != meta.schema_id() {
            return Err(Error::Config(format!(
                "schema id mismatch: store has {schema:#x}, sidecar implies {:#x}",
                meta.schema_id()
            )));
        }
        r.read_exact(&mut u32buf)?;
        let record_len = u32::from_le_bytes(u32buf) as usize;
        if record_len != meta.record_len() {
            return Err(Error::Config("record length mismatch".into()));
        }
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let n_records = u64::from_le_bytes(u64buf) as usize;
        r.read_exact(&mut u64buf)?;
        let mut f64buf = [0u8; 8];
        let mut records = Vec::with_capacity(n_records);
        for _ in 0..n_records {
            let mut fields = Vec::with_capacity(record_len);
            for _ in 0..record_len {
                r.read_exact(&mut f64buf)?;
                fields.push(f64::from_le_bytes(f64buf));
            }
            records.push(ReplicaRecord {
                replica_id: fields[0] as u64,
                total: fields[1],
                m0: fields[2],
                m1: fields[3],
                max_masses: fields[4..4 + meta.levels.len()].to_vec(),
                extras: fields[4 + meta.levels.len()..].to_vec(),
            });
        }
        Ensemble::new(meta, records)
    }

    pub fn save(&self, store_path: &Path) -> Result<()> {
        let file = std::fs::File::create(store_path)?;
        self.write_store(std::io::BufWriter::new(file))?;
        let sidecar = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| Error::Config(format!("sidecar encode: {e}")))?;
        std::fs::write(sidecar_path(store_path), sidecar + "\n")?;
        Ok(())
    }

    pub fn load(store_path: &Path) -> Result<Ensemble> {
        let sidecar = std::fs::read_to_string(sidecar_path(store_path))?;
        let meta: EnsembleMeta = serde_json::from_str(&sidecar)
            .map_err(|e| Error::Config(format!("sidecar decode: {e}")))?;
        let file = std::fs::File::open(store_path)?;
        Ensemble::read_store(std::io::BufReader::new(file), meta)
    }

    /// CSV with one row per replica and full float precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replica_id");
        for col in self.meta.float_columns() {
            out.push(',');
            out.push_str(&col);
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.replica_id.to_string());
            let mut push = |v: f64| {
                out.push(',');
                out.push_str(&format_float(v));
            };
            push(r.total);
            push(r.m0);
            push(r.m1);
            for &v in &r.max_masses {
                push(v);
            }
            for &v in &r.extras {
                push(v);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, meta: EnsembleMeta) -> Result<Ensemble> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty CSV".into()))?;
        let mut expected = String::from("replica_id");
        for col in meta.float_columns() {
            expected.push(',');
            expected.push_str(&col);
        }
        if header != expected {
            return Err(Error::Config(format!(
                "CSV header mismatch: got {header:?}, expected {expected:?}"
            )));
        }
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != meta.record_len() {
                return Err(Error::Config(format!(
                    "CSV row {} has {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    meta.record_len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Config(format!("CSV float {s:?}: {e}")))
            };
            let replica_id = fields[0]
                .parse::<u64>()
                .map_err(|e| Error::Config(format!("CSV replica id {:?}: {e}", fields[0])))?;
            let total = parse(fields[1])?;
            let m0 = parse(fields[2])?;
            let m1 = parse(fields[3])?;
            let mut max_masses = Vec::with_capacity(meta.levels.len());
            for f in &fields[4..4 + meta.levels.len()] {
                max_masses.push(parse(f)?);
            }
            let mut extras = Vec::with_capacity(meta.extras.len());
            for f in &fields[4 + meta.levels.len()..] {
                extras.push(parse(f)?);
            }
            records.push(ReplicaRecord {
                replica_id,
                total,
                m0,
                m1,
                max_masses,
                extras,
            });
        }
        Ensemble::new(meta, records)
    }

    /// JSON summary: count, mean and bootstrap CI per tracked column.
    pub fn summary_json(&self) -> Result<serde_json::Value> {
        let mut stats_map = serde_json::Map::new();
        let columns = self.meta.float_columns();
        let mut push = |name: &str, data: &[f64]| -> Result<()> {
            let est = stats::bootstrap_mean(data)?;
            stats_map.insert(
                name.to_string(),
                serde_json::json!({
                    "n": data.len(),
                    "mean": est.value,
                    "ci_lo": est.ci.lo,
                    "ci_hi": est.ci.hi,
                }),
            );
            Ok(())
        };
        if !self.records.is_empty() {
            push("total", &self.totals())?;
            push("m0", &self.records.iter().map(|r| r.m0).collect::<Vec<_>>())?;
            push("m1", &self.records.iter().map(|r| r.m1).collect::<Vec<_>>())?;
            for (i, level) in self.meta.levels.iter().enumerate() {
                let col: Vec<f64> = self.records.iter().map(|r| r.max_masses[i]).collect();
                push(&columns[3 + i], &col)?;
                let _ = level;
            }
            for (i, name) in self.meta.extras.iter().enumerate() {
                let col: Vec<f64> = self.records.iter().map(|r| r.extras[i]).collect();
                push(name, &col)?;
            }
        }
        Ok(serde_json::json!({
            "n": self.n(),
            "master_seed": self.meta.master_seed,
            "statistics": stats_map,
        }))
    }
}

fn sidecar_path(store_path: &Path) -> std::path::PathBuf {
    let mut p = store_path.as_os_str().to_owned();
    p.push(".json");
    std::path::PathBuf::from(p)
}

/// 17-significant-digit decimal, enough to reproduce any f64 exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}
