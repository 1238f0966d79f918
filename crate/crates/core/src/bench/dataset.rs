//! Dataset files: one probe per JSONL line plus a case sidecar.
//!
//! For `probes.jsonl` the sidecar is `probes.cases.json`; it holds every
//! case without its probes and lists the probe ids that belong to it.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{BenchmarkCase, ChainRecord, Probe, Rejection, TripleRecord};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CaseMeta {
    case_id: String,
    target: TripleRecord,
    forget_neighborhood: Vec<String>,
    chains: Vec<ChainRecord>,
    retain_facts: Vec<TripleRecord>,
    probe_ids: Vec<String>,
    provenance: Vec<Rejection>,
}

pub fn cases_path(path: &Path) -> PathBuf {
    path.with_extension("cases.json")
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let s = serde_json::to_string_pretty(value)?;
    std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

/// Write probes as JSONL at `path` and the case sidecar next to it.
pub fn emit_dataset(cases: &[BenchmarkCase], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for p in cases.iter().flat_map(|c| &c.probes) {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let metas: Vec<CaseMeta> = cases
        .iter()
        .map(|c| CaseMeta {
            case_id: c.case_id.clone(),
            target: c.target.clone(),
            forget_neighborhood: c.forget_neighborhood.clone(),
            chains: c.chains.clone(),
            retain_facts: c.retain_facts.clone(),
            probe_ids: c.probes.iter().map(|p| p.probe_id.clone()).collect(),
            provenance: c.provenance.clone(),
        })
        .collect();
    write_json(&cases_path(path), &metas)
}

/// Parse probe JSONL; the error index is the zero-based record number.
pub fn parse_probes(text: &str) -> Result<Vec<Probe>> {
    let mut out = Vec::new();
    for (index, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let p: Probe = serde_json::from_str(line).map_err(|e| Error::Dataset { index, msg: e.to_string() })?;
        out.push(p);
    }
    Ok(out)
}

/// Read a dataset written by [`emit_dataset`].
pub fn load_dataset(path: &Path) -> Result<Vec<BenchmarkCase>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let probes = parse_probes(&text)?;
    let metas: Vec<CaseMeta> = read_json(&cases_path(path))?;
    let mut by_id: HashMap<String, (usize, Probe)> = HashMap::new();
    for (i, p) in probes.into_iter().enumerate() {
        if by_id.contains_key(&p.probe_id) {
            return Err(Error::Dataset { index: i, msg: format!("duplicate probe id `{}`", p.probe_id) });
        }
        by_id.insert(p.probe_id.clone(), (i, p));
    }
    let mut cases = Vec::with_capacity(metas.len());
    for (ci, m) in metas.into_iter().enumerate() {
        let mut ps = Vec::with_capacity(m.probe_ids.len());
        for id in &m.probe_ids {
            let (i, p) = by_id
                .remove(id)
                .ok_or_else(|| Error::Dataset { index: ci, msg: format!("case `{}` lists missing probe `{id}`", m.case_id) })?;
            if p.case_id != m.case_id {
                return Err(Error::Dataset { index: i, msg: format!("probe `{id}` belongs to `{}`", p.case_id) });
            }
            ps.push(p);
        }
        cases.push(BenchmarkCase {
            case_id: m.case_id,
            target: m.target,
            forget_neighborhood: m.forget_neighborhood,
            chains: m.chains,
            retain_facts: m.retain_facts,
            probes: ps,
            provenance: m.provenance,
        });
    }
    if let Some((_, (i, p))) = by_id.into_iter().min_by_key(|(_, (i, _))| *i) {
        return Err(Error::Dataset { index: i, msg: format!("probe `{}` belongs to no case", p.probe_id) });
    }
    Ok(cases)
}
