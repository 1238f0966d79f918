//! Binary checkpoint format.
//!
//! ```text
//! magic "GFCKPT\0\0" | version u32
//! config: vocab d_model n_layers n_heads d_ff max_seq_len seed (u64 each)
//! n_tensors u32, then per tensor: name_len u32, name bytes, rows u32, cols u32
//! adapters u8 flag; when set: rank u32, alpha f64, dropout f64, n_pairs u32,
//!   per pair: layer u32, slot name_len u32, slot name, a rows/cols u32, b rows/cols u32
//! payloads: every tensor, then every adapter A and B, as f32 little-endian
//! crc32 of all preceding bytes, u32
//! ```
//! All integers are little-endian.

use std::path::Path;

use super::model::{AdapterPair, Adapters, Model, ModelConfig, Params, Slot};
use super::tensor::Mat;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GFCKPT\0\0";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn payload(&mut self, m: &Mat<f32>) {
        for v in &m.data {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid utf-8 name".into()))
    }
    fn payload(&mut self, rows: usize, cols: usize) -> Result<Mat<f32>> {
        let n = rows.checked_mul(cols).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?;
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        Ok(Mat::from_vec(rows, cols, data))
    }
}

/// Serialize a model (base weights plus any adapters) to bytes.
pub fn to_bytes(model: &Model<f32>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION as usize);
    let c = model.config();
    for v in [c.vocab_size, c.d_model, c.n_layers, c.n_heads, c.d_ff, c.max_seq_len] {
        w.u64(v as u64);
    }
    w.u64(c.seed);
    w.u32(model.params.tensors.len());
    for (name, t) in model.params.names.iter().zip(&model.params.tensors) {
        w.str(name);
        w.u32(t.rows);
        w.u32(t.cols);
    }
    match &model.adapters {
        None => w.u8(0),
        Some(ad) => {
            w.u8(1);
            w.u32(ad.rank);
            w.f64(ad.alpha);
            w.f64(ad.dropout);
            w.u32(ad.pairs.len());
            for p in &ad.pairs {
                w.u32(p.layer);
                w.str(p.slot.name());
                w.u32(p.a.rows);
                w.u32(p.a.cols);
                w.u32(p.b.rows);
                w.u32(p.b.cols);
            }
        }
    }
    for t in &model.params.tensors {
        w.payload(t);
    }
    if let Some(ad) = &model.adapters {
        for p in &ad.pairs {
            w.payload(&p.a);
            w.payload(&p.b);
        }
    }
    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    w.0
}

pub fn from_bytes(buf: &[u8]) -> Result<Model<f32>> {
    if buf.len() < MAGIC.len() + 8 {
        return Err(Error::Checkpoint("file too short".into()));
    }
    if &buf[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: MAGIC.len() };
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version} (expected {VERSION})")));
    }
    let mut dims = [0usize; 6];
    for d in dims.iter_mut() {
        *d = r.u64()? as usize;
    }
    let config = ModelConfig {
        vocab_size: dims[0],
        d_model: dims[1],
        n_layers: dims[2],
        n_heads: dims[3],
        d_ff: dims[4],
        max_seq_len: dims[5],
        seed: r.u64()?,
    };
    config.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    let n = r.u32()?;
    let mut dir = Vec::with_capacity(n);
    for _ in 0..n {
        let name = r.str()?;
        let rows = r.u32()?;
        let cols = r.u32()?;
        dir.push((name, rows, cols));
    }
    let mut adapter_dir = None;
    if r.u8()? == 1 {
        let rank = r.u32()?;
        let alpha = r.f64()?;
        let dropout = r.f64()?;
        let np = r.u32()?;
        let mut pairs = Vec::with_capacity(np);
        for _ in 0..np {
            let layer = r.u32()?;
            let sname = r.str()?;
            let slot = Slot::from_name(&sname).ok_or_else(|| Error::Checkpoint(format!("unknown slot {sname}")))?;
            let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?];
            pairs.push((layer, slot, dims));
        }
        adapter_dir = Some((rank, alpha, dropout, pairs));
    }
    // Shapes must agree with a freshly initialised model of this config.
    let template: Params<f32> = Params::init(&config).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if template.tensors.len() != dir.len() {
        return Err(Error::Checkpoint("tensor directory does not match config".into()));
    }
    let mut tensors = Vec::with_capacity(n);
    for ((name, rows, cols), t) in dir.iter().zip(&template.tensors) {
        if (t.rows, t.cols) != (*rows, *cols) {
            return Err(Error::Checkpoint(format!("tensor {name} has shape {rows}x{cols}, expected {}x{}", t.rows, t.cols)));
        }
        tensors.push(r.payload(*rows, *cols)?);
    }
    let names = dir.into_iter().map(|(n, _, _)| n).collect();
    let adapters = match adapter_dir {
        None => None,
        Some((rank, alpha, dropout, pairs)) => {
            let mut out = Vec::with_capacity(pairs.len());
            for (layer, slot, [ar, ac, br, bc]) in pairs {
                let a = r.payload(ar, ac)?;
                let b = r.payload(br, bc)?;
                out.push(AdapterPair { layer, slot, a, b });
            }
            Some(Adapters { rank, alpha, dropout, pairs: out })
        }
    };
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }
    Ok(Model { params: Params { config, names, tensors }, adapters })
}

pub fn save_checkpoint(model: &Model<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf)
}

/// crc32 of the serialized checkpoint, as lowercase hex.
pub fn model_hash(model: &Model<f32>) -> String {
    format!("{:08x}", crc32fast::hash(&to_bytes(model)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model<f32> {
        let cfg = ModelConfig { vocab_size: 13, d_model: 8, n_layers: 2, n_heads: 2, d_ff: 16, max_seq_len: 10, seed: 4 };
        Model::new(Params::init(&cfg).unwrap())
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        assert_eq!(from_bytes(&to_bytes(&m)).unwrap(), m);
    }

    #[test]
    fn round_trip_with_adapters() {
        let mut m = model();
        m.attach_adapters(2, 4.0, 0.1, 3).unwrap();
        m.adapters.as_mut().unwrap().pairs[0].b.data[0] = 0.25;
        assert_eq!(from_bytes(&to_bytes(&m)).unwrap(), m);
    }

    #[test]
    fn corruption_and_truncation_are_detected() {
        let bytes = to_bytes(&model());
        let mut bad = bytes.clone();
        bad[100] ^= 0x40;
        assert!(matches!(from_bytes(&bad), Err(Error::Checkpoint(m)) if m.contains("checksum")));
        assert!(from_bytes(&bytes[..bytes.len() - 10]).is_err());
    }

    #[test]
    fn version_mismatch_is_reported() {
        let mut bytes = to_bytes(&model());
        bytes[8] = 9;
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(from_bytes(&bytes), Err(Error::Checkpoint(m)) if m.contains("version")));
    }
}
