//! Binary checkpoint: `PSCK`, u16 version, u32 metadata length, UTF-8 JSON
//! metadata, then every tensor as `u32 rank, u32 dims…, f32 data…` (all
//! little-endian), then the CRC32 of those tensor bytes.
//!
//! Tensors are written network by network, layer by layer: parameters in
//! storage order, then batchnorm running mean and variance.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::recognizer::{RecognizerKind, RecognizerModel, RecognizerProvenance};
use crate::error::{Error, Result};
use crate::tensor::{Init, LayerSpec, Mode, Network};

pub const MAGIC: &[u8; 4] = b"PSCK";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Checkpoint {
    Recognizer(RecognizerModel),
    /// A generator kept for sampling and inspection.
    Generator(Network),
}

#[derive(Serialize, Deserialize)]
struct NetworkMeta {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    mode: Mode,
}

#[derive(Serialize, Deserialize)]
struct RecognizerMeta {
    tau: f32,
    class_name: String,
    kind: RecognizerKind,
    provenance: RecognizerProvenance,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    object: String,
    network: NetworkMeta,
    #[serde(skip_serializing_if = "Option::is_none")]
    recognizer: Option<RecognizerMeta>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn write_tensor(out: &mut Vec<u8>, shape: &[usize], data: &[f32]) {
    put_u32(out, shape.len());
    for &d in shape {
        put_u32(out, d);
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn network_payload(net: &Network, out: &mut Vec<u8>) {
    for (i, ps) in net.params().iter().enumerate() {
        for p in ps {
            write_tensor(out, p.shape(), p.data());
        }
        if let Some((mean, var)) = net.running_stats(i) {
            write_tensor(out, &[mean.len()], mean);
            write_tensor(out, &[var.len()], var);
        }
    }
}

pub fn to_bytes(ck: &Checkpoint) -> Result<Vec<u8>> {
    let (net, recognizer, object) = match ck {
        Checkpoint::Recognizer(m) => (
            m.network(),
            Some(RecognizerMeta {
                tau: m.tau(),
                class_name: m.class_name().to_string(),
                kind: m.kind(),
                provenance: m.provenance().clone(),
            }),
            "recognizer",
        ),
        Checkpoint::Generator(g) => (g, None, "generator"),
    };
    let meta = serde_json::to_vec(&Metadata {
        object: object.into(),
        network: NetworkMeta {
            input_shape: net.input_shape().to_vec(),
            layers: net.layers().to_vec(),
            mode: net.mode(),
        },
        recognizer,
    })?;
    let mut payload = Vec::new();
    network_payload(net, &mut payload);
    let mut out = Vec::with_capacity(payload.len() + meta.len() + 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, meta.len());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (needed {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn tensor(&mut self, expected: &[usize]) -> Result<Vec<f32>> {
        let rank = self.u32()?;
        let shape = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        if shape != expected {
            return Err(Error::Checkpoint(format!("tensor shape {shape:?}, expected {expected:?}")));
        }
        let n: usize = shape.iter().product();
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            supported: VERSION,
        });
    }
    let meta_len = r.u32()?;
    let meta: Metadata = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    let payload_start = r.pos;
    if bytes.len() < payload_start + 4 {
        return Err(Error::Checkpoint("truncated before checksum".into()));
    }
    let payload_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[payload_end..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[payload_start..payload_end]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader {
        bytes: &bytes[..payload_end],
        pos: payload_start,
    };
    let mut net = Network::new(&meta.network.input_shape, meta.network.layers, Init::Zeros, 0)?;
    let shapes: Vec<Vec<Vec<usize>>> = net.params().iter().map(|ps| ps.iter().map(|p| p.shape().to_vec()).collect()).collect();
    for (i, layer_shapes) in shapes.iter().enumerate() {
        for (j, shape) in layer_shapes.iter().enumerate() {
            let data = r.tensor(shape)?;
            net.params_mut()[i][j].data_mut().copy_from_slice(&data);
        }
        if let Some((mean, _)) = net.running_stats(i) {
            let c = mean.len();
            let mean = r.tensor(&[c])?;
            let var = r.tensor(&[c])?;
            net.set_running_stats(i, mean, var)?;
        }
    }
    if r.pos != payload_end {
        return Err(Error::Checkpoint(format!("{} trailing payload bytes", payload_end - r.pos)));
    }
    net.set_mode(meta.network.mode);
    match (meta.object.as_str(), meta.recognizer) {
        ("recognizer", Some(m)) => Ok(Checkpoint::Recognizer(RecognizerModel::new(
            net,
            m.tau,
            &m.class_name,
            m.kind,
            m.provenance,
        )?)),
        ("generator", None) => Ok(Checkpoint::Generator(net)),
        (other, _) => Err(Error::Checkpoint(format!("unknown checkpoint object {other:?}"))),
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(ck)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn load_recognizer(path: &Path) -> Result<RecognizerModel> {
    match load_checkpoint(path)? {
        Checkpoint::Recognizer(m) => Ok(m),
        Checkpoint::Generator(_) => Err(Error::Checkpoint(format!("{} holds a generator", path.display()))),
    }
}

pub fn load_generator(path: &Path) -> Result<Network> {
    match load_checkpoint(path)? {
        Checkpoint::Generator(g) => Ok(g),
        Checkpoint::Recognizer(_) => Err(Error::Checkpoint(format!("{} holds a recognizer", path.display()))),
    }
}
