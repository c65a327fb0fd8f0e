//! FMAP tensor container.
//!
//! Layout (little-endian):
//! - magic `b"FMAP"`
//! - version: u32 (= 1)
//! - layer count: u32
//! - per layer: id length u16, id bytes (UTF-8), grid_h u32, grid_w u32,
//!   channels u32, then `grid_h * grid_w * channels` f32 values, row-major
//!   with the channel index fastest.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::features::{normalize, ChannelMaxima, FeatureMapSet, LayerTensor};
use super::layer::LayerSet;

pub const MAGIC: &[u8; 4] = b"FMAP";
pub const VERSION: u32 = 1;

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::MalformedContainer(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            ))),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Decode a container into `(layer_id, tensor)` pairs in file order.
pub fn decode(bytes: &[u8]) -> Result<Vec<(String, LayerTensor)>> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::MalformedContainer("bad magic, expected `FMAP`".into()));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::MalformedContainer(format!("unsupported version {version}")));
    }
    let count = cur.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let len = cur.u16("layer id length")? as usize;
        let id = std::str::from_utf8(cur.take(len, "layer id")?)
            .map_err(|_| Error::MalformedContainer(format!("layer {i}: id is not UTF-8")))?
            .to_string();
        let h = cur.u32("grid_h")? as usize;
        let w = cur.u32("grid_w")? as usize;
        let c = cur.u32("channels")? as usize;
        let n = h
            .checked_mul(w)
            .and_then(|v| v.checked_mul(c))
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| Error::MalformedContainer(format!("layer `{id}`: shape overflows")))?;
        let raw = cur.take(n, &format!("data of layer `{id}`"))?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if layers.iter().any(|(l, _): &(String, LayerTensor)| *l == id) {
            return Err(Error::MalformedContainer(format!("duplicate layer `{id}`")));
        }
        layers.push((id, LayerTensor::from_vec(h, w, c, data)?));
    }
    if cur.pos != bytes.len() {
        return Err(Error::MalformedContainer(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }
    Ok(layers)
}

pub fn encode<'a>(layers: impl IntoIterator<Item = (&'a str, &'a LayerTensor)>) -> Result<Vec<u8>> {
    let layers: Vec<_> = layers.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for (id, t) in layers {
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::MalformedContainer(format!("layer id `{id}` too long")))?;
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        for d in [t.grid_h, t.grid_w, t.channels] {
            let d = u32::try_from(d)
                .map_err(|_| Error::MalformedContainer(format!("layer `{id}` dimension overflows u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.reserve(t.data().len() * 4);
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Write every layer of a feature set, in layer-id order.
pub fn write_feature_set(fm: &FeatureMapSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(fm.layers.iter().map(|(k, v)| (k.as_str(), v)))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a container and validate it against the layer geometries. Values are
/// returned as stored.
pub fn load_feature_set(path: impl AsRef<Path>, layers: &LayerSet) -> Result<FeatureMapSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let image_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    feature_set_from_bytes(image_id, &bytes, layers)
}

pub fn feature_set_from_bytes(
    image_id: impl Into<String>,
    bytes: &[u8],
    layers: &LayerSet,
) -> Result<FeatureMapSet> {
    let mut fm = FeatureMapSet::new(image_id);
    for (id, t) in decode(bytes)? {
        let g = layers.get(&id).map_err(|_| Error::ShapeMismatch {
            layer: id.clone(),
            detail: "layer not declared in the geometries".into(),
        })?;
        t.check_against(g)?;
        fm.layers.insert(id, t);
    }
    fm.validate(layers)?;
    Ok(fm)
}

/// Load a single container and normalize each channel by its own maximum
/// (the file is treated as the whole dataset).
pub fn load_feature_set_normalized(path: impl AsRef<Path>, layers: &LayerSet) -> Result<FeatureMapSet> {
    let mut fm = load_feature_set(path, layers)?;
    let maxima = ChannelMaxima::compute([&fm]);
    normalize(&mut fm, &maxima);
    Ok(fm)
}
