//! Binary checkpoint format.
//!
//! ```text
//! "RELU-MLP-1"                      10 ASCII bytes
//! n_widths                          u64 LE
//! widths[n_widths]                  u64 LE each, input width first
//! for each layer i in 0..n_widths-1 (exclusive):
//!     weight  d_{i+1} × d_i         f64 LE, row-major
//!     bias    d_{i+1}               f64 LE
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Layer, MlpParams, MlpSpec};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 10] = b"RELU-MLP-1";

pub fn encode(params: &MlpParams) -> Vec<u8> {
    let spec = params.spec();
    let mut out = Vec::with_capacity(10 + 8 * (1 + spec.widths().len() + params.num_values()));
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(spec.widths().len() as u64).to_le_bytes());
    for &w in spec.widths() {
        out.extend_from_slice(&(w as u64).to_le_bytes());
    }
    for layer in &params.layers {
        // Iterating a standard-layout array visits it in row-major order.
        for v in layer.weight.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take8(&mut self) -> Result<[u8; 8]> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + 8)
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        self.pos += 8;
        Ok(chunk.try_into().expect("8 bytes"))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take8()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take8()?))
    }
}

pub fn decode(bytes: &[u8]) -> Result<MlpParams> {
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC
    {
        return Err(Error::Checkpoint("bad magic header".into()));
    }
    let mut r = Reader {
        bytes,
        pos: CHECKPOINT_MAGIC.len(),
    };
    let count = r.u64()? as usize;
    if !(2..=1 << 16).contains(&count) {
        return Err(Error::Checkpoint(format!(
            "implausible layer count {count}"
        )));
    }
    let widths = (0..count)
        .map(|_| r.u64().map(|w| w as usize))
        .collect::<Result<Vec<_>>>()?;
    let spec = MlpSpec::new(widths).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut layers = Vec::with_capacity(count - 1);
    for w in spec.widths().windows(2) {
        let (inputs, outputs) = (w[0], w[1]);
        let weight = (0..inputs * outputs)
            .map(|_| r.f64())
            .collect::<Result<Vec<_>>>()?;
        let bias = (0..outputs).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        layers.push(Layer {
            weight: Array2::from_shape_vec((outputs, inputs), weight).expect("sized"),
            bias: Array1::from(bias),
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    MlpParams::new(layers)
}

pub fn save_checkpoint(params: &MlpParams, path: &Path) -> Result<()> {
    fs::write(path, encode(params))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<MlpParams> {
    decode(&fs::read(path)?)
}
