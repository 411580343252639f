//! Named parameter store and its on-disk container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  b"STGSCRW\0"
//! version      u32      (currently 1)
//! config       side, components, hidden, residual_blocks, edge_hidden,
//!              kernel, batch_size, epochs: u32 each
//!              lambda_image, lambda_edge, learning_rate: f64 each
//!              seed: u64, optimizer: u8 (0 = sgd, 1 = adam)
//! n_tensors    u32
//! per tensor   name_len u16, name (utf-8), ndim u8, dims u32 × ndim,
//!              values f64 × product(dims)
//! checksum     u32      CRC-32 of every preceding byte
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

use super::{AnalyzerConfig, OptimizerKind};

const MAGIC: &[u8; 8] = b"STGSCRW\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; n],
        }
    }
}

/// Flat parameter store keyed by layer name, with the architecture that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: AnalyzerConfig,
    pub tensors: BTreeMap<String, Tensor>,
}

impl ModelWeights {
    pub fn get(&self, name: &str) -> &[f64] {
        &self
            .tensors
            .get(name)
            .unwrap_or_else(|| panic!("missing tensor {name}"))
            .values
    }

    pub fn get_mut(&mut self, name: &str) -> &mut [f64] {
        &mut self
            .tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing tensor {name}"))
            .values
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(|t| t.values.len()).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape.clone())))
                .collect(),
        }
    }

    /// Visits every scalar parameter in a stable order.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.tensors.values().flat_map(|t| t.values.iter())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.tensors.values_mut().flat_map(|t| t.values.iter_mut())
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelWeights, scale: f64) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += scale * b;
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        write_config(&self.config, &mut out);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < MAGIC.len() || &data[..MAGIC.len()] != MAGIC {
            return Err(Error::WeightsFormat("bad magic".into()));
        }
        if data.len() < MAGIC.len() + 8 {
            return Err(Error::Checksum);
        }
        let (body, tail) = data.split_at(data.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
            return Err(Error::Checksum);
        }
        let mut r = Reader {
            data: body,
            pos: MAGIC.len(),
        };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let config = read_config(&mut r)?;
        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = String::from_utf8(r.bytes(len)?.to_vec())
                .map_err(|_| Error::WeightsFormat("tensor name is not utf-8".into()))?;
            let ndim = r.u8()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            tensors.insert(name, Tensor { shape, values });
        }
        if r.pos != body.len() {
            return Err(Error::WeightsFormat("trailing bytes".into()));
        }
        let weights = Self { config, tensors };
        weights.check_layout()?;
        Ok(weights)
    }

    /// Verifies that names and shapes match what the stored config implies.
    pub fn check_layout(&self) -> Result<()> {
        let expected = super::Network::new(&self.config).parameter_shapes();
        if expected.len() != self.tensors.len() {
            return Err(Error::WeightsFormat(format!(
                "{} tensors, expected {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        for (name, shape) in expected {
            match self.tensors.get(&name) {
                Some(t) if t.shape == shape => {}
                Some(t) => {
                    return Err(Error::WeightsFormat(format!(
                        "tensor {name} has shape {:?}, expected {shape:?}",
                        t.shape
                    )))
                }
                None => return Err(Error::WeightsFormat(format!("missing tensor {name}"))),
            }
        }
        if !self.all_finite() {
            return Err(Error::NonFinite("stored weights".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }

    /// Loads weights and checks their architecture against `expected`.
    pub fn load_for(path: impl AsRef<Path>, expected: &AnalyzerConfig) -> Result<Self> {
        let w = Self::load(path)?;
        w.config.ensure_same_architecture(expected)?;
        Ok(w)
    }
}

pub fn save_weights(w: &ModelWeights, path: impl AsRef<Path>) -> Result<()> {
    w.save(path)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights> {
    ModelWeights::load(path)
}

fn write_config(c: &AnalyzerConfig, out: &mut Vec<u8>) {
    for v in [
        c.side,
        c.components,
        c.hidden,
        c.residual_blocks,
        c.edge_hidden,
        c.kernel,
        c.batch_size,
        c.epochs,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in [c.lambda_image, c.lambda_edge, c.learning_rate] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.push(match c.optimizer {
        OptimizerKind::Sgd => 0,
        OptimizerKind::Adam => 1,
    });
}

fn read_config(r: &mut Reader<'_>) -> Result<AnalyzerConfig> {
    let mut u = [0usize; 8];
    for v in u.iter_mut() {
        *v = r.u32()? as usize;
    }
    let lambda_image = r.f64()?;
    let lambda_edge = r.f64()?;
    let learning_rate = r.f64()?;
    let seed = r.u64()?;
    let optimizer = match r.u8()? {
        0 => OptimizerKind::Sgd,
        1 => OptimizerKind::Adam,
        other => return Err(Error::WeightsFormat(format!("unknown optimizer tag {other}"))),
    };
    let cfg = AnalyzerConfig {
        side: u[0],
        components: u[1],
        hidden: u[2],
        residual_blocks: u[3],
        edge_hidden: u[4],
        kernel: u[5],
        batch_size: u[6],
        epochs: u[7],
        lambda_image,
        lambda_edge,
        learning_rate,
        seed,
        optimizer,
    };
    cfg.validate()
        .map_err(|e| Error::WeightsFormat(format!("stored config is invalid: {e}")))?;
    Ok(cfg)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::WeightsFormat("unexpected end of data".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::Network;

    fn small() -> ModelWeights {
        let cfg = AnalyzerConfig {
            side: 8,
            hidden: 4,
            residual_blocks: 1,
            edge_hidden: 3,
            components: 2,
            ..AnalyzerConfig::default()
        };
        Network::new(&cfg).init_weights(cfg.seed)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let w = small();
        let back = ModelWeights::from_bytes(&w.to_bytes()).unwrap();
        assert_eq!(back, w);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        save_weights(&w, &path).unwrap();
        assert_eq!(load_weights(&path).unwrap(), w);
    }

    #[test]
    fn truncation_fails_checksum() {
        let bytes = small().to_bytes();
        for cut in [1, 9, bytes.len() / 2] {
            assert!(matches!(
                ModelWeights::from_bytes(&bytes[..bytes.len() - cut]),
                Err(Error::Checksum)
            ));
        }
    }

    #[test]
    fn version_mismatch_is_reported() {
        let mut bytes = small().to_bytes();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            ModelWeights::from_bytes(&bytes),
            Err(Error::Version { found: 7, expected: 1 })
        ));
    }

    #[test]
    fn config_mismatch_is_explicit() {
        let w = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        w.save(&path).unwrap();
        let mut other = w.config.clone();
        other.hidden = 5;
        assert!(matches!(
            ModelWeights::load_for(&path, &other),
            Err(Error::Config(_))
        ));
        let mut same_arch = w.config.clone();
        same_arch.epochs = 99;
        assert!(ModelWeights::load_for(&path, &same_arch).is_ok());
    }
}
