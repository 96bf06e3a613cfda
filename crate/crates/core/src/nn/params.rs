use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Which part of the network a parameter belongs to. Gradient routing in
/// domain-adversarial training depends on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    /// Shared feature extractor.
    Extractor,
    /// Speaker classifier head.
    Speaker,
    /// Domain classifier head.
    Domain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub group: Group,
    /// Running statistics are stored alongside weights but never trained.
    pub trainable: bool,
}

/// Flat store of named tensors; layers refer to entries by index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    pub params: Vec<Param>,
}

pub type ParamId = usize;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], value: Vec<f64>, group: Group, trainable: bool) -> ParamId {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        self.params.push(Param {
            name: name.to_string(),
            shape: shape.to_vec(),
            value,
            group,
            trainable,
        });
        self.params.len() - 1
    }

    /// He-normal initialized weight with the given fan-in.
    pub fn add_he<R: Rng>(&mut self, name: &str, shape: &[usize], fan_in: usize, group: Group, rng: &mut R) -> ParamId {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let n = shape.iter().product();
        let value = (0..n).map(|_| normal.sample(rng)).collect();
        self.add(name, shape, value, group, true)
    }

    pub fn add_const(&mut self, name: &str, shape: &[usize], v: f64, group: Group, trainable: bool) -> ParamId {
        let n = shape.iter().product();
        self.add(name, shape, vec![v; n], group, trainable)
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.params[id].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Vec<f64> {
        &mut self.params[id].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_trainable(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn zero_grads(&self) -> Grads {
        Grads(self.params.iter().map(|p| vec![0.0; p.value.len()]).collect())
    }

    /// Serializes as `FFNN`, version, then named little-endian float32 tensors.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"FFNN");
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
            for &d in &p.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &p.value {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Copies tensors from a checkpoint into this store, matching by name
    /// and shape. Every parameter of the store must be present.
    pub fn load_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        let tensors = parse_checkpoint(bytes)?;
        for p in &mut self.params {
            let (shape, values) = tensors
                .iter()
                .find(|(n, _, _)| *n == p.name)
                .map(|(_, s, v)| (s, v))
                .ok_or_else(|| Error::Malformed(format!("checkpoint lacks tensor {}", p.name)))?;
            if *shape != p.shape {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {}: checkpoint {:?}, network {:?}",
                    p.name, shape, p.shape
                )));
            }
            p.value.clone_from(values);
        }
        Ok(())
    }

    pub fn load(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = read_file(path.as_ref())?;
        self.load_bytes(&bytes)
    }

    /// Rounds every value through float32, matching a save/load cycle.
    pub fn quantize_f32(&mut self) {
        for p in &mut self.params {
            for v in &mut p.value {
                *v = f64::from(*v as f32);
            }
        }
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Name, shape and values of every tensor in a checkpoint.
pub fn parse_checkpoint(b: &[u8]) -> Result<Vec<(String, Vec<usize>, Vec<f64>)>> {
    if b.len() < 8 || &b[0..4] != b"FFNN" {
        return Err(Error::Malformed("missing FFNN magic".into()));
    }
    let version = u32::from_le_bytes([b[4], b[5], b[6], b[7]]);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Malformed(format!("unsupported checkpoint version {version}")));
    }
    let mut pos = 8;
    let u32_at = |pos: &mut usize| -> Result<u32> {
        let s = b
            .get(*pos..*pos + 4)
            .ok_or_else(|| Error::Truncated("checkpoint ends inside a header".into()))?;
        *pos += 4;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    };
    let mut out = Vec::new();
    while pos < b.len() {
        let len = u32_at(&mut pos)? as usize;
        let name = b
            .get(pos..pos + len)
            .ok_or_else(|| Error::Truncated("checkpoint ends inside a name".into()))?;
        let name = String::from_utf8(name.to_vec()).map_err(|_| Error::Malformed("tensor name is not UTF-8".into()))?;
        pos += len;
        let rank = u32_at(&mut pos)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32_at(&mut pos)? as usize);
        }
        let count: usize = shape.iter().product();
        let data = b
            .get(pos..pos + 4 * count)
            .ok_or_else(|| Error::Truncated(format!("tensor {name} data")))?;
        pos += 4 * count;
        let values = data
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        out.push((name, shape, values));
    }
    Ok(out)
}

/// Gradient buffers, one per store entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    pub fn add(&mut self, id: ParamId, g: &[f64]) {
        for (a, b) in self.0[id].iter_mut().zip(g) {
            *a += b;
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.0[id]
    }

    pub fn scale(&mut self, id: ParamId, s: f64) {
        self.0[id].iter_mut().for_each(|v| *v *= s);
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}
