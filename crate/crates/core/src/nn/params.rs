//! Named parameter storage, initialization and the checkpoint container.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "BSACKPT\0"
//! version u32      = 1
//! count   u32      number of parameters
//! repeat count times:
//!   path_len u32, path bytes (UTF-8)
//!   rank u32, rank × u64 extents
//!   product(extents) × f64 values, row-major
//! ```

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;
use crate::Error;

const MAGIC: &[u8; 8] = b"BSACKPT\0";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct ParameterStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
    seed: u64,
    rng: ChaCha8Rng,
}

impl ParameterStore {
    pub fn new(seed: u64) -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn add(&mut self, path: &str, value: Tensor) -> Result<ParamId, Error> {
        if self.index.contains_key(path) {
            return Err(Error::Config(format!("duplicate parameter path `{path}`")));
        }
        self.index.insert(path.to_string(), self.tensors.len());
        self.names.push(path.to_string());
        self.tensors.push(value);
        Ok(ParamId(self.tensors.len() - 1))
    }

    /// Xavier-uniform matrix of shape (fan_in, fan_out).
    pub fn add_xavier(&mut self, path: &str, fan_in: usize, fan_out: usize) -> Result<ParamId, Error> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.add_uniform(path, &[fan_in, fan_out], bound)
    }

    pub fn add_uniform(&mut self, path: &str, shape: &[usize], bound: f64) -> Result<ParamId, Error> {
        let len = shape.iter().product();
        let data = (0..len).map(|_| self.rng.gen_range(-bound..=bound)).collect();
        self.add(path, Tensor::new(shape, data)?)
    }

    pub fn add_const(&mut self, path: &str, shape: &[usize], value: f64) -> Result<ParamId, Error> {
        self.add(path, Tensor::full(shape, value))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, path: &str) -> Option<ParamId> {
        self.index.get(path).map(|&i| ParamId(i))
    }

    pub fn by_name(&self, path: &str) -> Option<&Tensor> {
        self.id(path).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Overwrites every parameter from `other`, which must carry the same
    /// paths and shapes.
    pub fn load_from(&mut self, other: &ParameterStore) -> Result<(), Error> {
        if other.len() != self.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count mismatch: model has {}, checkpoint has {}",
                self.len(),
                other.len()
            )));
        }
        for (name, tensor) in other.iter() {
            let id = self
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected parameter `{name}` in checkpoint")))?;
            if self.get(id).shape() != tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?} in model but {:?} in checkpoint",
                    self.get(id).shape(),
                    tensor.shape()
                )));
            }
            *self.get_mut(id) = tensor.clone();
        }
        Ok(())
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<(), Error> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.len() as u32).to_le_bytes())?;
        for (name, tensor) in self.iter() {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&(tensor.rank() as u32).to_le_bytes())?;
            for &d in tensor.shape() {
                out.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in tensor.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self, Error> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let count = read_u32(&mut input)?;
        let mut store = ParameterStore::new(0);
        for _ in 0..count {
            let len = read_u32(&mut input)? as usize;
            let mut name = vec![0u8; len];
            input.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("non UTF-8 path".into()))?;
            let rank = read_u32(&mut input)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                input.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                let mut b = [0u8; 8];
                input.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            store.add(&name, Tensor::new(&shape, data)?)?;
        }
        Ok(store)
    }
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32, Error> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
