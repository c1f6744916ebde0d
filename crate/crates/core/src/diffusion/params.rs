//! Named trainable parameters with seeded initialization.
//!
//! Initial values come from [`SplitMix64`] rather than the backend RNG so a
//! given seed always yields the same network.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};

use crate::rng::SplitMix64;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
    /// Uniform in `[-b, b]`.
    Uniform(f64),
}

pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
    rng: SplitMix64,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType) -> Self {
        Self {
            vars: BTreeMap::new(),
            dtype,
            device: Device::Cpu,
            rng: SplitMix64::new(seed),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Creates the parameter. Names must be unique.
    pub fn get(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter {name}")));
        }
        let n: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Normal(std) => (0..n).map(|_| self.rng.normal() * std).collect(),
            Init::Uniform(b) => (0..n).map(|_| self.rng.uniform(-b, b)).collect(),
        };
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(out)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// `name:dims` lines, used to check that a checkpoint fits a network.
    pub fn layout(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.vars {
            s.push_str(&format!("{k}:{:?}\n", v.dims()));
        }
        s
    }

    /// Flattened f32 copies of every parameter in name order.
    pub fn export(&self) -> Result<Vec<(String, Vec<usize>, Vec<f32>)>> {
        self.vars
            .iter()
            .map(|(k, v)| {
                let data = v.as_tensor().flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()?;
                Ok((k.clone(), v.dims().to_vec(), data))
            })
            .collect()
    }

    /// Overwrites parameter values in place; the set of names and shapes
    /// must match exactly.
    pub fn import(&self, params: &[(String, Vec<usize>, Vec<f32>)]) -> Result<()> {
        if params.len() != self.vars.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.vars.len(),
                params.len()
            )));
        }
        for (name, dims, data) in params {
            let var = self
                .vars
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected parameter {name}")))?;
            if var.dims() != dims.as_slice() || data.len() != var.elem_count() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: expected {:?}, found {:?}",
                    var.dims(),
                    dims
                )));
            }
            let t = Tensor::from_slice(data, dims.as_slice(), &self.device)?.to_dtype(self.dtype)?;
            var.set(&t)?;
        }
        Ok(())
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
