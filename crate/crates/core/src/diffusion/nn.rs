//! Small layer library on top of candle tensors.

use candle_core::{DType, Tensor, D};

use super::params::{Init, ParamStore};
use crate::Result;

pub struct Linear {
    w: Tensor,
    b: Tensor,
    out_dim: usize,
}

impl Linear {
    pub fn new(ps: &mut ParamStore, name: &str, din: usize, dout: usize) -> Result<Self> {
        Self::with_init(ps, name, din, dout, Init::Uniform(1.0 / (din as f64).sqrt()))
    }

    pub fn with_init(ps: &mut ParamStore, name: &str, din: usize, dout: usize, init: Init) -> Result<Self> {
        let w = ps.get(&format!("{name}.w"), &[din, dout], init)?;
        let b = ps.get(&format!("{name}.b"), &[dout], Init::Zeros)?;
        Ok(Self { w, b, out_dim: dout })
    }

    /// Applies to the last axis of a tensor of any rank.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let din = *dims.last().expect("rank >= 1");
        let flat = x.reshape(((), din))?;
        let y = flat.matmul(&self.w)?.broadcast_add(&self.b)?;
        let mut out = dims;
        *out.last_mut().expect("rank >= 1") = self.out_dim;
        Ok(y.reshape(out)?)
    }
}

/// Layer norm over the last axis, written out from elementary ops.
pub struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        let gamma = ps.get(&format!("{name}.g"), &[dim], Init::Ones)?;
        let beta = ps.get(&format!("{name}.b"), &[dim], Init::Zeros)?;
        Ok(Self { gamma, beta })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let xc = x.broadcast_sub(&mean)?;
        let var = xc.sqr()?.mean_keepdim(D::Minus1)?;
        let xn = xc.broadcast_div(&(var + 1e-5)?.sqrt()?)?;
        Ok(xn.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)?)
    }
}

pub struct Mlp {
    fc1: Linear,
    fc2: Linear,
}

impl Mlp {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(ps, &format!("{name}.fc1"), dim, hidden)?,
            fc2: Linear::new(ps, &format!("{name}.fc2"), hidden, dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&self.fc1.forward(x)?.silu()?)
    }
}

/// Multi-head attention. Inputs are `(B, N, d)`.
pub struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl Attention {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize, ctx_dim: usize, heads: usize) -> Result<Self> {
        assert!(dim % heads == 0, "width must divide into heads");
        Ok(Self {
            q: Linear::new(ps, &format!("{name}.q"), dim, dim)?,
            k: Linear::new(ps, &format!("{name}.k"), ctx_dim, dim)?,
            v: Linear::new(ps, &format!("{name}.v"), ctx_dim, dim)?,
            o: Linear::new(ps, &format!("{name}.o"), dim, dim)?,
            heads,
        })
    }

    /// `bias` is added to the attention logits and must broadcast to
    /// `(B, heads, Nq, Nk)`.
    pub fn forward(&self, x: &Tensor, ctx: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let (b, nq, d) = x.dims3()?;
        let nk = ctx.dim(1)?;
        let h = self.heads;
        let dh = d / h;
        let split = |t: Tensor, n: usize| -> Result<Tensor> {
            Ok(t.reshape((b, n, h, dh))?.transpose(1, 2)?.contiguous()?)
        };
        let q = split(self.q.forward(x)?, nq)?;
        let k = split(self.k.forward(ctx)?, nk)?;
        let v = split(self.v.forward(ctx)?, nk)?;
        let mut logits = q.matmul(&k.t()?.contiguous()?)?.affine(1.0 / (dh as f64).sqrt(), 0.0)?;
        if let Some(bias) = bias {
            logits = logits.broadcast_add(bias)?;
        }
        let attn = candle_nn::ops::softmax(&logits, D::Minus1)?;
        let y = attn.matmul(&v)?.transpose(1, 2)?.reshape((b, nq, d))?;
        self.o.forward(&y)
    }
}

/// Sinusoidal embedding of integer steps, `(len(ks), dim)`.
pub fn timestep_embedding(ks: &[usize], dim: usize, dtype: DType) -> Result<Tensor> {
    let half = dim / 2;
    let mut data = Vec::with_capacity(ks.len() * dim);
    for &k in ks {
        for i in 0..dim {
            let j = i % half.max(1);
            let freq = (-(10_000f64.ln()) * j as f64 / half.max(1) as f64).exp();
            let a = k as f64 * freq;
            data.push(if i < half { a.sin() } else { a.cos() });
        }
    }
    Ok(Tensor::from_vec(data, (ks.len(), dim), &candle_core::Device::Cpu)?.to_dtype(dtype)?)
}

pub struct TimeMlp {
    fc1: Linear,
    fc2: Linear,
    dim: usize,
}

impl TimeMlp {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(ps, &format!("{name}.fc1"), dim, dim)?,
            fc2: Linear::new(ps, &format!("{name}.fc2"), dim, dim)?,
            dim,
        })
    }

    pub fn forward(&self, ks: &[usize], dtype: DType) -> Result<Tensor> {
        let e = timestep_embedding(ks, self.dim, dtype)?;
        self.fc2.forward(&candle_nn::ops::silu(&self.fc1.forward(&e)?)?)
    }
}

pub struct Conv2d {
    w: Tensor,
    b: Tensor,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let bound = 1.0 / ((cin * kernel * kernel) as f64).sqrt();
        let w = ps.get(&format!("{name}.w"), &[cout, cin, kernel, kernel], Init::Uniform(bound))?;
        let b = ps.get(&format!("{name}.b"), &[1, cout, 1, 1], Init::Zeros)?;
        Ok(Self { w, b, stride, padding })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.conv2d(&self.w, self.padding, self.stride, 1, 1)?.broadcast_add(&self.b)?)
    }
}
