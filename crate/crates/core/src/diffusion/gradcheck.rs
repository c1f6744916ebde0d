//! Central finite-difference check of analytic parameter gradients.

use candle_core::{DType, Tensor};

use super::params::ParamStore;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Largest absolute gradient seen, to show the check is not vacuous.
    pub max_abs_grad: f64,
}

/// Compares `d loss / d θ` from backprop with `(L(θ+h) − L(θ−h)) / 2h` for
/// every scalar parameter (or every `stride`-th one). The store must be
/// `F64` and `loss` must be deterministic. Relative error uses
/// `|a − n| / max(|a|, |n|, floor)`.
pub fn check_gradients<F>(params: &ParamStore, stride: usize, h: f64, floor: f64, loss: F) -> Result<GradCheck>
where
    F: Fn() -> Result<Tensor>,
{
    if params.dtype() != DType::F64 {
        return Err(Error::InvalidArgument("gradient check needs an f64 parameter store".into()));
    }
    let l = loss()?;
    let grads = l.backward()?;
    let eval = || -> Result<f64> { Ok(loss()?.to_scalar::<f64>()?) };
    let mut out = GradCheck { checked: 0, max_rel_err: 0.0, max_abs_grad: 0.0 };
    let mut counter = 0usize;
    for (name, var) in params.iter() {
        let analytic: Vec<f64> = match grads.get(var.as_tensor()) {
            Some(g) => g.flatten_all()?.to_vec1()?,
            None => vec![0.0; var.elem_count()],
        };
        let base: Vec<f64> = var.as_tensor().flatten_all()?.to_vec1()?;
        let dims = var.dims().to_vec();
        for i in 0..base.len() {
            counter += 1;
            if (counter - 1) % stride.max(1) != 0 {
                continue;
            }
            let mut v = base.clone();
            v[i] = base[i] + h;
            var.set(&Tensor::from_vec(v.clone(), dims.as_slice(), params.device())?)?;
            let up = eval()?;
            v[i] = base[i] - h;
            var.set(&Tensor::from_vec(v, dims.as_slice(), params.device())?)?;
            let down = eval()?;
            var.set(&Tensor::from_vec(base.clone(), dims.as_slice(), params.device())?)?;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > out.max_rel_err {
                log::debug!("{name}[{i}]: analytic {a:e} numeric {numeric:e}");
            }
            out.max_rel_err = out.max_rel_err.max(rel);
            out.max_abs_grad = out.max_abs_grad.max(a.abs());
            out.checked += 1;
        }
    }
    Ok(out)
}
