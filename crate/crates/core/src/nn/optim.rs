use crate::error::{Error, Result};
use crate::nn::model::{Gradients, ModelParams};

/// Plain SGD: `θ ← θ − lr·g`.
pub fn sgd_step(params: &ModelParams, grads: &Gradients, lr: f64) -> Result<ModelParams> {
    let mut out = params.clone();
    sgd_step_in_place(&mut out, grads, lr)?;
    Ok(out)
}

pub fn sgd_step_in_place(params: &mut ModelParams, grads: &Gradients, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::config("lr", format!("must be a finite non-negative number, got {lr}")));
    }
    params.check_congruent(&grads.params)?;
    for (p, g) in params.tensors_mut().zip(grads.params.tensors()) {
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}
