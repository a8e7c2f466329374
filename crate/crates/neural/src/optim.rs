//! Plain SGD, in lookahead (copy) and commit (in-place) forms.

use crate::error::{NeuralError, Result};
use crate::params::{GradSet, ParamStore};

fn check(store: &ParamStore, grads: &GradSet) -> Result<()> {
    assert_eq!(store.len(), grads.0.len(), "gradient set does not match store");
    for (p, g) in store.iter().zip(&grads.0) {
        if !g.is_finite() {
            return Err(NeuralError::Diverged(format!("gradient of `{}`", p.name)));
        }
    }
    Ok(())
}

/// `p <- p - lr * grad` on a copy; `store` is left untouched.
pub fn sgd_lookahead(store: &ParamStore, grads: &GradSet, lr: f64) -> Result<ParamStore> {
    let mut next = store.clone();
    sgd_commit(&mut next, grads, lr)?;
    Ok(next)
}

/// `p <- p - lr * grad` in place, trainable parameters only.
pub fn sgd_commit(store: &mut ParamStore, grads: &GradSet, lr: f64) -> Result<()> {
    check(store, grads)?;
    for (p, g) in store.params_mut().iter_mut().zip(&grads.0) {
        if p.trainable {
            p.value.add_scaled(g, -lr);
        }
    }
    Ok(())
}
