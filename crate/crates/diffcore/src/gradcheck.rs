//! Central finite-difference checks of analytic gradients.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::ParamStore;

/// Result of comparing one scalar parameter's analytic and numeric gradient.
#[derive(Clone, Debug)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares the tape gradient of `f` with central differences of step `h`
/// for every trainable scalar in `store`. `f` must rebuild the forward pass
/// deterministically (fixed dropout seed) and return the scalar loss.
///
/// Returns the entries whose relative error exceeds `tol` and whose absolute
/// disagreement exceeds the rounding noise of the difference quotient,
/// `4 eps max(|f(x+h)|, |f(x-h)|) / h`. Below that noise the numeric
/// gradient carries no information.
pub fn check<F>(store: &mut ParamStore, h: f64, tol: f64, mut f: F) -> Result<Vec<GradMismatch>>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    store.zero_grads();
    let mut g = Graph::new(true, 17);
    let loss = f(&mut g, store)?;
    g.backward(loss, store)?;
    let analytic: Vec<Vec<f64>> = store.ids().map(|id| store.grad(id).data().to_vec()).collect();
    store.zero_grads();

    let mut bad = Vec::new();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if !store.is_trainable(id) {
            continue;
        }
        for k in 0..store.value(id).len() {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + h;
            let plus = eval(store, &mut f)?;
            store.value_mut(id).data_mut()[k] = orig - h;
            let minus = eval(store, &mut f)?;
            store.value_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[id.index()][k];
            let rel = relative_error(a, numeric);
            if rel > tol && (a - numeric).abs() > rounding_noise(plus, minus, h) {
                bad.push(GradMismatch {
                    param: store.name(id).to_string(),
                    index: k,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    Ok(bad)
}

/// Rounding error of a central difference of step `h`.
pub fn rounding_noise(plus: f64, minus: f64, h: f64) -> f64 {
    4.0 * f64::EPSILON * plus.abs().max(minus.abs()) / h
}

fn eval<F>(store: &ParamStore, f: &mut F) -> Result<f64>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new(true, 17);
    let loss = f(&mut g, store)?;
    Ok(g.scalar(loss))
}
