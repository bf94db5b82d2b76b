//! Central-difference gradient verification.

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};

/// Worst coordinate error, relative to the larger of the two gradients'
/// peak magnitudes. Normalising per coordinate instead would turn round-off
/// on a coordinate that happens to cancel to ~0 into an arbitrarily large
/// "error", which single precision cannot avoid.
fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let peak = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = peak(analytic) + peak(numeric) + 1e-12;
    analytic.iter().zip(numeric).fold(0.0, |m, (a, n)| m.max((a - n).abs() / scale))
}

fn eval<T, F>(store: &ParamStore<T>, f: &F, x: &Tensor<T>) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Graph<'_, T>, NodeId) -> Result<NodeId>,
{
    let mut g = Graph::inference(store);
    let input = g.input(x.clone());
    let out = f(&mut g, input)?;
    let v = g.value(out);
    if v.len() != 1 {
        return Err(Error::Dimension { op: "finite_diff_check", detail: alloc::format!("function output has {} values", v.len()) });
    }
    if !v[0].is_finite() {
        return Err(Error::NonFinite { op: "finite_diff_check" });
    }
    Ok(v[0])
}

/// Largest relative error `max_i |a_i - n_i| / (max|a| + max|n|)` between
/// the autodiff gradient `a` of `f` at `x` and the central difference `n`
/// with step `eps`.
///
/// `f` receives a graph and the input node and must return a scalar node.
pub fn finite_diff_check<T, F>(store: &ParamStore<T>, f: F, x: &Tensor<T>, eps: T) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Graph<'_, T>, NodeId) -> Result<NodeId>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let input = g.input_with_grad(x.clone());
        let out = f(&mut g, input)?;
        let grads = g.backward(out)?;
        match grads.node(input) {
            Some(v) => v.to_vec(),
            None => alloc::vec![T::zero(); x.numel()],
        }
    };
    let mut numeric = alloc::vec::Vec::with_capacity(x.numel());
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = eval(store, &f, &probe)?;
        probe.data_mut()[i] = orig - eps;
        let down = eval(store, &f, &probe)?;
        probe.data_mut()[i] = orig;
        numeric.push((up - down).to_f64_lossy() / (2.0 * eps.to_f64_lossy()));
    }
    let analytic: alloc::vec::Vec<f64> = analytic.iter().map(|v| v.to_f64_lossy()).collect();
    Ok(max_rel_err(&analytic, &numeric))
}

/// Same check with respect to one parameter tensor; `f` builds the scalar
/// from the graph alone.
pub fn param_grad_check<T, F>(store: &ParamStore<T>, f: F, param: ParamId, eps: T) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Graph<'_, T>) -> Result<NodeId>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let out = f(&mut g)?;
        let grads = g.backward(out)?;
        match grads.param(param) {
            Some(v) => v.to_vec(),
            None => alloc::vec![T::zero(); store.get(param).numel()],
        }
    };
    let mut probe = store.clone();
    let scalar = |s: &ParamStore<T>| -> Result<T> {
        let mut g = Graph::inference(s);
        let out = f(&mut g)?;
        let v = g.value(out)[0];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { op: "param_grad_check" })
        }
    };
    let mut numeric = alloc::vec::Vec::with_capacity(analytic.len());
    for i in 0..analytic.len() {
        let orig = probe.get(param).data()[i];
        probe.get_mut(param).data_mut()[i] = orig + eps;
        let up = scalar(&probe)?;
        probe.get_mut(param).data_mut()[i] = orig - eps;
        let down = scalar(&probe)?;
        probe.get_mut(param).data_mut()[i] = orig;
        numeric.push((up - down).to_f64_lossy() / (2.0 * eps.to_f64_lossy()));
    }
    let analytic: alloc::vec::Vec<f64> = analytic.iter().map(|v| v.to_f64_lossy()).collect();
    Ok(max_rel_err(&analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn sum_has_unit_gradient() {
        let store = ParamStore::<f64>::new();
        let x = Tensor::new(&[2, 3], (0..6).map(|v| v as f64 * 0.37 - 1.0).collect::<Vec<_>>()).unwrap();
        let err = finite_diff_check(&store, |g, x| g.sum(x), &x, 1e-5).unwrap();
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // relu gradient at exactly 0 is taken as 0, the central difference sees 0.5.
        let store = ParamStore::<f64>::new();
        let x = Tensor::new(&[1, 1], alloc::vec![0.0]).unwrap();
        let err = finite_diff_check(
            &store,
            |g, x| {
                let r = g.relu(x)?;
                g.sum(r)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err > 0.5);
    }
}
