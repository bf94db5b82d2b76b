//! Tensor-in, tensor-out forms of the differentiable operations, for callers
//! that do not need a tape.

use alloc::vec::Vec;

use crate::autodiff::{Graph, Pointwise};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Scalar, Tensor};

fn run<T, F>(inputs: &[&Tensor<T>], f: F) -> Result<Tensor<T>>
where
    T: Scalar,
    F: FnOnce(&mut Graph<'_, T>, &[crate::autodiff::NodeId]) -> Result<crate::autodiff::NodeId>,
{
    let store = ParamStore::new();
    let mut g = Graph::inference(&store);
    let ids: Vec<_> = inputs.iter().map(|t| g.input((*t).clone())).collect();
    let out = f(&mut g, &ids)?;
    Ok(g.to_tensor(out))
}

pub fn conv2d<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>, stride: usize, pad: usize) -> Result<Tensor<T>> {
    run(&[input, kernel, bias], |g, ids| g.conv2d(ids[0], ids[1], ids[2], stride, pad))
}

pub fn maxpool2x2<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    run(&[input], |g, ids| g.maxpool2x2(ids[0]))
}

pub fn linear<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    run(&[input, weight, bias], |g, ids| g.linear(ids[0], ids[1], Some(ids[2])))
}

pub fn pointwise<T: Scalar>(input: &Tensor<T>, kind: Pointwise) -> Result<Tensor<T>> {
    run(&[input], |g, ids| g.pointwise(ids[0], kind))
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let mut out = logits.to_vec();
    crate::autodiff::softmax_in_place(&mut out);
    out
}

/// `max(0, margin - label * score)`.
pub fn hinge<T: Scalar>(score: T, label: T, margin: T) -> Result<T> {
    if label != T::one() && label != -T::one() {
        return Err(Error::InvalidArgument("hinge label must be +1 or -1".into()));
    }
    if !(margin > T::zero()) {
        return Err(Error::InvalidArgument("hinge margin must be positive".into()));
    }
    Ok((margin - label * score).max(T::zero()))
}

/// `-log softmax(logits)[true_index]`.
pub fn cross_entropy<T: Scalar>(logits: &[T], true_index: usize) -> Result<T> {
    if true_index >= logits.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "true index {true_index} out of range 0..{}",
            logits.len()
        )));
    }
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + logits.iter().fold(T::zero(), |a, &v| a + (v - m).exp()).ln();
    Ok(lse - logits[true_index])
}
