//! Additive attention masks with entries in `{0, NEG}`.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Additive mask value for blocked positions. Finite so that backward never
/// sees `inf - inf`; `exp(NEG - max)` underflows to exactly zero.
pub const NEG: f64 = -1e9;

#[derive(Clone, Debug, PartialEq)]
pub struct MaskMatrix {
    entries: Tensor,
}

impl MaskMatrix {
    fn from_predicate(len: usize, allowed: impl Fn(usize, usize) -> bool) -> Result<Self> {
        if len == 0 {
            return Err(Error::contract("mask length must be at least 1"));
        }
        let entries = Tensor::from_fn(&[len, len], |idx| {
            if allowed(idx / len, idx % len) {
                0.0
            } else {
                NEG
            }
        });
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.data()[i * self.len() + j]
    }

    pub fn is_blocked(&self, i: usize, j: usize) -> bool {
        self.get(i, j) != 0.0
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.entries
    }
}

/// Turn-local mask: token `i` may attend to token `j` iff both belong to the
/// same turn.
pub fn build_local_mask(turn_ids: &[usize]) -> Result<MaskMatrix> {
    MaskMatrix::from_predicate(turn_ids.len(), |i, j| turn_ids[i] == turn_ids[j])
}

/// Unrestricted mask (all zeros).
pub fn build_global_mask(len: usize) -> Result<MaskMatrix> {
    MaskMatrix::from_predicate(len, |_, _| true)
}

/// Lower-triangular mask: position `i` sees positions `j <= i`.
pub fn build_causal_mask(len: usize) -> Result<MaskMatrix> {
    MaskMatrix::from_predicate(len, |i, j| j <= i)
}

#[cfg(test)]
mod tests {
    use super::*;

    const N: f64 = NEG;

    #[test]
    fn local_mask_small_case() {
        let m = build_local_mask(&[0, 0, 1]).unwrap();
        assert_eq!(
            m.as_tensor().data(),
            &[0.0, 0.0, N, 0.0, 0.0, N, N, N, 0.0]
        );
    }

    #[test]
    fn single_turn_local_equals_global() {
        for len in 1..6 {
            let local = build_local_mask(&vec![0; len]).unwrap();
            assert_eq!(local, build_global_mask(len).unwrap());
            assert!(local.as_tensor().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn causal_small_cases() {
        assert_eq!(build_causal_mask(1).unwrap().as_tensor().data(), &[0.0]);
        assert_eq!(build_causal_mask(2).unwrap().as_tensor().data(), &[0.0, N, 0.0, 0.0]);
    }

    #[test]
    fn empty_is_rejected() {
        assert!(build_local_mask(&[]).is_err());
        assert!(build_global_mask(0).is_err());
        assert!(build_causal_mask(0).is_err());
    }
}
