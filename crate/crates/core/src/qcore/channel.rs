use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use super::{CMatrix, C64};
use crate::error::{check_probability, Error, Result};

/// Trace-preserving channel in Kraus form, `ρ ↦ Σ K ρ K†`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    operators: Vec<CMatrix>,
}

impl KrausChannel {
    pub fn new(operators: Vec<CMatrix>) -> Result<Self> {
        let dim = operators
            .first()
            .map(CMatrix::dim)
            .ok_or(Error::DimensionMismatch { expected: 1, found: 0 })?;
        if let Some(bad) = operators.iter().find(|k| k.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        let sum = completeness(&operators);
        let dev = sum.max_abs_diff(&CMatrix::identity(dim));
        if dev > 1e-10 {
            return Err(Error::NotTracePreserving(dev));
        }
        Ok(Self { operators })
    }

    /// Rescales arbitrary operators `A_k` into a trace-preserving set
    /// `A_k S^{-1/2}` with `S = Σ A_k† A_k`.
    pub fn from_unnormalized(operators: Vec<CMatrix>) -> Result<Self> {
        let s = completeness(&operators);
        let (vals, vecs) = s.eigh();
        if vals[0] <= 1e-12 {
            return Err(Error::Singular);
        }
        let inv_sqrt: Vec<f64> = vals.iter().map(|v| 1.0 / v.sqrt()).collect();
        let s_inv_half = &(&vecs * &CMatrix::diagonal(&inv_sqrt)) * &vecs.adjoint();
        Self::new(operators.iter().map(|a| a * &s_inv_half).collect())
    }

    pub fn identity(qubits: usize) -> Self {
        Self {
            operators: vec![CMatrix::identity(1 << qubits)],
        }
    }

    pub fn unitary(u: CMatrix) -> Result<Self> {
        Self::new(vec![u])
    }

    /// `ρ ↦ (1 − prob)·ρ + prob·Tr(ρ)·σ` for a diagonal state `σ` given by
    /// its populations.
    pub fn replacement(populations: &[f64], prob: f64) -> Result<Self> {
        check_probability("prob", prob)?;
        let total: f64 = populations.iter().sum();
        if (total - 1.0).abs() > 1e-12 || populations.iter().any(|&p| p < 0.0) {
            return Err(Error::param("populations", total, "must be a probability vector"));
        }
        let d = populations.len();
        let mut ops = vec![CMatrix::identity(d).scale_real((1.0 - prob).sqrt())];
        for (j, &lambda) in populations.iter().enumerate() {
            if lambda == 0.0 {
                continue;
            }
            let amp = (prob * lambda).sqrt();
            for i in 0..d {
                let mut k = CMatrix::zeros(d);
                k[(j, i)] = C64::new(amp, 0.0);
                ops.push(k);
            }
        }
        Self::new(ops)
    }

    /// Depolarizing channel on `qubits` qubits: mixes with the maximally mixed
    /// state with probability `prob`.
    pub fn depolarizing(qubits: usize, prob: f64) -> Result<Self> {
        let d = 1 << qubits;
        Self::replacement(&vec![1.0 / d as f64; d], prob)
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    pub fn dim(&self) -> usize {
        self.operators[0].dim()
    }
}

fn completeness(ops: &[CMatrix]) -> CMatrix {
    let dim = ops.first().map_or(0, CMatrix::dim);
    ops.iter()
        .fold(CMatrix::zeros(dim), |acc, k| &acc + &(&k.adjoint() * k))
}
