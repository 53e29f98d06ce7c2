use nalgebra::DVector;

use super::assembly::Assembly;
use crate::error::{Error, Result};

/// Dual iterate `lambda_ij = [mu; gamma; theta]` per agent, in relabeled order.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: Vec<DVector<f64>>,
    pub iteration: usize,
}

impl DualState {
    pub fn zeros(assembly: &Assembly) -> Self {
        let lambda = assembly.agents.iter().map(|a| DVector::zeros(a.dims.len())).collect();
        Self { lambda, iteration: 0 }
    }

    pub fn stacked(&self) -> DVector<f64> {
        stack(&self.lambda)
    }

    pub fn from_stacked(assembly: &Assembly, v: &DVector<f64>) -> Result<Self> {
        if v.len() != assembly.dual_len {
            return Err(Error::Contract(format!(
                "stacked dual vector has {} entries, expected {}",
                v.len(),
                assembly.dual_len
            )));
        }
        let lambda = assembly
            .agents
            .iter()
            .zip(&assembly.offsets)
            .map(|(a, &off)| v.rows(off, a.dims.len()).into_owned())
            .collect();
        Ok(Self { lambda, iteration: 0 })
    }
}

/// Edge multipliers `xi` (intra edges) and `zeta` (global edges), in the
/// edge order of [`Assembly`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMultipliers {
    pub xi: Vec<DVector<f64>>,
    pub zeta: Vec<DVector<f64>>,
}

impl EdgeMultipliers {
    pub fn zeros(assembly: &Assembly) -> Self {
        let xi = assembly.intra_edges.iter().map(|e| DVector::zeros(assembly.intra_width(e))).collect();
        let b = assembly.global_width();
        let zeta = assembly.global_edges.iter().map(|_| DVector::zeros(b)).collect();
        Self { xi, zeta }
    }

    /// `omega = [xi; zeta]`, aligned with the rows of `Z`.
    pub fn stacked(&self) -> DVector<f64> {
        let mut all = self.xi.clone();
        all.extend(self.zeta.iter().cloned());
        stack(&all)
    }

    pub fn from_stacked(assembly: &Assembly, v: &DVector<f64>) -> Result<Self> {
        if v.len() != assembly.z.nrows() {
            return Err(Error::Contract(format!(
                "stacked multiplier vector has {} entries, expected {}",
                v.len(),
                assembly.z.nrows()
            )));
        }
        let xi = assembly
            .intra_edges
            .iter()
            .map(|e| v.rows(e.row, assembly.intra_width(e)).into_owned())
            .collect();
        let b = assembly.global_width();
        let zeta = assembly.global_edges.iter().map(|e| v.rows(e.row, b).into_owned()).collect();
        Ok(Self { xi, zeta })
    }
}

fn stack(blocks: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(blocks.iter().map(|b| b.len()).sum(), blocks.iter().flat_map(|b| b.iter().copied()))
}

/// Running mean of the dual iterates `lambda^1, ..., lambda^{T+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicAverage {
    mean: Vec<DVector<f64>>,
    count: usize,
}

impl ErgodicAverage {
    pub fn new(template: &DualState) -> Self {
        Self { mean: template.lambda.iter().map(|l| DVector::zeros(l.len())).collect(), count: 0 }
    }

    pub fn push(&mut self, state: &DualState) {
        self.count += 1;
        let w = 1.0 / self.count as f64;
        for (m, l) in self.mean.iter_mut().zip(&state.lambda) {
            m.axpy(w, &(l - &*m), 1.0);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> DualState {
        DualState { lambda: self.mean.clone(), iteration: self.count }
    }
}
