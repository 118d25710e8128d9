//! Analytic FLOP accounting.
//!
//! Counts are a deterministic closed-form model of the arithmetic performed
//! by each pipeline phase, not hardware counters. The per-phase formulas:
//!
//! - forward pass (binary linear, input dim q): `2q + 1` per sample
//!   (q multiplies, q - 1 adds, 1 bias add, rounded to 2q + 1);
//! - forward pass (binary mlp1, hidden h): `h(2q + 1) + h + 2h + 1`;
//!   multiclass variants scale the output layer by the class count;
//! - backward pass: `2 x forward` (standard reverse-mode factor);
//! - one SGD sample step: `forward + backward + 4p` (momentum update and
//!   parameter update are 2p each);
//! - training: `epochs x samples x step`;
//! - gradient extraction: `3 x forward` per sample (forward + backward);
//! - projection to d dims: `2 p d` per sample;
//! - one Newton iteration on n_s samples in d dims:
//!   `2 n_s d^2 + (2/3) d^3 + 8 n_s d` (Hessian build, Cholesky solve,
//!   logits/gradient/line-search);
//! - one SDP solver iteration on an n x n matrix: `24 n^3 + 10 n^2`
//!   (eigendecomposition-dominated).

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ArchKind, ArchitectureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    MetaTraining,
    GradientExtraction,
    Projection,
    RegressionSolve,
    Sdp,
    OracleTraining,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::MetaTraining,
        Phase::GradientExtraction,
        Phase::Projection,
        Phase::RegressionSolve,
        Phase::Sdp,
        Phase::OracleTraining,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Phase::MetaTraining => "meta_training",
            Phase::GradientExtraction => "gradient_extraction",
            Phase::Projection => "projection",
            Phase::RegressionSolve => "regression_solve",
            Phase::Sdp => "sdp",
            Phase::OracleTraining => "oracle_training",
        }
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phase::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown phase '{s}'")))
    }
}

/// Workload descriptor consumed by [`flops_for`]. Fill the fields relevant to
/// the phase; the rest are ignored.
#[derive(Debug, Clone, Copy, Default)]
pub struct Workload {
    pub arch: Option<ArchitectureSpec>,
    pub samples: usize,
    pub epochs: usize,
    /// Gradient dimension (p) for projection.
    pub p: usize,
    /// Projected dimension.
    pub d: usize,
    /// Newton or SDP iterations.
    pub iterations: usize,
    /// Matrix side for the SDP phase.
    pub n: usize,
}

/// Closed-form FLOP count for one unit of work in `phase`.
pub fn flops_for(phase: Phase, w: &Workload) -> Result<u64> {
    let need_arch = || {
        w.arch
            .ok_or_else(|| Error::InvalidArgument("workload missing arch".into()))
    };
    match phase {
        Phase::MetaTraining | Phase::OracleTraining => {
            Ok(training_flops(&need_arch()?, w.samples, w.epochs))
        }
        Phase::GradientExtraction => Ok(extraction_flops(&need_arch()?, w.samples)),
        Phase::Projection => Ok(projection_flops(w.p, w.d, w.samples)),
        Phase::RegressionSolve => Ok(newton_flops(w.samples, w.d, w.iterations)),
        Phase::Sdp => Ok(sdp_flops(w.n, w.iterations)),
    }
}

/// FLOPs of one forward pass.
pub fn forward_flops(spec: &ArchitectureSpec) -> u64 {
    let q = spec.input_dim as u64;
    let c = if spec.is_binary() {
        1
    } else {
        spec.num_classes as u64
    };
    match spec.kind {
        ArchKind::Linear => c * (2 * q + 1),
        ArchKind::Mlp1 { hidden_dim } => {
            let h = hidden_dim as u64;
            h * (2 * q + 1) + h + c * (2 * h + 1)
        }
    }
}

/// FLOPs of SGD training: `epochs * samples * (3 forward + 4p)`.
pub fn training_flops(spec: &ArchitectureSpec, samples: usize, epochs: usize) -> u64 {
    let step = 3 * forward_flops(spec) + 4 * spec.param_count() as u64;
    epochs as u64 * samples as u64 * step
}

/// FLOPs of extracting (f0, gradient) for `samples` examples.
pub fn extraction_flops(spec: &ArchitectureSpec, samples: usize) -> u64 {
    samples as u64 * 3 * forward_flops(spec)
}

/// FLOPs of projecting `samples` gradients from p to d dims.
pub fn projection_flops(p: usize, d: usize, samples: usize) -> u64 {
    2 * p as u64 * d as u64 * samples as u64
}

/// FLOPs of `iterations` Newton steps on `n_s` samples in `d` dims.
pub fn newton_flops(n_s: usize, d: usize, iterations: usize) -> u64 {
    let n_s = n_s as u64;
    let d = d as u64;
    iterations as u64 * (2 * n_s * d * d + (2 * d * d * d) / 3 + 8 * n_s * d)
}

/// FLOPs of `iterations` SDP solver iterations on an n x n matrix.
pub fn sdp_flops(n: usize, iterations: usize) -> u64 {
    let n = n as u64;
    iterations as u64 * (24 * n * n * n + 10 * n * n)
}

/// Monotone per-phase FLOP counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsLedger {
    pub meta_training: u64,
    pub gradient_extraction: u64,
    pub projection: u64,
    pub regression_solve: u64,
    pub sdp: u64,
    pub oracle_training: u64,
}

impl FlopsLedger {
    pub fn add(&mut self, phase: Phase, flops: u64) {
        let slot = match phase {
            Phase::MetaTraining => &mut self.meta_training,
            Phase::GradientExtraction => &mut self.gradient_extraction,
            Phase::Projection => &mut self.projection,
            Phase::RegressionSolve => &mut self.regression_solve,
            Phase::Sdp => &mut self.sdp,
            Phase::OracleTraining => &mut self.oracle_training,
        };
        *slot = slot.checked_add(flops).expect("flops counter overflow");
    }

    pub fn get(&self, phase: Phase) -> u64 {
        match phase {
            Phase::MetaTraining => self.meta_training,
            Phase::GradientExtraction => self.gradient_extraction,
            Phase::Projection => self.projection,
            Phase::RegressionSolve => self.regression_solve,
            Phase::Sdp => self.sdp,
            Phase::OracleTraining => self.oracle_training,
        }
    }

    pub fn total(&self) -> u64 {
        Phase::ALL.iter().map(|&p| self.get(p)).sum()
    }

    pub fn merge(&mut self, other: &FlopsLedger) {
        for phase in Phase::ALL {
            self.add(phase, other.get(phase));
        }
    }
}
