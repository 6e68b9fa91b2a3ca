//! Closed-form cost model.
//!
//! Each algorithm's predicted count is the sum of exactly the per-call
//! formulas the kernels record, over exactly the calls the drivers make.
//! Predictions therefore match measured counters to the flop for any run
//! with matching dimensions; the model is not a fit, it is the schedule.

use serde::Serialize;

use crate::kernels::cost::*;

use super::ProblemDims;

/// The four solver rungs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Blackbox,
    SeqGls,
    HpGwas,
    Gwfgls,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Blackbox,
        Algorithm::SeqGls,
        Algorithm::HpGwas,
        Algorithm::Gwfgls,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Blackbox => "blackbox",
            Algorithm::SeqGls => "seqgls",
            Algorithm::HpGwas => "hpgwas",
            Algorithm::Gwfgls => "gwfgls",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// An algorithm tag carrying its closed-form flop formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostModel {
    pub algorithm: Algorithm,
}

impl CostModel {
    pub fn new(algorithm: Algorithm) -> Self {
        Self { algorithm }
    }

    /// Predicted flops over the conventional stream shape: one panel
    /// column per problem (`r = 1`, `l = p - 1`).
    pub fn flops(&self, n: usize, p: usize, m: usize) -> u64 {
        assert!(p >= 1, "need at least one predictor");
        predicted_flops_dims(self.algorithm, &ProblemDims::new(n, p - 1, 1, m))
    }
}

/// Convenience wrapper over [`CostModel::flops`].
pub fn predicted_flops(model: CostModel, n: usize, p: usize, m: usize) -> u64 {
    model.flops(n, p, m)
}

/// Predicted flops with the partition spelled out. `m = 0` is allowed and
/// leaves only the per-sequence setup terms.
pub fn predicted_flops_dims(algorithm: Algorithm, dims: &ProblemDims) -> u64 {
    let ProblemDims { n, l, r, m } = *dims;
    let p = l + r;
    let m64 = m as u64;
    match algorithm {
        Algorithm::Blackbox => {
            m64 * (potrf(n) + trsm(n, p) + trsv(n) + syrk(n, p) + gemv(n, p) + posv(p))
        }
        Algorithm::SeqGls => {
            potrf(n) + trsv(n) + m64 * (trsm(n, p) + syrk(n, p) + gemv(n, p) + posv(p))
        }
        Algorithm::HpGwas => {
            let mut total = potrf(n) + trsv(n);
            if l > 0 {
                total += trsm(n, l) + syrk(n, l) + gemv(n, l);
            }
            // The grouped panel whiten is linear in total columns, so the
            // block partition is irrelevant to the count.
            total += trsm(n, m * r);
            let mut per_problem = syrk(n, r) + gemv(n, r) + posv(p);
            if l > 0 {
                per_problem += gemm(n, r, l);
            }
            total + m64 * per_problem
        }
        Algorithm::Gwfgls => {
            let mut total = getri(n);
            if l > 0 {
                total += gemm(n, n, l);
            }
            let per_problem = (r as u64) * gemv(n, n) + gemm(n, p, p) + gemv(n, p) + gesv(p);
            total + m64 * per_problem
        }
    }
}
