//! Engine results against the full-domain reference, and Maxwell-matrix
//! sanity checks on a single row.

use serde::{Deserialize, Serialize};

use frwcap_core::engine::{CapacitanceResult, Terminal};
use frwcap_core::oracle::ReferenceSolution;
use frwcap_core::{Error, Result};

/// `sum |C - C_ref| / sum |C_ref|`.
pub fn err_avg(pairs: &[(f64, f64)]) -> f64 {
    let num: f64 = pairs.iter().map(|(c, r)| (c - r).abs()).sum();
    let den: f64 = pairs.iter().map(|(_, r)| r.abs()).sum();
    num / den
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryComparison {
    pub id: u32,
    pub value: f64,
    pub std_err: f64,
    pub reference: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub entries: Vec<EntryComparison>,
    pub err_avg: f64,
    pub max_err: f64,
    pub passed: bool,
}

/// Compare every conductor entry of the master row; ground has no
/// counterpart in the reference matrix.
pub fn compare_row(r: &CapacitanceResult, reference: &ReferenceSolution, max_err: f64) -> Result<OracleComparison> {
    let row = reference
        .row(r.master)
        .ok_or_else(|| Error::Validation(format!("reference lacks conductor {}", r.master)))?;
    let mut entries = Vec::new();
    for (id, c_ref) in row {
        let e = r
            .entry(Terminal::Conductor(id))
            .ok_or_else(|| Error::Validation(format!("result lacks conductor {id}")))?;
        entries.push(EntryComparison {
            id,
            value: e.value,
            std_err: e.std_err,
            reference: c_ref,
            rel_err: (e.value - c_ref).abs() / c_ref.abs(),
        });
    }
    let err = err_avg(&entries.iter().map(|e| (e.value, e.reference)).collect::<Vec<_>>());
    Ok(OracleComparison { entries, err_avg: err, max_err, passed: err <= max_err })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxwellCheck {
    pub self_positive: bool,
    /// Largest `C_ik / std_err` over couplings; positive values are violations.
    pub worst_coupling_sigma: f64,
    /// `(C_ii - sum |C_ik|) / combined std_err`, ground included.
    pub dominance_sigma: f64,
    pub passed: bool,
}

/// Sign pattern and diagonal dominance of one extracted row, each judged
/// within `k` standard errors.
pub fn maxwell_check(r: &CapacitanceResult, k: f64) -> MaxwellCheck {
    let own = r.self_capacitance();
    let mut worst = f64::NEG_INFINITY;
    let mut off_sum = 0.0;
    let mut var = own.std_err * own.std_err;
    for e in r.entries.iter().filter(|e| e.terminal != Terminal::Conductor(r.master)) {
        worst = worst.max(e.value / e.std_err.max(f64::MIN_POSITIVE));
        off_sum += e.value.abs();
        var += e.std_err * e.std_err;
    }
    let dominance_sigma = (own.value - off_sum) / var.sqrt().max(f64::MIN_POSITIVE);
    let self_positive = own.value > 0.0;
    MaxwellCheck {
        self_positive,
        worst_coupling_sigma: worst,
        dominance_sigma,
        passed: self_positive && worst <= k && dominance_sigma >= -k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn err_avg_weights_by_reference_magnitude() {
        assert!((err_avg(&[(1.1, 1.0), (-0.9, -1.0)]) - 0.1).abs() < 1e-15);
        assert!((err_avg(&[(2.0, 1.0), (-3.0, -3.0)]) - 0.25).abs() < 1e-15);
    }
}
