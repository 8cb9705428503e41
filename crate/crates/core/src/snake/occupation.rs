use serde::{Deserialize, Serialize};

use super::record::{lattice_floor, ContourRecord, LocalTimeLedger};
use crate::error::{Result, SimError};
use crate::testfn::TestFunction;

/// Tips charged by ℓ^{n,t}, t = m/n, inside the window (τ^{n,a}_{r₁}, τ^{n,a}_{r₂}].
/// Each atom has mass 1/n.
#[derive(Clone, Debug)]
pub struct OccupationAccumulator {
    pub n: usize,
    pub dim: usize,
    /// Window in state indices, (lo, hi].
    pub window: (u64, u64),
    /// Per level: concatenated atom positions.
    pub atoms: Vec<Vec<f64>>,
}

impl OccupationAccumulator {
    pub fn build(record: &ContourRecord, ledger: &LocalTimeLedger, r1: f64, r2: f64, a: f64) -> Result<Self> {
        if !(r1 >= 0.0 && r1 < r2) {
            return Err(SimError::Domain(format!("window ({r1}, {r2}] invalid")));
        }
        let la = ledger.level_index(a)?;
        let lo = ledger.inverse_steps(la, r1).map_err(|e| SimError::Domain(e.to_string()))?;
        let hi = ledger.inverse_steps(la, r2).map_err(|e| SimError::Domain(e.to_string()))?;
        let d = record.dim;
        let mut atoms = vec![Vec::new(); record.top + 1];
        for (m, list) in atoms.iter_mut().enumerate().take(record.top).skip(la) {
            let ups = ledger.upcrossings(m);
            let start = ups.partition_point(|&i| i <= lo);
            let end = ups.partition_point(|&i| i <= hi);
            for &i in &ups[start..end] {
                list.extend_from_slice(record.tip(i as usize));
            }
            debug_assert!(list.len() % d == 0);
        }
        Ok(OccupationAccumulator { n: record.n, dim: d, window: (lo, hi), atoms })
    }

    pub fn levels(&self) -> usize {
        self.atoms.len()
    }

    /// X_{m/n}(φ).
    pub fn integrate(&self, m: usize, phi: &TestFunction) -> f64 {
        self.atoms[m].chunks_exact(self.dim).map(|x| phi.eval(x)).sum::<f64>() / self.n as f64
    }

    /// X_{m/n}(1).
    pub fn mass(&self, m: usize) -> f64 {
        (self.atoms[m].len() / self.dim) as f64 / self.n as f64
    }
}

/// ∫ φ(Ŵ_s) ℓ^{n,t}(ds) over s ∈ (τ^{n,a}_{r₁}, τ^{n,a}_{r₂}].
pub fn occupation_measure(
    record: &ContourRecord,
    ledger: &LocalTimeLedger,
    r1: f64,
    r2: f64,
    a: f64,
    t: f64,
    phi: &TestFunction,
) -> Result<f64> {
    if t < a {
        return Err(SimError::Domain(format!("t = {t} below a = {a}")));
    }
    let mt = ledger.level_index(t)?;
    let acc = OccupationAccumulator::build(record, ledger, r1, r2, a)?;
    Ok(acc.integrate(mt, phi))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationIdentity {
    /// (1/n) Σ_{m ≤ yn} ℓ^{n,m/n}_t.
    pub lhs: f64,
    /// n^{-2}·#{k < tn² : Y_k ≤ y}.
    pub rhs: f64,
    pub gap: f64,
}

/// Level-sum of local times against the occupation count of the contour.
pub fn occupation_identity_report(record: &ContourRecord, ledger: &LocalTimeLedger, t: f64, y: f64) -> OccupationIdentity {
    let n = record.n;
    let n2 = (n * n) as f64;
    let step = ((t * n2 + 1e-9).floor().max(0.0) as usize).min(record.steps());
    let ylev = lattice_floor(y, n).clamp(0, record.top as i64) as usize;
    let lhs = (0..=ylev).map(|m| ledger.count_by_step(m, step as u64) as f64).sum::<f64>() / n2;
    let rhs = (0..step).filter(|&k| record.level(k) <= ylev).count() as f64 / n2;
    OccupationIdentity { lhs, rhs, gap: (lhs - rhs).abs() }
}
