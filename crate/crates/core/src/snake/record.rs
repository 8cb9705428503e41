use std::io::Write;

use crate::error::{Result, SimError};

/// Level and tip after every step of a run; state 0 is the root at level 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ContourRecord {
    pub n: usize,
    pub top: usize,
    pub dim: usize,
    pub levels: Vec<u32>,
    /// `dim` coordinates per state.
    pub tips: Vec<f64>,
}

impl ContourRecord {
    pub fn new(n: usize, top: usize, root: &[f64]) -> Self {
        ContourRecord { n, top, dim: root.len(), levels: vec![0], tips: root.to_vec() }
    }

    pub fn push(&mut self, level: usize, tip: &[f64]) {
        self.levels.push(level as u32);
        self.tips.extend_from_slice(tip);
    }

    /// Number of steps (states − 1).
    pub fn steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, i: usize) -> usize {
        self.levels[i] as usize
    }

    pub fn tip(&self, i: usize) -> &[f64] {
        &self.tips[i * self.dim..(i + 1) * self.dim]
    }

    /// Whether step i → i+1 was a forced reflection.
    pub fn forced(&self, i: usize) -> bool {
        let l = self.level(i);
        l == 0 || l == self.top
    }

    pub fn up(&self, i: usize) -> bool {
        self.levels[i + 1] > self.levels[i]
    }

    pub fn max_level(&self) -> usize {
        self.levels.iter().copied().max().unwrap_or(0) as usize
    }

    /// Lattice path of the snake at state i: age j holds the tip at the last
    /// state ≤ i with level j. Scans back to the most recent root visit.
    pub fn path_at(&self, i: usize) -> Vec<f64> {
        let d = self.dim;
        let m = self.level(i);
        let mut path = vec![f64::NAN; (m + 1) * d];
        let mut need = m as isize;
        let mut k = i;
        loop {
            let l = self.level(k) as isize;
            if l == need {
                let j = l as usize;
                path[j * d..(j + 1) * d].copy_from_slice(self.tip(k));
                need -= 1;
                if need < 0 {
                    break;
                }
            }
            if k == 0 {
                break;
            }
            k -= 1;
        }
        path
    }

    /// Structural invariants: ±1 steps, reflection at 0 and top, levels in range.
    pub fn check_invariants(&self) -> Result<()> {
        if self.levels.first() != Some(&0) {
            return Err(SimError::Precondition("record must start at level 0".into()));
        }
        if self.tips.len() != self.levels.len() * self.dim {
            return Err(SimError::Precondition("tip array length mismatch".into()));
        }
        for i in 0..self.steps() {
            let (a, b) = (self.levels[i] as i64, self.levels[i + 1] as i64);
            if (a - b).abs() != 1 {
                return Err(SimError::Precondition(format!("step {i}: level {a} -> {b}")));
            }
            if a == 0 && b != 1 {
                return Err(SimError::Precondition(format!("step {i}: not reflected at 0")));
            }
            if a as usize == self.top && b as usize != self.top - 1 {
                return Err(SimError::Precondition(format!("step {i}: not reflected at top")));
            }
            if b as usize > self.top {
                return Err(SimError::Precondition(format!("step {i}: level above top")));
            }
        }
        Ok(())
    }

    /// CSV with columns step, level, x0[, x1, x2].
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["step".to_string(), "level".to_string()];
        header.extend((0..self.dim).map(|i| format!("x{i}")));
        out.write_record(&header)?;
        for i in 0..self.levels.len() {
            let mut row = vec![i.to_string(), self.levels[i].to_string()];
            row.extend(self.tip(i).iter().map(|v| format!("{v:e}")));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Per level m < top, the states i with level m at which the step i → i+1 is
/// an upcrossing m → m+1, in increasing order.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalTimeLedger {
    pub n: usize,
    pub top: usize,
    up: Vec<Vec<u64>>,
    /// Index of the final state when its (forced) upcrossing from 0 was recorded
    /// although the step was not taken.
    pub pending_terminal: Option<u64>,
}

/// ⌊x·n⌋ with a tolerance for decimal inputs such as 0.3·10.
pub(crate) fn lattice_floor(x: f64, n: usize) -> i64 {
    (x * n as f64 + 1e-9).floor() as i64
}

impl LocalTimeLedger {
    pub fn new(n: usize, top: usize) -> Self {
        LocalTimeLedger { n, top, up: vec![Vec::new(); top.max(1)], pending_terminal: None }
    }

    /// Rebuilds the ledger of a record; a record ending at level 0 may carry the
    /// pending upcrossing from its last state.
    pub fn from_record(record: &ContourRecord, pending_terminal: bool) -> Self {
        let mut l = LocalTimeLedger::new(record.n, record.top);
        for i in 0..record.steps() {
            if record.up(i) {
                l.record_upcrossing(record.level(i), i as u64);
            }
        }
        let last = record.steps();
        if pending_terminal && record.level(last) == 0 {
            l.record_upcrossing(0, last as u64);
            l.pending_terminal = Some(last as u64);
        }
        l
    }

    pub fn record_upcrossing(&mut self, level: usize, state: u64) {
        self.up[level].push(state);
    }

    pub fn upcrossings(&self, level: usize) -> &[u64] {
        if level < self.up.len() && level < self.top {
            &self.up[level]
        } else {
            &[]
        }
    }

    pub fn levels(&self) -> usize {
        self.top
    }

    /// ⌊a n⌋ as a level index.
    pub fn level_index(&self, a: f64) -> Result<usize> {
        let m = lattice_floor(a, self.n);
        if a < 0.0 || m < 0 || m as usize > self.top {
            return Err(SimError::Domain(format!("level {a} outside [0, K1]")));
        }
        Ok(m as usize)
    }

    /// #{upcrossings of `level` starting at a state ≤ `step`}.
    pub fn count_by_step(&self, level: usize, step: u64) -> usize {
        self.upcrossings(level).partition_point(|&i| i <= step)
    }

    /// ℓ at lattice level m after the first k steps have been taken.
    pub fn local_time_after_steps(&self, level: usize, k: u64) -> f64 {
        let c = if k == 0 { 0 } else { self.count_by_step(level, k - 1) };
        c as f64 / self.n as f64
    }

    /// State index of the inverse local time τ_r at lattice level m: the start of
    /// the (⌊rn⌋+1)-th upcrossing.
    pub fn inverse_steps(&self, level: usize, r: f64) -> Result<u64> {
        if r < 0.0 {
            return Err(SimError::Domain(format!("negative mass {r}")));
        }
        let need = lattice_floor(r, self.n) as usize;
        let list = self.upcrossings(level);
        list.get(need).copied().ok_or(SimError::NotReached { level, needed: need + 1, found: list.len() })
    }

    /// Total upcrossings per level.
    pub fn totals(&self) -> Vec<usize> {
        (0..self.top).map(|m| self.up[m].len()).collect()
    }

    /// CSV with columns level, count, indices (semicolon separated).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["level", "count", "indices"])?;
        for (m, list) in self.up.iter().enumerate().take(self.top) {
            let idx: Vec<String> = list.iter().map(|i| i.to_string()).collect();
            out.write_record([m.to_string(), list.len().to_string(), idx.join(";")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// ℓ^{n,a}_s = (1/n)·#{upcrossings of level ⌊an⌋ starting at a state ≤ ⌊sn²⌋}.
pub fn local_time(ledger: &LocalTimeLedger, a: f64, s: f64) -> Result<f64> {
    let m = ledger.level_index(a)?;
    if s < 0.0 {
        return Ok(0.0);
    }
    let step = (s * (ledger.n * ledger.n) as f64 + 1e-9).floor() as u64;
    Ok(ledger.count_by_step(m, step) as f64 / ledger.n as f64)
}

/// τ^{n,a}_r = (1/n²)·inf{k : ℓ^{n,a}_{k/n²} > r}.
pub fn inverse_local_time(ledger: &LocalTimeLedger, a: f64, r: f64) -> Result<f64> {
    let m = ledger.level_index(a)?;
    Ok(ledger.inverse_steps(m, r)? as f64 / (ledger.n * ledger.n) as f64)
}
