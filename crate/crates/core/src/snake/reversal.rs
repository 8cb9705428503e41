use super::record::ContourRecord;
use crate::error::{Result, SimError};

fn check_closed(record: &ContourRecord) -> Result<()> {
    if record.levels.first() != Some(&0) || record.levels.last() != Some(&0) {
        return Err(SimError::Precondition("record must start and end at level 0".into()));
    }
    Ok(())
}

/// State permutation of T_z: inside every maximal stretch where the level
/// stays ≥ z, the excursions above z are laid out in reverse order, each
/// keeping its own internal order.
pub fn reversal_permutation(record: &ContourRecord, z: usize) -> Vec<usize> {
    let len = record.levels.len();
    let mut perm = Vec::with_capacity(len);
    let mut i = 0;
    while i < len {
        if record.level(i) < z {
            perm.push(i);
            i += 1;
            continue;
        }
        let start = i;
        while i < len && record.level(i) >= z {
            i += 1;
        }
        let end = i; // exclusive
        let visits: Vec<usize> = (start..end).filter(|&k| record.level(k) == z).collect();
        let m = visits.len();
        perm.push(visits[0]);
        for j in 0..m - 1 {
            // excursion between visits[m-2-j] and visits[m-1-j]
            let (a, b) = (visits[m - 2 - j], visits[m - 1 - j]);
            perm.extend(a + 1..b);
            perm.push(visits[j + 1]);
        }
        // a stretch can only end without returning to z at the end of the record
        perm.extend(visits[m - 1] + 1..end);
    }
    perm
}

fn apply(record: &ContourRecord, perm: &[usize]) -> ContourRecord {
    let d = record.dim;
    let mut out = ContourRecord {
        n: record.n,
        top: record.top,
        dim: d,
        levels: Vec::with_capacity(perm.len()),
        tips: Vec::with_capacity(record.tips.len()),
    };
    for &p in perm {
        out.levels.push(record.levels[p]);
        out.tips.extend_from_slice(record.tip(p));
    }
    out
}

/// T_z applied to a record that starts and ends at level 0.
pub fn reverse_transform(record: &ContourRecord, z: usize) -> Result<ContourRecord> {
    check_closed(record)?;
    Ok(apply(record, &reversal_permutation(record, z)))
}

/// T_{top−1} ∘ … ∘ T_0; its contour is the time reversal of the input contour.
pub fn full_reversal(record: &ContourRecord) -> Result<ContourRecord> {
    check_closed(record)?;
    let mut cur = record.clone();
    for z in 0..record.top {
        cur = apply(&cur, &reversal_permutation(&cur, z));
    }
    Ok(cur)
}

/// Scalar summaries compared between raw and transformed ensembles.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ContourStatistics {
    pub sup_level: f64,
    /// Steps between the first two returns to level 0.
    pub first_zero_spacing: f64,
    pub tau: f64,
    /// Length of the first excursion above level z (0 if z is never reached).
    pub first_excursion_above: f64,
}

impl ContourStatistics {
    pub fn of(record: &ContourRecord, z: usize) -> Self {
        let zeros: Vec<usize> = (0..record.levels.len()).filter(|&i| record.level(i) == 0).collect();
        let first_zero_spacing = if zeros.len() >= 2 { (zeros[1] - zeros[0]) as f64 } else { 0.0 };
        let len = record.levels.len();
        let first_excursion_above = (0..len.saturating_sub(1))
            .find(|&i| record.level(i) == z && record.level(i + 1) > z)
            .and_then(|s| (s + 1..len).find(|&i| record.level(i) == z).map(|e| (e - s) as f64))
            .unwrap_or(0.0);
        ContourStatistics {
            sup_level: record.max_level() as f64,
            first_zero_spacing,
            tau: record.steps() as f64,
            first_excursion_above,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.sup_level, self.first_zero_spacing, self.tau, self.first_excursion_above]
    }

    pub const NAMES: [&'static str; 4] = ["sup_level", "first_zero_spacing", "tau", "first_excursion_above"];
}
