use super::record::{lattice_floor, ContourRecord, LocalTimeLedger};

fn setup(record: &ContourRecord, a: f64, delta: f64, eta: f64) -> Option<(usize, usize, f64)> {
    let ai = lattice_floor(a, record.n);
    let li = lattice_floor(a + delta, record.n);
    if ai < 0 || li < ai || li as usize >= record.top {
        return None;
    }
    Some((ai as usize, li as usize, delta.powf(0.5 - eta)))
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Number of upcrossings of level ⌊(a+δ)n⌋ whose tip lies farther than
/// δ^{1/2−η} from the same path's point at age ⌊an⌋/n. One forward pass that
/// keeps the current lattice path.
pub fn displacement_count(record: &ContourRecord, ledger: &LocalTimeLedger, a: f64, delta: f64, eta: f64) -> usize {
    let Some((ai, li, thr)) = setup(record, a, delta, eta) else { return 0 };
    let ups = ledger.upcrossings(li);
    if ups.is_empty() {
        return 0;
    }
    let d = record.dim;
    let mut path = vec![0.0; (record.top + 1) * d];
    let mut next = 0;
    let mut count = 0;
    for i in 0..record.levels.len() {
        let l = record.level(i);
        path[l * d..(l + 1) * d].copy_from_slice(record.tip(i));
        while next < ups.len() && ups[next] as usize == i {
            if dist(record.tip(i), &path[ai * d..(ai + 1) * d]) > thr {
                count += 1;
            }
            next += 1;
        }
        if next == ups.len() {
            break;
        }
    }
    count
}

/// Same count, reconstructing each path independently by backward replay.
pub fn displacement_count_bruteforce(
    record: &ContourRecord,
    ledger: &LocalTimeLedger,
    a: f64,
    delta: f64,
    eta: f64,
) -> usize {
    let Some((ai, li, thr)) = setup(record, a, delta, eta) else { return 0 };
    let d = record.dim;
    ledger
        .upcrossings(li)
        .iter()
        .filter(|&&i| {
            let p = record.path_at(i as usize);
            dist(&p[li * d..(li + 1) * d], &p[ai * d..(ai + 1) * d]) > thr
        })
        .count()
}
