use crate::feeder::FeasibleSet;
use crate::scalar::Scalar;

/// Euclidean projection of `(p, q)` onto a device's feasible set.
///
/// Disk sets are the intersection of a vertical strip `a ≤ p ≤ b` and a
/// disk of radius `s`. The projection is the strip clamp if that lands in
/// the disk, else the radial disk projection if that lands in the strip,
/// else the nearer of the arc endpoints on `p = a` or `p = b`; equidistant
/// endpoints resolve to the larger `q`.
pub fn project_feasible<T: Scalar>(set: &FeasibleSet<T>, p: T, q: T) -> (T, T) {
    match *set {
        FeasibleSet::Box { p_min, p_max, q_min, q_max } => (p.max(p_min).min(p_max), q.max(q_min).min(q_max)),
        FeasibleSet::PvInverter { .. } | FeasibleSet::Storage { .. } => {
            let (a, b, s) = set.p_interval_and_radius();
            let s = s.expect("disk sets carry a radius");
            project_strip_disk(a, b, s, p, q)
        }
    }
}

fn project_strip_disk<T: Scalar>(a: T, b: T, s: T, p: T, q: T) -> (T, T) {
    let pc = p.max(a).min(b);
    if pc * pc + q * q <= s * s {
        return (pc, q);
    }
    let norm = (p * p + q * q).sqrt();
    if norm > T::zero() {
        let (pr, qr) = (p * s / norm, q * s / norm);
        if pr >= a && pr <= b {
            return (pr, qr);
        }
    }
    let mut best: Option<(T, T, T)> = None;
    for edge in [a, b] {
        if edge.abs() > s {
            continue;
        }
        let h = (s * s - edge * edge).max(T::zero()).sqrt();
        for qc in [h, -h] {
            let d = (edge - p) * (edge - p) + (qc - q) * (qc - q);
            let better = match best {
                None => true,
                Some((bd, _, bq)) => d < bd || (d == bd && qc > bq),
            };
            if better {
                best = Some((d, edge, qc));
            }
        }
    }
    let (_, pe, qe) = best.expect("strip and disk intersect for a validated set");
    (pe, qe)
}
