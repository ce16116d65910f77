use std::cmp::Ordering;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eer {
    /// Equal error rate in `[0, 1]`.
    pub eer: f64,
    pub threshold: f64,
}

/// Equal error rate by threshold sweep.
///
/// A trial is accepted when its score is `>= threshold`. Operating points are
/// taken at every distinct score and at `+inf`; the EER is the point where
/// the linear interpolation between the two operating points bracketing
/// `FRR − FAR = 0` crosses zero.
pub fn compute_eer(targets: &[f64], nontargets: &[f64]) -> Result<Eer> {
    if targets.is_empty() || nontargets.is_empty() {
        return Err(Error::InvalidArgument("EER needs target and nontarget scores".into()));
    }
    if targets.iter().chain(nontargets).any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let mut all: Vec<(f64, bool)> = targets
        .iter()
        .map(|&s| (s, true))
        .chain(nontargets.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));

    let nt = targets.len() as f64;
    let nn = nontargets.len() as f64;
    // Threshold at the lowest score: everything accepted.
    let mut rejected_t = 0usize;
    let mut rejected_n = 0usize;
    let mut prev = (all[0].0, 1.0, 0.0); // (threshold, far, frr)
    let mut i = 0;
    loop {
        // Advance past every score equal to the current threshold.
        let thr = prev.0;
        while i < all.len() && all[i].0 == thr {
            if all[i].1 {
                rejected_t += 1;
            } else {
                rejected_n += 1;
            }
            i += 1;
        }
        let next_thr = if i < all.len() { all[i].0 } else { f64::INFINITY };
        let next = (next_thr, 1.0 - rejected_n as f64 / nn, rejected_t as f64 / nt);
        let d0 = prev.2 - prev.1;
        let d1 = next.2 - next.1;
        if d0 >= 0.0 {
            return Ok(Eer { eer: prev.1, threshold: prev.0 });
        }
        if d1 >= 0.0 {
            let a = d0 / (d0 - d1);
            let eer = prev.1 + a * (next.1 - prev.1);
            let threshold = if next.0.is_finite() { prev.0 + a * (next.0 - prev.0) } else { prev.0 };
            return Ok(Eer { eer, threshold });
        }
        prev = next;
    }
}
