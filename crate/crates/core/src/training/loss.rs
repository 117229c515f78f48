//! Task losses: softmax cross-entropy on pooled logits and negative Cox
//! partial likelihood over a batch of pooled risk scores.

use crate::error::{Error, Result};

/// Softmax cross-entropy of a pooled logit vector against a class index.
/// Returns the loss and its gradient w.r.t. the logits (softmax − one-hot).
pub fn ce_loss(pooled_logits: &[f64], label: u8) -> (f64, Vec<f64>) {
    let c = pooled_logits.len();
    debug_assert!((label as usize) < c);
    let m = pooled_logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = pooled_logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() + m - pooled_logits[label as usize];
    let mut grad: Vec<f64> = exps.iter().map(|&e| e / z).collect();
    grad[label as usize] -= 1.0;
    (loss, grad)
}

/// Negative log Cox partial likelihood with Breslow handling of tied event
/// times: −Σ over events i of [rᵢ − log Σ_{j: Tⱼ ≥ Tᵢ} exp(rⱼ)].
///
/// Risk sets are taken within the given batch. Returns the loss and the
/// gradient w.r.t. each risk. Requires at least two subjects and one event.
pub fn cox_loss(risks: &[f64], times: &[f64], events: &[u8]) -> Result<(f64, Vec<f64>)> {
    let m = risks.len();
    if m != times.len() || m != events.len() {
        return Err(Error::DimMismatch {
            expected: format!("risks/times/events of equal length {m}"),
            got: format!("{}/{}/{}", risks.len(), times.len(), events.len()),
        });
    }
    if m < 2 {
        return Err(Error::InvalidConfig {
            reason: format!("cox partial likelihood needs at least 2 subjects, got {m}"),
        });
    }
    if events.iter().all(|&e| e == 0) {
        return Err(Error::NoEvents);
    }

    // ascending time, stable in original index for determinism
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap().then(a.cmp(&b)));

    let r_max = risks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp_r: Vec<f64> = risks.iter().map(|&r| (r - r_max).exp()).collect();

    // suffix sums of exp(r) in time order
    let mut suffix = vec![0.0f64; m + 1];
    for p in (0..m).rev() {
        suffix[p] = suffix[p + 1] + exp_r[order[p]];
    }
    // group start position for each sorted position (ties share risk sets)
    let mut group_start = vec![0usize; m];
    for p in 1..m {
        group_start[p] = if times[order[p]] == times[order[p - 1]] { group_start[p - 1] } else { p };
    }

    let mut loss = 0.0;
    for p in 0..m {
        let i = order[p];
        if events[i] == 1 {
            let s = suffix[group_start[p]];
            loss -= (risks[i] - r_max) - s.ln();
        }
    }

    // dL/dr_k = −event_k + exp(r_k) · Σ over events i with T_i ≤ T_k of 1/S_i
    let mut grad = vec![0.0f64; m];
    let mut inv_s_cum = 0.0;
    let mut p = 0;
    while p < m {
        let start = p;
        let mut end = p;
        while end < m && group_start[end] == start {
            end += 1;
        }
        let s = suffix[start];
        let events_in_group =
            (start..end).filter(|&q| events[order[q]] == 1).count() as f64;
        inv_s_cum += events_in_group / s;
        for q in start..end {
            let k = order[q];
            grad[k] = exp_r[k] * inv_s_cum - f64::from(events[k]);
        }
        p = end;
    }
    Ok((loss, grad))
}

/// Weighted sum of per-task losses. Tasks absent from the batch contribute
/// nothing; an empty list means the batch had no usable labels at all.
pub fn multitask_loss(losses: &[f64], weights: &[f64]) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::NoValidLabels);
    }
    debug_assert_eq!(losses.len(), weights.len());
    Ok(losses.iter().zip(weights).map(|(l, w)| l * w).sum())
}
