//! Evaluation metrics: AUC-ROC (Mann-Whitney form) and Harrell's
//! concordance index.

use crate::cell_data::TaskKind;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// AUC-ROC: the probability that a random positive outscores a random
/// negative, ties counting one half. Computed via midranks in O(m log m).
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let m_pos = labels.iter().filter(|&&l| l == 1).count();
    let m_neg = labels.len() - m_pos;
    if m_pos == 0 || m_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));

    // midranks over tie groups, 1-based
    let mut rank_sum_pos = 0.0f64;
    let mut p = 0;
    while p < order.len() {
        let mut q = p;
        while q < order.len() && scores[order[q]] == scores[order[p]] {
            q += 1;
        }
        let midrank = (p + 1 + q) as f64 / 2.0;
        for &idx in &order[p..q] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        p = q;
    }
    let u = rank_sum_pos - (m_pos * (m_pos + 1)) as f64 / 2.0;
    Ok(u / (m_pos as f64 * m_neg as f64))
}

/// Concordance details: value plus the pair counts behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CIndexDetail {
    pub value: f64,
    pub comparable_pairs: u64,
    pub tied_risk_pairs: u64,
    pub events: usize,
}

/// Harrell's C: over comparable pairs (Ti < Tj and subject i had the event),
/// count risk_i > risk_j as concordant, tied risks as half. Higher risk must
/// mean shorter survival. O(m log m) via a Fenwick tree over risk ranks.
pub fn c_index(risks: &[f64], times: &[f64], events: &[u8]) -> Result<f64> {
    Ok(c_index_detailed(risks, times, events)?.value)
}

pub fn c_index_detailed(risks: &[f64], times: &[f64], events: &[u8]) -> Result<CIndexDetail> {
    let m = risks.len();
    assert_eq!(m, times.len());
    assert_eq!(m, events.len());

    // compress risks to ranks
    let mut sorted_risks: Vec<f64> = risks.to_vec();
    sorted_risks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted_risks.dedup();
    let rank_of = |r: f64| sorted_risks.partition_point(|&x| x < r);

    // process in descending time order so the tree holds {j : T_j > T_i}
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| times[b].partial_cmp(&times[a]).unwrap().then(a.cmp(&b)));

    let mut tree = Fenwick::new(sorted_risks.len());
    let mut inserted = 0u64;
    let mut comparable = 0u64;
    let mut concordant = 0u64;
    let mut tied = 0u64;
    let mut p = 0;
    while p < m {
        let mut q = p;
        while q < m && times[order[q]] == times[order[p]] {
            q += 1;
        }
        // query the whole tie group against strictly later survivors
        for &i in &order[p..q] {
            if events[i] == 1 && inserted > 0 {
                let r = rank_of(risks[i]);
                let below = tree.prefix(r) as u64; // risk_j < risk_i
                let equal = tree.at(r) as u64;
                comparable += inserted;
                concordant += below;
                tied += equal;
            }
        }
        for &j in &order[p..q] {
            tree.add(rank_of(risks[j]), 1);
            inserted += 1;
        }
        p = q;
    }
    if comparable == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(CIndexDetail {
        value: (concordant as f64 + 0.5 * tied as f64) / comparable as f64,
        comparable_pairs: comparable,
        tied_risk_pairs: tied,
        events: events.iter().filter(|&&e| e == 1).count(),
    })
}

struct Fenwick {
    tree: Vec<u32>,
    counts: Vec<u32>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick { tree: vec![0; n + 1], counts: vec![0; n] }
    }

    fn add(&mut self, mut i: usize, delta: u32) {
        self.counts[i] += delta;
        i += 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of entries with rank strictly below `i`.
    fn prefix(&self, i: usize) -> u32 {
        let mut s = 0;
        let mut i = i;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    fn at(&self, i: usize) -> u32 {
        self.counts[i]
    }
}

/// Graph-level score used for metric computation: positive-class probability
/// for binary tasks, raw pooled risk for hazard tasks.
pub fn task_score(pooled: &[f64], kind: TaskKind) -> f64 {
    match kind {
        TaskKind::Binary => {
            let m = pooled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e0 = (pooled[0] - m).exp();
            let e1 = (pooled[1] - m).exp();
            e1 / (e0 + e1)
        }
        TaskKind::Hazard => pooled[0],
    }
}

// ── Reports ─────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub kind: TaskKind,
    pub metric: String,
    pub value: f64,
    pub scored_images: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positives: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negatives: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparable_pairs: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tied_risk_pairs: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    pub voronoi_mean: f64,
    pub celltype_mean: f64,
}

/// Evaluation output for one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub images: usize,
    pub tasks: BTreeMap<String, TaskReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention: Option<AttentionReport>,
}
