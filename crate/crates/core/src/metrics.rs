//! Classification metrics: confusion counts, support-weighted precision and
//! F1, rank-based binary AUC, pairwise one-vs-one AUC and label agreement.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::encoder::argmax;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    /// Row-major, `counts[i * k + j]` = true `i` predicted `j`.
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Per-class count of true labels.
    pub fn support(&self) -> Vec<u64> {
        (0..self.k).map(|i| (0..self.k).map(|j| self.get(i, j)).sum()).collect()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k.max(1)).map(<[u64]>::to_vec).collect()
    }
}

fn check_pair(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(alloc::format!("{} predictions", y_true.len()), y_pred.len()));
    }
    if let Some(&c) = y_true.iter().chain(y_pred).find(|&&c| c >= k) {
        return Err(Error::invalid(alloc::format!("label {c} outside 0..{k}")));
    }
    Ok(())
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    check_pair(y_true, y_pred, k)?;
    let mut counts = alloc::vec![0; k * k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        counts[t * k + p] += 1;
    }
    Ok(ConfusionMatrix { k, counts })
}

/// Fraction of exact matches. Undefined on empty input.
pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(alloc::format!("{} predictions", y_true.len()), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(Error::Degenerate("accuracy of zero samples".into()));
    }
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// Support-weighted precision and F1. Per-class precision, recall and F1
/// that divide by zero count as 0.
pub fn weighted_precision_f1(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<(f64, f64)> {
    let cm = confusion_matrix(y_true, y_pred, k)?;
    let n = cm.total();
    if n == 0 {
        return Err(Error::Degenerate("precision of zero samples".into()));
    }
    let support = cm.support();
    let (mut precision, mut f1) = (0.0, 0.0);
    for (c, &s) in support.iter().enumerate() {
        let tp = cm.get(c, c) as f64;
        let predicted: u64 = (0..k).map(|i| cm.get(i, c)).sum();
        let p = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
        let r = if s > 0 { tp / s as f64 } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let w = s as f64 / n as f64;
        precision += w * p;
        f1 += w * f;
    }
    Ok((precision, f1))
}

/// Mann–Whitney AUC with midranks for ties; `None` unless both classes are
/// present.
pub fn binary_auc(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(Error::shape(alloc::format!("{} labels", scores.len()), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&t| labels[t]).count() as f64;
        i = j + 1;
    }
    let (p, q) = (pos as f64, neg as f64);
    Ok(Some((rank_sum - p * (p + 1.0) / 2.0) / (p * q)))
}

/// One-vs-one AUC: for each pair of present classes `(i, j)`, the mean of
/// the AUC of column `i` separating `i` from `j` and of column `j`
/// separating `j` from `i`, averaged with weights `n_i + n_j`. `None` when
/// fewer than two classes are present.
pub fn auc_ovo_weighted<P: AsRef<[f64]>>(probs: &[P], y_true: &[usize]) -> Result<Option<f64>> {
    if probs.len() != y_true.len() {
        return Err(Error::shape(alloc::format!("{} labels", probs.len()), y_true.len()));
    }
    let Some(k) = probs.first().map(|p| p.as_ref().len()) else {
        return Ok(None);
    };
    if probs.iter().any(|p| p.as_ref().len() != k) {
        return Err(Error::invalid("probability rows differ in length"));
    }
    if let Some(&c) = y_true.iter().find(|&&c| c >= k) {
        return Err(Error::invalid(alloc::format!("label {c} outside 0..{k}")));
    }
    let mut counts = alloc::vec![0usize; k];
    for &c in y_true {
        counts[c] += 1;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for a in 0..k {
        for b in a + 1..k {
            if counts[a] == 0 || counts[b] == 0 {
                continue;
            }
            let idx: Vec<usize> = (0..y_true.len()).filter(|&t| y_true[t] == a || y_true[t] == b).collect();
            let side = |c: usize| -> Result<f64> {
                let s: Vec<f64> = idx.iter().map(|&t| probs[t].as_ref()[c]).collect();
                let l: Vec<bool> = idx.iter().map(|&t| y_true[t] == c).collect();
                Ok(binary_auc(&s, &l)?.expect("both classes present"))
            };
            let pair = (side(a)? + side(b)?) / 2.0;
            let w = (counts[a] + counts[b]) as f64;
            num += w * pair;
            den += w;
        }
    }
    Ok((den > 0.0).then(|| num / den))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub accuracy: f64,
    /// Rows are labels from the first source, columns from the second.
    pub confusion: ConfusionMatrix,
}

/// Exact-match rate between two labelings of the same items.
pub fn agreement(a: &[usize], b: &[usize], k: usize) -> Result<Agreement> {
    Ok(Agreement {
        accuracy: accuracy(a, b)?,
        confusion: confusion_matrix(a, b, k)?,
    })
}

/// Held-out metrics for one run of one method on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub method: String,
    /// `None` (serialized as `null`) when the held-out set has fewer than
    /// two classes.
    pub auc_ovo_weighted: Option<f64>,
    pub accuracy: f64,
    pub precision_weighted: f64,
    pub f1_weighted: f64,
    pub support: Vec<u64>,
}

impl EvalReport {
    /// Scores `N × K` class probabilities; predictions are row argmaxes.
    pub fn evaluate<P: AsRef<[f64]>>(
        task: &str,
        method: &str,
        probs: &[P],
        y_true: &[usize],
        k: usize,
    ) -> Result<EvalReport> {
        if probs.iter().any(|p| p.as_ref().len() != k) {
            return Err(Error::invalid(alloc::format!("probability rows must have {k} columns")));
        }
        let y_pred: Vec<usize> = probs.iter().map(|p| argmax(p.as_ref())).collect();
        let (precision_weighted, f1_weighted) = weighted_precision_f1(y_true, &y_pred, k)?;
        Ok(EvalReport {
            task: task.into(),
            method: method.into(),
            auc_ovo_weighted: auc_ovo_weighted(probs, y_true)?,
            accuracy: accuracy(y_true, &y_pred)?,
            precision_weighted,
            f1_weighted,
            support: confusion_matrix(y_true, &y_pred, k)?.support(),
        })
    }
}
