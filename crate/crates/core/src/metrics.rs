//! Ranking and classification metrics: pooled AUC and precision, recall and
//! F at a cutoff K.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{probability, ScaaModel};

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs the scores
/// order correctly, counting ties as one half.
///
/// Sort-based, `O(n log n)`; tied scores share their average rank.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("auc", (scores.len(), 1), (labels.len(), 1)));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "auc needs both positive and negative labels",
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::numeric("auc", "NaN score"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of 1-based ranks of the positives, ties averaged.
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let avg_rank = (start + end + 1) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&k| labels[k]).count();
        pos_rank_sum += avg_rank * pos_in_group as f64;
        start = end;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// One scored candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub item: usize,
    pub probability: f64,
    pub relevant: bool,
}

/// Candidates in descending probability, ties broken by ascending item id.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    entries: Vec<Scored>,
}

impl RankedList {
    pub fn new(mut entries: Vec<Scored>) -> Self {
        entries.sort_by(|a, b| match b.probability.total_cmp(&a.probability) {
            Ordering::Equal => a.item.cmp(&b.item),
            o => o,
        });
        RankedList { entries }
    }

    pub fn entries(&self) -> &[Scored] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_relevant(&self) -> usize {
        self.entries.iter().filter(|e| e.relevant).count()
    }

    pub fn relevant_in_top(&self, k: usize) -> usize {
        self.entries.iter().take(k).filter(|e| e.relevant).count()
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::Domain {
            op: "precision/recall",
            msg: "k must be at least 1".into(),
        })
    } else {
        Ok(())
    }
}

/// Hits in the top `k' = min(k, len)` divided by `k'`.
pub fn precision_at_k(rl: &RankedList, k: usize) -> Result<f64> {
    check_k(k)?;
    let kk = k.min(rl.len());
    if kk == 0 {
        return Err(Error::UndefinedMetric("precision of an empty list"));
    }
    Ok(rl.relevant_in_top(kk) as f64 / kk as f64)
}

/// Hits in the top `k` divided by `k`, however short the list is.
pub fn precision_at_k_fixed(rl: &RankedList, k: usize) -> Result<f64> {
    check_k(k)?;
    Ok(rl.relevant_in_top(k) as f64 / k as f64)
}

pub fn recall_at_k(rl: &RankedList, k: usize) -> Result<f64> {
    check_k(k)?;
    let total = rl.total_relevant();
    if total == 0 {
        return Err(Error::UndefinedMetric("recall without relevant items"));
    }
    Ok(rl.relevant_in_top(k) as f64 / total as f64)
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn f_at_k(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Metric options.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub k: usize,
    /// Average per-user AUC instead of pooling every pair.
    pub per_user_auc: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            k: 50,
            per_user_auc: false,
        }
    }
}

/// One user's test candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct UserScores {
    pub user: usize,
    pub candidates: Vec<Scored>,
}

/// Metrics of one model on one test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub auc: f64,
    pub recall: f64,
    /// Precision with the truncated denominator `min(k, candidates)`.
    pub precision: f64,
    /// Harmonic mean of `precision` and `recall`.
    pub f: f64,
    /// Precision with the fixed denominator `k`.
    pub precision_fixed: f64,
    pub f_fixed: f64,
    /// Users contributing to the precision/recall averages.
    pub ranked_users: usize,
    pub scored_pairs: usize,
}

/// Pooled (or per-user) AUC over every candidate, and P/R/F at `k`
/// macro-averaged over users with at least one relevant candidate. F is the
/// harmonic mean of the averaged precision and recall.
pub fn evaluate_scores(name: &str, users: &[UserScores], opts: EvalOptions) -> Result<MetricRow> {
    check_k(opts.k)?;
    let users: Vec<&UserScores> = users.iter().filter(|u| !u.candidates.is_empty()).collect();
    if users.is_empty() {
        return Err(Error::UndefinedMetric("no user has test candidates"));
    }

    let auc_value = if opts.per_user_auc {
        let per_user: Vec<f64> = users
            .iter()
            .filter_map(|u| {
                let s: Vec<f64> = u.candidates.iter().map(|c| c.probability).collect();
                let l: Vec<bool> = u.candidates.iter().map(|c| c.relevant).collect();
                auc(&s, &l).ok()
            })
            .collect();
        if per_user.is_empty() {
            return Err(Error::UndefinedMetric("no user has both labels"));
        }
        per_user.iter().sum::<f64>() / per_user.len() as f64
    } else {
        let s: Vec<f64> = users
            .iter()
            .flat_map(|u| u.candidates.iter().map(|c| c.probability))
            .collect();
        let l: Vec<bool> = users
            .iter()
            .flat_map(|u| u.candidates.iter().map(|c| c.relevant))
            .collect();
        auc(&s, &l)?
    };

    let (mut p_sum, mut pf_sum, mut r_sum, mut count) = (0.0, 0.0, 0.0, 0usize);
    for u in &users {
        let rl = RankedList::new(u.candidates.clone());
        if rl.total_relevant() == 0 {
            continue;
        }
        p_sum += precision_at_k(&rl, opts.k)?;
        pf_sum += precision_at_k_fixed(&rl, opts.k)?;
        r_sum += recall_at_k(&rl, opts.k)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::UndefinedMetric("no user has a relevant test item"));
    }
    let n = count as f64;
    let (precision, precision_fixed, recall) = (p_sum / n, pf_sum / n, r_sum / n);
    Ok(MetricRow {
        name: name.to_string(),
        auc: auc_value,
        recall,
        precision,
        f: f_at_k(precision, recall),
        precision_fixed,
        f_fixed: f_at_k(precision_fixed, recall),
        ranked_users: count,
        scored_pairs: users.iter().map(|u| u.candidates.len()).sum(),
    })
}

/// Scores every test record of every user with histories built from
/// `train`, grouped per user in user-index order. Both splits must share one
/// item vocabulary, as the halves of a split do.
pub fn score_test_split(
    model: &ScaaModel,
    train: &Dataset,
    test: &Dataset,
) -> Result<Vec<UserScores>> {
    if !train.item_ids().eq(test.item_ids()) {
        return Err(Error::Contract(
            "train and test item vocabularies differ".into(),
        ));
    }
    let histories = train.histories();
    let mut per_user: Vec<Vec<(usize, bool)>> = vec![Vec::new(); test.user_count()];
    for (u, i, r) in test.encoded() {
        per_user[u].push((i, r.label()));
    }
    per_user
        .into_par_iter()
        .enumerate()
        .filter(|(_, cands)| !cands.is_empty())
        .map(|(user, cands)| {
            let history = test
                .user_id_at(user)
                .and_then(|id| train.user_index(id))
                .map(|k| histories[k].clone())
                .unwrap_or_default();
            let items: Vec<usize> = cands.iter().map(|c| c.0).collect();
            let logits = model.score_many(&history, &items)?;
            Ok(UserScores {
                user,
                candidates: cands
                    .iter()
                    .zip(logits)
                    .map(|(&(item, relevant), logit)| Scored {
                        item,
                        probability: probability(logit),
                        relevant,
                    })
                    .collect(),
            })
        })
        .collect()
}

/// Scores the test split and computes one metric row.
pub fn evaluate_all(
    name: &str,
    model: &ScaaModel,
    train: &Dataset,
    test: &Dataset,
    opts: EvalOptions,
) -> Result<MetricRow> {
    if test.is_empty() {
        return Err(Error::Contract("test split is empty".into()));
    }
    let users = score_test_split(model, train, test)?;
    evaluate_scores(name, &users, opts)
}

/// Rows for several models on the same test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub rows: Vec<MetricRow>,
}

impl EvalReport {
    pub fn row(&self, name: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width table: one row per model, columns AUC, R@k, P@k, F@k,
    /// values to three decimals. When any fixed-denominator precision
    /// differs from the truncated one, extra columns show it.
    pub fn to_table(&self) -> String {
        let k = self.k;
        let show_fixed = self
            .rows
            .iter()
            .any(|r| format!("{:.3}", r.precision) != format!("{:.3}", r.precision_fixed));
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(0)
            .max(7);
        let mut out = String::new();
        let _ = write!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}",
            "Methods",
            "AUC",
            format!("R@{k}"),
            format!("P@{k}"),
            format!("F@{k}"),
        );
        if show_fixed {
            let _ = write!(
                out,
                "  {:>8}  {:>8}",
                format!("P@{k}/k"),
                format!("F@{k}/k")
            );
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{:<width$}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}",
                r.name, r.auc, r.recall, r.precision, r.f
            );
            if show_fixed {
                let _ = write!(out, "  {:>8.3}  {:>8.3}", r.precision_fixed, r.f_fixed);
            }
            out.push('\n');
        }
        out
    }
}

/// `new / old - 1`.
pub fn relative_improvement(new: f64, old: f64) -> f64 {
    new / old - 1.0
}
