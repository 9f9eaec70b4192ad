//! Independent oracles and generators shared by the property and
//! acceptance suites.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soc_core::data::{split_train_test, Dataset, InteractionRecord};
use soc_core::metrics::{EvalOptions, MetricRow};
use soc_core::model::probability;
use soc_core::soc::{ProjectionTriple, SocParams};
use soc_core::{Matrix, ScaaModel, SocVariant, UserHistory};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Matrix::new(rows, cols, data).unwrap()
}

pub fn random_triple(rng: &mut impl Rng, d: usize) -> ProjectionTriple {
    ProjectionTriple::new(
        random_matrix(rng, d, d, 1.0),
        random_matrix(rng, d, d, 1.0),
        random_matrix(rng, d, d, 1.0),
    )
    .unwrap()
}

pub fn random_params(rng: &mut impl Rng, d: usize) -> SocParams {
    SocParams::new(
        random_triple(rng, d),
        random_triple(rng, d),
        random_triple(rng, d),
        random_triple(rng, d),
    )
    .unwrap()
}

pub fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    m.gather_rows(perm).unwrap()
}

pub fn shuffled(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.random_range(0..=i));
    }
    p
}

/// Row sums of `softmax(x)` computed by the library.
pub fn softmax_row_sum_error(x: &Matrix) -> f64 {
    let s = x.row_softmax().unwrap();
    (0..s.rows())
        .map(|r| (s.row(r).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Mean of every row of `l` and `f` stacked, by direct summation.
pub fn concatenated_mean(l: &Matrix, f: &Matrix) -> Vec<f64> {
    let d = l.cols();
    let n = (l.rows() + f.rows()) as f64;
    let mut out = vec![0.0; d];
    for m in [l, f] {
        for r in 0..m.rows() {
            for (o, x) in out.iter_mut().zip(m.row(r)) {
                *o += x;
            }
        }
    }
    out.iter().map(|x| x / n).collect()
}

pub fn params_with_zero_co_values(mut p: SocParams) -> SocParams {
    let d = p.co_like.w_v.rows();
    p.co_like.w_v = Matrix::zeros(d, d);
    p.co_follow.w_v = Matrix::zeros(d, d);
    p
}

pub const VARIANTS: [SocVariant; 3] = SocVariant::ALL;

/// Fraction of (positive, negative) pairs ordered correctly, ties one half,
/// by enumerating every pair.
pub fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            match scores[i].partial_cmp(&scores[j]).unwrap() {
                Ordering::Greater => num += 1.0,
                Ordering::Equal => num += 0.5,
                Ordering::Less => {}
            }
        }
    }
    num / pairs
}

/// Small random interaction log: `users` users, ids from small alphabets,
/// timestamps from a narrow range so ties occur.
pub fn random_corpus(rng: &mut impl Rng, users: usize, items: usize, per_user: usize) -> Dataset {
    let mut records = Vec::new();
    for u in 0..users {
        let count = rng.random_range(1..=per_user);
        for _ in 0..count {
            let click = rng.random_bool(0.5);
            records.push(InteractionRecord {
                user_id: format!("user{u}"),
                item_id: format!("item{}", rng.random_range(0..items)),
                click,
                like: click && rng.random_bool(0.5),
                follow: click && rng.random_bool(0.3),
                timestamp: rng.random_range(0..20),
            });
        }
    }
    // Interleave users so file order is not grouped.
    let perm = shuffled(rng, records.len());
    Dataset::from_records(perm.into_iter().map(|k| records[k].clone()).collect())
}

/// Straight-line reference for `evaluate_all`: histories, scoring, pooled
/// AUC by pair enumeration, and per-user truncated P/R at `k` written out
/// by hand.
pub fn oracle_evaluate(
    name: &str,
    model: &ScaaModel,
    ds: &Dataset,
    ratio: f64,
    k: usize,
) -> Option<MetricRow> {
    let (train, test) = split_train_test(ds, ratio).unwrap();

    // Histories: per user, train records sorted by timestamp (stable).
    let mut by_user: HashMap<&str, Vec<&InteractionRecord>> = HashMap::new();
    for r in train.records() {
        by_user.entry(&r.user_id).or_default().push(r);
    }
    let history_of = |user: &str| -> UserHistory {
        let mut recs = by_user.get(user).cloned().unwrap_or_default();
        recs.sort_by_key(|r| r.timestamp);
        let idx = |r: &&InteractionRecord| ds.item_index(&r.item_id).unwrap();
        let clicked: Vec<usize> = recs.iter().filter(|r| r.click).map(idx).collect();
        let liked: Vec<usize> = recs.iter().filter(|r| r.like).map(idx).collect();
        let followed: Vec<usize> = recs.iter().filter(|r| r.follow).map(idx).collect();
        UserHistory::new(clicked, liked, followed)
    };

    // Test candidates grouped by user in first-appearance order of the
    // parent dataset.
    let mut per_user: Vec<Vec<(usize, f64, bool)>> = vec![Vec::new(); ds.user_count()];
    for r in test.records() {
        let u = ds.user_index(&r.user_id).unwrap();
        let item = ds.item_index(&r.item_id).unwrap();
        let h = history_of(&r.user_id);
        let p = probability(model.score(&h, item).unwrap());
        per_user[u].push((item, p, r.click));
    }

    let scores: Vec<f64> = per_user.iter().flatten().map(|c| c.1).collect();
    let labels: Vec<bool> = per_user.iter().flatten().map(|c| c.2).collect();
    if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
        return None;
    }
    let auc = brute_auc(&scores, &labels);

    let (mut p_sum, mut pf_sum, mut r_sum, mut n) = (0.0, 0.0, 0.0, 0usize);
    for cands in &per_user {
        let total = cands.iter().filter(|c| c.2).count();
        if cands.is_empty() || total == 0 {
            continue;
        }
        let mut sorted = cands.clone();
        sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let kk = k.min(sorted.len());
        let hits = sorted[..kk].iter().filter(|c| c.2).count() as f64;
        p_sum += hits / kk as f64;
        pf_sum += hits / k as f64;
        r_sum += hits / total as f64;
        n += 1;
    }
    let nf = n as f64;
    let (precision, precision_fixed, recall) = (p_sum / nf, pf_sum / nf, r_sum / nf);
    let f = |p: f64, r: f64| {
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    };
    Some(MetricRow {
        name: name.to_string(),
        auc,
        recall,
        precision,
        f: f(precision, recall),
        precision_fixed,
        f_fixed: f(precision_fixed, recall),
        ranked_users: n,
        scored_pairs: scores.len(),
    })
}

pub fn eval_opts(k: usize) -> EvalOptions {
    EvalOptions {
        k,
        per_user_auc: false,
    }
}

/// Number of a user's records the split should put in train:
/// `ceil(4 n / 5)` in integer arithmetic.
pub fn ceil_80(n: usize) -> usize {
    (4 * n).div_ceil(5)
}
