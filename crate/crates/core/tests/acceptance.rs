//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
//! below. Criteria listed in `KNOWN_FAILURES` are still evaluated and
//! reported truthfully; for those the process only fails if the facts
//! asserted alongside them stop holding.

mod common;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::Rng;
use soc_core::checkpoint::{encode, Checkpoint};
use soc_core::data::{
    filter_multilevel, gen_synthetic, save_interactions, save_item_features, split_train_test,
    FilterPolicy, ItemFeatures, SynthConfig,
};
use soc_core::gradcheck::{check_model, ModelCheckConfig};
use soc_core::metrics::{auc, evaluate_all, f_at_k, relative_improvement, EvalOptions, EvalReport};
use soc_core::soc::{co_attend, pool_interest, soc_forward, SocInit};
use soc_core::training::{run_ablation_seeds, train, Arm, TrainConfig};
use soc_core::ScaaModel;

use common::*;

const F_TOL: f64 = 5e-4;
const GAIN_TOL: f64 = 5e-4;
const ABLATION_SEEDS: usize = 5;
const ABLATION_GAP: f64 = 0.005;
const ABLATION_BUDGET: Duration = Duration::from_secs(600);
const ORACLE_AUC_FLOOR: f64 = 0.75;
const GRAD_SEEDS: u64 = 20;
const GRAD_TOL: f64 = 1e-6;
const INVARIANT_TRIALS: u64 = 1000;
const SOFTMAX_TOL: f64 = 1e-12;
const POOL_TOL: f64 = 1e-12;
const PERMUTATION_TOL: f64 = 1e-10;
const AUC_TRIALS: u64 = 500;
const AUC_TOL: f64 = 1e-12;
const ORACLE_CORPORA: u64 = 200;
const DATASET_TRIALS: u64 = 200;

/// Criteria that do not hold, with the reason printed next to them.
const KNOWN_FAILURES: [(u32, &str); 2] = [
    (
        1,
        "two target F values sit 0.00055 below F computed from the rounded P and R; \
         they equal the truncated F",
    ),
    (
        2,
        "on the planted data the attention arms do not beat pooling without attention",
    ),
];

struct Outcome {
    pass: bool,
    detail: String,
    /// Facts that must hold even when the criterion itself fails.
    facts_hold: bool,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome {
        pass,
        detail,
        facts_hold: true,
    }
}

fn criterion_1() -> Outcome {
    let pairs = [
        ((0.390, 0.364), 0.376),
        ((0.385, 0.359), 0.371),
        ((0.355, 0.383), 0.368),
    ];
    let mut pass = true;
    let mut truncation_matches = true;
    let mut parts = Vec::new();
    for ((p, r), reported) in pairs {
        let f = f_at_k(p, r);
        let delta = (f - reported).abs();
        pass &= delta <= F_TOL;
        truncation_matches &= ((f * 1000.0).floor() / 1000.0 - reported).abs() < 1e-12;
        parts.push(format!("F({p},{r})={f:.6} vs {reported} (|d|={delta:.6})"));
    }
    let gain = relative_improvement(0.712, 0.696);
    let gain_ok = (gain - 0.023).abs() <= GAIN_TOL;
    pass &= gain_ok;
    parts.push(format!("0.712/0.696-1={gain:.5}"));
    Outcome {
        pass,
        detail: parts.join("; "),
        facts_hold: truncation_matches && gain_ok && (f_at_k(0.355, 0.383) - 0.368).abs() <= F_TOL,
    }
}

fn criterion_2() -> Outcome {
    let cfg = TrainConfig {
        freeze_items: true,
        soc_init: SocInit::NearIdentity { noise: 0.1 },
        ..TrainConfig::default()
    };
    let oracle_aucs = std::sync::Mutex::new(Vec::new());
    let start = Instant::now();
    let summary = run_ablation_seeds(
        |seed| {
            let s = gen_synthetic(&SynthConfig {
                seed,
                ..SynthConfig::default()
            })?;
            let truth: HashMap<(&str, &str), f64> = s
                .dataset
                .records()
                .iter()
                .zip(&s.true_logits)
                .map(|(r, &l)| ((r.user_id.as_str(), r.item_id.as_str()), l))
                .collect();
            let ds = filter_multilevel(&s.dataset, FilterPolicy::And);
            let (_, test) = split_train_test(&ds, 0.8)?;
            let scores: Vec<f64> = test
                .records()
                .iter()
                .map(|r| truth[&(r.user_id.as_str(), r.item_id.as_str())])
                .collect();
            let labels: Vec<bool> = test.records().iter().map(|r| r.click).collect();
            oracle_aucs.lock().unwrap().push(auc(&scores, &labels)?);
            let features = ItemFeatures {
                ids: s.item_ids,
                features: s.item_features,
            };
            Ok((ds, Some(features)))
        },
        &cfg,
        ABLATION_SEEDS,
        0.8,
        EvalOptions::default(),
    )
    .expect("ablation runs");
    let elapsed = start.elapsed();

    let mean = |arm| summary.mean_auc(arm).unwrap();
    let (base, cs, s, full) = (
        mean(Arm::Base),
        mean(Arm::NoAttention),
        mean(Arm::CoOnly),
        mean(Arm::Full),
    );
    let ordered = full - s >= ABLATION_GAP && s - cs >= ABLATION_GAP && full > base;
    let in_budget = elapsed < ABLATION_BUDGET;
    let oracle = oracle_aucs.into_inner().unwrap();
    let oracle_min = oracle.iter().copied().fold(f64::INFINITY, f64::min);
    let loss_down = summary
        .runs
        .iter()
        .flat_map(|r| &r.loss_curves)
        .all(|(_, c)| c.last() < c.first());
    let per_seed: Vec<String> = summary
        .runs
        .iter()
        .map(|r| {
            let a: Vec<String> = r
                .report
                .rows
                .iter()
                .map(|x| format!("{:.4}", x.auc))
                .collect();
            format!("seed {}: {}", r.seed, a.join("/"))
        })
        .collect();
    Outcome {
        pass: ordered && in_budget,
        detail: format!(
            "mean AUC Base {base:.4}, SCAA_cs {cs:.4}, SCAA_s {s:.4}, SCAA {full:.4}; \
             gaps SCAA-SCAA_s {:+.4}, SCAA_s-SCAA_cs {:+.4}; {:.0}s of {}s; \
             oracle AUC min {oracle_min:.4}; train loss falls in every arm: {loss_down}; [{}]",
            full - s,
            s - cs,
            elapsed.as_secs_f64(),
            ABLATION_BUDGET.as_secs(),
            per_seed.join(", ")
        ),
        facts_hold: in_budget && full > base && oracle_min > ORACLE_AUC_FLOOR && loss_down,
    }
}

fn criterion_3() -> Outcome {
    let cfg = ModelCheckConfig::default();
    let worst = (0..GRAD_SEEDS)
        .map(|s| check_model(&cfg, s).expect("check runs").max_rel_error)
        .fold(0.0, f64::max);
    let faulty = ModelCheckConfig {
        fault: Some(0.01),
        ..cfg.clone()
    };
    let caught = (0..GRAD_SEEDS).all(|s| !check_model(&faulty, s).unwrap().passes(GRAD_TOL));
    outcome(
        worst < GRAD_TOL && caught,
        format!(
            "d={} m={} n={} h={}, {GRAD_SEEDS} seeds: max rel error {worst:.2e}; injected fault caught on every seed: {caught}",
            cfg.d, cfg.m, cfg.n, cfg.hidden
        ),
    )
}

fn criterion_4() -> Outcome {
    let (mut softmax, mut identity, mut pool, mut perm) = (0.0f64, true, 0.0f64, 0.0f64);
    for t in 0..INVARIANT_TRIALS {
        let mut r = rng(t);
        let d = r.random_range(1..7);
        let (m, n) = (r.random_range(1..6), r.random_range(1..6));
        let scale = [1.0, 30.0, 700.0][r.random_range(0..3)];
        softmax = softmax.max(softmax_row_sum_error(&random_matrix(
            &mut r,
            m,
            d + 2,
            scale,
        )));

        let p = random_params(&mut r, d);
        let l = random_matrix(&mut r, m, d, 1.0);
        let f = random_matrix(&mut r, n, d, 1.0);
        let (le, fe) = co_attend(&l, &f, &params_with_zero_co_values(p.clone())).unwrap();
        identity &= le == l && fe == f;

        let v = pool_interest(&l, &f).unwrap();
        for (a, b) in v.values().iter().zip(concatenated_mean(&l, &f)) {
            pool = pool.max((a - b).abs());
        }

        let variant = VARIANTS[r.random_range(0..3)];
        let base = soc_forward(&l, &f, &p, variant).unwrap();
        let pl = permute_rows(&l, &shuffled(&mut r, m));
        let pf = permute_rows(&f, &shuffled(&mut r, n));
        let moved = soc_forward(&pl, &pf, &p, variant).unwrap();
        perm = perm.max(base.as_matrix().max_abs_diff(moved.as_matrix()));
    }
    outcome(
        softmax <= SOFTMAX_TOL && identity && pool <= POOL_TOL && perm <= PERMUTATION_TOL,
        format!(
            "{INVARIANT_TRIALS} trials: softmax row-sum err {softmax:.1e}; zero-value co-attention returns inputs: {identity}; \
             pool err {pool:.1e}; permutation err {perm:.1e}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut auc_err = 0.0f64;
    for t in 0..AUC_TRIALS {
        let mut r = rng(t);
        let n = r.random_range(2..=12);
        let coarse = r.random_bool(0.5);
        let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if coarse {
                    r.random_range(0..4) as f64
                } else {
                    r.random::<f64>()
                }
            })
            .collect();
        auc_err = auc_err.max((auc(&scores, &labels).unwrap() - brute_auc(&scores, &labels)).abs());
    }
    let mut exact = 0;
    let mut compared = 0;
    for t in 0..ORACLE_CORPORA {
        let mut r = rng(t);
        let ds = random_corpus(&mut r, 5, 12, 12);
        let k = r.random_range(1..6);
        let model = ScaaModel::init(
            ds.item_count(),
            4,
            6,
            VARIANTS[(t % 3) as usize],
            t % 4 != 0,
            t,
        );
        let (train, test) = split_train_test(&ds, 0.8).unwrap();
        if let Some(expected) = oracle_evaluate("m", &model, &ds, 0.8, k) {
            compared += 1;
            if evaluate_all("m", &model, &train, &test, eval_opts(k)).ok() == Some(expected) {
                exact += 1;
            }
        }
    }
    outcome(
        auc_err <= AUC_TOL && exact == compared && compared > 0,
        format!(
            "auc vs pair enumeration over {AUC_TRIALS} lists of <=12 points: max err {auc_err:.1e}; \
             evaluate_all equals the straight-line oracle on {exact}/{compared} five-user corpora"
        ),
    )
}

fn criterion_6() -> Outcome {
    let (mut round_trip, mut partition, mut idempotent, mut ceiling) = (true, true, true, true);
    for t in 0..DATASET_TRIALS {
        let mut r = rng(t);
        let users = r.random_range(1..7);
        let ds = random_corpus(&mut r, users, 10, 15);

        let mut bytes = Vec::new();
        soc_core::data::write_interactions(&ds, &mut bytes).unwrap();
        let back = soc_core::data::read_interactions(bytes.as_slice(), "mem".as_ref()).unwrap();
        let mut again = Vec::new();
        soc_core::data::write_interactions(&back, &mut again).unwrap();
        round_trip &= back == ds && again == bytes;

        let (train, test) = split_train_test(&ds, 0.8).unwrap();
        partition &= train.len() + test.len() == ds.len();
        for user in ds.user_ids() {
            let of = |d: &soc_core::data::Dataset| -> Vec<u64> {
                d.records()
                    .iter()
                    .filter(|x| x.user_id == user)
                    .map(|x| x.timestamp)
                    .collect()
            };
            let (all, tr, te) = (of(&ds), of(&train), of(&test));
            partition &= tr.len() + te.len() == all.len();
            if let (Some(a), Some(b)) = (tr.iter().max(), te.iter().min()) {
                partition &= a <= b;
            }
            ceiling &= tr.len() == ceil_80(all.len());
        }
        let mut everything: Vec<_> = train
            .records()
            .iter()
            .chain(test.records())
            .cloned()
            .collect();
        let mut original = ds.records().to_vec();
        let key = |x: &soc_core::data::InteractionRecord| {
            (
                x.user_id.clone(),
                x.item_id.clone(),
                x.timestamp,
                x.click,
                x.like,
                x.follow,
            )
        };
        everything.sort_by_key(key);
        original.sort_by_key(key);
        partition &= everything == original;

        for policy in [FilterPolicy::And, FilterPolicy::Or] {
            let once = filter_multilevel(&ds, policy);
            idempotent &= filter_multilevel(&once, policy) == once;
        }
    }
    outcome(
        round_trip && partition && idempotent && ceiling,
        format!(
            "{DATASET_TRIALS} datasets: round trip bit-exact {round_trip}; chronological partition {partition}; \
             filter idempotent {idempotent}; per-user train count = ceil(0.8 n) {ceiling}"
        ),
    )
}

fn run_once(threads: usize) -> (Vec<u8>, Vec<u8>, Vec<u8>, Vec<u8>) {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    pool.install(|| {
        let synth_cfg = SynthConfig {
            users: 60,
            items: 300,
            exposure_per_user: 30,
            seed: 3,
            ..SynthConfig::default()
        };
        let s = gen_synthetic(&synth_cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_interactions(&s.dataset, dir.path().join("i.csv")).unwrap();
        save_item_features(&s.item_ids, &s.item_features, dir.path().join("f.csv")).unwrap();
        let data = std::fs::read(dir.path().join("i.csv")).unwrap();
        let feats = std::fs::read(dir.path().join("f.csv")).unwrap();

        let ds = filter_multilevel(&s.dataset, FilterPolicy::And);
        let (tr, te) = split_train_test(&ds, 0.8).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train(cfg.init_model(ds.item_count()), &tr, &cfg).unwrap();
        let row = evaluate_all("SCAA", &out.model, &tr, &te, EvalOptions::default()).unwrap();
        let report = EvalReport {
            k: 50,
            rows: vec![row],
        }
        .to_json()
        .into_bytes();
        let ids = ds.item_ids().map(str::to_owned).collect();
        let ck = encode(&Checkpoint::new(out.model, ids).unwrap()).unwrap();
        (data, feats, ck, report)
    })
}

fn criterion_7() -> Outcome {
    let a = run_once(1);
    let b = run_once(1);
    let c = run_once(4);
    let same = |x: &(Vec<u8>, Vec<u8>, Vec<u8>, Vec<u8>),
                y: &(Vec<u8>, Vec<u8>, Vec<u8>, Vec<u8>)| {
        [x.0 == y.0, x.1 == y.1, x.2 == y.2, x.3 == y.3]
    };
    let repeat = same(&a, &b);
    let threads = same(&a, &c);
    outcome(
        repeat.iter().chain(&threads).all(|&x| x),
        format!(
            "repeat run identical [data, features, checkpoint, report] = {repeat:?}; \
             1 vs 4 threads identical = {threads:?}"
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        (1, "F@K examples and relative AUC gain", criterion_1),
        (2, "ablation ordering on the synthetic default", criterion_2),
        (3, "full-model gradient check", criterion_3),
        (4, "attention invariants", criterion_4),
        (5, "metric oracles", criterion_5),
        (6, "data pipeline properties", criterion_6),
        (7, "determinism", criterion_7),
    ];
    let mut passed = 0;
    let mut broken = Vec::new();
    for (id, name, check) in criteria {
        let o = check();
        let known = KNOWN_FAILURES.iter().find(|k| k.0 == id);
        println!(
            "criterion {id} {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if let (false, Some((_, why))) = (o.pass, known) {
            println!("    known failure: {why}");
        }
        if o.pass {
            passed += 1;
        }
        let acceptable = o.pass || (known.is_some() && o.facts_hold);
        if !acceptable || !o.facts_hold {
            broken.push(id);
        }
    }
    println!("{passed}/7 criteria pass");
    if !broken.is_empty() {
        println!("unexpected result for criteria {broken:?}");
        std::process::exit(1);
    }
}
