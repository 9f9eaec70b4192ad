//! Four-arm ablation: the same data, split and training budget for a model
//! without SoC, and for SoC with no attention, co-attention only and both.

use serde::{Deserialize, Serialize};

use crate::data::{split_train_test, Dataset, ItemFeatures};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_all, relative_improvement, EvalOptions, EvalReport, MetricRow};
use crate::soc::SocVariant;

use super::{train, TrainConfig};

/// One ablation arm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arm {
    /// Single-level click history, no SoC module.
    Base,
    /// SoC pooling with neither co- nor self-attention.
    NoAttention,
    CoOnly,
    Full,
}

impl Arm {
    /// Table order.
    pub const ALL: [Arm; 4] = [Arm::Base, Arm::NoAttention, Arm::CoOnly, Arm::Full];

    pub fn label(self) -> &'static str {
        match self {
            Arm::Base => "Base",
            Arm::NoAttention => "SCAA_cs",
            Arm::CoOnly => "SCAA_s",
            Arm::Full => "SCAA",
        }
    }

    pub fn variant(self) -> SocVariant {
        match self {
            Arm::Base | Arm::Full => SocVariant::Full,
            Arm::NoAttention => SocVariant::None,
            Arm::CoOnly => SocVariant::CoOnly,
        }
    }

    pub fn use_soc(self) -> bool {
        self != Arm::Base
    }
}

/// One seed's result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub report: EvalReport,
    /// Per-arm mean training loss per epoch, in [`Arm::ALL`] order.
    pub loss_curves: Vec<(String, Vec<f64>)>,
    /// `auc(SCAA) / auc(Base) - 1`.
    pub auc_gain: f64,
}

/// Trains and evaluates every arm on one dataset.
///
/// `ds` should already be filtered. When `features` is given and its width
/// matches `cfg.d`, item embeddings start from those rows instead of random
/// values. The arms share `cfg` apart from variant and `use_soc`.
pub fn run_ablation(
    ds: &Dataset,
    features: Option<&ItemFeatures>,
    cfg: &TrainConfig,
    split_ratio: f64,
    opts: EvalOptions,
) -> Result<AblationReport> {
    cfg.validate()?;
    let (train_ds, test_ds) = split_train_test(ds, split_ratio)?;
    if train_ds.is_empty() || test_ds.is_empty() {
        return Err(Error::Contract(format!(
            "ablation split is degenerate: {} train, {} test records",
            train_ds.len(),
            test_ds.len()
        )));
    }
    let overrides = match features {
        Some(f) if f.features.cols() != cfg.d => {
            return Err(Error::shape(
                "run_ablation features",
                f.features.shape(),
                (f.features.rows(), cfg.d),
            ))
        }
        Some(f) => f.rows_for(ds),
        None => Vec::new(),
    };

    let mut rows: Vec<MetricRow> = Vec::with_capacity(Arm::ALL.len());
    let mut loss_curves = Vec::with_capacity(Arm::ALL.len());
    for arm in Arm::ALL {
        let arm_cfg = TrainConfig {
            variant: arm.variant(),
            use_soc: arm.use_soc(),
            ..cfg.clone()
        };
        let mut model = arm_cfg.init_model(ds.item_count());
        model.items.override_rows(&overrides)?;
        let out = train(model, &train_ds, &arm_cfg)?;
        let row = evaluate_all(arm.label(), &out.model, &train_ds, &test_ds, opts)?;
        log::info!("seed {} {}: auc {:.4}", cfg.seed, arm.label(), row.auc);
        rows.push(row);
        loss_curves.push((arm.label().to_string(), out.loss_curve));
    }
    let auc_gain = relative_improvement(rows[3].auc, rows[0].auc);
    Ok(AblationReport {
        seed: cfg.seed,
        report: EvalReport { k: opts.k, rows },
        loss_curves,
        auc_gain,
    })
}

/// Per-seed reports and their average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub runs: Vec<AblationReport>,
    pub mean: EvalReport,
}

impl AblationSummary {
    /// Mean AUC of one arm.
    pub fn mean_auc(&self, arm: Arm) -> Option<f64> {
        self.mean.row(arm.label()).map(|r| r.auc)
    }
}

/// Runs [`run_ablation`] for `seeds` consecutive seeds starting at
/// `cfg.seed`. `data(seed)` supplies the filtered dataset and optional item
/// features for each seed.
pub fn run_ablation_seeds<F>(
    data: F,
    cfg: &TrainConfig,
    seeds: usize,
    split_ratio: f64,
    opts: EvalOptions,
) -> Result<AblationSummary>
where
    F: Fn(u64) -> Result<(Dataset, Option<ItemFeatures>)>,
{
    if seeds == 0 {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let mut runs = Vec::with_capacity(seeds);
    for s in 0..seeds as u64 {
        let seed = cfg.seed.wrapping_add(s);
        let (ds, features) = data(seed)?;
        let seed_cfg = TrainConfig {
            seed,
            ..cfg.clone()
        };
        runs.push(run_ablation(
            &ds,
            features.as_ref(),
            &seed_cfg,
            split_ratio,
            opts,
        )?);
    }
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    let mean = mean_report(&reports)?;
    Ok(AblationSummary { runs, mean })
}

/// Field-wise mean of reports with identical row names and `k`.
pub fn mean_report(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Contract("mean of zero reports".into()))?;
    for r in reports {
        let same_rows = r.rows.len() == first.rows.len()
            && r.rows
                .iter()
                .zip(&first.rows)
                .all(|(a, b)| a.name == b.name);
        if r.k != first.k || !same_rows {
            return Err(Error::Contract("reports disagree on k or rows".into()));
        }
    }
    let n = reports.len() as f64;
    let rows = first
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mean =
                |f: fn(&MetricRow) -> f64| reports.iter().map(|r| f(&r.rows[i])).sum::<f64>() / n;
            MetricRow {
                name: row.name.clone(),
                auc: mean(|r| r.auc),
                recall: mean(|r| r.recall),
                precision: mean(|r| r.precision),
                f: mean(|r| r.f),
                precision_fixed: mean(|r| r.precision_fixed),
                f_fixed: mean(|r| r.f_fixed),
                ranked_users: reports
                    .iter()
                    .map(|r| r.rows[i].ranked_users)
                    .sum::<usize>()
                    / reports.len(),
                scored_pairs: reports
                    .iter()
                    .map(|r| r.rows[i].scored_pairs)
                    .sum::<usize>()
                    / reports.len(),
            }
        })
        .collect();
    Ok(EvalReport { k: first.k, rows })
}
