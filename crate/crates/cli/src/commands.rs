//! Subcommand bodies. Each reads a resolved [`RunConfig`] and writes only
//! under `cfg.out`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use soc_core::checkpoint::{load_model, save_model, Checkpoint};
use soc_core::data::{
    filter_multilevel, gen_synthetic, load_interactions, load_item_features, save_interactions,
    save_item_features, split_train_test, Dataset, FilterPolicy, ItemFeatures,
};
use soc_core::gradcheck::{check_model, ModelCheckConfig};
use soc_core::metrics::{evaluate_all, relative_improvement, EvalReport};
use soc_core::training::{run_ablation_seeds, train, AblationSummary, Arm, TrainConfig};
use soc_core::{Error, ErrorKind, ScaaModel, SocVariant};

use crate::config::RunConfig;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

impl CliError {
    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Config => EXIT_CONFIG,
            ErrorKind::Data => EXIT_DATA,
            ErrorKind::Numeric => EXIT_NUMERIC,
            ErrorKind::Contract => EXIT_FAILURE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn ensure_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::data(format!("{}: {e}", cfg.out.display())))
}

fn policy_name(p: FilterPolicy) -> &'static str {
    match p {
        FilterPolicy::And => "and",
        FilterPolicy::Or => "or",
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

/// Ablation-table name of a trained model.
pub fn model_label(model: &ScaaModel) -> &'static str {
    if !model.use_soc {
        return Arm::Base.label();
    }
    match model.variant {
        SocVariant::Full => Arm::Full.label(),
        SocVariant::CoOnly => Arm::CoOnly.label(),
        SocVariant::None => Arm::NoAttention.label(),
    }
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    ensure_out(cfg)?;
    let s = gen_synthetic(&cfg.synth)?;
    let interactions = cfg.out.join("interactions.csv");
    let features = cfg.out.join("item_features.csv");
    save_interactions(&s.dataset, &interactions)?;
    save_item_features(&s.item_ids, &s.item_features, &features)?;
    let kept = filter_multilevel(&s.dataset, cfg.filter_policy);
    let count = |f: fn(&soc_core::data::InteractionRecord) -> bool| {
        s.dataset.records().iter().filter(|r| f(r)).count()
    };
    println!(
        "wrote {} records ({} users, {} items; {} clicks, {} likes, {} follows) to {}",
        s.dataset.len(),
        s.dataset.user_count(),
        s.dataset.item_count(),
        count(|r| r.click),
        count(|r| r.like),
        count(|r| r.follow),
        interactions.display()
    );
    println!(
        "wrote {} feature rows to {}",
        s.item_ids.len(),
        features.display()
    );
    println!(
        "{} users pass the {} filter",
        kept.user_count(),
        policy_name(cfg.filter_policy)
    );
    Ok(())
}

fn load_filtered(cfg: &RunConfig) -> Result<Dataset> {
    let ds = load_interactions(cfg.interactions_path())?;
    let kept = filter_multilevel(&ds, cfg.filter_policy);
    if kept.is_empty() {
        return Err(CliError::data(format!(
            "{}: no user passes the {} filter",
            cfg.interactions_path().display(),
            policy_name(cfg.filter_policy)
        )));
    }
    Ok(kept)
}

fn load_features(cfg: &RunConfig) -> Result<Option<ItemFeatures>> {
    Ok(cfg
        .data
        .item_features
        .as_ref()
        .map(load_item_features)
        .transpose()?)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let ds = load_filtered(cfg)?;
    let features = load_features(cfg)?;
    let (train_ds, _) = split_train_test(&ds, cfg.split_ratio)?;
    ensure_out(cfg)?;

    let mut model = cfg.train.init_model(ds.item_count());
    if let Some(f) = &features {
        if f.features.cols() != cfg.train.d {
            return Err(CliError {
                code: EXIT_CONFIG,
                message: format!(
                    "item features have width {}, train.d is {}",
                    f.features.cols(),
                    cfg.train.d
                ),
            });
        }
        model.items.override_rows(&f.rows_for(&ds))?;
    }
    let out = train(model, &train_ds, &cfg.train)?;
    let curve_csv = out.loss_curve_csv();
    let curve = out.loss_curve;

    let item_ids = ds.item_ids().map(str::to_owned).collect();
    let model_path = cfg.model_path();
    save_model(&Checkpoint::new(out.model, item_ids)?, &model_path)?;
    let curve_path = cfg.out.join("loss_curve.csv");
    write(&curve_path, curve_csv)?;
    if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
        println!("loss {first:.5} -> {last:.5} over {} epochs", curve.len());
    }
    println!(
        "wrote {} and {}",
        model_path.display(),
        curve_path.display()
    );
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let ck = load_model(cfg.model_path())?;
    let ds = load_filtered(cfg)?;
    if !ds.item_ids().eq(ck.item_ids.iter().map(String::as_str)) {
        return Err(CliError::data(format!(
            "{} was trained on a different item vocabulary than {}",
            cfg.model_path().display(),
            cfg.interactions_path().display()
        )));
    }
    let (train_ds, test_ds) = split_train_test(&ds, cfg.split_ratio)?;
    let row = evaluate_all(
        model_label(&ck.model),
        &ck.model,
        &train_ds,
        &test_ds,
        cfg.eval,
    )?;
    let report = EvalReport {
        k: cfg.eval.k,
        rows: vec![row],
    };
    ensure_out(cfg)?;
    write(&cfg.out.join("report.json"), to_json(&report))?;
    write(&cfg.out.join("report.txt"), report.to_table())?;
    print!("{}", report.to_table());
    Ok(report)
}

#[derive(Serialize)]
struct AblationFile<'a> {
    summary: &'a AblationSummary,
    /// `auc(SCAA) / auc(Base) - 1` of the mean row.
    mean_auc_gain: f64,
}

pub fn ablation_text(summary: &AblationSummary) -> String {
    let mut out = String::new();
    for run in &summary.runs {
        let _ = writeln!(out, "seed {}", run.seed);
        out.push_str(&run.report.to_table());
        let _ = writeln!(out, "SCAA over Base: {:+.4}\n", run.auc_gain);
    }
    let _ = writeln!(out, "mean over {} seed(s)", summary.runs.len());
    out.push_str(&summary.mean.to_table());
    let _ = writeln!(out, "SCAA over Base: {:+.4}", mean_gain(summary));
    out
}

fn mean_gain(summary: &AblationSummary) -> f64 {
    match (summary.mean_auc(Arm::Full), summary.mean_auc(Arm::Base)) {
        (Some(full), Some(base)) => relative_improvement(full, base),
        _ => f64::NAN,
    }
}

fn loss_csv(summary: &AblationSummary) -> String {
    let mut out = String::from("seed,arm,epoch,mean_loss\n");
    for run in &summary.runs {
        for (arm, curve) in &run.loss_curves {
            for (e, l) in curve.iter().enumerate() {
                let _ = writeln!(out, "{},{arm},{e},{l:?}", run.seed);
            }
        }
    }
    out
}

/// Arms share `[train]` apart from the `[ablate]` overrides. Without an
/// interactions path every seed draws its own synthetic dataset.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<AblationSummary> {
    let train_cfg = TrainConfig {
        freeze_items: cfg.ablate.freeze_items,
        soc_init: cfg.ablate.soc_init,
        ..cfg.train.clone()
    };
    let loaded = match &cfg.data.interactions {
        Some(_) => Some((load_filtered(cfg)?, load_features(cfg)?)),
        None => None,
    };
    let summary = run_ablation_seeds(
        |seed| match &loaded {
            Some((ds, features)) => Ok((ds.clone(), features.clone())),
            None => {
                let s = gen_synthetic(&soc_core::data::SynthConfig {
                    seed,
                    ..cfg.synth.clone()
                })?;
                let ds = filter_multilevel(&s.dataset, cfg.filter_policy);
                let features = ItemFeatures {
                    ids: s.item_ids,
                    features: s.item_features,
                };
                Ok((ds, Some(features)))
            }
        },
        &train_cfg,
        cfg.ablate.seeds,
        cfg.split_ratio,
        cfg.eval,
    )?;
    ensure_out(cfg)?;
    let file = AblationFile {
        summary: &summary,
        mean_auc_gain: mean_gain(&summary),
    };
    write(&cfg.out.join("ablation.json"), to_json(&file))?;
    let text = ablation_text(&summary);
    write(&cfg.out.join("ablation.txt"), &text)?;
    write(&cfg.out.join("ablation_loss.csv"), loss_csv(&summary))?;
    print!("{text}");
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckOutcome {
    pub tolerance: f64,
    pub fault: Option<f64>,
    /// `(seed, max relative error)` per instance.
    pub errors: Vec<(u64, f64)>,
    pub max_rel_error: f64,
    pub passed: bool,
}

pub fn cmd_gradcheck(cfg: &RunConfig, fault: Option<f64>) -> Result<GradcheckOutcome> {
    let check = ModelCheckConfig {
        fault,
        ..cfg.gradcheck.model.clone()
    };
    let mut errors = Vec::with_capacity(cfg.gradcheck.seeds);
    for k in 0..cfg.gradcheck.seeds as u64 {
        let seed = cfg.train.seed.wrapping_add(k);
        let report = check_model(&check, seed)?;
        println!(
            "seed {seed}: max relative error {:.3e}",
            report.max_rel_error
        );
        errors.push((seed, report.max_rel_error));
    }
    let max_rel_error = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let outcome = GradcheckOutcome {
        tolerance: check.tolerance,
        fault,
        errors,
        max_rel_error,
        passed: max_rel_error < check.tolerance,
    };
    ensure_out(cfg)?;
    write(&cfg.out.join("gradcheck.json"), to_json(&outcome))?;
    println!(
        "{}: max relative error {:.3e} (tolerance {:.0e})",
        if outcome.passed { "PASS" } else { "FAIL" },
        outcome.max_rel_error,
        outcome.tolerance
    );
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_arms() {
        let m = |variant, use_soc| ScaaModel::init(2, 2, 2, variant, use_soc, 0);
        assert_eq!(model_label(&m(SocVariant::Full, false)), "Base");
        assert_eq!(model_label(&m(SocVariant::None, true)), "SCAA_cs");
        assert_eq!(model_label(&m(SocVariant::CoOnly, true)), "SCAA_s");
        assert_eq!(model_label(&m(SocVariant::Full, true)), "SCAA");
    }
}
