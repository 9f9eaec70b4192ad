//! Loss, optimizers, the training loop and the ablation runner.

mod ablation;
mod optim;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ScaaModel, UserHistory};
use crate::soc::{SocInit, SocVariant};
use crate::tensor::{Matrix, Tape};

pub use ablation::{
    mean_report, run_ablation, run_ablation_seeds, AblationReport, AblationSummary, Arm,
};
pub use optim::{Optimizer, OptimizerKind};

/// Mean binary cross-entropy in the stable logit form
/// `max(x, 0) - x y + ln(1 + exp(-|x|))`.
pub fn bce_loss(logits: &[f64], labels: &[bool]) -> Result<f64> {
    let labels: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    bce_loss_values(logits, &labels)
}

pub(crate) fn bce_loss_values(logits: &[f64], labels: &[f64]) -> Result<f64> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::shape(
            "bce_loss",
            (logits.len(), 1),
            (labels.len(), 1),
        ));
    }
    let mut total = 0.0;
    for (&x, &y) in logits.iter().zip(labels) {
        if !x.is_finite() {
            return Err(Error::numeric("bce_loss", format!("logit {x}")));
        }
        total += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
    }
    Ok(total / logits.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub variant: SocVariant,
    pub use_soc: bool,
    /// Embedding dimension.
    pub d: usize,
    /// Hidden width of the scoring head.
    pub hidden: usize,
    pub soc_init: SocInit,
    /// Keep item embeddings fixed, e.g. when they come from a feature file.
    pub freeze_items: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            seed: 7,
            variant: SocVariant::Full,
            use_soc: true,
            d: 16,
            hidden: 32,
            soc_init: SocInit::Uniform,
            freeze_items: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be positive".into()));
        }
        if self.d == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "train.d and train.hidden must be at least 1".into(),
            ));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return Err(Error::Config(
                    "adam needs betas in [0, 1) and eps > 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// Fresh model for a dataset with `item_count` items.
    pub fn init_model(&self, item_count: usize) -> ScaaModel {
        let mut model = ScaaModel::init(
            item_count,
            self.d,
            self.hidden,
            self.variant,
            self.use_soc,
            self.seed,
        );
        if let SocInit::NearIdentity { noise } = self.soc_init {
            model.soc.toward_identity(noise);
        }
        model
    }
}

/// One training example: a shown item with its click label, at position
/// `pos` of its user's time-ordered records.
#[derive(Clone, Debug)]
struct Example {
    user: usize,
    pos: usize,
    item: usize,
    label: f64,
}

/// A user's records in time order as `(item, click, like, follow)`.
type Timeline = Vec<(usize, bool, bool, bool)>;

/// History made of the records strictly before `pos`.
fn prefix_history(timeline: &Timeline, pos: usize) -> UserHistory {
    let prior = &timeline[..pos];
    let pick = |f: fn(&(usize, bool, bool, bool)) -> bool| {
        prior
            .iter()
            .filter(|r| f(r))
            .map(|r| r.0)
            .collect::<Vec<_>>()
    };
    UserHistory::new(pick(|r| r.1), pick(|r| r.2), pick(|r| r.3))
}

struct ExampleGrad {
    loss: f64,
    items: Vec<usize>,
    item_grad: Matrix,
    rest: Vec<Matrix>,
}

/// Loss and gradients of one example, with the loss pre-divided by
/// `batch_len` so that per-example gradients simply add up.
fn example_grad(
    model: &ScaaModel,
    timeline: &Timeline,
    ex: &Example,
    batch_len: usize,
) -> Result<ExampleGrad> {
    let history = prefix_history(timeline, ex.pos);
    let items = ScaaModel::touched_items(&history, ex.item);
    let mut tape = Tape::new();
    let vars = model.register_local(&mut tape, &items)?;
    let logit = model.logit_on(&mut tape, &vars, &history, ex.item)?;
    let loss = tape.bce_with_logits(logit, &[ex.label])?;
    let scaled = tape.scale(loss, 1.0 / batch_len as f64);
    let mut grads = tape.backward(scaled)?;
    let all = vars.all();
    Ok(ExampleGrad {
        loss: tape.value(loss).data()[0],
        items,
        item_grad: grads.take(all[0]),
        rest: all[1..].iter().map(|&v| grads.take(v)).collect(),
    })
}

/// Training result.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ScaaModel,
    /// Mean per-example loss of each epoch, measured while training.
    pub loss_curve: Vec<f64>,
}

impl TrainOutcome {
    pub fn loss_curve_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for (e, l) in self.loss_curve.iter().enumerate() {
            out.push_str(&format!("{e},{l:?}\n"));
        }
        out
    }
}

/// Mini-batch training on every record of `train`; shown-but-not-clicked
/// records are the negatives.
///
/// Each example sees the history formed by its user's earlier records in
/// the same split, so positives and negatives are built the same way and
/// the candidate never appears in its own history. Example order is reshuffled every epoch
/// from `cfg.seed`. Per-example gradients are computed in parallel and summed
/// in example order, so results do not depend on the thread count.
pub fn train(mut model: ScaaModel, train: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Contract("training split is empty".into()));
    }
    if model.items.count() < train.item_count() {
        return Err(Error::Index {
            index: train.item_count() - 1,
            count: model.items.count(),
        });
    }
    let encoded: Vec<(usize, usize, &crate::data::InteractionRecord)> = train.encoded().collect();
    let by_user = train.records_by_user();
    let timelines: Vec<Timeline> = by_user
        .iter()
        .map(|ks| {
            ks.iter()
                .map(|&k| {
                    let (_, item, r) = encoded[k];
                    (item, r.click, r.like, r.follow)
                })
                .collect()
        })
        .collect();
    let mut examples: Vec<Example> = Vec::with_capacity(train.len());
    for (user, ks) in by_user.iter().enumerate() {
        for (pos, &k) in ks.iter().enumerate() {
            let (_, item, r) = encoded[k];
            examples.push(Example {
                user,
                pos,
                item,
                label: if r.label() { 1.0 } else { 0.0 },
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5e_ed0f_7a1e);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let (item_count, d) = (model.items.count(), model.d());

    for epoch in 0..cfg.epochs {
        examples.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in examples.chunks(cfg.batch_size) {
            let per_example: Vec<ExampleGrad> = batch
                .par_iter()
                .map(|ex| example_grad(&model, &timelines[ex.user], ex, batch.len()))
                .collect::<Result<_>>()
                .map_err(|e| Error::AtEpoch {
                    epoch,
                    source: Box::new(e),
                })?;

            let mut item_grad = Matrix::zeros(item_count, d);
            let mut rest: Vec<Matrix> = per_example[0]
                .rest
                .iter()
                .map(|g| Matrix::zeros(g.rows(), g.cols()))
                .collect();
            for eg in &per_example {
                epoch_loss += eg.loss;
                for (r, &item) in eg.items.iter().enumerate() {
                    for (o, g) in item_grad.row_mut(item).iter_mut().zip(eg.item_grad.row(r)) {
                        *o += g;
                    }
                }
                for (acc, g) in rest.iter_mut().zip(&eg.rest) {
                    acc.add_assign(g)?;
                }
            }
            let mut params = model.matrices_mut();
            if cfg.freeze_items {
                opt.step(&mut params[1..], &rest)?;
            } else {
                let mut grads = Vec::with_capacity(rest.len() + 1);
                grads.push(item_grad);
                grads.extend(rest);
                opt.step(&mut params, &grads)?;
            }
        }
        let mean = epoch_loss / examples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::AtEpoch {
                epoch,
                source: Box::new(Error::numeric("train", format!("mean loss {mean}"))),
            });
        }
        log::info!("epoch {epoch}: mean loss {mean:.5}");
        loss_curve.push(mean);
    }
    Ok(TrainOutcome { model, loss_curve })
}
