//! End-to-end gradient check of the click model: every parameter, through
//! the SoC module, the head and the loss.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ScaaModel, UserHistory};
use crate::soc::SocVariant;
use crate::tensor::{Fault, GradCheck, GradCheckReport, Matrix, Stencil};

/// Shapes of the randomized check instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelCheckConfig {
    pub d: usize,
    /// Liked items.
    pub m: usize,
    /// Followed items.
    pub n: usize,
    pub hidden: usize,
    /// Clicked items besides the liked and followed ones.
    pub extra_clicks: usize,
    /// Finite-difference step; the largest step for the extrapolated
    /// stencil.
    pub eps: f64,
    pub stencil: Stencil,
    pub tolerance: f64,
    pub variant: SocVariant,
    /// Corrupt the softmax backward rule by this relative amount.
    pub fault: Option<f64>,
}

impl Default for ModelCheckConfig {
    fn default() -> Self {
        ModelCheckConfig {
            d: 4,
            m: 3,
            n: 2,
            hidden: 8,
            extra_clicks: 2,
            eps: 1e-2,
            stencil: Stencil::Extrapolated,
            tolerance: 1e-6,
            variant: SocVariant::Full,
            fault: None,
        }
    }
}

impl ModelCheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "gradcheck d and hidden must be at least 1".into(),
            ));
        }
        if self.m + self.n == 0 {
            return Err(Error::Config(
                "gradcheck needs at least one liked or followed item".into(),
            ));
        }
        Ok(())
    }
}

/// Random model, history, candidate and label for one seed.
pub fn check_instance(cfg: &ModelCheckConfig, seed: u64) -> (ScaaModel, UserHistory, usize, f64) {
    let item_count = cfg.m + cfg.n + cfg.extra_clicks + 2;
    let model = ScaaModel::init(item_count, cfg.d, cfg.hidden, cfg.variant, true, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9));
    let mut ids: Vec<usize> = (0..item_count).collect();
    ids.shuffle(&mut rng);
    let liked = ids[..cfg.m].to_vec();
    let followed = ids[cfg.m..cfg.m + cfg.n].to_vec();
    let extra = &ids[cfg.m + cfg.n..cfg.m + cfg.n + cfg.extra_clicks];
    let clicked: Vec<usize> = liked
        .iter()
        .chain(&followed)
        .chain(extra)
        .copied()
        .collect();
    let candidate = ids[item_count - 1];
    let label = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
    (
        model,
        UserHistory::new(clicked, liked, followed),
        candidate,
        label,
    )
}

/// Max relative error between tape gradients and central differences of the
/// loss of one random example, over all model parameters.
pub fn check_model(cfg: &ModelCheckConfig, seed: u64) -> Result<GradCheckReport> {
    cfg.validate()?;
    let (model, history, candidate, label) = check_instance(cfg, seed);
    let params: Vec<Matrix> = model.matrices().into_iter().cloned().collect();
    let mut check = GradCheck {
        eps: cfg.eps,
        stencil: cfg.stencil,
        fault: None,
    };
    if let Some(delta) = cfg.fault {
        check = check.with_fault(Fault::SoftmaxGradScale(delta));
    }
    check.run(&params, |tape, vars| {
        let mv = model.vars_from(vars)?;
        let logit = model.logit_on(tape, &mv, &history, candidate)?;
        tape.bce_with_logits(logit, &[label])
    })
}
