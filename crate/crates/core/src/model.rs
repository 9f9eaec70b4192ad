//! Click-prediction model around the SoC module.
//!
//! The base model is deliberately small: a user's interest vector, the mean
//! embedding of their clicked items and the candidate's embedding are
//! concatenated and fed through a one-hidden-layer tanh perceptron that
//! outputs a click logit. Turning `use_soc` off replaces the interest vector
//! with zeros, which gives the no-SoC baseline.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::soc::{self, SocOptions, SocParams, SocVariant, SocVars, SOC_WEIGHT_NAMES};
use crate::tensor::{sigmoid, Matrix, Tape, Var};

/// Item embedding table (`item_count x d`).
#[derive(Clone, Debug, PartialEq)]
pub struct ItemTable {
    embeddings: Matrix,
}

impl ItemTable {
    pub fn new(embeddings: Matrix) -> Result<Self> {
        if embeddings.cols() == 0 {
            return Err(Error::Domain {
                op: "ItemTable::new",
                msg: "embedding dimension must be at least 1".into(),
            });
        }
        Ok(ItemTable { embeddings })
    }

    /// Entries uniform in `[-sqrt(3/d), sqrt(3/d)]`, so rows have unit
    /// expected squared norm.
    pub fn random<R: Rng + ?Sized>(count: usize, d: usize, rng: &mut R) -> Self {
        let bound = (3.0 / d as f64).sqrt();
        ItemTable {
            embeddings: Matrix::uniform(count, d, bound, rng),
        }
    }

    pub fn count(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn d(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn embeddings_mut(&mut self) -> &mut Matrix {
        &mut self.embeddings
    }

    pub fn embedding(&self, item: usize) -> Result<&[f64]> {
        self.check(item)?;
        Ok(self.embeddings.row(item))
    }

    /// Replaces the rows of the given items with externally supplied
    /// features.
    pub fn override_rows(&mut self, features: &[(usize, Vec<f64>)]) -> Result<()> {
        for (item, row) in features {
            self.check(*item)?;
            if row.len() != self.d() {
                return Err(Error::shape(
                    "ItemTable::override_rows",
                    (1, row.len()),
                    (1, self.d()),
                ));
            }
            self.embeddings.row_mut(*item).copy_from_slice(row);
        }
        Ok(())
    }

    fn check(&self, item: usize) -> Result<()> {
        if item < self.count() {
            Ok(())
        } else {
            Err(Error::Index {
                index: item,
                count: self.count(),
            })
        }
    }
}

/// A user's items per interaction level, each deduplicated and kept in
/// first-seen (chronological) order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UserHistory {
    clicked: Vec<usize>,
    liked: Vec<usize>,
    followed: Vec<usize>,
}

fn dedup(items: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut seen = std::collections::HashSet::new();
    items.into_iter().filter(|i| seen.insert(*i)).collect()
}

impl UserHistory {
    pub fn new(
        clicked: impl IntoIterator<Item = usize>,
        liked: impl IntoIterator<Item = usize>,
        followed: impl IntoIterator<Item = usize>,
    ) -> Self {
        UserHistory {
            clicked: dedup(clicked),
            liked: dedup(liked),
            followed: dedup(followed),
        }
    }

    pub fn clicked(&self) -> &[usize] {
        &self.clicked
    }

    pub fn liked(&self) -> &[usize] {
        &self.liked
    }

    pub fn followed(&self) -> &[usize] {
        &self.followed
    }

    /// Same history with one item removed from every level.
    pub fn without(&self, item: usize) -> UserHistory {
        let drop = |v: &[usize]| v.iter().copied().filter(|&i| i != item).collect();
        UserHistory {
            clicked: drop(&self.clicked),
            liked: drop(&self.liked),
            followed: drop(&self.followed),
        }
    }

    pub fn items(&self) -> impl Iterator<Item = usize> + '_ {
        self.clicked
            .iter()
            .chain(&self.liked)
            .chain(&self.followed)
            .copied()
    }
}

const HIDDEN_BIAS_BOUND: f64 = 1.0;

/// Two-layer perceptron `3d -> h -> 1` with a tanh hidden layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl Head {
    pub fn random<R: Rng + ?Sized>(d: usize, hidden: usize, rng: &mut R) -> Self {
        let input = 3 * d;
        let bound1 = (6.0 / (input + hidden) as f64).sqrt();
        let bound2 = (6.0 / (hidden + 1) as f64).sqrt();
        let w1 = Matrix::uniform(input, hidden, bound1, rng);
        // Spread hidden units over the curved part of tanh so that input
        // interactions show up from the first step.
        let b1 = Matrix::uniform(1, hidden, HIDDEN_BIAS_BOUND, rng);
        Head {
            w1,
            b1,
            w2: Matrix::uniform(hidden, 1, bound2, rng),
            b2: Matrix::zeros(1, 1),
        }
    }

    pub fn zeros(d: usize, hidden: usize) -> Self {
        Head {
            w1: Matrix::zeros(3 * d, hidden),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::zeros(hidden, 1),
            b2: Matrix::zeros(1, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaaModel {
    pub items: ItemTable,
    pub soc: SocParams,
    pub head: Head,
    pub variant: SocVariant,
    pub use_soc: bool,
    pub options: SocOptions,
}

/// Parameter names, in [`ScaaModel::matrices`] order.
pub fn param_names() -> Vec<&'static str> {
    let mut names = vec!["items"];
    names.extend(SOC_WEIGHT_NAMES);
    names.extend(["head.w1", "head.b1", "head.w2", "head.b2"]);
    names
}

#[derive(Clone, Debug)]
enum ItemRows {
    Direct(usize),
    Local(HashMap<usize, usize>),
}

/// Model parameters registered on a tape.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub items: Var,
    rows: ItemRows,
    pub soc: SocVars,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl ModelVars {
    fn row(&self, item: usize) -> Result<usize> {
        match &self.rows {
            ItemRows::Direct(count) if item < *count => Ok(item),
            ItemRows::Direct(count) => Err(Error::Index {
                index: item,
                count: *count,
            }),
            ItemRows::Local(map) => map.get(&item).copied().ok_or(Error::Index {
                index: item,
                count: map.len(),
            }),
        }
    }

    fn rows(&self, items: &[usize]) -> Result<Vec<usize>> {
        items.iter().map(|&i| self.row(i)).collect()
    }

    /// All trainable leaves, `items` first, in [`param_names`] order.
    pub fn all(&self) -> Vec<Var> {
        let mut v = vec![self.items];
        v.extend(self.soc.all());
        v.extend([self.w1, self.b1, self.w2, self.b2]);
        v
    }
}

impl ScaaModel {
    /// Item table, then SoC weights, then head, all from one seeded stream.
    pub fn init(
        item_count: usize,
        d: usize,
        hidden: usize,
        variant: SocVariant,
        use_soc: bool,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScaaModel {
            items: ItemTable::random(item_count, d, &mut rng),
            soc: SocParams::random(d, &mut rng),
            head: Head::random(d, hidden, &mut rng),
            variant,
            use_soc,
            options: SocOptions::default(),
        }
    }

    pub fn d(&self) -> usize {
        self.items.d()
    }

    pub fn hidden(&self) -> usize {
        self.head.hidden()
    }

    pub fn matrices(&self) -> Vec<&Matrix> {
        let mut v = vec![self.items.embeddings()];
        v.extend(self.soc.matrices());
        v.extend([&self.head.w1, &self.head.b1, &self.head.w2, &self.head.b2]);
        v
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let ScaaModel {
            items, soc, head, ..
        } = self;
        let mut v = vec![items.embeddings_mut()];
        v.extend(soc.matrices_mut());
        let Head { w1, b1, w2, b2 } = head;
        v.extend([w1, b1, w2, b2]);
        v
    }

    /// Rebuilds a model from matrices in [`param_names`] order.
    pub fn from_matrices(
        mut mats: Vec<Matrix>,
        variant: SocVariant,
        use_soc: bool,
        options: SocOptions,
    ) -> Result<Self> {
        if mats.len() != 17 {
            return Err(Error::Contract(format!(
                "expected 17 model matrices, got {}",
                mats.len()
            )));
        }
        let head_mats: Vec<Matrix> = mats.split_off(13);
        let soc_mats: Vec<Matrix> = mats.split_off(1);
        let items = ItemTable::new(mats.pop().expect("items matrix"))?;
        let soc = SocParams::from_matrices(soc_mats)?;
        let [w1, b1, w2, b2]: [Matrix; 4] = head_mats.try_into().expect("four head matrices");
        let d = items.d();
        let h = w1.cols();
        if soc.d() != d
            || w1.rows() != 3 * d
            || b1.shape() != (1, h)
            || w2.shape() != (h, 1)
            || b2.shape() != (1, 1)
        {
            return Err(Error::shape(
                "ScaaModel::from_matrices",
                (3 * d, h),
                w1.shape(),
            ));
        }
        Ok(ScaaModel {
            items,
            soc,
            head: Head { w1, b1, w2, b2 },
            variant,
            use_soc,
            options,
        })
    }

    /// Registers every parameter as a trainable leaf, with the whole item
    /// table as one leaf.
    pub fn register(&self, tape: &mut Tape) -> ModelVars {
        let items = tape.param(self.items.embeddings().clone());
        self.register_rest(tape, items, ItemRows::Direct(self.items.count()))
    }

    /// Like [`register`](Self::register) but only the listed items'
    /// embeddings go on the tape, stacked in the given order. Their gradient
    /// rows line up with `items`.
    pub fn register_local(&self, tape: &mut Tape, items: &[usize]) -> Result<ModelVars> {
        let table = self.items.embeddings().gather_rows(items)?;
        let rows = items.iter().enumerate().map(|(r, &i)| (i, r)).collect();
        let items = tape.param(table);
        Ok(self.register_rest(tape, items, ItemRows::Local(rows)))
    }

    /// Wraps leaves that were registered elsewhere, one per matrix in
    /// [`param_names`] order, with `vars[0]` holding the whole item table.
    pub fn vars_from(&self, vars: &[Var]) -> Result<ModelVars> {
        if vars.len() != 17 {
            return Err(Error::Contract(format!(
                "expected 17 vars, got {}",
                vars.len()
            )));
        }
        let triple = |k: usize| soc::TripleVars {
            w_q: vars[k],
            w_k: vars[k + 1],
            w_v: vars[k + 2],
        };
        Ok(ModelVars {
            items: vars[0],
            rows: ItemRows::Direct(self.items.count()),
            soc: SocVars {
                co_like: triple(1),
                co_follow: triple(4),
                self_like: triple(7),
                self_follow: triple(10),
                d: self.d(),
            },
            w1: vars[13],
            b1: vars[14],
            w2: vars[15],
            b2: vars[16],
        })
    }

    fn register_rest(&self, tape: &mut Tape, items: Var, rows: ItemRows) -> ModelVars {
        let soc = self.soc.register(tape);
        ModelVars {
            items,
            rows,
            soc,
            w1: tape.param(self.head.w1.clone()),
            b1: tape.param(self.head.b1.clone()),
            w2: tape.param(self.head.w2.clone()),
            b2: tape.param(self.head.b2.clone()),
        }
    }

    /// Click logit for one candidate, recorded on `tape`.
    pub fn logit_on(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        history: &UserHistory,
        candidate: usize,
    ) -> Result<Var> {
        let (interest, context) = self.user_on(tape, vars, history)?;
        self.head_on(tape, vars, interest, context, candidate)
    }

    /// Interest vector and click context of one user, both `1 x d`.
    pub fn user_on(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        history: &UserHistory,
    ) -> Result<(Var, Var)> {
        let d = self.d();
        let interest = if self.use_soc {
            let liked = vars.rows(history.liked())?;
            let followed = vars.rows(history.followed())?;
            let u_l = tape.gather_rows(vars.items, &liked)?;
            let u_f = tape.gather_rows(vars.items, &followed)?;
            soc::soc_forward_on(tape, u_l, u_f, &vars.soc, self.variant, self.options)?
        } else {
            tape.constant(Matrix::zeros(1, d))
        };
        let clicked = vars.rows(history.clicked())?;
        let context = if clicked.is_empty() {
            tape.constant(Matrix::zeros(1, d))
        } else {
            let c = tape.gather_rows(vars.items, &clicked)?;
            tape.mean_rows(c)?
        };
        Ok((interest, context))
    }

    /// `head([interest | context | embedding(candidate)])`.
    pub fn head_on(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        interest: Var,
        context: Var,
        candidate: usize,
    ) -> Result<Var> {
        let cand = vars.row(candidate)?;
        let cand = tape.gather_rows(vars.items, &[cand])?;
        let x = tape.concat_cols(&[interest, context, cand])?;
        let pre = tape.matmul(x, vars.w1)?;
        let pre = tape.add(pre, vars.b1)?;
        let hidden = tape.tanh(pre);
        let out = tape.matmul(hidden, vars.w2)?;
        tape.add(out, vars.b2)
    }

    /// Logits of several candidates for one user; the user side is
    /// computed once.
    pub fn score_many(&self, history: &UserHistory, candidates: &[usize]) -> Result<Vec<f64>> {
        let items = dedup(history.items().chain(candidates.iter().copied()));
        for &i in &items {
            self.items.check(i)?;
        }
        let mut tape = Tape::new();
        let vars = self.register_local(&mut tape, &items)?;
        let (interest, context) = self.user_on(&mut tape, &vars, history)?;
        candidates
            .iter()
            .map(|&c| {
                let logit = self.head_on(&mut tape, &vars, interest, context, c)?;
                Ok(tape.value(logit).data()[0])
            })
            .collect()
    }

    /// Items whose embeddings a forward pass for this example touches,
    /// deduplicated in first-use order.
    pub fn touched_items(history: &UserHistory, candidate: usize) -> Vec<usize> {
        dedup(history.items().chain(std::iter::once(candidate)))
    }

    pub fn score(&self, history: &UserHistory, candidate: usize) -> Result<f64> {
        let mut tape = Tape::new();
        let items = Self::touched_items(history, candidate);
        for &i in &items {
            self.items.check(i)?;
        }
        let vars = self.register_local(&mut tape, &items)?;
        let logit = self.logit_on(&mut tape, &vars, history, candidate)?;
        Ok(tape.value(logit).data()[0])
    }

    pub fn interest(&self, history: &UserHistory) -> Result<Matrix> {
        let (u_l, u_f, _) = build_level_features(history, &self.items)?;
        if !self.use_soc {
            return Ok(Matrix::zeros(1, self.d()));
        }
        soc::soc_forward_with(&u_l, &u_f, &self.soc, self.variant, self.options)
            .map(|v| v.into_matrix())
    }
}

/// Stacked like features, stacked follow features, and the mean clicked
/// embedding (zeros when nothing was clicked).
pub fn build_level_features(
    history: &UserHistory,
    items: &ItemTable,
) -> Result<(Matrix, Matrix, Matrix)> {
    let table = items.embeddings();
    let u_l = table.gather_rows(history.liked())?;
    let u_f = table.gather_rows(history.followed())?;
    let context = if history.clicked().is_empty() {
        Matrix::zeros(1, items.d())
    } else {
        table.gather_rows(history.clicked())?.mean_rows()?
    };
    Ok((u_l, u_f, context))
}

/// Click logit.
pub fn score(model: &ScaaModel, history: &UserHistory, candidate: usize) -> Result<f64> {
    model.score(history, candidate)
}

pub fn probability(logit: f64) -> f64 {
    sigmoid(logit)
}

/// Click probabilities, one per pair, in input order.
pub fn predict_batch(model: &ScaaModel, pairs: &[(UserHistory, usize)]) -> Result<Vec<f64>> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(index, (h, c))| {
            model
                .score(h, *c)
                .map(probability)
                .map_err(|e| Error::AtPair {
                    index,
                    source: Box::new(e),
                })
        })
        .collect()
}
