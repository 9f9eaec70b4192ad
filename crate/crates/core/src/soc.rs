//! Self-over-co attention over the "like" and "follow" interaction levels.
//!
//! Co-attention lets each level query the other and adds the result back
//! onto the original features. Self-attention then runs within each
//! enhanced level, and the two interest matrices are mean-pooled and mixed
//! in proportion to their row counts.
//!
//! Projections are row-wise: for features `U` (rows are items) and a
//! `d x d` weight `W`, the projection is `U W`. Keys are stored transposed
//! so that `Q K` is the `rows x rows` logit matrix directly.
//!
//! Every operation is written once against a [`Tape`]; the `Matrix`-level
//! functions run the same code on a throwaway tape of constants.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Like,
    Follow,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::Like => "like",
            Level::Follow => "follow",
        }
    }
}

/// One user's item features at one interaction level (`count x d`).
#[derive(Clone, Debug, PartialEq)]
pub struct LevelFeatures {
    level: Level,
    features: Matrix,
}

impl LevelFeatures {
    pub fn new(level: Level, features: Matrix) -> Result<Self> {
        if features.cols() == 0 {
            return Err(Error::Domain {
                op: "LevelFeatures::new",
                msg: "embedding dimension must be at least 1".into(),
            });
        }
        Ok(LevelFeatures { level, features })
    }

    pub fn empty(level: Level, d: usize) -> Self {
        LevelFeatures {
            level,
            features: Matrix::zeros(0, d),
        }
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn count(&self) -> usize {
        self.features.rows()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn into_features(self) -> Matrix {
        self.features
    }
}

/// Query, key and value weights for one attention block.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionTriple {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
}

impl ProjectionTriple {
    pub fn new(w_q: Matrix, w_k: Matrix, w_v: Matrix) -> Result<Self> {
        let d = w_q.rows();
        for w in [&w_q, &w_k, &w_v] {
            if w.shape() != (d, d) || d == 0 {
                return Err(Error::shape("ProjectionTriple::new", (d, d), w.shape()));
            }
        }
        Ok(ProjectionTriple { w_q, w_k, w_v })
    }

    pub fn identity(d: usize) -> Self {
        ProjectionTriple {
            w_q: Matrix::identity(d),
            w_k: Matrix::identity(d),
            w_v: Matrix::identity(d),
        }
    }

    pub fn zeros(d: usize) -> Self {
        ProjectionTriple {
            w_q: Matrix::zeros(d, d),
            w_k: Matrix::zeros(d, d),
            w_v: Matrix::zeros(d, d),
        }
    }

    /// Uniform in `[-sqrt(6 / 2d), sqrt(6 / 2d)]`.
    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (2.0 * d as f64)).sqrt();
        ProjectionTriple {
            w_q: Matrix::uniform(d, d, bound, rng),
            w_k: Matrix::uniform(d, d, bound, rng),
            w_v: Matrix::uniform(d, d, bound, rng),
        }
    }

    pub fn d(&self) -> usize {
        self.w_q.rows()
    }

    pub fn register(&self, tape: &mut Tape) -> TripleVars {
        TripleVars {
            w_q: tape.param(self.w_q.clone()),
            w_k: tape.param(self.w_k.clone()),
            w_v: tape.param(self.w_v.clone()),
        }
    }

    fn constants(&self, tape: &mut Tape) -> TripleVars {
        TripleVars {
            w_q: tape.constant(self.w_q.clone()),
            w_k: tape.constant(self.w_k.clone()),
            w_v: tape.constant(self.w_v.clone()),
        }
    }
}

/// The twelve projection matrices of the module.
#[derive(Clone, Debug, PartialEq)]
pub struct SocParams {
    pub co_like: ProjectionTriple,
    pub co_follow: ProjectionTriple,
    pub self_like: ProjectionTriple,
    pub self_follow: ProjectionTriple,
}

/// Names of the twelve weights, in [`SocParams::matrices`] order.
pub const SOC_WEIGHT_NAMES: [&str; 12] = [
    "co_like.w_q",
    "co_like.w_k",
    "co_like.w_v",
    "co_follow.w_q",
    "co_follow.w_k",
    "co_follow.w_v",
    "self_like.w_q",
    "self_like.w_k",
    "self_like.w_v",
    "self_follow.w_q",
    "self_follow.w_k",
    "self_follow.w_v",
];

impl SocParams {
    pub fn new(
        co_like: ProjectionTriple,
        co_follow: ProjectionTriple,
        self_like: ProjectionTriple,
        self_follow: ProjectionTriple,
    ) -> Result<Self> {
        let d = co_like.d();
        for t in [&co_follow, &self_like, &self_follow] {
            if t.d() != d {
                return Err(Error::shape("SocParams::new", (d, d), (t.d(), t.d())));
            }
        }
        Ok(SocParams {
            co_like,
            co_follow,
            self_like,
            self_follow,
        })
    }

    pub fn uniform_fill(d: usize, value: f64) -> Self {
        let t = || ProjectionTriple {
            w_q: Matrix::filled(d, d, value),
            w_k: Matrix::filled(d, d, value),
            w_v: Matrix::filled(d, d, value),
        };
        SocParams {
            co_like: t(),
            co_follow: t(),
            self_like: t(),
            self_follow: t(),
        }
    }

    pub fn identity(d: usize) -> Self {
        SocParams {
            co_like: ProjectionTriple::identity(d),
            co_follow: ProjectionTriple::identity(d),
            self_like: ProjectionTriple::identity(d),
            self_follow: ProjectionTriple::identity(d),
        }
    }

    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        SocParams {
            co_like: ProjectionTriple::random(d, rng),
            co_follow: ProjectionTriple::random(d, rng),
            self_like: ProjectionTriple::random(d, rng),
            self_follow: ProjectionTriple::random(d, rng),
        }
    }

    /// Scales every weight by `noise` and adds the identity, turning a
    /// random draw into near-identity projections.
    pub fn toward_identity(&mut self, noise: f64) {
        for w in self.matrices_mut() {
            let d = w.rows();
            for r in 0..d {
                for c in 0..d {
                    let base = if r == c { 1.0 } else { 0.0 };
                    w.set(r, c, base + noise * w.get(r, c));
                }
            }
        }
    }

    pub fn d(&self) -> usize {
        self.co_like.d()
    }

    pub fn matrices(&self) -> [&Matrix; 12] {
        let t = [
            &self.co_like,
            &self.co_follow,
            &self.self_like,
            &self.self_follow,
        ];
        [
            &t[0].w_q, &t[0].w_k, &t[0].w_v, &t[1].w_q, &t[1].w_k, &t[1].w_v, &t[2].w_q, &t[2].w_k,
            &t[2].w_v, &t[3].w_q, &t[3].w_k, &t[3].w_v,
        ]
    }

    pub fn matrices_mut(&mut self) -> [&mut Matrix; 12] {
        let SocParams {
            co_like,
            co_follow,
            self_like,
            self_follow,
        } = self;
        [
            &mut co_like.w_q,
            &mut co_like.w_k,
            &mut co_like.w_v,
            &mut co_follow.w_q,
            &mut co_follow.w_k,
            &mut co_follow.w_v,
            &mut self_like.w_q,
            &mut self_like.w_k,
            &mut self_like.w_v,
            &mut self_follow.w_q,
            &mut self_follow.w_k,
            &mut self_follow.w_v,
        ]
    }

    /// Rebuilds parameters from twelve matrices in [`SOC_WEIGHT_NAMES`] order.
    pub fn from_matrices(m: Vec<Matrix>) -> Result<Self> {
        let Ok::<[Matrix; 12], _>([a, b, c, d, e, f, g, h, i, j, k, l]) = m.try_into() else {
            return Err(Error::Contract("expected exactly 12 SoC matrices".into()));
        };
        SocParams::new(
            ProjectionTriple::new(a, b, c)?,
            ProjectionTriple::new(d, e, f)?,
            ProjectionTriple::new(g, h, i)?,
            ProjectionTriple::new(j, k, l)?,
        )
    }

    /// Registers all twelve weights as trainable leaves.
    pub fn register(&self, tape: &mut Tape) -> SocVars {
        SocVars {
            co_like: self.co_like.register(tape),
            co_follow: self.co_follow.register(tape),
            self_like: self.self_like.register(tape),
            self_follow: self.self_follow.register(tape),
            d: self.d(),
        }
    }

    fn constants(&self, tape: &mut Tape) -> SocVars {
        SocVars {
            co_like: self.co_like.constants(tape),
            co_follow: self.co_follow.constants(tape),
            self_like: self.self_like.constants(tape),
            self_follow: self.self_follow.constants(tape),
            d: self.d(),
        }
    }
}

/// Which ablation of the module to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SocVariant {
    /// Co-attention followed by self-attention.
    Full,
    /// Co-attention only; enhanced features are pooled directly.
    CoOnly,
    /// Raw level features are pooled directly.
    None,
}

impl SocVariant {
    pub const ALL: [SocVariant; 3] = [SocVariant::Full, SocVariant::CoOnly, SocVariant::None];

    pub fn name(self) -> &'static str {
        match self {
            SocVariant::Full => "full",
            SocVariant::CoOnly => "co_only",
            SocVariant::None => "none",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            SocVariant::Full => 0,
            SocVariant::CoOnly => 1,
            SocVariant::None => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.code() == code)
    }
}

impl fmt::Display for SocVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SocVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?} (full, co_only, none)")))
    }
}

/// Starting point of the twelve projection weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SocInit {
    /// Uniform in `[-sqrt(6 / 2d), sqrt(6 / 2d)]`.
    #[default]
    Uniform,
    /// `I + noise * W` with `W` drawn as for `Uniform`: attention starts as
    /// feature similarity and values start as the features themselves.
    NearIdentity { noise: f64 },
}

/// Features the self-attention layer projects.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfAttentionSource {
    /// Co-attention output projected with the self-attention weights.
    #[default]
    Enhanced,
    /// Raw level features projected with the co-attention weights.
    Literal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocOptions {
    /// Divide attention logits by `sqrt(d)`.
    pub scale_logits: bool,
    pub self_source: SelfAttentionSource,
}

/// Final pooled interest representation (`1 x d`).
#[derive(Clone, Debug, PartialEq)]
pub struct InterestVector(Matrix);

impl InterestVector {
    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn values(&self) -> &[f64] {
        self.0.data()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TripleVars {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
}

/// The twelve weights as tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct SocVars {
    pub co_like: TripleVars,
    pub co_follow: TripleVars,
    pub self_like: TripleVars,
    pub self_follow: TripleVars,
    pub d: usize,
}

impl SocVars {
    pub fn all(&self) -> [Var; 12] {
        let t = [
            self.co_like,
            self.co_follow,
            self.self_like,
            self.self_follow,
        ];
        [
            t[0].w_q, t[0].w_k, t[0].w_v, t[1].w_q, t[1].w_k, t[1].w_v, t[2].w_q, t[2].w_k,
            t[2].w_v, t[3].w_q, t[3].w_k, t[3].w_v,
        ]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Projected {
    pub q: Var,
    /// Stored transposed: `d x rows`.
    pub k: Var,
    pub v: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct CoAttendVars {
    pub like_enhanced: Var,
    pub follow_enhanced: Var,
    /// `m x n` weights of like rows over follow rows.
    pub like_weights: Var,
    /// `n x m` weights of follow rows over like rows.
    pub follow_weights: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct AttendVars {
    pub weights: Var,
    pub output: Var,
}

fn nonempty(tape: &Tape, u: Var, level: &'static str) -> Result<()> {
    if tape.shape(u).0 == 0 {
        Err(Error::EmptyLevel(level))
    } else {
        Ok(())
    }
}

fn check_dim(tape: &Tape, u: Var, d: usize, op: &'static str) -> Result<()> {
    let shape = tape.shape(u);
    if shape.1 != d {
        Err(Error::shape(op, shape, (d, d)))
    } else {
        Ok(())
    }
}

pub fn project_on(tape: &mut Tape, u: Var, t: &TripleVars) -> Result<Projected> {
    nonempty(tape, u, "projected")?;
    let q = tape.matmul(u, t.w_q)?;
    let k_rows = tape.matmul(u, t.w_k)?;
    let k = tape.transpose(k_rows);
    let v = tape.matmul(u, t.w_v)?;
    Ok(Projected { q, k, v })
}

/// `g(q k) v` with `g` the row softmax.
fn attend_on(tape: &mut Tape, q: Var, k: Var, v: Var, opts: SocOptions) -> Result<AttendVars> {
    let mut logits = tape.matmul(q, k)?;
    if opts.scale_logits {
        let d = tape.shape(q).1 as f64;
        logits = tape.scale(logits, 1.0 / d.sqrt());
    }
    let weights = tape.row_softmax(logits)?;
    let output = tape.matmul(weights, v)?;
    Ok(AttendVars { weights, output })
}

pub fn co_attend_on(
    tape: &mut Tape,
    u_l: Var,
    u_f: Var,
    p: &SocVars,
    opts: SocOptions,
) -> Result<CoAttendVars> {
    nonempty(tape, u_l, "like")?;
    nonempty(tape, u_f, "follow")?;
    check_dim(tape, u_l, p.d, "co_attend")?;
    check_dim(tape, u_f, p.d, "co_attend")?;
    let like = project_on(tape, u_l, &p.co_like)?;
    let follow = project_on(tape, u_f, &p.co_follow)?;
    let l2f = attend_on(tape, like.q, follow.k, follow.v, opts)?;
    let f2l = attend_on(tape, follow.q, like.k, like.v, opts)?;
    Ok(CoAttendVars {
        like_enhanced: tape.add(l2f.output, u_l)?,
        follow_enhanced: tape.add(f2l.output, u_f)?,
        like_weights: l2f.weights,
        follow_weights: f2l.weights,
    })
}

pub fn self_attend_on(
    tape: &mut Tape,
    u_e: Var,
    t: &TripleVars,
    opts: SocOptions,
) -> Result<AttendVars> {
    let p = project_on(tape, u_e, t)?;
    attend_on(tape, p.q, p.k, p.v, opts)
}

/// Count-weighted mix of the two row means. Zero-row inputs drop out; at
/// least one side must be nonempty.
pub fn pool_interest_on(tape: &mut Tape, l_mat: Var, f_mat: Var) -> Result<Var> {
    let m = tape.shape(l_mat).0;
    let n = tape.shape(f_mat).0;
    let total = (m + n) as f64;
    match (m, n) {
        (0, 0) => Err(Error::Domain {
            op: "pool_interest",
            msg: "both levels are empty".into(),
        }),
        (_, 0) => tape.mean_rows(l_mat),
        (0, _) => tape.mean_rows(f_mat),
        _ => {
            let l = tape.mean_rows(l_mat)?;
            let f = tape.mean_rows(f_mat)?;
            let l = tape.scale(l, m as f64 / total);
            let f = tape.scale(f, n as f64 / total);
            tape.add(l, f)
        }
    }
}

/// Full module forward pass. Empty levels are allowed: with one side empty
/// co-attention is skipped, and with both empty the result is zero.
pub fn soc_forward_on(
    tape: &mut Tape,
    u_l: Var,
    u_f: Var,
    p: &SocVars,
    variant: SocVariant,
    opts: SocOptions,
) -> Result<Var> {
    check_dim(tape, u_l, p.d, "soc_forward")?;
    check_dim(tape, u_f, p.d, "soc_forward")?;
    let m = tape.shape(u_l).0;
    let n = tape.shape(u_f).0;
    if m == 0 && n == 0 {
        return Ok(tape.constant(Matrix::zeros(1, p.d)));
    }
    if variant == SocVariant::None {
        return pool_interest_on(tape, u_l, u_f);
    }

    let (like_e, follow_e) = if m > 0 && n > 0 {
        let co = co_attend_on(tape, u_l, u_f, p, opts)?;
        (co.like_enhanced, co.follow_enhanced)
    } else {
        (u_l, u_f)
    };
    if variant == SocVariant::CoOnly {
        return pool_interest_on(tape, like_e, follow_e);
    }

    let (like_in, follow_in, like_t, follow_t) = match opts.self_source {
        SelfAttentionSource::Enhanced => (like_e, follow_e, p.self_like, p.self_follow),
        SelfAttentionSource::Literal => (u_l, u_f, p.co_like, p.co_follow),
    };
    let l_mat = if m > 0 {
        self_attend_on(tape, like_in, &like_t, opts)?.output
    } else {
        like_in
    };
    let f_mat = if n > 0 {
        self_attend_on(tape, follow_in, &follow_t, opts)?.output
    } else {
        follow_in
    };
    pool_interest_on(tape, l_mat, f_mat)
}

/// Returns `(q, k, v)` with `k` already transposed to `d x c`.
pub fn project(u: &Matrix, t: &ProjectionTriple) -> Result<(Matrix, Matrix, Matrix)> {
    if u.cols() != t.d() {
        return Err(Error::shape("project", u.shape(), (t.d(), t.d())));
    }
    let mut tape = Tape::new();
    let uv = tape.constant(u.clone());
    let tv = t.constants(&mut tape);
    let p = project_on(&mut tape, uv, &tv)?;
    Ok((
        tape.value(p.q).clone(),
        tape.value(p.k).clone(),
        tape.value(p.v).clone(),
    ))
}

/// Co-attention outputs together with both attention weight matrices.
#[derive(Clone, Debug)]
pub struct CoAttention {
    pub like_enhanced: Matrix,
    pub follow_enhanced: Matrix,
    pub like_weights: Matrix,
    pub follow_weights: Matrix,
}

pub fn co_attention(
    u_l: &Matrix,
    u_f: &Matrix,
    p: &SocParams,
    opts: SocOptions,
) -> Result<CoAttention> {
    let mut tape = Tape::new();
    let l = tape.constant(u_l.clone());
    let f = tape.constant(u_f.clone());
    let pv = p.constants(&mut tape);
    let co = co_attend_on(&mut tape, l, f, &pv, opts)?;
    Ok(CoAttention {
        like_enhanced: tape.value(co.like_enhanced).clone(),
        follow_enhanced: tape.value(co.follow_enhanced).clone(),
        like_weights: tape.value(co.like_weights).clone(),
        follow_weights: tape.value(co.follow_weights).clone(),
    })
}

/// Enhanced `(like, follow)` features.
pub fn co_attend(u_l: &Matrix, u_f: &Matrix, p: &SocParams) -> Result<(Matrix, Matrix)> {
    let co = co_attention(u_l, u_f, p, SocOptions::default())?;
    Ok((co.like_enhanced, co.follow_enhanced))
}

/// Self-attention output and its weight matrix.
pub fn self_attention(
    u_e: &Matrix,
    t: &ProjectionTriple,
    opts: SocOptions,
) -> Result<(Matrix, Matrix)> {
    if u_e.cols() != t.d() {
        return Err(Error::shape("self_attend", u_e.shape(), (t.d(), t.d())));
    }
    let mut tape = Tape::new();
    let u = tape.constant(u_e.clone());
    let tv = t.constants(&mut tape);
    let a = self_attend_on(&mut tape, u, &tv, opts)?;
    Ok((tape.value(a.output).clone(), tape.value(a.weights).clone()))
}

pub fn self_attend(u_e: &Matrix, t: &ProjectionTriple) -> Result<Matrix> {
    self_attention(u_e, t, SocOptions::default()).map(|(out, _)| out)
}

pub fn pool_interest(l_mat: &Matrix, f_mat: &Matrix) -> Result<InterestVector> {
    if l_mat.cols() != f_mat.cols() {
        return Err(Error::shape("pool_interest", l_mat.shape(), f_mat.shape()));
    }
    let mut tape = Tape::new();
    let l = tape.constant(l_mat.clone());
    let f = tape.constant(f_mat.clone());
    let v = pool_interest_on(&mut tape, l, f)?;
    Ok(InterestVector(tape.value(v).clone()))
}

pub fn soc_forward(
    u_l: &Matrix,
    u_f: &Matrix,
    p: &SocParams,
    variant: SocVariant,
) -> Result<InterestVector> {
    soc_forward_with(u_l, u_f, p, variant, SocOptions::default())
}

pub fn soc_forward_with(
    u_l: &Matrix,
    u_f: &Matrix,
    p: &SocParams,
    variant: SocVariant,
    opts: SocOptions,
) -> Result<InterestVector> {
    let mut tape = Tape::new();
    let l = tape.constant(u_l.clone());
    let f = tape.constant(u_f.clone());
    let pv = p.constants(&mut tape);
    let v = soc_forward_on(&mut tape, l, f, &pv, variant, opts)?;
    Ok(InterestVector(tape.value(v).clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn close(a: &Matrix, b: &Matrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        assert!(a.max_abs_diff(b) <= tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn project_identity_and_scalar() {
        let u = m(&[&[1.0, 2.0], &[3.0, -1.0], &[0.5, 0.0]]);
        let (q, k, v) = project(&u, &ProjectionTriple::identity(2)).unwrap();
        assert_eq!(q, u);
        assert_eq!(k, u.transpose());
        assert_eq!(v, u);

        let (q, k, v) = project(&m(&[&[2.0]]), &ProjectionTriple::identity(1)).unwrap();
        assert_eq!(
            (q.data(), k.data(), v.data()),
            (&[2.0][..], &[2.0][..], &[2.0][..])
        );
    }

    #[test]
    fn project_shapes_and_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = ProjectionTriple::random(4, &mut rng);
        let u = Matrix::uniform(5, 4, 1.0, &mut rng);
        let (q, k, v) = project(&u, &t).unwrap();
        assert_eq!((q.shape(), k.shape(), v.shape()), ((5, 4), (4, 5), (5, 4)));
        assert!(matches!(
            project(&Matrix::zeros(0, 4), &t),
            Err(Error::EmptyLevel(_))
        ));
        assert!(matches!(
            project(&Matrix::zeros(2, 3), &t),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn co_attend_single_logit() {
        let p = SocParams::uniform_fill(1, 1.0);
        let (le, fe) = co_attend(&m(&[&[2.0]]), &m(&[&[3.0]]), &p).unwrap();
        assert_eq!(le.data(), &[5.0]);
        assert_eq!(fe.data(), &[5.0]);
    }

    #[test]
    fn co_attend_zero_logits_is_uniform() {
        let d = 3;
        let t = ProjectionTriple {
            w_q: Matrix::zeros(d, d),
            w_k: Matrix::zeros(d, d),
            w_v: Matrix::identity(d),
        };
        let p = SocParams::new(t.clone(), t.clone(), t.clone(), t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u_l = Matrix::uniform(4, d, 2.0, &mut rng);
        let u_f = Matrix::uniform(2, d, 2.0, &mut rng);
        let (le, fe) = co_attend(&u_l, &u_f, &p).unwrap();
        let fm = u_f.mean_rows().unwrap();
        let lm = u_l.mean_rows().unwrap();
        for r in 0..4 {
            for c in 0..d {
                assert!((le.get(r, c) - (u_l.get(r, c) + fm.get(0, c))).abs() < 1e-12);
            }
        }
        for r in 0..2 {
            for c in 0..d {
                assert!((fe.get(r, c) - (u_f.get(r, c) + lm.get(0, c))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn co_attend_requires_both_levels() {
        let p = SocParams::identity(2);
        let u = m(&[&[1.0, 0.0]]);
        assert!(matches!(
            co_attend(&Matrix::zeros(0, 2), &u, &p),
            Err(Error::EmptyLevel("like"))
        ));
        assert!(matches!(
            co_attend(&u, &Matrix::zeros(0, 2), &p),
            Err(Error::EmptyLevel("follow"))
        ));
    }

    #[test]
    fn self_attend_single_row_is_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = ProjectionTriple::random(3, &mut rng);
        let u = Matrix::uniform(1, 3, 1.0, &mut rng);
        let out = self_attend(&u, &t).unwrap();
        close(&out, &u.matmul(&t.w_v).unwrap(), 1e-15);
    }

    #[test]
    fn self_attend_zero_logits_gives_mean() {
        let t = ProjectionTriple {
            w_q: Matrix::zeros(2, 2),
            w_k: Matrix::zeros(2, 2),
            w_v: Matrix::identity(2),
        };
        let u = m(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, -6.0]]);
        let out = self_attend(&u, &t).unwrap();
        let mean = u.mean_rows().unwrap();
        for r in 0..3 {
            for c in 0..2 {
                assert!((out.get(r, c) - mean.get(0, c)).abs() < 1e-12);
            }
        }
        assert!(matches!(
            self_attend(&Matrix::zeros(0, 2), &t),
            Err(Error::EmptyLevel(_))
        ));
    }

    #[test]
    fn pool_examples() {
        let v = pool_interest(&m(&[&[5.0]]), &m(&[&[5.0]])).unwrap();
        assert_eq!(v.values(), &[5.0]);
        let v = pool_interest(&m(&[&[1.0, 0.0], &[0.0, 1.0]]), &m(&[&[3.0, 3.0]])).unwrap();
        assert!((v.values()[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((v.values()[1] - 4.0 / 3.0).abs() < 1e-15);
        let one_side = pool_interest(&Matrix::zeros(0, 2), &m(&[&[3.0, 1.0]])).unwrap();
        assert_eq!(one_side.values(), &[3.0, 1.0]);
        assert!(pool_interest(&Matrix::zeros(0, 2), &Matrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn forward_none_is_plain_mean() {
        let p = SocParams::identity(2);
        let v = soc_forward(&m(&[&[1.0, 3.0]]), &m(&[&[3.0, 1.0]]), &p, SocVariant::None).unwrap();
        assert_eq!(v.values(), &[2.0, 2.0]);
    }

    #[test]
    fn forward_full_chained_single_logit() {
        let p = SocParams::uniform_fill(1, 1.0);
        let v = soc_forward(&m(&[&[2.0]]), &m(&[&[3.0]]), &p, SocVariant::Full).unwrap();
        assert_eq!(v.values(), &[5.0]);
    }

    #[test]
    fn forward_full_and_co_only_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = SocParams::random(4, &mut rng);
        let u_l = Matrix::uniform(3, 4, 1.0, &mut rng);
        let u_f = Matrix::uniform(2, 4, 1.0, &mut rng);
        let full = soc_forward(&u_l, &u_f, &p, SocVariant::Full).unwrap();
        let co = soc_forward(&u_l, &u_f, &p, SocVariant::CoOnly).unwrap();
        assert!(full.as_matrix().max_abs_diff(co.as_matrix()) > 1e-6);
    }

    #[test]
    fn forward_empty_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = SocParams::random(3, &mut rng);
        let z = soc_forward(
            &Matrix::zeros(0, 3),
            &Matrix::zeros(0, 3),
            &p,
            SocVariant::Full,
        )
        .unwrap();
        assert_eq!(z.values(), &[0.0; 3]);

        // Only likes: co-attention skipped, self-attention still applied.
        let u_l = Matrix::uniform(2, 3, 1.0, &mut rng);
        let v = soc_forward(&u_l, &Matrix::zeros(0, 3), &p, SocVariant::Full).unwrap();
        let expected = self_attend(&u_l, &p.self_like)
            .unwrap()
            .mean_rows()
            .unwrap();
        close(v.as_matrix(), &expected, 1e-15);
        let v = soc_forward(&u_l, &Matrix::zeros(0, 3), &p, SocVariant::CoOnly).unwrap();
        close(v.as_matrix(), &u_l.mean_rows().unwrap(), 1e-15);
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let p = SocParams::identity(3);
        let err = soc_forward(
            &Matrix::zeros(1, 2),
            &Matrix::zeros(1, 2),
            &p,
            SocVariant::Full,
        );
        assert!(matches!(err, Err(Error::Shape { .. })));
    }

    #[test]
    fn literal_source_ignores_self_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = SocParams::random(3, &mut rng);
        let mut q = p.clone();
        q.self_like = ProjectionTriple::random(3, &mut rng);
        q.self_follow = ProjectionTriple::random(3, &mut rng);
        let u_l = Matrix::uniform(3, 3, 1.0, &mut rng);
        let u_f = Matrix::uniform(2, 3, 1.0, &mut rng);
        let opts = SocOptions {
            self_source: SelfAttentionSource::Literal,
            ..Default::default()
        };
        let a = soc_forward_with(&u_l, &u_f, &p, SocVariant::Full, opts).unwrap();
        let b = soc_forward_with(&u_l, &u_f, &q, SocVariant::Full, opts).unwrap();
        close(a.as_matrix(), b.as_matrix(), 0.0);
        let enhanced = soc_forward(&u_l, &u_f, &q, SocVariant::Full).unwrap();
        assert!(enhanced.as_matrix().max_abs_diff(a.as_matrix()) > 1e-6);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in SocVariant::ALL {
            assert_eq!(v.name().parse::<SocVariant>().unwrap(), v);
            assert_eq!(SocVariant::from_code(v.code()), Some(v));
        }
        assert!("both".parse::<SocVariant>().is_err());
    }
}
