//! Python bindings. Matrices cross the boundary as lists of rows.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use soc_core::checkpoint::{load_model, save_model, Checkpoint};
use soc_core::data::{gen_synthetic, SynthConfig};
use soc_core::metrics::{self, RankedList, Scored};
use soc_core::model::probability;
use soc_core::soc::{self, SOC_WEIGHT_NAMES};
use soc_core::{Error, ErrorKind, Matrix, SocOptions, SocVariant, UserHistory};

fn py_err(e: Error) -> PyErr {
    match e.kind() {
        ErrorKind::Data => PyIOError::new_err(e.to_string()),
        ErrorKind::Numeric => PyRuntimeError::new_err(e.to_string()),
        ErrorKind::Config | ErrorKind::Contract => PyValueError::new_err(e.to_string()),
    }
}

/// Rows to a matrix; `d` fixes the width of an empty list.
fn to_matrix(rows: &[Vec<f64>], d: Option<usize>) -> Result<Matrix, Error> {
    match (rows.is_empty(), d) {
        (true, Some(d)) => Ok(Matrix::zeros(0, d)),
        (true, None) => Err(Error::Contract(
            "empty matrix needs an explicit width".into(),
        )),
        (false, _) => Matrix::from_rows(rows),
    }
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn variant(name: &str) -> PyResult<SocVariant> {
    name.parse().map_err(py_err)
}

/// The twelve projection weights of the module.
#[pyclass(name = "SocParams", from_py_object)]
#[derive(Clone)]
struct PySocParams {
    inner: soc::SocParams,
}

#[pymethods]
impl PySocParams {
    /// Seeded uniform draw in `[-sqrt(3/d), sqrt(3/d)]`.
    #[staticmethod]
    #[pyo3(signature = (d, seed=0))]
    fn random(d: usize, seed: u64) -> PyResult<Self> {
        if d == 0 {
            return Err(PyValueError::new_err("d must be at least 1"));
        }
        let model = soc_core::ScaaModel::init(1, d, 1, SocVariant::Full, true, seed);
        Ok(PySocParams { inner: model.soc })
    }

    #[staticmethod]
    fn identity(d: usize) -> PyResult<Self> {
        if d == 0 {
            return Err(PyValueError::new_err("d must be at least 1"));
        }
        Ok(PySocParams {
            inner: soc::SocParams::identity(d),
        })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    /// Weight names in storage order.
    #[staticmethod]
    fn names() -> Vec<&'static str> {
        SOC_WEIGHT_NAMES.to_vec()
    }

    fn get(&self, name: &str) -> PyResult<Vec<Vec<f64>>> {
        let k = index_of(name)?;
        Ok(to_rows(self.inner.matrices()[k]))
    }

    fn set(&mut self, name: &str, rows: Vec<Vec<f64>>) -> PyResult<()> {
        let k = index_of(name)?;
        let m = to_matrix(&rows, None).map_err(py_err)?;
        let d = self.inner.d();
        if m.shape() != (d, d) {
            return Err(PyValueError::new_err(format!(
                "{name} must be {d}x{d}, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        *self.inner.matrices_mut()[k] = m;
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!("SocParams(d={})", self.inner.d())
    }
}

fn index_of(name: &str) -> PyResult<usize> {
    SOC_WEIGHT_NAMES
        .iter()
        .position(|n| *n == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown weight {name:?}")))
}

fn levels(u_l: &[Vec<f64>], u_f: &[Vec<f64>], d: usize) -> PyResult<(Matrix, Matrix)> {
    Ok((
        to_matrix(u_l, Some(d)).map_err(py_err)?,
        to_matrix(u_f, Some(d)).map_err(py_err)?,
    ))
}

/// Pooled interest vector of the like and follow feature rows.
#[pyfunction]
#[pyo3(signature = (u_l, u_f, params, variant="full", scale_logits=false))]
fn soc_forward(
    u_l: Vec<Vec<f64>>,
    u_f: Vec<Vec<f64>>,
    params: &PySocParams,
    variant: &str,
    scale_logits: bool,
) -> PyResult<Vec<f64>> {
    let (l, f) = levels(&u_l, &u_f, params.inner.d())?;
    let opts = SocOptions {
        scale_logits,
        ..SocOptions::default()
    };
    let v = soc::soc_forward_with(&l, &f, &params.inner, self::variant(variant)?, opts)
        .map_err(py_err)?;
    Ok(v.values().to_vec())
}

type Rows = Vec<Vec<f64>>;

/// Enhanced like and follow features.
#[pyfunction]
fn co_attend(
    u_l: Vec<Vec<f64>>,
    u_f: Vec<Vec<f64>>,
    params: &PySocParams,
) -> PyResult<(Rows, Rows)> {
    let (l, f) = levels(&u_l, &u_f, params.inner.d())?;
    let (le, fe) = soc::co_attend(&l, &f, &params.inner).map_err(py_err)?;
    Ok((to_rows(&le), to_rows(&fe)))
}

/// Self-attention of one level with that level's self-attention weights.
#[pyfunction]
#[pyo3(signature = (u_e, params, level="like"))]
fn self_attend(u_e: Vec<Vec<f64>>, params: &PySocParams, level: &str) -> PyResult<Vec<Vec<f64>>> {
    let t = match level {
        "like" => &params.inner.self_like,
        "follow" => &params.inner.self_follow,
        _ => return Err(PyValueError::new_err("level must be 'like' or 'follow'")),
    };
    let u = to_matrix(&u_e, None).map_err(py_err)?;
    soc::self_attend(&u, t).map(|m| to_rows(&m)).map_err(py_err)
}

#[pyfunction]
fn pool_interest(l_mat: Vec<Vec<f64>>, f_mat: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let d = l_mat.first().or(f_mat.first()).map(Vec::len);
    let l = to_matrix(&l_mat, d).map_err(py_err)?;
    let f = to_matrix(&f_mat, d).map_err(py_err)?;
    soc::pool_interest(&l, &f)
        .map(|v| v.values().to_vec())
        .map_err(py_err)
}

#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    metrics::auc(&scores, &labels).map_err(py_err)
}

#[pyfunction]
fn f_at_k(p: f64, r: f64) -> f64 {
    metrics::f_at_k(p, r)
}

fn ranked(scores: &[f64], labels: &[bool]) -> PyResult<RankedList> {
    if scores.len() != labels.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    Ok(RankedList::new(
        scores
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(item, (&probability, &relevant))| Scored {
                item,
                probability,
                relevant,
            })
            .collect(),
    ))
}

/// Precision at `k` of one ranked candidate list, ties broken by position.
#[pyfunction]
fn precision_at_k(scores: Vec<f64>, labels: Vec<bool>, k: usize) -> PyResult<f64> {
    metrics::precision_at_k(&ranked(&scores, &labels)?, k).map_err(py_err)
}

#[pyfunction]
fn recall_at_k(scores: Vec<f64>, labels: Vec<bool>, k: usize) -> PyResult<f64> {
    metrics::recall_at_k(&ranked(&scores, &labels)?, k).map_err(py_err)
}

/// Click model over item indices `0..item_count`.
#[pyclass(name = "ScaaModel")]
struct PyScaaModel {
    inner: soc_core::ScaaModel,
    item_ids: Vec<String>,
}

#[pymethods]
impl PyScaaModel {
    #[new]
    #[pyo3(signature = (item_count, d=16, hidden=32, variant="full", use_soc=true, seed=7))]
    fn new(
        item_count: usize,
        d: usize,
        hidden: usize,
        variant: &str,
        use_soc: bool,
        seed: u64,
    ) -> PyResult<Self> {
        if item_count == 0 || d == 0 || hidden == 0 {
            return Err(PyValueError::new_err(
                "item_count, d and hidden must be at least 1",
            ));
        }
        let inner = soc_core::ScaaModel::init(
            item_count,
            d,
            hidden,
            self::variant(variant)?,
            use_soc,
            seed,
        );
        let item_ids = (0..item_count).map(|i| i.to_string()).collect();
        Ok(PyScaaModel { inner, item_ids })
    }

    /// Reads a checkpoint written by the command-line tool.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ck = load_model(path).map_err(py_err)?;
        Ok(PyScaaModel {
            inner: ck.model,
            item_ids: ck.item_ids,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let ck = Checkpoint::new(self.inner.clone(), self.item_ids.clone()).map_err(py_err)?;
        save_model(&ck, path).map_err(py_err)
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant.name()
    }

    #[getter]
    fn use_soc(&self) -> bool {
        self.inner.use_soc
    }

    /// External id of each embedding row.
    #[getter]
    fn item_ids(&self) -> Vec<String> {
        self.item_ids.clone()
    }

    fn item_index(&self, item_id: &str) -> Option<usize> {
        self.item_ids.iter().position(|i| i == item_id)
    }

    #[getter]
    fn params(&self) -> PySocParams {
        PySocParams {
            inner: self.inner.soc.clone(),
        }
    }

    /// Click logit of `candidate` for a user with the given histories.
    #[pyo3(signature = (candidate, clicked, liked=vec![], followed=vec![]))]
    fn score(
        &self,
        candidate: usize,
        clicked: Vec<usize>,
        liked: Vec<usize>,
        followed: Vec<usize>,
    ) -> PyResult<f64> {
        let h = UserHistory::new(clicked, liked, followed);
        self.inner.score(&h, candidate).map_err(py_err)
    }

    /// Click probabilities of several candidates for one user.
    #[pyo3(signature = (candidates, clicked, liked=vec![], followed=vec![]))]
    fn predict(
        &self,
        candidates: Vec<usize>,
        clicked: Vec<usize>,
        liked: Vec<usize>,
        followed: Vec<usize>,
    ) -> PyResult<Vec<f64>> {
        let h = UserHistory::new(clicked, liked, followed);
        let logits = self.inner.score_many(&h, &candidates).map_err(py_err)?;
        Ok(logits.into_iter().map(probability).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "ScaaModel(items={}, d={}, hidden={}, variant={}, use_soc={})",
            self.inner.items.count(),
            self.inner.d(),
            self.inner.hidden(),
            self.inner.variant,
            self.inner.use_soc
        )
    }
}

type SynthRecord = (String, String, bool, bool, bool, u64);

/// Synthetic interaction log. Returns `(records, item_ids, item_features,
/// true_logits)` with records as `(user, item, click, like, follow,
/// timestamp)` tuples.
#[pyfunction]
#[pyo3(signature = (users=500, items=2000, d_latent=16, exposure_per_user=60, seed=7))]
#[allow(clippy::type_complexity)]
fn synthesize(
    users: usize,
    items: usize,
    d_latent: usize,
    exposure_per_user: usize,
    seed: u64,
) -> PyResult<(Vec<SynthRecord>, Vec<String>, Vec<Vec<f64>>, Vec<f64>)> {
    let cfg = SynthConfig {
        users,
        items,
        d_latent,
        exposure_per_user,
        seed,
        ..SynthConfig::default()
    };
    let s = gen_synthetic(&cfg).map_err(py_err)?;
    let records = s
        .dataset
        .records()
        .iter()
        .map(|r| {
            (
                r.user_id.clone(),
                r.item_id.clone(),
                r.click,
                r.like,
                r.follow,
                r.timestamp,
            )
        })
        .collect();
    Ok((
        records,
        s.item_ids,
        to_rows(&s.item_features),
        s.true_logits,
    ))
}

#[pymodule]
fn soc_attention(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySocParams>()?;
    m.add_class::<PyScaaModel>()?;
    m.add_function(wrap_pyfunction!(soc_forward, m)?)?;
    m.add_function(wrap_pyfunction!(co_attend, m)?)?;
    m.add_function(wrap_pyfunction!(self_attend, m)?)?;
    m.add_function(wrap_pyfunction!(pool_interest, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(f_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(precision_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(recall_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    Ok(())
}
