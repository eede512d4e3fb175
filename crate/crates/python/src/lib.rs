//! Python module `pmdkit`.

use std::collections::HashMap;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyTuple};

use pmd_toolkit::clt;
use pmd_toolkit::cover::{self, CoverParams};
use pmd_toolkit::fourier::DftHypothesis;
use pmd_toolkit::games::{self, AnonymousGame, MixedStrategyProfile};
use pmd_toolkit::learner::{self, LearnerParams, PmdSource, VecSource};
use pmd_toolkit::linalg::{self, IntegerMatrix};
use pmd_toolkit::model::{self, CategoricalRv, DensePmf};
use pmd_toolkit::rng::stream_rng;
use pmd_toolkit::sampler::{self, CdfOracle};

create_exception!(pmdkit, PmdError, PyException);

fn py_err(e: pmd_toolkit::Error) -> PyErr {
    PmdError::new_err(format!("{} (exit code {})", e, e.exit_code()))
}

type PmfDict = HashMap<Vec<i64>, f64>;

/// `{point tuple: probability}`.
fn pmf_dict<'py>(py: Python<'py>, pmf: &DensePmf) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (x, p) in pmf.support() {
        d.set_item(PyTuple::new(py, x)?, p)?;
    }
    Ok(d)
}

/// Sum of independent categorical random variables.
#[pyclass(name = "Pmd", module = "pmdkit", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyPmd {
    inner: model::Pmd,
}

#[pymethods]
impl PyPmd {
    /// `rows[i]` holds the outcome probabilities of component `i`.
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyPmd { inner: model::Pmd::from_probs(rows).map_err(py_err)? })
    }

    #[staticmethod]
    fn random(n: usize, k: usize, seed: u64) -> Self {
        PyPmd { inner: model::random_pmd(&mut stream_rng(seed, "python/random_pmd"), n, k) }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyPmd { inner: model::Pmd::from_json(text).map_err(py_err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    fn components(&self) -> Vec<Vec<f64>> {
        self.inner.components().iter().map(|c| c.probs().to_vec()).collect()
    }

    /// Exact PMF as `{point: probability}`.
    fn pmf<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        pmf_dict(py, &model::exact_pmf(&self.inner).map_err(py_err)?)
    }

    fn sample(&self, count: usize, seed: u64) -> Vec<Vec<i64>> {
        model::sample_parallel(&self.inner, seed, count)
    }

    fn mean_cov(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (mean, cov) = model::mean_cov(&self.inner);
        let rows = cov.row_iter().map(|r| r.iter().copied().collect()).collect();
        (mean, rows)
    }

    fn __repr__(&self) -> String {
        format!("Pmd(n={}, k={})", self.inner.n(), self.inner.k())
    }
}

/// Succinct DFT hypothesis produced by the learner.
#[pyclass(name = "Hypothesis", module = "pmdkit", frozen)]
pub struct PyHypothesis {
    inner: DftHypothesis,
}

#[pymethods]
impl PyHypothesis {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyHypothesis { inner: DftHypothesis::from_json(text).map_err(py_err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn domain_size(&self) -> i64 {
        self.inner.domain_size()
    }

    fn evaluate(&self, x: Vec<i64>) -> PyResult<f64> {
        if x.len() != self.inner.k() {
            return Err(py_err(pmd_toolkit::Error::DimensionMismatch { expected: self.inner.k(), found: x.len() }));
        }
        Ok(learner::evaluate(&self.inner, &x))
    }

    /// Negative values clipped, rest renormalized; also returns the clipped mass.
    fn clipped_pmf<'py>(&self, py: Python<'py>) -> PyResult<(Bound<'py, PyDict>, f64)> {
        let (pmf, neg) = learner::clip_renormalize(&self.inner).map_err(py_err)?;
        Ok((pmf_dict(py, &pmf)?, neg))
    }

    #[pyo3(signature = (count, seed, epsilon = 0.1))]
    fn sample(&self, count: usize, seed: u64, epsilon: f64) -> PyResult<Vec<Vec<i64>>> {
        let oracle = CdfOracle::new(&self.inner, epsilon).map_err(py_err)?;
        Ok(sampler::draw_many(&oracle, &mut stream_rng(seed, "python/sample"), count))
    }
}

fn learner_params(epsilon: f64, seed: u64, c: Option<f64>, m: Option<usize>) -> LearnerParams {
    let mut p = LearnerParams::new(epsilon);
    p.seed = seed;
    p.m = m;
    if let Some(c) = c {
        p.c = c;
    }
    p
}

/// Learns from draws of `pmd`.
#[pyfunction]
#[pyo3(signature = (pmd, epsilon, seed = 0, c = None, m = None))]
fn learn(pmd: &PyPmd, epsilon: f64, seed: u64, c: Option<f64>, m: Option<usize>) -> PyResult<PyHypothesis> {
    let params = learner_params(epsilon, seed, c, m);
    let mut src = PmdSource::new(&pmd.inner, seed);
    let inner = learner::learn(&mut src, pmd.inner.k(), &params).map_err(py_err)?;
    Ok(PyHypothesis { inner })
}

/// Learns from an explicit list of samples.
#[pyfunction]
#[pyo3(signature = (samples, k, epsilon, seed = 0, c = None, m = None))]
fn learn_from_samples(
    samples: Vec<Vec<i64>>,
    k: usize,
    epsilon: f64,
    seed: u64,
    c: Option<f64>,
    m: Option<usize>,
) -> PyResult<PyHypothesis> {
    let params = learner_params(epsilon, seed, c, m);
    let mut src = VecSource::new(samples);
    let inner = learner::learn(&mut src, k, &params).map_err(py_err)?;
    Ok(PyHypothesis { inner })
}

/// Total variation between two `{point: probability}` dicts.
#[pyfunction]
fn tv_distance(p: PmfDict, q: PmfDict) -> f64 {
    let mut total: f64 = p.iter().map(|(x, a)| (a - q.get(x).copied().unwrap_or(0.0)).abs()).sum();
    total += q.iter().filter(|(x, _)| !p.contains_key(*x)).map(|(_, b)| b.abs()).sum::<f64>();
    total / 2.0
}

fn matrix(rows: Vec<Vec<i64>>) -> PyResult<IntegerMatrix> {
    IntegerMatrix::new(rows).map_err(py_err)
}

/// `(U, D, V)` with `U D V = M`.
#[pyfunction]
fn smith_normal_form(rows: Vec<Vec<i64>>) -> PyResult<(Vec<Vec<i64>>, Vec<Vec<i64>>, Vec<Vec<i64>>)> {
    let s = linalg::smith_normal_form(&matrix(rows)?).map_err(py_err)?;
    Ok((s.u.rows(), s.d.rows(), s.v.rows()))
}

/// Representative of `x + M Z^k` in `anchor + M(-1/2, 1/2]^k`.
#[pyfunction]
fn reduce(rows: Vec<Vec<i64>>, anchor: Vec<f64>, x: Vec<i64>) -> PyResult<Vec<i64>> {
    linalg::reduce_to_fundamental_domain(&matrix(rows)?, &anchor, &x).map_err(py_err)
}

fn cover_params(epsilon: f64, gamma: Option<f64>, cap: Option<usize>) -> CoverParams {
    let mut p = match gamma {
        Some(g) => CoverParams::coarse(epsilon, g),
        None => CoverParams::new(epsilon),
    };
    if let Some(cap) = cap {
        p.cap = cap;
    }
    p
}

/// Proper cover of all `(n, k)`-PMDs. `gamma` selects the coarse settings.
#[pyfunction]
#[pyo3(signature = (n, k, epsilon, gamma = None, grid_step = None, cap = None))]
fn proper_cover(
    n: usize,
    k: usize,
    epsilon: f64,
    gamma: Option<f64>,
    grid_step: Option<f64>,
    cap: Option<usize>,
) -> PyResult<Vec<PyPmd>> {
    let out = cover::proper_cover(n, k, grid_step, &cover_params(epsilon, gamma, cap)).map_err(py_err)?;
    Ok(out.into_iter().map(|inner| PyPmd { inner }).collect())
}

/// Number of pairs of the lower-bound family with a separating moment.
#[pyfunction]
fn lower_bound_separated_pairs(k: usize, a: u32, t: u32, eps: &str, c: &str) -> PyResult<usize> {
    let parse = |s: &str| s.parse().map_err(|_| PmdError::new_err(format!("{s:?} is not a rational p/q")));
    let fam = cover::lower_bound_family(k, a, t, parse(eps)?, parse(c)?).map_err(py_err)?;
    let members = fam.functions();
    let mut pairs = 0;
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            cover::verify_moment_separation(&fam, &members[i], &members[j]).map_err(py_err)?;
            pairs += 1;
        }
    }
    Ok(pairs)
}

/// Anonymous game with `n` players and `k` strategies.
#[pyclass(name = "Game", module = "pmdkit", frozen)]
pub struct PyGame {
    inner: AnonymousGame,
}

#[pymethods]
impl PyGame {
    #[staticmethod]
    fn random(n: usize, k: usize, seed: u64) -> PyResult<Self> {
        let inner = AnonymousGame::random(&mut stream_rng(seed, "python/game"), n, k).map_err(py_err)?;
        Ok(PyGame { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyGame { inner: AnonymousGame::from_json(text).map_err(py_err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    /// Utility of player `i` playing `l` when the others' counts are `x`.
    fn utility(&self, i: usize, l: usize, x: Vec<usize>) -> PyResult<f64> {
        self.inner.utility(i, l, &x).map_err(py_err)
    }

    /// Well-supported epsilon-Nash certificate: `(ok, worst violation)`.
    fn certify(&self, profile: Vec<Vec<f64>>, epsilon: f64) -> PyResult<(bool, f64)> {
        let profile = profile_of(profile)?;
        games::is_ws_eps_nash(&self.inner, &profile, epsilon).map_err(py_err)
    }

    /// Mixed profile from the approximation scheme, one row per player.
    #[pyo3(signature = (epsilon, gamma = 10.0, cover_epsilon = 0.06, cap = 3_000_000))]
    fn nash(&self, epsilon: f64, gamma: f64, cover_epsilon: f64, cap: usize) -> PyResult<Vec<Vec<f64>>> {
        let params = cover_params(cover_epsilon, Some(gamma), Some(cap));
        let p = games::nash_eptas(&self.inner, epsilon, &params).map_err(py_err)?;
        Ok(p.strategies().iter().map(|s| s.probs().to_vec()).collect())
    }

    /// Approximate threat point of every player.
    #[pyo3(signature = (epsilon, gamma = 0.2))]
    fn threat_points(&self, epsilon: f64, gamma: f64) -> PyResult<Vec<f64>> {
        let params = CoverParams::coarse(epsilon, gamma);
        Ok(games::threat_points(&self.inner, epsilon, &params).map_err(py_err)?.theta)
    }
}

fn profile_of(rows: Vec<Vec<f64>>) -> PyResult<MixedStrategyProfile> {
    let crvs = rows.into_iter().map(CategoricalRv::new).collect::<pmd_toolkit::Result<Vec<_>>>().map_err(py_err)?;
    MixedStrategyProfile::new(crvs).map_err(py_err)
}

/// `(tv, sigma)` between a PMD and its matched discrete Gaussian.
#[pyfunction]
fn clt_tv(pmd: &PyPmd) -> PyResult<(f64, f64)> {
    clt::clt_tv(&pmd.inner).map_err(py_err)
}

/// `(n, sigma, tv)` for i.i.d. copies cycling through `crvs`.
#[pyfunction]
fn clt_sweep(crvs: Vec<Vec<f64>>, ns: Vec<usize>) -> PyResult<Vec<(usize, f64, f64)>> {
    let crvs = crvs.into_iter().map(CategoricalRv::new).collect::<pmd_toolkit::Result<Vec<_>>>().map_err(py_err)?;
    let pts = clt::clt_sweep(&crvs, &ns).map_err(py_err)?;
    Ok(pts.into_iter().map(|p| (p.n, p.sigma, p.tv)).collect())
}

#[pymodule]
fn pmdkit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PmdError", m.py().get_type::<PmdError>())?;
    m.add_class::<PyPmd>()?;
    m.add_class::<PyHypothesis>()?;
    m.add_class::<PyGame>()?;
    m.add_function(wrap_pyfunction!(learn, m)?)?;
    m.add_function(wrap_pyfunction!(learn_from_samples, m)?)?;
    m.add_function(wrap_pyfunction!(tv_distance, m)?)?;
    m.add_function(wrap_pyfunction!(smith_normal_form, m)?)?;
    m.add_function(wrap_pyfunction!(reduce, m)?)?;
    m.add_function(wrap_pyfunction!(proper_cover, m)?)?;
    m.add_function(wrap_pyfunction!(lower_bound_separated_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(clt_tv, m)?)?;
    m.add_function(wrap_pyfunction!(clt_sweep, m)?)?;
    Ok(())
}
