//! Python bindings: generate synthetic data, query the generator's oracles,
//! train and evaluate models, and score sessions.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dian::cli::RunConfig;
use dian::datamodel::{self, encode_sessions, ItemRef, OovPolicy, SeqCaps, SessionRecord};
use dian::models::{Checkpoint, DianModel, Variant};
use dian::numerics::ParamStore;
use dian::synthgen::{self, GenConfig, Sidecar};
use dian::training;

fn py_err(e: dian::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// Converts any serializable value into plain Python objects via `json.loads`.
fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn load_config(overrides: Vec<String>, config: Option<String>) -> PyResult<RunConfig> {
    RunConfig::load(config.as_deref().map(std::path::Path::new), &overrides).map_err(py_err)
}

/// The generator's ground truth: preferences, intent propensities and the
/// click model used to sample every session.
#[pyclass(name = "World", module = "dian_py", from_py_object)]
#[derive(Clone)]
pub struct PyWorld {
    inner: synthgen::World,
}

impl PyWorld {
    fn item(&self, item_id: usize) -> PyResult<ItemRef> {
        if item_id == 0 || item_id > self.inner.n_items {
            return Err(PyValueError::new_err(format!("item {item_id} out of range")));
        }
        Ok(ItemRef {
            item_id,
            category_id: self.inner.category_of(item_id),
            timestamp: 0,
        })
    }

    fn check_user(&self, user: usize) -> PyResult<()> {
        if user == 0 || user > self.inner.n_users {
            return Err(PyValueError::new_err(format!("user {user} out of range")));
        }
        Ok(())
    }
}

#[pymethods]
impl PyWorld {
    #[getter]
    fn n_users(&self) -> usize {
        self.inner.n_users
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.inner.n_items
    }

    #[getter]
    fn n_categories(&self) -> usize {
        self.inner.n_categories
    }

    fn category_of(&self, item_id: usize) -> PyResult<usize> {
        Ok(self.item(item_id)?.category_id)
    }

    /// True probability that a session was caused by the trigger.
    fn session_intent_prob(&self, user: usize, trigger_category: usize) -> PyResult<f64> {
        self.check_user(user)?;
        Ok(self.inner.session_intent_prob(user, trigger_category))
    }

    fn true_click_prob(&self, user: usize, intent: u8, candidate_item: usize, trigger_item: usize) -> PyResult<f64> {
        self.check_user(user)?;
        if intent > 1 {
            return Err(PyValueError::new_err("intent must be 0 or 1"));
        }
        Ok(self.inner.true_click_prob(user, intent, &self.item(candidate_item)?, &self.item(trigger_item)?))
    }

    /// Bayes-optimal click probability.
    fn bayes_ctr(&self, user: usize, candidate_item: usize, trigger_item: usize) -> PyResult<f64> {
        self.check_user(user)?;
        Ok(self.inner.bayes_ctr(user, &self.item(candidate_item)?, &self.item(trigger_item)?))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// A generated world with its train/test sessions.
#[pyclass(module = "dian_py")]
pub struct Dataset {
    gen: GenConfig,
    sidecar: Sidecar,
    world: synthgen::World,
    train: Vec<SessionRecord>,
    test: Vec<SessionRecord>,
}

impl Dataset {
    fn split(&self, name: &str) -> PyResult<&[SessionRecord]> {
        match name {
            "train" => Ok(&self.train),
            "test" => Ok(&self.test),
            _ => Err(PyValueError::new_err("split must be 'train' or 'test'")),
        }
    }
}

#[pymethods]
impl Dataset {
    #[getter]
    fn world(&self) -> PyWorld {
        PyWorld { inner: self.world.clone() }
    }

    #[getter]
    fn num_train(&self) -> usize {
        self.train.len()
    }

    #[getter]
    fn num_test(&self) -> usize {
        self.test.len()
    }

    /// Base rates and the CTR-gap-by-visit-frequency table of all sessions.
    fn summary(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let all: Vec<SessionRecord> = self.train.iter().chain(&self.test).cloned().collect();
        to_py(py, &synthgen::summarize(&all))
    }

    /// One session as a JSON string, in the JSONL record format.
    #[pyo3(signature = (index, split = "test"))]
    fn record_json(&self, index: usize, split: &str) -> PyResult<String> {
        let recs = self.split(split)?;
        let r = recs
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("index {index} out of range")))?;
        serde_json::to_string(r).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// Writes train.jsonl, test.jsonl and sidecar.json, as `dian generate` does.
    fn write(&self, dir: &str) -> PyResult<()> {
        let dir = std::path::Path::new(dir);
        std::fs::create_dir_all(dir).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        datamodel::io::write_jsonl(&dir.join("train.jsonl"), &self.train).map_err(py_err)?;
        datamodel::io::write_jsonl(&dir.join("test.jsonl"), &self.test).map_err(py_err)?;
        let side = serde_json::to_vec_pretty(&self.sidecar).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        std::fs::write(dir.join("sidecar.json"), side).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// Scores the split with the Bayes-optimal oracle.
    #[pyo3(signature = (split = "test"))]
    fn oracle_report(&self, py: Python<'_>, split: &str) -> PyResult<Py<PyAny>> {
        let batch = encode_sessions(self.split(split)?, &self.sidecar.vocab, SeqCaps::default(), OovPolicy::Reject)
            .map_err(py_err)?;
        to_py(py, &training::evaluate_oracle(&self.world, &batch).map_err(py_err)?)
    }

    #[getter]
    fn config(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.gen)
    }
}

/// Samples a world and a dataset. `overrides` use the CLI's dotted keys,
/// e.g. `["gen.sessions=2000"]`.
#[pyfunction]
#[pyo3(signature = (overrides = Vec::new(), config = None))]
fn generate(overrides: Vec<String>, config: Option<String>) -> PyResult<Dataset> {
    let cfg = load_config(overrides, config)?;
    cfg.gen.validate().map_err(py_err)?;
    let world = synthgen::generate_world(&cfg.gen);
    let (train, test) = synthgen::split_train_test(synthgen::generate_dataset(&world, &cfg.gen), cfg.gen.test_fraction);
    Ok(Dataset {
        sidecar: Sidecar::for_world(&world, &cfg.gen),
        gen: cfg.gen,
        world,
        train,
        test,
    })
}

/// A model variant and its parameters.
#[pyclass(module = "dian_py")]
pub struct Model {
    model: DianModel,
    store: ParamStore,
}

impl Model {
    fn encode(&self, recs: &[SessionRecord], policy: OovPolicy) -> PyResult<datamodel::EncodedBatch> {
        let caps = SeqCaps {
            short: self.model.config.k_short,
            long: self.model.config.k_long,
        };
        encode_sessions(recs, &self.model.vocab, caps, policy).map_err(py_err)
    }
}

#[pymethods]
impl Model {
    /// A freshly initialised model sized for `dataset`'s vocabulary.
    #[new]
    #[pyo3(signature = (dataset, variant = "DIAN", overrides = Vec::new()))]
    fn new(dataset: &Dataset, variant: &str, overrides: Vec<String>) -> PyResult<Self> {
        let mut cfg = load_config(overrides, None)?;
        cfg.model.variant = variant.parse::<Variant>().map_err(py_err)?;
        let model = DianModel::new(cfg.model, dataset.sidecar.vocab).map_err(py_err)?;
        let store = model.init_params();
        Ok(Model { model, store })
    }

    #[getter]
    fn variant(&self) -> String {
        self.model.variant().to_string()
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    /// Trains from the current parameters; returns the metrics history.
    #[pyo3(signature = (dataset, overrides = Vec::new()))]
    fn train(&mut self, py: Python<'_>, dataset: &Dataset, overrides: Vec<String>) -> PyResult<Py<PyAny>> {
        let cfg = load_config(overrides, None)?;
        let train_b = self.encode(&dataset.train, OovPolicy::Reject)?;
        let test_b = self.encode(&dataset.test, OovPolicy::Reject)?;
        let eval = (test_b.num_rows() > 0).then_some(&test_b);
        let store = self.store.clone();
        let out = training::train_from(&self.model, store, &train_b, eval, Some(&dataset.world), &cfg.train, |_| Ok(()))
            .map_err(py_err)?;
        self.store = out.store;
        to_py(py, &out.history)
    }

    #[pyo3(signature = (dataset, split = "test"))]
    fn evaluate(&self, py: Python<'_>, dataset: &Dataset, split: &str) -> PyResult<Py<PyAny>> {
        let b = self.encode(dataset.split(split)?, OovPolicy::Reject)?;
        let rep = training::evaluate(&self.model, &self.store, &b, Some(&dataset.world)).map_err(py_err)?;
        to_py(py, &rep)
    }

    /// Per-candidate `y_hat`, `y_int`, `y_tan`, `y_tfn` for one JSON session.
    fn predict(&self, py: Python<'_>, record_json: &str) -> PyResult<Py<PyAny>> {
        let rec: SessionRecord =
            serde_json::from_str(record_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let b = self.encode(std::slice::from_ref(&rec), OovPolicy::MapToUnknown)?;
        let t = self.model.forward(&self.store, &b).map_err(py_err)?;
        let rows: Vec<serde_json::Value> = (0..b.num_rows())
            .map(|r| {
                serde_json::json!({
                    "item_id": rec.candidates[r].item.item_id,
                    "y_hat": t.y_hat[r],
                    "y_int": t.y_int.as_ref().map(|v| v[r]),
                    "y_tan": t.y_tan.as_ref().map(|v| v[r]),
                    "y_tfn": t.y_tfn.as_ref().map(|v| v[r]),
                })
            })
            .collect();
        to_py(py, &rows)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        Checkpoint::from_store(&self.model, &self.store)
            .save(std::path::Path::new(path))
            .map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (model, store) = Checkpoint::load(std::path::Path::new(path))
            .and_then(Checkpoint::into_model)
            .map_err(py_err)?;
        Ok(Model { model, store })
    }
}

/// Exact ROC AUC with ties counted half.
#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<f64>) -> PyResult<f64> {
    training::auc(&scores, &labels).map_err(py_err)
}

/// 1 iff a post-entry click hits the trigger item or its category.
/// Items are `(item_id, category_id)` pairs.
#[pyfunction]
fn posterior_intention_label(trigger: (usize, usize), clicks: Vec<(usize, usize)>) -> u8 {
    let as_ref = |(item_id, category_id): (usize, usize)| ItemRef {
        item_id,
        category_id,
        timestamp: 0,
    };
    let clicks: Vec<ItemRef> = clicks.into_iter().map(as_ref).collect();
    datamodel::posterior_intention_label(&as_ref(trigger), &clicks)
}

#[pyfunction]
fn visit_bucket(monthly_visit_count: u32) -> usize {
    datamodel::visit_bucket(monthly_visit_count)
}

#[pyfunction]
fn stay_bucket(avg_stay_seconds: f64) -> usize {
    datamodel::stay_bucket(avg_stay_seconds)
}

/// Runs the whole-model gradient check; returns the worst coordinates.
#[pyfunction]
#[pyo3(signature = (overrides = Vec::new(), coords = 240, seed = 0))]
fn gradcheck(py: Python<'_>, overrides: Vec<String>, coords: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let cfg = load_config(overrides, None)?;
    let rep = dian::cli::run_gradcheck(&cfg, coords, seed, false).map_err(py_err)?;
    let worst: Vec<serde_json::Value> = rep
        .worst(5)
        .iter()
        .map(|c| serde_json::json!({"name": c.coord.name, "index": c.coord.index, "rel_err": c.rel_err}))
        .collect();
    let summary = serde_json::json!({
        "max_rel_err": rep.max_rel_err,
        "coordinates": rep.checks.len(),
        "tables": rep.tables_covered().len(),
        "worst": worst,
    });
    to_py(py, &summary)
}

/// Every configuration key with its default.
#[pyfunction]
fn config_keys() -> String {
    dian::cli::config_keys_help()
}

#[pymodule]
fn dian_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWorld>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(posterior_intention_label, m)?)?;
    m.add_function(wrap_pyfunction!(visit_bucket, m)?)?;
    m.add_function(wrap_pyfunction!(stay_bucket, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(config_keys, m)?)?;
    Ok(())
}
