//! Python bindings. Scenes, configs and predictions cross the boundary as
//! JSON strings.

use std::path::Path;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use goalgraph::geometry::Pose2;
use goalgraph::metrics::{default_ks, evaluate as evaluate_scenes};
use goalgraph::model::{Model, ModelConfig};
use goalgraph::render::render_svg;
use goalgraph::scenegraph::{relative_edge_feature, Scene};
use goalgraph::synthgen::{gen_dataset, load_dataset, MapStyle, Timing};
use goalgraph::training::{train as train_model, TrainConfig, TrainOptions};
use goalgraph::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Numeric(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_scene(text: &str) -> PyResult<Scene> {
    Scene::from_json_str(text, Path::new("<python>")).map_err(py_err)
}

fn model_config(json: Option<&str>) -> PyResult<ModelConfig> {
    match json {
        Some(t) => ModelConfig::from_json_str(t, Path::new("<python>")).map_err(py_err),
        None => Ok(ModelConfig::default()),
    }
}

/// Synthetic scenes of style "A" or "B", as JSON strings.
#[pyfunction]
#[pyo3(signature = (style, n, seed=0))]
fn generate(style: &str, n: usize, seed: u64) -> PyResult<Vec<String>> {
    if n == 0 {
        return Err(PyValueError::new_err("n must be at least 1"));
    }
    let style = MapStyle::by_name(style).map_err(py_err)?;
    let scenes = gen_dataset(&style, &Timing::default(), n, seed, 1).map_err(py_err)?;
    Ok(scenes.iter().map(|s| s.to_json_string()).collect())
}

/// Relative edge feature `(sin a, cos a, sin phi, cos phi, d, dt)` between two poses.
#[pyfunction]
fn edge_feature(m: (f64, f64, f64), n: (f64, f64, f64)) -> PyResult<[f64; 6]> {
    let f = relative_edge_feature(&Pose2::new(m.0, m.1, m.2), &Pose2::new(n.0, n.1, n.2), None)
        .map_err(py_err)?;
    Ok(f.to_array())
}

#[pyclass(name = "Model")]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    /// Fresh, untrained model.
    #[new]
    #[pyo3(signature = (config_json=None, seed=0))]
    fn new(config_json: Option<&str>, seed: u64) -> PyResult<Self> {
        let cfg = model_config(config_json)?;
        Ok(Self {
            inner: Model::new(cfg, seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Model::load(Path::new(path), None).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner
            .checkpoint(serde_json::Value::Null)
            .save(Path::new(path))
            .map_err(py_err)
    }

    #[getter]
    fn config_json(&self) -> String {
        serde_json::to_string(&self.inner.cfg).expect("config serializes")
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.inner.store.num_scalars()
    }

    /// Mode predictions for one scene, as a JSON array.
    fn predict(&self, scene_json: &str) -> PyResult<String> {
        let scene = parse_scene(scene_json)?;
        let preds = self.inner.predict(&scene).map_err(py_err)?;
        Ok(serde_json::to_string(&preds).expect("predictions serialize"))
    }

    fn render_svg(&self, scene_json: &str) -> PyResult<String> {
        let scene = parse_scene(scene_json)?;
        let preds = self.inner.predict(&scene).map_err(py_err)?;
        Ok(render_svg(&scene, &preds))
    }

    /// Metrics over a dataset directory, as a JSON object.
    fn evaluate(&self, data_dir: &str) -> PyResult<String> {
        let scenes = load_dataset(Path::new(data_dir)).map_err(py_err)?;
        let ks = default_ks(self.inner.cfg.k);
        let r = evaluate_scenes(&self.inner, &scenes, &ks, false).map_err(py_err)?;
        Ok(serde_json::to_string(&r).expect("report serializes"))
    }
}

/// Train on a dataset directory; returns the model and per-epoch losses.
#[pyfunction]
#[pyo3(signature = (data_dir, model_config_json=None, train_config_json=None, out_dir=None))]
fn train(
    data_dir: &str,
    model_config_json: Option<&str>,
    train_config_json: Option<&str>,
    out_dir: Option<&str>,
) -> PyResult<(PyModel, Vec<f64>)> {
    let mc = model_config(model_config_json)?;
    let tc = match train_config_json {
        Some(t) => TrainConfig::from_json_str(t, Path::new("<python>")).map_err(py_err)?,
        None => TrainConfig::default(),
    };
    let scenes = load_dataset(Path::new(data_dir)).map_err(py_err)?;
    let opts = TrainOptions {
        out_dir: out_dir.map(Into::into),
        workers: 1,
    };
    let out = train_model(&mc, &tc, &scenes, &opts, |_, _| true).map_err(py_err)?;
    let losses = out.logs.iter().map(|l| l.loss).collect();
    Ok((PyModel { inner: out.model }, losses))
}

#[pymodule]
fn pygoalgraph(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(edge_feature, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_class::<PyModel>()?;
    Ok(())
}
