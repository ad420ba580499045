//! Python module `plotsieve`: ternary plot images, wafer synthesis,
//! recognizer training and loading, and cascade scans.

use std::collections::BTreeMap;
use std::path::PathBuf;

use plotsieve::cascade::Cascade;
use plotsieve::gan::{
    load_recognizer, save_checkpoint, train, Checkpoint, DiscriminatorConfig, GeneratorConfig, ProxyOnly,
    RecognizerKind, RecognizerModel, TrainingConfig,
};
use plotsieve::raster::{self, WaferRasterSpec};
use plotsieve::yielddata;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn py_err(e: plotsieve::Error) -> PyErr {
    match e {
        plotsieve::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_kind(kind: &str) -> PyResult<RecognizerKind> {
    match kind {
        "non-interesting" => Ok(RecognizerKind::NonInteresting),
        "interesting" => Ok(RecognizerKind::Interesting),
        other => Err(PyValueError::new_err(format!(
            "kind must be 'interesting' or 'non-interesting', got {other:?}"
        ))),
    }
}

/// A square ternary image with pixels in {-1, 0, 1}.
#[pyclass(name = "PlotImage", module = "plotsieve", skip_from_py_object)]
#[derive(Clone)]
struct PyPlotImage(raster::PlotImage);

#[pymethods]
impl PyPlotImage {
    #[new]
    fn new(side: usize, pixels: Vec<i8>) -> PyResult<Self> {
        raster::PlotImage::new(side, pixels).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn from_tern(text: &str) -> PyResult<Self> {
        raster::parse_tern(text, "<python>").map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        raster::read_image(path).map(Self).map_err(py_err)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        raster::write_image(&self.0, path).map_err(py_err)
    }

    fn to_tern(&self) -> String {
        raster::to_tern_string(&self.0)
    }

    #[getter]
    fn side(&self) -> usize {
        self.0.side()
    }

    #[getter]
    fn pixels(&self) -> Vec<i8> {
        self.0.pixels().to_vec()
    }

    fn count(&self, value: i8) -> usize {
        self.0.count(value)
    }

    fn rotate(&self, degrees: f64) -> Self {
        Self(raster::rotate(&self.0, degrees))
    }

    #[pyo3(signature = (scale=4))]
    fn png<'py>(&self, py: Python<'py>, scale: usize) -> PyResult<Bound<'py, PyBytes>> {
        let bytes = raster::png_bytes(&self.0, scale).map_err(py_err)?;
        Ok(PyBytes::new(py, &bytes))
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0.same_pixels(&other.0)
    }

    fn __repr__(&self) -> String {
        format!("PlotImage(side={}, fails={}, passes={})", self.0.side(), self.0.count(1), self.0.count(-1))
    }
}

/// A trained recognizer: a discriminator plus its acceptance threshold.
#[pyclass(name = "Recognizer", module = "plotsieve", skip_from_py_object)]
#[derive(Clone)]
struct PyRecognizer(RecognizerModel);

#[pymethods]
impl PyRecognizer {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_recognizer(&path).map(Self).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&Checkpoint::Recognizer(self.0.clone()), &path).map_err(py_err)
    }

    #[getter]
    fn class_name(&self) -> &str {
        self.0.class_name()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.0.kind() {
            RecognizerKind::NonInteresting => "non-interesting",
            RecognizerKind::Interesting => "interesting",
        }
    }

    #[getter]
    fn tau(&self) -> f32 {
        self.0.tau()
    }

    fn scores(&self, images: Vec<PyRef<'_, PyPlotImage>>) -> PyResult<Vec<f32>> {
        let refs: Vec<&raster::PlotImage> = images.iter().map(|i| &i.0).collect();
        self.0.scores(&refs).map_err(py_err)
    }

    fn accepts(&self, image: &PyPlotImage) -> PyResult<bool> {
        self.0.recognize(&image.0).map(|r| r.accepted).map_err(py_err)
    }
}

/// Ordered recognizers; each plot goes to the first one that accepts it.
#[pyclass(name = "Cascade", module = "plotsieve")]
struct PyCascade(Cascade);

#[pymethods]
impl PyCascade {
    #[new]
    #[pyo3(signature = (side=48, policy="python"))]
    fn new(side: usize, policy: &str) -> Self {
        Self(Cascade::new(side, policy))
    }

    fn push(&mut self, recognizer: &PyRecognizer) -> PyResult<()> {
        self.0.push(recognizer.0.clone()).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Returns `(recognizer ids, accepted ids per recognizer, residual ids)`.
    fn scan(&self, plots: BTreeMap<String, PyRef<'_, PyPlotImage>>) -> PyResult<(Vec<String>, Vec<Vec<String>>, Vec<String>)> {
        let plots: Vec<(String, raster::PlotImage)> = plots.into_iter().map(|(id, im)| (id, im.0.clone())).collect();
        let part = self.0.scan(&plots).map_err(py_err)?;
        Ok((part.recognizers, part.buckets, part.residual))
    }
}

/// `n` synthetic wafers of one failure class, rasterized (fails marked).
#[pyfunction]
#[pyo3(signature = (class_name, n, seed, diameter=52))]
fn synth_wafer_plots(class_name: &str, n: usize, seed: u64, diameter: u32) -> PyResult<Vec<PyPlotImage>> {
    let spec = WaferRasterSpec::default();
    yielddata::synth_class_wafers(class_name, diameter, n, seed)
        .map_err(py_err)?
        .iter()
        .map(|w| raster::raster_wafer(&w.wafer, &spec).map(PyPlotImage).map_err(py_err))
        .collect()
}

/// Each image plus `n - 1` evenly spaced rotations.
#[pyfunction]
#[pyo3(signature = (images, n=12))]
fn rotate_augment(images: Vec<PyRef<'_, PyPlotImage>>, n: usize) -> Vec<PyPlotImage> {
    images.iter().flat_map(|im| raster::rotate_augment(&im.0, n)).map(PyPlotImage).collect()
}

/// Box-plot statistics as a dict.
#[pyfunction]
fn boxplot_stats(py: Python<'_>, values: Vec<f64>) -> PyResult<Py<PyAny>> {
    let s = yielddata::boxplot_stats(&values).map_err(py_err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("median", s.median)?;
    d.set_item("q1", s.q1)?;
    d.set_item("q3", s.q3)?;
    d.set_item("whisker_lo", s.whisker_lo)?;
    d.set_item("whisker_hi", s.whisker_hi)?;
    d.set_item("outliers", s.outliers)?;
    Ok(d.into_any().unbind())
}

/// Trains a recognizer with the reduced presets and the automated stop
/// rule. Returns the recognizer and the training report as JSON text.
#[pyfunction]
#[pyo3(signature = (train_images, val_images, class_name, kind="interesting", max_iterations=2000, seed=1))]
fn train_recognizer(
    py: Python<'_>,
    train_images: Vec<PyRef<'_, PyPlotImage>>,
    val_images: Vec<PyRef<'_, PyPlotImage>>,
    class_name: &str,
    kind: &str,
    max_iterations: usize,
    seed: u64,
) -> PyResult<(PyRecognizer, String)> {
    let kind = parse_kind(kind)?;
    let tr: Vec<raster::PlotImage> = train_images.iter().map(|i| i.0.clone()).collect();
    let va: Vec<raster::PlotImage> = val_images.iter().map(|i| i.0.clone()).collect();
    let cfg = TrainingConfig {
        max_iterations,
        seed,
        ..TrainingConfig::reduced()
    };
    let class_name = class_name.to_string();
    let outcome = py
        .detach(move || {
            train(
                &tr,
                &va,
                &class_name,
                kind,
                &DiscriminatorConfig::reduced(),
                &GeneratorConfig::reduced(),
                &cfg,
                &mut ProxyOnly,
            )
        })
        .map_err(py_err)?;
    let report = serde_json::to_string(&outcome.report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((PyRecognizer(outcome.model), report))
}

#[pymodule(name = "plotsieve")]
fn plotsieve_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPlotImage>()?;
    m.add_class::<PyRecognizer>()?;
    m.add_class::<PyCascade>()?;
    m.add_function(wrap_pyfunction!(synth_wafer_plots, m)?)?;
    m.add_function(wrap_pyfunction!(rotate_augment, m)?)?;
    m.add_function(wrap_pyfunction!(boxplot_stats, m)?)?;
    m.add_function(wrap_pyfunction!(train_recognizer, m)?)?;
    Ok(())
}
