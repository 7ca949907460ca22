//! Python bindings: GMN parsing, an in-process scene, OSC encoding and
//! offline rendering.

use std::borrow::Cow;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use pyo3::IntoPyObjectExt;

use notemotion::gmn;
use notemotion::osc::{self, OscArg, OscMessage, OscPacket};
use notemotion::rational;
use notemotion::render::{self, FrameSpec, StateFeed};
use notemotion::scene::{Effect, Scene as CoreScene};
use notemotion::sequencer;

create_exception!(notemotion_py, NotemotionError, PyException);

fn to_osc_arg(value: &Bound<'_, PyAny>) -> PyResult<OscArg> {
    if let Ok(v) = value.extract::<i32>() {
        return Ok(OscArg::Int(v));
    }
    if let Ok(v) = value.extract::<f64>() {
        return Ok(OscArg::Float(v as f32));
    }
    if let Ok(v) = value.extract::<String>() {
        return Ok(OscArg::Str(v));
    }
    if let Ok(v) = value.extract::<Cow<'_, [u8]>>() {
        return Ok(OscArg::Blob(v.into_owned()));
    }
    Err(PyValueError::new_err(format!(
        "cannot send {} as an OSC argument",
        value.get_type().name()?
    )))
}

fn from_osc_arg(py: Python<'_>, arg: &OscArg) -> PyResult<Py<PyAny>> {
    match arg {
        OscArg::Int(v) => v.into_py_any(py),
        OscArg::Float(v) => f64::from(*v).into_py_any(py),
        OscArg::Str(v) => v.into_py_any(py),
        OscArg::Blob(v) => PyBytes::new(py, v).into_py_any(py),
    }
}

fn message(address: String, args: &[Bound<'_, PyAny>]) -> PyResult<OscMessage> {
    let args = args.iter().map(to_osc_arg).collect::<PyResult<Vec<_>>>()?;
    Ok(OscMessage::new(address, args))
}

/// Parses GMN text and returns the score as a JSON string.
#[pyfunction]
fn parse_gmn(text: &str) -> PyResult<String> {
    let ast = gmn::parse(text).map_err(|e| NotemotionError::new_err(e.to_string()))?;
    serde_json::to_string(&ast).map_err(|e| NotemotionError::new_err(e.to_string()))
}

/// Re-prints GMN text in canonical form.
#[pyfunction]
fn format_gmn(text: &str) -> PyResult<String> {
    let ast = gmn::parse(text).map_err(|e| NotemotionError::new_err(e.to_string()))?;
    Ok(gmn::pretty(&ast))
}

#[pyfunction]
#[pyo3(signature = (address, *args))]
fn osc_encode<'py>(py: Python<'py>, address: String, args: Vec<Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyBytes>> {
    let packet = OscPacket::Message(message(address, &args)?);
    let bytes = osc::encode(&packet).map_err(|e| NotemotionError::new_err(e.to_string()))?;
    Ok(PyBytes::new(py, &bytes))
}

/// Decodes a datagram into `[(address, [args...]), ...]`, bundles
/// flattened.
#[pyfunction]
fn osc_decode(py: Python<'_>, data: &[u8]) -> PyResult<Vec<(String, Vec<Py<PyAny>>)>> {
    let packet = osc::decode(data).map_err(|e| NotemotionError::new_err(e.to_string()))?;
    packet
        .flatten()
        .into_iter()
        .map(|(_, m)| {
            let args = m
                .args
                .iter()
                .map(|a| from_osc_arg(py, a))
                .collect::<PyResult<Vec<_>>>()?;
            Ok((m.address.clone(), args))
        })
        .collect()
}

/// Renders a `.nms` script to SVG frames; returns the frame count.
#[pyfunction]
#[pyo3(signature = (script, out_dir, fps = 25, duration = None, width = 1280, height = 800))]
fn render_script(
    script: &str,
    out_dir: PathBuf,
    fps: u32,
    duration: Option<&str>,
    width: u32,
    height: u32,
) -> PyResult<usize> {
    let timeline = sequencer::load_script(script).map_err(|e| NotemotionError::new_err(e.to_string()))?;
    let duration = duration
        .map(|d| rational::parse_decimal(d).ok_or_else(|| PyValueError::new_err(format!("bad duration {d:?}"))))
        .transpose()?;
    let files = render::render_sequence(
        &timeline,
        &mut CoreScene::default(),
        fps,
        duration,
        &FrameSpec::new(width, height),
        &out_dir,
    )
    .map_err(|e| NotemotionError::new_err(e.to_string()))?;
    Ok(files.len())
}

/// A scene driven by messages in the engine's verb dialect.
#[pyclass(module = "notemotion_py")]
struct Scene {
    inner: CoreScene,
    feed: StateFeed,
    canvas: FrameSpec,
}

#[pymethods]
impl Scene {
    #[new]
    #[pyo3(signature = (width = 1280, height = 800))]
    fn new(width: u32, height: u32) -> Self {
        let canvas = FrameSpec::new(width, height);
        Scene {
            inner: CoreScene::default(),
            feed: StateFeed::new(canvas.clone()),
            canvas,
        }
    }

    /// Applies one message. Returns `get` replies as `(address, args)`;
    /// raises on rejection.
    #[pyo3(signature = (address, *args))]
    fn send(
        &mut self,
        py: Python<'_>,
        address: String,
        args: Vec<Bound<'_, PyAny>>,
    ) -> PyResult<Vec<(String, Vec<Py<PyAny>>)>> {
        let msg = message(address, &args)?;
        let effects = self
            .inner
            .dispatch_message(&msg)
            .map_err(|e| NotemotionError::new_err(e.to_string()))?;
        effects
            .into_iter()
            .filter_map(|e| match e {
                Effect::Reply(reply) => Some(reply),
                _ => None,
            })
            .map(|reply| {
                let args = reply
                    .args
                    .iter()
                    .map(|a| from_osc_arg(py, a))
                    .collect::<PyResult<Vec<_>>>()?;
                Ok((reply.address, args))
            })
            .collect()
    }

    /// Advances the transport by `seconds` (a decimal string keeps it
    /// exact).
    fn tick(&mut self, seconds: &Bound<'_, PyAny>) -> PyResult<()> {
        let dt = match seconds.extract::<String>() {
            Ok(text) => rational::parse_decimal(&text),
            Err(_) => rational::from_f64_thousandths(seconds.extract::<f64>()?),
        }
        .ok_or_else(|| PyValueError::new_err("bad time step"))?;
        self.inner.tick(dt).map_err(|e| NotemotionError::new_err(e.to_string()))
    }

    fn addresses(&self) -> Vec<String> {
        self.inner.nodes().map(|n| n.address.clone()).collect()
    }

    fn svg(&self) -> String {
        render::render_svg(&self.inner.snapshot(), &self.canvas)
    }

    /// Next scene-state document as JSON text.
    fn state(&mut self) -> String {
        self.feed.document(&self.inner.snapshot()).to_string()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pymodule]
fn notemotion_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NotemotionError", m.py().get_type::<NotemotionError>())?;
    m.add_class::<Scene>()?;
    m.add_function(wrap_pyfunction!(parse_gmn, m)?)?;
    m.add_function(wrap_pyfunction!(format_gmn, m)?)?;
    m.add_function(wrap_pyfunction!(osc_encode, m)?)?;
    m.add_function(wrap_pyfunction!(osc_decode, m)?)?;
    m.add_function(wrap_pyfunction!(render_script, m)?)?;
    Ok(())
}
