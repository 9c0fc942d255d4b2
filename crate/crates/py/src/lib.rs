//! Python bindings: solar geometry, sweep generation, attack scoring,
//! closed-loop simulation, and the luminosity-filter defense.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use shadowlane_core::attack::{calibrate_threshold, diff_lanes, SweepRun};
use shadowlane_core::compositor::{compose, GroundMap};
use shadowlane_core::defense::{luminosity_filter, DefenseParams};
use shadowlane_core::detector::Detector;
use shadowlane_core::raster::Rgb8Image;
use shadowlane_core::scene::standard_scenes;
use shadowlane_core::sim::{self, ScenarioSpec};
use shadowlane_core::solar::{
    shadow_length as sl_shadow_length, sun_position, CivilInstant, Observer, OccluderSpec,
};
use shadowlane_core::sweep::{generate_sweep, PurgeVariant, SweepBounds};

fn err(e: shadowlane_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// One negative-shadow stripe configuration.
#[pyclass(name = "NsConfig")]
#[derive(Clone)]
struct PyNsConfig {
    inner: shadowlane_core::sweep::NsConfig,
}

#[pymethods]
impl PyNsConfig {
    #[new]
    #[pyo3(signature = (width_m, length_m, beta_deg, distance_m, brightness=1.8))]
    fn new(
        width_m: f64,
        length_m: f64,
        beta_deg: f64,
        distance_m: f64,
        brightness: f64,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: shadowlane_core::sweep::NsConfig::new(
                width_m, length_m, beta_deg, distance_m, brightness,
            )
            .map_err(err)?,
        })
    }

    #[getter]
    fn width_m(&self) -> f64 {
        self.inner.width_m
    }
    #[getter]
    fn length_m(&self) -> f64 {
        self.inner.length_m
    }
    #[getter]
    fn beta_deg(&self) -> f64 {
        self.inner.beta_deg
    }
    #[getter]
    fn distance_m(&self) -> f64 {
        self.inner.distance_m
    }
    #[getter]
    fn brightness(&self) -> f64 {
        self.inner.brightness
    }

    fn __repr__(&self) -> String {
        format!(
            "NsConfig(width_m={}, length_m={}, beta_deg={}, distance_m={}, brightness={})",
            self.inner.width_m,
            self.inner.length_m,
            self.inner.beta_deg,
            self.inner.distance_m,
            self.inner.brightness
        )
    }
}

fn parse_variant(variant: &str) -> PyResult<PurgeVariant> {
    variant.parse().map_err(err)
}

/// Solar azimuth/altitude (degrees) for a UTC instant and observer.
#[pyfunction]
fn solar_position(
    year: i32,
    month: u32,
    day: u32,
    hour_utc: f64,
    lat: f64,
    lon: f64,
) -> PyResult<(f64, f64)> {
    let t = CivilInstant::new(year, month, day, hour_utc).map_err(err)?;
    let obs = Observer::new(lat, lon).map_err(err)?;
    let s = sun_position(t, obs);
    Ok((s.azimuth_deg(), s.altitude_deg()))
}

/// Shadow length (meters) of a mounted panel at the given sun altitude.
#[pyfunction]
#[pyo3(signature = (height_m, length_m, tilt_deg, altitude_deg))]
fn shadow_length(height_m: f64, length_m: f64, tilt_deg: f64, altitude_deg: f64) -> PyResult<f64> {
    let occ = OccluderSpec::new(height_m, length_m, tilt_deg).map_err(err)?;
    sl_shadow_length(&occ, altitude_deg).map_err(err)
}

/// Purged sweep as a list of NsConfig; variant is "literal" or "geometric".
#[pyfunction]
#[pyo3(signature = (variant="literal"))]
fn sweep_configs(variant: &str) -> PyResult<Vec<PyNsConfig>> {
    let configs = generate_sweep(&SweepBounds::default(), parse_variant(variant)?);
    Ok(configs.into_iter().map(|inner| PyNsConfig { inner }).collect())
}

/// Raw grid size and purged count for a variant.
#[pyfunction]
#[pyo3(signature = (variant="literal"))]
fn sweep_counts(variant: &str) -> PyResult<(usize, usize)> {
    let bounds = SweepBounds::default();
    let purged = generate_sweep(&bounds, parse_variant(variant)?).len();
    Ok((bounds.raw_grid_size(), purged))
}

/// Compose one config onto a standard scene and score the attack with the
/// reference detector. Returns {"added", "removed", "success"}.
#[pyfunction]
#[pyo3(signature = (cfg, scene=0, seed=42, shade_factor=0.55))]
fn evaluate_attack<'py>(
    py: Python<'py>,
    cfg: &PyNsConfig,
    scene: usize,
    seed: u64,
    shade_factor: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let scenes = standard_scenes(seed).map_err(err)?;
    let scene = scenes
        .get(scene)
        .ok_or_else(|| PyValueError::new_err(format!("scene {scene} out of range")))?;
    let detector = Detector::reference();
    let pre = detector.run(&scene.image, &scene.calib()).map_err(err)?;
    let ground = GroundMap::for_scene(scene);
    let composed = compose(scene, &ground, &cfg.inner, shade_factor).map_err(err)?;
    let post = detector.run(&composed.image, &scene.calib()).map_err(err)?;
    let threshold = calibrate_threshold(std::slice::from_ref(&pre)).map_err(err)?;
    let (added, removed, success) = diff_lanes(&pre, &post, threshold).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("added", added)?;
    out.set_item("removed", removed)?;
    out.set_item("success", success)?;
    Ok(out)
}

/// Closed-loop scenario run. Returns the safety verdict as a dict.
#[pyfunction]
#[pyo3(signature = (scenario, speed_mph, ns_length_m, seed=42))]
fn simulate<'py>(
    py: Python<'py>,
    scenario: u8,
    speed_mph: f64,
    ns_length_m: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = ScenarioSpec::standard(scenario).map_err(err)?;
    let detector = Detector::reference();
    let run = sim::run_scenario(&spec, speed_mph, ns_length_m, &detector, seed, None).map_err(err)?;
    let v = run.verdict;
    let out = PyDict::new(py);
    out.set_item("attack_success", v.attack_success)?;
    out.set_item("reaction_time_s", v.reaction_time_s)?;
    out.set_item("takeover_preventable", v.takeover_preventable)?;
    out.set_item("combined", v.combined)?;
    out.set_item("inconclusive", v.inconclusive)?;
    out.set_item("frames", run.trajectory.len())?;
    Ok(out)
}

/// Apply the luminosity-filter defense to an image file (PNG or PPM).
#[pyfunction]
#[pyo3(signature = (input_path, output_path, anomaly_threshold=18.0, enclosure_ratio=0.7))]
fn defend_image(
    input_path: &str,
    output_path: &str,
    anomaly_threshold: f64,
    enclosure_ratio: f64,
) -> PyResult<usize> {
    let image = Rgb8Image::read_auto(std::path::Path::new(input_path)).map_err(err)?;
    let params = DefenseParams {
        anomaly_threshold,
        enclosure_ratio,
        ..DefenseParams::default()
    };
    let filtered = luminosity_filter(&image, &params).map_err(err)?;
    filtered
        .write_auto(std::path::Path::new(output_path))
        .map_err(err)?;
    Ok(image
        .data
        .iter()
        .zip(filtered.data.iter())
        .filter(|(a, b)| a != b)
        .count()
        / 3)
}

#[pymodule]
fn shadowlane_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNsConfig>()?;
    m.add_function(wrap_pyfunction!(solar_position, m)?)?;
    m.add_function(wrap_pyfunction!(shadow_length, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_configs, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_counts, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_attack, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(defend_image, m)?)?;
    Ok(())
}
