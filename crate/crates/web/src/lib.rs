//! WebAssembly bindings for the browser demo.
//!
//! Three operations: a probe trace for one binary stream, MSE against the
//! number of samples per input for a task, and the learned surface of a
//! two-input function. Each has a plain Rust form (testable natively) and a
//! `#[wasm_bindgen]` wrapper that returns JSON.

use nmr_reservoir::readout::NoiseSpec;
use nmr_reservoir::reservoir::{
    Reservoir, SequenceParams, SpinSystem, DEFAULT_COUPLING_RANGE_HZ, DEFAULT_EPSILON,
};
use nmr_reservoir::tasks::{
    bits_to_signed, expand_task_name, BenchmarkSettings, Benchmarker, InputMode, Scheme, TaskKind,
    TaskSpec, M_SWEEP,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest augmentation count the page may request; keeps the tab responsive.
pub const MAX_COPIES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePlot {
    pub bits: Vec<u8>,
    pub samples_per_input: usize,
    pub tau_seconds: f64,
    /// `signal[l * M + m]`.
    pub signal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub m: usize,
    pub mse: f64,
    pub digitized_errors: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub s1: f64,
    pub s2: f64,
    pub target: f64,
    pub prediction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Surface {
    pub task: String,
    pub scheme: String,
    pub mse: f64,
    pub baseline_mse: f64,
    pub points: Vec<SurfacePoint>,
}

fn system(seed: u64) -> Result<SpinSystem, String> {
    SpinSystem::random(4, seed, DEFAULT_COUPLING_RANGE_HZ).map_err(|e| e.to_string())
}

fn settings(seed: u64, copies: usize) -> Result<BenchmarkSettings, String> {
    if copies == 0 || copies > MAX_COPIES {
        return Err(format!("copies must be in 1..={MAX_COPIES}"));
    }
    Ok(BenchmarkSettings {
        system: system(seed)?,
        noise: NoiseSpec {
            copies,
            ..NoiseSpec::default()
        },
        ..BenchmarkSettings::default()
    })
}

/// Probe trace for a stream written as a bit string, e.g. `"1011"`.
pub fn trace(
    bits: &str,
    coupling_seed: u64,
    samples_per_input: usize,
) -> Result<TracePlot, String> {
    let bits: Vec<u8> = bits
        .trim()
        .chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(format!("`{c}` is not a bit")),
        })
        .collect::<Result<_, _>>()?;
    if bits.is_empty() || bits.len() > 8 {
        return Err("stream must have 1 to 8 bits".into());
    }
    let params = SequenceParams {
        input_length: bits.len(),
        samples_per_input,
        ..SequenceParams::default()
    };
    let reservoir = Reservoir::new(system(coupling_seed)?, params).map_err(|e| e.to_string())?;
    let t = reservoir
        .run(&bits_to_signed(&bits), DEFAULT_EPSILON)
        .map_err(|e| e.to_string())?;
    Ok(TracePlot {
        bits,
        samples_per_input,
        tau_seconds: params.sample_interval,
        signal: t.flattened().to_vec(),
    })
}

/// MSE at each swept `M` for one task with its default scheme.
pub fn sweep(task: &str, coupling_seed: u64, copies: usize) -> Result<Vec<SweepPoint>, String> {
    let kind: TaskKind = task
        .parse()
        .map_err(|e: nmr_reservoir::tasks::TaskError| e.to_string())?;
    let spec = TaskSpec::with_default_scheme(kind).map_err(|e| e.to_string())?;
    let bench = Benchmarker::new(settings(coupling_seed, copies)?).map_err(|e| e.to_string())?;
    M_SWEEP
        .iter()
        .map(|&m| {
            let r = bench.run(&spec, m).map_err(|e| e.to_string())?;
            Ok(SweepPoint {
                m,
                mse: r.mse,
                digitized_errors: r.digitized_errors,
            })
        })
        .collect()
}

/// Target and prediction over the input grid for a function task.
pub fn surface(
    task: &str,
    scheme: &str,
    coupling_seed: u64,
    copies: usize,
) -> Result<Surface, String> {
    let scheme: Scheme = scheme
        .parse()
        .map_err(|e: nmr_reservoir::tasks::TaskError| e.to_string())?;
    let spec = expand_task_name(task, Some(scheme), 4)
        .map_err(|e| e.to_string())?
        .pop()
        .ok_or("no task")?;
    if spec.input_mode() != InputMode::Continuous {
        return Err(format!("{task} is not a two-input function task"));
    }
    let bench = Benchmarker::new(settings(coupling_seed, copies)?).map_err(|e| e.to_string())?;
    let r = bench.run(&spec, 11).map_err(|e| e.to_string())?;
    Ok(Surface {
        task: spec.kind.to_string(),
        scheme: spec.scheme.to_string(),
        mse: r.mse,
        baseline_mse: r.baseline_mse,
        points: r
            .per_instance
            .iter()
            .map(|p| SurfacePoint {
                s1: p.inputs[0],
                s2: p.inputs[1],
                target: p.target,
                prediction: p.prediction,
            })
            .collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = simulateTrace)]
pub fn simulate_trace_js(
    bits: &str,
    coupling_seed: u32,
    samples_per_input: u32,
) -> Result<String, JsError> {
    to_js(trace(
        bits,
        coupling_seed.into(),
        samples_per_input as usize,
    ))
}

#[wasm_bindgen(js_name = mseVsM)]
pub fn mse_vs_m_js(task: &str, coupling_seed: u32, copies: u32) -> Result<String, JsError> {
    to_js(sweep(task, coupling_seed.into(), copies as usize))
}

#[wasm_bindgen(js_name = functionSurface)]
pub fn function_surface_js(
    task: &str,
    scheme: &str,
    coupling_seed: u32,
    copies: u32,
) -> Result<String, JsError> {
    to_js(surface(task, scheme, coupling_seed.into(), copies as usize))
}
