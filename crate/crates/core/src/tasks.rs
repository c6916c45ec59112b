//! Benchmark task battery and evaluation schemes.
//!
//! Binary tasks feed every `L`-bit pattern (bit `b` injected as `s′ = 2b − 1`)
//! and read targets from the bits. Function tasks feed two unit-interval
//! inputs through 4-way sign multiplexing: the functional input `(s1, s2)` is
//! represented by the concatenated traces of the system inputs `(±s1, ±s2)`.
//!
//! Three evaluation schemes are supported:
//!
//! - **A**: two independently perturbed realizations of every trace; train on
//!   the noise-augmented first one, evaluate on the second.
//! - **B**: leave-one-out; each instance is evaluated by a readout trained on
//!   the noise-augmented remaining instances.
//! - **C**: train on all instances with noise augmentation, evaluate on the
//!   clean signals.

use crate::linalg::{self, RealMatrix, Tolerance};
use crate::readout::{
    self, augmented_rows, evaluate, AugmentedRow, DesignMatrix, NoiseSpec, NormalEquations,
    ReadoutConfig, ReadoutError,
};
use crate::reservoir::{Reservoir, ReservoirError, ReservoirTrace, SequenceParams, SpinSystem};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Grid increment for function-task inputs.
pub const DEFAULT_GRID_STEP: f64 = 0.125;

/// Sample counts swept for the accuracy-versus-`M` curves.
pub const M_SWEEP: [usize; 5] = [2, 3, 4, 6, 11];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("invalid task: {0}")]
    Invalid(String),
    #[error("unknown task name `{0}`")]
    UnknownTask(String),
    #[error("task {task} expects {expected}")]
    Arity { task: String, expected: String },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Reservoir(#[from] ReservoirError),
    #[error(transparent)]
    Readout(#[from] ReadoutError),
}

impl From<linalg::LinalgError> for TaskError {
    fn from(e: linalg::LinalgError) -> Self {
        TaskError::Readout(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    /// Reconstruct the bit at 1-based stream `position`.
    InputRecognition {
        position: usize,
    },
    /// XOR of the bits at two 1-based stream positions.
    Parity {
        first: usize,
        second: usize,
    },
    /// XOR of the first `bits` stream bits.
    Xor {
        bits: usize,
    },
    /// NAND of the first two bits.
    Nand,
    /// Bit `order` of `b1 + b2`.
    Adder1 {
        order: usize,
    },
    /// Bit `order` of `(b1 b2)₂ + (b3 b4)₂`, most significant bit first.
    Adder2 {
        order: usize,
    },
    Multiply,
    Divide,
    Nonlinear1,
    Nonlinear2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(alias = "a")]
    A,
    #[serde(alias = "b")]
    B,
    #[serde(alias = "c")]
    C,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::A => "A",
            Scheme::B => "B",
            Scheme::C => "C",
        })
    }
}

impl FromStr for Scheme {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Scheme::A),
            "b" => Ok(Scheme::B),
            "c" => Ok(Scheme::C),
            _ => Err(TaskError::Invalid(format!("unknown scheme `{s}`"))),
        }
    }
}

impl TaskKind {
    pub fn input_mode(&self) -> InputMode {
        match self {
            TaskKind::Multiply | TaskKind::Divide | TaskKind::Nonlinear1 | TaskKind::Nonlinear2 => {
                InputMode::Continuous
            }
            _ => InputMode::Binary,
        }
    }

    /// Number of stream bits a binary task reads.
    pub fn bits_needed(&self) -> usize {
        match *self {
            TaskKind::InputRecognition { position } => position,
            TaskKind::Parity { first, second } => first.max(second),
            TaskKind::Xor { bits } => bits,
            TaskKind::Nand | TaskKind::Adder1 { .. } => 2,
            TaskKind::Adder2 { .. } => 4,
            _ => 0,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            TaskKind::InputRecognition { position } => format!("recognition{position}"),
            TaskKind::Parity { first, second } => format!("parity{first}{second}"),
            TaskKind::Xor { bits } => format!("xor{bits}"),
            TaskKind::Nand => "nand".into(),
            TaskKind::Adder1 { order } => format!("adder1_{order}"),
            TaskKind::Adder2 { order } => format!("adder2_{order}"),
            TaskKind::Multiply => "multiply".into(),
            TaskKind::Divide => "divide".into(),
            TaskKind::Nonlinear1 => "nonlinear1".into(),
            TaskKind::Nonlinear2 => "nonlinear2".into(),
        }
    }

    fn validate(&self) -> Result<(), TaskError> {
        let bad = |msg: String| Err(TaskError::Invalid(msg));
        match *self {
            TaskKind::InputRecognition { position: 0 } => {
                bad("recognition positions are 1-based".into())
            }
            TaskKind::Parity { first, second } if first == 0 || second == 0 || first == second => {
                bad(format!(
                    "parity needs two distinct 1-based positions, got {first} and {second}"
                ))
            }
            TaskKind::Xor { bits } if !(2..=4).contains(&bits) => {
                bad(format!("xor takes 2 to 4 bits, got {bits}"))
            }
            TaskKind::Adder1 { order } if order > 1 => {
                bad(format!("1-bit adder has orders 0 and 1, got {order}"))
            }
            TaskKind::Adder2 { order } if order > 2 => {
                bad(format!("2-bit adder has orders 0 to 2, got {order}"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for TaskKind {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || TaskError::UnknownTask(s.to_string());
        let digit = |c: char| c.to_digit(10).map(|d| d as usize).ok_or_else(unknown);
        let kind = match s {
            "nand" => TaskKind::Nand,
            "multiply" => TaskKind::Multiply,
            "divide" => TaskKind::Divide,
            "nonlinear1" => TaskKind::Nonlinear1,
            "nonlinear2" => TaskKind::Nonlinear2,
            _ => {
                if let Some(rest) = s.strip_prefix("recognition") {
                    TaskKind::InputRecognition {
                        position: rest.parse().map_err(|_| unknown())?,
                    }
                } else if let Some(rest) = s.strip_prefix("parity") {
                    let mut chars = rest.chars();
                    match (chars.next(), chars.next(), chars.next()) {
                        (Some(a), Some(b), None) => TaskKind::Parity {
                            first: digit(a)?,
                            second: digit(b)?,
                        },
                        _ => return Err(unknown()),
                    }
                } else if let Some(rest) = s.strip_prefix("xor") {
                    TaskKind::Xor {
                        bits: rest.parse().map_err(|_| unknown())?,
                    }
                } else if let Some(rest) = s.strip_prefix("adder1_") {
                    TaskKind::Adder1 {
                        order: rest.parse().map_err(|_| unknown())?,
                    }
                } else if let Some(rest) = s.strip_prefix("adder2_") {
                    TaskKind::Adder2 {
                        order: rest.parse().map_err(|_| unknown())?,
                    }
                } else {
                    return Err(unknown());
                }
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// A task paired with its evaluation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub scheme: Scheme,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, scheme: Scheme) -> Result<Self, TaskError> {
        kind.validate()?;
        Ok(Self { kind, scheme })
    }

    /// Scheme A for binary tasks, leave-one-out (B) for function tasks.
    pub fn with_default_scheme(kind: TaskKind) -> Result<Self, TaskError> {
        let scheme = match kind.input_mode() {
            InputMode::Binary => Scheme::A,
            InputMode::Continuous => Scheme::B,
        };
        Self::new(kind, scheme)
    }

    pub fn input_mode(&self) -> InputMode {
        self.kind.input_mode()
    }

    /// Checks the task against the binary stream length.
    pub fn validate_for(&self, input_length: usize) -> Result<(), TaskError> {
        self.kind.validate()?;
        if self.input_mode() == InputMode::Binary && self.kind.bits_needed() > input_length {
            return Err(TaskError::Invalid(format!(
                "{} needs {} stream bits but the input length is {input_length}",
                self.kind,
                self.kind.bits_needed()
            )));
        }
        Ok(())
    }
}

/// The thirteen-row battery: Boolean functions (scheme A) and continuous
/// functions (scheme B).
pub fn table_battery() -> Vec<TaskSpec> {
    let kinds = [
        TaskKind::Xor { bits: 2 },
        TaskKind::Xor { bits: 3 },
        TaskKind::Xor { bits: 4 },
        TaskKind::Nand,
        TaskKind::Adder1 { order: 0 },
        TaskKind::Adder1 { order: 1 },
        TaskKind::Adder2 { order: 0 },
        TaskKind::Adder2 { order: 1 },
        TaskKind::Adder2 { order: 2 },
        TaskKind::Multiply,
        TaskKind::Divide,
        TaskKind::Nonlinear1,
        TaskKind::Nonlinear2,
    ];
    kinds
        .into_iter()
        .map(|k| TaskSpec::with_default_scheme(k).expect("battery tasks are valid"))
        .collect()
}

/// Input recognition for every stream position plus the two parity pairs.
pub fn recognition_and_parity(input_length: usize) -> Vec<TaskSpec> {
    let mut out: Vec<TaskSpec> = (1..=input_length)
        .map(|position| TaskSpec {
            kind: TaskKind::InputRecognition { position },
            scheme: Scheme::A,
        })
        .collect();
    if input_length >= 3 {
        for (first, second) in [(1, 3), (2, 3)] {
            out.push(TaskSpec {
                kind: TaskKind::Parity { first, second },
                scheme: Scheme::A,
            });
        }
    }
    out
}

/// Expands a task name; `recognition` and `parity` name whole families.
pub fn expand_task_name(
    name: &str,
    scheme: Option<Scheme>,
    input_length: usize,
) -> Result<Vec<TaskSpec>, TaskError> {
    let families = recognition_and_parity(input_length);
    let kinds: Vec<TaskKind> = match name {
        "recognition" => families
            .iter()
            .filter(|t| matches!(t.kind, TaskKind::InputRecognition { .. }))
            .map(|t| t.kind)
            .collect(),
        "parity" => families
            .iter()
            .filter(|t| matches!(t.kind, TaskKind::Parity { .. }))
            .map(|t| t.kind)
            .collect(),
        _ => vec![name.parse()?],
    };
    kinds
        .into_iter()
        .map(|kind| {
            let spec = match scheme {
                Some(s) => TaskSpec::new(kind, s)?,
                None => TaskSpec::with_default_scheme(kind)?,
            };
            spec.validate_for(input_length)?;
            Ok(spec)
        })
        .collect()
}

/// Inputs a target function is evaluated on.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskInput {
    Bits(Vec<u8>),
    Pair(f64, f64),
}

impl TaskInput {
    pub fn values(&self) -> Vec<f64> {
        match self {
            TaskInput::Bits(b) => b.iter().map(|&x| f64::from(x)).collect(),
            TaskInput::Pair(a, b) => vec![*a, *b],
        }
    }

    pub fn label(&self) -> String {
        match self {
            TaskInput::Bits(b) => b.iter().map(|x| x.to_string()).collect(),
            TaskInput::Pair(a, b) => format!("({a},{b})"),
        }
    }
}

/// Target value of `kind` on `input`.
pub fn target_for(kind: &TaskKind, input: &TaskInput) -> Result<f64, TaskError> {
    let arity = |expected: String| TaskError::Arity {
        task: kind.name(),
        expected,
    };
    match (kind.input_mode(), input) {
        (InputMode::Binary, TaskInput::Bits(bits)) => {
            let needed = kind.bits_needed();
            if bits.len() < needed {
                return Err(arity(format!("at least {needed} bits")));
            }
            if bits.iter().any(|&b| b > 1) {
                return Err(arity("bits in {0, 1}".into()));
            }
            let b = |k: usize| bits[k] as usize;
            let bit = match *kind {
                TaskKind::InputRecognition { position } => b(position - 1),
                TaskKind::Parity { first, second } => b(first - 1) ^ b(second - 1),
                TaskKind::Xor { bits: n } => (0..n).fold(0, |acc, k| acc ^ b(k)),
                TaskKind::Nand => 1 - (b(0) & b(1)),
                TaskKind::Adder1 { order } => ((b(0) + b(1)) >> order) & 1,
                TaskKind::Adder2 { order } => {
                    let a = 2 * b(0) + b(1);
                    let c = 2 * b(2) + b(3);
                    ((a + c) >> order) & 1
                }
                _ => unreachable!("binary kinds only"),
            };
            Ok(bit as f64)
        }
        (InputMode::Continuous, &TaskInput::Pair(s1, s2)) => Ok(match kind {
            TaskKind::Multiply => s1 * s2,
            TaskKind::Divide => s1 / (1.0 + s2),
            TaskKind::Nonlinear1 => s1 * s2 * (1.0 - s1),
            TaskKind::Nonlinear2 => s1 * s1 + s2 * s2,
            _ => unreachable!("continuous kinds only"),
        }),
        (InputMode::Binary, _) => Err(arity("a bit pattern".into())),
        (InputMode::Continuous, _) => Err(arity("a pair (s1, s2)".into())),
    }
}

/// All `2^L` bit patterns, lexicographic, most significant position first.
pub fn binary_streams(input_length: usize) -> Vec<Vec<u8>> {
    (0..1usize << input_length)
        .map(|idx| {
            (0..input_length)
                .map(|j| ((idx >> (input_length - 1 - j)) & 1) as u8)
                .collect()
        })
        .collect()
}

/// Bit `b` ↦ system input `2b − 1`.
pub fn bits_to_signed(bits: &[u8]) -> Vec<f64> {
    bits.iter().map(|&b| 2.0 * f64::from(b) - 1.0).collect()
}

/// Half-open grid `{lo + k·step} ∩ [lo, hi)`.
pub fn continuous_grid(step: f64, lo: f64, hi: f64) -> Result<Vec<f64>, TaskError> {
    if !(step.is_finite() && step > 0.0) {
        return Err(TaskError::Grid(format!(
            "step must be positive, got {step}"
        )));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(TaskError::Grid(format!("degenerate range [{lo}, {hi})")));
    }
    let span = hi - lo;
    let slack = 1e-9 * step;
    let count = ((span - slack) / step).floor() as usize + 1;
    Ok((0..count).map(|k| lo + k as f64 * step).collect())
}

fn negate(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        -x
    }
}

/// The four sign patterns `(±s1, ±s2)` used for spatial multiplexing.
pub fn multiplex_expand(s1: f64, s2: f64) -> [(f64, f64); 4] {
    [
        (s1, s2),
        (negate(s1), s2),
        (s1, negate(s2)),
        (negate(s1), negate(s2)),
    ]
}

/// One task instance: its functional input, the system streams fed to the
/// reservoir (one per multiplexing block) and the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub input: TaskInput,
    pub streams: Vec<Vec<f64>>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub provenance: String,
}

impl Dataset {
    pub fn targets(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.instances.len(),
            self.instances.iter().map(|i| i.target),
        )
    }
}

/// Instances for a task with the given binary stream length and grid step.
pub fn build_dataset(
    kind: &TaskKind,
    input_length: usize,
    grid_step: f64,
) -> Result<Dataset, TaskError> {
    let inputs = instance_inputs(kind.input_mode(), input_length, grid_step)?;
    let instances = inputs
        .into_iter()
        .map(|(input, streams)| {
            let target = target_for(kind, &input)?;
            Ok(Instance {
                input,
                streams,
                target,
            })
        })
        .collect::<Result<Vec<_>, TaskError>>()?;
    let provenance = match kind.input_mode() {
        InputMode::Binary => format!(
            "{}: all {} binary streams of length {input_length}",
            kind,
            instances.len()
        ),
        InputMode::Continuous => format!(
            "{}: {} grid pairs on [0,1) step {grid_step}, 4-way sign multiplexing",
            kind,
            instances.len()
        ),
    };
    Ok(Dataset {
        instances,
        provenance,
    })
}

type RawInstance = (TaskInput, Vec<Vec<f64>>);

fn instance_inputs(
    mode: InputMode,
    input_length: usize,
    grid_step: f64,
) -> Result<Vec<RawInstance>, TaskError> {
    Ok(match mode {
        InputMode::Binary => binary_streams(input_length)
            .into_iter()
            .map(|bits| {
                let stream = bits_to_signed(&bits);
                (TaskInput::Bits(bits), vec![stream])
            })
            .collect(),
        InputMode::Continuous => {
            let grid = continuous_grid(grid_step, 0.0, 1.0)?;
            let mut out = Vec::with_capacity(grid.len() * grid.len());
            for &s1 in &grid {
                for &s2 in &grid {
                    let streams = multiplex_expand(s1, s2)
                        .iter()
                        .map(|&(a, b)| vec![a, b])
                        .collect();
                    out.push((TaskInput::Pair(s1, s2), streams));
                }
            }
            out
        }
    })
}

/// Everything a benchmark run needs besides the task itself.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSettings {
    pub system: SpinSystem,
    pub epsilon: f64,
    /// Sequence timing; `input_length` applies to binary tasks. Function
    /// tasks always feed two inputs.
    pub params: SequenceParams,
    pub noise: NoiseSpec,
    pub readout: ReadoutConfig,
    /// Relative std of the per-realization measurement noise used by scheme A.
    pub measurement_noise: f64,
    /// Seed for the scheme-A measurement noise.
    pub seed: u64,
    pub grid_step: f64,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        let noise = NoiseSpec::default();
        Self {
            system: SpinSystem::default_system(),
            epsilon: crate::reservoir::DEFAULT_EPSILON,
            params: SequenceParams::default(),
            noise,
            readout: ReadoutConfig::default(),
            measurement_noise: noise.relative_std,
            seed: 0,
            grid_step: DEFAULT_GRID_STEP,
        }
    }
}

/// Prediction for one evaluated instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstancePrediction {
    pub label: String,
    pub inputs: Vec<f64>,
    pub target: f64,
    pub prediction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub task: TaskSpec,
    pub m_used: usize,
    pub mse: f64,
    /// Present for binary-valued targets only.
    pub digitized_errors: Option<usize>,
    /// MSE of predicting the training-target mean under the same scheme.
    pub baseline_mse: f64,
    /// Number of train/evaluate rounds.
    pub folds: usize,
    pub per_instance: Vec<InstancePrediction>,
}

/// Reservoir features for every instance of one input mode, plus cached
/// noise-augmented normal equations.
struct FeatureSet {
    inputs: Vec<TaskInput>,
    clean: DesignMatrix,
    realizations: OnceLock<(DesignMatrix, DesignMatrix)>,
    clean_augmented: OnceLock<Vec<AugmentedRow>>,
    first_augmented: OnceLock<Vec<AugmentedRow>>,
}

/// Runs tasks against one reservoir configuration, computing each trace set
/// and augmentation at most once.
pub struct Benchmarker {
    settings: BenchmarkSettings,
    binary: OnceLock<Result<FeatureSet, TaskError>>,
    continuous: OnceLock<Result<FeatureSet, TaskError>>,
}

fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

impl Benchmarker {
    pub fn new(settings: BenchmarkSettings) -> Result<Self, TaskError> {
        settings.params.validate()?;
        settings.noise.validate()?;
        if !(settings.measurement_noise.is_finite() && settings.measurement_noise >= 0.0) {
            return Err(TaskError::Invalid("measurement noise must be >= 0".into()));
        }
        Ok(Self {
            settings,
            binary: OnceLock::new(),
            continuous: OnceLock::new(),
        })
    }

    pub fn settings(&self) -> &BenchmarkSettings {
        &self.settings
    }

    /// Sequence parameters used for an input mode.
    pub fn params_for(&self, mode: InputMode) -> SequenceParams {
        match mode {
            InputMode::Binary => self.settings.params,
            InputMode::Continuous => self.settings.params.with_input_length(2),
        }
    }

    /// Traces for every instance of `mode`, grouped per instance.
    pub fn traces(
        &self,
        mode: InputMode,
    ) -> Result<Vec<(TaskInput, Vec<ReservoirTrace>)>, TaskError> {
        let reservoir = Reservoir::new(self.settings.system.clone(), self.params_for(mode))?;
        let raw = instance_inputs(
            mode,
            self.settings.params.input_length,
            self.settings.grid_step,
        )?;
        let eps = self.settings.epsilon;
        let traces: Vec<Result<Vec<ReservoirTrace>, ReservoirError>> =
            map_ordered(&raw, |(_, streams)| {
                streams.iter().map(|s| reservoir.run(s, eps)).collect()
            });
        raw.into_iter()
            .zip(traces)
            .map(|((input, _), t)| Ok((input, t?)))
            .collect()
    }

    fn features(&self, mode: InputMode) -> Result<&FeatureSet, TaskError> {
        let cell = match mode {
            InputMode::Binary => &self.binary,
            InputMode::Continuous => &self.continuous,
        };
        cell.get_or_init(|| {
            let traces = self.traces(mode)?;
            let labels = traces.iter().map(|(i, _)| i.label()).collect();
            let groups: Vec<Vec<&ReservoirTrace>> =
                traces.iter().map(|(_, t)| t.iter().collect()).collect();
            let clean = DesignMatrix::from_trace_groups(&groups, labels)?;
            Ok(FeatureSet {
                inputs: traces.into_iter().map(|(i, _)| i).collect(),
                clean,
                realizations: OnceLock::new(),
                clean_augmented: OnceLock::new(),
                first_augmented: OnceLock::new(),
            })
        })
        .as_ref()
        .map_err(Clone::clone)
    }

    /// Clean design for an input mode at full `M`.
    pub fn design(&self, mode: InputMode) -> Result<DesignMatrix, TaskError> {
        Ok(self.features(mode)?.clean.clone())
    }

    fn realizations<'a>(&self, fs: &'a FeatureSet) -> &'a (DesignMatrix, DesignMatrix) {
        fs.realizations.get_or_init(|| {
            let std = self.settings.measurement_noise * fs.clean.max_abs();
            (
                fs.clean.perturbed(std, self.settings.seed, 1),
                fs.clean.perturbed(std, self.settings.seed, 2),
            )
        })
    }

    fn augmented<'a>(
        &self,
        cell: &'a OnceLock<Vec<AugmentedRow>>,
        design: &DesignMatrix,
    ) -> Result<&'a [AugmentedRow], TaskError> {
        if cell.get().is_none() {
            let rows = augmented_rows(design, &self.settings.noise, self.settings.readout.bias)?;
            let _ = cell.set(rows);
        }
        Ok(cell.get().expect("initialized above"))
    }

    /// Trains and evaluates one task using the first `m_used` samples per input.
    pub fn run(&self, task: &TaskSpec, m_used: usize) -> Result<BenchmarkReport, TaskError> {
        task.validate_for(self.settings.params.input_length)?;
        let m_full = self.settings.params.samples_per_input;
        if m_used == 0 || m_used > m_full {
            return Err(TaskError::Invalid(format!(
                "M = {m_used} outside 1..={m_full}"
            )));
        }
        let mode = task.input_mode();
        let fs = self.features(mode)?;
        let targets = DVector::from_iterator(
            fs.inputs.len(),
            fs.inputs
                .iter()
                .map(|i| target_for(&task.kind, i))
                .collect::<Result<Vec<_>, _>>()?,
        );
        let mut cols = fs.clean.layout().columns_for(m_used);
        if self.settings.readout.bias {
            cols.push(fs.clean.cols());
        }
        let select_row = |design: &DesignMatrix, k: usize| -> Vec<f64> {
            fs.clean
                .layout()
                .columns_for(m_used)
                .iter()
                .map(|&c| design.values()[(k, c)])
                .collect()
        };
        let all: Vec<usize> = (0..targets.len()).collect();
        let cfg = self.settings.readout;

        let (predictions, baseline, folds): (Vec<f64>, Vec<f64>, usize) = match task.scheme {
            Scheme::A => {
                let (first, second) = self.realizations(fs);
                let rows = self.augmented(&fs.first_augmented, first)?;
                let eq = NormalEquations::from_augmented(rows, &targets, &all)?.select(&cols);
                let model = readout::train_normal(&eq, &cfg)?;
                let preds = all
                    .iter()
                    .map(|&k| model.predict_row(&select_row(second, k)))
                    .collect::<Result<Vec<_>, _>>()?;
                let mean = targets.mean();
                (preds, vec![mean; all.len()], 1)
            }
            Scheme::B => {
                let rows = self.augmented(&fs.clean_augmented, &fs.clean)?;
                let folds: Vec<Result<(f64, f64), TaskError>> = map_ordered(&all, |&j| {
                    let rest: Vec<usize> = all.iter().copied().filter(|&k| k != j).collect();
                    let eq = NormalEquations::from_augmented(rows, &targets, &rest)?.select(&cols);
                    let model = readout::train_normal(&eq, &cfg)?;
                    let pred = model.predict_row(&select_row(&fs.clean, j))?;
                    let mean = rest.iter().map(|&k| targets[k]).sum::<f64>() / rest.len() as f64;
                    Ok((pred, mean))
                });
                let folds = folds.into_iter().collect::<Result<Vec<_>, _>>()?;
                let (preds, means) = folds.into_iter().unzip();
                (preds, means, all.len())
            }
            Scheme::C => {
                let rows = self.augmented(&fs.clean_augmented, &fs.clean)?;
                let eq = NormalEquations::from_augmented(rows, &targets, &all)?.select(&cols);
                let model = readout::train_normal(&eq, &cfg)?;
                let preds = all
                    .iter()
                    .map(|&k| model.predict_row(&select_row(&fs.clean, k)))
                    .collect::<Result<Vec<_>, _>>()?;
                let mean = targets.mean();
                (preds, vec![mean; all.len()], 1)
            }
        };

        let binary = mode == InputMode::Binary;
        let metrics = evaluate(&predictions, targets.as_slice(), binary)?;
        let baseline_mse = evaluate(&baseline, targets.as_slice(), false)?.mse;
        let per_instance = fs
            .inputs
            .iter()
            .zip(targets.iter().zip(&predictions))
            .map(|(input, (&target, &prediction))| InstancePrediction {
                label: input.label(),
                inputs: input.values(),
                target,
                prediction,
            })
            .collect();
        Ok(BenchmarkReport {
            task: *task,
            m_used,
            mse: metrics.mse,
            digitized_errors: metrics.digitized_errors,
            baseline_mse,
            folds,
            per_instance,
        })
    }
}

/// One-shot wrapper: builds a [`Benchmarker`] and runs a single task.
pub fn run_benchmark(
    task: &TaskSpec,
    settings: &BenchmarkSettings,
    m_used: usize,
) -> Result<BenchmarkReport, TaskError> {
    Benchmarker::new(settings.clone())?.run(task, m_used)
}

/// Pseudoinverse readout fitted directly on the raw `{0, 1}` input bits of
/// all `2^L` patterns, evaluated on the same patterns. No reservoir, no
/// constant column.
pub fn raw_input_readout(
    kind: &TaskKind,
    input_length: usize,
) -> Result<readout::Metrics, TaskError> {
    if kind.input_mode() != InputMode::Binary {
        return Err(TaskError::Invalid(format!("{kind} is not a binary task")));
    }
    let patterns = binary_streams(input_length);
    let design = RealMatrix::from_fn(patterns.len(), input_length, |r, c| {
        f64::from(patterns[r][c])
    });
    let targets = DVector::from_iterator(
        patterns.len(),
        patterns
            .iter()
            .map(|b| target_for(kind, &TaskInput::Bits(b.clone())))
            .collect::<Result<Vec<_>, _>>()?,
    );
    let sol = linalg::least_squares_pinv(&design, &targets, Tolerance::Auto)?;
    let preds = &design * &sol.weights;
    Ok(evaluate(preds.as_slice(), targets.as_slice(), true)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(v: &[u8]) -> TaskInput {
        TaskInput::Bits(v.to_vec())
    }

    #[test]
    fn streams_enumeration() {
        let s = binary_streams(4);
        assert_eq!(s.len(), 16);
        assert_eq!(s[0], vec![0, 0, 0, 0]);
        assert_eq!(s[15], vec![1, 1, 1, 1]);
        assert_eq!(s[6], vec![0, 1, 1, 0]);
        assert_eq!(binary_streams(1), vec![vec![0], vec![1]]);
        assert_eq!(bits_to_signed(&[0, 1]), vec![-1.0, 1.0]);
    }

    #[test]
    fn truth_tables() {
        let xor2 = TaskKind::Xor { bits: 2 };
        assert_eq!(target_for(&xor2, &bits(&[1, 0, 0, 0])).unwrap(), 1.0);
        assert_eq!(
            target_for(&TaskKind::Nand, &bits(&[1, 1, 0, 0])).unwrap(),
            0.0
        );
        assert_eq!(
            target_for(&TaskKind::Nand, &bits(&[0, 1, 0, 0])).unwrap(),
            1.0
        );
        let p13 = TaskKind::Parity {
            first: 1,
            second: 3,
        };
        assert_eq!(target_for(&p13, &bits(&[1, 0, 1, 1])).unwrap(), 0.0);
        assert_eq!(target_for(&p13, &bits(&[1, 1, 0, 1])).unwrap(), 1.0);
        let xor4 = TaskKind::Xor { bits: 4 };
        assert_eq!(target_for(&xor4, &bits(&[1, 1, 1, 0])).unwrap(), 1.0);
        let rec = TaskKind::InputRecognition { position: 4 };
        assert_eq!(target_for(&rec, &bits(&[0, 0, 0, 1])).unwrap(), 1.0);
    }

    #[test]
    fn adders() {
        // (11)₂ + (01)₂ = 3 + 1 = 4 = (100)₂
        let input = bits(&[1, 1, 0, 1]);
        let orders: Vec<f64> = (0..3)
            .map(|order| target_for(&TaskKind::Adder2 { order }, &input).unwrap())
            .collect();
        assert_eq!(orders, vec![0.0, 0.0, 1.0]);
        let a1 = |order, v: &[u8]| target_for(&TaskKind::Adder1 { order }, &bits(v)).unwrap();
        assert_eq!((a1(0, &[1, 1]), a1(1, &[1, 1])), (0.0, 1.0));
        assert_eq!((a1(0, &[1, 0]), a1(1, &[1, 0])), (1.0, 0.0));
    }

    #[test]
    fn continuous_targets() {
        let v = target_for(&TaskKind::Divide, &TaskInput::Pair(0.5, 0.5)).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            target_for(&TaskKind::Multiply, &TaskInput::Pair(0.25, 0.5)).unwrap(),
            0.125
        );
        assert_eq!(
            target_for(&TaskKind::Nonlinear1, &TaskInput::Pair(0.5, 0.5)).unwrap(),
            0.125
        );
        for &(a, b) in &[(0.125, 0.75), (0.375, 0.0), (0.875, 0.5)] {
            for k in [TaskKind::Multiply, TaskKind::Nonlinear2] {
                assert_eq!(
                    target_for(&k, &TaskInput::Pair(a, b)).unwrap(),
                    target_for(&k, &TaskInput::Pair(b, a)).unwrap()
                );
            }
        }
    }

    #[test]
    fn arity_errors() {
        assert!(matches!(
            target_for(&TaskKind::Multiply, &bits(&[1, 0])),
            Err(TaskError::Arity { .. })
        ));
        assert!(matches!(
            target_for(&TaskKind::Adder2 { order: 0 }, &bits(&[1, 0])),
            Err(TaskError::Arity { .. })
        ));
        assert!(matches!(
            target_for(&TaskKind::Nand, &TaskInput::Pair(0.1, 0.2)),
            Err(TaskError::Arity { .. })
        ));
    }

    #[test]
    fn grids() {
        let g = continuous_grid(0.125, 0.0, 1.0).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g[7], 0.875);
        let g = continuous_grid(0.125, -1.0, 1.0).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g[0], -1.0);
        assert_eq!(continuous_grid(0.5, 0.0, 1.0).unwrap(), vec![0.0, 0.5]);
        assert!(continuous_grid(0.0, 0.0, 1.0).is_err());
        assert!(continuous_grid(0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn multiplexing() {
        let m = multiplex_expand(0.25, 0.75);
        assert_eq!(
            m,
            [(0.25, 0.75), (-0.25, 0.75), (0.25, -0.75), (-0.25, -0.75)]
        );
        assert_eq!(multiplex_expand(0.0, 0.0), [(0.0, 0.0); 4]);
    }

    #[test]
    fn task_names_round_trip() {
        for spec in table_battery().iter().chain(&recognition_and_parity(4)) {
            let parsed: TaskKind = spec.kind.name().parse().unwrap();
            assert_eq!(parsed, spec.kind);
        }
        assert!("xor5".parse::<TaskKind>().is_err());
        assert!("adder2_3".parse::<TaskKind>().is_err());
        assert!("banana".parse::<TaskKind>().is_err());
        assert_eq!(table_battery().len(), 13);
    }

    #[test]
    fn expand_families() {
        let r = expand_task_name("recognition", None, 4).unwrap();
        assert_eq!(r.len(), 4);
        let p = expand_task_name("parity", None, 4).unwrap();
        assert_eq!(p.len(), 2);
        assert!(expand_task_name("adder2_0", None, 3).is_err());
        let m = expand_task_name("multiply", None, 4).unwrap();
        assert_eq!(m[0].scheme, Scheme::B);
    }

    #[test]
    fn dataset_sizes() {
        let d = build_dataset(&TaskKind::Xor { bits: 2 }, 4, DEFAULT_GRID_STEP).unwrap();
        assert_eq!(d.instances.len(), 16);
        let d = build_dataset(&TaskKind::Multiply, 4, DEFAULT_GRID_STEP).unwrap();
        assert_eq!(d.instances.len(), 64);
        assert!(d.instances.iter().all(|i| i.streams.len() == 4));
    }

    #[test]
    fn raw_bits_cannot_do_xor() {
        let m = raw_input_readout(&TaskKind::Xor { bits: 2 }, 4).unwrap();
        assert!(m.digitized_errors.unwrap() >= 1);
        // A bit that is itself an input is linearly recoverable.
        let m = raw_input_readout(&TaskKind::InputRecognition { position: 2 }, 4).unwrap();
        assert_eq!(m.digitized_errors, Some(0));
    }

    fn small_settings() -> BenchmarkSettings {
        BenchmarkSettings {
            noise: NoiseSpec {
                copies: 200,
                ..NoiseSpec::default()
            },
            ..BenchmarkSettings::default()
        }
    }

    #[test]
    fn scheme_b_runs_one_fold_per_instance() {
        let settings = BenchmarkSettings {
            grid_step: 0.25,
            ..small_settings()
        };
        let spec = TaskSpec::new(TaskKind::Multiply, Scheme::B).unwrap();
        let r = run_benchmark(&spec, &settings, 11).unwrap();
        assert_eq!(r.folds, 16);
        assert_eq!(r.per_instance.len(), 16);
        assert!(r.digitized_errors.is_none());
    }

    #[test]
    fn benchmark_is_deterministic() {
        let spec = TaskSpec::with_default_scheme(TaskKind::Xor { bits: 2 }).unwrap();
        let a = run_benchmark(&spec, &small_settings(), 11).unwrap();
        let b = run_benchmark(&spec, &small_settings(), 11).unwrap();
        assert_eq!(a, b);
        assert!(a.digitized_errors.is_some());
    }

    #[test]
    fn rejects_bad_m() {
        let spec = TaskSpec::with_default_scheme(TaskKind::Nand).unwrap();
        assert!(run_benchmark(&spec, &small_settings(), 12).is_err());
        assert!(run_benchmark(&spec, &small_settings(), 0).is_err());
    }
}
