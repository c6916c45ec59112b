//! Nuclear-spin reservoir model.
//!
//! The reservoir is a small cluster of spin-1/2 nuclei: `N_H` input spins
//! that receive the global input rotation, and a single probe spin whose `Z`
//! magnetization is read out. Tensor-product ordering puts input spin 0 in the
//! most significant position and the probe spin last.
//!
//! Couplings are configured in Hz. The Hamiltonian is built in rad/s, so a
//! coupling `d` enters as `2π d`, and times are in seconds.

use crate::linalg::{
    self, kron, max_abs, trace_product, unitarity_residual, ComplexMatrix, EigDecomposition,
    LinalgError, C64, UNITARY_TOL,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Seed for the shipped default coupling table.
pub const DEFAULT_COUPLING_SEED: u64 = 0;

/// Number of input spins in the default 4+1 system.
pub const DEFAULT_INPUT_SPINS: usize = 4;

/// Thermal polarization of the input spins at room temperature (0.003 %).
pub const DEFAULT_EPSILON: f64 = 3e-5;

/// Stroboscopic sampling interval in seconds.
pub const DEFAULT_SAMPLE_INTERVAL: f64 = 2e-6;

pub const DEFAULT_INPUT_LENGTH: usize = 4;
pub const DEFAULT_SAMPLES_PER_INPUT: usize = 11;

/// Range of default coupling magnitudes, Hz.
pub const DEFAULT_COUPLING_RANGE_HZ: (f64, f64) = (2.0e3, 30.0e3);

/// Upper limit on the total spin count (Hilbert dimension 2^10).
pub const MAX_SPINS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReservoirError {
    #[error("site {site} out of range for {n} spins")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("invalid spin system: {0}")]
    InvalidSystem(String),
    #[error("polarization {epsilon} outside the positivity bound |epsilon| < {bound}")]
    PolarizationOutOfBounds { epsilon: f64, bound: f64 },
    #[error("input {value} outside [-1, 1]")]
    InputOutOfRange { value: f64 },
    #[error("invalid sequence parameters: {0}")]
    InvalidParams(String),
    #[error("stream length {actual} does not match input length {expected}")]
    StreamLength { expected: usize, actual: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Cartesian spin axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Transverse rotation axis used for input injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationAxis {
    X,
    #[default]
    Y,
}

impl From<RotationAxis> for Axis {
    fn from(a: RotationAxis) -> Self {
        match a {
            RotationAxis::X => Axis::X,
            RotationAxis::Y => Axis::Y,
        }
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Pauli matrix for `axis`.
pub fn pauli(axis: Axis) -> ComplexMatrix {
    let z = c(0., 0.);
    match axis {
        Axis::X => ComplexMatrix::from_row_slice(2, 2, &[z, c(1., 0.), c(1., 0.), z]),
        Axis::Y => ComplexMatrix::from_row_slice(2, 2, &[z, c(0., -1.), c(0., 1.), z]),
        Axis::Z => ComplexMatrix::from_row_slice(2, 2, &[c(1., 0.), z, z, c(-1., 0.)]),
    }
}

/// Embeds single-spin 2×2 factors into the full space; `None` means identity.
fn tensor_of(factors: &[Option<&ComplexMatrix>]) -> ComplexMatrix {
    let id = ComplexMatrix::identity(2, 2);
    factors
        .iter()
        .fold(ComplexMatrix::identity(1, 1), |acc, f| {
            kron(&acc, f.unwrap_or(&id))
        })
}

/// Spin operator `I_axis = σ_axis / 2` acting on `site` of an `n`-spin register.
pub fn site_operator(n: usize, site: usize, axis: Axis) -> Result<ComplexMatrix, ReservoirError> {
    if site >= n {
        return Err(ReservoirError::SiteOutOfRange { site, n });
    }
    let half = pauli(axis).map(|z| z * 0.5);
    let factors: Vec<Option<&ComplexMatrix>> =
        (0..n).map(|k| (k == site).then_some(&half)).collect();
    Ok(tensor_of(&factors))
}

/// Dipolar-coupled spin cluster: `N_H` input spins plus one probe spin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    /// Input-to-probe couplings `d_{i,C}` in Hz, one per input spin.
    couplings_ic: Vec<f64>,
    /// Input-input couplings `d_{i,j}` in Hz, packed upper triangle
    /// `(0,1), (0,2), …, (0,N-1), (1,2), …`.
    couplings_ij: Vec<f64>,
}

impl SpinSystem {
    pub fn new(couplings_ic: Vec<f64>, couplings_ij: Vec<f64>) -> Result<Self, ReservoirError> {
        let n_input = couplings_ic.len();
        if n_input == 0 {
            return Err(ReservoirError::InvalidSystem(
                "at least one input spin is required".into(),
            ));
        }
        if n_input + 1 > MAX_SPINS {
            return Err(ReservoirError::InvalidSystem(format!(
                "{} spins exceeds the supported maximum of {MAX_SPINS}",
                n_input + 1
            )));
        }
        let expected_pairs = n_input * (n_input - 1) / 2;
        if couplings_ij.len() != expected_pairs {
            return Err(ReservoirError::InvalidSystem(format!(
                "{n_input} input spins need {expected_pairs} homonuclear couplings, got {}",
                couplings_ij.len()
            )));
        }
        if couplings_ic
            .iter()
            .chain(&couplings_ij)
            .any(|d| !d.is_finite())
        {
            return Err(ReservoirError::InvalidSystem(
                "couplings must be finite".into(),
            ));
        }
        Ok(Self {
            couplings_ic,
            couplings_ij,
        })
    }

    /// Seeded random couplings: magnitudes uniform in `range_hz`, random signs.
    ///
    /// The probe couplings are drawn first, then the packed homonuclear table.
    pub fn random(n_input: usize, seed: u64, range_hz: (f64, f64)) -> Result<Self, ReservoirError> {
        let (lo, hi) = range_hz;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(ReservoirError::InvalidSystem(format!(
                "bad coupling range [{lo}, {hi}]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || {
            let mag = if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            };
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        };
        let ic: Vec<f64> = (0..n_input).map(|_| draw()).collect();
        let ij: Vec<f64> = (0..n_input * n_input.saturating_sub(1) / 2)
            .map(|_| draw())
            .collect();
        Self::new(ic, ij)
    }

    /// The shipped 4+1 placeholder system. Not fitted to any crystal.
    pub fn default_system() -> Self {
        Self::random(
            DEFAULT_INPUT_SPINS,
            DEFAULT_COUPLING_SEED,
            DEFAULT_COUPLING_RANGE_HZ,
        )
        .expect("default coupling table is valid")
    }

    pub fn n_input_spins(&self) -> usize {
        self.couplings_ic.len()
    }

    /// Total spin count including the probe.
    pub fn n_spins(&self) -> usize {
        self.couplings_ic.len() + 1
    }

    pub fn dimension(&self) -> usize {
        1 << self.n_spins()
    }

    pub fn probe_site(&self) -> usize {
        self.couplings_ic.len()
    }

    pub fn couplings_ic(&self) -> &[f64] {
        &self.couplings_ic
    }

    pub fn couplings_ij_packed(&self) -> &[f64] {
        &self.couplings_ij
    }

    /// `d_{i,j}` for distinct input spins, symmetric in its arguments.
    pub fn coupling_ij(&self, i: usize, j: usize) -> Option<f64> {
        let n = self.n_input_spins();
        if i == j || i >= n || j >= n {
            return None;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let idx = a * n - a * (a + 1) / 2 + (b - a - 1);
        Some(self.couplings_ij[idx])
    }

    /// Upper bound on `|ε|` keeping the thermal state positive semidefinite.
    pub fn polarization_bound(&self) -> f64 {
        1.0 / self.n_input_spins() as f64
    }

    /// Non-fatal problems with the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.couplings_ic.iter().all(|&d| d == 0.0) {
            out.push("all probe couplings are zero: the probe signal will be identically 0".into());
        }
        out
    }
}

/// Effective dipolar Hamiltonian in rad/s:
/// `Σ_i d_iC (I_X^i I_X^C + I_Y^i I_Y^C) + Σ_{i<j} d_ij (2 I_Z^i I_Z^j − I_X^i I_X^j − I_Y^i I_Y^j)`.
pub fn build_hamiltonian(system: &SpinSystem) -> ComplexMatrix {
    let n = system.n_spins();
    let dim = system.dimension();
    let probe = system.probe_site();
    let ops = |site: usize| {
        [Axis::X, Axis::Y, Axis::Z].map(|a| site_operator(n, site, a).expect("site in range"))
    };
    let per_site: Vec<[ComplexMatrix; 3]> = (0..n).map(ops).collect();
    let [px, py, _] = &per_site[probe];

    let mut h = ComplexMatrix::zeros(dim, dim);
    for (i, &d) in system.couplings_ic.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let [ix, iy, _] = &per_site[i];
        let term = ix * px + iy * py;
        h += term * c(2.0 * PI * d, 0.0);
    }
    let n_input = system.n_input_spins();
    for i in 0..n_input {
        for j in (i + 1)..n_input {
            let d = system.coupling_ij(i, j).expect("valid pair");
            if d == 0.0 {
                continue;
            }
            let [ix, iy, iz] = &per_site[i];
            let [jx, jy, jz] = &per_site[j];
            let term = (iz * jz) * c(2.0, 0.0) - iy * jy - ix * jx;
            h += term * c(2.0 * PI * d, 0.0);
        }
    }
    h
}

/// `Σ_{all spins} I_Z`.
pub fn total_z(system: &SpinSystem) -> ComplexMatrix {
    let n = system.n_spins();
    let mut out = ComplexMatrix::zeros(system.dimension(), system.dimension());
    for k in 0..n {
        out += site_operator(n, k, Axis::Z).expect("site in range");
    }
    out
}

/// Density operator of the reservoir together with the polarization it was
/// prepared with.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    pub matrix: ComplexMatrix,
    pub epsilon: f64,
}

impl DensityState {
    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn expectation(&self, obs: &ComplexMatrix) -> Result<f64, LinalgError> {
        trace_product(&self.matrix, obs)
    }
}

/// High-temperature thermal state with the probe saturated:
/// `ρ = (1 + 2ε Σ_{i∈input} I_Z^i) / 2^n`, so each input spin has `⟨2 I_Z⟩ = ε`.
pub fn thermal_initial_state(
    system: &SpinSystem,
    epsilon: f64,
) -> Result<DensityState, ReservoirError> {
    let bound = system.polarization_bound();
    if !epsilon.is_finite() || epsilon.abs() >= bound {
        return Err(ReservoirError::PolarizationOutOfBounds { epsilon, bound });
    }
    let n = system.n_spins();
    let dim = system.dimension();
    let norm = 1.0 / dim as f64;
    // Diagonal entry for basis state b: (1 + ε Σ_i (±1)) / 2^n, with bit 0 = spin up.
    let diag = DVector::from_fn(dim, |b, _| {
        let sum: f64 = (0..system.n_input_spins())
            .map(|site| {
                let bit = (b >> (n - 1 - site)) & 1;
                if bit == 0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .sum();
        c(norm * (1.0 + epsilon * sum), 0.0)
    });
    Ok(DensityState {
        matrix: ComplexMatrix::from_diagonal(&diag),
        epsilon,
    })
}

/// Rotation angle `arccos(s′)` for a signed system input.
pub fn rotation_angle(s: f64) -> Result<f64, ReservoirError> {
    if !(-1.0..=1.0).contains(&s) {
        return Err(ReservoirError::InputOutOfRange { value: s });
    }
    Ok(s.acos())
}

/// Maps a unit-interval task input `s ∈ [0, 1]` to the signed system input `2s − 1`.
pub fn unit_to_signed(s: f64) -> f64 {
    2.0 * s - 1.0
}

/// Global rotation `exp(−i θ Σ_{i∈input} I_axis^i)` with `θ = arccos(s)`.
/// The probe spin is left untouched.
pub fn input_unitary(
    system: &SpinSystem,
    s: f64,
    axis: RotationAxis,
) -> Result<ComplexMatrix, ReservoirError> {
    let theta = rotation_angle(s)?;
    let sigma = pauli(axis.into());
    let single = ComplexMatrix::identity(2, 2) * c((theta / 2.0).cos(), 0.0)
        - sigma * c(0.0, (theta / 2.0).sin());
    let factors: Vec<Option<&ComplexMatrix>> = (0..system.n_spins())
        .map(|k| (k < system.n_input_spins()).then_some(&single))
        .collect();
    Ok(tensor_of(&factors))
}

/// `U ρ U†`.
pub fn evolve(rho: &DensityState, u: &ComplexMatrix) -> Result<DensityState, ReservoirError> {
    if u.shape() != rho.matrix.shape() {
        return Err(LinalgError::DimensionMismatch {
            op: "evolve",
            expected: format!("{}x{}", rho.matrix.nrows(), rho.matrix.ncols()),
            actual: format!("{}x{}", u.nrows(), u.ncols()),
        }
        .into());
    }
    let residual = unitarity_residual(u);
    if residual > UNITARY_TOL {
        return Err(LinalgError::NotUnitary {
            residual,
            tolerance: UNITARY_TOL,
        }
        .into());
    }
    Ok(evolve_unchecked(rho, u, &u.adjoint()))
}

fn evolve_unchecked(rho: &DensityState, u: &ComplexMatrix, u_dag: &ComplexMatrix) -> DensityState {
    DensityState {
        matrix: u * &rho.matrix * u_dag,
        epsilon: rho.epsilon,
    }
}

/// Probe readout `Tr(ρ · 2 I_Z^C)`, normalized by `ε` when possible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSignal {
    pub value: f64,
    /// `false` when `ε = 0` and `value` is the raw expectation.
    pub normalized: bool,
}

fn probe_observable(system: &SpinSystem) -> ComplexMatrix {
    site_operator(system.n_spins(), system.probe_site(), Axis::Z)
        .expect("probe site in range")
        .map(|z| z * 2.0)
}

/// Ensemble readout of the probe `Z` magnetization. The state is not modified.
pub fn measure_probe_z(
    rho: &DensityState,
    system: &SpinSystem,
) -> Result<ProbeSignal, ReservoirError> {
    let raw = rho.expectation(&probe_observable(system))?;
    Ok(normalize(raw, rho.epsilon))
}

fn normalize(raw: f64, epsilon: f64) -> ProbeSignal {
    if epsilon == 0.0 {
        ProbeSignal {
            value: raw,
            normalized: false,
        }
    } else {
        ProbeSignal {
            value: raw / epsilon,
            normalized: true,
        }
    }
}

/// Timing of one input sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceParams {
    /// Number of inputs per stream, `L`.
    pub input_length: usize,
    /// Probe samples after each input, `M`.
    pub samples_per_input: usize,
    /// Evolution time between samples, seconds.
    pub sample_interval: f64,
    pub rotation_axis: RotationAxis,
}

impl Default for SequenceParams {
    fn default() -> Self {
        Self {
            input_length: DEFAULT_INPUT_LENGTH,
            samples_per_input: DEFAULT_SAMPLES_PER_INPUT,
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            rotation_axis: RotationAxis::Y,
        }
    }
}

impl SequenceParams {
    pub fn validate(&self) -> Result<(), ReservoirError> {
        if self.input_length == 0 {
            return Err(ReservoirError::InvalidParams(
                "input_length must be >= 1".into(),
            ));
        }
        if self.samples_per_input == 0 {
            return Err(ReservoirError::InvalidParams(
                "samples_per_input must be >= 1".into(),
            ));
        }
        if !(self.sample_interval.is_finite() && self.sample_interval > 0.0) {
            return Err(ReservoirError::InvalidParams(format!(
                "sample_interval must be positive, got {}",
                self.sample_interval
            )));
        }
        Ok(())
    }

    pub fn with_input_length(mut self, l: usize) -> Self {
        self.input_length = l;
        self
    }
}

/// Sampled probe signals `x[l][m]` for one input stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirTrace {
    /// Row-major `L × M`.
    signals: Vec<f64>,
    pub input_stream: Vec<f64>,
    pub params: SequenceParams,
}

impl ReservoirTrace {
    pub fn new(
        signals: Vec<f64>,
        input_stream: Vec<f64>,
        params: SequenceParams,
    ) -> Result<Self, ReservoirError> {
        let expected = params.input_length * params.samples_per_input;
        if signals.len() != expected {
            return Err(ReservoirError::InvalidParams(format!(
                "trace has {} signals, expected {expected}",
                signals.len()
            )));
        }
        if signals.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite("reservoir trace").into());
        }
        Ok(Self {
            signals,
            input_stream,
            params,
        })
    }

    pub fn input_length(&self) -> usize {
        self.params.input_length
    }

    pub fn samples_per_input(&self) -> usize {
        self.params.samples_per_input
    }

    /// Zero-based `(l, m)` access.
    pub fn signal(&self, l: usize, m: usize) -> f64 {
        self.signals[l * self.params.samples_per_input + m]
    }

    /// Signals in `(l, m)` order; index `l·M + m`.
    pub fn flattened(&self) -> &[f64] {
        &self.signals
    }

    /// Keeps only the first `m_used` samples after each input.
    pub fn truncated(&self, m_used: usize) -> Result<Self, ReservoirError> {
        let m = self.params.samples_per_input;
        if m_used == 0 || m_used > m {
            return Err(ReservoirError::InvalidParams(format!(
                "cannot keep {m_used} of {m} samples"
            )));
        }
        let signals = self
            .signals
            .chunks(m)
            .flat_map(|row| row[..m_used].iter().copied())
            .collect();
        Ok(Self {
            signals,
            input_stream: self.input_stream.clone(),
            params: SequenceParams {
                samples_per_input: m_used,
                ..self.params
            },
        })
    }
}

/// Immutable, precomputed reservoir: Hamiltonian spectrum, one-step
/// propagator and probe observable. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct Reservoir {
    system: SpinSystem,
    params: SequenceParams,
    hamiltonian: ComplexMatrix,
    spectrum: EigDecomposition,
    step: ComplexMatrix,
    step_dag: ComplexMatrix,
    probe: ComplexMatrix,
}

impl Reservoir {
    pub fn new(system: SpinSystem, params: SequenceParams) -> Result<Self, ReservoirError> {
        params.validate()?;
        let hamiltonian = build_hamiltonian(&system);
        let spectrum = linalg::herm_eig(&hamiltonian)?;
        let step = spectrum.unitary(params.sample_interval);
        let step_dag = step.adjoint();
        let probe = probe_observable(&system);
        Ok(Self {
            system,
            params,
            hamiltonian,
            spectrum,
            step,
            step_dag,
            probe,
        })
    }

    pub fn system(&self) -> &SpinSystem {
        &self.system
    }

    pub fn params(&self) -> &SequenceParams {
        &self.params
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn spectrum(&self) -> &EigDecomposition {
        &self.spectrum
    }

    /// Propagator for one sampling interval.
    pub fn step_unitary(&self) -> &ComplexMatrix {
        &self.step
    }

    /// Runs one input stream from a fresh thermal state.
    ///
    /// For each input `s′_l`: inject with the global rotation, then `M` times
    /// evolve for one sampling interval and record the probe signal.
    pub fn run(&self, stream: &[f64], epsilon: f64) -> Result<ReservoirTrace, ReservoirError> {
        let l_len = self.params.input_length;
        if stream.len() != l_len {
            return Err(ReservoirError::StreamLength {
                expected: l_len,
                actual: stream.len(),
            });
        }
        // Only the traceless deviation `ρ − 1/2^n` is propagated. The identity
        // part is invariant under conjugation, and carrying it through finite
        // precision matmuls leaves roundoff of order 2^-n · ε_mach that the
        // 1/ε normalization would amplify.
        let rho = thermal_initial_state(&self.system, epsilon)?;
        let dim = self.system.dimension();
        let mut deviation = DensityState {
            matrix: rho.matrix - ComplexMatrix::identity(dim, dim) * c(1.0 / dim as f64, 0.0),
            epsilon,
        };
        let mut signals = Vec::with_capacity(l_len * self.params.samples_per_input);
        for &s in stream {
            let u_in = input_unitary(&self.system, s, self.params.rotation_axis)?;
            deviation = evolve_unchecked(&deviation, &u_in, &u_in.adjoint());
            for _ in 0..self.params.samples_per_input {
                deviation = evolve_unchecked(&deviation, &self.step, &self.step_dag);
                let raw = trace_product(&deviation.matrix, &self.probe)?;
                signals.push(normalize(raw, epsilon).value);
            }
        }
        ReservoirTrace::new(signals, stream.to_vec(), self.params)
    }
}

/// One-shot convenience wrapper around [`Reservoir::run`].
pub fn run_sequence(
    system: &SpinSystem,
    stream: &[f64],
    params: &SequenceParams,
    epsilon: f64,
) -> Result<ReservoirTrace, ReservoirError> {
    Reservoir::new(system.clone(), *params)?.run(stream, epsilon)
}

/// Largest entrywise `|[A, B]|`.
pub fn commutator_norm(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    max_abs(&(a * b - b * a))
}
