//! Linear readout: `y = Σ_{l,m} W_{l,m} x_{l,m}`.
//!
//! Training minimizes the summed squared error with the Moore-Penrose
//! solution. Reported MSE is always the mean over instances.
//!
//! Noise augmentation replicates every design row `copies` times with i.i.d.
//! Gaussian noise. With tens of thousands of copies the augmented design is
//! never materialized; each instance contributes its augmented normal
//! equations ([`AugmentedRow`]) and training works from their sum. The noise
//! stream of row `k` is ChaCha8 seeded with `NoiseSpec::seed` on stream `k`,
//! drawn copy by copy and column by column, so [`augment_noise`] and the
//! streamed path see identical draws.

use crate::linalg::{self, LinalgError, RealMatrix, Tolerance};
use crate::reservoir::ReservoirTrace;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Paper-scale replication count for noise augmentation.
pub const DEFAULT_COPIES: usize = 10_000;

/// Noise standard deviation relative to the largest signal (10² over 10⁶).
pub const DEFAULT_RELATIVE_STD: f64 = 1e-4;

/// Digitization threshold; values at or above it map to 1.
pub const THRESHOLD: f64 = 0.5;

/// Copies are folded into the Gram matrix in batches of this many rows.
const GRAM_BATCH: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReadoutError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Column layout of a design matrix: `blocks` concatenated `L × M` traces.
///
/// Column index of `(block, l, m)` (zero-based) is `block·L·M + l·M + m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLayout {
    pub blocks: usize,
    pub input_length: usize,
    pub samples_per_input: usize,
}

impl TraceLayout {
    pub fn block_width(&self) -> usize {
        self.input_length * self.samples_per_input
    }

    pub fn width(&self) -> usize {
        self.blocks * self.block_width()
    }

    /// Columns kept when only the first `m_used` samples after each input are used.
    pub fn columns_for(&self, m_used: usize) -> Vec<usize> {
        let m = self.samples_per_input;
        (0..self.blocks * self.input_length)
            .flat_map(|row| (0..m_used.min(m)).map(move |k| row * m + k))
            .collect()
    }

    pub fn with_samples(&self, m_used: usize) -> Self {
        Self {
            samples_per_input: m_used,
            ..*self
        }
    }
}

/// `K × LM` matrix of reservoir signals, one row per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: RealMatrix,
    row_labels: Vec<String>,
    layout: TraceLayout,
}

impl DesignMatrix {
    pub fn new(
        values: RealMatrix,
        row_labels: Vec<String>,
        layout: TraceLayout,
    ) -> Result<Self, ReadoutError> {
        if values.nrows() != row_labels.len() {
            return Err(ReadoutError::Shape(format!(
                "{} rows but {} labels",
                values.nrows(),
                row_labels.len()
            )));
        }
        if values.ncols() != layout.width() {
            return Err(ReadoutError::Shape(format!(
                "{} columns but layout implies {}",
                values.ncols(),
                layout.width()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(ReadoutError::NonFinite("design matrix"));
        }
        Ok(Self {
            values,
            row_labels,
            layout,
        })
    }

    /// One row per group; each row concatenates the traces of its group.
    pub fn from_trace_groups(
        groups: &[Vec<&ReservoirTrace>],
        row_labels: Vec<String>,
    ) -> Result<Self, ReadoutError> {
        let first = groups
            .first()
            .and_then(|g| g.first())
            .ok_or(ReadoutError::Empty("trace list"))?;
        let layout = TraceLayout {
            blocks: groups[0].len(),
            input_length: first.input_length(),
            samples_per_input: first.samples_per_input(),
        };
        let width = layout.width();
        let mut data = Vec::with_capacity(groups.len() * width);
        for (k, group) in groups.iter().enumerate() {
            if group.len() != layout.blocks {
                return Err(ReadoutError::Shape(format!(
                    "row {k} has {} traces, expected {}",
                    group.len(),
                    layout.blocks
                )));
            }
            for trace in group {
                if trace.input_length() != layout.input_length
                    || trace.samples_per_input() != layout.samples_per_input
                {
                    return Err(ReadoutError::Shape(format!(
                        "row {k}: trace is {}x{}, expected {}x{}",
                        trace.input_length(),
                        trace.samples_per_input(),
                        layout.input_length,
                        layout.samples_per_input
                    )));
                }
                data.extend_from_slice(trace.flattened());
            }
        }
        Self::new(
            RealMatrix::from_row_slice(groups.len(), width, &data),
            row_labels,
            layout,
        )
    }

    pub fn values(&self) -> &RealMatrix {
        &self.values
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn layout(&self) -> TraceLayout {
        self.layout
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.values.row(k).iter().copied().collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Keeps only columns with sample index `m < m_used` in every block.
    pub fn subsample(&self, m_used: usize) -> Result<Self, ReadoutError> {
        if m_used == 0 || m_used > self.layout.samples_per_input {
            return Err(ReadoutError::Shape(format!(
                "cannot keep {m_used} of {} samples",
                self.layout.samples_per_input
            )));
        }
        let cols = self.layout.columns_for(m_used);
        let values = self.values.select_columns(cols.iter());
        Self::new(
            values,
            self.row_labels.clone(),
            self.layout.with_samples(m_used),
        )
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(indices.iter()),
            row_labels: indices
                .iter()
                .map(|&k| self.row_labels[k].clone())
                .collect(),
            layout: self.layout,
        }
    }

    /// Adds i.i.d. Gaussian noise of absolute standard deviation `std` to every entry.
    pub fn perturbed(&self, std: f64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut values = self.values.clone();
        for k in 0..values.nrows() {
            for j in 0..values.ncols() {
                let z: f64 = rng.sample(StandardNormal);
                values[(k, j)] += std * z;
            }
        }
        Self {
            values,
            row_labels: self.row_labels.clone(),
            layout: self.layout,
        }
    }
}

/// Assembles `K` single traces into a `K × LM` design matrix.
pub fn assemble_design_matrix(traces: &[ReservoirTrace]) -> Result<DesignMatrix, ReadoutError> {
    let groups: Vec<Vec<&ReservoirTrace>> = traces.iter().map(|t| vec![t]).collect();
    let labels = (0..traces.len()).map(|k| format!("k{}", k + 1)).collect();
    DesignMatrix::from_trace_groups(&groups, labels)
}

/// Gaussian replication of training rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub copies: usize,
    /// Noise std as a fraction of the largest absolute design entry.
    pub relative_std: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            copies: DEFAULT_COPIES,
            relative_std: DEFAULT_RELATIVE_STD,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), ReadoutError> {
        if self.copies == 0 {
            return Err(ReadoutError::InvalidNoise("copies must be >= 1".into()));
        }
        if !(self.relative_std.is_finite() && self.relative_std >= 0.0) {
            return Err(ReadoutError::InvalidNoise(format!(
                "relative_std must be >= 0, got {}",
                self.relative_std
            )));
        }
        Ok(())
    }

    /// Absolute noise level for a design.
    pub fn absolute_std(&self, design: &DesignMatrix) -> f64 {
        self.relative_std * design.max_abs()
    }
}

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

fn check_targets(design: &DesignMatrix, targets: &DVector<f64>) -> Result<(), ReadoutError> {
    if targets.len() != design.rows() {
        return Err(ReadoutError::Shape(format!(
            "{} targets for {} rows",
            targets.len(),
            design.rows()
        )));
    }
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(ReadoutError::NonFinite("targets"));
    }
    Ok(())
}

/// Materialized noise augmentation: `K·copies` rows, row `k` replicated
/// contiguously, targets repeated unchanged.
pub fn augment_noise(
    design: &DesignMatrix,
    targets: &DVector<f64>,
    spec: &NoiseSpec,
) -> Result<(DesignMatrix, DVector<f64>), ReadoutError> {
    spec.validate()?;
    check_targets(design, targets)?;
    let std = spec.absolute_std(design);
    let (k_rows, cols) = (design.rows(), design.cols());
    let mut values = RealMatrix::zeros(k_rows * spec.copies, cols);
    let mut labels = Vec::with_capacity(k_rows * spec.copies);
    let mut out_targets = DVector::zeros(k_rows * spec.copies);
    for k in 0..k_rows {
        let mut rng = row_rng(spec.seed, k);
        for c in 0..spec.copies {
            let r = k * spec.copies + c;
            for j in 0..cols {
                let z: f64 = rng.sample(StandardNormal);
                values[(r, j)] = design.values[(k, j)] + std * z;
            }
            labels.push(format!("{}#{}", design.row_labels[k], c + 1));
            out_targets[r] = targets[k];
        }
    }
    Ok((
        DesignMatrix::new(values, labels, design.layout)?,
        out_targets,
    ))
}

/// Noise-augmented normal-equation contribution of one design row:
/// `gram = Σ_c v_c v_cᵀ` and `sum = Σ_c v_c` over the `copies` noisy
/// replicas `v_c`. With a bias column the replicas carry a trailing 1 that is
/// not perturbed.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedRow {
    pub gram: RealMatrix,
    pub sum: DVector<f64>,
    pub copies: usize,
}

fn augmented_row(
    values: &[f64],
    std: f64,
    spec: &NoiseSpec,
    row: usize,
    bias: bool,
) -> AugmentedRow {
    let cols = values.len();
    let d = cols + usize::from(bias);
    let mut rng = row_rng(spec.seed, row);
    let mut gram = RealMatrix::zeros(d, d);
    let mut sum = DVector::zeros(d);
    let mut done = 0;
    while done < spec.copies {
        let batch = GRAM_BATCH.min(spec.copies - done);
        let mut block = RealMatrix::zeros(batch, d);
        for c in 0..batch {
            for j in 0..cols {
                let z: f64 = rng.sample(StandardNormal);
                block[(c, j)] = values[j] + std * z;
            }
            if bias {
                block[(c, cols)] = 1.0;
            }
        }
        gram += block.tr_mul(&block);
        sum += block.row_sum().transpose();
        done += batch;
    }
    AugmentedRow {
        gram,
        sum,
        copies: spec.copies,
    }
}

/// Per-row augmented normal equations for every row of `design`.
///
/// The noise level is `relative_std · max|design|` over the whole design,
/// so subsets of rows can later be combined consistently.
pub fn augmented_rows(
    design: &DesignMatrix,
    spec: &NoiseSpec,
    bias: bool,
) -> Result<Vec<AugmentedRow>, ReadoutError> {
    spec.validate()?;
    let std = spec.absolute_std(design);
    let rows: Vec<Vec<f64>> = (0..design.rows()).map(|k| design.row(k)).collect();
    let build = |(k, row): (usize, &Vec<f64>)| augmented_row(row, std, spec, k, bias);
    #[cfg(feature = "parallel")]
    let out = rows.par_iter().enumerate().map(build).collect();
    #[cfg(not(feature = "parallel"))]
    let out = rows.iter().enumerate().map(build).collect();
    Ok(out)
}

/// Accumulated normal equations `AᵀA w = Aᵀy` for a (possibly virtual) design `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    pub gram: RealMatrix,
    pub rhs: DVector<f64>,
    /// `yᵀy`.
    pub target_energy: f64,
    /// Number of (virtual) design rows.
    pub rows: usize,
}

impl NormalEquations {
    /// Sums the augmented rows at `indices` against their targets.
    pub fn from_augmented(
        rows: &[AugmentedRow],
        targets: &DVector<f64>,
        indices: &[usize],
    ) -> Result<Self, ReadoutError> {
        let first = indices
            .first()
            .ok_or(ReadoutError::Empty("training rows"))?;
        if rows.len() != targets.len() {
            return Err(ReadoutError::Shape(format!(
                "{} augmented rows for {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let d = rows[*first].sum.len();
        let mut gram = RealMatrix::zeros(d, d);
        let mut rhs = DVector::zeros(d);
        let mut target_energy = 0.0;
        let mut count = 0;
        for &k in indices {
            let r = &rows[k];
            gram += &r.gram;
            rhs.axpy(targets[k], &r.sum, 1.0);
            target_energy += r.copies as f64 * targets[k] * targets[k];
            count += r.copies;
        }
        Ok(Self {
            gram,
            rhs,
            target_energy,
            rows: count,
        })
    }

    /// Restricts to a subset of columns (rows and columns of the Gram matrix).
    pub fn select(&self, cols: &[usize]) -> Self {
        Self {
            gram: self
                .gram
                .select_rows(cols.iter())
                .select_columns(cols.iter()),
            rhs: self.rhs.select_rows(cols.iter()),
            target_energy: self.target_energy,
            rows: self.rows,
        }
    }
}

/// Training options for the readout.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReadoutConfig {
    pub tolerance: Tolerance,
    /// Append a constant column. Off by default: the plain readout has no offset.
    pub bias: bool,
}

/// Trained linear readout.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutModel {
    /// One weight per design column, in design column order.
    pub weights: DVector<f64>,
    pub bias: Option<f64>,
    pub tolerance_used: f64,
    pub effective_rank: usize,
    /// Mean squared error on the training rows.
    pub training_mse: f64,
}

fn with_bias_column(values: &RealMatrix) -> RealMatrix {
    values.clone().resize_horizontally(values.ncols() + 1, 1.0)
}

fn split_weights(w: DVector<f64>, bias: bool) -> (DVector<f64>, Option<f64>) {
    if bias {
        let n = w.len() - 1;
        let b = w[n];
        (w.rows(0, n).into_owned(), Some(b))
    } else {
        (w, None)
    }
}

/// Fits `W = R⁺ ȳ` on a materialized design.
pub fn train(
    design: &DesignMatrix,
    targets: &DVector<f64>,
    config: &ReadoutConfig,
) -> Result<ReadoutModel, ReadoutError> {
    check_targets(design, targets)?;
    if design.rows() == 0 {
        return Err(ReadoutError::Empty("design matrix"));
    }
    let a = if config.bias {
        with_bias_column(&design.values)
    } else {
        design.values.clone()
    };
    let sol = linalg::least_squares_pinv(&a, targets, config.tolerance)?;
    let fitted = &a * &sol.weights;
    let training_mse = (fitted - targets).norm_squared() / targets.len() as f64;
    let (weights, bias) = split_weights(sol.weights, config.bias);
    Ok(ReadoutModel {
        weights,
        bias,
        tolerance_used: sol.tolerance_used,
        effective_rank: sol.effective_rank,
        training_mse,
    })
}

/// Fits the readout from accumulated normal equations. The bias column, when
/// enabled, must be the last Gram column.
pub fn train_normal(
    eq: &NormalEquations,
    config: &ReadoutConfig,
) -> Result<ReadoutModel, ReadoutError> {
    let sol = linalg::least_squares_from_gram(&eq.gram, &eq.rhs, eq.rows, config.tolerance)?;
    let w = &sol.weights;
    let sse = (w.dot(&(&eq.gram * w)) - 2.0 * w.dot(&eq.rhs) + eq.target_energy).max(0.0);
    let (weights, bias) = split_weights(sol.weights, config.bias);
    Ok(ReadoutModel {
        weights,
        bias,
        tolerance_used: sol.tolerance_used,
        effective_rank: sol.effective_rank,
        training_mse: sse / eq.rows as f64,
    })
}

/// Noise-augmented training without materializing the replicated design.
pub fn train_augmented(
    design: &DesignMatrix,
    targets: &DVector<f64>,
    noise: &NoiseSpec,
    config: &ReadoutConfig,
) -> Result<ReadoutModel, ReadoutError> {
    check_targets(design, targets)?;
    let rows = augmented_rows(design, noise, config.bias)?;
    let all: Vec<usize> = (0..design.rows()).collect();
    train_normal(
        &NormalEquations::from_augmented(&rows, targets, &all)?,
        config,
    )
}

impl ReadoutModel {
    /// Number of signal columns the model expects.
    pub fn width(&self) -> usize {
        self.weights.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64, ReadoutError> {
        if row.len() != self.weights.len() {
            return Err(ReadoutError::Shape(format!(
                "row has {} signals, model expects {}",
                row.len(),
                self.weights.len()
            )));
        }
        let dot: f64 = row
            .iter()
            .zip(self.weights.iter())
            .map(|(x, w)| x * w)
            .sum();
        Ok(dot + self.bias.unwrap_or(0.0))
    }

    pub fn predict_design(&self, design: &DesignMatrix) -> Result<DVector<f64>, ReadoutError> {
        if design.cols() != self.weights.len() {
            return Err(ReadoutError::Shape(format!(
                "design has {} columns, model expects {}",
                design.cols(),
                self.weights.len()
            )));
        }
        let mut y = &design.values * &self.weights;
        if let Some(b) = self.bias {
            y.add_scalar_mut(b);
        }
        Ok(y)
    }
}

/// `Σ W_{l,m} x_{l,m}` for a single trace.
pub fn predict(model: &ReadoutModel, trace: &ReservoirTrace) -> Result<f64, ReadoutError> {
    model.predict_row(trace.flattened())
}

/// Rounds at [`THRESHOLD`]; exactly 0.5 maps to 1.
pub fn digitize(y: f64) -> u8 {
    u8::from(y >= THRESHOLD)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `(1/K) Σ (ȳ − y)²`.
    pub mse: f64,
    pub digitized_errors: Option<usize>,
    pub count: usize,
}

pub fn evaluate(
    predictions: &[f64],
    targets: &[f64],
    digitize_output: bool,
) -> Result<Metrics, ReadoutError> {
    if predictions.is_empty() {
        return Err(ReadoutError::Empty("predictions"));
    }
    if predictions.len() != targets.len() {
        return Err(ReadoutError::Shape(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let sse: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(y, t)| (t - y).powi(2))
        .sum();
    let digitized_errors = digitize_output.then(|| {
        predictions
            .iter()
            .zip(targets)
            .filter(|(y, t)| digitize(**y) != digitize(**t))
            .count()
    });
    Ok(Metrics {
        mse: sse / predictions.len() as f64,
        digitized_errors,
        count: predictions.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::SequenceParams;

    fn layout(cols: usize) -> TraceLayout {
        TraceLayout {
            blocks: 1,
            input_length: 1,
            samples_per_input: cols,
        }
    }

    fn design(rows: usize, cols: usize, data: &[f64]) -> DesignMatrix {
        DesignMatrix::new(
            RealMatrix::from_row_slice(rows, cols, data),
            (0..rows).map(|k| format!("r{k}")).collect(),
            layout(cols),
        )
        .unwrap()
    }

    fn random_design(seed: u64, rows: usize, cols: usize) -> (DesignMatrix, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let y = DVector::from_fn(rows, |_, _| rng.random_range(0.0..1.0));
        (design(rows, cols, &data), y)
    }

    fn trace(l: usize, m: usize, offset: f64) -> ReservoirTrace {
        let params = SequenceParams {
            input_length: l,
            samples_per_input: m,
            ..SequenceParams::default()
        };
        let signals = (0..l * m).map(|k| offset + k as f64).collect();
        ReservoirTrace::new(signals, vec![1.0; l], params).unwrap()
    }

    #[test]
    fn assemble_shapes() {
        let traces: Vec<_> = (0..16).map(|k| trace(4, 11, k as f64)).collect();
        let d = assemble_design_matrix(&traces).unwrap();
        assert_eq!((d.rows(), d.cols()), (16, 44));
        let single = assemble_design_matrix(&traces[..1]).unwrap();
        assert_eq!(single.row(0), traces[0].flattened());

        let sub = d.subsample(2).unwrap();
        assert_eq!(sub.cols(), 8);
        // Column (l=1, m=0) of the subsampled design is original column 11.
        assert_eq!(sub.values()[(3, 2)], d.values()[(3, 11)]);

        let bad = vec![trace(4, 11, 0.0), trace(4, 10, 0.0)];
        assert!(matches!(
            assemble_design_matrix(&bad),
            Err(ReadoutError::Shape(_))
        ));
    }

    #[test]
    fn multiplexed_rows_concatenate() {
        let t: Vec<_> = (0..4).map(|k| trace(4, 11, 100.0 * k as f64)).collect();
        let groups = vec![t.iter().collect::<Vec<_>>()];
        let d = DesignMatrix::from_trace_groups(&groups, vec!["x".into()]).unwrap();
        assert_eq!(d.cols(), 176);
        assert_eq!(d.values()[(0, 44)], 100.0);
        let sub = d.subsample(3).unwrap();
        assert_eq!(sub.cols(), 4 * 4 * 3);
        assert_eq!(sub.values()[(0, 12)], 100.0);
    }

    #[test]
    fn augmentation_shapes_and_zero_noise() {
        let (d, y) = random_design(1, 3, 4);
        let spec = NoiseSpec {
            copies: 5,
            relative_std: 0.0,
            seed: 9,
        };
        let (a, ya) = augment_noise(&d, &y, &spec).unwrap();
        assert_eq!(a.rows(), 15);
        for k in 0..3 {
            for c in 0..5 {
                assert_eq!(a.row(k * 5 + c), d.row(k));
                assert_eq!(ya[k * 5 + c], y[k]);
            }
        }
    }

    #[test]
    fn augmentation_is_reproducible_and_scaled() {
        let (d, y) = random_design(2, 4, 6);
        let spec = NoiseSpec {
            copies: 400,
            relative_std: 0.1,
            seed: 3,
        };
        let (a1, _) = augment_noise(&d, &y, &spec).unwrap();
        let (a2, _) = augment_noise(&d, &y, &spec).unwrap();
        assert_eq!(a1, a2);
        let std = spec.absolute_std(&d);
        let mut sq = 0.0;
        for k in 0..4 {
            for c in 0..400 {
                for j in 0..6 {
                    sq += (a1.values()[(k * 400 + c, j)] - d.values()[(k, j)]).powi(2);
                }
            }
        }
        let sample_std = (sq / (4.0 * 400.0 * 6.0)).sqrt();
        assert!((sample_std / std - 1.0).abs() < 0.05);
    }

    #[test]
    fn streamed_training_matches_materialized() {
        let (d, y) = random_design(4, 10, 6);
        let spec = NoiseSpec {
            copies: 50,
            relative_std: 0.05,
            seed: 17,
        };
        for bias in [false, true] {
            let cfg = ReadoutConfig {
                bias,
                ..ReadoutConfig::default()
            };
            let (a, ya) = augment_noise(&d, &y, &spec).unwrap();
            let direct = train(&a, &ya, &cfg).unwrap();
            let streamed = train_augmented(&d, &y, &spec, &cfg).unwrap();
            assert!((direct.weights.clone() - streamed.weights.clone()).amax() < 1e-9);
            assert!((direct.bias.unwrap_or(0.0) - streamed.bias.unwrap_or(0.0)).abs() < 1e-9);
            assert!((direct.training_mse - streamed.training_mse).abs() < 1e-9);
        }
    }

    #[test]
    fn gram_column_selection_matches_subsampled_design() {
        let params = SequenceParams {
            input_length: 2,
            samples_per_input: 5,
            ..SequenceParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let traces: Vec<_> = (0..7)
            .map(|_| {
                let s = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
                ReservoirTrace::new(s, vec![0.0, 0.0], params).unwrap()
            })
            .collect();
        let d = assemble_design_matrix(&traces).unwrap();
        let y = DVector::from_fn(7, |k, _| k as f64 / 7.0);
        let spec = NoiseSpec {
            copies: 20,
            relative_std: 0.01,
            seed: 1,
        };
        let rows = augmented_rows(&d, &spec, false).unwrap();
        let all: Vec<usize> = (0..7).collect();
        let eq = NormalEquations::from_augmented(&rows, &y, &all).unwrap();
        let cols = d.layout().columns_for(3);
        let reduced = eq.select(&cols);
        assert_eq!(reduced.gram.nrows(), 6);
        // Diagonal of the selected Gram equals the noisy column energy of the
        // kept columns, which is at least the clean energy minus noise effects.
        let clean = d.subsample(3).unwrap();
        for (j, &c) in cols.iter().enumerate() {
            assert_eq!(reduced.gram[(j, j)], eq.gram[(c, c)]);
            let energy: f64 = clean.values().column(j).iter().map(|x| x * x).sum::<f64>() * 20.0;
            assert!((reduced.gram[(j, j)] - energy).abs() < 0.05 * energy.max(1.0));
        }
    }

    #[test]
    fn train_exact_linear_case() {
        let (d, _) = random_design(5, 30, 8);
        let w0 = DVector::from_fn(8, |k, _| (k as f64) - 3.5);
        let y = d.values() * &w0;
        let model = train(&d, &y, &ReadoutConfig::default()).unwrap();
        assert!(model.training_mse < 1e-16 * y.norm_squared().max(1.0));
        assert!((model.weights.clone() - w0).amax() < 1e-10);
    }

    #[test]
    fn constant_column_absorbs_constant_target() {
        let d = design(3, 2, &[1.0, 0.3, 1.0, -0.7, 1.0, 0.1]);
        let y = DVector::from_element(3, 0.25);
        let model = train(&d, &y, &ReadoutConfig::default()).unwrap();
        assert!((model.weights[0] - 0.25).abs() < 1e-12);
        assert!(model.weights[1].abs() < 1e-12);
        assert!(model.training_mse < 1e-28);
    }

    #[test]
    fn predict_cases() {
        let t = trace(4, 11, 1.0);
        let zero = ReadoutModel {
            weights: DVector::zeros(44),
            bias: None,
            tolerance_used: 0.0,
            effective_rank: 0,
            training_mse: 0.0,
        };
        assert_eq!(predict(&zero, &t).unwrap(), 0.0);
        let mut unit = zero.clone();
        unit.weights[0] = 1.0;
        assert_eq!(predict(&unit, &t).unwrap(), t.signal(0, 0));
        assert!(predict(&unit, &trace(4, 10, 0.0)).is_err());
    }

    #[test]
    fn prediction_on_training_rows_matches_training_mse() {
        let (d, y) = random_design(6, 12, 5);
        let model = train(&d, &y, &ReadoutConfig::default()).unwrap();
        let preds: Vec<f64> = (0..12)
            .map(|k| model.predict_row(&d.row(k)).unwrap())
            .collect();
        let m = evaluate(&preds, y.as_slice(), false).unwrap();
        assert!((m.mse - model.training_mse).abs() < 1e-14);
    }

    #[test]
    fn evaluate_cases() {
        let m = evaluate(&[0.2, 0.9], &[0.2, 0.9], true).unwrap();
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.digitized_errors, Some(0));
        let m = evaluate(&[0.6, 0.4], &[1.0, 0.0], true).unwrap();
        assert!((m.mse - 0.16).abs() < 1e-15);
        assert_eq!(m.digitized_errors, Some(0));
        assert_eq!(digitize(0.5), 1);
        assert!(matches!(
            evaluate(&[], &[], true),
            Err(ReadoutError::Empty(_))
        ));
        assert!(evaluate(&[1.0], &[1.0, 2.0], false).is_err());
    }

    #[test]
    fn least_squares_beats_zero_weights() {
        for seed in 0..10 {
            let (d, y) = random_design(100 + seed, 20, 7);
            let model = train(&d, &y, &ReadoutConfig::default()).unwrap();
            let zero_mse = y.norm_squared() / 20.0;
            assert!(model.training_mse <= zero_mse + 1e-15);
        }
    }

    #[test]
    fn vanishing_noise_recovers_noiseless_weights() {
        let (d, y) = random_design(7, 16, 5);
        let clean = train(&d, &y, &ReadoutConfig::default()).unwrap();
        let spec = NoiseSpec {
            copies: 100,
            relative_std: 1e-6,
            seed: 2,
        };
        let noisy = train_augmented(&d, &y, &spec, &ReadoutConfig::default()).unwrap();
        assert!((clean.weights - noisy.weights).amax() < 1e-3);
    }
}
