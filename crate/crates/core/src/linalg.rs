//! Dense complex and real matrix kernels.
//!
//! Everything here is dense: the reservoir Hilbert space is at most a few
//! hundred dimensions and the readout design matrices have tens to a few
//! hundred columns. Eigenvalues are returned in ascending order and singular
//! values in descending order so downstream reports do not depend on the
//! ordering quirks of the underlying decomposition routine.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

/// Complex double-precision scalar.
pub type C64 = Complex64;

/// Dense complex matrix used for operators and density matrices.
pub type ComplexMatrix = DMatrix<C64>;

/// Dense real matrix used for design matrices.
pub type RealMatrix = DMatrix<f64>;

/// Tolerance for treating a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Tolerance for treating a matrix as unitary.
pub const UNITARY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not Hermitian: max |A - A^H| = {residual:e} (tolerance {tolerance:e})")]
    NotHermitian { residual: f64, tolerance: f64 },
    #[error("matrix is not unitary: max |U^H U - 1| = {residual:e} (tolerance {tolerance:e})")]
    NotUnitary { residual: f64, tolerance: f64 },
    #[error("dimension mismatch: {op} expects {expected}, got {actual}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        actual: String,
    },
    #[error("trace has imaginary residual {imag:e} for Hermitian operands")]
    ComplexTrace { imag: f64 },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("empty input to {0}")]
    Empty(&'static str),
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = ComplexMatrix::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Largest entrywise magnitude of a complex matrix.
pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `max |A - A^H|`, or infinity for non-square input.
pub fn hermitian_residual(a: &ComplexMatrix) -> f64 {
    if !a.is_square() {
        return f64::INFINITY;
    }
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `max |U^H U - 1|`, or infinity for non-square input.
pub fn unitarity_residual(u: &ComplexMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let n = u.nrows();
    let prod = u.adjoint() * u;
    max_abs(&(prod - ComplexMatrix::identity(n, n)))
}

/// Eigendecomposition `A = V diag(λ) V^H` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct EigDecomposition {
    /// Real eigenvalues, ascending.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns, matching `eigenvalues`.
    pub eigenvectors: ComplexMatrix,
}

impl EigDecomposition {
    /// `V f(Λ) V^H` for a complex function of the eigenvalues.
    pub fn apply<F: Fn(f64) -> C64>(&self, f: F) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let fj = f(lambda);
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= fj);
        }
        scaled * v.adjoint()
    }

    /// `exp(-i H t)` reusing the stored decomposition.
    pub fn unitary(&self, t: f64) -> ComplexMatrix {
        self.apply(|lambda| C64::from_polar(1.0, -lambda * t))
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.apply(|lambda| C64::new(lambda, 0.0))
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn herm_eig(a: &ComplexMatrix) -> Result<EigDecomposition, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch {
            op: "herm_eig",
            expected: "square matrix".into(),
            actual: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::NonFinite("herm_eig"));
    }
    let residual = hermitian_residual(a);
    let tolerance = HERMITIAN_TOL * max_abs(a).max(1.0);
    if residual > tolerance {
        return Err(LinalgError::NotHermitian {
            residual,
            tolerance,
        });
    }
    // Symmetrize so the solver sees an exactly Hermitian input.
    let sym = (a + a.adjoint()).map(|z| z * 0.5);
    let eig = SymmetricEigen::new(sym);

    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        // Fix the phase: largest-magnitude component real and positive.
        let pivot = col
            .iter()
            .enumerate()
            .fold((0, 0.0), |best, (k, z)| {
                if z.norm() > best.1 + 1e-14 {
                    (k, z.norm())
                } else {
                    best
                }
            })
            .0;
        let phase = col[pivot] / col[pivot].norm();
        col.iter_mut().for_each(|z| *z /= phase);
        eigenvectors.set_column(dst, &col);
    }
    Ok(EigDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// `U = exp(-i H t)` for Hermitian `H` (angular-frequency units, `t` in seconds).
pub fn unitary_from_hamiltonian(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix, LinalgError> {
    Ok(herm_eig(h)?.unitary(t))
}

/// Real part of `Tr(rho · obs)`.
///
/// Both operands are expected to be Hermitian, so any imaginary part beyond
/// roundoff indicates a caller bug and is reported as an error.
pub fn trace_product(rho: &ComplexMatrix, obs: &ComplexMatrix) -> Result<f64, LinalgError> {
    if rho.shape() != obs.shape() || !rho.is_square() {
        return Err(LinalgError::DimensionMismatch {
            op: "trace_product",
            expected: format!("{}x{}", rho.nrows(), rho.ncols()),
            actual: format!("{}x{}", obs.nrows(), obs.ncols()),
        });
    }
    let n = rho.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += rho[(i, j)] * obs[(j, i)];
        }
    }
    if acc.im.abs() > 1e-10 * acc.re.abs().max(1.0) {
        return Err(LinalgError::ComplexTrace { imag: acc.im });
    }
    Ok(acc.re)
}

/// Singular-value cutoff for the pseudoinverse.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Tolerance {
    /// `max(rows, cols) · σ_max · 1e-12`.
    #[default]
    Auto,
    /// Absolute cutoff; singular values at or below it are discarded.
    Absolute(f64),
}

impl Tolerance {
    pub fn resolve(self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        match self {
            Tolerance::Auto => rows.max(cols) as f64 * sigma_max * 1e-12,
            Tolerance::Absolute(t) => t,
        }
    }
}

/// Minimum-norm least-squares solution obtained from the pseudoinverse.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresSolution {
    pub weights: DVector<f64>,
    pub effective_rank: usize,
    /// Descending.
    pub singular_values: DVector<f64>,
    pub tolerance_used: f64,
}

/// Thin SVD with singular values sorted descending.
struct SortedSvd {
    u: RealMatrix,
    sigma: DVector<f64>,
    v_t: RealMatrix,
}

fn sorted_svd(a: &RealMatrix) -> SortedSvd {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    SortedSvd {
        u: RealMatrix::from_fn(u.nrows(), k, |r, c| u[(r, order[c])]),
        sigma: DVector::from_iterator(k, order.iter().map(|&i| svd.singular_values[i])),
        v_t: RealMatrix::from_fn(k, v_t.ncols(), |r, c| v_t[(order[r], c)]),
    }
}

fn check_real_input(a: &RealMatrix, op: &'static str) -> Result<(), LinalgError> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(LinalgError::Empty(op));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite(op));
    }
    Ok(())
}

/// Moore-Penrose pseudoinverse of a real matrix.
pub fn pseudo_inverse(a: &RealMatrix, tolerance: Tolerance) -> Result<RealMatrix, LinalgError> {
    check_real_input(a, "pseudo_inverse")?;
    let svd = sorted_svd(a);
    let sigma_max = svd.sigma.iter().copied().fold(0.0, f64::max);
    let tol = tolerance.resolve(a.nrows(), a.ncols(), sigma_max);
    let mut out = RealMatrix::zeros(a.ncols(), a.nrows());
    for (k, &s) in svd.sigma.iter().enumerate() {
        if s > tol {
            out += (svd.v_t.row(k).transpose() * svd.u.column(k).transpose()) / s;
        }
    }
    Ok(out)
}

/// Solves `min ‖A w − y‖²` with the minimum-norm solution `w = A⁺ y`.
///
/// An all-zero design is not an error: it yields zero weights and rank 0.
pub fn least_squares_pinv(
    design: &RealMatrix,
    targets: &DVector<f64>,
    tolerance: Tolerance,
) -> Result<LeastSquaresSolution, LinalgError> {
    check_real_input(design, "least_squares_pinv")?;
    if targets.len() != design.nrows() {
        return Err(LinalgError::DimensionMismatch {
            op: "least_squares_pinv",
            expected: format!("{} targets", design.nrows()),
            actual: format!("{} targets", targets.len()),
        });
    }
    if targets.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite("least_squares_pinv targets"));
    }
    let svd = sorted_svd(design);
    let sigma_max = svd.sigma.iter().copied().fold(0.0, f64::max);
    let tol = tolerance.resolve(design.nrows(), design.ncols(), sigma_max);
    let mut weights = DVector::zeros(design.ncols());
    let mut rank = 0;
    for (k, &s) in svd.sigma.iter().enumerate() {
        if s > tol {
            rank += 1;
            let coeff = svd.u.column(k).dot(targets) / s;
            weights += svd.v_t.row(k).transpose() * coeff;
        }
    }
    Ok(LeastSquaresSolution {
        weights,
        effective_rank: rank,
        singular_values: svd.sigma,
        tolerance_used: tol,
    })
}

/// Minimum-norm least squares from accumulated normal equations.
///
/// Given `gram = AᵀA` and `rhs = Aᵀy` for a design that was never
/// materialized, returns `w = (AᵀA)⁺ Aᵀy`, which equals `A⁺y`. Singular values
/// of `A` are recovered as square roots of the Gram eigenvalues. The cutoff is
/// the larger of the requested tolerance and the roundoff floor of the Gram
/// eigenproblem, `dim · ε_mach · σ_max`.
pub fn least_squares_from_gram(
    gram: &RealMatrix,
    rhs: &DVector<f64>,
    rows: usize,
    tolerance: Tolerance,
) -> Result<LeastSquaresSolution, LinalgError> {
    check_real_input(gram, "least_squares_from_gram")?;
    let n = gram.nrows();
    if !gram.is_square() || rhs.len() != n {
        return Err(LinalgError::DimensionMismatch {
            op: "least_squares_from_gram",
            expected: format!("{n}x{n} Gram with {n}-vector"),
            actual: format!(
                "{}x{} Gram with {}-vector",
                gram.nrows(),
                gram.ncols(),
                rhs.len()
            ),
        });
    }
    let sym = (gram + gram.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let sigma =
        DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()));
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let requested = tolerance.resolve(rows, n, sigma_max);
    let floor = (n as f64 * f64::EPSILON).sqrt() * sigma_max;
    let tol = requested.max(floor);

    let mut weights = DVector::zeros(n);
    let mut rank = 0;
    for (k, &i) in order.iter().enumerate() {
        let s = sigma[k];
        if s > tol {
            rank += 1;
            let v = eig.eigenvectors.column(i);
            weights += v * (v.dot(rhs) / (s * s));
        }
    }
    Ok(LeastSquaresSolution {
        weights,
        effective_rank: rank,
        singular_values: sigma,
        tolerance_used: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    fn sigma_z() -> ComplexMatrix {
        ComplexMatrix::from_diagonal(&DVector::from_vec(vec![c(1., 0.), c(-1., 0.)]))
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(r, cols, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
        let a = random_matrix(rng, n, n);
        (&a + a.adjoint()).map(|z| z * 0.5)
    }

    #[test]
    fn kron_identity_and_pauli() {
        let i2 = ComplexMatrix::identity(2, 2);
        assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4, 4));
        let zz = kron(&sigma_z(), &sigma_z());
        let expected = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![
            c(1., 0.),
            c(-1., 0.),
            c(-1., 0.),
            c(1., 0.),
        ]));
        assert_eq!(zz, expected);
        let big = kron(&i2, &ComplexMatrix::identity(4, 4));
        assert_eq!(big.shape(), (8, 8));
    }

    #[test]
    fn kron_mixed_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = random_matrix(&mut rng, 2, 2);
            let b = random_matrix(&mut rng, 4, 4);
            let cm = random_matrix(&mut rng, 2, 2);
            let d = random_matrix(&mut rng, 4, 4);
            let lhs = kron(&a, &b) * kron(&cm, &d);
            let rhs = kron(&(&a * &cm), &(&b * &d));
            assert!(max_abs(&(lhs - rhs)) < 1e-12);
        }
    }

    #[test]
    fn eig_small_cases() {
        let d = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![c(3., 0.), c(1., 0.)]));
        let e = herm_eig(&d).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 3.0).abs() < 1e-14);
        let e = herm_eig(&sigma_x()).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let a = random_hermitian(&mut rng, 32);
        let e = herm_eig(&a).unwrap();
        let scale = max_abs(&a);
        assert!(max_abs(&(e.reconstruct() - &a)) < 1e-10 * scale);
        assert!(unitarity_residual(&e.eigenvectors) < 1e-10);
        let trace: f64 = (0..32).map(|i| a[(i, i)].re).sum();
        assert!((e.eigenvalues.sum() - trace).abs() < 1e-10 * 32.0);
        assert!(e.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn eig_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_hermitian(&mut rng, 16);
        let e1 = herm_eig(&a).unwrap();
        let e2 = herm_eig(&a).unwrap();
        assert_eq!(e1.eigenvalues, e2.eigenvalues);
        assert_eq!(e1.eigenvectors, e2.eigenvectors);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let a = ComplexMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        match herm_eig(&a) {
            Err(LinalgError::NotHermitian { residual, .. }) => {
                assert!((residual - 1.0).abs() < 1e-15)
            }
            other => panic!("expected NotHermitian, got {other:?}"),
        }
    }

    #[test]
    fn unitary_zero_time_and_diagonal() {
        let omega = 2.0 * std::f64::consts::PI * 1e3;
        let h = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![
            c(omega / 2.0, 0.),
            c(-omega / 2.0, 0.),
        ]));
        let u0 = unitary_from_hamiltonian(&h, 0.0).unwrap();
        assert!(max_abs(&(u0 - ComplexMatrix::identity(2, 2))) < 1e-15);
        let t = 1.7e-4;
        let u = unitary_from_hamiltonian(&h, t).unwrap();
        assert!((u[(0, 0)] - C64::from_polar(1.0, -omega * t / 2.0)).norm() < 1e-14);
        assert!((u[(1, 1)] - C64::from_polar(1.0, omega * t / 2.0)).norm() < 1e-14);
        assert!(u[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn unitary_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = random_hermitian(&mut rng, 8);
        let e = herm_eig(&h).unwrap();
        let lhs = e.unitary(0.3) * e.unitary(-1.1);
        assert!(max_abs(&(lhs - e.unitary(-0.8))) < 1e-9);
        assert!(unitarity_residual(&e.unitary(12.5)) < 1e-10);
    }

    #[test]
    fn trace_product_cases() {
        let half = ComplexMatrix::identity(2, 2).map(|z| z * 0.5);
        assert_eq!(trace_product(&half, &sigma_z()).unwrap(), 0.0);
        let up = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![c(1., 0.), c(0., 0.)]));
        assert_eq!(trace_product(&up, &sigma_z()).unwrap(), 1.0);
        let three = ComplexMatrix::identity(3, 3);
        assert!(matches!(
            trace_product(&up, &three),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pinv_identity_and_rank_one() {
        let sol = least_squares_pinv(
            &RealMatrix::identity(3, 3),
            &DVector::from_vec(vec![1., 2., 3.]),
            Tolerance::Auto,
        )
        .unwrap();
        assert!((sol.weights - DVector::from_vec(vec![1., 2., 3.])).amax() < 1e-14);
        assert_eq!(sol.effective_rank, 3);

        // Row space is span{(1,1)}; w = a(1,1) leaves residual (2a-1, 4a-2),
        // which vanishes at a = 0.5.
        let a = RealMatrix::from_row_slice(2, 2, &[1., 1., 2., 2.]);
        let sol =
            least_squares_pinv(&a, &DVector::from_vec(vec![1., 2.]), Tolerance::Auto).unwrap();
        assert_eq!(sol.effective_rank, 1);
        assert!((sol.weights[0] - 0.5).abs() < 1e-14);
        assert!((sol.weights[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn pinv_zero_design() {
        let sol = least_squares_pinv(
            &RealMatrix::zeros(4, 3),
            &DVector::from_vec(vec![1., 2., 3., 4.]),
            Tolerance::Auto,
        )
        .unwrap();
        assert_eq!(sol.effective_rank, 0);
        assert_eq!(sol.weights, DVector::zeros(3));
    }

    #[test]
    fn pinv_rejects_mismatch() {
        let err = least_squares_pinv(
            &RealMatrix::zeros(4, 3),
            &DVector::zeros(3),
            Tolerance::Auto,
        );
        assert!(matches!(err, Err(LinalgError::DimensionMismatch { .. })));
    }

    #[test]
    fn singular_values_descending() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = RealMatrix::from_fn(20, 7, |_, _| rng.random_range(-1.0..1.0));
        let sol = least_squares_pinv(&a, &DVector::zeros(20), Tolerance::Auto).unwrap();
        assert!(sol
            .singular_values
            .as_slice()
            .windows(2)
            .all(|w| w[0] >= w[1]));
        assert!(sol.effective_rank <= 7);
    }

    #[test]
    fn gram_route_matches_svd_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = RealMatrix::from_fn(60, 12, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(60, |_, _| rng.random_range(-1.0..1.0));
        let direct = least_squares_pinv(&a, &y, Tolerance::Auto).unwrap();
        let gram = a.transpose() * &a;
        let rhs = a.transpose() * &y;
        let via_gram = least_squares_from_gram(&gram, &rhs, 60, Tolerance::Auto).unwrap();
        assert_eq!(via_gram.effective_rank, 12);
        assert!((direct.weights - via_gram.weights).amax() < 1e-10);
    }

    #[test]
    fn gram_route_drops_null_space() {
        let a = RealMatrix::from_row_slice(2, 2, &[1., 1., 2., 2.]);
        let y = DVector::from_vec(vec![1., 2.]);
        let gram = a.transpose() * &a;
        let rhs = a.transpose() * &y;
        let sol = least_squares_from_gram(&gram, &rhs, 2, Tolerance::Auto).unwrap();
        assert_eq!(sol.effective_rank, 1);
        assert!((sol.weights[0] - 0.5).abs() < 1e-12);
        assert!((sol.weights[1] - 0.5).abs() < 1e-12);
    }
}
