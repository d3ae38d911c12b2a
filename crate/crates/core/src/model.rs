//! The likelihood model: density matrices, measurement operators, shot
//! datasets, the empirical negative log-likelihood and its gradients.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hermitian::{check_same_dim, trace_product, HermitianMatrix};

/// Any `tr(A rho)` at or below this is treated as a zero-probability outcome.
pub const SINGULAR_TRACE: f64 = 1e-300;

const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

/// A Hermitian, positive semi-definite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: HermitianMatrix,
}

impl DensityMatrix {
    /// Validates trace and positivity (both to 1e-10).
    pub fn new(matrix: HermitianMatrix) -> Result<Self> {
        let tr = matrix.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::ModelViolation(format!(
                "density matrix has trace {tr}"
            )));
        }
        let min = matrix.min_eigenvalue()?;
        if min < -PSD_TOL {
            return Err(Error::ModelViolation(format!(
                "density matrix has eigenvalue {min:e}"
            )));
        }
        Ok(Self { matrix })
    }

    /// Wraps a matrix the caller has already shown to be a density matrix
    /// (e.g. built from a positive spectrum that sums to one).
    pub(crate) fn from_trusted(matrix: HermitianMatrix) -> Self {
        Self { matrix }
    }

    /// `I / d`.
    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            matrix: HermitianMatrix::scaled_identity(d, 1.0 / d as f64),
        }
    }

    /// `|psi><psi|` for a unit vector `psi`.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        check_unit(psi)?;
        Self::new(HermitianMatrix::outer(psi))
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> HermitianMatrix {
        self.matrix
    }
}

/// A Hermitian PSD, nonzero matrix `A_i` attached to one observed outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOperator {
    matrix: HermitianMatrix,
}

impl MeasurementOperator {
    pub fn new(matrix: HermitianMatrix) -> Result<Self> {
        if matrix.max_abs_entry() == 0.0 {
            return Err(Error::ModelViolation("measurement operator is zero".into()));
        }
        let min = matrix.min_eigenvalue()?;
        if min < -PSD_TOL {
            return Err(Error::ModelViolation(format!(
                "measurement operator has eigenvalue {min:e}"
            )));
        }
        Ok(Self { matrix })
    }

    pub(crate) fn from_trusted(matrix: HermitianMatrix) -> Self {
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }
}

/// `n` shots stored as unique operators with multiplicities.
///
/// Shot `s` (0-based, `s < n`) belongs to the entry whose cumulative count
/// range contains it, so drawing `s` uniformly is the same as drawing an entry
/// with probability `count / n`.
#[derive(Debug, Clone)]
pub struct ShotDataset {
    dim: usize,
    entries: Vec<(MeasurementOperator, u64)>,
    cumulative: Vec<u64>,
    total_shots: u64,
}

impl ShotDataset {
    pub fn new(dim: usize, entries: Vec<(MeasurementOperator, u64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dataset dimension must be positive"));
        }
        let mut cumulative = Vec::with_capacity(entries.len());
        let mut total: u64 = 0;
        for (i, (op, count)) in entries.iter().enumerate() {
            if op.dim() != dim {
                return Err(Error::invalid(format!(
                    "entry {i} has dimension {} but the dataset is {dim}",
                    op.dim()
                )));
            }
            if *count == 0 {
                return Err(Error::invalid(format!("entry {i} has count 0")));
            }
            total = total
                .checked_add(*count)
                .ok_or_else(|| Error::invalid("total shot count overflows u64"))?;
            cumulative.push(total);
        }
        Ok(Self {
            dim,
            entries,
            cumulative,
            total_shots: total,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(MeasurementOperator, u64)] {
        &self.entries
    }

    pub fn total_shots(&self) -> u64 {
        self.total_shots
    }

    pub fn is_empty(&self) -> bool {
        self.total_shots == 0
    }

    /// Entry index of shot `shot` (0-based).
    pub fn entry_of_shot(&self, shot: u64) -> usize {
        debug_assert!(shot < self.total_shots);
        self.cumulative.partition_point(|&c| c <= shot)
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("dataset has no shots"));
        }
        Ok(())
    }
}

fn checked_trace(index: usize, a: &HermitianMatrix, rho: &HermitianMatrix) -> Result<f64> {
    let value = trace_product(a, rho)?;
    if value <= SINGULAR_TRACE || value.is_nan() {
        return Err(Error::SingularLikelihood { index, value });
    }
    Ok(value)
}

/// `f(rho) = (1/n) sum_i count_i * (-ln tr(A_i rho))`.
pub fn nll(data: &ShotDataset, rho: &DensityMatrix) -> Result<f64> {
    check_same_dim(data.dim(), rho.dim())?;
    data.require_nonempty()?;
    let mut acc = 0.0;
    for (i, (op, count)) in data.entries().iter().enumerate() {
        let p = checked_trace(i, op.matrix(), rho.matrix())?;
        acc -= *count as f64 * p.ln();
    }
    Ok(acc / data.total_shots() as f64)
}

/// `-ln tr(A rho)` for a single outcome.
pub fn sample_loss(a: &MeasurementOperator, rho: &DensityMatrix) -> Result<f64> {
    check_same_dim(a.dim(), rho.dim())?;
    Ok(-checked_trace(0, a.matrix(), rho.matrix())?.ln())
}

/// `-A / tr(A rho_bar)`.
pub fn sample_loss_gradient(
    a: &MeasurementOperator,
    rho_bar: &DensityMatrix,
) -> Result<HermitianMatrix> {
    check_same_dim(a.dim(), rho_bar.dim())?;
    let p = checked_trace(0, a.matrix(), rho_bar.matrix())?;
    Ok(a.matrix().scale(-1.0 / p))
}

/// Full-batch gradient `(1/n) sum_i count_i * (-A_i / tr(A_i rho))`.
pub fn nll_gradient(data: &ShotDataset, rho: &DensityMatrix) -> Result<HermitianMatrix> {
    check_same_dim(data.dim(), rho.dim())?;
    data.require_nonempty()?;
    let n = data.total_shots() as f64;
    let mut acc = HermitianMatrix::zeros(data.dim());
    for (i, (op, count)) in data.entries().iter().enumerate() {
        let p = checked_trace(i, op.matrix(), rho.matrix())?;
        acc.add_assign(&op.matrix().scale(-(*count as f64) / (p * n)))?;
    }
    Ok(acc)
}

fn check_unit(psi: &[Complex64]) -> Result<()> {
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::invalid(format!("state vector has norm {norm}")));
    }
    Ok(())
}

/// `<psi| rho |psi>` clamped to `[0, 1]`.
pub fn fidelity_pure(psi: &[Complex64], rho: &DensityMatrix) -> Result<f64> {
    check_same_dim(psi.len(), rho.dim())?;
    check_unit(psi)?;
    let m = rho.matrix().as_matrix();
    let d = psi.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..d {
        let mut row = Complex64::new(0.0, 0.0);
        for k in 0..d {
            row += m[(j, k)] * psi[k];
        }
        acc += psi[j].conj() * row;
    }
    Ok(acc.re.clamp(0.0, 1.0))
}

/// `(1/2) ||rho - sigma||_1`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    let diff = rho.matrix().add_scaled(sigma.matrix(), -1.0)?;
    Ok(0.5 * diff.eig()?.eigenvalues.iter().map(|v| v.abs()).sum::<f64>())
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;

    pub fn random_complex_matrix<R: Rng>(
        rng: &mut R,
        rows: usize,
        cols: usize,
    ) -> DMatrix<Complex64> {
        DMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    /// Full-rank density matrix `G G* + floor I`, normalized.
    pub fn random_density<R: Rng>(rng: &mut R, d: usize, floor: f64) -> DensityMatrix {
        let g = random_complex_matrix(rng, d, d);
        let m = &g * g.adjoint() + DMatrix::identity(d, d).map(|z: Complex64| z * floor);
        let h = HermitianMatrix::new(m).unwrap();
        let tr = h.trace();
        DensityMatrix::new(h.scale(1.0 / tr)).unwrap()
    }

    /// PSD operator with random rank in `1..=d`, spectral norm <= 1.
    pub fn random_operator<R: Rng>(rng: &mut R, d: usize) -> MeasurementOperator {
        let rank = rng.gen_range(1..=d);
        let g = random_complex_matrix(rng, d, rank);
        let h = HermitianMatrix::new(&g * g.adjoint()).unwrap();
        let top = *h.eig().unwrap().eigenvalues.last().unwrap();
        MeasurementOperator::new(h.scale(1.0 / top)).unwrap()
    }

    pub fn random_dataset<R: Rng>(rng: &mut R, d: usize, entries: usize) -> ShotDataset {
        let e = (0..entries)
            .map(|_| (random_operator(rng, d), rng.gen_range(1..20u64)))
            .collect();
        ShotDataset::new(d, e).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn op(m: HermitianMatrix) -> MeasurementOperator {
        MeasurementOperator::new(m).unwrap()
    }

    fn half_plus_z() -> MeasurementOperator {
        op(HermitianMatrix::from_diagonal(&[1.0, 0.0]))
    }

    fn diag_rho(p: &[f64]) -> DensityMatrix {
        DensityMatrix::new(HermitianMatrix::from_diagonal(p)).unwrap()
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(HermitianMatrix::from_diagonal(&[0.5, 0.6])).is_err());
        assert!(DensityMatrix::new(HermitianMatrix::from_diagonal(&[1.5, -0.5])).is_err());
        assert!(DensityMatrix::new(HermitianMatrix::from_diagonal(&[1.0, 0.0])).is_ok());
        assert!(MeasurementOperator::new(HermitianMatrix::zeros(2)).is_err());
        assert!(MeasurementOperator::new(HermitianMatrix::from_diagonal(&[1.0, -0.1])).is_err());
    }

    #[test]
    fn nll_examples() {
        let rho = random_density(&mut ChaCha8Rng::seed_from_u64(1), 3, 0.1);
        let id = ShotDataset::new(3, vec![(op(HermitianMatrix::identity(3)), 5)]).unwrap();
        assert!(nll(&id, &rho).unwrap().abs() < 1e-15);

        let scaled = ShotDataset::new(
            3,
            vec![(op(HermitianMatrix::scaled_identity(3, 1.0 / 3.0)), 2)],
        )
        .unwrap();
        assert!((nll(&scaled, &rho).unwrap() - 3f64.ln()).abs() < 1e-14);

        let z = ShotDataset::new(2, vec![(half_plus_z(), 1)]).unwrap();
        let v = nll(&z, &DensityMatrix::maximally_mixed(2)).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn nll_reports_singular_index() {
        let data = ShotDataset::new(
            2,
            vec![
                (op(HermitianMatrix::from_diagonal(&[1.0, 0.0])), 1),
                (op(HermitianMatrix::from_diagonal(&[0.0, 1.0])), 1),
            ],
        )
        .unwrap();
        let err = nll(&data, &diag_rho(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::SingularLikelihood { index: 1, .. }));
        assert!(nll_gradient(&data, &diag_rho(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn empty_dataset_is_rejected_by_solvers() {
        let data = ShotDataset::new(2, vec![]).unwrap();
        assert_eq!(data.total_shots(), 0);
        assert!(nll(&data, &DensityMatrix::maximally_mixed(2)).is_err());
    }

    #[test]
    fn sample_loss_examples() {
        let rho = DensityMatrix::maximally_mixed(2);
        assert_eq!(
            sample_loss(&op(HermitianMatrix::identity(2)), &rho).unwrap(),
            0.0
        );
        assert_eq!(
            sample_loss(&half_plus_z(), &diag_rho(&[1.0, 0.0])).unwrap(),
            0.0
        );
        let v = sample_loss(&half_plus_z(), &diag_rho(&[0.25, 0.75])).unwrap();
        assert!((v - 4f64.ln()).abs() < 1e-15);
        assert!(sample_loss(&half_plus_z(), &diag_rho(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn sample_gradient_examples() {
        let rho = random_density(&mut ChaCha8Rng::seed_from_u64(2), 2, 0.1);
        let g = sample_loss_gradient(&op(HermitianMatrix::identity(2)), &rho).unwrap();
        assert!(
            g.add_scaled(&HermitianMatrix::identity(2), 1.0)
                .unwrap()
                .max_abs_entry()
                < 1e-15
        );

        let g = sample_loss_gradient(&half_plus_z(), &DensityMatrix::maximally_mixed(2)).unwrap();
        assert_eq!(g, HermitianMatrix::from_diagonal(&[-2.0, 0.0]));
    }

    #[test]
    fn sample_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [2, 3, 4] {
            let rho = random_density(&mut rng, d, 0.5);
            let a = random_operator(&mut rng, d);
            let g = sample_loss_gradient(&a, &rho).unwrap();
            // traceless Hermitian direction
            let raw = HermitianMatrix::new(random_complex_matrix(&mut rng, d, d)).unwrap();
            let dir = raw
                .add_scaled(&HermitianMatrix::identity(d), -raw.trace() / d as f64)
                .unwrap();
            let eps = 1e-6;
            let plus = DensityMatrix::from_trusted(rho.matrix().add_scaled(&dir, eps).unwrap());
            let minus = DensityMatrix::from_trusted(rho.matrix().add_scaled(&dir, -eps).unwrap());
            let fd =
                (sample_loss(&a, &plus).unwrap() - sample_loss(&a, &minus).unwrap()) / (2.0 * eps);
            let analytic = trace_product(&g, &dir).unwrap();
            assert!((fd - analytic).abs() < 1e-6, "d={d}: fd {fd} vs {analytic}");
        }
    }

    #[test]
    fn nll_gradient_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = random_density(&mut rng, 3, 0.1);
        let a = random_operator(&mut rng, 3);
        let single = ShotDataset::new(3, vec![(a.clone(), 4)]).unwrap();
        let g1 = nll_gradient(&single, &rho).unwrap();
        let g2 = sample_loss_gradient(&a, &rho).unwrap();
        assert!(g1.add_scaled(&g2, -1.0).unwrap().frobenius_norm() <= 1e-12 * g2.frobenius_norm());

        let pair = ShotDataset::new(
            3,
            vec![
                (op(HermitianMatrix::identity(3)), 1),
                (op(HermitianMatrix::scaled_identity(3, 1.0 / 3.0)), 1),
            ],
        )
        .unwrap();
        let g = nll_gradient(&pair, &rho).unwrap();
        assert!(
            g.add_scaled(&HermitianMatrix::identity(3), 1.0)
                .unwrap()
                .max_abs_entry()
                < 1e-14
        );
    }

    #[test]
    fn fidelity_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let psi = [Complex64::new(h, 0.0), Complex64::new(0.0, h)];
        let rho = DensityMatrix::pure(&psi).unwrap();
        assert!((fidelity_pure(&psi, &rho).unwrap() - 1.0).abs() < 1e-15);
        assert!(
            (fidelity_pure(&psi, &DensityMatrix::maximally_mixed(2)).unwrap() - 0.5).abs() < 1e-15
        );
        let orth = [Complex64::new(h, 0.0), Complex64::new(0.0, -h)];
        assert!(fidelity_pure(&orth, &rho).unwrap() < 1e-15);
        assert!(fidelity_pure(&psi, &DensityMatrix::maximally_mixed(3)).is_err());
        assert!(
            fidelity_pure(&[Complex64::new(1.0, 1.0), Complex64::new(0.0, 0.0)], &rho).is_err()
        );
    }

    #[test]
    fn shot_lookup_follows_counts() {
        let data = ShotDataset::new(
            2,
            vec![
                (half_plus_z(), 3),
                (op(HermitianMatrix::from_diagonal(&[0.0, 1.0])), 1),
            ],
        )
        .unwrap();
        let idx: Vec<usize> = (0..4).map(|s| data.entry_of_shot(s)).collect();
        assert_eq!(idx, vec![0, 0, 0, 1]);
        assert!(ShotDataset::new(2, vec![(half_plus_z(), 0)]).is_err());
        assert!(ShotDataset::new(3, vec![(half_plus_z(), 1)]).is_err());
    }

    #[test]
    fn nll_invariant_under_permutation_and_splitting() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let data = random_dataset(&mut rng, 3, 4);
            let rho = random_density(&mut rng, 3, 0.05);
            let base = nll(&data, &rho).unwrap();

            let mut rev: Vec<_> = data.entries().to_vec();
            rev.reverse();
            let permuted = ShotDataset::new(3, rev).unwrap();
            assert!((nll(&permuted, &rho).unwrap() - base).abs() <= 1e-12 * base.abs());

            let split: Vec<_> = data
                .entries()
                .iter()
                .flat_map(|(a, k)| std::iter::repeat_n((a.clone(), 1), *k as usize))
                .collect();
            let split = ShotDataset::new(3, split).unwrap();
            assert!((nll(&split, &rho).unwrap() - base).abs() <= 1e-12 * base.abs());

            // count-1 expansion average of sample gradients
            let mut avg = HermitianMatrix::zeros(3);
            for (a, _) in split.entries() {
                avg.add_assign(&sample_loss_gradient(a, &rho).unwrap())
                    .unwrap();
            }
            let avg = avg.scale(1.0 / split.total_shots() as f64);
            let g = nll_gradient(&data, &rho).unwrap();
            assert!(
                g.add_scaled(&avg, -1.0).unwrap().frobenius_norm() <= 1e-12 * g.frobenius_norm()
            );
        }
    }

    #[test]
    fn nll_nonnegative_for_contractive_operators() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let data = random_dataset(&mut rng, 4, 5);
            let rho = random_density(&mut rng, 4, 0.01);
            assert!(nll(&data, &rho).unwrap() >= 0.0);
        }
    }

    #[test]
    fn trace_distance_of_diagonals() {
        let a = diag_rho(&[0.75, 0.25]);
        let b = diag_rho(&[0.5, 0.5]);
        assert!((trace_distance(&a, &b).unwrap() - 0.25).abs() < 1e-15);
    }
}
