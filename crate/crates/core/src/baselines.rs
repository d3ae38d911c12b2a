//! Full-batch reference solvers: the R-rho-R fixed-point iteration and
//! deterministic Burg mirror descent (used to estimate the optimal value).

use crate::error::{Error, Result};
use crate::hermitian::{check_same_dim, hermitize};
use crate::model::{nll_gradient, DensityMatrix, ShotDataset};
use crate::smd::{mirror_step, Iterate};

/// Default step size for [`batch_mirror_descent`].
pub const BATCH_MD_ETA: f64 = 0.5;

/// One R-rho-R update `rho <- R rho R / tr(R rho R)` with
/// `R = (1/n) sum_i count_i A_i / tr(A_i rho)`.
pub fn rpr_step(data: &ShotDataset, rho: &DensityMatrix) -> Result<DensityMatrix> {
    check_same_dim(data.dim(), rho.dim())?;
    // R = -grad f
    let r = nll_gradient(data, rho)?.scale(-1.0);
    let rrr = r.as_matrix() * rho.matrix().as_matrix() * r.as_matrix();
    let rrr = hermitize(&rrr)?;
    let tr = rrr.trace();
    if !(tr > 0.0) || !tr.is_finite() {
        return Err(Error::NumericDegeneracy(format!("tr(R rho R) = {tr:e}")));
    }
    Ok(DensityMatrix::from_trusted(rrr.scale(1.0 / tr)))
}

/// Iterates [`rpr_step`] from `I/d`, returning all `iterations + 1` iterates.
pub fn rpr(data: &ShotDataset, iterations: usize) -> Result<Vec<DensityMatrix>> {
    data.require_nonempty()?;
    let mut out = Vec::with_capacity(iterations + 1);
    out.push(DensityMatrix::maximally_mixed(data.dim()));
    for _ in 0..iterations {
        let next = rpr_step(data, out.last().expect("nonempty"))?;
        out.push(next);
    }
    Ok(out)
}

/// One deterministic mirror step with the full gradient at `current`.
pub fn batch_mirror_step(
    data: &ShotDataset,
    current: &Iterate,
    eta: f64,
    eps: f64,
) -> Result<Iterate> {
    let g = nll_gradient(data, current.rho())?;
    Ok(mirror_step(&g, current, eta, eps)?.next)
}

/// Full-batch Burg mirror descent from `I/d` without averaging; returns
/// `iterations + 1` iterates.
pub fn batch_mirror_descent(
    data: &ShotDataset,
    eta: f64,
    eps: f64,
    iterations: usize,
) -> Result<Vec<DensityMatrix>> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::invalid(format!("eta must be positive, got {eta}")));
    }
    data.require_nonempty()?;
    let mut current = Iterate::maximally_mixed(data.dim());
    let mut out = Vec::with_capacity(iterations + 1);
    out.push(current.rho().clone());
    for _ in 0..iterations {
        current = batch_mirror_step(data, &current, eta, eps)?;
        out.push(current.rho().clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::HermitianMatrix;
    use crate::model::{nll, trace_distance, MeasurementOperator};
    use crate::smd::{run, SolverConfig, DEFAULT_NEWTON_EPS};

    fn op(values: &[f64]) -> MeasurementOperator {
        MeasurementOperator::new(HermitianMatrix::from_diagonal(values)).unwrap()
    }

    fn binomial() -> ShotDataset {
        ShotDataset::new(2, vec![(op(&[1.0, 0.0]), 3), (op(&[0.0, 1.0]), 1)]).unwrap()
    }

    fn binomial_mle() -> DensityMatrix {
        DensityMatrix::new(HermitianMatrix::from_diagonal(&[0.75, 0.25])).unwrap()
    }

    fn binomial_fstar() -> f64 {
        -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln())
    }

    #[test]
    fn rpr_identity_dataset_is_fixed() {
        let data = ShotDataset::new(2, vec![(op(&[1.0, 1.0]), 7)]).unwrap();
        let rho = DensityMatrix::new(HermitianMatrix::from_diagonal(&[0.3, 0.7])).unwrap();
        let next = rpr_step(&data, &rho).unwrap();
        assert!(
            next.matrix()
                .add_scaled(rho.matrix(), -1.0)
                .unwrap()
                .max_abs_entry()
                < 1e-15
        );
    }

    #[test]
    fn rpr_single_projector() {
        let data = ShotDataset::new(2, vec![(op(&[1.0, 0.0]), 1)]).unwrap();
        let next = rpr_step(&data, &DensityMatrix::maximally_mixed(2)).unwrap();
        assert_eq!(next.matrix(), &HermitianMatrix::from_diagonal(&[1.0, 0.0]));
    }

    #[test]
    fn rpr_cycles_on_commuting_binomial_data() {
        // With diagonal data the update is p <- f^2 / p (normalized), an
        // involution: from I/2 it alternates between (1/2, 1/2) and (0.9, 0.1).
        let iterates = rpr(&binomial(), 200).unwrap();
        for (k, it) in iterates.iter().enumerate() {
            let p = it.matrix().as_matrix()[(0, 0)].re;
            let expected = if k % 2 == 0 { 0.5 } else { 0.9 };
            assert!((p - expected).abs() < 1e-12, "iterate {k}: {p}");
            assert!((it.matrix().trace() - 1.0).abs() < 1e-10);
            assert!(it.matrix().min_eigenvalue().unwrap() >= -1e-10);
        }
    }

    #[test]
    fn rpr_converges_on_tomographic_data() {
        use crate::synthetic::{generate, PauliSchedule, TrueState};
        let data = generate(2, 4000, 3, TrueState::W, PauliSchedule::Uniform)
            .unwrap()
            .to_dataset()
            .unwrap();
        let fstar = batch_mirror_descent(&data, BATCH_MD_ETA, 1e-12, 3000)
            .unwrap()
            .iter()
            .map(|r| nll(&data, r).unwrap())
            .fold(f64::INFINITY, f64::min);
        let last = rpr(&data, 200).unwrap().pop().unwrap();
        let gap = nll(&data, &last).unwrap() - fstar;
        assert!(gap < 1e-3, "gap {gap}");
        assert!((last.matrix().trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rpr_fixed_point_at_mle() {
        let mle = binomial_mle();
        let next = rpr_step(&binomial(), &mle).unwrap();
        assert!(
            next.matrix()
                .add_scaled(mle.matrix(), -1.0)
                .unwrap()
                .frobenius_norm()
                <= 1e-8
        );
    }

    #[test]
    fn batch_md_identity_dataset() {
        let data = ShotDataset::new(3, vec![(op(&[1.0, 1.0, 1.0]), 2)]).unwrap();
        let iterates = batch_mirror_descent(&data, BATCH_MD_ETA, DEFAULT_NEWTON_EPS, 20).unwrap();
        assert_eq!(iterates.len(), 21);
        for it in iterates {
            let diff = it
                .matrix()
                .add_scaled(DensityMatrix::maximally_mixed(3).matrix(), -1.0)
                .unwrap();
            assert!(diff.max_abs_entry() < 1e-10);
        }
    }

    #[test]
    fn batch_md_zero_iterations() {
        let iterates =
            batch_mirror_descent(&binomial(), BATCH_MD_ETA, DEFAULT_NEWTON_EPS, 0).unwrap();
        assert_eq!(iterates, vec![DensityMatrix::maximally_mixed(2)]);
        assert!(batch_mirror_descent(&binomial(), 0.0, DEFAULT_NEWTON_EPS, 3).is_err());
    }

    #[test]
    fn batch_md_reaches_binomial_optimum() {
        let data = binomial();
        let iterates = batch_mirror_descent(&data, BATCH_MD_ETA, 1e-12, 200).unwrap();
        let values: Vec<f64> = iterates.iter().map(|r| nll(&data, r).unwrap()).collect();
        assert!((values.last().unwrap() - binomial_fstar()).abs() < 1e-9);
        // non-increasing on this instance
        for w in values.windows(2) {
            assert!(w[1] <= w[0] + 1e-14);
        }
    }

    #[test]
    fn solvers_agree_on_binomial_minimizer() {
        let data = binomial();
        let md_out = batch_mirror_descent(&data, BATCH_MD_ETA, 1e-12, 200)
            .unwrap()
            .pop()
            .unwrap();
        let smd_out = run(
            &data,
            SolverConfig::for_horizon(2, 100_000, 3).unwrap(),
            |_, _| {},
        )
        .unwrap();
        let mle = binomial_mle();
        assert!(trace_distance(&md_out, &mle).unwrap() < 1e-6);
        // the stochastic average only matches to its statistical accuracy
        assert!(trace_distance(&smd_out, &mle).unwrap() < 2e-2);
    }
}
