//! Stochastic mirror descent with the Burg entropy `h(rho) = -ln det rho`.
//!
//! Each iteration draws one shot uniformly at random, evaluates the gradient of
//! its log-loss at the running average `rho_bar_t`, and takes a mirror step
//! centred at the last iterate `rho_t`:
//!
//! ```text
//! rho_{t+1} = argmin_{rho in D}  eta * tr(g (rho - rho_t)) + D_h(rho, rho_t)
//! ```
//!
//! The argmin has no closed form but reduces to one Hermitian eigendecomposition
//! of `eta * g + rho_t^{-1}` followed by a scalar Newton solve for the trace
//! multiplier `theta`: the optimum is `(theta I + eta g + rho_t^{-1})^{-1}` with
//! `theta` chosen so the trace is one. Every iterate is full rank, and the
//! inverse of the next iterate falls out of the same decomposition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hermitian::{
    check_same_dim, eig_hermitian, from_spectrum, trace_product, HermitianMatrix,
};
use crate::model::{sample_loss_gradient, DensityMatrix, ShotDataset};

pub const DEFAULT_NEWTON_EPS: f64 = 1e-9;
pub const NEWTON_MAX_ITERATIONS: usize = 200;
pub const NEWTON_MAX_HALVINGS: usize = 60;

fn horizon_log(d: usize, horizon: u64) -> Result<f64> {
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if horizon < 2 {
        return Err(Error::invalid(format!(
            "horizon must be at least 2 (ln T > 0), got {horizon}"
        )));
    }
    Ok(d as f64 * (horizon as f64).ln())
}

/// Step size `sqrt(d ln T) / (sqrt(T) + sqrt(d ln T))` for a run of `T` iterations.
pub fn step_size_for_horizon(d: usize, horizon: u64) -> Result<f64> {
    let dl = horizon_log(d, horizon)?.sqrt();
    Ok(dl / ((horizon as f64).sqrt() + dl))
}

/// Expected optimization error bound `2 sqrt(d ln T / T) + d ln T / T` at the
/// step size of [`step_size_for_horizon`].
pub fn theoretical_error_bound(d: usize, horizon: u64) -> Result<f64> {
    let ratio = horizon_log(d, horizon)? / horizon as f64;
    Ok(2.0 * ratio.sqrt() + ratio)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonRoot {
    pub theta: f64,
    pub iterations: usize,
}

/// Returns `(sum 1/(theta+l), sum 1/(theta+l)^2)`.
fn barrier_sums(lambdas: &[f64], theta: f64) -> (f64, f64) {
    lambdas.iter().fold((0.0, 0.0), |(s1, s2), &l| {
        let w = 1.0 / (theta + l);
        (s1 + w, s2 + w * w)
    })
}

/// Minimizes `phi(theta) = theta - sum_i ln(theta + lambda_i)` by damped Newton.
///
/// At the minimizer `sum_i 1/(theta + lambda_i) = 1`, so the weights
/// `1/(theta + lambda_i)` lie on the probability simplex. Starts from
/// `1 - min_i lambda_i` and stops once the Newton decrement
/// `|phi'| / sqrt(phi'')` drops below `eps`, applying that last Newton step.
pub fn log_barrier_simplex_root(lambdas: &[f64], eps: f64) -> Result<NewtonRoot> {
    if lambdas.is_empty() {
        return Err(Error::invalid("empty eigenvalue vector"));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid(format!(
            "Newton tolerance must be positive, got {eps}"
        )));
    }
    if lambdas.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid("non-finite eigenvalue"));
    }
    let min = lambdas.iter().copied().fold(f64::INFINITY, f64::min);

    let mut theta = 1.0 - min;
    let mut iterations = 0;
    loop {
        let (s1, s2) = barrier_sums(lambdas, theta);
        let grad = 1.0 - s1;
        let decrement = grad.abs() / s2.sqrt();
        if decrement < eps {
            // the step is already computed; taking it squares the residual
            let step = grad / s2;
            if theta - step + min > 0.0 {
                theta -= step;
            }
            return Ok(NewtonRoot { theta, iterations });
        }
        if iterations == NEWTON_MAX_ITERATIONS || !decrement.is_finite() {
            return Err(Error::ConvergenceFailure {
                iterations,
                decrement,
            });
        }

        let mut step = grad / s2;
        let mut halvings = 0;
        // keep theta + min(lambda) > 0
        while theta - step + min <= 0.0 {
            if halvings == NEWTON_MAX_HALVINGS {
                return Err(Error::ConvergenceFailure {
                    iterations,
                    decrement,
                });
            }
            step *= 0.5;
            halvings += 1;
        }
        theta -= step;
        iterations += 1;
    }
}

/// A full-rank density matrix together with its inverse.
#[derive(Debug, Clone)]
pub struct Iterate {
    rho: DensityMatrix,
    inverse: HermitianMatrix,
}

impl Iterate {
    /// `I / d` and its inverse `d I`.
    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            rho: DensityMatrix::maximally_mixed(d),
            inverse: HermitianMatrix::scaled_identity(d, d as f64),
        }
    }

    /// Inverts `rho` spectrally; fails unless `rho` is positive definite.
    pub fn new(rho: DensityMatrix) -> Result<Self> {
        let spec = eig_hermitian(rho.matrix())?;
        if spec.eigenvalues[0] <= 0.0 {
            return Err(Error::invalid(format!(
                "mirror-step centre must be positive definite (min eigenvalue {:e})",
                spec.eigenvalues[0]
            )));
        }
        let inv: Vec<f64> = spec.eigenvalues.iter().map(|v| 1.0 / v).collect();
        let inverse = from_spectrum(&spec.eigenvectors, &inv)?;
        Ok(Self { rho, inverse })
    }

    pub fn rho(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn inverse(&self) -> &HermitianMatrix {
        &self.inverse
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }
}

/// Diagnostics from one mirror step.
#[derive(Debug, Clone)]
pub struct MirrorStepInternals {
    pub theta: f64,
    pub newton_iterations: usize,
    /// `theta + lambda_i`, ascending; the eigenvalues of the next inverse.
    pub shifted_eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MirrorStep {
    pub next: Iterate,
    pub internals: MirrorStepInternals,
}

/// Solves `argmin_{rho in D} eta tr(g (rho - center)) + D_h(rho, center)`.
pub fn mirror_step(
    g: &HermitianMatrix,
    center: &Iterate,
    eta: f64,
    eps: f64,
) -> Result<MirrorStep> {
    check_same_dim(g.dim(), center.dim())?;
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::invalid(format!(
            "step size must be finite and >= 0, got {eta}"
        )));
    }
    let dual = center.inverse.add_scaled(g, eta)?;
    let spec = eig_hermitian(&dual)?;
    let root = log_barrier_simplex_root(&spec.eigenvalues, eps)?;

    let shifted: Vec<f64> = spec.eigenvalues.iter().map(|l| root.theta + l).collect();
    let weights: Vec<f64> = shifted.iter().map(|s| 1.0 / s).collect();
    let rho = from_spectrum(&spec.eigenvectors, &weights)?;
    let inverse = from_spectrum(&spec.eigenvectors, &shifted)?;

    Ok(MirrorStep {
        next: Iterate {
            rho: DensityMatrix::from_trusted(rho),
            inverse,
        },
        internals: MirrorStepInternals {
            theta: root.theta,
            newton_iterations: root.iterations,
            shifted_eigenvalues: shifted,
        },
    })
}

/// `-ln det rho` from the spectrum; `+inf` if `rho` is singular.
pub fn burg_entropy(rho: &HermitianMatrix) -> Result<f64> {
    let spec = eig_hermitian(rho)?;
    if spec.eigenvalues[0] <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-spec.eigenvalues.iter().map(|v| v.ln()).sum::<f64>())
}

/// `D_h(rho, sigma) = h(rho) - h(sigma) + tr(sigma^{-1} (rho - sigma))`.
pub fn bregman_divergence(rho: &DensityMatrix, sigma: &Iterate) -> Result<f64> {
    let d = rho.dim() as f64;
    Ok(
        burg_entropy(rho.matrix())? - burg_entropy(sigma.rho.matrix())?
            + trace_product(&sigma.inverse, rho.matrix())?
            - d,
    )
}

/// The mirror-step objective `eta tr(g (rho - center)) + D_h(rho, center)`.
pub fn mirror_objective(
    g: &HermitianMatrix,
    center: &Iterate,
    eta: f64,
    rho: &DensityMatrix,
) -> Result<f64> {
    let linear = trace_product(g, rho.matrix())? - trace_product(g, center.rho.matrix())?;
    Ok(eta * linear + bregman_divergence(rho, center)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub eta: f64,
    pub horizon: u64,
    pub newton_eps: f64,
    pub seed: u64,
}

impl SolverConfig {
    /// Config using the horizon-tuned step size and the default Newton tolerance.
    pub fn for_horizon(d: usize, horizon: u64, seed: u64) -> Result<Self> {
        Ok(Self {
            eta: step_size_for_horizon(d, horizon)?,
            horizon,
            newton_eps: DEFAULT_NEWTON_EPS,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::invalid(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.newton_eps > 0.0) {
            return Err(Error::invalid(format!(
                "newton_eps must be positive, got {}",
                self.newton_eps
            )));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        Ok(())
    }
}

/// Mutable state of one run: `t`, `rho_t`, `rho_t^{-1}`, `sum_{tau <= t} rho_tau`
/// and the shot sampler.
///
/// Shot indices come from a single ChaCha8 stream seeded with
/// `SolverConfig::seed`; iteration `t` consumes exactly one
/// `gen_range(0..n)` draw.
#[derive(Debug, Clone)]
pub struct SolverState {
    t: u64,
    iterate: Iterate,
    iterate_sum: HermitianMatrix,
    rng: ChaCha8Rng,
}

/// Stochastic mirror descent over a borrowed dataset, advanced one shot at a time.
#[derive(Debug, Clone)]
pub struct SmdBurg<'a> {
    data: &'a ShotDataset,
    config: SolverConfig,
    state: SolverState,
    last_internals: Option<MirrorStepInternals>,
}

impl<'a> SmdBurg<'a> {
    pub fn new(data: &'a ShotDataset, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        data.require_nonempty()?;
        let d = data.dim();
        let iterate = Iterate::maximally_mixed(d);
        let iterate_sum = iterate.rho().matrix().clone();
        Ok(Self {
            data,
            config,
            state: SolverState {
                t: 1,
                iterate,
                iterate_sum,
                rng: ChaCha8Rng::seed_from_u64(config.seed),
            },
            last_internals: None,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Current iteration counter (starts at 1).
    pub fn t(&self) -> u64 {
        self.state.t
    }

    /// Shots sampled so far, `t - 1`.
    pub fn shots_consumed(&self) -> u64 {
        self.state.t - 1
    }

    /// The latest iterate `rho_t` with its inverse.
    pub fn current(&self) -> &Iterate {
        &self.state.iterate
    }

    pub fn last_internals(&self) -> Option<&MirrorStepInternals> {
        self.last_internals.as_ref()
    }

    /// `rho_bar_t = (1/t) sum_{tau <= t} rho_tau`.
    pub fn average(&self) -> DensityMatrix {
        let avg = self.state.iterate_sum.scale(1.0 / self.state.t as f64);
        DensityMatrix::from_trusted(avg)
    }

    /// Samples one shot, steps from `rho_t` to `rho_{t+1}` and advances `t`.
    /// Returns the dataset entry index that was drawn.
    pub fn step(&mut self) -> Result<usize> {
        let shot = self.state.rng.gen_range(0..self.data.total_shots());
        let entry = self.data.entry_of_shot(shot);
        let g =
            sample_loss_gradient(&self.data.entries()[entry].0, &self.average()).map_err(|e| {
                match e {
                    Error::SingularLikelihood { value, .. } => Error::SingularLikelihood {
                        index: entry,
                        value,
                    },
                    other => other,
                }
            })?;
        let step = mirror_step(
            &g,
            &self.state.iterate,
            self.config.eta,
            self.config.newton_eps,
        )?;
        self.state
            .iterate_sum
            .add_assign(step.next.rho().matrix())?;
        self.state.iterate = step.next;
        self.state.t += 1;
        self.last_internals = Some(step.internals);
        Ok(entry)
    }
}

/// Runs `config.horizon` iterations, reporting `(t, rho_bar_t)` for each
/// `t = 1..=T`, and returns `rho_bar_T`.
pub fn run<F>(data: &ShotDataset, config: SolverConfig, mut on_iterate: F) -> Result<DensityMatrix>
where
    F: FnMut(u64, &DensityMatrix),
{
    let mut solver = SmdBurg::new(data, config)?;
    loop {
        let avg = solver.average();
        on_iterate(solver.t(), &avg);
        if solver.t() == config.horizon {
            return Ok(avg);
        }
        solver.step()?;
    }
}
