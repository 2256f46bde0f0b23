//! EM iteration for the robust probit model: truncated-normal E-step followed
//! by closed-form block updates θ → (α, β) → Γ.
//!
//! Every parallel loop maps one legislator (or one bill, or one cell) to one
//! task and sums inside the task in index order, so results do not depend on
//! the size of the rayon pool.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::identification;
use crate::model::{
    dot, log_likelihood, log_prior, penalty_term, FitResult, Hyperparams, ModelState, Penalty,
    PriorPrecision, ShiftMatrix, Vote, VoteMatrix, DEFAULT_PRELIMINARY_LAMBDA,
};
use crate::normal::{truncated_mean_negative, truncated_mean_positive};

/// Conditional expectations of the latent utilities and the predictors they were computed at.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentWorkspace {
    pub n_legislators: usize,
    pub n_bills: usize,
    /// `E[y*_ij | y_ij]`, row-major.
    pub y_star: Vec<f64>,
    /// Linear predictors `m_ij` (including γ), row-major.
    pub m: Vec<f64>,
}

impl LatentWorkspace {
    #[inline]
    pub fn y_star(&self, i: usize, j: usize) -> f64 {
        self.y_star[i * self.n_bills + j]
    }

    #[inline]
    pub fn m(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.n_bills + j]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    /// θ, α, β i.i.d. standard normal; Γ = 0.
    RandomNormal,
    /// Start from `InitSpec::provided_state`.
    Provided,
    /// Fit once at `preliminary_lambda` from a random start and begin from that.
    Preliminary,
}

#[derive(Clone, Debug)]
pub struct InitSpec {
    pub mode: InitMode,
    pub seed: u64,
    pub provided_state: Option<ModelState>,
    pub preliminary_lambda: f64,
}

impl InitSpec {
    pub fn random(seed: u64) -> Self {
        InitSpec {
            mode: InitMode::RandomNormal,
            seed,
            provided_state: None,
            preliminary_lambda: DEFAULT_PRELIMINARY_LAMBDA,
        }
    }

    pub fn provided(state: ModelState) -> Self {
        InitSpec {
            mode: InitMode::Provided,
            seed: 0,
            provided_state: Some(state),
            preliminary_lambda: DEFAULT_PRELIMINARY_LAMBDA,
        }
    }

    pub fn preliminary(seed: u64) -> Self {
        InitSpec {
            mode: InitMode::Preliminary,
            ..InitSpec::random(seed)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FitOptions {
    /// Apply `identification::standardize` to the converged state.
    pub standardize: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { standardize: true }
    }
}

/// Standard-normal θ (row-major), then α, then β from one seeded stream; Γ = 0.
pub fn default_init(n_legislators: usize, n_bills: usize, dim: usize, seed: u64) -> ModelState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let theta = draw(n_legislators * dim);
    let alpha = draw(n_bills);
    let beta = draw(n_bills * dim);
    ModelState {
        dim,
        theta,
        alpha,
        beta,
        gamma: ShiftMatrix::new(),
    }
}

/// Latent expectation for one cell.
#[inline]
pub fn latent_expectation(m: f64, vote: Vote) -> f64 {
    match vote {
        Vote::Yea => truncated_mean_positive(m),
        Vote::Nay => truncated_mean_negative(m),
        Vote::Missing => m,
    }
}

fn e_step_dense(
    dim: usize,
    theta: &[f64],
    alpha: &[f64],
    beta: &[f64],
    gamma: &[f64],
    data: &VoteMatrix,
    iteration: usize,
) -> Result<LatentWorkspace> {
    let (n_leg, n_bills) = data.dims();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n_leg)
        .into_par_iter()
        .map(|i| {
            let th = &theta[i * dim..(i + 1) * dim];
            let mut ys = Vec::with_capacity(n_bills);
            let mut ms = Vec::with_capacity(n_bills);
            for (j, &vote) in data.row(i).iter().enumerate() {
                let b = &beta[j * dim..(j + 1) * dim];
                let m = alpha[j] + dot(b, th) + gamma[i * n_bills + j];
                ms.push(m);
                ys.push(latent_expectation(m, vote));
            }
            (ys, ms)
        })
        .collect();
    let mut y_star = Vec::with_capacity(n_leg * n_bills);
    let mut m = Vec::with_capacity(n_leg * n_bills);
    for (ys, ms) in rows {
        y_star.extend(ys);
        m.extend(ms);
    }
    if let Some(idx) = m.iter().position(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            iteration,
            detail: format!(
                "non-finite linear predictor at cell ({}, {})",
                idx / n_bills,
                idx % n_bills
            ),
        });
    }
    Ok(LatentWorkspace {
        n_legislators: n_leg,
        n_bills,
        y_star,
        m,
    })
}

/// E-step: `y*_ij = m + φ(m)/Φ(m)` for Yea, `m - φ(m)/(1-Φ(m))` for Nay, `m` for Missing.
pub fn e_step(state: &ModelState, data: &VoteMatrix) -> Result<LatentWorkspace> {
    state.check_against(data)?;
    let gamma = state.gamma.to_dense(data.n_legislators(), data.n_bills());
    e_step_dense(state.dim, &state.theta, &state.alpha, &state.beta, &gamma, data, 0)
}

fn solve_spd(a: DMatrix<f64>, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    a.cholesky()
        .ok_or_else(|| Error::Domain(format!("{what} system is not positive definite")))
}

fn theta_update_dense(
    ws: &LatentWorkspace,
    gamma: &[f64],
    alpha: &[f64],
    beta: &[f64],
    dim: usize,
    prior: &PriorPrecision,
) -> Result<Vec<f64>> {
    let n_bills = ws.n_bills;
    // Σ_θ⁻¹ + Σ_j β_j β_jᵀ is shared by every legislator.
    let mut a = prior.theta_precision.clone();
    for j in 0..n_bills {
        let b = &beta[j * dim..(j + 1) * dim];
        for r in 0..dim {
            for c in 0..dim {
                a[(r, c)] += b[r] * b[c];
            }
        }
    }
    let chol = solve_spd(a, "ideal-point")?;
    let rows: Vec<DVector<f64>> = (0..ws.n_legislators)
        .into_par_iter()
        .map(|i| {
            let mut rhs = prior.theta_shift.clone();
            let base = i * n_bills;
            for j in 0..n_bills {
                let resid = ws.y_star[base + j] - gamma[base + j] - alpha[j];
                let b = &beta[j * dim..(j + 1) * dim];
                for d in 0..dim {
                    rhs[d] += b[d] * resid;
                }
            }
            chol.solve(&rhs)
        })
        .collect();
    Ok(rows.iter().flat_map(|v| v.iter().copied()).collect())
}

fn beta_update_dense(
    ws: &LatentWorkspace,
    gamma: &[f64],
    theta: &[f64],
    dim: usize,
    prior: &PriorPrecision,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n_leg, n_bills) = (ws.n_legislators, ws.n_bills);
    // Σ_β̃⁻¹ + Σ_i θ̃_i θ̃_iᵀ with θ̃_i = (1, θ_i), shared by every bill.
    let mut a = prior.bill_precision.clone();
    for i in 0..n_leg {
        let th = &theta[i * dim..(i + 1) * dim];
        a[(0, 0)] += 1.0;
        for r in 0..dim {
            a[(0, r + 1)] += th[r];
            a[(r + 1, 0)] += th[r];
            for c in 0..dim {
                a[(r + 1, c + 1)] += th[r] * th[c];
            }
        }
    }
    let chol = solve_spd(a, "bill-parameter")?;
    let cols: Vec<DVector<f64>> = (0..n_bills)
        .into_par_iter()
        .map(|j| {
            let mut rhs = prior.bill_shift.clone();
            for i in 0..n_leg {
                let idx = i * n_bills + j;
                let resid = ws.y_star[idx] - gamma[idx];
                rhs[0] += resid;
                let th = &theta[i * dim..(i + 1) * dim];
                for d in 0..dim {
                    rhs[d + 1] += th[d] * resid;
                }
            }
            chol.solve(&rhs)
        })
        .collect();
    let alpha = cols.iter().map(|v| v[0]).collect();
    let beta = cols.iter().flat_map(|v| v.iter().skip(1).copied()).collect();
    Ok((alpha, beta))
}

/// Hard threshold: `r` when `|r| > λ`, else 0 (a tie keeps γ at zero).
#[inline]
pub fn update_gamma_l0(residual: f64, lambda: f64) -> f64 {
    if residual.abs() > lambda {
        residual
    } else {
        0.0
    }
}

/// Soft threshold `sign(r)·max(|r| - λ, 0)`.
#[inline]
pub fn update_gamma_l1(residual: f64, lambda: f64) -> f64 {
    let shrunk = residual.abs() - lambda;
    if shrunk > 0.0 {
        shrunk.copysign(residual)
    } else {
        0.0
    }
}

fn gamma_update_dense(
    ws: &LatentWorkspace,
    theta: &[f64],
    alpha: &[f64],
    beta: &[f64],
    dim: usize,
    hp: &Hyperparams,
) -> Vec<f64> {
    let n_bills = ws.n_bills;
    if hp.gamma_frozen() {
        return vec![0.0; ws.y_star.len()];
    }
    let rows: Vec<Vec<f64>> = (0..ws.n_legislators)
        .into_par_iter()
        .map(|i| {
            let th = &theta[i * dim..(i + 1) * dim];
            (0..n_bills)
                .map(|j| {
                    let r = ws.y_star[i * n_bills + j] - alpha[j] - dot(&beta[j * dim..(j + 1) * dim], th);
                    match hp.penalty {
                        Penalty::L0 => update_gamma_l0(r, hp.lambda),
                        Penalty::L1 => update_gamma_l1(r, hp.lambda),
                        Penalty::None => 0.0,
                    }
                })
                .collect()
        })
        .collect();
    rows.concat()
}

fn check_workspace(ws: &LatentWorkspace, state: &ModelState, hp: &Hyperparams) -> Result<()> {
    state.validate()?;
    if state.dim != hp.dim {
        return Err(Error::Contract("state and hyperparameter dimensions differ".into()));
    }
    if (ws.n_legislators, ws.n_bills) != (state.n_legislators(), state.n_bills())
        || ws.y_star.len() != ws.n_legislators * ws.n_bills
    {
        return Err(Error::Contract("workspace does not match state".into()));
    }
    Ok(())
}

/// θ_i ← (Σ_θ⁻¹ + Σ_j β_jβ_jᵀ)⁻¹ (Σ_θ⁻¹μ_θ + Σ_j β_j (y*_ij − γ_ij − α_j)). Returns θ row-major.
pub fn update_theta(ws: &LatentWorkspace, state: &ModelState, hp: &Hyperparams) -> Result<Vec<f64>> {
    check_workspace(ws, state, hp)?;
    let prior = PriorPrecision::new(hp)?;
    let gamma = state.gamma.to_dense(ws.n_legislators, ws.n_bills);
    theta_update_dense(ws, &gamma, &state.alpha, &state.beta, state.dim, &prior)
}

/// β̃_j ← (Σ_β̃⁻¹ + Σ_i θ̃_iθ̃_iᵀ)⁻¹ (Σ_β̃⁻¹μ_β̃ + Σ_i θ̃_i (y*_ij − γ_ij)), using the
/// state's current θ. Returns `(α, β)`.
pub fn update_beta_tilde(
    ws: &LatentWorkspace,
    state: &ModelState,
    hp: &Hyperparams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_workspace(ws, state, hp)?;
    let prior = PriorPrecision::new(hp)?;
    let gamma = state.gamma.to_dense(ws.n_legislators, ws.n_bills);
    beta_update_dense(ws, &gamma, &state.theta, state.dim, &prior)
}

/// Shift update for every cell from the residual `y*_ij − β̃_jᵀθ̃_i`, using the
/// state's current θ, α, β.
pub fn update_gamma(ws: &LatentWorkspace, state: &ModelState, hp: &Hyperparams) -> Result<ShiftMatrix> {
    check_workspace(ws, state, hp)?;
    let dense = gamma_update_dense(ws, &state.theta, &state.alpha, &state.beta, state.dim, hp);
    Ok(ShiftMatrix::from_dense(&dense, ws.n_bills))
}

fn max_abs_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn warn_degenerate(data: &VoteMatrix) {
    let (n_leg, n_bills) = data.dims();
    for i in 0..n_leg {
        if !data.row(i).iter().any(|v| v.is_observed()) {
            log::warn!(
                "legislator {} has no observed votes; estimate follows the prior",
                data.legislators()[i].id
            );
        }
    }
    for j in 0..n_bills {
        if !(0..n_leg).any(|i| data.get(i, j).is_observed()) {
            log::warn!("bill {} has no observed votes; estimate follows the prior", data.bills()[j].id);
        }
    }
}

/// Runs EM to convergence.
///
/// Stops when the largest change in θ, α and β falls below `hp.epsilon` and,
/// unless the shifts are frozen, the largest change in Γ does too; or when
/// `hp.max_iter` is reached.
pub fn fit(data: &VoteMatrix, hp: &Hyperparams, init: &InitSpec) -> Result<FitResult> {
    fit_with(data, hp, init, &FitOptions::default())
}

pub fn fit_with(data: &VoteMatrix, hp: &Hyperparams, init: &InitSpec, opts: &FitOptions) -> Result<FitResult> {
    hp.validate()?;
    let (n_leg, n_bills) = data.dims();
    if n_leg == 0 || n_bills == 0 {
        return Err(Error::Data("cannot fit an empty vote matrix".into()));
    }
    let start = match init.mode {
        InitMode::RandomNormal => default_init(n_leg, n_bills, hp.dim, init.seed),
        InitMode::Provided => init
            .provided_state
            .clone()
            .ok_or_else(|| Error::Contract("provided init without a state".into()))?,
        InitMode::Preliminary => {
            let mut prelim_hp = hp.clone();
            prelim_hp.lambda = init.preliminary_lambda;
            prelim_hp.penalty = Penalty::L0;
            fit_with(data, &prelim_hp, &InitSpec::random(init.seed), opts)?.state
        }
    };
    if start.dim != hp.dim {
        return Err(Error::Contract(format!(
            "initial state has dimension {} but hyperparameters have {}",
            start.dim, hp.dim
        )));
    }
    start.check_against(data)?;
    warn_degenerate(data);
    run_em(data, hp, start, opts)
}

fn run_em(data: &VoteMatrix, hp: &Hyperparams, mut state: ModelState, opts: &FitOptions) -> Result<FitResult> {
    let prior = PriorPrecision::new(hp)?;
    let dim = hp.dim;
    let frozen = hp.gamma_frozen();
    if frozen {
        state.gamma = ShiftMatrix::new();
    }
    let mut gamma = state.gamma.to_dense(data.n_legislators(), data.n_bills());
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=hp.max_iter {
        iterations = t;
        let ws = e_step_dense(dim, &state.theta, &state.alpha, &state.beta, &gamma, data, t)?;
        let theta = theta_update_dense(&ws, &gamma, &state.alpha, &state.beta, dim, &prior)?;
        let (alpha, beta) = beta_update_dense(&ws, &gamma, &theta, dim, &prior)?;
        let new_gamma = gamma_update_dense(&ws, &theta, &alpha, &beta, dim, hp);

        let param_change = max_abs_change(&theta, &state.theta)
            .max(max_abs_change(&alpha, &state.alpha))
            .max(max_abs_change(&beta, &state.beta));
        let gamma_change = max_abs_change(&new_gamma, &gamma);

        state.theta = theta;
        state.alpha = alpha;
        state.beta = beta;
        gamma = new_gamma;
        state.gamma = ShiftMatrix::from_dense(&gamma, data.n_bills());

        let objective =
            log_likelihood(&state, data)? + log_prior(&state, &prior, hp) + penalty_term(&state.gamma, hp);
        if !objective.is_finite() {
            return Err(Error::Divergence {
                iteration: t,
                detail: format!("objective evaluated to {objective}"),
            });
        }
        trace.push(objective);
        log::debug!(
            "iter {t}: objective {objective:.6} param change {param_change:.3e} gamma change {gamma_change:.3e} nnz {}",
            state.gamma.nnz()
        );

        let done = param_change < hp.epsilon && (frozen || gamma_change < hp.epsilon);
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("EM stopped at max_iter = {} without converging", hp.max_iter);
    }
    if opts.standardize {
        state = identification::standardize(&state)?;
    }
    Ok(FitResult::new(state, trace, iterations, converged))
}

/// Preliminary l0 fit at λ = 2 from a random start, then the main fit at `hp.lambda`
/// started from the preliminary estimates.
pub fn preliminary_then_main(data: &VoteMatrix, hp: &Hyperparams, seed: u64) -> Result<FitResult> {
    preliminary_then_main_with(data, hp, seed, DEFAULT_PRELIMINARY_LAMBDA, &FitOptions::default())
}

pub fn preliminary_then_main_with(
    data: &VoteMatrix,
    hp: &Hyperparams,
    seed: u64,
    preliminary_lambda: f64,
    opts: &FitOptions,
) -> Result<FitResult> {
    if hp.penalty != Penalty::L0 {
        return Err(Error::Contract(format!(
            "the preliminary run is defined for the l0 penalty only (got {})",
            hp.penalty
        )));
    }
    let mut init = InitSpec::preliminary(seed);
    init.preliminary_lambda = preliminary_lambda;
    fit_with(data, hp, &init, opts)
}
