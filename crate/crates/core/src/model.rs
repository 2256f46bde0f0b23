//! Domain types and the probability/objective primitives of the robust probit
//! ideal-point model.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{clamped_log_cdf, normal_cdf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Vote {
    Yea,
    Nay,
    Missing,
}

impl Vote {
    pub fn is_observed(self) -> bool {
        self != Vote::Missing
    }

    /// Yea ↔ Nay; Missing stays Missing.
    pub fn flipped(self) -> Vote {
        match self {
            Vote::Yea => Vote::Nay,
            Vote::Nay => Vote::Yea,
            Vote::Missing => Vote::Missing,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    Dem,
    Rep,
    Other,
}

impl FromStr for Party {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "d" | "dem" | "democrat" | "democratic" | "100" => Ok(Party::Dem),
            "r" | "rep" | "republican" | "200" => Ok(Party::Rep),
            "" => Err(Error::Format("empty party label".into())),
            _ => Ok(Party::Other),
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::Dem => "Dem",
            Party::Rep => "Rep",
            Party::Other => "Other",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegislatorMeta {
    pub id: String,
    pub name: String,
    pub party: Option<Party>,
    pub district: Option<String>,
}

impl LegislatorMeta {
    pub fn new(id: impl Into<String>) -> Self {
        let id = id.into();
        LegislatorMeta {
            name: id.clone(),
            id,
            party: None,
            district: None,
        }
    }

    pub fn with_party(mut self, party: Party) -> Self {
        self.party = Some(party);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BillMeta {
    pub id: String,
    pub label: Option<String>,
}

impl BillMeta {
    pub fn new(id: impl Into<String>) -> Self {
        BillMeta {
            id: id.into(),
            label: None,
        }
    }
}

/// Dense legislators × bills roll-call matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct VoteMatrix {
    votes: Vec<Vote>,
    legislators: Vec<LegislatorMeta>,
    bills: Vec<BillMeta>,
}

impl VoteMatrix {
    pub fn new(
        votes: Vec<Vote>,
        legislators: Vec<LegislatorMeta>,
        bills: Vec<BillMeta>,
    ) -> Result<Self> {
        if votes.len() != legislators.len() * bills.len() {
            return Err(Error::Contract(format!(
                "{} votes for a {}x{} matrix",
                votes.len(),
                legislators.len(),
                bills.len()
            )));
        }
        check_unique(legislators.iter().map(|l| l.id.as_str()), "legislator")?;
        check_unique(bills.iter().map(|b| b.id.as_str()), "bill")?;
        Ok(VoteMatrix {
            votes,
            legislators,
            bills,
        })
    }

    /// Matrix with generated ids `L0001…` / `B0001…`.
    pub fn from_rows(rows: &[Vec<Vote>]) -> Result<Self> {
        let n_bills = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_bills) {
            return Err(Error::Contract("ragged vote rows".into()));
        }
        let legislators = (0..rows.len())
            .map(|i| LegislatorMeta::new(format!("L{:04}", i + 1)))
            .collect();
        let bills = (0..n_bills)
            .map(|j| BillMeta::new(format!("B{:04}", j + 1)))
            .collect();
        VoteMatrix::new(rows.concat(), legislators, bills)
    }

    pub fn n_legislators(&self) -> usize {
        self.legislators.len()
    }

    pub fn n_bills(&self) -> usize {
        self.bills.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_legislators(), self.n_bills())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Vote {
        assert!(j < self.n_bills(), "bill index {j} out of range");
        self.votes[i * self.n_bills() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, vote: Vote) {
        let n = self.n_bills();
        assert!(j < n, "bill index {j} out of range");
        self.votes[i * n + j] = vote;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Vote] {
        let n = self.n_bills();
        &self.votes[i * n..(i + 1) * n]
    }

    pub fn votes(&self) -> &[Vote] {
        &self.votes
    }

    pub fn legislators(&self) -> &[LegislatorMeta] {
        &self.legislators
    }

    pub fn legislators_mut(&mut self) -> &mut [LegislatorMeta] {
        &mut self.legislators
    }

    pub fn bills(&self) -> &[BillMeta] {
        &self.bills
    }

    pub fn legislator_index(&self, id: &str) -> Option<usize> {
        self.legislators.iter().position(|l| l.id == id)
    }

    pub fn bill_index(&self, id: &str) -> Option<usize> {
        self.bills.iter().position(|b| b.id == id)
    }

    /// Sub-matrix keeping the given rows and columns in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Result<VoteMatrix> {
        let mut votes = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            let row = self.row(i);
            votes.extend(cols.iter().map(|&j| row[j]));
        }
        VoteMatrix::new(
            votes,
            rows.iter().map(|&i| self.legislators[i].clone()).collect(),
            cols.iter().map(|&j| self.bills[j].clone()).collect(),
        )
    }

    /// Number of observed (non-missing) cells.
    pub fn n_observed(&self) -> usize {
        self.votes.iter().filter(|v| v.is_observed()).count()
    }
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>, what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if id.is_empty() {
            return Err(Error::Data(format!("empty {what} id")));
        }
        if !seen.insert(id) {
            return Err(Error::Data(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L0,
    L1,
    None,
}

impl FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l0" => Ok(Penalty::L0),
            "l1" => Ok(Penalty::L1),
            "none" => Ok(Penalty::None),
            other => Err(Error::Format(format!("unknown penalty {other:?}"))),
        }
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Penalty::L0 => "l0",
            Penalty::L1 => "l1",
            Penalty::None => "none",
        })
    }
}

/// Default sparsity level for the l0 penalty.
pub const DEFAULT_LAMBDA: f64 = 3.0;
/// Sparsity level of the preliminary run that seeds the main fit.
pub const DEFAULT_PRELIMINARY_LAMBDA: f64 = 2.0;
pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 500;

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    /// Nonnegative; `f64::INFINITY` disables the shift parameters entirely.
    pub lambda: f64,
    pub mu_theta: DVector<f64>,
    pub sigma_theta: DMatrix<f64>,
    /// Prior mean of `(α_j, β_j)`.
    pub mu_beta_tilde: DVector<f64>,
    pub sigma_beta_tilde: DMatrix<f64>,
    pub epsilon: f64,
    pub max_iter: usize,
    pub penalty: Penalty,
    pub dim: usize,
}

impl Hyperparams {
    /// `μ_θ = 0`, `Σ_θ = I_K`, `μ_β̃ = 0`, `Σ_β̃ = 25·I_{K+1}`, λ = 3, l0 penalty.
    pub fn defaults(dim: usize) -> Self {
        Hyperparams {
            lambda: DEFAULT_LAMBDA,
            mu_theta: DVector::zeros(dim),
            sigma_theta: DMatrix::identity(dim, dim),
            mu_beta_tilde: DVector::zeros(dim + 1),
            sigma_beta_tilde: DMatrix::identity(dim + 1, dim + 1) * 25.0,
            epsilon: DEFAULT_EPSILON,
            max_iter: DEFAULT_MAX_ITER,
            penalty: Penalty::L0,
            dim,
        }
    }

    pub fn with_penalty(mut self, penalty: Penalty, lambda: f64) -> Self {
        self.penalty = penalty;
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.dim;
        if k == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::Domain(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Domain(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iter == 0 {
            return Err(Error::Domain("max_iter must be positive".into()));
        }
        if self.mu_theta.len() != k || self.sigma_theta.shape() != (k, k) {
            return Err(Error::Contract(format!("theta prior does not have dimension {k}")));
        }
        if self.mu_beta_tilde.len() != k + 1 || self.sigma_beta_tilde.shape() != (k + 1, k + 1) {
            return Err(Error::Contract(format!("bill prior does not have dimension {}", k + 1)));
        }
        check_spd(&self.sigma_theta, "sigma_theta")?;
        check_spd(&self.sigma_beta_tilde, "sigma_beta_tilde")?;
        Ok(())
    }

    /// True when the shift parameters can never leave zero.
    pub fn gamma_frozen(&self) -> bool {
        self.penalty == Penalty::None || self.lambda == f64::INFINITY
    }
}

fn check_spd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * m.amax().max(1.0) {
        return Err(Error::Domain(format!("{name} is not symmetric")));
    }
    if m.clone().cholesky().is_none() {
        return Err(Error::Domain(format!("{name} is not positive definite")));
    }
    Ok(())
}

/// Prior precisions and precision-weighted means, computed once per fit.
#[derive(Clone, Debug)]
pub struct PriorPrecision {
    pub theta_precision: DMatrix<f64>,
    pub theta_shift: DVector<f64>,
    pub bill_precision: DMatrix<f64>,
    pub bill_shift: DVector<f64>,
}

impl PriorPrecision {
    pub fn new(hp: &Hyperparams) -> Result<Self> {
        hp.validate()?;
        let inv = |m: &DMatrix<f64>| {
            m.clone()
                .cholesky()
                .map(|c| c.inverse())
                .ok_or_else(|| Error::Domain("prior covariance is not positive definite".into()))
        };
        let theta_precision = inv(&hp.sigma_theta)?;
        let bill_precision = inv(&hp.sigma_beta_tilde)?;
        Ok(PriorPrecision {
            theta_shift: &theta_precision * &hp.mu_theta,
            bill_shift: &bill_precision * &hp.mu_beta_tilde,
            theta_precision,
            bill_precision,
        })
    }
}

/// Sparse legislators × bills shift matrix. Only nonzero entries are stored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShiftMatrix {
    entries: BTreeMap<(usize, usize), f64>,
}

impl ShiftMatrix {
    pub fn new() -> Self {
        ShiftMatrix::default()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(&(i, j)).copied().unwrap_or(0.0)
    }

    /// Stores `value`, or removes the entry when it is exactly zero.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        if value == 0.0 {
            self.entries.remove(&(i, j));
        } else {
            self.entries.insert((i, j), value);
        }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries
            .range((i, 0)..(i + 1, 0))
            .map(|(&(_, j), &v)| (j, v))
    }

    pub fn to_dense(&self, n_legislators: usize, n_bills: usize) -> Vec<f64> {
        let mut dense = vec![0.0; n_legislators * n_bills];
        for (i, j, v) in self.iter() {
            dense[i * n_bills + j] = v;
        }
        dense
    }

    pub fn from_dense(dense: &[f64], n_bills: usize) -> Self {
        let mut out = ShiftMatrix::new();
        for (idx, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                out.entries.insert((idx / n_bills, idx % n_bills), v);
            }
        }
        out
    }

    pub fn abs_sum(&self) -> f64 {
        self.entries.values().map(|v| v.abs()).sum()
    }
}

/// Ideal points, bill parameters and shift parameters.
///
/// `theta` is `I×K` and `beta` is `J×K`, both row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub dim: usize,
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: ShiftMatrix,
}

impl ModelState {
    pub fn zeros(n_legislators: usize, n_bills: usize, dim: usize) -> Self {
        ModelState {
            dim,
            theta: vec![0.0; n_legislators * dim],
            alpha: vec![0.0; n_bills],
            beta: vec![0.0; n_bills * dim],
            gamma: ShiftMatrix::new(),
        }
    }

    pub fn n_legislators(&self) -> usize {
        self.theta.len() / self.dim
    }

    pub fn n_bills(&self) -> usize {
        self.alpha.len()
    }

    #[inline]
    pub fn theta_row(&self, i: usize) -> &[f64] {
        &self.theta[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn beta_row(&self, j: usize) -> &[f64] {
        &self.beta[j * self.dim..(j + 1) * self.dim]
    }

    /// Column `d` of θ.
    pub fn theta_column(&self, d: usize) -> Vec<f64> {
        assert!(d < self.dim, "dimension {d} out of range");
        self.theta.iter().skip(d).step_by(self.dim).copied().collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Contract("state dimension must be positive".into()));
        }
        if !self.theta.len().is_multiple_of(self.dim) || self.beta.len() != self.alpha.len() * self.dim {
            return Err(Error::Contract("state arrays inconsistent with dimension".into()));
        }
        let finite = self
            .theta
            .iter()
            .chain(&self.alpha)
            .chain(&self.beta)
            .all(|v| v.is_finite())
            && self.gamma.iter().all(|(_, _, v)| v.is_finite());
        if !finite {
            return Err(Error::Contract("state contains non-finite entries".into()));
        }
        let (n, m) = (self.n_legislators(), self.n_bills());
        if self.gamma.iter().any(|(i, j, _)| i >= n || j >= m) {
            return Err(Error::Contract("shift entry outside the matrix".into()));
        }
        Ok(())
    }

    pub fn check_against(&self, data: &VoteMatrix) -> Result<()> {
        self.validate()?;
        if (self.n_legislators(), self.n_bills()) != data.dims() {
            return Err(Error::Contract(format!(
                "state is {}x{} but data is {}x{}",
                self.n_legislators(),
                self.n_bills(),
                data.n_legislators(),
                data.n_bills()
            )));
        }
        Ok(())
    }

    /// `α_j + β_jᵀθ_i`, the predictor without the shift.
    #[inline]
    pub fn spatial_predictor(&self, i: usize, j: usize) -> f64 {
        self.alpha[j] + dot(self.beta_row(j), self.theta_row(i))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Converged state plus diagnostics from an EM run.
#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub state: ModelState,
    /// Penalized log-posterior after each iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Nonzero shift entries as `(legislator, bill, γ)`.
    pub protest_cells: Vec<(usize, usize, f64)>,
}

impl FitResult {
    pub fn new(state: ModelState, objective_trace: Vec<f64>, iterations: usize, converged: bool) -> Self {
        let protest_cells = state.gamma.iter().collect();
        FitResult {
            state,
            objective_trace,
            iterations,
            converged,
            protest_cells,
        }
    }
}

/// `α_j + β_jᵀθ_i + γ_ij`.
///
/// Panics when `i` or `j` is out of range.
#[inline]
pub fn linear_predictor(state: &ModelState, i: usize, j: usize) -> f64 {
    assert!(
        i < state.n_legislators() && j < state.n_bills(),
        "cell ({i}, {j}) outside a {}x{} state",
        state.n_legislators(),
        state.n_bills()
    );
    state.spatial_predictor(i, j) + state.gamma.get(i, j)
}

/// Probability of a Yea vote, `Φ(m)`.
#[inline]
pub fn yea_probability(m: f64) -> f64 {
    normal_cdf(m)
}

/// Observed-data log-likelihood `Σ y log Φ(m) + (1-y) log(1-Φ(m))` over observed cells.
///
/// `Φ(m)` and `1-Φ(m)` are clamped to `[1e-300, 1-1e-16]` before the log, so a
/// single hopeless cell costs at most about 690.8 instead of `-∞`.
pub fn log_likelihood(state: &ModelState, data: &VoteMatrix) -> Result<f64> {
    state.check_against(data)?;
    let n_bills = data.n_bills();
    let row_sums: Vec<f64> = (0..data.n_legislators())
        .into_par_iter()
        .map(|i| {
            let mut shift = vec![0.0; n_bills];
            for (j, g) in state.gamma.row(i) {
                shift[j] = g;
            }
            let mut acc = 0.0;
            for (j, &vote) in data.row(i).iter().enumerate() {
                let m = state.spatial_predictor(i, j) + shift[j];
                acc += match vote {
                    Vote::Yea => clamped_log_cdf(m),
                    Vote::Nay => clamped_log_cdf(-m),
                    Vote::Missing => 0.0,
                };
            }
            acc
        })
        .collect();
    Ok(row_sums.iter().sum())
}

/// Gaussian log-priors on every `θ_i` and `β̃_j = (α_j, β_j)`, without their
/// normalizing constants.
pub fn log_prior(state: &ModelState, prior: &PriorPrecision, hp: &Hyperparams) -> f64 {
    let k = state.dim;
    let mut total = 0.0;
    let mut diff = DVector::zeros(k);
    for i in 0..state.n_legislators() {
        for (d, v) in state.theta_row(i).iter().enumerate() {
            diff[d] = v - hp.mu_theta[d];
        }
        total -= 0.5 * diff.dot(&(&prior.theta_precision * &diff));
    }
    let mut diff = DVector::zeros(k + 1);
    for j in 0..state.n_bills() {
        diff[0] = state.alpha[j] - hp.mu_beta_tilde[0];
        for (d, v) in state.beta_row(j).iter().enumerate() {
            diff[d + 1] = v - hp.mu_beta_tilde[d + 1];
        }
        total -= 0.5 * diff.dot(&(&prior.bill_precision * &diff));
    }
    total
}

/// Log-prior of the shift matrix: `-λ²/2·‖Γ‖₀`, `-λ·Σ|γ|`, or 0.
pub fn penalty_term(gamma: &ShiftMatrix, hp: &Hyperparams) -> f64 {
    if gamma.is_empty() {
        return 0.0;
    }
    match hp.penalty {
        Penalty::L0 => -0.5 * hp.lambda * hp.lambda * gamma.nnz() as f64,
        Penalty::L1 => -hp.lambda * gamma.abs_sum(),
        Penalty::None => 0.0,
    }
}

/// Penalized log-posterior maximized by the fit.
///
/// Equals log-likelihood + Gaussian log-priors + shift penalty. The dropped
/// additive constant is the Gaussian normalizers `-½ log|2πΣ|` (per legislator
/// and per bill) and the penalty normalizer; it is the same for every penalty.
pub fn penalized_log_posterior(state: &ModelState, data: &VoteMatrix, hp: &Hyperparams) -> Result<f64> {
    if state.dim != hp.dim {
        return Err(Error::Contract(format!(
            "state dimension {} but hyperparameters for {}",
            state.dim, hp.dim
        )));
    }
    let prior = PriorPrecision::new(hp)?;
    Ok(log_likelihood(state, data)? + log_prior(state, &prior, hp) + penalty_term(&state.gamma, hp))
}

/// Sparsity level matching a spike-and-slab prior with slab probability `pi`:
/// `λ = sqrt(2·ln((1-π)/π))`.
pub fn lambda_from_pi(pi: f64) -> Result<f64> {
    if !(pi > 0.0 && pi < 0.5) {
        return Err(Error::Domain(format!("pi must lie in (0, 1/2), got {pi}")));
    }
    Ok((2.0 * ((1.0 - pi) / pi).ln()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_cell(alpha: f64, beta: f64, theta: f64, gamma: f64) -> ModelState {
        let mut s = ModelState::zeros(1, 1, 1);
        s.alpha[0] = alpha;
        s.beta[0] = beta;
        s.theta[0] = theta;
        s.gamma.set(0, 0, gamma);
        s
    }

    #[test]
    fn linear_predictor_examples() {
        assert_eq!(linear_predictor(&one_cell(0.0, 0.0, 7.3, 0.0), 0, 0), 0.0);
        assert_eq!(linear_predictor(&one_cell(1.0, 2.0, 0.5, 0.0), 0, 0), 2.0);
        assert!((linear_predictor(&one_cell(1.0, 2.0, 0.5, -3.1), 0, 0) + 1.1).abs() < 1e-15);
    }

    #[test]
    #[should_panic(expected = "outside")]
    fn linear_predictor_out_of_range() {
        linear_predictor(&one_cell(0.0, 0.0, 0.0, 0.0), 1, 0);
    }

    #[test]
    fn yea_probability_examples() {
        assert_eq!(yea_probability(0.0), 0.5);
        assert_eq!(yea_probability(f64::INFINITY), 1.0);
        assert_eq!(yea_probability(f64::NEG_INFINITY), 0.0);
        assert!((yea_probability(1.6449) - 0.95).abs() < 1e-4);
    }

    #[test]
    fn lambda_from_pi_examples() {
        assert!((lambda_from_pi(0.25).unwrap() - 1.482_303_807_367_511).abs() < 1e-12);
        let pi = 1.0 / (1.0 + 4.5f64.exp());
        assert!((lambda_from_pi(pi).unwrap() - 3.0).abs() < 1e-10);
        assert!(lambda_from_pi(0.5 - 1e-12).unwrap() < 1e-5);
        assert!(lambda_from_pi(0.5).is_err());
        assert!(lambda_from_pi(0.0).is_err());
        assert!(lambda_from_pi(0.7).is_err());
    }

    #[test]
    fn penalty_term_examples() {
        let mut hp = Hyperparams::defaults(1);
        let mut g = ShiftMatrix::new();
        assert_eq!(penalty_term(&g, &hp), 0.0);
        g.set(0, 0, -1.7);
        assert_eq!(penalty_term(&g, &hp), -4.5);
        hp.penalty = Penalty::L1;
        assert!((penalty_term(&g, &hp) + 3.0 * 1.7).abs() < 1e-15);
        hp.penalty = Penalty::None;
        assert_eq!(penalty_term(&g, &hp), 0.0);
        // λ = ∞ with empty support must not produce NaN.
        hp.penalty = Penalty::L0;
        hp.lambda = f64::INFINITY;
        assert_eq!(penalty_term(&ShiftMatrix::new(), &hp), 0.0);
    }

    #[test]
    fn shift_matrix_drops_zeros() {
        let mut g = ShiftMatrix::new();
        g.set(1, 2, 3.0);
        g.set(0, 1, -1.0);
        g.set(1, 2, 0.0);
        assert_eq!(g.nnz(), 1);
        assert_eq!(g.get(1, 2), 0.0);
        let dense = g.to_dense(2, 3);
        assert_eq!(ShiftMatrix::from_dense(&dense, 3), g);
    }

    #[test]
    fn vote_matrix_rejects_duplicates() {
        let legs = vec![LegislatorMeta::new("a"), LegislatorMeta::new("a")];
        let bills = vec![BillMeta::new("b")];
        assert!(VoteMatrix::new(vec![Vote::Yea, Vote::Nay], legs, bills).is_err());
    }

    #[test]
    fn hyperparams_reject_indefinite_covariance() {
        let mut hp = Hyperparams::defaults(2);
        hp.sigma_theta[(0, 1)] = 2.0;
        hp.sigma_theta[(1, 0)] = 2.0;
        assert!(hp.validate().is_err());
        let mut hp = Hyperparams::defaults(1);
        hp.lambda = -1.0;
        assert!(hp.validate().is_err());
    }

    #[test]
    fn party_parsing() {
        assert_eq!("D".parse::<Party>().unwrap(), Party::Dem);
        assert_eq!("republican".parse::<Party>().unwrap(), Party::Rep);
        assert_eq!("Ind".parse::<Party>().unwrap(), Party::Other);
    }
}
