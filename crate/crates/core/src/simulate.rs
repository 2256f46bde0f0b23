//! Parametric-bootstrap roll-call generator with protest-vote injection.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::normal_cdf;
use crate::model::{dot, BillMeta, LegislatorMeta, ModelState, Party, Vote, VoteMatrix};

// Selection draws use streams far away from the per-row generation streams.
const SELECTION_STREAM: u64 = u64::MAX;
const TRUTH_STREAM: u64 = u64::MAX - 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationSpec {
    /// Ground truth; Γ is ignored.
    pub truth: ModelState,
    /// Legislator metadata for the truth rows; generated from θ when `None`.
    pub legislators: Option<Vec<LegislatorMeta>>,
    pub n_protesters: usize,
    pub protest_votes_per_protester: usize,
    pub protester_party: Party,
    pub seed: u64,
    pub missing_rate: f64,
}

impl SimulationSpec {
    pub fn new(truth: ModelState, seed: u64) -> Self {
        SimulationSpec {
            truth,
            legislators: None,
            n_protesters: 0,
            protest_votes_per_protester: 0,
            protester_party: Party::Dem,
            seed,
            missing_rate: 0.0,
        }
    }

    pub fn with_protests(mut self, n_protesters: usize, votes_per_protester: usize) -> Self {
        self.n_protesters = n_protesters;
        self.protest_votes_per_protester = votes_per_protester;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedData {
    pub data: VoteMatrix,
    pub truth: ModelState,
    /// Flipped `(i, j)` cells, grouped by protester.
    pub protest_cells: Vec<(usize, usize)>,
    pub protesters: Vec<usize>,
}

/// Two-party synthetic ground truth.
///
/// θ (first coordinate) is `±party_separation + N(0, party_sd²)` with the
/// sign chosen by party, then centered and scaled to unit population
/// variance; further coordinates are standard normal.
///
/// A fraction `party_line_fraction` of bills are party-line votes: first-axis
/// discrimination `±party_line_discrimination` and cutpoint `c ~ N(0,
/// party_line_cutpoint_sd²)`. The others get a discrimination magnitude uniform
/// on `[discrimination_min, discrimination_max]` with random sign and a cutpoint
/// `c ~ N(0, cutpoint_sd²)`. Extra axes use the uniform magnitude; `α = -β₁·c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTruth {
    pub n_legislators: usize,
    pub n_bills: usize,
    pub dim: usize,
    pub rep_fraction: f64,
    pub party_separation: f64,
    pub party_sd: f64,
    pub discrimination_min: f64,
    pub discrimination_max: f64,
    pub cutpoint_sd: f64,
    pub party_line_fraction: f64,
    pub party_line_discrimination: f64,
    pub party_line_cutpoint_sd: f64,
}

impl Default for SyntheticTruth {
    fn default() -> Self {
        SyntheticTruth {
            n_legislators: 395,
            n_bills: 1455,
            dim: 1,
            rep_fraction: 0.5,
            party_separation: 0.8,
            party_sd: 0.3,
            discrimination_min: 1.5,
            discrimination_max: 3.0,
            cutpoint_sd: 1.0,
            party_line_fraction: 0.25,
            party_line_discrimination: 8.0,
            party_line_cutpoint_sd: 0.3,
        }
    }
}

impl SyntheticTruth {
    pub fn sized(n_legislators: usize, n_bills: usize) -> Self {
        SyntheticTruth {
            n_legislators,
            n_bills,
            ..SyntheticTruth::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_legislators < 2 || self.n_bills == 0 || self.dim == 0 {
            return Err(Error::Domain("synthetic truth needs ≥ 2 legislators, ≥ 1 bill, dim ≥ 1".into()));
        }
        for (name, p) in [("rep_fraction", self.rep_fraction), ("party_line_fraction", self.party_line_fraction)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        for (name, v) in [
            ("party_separation", self.party_separation),
            ("party_sd", self.party_sd),
            ("discrimination_min", self.discrimination_min),
            ("discrimination_max", self.discrimination_max),
            ("cutpoint_sd", self.cutpoint_sd),
            ("party_line_discrimination", self.party_line_discrimination),
            ("party_line_cutpoint_sd", self.party_line_cutpoint_sd),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if self.discrimination_min > self.discrimination_max {
            return Err(Error::Domain("discrimination_min exceeds discrimination_max".into()));
        }
        Ok(())
    }

    /// Draws the truth and matching metadata (Dem for negative first-coordinate θ).
    pub fn generate(&self, seed: u64) -> Result<(ModelState, Vec<LegislatorMeta>)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(TRUTH_STREAM);
        let (n, j, k) = (self.n_legislators, self.n_bills, self.dim);
        let n_rep = (self.rep_fraction * n as f64).round() as usize;
        let spread = Normal::new(0.0, self.party_sd).expect("validated sd");

        let mut first: Vec<f64> = (0..n)
            .map(|i| {
                let centre = if i < n - n_rep { -self.party_separation } else { self.party_separation };
                centre + spread.sample(&mut rng)
            })
            .collect();
        let mean = first.iter().sum::<f64>() / n as f64;
        let sd = (first.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sd <= 0.0 {
            return Err(Error::Domain("synthetic ideal points have zero spread".into()));
        }
        first.iter_mut().for_each(|t| *t = (*t - mean) / sd);

        let mut theta = vec![0.0; n * k];
        for i in 0..n {
            theta[i * k] = first[i];
            for d in 1..k {
                theta[i * k + d] = StandardNormal.sample(&mut rng);
            }
        }
        let cutpoint = Normal::new(0.0, self.cutpoint_sd).expect("validated sd");
        let party_cutpoint = Normal::new(0.0, self.party_line_cutpoint_sd).expect("validated sd");
        let mut alpha = Vec::with_capacity(j);
        let mut beta = Vec::with_capacity(j * k);
        for _ in 0..j {
            let party_line = rng.random::<f64>() < self.party_line_fraction;
            for d in 0..k {
                let magnitude = if party_line && d == 0 {
                    self.party_line_discrimination
                } else {
                    self.discrimination_min + (self.discrimination_max - self.discrimination_min) * rng.random::<f64>()
                };
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                beta.push(sign * magnitude);
            }
            let c: f64 = if party_line {
                party_cutpoint.sample(&mut rng)
            } else {
                cutpoint.sample(&mut rng)
            };
            alpha.push(-beta[beta.len() - k] * c);
        }
        let legislators = (0..n)
            .map(|i| {
                let party = if first[i] < 0.0 { Party::Dem } else { Party::Rep };
                LegislatorMeta::new(format!("L{:04}", i + 1)).with_party(party)
            })
            .collect();
        let state = ModelState {
            dim: k,
            theta,
            alpha,
            beta,
            gamma: Default::default(),
        };
        Ok((state, legislators))
    }
}

fn default_legislators(truth: &ModelState) -> Vec<LegislatorMeta> {
    (0..truth.n_legislators())
        .map(|i| {
            let party = if truth.theta_row(i)[0] < 0.0 { Party::Dem } else { Party::Rep };
            LegislatorMeta::new(format!("L{:04}", i + 1)).with_party(party)
        })
        .collect()
}

fn default_bills(n: usize) -> Vec<BillMeta> {
    (0..n).map(|j| BillMeta::new(format!("B{:04}", j + 1))).collect()
}

/// Draws sincere votes: each cell is Missing with probability `missing_rate`,
/// otherwise Yea with probability `Φ(α_j + β_jᵀθ_i)`. Row `i` uses its own
/// ChaCha stream, and every cell consumes exactly two uniforms.
pub fn generate_sincere(truth: &ModelState, seed: u64, missing_rate: f64) -> Result<VoteMatrix> {
    generate_sincere_with(truth, seed, missing_rate, default_legislators(truth))
}

fn generate_sincere_with(
    truth: &ModelState,
    seed: u64,
    missing_rate: f64,
    legislators: Vec<LegislatorMeta>,
) -> Result<VoteMatrix> {
    truth.validate()?;
    if !(0.0..=1.0).contains(&missing_rate) {
        return Err(Error::Domain(format!("missing_rate must lie in [0, 1], got {missing_rate}")));
    }
    let (n, j) = (truth.n_legislators(), truth.n_bills());
    let rows: Vec<Vec<Vote>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let th = truth.theta_row(i);
            (0..j)
                .map(|b| {
                    let u_missing: f64 = rng.random();
                    let u_vote: f64 = rng.random();
                    if u_missing < missing_rate {
                        Vote::Missing
                    } else if u_vote < normal_cdf(truth.alpha[b] + dot(truth.beta_row(b), th)) {
                        Vote::Yea
                    } else {
                        Vote::Nay
                    }
                })
                .collect()
        })
        .collect();
    VoteMatrix::new(rows.concat(), legislators, default_bills(j))
}

/// Samples `n` distinct legislators from the most extreme decile of the given
/// party's side (negative first-coordinate θ for Dem, positive for Rep). The
/// pool is widened to `n` when the decile is smaller.
pub fn select_protesters(truth: &ModelState, n: usize, side: Party, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SELECTION_STREAM);
    select_protesters_rng(truth, n, side, &mut rng)
}

fn select_protesters_rng(truth: &ModelState, n: usize, side: Party, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let sign = match side {
        Party::Dem => -1.0,
        Party::Rep => 1.0,
        Party::Other => return Err(Error::Domain("protesters must come from the Dem or Rep side".into())),
    };
    // Most extreme first.
    let mut members: Vec<(usize, f64)> = (0..truth.n_legislators())
        .map(|i| (i, sign * truth.theta_row(i)[0]))
        .filter(|&(_, v)| v > 0.0)
        .collect();
    if members.is_empty() {
        return Err(Error::Domain(format!("no legislators on the {side} side")));
    }
    if n > members.len() {
        return Err(Error::Domain(format!(
            "requested {n} protesters but only {} legislators are on the {side} side",
            members.len()
        )));
    }
    members.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let pool = members.len().div_ceil(10).max(n);
    Ok(sample(rng, pool, n).into_iter().map(|p| members[p].0).collect())
}

fn bills_by_discrimination(truth: &ModelState) -> Vec<usize> {
    let mut order: Vec<(usize, f64)> = (0..truth.n_bills())
        .map(|j| (j, dot(truth.beta_row(j), truth.beta_row(j))))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order.into_iter().map(|(j, _)| j).collect()
}

/// Samples `n_bills` distinct bills from the top quartile of `‖β_j‖`, widened to
/// `n_bills` when the quartile is smaller.
pub fn select_protest_bills(truth: &ModelState, n_bills: usize, seed: u64) -> Result<Vec<usize>> {
    let j = truth.n_bills();
    if n_bills > j {
        return Err(Error::Domain(format!("requested {n_bills} protest bills but only {j} exist")));
    }
    let order = bills_by_discrimination(truth);
    let pool = j.div_ceil(4).max(n_bills);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SELECTION_STREAM);
    Ok(sample(&mut rng, pool, n_bills).into_iter().map(|p| order[p]).collect())
}

/// Flips `(protesters[k], b)` for every `b` in `bills[k]`.
///
/// Errors if a target cell is Missing or listed twice.
pub fn inject_protests(data: &VoteMatrix, protesters: &[usize], bills: &[Vec<usize>]) -> Result<(VoteMatrix, Vec<(usize, usize)>)> {
    if protesters.len() != bills.len() {
        return Err(Error::Contract("one bill list is required per protester".into()));
    }
    let mut out = data.clone();
    let mut cells = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (&i, row_bills) in protesters.iter().zip(bills) {
        for &j in row_bills {
            if i >= data.n_legislators() || j >= data.n_bills() {
                return Err(Error::Contract(format!("protest cell ({i}, {j}) is outside the matrix")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::Contract(format!("protest cell ({i}, {j}) listed twice")));
            }
            let vote = data.get(i, j);
            if !vote.is_observed() {
                return Err(Error::Domain(format!("protest cell ({i}, {j}) is missing")));
            }
            out.set(i, j, vote.flipped());
            cells.push((i, j));
        }
    }
    Ok((out, cells))
}

/// Full simulation: sincere votes, protester and bill selection, then flips.
///
/// Each protester draws its own bills from the top quartile of `‖β‖`,
/// restricted to bills it actually voted on.
pub fn simulate(spec: &SimulationSpec) -> Result<SimulatedData> {
    let truth = &spec.truth;
    truth.validate()?;
    let (n, j) = (truth.n_legislators(), truth.n_bills());
    if spec.protest_votes_per_protester > j {
        return Err(Error::Domain(format!(
            "protest_votes_per_protester = {} exceeds the {j} bills",
            spec.protest_votes_per_protester
        )));
    }
    let legislators = match &spec.legislators {
        Some(l) if l.len() == n => l.clone(),
        Some(l) => {
            return Err(Error::Contract(format!("{} legislator records for {n} truth rows", l.len())));
        }
        None => default_legislators(truth),
    };
    let sincere = generate_sincere_with(truth, spec.seed, spec.missing_rate, legislators)?;
    let clean_truth = ModelState {
        gamma: Default::default(),
        ..truth.clone()
    };
    if spec.n_protesters == 0 || spec.protest_votes_per_protester == 0 {
        return Ok(SimulatedData {
            data: sincere,
            truth: clean_truth,
            protest_cells: Vec::new(),
            protesters: Vec::new(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(SELECTION_STREAM);
    let protesters = select_protesters_rng(truth, spec.n_protesters, spec.protester_party, &mut rng)?;
    let order = bills_by_discrimination(truth);
    let mut bills = Vec::with_capacity(protesters.len());
    for &i in &protesters {
        let observed: Vec<usize> = order.iter().copied().filter(|&b| sincere.get(i, b).is_observed()).collect();
        let want = spec.protest_votes_per_protester;
        if observed.len() < want {
            return Err(Error::Domain(format!(
                "legislator {} has only {} observed votes, {want} protests requested",
                sincere.legislators()[i].id,
                observed.len()
            )));
        }
        let pool = j.div_ceil(4).max(want).min(observed.len());
        bills.push(sample(&mut rng, pool, want).into_iter().map(|p| observed[p]).collect());
    }
    let (data, protest_cells) = inject_protests(&sincere, &protesters, &bills)?;
    Ok(SimulatedData {
        data,
        truth: clean_truth,
        protest_cells,
        protesters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_truth(n: usize, j: usize) -> ModelState {
        let theta = (0..n).map(|i| i as f64 - (n as f64 - 1.0) / 2.0).collect();
        let beta = (0..j).map(|b| b as f64 + 1.0).collect();
        ModelState {
            dim: 1,
            theta,
            alpha: vec![0.0; j],
            beta,
            gamma: Default::default(),
        }
    }

    #[test]
    fn fair_coin_votes() {
        let truth = ModelState::zeros(100, 1000, 1);
        let data = generate_sincere(&truth, 3, 0.0).unwrap();
        let yea = data.votes().iter().filter(|v| **v == Vote::Yea).count() as f64;
        let total = 100_000.0;
        let sigma = (total * 0.25_f64).sqrt();
        assert!((yea - total / 2.0).abs() < 3.0 * sigma, "{yea}");
    }

    #[test]
    fn easy_bills_are_all_yea() {
        let mut truth = ModelState::zeros(100, 100, 1);
        truth.alpha = vec![6.0; 100];
        let data = generate_sincere(&truth, 9, 0.0).unwrap();
        assert!(data.votes().iter().all(|v| *v == Vote::Yea));
    }

    #[test]
    fn missing_rate_is_honoured() {
        let truth = ModelState::zeros(50, 200, 1);
        let data = generate_sincere(&truth, 1, 0.2).unwrap();
        let frac = 1.0 - data.n_observed() as f64 / 10_000.0;
        assert!((frac - 0.2).abs() < 0.03, "{frac}");
        let none = generate_sincere(&truth, 1, 1.0).unwrap();
        assert_eq!(none.n_observed(), 0);
    }

    #[test]
    fn protesters_come_from_extreme_decile() {
        // 100 negative and 100 positive legislators.
        let truth = line_truth(200, 5);
        let picked = select_protesters(&truth, 4, Party::Dem, 17).unwrap();
        assert_eq!(picked.len(), 4);
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 4);
        assert!(picked.iter().all(|&i| i < 10), "{picked:?}");
        assert_eq!(picked, select_protesters(&truth, 4, Party::Dem, 17).unwrap());
        assert!(select_protesters(&truth, 0, Party::Dem, 1).unwrap().is_empty());
        let rep = select_protesters(&truth, 3, Party::Rep, 2).unwrap();
        assert!(rep.iter().all(|&i| i >= 190));
        assert!(select_protesters(&truth, 101, Party::Dem, 1).is_err());
    }

    #[test]
    fn protest_bills_from_top_quartile() {
        let mut truth = line_truth(2, 4);
        truth.beta = vec![0.1, 0.2, 5.0, 6.0];
        for seed in 0..20 {
            let b = select_protest_bills(&truth, 1, seed).unwrap();
            assert!(b == vec![2] || b == vec![3], "{b:?}");
        }
        let mut all = select_protest_bills(&truth, 4, 5).unwrap();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert!(select_protest_bills(&truth, 5, 5).is_err());
    }

    #[test]
    fn injection_flips_exactly_the_listed_cells() {
        let truth = line_truth(6, 8);
        let data = generate_sincere(&truth, 4, 0.0).unwrap();
        let (same, cells) = inject_protests(&data, &[], &[]).unwrap();
        assert_eq!(same, data);
        assert!(cells.is_empty());
        let bills = vec![vec![0, 3], vec![7]];
        let (flipped, cells) = inject_protests(&data, &[1, 4], &bills).unwrap();
        assert_eq!(cells, vec![(1, 0), (1, 3), (4, 7)]);
        for i in 0..6 {
            for j in 0..8 {
                let want = if cells.contains(&(i, j)) { data.get(i, j).flipped() } else { data.get(i, j) };
                assert_eq!(flipped.get(i, j), want);
            }
        }
        let (back, _) = inject_protests(&flipped, &[1, 4], &bills).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn injection_rejects_missing_cells() {
        let mut data = VoteMatrix::from_rows(&[vec![Vote::Yea, Vote::Missing]]).unwrap();
        assert!(inject_protests(&data, &[0], &[vec![1]]).is_err());
        data.set(0, 1, Vote::Nay);
        assert!(inject_protests(&data, &[0], &[vec![1, 1]]).is_err());
    }

    #[test]
    fn simulate_counts_and_zero_protest_identity() {
        let (truth, legs) = SyntheticTruth::sized(60, 80).generate(8).unwrap();
        let mut spec = SimulationSpec::new(truth.clone(), 21);
        spec.legislators = Some(legs);
        spec.missing_rate = 0.1;
        let plain = simulate(&spec).unwrap();
        let sincere = generate_sincere(&truth, 21, 0.1).unwrap();
        assert_eq!(plain.data.votes(), sincere.votes());

        let sim = simulate(&spec.clone().with_protests(3, 12)).unwrap();
        assert_eq!(sim.protest_cells.len(), 36);
        assert_eq!(sim.protesters.len(), 3);
        for &(i, j) in &sim.protest_cells {
            assert_eq!(sim.data.get(i, j), sincere.get(i, j).flipped());
            assert!(truth.theta_row(i)[0] < 0.0);
        }
        let differing = sim.data.votes().iter().zip(sincere.votes()).filter(|(a, b)| a != b).count();
        assert_eq!(differing, 36);
        assert_eq!(sim, simulate(&spec.with_protests(3, 12)).unwrap());
    }

    #[test]
    fn synthetic_truth_is_standardized() {
        let (truth, legs) = SyntheticTruth::sized(101, 10).generate(2).unwrap();
        let n = 101.0;
        let mean = truth.theta.iter().sum::<f64>() / n;
        let var = truth.theta.iter().map(|t| t * t).sum::<f64>() / n;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        for (l, t) in legs.iter().zip(&truth.theta) {
            assert_eq!(l.party, Some(if *t < 0.0 { Party::Dem } else { Party::Rep }));
        }
    }
}
