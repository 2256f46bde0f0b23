//! Summaries of fitted models: flagged protest votes, rank quantiles, item
//! response curves, fit comparisons and chamber pivots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, FitResult, LegislatorMeta, Party, Vote, VoteMatrix};
use crate::normal::normal_cdf;

/// Mean ranks (1-based) of `values`; ties share the average of their positions.
pub fn mean_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share their mean.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// `(rank(θ_i) - 0.5) / I` with mean ranks for ties; larger θ gives a larger quantile.
pub fn empirical_quantile(theta_column: &[f64], i: usize) -> Result<f64> {
    empirical_quantiles(theta_column)?
        .get(i)
        .copied()
        .ok_or_else(|| Error::Contract(format!("legislator {i} outside {} scores", theta_column.len())))
}

/// Quantiles of every entry, as in [`empirical_quantile`].
pub fn empirical_quantiles(theta_column: &[f64]) -> Result<Vec<f64>> {
    let n = theta_column.len();
    if n < 2 {
        return Err(Error::Contract("quantiles need at least two legislators".into()));
    }
    if theta_column.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("non-finite ideal point".into()));
    }
    Ok(mean_ranks(theta_column).into_iter().map(|r| (r - 0.5) / n as f64).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtestRow {
    pub legislator: String,
    pub bill: String,
    pub i: usize,
    pub j: usize,
    pub gamma: f64,
    pub vote: Vote,
    /// `Φ(α_j + β_jᵀθ_i)`, the Yea probability without the shift.
    pub sincere_yea_probability: f64,
}

/// One row per nonzero shift, in (legislator, bill) order.
pub fn protest_report(fit: &FitResult, data: &VoteMatrix) -> Result<Vec<ProtestRow>> {
    fit.state.check_against(data)?;
    Ok(fit
        .state
        .gamma
        .iter()
        .map(|(i, j, g)| ProtestRow {
            legislator: data.legislators()[i].id.clone(),
            bill: data.bills()[j].id.clone(),
            i,
            j,
            gamma: g,
            vote: data.get(i, j),
            sincere_yea_probability: normal_cdf(fit.state.spatial_predictor(i, j)),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub theta: f64,
    pub yea_probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveOverlay {
    pub legislator: String,
    pub theta: f64,
    pub vote: Vote,
    pub protest: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemResponseCurve {
    pub bill: String,
    pub alpha: f64,
    pub beta: f64,
    pub points: Vec<CurvePoint>,
    pub overlay: Vec<CurveOverlay>,
}

/// Evenly spaced grid of `n` points from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite()) || n == 0 || (n == 1 && lo != hi) || lo > hi {
        return Err(Error::Domain(format!("invalid grid {lo}:{hi}:{n}")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|k| if k == n - 1 { hi } else { lo + step * k as f64 }).collect())
}

/// `Φ(α_j + β_j θ)` over `grid` plus every legislator's estimate, vote and shift flag on bill `j`.
pub fn irc_points(fit: &FitResult, data: &VoteMatrix, j: usize, grid: &[f64]) -> Result<ItemResponseCurve> {
    let state = &fit.state;
    state.check_against(data)?;
    if state.dim != 1 {
        return Err(Error::Contract("item response curves are drawn for one-dimensional fits".into()));
    }
    if j >= state.n_bills() {
        return Err(Error::Contract(format!("bill {j} outside {} bills", state.n_bills())));
    }
    let (alpha, beta) = (state.alpha[j], state.beta[j]);
    let points = grid
        .iter()
        .map(|&t| CurvePoint {
            theta: t,
            yea_probability: normal_cdf(alpha + beta * t),
        })
        .collect();
    let overlay = (0..state.n_legislators())
        .map(|i| CurveOverlay {
            legislator: data.legislators()[i].id.clone(),
            theta: state.theta[i],
            vote: data.get(i, j),
            protest: state.gamma.get(i, j) != 0.0,
        })
        .collect();
    Ok(ItemResponseCurve {
        bill: data.bills()[j].id.clone(),
        alpha,
        beta,
        points,
        overlay,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PivotalSummary {
    pub dem_median: f64,
    pub rep_median: f64,
    pub interparty_distance: f64,
    pub floor_median: f64,
    pub veto_pivot: f64,
}

pub const DEFAULT_VETO_QUANTILE: f64 = 2.0 / 3.0;

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Linear interpolation between order statistics at `(n-1)·q`; q = ½ gives the median.
fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Party medians, their distance, the chamber median and the veto pivot, the
/// score at `veto_quantile` counted from the low (liberal) end.
pub fn pivotal_quantities(theta_column: &[f64], parties: &[Option<Party>], veto_quantile: f64) -> Result<PivotalSummary> {
    if theta_column.len() != parties.len() {
        return Err(Error::Contract("one party label is required per legislator".into()));
    }
    if !(veto_quantile > 0.0 && veto_quantile < 1.0) {
        return Err(Error::Domain(format!("veto quantile must lie in (0, 1), got {veto_quantile}")));
    }
    if let Some(i) = parties.iter().position(Option::is_none) {
        return Err(Error::Data(format!("legislator {i} has no party label")));
    }
    let party = |p: Party| {
        sorted(
            theta_column
                .iter()
                .zip(parties)
                .filter(|(_, q)| **q == Some(p))
                .map(|(t, _)| *t),
        )
    };
    let dem = party(Party::Dem);
    let rep = party(Party::Rep);
    if dem.is_empty() || rep.is_empty() {
        return Err(Error::Data("both parties need at least one member".into()));
    }
    let all = sorted(theta_column.iter().copied());
    let dem_median = median(&dem);
    let rep_median = median(&rep);
    Ok(PivotalSummary {
        dem_median,
        rep_median,
        interparty_distance: (rep_median - dem_median).abs(),
        floor_median: median(&all),
        veto_pivot: interpolated_quantile(&all, veto_quantile),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub legislator: String,
    pub quantile_a: f64,
    pub quantile_b: f64,
    pub abs_delta: f64,
}

/// Per-legislator quantiles on dimension `dim` under both fits, largest change first.
/// Both fits should be sign-anchored the same way beforehand.
pub fn compare_fits(fit_a: &FitResult, fit_b: &FitResult, legislators: &[LegislatorMeta], dim: usize) -> Result<Vec<QuantileRow>> {
    let n = legislators.len();
    if fit_a.state.n_legislators() != n || fit_b.state.n_legislators() != n {
        return Err(Error::Data(format!(
            "rosters differ: {} and {} ideal points for {n} legislators",
            fit_a.state.n_legislators(),
            fit_b.state.n_legislators()
        )));
    }
    if dim >= fit_a.state.dim || dim >= fit_b.state.dim {
        return Err(Error::Contract(format!("dimension {dim} not present in both fits")));
    }
    let qa = empirical_quantiles(&fit_a.state.theta_column(dim))?;
    let qb = empirical_quantiles(&fit_b.state.theta_column(dim))?;
    let mut rows: Vec<QuantileRow> = legislators
        .iter()
        .zip(qa.iter().zip(&qb))
        .map(|(l, (&a, &b))| QuantileRow {
            legislator: l.id.clone(),
            quantile_a: a,
            quantile_b: b,
            abs_delta: (a - b).abs(),
        })
        .collect();
    // Stable sort keeps roster order among equal deltas.
    rows.sort_by(|x, y| y.abs_delta.total_cmp(&x.abs_delta));
    Ok(rows)
}

/// Yea probability from a fitted state, shift included.
pub fn fitted_yea_probability(fit: &FitResult, i: usize, j: usize) -> f64 {
    let s = &fit.state;
    normal_cdf(s.alpha[j] + dot(s.beta_row(j), s.theta_row(i)) + s.gamma.get(i, j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelState, ShiftMatrix};

    fn fit_1d(theta: Vec<f64>, alpha: Vec<f64>, beta: Vec<f64>, gamma: ShiftMatrix) -> FitResult {
        FitResult::new(
            ModelState {
                dim: 1,
                theta,
                alpha,
                beta,
                gamma,
            },
            vec![],
            0,
            true,
        )
    }

    #[test]
    fn quantile_examples() {
        let theta = [-2.0, 0.0, 2.0];
        assert!((empirical_quantile(&theta, 2).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!((empirical_quantile(&theta, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!(empirical_quantile(&theta, 3).is_err());
        let tied = empirical_quantiles(&[1.0, 1.0, 3.0, 0.0]).unwrap();
        assert_eq!(tied, vec![0.5, 0.5, 0.875, 0.125]);
    }

    #[test]
    fn ranks_handle_ties() {
        assert_eq!(mean_ranks(&[3.0, 1.0, 3.0, 3.0]), vec![3.0, 1.0, 3.0, 3.0]);
        assert_eq!(mean_ranks(&[0.5, 0.5]), vec![1.5, 1.5]);
    }

    #[test]
    fn pivotal_hand_example() {
        let theta = [-2.0, -1.0, -1.0, 1.0, 2.0, 3.0];
        let parties = [Party::Dem, Party::Dem, Party::Dem, Party::Rep, Party::Rep, Party::Rep].map(Some);
        let p = pivotal_quantities(&theta, &parties, DEFAULT_VETO_QUANTILE).unwrap();
        assert_eq!(p.dem_median, -1.0);
        assert_eq!(p.rep_median, 2.0);
        assert_eq!(p.interparty_distance, 3.0);
        assert_eq!(p.floor_median, 0.0);
        let half = pivotal_quantities(&theta, &parties, 0.5).unwrap();
        assert_eq!(half.veto_pivot, half.floor_median);
    }

    #[test]
    fn pivotal_single_members_and_errors() {
        let p = pivotal_quantities(&[-0.4, 0.9], &[Some(Party::Dem), Some(Party::Rep)], 0.6).unwrap();
        assert_eq!((p.dem_median, p.rep_median), (-0.4, 0.9));
        assert!(pivotal_quantities(&[-0.4, 0.9], &[Some(Party::Dem), None], 0.6).is_err());
        assert!(pivotal_quantities(&[-0.4, 0.9], &[Some(Party::Dem), Some(Party::Dem)], 0.6).is_err());
        assert!(pivotal_quantities(&[-0.4, 0.9], &[Some(Party::Dem), Some(Party::Rep)], 1.0).is_err());
    }

    #[test]
    fn curves() {
        let data = VoteMatrix::from_rows(&[vec![Vote::Yea, Vote::Nay], vec![Vote::Nay, Vote::Yea]]).unwrap();
        let mut g = ShiftMatrix::new();
        g.set(1, 0, -4.0);
        let fit = fit_1d(vec![-1.0, 1.0], vec![0.3, 0.0], vec![0.0, 1.0], g);
        let grid = linear_grid(-3.0, 3.0, 7).unwrap();
        let flat = irc_points(&fit, &data, 0, &grid).unwrap();
        assert!(flat.points.iter().all(|p| p.yea_probability == normal_cdf(0.3)));
        assert!(flat.overlay[1].protest && !flat.overlay[0].protest);
        let rising = irc_points(&fit, &data, 1, &grid).unwrap();
        assert!(rising.points.windows(2).all(|w| w[1].yea_probability > w[0].yea_probability));
        assert!((rising.points[0].yea_probability - 0.001_349_898_031_630_094_6).abs() < 1e-15);
        assert!((rising.points[6].yea_probability - 0.998_650_101_968_369_9).abs() < 1e-15);
        assert!(irc_points(&fit, &data, 2, &grid).is_err());
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(linear_grid(0.0, 1.0, 3).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(linear_grid(2.0, 2.0, 1).unwrap(), vec![2.0]);
        assert!(linear_grid(1.0, 0.0, 3).is_err());
        assert!(linear_grid(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn report_lists_support() {
        let data = VoteMatrix::from_rows(&[vec![Vote::Yea, Vote::Nay], vec![Vote::Nay, Vote::Yea]]).unwrap();
        let none = fit_1d(vec![-1.0, 1.0], vec![0.0, 0.0], vec![1.0, 1.0], ShiftMatrix::new());
        assert!(protest_report(&none, &data).unwrap().is_empty());
        let mut g = ShiftMatrix::new();
        g.set(0, 0, 3.5);
        let fit = fit_1d(vec![-1.0, 1.0], vec![0.0, 0.0], vec![1.0, 1.0], g);
        let rows = protest_report(&fit, &data).unwrap();
        assert_eq!(rows.len(), fit.state.gamma.nnz());
        assert_eq!((rows[0].legislator.as_str(), rows[0].bill.as_str()), ("L0001", "B0001"));
        assert_eq!(rows[0].vote, Vote::Yea);
        assert!((rows[0].sincere_yea_probability - normal_cdf(-1.0)).abs() < 1e-15);
        assert!((fitted_yea_probability(&fit, 0, 0) - normal_cdf(2.5)).abs() < 1e-15);
    }

    #[test]
    fn comparison_sorted_and_symmetric() {
        let legs: Vec<LegislatorMeta> = (0..4).map(|i| LegislatorMeta::new(format!("x{i}"))).collect();
        let a = fit_1d(vec![-2.0, -1.0, 1.0, 2.0], vec![0.0], vec![1.0], ShiftMatrix::new());
        let b = fit_1d(vec![0.5, -1.0, 1.0, 2.0], vec![0.0], vec![1.0], ShiftMatrix::new());
        let rows = compare_fits(&a, &b, &legs, 0).unwrap();
        assert_eq!(rows[0].legislator, "x0");
        assert!((rows[0].abs_delta - 0.25).abs() < 1e-15);
        assert_eq!(rows[1].legislator, "x1");
        assert!(rows.windows(2).all(|w| w[0].abs_delta >= w[1].abs_delta));
        let same = compare_fits(&a, &a, &legs, 0).unwrap();
        assert!(same.iter().all(|r| r.abs_delta == 0.0));
        let swapped = compare_fits(&b, &a, &legs, 0).unwrap();
        for (x, y) in rows.iter().zip(&swapped) {
            assert_eq!(x.abs_delta, y.abs_delta);
            assert_eq!(x.quantile_a, y.quantile_b);
        }
        assert!(compare_fits(&a, &b, &legs[..3], 0).is_err());
    }
}
