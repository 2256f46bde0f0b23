//! Sequential screening of raw roll-call matrices: exclusions, lopsided bills,
//! low-participation legislators, unanimous bills. One pass, in that order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Vote, VoteMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Drop a bill when the minority share of observed votes is at or below this.
    pub lopsided_threshold: f64,
    /// Drop a legislator whose observed share of the remaining bills is strictly below this.
    pub min_participation: f64,
    pub drop_unanimous: bool,
    pub exclude_legislators: Vec<String>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            lopsided_threshold: 0.01,
            min_participation: 0.10,
            drop_unanimous: true,
            exclude_legislators: Vec::new(),
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lopsided_threshold) {
            return Err(Error::Domain(format!(
                "lopsided_threshold must lie in [0, 1), got {}",
                self.lopsided_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.min_participation) {
            return Err(Error::Domain(format!(
                "min_participation must lie in [0, 1], got {}",
                self.min_participation
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub input_dims: (usize, usize),
    pub output_dims: (usize, usize),
    pub excluded_ids: Vec<String>,
    pub dropped_bills_lopsided: Vec<String>,
    pub dropped_legislators_sparse: Vec<String>,
    pub dropped_bills_unanimous: Vec<String>,
}

fn tally(data: &VoteMatrix, j: usize) -> (usize, usize) {
    let (mut yea, mut nay) = (0, 0);
    for i in 0..data.n_legislators() {
        match data.get(i, j) {
            Vote::Yea => yea += 1,
            Vote::Nay => nay += 1,
            Vote::Missing => {}
        }
    }
    (yea, nay)
}

fn keep_bills(data: &VoteMatrix, keep: impl Fn(usize) -> bool) -> Result<(VoteMatrix, Vec<String>)> {
    let (kept, dropped): (Vec<usize>, Vec<usize>) = (0..data.n_bills()).partition(|&j| keep(j));
    let rows: Vec<usize> = (0..data.n_legislators()).collect();
    let ids = dropped.iter().map(|&j| data.bills()[j].id.clone()).collect();
    Ok((data.select(&rows, &kept)?, ids))
}

/// Drops bills whose minority share `min(yea, nay) / (yea + nay)` is at most
/// `threshold`, and bills with no observed votes.
pub fn filter_lopsided(data: &VoteMatrix, threshold: f64) -> Result<(VoteMatrix, Vec<String>)> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::Domain(format!("threshold must lie in [0, 1), got {threshold}")));
    }
    keep_bills(data, |j| {
        let (yea, nay) = tally(data, j);
        let total = yea + nay;
        // The slack keeps exact ties such as 1/100 at 0.01 on the dropping side.
        total > 0 && (yea.min(nay) as f64) > threshold * total as f64 + 1e-9
    })
}

/// Drops legislators with `observed / J < min_participation`.
pub fn filter_sparse_legislators(data: &VoteMatrix, min_participation: f64) -> Result<(VoteMatrix, Vec<String>)> {
    let n_bills = data.n_bills();
    let (kept, dropped): (Vec<usize>, Vec<usize>) = (0..data.n_legislators()).partition(|&i| {
        let observed = data.row(i).iter().filter(|v| v.is_observed()).count();
        n_bills > 0 && (observed as f64) + 1e-9 >= min_participation * n_bills as f64
    });
    let cols: Vec<usize> = (0..n_bills).collect();
    let ids = dropped.iter().map(|&i| data.legislators()[i].id.clone()).collect();
    Ok((data.select(&kept, &cols)?, ids))
}

/// Drops bills with no observed Nay or no observed Yea.
pub fn drop_unanimous(data: &VoteMatrix) -> Result<(VoteMatrix, Vec<String>)> {
    keep_bills(data, |j| {
        let (yea, nay) = tally(data, j);
        yea > 0 && nay > 0
    })
}

/// Removes the listed legislators. Ids absent from the matrix are ignored with a warning.
pub fn exclude_legislators(data: &VoteMatrix, ids: &[String]) -> Result<(VoteMatrix, Vec<String>)> {
    for id in ids {
        if data.legislator_index(id).is_none() {
            log::warn!("excluded legislator '{id}' is not in the matrix");
        }
    }
    let (kept, dropped): (Vec<usize>, Vec<usize>) =
        (0..data.n_legislators()).partition(|&i| !ids.contains(&data.legislators()[i].id));
    let cols: Vec<usize> = (0..data.n_bills()).collect();
    let ids = dropped.iter().map(|&i| data.legislators()[i].id.clone()).collect();
    Ok((data.select(&kept, &cols)?, ids))
}

/// Exclusions, then lopsided bills, then sparse legislators, then (optionally)
/// unanimous bills, each applied exactly once.
pub fn pipeline(data: &VoteMatrix, config: &PreprocessConfig) -> Result<(VoteMatrix, PreprocessReport)> {
    config.validate()?;
    let (data_1, excluded_ids) = exclude_legislators(data, &config.exclude_legislators)?;
    let (data_2, dropped_bills_lopsided) = filter_lopsided(&data_1, config.lopsided_threshold)?;
    let (data_3, dropped_legislators_sparse) = filter_sparse_legislators(&data_2, config.min_participation)?;
    let (out, dropped_bills_unanimous) = if config.drop_unanimous {
        drop_unanimous(&data_3)?
    } else {
        (data_3, Vec::new())
    };
    let report = PreprocessReport {
        input_dims: data.dims(),
        output_dims: out.dims(),
        excluded_ids,
        dropped_bills_lopsided,
        dropped_legislators_sparse,
        dropped_bills_unanimous,
    };
    if out.n_legislators() == 0 || out.n_bills() == 0 {
        return Err(Error::Data(format!(
            "preprocessing left an empty {}×{} matrix (lopsided bills dropped: {}, sparse legislators dropped: {}, unanimous bills dropped: {})",
            out.n_legislators(),
            out.n_bills(),
            report.dropped_bills_lopsided.len(),
            report.dropped_legislators_sparse.len(),
            report.dropped_bills_unanimous.len()
        )));
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_bill(yea: usize, nay: usize, missing: usize) -> VoteMatrix {
        let rows: Vec<Vec<Vote>> = std::iter::repeat_n(Vote::Yea, yea)
            .chain(std::iter::repeat_n(Vote::Nay, nay))
            .chain(std::iter::repeat_n(Vote::Missing, missing))
            .map(|v| vec![v])
            .collect();
        VoteMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn lopsided_boundaries() {
        assert_eq!(filter_lopsided(&one_bill(99, 1, 0), 0.01).unwrap().1.len(), 1);
        assert_eq!(filter_lopsided(&one_bill(98, 2, 0), 0.01).unwrap().1.len(), 0);
        assert_eq!(filter_lopsided(&one_bill(50, 50, 0), 0.01).unwrap().1.len(), 0);
        // Missing cells do not count toward the total.
        assert_eq!(filter_lopsided(&one_bill(99, 1, 50), 0.01).unwrap().1.len(), 1);
        assert_eq!(filter_lopsided(&one_bill(0, 0, 5), 0.01).unwrap().1.len(), 1);
    }

    fn participation(observed: usize, n_bills: usize) -> VoteMatrix {
        let row: Vec<Vote> = (0..n_bills).map(|j| if j < observed { Vote::Yea } else { Vote::Missing }).collect();
        VoteMatrix::from_rows(&[row]).unwrap()
    }

    #[test]
    fn participation_boundaries() {
        assert_eq!(filter_sparse_legislators(&participation(9, 100), 0.1).unwrap().1.len(), 1);
        assert_eq!(filter_sparse_legislators(&participation(10, 100), 0.1).unwrap().1.len(), 0);
        assert_eq!(filter_sparse_legislators(&participation(0, 100), 0.1).unwrap().1.len(), 1);
    }

    #[test]
    fn unanimous_both_directions() {
        assert_eq!(drop_unanimous(&one_bill(200, 0, 0)).unwrap().1.len(), 1);
        assert_eq!(drop_unanimous(&one_bill(0, 200, 0)).unwrap().1.len(), 1);
        assert_eq!(drop_unanimous(&one_bill(199, 1, 0)).unwrap().1.len(), 0);
    }

    #[test]
    fn clean_matrix_passes_through() {
        let data = VoteMatrix::from_rows(&[
            vec![Vote::Yea, Vote::Nay],
            vec![Vote::Nay, Vote::Yea],
            vec![Vote::Yea, Vote::Yea],
        ])
        .unwrap();
        let (out, report) = pipeline(&data, &PreprocessConfig::default()).unwrap();
        assert_eq!(out, data);
        assert!(report.excluded_ids.is_empty());
        assert!(report.dropped_bills_lopsided.is_empty());
        assert!(report.dropped_legislators_sparse.is_empty());
        assert!(report.dropped_bills_unanimous.is_empty());
        assert_eq!(report.input_dims, report.output_dims);
    }

    #[test]
    fn exclusion_happens_first() {
        // Without L0003 bill B0002 has no Nay left; with it, the bill is fine.
        let data = VoteMatrix::from_rows(&[
            vec![Vote::Yea, Vote::Yea],
            vec![Vote::Nay, Vote::Yea],
            vec![Vote::Yea, Vote::Nay],
        ])
        .unwrap();
        let config = PreprocessConfig {
            exclude_legislators: vec!["L0003".into()],
            ..PreprocessConfig::default()
        };
        let (out, report) = pipeline(&data, &config).unwrap();
        assert_eq!(report.excluded_ids, vec!["L0003".to_string()]);
        // A bill with no minority at all is already caught by the lopsided rule.
        assert_eq!(report.dropped_bills_lopsided, vec!["B0002".to_string()]);
        assert!(report.dropped_bills_unanimous.is_empty());
        assert_eq!(out.dims(), (2, 1));
    }

    #[test]
    fn empty_output_is_an_error() {
        let data = one_bill(10, 0, 0);
        assert!(matches!(pipeline(&data, &PreprocessConfig::default()), Err(Error::Data(_))));
    }
}
