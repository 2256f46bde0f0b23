//! Post-hoc transforms that pin down location, scale, sign and rotation of the
//! ideal points. Each one leaves every linear predictor `α_j + β_jᵀθ_i + γ_ij`
//! unchanged, so the likelihood is unaffected.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{LegislatorMeta, ModelState, Party};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AnchorSpec {
    /// Flip so that the party's mean ideal point is positive.
    PartyPositive(Party),
    /// Flip so that this legislator's ideal point is positive.
    LegislatorPositive(String),
    None,
}

impl FromStr for AnchorSpec {
    type Err = Error;

    /// Accepts `party:REP`, `legislator:<id>` or `none`.
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(AnchorSpec::None);
        }
        match s.split_once(':') {
            Some((kind, value)) if kind.eq_ignore_ascii_case("party") => {
                Ok(AnchorSpec::PartyPositive(value.parse()?))
            }
            Some((kind, value)) if kind.eq_ignore_ascii_case("legislator") && !value.is_empty() => {
                Ok(AnchorSpec::LegislatorPositive(value.to_string()))
            }
            _ => Err(Error::Format(format!(
                "anchor must be 'party:<DEM|REP|OTHER>', 'legislator:<id>' or 'none', got '{s}'"
            ))),
        }
    }
}

impl fmt::Display for AnchorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnchorSpec::PartyPositive(p) => write!(f, "party:{p}"),
            AnchorSpec::LegislatorPositive(id) => write!(f, "legislator:{id}"),
            AnchorSpec::None => f.write_str("none"),
        }
    }
}

fn theta_matrix(state: &ModelState) -> DMatrix<f64> {
    DMatrix::from_row_slice(state.n_legislators(), state.dim, &state.theta)
}

fn beta_matrix(state: &ModelState) -> DMatrix<f64> {
    DMatrix::from_row_slice(state.n_bills(), state.dim, &state.beta)
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Centers the ideal points and whitens them with the inverse symmetric square
/// root of their population covariance, so that the columns of Θ have mean 0
/// and `I⁻¹ΘᵀΘ = I`. β is mapped through the square root and α absorbs the
/// mean; Γ is untouched.
pub fn standardize(state: &ModelState) -> Result<ModelState> {
    state.validate()?;
    let n = state.n_legislators();
    let k = state.dim;
    if n < 2 {
        return Err(Error::Identification(
            "standardization needs at least two legislators".into(),
        ));
    }
    let theta = theta_matrix(state);
    let mean: DVector<f64> = theta.row_mean().transpose();
    let mut centered = theta;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let max_ev = eig.eigenvalues.max();
    let min_ev = eig.eigenvalues.min();
    if !min_ev.is_finite() || min_ev <= 1e-12 * max_ev.max(1.0) {
        return Err(Error::Identification(format!(
            "ideal-point covariance is singular (smallest eigenvalue {min_ev:e})"
        )));
    }
    let q = &eig.eigenvectors;
    let sqrt = q * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * q.transpose();
    let inv_sqrt = q * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt())) * q.transpose();

    let new_theta = centered * &inv_sqrt;
    let beta = beta_matrix(state);
    let shift = &beta * &mean;
    let new_beta = beta * &sqrt;
    let alpha = state.alpha.iter().zip(shift.iter()).map(|(a, s)| a + s).collect();
    debug_assert_eq!(new_theta.ncols(), k);
    Ok(ModelState {
        dim: k,
        theta: row_major(&new_theta),
        alpha,
        beta: row_major(&new_beta),
        gamma: state.gamma.clone(),
    })
}

/// Negates θ and β when the anchor's ideal point (or party mean) is negative.
/// One-dimensional models only.
pub fn sign_anchor(state: &ModelState, anchor: &AnchorSpec, legislators: &[LegislatorMeta]) -> Result<ModelState> {
    state.validate()?;
    if state.dim != 1 {
        return Err(Error::Contract(format!(
            "sign anchoring applies to one-dimensional models (dim = {})",
            state.dim
        )));
    }
    if legislators.len() != state.n_legislators() {
        return Err(Error::Contract("legislator metadata does not match the state".into()));
    }
    let value = match anchor {
        AnchorSpec::None => return Ok(state.clone()),
        AnchorSpec::PartyPositive(party) => {
            let members: Vec<f64> = legislators
                .iter()
                .zip(&state.theta)
                .filter(|(l, _)| l.party == Some(*party))
                .map(|(_, &t)| t)
                .collect();
            if members.is_empty() {
                return Err(Error::Identification(format!("no legislator belongs to party {party}")));
            }
            members.iter().sum::<f64>() / members.len() as f64
        }
        AnchorSpec::LegislatorPositive(id) => {
            let i = legislators
                .iter()
                .position(|l| &l.id == id)
                .ok_or_else(|| Error::Identification(format!("anchor legislator '{id}' not found")))?;
            state.theta[i]
        }
    };
    let mut out = state.clone();
    if value < 0.0 {
        out.theta.iter_mut().for_each(|t| *t = -*t);
        out.beta.iter_mut().for_each(|b| *b = -*b);
    }
    Ok(out)
}

/// Rotates the ideal-point space by the orthogonal `O` minimizing
/// `‖ΘOᵀ − Θ_ref‖_F`; θ_i → Oθ_i and β_j → Oβ_j. `reference` is `I×K` row-major.
/// Returns the aligned state and `O`.
pub fn procrustes_align(state: &ModelState, reference: &[f64]) -> Result<(ModelState, DMatrix<f64>)> {
    state.validate()?;
    let (n, k) = (state.n_legislators(), state.dim);
    if reference.len() != n * k {
        return Err(Error::Contract(format!(
            "reference has {} values, expected {n}×{k}",
            reference.len()
        )));
    }
    let theta = theta_matrix(state);
    let reference = DMatrix::from_row_slice(n, k, reference);
    let cross = theta.transpose() * &reference;
    let svd = cross.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let min_sv = svd.singular_values.min();
    let o = if !min_sv.is_finite() || min_sv <= 1e-12 * max_sv.max(1.0) {
        log::warn!("Procrustes cross-product is rank deficient; leaving the state unrotated");
        DMatrix::identity(k, k)
    } else {
        let u = svd.u.as_ref().expect("requested U");
        let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
        v_t.transpose() * u.transpose()
    };
    let ot = o.transpose();
    let new_theta = theta * &ot;
    let new_beta = beta_matrix(state) * &ot;
    let out = ModelState {
        dim: k,
        theta: row_major(&new_theta),
        alpha: state.alpha.clone(),
        beta: row_major(&new_beta),
        gamma: state.gamma.clone(),
    };
    Ok((out, o))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::linear_predictor;

    fn state_1d(theta: Vec<f64>, alpha: Vec<f64>, beta: Vec<f64>) -> ModelState {
        ModelState {
            dim: 1,
            theta,
            alpha,
            beta,
            gamma: Default::default(),
        }
    }

    fn predictors(s: &ModelState) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..s.n_legislators() {
            for j in 0..s.n_bills() {
                out.push(linear_predictor(s, i, j));
            }
        }
        out
    }

    #[test]
    fn parse_anchor() {
        assert_eq!("party:REP".parse::<AnchorSpec>().unwrap(), AnchorSpec::PartyPositive(Party::Rep));
        assert_eq!(
            "legislator:L7".parse::<AnchorSpec>().unwrap(),
            AnchorSpec::LegislatorPositive("L7".into())
        );
        assert_eq!("none".parse::<AnchorSpec>().unwrap(), AnchorSpec::None);
        assert!("party".parse::<AnchorSpec>().is_err());
        assert!("legislator:".parse::<AnchorSpec>().is_err());
        assert_eq!(AnchorSpec::PartyPositive(Party::Rep).to_string().parse::<AnchorSpec>().unwrap(), AnchorSpec::PartyPositive(Party::Rep));
    }

    #[test]
    fn standardize_leaves_unit_points_alone() {
        let s = state_1d(vec![-1.0, 1.0], vec![0.3], vec![2.0]);
        let t = standardize(&s).unwrap();
        for (a, b) in s.theta.iter().zip(&t.theta) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((t.beta[0] - 2.0).abs() < 1e-15);
        assert!((t.alpha[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn standardize_shifted_pair() {
        // {2, 4} has population variance 1, so only the location moves.
        let s = state_1d(vec![2.0, 4.0], vec![0.5], vec![1.5]);
        let t = standardize(&s).unwrap();
        assert!((t.theta[0] + 1.0).abs() < 1e-14 && (t.theta[1] - 1.0).abs() < 1e-14);
        assert!((t.beta[0] - 1.5).abs() < 1e-14);
        assert!((t.alpha[0] - (0.5 + 3.0 * 1.5)).abs() < 1e-14);
    }

    #[test]
    fn standardize_rescales_spread() {
        let s = state_1d(vec![0.0, 4.0], vec![0.0], vec![1.0]);
        let t = standardize(&s).unwrap();
        assert!((t.theta[0] + 1.0).abs() < 1e-14 && (t.theta[1] - 1.0).abs() < 1e-14);
        assert!((t.beta[0] - 2.0).abs() < 1e-14);
        assert!((t.alpha[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn standardize_rejects_degenerate_points() {
        let s = state_1d(vec![1.0, 1.0, 1.0], vec![0.0], vec![1.0]);
        assert!(matches!(standardize(&s), Err(Error::Identification(_))));
        let one = state_1d(vec![1.0], vec![0.0], vec![1.0]);
        assert!(matches!(standardize(&one), Err(Error::Identification(_))));
    }

    #[test]
    fn sign_anchor_flips_negative_party() {
        let legs = vec![
            LegislatorMeta::new("a").with_party(Party::Rep),
            LegislatorMeta::new("b").with_party(Party::Rep),
            LegislatorMeta::new("c").with_party(Party::Dem),
        ];
        let s = state_1d(vec![-0.6, -1.0, 1.6], vec![0.2], vec![0.9]);
        let t = sign_anchor(&s, &AnchorSpec::PartyPositive(Party::Rep), &legs).unwrap();
        assert_eq!(t.theta, vec![0.6, 1.0, -1.6]);
        assert_eq!(t.beta, vec![-0.9]);
        assert_eq!(t.alpha, s.alpha);
        let again = sign_anchor(&t, &AnchorSpec::PartyPositive(Party::Rep), &legs).unwrap();
        assert_eq!(again, t);
        assert_eq!(predictors(&s), predictors(&t));
    }

    #[test]
    fn sign_anchor_errors() {
        let legs = vec![LegislatorMeta::new("a"), LegislatorMeta::new("b")];
        let s = state_1d(vec![-1.0, 1.0], vec![0.0], vec![1.0]);
        assert!(sign_anchor(&s, &AnchorSpec::PartyPositive(Party::Rep), &legs).is_err());
        assert!(sign_anchor(&s, &AnchorSpec::LegislatorPositive("z".into()), &legs).is_err());
        let t = sign_anchor(&s, &AnchorSpec::LegislatorPositive("a".into()), &legs).unwrap();
        assert_eq!(t.theta, vec![1.0, -1.0]);
    }

    #[test]
    fn procrustes_self_alignment_is_identity() {
        let s = ModelState {
            dim: 2,
            theta: vec![1.0, 0.2, -0.5, 0.7, 0.3, -1.1],
            alpha: vec![0.1],
            beta: vec![0.4, -0.8],
            gamma: Default::default(),
        };
        let (t, o) = procrustes_align(&s, &s.theta.clone()).unwrap();
        assert!((o - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-12);
        for (a, b) in s.theta.iter().zip(&t.theta) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn procrustes_rank_deficient_falls_back() {
        let s = ModelState {
            dim: 2,
            theta: vec![1.0, 0.2, -0.5, 0.7],
            alpha: vec![0.0],
            beta: vec![1.0, 1.0],
            gamma: Default::default(),
        };
        let (t, o) = procrustes_align(&s, &[0.0; 4]).unwrap();
        assert_eq!(o, DMatrix::identity(2, 2));
        assert_eq!(t, s);
    }
}
