//! Normal systematic-error distribution fitted to negative-control likelihoods.
//!
//! Each negative control has true log effect zero, so its estimand equals its
//! bias `τ ~ N(mean, sd²)`. The fit maximizes the marginal likelihood
//! `Σ ln ∫ L_i(τ) φ(τ | mean, sd) dτ` over `(mean, sd)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{mle_and_se, LikelihoodProfile, ProfileForm};
use crate::optim::nelder_mead;
use crate::stats::{log_sum_exp, norm_ln_pdf, GaussHermite};

/// Offset inside the log-scale parametrization `ln(sd + ε)`.
const SD_OFFSET: f64 = 1e-6;
const OBJECTIVE_TOL: f64 = 1e-10;
const MAX_EVALUATIONS: usize = 4000;

/// Fitted bias distribution on the log effect scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub mean: f64,
    pub sd: f64,
    pub n_controls: usize,
    pub converged: bool,
    /// Controls dropped because their likelihood was unusable.
    #[serde(skip)]
    pub n_dropped: usize,
}

impl ErrorModel {
    /// Point mass at zero: the uncalibrated assumption of no systematic error.
    pub fn null() -> Self {
        ErrorModel::fixed(0.0, 0.0)
    }

    /// A model given directly rather than fitted.
    pub fn fixed(mean: f64, sd: f64) -> Self {
        ErrorModel {
            mean,
            sd,
            n_controls: 0,
            converged: true,
            n_dropped: 0,
        }
    }

    pub fn is_null(&self) -> bool {
        self.mean == 0.0 && self.sd == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() || !self.sd.is_finite() || self.sd < 0.0 {
            return Err(Error::domain(format!(
                "error model needs finite mean and nonnegative sd, got ({}, {})",
                self.mean, self.sd
            )));
        }
        Ok(())
    }
}

/// A usable profile with what the quadrature needs precomputed.
enum Prepared<'a> {
    Normal { estimate: f64, se: f64 },
    Grid { profile: &'a LikelihoodProfile, mode: f64, se: f64 },
}

impl<'a> Prepared<'a> {
    fn new(profile: &'a LikelihoodProfile) -> Option<Self> {
        if !profile.is_usable() {
            return None;
        }
        let (mode, se) = mle_and_se(profile).ok()?;
        Some(match profile.form {
            ProfileForm::NormalApprox { .. } => Prepared::Normal { estimate: mode, se },
            ProfileForm::Grid(_) => Prepared::Grid { profile, mode, se },
        })
    }

    fn estimate(&self) -> f64 {
        match self {
            Prepared::Normal { estimate, .. } => *estimate,
            Prepared::Grid { mode, .. } => *mode,
        }
    }

    /// `ln ∫ L(τ) φ(τ | mean, sd) dτ`.
    fn contribution(&self, mean: f64, sd: f64) -> f64 {
        match *self {
            Prepared::Normal { estimate, se } => {
                let total = if sd == 0.0 { se } else { (sd * sd + se * se).sqrt() };
                norm_ln_pdf(estimate, mean, total)
            }
            Prepared::Grid { profile, mode, se } => {
                if sd == 0.0 {
                    return profile.log_likelihood(mean);
                }
                // Hermite nodes centred on the normal approximation to the
                // integrand, so a narrow likelihood is still resolved.
                let prec = 1.0 / (se * se) + 1.0 / (sd * sd);
                let centre = (mode / (se * se) + mean / (sd * sd)) / prec;
                let scale = (2.0 / prec).sqrt();
                let gh = GaussHermite::order64();
                let terms: Vec<f64> = gh
                    .nodes
                    .iter()
                    .zip(&gh.weights)
                    .map(|(&x, &w)| {
                        let tau = centre + scale * x;
                        w.ln() + x * x + profile.log_likelihood(tau) + norm_ln_pdf(tau, mean, sd)
                    })
                    .collect();
                scale.ln() + log_sum_exp(&terms)
            }
        }
    }
}

fn prepare(profiles: &[LikelihoodProfile]) -> Vec<Prepared<'_>> {
    profiles.iter().filter_map(Prepared::new).collect()
}

fn total_log_likelihood(prepared: &[Prepared<'_>], mean: f64, sd: f64) -> f64 {
    prepared.iter().map(|p| p.contribution(mean, sd)).sum()
}

/// Marginal log-likelihood of `(mean, sd)` over the usable profiles.
pub fn marginal_log_likelihood(mean: f64, sd: f64, profiles: &[LikelihoodProfile]) -> Result<f64> {
    if !mean.is_finite() || !sd.is_finite() || sd < 0.0 {
        return Err(Error::domain(format!("invalid (mean, sd) = ({mean}, {sd})")));
    }
    Ok(total_log_likelihood(&prepare(profiles), mean, sd))
}

fn sd_from_log(y: f64) -> f64 {
    (y.exp() - SD_OFFSET).max(0.0)
}

/// Maximum marginal-likelihood estimate of the systematic-error distribution.
pub fn fit_error_model(profiles: &[LikelihoodProfile]) -> Result<ErrorModel> {
    if profiles.len() < 2 {
        return Err(Error::InsufficientControls {
            needed: 2,
            found: profiles.len(),
        });
    }
    let prepared = prepare(profiles);
    let n_dropped = profiles.len() - prepared.len();
    if prepared.len() < 2 {
        return Err(Error::Fit(format!(
            "only {} of {} negative-control profiles are usable",
            prepared.len(),
            profiles.len()
        )));
    }

    let objective = |x: [f64; 2]| -total_log_likelihood(&prepared, x[0], sd_from_log(x[1]));

    let n = prepared.len() as f64;
    let sample_mean = prepared.iter().map(Prepared::estimate).sum::<f64>() / n;
    let sample_sd = (prepared
        .iter()
        .map(|p| (p.estimate() - sample_mean).powi(2))
        .sum::<f64>()
        / (n - 1.0))
        .sqrt();
    let starts = [(0.0, 0.1), (0.0, 0.5), (sample_mean, sample_sd)];

    let mut best: Option<crate::optim::Minimum> = None;
    for (m0, s0) in starts {
        let start = [m0, (s0 + SD_OFFSET).ln()];
        let found = nelder_mead(objective, start, [0.1, 0.5], OBJECTIVE_TOL, MAX_EVALUATIONS);
        if best.is_none_or(|b| found.value < b.value) {
            best = Some(found);
        }
    }
    let best = best.expect("at least one start");
    if !best.value.is_finite() {
        return Err(Error::Fit("marginal likelihood is not finite at any start".into()));
    }
    let mean = best.point[0];
    let mut sd = sd_from_log(best.point[1]);
    if objective([mean, SD_OFFSET.ln()]) <= best.value {
        sd = 0.0;
    }
    Ok(ErrorModel {
        mean,
        sd,
        n_controls: prepared.len(),
        converged: best.converged,
        n_dropped,
    })
}

/// One fit per profile, each excluding that profile; order follows the input.
pub fn leave_one_out_models(profiles: &[LikelihoodProfile]) -> Result<Vec<Result<ErrorModel>>> {
    if profiles.len() < 3 {
        return Err(Error::InsufficientControls {
            needed: 3,
            found: profiles.len(),
        });
    }
    Ok((0..profiles.len())
        .into_par_iter()
        .map(|i| {
            let others: Vec<LikelihoodProfile> = profiles
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, p)| p.clone())
                .collect();
            fit_error_model(&others)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{profile_from_counts, CountData, GridSpec};
    use crate::stats::norm_ln_pdf;
    use approx::assert_abs_diff_eq;

    fn normals(pairs: &[(f64, f64)]) -> Vec<LikelihoodProfile> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(b, s))| LikelihoodProfile::normal(format!("nc{i}"), b, s).unwrap())
            .collect()
    }

    #[test]
    fn zero_spread_gives_zero_model() {
        let profiles = normals(&vec![(0.0, 0.01); 50]);
        let m = fit_error_model(&profiles).unwrap();
        assert!(m.mean.abs() < 1e-3, "{m:?}");
        assert!((0.0..=0.01).contains(&m.sd), "{m:?}");
        assert_eq!(m.n_controls, 50);
    }

    #[test]
    fn symmetric_pair_has_zero_mean() {
        let m = fit_error_model(&normals(&[(0.5, 0.1), (-0.5, 0.1)])).unwrap();
        assert!(m.mean.abs() < 1e-5, "{m:?}");
        // closed form: sd² + s² = a²
        assert!((m.sd - (0.25f64 - 0.01).sqrt()).abs() < 1e-3, "{m:?}");
    }

    #[test]
    fn too_few_controls() {
        let err = fit_error_model(&normals(&[(0.1, 0.1)])).unwrap_err();
        assert_eq!(err, Error::InsufficientControls { needed: 2, found: 1 });
        let edge = LikelihoodProfile::grid("g", vec![0.0, 1.0, 2.0], vec![3.0, 2.0, 1.0]).unwrap();
        let err = fit_error_model(&[edge.clone(), edge]).unwrap_err();
        assert!(matches!(err, Error::Fit(_)));
    }

    #[test]
    fn normal_contribution_is_convolution() {
        let p = normals(&[(0.3, 0.2)]);
        let ll = marginal_log_likelihood(0.1, 0.0, &p).unwrap();
        assert_abs_diff_eq!(ll, norm_ln_pdf(0.3, 0.1, 0.2), epsilon = 1e-14);
        let ll = marginal_log_likelihood(0.1, 0.4, &p).unwrap();
        assert_abs_diff_eq!(ll, norm_ln_pdf(0.3, 0.1, (0.16f64 + 0.04).sqrt()), epsilon = 1e-14);
        assert!(marginal_log_likelihood(0.0, -1.0, &p).is_err());
    }

    /// Trapezoid rule over the profile's own grid.
    fn trapezoid_oracle(profile: &LikelihoodProfile, mean: f64, sd: f64) -> f64 {
        let ProfileForm::Grid(g) = &profile.form else { unreachable!() };
        let xs = g.points();
        let ys: Vec<f64> = xs
            .iter()
            .zip(g.log_likelihoods())
            .map(|(&x, &ll)| (ll + norm_ln_pdf(x, mean, sd)).exp())
            .collect();
        let mut acc = 0.0;
        for i in 1..xs.len() {
            acc += 0.5 * (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]);
        }
        acc.ln()
    }

    #[test]
    fn grid_quadrature_matches_trapezoid() {
        let grid = GridSpec::default();
        let cases = [
            (CountData::Poisson { observed: 10, expected: 5.0 }, 0.1, 0.3),
            (CountData::Poisson { observed: 100, expected: 80.0 }, 0.2, 0.2),
            (CountData::Poisson { observed: 3, expected: 5.0 }, 0.0, 0.05),
            (
                CountData::Binomial {
                    exposed: 8,
                    total: 40,
                    null_proportion: 0.115,
                },
                0.2,
                0.4,
            ),
        ];
        for (data, mean, sd) in cases {
            let prof = profile_from_counts("g", &data, &grid).unwrap();
            let got = marginal_log_likelihood(mean, sd, std::slice::from_ref(&prof)).unwrap();
            let want = trapezoid_oracle(&prof, mean, sd);
            assert!((got - want).abs() < 1e-4, "{data:?}: {got} vs {want}");
        }
    }

    #[test]
    fn grid_zero_sd_evaluates_likelihood() {
        let data = CountData::Poisson {
            observed: 10,
            expected: 5.0,
        };
        let prof = profile_from_counts("g", &data, &GridSpec::default()).unwrap();
        let got = marginal_log_likelihood(0.5, 0.0, std::slice::from_ref(&prof)).unwrap();
        assert!((got - data.log_likelihood(0.5)).abs() < 1e-6);
    }

    #[test]
    fn leave_one_out_bookkeeping() {
        let profiles = normals(&[(0.1, 0.1), (0.1, 0.1), (0.1, 0.1)]);
        let fits = leave_one_out_models(&profiles).unwrap();
        assert_eq!(fits.len(), 3);
        let first = fits[0].clone().unwrap();
        for f in &fits {
            let f = f.clone().unwrap();
            assert_eq!(f, first);
            assert_eq!(f.n_controls, 2);
        }
        assert!(leave_one_out_models(&profiles[..2]).is_err());
    }

    #[test]
    fn removing_outlier_shrinks_spread() {
        let mut pairs: Vec<(f64, f64)> = (0..20).map(|i| (0.05 * ((i % 5) as f64 - 2.0), 0.1)).collect();
        pairs.push((3.0, 0.1));
        let profiles = normals(&pairs);
        let full = fit_error_model(&profiles).unwrap();
        let loo = leave_one_out_models(&profiles).unwrap();
        let without_outlier = loo.last().unwrap().clone().unwrap();
        assert!(without_outlier.sd < full.sd, "{without_outlier:?} vs {full:?}");
        assert_eq!(without_outlier.n_controls, 20);
    }

    #[test]
    fn mixed_forms_fit() {
        let grid = GridSpec::default();
        let mut profiles = normals(&[(0.2, 0.1), (0.4, 0.15), (0.0, 0.2)]);
        for (i, o) in [12u64, 7, 20].into_iter().enumerate() {
            let d = CountData::Poisson {
                observed: o,
                expected: 10.0,
            };
            profiles.push(profile_from_counts(format!("g{i}"), &d, &grid).unwrap());
        }
        let m = fit_error_model(&profiles).unwrap();
        assert!(m.converged);
        assert!(m.sd >= 0.0 && m.mean.is_finite());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn controls() -> impl Strategy<Value = Vec<(f64, f64)>> {
            prop::collection::vec((-1.0f64..1.0, 0.05f64..0.5), 5..30)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn marginal_likelihood_ignores_order(pairs in controls(), mean in -0.5f64..0.5, sd in 0f64..0.5) {
                let forward = marginal_log_likelihood(mean, sd, &normals(&pairs)).unwrap();
                let mut reversed = pairs.clone();
                reversed.reverse();
                reversed.rotate_left(pairs.len() / 3);
                let shuffled = marginal_log_likelihood(mean, sd, &normals(&reversed)).unwrap();
                prop_assert!((forward - shuffled).abs() <= 1e-9 * forward.abs().max(1.0));
            }

            #[test]
            fn fit_is_translation_equivariant(pairs in controls(), c in -1.0f64..1.0) {
                let base = fit_error_model(&normals(&pairs)).unwrap();
                let shifted: Vec<_> = pairs.iter().map(|&(b, s)| (b + c, s)).collect();
                let moved = fit_error_model(&normals(&shifted)).unwrap();
                prop_assert!((moved.mean - base.mean - c).abs() <= 0.005, "{:?} {:?}", base, moved);
                prop_assert!((moved.sd - base.sd).abs() <= 0.005, "{:?} {:?}", base, moved);
            }

            #[test]
            fn homogeneous_controls_fit_zero_spread(
                centre in -1.0f64..1.0,
                s in 0.05f64..0.5,
                z in prop::collection::vec(-0.5f64..0.5, 5..30),
            ) {
                let pairs: Vec<_> = z.iter().map(|&z| (centre + s * z, s)).collect();
                let m = fit_error_model(&normals(&pairs)).unwrap();
                prop_assert!((0.0..=0.01).contains(&m.sd), "{:?}", m);
            }
        }
    }
}
