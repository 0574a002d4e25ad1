//! Per-outcome likelihoods of the log effect size and the closed-form
//! log-likelihood ratios used by MaxSPRT.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{Error, Result};
use crate::stats::norm_ln_pdf;

/// Opaque outcome identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutcomeId(pub String);

impl OutcomeId {
    pub fn new(id: impl Into<String>) -> Self {
        OutcomeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for OutcomeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<String> for OutcomeId {
    fn from(s: String) -> Self {
        OutcomeId(s)
    }
}

impl From<&str> for OutcomeId {
    fn from(s: &str) -> Self {
        OutcomeId(s.to_string())
    }
}

/// Cumulative counts for one outcome under one of the two surveillance models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CountData {
    /// Observed events against the expected count under the null.
    Poisson { observed: u64, expected: f64 },
    /// Exposed cases among all cases, with the null exposed proportion.
    Binomial {
        exposed: u64,
        total: u64,
        null_proportion: f64,
    },
}

impl CountData {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CountData::Poisson { expected, .. } => {
                if !(expected.is_finite() && expected > 0.0) {
                    return Err(Error::domain(format!("expected count must be positive, got {expected}")));
                }
            }
            CountData::Binomial {
                exposed,
                total,
                null_proportion,
            } => {
                if exposed > total {
                    return Err(Error::domain(format!("exposed {exposed} exceeds total {total}")));
                }
                check_proportion(null_proportion)?;
            }
        }
        Ok(())
    }

    /// Closed-form one-sided LLR for these counts.
    pub fn llr(&self) -> Result<f64> {
        match *self {
            CountData::Poisson { observed, expected } => poisson_llr(observed as f64, expected),
            CountData::Binomial {
                exposed,
                total,
                null_proportion,
            } => {
                if total == 0 {
                    return Ok(0.0);
                }
                binomial_llr(exposed, total, null_proportion)
            }
        }
    }

    /// Whether the likelihood in the log effect size has a finite maximum.
    pub fn is_informative(&self) -> bool {
        match *self {
            CountData::Poisson { observed, .. } => observed > 0,
            CountData::Binomial { exposed, total, .. } => exposed > 0 && exposed < total,
        }
    }

    /// Analytic MLE of the log effect and its asymptotic standard error.
    pub fn analytic_mle(&self) -> Option<(f64, f64)> {
        if !self.is_informative() {
            return None;
        }
        Some(match *self {
            CountData::Poisson { observed, expected } => {
                let o = observed as f64;
                ((o / expected).ln(), 1.0 / o.sqrt())
            }
            CountData::Binomial {
                exposed,
                total,
                null_proportion: p,
            } => {
                let x = exposed as f64;
                let rest = (total - exposed) as f64;
                let beta = (x / rest).ln() + ((1.0 - p) / p).ln();
                (beta, (1.0 / x + 1.0 / rest).sqrt())
            }
        })
    }

    /// Log-likelihood of the log effect size `beta`, including normalizing constants.
    pub fn log_likelihood(&self, beta: f64) -> f64 {
        match *self {
            CountData::Poisson { observed, expected } => {
                let o = observed as f64;
                o * (expected.ln() + beta) - expected * beta.exp() - ln_factorial(observed)
            }
            CountData::Binomial {
                exposed,
                total,
                null_proportion: p,
            } => {
                let (ln_q, ln_1mq) = tilted_log_proportions(p, beta);
                let x = exposed as f64;
                let rest = (total - exposed) as f64;
                let mut ll = ln_binomial(total, exposed);
                if exposed > 0 {
                    ll += x * ln_q;
                }
                if total > exposed {
                    ll += rest * ln_1mq;
                }
                ll
            }
        }
    }
}

/// `p̃` with odds `exp(beta)·p/(1-p)`.
pub fn tilted_proportion(p: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        return p;
    }
    let r = beta.exp();
    p * r / (1.0 + p * (r - 1.0))
}

fn tilted_log_proportions(p: f64, beta: f64) -> (f64, f64) {
    let denom = (p * beta.exp_m1()).ln_1p();
    (p.ln() + beta - denom, (-p).ln_1p() - denom)
}

fn check_proportion(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("proportion must lie in (0, 1), got {p}")))
    }
}

/// Poisson MaxSPRT log-likelihood ratio with the rate MLE set to `observed`.
pub fn poisson_llr(observed: f64, expected: f64) -> Result<f64> {
    if !observed.is_finite() || observed < 0.0 {
        return Err(Error::domain(format!("observed count must be finite and nonnegative, got {observed}")));
    }
    if !expected.is_finite() || expected <= 0.0 {
        return Err(Error::domain(format!("expected count must be finite and positive, got {expected}")));
    }
    Ok(poisson_llr_unchecked(observed, expected))
}

#[inline]
pub(crate) fn poisson_llr_unchecked(observed: f64, expected: f64) -> f64 {
    if observed <= expected {
        0.0
    } else {
        observed * (observed / expected).ln() + expected - observed
    }
}

/// Binomial MaxSPRT log-likelihood ratio with the exposed-proportion MLE `exposed/total`.
pub fn binomial_llr(exposed: u64, total: u64, p: f64) -> Result<f64> {
    check_proportion(p)?;
    if total == 0 {
        return Err(Error::domain("total must be at least 1"));
    }
    if exposed > total {
        return Err(Error::domain(format!("exposed {exposed} exceeds total {total}")));
    }
    Ok(binomial_llr_unchecked(exposed as f64, total as f64, p))
}

#[inline]
pub(crate) fn binomial_llr_unchecked(exposed: f64, total: f64, p: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let q = exposed / total;
    if q <= p {
        return 0.0;
    }
    let rest = total - exposed;
    let mut llr = exposed * (q / p).ln();
    if rest > 0.0 {
        llr += rest * ((1.0 - q) / (1.0 - p)).ln();
    }
    llr
}

/// Range and resolution of the log-effect grid used for profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lower: -4.0,
            upper: 4.0,
            points: 1000,
        }
    }
}

impl GridSpec {
    pub fn step(&self) -> f64 {
        (self.upper - self.lower) / (self.points - 1) as f64
    }

    fn validate(&self) -> Result<()> {
        if self.points < 3 || !self.lower.is_finite() || !self.upper.is_finite() || self.lower >= self.upper {
            return Err(Error::domain(format!("invalid grid {self:?}")));
        }
        Ok(())
    }

    /// Extend by whole steps so that `[lo, hi]` is covered.
    fn covering(&self, lo: f64, hi: f64) -> GridSpec {
        let h = self.step();
        let below = if lo < self.lower { ((self.lower - lo) / h).ceil() as usize } else { 0 };
        let above = if hi > self.upper { ((hi - self.upper) / h).ceil() as usize } else { 0 };
        GridSpec {
            lower: self.lower - below as f64 * h,
            upper: self.upper + above as f64 * h,
            points: self.points + below + above,
        }
    }

    fn values(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points).map(|i| self.lower + i as f64 * h).collect()
    }
}

/// Tabulated log-likelihood over ascending log effect sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLikelihood {
    points: Vec<f64>,
    log_likelihoods: Vec<f64>,
}

impl GridLikelihood {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn log_likelihoods(&self) -> &[f64] {
        &self.log_likelihoods
    }

    /// Index of the maximum; ties resolve to the smallest log effect.
    fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.log_likelihoods.iter().enumerate() {
            if v > self.log_likelihoods[best] {
                best = i;
            }
        }
        best
    }

    /// Quadratic interpolation through the three nearest points; `-inf` off the grid.
    pub fn interpolate(&self, beta: f64) -> f64 {
        let xs = &self.points;
        let n = xs.len();
        if !(beta >= xs[0] && beta <= xs[n - 1]) {
            return f64::NEG_INFINITY;
        }
        // centre the stencil on the nearest grid point
        let k = xs.partition_point(|&x| x <= beta);
        let nearest = if k >= n || beta - xs[k - 1] <= xs[k] - beta { k - 1 } else { k };
        let j = nearest.clamp(1, n - 2);
        let (x0, x1, x2) = (xs[j - 1], xs[j], xs[j + 1]);
        let (f0, f1, f2) = (
            self.log_likelihoods[j - 1],
            self.log_likelihoods[j],
            self.log_likelihoods[j + 1],
        );
        f0 * (beta - x1) * (beta - x2) / ((x0 - x1) * (x0 - x2))
            + f1 * (beta - x0) * (beta - x2) / ((x1 - x0) * (x1 - x2))
            + f2 * (beta - x0) * (beta - x1) / ((x2 - x0) * (x2 - x1))
    }
}

/// Shape of a likelihood profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProfileForm {
    NormalApprox {
        point_estimate: f64,
        standard_error: f64,
    },
    Grid(GridLikelihood),
}

/// Likelihood of the log effect size for one outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodProfile {
    pub outcome_id: OutcomeId,
    pub form: ProfileForm,
}

impl LikelihoodProfile {
    pub fn normal(outcome_id: impl Into<OutcomeId>, point_estimate: f64, standard_error: f64) -> Result<Self> {
        if !point_estimate.is_finite() {
            return Err(Error::domain(format!("point estimate must be finite, got {point_estimate}")));
        }
        if !(standard_error.is_finite() && standard_error > 0.0) {
            return Err(Error::domain(format!("standard error must be positive, got {standard_error}")));
        }
        Ok(LikelihoodProfile {
            outcome_id: outcome_id.into(),
            form: ProfileForm::NormalApprox {
                point_estimate,
                standard_error,
            },
        })
    }

    pub fn grid(outcome_id: impl Into<OutcomeId>, points: Vec<f64>, log_likelihoods: Vec<f64>) -> Result<Self> {
        if points.len() != log_likelihoods.len() {
            return Err(Error::domain("grid points and log-likelihoods differ in length"));
        }
        if points.len() < 3 {
            return Err(Error::domain("grid needs at least 3 points"));
        }
        if points.iter().any(|x| !x.is_finite()) || points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("grid points must be finite and strictly ascending"));
        }
        if log_likelihoods.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("grid log-likelihoods must be finite"));
        }
        Ok(LikelihoodProfile {
            outcome_id: outcome_id.into(),
            form: ProfileForm::Grid(GridLikelihood {
                points,
                log_likelihoods,
            }),
        })
    }

    /// A profile is usable when its maximum lies strictly inside its support.
    pub fn is_usable(&self) -> bool {
        match &self.form {
            ProfileForm::NormalApprox { .. } => true,
            ProfileForm::Grid(g) => {
                let i = g.argmax();
                i > 0 && i + 1 < g.points.len()
            }
        }
    }

    /// Log-likelihood at `beta`. The normal form is the density of the estimate.
    pub fn log_likelihood(&self, beta: f64) -> f64 {
        match &self.form {
            ProfileForm::NormalApprox {
                point_estimate,
                standard_error,
            } => norm_ln_pdf(*point_estimate, beta, *standard_error),
            ProfileForm::Grid(g) => g.interpolate(beta),
        }
    }
}

/// Tabulates the count likelihood over `grid`, widened by whole steps when the
/// analytic MLE would otherwise sit within six standard errors of an edge.
pub fn profile_from_counts(
    outcome_id: impl Into<OutcomeId>,
    data: &CountData,
    grid: &GridSpec,
) -> Result<LikelihoodProfile> {
    let outcome_id = outcome_id.into();
    data.validate()?;
    grid.validate()?;
    let (mle, se) = data
        .analytic_mle()
        .ok_or_else(|| Error::UninformativeProfile(outcome_id.0.clone()))?;
    let grid = grid.covering(mle - 6.0 * se, mle + 6.0 * se);
    let points = grid.values();
    let lls = points.iter().map(|&b| data.log_likelihood(b)).collect();
    LikelihoodProfile::grid(outcome_id, points, lls)
}

/// Normal approximation built from the analytic MLE and its standard error.
pub fn normal_profile_from_counts(outcome_id: impl Into<OutcomeId>, data: &CountData) -> Result<LikelihoodProfile> {
    let outcome_id = outcome_id.into();
    data.validate()?;
    let (mle, se) = data
        .analytic_mle()
        .ok_or_else(|| Error::UninformativeProfile(outcome_id.0.clone()))?;
    LikelihoodProfile::normal(outcome_id, mle, se)
}

/// Point estimate and standard error of a profile.
///
/// Grid profiles report the grid argmax and `1/sqrt(-f'')` from the quadratic
/// through the maximum and its two neighbours.
pub fn mle_and_se(profile: &LikelihoodProfile) -> Result<(f64, f64)> {
    match &profile.form {
        ProfileForm::NormalApprox {
            point_estimate,
            standard_error,
        } => Ok((*point_estimate, *standard_error)),
        ProfileForm::Grid(g) => {
            let i = g.argmax();
            if i == 0 || i + 1 == g.points.len() {
                return Err(Error::UninformativeProfile(profile.outcome_id.0.clone()));
            }
            let (x0, x1, x2) = (g.points[i - 1], g.points[i], g.points[i + 1]);
            let (f0, f1, f2) = (g.log_likelihoods[i - 1], g.log_likelihoods[i], g.log_likelihoods[i + 1]);
            let second = 2.0
                * (f0 / ((x0 - x1) * (x0 - x2)) + f1 / ((x1 - x0) * (x1 - x2)) + f2 / ((x2 - x0) * (x2 - x1)));
            if !second.is_finite() || second >= 0.0 {
                return Err(Error::Curvature(profile.outcome_id.0.clone()));
            }
            Ok((x1, 1.0 / (-second).sqrt()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{Binomial, Discrete, Poisson};

    fn pois(o: u64, e: f64) -> CountData {
        CountData::Poisson {
            observed: o,
            expected: e,
        }
    }

    #[test]
    fn poisson_llr_examples() {
        assert_eq!(poisson_llr(5.0, 5.0).unwrap(), 0.0);
        assert_eq!(poisson_llr(3.0, 5.0).unwrap(), 0.0);
        // oracle: ratio of pmfs at the MLE rate and at the null rate
        let num = Poisson::new(10.0).unwrap().ln_pmf(10);
        let den = Poisson::new(5.0).unwrap().ln_pmf(10);
        let oracle = num - den;
        assert_abs_diff_eq!(oracle, 1.931_471_805_599_453, epsilon = 1e-12);
        assert_abs_diff_eq!(poisson_llr(10.0, 5.0).unwrap(), oracle, epsilon = 1e-12);
    }

    #[test]
    fn poisson_llr_rejects_bad_input() {
        assert!(poisson_llr(-1.0, 5.0).is_err());
        assert!(poisson_llr(f64::NAN, 5.0).is_err());
        assert!(poisson_llr(1.0, 0.0).is_err());
        assert!(poisson_llr(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn binomial_llr_examples() {
        assert_eq!(binomial_llr(5, 10, 0.5).unwrap(), 0.0);
        assert_eq!(binomial_llr(2, 10, 0.5).unwrap(), 0.0);
        let num = Binomial::new(0.8, 10).unwrap().ln_pmf(8);
        let den = Binomial::new(0.5, 10).unwrap().ln_pmf(8);
        let oracle = num - den;
        assert_abs_diff_eq!(oracle, 1.927_447_570_217_574, epsilon = 1e-12);
        assert_abs_diff_eq!(binomial_llr(8, 10, 0.5).unwrap(), oracle, epsilon = 1e-12);
        // all exposed: (1-q) term vanishes
        assert_abs_diff_eq!(binomial_llr(10, 10, 0.5).unwrap(), 10.0 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn binomial_llr_rejects_bad_proportion() {
        assert!(binomial_llr(1, 2, 0.0).is_err());
        assert!(binomial_llr(1, 2, 1.0).is_err());
        assert!(binomial_llr(3, 2, 0.5).is_err());
        assert!(binomial_llr(0, 0, 0.5).is_err());
    }

    #[test]
    fn grid_profile_argmax_matches_analytic() {
        let grid = GridSpec::default();
        let prof = profile_from_counts("a", &pois(10, 5.0), &grid).unwrap();
        let (b, s) = mle_and_se(&prof).unwrap();
        assert!((b - 2f64.ln()).abs() <= grid.step());
        assert!((s - 1.0 / 10f64.sqrt()).abs() < 1e-3);

        let bin = CountData::Binomial {
            exposed: 8,
            total: 10,
            null_proportion: 0.5,
        };
        let prof = profile_from_counts("b", &bin, &grid).unwrap();
        let (b, _) = mle_and_se(&prof).unwrap();
        assert!((b - 4f64.ln()).abs() <= grid.step());
    }

    #[test]
    fn zero_events_are_uninformative() {
        let err = profile_from_counts("z", &pois(0, 5.0), &GridSpec::default()).unwrap_err();
        assert_eq!(err, Error::UninformativeProfile("z".into()));
        let all_exposed = CountData::Binomial {
            exposed: 4,
            total: 4,
            null_proportion: 0.3,
        };
        assert!(normal_profile_from_counts("x", &all_exposed).is_err());
    }

    #[test]
    fn fisher_information_standard_errors() {
        let prof = profile_from_counts("a", &pois(100, 100.0), &GridSpec::default()).unwrap();
        let (b, s) = mle_and_se(&prof).unwrap();
        assert!(b.abs() <= GridSpec::default().step());
        assert!((s - 0.1).abs() < 1e-3);
    }

    #[test]
    fn normal_profile_passes_through() {
        let p = LikelihoodProfile::normal("n", 0.4, 0.1).unwrap();
        assert_eq!(mle_and_se(&p).unwrap(), (0.4, 0.1));
        assert!(LikelihoodProfile::normal("n", 0.4, 0.0).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(LikelihoodProfile::grid("g", vec![0.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(LikelihoodProfile::grid("g", vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 0.0]).is_err());
        assert!(LikelihoodProfile::grid("g", vec![0.0, 1.0, 2.0], vec![0.0, f64::NAN, 0.0]).is_err());
        let edge = LikelihoodProfile::grid("g", vec![0.0, 1.0, 2.0], vec![3.0, 2.0, 1.0]).unwrap();
        assert!(!edge.is_usable());
        assert!(matches!(mle_and_se(&edge), Err(Error::UninformativeProfile(_))));
        let flat = LikelihoodProfile::grid("g", vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        // tie goes to the smaller effect; curvature there is still negative
        assert_eq!(mle_and_se(&flat).unwrap().0, 1.0);
        let kink = LikelihoodProfile::grid("g", vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 2.0, 0.0]).unwrap();
        assert!(mle_and_se(&kink).is_ok());
        let convex = LikelihoodProfile::grid("c", vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 5.0]).unwrap();
        assert!(mle_and_se(&convex).is_err());
    }

    #[test]
    fn grid_widens_for_extreme_estimates() {
        let prof = profile_from_counts("w", &pois(50, 0.5), &GridSpec::default()).unwrap();
        let (b, _) = mle_and_se(&prof).unwrap();
        assert!((b - 100f64.ln()).abs() <= GridSpec::default().step() + 1e-12);
    }

    #[test]
    fn interpolation_is_exact_for_quadratics() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 * 0.3 - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -2.0 * x * x + x + 0.5).collect();
        let p = LikelihoodProfile::grid("q", xs, ys).unwrap();
        for &b in &[-1.0, -0.77, 0.0, 0.1234, 1.9, 2.0] {
            assert_abs_diff_eq!(p.log_likelihood(b), -2.0 * b * b + b + 0.5, epsilon = 1e-12);
        }
        assert_eq!(p.log_likelihood(2.01), f64::NEG_INFINITY);
    }

    #[test]
    fn tilt_gives_requested_odds() {
        assert_abs_diff_eq!(tilted_proportion(0.5, 3f64.ln()), 0.75, epsilon = 1e-15);
        assert_eq!(tilted_proportion(0.3, 0.0), 0.3);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn grid_llr(profile: &LikelihoodProfile) -> f64 {
            let ProfileForm::Grid(g) = &profile.form else { unreachable!() };
            let i = g.argmax();
            if g.points()[i] <= 0.0 {
                return 0.0;
            }
            g.log_likelihoods()[i] - g.interpolate(0.0)
        }

        proptest! {
            #[test]
            fn poisson_llr_zero_exactly_at_or_below_null(o in 0u64..200, e in 0.1f64..100.0) {
                let llr = poisson_llr(o as f64, e).unwrap();
                prop_assert!(llr >= 0.0);
                prop_assert_eq!(llr == 0.0, o as f64 <= e);
            }

            #[test]
            fn binomial_llr_zero_exactly_at_or_below_null(n in 1u64..200, frac in 0f64..=1.0, p in 0.01f64..0.99) {
                let x = ((n as f64) * frac).round() as u64;
                let llr = binomial_llr(x, n, p).unwrap();
                prop_assert!(llr >= 0.0);
                prop_assert_eq!(llr == 0.0, (x as f64) / (n as f64) <= p);
            }

            #[test]
            fn llrs_monotone_in_count(o in 0u64..200, e in 0.1f64..100.0, n in 1u64..200, p in 0.01f64..0.99) {
                prop_assert!(poisson_llr(o as f64 + 1.0, e).unwrap() >= poisson_llr(o as f64, e).unwrap());
                let x = o.min(n - 1);
                prop_assert!(binomial_llr(x + 1, n, p).unwrap() >= binomial_llr(x, n, p).unwrap());
            }

            #[test]
            fn grid_mle_within_one_step(o in 1u64..=50, e in prop::sample::select(vec![0.5, 1.0, 5.0, 20.0])) {
                let grid = GridSpec::default();
                let data = pois(o, e);
                let (analytic, _) = data.analytic_mle().unwrap();
                let (b, _) = mle_and_se(&profile_from_counts("g", &data, &grid).unwrap()).unwrap();
                prop_assert!((b - analytic).abs() <= grid.step(), "{} vs {}", b, analytic);
            }

            #[test]
            fn grid_llr_matches_closed_form(o in 1u64..=50, e in prop::sample::select(vec![0.5, 1.0, 5.0, 20.0])) {
                let data = pois(o, e);
                let prof = profile_from_counts("g", &data, &GridSpec::default()).unwrap();
                let closed = poisson_llr(o as f64, e).unwrap();
                prop_assert!((grid_llr(&prof) - closed).abs() <= 1e-3, "{} vs {}", grid_llr(&prof), closed);
            }
        }
    }
}
