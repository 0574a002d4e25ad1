//! Monte Carlo critical values for Poisson and binomial MaxSPRT, with and
//! without a systematic-error distribution folded into the null.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_model::ErrorModel;
use crate::likelihood::{binomial_llr_unchecked, poisson_llr_unchecked, tilted_proportion};

/// Count model tested at each look.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum SurveillanceModel {
    Poisson,
    Binomial { exposure_proportion: f64 },
}

/// Looks planned for one surveillance run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookSchedule {
    /// Expected count added since the previous look (total cases for the binomial model).
    pub expected_increments: Vec<f64>,
    pub model: SurveillanceModel,
    pub alpha: f64,
}

impl LookSchedule {
    pub fn poisson(expected_increments: Vec<f64>, alpha: f64) -> Result<Self> {
        let s = LookSchedule {
            expected_increments,
            model: SurveillanceModel::Poisson,
            alpha,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn binomial(expected_increments: Vec<f64>, exposure_proportion: f64, alpha: f64) -> Result<Self> {
        let s = LookSchedule {
            expected_increments,
            model: SurveillanceModel::Binomial { exposure_proportion },
            alpha,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn looks(&self) -> usize {
        self.expected_increments.len()
    }

    /// Binomial models accept zero-case looks; Poisson increments must be positive.
    pub fn validate(&self) -> Result<()> {
        if self.expected_increments.is_empty() {
            return Err(Error::domain("schedule has no looks"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        match self.model {
            SurveillanceModel::Poisson => {
                if self.expected_increments.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                    return Err(Error::domain("expected increments must be finite and positive"));
                }
            }
            SurveillanceModel::Binomial { exposure_proportion: p } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::domain(format!("exposure proportion must lie in (0, 1), got {p}")));
                }
                if self.expected_increments.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                    return Err(Error::domain("expected increments must be finite and nonnegative"));
                }
                if self.trials().iter().all(|&n| n == 0) {
                    return Err(Error::domain("binomial schedule has no cases"));
                }
            }
        }
        Ok(())
    }

    /// Cumulative expected counts per look.
    pub fn cumulative_expected(&self) -> Vec<f64> {
        self.expected_increments
            .iter()
            .scan(0.0, |acc, e| {
                *acc += e;
                Some(*acc)
            })
            .collect()
    }

    /// Binomial trials per look: each increment rounded to the nearest positive integer.
    pub fn trials(&self) -> Vec<u64> {
        self.expected_increments
            .iter()
            .map(|&e| if e > 0.0 { (e.round() as u64).max(1) } else { 0 })
            .collect()
    }

    /// Copy of the schedule with another alpha.
    pub fn with_alpha(&self, alpha: f64) -> LookSchedule {
        LookSchedule {
            alpha,
            ..self.clone()
        }
    }
}

/// How the bias term is drawn inside one Monte Carlo replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasDraw {
    /// Fresh `τ_t` at every look. Averages the bias out over looks, which
    /// understates the null spread when each outcome's bias is persistent.
    PerLook,
    /// One standardized draw per replicate, scaled by each look's model.
    #[default]
    PerReplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub replicates: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub bias_draw: BiasDraw,
}

impl MonteCarloConfig {
    pub const MIN_REPLICATES: usize = 1000;

    pub fn new(replicates: usize, base_seed: u64) -> Self {
        MonteCarloConfig {
            replicates,
            base_seed,
            bias_draw: BiasDraw::default(),
        }
    }

    pub fn with_bias_draw(mut self, bias_draw: BiasDraw) -> Self {
        self.bias_draw = bias_draw;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < Self::MIN_REPLICATES {
            return Err(Error::domain(format!(
                "need at least {} Monte Carlo replicates, got {}",
                Self::MIN_REPLICATES,
                self.replicates
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueResult {
    pub cv: f64,
    /// Fraction of replicates whose maximum LLR strictly exceeds `cv`.
    pub attained_alpha: f64,
    /// Dynamic per-look thresholds, when computed.
    pub per_look: Option<Vec<f64>>,
}

/// Uncalibrated critical value: counts drawn from the exact null.
pub fn compute_cv(schedule: &LookSchedule, mc: &MonteCarloConfig) -> Result<CriticalValueResult> {
    schedule.validate()?;
    mc.validate()?;
    let maxima = simulate_max_llr(schedule, None, mc);
    Ok(select_cv(maxima, schedule.alpha))
}

/// Calibrated critical value: the null log effect at each look is `τ_t`
/// drawn from that look's error model. `models` holds one model per look, or
/// a single model used at every look.
pub fn compute_calibrated_cv(
    schedule: &LookSchedule,
    models: &[ErrorModel],
    mc: &MonteCarloConfig,
) -> Result<CriticalValueResult> {
    schedule.validate()?;
    mc.validate()?;
    let per_look = broadcast_models(models, schedule.looks())?;
    let maxima = simulate_max_llr(schedule, Some(&per_look), mc);
    Ok(select_cv(maxima, schedule.alpha))
}

/// Dynamic thresholds: `cv_t` uses the look-`t` model at every look.
/// The headline `cv` is the threshold at the final look.
pub fn compute_dynamic_cv(
    schedule: &LookSchedule,
    models_by_look: &[ErrorModel],
    mc: &MonteCarloConfig,
) -> Result<CriticalValueResult> {
    if models_by_look.len() != schedule.looks() {
        return Err(Error::domain(format!(
            "expected {} per-look models, got {}",
            schedule.looks(),
            models_by_look.len()
        )));
    }
    let mut thresholds = Vec::with_capacity(models_by_look.len());
    let mut last = None;
    for m in models_by_look {
        let r = compute_calibrated_cv(schedule, std::slice::from_ref(m), mc)?;
        thresholds.push(r.cv);
        last = Some(r);
    }
    let last = last.expect("schedule has looks");
    Ok(CriticalValueResult {
        cv: last.cv,
        attained_alpha: last.attained_alpha,
        per_look: Some(thresholds),
    })
}

fn broadcast_models(models: &[ErrorModel], looks: usize) -> Result<Vec<ErrorModel>> {
    for m in models {
        m.validate()?;
    }
    match models.len() {
        1 => Ok(vec![models[0]; looks]),
        n if n == looks => Ok(models.to_vec()),
        n => Err(Error::domain(format!("need 1 or {looks} error models, got {n}"))),
    }
}

/// One-sided LLR at each look from cumulative observed counts. Binomial
/// totals come from the schedule's cumulative trials.
pub fn llr_sequence(schedule: &LookSchedule, cumulative_observed: &[u64]) -> Result<Vec<f64>> {
    schedule.validate()?;
    if cumulative_observed.len() > schedule.looks() {
        return Err(Error::domain(format!(
            "{} observations for a {}-look schedule",
            cumulative_observed.len(),
            schedule.looks()
        )));
    }
    if cumulative_observed.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("cumulative counts must be nondecreasing"));
    }
    match schedule.model {
        SurveillanceModel::Poisson => Ok(cumulative_observed
            .iter()
            .zip(schedule.cumulative_expected())
            .map(|(&o, e)| poisson_llr_unchecked(o as f64, e))
            .collect()),
        SurveillanceModel::Binomial { exposure_proportion: p } => {
            let mut total = 0u64;
            cumulative_observed
                .iter()
                .zip(schedule.trials())
                .map(|(&x, n)| {
                    total += n;
                    if x > total {
                        return Err(Error::domain(format!("exposed {x} exceeds cumulative total {total}")));
                    }
                    Ok(binomial_llr_unchecked(x as f64, total as f64, p))
                })
                .collect()
        }
    }
}

/// Everything one replicate needs, shared across replicates.
struct ReplicateContext {
    base: ChaCha8Rng,
    schedule: LookSchedule,
    trials: Vec<u64>,
    models: Option<Vec<ErrorModel>>,
    draw: BiasDraw,
}

impl ReplicateContext {
    fn new(schedule: &LookSchedule, models: Option<&[ErrorModel]>, mc: &MonteCarloConfig) -> Self {
        ReplicateContext {
            base: ChaCha8Rng::seed_from_u64(mc.base_seed),
            schedule: schedule.clone(),
            trials: schedule.trials(),
            models: models.filter(|m| !m.iter().all(ErrorModel::is_null)).map(<[ErrorModel]>::to_vec),
            draw: mc.bias_draw,
        }
    }

    /// Maximum LLR over looks for replicate `s`.
    ///
    /// Replicate `s` owns ChaCha stream `s`. Bias draws come first: one
    /// standard normal per look, or a single one shared by all looks.
    fn max_llr(&self, s: usize, tau: &mut [f64]) -> f64 {
        let mut rng = self.base.clone();
        rng.set_stream(s as u64);
        match &self.models {
            None => tau.fill(0.0),
            Some(models) => {
                let shared: f64 = match self.draw {
                    BiasDraw::PerLook => 0.0,
                    BiasDraw::PerReplicate => rng.sample(StandardNormal),
                };
                for (slot, m) in tau.iter_mut().zip(models) {
                    let z = match self.draw {
                        BiasDraw::PerLook => rng.sample(StandardNormal),
                        BiasDraw::PerReplicate => shared,
                    };
                    *slot = if m.sd == 0.0 { m.mean } else { m.mean + m.sd * z };
                }
            }
        }

        let expected = &self.schedule.expected_increments;
        let mut max_llr = 0.0f64;
        match self.schedule.model {
            SurveillanceModel::Poisson => {
                let (mut obs, mut exp) = (0.0, 0.0);
                let (mut last_tau, mut factor) = (0.0, 1.0);
                for (t, &e) in expected.iter().enumerate() {
                    if tau[t] != last_tau {
                        last_tau = tau[t];
                        factor = last_tau.exp();
                    }
                    obs += sample_poisson(e * factor, &mut rng) as f64;
                    exp += e;
                    max_llr = max_llr.max(poisson_llr_unchecked(obs, exp));
                }
            }
            SurveillanceModel::Binomial { exposure_proportion: p } => {
                let (mut exposed, mut total) = (0.0, 0.0);
                let mut last_tau = f64::NAN;
                let mut q = BinomialParts::new(p);
                for (t, &n) in self.trials.iter().enumerate() {
                    if n == 0 {
                        continue;
                    }
                    if tau[t] != last_tau {
                        last_tau = tau[t];
                        q = BinomialParts::new(tilted_proportion(p, last_tau));
                    }
                    exposed += q.sample(n, &mut rng) as f64;
                    total += n as f64;
                    max_llr = max_llr.max(binomial_llr_unchecked(exposed, total, p));
                }
            }
        }
        max_llr
    }

    fn run(&self, range: std::ops::Range<usize>) -> Vec<f64> {
        let looks = self.schedule.looks();
        range
            .into_par_iter()
            .with_min_len(256)
            .map_init(|| vec![0.0f64; looks], |tau, s| self.max_llr(s, tau))
            .collect()
    }
}

/// Maximum LLR over looks for every replicate, in replicate order.
pub(crate) fn simulate_max_llr(
    schedule: &LookSchedule,
    models: Option<&[ErrorModel]>,
    mc: &MonteCarloConfig,
) -> Vec<f64> {
    ReplicateContext::new(schedule, models, mc).run(0..mc.replicates)
}

fn allowed_exceedances(replicates: usize, alpha: f64) -> usize {
    let sf = replicates as f64;
    let mut allowed = (alpha * sf).floor() as usize;
    while allowed < replicates && (allowed + 1) as f64 / sf <= alpha {
        allowed += 1;
    }
    while allowed > 0 && allowed as f64 / sf > alpha {
        allowed -= 1;
    }
    allowed
}

const DECISION_BLOCK: usize = 1024;

/// Resumable critical-value computation.
///
/// Replicates run in blocks on demand and only the `⌊αS⌋ + 1` largest maxima
/// are kept, which is all that deciding `llr > cv` or reading off `cv` needs.
/// Answers are identical to [`compute_cv`] / [`compute_calibrated_cv`] with
/// the same inputs.
pub struct ThresholdSearch {
    ctx: ReplicateContext,
    replicates: usize,
    allowed: usize,
    computed: usize,
    /// Largest maxima seen so far, descending, at most `allowed + 1` long.
    top: Vec<f64>,
}

impl ThresholdSearch {
    /// `models` as for [`compute_calibrated_cv`]; `None` for the exact null.
    pub fn new(schedule: &LookSchedule, models: Option<&[ErrorModel]>, mc: &MonteCarloConfig) -> Result<Self> {
        schedule.validate()?;
        mc.validate()?;
        let per_look = models.map(|m| broadcast_models(m, schedule.looks())).transpose()?;
        let allowed = allowed_exceedances(mc.replicates, schedule.alpha);
        Ok(ThresholdSearch {
            ctx: ReplicateContext::new(schedule, per_look.as_deref(), mc),
            replicates: mc.replicates,
            allowed,
            computed: 0,
            top: Vec::new(),
        })
    }

    fn extend(&mut self) {
        let end = (self.computed + DECISION_BLOCK).min(self.replicates);
        let keep = self.allowed + 1;
        let block = self.ctx.run(self.computed..end);
        let floor = if self.top.len() == keep { self.top[keep - 1] } else { f64::NEG_INFINITY };
        self.top.extend(block.into_iter().filter(|&m| m >= floor));
        self.top.sort_unstable_by(|a, b| b.total_cmp(a));
        self.top.truncate(keep);
        self.computed = end;
    }

    /// Whether `llr` strictly exceeds the critical value.
    pub fn exceeds(&mut self, llr: f64) -> bool {
        if self.allowed >= self.replicates {
            return llr > 0.0;
        }
        if llr <= 0.0 {
            return false;
        }
        loop {
            let reached = self.top.iter().take_while(|&&m| m >= llr).count();
            if reached > self.allowed {
                return false;
            }
            if self.computed == self.replicates {
                return true;
            }
            self.extend();
        }
    }

    pub fn result(&mut self) -> CriticalValueResult {
        while self.computed < self.replicates {
            self.extend();
        }
        let cv = if self.allowed >= self.replicates { 0.0 } else { self.top[self.allowed] };
        let exceed = self.top.iter().filter(|&&m| m > cv).count();
        CriticalValueResult {
            cv,
            attained_alpha: exceed as f64 / self.replicates as f64,
            per_look: None,
        }
    }
}

/// Whether `llr > cv` for the critical value `compute_calibrated_cv` (or
/// `compute_cv` when `models` is `None`) would return with the same inputs.
///
/// `llr > cv` holds exactly when at most `⌊αS⌋` replicate maxima reach `llr`,
/// so replicates run in blocks and stop once that count is exceeded.
pub fn exceeds_cv(
    schedule: &LookSchedule,
    models: Option<&[ErrorModel]>,
    mc: &MonteCarloConfig,
    llr: f64,
) -> Result<bool> {
    Ok(ThresholdSearch::new(schedule, models, mc)?.exceeds(llr))
}

/// Largest mean handled by inversion before falling back to `rand_distr`.
const INVERSION_LIMIT: f64 = 40.0;

/// `1/k` for the inversion recurrences, which would otherwise divide at every step.
const RECIPROCALS: [f64; 256] = {
    let mut table = [0.0; 256];
    let mut k = 1;
    while k < 256 {
        table[k] = 1.0 / k as f64;
        k += 1;
    }
    table
};

#[inline]
fn reciprocal(k: u64) -> f64 {
    match RECIPROCALS.get(k as usize) {
        Some(&r) => r,
        None => 1.0 / k as f64,
    }
}

fn sample_poisson<R: Rng>(rate: f64, rng: &mut R) -> u64 {
    if rate >= INVERSION_LIMIT {
        return Poisson::new(rate).expect("positive finite rate").sample(rng) as u64;
    }
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut pmf = (-rate).exp();
    let mut cdf = pmf;
    while u > cdf {
        k += 1;
        pmf *= rate * reciprocal(k);
        if pmf == 0.0 && k as f64 > rate {
            break;
        }
        cdf += pmf;
    }
    k
}

/// Success probability with the pieces inversion sampling reuses.
#[derive(Clone, Copy)]
struct BinomialParts {
    q: f64,
    odds: f64,
    ln_fail: f64,
}

impl BinomialParts {
    fn new(q: f64) -> Self {
        let small = q.min(1.0 - q);
        BinomialParts {
            q,
            odds: small / (1.0 - small),
            ln_fail: (-small).ln_1p(),
        }
    }

    fn sample<R: Rng>(&self, n: u64, rng: &mut R) -> u64 {
        if self.q > 0.5 {
            return n - self.sample_small(n, 1.0 - self.q, rng);
        }
        self.sample_small(n, self.q, rng)
    }

    /// Inversion for `q ≤ 0.5`.
    fn sample_small<R: Rng>(&self, n: u64, q: f64, rng: &mut R) -> u64 {
        if n as f64 * q >= INVERSION_LIMIT {
            return Binomial::new(n, q).expect("valid binomial").sample(rng);
        }
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut pmf = (n as f64 * self.ln_fail).exp();
        let mut cdf = pmf;
        while u > cdf && k < n {
            pmf *= self.odds * (n - k) as f64 * reciprocal(k + 1);
            k += 1;
            cdf += pmf;
        }
        k
    }
}

#[cfg(test)]
fn sample_binomial<R: Rng>(n: u64, q: f64, rng: &mut R) -> u64 {
    BinomialParts::new(q).sample(n, rng)
}

/// Smallest realized maximum `v` with `#{max > v} / S ≤ alpha`.
pub(crate) fn select_cv(mut maxima: Vec<f64>, alpha: f64) -> CriticalValueResult {
    let s = maxima.len();
    let sf = s as f64;
    let allowed = allowed_exceedances(s, alpha);
    let cv = if allowed >= s {
        0.0
    } else {
        let (_, v, _) = maxima.select_nth_unstable_by(s - allowed - 1, f64::total_cmp);
        *v
    };
    let exceed = maxima.iter().filter(|&&m| m > cv).count();
    CriticalValueResult {
        cv,
        attained_alpha: exceed as f64 / sf,
        per_look: None,
    }
}
