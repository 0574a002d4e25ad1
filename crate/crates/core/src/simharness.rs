//! Synthetic experiments: error rates of the four analysis modes across
//! designs, sample sizes and bias distributions, plus a confounding demo.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_model::ErrorModel;
use crate::likelihood::{CountData, OutcomeId};
use crate::maxsprt::{BiasDraw, LookSchedule, MonteCarloConfig};
use crate::stats::norm_sf;
use crate::surveillance::{
    AnalysisMode, Calibration, CvPolicy, LookObservation, OutcomeObservation, ProfileKind, Surveillance,
    SurveillanceConfig,
};

/// Mean exposed-window outcomes per 100,000 exposed subjects over the study.
pub const HC_OUTCOMES_PER_100K: f64 = 23.1;
/// Mean exposed-window outcomes per 100 exposed cases over the study.
pub const SCCS_OUTCOMES_PER_100: f64 = 18.1;
/// Exposed fraction of the SCCS observation period: 28 risk days out of 243.
pub const SCCS_EXPOSURE_PROPORTION: f64 = 28.0 / 243.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    /// Post-exposure counts against historical expectations (Poisson).
    HistoricalComparator,
    /// Self-controlled case series (binomial on the exposed fraction).
    Sccs,
}

impl Design {
    fn short(self) -> &'static str {
        match self {
            Design::HistoricalComparator => "hc",
            Design::Sccs => "sccs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub rate_ratio: f64,
    pub count: usize,
}

/// Run size: simulation repeats and Monte Carlo replicates per critical value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    Desk,
    Full,
}

impl Scale {
    pub fn repeats(self) -> usize {
        match self {
            Scale::Desk => 20,
            Scale::Full => 100,
        }
    }

    pub fn replicates(self) -> usize {
        match self {
            Scale::Desk => 10_000,
            Scale::Full => 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub name: String,
    pub design: Design,
    /// Exposed subjects (historical comparator) or exposed cases (SCCS).
    pub sample_size: u64,
    pub effect_sizes: Vec<EffectSize>,
    /// Generating distribution of the per-outcome bias.
    pub true_error_mean: f64,
    pub true_error_sd: f64,
    pub looks: usize,
    pub repeats: usize,
    pub alpha: f64,
    pub base_seed: u64,
    pub replicates: usize,
    pub bias_draw: BiasDraw,
}

impl SimulationScenario {
    pub fn with_scale(mut self, scale: Scale) -> Self {
        self.repeats = scale.repeats();
        self.replicates = scale.replicates();
        self
    }

    pub fn n_outcomes(&self) -> usize {
        self.effect_sizes.iter().map(|e| e.count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.effect_sizes.iter().any(|e| e.rate_ratio == 1.0 && e.count > 0) {
            return Err(Error::Config(format!("scenario `{}` has no negative controls", self.name)));
        }
        if self.effect_sizes.iter().any(|e| !e.rate_ratio.is_finite() || e.rate_ratio <= 0.0) {
            return Err(Error::Config(format!("scenario `{}` has a nonpositive rate ratio", self.name)));
        }
        if self.repeats == 0 || self.looks == 0 || self.sample_size == 0 {
            return Err(Error::Config(format!(
                "scenario `{}` needs at least one repeat, look and subject",
                self.name
            )));
        }
        if !self.true_error_mean.is_finite() || !self.true_error_sd.is_finite() || self.true_error_sd < 0.0 {
            return Err(Error::Config(format!("scenario `{}` has an invalid bias distribution", self.name)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("scenario `{}` needs alpha in (0, 1)", self.name)));
        }
        MonteCarloConfig::new(self.replicates, 0).validate()
    }

    /// Outcome ids paired with their true rate ratio.
    pub fn outcomes(&self) -> Vec<(OutcomeId, f64)> {
        self.effect_sizes
            .iter()
            .flat_map(|e| (0..e.count).map(move |i| (OutcomeId::new(format!("rr{}-{i:03}", e.rate_ratio)), e.rate_ratio)))
            .collect()
    }

    /// Expected time-at-risk outcomes per look under no effect and no bias.
    pub fn baseline_per_look(&self) -> f64 {
        let total = match self.design {
            Design::HistoricalComparator => HC_OUTCOMES_PER_100K * self.sample_size as f64 / 100_000.0,
            Design::Sccs => SCCS_OUTCOMES_PER_100 * self.sample_size as f64 / 100.0,
        };
        total / self.looks as f64
    }
}

/// The twelve synthetic scenarios at full scale.
pub fn paper_scenarios() -> Vec<SimulationScenario> {
    let mut out = Vec::with_capacity(12);
    let errors = [(0.0, 0.0), (0.0, 0.2), (0.2, 0.2)];
    for design in [Design::HistoricalComparator, Design::Sccs] {
        for (mean, sd) in errors {
            for (size_name, size) in [("small", 0usize), ("large", 1)] {
                let sample_size = match (design, size) {
                    (Design::HistoricalComparator, 0) => 100_000,
                    (Design::HistoricalComparator, _) => 1_000_000,
                    (Design::Sccs, 0) => 100,
                    (Design::Sccs, _) => 1_000,
                };
                let name = format!("{}-{size_name}-mu{mean}-sd{sd}", design.short());
                let base_seed = 20_100 + out.len() as u64;
                out.push(SimulationScenario {
                    name,
                    design,
                    sample_size,
                    effect_sizes: [1.0, 1.5, 2.0, 4.0]
                        .into_iter()
                        .map(|rate_ratio| EffectSize { rate_ratio, count: 50 })
                        .collect(),
                    true_error_mean: mean,
                    true_error_sd: sd,
                    looks: 10,
                    repeats: Scale::Full.repeats(),
                    alpha: 0.05,
                    base_seed,
                    replicates: Scale::Full.replicates(),
                    bias_draw: BiasDraw::default(),
                });
            }
        }
    }
    out
}

pub fn find_scenario(name: &str) -> Result<SimulationScenario> {
    paper_scenarios()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::Config(format!("unknown scenario `{name}`")))
}

/// Cumulative per-look data for one outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSeries {
    pub outcome_id: OutcomeId,
    pub rate_ratio: f64,
    pub bias: f64,
    pub looks: Vec<CountData>,
}

impl OutcomeSeries {
    /// Outcomes in the exposed window by the final look.
    pub fn exposed_total(&self) -> u64 {
        match self.looks.last() {
            Some(CountData::Poisson { observed, .. }) => *observed,
            Some(CountData::Binomial { exposed, .. }) => *exposed,
            None => 0,
        }
    }

    /// Per-look case totals of a binomial series.
    fn case_increments(&self) -> Vec<f64> {
        let mut prev = 0;
        self.looks
            .iter()
            .map(|d| match d {
                CountData::Binomial { total, .. } => {
                    let inc = total - prev;
                    prev = *total;
                    inc as f64
                }
                CountData::Poisson { .. } => 0.0,
            })
            .collect()
    }
}

fn derived_seed(base: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng
}

/// Draws one outcome's series with bias `tau`.
pub fn generate_series<R: Rng + ?Sized>(
    scenario: &SimulationScenario,
    outcome_id: OutcomeId,
    rate_ratio: f64,
    tau: f64,
    rng: &mut R,
) -> OutcomeSeries {
    let base = scenario.baseline_per_look();
    let multiplier = rate_ratio * tau.exp();
    let mut looks = Vec::with_capacity(scenario.looks);
    match scenario.design {
        Design::HistoricalComparator => {
            let events = Poisson::new(base * multiplier).expect("positive rate");
            let mut observed = 0u64;
            for t in 1..=scenario.looks {
                observed += events.sample(rng) as u64;
                looks.push(CountData::Poisson {
                    observed,
                    expected: base * t as f64,
                });
            }
        }
        Design::Sccs => {
            let p = SCCS_EXPOSURE_PROPORTION;
            let unexposed_rate = base * (1.0 - p) / p;
            let unexposed = Poisson::new(unexposed_rate).expect("positive rate");
            let exposed_events = Poisson::new(base * multiplier).expect("positive rate");
            let (mut exposed, mut total) = (0u64, 0u64);
            for _ in 0..scenario.looks {
                let x = exposed_events.sample(rng) as u64;
                exposed += x;
                total += x + unexposed.sample(rng) as u64;
                looks.push(CountData::Binomial {
                    exposed,
                    total,
                    null_proportion: p,
                });
            }
        }
    }
    OutcomeSeries {
        outcome_id,
        rate_ratio,
        bias: tau,
        looks,
    }
}

/// All outcomes of one repeat, with biases drawn once per outcome.
pub fn generate_outcome_data(scenario: &SimulationScenario, repeat: usize) -> Vec<OutcomeSeries> {
    let mut rng = derived_seed(scenario.base_seed, 2 * repeat as u64 + 1);
    scenario
        .outcomes()
        .into_iter()
        .map(|(id, rr)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let tau = scenario.true_error_mean + scenario.true_error_sd * z;
            generate_series(scenario, id, rr, tau, &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateType {
    Type1,
    Type2,
}

impl RateType {
    pub fn as_str(self) -> &'static str {
        match self {
            RateType::Type1 => "type1",
            RateType::Type2 => "type2",
        }
    }
}

impl fmt::Display for RateType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RateType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "type1" => Ok(RateType::Type1),
            "type2" => Ok(RateType::Type2),
            other => Err(Error::Config(format!("unknown rate type `{other}`"))),
        }
    }
}

/// One tidy row: a rate for one repeat, mode and true effect size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRateRow {
    pub scenario: String,
    pub repeat: usize,
    pub mode: AnalysisMode,
    pub effect_size: f64,
    pub rate_type: RateType,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorRateReport {
    pub rows: Vec<ErrorRateRow>,
}

impl ErrorRateReport {
    /// Rates for one mode and effect size, in repeat order.
    pub fn values(&self, mode: AnalysisMode, effect_size: f64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.mode == mode && r.effect_size == effect_size)
            .map(|r| r.value)
            .collect()
    }

    pub fn mean(&self, mode: AnalysisMode, effect_size: f64) -> Option<f64> {
        let v = self.values(mode, effect_size);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn mean_type1(&self, mode: AnalysisMode) -> Option<f64> {
        self.mean(mode, 1.0)
    }
}

fn surveillance_config(
    scenario: &SimulationScenario,
    series: &[OutcomeSeries],
    mc_seed: u64,
) -> Result<SurveillanceConfig> {
    let base = scenario.baseline_per_look();
    let mc = MonteCarloConfig::new(scenario.replicates, mc_seed).with_bias_draw(scenario.bias_draw);
    let mut config = match scenario.design {
        Design::HistoricalComparator => {
            SurveillanceConfig::new(LookSchedule::poisson(vec![base; scenario.looks], scenario.alpha)?, mc)
        }
        Design::Sccs => {
            let p = SCCS_EXPOSURE_PROPORTION;
            let mut config = SurveillanceConfig::new(
                LookSchedule::binomial(vec![(base / p).round(); scenario.looks], p, scenario.alpha)?,
                mc,
            );
            for s in series {
                let increments = s.case_increments();
                if increments.iter().any(|&n| n > 0.0) {
                    config
                        .outcome_schedules
                        .insert(s.outcome_id.clone(), LookSchedule::binomial(increments, p, scenario.alpha)?);
                }
            }
            config
        }
    };
    config.profile = ProfileKind::NormalApprox;
    config.calibration = Calibration::Fitted;
    config.cv_policy = CvPolicy::DecisionOnly;
    Ok(config)
}

/// Runs all four modes on one repeat and returns its tidy rows.
pub fn run_repeat(scenario: &SimulationScenario, repeat: usize) -> Result<Vec<ErrorRateRow>> {
    let series = generate_outcome_data(scenario, repeat);
    let mc_seed = derived_seed(scenario.base_seed, 2 * repeat as u64).next_u64();
    let config = surveillance_config(scenario, &series, mc_seed)?;
    let controls: BTreeSet<OutcomeId> = series
        .iter()
        .filter(|s| s.rate_ratio == 1.0)
        .map(|s| s.outcome_id.clone())
        .collect();
    let mut surveillance = Surveillance::new(config, controls)?;
    for t in 0..scenario.looks {
        let look = LookObservation {
            look_index: t + 1,
            outcomes: series
                .iter()
                .map(|s| OutcomeObservation {
                    outcome_id: s.outcome_id.clone(),
                    data: s.looks[t],
                    is_negative_control: s.rate_ratio == 1.0,
                })
                .collect(),
        };
        surveillance
            .push_look(look)
            .map_err(|e| e.with_context(&format!("scenario `{}`, repeat {repeat}", scenario.name)))?;
    }
    let result = surveillance.into_result();

    let mut by_effect: BTreeMap<u64, (f64, usize, [usize; 4])> = BTreeMap::new();
    for s in &series {
        let r = &result.outcomes[&s.outcome_id];
        let null = s.rate_ratio == 1.0;
        if null && r.first_informative_look.is_none() {
            continue;
        }
        let entry = by_effect.entry(s.rate_ratio.to_bits()).or_insert((s.rate_ratio, 0, [0; 4]));
        entry.1 += 1;
        for mode in AnalysisMode::ALL {
            if r.first_signal_look.get(mode).is_some() {
                entry.2[mode.index()] += 1;
            }
        }
    }
    let mut effects: Vec<_> = by_effect.into_values().collect();
    effects.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rows = Vec::with_capacity(effects.len() * 4);
    for mode in AnalysisMode::ALL {
        for &(rr, n, signaled) in &effects {
            let fraction = if n == 0 { 0.0 } else { signaled[mode.index()] as f64 / n as f64 };
            let (rate_type, value) = if rr == 1.0 {
                (RateType::Type1, fraction)
            } else {
                (RateType::Type2, 1.0 - fraction)
            };
            rows.push(ErrorRateRow {
                scenario: scenario.name.clone(),
                repeat,
                mode,
                effect_size: rr,
                rate_type,
                value,
            });
        }
    }
    Ok(rows)
}

/// Runs every repeat of a scenario.
pub fn run_scenario(scenario: &SimulationScenario) -> Result<ErrorRateReport> {
    scenario.validate()?;
    let per_repeat: Vec<Vec<ErrorRateRow>> = (0..scenario.repeats)
        .into_par_iter()
        .map(|r| run_repeat(scenario, r))
        .collect::<Result<_>>()?;
    Ok(ErrorRateReport {
        rows: per_repeat.into_iter().flatten().collect(),
    })
}

/// Linear probability model for the confounding demonstration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfoundingModel {
    pub exposure_base: f64,
    pub exposure_coef: f64,
    pub outcome_base: f64,
    pub outcome_coef: f64,
}

impl ConfoundingModel {
    /// Weak confounding with no causal effect of exposure on outcome.
    pub fn weak() -> Self {
        ConfoundingModel {
            exposure_base: 0.3,
            exposure_coef: 0.1,
            outcome_base: 0.03,
            outcome_coef: 0.01,
        }
    }

    pub fn unconfounded() -> Self {
        ConfoundingModel {
            exposure_coef: 0.0,
            outcome_coef: 0.0,
            ..ConfoundingModel::weak()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfoundingEstimate {
    pub sample_size: usize,
    pub relative_risk: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub p_value: f64,
}

impl ConfoundingEstimate {
    pub fn ci_contains(&self, value: f64) -> bool {
        self.ci_lower <= value && value <= self.ci_upper
    }
}

/// Crude relative risk of outcome given exposure with a log-scale 95% interval.
///
/// With several repeats per size the log estimates are pooled by inverse
/// variance.
pub fn confounding_demo(
    sample_sizes: &[usize],
    repeats: usize,
    model: ConfoundingModel,
    seed: u64,
) -> Result<Vec<ConfoundingEstimate>> {
    if repeats == 0 {
        return Err(Error::Config("confounding demo needs at least one repeat".into()));
    }
    if let Some(&n) = sample_sizes.iter().find(|&&n| n < 1000) {
        return Err(Error::Config(format!("sample size {n} is below 1000")));
    }
    let z95 = 1.959_963_984_540_054;
    sample_sizes
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let fits: Vec<(f64, f64)> = (0..repeats)
                .into_par_iter()
                .map(|r| {
                    let mut rng = derived_seed(seed, (k * repeats + r) as u64);
                    log_relative_risk(n, model, &mut rng)
                })
                .collect::<Result<_>>()?;
            let weight: f64 = fits.iter().map(|(_, se)| se.powi(-2)).sum();
            let log_rr = fits.iter().map(|(b, se)| b * se.powi(-2)).sum::<f64>() / weight;
            let se = weight.powf(-0.5);
            Ok(ConfoundingEstimate {
                sample_size: n,
                relative_risk: log_rr.exp(),
                ci_lower: (log_rr - z95 * se).exp(),
                ci_upper: (log_rr + z95 * se).exp(),
                p_value: 2.0 * norm_sf((log_rr / se).abs()),
            })
        })
        .collect()
}

fn log_relative_risk<R: Rng + ?Sized>(n: usize, model: ConfoundingModel, rng: &mut R) -> Result<(f64, f64)> {
    let confounder = Normal::new(0.0, 1.0).expect("unit normal");
    // [exposed, unexposed] × [cases, subjects]
    let mut cells = [[0u64; 2]; 2];
    for _ in 0..n {
        let z: f64 = confounder.sample(rng);
        let px = (model.exposure_base + model.exposure_coef * z).clamp(0.0, 1.0);
        let py = (model.outcome_base + model.outcome_coef * z).clamp(0.0, 1.0);
        let arm = usize::from(!rng.random_bool(px));
        cells[arm][1] += 1;
        cells[arm][0] += u64::from(rng.random_bool(py));
    }
    let [[a, n1], [c, n0]] = cells;
    if a == 0 || c == 0 || n1 == 0 || n0 == 0 {
        return Err(Error::Curvature(format!("empty cell in a sample of {n}")));
    }
    let (a, n1, c, n0) = (a as f64, n1 as f64, c as f64, n0 as f64);
    let log_rr = (a / n1).ln() - (c / n0).ln();
    let se = (1.0 / a - 1.0 / n1 + 1.0 / c - 1.0 / n0).sqrt();
    Ok((log_rr, se))
}

/// Helper for tests and reports: model used to draw biases.
pub fn true_error_model(scenario: &SimulationScenario) -> ErrorModel {
    ErrorModel::fixed(scenario.true_error_mean, scenario.true_error_sd)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(name: &str) -> SimulationScenario {
        find_scenario(name).unwrap()
    }

    #[test]
    fn twelve_scenarios_of_two_hundred_outcomes() {
        let all = paper_scenarios();
        assert_eq!(all.len(), 12);
        let names: BTreeSet<_> = all.iter().map(|s| s.name.clone()).collect();
        assert_eq!(names.len(), 12);
        for s in &all {
            s.validate().unwrap();
            assert_eq!(s.n_outcomes(), 200);
            assert_eq!(s.looks, 10);
            assert_eq!(s.repeats, 100);
            assert_eq!(s.alpha, 0.05);
            let counts: Vec<(f64, usize)> = s.effect_sizes.iter().map(|e| (e.rate_ratio, e.count)).collect();
            assert_eq!(counts, vec![(1.0, 50), (1.5, 50), (2.0, 50), (4.0, 50)]);
        }
    }

    #[test]
    fn unknown_scenario_rejected() {
        assert!(matches!(find_scenario("nope"), Err(Error::Config(_))));
    }

    fn mean_exposed_total(s: &SimulationScenario, repeats: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let totals: Vec<f64> = (0..repeats)
            .map(|i| generate_series(s, OutcomeId::new(format!("x{i}")), 1.0, 0.0, &mut rng).exposed_total() as f64)
            .collect();
        totals.iter().sum::<f64>() / repeats as f64
    }

    #[test]
    fn large_historical_comparator_anchor() {
        let m = mean_exposed_total(&scenario("hc-large-mu0-sd0"), 100);
        assert!((m / 231.0 - 1.0).abs() < 0.1, "{m}");
    }

    #[test]
    fn small_sccs_anchor() {
        let m = mean_exposed_total(&scenario("sccs-small-mu0-sd0"), 100);
        assert!((m / 18.1 - 1.0).abs() < 0.15, "{m}");
    }

    #[test]
    fn bias_scales_observed_over_expected() {
        let s = scenario("hc-large-mu0-sd0");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let series = generate_series(&s, OutcomeId::new("b"), 1.0, 2f64.ln(), &mut rng);
        let CountData::Poisson { observed, expected } = *series.looks.last().unwrap() else {
            panic!("poisson series expected")
        };
        assert!((observed as f64 / expected - 2.0).abs() < 0.25);
    }

    #[test]
    fn series_are_cumulative() {
        let s = scenario("sccs-small-mu0.2-sd0.2");
        for series in generate_outcome_data(&s, 0) {
            for w in series.looks.windows(2) {
                let (CountData::Binomial { exposed: a, total: n, .. }, CountData::Binomial { exposed: b, total: m, .. }) =
                    (w[0], w[1])
                else {
                    panic!("binomial series expected")
                };
                assert!(b >= a && m >= n && m - n >= b - a);
            }
        }
    }

    #[test]
    fn repeats_are_deterministic_and_distinct() {
        let s = scenario("hc-small-mu0-sd0.2");
        assert_eq!(generate_outcome_data(&s, 2), generate_outcome_data(&s, 2));
        assert_ne!(generate_outcome_data(&s, 2), generate_outcome_data(&s, 3));
    }

    #[test]
    fn small_run_reports_all_modes_deterministically() {
        let mut s = scenario("sccs-small-mu0-sd0").with_scale(Scale::Desk);
        s.repeats = 2;
        s.replicates = 2000;
        s.effect_sizes = vec![
            EffectSize { rate_ratio: 1.0, count: 10 },
            EffectSize { rate_ratio: 4.0, count: 5 },
        ];
        let a = run_scenario(&s).unwrap();
        assert_eq!(a.rows.len(), 2 * 4 * 2);
        assert!(a.rows.iter().all(|r| (0.0..=1.0).contains(&r.value)));
        for mode in AnalysisMode::ALL {
            assert_eq!(a.values(mode, 1.0).len(), 2);
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_scenario(&s)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn confounding_inflates_the_crude_estimate() {
        let est = confounding_demo(&[10_000, 1_000_000], 1, ConfoundingModel::weak(), 1).unwrap();
        let big = est[1];
        assert!(big.ci_lower > 1.0, "{big:?}");
        // population value: (0.009 + 0.001) / 0.3 over (0.03 - 0.01) / 0.7
        let truth = (0.010 / 0.3) / (0.020 / 0.7);
        assert!(big.ci_contains(truth), "{big:?} vs {truth}");
        assert!(big.ci_upper - big.ci_lower < est[0].ci_upper - est[0].ci_lower);
    }

    #[test]
    fn no_confounding_no_effect() {
        let est = confounding_demo(&[1_000_000], 1, ConfoundingModel::unconfounded(), 2).unwrap();
        assert!(est[0].ci_contains(1.0), "{:?}", est[0]);
    }

    #[test]
    fn confounding_demo_rejects_tiny_samples() {
        assert!(confounding_demo(&[500], 1, ConfoundingModel::weak(), 0).is_err());
    }

    #[test]
    fn type2_falls_with_effect_size_and_sample_size() {
        let run = |name: &str| {
            let mut s = scenario(name).with_scale(Scale::Desk);
            s.repeats = 3;
            s.replicates = 2000;
            run_scenario(&s).unwrap()
        };
        let small = run("hc-small-mu0-sd0");
        let large = run("hc-large-mu0-sd0");
        for mode in AnalysisMode::ALL {
            for report in [&small, &large] {
                let t2: Vec<f64> = [1.5, 2.0, 4.0].iter().map(|&e| report.mean(mode, e).unwrap()).collect();
                assert!(t2.windows(2).all(|w| w[0] >= w[1]), "{mode}: {t2:?}");
            }
            for e in [1.5, 2.0, 4.0] {
                assert!(large.mean(mode, e).unwrap() <= small.mean(mode, e).unwrap(), "{mode} at {e}");
            }
        }
    }
}
