//! Sequential surveillance over accruing looks.
//!
//! Each look refits the systematic-error distribution on the negative
//! controls observed so far, then evaluates every outcome in four modes:
//! with or without calibration, and MaxSPRT or a nominal per-look p-value.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrated_p, uncalibrated_p};
use crate::error::{Error, Result};
use crate::error_model::{fit_error_model, ErrorModel};
use crate::likelihood::{
    mle_and_se, normal_profile_from_counts, profile_from_counts, CountData, GridSpec, LikelihoodProfile, OutcomeId,
};
use crate::maxsprt::{LookSchedule, MonteCarloConfig, SurveillanceModel, ThresholdSearch};

/// The four analyses compared for type 1 and type 2 error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisMode {
    UncalibratedPerLook,
    #[serde(rename = "uncalibrated-maxsprt")]
    UncalibratedMaxSprt,
    CalibratedPerLook,
    #[serde(rename = "calibrated-maxsprt")]
    CalibratedMaxSprt,
}

impl AnalysisMode {
    pub const ALL: [AnalysisMode; 4] = [
        AnalysisMode::UncalibratedPerLook,
        AnalysisMode::UncalibratedMaxSprt,
        AnalysisMode::CalibratedPerLook,
        AnalysisMode::CalibratedMaxSprt,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_calibrated(self) -> bool {
        matches!(self, AnalysisMode::CalibratedPerLook | AnalysisMode::CalibratedMaxSprt)
    }

    pub fn is_maxsprt(self) -> bool {
        matches!(self, AnalysisMode::UncalibratedMaxSprt | AnalysisMode::CalibratedMaxSprt)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AnalysisMode::UncalibratedPerLook => "uncalibrated-per-look",
            AnalysisMode::UncalibratedMaxSprt => "uncalibrated-maxsprt",
            AnalysisMode::CalibratedPerLook => "calibrated-per-look",
            AnalysisMode::CalibratedMaxSprt => "calibrated-maxsprt",
        }
    }
}

impl fmt::Display for AnalysisMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnalysisMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AnalysisMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown analysis mode `{s}`")))
    }
}

/// One value per analysis mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerMode<T>(pub [T; 4]);

impl<T: Copy> PerMode<T> {
    pub fn get(&self, mode: AnalysisMode) -> T {
        self.0[mode.index()]
    }

    pub fn set(&mut self, mode: AnalysisMode, value: T) {
        self.0[mode.index()] = value;
    }
}

/// Cumulative counts for one outcome at one look.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeObservation {
    pub outcome_id: OutcomeId,
    pub data: CountData,
    #[serde(default)]
    pub is_negative_control: bool,
}

/// All outcome data available at one look.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookObservation {
    /// 1-based.
    pub look_index: usize,
    pub outcomes: Vec<OutcomeObservation>,
}

/// How per-outcome likelihoods are represented when fitting and testing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProfileKind {
    Grid(GridSpec),
    NormalApprox,
}

/// Where the calibrated modes get their error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Calibration {
    /// Refit on the negative controls at every look, leaving each control out
    /// of the model used to score it.
    Fitted,
    /// Use this model at every look.
    Fixed(ErrorModel),
}

/// Whether critical values are reported or only compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CvPolicy {
    /// Compute and report `cv` at every informative look.
    Always,
    /// Only decide `llr > cv`, skipping looks that cannot change a signal.
    DecisionOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveillanceConfig {
    pub schedule: LookSchedule,
    /// Per-outcome schedules, e.g. binomial case counts actually observed.
    #[serde(default)]
    pub outcome_schedules: BTreeMap<OutcomeId, LookSchedule>,
    pub mc: MonteCarloConfig,
    pub profile: ProfileKind,
    pub calibration: Calibration,
    pub cv_policy: CvPolicy,
}

impl SurveillanceConfig {
    pub fn new(schedule: LookSchedule, mc: MonteCarloConfig) -> Self {
        SurveillanceConfig {
            schedule,
            outcome_schedules: BTreeMap::new(),
            mc,
            profile: ProfileKind::Grid(GridSpec::default()),
            calibration: Calibration::Fitted,
            cv_policy: CvPolicy::Always,
        }
    }

    fn schedule_for(&self, id: &OutcomeId) -> &LookSchedule {
        self.outcome_schedules.get(id).unwrap_or(&self.schedule)
    }

    pub fn alpha(&self) -> f64 {
        self.schedule.alpha
    }
}

/// Statistics for one outcome at one look. Empty when the outcome has no
/// informative likelihood yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookStats {
    pub look: usize,
    pub informative: bool,
    pub beta_hat: Option<f64>,
    pub se: Option<f64>,
    pub llr: Option<f64>,
    pub cv_uncalibrated: Option<f64>,
    pub cv_calibrated: Option<f64>,
    pub p_uncalibrated: Option<f64>,
    pub p_calibrated: Option<f64>,
    /// Error model used to score this outcome.
    pub error_model: Option<ErrorModel>,
    /// Whether a signal has been declared at this look or earlier.
    pub signaled: PerMode<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeResult {
    pub outcome_id: OutcomeId,
    pub is_negative_control: bool,
    pub looks: Vec<LookStats>,
    pub first_signal_look: PerMode<Option<usize>>,
    pub first_informative_look: Option<usize>,
}

/// Error-model diagnostics for one look.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookDiagnostics {
    pub look: usize,
    pub informative_controls: usize,
    pub model: Option<ErrorModel>,
    /// The fit failed and the most recent successful model was reused.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SurveillanceResult {
    pub outcomes: BTreeMap<OutcomeId, OutcomeResult>,
    pub diagnostics: Vec<LookDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct CvKey {
    increments: Vec<u64>,
    model: (u8, u64),
    alpha: u64,
    error_model: Option<(u64, u64)>,
}

impl CvKey {
    fn new(schedule: &LookSchedule, model: Option<&ErrorModel>) -> Self {
        let tag = match schedule.model {
            SurveillanceModel::Poisson => (0, 0),
            SurveillanceModel::Binomial { exposure_proportion } => (1, exposure_proportion.to_bits()),
        };
        CvKey {
            increments: schedule.expected_increments.iter().map(|e| e.to_bits()).collect(),
            model: tag,
            alpha: schedule.alpha.to_bits(),
            error_model: model.filter(|m| !m.is_null()).map(|m| (m.mean.to_bits(), m.sd.to_bits())),
        }
    }
}

/// Incremental surveillance over a stream of looks.
pub struct Surveillance {
    config: SurveillanceConfig,
    negative_controls: BTreeSet<OutcomeId>,
    result: SurveillanceResult,
    last_counts: HashMap<OutcomeId, CountData>,
    last_full_model: Option<ErrorModel>,
    last_loo_model: HashMap<OutcomeId, ErrorModel>,
    thresholds: HashMap<CvKey, ThresholdSearch>,
}

impl Surveillance {
    pub fn new(config: SurveillanceConfig, negative_controls: BTreeSet<OutcomeId>) -> Result<Self> {
        config.schedule.validate()?;
        for s in config.outcome_schedules.values() {
            s.validate()?;
        }
        config.mc.validate()?;
        if let Calibration::Fixed(m) = &config.calibration {
            m.validate()?;
        }
        Ok(Surveillance {
            config,
            negative_controls,
            result: SurveillanceResult::default(),
            last_counts: HashMap::new(),
            last_full_model: None,
            last_loo_model: HashMap::new(),
            thresholds: HashMap::new(),
        })
    }

    pub fn result(&self) -> &SurveillanceResult {
        &self.result
    }

    pub fn into_result(self) -> SurveillanceResult {
        self.result
    }

    fn looks_done(&self) -> usize {
        self.result.diagnostics.len()
    }

    fn check_look(&self, look: &LookObservation) -> Result<()> {
        let expected = self.looks_done() + 1;
        if look.look_index != expected {
            return Err(Error::Protocol(format!("expected look {expected}, got look {}", look.look_index)));
        }
        let mut seen = BTreeSet::new();
        for o in &look.outcomes {
            if !seen.insert(&o.outcome_id) {
                return Err(Error::Protocol(format!(
                    "outcome `{}` appears twice in look {}",
                    o.outcome_id, look.look_index
                )));
            }
            if look.look_index > self.config.schedule_for(&o.outcome_id).looks() {
                return Err(Error::Protocol(format!(
                    "look {} is beyond the {}-look schedule",
                    look.look_index,
                    self.config.schedule_for(&o.outcome_id).looks()
                )));
            }
            o.data.validate()?;
            if let Some(prev) = self.last_counts.get(&o.outcome_id) {
                let decreasing = match (prev, &o.data) {
                    (CountData::Poisson { observed: a, .. }, CountData::Poisson { observed: b, .. }) => b < a,
                    (
                        CountData::Binomial { exposed: a, total: n, .. },
                        CountData::Binomial { exposed: b, total: m, .. },
                    ) => b < a || m < n,
                    _ => {
                        return Err(Error::Protocol(format!("outcome `{}` changed count model", o.outcome_id)));
                    }
                };
                if decreasing {
                    return Err(Error::Protocol(format!(
                        "cumulative counts for `{}` decrease at look {}",
                        o.outcome_id, look.look_index
                    )));
                }
            }
        }
        Ok(())
    }

    fn profile(&self, id: &OutcomeId, data: &CountData) -> Option<LikelihoodProfile> {
        let built = match self.config.profile {
            ProfileKind::Grid(grid) => profile_from_counts(id.clone(), data, &grid),
            ProfileKind::NormalApprox => normal_profile_from_counts(id.clone(), data),
        };
        built.ok().filter(|p| p.is_usable() && mle_and_se(p).is_ok())
    }

    fn is_control(&self, o: &OutcomeObservation) -> bool {
        o.is_negative_control || self.negative_controls.contains(&o.outcome_id)
    }

    /// Processes the next look and returns the per-outcome statistics for it.
    pub fn push_look(&mut self, look: LookObservation) -> Result<Vec<(OutcomeId, LookStats)>> {
        self.check_look(&look)?;
        let t = look.look_index;

        let profiles: Vec<Option<LikelihoodProfile>> = look
            .outcomes
            .par_iter()
            .map(|o| self.profile(&o.outcome_id, &o.data))
            .collect();

        let control_idx: Vec<usize> = look
            .outcomes
            .iter()
            .enumerate()
            .filter(|(i, o)| self.is_control(o) && profiles[*i].is_some())
            .map(|(i, _)| i)
            .collect();

        let (full_model, loo_models, diag) = match self.config.calibration {
            Calibration::Fixed(m) => (
                Some(m),
                HashMap::new(),
                LookDiagnostics {
                    look: t,
                    informative_controls: control_idx.len(),
                    model: Some(m),
                    fallback: false,
                },
            ),
            Calibration::Fitted => self.fit_models(t, &look, &profiles, &control_idx),
        };

        let models: Vec<Option<ErrorModel>> = look
            .outcomes
            .iter()
            .map(|o| {
                if self.is_control(o) && matches!(self.config.calibration, Calibration::Fitted) {
                    loo_models.get(&o.outcome_id).copied()
                } else {
                    full_model
                }
            })
            .collect();
        let mut stats: Vec<LookStats> = look
            .outcomes
            .par_iter()
            .zip(profiles.par_iter())
            .zip(models.par_iter())
            .map(|((o, profile), model)| self.score(t, o, profile.as_ref(), *model))
            .collect::<Result<_>>()?;
        self.apply_maxsprt(&look, &mut stats)?;

        if let Some(m) = full_model {
            self.last_full_model = Some(m);
        }
        for (id, m) in &loo_models {
            self.last_loo_model.insert(id.clone(), *m);
        }

        let mut out = Vec::with_capacity(stats.len());
        for (o, s) in look.outcomes.iter().zip(stats) {
            let is_control = self.is_control(o);
            let entry = self
                .result
                .outcomes
                .entry(o.outcome_id.clone())
                .or_insert_with(|| OutcomeResult {
                    outcome_id: o.outcome_id.clone(),
                    is_negative_control: false,
                    looks: Vec::new(),
                    first_signal_look: PerMode::default(),
                    first_informative_look: None,
                });
            entry.is_negative_control = is_control;
            if s.informative && entry.first_informative_look.is_none() {
                entry.first_informative_look = Some(t);
            }
            for mode in AnalysisMode::ALL {
                if s.signaled.get(mode) && entry.first_signal_look.get(mode).is_none() {
                    entry.first_signal_look.set(mode, Some(t));
                }
            }
            entry.looks.push(s.clone());
            self.last_counts.insert(o.outcome_id.clone(), o.data);
            out.push((o.outcome_id.clone(), s));
        }
        self.result.diagnostics.push(diag);
        Ok(out)
    }

    fn fit_models(
        &self,
        t: usize,
        look: &LookObservation,
        profiles: &[Option<LikelihoodProfile>],
        control_idx: &[usize],
    ) -> (Option<ErrorModel>, HashMap<OutcomeId, ErrorModel>, LookDiagnostics) {
        let control_profiles: Vec<LikelihoodProfile> = control_idx
            .iter()
            .map(|&i| profiles[i].clone().expect("informative control"))
            .collect();

        let fitted = fit_error_model(&control_profiles).ok();
        let fallback = fitted.is_none();
        let full = fitted.or(self.last_full_model);

        let loo: HashMap<OutcomeId, ErrorModel> = (0..control_profiles.len())
            .into_par_iter()
            .filter_map(|k| {
                let id = &look.outcomes[control_idx[k]].outcome_id;
                let others: Vec<LikelihoodProfile> = control_profiles
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(_, p)| p.clone())
                    .collect();
                let model = fit_error_model(&others).ok().or_else(|| self.last_loo_model.get(id).copied());
                model.map(|m| (id.clone(), m))
            })
            .collect();

        let diag = LookDiagnostics {
            look: t,
            informative_controls: control_profiles.len(),
            model: full,
            fallback,
        };
        if fallback {
            log::warn!("look {t}: error model fit failed on {} controls; reusing last fit", control_profiles.len());
        }
        (full, loo, diag)
    }

    /// Runs the MaxSPRT comparisons for one look. Threshold searches are
    /// shared by every outcome with the same schedule and model and kept while
    /// they are still in use.
    fn apply_maxsprt(&mut self, look: &LookObservation, stats: &mut [LookStats]) -> Result<()> {
        let mut used = BTreeSet::new();
        for (o, st) in look.outcomes.iter().zip(stats.iter_mut()) {
            let Some(llr) = st.llr else { continue };
            let schedule = self.config.schedule_for(&o.outcome_id).clone();
            let modes = [
                (AnalysisMode::UncalibratedMaxSprt, None),
                (AnalysisMode::CalibratedMaxSprt, st.error_model),
            ];
            for (mode, model) in modes {
                if mode.is_calibrated() && model.is_none() {
                    continue;
                }
                let decide_only = self.config.cv_policy == CvPolicy::DecisionOnly;
                if decide_only && (st.signaled.get(mode) || llr <= 0.0) {
                    continue;
                }
                let key = CvKey::new(&schedule, model.as_ref());
                let search = match self.thresholds.entry(key.clone()) {
                    std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::hash_map::Entry::Vacant(e) => {
                        let models = model.filter(|m| !m.is_null());
                        e.insert(ThresholdSearch::new(
                            &schedule,
                            models.as_ref().map(std::slice::from_ref),
                            &self.config.mc,
                        )?)
                    }
                };
                used.insert(key);
                let fired = if decide_only {
                    search.exceeds(llr)
                } else {
                    let cv = search.result().cv;
                    if mode.is_calibrated() {
                        st.cv_calibrated = Some(cv);
                    } else {
                        st.cv_uncalibrated = Some(cv);
                    }
                    llr > cv
                };
                if fired {
                    st.signaled.set(mode, true);
                }
            }
        }
        self.thresholds.retain(|k, _| used.contains(k));
        Ok(())
    }

    fn score(
        &self,
        t: usize,
        o: &OutcomeObservation,
        profile: Option<&LikelihoodProfile>,
        model: Option<ErrorModel>,
    ) -> Result<LookStats> {
        let previous = self
            .result
            .outcomes
            .get(&o.outcome_id)
            .map(|r| r.first_signal_look)
            .unwrap_or_default();
        let mut signaled = PerMode([false; 4]);
        for mode in AnalysisMode::ALL {
            signaled.set(mode, previous.get(mode).is_some());
        }
        let Some(profile) = profile else {
            return Ok(LookStats {
                look: t,
                informative: false,
                beta_hat: None,
                se: None,
                llr: None,
                cv_uncalibrated: None,
                cv_calibrated: None,
                p_uncalibrated: None,
                p_calibrated: None,
                error_model: model,
                signaled,
            });
        };
        let alpha = self.config.alpha();
        let (beta_hat, se) = mle_and_se(profile)?;
        let llr = o.data.llr()?;
        let p_unc = uncalibrated_p(beta_hat, se)?;
        let p_cal = model.map(|m| calibrated_p(beta_hat, se, &m)).transpose()?;

        let now = [
            (AnalysisMode::UncalibratedPerLook, p_unc < alpha),
            (AnalysisMode::CalibratedPerLook, p_cal.is_some_and(|p| p < alpha)),
        ];
        for (mode, fired) in now {
            if fired {
                signaled.set(mode, true);
            }
        }
        Ok(LookStats {
            look: t,
            informative: true,
            beta_hat: Some(beta_hat),
            se: Some(se),
            llr: Some(llr),
            cv_uncalibrated: None,
            cv_calibrated: None,
            p_uncalibrated: Some(p_unc),
            p_calibrated: p_cal,
            error_model: model,
            signaled,
        })
    }
}

/// Runs every look in order.
pub fn run_surveillance<I>(
    config: SurveillanceConfig,
    negative_controls: BTreeSet<OutcomeId>,
    looks: I,
) -> Result<SurveillanceResult>
where
    I: IntoIterator<Item = LookObservation>,
{
    let fitted = matches!(config.calibration, Calibration::Fitted);
    let mut surveillance = Surveillance::new(config, negative_controls)?;
    let mut any_control = false;
    for look in looks {
        any_control |= look.outcomes.iter().any(|o| surveillance.is_control(o));
        if fitted && !any_control {
            return Err(Error::Config(
                "calibrated modes need negative controls, but none were supplied".into(),
            ));
        }
        surveillance.push_look(look)?;
    }
    Ok(surveillance.into_result())
}

/// Fraction of negative controls that ever signaled, per mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Type1Report {
    pub controls: usize,
    pub signaled: PerMode<usize>,
}

impl Type1Report {
    pub fn rate(&self, mode: AnalysisMode) -> Option<f64> {
        (self.controls > 0).then(|| self.signaled.get(mode) as f64 / self.controls as f64)
    }
}

/// Controls count once they have had an informative look.
pub fn type1_report(result: &SurveillanceResult) -> Type1Report {
    let mut report = Type1Report {
        controls: 0,
        signaled: PerMode([0; 4]),
    };
    for r in result.outcomes.values() {
        if !r.is_negative_control || r.first_informative_look.is_none() {
            continue;
        }
        report.controls += 1;
        for mode in AnalysisMode::ALL {
            if r.first_signal_look.get(mode).is_some() {
                report.signaled.0[mode.index()] += 1;
            }
        }
    }
    report
}
