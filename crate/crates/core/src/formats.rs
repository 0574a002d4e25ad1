//! Versioned text formats for inputs and outputs.
//!
//! Tables are comma-separated with a header row, preceded by one comment line
//! `# seqcal <kind> v<version> [key=value ...]`. Schedules are TOML with the
//! same comment line. Readers accept files without the comment line but reject
//! a comment naming another kind or a newer version.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_model::ErrorModel;
use crate::likelihood::{CountData, LikelihoodProfile, OutcomeId};
use crate::maxsprt::{CriticalValueResult, LookSchedule, SurveillanceModel};
use crate::surveillance::{AnalysisMode, LookObservation, OutcomeObservation, SurveillanceResult, Type1Report};

pub const FORMAT_VERSION: u32 = 1;

/// The comment line opening every file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Header {
    pub kind: String,
    pub version: u32,
    pub meta: BTreeMap<String, String>,
}

impl Header {
    pub fn new(kind: &str) -> Self {
        Header {
            kind: kind.to_string(),
            version: FORMAT_VERSION,
            meta: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn render(&self) -> String {
        let mut line = format!("# seqcal {} v{}", self.kind, self.version);
        for (k, v) in &self.meta {
            let _ = write!(line, " {k}={v}");
        }
        line
    }

    /// Parses a header line, or returns `None` for any other comment.
    pub fn parse(line: &str) -> Option<Result<Header>> {
        let rest = line.trim().strip_prefix('#')?.trim();
        let mut words = rest.split_whitespace();
        if words.next() != Some("seqcal") {
            return None;
        }
        let bad = |message: String| Error::Parse { line: 1, message };
        let kind = match words.next() {
            Some(k) => k.to_string(),
            None => return Some(Err(bad("header names no file kind".into()))),
        };
        let version = match words.next().and_then(|v| v.strip_prefix('v')).map(str::parse::<u32>) {
            Some(Ok(v)) => v,
            _ => return Some(Err(bad("header has no version".into()))),
        };
        let mut meta = BTreeMap::new();
        for w in words {
            match w.split_once('=') {
                Some((k, v)) => {
                    meta.insert(k.to_string(), v.to_string());
                }
                None => return Some(Err(bad(format!("malformed header field `{w}`")))),
            }
        }
        Some(Ok(Header { kind, version, meta }))
    }

    fn check(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected a `{kind}` file, found `{}`", self.kind),
            });
        }
        if self.version > FORMAT_VERSION {
            return Err(Error::Parse {
                line: 1,
                message: format!("format version {} is newer than supported {FORMAT_VERSION}", self.version),
            });
        }
        Ok(())
    }
}

fn split_header(text: &str, kind: &str) -> Result<Header> {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    match Header::parse(first) {
        Some(h) => {
            let h = h?;
            h.check(kind)?;
            Ok(h)
        }
        None => Ok(Header::new(kind)),
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    let message = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => match err.field() {
            Some(f) => format!("column {}: {}", f + 1, err.kind()),
            None => err.kind().to_string(),
        },
        _ => e.to_string(),
    };
    Error::Parse { line, message }
}

/// Reads a versioned table of `T` rows.
pub fn read_table<T: DeserializeOwned, R: Read>(mut reader: R, kind: &str) -> Result<(Header, Vec<T>)> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let header = split_header(&text, kind)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(csv_error)?;
    Ok((header, rows))
}

/// Writes a versioned table of `T` rows.
pub fn write_table<T: Serialize, W: Write>(mut writer: W, header: &Header, rows: &[T]) -> Result<()> {
    writeln!(writer, "{}", header.render())?;
    let mut wtr = csv::Writer::from_writer(writer);
    for row in rows {
        wtr.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_table_str<T: DeserializeOwned>(text: &str, kind: &str) -> Result<(Header, Vec<T>)> {
    read_table(text.as_bytes(), kind)
}

pub fn write_table_string<T: Serialize>(header: &Header, rows: &[T]) -> Result<String> {
    let mut buf = Vec::new();
    write_table(&mut buf, header, rows)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

pub mod kind {
    pub const ESTIMATES: &str = "estimates";
    pub const GRID: &str = "grid-profiles";
    pub const SCHEDULE: &str = "schedule";
    pub const LOOKS: &str = "looks";
    pub const CONTROLS: &str = "controls";
    pub const ERROR_MODEL: &str = "error-model";
    pub const CRITICAL_VALUE: &str = "critical-value";
    pub const RESULTS: &str = "results";
    pub const TYPE1: &str = "type1";
    pub const ERROR_RATES: &str = "error-rates";
    pub const CONFOUNDING: &str = "confounding";
    pub const SCENARIOS: &str = "scenarios";
}

/// One negative-control estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub outcome_id: OutcomeId,
    pub log_rr: f64,
    pub se_log_rr: f64,
}

/// One point of a tabulated log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub outcome_id: OutcomeId,
    pub log_rr_grid_point: f64,
    pub log_likelihood: f64,
}

/// Builds profiles from estimates, replacing the normal approximation with
/// the tabulated likelihood for outcomes present in `grid`. Outcomes that
/// appear only in `grid` follow the estimate-file outcomes.
pub fn profiles_from_rows(estimates: &[EstimateRow], grid: &[GridRow]) -> Result<Vec<LikelihoodProfile>> {
    let mut tables: BTreeMap<&OutcomeId, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for g in grid {
        let entry = tables.entry(&g.outcome_id).or_default();
        entry.0.push(g.log_rr_grid_point);
        entry.1.push(g.log_likelihood);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(estimates.len());
    for e in estimates {
        if !seen.insert(&e.outcome_id) {
            return Err(Error::Config(format!("duplicate estimate for outcome `{}`", e.outcome_id)));
        }
        let profile = match tables.remove(&e.outcome_id) {
            Some((points, lls)) => LikelihoodProfile::grid(e.outcome_id.clone(), points, lls),
            None => LikelihoodProfile::normal(e.outcome_id.clone(), e.log_rr, e.se_log_rr),
        };
        out.push(profile.map_err(|err| err.with_context(&format!("outcome `{}`", e.outcome_id)))?);
    }
    for (id, (points, lls)) in tables {
        let profile = LikelihoodProfile::grid(id.clone(), points, lls);
        out.push(profile.map_err(|err| err.with_context(&format!("outcome `{id}`")))?);
    }
    Ok(out)
}

/// `e_t` as one value for every look or one value per look.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Increments {
    Constant(f64),
    PerLook(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    /// `poisson` or `binomial`.
    pub model: String,
    pub t: usize,
    /// Expected events per look (Poisson) or cases per look (binomial).
    pub e_t: Increments,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub alpha: f64,
}

impl ScheduleFile {
    pub fn to_schedule(&self) -> Result<LookSchedule> {
        let increments = match &self.e_t {
            Increments::Constant(e) => vec![*e; self.t],
            Increments::PerLook(v) if v.len() == self.t => v.clone(),
            Increments::PerLook(v) => {
                return Err(Error::Config(format!("e_t has {} entries but t = {}", v.len(), self.t)));
            }
        };
        if self.t == 0 {
            return Err(Error::Config("t must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        let schedule = match (self.model.as_str(), self.p) {
            ("poisson", None) => LookSchedule::poisson(increments, self.alpha),
            ("poisson", Some(_)) => return Err(Error::Config("p applies to the binomial model only".into())),
            ("binomial", Some(p)) => LookSchedule::binomial(increments, p, self.alpha),
            ("binomial", None) => return Err(Error::Config("binomial schedule needs p".into())),
            (other, _) => return Err(Error::Config(format!("unknown model `{other}`"))),
        };
        schedule.map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_schedule(schedule: &LookSchedule) -> Self {
        let (model, p) = match schedule.model {
            SurveillanceModel::Poisson => ("poisson", None),
            SurveillanceModel::Binomial { exposure_proportion } => ("binomial", Some(exposure_proportion)),
        };
        ScheduleFile {
            model: model.to_string(),
            t: schedule.looks(),
            e_t: Increments::PerLook(schedule.expected_increments.clone()),
            p,
            alpha: schedule.alpha,
        }
    }
}

pub fn parse_schedule(text: &str) -> Result<LookSchedule> {
    split_header(text, kind::SCHEDULE)?;
    let file: ScheduleFile = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::Parse {
            line,
            message: e.message().to_string(),
        }
    })?;
    file.to_schedule()
}

pub fn render_schedule(schedule: &LookSchedule) -> Result<String> {
    let body = toml::to_string(&ScheduleFile::from_schedule(schedule)).map_err(|e| Error::Io(e.to_string()))?;
    Ok(format!("{}\n{body}", Header::new(kind::SCHEDULE).render()))
}

/// Cumulative counts for one outcome at one look.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookRow {
    pub outcome_id: OutcomeId,
    pub look: usize,
    pub cumulative_observed: u64,
    #[serde(default)]
    pub cumulative_total: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ControlRow {
    pub outcome_id: OutcomeId,
}

/// Groups look rows into per-look observations, attaching expected counts
/// (Poisson) or the null proportion (binomial) from the schedule.
pub fn looks_from_rows(
    rows: &[LookRow],
    schedule: &LookSchedule,
    controls: &BTreeSet<OutcomeId>,
) -> Result<Vec<LookObservation>> {
    let cumulative = schedule.cumulative_expected();
    let mut by_look: BTreeMap<usize, Vec<OutcomeObservation>> = BTreeMap::new();
    for r in rows {
        let at = |message: String| Error::Config(format!("outcome `{}`, look {}: {message}", r.outcome_id, r.look));
        if r.look == 0 || r.look > schedule.looks() {
            return Err(at(format!("look {} outside 1..={}", r.look, schedule.looks())));
        }
        let data = match (schedule.model, r.cumulative_total) {
            (SurveillanceModel::Poisson, None) => CountData::Poisson {
                observed: r.cumulative_observed,
                expected: cumulative[r.look - 1],
            },
            (SurveillanceModel::Poisson, Some(_)) => {
                return Err(at("cumulative_total is only used by the binomial model".into()));
            }
            (SurveillanceModel::Binomial { exposure_proportion }, Some(total)) => CountData::Binomial {
                exposed: r.cumulative_observed,
                total,
                null_proportion: exposure_proportion,
            },
            (SurveillanceModel::Binomial { .. }, None) => {
                return Err(at("binomial looks need cumulative_total".into()));
            }
        };
        data.validate().map_err(|e| at(e.to_string()))?;
        let look = by_look.entry(r.look).or_default();
        if look.iter().any(|o| o.outcome_id == r.outcome_id) {
            return Err(at("row repeated".into()));
        }
        look.push(OutcomeObservation {
            outcome_id: r.outcome_id.clone(),
            data,
            is_negative_control: controls.contains(&r.outcome_id),
        });
    }
    let last = by_look.keys().next_back().copied().unwrap_or(0);
    (1..=last)
        .map(|t| {
            let outcomes = by_look.remove(&t).ok_or_else(|| Error::Config(format!("looks file has no rows for look {t}")))?;
            Ok(LookObservation { look_index: t, outcomes })
        })
        .collect()
}

/// Single-record output of an error-model fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModelRecord {
    pub mean: f64,
    pub sd: f64,
    pub n_controls: usize,
    pub converged: bool,
}

impl From<ErrorModel> for ErrorModelRecord {
    fn from(m: ErrorModel) -> Self {
        ErrorModelRecord {
            mean: m.mean,
            sd: m.sd,
            n_controls: m.n_controls,
            converged: m.converged,
        }
    }
}

impl From<ErrorModelRecord> for ErrorModel {
    fn from(r: ErrorModelRecord) -> Self {
        ErrorModel {
            n_controls: r.n_controls,
            converged: r.converged,
            ..ErrorModel::fixed(r.mean, r.sd)
        }
    }
}

/// Single-record output of a critical-value computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub cv: f64,
    pub attained_alpha: f64,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    pub calibrated: bool,
    pub model_mean: Option<f64>,
    pub model_sd: Option<f64>,
}

impl CvRecord {
    pub fn new(result: &CriticalValueResult, schedule: &LookSchedule, replicates: usize, seed: u64, model: Option<&ErrorModel>) -> Self {
        CvRecord {
            cv: result.cv,
            attained_alpha: result.attained_alpha,
            alpha: schedule.alpha,
            replicates,
            seed,
            calibrated: model.is_some(),
            model_mean: model.map(|m| m.mean),
            model_sd: model.map(|m| m.sd),
        }
    }
}

/// One outcome at one look of a surveillance run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub outcome_id: OutcomeId,
    pub look: usize,
    pub negative_control: bool,
    pub informative: bool,
    pub beta_hat: Option<f64>,
    pub se: Option<f64>,
    pub llr: Option<f64>,
    pub cv_uncalibrated: Option<f64>,
    pub cv_calibrated: Option<f64>,
    pub p_uncalibrated: Option<f64>,
    pub p_calibrated: Option<f64>,
    pub model_mean: Option<f64>,
    pub model_sd: Option<f64>,
    pub signal_uncalibrated_per_look: bool,
    pub signal_uncalibrated_maxsprt: bool,
    pub signal_calibrated_per_look: bool,
    pub signal_calibrated_maxsprt: bool,
}

pub fn result_rows(result: &SurveillanceResult) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for r in result.outcomes.values() {
        for l in &r.looks {
            rows.push(ResultRow {
                outcome_id: r.outcome_id.clone(),
                look: l.look,
                negative_control: r.is_negative_control,
                informative: l.informative,
                beta_hat: l.beta_hat,
                se: l.se,
                llr: l.llr,
                cv_uncalibrated: l.cv_uncalibrated,
                cv_calibrated: l.cv_calibrated,
                p_uncalibrated: l.p_uncalibrated,
                p_calibrated: l.p_calibrated,
                model_mean: l.error_model.map(|m| m.mean),
                model_sd: l.error_model.map(|m| m.sd),
                signal_uncalibrated_per_look: l.signaled.get(AnalysisMode::UncalibratedPerLook),
                signal_uncalibrated_maxsprt: l.signaled.get(AnalysisMode::UncalibratedMaxSprt),
                signal_calibrated_per_look: l.signaled.get(AnalysisMode::CalibratedPerLook),
                signal_calibrated_maxsprt: l.signaled.get(AnalysisMode::CalibratedMaxSprt),
            });
        }
    }
    rows.sort_by(|a, b| a.look.cmp(&b.look).then_with(|| a.outcome_id.cmp(&b.outcome_id)));
    rows
}

/// Per-mode type 1 summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Type1Row {
    pub mode: AnalysisMode,
    pub controls: usize,
    pub signaled: usize,
    pub rate: Option<f64>,
}

pub fn type1_rows(report: &Type1Report) -> Vec<Type1Row> {
    AnalysisMode::ALL
        .into_iter()
        .map(|mode| Type1Row {
            mode,
            controls: report.controls,
            signaled: report.signaled.get(mode),
            rate: report.rate(mode),
        })
        .collect()
}

/// Scenario listing row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub name: String,
    pub design: String,
    pub sample_size: u64,
    pub error_mean: f64,
    pub error_sd: f64,
    pub outcomes: usize,
    pub looks: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simharness::{ErrorRateRow, RateType};
    use proptest::prelude::*;

    #[test]
    fn header_round_trip() {
        let h = Header::new(kind::CRITICAL_VALUE).with("seed", 7).with("replicates", 1000);
        let line = h.render();
        assert_eq!(line, "# seqcal critical-value v1 replicates=1000 seed=7");
        assert_eq!(Header::parse(&line).unwrap().unwrap(), h);
        assert!(Header::parse("# just a comment").is_none());
    }

    #[test]
    fn wrong_kind_or_future_version_rejected() {
        let text = "# seqcal looks v1\noutcome_id,log_rr,se_log_rr\na,0.1,0.2\n";
        assert!(matches!(read_table_str::<EstimateRow>(text, kind::ESTIMATES), Err(Error::Parse { line: 1, .. })));
        let text = "# seqcal estimates v9\noutcome_id,log_rr,se_log_rr\n";
        assert!(read_table_str::<EstimateRow>(text, kind::ESTIMATES).is_err());
    }

    #[test]
    fn estimates_parse_with_and_without_header() {
        let text = "outcome_id,log_rr,se_log_rr\na,0.1,0.2\nb, -0.3 ,0.25\n";
        let (_, rows) = read_table_str::<EstimateRow>(text, kind::ESTIMATES).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].log_rr, -0.3);
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "# seqcal estimates v1\noutcome_id,log_rr,se_log_rr\na,0.1,0.2\nb,oops,0.25\n";
        match read_table_str::<EstimateRow>(text, kind::ESTIMATES) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_rows_replace_normal_profiles() {
        let est = vec![
            EstimateRow { outcome_id: "a".into(), log_rr: 0.1, se_log_rr: 0.2 },
            EstimateRow { outcome_id: "b".into(), log_rr: 0.0, se_log_rr: 0.3 },
        ];
        let grid: Vec<GridRow> = (-20..=20)
            .map(|i| {
                let x = i as f64 * 0.1;
                GridRow { outcome_id: "b".into(), log_rr_grid_point: x, log_likelihood: -x * x }
            })
            .collect();
        let profiles = profiles_from_rows(&est, &grid).unwrap();
        assert!(matches!(profiles[0].form, crate::likelihood::ProfileForm::NormalApprox { .. }));
        assert!(matches!(profiles[1].form, crate::likelihood::ProfileForm::Grid(_)));
        let orphan = vec![GridRow { outcome_id: "zz".into(), log_rr_grid_point: 0.0, log_likelihood: 0.0 }];
        assert!(profiles_from_rows(&est, &orphan).is_err());
        let grid_only: Vec<GridRow> = (0..5)
            .map(|k| GridRow { outcome_id: "zz".into(), log_rr_grid_point: k as f64 - 2.0, log_likelihood: -((k as f64 - 2.0).powi(2)) })
            .collect();
        assert_eq!(profiles_from_rows(&est, &grid_only).unwrap().len(), est.len() + 1);
    }

    #[test]
    fn schedule_file_forms() {
        let s = parse_schedule("# seqcal schedule v1\nmodel = \"poisson\"\nt = 3\ne_t = 4.0\nalpha = 0.05\n").unwrap();
        assert_eq!(s.expected_increments, vec![4.0; 3]);
        let b = parse_schedule("model = \"binomial\"\nt = 2\ne_t = [10, 12]\np = 0.5\nalpha = 0.05\n").unwrap();
        assert_eq!(b.model, SurveillanceModel::Binomial { exposure_proportion: 0.5 });
        assert_eq!(parse_schedule(&render_schedule(&b).unwrap()).unwrap(), b);
        assert!(matches!(
            parse_schedule("model = \"poisson\"\nt = 2\ne_t = [1]\nalpha = 0.05\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            parse_schedule("model = \"poisson\"\nt = 2\ne_t = 1\nalpha = 0.05\nbogus = 1\n"),
            Err(Error::Parse { line: 5, .. })
        ));
    }

    #[test]
    fn looks_grouped_in_order() {
        let schedule = LookSchedule::poisson(vec![2.0, 3.0], 0.05).unwrap();
        let rows = vec![
            LookRow { outcome_id: "a".into(), look: 2, cumulative_observed: 6, cumulative_total: None },
            LookRow { outcome_id: "a".into(), look: 1, cumulative_observed: 2, cumulative_total: None },
        ];
        let controls = BTreeSet::from([OutcomeId::new("a")]);
        let looks = looks_from_rows(&rows, &schedule, &controls).unwrap();
        assert_eq!(looks.len(), 2);
        assert_eq!(looks[1].outcomes[0].data, CountData::Poisson { observed: 6, expected: 5.0 });
        assert!(looks[0].outcomes[0].is_negative_control);
        let gap = vec![LookRow { outcome_id: "a".into(), look: 2, cumulative_observed: 6, cumulative_total: None }];
        assert!(looks_from_rows(&gap, &schedule, &controls).is_err());
    }

    fn opt() -> impl Strategy<Value = Option<f64>> {
        prop_oneof![Just(None), (-1e3f64..1e3).prop_map(Some)]
    }

    fn id() -> impl Strategy<Value = OutcomeId> {
        "[a-z][a-z0-9_-]{0,8}".prop_map(OutcomeId::new)
    }

    proptest! {
        #[test]
        fn estimates_round_trip(rows in prop::collection::vec((id(), -5f64..5.0, 1e-3f64..3.0), 0..20)) {
            let rows: Vec<EstimateRow> = rows.into_iter()
                .map(|(outcome_id, log_rr, se_log_rr)| EstimateRow { outcome_id, log_rr, se_log_rr })
                .collect();
            let text = write_table_string(&Header::new(kind::ESTIMATES), &rows).unwrap();
            prop_assert_eq!(read_table_str::<EstimateRow>(&text, kind::ESTIMATES).unwrap().1, rows);
        }

        #[test]
        fn cv_record_round_trips(cv in 0f64..30.0, a in 0f64..1.0, s in 1000usize..10_000_000, seed: u64,
                                 m in opt(), sd in opt()) {
            let rec = CvRecord { cv, attained_alpha: a, alpha: 0.05, replicates: s, seed,
                                 calibrated: m.is_some(), model_mean: m, model_sd: sd };
            let h = Header::new(kind::CRITICAL_VALUE).with("seed", seed).with("replicates", s);
            let text = write_table_string(&h, std::slice::from_ref(&rec)).unwrap();
            let (h2, back) = read_table_str::<CvRecord>(&text, kind::CRITICAL_VALUE).unwrap();
            prop_assert_eq!(h2, h);
            prop_assert_eq!(back, vec![rec]);
        }

        #[test]
        fn result_rows_round_trip(id in id(), look in 1usize..50, vals in prop::collection::vec(opt(), 9),
                                  flags in prop::collection::vec(any::<bool>(), 6)) {
            let row = ResultRow {
                outcome_id: id, look, negative_control: flags[0], informative: flags[1],
                beta_hat: vals[0], se: vals[1], llr: vals[2], cv_uncalibrated: vals[3], cv_calibrated: vals[4],
                p_uncalibrated: vals[5], p_calibrated: vals[6], model_mean: vals[7], model_sd: vals[8],
                signal_uncalibrated_per_look: flags[2], signal_uncalibrated_maxsprt: flags[3],
                signal_calibrated_per_look: flags[4], signal_calibrated_maxsprt: flags[5],
            };
            let text = write_table_string(&Header::new(kind::RESULTS), std::slice::from_ref(&row)).unwrap();
            prop_assert_eq!(read_table_str::<ResultRow>(&text, kind::RESULTS).unwrap().1, vec![row]);
        }

        #[test]
        fn error_rate_rows_round_trip(rep in 0usize..100, mode in 0usize..4, eff in 1f64..5.0, t1: bool, v in 0f64..1.0) {
            let row = ErrorRateRow {
                scenario: "hc-small-mu0-sd0".into(), repeat: rep, mode: AnalysisMode::ALL[mode], effect_size: eff,
                rate_type: if t1 { RateType::Type1 } else { RateType::Type2 }, value: v,
            };
            let text = write_table_string(&Header::new(kind::ERROR_RATES), std::slice::from_ref(&row)).unwrap();
            prop_assert_eq!(read_table_str::<ErrorRateRow>(&text, kind::ERROR_RATES).unwrap().1, vec![row]);
        }

        #[test]
        fn look_rows_round_trip(rows in prop::collection::vec((id(), 1usize..20, 0u64..1000, prop::option::of(0u64..5000)), 0..20)) {
            let rows: Vec<LookRow> = rows.into_iter()
                .map(|(outcome_id, look, cumulative_observed, cumulative_total)| LookRow { outcome_id, look, cumulative_observed, cumulative_total })
                .collect();
            let text = write_table_string(&Header::new(kind::LOOKS), &rows).unwrap();
            prop_assert_eq!(read_table_str::<LookRow>(&text, kind::LOOKS).unwrap().1, rows);
        }

        #[test]
        fn error_model_record_round_trips(mean in -2f64..2.0, sd in 0f64..2.0, n in 0usize..500, c: bool) {
            let rec = ErrorModelRecord { mean, sd, n_controls: n, converged: c };
            let text = write_table_string(&Header::new(kind::ERROR_MODEL), std::slice::from_ref(&rec)).unwrap();
            prop_assert_eq!(read_table_str::<ErrorModelRecord>(&text, kind::ERROR_MODEL).unwrap().1, vec![rec]);
            prop_assert_eq!(ErrorModelRecord::from(ErrorModel::from(rec)), rec);
        }
    }
}
