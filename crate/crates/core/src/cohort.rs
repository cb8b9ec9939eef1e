//! Raw vital-sign ingestion, hourly binning, imputation and inclusion.
//!
//! Input is a comma-delimited file with the header
//! `episode_id,age,unit,channel,minute,value`, one raw measurement per row,
//! rows in any order. Annotations arrive in a second file with the header
//! `episode_id,annotation,hour` where `annotation` is `infection` or
//! `refractory_hypotension`. Lines starting with `#` are comments.
//!
//! Hours are indexed on the episode clock: hour 0 is the clock hour that
//! contains the episode's first measurement and hour `h` covers minutes
//! `[60h, 60h + 60)` after that origin. Annotation hours use the same index.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHANNEL_COUNT: usize = 17;
pub const CORE_VITAL_COUNT: usize = 6;
pub const MIN_AGE_YEARS: f64 = 18.0;
pub const MIN_HISTORY_HOURS: usize = 7;
pub const MEDICAL_ICU: &str = "MICU";

/// Measurement channel. The first six are the core vitals used for
/// features; the rest feed the comparator scores and the WBC criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Channel {
    HeartRate,
    Spo2,
    RespRate,
    SystolicBp,
    DiastolicBp,
    Temperature,
    Gcs,
    PfRatio,
    MeanArterialPressure,
    Bilirubin,
    Platelets,
    Creatinine,
    Dopamine,
    Dobutamine,
    Epinephrine,
    Norepinephrine,
    Wbc,
}

impl Channel {
    pub const ALL: [Channel; CHANNEL_COUNT] = [
        Channel::HeartRate,
        Channel::Spo2,
        Channel::RespRate,
        Channel::SystolicBp,
        Channel::DiastolicBp,
        Channel::Temperature,
        Channel::Gcs,
        Channel::PfRatio,
        Channel::MeanArterialPressure,
        Channel::Bilirubin,
        Channel::Platelets,
        Channel::Creatinine,
        Channel::Dopamine,
        Channel::Dobutamine,
        Channel::Epinephrine,
        Channel::Norepinephrine,
        Channel::Wbc,
    ];

    /// Core vitals in feature order: heart rate, SpO2, respiratory rate,
    /// systolic BP, diastolic BP, temperature.
    pub const CORE: [Channel; CORE_VITAL_COUNT] = [
        Channel::HeartRate,
        Channel::Spo2,
        Channel::RespRate,
        Channel::SystolicBp,
        Channel::DiastolicBp,
        Channel::Temperature,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_core(self) -> bool {
        self.index() < CORE_VITAL_COUNT
    }

    /// Canonical name used in files.
    pub fn name(self) -> &'static str {
        match self {
            Channel::HeartRate => "hr",
            Channel::Spo2 => "spo2",
            Channel::RespRate => "rr",
            Channel::SystolicBp => "sbp",
            Channel::DiastolicBp => "dbp",
            Channel::Temperature => "temp",
            Channel::Gcs => "gcs",
            Channel::PfRatio => "pf_ratio",
            Channel::MeanArterialPressure => "map",
            Channel::Bilirubin => "bilirubin",
            Channel::Platelets => "platelets",
            Channel::Creatinine => "creatinine",
            Channel::Dopamine => "dopamine",
            Channel::Dobutamine => "dobutamine",
            Channel::Epinephrine => "epinephrine",
            Channel::Norepinephrine => "norepinephrine",
            Channel::Wbc => "wbc",
        }
    }

    /// Physiologic plausibility bounds (inclusive). Rows outside are rejected.
    pub fn plausible_range(self) -> (f64, f64) {
        match self {
            Channel::HeartRate => (20.0, 300.0),
            Channel::Spo2 => (20.0, 100.0),
            Channel::RespRate => (0.0, 100.0),
            Channel::SystolicBp => (20.0, 300.0),
            Channel::DiastolicBp => (5.0, 250.0),
            Channel::Temperature => (25.0, 45.0),
            Channel::Gcs => (3.0, 15.0),
            Channel::PfRatio => (10.0, 800.0),
            Channel::MeanArterialPressure => (10.0, 250.0),
            Channel::Bilirubin => (0.0, 100.0),
            Channel::Platelets => (0.0, 2000.0),
            Channel::Creatinine => (0.0, 40.0),
            // vasopressor doses in mcg/kg/min; 0 means not running
            Channel::Dopamine | Channel::Dobutamine => (0.0, 100.0),
            Channel::Epinephrine | Channel::Norepinephrine => (0.0, 10.0),
            Channel::Wbc => (0.0, 500.0),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let ch = match key.as_str() {
            "hr" | "heart_rate" => Channel::HeartRate,
            "spo2" => Channel::Spo2,
            "rr" | "resp_rate" | "respiratory_rate" => Channel::RespRate,
            "sbp" | "systolic_bp" => Channel::SystolicBp,
            "dbp" | "diastolic_bp" => Channel::DiastolicBp,
            "temp" | "temperature" => Channel::Temperature,
            "gcs" => Channel::Gcs,
            "pf_ratio" | "pao2_fio2" => Channel::PfRatio,
            "map" | "mean_arterial_pressure" => Channel::MeanArterialPressure,
            "bilirubin" => Channel::Bilirubin,
            "platelets" => Channel::Platelets,
            "creatinine" => Channel::Creatinine,
            "dopamine" => Channel::Dopamine,
            "dobutamine" => Channel::Dobutamine,
            "epinephrine" => Channel::Epinephrine,
            "norepinephrine" => Channel::Norepinephrine,
            "wbc" => Channel::Wbc,
            _ => return Err(Error::Format(format!("unknown channel '{}'", s.trim()))),
        };
        Ok(ch)
    }
}

impl From<Channel> for String {
    fn from(c: Channel) -> String {
        c.name().to_string()
    }
}

impl TryFrom<String> for Channel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VitalSample {
    pub channel: Channel,
    pub minute: u64,
    pub value: f64,
}

/// One hospital admission.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub episode_id: String,
    pub age: f64,
    pub unit: String,
    pub samples: Vec<VitalSample>,
    pub infection_suspected_hours: BTreeSet<usize>,
    pub fluid_refractory_hypotension_hours: BTreeSet<usize>,
}

impl Episode {
    pub fn new(episode_id: impl Into<String>, age: f64, unit: impl Into<String>) -> Self {
        Self {
            episode_id: episode_id.into(),
            age,
            unit: unit.into(),
            samples: Vec::new(),
            infection_suspected_hours: BTreeSet::new(),
            fluid_refractory_hypotension_hours: BTreeSet::new(),
        }
    }

    /// Hour count of the episode's grid, `None` if there are no samples.
    pub fn span_hours(&self) -> Option<usize> {
        let first = self.samples.iter().map(|s| s.minute).min()?;
        let last = self.samples.iter().map(|s| s.minute).max()?;
        let origin = first - first % 60;
        Some(((last - origin) / 60) as usize + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

/// Row-level problems found while parsing. Rows listed here were skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    pub errors: Vec<RowError>,
}

impl ParseReport {
    fn reject(&mut self, line: u64, message: impl Into<String>) {
        self.errors.push(RowError {
            line,
            message: message.into(),
        });
    }

    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input)
}

fn header_positions(headers: &csv::StringRecord, expected: &[&str]) -> Result<Vec<usize>> {
    expected
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Format(format!("missing column '{name}' in header")))
        })
        .collect()
}

/// Parses a vitals stream into one [`Episode`] per distinct `episode_id`, in
/// order of first appearance, with samples sorted by time. Malformed rows are
/// skipped and reported; only an unreadable stream or header is fatal.
pub fn parse_vitals<R: Read>(input: R) -> Result<(Vec<Episode>, ParseReport)> {
    let mut reader = csv_reader(input);
    let headers = reader.headers()?.clone();
    let cols = header_positions(&headers, &["episode_id", "age", "unit", "channel", "minute", "value"])?;

    let mut report = ParseReport::default();
    let mut episodes: Vec<Episode> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();

    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                report.rows_read += 1;
                let line = e.position().map_or(0, |p| p.line());
                report.reject(line, e.to_string());
                continue;
            }
        };
        report.rows_read += 1;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(cols[i]).unwrap_or("");

        let id = field(0);
        if id.is_empty() {
            report.reject(line, "empty episode_id");
            continue;
        }
        let age: f64 = match field(1).parse() {
            Ok(a) if f64::is_finite(a) && a >= 0.0 => a,
            _ => {
                report.reject(line, format!("invalid age '{}'", field(1)));
                continue;
            }
        };
        let unit = field(2);
        let channel: Channel = match field(3).parse() {
            Ok(c) => c,
            Err(e) => {
                report.reject(line, e.to_string());
                continue;
            }
        };
        let minute: u64 = match field(4).parse() {
            Ok(m) => m,
            Err(_) => {
                report.reject(line, format!("invalid minute '{}'", field(4)));
                continue;
            }
        };
        let value: f64 = match field(5).parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                report.reject(line, format!("non-numeric value '{}'", field(5)));
                continue;
            }
        };
        let (lo, hi) = channel.plausible_range();
        if value < lo || value > hi {
            report.reject(
                line,
                format!("{channel} value {value} outside plausible range [{lo}, {hi}]"),
            );
            continue;
        }

        let idx = match by_id.get(id) {
            Some(&i) => {
                let ep = &episodes[i];
                if ep.age != age || ep.unit != unit {
                    report.reject(line, format!("conflicting age/unit for episode '{id}'"));
                    continue;
                }
                i
            }
            None => {
                episodes.push(Episode::new(id, age, unit));
                by_id.insert(id.to_string(), episodes.len() - 1);
                episodes.len() - 1
            }
        };
        episodes[idx].samples.push(VitalSample {
            channel,
            minute,
            value,
        });
        report.rows_accepted += 1;
    }

    for ep in &mut episodes {
        sort_samples(&mut ep.samples);
    }
    Ok((episodes, report))
}

fn sort_samples(samples: &mut [VitalSample]) {
    samples.sort_by(|a, b| {
        a.minute
            .cmp(&b.minute)
            .then(a.channel.cmp(&b.channel))
            .then(a.value.total_cmp(&b.value))
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationKind {
    Infection,
    RefractoryHypotension,
}

impl FromStr for AnnotationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "infection" => Ok(AnnotationKind::Infection),
            "refractory_hypotension" => Ok(AnnotationKind::RefractoryHypotension),
            other => Err(Error::Format(format!("unknown annotation '{other}'"))),
        }
    }
}

impl AnnotationKind {
    pub fn name(self) -> &'static str {
        match self {
            AnnotationKind::Infection => "infection",
            AnnotationKind::RefractoryHypotension => "refractory_hypotension",
        }
    }
}

/// Reads an annotation stream and attaches each row to its episode. Rows
/// naming an unknown episode or an hour outside the episode span are
/// reported and skipped.
pub fn attach_annotations<R: Read>(episodes: &mut [Episode], input: R) -> Result<ParseReport> {
    let mut reader = csv_reader(input);
    let headers = reader.headers()?.clone();
    let cols = header_positions(&headers, &["episode_id", "annotation", "hour"])?;
    let index: HashMap<String, usize> = episodes
        .iter()
        .enumerate()
        .map(|(i, e)| (e.episode_id.clone(), i))
        .collect();
    let spans: Vec<Option<usize>> = episodes.iter().map(Episode::span_hours).collect();

    let mut report = ParseReport::default();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                report.rows_read += 1;
                report.reject(e.position().map_or(0, |p| p.line()), e.to_string());
                continue;
            }
        };
        report.rows_read += 1;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(cols[i]).unwrap_or("");

        let Some(&ep) = index.get(field(0)) else {
            report.reject(line, format!("unknown episode '{}'", field(0)));
            continue;
        };
        let kind: AnnotationKind = match field(1).parse() {
            Ok(k) => k,
            Err(e) => {
                report.reject(line, e.to_string());
                continue;
            }
        };
        let hour: usize = match field(2).parse() {
            Ok(h) => h,
            Err(_) => {
                report.reject(line, format!("invalid hour '{}'", field(2)));
                continue;
            }
        };
        match spans[ep] {
            Some(span) if hour < span => {}
            _ => {
                report.reject(line, format!("hour {hour} outside episode '{}' span", field(0)));
                continue;
            }
        }
        let target = match kind {
            AnnotationKind::Infection => &mut episodes[ep].infection_suspected_hours,
            AnnotationKind::RefractoryHypotension => {
                &mut episodes[ep].fluid_refractory_hypotension_hours
            }
        };
        target.insert(hour);
        report.rows_accepted += 1;
    }
    Ok(report)
}

/// Cell values of every channel at one hour; `None` is missing.
pub type HourCells = [Option<f64>; CHANNEL_COUNT];

/// Dense hour-by-channel matrix for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyGrid {
    pub episode_id: String,
    pub origin_minute: u64,
    pub cells: Vec<HourCells>,
    pub observed: Vec<[bool; CHANNEL_COUNT]>,
}

impl HourlyGrid {
    pub fn hours(&self) -> usize {
        self.cells.len()
    }

    pub fn get(&self, hour: usize, channel: Channel) -> Option<f64> {
        self.cells.get(hour).and_then(|row| row[channel.index()])
    }

    pub fn is_observed(&self, hour: usize, channel: Channel) -> bool {
        self.observed
            .get(hour)
            .is_some_and(|row| row[channel.index()])
    }

    pub fn hour(&self, hour: usize) -> &HourCells {
        &self.cells[hour]
    }

    pub fn channel_observed(&self, channel: Channel) -> bool {
        self.observed.iter().any(|row| row[channel.index()])
    }

    /// True when every core-vital cell holds a value.
    pub fn core_complete(&self) -> bool {
        self.cells
            .iter()
            .all(|row| Channel::CORE.iter().all(|c| row[c.index()].is_some()))
    }
}

/// Bins raw samples into hourly means.
pub fn bin_hourly(episode: &Episode) -> Result<HourlyGrid> {
    if episode.samples.is_empty() {
        return Err(Error::NoSamples {
            episode: episode.episode_id.clone(),
        });
    }
    // sorted copy so the floating-point sums do not depend on input order
    let mut samples = episode.samples.clone();
    sort_samples(&mut samples);

    let first = samples[0].minute;
    let origin = first - first % 60;
    let last = samples[samples.len() - 1].minute;
    let hours = ((last - origin) / 60) as usize + 1;

    let mut sums = vec![[0.0f64; CHANNEL_COUNT]; hours];
    let mut counts = vec![[0u32; CHANNEL_COUNT]; hours];
    for s in &samples {
        let h = ((s.minute - origin) / 60) as usize;
        sums[h][s.channel.index()] += s.value;
        counts[h][s.channel.index()] += 1;
    }

    let mut cells = vec![[None; CHANNEL_COUNT]; hours];
    let mut observed = vec![[false; CHANNEL_COUNT]; hours];
    for h in 0..hours {
        for c in 0..CHANNEL_COUNT {
            if counts[h][c] > 0 {
                cells[h][c] = Some(sums[h][c] / f64::from(counts[h][c]));
                observed[h][c] = true;
            }
        }
    }
    Ok(HourlyGrid {
        episode_id: episode.episode_id.clone(),
        origin_minute: origin,
        cells,
        observed,
    })
}

/// Carry-forward imputation with back-fill for leading gaps.
///
/// Core vitals must have at least one observation. Extended channels that
/// were never observed stay missing.
pub fn impute(grid: &HourlyGrid) -> Result<HourlyGrid> {
    let mut out = grid.clone();
    for channel in Channel::ALL {
        let c = channel.index();
        let Some(first) = out.cells.iter().position(|row| row[c].is_some()) else {
            if channel.is_core() {
                return Err(Error::InclusionViolated {
                    episode: grid.episode_id.clone(),
                    channel: channel.name().to_string(),
                });
            }
            continue;
        };
        let lead = out.cells[first][c];
        for row in &mut out.cells[..first] {
            row[c] = lead;
        }
        let mut last = lead;
        for row in &mut out.cells[first..] {
            match row[c] {
                Some(_) => last = row[c],
                None => row[c] = last,
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Age,
    Unit,
    MissingVital(Channel),
    History,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExclusionReason::Age => f.write_str("age"),
            ExclusionReason::Unit => f.write_str("unit"),
            ExclusionReason::MissingVital(c) => write!(f, "missing_vital:{c}"),
            ExclusionReason::History => f.write_str("history"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InclusionVerdict {
    Included,
    Excluded(ExclusionReason),
}

impl InclusionVerdict {
    pub fn is_included(&self) -> bool {
        matches!(self, InclusionVerdict::Included)
    }
}

/// Checks the cohort inclusion criteria in order: adult age, medical ICU,
/// every core vital observed, and for positive episodes at least
/// [`MIN_HISTORY_HOURS`] calendar hours on the grid before the first positive
/// hour. The first failing criterion is reported.
pub fn apply_inclusion(
    episode: &Episode,
    grid: &HourlyGrid,
    first_positive_hour: Option<usize>,
) -> InclusionVerdict {
    if episode.age < MIN_AGE_YEARS {
        return InclusionVerdict::Excluded(ExclusionReason::Age);
    }
    if !episode.unit.eq_ignore_ascii_case(MEDICAL_ICU) {
        return InclusionVerdict::Excluded(ExclusionReason::Unit);
    }
    if let Some(missing) = Channel::CORE.iter().find(|c| !grid.channel_observed(**c)) {
        return InclusionVerdict::Excluded(ExclusionReason::MissingVital(*missing));
    }
    if first_positive_hour.is_some_and(|h| h < MIN_HISTORY_HOURS) {
        return InclusionVerdict::Excluded(ExclusionReason::History);
    }
    InclusionVerdict::Included
}

#[cfg(test)]
mod tests {
    use super::*;

    fn episode_with(samples: &[(Channel, u64, f64)]) -> Episode {
        let mut ep = Episode::new("e1", 40.0, "MICU");
        ep.samples = samples
            .iter()
            .map(|&(channel, minute, value)| VitalSample {
                channel,
                minute,
                value,
            })
            .collect();
        ep
    }

    fn all_core_at(minute: u64) -> Vec<(Channel, u64, f64)> {
        Channel::CORE.iter().map(|&c| (c, minute, 50.0f64.max(c.plausible_range().0))).collect()
    }

    #[test]
    fn parse_two_rows_one_episode() {
        let data = "episode_id,age,unit,channel,minute,value\n\
                    e1,60,MICU,HR,5,88\n\
                    e1,60,MICU,temp,3,37.2\n";
        let (eps, report) = parse_vitals(data.as_bytes()).unwrap();
        assert!(report.is_clean());
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].samples.len(), 2);
        // sorted by time
        assert_eq!(eps[0].samples[0].channel, Channel::Temperature);
    }

    #[test]
    fn unknown_channel_is_row_error() {
        let data = "episode_id,age,unit,channel,minute,value\n\
                    e1,60,MICU,hr,5,88\n\
                    e1,60,MICU,xyz,6,1\n";
        let (eps, report) = parse_vitals(data.as_bytes()).unwrap();
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].line, 3);
        assert!(report.errors[0].message.contains("xyz"));
        assert_eq!(eps[0].samples.len(), 1);
    }

    #[test]
    fn non_numeric_and_implausible_values_rejected() {
        let data = "episode_id,age,unit,channel,minute,value\n\
                    e1,60,MICU,hr,5,abc\n\
                    e1,60,MICU,hr,6,350\n\
                    e1,60,MICU,hr,7,NaN\n\
                    e1,60,MICU,hr,8,80\n";
        let (eps, report) = parse_vitals(data.as_bytes()).unwrap();
        assert_eq!(report.errors.len(), 3);
        assert_eq!(report.rows_accepted, 1);
        assert_eq!(eps[0].samples.len(), 1);
    }

    #[test]
    fn missing_header_column_is_fatal() {
        let data = "episode_id,age,channel,minute,value\n";
        assert!(matches!(parse_vitals(data.as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn annotations_attach_and_validate_span() {
        let data = "episode_id,age,unit,channel,minute,value\n\
                    e1,60,MICU,hr,0,80\n\
                    e1,60,MICU,hr,130,80\n";
        let (mut eps, _) = parse_vitals(data.as_bytes()).unwrap();
        let ann = "episode_id,annotation,hour\n\
                   e1,infection,1\n\
                   e1,refractory_hypotension,2\n\
                   e1,infection,3\n\
                   e2,infection,0\n\
                   e1,fever,0\n";
        let report = attach_annotations(&mut eps, ann.as_bytes()).unwrap();
        assert_eq!(report.rows_accepted, 2);
        assert_eq!(report.errors.len(), 3);
        assert_eq!(eps[0].infection_suspected_hours, BTreeSet::from([1]));
        assert_eq!(eps[0].fluid_refractory_hypotension_hours, BTreeSet::from([2]));
    }

    #[test]
    fn hourly_mean() {
        let ep = episode_with(&[(Channel::HeartRate, 10, 98.0), (Channel::HeartRate, 40, 102.0)]);
        let g = bin_hourly(&ep).unwrap();
        assert_eq!(g.hours(), 1);
        assert_eq!(g.get(0, Channel::HeartRate), Some(100.0));
        assert!(g.is_observed(0, Channel::HeartRate));
        assert!(!g.is_observed(0, Channel::Spo2));
    }

    #[test]
    fn single_sample_cell() {
        let ep = episode_with(&[(Channel::Temperature, 0, 37.3)]);
        let g = bin_hourly(&ep).unwrap();
        assert_eq!(g.get(0, Channel::Temperature), Some(37.3));
    }

    #[test]
    fn window_boundary_splits_hours() {
        let ep = episode_with(&[(Channel::HeartRate, 59, 80.0), (Channel::HeartRate, 61, 90.0)]);
        let g = bin_hourly(&ep).unwrap();
        assert_eq!(g.hours(), 2);
        assert_eq!(g.get(0, Channel::HeartRate), Some(80.0));
        assert_eq!(g.get(1, Channel::HeartRate), Some(90.0));
    }

    #[test]
    fn hour_origin_follows_first_measurement() {
        let ep = episode_with(&[(Channel::HeartRate, 130, 80.0), (Channel::HeartRate, 185, 90.0)]);
        let g = bin_hourly(&ep).unwrap();
        assert_eq!(g.origin_minute, 120);
        assert_eq!(g.hours(), 2);
    }

    #[test]
    fn empty_episode_errors() {
        let ep = Episode::new("x", 50.0, "MICU");
        assert!(matches!(bin_hourly(&ep), Err(Error::NoSamples { .. })));
    }

    fn hr_only_grid(values: &[Option<f64>]) -> HourlyGrid {
        let mut cells = vec![[None; CHANNEL_COUNT]; values.len()];
        let mut observed = vec![[false; CHANNEL_COUNT]; values.len()];
        for (h, v) in values.iter().enumerate() {
            for c in Channel::CORE {
                cells[h][c.index()] = Some(1.0);
                observed[h][c.index()] = true;
            }
            cells[h][Channel::HeartRate.index()] = *v;
            observed[h][Channel::HeartRate.index()] = v.is_some();
        }
        HourlyGrid {
            episode_id: "g".into(),
            origin_minute: 0,
            cells,
            observed,
        }
    }

    fn hr_column(g: &HourlyGrid) -> Vec<Option<f64>> {
        (0..g.hours()).map(|h| g.get(h, Channel::HeartRate)).collect()
    }

    #[test]
    fn impute_carry_forward_and_back_fill() {
        let g = hr_only_grid(&[None, Some(5.0), None, Some(7.0)]);
        let out = impute(&g).unwrap();
        assert_eq!(hr_column(&out), vec![Some(5.0), Some(5.0), Some(5.0), Some(7.0)]);
        assert_eq!(out.observed, g.observed);
    }

    #[test]
    fn impute_back_fill_only() {
        let g = hr_only_grid(&[None, None, Some(3.0)]);
        assert_eq!(hr_column(&impute(&g).unwrap()), vec![Some(3.0); 3]);
    }

    #[test]
    fn impute_identity_on_full_channel() {
        let g = hr_only_grid(&[Some(1.0), Some(2.0), Some(3.0)]);
        assert_eq!(impute(&g).unwrap(), g);
    }

    #[test]
    fn impute_rejects_unobserved_core_vital() {
        let g = hr_only_grid(&[None, None]);
        assert!(matches!(impute(&g), Err(Error::InclusionViolated { .. })));
    }

    #[test]
    fn impute_leaves_absent_extended_channel_missing() {
        let g = hr_only_grid(&[Some(1.0), None]);
        let out = impute(&g).unwrap();
        assert!(out.get(1, Channel::Gcs).is_none());
        assert!(out.core_complete());
    }

    #[test]
    fn inclusion_verdicts() {
        let mut ep = episode_with(&all_core_at(0));
        let g = bin_hourly(&ep).unwrap();
        assert_eq!(apply_inclusion(&ep, &g, None), InclusionVerdict::Included);
        assert_eq!(
            apply_inclusion(&ep, &g, Some(6)),
            InclusionVerdict::Excluded(ExclusionReason::History)
        );
        assert_eq!(apply_inclusion(&ep, &g, Some(7)), InclusionVerdict::Included);
        ep.age = 17.0;
        assert_eq!(
            apply_inclusion(&ep, &g, None),
            InclusionVerdict::Excluded(ExclusionReason::Age)
        );
        ep.age = 40.0;
        ep.unit = "SICU".into();
        assert_eq!(
            apply_inclusion(&ep, &g, None),
            InclusionVerdict::Excluded(ExclusionReason::Unit)
        );
    }

    #[test]
    fn inclusion_missing_vital() {
        let mut samples = all_core_at(0);
        samples.retain(|s| s.0 != Channel::Spo2);
        let ep = episode_with(&samples);
        let g = bin_hourly(&ep).unwrap();
        assert_eq!(
            apply_inclusion(&ep, &g, None),
            InclusionVerdict::Excluded(ExclusionReason::MissingVital(Channel::Spo2))
        );
    }
}
