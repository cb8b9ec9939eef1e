//! Seeded synthetic cohorts with planted sepsis trajectories.
//!
//! Septic episodes drift linearly from their personal baseline over
//! `lead_hours` ending at the onset hour, then stay at the drifted level
//! until discharge. Suspected infection is annotated from onset to the end of
//! the stay; septic-shock episodes also carry refractory-hypotension
//! annotations over the same hours. Negative episodes are stationary noise
//! around their baselines. A configurable fraction of them are "unstable":
//! they carry fixed derangements (tachycardia, tachypnea, hypotension,
//! fever, depressed GCS) without infection.
//!
//! Output uses the cohort module's vitals and annotation formats. Every
//! episode draws from its own derived seed, so generation order does not
//! affect the bytes written.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Channel, HourCells, CHANNEL_COUNT, MEDICAL_ICU, MIN_HISTORY_HOURS};
use crate::config::sha256_hex;
use crate::error::{Error, Result};
use crate::gold::{sirs_count, BandTables, Category};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HourRange {
    pub min: usize,
    pub max: usize,
}

impl HourRange {
    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VitalProfile {
    /// Population mean of the per-episode baseline.
    pub mean: f64,
    /// Between-episode standard deviation of the baseline.
    pub between_std: f64,
    /// Within-episode measurement noise.
    pub noise_std: f64,
}

/// Baselines for the six core vitals plus GCS and labs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Baselines {
    pub hr: VitalProfile,
    pub spo2: VitalProfile,
    pub rr: VitalProfile,
    pub sbp: VitalProfile,
    pub dbp: VitalProfile,
    pub temp: VitalProfile,
    pub wbc: VitalProfile,
    pub platelets: VitalProfile,
    pub creatinine: VitalProfile,
    pub bilirubin: VitalProfile,
    pub pf_ratio: VitalProfile,
}

const fn vp(mean: f64, between_std: f64, noise_std: f64) -> VitalProfile {
    VitalProfile {
        mean,
        between_std,
        noise_std,
    }
}

impl Default for Baselines {
    fn default() -> Self {
        Self {
            hr: vp(80.0, 7.0, 4.0),
            spo2: vp(97.0, 1.0, 0.8),
            rr: vp(16.0, 2.0, 1.5),
            sbp: vp(122.0, 11.0, 6.0),
            dbp: vp(68.0, 6.0, 4.0),
            temp: vp(36.9, 0.25, 0.2),
            wbc: vp(8.0, 1.8, 0.8),
            platelets: vp(230.0, 45.0, 10.0),
            creatinine: vp(0.9, 0.2, 0.05),
            bilirubin: vp(0.7, 0.2, 0.05),
            pf_ratio: vp(400.0, 40.0, 15.0),
        }
    }
}

/// Additive shift reached at the end of the ramp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Drift {
    pub hr: f64,
    pub spo2: f64,
    pub rr: f64,
    pub sbp: f64,
    pub dbp: f64,
    pub temp: f64,
    pub gcs: f64,
    pub wbc: f64,
    pub platelets: f64,
    pub creatinine: f64,
    pub bilirubin: f64,
    pub pf_ratio: f64,
}

impl Drift {
    fn is_zero(&self) -> bool {
        [
            self.hr,
            self.spo2,
            self.rr,
            self.sbp,
            self.dbp,
            self.temp,
            self.gcs,
            self.wbc,
            self.platelets,
            self.creatinine,
            self.bilirubin,
            self.pf_ratio,
        ]
        .iter()
        .all(|v| *v == 0.0)
    }

    fn values(&self) -> [f64; 12] {
        [
            self.hr,
            self.spo2,
            self.rr,
            self.sbp,
            self.dbp,
            self.temp,
            self.gcs,
            self.wbc,
            self.platelets,
            self.creatinine,
            self.bilirubin,
            self.pf_ratio,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftProfiles {
    pub sepsis: Drift,
    pub severe_sepsis: Drift,
    pub septic_shock: Drift,
}

impl DriftProfiles {
    pub fn get(&self, c: Category) -> &Drift {
        match c {
            Category::Sepsis => &self.sepsis,
            Category::SevereSepsis => &self.severe_sepsis,
            Category::SepticShock => &self.septic_shock,
        }
    }

    /// No drift anywhere: septic-designated episodes look like negatives.
    pub fn zero() -> Self {
        Self {
            sepsis: Drift::default(),
            severe_sepsis: Drift::default(),
            septic_shock: Drift::default(),
        }
    }
}

impl Default for DriftProfiles {
    fn default() -> Self {
        let sepsis = Drift {
            hr: 20.0,
            spo2: -3.0,
            rr: 3.0,
            sbp: -8.0,
            dbp: -9.0,
            temp: 1.5,
            wbc: 6.0,
            ..Drift::default()
        };
        let severe_sepsis = Drift {
            sbp: -44.0,
            dbp: -16.0,
            platelets: -40.0,
            creatinine: 0.4,
            ..sepsis.clone()
        };
        let septic_shock = Drift {
            hr: 24.0,
            spo2: -4.0,
            sbp: -52.0,
            dbp: -20.0,
            platelets: -70.0,
            creatinine: 0.8,
            bilirubin: 0.6,
            pf_ratio: -80.0,
            ..severe_sepsis.clone()
        };
        Self {
            sepsis,
            severe_sepsis,
            septic_shock,
        }
    }
}

/// Stationary derangements of unstable negatives. Each is applied
/// independently with probability `probability`; at least one always is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnstableProfile {
    pub fraction: f64,
    pub probability: f64,
    pub tachycardia: f64,
    pub tachypnea: f64,
    pub hypotension: f64,
    pub fever: f64,
    pub gcs_drop: f64,
}

impl Default for UnstableProfile {
    fn default() -> Self {
        Self {
            fraction: 0.45,
            probability: 0.5,
            tachycardia: 24.0,
            tachypnea: 9.0,
            hypotension: -45.0,
            fever: 1.7,
            gcs_drop: -3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeCounts {
    pub sepsis: usize,
    pub severe_sepsis: usize,
    pub septic_shock: usize,
    pub negative: usize,
}

impl EpisodeCounts {
    pub fn septic(&self) -> usize {
        self.sepsis + self.severe_sepsis + self.septic_shock
    }

    pub fn total(&self) -> usize {
        self.septic() + self.negative
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub counts: EpisodeCounts,
    /// Stay length of negative episodes.
    pub stay_hours: HourRange,
    /// Onset hour of septic episodes.
    pub onset_hour: HourRange,
    /// Hours a septic episode continues after onset (onset hour excluded).
    pub post_onset_hours: HourRange,
    pub lead_hours: usize,
    /// Probability that a core vital is charted in a given hour.
    pub vital_observe_prob: f64,
    pub gcs_observe_prob: f64,
    pub lab_observe_prob: f64,
    /// Probability of a second measurement in a charted hour.
    pub repeat_prob: f64,
    pub baselines: Baselines,
    pub drift: DriftProfiles,
    pub unstable: UnstableProfile,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            counts: EpisodeCounts {
                sepsis: 100,
                severe_sepsis: 100,
                septic_shock: 100,
                negative: 1000,
            },
            stay_hours: HourRange { min: 16, max: 40 },
            onset_hour: HourRange { min: 8, max: 30 },
            post_onset_hours: HourRange { min: 3, max: 8 },
            lead_hours: 6,
            vital_observe_prob: 0.85,
            gcs_observe_prob: 0.3,
            lab_observe_prob: 0.06,
            repeat_prob: 0.15,
            baselines: Baselines::default(),
            drift: DriftProfiles::default(),
            unstable: UnstableProfile::default(),
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate(BandTables::standard())?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 (hex) of the canonical JSON form of this configuration.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("configuration serializes").as_bytes())
    }

    /// Structural checks, then label reachability: a non-zero drift profile
    /// must push the mean septic trajectory across at least `sirs_min` SIRS
    /// criteria, and severe-sepsis/shock profiles must bring mean systolic BP
    /// under the severe threshold.
    pub fn validate(&self, bands: &BandTables) -> Result<()> {
        check_prob("vital_observe_prob", self.vital_observe_prob)?;
        check_prob("gcs_observe_prob", self.gcs_observe_prob)?;
        check_prob("lab_observe_prob", self.lab_observe_prob)?;
        check_prob("repeat_prob", self.repeat_prob)?;
        check_prob("unstable.fraction", self.unstable.fraction)?;
        check_prob("unstable.probability", self.unstable.probability)?;
        let b = &self.baselines;
        for (name, p) in [
            ("hr", b.hr),
            ("spo2", b.spo2),
            ("rr", b.rr),
            ("sbp", b.sbp),
            ("dbp", b.dbp),
            ("temp", b.temp),
            ("wbc", b.wbc),
            ("platelets", b.platelets),
            ("creatinine", b.creatinine),
            ("bilirubin", b.bilirubin),
            ("pf_ratio", b.pf_ratio),
        ] {
            if !(p.between_std >= 0.0 && p.noise_std >= 0.0) || !p.mean.is_finite() {
                return Err(Error::Config(format!("baselines.{name}: standard deviations must be >= 0")));
            }
        }
        if self.counts.septic() == 0 || self.counts.negative == 0 {
            return Err(Error::Config("at least one septic and one negative episode are required".into()));
        }
        for (name, r) in [
            ("stay_hours", self.stay_hours),
            ("onset_hour", self.onset_hour),
            ("post_onset_hours", self.post_onset_hours),
        ] {
            if r.min > r.max {
                return Err(Error::Config(format!("{name}: min {} exceeds max {}", r.min, r.max)));
            }
        }
        if self.stay_hours.min < 3 {
            return Err(Error::Config("stay_hours.min must be at least 3".into()));
        }
        if self.onset_hour.min < MIN_HISTORY_HOURS {
            return Err(Error::Config(format!(
                "onset_hour.min must be at least {MIN_HISTORY_HOURS} so septic episodes pass inclusion"
            )));
        }
        if self.lead_hours == 0 {
            return Err(Error::Config("lead_hours must be positive".into()));
        }

        for cat in Category::ALL {
            let d = self.drift.get(cat);
            if d.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("drift.{cat} has a non-finite amplitude")));
            }
            let count = match cat {
                Category::Sepsis => self.counts.sepsis,
                Category::SevereSepsis => self.counts.severe_sepsis,
                Category::SepticShock => self.counts.septic_shock,
            };
            if count == 0 || d.is_zero() {
                continue;
            }
            let mut cells: HourCells = [None; CHANNEL_COUNT];
            cells[Channel::HeartRate.index()] = Some(b.hr.mean + d.hr);
            cells[Channel::RespRate.index()] = Some(b.rr.mean + d.rr);
            cells[Channel::Temperature.index()] = Some(b.temp.mean + d.temp);
            cells[Channel::Wbc.index()] = Some(b.wbc.mean + d.wbc);
            let sirs = sirs_count(&cells, bands);
            if sirs < bands.labeling.sirs_min {
                return Err(Error::UnreachableLabel(format!(
                    "drift.{cat} reaches {sirs} SIRS criteria on average, {} needed",
                    bands.labeling.sirs_min
                )));
            }
            let sbp = b.sbp.mean + d.sbp;
            if cat != Category::Sepsis && sbp >= bands.labeling.severe_sbp_below {
                return Err(Error::UnreachableLabel(format!(
                    "drift.{cat} leaves mean systolic BP at {sbp:.1}, not below {}",
                    bands.labeling.severe_sbp_below
                )));
            }
        }
        Ok(())
    }
}

/// Designed class of a synthetic episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthClass {
    Negative,
    Unstable,
    Sepsis,
    SevereSepsis,
    SepticShock,
}

impl SynthClass {
    pub fn name(self) -> &'static str {
        match self {
            SynthClass::Negative => "negative",
            SynthClass::Unstable => "unstable",
            SynthClass::Sepsis => "sepsis",
            SynthClass::SevereSepsis => "severe_sepsis",
            SynthClass::SepticShock => "septic_shock",
        }
    }

    pub fn category(self) -> Option<Category> {
        match self {
            SynthClass::Sepsis => Some(Category::Sepsis),
            SynthClass::SevereSepsis => Some(Category::SevereSepsis),
            SynthClass::SepticShock => Some(Category::SepticShock),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub episode_id: String,
    pub class: SynthClass,
    pub hours: usize,
    pub onset_hour: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCohort {
    pub seed: u64,
    pub config_digest: String,
    pub vitals_csv: String,
    pub annotations_csv: String,
    pub truth: Vec<TruthRow>,
}

impl SynthCohort {
    pub fn truth_csv(&self) -> String {
        let mut out = String::from("episode_id,class,hours,onset_hour\n");
        for t in &self.truth {
            let onset = t.onset_hour.map_or(String::new(), |h| h.to_string());
            let _ = writeln!(out, "{},{},{},{onset}", t.episode_id, t.class.name(), t.hours);
        }
        out
    }

    /// Writes `vitals.csv`, `annotations.csv` and `truth.csv` into `dir`,
    /// each headed by a `#` comment line carrying the seed and config digest.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let preamble = format!("# synth seed={} config_digest={}\n", self.seed, self.config_digest);
        for (name, text) in [
            ("vitals.csv", &self.vitals_csv),
            ("annotations.csv", &self.annotations_csv),
            ("truth.csv", &self.truth_csv()),
        ] {
            let p = dir.join(name);
            fs::write(&p, format!("{preamble}{text}")).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

struct Generated {
    vitals: String,
    annotations: String,
    truth: TruthRow,
}

/// Per-hour mean levels for one episode.
struct Trajectory {
    hours: usize,
    base: [f64; 12],
    drift: [f64; 12],
    ramp_start: f64,
    lead: f64,
}

impl Trajectory {
    fn level(&self, k: usize, h: usize) -> f64 {
        let r = ((h as f64 + 1.0 - self.ramp_start) / self.lead).clamp(0.0, 1.0);
        self.base[k] + r * self.drift[k]
    }
}

const SLOTS: [Channel; 12] = [
    Channel::HeartRate,
    Channel::Spo2,
    Channel::RespRate,
    Channel::SystolicBp,
    Channel::DiastolicBp,
    Channel::Temperature,
    Channel::Gcs,
    Channel::Wbc,
    Channel::Platelets,
    Channel::Creatinine,
    Channel::Bilirubin,
    Channel::PfRatio,
];

fn emit(out: &mut String, id: &str, age: u32, channel: Channel, minute: u64, value: f64) {
    let (lo, hi) = channel.plausible_range();
    let v = value.clamp(lo, hi);
    let text = match channel {
        Channel::Gcs => format!("{}", v.round()),
        Channel::Temperature | Channel::Creatinine | Channel::Bilirubin | Channel::Wbc => format!("{v:.2}"),
        _ => format!("{v:.1}"),
    };
    let _ = writeln!(out, "{id},{age},{MEDICAL_ICU},{},{minute},{text}", channel.name());
}

fn generate_episode(cfg: &SynthConfig, id: String, class: SynthClass, index: u64) -> Generated {
    let mut rng = seed::rng(seed::derive(cfg.seed, "synth-episode", index));
    let age: u32 = rng.gen_range(18..=90);
    let b = &cfg.baselines;
    let profiles = [
        b.hr,
        b.spo2,
        b.rr,
        b.sbp,
        b.dbp,
        b.temp,
        vp(15.0, 0.0, 0.0),
        b.wbc,
        b.platelets,
        b.creatinine,
        b.bilirubin,
        b.pf_ratio,
    ];
    let mut base = [0.0; 12];
    for (k, p) in profiles.iter().enumerate() {
        base[k] = p.mean + p.between_std * normal(&mut rng);
    }
    base[1] = base[1].min(99.5);

    let (hours, onset, drift) = match class.category() {
        Some(cat) => {
            let onset = cfg.onset_hour.draw(&mut rng);
            let hours = onset + 1 + cfg.post_onset_hours.draw(&mut rng);
            (hours, Some(onset), cfg.drift.get(cat).values())
        }
        None => (cfg.stay_hours.draw(&mut rng), None, [0.0; 12]),
    };
    if class == SynthClass::Unstable {
        let u = &cfg.unstable;
        let mut picks = [false; 5];
        loop {
            for p in picks.iter_mut() {
                *p = rng.gen::<f64>() < u.probability;
            }
            if picks.iter().any(|p| *p) {
                break;
            }
        }
        if picks[0] {
            base[0] += u.tachycardia;
        }
        if picks[1] {
            base[2] += u.tachypnea;
        }
        if picks[2] {
            base[3] += u.hypotension;
            base[4] += u.hypotension * 0.3;
        }
        if picks[3] {
            base[5] += u.fever;
        }
        if picks[4] {
            base[6] += u.gcs_drop;
        }
    }
    let traj = Trajectory {
        hours,
        base,
        drift,
        ramp_start: onset.map_or(f64::INFINITY, |o| o as f64 + 1.0 - cfg.lead_hours as f64),
        lead: cfg.lead_hours as f64,
    };

    let mut vitals = String::new();
    for h in 0..traj.hours {
        for (k, &channel) in SLOTS.iter().enumerate() {
            let (prob, noise) = match k {
                0..=5 => (cfg.vital_observe_prob, profiles[k].noise_std),
                6 => (cfg.gcs_observe_prob, 0.0),
                _ => (cfg.lab_observe_prob, profiles[k].noise_std),
            };
            if h > 0 && rng.gen::<f64>() >= prob {
                continue;
            }
            let repeats = if k <= 5 && rng.gen::<f64>() < cfg.repeat_prob { 2 } else { 1 };
            let mut minutes: Vec<u64> = (0..repeats).map(|_| rng.gen_range(0..60)).collect();
            minutes.sort_unstable();
            for m in minutes {
                let value = traj.level(k, h) + noise * normal(&mut rng);
                emit(&mut vitals, &id, age, channel, 60 * h as u64 + m, value);
            }
        }
    }
    let mut annotations = String::new();
    if let Some(o) = onset {
        for h in o..traj.hours {
            let _ = writeln!(annotations, "{id},infection,{h}");
            if class == SynthClass::SepticShock {
                let _ = writeln!(annotations, "{id},refractory_hypotension,{h}");
            }
        }
    }
    // one MAP reading per hour from the mean pressures
    for h in 0..traj.hours {
        let map = (traj.level(3, h) + 2.0 * traj.level(4, h)) / 3.0;
        emit(&mut vitals, &id, age, Channel::MeanArterialPressure, 60 * h as u64 + 30, map);
    }

    Generated {
        vitals,
        annotations,
        truth: TruthRow {
            episode_id: id,
            class,
            hours: traj.hours,
            onset_hour: onset,
        },
    }
}

/// Generates the cohort described by `config`.
pub fn generate_cohort(config: &SynthConfig) -> Result<SynthCohort> {
    config.validate(BandTables::standard())?;
    let c = &config.counts;
    let mut classes: Vec<SynthClass> = Vec::with_capacity(c.total());
    classes.extend(std::iter::repeat_n(SynthClass::Sepsis, c.sepsis));
    classes.extend(std::iter::repeat_n(SynthClass::SevereSepsis, c.severe_sepsis));
    classes.extend(std::iter::repeat_n(SynthClass::SepticShock, c.septic_shock));
    let unstable = (c.negative as f64 * config.unstable.fraction).round() as usize;
    classes.extend(std::iter::repeat_n(SynthClass::Unstable, unstable));
    classes.extend(std::iter::repeat_n(SynthClass::Negative, c.negative - unstable));
    let mut rng = seed::rng(seed::derive(config.seed, "synth-order", 0));
    classes.shuffle(&mut rng);

    let generated: Vec<Generated> = classes
        .par_iter()
        .enumerate()
        .map(|(i, &class)| generate_episode(config, format!("ep{:05}", i + 1), class, i as u64))
        .collect();

    let mut vitals = String::from("episode_id,age,unit,channel,minute,value\n");
    let mut annotations = String::from("episode_id,annotation,hour\n");
    let mut truth = Vec::with_capacity(generated.len());
    for g in generated {
        vitals.push_str(&g.vitals);
        annotations.push_str(&g.annotations);
        truth.push(g.truth);
    }
    Ok(SynthCohort {
        seed: config.seed,
        config_digest: config.digest(),
        vitals_csv: vitals,
        annotations_csv: annotations,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{attach_annotations, parse_vitals};
    use crate::pipeline::prepare_cohort;

    fn small() -> SynthConfig {
        SynthConfig {
            counts: EpisodeCounts {
                sepsis: 6,
                severe_sepsis: 6,
                septic_shock: 6,
                negative: 20,
            },
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_output() {
        let a = generate_cohort(&small()).unwrap();
        let b = generate_cohort(&small()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn output_parses_cleanly() {
        let c = generate_cohort(&small()).unwrap();
        let (mut eps, report) = parse_vitals(c.vitals_csv.as_bytes()).unwrap();
        assert!(report.is_clean(), "{:?}", report.errors.first());
        let ar = attach_annotations(&mut eps, c.annotations_csv.as_bytes()).unwrap();
        assert!(ar.is_clean(), "{:?}", ar.errors.first());
        assert_eq!(eps.len(), 38);
    }

    fn mean_hr_at_onset(cfg: &SynthConfig) -> f64 {
        let c = generate_cohort(cfg).unwrap();
        let (eps, _) = parse_vitals(c.vitals_csv.as_bytes()).unwrap();
        let cohort = prepare_cohort(eps, BandTables::standard()).unwrap();
        let mut sum = 0.0;
        let mut n = 0.0;
        for t in c.truth.iter().filter(|t| t.onset_hour.is_some()) {
            let grid = cohort.find(&t.episode_id).unwrap().grid.as_ref().unwrap();
            sum += grid.get(t.onset_hour.unwrap(), Channel::HeartRate).unwrap();
            n += 1.0;
        }
        sum / n
    }

    #[test]
    fn zero_drift_keeps_septic_episodes_at_baseline() {
        let flat = SynthConfig {
            drift: DriftProfiles::zero(),
            ..small()
        };
        assert!((mean_hr_at_onset(&flat) - 80.0).abs() < 5.0);
        assert!(mean_hr_at_onset(&small()) > 95.0);
    }

    #[test]
    fn septic_episodes_are_labeled_at_onset_and_included() {
        let c = generate_cohort(&small()).unwrap();
        let (mut eps, _) = parse_vitals(c.vitals_csv.as_bytes()).unwrap();
        attach_annotations(&mut eps, c.annotations_csv.as_bytes()).unwrap();
        let cohort = prepare_cohort(eps, BandTables::standard()).unwrap();
        let mut labeled = 0;
        for t in c.truth.iter().filter(|t| t.onset_hour.is_some()) {
            let e = cohort.find(&t.episode_id).unwrap();
            let first = e.labeling.as_ref().unwrap().first_positive_hour(Category::Sepsis);
            if first.is_some() {
                assert!(first.unwrap() >= t.onset_hour.unwrap());
                assert!(e.is_included(), "{:?}", e.verdict);
                labeled += 1;
            }
        }
        assert!(labeled >= 15, "only {labeled} of 18 septic episodes labeled");
        for t in c.truth.iter().filter(|t| t.onset_hour.is_none()) {
            assert!(!cohort.find(&t.episode_id).unwrap().is_septic());
        }
    }

    #[test]
    fn unreachable_drift_rejected() {
        let mut cfg = small();
        cfg.drift.sepsis = Drift {
            hr: 2.0,
            ..Drift::default()
        };
        assert!(matches!(generate_cohort(&cfg), Err(Error::UnreachableLabel(_))));
        let mut cfg = small();
        cfg.drift.severe_sepsis.sbp = -5.0;
        assert!(matches!(generate_cohort(&cfg), Err(Error::UnreachableLabel(_))));
    }

    #[test]
    fn structural_validation() {
        let mut cfg = small();
        cfg.onset_hour.min = 3;
        assert!(matches!(generate_cohort(&cfg), Err(Error::Config(_))));
        let mut cfg = small();
        cfg.vital_observe_prob = 1.5;
        assert!(matches!(generate_cohort(&cfg), Err(Error::Config(_))));
        let mut cfg = small();
        cfg.counts.negative = 0;
        assert!(matches!(generate_cohort(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn written_files_load_with_provenance_line() {
        let dir = tempfile::tempdir().unwrap();
        let c = generate_cohort(&small()).unwrap();
        c.write(dir.path()).unwrap();
        let vitals = fs::read_to_string(dir.path().join("vitals.csv")).unwrap();
        assert!(vitals.starts_with(&format!("# synth seed=7 config_digest={}", small().digest())));
        let (cohort, vr, ar) = crate::pipeline::load_cohort(
            &dir.path().join("vitals.csv"),
            Some(&dir.path().join("annotations.csv")),
            BandTables::standard(),
        )
        .unwrap();
        assert!(vr.is_clean() && ar.unwrap().is_clean());
        assert_eq!(cohort.episodes.len(), 38);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = SynthConfig::default();
        assert_eq!(SynthConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }
}
