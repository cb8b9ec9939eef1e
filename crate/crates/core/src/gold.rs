//! Gold-standard hour labeling and rule-based severity scores.
//!
//! Thresholds live in a versioned TOML band table (see
//! `default_bands.toml`, embedded as the default) so clinical cut-offs can
//! change without touching code.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::cohort::{Channel, Episode, HourCells, HourlyGrid};
use crate::error::{Error, Result};

pub const DEFAULT_BANDS_TOML: &str = include_str!("default_bands.toml");
pub const BANDS_VERSION: u32 = 1;

pub const SIRS_MAX: u32 = 4;
pub const QSOFA_MAX: u32 = 3;
pub const MEWS_MAX: u32 = 14;
pub const SOFA_MAX: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Sepsis,
    SevereSepsis,
    SepticShock,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Sepsis, Category::SevereSepsis, Category::SepticShock];

    pub fn name(self) -> &'static str {
        match self {
            Category::Sepsis => "sepsis",
            Category::SevereSepsis => "severe_sepsis",
            Category::SepticShock => "septic_shock",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown category '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Below,
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cut {
    pub at: f64,
    pub score: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub channel: Channel,
    pub direction: Direction,
    pub inclusive: bool,
    pub cuts: Vec<Cut>,
}

impl Rule {
    fn score(&self, cells: &HourCells) -> u32 {
        let Some(v) = cells[self.channel.index()] else {
            return 0;
        };
        self.cuts
            .iter()
            .filter(|cut| match (self.direction, self.inclusive) {
                (Direction::Below, false) => v < cut.at,
                (Direction::Below, true) => v <= cut.at,
                (Direction::Above, false) => v > cut.at,
                (Direction::Above, true) => v >= cut.at,
            })
            .map(|cut| cut.score)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub name: String,
    pub max: u32,
    pub rules: Vec<Rule>,
}

impl Component {
    pub fn score(&self, cells: &HourCells) -> u32 {
        self.rules
            .iter()
            .map(|r| r.score(cells))
            .max()
            .unwrap_or(0)
            .min(self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreTable {
    pub max_total: u32,
    pub components: Vec<Component>,
}

impl ScoreTable {
    pub fn score(&self, cells: &HourCells) -> u32 {
        let total: u32 = self.components.iter().map(|c| c.score(cells)).sum();
        total.min(self.max_total)
    }

    fn validate(&self, name: &str, cap: u32) -> Result<()> {
        if self.max_total != cap {
            return Err(Error::Config(format!(
                "{name}: max_total must be {cap}, found {}",
                self.max_total
            )));
        }
        let sum: u32 = self.components.iter().map(|c| c.max).sum();
        if sum > cap {
            return Err(Error::Config(format!(
                "{name}: component maxima sum to {sum}, above {cap}"
            )));
        }
        for comp in &self.components {
            for rule in &comp.rules {
                if rule.cuts.is_empty() {
                    return Err(Error::Config(format!("{name}.{}: rule without cuts", comp.name)));
                }
                for cut in &rule.cuts {
                    if !cut.at.is_finite() || cut.score > comp.max {
                        return Err(Error::Config(format!(
                            "{name}.{}: cut {{ at = {}, score = {} }} is invalid for max {}",
                            comp.name, cut.at, cut.score, comp.max
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelingRules {
    pub sirs_min: u32,
    pub severe_sbp_below: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandTables {
    pub version: u32,
    pub labeling: LabelingRules,
    pub sirs: ScoreTable,
    pub qsofa: ScoreTable,
    pub mews: ScoreTable,
    pub sofa: ScoreTable,
}

impl BandTables {
    pub fn from_toml(text: &str) -> Result<Self> {
        let tables: BandTables =
            toml::from_str(text).map_err(|e| Error::Config(format!("band table: {e}")))?;
        tables.validate()?;
        Ok(tables)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// The embedded default tables.
    pub fn standard() -> &'static BandTables {
        static TABLES: OnceLock<BandTables> = OnceLock::new();
        TABLES.get_or_init(|| {
            BandTables::from_toml(DEFAULT_BANDS_TOML).expect("embedded band table is valid")
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != BANDS_VERSION {
            return Err(Error::Config(format!(
                "unsupported band table version {} (expected {BANDS_VERSION})",
                self.version
            )));
        }
        if !self.labeling.severe_sbp_below.is_finite() {
            return Err(Error::Config("labeling.severe_sbp_below must be finite".into()));
        }
        self.sirs.validate("sirs", SIRS_MAX)?;
        self.qsofa.validate("qsofa", QSOFA_MAX)?;
        self.mews.validate("mews", MEWS_MAX)?;
        self.sofa.validate("sofa", SOFA_MAX)
    }
}

impl Default for BandTables {
    fn default() -> Self {
        BandTables::standard().clone()
    }
}

/// Number of SIRS criteria met (0..=4). WBC counts only when present.
pub fn sirs_count(cells: &HourCells, bands: &BandTables) -> u32 {
    bands.sirs.score(cells)
}

pub fn sofa_score(cells: &HourCells, bands: &BandTables) -> u32 {
    bands.sofa.score(cells)
}

pub fn qsofa_score(cells: &HourCells, bands: &BandTables) -> u32 {
    bands.qsofa.score(cells)
}

pub fn mews_score(cells: &HourCells, bands: &BandTables) -> u32 {
    bands.mews.score(cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleScore {
    Sofa,
    Qsofa,
    Mews,
}

impl RuleScore {
    pub const ALL: [RuleScore; 3] = [RuleScore::Sofa, RuleScore::Qsofa, RuleScore::Mews];

    pub fn name(self) -> &'static str {
        match self {
            RuleScore::Sofa => "sofa",
            RuleScore::Qsofa => "qsofa",
            RuleScore::Mews => "mews",
        }
    }

    pub fn score(self, cells: &HourCells, bands: &BandTables) -> u32 {
        match self {
            RuleScore::Sofa => sofa_score(cells, bands),
            RuleScore::Qsofa => qsofa_score(cells, bands),
            RuleScore::Mews => mews_score(cells, bands),
        }
    }
}

/// Positive hours per category for one episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HourLabeling {
    pub episode_id: String,
    pub sepsis: BTreeSet<usize>,
    pub severe_sepsis: BTreeSet<usize>,
    pub septic_shock: BTreeSet<usize>,
}

impl HourLabeling {
    pub fn hours(&self, category: Category) -> &BTreeSet<usize> {
        match category {
            Category::Sepsis => &self.sepsis,
            Category::SevereSepsis => &self.severe_sepsis,
            Category::SepticShock => &self.septic_shock,
        }
    }

    pub fn first_positive_hour(&self, category: Category) -> Option<usize> {
        self.hours(category).first().copied()
    }

    pub fn is_positive(&self, category: Category, hour: usize) -> bool {
        self.hours(category).contains(&hour)
    }
}

/// Labels every hour of an imputed grid.
///
/// * sepsis: SIRS count at least `sirs_min` and the hour is in the
///   episode's suspected-infection set;
/// * severe sepsis: sepsis and systolic BP below `severe_sbp_below`;
/// * septic shock: severe sepsis and the hour is in the fluid-refractory
///   hypotension set.
pub fn label_positive_hours(episode: &Episode, grid: &HourlyGrid, bands: &BandTables) -> HourLabeling {
    let mut labeling = HourLabeling {
        episode_id: episode.episode_id.clone(),
        sepsis: BTreeSet::new(),
        severe_sepsis: BTreeSet::new(),
        septic_shock: BTreeSet::new(),
    };
    for h in 0..grid.hours() {
        let cells = grid.hour(h);
        let sepsis = episode.infection_suspected_hours.contains(&h)
            && sirs_count(cells, bands) >= bands.labeling.sirs_min;
        if !sepsis {
            continue;
        }
        labeling.sepsis.insert(h);
        let hypotensive = cells[Channel::SystolicBp.index()]
            .is_some_and(|sbp| sbp < bands.labeling.severe_sbp_below);
        if !hypotensive {
            continue;
        }
        labeling.severe_sepsis.insert(h);
        if episode.fluid_refractory_hypotension_hours.contains(&h) {
            labeling.septic_shock.insert(h);
        }
    }
    labeling
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::CHANNEL_COUNT;

    fn cells(values: &[(Channel, f64)]) -> HourCells {
        let mut c = [None; CHANNEL_COUNT];
        for &(ch, v) in values {
            c[ch.index()] = Some(v);
        }
        c
    }

    fn bands() -> &'static BandTables {
        BandTables::standard()
    }

    #[test]
    fn sirs_examples() {
        use Channel::*;
        let c = cells(&[(Temperature, 37.0), (HeartRate, 70.0), (RespRate, 14.0)]);
        assert_eq!(sirs_count(&c, bands()), 0);
        let c = cells(&[(Temperature, 38.5), (HeartRate, 95.0), (RespRate, 22.0)]);
        assert_eq!(sirs_count(&c, bands()), 3);
        let c = cells(&[(Temperature, 35.5), (HeartRate, 91.0), (RespRate, 21.0), (Wbc, 13.0)]);
        assert_eq!(sirs_count(&c, bands()), 4);
        let c = cells(&[(Wbc, 3.0)]);
        assert_eq!(sirs_count(&c, bands()), 1);
    }

    fn normal_sofa() -> HourCells {
        use Channel::*;
        cells(&[
            (PfRatio, 450.0),
            (Platelets, 250.0),
            (Bilirubin, 0.8),
            (MeanArterialPressure, 85.0),
            (Gcs, 15.0),
            (Creatinine, 0.9),
        ])
    }

    #[test]
    fn sofa_examples() {
        use Channel::*;
        assert_eq!(sofa_score(&normal_sofa(), bands()), 0);
        assert_eq!(sofa_score(&[None; CHANNEL_COUNT], bands()), 0);

        let mut c = normal_sofa();
        c[Platelets.index()] = Some(75.0);
        assert_eq!(sofa_score(&c, bands()), 2);

        let worst = cells(&[
            (PfRatio, 80.0),
            (Platelets, 10.0),
            (Bilirubin, 15.0),
            (MeanArterialPressure, 50.0),
            (Norepinephrine, 0.3),
            (Gcs, 3.0),
            (Creatinine, 6.0),
        ]);
        assert_eq!(sofa_score(&worst, bands()), 24);
    }

    #[test]
    fn sofa_cardiovascular_bands() {
        use Channel::*;
        let cv = |pairs: &[(Channel, f64)]| {
            let c = cells(pairs);
            bands().sofa.components[3].score(&c)
        };
        assert_eq!(cv(&[(MeanArterialPressure, 75.0)]), 0);
        assert_eq!(cv(&[(MeanArterialPressure, 65.0)]), 1);
        assert_eq!(cv(&[(Dopamine, 4.0)]), 2);
        assert_eq!(cv(&[(Dobutamine, 1.0)]), 2);
        assert_eq!(cv(&[(Dopamine, 8.0)]), 3);
        assert_eq!(cv(&[(Epinephrine, 0.05)]), 3);
        assert_eq!(cv(&[(Dopamine, 20.0)]), 4);
        assert_eq!(cv(&[(Norepinephrine, 0.2), (MeanArterialPressure, 60.0)]), 4);
    }

    #[test]
    fn qsofa_examples() {
        use Channel::*;
        let q = |g, r, s| qsofa_score(&cells(&[(Gcs, g), (RespRate, r), (SystolicBp, s)]), bands());
        assert_eq!(q(15.0, 12.0, 130.0), 0);
        assert_eq!(q(10.0, 30.0, 85.0), 3);
        assert_eq!(q(15.0, 24.0, 130.0), 1);
        assert_eq!(q(15.0, 22.0, 100.0), 2);
    }

    fn mews_cells(hr: f64, sbp: f64, rr: f64, t: f64, gcs: f64) -> HourCells {
        use Channel::*;
        cells(&[(HeartRate, hr), (SystolicBp, sbp), (RespRate, rr), (Temperature, t), (Gcs, gcs)])
    }

    #[test]
    fn mews_examples() {
        assert_eq!(mews_score(&mews_cells(75.0, 120.0, 12.0, 37.0, 15.0), bands()), 0);
        assert_eq!(mews_score(&mews_cells(140.0, 60.0, 35.0, 39.5, 5.0), bands()), 14);
        // one band above normal on each component individually
        assert_eq!(mews_score(&mews_cells(105.0, 120.0, 12.0, 37.0, 15.0), bands()), 1);
        assert_eq!(mews_score(&mews_cells(75.0, 90.0, 12.0, 37.0, 15.0), bands()), 1);
        assert_eq!(mews_score(&mews_cells(75.0, 120.0, 17.0, 37.0, 15.0), bands()), 1);
        assert_eq!(mews_score(&mews_cells(75.0, 120.0, 12.0, 38.6, 15.0), bands()), 2);
        assert_eq!(mews_score(&mews_cells(75.0, 120.0, 12.0, 37.0, 14.0), bands()), 1);
    }

    #[test]
    fn default_tables_round_trip_through_toml() {
        let text = toml::to_string(bands()).unwrap();
        assert_eq!(&BandTables::from_toml(&text).unwrap(), bands());
    }

    #[test]
    fn rejects_bad_tables() {
        let mut t = bands().clone();
        t.version = 2;
        assert!(t.validate().is_err());

        let mut t = bands().clone();
        t.qsofa.components[0].max = 2;
        assert!(t.validate().is_err());

        let mut t = bands().clone();
        t.sofa.components[0].rules[0].cuts[0].score = 9;
        assert!(t.validate().is_err());

        let extra = DEFAULT_BANDS_TOML.replace("version = 1", "version = 1\nbogus = 3");
        assert!(BandTables::from_toml(&extra).is_err());
    }

    fn episode(infection: &[usize], refractory: &[usize]) -> Episode {
        let mut e = Episode::new("e", 50.0, "MICU");
        e.infection_suspected_hours = infection.iter().copied().collect();
        e.fluid_refractory_hypotension_hours = refractory.iter().copied().collect();
        e
    }

    fn one_hour_grid(values: &[(Channel, f64)]) -> HourlyGrid {
        HourlyGrid {
            episode_id: "e".into(),
            origin_minute: 0,
            cells: vec![cells(values)],
            observed: vec![[true; CHANNEL_COUNT]],
        }
    }

    #[test]
    fn labeling_rules() {
        use Channel::*;
        let febrile = [(Temperature, 38.6), (HeartRate, 100.0), (RespRate, 24.0), (SystolicBp, 120.0)];
        let g = one_hour_grid(&febrile);
        let l = label_positive_hours(&episode(&[], &[]), &g, bands());
        assert!(l.sepsis.is_empty() && l.severe_sepsis.is_empty() && l.septic_shock.is_empty());

        let two = [(Temperature, 38.6), (HeartRate, 100.0), (RespRate, 14.0), (SystolicBp, 120.0)];
        let l = label_positive_hours(&episode(&[0], &[]), &one_hour_grid(&two), bands());
        assert_eq!(l.sepsis, BTreeSet::from([0]));
        assert!(l.severe_sepsis.is_empty());

        let shock = [(Temperature, 38.6), (HeartRate, 100.0), (RespRate, 14.0), (SystolicBp, 85.0)];
        let l = label_positive_hours(&episode(&[0], &[0]), &one_hour_grid(&shock), bands());
        assert_eq!(l.septic_shock, BTreeSet::from([0]));
        assert_eq!(l.severe_sepsis, BTreeSet::from([0]));
        assert_eq!(l.first_positive_hour(Category::SepticShock), Some(0));
    }

    #[test]
    fn category_names_parse() {
        for c in Category::ALL {
            assert_eq!(c.name().parse::<Category>().unwrap(), c);
        }
        assert!("shock".parse::<Category>().is_err());
    }
}
