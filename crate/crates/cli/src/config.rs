use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use crivet::cohort::{factors, SchemaSpec, HORIZON_DAYS};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Regression layouts of the two published analyses, plus an unadjusted one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Month effect, stratified on age band, region and vaccination status.
    Month,
    /// Vaccination effect, stratified on age band, region and admission month.
    Vaccination,
    /// No covariates and no strata.
    None,
}

const ADJUSTMENT: [&str; 5] = [
    factors::SEX,
    factors::ETHNICITY,
    factors::IMD_QUINTILE,
    factors::HOSPITAL_LOAD,
    factors::CCI_BAND,
];

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_horizon() -> i64 {
    HORIZON_DAYS
}

fn default_group_by() -> Vec<String> {
    vec![factors::ADMISSION_MONTH.to_string()]
}

fn default_preset() -> Preset {
    Preset::Month
}

fn default_month_factor() -> String {
    factors::ADMISSION_MONTH.to_string()
}

fn default_bootstrap() -> usize {
    500
}

fn default_shifts() -> Vec<u32> {
    vec![0, 1, 2, 3, 4]
}

fn default_references() -> BTreeMap<String, String> {
    [
        (factors::SEX, "Female"),
        (factors::ETHNICITY, "White"),
        (factors::IMD_QUINTILE, "5"),
        (factors::CCI_BAND, "0"),
        (factors::HOSPITAL_LOAD, "0-20"),
        (factors::VACCINATION_STATUS, "Unvaccinated"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_horizon")]
    pub horizon_days: i64,
    /// Defaults to the latest date found in the cohort file.
    #[serde(default)]
    pub extraction_date: Option<NaiveDate>,
    #[serde(default = "default_group_by")]
    pub group_by: Vec<String>,
    #[serde(default = "default_preset")]
    pub preset: Preset,
    /// Month covariate of the month preset.
    #[serde(default = "default_month_factor")]
    pub month_factor: String,
    /// Replace the preset's main effects.
    #[serde(default)]
    pub main_effects: Option<Vec<String>>,
    /// Replace the preset's strata.
    #[serde(default)]
    pub strata: Option<Vec<String>>,
    /// Reference levels; the month reference defaults to its most populous level.
    #[serde(default = "default_references")]
    pub references: BTreeMap<String, String>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_shifts")]
    pub shifts: Vec<u32>,
    /// Bootstrap seed, and the cohort seed of `simulate` when given.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub bootstrap: Option<usize>,
    pub preset: Option<Preset>,
}

impl RunConfig {
    pub const DEFAULT_SEED: u64 = 1;

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(Self::DEFAULT_SEED)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(mut self, o: Overrides) -> Self {
        if o.input.is_some() {
            self.input = o.input;
        }
        if let Some(out) = o.out {
            self.out = out;
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if let Some(b) = o.bootstrap {
            self.bootstrap = b;
        }
        if let Some(p) = o.preset {
            self.preset = p;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon_days < 1 {
            return Err(CliError::Config("horizon_days must be positive".into()));
        }
        let spec = self.schema_spec(&self.month_factor);
        if let Some(s) = spec.strata.iter().find(|s| spec.main_effects.contains(s)) {
            return Err(CliError::Config(format!(
                "`{s}` is both a stratum and a main effect"
            )));
        }
        Ok(())
    }

    /// Main effects, strata and references for the configured preset. The
    /// month reference is left for the caller to fill from the data.
    pub fn schema_spec(&self, month_factor: &str) -> SchemaSpec {
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let (main, strata) = match self.preset {
            Preset::Month => {
                let mut main = vec![month_factor.to_string()];
                main.extend(owned(&ADJUSTMENT));
                let strata = owned(&[
                    factors::AGE_BAND,
                    factors::REGION,
                    factors::VACCINATION_STATUS,
                ]);
                (main, strata)
            }
            Preset::Vaccination => {
                let mut main = vec![factors::VACCINATION_STATUS.to_string()];
                main.extend(owned(&ADJUSTMENT));
                let strata = owned(&[factors::AGE_BAND, factors::REGION, factors::ADMISSION_MONTH]);
                (main, strata)
            }
            Preset::None => (Vec::new(), Vec::new()),
        };
        SchemaSpec {
            main_effects: self.main_effects.clone().unwrap_or(main),
            references: self.references.clone(),
            strata: self.strata.clone().unwrap_or(strata),
        }
    }

    pub fn require_input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Config("no input file given".into()))
    }

    /// Input of the estimation commands: the given file or the preprocessed
    /// table in the output directory.
    pub fn analysis_input(&self) -> PathBuf {
        self.input
            .clone()
            .unwrap_or_else(|| self.out.join(crate::files::ANALYSIS))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = RunConfig::default();
        assert_eq!(c.horizon_days, 90);
        assert_eq!(c.preset, Preset::Month);
        assert_eq!(c.bootstrap, 500);
        assert_eq!(c.seed(), RunConfig::DEFAULT_SEED);
        let c = c.apply(Overrides {
            seed: Some(7),
            preset: Some(Preset::Vaccination),
            ..Default::default()
        });
        assert_eq!(c.seed(), 7);
        let spec = c.schema_spec(&c.month_factor);
        assert_eq!(spec.main_effects[0], "vaccination_status");
        assert!(spec.strata.contains(&"admission_month".to_string()));
    }

    #[test]
    fn overlapping_strata_are_rejected() {
        let c: RunConfig = serde_json::from_str(r#"{"strata": ["sex"]}"#).unwrap();
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
