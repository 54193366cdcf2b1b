use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::AnalysisRecord;
use crate::error::{Error, Result};

/// Label used for the single stratum of an unstratified analysis.
pub const UNSTRATIFIED: &str = "all";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<String>,
    pub reference: String,
}

impl Factor {
    pub fn new(
        name: impl Into<String>,
        levels: Vec<String>,
        reference: impl Into<String>,
    ) -> Result<Self> {
        let factor = Factor {
            name: name.into(),
            levels,
            reference: reference.into(),
        };
        if !factor.levels.contains(&factor.reference) {
            return Err(Error::validation(format!(
                "reference level `{}` is not a level of factor `{}`",
                factor.reference, factor.name
            )));
        }
        let distinct: BTreeSet<_> = factor.levels.iter().collect();
        if distinct.len() != factor.levels.len() {
            return Err(Error::validation(format!(
                "factor `{}` has duplicate levels",
                factor.name
            )));
        }
        Ok(factor)
    }

    /// Non-reference levels in declaration order; one design column each.
    pub fn contrast_levels(&self) -> impl Iterator<Item = &str> {
        self.levels
            .iter()
            .filter(move |l| **l != self.reference)
            .map(String::as_str)
    }
}

/// Main-effect factors with their reference levels, plus the factors whose
/// level combinations define strata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub factors: Vec<Factor>,
    pub stratum_factors: Vec<String>,
}

impl CovariateSchema {
    pub fn new(factors: Vec<Factor>, stratum_factors: Vec<String>) -> Result<Self> {
        let names: BTreeSet<&str> = factors.iter().map(|f| f.name.as_str()).collect();
        if names.len() != factors.len() {
            return Err(Error::validation("duplicate main-effect factor"));
        }
        if let Some(s) = stratum_factors.iter().find(|s| names.contains(s.as_str())) {
            return Err(Error::validation(format!(
                "factor `{s}` is both a main effect and a stratum"
            )));
        }
        Ok(CovariateSchema {
            factors,
            stratum_factors,
        })
    }

    /// Builds a schema from the levels observed in `records`. Levels are sorted;
    /// a requested reference absent from the data falls back to the first level.
    pub fn from_records(
        records: &[AnalysisRecord],
        main_effects: &[String],
        references: &BTreeMap<String, String>,
        strata: &[String],
    ) -> Result<Self> {
        let mut factors = Vec::with_capacity(main_effects.len());
        for name in main_effects {
            let levels = observed_levels(records, name)?;
            let reference = match references.get(name) {
                Some(r) if levels.contains(r) => r.clone(),
                Some(r) => {
                    log::warn!(
                        "reference `{r}` for `{name}` not observed; using `{}`",
                        levels[0]
                    );
                    levels[0].clone()
                }
                None => levels[0].clone(),
            };
            factors.push(Factor::new(name.clone(), levels, reference)?);
        }
        for s in strata {
            observed_levels(records, s)?;
        }
        Self::new(factors, strata.to_vec())
    }

    pub fn factor(&self, name: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }

    /// Copy of the schema with a different reference level for one factor.
    pub fn with_reference(&self, factor: &str, reference: &str) -> Result<Self> {
        let mut out = self.clone();
        let f = out
            .factors
            .iter_mut()
            .find(|f| f.name == factor)
            .ok_or_else(|| Error::validation(format!("unknown factor `{factor}`")))?;
        if !f.levels.iter().any(|l| l == reference) {
            return Err(Error::validation(format!(
                "`{reference}` is not a level of `{factor}`"
            )));
        }
        f.reference = reference.to_string();
        Ok(out)
    }

    pub fn stratum_label(&self, record: &AnalysisRecord) -> Result<String> {
        if self.stratum_factors.is_empty() {
            return Ok(UNSTRATIFIED.to_string());
        }
        let mut parts = Vec::with_capacity(self.stratum_factors.len());
        for s in &self.stratum_factors {
            let level = record.level(s).ok_or_else(|| missing(record, s))?;
            parts.push(format!("{s}={level}"));
        }
        Ok(parts.join("|"))
    }

    /// Checks every main-effect level and writes each record's stratum label.
    pub fn assign_strata(&self, records: &mut [AnalysisRecord]) -> Result<()> {
        for r in records.iter_mut() {
            self.check_levels(r)?;
            r.stratum = self.stratum_label(r)?;
        }
        Ok(())
    }

    pub fn check_levels(&self, record: &AnalysisRecord) -> Result<()> {
        for f in &self.factors {
            let level = record
                .level(&f.name)
                .ok_or_else(|| missing(record, &f.name))?;
            if !f.levels.iter().any(|l| l == level) {
                return Err(Error::validation(format!(
                    "level `{level}` is not declared for factor `{}`",
                    f.name
                )));
            }
        }
        Ok(())
    }
}

fn missing(record: &AnalysisRecord, factor: &str) -> Error {
    Error::validation(format!(
        "record {} has no level for factor `{factor}`",
        record.subject_id
    ))
}

fn observed_levels(records: &[AnalysisRecord], factor: &str) -> Result<Vec<String>> {
    let mut levels = BTreeSet::new();
    for r in records {
        match r.level(factor) {
            Some(l) => {
                levels.insert(l);
            }
            None => return Err(missing(r, factor)),
        }
    }
    if levels.is_empty() {
        return Err(Error::validation(format!(
            "no observed levels for factor `{factor}`"
        )));
    }
    Ok(levels.into_iter().map(str::to_string).collect())
}

/// Factor names and references from which a schema is built against data.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaSpec {
    pub main_effects: Vec<String>,
    #[serde(default)]
    pub references: BTreeMap<String, String>,
    #[serde(default)]
    pub strata: Vec<String>,
}

impl SchemaSpec {
    pub fn build(&self, records: &[AnalysisRecord]) -> Result<CovariateSchema> {
        CovariateSchema::from_records(records, &self.main_effects, &self.references, &self.strata)
    }
}

/// The most frequent level of `factor`, ties broken by label order.
pub fn most_frequent_level(records: &[AnalysisRecord], factor: &str) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        if let Some(l) = r.level(factor) {
            *counts.entry(l).or_default() += 1;
        }
    }
    let best = counts.values().copied().max()?;
    counts
        .into_iter()
        .find(|(_, c)| *c == best)
        .map(|(l, _)| l.to_string())
}
