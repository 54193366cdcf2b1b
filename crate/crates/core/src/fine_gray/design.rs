use std::collections::BTreeMap;

use crate::cohort::{AnalysisRecord, CovariateSchema};
use crate::error::{Error, Result};

pub fn column_name(factor: &str, level: &str) -> String {
    format!("{factor}:{level}")
}

/// Dense dummy coding of the schema's main effects, reference levels dropped.
/// Columns that are zero for every record are pruned.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub columns: Vec<String>,
    /// Columns removed because no record carries the level.
    pub pruned: Vec<String>,
    rows: usize,
    values: Vec<f64>,
}

impl DesignMatrix {
    pub fn build(records: &[AnalysisRecord], schema: &CovariateSchema) -> Result<Self> {
        let all_columns = full_columns(schema);
        let p = all_columns.len();
        let mut values = vec![0.0; records.len() * p];
        for (i, r) in records.iter().enumerate() {
            encode_into(
                schema,
                &all_columns,
                &r.covariates,
                &mut values[i * p..(i + 1) * p],
            )?;
        }
        let keep: Vec<bool> = (0..p)
            .map(|c| (0..records.len()).any(|i| values[i * p + c] != 0.0))
            .collect();
        let mut pruned = Vec::new();
        let mut columns = Vec::new();
        for (name, &k) in all_columns.iter().zip(&keep) {
            if k {
                columns.push(name.clone());
            } else {
                log::warn!("design column `{name}` has no observations; dropped");
                pruned.push(name.clone());
            }
        }
        let q = columns.len();
        let mut dense = Vec::with_capacity(records.len() * q);
        for i in 0..records.len() {
            dense.extend((0..p).filter(|&c| keep[c]).map(|c| values[i * p + c]));
        }
        Ok(DesignMatrix {
            columns,
            pruned,
            rows: records.len(),
            values: dense,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.ncols();
        &self.values[i * p..(i + 1) * p]
    }
}

fn full_columns(schema: &CovariateSchema) -> Vec<String> {
    schema
        .factors
        .iter()
        .flat_map(|f| f.contrast_levels().map(move |l| column_name(&f.name, l)))
        .collect()
}

fn encode_into(
    schema: &CovariateSchema,
    columns: &[String],
    levels: &BTreeMap<String, String>,
    out: &mut [f64],
) -> Result<()> {
    let mut offset = 0;
    for f in &schema.factors {
        let level = levels
            .get(&f.name)
            .ok_or_else(|| Error::validation(format!("no level given for factor `{}`", f.name)))?;
        if !f.levels.iter().any(|l| l == level) {
            return Err(Error::validation(format!(
                "unknown level `{level}` for factor `{}`",
                f.name
            )));
        }
        for (k, l) in f.contrast_levels().enumerate() {
            debug_assert_eq!(columns[offset + k], column_name(&f.name, l));
            out[offset + k] = if l == level { 1.0 } else { 0.0 };
        }
        offset += f.levels.len() - 1;
    }
    Ok(())
}

/// Covariate vector over `columns` for one profile of levels.
pub(crate) fn encode_profile(
    schema: &CovariateSchema,
    columns: &[String],
    levels: &BTreeMap<String, String>,
) -> Result<Vec<f64>> {
    let all = full_columns(schema);
    let mut full = vec![0.0; all.len()];
    encode_into(schema, &all, levels, &mut full)?;
    Ok(columns
        .iter()
        .map(|c| all.iter().position(|a| a == c).map_or(0.0, |k| full[k]))
        .collect())
}
