use std::io::Write;

use serde::{Deserialize, Serialize};

use super::design::column_name;
use super::fit::FgModel;
use crate::error::Result;
use crate::nonparametric::Z_95;

pub const REFERENCE_DISPLAY: &str = "1 (reference category)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardRatioRow {
    pub characteristic: String,
    pub level: String,
    pub hazard_ratio: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub se: f64,
    pub reference: bool,
}

impl HazardRatioRow {
    pub fn from_coefficient(characteristic: &str, level: &str, beta: f64, se: f64) -> Self {
        HazardRatioRow {
            characteristic: characteristic.to_string(),
            level: level.to_string(),
            hazard_ratio: beta.exp(),
            ci_lower: (beta - Z_95 * se).exp(),
            ci_upper: (beta + Z_95 * se).exp(),
            se,
            reference: false,
        }
    }

    fn reference(characteristic: &str, level: &str) -> Self {
        HazardRatioRow {
            reference: true,
            ..Self::from_coefficient(characteristic, level, 0.0, 0.0)
        }
    }

    /// `0.56 (0.52 - 0.61)`, or the reference marker.
    pub fn display(&self) -> String {
        if self.reference {
            REFERENCE_DISPLAY.to_string()
        } else {
            format!(
                "{:.2} ({:.2} - {:.2})",
                self.hazard_ratio, self.ci_lower, self.ci_upper
            )
        }
    }
}

/// One row per factor level in schema order; reference levels are marked and
/// levels pruned from the design are left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardRatioTable {
    pub rows: Vec<HazardRatioRow>,
}

pub fn hazard_ratios(model: &FgModel) -> HazardRatioTable {
    let se = model.standard_errors();
    let mut rows = Vec::new();
    for f in &model.schema.factors {
        for level in &f.levels {
            if *level == f.reference {
                rows.push(HazardRatioRow::reference(&f.name, level));
                continue;
            }
            let name = column_name(&f.name, level);
            if let Some(k) = model.columns.iter().position(|c| *c == name) {
                rows.push(HazardRatioRow::from_coefficient(
                    &f.name,
                    level,
                    model.beta[k],
                    se[k],
                ));
            }
        }
    }
    HazardRatioTable { rows }
}

impl HazardRatioTable {
    pub fn row(&self, characteristic: &str, level: &str) -> Option<&HazardRatioRow> {
        self.rows
            .iter()
            .find(|r| r.characteristic == characteristic && r.level == level)
    }

    /// `characteristic,level,hazard_ratio,ci_lower,ci_upper,reference_flag,display`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "characteristic",
            "level",
            "hazard_ratio",
            "ci_lower",
            "ci_upper",
            "reference_flag",
            "display",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.characteristic.clone(),
                r.level.clone(),
                r.hazard_ratio.to_string(),
                r.ci_lower.to_string(),
                r.ci_upper.to_string(),
                u8::from(r.reference).to_string(),
                r.display(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
