use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use crivet::cohort::{
    factors, ingest_cohort, most_frequent_level, preprocess_cohort, read_analysis_records,
    write_analysis_records, write_cohort, AnalysisRecord, EventCause, PreprocessOptions,
    RawAdmission, SchemaSpec,
};
use crivet::fine_gray::{fit_fine_gray, hazard_ratios, FgModel, HazardRatioTable};
use crivet::nonparametric::{
    aalen_johansen, build_event_table, hfr_at_horizon, median_los, BootstrapConfig, CifCurve,
    LosSummary, MedianLosEstimate, RiskAtHorizon,
};
use crivet::sensitivity::{run_sensitivity, ShiftSpec};
use crivet::synth::{generate_cohort, write_truth, CohortSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files;

const DASH: &str = "-";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn read_cohort(path: &Path) -> Result<(Vec<RawAdmission>, crivet::cohort::RejectionReport)> {
    Ok(ingest_cohort(open(path)?)?)
}

fn read_analysis(path: &Path) -> Result<Vec<AnalysisRecord>> {
    Ok(read_analysis_records(open(path)?)?)
}

/// Latest calendar date anywhere in the cohort.
pub fn latest_date(cohort: &[RawAdmission]) -> Option<NaiveDate> {
    cohort
        .iter()
        .flat_map(|r| {
            [
                Some(r.admission_date),
                r.specimen_date,
                r.onset_date,
                r.outcome_date,
                r.post_discharge_death_date,
                r.dose1_date,
                r.dose2_date,
            ]
        })
        .flatten()
        .max()
}

fn preprocess_options(cfg: &RunConfig, cohort: &[RawAdmission]) -> Result<PreprocessOptions> {
    let extraction = match cfg.extraction_date {
        Some(d) => d,
        None => {
            let d = latest_date(cohort)
                .ok_or_else(|| CliError::Config("cohort has no admissions".into()))?;
            log::info!("extraction date not configured; using latest cohort date {d}");
            d
        }
    };
    Ok(PreprocessOptions {
        extraction_date: extraction,
        horizon_days: cfg.horizon_days,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub subjects: usize,
    pub deaths: usize,
    pub discharges: usize,
    pub censored: usize,
}

impl OutcomeCounts {
    pub fn of(records: &[AnalysisRecord]) -> Self {
        let mut c = OutcomeCounts {
            subjects: records.len(),
            ..Default::default()
        };
        for r in records {
            match r.event {
                EventCause::Death => c.deaths += 1,
                EventCause::Discharge => c.discharges += 1,
                EventCause::Censored => c.censored += 1,
            }
        }
        c
    }
}

impl fmt::Display for OutcomeCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |k: usize| 100.0 * k as f64 / self.subjects.max(1) as f64;
        write!(
            f,
            "subjects {}; deaths {} ({:.1}%); discharges {} ({:.1}%); censored {} ({:.1}%)",
            self.subjects,
            self.deaths,
            pct(self.deaths),
            self.discharges,
            pct(self.discharges),
            self.censored,
            pct(self.censored)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub rows_read: usize,
    pub rejected: usize,
    pub extraction_date: NaiveDate,
    pub counts: OutcomeCounts,
}

impl fmt::Display for PreprocessSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "rows read {}; rejected {}; extraction date {}",
            self.rows_read, self.rejected, self.extraction_date
        )?;
        write!(f, "{}", self.counts)
    }
}

/// Writes `analysis.csv` and `rejections.csv`.
pub fn cmd_preprocess(cfg: &RunConfig) -> Result<PreprocessSummary> {
    let input = cfg.require_input()?;
    let (cohort, report) = read_cohort(input)?;
    let opts = preprocess_options(cfg, &cohort)?;
    let records = preprocess_cohort(&cohort, &opts)?;
    ensure_dir(&cfg.out)?;
    let path = cfg.out.join(files::ANALYSIS);
    write_analysis_records(create(&path)?, &records)?;
    let path = cfg.out.join(files::REJECTIONS);
    report.write_csv(create(&path)?)?;
    Ok(PreprocessSummary {
        rows_read: report.rows_read,
        rejected: report.total_rejected(),
        extraction_date: opts.extraction_date,
        counts: OutcomeCounts::of(&records),
    })
}

/// Aalen-Johansen results for one cell of the grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupResult {
    pub levels: Vec<String>,
    pub counts: OutcomeCounts,
    /// `None` for a cell without subjects.
    pub estimate: Option<GroupEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupEstimate {
    pub hfr: RiskAtHorizon,
    pub los: LosSummary,
    pub death: CifCurve,
    pub discharge: CifCurve,
}

impl GroupResult {
    pub fn label(&self, factors: &[String]) -> String {
        if factors.is_empty() {
            return crivet::cohort::UNSTRATIFIED.to_string();
        }
        factors
            .iter()
            .zip(&self.levels)
            .map(|(f, l)| format!("{f}={l}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

fn group_cells(records: &[AnalysisRecord], group_by: &[String]) -> Vec<Vec<String>> {
    let mut cells = vec![Vec::new()];
    for f in group_by {
        let levels: std::collections::BTreeSet<&str> =
            records.iter().filter_map(|r| r.level(f)).collect();
        cells = cells
            .into_iter()
            .flat_map(|c| {
                levels.iter().map(move |l| {
                    let mut c = c.clone();
                    c.push(l.to_string());
                    c
                })
            })
            .collect();
    }
    cells
}

fn estimate_group(
    records: &[AnalysisRecord],
    horizon: f64,
    bootstrap: BootstrapConfig,
) -> Result<GroupEstimate> {
    let aj = aalen_johansen(&build_event_table(records)?);
    let hfr = hfr_at_horizon(&aj.death, horizon)?;
    let los = median_los(records, &bootstrap)?;
    Ok(GroupEstimate {
        hfr,
        los,
        death: aj.death,
        discharge: aj.discharge,
    })
}

/// Estimates for every cell of the cross product of observed group levels,
/// in label order. Cell `i` bootstraps with seed `seed + i`.
pub fn grouped_cif(cfg: &RunConfig, records: &[AnalysisRecord]) -> Result<Vec<GroupResult>> {
    let group_by = &cfg.group_by;
    let usable: Vec<&AnalysisRecord> = records
        .iter()
        .filter(|r| group_by.iter().all(|f| r.level(f).is_some()))
        .collect();
    if usable.len() < records.len() {
        log::warn!(
            "{} records without a level for every grouping factor left out",
            records.len() - usable.len()
        );
    }
    let cells = group_cells(records, group_by);
    cells
        .into_par_iter()
        .enumerate()
        .map(|(i, levels)| {
            let subset: Vec<AnalysisRecord> = usable
                .iter()
                .filter(|r| {
                    group_by
                        .iter()
                        .zip(&levels)
                        .all(|(f, l)| r.level(f) == Some(l))
                })
                .map(|r| (*r).clone())
                .collect();
            let counts = OutcomeCounts::of(&subset);
            let estimate = if subset.is_empty() {
                None
            } else {
                let bootstrap = BootstrapConfig {
                    replicates: cfg.bootstrap,
                    seed: cfg.seed().wrapping_add(i as u64),
                };
                Some(estimate_group(&subset, cfg.horizon_days as f64, bootstrap)?)
            };
            Ok(GroupResult {
                levels,
                counts,
                estimate,
            })
        })
        .collect()
}

fn los_fields(est: Option<&MedianLosEstimate>) -> [String; 4] {
    match est {
        Some(m) => [
            m.median_days.to_string(),
            m.ci_lower.to_string(),
            m.ci_upper.to_string(),
            m.display(),
        ],
        None => [
            String::new(),
            String::new(),
            String::new(),
            DASH.to_string(),
        ],
    }
}

pub fn write_cif_summary<W: Write>(
    writer: W,
    group_by: &[String],
    groups: &[GroupResult],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = group_by.iter().map(String::as_str).collect();
    header.extend([
        "n",
        "deaths",
        "discharges",
        "censored",
        "hfr",
        "hfr_lower",
        "hfr_upper",
        "hfr_display",
        "los_death",
        "los_death_lower",
        "los_death_upper",
        "los_death_display",
        "los_discharge",
        "los_discharge_lower",
        "los_discharge_upper",
        "los_discharge_display",
    ]);
    w.write_record(&header).map_err(crivet::Error::from)?;
    for g in groups {
        let mut row = g.levels.clone();
        let c = g.counts;
        row.extend([c.subjects, c.deaths, c.discharges, c.censored].map(|k| k.to_string()));
        match &g.estimate {
            Some(e) => {
                row.extend([
                    e.hfr.risk.to_string(),
                    e.hfr.ci_lower.to_string(),
                    e.hfr.ci_upper.to_string(),
                    e.hfr.display_percent(),
                ]);
                row.extend(los_fields(e.los.death.as_ref()));
                row.extend(los_fields(e.los.discharge.as_ref()));
            }
            None => {
                for _ in 0..3 {
                    row.extend([
                        String::new(),
                        String::new(),
                        String::new(),
                        DASH.to_string(),
                    ]);
                }
            }
        }
        w.write_record(&row).map_err(crivet::Error::from)?;
    }
    w.flush().map_err(crivet::Error::from)?;
    Ok(())
}

pub fn write_cif_curves<W: Write>(
    writer: W,
    group_by: &[String],
    groups: &[GroupResult],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "cause", "time", "value", "ci_lower", "ci_upper"])
        .map_err(crivet::Error::from)?;
    for g in groups {
        let Some(e) = &g.estimate else { continue };
        let label = g.label(group_by);
        for curve in [&e.death, &e.discharge] {
            for k in 0..curve.times.len() {
                w.write_record([
                    label.clone(),
                    curve.cause.name().to_string(),
                    curve.times[k].to_string(),
                    curve.values[k].to_string(),
                    curve.ci_lower[k].to_string(),
                    curve.ci_upper[k].to_string(),
                ])
                .map_err(crivet::Error::from)?;
            }
        }
    }
    w.flush().map_err(crivet::Error::from)?;
    Ok(())
}

/// Writes `cif_summary.csv` and `cif_curves.csv`.
pub fn cmd_cif(cfg: &RunConfig) -> Result<Vec<GroupResult>> {
    let records = read_analysis(&cfg.analysis_input())?;
    let groups = grouped_cif(cfg, &records)?;
    ensure_dir(&cfg.out)?;
    write_cif_summary(
        create(&cfg.out.join(files::CIF_SUMMARY))?,
        &cfg.group_by,
        &groups,
    )?;
    write_cif_curves(
        create(&cfg.out.join(files::CIF_CURVES))?,
        &cfg.group_by,
        &groups,
    )?;
    Ok(groups)
}

/// Schema spec for `records`, with the month factor's reference set to its
/// most populous level unless configured.
pub fn resolve_schema(
    cfg: &RunConfig,
    month_factor: &str,
    records: &[AnalysisRecord],
) -> SchemaSpec {
    let mut spec = cfg.schema_spec(month_factor);
    if spec.main_effects.iter().any(|m| m == month_factor)
        && !spec.references.contains_key(month_factor)
    {
        if let Some(level) = most_frequent_level(records, month_factor) {
            spec.references.insert(month_factor.to_string(), level);
        }
    }
    spec
}

fn complete_cases(records: Vec<AnalysisRecord>, spec: &SchemaSpec) -> (Vec<AnalysisRecord>, usize) {
    let needed: Vec<&String> = spec.main_effects.iter().chain(&spec.strata).collect();
    let before = records.len();
    let kept: Vec<AnalysisRecord> = records
        .into_iter()
        .filter(|r| needed.iter().all(|f| r.level(f).is_some()))
        .collect();
    let dropped = before - kept.len();
    if dropped > 0 {
        log::warn!("{dropped} records with missing model factors left out of the fit");
    }
    (kept, dropped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub records_used: usize,
    pub records_dropped: usize,
    pub model: FgModel,
    pub hazard_ratios: HazardRatioTable,
}

#[derive(Serialize)]
struct ModelFile<'a> {
    records_used: usize,
    records_dropped: usize,
    standard_errors: Vec<f64>,
    hazard_ratios: &'a HazardRatioTable,
    model: &'a FgModel,
}

pub fn fit_records(cfg: &RunConfig, records: Vec<AnalysisRecord>) -> Result<FitOutput> {
    let spec = resolve_schema(cfg, &cfg.month_factor, &records);
    let (records, dropped) = complete_cases(records, &spec);
    let schema = spec.build(&records)?;
    let model = fit_fine_gray(&records, &schema)?;
    let hazard_ratios = hazard_ratios(&model);
    Ok(FitOutput {
        records_used: records.len(),
        records_dropped: dropped,
        model,
        hazard_ratios,
    })
}

/// `stratum,time,cif` at the reference profile, one block per stratum.
pub fn write_predicted_cif<W: Write>(writer: W, model: &FgModel) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["stratum", "time", "cif"])
        .map_err(crivet::Error::from)?;
    let profile = model.reference_profile();
    for s in &model.strata {
        let curve = model.predict_cif(&profile, &s.label)?;
        for (t, v) in curve.times.iter().zip(&curve.values) {
            w.write_record([s.label.clone(), t.to_string(), v.to_string()])
                .map_err(crivet::Error::from)?;
        }
    }
    w.flush().map_err(crivet::Error::from)?;
    Ok(())
}

/// Writes `hazard_ratios.csv`, `model.json` and `predicted_cif.csv`.
pub fn cmd_fit(cfg: &RunConfig) -> Result<FitOutput> {
    let records = read_analysis(&cfg.analysis_input())?;
    let out = fit_records(cfg, records)?;
    ensure_dir(&cfg.out)?;
    out.hazard_ratios
        .write_csv(create(&cfg.out.join(files::HAZARD_RATIOS))?)?;
    write_json(
        &cfg.out.join(files::MODEL),
        &ModelFile {
            records_used: out.records_used,
            records_dropped: out.records_dropped,
            standard_errors: out.model.standard_errors(),
            hazard_ratios: &out.hazard_ratios,
            model: &out.model,
        },
    )?;
    write_predicted_cif(create(&cfg.out.join(files::PREDICTED_CIF))?, &out.model)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySummary {
    pub excluded: usize,
    pub shifts: Vec<u32>,
}

/// Runs the onset-shift refits and writes `sensitivity.csv`. The month factor
/// of the configured preset is replaced by the onset month.
pub fn cmd_sensitivity(cfg: &RunConfig) -> Result<SensitivitySummary> {
    let (cohort, _) = read_cohort(cfg.require_input()?)?;
    let opts = preprocess_options(cfg, &cohort)?;
    let baseline = preprocess_cohort(&cohort, &opts)?;
    let spec = resolve_schema(cfg, factors::ONSET_MONTH, &baseline);
    let shifts = ShiftSpec {
        shifts: cfg.shifts.clone(),
        month_factor: factors::ONSET_MONTH.to_string(),
    };
    let result = run_sensitivity(&cohort, &opts, &spec, &shifts)?;
    ensure_dir(&cfg.out)?;
    result.write_csv(create(&cfg.out.join(files::SENSITIVITY))?)?;
    Ok(SensitivitySummary {
        excluded: result.excluded,
        shifts: result.fits.iter().map(|f| f.shift).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub n: usize,
    pub seed: u64,
    pub death_fraction: f64,
    pub discharge_fraction: f64,
    /// Share of subjects censored after preprocessing at the configured horizon.
    pub censoring_rate: f64,
    pub extraction_date: NaiveDate,
}

impl fmt::Display for SimulationSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n {}; seed {}; true death fraction {:.4}; true discharge fraction {:.4}; \
             censored after preprocessing {:.4}; extraction date {}",
            self.n,
            self.seed,
            self.death_fraction,
            self.discharge_fraction,
            self.censoring_rate,
            self.extraction_date
        )
    }
}

/// Reads a cohort spec from the input path and writes `cohort.csv`,
/// `truth.csv` and `simulation.json`. A configured seed replaces the spec's.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulationSummary> {
    let path = cfg.require_input()?;
    let mut spec: CohortSpec = serde_json::from_reader(open(path)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    let generated = generate_cohort(&spec)?;
    let opts = PreprocessOptions {
        extraction_date: generated.extraction_date,
        horizon_days: cfg.horizon_days,
    };
    let records = preprocess_cohort(&generated.admissions, &opts)?;
    let counts = OutcomeCounts::of(&records);
    let n = spec.n.max(1) as f64;
    let fraction = |cause| {
        generated
            .truth
            .iter()
            .filter(|t| t.true_cause == cause)
            .count() as f64
            / n
    };
    let summary = SimulationSummary {
        n: spec.n,
        seed: spec.seed,
        death_fraction: fraction(EventCause::Death),
        discharge_fraction: fraction(EventCause::Discharge),
        censoring_rate: counts.censored as f64 / n,
        extraction_date: generated.extraction_date,
    };
    ensure_dir(&cfg.out)?;
    write_cohort(create(&cfg.out.join(files::COHORT))?, &generated.admissions)?;
    write_truth(
        create(&cfg.out.join(files::TRUTH))?,
        &spec,
        &generated.truth,
    )?;
    let mut meta = BTreeMap::new();
    meta.insert("summary", serde_json::to_value(&summary)?);
    meta.insert("spec", serde_json::to_value(&spec)?);
    write_json(&cfg.out.join(files::SIMULATION), &meta)?;
    Ok(summary)
}
