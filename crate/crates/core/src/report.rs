//! Deterministic run summary and plot-ready CSV emission.
//!
//! The report never embeds timestamps, paths, or durations: identical inputs
//! produce identical bytes. All groupings iterate in sorted order.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::catchment::{coverage, Assignment};
use crate::census::BatteryPair;
use crate::diversity::{concentration_ratio, histogram};
use crate::langid::{compare_models, LanguagePrediction, UNDETERMINED};
use crate::record::TextRecord;
use crate::timeseries::{
    diagnostics, language_frequency_series, monthly_cr_series, DiagnosticsParams, Mode,
    TimeseriesError,
};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("missing stage output: {0}")]
    MissingStage(String),
    #[error("{0}")]
    LangId(#[from] crate::langid::LangIdError),
    #[error("{0}")]
    Diversity(#[from] crate::diversity::DiversityError),
    #[error("{0}")]
    Timeseries(#[from] TimeseriesError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything the report stage consumes. `preds_b` and `correlations` are
/// optional; their sections are omitted when absent.
pub struct ReportInputs<'a> {
    pub records: &'a [TextRecord],
    pub preds_a: &'a [LanguagePrediction],
    pub preds_b: Option<&'a [LanguagePrediction]>,
    pub assignments: &'a [Assignment],
    pub correlations: Option<&'a [BatteryPair]>,
    pub cr_n: usize,
    pub tz_offset_min: i32,
    pub exclusions: &'a BTreeSet<String>,
}

/// Rendered report artifacts, ready to be written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutputs {
    /// Human-readable run summary.
    pub summary: String,
    /// `model,language,year,month,count` — national monthly frequency per
    /// predicted language, zero-filled across the corpus span.
    pub language_frequencies_csv: String,
    /// `mode,place,year,month,count,cr_value` — monthly CR per region plus a
    /// national series, per available mode.
    pub regional_monthly_cr_csv: String,
    /// `place,kind,year,month,max_mean_drift,stationary_flag`.
    pub diagnostics_csv: String,
}

fn predicted_languages(preds: &[LanguagePrediction]) -> BTreeSet<String> {
    preds.iter().map(|p| p.language.clone()).collect()
}

/// Builds the full report.
pub fn build_report(inputs: &ReportInputs<'_>) -> Result<ReportOutputs, ReportError> {
    let assigned_ids: BTreeSet<&str> = inputs
        .assignments
        .iter()
        .filter(|a| a.is_assigned())
        .map(|a| a.record_id.as_str())
        .collect();
    let by_region: BTreeMap<String, BTreeSet<&str>> = {
        let mut m: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
        for a in inputs.assignments {
            if let Some(region) = &a.region {
                m.entry(region.clone()).or_default().insert(a.record_id.as_str());
            }
        }
        m
    };

    let mut summary = String::new();
    let cov = coverage(inputs.assignments);
    summary.push_str("# Corpus\n");
    summary.push_str(&format!("records: {}\n", inputs.records.len()));
    summary.push_str(&format!("assigned: {}\n", cov.assigned));
    summary.push_str(&format!("outside: {}\n", cov.outside));
    summary.push_str("\n# Coverage by region\n");
    for (region, count) in &cov.per_region {
        summary.push_str(&format!(
            "{region}: {count} ({:.1}%)\n",
            cov.region_shares[region] * 100.0
        ));
    }

    // National CR per mode, over assigned records only.
    let national_preds = |preds: &[LanguagePrediction]| -> Vec<LanguagePrediction> {
        preds.iter().filter(|p| assigned_ids.contains(p.id.as_str())).cloned().collect()
    };
    let a_national = national_preds(inputs.preds_a);
    let mut modes: Vec<(Mode, Vec<LanguagePrediction>)> = vec![(Mode::ModelA, a_national.clone())];
    if let Some(preds_b) = inputs.preds_b {
        let b_national = national_preds(preds_b);
        let agreement: Vec<LanguagePrediction> = {
            let b_map: BTreeMap<&str, &str> =
                b_national.iter().map(|p| (p.id.as_str(), p.language.as_str())).collect();
            a_national
                .iter()
                .filter(|p| b_map.get(p.id.as_str()) == Some(&p.language.as_str()))
                .cloned()
                .collect()
        };
        modes.push((Mode::ModelB, b_national));
        modes.push((Mode::Agreement, agreement));
    }

    summary.push_str(&format!("\n# National diversity (CR_{})\n", inputs.cr_n));
    for (mode, preds) in &modes {
        let hist = histogram(preds, "national", "all", inputs.exclusions);
        match concentration_ratio(&hist, inputs.cr_n) {
            Ok(cr) => summary.push_str(&format!("{mode}: {:.4} ({})\n", cr.value, cr.band)),
            Err(_) => summary.push_str(&format!("{mode}: no data\n")),
        }
    }

    if let Some(preds_b) = inputs.preds_b {
        let agreement = compare_models(inputs.preds_a, preds_b)?;
        summary.push_str("\n# Model agreement\n");
        summary.push_str(&format!("total: {}\n", agreement.total));
        summary.push_str(&format!("mismatches: {}\n", agreement.mismatches));
        summary.push_str(&format!("mismatch_rate: {:.6}\n", agreement.mismatch_rate));
        for ((from, to), count) in agreement.reclassification_pairs.iter().take(10) {
            summary.push_str(&format!("reclassified {from} -> {to}: {count}\n"));
        }
    }

    if let Some(pairs) = inputs.correlations {
        summary.push_str("\n# Correlations\n");
        for p in pairs {
            summary.push_str(&format!(
                "{}: spearman rho={:+.4} p={:.4} {} | pearson r={:+.4} p={:.4} {}\n",
                p.name,
                p.spearman.rho,
                p.spearman.p_value,
                "*".repeat(p.spearman.stars as usize),
                p.pearson.rho,
                p.pearson.p_value,
                "*".repeat(p.pearson.stars as usize),
            ));
        }
    }

    // Per-language national frequency series, per model.
    let mut freq_csv = String::from("model,language,year,month,count\n");
    let mut model_preds: Vec<(&str, &[LanguagePrediction])> = vec![("model_a", inputs.preds_a)];
    if let Some(b) = inputs.preds_b {
        model_preds.push(("model_b", b));
    }
    for (model, preds) in &model_preds {
        let mut known = predicted_languages(preds);
        known.insert(UNDETERMINED.to_string());
        for language in &known {
            let (_, series) = language_frequency_series(
                preds,
                inputs.records,
                language,
                &known,
                "national",
                inputs.tz_offset_min,
            )?;
            for (key, count) in series {
                freq_csv.push_str(&format!("{model},{language},{},{},{count}\n", key.year, key.month));
            }
        }
    }

    // Regional + national monthly CR series per mode.
    let empty: &[LanguagePrediction] = &[];
    let preds_b_slice = inputs.preds_b.unwrap_or(empty);
    let available_modes: &[Mode] = if inputs.preds_b.is_some() {
        &[Mode::ModelA, Mode::ModelB, Mode::Agreement]
    } else {
        &[Mode::ModelA]
    };
    let mut cr_csv = String::from("mode,place,year,month,count,cr_value\n");
    let mut diag_csv = String::from("place,kind,year,month,max_mean_drift,stationary_flag\n");
    let diag_mode = *available_modes.last().expect("non-empty");
    let mut skipped_diagnostics: Vec<String> = Vec::new();

    let mut places: Vec<(String, BTreeSet<&str>)> =
        vec![("national".to_string(), assigned_ids.clone())];
    places.extend(by_region.iter().map(|(r, ids)| (r.clone(), ids.clone())));

    for (place, ids) in &places {
        let records: Vec<TextRecord> =
            inputs.records.iter().filter(|r| ids.contains(r.id.as_str())).cloned().collect();
        let pa: Vec<LanguagePrediction> =
            inputs.preds_a.iter().filter(|p| ids.contains(p.id.as_str())).cloned().collect();
        let pb: Vec<LanguagePrediction> =
            preds_b_slice.iter().filter(|p| ids.contains(p.id.as_str())).cloned().collect();
        for mode in available_modes {
            let series = monthly_cr_series(
                &pa,
                &pb,
                &records,
                place,
                inputs.cr_n,
                *mode,
                inputs.tz_offset_min,
                inputs.exclusions,
            )?;
            for p in &series.points {
                match &p.cr {
                    Some(cr) => cr_csv.push_str(&format!(
                        "{mode},{place},{},{},{},{:.6}\n",
                        p.key.year, p.key.month, p.count, cr.value
                    )),
                    None => cr_csv.push_str(&format!(
                        "{mode},{place},{},{},{},\n",
                        p.key.year, p.key.month, p.count
                    )),
                }
            }
            if *mode == diag_mode {
                match diagnostics(&series, &DiagnosticsParams::default()) {
                    Ok(d) => {
                        for m in &d.outlier_months {
                            diag_csv.push_str(&format!("{place},outlier,{},{},,\n", m.year, m.month));
                        }
                        for m in &d.gap_months {
                            diag_csv.push_str(&format!("{place},gap,{},{},,\n", m.year, m.month));
                        }
                        diag_csv.push_str(&format!(
                            "{place},summary,,,{:.6},{}\n",
                            d.max_mean_drift, d.stationary_flag
                        ));
                    }
                    Err(TimeseriesError::TooFewMonths { .. }) => skipped_diagnostics.push(place.clone()),
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }

    summary.push_str("\n# Diagnostics\n");
    summary.push_str(&format!("mode: {diag_mode}\n"));
    if skipped_diagnostics.is_empty() {
        summary.push_str("all places diagnosed\n");
    } else {
        for place in &skipped_diagnostics {
            summary.push_str(&format!("{place}: too few months, skipped\n"));
        }
    }

    Ok(ReportOutputs {
        summary,
        language_frequencies_csv: freq_csv,
        regional_monthly_cr_csv: cr_csv,
        diagnostics_csv: diag_csv,
    })
}

/// Writes the four report files into `out_dir`.
pub fn write_report(outputs: &ReportOutputs, out_dir: &std::path::Path) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("summary.txt"), &outputs.summary)?;
    std::fs::write(out_dir.join("language_frequencies.csv"), &outputs.language_frequencies_csv)?;
    std::fs::write(out_dir.join("regional_monthly_cr.csv"), &outputs.regional_monthly_cr_csv)?;
    std::fs::write(out_dir.join("diagnostics.csv"), &outputs.diagnostics_csv)?;
    Ok(())
}
