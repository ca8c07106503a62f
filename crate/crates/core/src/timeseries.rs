//! Monthly bucketing, per-language frequency series, monthly CR series, and
//! series diagnostics (outliers, gaps, a descriptive stationarity check).
//!
//! Bucketing applies a fixed minute offset to the UTC timestamp and takes the
//! resulting calendar month; daylight-saving rules are deliberately out of
//! scope. CR series span the full observed month range; months with nothing
//! to measure keep their count but carry no CR value (no interpolation).
//!
//! The stationarity diagnostic is a windowed-mean drift check, not a formal
//! unit-root test: the CR series (outlier and gap months removed) is split
//! into equal spans and flagged stationary when every window mean stays
//! within a relative threshold of the global mean.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{Datelike, Duration};
use serde::Serialize;
use thiserror::Error;

use crate::diversity::{concentration_ratio, histogram, CRResult, DiversityError};
use crate::langid::LanguagePrediction;
use crate::record::TextRecord;

#[derive(Debug, Error)]
pub enum TimeseriesError {
    #[error("unknown language code {0:?}")]
    UnknownLanguage(String),
    #[error("prediction {0:?} has no matching record")]
    UnknownRecordId(String),
    #[error("prediction sets cover different records: {only_a} ids only in A, {only_b} only in B")]
    IdSetMismatch { only_a: usize, only_b: usize },
    #[error("series has {have} usable months, need at least {need}")]
    TooFewMonths { have: usize, need: usize },
    #[error("{0}")]
    Diversity(#[from] DiversityError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct MonthKey {
    pub year: i32,
    pub month: u32,
}

impl MonthKey {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month must be 1..=12");
        Self { year, month }
    }

    /// Month containing `ts` after applying a fixed offset in minutes.
    pub fn from_timestamp(ts: chrono::DateTime<chrono::Utc>, tz_offset_min: i32) -> Self {
        let shifted = ts + Duration::minutes(tz_offset_min as i64);
        Self { year: shifted.year(), month: shifted.month() }
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            Self { year: self.year + 1, month: 1 }
        } else {
            Self { year: self.year, month: self.month + 1 }
        }
    }

    /// All months from `first` to `last` inclusive.
    pub fn span(first: Self, last: Self) -> Vec<Self> {
        let mut out = Vec::new();
        let mut m = first;
        while m <= last {
            out.push(m);
            m = m.next();
        }
        out
    }
}

impl std::fmt::Display for MonthKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Records sharing one (place, month) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyBucket {
    pub place: String,
    pub key: MonthKey,
    pub record_ids: Vec<String>,
    pub count: u64,
}

/// Buckets records by calendar month. Only non-empty months appear; buckets
/// are sorted by month, ids within a bucket keep input order.
pub fn bucket_monthly<'a>(
    records: impl IntoIterator<Item = &'a TextRecord>,
    place: &str,
    tz_offset_min: i32,
) -> Vec<MonthlyBucket> {
    let mut by_month: BTreeMap<MonthKey, Vec<String>> = BTreeMap::new();
    for r in records {
        let key = MonthKey::from_timestamp(r.timestamp, tz_offset_min);
        by_month.entry(key).or_default().push(r.id.clone());
    }
    by_month
        .into_iter()
        .map(|(key, record_ids)| MonthlyBucket {
            place: place.to_string(),
            key,
            count: record_ids.len() as u64,
            record_ids,
        })
        .collect()
}

/// Monthly counts of records predicted as `language`, zero-filled across the
/// full observed month span. `known_languages` bounds the valid code space
/// (a model's language set); asking for a code outside it is an error even
/// when the answer would be all zeros.
pub fn language_frequency_series(
    predictions: &[LanguagePrediction],
    records: &[TextRecord],
    language: &str,
    known_languages: &BTreeSet<String>,
    place: &str,
    tz_offset_min: i32,
) -> Result<(String, Vec<(MonthKey, u64)>), TimeseriesError> {
    if language != crate::langid::UNDETERMINED && !known_languages.contains(language) {
        return Err(TimeseriesError::UnknownLanguage(language.to_string()));
    }
    let by_id: BTreeMap<&str, &TextRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut counts: BTreeMap<MonthKey, u64> = BTreeMap::new();
    let mut first_last: Option<(MonthKey, MonthKey)> = None;
    for p in predictions {
        let record = by_id
            .get(p.id.as_str())
            .ok_or_else(|| TimeseriesError::UnknownRecordId(p.id.clone()))?;
        let key = MonthKey::from_timestamp(record.timestamp, tz_offset_min);
        first_last = Some(match first_last {
            None => (key, key),
            Some((lo, hi)) => (lo.min(key), hi.max(key)),
        });
        if p.language == language {
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    let series = match first_last {
        None => Vec::new(),
        Some((lo, hi)) => MonthKey::span(lo, hi)
            .into_iter()
            .map(|k| (k, counts.get(&k).copied().unwrap_or(0)))
            .collect(),
    };
    Ok((place.to_string(), series))
}

/// Which prediction stream feeds a CR series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    ModelA,
    ModelB,
    /// Only records on which both models agree, under the shared label.
    Agreement,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "model_a" | "a" => Ok(Mode::ModelA),
            "model_b" | "b" => Ok(Mode::ModelB),
            "agreement" => Ok(Mode::Agreement),
            other => Err(format!("unknown mode {other:?} (expected model_a|model_b|agreement)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::ModelA => "model_a",
            Mode::ModelB => "model_b",
            Mode::Agreement => "agreement",
        })
    }
}

/// One month of a CR series: the record count and, when measurable, the CR.
#[derive(Debug, Clone, PartialEq)]
pub struct CrSeriesPoint {
    pub key: MonthKey,
    pub count: u64,
    pub cr: Option<CRResult>,
}

/// A contiguous monthly CR series for one place.
#[derive(Debug, Clone, PartialEq)]
pub struct CrSeries {
    pub place: String,
    pub n: usize,
    pub points: Vec<CrSeriesPoint>,
    /// Months inside the span with no CR (no records, or nothing left after
    /// exclusions).
    pub skipped: Vec<MonthKey>,
}

/// Builds the monthly CR_n series for one place.
///
/// In [`Mode::Agreement`] both prediction sets must cover identical record
/// ids; only records where the two models agree contribute.
#[allow(clippy::too_many_arguments)]
pub fn monthly_cr_series(
    predictions_a: &[LanguagePrediction],
    predictions_b: &[LanguagePrediction],
    records: &[TextRecord],
    place: &str,
    n: usize,
    mode: Mode,
    tz_offset_min: i32,
    exclusions: &BTreeSet<String>,
) -> Result<CrSeries, TimeseriesError> {
    let selected: Vec<LanguagePrediction> = match mode {
        Mode::ModelA => predictions_a.to_vec(),
        Mode::ModelB => predictions_b.to_vec(),
        Mode::Agreement => {
            let a: BTreeMap<&str, &str> =
                predictions_a.iter().map(|p| (p.id.as_str(), p.language.as_str())).collect();
            let b: BTreeMap<&str, &str> =
                predictions_b.iter().map(|p| (p.id.as_str(), p.language.as_str())).collect();
            if !a.keys().eq(b.keys()) {
                let only_a = a.keys().filter(|k| !b.contains_key(*k)).count();
                let only_b = b.keys().filter(|k| !a.contains_key(*k)).count();
                return Err(TimeseriesError::IdSetMismatch { only_a, only_b });
            }
            predictions_a.iter().filter(|p| b[p.id.as_str()] == p.language).cloned().collect()
        }
    };

    let by_id: BTreeMap<&str, &TextRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut by_month: BTreeMap<MonthKey, Vec<&LanguagePrediction>> = BTreeMap::new();
    for p in &selected {
        let record = by_id
            .get(p.id.as_str())
            .ok_or_else(|| TimeseriesError::UnknownRecordId(p.id.clone()))?;
        by_month.entry(MonthKey::from_timestamp(record.timestamp, tz_offset_min)).or_default().push(p);
    }

    let mut points = Vec::new();
    let mut skipped = Vec::new();
    if let (Some(&first), Some(&last)) = (by_month.keys().next(), by_month.keys().last()) {
        for key in MonthKey::span(first, last) {
            let preds: Vec<LanguagePrediction> = by_month
                .get(&key)
                .map(|v| v.iter().map(|p| (*p).clone()).collect())
                .unwrap_or_default();
            let count = preds.len() as u64;
            let hist = histogram(&preds, place, &key.to_string(), exclusions);
            let cr = match concentration_ratio(&hist, n) {
                Ok(cr) => Some(cr),
                Err(DiversityError::EmptyCell) => {
                    skipped.push(key);
                    None
                }
                Err(e) => return Err(e.into()),
            };
            points.push(CrSeriesPoint { key, count, cr });
        }
    }
    Ok(CrSeries { place: place.to_string(), n, points, skipped })
}

/// Diagnostic thresholds; defaults match the documented behaviour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsParams {
    /// MAD multiplier for count outliers.
    pub k_mad: f64,
    /// Number of equal spans for the drift check.
    pub windows: usize,
    /// Maximum relative drift of a window mean before the series is
    /// considered non-stationary.
    pub drift_threshold: f64,
}

impl Default for DiagnosticsParams {
    fn default() -> Self {
        Self { k_mad: 5.0, windows: 4, drift_threshold: 0.10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesDiagnostics {
    pub outlier_months: Vec<MonthKey>,
    pub gap_months: Vec<MonthKey>,
    pub window_means: Vec<f64>,
    pub max_mean_drift: f64,
    pub stationary_flag: bool,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Flags count outliers (|count − median| > k·MAD over non-empty months),
/// interior zero-count gaps, and measures windowed-mean drift of the CR
/// series with outlier/gap months removed.
pub fn diagnostics(series: &CrSeries, params: &DiagnosticsParams) -> Result<SeriesDiagnostics, TimeseriesError> {
    let non_empty: Vec<&CrSeriesPoint> = series.points.iter().filter(|p| p.count > 0).collect();
    if non_empty.len() < params.windows {
        return Err(TimeseriesError::TooFewMonths { have: non_empty.len(), need: params.windows });
    }

    let mut counts: Vec<f64> = non_empty.iter().map(|p| p.count as f64).collect();
    counts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = median(&counts);
    let mut deviations: Vec<f64> = non_empty.iter().map(|p| (p.count as f64 - med).abs()).collect();
    deviations.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mad = median(&deviations);

    let outlier_months: Vec<MonthKey> = non_empty
        .iter()
        .filter(|p| (p.count as f64 - med).abs() > params.k_mad * mad)
        .map(|p| p.key)
        .collect();

    // Gaps: zero-count months strictly inside the observed span.
    let gap_months: Vec<MonthKey> = if series.points.len() >= 3 {
        series.points[1..series.points.len() - 1]
            .iter()
            .filter(|p| p.count == 0)
            .map(|p| p.key)
            .collect()
    } else {
        Vec::new()
    };

    let excluded: BTreeSet<MonthKey> =
        outlier_months.iter().chain(gap_months.iter()).copied().collect();
    let cr_values: Vec<f64> = series
        .points
        .iter()
        .filter(|p| !excluded.contains(&p.key))
        .filter_map(|p| p.cr.as_ref().map(|c| c.value))
        .collect();
    if cr_values.len() < params.windows {
        return Err(TimeseriesError::TooFewMonths { have: cr_values.len(), need: params.windows });
    }

    let global_mean = cr_values.iter().sum::<f64>() / cr_values.len() as f64;
    let base = cr_values.len() / params.windows;
    let rem = cr_values.len() % params.windows;
    let mut window_means = Vec::with_capacity(params.windows);
    let mut start = 0;
    for w in 0..params.windows {
        let len = base + usize::from(w < rem);
        let chunk = &cr_values[start..start + len];
        window_means.push(chunk.iter().sum::<f64>() / chunk.len() as f64);
        start += len;
    }
    let max_mean_drift = window_means
        .iter()
        .map(|m| (m - global_mean).abs() / global_mean)
        .fold(0.0, f64::max);

    Ok(SeriesDiagnostics {
        outlier_months,
        gap_months,
        window_means,
        max_mean_drift,
        stationary_flag: max_mean_drift < params.drift_threshold,
    })
}

/// Writes `place,year,month,count,cr_value`; the CR cell is empty for months
/// without a value.
pub fn write_series_csv<W: Write>(w: &mut W, series: &CrSeries) -> Result<(), TimeseriesError> {
    writeln!(w, "place,year,month,count,cr_value")?;
    for p in &series.points {
        match &p.cr {
            Some(cr) => writeln!(
                w,
                "{},{},{},{},{:.6}",
                series.place, p.key.year, p.key.month, p.count, cr.value
            )?,
            None => writeln!(w, "{},{},{},{},", series.place, p.key.year, p.key.month, p.count)?,
        }
    }
    Ok(())
}

/// Writes diagnostics rows (`kind` outlier|gap) followed by one summary row
/// carrying the drift statistic and stationarity flag.
pub fn write_diagnostics_csv<W: Write>(
    w: &mut W,
    place: &str,
    d: &SeriesDiagnostics,
) -> Result<(), TimeseriesError> {
    writeln!(w, "place,kind,year,month,max_mean_drift,stationary_flag")?;
    for m in &d.outlier_months {
        writeln!(w, "{place},outlier,{},{},,", m.year, m.month)?;
    }
    for m in &d.gap_months {
        writeln!(w, "{place},gap,{},{},,", m.year, m.month)?;
    }
    writeln!(w, "{place},summary,,,{:.6},{}", d.max_mean_drift, d.stationary_flag)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn rec(id: &str, ts: &str) -> TextRecord {
        TextRecord {
            id: id.into(),
            text: "kia ora koutou katoa".into(),
            timestamp: chrono::DateTime::parse_from_rfc3339(ts).unwrap().with_timezone(&Utc),
            lat: Some(-41.0),
            lon: Some(174.0),
            geohash: None,
        }
    }

    fn pred(id: &str, lang: &str) -> LanguagePrediction {
        LanguagePrediction { id: id.into(), language: lang.into(), confidence: 0.9 }
    }

    #[test]
    fn same_month_records_share_a_bucket() {
        let records = vec![rec("1", "2020-09-01T00:00:00Z"), rec("2", "2020-09-30T23:59:59Z")];
        let buckets = bucket_monthly(&records, "nz", 0);
        assert_eq!(buckets.len(), 1);
        assert_eq!(buckets[0].key, MonthKey::new(2020, 9));
        assert_eq!(buckets[0].count, 2);
        assert_eq!(buckets[0].record_ids, vec!["1", "2"]);
    }

    #[test]
    fn offset_moves_boundary_records() {
        let records = vec![rec("1", "2020-12-31T23:00:00Z")];
        let buckets = bucket_monthly(&records, "nz", 120);
        assert_eq!(buckets[0].key, MonthKey::new(2021, 1));
        // and without offset it stays in December
        let buckets = bucket_monthly(&records, "nz", 0);
        assert_eq!(buckets[0].key, MonthKey::new(2020, 12));
    }

    #[test]
    fn empty_input_gives_empty_series() {
        assert!(bucket_monthly(&[], "nz", 0).is_empty());
    }

    #[test]
    fn bucketing_partitions_records() {
        let records: Vec<TextRecord> = (0..50)
            .map(|i| {
                let month = 1 + (i % 5);
                rec(&format!("r{i}"), &format!("2020-{month:02}-15T12:00:00Z"))
            })
            .collect();
        let buckets = bucket_monthly(&records, "nz", 0);
        let total: u64 = buckets.iter().map(|b| b.count).sum();
        assert_eq!(total, 50);
        for b in &buckets {
            assert_eq!(b.count as usize, b.record_ids.len());
        }
    }

    fn known(langs: &[&str]) -> BTreeSet<String> {
        langs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn frequency_series_counts_language_per_month() {
        let records = vec![
            rec("1", "2020-01-10T00:00:00Z"),
            rec("2", "2020-01-20T00:00:00Z"),
            rec("3", "2020-03-10T00:00:00Z"),
        ];
        let preds = vec![pred("1", "eng"), pred("2", "eng"), pred("3", "eng")];
        let (_, series) =
            language_frequency_series(&preds, &records, "eng", &known(&["eng"]), "nz", 0).unwrap();
        // zero-filled February in between
        assert_eq!(
            series,
            vec![
                (MonthKey::new(2020, 1), 2),
                (MonthKey::new(2020, 2), 0),
                (MonthKey::new(2020, 3), 1),
            ]
        );
    }

    #[test]
    fn absent_language_gives_zero_series_unknown_errors() {
        let records = vec![rec("1", "2020-01-10T00:00:00Z"), rec("2", "2020-02-10T00:00:00Z")];
        let preds = vec![pred("1", "eng"), pred("2", "eng")];
        let (_, series) =
            language_frequency_series(&preds, &records, "mri", &known(&["eng", "mri"]), "nz", 0)
                .unwrap();
        assert_eq!(series.len(), 2);
        assert!(series.iter().all(|(_, c)| *c == 0));

        let err = language_frequency_series(&preds, &records, "zzz", &known(&["eng", "mri"]), "nz", 0)
            .unwrap_err();
        assert!(matches!(err, TimeseriesError::UnknownLanguage(_)));
    }

    #[test]
    fn seasonal_boost_is_argmax_month() {
        let mut records = Vec::new();
        let mut preds = Vec::new();
        let mut i = 0;
        for (month, mi_count) in [(7u32, 5), (8, 5), (9, 20), (10, 5)] {
            for _ in 0..mi_count {
                let id = format!("m{i}");
                records.push(rec(&id, &format!("2020-{month:02}-10T00:00:00Z")));
                preds.push(pred(&id, "mri"));
                i += 1;
            }
            for _ in 0..30 {
                let id = format!("e{i}");
                records.push(rec(&id, &format!("2020-{month:02}-11T00:00:00Z")));
                preds.push(pred(&id, "eng"));
                i += 1;
            }
        }
        let (_, series) =
            language_frequency_series(&preds, &records, "mri", &known(&["eng", "mri"]), "nz", 0)
                .unwrap();
        let argmax = series.iter().max_by_key(|(_, c)| *c).unwrap().0;
        assert_eq!(argmax, MonthKey::new(2020, 9));
    }

    fn series_fixture(langs_by_month: &[(u32, &[&str])]) -> (Vec<TextRecord>, Vec<LanguagePrediction>) {
        let mut records = Vec::new();
        let mut preds = Vec::new();
        let mut i = 0;
        for (month, langs) in langs_by_month {
            for lang in *langs {
                let id = format!("r{i}");
                records.push(rec(&id, &format!("2020-{month:02}-05T10:00:00Z")));
                preds.push(pred(&id, lang));
                i += 1;
            }
        }
        (records, preds)
    }

    #[test]
    fn single_language_series_is_constant_one() {
        let (records, preds) =
            series_fixture(&[(1, &["eng", "eng"]), (2, &["eng"]), (3, &["eng", "eng", "eng"])]);
        let s = monthly_cr_series(&preds, &preds, &records, "nz", 10, Mode::ModelA, 0, &BTreeSet::new())
            .unwrap();
        assert_eq!(s.points.len(), 3);
        for p in &s.points {
            assert_eq!(p.cr.as_ref().unwrap().value, 1.0);
        }
        assert!(s.skipped.is_empty());
    }

    #[test]
    fn agreement_of_identical_sets_equals_model_a() {
        let (records, preds) = series_fixture(&[(1, &["eng", "mri"]), (2, &["eng", "ton"])]);
        let a = monthly_cr_series(&preds, &preds, &records, "nz", 10, Mode::ModelA, 0, &BTreeSet::new())
            .unwrap();
        let agr =
            monthly_cr_series(&preds, &preds, &records, "nz", 10, Mode::Agreement, 0, &BTreeSet::new())
                .unwrap();
        assert_eq!(a, agr);
    }

    #[test]
    fn agreement_subset_counts_bounded_by_both_models() {
        let (records, preds_a) = series_fixture(&[(1, &["eng", "mri", "eng"]), (2, &["eng", "eng"])]);
        let mut preds_b = preds_a.clone();
        preds_b[1].language = "ton".into(); // disagree on one January record
        let a = monthly_cr_series(&preds_a, &preds_b, &records, "nz", 10, Mode::ModelA, 0, &BTreeSet::new())
            .unwrap();
        let b = monthly_cr_series(&preds_a, &preds_b, &records, "nz", 10, Mode::ModelB, 0, &BTreeSet::new())
            .unwrap();
        let agr =
            monthly_cr_series(&preds_a, &preds_b, &records, "nz", 10, Mode::Agreement, 0, &BTreeSet::new())
                .unwrap();
        for (i, p) in agr.points.iter().enumerate() {
            assert!(p.count <= a.points[i].count);
            assert!(p.count <= b.points[i].count);
        }
        assert_eq!(agr.points[0].count, 2);
    }

    #[test]
    fn agreement_requires_matching_id_sets() {
        let (records, preds) = series_fixture(&[(1, &["eng", "eng", "eng", "eng"])]);
        let shorter = preds[..3].to_vec();
        let err =
            monthly_cr_series(&preds, &shorter, &records, "nz", 10, Mode::Agreement, 0, &BTreeSet::new())
                .unwrap_err();
        assert!(matches!(err, TimeseriesError::IdSetMismatch { only_a: 1, only_b: 0 }));
    }

    #[test]
    fn all_und_month_is_skipped_not_dropped() {
        let (records, preds) = series_fixture(&[(1, &["eng"]), (2, &["und"]), (3, &["eng"])]);
        let s = monthly_cr_series(&preds, &preds, &records, "nz", 10, Mode::ModelA, 0, &BTreeSet::new())
            .unwrap();
        assert_eq!(s.points.len(), 3);
        assert_eq!(s.points[1].count, 1); // the record is there...
        assert!(s.points[1].cr.is_none()); // ...but nothing to measure
        assert_eq!(s.skipped, vec![MonthKey::new(2020, 2)]);
    }

    fn constant_series(months: usize, count: u64) -> CrSeries {
        let mut key = MonthKey::new(2019, 1);
        let mut points = Vec::new();
        for _ in 0..months {
            points.push(CrSeriesPoint {
                key,
                count,
                cr: Some(crate::diversity::CRResult {
                    n: 10,
                    value: 0.8,
                    band: crate::diversity::Band::High,
                    languages_used: vec!["eng".into()],
                }),
            });
            key = key.next();
        }
        CrSeries { place: "nz".into(), n: 10, points, skipped: vec![] }
    }

    #[test]
    fn constant_series_is_stationary_with_no_findings() {
        let s = constant_series(12, 100);
        let d = diagnostics(&s, &DiagnosticsParams::default()).unwrap();
        assert!(d.outlier_months.is_empty());
        assert!(d.gap_months.is_empty());
        assert!(d.max_mean_drift < 1e-12);
        assert!(d.stationary_flag);
        assert_eq!(d.window_means.len(), 4);
    }

    #[test]
    fn spike_month_is_flagged_as_outlier() {
        let mut s = constant_series(12, 100);
        s.points[5].count = 10_000;
        let d = diagnostics(&s, &DiagnosticsParams::default()).unwrap();
        assert_eq!(d.outlier_months, vec![s.points[5].key]);
    }

    #[test]
    fn interior_zero_month_is_a_gap() {
        let mut s = constant_series(12, 100);
        s.points[6].count = 0;
        s.points[6].cr = None;
        let d = diagnostics(&s, &DiagnosticsParams::default()).unwrap();
        assert_eq!(d.gap_months, vec![s.points[6].key]);
        // leading/trailing zeros are not gaps
        let mut s = constant_series(12, 100);
        s.points[0].count = 0;
        s.points[0].cr = None;
        let d = diagnostics(&s, &DiagnosticsParams::default()).unwrap();
        assert!(d.gap_months.is_empty());
    }

    #[test]
    fn drift_beyond_threshold_is_not_stationary() {
        let mut s = constant_series(12, 100);
        // CR climbs sharply in the last third.
        for p in s.points.iter_mut().skip(8) {
            p.cr.as_mut().unwrap().value = 0.99;
        }
        let d = diagnostics(&s, &DiagnosticsParams::default()).unwrap();
        assert!(!d.stationary_flag);
        assert!(d.max_mean_drift > 0.05);
    }

    #[test]
    fn scaling_counts_flags_same_months() {
        let mut s = constant_series(12, 100);
        s.points[3].count = 3000;
        s.points[9].count = 1;
        let base = diagnostics(&s, &DiagnosticsParams::default()).unwrap();
        let mut scaled = s.clone();
        for p in scaled.points.iter_mut() {
            p.count *= 17;
        }
        let d = diagnostics(&scaled, &DiagnosticsParams::default()).unwrap();
        assert_eq!(base.outlier_months, d.outlier_months);
        assert_eq!(base.gap_months, d.gap_months);
    }

    #[test]
    fn too_few_months_is_an_error() {
        let s = constant_series(3, 10);
        assert!(matches!(
            diagnostics(&s, &DiagnosticsParams::default()),
            Err(TimeseriesError::TooFewMonths { have: 3, need: 4 })
        ));
    }

    #[test]
    fn csv_emission_shapes() {
        let (records, preds) = series_fixture(&[(1, &["eng"]), (2, &["und"]), (3, &["eng"])]);
        let s = monthly_cr_series(&preds, &preds, &records, "nz", 10, Mode::ModelA, 0, &BTreeSet::new())
            .unwrap();
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("place,year,month,count,cr_value\n"));
        assert!(text.contains("nz,2020,2,1,\n")); // skipped month: empty cr cell

        let d = SeriesDiagnostics {
            outlier_months: vec![MonthKey::new(2020, 2)],
            gap_months: vec![],
            window_means: vec![0.8; 4],
            max_mean_drift: 0.01,
            stationary_flag: true,
        };
        let mut buf = Vec::new();
        write_diagnostics_csv(&mut buf, "nz", &d).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("nz,outlier,2020,2,,\n"));
        assert!(text.contains("nz,summary,,,0.010000,true\n"));
    }

    #[test]
    fn month_key_ordering_and_span() {
        assert!(MonthKey::new(2019, 12) < MonthKey::new(2020, 1));
        let span = MonthKey::span(MonthKey::new(2019, 11), MonthKey::new(2020, 2));
        assert_eq!(span.len(), 4);
        let ts = Utc.with_ymd_and_hms(2020, 6, 15, 12, 0, 0).unwrap();
        assert_eq!(MonthKey::from_timestamp(ts, 0), MonthKey::new(2020, 6));
        // +12 h (720 min) pushes a late-June timestamp into July
        let ts = Utc.with_ymd_and_hms(2020, 6, 30, 13, 0, 0).unwrap();
        assert_eq!(MonthKey::from_timestamp(ts, 720), MonthKey::new(2020, 7));
    }
}
