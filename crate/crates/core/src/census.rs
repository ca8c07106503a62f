//! Census-style ground-truth language tables and the census-vs-model
//! comparison battery.
//!
//! A census table arrives as CSV (`geography,language_label,count,year`) with
//! `#` comment lines allowed. Labels are crosswalked to ISO 639-3 codes via a
//! separate CSV (`language_label,iso639_3`); labels without a crosswalk entry
//! are kept under a sentinel code so totals are conserved, and reported as
//! warnings.
//!
//! Exclusion rules mirror standard census cleaning: signed languages (no
//! written orthography to identify), residual "Other ..." categories, and
//! "None (e.g. too young to talk)" responses.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::diversity::{pearson, spearman, CorrelationResult, DiversityError, LanguageHistogram};

#[derive(Debug, Error)]
pub enum CensusError {
    #[error("row {row}: duplicate key ({geography:?}, {label:?}, {year})")]
    DuplicateKey { row: usize, geography: String, label: String, year: i32 },
    #[error("row {row}: negative count {count}")]
    NegativeCount { row: usize, count: i64 },
    #[error("row {row}: {msg}")]
    BadRow { row: usize, msg: String },
    #[error("no rows for geography {geography:?}, year {year}")]
    MissingCell { geography: String, year: i32 },
    #[error("region keys disagree: {0}")]
    RegionKeyMismatch(String),
    #[error("{0}")]
    Correlation(#[from] DiversityError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One census table row after crosswalking.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusRow {
    pub geography: String,
    pub language_label: String,
    /// ISO 639-3 code, or an `x-...` sentinel when no crosswalk entry exists.
    pub language_code: String,
    pub count: u64,
    pub census_year: i32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CensusTable {
    pub rows: Vec<CensusRow>,
}

impl CensusTable {
    pub fn total_count(&self) -> u64 {
        self.rows.iter().map(|r| r.count).sum()
    }
}

/// Label-to-ISO-639-3 crosswalk.
#[derive(Debug, Clone, Default)]
pub struct Crosswalk {
    map: BTreeMap<String, String>,
}

impl Crosswalk {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        Self { map: pairs.into_iter().collect() }
    }

    /// Loads the crosswalk CSV (`language_label,iso639_3`).
    pub fn load(path: &Path) -> Result<Self, CensusError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut map = BTreeMap::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let label = row
                .get(0)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| CensusError::BadRow { row: i + 2, msg: "missing language_label".into() })?;
            let code = row
                .get(1)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| CensusError::BadRow { row: i + 2, msg: "missing iso639_3".into() })?;
            map.insert(label.to_string(), code.to_string());
        }
        Ok(Self { map })
    }

    /// Resolves a label: crosswalked code, or a sentinel derived from the label.
    pub fn resolve(&self, label: &str) -> (String, bool) {
        match self.map.get(label) {
            Some(code) => (code.clone(), true),
            None => (Self::sentinel(label), false),
        }
    }

    /// Sentinel code for an unmapped label: `x-` plus a lowercase slug.
    pub fn sentinel(label: &str) -> String {
        let mut slug = String::with_capacity(label.len());
        let mut last_dash = true;
        for c in label.to_lowercase().chars() {
            if c.is_alphanumeric() {
                slug.push(c);
                last_dash = false;
            } else if !last_dash {
                slug.push('-');
                last_dash = true;
            }
        }
        format!("x-{}", slug.trim_end_matches('-'))
    }
}

/// Loads a census CSV, crosswalking labels. Returns the table and a sorted
/// list of labels that fell back to sentinel codes.
pub fn load_census(path: &Path, crosswalk: &Crosswalk) -> Result<(CensusTable, Vec<String>), CensusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    let mut seen: BTreeSet<(String, String, i32)> = BTreeSet::new();
    let mut unknown: BTreeSet<String> = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row_no = i + 2;
        let get = |idx: usize, name: &str| {
            rec.get(idx)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .ok_or_else(|| CensusError::BadRow { row: row_no, msg: format!("missing {name}") })
        };
        let geography = get(0, "geography")?;
        let label = get(1, "language_label")?;
        let count_raw: i64 = get(2, "count")?
            .parse()
            .map_err(|e| CensusError::BadRow { row: row_no, msg: format!("bad count: {e}") })?;
        if count_raw < 0 {
            return Err(CensusError::NegativeCount { row: row_no, count: count_raw });
        }
        let year: i32 = get(3, "year")?
            .parse()
            .map_err(|e| CensusError::BadRow { row: row_no, msg: format!("bad year: {e}") })?;
        if !seen.insert((geography.clone(), label.clone(), year)) {
            return Err(CensusError::DuplicateKey { row: row_no, geography, label, year });
        }
        let (language_code, known) = crosswalk.resolve(&label);
        if !known {
            unknown.insert(label.clone());
        }
        rows.push(CensusRow {
            geography,
            language_label: label,
            language_code,
            count: count_raw as u64,
            census_year: year,
        });
    }
    Ok((CensusTable { rows }, unknown.into_iter().collect()))
}

/// Which label categories to drop before analysis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExclusionPolicy {
    /// Signed languages (any label containing "sign language").
    pub drop_signed: bool,
    /// Residual categories: "Other" and labels beginning "Other ".
    pub drop_other_nfd: bool,
    /// "None (e.g. too young to talk)" style non-responses.
    pub drop_none_too_young: bool,
    /// Extra labels to drop, matched exactly (case-insensitive).
    pub custom_labels: BTreeSet<String>,
}

impl Default for ExclusionPolicy {
    fn default() -> Self {
        Self {
            drop_signed: true,
            drop_other_nfd: true,
            drop_none_too_young: true,
            custom_labels: BTreeSet::new(),
        }
    }
}

impl ExclusionPolicy {
    pub const fn none() -> Self {
        Self {
            drop_signed: false,
            drop_other_nfd: false,
            drop_none_too_young: false,
            custom_labels: BTreeSet::new(),
        }
    }

    fn excludes(&self, label: &str) -> bool {
        let lower = label.trim().to_lowercase();
        if self.drop_signed && lower.contains("sign language") {
            return true;
        }
        // "Other not further defined" is a residual bucket; "Sinitic not
        // further defined" is a real language group and must survive.
        if self.drop_other_nfd && (lower == "other" || lower.starts_with("other ")) {
            return true;
        }
        if self.drop_none_too_young && (lower.contains("too young to talk") || lower == "none") {
            return true;
        }
        self.custom_labels.iter().any(|l| l.trim().to_lowercase() == lower)
    }
}

/// What [`apply_exclusions`] removed, keyed by label.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExclusionManifest {
    /// label -> (rows dropped, summed count dropped)
    pub per_label: BTreeMap<String, (u64, u64)>,
}

impl ExclusionManifest {
    pub fn rows_dropped(&self) -> u64 {
        self.per_label.values().map(|(r, _)| r).sum()
    }

    pub fn count_dropped(&self) -> u64 {
        self.per_label.values().map(|(_, c)| c).sum()
    }
}

/// Removes excluded rows. Surviving rows are untouched, so the output total
/// plus the manifest total equals the input total.
pub fn apply_exclusions(table: &CensusTable, policy: &ExclusionPolicy) -> (CensusTable, ExclusionManifest) {
    let mut kept = Vec::with_capacity(table.rows.len());
    let mut manifest = ExclusionManifest::default();
    for row in &table.rows {
        if policy.excludes(&row.language_label) {
            let e = manifest.per_label.entry(row.language_label.clone()).or_insert((0, 0));
            e.0 += 1;
            e.1 += row.count;
        } else {
            kept.push(row.clone());
        }
    }
    (CensusTable { rows: kept }, manifest)
}

/// Histogram of one (geography, year) cell over crosswalked codes. Counts for
/// the same code are summed; sentinels preserve unmapped labels' counts.
pub fn census_histogram(
    table: &CensusTable,
    geography: &str,
    year: i32,
) -> Result<LanguageHistogram, CensusError> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut found = false;
    for row in &table.rows {
        if row.geography == geography && row.census_year == year {
            found = true;
            *counts.entry(row.language_code.clone()).or_insert(0) += row.count;
        }
    }
    if !found {
        return Err(CensusError::MissingCell { geography: geography.to_string(), year });
    }
    Ok(LanguageHistogram::from_counts(geography, &year.to_string(), counts))
}

/// Demographic summary for one region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionProfile {
    pub region: String,
    pub pop_density: f64,
    pub median_age: f64,
    pub corpus_share: f64,
}

/// Loads region profiles by joining the corpus summary CSV
/// (`region,tweets,corpus_share`) with the demographics CSV
/// (`region,pop_density,median_age`). Region sets must match exactly.
pub fn load_region_profiles(corpus_csv: &Path, demographics_csv: &Path) -> Result<Vec<RegionProfile>, CensusError> {
    let read = |path: &Path, cols: usize| -> Result<Vec<Vec<String>>, CensusError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut out = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < cols {
                return Err(CensusError::BadRow { row: i + 2, msg: format!("expected {cols} columns") });
            }
            out.push((0..cols).map(|c| rec[c].to_string()).collect());
        }
        Ok(out)
    };
    let parse_f64 = |s: &str, row: usize, what: &str| -> Result<f64, CensusError> {
        s.parse()
            .map_err(|e| CensusError::BadRow { row, msg: format!("bad {what}: {e}") })
    };

    let mut shares: BTreeMap<String, f64> = BTreeMap::new();
    for (i, row) in read(corpus_csv, 3)?.into_iter().enumerate() {
        shares.insert(row[0].clone(), parse_f64(&row[2], i + 2, "corpus_share")?);
    }
    let mut profiles = Vec::new();
    let mut demo_regions = BTreeSet::new();
    for (i, row) in read(demographics_csv, 3)?.into_iter().enumerate() {
        let region = row[0].clone();
        demo_regions.insert(region.clone());
        let corpus_share = *shares.get(&region).ok_or_else(|| {
            CensusError::RegionKeyMismatch(format!("{region:?} has demographics but no corpus share"))
        })?;
        profiles.push(RegionProfile {
            region,
            pop_density: parse_f64(&row[1], i + 2, "pop_density")?,
            median_age: parse_f64(&row[2], i + 2, "median_age")?,
            corpus_share,
        });
    }
    let only_corpus: Vec<_> = shares.keys().filter(|r| !demo_regions.contains(*r)).cloned().collect();
    if !only_corpus.is_empty() {
        return Err(CensusError::RegionKeyMismatch(format!(
            "regions missing demographics: {only_corpus:?}"
        )));
    }
    profiles.sort_by(|a, b| a.region.cmp(&b.region));
    Ok(profiles)
}

/// One comparison pair: both correlation statistics over the same vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryPair {
    pub name: String,
    pub spearman: CorrelationResult,
    pub pearson: CorrelationResult,
}

/// Runs the six-way comparison battery over per-region CR values and region
/// profiles: census against each model, the models against each other, and
/// census against density, median age, and corpus share.
///
/// All inputs must cover exactly the same region set; regions are processed
/// in sorted order, so the result is independent of input order.
pub fn comparison_battery(
    census_cr: &BTreeMap<String, f64>,
    model_cr_a: &BTreeMap<String, f64>,
    model_cr_b: &BTreeMap<String, f64>,
    profiles: &[RegionProfile],
) -> Result<Vec<BatteryPair>, CensusError> {
    let regions: Vec<&String> = census_cr.keys().collect();
    let profile_map: BTreeMap<&str, &RegionProfile> =
        profiles.iter().map(|p| (p.region.as_str(), p)).collect();

    let mut missing = Vec::new();
    for (name, keys) in [
        ("model_a", model_cr_a.keys().map(|s| s.as_str()).collect::<BTreeSet<_>>()),
        ("model_b", model_cr_b.keys().map(|s| s.as_str()).collect()),
        ("profiles", profile_map.keys().cloned().collect()),
    ] {
        let census_keys: BTreeSet<&str> = census_cr.keys().map(|s| s.as_str()).collect();
        for r in census_keys.symmetric_difference(&keys) {
            missing.push(format!("{r} (vs {name})"));
        }
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(CensusError::RegionKeyMismatch(missing.join(", ")));
    }

    let census: Vec<f64> = regions.iter().map(|r| census_cr[*r]).collect();
    let a: Vec<f64> = regions.iter().map(|r| model_cr_a[*r]).collect();
    let b: Vec<f64> = regions.iter().map(|r| model_cr_b[*r]).collect();
    let density: Vec<f64> = regions.iter().map(|r| profile_map[r.as_str()].pop_density).collect();
    let age: Vec<f64> = regions.iter().map(|r| profile_map[r.as_str()].median_age).collect();
    let share: Vec<f64> = regions.iter().map(|r| profile_map[r.as_str()].corpus_share).collect();

    let pair = |name: &str, x: &[f64], y: &[f64]| -> Result<BatteryPair, CensusError> {
        Ok(BatteryPair { name: name.to_string(), spearman: spearman(x, y)?, pearson: pearson(x, y)? })
    };
    Ok(vec![
        pair("census_x_model_a", &census, &a)?,
        pair("census_x_model_b", &census, &b)?,
        pair("model_a_x_model_b", &a, &b)?,
        pair("census_x_pop_density", &census, &density)?,
        pair("census_x_median_age", &census, &age)?,
        pair("census_x_corpus_share", &census, &share)?,
    ])
}

/// Writes the battery as CSV. The first five columns are the Spearman result;
/// the Pearson companion statistics follow.
pub fn write_correlations_csv<W: Write>(w: &mut W, pairs: &[BatteryPair]) -> Result<(), CensusError> {
    writeln!(w, "pair_name,rho,n,p_value,stars,pearson_r,pearson_p,pearson_stars")?;
    for p in pairs {
        writeln!(
            w,
            "{},{:.6},{},{:.6},{},{:.6},{:.6},{}",
            p.name,
            p.spearman.rho,
            p.spearman.n_pairs,
            p.spearman.p_value,
            p.spearman.stars,
            p.pearson.rho,
            p.pearson.p_value,
            p.pearson.stars,
        )?;
    }
    Ok(())
}

/// Reads a correlation CSV written by [`write_correlations_csv`].
pub fn read_correlations_csv(path: &Path) -> Result<Vec<BatteryPair>, CensusError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut pairs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() < 8 {
            return Err(CensusError::BadRow { row, msg: "expected 8 columns".into() });
        }
        let f = |idx: usize| -> Result<f64, CensusError> {
            rec[idx]
                .parse()
                .map_err(|e| CensusError::BadRow { row, msg: format!("bad float: {e}") })
        };
        let n: usize = rec[2]
            .parse()
            .map_err(|e| CensusError::BadRow { row, msg: format!("bad n: {e}") })?;
        let s = |idx: usize| -> Result<u8, CensusError> {
            rec[idx]
                .parse()
                .map_err(|e| CensusError::BadRow { row, msg: format!("bad stars: {e}") })
        };
        pairs.push(BatteryPair {
            name: rec[0].to_string(),
            spearman: CorrelationResult { rho: f(1)?, n_pairs: n, p_value: f(3)?, stars: s(4)? },
            pearson: CorrelationResult { rho: f(5)?, n_pairs: n, p_value: f(6)?, stars: s(7)? },
        });
    }
    Ok(pairs)
}

/// Loads the regional CR benchmark fixture (`region,census,idnet,pacificlid`)
/// into three per-region maps, in column order.
#[allow(clippy::type_complexity)]
pub fn load_regional_cr_table(
    path: &Path,
) -> Result<(BTreeMap<String, f64>, BTreeMap<String, f64>, BTreeMap<String, f64>), CensusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut census = BTreeMap::new();
    let mut a = BTreeMap::new();
    let mut b = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() < 4 {
            return Err(CensusError::BadRow { row, msg: "expected 4 columns".into() });
        }
        let region = rec[0].to_string();
        let parse = |idx: usize, what: &str| -> Result<f64, CensusError> {
            rec[idx]
                .parse()
                .map_err(|e| CensusError::BadRow { row, msg: format!("bad {what}: {e}") })
        };
        census.insert(region.clone(), parse(1, "census")?);
        a.insert(region.clone(), parse(2, "idnet")?);
        b.insert(region, parse(3, "pacificlid")?);
    }
    Ok((census, a, b))
}
