//! Language histograms, the CR_n concentration ratio, rankings, term
//! filtering, and correlation statistics.
//!
//! CR_n is the summed share of the n most frequent languages in a cell:
//! a value under 0.40 reads as low concentration, 0.40–0.70 as medium, and
//! above 0.70 as high. Shares are always relative to the total of included
//! (non-excluded) language counts, so CR_n is bounded by 1.
//!
//! Two correlation statistics are provided: tie-corrected Spearman (average
//! ranks, Pearson on ranks, two-tailed t-approximation for p, with an exact
//! permutation alternative for small n) and plain Pearson with the same
//! significance machinery.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::langid::{normalize_text, LanguagePrediction, UNDETERMINED};
use crate::record::TextRecord;

#[derive(Debug, Error, PartialEq)]
pub enum DiversityError {
    #[error("empty cell: histogram has no included counts")]
    EmptyCell,
    #[error("n must be >= 1")]
    BadN,
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("correlation undefined: {0} vector has zero variance")]
    ZeroVariance(&'static str),
    #[error("exact permutation test limited to n <= {max}, got {n}")]
    TooManyForExact { n: usize, max: usize },
    #[error("io: {0}")]
    Io(String),
}

/// Language counts for one (place, period) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanguageHistogram {
    pub place: String,
    pub period: String,
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
    /// Predictions dropped by exclusion rules ("und" plus configured codes).
    pub dropped: u64,
}

impl LanguageHistogram {
    pub fn empty(place: &str, period: &str) -> Self {
        Self {
            place: place.to_string(),
            period: period.to_string(),
            counts: BTreeMap::new(),
            total: 0,
            dropped: 0,
        }
    }

    /// Builds a histogram from known counts (census cells, tests).
    pub fn from_counts(place: &str, period: &str, counts: BTreeMap<String, u64>) -> Self {
        let total = counts.values().sum();
        Self { place: place.to_string(), period: period.to_string(), counts, total, dropped: 0 }
    }

    /// Merges another histogram of the same cell into this one. Merge is
    /// commutative and associative, so sharded counting commutes.
    pub fn merge(&mut self, other: &Self) {
        assert_eq!(
            (&self.place, &self.period),
            (&other.place, &other.period),
            "merging histograms from different cells"
        );
        for (lang, c) in &other.counts {
            *self.counts.entry(lang.clone()).or_insert(0) += c;
        }
        self.total += other.total;
        self.dropped += other.dropped;
    }

    pub fn distinct_languages(&self) -> usize {
        self.counts.len()
    }
}

/// Counts predictions by language for one cell. `"und"` and any code in
/// `exclusions` are dropped from the counts and reported in `dropped`.
pub fn histogram(
    predictions: &[LanguagePrediction],
    place: &str,
    period: &str,
    exclusions: &BTreeSet<String>,
) -> LanguageHistogram {
    let mut h = LanguageHistogram::empty(place, period);
    for p in predictions {
        if p.language == UNDETERMINED || exclusions.contains(&p.language) {
            h.dropped += 1;
            continue;
        }
        *h.counts.entry(p.language.clone()).or_insert(0) += 1;
        h.total += 1;
    }
    h
}

/// Concentration band, thresholded at 0.40 and 0.70.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Low,
    Medium,
    High,
}

impl Band {
    pub fn from_value(value: f64) -> Self {
        if value < 0.40 {
            Band::Low
        } else if value <= 0.70 {
            Band::Medium
        } else {
            Band::High
        }
    }
}

impl std::fmt::Display for Band {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Band::Low => "low",
            Band::Medium => "medium",
            Band::High => "high",
        })
    }
}

/// A concentration-ratio measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CRResult {
    pub n: usize,
    pub value: f64,
    pub band: Band,
    /// The languages contributing to the sum, by descending count then code.
    pub languages_used: Vec<String>,
}

/// CR_n: the summed share of the `n` largest language counts.
pub fn concentration_ratio(hist: &LanguageHistogram, n: usize) -> Result<CRResult, DiversityError> {
    if n == 0 {
        return Err(DiversityError::BadN);
    }
    if hist.total == 0 {
        return Err(DiversityError::EmptyCell);
    }
    let mut ranked: Vec<(&String, &u64)> = hist.counts.iter().collect();
    ranked.sort_by(|(la, ca), (lb, cb)| cb.cmp(ca).then_with(|| la.cmp(lb)));
    let used: Vec<_> = ranked.iter().take(n).collect();
    let top_sum: u64 = used.iter().map(|(_, c)| **c).sum();
    let value = top_sum as f64 / hist.total as f64;
    Ok(CRResult {
        n,
        value,
        band: Band::from_value(value),
        languages_used: used.iter().map(|(l, _)| (*l).clone()).collect(),
    })
}

/// Top `k` languages by count (ties by code), with shares of the total.
pub fn top_k(hist: &LanguageHistogram, k: usize) -> Vec<(String, u64, f64)> {
    assert!(k >= 1, "k must be >= 1");
    let mut ranked: Vec<(&String, &u64)> = hist.counts.iter().collect();
    ranked.sort_by(|(la, ca), (lb, cb)| cb.cmp(ca).then_with(|| la.cmp(lb)));
    ranked
        .into_iter()
        .take(k)
        .map(|(l, &c)| (l.clone(), c, c as f64 / hist.total as f64))
        .collect()
}

/// Removes records whose normalized text contains any of `terms`
/// (case-insensitive substring). Returns the kept records and removal count.
pub fn filter_terms(records: &[TextRecord], terms: &BTreeSet<String>) -> (Vec<TextRecord>, u64) {
    assert!(!terms.is_empty(), "terms must be non-empty");
    let needles: Vec<String> = terms.iter().map(|t| normalize_text(t)).collect();
    let mut kept = Vec::with_capacity(records.len());
    let mut removed = 0u64;
    for r in records {
        let haystack = normalize_text(&r.text);
        if needles.iter().any(|t| !t.is_empty() && haystack.contains(t.as_str())) {
            removed += 1;
        } else {
            kept.push(r.clone());
        }
    }
    (kept, removed)
}

/// Significance stars for a p-value: `***` p<0.001, `**` p<0.01, `*` p<0.05.
pub fn stars(p: f64) -> u8 {
    if p < 0.001 {
        3
    } else if p < 0.01 {
        2
    } else if p < 0.05 {
        1
    } else {
        0
    }
}

/// A correlation with its two-tailed significance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub n_pairs: usize,
    pub p_value: f64,
    pub stars: u8,
}

fn validate_pair(x: &[f64], y: &[f64]) -> Result<(), DiversityError> {
    if x.len() != y.len() {
        return Err(DiversityError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(DiversityError::TooFewPairs(x.len()));
    }
    for (i, v) in x.iter().chain(y.iter()).enumerate() {
        if !v.is_finite() {
            return Err(DiversityError::NonFinite(i % x.len()));
        }
    }
    Ok(())
}

/// Average ranks (1-based); tied values share the mean of their positions.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("finite values"));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, DiversityError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(DiversityError::ZeroVariance("first"));
    }
    if syy == 0.0 {
        return Err(DiversityError::ZeroVariance("second"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-tailed p-value via t = rho * sqrt((n-2) / (1 - rho^2)) on n-2 degrees
/// of freedom; |rho| = 1 yields p = 0.
fn t_approx_p(rho: f64, n: usize) -> f64 {
    let denom = 1.0 - rho * rho;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = rho * ((n as f64 - 2.0) / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n as f64 - 2.0).expect("n >= 3");
    2.0 * dist.sf(t.abs())
}

/// Tie-corrected Spearman rank correlation with a t-approximation p-value.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult, DiversityError> {
    validate_pair(x, y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson_r(&rx, &ry)?;
    let p_value = t_approx_p(rho, x.len());
    Ok(CorrelationResult { rho, n_pairs: x.len(), p_value, stars: stars(p_value) })
}

/// Pearson product-moment correlation with the same t-based significance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, DiversityError> {
    validate_pair(x, y)?;
    let r = pearson_r(x, y)?;
    let p_value = t_approx_p(r, x.len());
    Ok(CorrelationResult { rho: r, n_pairs: x.len(), p_value, stars: stars(p_value) })
}

/// Maximum n accepted by [`spearman_exact`] (n! permutations are enumerated).
pub const EXACT_PERMUTATION_MAX_N: usize = 10;

/// Spearman with an exact permutation p-value: the fraction of y-rank
/// permutations whose |rho| is at least the observed |rho|.
pub fn spearman_exact(x: &[f64], y: &[f64]) -> Result<CorrelationResult, DiversityError> {
    validate_pair(x, y)?;
    let n = x.len();
    if n > EXACT_PERMUTATION_MAX_N {
        return Err(DiversityError::TooManyForExact { n, max: EXACT_PERMUTATION_MAX_N });
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson_r(&rx, &ry)?;

    // rho under permutation = centered dot product / sqrt(Sxx * Syy); only the
    // dot product varies, so precompute the rest.
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mx = mean(&rx);
    let my = mean(&ry);
    let cx: Vec<f64> = rx.iter().map(|v| v - mx).collect();
    let cy: Vec<f64> = ry.iter().map(|v| v - my).collect();
    let sxx: f64 = cx.iter().map(|v| v * v).sum();
    let syy: f64 = cy.iter().map(|v| v * v).sum();
    let denom = (sxx * syy).sqrt();
    let threshold = rho.abs() - 1e-12;

    let mut perm: Vec<usize> = (0..n).collect();
    let mut counters = vec![0usize; n];
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut tally = |perm: &[usize]| {
        let dot: f64 = perm.iter().enumerate().map(|(i, &j)| cx[i] * cy[j]).sum();
        if (dot / denom).abs() >= threshold {
            hits += 1;
        }
        total += 1;
    };
    // Heap's algorithm.
    tally(&perm);
    let mut i = 0;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            tally(&perm);
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }

    let p_value = hits as f64 / total as f64;
    Ok(CorrelationResult { rho, n_pairs: n, p_value, stars: stars(p_value) })
}

/// One row of diversity output: `place,period,n,cr_value,band,total_count`.
pub fn write_diversity_csv<W: Write>(
    w: &mut W,
    rows: &[(String, String, CRResult, u64)],
) -> Result<(), DiversityError> {
    let io = |e: std::io::Error| DiversityError::Io(e.to_string());
    writeln!(w, "place,period,n,cr_value,band,total_count").map_err(io)?;
    for (place, period, cr, total) in rows {
        writeln!(w, "{place},{period},{},{:.6},{},{total}", cr.n, cr.value, cr.band).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn pred(id: &str, lang: &str) -> LanguagePrediction {
        LanguagePrediction { id: id.into(), language: lang.into(), confidence: 0.9 }
    }

    fn hist_of(counts: &[(&str, u64)]) -> LanguageHistogram {
        LanguageHistogram::from_counts(
            "p",
            "t",
            counts.iter().map(|(l, c)| (l.to_string(), *c)).collect(),
        )
    }

    #[test]
    fn histogram_counts_languages() {
        let preds = vec![pred("1", "eng"), pred("2", "eng"), pred("3", "mri")];
        let h = histogram(&preds, "wlg", "2020-09", &BTreeSet::new());
        assert_eq!(h.counts["eng"], 2);
        assert_eq!(h.counts["mri"], 1);
        assert_eq!(h.total, 3);
        assert_eq!(h.dropped, 0);
    }

    #[test]
    fn histogram_drops_und_and_exclusions() {
        let preds = vec![pred("1", "eng"), pred("2", "und")];
        let h = histogram(&preds, "p", "t", &BTreeSet::new());
        assert_eq!(h.counts.len(), 1);
        assert_eq!(h.total, 1);
        assert_eq!(h.dropped, 1);

        let excl: BTreeSet<String> = ["eng".to_string()].into();
        let h = histogram(&preds, "p", "t", &excl);
        assert_eq!(h.total, 0);
        assert_eq!(h.dropped, 2);
    }

    #[test]
    fn histogram_arithmetic_series() {
        let mut preds = Vec::new();
        for (i, lang) in ["aaa", "bbb", "ccc", "ddd", "eee", "fff", "ggg", "hhh", "iii"]
            .iter()
            .enumerate()
        {
            for j in 0..(9 - i) {
                preds.push(pred(&format!("{lang}{j}"), lang));
            }
        }
        let h = histogram(&preds, "p", "t", &BTreeSet::new());
        assert_eq!(h.counts.len(), 9);
        assert_eq!(h.total, 45);
    }

    #[test]
    fn cr_single_language_is_one() {
        let h = hist_of(&[("eng", 100)]);
        let cr = concentration_ratio(&h, 10).unwrap();
        assert_eq!(cr.value, 1.0);
        assert_eq!(cr.band, Band::High);
        assert_eq!(cr.languages_used, vec!["eng"]);
    }

    #[test]
    fn cr_direct_arithmetic() {
        let h = hist_of(&[("aaa", 60), ("bbb", 25), ("ccc", 10), ("ddd", 5)]);
        let cr = concentration_ratio(&h, 2).unwrap();
        assert!((cr.value - 0.85).abs() < 1e-12);
        assert_eq!(cr.languages_used, vec!["aaa", "bbb"]);
    }

    #[test]
    fn cr_equal_counts() {
        let counts: Vec<(String, u64)> = (0..12).map(|i| (format!("l{i:02}"), 7u64)).collect();
        let h = LanguageHistogram::from_counts("p", "t", counts.into_iter().collect());
        let cr10 = concentration_ratio(&h, 10).unwrap();
        assert!((cr10.value - 10.0 / 12.0).abs() < 1e-12);
        assert_eq!(cr10.languages_used.len(), 10);
        let cr12 = concentration_ratio(&h, 12).unwrap();
        assert_eq!(cr12.value, 1.0);
    }

    #[test]
    fn cr_band_thresholds() {
        assert_eq!(Band::from_value(0.35), Band::Low);
        assert_eq!(Band::from_value(0.55), Band::Medium);
        assert_eq!(Band::from_value(0.85), Band::High);
        // Boundary cases: 0.40 and 0.70 are both medium.
        assert_eq!(Band::from_value(0.40), Band::Medium);
        assert_eq!(Band::from_value(0.70), Band::Medium);
        assert_eq!(Band::from_value(0.7000001), Band::High);
        assert_eq!(Band::from_value(0.3999999), Band::Low);
    }

    #[test]
    fn cr_empty_cell_is_error() {
        let h = LanguageHistogram::empty("p", "t");
        assert_eq!(concentration_ratio(&h, 10), Err(DiversityError::EmptyCell));
        assert_eq!(concentration_ratio(&hist_of(&[("eng", 1)]), 0), Err(DiversityError::BadN));
    }

    #[test]
    fn top_k_ranks_and_truncates() {
        let h = hist_of(&[("eng", 2), ("mri", 1)]);
        let top = top_k(&h, 1);
        assert_eq!(top, vec![("eng".to_string(), 2, 2.0 / 3.0)]);
        // k beyond the distinct count returns the full list, no padding.
        let top = top_k(&h, 10);
        assert_eq!(top.len(), 2);
        let share_sum: f64 = top.iter().map(|(_, _, s)| s).sum();
        assert!((share_sum - 1.0).abs() < 1e-12);
        // ties break by code
        let h = hist_of(&[("bbb", 5), ("aaa", 5)]);
        assert_eq!(top_k(&h, 1)[0].0, "aaa");
    }

    fn rec(id: &str, text: &str) -> TextRecord {
        TextRecord {
            id: id.into(),
            text: text.into(),
            timestamp: Utc.with_ymd_and_hms(2020, 4, 1, 0, 0, 0).unwrap(),
            lat: Some(-41.0),
            lon: Some(174.0),
            geohash: None,
        }
    }

    #[test]
    fn filter_terms_substring_case_insensitive() {
        let records = vec![rec("1", "corona beer"), rec("2", "hello")];
        let terms: BTreeSet<String> = ["corona".to_string()].into();
        let (kept, removed) = filter_terms(&records, &terms);
        assert_eq!(removed, 1);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "2");

        let (kept, removed) = filter_terms(&records, &["absent".to_string()].into());
        assert_eq!(removed, 0);
        assert_eq!(kept.len(), 2);

        let records = vec![rec("1", "the CoRoNa thing"), rec("2", "Covid-19 news")];
        let terms: BTreeSet<String> = ["corona".to_string(), "covid-19".to_string()].into();
        let (kept, removed) = filter_terms(&records, &terms);
        assert!(kept.is_empty());
        assert_eq!(removed, 2);
    }

    #[test]
    fn spearman_identical_and_reversed() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let r = spearman(&x, &x).unwrap();
        assert!((r.rho - 1.0).abs() < 1e-12);
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.stars, 3);

        let y: Vec<f64> = x.iter().rev().cloned().collect();
        let r = spearman(&x, &y).unwrap();
        assert!((r.rho + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_hand_example_with_ties() {
        // Average ranks: x = [1, 2.5, 2.5, 4], y = [1, 3, 2, 4].
        // Independent oracle (Pearson on those ranks): rho = 0.9486832980505139,
        // two-tailed t-approximation p = 0.05131670194948612.
        let x = vec![1.0, 2.0, 2.0, 4.0];
        let y = vec![1.0, 3.0, 2.0, 4.0];
        let r = spearman(&x, &y).unwrap();
        assert!((r.rho - 0.948_683_298_050_513_9).abs() < 1e-12);
        assert!((r.p_value - 0.051_316_701_949_486_12).abs() < 1e-12);
        assert_eq!(r.stars, 0);
    }

    #[test]
    fn spearman_rejects_bad_input() {
        let x = vec![1.0, 2.0, 3.0];
        assert_eq!(spearman(&x, &x[..2].to_vec()), Err(DiversityError::LengthMismatch(3, 2)));
        assert_eq!(spearman(&x[..2].to_vec(), &x[..2].to_vec()), Err(DiversityError::TooFewPairs(2)));
        assert_eq!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(DiversityError::ZeroVariance("first"))
        );
        assert!(matches!(
            spearman(&[1.0, f64::NAN, 3.0], &x),
            Err(DiversityError::NonFinite(_))
        ));
    }

    #[test]
    fn pearson_linear_is_one() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let y = vec![2.0, 4.0, 6.0, 8.0];
        let r = pearson(&x, &y).unwrap();
        assert!((r.rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_permutation_small_n() {
        // Distinct ranks, perfect correlation: only the identity permutation
        // reaches |rho| = 1 on one side and the full reversal on the other,
        // so p = 2 / 4! = 1/12.
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let r = spearman_exact(&x, &x).unwrap();
        assert!((r.rho - 1.0).abs() < 1e-12);
        assert!((r.p_value - 2.0 / 24.0).abs() < 1e-12);

        let too_long: Vec<f64> = (0..11).map(|i| i as f64).collect();
        assert!(matches!(
            spearman_exact(&too_long, &too_long),
            Err(DiversityError::TooManyForExact { n: 11, .. })
        ));
    }

    #[test]
    fn stars_thresholds() {
        assert_eq!(stars(0.0005), 3);
        assert_eq!(stars(0.005), 2);
        assert_eq!(stars(0.03), 1);
        assert_eq!(stars(0.2), 0);
        assert_eq!(stars(0.05), 0); // boundary is strict
    }

    #[test]
    fn merge_equals_combined_histogram() {
        let a = vec![pred("1", "eng"), pred("2", "mri")];
        let b = vec![pred("3", "eng"), pred("4", "und")];
        let mut ha = histogram(&a, "p", "t", &BTreeSet::new());
        let hb = histogram(&b, "p", "t", &BTreeSet::new());
        ha.merge(&hb);
        let combined: Vec<_> = a.iter().chain(&b).cloned().collect();
        let hc = histogram(&combined, "p", "t", &BTreeSet::new());
        assert_eq!(ha, hc);
    }

    proptest! {
        #[test]
        fn cr_properties(counts in proptest::collection::vec(1u64..5000, 1..20), n in 1usize..25) {
            let counts: BTreeMap<String, u64> =
                counts.iter().enumerate().map(|(i, &c)| (format!("l{i:02}"), c)).collect();
            let h = LanguageHistogram::from_counts("p", "t", counts.clone());
            let cr = concentration_ratio(&h, n).unwrap();
            prop_assert!(cr.value > 0.0 && cr.value <= 1.0 + 1e-12);
            prop_assert_eq!(cr.languages_used.len(), n.min(h.distinct_languages()));

            // monotone in n
            let cr_next = concentration_ratio(&h, n + 1).unwrap();
            prop_assert!(cr_next.value >= cr.value - 1e-12);

            // saturates at the distinct-language count
            let full = concentration_ratio(&h, h.distinct_languages()).unwrap();
            prop_assert!((full.value - 1.0).abs() < 1e-12);

            // scale invariance
            let scaled: BTreeMap<String, u64> = counts.iter().map(|(l, c)| (l.clone(), c * 7)).collect();
            let hs = LanguageHistogram::from_counts("p", "t", scaled);
            let crs = concentration_ratio(&hs, n).unwrap();
            prop_assert!((crs.value - cr.value).abs() < 1e-12);
        }

        #[test]
        fn histogram_merge_commutes(
            langs_a in proptest::collection::vec(0usize..6, 0..30),
            langs_b in proptest::collection::vec(0usize..6, 0..30),
        ) {
            let name = |i: usize| format!("l{i}");
            let preds = |ls: &[usize], offset: usize| -> Vec<LanguagePrediction> {
                ls.iter().enumerate().map(|(i, &l)| pred(&format!("r{}", offset + i), &name(l))).collect()
            };
            let pa = preds(&langs_a, 0);
            let pb = preds(&langs_b, 1000);
            let ha = histogram(&pa, "p", "t", &BTreeSet::new());
            let hb = histogram(&pb, "p", "t", &BTreeSet::new());
            let mut ab = ha.clone();
            ab.merge(&hb);
            let mut ba = hb.clone();
            ba.merge(&ha);
            prop_assert_eq!(&ab, &ba);
            let all: Vec<_> = pa.iter().chain(&pb).cloned().collect();
            prop_assert_eq!(&ab, &histogram(&all, "p", "t", &BTreeSet::new()));
        }

        #[test]
        fn spearman_monotone_invariance(
            xs in proptest::collection::vec(-50i32..50, 4..12),
            ys in proptest::collection::vec(-50i32..50, 4..12),
        ) {
            let n = xs.len().min(ys.len());
            // Integer-valued inputs so the monotone transforms below are exact
            // in f64 and cannot merge or reorder distinct values.
            let x: Vec<f64> = xs[..n].iter().map(|&v| v as f64).collect();
            let y: Vec<f64> = ys[..n].iter().map(|&v| v as f64).collect();
            prop_assume!(spearman(&x, &y).is_ok());
            let base = spearman(&x, &y).unwrap();

            // strictly monotone transform of x leaves rho unchanged
            let tx: Vec<f64> = x.iter().map(|v| v * 3.0 + 10.0).collect();
            let same = spearman(&tx, &y).unwrap();
            prop_assert!((base.rho - same.rho).abs() < 1e-9);

            // negating x flips the sign
            let nx: Vec<f64> = x.iter().map(|v| -v).collect();
            let flipped = spearman(&nx, &y).unwrap();
            prop_assert!((base.rho + flipped.rho).abs() < 1e-9);
        }
    }
}
