//! Measures the linguistic diversity of places from geotagged short texts.
//!
//! The pipeline runs in stages, each usable on its own:
//!
//! 1. [`record`] — parse geotagged text records (JSONL) and collection points (CSV).
//! 2. [`langid`] — train a character n-gram language identifier, classify records,
//!    and compare two classifiers' outputs.
//! 3. [`catchment`] — assign records to their nearest collection point within a
//!    fixed-radius circular catchment and roll assignments up to coarser geographies.
//! 4. [`diversity`] — language histograms, the CR_n concentration ratio, rankings,
//!    and rank/linear correlation with significance.
//! 5. [`census`] — census-style ground-truth tables, exclusion rules, and the
//!    census-vs-model comparison battery.
//! 6. [`timeseries`] — monthly bucketing, per-language frequency series, monthly
//!    CR series, and outlier/gap/stationarity diagnostics.
//! 7. [`synthgen`] — seeded synthetic corpora with known language mixtures, used
//!    as an end-to-end verification harness.
//! 8. [`report`] — deterministic summary and plot-ready CSV emission.
//!
//! All operations are pure and deterministic: identical inputs produce identical
//! outputs, byte for byte, regardless of worker count.

pub mod catchment;
pub mod census;
pub mod diversity;
pub mod geo;
pub mod langid;
pub mod record;
pub mod report;
pub mod synthgen;
pub mod timeseries;

pub use catchment::{assign, assign_all, coverage, rollup, Assignment, CoverageReport, Level};
pub use census::{
    apply_exclusions, census_histogram, comparison_battery, load_census, CensusTable,
    Crosswalk, ExclusionPolicy, RegionProfile,
};
pub use diversity::{
    concentration_ratio, filter_terms, histogram, pearson, spearman, top_k, Band, CRResult,
    CorrelationResult, LanguageHistogram,
};
pub use geo::{geohash_decode, geohash_encode, haversine_km, GeoPoint, GeohashBox};
pub use langid::{
    compare_models, normalize_text, AgreementReport, LanguageModel, LanguagePrediction,
    TrainConfig,
};
pub use record::{parse_record, read_records, CollectionPoint, Island, TextRecord, UrbanRural};
pub use synthgen::{analytic_cr, generate, MonthSpan, RegionMixProfile, SentencePool};
pub use timeseries::{
    bucket_monthly, diagnostics, language_frequency_series, monthly_cr_series, CrSeries,
    DiagnosticsParams, Mode, MonthKey, MonthlyBucket, SeriesDiagnostics,
};
