//! Integration checks over the bundled data files.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use langdiv::catchment::CoverageReport;
use langdiv::census::{
    apply_exclusions, census_histogram, load_census, load_region_profiles, Crosswalk,
    ExclusionPolicy,
};
use langdiv::diversity::{concentration_ratio, top_k, Band};
use langdiv::langid::load_seed_corpus;
use langdiv::record::load_points;
use langdiv::synthgen::{load_profiles, SentencePool};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

#[test]
fn collection_points_fixture_is_complete() {
    let points = load_points(&data_dir().join("fixtures/collection_points.csv")).unwrap();
    assert_eq!(points.len(), 100);

    let regions: BTreeSet<&str> = points.iter().map(|p| p.region.as_str()).collect();
    assert_eq!(regions.len(), 15);
    // Nelson has no collection point of its own; its records land in
    // neighbouring Tasman and Marlborough catchments.
    assert!(!regions.contains("Nelson"));
    assert!(regions.contains("Tasman"));
    assert!(regions.contains("Marlborough"));
}

#[test]
fn corpus_summary_shares_match_counts() {
    // The corpus summary's raw counts imply the published per-region shares;
    // the biggest region carries 18.5% +/- 0.1 of the corpus.
    let body = std::fs::read_to_string(data_dir().join("fixtures/table5_corpus_by_region.csv")).unwrap();
    let mut counts = std::collections::BTreeMap::new();
    for line in body.lines().filter(|l| !l.starts_with('#') && !l.starts_with("region,")) {
        let cols: Vec<&str> = line.split(',').collect();
        counts.insert(cols[0].to_string(), cols[1].parse::<u64>().unwrap());
    }
    assert_eq!(counts.len(), 15);
    let report = CoverageReport::from_region_counts(counts);
    assert_eq!(report.per_region["Auckland"], 1_850_642);
    assert!((report.region_shares["Auckland"] - 0.185).abs() <= 0.001);
    let share_sum: f64 = report.region_shares.values().sum();
    assert!((share_sum - 1.0).abs() < 1e-9);
}

#[test]
fn region_profiles_join_cleanly() {
    let fixtures = data_dir().join("fixtures");
    let profiles = load_region_profiles(
        &fixtures.join("table5_corpus_by_region.csv"),
        &fixtures.join("table6_region_demographics.csv"),
    )
    .unwrap();
    assert_eq!(profiles.len(), 15);
    let auckland = profiles.iter().find(|p| p.region == "Auckland").unwrap();
    assert_eq!(auckland.pop_density, 318.1);
    assert_eq!(auckland.median_age, 34.7);
    assert_eq!(auckland.corpus_share, 0.185);
}

#[test]
fn national_census_fixture_reproduces_cr() {
    let fixtures = data_dir().join("fixtures");
    let crosswalk = Crosswalk::load(&fixtures.join("census_crosswalk.csv")).unwrap();
    let (table, warnings) =
        load_census(&fixtures.join("census_national_2018.csv"), &crosswalk).unwrap();
    // The residual Sinitic group and the rows the exclusions remove are the
    // only labels without a crosswalk entry.
    assert_eq!(
        warnings,
        vec![
            "New Zealand Sign Language",
            "None (e.g. too young to talk)",
            "Other not further defined",
            "Sinitic not further defined",
        ]
    );

    let (kept, manifest) = apply_exclusions(&table, &ExclusionPolicy::default());
    assert_eq!(manifest.per_label.len(), 3);
    assert!(manifest.per_label.contains_key("New Zealand Sign Language"));
    assert_eq!(kept.total_count() + manifest.count_dropped(), table.total_count());

    let hist = census_histogram(&kept, "New Zealand", 2018).unwrap();
    assert_eq!(hist.total, 100_000);
    let cr = concentration_ratio(&hist, 10).unwrap();
    assert!((cr.value - 0.79).abs() <= 0.005, "national CR_10 {} != 0.79", cr.value);
    assert_eq!(cr.band, Band::High);

    // Ranking starts with English, te reo Maori, Samoan.
    let top = top_k(&hist, 3);
    let codes: Vec<&str> = top.iter().map(|(l, _, _)| l.as_str()).collect();
    assert_eq!(codes, vec!["eng", "mri", "smo"]);

    // The unmapped Sinitic row survives under its sentinel with its count.
    assert_eq!(hist.counts["x-sinitic-not-further-defined"], 950);
}

#[test]
fn seed_and_pool_corpora_are_disjoint_and_cover_same_languages() {
    let seeds = load_seed_corpus(&data_dir().join("seeds")).unwrap();
    let pool = load_seed_corpus(&data_dir().join("pool")).unwrap();
    let seed_langs: BTreeSet<&str> = seeds.iter().map(|(l, _)| l.as_str()).collect();
    let pool_langs: BTreeSet<&str> = pool.iter().map(|(l, _)| l.as_str()).collect();
    assert_eq!(seed_langs, pool_langs);
    assert!(seed_langs.len() >= 12);

    // Pool sentences never appear in the seed corpus (they feed the synthetic
    // generator, so classification tests stay honest).
    let seed_texts: BTreeSet<&str> = seeds.iter().map(|(_, t)| t.as_str()).collect();
    for (lang, text) in &pool {
        assert!(!seed_texts.contains(text.as_str()), "pool line leaked into seeds: {lang} {text:?}");
    }
}

#[test]
fn synth_profiles_fixture_loads_and_validates() {
    let profiles = load_profiles(&data_dir().join("fixtures/synth_profiles.json")).unwrap();
    assert_eq!(profiles.len(), 3);
    let pool = SentencePool::load_dir(&data_dir().join("pool")).unwrap();
    for p in &profiles {
        let sum: f64 = p.mixture.values().sum();
        assert!((sum - 1.0).abs() < 1e-9, "{}: mixture sums to {sum}", p.region);
        for lang in p.mixture.keys() {
            assert!(pool.lines(lang).is_some(), "{}: {lang} missing from pool", p.region);
        }
    }
}
