//! Trainable character n-gram language identifier.
//!
//! The model is a multinomial classifier over character n-grams with add-alpha
//! smoothing. Texts are normalized (NFC, lowercased, URLs and mentions removed,
//! hashtag bodies kept) and padded with a single boundary space on each side so
//! word-initial and word-final grams are represented. Normalized texts shorter
//! than [`MIN_CLASSIFY_CHARS`] characters classify as `"und"` with confidence 0.
//!
//! # Model file format
//!
//! Little-endian binary, versioned:
//!
//! ```text
//! magic            4 bytes  "LIDM"
//! version          u16      currently 1
//! model_id         u32 length + UTF-8 bytes
//! ngram_min        u8
//! ngram_max        u8
//! alpha            f64
//! language_count   u32
//! per language, in ascending code order:
//!   code           u32 length + UTF-8 bytes
//!   log_prior      f64
//!   log_floor      f64      log-probability of a vocabulary gram unseen here
//!   gram_count     u32
//!   per gram, in ascending byte order:
//!     gram         u32 length + UTF-8 bytes
//!     log_prob     f64
//! ```
//!
//! Training is deterministic, so saving the same corpus with the same config
//! twice produces byte-identical files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Normalized texts shorter than this classify as `"und"`.
pub const MIN_CLASSIFY_CHARS: usize = 5;

/// Language code reported when no prediction is made.
pub const UNDETERMINED: &str = "und";

const MAGIC: &[u8; 4] = b"LIDM";
const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum LangIdError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("language {0:?} has no usable text after normalization")]
    EmptyLanguage(String),
    #[error("empty test set")]
    EmptyTestSet,
    #[error("test label {0:?} is not a model language")]
    UnknownTestLabel(String),
    #[error("prediction sets cover different records: {only_a} ids only in A, {only_b} only in B")]
    IdSetMismatch { only_a: usize, only_b: usize },
    #[error("duplicate record id {0:?} in prediction set")]
    DuplicateId(String),
    #[error("model format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Normalizes raw text for classification: Unicode NFC, URLs and @-mentions
/// removed, leading `#` stripped from hashtags, lowercased, whitespace
/// collapsed to single spaces.
pub fn normalize_text(raw: &str) -> String {
    use unicode_normalization::UnicodeNormalization;
    let nfc: String = raw.nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    for token in nfc.split_whitespace() {
        let body = token.trim_start_matches('#');
        if body.is_empty() || body.starts_with('@') {
            continue;
        }
        let lower_probe = body.to_ascii_lowercase();
        if lower_probe.starts_with("http://")
            || lower_probe.starts_with("https://")
            || lower_probe.starts_with("www.")
        {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        for c in body.chars() {
            out.extend(c.to_lowercase());
        }
    }
    // Lowercasing can produce combining sequences; renormalize so the result
    // is NFC and the whole function is idempotent.
    out.nfc().collect()
}

/// Training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model_id: String,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { model_id: "lidm".into(), ngram_min: 1, ngram_max: 4, alpha: 0.1 }
    }
}

/// One classification outcome for a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguagePrediction {
    pub id: String,
    pub language: String,
    pub confidence: f64,
}

/// A trained character n-gram language model.
#[derive(Debug, Clone)]
pub struct LanguageModel {
    model_id: String,
    ngram_min: usize,
    ngram_max: usize,
    alpha: f64,
    languages: Vec<String>,
    log_priors: Vec<f64>,
    log_floors: Vec<f64>,
    gram_logp: Vec<BTreeMap<String, f64>>,
    // Derived: gram -> log-probability per language, floors baked in.
    rows: HashMap<String, Vec<f64>>,
}

fn push_ngrams(grams: &mut Vec<String>, text: &str, min_n: usize, max_n: usize) {
    let padded: Vec<char> = std::iter::once(' ')
        .chain(text.chars())
        .chain(std::iter::once(' '))
        .collect();
    for n in min_n..=max_n {
        if padded.len() < n {
            continue;
        }
        for w in padded.windows(n) {
            grams.push(w.iter().collect());
        }
    }
}

impl LanguageModel {
    /// Trains a model from `(language, text)` pairs.
    ///
    /// Deterministic given identical corpus order and config. A declared
    /// language whose every sample normalizes to the empty string is an error.
    pub fn train(corpus: &[(String, String)], config: &TrainConfig) -> Result<Self, LangIdError> {
        if config.alpha <= 0.0 || !config.alpha.is_finite() {
            return Err(LangIdError::Config(format!("alpha must be > 0, got {}", config.alpha)));
        }
        if config.ngram_min == 0 || config.ngram_min > config.ngram_max {
            return Err(LangIdError::Config(format!(
                "ngram range ({}, {}) invalid",
                config.ngram_min, config.ngram_max
            )));
        }
        if corpus.is_empty() {
            return Err(LangIdError::Config("empty training corpus".into()));
        }

        let mut counts: BTreeMap<&str, HashMap<String, u64>> = BTreeMap::new();
        let mut doc_counts: BTreeMap<&str, u64> = BTreeMap::new();
        let mut usable: BTreeMap<&str, bool> = BTreeMap::new();
        let mut grams = Vec::new();
        for (lang, text) in corpus {
            let lang = lang.as_str();
            let entry = counts.entry(lang).or_default();
            usable.entry(lang).or_insert(false);
            let norm = normalize_text(text);
            if norm.is_empty() {
                continue;
            }
            *usable.get_mut(lang).unwrap() = true;
            *doc_counts.entry(lang).or_insert(0) += 1;
            grams.clear();
            push_ngrams(&mut grams, &norm, config.ngram_min, config.ngram_max);
            for g in grams.drain(..) {
                *entry.entry(g).or_insert(0) += 1;
            }
        }
        for (lang, ok) in &usable {
            if !ok {
                return Err(LangIdError::EmptyLanguage(lang.to_string()));
            }
        }

        let vocab: BTreeSet<&String> = counts.values().flat_map(|m| m.keys()).collect();
        let vocab_size = vocab.len() as f64;
        let total_docs: u64 = doc_counts.values().sum();

        let languages: Vec<String> = counts.keys().map(|s| s.to_string()).collect();
        let mut log_priors = Vec::with_capacity(languages.len());
        let mut log_floors = Vec::with_capacity(languages.len());
        let mut gram_logp = Vec::with_capacity(languages.len());
        for lang in &languages {
            let m = &counts[lang.as_str()];
            let total: u64 = m.values().sum();
            let denom = total as f64 + config.alpha * vocab_size;
            log_priors.push((doc_counts[lang.as_str()] as f64 / total_docs as f64).ln());
            log_floors.push((config.alpha / denom).ln());
            let mut logp = BTreeMap::new();
            for (g, &c) in m {
                logp.insert(g.clone(), ((c as f64 + config.alpha) / denom).ln());
            }
            gram_logp.push(logp);
        }

        let mut model = Self {
            model_id: config.model_id.clone(),
            ngram_min: config.ngram_min,
            ngram_max: config.ngram_max,
            alpha: config.alpha,
            languages,
            log_priors,
            log_floors,
            gram_logp,
            rows: HashMap::new(),
        };
        model.rebuild_rows();
        Ok(model)
    }

    fn rebuild_rows(&mut self) {
        let n = self.languages.len();
        let mut rows: HashMap<String, Vec<f64>> = HashMap::new();
        for (i, grams) in self.gram_logp.iter().enumerate() {
            for (g, &lp) in grams {
                let row = rows.entry(g.clone()).or_insert_with(|| self.log_floors.clone());
                debug_assert_eq!(row.len(), n);
                row[i] = lp;
            }
        }
        self.rows = rows;
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Model languages, ascending.
    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn ngram_range(&self) -> (usize, usize) {
        (self.ngram_min, self.ngram_max)
    }

    /// Classifies a text. Returns the argmax-posterior language and its
    /// softmax-normalized confidence; ties break to the smallest code.
    pub fn classify(&self, text: &str) -> (String, f64) {
        let norm = normalize_text(text);
        if norm.chars().count() < MIN_CLASSIFY_CHARS {
            return (UNDETERMINED.to_string(), 0.0);
        }
        let scores = self.scores(&norm);

        let mut best = 0usize;
        for i in 1..scores.len() {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        // Softmax with max subtraction; the vector sums to 1 by construction.
        let max = scores[best];
        let mut denom = 0.0;
        for &s in &scores {
            denom += (s - max).exp();
        }
        (self.languages[best].clone(), 1.0 / denom)
    }

    /// Log-posterior scores aligned with [`Self::languages`], before softmax.
    fn scores(&self, normalized: &str) -> Vec<f64> {
        let mut scores = self.log_priors.clone();
        let mut grams = Vec::new();
        push_ngrams(&mut grams, normalized, self.ngram_min, self.ngram_max);
        for g in &grams {
            if let Some(row) = self.rows.get(g.as_str()) {
                for (s, lp) in scores.iter_mut().zip(row) {
                    *s += lp;
                }
            }
            // Grams outside the training vocabulary carry no signal; skip.
        }
        scores
    }

    /// Softmax confidences aligned with [`Self::languages`].
    pub fn confidences(&self, text: &str) -> Vec<f64> {
        let norm = normalize_text(text);
        let scores = self.scores(&norm);
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let denom: f64 = exps.iter().sum();
        exps.iter().map(|e| e / denom).collect()
    }

    /// Classifies a record, carrying its id.
    pub fn classify_record(&self, id: &str, text: &str) -> LanguagePrediction {
        let (language, confidence) = self.classify(text);
        LanguagePrediction { id: id.to_string(), language, confidence }
    }

    /// Evaluates on labeled texts, truncating each normalized text to
    /// `sample_len` characters before classification.
    pub fn evaluate(
        &self,
        test: &[(String, String)],
        sample_len: usize,
    ) -> Result<EvalReport, LangIdError> {
        if test.is_empty() {
            return Err(LangIdError::EmptyTestSet);
        }
        if sample_len < MIN_CLASSIFY_CHARS {
            return Err(LangIdError::Config(format!(
                "sample_len must be >= {MIN_CLASSIFY_CHARS}, got {sample_len}"
            )));
        }
        let known: BTreeSet<&str> = self.languages.iter().map(|s| s.as_str()).collect();
        for (lang, _) in test {
            if !known.contains(lang.as_str()) {
                return Err(LangIdError::UnknownTestLabel(lang.clone()));
            }
        }

        let mut tp: BTreeMap<&str, u64> = BTreeMap::new();
        let mut fp: BTreeMap<String, u64> = BTreeMap::new();
        let mut fneg: BTreeMap<&str, u64> = BTreeMap::new();
        let mut support: BTreeMap<&str, u64> = BTreeMap::new();
        for (lang, text) in test {
            let truncated: String = normalize_text(text).chars().take(sample_len).collect();
            let (pred, _) = self.classify(&truncated);
            *support.entry(lang).or_insert(0) += 1;
            if pred == *lang {
                *tp.entry(lang).or_insert(0) += 1;
            } else {
                *fneg.entry(lang).or_insert(0) += 1;
                *fp.entry(pred).or_insert(0) += 1;
            }
        }

        let mut per_language = BTreeMap::new();
        let labels: Vec<&str> = support.keys().cloned().collect();
        for lang in &labels {
            let t = *tp.get(lang).unwrap_or(&0) as f64;
            let f_p = *fp.get(*lang).unwrap_or(&0) as f64;
            let f_n = *fneg.get(lang).unwrap_or(&0) as f64;
            let precision = if t + f_p > 0.0 { t / (t + f_p) } else { 0.0 };
            let recall = if t + f_n > 0.0 { t / (t + f_n) } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            per_language.insert(
                lang.to_string(),
                LanguageScore { precision, recall, f1, support: support[lang] },
            );
        }
        let k = per_language.len() as f64;
        let macro_precision = per_language.values().map(|s| s.precision).sum::<f64>() / k;
        let macro_recall = per_language.values().map(|s| s.recall).sum::<f64>() / k;
        let macro_f1 = per_language.values().map(|s| s.f1).sum::<f64>() / k;
        Ok(EvalReport { per_language, macro_precision, macro_recall, macro_f1 })
    }

    /// Writes the model in the versioned binary format.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<(), LangIdError> {
        fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
            w.write_all(&(s.len() as u32).to_le_bytes())?;
            w.write_all(s.as_bytes())
        }
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        put_str(w, &self.model_id)?;
        w.write_all(&[self.ngram_min as u8, self.ngram_max as u8])?;
        w.write_all(&self.alpha.to_le_bytes())?;
        w.write_all(&(self.languages.len() as u32).to_le_bytes())?;
        for (i, lang) in self.languages.iter().enumerate() {
            put_str(w, lang)?;
            w.write_all(&self.log_priors[i].to_le_bytes())?;
            w.write_all(&self.log_floors[i].to_le_bytes())?;
            w.write_all(&(self.gram_logp[i].len() as u32).to_le_bytes())?;
            for (g, lp) in &self.gram_logp[i] {
                put_str(w, g)?;
                w.write_all(&lp.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save_file(&self, path: &Path) -> Result<(), LangIdError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save(&mut f)?;
        f.flush()?;
        Ok(())
    }

    /// Reads a model written by [`Self::save`].
    pub fn load<R: Read>(r: &mut R) -> Result<Self, LangIdError> {
        fn get_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N], LangIdError> {
            let mut buf = [0u8; N];
            r.read_exact(&mut buf)?;
            Ok(buf)
        }
        fn get_str<R: Read>(r: &mut R) -> Result<String, LangIdError> {
            let len = u32::from_le_bytes(get_exact(r)?) as usize;
            if len > 1 << 24 {
                return Err(LangIdError::Format(format!("string length {len} implausible")));
            }
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            String::from_utf8(buf).map_err(|e| LangIdError::Format(e.to_string()))
        }

        let magic = get_exact::<_, 4>(r)?;
        if &magic != MAGIC {
            return Err(LangIdError::Format("bad magic bytes (not a model file)".into()));
        }
        let version = u16::from_le_bytes(get_exact(r)?);
        if version != FORMAT_VERSION {
            return Err(LangIdError::Format(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let model_id = get_str(r)?;
        let [ngram_min, ngram_max] = get_exact::<_, 2>(r)?;
        let alpha = f64::from_le_bytes(get_exact(r)?);
        let lang_count = u32::from_le_bytes(get_exact(r)?) as usize;
        let mut languages = Vec::with_capacity(lang_count);
        let mut log_priors = Vec::with_capacity(lang_count);
        let mut log_floors = Vec::with_capacity(lang_count);
        let mut gram_logp = Vec::with_capacity(lang_count);
        for _ in 0..lang_count {
            let code = get_str(r)?;
            if let Some(prev) = languages.last() {
                if prev >= &code {
                    return Err(LangIdError::Format("language codes out of order".into()));
                }
            }
            languages.push(code);
            log_priors.push(f64::from_le_bytes(get_exact(r)?));
            log_floors.push(f64::from_le_bytes(get_exact(r)?));
            let gram_count = u32::from_le_bytes(get_exact(r)?) as usize;
            let mut grams = BTreeMap::new();
            for _ in 0..gram_count {
                let g = get_str(r)?;
                let lp = f64::from_le_bytes(get_exact(r)?);
                if !lp.is_finite() {
                    return Err(LangIdError::Format(format!("non-finite weight for gram {g:?}")));
                }
                grams.insert(g, lp);
            }
            gram_logp.push(grams);
        }
        if languages.is_empty() {
            return Err(LangIdError::Format("model declares no languages".into()));
        }
        let mut model = Self {
            model_id,
            ngram_min: ngram_min as usize,
            ngram_max: ngram_max as usize,
            alpha,
            languages,
            log_priors,
            log_floors,
            gram_logp,
            rows: HashMap::new(),
        };
        model.rebuild_rows();
        Ok(model)
    }

    pub fn load_file(path: &Path) -> Result<Self, LangIdError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::load(&mut f)
    }
}

/// Per-language precision/recall/F1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanguageScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub per_language: BTreeMap<String, LanguageScore>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Outcome of comparing two prediction sets over the same records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub total: u64,
    pub mismatches: u64,
    pub mismatch_rate: f64,
    /// `((language_a, language_b), count)` sorted by descending count, then pair.
    pub reclassification_pairs: Vec<((String, String), u64)>,
}

/// Compares two prediction sets covering identical record ids.
///
/// A record counts as a mismatch whenever the predicted languages differ,
/// including `"und"` versus a concrete language.
pub fn compare_models(
    preds_a: &[LanguagePrediction],
    preds_b: &[LanguagePrediction],
) -> Result<AgreementReport, LangIdError> {
    fn index(preds: &[LanguagePrediction]) -> Result<BTreeMap<&str, &str>, LangIdError> {
        let mut m = BTreeMap::new();
        for p in preds {
            if m.insert(p.id.as_str(), p.language.as_str()).is_some() {
                return Err(LangIdError::DuplicateId(p.id.clone()));
            }
        }
        Ok(m)
    }
    let a = index(preds_a)?;
    let b = index(preds_b)?;
    if a.len() != b.len() || !a.keys().eq(b.keys()) {
        let only_a = a.keys().filter(|k| !b.contains_key(*k)).count();
        let only_b = b.keys().filter(|k| !a.contains_key(*k)).count();
        return Err(LangIdError::IdSetMismatch { only_a, only_b });
    }

    let total = a.len() as u64;
    let mut pair_counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut mismatches = 0u64;
    for (id, la) in &a {
        let lb = b[id];
        if *la != lb {
            mismatches += 1;
            *pair_counts.entry((la.to_string(), lb.to_string())).or_insert(0) += 1;
        }
    }
    let mut reclassification_pairs: Vec<_> = pair_counts.into_iter().collect();
    reclassification_pairs.sort_by(|(pa, ca), (pb, cb)| cb.cmp(ca).then_with(|| pa.cmp(pb)));
    Ok(AgreementReport {
        total,
        mismatches,
        mismatch_rate: if total == 0 { 0.0 } else { mismatches as f64 / total as f64 },
        reclassification_pairs,
    })
}

/// Loads a seed corpus directory: one `<code>.txt` per language, one sample
/// per line. Files are read in ascending name order.
pub fn load_seed_corpus(dir: &Path) -> Result<Vec<(String, String)>, LangIdError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(LangIdError::Config(format!("no .txt seed files in {}", dir.display())));
    }
    let mut corpus = Vec::new();
    for path in files {
        let lang = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| LangIdError::Config(format!("bad seed file name {}", path.display())))?
            .to_string();
        let body = std::fs::read_to_string(&path)?;
        for line in body.lines() {
            let line = line.trim();
            if !line.is_empty() {
                corpus.push((lang.clone(), line.to_string()));
            }
        }
    }
    Ok(corpus)
}

/// Splits a corpus deterministically: per language, every `holdout_every`-th
/// sample goes to the held-out set.
pub fn split_corpus(
    corpus: &[(String, String)],
    holdout_every: usize,
) -> (Vec<(String, String)>, Vec<(String, String)>) {
    assert!(holdout_every >= 2, "holdout_every must be >= 2");
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (lang, text) in corpus {
        let n = seen.entry(lang.as_str()).or_insert(0);
        if *n % holdout_every == holdout_every - 1 {
            test.push((lang.clone(), text.clone()));
        } else {
            train.push((lang.clone(), text.clone()));
        }
        *n += 1;
    }
    (train, test)
}

/// Repeats samples of the listed languages `factor` times; used to build the
/// second model of the dual-model protocol from the same corpus.
pub fn boost_corpus(
    corpus: &[(String, String)],
    boosts: &BTreeMap<String, usize>,
) -> Vec<(String, String)> {
    let mut out = Vec::with_capacity(corpus.len());
    for (lang, text) in corpus {
        let reps = boosts.get(lang).copied().unwrap_or(1).max(1);
        for _ in 0..reps {
            out.push((lang.clone(), text.clone()));
        }
    }
    out
}

/// Writes predictions as JSONL in input order.
pub fn write_predictions<W: Write>(w: &mut W, preds: &[LanguagePrediction]) -> Result<(), LangIdError> {
    for p in preds {
        let line = serde_json::json!({"id": p.id, "language": p.language, "confidence": p.confidence});
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<LanguagePrediction>, LangIdError> {
    let body = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: LanguagePrediction = serde_json::from_str(line)
            .map_err(|e| LangIdError::Format(format!("line {}: {e}", i + 1)))?;
        out.push(p);
    }
    Ok(out)
}
