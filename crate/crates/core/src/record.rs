//! Record and collection-point types plus their file formats.
//!
//! Records arrive as JSONL, one object per line, with required keys `id`,
//! `text`, `timestamp` (ISO-8601) and either `lat`+`lon` or `geohash`.
//! Collection points arrive as CSV with header
//! `name,region,island,urban_rural,lat,lon`; lines starting with `#` are
//! treated as comments.

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{geohash_decode, GeoError, GeoPoint, GEOHASH_MAX_PRECISION};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: parse error: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: validation error: {msg}")]
    Validation { line: usize, msg: String },
    #[error("point set: {0}")]
    PointSet(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl RecordError {
    fn parse(msg: impl Into<String>) -> Self {
        RecordError::Parse { line: 0, msg: msg.into() }
    }

    fn validation(msg: impl Into<String>) -> Self {
        RecordError::Validation { line: 0, msg: msg.into() }
    }

    /// Attaches a 1-based source line number to a parse/validation error.
    pub fn with_line(mut self, n: usize) -> Self {
        match &mut self {
            RecordError::Parse { line, .. } | RecordError::Validation { line, .. } => *line = n,
            _ => {}
        }
        self
    }
}

/// One geotagged message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRecord {
    pub id: String,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geohash: Option<String>,
}

impl TextRecord {
    /// The record's position: explicit coordinates if present, otherwise the
    /// center of its geohash cell.
    pub fn position(&self) -> Option<GeoPoint> {
        match (self.lat, self.lon) {
            (Some(lat), Some(lon)) => Some(GeoPoint { lat, lon }),
            _ => self
                .geohash
                .as_deref()
                .and_then(|h| geohash_decode(h).ok())
                .map(|b| b.center()),
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<serde_json::Value>,
    text: Option<String>,
    timestamp: Option<String>,
    lat: Option<f64>,
    lon: Option<f64>,
    geohash: Option<String>,
}

/// Parses one JSONL record line.
///
/// Every failure names the offending field. The returned error carries line
/// number 0; [`read_records`] fills in real line numbers.
pub fn parse_record(line: &str) -> Result<TextRecord, RecordError> {
    let raw: RawRecord =
        serde_json::from_str(line).map_err(|e| RecordError::parse(format!("invalid JSON: {e}")))?;

    let id = match raw.id {
        Some(serde_json::Value::String(s)) if !s.is_empty() => s,
        Some(serde_json::Value::Number(n)) => n.to_string(),
        Some(_) => return Err(RecordError::parse("field \"id\" must be a non-empty string")),
        None => return Err(RecordError::parse("missing field \"id\"")),
    };
    let text = raw.text.ok_or_else(|| RecordError::parse("missing field \"text\""))?;
    if text.trim().is_empty() {
        return Err(RecordError::validation("field \"text\" is empty"));
    }
    let ts_str = raw.timestamp.ok_or_else(|| RecordError::parse("missing field \"timestamp\""))?;
    let timestamp = DateTime::parse_from_rfc3339(&ts_str)
        .map_err(|e| RecordError::parse(format!("field \"timestamp\": {e}")))?
        .with_timezone(&Utc);

    let coords = match (raw.lat, raw.lon) {
        (Some(lat), Some(lon)) => {
            Some(GeoPoint::new(lat, lon).map_err(|e: GeoError| RecordError::validation(e.to_string()))?)
        }
        (Some(_), None) => return Err(RecordError::parse("field \"lon\" missing while \"lat\" present")),
        (None, Some(_)) => return Err(RecordError::parse("field \"lat\" missing while \"lon\" present")),
        (None, None) => None,
    };

    if let Some(h) = &raw.geohash {
        if h.is_empty() || h.len() > GEOHASH_MAX_PRECISION {
            return Err(RecordError::validation(format!(
                "field \"geohash\" must be 1..={GEOHASH_MAX_PRECISION} characters"
            )));
        }
        let cell = geohash_decode(h).map_err(|e| RecordError::validation(format!("field \"geohash\": {e}")))?;
        if let Some(p) = coords {
            if !cell.contains(p) {
                return Err(RecordError::validation(
                    "geohash cell does not contain the stated coordinates",
                ));
            }
        }
    } else if coords.is_none() {
        return Err(RecordError::parse("record needs either \"lat\"+\"lon\" or \"geohash\""));
    }

    Ok(TextRecord {
        id,
        text,
        timestamp,
        lat: coords.map(|p| p.lat),
        lon: coords.map(|p| p.lon),
        geohash: raw.geohash,
    })
}

/// Reads records from a JSONL stream, attaching 1-based line numbers to errors.
/// Blank lines are skipped.
pub fn read_records<R: BufRead>(reader: R) -> impl Iterator<Item = Result<TextRecord, RecordError>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(parse_record(&l).map_err(|e| e.with_line(i + 1))),
            Err(e) => Some(Err(RecordError::Io(e))),
        })
}

/// Reads all records from a JSONL file, failing on the first bad line.
pub fn read_records_file(path: &Path) -> Result<Vec<TextRecord>, RecordError> {
    let f = std::fs::File::open(path)?;
    read_records(std::io::BufReader::new(f)).collect()
}

/// Serializes a record to its JSONL line (no trailing newline).
pub fn record_to_json(r: &TextRecord) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert("id".into(), r.id.clone().into());
    obj.insert("text".into(), r.text.clone().into());
    obj.insert(
        "timestamp".into(),
        r.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string().into(),
    );
    if let (Some(lat), Some(lon)) = (r.lat, r.lon) {
        obj.insert("lat".into(), lat.into());
        obj.insert("lon".into(), lon.into());
    }
    if let Some(h) = &r.geohash {
        obj.insert("geohash".into(), h.clone().into());
    }
    serde_json::Value::Object(obj).to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Island {
    North,
    South,
}

impl std::str::FromStr for Island {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "north" => Ok(Island::North),
            "south" => Ok(Island::South),
            other => Err(format!("unknown island {other:?} (expected north|south)")),
        }
    }
}

impl std::fmt::Display for Island {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Island::North => "north",
            Island::South => "south",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UrbanRural {
    Urban,
    Rural,
}

impl std::str::FromStr for UrbanRural {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "urban" => Ok(UrbanRural::Urban),
            "rural" => Ok(UrbanRural::Rural),
            other => Err(format!("unknown urban_rural {other:?} (expected urban|rural)")),
        }
    }
}

impl std::fmt::Display for UrbanRural {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UrbanRural::Urban => "urban",
            UrbanRural::Rural => "rural",
        })
    }
}

/// A named catchment center with its region metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectionPoint {
    pub name: String,
    pub region: String,
    pub island: Island,
    pub urban_rural: UrbanRural,
    pub lat: f64,
    pub lon: f64,
}

impl CollectionPoint {
    pub fn position(&self) -> GeoPoint {
        GeoPoint { lat: self.lat, lon: self.lon }
    }
}

/// Loads a collection-point CSV. Names must be unique and regions non-empty.
pub fn load_points(path: &Path) -> Result<Vec<CollectionPoint>, RecordError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut points = Vec::new();
    let mut names = BTreeSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2; // header is line 1
        let field = |idx: usize, name: &str| -> Result<String, RecordError> {
            row.get(idx)
                .map(str::to_string)
                .ok_or_else(|| RecordError::parse(format!("missing column {name:?}")).with_line(line))
        };
        let name = field(0, "name")?;
        let region = field(1, "region")?;
        if name.is_empty() {
            return Err(RecordError::validation("empty point name").with_line(line));
        }
        if region.is_empty() {
            return Err(RecordError::validation(format!("point {name:?} has no region")).with_line(line));
        }
        if !names.insert(name.clone()) {
            return Err(RecordError::validation(format!("duplicate point name {name:?}")).with_line(line));
        }
        let island: Island = field(2, "island")?
            .parse()
            .map_err(|e: String| RecordError::validation(e).with_line(line))?;
        let urban_rural: UrbanRural = field(3, "urban_rural")?
            .parse()
            .map_err(|e: String| RecordError::validation(e).with_line(line))?;
        let lat: f64 = field(4, "lat")?
            .parse()
            .map_err(|e| RecordError::parse(format!("bad lat: {e}")).with_line(line))?;
        let lon: f64 = field(5, "lon")?
            .parse()
            .map_err(|e| RecordError::parse(format!("bad lon: {e}")).with_line(line))?;
        GeoPoint::new(lat, lon).map_err(|e| RecordError::validation(e.to_string()).with_line(line))?;
        points.push(CollectionPoint { name, region, island, urban_rural, lat, lon });
    }
    if points.is_empty() {
        return Err(RecordError::PointSet("no collection points in file".into()));
    }
    Ok(points)
}
