//! Nearest-point catchment assignment and geographic rollups.
//!
//! Each record goes to its nearest collection point by great-circle distance,
//! provided that distance is within the catchment radius (default
//! [`DEFAULT_RADIUS_KM`]); otherwise it is OUTSIDE. Catchments overlap, so
//! "nearest" is the whole rule; distance ties break to the smaller point name.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::geo::haversine_km;
use crate::record::{CollectionPoint, TextRecord};

/// Catchment radius in kilometres used when none is given.
pub const DEFAULT_RADIUS_KM: f64 = 50.0;

/// Sentinel emitted in CSV output for unassigned records.
pub const OUTSIDE: &str = "OUTSIDE";

#[derive(Debug, Error)]
pub enum CatchmentError {
    #[error("empty collection point set")]
    EmptyPointSet,
    #[error("record {0:?} has neither coordinates nor geohash")]
    NoPosition(String),
    #[error("assignment references unknown point {0:?}")]
    UnknownPoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A record's resolved catchment. `point_name`/`region` are `None` when the
/// record is outside every catchment; `distance_km` is always the distance to
/// the nearest point.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub record_id: String,
    pub point_name: Option<String>,
    pub region: Option<String>,
    pub distance_km: f64,
}

impl Assignment {
    pub fn is_assigned(&self) -> bool {
        self.point_name.is_some()
    }

    pub fn point_name_or_outside(&self) -> &str {
        self.point_name.as_deref().unwrap_or(OUTSIDE)
    }

    pub fn region_or_outside(&self) -> &str {
        self.region.as_deref().unwrap_or(OUTSIDE)
    }
}

/// Assigns one record to its nearest in-radius collection point.
pub fn assign(
    record: &TextRecord,
    points: &[CollectionPoint],
    radius_km: f64,
) -> Result<Assignment, CatchmentError> {
    if points.is_empty() {
        return Err(CatchmentError::EmptyPointSet);
    }
    let pos = record.position().ok_or_else(|| CatchmentError::NoPosition(record.id.clone()))?;

    let mut best: Option<(f64, &CollectionPoint)> = None;
    for p in points {
        let d = haversine_km(pos, p.position());
        best = match best {
            None => Some((d, p)),
            Some((bd, bp)) => {
                if d < bd || (d == bd && p.name < bp.name) {
                    Some((d, p))
                } else {
                    Some((bd, bp))
                }
            }
        };
    }
    let (distance_km, nearest) = best.expect("points is non-empty");
    if distance_km <= radius_km {
        Ok(Assignment {
            record_id: record.id.clone(),
            point_name: Some(nearest.name.clone()),
            region: Some(nearest.region.clone()),
            distance_km,
        })
    } else {
        Ok(Assignment { record_id: record.id.clone(), point_name: None, region: None, distance_km })
    }
}

/// Assigns a batch of records in parallel. Output order matches input order,
/// so results are identical to a sequential run.
pub fn assign_all(
    records: &[TextRecord],
    points: &[CollectionPoint],
    radius_km: f64,
) -> Result<Vec<Assignment>, CatchmentError> {
    records.par_iter().map(|r| assign(r, points, radius_km)).collect()
}

/// Grouping level for [`rollup`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Point,
    Region,
    Island,
    UrbanRural,
    National,
}

impl std::str::FromStr for Level {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "point" => Ok(Level::Point),
            "region" => Ok(Level::Region),
            "island" => Ok(Level::Island),
            "urban_rural" | "urban-rural" => Ok(Level::UrbanRural),
            "national" => Ok(Level::National),
            other => Err(format!(
                "unknown level {other:?} (expected point|region|island|urban_rural|national)"
            )),
        }
    }
}

/// Record ids partitioned by a grouping key, with OUTSIDE records kept aside.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollup {
    pub groups: BTreeMap<String, Vec<String>>,
    pub outside: Vec<String>,
}

/// Partitions assigned records by the requested level. OUTSIDE records are
/// reported separately, never dropped.
pub fn rollup(
    assignments: &[Assignment],
    points: &[CollectionPoint],
    level: Level,
) -> Result<Rollup, CatchmentError> {
    let by_name: BTreeMap<&str, &CollectionPoint> =
        points.iter().map(|p| (p.name.as_str(), p)).collect();
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut outside = Vec::new();
    for a in assignments {
        let Some(name) = &a.point_name else {
            outside.push(a.record_id.clone());
            continue;
        };
        let point = by_name
            .get(name.as_str())
            .ok_or_else(|| CatchmentError::UnknownPoint(name.clone()))?;
        let key = match level {
            Level::Point => point.name.clone(),
            Level::Region => point.region.clone(),
            Level::Island => point.island.to_string(),
            Level::UrbanRural => point.urban_rural.to_string(),
            Level::National => "national".to_string(),
        };
        groups.entry(key).or_default().push(a.record_id.clone());
    }
    Ok(Rollup { groups, outside })
}

/// Corpus coverage: how many records were captured, and where.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub total: u64,
    pub assigned: u64,
    pub outside: u64,
    pub per_region: BTreeMap<String, u64>,
    /// Region share of the assigned total; values sum to 1 when anything is assigned.
    pub region_shares: BTreeMap<String, f64>,
}

impl CoverageReport {
    /// Builds a report directly from per-region counts (no OUTSIDE component).
    pub fn from_region_counts(per_region: BTreeMap<String, u64>) -> Self {
        let assigned: u64 = per_region.values().sum();
        let region_shares = per_region
            .iter()
            .map(|(r, &c)| (r.clone(), if assigned == 0 { 0.0 } else { c as f64 / assigned as f64 }))
            .collect();
        Self { total: assigned, assigned, outside: 0, per_region, region_shares }
    }
}

/// Summarizes assignments into per-region counts and corpus shares.
pub fn coverage(assignments: &[Assignment]) -> CoverageReport {
    let mut per_region: BTreeMap<String, u64> = BTreeMap::new();
    let mut outside = 0u64;
    for a in assignments {
        match &a.region {
            Some(region) => *per_region.entry(region.clone()).or_insert(0) += 1,
            None => outside += 1,
        }
    }
    let assigned: u64 = per_region.values().sum();
    let region_shares = per_region
        .iter()
        .map(|(r, &c)| (r.clone(), if assigned == 0 { 0.0 } else { c as f64 / assigned as f64 }))
        .collect();
    CoverageReport { total: assigned + outside, assigned, outside, per_region, region_shares }
}

/// Writes assignments as CSV: `record_id,point_name,region,distance_km`, with
/// the OUTSIDE sentinel for unassigned records. Rows keep input order.
pub fn write_assignments_csv<W: Write>(w: &mut W, assignments: &[Assignment]) -> Result<(), CatchmentError> {
    writeln!(w, "record_id,point_name,region,distance_km")?;
    for a in assignments {
        writeln!(
            w,
            "{},{},{},{:.3}",
            a.record_id,
            a.point_name_or_outside(),
            a.region_or_outside(),
            a.distance_km
        )?;
    }
    Ok(())
}

/// Reads an assignment CSV written by [`write_assignments_csv`].
pub fn read_assignments_csv(path: &std::path::Path) -> Result<Vec<Assignment>, String> {
    let body = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut lines = body.lines();
    match lines.next() {
        Some("record_id,point_name,region,distance_km") => {}
        other => return Err(format!("bad assignment CSV header: {other:?}")),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(format!("line {}: expected 4 columns", i + 2));
        }
        let distance_km: f64 =
            cols[3].parse().map_err(|e| format!("line {}: bad distance: {e}", i + 2))?;
        let (point_name, region) = if cols[1] == OUTSIDE {
            (None, None)
        } else {
            (Some(cols[1].to_string()), Some(cols[2].to_string()))
        };
        out.push(Assignment { record_id: cols[0].to_string(), point_name, region, distance_km });
    }
    Ok(out)
}
