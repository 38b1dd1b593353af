//! Object records for the benchmark.

use crate::hand_model::SweepTable;
use crate::planner::reachable_range;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Built-in catalog. The values are reconstructed estimates.
pub const DEFAULT_CATALOG: &str = include_str!("../../data/objects.csv");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog row {row}: {source}")]
    Csv { row: usize, source: csv::Error },
    #[error("object `{name}`: {reason}")]
    Invalid { name: String, reason: String },
    #[error("catalog is empty")]
    Empty,
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Rigid,
    Delicate,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Rigid => "rigid",
            Category::Delicate => "delicate",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub category: Category,
    #[serde(rename = "width_mm")]
    pub width: f64,
    /// Height of the grasp point above the ground plane.
    #[serde(rename = "grasp_point_height_mm")]
    pub grasp_point_height: f64,
    #[serde(rename = "major_axis_half_length_mm")]
    pub major_axis_half_length: f64,
    /// Sustained force (N) that damages the object; `None` for rigid items.
    #[serde(rename = "fragility_limit_n")]
    pub fragility_limit: Option<f64>,
    #[serde(rename = "mass_kg")]
    pub mass: f64,
    #[serde(rename = "slip_displacement_limit_mm", default = "default_slip_limit")]
    pub slip_displacement_limit: f64,
    pub n_fingers: usize,
}

fn default_slip_limit() -> f64 {
    10.0
}

impl ObjectSpec {
    /// Field checks that need no hand model.
    pub fn validate_fields(&self) -> Result<(), CatalogError> {
        let bad = |reason: String| CatalogError::Invalid { name: self.name.clone(), reason };
        let positive = [
            ("width", self.width),
            ("major_axis_half_length", self.major_axis_half_length),
            ("mass", self.mass),
            ("slip_displacement_limit", self.slip_displacement_limit),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(format!("{field} must be positive, got {v}")));
            }
        }
        if !(self.grasp_point_height.is_finite() && self.grasp_point_height >= 0.0) {
            return Err(bad(format!("grasp_point_height must be ≥ 0, got {}", self.grasp_point_height)));
        }
        if let Some(limit) = self.fragility_limit {
            if !(limit.is_finite() && limit > 0.0) {
                return Err(bad(format!("fragility_limit must be positive, got {limit}")));
            }
        }
        if !(2..=5).contains(&self.n_fingers) {
            return Err(bad(format!("n_fingers {} outside [2, 5]", self.n_fingers)));
        }
        Ok(())
    }

    /// Field checks plus the planner's reachable width range.
    pub fn validate(&self, table: &SweepTable) -> Result<(), CatalogError> {
        self.validate_fields()?;
        let (lo, hi) = reachable_range(table, self.n_fingers)
            .map_err(|e| CatalogError::Invalid { name: self.name.clone(), reason: e.to_string() })?;
        if self.width < lo || self.width > hi {
            return Err(CatalogError::Invalid {
                name: self.name.clone(),
                reason: format!("width {} mm outside [{lo:.1}, {hi:.1}] mm", self.width),
            });
        }
        Ok(())
    }
}

/// Parses catalog CSV; `#` lines are comments.
pub fn parse_catalog(text: &str) -> Result<Vec<ObjectSpec>, CatalogError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (row, rec) in reader.deserialize::<ObjectSpec>().enumerate() {
        let obj = rec.map_err(|source| CatalogError::Csv { row: row + 1, source })?;
        obj.validate_fields()?;
        out.push(obj);
    }
    if out.is_empty() {
        return Err(CatalogError::Empty);
    }
    Ok(out)
}

pub fn load_catalog(path: &Path) -> Result<Vec<ObjectSpec>, CatalogError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CatalogError::Io { path: path.display().to_string(), source })?;
    parse_catalog(&text)
}

pub fn default_catalog() -> Vec<ObjectSpec> {
    parse_catalog(DEFAULT_CATALOG).expect("built-in catalog parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand_model::{build_sweep_table, LinkageParams};

    #[test]
    fn default_catalog_is_valid() {
        let objects = default_catalog();
        assert_eq!(objects.len(), 15);
        assert_eq!(objects.iter().filter(|o| o.category == Category::Delicate).count(), 5);
        assert!(objects.iter().all(|o| (o.category == Category::Delicate) == o.fragility_limit.is_some()));
        let table = build_sweep_table(&LinkageParams::default(), 200).unwrap();
        for o in &objects {
            o.validate(&table).unwrap();
        }
    }

    #[test]
    fn rejects_bad_rows() {
        let header = "name,category,width_mm,grasp_point_height_mm,major_axis_half_length_mm,fragility_limit_n,mass_kg,slip_displacement_limit_mm,n_fingers\n";
        assert!(parse_catalog(header).is_err());
        assert!(parse_catalog(&format!("{header}x,rigid,-1,5,5,,0.1,10,2\n")).is_err());
        assert!(parse_catalog(&format!("{header}x,delicate,20,5,5,0,0.1,10,2\n")).is_err());
        assert!(parse_catalog(&format!("{header}x,soft,20,5,5,,0.1,10,2\n")).is_err());
        let ok = parse_catalog(&format!("{header}x,rigid,20,5,5,,0.1,10,2\n")).unwrap();
        assert_eq!(ok[0].fragility_limit, None);
    }
}
