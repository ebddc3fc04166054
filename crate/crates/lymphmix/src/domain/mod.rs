//! Data model for the three-level hierarchy (specimens → fields → vessels),
//! CSV ingestion/validation, and exploratory summaries.

pub mod csv_io;
pub mod summary;

pub use csv_io::{load_dataset, write_dataset};
pub use summary::{summarize, GroupSummary, SummaryTable};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Fine-grained tissue code as recorded per field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TissueCode {
    ControlEctocervix,
    ControlTransformationZone,
    Cin1,
    Cin2,
    Cin3,
    InvasiveCarcinoma,
}

/// Coarse four-level grouping used in the regression models; the three CIN
/// grades are combined. Control ectocervix is the reference category in
/// every design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoarseGroup {
    ControlEctocervix,
    ControlTransformationZone,
    Cin,
    InvasiveCarcinoma,
}

impl TissueCode {
    pub const ALL: [TissueCode; 6] = [
        TissueCode::ControlEctocervix,
        TissueCode::ControlTransformationZone,
        TissueCode::Cin1,
        TissueCode::Cin2,
        TissueCode::Cin3,
        TissueCode::InvasiveCarcinoma,
    ];

    pub fn coarse(self) -> CoarseGroup {
        match self {
            TissueCode::ControlEctocervix => CoarseGroup::ControlEctocervix,
            TissueCode::ControlTransformationZone => CoarseGroup::ControlTransformationZone,
            TissueCode::Cin1 | TissueCode::Cin2 | TissueCode::Cin3 => CoarseGroup::Cin,
            TissueCode::InvasiveCarcinoma => CoarseGroup::InvasiveCarcinoma,
        }
    }

    /// CSV token: ECTO, TZ, CIN1, CIN2, CIN3, CARC.
    pub fn token(self) -> &'static str {
        match self {
            TissueCode::ControlEctocervix => "ECTO",
            TissueCode::ControlTransformationZone => "TZ",
            TissueCode::Cin1 => "CIN1",
            TissueCode::Cin2 => "CIN2",
            TissueCode::Cin3 => "CIN3",
            TissueCode::InvasiveCarcinoma => "CARC",
        }
    }

    pub fn parse_token(s: &str) -> Option<TissueCode> {
        Some(match s {
            "ECTO" => TissueCode::ControlEctocervix,
            "TZ" => TissueCode::ControlTransformationZone,
            "CIN1" => TissueCode::Cin1,
            "CIN2" => TissueCode::Cin2,
            "CIN3" => TissueCode::Cin3,
            "CARC" => TissueCode::InvasiveCarcinoma,
            _ => return None,
        })
    }

    /// Index 0..6 in fine ordering (ECTO, TZ, CIN1, CIN2, CIN3, CARC).
    pub fn fine_index(self) -> usize {
        match self {
            TissueCode::ControlEctocervix => 0,
            TissueCode::ControlTransformationZone => 1,
            TissueCode::Cin1 => 2,
            TissueCode::Cin2 => 3,
            TissueCode::Cin3 => 4,
            TissueCode::InvasiveCarcinoma => 5,
        }
    }
}

impl CoarseGroup {
    pub const ALL: [CoarseGroup; 4] = [
        CoarseGroup::ControlEctocervix,
        CoarseGroup::ControlTransformationZone,
        CoarseGroup::Cin,
        CoarseGroup::InvasiveCarcinoma,
    ];

    /// Index 0..4 in coarse ordering; 0 is the reference (ectocervix).
    pub fn index(self) -> usize {
        match self {
            CoarseGroup::ControlEctocervix => 0,
            CoarseGroup::ControlTransformationZone => 1,
            CoarseGroup::Cin => 2,
            CoarseGroup::InvasiveCarcinoma => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CoarseGroup::ControlEctocervix => "ectocervix",
            CoarseGroup::ControlTransformationZone => "transformation_zone",
            CoarseGroup::Cin => "cin",
            CoarseGroup::InvasiveCarcinoma => "carcinoma",
        }
    }
}

/// One lymphatic vessel: lumen area (µm²) and circularity in the open
/// interval (0,1) so that log and logit transforms stay finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vessel {
    pub area: f64,
    pub circularity: f64,
}

impl Vessel {
    pub fn log_area(&self) -> f64 {
        self.area.ln()
    }

    pub fn logit_circularity(&self) -> f64 {
        let c = self.circularity;
        (c / (1.0 - c)).ln()
    }
}

/// One microscope field: tissue label, %LA, and the vessels observed in it.
/// A field always contains at least one vessel; fields without vessels would
/// never have entered the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub field_id: String,
    pub tissue: TissueCode,
    pub pla: f64,
    pub vessels: Vec<Vessel>,
}

impl Field {
    /// Lymphatic vascular density: the (random) cluster size N, always ≥ 1.
    pub fn lvd(&self) -> usize {
        self.vessels.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Specimen {
    pub specimen_id: String,
    pub fields: Vec<Field>,
}

/// The full three-level dataset. Immutable after construction; fitters take
/// shared references and may evaluate per-specimen terms concurrently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    specimens: Vec<Specimen>,
}

impl Dataset {
    /// Validates the hierarchy invariants and freezes the dataset.
    pub fn new(specimens: Vec<Specimen>) -> Result<Dataset> {
        if specimens.is_empty() {
            return Err(Error::Dataset("dataset has no specimens".into()));
        }
        let mut spec_ids = HashSet::new();
        for s in &specimens {
            if !spec_ids.insert(s.specimen_id.clone()) {
                return Err(Error::Dataset(format!(
                    "duplicate specimen id '{}'",
                    s.specimen_id
                )));
            }
            if s.fields.is_empty() {
                return Err(Error::Dataset(format!(
                    "specimen '{}' has no fields",
                    s.specimen_id
                )));
            }
            let mut field_ids = HashSet::new();
            let mut non_control_tissue: Option<TissueCode> = None;
            for f in &s.fields {
                if !field_ids.insert(f.field_id.clone()) {
                    return Err(Error::Dataset(format!(
                        "duplicate field id '{}' in specimen '{}'",
                        f.field_id, s.specimen_id
                    )));
                }
                if f.vessels.is_empty() {
                    return Err(Error::Dataset(format!(
                        "field '{}' of specimen '{}' has no vessels",
                        f.field_id, s.specimen_id
                    )));
                }
                // %LA is nominally a nonnegative percent, but the
                // untransformed Gaussian model can emit negative simulated
                // values, so ingestion only requires a finite number.
                if !f.pla.is_finite() {
                    return Err(Error::Dataset(format!(
                        "field '{}' of specimen '{}': %LA must be finite",
                        f.field_id, s.specimen_id
                    )));
                }
                for v in &f.vessels {
                    if !(v.area.is_finite() && v.area > 0.0) {
                        return Err(Error::Dataset(format!(
                            "vessel in field '{}' of specimen '{}': area must be > 0",
                            f.field_id, s.specimen_id
                        )));
                    }
                    if !(v.circularity.is_finite() && v.circularity > 0.0 && v.circularity < 1.0) {
                        return Err(Error::Dataset(format!(
                            "vessel in field '{}' of specimen '{}': circularity must lie strictly in (0,1)",
                            f.field_id, s.specimen_id
                        )));
                    }
                }
                // CIN and carcinoma specimens carry one tissue code across all
                // fields; controls may mix ectocervix and transformation zone.
                match f.tissue.coarse() {
                    CoarseGroup::Cin | CoarseGroup::InvasiveCarcinoma => {
                        if let Some(t) = non_control_tissue {
                            if t != f.tissue {
                                return Err(Error::Dataset(format!(
                                    "specimen '{}' mixes tissue codes {} and {}",
                                    s.specimen_id,
                                    t.token(),
                                    f.tissue.token()
                                )));
                            }
                        } else {
                            non_control_tissue = Some(f.tissue);
                        }
                    }
                    _ => {
                        if non_control_tissue.is_some() {
                            return Err(Error::Dataset(format!(
                                "specimen '{}' mixes control and case tissue codes",
                                s.specimen_id
                            )));
                        }
                    }
                }
            }
        }
        Ok(Dataset { specimens })
    }

    pub fn specimens(&self) -> &[Specimen] {
        &self.specimens
    }

    pub fn n_specimens(&self) -> usize {
        self.specimens.len()
    }

    pub fn n_fields(&self) -> usize {
        self.specimens.iter().map(|s| s.fields.len()).sum()
    }

    pub fn n_vessels(&self) -> usize {
        self.specimens
            .iter()
            .flat_map(|s| s.fields.iter())
            .map(|f| f.vessels.len())
            .sum()
    }

    pub fn fields(&self) -> impl Iterator<Item = (&Specimen, &Field)> {
        self.specimens
            .iter()
            .flat_map(|s| s.fields.iter().map(move |f| (s, f)))
    }
}
