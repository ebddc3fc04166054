//! Study-design presets: how many specimens per group and how many fields
//! each contributes. The default preset mirrors the motivating study's
//! layout: 21 controls (20 contributing ectocervix blocks of 5-10 fields,
//! 16 contributing transformation-zone blocks of 2-9 fields, 15 of them
//! both), 21 CIN specimens (10/9/2 across grades 1-3), and 20 invasive
//! carcinoma specimens with 1-10 fields. Field counts are drawn uniformly
//! over each range; the reasons for count differences are taken to be
//! unrelated to the outcomes, so design randomness is independent of the
//! effect draws.

use crate::domain::TissueCode;
use crate::rng::{substream, StreamDomain};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One block of fields sharing a tissue code, with an inclusive field-count
/// range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldBlockDesign {
    pub tissue: TissueCode,
    pub min_fields: usize,
    pub max_fields: usize,
}

impl FieldBlockDesign {
    pub fn new(tissue: TissueCode, min_fields: usize, max_fields: usize) -> Self {
        FieldBlockDesign {
            tissue,
            min_fields,
            max_fields,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecimenDesign {
    pub blocks: Vec<FieldBlockDesign>,
}

/// The complete design: an ordered list of specimen designs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignPreset {
    pub specimens: Vec<SpecimenDesign>,
}

impl DesignPreset {
    /// The study-layout preset (62 specimens).
    pub fn study_default() -> DesignPreset {
        DesignPreset::study_scaled(1)
    }

    /// The study layout with every specimen count multiplied by `factor`,
    /// for large-sample studies.
    pub fn study_scaled(factor: usize) -> DesignPreset {
        let mut specimens = Vec::new();
        let ecto = |lo, hi| FieldBlockDesign::new(TissueCode::ControlEctocervix, lo, hi);
        let tz = |lo, hi| FieldBlockDesign::new(TissueCode::ControlTransformationZone, lo, hi);
        for _ in 0..factor {
            // 15 controls contribute both regions, 5 ectocervix only, 1
            // transformation zone only (20 ecto / 16 tz blocks in total)
            for _ in 0..15 {
                specimens.push(SpecimenDesign {
                    blocks: vec![ecto(5, 10), tz(2, 9)],
                });
            }
            for _ in 0..5 {
                specimens.push(SpecimenDesign {
                    blocks: vec![ecto(5, 10)],
                });
            }
            specimens.push(SpecimenDesign {
                blocks: vec![tz(2, 9)],
            });
            for (tissue, count, lo, hi) in [
                (TissueCode::Cin1, 10, 2, 7),
                (TissueCode::Cin2, 9, 2, 8),
                (TissueCode::Cin3, 2, 4, 5),
            ] {
                for _ in 0..count {
                    specimens.push(SpecimenDesign {
                        blocks: vec![FieldBlockDesign::new(tissue, lo, hi)],
                    });
                }
            }
            for _ in 0..20 {
                specimens.push(SpecimenDesign {
                    blocks: vec![FieldBlockDesign::new(TissueCode::InvasiveCarcinoma, 1, 10)],
                });
            }
        }
        DesignPreset { specimens }
    }

    /// A single-tissue design: `n_specimens` specimens with a fixed number
    /// of fields each.
    pub fn single_group(n_specimens: usize, tissue: TissueCode, fields: usize) -> DesignPreset {
        DesignPreset {
            specimens: (0..n_specimens)
                .map(|_| SpecimenDesign {
                    blocks: vec![FieldBlockDesign::new(tissue, fields, fields)],
                })
                .collect(),
        }
    }

    /// Balanced design over the four coarse groups (CIN grade 1 stands in
    /// for the CIN group), fixed field count per specimen.
    pub fn balanced(n_per_group: usize, fields: usize) -> DesignPreset {
        let mut specimens = Vec::new();
        for tissue in [
            TissueCode::ControlEctocervix,
            TissueCode::ControlTransformationZone,
            TissueCode::Cin1,
            TissueCode::InvasiveCarcinoma,
        ] {
            for _ in 0..n_per_group {
                specimens.push(SpecimenDesign {
                    blocks: vec![FieldBlockDesign::new(tissue, fields, fields)],
                });
            }
        }
        DesignPreset { specimens }
    }

    pub fn n_specimens(&self) -> usize {
        self.specimens.len()
    }

    /// Draws field counts and lays out specimen/field identities. All design
    /// randomness comes from the dedicated design stream, so per-specimen
    /// outcome streams stay aligned regardless of the field counts drawn.
    pub fn expand(&self, seed: u64) -> Vec<SpecimenSkeleton> {
        let mut rng = substream(seed, StreamDomain::Design, 0);
        let width = self.specimens.len().to_string().len().max(3);
        self.specimens
            .iter()
            .enumerate()
            .map(|(i, sd)| {
                let mut fields = Vec::new();
                for block in &sd.blocks {
                    let count = if block.min_fields == block.max_fields {
                        block.min_fields
                    } else {
                        rng.random_range(block.min_fields..=block.max_fields)
                    };
                    fields.extend(std::iter::repeat_n(block.tissue, count));
                }
                SpecimenSkeleton {
                    index: i,
                    specimen_id: format!("S{:0width$}", i + 1, width = width),
                    fields,
                }
            })
            .collect()
    }
}

/// A specimen with its tissue layout fixed but outcomes not yet generated.
#[derive(Debug, Clone)]
pub struct SpecimenSkeleton {
    pub index: usize,
    pub specimen_id: String,
    /// Tissue code of each field, in order.
    pub fields: Vec<TissueCode>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn study_preset_counts() {
        let d = DesignPreset::study_default();
        assert_eq!(d.n_specimens(), 62);
        let skels = d.expand(1);
        assert_eq!(skels.len(), 62);
        // block structure: 20 specimens with ecto fields, 16 with tz fields
        let with_ecto = skels
            .iter()
            .filter(|s| s.fields.contains(&TissueCode::ControlEctocervix))
            .count();
        let with_tz = skels
            .iter()
            .filter(|s| s.fields.contains(&TissueCode::ControlTransformationZone))
            .count();
        assert_eq!(with_ecto, 20);
        assert_eq!(with_tz, 16);
        let carc = skels
            .iter()
            .filter(|s| s.fields.contains(&TissueCode::InvasiveCarcinoma))
            .count();
        assert_eq!(carc, 20);
        // field counts inside the declared ranges
        for s in &skels {
            let ecto_fields = s
                .fields
                .iter()
                .filter(|t| **t == TissueCode::ControlEctocervix)
                .count();
            if ecto_fields > 0 {
                assert!((5..=10).contains(&ecto_fields));
            }
        }
    }

    #[test]
    fn expansion_is_deterministic() {
        let d = DesignPreset::study_default();
        let a = d.expand(99);
        let b = d.expand(99);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.fields, y.fields);
            assert_eq!(x.specimen_id, y.specimen_id);
        }
    }
}
