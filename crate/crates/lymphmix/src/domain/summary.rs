//! Exploratory summaries: mean (SD) of the four outcome measures by tissue
//! type and by coarse group.

use super::{CoarseGroup, Dataset, TissueCode};
use crate::error::{Error, Result};
use serde::Serialize;

/// Mean and SD of one outcome within one group. `sd` is `None` when the
/// group holds a single observation (SD undefined, not zero).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeanSd {
    pub n: usize,
    pub mean: f64,
    pub sd: Option<f64>,
}

fn mean_sd(values: &[f64]) -> Option<MeanSd> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        Some((ss / (n - 1) as f64).sqrt())
    } else {
        None
    };
    Some(MeanSd { n, mean, sd })
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub label: String,
    /// LVD over fields.
    pub lvd: MeanSd,
    /// %LA over fields.
    pub pla: MeanSd,
    /// Vessel area over vessels, pooled across fields unweighted.
    pub area: MeanSd,
    /// Circularity over vessels.
    pub circularity: MeanSd,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryTable {
    /// One row per fine tissue code present in the data.
    pub by_code: Vec<GroupSummary>,
    /// One row per coarse group present in the data.
    pub by_coarse: Vec<GroupSummary>,
    pub total_fields: usize,
    pub total_vessels: usize,
}

struct Bucket {
    lvd: Vec<f64>,
    pla: Vec<f64>,
    area: Vec<f64>,
    circ: Vec<f64>,
}

impl Bucket {
    fn new() -> Self {
        Bucket {
            lvd: vec![],
            pla: vec![],
            area: vec![],
            circ: vec![],
        }
    }

    fn into_summary(self, label: String) -> Option<GroupSummary> {
        Some(GroupSummary {
            label,
            lvd: mean_sd(&self.lvd)?,
            pla: mean_sd(&self.pla)?,
            area: mean_sd(&self.area)?,
            circularity: mean_sd(&self.circ)?,
        })
    }
}

/// Per-tissue and per-coarse-group means and SDs of the outcome measures.
pub fn summarize(d: &Dataset) -> Result<SummaryTable> {
    if d.n_specimens() == 0 {
        return Err(Error::Dataset("cannot summarize an empty dataset".into()));
    }
    let mut fine: Vec<Bucket> = (0..6).map(|_| Bucket::new()).collect();
    let mut coarse: Vec<Bucket> = (0..4).map(|_| Bucket::new()).collect();

    for (_, f) in d.fields() {
        let fi = f.tissue.fine_index();
        let ci = f.tissue.coarse().index();
        for bucket in [&mut fine[fi], &mut coarse[ci]] {
            bucket.lvd.push(f.lvd() as f64);
            bucket.pla.push(f.pla);
            for v in &f.vessels {
                bucket.area.push(v.area);
                bucket.circ.push(v.circularity);
            }
        }
    }

    let by_code = TissueCode::ALL
        .iter()
        .zip(fine)
        .filter_map(|(t, b)| b.into_summary(t.token().to_string()))
        .collect();
    let by_coarse = CoarseGroup::ALL
        .iter()
        .zip(coarse)
        .filter_map(|(g, b)| b.into_summary(g.label().to_string()))
        .collect();

    Ok(SummaryTable {
        by_code,
        by_coarse,
        total_fields: d.n_fields(),
        total_vessels: d.n_vessels(),
    })
}

impl SummaryTable {
    /// Plain-text rendering in the style of a mean (SD) outcome table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let fmt_ms = |m: &MeanSd| match m.sd {
            Some(sd) => format!("{:.2} ({:.2})", m.mean, sd),
            None => format!("{:.2} (n/a)", m.mean),
        };
        out.push_str(&format!(
            "{:<22} {:>6} {:>16} {:>16} {:>18} {:>16}\n",
            "group", "fields", "LVD", "%LA", "vessel area", "circularity"
        ));
        for section in [&self.by_coarse, &self.by_code] {
            for g in section.iter() {
                out.push_str(&format!(
                    "{:<22} {:>6} {:>16} {:>16} {:>18} {:>16}\n",
                    g.label,
                    g.lvd.n,
                    fmt_ms(&g.lvd),
                    fmt_ms(&g.pla),
                    fmt_ms(&g.area),
                    fmt_ms(&g.circularity)
                ));
            }
        }
        out
    }
}
