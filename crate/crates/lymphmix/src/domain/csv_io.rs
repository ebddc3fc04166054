//! Two-file CSV layout: field-level outcomes in `fields.csv`, vessel-level
//! outcomes in `vessels.csv`, joined on (specimen_id, field_id). Keeping %LA
//! single-sourced in the fields file avoids inconsistent repetition across
//! vessel rows.

use super::{Dataset, Field, Specimen, TissueCode, Vessel};
use crate::error::{Error, Result};
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

pub const FIELDS_HEADER: &str = "specimen_id,field_id,tissue,pla";
pub const VESSELS_HEADER: &str = "specimen_id,field_id,vessel_id,area,circularity";

/// Formats `x` with `sig` significant digits, plain decimal where readable,
/// scientific otherwise.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if exp >= -4 && exp < sig as i32 {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        // trim trailing zeros but keep at least one digit after the point
        if s.contains('.') {
            let t = s.trim_end_matches('0').trim_end_matches('.');
            t.to_string()
        } else {
            s
        }
    } else {
        format!("{:.*e}", sig - 1, x)
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file))
}

fn parse_f64(s: &str, path: &Path, row: usize, col: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::CsvRow {
        path: path.display().to_string(),
        row,
        msg: format!("cannot parse {col} value '{s}'"),
    })
}

/// Loads and joins the two CSV files into a validated [`Dataset`]. Every
/// vessel row must join to exactly one field row; all validation failures
/// report the offending row number (1-based, excluding the header).
pub fn load_dataset(fields_path: &Path, vessels_path: &Path) -> Result<Dataset> {
    // field rows, in file order
    let mut rdr = open_reader(fields_path)?;
    let mut specimen_order: Vec<String> = Vec::new();
    // (specimen_id, field_id) -> (order within specimen, Field)
    let mut field_rows: HashMap<(String, String), Field> = HashMap::new();
    let mut field_order: HashMap<String, Vec<String>> = HashMap::new();

    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| Error::CsvRow {
            path: fields_path.display().to_string(),
            row,
            msg: e.to_string(),
        })?;
        if rec.len() != 4 {
            return Err(Error::CsvRow {
                path: fields_path.display().to_string(),
                row,
                msg: format!("expected 4 columns ({FIELDS_HEADER}), got {}", rec.len()),
            });
        }
        let specimen_id = rec[0].trim().to_string();
        let field_id = rec[1].trim().to_string();
        let tissue = TissueCode::parse_token(rec[2].trim()).ok_or_else(|| Error::Validation {
            path: fields_path.display().to_string(),
            row,
            msg: format!("unknown tissue code '{}'", &rec[2]),
        })?;
        let pla = parse_f64(&rec[3], fields_path, row, "pla")?;
        if !pla.is_finite() {
            return Err(Error::Validation {
                path: fields_path.display().to_string(),
                row,
                msg: format!("%LA must be finite, got {pla}"),
            });
        }
        let key = (specimen_id.clone(), field_id.clone());
        if field_rows.contains_key(&key) {
            return Err(Error::Validation {
                path: fields_path.display().to_string(),
                row,
                msg: format!("duplicate (specimen_id, field_id) = ('{specimen_id}', '{field_id}')"),
            });
        }
        if !specimen_order.contains(&specimen_id) {
            specimen_order.push(specimen_id.clone());
        }
        field_order.entry(specimen_id).or_default().push(field_id);
        field_rows.insert(
            key,
            Field {
                field_id: String::new(), // filled during assembly
                tissue,
                pla,
                vessels: Vec::new(),
            },
        );
    }

    // vessel rows joined onto fields
    let mut rdr = open_reader(vessels_path)?;
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| Error::CsvRow {
            path: vessels_path.display().to_string(),
            row,
            msg: e.to_string(),
        })?;
        if rec.len() != 5 {
            return Err(Error::CsvRow {
                path: vessels_path.display().to_string(),
                row,
                msg: format!("expected 5 columns ({VESSELS_HEADER}), got {}", rec.len()),
            });
        }
        let key = (rec[0].trim().to_string(), rec[1].trim().to_string());
        let area = parse_f64(&rec[3], vessels_path, row, "area")?;
        let circ = parse_f64(&rec[4], vessels_path, row, "circularity")?;
        if !(area.is_finite() && area > 0.0) {
            return Err(Error::Validation {
                path: vessels_path.display().to_string(),
                row,
                msg: format!("area must be > 0, got {area}"),
            });
        }
        if !(circ > 0.0 && circ < 1.0) {
            return Err(Error::Validation {
                path: vessels_path.display().to_string(),
                row,
                msg: format!("circularity must lie strictly in (0,1), got {circ}"),
            });
        }
        match field_rows.get_mut(&key) {
            Some(field) => field.vessels.push(Vessel {
                area,
                circularity: circ,
            }),
            None => {
                return Err(Error::Validation {
                    path: vessels_path.display().to_string(),
                    row,
                    msg: format!(
                        "orphan vessel row: no field ('{}', '{}') in {}",
                        key.0,
                        key.1,
                        fields_path.display()
                    ),
                })
            }
        }
    }

    // assemble in file order; Dataset::new re-validates hierarchy invariants
    let mut specimens = Vec::with_capacity(specimen_order.len());
    for sid in specimen_order {
        let fids = field_order.remove(&sid).unwrap_or_default();
        let mut fields = Vec::with_capacity(fids.len());
        for fid in fids {
            let mut f = field_rows
                .remove(&(sid.clone(), fid.clone()))
                .expect("field row present by construction");
            if f.vessels.is_empty() {
                return Err(Error::Dataset(format!(
                    "field '{fid}' of specimen '{sid}' has no vessel rows"
                )));
            }
            f.field_id = fid;
            fields.push(f);
        }
        specimens.push(Specimen {
            specimen_id: sid,
            fields,
        });
    }
    Dataset::new(specimens)
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(std::io::BufWriter::new(f))
}

/// Writes `fields.csv` and `vessels.csv` (6 significant digits, UTF-8, LF).
pub fn write_dataset(d: &Dataset, fields_path: &Path, vessels_path: &Path) -> Result<()> {
    let io_err = |p: &Path, e: std::io::Error| Error::Io {
        path: p.display().to_string(),
        source: e,
    };

    let mut fw = create(fields_path)?;
    writeln!(fw, "{FIELDS_HEADER}").map_err(|e| io_err(fields_path, e))?;
    for s in d.specimens() {
        for f in &s.fields {
            writeln!(
                fw,
                "{},{},{},{}",
                s.specimen_id,
                f.field_id,
                f.tissue.token(),
                fmt_sig(f.pla, 6)
            )
            .map_err(|e| io_err(fields_path, e))?;
        }
    }
    fw.flush().map_err(|e| io_err(fields_path, e))?;

    let mut vw = create(vessels_path)?;
    writeln!(vw, "{VESSELS_HEADER}").map_err(|e| io_err(vessels_path, e))?;
    for s in d.specimens() {
        for f in &s.fields {
            for (k, v) in f.vessels.iter().enumerate() {
                writeln!(
                    vw,
                    "{},{},v{},{},{}",
                    s.specimen_id,
                    f.field_id,
                    k + 1,
                    fmt_sig(v.area, 6),
                    fmt_sig(v.circularity, 6)
                )
                .map_err(|e| io_err(vessels_path, e))?;
            }
        }
    }
    vw.flush().map_err(|e| io_err(vessels_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        p
    }

    #[test]
    fn minimal_join() {
        let dir = tempfile::tempdir().unwrap();
        let fp = write_tmp(
            dir.path(),
            "fields.csv",
            "specimen_id,field_id,tissue,pla\ns1,f1,ECTO,3.5\n",
        );
        let vp = write_tmp(
            dir.path(),
            "vessels.csv",
            "specimen_id,field_id,vessel_id,area,circularity\ns1,f1,v1,100,0.5\ns1,f1,v2,300,0.7\n",
        );
        let d = load_dataset(&fp, &vp).unwrap();
        assert_eq!(d.n_specimens(), 1);
        assert_eq!(d.n_fields(), 1);
        let field = &d.specimens()[0].fields[0];
        assert_eq!(field.lvd(), 2);
        assert_eq!(field.pla, 3.5);
        assert_eq!(field.tissue, TissueCode::ControlEctocervix);
    }

    #[test]
    fn orphan_vessel_row_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let fp = write_tmp(
            dir.path(),
            "fields.csv",
            "specimen_id,field_id,tissue,pla\ns1,f1,ECTO,3.5\n",
        );
        let vp = write_tmp(
            dir.path(),
            "vessels.csv",
            "specimen_id,field_id,vessel_id,area,circularity\ns1,f9,v1,100,0.5\n",
        );
        let err = load_dataset(&fp, &vp).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("orphan vessel row"), "got: {msg}");
        assert!(msg.contains("row 1"), "got: {msg}");
    }

    #[test]
    fn unknown_tissue_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let fp = write_tmp(
            dir.path(),
            "fields.csv",
            "specimen_id,field_id,tissue,pla\ns1,f1,ECTO,3.5\ns1,f2,BAD,1.0\n",
        );
        let vp = write_tmp(
            dir.path(),
            "vessels.csv",
            "specimen_id,field_id,vessel_id,area,circularity\ns1,f1,v1,100,0.5\n",
        );
        let err = load_dataset(&fp, &vp).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown tissue code"), "got: {msg}");
        assert!(msg.contains("row 2"), "got: {msg}");
    }

    #[test]
    fn bad_area_and_circularity_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let fp = write_tmp(
            dir.path(),
            "fields.csv",
            "specimen_id,field_id,tissue,pla\ns1,f1,ECTO,3.5\n",
        );
        for (bad, needle) in [
            ("s1,f1,v1,-2,0.5\n", "area"),
            ("s1,f1,v1,10,1.0\n", "circularity"),
            ("s1,f1,v1,10,0\n", "circularity"),
        ] {
            let vp = write_tmp(
                dir.path(),
                "vessels.csv",
                &format!("specimen_id,field_id,vessel_id,area,circularity\n{bad}"),
            );
            let err = load_dataset(&fp, &vp).unwrap_err();
            assert!(err.to_string().contains(needle), "got: {err}");
        }
    }

    #[test]
    fn duplicate_field_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let fp = write_tmp(
            dir.path(),
            "fields.csv",
            "specimen_id,field_id,tissue,pla\ns1,f1,ECTO,3.5\ns1,f1,ECTO,4.0\n",
        );
        let vp = write_tmp(
            dir.path(),
            "vessels.csv",
            "specimen_id,field_id,vessel_id,area,circularity\ns1,f1,v1,100,0.5\n",
        );
        let err = load_dataset(&fp, &vp).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "got: {err}");
    }

    #[test]
    fn fmt_sig_basics() {
        assert_eq!(fmt_sig(3.5, 6), "3.5");
        assert_eq!(fmt_sig(141.421356, 6), "141.421");
        assert_eq!(fmt_sig(0.0, 6), "0");
        assert_eq!(fmt_sig(1234567.0, 6), "1.23457e6");
        assert_eq!(fmt_sig(0.000012345678, 6), "1.23457e-5");
        assert_eq!(fmt_sig(-2.0, 6), "-2");
    }
}
