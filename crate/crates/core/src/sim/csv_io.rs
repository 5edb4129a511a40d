//! Telemetry CSV: header plus one row per record, LF endings, floats in
//! shortest round-trip form.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::closed_loop::{SimError, SimRecord};
use crate::human::Activation4;
use crate::robot::TaskPoint;

pub const CSV_HEADER: [&str; 16] = [
    "t", "p_x", "p_y", "p_des_x", "p_des_y", "m1", "m2", "m3", "m4", "j_raw", "j_smooth", "theta_hat_deg",
    "theta_cmd_deg", "converged", "f_x", "f_y",
];

fn row(r: &SimRecord) -> [String; 16] {
    let f = |v: f64| v.to_string();
    [
        f(r.t),
        f(r.p.x),
        f(r.p.y),
        f(r.p_des.x),
        f(r.p_des.y),
        f(r.m.0[0]),
        f(r.m.0[1]),
        f(r.m.0[2]),
        f(r.m.0[3]),
        f(r.j_raw),
        f(r.j_smooth),
        f(r.theta_hat_deg),
        f(r.theta_cmd_deg),
        u8::from(r.converged).to_string(),
        f(r.f_h[0]),
        f(r.f_h[1]),
    ]
}

pub fn write_csv_to<W: Write>(records: &[SimRecord], out: W) -> Result<(), SimError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(records: &[SimRecord], path: impl AsRef<Path>) -> Result<(), SimError> {
    write_csv_to(records, BufWriter::new(File::create(path)?))
}

pub fn read_csv_from<R: Read>(input: R) -> Result<Vec<SimRecord>, SimError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(SimError::CsvFormat { row: 0, msg: format!("unexpected header {header:?}") });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let num = |k: usize| -> Result<f64, SimError> {
            rec[k].parse().map_err(|e| SimError::CsvFormat { row, msg: format!("column {}: {e}", CSV_HEADER[k]) })
        };
        let converged = match &rec[13] {
            "0" => false,
            "1" => true,
            other => return Err(SimError::CsvFormat { row, msg: format!("converged must be 0 or 1, got {other:?}") }),
        };
        out.push(SimRecord {
            t: num(0)?,
            p: TaskPoint::new(num(1)?, num(2)?),
            p_des: TaskPoint::new(num(3)?, num(4)?),
            m: Activation4([num(5)?, num(6)?, num(7)?, num(8)?]),
            j_raw: num(9)?,
            j_smooth: num(10)?,
            theta_hat_deg: num(11)?,
            theta_cmd_deg: num(12)?,
            converged,
            f_h: [num(14)?, num(15)?],
        });
    }
    Ok(out)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<SimRecord>, SimError> {
    read_csv_from(File::open(path)?)
}
