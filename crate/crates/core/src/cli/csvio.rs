//! CSV files: datasets (`x,y,dy`), fitted curves (`x,y_fit`) and
//! parallel-coordinates tables (`experiment,b0,b1,...`).
//!
//! Numbers are written in Rust's shortest round-trip form, so reading a
//! file back recovers every `f64` exactly and rewriting it reproduces the
//! same bytes. Lines end with `\n`.

use std::io::{Read, Write};

use crate::ensemble::ParallelCoordinatesRow;
use crate::varpro::{DataPoint, Dataset};

pub const DATASET_HEADER: [&str; 3] = ["x", "y", "dy"];

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

pub fn write_dataset<W: Write>(data: &Dataset, out: W) -> Result<(), csv::Error> {
    let mut w = writer(out);
    w.write_record(DATASET_HEADER)?;
    for p in data.points() {
        w.write_record([fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.dy)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn dataset_to_string(data: &Dataset) -> String {
    let mut buf = Vec::new();
    write_dataset(data, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

/// Reads an `x,y,dy` file. Errors carry the 1-based line number.
pub fn read_dataset<R: Read>(input: R) -> Result<Dataset, String> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().collect::<Vec<_>>() != DATASET_HEADER {
        return Err(format!(
            "line 1: expected header 'x,y,dy', found '{}'",
            header.iter().collect::<Vec<_>>().join(",")
        ));
    }
    let mut points = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| format!("line {line}: {e}"))?;
        let field = |k: usize| -> Result<f64, String> {
            let s = rec.get(k).unwrap_or("");
            s.parse::<f64>()
                .map_err(|_| format!("line {line}: '{s}' is not a number ({})", DATASET_HEADER[k]))
        };
        let p = DataPoint::new(field(0)?, field(1)?, field(2)?).map_err(|e| {
            let e = e.to_string();
            format!("line {line}: {}", e.trim_start_matches("point 0: "))
        })?;
        points.push(p);
    }
    Dataset::new(points).map_err(|e| e.to_string())
}

pub fn write_curve<W: Write>(curve: &[(f64, f64)], out: W) -> Result<(), csv::Error> {
    let mut w = writer(out);
    w.write_record(["x", "y_fit"])?;
    for (x, y) in curve {
        w.write_record([fmt_f64(*x), fmt_f64(*y)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_parallel_coordinates<W: Write>(
    rows: &[ParallelCoordinatesRow],
    out: W,
) -> Result<(), csv::Error> {
    let n_b = rows.first().map_or(0, |r| r.b.len());
    let mut w = writer(out);
    let mut header = vec!["experiment".to_string()];
    header.extend((0..n_b).map(|j| format!("b{j}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.experiment.to_string()];
        rec.extend(r.b.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
