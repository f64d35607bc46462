//! Shot CSV files and JSON documents.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampler::ShotBatch;

pub fn shot_header(channels: usize) -> &'static [&'static str] {
    if channels == 4 {
        &["x1", "p1", "x2", "p2"]
    } else {
        &["x1", "p1"]
    }
}

pub fn write_shots<W: Write>(batch: &ShotBatch, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(shot_header(batch.channels())).map_err(csv_err)?;
    let mut rec = Vec::with_capacity(batch.channels());
    for row in batch.rows() {
        rec.clear();
        rec.extend(row.iter().map(|v| v.to_string()));
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a shot CSV with the standard header. `gains` must match the number
/// of chains, or be empty.
pub fn read_shots<R: Read>(r: R, gains: Vec<f64>) -> Result<ShotBatch> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let channels = header.len();
    if (channels != 2 && channels != 4) || header.iter().map(String::as_str).ne(shot_header(channels).iter().copied()) {
        return Err(Error::Format(format!("expected header x1,p1 or x1,p1,x2,p2, got {}", header.join(","))));
    }
    let data = parse_rows(&mut rd, channels)?;
    ShotBatch::new(channels, data, gains, None)
}

fn parse_rows<R: Read>(rd: &mut csv::Reader<R>, channels: usize) -> Result<Vec<f64>> {
    let mut data = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != channels {
            return Err(Error::Format(format!("line {}: expected {channels} fields, got {}", i + 2, rec.len())));
        }
        for f in rec.iter() {
            let v: f64 = f.parse().map_err(|_| Error::Format(format!("line {}: bad number {f:?}", i + 2)))?;
            if !v.is_finite() {
                return Err(Error::Format(format!("line {}: non-finite value", i + 2)));
            }
            data.push(v);
        }
    }
    if data.is_empty() {
        return Err(Error::Format("no shots".into()));
    }
    Ok(data)
}

/// Reads external tabular data: comma separated, optional non-numeric header
/// line, 2 or 4 numeric columns. Every value is multiplied by `scale`.
pub fn ingest_table<R: Read>(r: R, gains: Vec<f64>, scale: f64) -> Result<ShotBatch> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).comment(Some(b'#')).flexible(true).from_reader(r);
    let mut data = Vec::new();
    let mut channels = 0;
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::Format(format!("line {}: non-numeric field", i + 1))),
        };
        if channels == 0 {
            channels = row.len();
            if channels != 2 && channels != 4 {
                return Err(Error::Format(format!("expected 2 or 4 columns, got {channels}")));
            }
        } else if row.len() != channels {
            return Err(Error::Format(format!("line {}: expected {channels} fields, got {}", i + 1, row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("line {}: non-finite value", i + 1)));
        }
        data.extend(row.into_iter().map(|v| v * scale));
    }
    if data.is_empty() {
        return Err(Error::Format("no shots".into()));
    }
    ShotBatch::new(channels, data, gains, None)
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            k => Error::Format(format!("{k:?}")),
        }
    } else {
        Error::Format(e.to_string())
    }
}

pub fn write_shots_file(batch: &ShotBatch, path: &Path) -> Result<()> {
    write_shots(batch, BufWriter::new(File::create(path)?))
}

pub fn read_shots_file(path: &Path, gains: Vec<f64>) -> Result<ShotBatch> {
    read_shots(BufReader::new(File::open(path)?), gains)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let b = ShotBatch::new(4, vec![0.1, -2.5e-7, 3.0, 1e300, -0.0, 7.25, 1.0 / 3.0, 2.0], vec![], None).unwrap();
        let mut a = Vec::new();
        write_shots(&b, &mut a).unwrap();
        assert!(a.starts_with(b"x1,p1,x2,p2\n"));
        let back = read_shots(&a[..], vec![]).unwrap();
        assert_eq!(back.data(), b.data());
        let mut c = Vec::new();
        write_shots(&back, &mut c).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn malformed_csv() {
        assert!(matches!(read_shots(&b"x1,p2\n1,2\n"[..], vec![]), Err(Error::Format(_))));
        assert!(matches!(read_shots(&b"x1,p1\n1,abc\n"[..], vec![]), Err(Error::Format(_))));
        assert!(matches!(read_shots(&b"x1,p1\n1,2,3\n"[..], vec![]), Err(Error::Format(_))));
        assert!(matches!(read_shots(&b"x1,p1\n"[..], vec![]), Err(Error::Format(_))));
        assert!(matches!(read_shots(&b"x1,p1\n1,NaN\n"[..], vec![]), Err(Error::Format(_))));
    }

    #[test]
    fn ingest_accepts_headers_and_comments() {
        let src = b"# exported\nI1, Q1\n1, 2\n3, 4\n";
        let b = ingest_table(&src[..], vec![100.0], 0.5).unwrap();
        assert_eq!(b.data(), &[0.5, 1.0, 1.5, 2.0]);
        assert!(ingest_table(&b"1,2,3\n"[..], vec![], 1.0).is_err());
        assert!(ingest_table(&b"1,2\n3\n"[..], vec![], 1.0).is_err());
    }
}
