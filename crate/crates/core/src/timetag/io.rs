//! Binary and CSV time-tag stream formats.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! header  "TTAG" | version u16 | tdc_resolution_ps u16 | record_count u64   (16 bytes)
//! record  channel u8 | timestamp_ps u64                                      (9 bytes each)
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{Channel, TimeTagRecord, TimeTagStream};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TTAG";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 9;

pub fn encode(stream: &TimeTagStream) -> Result<Vec<u8>> {
    stream.validate()?;
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * stream.records.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&stream.tdc_resolution_ps.to_le_bytes());
    out.extend_from_slice(&(stream.records.len() as u64).to_le_bytes());
    for r in &stream.records {
        out.push(r.channel as u8);
        out.extend_from_slice(&r.timestamp_ps.to_le_bytes());
    }
    Ok(out)
}

/// Parses a binary stream; errors carry the byte offset of the problem.
pub fn decode(bytes: &[u8], path: &Path) -> Result<TimeTagStream> {
    let err = |offset: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(err(bytes.len(), format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(err(0, "bad magic, expected \"TTAG\"".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(err(4, format!("unsupported version {version}")));
    }
    let res = u16::from_le_bytes([bytes[6], bytes[7]]);
    if res == 0 {
        return Err(err(6, "tdc resolution is zero".into()));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let body = bytes.len() - HEADER_LEN;
    let available = (body / RECORD_LEN) as u64;
    if available < count {
        let offset = HEADER_LEN + RECORD_LEN * available as usize;
        return Err(err(offset, format!("truncated: header declares {count} records, found {available}")));
    }
    let end = HEADER_LEN + RECORD_LEN * count as usize;
    if bytes.len() > end {
        return Err(err(end, format!("{} trailing bytes after {count} records", bytes.len() - end)));
    }

    let step = u64::from(res);
    let mut last = [None::<u64>; 2];
    let mut records = Vec::with_capacity(count as usize);
    for (k, chunk) in bytes[HEADER_LEN..].chunks_exact(RECORD_LEN).enumerate() {
        let offset = HEADER_LEN + k * RECORD_LEN;
        let channel = Channel::from_u8(chunk[0]).ok_or_else(|| err(offset, format!("invalid channel {}", chunk[0])))?;
        let ts = u64::from_le_bytes(chunk[1..9].try_into().expect("8 bytes"));
        if ts % step != 0 {
            return Err(err(offset + 1, format!("timestamp {ts} is off the {res} ps grid")));
        }
        let slot = &mut last[channel as usize];
        if slot.is_some_and(|prev| ts < prev) {
            return Err(err(offset + 1, "timestamps not sorted".into()));
        }
        *slot = Some(ts);
        records.push(TimeTagRecord {
            channel,
            timestamp_ps: ts,
        });
    }
    Ok(TimeTagStream {
        tdc_resolution_ps: res,
        records,
    })
}

pub fn write_stream(stream: &TimeTagStream, path: &Path) -> Result<()> {
    let bytes = encode(stream)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_stream(path: &Path) -> Result<TimeTagStream> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Debug format: `channel,timestamp_ps` with the TDC resolution implied by
/// the caller.
pub fn write_csv(stream: &TimeTagStream, path: &Path) -> Result<()> {
    stream.validate()?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["channel", "timestamp_ps"]).map_err(|e| csv_io(path, e))?;
    for r in &stream.records {
        w.write_record([(r.channel as u8).to_string(), r.timestamp_ps.to_string()])
            .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path, tdc_resolution_ps: u16) -> Result<TimeTagStream> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let line_err = |line: u64, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = rdr.headers().map_err(|e| line_err(1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != ["channel", "timestamp_ps"] {
        return Err(line_err(1, "expected header \"channel,timestamp_ps\"".into()));
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| line_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let channel = rec
            .get(0)
            .and_then(|s| s.parse::<u8>().ok())
            .and_then(Channel::from_u8)
            .ok_or_else(|| line_err(line, "invalid channel".into()))?;
        let timestamp_ps = rec
            .get(1)
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| line_err(line, "invalid timestamp".into()))?;
        records.push(TimeTagRecord { channel, timestamp_ps });
    }
    TimeTagStream::new(tdc_resolution_ps, records).map_err(|e| line_err(0, e.to_string()))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Csv {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}
