//! Sample and partition file formats.
//!
//! Samples are CSV (one point per row, optional header) or binary: the
//! magic bytes `DSP1`, little-endian `u32` dimension, `u64` count, then the
//! coordinates as little-endian `f64`, row-major.
//!
//! Partitions are JSON:
//! `{domain: {lo, hi}, total_n, method, params, truncated, leaves: [{lo, hi, count, c}]}`
//! with every float written to 17 significant digits.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::engine::{Leaf, PiecewiseConstantDensity};
use crate::error::{Error, Result};
use crate::geometry::{AxisBox, SampleSet};

pub const MAGIC: &[u8; 4] = b"DSP1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleFormat {
    Csv,
    Binary,
}

impl SampleFormat {
    /// Binary for `.bin`/`.dsp` paths, CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("dsp") => SampleFormat::Binary,
            _ => SampleFormat::Csv,
        }
    }
}

pub fn write_samples(samples: &SampleSet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match SampleFormat::from_path(path) {
        SampleFormat::Csv => write_samples_csv(samples, &mut w)?,
        SampleFormat::Binary => write_samples_binary(samples, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

/// Read a sample file, detecting the binary format by its magic bytes.
pub fn read_samples(path: &Path) -> Result<SampleSet> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.starts_with(MAGIC) {
        parse_samples_binary(&bytes)
    } else {
        parse_samples_csv(&bytes)
    }
}

pub fn write_samples_csv<W: Write>(samples: &SampleSet, out: &mut W) -> Result<()> {
    let mut line = String::new();
    for row in samples.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            write!(line, "{v:?}").expect("write to string");
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn parse_samples_csv(bytes: &[u8]) -> Result<SampleSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(bytes);
    let mut dim = None;
    let mut data = Vec::new();
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            // a non-numeric first line is a header
            Err(_) if first => {
                first = false;
                dim = Some(record.len());
                continue;
            }
            Err(e) => {
                return Err(Error::Parse {
                    line,
                    msg: e.to_string(),
                })
            }
        };
        first = false;
        let d = *dim.get_or_insert(values.len());
        if values.len() != d {
            return Err(Error::Parse {
                line,
                msg: format!("expected {d} columns, found {}", values.len()),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line,
                msg: format!("non-finite value {v}"),
            });
        }
        data.extend(values);
    }
    let d = dim.ok_or(Error::EmptySet)?;
    if data.is_empty() {
        return Err(Error::EmptySet);
    }
    SampleSet::new(d, data)
}

pub fn write_samples_binary<W: Write>(samples: &SampleSet, out: &mut W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(samples.dim() as u32).to_le_bytes())?;
    out.write_all(&(samples.len() as u64).to_le_bytes())?;
    for v in samples.as_slice() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn parse_samples_binary(bytes: &[u8]) -> Result<SampleSet> {
    let bad = |msg: &str| Error::Parse {
        line: 0,
        msg: msg.to_string(),
    };
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("missing DSP1 header"));
    }
    let d = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| bad("size overflow"))?;
    if body.len() != expected {
        return Err(bad(&format!(
            "expected {expected} data bytes for {n} x {d}, found {}",
            body.len()
        )));
    }
    if n == 0 {
        return Err(Error::EmptySet);
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    SampleSet::new(d, data)
}

fn push_floats(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{v:.16e}").expect("write to string");
    }
    out.push(']');
}

/// Serialize an estimator; `params` is stored verbatim.
pub fn partition_to_json(
    pcd: &PiecewiseConstantDensity,
    method: &str,
    params: &serde_json::Value,
) -> String {
    let mut s = String::with_capacity(128 + pcd.leaf_count() * 80 * pcd.domain().dim());
    s.push_str("{\n  \"domain\": {\"lo\": ");
    push_floats(&mut s, pcd.domain().lo());
    s.push_str(", \"hi\": ");
    push_floats(&mut s, pcd.domain().hi());
    write!(
        s,
        "}},\n  \"total_n\": {},\n  \"method\": {},\n  \"params\": {},\n  \"truncated\": {},\n  \"leaves\": [",
        pcd.total_n(),
        serde_json::Value::from(method),
        serde_json::to_string(params).expect("params serialize"),
        pcd.truncated()
    )
    .expect("write to string");
    for (i, leaf) in pcd.leaves().iter().enumerate() {
        s.push_str(if i == 0 {
            "\n    {\"lo\": "
        } else {
            ",\n    {\"lo\": "
        });
        push_floats(&mut s, leaf.bounds.lo());
        s.push_str(", \"hi\": ");
        push_floats(&mut s, leaf.bounds.hi());
        write!(
            s,
            ", \"count\": {}, \"c\": {:.16e}}}",
            leaf.count, leaf.density
        )
        .expect("write to string");
    }
    s.push_str("\n  ]\n}\n");
    s
}

#[derive(Deserialize)]
struct DomainJson {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Deserialize)]
struct LeafJson {
    lo: Vec<f64>,
    hi: Vec<f64>,
    count: usize,
    c: f64,
}

#[derive(Deserialize)]
struct PartitionJson {
    domain: DomainJson,
    total_n: usize,
    method: String,
    #[serde(default)]
    params: serde_json::Value,
    #[serde(default)]
    truncated: bool,
    leaves: Vec<LeafJson>,
}

/// A partition file read back from disk.
#[derive(Debug)]
pub struct PartitionFile {
    pub method: String,
    pub params: serde_json::Value,
    pub density: PiecewiseConstantDensity,
}

pub fn partition_from_json(text: &str) -> Result<PartitionFile> {
    let raw: PartitionJson = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line() as u64,
        msg: e.to_string(),
    })?;
    let domain = AxisBox::new(raw.domain.lo, raw.domain.hi)?;
    let leaves = raw
        .leaves
        .into_iter()
        .map(|l| {
            Ok(Leaf {
                bounds: AxisBox::new(l.lo, l.hi)?,
                density: l.c,
                count: l.count,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let density =
        PiecewiseConstantDensity::from_leaves(domain, raw.total_n, leaves, raw.truncated)?;
    Ok(PartitionFile {
        method: raw.method,
        params: raw.params,
        density,
    })
}
