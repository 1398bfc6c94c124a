//! Embedding file formats.
//!
//! * CSV: header `f0,...,f{s-1}[,label][,corrupt]`, one row per point.
//!   `corrupt` accepts `0/1` or `true/false`.
//! * Binary: magic `GMPR`, `u16` version 1, `u64` n, `u64` s, then `n * s`
//!   `f32` values row-major. All integers and floats little-endian. Binary
//!   files carry embeddings only.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{Dataset, EmbeddingMatrix};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GMPR";
pub const BINARY_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Binary,
}

impl FileFormat {
    /// `.csv` means CSV; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FileFormat::Csv,
            _ => FileFormat::Binary,
        }
    }
}

/// Reads either format, sniffing the magic bytes.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = [0u8; 4];
    let got = read_up_to(&mut file, &mut head).map_err(|e| Error::io(path, e))?;
    drop(file);
    if got == 4 && &head == MAGIC {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        decode_binary(&bytes)
            .map(Dataset::unlabelled)
            .map_err(|e| match e {
                Error::Format(msg) => Error::Parse {
                    path: path.to_path_buf(),
                    line: 0,
                    msg,
                },
                other => other,
            })
    } else {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        read_csv(BufReader::new(file), path)
    }
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match FileFormat::from_path(path) {
        FileFormat::Csv => write_csv(&mut out, data),
        FileFormat::Binary => out
            .write_all(&encode_binary(&data.embeddings))
            .map_err(|e| Error::io(path, e)),
    }?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn encode_binary(x: &EmbeddingMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * x.as_slice().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    buf.extend_from_slice(&(x.n() as u64).to_le_bytes());
    buf.extend_from_slice(&(x.dim() as u64).to_le_bytes());
    for &v in x.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    buf
}

pub fn decode_binary(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "binary header truncated ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != BINARY_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let s = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
    let count = n
        .checked_mul(s)
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| Error::Format(format!("header size {n}x{s} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * 4 {
        return Err(Error::Format(format!(
            "expected {} payload bytes for {n}x{s}, found {}",
            count * 4,
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    EmbeddingMatrix::new(n as usize, s as usize, values)
}

pub fn read_csv<R: Read>(reader: R, path: &Path) -> Result<Dataset> {
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();

    let mut s = 0;
    while headers.get(s) == Some(format!("f{s}").as_str()) {
        s += 1;
    }
    if s == 0 {
        return Err(parse_err(1, "header must start with f0".into()));
    }
    let mut label_col = None;
    let mut corrupt_col = None;
    for (j, name) in headers.iter().enumerate().skip(s) {
        match name {
            "label" if label_col.is_none() && corrupt_col.is_none() => label_col = Some(j),
            "corrupt" if corrupt_col.is_none() => corrupt_col = Some(j),
            other => return Err(parse_err(1, format!("unexpected column `{other}`"))),
        }
    }

    let mut values = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    let mut mask = corrupt_col.map(|_| Vec::new());
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for j in 0..s {
            let v: f64 = record[j]
                .parse()
                .map_err(|_| parse_err(line, format!("bad number `{}` in f{j}", &record[j])))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value in f{j}")));
            }
            values.push(v);
        }
        if let (Some(col), Some(labels)) = (label_col, labels.as_mut()) {
            let l: u32 = record[col]
                .parse()
                .map_err(|_| parse_err(line, format!("bad label `{}`", &record[col])))?;
            labels.push(l);
        }
        if let (Some(col), Some(mask)) = (corrupt_col, mask.as_mut()) {
            let b = match &record[col] {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(parse_err(line, format!("bad corrupt flag `{other}`"))),
            };
            mask.push(b);
        }
    }
    let n = values.len() / s;
    if n == 0 {
        return Err(parse_err(2, "no data rows".into()));
    }
    Dataset::new(EmbeddingMatrix::new(n, s, values)?, labels, mask)
}

pub fn write_csv<W: Write>(out: W, data: &Dataset) -> Result<()> {
    let to_err = |e: csv::Error| Error::Format(e.to_string());
    let mut wtr = csv::Writer::from_writer(out);
    let s = data.embeddings.dim();
    let mut header: Vec<String> = (0..s).map(|j| format!("f{j}")).collect();
    if data.labels.is_some() {
        header.push("label".into());
    }
    if data.corrupt_mask.is_some() {
        header.push("corrupt".into());
    }
    wtr.write_record(&header).map_err(to_err)?;
    for (i, row) in data.embeddings.rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(labels) = &data.labels {
            rec.push(labels[i].to_string());
        }
        if let Some(mask) = &data.corrupt_mask {
            rec.push(if mask[i] { "1" } else { "0" }.into());
        }
        wtr.write_record(&rec).map_err(to_err)?;
    }
    wtr.flush().map_err(|e| Error::Format(e.to_string()))
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            k => filled += k,
        }
    }
    Ok(filled)
}
