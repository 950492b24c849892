//! On-disk formats.
//!
//! Binary containers share one little-endian layout: a 4-byte ASCII magic,
//! `u32` version (= 1), two `u64` shape fields, then the payload arrays.
//!
//! | magic  | shape    | payload                              |
//! |--------|----------|--------------------------------------|
//! | `FVEC` | rows,dim | rows·dim `f32`, row-major            |
//! | `NNLK` | n,k      | n·k `u64` indices, n·k `f32` distances |
//! | `SRDM` | n,k      | n·k `u64` indices, n·k `f32` values    |
//!
//! Tabular data is CSV with a fixed header line.

use std::fs;
use std::io::Read;
use std::path::Path;

use reid_core::eval::EvalSummary;
use reid_core::{ClusterAssignment, DistanceTable, FeatureMatrix, LabelTable, NeighborList, SparseRefinedDistances};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 24;

const FVEC: &str = "FVEC";
const NNLK: &str = "NNLK";
const SRDM: &str = "SRDM";

fn header(out: &mut Vec<u8>, magic: &str, a: usize, b: usize) {
    out.extend_from_slice(magic.as_bytes());
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(a as u64).to_le_bytes());
    out.extend_from_slice(&(b as u64).to_le_bytes());
}

fn push_f32s(out: &mut Vec<u8>, xs: &[f32]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn push_indices(out: &mut Vec<u8>, xs: &[usize]) {
    for &x in xs {
        out.extend_from_slice(&(x as u64).to_le_bytes());
    }
}

/// Validated header plus the payload that follows it.
struct Container<'a> {
    a: u64,
    b: u64,
    payload: &'a [u8],
}

fn u64_at(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

fn open<'a>(bytes: &'a [u8], magic: &'static str, bytes_per_entry: u64) -> Result<Container<'a>> {
    let found = bytes.len() as u64;
    if bytes.len() < 4 {
        return Err(Error::Truncated { format: magic, expected: HEADER_BYTES as u64, found });
    }
    if &bytes[..4] != magic.as_bytes() {
        return Err(Error::BadMagic { expected: magic, found: bytes[..4].try_into().unwrap() });
    }
    if bytes.len() < HEADER_BYTES {
        return Err(Error::Truncated { format: magic, expected: HEADER_BYTES as u64, found });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion { format: magic, version });
    }
    let (a, b) = (u64_at(bytes, 8), u64_at(bytes, 16));
    if a == 0 || b == 0 {
        return Err(Error::ZeroDims { rows: a, dim: b });
    }
    let expected = a
        .checked_mul(b)
        .and_then(|e| e.checked_mul(bytes_per_entry))
        .and_then(|e| e.checked_add(HEADER_BYTES as u64))
        .unwrap_or(u64::MAX);
    if found < expected {
        return Err(Error::Truncated { format: magic, expected, found });
    }
    if found > expected {
        return Err(Error::TrailingBytes { format: magic, extra: found - expected });
    }
    Ok(Container { a, b, payload: &bytes[HEADER_BYTES..] })
}

fn read_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()
}

fn read_indices(bytes: &[u8]) -> Vec<usize> {
    bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize).collect()
}

pub fn encode_features(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + 4 * m.as_slice().len());
    header(&mut out, FVEC, m.rows(), m.dim());
    push_f32s(&mut out, m.as_slice());
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix> {
    let c = open(bytes, FVEC, 4)?;
    let dim = c.b as usize;
    let data = read_f32s(c.payload);
    if let Some(p) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: p / dim, col: p % dim });
    }
    Ok(FeatureMatrix::new(c.a as usize, dim, data)?)
}

/// A distance table stored as an FVEC container (`rows x cols`).
pub fn encode_table(t: &DistanceTable) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + 4 * t.as_slice().len());
    header(&mut out, FVEC, t.rows(), t.cols());
    push_f32s(&mut out, t.as_slice());
    out
}

pub fn decode_table(bytes: &[u8]) -> Result<DistanceTable> {
    let m = decode_features(bytes)?;
    let (rows, cols) = (m.rows(), m.dim());
    Ok(DistanceTable::new(rows, cols, m.into_vec())?)
}

fn encode_sparse(magic: &str, n: usize, k: usize, indices: &[usize], values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + 12 * indices.len());
    header(&mut out, magic, n, k);
    push_indices(&mut out, indices);
    push_f32s(&mut out, values);
    out
}

fn decode_sparse(bytes: &[u8], magic: &'static str) -> Result<(usize, Vec<usize>, Vec<f32>)> {
    let c = open(bytes, magic, 12)?;
    let split = (c.a * c.b * 8) as usize;
    Ok((c.b as usize, read_indices(&c.payload[..split]), read_f32s(&c.payload[split..])))
}

pub fn encode_neighbors(nn: &NeighborList) -> Vec<u8> {
    encode_sparse(NNLK, nn.n(), nn.k(), nn.indices_flat(), nn.distances_flat())
}

pub fn decode_neighbors(bytes: &[u8]) -> Result<NeighborList> {
    let (k, idx, dist) = decode_sparse(bytes, NNLK)?;
    Ok(NeighborList::new(k, idx, dist)?)
}

pub fn encode_refined(r: &SparseRefinedDistances) -> Vec<u8> {
    encode_sparse(SRDM, r.n(), r.k(), r.indices_flat(), r.values_flat())
}

pub fn decode_refined(bytes: &[u8]) -> Result<SparseRefinedDistances> {
    let (k, idx, vals) = decode_sparse(bytes, SRDM)?;
    Ok(SparseRefinedDistances::new(k, idx, vals)?)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    decode_features(&read_file(path.as_ref())?)
}

pub fn save_features(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_features(m))
}

pub fn load_table(path: impl AsRef<Path>) -> Result<DistanceTable> {
    decode_table(&read_file(path.as_ref())?)
}

pub fn save_table(t: &DistanceTable, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_table(t))
}

pub fn load_neighbors(path: impl AsRef<Path>) -> Result<NeighborList> {
    decode_neighbors(&read_file(path.as_ref())?)
}

pub fn save_neighbors(nn: &NeighborList, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_neighbors(nn))
}

pub fn load_refined(path: impl AsRef<Path>) -> Result<SparseRefinedDistances> {
    decode_refined(&read_file(path.as_ref())?)
}

pub fn save_refined(r: &SparseRefinedDistances, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_refined(r))
}

fn csv_reader<R: Read>(r: R, expected: &[&str]) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let got = rdr.headers().map_err(Error::csv)?;
    if got.iter().ne(expected.iter().copied()) {
        return Err(Error::Csv {
            line: 1,
            reason: format!("expected header `{}`, found `{}`", expected.join(","), got.iter().collect::<Vec<_>>().join(",")),
        });
    }
    Ok(rdr)
}

fn open_csv(path: &Path, expected: &[&str]) -> Result<csv::Reader<fs::File>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    csv_reader(f, expected)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Records deserialized as `T`, with the line number of each.
fn records<T: DeserializeOwned, R: Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<(u64, T)>> {
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(Error::csv)?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: T = rec.deserialize(None).map_err(Error::csv)?;
        out.push((line, row));
    }
    Ok(out)
}

/// Rows `(line, index, values)` placed by their index column, which must cover `0..n` exactly once.
fn by_index<V: Copy + Default>(rows: Vec<(u64, (i64, V))>) -> Result<Vec<V>> {
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    let n = rows.len();
    let mut out = vec![None; n];
    for (line, (index, v)) in rows {
        if index < 0 {
            return Err(Error::Csv { line, reason: format!("negative index {index}") });
        }
        let i = index as usize;
        if i >= n {
            // with n rows, an index beyond range means some index below n is absent
            let missing = out.iter().position(Option::is_none).unwrap_or(i);
            return Err(Error::MissingIndex(missing));
        }
        if out[i].is_some() {
            return Err(Error::DuplicateIndex(i));
        }
        out[i] = Some(v);
    }
    Ok(out.into_iter().map(|v| v.unwrap_or_default()).collect())
}

/// Parses `index,identity,camera` rows.
pub fn parse_labels(r: impl Read) -> Result<LabelTable> {
    let mut rdr = csv_reader(r, &["index", "identity", "camera"])?;
    let rows: Vec<(u64, (i64, i64, i64))> = records(&mut rdr)?;
    for &(line, (_, id, cam)) in &rows {
        if id < 0 || cam < 0 {
            return Err(Error::Csv { line, reason: format!("negative label ({id}, {cam})") });
        }
    }
    let placed = by_index(rows.into_iter().map(|(l, (i, id, cam))| (l, (i, (id, cam)))).collect())?;
    let (ids, cams): (Vec<i64>, Vec<i64>) = placed.into_iter().unzip();
    Ok(LabelTable::from_raw(&ids, &cams)?)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelTable> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_labels(f)
}

/// Writes original identity and camera values.
pub fn save_labels(labels: &LabelTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["index", "identity", "camera"]).map_err(Error::csv)?;
    for i in 0..labels.len() {
        w.serialize((i, labels.original_identity(i), labels.original_camera(i))).map_err(Error::csv)?;
    }
    finish(w, path)
}

pub fn save_assignment(a: &ClusterAssignment, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["index", "label"]).map_err(Error::csv)?;
    for (i, l) in a.labels().iter().enumerate() {
        w.serialize((i, l)).map_err(Error::csv)?;
    }
    finish(w, path)
}

pub fn load_assignment(path: impl AsRef<Path>) -> Result<ClusterAssignment> {
    let mut rdr = open_csv(path.as_ref(), &["index", "label"])?;
    let labels: Vec<i32> = by_index(records(&mut rdr)?)?;
    Ok(ClusterAssignment::from_labels(labels)?)
}

pub fn save_sample(members: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["index"]).map_err(Error::csv)?;
    for m in members {
        w.serialize(m).map_err(Error::csv)?;
    }
    finish(w, path)
}

pub fn load_sample(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let mut rdr = open_csv(path.as_ref(), &["index"])?;
    Ok(records::<usize, _>(&mut rdr)?.into_iter().map(|(_, v)| v).collect())
}

pub fn save_schedule(table: &[(usize, f64)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["epoch", "epsilon"]).map_err(Error::csv)?;
    for row in table {
        w.serialize(row).map_err(Error::csv)?;
    }
    finish(w, path)
}

pub fn load_schedule(path: impl AsRef<Path>) -> Result<Vec<(usize, f64)>> {
    let mut rdr = open_csv(path.as_ref(), &["epoch", "epsilon"])?;
    Ok(records(&mut rdr)?.into_iter().map(|(_, v)| v).collect())
}

/// `metric,value` rows: mAP, one `R{r}` per requested rank, then `excluded_queries`.
pub fn eval_summary_rows(s: &EvalSummary) -> Vec<(String, f64)> {
    let mut rows = vec![("mAP".to_string(), s.map)];
    rows.extend(s.rank_hits.iter().map(|&(r, v)| (format!("R{r}"), v)));
    rows.push(("excluded_queries".to_string(), s.excluded_queries as f64));
    rows
}

pub fn save_eval_summary(s: &EvalSummary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["metric", "value"]).map_err(Error::csv)?;
    for row in eval_summary_rows(s) {
        w.serialize(row).map_err(Error::csv)?;
    }
    finish(w, path)
}

pub fn load_eval_summary(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let mut rdr = open_csv(path.as_ref(), &["metric", "value"])?;
    Ok(records(&mut rdr)?.into_iter().map(|(_, v)| v).collect())
}

/// Serializes report rows; the header comes from the row type's field names.
pub fn save_report<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row).map_err(Error::csv)?;
    }
    finish(w, path)
}

pub fn load_report<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(f);
    rdr.deserialize().map(|r| r.map_err(Error::csv)).collect()
}
