//! Versioned file formats.
//!
//! JSON documents (nets, kernel params, models, reports) carry a top-level
//! `version` field. Vector CSV files start with the line
//! `# walsh-net vector v1 p=<p>` followed by the header `index,re,im`.
//! Raw vector files are the 8 bytes `WALSHVEC`, a little-endian `u32`
//! version, a little-endian `u32` base, then `(re, im)` pairs of
//! little-endian `f64` until end of file. Readers refuse any version other
//! than [`FORMAT_VERSION`].

use std::io::{BufRead, Read, Write};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::anova::VarianceReport;
use crate::base_p::{GfMatrix, PrimeBase};
use crate::error::{Result, WalshError};
use crate::fwt::SampleVector;
use crate::kernel::KernelParams;
use crate::net::GeneratingMatrices;
use crate::param_opt::OptimizeOutcome;
use crate::spline::SplineModel;

pub const FORMAT_VERSION: u32 = 1;

const VECTOR_TAG: &str = "# walsh-net vector";
const RAW_MAGIC: &[u8; 8] = b"WALSHVEC";

fn check_version(found: u32) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(WalshError::UnsupportedVersion { found, expected: FORMAT_VERSION });
    }
    Ok(())
}

fn parse_err(e: impl std::fmt::Display) -> WalshError {
    WalshError::Parse(e.to_string())
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

/// Parses `text` after checking its `version` field.
fn from_versioned_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(parse_err)?;
    check_version(probe.version)?;
    serde_json::from_str(text).map_err(parse_err)
}

fn to_json<T: Serialize>(doc: &T) -> Result<String> {
    serde_json::to_string_pretty(doc).map_err(parse_err)
}

/// Generating matrices as `{version, p, m, s, r, matrices}`; each matrix is
/// `r` rows of `m` digits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetDocument {
    pub version: u32,
    pub p: u32,
    pub m: usize,
    pub s: usize,
    pub r: usize,
    pub matrices: Vec<Vec<Vec<u8>>>,
}

impl NetDocument {
    pub fn from_net(c: &GeneratingMatrices) -> Self {
        let matrices = c
            .matrices()
            .iter()
            .map(|mat| (0..mat.rows()).map(|i| (0..mat.cols()).map(|j| mat.get(i, j)).collect()).collect())
            .collect();
        NetDocument { version: FORMAT_VERSION, p: c.base().get(), m: c.m(), s: c.s(), r: c.r(), matrices }
    }

    pub fn to_net(&self) -> Result<GeneratingMatrices> {
        check_version(self.version)?;
        let p = PrimeBase::new(self.p)?;
        if self.matrices.len() != self.s {
            return Err(WalshError::DimensionMismatch { expected: self.s, found: self.matrices.len() });
        }
        let mats = self.matrices.iter().map(|rows| GfMatrix::from_rows(p, rows)).collect::<Result<Vec<_>>>()?;
        for mat in &mats {
            if mat.rows() != self.r || mat.cols() != self.m {
                return Err(WalshError::InvalidMatrices(format!("matrix is {}x{}, expected {}x{}", mat.rows(), mat.cols(), self.r, self.m)));
            }
        }
        GeneratingMatrices::new(p, self.m, self.r, mats)
    }
}

pub fn net_to_json(c: &GeneratingMatrices) -> Result<String> {
    to_json(&NetDocument::from_net(c))
}

pub fn net_from_json(text: &str) -> Result<GeneratingMatrices> {
    from_versioned_json::<NetDocument>(text)?.to_net()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ParamsDocument {
    version: u32,
    params: KernelParams,
}

pub fn params_to_json(params: &KernelParams) -> Result<String> {
    to_json(&ParamsDocument { version: FORMAT_VERSION, params: params.clone() })
}

pub fn params_from_json(text: &str) -> Result<KernelParams> {
    Ok(from_versioned_json::<ParamsDocument>(text)?.params)
}

/// Fitted model: the net it lives on, its params and the real coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub net: NetDocument,
    pub params: KernelParams,
    pub c: Vec<f64>,
}

pub fn model_to_json(model: &SplineModel) -> Result<String> {
    to_json(&ModelDocument {
        version: FORMAT_VERSION,
        net: NetDocument::from_net(model.net()),
        params: model.params().clone(),
        c: model.coefficients().re(),
    })
}

pub fn model_from_json(text: &str) -> Result<SplineModel> {
    let doc: ModelDocument = from_versioned_json(text)?;
    let net = doc.net.to_net()?;
    let c = SampleVector::from_real(net.base(), &doc.c)?;
    SplineModel::from_coefficients(&net, &doc.params, &c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ReportDocument {
    version: u32,
    #[serde(flatten)]
    report: VarianceReport,
}

pub fn report_to_json(report: &VarianceReport) -> Result<String> {
    to_json(&ReportDocument { version: FORMAT_VERSION, report: report.clone() })
}

pub fn report_from_json(text: &str) -> Result<VarianceReport> {
    Ok(from_versioned_json::<ReportDocument>(text)?.report)
}

/// Rows `d,trunc,sup` for `d = 0..=s`.
pub fn write_curves_csv<W: Write>(report: &VarianceReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["d", "trunc", "sup"]).map_err(parse_err)?;
    for (d, (t, s)) in report.trunc.iter().zip(&report.sup).enumerate() {
        w.write_record([d.to_string(), t.to_string(), s.to_string()]).map_err(parse_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows `iteration,cost,beta,alpha,q`.
pub fn write_trace_csv<W: Write>(outcome: &OptimizeOutcome, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "cost", "beta", "alpha", "q"]).map_err(parse_err)?;
    for (it, cost, beta, alpha, q) in &outcome.trace {
        w.write_record([it.to_string(), cost.to_string(), beta.to_string(), alpha.to_string(), q.to_string()]).map_err(parse_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Complex values with the base they are indexed over.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorData {
    pub p: PrimeBase,
    pub values: Vec<Complex64>,
}

pub fn write_vector_csv<W: Write>(data: &VectorData, mut out: W) -> Result<()> {
    writeln!(out, "{VECTOR_TAG} v{FORMAT_VERSION} p={}", data.p.get())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "re", "im"]).map_err(parse_err)?;
    for (n, v) in data.values.iter().enumerate() {
        w.write_record([n.to_string(), v.re.to_string(), v.im.to_string()]).map_err(parse_err)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_vector_tag(line: &str) -> Result<PrimeBase> {
    let rest = line.trim().strip_prefix(VECTOR_TAG).ok_or_else(|| WalshError::Parse(format!("missing vector header line, found {line:?}")))?;
    let mut version = None;
    let mut p = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix('v') {
            version = Some(v.parse::<u32>().map_err(parse_err)?);
        } else if let Some(v) = tok.strip_prefix("p=") {
            p = Some(v.parse::<u32>().map_err(parse_err)?);
        }
    }
    check_version(version.ok_or_else(|| WalshError::Parse("vector header has no version".into()))?)?;
    PrimeBase::new(p.ok_or_else(|| WalshError::Parse("vector header has no base".into()))?)
}

/// Reads `index,re,im` rows; indices must run `0, 1, 2, ...`.
pub fn read_vector_csv<R: BufRead>(mut input: R) -> Result<VectorData> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    let p = parse_vector_tag(&first)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut values = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(parse_err)?;
        if rec.len() != 3 {
            return Err(WalshError::Parse(format!("row {n}: expected 3 fields, found {}", rec.len())));
        }
        let idx: usize = rec[0].parse().map_err(parse_err)?;
        if idx != n {
            return Err(WalshError::Parse(format!("row {n}: index {idx} out of order")));
        }
        values.push(Complex64::new(rec[1].parse().map_err(parse_err)?, rec[2].parse().map_err(parse_err)?));
    }
    Ok(VectorData { p, values })
}

pub fn write_vector_raw<W: Write>(data: &VectorData, mut out: W) -> Result<()> {
    out.write_all(RAW_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&data.p.get().to_le_bytes())?;
    for v in &data.values {
        out.write_all(&v.re.to_le_bytes())?;
        out.write_all(&v.im.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_vector_raw<R: Read>(mut input: R) -> Result<VectorData> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..8] != RAW_MAGIC {
        return Err(WalshError::Parse("not a raw walsh-net vector".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    check_version(word(8))?;
    let p = PrimeBase::new(word(12))?;
    let body = &bytes[16..];
    if body.len() % 16 != 0 {
        return Err(WalshError::Parse(format!("raw vector body of {} bytes is not a whole number of pairs", body.len())));
    }
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8 bytes"));
    let values = body.chunks_exact(16).map(|c| Complex64::new(f(&c[..8]), f(&c[8..]))).collect();
    Ok(VectorData { p, values })
}

/// Rows `x1,...,xs`, one point per row.
pub fn write_points_csv<W: Write>(points: &[Vec<f64>], s: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((1..=s).map(|j| format!("x{j}"))).map_err(parse_err)?;
    for pt in points {
        w.write_record(pt.iter().map(|v| v.to_string())).map_err(parse_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Points from a CSV with a header row; every row must have the same width.
pub fn read_points_csv<R: Read>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let width = rdr.headers().map_err(parse_err)?.len();
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(parse_err)?;
        if rec.len() != width {
            return Err(WalshError::DimensionMismatch { expected: width, found: rec.len() });
        }
        out.push(rec.iter().map(|v| v.parse::<f64>().map_err(|e| WalshError::Parse(format!("row {n}: {e}")))).collect::<Result<Vec<_>>>()?);
    }
    Ok(out)
}
