//! File formats.
//!
//! * Signals: raw little-endian `f64` (real samples) or CSV with one column
//!   (real) or two columns (real, imaginary). A non-numeric first row is
//!   treated as a header.
//! * Measurement bundles: a binary container, or a directory holding
//!   `y.csv`, `phi.csv` and `meta.csv`.
//! * Power estimates and recovery traces: CSV with fixed headers.

use std::fs;
use std::path::Path;

use crate::multicoset::PowerEstimate;
use crate::numerics::{RealMatrix, C64};
use crate::spectralcs::{
    miss_radius, missed_frequencies, normalized_squared_error, synthesize_signal,
    LineSpectrumModel, RecoveryTrace,
};
use crate::{Error, Result};

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{}:{line}: not a number: {s:?}", path.display())))
}

/// Numeric CSV rows; a leading non-numeric row is skipped as a header.
fn read_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if i == 0 && rec.iter().any(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        rows.push(
            rec.iter()
                .map(|f| parse_f64(f, path, i + 1))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(rows)
}

fn f64_le(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}

/// Reads a Nyquist-grid signal. `.csv` files are parsed as text, anything
/// else as raw little-endian `f64` real samples.
pub fn read_signal(path: &Path) -> Result<Vec<C64>> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let rows = read_numeric_csv(path)?;
        rows.iter()
            .enumerate()
            .map(|(i, r)| match r.as_slice() {
                [re] => Ok(C64::new(*re, 0.0)),
                [re, im] => Ok(C64::new(*re, *im)),
                _ => Err(Error::Parse(format!(
                    "{}: row {} has {} columns, expected 1 or 2",
                    path.display(),
                    i + 1,
                    r.len()
                ))),
            })
            .collect()
    } else {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Parse(format!(
                "{}: length {} is not a multiple of 8 bytes",
                path.display(),
                bytes.len()
            )));
        }
        Ok(f64_le(&bytes)
            .into_iter()
            .map(|v| C64::new(v, 0.0))
            .collect())
    }
}

pub fn write_signal_f64(path: &Path, x: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = x.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// `segment_index,p_hat`, segments numbered from 1.
pub fn write_power_csv(path: &Path, estimate: &PowerEstimate) -> Result<()> {
    write_csv(
        path,
        &["segment_index", "p_hat"],
        estimate
            .p_hat
            .iter()
            .enumerate()
            .map(|(i, p)| vec![(i + 1).to_string(), p.to_string()]),
    )
}

/// Measurements, the matrix that produced them, and optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBundle {
    pub y: Vec<C64>,
    pub phi: RealMatrix,
    pub order: usize,
    pub noise_sigma: f64,
    pub truth: Option<LineSpectrumModel>,
}

const BUNDLE_MAGIC: &[u8; 8] = b"SNYQBNDL";
const BUNDLE_VERSION: u32 = 1;

/// Binary layout, all little-endian:
/// magic, u32 version, u64 M, u64 N, u64 K, f64 σ, u8 has_truth,
/// y as M (re, im) pairs, Φ row-major, then if present K frequencies and
/// K (re, im) amplitudes.
pub fn write_bundle_binary(path: &Path, b: &MeasurementBundle) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(BUNDLE_MAGIC);
    out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
    for v in [b.phi.rows() as u64, b.phi.cols() as u64, b.order as u64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&b.noise_sigma.to_le_bytes());
    out.push(b.truth.is_some() as u8);
    for z in &b.y {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    for v in b.phi.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(t) = &b.truth {
        for w in t.frequencies() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for d in t.amplitudes() {
            out.extend_from_slice(&d.re.to_le_bytes());
            out.extend_from_slice(&d.im.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Parse(format!(
                    "{}: truncated bundle at byte {}",
                    self.path.display(),
                    self.pos
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Parse("bundle dimensions overflow".into()))?;
        Ok(f64_le(self.take(len)?))
    }
}

fn pairs_to_complex(v: &[f64]) -> Vec<C64> {
    v.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect()
}

pub fn read_bundle_binary(path: &Path) -> Result<MeasurementBundle> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if c.take(8)? != BUNDLE_MAGIC {
        return Err(Error::Parse(format!(
            "{}: not a measurement bundle",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes"));
    if version != BUNDLE_VERSION {
        return Err(Error::Parse(format!(
            "{}: unsupported bundle version {version}",
            path.display()
        )));
    }
    let (m, n, k) = (c.u64()? as usize, c.u64()? as usize, c.u64()? as usize);
    let noise_sigma = c.f64s(1)?[0];
    let has_truth = c.take(1)?[0] != 0;
    let y = pairs_to_complex(&c.f64s(2 * m)?);
    let phi = RealMatrix::from_row_major(m, n, c.f64s(m * n)?)?;
    let truth = if has_truth {
        let freqs = c.f64s(k)?;
        let amps = pairs_to_complex(&c.f64s(2 * k)?);
        Some(LineSpectrumModel::new(freqs, amps)?)
    } else {
        None
    };
    if c.pos != bytes.len() {
        return Err(Error::Parse(format!(
            "{}: trailing bytes after bundle",
            path.display()
        )));
    }
    Ok(MeasurementBundle {
        y,
        phi,
        order: k,
        noise_sigma,
        truth,
    })
}

/// Directory form: `y.csv` (re,im), `phi.csv` (one row per measurement),
/// `meta.csv` (key,value with `order`, `noise_sigma`) and optionally
/// `truth.csv` (frequency,re,im).
pub fn write_bundle_csv(dir: &Path, b: &MeasurementBundle) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_csv(
        &dir.join("y.csv"),
        &["re", "im"],
        b.y.iter().map(|z| vec![z.re.to_string(), z.im.to_string()]),
    )?;
    let header: Vec<String> = (0..b.phi.cols()).map(|j| format!("c{j}")).collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        &dir.join("phi.csv"),
        &header_refs,
        (0..b.phi.rows()).map(|i| b.phi.row(i).iter().map(f64::to_string).collect()),
    )?;
    write_csv(
        &dir.join("meta.csv"),
        &["key", "value"],
        [
            vec!["order".into(), b.order.to_string()],
            vec!["noise_sigma".into(), b.noise_sigma.to_string()],
        ],
    )?;
    if let Some(t) = &b.truth {
        write_csv(
            &dir.join("truth.csv"),
            &["frequency", "re", "im"],
            t.frequencies()
                .iter()
                .zip(t.amplitudes())
                .map(|(w, d)| vec![w.to_string(), d.re.to_string(), d.im.to_string()]),
        )?;
    }
    Ok(())
}

pub fn read_bundle_csv(dir: &Path) -> Result<MeasurementBundle> {
    let y: Vec<C64> = read_numeric_csv(&dir.join("y.csv"))?
        .iter()
        .map(|r| match r.as_slice() {
            [re, im] => Ok(C64::new(*re, *im)),
            [re] => Ok(C64::new(*re, 0.0)),
            _ => Err(Error::Parse("y.csv rows need 1 or 2 columns".into())),
        })
        .collect::<Result<_>>()?;
    let phi = RealMatrix::from_rows(&read_numeric_csv(&dir.join("phi.csv"))?)?;
    let meta_path = dir.join("meta.csv");
    let mut reader = csv::Reader::from_path(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let (mut order, mut noise_sigma) = (None, 0.0);
    for rec in reader.records() {
        let rec = rec.map_err(|e| io_err(&meta_path, e))?;
        match (rec.get(0), rec.get(1)) {
            (Some("order"), Some(v)) => {
                order = Some(
                    v.trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad order {v:?}")))?,
                )
            }
            (Some("noise_sigma"), Some(v)) => noise_sigma = parse_f64(v, &meta_path, 0)?,
            _ => {}
        }
    }
    let order =
        order.ok_or_else(|| Error::Parse(format!("{}: missing order", meta_path.display())))?;
    let truth_path = dir.join("truth.csv");
    let truth = if truth_path.exists() {
        let mut freqs = Vec::new();
        let mut amps = Vec::new();
        for r in read_numeric_csv(&truth_path)? {
            let [w, re, im] = r.as_slice() else {
                return Err(Error::Parse("truth.csv rows need 3 columns".into()));
            };
            freqs.push(*w);
            amps.push(C64::new(*re, *im));
        }
        Some(LineSpectrumModel::new(freqs, amps)?)
    } else {
        None
    };
    if y.len() != phi.rows() {
        return Err(Error::Parse(format!(
            "{} measurements but Φ has {} rows",
            y.len(),
            phi.rows()
        )));
    }
    Ok(MeasurementBundle {
        y,
        phi,
        order,
        noise_sigma,
        truth,
    })
}

/// Directory → CSV triple, file → binary container.
pub fn read_bundle(path: &Path) -> Result<MeasurementBundle> {
    if path.is_dir() {
        read_bundle_csv(path)
    } else {
        read_bundle_binary(path)
    }
}

/// `iteration,nmse_db,residual,missed_count`; the truth-dependent columns
/// are left empty when the bundle carries no ground truth.
pub fn write_trace_csv(
    path: &Path,
    trace: &RecoveryTrace,
    truth: Option<&LineSpectrumModel>,
) -> Result<()> {
    let n = trace.iterations.first().map_or(0, |r| r.x_hat.len());
    let x = truth.map(|t| synthesize_signal(t, n));
    let rows = trace.iterations.iter().enumerate().map(|(i, rec)| {
        let (nmse, missed) = match (truth, &x) {
            (Some(t), Some(x)) => (
                (10.0 * normalized_squared_error(x, &rec.x_hat).log10()).to_string(),
                missed_frequencies(t.frequencies(), &rec.omega_hat, miss_radius(n)).to_string(),
            ),
            _ => (String::new(), String::new()),
        };
        vec![
            (i + 1).to_string(),
            nmse,
            rec.residual_norm.to_string(),
            missed,
        ]
    });
    write_csv(
        path,
        &["iteration", "nmse_db", "residual", "missed_count"],
        rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::spectralcs::MeasurementSystem;

    fn tmpdir(name: &str) -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("subnyq-io-{name}-{}", std::process::id()));
        fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn signal_round_trips() {
        let d = tmpdir("signal");
        let x = [0.5, -1.25, 3.0];
        let bin = d.join("x.f64");
        write_signal_f64(&bin, &x).unwrap();
        let back = read_signal(&bin).unwrap();
        assert_eq!(back.iter().map(|z| z.re).collect::<Vec<_>>(), x);
        let csv_path = d.join("x.csv");
        fs::write(&csv_path, "re,im\n1,2\n3,-4\n").unwrap();
        assert_eq!(
            read_signal(&csv_path).unwrap(),
            vec![C64::new(1.0, 2.0), C64::new(3.0, -4.0)]
        );
        fs::write(&csv_path, "1\nabc\n").unwrap();
        assert!(matches!(read_signal(&csv_path), Err(Error::Parse(_))));
    }

    #[test]
    fn bundles_round_trip() {
        let d = tmpdir("bundle");
        let mut rng = stream(1, "bundle", 0, 0);
        let model = LineSpectrumModel::random(2, 0.5, true, &mut rng).unwrap();
        let sys = MeasurementSystem::gaussian(5, 12, 0.3, &mut rng).unwrap();
        let y = sys.measure(&synthesize_signal(&model, 12), &mut rng);
        let b = MeasurementBundle {
            y,
            phi: sys.phi,
            order: 2,
            noise_sigma: 0.3,
            truth: Some(model),
        };
        let bin = d.join("b.bin");
        write_bundle_binary(&bin, &b).unwrap();
        assert_eq!(read_bundle(&bin).unwrap(), b);
        let dir = d.join("triple");
        write_bundle_csv(&dir, &b).unwrap();
        assert_eq!(read_bundle(&dir).unwrap(), b);
        fs::write(&bin, b"SNYQBNDL").unwrap();
        assert!(matches!(read_bundle(&bin), Err(Error::Parse(_))));
    }
}
