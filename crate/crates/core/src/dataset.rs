//! The 3-D response container, its 2-D unfolded layout, the time/frequency
//! bridge and file I/O.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::CMatrix;

/// Spectral index interpretation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Time,
    Frequency,
}

impl Domain {
    fn code(self) -> u8 {
        match self {
            Domain::Time => 0,
            Domain::Frequency => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Domain::Time),
            1 => Some(Domain::Frequency),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::Time => "time",
            Domain::Frequency => "frequency",
        }
    }
}

/// Uniform spectral axis shared by all entries of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub domain: Domain,
    pub start: f64,
    pub step: f64,
    /// Free-text unit of `start` and `step` (`"Hz"`, `"rad/s"`, `"s"`, ...).
    pub unit_label: String,
}

impl Axis {
    pub fn new(domain: Domain, start: f64, step: f64, unit_label: impl Into<String>) -> Self {
        Axis {
            domain,
            start,
            step,
            unit_label: unit_label.into(),
        }
    }

    pub fn value(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }
}

/// Complex `n_o × n_i × n_k` response array.
///
/// Values are stored with the output index outermost and the spectral index
/// innermost, so each response `Y_oi` is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseDataset {
    n_o: usize,
    n_i: usize,
    n_k: usize,
    data: Vec<Complex64>,
    axis: Axis,
}

impl ResponseDataset {
    pub fn new(n_o: usize, n_i: usize, n_k: usize, data: Vec<Complex64>, axis: Axis) -> Result<Self> {
        if n_o == 0 || n_i == 0 {
            return Err(Error::InvalidDataset(format!(
                "need at least one output and one input, got {n_o}x{n_i}"
            )));
        }
        if n_k < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least two spectral lines, got {n_k}"
            )));
        }
        if data.len() != n_o * n_i * n_k {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {n_o}x{n_i}x{n_k} dataset",
                data.len()
            )));
        }
        if !(axis.step > 0.0) || !axis.step.is_finite() || !axis.start.is_finite() {
            return Err(Error::Axis(format!(
                "axis step must be positive and finite, got start={} step={}",
                axis.start, axis.step
            )));
        }
        if axis.domain == Domain::Time {
            if let Some(pos) = data.iter().position(|z| z.im != 0.0) {
                return Err(Error::InvalidDataset(format!(
                    "time-domain dataset has a nonzero imaginary part at flat index {pos}"
                )));
            }
        }
        Ok(ResponseDataset {
            n_o,
            n_i,
            n_k,
            data,
            axis,
        })
    }

    pub fn from_fn(
        n_o: usize,
        n_i: usize,
        n_k: usize,
        axis: Axis,
        mut f: impl FnMut(usize, usize, usize) -> Complex64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(n_o * n_i * n_k);
        for o in 0..n_o {
            for i in 0..n_i {
                for k in 0..n_k {
                    data.push(f(o, i, k));
                }
            }
        }
        Self::new(n_o, n_i, n_k, data, axis)
    }

    /// Same shape and axis, new values.
    pub fn with_data(&self, data: Vec<Complex64>) -> Result<Self> {
        Self::new(self.n_o, self.n_i, self.n_k, data, self.axis.clone())
    }

    pub fn n_o(&self) -> usize {
        self.n_o
    }

    pub fn n_i(&self) -> usize {
        self.n_i
    }

    pub fn n_k(&self) -> usize {
        self.n_k
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_o, self.n_i, self.n_k)
    }

    pub fn axis(&self) -> &Axis {
        &self.axis
    }

    pub fn domain(&self) -> Domain {
        self.axis.domain
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, o: usize, i: usize, k: usize) -> Complex64 {
        self.data[(o * self.n_i + i) * self.n_k + k]
    }

    /// The response `Y_oi` along the spectral axis.
    pub fn series(&self, o: usize, i: usize) -> &[Complex64] {
        let start = (o * self.n_i + i) * self.n_k;
        &self.data[start..start + self.n_k]
    }

    pub fn check_entry(&self, o: usize, i: usize) -> Result<()> {
        if o >= self.n_o || i >= self.n_i {
            return Err(Error::Index(format!(
                "entry ({o}, {i}) outside a {}x{} dataset",
                self.n_o, self.n_i
            )));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= alpha);
        out
    }

    /// Elementwise difference, used for error norms.
    pub fn sub(&self, other: &ResponseDataset) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        let mut out = self.clone();
        out.data = data;
        Ok(out)
    }

    /// Relative Frobenius distance `‖self − other‖ / ‖other‖`.
    pub fn relative_error(&self, reference: &ResponseDataset) -> Result<f64> {
        let diff = self.sub(reference)?.frobenius_norm();
        let norm = reference.frobenius_norm();
        Ok(if norm == 0.0 { diff } else { diff / norm })
    }

    /// Copy of spectral lines `start..end`, with the axis start shifted.
    pub fn restrict_bins(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_k || end - start < 2 {
            return Err(Error::Index(format!(
                "bin range {start}..{end} invalid for n_k = {}",
                self.n_k
            )));
        }
        let n_k = end - start;
        let mut data = Vec::with_capacity(self.n_o * self.n_i * n_k);
        for o in 0..self.n_o {
            for i in 0..self.n_i {
                data.extend_from_slice(&self.series(o, i)[start..end]);
            }
        }
        let mut axis = self.axis.clone();
        axis.start = self.axis.value(start);
        Self::new(self.n_o, self.n_i, n_k, data, axis)
    }

    /// Replaces the axis description (same domain required).
    pub(crate) fn with_axis(mut self, axis: Axis) -> Self {
        debug_assert_eq!(axis.domain, self.axis.domain);
        self.axis = axis;
        self
    }
}

/// Spectrally unfolded dataset: `n_k` rows, one column per `(o, i)` pair with
/// the output index varying fastest (`Y_11, Y_21, …`).
#[derive(Debug, Clone)]
pub struct FlatDataset {
    pub matrix: CMatrix,
    pub axis: Axis,
}

/// Column of the unfolded matrix that holds entry `(o, i)`.
pub fn flat_column(o: usize, i: usize, n_o: usize) -> usize {
    i * n_o + o
}

pub fn flatten(ds: &ResponseDataset) -> FlatDataset {
    let (n_o, n_i, n_k) = ds.shape();
    let matrix = CMatrix::from_fn(n_k, n_o * n_i, |k, j| ds.get(j % n_o, j / n_o, k));
    FlatDataset {
        matrix,
        axis: ds.axis.clone(),
    }
}

pub fn unflatten(flat: &FlatDataset, n_o: usize, n_i: usize) -> Result<ResponseDataset> {
    let cols = flat.matrix.ncols();
    if cols != n_o * n_i {
        return Err(Error::DimensionMismatch(format!(
            "{cols} columns cannot be reshaped to {n_o}x{n_i} entries"
        )));
    }
    let n_k = flat.matrix.nrows();
    ResponseDataset::from_fn(n_o, n_i, n_k, flat.axis.clone(), |o, i, k| {
        flat.matrix[(k, flat_column(o, i, n_o))]
    })
}

fn time_label(freq_label: &str) -> String {
    match freq_label {
        "Hz" => "s".to_string(),
        "rad/s" => "s [rad/s]".to_string(),
        other => format!("1/({other})"),
    }
}

fn frequency_label(time_label: &str) -> (String, f64) {
    // (label, factor applied to 1/(N·dt))
    match time_label {
        "s" => ("Hz".to_string(), 1.0),
        "s [rad/s]" => ("rad/s".to_string(), 2.0 * PI),
        other => match other.strip_prefix("1/(").and_then(|s| s.strip_suffix(')')) {
            Some(inner) => (inner.to_string(), 1.0),
            None => (format!("1/({other})"), 1.0),
        },
    }
}

/// Interprets each response as the one-sided spectrum of a real signal of
/// length `N = 2(n_k − 1)` and returns the real time series.
///
/// The imaginary parts of the DC and Nyquist bins are discarded. The inverse
/// transform carries the `1/N` factor.
pub fn to_time(ds: &ResponseDataset) -> Result<ResponseDataset> {
    if ds.domain() != Domain::Frequency {
        return Err(Error::Domain("to_time expects a frequency-domain dataset".into()));
    }
    if ds.axis.start != 0.0 {
        return Err(Error::Axis(format!(
            "time conversion needs a frequency axis starting at 0, got {}",
            ds.axis.start
        )));
    }
    let n_k = ds.n_k;
    let n = 2 * (n_k - 1);
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let mut buf = vec![Complex64::default(); n];
    let mut data = Vec::with_capacity(ds.n_o * ds.n_i * n);
    let scale = 1.0 / n as f64;
    for o in 0..ds.n_o {
        for i in 0..ds.n_i {
            hermitian_extend(ds.series(o, i), &mut buf);
            ifft.process(&mut buf);
            data.extend(buf.iter().map(|z| Complex64::new(z.re * scale, 0.0)));
        }
    }
    let factor = if ds.axis.unit_label == "rad/s" { 2.0 * PI } else { 1.0 };
    let axis = Axis::new(
        Domain::Time,
        0.0,
        factor / (n as f64 * ds.axis.step),
        time_label(&ds.axis.unit_label),
    );
    ResponseDataset::new(ds.n_o, ds.n_i, n, data, axis)
}

/// Full Hermitian spectrum of length `2(n_k − 1)` from a one-sided one.
pub(crate) fn hermitian_extend(one_sided: &[Complex64], full: &mut [Complex64]) {
    let n_k = one_sided.len();
    let n = full.len();
    debug_assert_eq!(n, 2 * (n_k - 1));
    full[..n_k].copy_from_slice(one_sided);
    full[0].im = 0.0;
    full[n_k - 1].im = 0.0;
    for k in 1..n_k - 1 {
        full[n - k] = one_sided[k].conj();
    }
}

/// Forward transform of real time series; keeps bins `0..=N/2`.
pub fn to_frequency(ds: &ResponseDataset) -> Result<ResponseDataset> {
    if ds.domain() != Domain::Time {
        return Err(Error::Domain("to_frequency expects a time-domain dataset".into()));
    }
    let n = ds.n_k;
    if !n.is_multiple_of(2) {
        return Err(Error::Length(format!("time series length {n} is odd")));
    }
    let n_k = n / 2 + 1;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf = vec![Complex64::default(); n];
    let mut data = Vec::with_capacity(ds.n_o * ds.n_i * n_k);
    for o in 0..ds.n_o {
        for i in 0..ds.n_i {
            buf.copy_from_slice(ds.series(o, i));
            fft.process(&mut buf);
            buf[0].im = 0.0;
            buf[n_k - 1].im = 0.0;
            data.extend_from_slice(&buf[..n_k]);
        }
    }
    let (label, factor) = frequency_label(&ds.axis.unit_label);
    let axis = Axis::new(Domain::Frequency, 0.0, factor / (n as f64 * ds.axis.step), label);
    ResponseDataset::new(ds.n_o, ds.n_i, n_k, data, axis)
}

const MAGIC: &[u8; 8] = b"PRNKDS01";

/// Serializes a dataset in the little-endian `PRNKDS01` container layout.
pub fn encode(ds: &ResponseDataset) -> Vec<u8> {
    let label = ds.axis.unit_label.as_bytes();
    let mut out = Vec::with_capacity(8 + 12 + 1 + 16 + 2 + label.len() + ds.data.len() * 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(ds.n_o as u32).to_le_bytes());
    out.extend_from_slice(&(ds.n_i as u32).to_le_bytes());
    out.extend_from_slice(&(ds.n_k as u32).to_le_bytes());
    out.push(ds.axis.domain.code());
    out.extend_from_slice(&ds.axis.start.to_le_bytes());
    out.extend_from_slice(&ds.axis.step.to_le_bytes());
    out.extend_from_slice(&(label.len() as u16).to_le_bytes());
    out.extend_from_slice(label);
    for z in &ds.data {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!(
                    "truncated file: need {n} bytes for {what}, {} left",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ResponseDataset> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(0, format!("bad magic {:?}", String::from_utf8_lossy(magic))));
    }
    let n_o = r.u32("n_o")? as usize;
    let n_i = r.u32("n_i")? as usize;
    let n_k = r.u32("n_k")? as usize;
    let domain_pos = r.pos as u64;
    let domain = Domain::from_code(r.take(1, "domain")?[0])
        .ok_or_else(|| Error::format(domain_pos, "unknown domain code"))?;
    let start = r.f64("axis_start")?;
    let step = r.f64("axis_step")?;
    let label_len = u16::from_le_bytes(r.take(2, "label length")?.try_into().unwrap()) as usize;
    let label_pos = r.pos as u64;
    let label = std::str::from_utf8(r.take(label_len, "unit label")?)
        .map_err(|_| Error::format(label_pos, "unit label is not UTF-8"))?
        .to_string();
    let count = n_o
        .checked_mul(n_i)
        .and_then(|x| x.checked_mul(n_k))
        .ok_or_else(|| Error::format(8, "dataset dimensions overflow"))?;
    let header_end = r.pos as u64;
    let payload = r.take(count.saturating_mul(16), "payload")?;
    let data = payload
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after payload"));
    }
    ResponseDataset::new(n_o, n_i, n_k, data, Axis::new(domain, start, step, label))
        .map_err(|e| Error::format(header_end, e.to_string()))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<ResponseDataset> {
    decode(&fs::read(path)?)
}

/// Writes `bytes` next to `path` and renames over it.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_dataset(ds: &ResponseDataset, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode(ds))
}

fn csv_row(axis_value: f64, z: Complex64) -> [String; 5] {
    [
        axis_value.to_string(),
        z.re.to_string(),
        z.im.to_string(),
        z.norm().to_string(),
        z.arg().to_string(),
    ]
}

const CSV_HEADER: [&str; 5] = ["axis_value", "real", "imag", "magnitude", "phase"];

/// One response as CSV: `axis_value,real,imag,magnitude,phase` (phase in rad).
pub fn export_csv(ds: &ResponseDataset, o: usize, i: usize, path: impl AsRef<Path>) -> Result<()> {
    ds.check_entry(o, i)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for (k, z) in ds.series(o, i).iter().enumerate() {
        w.write_record(csv_row(ds.axis.value(k), *z))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// File name used by [`export_all_csv`] for entry `(o, i)` (1-based in the name).
pub fn entry_csv_name(o: usize, i: usize) -> String {
    format!("Y_{}_{}.csv", o + 1, i + 1)
}

/// Writes one CSV per entry into `dir` and returns the paths.
pub fn export_all_csv(ds: &ResponseDataset, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(ds.n_o * ds.n_i);
    for o in 0..ds.n_o {
        for i in 0..ds.n_i {
            let p = dir.join(entry_csv_name(o, i));
            export_csv(ds, o, i, &p)?;
            paths.push(p);
        }
    }
    Ok(paths)
}

/// Whole dataset as one long-format CSV. The first line is a `#` metadata
/// comment so the file can be read back with [`read_dataset_csv`].
pub fn write_dataset_csv(ds: &ResponseDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = format!(
        "# n_o={},n_i={},n_k={},domain={},axis_start={},axis_step={},unit={}\n",
        ds.n_o,
        ds.n_i,
        ds.n_k,
        ds.axis.domain.name(),
        ds.axis.start,
        ds.axis.step,
        ds.axis.unit_label
    )
    .into_bytes();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["output", "input"].iter().chain(CSV_HEADER.iter()))?;
    for o in 0..ds.n_o {
        for i in 0..ds.n_i {
            for (k, z) in ds.series(o, i).iter().enumerate() {
                let row = csv_row(ds.axis.value(k), *z);
                w.write_record([(o + 1).to_string(), (i + 1).to_string()].iter().chain(row.iter()))?;
            }
        }
    }
    buf.extend(w.into_inner().map_err(|e| Error::Io(e.into_error()))?);
    write_atomic(path, &buf)
}

pub fn read_dataset_csv(path: impl AsRef<Path>) -> Result<ResponseDataset> {
    let text = fs::read_to_string(path)?;
    let (meta_line, body) = text
        .split_once('\n')
        .ok_or_else(|| Error::format(0, "missing metadata line"))?;
    let meta = meta_line
        .strip_prefix("# ")
        .ok_or_else(|| Error::format(0, "metadata line must start with '# '"))?;
    let mut n_o = None;
    let mut n_i = None;
    let mut n_k = None;
    let mut domain = None;
    let mut start = None;
    let mut step = None;
    let mut unit = None;
    // `unit` is last and may itself contain commas.
    let (head, unit_part) = meta
        .split_once(",unit=")
        .ok_or_else(|| Error::format(0, "metadata lacks unit"))?;
    unit = unit.or(Some(unit_part.to_string()));
    for field in head.split(',') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::format(0, format!("bad metadata field {field:?}")))?;
        let bad = || Error::format(0, format!("bad value for {key}: {value:?}"));
        match key {
            "n_o" => n_o = Some(value.parse::<usize>().map_err(|_| bad())?),
            "n_i" => n_i = Some(value.parse::<usize>().map_err(|_| bad())?),
            "n_k" => n_k = Some(value.parse::<usize>().map_err(|_| bad())?),
            "domain" => {
                domain = Some(match value {
                    "time" => Domain::Time,
                    "frequency" => Domain::Frequency,
                    _ => return Err(bad()),
                })
            }
            "axis_start" => start = Some(value.parse::<f64>().map_err(|_| bad())?),
            "axis_step" => step = Some(value.parse::<f64>().map_err(|_| bad())?),
            _ => return Err(Error::format(0, format!("unknown metadata key {key}"))),
        }
    }
    let missing = |what: &str| Error::format(0, format!("metadata lacks {what}"));
    let (n_o, n_i, n_k) = (
        n_o.ok_or_else(|| missing("n_o"))?,
        n_i.ok_or_else(|| missing("n_i"))?,
        n_k.ok_or_else(|| missing("n_k"))?,
    );
    let axis = Axis::new(
        domain.ok_or_else(|| missing("domain"))?,
        start.ok_or_else(|| missing("axis_start"))?,
        step.ok_or_else(|| missing("axis_step"))?,
        unit.unwrap_or_default(),
    );
    let mut data = vec![Complex64::default(); n_o * n_i * n_k];
    let mut seen = vec![false; data.len()];
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| -> Result<&str> {
            rec.get(c)
                .ok_or_else(|| Error::format(0, format!("row {} has too few columns", row + 1)))
        };
        let parse_idx = |c: usize| -> Result<usize> {
            field(c)?
                .parse::<usize>()
                .map_err(|_| Error::format(0, format!("row {}: bad index", row + 1)))
        };
        let parse_f = |c: usize| -> Result<f64> {
            field(c)?
                .parse::<f64>()
                .map_err(|_| Error::format(0, format!("row {}: bad number", row + 1)))
        };
        let (o, i) = (parse_idx(0)?, parse_idx(1)?);
        if o == 0 || i == 0 || o > n_o || i > n_i {
            return Err(Error::format(0, format!("row {}: entry ({o}, {i}) out of range", row + 1)));
        }
        let k = ((parse_f(2)? - axis.start) / axis.step).round();
        if !(k >= 0.0 && (k as usize) < n_k) {
            return Err(Error::format(0, format!("row {}: axis value off the grid", row + 1)));
        }
        let idx = ((o - 1) * n_i + (i - 1)) * n_k + k as usize;
        data[idx] = Complex64::new(parse_f(3)?, parse_f(4)?);
        seen[idx] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::format(0, format!("CSV lacks value for flat index {missing}")));
    }
    ResponseDataset::new(n_o, n_i, n_k, data, axis)
}
