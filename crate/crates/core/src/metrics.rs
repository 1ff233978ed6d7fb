//! Dataset comparison (coherence/consistency) and diagnostic curves.

use std::path::Path;

use faer::Mat;

use crate::dataset::{write_atomic, Domain, ResponseDataset};
use crate::error::{Error, Result};
use crate::tsvd::svd;
use crate::Complex64;

/// `|x + y|² / (2(|x|² + |y|²))`, 1 when both are zero.
pub fn coh(x: Complex64, y: Complex64) -> f64 {
    let den = 2.0 * (x.norm_sqr() + y.norm_sqr());
    if den == 0.0 {
        1.0
    } else {
        ((x + y).norm_sqr() / den).min(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct CoherenceReport {
    pub overall: f64,
    /// Mean over bins, `n_o × n_i`.
    pub per_entry: Mat<f64>,
    /// Mean over entries, one value per bin.
    pub per_bin: Vec<f64>,
}

impl CoherenceReport {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["output", "input", "coherence"])?;
        w.write_record(["all", "all", &self.overall.to_string()])?;
        for o in 0..self.per_entry.nrows() {
            for i in 0..self.per_entry.ncols() {
                w.write_record([(o + 1).to_string(), (i + 1).to_string(), self.per_entry[(o, i)].to_string()])?;
            }
        }
        into_bytes(w)
    }

    pub fn per_bin_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bin", "coherence"])?;
        for (k, c) in self.per_bin.iter().enumerate() {
            w.write_record([k.to_string(), c.to_string()])?;
        }
        into_bytes(w)
    }
}

fn into_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| std::io::Error::other(e.to_string()).into())
}

fn same_layout(a: &ResponseDataset, b: &ResponseDataset) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let (x, y) = (a.axis(), b.axis());
    let close = |p: f64, q: f64| (p - q).abs() <= 1e-9 * p.abs().max(q.abs()).max(1e-300);
    if x.domain != y.domain || !close(x.step, y.step) || !(x.start == y.start || close(x.start, y.start)) {
        return Err(Error::ShapeMismatch("datasets are on different axes".into()));
    }
    Ok(())
}

/// Mean coherence over all `(o, i, k)` with its marginals.
pub fn consist(reference: &ResponseDataset, other: &ResponseDataset) -> Result<CoherenceReport> {
    same_layout(reference, other)?;
    let (n_o, n_i, n_k) = reference.shape();
    let mut per_entry = Mat::zeros(n_o, n_i);
    let mut per_bin = vec![0.0; n_k];
    let mut total = 0.0;
    for o in 0..n_o {
        for i in 0..n_i {
            let mut sum = 0.0;
            for (k, (&a, &b)) in reference.series(o, i).iter().zip(other.series(o, i)).enumerate() {
                let c = coh(a, b);
                sum += c;
                per_bin[k] += c;
            }
            per_entry[(o, i)] = sum / n_k as f64;
            total += sum;
        }
    }
    let entries = (n_o * n_i) as f64;
    per_bin.iter_mut().for_each(|c| *c /= entries);
    Ok(CoherenceReport {
        overall: total / (entries * n_k as f64),
        per_entry,
        per_bin,
    })
}

/// Singular values of each `n_o × n_i` frequency slice, one row per bin.
pub fn cmif(ds: &ResponseDataset) -> Result<Mat<f64>> {
    if ds.domain() != Domain::Frequency {
        return Err(Error::Domain("CMIF needs frequency-domain data".into()));
    }
    let (n_o, n_i, n_k) = ds.shape();
    let p = n_o.min(n_i);
    let mut out = Mat::zeros(n_k, p);
    for k in 0..n_k {
        let slice = Mat::from_fn(n_o, n_i, |o, i| ds.get(o, i, k));
        let f = svd(slice.as_ref())?;
        for j in 0..p {
            out[(k, j)] = f.s[j];
        }
    }
    Ok(out)
}

pub fn write_cmif_csv(ds: &ResponseDataset, curves: &Mat<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["axis_value".to_string()];
    header.extend((1..=curves.ncols()).map(|j| format!("s{j}")));
    w.write_record(&header)?;
    for k in 0..curves.nrows() {
        let mut row = vec![ds.axis().value(k).to_string()];
        row.extend((0..curves.ncols()).map(|j| curves[(k, j)].to_string()));
        w.write_record(&row)?;
    }
    write_atomic(path, &into_bytes(w)?)
}

pub const DEFAULT_PROMINENCE: f64 = 0.9;

/// Bin indices of the interior local minima of `|Y_oi|` with relative depth
/// `1 − |Y_min| / |Y_ref| > prominence`, where `|Y_ref|` is the lower of the
/// highest magnitudes reached on each side before the curve drops below the
/// minimum again.
pub fn zero_bins(ds: &ResponseDataset, o: usize, i: usize, prominence: f64) -> Result<Vec<usize>> {
    ds.check_entry(o, i)?;
    let mag: Vec<f64> = ds.series(o, i).iter().map(|z| z.norm()).collect();
    let n = mag.len();
    let mut out = Vec::new();
    for k in 1..n.saturating_sub(1) {
        if !(mag[k] < mag[k - 1] && mag[k] <= mag[k + 1]) {
            continue;
        }
        let left = mag[..k].iter().rev().take_while(|&&x| x >= mag[k]).fold(0.0, |a: f64, &b| a.max(b));
        let right = mag[k + 1..].iter().take_while(|&&x| x >= mag[k]).fold(0.0, |a: f64, &b| a.max(b));
        let reference = left.min(right);
        if reference > 0.0 && 1.0 - mag[k] / reference > prominence {
            out.push(k);
        }
    }
    Ok(out)
}

/// Axis values of the zeros (anti-resonances) of `|Y_oi|`, see [`zero_bins`].
pub fn zero_locations(ds: &ResponseDataset, o: usize, i: usize, prominence: f64) -> Result<Vec<f64>> {
    Ok(zero_bins(ds, o, i, prominence)?
        .into_iter()
        .map(|k| ds.axis().value(k))
        .collect())
}
