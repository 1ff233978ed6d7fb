//! SVD contract, rank-r reconstruction, Hankel embedding and anti-diagonal
//! averaging (SSA).

use std::time::Instant;

use faer::{Mat, MatRef};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::report::SvdRecord;
use crate::selection::{select, SelectionStrategy};
use crate::CMatrix;

/// Thin SVD `A = U·diag(s)·Vᴴ` with `p = min(m, n)` triplets.
///
/// Singular values are nonincreasing. Each left vector is phase-rotated so its
/// largest-magnitude entry is real and positive; the matching right vector is
/// rotated by the same phase so the product is unchanged.
#[derive(Debug, Clone)]
pub struct SvdFactorization {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

impl SvdFactorization {
    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn cols(&self) -> usize {
        self.v.nrows()
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

fn is_real(a: MatRef<'_, Complex64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].im == 0.0))
}

pub fn svd(a: MatRef<'_, Complex64>) -> Result<SvdFactorization> {
    let (m, n) = (a.nrows(), a.ncols());
    if m == 0 || n == 0 {
        return Err(Error::Shape(format!("cannot factorize an empty {m}x{n} matrix")));
    }
    if !(0..n).all(|j| (0..m).all(|i| a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite())) {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    let not_converged = |_| Error::Convergence { rows: m, cols: n };
    let (mut u, s, mut v) = if is_real(a) {
        let re = Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)].re);
        let f = re.thin_svd().map_err(not_converged)?;
        let p = m.min(n);
        let s: Vec<f64> = (0..p).map(|k| f.S()[k]).collect();
        let lift = |x: MatRef<'_, f64>| CMatrix::from_fn(x.nrows(), x.ncols(), |i, j| Complex64::new(x[(i, j)], 0.0));
        (lift(f.U()), s, lift(f.V()))
    } else {
        let f = a.thin_svd().map_err(not_converged)?;
        let p = m.min(n);
        let s: Vec<f64> = (0..p).map(|k| f.S()[k].re).collect();
        (f.U().to_owned(), s, f.V().to_owned())
    };
    normalize_phases(&mut u, &mut v);
    Ok(SvdFactorization { u, s, v })
}

fn normalize_phases(u: &mut CMatrix, v: &mut CMatrix) {
    for k in 0..u.ncols() {
        let mut best = 0;
        let mut best_abs = -1.0;
        for i in 0..u.nrows() {
            let a = u[(i, k)].norm();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if best_abs <= 0.0 {
            continue;
        }
        let rot = (u[(best, k)] / best_abs).conj();
        if rot == Complex64::new(1.0, 0.0) {
            continue;
        }
        for i in 0..u.nrows() {
            u[(i, k)] *= rot;
        }
        u[(best, k)] = Complex64::new(best_abs, 0.0);
        for i in 0..v.nrows() {
            v[(i, k)] *= rot;
        }
    }
}

/// `U[:, :r]·diag(s[:r])·V[:, :r]ᴴ`.
pub fn truncate(f: &SvdFactorization, r: usize) -> Result<CMatrix> {
    if r > f.len() {
        return Err(Error::Rank {
            rank: r,
            available: f.len(),
        });
    }
    Ok(reconstruct(f, r, &f.s[..r]))
}

/// Like [`truncate`] but with replacement singular values for the retained
/// triplets; the singular vectors are used unchanged.
pub fn truncate_cleaned(f: &SvdFactorization, r: usize, cleaned_s: &[f64]) -> Result<CMatrix> {
    if r > f.len() {
        return Err(Error::Rank {
            rank: r,
            available: f.len(),
        });
    }
    if cleaned_s.len() != r {
        return Err(Error::InvalidParameter(format!(
            "{} cleaned singular values for rank {r}",
            cleaned_s.len()
        )));
    }
    if cleaned_s.iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::InvalidParameter("cleaned singular values must be nonnegative".into()));
    }
    Ok(reconstruct(f, r, cleaned_s))
}

fn reconstruct(f: &SvdFactorization, r: usize, weights: &[f64]) -> CMatrix {
    let (m, n) = (f.rows(), f.cols());
    if r == 0 {
        return CMatrix::zeros(m, n);
    }
    let us = CMatrix::from_fn(m, r, |i, k| f.u[(i, k)] * weights[k]);
    us.as_ref() * f.v.as_ref().subcols(0, r).adjoint()
}

/// Hankel window length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    /// `L = ⌊n/2⌋ + 1`, the near-square embedding.
    #[default]
    Auto,
    Length(usize),
}

impl Window {
    pub fn resolve(self, n: usize) -> Result<usize> {
        let l = match self {
            Window::Auto => n / 2 + 1,
            Window::Length(l) => l,
        };
        if n < 2 || l == 0 || l > n {
            return Err(Error::Window { window: l, len: n });
        }
        Ok(l)
    }
}

/// `L × K` matrix with `matrix[a][b] = series[a + b]`.
#[derive(Debug, Clone)]
pub struct HankelMatrix {
    pub matrix: CMatrix,
    pub series_len: usize,
    pub window: usize,
}

pub fn hankelize(series: &[Complex64], window: Window) -> Result<HankelMatrix> {
    let n = series.len();
    let l = window.resolve(n)?;
    let k = n - l + 1;
    Ok(HankelMatrix {
        matrix: CMatrix::from_fn(l, k, |a, b| series[a + b]),
        series_len: n,
        window: l,
    })
}

/// Averages each anti-diagonal of an `L × K` matrix into a series of length
/// `L + K − 1`.
pub fn dehankelize_ssa(m: MatRef<'_, Complex64>) -> Vec<Complex64> {
    let (l, k) = (m.nrows(), m.ncols());
    if l == 0 || k == 0 {
        return Vec::new();
    }
    let n = l + k - 1;
    // Mean taken as an offset from the first element of each anti-diagonal so
    // that constant anti-diagonals come back bit-exact.
    let first = |t: usize| {
        let a = t.saturating_sub(k - 1);
        m[(a, t - a)]
    };
    let mut out = vec![Complex64::default(); n];
    for b in 0..k {
        for a in 0..l {
            out[a + b] += m[(a, b)] - first(a + b);
        }
    }
    for (t, z) in out.iter_mut().enumerate() {
        *z = first(t) + *z / anti_diagonal_len(t, l, k) as f64;
    }
    out
}

fn anti_diagonal_len(t: usize, l: usize, k: usize) -> usize {
    let n = l + k - 1;
    (t + 1).min(l).min(k).min(n - t)
}

/// SSA of `U_r·diag(w)·V_rᴴ` without forming the matrix: each triplet's
/// anti-diagonal sums are the linear convolution of `u_k` with `conj(v_k)`.
fn ssa_reconstruct(f: &SvdFactorization, weights: &[f64]) -> Vec<Complex64> {
    let (l, k) = (f.rows(), f.cols());
    let n = l + k - 1;
    let r = weights.len();
    if r == 0 {
        return vec![Complex64::default(); n];
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut acc = vec![Complex64::default(); n];
    let mut a = vec![Complex64::default(); n];
    let mut b = vec![Complex64::default(); n];
    for (j, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        a.iter_mut().for_each(|z| *z = Complex64::default());
        b.iter_mut().for_each(|z| *z = Complex64::default());
        for (i, z) in a.iter_mut().take(l).enumerate() {
            *z = f.u[(i, j)];
        }
        for (i, z) in b.iter_mut().take(k).enumerate() {
            *z = f.v[(i, j)].conj();
        }
        fwd.process(&mut a);
        fwd.process(&mut b);
        for t in 0..n {
            acc[t] += a[t] * b[t] * w;
        }
    }
    inv.process(&mut acc);
    let scale = 1.0 / n as f64;
    acc.iter()
        .enumerate()
        .map(|(t, z)| z * (scale / anti_diagonal_len(t, l, k) as f64))
        .collect()
}

/// Hankel embedding → SVD → rank selection → truncation → anti-diagonal
/// averaging, for one series.
pub fn hankel_tsvd_series(
    series: &[Complex64],
    window: Window,
    selector: &SelectionStrategy,
) -> Result<(Vec<Complex64>, SvdRecord)> {
    if series.len() < 4 {
        return Err(Error::Length(format!(
            "Hankel filtering needs at least 4 samples, got {}",
            series.len()
        )));
    }
    let started = Instant::now();
    let h = hankelize(series, window)?;
    let shape = (h.matrix.nrows(), h.matrix.ncols());
    let f = svd(h.matrix.as_ref())?;
    drop(h);
    let sel = select(&f.s, shape, selector)?;
    let mut out = ssa_reconstruct(&f, &sel.values);
    if series.iter().all(|z| z.im == 0.0) {
        out.iter_mut().for_each(|z| z.im = 0.0);
    }
    let record = SvdRecord {
        label: String::new(),
        rows: shape.0,
        cols: shape.1,
        singular_values: f.s,
        rank: sel.rank,
        e15: sel.e15,
        seconds: started.elapsed().as_secs_f64(),
    };
    Ok((out, record))
}
