//! Synthetic reference data: lumped mass-spring-damper chains, their FRFs by
//! direct inversion or mode superposition, and measurement corruption.

use faer::{Mat, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{Axis, Domain, ResponseDataset};
use crate::error::{Error, Result};
use crate::tsvd::svd;
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// First spring and damper connect DoF 1 to ground.
    FixedFree,
    FreeFree,
}

/// Chain of `n` masses joined by parallel spring/damper links.
///
/// Link `j` of a fixed-free chain joins DoF `j − 1` (ground for `j = 0`) to
/// DoF `j`, so there are `n` links. A free-free chain has `n − 1` links, link
/// `j` joining DoF `j` and `j + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSystem {
    m: Vec<f64>,
    d: Vec<f64>,
    k: Vec<f64>,
    boundary: Boundary,
}

impl ChainSystem {
    pub fn new(m: Vec<f64>, d: Vec<f64>, k: Vec<f64>, boundary: Boundary) -> Result<Self> {
        let n = m.len();
        if n == 0 {
            return Err(Error::InvalidParameter("chain needs at least one mass".into()));
        }
        let links = match boundary {
            Boundary::FixedFree => n,
            Boundary::FreeFree => n - 1,
        };
        if k.len() != links || d.len() != links {
            return Err(Error::InvalidParameter(format!(
                "{n} masses need {links} springs and dampers, got {} and {}",
                k.len(),
                d.len()
            )));
        }
        if m.iter().any(|&x| !(x > 0.0)) || k.iter().any(|&x| !(x > 0.0)) || d.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidParameter("need m > 0, k > 0, d >= 0".into()));
        }
        Ok(ChainSystem { m, d, k, boundary })
    }

    /// Identical masses and links.
    pub fn uniform(n: usize, m: f64, d: f64, k: f64, boundary: Boundary) -> Self {
        let links = match boundary {
            Boundary::FixedFree => n,
            Boundary::FreeFree => n.saturating_sub(1),
        };
        ChainSystem {
            m: vec![m; n],
            d: vec![d; links],
            k: vec![k; links],
            boundary,
        }
    }

    pub fn dofs(&self) -> usize {
        self.m.len()
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    fn link_ends(&self, j: usize) -> (Option<usize>, usize) {
        match self.boundary {
            Boundary::FixedFree => (j.checked_sub(1), j),
            Boundary::FreeFree => (Some(j), j + 1),
        }
    }

    fn assemble(&self, coef: &[f64]) -> Mat<f64> {
        let n = self.dofs();
        let mut a = Mat::zeros(n, n);
        for (j, &c) in coef.iter().enumerate() {
            let (left, right) = self.link_ends(j);
            a[(right, right)] += c;
            if let Some(l) = left {
                a[(l, l)] += c;
                a[(l, right)] -= c;
                a[(right, l)] -= c;
            }
        }
        a
    }

    pub fn mass_matrix(&self) -> Mat<f64> {
        let n = self.dofs();
        Mat::from_fn(n, n, |i, j| if i == j { self.m[i] } else { 0.0 })
    }

    pub fn stiffness_matrix(&self) -> Mat<f64> {
        self.assemble(&self.k)
    }

    pub fn damping_matrix(&self) -> Mat<f64> {
        self.assemble(&self.d)
    }
}

/// Uniform angular-frequency grid `ω_k = k·step`, `k = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    pub step: f64,
    pub n: usize,
}

impl FrequencyGrid {
    pub fn new(step: f64, n: usize) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) || n < 2 {
            return Err(Error::Axis(format!("need step > 0 and at least 2 bins, got step={step} n={n}")));
        }
        Ok(FrequencyGrid { step, n })
    }

    /// `n` bins from 0 to `max` inclusive.
    pub fn linspace(max: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Axis(format!("need at least 2 bins, got {n}")));
        }
        FrequencyGrid::new(max / (n - 1) as f64, n)
    }

    pub fn omega(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn axis(&self) -> Axis {
        Axis::new(Domain::Frequency, 0.0, self.step, "rad/s")
    }
}

fn check_indices(what: &str, idx: &[usize], n: usize) -> Result<()> {
    if idx.is_empty() {
        return Err(Error::Index(format!("no {what} selected")));
    }
    match idx.iter().find(|&&x| x >= n) {
        Some(bad) => Err(Error::Index(format!("{what} index {bad} out of range for {n} DoFs"))),
        None => Ok(()),
    }
}

/// Receptance dataset plus the bins that needed a pseudoinverse.
#[derive(Debug, Clone)]
pub struct DirectSynthesis {
    pub dataset: ResponseDataset,
    pub pinv_bins: Vec<usize>,
}

/// Receptance `(K − ω²M + iωD)⁻¹` per bin, restricted to the requested DoFs.
pub fn synthesize_direct(
    sys: &ChainSystem,
    grid: &FrequencyGrid,
    outputs: &[usize],
    inputs: &[usize],
) -> Result<DirectSynthesis> {
    let n = sys.dofs();
    check_indices("output", outputs, n)?;
    check_indices("input", inputs, n)?;
    let (mm, kk, dd) = (sys.mass_matrix(), sys.stiffness_matrix(), sys.damping_matrix());
    let (n_o, n_i) = (outputs.len(), inputs.len());
    let mut data = vec![Complex64::new(0.0, 0.0); n_o * n_i * grid.n];
    let mut pinv_bins = Vec::new();
    for q in 0..grid.n {
        let w = grid.omega(q);
        let z = Mat::from_fn(n, n, |r, c| {
            Complex64::new(kk[(r, c)] - w * w * mm[(r, c)], w * dd[(r, c)])
        });
        let f = svd(z.as_ref())?;
        let floor = 1e-12 * f.s[0];
        if f.s[n - 1] <= floor {
            pinv_bins.push(q);
        }
        // Z⁻¹ = V·Σ⁻¹·Uᴴ, dropping singular values under the floor
        for (a, &o) in outputs.iter().enumerate() {
            for (b, &i) in inputs.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    if f.s[j] > floor {
                        acc += f.v[(o, j)] * f.u[(i, j)].conj() / f.s[j];
                    }
                }
                data[(a * n_i + b) * grid.n + q] = acc;
            }
        }
    }
    let dataset = ResponseDataset::new(n_o, n_i, grid.n, data, grid.axis())?;
    Ok(DirectSynthesis { dataset, pinv_bins })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Receptance,
    Accelerance,
}

/// Eigenfrequencies (rad/s), mass-normalized shapes (one column per mode) and
/// modal damping ratios.
#[derive(Debug, Clone)]
pub struct ModalModel {
    pub omega: Vec<f64>,
    pub shapes: Mat<f64>,
    pub damping: Vec<f64>,
    pub quantity: Quantity,
}

impl ModalModel {
    pub fn modes(&self) -> usize {
        self.omega.len()
    }

    /// Keeps the first `count` modes.
    pub fn truncated(&self, count: usize) -> Self {
        let c = count.min(self.modes());
        ModalModel {
            omega: self.omega[..c].to_vec(),
            shapes: self.shapes.subcols(0, c).to_owned(),
            damping: self.damping[..c].to_vec(),
            quantity: self.quantity,
        }
    }

    pub fn with_damping(mut self, ratio: f64) -> Self {
        self.damping = vec![ratio; self.modes()];
        self
    }

    pub fn with_quantity(mut self, quantity: Quantity) -> Self {
        self.quantity = quantity;
        self
    }
}

/// Undamped modes of the chain, sorted by frequency.
///
/// Damping ratios are the diagonal of `ΦᵀDΦ / 2ω` (0 for rigid-body modes).
pub fn eigen(sys: &ChainSystem) -> Result<ModalModel> {
    let n = sys.dofs();
    let kk = sys.stiffness_matrix();
    let dd = sys.damping_matrix();
    let inv_sqrt_m: Vec<f64> = sys.m.iter().map(|m| 1.0 / m.sqrt()).collect();
    let a = Mat::from_fn(n, n, |r, c| inv_sqrt_m[r] * kk[(r, c)] * inv_sqrt_m[c]);
    let eig = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::Convergence { rows: n, cols: n })?;
    let lambda = eig.S().column_vector();
    let q = eig.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| lambda[x].total_cmp(&lambda[y]));
    let scale = kk.norm_max();
    let mut omega = Vec::with_capacity(n);
    let mut shapes = Mat::zeros(n, n);
    for (col, &j) in order.iter().enumerate() {
        let l = lambda[j];
        omega.push(if l <= 1e-12 * scale { 0.0 } else { l.sqrt() });
        let pivot = (0..n)
            .max_by(|&x, &y| q[(x, j)].abs().total_cmp(&q[(y, j)].abs()))
            .unwrap_or(0);
        let sign = if q[(pivot, j)] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            shapes[(r, col)] = sign * inv_sqrt_m[r] * q[(r, j)];
        }
    }
    let damping = (0..n)
        .map(|j| {
            if omega[j] == 0.0 {
                return 0.0;
            }
            let mut c = 0.0;
            for r in 0..n {
                for s in 0..n {
                    c += shapes[(r, j)] * dd[(r, s)] * shapes[(s, j)];
                }
            }
            c / (2.0 * omega[j])
        })
        .collect();
    Ok(ModalModel {
        omega,
        shapes,
        damping,
        quantity: Quantity::Receptance,
    })
}

/// `Σ_j φ_oj·φ_ij / (ω_j² − ω² + 2iε_j·ω_j·ω)`, times `−ω²` for accelerance.
///
/// A rigid-body mode has no finite receptance at `ω = 0`; its term is left out
/// of that bin. For accelerance its term is the limit `φ_oj·φ_ij`.
pub fn modal_frf(
    model: &ModalModel,
    grid: &FrequencyGrid,
    outputs: &[usize],
    inputs: &[usize],
) -> Result<ResponseDataset> {
    let n = model.shapes.nrows();
    check_indices("output", outputs, n)?;
    check_indices("input", inputs, n)?;
    let accel = model.quantity == Quantity::Accelerance;
    ResponseDataset::from_fn(outputs.len(), inputs.len(), grid.n, grid.axis(), |a, b, q| {
        let (o, i) = (outputs[a], inputs[b]);
        let w = grid.omega(q);
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..model.modes() {
            let num = model.shapes[(o, j)] * model.shapes[(i, j)];
            let wj = model.omega[j];
            if wj == 0.0 && accel {
                acc += num;
                continue;
            }
            let den = Complex64::new(wj * wj - w * w, 2.0 * model.damping[j] * wj * w);
            if den.norm_sqr() == 0.0 {
                continue;
            }
            let term = num / den;
            acc += if accel { term * (-w * w) } else { term };
        }
        acc
    })
}

/// Per-entry standard deviations `σ_re = a·|Y| + b`, `σ_im = c·|Y| + d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub seed: u64,
}

impl NoiseModel {
    /// Coefficients used for the 4-DoF analytical benchmark.
    pub fn analytical(seed: u64) -> Self {
        NoiseModel {
            a: 0.003,
            b: 0.06,
            c: 0.003,
            d: 0.05,
            seed,
        }
    }

    /// Coefficients used for the mode-superposition benchmark.
    pub fn numerical(seed: u64) -> Self {
        NoiseModel {
            a: 1e-3,
            b: 4e-1,
            c: 2e-3,
            d: 1e-2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.a, self.b, self.c, self.d].iter().all(|&x| x >= 0.0 && x.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("noise coefficients must be finite and >= 0".into()))
        }
    }
}

/// Adds independent Gaussian noise to the real and imaginary part of every
/// sample. Reproducible for a given seed.
pub fn add_noise(ds: &ResponseDataset, nm: &NoiseModel) -> Result<ResponseDataset> {
    if ds.domain() != Domain::Frequency {
        return Err(Error::Domain("noise is added to frequency-domain data".into()));
    }
    nm.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(nm.seed);
    let data = ds
        .data()
        .iter()
        .map(|&y| {
            let mag = y.norm();
            let zr: f64 = StandardNormal.sample(&mut rng);
            let zi: f64 = StandardNormal.sample(&mut rng);
            let (sr, si) = (nm.a * mag + nm.b, nm.c * mag + nm.d);
            let mut out = y;
            if sr > 0.0 {
                out.re += sr * zr;
            }
            if si > 0.0 {
                out.im += si * zi;
            }
            out
        })
        .collect();
    ds.with_data(data)
}

/// Real outliers added to whole FRFs. Each entry names an output and either a
/// single value for all inputs or one value per input.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OffsetSpec {
    pub entries: Vec<(usize, Vec<f64>)>,
}

impl OffsetSpec {
    /// Offsets 0.22, 0.16, 0.18, 0.16 on output 2 (index 1), inputs 1 to 4.
    pub fn analytical() -> Self {
        OffsetSpec {
            entries: vec![(1, vec![0.22, 0.16, 0.18, 0.16])],
        }
    }
}

pub fn add_offsets(ds: &ResponseDataset, spec: &OffsetSpec) -> Result<ResponseDataset> {
    if ds.domain() != Domain::Frequency {
        return Err(Error::Domain("offsets are added to frequency-domain data".into()));
    }
    let (n_o, n_i, n_k) = ds.shape();
    let mut data = ds.data().to_vec();
    for (o, values) in &spec.entries {
        if *o >= n_o {
            return Err(Error::Index(format!("offset output {o} out of range for {n_o} outputs")));
        }
        if values.len() != 1 && values.len() != n_i {
            return Err(Error::InvalidParameter(format!(
                "output {o}: expected 1 or {n_i} offset values, got {}",
                values.len()
            )));
        }
        for i in 0..n_i {
            let v = if values.len() == 1 { values[0] } else { values[i] };
            let start = (o * n_i + i) * n_k;
            data[start..start + n_k].iter_mut().for_each(|z| z.re += v);
        }
    }
    ds.with_data(data)
}
