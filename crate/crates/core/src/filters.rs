//! Classic, PRF and Hankel TSVD filters and the PRANK pipelines that chain
//! them.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use faer::Mat;
use rayon::prelude::*;

use crate::dataset::{flatten, to_frequency, to_time, unflatten, Domain, FlatDataset, ResponseDataset};
use crate::error::{Error, Result};
use crate::report::{FilterReport, StageReport, SvdRecord};
use crate::selection::{select, SelectionStrategy};
use crate::tsvd::{hankel_tsvd_series, svd, truncate_cleaned, Window};
use crate::{CMatrix, Complex64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    ClassicOnly,
    PrfOnly,
    HankelOnly,
    PrankPH,
    PrankHP,
    #[default]
    PrankHiP,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::ClassicOnly,
        Variant::PrfOnly,
        Variant::HankelOnly,
        Variant::PrankPH,
        Variant::PrankHP,
        Variant::PrankHiP,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::ClassicOnly => "classic",
            Variant::PrfOnly => "prf",
            Variant::HankelOnly => "hankel",
            Variant::PrankPH => "ph",
            Variant::PrankHP => "hp",
            Variant::PrankHiP => "hip",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown variant '{s}' (classic, prf, hankel, ph, hp, hip)")))
    }
}

/// Pipeline settings. The default is the mixed PRF/Hankel pipeline run on
/// impulse responses with e15 selection at both stages.
#[derive(Debug, Clone, PartialEq)]
pub struct PrankConfig {
    pub variant: Variant,
    /// Domain the filters operate in; data is converted there and back.
    pub domain: Domain,
    /// Used by the PRF stage, and by the classic filter.
    pub prf_selector: SelectionStrategy,
    pub hankel_selector: SelectionStrategy,
    pub hankel_window: Window,
    /// Run independent Hankel problems on the rayon pool. Results are
    /// identical either way.
    pub parallel: bool,
}

impl Default for PrankConfig {
    fn default() -> Self {
        PrankConfig {
            variant: Variant::default(),
            domain: Domain::Time,
            prf_selector: SelectionStrategy::default(),
            hankel_selector: SelectionStrategy::default(),
            hankel_window: Window::Auto,
            parallel: true,
        }
    }
}

impl PrankConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_selectors(mut self, prf: SelectionStrategy, hankel: SelectionStrategy) -> Self {
        self.prf_selector = prf;
        self.hankel_selector = hankel;
        self
    }

    pub fn sequential(mut self) -> Self {
        self.parallel = false;
        self
    }
}

/// Moves `ds` into `domain`, returning the working copy.
fn enter(ds: &ResponseDataset, domain: Domain) -> Result<ResponseDataset> {
    match (ds.domain(), domain) {
        (a, b) if a == b => Ok(ds.clone()),
        (Domain::Frequency, Domain::Time) => to_time(ds),
        _ => to_frequency(ds),
    }
}

/// Converts a filtered working copy back to the layout and axis of `original`.
///
/// A real time series cannot carry imaginary parts at the DC and Nyquist bins,
/// so those two values are passed through from `original` unfiltered.
fn leave(filtered: ResponseDataset, original: &ResponseDataset) -> Result<ResponseDataset> {
    let back = match (filtered.domain(), original.domain()) {
        (a, b) if a == b => return Ok(filtered.with_axis(original.axis().clone())),
        (Domain::Time, Domain::Frequency) => to_frequency(&filtered)?,
        _ => to_time(&filtered)?,
    };
    if back.shape() != original.shape() {
        return Err(Error::DimensionMismatch(format!(
            "domain round trip changed the shape from {:?} to {:?}",
            original.shape(),
            back.shape()
        )));
    }
    if back.domain() == Domain::Time {
        return Ok(back.with_axis(original.axis().clone()));
    }
    let n_k = back.n_k();
    let mut data = back.into_data();
    for (out, orig) in data.chunks_mut(n_k).zip(original.data().chunks(n_k)) {
        out[0].im = orig[0].im;
        out[n_k - 1].im = orig[n_k - 1].im;
    }
    original.with_data(data)
}

/// Rebuilds a dataset in `working`'s layout from filtered values, dropping the
/// rounding-level imaginary parts a time-domain dataset may not carry.
fn rebuild(working: &ResponseDataset, mut data: Vec<Complex64>) -> Result<ResponseDataset> {
    if working.domain() == Domain::Time {
        data.iter_mut().for_each(|z| z.im = 0.0);
    }
    working.with_data(data)
}

fn from_flat(working: &ResponseDataset, matrix: CMatrix) -> Result<ResponseDataset> {
    let flat = FlatDataset {
        matrix,
        axis: working.axis().clone(),
    };
    let ds = unflatten(&flat, working.n_o(), working.n_i())?;
    rebuild(working, ds.into_data())
}

fn report(variant: &str, domain: Domain, stages: Vec<StageReport>, started: Instant) -> FilterReport {
    FilterReport {
        variant: variant.to_string(),
        domain: domain.name().to_string(),
        stages,
        total_seconds: started.elapsed().as_secs_f64(),
        flags: Vec::new(),
    }
}

/// Truncated SVD of every `n_o × n_i` frequency slice, independently.
pub fn classic_tsvd(ds: &ResponseDataset, selector: &SelectionStrategy) -> Result<(ResponseDataset, FilterReport)> {
    if ds.domain() != Domain::Frequency {
        return Err(Error::Domain("the classic filter works on frequency lines".into()));
    }
    let (n_o, n_i, n_k) = ds.shape();
    if n_o == 1 && n_i == 1 {
        return Err(Error::Shape("the classic filter needs more than one output or input".into()));
    }
    let started = Instant::now();
    let mut stage = StageReport::new("classic");
    let mut data = vec![Complex64::default(); n_o * n_i * n_k];
    for k in 0..n_k {
        let t = Instant::now();
        let slice = Mat::from_fn(n_o, n_i, |o, i| ds.get(o, i, k));
        let f = svd(slice.as_ref())?;
        let sel = select(&f.s, (n_o, n_i), selector)?;
        let low = truncate_cleaned(&f, sel.rank, &sel.values)?;
        for o in 0..n_o {
            for i in 0..n_i {
                data[(o * n_i + i) * n_k + k] = low[(o, i)];
            }
        }
        stage.records.push(SvdRecord {
            label: format!("bin{k}"),
            rows: n_o,
            cols: n_i,
            singular_values: f.s,
            rank: sel.rank,
            e15: sel.e15,
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    stage.seconds = started.elapsed().as_secs_f64();
    let out = ds.with_data(data)?;
    Ok((out, report("classic", Domain::Frequency, vec![stage], started)))
}

struct PrfStage {
    filtered: ResponseDataset,
    stage: StageReport,
    prfs: CMatrix,
    rank: usize,
}

fn check_mimo(ds: &ResponseDataset) -> Result<()> {
    if ds.n_o() * ds.n_i() < 2 {
        return Err(Error::Shape("PRF filtering needs at least two entries".into()));
    }
    Ok(())
}

/// PRF TSVD of a dataset already in the working domain.
fn prf_stage(working: &ResponseDataset, selector: &SelectionStrategy) -> Result<PrfStage> {
    check_mimo(working)?;
    let started = Instant::now();
    let flat = flatten(working);
    let shape = (flat.matrix.nrows(), flat.matrix.ncols());
    let f = svd(flat.matrix.as_ref())?;
    drop(flat);
    let sel = select(&f.s, shape, selector)?;
    let r = sel.rank;
    let prfs = CMatrix::from_fn(shape.0, r, |k, j| f.u[(k, j)] * sel.values[j]);
    let low = truncate_cleaned(&f, r, &sel.values)?;
    let filtered = from_flat(working, low)?;
    let mut stage = StageReport::new("prf");
    stage.records.push(SvdRecord {
        label: "flattened".into(),
        rows: shape.0,
        cols: shape.1,
        singular_values: f.s,
        rank: r,
        e15: sel.e15,
        seconds: started.elapsed().as_secs_f64(),
    });
    stage.seconds = started.elapsed().as_secs_f64();
    Ok(PrfStage {
        filtered,
        stage,
        prfs,
        rank: r,
    })
}

fn zero_rank_flag(stage: &str) -> String {
    format!("{stage} stage selected rank 0 (all noise); output is zero")
}

/// Flattened-dataset TSVD. Also returns the retained principal response
/// functions `U_r·Σ_r` (`n_k × r`, in the working domain).
pub fn prf_tsvd(
    ds: &ResponseDataset,
    selector: &SelectionStrategy,
    domain: Domain,
) -> Result<(ResponseDataset, FilterReport, CMatrix)> {
    let started = Instant::now();
    let working = enter(ds, domain)?;
    let st = prf_stage(&working, selector)?;
    let out = leave(st.filtered, ds)?;
    let mut rep = report("prf", domain, vec![st.stage], started);
    if st.rank == 0 {
        rep.flags.push(zero_rank_flag("PRF"));
    }
    Ok((out, rep, st.prfs))
}

fn map_maybe_parallel<T, R>(items: Vec<T>, parallel: bool, f: impl Fn(T) -> Result<R> + Sync + Send) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
{
    if parallel {
        items.into_par_iter().map(f).collect()
    } else {
        items.into_iter().map(f).collect()
    }
}

/// Hankel TSVD of every entry of a dataset already in the working domain.
fn hankel_stage(
    working: &ResponseDataset,
    selector: &SelectionStrategy,
    window: Window,
    parallel: bool,
) -> Result<(ResponseDataset, StageReport)> {
    let started = Instant::now();
    let (n_o, n_i, _) = working.shape();
    let entries: Vec<(usize, usize)> = (0..n_o).flat_map(|o| (0..n_i).map(move |i| (o, i))).collect();
    let results = map_maybe_parallel(entries, parallel, |(o, i)| {
        let (series, mut rec) = hankel_tsvd_series(working.series(o, i), window, selector)?;
        rec.label = format!("Y{},{}", o + 1, i + 1);
        Ok((series, rec))
    })?;
    let mut stage = StageReport::new("hankel");
    let mut data = Vec::with_capacity(working.data().len());
    for (series, rec) in results {
        data.extend(series);
        stage.records.push(rec);
    }
    stage.seconds = started.elapsed().as_secs_f64();
    Ok((rebuild(working, data)?, stage))
}

/// Hankel/SSA filtering of each entry on its own.
pub fn hankel_filter_dataset(
    ds: &ResponseDataset,
    selector: &SelectionStrategy,
    window: Window,
    domain: Domain,
) -> Result<(ResponseDataset, FilterReport)> {
    hankel_only(ds, selector, window, domain, true)
}

fn hankel_only(
    ds: &ResponseDataset,
    selector: &SelectionStrategy,
    window: Window,
    domain: Domain,
    parallel: bool,
) -> Result<(ResponseDataset, FilterReport)> {
    let started = Instant::now();
    let working = enter(ds, domain)?;
    let (filtered, stage) = hankel_stage(&working, selector, window, parallel)?;
    let out = leave(filtered, ds)?;
    Ok((out, report("hankel", domain, vec![stage], started)))
}

/// PRF TSVD followed by Hankel TSVD of every entry.
pub fn prank_ph(ds: &ResponseDataset, cfg: &PrankConfig) -> Result<(ResponseDataset, FilterReport)> {
    let started = Instant::now();
    let working = enter(ds, cfg.domain)?;
    let prf = prf_stage(&working, &cfg.prf_selector)?;
    let (filtered, hankel) = hankel_stage(&prf.filtered, &cfg.hankel_selector, cfg.hankel_window, cfg.parallel)?;
    let out = leave(filtered, ds)?;
    let mut rep = report("ph", cfg.domain, vec![prf.stage, hankel], started);
    if prf.rank == 0 {
        rep.flags.push(zero_rank_flag("PRF"));
    }
    Ok((out, rep))
}

/// Hankel TSVD of every entry followed by PRF TSVD.
pub fn prank_hp(ds: &ResponseDataset, cfg: &PrankConfig) -> Result<(ResponseDataset, FilterReport)> {
    let started = Instant::now();
    let working = enter(ds, cfg.domain)?;
    check_mimo(&working)?;
    let (hankeled, hankel) = hankel_stage(&working, &cfg.hankel_selector, cfg.hankel_window, cfg.parallel)?;
    let prf = prf_stage(&hankeled, &cfg.prf_selector)?;
    let out = leave(prf.filtered, ds)?;
    let mut rep = report("hp", cfg.domain, vec![hankel, prf.stage], started);
    if prf.rank == 0 {
        rep.flags.push(zero_rank_flag("PRF"));
    }
    Ok((out, rep))
}

/// Mixed pipeline: one SVD of the flattened dataset, Hankel filtering of the
/// `r` retained left singular vectors only, then `U_clean·Σ_r·V_rᴴ`.
pub fn prank_hip(ds: &ResponseDataset, cfg: &PrankConfig) -> Result<(ResponseDataset, FilterReport)> {
    let started = Instant::now();
    let working = enter(ds, cfg.domain)?;
    check_mimo(&working)?;

    let t = Instant::now();
    let flat = flatten(&working);
    let shape = (flat.matrix.nrows(), flat.matrix.ncols());
    let f = svd(flat.matrix.as_ref())?;
    drop(flat);
    let sel = select(&f.s, shape, &cfg.prf_selector)?;
    let r = sel.rank;
    let mut prf = StageReport::new("prf");
    prf.records.push(SvdRecord {
        label: "flattened".into(),
        rows: shape.0,
        cols: shape.1,
        singular_values: f.s.clone(),
        rank: r,
        e15: sel.e15,
        seconds: t.elapsed().as_secs_f64(),
    });
    prf.seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let columns: Vec<usize> = (0..r).collect();
    let cleaned = map_maybe_parallel(columns, cfg.parallel, |j| {
        let u: Vec<Complex64> = (0..shape.0).map(|k| f.u[(k, j)]).collect();
        let (series, mut rec) = hankel_tsvd_series(&u, cfg.hankel_window, &cfg.hankel_selector)?;
        rec.label = format!("prf{}", j + 1);
        Ok((series, rec))
    })?;
    let mut hankel = StageReport::new("hankel");
    let mut u_clean = CMatrix::zeros(shape.0, r);
    for (j, (series, rec)) in cleaned.into_iter().enumerate() {
        for (k, z) in series.into_iter().enumerate() {
            u_clean[(k, j)] = z * sel.values[j];
        }
        hankel.records.push(rec);
    }
    hankel.seconds = t.elapsed().as_secs_f64();

    let low = u_clean.as_ref() * f.v.as_ref().subcols(0, r).adjoint();
    let out = leave(from_flat(&working, low)?, ds)?;
    let mut rep = report("hip", cfg.domain, vec![prf, hankel], started);
    if r == 0 {
        rep.flags.push(zero_rank_flag("PRF"));
    }
    Ok((out, rep))
}

/// Runs the variant selected in `cfg`.
pub fn run(ds: &ResponseDataset, cfg: &PrankConfig) -> Result<(ResponseDataset, FilterReport)> {
    cfg.prf_selector.validate()?;
    cfg.hankel_selector.validate()?;
    match cfg.variant {
        Variant::ClassicOnly => classic_tsvd(ds, &cfg.prf_selector),
        Variant::PrfOnly => prf_tsvd(ds, &cfg.prf_selector, cfg.domain).map(|(d, r, _)| (d, r)),
        Variant::HankelOnly => hankel_only(ds, &cfg.hankel_selector, cfg.hankel_window, cfg.domain, cfg.parallel),
        Variant::PrankPH => prank_ph(ds, cfg),
        Variant::PrankHP => prank_hp(ds, cfg),
        Variant::PrankHiP => prank_hip(ds, cfg),
    }
}
