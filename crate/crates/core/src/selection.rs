//! Truncation rank selection: fixed, threshold based, and the automated e15
//! procedure built on a Marchenko-Pastur fit of the singular value tail.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Whether a threshold applies to each singular value or to the tail sum
/// `Σ_{k ≥ r} s_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    PerValue,
    Cumulative,
}

/// How a truncation rank is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectionStrategy {
    /// Keep `r` triplets (clamped to the number available).
    FixedRank(usize),
    /// Compare against a known error norm `epsilon`.
    AbsoluteThreshold { epsilon: f64, mode: ThresholdMode },
    /// Compare against `fraction` of the largest (or total) singular value.
    RelativeThreshold { fraction: f64, mode: ThresholdMode },
    /// Automated noise-floor selection with tolerance `mu`; `tail` is the
    /// fraction of trailing singular values used for the noise fit.
    E15 { mu: f64, tail: f64 },
}

pub const DEFAULT_MU: f64 = 0.10;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.5;

impl Default for SelectionStrategy {
    fn default() -> Self {
        SelectionStrategy::e15(DEFAULT_MU)
    }
}

impl SelectionStrategy {
    pub fn e15(mu: f64) -> Self {
        SelectionStrategy::E15 {
            mu,
            tail: DEFAULT_TAIL_FRACTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SelectionStrategy::FixedRank(_) => Ok(()),
            SelectionStrategy::AbsoluteThreshold { epsilon, .. } => {
                if epsilon >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("threshold {epsilon} must be >= 0")))
                }
            }
            SelectionStrategy::RelativeThreshold { fraction, .. } => {
                if fraction > 0.0 && fraction < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("relative threshold {fraction} not in (0, 1)")))
                }
            }
            SelectionStrategy::E15 { mu, tail } => {
                if !(mu > 0.0 && mu < 1.0) {
                    Err(Error::InvalidParameter(format!("e15 tolerance {mu} not in (0, 1)")))
                } else if !(tail > 0.0 && tail <= 1.0) {
                    Err(Error::InvalidParameter(format!("tail fraction {tail} not in (0, 1]")))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            SelectionStrategy::FixedRank(r) => format!("fixed rank {r}"),
            SelectionStrategy::AbsoluteThreshold { epsilon, mode } => {
                format!("absolute threshold {epsilon} ({mode:?})")
            }
            SelectionStrategy::RelativeThreshold { fraction, mode } => {
                format!("relative threshold {fraction} ({mode:?})")
            }
            SelectionStrategy::E15 { mu, tail } => format!("e15 mu={mu} tail={tail}"),
        }
    }
}

/// Fitted noise model and cleaned singular values of one e15 run.
#[derive(Debug, Clone, PartialEq)]
pub struct E15Model {
    pub sigma_n: f64,
    pub corr: f64,
    /// Predicted noise singular values, same length as the input spectrum.
    pub mp_curve: Vec<f64>,
    /// `1 − mp/s` clamped to `[0, 1]`; 1 is clean, 0 is at or under the noise.
    pub cleanliness: Vec<f64>,
    pub rank: usize,
    /// `√(s² − mp²)` for the retained modes.
    pub cleaned_s: Vec<f64>,
}

/// Outcome of a selection: the rank and the singular values to reconstruct with.
#[derive(Debug, Clone)]
pub struct Selection {
    pub rank: usize,
    pub values: Vec<f64>,
    pub e15: Option<E15Model>,
}

fn check_spectrum(s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::Empty);
    }
    if s.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidParameter("singular values must be finite and nonnegative".into()));
    }
    if s.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidParameter("singular values must be nonincreasing".into()));
    }
    Ok(())
}

fn prefix_len(n: usize, keep: impl Fn(usize) -> bool) -> usize {
    (0..n).take_while(|&k| keep(k)).count()
}

/// Smallest `r` with `Σ_{k ≥ r} s_k ≤ bound`.
fn cumulative_rank(s: &[f64], bound: f64) -> usize {
    let mut tail = 0.0;
    let mut r = s.len();
    for k in (0..s.len()).rev() {
        tail += s[k];
        if tail > bound {
            break;
        }
        r = k;
    }
    r
}

pub fn select_rank(s: &[f64], shape: (usize, usize), strategy: &SelectionStrategy) -> Result<usize> {
    Ok(select(s, shape, strategy)?.rank)
}

/// Chooses the rank for spectrum `s` of an `m × n` matrix. The retained set is
/// always a prefix.
pub fn select(s: &[f64], shape: (usize, usize), strategy: &SelectionStrategy) -> Result<Selection> {
    check_spectrum(s)?;
    strategy.validate()?;
    let p = s.len();
    let rank = match *strategy {
        SelectionStrategy::FixedRank(r) => r.min(p),
        SelectionStrategy::AbsoluteThreshold { epsilon, mode } => match mode {
            ThresholdMode::PerValue => prefix_len(p, |k| s[k] > epsilon),
            ThresholdMode::Cumulative => cumulative_rank(s, epsilon),
        },
        SelectionStrategy::RelativeThreshold { fraction, mode } => match mode {
            ThresholdMode::PerValue => {
                if s[0] == 0.0 {
                    0
                } else {
                    prefix_len(p, |k| s[k] / s[0] > fraction)
                }
            }
            ThresholdMode::Cumulative => {
                let total: f64 = s.iter().rev().sum();
                if total == 0.0 {
                    0
                } else {
                    cumulative_rank(s, fraction * total)
                }
            }
        },
        SelectionStrategy::E15 { mu, tail } => {
            let model = e15_with_tail(s, shape, mu, tail)?;
            return Ok(Selection {
                rank: model.rank,
                values: model.cleaned_s.clone(),
                e15: Some(model),
            });
        }
    };
    Ok(Selection {
        rank,
        values: s[..rank].to_vec(),
        e15: None,
    })
}

const MP_PANELS: usize = 4096;

/// Marchenko-Pastur law with ratio `beta ∈ (0, 1]` and unit variance.
///
/// The CDF is integrated in the angle `θ` with `λ = λ₋ + 2c·sin²(θ/2)`,
/// `c = (λ₊ − λ₋)/2`, which turns the density into the bounded integrand
/// `c²·sin²θ / (2πβλ)`. For `beta` near 1 that integrand has a narrow
/// shoulder at `θ ≈ √(λ₋/c)`, so Simpson panels are uniform in `t = √(θ/π)`.
struct MpLaw {
    beta: f64,
    lo: f64,
    hi: f64,
    c: f64,
    /// CDF at `t = j / MP_PANELS`.
    nodes: Vec<f64>,
}

impl MpLaw {
    fn new(beta: f64) -> Self {
        let sb = beta.sqrt();
        let lo = (1.0 - sb) * (1.0 - sb);
        let hi = (1.0 + sb) * (1.0 + sb);
        let mut law = MpLaw {
            beta,
            lo,
            hi,
            c: 0.5 * (hi - lo),
            nodes: Vec::with_capacity(MP_PANELS + 1),
        };
        let h = 1.0 / MP_PANELS as f64;
        let mut acc = 0.0;
        law.nodes.push(0.0);
        for j in 0..MP_PANELS {
            let a = j as f64 * h;
            acc += law.simpson(a, a + h);
            law.nodes.push(acc);
        }
        law
    }

    fn t_of(&self, lambda: f64) -> f64 {
        let x = ((lambda - self.lo) / (2.0 * self.c)).clamp(0.0, 1.0);
        (2.0 * x.sqrt().asin() / PI).sqrt()
    }

    /// Density in `t`: `g(θ)·dθ/dt` with `θ = πt²`.
    fn integrand(&self, t: f64) -> f64 {
        let theta = PI * t * t;
        let g = if self.lo == 0.0 {
            // sin²θ / (2c·sin²(θ/2)) = (1 + cosθ)/c
            self.c * (1.0 + theta.cos()) / (2.0 * PI * self.beta)
        } else {
            let s = theta.sin();
            let h = (0.5 * theta).sin();
            let lambda = self.lo + 2.0 * self.c * h * h;
            self.c * self.c * s * s / (2.0 * PI * self.beta * lambda)
        };
        g * 2.0 * PI * t
    }

    fn simpson(&self, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (self.integrand(a) + 4.0 * self.integrand(0.5 * (a + b)) + self.integrand(b))
    }

    fn cdf(&self, lambda: f64) -> f64 {
        if lambda <= self.lo {
            return 0.0;
        }
        if lambda >= self.hi {
            return self.nodes[MP_PANELS];
        }
        let t = self.t_of(lambda);
        let j = ((t * MP_PANELS as f64) as usize).min(MP_PANELS - 1);
        self.nodes[j] + self.simpson(j as f64 / MP_PANELS as f64, t)
    }

    fn lambda_at_node(&self, j: usize) -> f64 {
        let t = j as f64 / MP_PANELS as f64;
        let h = (0.5 * PI * t * t).sin();
        self.lo + 2.0 * self.c * h * h
    }

    /// Bisection on `λ` for `CDF(λ) = q`, inside the panel whose tabulated
    /// CDF brackets `q`.
    fn quantile(&self, q: f64) -> f64 {
        let j = self.nodes.partition_point(|&c| c < q).clamp(1, MP_PANELS) - 1;
        let (mut a, mut b) = (self.lambda_at_node(j), self.lambda_at_node(j + 1));
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b || b - a <= 1e-15 * b {
                break;
            }
            if self.cdf(mid) < q {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }
}

/// Expected singular values of an i.i.d. noise matrix of shape `(m, n)` with
/// per-entry standard deviation `sigma` and `n / corr` effective columns.
///
/// Entries beyond the number of nonzero noise singular values are 0.
pub fn mp_quantile_curve(shape: (usize, usize), sigma: f64, corr: f64) -> Result<Vec<f64>> {
    let (m, n) = shape;
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!("empty shape {m}x{n}")));
    }
    if !(sigma >= 0.0) || !(corr >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need sigma >= 0 and corr >= 1, got sigma={sigma} corr={corr}"
        )));
    }
    if sigma == 0.0 {
        return Ok(vec![0.0; m.min(n)]);
    }
    Ok(unit_curve(shape, corr).iter().map(|v| sigma * v).collect())
}

type CurveKey = (usize, usize, u64);

/// Unit-sigma curves are shared between fits; every Hankel instance of a
/// pipeline has the same shape.
fn unit_curve(shape: (usize, usize), corr: f64) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<CurveKey, Arc<Vec<f64>>>>> = OnceLock::new();
    let key = (shape.0, shape.1, corr.to_bits());
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hit) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
        return Arc::clone(hit);
    }
    let curve = Arc::new(compute_unit_curve(shape, corr));
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    if map.len() >= 512 {
        map.clear();
    }
    map.insert(key, Arc::clone(&curve));
    curve
}

fn compute_unit_curve((m, n): (usize, usize), corr: f64) -> Vec<f64> {
    let mut out = vec![0.0; m.min(n)];
    let n_eff = ((n as f64 / corr).round() as usize).max(1);
    let big = m.max(n_eff);
    let small = m.min(n_eff);
    let law = MpLaw::new(small as f64 / big as f64);
    let scale = (big as f64).sqrt();
    for (k, v) in out.iter_mut().enumerate().take(small) {
        let q = (small as f64 - (k + 1) as f64 + 0.5) / small as f64;
        *v = scale * law.quantile(q).sqrt();
    }
    out
}

/// Values at or below `max(m, n)·ε·s₀` are set to exact zero.
fn numerical_floor(s: &[f64], shape: (usize, usize)) -> Vec<f64> {
    let tol = shape.0.max(shape.1) as f64 * f64::EPSILON * s.first().copied().unwrap_or(0.0);
    s.iter().map(|&x| if x <= tol { 0.0 } else { x }).collect()
}

const CORR_GRID: std::ops::RangeInclusive<u32> = 0..=12;

fn corr_at(j: u32) -> f64 {
    1.0 + 0.25 * j as f64
}

fn fit_tail(s: &[f64], shape: (usize, usize), tail: f64) -> Result<(f64, f64)> {
    let p = s.len();
    let count = ((p as f64 * tail).ceil() as usize).clamp(1, p);
    let idx: Vec<usize> = (p - count..p).filter(|&k| s[k] != 0.0).collect();
    if idx.is_empty() {
        return Ok((0.0, 1.0));
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for j in CORR_GRID {
        let corr = corr_at(j);
        let unit = unit_curve(shape, corr);
        let unit = |k: usize| unit.get(k).copied().unwrap_or(0.0);
        let den: f64 = idx.iter().map(|&k| unit(k) * unit(k)).sum();
        let num: f64 = idx.iter().map(|&k| s[k] * unit(k)).sum();
        let sigma = if den > 0.0 { num / den } else { 0.0 };
        let res: f64 = idx.iter().map(|&k| (s[k] - sigma * unit(k)).powi(2)).sum();
        if best.is_none_or(|(r, _, _)| res < r) {
            best = Some((res, sigma, corr));
        }
    }
    let (_, sigma, corr) = best.unwrap();
    Ok((sigma, corr))
}

/// Least-squares fit of `(sigma_n, corr)` to the trailing half of `s`.
///
/// An all-zero tail yields `(0, 1)`.
pub fn mp_fit(s: &[f64], shape: (usize, usize)) -> Result<(f64, f64)> {
    mp_fit_with_tail(s, shape, DEFAULT_TAIL_FRACTION)
}

pub fn mp_fit_with_tail(s: &[f64], shape: (usize, usize), tail: f64) -> Result<(f64, f64)> {
    if s.len() < 8 {
        return Err(Error::TooFewValues { got: s.len(), need: 8 });
    }
    check_spectrum(s)?;
    fit_tail(&numerical_floor(s, shape), shape, tail)
}

pub fn e15(s: &[f64], shape: (usize, usize), mu: f64) -> Result<E15Model> {
    e15_with_tail(s, shape, mu, DEFAULT_TAIL_FRACTION)
}

pub fn e15_with_tail(s: &[f64], shape: (usize, usize), mu: f64, tail: f64) -> Result<E15Model> {
    check_spectrum(s)?;
    SelectionStrategy::E15 { mu, tail }.validate()?;
    if s.len() != shape.0.min(shape.1) {
        return Err(Error::ShapeMismatch(format!(
            "{} singular values for a {}x{} matrix",
            s.len(),
            shape.0,
            shape.1
        )));
    }
    let floored = numerical_floor(s, shape);
    let (sigma_n, corr) = fit_tail(&floored, shape, tail)?;
    let mp_curve = mp_quantile_curve(shape, sigma_n, corr)?;
    let cleanliness: Vec<f64> = floored
        .iter()
        .zip(&mp_curve)
        .map(|(&sk, &mk)| if sk == 0.0 { 0.0 } else { (1.0 - mk / sk).clamp(0.0, 1.0) })
        .collect();
    let rank = prefix_len(s.len(), |k| cleanliness[k] >= mu);
    let cleaned_s = (0..rank)
        .map(|k| {
            if mp_curve[k] == 0.0 {
                s[k]
            } else {
                (s[k] * s[k] - mp_curve[k] * mp_curve[k]).max(0.0).sqrt()
            }
        })
        .collect();
    Ok(E15Model {
        sigma_n,
        corr,
        mp_curve,
        cleanliness,
        rank,
        cleaned_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn threshold_examples() {
        let s = [10.0, 5.0, 1.0, 0.1];
        let rel = SelectionStrategy::RelativeThreshold {
            fraction: 0.02,
            mode: ThresholdMode::PerValue,
        };
        assert_eq!(select_rank(&s, (4, 4), &rel).unwrap(), 3);
        assert_eq!(select_rank(&[10.0, 5.0, 1.0], (3, 3), &SelectionStrategy::FixedRank(5)).unwrap(), 3);
        let abs = SelectionStrategy::AbsoluteThreshold {
            epsilon: 2.5,
            mode: ThresholdMode::PerValue,
        };
        assert_eq!(select_rank(&[4.0, 3.0, 2.0, 1.0], (4, 4), &abs).unwrap(), 2);
    }

    #[test]
    fn cumulative_thresholds() {
        let s = [10.0, 5.0, 1.0, 0.1];
        let abs = |epsilon| SelectionStrategy::AbsoluteThreshold {
            epsilon,
            mode: ThresholdMode::Cumulative,
        };
        // tails: r=4 → 0, r=3 → 0.1, r=2 → 1.1, r=1 → 6.1
        assert_eq!(select_rank(&s, (4, 4), &abs(0.0)).unwrap(), 4);
        assert_eq!(select_rank(&s, (4, 4), &abs(0.1)).unwrap(), 3);
        assert_eq!(select_rank(&s, (4, 4), &abs(1.2)).unwrap(), 2);
        assert_eq!(select_rank(&s, (4, 4), &abs(100.0)).unwrap(), 0);
        let rel = SelectionStrategy::RelativeThreshold {
            fraction: 0.02,
            mode: ThresholdMode::Cumulative,
        };
        // 1.1 / 16.1 = 0.068 > 0.02, 0.1 / 16.1 = 0.006 ≤ 0.02
        assert_eq!(select_rank(&s, (4, 4), &rel).unwrap(), 3);
        let zero = [0.0, 0.0];
        assert_eq!(select_rank(&zero, (2, 2), &rel).unwrap(), 0);
    }

    #[test]
    fn selection_errors() {
        assert!(matches!(select_rank(&[], (1, 1), &SelectionStrategy::FixedRank(1)), Err(Error::Empty)));
        assert!(select_rank(&[1.0, 2.0], (2, 2), &SelectionStrategy::FixedRank(1)).is_err());
        assert!(select_rank(&[1.0], (1, 1), &SelectionStrategy::e15(1.5)).is_err());
        let bad = SelectionStrategy::RelativeThreshold {
            fraction: 0.0,
            mode: ThresholdMode::PerValue,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mp_cdf_is_normalized() {
        for beta in [1.0, 4999.0 / 5000.0, 0.999, 0.5, 0.1, 0.01, 1.0 / 5000.0] {
            let law = MpLaw::new(beta);
            assert!((law.cdf(law.hi) - 1.0).abs() <= 1e-6, "beta {beta}: {}", law.cdf(law.hi));
            assert_eq!(law.cdf(law.lo), 0.0);
        }
    }

    #[test]
    fn mp_cdf_matches_closed_form_at_beta_one() {
        // At β = 1, λ = 2(1 − cos θ) and the CDF is (θ + sin θ)/π.
        let law = MpLaw::new(1.0);
        for theta in [0.1, 0.5, 1.0, 2.0, 3.0] {
            let lambda = 2.0 * (1.0 - f64::cos(theta));
            let exact = (theta + theta.sin()) / PI;
            assert!((law.cdf(lambda) - exact).abs() < 1e-10, "theta {theta}");
            assert!((law.quantile(exact) - lambda).abs() < 1e-8);
        }
    }

    #[test]
    fn mp_curve_basics() {
        assert!(mp_quantile_curve((50, 40), 0.0, 1.0).unwrap().iter().all(|&v| v == 0.0));
        let m = 200;
        let curve = mp_quantile_curve((m, m), 1.3, 1.0).unwrap();
        let edge = 2.0 * 1.3 * (m as f64).sqrt();
        assert!((curve[0] - edge).abs() <= 0.02 * edge);
        // corr shrinks the effective column count; trailing entries vanish
        let c = mp_quantile_curve((100, 40), 1.0, 4.0).unwrap();
        assert_eq!(c.len(), 40);
        assert!(c[9] > 0.0 && c[10..].iter().all(|&v| v == 0.0));
        assert!(mp_quantile_curve((10, 10), -1.0, 1.0).is_err());
        assert!(mp_quantile_curve((10, 10), 1.0, 0.5).is_err());
    }

    #[test]
    fn mp_fit_degenerate_and_scaling() {
        let mut s = vec![5.0, 4.0, 3.0, 2.0];
        s.extend(vec![0.0; 8]);
        assert_eq!(mp_fit(&s, (12, 12)).unwrap(), (0.0, 1.0));
        assert!(matches!(mp_fit(&[1.0; 4], (4, 4)), Err(Error::TooFewValues { .. })));

        let s: Vec<f64> = mp_quantile_curve((60, 30), 0.7, 1.5).unwrap();
        let (sig, corr) = mp_fit(&s, (60, 30)).unwrap();
        assert!((sig - 0.7).abs() < 1e-9 && corr == 1.5, "{sig} {corr}");
        let scaled: Vec<f64> = s.iter().map(|x| x * 10.0).collect();
        let (sig10, corr10) = mp_fit(&scaled, (60, 30)).unwrap();
        assert!((sig10 - 10.0 * sig).abs() < 1e-9 * sig10);
        assert_eq!(corr10, corr);
    }

    #[test]
    fn e15_on_exact_low_rank_is_lossless() {
        let mut s = vec![40.0, 20.0, 7.0, 3.0];
        s.extend(std::iter::repeat_n(1e-15, 12));
        let model = e15(&s, (30, 16), 0.10).unwrap();
        assert_eq!(model.sigma_n, 0.0);
        assert_eq!(model.rank, 4);
        assert_eq!(model.cleaned_s, s[..4].to_vec());
        assert!(model.cleanliness[..4].iter().all(|&c| c == 1.0));
    }

    #[test]
    fn e15_rejects_bad_shapes_and_mu() {
        assert!(e15(&[3.0, 2.0, 1.0], (3, 4), 0.1).is_ok());
        assert!(e15(&[3.0, 2.0, 1.0], (5, 4), 0.1).is_err());
        assert!(e15(&[3.0, 2.0, 1.0], (3, 4), 0.0).is_err());
    }

    fn noise_spectrum(m: usize, n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let half = Normal::new(0.0, sigma / 2f64.sqrt()).unwrap();
        let a = faer::Mat::from_fn(m, n, |_, _| {
            crate::Complex64::new(half.sample(&mut rng), half.sample(&mut rng))
        });
        crate::tsvd::svd(a.as_ref()).unwrap().s
    }

    #[test]
    fn mp_curve_matches_monte_carlo_noise() {
        let predicted = mp_quantile_curve((200, 200), 1.0, 1.0).unwrap();
        let seeds = 10;
        let mut mean = vec![0.0; 200];
        for seed in 0..seeds {
            for (acc, x) in mean.iter_mut().zip(noise_spectrum(200, 200, 1.0, seed)) {
                *acc += x / seeds as f64;
            }
        }
        let worst = (20..180)
            .map(|k| (mean[k] - predicted[k]).abs() / predicted[k])
            .fold(0.0, f64::max);
        assert!(worst <= 0.05, "max relative deviation {worst}");
    }

    #[test]
    fn mp_fit_recovers_noise_level() {
        for seed in 0..10 {
            let s = noise_spectrum(100, 100, 1.0, 100 + seed);
            let (sigma, _) = mp_fit(&s, (100, 100)).unwrap();
            assert!((0.9..=1.1).contains(&sigma), "seed {seed}: sigma {sigma}");
        }
    }

    #[test]
    fn e15_on_pure_noise_keeps_little() {
        let worst = (0..10)
            .map(|seed| e15(&noise_spectrum(100, 100, 1.0, 200 + seed), (100, 100), 0.10).unwrap().rank)
            .max()
            .unwrap();
        assert!(worst <= 3, "max rank {worst}");
    }

    #[test]
    fn e15_on_rank_four_signal_plus_noise() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let (m, n) = (100, 100);
        // 2·σ·√m = 2
        let sigma = 1.0 / (m as f64).sqrt();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let half = Normal::new(0.0, sigma / 2f64.sqrt()).unwrap();
        let signal = [100.0, 50.0, 20.0, 10.0];
        let a = faer::Mat::from_fn(m, n, |i, j| {
            let clean = if i == j && i < 4 { signal[i] } else { 0.0 };
            crate::Complex64::new(clean + half.sample(&mut rng), half.sample(&mut rng))
        });
        let s = crate::tsvd::svd(a.as_ref()).unwrap().s;
        let model = e15(&s, (m, n), 0.10).unwrap();
        assert_eq!(model.rank, 4);
        assert!((model.mp_curve[0] - 2.0).abs() < 0.2, "mp edge {}", model.mp_curve[0]);
        let direct = (s[0] * s[0] - model.mp_curve[0] * model.mp_curve[0]).sqrt();
        assert!((model.cleaned_s[0] - direct).abs() <= 1e-12 * direct);
        for k in 0..4 {
            assert!(model.cleaned_s[k] <= s[k]);
            assert!((model.cleaned_s[k] - signal[k]).abs() < 0.05 * signal[k]);
        }
    }

    proptest! {
        #[test]
        fn selection_is_always_a_prefix(mut s in proptest::collection::vec(0.0f64..100.0, 1..20), eps in 0.0f64..50.0, frac in 0.001f64..0.999) {
            s.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let p = s.len();
            for strat in [
                SelectionStrategy::AbsoluteThreshold { epsilon: eps, mode: ThresholdMode::PerValue },
                SelectionStrategy::RelativeThreshold { fraction: frac, mode: ThresholdMode::PerValue },
            ] {
                let r = select_rank(&s, (p, p), &strat).unwrap();
                let pass = |k: usize| match strat {
                    SelectionStrategy::AbsoluteThreshold { epsilon, .. } => s[k] > epsilon,
                    SelectionStrategy::RelativeThreshold { fraction, .. } => s[0] > 0.0 && s[k] / s[0] > fraction,
                    _ => unreachable!(),
                };
                prop_assert!((0..r).all(pass));
                prop_assert!(r == p || !pass(r));
            }
            let r = select_rank(&s, (p, p), &SelectionStrategy::AbsoluteThreshold { epsilon: eps, mode: ThresholdMode::Cumulative }).unwrap();
            prop_assert!(s[r..].iter().sum::<f64>() <= eps + 1e-9);
            if r > 0 {
                prop_assert!(s[r - 1..].iter().sum::<f64>() > eps - 1e-9);
            }
        }

        #[test]
        fn mp_curve_monotone(m in 1usize..80, n in 1usize..80, sigma in 0.01f64..5.0, corr_step in 0u32..13) {
            let corr = corr_at(corr_step);
            let c1 = mp_quantile_curve((m, n), sigma, corr).unwrap();
            prop_assert!(c1.windows(2).all(|w| w[0] >= w[1]));
            let c2 = mp_quantile_curve((m, n), sigma * 1.5, corr).unwrap();
            prop_assert!(c1.iter().zip(&c2).all(|(a, b)| b >= a));
        }

        #[test]
        fn e15_is_homogeneous(mut s in proptest::collection::vec(0.01f64..100.0, 8..30), alpha in 0.1f64..50.0) {
            s.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let p = s.len();
            let shape = (p + 7, p);
            let a = e15(&s, shape, 0.1).unwrap();
            let scaled: Vec<f64> = s.iter().map(|x| x * alpha).collect();
            let b = e15(&scaled, shape, 0.1).unwrap();
            prop_assert!((b.sigma_n - alpha * a.sigma_n).abs() <= 1e-9 * (1.0 + b.sigma_n));
            prop_assert_eq!(a.corr, b.corr);
            for (x, y) in a.cleanliness.iter().zip(&b.cleanliness) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            // a rank flip would need a cleanliness value within rounding of mu
            if a.cleanliness.iter().all(|c| (c - 0.1).abs() > 1e-9) {
                prop_assert_eq!(a.rank, b.rank);
                for (x, y) in a.cleaned_s.iter().zip(&b.cleaned_s) {
                    prop_assert!((y - alpha * x).abs() <= 1e-9 * (1.0 + y));
                }
            }
            for (c, x) in a.cleaned_s.iter().zip(&s).take(a.rank) {
                prop_assert!(c <= x);
            }
        }
    }
}
