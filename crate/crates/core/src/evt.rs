//! Monte Carlo simulation of running block maxima and the extreme value
//! statistics built on them: empirical distribution of Y_n^(2 delta - 1)/n,
//! Frechet fitting, the anti-clustering check, mixing diagnostics, liminf
//! and Khintchine trackers, excursion depths, and the limsup-max principle
//! verifier.
//!
//! Trials are independent tasks on counter-based random streams, so every
//! campaign is reproducible and independent of the worker count.

use crate::boundary::{AnchoredOrbit, BlockSequence};
use crate::gauss::DigitStream;
use crate::group::{FuchsianGroup, GeneratorKind};
use crate::patterson::{PattersonAtoms, TwoCylinderStats};
use crate::rng::trial_rng;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum EvtError {
    #[error("sampler cannot supply {wanted} blocks (at most {supported})")]
    SamplerExhausted { wanted: usize, supported: usize },
    #[error("fit diverged: {why}")]
    FitDiverged { why: String },
    #[error("insufficient mass: {why}")]
    InsufficientMass { why: String },
}

/// A source of block-length streams, one per (seed, trial) pair.
pub trait BlockSampler: Sync {
    /// Fills `out` with up to `n` block lengths; returns false when the
    /// trial was censored (escape or depth exhaustion) before n blocks.
    fn fill(&self, seed: u64, trial: u64, n: usize, out: &mut Vec<u64>) -> bool;

    /// Upper bound on the blocks a single trial can supply.
    fn supported(&self) -> usize {
        usize::MAX
    }

    fn name(&self) -> &'static str;
}

/// Continued-fraction digits of uniform points: the exact oracle process.
pub struct CfUniformSampler;

impl BlockSampler for CfUniformSampler {
    fn fill(&self, seed: u64, trial: u64, n: usize, out: &mut Vec<u64>) -> bool {
        out.extend(DigitStream::new(seed, trial).take(n));
        true
    }

    fn name(&self) -> &'static str {
        "cf-uniform"
    }
}

/// Draws a start point from the atomic measure and codes it forward.
///
/// Ordinary points escape, so trials are censored once the orbit leaves
/// the partition or exhausts double precision; the flags are reported,
/// never silently dropped.
pub struct PattersonAtomicSampler<'g> {
    group: &'g FuchsianGroup,
    positions: Vec<f64>,
    cumulative: Vec<f64>,
    depth: usize,
}

impl<'g> PattersonAtomicSampler<'g> {
    pub fn new(group: &'g FuchsianGroup, atoms: &PattersonAtoms) -> Self {
        let mut cumulative = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for &w in &atoms.weights {
            acc += w;
            cumulative.push(acc);
        }
        PattersonAtomicSampler {
            group,
            positions: atoms.positions.clone(),
            cumulative,
            depth: atoms.depth,
        }
    }
}

impl BlockSampler for PattersonAtomicSampler<'_> {
    fn fill(&self, seed: u64, trial: u64, n: usize, out: &mut Vec<u64>) -> bool {
        let mut rng = trial_rng(seed, trial);
        let u: f64 = rng.gen();
        let idx = self.cumulative.partition_point(|&c| c < u);
        let mut x = self.positions[idx.min(self.positions.len() - 1)];
        while out.len() < n {
            match crate::boundary::block_step(self.group, x) {
                Ok((_, len, next)) => {
                    out.push(len);
                    x = next;
                }
                Err(_) => return false,
            }
        }
        true
    }

    fn supported(&self) -> usize {
        // codes are censored near the word depth of the atom cloud
        self.depth
    }

    fn name(&self) -> &'static str {
        "patterson-atomic"
    }
}

/// First-order block chain with parabolic lengths drawn from the power
/// law the tail fit targets.
///
/// Letter transitions come from the two-cylinder statistics of the atom
/// cloud; parabolic run lengths follow P(len = k) proportional to
/// k^(-2 delta), the exact tail law, for every k (the fitted prefactor
/// cancels in the conditional law). This is a constructive proxy for a
/// measure absolutely continuous with respect to the Patterson measure;
/// reports must label its runs as an approximate sampler.
pub struct SymbolicMarkovSampler {
    /// Cumulative initial letter law.
    initial: Vec<f64>,
    /// Cumulative transition rows.
    rows: Vec<Vec<f64>>,
    /// Cumulative power-law head for lengths 1..=LENGTH_HEAD, the last
    /// entry being the analytic tail bucket.
    length_cum: Vec<f64>,
    tail_exponent: f64,
    parabolic: Vec<bool>,
    inverse_slot: Vec<usize>,
}

/// Lengths above this are drawn from the continuous tail inverse.
const LENGTH_HEAD: usize = 64;

impl SymbolicMarkovSampler {
    pub fn new(group: &FuchsianGroup, stats: &TwoCylinderStats, delta: f64) -> Self {
        let n = group.n_letters();
        let norm = |v: &[f64]| -> Vec<f64> {
            let total: f64 = v.iter().sum();
            let mut acc = 0.0;
            v.iter()
                .map(|&x| {
                    acc += if total > 0.0 {
                        x / total
                    } else {
                        1.0 / v.len() as f64
                    };
                    acc
                })
                .collect()
        };
        let initial = norm(&stats.letter_mass);
        let rows: Vec<Vec<f64>> = (0..n).map(|from| norm(&stats.transition[from])).collect();
        // discrete zeta head plus the integral-test tail mass
        let q = 2.0 * delta;
        let head: Vec<f64> = (1..=LENGTH_HEAD).map(|k| (k as f64).powf(-q)).collect();
        let tail = (LENGTH_HEAD as f64 + 0.5).powf(1.0 - q) / (q - 1.0);
        let total: f64 = head.iter().sum::<f64>() + tail;
        let mut acc = 0.0;
        let mut length_cum: Vec<f64> = head
            .iter()
            .map(|&x| {
                acc += x / total;
                acc
            })
            .collect();
        length_cum.push(1.0);
        SymbolicMarkovSampler {
            initial,
            rows,
            length_cum,
            tail_exponent: q,
            parabolic: group
                .generators()
                .iter()
                .map(|g| g.is_parabolic())
                .collect(),
            inverse_slot: group
                .generators()
                .iter()
                .map(|g| g.label.inv().slot())
                .collect(),
        }
    }

    fn draw_slot(cum: &[f64], u: f64) -> usize {
        cum.partition_point(|&c| c < u).min(cum.len() - 1)
    }

    fn draw_length(&self, slot: usize, rng: &mut impl Rng) -> u64 {
        if !self.parabolic[slot] {
            return 1;
        }
        let u: f64 = rng.gen();
        let k = Self::draw_slot(&self.length_cum, u);
        if k + 1 < self.length_cum.len() {
            (k + 1) as u64
        } else {
            // continuous inverse of the k^-(q-1) tail beyond the head
            let k0 = LENGTH_HEAD as f64 + 0.5;
            let v: f64 = rng.gen_range(1e-12..1.0f64);
            let len = k0 * v.powf(-1.0 / (self.tail_exponent - 1.0));
            (len.floor() as u64).max(LENGTH_HEAD as u64 + 1).min(1 << 40)
        }
    }
}

impl BlockSampler for SymbolicMarkovSampler {
    fn fill(&self, seed: u64, trial: u64, n: usize, out: &mut Vec<u64>) -> bool {
        let mut rng = trial_rng(seed, trial);
        let mut cur = Self::draw_slot(&self.initial, rng.gen());
        out.push(self.draw_length(cur, &mut rng));
        while out.len() < n {
            // admissible next block letter: never the inverse, and never
            // the same letter when it is parabolic (runs are maximal)
            let next = loop {
                let cand = Self::draw_slot(&self.rows[cur], rng.gen());
                if cand == self.inverse_slot[cur] {
                    continue;
                }
                if self.parabolic[cur] && cand == cur {
                    continue;
                }
                break cand;
            };
            cur = next;
            out.push(self.draw_length(cur, &mut rng));
        }
        true
    }

    fn name(&self) -> &'static str {
        "symbolic-markov"
    }
}

/// Per-trial running maxima of the first n blocks.
#[derive(Debug, Clone)]
pub struct MaximaSamples {
    pub n: usize,
    pub y: Vec<u64>,
    /// Trials censored before n blocks (their maxima cover a prefix).
    pub censored: Vec<bool>,
    pub blocks_supplied: Vec<u32>,
}

impl MaximaSamples {
    pub fn censored_count(&self) -> usize {
        self.censored.iter().filter(|&&c| c).count()
    }
}

/// Runs `trials` independent trials and records Y_n per trial.
pub fn simulate_maxima(
    sampler: &dyn BlockSampler,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<MaximaSamples, EvtError> {
    if n == 0 || trials == 0 {
        return Err(EvtError::InsufficientMass {
            why: "need n >= 1 and trials >= 1".into(),
        });
    }
    if n > sampler.supported() {
        return Err(EvtError::SamplerExhausted {
            wanted: n,
            supported: sampler.supported(),
        });
    }
    let rows: Vec<(u64, bool, u32)> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut xs = Vec::with_capacity(n.min(1 << 16));
            let complete = sampler.fill(seed, trial, n, &mut xs);
            let y = xs.iter().copied().max().unwrap_or(0);
            (y, !complete, xs.len() as u32)
        })
        .collect();
    Ok(MaximaSamples {
        n,
        y: rows.iter().map(|r| r.0).collect(),
        censored: rows.iter().map(|r| r.1).collect(),
        blocks_supplied: rows.iter().map(|r| r.2).collect(),
    })
}

/// Full block streams for the dependence diagnostics.
pub fn simulate_streams(
    sampler: &dyn BlockSampler,
    n: usize,
    trials: usize,
    seed: u64,
) -> Vec<Vec<u64>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut xs = Vec::with_capacity(n);
            sampler.fill(seed, trial, n, &mut xs);
            xs
        })
        .collect()
}

/// Log-spaced evaluation grid.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && points >= 2);
    (0..points)
        .map(|i| lo * (hi / lo).powf(i as f64 / (points - 1) as f64))
        .collect()
}

/// Empirical distribution of Y_n^(2 delta - 1)/n on the given grid.
pub fn empirical_cdf(y: &[u64], delta: f64, n: usize, s_grid: &[f64]) -> Vec<(f64, f64)> {
    let mut vals: Vec<f64> = y
        .iter()
        .map(|&v| (v as f64).powf(2.0 * delta - 1.0) / n as f64)
        .collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s_grid
        .iter()
        .map(|&s| {
            let k = vals.partition_point(|&v| v <= s);
            (s, k as f64 / vals.len() as f64)
        })
        .collect()
}

/// Sup distance between an empirical CDF and s -> exp(-kappa/s) on the
/// CDF's own grid.
pub fn ks_against(cdf: &[(f64, f64)], kappa: f64) -> f64 {
    assert!(kappa > 0.0);
    cdf.iter()
        .map(|&(s, f)| (f - (-kappa / s).exp()).abs())
        .fold(0.0, f64::max)
}

/// Exact sup distance over a window: the supremum is attained at sample
/// jump points or window ends.
pub fn ks_exact(y: &[u64], delta: f64, n: usize, kappa: f64, window: (f64, f64)) -> f64 {
    let mut vals: Vec<f64> = y
        .iter()
        .map(|&v| (v as f64).powf(2.0 * delta - 1.0) / n as f64)
        .collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let total = vals.len() as f64;
    let theory = |s: f64| (-kappa / s).exp();
    let ecdf_at = |s: f64| vals.partition_point(|&v| v <= s) as f64 / total;
    let mut d = (ecdf_at(window.0) - theory(window.0))
        .abs()
        .max((ecdf_at(window.1) - theory(window.1)).abs());
    let lo_idx = vals.partition_point(|&v| v < window.0);
    let hi_idx = vals.partition_point(|&v| v <= window.1);
    for i in lo_idx..hi_idx {
        let t = theory(vals[i]);
        d = d.max(((i + 1) as f64 / total - t).abs());
        d = d.max((i as f64 / total - t).abs());
    }
    d
}

/// Maximum-likelihood Frechet fit.
#[derive(Debug, Clone, Copy)]
pub struct FrechetFit {
    pub shape: f64,
    pub scale: f64,
    pub shape_stderr: f64,
    pub scale_stderr: f64,
}

/// Fits exp(-(scale/y)^shape) to positive samples.
///
/// Log-transformed samples are Gumbel; the Gumbel scale solves a
/// monotone profile equation, here bisected, and the parameters map back
/// as shape = 1/sigma, scale = exp(mu).
pub fn frechet_fit(samples: &[f64]) -> Result<FrechetFit, EvtError> {
    if samples.len() < 100 {
        return Err(EvtError::FitDiverged {
            why: format!("need at least 100 samples, got {}", samples.len()),
        });
    }
    if samples.iter().any(|&y| !(y > 0.0)) {
        return Err(EvtError::FitDiverged {
            why: "samples must be positive".into(),
        });
    }
    let z: Vec<f64> = samples.iter().map(|&y| y.ln()).collect();
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var < 1e-18 {
        return Err(EvtError::FitDiverged {
            why: "degenerate (constant) samples".into(),
        });
    }
    let zmin = z.iter().cloned().fold(f64::MAX, f64::min);
    // Gumbel profile score in sigma: the fixed point of
    // sigma = mean(z) - sum z e^(-z/sigma) / sum e^(-z/sigma);
    // weights favor small z, stabilized by factoring exp(-zmin/sigma)
    let score = |sigma: f64| -> f64 {
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for &v in &z {
            let e = ((zmin - v) / sigma).exp();
            s0 += e;
            s1 += v * e;
        }
        sigma - mean + s1 / s0
    };
    let mut lo = (var.sqrt() * 0.02).max(1e-9);
    let mut hi = var.sqrt() * 20.0;
    let slo = score(lo);
    let shi = score(hi);
    if slo.signum() == shi.signum() {
        return Err(EvtError::FitDiverged {
            why: "profile score does not bracket a root".into(),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score(mid).signum() == slo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sigma = 0.5 * (lo + hi);
    let s0: f64 = z.iter().map(|&v| ((zmin - v) / sigma).exp()).sum();
    // mu = -sigma ln(mean e^(-z/sigma)), with the zmin factor restored
    let mu = zmin - sigma * (s0 / n).ln();
    // asymptotic standard errors of the Gumbel MLE
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let se_sigma = sigma * (6.0 / pi2 / n).sqrt();
    let se_mu = sigma * (1.10867 / n).sqrt();
    let shape = 1.0 / sigma;
    let scale = mu.exp();
    Ok(FrechetFit {
        shape,
        scale,
        shape_stderr: se_sigma / (sigma * sigma),
        scale_stderr: scale * se_mu,
    })
}

/// One row of the anti-clustering table.
#[derive(Debug, Clone, Copy)]
pub struct DPrimeRow {
    pub k: usize,
    pub s: f64,
    /// n * sum over lags of the empirical pair-exceedance probability.
    pub statistic: f64,
    pub pair_events: u64,
}

/// Empirical check of the anti-clustering condition at levels
/// v_n(s) = (n+1) s: for each k, n * sum_{j=2}^{n/k} P(X_2 and X_{j+1}
/// both exceed) should fall towards zero as k grows.
///
/// The block process is stationary, so the pair probabilities are
/// estimated by time averaging within each stream.
pub fn check_d_prime(
    streams: &[Vec<u64>],
    delta: f64,
    s_values: &[f64],
    k_values: &[usize],
    n: usize,
) -> Vec<DPrimeRow> {
    let mut rows = Vec::new();
    for &s in s_values {
        let level = ((n + 1) as f64 * s).powf(1.0 / (2.0 * delta - 1.0));
        let positions: Vec<Vec<usize>> = streams
            .par_iter()
            .map(|xs| {
                xs.iter()
                    .enumerate()
                    .filter(|(_, &x)| (x as f64) > level)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        let max_lag = n / k_values.iter().copied().min().unwrap_or(2);
        let mut lag_counts = vec![0u64; max_lag + 1];
        let mut origin_counts = vec![0u64; max_lag + 1];
        for (xs, pos) in streams.iter().zip(&positions) {
            let len = xs.len();
            for (lag, slot) in origin_counts.iter_mut().enumerate().skip(1) {
                if lag < len {
                    *slot += (len - lag) as u64;
                }
            }
            for (a_idx, &a) in pos.iter().enumerate() {
                for &b in &pos[a_idx + 1..] {
                    let lag = b - a;
                    if lag <= max_lag {
                        lag_counts[lag] += 1;
                    }
                }
            }
        }
        for &k in k_values {
            // lags 1 .. floor(n/k) - 1 realize the pairs (X_2, X_{j+1})
            let top = (n / k).saturating_sub(1).min(max_lag);
            let mut stat = 0.0;
            let mut events = 0u64;
            for lag in 1..=top {
                if origin_counts[lag] > 0 {
                    stat += lag_counts[lag] as f64 / origin_counts[lag] as f64;
                    events += lag_counts[lag];
                }
            }
            rows.push(DPrimeRow {
                k,
                s,
                statistic: n as f64 * stat,
                pair_events: events,
            });
        }
    }
    rows
}

/// An event over block streams: a conjunction of per-coordinate length
/// ranges.
#[derive(Debug, Clone)]
pub struct CylinderEvent {
    pub ranges: Vec<(u64, u64)>,
}

impl CylinderEvent {
    fn holds(&self, xs: &[u64], at: usize) -> bool {
        if at + self.ranges.len() > xs.len() {
            return false;
        }
        self.ranges
            .iter()
            .enumerate()
            .all(|(j, &(lo, hi))| (lo..=hi).contains(&xs[at + j]))
    }
}

/// Empirical mixing coefficient at each lag: the worst relative
/// deviation of P(A and shifted B) from P(A) P(B) over the event pairs.
pub fn mixing_diagnostic(
    streams: &[Vec<u64>],
    events: &[CylinderEvent],
    lag_grid: &[usize],
) -> Result<Vec<(usize, f64)>, EvtError> {
    let probs: Vec<f64> = events
        .iter()
        .map(|ev| {
            let mut hits = 0u64;
            let mut total = 0u64;
            for xs in streams {
                let usable = xs.len().saturating_sub(ev.ranges.len());
                total += usable as u64;
                hits += (0..usable).filter(|&i| ev.holds(xs, i)).count() as u64;
            }
            hits as f64 / total.max(1) as f64
        })
        .collect();
    if probs.iter().any(|&p| p < 1e-5) {
        return Err(EvtError::InsufficientMass {
            why: "an event has (near) zero empirical probability".into(),
        });
    }
    let mut out = Vec::new();
    for &lag in lag_grid {
        let mut worst = 0.0f64;
        for (ia, a) in events.iter().enumerate() {
            for (ib, b) in events.iter().enumerate() {
                let mut hits = 0u64;
                let mut total = 0u64;
                for xs in streams {
                    let span = a.ranges.len() + lag + b.ranges.len();
                    let usable = xs.len().saturating_sub(span);
                    total += usable as u64;
                    hits += (0..usable)
                        .filter(|&i| a.holds(xs, i) && b.holds(xs, i + a.ranges.len() + lag))
                        .count() as u64;
                }
                let joint = hits as f64 / total.max(1) as f64;
                worst = worst.max((joint / (probs[ia] * probs[ib]) - 1.0).abs());
            }
        }
        out.push((lag, worst));
    }
    Ok(out)
}

/// The normalized liminf statistic along a grid, with trailing-decade
/// infima.
#[derive(Debug, Clone)]
pub struct LiminfTrack {
    pub grid: Vec<u64>,
    /// Y_n^(2 delta - 1) log log n / n at each grid point.
    pub stat: Vec<f64>,
    /// Infimum of the statistic over n in [grid point / 10, grid point]:
    /// the liminf is approached through these trailing-window infima.
    pub tail_inf: Vec<f64>,
}

/// Tracks the liminf statistic over one block stream.
///
/// The statistic is evaluated at every n, so the trailing-window infima
/// are exact rather than sampled at grid points.
pub fn liminf_track(xs: &[u64], delta: f64, grid: &[u64]) -> LiminfTrack {
    assert!(grid.iter().all(|&g| g >= 16), "grid must start at n >= 16");
    let n_max = grid.iter().copied().max().unwrap_or(16) as usize;
    let power = 2.0 * delta - 1.0;
    let mut stat_all = vec![f64::INFINITY; n_max + 1];
    let mut y = 0u64;
    for (i, &x) in xs.iter().enumerate().take(n_max) {
        let n = i + 1;
        y = y.max(x);
        if n >= 16 {
            stat_all[n] = (y as f64).powf(power) * (n as f64).ln().ln() / n as f64;
        }
    }
    let stat: Vec<f64> = grid.iter().map(|&g| stat_all[g as usize]).collect();
    let tail_inf: Vec<f64> = grid
        .iter()
        .map(|&g| {
            let lo = ((g / 10).max(16)) as usize;
            stat_all[lo..=(g as usize)]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    LiminfTrack {
        grid: grid.to_vec(),
        stat,
        tail_inf,
    }
}

/// Verdict of the zero-infinity dichotomy experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DichotomyVerdict {
    EvidenceZero,
    EvidenceInfinity,
    Inconclusive,
}

/// Tests limsup X_n^(2 delta - 1)/ell_n in {0, infinity} by counting
/// trials with exceedances in successive decades.
///
/// Decision rule: split [16, n_max] into decades; a trial scores a
/// decade when some X_n^(2 delta - 1) >= ell(n) inside it. When no trial
/// scores either of the last two decades and at least 59 trials ran (the
/// 95% binomial bound on a zero count), the evidence is Zero; when at
/// least 30% of trials score every decade, exceedances recur the way a
/// divergent series forces, and the evidence is Infinity; anything else
/// is inconclusive.
pub fn dichotomy_experiment(
    streams: &[Vec<u64>],
    delta: f64,
    ell: &(dyn Fn(u64) -> f64 + Sync),
) -> DichotomyVerdict {
    let n_max = streams.iter().map(|s| s.len()).min().unwrap_or(0) as u64;
    if n_max < 1600 || streams.is_empty() {
        return DichotomyVerdict::Inconclusive;
    }
    let power = 2.0 * delta - 1.0;
    let mut decades = Vec::new();
    let mut hi = n_max;
    while hi >= 160 {
        decades.push((hi / 10, hi));
        hi /= 10;
    }
    decades.reverse();
    let frac: Vec<f64> = decades
        .iter()
        .map(|&(lo, hi)| {
            let scored = streams
                .par_iter()
                .filter(|xs| {
                    xs.iter()
                        .enumerate()
                        .skip(lo as usize)
                        .take((hi - lo) as usize)
                        .any(|(i, &x)| (x as f64).powf(power) >= ell((i + 1) as u64))
                })
                .count();
            scored as f64 / streams.len() as f64
        })
        .collect();
    let last_two_empty = frac.iter().rev().take(2).all(|&f| f == 0.0);
    if last_two_empty && streams.len() >= 59 {
        return DichotomyVerdict::EvidenceZero;
    }
    if frac.iter().all(|&f| f >= 0.3) {
        return DichotomyVerdict::EvidenceInfinity;
    }
    DichotomyVerdict::Inconclusive
}

/// The ratio series log Y_n / log n with its final-window average.
#[derive(Debug, Clone)]
pub struct KhintchineTrack {
    pub grid: Vec<u64>,
    pub ratio: Vec<f64>,
    /// Mean of the ratio over all n in [n_max/10, n_max].
    pub final_window_mean: f64,
}

pub fn khintchine_track(xs: &[u64], grid: &[u64]) -> KhintchineTrack {
    let n_max = grid.iter().copied().max().unwrap_or(2) as usize;
    let mut ratio_all = vec![0.0; n_max + 1];
    let mut y = 0u64;
    for (i, &x) in xs.iter().enumerate().take(n_max) {
        let n = i + 1;
        y = y.max(x);
        if n >= 2 {
            ratio_all[n] = (y as f64).ln() / (n as f64).ln();
        }
    }
    let lo = (n_max / 10).max(2);
    let final_window_mean =
        ratio_all[lo..=n_max].iter().sum::<f64>() / (n_max - lo + 1) as f64;
    KhintchineTrack {
        grid: grid.to_vec(),
        ratio: grid.iter().map(|&g| ratio_all[g as usize]).collect(),
        final_window_mean,
    }
}

/// Excursion-depth series max_{t <= T} depth / log T over a coded orbit.
#[derive(Debug, Clone)]
pub struct ExcursionTrack {
    pub t_grid: Vec<f64>,
    pub series: Vec<f64>,
    /// Birkhoff time divided by the block count; its stabilization
    /// witnesses the integrability of the cocycle.
    pub mean_time_per_step: Vec<f64>,
}

/// Computes the excursion track from an anchored orbit and its blocks.
///
/// The Birkhoff time of block k is accumulated from log |(g^len)'| at
/// the block start, in closed form; the excursion depth of block k is
/// log X_k, up to the bounded offset the comparison constant allows.
pub fn excursion_track(
    group: &FuchsianGroup,
    orbit: &AnchoredOrbit,
    blocks: &BlockSequence,
    t_grid: &[f64],
) -> ExcursionTrack {
    let mut t = 0.0f64;
    let mut times = Vec::with_capacity(blocks.blocks.len());
    let mut depths = Vec::with_capacity(blocks.blocks.len());
    let mut mean_time = Vec::with_capacity(blocks.blocks.len());
    let mut letter_idx = 0usize;
    for (k, b) in blocks.blocks.iter().enumerate() {
        if letter_idx >= orbit.points.len() {
            break;
        }
        let x = orbit.points[letter_idx];
        let gen = group.generator(b.letter);
        let log_deriv = match gen.kind {
            GeneratorKind::Hyperbolic => {
                gen.matrix.derivative(x).map(|d| d.ln()).unwrap_or(0.0)
            }
            GeneratorKind::Parabolic(cusp) => {
                let sign = if b.letter.inverse {
                    -(b.len as i64)
                } else {
                    b.len as i64
                };
                cusp.power_derivative(sign, x)
                    .map(|d| d.ln())
                    .unwrap_or(0.0)
            }
        };
        t += log_deriv.max(0.0);
        times.push(t);
        depths.push((b.len as f64).ln().max(0.0));
        mean_time.push(t / (k + 1) as f64);
        letter_idx += b.len as usize;
    }
    // only report capped times the orbit actually covers
    let t_final = times.last().copied().unwrap_or(0.0);
    let covered: Vec<f64> = t_grid.iter().copied().filter(|&t| t <= t_final).collect();
    let series = covered
        .iter()
        .map(|&cap| {
            let mut best = 0.0f64;
            for (k, &tk) in times.iter().enumerate() {
                if tk > cap {
                    break;
                }
                best = best.max(depths[k]);
            }
            best / cap.ln().max(1e-9)
        })
        .collect();
    ExcursionTrack {
        t_grid: covered,
        series,
        mean_time_per_step: mean_time,
    }
}

/// Finite-prefix verifier of the limsup-max principle.
#[derive(Debug, Clone, Copy)]
pub struct LimsupMaxCheck {
    /// Tail supremum of p_n/q_n over the last half of the data.
    pub lhs_tail_sup: f64,
    /// Tail supremum of max_{k<=n} p_k / q_n over the last half.
    pub rhs_tail_sup: f64,
    /// The finite-n domination max_{k<=n} p_k/q_n <= max_{k<=n} (p_k/q_k)
    /// held at every n.
    pub inequality_ok: bool,
}

pub fn limsup_max_check(p: &[f64], q: &[f64]) -> LimsupMaxCheck {
    assert_eq!(p.len(), q.len());
    assert!(!p.is_empty());
    let n = p.len();
    let mut run_max = f64::MIN;
    let mut ratio_max = f64::MIN;
    let mut lhs_tail = f64::MIN;
    let mut rhs_tail = f64::MIN;
    let mut inequality_ok = true;
    for i in 0..n {
        run_max = run_max.max(p[i]);
        ratio_max = ratio_max.max(p[i] / q[i]);
        let lhs = p[i] / q[i];
        let rhs = run_max / q[i];
        if rhs > ratio_max * (1.0 + 1e-12) {
            inequality_ok = false;
        }
        if i >= n / 2 {
            lhs_tail = lhs_tail.max(lhs);
            rhs_tail = rhs_tail.max(rhs);
        }
    }
    LimsupMaxCheck {
        lhs_tail_sup: lhs_tail,
        rhs_tail_sup: rhs_tail,
        inequality_ok,
    }
}

/// Summary of one extreme-value campaign.
#[derive(Debug, Clone)]
pub struct EvtSummary {
    pub n: usize,
    pub trials: usize,
    pub delta_used: f64,
    pub sampler: String,
    pub censored: usize,
    pub empirical_cdf: Vec<(f64, f64)>,
    pub frechet: Option<FrechetFit>,
    pub ks_vs_theory: f64,
    pub kappa_reference: f64,
}

/// Builds the campaign summary against a reference kappa.
pub fn summarize(
    samples: &MaximaSamples,
    delta: f64,
    kappa_reference: f64,
    sampler_name: &str,
    s_grid: &[f64],
) -> EvtSummary {
    let cdf = empirical_cdf(&samples.y, delta, samples.n, s_grid);
    let normalized: Vec<f64> = samples
        .y
        .iter()
        .map(|&v| (v as f64).powf(2.0 * delta - 1.0) / samples.n as f64)
        .filter(|&v| v > 0.0)
        .collect();
    let frechet = frechet_fit(&normalized).ok();
    let ks = ks_against(&cdf, kappa_reference);
    EvtSummary {
        n: samples.n,
        trials: samples.y.len(),
        delta_used: delta,
        sampler: sampler_name.to_string(),
        censored: samples.censored_count(),
        empirical_cdf: cdf,
        frechet,
        ks_vs_theory: ks,
        kappa_reference,
    }
}
