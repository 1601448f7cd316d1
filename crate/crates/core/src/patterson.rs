//! Orbit sums, the exponent of convergence, atomic approximation of the
//! Patterson measure, and the constant kappa by two independent routes.
//!
//! The measure is approximated by weighted point masses at boundary
//! projections of orbit points g(i), with weights proportional to
//! exp(-s d(i, g(i))) for an exponent s slightly above the estimated
//! critical exponent delta. The density Phi of the map-invariant measure
//! is evaluated against those atoms, which feeds
//!
//! - the fixpoint identity sum over the generator set minus a parabolic
//!   pair,
//! - the mass of D = {first block length 1},
//! - kappa via its closed formula (route one), and
//! - kappa via the power-law tail of the two-block cylinder masses
//!   (route two).
//!
//! No rate for the weak-limit approximation is available, so every
//! estimate carries a self-consistency uncertainty: half the change
//! between the run depth and depth minus two.

use crate::boundary::remaining_block_len;
use crate::group::{FuchsianGroup, GeneratorKind, GeneratorLabel, GroupError, Interval};
use crate::hyperbolic::{
    boundary_projection, dist_to_geodesic, hyperbolic_distance, ray_point, HalfPlanePoint,
};
use rayon::prelude::*;
use thiserror::Error;

/// Default margin of the atom exponent above the delta estimate.
pub const DEFAULT_S_MARGIN: f64 = 0.02;
/// Atoms closer than this to an evaluation point are dropped (and their
/// mass reported) when summing the interaction kernel.
pub const SELF_DISTANCE_CUTOFF: f64 = 1e-8;
/// Deterministic summation chunk; fixed so that thread count cannot
/// change the result.
const SUM_CHUNK: usize = 8192;

#[derive(Debug, Clone, Error)]
pub enum PattersonError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("counting fit did not converge: {why}")]
    NonConvergentFit { why: String },
    #[error("delta = {delta} is not in (1/2, 1]")]
    DeltaOutOfRange { delta: f64 },
    #[error("point {xi} lies in a gap and is not a parabolic fixed point")]
    ExclusionUndefined { xi: f64 },
    #[error("tail masses below atom resolution: {why}")]
    InsufficientTailMass { why: String },
    #[error("exponent s = {s} must exceed the delta estimate {delta}")]
    ExponentTooSmall { s: f64, delta: f64 },
}

/// Partial Poincare sum over reduced words of length <= max_len.
pub fn poincare_partial(
    group: &FuchsianGroup,
    s: f64,
    max_len: usize,
    budget: u64,
) -> Result<f64, PattersonError> {
    let mut total = 1.0; // identity term
    group.for_each_word(max_len, budget, |_, _, dist| {
        total += (-s * dist).exp();
    })?;
    Ok(total)
}

/// Orbit distances grouped by word length.
pub fn shell_distances(
    group: &FuchsianGroup,
    max_len: usize,
    budget: u64,
) -> Result<Vec<Vec<f64>>, PattersonError> {
    let mut shells: Vec<Vec<f64>> = (0..=max_len).map(|_| Vec::new()).collect();
    group.for_each_word(max_len, budget, |letters, _, dist| {
        shells[letters.len()].push(dist);
    })?;
    Ok(shells)
}

/// Result of the orbital-counting delta estimation.
#[derive(Debug, Clone)]
pub struct DeltaEstimate {
    pub delta: f64,
    /// Half the change against the estimate two levels shallower, plus a
    /// floor for the fit noise.
    pub uncertainty: f64,
    /// Estimate from words up to max_len - 2.
    pub delta_shallow: f64,
    pub shell_counts: Vec<usize>,
    /// Root-mean-square residual of ln N(R) against the linear fit.
    pub fit_residual: f64,
    /// Radius window [lo, hi] the fit used.
    pub window: (f64, f64),
    /// Set when the estimate is at or below the 1/2 bound the theory
    /// requires (elementary or numerically degenerate input).
    pub warn_delta_bound: bool,
}

/// Bin width of the orbit-distance histograms behind the delta estimate.
const DIST_BIN: f64 = 0.01;

struct DistHistograms {
    /// counts[len][bin], bin = floor(dist / DIST_BIN).
    counts: Vec<Vec<u32>>,
    words_per_len: Vec<usize>,
}

fn distance_histograms(
    group: &FuchsianGroup,
    max_len: usize,
    budget: u64,
) -> Result<DistHistograms, PattersonError> {
    let mut counts: Vec<Vec<u32>> = (0..=max_len).map(|_| Vec::new()).collect();
    let mut words_per_len = vec![0usize; max_len + 1];
    group.for_each_word(max_len, budget, |letters, _, dist| {
        let l = letters.len();
        words_per_len[l] += 1;
        let bin = (dist / DIST_BIN) as usize;
        let h = &mut counts[l];
        if h.len() <= bin {
            h.resize(bin + 1, 0);
        }
        h[bin] += 1;
    })?;
    Ok(DistHistograms {
        counts,
        words_per_len,
    })
}

impl DistHistograms {
    /// Cumulative counting function of the ball of words up to `len`.
    fn cumulative(&self, len: usize) -> Vec<u64> {
        let bins = self.counts[..=len]
            .iter()
            .map(|h| h.len())
            .max()
            .unwrap_or(0);
        let mut cum = vec![0u64; bins];
        for h in &self.counts[1..=len] {
            for (b, &c) in h.iter().enumerate() {
                cum[b] += c as u64;
            }
        }
        let mut acc = 0u64;
        for v in cum.iter_mut() {
            acc += *v;
            *v = acc;
        }
        cum
    }
}

/// Slope of ln N(R) over the radius window where the depth-truncated
/// orbit ball is complete.
///
/// Completeness is detected against the ball of a shallower enumeration:
/// below the radius where both agree (up to the slow per-level trickle of
/// parabolic-power points), deeper words add nothing and the count is the
/// true orbit count.
fn counting_slope(
    cum_full: &[u64],
    cum_small: &[u64],
    trickle_slack: f64,
) -> Result<(f64, f64, (f64, f64)), PattersonError> {
    let bad = |why: String| PattersonError::NonConvergentFit { why };
    let at = |cum: &[u64], b: usize| -> u64 {
        if cum.is_empty() {
            0
        } else {
            cum[b.min(cum.len() - 1)]
        }
    };
    let bins = cum_full.len();
    if bins == 0 {
        return Err(bad("no orbit points".into()));
    }
    let mut stable_bin = 0usize;
    for b in 0..bins {
        let nf = at(cum_full, b) as f64;
        let ns = at(cum_small, b) as f64;
        if nf <= ns * 1.02 + trickle_slack {
            stable_bin = b;
        } else {
            break;
        }
    }
    let r_stable = stable_bin as f64 * DIST_BIN;
    let r_lo = (0.45 * r_stable).max(1.0);
    let n_at_stable = at(cum_full, stable_bin);
    if r_stable - r_lo < 1.5 || n_at_stable < 32 {
        return Err(bad(format!(
            "stable counting window [{r_lo:.2}, {r_stable:.2}] too small \
             ({n_at_stable} points)"
        )));
    }
    let samples = 64;
    let mut pts = Vec::with_capacity(samples);
    for i in 0..samples {
        let r = r_lo + (r_stable - r_lo) * i as f64 / (samples - 1) as f64;
        let n = at(cum_full, (r / DIST_BIN) as usize);
        if n >= 2 {
            pts.push((r, (n as f64).ln()));
        }
    }
    if pts.len() < 8 {
        return Err(bad("too few populated radii in the window".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - my - slope * (p.0 - mx);
            e * e
        })
        .sum();
    Ok((slope, (rss / n).sqrt(), (r_lo, r_stable)))
}

/// Estimates the exponent of convergence as the exponential growth rate
/// of the orbit counting function N(R) = #{w : d(i, w(i)) <= R}.
///
/// Shell sums at a fixed exponent cannot decay for groups with parabolic
/// elements: every shell contains large parabolic powers whose distance
/// grows only logarithmically in the word length, so the shell growth
/// rate sticks at zero beyond the critical exponent instead of changing
/// sign. The counting function has no such transition and needs the same
/// word enumeration, so the estimate is read off its exponential rate.
pub fn estimate_delta(
    group: &FuchsianGroup,
    max_len: usize,
    budget: u64,
) -> Result<DeltaEstimate, PattersonError> {
    if max_len < 6 {
        return Err(PattersonError::NonConvergentFit {
            why: "need at least depth 6".into(),
        });
    }
    let hists = distance_histograms(group, max_len, budget)?;
    // per-level trickle: each parabolic letter contributes O(1) new
    // small-radius points per extra word length
    let trickle_slack = 2.0 + 2.0 * (2 * group.n_parabolic_pairs()) as f64;
    let cum_full = hists.cumulative(max_len);
    let cum_m2 = hists.cumulative(max_len - 2);
    let cum_m4 = hists.cumulative(max_len - 4);
    let (delta, fit_residual, window) = counting_slope(&cum_full, &cum_m2, trickle_slack)?;
    let delta_shallow = counting_slope(&cum_m2, &cum_m4, trickle_slack)
        .map(|r| r.0)
        .unwrap_or(delta);
    let uncertainty = 0.5 * (delta - delta_shallow).abs() + 1e-3;
    Ok(DeltaEstimate {
        delta,
        uncertainty,
        delta_shallow,
        shell_counts: hists.words_per_len.clone(),
        fit_residual,
        window,
        warn_delta_bound: delta <= 0.52 + uncertainty,
    })
}

/// Weighted boundary point cloud approximating the Patterson measure.
#[derive(Debug, Clone)]
pub struct PattersonAtoms {
    /// Projections of orbit points, in enumeration order.
    pub positions: Vec<f64>,
    /// Normalized weights, summing to 1.
    pub weights: Vec<f64>,
    pub exponent_s: f64,
    pub depth: usize,
    /// Orbit points whose projection ray ends at infinity (skipped).
    pub skipped: usize,
}

impl PattersonAtoms {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Builds the atomic approximation at exponent s and orbit depth max_len.
///
/// The identity word is excluded: the basepoint has no boundary
/// projection. s must exceed the group's delta estimate when one is set.
pub fn patterson_atoms(
    group: &FuchsianGroup,
    s: f64,
    max_len: usize,
    budget: u64,
) -> Result<PattersonAtoms, PattersonError> {
    if let Some(delta) = group.delta() {
        if s <= delta {
            return Err(PattersonError::ExponentTooSmall { s, delta });
        }
    }
    let mut positions = Vec::new();
    let mut weights = Vec::new();
    let mut skipped = 0usize;
    group.for_each_word(max_len, budget, |_, m, dist| {
        match boundary_projection(m.orbit_point()) {
            Ok(xi) => {
                positions.push(xi);
                weights.push((-s * dist).exp());
            }
            Err(_) => skipped += 1,
        }
    })?;
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(PattersonAtoms {
        positions,
        weights,
        exponent_s: s,
        depth: max_len,
        skipped,
    })
}

/// A Phi evaluation: the kernel sum and the weight dropped by the
/// self-distance cutoff.
#[derive(Debug, Clone, Copy)]
pub struct PhiValue {
    pub value: f64,
    pub discarded_mass: f64,
}

/// The exclusion region for Phi at xi: the interval containing xi, or the
/// tangent interval pair at a parabolic fixed point.
fn exclusion_slots(
    group: &FuchsianGroup,
    xi: f64,
) -> Result<(usize, Option<usize>), PattersonError> {
    if let Some(label) = group.locate(xi) {
        return Ok((label.slot(), None));
    }
    for label in group.parabolic_labels() {
        if label.inverse {
            continue;
        }
        let gen = group.generator(label);
        if let GeneratorKind::Parabolic(cusp) = gen.kind {
            if xi == cusp.p {
                return Ok((label.slot(), Some(label.inv().slot())));
            }
        }
    }
    Err(PattersonError::ExclusionUndefined { xi })
}

/// Evaluates Phi(xi) by the exact sum over all atoms outside the
/// exclusion region of weight * |xi - eta|^(-2 delta).
///
/// This is the reference path; bulk passes use [`PhiSolver`], which is
/// validated against it.
pub fn phi_at(
    group: &FuchsianGroup,
    atoms: &PattersonAtoms,
    delta: f64,
    xi: f64,
) -> Result<PhiValue, PattersonError> {
    let (s1, s2) = exclusion_slots(group, xi)?;
    let ex1 = group.generators()[s1].interval;
    let ex2 = s2.map(|s| group.generators()[s].interval);
    let parts: Vec<(f64, f64)> = atoms
        .positions
        .par_chunks(SUM_CHUNK)
        .zip(atoms.weights.par_chunks(SUM_CHUNK))
        .map(|(ps, ws)| {
            let mut acc = 0.0;
            let mut dropped = 0.0;
            for (&p, &w) in ps.iter().zip(ws) {
                if ex1.contains(p) || ex2.map_or(false, |e| e.contains(p)) {
                    continue;
                }
                let d = (xi - p).abs();
                if d <= SELF_DISTANCE_CUTOFF {
                    dropped += w;
                    continue;
                }
                acc += w * (d * d).powf(-delta);
            }
            (acc, dropped)
        })
        .collect();
    let mut value = 0.0;
    let mut discarded_mass = 0.0;
    for (a, d) in parts {
        value += a;
        discarded_mass += d;
    }
    Ok(PhiValue {
        value,
        discarded_mass,
    })
}

/// Accelerated Phi evaluator: atoms sorted by position and aggregated
/// into bins that never straddle an interval boundary. Far bins enter
/// the kernel sum through their centroid and mass (second-order error in
/// bin width over distance); atoms near the evaluation point are summed
/// exactly.
#[derive(Debug, Clone)]
pub struct PhiSolver {
    delta: f64,
    pos: Vec<f64>,
    wts: Vec<f64>,
    bins: Vec<PhiBin>,
    /// Sorted-array ranges not covered by any open interval (atoms at
    /// exact endpoints); summed exactly every time.
    loose: Vec<u32>,
    near_width: f64,
}

#[derive(Debug, Clone, Copy)]
struct PhiBin {
    start: u32,
    end: u32,
    slot: u16,
    centroid: f64,
    mass: f64,
}

impl PhiSolver {
    pub fn new(group: &FuchsianGroup, atoms: &PattersonAtoms, delta: f64) -> Self {
        let mut order: Vec<u32> = (0..atoms.len() as u32).collect();
        order.sort_by(|&a, &b| {
            atoms.positions[a as usize]
                .partial_cmp(&atoms.positions[b as usize])
                .unwrap()
        });
        let pos: Vec<f64> = order.iter().map(|&i| atoms.positions[i as usize]).collect();
        let wts: Vec<f64> = order.iter().map(|&i| atoms.weights[i as usize]).collect();

        let span = pos.last().copied().unwrap_or(1.0) - pos.first().copied().unwrap_or(0.0);
        let h = (span / 16384.0).max(1e-9);
        let mut bins = Vec::new();
        let mut covered = vec![false; pos.len()];
        for gen in group.generators() {
            let iv = gen.interval;
            let lo_idx = pos.partition_point(|&p| p <= iv.lo);
            let hi_idx = pos.partition_point(|&p| p < iv.hi);
            let n_bins = ((iv.len() / h).ceil() as usize).max(1);
            let bw = iv.len() / n_bins as f64;
            let mut start = lo_idx;
            for b in 0..n_bins {
                let edge = if b + 1 == n_bins {
                    iv.hi
                } else {
                    iv.lo + bw * (b + 1) as f64
                };
                let end = pos[start..hi_idx].partition_point(|&p| p < edge) + start;
                if end > start {
                    let mut mass = 0.0;
                    let mut cm = 0.0;
                    for k in start..end {
                        mass += wts[k];
                        cm += wts[k] * pos[k];
                        covered[k] = true;
                    }
                    bins.push(PhiBin {
                        start: start as u32,
                        end: end as u32,
                        slot: gen.label.slot() as u16,
                        centroid: cm / mass,
                        mass,
                    });
                }
                start = end;
            }
        }
        bins.sort_by(|a, b| a.start.cmp(&b.start));
        let loose: Vec<u32> = (0..pos.len() as u32)
            .filter(|&k| !covered[k as usize])
            .collect();
        PhiSolver {
            delta,
            pos,
            wts,
            bins,
            loose,
            near_width: 64.0 * h,
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Phi at xi given the exclusion slots.
    fn phi_with_exclusion(&self, xi: f64, s1: usize, s2: Option<usize>) -> PhiValue {
        let mut value = 0.0;
        let mut discarded = 0.0;
        let lo = xi - self.near_width;
        let hi = xi + self.near_width;
        for bin in &self.bins {
            let slot = bin.slot as usize;
            if slot == s1 || Some(slot) == s2 {
                continue;
            }
            let b_lo = self.pos[bin.start as usize];
            let b_hi = self.pos[bin.end as usize - 1];
            if b_hi < lo || b_lo > hi {
                let d = (xi - bin.centroid).abs();
                value += bin.mass * (d * d).powf(-self.delta);
            } else {
                for k in bin.start as usize..bin.end as usize {
                    let d = (xi - self.pos[k]).abs();
                    if d <= SELF_DISTANCE_CUTOFF {
                        discarded += self.wts[k];
                    } else {
                        value += self.wts[k] * (d * d).powf(-self.delta);
                    }
                }
            }
        }
        for &k in &self.loose {
            let p = self.pos[k as usize];
            let d = (xi - p).abs();
            if d <= SELF_DISTANCE_CUTOFF {
                discarded += self.wts[k as usize];
            } else {
                value += self.wts[k as usize] * (d * d).powf(-self.delta);
            }
        }
        PhiValue {
            value,
            discarded_mass: discarded,
        }
    }

    pub fn phi(&self, group: &FuchsianGroup, xi: f64) -> Result<PhiValue, PattersonError> {
        let (s1, s2) = exclusion_slots(group, xi)?;
        Ok(self.phi_with_exclusion(xi, s1, s2))
    }
}

/// Result of the fixpoint identity check at one parabolic pair.
#[derive(Debug, Clone)]
pub struct FixpointCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub relative_residual: f64,
    /// Terms (generator name, |g'(p)|^delta, Phi(g(p))).
    pub terms: Vec<(String, f64, f64)>,
}

/// Checks sum over g outside the pair of |g'(p)|^delta Phi(g(p)) against
/// Phi(p) at the fixed point of the given parabolic label.
pub fn check_fixpoint_identity(
    group: &FuchsianGroup,
    solver: &PhiSolver,
    gamma: GeneratorLabel,
) -> Result<FixpointCheck, PattersonError> {
    let delta = solver.delta();
    let cusp = group
        .generator(gamma)
        .cusp()
        .expect("label must be parabolic");
    let p = cusp.p;
    let mut lhs = 0.0;
    let mut terms = Vec::new();
    for g in group.generators() {
        if g.label.pair == gamma.pair {
            continue;
        }
        let deriv = g
            .matrix
            .derivative(p)
            .expect("p is outside the pole locus of the other generators");
        let image = g.matrix.apply(p).expect("same");
        let phi = solver.phi(group, image)?;
        let dpow = deriv.powf(delta);
        terms.push((g.name.clone(), dpow, phi.value));
        lhs += dpow * phi.value;
    }
    let rhs = solver.phi(group, p)?.value;
    Ok(FixpointCheck {
        lhs,
        rhs,
        relative_residual: (lhs - rhs).abs() / rhs,
        terms,
    })
}

/// First- and second-block data of every atom, shared by the mass
/// estimates below.
#[derive(Debug, Clone)]
pub struct AtomBlocks {
    /// (first block letter, first block length) per atom; None when the
    /// atom sits in a gap or within the fixed-point guard.
    pub first: Vec<Option<(GeneratorLabel, u64)>>,
    /// Second block, None when censored by escape.
    pub second: Vec<Option<(GeneratorLabel, u64)>>,
}

/// Extracts the first two blocks of each atom code in closed form.
pub fn atom_blocks(group: &FuchsianGroup, atoms: &PattersonAtoms) -> AtomBlocks {
    let data: Vec<(Option<(GeneratorLabel, u64)>, Option<(GeneratorLabel, u64)>)> = atoms
        .positions
        .par_chunks(SUM_CHUNK)
        .flat_map_iter(|chunk| {
            chunk.iter().map(|&x| {
                let l1 = match group.locate(x) {
                    Some(l) => l,
                    None => return (None, None),
                };
                let n1 = match remaining_block_len(group, l1, x) {
                    Some(n) => n,
                    None => return (None, None),
                };
                let y = match group.generator(l1).kind {
                    GeneratorKind::Hyperbolic => group.generator(l1).matrix.apply(x),
                    GeneratorKind::Parabolic(cusp) => {
                        let sign = if l1.inverse { -(n1 as i64) } else { n1 as i64 };
                        cusp.power_apply(sign, x)
                    }
                };
                let y = match y {
                    Ok(v) => v,
                    Err(_) => return (Some((l1, n1)), None),
                };
                let l2 = match group.locate(y) {
                    Some(l) => l,
                    None => return (Some((l1, n1)), None),
                };
                let n2 = match remaining_block_len(group, l2, y) {
                    Some(n) => n,
                    None => return (Some((l1, n1)), None),
                };
                (Some((l1, n1)), Some((l2, n2)))
            })
        })
        .collect();
    AtomBlocks {
        first: data.iter().map(|d| d.0).collect(),
        second: data.iter().map(|d| d.1).collect(),
    }
}

/// Phi-weighted mass of the atoms selected by `select`.
///
/// The selected atoms are sorted by position and grouped into strata of
/// at most `stride` atoms that never straddle an interval boundary; Phi
/// is evaluated once per stratum at the weighted centroid and scaled by
/// the stratum mass. Phi is smooth within an interval, so the stratum
/// error is second order in the stratum width.
fn strided_phi_mass<F>(
    group: &FuchsianGroup,
    atoms: &PattersonAtoms,
    solver: &PhiSolver,
    stride: usize,
    select: F,
) -> (f64, usize)
where
    F: Fn(usize) -> bool + Sync,
{
    let mut taken: Vec<usize> = (0..atoms.len()).filter(|&i| select(i)).collect();
    taken.sort_by(|&a, &b| {
        atoms.positions[a]
            .partial_cmp(&atoms.positions[b])
            .unwrap()
    });
    // strata: (centroid, mass), split at interval boundaries
    let mut strata: Vec<(f64, f64)> = Vec::new();
    let mut k = 0usize;
    while k < taken.len() {
        let slot = group.locate(atoms.positions[taken[k]]);
        let mut mass = 0.0;
        let mut cm = 0.0;
        let mut n = 0;
        while k < taken.len() && n < stride.max(1) {
            let i = taken[k];
            if group.locate(atoms.positions[i]) != slot {
                break;
            }
            mass += atoms.weights[i];
            cm += atoms.weights[i] * atoms.positions[i];
            n += 1;
            k += 1;
        }
        if mass > 0.0 {
            strata.push((cm / mass, mass));
        }
    }
    let evals = strata.len();
    let sum: f64 = strata
        .par_iter()
        .map(|&(x, mass)| {
            solver
                .phi(group, x)
                .map(|phi| mass * phi.value)
                .unwrap_or(0.0)
        })
        .sum::<f64>();
    (sum, evals)
}

/// The invariant-measure mass of D = {first block length 1}.
#[derive(Debug, Clone, Copy)]
pub struct MuDMass {
    pub value: f64,
    /// Weight of atoms whose membership is censored (gap or guard).
    pub censored_mass: f64,
    pub evaluations: usize,
}

/// Estimates the invariant mass of D as the Phi-weighted atom mass of
/// {X_1 = 1}.
///
/// `stride` subsamples the evaluation points; the kernel sum inside each
/// Phi still runs over all atoms. The subsampling error cancels in the
/// ratio of the two kappa routes, which share this value.
pub fn mu_d_mass(
    group: &FuchsianGroup,
    atoms: &PattersonAtoms,
    blocks: &AtomBlocks,
    solver: &PhiSolver,
    stride: usize,
) -> MuDMass {
    let censored_mass: f64 = blocks
        .first
        .iter()
        .zip(&atoms.weights)
        .filter(|(f, _)| f.is_none())
        .map(|(_, &w)| w)
        .sum();
    let (value, evaluations) = strided_phi_mass(group, atoms, solver, stride, |i| {
        matches!(blocks.first[i], Some((_, 1)))
    });
    MuDMass {
        value,
        censored_mass,
        evaluations,
    }
}

/// Which route produced a kappa estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaRoute {
    DirectFormula,
    TailFit,
    FrechetFit,
}

impl KappaRoute {
    pub fn name(&self) -> &'static str {
        match self {
            KappaRoute::DirectFormula => "direct-formula",
            KappaRoute::TailFit => "tail-fit",
            KappaRoute::FrechetFit => "frechet-fit",
        }
    }
}

/// A kappa estimate with its per-cusp components and provenance.
#[derive(Debug, Clone)]
pub struct KappaEstimate {
    pub kappa: f64,
    pub route: KappaRoute,
    /// Per parabolic label: (name, Phi(p), w^-delta, component).
    pub components: Vec<(String, f64, f64, f64)>,
    pub mu_d: f64,
    pub delta_used: f64,
    /// Tail-fit data, empty for the direct route: (n, mass of
    /// {X_1 = 1, X_2 = n}).
    pub tail_masses: Vec<(u64, f64)>,
    /// Free log-log slope of the tail masses (should be near -2 delta).
    pub tail_slope: Option<f64>,
}

/// Kappa via the closed formula: the sum over the symmetric parabolic
/// generator set of (Phi(p) w^-delta)^2, over (2 delta - 1) mu_delta(D).
pub fn kappa_direct(
    group: &FuchsianGroup,
    solver: &PhiSolver,
    mu_d: &MuDMass,
) -> Result<KappaEstimate, PattersonError> {
    let delta = solver.delta();
    if delta <= 0.5 || delta > 1.0 + 1e-9 {
        return Err(PattersonError::DeltaOutOfRange { delta });
    }
    let mut components = Vec::new();
    let mut sum_sq = 0.0;
    for label in group.parabolic_labels() {
        let gen = group.generator(label);
        let cusp = gen.cusp().expect("parabolic label");
        let phi_p = solver.phi(group, cusp.p)?.value;
        let w_pow = cusp.w.powf(-delta);
        let comp = phi_p * w_pow;
        components.push((gen.name.clone(), phi_p, w_pow, comp));
        sum_sq += comp * comp;
    }
    Ok(KappaEstimate {
        kappa: sum_sq / ((2.0 * delta - 1.0) * mu_d.value),
        route: KappaRoute::DirectFormula,
        components,
        mu_d: mu_d.value,
        delta_used: delta,
        tail_masses: Vec::new(),
        tail_slope: None,
    })
}

/// Kappa via the tail law: fit C n^(-2 delta) to the masses of
/// {X_1 = 1, X_2 = n} and normalize like the direct route.
///
/// The cylinder [g_1 gamma^n g_2 ...] carries the mass
/// integral over a_{g_2} of |(g_1 gamma^n)'|^delta Phi(g_1 gamma^n xi),
/// by conformality of the measure; summing over admissible g_2 turns the
/// domain into the complement of the tangent pair. Evaluating that as a
/// Phi-weighted atom sum keeps every integration point in well-covered
/// regions, so the estimate does not degrade with n the way raw atom
/// counts in deep cylinders do. The free log-log slope is kept as a
/// diagnostic; the prefactor C is fitted with the exponent pinned to
/// -2 delta.
pub fn kappa_tail(
    group: &FuchsianGroup,
    atoms: &PattersonAtoms,
    solver: &PhiSolver,
    mu_d: &MuDMass,
    n_min: u64,
    n_max: u64,
    stride: usize,
) -> Result<KappaEstimate, PattersonError> {
    let delta = solver.delta();
    if delta <= 0.5 || delta > 1.0 + 1e-9 {
        return Err(PattersonError::DeltaOutOfRange { delta });
    }
    if n_min < 2 {
        return Err(PattersonError::InsufficientTailMass {
            why: "n_min must be at least 2".into(),
        });
    }
    if n_max < n_min + 3 {
        return Err(PattersonError::InsufficientTailMass {
            why: format!("tail range [{n_min}, {n_max}] has fewer than 4 points"),
        });
    }
    if atoms.len() < 64 {
        return Err(PattersonError::InsufficientTailMass {
            why: format!("only {} atoms", atoms.len()),
        });
    }

    let mut masses: Vec<(u64, f64)> = (n_min..=n_max).map(|n| (n, 0.0)).collect();
    for pair in 0..group.n_pairs() {
        let plus = GeneratorLabel {
            pair: pair as u16,
            inverse: false,
        };
        let cusp = match group.generator(plus).cusp() {
            Some(c) => c,
            None => continue,
        };
        let iv_plus = group.generator(plus).interval;
        let iv_minus = group.generator(plus.inv()).interval;

        // strata of atoms outside the tangent pair, built once per cusp
        let mut taken: Vec<usize> = (0..atoms.len())
            .filter(|&i| {
                let p = atoms.positions[i];
                !iv_plus.contains(p) && !iv_minus.contains(p) && p != cusp.p
            })
            .collect();
        taken.sort_by(|&a, &b| {
            atoms.positions[a]
                .partial_cmp(&atoms.positions[b])
                .unwrap()
        });
        let mut strata: Vec<(f64, f64)> = Vec::new();
        let mut k = 0usize;
        while k < taken.len() {
            let slot = group.locate(atoms.positions[taken[k]]);
            let mut mass = 0.0;
            let mut cm = 0.0;
            let mut cnt = 0;
            while k < taken.len() && cnt < stride.max(1) {
                let i = taken[k];
                if group.locate(atoms.positions[i]) != slot {
                    break;
                }
                mass += atoms.weights[i];
                cm += atoms.weights[i] * atoms.positions[i];
                cnt += 1;
                k += 1;
            }
            if mass > 0.0 {
                strata.push((cm / mass, mass));
            }
        }
        if strata.is_empty() {
            continue;
        }

        let others: Vec<&crate::group::Generator> = group
            .generators()
            .iter()
            .filter(|g| g.label.pair != plus.pair)
            .collect();

        for orientation in [plus, plus.inv()] {
            let per_n: Vec<f64> = masses
                .par_iter()
                .map(|&(n, _)| {
                    let power = if orientation.inverse {
                        -(n as i64)
                    } else {
                        n as i64
                    };
                    let mut acc = 0.0;
                    for &(x, mass) in &strata {
                        let y = match cusp.power_apply(power, x) {
                            Ok(v) => v,
                            Err(_) => continue,
                        };
                        let dp = match cusp.power_derivative(power, x) {
                            Ok(v) => v,
                            Err(_) => continue,
                        };
                        for g1 in &others {
                            let z = match g1.matrix.apply(y) {
                                Ok(v) => v,
                                Err(_) => continue,
                            };
                            let d1 = match g1.matrix.derivative(y) {
                                Ok(v) => v,
                                Err(_) => continue,
                            };
                            let phi = match solver.phi(group, z) {
                                Ok(v) => v.value,
                                Err(_) => continue,
                            };
                            acc += mass * (dp * d1).powf(delta) * phi;
                        }
                    }
                    acc
                })
                .collect();
            for (slot, v) in masses.iter_mut().zip(&per_n) {
                slot.1 += v;
            }
        }
    }

    if masses.iter().any(|&(_, m)| !(m > 0.0)) {
        return Err(PattersonError::InsufficientTailMass {
            why: "a tail cylinder received no mass".into(),
        });
    }
    let pts: Vec<(f64, f64)> = masses
        .iter()
        .map(|&(n, m)| ((n as f64).ln(), m.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ln_c = masses
        .iter()
        .map(|&(nn, m)| m.ln() + 2.0 * delta * (nn as f64).ln())
        .sum::<f64>()
        / n;
    Ok(KappaEstimate {
        kappa: ln_c.exp() / ((2.0 * delta - 1.0) * mu_d.value),
        route: KappaRoute::TailFit,
        components: Vec::new(),
        mu_d: mu_d.value,
        delta_used: delta,
        tail_masses: masses,
        tail_slope: Some(slope),
    })
}

/// Refines delta by locating the zero of the mean signed fixpoint
/// residual over the cusps.
///
/// The identity holds exactly for the true measure at the true exponent
/// and its residual is monotone in the exponent used, so its crossing is
/// a second, independent read of delta from the same atoms. Falls back
/// with an error when the residual does not change sign on [lo, hi].
pub fn refine_delta_fixpoint(
    group: &FuchsianGroup,
    atoms: &PattersonAtoms,
    lo: f64,
    hi: f64,
) -> Result<f64, PattersonError> {
    let mean_res = |d: f64| -> Result<f64, PattersonError> {
        let solver = PhiSolver::new(group, atoms, d);
        let mut acc = 0.0;
        let mut n = 0usize;
        for gamma in group.parabolic_labels().filter(|l| !l.inverse) {
            let fx = check_fixpoint_identity(group, &solver, gamma)?;
            acc += (fx.lhs - fx.rhs) / fx.rhs;
            n += 1;
        }
        Ok(acc / n as f64)
    };
    let (mut a, mut b) = (lo, hi);
    let ra = mean_res(a)?;
    let rb = mean_res(b)?;
    if ra.signum() == rb.signum() {
        return Err(PattersonError::NonConvergentFit {
            why: format!(
                "fixpoint residual does not change sign on [{a}, {b}]: {ra:.4}, {rb:.4}"
            ),
        });
    }
    for _ in 0..28 {
        let mid = 0.5 * (a + b);
        if mean_res(mid)?.signum() == ra.signum() {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Settings for a full two-route kappa study.
#[derive(Debug, Clone)]
pub struct KappaStudyConfig {
    /// Word depth for the counting delta estimate.
    pub delta_depth: usize,
    /// Atom depths, shallowest first; the deepest carries the headline
    /// numbers, the others feed uncertainties and residual trends.
    pub atom_depths: Vec<usize>,
    pub s_margin: f64,
    pub n_min: u64,
    pub n_max: u64,
    /// Stratum size for the mass quadratures.
    pub stride: usize,
    /// Stratum size for the tail-cylinder quadrature, whose integrand is
    /// smooth enough for much coarser strata.
    pub tail_stride: usize,
    pub budget: u64,
}

impl Default for KappaStudyConfig {
    fn default() -> Self {
        KappaStudyConfig {
            delta_depth: 10,
            atom_depths: vec![5, 6, 7],
            s_margin: DEFAULT_S_MARGIN,
            n_min: 2,
            n_max: 16,
            stride: 64,
            tail_stride: 512,
            budget: 1 << 29,
        }
    }
}

/// Per-depth numbers of a kappa study, all evaluated at the study's
/// reference delta.
#[derive(Debug, Clone)]
pub struct KappaDepthResult {
    pub depth: usize,
    pub n_atoms: usize,
    /// Worst fixpoint residual over the cusps.
    pub fixpoint_worst: f64,
    pub kappa_direct: f64,
    pub kappa_tail: f64,
    pub tail_slope: f64,
}

/// Outcome of a two-route kappa study.
#[derive(Debug, Clone)]
pub struct KappaStudy {
    pub delta_counting: DeltaEstimate,
    /// Reference exponent: the fixpoint-identity refinement at the
    /// deepest atom set when it brackets, otherwise the counting value.
    pub delta: f64,
    pub delta_refined: bool,
    pub per_depth: Vec<KappaDepthResult>,
    /// Headline estimates at the deepest configured atom set.
    pub direct: KappaEstimate,
    pub tail: KappaEstimate,
    /// Half the change between the two deepest depths, per route.
    pub uncertainty_direct: f64,
    pub uncertainty_tail: f64,
}

/// Runs the whole kappa pipeline: counting delta, fixpoint refinement at
/// the deepest atom set, then both routes at every configured depth with
/// the same reference exponent.
pub fn kappa_study(
    group: &FuchsianGroup,
    cfg: &KappaStudyConfig,
) -> Result<KappaStudy, PattersonError> {
    assert!(!cfg.atom_depths.is_empty());
    let delta_counting = estimate_delta(group, cfg.delta_depth, cfg.budget)?;
    let deepest = *cfg.atom_depths.iter().max().unwrap();
    let s = delta_counting.delta + cfg.s_margin;

    let atoms_deep = patterson_atoms(group, s, deepest, cfg.budget)?;
    let (delta, delta_refined) = match refine_delta_fixpoint(group, &atoms_deep, 0.52, 0.98) {
        Ok(d) => (d, true),
        Err(_) => (delta_counting.delta, false),
    };
    if delta <= 0.5 || delta > 1.0 {
        return Err(PattersonError::DeltaOutOfRange { delta });
    }

    let mut per_depth = Vec::new();
    let mut headline: Option<(KappaEstimate, KappaEstimate)> = None;
    let mut prev: Option<(f64, f64)> = None;
    let mut uncertainty = (f64::NAN, f64::NAN);
    for &depth in &cfg.atom_depths {
        let atoms = if depth == deepest {
            atoms_deep.clone()
        } else {
            patterson_atoms(group, s, depth, cfg.budget)?
        };
        let blocks = atom_blocks(group, &atoms);
        let solver = PhiSolver::new(group, &atoms, delta);
        let fixpoint_worst = group
            .parabolic_labels()
            .filter(|l| !l.inverse)
            .map(|gamma| {
                check_fixpoint_identity(group, &solver, gamma)
                    .map(|f| f.relative_residual)
                    .unwrap_or(f64::NAN)
            })
            .fold(0.0f64, f64::max);
        let mu = mu_d_mass(group, &atoms, &blocks, &solver, cfg.stride);
        let direct = kappa_direct(group, &solver, &mu)?;
        let tail = kappa_tail(
            group,
            &atoms,
            &solver,
            &mu,
            cfg.n_min,
            cfg.n_max,
            cfg.tail_stride,
        )?;
        per_depth.push(KappaDepthResult {
            depth,
            n_atoms: atoms.len(),
            fixpoint_worst,
            kappa_direct: direct.kappa,
            kappa_tail: tail.kappa,
            tail_slope: tail.tail_slope.unwrap_or(f64::NAN),
        });
        if let Some((pd, pt)) = prev {
            uncertainty = (
                0.5 * (direct.kappa - pd).abs(),
                0.5 * (tail.kappa - pt).abs(),
            );
        }
        prev = Some((direct.kappa, tail.kappa));
        if depth == deepest {
            headline = Some((direct, tail));
        }
    }
    let (direct, tail) = headline.expect("deepest depth ran");
    Ok(KappaStudy {
        delta_counting,
        delta,
        delta_refined,
        per_depth,
        direct,
        tail,
        uncertainty_direct: uncertainty.0,
        uncertainty_tail: uncertainty.1,
    })
}

/// Shadow-lemma diagnostic: ratio of atomic shadow mass to the
/// exponential estimate along the ray towards xi.
pub fn shadow_ratio_diagnostic(
    group: &FuchsianGroup,
    atoms: &PattersonAtoms,
    delta: f64,
    xi: f64,
    t_grid: &[f64],
    radius: f64,
    orbit_depth: usize,
    budget: u64,
) -> Result<Vec<(f64, f64)>, PattersonError> {
    let mut orbit_pts: Vec<HalfPlanePoint> = vec![HalfPlanePoint::basepoint()];
    group.for_each_word(orbit_depth, budget, |_, m, _| {
        orbit_pts.push(m.orbit_point());
    })?;

    let mut out = Vec::new();
    for &t in t_grid {
        let zt = ray_point(xi, t);
        let dist_to_ray = |eta: f64| -> f64 {
            if (eta - xi).abs() < 1e-300 || eta.abs() < 1e-300 {
                return 0.0;
            }
            dist_to_geodesic(zt, eta, -1.0 / eta)
        };
        let edge = |dir: f64| -> f64 {
            let mut inside = xi;
            let mut step = 0.25;
            let mut outside = xi + dir * step;
            let mut guard = 0;
            while dist_to_ray(outside) <= radius && guard < 200 {
                step *= 2.0;
                outside = xi + dir * step;
                guard += 1;
            }
            for _ in 0..70 {
                let mid = 0.5 * (inside + outside);
                if dist_to_ray(mid) <= radius {
                    inside = mid;
                } else {
                    outside = mid;
                }
            }
            0.5 * (inside + outside)
        };
        let (a, b) = (edge(-1.0), edge(1.0));
        let (left, right) = (a.min(b), a.max(b));
        let mass: f64 = atoms
            .positions
            .iter()
            .zip(&atoms.weights)
            .filter(|(&p, _)| left <= p && p <= right)
            .map(|(_, &w)| w)
            .sum();
        let d_orbit = orbit_pts
            .iter()
            .map(|&z| hyperbolic_distance(zt, z).unwrap_or(f64::INFINITY))
            .fold(f64::INFINITY, f64::min);
        let theory = ((1.0 - delta) * d_orbit - delta * t).exp();
        out.push((t, mass / theory));
    }
    Ok(out)
}

/// Conformality drift: atomic mass of g(A) against the integral of
/// |g'|^delta over A, which agree for the true measure.
pub fn conformality_drift(
    group: &FuchsianGroup,
    atoms: &PattersonAtoms,
    delta: f64,
    label: GeneratorLabel,
    test: Interval,
) -> f64 {
    let m = group.generator(label).matrix;
    let (ia, ib) = match (m.apply(test.lo), m.apply(test.hi)) {
        (Ok(a), Ok(b)) => (a.min(b), a.max(b)),
        _ => return f64::NAN,
    };
    let image = Interval::new(ia, ib);
    let num: f64 = atoms
        .positions
        .iter()
        .zip(&atoms.weights)
        .filter(|(&p, _)| image.contains(p))
        .map(|(_, &w)| w)
        .sum();
    let den: f64 = atoms
        .positions
        .iter()
        .zip(&atoms.weights)
        .filter(|(&p, _)| test.contains(p))
        .map(|(&p, &w)| w * m.derivative(p).map(|d| d.powf(delta)).unwrap_or(0.0))
        .sum();
    num / den
}

/// Two-cylinder letter statistics for the symbolic sampler: Phi-weighted
/// masses of (first block letter, second block letter) pairs and the
/// head of the second-block length law per parabolic letter.
#[derive(Debug, Clone)]
pub struct TwoCylinderStats {
    /// First-letter masses, by slot.
    pub letter_mass: Vec<f64>,
    /// Transition masses [from slot][to slot].
    pub transition: Vec<Vec<f64>>,
    /// Per slot: mass of second-block length k, k = 1..=head_len
    /// (nonzero only for parabolic slots).
    pub block_head: Vec<Vec<f64>>,
    pub head_len: u64,
}

pub fn two_cylinder_stats(
    group: &FuchsianGroup,
    atoms: &PattersonAtoms,
    blocks: &AtomBlocks,
    solver: &PhiSolver,
    stride: usize,
    head_len: u64,
) -> TwoCylinderStats {
    let n = group.n_letters();
    let mut letter_mass = vec![0.0; n];
    let mut transition = vec![vec![0.0; n]; n];
    let mut block_head = vec![vec![0.0; head_len as usize]; n];
    let idx: Vec<usize> = (0..atoms.len())
        .filter(|&i| blocks.first[i].is_some() && blocks.second[i].is_some())
        .step_by(stride.max(1))
        .collect();
    let phis: Vec<f64> = idx
        .par_iter()
        .map(|&i| {
            solver
                .phi(group, atoms.positions[i])
                .map(|p| p.value)
                .unwrap_or(0.0)
        })
        .collect();
    for (&i, &phi) in idx.iter().zip(&phis) {
        let (l1, _) = blocks.first[i].unwrap();
        let (l2, n2) = blocks.second[i].unwrap();
        let mass = atoms.weights[i] * phi;
        letter_mass[l1.slot()] += mass;
        transition[l1.slot()][l2.slot()] += mass;
        if group.generator(l2).is_parabolic() && n2 <= head_len {
            block_head[l2.slot()][(n2 - 1) as usize] += mass;
        }
    }
    TwoCylinderStats {
        letter_mass,
        transition,
        block_head,
        head_len,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{build_group, CuspSpec, GroupSpec};
    use approx::assert_relative_eq;

    fn single_cusp() -> FuchsianGroup {
        build_group(&GroupSpec {
            hyperbolic: vec![],
            parabolic: vec![CuspSpec { p: 0.0, w: 1.0 }],
        })
        .unwrap()
    }

    /// Two width-1 cusps mirror-placed around the basepoint.
    fn mirror_two_cusps() -> FuchsianGroup {
        build_group(&GroupSpec {
            hyperbolic: vec![],
            parabolic: vec![CuspSpec { p: -2.5, w: 1.0 }, CuspSpec { p: 2.5, w: 1.0 }],
        })
        .unwrap()
    }

    /// Three packed width-2 cusps, delta near 0.71.
    fn three_packed() -> FuchsianGroup {
        build_group(&GroupSpec {
            hyperbolic: vec![],
            parabolic: vec![
                CuspSpec { p: -2.1, w: 2.0 },
                CuspSpec { p: 0.0, w: 2.0 },
                CuspSpec { p: 2.1, w: 2.0 },
            ],
        })
        .unwrap()
    }

    #[test]
    fn poincare_partial_examples() {
        let g = single_cusp();
        assert_relative_eq!(poincare_partial(&g, 1.0, 0, 1 << 20).unwrap(), 1.0);
        // L=1: 1 + 2 exp(-d(i, gamma(i))) with cosh d = 3/2
        let d = 1.5_f64.acosh();
        assert_relative_eq!(
            poincare_partial(&g, 1.0, 1, 1 << 20).unwrap(),
            1.0 + 2.0 * (-d).exp(),
            epsilon = 1e-12
        );
        let g2 = mirror_two_cusps();
        let a = poincare_partial(&g2, 0.6, 6, 1 << 22).unwrap();
        let b = poincare_partial(&g2, 0.8, 6, 1 << 22).unwrap();
        let c = poincare_partial(&g2, 0.6, 7, 1 << 22).unwrap();
        assert!(b < a, "must decrease in s");
        assert!(c >= a, "must not decrease in depth");
    }

    #[test]
    fn delta_of_elementary_parabolic_is_half() {
        // the cyclic parabolic group has exponent 1/2 and must be flagged
        let g = single_cusp();
        let est = estimate_delta(&g, 40, 1 << 20).unwrap();
        assert!((est.delta - 0.5).abs() < 0.03, "delta = {}", est.delta);
        assert!(est.warn_delta_bound);
    }

    #[test]
    fn delta_of_packed_group_is_clearly_above_half() {
        let g = three_packed();
        let est = estimate_delta(&g, 8, 1 << 24).unwrap();
        assert!(est.delta > 0.6 && est.delta < 1.0, "delta = {}", est.delta);
        assert!(!est.warn_delta_bound);
        // self-consistency: deeper estimate within combined uncertainty
        let est10 = estimate_delta(&g, 10, 1 << 24).unwrap();
        assert!(
            (est10.delta - est.delta).abs() <= (est.uncertainty + est10.uncertainty).max(0.02),
            "delta moved {} -> {} with uncertainty {}",
            est.delta,
            est10.delta,
            est.uncertainty
        );
    }

    #[test]
    fn atoms_normalize_and_land_in_intervals() {
        let g = three_packed();
        let atoms = patterson_atoms(&g, 0.75, 6, 1 << 24).unwrap();
        let total: f64 = atoms.weights.iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        assert!(atoms.len() > 1000);
        for &p in atoms.positions.iter().take(5000) {
            let inside = g
                .generators()
                .iter()
                .any(|gen| gen.interval.closure_contains(p, 1e-9));
            assert!(inside, "atom at {p} is in a gap");
        }
    }

    #[test]
    fn atoms_reject_exponent_below_delta() {
        let mut g = mirror_two_cusps();
        g.set_delta(0.7).unwrap();
        assert!(matches!(
            patterson_atoms(&g, 0.65, 6, 1 << 22),
            Err(PattersonError::ExponentTooSmall { .. })
        ));
    }

    #[test]
    fn phi_direct_sum_example() {
        let g = mirror_two_cusps();
        // cusp intervals: (-4.5,-2.5),(-2.5,-0.5),(0.5,2.5),(2.5,4.5)
        let atoms = PattersonAtoms {
            positions: vec![1.0, -1.0],
            weights: vec![0.5, 0.5],
            exponent_s: 0.77,
            depth: 1,
            skipped: 0,
        };
        // at the fixed point 2.5 the exclusion is (0.5,2.5) u (2.5,4.5):
        // the atom at 1.0 is excluded, the atom at -1.0 contributes
        let phi = phi_at(&g, &atoms, 0.75, 2.5).unwrap();
        assert_relative_eq!(phi.value, 0.5 * (3.5_f64 * 3.5).powf(-0.75), epsilon = 1e-12);

        // a gap point that is no fixed point has no exclusion region
        assert!(matches!(
            phi_at(&g, &atoms, 0.75, 0.0),
            Err(PattersonError::ExclusionUndefined { .. })
        ));
    }

    #[test]
    fn phi_solver_matches_exact_sum() {
        let g = three_packed();
        let atoms = patterson_atoms(&g, 0.78, 7, 1 << 24).unwrap();
        let delta = 0.71;
        let solver = PhiSolver::new(&g, &atoms, delta);
        // evaluation points: fixed points, mapped fixed points, interior
        let mut points = vec![0.0, -2.1, 2.1, 1.3, -0.4, 0.77];
        for gen in g.generators().iter().take(2) {
            points.push(gen.matrix.apply(2.1).unwrap());
        }
        for xi in points {
            let exact = match phi_at(&g, &atoms, delta, xi) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let fast = solver.phi(&g, xi).unwrap();
            assert_relative_eq!(fast.value, exact.value, max_relative = 2e-3);
        }
    }

    #[test]
    fn phi_at_fixed_points_positive_finite() {
        let g = three_packed();
        let atoms = patterson_atoms(&g, 0.75, 7, 1 << 24).unwrap();
        let solver = PhiSolver::new(&g, &atoms, 0.71);
        for label in g.parabolic_labels() {
            let p = g.generator(label).cusp().unwrap().p;
            let phi = solver.phi(&g, p).unwrap();
            assert!(phi.value.is_finite() && phi.value > 0.0);
            assert!(phi.discarded_mass < 1e-3);
        }
    }

    #[test]
    fn kappa_internal_identity_and_symmetry() {
        let g = mirror_two_cusps();
        let est = estimate_delta(&g, 12, 1 << 24).unwrap();
        let atoms = patterson_atoms(&g, est.delta + 0.02, 9, 1 << 24).unwrap();
        let blocks = atom_blocks(&g, &atoms);
        let solver = PhiSolver::new(&g, &atoms, est.delta);
        let mu = mu_d_mass(&g, &atoms, &blocks, &solver, 7);
        assert!(mu.value > 0.0);
        let k = kappa_direct(&g, &solver, &mu).unwrap();
        let sum_sq: f64 = k.components.iter().map(|c| c.3 * c.3).sum();
        assert_relative_eq!(
            k.kappa * (2.0 * est.delta - 1.0) * mu.value,
            sum_sq,
            max_relative = 1e-10
        );
        // mirror-placed cusps: the four components agree
        let c0 = k.components[0].3;
        for c in &k.components {
            assert_relative_eq!(c.3, c0, max_relative = 0.05);
        }
    }

    #[test]
    fn kappa_rejects_bad_delta() {
        let g = mirror_two_cusps();
        let atoms = patterson_atoms(&g, 0.75, 6, 1 << 22).unwrap();
        let solver = PhiSolver::new(&g, &atoms, 0.5);
        let mu = MuDMass {
            value: 1.0,
            censored_mass: 0.0,
            evaluations: 1,
        };
        assert!(matches!(
            kappa_direct(&g, &solver, &mu),
            Err(PattersonError::DeltaOutOfRange { .. })
        ));
    }

    #[test]
    fn tail_fit_insufficient_on_degenerate_input() {
        let g = three_packed();
        let atoms = patterson_atoms(&g, 0.75, 2, 1 << 22).unwrap();
        let blocks = atom_blocks(&g, &atoms);
        let solver = PhiSolver::new(&g, &atoms, 0.71);
        let mu = mu_d_mass(&g, &atoms, &blocks, &solver, 3);
        // too few atoms
        assert!(matches!(
            kappa_tail(&g, &atoms, &solver, &mu, 2, 16, 1),
            Err(PattersonError::InsufficientTailMass { .. })
        ));
        // too narrow an n-range
        let atoms = patterson_atoms(&g, 0.75, 5, 1 << 22).unwrap();
        let solver = PhiSolver::new(&g, &atoms, 0.71);
        assert!(matches!(
            kappa_tail(&g, &atoms, &solver, &mu, 2, 3, 1),
            Err(PattersonError::InsufficientTailMass { .. })
        ));
    }

    #[test]
    fn mu_d_excludes_long_first_blocks() {
        let g = three_packed();
        let atoms = patterson_atoms(&g, 0.75, 7, 1 << 24).unwrap();
        let blocks = atom_blocks(&g, &atoms);
        let long_first = (0..atoms.len())
            .filter(|&i| matches!(blocks.first[i], Some((_, n)) if n >= 2))
            .count();
        assert!(long_first > 0, "depth 7 must produce long first blocks");
        let solver = PhiSolver::new(&g, &atoms, 0.71);
        let mu = mu_d_mass(&g, &atoms, &blocks, &solver, 1);
        assert!(mu.value > 0.0);
        assert!(mu.censored_mass < 0.05, "censored {}", mu.censored_mass);
    }

    #[test]
    fn weights_invariant_under_generator_relabeling() {
        let spec_a = GroupSpec {
            hyperbolic: vec![],
            parabolic: vec![CuspSpec { p: -2.5, w: 1.0 }, CuspSpec { p: 2.5, w: 1.0 }],
        };
        let spec_b = GroupSpec {
            hyperbolic: vec![],
            parabolic: vec![CuspSpec { p: 2.5, w: 1.0 }, CuspSpec { p: -2.5, w: 1.0 }],
        };
        let ga = build_group(&spec_a).unwrap();
        let gb = build_group(&spec_b).unwrap();
        let aa = patterson_atoms(&ga, 0.8, 6, 1 << 22).unwrap();
        let ab = patterson_atoms(&gb, 0.8, 6, 1 << 22).unwrap();
        let mut pa: Vec<(f64, f64)> = aa
            .positions
            .iter()
            .copied()
            .zip(aa.weights.iter().copied())
            .collect();
        let mut pb: Vec<(f64, f64)> = ab
            .positions
            .iter()
            .copied()
            .zip(ab.weights.iter().copied())
            .collect();
        pa.sort_by(|x, y| x.partial_cmp(y).unwrap());
        pb.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(pa.len(), pb.len());
        for (x, y) in pa.iter().zip(&pb) {
            assert_relative_eq!(x.0, y.0, epsilon = 1e-9);
            assert_relative_eq!(x.1, y.1, epsilon = 1e-12);
        }
    }
}
