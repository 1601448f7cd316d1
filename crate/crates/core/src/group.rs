//! Essentially free Fuchsian groups from generator data.
//!
//! A group is specified by hyperbolic generator matrices and parabolic cusps
//! (fixed point and width). Each generator g gets the open boundary interval
//! a_g spanned by its isometric circle; the free-product ping-pong structure
//! then makes the piecewise map T|_{a_g} = g a Markov map whose key law
//! T(a_g) = complement of the closure of a_{g^-1} is verified numerically at
//! build time.

use crate::hyperbolic::{
    cusp_of, HypError, Mobius, MobiusClass, ParabolicCusp,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Absolute tolerance for the parabolic tangency and Markov residuals.
pub const MARKOV_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Error)]
pub enum GroupError {
    #[error("group must contain at least one parabolic cusp")]
    NoParabolicCusp,
    #[error("generator {index} is not hyperbolic (class {class:?})")]
    NotHyperbolic { index: usize, class: MobiusClass },
    #[error("generator {name} is affine (c = 0) and fixes infinity")]
    AffineGenerator { name: String },
    #[error("basepoint i lies inside the isometric circle of {name}")]
    BasepointInsideCircle { name: String },
    #[error("ping-pong violation: intervals of {a} and {b} overlap")]
    PingPongViolation { a: String, b: String },
    #[error("parabolic pair {name} is not tangent exactly at its fixed point")]
    TangencyViolation { name: String },
    #[error("Markov law fails for pair ({a}, {b}) with residual {residual:e}")]
    MarkovViolation { a: String, b: String, residual: f64 },
    #[error("word count {count} for length {max_len} exceeds budget {budget}")]
    DepthTooLarge {
        max_len: usize,
        count: u128,
        budget: u64,
    },
    #[error("delta = {delta} is not in (1/2, 1]")]
    DeltaOutOfRange { delta: f64 },
    #[error(transparent)]
    Hyperbolic(#[from] HypError),
}

/// Label of one element of the symmetric generator set.
///
/// `pair` indexes the generator pair (hyperbolic pairs first, in input
/// order, then parabolic pairs); `inverse` selects the orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GeneratorLabel {
    pub pair: u16,
    pub inverse: bool,
}

impl GeneratorLabel {
    /// The involution g -> g^-1.
    pub fn inv(self) -> Self {
        GeneratorLabel {
            pair: self.pair,
            inverse: !self.inverse,
        }
    }

    /// Position in the group's slot table.
    pub fn slot(self) -> usize {
        2 * self.pair as usize + self.inverse as usize
    }

    pub fn from_slot(slot: usize) -> Self {
        GeneratorLabel {
            pair: (slot / 2) as u16,
            inverse: slot % 2 == 1,
        }
    }
}

/// An open boundary interval (lo, hi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo < hi && lo.is_finite() && hi.is_finite());
        Interval { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn closure_contains(&self, x: f64, tol: f64) -> bool {
        self.lo - tol <= x && x <= self.hi + tol
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Distance of x outside the closure (0 when inside).
    pub fn outside_by(&self, x: f64) -> f64 {
        (self.lo - x).max(x - self.hi).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorKind {
    Hyperbolic,
    Parabolic(ParabolicCusp),
}

/// One element of the symmetric generator set with its boundary data.
#[derive(Debug, Clone)]
pub struct Generator {
    pub label: GeneratorLabel,
    pub name: String,
    pub matrix: Mobius,
    pub interval: Interval,
    pub kind: GeneratorKind,
}

impl Generator {
    pub fn is_parabolic(&self) -> bool {
        matches!(self.kind, GeneratorKind::Parabolic(_))
    }

    pub fn cusp(&self) -> Option<ParabolicCusp> {
        match self.kind {
            GeneratorKind::Parabolic(c) => Some(c),
            GeneratorKind::Hyperbolic => None,
        }
    }
}

/// Raw input data for a group, as read from a group-spec file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GroupSpec {
    /// Hyperbolic generators as matrix rows [a, b, c, d].
    #[serde(default)]
    pub hyperbolic: Vec<[f64; 4]>,
    /// Parabolic cusps.
    pub parabolic: Vec<CuspSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CuspSpec {
    pub p: f64,
    pub w: f64,
}

impl GroupSpec {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("group spec serializes")
    }

    /// Hex digest of the canonicalized spec, embedded in caches and reports.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for m in &self.hyperbolic {
            for v in m {
                hasher.update(format!("{v:.17e};"));
            }
        }
        hasher.update("|");
        for c in &self.parabolic {
            hasher.update(format!("{:.17e},{:.17e};", c.p, c.w));
        }
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A validated essentially free Fuchsian group with its Markov intervals.
#[derive(Debug, Clone)]
pub struct FuchsianGroup {
    generators: Vec<Generator>,
    /// Slot indices sorted by interval lower endpoint, for point location.
    sorted_slots: Vec<usize>,
    n_hyperbolic_pairs: usize,
    n_parabolic_pairs: usize,
    delta: Option<f64>,
    digest: String,
}

impl FuchsianGroup {
    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn generator(&self, label: GeneratorLabel) -> &Generator {
        &self.generators[label.slot()]
    }

    /// Number of elements of the symmetric generator set.
    pub fn n_letters(&self) -> usize {
        self.generators.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.n_hyperbolic_pairs + self.n_parabolic_pairs
    }

    pub fn n_parabolic_pairs(&self) -> usize {
        self.n_parabolic_pairs
    }

    /// Labels of the symmetric parabolic generator set.
    pub fn parabolic_labels(&self) -> impl Iterator<Item = GeneratorLabel> + '_ {
        self.generators
            .iter()
            .filter(|g| g.is_parabolic())
            .map(|g| g.label)
    }

    pub fn labels(&self) -> impl Iterator<Item = GeneratorLabel> + '_ {
        self.generators.iter().map(|g| g.label)
    }

    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    /// Records the estimated exponent of convergence; must exceed 1/2.
    pub fn set_delta(&mut self, delta: f64) -> Result<(), GroupError> {
        if delta <= 0.5 || delta > 1.0 + 1e-9 {
            return Err(GroupError::DeltaOutOfRange { delta });
        }
        self.delta = Some(delta);
        Ok(())
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// The generator whose open interval contains x, if any.
    ///
    /// Parabolic fixed points are shared endpoints of two intervals and
    /// locate in neither (`None`).
    pub fn locate(&self, x: f64) -> Option<GeneratorLabel> {
        if !x.is_finite() {
            return None;
        }
        // binary search over the lo-sorted disjoint intervals
        let mut lo = 0usize;
        let mut hi = self.sorted_slots.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.generators[self.sorted_slots[mid]].interval.lo < x {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        if lo == 0 {
            return None;
        }
        let g = &self.generators[self.sorted_slots[lo - 1]];
        if g.interval.contains(x) {
            Some(g.label)
        } else {
            None
        }
    }

    /// Total word count for reduced words of length <= max_len.
    pub fn word_count(&self, max_len: usize) -> u128 {
        let k = self.n_letters() as u128;
        if k == 0 {
            return 1;
        }
        let mut total = 1u128;
        let mut shell = k;
        for _ in 0..max_len {
            total += shell;
            shell = shell.saturating_mul(k - 1);
        }
        total
    }
}

/// Constructs the group: intervals from isometric circles, parabolic data
/// from the cusp normal form, then full invariant validation.
pub fn build_group(spec: &GroupSpec) -> Result<FuchsianGroup, GroupError> {
    if spec.parabolic.is_empty() {
        return Err(GroupError::NoParabolicCusp);
    }
    let digest = spec.digest();
    let mut generators = Vec::new();
    let n_h = spec.hyperbolic.len();

    let push_pair = |pair: usize,
                         name: &str,
                         m: Mobius,
                         kind: GeneratorKind,
                         generators: &mut Vec<Generator>|
     -> Result<(), GroupError> {
        for (inverse, mat) in [(false, m), (true, m.inverse())] {
            let label = GeneratorLabel {
                pair: pair as u16,
                inverse,
            };
            let name = if inverse {
                format!("{name}'")
            } else {
                name.to_string()
            };
            if mat.c.abs() < 1e-9 {
                return Err(GroupError::AffineGenerator { name });
            }
            let (center, radius) = mat.isometric_circle()?;
            generators.push(Generator {
                label,
                name,
                matrix: mat,
                interval: Interval::new(center - radius, center + radius),
                kind,
            });
        }
        Ok(())
    };

    for (j, rows) in spec.hyperbolic.iter().enumerate() {
        let m = Mobius::new(rows[0], rows[1], rows[2], rows[3])?;
        let class = m.classify();
        if class != MobiusClass::Hyperbolic {
            return Err(GroupError::NotHyperbolic { index: j, class });
        }
        push_pair(
            j,
            &format!("h{}", j + 1),
            m,
            GeneratorKind::Hyperbolic,
            &mut generators,
        )?;
    }
    for (j, c) in spec.parabolic.iter().enumerate() {
        let cusp = ParabolicCusp::new(c.p, c.w);
        let m = cusp.generator();
        // belt-and-braces: the normal form must round-trip
        let (back, _) = cusp_of(&m)?;
        debug_assert!((back.p - cusp.p).abs() <= 1e-9 * (1.0 + cusp.p.abs()));
        push_pair(
            n_h + j,
            &format!("g{}", j + 1),
            m,
            GeneratorKind::Parabolic(cusp),
            &mut generators,
        )?;
    }

    // snap parabolic tangency endpoints to the fixed point exactly
    for g in generators.iter_mut() {
        if let GeneratorKind::Parabolic(cusp) = g.kind {
            let (near, other) = if !g.label.inverse {
                // positive orientation: interval (p - 2/w, p)
                (g.interval.hi, g.interval.lo)
            } else {
                (g.interval.lo, g.interval.hi)
            };
            if (near - cusp.p).abs() > MARKOV_TOL {
                return Err(GroupError::TangencyViolation {
                    name: g.name.clone(),
                });
            }
            g.interval = if !g.label.inverse {
                Interval::new(other, cusp.p)
            } else {
                Interval::new(cusp.p, other)
            };
        }
    }

    // pairwise disjoint closures, except each parabolic pair tangent at p
    let mut order: Vec<usize> = (0..generators.len()).collect();
    order.sort_by(|&a, &b| {
        generators[a]
            .interval
            .lo
            .partial_cmp(&generators[b].interval.lo)
            .unwrap()
    });
    for win in order.windows(2) {
        let (ga, gb) = (&generators[win[0]], &generators[win[1]]);
        let gap = gb.interval.lo - ga.interval.hi;
        let tangent_pair = ga.label.pair == gb.label.pair && ga.is_parabolic();
        if tangent_pair {
            // endpoints were snapped to p above; they must coincide
            if ga.interval.hi != gb.interval.lo {
                return Err(GroupError::TangencyViolation {
                    name: ga.name.clone(),
                });
            }
        } else if gap <= MARKOV_TOL {
            return Err(GroupError::PingPongViolation {
                a: ga.name.clone(),
                b: gb.name.clone(),
            });
        }
    }

    // the basepoint i must lie strictly outside every circle, |c i + d| > 1
    for g in &generators {
        if g.matrix.c * g.matrix.c + g.matrix.d * g.matrix.d <= 1.0 + 1e-9 {
            return Err(GroupError::BasepointInsideCircle {
                name: g.name.clone(),
            });
        }
    }

    let group = FuchsianGroup {
        sorted_slots: order,
        n_hyperbolic_pairs: n_h,
        n_parabolic_pairs: spec.parabolic.len(),
        generators,
        delta: None,
        digest,
    };

    // the Markov law itself
    let report = validate_markov(&group);
    if let Some(worst) = report.failures(MARKOV_TOL).first() {
        return Err(GroupError::MarkovViolation {
            a: worst.g.clone(),
            b: worst.h.clone(),
            residual: worst.residual,
        });
    }
    Ok(group)
}

/// One checked pair in a [`ValidationReport`].
#[derive(Debug, Clone)]
pub struct PairResidual {
    pub g: String,
    pub h: String,
    pub residual: f64,
}

/// Result of the Markov-law validation.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// Containment residuals: inv(g) must map the endpoints of a_h into
    /// the closure of a_g, for every h != inv(g).
    pub containment: Vec<PairResidual>,
    /// Orientation residuals: g maps the endpoints of a_g onto the
    /// endpoints of the complement of a_{inv(g)}.
    pub complement: Vec<PairResidual>,
    pub max_residual: f64,
}

impl ValidationReport {
    pub fn pass(&self, tol: f64) -> bool {
        self.max_residual <= tol
    }

    pub fn failures(&self, tol: f64) -> Vec<&PairResidual> {
        let mut v: Vec<&PairResidual> = self
            .containment
            .iter()
            .chain(self.complement.iter())
            .filter(|p| p.residual > tol)
            .collect();
        v.sort_by(|a, b| b.residual.partial_cmp(&a.residual).unwrap());
        v
    }
}

/// Validates the Markov law against the group's own intervals.
pub fn validate_markov(group: &FuchsianGroup) -> ValidationReport {
    let intervals: Vec<Interval> = group.generators.iter().map(|g| g.interval).collect();
    validate_markov_with(group, &intervals)
}

/// Validates the Markov law against a supplied interval table (slot order).
///
/// This is the fault-injection entry point: perturb one interval and the
/// report names the offending pair.
pub fn validate_markov_with(group: &FuchsianGroup, intervals: &[Interval]) -> ValidationReport {
    let mut containment = Vec::new();
    let mut complement = Vec::new();
    let mut max_residual: f64 = 0.0;

    for g in group.generators() {
        let inv = group.generator(g.label.inv());
        let a_g = intervals[g.label.slot()];
        for h in group.generators() {
            if h.label == g.label.inv() {
                continue;
            }
            let a_h = intervals[h.label.slot()];
            let mut worst: f64 = 0.0;
            for e in [a_h.lo, a_h.hi] {
                let r = match inv.matrix.apply(e) {
                    Ok(img) => a_g.outside_by(img),
                    Err(_) => f64::INFINITY,
                };
                worst = worst.max(r);
            }
            max_residual = max_residual.max(worst);
            containment.push(PairResidual {
                g: g.name.clone(),
                h: h.name.clone(),
                residual: worst,
            });
        }

        // g carries the endpoints of a_g onto the endpoints of the
        // complement of a_{inv(g)}, orientation-reversed on the circle
        let a_t = intervals[inv.label.slot()];
        let r = match (g.matrix.apply(a_g.lo), g.matrix.apply(a_g.hi)) {
            (Ok(img_lo), Ok(img_hi)) => {
                let scale = 1.0_f64
                    .max(a_t.lo.abs())
                    .max(a_t.hi.abs());
                let direct = (img_lo - a_t.lo).abs().max((img_hi - a_t.hi).abs());
                let swapped = (img_lo - a_t.hi).abs().max((img_hi - a_t.lo).abs());
                direct.min(swapped) / scale
            }
            _ => f64::INFINITY,
        };
        max_residual = max_residual.max(r);
        complement.push(PairResidual {
            g: g.name.clone(),
            h: inv.name.clone(),
            residual: r,
        });
    }

    ValidationReport {
        containment,
        complement,
        max_residual,
    }
}

/// A reduced word together with its composed matrix and orbit distance.
#[derive(Debug, Clone)]
pub struct WordRecord {
    /// Letters as slot indices, first-applied letter last (so the matrix is
    /// the left-to-right product of the letters as written).
    pub letters: Vec<u8>,
    pub matrix: Mobius,
    /// d(i, g(i)).
    pub dist: f64,
}

impl FuchsianGroup {
    /// Streams all reduced words of length 1..=max_len in depth-first
    /// lexicographic order, without materializing them.
    ///
    /// The callback receives (letters, matrix, dist). The identity word is
    /// not visited; callers that need it handle length 0 themselves.
    pub fn for_each_word<F>(&self, max_len: usize, budget: u64, mut f: F) -> Result<(), GroupError>
    where
        F: FnMut(&[u8], &Mobius, f64),
    {
        let count = self.word_count(max_len);
        if count > budget as u128 {
            return Err(GroupError::DepthTooLarge {
                max_len,
                count,
                budget,
            });
        }
        let mut letters: Vec<u8> = Vec::with_capacity(max_len);
        let mut stack: Vec<Mobius> = Vec::with_capacity(max_len);
        self.walk(max_len, &mut letters, &mut stack, &mut f);
        Ok(())
    }

    fn walk<F>(&self, max_len: usize, letters: &mut Vec<u8>, stack: &mut Vec<Mobius>, f: &mut F)
    where
        F: FnMut(&[u8], &Mobius, f64),
    {
        if letters.len() == max_len {
            return;
        }
        let blocked = letters
            .last()
            .map(|&s| GeneratorLabel::from_slot(s as usize).inv().slot());
        for slot in 0..self.generators.len() {
            if Some(slot) == blocked {
                continue;
            }
            let prefix = stack.last().copied().unwrap_or_else(Mobius::identity);
            let m = prefix.compose(&self.generators[slot].matrix);
            letters.push(slot as u8);
            stack.push(m);
            f(letters, &m, m.dist_to_basepoint());
            self.walk(max_len, letters, stack, f);
            letters.pop();
            stack.pop();
        }
    }

    /// Collects all reduced words of length 0..=max_len in breadth-first
    /// order (by length, lexicographic by slot within a length).
    pub fn enumerate_words(&self, max_len: usize, budget: u64) -> Result<Vec<WordRecord>, GroupError> {
        let count = self.word_count(max_len);
        if count > budget as u128 {
            return Err(GroupError::DepthTooLarge {
                max_len,
                count,
                budget,
            });
        }
        let mut by_len: Vec<Vec<WordRecord>> = (0..=max_len).map(|_| Vec::new()).collect();
        by_len[0].push(WordRecord {
            letters: Vec::new(),
            matrix: Mobius::identity(),
            dist: 0.0,
        });
        self.for_each_word(max_len, budget, |letters, m, dist| {
            by_len[letters.len()].push(WordRecord {
                letters: letters.to_vec(),
                matrix: *m,
                dist,
            });
        })?;
        Ok(by_len.into_iter().flatten().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::HashSet;

    pub fn single_cusp_spec() -> GroupSpec {
        GroupSpec {
            hyperbolic: vec![],
            parabolic: vec![CuspSpec { p: 0.0, w: 1.0 }],
        }
    }

    pub fn two_cusp_spec() -> GroupSpec {
        GroupSpec {
            hyperbolic: vec![],
            parabolic: vec![CuspSpec { p: 0.0, w: 1.0 }, CuspSpec { p: 5.0, w: 1.0 }],
        }
    }

    #[test]
    fn single_cusp_intervals() {
        let g = build_group(&single_cusp_spec()).unwrap();
        let pos = g.generator(GeneratorLabel { pair: 0, inverse: false });
        let neg = g.generator(GeneratorLabel { pair: 0, inverse: true });
        assert_relative_eq!(pos.interval.lo, -2.0);
        assert_relative_eq!(pos.interval.hi, 0.0);
        assert_relative_eq!(neg.interval.lo, 0.0);
        assert_relative_eq!(neg.interval.hi, 2.0);

        // gamma maps (-2, 0) onto the complement of [0, 2]: endpoints swap
        let m = pos.matrix;
        assert_relative_eq!(m.apply(-2.0).unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(m.apply(0.0).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn two_cusp_intervals_tangent() {
        let g = build_group(&two_cusp_spec()).unwrap();
        let ivs: Vec<Interval> = g.generators().iter().map(|x| x.interval).collect();
        assert_eq!(ivs.len(), 4);
        // tangencies exactly at 0 and 5
        assert_eq!(ivs[0].hi, 0.0);
        assert_eq!(ivs[1].lo, 0.0);
        assert_eq!(ivs[2].hi, 5.0);
        assert_eq!(ivs[3].lo, 5.0);
    }

    #[test]
    fn overlapping_cusps_rejected() {
        let spec = GroupSpec {
            hyperbolic: vec![],
            parabolic: vec![CuspSpec { p: 0.0, w: 1.0 }, CuspSpec { p: 1.0, w: 1.0 }],
        };
        assert!(matches!(
            build_group(&spec),
            Err(GroupError::PingPongViolation { .. })
        ));
    }

    #[test]
    fn empty_spec_rejected() {
        let spec = GroupSpec {
            hyperbolic: vec![],
            parabolic: vec![],
        };
        assert!(matches!(build_group(&spec), Err(GroupError::NoParabolicCusp)));
    }

    #[test]
    fn markov_validation_passes() {
        let g = build_group(&two_cusp_spec()).unwrap();
        let report = validate_markov(&g);
        assert!(report.pass(MARKOV_TOL), "max residual {}", report.max_residual);
    }

    #[test]
    fn markov_fault_injection_names_pair() {
        let g = build_group(&two_cusp_spec()).unwrap();
        let mut ivs: Vec<Interval> = g.generators().iter().map(|x| x.interval).collect();
        ivs[0] = Interval::new(ivs[0].lo + 0.1, ivs[0].hi);
        let report = validate_markov_with(&g, &ivs);
        assert!(!report.pass(MARKOV_TOL));
        let failures = report.failures(MARKOV_TOL);
        assert!(!failures.is_empty());
        assert!(failures.iter().any(|p| p.g == "g1" || p.h == "g1"));
    }

    #[test]
    fn locate_examples() {
        let g = build_group(&single_cusp_spec()).unwrap();
        assert_eq!(
            g.locate(-1.0),
            Some(GeneratorLabel { pair: 0, inverse: false })
        );
        assert_eq!(g.locate(3.0), None);
        assert_eq!(g.locate(0.0), None); // the fixed point is a shared endpoint
    }

    #[test]
    fn word_counts() {
        let g = build_group(&single_cusp_spec()).unwrap();
        // 2 letters, 1 continuation each: 1 + 2L words
        assert_eq!(g.word_count(0), 1);
        assert_eq!(g.word_count(2), 5);
        let words = g.enumerate_words(2, 1 << 20).unwrap();
        assert_eq!(words.len(), 5);
        assert_eq!(words[0].letters.len(), 0);
        assert_relative_eq!(words[0].dist, 0.0);

        let g2 = build_group(&two_cusp_spec()).unwrap();
        // 4 letters: 1 + 4 + 12 + 36 = 53
        assert_eq!(g2.word_count(3), 53);
        assert_eq!(g2.enumerate_words(3, 1 << 20).unwrap().len(), 53);
    }

    #[test]
    fn word_budget_enforced() {
        let g = build_group(&two_cusp_spec()).unwrap();
        assert!(matches!(
            g.enumerate_words(10, 100),
            Err(GroupError::DepthTooLarge { .. })
        ));
    }

    #[test]
    fn words_are_duplicate_free() {
        let g = build_group(&two_cusp_spec()).unwrap();
        let words = g.enumerate_words(6, 1 << 20).unwrap();
        let mut seen = HashSet::new();
        for w in &words {
            let key = (
                (w.matrix.a * 1e9).round() as i64,
                (w.matrix.b * 1e9).round() as i64,
                (w.matrix.c * 1e9).round() as i64,
                (w.matrix.d * 1e9).round() as i64,
            );
            assert!(seen.insert(key), "duplicate matrix for word {:?}", w.letters);
        }
    }

    #[test]
    fn dist_symmetric_under_inversion() {
        let g = build_group(&two_cusp_spec()).unwrap();
        let words = g.enumerate_words(5, 1 << 20).unwrap();
        for w in &words {
            let d_inv = w.matrix.inverse().dist_to_basepoint();
            assert!((w.dist - d_inv).abs() <= 1e-9 * w.dist.max(1.0));
        }
    }

    #[test]
    fn enumeration_is_bfs_lexicographic() {
        let g = build_group(&two_cusp_spec()).unwrap();
        let words = g.enumerate_words(3, 1 << 20).unwrap();
        for pair in words.windows(2) {
            let (a, b) = (&pair[0].letters, &pair[1].letters);
            assert!(a.len() < b.len() || (a.len() == b.len() && a < b));
        }
    }

    #[test]
    fn spec_digest_is_stable() {
        let d1 = two_cusp_spec().digest();
        let d2 = two_cusp_spec().digest();
        assert_eq!(d1, d2);
        assert_ne!(d1, single_cusp_spec().digest());
    }
}
