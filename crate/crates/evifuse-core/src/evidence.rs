//! Dempster-Shafer evidence engine.
//!
//! A frame of discernment holds up to 16 hypotheses; subsets of the frame are
//! encoded as inclusion bit vectors, so the power set is the range
//! `0..2^n`. Mass functions assign basic probability to subsets, and the
//! module provides belief/plausibility, the conjunctive (Dempster) and
//! disjunctive combination rules, and deterministic argmax decision selection.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Largest supported frame size; subsets must fit a `u16` inclusion vector.
pub const MAX_FRAME_SIZE: usize = 16;

/// Tolerance for user-supplied mass assignments (rounded percentages etc.).
pub const INPUT_SUM_TOLERANCE: f64 = 1e-6;

/// Tolerance maintained internally after construction and combination.
pub const MASS_SUM_TOLERANCE: f64 = 1e-9;

const CONFLICT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvidenceError {
    #[error("frame of discernment must contain at least one hypothesis")]
    EmptyFrame,
    #[error("frame of discernment holds {0} hypotheses, maximum is {MAX_FRAME_SIZE}")]
    FrameTooLarge(usize),
    #[error("duplicate hypothesis `{0}` in frame of discernment")]
    DuplicateElement(String),
    #[error("hypothesis `{0}` is not in the frame of discernment")]
    UnknownElement(String),
    #[error("inclusion vector {bits:#x} does not fit a frame of {n} hypotheses")]
    BitsOutOfRange { bits: u16, n: usize },
    #[error("subset belongs to a different frame of discernment")]
    FrameMismatch,
    #[error("mass for `{label}` is {value}, masses must lie in [0, 1]")]
    InvalidMass { label: String, value: f64 },
    #[error("masses sum to {sum}, expected 1 (within {INPUT_SUM_TOLERANCE:e})")]
    MassSumInvalid { sum: f64 },
    #[error("the empty subset carries mass {0}, it must carry none")]
    EmptySetMass(f64),
    #[error("total mass is zero, nothing to normalize")]
    ZeroTotalMass,
    #[error("total conflict between sources, conjunctive combination undefined")]
    TotalConflict,
    #[error("belief interval [{bel}, {pls}] violates 0 <= bel <= pls <= 1")]
    InvalidInterval { bel: f64, pls: f64 },
}

/// Frame of discernment: an ordered set of mutually exclusive hypotheses.
///
/// Element order is fixed at construction and defines the subset encoding:
/// bit `i` of an inclusion vector marks `elements()[i]`.
#[derive(Debug, Clone)]
pub struct Frame {
    elements: Arc<Vec<String>>,
}

impl PartialEq for Frame {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.elements, &other.elements) || self.elements == other.elements
    }
}

impl Eq for Frame {}

impl Frame {
    pub fn new<I, S>(elements: I) -> Result<Self, EvidenceError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let elements: Vec<String> = elements.into_iter().map(Into::into).collect();
        if elements.is_empty() {
            return Err(EvidenceError::EmptyFrame);
        }
        if elements.len() > MAX_FRAME_SIZE {
            return Err(EvidenceError::FrameTooLarge(elements.len()));
        }
        for (i, e) in elements.iter().enumerate() {
            if elements[..i].contains(e) {
                return Err(EvidenceError::DuplicateElement(e.clone()));
            }
        }
        Ok(Self {
            elements: Arc::new(elements),
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least one element
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    pub fn element_index(&self, name: &str) -> Option<usize> {
        self.elements.iter().position(|e| e == name)
    }

    /// Builds the subset containing exactly the named members.
    pub fn subset<I, S>(&self, members: I) -> Result<Subset, EvidenceError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut bits = 0u16;
        for m in members {
            let idx = self
                .element_index(m.as_ref())
                .ok_or_else(|| EvidenceError::UnknownElement(m.as_ref().to_string()))?;
            bits |= 1 << idx;
        }
        Ok(Subset {
            frame: self.clone(),
            bits,
        })
    }

    pub fn singleton(&self, name: &str) -> Result<Subset, EvidenceError> {
        self.subset([name])
    }

    /// Reconstructs a subset from its inclusion vector.
    pub fn subset_from_bits(&self, bits: u16) -> Result<Subset, EvidenceError> {
        if usize::from(bits) >= self.subset_count() {
            return Err(EvidenceError::BitsOutOfRange { bits, n: self.len() });
        }
        Ok(Subset {
            frame: self.clone(),
            bits,
        })
    }

    pub fn empty_subset(&self) -> Subset {
        Subset {
            frame: self.clone(),
            bits: 0,
        }
    }

    /// The full set `U` itself.
    pub fn full_subset(&self) -> Subset {
        Subset {
            frame: self.clone(),
            bits: self.full_bits(),
        }
    }

    /// Number of subsets, `2^n`.
    pub fn subset_count(&self) -> usize {
        1usize << self.len()
    }

    /// All `2^n` subsets in ascending inclusion-vector order, starting with
    /// the empty set and ending with the full set.
    pub fn power_set(&self) -> Vec<Subset> {
        (0..self.subset_count() as u32)
            .map(|bits| Subset {
                frame: self.clone(),
                bits: bits as u16,
            })
            .collect()
    }

    fn full_bits(&self) -> u16 {
        if self.len() == MAX_FRAME_SIZE {
            u16::MAX
        } else {
            (1u16 << self.len()) - 1
        }
    }
}

/// A subset of a frame's hypotheses, encoded as an inclusion bit vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subset {
    frame: Frame,
    bits: u16,
}

impl Subset {
    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn bits(&self) -> u16 {
        self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn cardinality(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn contains(&self, name: &str) -> bool {
        match self.frame.element_index(name) {
            Some(idx) => self.bits & (1 << idx) != 0,
            None => false,
        }
    }

    /// Member names in frame order.
    pub fn members(&self) -> Vec<&str> {
        self.frame
            .elements()
            .iter()
            .enumerate()
            .filter(|(i, _)| self.bits & (1 << i) != 0)
            .map(|(_, e)| e.as_str())
            .collect()
    }

    /// Comma-joined member names in frame order (`"V2,V3"`); the empty
    /// subset renders as `"∅"`. This is the serialization key format.
    pub fn label(&self) -> String {
        if self.is_empty() {
            "∅".to_string()
        } else {
            self.members().join(",")
        }
    }

    pub fn union(&self, other: &Subset) -> Result<Subset, EvidenceError> {
        self.check_frame(other)?;
        Ok(Subset {
            frame: self.frame.clone(),
            bits: self.bits | other.bits,
        })
    }

    pub fn intersection(&self, other: &Subset) -> Result<Subset, EvidenceError> {
        self.check_frame(other)?;
        Ok(Subset {
            frame: self.frame.clone(),
            bits: self.bits & other.bits,
        })
    }

    pub fn complement(&self) -> Subset {
        Subset {
            frame: self.frame.clone(),
            bits: !self.bits & self.frame.full_bits(),
        }
    }

    /// Whether `self ⊆ other`. Both subsets must share a frame.
    pub fn is_subset_of(&self, other: &Subset) -> bool {
        assert_eq!(self.frame, other.frame, "subsets from different frames");
        self.bits & other.bits == self.bits
    }

    pub fn intersects(&self, other: &Subset) -> bool {
        assert_eq!(self.frame, other.frame, "subsets from different frames");
        self.bits & other.bits != 0
    }

    fn check_frame(&self, other: &Subset) -> Result<(), EvidenceError> {
        if self.frame == other.frame {
            Ok(())
        } else {
            Err(EvidenceError::FrameMismatch)
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.label())
    }
}

/// Confidence interval `[Bel(X), Pls(X)]` for a hypothesis subset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefInterval {
    bel: f64,
    pls: f64,
}

impl BeliefInterval {
    pub fn new(bel: f64, pls: f64) -> Result<Self, EvidenceError> {
        let eps = MASS_SUM_TOLERANCE;
        if !(bel.is_finite() && pls.is_finite())
            || bel < -eps
            || pls > 1.0 + eps
            || bel > pls + eps
        {
            return Err(EvidenceError::InvalidInterval { bel, pls });
        }
        Ok(Self {
            bel: bel.clamp(0.0, 1.0),
            pls: pls.clamp(0.0, 1.0),
        })
    }

    pub fn bel(&self) -> f64 {
        self.bel
    }

    pub fn pls(&self) -> f64 {
        self.pls
    }
}

/// Basic probability assignment over the subsets of a frame.
///
/// Invariants hold for every constructed value: each mass lies in `[0, 1]`,
/// the empty subset carries no mass, and the total is 1 within
/// [`MASS_SUM_TOLERANCE`]. Mass is free to violate monotonicity over subset
/// inclusion; only belief is monotone.
#[derive(Debug, Clone, PartialEq)]
pub struct MassFunction {
    frame: Frame,
    masses: Vec<f64>, // dense, indexed by inclusion-vector value
}

impl MassFunction {
    /// Builds a mass function from `(subset, value)` assignments.
    ///
    /// Values for the same subset accumulate; unmentioned subsets get mass
    /// zero. With `normalize` the values are divided by their sum (which must
    /// be positive); without it the sum must already be 1 within
    /// [`INPUT_SUM_TOLERANCE`]. Either way the stored masses are rescaled so
    /// the internal 1e-9 invariant holds, except when the inputs already sum
    /// to 1 within that tolerance, in which case they are kept bit-identical
    /// (this is what makes serialization round-trips exact).
    pub fn new(
        frame: &Frame,
        assignments: &[(Subset, f64)],
        normalize: bool,
    ) -> Result<Self, EvidenceError> {
        let mut masses = vec![0.0f64; frame.subset_count()];
        for (subset, value) in assignments {
            if &subset.frame != frame {
                return Err(EvidenceError::FrameMismatch);
            }
            if !value.is_finite() || *value < 0.0 {
                return Err(EvidenceError::InvalidMass {
                    label: subset.label(),
                    value: *value,
                });
            }
            if subset.is_empty() && *value != 0.0 {
                return Err(EvidenceError::EmptySetMass(*value));
            }
            masses[subset.bits as usize] += value;
        }
        let sum: f64 = masses.iter().sum();
        if normalize {
            if sum <= 0.0 {
                return Err(EvidenceError::ZeroTotalMass);
            }
        } else if (sum - 1.0).abs() > INPUT_SUM_TOLERANCE {
            return Err(EvidenceError::MassSumInvalid { sum });
        }
        Ok(Self::from_raw(frame.clone(), masses, sum))
    }

    /// Builds from `label -> mass` pairs, the serialized text-map form.
    pub fn from_label_map<'a, I>(frame: &Frame, entries: I) -> Result<Self, EvidenceError>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut assignments = Vec::new();
        for (label, value) in entries {
            let subset = frame.subset(label.split(','))?;
            assignments.push((subset, value));
        }
        Self::new(frame, &assignments, false)
    }

    /// The vacuous mass: all weight on the full set `U`.
    pub fn vacuous(frame: &Frame) -> Self {
        let mut masses = vec![0.0; frame.subset_count()];
        *masses.last_mut().expect("frame is nonempty") = 1.0;
        Self {
            frame: frame.clone(),
            masses,
        }
    }

    fn from_raw(frame: Frame, mut masses: Vec<f64>, sum: f64) -> Self {
        if (sum - 1.0).abs() > MASS_SUM_TOLERANCE {
            for m in &mut masses {
                *m /= sum;
            }
        }
        Self { frame, masses }
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    /// Mass assigned to exactly `x`. Panics on a foreign frame; use
    /// [`belief`](Self::belief) and friends for checked queries.
    pub fn mass(&self, x: &Subset) -> f64 {
        assert_eq!(self.frame, x.frame, "subset from a different frame");
        self.masses[x.bits as usize]
    }

    /// Subsets with nonzero mass, ascending by inclusion vector.
    pub fn focal_sets(&self) -> impl Iterator<Item = (Subset, f64)> + '_ {
        self.masses.iter().enumerate().filter_map(move |(bits, &m)| {
            (m != 0.0).then(|| {
                (
                    Subset {
                        frame: self.frame.clone(),
                        bits: bits as u16,
                    },
                    m,
                )
            })
        })
    }

    /// Total trust in `x`: the mass of every nonempty subset of `x`.
    pub fn belief(&self, x: &Subset) -> Result<f64, EvidenceError> {
        self.check_frame(x)?;
        let sum = self
            .masses
            .iter()
            .enumerate()
            .skip(1) // the empty set never contributes
            .filter(|(bits, _)| *bits as u16 & x.bits == *bits as u16)
            .map(|(_, m)| m)
            .sum();
        Ok(sum)
    }

    /// Trust not contradicting `x`: `1 - Bel(complement(x))`, the mass of
    /// every subset intersecting `x`.
    pub fn plausibility(&self, x: &Subset) -> Result<f64, EvidenceError> {
        self.check_frame(x)?;
        let sum = self
            .masses
            .iter()
            .enumerate()
            .filter(|(bits, _)| *bits as u16 & x.bits != 0)
            .map(|(_, m)| m)
            .sum();
        Ok(sum)
    }

    /// `[Bel(x), Pls(x)]`.
    pub fn confidence_interval(&self, x: &Subset) -> Result<BeliefInterval, EvidenceError> {
        let bel = self.belief(x)?;
        let pls = self.plausibility(x)?;
        BeliefInterval::new(bel, pls)
    }

    /// Dempster's rule: products over intersections, conflict mass `K`
    /// renormalized away. Fails on total conflict (`K = 1`).
    pub fn combine_conjunctive(&self, other: &Self) -> Result<Self, EvidenceError> {
        self.combine_with(other, |a, b| a & b, true)
    }

    /// Disjunctive rule: products over unions. Conflict-free, since the
    /// union of nonempty focal sets is nonempty.
    pub fn combine_disjunctive(&self, other: &Self) -> Result<Self, EvidenceError> {
        self.combine_with(other, |a, b| a | b, false)
    }

    fn combine_with(
        &self,
        other: &Self,
        merge: impl Fn(u16, u16) -> u16,
        renormalize_conflict: bool,
    ) -> Result<Self, EvidenceError> {
        if self.frame != other.frame {
            return Err(EvidenceError::FrameMismatch);
        }
        let mut combined = vec![0.0f64; self.masses.len()];
        let mut conflict = 0.0f64;
        for (a_bits, &ma) in self.masses.iter().enumerate() {
            if ma == 0.0 {
                continue;
            }
            for (b_bits, &mb) in other.masses.iter().enumerate() {
                if mb == 0.0 {
                    continue;
                }
                let merged = merge(a_bits as u16, b_bits as u16);
                if merged == 0 {
                    conflict += ma * mb;
                } else {
                    combined[merged as usize] += ma * mb;
                }
            }
        }
        if renormalize_conflict && 1.0 - conflict <= CONFLICT_TOLERANCE {
            return Err(EvidenceError::TotalConflict);
        }
        let sum: f64 = combined.iter().sum();
        if sum <= 0.0 {
            // disjunctive combination of valid masses cannot get here
            return Err(EvidenceError::TotalConflict);
        }
        Ok(Self::from_raw(self.frame.clone(), combined, sum))
    }

    /// The nonempty subset with maximal mass. Ties break toward the smaller
    /// cardinality, then the lower inclusion-vector value, so the result is
    /// deterministic and prefers the most specific hypothesis.
    pub fn argmax_subset(&self) -> Subset {
        let mut best_bits = 0u16;
        let mut best_mass = f64::NEG_INFINITY;
        for (bits, &m) in self.masses.iter().enumerate().skip(1) {
            let bits = bits as u16;
            let better = m > best_mass
                || (m == best_mass
                    && bits.count_ones() < best_bits.count_ones());
            if better {
                best_bits = bits;
                best_mass = m;
            }
        }
        // a valid mass sums to 1, so some nonempty subset carries mass
        debug_assert!(best_mass > 0.0);
        Subset {
            frame: self.frame.clone(),
            bits: best_bits,
        }
    }

    /// Serialized form: focal sets only, keyed by [`Subset::label`].
    pub fn to_label_map(&self) -> BTreeMap<String, f64> {
        self.focal_sets()
            .map(|(subset, m)| (subset.label(), m))
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    fn check_frame(&self, x: &Subset) -> Result<(), EvidenceError> {
        if self.frame == x.frame {
            Ok(())
        } else {
            Err(EvidenceError::FrameMismatch)
        }
    }
}
