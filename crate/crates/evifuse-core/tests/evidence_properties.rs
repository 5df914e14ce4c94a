//! Property-based checks of the evidence engine against independent
//! set-semantics oracles.
//!
//! The oracles below deliberately avoid the bit-vector machinery: subsets are
//! handled as `HashSet<String>` membership sets and combinations as explicit
//! cross products, so any agreement with the engine is evidence that the
//! packed representation is faithful.

use std::collections::{BTreeMap, HashSet};

use evifuse_core::{EvidenceError, Frame, MassFunction, Subset};
use proptest::prelude::*;

const POOL: [&str; 4] = ["A", "B", "C", "D"];

fn arb_frame() -> impl Strategy<Value = Frame> {
    (1usize..=4).prop_map(|n| Frame::new(POOL[..n].iter().copied()).expect("distinct names"))
}

/// A random normalized mass over every nonempty subset of `frame`.
fn arb_mass(frame: Frame) -> impl Strategy<Value = MassFunction> {
    let count = frame.subset_count();
    proptest::collection::vec(0.0f64..1.0, count - 1).prop_filter_map(
        "at least one positive weight",
        move |weights| {
            if weights.iter().sum::<f64>() <= 0.0 {
                return None;
            }
            let assignments: Vec<(Subset, f64)> = weights
                .iter()
                .enumerate()
                .map(|(i, &w)| (frame.subset_from_bits((i + 1) as u16).unwrap(), w))
                .collect();
            Some(MassFunction::new(&frame, &assignments, true).unwrap())
        },
    )
}

fn frame_with_masses(k: usize) -> impl Strategy<Value = (Frame, Vec<MassFunction>)> {
    arb_frame().prop_flat_map(move |frame| {
        let masses = proptest::collection::vec(arb_mass(frame.clone()), k);
        (Just(frame), masses)
    })
}

fn member_set(s: &Subset) -> HashSet<String> {
    s.members().into_iter().map(str::to_string).collect()
}

/// Belief computed from membership sets alone.
fn oracle_bel(m: &MassFunction, x: &Subset) -> f64 {
    let xs = member_set(x);
    m.focal_sets()
        .filter(|(y, _)| !y.is_empty() && member_set(y).is_subset(&xs))
        .map(|(_, v)| v)
        .sum()
}

/// Plausibility computed from membership sets alone.
fn oracle_pls(m: &MassFunction, x: &Subset) -> f64 {
    let xs = member_set(x);
    m.focal_sets()
        .filter(|(y, _)| !member_set(y).is_disjoint(&xs))
        .map(|(_, v)| v)
        .sum()
}

/// Cross-product combination over membership sets. Returns the label map of
/// the normalized result, or `None` when the conflict is total.
fn oracle_combine(
    a: &MassFunction,
    b: &MassFunction,
    disjunctive: bool,
) -> Option<BTreeMap<String, f64>> {
    let mut acc: BTreeMap<String, f64> = BTreeMap::new();
    let mut kept = 0.0;
    for (x, mx) in a.focal_sets() {
        for (y, my) in b.focal_sets() {
            let merged: HashSet<String> = if disjunctive {
                member_set(&x).union(&member_set(&y)).cloned().collect()
            } else {
                member_set(&x)
                    .intersection(&member_set(&y))
                    .cloned()
                    .collect()
            };
            if merged.is_empty() {
                continue;
            }
            // frame order gives the canonical label
            let label: String = a
                .frame()
                .elements()
                .iter()
                .filter(|e| merged.contains(e.as_str()))
                .map(String::as_str)
                .collect::<Vec<_>>()
                .join(",");
            *acc.entry(label).or_insert(0.0) += mx * my;
            kept += mx * my;
        }
    }
    if kept <= 1e-12 {
        return None;
    }
    for v in acc.values_mut() {
        *v /= kept;
    }
    Some(acc)
}

fn assert_maps_close(actual: &BTreeMap<String, f64>, expected: &BTreeMap<String, f64>, tol: f64) {
    let a_keys: Vec<&String> = actual.keys().collect();
    let e_keys: Vec<&String> = expected.keys().collect();
    assert_eq!(a_keys, e_keys, "focal sets differ");
    for (label, &va) in actual {
        let ve = expected[label];
        assert!(
            (va - ve).abs() <= tol,
            "{label}: {va} vs oracle {ve} (diff {})",
            (va - ve).abs()
        );
    }
}

/// Every structural invariant a mass function must satisfy, checked over the
/// whole power set.
fn assert_invariants(m: &MassFunction) {
    let frame = m.frame().clone();
    assert!((m.total() - 1.0).abs() <= 1e-9, "total {}", m.total());
    assert_eq!(m.mass(&frame.empty_subset()), 0.0);

    let subsets = frame.power_set();
    let full = subsets.len() - 1;
    let bels: Vec<f64> = subsets.iter().map(|x| m.belief(x).unwrap()).collect();
    let plss: Vec<f64> = subsets.iter().map(|x| m.plausibility(x).unwrap()).collect();
    assert!((bels[full] - 1.0).abs() <= 1e-9, "Bel(U) = {}", bels[full]);
    assert!((plss[full] - 1.0).abs() <= 1e-9, "Pls(U) = {}", plss[full]);
    assert_eq!(bels[0], 0.0, "Bel(∅) must vanish");
    assert_eq!(plss[0], 0.0, "Pls(∅) must vanish");

    for (idx, x) in subsets.iter().enumerate() {
        assert!(
            bels[idx] <= plss[idx] + 1e-12,
            "Bel {} > Pls {} on {x}",
            bels[idx],
            plss[idx]
        );
        // the interval clamps float overshoot back into [0, 1]
        let interval = m.confidence_interval(x).unwrap();
        assert!((interval.bel() - bels[idx]).abs() <= 1e-9);
        assert!((interval.pls() - plss[idx]).abs() <= 1e-9);
        assert!((0.0..=1.0).contains(&interval.bel()));
        assert!((0.0..=1.0).contains(&interval.pls()));
        assert!(interval.bel() <= interval.pls());

        let co = full ^ idx;
        assert!(
            bels[idx] + bels[co] <= 1.0 + 1e-9,
            "Bel(X) + Bel(X̄) = {} on {x}",
            bels[idx] + bels[co]
        );
        // duality: Pls(X) = 1 - Bel(X̄)
        assert!((plss[idx] - (1.0 - bels[co])).abs() <= 1e-9);

        assert!((bels[idx] - oracle_bel(m, x)).abs() <= 1e-12);
        assert!((plss[idx] - oracle_pls(m, x)).abs() <= 1e-12);

        // belief is monotone under inclusion even though mass is not
        for (jdx, y) in subsets.iter().enumerate() {
            if x.is_subset_of(y) {
                assert!(bels[idx] <= bels[jdx] + 1e-12);
            }
        }
    }
}

fn combine(
    a: &MassFunction,
    b: &MassFunction,
    disjunctive: bool,
) -> Result<MassFunction, EvidenceError> {
    if disjunctive {
        a.combine_disjunctive(b)
    } else {
        a.combine_conjunctive(b)
    }
}

proptest! {
    #[test]
    fn construction_satisfies_invariants((_, masses) in frame_with_masses(1)) {
        assert_invariants(&masses[0]);
    }

    #[test]
    fn combination_matches_set_oracle((_, masses) in frame_with_masses(2)) {
        for disjunctive in [true, false] {
            let oracle = oracle_combine(&masses[0], &masses[1], disjunctive);
            match (combine(&masses[0], &masses[1], disjunctive), oracle) {
                (Ok(combined), Some(expected)) => {
                    assert_invariants(&combined);
                    assert_maps_close(&combined.to_label_map(), &expected, 1e-12);
                }
                (Err(EvidenceError::TotalConflict), None) => {}
                (got, expected) => panic!(
                    "engine and oracle disagree: {:?} vs oracle {:?}",
                    got.map(|m| m.to_label_map()),
                    expected
                ),
            }
        }
    }

    #[test]
    fn combination_is_commutative((_, masses) in frame_with_masses(2)) {
        for disjunctive in [true, false] {
            let ab = combine(&masses[0], &masses[1], disjunctive);
            let ba = combine(&masses[1], &masses[0], disjunctive);
            match (ab, ba) {
                (Ok(ab), Ok(ba)) => {
                    assert_maps_close(&ab.to_label_map(), &ba.to_label_map(), 1e-9)
                }
                (Err(EvidenceError::TotalConflict), Err(EvidenceError::TotalConflict)) => {}
                (ab, ba) => panic!("one order failed: {ab:?} vs {ba:?}"),
            }
        }
    }

    #[test]
    fn combination_is_associative((_, masses) in frame_with_masses(3)) {
        for disjunctive in [true, false] {
            let left = combine(&masses[0], &masses[1], disjunctive)
                .and_then(|ab| combine(&ab, &masses[2], disjunctive));
            let right = combine(&masses[1], &masses[2], disjunctive)
                .and_then(|bc| combine(&masses[0], &bc, disjunctive));
            match (left, right) {
                (Ok(l), Ok(r)) => assert_maps_close(&l.to_label_map(), &r.to_label_map(), 1e-9),
                // renormalization makes float-boundary conflicts possible in
                // one association order only; both failing is consistent
                (Err(EvidenceError::TotalConflict), _) | (_, Err(EvidenceError::TotalConflict)) => {}
                (l, r) => panic!("associativity mismatch: {l:?} vs {r:?}"),
            }
        }
    }

    #[test]
    fn vacuous_is_the_conjunctive_identity((frame, masses) in frame_with_masses(1)) {
        let vacuous = MassFunction::vacuous(&frame);
        for combined in [
            masses[0].combine_conjunctive(&vacuous).unwrap(),
            vacuous.combine_conjunctive(&masses[0]).unwrap(),
        ] {
            let got = combined.to_label_map();
            let want = masses[0].to_label_map();
            assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>());
            for (label, v) in &got {
                assert_eq!(v.to_bits(), want[label].to_bits(), "{label} drifted");
            }
        }
    }

    #[test]
    fn label_map_round_trips_exactly((frame, masses) in frame_with_masses(1)) {
        let map = masses[0].to_label_map();
        let entries: Vec<(&str, f64)> = map.iter().map(|(k, &v)| (k.as_str(), v)).collect();
        let rebuilt = MassFunction::from_label_map(&frame, entries).unwrap();
        for x in frame.power_set() {
            assert_eq!(rebuilt.mass(&x).to_bits(), masses[0].mass(&x).to_bits());
        }
    }

    #[test]
    fn argmax_agrees_with_exhaustive_ranking((frame, masses) in frame_with_masses(1)) {
        let mut ranked: Vec<(Subset, f64)> = frame
            .power_set()
            .into_iter()
            .map(|s| {
                let v = masses[0].mass(&s);
                (s, v)
            })
            .collect();
        ranked.sort_by(|(sa, va), (sb, vb)| {
            vb.partial_cmp(va)
                .unwrap()
                .then(sa.cardinality().cmp(&sb.cardinality()))
                .then(sa.bits().cmp(&sb.bits()))
        });
        let best = &ranked[0].0;
        let got = masses[0].argmax_subset();
        assert_eq!(got.bits(), best.bits(), "argmax {got} vs ranked {best}");
    }

    #[test]
    fn relabeling_does_not_change_the_mathematics((frame, masses) in frame_with_masses(2)) {
        // present the same evidence on a frame listed in reverse order
        let reversed: Vec<&str> = frame.elements().iter().rev().map(String::as_str).collect();
        let mirror = Frame::new(reversed).unwrap();
        let project = |m: &MassFunction| -> MassFunction {
            let assignments: Vec<(Subset, f64)> = m
                .focal_sets()
                .map(|(s, v)| (mirror.subset(s.members()).unwrap(), v))
                .collect();
            MassFunction::new(&mirror, &assignments, false).unwrap()
        };
        let (ma, mb) = (project(&masses[0]), project(&masses[1]));
        for disjunctive in [true, false] {
            let original = combine(&masses[0], &masses[1], disjunctive);
            let mirrored = combine(&ma, &mb, disjunctive);
            match (original, mirrored) {
                (Ok(o), Ok(p)) => {
                    for x in frame.power_set() {
                        let image = mirror.subset(x.members()).unwrap();
                        assert!(
                            (o.mass(&x) - p.mass(&image)).abs() <= 1e-9,
                            "mass of {x} moved under relabeling"
                        );
                    }
                }
                (Err(EvidenceError::TotalConflict), Err(EvidenceError::TotalConflict)) => {}
                (o, p) => panic!("relabeling changed the outcome: {o:?} vs {p:?}"),
            }
        }
    }
}
