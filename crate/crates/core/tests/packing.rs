use std::collections::BTreeSet;

use dpfair::generators::{ef_packing_family, prop_packing_family, PackingFamily};
use dpfair::{adjacency_distance, enumerate_connected_allocations, is_ef_c, is_prop_c, Adjacency, ConnectedAllocation};

fn fair_sets(family: &PackingFamily) -> Vec<BTreeSet<ConnectedAllocation>> {
    family
        .members
        .iter()
        .map(|u| {
            enumerate_connected_allocations(family.m, family.n)
                .filter(|a| match family.notion {
                    dpfair::FairnessNotion::Ef => is_ef_c(u, a, family.c).unwrap(),
                    dpfair::FairnessNotion::Prop => is_prop_c(u, a, family.c).unwrap(),
                })
                .collect()
        })
        .collect()
}

fn assert_pairwise_disjoint(sets: &[BTreeSet<ConnectedAllocation>]) {
    for (s, a) in sets.iter().enumerate() {
        assert!(!a.is_empty(), "member {s} admits no fair allocation");
        for b in &sets[s + 1..] {
            assert!(a.is_disjoint(b));
        }
    }
}

#[test]
fn ef_family_fair_sets_are_disjoint() {
    let family = ef_packing_family(3, 20, 1, 2).unwrap();
    assert_pairwise_disjoint(&fair_sets(&family));
}

#[test]
fn prop_family_fair_sets_are_disjoint() {
    let family = prop_packing_family(3, 24, 1, 3).unwrap();
    assert_pairwise_disjoint(&fair_sets(&family));
}

#[test]
fn members_sit_at_the_stated_distance() {
    for (family, distance) in [
        (ef_packing_family(3, 20, 1, 2).unwrap(), 6),
        (ef_packing_family(4, 40, 2, 3).unwrap(), 10),
        (prop_packing_family(3, 24, 1, 3).unwrap(), 8),
        (prop_packing_family(4, 60, 2, 2).unwrap(), 18),
    ] {
        assert_eq!(family.distance(), distance);
        for u in &family.members {
            assert_eq!(adjacency_distance(&family.base, u, Adjacency::AgentItemLevel).unwrap(), distance);
            assert!(u.is_binary());
        }
    }
}
