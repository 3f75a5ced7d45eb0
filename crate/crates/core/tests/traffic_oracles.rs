mod common;

use autonoc_core::optical::{Fabric, FabricConfig, MetroTopology};
use autonoc_core::traffic::{
    allocate_intra_dc, capacity_check_fabric, capacity_check_metro, k_shortest_paths,
    reroute_flows, reroute_lightpaths, rwa_first_fit, DemandMatrix, Exclusions, FailedElement,
    LightpathDemand, TrafficError, DEFAULT_K,
};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn yen_matches_brute_force_on_default_metro() {
    let m = MetroTopology::default_metro();
    for s in 0..m.node_count() {
        for d in 0..m.node_count() {
            if s == d {
                continue;
            }
            for k in [1, 3, 5] {
                let got: Vec<_> = k_shortest_paths(&m, s, d, k, &Exclusions::none())
                    .into_iter()
                    .map(|p| p.nodes)
                    .collect();
                let want: Vec<_> = oracle_k_shortest(&m, s, d, k)
                    .into_iter()
                    .map(|p| p.1)
                    .collect();
                assert_eq!(got, want, "{s}->{d} k={k}");
            }
        }
    }
}

#[test]
fn first_fit_matches_exhaustive_search_on_small_graphs() {
    let mut instances = 0;
    for n in 2..=5 {
        for (gi, edges) in connected_graphs(n).into_iter().enumerate() {
            let weighted: Vec<_> = edges
                .iter()
                .map(|&(a, b)| (a, b, edge_length(a, b)))
                .collect();
            for wavelengths in 1..=3 {
                let mut t = topo(n, wavelengths, &weighted);
                let mut rng =
                    ChaCha8Rng::seed_from_u64((n * 10_000 + gi * 10 + wavelengths) as u64);
                // Random demand sequence; each step compares against the oracle
                // on the current occupancy before committing.
                for step in 0..(2 * n) {
                    let src = rng.random_range(0..n);
                    let dst = (src + rng.random_range(1..n)) % n;
                    let want = oracle_first_fit(&t, src, dst, DEFAULT_K);
                    let d = LightpathDemand {
                        id: format!("d{step}"),
                        src,
                        dst,
                        gbps: 100.0,
                    };
                    match rwa_first_fit(&d, &mut t, DEFAULT_K) {
                        Ok(a) => assert_eq!(Some((a.path, a.wavelength)), want),
                        Err(TrafficError::Blocked(_)) => assert_eq!(want, None),
                        Err(e) => panic!("{e}"),
                    }
                    instances += 1;
                }
            }
        }
    }
    assert!(instances > 10_000);
}

#[test]
fn reroute_moves_when_alternate_exists() {
    // Triangle: direct edge 0-2 fails, detour via 1 remains.
    let mut t = topo(3, 3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
    let d = LightpathDemand {
        id: "d".into(),
        src: 0,
        dst: 2,
        gbps: 100.0,
    };
    let mut lps = vec![rwa_first_fit(&d, &mut t, DEFAULT_K).unwrap()];
    assert_eq!(lps[0].path, vec![0, 2]);
    let failed = t.edge_index(0, 2).unwrap();
    let reachable = !all_simple_paths(&t, 0, 2, &[failed], &[]).is_empty();
    assert!(reachable);
    let r = reroute_lightpaths(
        &mut lps,
        &FailedElement::MetroEdge(failed),
        &mut t,
        DEFAULT_K,
    );
    assert_eq!(r.moved.len(), 1);
    assert_eq!(lps[0].path, vec![0, 1, 2]);
    assert!(t.is_free(0, 2, 0));
    assert!(capacity_check_metro(&t, &lps).is_empty());
}

/// Occupancy derived from assignments must equal the topology bitmap.
fn occupancy_consistent(
    t: &MetroTopology,
    lps: &[autonoc_core::traffic::LightpathAssignment],
) -> bool {
    let mut expect: Vec<_> = lps
        .iter()
        .flat_map(|lp| {
            lp.path
                .windows(2)
                .map(move |h| (t.edge_index(h[0], h[1]).unwrap(), h[0], lp.wavelength))
        })
        .collect();
    expect.sort();
    let mut got = t.busy_slots();
    got.sort();
    expect == got
}

#[test]
fn randomized_sequences_never_commit_violations() {
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = MetroTopology::default_metro();
        let mut lps = Vec::new();
        let n = m.node_count();
        for step in 0..rng.random_range(5..60) {
            let src = rng.random_range(0..n);
            let dst = (src + rng.random_range(1..n)) % n;
            let d = LightpathDemand {
                id: format!("s{seed}-{step}"),
                src,
                dst,
                gbps: 100.0,
            };
            if let Ok(a) = rwa_first_fit(&d, &mut m, DEFAULT_K) {
                lps.push(a);
            }
            if step % 7 == 6 {
                let e = rng.random_range(0..m.edges.len());
                let untouched: Vec<_> = lps
                    .iter()
                    .filter(|lp| !lp.uses_edge(&m, e))
                    .cloned()
                    .collect();
                let failed = FailedElement::MetroEdge(e);
                reroute_lightpaths(&mut lps, &failed, &mut m, DEFAULT_K);
                let still: Vec<_> = lps
                    .iter()
                    .filter(|lp| untouched.iter().any(|u| u.demand_id == lp.demand_id))
                    .cloned()
                    .collect();
                assert_eq!(still, untouched);
            }
            assert!(capacity_check_metro(&m, &lps).is_empty(), "seed {seed}");
            assert!(occupancy_consistent(&m, &lps), "seed {seed}");
        }
    }
}

#[test]
fn golden_demand_matrix() {
    let text = include_str!("golden/ring100_epoch0.csv");
    let m = DemandMatrix::read_csv(text.as_bytes()).unwrap();
    let w = autonoc_core::traffic::WorkloadSpec::RingAllReduce {
        payload_gbps: 100.0,
        groups: 8,
    };
    assert_eq!(
        m,
        autonoc_core::traffic::generate_demands(&w, 0, 0).unwrap()
    );
    assert_eq!(m.to_csv_string(), text);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fabric_allocation_invariants(entries in proptest::collection::vec(0.0f64..300.0, 64), bad in 0usize..32) {
        let f = Fabric::new(&FabricConfig::default()).unwrap();
        let mut m = DemandMatrix::zeros(0, 8);
        for i in 0..8 {
            for j in 0..8 {
                if i != j && entries[i * 8 + j] > 150.0 {
                    m.entries[i][j] = entries[i * 8 + j];
                }
            }
        }
        let mut a = allocate_intra_dc(&m, &f).unwrap();
        let mut loads = vec![0.0; 32];
        for fl in &a.flows {
            prop_assert_eq!(fl.links, [f.link_index(fl.src, fl.spine), f.link_index(fl.dst, fl.spine)]);
            for &l in &fl.links {
                loads[l] += fl.gbps;
            }
        }
        for (x, y) in loads.iter().zip(&a.loads) {
            prop_assert!((x - y).abs() < 1e-6);
        }
        prop_assert_eq!(a.is_feasible(), capacity_check_fabric(&a).is_empty());
        reroute_flows(&mut a, &FailedElement::FabricLink(bad), &f);
        prop_assert!(a.flows.iter().all(|fl| !fl.links.contains(&bad)));
        prop_assert_eq!(&a.violations, &capacity_check_fabric(&a));
    }

    #[test]
    fn reroute_never_uses_failed_node(seed in 0u64..10_000, node in 0usize..14) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = MetroTopology::default_metro();
        let mut lps = Vec::new();
        for i in 0..20 {
            let src = rng.random_range(0..14);
            let dst = (src + rng.random_range(1..14)) % 14;
            let d = LightpathDemand { id: format!("d{i}"), src, dst, gbps: 10.0 };
            if let Ok(a) = rwa_first_fit(&d, &mut m, DEFAULT_K) {
                lps.push(a);
            }
        }
        let r = reroute_lightpaths(&mut lps, &FailedElement::MetroNode(node), &mut m, DEFAULT_K);
        for lp in &lps {
            if !r.unmovable.contains(&lp.demand_id) {
                prop_assert!(!lp.path.contains(&node));
            }
        }
        prop_assert!(capacity_check_metro(&m, &lps).is_empty());
    }
}
