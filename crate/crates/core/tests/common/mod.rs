//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use autonoc_core::optical::{
    BackboneConfig, ChannelConfig, EdfaConfig, MetroConfig, MetroEdgeConfig, MetroTopology, Port,
    SpanConfig, TransponderConfig, POWER_FLOOR_DBM,
};
use autonoc_core::DomainId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Build a metro topology from `(a, b, length)` triples over nodes `n0..`.
pub fn topo(nodes: usize, wavelengths: usize, edges: &[(usize, usize, f64)]) -> MetroTopology {
    MetroTopology::from_config(&MetroConfig {
        name: "oracle".into(),
        wavelengths,
        nodes: (0..nodes).map(|i| format!("n{i}")).collect(),
        edges: edges
            .iter()
            .map(|&(a, b, l)| MetroEdgeConfig {
                a: format!("n{a}"),
                b: format!("n{b}"),
                length_km: l,
            })
            .collect(),
    })
    .unwrap()
}

/// All connected simple graphs on `n` labelled nodes, as edge lists.
pub fn connected_graphs(n: usize) -> Vec<Vec<(usize, usize)>> {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .collect();
    let mut out = Vec::new();
    for mask in 0u32..(1 << pairs.len()) {
        let edges: Vec<_> = pairs
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &p)| p)
            .collect();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(a, b) in &edges {
                let v = if a == u {
                    b
                } else if b == u {
                    a
                } else {
                    continue;
                };
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if seen.iter().all(|&s| s) {
            out.push(edges);
        }
    }
    out
}

/// Depth-first enumeration of every simple path, avoiding the given edges
/// and nodes.
pub fn all_simple_paths(
    t: &MetroTopology,
    src: usize,
    dst: usize,
    bad_edges: &[usize],
    bad_nodes: &[usize],
) -> Vec<(f64, Vec<usize>)> {
    fn go(
        t: &MetroTopology,
        cur: usize,
        dst: usize,
        bad_edges: &[usize],
        bad_nodes: &[usize],
        stack: &mut Vec<usize>,
        out: &mut Vec<(f64, Vec<usize>)>,
    ) {
        if cur == dst {
            out.push((t.path_length(stack).unwrap(), stack.clone()));
            return;
        }
        for (i, e) in t.edges.iter().enumerate() {
            let next = if e.a == cur {
                e.b
            } else if e.b == cur {
                e.a
            } else {
                continue;
            };
            if bad_edges.contains(&i) || bad_nodes.contains(&next) || stack.contains(&next) {
                continue;
            }
            stack.push(next);
            go(t, next, dst, bad_edges, bad_nodes, stack, out);
            stack.pop();
        }
    }
    let mut out = Vec::new();
    if bad_nodes.contains(&src) || bad_nodes.contains(&dst) {
        return out;
    }
    go(t, src, dst, bad_edges, bad_nodes, &mut vec![src], &mut out);
    out
}

/// The k best simple paths by (length, node list).
pub fn oracle_k_shortest(
    t: &MetroTopology,
    src: usize,
    dst: usize,
    k: usize,
) -> Vec<(f64, Vec<usize>)> {
    let mut all = all_simple_paths(t, src, dst, &[], &[]);
    all.sort_by(|a, b| {
        if (a.0 - b.0).abs() <= 1e-9 {
            a.1.cmp(&b.1)
        } else {
            a.0.total_cmp(&b.0)
        }
    });
    all.truncate(k);
    all
}

/// Exhaustive search over (path among k shortest, wavelength) pairs in
/// first-fit order; returns the first feasible pair.
pub fn oracle_first_fit(
    t: &MetroTopology,
    src: usize,
    dst: usize,
    k: usize,
) -> Option<(Vec<usize>, usize)> {
    let paths = oracle_k_shortest(t, src, dst, k);
    let feasible: Vec<(usize, usize)> = paths
        .iter()
        .enumerate()
        .flat_map(|(pi, (_, p))| {
            (0..t.wavelengths)
                .filter(move |&w| p.windows(2).all(|h| t.is_free(h[0], h[1], w)))
                .map(move |w| (pi, w))
        })
        .collect();
    feasible
        .into_iter()
        .min()
        .map(|(pi, w)| (paths[pi].1.clone(), w))
}

/// Cheap deterministic edge length with frequent ties.
pub fn edge_length(a: usize, b: usize) -> f64 {
    1.0 + ((a * 7 + b * 3) % 3) as f64
}

/// Random but valid backbone: 1..=6 spans, one or two amplifiers after each,
/// an optional booster, a sparse grid and a few tuned transponders.
pub fn random_config(seed: u64) -> BackboneConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_spans = rng.random_range(1..=6);
    let domain = |i: usize, n: usize| {
        if i < n.div_ceil(2) {
            DomainId::BackboneA
        } else {
            DomainId::BackboneB
        }
    };
    let spans: Vec<SpanConfig> = (0..n_spans)
        .map(|i| SpanConfig {
            id: format!("s{i}"),
            domain: domain(i, n_spans),
            length_km: rng.random_range(20.0..150.0),
            loss_db_per_km: rng.random_range(0.17..0.26),
            extra_loss_db: if rng.random_bool(0.3) {
                rng.random_range(0.0..3.0)
            } else {
                0.0
            },
        })
        .collect();
    let mut amplifiers = Vec::new();
    if rng.random_bool(0.3) {
        amplifiers.push(EdfaConfig {
            id: "booster".into(),
            domain: DomainId::BackboneA,
            gain_db: Some(rng.random_range(0.0..10.0)),
            nf_db: rng.random_range(3.0..10.0),
            after_span: None,
        });
    }
    for i in 0..n_spans {
        for k in 0..rng.random_range(1..=2) {
            amplifiers.push(EdfaConfig {
                id: format!("a{i}-{k}"),
                domain: domain(i, n_spans),
                gain_db: if rng.random_bool(0.5) {
                    None
                } else {
                    Some(rng.random_range(0.0..35.0))
                },
                nf_db: rng.random_range(3.0..10.0),
                after_span: Some(format!("s{i}")),
            });
        }
    }
    let mut channels = Vec::new();
    for index in 0..30u8 {
        if rng.random_bool(0.6) {
            channels.push(ChannelConfig {
                index,
                launch_power_dbm: rng.random_range(-3.0..3.0),
                dummy_loading: rng.random_bool(0.7),
            });
        }
    }
    let transponders = channels
        .iter()
        .filter(|_| rng.random_bool(0.2))
        .enumerate()
        .map(|(i, c)| TransponderConfig {
            id: format!("t{i}"),
            domain: DomainId::BackboneA,
            channel: Some(c.index),
            rate_gbps: Some(400),
        })
        .collect();
    BackboneConfig {
        spans,
        amplifiers,
        channels,
        transponders,
    }
}

/// Expected `(amplifier id, port, dBm)` in propagation order, computed
/// straight from the configuration.
pub fn oracle_profile(cfg: &BackboneConfig) -> Vec<(String, Port, f64)> {
    let tuned = |idx: u8| cfg.transponders.iter().any(|t| t.channel == Some(idx));
    let lit_mw: Vec<f64> = cfg
        .channels
        .iter()
        .filter(|c| c.dummy_loading || tuned(c.index))
        .map(|c| 10f64.powf(c.launch_power_dbm / 10.0))
        .collect();
    let dark = lit_mw.is_empty();
    let mut p = if dark {
        0.0
    } else {
        10.0 * lit_mw.iter().sum::<f64>().log10()
    };
    let mut out = Vec::new();
    let amp = |a: &EdfaConfig, default_gain: f64, p: &mut f64, out: &mut Vec<_>| {
        let floor = |v: f64| if dark { POWER_FLOOR_DBM } else { v };
        out.push((a.id.clone(), Port::Input, floor(*p)));
        *p += a.gain_db.unwrap_or(default_gain);
        out.push((a.id.clone(), Port::Output, floor(*p)));
    };
    for a in cfg.amplifiers.iter().filter(|a| a.after_span.is_none()) {
        amp(a, 0.0, &mut p, &mut out);
    }
    for s in &cfg.spans {
        let loss = s.length_km * s.loss_db_per_km + s.extra_loss_db;
        p -= loss;
        let after: Vec<_> = cfg
            .amplifiers
            .iter()
            .filter(|a| a.after_span.as_deref() == Some(&s.id))
            .collect();
        for (k, a) in after.into_iter().enumerate() {
            amp(
                a,
                if k == 0 { loss.min(35.0) } else { 0.0 },
                &mut p,
                &mut out,
            );
        }
    }
    out
}

pub fn equal_span_chain(n: usize) -> BackboneConfig {
    BackboneConfig {
        spans: (0..n)
            .map(|i| SpanConfig {
                id: format!("s{i}"),
                domain: DomainId::BackboneA,
                length_km: 110.0,
                loss_db_per_km: 0.2,
                extra_loss_db: 0.0,
            })
            .collect(),
        amplifiers: (0..n)
            .map(|i| EdfaConfig {
                id: format!("a{i}"),
                domain: DomainId::BackboneA,
                gain_db: None,
                nf_db: 5.0,
                after_span: Some(format!("s{i}")),
            })
            .collect(),
        channels: vec![ChannelConfig {
            index: 0,
            launch_power_dbm: 0.0,
            dummy_loading: false,
        }],
        transponders: vec![TransponderConfig {
            id: "t".into(),
            domain: DomainId::BackboneA,
            channel: Some(0),
            rate_gbps: Some(400),
        }],
    }
}

/// Reference MPI penalty from the eye-closure bound, written out in linear
/// amplitudes.
pub fn oracle_penalty(ratio_db: f64) -> f64 {
    let r = 10f64.powf(ratio_db / 10.0);
    let (hi, lo) = (1.0 + r.sqrt(), 1.0 - r.sqrt());
    10.0 * hi.log10() - 10.0 * lo.log10()
}
