mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use stableaml::graph::{build_graph, counterparties, density, k_hop_set, Direction, HopQueryConfig, ServiceMask};
use stableaml::ingest::{Address, EventLog};
use stableaml::synth::{generate_corpus, SynthConfig};

/// Shortest undirected distance up to `max` by enumerating every simple path
/// from `w`; services may end a path but never sit inside one.
fn path_distances(
    adj: &BTreeMap<Address, BTreeSet<Address>>,
    services: &BTreeSet<Address>,
    w: Address,
    max: usize,
) -> BTreeMap<Address, usize> {
    fn walk(
        adj: &BTreeMap<Address, BTreeSet<Address>>,
        services: &BTreeSet<Address>,
        path: &mut Vec<Address>,
        max: usize,
        best: &mut BTreeMap<Address, usize>,
    ) {
        let here = *path.last().unwrap();
        let len = path.len() - 1;
        let e = best.entry(here).or_insert(len);
        *e = (*e).min(len);
        if len == max || (len > 0 && services.contains(&here)) {
            return;
        }
        for &n in adj.get(&here).into_iter().flatten() {
            if !path.contains(&n) {
                path.push(n);
                walk(adj, services, path, max, best);
                path.pop();
            }
        }
    }
    let mut best = BTreeMap::new();
    walk(adj, services, &mut vec![w], max, &mut best);
    best
}

#[test]
fn sparse_default_regime() {
    let c = generate_corpus(&SynthConfig {
        n_wallets: 1_000,
        ..SynthConfig::default()
    })
    .unwrap();
    let g = build_graph(&c.log);
    assert!(density(&g).unwrap() < 0.01);
}

#[test]
fn capped_neighbors_prefer_volume() {
    let c = common::random_corpus(3, 40, 600);
    let log = EventLog::from_events(c.events);
    let g = build_graph(&log);
    let none = ServiceMask::none(&g);
    let cfg = HopQueryConfig {
        fanout_cap: 3,
        exclude_services: false,
        direction: Direction::Both,
    };
    for w in g.nodes() {
        let capped = counterparties(&g, w, &none, &cfg).unwrap();
        let all = counterparties(&g, w, &none, &HopQueryConfig::uncapped()).unwrap();
        assert_eq!(capped.len(), all.len().min(3));
        let vol = |a: &Address| {
            g.edge(w, a).map_or(0, |e| e.volume) + g.edge(a, w).map_or(0, |e| e.volume)
        };
        let floor = capped.iter().map(vol).min().unwrap_or(0);
        assert!(all.iter().filter(|a| !capped.contains(a)).all(|a| vol(a) <= floor));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn volume_is_conserved(seed in 0u64..10_000, wallets in 2usize..60, events in 0usize..400) {
        let c = common::random_corpus(seed, wallets, events);
        let log = EventLog::from_events(c.events);
        let g = build_graph(&log);
        let total: u128 = log.events().iter().map(|e| e.amount).sum();
        prop_assert_eq!(g.total_volume(), total);
        for e in g.edges() {
            let sum: u128 = e.event_refs.iter().map(|&i| log.events()[i].amount).sum();
            prop_assert_eq!(sum, e.volume);
            prop_assert_eq!(e.count, e.event_refs.len());
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        g.write_edges(&mut a).unwrap();
        build_graph(&log).write_edges(&mut b).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn hop_sets_match_path_enumeration(seed in 0u64..10_000, wallets in 5usize..40, events in 5usize..120) {
        let c = common::random_corpus(seed, wallets, events);
        let log = EventLog::from_events(c.events.clone());
        let g = build_graph(&log);
        let mut adj: BTreeMap<Address, BTreeSet<Address>> = BTreeMap::new();
        for e in &c.events {
            if e.from != e.to {
                adj.entry(e.from).or_default().insert(e.to);
                adj.entry(e.to).or_default().insert(e.from);
            }
        }
        let services: BTreeSet<Address> = g.nodes().iter().filter(|a| c.registry.is_service(a)).copied().collect();
        let mask = ServiceMask::from_registry(&g, &c.registry);
        for exclude in [true, false] {
            let cfg = HopQueryConfig { exclude_services: exclude, ..HopQueryConfig::uncapped() };
            let blocked = if exclude { services.clone() } else { BTreeSet::new() };
            for &w in g.nodes() {
                let dist = path_distances(&adj, &blocked, w, 3);
                for k in [2, 3] {
                    let want: Vec<Address> = dist.iter().filter(|(_, &d)| d == k).map(|(a, _)| *a).collect();
                    prop_assert_eq!(k_hop_set(&g, &w, k, &mask, &cfg).unwrap(), want);
                }
            }
        }
    }
}
