#![allow(dead_code)]

pub mod oracle;
pub mod shapley;

use rand::Rng;
use stableaml::ingest::{Address, LabelRegistry, MetadataTable, ServiceCategory, Token, TransferEvent, TxHash};
use stableaml::rng;

pub struct RawCorpus {
    pub events: Vec<TransferEvent>,
    pub registry: LabelRegistry,
    pub metadata: MetadataTable,
}

/// Small adversarial corpus: few distinct amounts, clustered timestamps,
/// self-transfers, overlapping labels and contract metadata.
pub fn random_corpus(seed: u64, wallets: usize, events: usize) -> RawCorpus {
    let mut r = rng::rng_from(seed);
    let addr = |i: usize| Address::from_tag(7, i as u64);
    let amounts: [u128; 8] = [
        1_000_000,
        5_000_000,
        999_999_999,
        1_000_000_000,
        1_000_000_001,
        5_000_000_001,
        10_000_000_000,
        10_000_000_001,
    ];
    let mut out = Vec::with_capacity(events);
    for k in 0..events {
        let from = r.random_range(0..wallets);
        let to = if r.random_bool(0.03) { from } else { r.random_range(0..wallets) };
        let day = r.random_range(0..120i64);
        let t = 1_700_000_000 + day * 86_400 + r.random_range(0..7_200i64) * (1 + (day % 3));
        out.push(TransferEvent {
            tx_hash: TxHash::from_tag(r.random_range(0..(events as u64 * 2))),
            log_index: k as u32,
            token: if r.random_bool(0.5) { Token::Usdt } else { Token::Usdc },
            from: addr(from),
            to: addr(to),
            amount: amounts[r.random_range(0..amounts.len())],
            timestamp: t,
        });
    }
    let mut registry = LabelRegistry::new();
    let mut metadata = MetadataTable::new();
    for i in 0..wallets {
        if r.random_bool(0.2) {
            let c = ServiceCategory::ALL[r.random_range(0..ServiceCategory::ALL.len())];
            registry.insert(addr(i), c);
            if r.random_bool(0.3) {
                let c2 = ServiceCategory::ALL[r.random_range(0..ServiceCategory::ALL.len())];
                registry.insert(addr(i), c2);
            }
        }
        if r.random_bool(0.15) {
            metadata.insert(addr(i), true, r.random_bool(0.5));
        }
    }
    RawCorpus {
        events: out,
        registry,
        metadata,
    }
}

use stableaml::features::{extract_all, feature_catalog, FeatureConfig};
use stableaml::graph::{build_graph, HopQueryConfig};
use stableaml::ingest::EventLog;

/// Feature-by-feature differences between `extract_all` (fan-out cap
/// disabled) and the reference implementation.
pub fn oracle_mismatches(events: &[TransferEvent], registry: &LabelRegistry, metadata: &MetadataTable) -> Vec<String> {
    let log = EventLog::from_events(events.to_vec());
    let graph = build_graph(&log);
    let cfg = FeatureConfig {
        hop: HopQueryConfig::uncapped(),
        ..FeatureConfig::default()
    };
    let fast = extract_all(&log, &graph, registry, metadata, &cfg);
    let slow = oracle::oracle_features(log.events(), registry, metadata);
    let mut diffs = Vec::new();
    if fast.len() != slow.len() {
        diffs.push(format!("wallet count {} vs {}", fast.len(), slow.len()));
    }
    let cat = feature_catalog();
    for (addr, row) in fast.iter() {
        let Some(reference) = slow.get(addr) else {
            diffs.push(format!("{addr} missing from reference"));
            continue;
        };
        for (j, name) in cat.names().enumerate() {
            let expected = reference.get(name).copied();
            if expected != Some(row[j]) {
                diffs.push(format!("{addr} {name}: got {} expected {expected:?}", row[j]));
            }
        }
    }
    diffs
}

/// Rows of `d` features with a planted class signal in feature `signal`.
pub fn planted_dataset(n: usize, d: usize, signal: usize, k: usize, seed: u64) -> stableaml::learners::Dataset {
    let mut r = rng::rng_from(seed);
    let y: Vec<usize> = (0..n).map(|i| i % k).collect();
    let x = ndarray::Array2::from_shape_fn((n, d), |(i, j)| {
        if j == signal {
            y[i] as f64 * 10.0 + r.random_range(0.0..1.0)
        } else {
            r.random_range(-5.0..5.0)
        }
    });
    let addrs = (0..n).map(|i| Address::from_tag(0xda7a, i as u64)).collect();
    stableaml::learners::Dataset::new(x, y, addrs, k).unwrap()
}

/// Rows with several weakly informative features.
pub fn noisy_dataset(n: usize, d: usize, k: usize, seed: u64) -> stableaml::learners::Dataset {
    let mut r = rng::rng_from(seed);
    let y: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
    let x = ndarray::Array2::from_shape_fn((n, d), |(i, j)| {
        let shift = if j % k == y[i] { 1.0 } else { 0.0 };
        shift + r.random_range(-1.5..1.5) + (j as f64) * 0.1
    });
    let addrs = (0..n).map(|i| Address::from_tag(0xda7b, i as u64)).collect();
    stableaml::learners::Dataset::new(x, y, addrs, k).unwrap()
}
