use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::catalog::{Feature, FEATURE_COUNT};
use super::FeatureVector;
use crate::graph::{HopQueryConfig, ServiceMask, TransactionGraph};
use crate::ingest::{
    Address, ClassLabels, EventLog, LabelRegistry, MetadataTable, RiskClass, ServiceCategory, TransferEvent,
    WalletIndex, BASE_UNITS_PER_TOKEN,
};

const DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Minimum size of an identical-amount group.
    pub same_value_min_group: usize,
    pub proxy_window_seconds: i64,
    pub circle_window_seconds: i64,
    /// A UTC day counts as high-frequency when it has strictly more transfers.
    pub high_freq_daily_threshold: usize,
    /// Active span must strictly exceed this many days.
    pub long_term_days: i64,
    pub mixer_balance_epsilon: f64,
    pub mixer_min_transfers_each_way: usize,
    /// Transfer-size thresholds in whole tokens (strict "over").
    pub value_thresholds: [u64; 3],
    /// Relative amount tolerance for proxy forwarding; 0 means exact equality.
    pub proxy_amount_tolerance: f64,
    pub hop: HopQueryConfig,
    /// Also treat non-normal ground-truth wallets as flagged. Leaks labels
    /// into features; off by default.
    pub flagged_from_labels: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            same_value_min_group: 3,
            proxy_window_seconds: DAY,
            circle_window_seconds: DAY,
            high_freq_daily_threshold: 10,
            long_term_days: 90,
            mixer_balance_epsilon: 0.05,
            mixer_min_transfers_each_way: 10,
            value_thresholds: [1_000, 5_000, 10_000],
            proxy_amount_tolerance: 0.0,
            hop: HopQueryConfig::default(),
            flagged_from_labels: false,
        }
    }
}

impl FeatureConfig {
    fn threshold_units(&self, i: usize) -> u128 {
        self.value_thresholds[i] as u128 * BASE_UNITS_PER_TOKEN
    }
}

/// Where a counterparty attribute comes from.
#[derive(Clone, Copy)]
enum Source {
    Category(ServiceCategory),
    Contract,
}

const RECEIVED: [(Feature, Source); 12] = [
    (Feature::ReceivedFromPayment, Source::Category(ServiceCategory::Payment)),
    (Feature::ReceivedFromBet, Source::Category(ServiceCategory::Bet)),
    (Feature::ReceivedFromCex, Source::Category(ServiceCategory::Cex)),
    (Feature::ReceivedFromCustody, Source::Category(ServiceCategory::Custody)),
    (Feature::ReceivedFromDefi, Source::Category(ServiceCategory::Defi)),
    (Feature::ReceivedFromDex, Source::Category(ServiceCategory::Dex)),
    (Feature::ReceivedFromFlagged, Source::Category(ServiceCategory::Flagged)),
    (Feature::ReceivedFromLending, Source::Category(ServiceCategory::Lending)),
    (Feature::ReceivedFromMixer, Source::Category(ServiceCategory::Mixer)),
    (Feature::ReceivedFromSc, Source::Contract),
    (Feature::ReceivedFromStake, Source::Category(ServiceCategory::Stake)),
    (Feature::ReceivedFromSwap, Source::Category(ServiceCategory::Swap)),
];

const SENT: [(Feature, Source); 12] = [
    (Feature::SentToBet, Source::Category(ServiceCategory::Bet)),
    (Feature::SentToCex, Source::Category(ServiceCategory::Cex)),
    (Feature::SentToCustody, Source::Category(ServiceCategory::Custody)),
    (Feature::SentToDefi, Source::Category(ServiceCategory::Defi)),
    (Feature::SentToDex, Source::Category(ServiceCategory::Dex)),
    (Feature::SentToFlagged, Source::Category(ServiceCategory::Flagged)),
    (Feature::SentToLending, Source::Category(ServiceCategory::Lending)),
    (Feature::SentToMixer, Source::Category(ServiceCategory::Mixer)),
    (Feature::SentToPayment, Source::Category(ServiceCategory::Payment)),
    (Feature::SentToSc, Source::Contract),
    (Feature::SentToStake, Source::Category(ServiceCategory::Stake)),
    (Feature::SentToSwap, Source::Category(ServiceCategory::Swap)),
];

/// Second-degree features keyed on a counterparty's interaction counts:
/// (feature, received-from feature, sent-to feature).
const SECOND_BY_INTERACTION: [(Feature, Feature, Feature); 12] = [
    (Feature::SecondWithBet, Feature::ReceivedFromBet, Feature::SentToBet),
    (Feature::SecondWithCex, Feature::ReceivedFromCex, Feature::SentToCex),
    (Feature::SecondWithCustody, Feature::ReceivedFromCustody, Feature::SentToCustody),
    (Feature::SecondWithDefi, Feature::ReceivedFromDefi, Feature::SentToDefi),
    (Feature::SecondWithDex, Feature::ReceivedFromDex, Feature::SentToDex),
    (Feature::SecondWithFlagged, Feature::ReceivedFromFlagged, Feature::SentToFlagged),
    (Feature::SecondWithLending, Feature::ReceivedFromLending, Feature::SentToLending),
    (Feature::SecondWithMixer, Feature::ReceivedFromMixer, Feature::SentToMixer),
    (Feature::SecondWithPayment, Feature::ReceivedFromPayment, Feature::SentToPayment),
    (Feature::SecondWithSc, Feature::ReceivedFromSc, Feature::SentToSc),
    (Feature::SecondWithStaking, Feature::ReceivedFromStake, Feature::SentToStake),
    (Feature::SecondWithSwap, Feature::ReceivedFromSwap, Feature::SentToSwap),
];

/// Lookup of counterparty attributes shared by every wallet.
pub struct LabelView<'a> {
    registry: &'a LabelRegistry,
    metadata: &'a MetadataTable,
    flagged: BTreeSet<Address>,
}

impl<'a> LabelView<'a> {
    pub fn new(registry: &'a LabelRegistry, metadata: &'a MetadataTable) -> Self {
        LabelView {
            registry,
            metadata,
            flagged: registry.with_category(ServiceCategory::Flagged),
        }
    }

    /// Flagged set extended with every non-normal labeled wallet.
    pub fn with_label_flags(mut self, labels: &ClassLabels) -> Self {
        self.flagged
            .extend(labels.iter().filter(|(_, c)| **c != RiskClass::Normal).map(|(a, _)| *a));
        self
    }

    pub fn flagged(&self) -> &BTreeSet<Address> {
        &self.flagged
    }

    fn has(&self, address: &Address, category: ServiceCategory) -> bool {
        match category {
            ServiceCategory::Flagged => self.flagged.contains(address),
            other => self.registry.has(address, other),
        }
    }

    fn matches(&self, address: &Address, source: Source) -> bool {
        match source {
            Source::Category(c) => self.has(address, c),
            Source::Contract => self.metadata.get(address).is_contract,
        }
    }
}

/// Pass-one profile of a wallet: every feature that depends only on the
/// wallet's own transfers, plus counts used by second-degree predicates.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseProfile {
    pub values: FeatureVector,
    pub distinct_senders: usize,
    pub distinct_recipients: usize,
    pub incoming: usize,
    pub outgoing: usize,
}

impl BaseProfile {
    fn get(&self, f: Feature) -> f64 {
        self.values.get(f)
    }

    fn interacted(&self, received: Feature, sent: Feature) -> bool {
        self.get(received) + self.get(sent) >= 1.0
    }

    fn mix_behaviour(&self, cfg: &FeatureConfig) -> bool {
        self.incoming >= cfg.mixer_min_transfers_each_way
            && self.outgoing >= cfg.mixer_min_transfers_each_way
            && self.get(Feature::HasMixerBehaviour) <= cfg.mixer_balance_epsilon
    }
}

/// Pass-one profiles for every wallet of the log, in canonical address order.
#[derive(Debug, Clone)]
pub struct BaseProfiles {
    pub addresses: Vec<Address>,
    pub profiles: Vec<BaseProfile>,
}

impl BaseProfiles {
    pub fn get(&self, address: &Address) -> Option<&BaseProfile> {
        self.addresses
            .binary_search(address)
            .ok()
            .map(|i| &self.profiles[i])
    }
}

fn counterparty(e: &TransferEvent, w: &Address) -> Address {
    if e.from == *w {
        e.to
    } else {
        e.from
    }
}

fn write_interaction(out: &mut FeatureVector, w: &Address, log: &EventLog, idx: &WalletIndex, view: &LabelView) {
    let events = log.events();
    for &i in &idx.incoming {
        let sender = &events[i].from;
        for (feature, source) in RECEIVED {
            if view.matches(sender, source) {
                out.add(feature, 1.0);
            }
        }
    }
    for &i in &idx.outgoing {
        let recipient = &events[i].to;
        for (feature, source) in SENT {
            if view.matches(recipient, source) {
                out.add(feature, 1.0);
            }
        }
    }
    let mut kyc = false;
    for i in idx.touching() {
        let cp = counterparty(&events[i], w);
        if view.has(&cp, ServiceCategory::Airdrop) {
            out.add(Feature::UsedWithAirdrop, 1.0);
        }
        if view.has(&cp, ServiceCategory::Dao) {
            out.add(Feature::UsedWithDao, 1.0);
        }
        kyc |= view.has(&cp, ServiceCategory::Kyc);
    }
    out.set(Feature::HasKyc, kyc as u8 as f64);
}

/// Number of transfers in identical-amount groups of at least `min_group`.
fn same_value_members(amounts: impl Iterator<Item = u128>, min_group: usize) -> usize {
    let mut groups: HashMap<u128, usize> = HashMap::new();
    for a in amounts {
        *groups.entry(a).or_default() += 1;
    }
    groups.values().filter(|&&n| n >= min_group).sum()
}

fn max_per_key(keys: impl Iterator<Item = Address>) -> usize {
    let mut counts: HashMap<Address, usize> = HashMap::new();
    for k in keys {
        *counts.entry(k).or_default() += 1;
    }
    counts.values().copied().max().unwrap_or(0)
}

fn write_transfer(out: &mut FeatureVector, log: &EventLog, idx: &WalletIndex, cfg: &FeatureConfig) {
    let events = log.events();
    let touching = idx.touching();
    for (k, feature) in [Feature::TransferOver1k, Feature::TransferOver5k, Feature::TransferOver10k]
        .into_iter()
        .enumerate()
    {
        let threshold = cfg.threshold_units(k);
        let n = touching.iter().filter(|&&i| events[i].amount > threshold).count();
        out.set(feature, n as f64);
    }
    let min_group = cfg.same_value_min_group;
    out.set(
        Feature::ReceiveMulSameValue,
        same_value_members(idx.incoming.iter().map(|&i| events[i].amount), min_group) as f64,
    );
    out.set(
        Feature::SentMultipleSameValue,
        same_value_members(idx.outgoing.iter().map(|&i| events[i].amount), min_group) as f64,
    );
    out.set(
        Feature::ReceiveSingleFrom,
        max_per_key(idx.incoming.iter().map(|&i| events[i].from)) as f64,
    );
    out.set(
        Feature::SentToSingleAddress,
        max_per_key(idx.outgoing.iter().map(|&i| events[i].to)) as f64,
    );
}

fn write_temporal_direct(
    out: &mut FeatureVector,
    w: &Address,
    log: &EventLog,
    idx: &WalletIndex,
    metadata: &MetadataTable,
    cfg: &FeatureConfig,
) {
    let events = log.events();
    let touching = idx.touching();
    let mut per_day: HashMap<i64, usize> = HashMap::new();
    for &i in &touching {
        *per_day.entry(events[i].timestamp.div_euclid(DAY)).or_default() += 1;
    }
    let busy = per_day.values().filter(|&&n| n > cfg.high_freq_daily_threshold).count();
    out.set(Feature::HighFrequency, busy as f64);
    // touching is in canonical (time) order
    let long_term = match (touching.first(), touching.last()) {
        (Some(&a), Some(&b)) => events[b].timestamp - events[a].timestamp > cfg.long_term_days * DAY,
        _ => false,
    };
    out.set(Feature::IsLongTermWallet, long_term as u8 as f64);
    let meta = metadata.get(w);
    out.set(Feature::IsWallet, (!meta.is_contract) as u8 as f64);
    out.set(Feature::IsVerifiedContract, meta.is_verified as u8 as f64);
}

fn amounts_match(incoming: u128, outgoing: u128, tolerance: f64) -> bool {
    if tolerance <= 0.0 {
        return incoming == outgoing;
    }
    (incoming.abs_diff(outgoing) as f64) <= tolerance * incoming as f64
}

/// Greedy earliest-first one-to-one matching of inflows to equal-amount
/// outflows that occur within the proxy window after them.
fn proxy_matches(log: &EventLog, idx: &WalletIndex, cfg: &FeatureConfig) -> usize {
    let events = log.events();
    let outgoing = &idx.outgoing;
    let mut used = vec![false; outgoing.len()];
    let mut matched = 0;
    for &i in &idx.incoming {
        let t_in = events[i].timestamp;
        let start = outgoing.partition_point(|&o| events[o].timestamp < t_in);
        for (slot, &o) in outgoing.iter().enumerate().skip(start) {
            if events[o].timestamp > t_in + cfg.proxy_window_seconds {
                break;
            }
            if used[slot] || o == i {
                continue;
            }
            if amounts_match(events[i].amount, events[o].amount, cfg.proxy_amount_tolerance) {
                used[slot] = true;
                matched += 1;
                break;
            }
        }
    }
    matched
}

/// (outgoing to u, incoming from u) pairs with |Δt| within the window, u ≠ w.
fn reciprocal_pairs(w: &Address, log: &EventLog, idx: &WalletIndex, window: i64) -> usize {
    let events = log.events();
    let mut inflow_times: HashMap<Address, Vec<i64>> = HashMap::new();
    for &i in &idx.incoming {
        if events[i].from != *w {
            inflow_times.entry(events[i].from).or_default().push(events[i].timestamp);
        }
    }
    let mut pairs = 0;
    for &o in &idx.outgoing {
        let e = &events[o];
        if e.to == *w {
            continue;
        }
        if let Some(times) = inflow_times.get(&e.to) {
            // incoming lists are in canonical order, hence time-sorted
            let lo = times.partition_point(|&t| t < e.timestamp - window);
            let hi = times.partition_point(|&t| t <= e.timestamp + window);
            pairs += hi - lo;
        }
    }
    pairs
}

fn repeated_pair(pairs: impl Iterator<Item = (u128, Address)>, min_group: usize) -> bool {
    let mut groups: HashMap<(u128, Address), usize> = HashMap::new();
    for p in pairs {
        *groups.entry(p).or_default() += 1;
    }
    groups.values().any(|&n| n >= min_group)
}

fn write_local_derived(
    out: &mut FeatureVector,
    w: &Address,
    log: &EventLog,
    idx: &WalletIndex,
    view: &LabelView,
    cfg: &FeatureConfig,
) {
    let events = log.events();
    out.set(
        Feature::CircleDetected,
        reciprocal_pairs(w, log, idx, cfg.circle_window_seconds) as f64,
    );
    out.set(Feature::HasProxyBehaviour, proxy_matches(log, idx, cfg) as f64);

    let total_in: u128 = idx.incoming.iter().map(|&i| events[i].amount).sum();
    let total_out: u128 = idx.outgoing.iter().map(|&i| events[i].amount).sum();
    out.set(Feature::HasMixerBehaviour, mixer_imbalance(total_in, total_out));

    let flagged: BTreeSet<Address> = idx
        .touching()
        .into_iter()
        .map(|i| counterparty(&events[i], w))
        .filter(|cp| cp != w && view.flagged.contains(cp))
        .collect();
    out.set(Feature::ClusterScore, flagged.len() as f64);

    let min_group = cfg.same_value_min_group;
    let from = repeated_pair(idx.outgoing.iter().map(|&i| (events[i].amount, events[i].to)), min_group);
    let to = repeated_pair(idx.incoming.iter().map(|&i| (events[i].amount, events[i].from)), min_group);
    out.set(Feature::IsPartOfClusterFrom, from as u8 as f64);
    out.set(Feature::IsPartOfClusterTo, to as u8 as f64);
}

/// |out − in| / (out + in) when both sides are positive, else 1.
pub fn mixer_imbalance(total_in: u128, total_out: u128) -> f64 {
    if total_in == 0 || total_out == 0 {
        return 1.0;
    }
    total_in.abs_diff(total_out) as f64 / (total_in + total_out) as f64
}

fn base_profile(w: &Address, log: &EventLog, view: &LabelView, cfg: &FeatureConfig) -> BaseProfile {
    let empty = WalletIndex::default();
    let idx = log.wallet(w).unwrap_or(&empty);
    let mut values = FeatureVector::zeros();
    write_interaction(&mut values, w, log, idx, view);
    write_transfer(&mut values, log, idx, cfg);
    write_temporal_direct(&mut values, w, log, idx, view.metadata, cfg);
    write_local_derived(&mut values, w, log, idx, view, cfg);
    let events = log.events();
    let senders: BTreeSet<Address> = idx.incoming.iter().map(|&i| events[i].from).filter(|a| a != w).collect();
    let recipients: BTreeSet<Address> = idx.outgoing.iter().map(|&i| events[i].to).filter(|a| a != w).collect();
    BaseProfile {
        values,
        distinct_senders: senders.len(),
        distinct_recipients: recipients.len(),
        incoming: idx.incoming.len(),
        outgoing: idx.outgoing.len(),
    }
}

/// Feature vector of a wallet with no transfers in the log.
pub fn inactive_profile(w: &Address, registry: &LabelRegistry, metadata: &MetadataTable, cfg: &FeatureConfig) -> FeatureVector {
    base_profile(w, &EventLog::empty(), &LabelView::new(registry, metadata), cfg).values
}

/// Pass one over every wallet of the log.
pub fn base_profiles(log: &EventLog, view: &LabelView, cfg: &FeatureConfig) -> BaseProfiles {
    let addresses: Vec<Address> = log.wallets().copied().collect();
    let profiles = addresses.par_iter().map(|w| base_profile(w, log, view, cfg)).collect();
    BaseProfiles { addresses, profiles }
}

fn write_network(
    out: &mut FeatureVector,
    node: usize,
    log: &EventLog,
    graph: &TransactionGraph,
    services: &ServiceMask,
    view: &LabelView,
    base: &BaseProfiles,
    cfg: &FeatureConfig,
) {
    let w = graph.address(node);
    let profile_of = |n: usize| &base.profiles[n];
    let cps = graph.counterparty_ids(node, services, &cfg.hop);
    let count = |pred: &dyn Fn(&BaseProfile) -> bool| cps.iter().filter(|&&c| pred(profile_of(c))).count() as f64;

    for (feature, received, sent) in SECOND_BY_INTERACTION {
        out.set(feature, count(&|p| p.interacted(received, sent)));
    }
    out.set(Feature::SecondWithMixBehaviour, count(&|p| p.mix_behaviour(cfg)));
    out.set(
        Feature::SecondWithMultipleSameValue,
        count(&|p| p.get(Feature::ReceiveMulSameValue) + p.get(Feature::SentMultipleSameValue) >= 1.0),
    );
    out.set(
        Feature::SecondWithCluster,
        count(&|p| p.get(Feature::IsPartOfClusterFrom) >= 1.0 || p.get(Feature::IsPartOfClusterTo) >= 1.0),
    );
    out.set(Feature::SecondWithOver1k, count(&|p| p.get(Feature::TransferOver1k) >= 1.0));
    out.set(Feature::SecondWithOver5k, count(&|p| p.get(Feature::TransferOver5k) >= 1.0));
    out.set(Feature::SecondWithOver10k, count(&|p| p.get(Feature::TransferOver10k) >= 1.0));
    out.set(Feature::SecondWithProxy, count(&|p| p.get(Feature::HasProxyBehaviour) >= 1.0));
    out.set(Feature::SecondWithSingleFrom, count(&|p| p.distinct_senders == 1));
    out.set(Feature::SecondWithSingleTo, count(&|p| p.distinct_recipients == 1));

    let third = graph.hop_levels(node, 3, services, &cfg.hop).pop().unwrap_or_default();
    let flagged_third = third
        .iter()
        .filter(|&&n| view.flagged.contains(&graph.address(n)))
        .count();
    out.set(Feature::ThirdWithFlagged, flagged_third as f64);

    let is_proxy = |a: &Address| {
        graph
            .id(a)
            .is_some_and(|n| profile_of(n).get(Feature::HasProxyBehaviour) >= 1.0)
    };
    let events = log.events();
    if let Some(idx) = log.wallet(&w) {
        let from_proxy = idx.incoming.iter().filter(|&&i| is_proxy(&events[i].from)).count();
        let to_proxy = idx.outgoing.iter().filter(|&&i| is_proxy(&events[i].to)).count();
        out.set(Feature::ReceivedFromProxy, from_proxy as f64);
        out.set(Feature::SentToProxy, to_proxy as f64);
    }
}

/// Every wallet's full feature vector, in canonical address order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub addresses: Vec<Address>,
    pub rows: Vec<FeatureVector>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, address: &Address) -> Option<&FeatureVector> {
        self.addresses.binary_search(address).ok().map(|i| &self.rows[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Address, &FeatureVector)> {
        self.addresses.iter().zip(&self.rows)
    }
}

/// Slices of the catalog owned by each extraction stage.
pub const INTERACTION_RANGE: std::ops::Range<usize> = 0..27;
pub const DERIVED_RANGE: std::ops::Range<usize> = 27..57;
pub const TRANSFER_RANGE: std::ops::Range<usize> = 57..64;
pub const TEMPORAL_DIRECT_RANGE: std::ops::Range<usize> = 64..68;

fn slice<const N: usize>(v: &FeatureVector, range: std::ops::Range<usize>) -> [f64; N] {
    v.as_slice()[range].try_into().expect("catalog slice width")
}

/// The 27 interaction counts of `w`, flagged set taken from the registry.
pub fn interaction_features(
    w: &Address,
    log: &EventLog,
    registry: &LabelRegistry,
    metadata: &MetadataTable,
) -> [f64; 27] {
    let view = LabelView::new(registry, metadata);
    let mut out = FeatureVector::zeros();
    if let Some(idx) = log.wallet(w) {
        write_interaction(&mut out, w, log, idx, &view);
    }
    slice(&out, INTERACTION_RANGE)
}

pub fn transfer_features(w: &Address, log: &EventLog, cfg: &FeatureConfig) -> [f64; 7] {
    let mut out = FeatureVector::zeros();
    if let Some(idx) = log.wallet(w) {
        write_transfer(&mut out, log, idx, cfg);
    }
    slice(&out, TRANSFER_RANGE)
}

pub fn temporal_direct_features(
    w: &Address,
    log: &EventLog,
    metadata: &MetadataTable,
    cfg: &FeatureConfig,
) -> [f64; 4] {
    let mut out = FeatureVector::zeros();
    let empty = WalletIndex::default();
    write_temporal_direct(&mut out, w, log, log.wallet(w).unwrap_or(&empty), metadata, cfg);
    slice(&out, TEMPORAL_DIRECT_RANGE)
}

/// The 30 derived features of `w`, given pass-one profiles of all wallets.
pub fn derived_network_features(
    w: &Address,
    log: &EventLog,
    graph: &TransactionGraph,
    view: &LabelView,
    base: &BaseProfiles,
    cfg: &FeatureConfig,
) -> Option<[f64; 30]> {
    let node = graph.id(w)?;
    let services = ServiceMask::from_registry(graph, view.registry);
    let mut out = base.profiles[base.addresses.binary_search(w).ok()?].values.clone();
    write_network(&mut out, node, log, graph, &services, view, base, cfg);
    Some(slice(&out, DERIVED_RANGE))
}

/// Full two-pass extraction over every wallet in the log.
pub fn extract_all(
    log: &EventLog,
    graph: &TransactionGraph,
    registry: &LabelRegistry,
    metadata: &MetadataTable,
    cfg: &FeatureConfig,
) -> FeatureMatrix {
    extract_all_with_labels(log, graph, registry, metadata, None, cfg)
}

/// As [`extract_all`]; when `cfg.flagged_from_labels` is set the non-normal
/// wallets of `labels` join the flagged set.
pub fn extract_all_with_labels(
    log: &EventLog,
    graph: &TransactionGraph,
    registry: &LabelRegistry,
    metadata: &MetadataTable,
    labels: Option<&ClassLabels>,
    cfg: &FeatureConfig,
) -> FeatureMatrix {
    let mut view = LabelView::new(registry, metadata);
    if cfg.flagged_from_labels {
        if let Some(labels) = labels {
            view = view.with_label_flags(labels);
        }
    }
    let base = base_profiles(log, &view, cfg);
    assert_eq!(
        base.addresses.as_slice(),
        graph.nodes(),
        "graph must be built from the same event log"
    );
    let services = ServiceMask::from_registry(graph, registry);
    let rows: Vec<FeatureVector> = (0..base.addresses.len())
        .into_par_iter()
        .map(|node| {
            let mut v = base.profiles[node].values.clone();
            write_network(&mut v, node, log, graph, &services, &view, &base, cfg);
            v
        })
        .collect();
    debug_assert!(rows.iter().all(|r| r.as_slice().len() == FEATURE_COUNT));
    FeatureMatrix {
        addresses: base.addresses,
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::ingest::{parse_amount, Token, TxHash};

    fn addr(t: u64) -> Address {
        Address::from_tag(0, t)
    }

    fn ev(n: u64, from: u64, to: u64, tokens: &str, t: i64) -> TransferEvent {
        TransferEvent {
            tx_hash: TxHash::from_tag(n),
            log_index: 0,
            token: Token::Usdt,
            from: addr(from),
            to: addr(to),
            amount: parse_amount(tokens).unwrap(),
            timestamp: t,
        }
    }

    fn run(events: Vec<TransferEvent>, registry: &LabelRegistry, metadata: &MetadataTable) -> FeatureMatrix {
        let log = EventLog::from_events(events);
        let g = build_graph(&log);
        extract_all(&log, &g, registry, metadata, &FeatureConfig::default())
    }

    fn value(m: &FeatureMatrix, w: u64, f: Feature) -> f64 {
        m.get(&addr(w)).unwrap().get(f)
    }

    #[test]
    fn mixer_withdrawal_and_cex_deposits() {
        let mut reg = LabelRegistry::new();
        reg.insert(addr(1), ServiceCategory::Mixer);
        reg.insert(addr(9), ServiceCategory::Cex);
        reg.insert(addr(9), ServiceCategory::Kyc);
        let meta = MetadataTable::new();
        let m = run(
            vec![
                ev(1, 1, 2, "90", 0),
                ev(2, 2, 9, "10", 10),
                ev(3, 2, 9, "20", 20),
                ev(4, 2, 9, "30", 30),
            ],
            &reg,
            &meta,
        );
        assert_eq!(value(&m, 2, Feature::ReceivedFromMixer), 1.0);
        assert_eq!(value(&m, 2, Feature::SentToCex), 3.0);
        assert_eq!(value(&m, 2, Feature::HasKyc), 1.0);
    }

    #[test]
    fn unlabeled_counterparties_give_zero_interactions() {
        let log = EventLog::from_events(vec![ev(1, 1, 2, "5", 0), ev(2, 2, 3, "5", 5)]);
        let reg = LabelRegistry::new();
        let v = interaction_features(&addr(2), &log, &reg, &MetadataTable::new());
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn large_transfer_counts_on_both_endpoints() {
        let log = EventLog::from_events(vec![ev(1, 1, 2, "1092761.61", 0)]);
        let cfg = FeatureConfig::default();
        for w in [1, 2] {
            let v = transfer_features(&addr(w), &log, &cfg);
            assert_eq!(&v[4..], &[1.0, 1.0, 1.0]);
        }
    }

    #[test]
    fn identical_inflows_and_group_minimum() {
        let burst: Vec<_> = (0..4).map(|i| ev(i + 1, 1, 2, "50000", i as i64 * 300)).collect();
        let log = EventLog::from_events(burst);
        let cfg = FeatureConfig::default();
        let v = transfer_features(&addr(2), &log, &cfg);
        assert_eq!(v[0], 4.0);
        assert_eq!(v[1], 4.0);

        let pair = EventLog::from_events(vec![ev(1, 1, 2, "7", 0), ev(2, 3, 2, "7", 1)]);
        assert_eq!(transfer_features(&addr(2), &pair, &cfg)[0], 0.0);
    }

    #[test]
    fn temporal_rules() {
        let cfg = FeatureConfig::default();
        let meta = MetadataTable::new();
        let busy: Vec<_> = (0..11).map(|i| ev(i + 1, 1, 2, "1", 3600 + i as i64)).collect();
        let v = temporal_direct_features(&addr(2), &EventLog::from_events(busy), &meta, &cfg);
        assert_eq!(v[0], 1.0);
        let ten: Vec<_> = (0..10).map(|i| ev(i + 1, 1, 2, "1", 3600 + i as i64)).collect();
        let v = temporal_direct_features(&addr(2), &EventLog::from_events(ten), &meta, &cfg);
        assert_eq!(v[0], 0.0);

        // 2024-01-01 and 2024-04-15
        let span = EventLog::from_events(vec![ev(1, 1, 2, "1", 1_704_067_200), ev(2, 2, 1, "1", 1_713_139_200)]);
        let v = temporal_direct_features(&addr(2), &span, &meta, &cfg);
        assert_eq!(v, [0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn mixer_chain_second_and_third_degree() {
        let mut reg = LabelRegistry::new();
        reg.insert(addr(1), ServiceCategory::Mixer);
        reg.insert(addr(1), ServiceCategory::Flagged);
        reg.insert(addr(4), ServiceCategory::Cex);
        let m = run(
            vec![ev(1, 1, 2, "90", 0), ev(2, 2, 3, "82.416", 600), ev(3, 3, 4, "80", 1560)],
            &reg,
            &MetadataTable::new(),
        );
        assert_eq!(value(&m, 3, Feature::SecondWithMixer), 1.0);
        assert_eq!(value(&m, 4, Feature::ThirdWithFlagged), 1.0);
        assert_eq!(value(&m, 2, Feature::HasProxyBehaviour), 0.0);
    }

    #[test]
    fn circle_window_boundary() {
        let reg = LabelRegistry::new();
        let meta = MetadataTable::new();
        let inside = run(vec![ev(1, 1, 2, "5", 0), ev(2, 2, 1, "5", 23 * 3600)], &reg, &meta);
        assert_eq!(value(&inside, 1, Feature::CircleDetected), 1.0);
        assert_eq!(value(&inside, 2, Feature::CircleDetected), 1.0);
        let outside = run(vec![ev(1, 1, 2, "5", 0), ev(2, 2, 1, "5", 25 * 3600)], &reg, &meta);
        assert_eq!(value(&outside, 1, Feature::CircleDetected), 0.0);
    }

    #[test]
    fn mixer_score_endpoints() {
        let reg = LabelRegistry::new();
        let m = run(
            vec![ev(1, 1, 2, "5", 0), ev(2, 2, 3, "5", 10)],
            &reg,
            &MetadataTable::new(),
        );
        assert_eq!(value(&m, 2, Feature::HasMixerBehaviour), 0.0);
        assert_eq!(value(&m, 1, Feature::HasMixerBehaviour), 1.0);
        assert_eq!(mixer_imbalance(30, 10), 0.5);
    }

    #[test]
    fn proxy_matching_is_one_to_one() {
        let reg = LabelRegistry::new();
        // two inflows of 5, one outflow of 5: only one match
        let m = run(
            vec![ev(1, 1, 2, "5", 0), ev(2, 3, 2, "5", 5), ev(3, 2, 4, "5", 10)],
            &reg,
            &MetadataTable::new(),
        );
        assert_eq!(value(&m, 2, Feature::HasProxyBehaviour), 1.0);
        assert_eq!(value(&m, 1, Feature::SentToProxy), 1.0);
        assert_eq!(value(&m, 4, Feature::ReceivedFromProxy), 1.0);

        let log = EventLog::from_events(vec![ev(1, 1, 2, "90", 0), ev(2, 2, 3, "82.416", 60)]);
        let idx = log.wallet(&addr(2)).unwrap();
        let loose = FeatureConfig {
            proxy_amount_tolerance: 0.1,
            ..FeatureConfig::default()
        };
        assert_eq!(proxy_matches(&log, idx, &loose), 1);
    }

    #[test]
    fn empty_log_and_isolated_self_transfer() {
        let reg = LabelRegistry::new();
        let meta = MetadataTable::new();
        assert!(run(Vec::new(), &reg, &meta).is_empty());
        let m = run(vec![ev(1, 5, 5, "20000", 0)], &reg, &meta);
        let v = m.get(&addr(5)).unwrap();
        assert!(v.as_slice()[INTERACTION_RANGE].iter().all(|&x| x == 0.0));
        assert_eq!(v.get(Feature::TransferOver10k), 1.0);
        assert_eq!(v.get(Feature::CircleDetected), 0.0);
        assert_eq!(v.get(Feature::ClusterScore), 0.0);
    }

    #[test]
    fn label_flags_only_when_enabled() {
        let reg = LabelRegistry::new();
        let meta = MetadataTable::new();
        let log = EventLog::from_events(vec![ev(1, 1, 2, "5", 0)]);
        let g = build_graph(&log);
        let mut labels = ClassLabels::new();
        labels.insert(addr(1), RiskClass::Cybercrime).unwrap();
        let off = extract_all_with_labels(&log, &g, &reg, &meta, Some(&labels), &FeatureConfig::default());
        assert_eq!(off.get(&addr(2)).unwrap().get(Feature::ReceivedFromFlagged), 0.0);
        let cfg = FeatureConfig {
            flagged_from_labels: true,
            ..FeatureConfig::default()
        };
        let on = extract_all_with_labels(&log, &g, &reg, &meta, Some(&labels), &cfg);
        assert_eq!(on.get(&addr(2)).unwrap().get(Feature::ReceivedFromFlagged), 1.0);
        assert_eq!(on.get(&addr(2)).unwrap().get(Feature::ClusterScore), 1.0);
    }
}
