//! Naive reference implementation of the wallet feature catalog.
//!
//! Every feature is recomputed by scanning the full event list, with no
//! indexes, no graph structure and no fan-out truncation. It only depends on
//! the public data types of the library.

use std::collections::{BTreeMap, BTreeSet};

use stableaml::ingest::{Address, LabelRegistry, MetadataTable, ServiceCategory, TransferEvent};

const DAY: i64 = 86_400;
const TOKEN: u128 = 1_000_000;

pub type OracleRow = BTreeMap<&'static str, f64>;

fn flagged(reg: &LabelRegistry, a: &Address) -> bool {
    reg.has(a, ServiceCategory::Flagged)
}

fn cat_of(name: &str) -> Option<ServiceCategory> {
    Some(match name {
        "Payment" => ServiceCategory::Payment,
        "Bet" => ServiceCategory::Bet,
        "Cex" => ServiceCategory::Cex,
        "Custody" => ServiceCategory::Custody,
        "Defi" => ServiceCategory::Defi,
        "Dex" => ServiceCategory::Dex,
        "Flagged" => ServiceCategory::Flagged,
        "Lending" => ServiceCategory::Lending,
        "Mixer" => ServiceCategory::Mixer,
        "Stake" => ServiceCategory::Stake,
        "Swap" => ServiceCategory::Swap,
        _ => return None,
    })
}

const SUFFIXES: [&str; 12] = [
    "Payment", "Bet", "Cex", "Custody", "Defi", "Dex", "Flagged", "Lending", "Mixer", "SC", "Stake", "Swap",
];

fn leak(s: String) -> &'static str {
    Box::leak(s.into_boxed_str())
}

fn carries(reg: &LabelRegistry, meta: &MetadataTable, a: &Address, suffix: &str) -> bool {
    match cat_of(suffix) {
        Some(c) => reg.has(a, c),
        None => meta.get(a).is_contract,
    }
}

struct Local {
    row: OracleRow,
    senders: usize,
    recipients: usize,
    n_in: usize,
    n_out: usize,
}

fn local(w: &Address, events: &[TransferEvent], reg: &LabelRegistry, meta: &MetadataTable) -> Local {
    let inc: Vec<&TransferEvent> = events.iter().filter(|e| e.to == *w).collect();
    let out: Vec<&TransferEvent> = events.iter().filter(|e| e.from == *w).collect();
    let touch: Vec<&TransferEvent> = events.iter().filter(|e| e.from == *w || e.to == *w).collect();
    let other = |e: &TransferEvent| if e.from == *w { e.to } else { e.from };
    let mut row = OracleRow::new();

    for s in SUFFIXES {
        let r = inc.iter().filter(|e| carries(reg, meta, &e.from, s)).count();
        let t = out.iter().filter(|e| carries(reg, meta, &e.to, s)).count();
        row.insert(leak(format!("receivedFrom{s}")), r as f64);
        row.insert(leak(format!("sentTo{s}")), t as f64);
    }
    let used = |c| touch.iter().filter(|e| reg.has(&other(e), c)).count() as f64;
    row.insert("usedWithAirdrop", used(ServiceCategory::Airdrop));
    row.insert("usedWithDao", used(ServiceCategory::Dao));
    let kyc = touch.iter().any(|e| reg.has(&other(e), ServiceCategory::Kyc));
    row.insert("hasKYC", kyc as u8 as f64);

    for (name, tokens) in [("transferOver1k", 1_000), ("transferOver5k", 5_000), ("transferOver10k", 10_000)] {
        let n = touch.iter().filter(|e| e.amount > tokens * TOKEN).count();
        row.insert(name, n as f64);
    }
    let same = |list: &[&TransferEvent]| {
        list.iter()
            .filter(|e| list.iter().filter(|f| f.amount == e.amount).count() >= 3)
            .count() as f64
    };
    row.insert("receiveMulSameValue", same(&inc));
    row.insert("sentMultipleSameValue", same(&out));
    let most_from = inc
        .iter()
        .map(|e| inc.iter().filter(|f| f.from == e.from).count())
        .max()
        .unwrap_or(0);
    let most_to = out
        .iter()
        .map(|e| out.iter().filter(|f| f.to == e.to).count())
        .max()
        .unwrap_or(0);
    row.insert("receiveSingleFrom", most_from as f64);
    row.insert("sentToSingleAddress", most_to as f64);

    let days: BTreeSet<i64> = touch.iter().map(|e| e.timestamp.div_euclid(DAY)).collect();
    let busy = days
        .iter()
        .filter(|d| touch.iter().filter(|e| e.timestamp.div_euclid(DAY) == **d).count() > 10)
        .count();
    row.insert("highFrequency", busy as f64);
    let first = touch.iter().map(|e| e.timestamp).min();
    let last = touch.iter().map(|e| e.timestamp).max();
    let long = matches!((first, last), (Some(a), Some(b)) if b - a > 90 * DAY);
    row.insert("isLongTermWallet", long as u8 as f64);
    let m = meta.get(w);
    row.insert("isWallet", (!m.is_contract) as u8 as f64);
    row.insert("isVerifiedContract", m.is_verified as u8 as f64);

    let mut circles = 0;
    for o in &out {
        for i in &inc {
            if o.to == i.from && o.to != *w && (o.timestamp - i.timestamp).abs() <= DAY {
                circles += 1;
            }
        }
    }
    row.insert("circleDetected", circles as f64);

    let key = |e: &&TransferEvent| (e.timestamp, e.tx_hash, e.log_index);
    let mut inc_sorted = inc.clone();
    inc_sorted.sort_by_key(key);
    let mut out_sorted = out.clone();
    out_sorted.sort_by_key(key);
    let mut taken = vec![false; out_sorted.len()];
    let mut proxies = 0;
    for i in &inc_sorted {
        for (k, o) in out_sorted.iter().enumerate() {
            let same_event = i.tx_hash == o.tx_hash && i.log_index == o.log_index;
            if !taken[k]
                && !same_event
                && o.amount == i.amount
                && o.timestamp >= i.timestamp
                && o.timestamp <= i.timestamp + DAY
            {
                taken[k] = true;
                proxies += 1;
                break;
            }
        }
    }
    row.insert("hasProxyBehaviour", proxies as f64);

    let sum_in: u128 = inc.iter().map(|e| e.amount).sum();
    let sum_out: u128 = out.iter().map(|e| e.amount).sum();
    let mix = if sum_in > 0 && sum_out > 0 {
        (sum_out as f64 - sum_in as f64).abs() / (sum_out as f64 + sum_in as f64)
    } else {
        1.0
    };
    row.insert("hasMixerBehaviour", mix);

    let flagged_cps: BTreeSet<Address> = touch
        .iter()
        .map(|e| other(e))
        .filter(|a| a != w && flagged(reg, a))
        .collect();
    row.insert("clusterScore", flagged_cps.len() as f64);
    let from = out
        .iter()
        .any(|e| out.iter().filter(|f| f.amount == e.amount && f.to == e.to).count() >= 3);
    let to = inc
        .iter()
        .any(|e| inc.iter().filter(|f| f.amount == e.amount && f.from == e.from).count() >= 3);
    row.insert("isPartOfClusterFrom", from as u8 as f64);
    row.insert("isPartOfClusterTo", to as u8 as f64);

    let senders: BTreeSet<Address> = inc.iter().map(|e| e.from).filter(|a| a != w).collect();
    let recipients: BTreeSet<Address> = out.iter().map(|e| e.to).filter(|a| a != w).collect();
    Local {
        row,
        senders: senders.len(),
        recipients: recipients.len(),
        n_in: inc.len(),
        n_out: out.len(),
    }
}

fn neighbors(w: &Address, events: &[TransferEvent]) -> BTreeSet<Address> {
    events
        .iter()
        .filter_map(|e| {
            if e.from == *w && e.to != *w {
                Some(e.to)
            } else if e.to == *w && e.from != *w {
                Some(e.from)
            } else {
                None
            }
        })
        .collect()
}

/// Wallets at exact distance 3, expanding only through the source and
/// non-service wallets.
fn third_ring(w: &Address, events: &[TransferEvent], reg: &LabelRegistry) -> BTreeSet<Address> {
    let mut seen: BTreeSet<Address> = BTreeSet::from([*w]);
    let mut frontier = BTreeSet::from([*w]);
    for _ in 0..3 {
        let mut next = BTreeSet::new();
        for u in &frontier {
            if u != w && reg.is_service(u) {
                continue;
            }
            for v in neighbors(u, events) {
                if !seen.contains(&v) {
                    next.insert(v);
                }
            }
        }
        seen.extend(next.iter().copied());
        frontier = next;
    }
    frontier
}

/// Full feature rows keyed by catalog name, for every wallet in `events`.
pub fn oracle_features(
    events: &[TransferEvent],
    reg: &LabelRegistry,
    meta: &MetadataTable,
) -> BTreeMap<Address, OracleRow> {
    let wallets: BTreeSet<Address> = events.iter().flat_map(|e| [e.from, e.to]).collect();
    let base: BTreeMap<Address, Local> = wallets.iter().map(|w| (*w, local(w, events, reg, meta))).collect();
    let mut out = BTreeMap::new();
    for w in &wallets {
        let mut row = base[w].row.clone();
        let cps: Vec<&Local> = neighbors(w, events)
            .iter()
            .filter(|u| !reg.is_service(u))
            .map(|u| &base[u])
            .collect();
        let count = |p: &dyn Fn(&Local) -> bool| cps.iter().filter(|l| p(l)).count() as f64;
        let g = |l: &Local, n: &str| l.row[n];
        for (feature, suffix) in [
            ("2ndWithBet", "Bet"),
            ("2ndWithCex", "Cex"),
            ("2ndWithCustody", "Custody"),
            ("2ndWithDefi", "Defi"),
            ("2ndWithDex", "Dex"),
            ("2ndWithFlagged", "Flagged"),
            ("2ndWithLending", "Lending"),
            ("2ndWithMixer", "Mixer"),
            ("2ndWithPayment", "Payment"),
            ("2ndWithSC", "SC"),
            ("2ndWithStaking", "Stake"),
            ("2ndWithSwap", "Swap"),
        ] {
            let r = format!("receivedFrom{suffix}");
            let s = format!("sentTo{suffix}");
            row.insert(feature, count(&|l| g(l, &r) + g(l, &s) >= 1.0));
        }
        row.insert(
            "2ndWithMixBehaviour",
            count(&|l| l.n_in >= 10 && l.n_out >= 10 && g(l, "hasMixerBehaviour") <= 0.05),
        );
        row.insert(
            "2ndWithMultipleSameValue",
            count(&|l| g(l, "receiveMulSameValue") + g(l, "sentMultipleSameValue") >= 1.0),
        );
        row.insert(
            "2ndWithCluster",
            count(&|l| g(l, "isPartOfClusterFrom") == 1.0 || g(l, "isPartOfClusterTo") == 1.0),
        );
        row.insert("2ndWithOver1k", count(&|l| g(l, "transferOver1k") >= 1.0));
        row.insert("2ndWithOver5k", count(&|l| g(l, "transferOver5k") >= 1.0));
        row.insert("2ndWithOver10k", count(&|l| g(l, "transferOver10k") >= 1.0));
        row.insert("2ndWithProxy", count(&|l| g(l, "hasProxyBehaviour") >= 1.0));
        row.insert("2ndWithSingleFrom", count(&|l| l.senders == 1));
        row.insert("2ndWithSingleTo", count(&|l| l.recipients == 1));

        let third = third_ring(w, events, reg).iter().filter(|a| flagged(reg, a)).count();
        row.insert("3rdWithFlagged", third as f64);

        let is_proxy = |a: &Address| base[a].row["hasProxyBehaviour"] >= 1.0;
        let rp = events.iter().filter(|e| e.to == *w && is_proxy(&e.from)).count();
        let sp = events.iter().filter(|e| e.from == *w && is_proxy(&e.to)).count();
        row.insert("receivedFromProxy", rp as f64);
        row.insert("sentToProxy", sp as f64);
        out.insert(*w, row);
    }
    out
}
