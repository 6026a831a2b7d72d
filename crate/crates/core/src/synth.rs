//! Labeled synthetic corpora with planted laundering typologies.
//!
//! Generation is single-threaded and consumes one ChaCha8 stream in a fixed
//! order, so a configuration maps to exactly one corpus. Three behaviour
//! families are planted:
//!
//! * normal wallets cycle funds through exchanges, use DeFi services and pay
//!   peers; a minority use a mixer, receive salaries or fall victim to scams;
//! * cybercrime wallets withdraw fixed mixer denominations and push them
//!   through short chains of intermediaries into an exchange within minutes,
//!   or take part in same-value bursts and swap exits;
//! * blocklisted wallets place funds directly (exchange in, contract out),
//!   consolidate within small groups and go silent at a freeze date.
//!
//! Benign Poisson noise transfers blur the class boundaries.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{build_graph, density};
use crate::ingest::{
    write_labels, write_metadata, write_registry, write_transfers, Address, ClassLabels, EventLog, IngestError,
    LabelRegistry, MetadataTable, RiskClass, ServiceCategory, Token, TransferEvent, TxHash, BASE_UNITS_PER_TOKEN,
};
use crate::rng::{self, mix64, Rng};

const DAY: i64 = 86_400;
const CENT: u128 = BASE_UNITS_PER_TOKEN / 100;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("class proportions must be non-negative and sum to 1, got {0:?}")]
    Proportions([f64; 3]),
    #[error("at least 10 wallets are required, got {0}")]
    TooFewWallets(usize),
    #[error("infeasible configuration: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Labeled (non-service) wallets.
    pub n_wallets: usize,
    /// Normal, cybercrime, blocklisted.
    pub class_proportions: [f64; 3],
    pub seed: u64,
    pub span_days: u32,
    pub start_timestamp: i64,
    /// Mean benign noise transfers per wallet.
    pub noise_rate: f64,
    /// Identical transfers per same-value burst.
    pub burst_size: usize,
    /// Inclusive range of intermediary wallets per mixer chain.
    pub hop_range: (usize, usize),
    pub mixer_count: usize,
    pub cex_count: usize,
    /// Share of cybercrime wallets that withdraw from a mixer themselves.
    pub cyber_head_fraction: f64,
    /// Probability that a chain hop forwards the exact amount (else a fee is skimmed).
    pub exact_forward_rate: f64,
    /// Share of normal wallets that use a mixer for privacy.
    pub normal_mixer_rate: f64,
    /// Share of normal wallets that pay a flagged scam address.
    pub scam_victim_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_wallets: 5_000,
            class_proportions: [0.487, 0.365, 0.148],
            seed: 7,
            span_days: 90,
            start_timestamp: 1_704_067_200,
            noise_rate: 6.0,
            burst_size: 4,
            hop_range: (2, 4),
            mixer_count: 3,
            cex_count: 8,
            cyber_head_fraction: 0.55,
            exact_forward_rate: 0.5,
            normal_mixer_rate: 0.04,
            scam_victim_rate: 0.03,
        }
    }
}

/// Largest-remainder apportionment of `n` over the class proportions; ties
/// on the remainder go to the lower class index.
pub fn class_counts(n: usize, proportions: [f64; 3]) -> Result<[usize; 3], ConfigError> {
    let sum: f64 = proportions.iter().sum();
    if proportions.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(ConfigError::Proportions(proportions));
    }
    let quotas: Vec<f64> = proportions.iter().map(|p| p * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, q) in quotas.iter().enumerate() {
        counts[c] = q.floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let missing = n - counts.iter().sum::<usize>();
    for &c in order.iter().take(missing) {
        counts[c] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainRole {
    Head,
    Intermediary,
}

/// One planted pattern in a wallet's ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Typology {
    ExchangeCycling,
    ActiveTrader { busy_days: usize },
    Salary { payer: Address, amount: String, payments: usize },
    PrivacyMixer { mixer: Address },
    ScamVictim { flagged: Address },
    SmartWallet,
    /// Mixer → intermediaries → exchange; `path` excludes the mixer and exchange.
    MixerChain {
        role: ChainRole,
        mixer: Address,
        path: Vec<Address>,
        exchange: Address,
        first_timestamp: i64,
        last_timestamp: i64,
    },
    MixerRing { mixer: Address, denomination: String, withdrawals: usize },
    SameValueBurst { sender: Address, amount: String, count: usize },
    SameValueFanOut { recipients: Vec<Address>, amount: String },
    FlaggedInflow { source: Address, transfers: usize },
    SwapExit { transfers: usize },
    DirectPlacement { exchange_inflows: usize, contract_outflows: usize },
    Consolidation { hub: Address, group: usize },
    Freeze { at: i64 },
}

impl Typology {
    pub fn name(&self) -> &'static str {
        match self {
            Typology::ExchangeCycling => "exchange_cycling",
            Typology::ActiveTrader { .. } => "active_trader",
            Typology::Salary { .. } => "salary",
            Typology::PrivacyMixer { .. } => "privacy_mixer",
            Typology::ScamVictim { .. } => "scam_victim",
            Typology::SmartWallet => "smart_wallet",
            Typology::MixerChain { .. } => "mixer_chain",
            Typology::MixerRing { .. } => "mixer_ring",
            Typology::SameValueBurst { .. } => "same_value_burst",
            Typology::SameValueFanOut { .. } => "same_value_fan_out",
            Typology::FlaggedInflow { .. } => "flagged_inflow",
            Typology::SwapExit { .. } => "swap_exit",
            Typology::DirectPlacement { .. } => "direct_placement",
            Typology::Consolidation { .. } => "consolidation",
            Typology::Freeze { .. } => "freeze",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalletManifest {
    pub class: RiskClass,
    pub typologies: Vec<Typology>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub log: EventLog,
    pub registry: LabelRegistry,
    pub metadata: MetadataTable,
    pub labels: ClassLabels,
    pub manifest: BTreeMap<Address, WalletManifest>,
}

#[derive(Default)]
struct Services {
    cex: Vec<Address>,
    mixer: Vec<Address>,
    swap: Vec<Address>,
    dex: Vec<Address>,
    lending: Vec<Address>,
    stake: Vec<Address>,
    defi: Vec<Address>,
    payment: Vec<Address>,
    bet: Vec<Address>,
    custody: Vec<Address>,
    airdrop: Vec<Address>,
    dao: Vec<Address>,
    flagged: Vec<Address>,
    contracts: Vec<Address>,
}

struct Builder {
    cfg: SynthConfig,
    rng: Rng,
    events: Vec<TransferEvent>,
    tx_counter: u64,
    registry: LabelRegistry,
    metadata: MetadataTable,
    labels: ClassLabels,
    manifest: BTreeMap<Address, WalletManifest>,
    services: Services,
    by_class: [Vec<Address>; 3],
}

fn tokens_str(amount: u128) -> String {
    crate::ingest::format_amount(amount)
}

impl Builder {
    fn end(&self) -> i64 {
        self.cfg.start_timestamp + self.cfg.span_days as i64 * DAY
    }

    fn time(&mut self) -> i64 {
        let (s, e) = (self.cfg.start_timestamp, self.end());
        self.rng.random_range(s..e)
    }

    fn time_before(&mut self, limit: i64) -> i64 {
        let s = self.cfg.start_timestamp;
        self.rng.random_range(s..limit.max(s + 1))
    }

    /// Log-normal amount in whole cents, at least one cent.
    fn amount(&mut self, median_tokens: f64, sigma: f64) -> u128 {
        let d = LogNormal::new(median_tokens.ln(), sigma).expect("valid log-normal");
        let cents = (d.sample(&mut self.rng) * 100.0).round().max(1.0);
        cents as u128 * CENT
    }

    fn poisson(&mut self, mean: f64) -> usize {
        if mean <= 0.0 {
            return 0;
        }
        Poisson::new(mean).expect("positive mean").sample(&mut self.rng) as usize
    }

    fn pick(&mut self, pool: &[Address]) -> Address {
        *pool.choose(&mut self.rng).expect("non-empty pool")
    }

    fn emit(&mut self, from: Address, to: Address, amount: u128, timestamp: i64) {
        self.tx_counter += 1;
        let token = if self.rng.random_bool(0.6) { Token::Usdt } else { Token::Usdc };
        self.events.push(TransferEvent {
            tx_hash: TxHash::from_tag(mix64(self.cfg.seed ^ mix64(self.tx_counter))),
            log_index: 0,
            token,
            from,
            to,
            amount,
            timestamp,
        });
    }

    fn note(&mut self, w: Address, t: Typology) {
        self.manifest.get_mut(&w).expect("labeled wallet").typologies.push(t);
    }

    fn service_pool(&mut self, tag: u32, count: usize, cats: &[ServiceCategory], contract: bool) -> Vec<Address> {
        let pool: Vec<Address> = (0..count).map(|i| Address::from_tag(0x5e55_0000 + tag, i as u64 + 1)).collect();
        for a in &pool {
            for &c in cats {
                self.registry.insert(*a, c);
            }
            self.metadata.insert(*a, contract, contract);
        }
        pool
    }

    fn build_services(&mut self) {
        use ServiceCategory as C;
        let cfg = self.cfg.clone();
        let mut s = Services {
            cex: self.service_pool(1, cfg.cex_count, &[C::Cex, C::Kyc], false),
            mixer: self.service_pool(2, cfg.mixer_count, &[C::Mixer], true),
            swap: self.service_pool(3, 4, &[C::Swap], true),
            dex: self.service_pool(4, 4, &[C::Dex], true),
            lending: self.service_pool(5, 3, &[C::Lending], true),
            stake: self.service_pool(6, 3, &[C::Stake], true),
            defi: self.service_pool(7, 3, &[C::Defi], true),
            payment: self.service_pool(8, 3, &[C::Payment], false),
            bet: self.service_pool(9, 3, &[C::Bet], true),
            custody: self.service_pool(10, 2, &[C::Custody], false),
            airdrop: self.service_pool(11, 2, &[C::Airdrop], true),
            dao: self.service_pool(12, 2, &[C::Dao], true),
            flagged: self.service_pool(13, 6, &[C::Flagged], false),
            contracts: Vec::new(),
        };
        // the first mixer is itself sanctioned
        if let Some(m) = s.mixer.first() {
            self.registry.insert(*m, C::Flagged);
        }
        s.contracts = (0..10).map(|i| Address::from_tag(0x5e55_00ff, i + 1)).collect();
        for (i, a) in s.contracts.iter().enumerate() {
            self.metadata.insert(*a, true, i % 2 == 0);
        }
        self.services = s;
    }

    fn assign_classes(&mut self, counts: [usize; 3]) {
        let n = self.cfg.n_wallets;
        let order = rng::shuffled(n, &mut self.rng);
        let mut cursor = 0;
        for (c, &count) in counts.iter().enumerate() {
            let class = RiskClass::ALL[c];
            for &i in &order[cursor..cursor + count] {
                let w = Address::from_tag(0x7a11_e700, mix64(self.cfg.seed ^ i as u64));
                self.labels.insert(w, class).expect("fresh wallet");
                self.manifest.insert(
                    w,
                    WalletManifest {
                        class,
                        typologies: Vec::new(),
                    },
                );
                self.by_class[c].push(w);
            }
            cursor += count;
        }
        for pool in &mut self.by_class {
            pool.sort();
        }
    }

    fn defi_pool(&self) -> Vec<Address> {
        let s = &self.services;
        [&s.dex, &s.swap, &s.lending, &s.stake, &s.defi].into_iter().flatten().copied().collect()
    }

    fn normal_wallet(&mut self, w: Address) {
        let cex = self.services.cex.clone();
        let home = self.pick(&cex);
        let inflows = 1 + self.poisson(2.0);
        for _ in 0..inflows {
            let (a, t) = (self.amount(400.0, 1.2), self.time());
            self.emit(home, w, a, t);
        }
        for _ in 0..self.poisson(2.0) {
            let (a, t) = (self.amount(300.0, 1.2), self.time());
            self.emit(w, home, a, t);
        }
        self.note(w, Typology::ExchangeCycling);

        let s = &self.services;
        let usage: Vec<(Vec<Address>, f64)> = vec![
            (s.dex.clone(), 0.35),
            (s.swap.clone(), 0.2),
            (s.lending.clone(), 0.15),
            (s.stake.clone(), 0.15),
            (s.defi.clone(), 0.2),
            (s.payment.clone(), 0.2),
            (s.bet.clone(), 0.08),
            (s.custody.clone(), 0.05),
            (s.airdrop.clone(), 0.1),
            (s.dao.clone(), 0.05),
            (s.contracts.clone(), 0.15),
        ];
        for (pool, p) in usage {
            if self.rng.random_bool(p) {
                let svc = self.pick(&pool);
                for _ in 0..1 + self.poisson(1.0) {
                    let (a, t) = (self.amount(200.0, 1.3), self.time());
                    if self.rng.random_bool(0.6) {
                        self.emit(w, svc, a, t);
                    } else {
                        self.emit(svc, w, a, t);
                    }
                }
            }
        }

        let peers = self.by_class[0].clone();
        for _ in 0..self.poisson(2.0) {
            let p = self.pick(&peers);
            if p != w {
                let (a, t) = (self.amount(80.0, 1.4), self.time());
                self.emit(w, p, a, t);
            }
        }

        if self.rng.random_bool(0.12) {
            let days = 1 + self.rng.random_range(0..2usize);
            let dex = self.services.dex.clone();
            for _ in 0..days {
                let day0 = self.time().div_euclid(DAY) * DAY;
                let venue = self.pick(&dex);
                for _ in 0..self.rng.random_range(11..20) {
                    let t = day0 + self.rng.random_range(0..DAY);
                    let a = self.amount(150.0, 1.0);
                    if self.rng.random_bool(0.5) {
                        self.emit(w, venue, a, t);
                    } else {
                        self.emit(venue, w, a, t);
                    }
                }
            }
            self.note(w, Typology::ActiveTrader { busy_days: days });
        }

        if self.rng.random_bool(0.15) {
            let payer = self.pick(&peers);
            if payer != w {
                let amount = self.rng.random_range(10..60u128) * 100 * BASE_UNITS_PER_TOKEN;
                let first = self.cfg.start_timestamp + self.rng.random_range(0..20 * DAY);
                for k in 0..3 {
                    self.emit(payer, w, amount, first + k * 30 * DAY);
                }
                self.note(
                    w,
                    Typology::Salary {
                        payer,
                        amount: tokens_str(amount),
                        payments: 3,
                    },
                );
            }
        }

        if self.rng.random_bool(self.cfg.normal_mixer_rate) {
            let mixers = self.services.mixer.clone();
            let m = self.pick(&mixers);
            let d = self.denomination();
            let t = self.time_before(self.end() - 5 * DAY);
            self.emit(m, w, d, t);
            let out = self.amount(d as f64 / BASE_UNITS_PER_TOKEN as f64 * 0.9, 0.1);
            let later = t + self.rng.random_range(DAY..4 * DAY);
            self.emit(w, home, out, later);
            self.note(w, Typology::PrivacyMixer { mixer: m });
        }

        if self.rng.random_bool(self.cfg.scam_victim_rate) {
            let flagged = self.services.flagged.clone();
            let f = self.pick(&flagged);
            for _ in 0..1 + self.rng.random_range(0..2) {
                let (a, t) = (self.amount(500.0, 1.0), self.time());
                self.emit(w, f, a, t);
            }
            self.note(w, Typology::ScamVictim { flagged: f });
        }

        if self.rng.random_bool(0.03) {
            self.metadata.insert(w, true, true);
            self.note(w, Typology::SmartWallet);
        } else {
            self.metadata.insert(w, false, false);
        }
    }

    fn denomination(&mut self) -> u128 {
        let d = [1_000u128, 5_000, 10_000, 50_000];
        d[self.rng.random_range(0..d.len())] * BASE_UNITS_PER_TOKEN
    }

    fn skim(&mut self, amount: u128) -> u128 {
        if self.rng.random_bool(self.cfg.exact_forward_rate) {
            amount
        } else {
            let keep = 1.0 - self.rng.random_range(0.005..0.09);
            let cents = ((amount / CENT) as f64 * keep).round().max(1.0) as u128;
            cents * CENT
        }
    }

    /// Plants one mixer → path → exchange chain starting with a withdrawal
    /// of `amount` at `t0`; hops follow one to five minutes apart.
    fn chain(&mut self, mixer: Address, path: Vec<Address>, amount: u128, t0: i64) {
        let cex = self.services.cex.clone();
        let exchange = self.pick(&cex);
        self.emit(mixer, path[0], amount, t0);
        let (mut t, mut a) = (t0, amount);
        for hop in 0..path.len() {
            let to = if hop + 1 < path.len() { path[hop + 1] } else { exchange };
            t += self.rng.random_range(60..=300);
            a = self.skim(a);
            self.emit(path[hop], to, a, t);
        }
        for (i, w) in path.iter().enumerate() {
            let role = if i == 0 { ChainRole::Head } else { ChainRole::Intermediary };
            self.note(
                *w,
                Typology::MixerChain {
                    role,
                    mixer,
                    path: path.clone(),
                    exchange,
                    first_timestamp: t0,
                    last_timestamp: t,
                },
            );
        }
    }

    fn cybercrime(&mut self) {
        let cyber = self.by_class[1].clone();
        if cyber.is_empty() {
            return;
        }
        let mut order = cyber.clone();
        order.shuffle(&mut self.rng);
        let n_heads = ((cyber.len() as f64 * self.cfg.cyber_head_fraction).round() as usize).clamp(1, cyber.len());
        let (heads, others) = order.split_at(n_heads);
        let (heads, others) = (heads.to_vec(), others.to_vec());
        let mixers = self.services.mixer.clone();
        let cex = self.services.cex.clone();
        let (lo, hi) = self.cfg.hop_range;

        // every head starts a chain; extra chains cover any leftover wallets so
        // each non-head sits right after a mixer-touching head at least once
        let chains = heads.len().max(others.len());
        for c in 0..chains {
            let head = heads[c % heads.len()];
            let h = self.rng.random_range(lo..=hi).min(cyber.len());
            let mut path = vec![head];
            if let Some(&next) = others.get(c) {
                path.push(next);
            }
            while path.len() < h {
                let cand = self.pick(&cyber);
                if !path.contains(&cand) {
                    path.push(cand);
                }
            }
            let mixer = self.pick(&mixers);
            let d = self.denomination();
            let t0 = self.time_before(self.end() - DAY);
            self.chain(mixer, path, d, t0);

            if c < heads.len() {
                // further withdrawals of the same pool denomination form a ring
                let extra = self.rng.random_range(2..=3usize);
                for _ in 0..extra {
                    let t = self.time_before(self.end() - DAY);
                    self.emit(mixer, head, d, t);
                    let exit = self.pick(&cex);
                    let fwd = self.skim(d);
                    let later = t + self.rng.random_range(600..3 * 3600);
                    self.emit(head, exit, fwd, later);
                }
                self.note(
                    head,
                    Typology::MixerRing {
                        mixer,
                        denomination: tokens_str(d),
                        withdrawals: extra + 1,
                    },
                );
            }
        }

        for (k, &w) in others.iter().enumerate() {
            if k % 2 == 0 {
                let sender = self.pick(&cyber);
                if sender != w {
                    let amount = self.rng.random_range(1..100u128) * 1_000 * BASE_UNITS_PER_TOKEN;
                    let t0 = self.time_before(self.end() - DAY);
                    let n = self.cfg.burst_size;
                    let mut t = t0;
                    for _ in 0..n {
                        t += self.rng.random_range(30..600);
                        self.emit(sender, w, amount, t);
                    }
                    self.note(
                        w,
                        Typology::SameValueBurst {
                            sender,
                            amount: tokens_str(amount),
                            count: n,
                        },
                    );
                }
                let fan = self.rng.random_range(3..=5usize);
                let recipients: Vec<Address> = (0..fan).map(|_| self.pick(&cyber)).filter(|r| *r != w).collect();
                let amount = self.rng.random_range(1..50u128) * 500 * BASE_UNITS_PER_TOKEN;
                let t0 = self.time_before(self.end() - DAY);
                for (i, r) in recipients.iter().enumerate() {
                    self.emit(w, *r, amount, t0 + i as i64 * 120);
                }
                self.note(
                    w,
                    Typology::SameValueFanOut {
                        recipients,
                        amount: tokens_str(amount),
                    },
                );
            } else {
                let flagged = self.services.flagged.clone();
                let source = self.pick(&flagged);
                let n = 1 + self.rng.random_range(0..3usize);
                for _ in 0..n {
                    let (a, t) = (self.amount(20_000.0, 1.0), self.time());
                    self.emit(source, w, a, t);
                }
                self.note(w, Typology::FlaggedInflow { source, transfers: n });
            }
        }

        let swaps: Vec<Address> = self.services.swap.iter().chain(&self.services.dex).copied().collect();
        for &w in &cyber {
            if self.rng.random_bool(0.4) {
                let n = 1 + self.rng.random_range(0..3usize);
                let venue = self.pick(&swaps);
                for _ in 0..n {
                    let (a, t) = (self.amount(8_000.0, 1.0), self.time());
                    self.emit(w, venue, a, t);
                }
                self.note(w, Typology::SwapExit { transfers: n });
            }
            let contract = self.rng.random_bool(0.08);
            self.metadata.insert(w, contract, false);
        }
    }

    fn blocklisted(&mut self) -> BTreeMap<Address, i64> {
        let blocked = self.by_class[2].clone();
        let mut freeze = BTreeMap::new();
        let cex = self.services.cex.clone();
        let contracts = self.defi_pool().into_iter().chain(self.services.contracts.clone()).collect::<Vec<_>>();
        for &w in &blocked {
            let at = self.rng.random_range(self.cfg.start_timestamp + 20 * DAY..self.end() - DAY);
            freeze.insert(w, at);
            let ins = 1 + self.rng.random_range(0..3usize);
            let src = self.pick(&cex);
            for _ in 0..ins {
                let (a, t) = (self.amount(8_000.0, 1.0), self.time_before(at));
                self.emit(src, w, a, t);
            }
            let outs = 1 + self.rng.random_range(0..4usize);
            for _ in 0..outs {
                let sc = self.pick(&contracts);
                let (a, t) = (self.amount(5_000.0, 1.0), self.time_before(at));
                self.emit(w, sc, a, t);
            }
            self.note(
                w,
                Typology::DirectPlacement {
                    exchange_inflows: ins,
                    contract_outflows: outs,
                },
            );
            if self.rng.random_bool(0.3) {
                let flagged = self.services.flagged.clone();
                let f = self.pick(&flagged);
                let (a, t) = (self.amount(10_000.0, 1.0), self.time_before(at));
                self.emit(f, w, a, t);
                self.note(w, Typology::FlaggedInflow { source: f, transfers: 1 });
            }
            self.note(w, Typology::Freeze { at });
            self.metadata.insert(w, false, false);
        }

        let mut order = blocked.clone();
        order.shuffle(&mut self.rng);
        let mut rest = order.as_slice();
        while rest.len() >= 3 {
            let size = self.rng.random_range(3..=6usize).min(rest.len());
            let (group, tail) = rest.split_at(size);
            rest = tail;
            let hub = group[0];
            for &m in &group[1..] {
                let limit = freeze[&m].min(freeze[&hub]);
                for _ in 0..1 + self.rng.random_range(0..2) {
                    let (a, t) = (self.amount(3_000.0, 1.0), self.time_before(limit));
                    self.emit(m, hub, a, t);
                }
            }
            for &m in group {
                self.note(m, Typology::Consolidation { hub, group: group.len() });
            }
        }
        freeze
    }

    fn noise(&mut self) {
        let wallets: Vec<Address> = self.by_class.iter().flatten().copied().collect();
        let mut sorted = wallets.clone();
        sorted.sort();
        let cex = self.services.cex.clone();
        for &w in &sorted {
            for _ in 0..self.poisson(self.cfg.noise_rate) {
                let other = if self.rng.random_bool(0.5) {
                    self.pick(&cex)
                } else {
                    self.pick(&sorted)
                };
                if other == w {
                    continue;
                }
                let (a, t) = (self.amount(150.0, 1.5), self.time());
                if self.rng.random_bool(0.5) {
                    self.emit(w, other, a, t);
                } else {
                    self.emit(other, w, a, t);
                }
            }
        }
    }
}

pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus, ConfigError> {
    if cfg.n_wallets < 10 {
        return Err(ConfigError::TooFewWallets(cfg.n_wallets));
    }
    let counts = class_counts(cfg.n_wallets, cfg.class_proportions)?;
    for (c, (&n, &p)) in counts.iter().zip(&cfg.class_proportions).enumerate() {
        if p > 0.0 && n == 0 {
            return Err(ConfigError::Infeasible(format!(
                "class {} has positive proportion but no wallets at n={}",
                RiskClass::ALL[c],
                cfg.n_wallets
            )));
        }
    }
    if counts[1] > 0 && counts[1] < 3 {
        return Err(ConfigError::Infeasible("mixer chains need at least 3 cybercrime wallets".into()));
    }
    let (lo, hi) = cfg.hop_range;
    if lo < 2 || hi < lo {
        return Err(ConfigError::Infeasible(format!("hop range {lo}..={hi} must start at 2 or more")));
    }
    if cfg.mixer_count == 0 || cfg.cex_count == 0 || cfg.burst_size < 3 || cfg.span_days < 30 {
        return Err(ConfigError::Infeasible(
            "need mixers, exchanges, bursts of at least 3 and a span of at least 30 days".into(),
        ));
    }
    for p in [cfg.cyber_head_fraction, cfg.exact_forward_rate, cfg.normal_mixer_rate, cfg.scam_victim_rate] {
        if !(0.0..=1.0).contains(&p) {
            return Err(ConfigError::Infeasible(format!("rate {p} outside [0, 1]")));
        }
    }
    if !(cfg.noise_rate >= 0.0 && cfg.noise_rate.is_finite()) {
        return Err(ConfigError::Infeasible("noise rate must be finite and non-negative".into()));
    }

    let mut b = Builder {
        cfg: cfg.clone(),
        rng: rng::stream(cfg.seed, 0x5717_4e, 0),
        events: Vec::new(),
        tx_counter: 0,
        registry: LabelRegistry::new(),
        metadata: MetadataTable::new(),
        labels: ClassLabels::new(),
        manifest: BTreeMap::new(),
        services: Services::default(),
        by_class: Default::default(),
    };
    b.build_services();
    b.assign_classes(counts);
    for w in b.by_class[0].clone() {
        b.normal_wallet(w);
    }
    b.cybercrime();
    let freeze = b.blocklisted();
    b.noise();

    let events: Vec<TransferEvent> = std::mem::take(&mut b.events)
        .into_iter()
        .filter(|e| {
            let alive = |a: &Address| freeze.get(a).is_none_or(|&f| e.timestamp < f);
            alive(&e.from) && alive(&e.to)
        })
        .collect();

    Ok(SynthCorpus {
        config: cfg.clone(),
        log: EventLog::from_events(events),
        registry: b.registry,
        metadata: b.metadata,
        labels: b.labels,
        manifest: b.manifest,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub wallets: usize,
    pub labeled_wallets: usize,
    pub service_addresses: usize,
    pub events: usize,
    pub class_counts: [usize; 3],
    pub manifest_class_counts: [usize; 3],
    pub density: Option<f64>,
    pub mixer_interactions: usize,
    pub typology_counts: BTreeMap<String, usize>,
}

pub fn corpus_stats(c: &SynthCorpus) -> CorpusStats {
    let graph = build_graph(&c.log);
    let mixers = c.registry.with_category(ServiceCategory::Mixer);
    let mixer_interactions = c
        .log
        .events()
        .iter()
        .filter(|e| mixers.contains(&e.from) || mixers.contains(&e.to))
        .count();
    let mut manifest_class_counts = [0; 3];
    let mut typology_counts = BTreeMap::new();
    for m in c.manifest.values() {
        manifest_class_counts[m.class.code()] += 1;
        let kinds: BTreeSet<&str> = m.typologies.iter().map(Typology::name).collect();
        for k in kinds {
            *typology_counts.entry(k.to_string()).or_insert(0) += 1;
        }
    }
    CorpusStats {
        wallets: c.log.wallet_count(),
        labeled_wallets: c.labels.len(),
        service_addresses: c.registry.len(),
        events: c.log.len(),
        class_counts: c.labels.class_counts(),
        manifest_class_counts,
        density: density(&graph).ok(),
        mixer_interactions,
        typology_counts,
    }
}

/// `typologies.json`: configuration plus the per-wallet typology ledger.
pub fn manifest_json(c: &SynthCorpus) -> serde_json::Value {
    serde_json::json!({
        "config": c.config,
        "wallets": c.manifest,
    })
}

/// The corpus files in their on-disk form, in a fixed order.
pub fn serialize_corpus(c: &SynthCorpus) -> Result<Vec<(&'static str, Vec<u8>)>, IngestError> {
    let mut transfers = Vec::new();
    write_transfers(&c.log, &mut transfers)?;
    let mut registry = Vec::new();
    write_registry(&c.registry, &mut registry)?;
    let mut labels = Vec::new();
    write_labels(&c.labels, &mut labels)?;
    let mut metadata = Vec::new();
    write_metadata(&c.metadata, &mut metadata)?;
    let mut manifest = serde_json::to_vec_pretty(&manifest_json(c)).map_err(|e| IngestError::Io(e.to_string()))?;
    manifest.push(b'\n');
    Ok(vec![
        ("transfers.csv", transfers),
        ("registry.csv", registry),
        ("labels.csv", labels),
        ("metadata.csv", metadata),
        ("typologies.json", manifest),
    ])
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 over every serialized corpus file, names included.
pub fn corpus_digest(c: &SynthCorpus) -> Result<String, IngestError> {
    let mut h = Sha256::new();
    for (name, bytes) in serialize_corpus(c)? {
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

/// Writes the corpus files into `dir`, returning (file name, SHA-256) pairs.
pub fn write_corpus(c: &SynthCorpus, dir: &Path) -> Result<Vec<(String, String)>, IngestError> {
    std::fs::create_dir_all(dir).map_err(|e| IngestError::Io(e.to_string()))?;
    let mut digests = Vec::new();
    for (name, bytes) in serialize_corpus(c)? {
        let mut f = std::fs::File::create(dir.join(name)).map_err(|e| IngestError::Io(e.to_string()))?;
        f.write_all(&bytes).map_err(|e| IngestError::Io(e.to_string()))?;
        digests.push((name.to_string(), sha256_hex(&bytes)));
    }
    Ok(digests)
}
