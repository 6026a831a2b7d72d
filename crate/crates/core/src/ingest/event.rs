use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{Address, TxHash};

/// Base units per whole token; both supported stablecoins use 6 decimals.
pub const BASE_UNITS_PER_TOKEN: u128 = 1_000_000;
const DECIMALS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Token {
    #[serde(rename = "USDT")]
    Usdt,
    #[serde(rename = "USDC")]
    Usdc,
}

impl Token {
    pub fn parse(raw: &str) -> Option<Token> {
        match raw.trim().to_ascii_uppercase().as_str() {
            "USDT" => Some(Token::Usdt),
            "USDC" => Some(Token::Usdc),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Token::Usdt => "USDT",
            Token::Usdc => "USDC",
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEvent {
    pub tx_hash: TxHash,
    pub log_index: u32,
    pub token: Token,
    pub from: Address,
    pub to: Address,
    /// Amount in base units (1 token = 10^6).
    pub amount: u128,
    /// Unix seconds, UTC.
    pub timestamp: i64,
}

impl TransferEvent {
    /// Canonical sort key: timestamp, then tx hash, then log index.
    pub fn order_key(&self) -> (i64, TxHash, u32) {
        (self.timestamp, self.tx_hash, self.log_index)
    }
}

/// Parses a non-negative decimal token amount into base units without
/// going through floating point.
pub fn parse_amount(raw: &str) -> Option<u128> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    let (int_part, frac_part) = match raw.split_once('.') {
        Some((i, f)) => (i, f),
        None => (raw, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if frac_part.len() > DECIMALS {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let whole: u128 = if int_part.is_empty() { 0 } else { int_part.parse().ok()? };
    let mut frac: u128 = if frac_part.is_empty() { 0 } else { frac_part.parse().ok()? };
    for _ in frac_part.len()..DECIMALS {
        frac *= 10;
    }
    whole.checked_mul(BASE_UNITS_PER_TOKEN)?.checked_add(frac)
}

/// Renders base units as the shortest exact decimal string.
pub fn format_amount(base_units: u128) -> String {
    let whole = base_units / BASE_UNITS_PER_TOKEN;
    let frac = base_units % BASE_UNITS_PER_TOKEN;
    if frac == 0 {
        return whole.to_string();
    }
    let digits = format!("{frac:06}");
    format!("{whole}.{}", digits.trim_end_matches('0'))
}

/// Accepts Unix seconds, `YYYY-MM-DD HH:MM:SS` (UTC) or ISO-8601 with a trailing `Z`.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(dt) = NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S") {
        return Some(dt.and_utc().timestamp());
    }
    let iso = raw.strip_suffix('Z')?;
    NaiveDateTime::parse_from_str(iso, "%Y-%m-%dT%H:%M:%S%.f")
        .ok()
        .map(|dt| dt.and_utc().timestamp())
}

/// Incoming and outgoing event positions (into [`EventLog::events`]) for one wallet.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WalletIndex {
    pub incoming: Vec<usize>,
    pub outgoing: Vec<usize>,
}

impl WalletIndex {
    /// All events touching the wallet, each once, in canonical order.
    pub fn touching(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.incoming.iter().chain(&self.outgoing).copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Immutable, canonically ordered transfer log with a per-wallet index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventLog {
    events: Vec<TransferEvent>,
    index: BTreeMap<Address, WalletIndex>,
    duplicates_collapsed: usize,
}

impl EventLog {
    /// Sorts events canonically, collapses repeated `(tx_hash, log_index)`
    /// pairs (keeping the first occurrence in canonical order) and builds the
    /// wallet index.
    pub fn from_events(mut events: Vec<TransferEvent>) -> Self {
        events.sort_by(|a, b| {
            a.order_key()
                .cmp(&b.order_key())
                .then_with(|| (a.token, a.from, a.to, a.amount).cmp(&(b.token, b.from, b.to, b.amount)))
        });
        let before = events.len();
        let mut seen = std::collections::HashSet::with_capacity(events.len());
        events.retain(|e| seen.insert((e.tx_hash, e.log_index)));
        let duplicates_collapsed = before - events.len();

        let mut index: BTreeMap<Address, WalletIndex> = BTreeMap::new();
        for (i, e) in events.iter().enumerate() {
            index.entry(e.from).or_default().outgoing.push(i);
            index.entry(e.to).or_default().incoming.push(i);
        }
        EventLog {
            events,
            index,
            duplicates_collapsed,
        }
    }

    pub fn empty() -> Self {
        Self::from_events(Vec::new())
    }

    pub fn events(&self) -> &[TransferEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn wallet(&self, address: &Address) -> Option<&WalletIndex> {
        self.index.get(address)
    }

    /// Wallets in canonical address order.
    pub fn wallets(&self) -> impl Iterator<Item = &Address> {
        self.index.keys()
    }

    pub fn wallet_count(&self) -> usize {
        self.index.len()
    }

    pub fn duplicates_collapsed(&self) -> usize {
        self.duplicates_collapsed
    }

    /// A new log without any event that touches `address`.
    pub fn without_wallet(&self, address: &Address) -> EventLog {
        let kept = self
            .events
            .iter()
            .filter(|e| e.from != *address && e.to != *address)
            .cloned()
            .collect();
        EventLog::from_events(kept)
    }
}
