use serde::{Deserialize, Serialize};

use super::{EventLog, Token};

/// Summary of a parsed transfer log. Produced without touching the log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub events: usize,
    pub wallets: usize,
    pub usdt_events: usize,
    pub usdc_events: usize,
    pub first_timestamp: Option<i64>,
    pub last_timestamp: Option<i64>,
    pub span_seconds: i64,
    pub duplicates: usize,
    pub zero_amount: usize,
    pub self_transfers: usize,
}

pub fn validate_log(log: &EventLog) -> ValidationReport {
    let events = log.events();
    let first = events.first().map(|e| e.timestamp);
    let last = events.last().map(|e| e.timestamp);
    ValidationReport {
        events: events.len(),
        wallets: log.wallet_count(),
        usdt_events: events.iter().filter(|e| e.token == Token::Usdt).count(),
        usdc_events: events.iter().filter(|e| e.token == Token::Usdc).count(),
        first_timestamp: first,
        last_timestamp: last,
        span_seconds: match (first, last) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        },
        duplicates: log.duplicates_collapsed(),
        zero_amount: events.iter().filter(|e| e.amount == 0).count(),
        self_transfers: events.iter().filter(|e| e.from == e.to).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Address, TransferEvent, TxHash};

    fn ev(tag: u64, ts: i64) -> TransferEvent {
        TransferEvent {
            tx_hash: TxHash::from_tag(tag),
            log_index: 0,
            token: Token::Usdt,
            from: Address::from_tag(0, 0x03),
            to: Address::from_tag(0, 0xef),
            amount: 50_000_000_000,
            timestamp: ts,
        }
    }

    #[test]
    fn four_event_burst_span() {
        // 03:04:47, 03:04:59, 03:20:11, 03:20:23 on 2025-08-08
        let base = 1_754_622_287;
        let log = EventLog::from_events(vec![ev(1, base), ev(2, base + 12), ev(3, base + 924), ev(4, base + 936)]);
        let r = validate_log(&log);
        assert_eq!((r.events, r.wallets, r.span_seconds), (4, 2, 936));
        assert_eq!(r.zero_amount, 0);
    }

    #[test]
    fn empty_and_singleton() {
        let r = validate_log(&EventLog::empty());
        assert_eq!((r.events, r.wallets, r.span_seconds), (0, 0, 0));
        let r = validate_log(&EventLog::from_events(vec![ev(1, 10)]));
        assert_eq!((r.events, r.wallets, r.span_seconds), (1, 2, 0));
    }
}
