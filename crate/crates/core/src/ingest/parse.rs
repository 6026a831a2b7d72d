use std::io::{Read, Write};

use super::event::{format_amount, parse_amount, parse_timestamp};
use super::{
    normalize_address, ClassLabels, EventLog, IngestError, LabelRegistry, MetadataTable, RiskClass, RowError,
    ServiceCategory, Token, TransferEvent, TxHash,
};

pub const TRANSFERS_HEADER: [&str; 7] = ["tx_hash", "log_index", "token", "from", "to", "amount", "timestamp"];
pub const REGISTRY_HEADER: [&str; 2] = ["address", "service"];
pub const LABELS_HEADER: [&str; 2] = ["address", "class"];
pub const METADATA_HEADER: [&str; 3] = ["address", "is_contract", "is_verified"];

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Number of malformed rows tolerated before the parse aborts.
    pub error_budget: usize,
}

/// Result of parsing a transfer file: the log plus any skipped rows.
#[derive(Debug, Clone)]
pub struct ParsedTransfers {
    pub log: EventLog,
    pub row_errors: Vec<RowError>,
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), IngestError> {
    let header = rdr.headers().map_err(|e| IngestError::Io(e.to_string()))?;
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(IngestError::BadHeader {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Parses one data row of a transfer file.
pub fn parse_transfer_row(line: u64, record: &csv::StringRecord) -> Result<TransferEvent, RowError> {
    let err = |message: String| RowError { line, message };
    if record.len() != TRANSFERS_HEADER.len() {
        return Err(err(format!("expected 7 fields, found {}", record.len())));
    }
    let tx_hash = TxHash::parse(&record[0]).map_err(|e| err(e.to_string()))?;
    let log_index: u32 = record[1]
        .parse()
        .map_err(|_| err(format!("bad log_index {:?}", &record[1])))?;
    let token = Token::parse(&record[2]).ok_or_else(|| err(format!("unsupported token {:?}", &record[2])))?;
    let from = normalize_address(&record[3]).map_err(|e| err(e.to_string()))?;
    let to = normalize_address(&record[4]).map_err(|e| err(e.to_string()))?;
    let amount = parse_amount(&record[5]).ok_or_else(|| err(format!("bad amount {:?}", &record[5])))?;
    let timestamp = parse_timestamp(&record[6]).ok_or_else(|| err(format!("bad timestamp {:?}", &record[6])))?;
    Ok(TransferEvent {
        tx_hash,
        log_index,
        token,
        from,
        to,
        amount,
        timestamp,
    })
}

pub fn parse_transfers<R: Read>(source: R) -> Result<EventLog, IngestError> {
    parse_transfers_with(source, ParseOptions::default()).map(|p| p.log)
}

pub fn parse_transfers_with<R: Read>(source: R, opts: ParseOptions) -> Result<ParsedTransfers, IngestError> {
    let mut rdr = reader(source);
    check_header(&mut rdr, &TRANSFERS_HEADER)?;
    let mut events = Vec::new();
    let mut row_errors = Vec::new();
    for result in rdr.records() {
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                row_errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                if row_errors.len() > opts.error_budget {
                    return Err(IngestError::ParseAborted {
                        budget: opts.error_budget,
                        errors: row_errors,
                    });
                }
                continue;
            }
        };
        match parse_transfer_row(line_of(&record), &record) {
            Ok(event) => events.push(event),
            Err(row) => {
                row_errors.push(row);
                if row_errors.len() > opts.error_budget {
                    return Err(IngestError::ParseAborted {
                        budget: opts.error_budget,
                        errors: row_errors,
                    });
                }
            }
        }
    }
    Ok(ParsedTransfers {
        log: EventLog::from_events(events),
        row_errors,
    })
}

pub fn parse_label_registry<R: Read>(source: R) -> Result<LabelRegistry, IngestError> {
    let mut rdr = reader(source);
    check_header(&mut rdr, &REGISTRY_HEADER)?;
    let mut registry = LabelRegistry::new();
    for result in rdr.records() {
        let record = result.map_err(|e| IngestError::Io(e.to_string()))?;
        let line = line_of(&record);
        if record.len() != 2 {
            return Err(IngestError::Row(RowError {
                line,
                message: "expected 2 fields".into(),
            }));
        }
        let address = normalize_address(&record[0])?;
        let category = ServiceCategory::parse(&record[1]).ok_or_else(|| IngestError::UnknownCategory {
            line,
            token: record[1].to_string(),
        })?;
        registry.insert(address, category);
    }
    Ok(registry)
}

pub fn parse_wallet_labels<R: Read>(source: R) -> Result<ClassLabels, IngestError> {
    let mut rdr = reader(source);
    check_header(&mut rdr, &LABELS_HEADER)?;
    let mut labels = ClassLabels::new();
    for result in rdr.records() {
        let record = result.map_err(|e| IngestError::Io(e.to_string()))?;
        let line = line_of(&record);
        if record.len() != 2 {
            return Err(IngestError::Row(RowError {
                line,
                message: "expected 2 fields".into(),
            }));
        }
        let address = normalize_address(&record[0])?;
        let class = RiskClass::parse(&record[1]).ok_or_else(|| IngestError::UnknownClass {
            line,
            token: record[1].to_string(),
        })?;
        labels
            .insert(address, class)
            .map_err(|existing| IngestError::ConflictingLabel {
                line,
                address: address.to_string(),
                existing: existing.to_string(),
                new: class.to_string(),
            })?;
    }
    Ok(labels)
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

pub fn parse_metadata<R: Read>(source: R) -> Result<MetadataTable, IngestError> {
    let mut rdr = reader(source);
    check_header(&mut rdr, &METADATA_HEADER)?;
    let mut table = MetadataTable::new();
    for result in rdr.records() {
        let record = result.map_err(|e| IngestError::Io(e.to_string()))?;
        let line = line_of(&record);
        let row_err = |message: &str| {
            IngestError::Row(RowError {
                line,
                message: message.to_string(),
            })
        };
        if record.len() != 3 {
            return Err(row_err("expected 3 fields"));
        }
        let address = normalize_address(&record[0])?;
        let is_contract = parse_bool(&record[1]).ok_or_else(|| row_err("is_contract must be true/false"))?;
        let is_verified = parse_bool(&record[2]).ok_or_else(|| row_err("is_verified must be true/false"))?;
        if is_verified && !is_contract {
            return Err(row_err("is_verified requires is_contract"));
        }
        table.insert(address, is_contract, is_verified);
    }
    Ok(table)
}

fn io_err(e: impl std::fmt::Display) -> IngestError {
    IngestError::Io(e.to_string())
}

/// Writes the log in canonical order; amounts as exact decimals, timestamps
/// as Unix seconds.
pub fn write_transfers<W: Write>(log: &EventLog, sink: W) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
    w.write_record(TRANSFERS_HEADER).map_err(io_err)?;
    for e in log.events() {
        w.write_record([
            e.tx_hash.to_string(),
            e.log_index.to_string(),
            e.token.to_string(),
            e.from.to_string(),
            e.to.to_string(),
            format_amount(e.amount),
            e.timestamp.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn write_registry<W: Write>(registry: &LabelRegistry, sink: W) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
    w.write_record(REGISTRY_HEADER).map_err(io_err)?;
    for (address, cats) in registry.iter() {
        for cat in cats {
            w.write_record([address.to_string(), cat.to_string()]).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn write_labels<W: Write>(labels: &ClassLabels, sink: W) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
    w.write_record(LABELS_HEADER).map_err(io_err)?;
    for (address, class) in labels.iter() {
        w.write_record([address.to_string(), class.to_string()]).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn write_metadata<W: Write>(table: &MetadataTable, sink: W) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
    w.write_record(METADATA_HEADER).map_err(io_err)?;
    for (address, meta) in table.iter() {
        w.write_record([
            address.to_string(),
            meta.is_contract.to_string(),
            meta.is_verified.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
