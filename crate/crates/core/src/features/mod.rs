//! The 68-feature wallet catalog and its two-pass extraction.
//!
//! Pass one computes everything that depends only on a wallet's own
//! transfers. Pass two reads the pass-one profiles of graph neighbors to fill
//! the second- and third-degree features.

mod catalog;
mod extract;

use std::io::{Read, Write};

pub use catalog::{
    feature_catalog, Feature, FeatureCatalog, FeatureCategory, FeatureDescriptor, FeatureKind, CATALOG_VERSION,
    FEATURE_COUNT,
};
pub use extract::{
    base_profiles, derived_network_features, extract_all, extract_all_with_labels, inactive_profile, interaction_features,
    mixer_imbalance, temporal_direct_features, transfer_features, BaseProfile, BaseProfiles, FeatureConfig,
    FeatureMatrix, LabelView, DERIVED_RANGE, INTERACTION_RANGE, TEMPORAL_DIRECT_RANGE, TRANSFER_RANGE,
};

use crate::ingest::{normalize_address, Address, IngestError, RowError};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector([f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn zeros() -> Self {
        FeatureVector([0.0; FEATURE_COUNT])
    }

    pub fn from_slice(values: &[f64]) -> Option<Self> {
        Some(FeatureVector(values.try_into().ok()?))
    }

    pub fn get(&self, f: Feature) -> f64 {
        self.0[f.index()]
    }

    pub fn set(&mut self, f: Feature, v: f64) {
        self.0[f.index()] = v;
    }

    pub fn add(&mut self, f: Feature, v: f64) {
        self.0[f.index()] += v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn format_value(kind: FeatureKind, v: f64) -> String {
    match kind {
        FeatureKind::Score => format!("{v:.6}"),
        _ => format!("{}", v as u64),
    }
}

/// Writes `features.csv`: `address` followed by the 68 catalog names.
pub fn write_features<W: Write>(m: &FeatureMatrix, sink: W) -> std::io::Result<()> {
    let cat = feature_catalog();
    let mut w = std::io::BufWriter::new(sink);
    write!(w, "address")?;
    for name in cat.names() {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for (addr, row) in m.iter() {
        write!(w, "{addr}")?;
        for (d, v) in cat.entries.iter().zip(row.as_slice()) {
            write!(w, ",{}", format_value(d.kind, *v))?;
        }
        writeln!(w)?;
    }
    w.flush()
}

/// Reads a `features.csv` whose header must match the catalog exactly.
pub fn read_features<R: Read>(source: R) -> Result<FeatureMatrix, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let expected: Vec<String> = std::iter::once("address")
        .chain(feature_catalog().names())
        .map(str::to_string)
        .collect();
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| IngestError::Io(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if found != expected {
        return Err(IngestError::BadHeader {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    let mut rows: Vec<(Address, FeatureVector)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| IngestError::Row(RowError { line, message: e.to_string() }))?;
        let addr = normalize_address(&rec[0])?;
        let mut v = FeatureVector::zeros();
        for (j, field) in rec.iter().skip(1).enumerate() {
            v.0[j] = field.trim().parse::<f64>().map_err(|_| {
                IngestError::Row(RowError {
                    line,
                    message: format!("column {} is not a number: {field:?}", j + 1),
                })
            })?;
        }
        rows.push((addr, v));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(FeatureMatrix {
        addresses: rows.iter().map(|r| r.0).collect(),
        rows: rows.into_iter().map(|r| r.1).collect(),
    })
}
