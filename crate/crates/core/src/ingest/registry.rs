use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Address;

/// Closed set of service labels an address can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceCategory {
    Swap,
    Lending,
    Stake,
    Cex,
    Dex,
    Mixer,
    Defi,
    Payment,
    Bet,
    Custody,
    Flagged,
    Airdrop,
    Dao,
    Kyc,
}

impl ServiceCategory {
    pub const ALL: [ServiceCategory; 14] = [
        ServiceCategory::Swap,
        ServiceCategory::Lending,
        ServiceCategory::Stake,
        ServiceCategory::Cex,
        ServiceCategory::Dex,
        ServiceCategory::Mixer,
        ServiceCategory::Defi,
        ServiceCategory::Payment,
        ServiceCategory::Bet,
        ServiceCategory::Custody,
        ServiceCategory::Flagged,
        ServiceCategory::Airdrop,
        ServiceCategory::Dao,
        ServiceCategory::Kyc,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ServiceCategory::Swap => "swap",
            ServiceCategory::Lending => "lending",
            ServiceCategory::Stake => "stake",
            ServiceCategory::Cex => "cex",
            ServiceCategory::Dex => "dex",
            ServiceCategory::Mixer => "mixer",
            ServiceCategory::Defi => "defi",
            ServiceCategory::Payment => "payment",
            ServiceCategory::Bet => "bet",
            ServiceCategory::Custody => "custody",
            ServiceCategory::Flagged => "flagged",
            ServiceCategory::Airdrop => "airdrop",
            ServiceCategory::Dao => "dao",
            ServiceCategory::Kyc => "kyc",
        }
    }

    pub fn parse(raw: &str) -> Option<ServiceCategory> {
        let raw = raw.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|c| c.as_str() == raw)
    }
}

impl fmt::Display for ServiceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Service labels per address. An address may carry several categories.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRegistry {
    entries: BTreeMap<Address, BTreeSet<ServiceCategory>>,
}

impl LabelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, address: Address, category: ServiceCategory) {
        self.entries.entry(address).or_default().insert(category);
    }

    pub fn categories(&self, address: &Address) -> Option<&BTreeSet<ServiceCategory>> {
        self.entries.get(address)
    }

    pub fn has(&self, address: &Address, category: ServiceCategory) -> bool {
        self.entries
            .get(address)
            .is_some_and(|set| set.contains(&category))
    }

    /// True when the address carries any service label at all.
    pub fn is_service(&self, address: &Address) -> bool {
        self.entries.get(address).is_some_and(|set| !set.is_empty())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Address, &BTreeSet<ServiceCategory>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn with_category(&self, category: ServiceCategory) -> BTreeSet<Address> {
        self.entries
            .iter()
            .filter(|(_, cats)| cats.contains(&category))
            .map(|(a, _)| *a)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AddressMetadata {
    pub is_contract: bool,
    pub is_verified: bool,
    /// False when no metadata row was supplied for the address.
    pub known: bool,
}

/// Per-address bytecode/verification flags. Missing entries read as an
/// unknown EOA.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataTable {
    entries: BTreeMap<Address, AddressMetadata>,
}

impl MetadataTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records flags for `address`. `is_verified` implies `is_contract`.
    pub fn insert(&mut self, address: Address, is_contract: bool, is_verified: bool) {
        self.entries.insert(
            address,
            AddressMetadata {
                is_contract: is_contract || is_verified,
                is_verified,
                known: true,
            },
        );
    }

    pub fn get(&self, address: &Address) -> AddressMetadata {
        self.entries.get(address).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Address, &AddressMetadata)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskClass {
    Normal = 0,
    Cybercrime = 1,
    Blocklisted = 2,
}

impl RiskClass {
    pub const ALL: [RiskClass; 3] = [RiskClass::Normal, RiskClass::Cybercrime, RiskClass::Blocklisted];

    pub fn code(&self) -> usize {
        *self as usize
    }

    pub fn from_code(code: usize) -> Option<RiskClass> {
        Self::ALL.get(code).copied()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RiskClass::Normal => "normal",
            RiskClass::Cybercrime => "cybercrime",
            RiskClass::Blocklisted => "blocklisted",
        }
    }

    pub fn parse(raw: &str) -> Option<RiskClass> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "normal" => Some(RiskClass::Normal),
            "cybercrime" => Some(RiskClass::Cybercrime),
            "blocklisted" => Some(RiskClass::Blocklisted),
            _ => None,
        }
    }
}

impl fmt::Display for RiskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ground-truth wallet classes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLabels {
    entries: BTreeMap<Address, RiskClass>,
}

impl ClassLabels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a label; returns the existing class on conflict.
    pub fn insert(&mut self, address: Address, class: RiskClass) -> Result<(), RiskClass> {
        match self.entries.get(&address) {
            Some(existing) if *existing != class => Err(*existing),
            _ => {
                self.entries.insert(address, class);
                Ok(())
            }
        }
    }

    pub fn get(&self, address: &Address) -> Option<RiskClass> {
        self.entries.get(address).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Address, &RiskClass)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for class in self.entries.values() {
            counts[class.code()] += 1;
        }
        counts
    }
}
