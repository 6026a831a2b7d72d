use serde::{Deserialize, Serialize};

/// Bumped whenever names, order or semantics of the catalog change.
pub const CATALOG_VERSION: u32 = 1;
pub const FEATURE_COUNT: usize = 68;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureCategory {
    Interaction,
    Derived,
    Transfer,
    TemporalDirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Count,
    Boolean,
    Score,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FeatureDescriptor {
    pub name: &'static str,
    pub category: FeatureCategory,
    pub kind: FeatureKind,
    pub description: &'static str,
}

macro_rules! catalog {
    ($( $variant:ident => ($name:literal, $cat:ident, $kind:ident, $desc:literal) ),* $(,)?) => {
        /// Feature positions in catalog order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        #[repr(usize)]
        pub enum Feature { $( $variant ),* }

        const DESCRIPTORS: [FeatureDescriptor; FEATURE_COUNT] = [
            $( FeatureDescriptor {
                name: $name,
                category: FeatureCategory::$cat,
                kind: FeatureKind::$kind,
                description: $desc,
            } ),*
        ];
    };
}

catalog! {
    HasKyc => ("hasKYC", Interaction, Boolean, "Interacted with a KYC-requiring protocol"),
    ReceivedFromPayment => ("receivedFromPayment", Interaction, Count, "Transfers received from a payment service"),
    ReceivedFromBet => ("receivedFromBet", Interaction, Count, "Transfers received from a betting protocol"),
    ReceivedFromCex => ("receivedFromCex", Interaction, Count, "Transfers received from a centralized exchange"),
    ReceivedFromCustody => ("receivedFromCustody", Interaction, Count, "Transfers received from custody or treasury"),
    ReceivedFromDefi => ("receivedFromDefi", Interaction, Count, "Transfers received from a DeFi protocol"),
    ReceivedFromDex => ("receivedFromDex", Interaction, Count, "Transfers received from a decentralized exchange"),
    ReceivedFromFlagged => ("receivedFromFlagged", Interaction, Count, "Transfers received from a flagged address"),
    ReceivedFromLending => ("receivedFromLending", Interaction, Count, "Transfers received from a lending protocol"),
    ReceivedFromMixer => ("receivedFromMixer", Interaction, Count, "Transfers received from a mixer"),
    ReceivedFromSc => ("receivedFromSC", Interaction, Count, "Transfers received from any smart contract"),
    ReceivedFromStake => ("receivedFromStake", Interaction, Count, "Transfers received from a staking protocol"),
    ReceivedFromSwap => ("receivedFromSwap", Interaction, Count, "Transfers received from a swap protocol"),
    SentToBet => ("sentToBet", Interaction, Count, "Transfers sent to a betting protocol"),
    SentToCex => ("sentToCex", Interaction, Count, "Transfers sent to a centralized exchange"),
    SentToCustody => ("sentToCustody", Interaction, Count, "Transfers sent to custody or treasury"),
    SentToDefi => ("sentToDefi", Interaction, Count, "Transfers sent to a DeFi protocol"),
    SentToDex => ("sentToDex", Interaction, Count, "Transfers sent to a decentralized exchange"),
    SentToFlagged => ("sentToFlagged", Interaction, Count, "Transfers sent to a flagged address"),
    SentToLending => ("sentToLending", Interaction, Count, "Transfers sent to a lending protocol"),
    SentToMixer => ("sentToMixer", Interaction, Count, "Transfers sent to a mixer"),
    SentToPayment => ("sentToPayment", Interaction, Count, "Transfers sent to a payment service"),
    SentToSc => ("sentToSC", Interaction, Count, "Transfers sent to any smart contract"),
    SentToStake => ("sentToStake", Interaction, Count, "Transfers sent to a staking protocol"),
    SentToSwap => ("sentToSwap", Interaction, Count, "Transfers sent to a swap protocol"),
    UsedWithAirdrop => ("usedWithAirdrop", Interaction, Count, "Transfers with an airdrop participant, either direction"),
    UsedWithDao => ("usedWithDao", Interaction, Count, "Transfers with a DAO address, either direction"),

    SecondWithMixBehaviour => ("2ndWithMixBehaviour", Derived, Count, "Counterparties showing balanced mixer-like flow"),
    SecondWithMultipleSameValue => ("2ndWithMultipleSameValue", Derived, Count, "Counterparties with repeated same-value transfers"),
    SecondWithBet => ("2ndWithBet", Derived, Count, "Counterparties that used a betting protocol"),
    SecondWithCex => ("2ndWithCex", Derived, Count, "Counterparties that used a centralized exchange"),
    SecondWithCluster => ("2ndWithCluster", Derived, Count, "Counterparties that are part of a cluster"),
    SecondWithCustody => ("2ndWithCustody", Derived, Count, "Counterparties that used custody"),
    SecondWithDefi => ("2ndWithDefi", Derived, Count, "Counterparties that used a DeFi protocol"),
    SecondWithDex => ("2ndWithDex", Derived, Count, "Counterparties that used a decentralized exchange"),
    SecondWithFlagged => ("2ndWithFlagged", Derived, Count, "Counterparties that transacted with a flagged address"),
    SecondWithLending => ("2ndWithLending", Derived, Count, "Counterparties that used a lending protocol"),
    SecondWithMixer => ("2ndWithMixer", Derived, Count, "Counterparties that transacted with a mixer"),
    SecondWithOver1k => ("2ndWithOver1k", Derived, Count, "Counterparties with a transfer over 1,000"),
    SecondWithOver5k => ("2ndWithOver5k", Derived, Count, "Counterparties with a transfer over 5,000"),
    SecondWithOver10k => ("2ndWithOver10k", Derived, Count, "Counterparties with a transfer over 10,000"),
    SecondWithPayment => ("2ndWithPayment", Derived, Count, "Counterparties that used a payment service"),
    SecondWithProxy => ("2ndWithProxy", Derived, Count, "Counterparties with proxy behaviour"),
    SecondWithSc => ("2ndWithSC", Derived, Count, "Counterparties that transacted with a smart contract"),
    SecondWithSingleFrom => ("2ndWithSingleFrom", Derived, Count, "Counterparties with exactly one distinct sender"),
    SecondWithSingleTo => ("2ndWithSingleTo", Derived, Count, "Counterparties with exactly one distinct recipient"),
    SecondWithStaking => ("2ndWithStaking", Derived, Count, "Counterparties that used a staking protocol"),
    SecondWithSwap => ("2ndWithSwap", Derived, Count, "Counterparties that used a swap protocol"),
    ThirdWithFlagged => ("3rdWithFlagged", Derived, Count, "Flagged wallets at exact hop distance 3"),
    CircleDetected => ("circleDetected", Derived, Count, "Reciprocal transfer pairs within the circle window"),
    ClusterScore => ("clusterScore", Derived, Count, "Distinct flagged direct counterparties"),
    HasMixerBehaviour => ("hasMixerBehaviour", Derived, Score, "Imbalance between sent and received volume"),
    HasProxyBehaviour => ("hasProxyBehaviour", Derived, Count, "Inflows forwarded with equal amount inside the proxy window"),
    IsPartOfClusterFrom => ("isPartOfClusterFrom", Derived, Boolean, "Repeated same value to the same recipient"),
    IsPartOfClusterTo => ("isPartOfClusterTo", Derived, Boolean, "Repeated same value from the same sender"),
    ReceivedFromProxy => ("receivedFromProxy", Derived, Count, "Transfers received from proxy wallets"),
    SentToProxy => ("sentToProxy", Derived, Count, "Transfers sent to proxy wallets"),

    ReceiveMulSameValue => ("receiveMulSameValue", Transfer, Count, "Incoming transfers in a same-amount group"),
    ReceiveSingleFrom => ("receiveSingleFrom", Transfer, Count, "Most transfers received from one sender"),
    SentMultipleSameValue => ("sentMultipleSameValue", Transfer, Count, "Outgoing transfers in a same-amount group"),
    SentToSingleAddress => ("sentToSingleAddress", Transfer, Count, "Most transfers sent to one recipient"),
    TransferOver1k => ("transferOver1k", Transfer, Count, "Transfers over 1,000 tokens"),
    TransferOver5k => ("transferOver5k", Transfer, Count, "Transfers over 5,000 tokens"),
    TransferOver10k => ("transferOver10k", Transfer, Count, "Transfers over 10,000 tokens"),

    HighFrequency => ("highFrequency", TemporalDirect, Count, "UTC days with more than the burst threshold of transfers"),
    IsLongTermWallet => ("isLongTermWallet", TemporalDirect, Boolean, "Active span longer than the long-term threshold"),
    IsVerifiedContract => ("isVerifiedContract", TemporalDirect, Boolean, "Contract with verified source"),
    IsWallet => ("isWallet", TemporalDirect, Boolean, "Address without bytecode"),
}

impl Feature {
    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn descriptor(self) -> &'static FeatureDescriptor {
        &DESCRIPTORS[self as usize]
    }

    pub fn name(self) -> &'static str {
        self.descriptor().name
    }
}

/// The fixed, ordered 68-entry feature catalog.
#[derive(Debug, Clone, Copy)]
pub struct FeatureCatalog {
    pub version: u32,
    pub entries: &'static [FeatureDescriptor; FEATURE_COUNT],
}

pub fn feature_catalog() -> FeatureCatalog {
    FeatureCatalog {
        version: CATALOG_VERSION,
        entries: &DESCRIPTORS,
    }
}

impl FeatureCatalog {
    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.iter().map(|d| d.name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|d| d.name == name)
    }

    pub fn category_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for d in self.entries {
            counts[d.category as usize] += 1;
        }
        counts
    }

    /// `catalog.json` manifest: version plus name/kind/category per entry.
    pub fn manifest_json(&self) -> serde_json::Value {
        serde_json::json!({
            "version": self.version,
            "count": FEATURE_COUNT,
            "features": self.entries.iter().enumerate().map(|(i, d)| serde_json::json!({
                "index": i,
                "name": d.name,
                "kind": d.kind,
                "category": d.category,
                "description": d.description,
            })).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_entry_and_counts() {
        let cat = feature_catalog();
        assert_eq!(cat.entries.len(), 68);
        let first = cat.entries[0];
        assert_eq!(first.name, "hasKYC");
        assert_eq!(first.kind, FeatureKind::Boolean);
        assert_eq!(first.category, FeatureCategory::Interaction);
        assert_eq!(cat.category_counts(), [27, 30, 7, 4]);
    }

    #[test]
    fn names_unique_and_enum_aligned() {
        let cat = feature_catalog();
        let mut names: Vec<_> = cat.names().collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 68);
        assert_eq!(Feature::IsWallet.index(), 67);
        assert_eq!(Feature::CircleDetected.name(), "circleDetected");
        assert_eq!(Feature::CircleDetected.descriptor().kind, FeatureKind::Count);
        assert_eq!(cat.position("transferOver10k"), Some(Feature::TransferOver10k.index()));
    }

    #[test]
    fn only_mixer_imbalance_is_a_score() {
        let scores: Vec<_> = feature_catalog()
            .entries
            .iter()
            .filter(|d| d.kind == FeatureKind::Score)
            .map(|d| d.name)
            .collect();
        assert_eq!(scores, vec!["hasMixerBehaviour"]);
    }
}
