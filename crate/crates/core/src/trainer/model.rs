//! Model documents: what each party keeps after training, and the plaintext
//! tree list obtained by merging both halves and opening the leaf shares.

use serde::{Deserialize, Serialize};

use super::{Layout, TrainConfig};
use crate::data::Dataset;
use crate::error::SetupError;
use crate::ring::RingConfig;

pub const PARTY_MODEL_FORMAT: &str = "vgbdt-party-model/1";
pub const PLAIN_MODEL_FORMAT: &str = "vgbdt-plain-model/1";

/// One internal node as seen by a party: the split it owns, or (-1, -1).
/// Feature indices are global.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub feature: i64,
    pub bucket: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl NodeDoc {
    pub fn hidden() -> Self {
        NodeDoc { feature: -1, bucket: -1, threshold: None }
    }

    pub fn is_hidden(&self) -> bool {
        self.feature < 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartyTree {
    /// Level order, 2^D - 1 entries.
    pub nodes: Vec<NodeDoc>,
    /// Shares of the leaf weights, left to right, as hex ring elements.
    #[serde(with = "hex_shares")]
    pub leaves: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartyModel {
    pub format: String,
    pub party: usize,
    pub config: TrainConfig,
    pub layout: Layout,
    pub trees: Vec<PartyTree>,
}

mod hex_shares {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[u64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| hex::encode(x.to_be_bytes())).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u64>, D::Error> {
        let strings = Vec::<String>::deserialize(d)?;
        strings
            .iter()
            .map(|s| {
                let bytes = hex::decode(s).map_err(serde::de::Error::custom)?;
                let arr: [u8; 8] = bytes.try_into().map_err(|_| serde::de::Error::custom("leaf share must be 8 bytes"))?;
                Ok(u64::from_be_bytes(arr))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlainTree {
    pub nodes: Vec<NodeDoc>,
    pub leaves: Vec<f64>,
}

impl PlainTree {
    /// Leaf index reached by `row` (global feature order). Left is x < threshold.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        while i < self.nodes.len() {
            let node = &self.nodes[i];
            let left = row[node.feature as usize] < node.threshold.unwrap_or(f64::INFINITY);
            i = 2 * i + if left { 1 } else { 2 };
        }
        i - self.nodes.len()
    }
}

/// A plaintext-evaluable tree list. Secure and mirror runs of one
/// configuration produce identical documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlainModel {
    pub format: String,
    pub config: TrainConfig,
    pub layout: Layout,
    pub trees: Vec<PlainTree>,
}

impl PlainModel {
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.leaves[t.leaf_index(row)]).sum()
    }

    pub fn predict(&self, row: &[f64]) -> u8 {
        (self.margin(row) >= 0.0) as u8
    }

    /// Fraction of rows classified correctly, in percent.
    pub fn accuracy(&self, ds: &Dataset) -> f64 {
        accuracy_from_margins(&ds.rows.iter().map(|r| self.margin(r)).collect::<Vec<_>>(), &ds.labels)
    }
}

pub fn accuracy_from_margins(margins: &[f64], labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = margins.iter().zip(labels).filter(|(&m, &y)| ((m >= 0.0) as u8) == y).count();
    100.0 * hits as f64 / labels.len() as f64
}

/// Combines both parties' documents: owned splits fill the hidden slots and
/// leaf shares are added and decoded.
pub fn merge_models(a: &PartyModel, b: &PartyModel) -> Result<PlainModel, SetupError> {
    let (p0, p1) = if a.party == 0 { (a, b) } else { (b, a) };
    if p0.party != 0 || p1.party != 1 || p0.trees.len() != p1.trees.len() || p0.layout != p1.layout {
        return Err(SetupError::Other("model documents do not belong to one session".into()));
    }
    let ring: RingConfig = p0.config.ring;
    let trees = p0
        .trees
        .iter()
        .zip(&p1.trees)
        .map(|(t0, t1)| {
            if t0.nodes.len() != t1.nodes.len() || t0.leaves.len() != t1.leaves.len() {
                return Err(SetupError::Other("tree shapes differ between parties".into()));
            }
            let nodes = t0
                .nodes
                .iter()
                .zip(&t1.nodes)
                .map(|(n0, n1)| match (n0.is_hidden(), n1.is_hidden()) {
                    (false, true) => Ok(n0.clone()),
                    (true, false) => Ok(n1.clone()),
                    _ => Err(SetupError::Other("each node must be owned by exactly one party".into())),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let leaves = t0.leaves.iter().zip(&t1.leaves).map(|(&x, &y)| ring.decode(ring.add(x, y))).collect();
            Ok(PlainTree { nodes, leaves })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PlainModel { format: PLAIN_MODEL_FORMAT.into(), config: p0.config.clone(), layout: p0.layout, trees })
}
