//! Seeded source of correlated randomness.
//!
//! Every request is keyed by `(seed, kind, counter)` and expanded with
//! ChaCha20, so the material is independent of any party input. Both parties
//! hold a stream with the same seed, draw the same correlated pair, and keep
//! only their own half.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::sharing::PartyId;

/// Identifies one batch of correlated randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyId {
    pub kind: &'static str,
    pub counter: u64,
}

/// Running totals for one randomness kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Usage {
    pub batches: u64,
    pub items: u64,
}

#[derive(Clone, Debug)]
pub struct DealerStream {
    seed: u128,
    party: PartyId,
    usage: BTreeMap<&'static str, Usage>,
}

impl DealerStream {
    pub fn new(seed: u128, party: PartyId) -> Self {
        Self { seed, party, usage: BTreeMap::new() }
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    /// Draws a fresh batch for `kind` holding `items` elements.
    pub fn next(&mut self, kind: &'static str, items: u64) -> (KeyId, ChaCha20Rng) {
        let usage = self.usage.entry(kind).or_default();
        let id = KeyId { kind, counter: usage.batches };
        usage.batches += 1;
        usage.items += items;
        (id, batch_rng(self.seed, id))
    }

    /// Deals a correlated pair and returns this party's half.
    pub fn take<T>(&mut self, kind: &'static str, items: u64, gen: impl FnOnce(&mut ChaCha20Rng) -> [T; 2]) -> (KeyId, T) {
        let (id, mut rng) = self.next(kind, items);
        let [a, b] = gen(&mut rng);
        (id, if self.party == PartyId::P0 { a } else { b })
    }

    pub fn usage(&self) -> &BTreeMap<&'static str, Usage> {
        &self.usage
    }
}

pub fn batch_rng(seed: u128, id: KeyId) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.kind.as_bytes());
    h.update([0u8]);
    h.update(id.counter.to_le_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}
