use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Traffic sent by one party.
///
/// `bits` counts payload bits before byte padding and `bytes` counts what was
/// actually framed. Bits are broken down by protocol tag. Rounds and bytes are
/// broken down by the label of the flush that carried them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meter {
    pub rounds: u64,
    pub bits: u64,
    pub bytes: u64,
    pub protocol_bits: BTreeMap<String, u64>,
    pub label_rounds: BTreeMap<String, u64>,
    pub label_bytes: BTreeMap<String, u64>,
}

impl Meter {
    pub fn record(&mut self, label: &str, bytes: u64, bits: u64, tags: &BTreeMap<&'static str, u64>) {
        self.rounds += 1;
        self.bits += bits;
        self.bytes += bytes;
        for (tag, b) in tags {
            *self.protocol_bits.entry((*tag).to_string()).or_default() += b;
        }
        *self.label_rounds.entry(label.to_string()).or_default() += 1;
        *self.label_bytes.entry(label.to_string()).or_default() += bytes;
    }

    /// Traffic recorded after `earlier` was taken.
    pub fn since(&self, earlier: &Meter) -> Meter {
        fn diff(a: &BTreeMap<String, u64>, b: &BTreeMap<String, u64>) -> BTreeMap<String, u64> {
            a.iter()
                .map(|(k, v)| (k.clone(), v - b.get(k).copied().unwrap_or(0)))
                .filter(|(_, v)| *v > 0)
                .collect()
        }
        Meter {
            rounds: self.rounds - earlier.rounds,
            bits: self.bits - earlier.bits,
            bytes: self.bytes - earlier.bytes,
            protocol_bits: diff(&self.protocol_bits, &earlier.protocol_bits),
            label_rounds: diff(&self.label_rounds, &earlier.label_rounds),
            label_bytes: diff(&self.label_bytes, &earlier.label_bytes),
        }
    }

    pub fn add(&mut self, other: &Meter) {
        fn sum(a: &mut BTreeMap<String, u64>, b: &BTreeMap<String, u64>) {
            for (k, v) in b {
                *a.entry(k.clone()).or_default() += v;
            }
        }
        self.rounds += other.rounds;
        self.bits += other.bits;
        self.bytes += other.bytes;
        sum(&mut self.protocol_bits, &other.protocol_bits);
        sum(&mut self.label_rounds, &other.label_rounds);
        sum(&mut self.label_bytes, &other.label_bytes);
    }
}

/// Link model used to turn metered traffic into an estimated wall time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetProfile {
    pub name: &'static str,
    pub rtt_seconds: f64,
    pub bandwidth_bps: f64,
}

impl NetProfile {
    pub const LAN: NetProfile = NetProfile { name: "lan", rtt_seconds: 0.2e-3, bandwidth_bps: 1e9 };
    pub const WAN: NetProfile = NetProfile { name: "wan", rtt_seconds: 40e-3, bandwidth_bps: 100e6 };

    pub fn by_name(name: &str) -> Option<NetProfile> {
        match name {
            "lan" => Some(Self::LAN),
            "wan" => Some(Self::WAN),
            _ => None,
        }
    }

    /// rounds * RTT + bytes * 8 / bandwidth.
    pub fn estimate_seconds(&self, meter: &Meter) -> f64 {
        meter.rounds as f64 * self.rtt_seconds + meter.bytes as f64 * 8.0 / self.bandwidth_bps
    }
}
