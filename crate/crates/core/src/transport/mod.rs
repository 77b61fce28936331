//! Two-party execution: links, metering, and the per-party context that
//! protocols run against.

mod bits;
mod link;
mod meter;

use std::collections::{BTreeMap, HashSet};

use rand_chacha::ChaCha20Rng;

pub use bits::{BitReader, BitWriter};
pub use link::{decode_frame, encode_frame, in_process_pair, Frame, InProcessLink, Link, TcpLink};
pub use meter::{Meter, NetProfile};

use crate::dealer::{DealerStream, KeyId, Usage};
use crate::error::ProtocolError;
use crate::fss::DcfMode;
use crate::ring::RingConfig;
use crate::sharing::PartyId;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SessionConfig {
    pub ring: RingConfig,
    pub seed: u128,
    pub dcf: DcfMode,
    pub record_transcript: bool,
}

impl SessionConfig {
    pub fn new(ring: RingConfig, seed: u128) -> Self {
        Self { ring, seed, dcf: DcfMode::Tree, record_transcript: false }
    }
}

/// Correlated randomness tagged with the batch it came from.
#[derive(Clone, Debug)]
pub struct Dealt<T> {
    pub id: KeyId,
    pub key: T,
}

/// One party's view of a session.
pub struct Party {
    id: PartyId,
    ring: RingConfig,
    dcf: DcfMode,
    link: Box<dyn Link>,
    dealer: DealerStream,
    used: HashSet<KeyId>,
    meter: Meter,
    transcript: Option<Vec<Frame>>,
    round: u64,
}

impl Party {
    pub fn new(id: PartyId, cfg: &SessionConfig, link: Box<dyn Link>) -> Self {
        Self {
            id,
            ring: cfg.ring,
            dcf: cfg.dcf,
            link,
            dealer: DealerStream::new(cfg.seed, id),
            used: HashSet::new(),
            meter: Meter::default(),
            transcript: cfg.record_transcript.then(Vec::new),
            round: 0,
        }
    }

    pub fn id(&self) -> PartyId {
        self.id
    }

    pub fn is_p0(&self) -> bool {
        self.id == PartyId::P0
    }

    pub fn ring(&self) -> RingConfig {
        self.ring
    }

    pub fn dcf_mode(&self) -> DcfMode {
        self.dcf
    }

    pub fn meter(&self) -> &Meter {
        &self.meter
    }

    pub fn dealer_usage(&self) -> &BTreeMap<&'static str, Usage> {
        self.dealer.usage()
    }

    pub fn writer(&self, tag: &'static str) -> BitWriter {
        BitWriter::new(tag)
    }

    /// Draws correlated randomness; `gen` builds both halves from the batch RNG.
    pub fn deal<T>(&mut self, kind: &'static str, items: u64, gen: impl FnOnce(&mut ChaCha20Rng) -> [T; 2]) -> Dealt<T> {
        let (id, key) = self.dealer.take(kind, items, gen);
        Dealt { id, key }
    }

    /// Marks a batch as used; a second use is a protocol error.
    pub fn consume(&mut self, id: KeyId) -> Result<(), ProtocolError> {
        if self.used.insert(id) {
            Ok(())
        } else {
            Err(ProtocolError::KeyReuse { kind: id.kind, counter: id.counter })
        }
    }

    /// One round where both parties send frames of the same shape.
    pub fn exchange(&mut self, label: &str, out: BitWriter) -> Result<BitReader, ProtocolError> {
        let bits = out.bits();
        self.exchange_expecting(label, out, bits)
    }

    /// One round where the peer is known to send `peer_bits` bits.
    pub fn exchange_expecting(&mut self, label: &str, out: BitWriter, peer_bits: u64) -> Result<BitReader, ProtocolError> {
        let round = self.round;
        self.round += 1;
        let (payload, bits, tags) = out.finish();
        self.meter.record(label, payload.len() as u64, bits, &tags);
        self.link.send(Frame { round, label: label.to_string(), payload })?;
        let frame = self.link.recv().map_err(|e| match e {
            ProtocolError::Disconnected { .. } => ProtocolError::Disconnected { round },
            other => other,
        })?;
        if frame.round != round || frame.label != label {
            return Err(ProtocolError::RoundMismatch {
                round,
                expected: label.to_string(),
                got: format!("{}@{}", frame.label, frame.round),
            });
        }
        let expected = peer_bits.div_ceil(8) as usize;
        if frame.payload.len() != expected {
            return Err(ProtocolError::FrameLength { round, expected, got: frame.payload.len() });
        }
        let reader = BitReader::new(frame.payload.clone());
        if let Some(t) = self.transcript.as_mut() {
            t.push(frame);
        }
        Ok(reader)
    }

    fn into_parts(self) -> (Meter, BTreeMap<&'static str, Usage>, Vec<Frame>) {
        (self.meter, self.dealer.usage().clone(), self.transcript.unwrap_or_default())
    }
}

/// What one party produced, along with its traffic.
#[derive(Debug)]
pub struct PartyRun<T> {
    pub output: T,
    pub meter: Meter,
    pub usage: BTreeMap<&'static str, Usage>,
    /// Frames received from the peer, when recording was enabled.
    pub transcript: Vec<Frame>,
}

/// Runs both parties concurrently over an in-process link.
pub fn run_two_party<T, F>(cfg: &SessionConfig, f: F) -> Result<[PartyRun<T>; 2], ProtocolError>
where
    T: Send,
    F: Fn(&mut Party) -> Result<T, ProtocolError> + Sync,
{
    let (l0, l1) = in_process_pair();
    let (r0, r1) = std::thread::scope(|scope| {
        let f = &f;
        let h1 = scope.spawn(move || run_party(cfg, PartyId::P1, Box::new(l1), f));
        let r0 = run_party(cfg, PartyId::P0, Box::new(l0), f);
        (r0, h1.join().expect("party 1 panicked"))
    });
    match (r0, r1) {
        (Ok(a), Ok(b)) => Ok([a, b]),
        (Err(e), Err(ProtocolError::Disconnected { .. })) | (Err(ProtocolError::Disconnected { .. }), Err(e)) => Err(e),
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

/// Runs one party's side over an arbitrary link.
pub fn run_party<T, F>(cfg: &SessionConfig, id: PartyId, link: Box<dyn Link>, f: &F) -> Result<PartyRun<T>, ProtocolError>
where
    F: Fn(&mut Party) -> Result<T, ProtocolError>,
{
    let mut party = Party::new(id, cfg, link);
    let output = f(&mut party)?;
    let (meter, usage, transcript) = party.into_parts();
    Ok(PartyRun { output, meter, usage, transcript })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SessionConfig {
        SessionConfig::new(RingConfig::DEFAULT, 1)
    }

    #[test]
    fn exchange_swaps_payloads_and_meters_bits() {
        let runs = run_two_party(&cfg(), |p| {
            let mut w = p.writer("probe");
            w.push(p.id().index() as u64 + 5, 3);
            let mut r = p.exchange("probe", w)?;
            r.read(3)
        })
        .unwrap();
        assert_eq!(runs[0].output, 6);
        assert_eq!(runs[1].output, 5);
        assert_eq!(runs[0].meter.rounds, 1);
        assert_eq!(runs[0].meter.bits, 3);
        assert_eq!(runs[0].meter.bytes, 1);
    }

    #[test]
    fn mismatched_round_counts_surface_as_errors() {
        let err = run_two_party(&cfg(), |p| {
            let n = if p.is_p0() { 2 } else { 1 };
            for _ in 0..n {
                p.exchange("step", p.writer("step"))?;
            }
            Ok(())
        })
        .unwrap_err();
        assert_eq!(err, ProtocolError::Disconnected { round: 1 });
    }

    #[test]
    fn mismatched_labels_are_reported() {
        let err = run_two_party(&cfg(), |p| {
            let label = if p.is_p0() { "a" } else { "b" };
            p.exchange(label, p.writer(label)).map(|_| ())
        })
        .unwrap_err();
        assert!(matches!(err, ProtocolError::RoundMismatch { round: 0, .. }));
    }

    #[test]
    fn reused_keys_are_rejected() {
        let runs = run_two_party(&cfg(), |p| {
            let k = p.deal("triple", 1, |_| [(), ()]);
            p.consume(k.id)?;
            Ok(p.consume(k.id))
        })
        .unwrap();
        assert!(matches!(runs[0].output, Err(ProtocolError::KeyReuse { kind: "triple", counter: 0 })));
    }
}
