//! Secure comparison against public thresholds, oblivious selection, and
//! argmax by tournament.

use rand::RngCore;

use super::dcf::{dcf_gen, DcfKey, DcfMode};
use crate::error::ProtocolError;
use crate::ring::{width_mask, RingConfig};
use crate::sharing::{mul_fanout_begin, random_element};
use crate::transport::{BitReader, BitWriter, Dealt, Party};

/// One party's key for a single comparison gate.
///
/// The gate opens m = x - omega + alpha and outputs msb(m - alpha), which is
/// msb(m) xor msb(alpha) xor borrow. The borrow 1{m_low < alpha_low} comes
/// from a DCF over the low l-1 bits whose payload 1 - 2 msb(alpha) folds in
/// the xor with msb(alpha).
#[derive(Clone, Debug)]
pub struct LtKey {
    pub alpha: u64,
    pub alpha_msb: u64,
    pub dcf: DcfKey,
}

pub fn deal_lt_with_alpha(ring: &RingConfig, rng: &mut impl RngCore, mode: DcfMode, alpha: u64) -> [LtKey; 2] {
    let alpha = ring.reduce(alpha);
    let hi = ring.msb(alpha);
    let low_bits = ring.bits - 1;
    let payload = ring.from_signed(1 - 2 * hi as i64);
    let [k0, k1] = dcf_gen(rng, mode, low_bits, alpha & width_mask(low_bits), [payload, 0], ring.bits);
    let a0 = random_element(ring, rng);
    let h0 = random_element(ring, rng);
    [
        LtKey { alpha: a0, alpha_msb: h0, dcf: k0 },
        LtKey { alpha: ring.sub(alpha, a0), alpha_msb: ring.sub(hi, h0), dcf: k1 },
    ]
}

pub fn deal_lt(ring: &RingConfig, rng: &mut impl RngCore, mode: DcfMode, n: usize) -> [Vec<LtKey>; 2] {
    let mut out = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for _ in 0..n {
        let alpha = random_element(ring, rng);
        let [a, b] = deal_lt_with_alpha(ring, rng, mode, alpha);
        out[0].push(a);
        out[1].push(b);
    }
    out
}

/// Local half of the gate: this party's share of msb(m - alpha) given the
/// opened `m`.
pub fn lt_eval(ring: &RingConfig, p0: bool, key: &LtKey, m: u64) -> u64 {
    let low_bits = ring.bits - 1;
    let m_hi = ring.msb(m);
    let borrow_term = key.dcf.eval(m & width_mask(low_bits))[0];
    let d = ring.add(key.alpha_msb, borrow_term);
    let mut out = if m_hi == 1 { ring.neg(d) } else { d };
    if p0 {
        out = ring.add(out, m_hi);
    }
    out
}

pub fn take_lt_keys(p: &mut Party, n: usize) -> Dealt<Vec<LtKey>> {
    let ring = p.ring();
    let mode = p.dcf_mode();
    p.deal("lt", n as u64, |rng| deal_lt(&ring, rng, mode, n))
}

pub struct LtPending {
    own: Vec<u64>,
    keys: Vec<LtKey>,
}

/// Starts 1{x[i] < omega[i]} for signed operands whose difference does not
/// overflow. Sends l bits per comparison.
pub fn lt_begin(p: &mut Party, key: &Dealt<Vec<LtKey>>, x: &[u64], omega: &[u64], w: &mut BitWriter) -> Result<LtPending, ProtocolError> {
    if x.len() != omega.len() || x.len() != key.key.len() {
        return Err(ProtocolError::Length(format!("lt: {} inputs, {} thresholds, {} keys", x.len(), omega.len(), key.key.len())));
    }
    p.consume(key.id)?;
    let ring = p.ring();
    w.set_tag("lt");
    let own: Vec<u64> = x
        .iter()
        .zip(omega)
        .zip(&key.key)
        .map(|((&x, &om), k)| {
            let masked = ring.add(x, k.alpha);
            if p.is_p0() {
                ring.sub(masked, om)
            } else {
                masked
            }
        })
        .collect();
    w.push_all(&own, ring.bits);
    Ok(LtPending { own, keys: key.key.clone() })
}

impl LtPending {
    pub fn finish(self, p: &Party, r: &mut BitReader) -> Result<Vec<u64>, ProtocolError> {
        let ring = p.ring();
        self.own
            .iter()
            .zip(&self.keys)
            .map(|(&m, k)| Ok(lt_eval(&ring, p.is_p0(), k, ring.add(m, r.read(ring.bits)?))))
            .collect()
    }
}

/// Shares of 1{x < omega} for each element, one round.
pub fn lt_gate(p: &mut Party, label: &str, x: &[u64], omega: &[u64]) -> Result<Vec<u64>, ProtocolError> {
    let key = take_lt_keys(p, x.len());
    let mut w = p.writer("lt");
    let pending = lt_begin(p, &key, x, omega, &mut w)?;
    let mut r = p.exchange(label, w)?;
    pending.finish(p, &mut r)
}

/// 1 - b for shared bits.
pub fn not_bits(p: &Party, b: &[u64]) -> Vec<u64> {
    let ring = p.ring();
    b.iter().map(|&x| if p.is_p0() { ring.sub(1, x) } else { ring.neg(x) }).collect()
}

/// Shares of 1{x >= omega}.
pub fn ge_bit(p: &mut Party, label: &str, x: &[u64], omega: &[u64]) -> Result<Vec<u64>, ProtocolError> {
    let lt = lt_gate(p, label, x, omega)?;
    Ok(not_bits(p, &lt))
}

/// b ? x : y, computed as b * (x - y) + y with one product.
pub fn select(p: &mut Party, label: &str, b: &[u64], x: &[u64], y: &[u64]) -> Result<Vec<u64>, ProtocolError> {
    let ring = p.ring();
    let diff: Vec<u64> = x.iter().zip(y).map(|(&x, &y)| ring.sub(x, y)).collect();
    let prod = crate::sharing::mul(p, label, b, &diff)?;
    Ok(prod.iter().zip(y).map(|(&z, &y)| ring.add(z, y)).collect())
}

/// Shared candidates for one argmax: values plus any number of tag columns
/// that travel with them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Candidates {
    pub values: Vec<u64>,
    pub tags: Vec<Vec<u64>>,
}

/// The winning value and its tags.
#[derive(Clone, Debug, PartialEq)]
pub struct Winner {
    pub value: u64,
    pub tags: Vec<u64>,
}

/// Tournament argmax over several independent groups at once.
///
/// Each level pairs neighbours, compares them with one gate, and keeps the
/// right operand only when it is strictly larger, so ties go to the lower
/// index. An odd element passes through. Costs two rounds per level.
pub fn argmax(p: &mut Party, label: &str, groups: Vec<Candidates>) -> Result<Vec<Winner>, ProtocolError> {
    let ring = p.ring();
    let mut groups = groups;
    for g in &groups {
        if g.values.is_empty() || g.tags.iter().any(|t| t.len() != g.values.len()) {
            return Err(ProtocolError::Length("argmax needs non-empty groups with matching tags".into()));
        }
    }
    while groups.iter().any(|g| g.values.len() > 1) {
        let mut lefts = Vec::new();
        let mut rights = Vec::new();
        for g in &groups {
            for i in 0..g.values.len() / 2 {
                lefts.push(g.values[2 * i]);
                rights.push(g.values[2 * i + 1]);
            }
        }
        let diff: Vec<u64> = lefts.iter().zip(&rights).map(|(&l, &r)| ring.sub(l, r)).collect();
        let b = lt_gate(p, label, &diff, &vec![0; diff.len()])?;

        let ntags = groups[0].tags.len();
        let mut deltas: Vec<Vec<u64>> = vec![Vec::with_capacity(b.len()); ntags + 1];
        for g in &groups {
            for i in 0..g.values.len() / 2 {
                deltas[0].push(ring.sub(g.values[2 * i + 1], g.values[2 * i]));
                for (t, col) in g.tags.iter().enumerate() {
                    deltas[t + 1].push(ring.sub(col[2 * i + 1], col[2 * i]));
                }
            }
        }
        let refs: Vec<&[u64]> = deltas.iter().map(Vec::as_slice).collect();
        let mut w = p.writer("select");
        let pending = mul_fanout_begin(p, &b, &refs, &mut w)?;
        let mut r = p.exchange(label, w)?;
        let picked = pending.finish(p, &mut r)?;

        let mut pos = 0;
        for g in groups.iter_mut() {
            let n = g.values.len();
            let mut next = Candidates { values: Vec::with_capacity(n.div_ceil(2)), tags: vec![Vec::new(); g.tags.len()] };
            for i in 0..n / 2 {
                next.values.push(ring.add(g.values[2 * i], picked[0][pos]));
                for t in 0..g.tags.len() {
                    next.tags[t].push(ring.add(g.tags[t][2 * i], picked[t + 1][pos]));
                }
                pos += 1;
            }
            if n % 2 == 1 {
                next.values.push(g.values[n - 1]);
                for t in 0..g.tags.len() {
                    next.tags[t].push(g.tags[t][n - 1]);
                }
            }
            *g = next;
        }
    }
    Ok(groups
        .into_iter()
        .map(|g| Winner { value: g.values[0], tags: g.tags.into_iter().map(|t| t[0]).collect() })
        .collect())
}

/// Plaintext tournament with the same pairing and tie rule; returns the index.
pub fn argmax_plain(values: &[i128]) -> usize {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    while idx.len() > 1 {
        let mut next = Vec::with_capacity(idx.len().div_ceil(2));
        for pair in idx.chunks(2) {
            match *pair {
                [l, r] => next.push(if values[l] < values[r] { r } else { l }),
                [l] => next.push(l),
                _ => unreachable!(),
            }
        }
        idx = next;
    }
    idx[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharing::{reconstruct, share_vec};
    use crate::transport::{run_two_party, SessionConfig};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn gate_is_exhaustive_on_small_ring() {
        let ring = RingConfig::SMALL;
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for alpha in 0..256u64 {
            let keys = deal_lt_with_alpha(&ring, &mut rng, DcfMode::Tree, alpha);
            for x in 0..256u64 {
                let m = ring.add(x, alpha);
                let out = ring.add(lt_eval(&ring, true, &keys[0], m), lt_eval(&ring, false, &keys[1], m));
                assert_eq!(out, (ring.to_signed(x) < 0) as u64, "alpha={alpha} x={x}");
            }
        }
    }

    #[test]
    fn gate_against_thresholds_online() {
        let ring = RingConfig::DEFAULT;
        let xs: Vec<u64> = [-3.0, -0.5, 0.0, 0.5, 2.0, 1.999].iter().map(|&v| ring.encode(v).unwrap()).collect();
        let omega = vec![ring.encode(0.5).unwrap(); xs.len()];
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let sx = share_vec(&ring, &xs, &mut rng);
        let runs = run_two_party(&SessionConfig::new(ring, 5), |p| lt_gate(p, "lt", &sx[p.id().index()], &omega)).unwrap();
        assert_eq!(reconstruct(&ring, &runs[0].output, &runs[1].output), vec![1, 1, 1, 0, 0, 0]);
        assert_eq!(runs[0].meter.rounds, 1);
        assert_eq!(runs[0].meter.bits, 64 * 6);
    }

    #[test]
    fn argmax_prefers_left_on_ties() {
        let ring = RingConfig::DEFAULT;
        let groups = [vec![5u64, 2, 5], vec![1, 9, 9, 3], vec![7]];
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let shared: Vec<[Vec<u64>; 2]> = groups.iter().map(|g| share_vec(&ring, g, &mut rng)).collect();
        let runs = run_two_party(&SessionConfig::new(ring, 6), |p| {
            let i = p.id().index();
            let gs = shared
                .iter()
                .map(|s| Candidates { values: s[i].clone(), tags: vec![crate::sharing::degenerate(p, crate::sharing::PartyId::P0, &(0..s[i].len() as u64).collect::<Vec<_>>())] })
                .collect();
            argmax(p, "argmax", gs)
        })
        .unwrap();
        let idx: Vec<u64> = (0..3).map(|g| ring.add(runs[0].output[g].tags[0], runs[1].output[g].tags[0])).collect();
        assert_eq!(idx, vec![0, 1, 0]);
        let vals: Vec<u64> = (0..3).map(|g| ring.add(runs[0].output[g].value, runs[1].output[g].value)).collect();
        assert_eq!(vals, vec![5, 9, 7]);
    }

    #[test]
    fn select_picks_by_bit() {
        let ring = RingConfig::DEFAULT;
        let mut rng = ChaCha20Rng::seed_from_u64(24);
        let (b, x, y) = (share_vec(&ring, &[1, 0], &mut rng), share_vec(&ring, &[10, 20], &mut rng), share_vec(&ring, &[30, 40], &mut rng));
        let runs = run_two_party(&SessionConfig::new(ring, 7), |p| {
            let i = p.id().index();
            select(p, "sel", &b[i], &x[i], &y[i])
        })
        .unwrap();
        assert_eq!(reconstruct(&ring, &runs[0].output, &runs[1].output), vec![10, 40]);
    }

    proptest! {
        #[test]
        fn plain_tournament_is_first_max(values in proptest::collection::vec(-5i128..5, 1..40)) {
            let max = *values.iter().max().unwrap();
            let first = values.iter().position(|&v| v == max).unwrap();
            prop_assert_eq!(argmax_plain(&values), first);
        }

        #[test]
        fn gate_matches_signed_comparison(x in -(1i64 << 61)..(1i64 << 61), om in -(1i64 << 61)..(1i64 << 61), alpha: u64, seed: u64) {
            let ring = RingConfig::DEFAULT;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let keys = deal_lt_with_alpha(&ring, &mut rng, DcfMode::Tree, alpha);
            let alpha = ring.add(keys[0].alpha, keys[1].alpha);
            let m = ring.add(ring.sub(ring.from_signed(x), ring.from_signed(om)), alpha);
            let out = ring.add(lt_eval(&ring, true, &keys[0], m), lt_eval(&ring, false, &keys[1], m));
            prop_assert_eq!(out, (x < om) as u64);
        }
    }
}
