//! Exact truncating product: shares of floor(x / 2^k) * y in one Beaver round.
//!
//! The round opens e = x - a and f = y - b exactly like a plain product. With
//! E = e + 2^(l-2), the biased input X = x + 2^(l-2) satisfies X = E + a - w 2^l
//! and floor(X / 2^k) = floor(E / 2^k) + floor(a / 2^k) + c - w 2^(l-k). Here c
//! is the carry out of the low k bits and w the wrap of E + a. Both bits are
//! comparisons of the public E against thresholds fixed by the dealer, so two
//! DCF keys recover them. Payload (1, b) also yields c*b and w*b, and every
//! remaining term is local.
//!
//! Requires |x| < 2^(l-2). There is no extra communication and no rounding
//! error.

use rand::RngCore;

use super::dcf::{dcf_gen, DcfKey, DcfMode};
use crate::error::ProtocolError;
use crate::ring::{width_mask, RingConfig};
use crate::sharing::random_element;
use crate::transport::{BitReader, BitWriter, Dealt, Party};

#[derive(Clone, Debug)]
pub struct TruncMulKey {
    pub k: u32,
    pub square: bool,
    pub a: Vec<u64>,
    pub b: Vec<u64>,
    /// floor(a / 2^k) + c0 - 2^(l-k) w0
    pub hi: Vec<u64>,
    /// floor(a / 2^k) * b + (c0 - 2^(l-k) w0) * b
    pub hi_b: Vec<u64>,
    pub carry: Vec<Option<DcfKey>>,
    pub wrap: Vec<DcfKey>,
}

fn shift_weight(ring: &RingConfig, k: u32) -> u64 {
    if ring.bits - k >= 64 {
        0
    } else {
        ring.reduce(1u64 << (ring.bits - k))
    }
}

pub fn deal_trunc_mul(ring: &RingConfig, rng: &mut impl RngCore, mode: DcfMode, n: usize, k: u32, square: bool) -> [TruncMulKey; 2] {
    let masks: Vec<u64> = (0..n).map(|_| random_element(ring, rng)).collect();
    deal_trunc_mul_with(ring, rng, mode, k, square, &masks)
}

/// Deals keys whose input masks are the given `a` values.
pub fn deal_trunc_mul_with(ring: &RingConfig, rng: &mut impl RngCore, mode: DcfMode, k: u32, square: bool, masks: &[u64]) -> [TruncMulKey; 2] {
    assert!(k + 2 <= ring.bits, "truncation shift too large");
    let n = masks.len();
    let mut keys = [0, 1].map(|_| TruncMulKey {
        k,
        square,
        a: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        hi: Vec::with_capacity(n),
        hi_b: Vec::with_capacity(n),
        carry: Vec::with_capacity(n),
        wrap: Vec::with_capacity(n),
    });
    let low_mask = width_mask(k);
    let weight = shift_weight(ring, k);
    for &a in masks {
        let a = ring.reduce(a);
        let b = if square { a } else { random_element(ring, rng) };
        let a_low = a & low_mask;
        let minus_b = ring.neg(b);
        let minus_one = ring.neg(1);

        let (c0, carry) = if k > 0 && a_low != 0 {
            let keys = dcf_gen(rng, mode, k, (1u64 << k) - a_low, [minus_one, minus_b], ring.bits);
            (1u64, keys.map(Some))
        } else {
            (0, [None, None])
        };
        let (w0, wrap) = if a != 0 {
            (1u64, dcf_gen(rng, mode, ring.bits, ring.neg(a), [minus_one, minus_b], ring.bits))
        } else {
            (0, dcf_gen(rng, mode, ring.bits, 0, [0, 0], ring.bits))
        };
        let corr = ring.sub(c0, ring.mul(weight, w0));
        let hi = ring.add(a >> k, corr);
        let hi_b = ring.mul(hi, b);

        for v in [a, b, hi, hi_b].into_iter().enumerate() {
            let r = random_element(ring, rng);
            for (key, part) in keys.iter_mut().zip([r, ring.sub(v.1, r)]) {
                match v.0 {
                    0 => key.a.push(part),
                    1 => key.b.push(part),
                    2 => key.hi.push(part),
                    _ => key.hi_b.push(part),
                }
            }
        }
        let [c_0, c_1] = carry;
        keys[0].carry.push(c_0);
        keys[1].carry.push(c_1);
        let [w_0, w_1] = wrap;
        keys[0].wrap.push(w_0);
        keys[1].wrap.push(w_1);
    }
    keys
}

pub fn take_trunc_mul(p: &mut Party, n: usize, k: u32, square: bool) -> Dealt<TruncMulKey> {
    let ring = p.ring();
    let mode = p.dcf_mode();
    let kind = if square { "trunc-square" } else { "trunc-mul" };
    p.deal(kind, n as u64, |rng| deal_trunc_mul(&ring, rng, mode, n, k, square))
}

pub struct TruncMulPending {
    e: Vec<u64>,
    f: Vec<u64>,
    key: TruncMulKey,
}

/// Starts floor(x / 2^k) * y. For a square key pass `y = None`; it then
/// computes floor(x / 2^k) * x and sends l bits per element instead of 2l.
pub fn trunc_mul_begin(p: &mut Party, key: &Dealt<TruncMulKey>, x: &[u64], y: Option<&[u64]>, w: &mut BitWriter) -> Result<TruncMulPending, ProtocolError> {
    let n = x.len();
    if key.key.a.len() != n || y.is_some_and(|y| y.len() != n) || y.is_some() == key.key.square {
        return Err(ProtocolError::Length("truncating product operands do not match key".into()));
    }
    p.consume(key.id)?;
    let ring = p.ring();
    w.set_tag(if key.key.square { "trunc-square" } else { "trunc-mul" });
    let e: Vec<u64> = x.iter().zip(&key.key.a).map(|(&x, &a)| ring.sub(x, a)).collect();
    w.push_all(&e, ring.bits);
    let f = match y {
        Some(y) => {
            let f: Vec<u64> = y.iter().zip(&key.key.b).map(|(&y, &b)| ring.sub(y, b)).collect();
            w.push_all(&f, ring.bits);
            f
        }
        None => Vec::new(),
    };
    Ok(TruncMulPending { e, f, key: key.key.clone() })
}

impl TruncMulPending {
    pub fn finish(self, p: &Party, r: &mut BitReader) -> Result<Vec<u64>, ProtocolError> {
        let ring = p.ring();
        let n = self.e.len();
        let pe = r.read_vec(n, ring.bits)?;
        let pf = if self.key.square { Vec::new() } else { r.read_vec(n, ring.bits)? };
        Ok((0..n)
            .map(|i| {
                let e = ring.add(self.e[i], pe[i]);
                let f = if self.key.square { e } else { ring.add(self.f[i], pf[i]) };
                combine(&ring, p.is_p0(), &self.key, i, e, f)
            })
            .collect())
    }
}

/// This party's share of element `i` given the opened e = x - a and f = y - b.
pub fn combine(ring: &RingConfig, p0: bool, key: &TruncMulKey, i: usize, e: u64, f: u64) -> u64 {
    let k = key.k;
    let bias = 1u64 << (ring.bits - 2);
    let big_e = ring.add(e, bias);
    let q = ring.sub(big_e >> k, bias >> k);
    let [c, cb] = match &key.carry[i] {
        Some(dcf) => dcf.eval(big_e & width_mask(k)),
        None => [0, 0],
    };
    let [wr, wb] = key.wrap[i].eval(big_e);
    let mut z = ring.mul(q, key.b[i]);
    z = ring.add(z, ring.mul(f, key.hi[i]));
    z = ring.add(z, key.hi_b[i]);
    z = ring.add(z, ring.add(ring.mul(f, c), cb));
    z = ring.sub(z, ring.mul(shift_weight(ring, k), ring.add(ring.mul(f, wr), wb)));
    if p0 {
        z = ring.add(z, ring.mul(q, f));
    }
    z
}

/// floor(x / 2^k) * y elementwise, one round.
pub fn trunc_mul(p: &mut Party, label: &str, x: &[u64], y: &[u64], k: u32) -> Result<Vec<u64>, ProtocolError> {
    let key = take_trunc_mul(p, x.len(), k, false);
    let mut w = p.writer("trunc-mul");
    let pending = trunc_mul_begin(p, &key, x, Some(y), &mut w)?;
    let mut r = p.exchange(label, w)?;
    pending.finish(p, &mut r)
}

/// floor(x / 2^k) * x elementwise, one round.
pub fn trunc_square(p: &mut Party, label: &str, x: &[u64], k: u32) -> Result<Vec<u64>, ProtocolError> {
    let key = take_trunc_mul(p, x.len(), k, true);
    let mut w = p.writer("trunc-square");
    let pending = trunc_mul_begin(p, &key, x, None, &mut w)?;
    let mut r = p.exchange(label, w)?;
    pending.finish(p, &mut r)
}

/// Plaintext reference: floor(x / 2^k) * y in the ring.
pub fn trunc_mul_plain(ring: &RingConfig, x: u64, y: u64, k: u32) -> u64 {
    ring.mul(ring.truncate(x, k), y)
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
    fn exhaustive_small_ring_all_masks() {
        let ring = RingConfig::SMALL;
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        for k in 0u32..=6 {
            for a in 0..256u64 {
                let sq = deal_trunc_mul_with(&ring, &mut rng, DcfMode::Tree, k, true, &[a]);
                let pr = deal_trunc_mul_with(&ring, &mut rng, DcfMode::Tree, k, false, &[a]);
                let b = ring.add(pr[0].b[0], pr[1].b[0]);
                for x in -64i64..64 {
                    let xv = ring.from_signed(x);
                    let e = ring.sub(xv, a);
                    let got = ring.add(combine(&ring, true, &sq[0], 0, e, e), combine(&ring, false, &sq[1], 0, e, e));
                    assert_eq!(got, trunc_mul_plain(&ring, xv, xv, k), "square k={k} a={a} x={x}");
                    let y = ring.from_signed(x * 3 + 1);
                    let f = ring.sub(y, b);
                    let got = ring.add(combine(&ring, true, &pr[0], 0, e, f), combine(&ring, false, &pr[1], 0, e, f));
                    assert_eq!(got, trunc_mul_plain(&ring, xv, y, k), "product k={k} a={a} x={x}");
                }
            }
        }
    }

    #[test]
    fn online_product_matches_floor() {
        let ring = RingConfig::DEFAULT;
        let xs: Vec<u64> = [0i64, 1, -1, 255, -256, 123_456_789, -987_654_321, (1 << 60) - 1, -(1 << 60)].iter().map(|&v| ring.from_signed(v)).collect();
        let ys: Vec<u64> = [3i64, -7, 11, 1 << 20, -5, 9, -13, 2, -2].iter().map(|&v| ring.from_signed(v)).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(32);
        let (sx, sy) = (share_vec(&ring, &xs, &mut rng), share_vec(&ring, &ys, &mut rng));
        for k in [0u32, 1, 8, 16, 40] {
            let runs = run_two_party(&SessionConfig::new(ring, k as u128), |p| {
                let i = p.id().index();
                let prod = trunc_mul(p, "tm", &sx[i], &sy[i], k)?;
                let sq = trunc_square(p, "ts", &sx[i], k)?;
                Ok((prod, sq))
            })
            .unwrap();
            let prod = reconstruct(&ring, &runs[0].output.0, &runs[1].output.0);
            let sq = reconstruct(&ring, &runs[0].output.1, &runs[1].output.1);
            for i in 0..xs.len() {
                assert_eq!(prod[i], trunc_mul_plain(&ring, xs[i], ys[i], k), "k={k} i={i}");
                assert_eq!(sq[i], trunc_mul_plain(&ring, xs[i], xs[i], k), "k={k} i={i}");
            }
            assert_eq!(runs[0].meter.bits, (2 * 9 + 9) * 64);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn random_operands(x in -(1i64 << 61)..(1i64 << 61), y: u64, k in 0u32..=30, seed: u64) {
            let ring = RingConfig::DEFAULT;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (sx, sy) = (share_vec(&ring, &[ring.from_signed(x)], &mut rng), share_vec(&ring, &[y], &mut rng));
            let mut cfg = SessionConfig::new(ring, seed.into());
            cfg.dcf = if seed % 2 == 0 { DcfMode::Tree } else { DcfMode::Ideal };
            let runs = run_two_party(&cfg, |p| {
                let i = p.id().index();
                trunc_mul(p, "tm", &sx[i], &sy[i], k)
            }).unwrap();
            let got = ring.add(runs[0].output[0], runs[1].output[0]);
            prop_assert_eq!(got, trunc_mul_plain(&ring, ring.from_signed(x), y, k));
        }
    }
}
