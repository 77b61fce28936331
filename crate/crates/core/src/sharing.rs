//! Two-of-two additive and XOR sharing, plus the Beaver-style products the
//! rest of the protocols are built from.
//!
//! Online routines come in two halves. `*_begin` consumes dealt material and
//! writes this party's masked values into a [`BitWriter`]. The pending value's
//! `finish` reads the peer's values and produces output shares. Several
//! `begin`s can share one flush, which is how a tree level batches its work.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::ProtocolError;
use crate::ring::{RingConfig, RingElement};
use crate::transport::{BitReader, BitWriter, Dealt, Party};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartyId {
    P0,
    P1,
}

impl PartyId {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn other(self) -> PartyId {
        match self {
            PartyId::P0 => PartyId::P1,
            PartyId::P1 => PartyId::P0,
        }
    }

    pub fn from_index(i: usize) -> PartyId {
        if i == 0 {
            PartyId::P0
        } else {
            PartyId::P1
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArithShare {
    pub party: PartyId,
    pub value: RingElement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoolShare {
    pub party: PartyId,
    pub bit: u8,
}

#[inline]
pub fn random_element(ring: &RingConfig, rng: &mut (impl RngCore + ?Sized)) -> RingElement {
    rng.next_u64() & ring.mask()
}

pub fn share(ring: &RingConfig, x: RingElement, rng: &mut impl RngCore) -> [ArithShare; 2] {
    let r = random_element(ring, rng);
    [
        ArithShare { party: PartyId::P0, value: r },
        ArithShare { party: PartyId::P1, value: ring.sub(x, r) },
    ]
}

pub fn open(ring: &RingConfig, a: ArithShare, b: ArithShare) -> Result<RingElement, ProtocolError> {
    if a.party == b.party {
        return Err(ProtocolError::SameParty(a.party.index()));
    }
    Ok(ring.add(a.value, b.value))
}

/// Boolean share of a shared bit: the low bit of a modular sum has no
/// incoming carry, so the low bits of the two shares XOR to the bit.
pub fn mod2_downcast(s: ArithShare) -> BoolShare {
    BoolShare { party: s.party, bit: (s.value & 1) as u8 }
}

/// Splits a vector into per-party share vectors.
pub fn share_vec(ring: &RingConfig, xs: &[u64], rng: &mut impl RngCore) -> [Vec<u64>; 2] {
    let r: Vec<u64> = xs.iter().map(|_| random_element(ring, rng)).collect();
    let other = xs.iter().zip(&r).map(|(&x, &r)| ring.sub(x, r)).collect();
    [r, other]
}

pub fn reconstruct(ring: &RingConfig, a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(&x, &y)| ring.add(x, y)).collect()
}

/// Shares of a value one party knows in the clear: the holder keeps it, the
/// other party holds zero.
pub fn degenerate(p: &Party, holder: PartyId, xs: &[u64]) -> Vec<u64> {
    if p.id() == holder {
        xs.to_vec()
    } else {
        vec![0; xs.len()]
    }
}

/// Adds a public constant to a shared vector (party 0 carries it).
pub fn add_public(p: &Party, xs: &[u64], c: u64) -> Vec<u64> {
    let ring = p.ring();
    if p.is_p0() {
        xs.iter().map(|&x| ring.add(x, c)).collect()
    } else {
        xs.to_vec()
    }
}

fn check_len(what: &str, a: usize, b: usize) -> Result<(), ProtocolError> {
    if a == b {
        Ok(())
    } else {
        Err(ProtocolError::Length(format!("{what}: {a} vs {b}")))
    }
}

/// Splits a dealt value into two shares.
fn split(ring: &RingConfig, rng: &mut impl RngCore, x: u64, out: &mut [Vec<u64>; 2]) {
    let r = random_element(ring, rng);
    out[0].push(r);
    out[1].push(ring.sub(x, r));
}

fn empty_pair(n: usize) -> [Vec<u64>; 2] {
    [Vec::with_capacity(n), Vec::with_capacity(n)]
}

// ---------------------------------------------------------------- opening

pub struct OpenPending {
    own: Vec<u64>,
}

pub fn open_begin(p: &Party, xs: &[u64], w: &mut BitWriter) -> OpenPending {
    w.push_all(xs, p.ring().bits);
    OpenPending { own: xs.to_vec() }
}

impl OpenPending {
    pub fn finish(self, p: &Party, r: &mut BitReader) -> Result<Vec<u64>, ProtocolError> {
        let ring = p.ring();
        self.own.iter().map(|&x| Ok(ring.add(x, r.read(ring.bits)?))).collect()
    }
}

/// Reveals a shared vector to both parties: one round, l bits per element.
pub fn open_vec(p: &mut Party, label: &str, xs: &[u64]) -> Result<Vec<u64>, ProtocolError> {
    let mut w = p.writer("open");
    let pending = open_begin(p, xs, &mut w);
    let mut r = p.exchange(label, w)?;
    pending.finish(p, &mut r)
}

/// Reveals shared bits using their low-bit XOR shares: one bit per element.
pub fn open_bits(p: &mut Party, label: &str, xs: &[u64]) -> Result<Vec<u64>, ProtocolError> {
    let mut w = p.writer("open-bit");
    for &x in xs {
        w.push(x & 1, 1);
    }
    let mut r = p.exchange(label, w)?;
    xs.iter().map(|&x| Ok((x ^ r.read(1)?) & 1)).collect()
}

// ---------------------------------------------------------------- Beaver triples

/// Per-party shares of `c = a * b`, one entry per product.
#[derive(Clone, Debug, Default)]
pub struct Triples {
    pub a: Vec<u64>,
    pub b: Vec<u64>,
    pub c: Vec<u64>,
}

pub fn deal_triples(ring: &RingConfig, rng: &mut impl RngCore, n: usize) -> [Triples; 2] {
    let (mut a, mut b, mut c) = (empty_pair(n), empty_pair(n), empty_pair(n));
    for _ in 0..n {
        let x = random_element(ring, rng);
        let y = random_element(ring, rng);
        split(ring, rng, x, &mut a);
        split(ring, rng, y, &mut b);
        split(ring, rng, ring.mul(x, y), &mut c);
    }
    let [a0, a1] = a;
    let [b0, b1] = b;
    let [c0, c1] = c;
    [Triples { a: a0, b: b0, c: c0 }, Triples { a: a1, b: b1, c: c1 }]
}

pub fn take_triples(p: &mut Party, n: usize) -> Dealt<Triples> {
    let ring = p.ring();
    p.deal("triple", n as u64, |rng| deal_triples(&ring, rng, n))
}

pub struct MulPending {
    e: Vec<u64>,
    f: Vec<u64>,
    key: Triples,
}

pub fn mul_begin(p: &mut Party, key: &Dealt<Triples>, x: &[u64], y: &[u64], w: &mut BitWriter) -> Result<MulPending, ProtocolError> {
    check_len("mul operands", x.len(), y.len())?;
    check_len("mul triples", x.len(), key.key.a.len())?;
    p.consume(key.id)?;
    let ring = p.ring();
    w.set_tag("mul");
    let e: Vec<u64> = x.iter().zip(&key.key.a).map(|(&x, &a)| ring.sub(x, a)).collect();
    let f: Vec<u64> = y.iter().zip(&key.key.b).map(|(&y, &b)| ring.sub(y, b)).collect();
    w.push_all(&e, ring.bits);
    w.push_all(&f, ring.bits);
    Ok(MulPending { e, f, key: key.key.clone() })
}

impl MulPending {
    pub fn finish(self, p: &Party, r: &mut BitReader) -> Result<Vec<u64>, ProtocolError> {
        let ring = p.ring();
        let n = self.e.len();
        let pe = r.read_vec(n, ring.bits)?;
        let pf = r.read_vec(n, ring.bits)?;
        Ok((0..n)
            .map(|i| {
                let e = ring.add(self.e[i], pe[i]);
                let f = ring.add(self.f[i], pf[i]);
                beaver_combine(&ring, p.is_p0(), e, f, self.key.a[i], self.key.b[i], self.key.c[i])
            })
            .collect())
    }
}

/// z = [p0] e*f + e*b + f*a + c, with e = x - a and f = y - b public.
#[inline]
pub fn beaver_combine(ring: &RingConfig, p0: bool, e: u64, f: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut z = ring.add(ring.add(ring.mul(e, b), ring.mul(f, a)), c);
    if p0 {
        z = ring.add(z, ring.mul(e, f));
    }
    z
}

/// Elementwise product: one round, 2l bits per element.
pub fn mul(p: &mut Party, label: &str, x: &[u64], y: &[u64]) -> Result<Vec<u64>, ProtocolError> {
    let key = take_triples(p, x.len());
    let mut w = p.writer("mul");
    let pending = mul_begin(p, &key, x, y, &mut w)?;
    let mut r = p.exchange(label, w)?;
    pending.finish(p, &mut r)
}

// ---------------------------------------------------------------- fan-out products

/// Triples where one left mask is reused across `k` right operands.
#[derive(Clone, Debug, Default)]
pub struct FanoutTriples {
    pub k: usize,
    pub a: Vec<u64>,
    /// Row-major, `k` entries per element.
    pub b: Vec<u64>,
    pub c: Vec<u64>,
}

pub fn deal_fanout(ring: &RingConfig, rng: &mut impl RngCore, n: usize, k: usize) -> [FanoutTriples; 2] {
    let (mut a, mut b, mut c) = (empty_pair(n), empty_pair(n * k), empty_pair(n * k));
    for _ in 0..n {
        let x = random_element(ring, rng);
        split(ring, rng, x, &mut a);
        for _ in 0..k {
            let y = random_element(ring, rng);
            split(ring, rng, y, &mut b);
            split(ring, rng, ring.mul(x, y), &mut c);
        }
    }
    let [a0, a1] = a;
    let [b0, b1] = b;
    let [c0, c1] = c;
    [FanoutTriples { k, a: a0, b: b0, c: c0 }, FanoutTriples { k, a: a1, b: b1, c: c1 }]
}

pub struct FanoutPending {
    e: Vec<u64>,
    f: Vec<u64>,
    key: FanoutTriples,
}

/// Products x[i] * ys[j][i] for every j, opening x - a only once.
/// Costs (1 + k) * l bits per element.
pub fn mul_fanout_begin(p: &mut Party, x: &[u64], ys: &[&[u64]], w: &mut BitWriter) -> Result<FanoutPending, ProtocolError> {
    let ring = p.ring();
    let (n, k) = (x.len(), ys.len());
    for y in ys {
        check_len("fan-out operands", n, y.len())?;
    }
    let key = p.deal("fanout-triple", (n * k) as u64, |rng| deal_fanout(&ring, rng, n, k));
    p.consume(key.id)?;
    w.set_tag("mul");
    let e: Vec<u64> = x.iter().zip(&key.key.a).map(|(&x, &a)| ring.sub(x, a)).collect();
    let mut f = Vec::with_capacity(n * k);
    for i in 0..n {
        for (j, y) in ys.iter().enumerate() {
            f.push(ring.sub(y[i], key.key.b[i * k + j]));
        }
    }
    w.push_all(&e, ring.bits);
    w.push_all(&f, ring.bits);
    Ok(FanoutPending { e, f, key: key.key })
}

impl FanoutPending {
    /// Returns `k` vectors, one per right operand.
    pub fn finish(self, p: &Party, r: &mut BitReader) -> Result<Vec<Vec<u64>>, ProtocolError> {
        let ring = p.ring();
        let (n, k) = (self.e.len(), self.key.k);
        let pe = r.read_vec(n, ring.bits)?;
        let pf = r.read_vec(n * k, ring.bits)?;
        let mut out = vec![Vec::with_capacity(n); k];
        for i in 0..n {
            let e = ring.add(self.e[i], pe[i]);
            for (j, col) in out.iter_mut().enumerate() {
                let idx = i * k + j;
                let f = ring.add(self.f[idx], pf[idx]);
                col.push(beaver_combine(&ring, p.is_p0(), e, f, self.key.a[i], self.key.b[idx], self.key.c[idx]));
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------- bit products

/// Masks for products of shared bits: arithmetic shares of r_x, r_y and
/// r_x * r_y, with one r_x reused across `k` right operands.
#[derive(Clone, Debug, Default)]
pub struct BitMulKey {
    pub k: usize,
    pub rx: Vec<u64>,
    pub ry: Vec<u64>,
    pub rxy: Vec<u64>,
}

pub fn deal_bit_mul(ring: &RingConfig, rng: &mut impl RngCore, n: usize, k: usize) -> [BitMulKey; 2] {
    let (mut rx, mut ry, mut rxy) = (empty_pair(n), empty_pair(n * k), empty_pair(n * k));
    for _ in 0..n {
        let x = rng.gen::<bool>() as u64;
        split(ring, rng, x, &mut rx);
        for _ in 0..k {
            let y = rng.gen::<bool>() as u64;
            split(ring, rng, y, &mut ry);
            split(ring, rng, x & y, &mut rxy);
        }
    }
    let [x0, x1] = rx;
    let [y0, y1] = ry;
    let [z0, z1] = rxy;
    [BitMulKey { k, rx: x0, ry: y0, rxy: z0 }, BitMulKey { k, rx: x1, ry: y1, rxy: z1 }]
}

pub struct BitMulPending {
    xh: Vec<u64>,
    yh: Vec<u64>,
    key: BitMulKey,
}

/// Products of a shared bit vector with `k` shared bit vectors. Each side
/// opens x xor r_x and y xor r_y through the low bits of its shares, so the
/// cost is (1 + k) bits per element.
pub fn bit_mul_begin(p: &mut Party, x: &[u64], ys: &[&[u64]], w: &mut BitWriter) -> Result<BitMulPending, ProtocolError> {
    let ring = p.ring();
    let (n, k) = (x.len(), ys.len());
    for y in ys {
        check_len("bit product operands", n, y.len())?;
    }
    let key = p.deal("bit-mul", (n * k) as u64, |rng| deal_bit_mul(&ring, rng, n, k));
    p.consume(key.id)?;
    w.set_tag("bit-mul");
    let xh: Vec<u64> = x.iter().zip(&key.key.rx).map(|(&x, &r)| (x ^ r) & 1).collect();
    let mut yh = Vec::with_capacity(n * k);
    for i in 0..n {
        for (j, y) in ys.iter().enumerate() {
            yh.push((y[i] ^ key.key.ry[i * k + j]) & 1);
        }
    }
    for &b in xh.iter().chain(&yh) {
        w.push(b, 1);
    }
    Ok(BitMulPending { xh, yh, key: key.key })
}

impl BitMulPending {
    pub fn finish(self, p: &Party, r: &mut BitReader) -> Result<Vec<Vec<u64>>, ProtocolError> {
        let ring = p.ring();
        let (n, k) = (self.xh.len(), self.key.k);
        let mut xh = self.xh;
        for v in xh.iter_mut() {
            *v ^= r.read(1)?;
        }
        let mut yh = self.yh;
        for v in yh.iter_mut() {
            *v ^= r.read(1)?;
        }
        let mut out = vec![Vec::with_capacity(n); k];
        for i in 0..n {
            let xp = xh[i];
            for (j, col) in out.iter_mut().enumerate() {
                let idx = i * k + j;
                let yp = yh[idx];
                col.push(bit_product_share(&ring, p.is_p0(), xp, yp, self.key.rx[i], self.key.ry[idx], self.key.rxy[idx]));
            }
        }
        Ok(out)
    }
}

/// x*y with x = xh + (1-2xh) r_x and y = yh + (1-2yh) r_y:
/// xh*yh + xh(1-2yh) r_y + yh(1-2xh) r_x + (1-2xh)(1-2yh) r_x r_y.
#[inline]
fn bit_product_share(ring: &RingConfig, p0: bool, xh: u64, yh: u64, rx: u64, ry: u64, rxy: u64) -> u64 {
    let sx = ring.from_signed(1 - 2 * xh as i64);
    let sy = ring.from_signed(1 - 2 * yh as i64);
    let mut z = 0u64;
    if xh == 1 {
        z = ring.add(z, ring.mul(sy, ry));
    }
    if yh == 1 {
        z = ring.add(z, ring.mul(sx, rx));
    }
    z = ring.add(z, ring.mul(ring.mul(sx, sy), rxy));
    if p0 {
        z = ring.add(z, xh & yh);
    }
    z
}

/// Elementwise products of shared bits, one round.
pub fn bit_mul(p: &mut Party, label: &str, x: &[u64], ys: &[&[u64]]) -> Result<Vec<Vec<u64>>, ProtocolError> {
    let mut w = p.writer("bit-mul");
    let pending = bit_mul_begin(p, x, ys, &mut w)?;
    let mut r = p.exchange(label, w)?;
    pending.finish(p, &mut r)
}

// ---------------------------------------------------------------- scaling bits

/// Masks for products of one shared value with many shared bits: shares of
/// a per value, and of r and r * a per bit.
#[derive(Clone, Debug, Default)]
pub struct BitScaleKey {
    pub k: usize,
    pub a: Vec<u64>,
    /// Value-major, `k` entries per value.
    pub r: Vec<u64>,
    pub ra: Vec<u64>,
}

pub fn deal_bit_scale(ring: &RingConfig, rng: &mut impl RngCore, m: usize, k: usize) -> [BitScaleKey; 2] {
    let (mut a, mut r, mut ra) = (empty_pair(m), empty_pair(m * k), empty_pair(m * k));
    for _ in 0..m {
        let av = random_element(ring, rng);
        split(ring, rng, av, &mut a);
        for _ in 0..k {
            let bit = rng.gen::<bool>() as u64;
            split(ring, rng, bit, &mut r);
            split(ring, rng, bit * av, &mut ra);
        }
    }
    let [a0, a1] = a;
    let [r0, r1] = r;
    let [ra0, ra1] = ra;
    [BitScaleKey { k, a: a0, r: r0, ra: ra0 }, BitScaleKey { k, a: a1, r: r1, ra: ra1 }]
}

pub struct BitScalePending {
    e: Vec<u64>,
    sh: Vec<u64>,
    vals: Vec<u64>,
    key: BitScaleKey,
}

/// Products vals[j] * bits[j][i]. Each value is opened once masked (l bits)
/// and each bit as s xor r (1 bit); with s = s^ + (1 - 2 s^) r the product is
/// s^ w + (1 - 2 s^)(e r + r a), linear in the dealt shares.
pub fn bit_scale_begin(p: &mut Party, vals: &[u64], bits: &[&[u64]], w: &mut BitWriter) -> Result<BitScalePending, ProtocolError> {
    let ring = p.ring();
    check_len("scaled bit groups", vals.len(), bits.len())?;
    let k = bits.first().map_or(0, |b| b.len());
    for b in bits {
        check_len("scaled bit group", k, b.len())?;
    }
    let m = vals.len();
    let key = p.deal("bit-scale", (m * k) as u64, |rng| deal_bit_scale(&ring, rng, m, k));
    p.consume(key.id)?;
    w.set_tag("bit-scale");
    let e: Vec<u64> = vals.iter().zip(&key.key.a).map(|(&v, &a)| ring.sub(v, a)).collect();
    w.push_all(&e, ring.bits);
    let mut sh = Vec::with_capacity(m * k);
    for (j, b) in bits.iter().enumerate() {
        for (i, &bit) in b.iter().enumerate() {
            let v = (bit ^ key.key.r[j * k + i]) & 1;
            w.push(v, 1);
            sh.push(v);
        }
    }
    Ok(BitScalePending { e, sh, vals: vals.to_vec(), key: key.key })
}

impl BitScalePending {
    /// One vector of k products per value.
    pub fn finish(self, p: &Party, r: &mut BitReader) -> Result<Vec<Vec<u64>>, ProtocolError> {
        let ring = p.ring();
        let (m, k) = (self.e.len(), self.key.k);
        let pe = r.read_vec(m, ring.bits)?;
        let mut out = Vec::with_capacity(m);
        for j in 0..m {
            let e = ring.add(self.e[j], pe[j]);
            let mut row = Vec::with_capacity(k);
            for i in 0..k {
                let idx = j * k + i;
                let s = self.sh[idx] ^ r.read(1)?;
                let rw = ring.add(ring.mul(e, self.key.r[idx]), self.key.ra[idx]);
                let z = if s == 1 { ring.sub(self.vals[j], rw) } else { rw };
                row.push(z);
            }
            out.push(row);
        }
        Ok(out)
    }
}

/// vals[j] * bits[j][i] for every pair, one round.
pub fn bit_scale(p: &mut Party, label: &str, vals: &[u64], bits: &[&[u64]]) -> Result<Vec<Vec<u64>>, ProtocolError> {
    let mut w = p.writer("bit-scale");
    let pending = bit_scale_begin(p, vals, bits, &mut w)?;
    let mut r = p.exchange(label, w)?;
    pending.finish(p, &mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{run_two_party, SessionConfig};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn session(ring: RingConfig) -> SessionConfig {
        SessionConfig::new(ring, 99)
    }

    #[test]
    fn share_open_and_errors() {
        let ring = RingConfig::DEFAULT;
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let [a, b] = share(&ring, 12345, &mut rng);
        assert_eq!(open(&ring, a, b).unwrap(), 12345);
        assert_eq!(open(&ring, a, a), Err(ProtocolError::SameParty(0)));
    }

    #[test]
    fn downcast_recovers_bits() {
        let ring = RingConfig::DEFAULT;
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for bit in [0u64, 1] {
            for _ in 0..100 {
                let [a, b] = share(&ring, bit, &mut rng);
                assert_eq!((mod2_downcast(a).bit ^ mod2_downcast(b).bit) as u64, bit);
            }
        }
    }

    #[test]
    fn beaver_products_are_exhaustive_on_small_ring() {
        let ring = RingConfig::SMALL;
        let xs: Vec<u64> = (0..65536u64).map(|i| i >> 8).collect();
        let ys: Vec<u64> = (0..65536u64).map(|i| i & 0xff).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let sx = share_vec(&ring, &xs, &mut rng);
        let sy = share_vec(&ring, &ys, &mut rng);
        let runs = run_two_party(&session(ring), |p| {
            let i = p.id().index();
            mul(p, "mul", &sx[i], &sy[i])
        })
        .unwrap();
        let z = reconstruct(&ring, &runs[0].output, &runs[1].output);
        for i in 0..65536 {
            assert_eq!(z[i], (xs[i] * ys[i]) % 256);
        }
        assert_eq!(runs[0].meter.rounds, 1);
        assert_eq!(runs[0].meter.bits, 65536 * 16);
    }

    #[test]
    fn opening_one_value_costs_one_round_and_l_bits() {
        let runs = run_two_party(&session(RingConfig::DEFAULT), |p| open_vec(p, "open", &[p.id().index() as u64 + 1])).unwrap();
        assert_eq!(runs[0].output, vec![3]);
        for r in &runs {
            assert_eq!(r.meter.rounds, 1);
            assert_eq!(r.meter.bytes, 8);
        }
    }

    #[test]
    fn bit_products_cover_all_combinations() {
        let ring = RingConfig::DEFAULT;
        let xs = vec![0, 0, 1, 1];
        let y1 = vec![0, 1, 0, 1];
        let y2 = vec![1, 1, 1, 0];
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (sx, s1, s2) = (share_vec(&ring, &xs, &mut rng), share_vec(&ring, &y1, &mut rng), share_vec(&ring, &y2, &mut rng));
        let runs = run_two_party(&session(ring), |p| {
            let i = p.id().index();
            bit_mul(p, "bits", &sx[i], &[&s1[i], &s2[i]])
        })
        .unwrap();
        let z1 = reconstruct(&ring, &runs[0].output[0], &runs[1].output[0]);
        let z2 = reconstruct(&ring, &runs[0].output[1], &runs[1].output[1]);
        assert_eq!(z1, vec![0, 0, 0, 1]);
        assert_eq!(z2, vec![0, 0, 1, 0]);
        assert_eq!(runs[0].meter.bits, 4 * 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn fanout_matches_elementwise(xs in proptest::collection::vec(any::<u64>(), 1..20), seed: u64) {
            let ring = RingConfig::DEFAULT;
            let ys: Vec<Vec<u64>> = (0..3u64).map(|j| xs.iter().map(|x| x.rotate_left(j as u32 * 7)).collect()).collect();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let sx = share_vec(&ring, &xs, &mut rng);
            let sy: Vec<[Vec<u64>; 2]> = ys.iter().map(|y| share_vec(&ring, y, &mut rng)).collect();
            let runs = run_two_party(&session(ring), |p| {
                let i = p.id().index();
                let refs: Vec<&[u64]> = sy.iter().map(|s| s[i].as_slice()).collect();
                let mut w = p.writer("mul");
                let pending = mul_fanout_begin(p, &sx[i], &refs, &mut w)?;
                let mut r = p.exchange("fanout", w)?;
                pending.finish(p, &mut r)
            }).unwrap();
            for j in 0..3 {
                let z = reconstruct(&ring, &runs[0].output[j], &runs[1].output[j]);
                for i in 0..xs.len() {
                    prop_assert_eq!(z[i], xs[i].wrapping_mul(ys[j][i]));
                }
            }
        }

        #[test]
        fn bit_scale_matches_products(vals in proptest::collection::vec(any::<u64>(), 1..6), k in 0usize..30, seed: u64) {
            let ring = RingConfig::DEFAULT;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let bits: Vec<Vec<u64>> = vals.iter().map(|_| (0..k).map(|_| rand::Rng::gen::<bool>(&mut rng) as u64).collect()).collect();
            let sv = share_vec(&ring, &vals, &mut rng);
            let sb: Vec<[Vec<u64>; 2]> = bits.iter().map(|b| share_vec(&ring, b, &mut rng)).collect();
            let runs = run_two_party(&session(ring), |p| {
                let i = p.id().index();
                let refs: Vec<&[u64]> = sb.iter().map(|s| s[i].as_slice()).collect();
                bit_scale(p, "scale", &sv[i], &refs)
            }).unwrap();
            for j in 0..vals.len() {
                let z = reconstruct(&ring, &runs[0].output[j], &runs[1].output[j]);
                let want: Vec<u64> = bits[j].iter().map(|&b| b * vals[j]).collect();
                prop_assert_eq!(z, want);
            }
            prop_assert_eq!(runs[0].meter.bits, (vals.len() * (64 + k)) as u64);
        }

        #[test]
        fn sharing_roundtrips(x: u64, seed: u64) {
            let ring = RingConfig::DEFAULT;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let [a, b] = share(&ring, x, &mut rng);
            prop_assert_eq!(open(&ring, a, b).unwrap(), x);
        }
    }
}
