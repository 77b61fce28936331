//! Compressed aggregation: shares of sum_i s_i * g_i for a shared indicator
//! `s` and shared gradients `g`, in one round.
//!
//! Gradients are biased by B = 2^f into [0, 2^(l'-1)) and masked in the
//! compressed ring Z_{2^l'} with l' = f + 2. The indicator is masked as one
//! bit. Each party therefore sends 1 + l' bits per element for one column. The
//! wrap lost by working mod 2^l' is msb(r_g) * (1 - msb(g_hat)), so the dealer
//! supplies v = msb(r_g) and the products u = r_s r_g and m = r_s v. With those,
//! s*g is a local function of the opened values:
//!
//! ```text
//! s*g = s^ g^ - s^ r_g + s^ (1 - M) v 2^l'
//!     + (1 - 2 s^)(g^ r_s - u + (1 - M) m 2^l')
//!     - (s^ + (1 - 2 s^) r_s) B
//! ```
//!
//! where M = msb(g^). Several gradient columns can share one indicator, which
//! adds l' bits per column and reuses the opened s^.

use rand::{Rng, RngCore};

use crate::dealer::KeyId;
use crate::error::ProtocolError;
use crate::ring::{msb, RingConfig};
use crate::sharing::{random_element, share_vec, PartyId};
use crate::transport::{in_process_pair, BitReader, BitWriter, Dealt, Party, SessionConfig};

/// One party's masks for `n` elements and `cols` gradient columns.
/// Column-indexed vectors are element-major: entry `i * cols + j`.
#[derive(Clone, Debug, Default)]
pub struct AggKey {
    pub cols: usize,
    pub r_s: Vec<u64>,
    pub r_g: Vec<u64>,
    pub u: Vec<u64>,
    pub v: Vec<u64>,
    pub m: Vec<u64>,
}

impl AggKey {
    pub fn len(&self) -> usize {
        self.r_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_s.is_empty()
    }
}


pub fn deal_agg(ring: &RingConfig, rng: &mut impl RngCore, n: usize, cols: usize) -> [AggKey; 2] {
    let cmask = ring.compressed_mask();
    let masks: Vec<(u64, Vec<u64>)> = (0..n)
        .map(|_| (rng.gen::<bool>() as u64, (0..cols).map(|_| rng.next_u64() & cmask).collect()))
        .collect();
    deal_agg_with(ring, rng, &masks)
}

/// Deals keys for the given (r_s, [r_g per column]) masks.
pub fn deal_agg_with(ring: &RingConfig, rng: &mut impl RngCore, masks: &[(u64, Vec<u64>)]) -> [AggKey; 2] {
    let cols = masks.first().map_or(0, |m| m.1.len());
    let lc = ring.compressed_bits();
    let mut keys = [AggKey { cols, ..Default::default() }, AggKey { cols, ..Default::default() }];
    let split = |x: u64, rng: &mut dyn RngCore| {
        let r = random_element(ring, &mut *rng);
        [r, ring.sub(x, r)]
    };
    for (r_s, r_gs) in masks {
        let [a, b] = split(*r_s, rng);
        keys[0].r_s.push(a);
        keys[1].r_s.push(b);
        for &r_g in r_gs {
            let v = msb(r_g, lc);
            for (x, pick) in [(r_g, 0), (r_s * r_g, 1), (v, 2), (r_s * v, 3)] {
                let halves = split(x, rng);
                for (key, h) in keys.iter_mut().zip(halves) {
                    match pick {
                        0 => key.r_g.push(h),
                        1 => key.u.push(h),
                        2 => key.v.push(h),
                        _ => key.m.push(h),
                    }
                }
            }
        }
    }
    keys
}

pub fn take_agg_key(p: &mut Party, n: usize, cols: usize) -> Dealt<AggKey> {
    let ring = p.ring();
    p.deal("agg", (n * cols) as u64, |rng| deal_agg(&ring, rng, n, cols))
}

pub struct AggPending {
    s_hat: Vec<u64>,
    g_hat: Vec<u64>,
    key: AggKey,
}

/// Starts the aggregation of each column in `gs` weighted by indicator `s`.
/// Gradients must lie in [-2^f, 2^f - 1] and `s` in {0, 1}.
pub fn agg_begin(p: &mut Party, key: &Dealt<AggKey>, s: &[u64], gs: &[&[u64]], w: &mut BitWriter) -> Result<AggPending, ProtocolError> {
    let n = s.len();
    let cols = gs.len();
    if key.key.len() != n || key.key.cols != cols || gs.iter().any(|g| g.len() != n) {
        return Err(ProtocolError::Length(format!("agg: {n} elements x {cols} columns does not match key")));
    }
    p.consume(key.id)?;
    let ring = p.ring();
    let lc = ring.compressed_bits();
    let cmask = ring.compressed_mask();
    let bias = if p.is_p0() { ring.one() } else { 0 };
    w.set_tag("agg");
    let mut s_hat = Vec::with_capacity(n);
    let mut g_hat = Vec::with_capacity(n * cols);
    for i in 0..n {
        let sh = (s[i] ^ key.key.r_s[i]) & 1;
        w.push(sh, 1);
        s_hat.push(sh);
        for (j, g) in gs.iter().enumerate() {
            let gh = g[i].wrapping_add(bias).wrapping_add(key.key.r_g[i * cols + j]) & cmask;
            w.push(gh, lc);
            g_hat.push(gh);
        }
    }
    Ok(AggPending { s_hat, g_hat, key: key.key.clone() })
}

impl AggPending {
    fn open(mut self, p: &Party, r: &mut BitReader) -> Result<(Vec<u64>, Vec<u64>, AggKey), ProtocolError> {
        let ring = p.ring();
        let lc = ring.compressed_bits();
        let cmask = ring.compressed_mask();
        let cols = self.key.cols;
        for i in 0..self.s_hat.len() {
            self.s_hat[i] ^= r.read(1)?;
            for j in 0..cols {
                let idx = i * cols + j;
                self.g_hat[idx] = (self.g_hat[idx] + r.read(lc)?) & cmask;
            }
        }
        Ok((self.s_hat, self.g_hat, self.key))
    }

    /// Shares of sum_i s_i * g_i, one per column.
    pub fn finish(self, p: &Party, r: &mut BitReader) -> Result<Vec<u64>, ProtocolError> {
        let (n, cols) = (self.s_hat.len(), self.key.cols);
        if n == 0 {
            return Ok(vec![0; cols]);
        }
        Ok(self.finish_grouped(p, r, n)?.remove(0))
    }

    /// Sums over consecutive runs of `group` elements: one vector of column
    /// sums per run.
    pub fn finish_grouped(self, p: &Party, r: &mut BitReader, group: usize) -> Result<Vec<Vec<u64>>, ProtocolError> {
        let (s_hat, g_hat, key) = self.open(p, r)?;
        let ring = p.ring();
        let cols = key.cols;
        let n = s_hat.len();
        if group == 0 || n % group != 0 {
            return Err(ProtocolError::Length(format!("agg: {n} elements do not split into groups of {group}")));
        }
        let mut out = Vec::with_capacity(n / group);
        for start in (0..n).step_by(group) {
            let mut sums = vec![0u64; cols];
            for i in start..start + group {
                for (j, sum) in sums.iter_mut().enumerate() {
                    *sum = sum.wrapping_add(product_share(&ring, p.is_p0(), &key, i, j, s_hat[i], g_hat[i * cols + j]));
                }
            }
            out.push(sums.into_iter().map(|s| ring.reduce(s)).collect());
        }
        Ok(out)
    }
}

#[inline]
fn product_share(ring: &RingConfig, p0: bool, key: &AggKey, i: usize, j: usize, s_hat: u64, g_hat: u64) -> u64 {
    let lc = ring.compressed_bits();
    let idx = i * key.cols + j;
    let wrap_free = 1 - msb(g_hat, lc);
    let scale = 1u64.wrapping_shl(lc);
    let bias = ring.one();
    let sign = if s_hat == 1 { u64::MAX } else { 1 };

    let mut inner = g_hat.wrapping_mul(key.r_s[i]).wrapping_sub(key.u[idx]);
    if wrap_free == 1 {
        inner = inner.wrapping_add(key.m[idx].wrapping_mul(scale));
    }
    let mut z = sign.wrapping_mul(inner);
    if s_hat == 1 {
        z = z.wrapping_sub(key.r_g[idx]);
        if wrap_free == 1 {
            z = z.wrapping_add(key.v[idx].wrapping_mul(scale));
        }
    }
    z = z.wrapping_sub(sign.wrapping_mul(key.r_s[i]).wrapping_mul(bias));
    if p0 && s_hat == 1 {
        z = z.wrapping_add(g_hat).wrapping_sub(bias);
    }
    ring.reduce(z)
}

/// Shares of sum_i s_i * g_i for each column, one round.
pub fn agg_online(p: &mut Party, label: &str, s: &[u64], gs: &[&[u64]]) -> Result<Vec<u64>, ProtocolError> {
    let key = take_agg_key(p, s.len(), gs.len());
    let mut w = p.writer("agg");
    let pending = agg_begin(p, &key, s, gs, &mut w)?;
    let mut r = p.exchange(label, w)?;
    pending.finish(p, &mut r)
}

/// Runs both halves of a one-element aggregation locally with fixed masks
/// and returns the reconstructed product.
pub fn agg_one_element(ring: RingConfig, s: u64, g: u64, r_s: u64, r_g: u64, rng: &mut impl RngCore) -> u64 {
    let keys = deal_agg_with(&ring, rng, &[(r_s, vec![r_g])]);
    let ss = share_vec(&ring, &[s], rng);
    let gs = share_vec(&ring, &[g], rng);
    let cfg = SessionConfig::new(ring, 0);
    let mut writers = Vec::new();
    let mut pendings = Vec::new();
    let mut parties = Vec::new();
    for b in 0..2 {
        let (l, _) = in_process_pair();
        let mut p = Party::new(PartyId::from_index(b), &cfg, Box::new(l));
        let key = Dealt { id: KeyId { kind: "agg", counter: 0 }, key: keys[b].clone() };
        let mut w = BitWriter::new("agg");
        pendings.push(agg_begin(&mut p, &key, &ss[b], &[&gs[b]], &mut w).expect("local aggregation"));
        writers.push(w.finish().0);
        parties.push(p);
    }
    let mut out = 0;
    for (b, pending) in pendings.into_iter().enumerate() {
        let mut r = BitReader::new(writers[1 - b].clone());
        out = ring.add(out, pending.finish(&parties[b], &mut r).expect("local aggregation")[0]);
    }
    out
}

/// Plain reference: sum_i s_i * g_i in the ring.
pub fn agg_plain(ring: &RingConfig, s: &[u64], g: &[u64]) -> u64 {
    s.iter().zip(g).fold(0, |acc, (&s, &g)| ring.add(acc, ring.mul(s, g)))
}

/// Bits each party sends for `n` elements and `cols` columns.
pub fn agg_wire_bits(ring: &RingConfig, n: usize, cols: usize) -> u64 {
    (n * (1 + cols * ring.compressed_bits() as usize)) as u64
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
    fn exhaustive_small_ring() {
        let ring = RingConfig::SMALL;
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        let mut cases = 0;
        for s in 0..2u64 {
            for g in -8i64..8 {
                for r_s in 0..2u64 {
                    for r_g in 0..32u64 {
                        let gv = ring.from_signed(g);
                        assert_eq!(agg_one_element(ring, s, gv, r_s, r_g, &mut rng), ring.mul(s, gv), "s={s} g={g} r_s={r_s} r_g={r_g}");
                        cases += 1;
                    }
                }
            }
        }
        assert_eq!(cases, 2048);
    }

    #[test]
    fn worked_example_at_full_width() {
        let ring = RingConfig::DEFAULT;
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let half = ring.encode(0.5).unwrap();
        assert_eq!(agg_one_element(ring, 1, half, 1, 5, &mut rng), half);
        assert_eq!(agg_one_element(ring, 0, half, 1, (1 << 17) + 3, &mut rng), 0);
        let low = ring.encode(-1.0).unwrap();
        assert_eq!(agg_one_element(ring, 1, low, 0, (1 << 18) - 1, &mut rng), low);
    }

    #[test]
    fn hundred_elements_cost_one_round_and_238_bytes() {
        let ring = RingConfig::DEFAULT;
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        let s: Vec<u64> = (0..100).map(|i| (i % 3 == 0) as u64).collect();
        let g: Vec<u64> = (0..100).map(|i| ring.encode((i as f64 - 50.0) / 60.0).unwrap()).collect();
        let (ss, gs) = (share_vec(&ring, &s, &mut rng), share_vec(&ring, &g, &mut rng));
        let runs = run_two_party(&SessionConfig::new(ring, 8), |p| {
            let i = p.id().index();
            agg_online(p, "agg", &ss[i], &[&gs[i]])
        })
        .unwrap();
        assert_eq!(reconstruct(&ring, &runs[0].output, &runs[1].output), vec![agg_plain(&ring, &s, &g)]);
        for r in &runs {
            assert_eq!(r.meter.rounds, 1);
            assert_eq!(r.meter.bits, 1900);
            assert_eq!(r.meter.bytes, 238);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn two_columns_match_plain_sums(
            rows in proptest::collection::vec((0u64..2, -65536i64..65536, 0i64..16384), 1..200),
            seed: u64,
        ) {
            let ring = RingConfig::DEFAULT;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let s: Vec<u64> = rows.iter().map(|r| r.0).collect();
            let g: Vec<u64> = rows.iter().map(|r| ring.from_signed(r.1)).collect();
            let h: Vec<u64> = rows.iter().map(|r| ring.from_signed(r.2)).collect();
            let (ss, gs, hs) = (share_vec(&ring, &s, &mut rng), share_vec(&ring, &g, &mut rng), share_vec(&ring, &h, &mut rng));
            let runs = run_two_party(&SessionConfig::new(ring, seed.into()), |p| {
                let i = p.id().index();
                agg_online(p, "agg", &ss[i], &[&gs[i], &hs[i]])
            }).unwrap();
            let got = reconstruct(&ring, &runs[0].output, &runs[1].output);
            prop_assert_eq!(got, vec![agg_plain(&ring, &s, &g), agg_plain(&ring, &s, &h)]);
            prop_assert_eq!(runs[0].meter.bits, agg_wire_bits(&ring, rows.len(), 2));
        }
    }
}
