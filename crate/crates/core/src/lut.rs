//! Piecewise-constant lookup tables for the sigmoid and the leaf weight.
//!
//! Both split [-5, 5] into `n` equal segments with knots w_i = -5 + 10i/n and
//! take the value at the left endpoint of the segment holding the input,
//! saturating outside. Securely, one comparison per knot i = 1..n yields
//! beta_i = 1{x >= w_i}, and the output telescopes as
//! v_0 + sum_i beta_i (v_i - v_{i-1}). Any number of tables indexed by the same
//! input share the comparisons, so the hessian p(1-p) rides along with the
//! sigmoid for free.

use crate::error::{ProtocolError, SetupError};
use crate::fss::compare::{lt_begin, take_lt_keys, LtKey, LtPending};
use crate::ring::RingConfig;
use crate::transport::{BitReader, BitWriter, Dealt, Party};

pub const LUT_RANGE: f64 = 5.0;

pub fn knot(i: usize, n: usize) -> f64 {
    -LUT_RANGE + 2.0 * LUT_RANGE * i as f64 / n as f64
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Index of the segment holding `x` over real inputs.
pub fn segment_index(x: f64, n: usize) -> usize {
    let j = ((x + LUT_RANGE) * n as f64 / (2.0 * LUT_RANGE)).floor();
    j.clamp(0.0, n as f64) as usize
}

/// Real-valued piecewise sigmoid.
pub fn sigmoid_plain(x: f64, n: usize) -> f64 {
    sigmoid(knot(segment_index(x, n), n))
}

/// Real-valued piecewise leaf weight for t = -G / (H + gamma).
pub fn leafweight_plain(g: f64, h: f64, gamma: f64, n: usize) -> f64 {
    knot(segment_index(-g / (h + gamma), n), n)
}

fn check_segments(n: usize) -> Result<(), SetupError> {
    if n == 0 {
        return Err(SetupError::Segments(n));
    }
    Ok(())
}

/// Encoded knots and one or more value columns over the same knots.
#[derive(Clone, Debug)]
pub struct Table {
    pub ring: RingConfig,
    /// Encoded w_0..w_n.
    pub knots: Vec<u64>,
    /// Value columns, each with n + 1 encoded entries.
    pub values: Vec<Vec<u64>>,
}

impl Table {
    pub fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    /// Number of knots w_1..w_n at or below a signed fixed-point `x`.
    pub fn index_fixed(&self, x: u64) -> usize {
        let x = self.ring.to_signed(x);
        self.knots[1..].iter().filter(|&&k| x >= self.ring.to_signed(k)).count()
    }

    /// Telescoping differences v_i - v_{i-1}, per column.
    fn steps(&self) -> Vec<Vec<u64>> {
        self.values.iter().map(|col| col.windows(2).map(|w| self.ring.sub(w[1], w[0])).collect()).collect()
    }
}

/// Sigmoid table with the hessian column p(1 - p) next to it.
#[derive(Clone, Debug)]
pub struct SigmoidTable(pub Table);

impl SigmoidTable {
    pub fn new(ring: RingConfig, n: usize) -> Result<Self, SetupError> {
        check_segments(n)?;
        let knots = encode_all(&ring, (0..=n).map(|i| knot(i, n)))?;
        let p = encode_all(&ring, (0..=n).map(|i| sigmoid(knot(i, n))))?;
        let one = ring.one() as i128;
        let h = p
            .iter()
            .map(|&p| {
                let p = ring.to_signed(p) as i128;
                ring.from_signed((p * (one - p)).div_euclid(one) as i64)
            })
            .collect();
        Ok(SigmoidTable(Table { ring, knots, values: vec![p, h] }))
    }

    pub fn p(&self) -> &[u64] {
        &self.0.values[0]
    }

    pub fn h(&self) -> &[u64] {
        &self.0.values[1]
    }

    /// Fixed-point (p, h) for an encoded input, matching the secure output.
    pub fn eval_fixed(&self, x: u64) -> (u64, u64) {
        let j = self.0.index_fixed(x);
        (self.p()[j], self.h()[j])
    }

    /// Largest gap between the table and the true sigmoid: the biggest step
    /// or the tail below the first knot, whichever is larger.
    pub fn error_bound(&self) -> f64 {
        let n = self.0.segments();
        let steps = (1..=n).map(|i| sigmoid(knot(i, n)) - sigmoid(knot(i - 1, n)));
        steps.fold(sigmoid(-LUT_RANGE), f64::max)
    }
}

/// Leaf-weight table. Knots are the candidate weights; the values are the
/// same weights scaled by the shrinkage.
#[derive(Clone, Debug)]
pub struct LeafTable {
    pub table: Table,
    /// Encoded regularizer added to the hessian sum.
    pub gamma: u64,
}

impl LeafTable {
    pub fn new(ring: RingConfig, n: usize, gamma: f64, eta: f64) -> Result<Self, SetupError> {
        check_segments(n)?;
        if !(gamma > 0.0) {
            return Err(SetupError::Gamma(gamma));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(SetupError::Eta(eta));
        }
        let knots = encode_all(&ring, (0..=n).map(|i| knot(i, n)))?;
        let values = encode_all(&ring, (0..=n).map(|i| eta * knot(i, n)))?;
        let gamma = ring.encode(gamma).map_err(|_| SetupError::Gamma(gamma))?;
        Ok(LeafTable { table: Table { ring, knots, values: vec![values] }, gamma })
    }

    /// -G 2^f - w_i (H + gamma) for every knot, at scale 2^(2f). Its sign
    /// decides -G / (H + gamma) >= w_i without a division.
    pub fn comparands(&self, g: u64, h: u64, p0: bool) -> Vec<u64> {
        let ring = &self.table.ring;
        let f = ring.frac_bits;
        let hg = if p0 { ring.add(h, self.gamma) } else { h };
        let neg_g = ring.neg(g) << f;
        self.table.knots[1..].iter().map(|&w| ring.reduce(neg_g.wrapping_sub(ring.mul(w, hg)))).collect()
    }

    /// Fixed-point leaf weight for encoded sums, matching the secure output.
    pub fn eval_fixed(&self, g: u64, h: u64) -> u64 {
        let ring = &self.table.ring;
        let j = self.comparands(g, h, true).iter().filter(|&&x| ring.msb(x) == 0).count();
        self.table.values[0][j]
    }

    /// Encoded weight at knot `j` before shrinkage.
    pub fn knot_value(&self, j: usize) -> u64 {
        self.table.knots[j]
    }
}

fn encode_all(ring: &RingConfig, xs: impl Iterator<Item = f64>) -> Result<Vec<u64>, SetupError> {
    xs.map(|x| ring.encode(x).map_err(|e| SetupError::Other(format!("table entry: {e}")))).collect()
}

pub fn take_lut_keys(p: &mut Party, inputs: usize, n: usize) -> Dealt<Vec<LtKey>> {
    take_lt_keys(p, inputs * n)
}

/// Comparisons in flight for several table lookups.
pub struct LutPending {
    lt: LtPending,
    n: usize,
    steps: Vec<Vec<u64>>,
    base: Vec<u64>,
}

/// Starts lookups of `x` against `table`, one comparison per knot.
pub fn sigmoid_begin(p: &mut Party, key: &Dealt<Vec<LtKey>>, table: &SigmoidTable, x: &[u64], w: &mut BitWriter) -> Result<LutPending, ProtocolError> {
    let n = table.0.segments();
    let xs: Vec<u64> = x.iter().flat_map(|&v| std::iter::repeat_n(v, n)).collect();
    let omegas: Vec<u64> = x.iter().flat_map(|_| table.0.knots[1..].iter().copied()).collect();
    begin(p, key, &table.0, &xs, &omegas, w)
}

/// Starts leaf-weight lookups for aggregated gradient sums `g` and `h`.
pub fn leaf_begin(p: &mut Party, key: &Dealt<Vec<LtKey>>, table: &LeafTable, g: &[u64], h: &[u64], w: &mut BitWriter) -> Result<LutPending, ProtocolError> {
    if g.len() != h.len() {
        return Err(ProtocolError::Length(format!("leaf: {} gradient sums, {} hessian sums", g.len(), h.len())));
    }
    let p0 = p.is_p0();
    let xs: Vec<u64> = g.iter().zip(h).flat_map(|(&g, &h)| table.comparands(g, h, p0)).collect();
    let zeros = vec![0; xs.len()];
    begin(p, key, &table.table, &xs, &zeros, w)
}

fn begin(p: &mut Party, key: &Dealt<Vec<LtKey>>, table: &Table, xs: &[u64], omegas: &[u64], w: &mut BitWriter) -> Result<LutPending, ProtocolError> {
    let lt = lt_begin(p, key, xs, omegas, w)?;
    let base = table.values.iter().map(|col| col[0]).collect();
    Ok(LutPending { lt, n: table.segments(), steps: table.steps(), base })
}

impl LutPending {
    /// One output vector per table column.
    pub fn finish(self, p: &Party, r: &mut BitReader) -> Result<Vec<Vec<u64>>, ProtocolError> {
        let ring = p.ring();
        let lt = self.lt.finish(p, r)?;
        let inputs = lt.len() / self.n;
        let mut out = vec![Vec::with_capacity(inputs); self.steps.len()];
        for chunk in lt.chunks(self.n) {
            for (c, col) in out.iter_mut().enumerate() {
                let mut acc = if p.is_p0() { self.base[c] } else { 0 };
                for (i, &b) in chunk.iter().enumerate() {
                    // beta = 1 - lt, so beta * step = step - lt * step.
                    let step = self.steps[c][i];
                    if p.is_p0() {
                        acc = ring.add(acc, step);
                    }
                    acc = ring.sub(acc, ring.mul(b, step));
                }
                col.push(acc);
            }
        }
        Ok(out)
    }
}

/// Shares of the table sigmoid and hessian of each input, one round.
pub fn sigmoid_online(p: &mut Party, label: &str, table: &SigmoidTable, x: &[u64]) -> Result<(Vec<u64>, Vec<u64>), ProtocolError> {
    let key = take_lut_keys(p, x.len(), table.0.segments());
    let mut w = p.writer("lut");
    let pending = sigmoid_begin(p, &key, table, x, &mut w)?;
    let mut r = p.exchange(label, w)?;
    let mut out = pending.finish(p, &mut r)?;
    let h = out.pop().unwrap_or_default();
    let prob = out.pop().unwrap_or_default();
    Ok((prob, h))
}

/// Shares of the table leaf weight for each (G, H) pair, one round.
pub fn leafweight_online(p: &mut Party, label: &str, table: &LeafTable, g: &[u64], h: &[u64]) -> Result<Vec<u64>, ProtocolError> {
    let key = take_lut_keys(p, g.len(), table.table.segments());
    let mut w = p.writer("lut");
    let pending = leaf_begin(p, &key, table, g, h, &mut w)?;
    let mut r = p.exchange(label, w)?;
    Ok(pending.finish(p, &mut r)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharing::{reconstruct, share_vec};
    use crate::transport::{run_two_party, SessionConfig};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const RING: RingConfig = RingConfig::DEFAULT;

    #[test]
    fn plain_examples() {
        assert!((sigmoid_plain(-10.0, 12) - 0.006693).abs() < 1e-6);
        assert_eq!(sigmoid_plain(0.0, 12), 0.5);
        assert!((sigmoid_plain(100.0, 12) - 0.993307).abs() < 1e-6);
        assert_eq!(leafweight_plain(0.0, 3.0, 1.0, 12), 0.0);
        assert!((leafweight_plain(-2.0, 1.0, 1.0, 12) - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(leafweight_plain(100.0, 1.0, 1.0, 12), -5.0);
    }

    #[test]
    fn tables_are_monotone_and_sized() {
        let t = SigmoidTable::new(RING, 12).unwrap();
        assert_eq!(t.p().len(), 13);
        assert!(t.p().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(t.h()[6], RING.encode(0.25).unwrap());
        assert!(t.error_bound() <= 0.21);
        assert!(matches!(SigmoidTable::new(RING, 0), Err(SetupError::Segments(0))));
        assert!(LeafTable::new(RING, 12, 0.0, 1.0).is_err());
    }

    #[test]
    fn fixed_leaf_examples() {
        let t = LeafTable::new(RING, 12, 1.0, 1.0).unwrap();
        let e = |x: f64| RING.encode(x).unwrap();
        assert_eq!(t.eval_fixed(e(0.0), e(1.0)), e(0.0));
        assert_eq!(t.eval_fixed(e(-2.0), e(1.0)), e(5.0 / 6.0));
        assert_eq!(t.eval_fixed(0, 0), e(0.0));
        assert_eq!(t.eval_fixed(e(100.0), e(1.0)), e(-5.0));
        assert_eq!(t.eval_fixed(e(-100.0), e(1.0)), e(5.0));
    }

    #[test]
    fn secure_sigmoid_examples_and_cost() {
        let table = SigmoidTable::new(RING, 12).unwrap();
        let xs = [RING.encode(-10.0).unwrap(), 0, RING.encode(100.0).unwrap()];
        let shares = share_vec(&RING, &xs, &mut ChaCha20Rng::seed_from_u64(5));
        let runs = run_two_party(&SessionConfig::new(RING, 5), |p| sigmoid_online(p, "sigmoid", &table, &shares[p.id().index()])).unwrap();
        let prob = reconstruct(&RING, &runs[0].output.0, &runs[1].output.0);
        let h = reconstruct(&RING, &runs[0].output.1, &runs[1].output.1);
        assert_eq!(prob, vec![table.p()[0], RING.encode(0.5).unwrap(), table.p()[12]]);
        assert_eq!(h[1], RING.encode(0.25).unwrap());
        for r in &runs {
            assert_eq!(r.meter.rounds, 1);
            assert_eq!(r.meter.bits, 3 * 12 * 64);
        }
    }

    #[test]
    fn one_sigmoid_is_96_bytes() {
        let table = SigmoidTable::new(RING, 12).unwrap();
        let runs = run_two_party(&SessionConfig::new(RING, 6), |p| sigmoid_online(p, "sigmoid", &table, &[0])).unwrap();
        assert_eq!(runs[0].meter.bytes, 96);
        assert_eq!(runs[0].meter.rounds, 1);
    }

    #[test]
    fn secure_leaf_examples() {
        let table = LeafTable::new(RING, 12, 1.0, 1.0).unwrap();
        let e = |x: f64| RING.encode(x).unwrap();
        let gs = [e(0.0), e(-2.0), 0, e(37.5)];
        let hs = [e(1.0), e(1.0), 0, e(2.25)];
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let (g2, h2) = (share_vec(&RING, &gs, &mut rng), share_vec(&RING, &hs, &mut rng));
        let runs = run_two_party(&SessionConfig::new(RING, 7), |p| {
            let i = p.id().index();
            leafweight_online(p, "leaf", &table, &g2[i], &h2[i])
        })
        .unwrap();
        let got = reconstruct(&RING, &runs[0].output, &runs[1].output);
        let want: Vec<u64> = gs.iter().zip(&hs).map(|(&g, &h)| table.eval_fixed(g, h)).collect();
        assert_eq!(got, want);
        assert_eq!(got[1], e(5.0 / 6.0));
        assert_eq!(runs[0].meter.bits, 4 * 12 * 64);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn secure_sigmoid_matches_table(xs in proptest::collection::vec(-8.0f64..8.0, 1..40), n in 1usize..20, seed: u64) {
            let table = SigmoidTable::new(RING, n).unwrap();
            let enc: Vec<u64> = xs.iter().map(|&x| RING.encode(x).unwrap()).collect();
            let shares = share_vec(&RING, &enc, &mut ChaCha20Rng::seed_from_u64(seed));
            let runs = run_two_party(&SessionConfig::new(RING, seed.into()), |p| sigmoid_online(p, "s", &table, &shares[p.id().index()])).unwrap();
            let prob = reconstruct(&RING, &runs[0].output.0, &runs[1].output.0);
            let h = reconstruct(&RING, &runs[0].output.1, &runs[1].output.1);
            for (i, &x) in enc.iter().enumerate() {
                prop_assert_eq!((prob[i], h[i]), table.eval_fixed(x));
            }
        }

        #[test]
        fn fixed_sigmoid_agrees_with_real_away_from_knots(x in -9.0f64..9.0, n in 1usize..30) {
            let table = SigmoidTable::new(RING, n).unwrap();
            let scaled = (x + LUT_RANGE) * n as f64 / (2.0 * LUT_RANGE);
            prop_assume!((scaled - scaled.round()).abs() > 1e-3);
            let got = RING.decode(table.eval_fixed(RING.encode(x).unwrap()).0);
            prop_assert!((got - sigmoid_plain(x, n)).abs() < 1e-4);
            prop_assert!((got - sigmoid(x)).abs() <= table.error_bound() + 1e-4);
        }

        #[test]
        fn fixed_leaf_stays_in_range(g in -600.0f64..600.0, h in 0.0f64..150.0, n in 1usize..30) {
            let table = LeafTable::new(RING, n, 1.0, 1.0).unwrap();
            let w = RING.decode(table.eval_fixed(RING.encode(g).unwrap(), RING.encode(h).unwrap()));
            prop_assert!((-5.0..=5.0).contains(&w));
            let t = -g / (h + 1.0);
            let scaled = (t + LUT_RANGE) * n as f64 / (2.0 * LUT_RANGE);
            if (scaled - scaled.round()).abs() > 1e-3 {
                prop_assert!((w - leafweight_plain(g, h, 1.0, n)).abs() < 1e-4);
            }
        }
    }
}
