//! Division-free split gain.
//!
//! The usual gain G_L^2/(H_L+g) + G_R^2/(H_R+g) - G_X^2/(H_X+g) is replaced
//! by cross-multiplied numerators
//!
//! ```text
//! G* = (H_R + g) G_L^2 + (H_L + g) G_R^2
//! ```
//!
//! signed by which child is lighter: +G* if 2 H_L < H_X, else -G*. G* is never
//! negative, so the sign alone carries the case split.
//!
//! In fixed point the squares and products are taken with exact truncating
//! products floor(x / 2^k) * y, so the output has scale 2^(3f - 2k) and every
//! party computes the same integer that [`gain_fixed`] does in the clear.

use crate::error::{ProtocolError, SetupError};
use crate::fss::compare::{lt_begin, take_lt_keys};
use crate::fss::trunc::{take_trunc_mul, trunc_mul_begin};
use crate::ring::RingConfig;
use crate::sharing::{mul_begin, take_triples};
use crate::transport::Party;

/// Real-valued signed gain, no division.
pub fn gain_plain(g_l: f64, g_r: f64, h_l: f64, h_r: f64, h_x: f64, gamma: f64) -> f64 {
    let g_star = (h_r + gamma) * g_l * g_l + (h_l + gamma) * g_r * g_r;
    if 2.0 * h_l < h_x {
        g_star
    } else {
        -g_star
    }
}

/// Textbook gain with divisions.
pub fn exact_gain_plain(g_l: f64, g_r: f64, g_x: f64, h_l: f64, h_r: f64, h_x: f64, gamma: f64) -> f64 {
    0.5 * (g_l * g_l / (h_l + gamma) + g_r * g_r / (h_r + gamma) - g_x * g_x / (h_x + gamma))
}

/// Smallest truncation `k` for which the worst-case gain over `n` samples,
/// and the difference of two such gains, fit the comparison range.
pub fn gain_shift(ring: &RingConfig, n: usize, gamma: f64) -> Result<u32, SetupError> {
    let f = ring.frac_bits as i32;
    let limit = (ring.bits - 2) as f64;
    let worst = |k: i32| (2.0 * (n as f64 / 4.0 + gamma) * (n as f64).powi(2)).log2() + (3 * f - 2 * k) as f64;
    (0..=f)
        .find(|&k| worst(k) < limit)
        .map(|k| k as u32)
        .ok_or(SetupError::OverflowBudget { what: "split gain", needed: worst(f), limit: ring.bits - 2 })
}

/// Aggregates for one batch of candidates, all shared and at scale 2^f.
#[derive(Clone, Debug, Default)]
pub struct GainInputs {
    pub g_l: Vec<u64>,
    pub g_r: Vec<u64>,
    pub h_l: Vec<u64>,
    pub h_r: Vec<u64>,
    pub h_x: Vec<u64>,
}

impl GainInputs {
    pub fn len(&self) -> usize {
        self.g_l.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g_l.is_empty()
    }

    fn check(&self) -> Result<(), ProtocolError> {
        let n = self.len();
        if [&self.g_r, &self.h_l, &self.h_r, &self.h_x].iter().any(|v| v.len() != n) {
            return Err(ProtocolError::Length("gain inputs differ in length".into()));
        }
        Ok(())
    }
}

/// The exact integer the secure protocol reconstructs to, from encoded
/// aggregates and the encoded regularizer.
pub fn gain_fixed(ring: &RingConfig, k: u32, g_l: u64, g_r: u64, h_l: u64, h_r: u64, h_x: u64, gamma: u64) -> u64 {
    let tm = |x: u64, y: u64| ring.mul(ring.truncate(x, k), y);
    let t_l = tm(tm(g_l, g_l), ring.add(h_r, gamma));
    let t_r = tm(tm(g_r, g_r), ring.add(h_l, gamma));
    let g_star = ring.add(t_l, t_r);
    let lighter_left = ring.to_signed(ring.sub(ring.add(h_l, h_l), h_x)) < 0;
    if lighter_left {
        g_star
    } else {
        ring.neg(g_star)
    }
}

/// Shares of the signed gain of every candidate, three rounds and 9l bits per
/// candidate. `gamma` is the encoded regularizer and `k` comes from
/// [`gain_shift`].
pub fn gain_online(p: &mut Party, label: &str, inputs: &GainInputs, gamma: u64, k: u32) -> Result<Vec<u64>, ProtocolError> {
    inputs.check()?;
    let ring = p.ring();
    let n = inputs.len();

    // Round 1: lighter-left bit and both squares.
    let lt_key = take_lt_keys(p, n);
    let sq_key = take_trunc_mul(p, 2 * n, k, true);
    let mut w = p.writer("gain");
    let diff: Vec<u64> = (0..n).map(|i| ring.sub(ring.add(inputs.h_l[i], inputs.h_l[i]), inputs.h_x[i])).collect();
    let lighter_left = lt_begin(p, &lt_key, &diff, &vec![0; n], &mut w)?;
    let g: Vec<u64> = inputs.g_l.iter().chain(&inputs.g_r).copied().collect();
    let sq = trunc_mul_begin(p, &sq_key, &g, None, &mut w)?;
    let mut r = p.exchange(&format!("{label}/square"), w)?;
    let lighter_left = lighter_left.finish(p, &mut r)?;
    let sq = sq.finish(p, &mut r)?;

    // Round 2: weight each square by the opposite child's hessian.
    let add_gamma = |h: &[u64]| -> Vec<u64> { h.iter().map(|&h| if p.is_p0() { ring.add(h, gamma) } else { h }).collect() };
    let weights: Vec<u64> = add_gamma(&inputs.h_r).into_iter().chain(add_gamma(&inputs.h_l)).collect();
    let prod_key = take_trunc_mul(p, 2 * n, k, false);
    let mut w = p.writer("gain");
    let prod = trunc_mul_begin(p, &prod_key, &sq, Some(&weights), &mut w)?;
    let mut r = p.exchange(&format!("{label}/weight"), w)?;
    let prod = prod.finish(p, &mut r)?;
    let g_star: Vec<u64> = (0..n).map(|i| ring.add(prod[i], prod[n + i])).collect();

    // Round 3: (2 * lighter_left - 1) * G*.
    let signed: Vec<u64> = lighter_left
        .iter()
        .map(|&b| {
            let two_b = ring.add(b, b);
            if p.is_p0() {
                ring.sub(two_b, 1)
            } else {
                two_b
            }
        })
        .collect();
    let triples = take_triples(p, n);
    let mut w = p.writer("gain");
    let pending = mul_begin(p, &triples, &signed, &g_star, &mut w)?;
    let mut r = p.exchange(&format!("{label}/sign"), w)?;
    pending.finish(p, &mut r)
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
        assert_eq!(gain_plain(0.0, 0.0, 1.0, 3.0, 4.0, 1.0), 0.0);
        assert_eq!(gain_plain(2.0, -1.0, 1.0, 3.0, 4.0, 1.0), 18.0);
        assert_eq!(gain_plain(0.5, 0.5, 2.0, 2.0, 4.0, 1.0), -1.5);
        assert_eq!(exact_gain_plain(0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 1.0), 0.0);
        assert!((exact_gain_plain(2.0, -1.0, 1.0, 1.0, 3.0, 4.0, 1.0) - 1.025).abs() < 1e-12);
        assert!((exact_gain_plain(0.5, 0.5, 1.0, 2.0, 2.0, 4.0, 1.0) + 1.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn shift_budget() {
        assert_eq!(gain_shift(&RING, 559, 1.0).unwrap(), 7);
        assert_eq!(gain_shift(&RING, 10, 1.0).unwrap(), 0);
        assert!(matches!(gain_shift(&RING, 1 << 30, 1.0), Err(SetupError::OverflowBudget { .. })));
    }

    fn encode(x: f64) -> u64 {
        RING.encode(x).unwrap()
    }

    fn run(cases: &[[f64; 4]], k: u32, seed: u64) -> (Vec<u64>, Vec<u64>, crate::transport::Meter) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let col = |j: usize| cases.iter().map(|c| encode(c[j])).collect::<Vec<_>>();
        let (g_l, g_r, h_l, h_r) = (col(0), col(1), col(2), col(3));
        let h_x: Vec<u64> = h_l.iter().zip(&h_r).map(|(&a, &b)| RING.add(a, b)).collect();
        let gamma = encode(1.0);
        let want = (0..cases.len()).map(|i| gain_fixed(&RING, k, g_l[i], g_r[i], h_l[i], h_r[i], h_x[i], gamma)).collect();
        let sh = |v: &[u64], rng: &mut ChaCha20Rng| share_vec(&RING, v, rng);
        let parts = [sh(&g_l, &mut rng), sh(&g_r, &mut rng), sh(&h_l, &mut rng), sh(&h_r, &mut rng), sh(&h_x, &mut rng)];
        let runs = run_two_party(&SessionConfig::new(RING, seed.into()), |p| {
            let i = p.id().index();
            let inputs = GainInputs {
                g_l: parts[0][i].clone(),
                g_r: parts[1][i].clone(),
                h_l: parts[2][i].clone(),
                h_r: parts[3][i].clone(),
                h_x: parts[4][i].clone(),
            };
            gain_online(p, "gain", &inputs, gamma, k)
        })
        .unwrap();
        (reconstruct(&RING, &runs[0].output, &runs[1].output), want, runs[0].meter.clone())
    }

    #[test]
    fn secure_examples_within_tolerance_and_budget() {
        let cases = [[0.0, 0.0, 1.0, 3.0], [2.0, -1.0, 1.0, 3.0], [0.5, 0.5, 2.0, 2.0]];
        let k = 4;
        let (got, want, meter) = run(&cases, k, 3);
        assert_eq!(got, want);
        let scale = 3 * RING.frac_bits - 2 * k;
        let tol = 2f64.powi(-(RING.frac_bits as i32) + 3);
        for (g, expect) in got.iter().zip([0.0, 18.0, -1.5]) {
            assert!((RING.decode_scaled(*g, scale) - expect).abs() <= tol);
        }
        assert_eq!(meter.rounds, 3);
        assert_eq!(meter.bits, 9 * 64 * 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn secure_equals_fixed(cases in proptest::collection::vec((-200.0f64..200.0, -200.0f64..200.0, 0.0f64..100.0, 0.0f64..100.0), 1..30), seed: u64) {
            let cases: Vec<[f64; 4]> = cases.into_iter().map(|c| [c.0, c.1, c.2, c.3]).collect();
            let (got, want, meter) = run(&cases, 7, seed);
            prop_assert_eq!(got, want);
            prop_assert!(meter.rounds <= 5);
            prop_assert!(meter.bits <= 9 * 64 * cases.len() as u64);
        }

        #[test]
        fn fixed_sign_rule(g_l in -50.0f64..50.0, g_r in -50.0f64..50.0, h_l in 0.0f64..40.0, h_r in 0.0f64..40.0) {
            let k = 4;
            let (gl, gr, hl, hr) = (encode(g_l), encode(g_r), encode(h_l), encode(h_r));
            let v = RING.to_signed(gain_fixed(&RING, k, gl, gr, hl, hr, RING.add(hl, hr), encode(1.0)));
            let lighter_left = RING.to_signed(hl) * 2 < RING.to_signed(RING.add(hl, hr));
            if v != 0 {
                prop_assert_eq!(v > 0, lighter_left);
            }
            let real = gain_plain(g_l, g_r, h_l, h_r, h_l + h_r, 1.0);
            let scale = 3 * RING.frac_bits - 2 * k;
            prop_assert!((RING.decode_scaled(RING.from_signed(v), scale) - real).abs() <= 1e-3 * (1.0 + real.abs()));
        }

        #[test]
        fn equal_hessian_split_orders_like_exact(g_x in -30.0f64..30.0, a in -30.0f64..30.0, b in -30.0f64..30.0, h_l in 0.0f64..20.0, h_r in 0.0f64..20.0) {
            let (h_x, gamma) = (h_l + h_r, 1.0);
            let star = |g_l: f64| gain_plain(g_l, g_x - g_l, h_l, h_r, h_x, gamma);
            let exact = |g_l: f64| exact_gain_plain(g_l, g_x - g_l, g_x, h_l, h_r, h_x, gamma);
            let (d_star, d_exact) = (star(a) - star(b), exact(a) - exact(b));
            prop_assume!(d_star.abs() > 1e-9 && d_exact.abs() > 1e-9);
            // Same denominators: G* is the exact gain times a positive
            // constant plus an offset, so the unsigned order agrees. The sign
            // rule negates both candidates alike, which reverses the order
            // when the left child is the heavier one.
            let same = d_star.signum() == d_exact.signum();
            prop_assert_eq!(same, 2.0 * h_l < h_x);
        }
    }
}
