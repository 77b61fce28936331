//! Oracle checks shared by the `selftest` command and the acceptance suite.
//! Each check counts its cases and mismatches instead of panicking, so callers
//! can report every result.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::aggregate::{agg_begin, agg_one_element, agg_online, agg_plain, take_agg_key};
use crate::error::{ProtocolError, RangeError, SetupError};
use crate::fss::compare::{deal_lt_with_alpha, lt_eval};
use crate::fss::{dcf_gen, DcfMode};
use crate::gain::{exact_gain_plain, gain_fixed, gain_online, gain_plain, GainInputs};
use crate::lut::{leafweight_online, sigmoid, sigmoid_online, LeafTable, SigmoidTable, LUT_RANGE};
use crate::ring::RingConfig;
use crate::sharing::{reconstruct, share_vec};
use crate::transport::{run_two_party, Meter, SessionConfig};

fn range(e: RangeError) -> SetupError {
    SetupError::Other(e.to_string())
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub cases: u64,
    pub mismatches: u64,
    pub seconds: f64,
    pub detail: String,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.mismatches == 0 && self.cases > 0
    }

    fn timed(name: &str, started: Instant, cases: u64, mismatches: u64, detail: String) -> Check {
        Check { name: name.to_string(), cases, mismatches, seconds: started.elapsed().as_secs_f64(), detail }
    }
}

/// Raw comparison function keys over an 8-bit domain: every (alpha, x) pair
/// reconstructs to beta * 1{x < alpha}.
pub fn dcf_exhaustive(mode: DcfMode, seed: u64) -> Check {
    let started = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (mut cases, mut bad) = (0, 0);
    for alpha in 0..256u64 {
        let beta = [rng.gen::<u8>() as u64, rng.gen::<u8>() as u64];
        let [k0, k1] = dcf_gen(&mut rng, mode, 8, alpha, beta, 8);
        for x in 0..256u64 {
            let (a, b) = (k0.eval(x), k1.eval(x));
            let got = [(a[0] + b[0]) & 0xff, (a[1] + b[1]) & 0xff];
            let want = if x < alpha { beta } else { [0, 0] };
            cases += 1;
            bad += (got != want) as u64;
        }
    }
    Check::timed("dcf exhaustive, 8-bit domain", started, cases, bad, String::new())
}

/// The comparison gate on the 8-bit ring: for every mask alpha and input x,
/// the reconstructed bit equals x < 0 as a signed value.
pub fn lt_exhaustive(mode: DcfMode, seed: u64) -> Check {
    let started = Instant::now();
    let ring = RingConfig::SMALL;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (mut cases, mut bad) = (0, 0);
    for alpha in 0..256u64 {
        let keys = deal_lt_with_alpha(&ring, &mut rng, mode, alpha);
        for x in 0..256u64 {
            let m = ring.add(x, alpha);
            let got = ring.add(lt_eval(&ring, true, &keys[0], m), lt_eval(&ring, false, &keys[1], m));
            cases += 1;
            bad += (got != (ring.to_signed(x) < 0) as u64) as u64;
        }
    }
    Check::timed("comparison gate exhaustive, 8-bit ring", started, cases, bad, String::new())
}

/// Compressed aggregation on the 8-bit ring over every indicator, gradient
/// and mask value.
pub fn agg_exhaustive(seed: u64) -> Check {
    let started = Instant::now();
    let ring = RingConfig::SMALL;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let half = 1i64 << ring.frac_bits;
    let (mut cases, mut bad) = (0, 0);
    for s in 0..2u64 {
        for g in -half..half {
            for r_s in 0..2u64 {
                for r_g in 0..=ring.compressed_mask() {
                    let g = ring.from_signed(g);
                    cases += 1;
                    bad += (agg_one_element(ring, s, g, r_s, r_g, &mut rng) != ring.mul(s, g)) as u64;
                }
            }
        }
    }
    Check::timed("aggregation exhaustive, 8-bit ring", started, cases, bad, String::new())
}

/// Random single-element products at the default ring, run as one batch
/// with per-element outputs.
pub fn agg_random(trials: usize, seed: u64) -> Result<Check, ProtocolError> {
    let started = Instant::now();
    let ring = RingConfig::DEFAULT;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let half = 1i64 << ring.frac_bits;
    let s: Vec<u64> = (0..trials).map(|_| rng.gen::<bool>() as u64).collect();
    let g: Vec<u64> = (0..trials).map(|_| ring.from_signed(rng.gen_range(-half..half))).collect();
    let (ss, gs) = (share_vec(&ring, &s, &mut rng), share_vec(&ring, &g, &mut rng));
    let runs = run_two_party(&SessionConfig::new(ring, seed.into()), |p| {
        let i = p.id().index();
        let key = take_agg_key(p, trials, 1);
        let mut w = p.writer("agg");
        let pending = agg_begin(p, &key, &ss[i], &[&gs[i]], &mut w)?;
        let mut r = p.exchange("agg", w)?;
        Ok(pending.finish_grouped(p, &mut r, 1)?.into_iter().map(|v| v[0]).collect::<Vec<u64>>())
    })?;
    let got = reconstruct(&ring, &runs[0].output, &runs[1].output);
    let bad = (0..trials).filter(|&i| got[i] != ring.mul(s[i], g[i])).count() as u64;
    Ok(Check::timed("aggregation random trials, 64-bit ring", started, trials as u64, bad, String::new()))
}

/// Traffic of one aggregation over `n` elements against 1 + l' bits each.
#[derive(Clone, Debug, Serialize)]
pub struct AggBench {
    pub elements: usize,
    pub meter: Meter,
    pub formula_bits: u64,
    pub formula_bytes: u64,
    pub bits_per_element: f64,
    pub saved_bits_per_element: u64,
    pub correct: bool,
}

impl AggBench {
    pub fn matches_formula(&self) -> bool {
        self.correct && self.meter.rounds == 1 && self.meter.bits == self.formula_bits && self.meter.bytes == self.formula_bytes
    }
}

pub fn bench_agg(ring: RingConfig, n: usize, seed: u64) -> Result<AggBench, ProtocolError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let half = 1i64 << ring.frac_bits;
    let s: Vec<u64> = (0..n).map(|_| rng.gen::<bool>() as u64).collect();
    let g: Vec<u64> = (0..n).map(|_| ring.from_signed(rng.gen_range(-half..half))).collect();
    let (ss, gs) = (share_vec(&ring, &s, &mut rng), share_vec(&ring, &g, &mut rng));
    let runs = run_two_party(&SessionConfig::new(ring, seed.into()), |p| {
        let i = p.id().index();
        agg_online(p, "agg", &ss[i], &[&gs[i]])
    })?;
    let got = reconstruct(&ring, &runs[0].output, &runs[1].output);
    let per = (ring.frac_bits + 3) as u64;
    let meter = runs[0].meter.clone();
    let same = runs[0].meter == runs[1].meter;
    Ok(AggBench {
        elements: n,
        bits_per_element: meter.bits as f64 / n.max(1) as f64,
        formula_bits: per * n as u64,
        formula_bytes: (per * n as u64).div_ceil(8),
        saved_bits_per_element: (ring.bits - ring.frac_bits - 2) as u64,
        correct: same && got == vec![agg_plain(&ring, &s, &g)],
        meter,
    })
}

/// Secure sigmoid over random inputs: matches the plaintext table exactly,
/// stays within `bound` of the true sigmoid, and costs one round and n*l bits
/// per input.
#[derive(Clone, Debug, Serialize)]
pub struct SigmoidBench {
    pub inputs: usize,
    pub segments: usize,
    pub meter: Meter,
    pub formula_bits: u64,
    pub table_mismatches: u64,
    pub max_error: f64,
}

pub fn bench_sigmoid(ring: RingConfig, segments: usize, inputs: usize, seed: u64) -> Result<SigmoidBench, crate::pipeline::RunError> {
    let table = SigmoidTable::new(ring, segments)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let span = 1.6 * LUT_RANGE;
    let x: Vec<u64> = (0..inputs).map(|_| ring.encode(rng.gen_range(-span..span))).collect::<Result<_, _>>().map_err(range)?;
    let xs = share_vec(&ring, &x, &mut rng);
    let runs = run_two_party(&SessionConfig::new(ring, seed.into()), |p| sigmoid_online(p, "sigmoid", &table, &xs[p.id().index()]))?;
    let prob = reconstruct(&ring, &runs[0].output.0, &runs[1].output.0);
    let mut table_mismatches = 0;
    let mut max_error: f64 = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        let fixed = table.eval_fixed(xi).0;
        table_mismatches += (prob[i] != fixed) as u64;
        max_error = max_error.max((ring.decode(prob[i]) - sigmoid(ring.decode(xi))).abs());
    }
    Ok(SigmoidBench {
        inputs,
        segments,
        formula_bits: (inputs * segments) as u64 * ring.bits as u64,
        meter: runs[0].meter.clone(),
        table_mismatches,
        max_error,
    })
}

/// Secure leaf weights over random sums stay in the table range and match the
/// plaintext table.
pub fn leaf_range(ring: RingConfig, segments: usize, inputs: usize, seed: u64) -> Result<Check, crate::pipeline::RunError> {
    let started = Instant::now();
    let table = LeafTable::new(ring, segments, 1.0, 1.0)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = 559.0;
    let mut g = Vec::with_capacity(inputs);
    let mut h = Vec::with_capacity(inputs);
    for _ in 0..inputs {
        let hv: f64 = rng.gen_range(0.0..n / 4.0);
        g.push(ring.encode(rng.gen_range(-n..n)).map_err(range)?);
        h.push(ring.encode(hv).map_err(range)?);
    }
    let (gs, hs) = (share_vec(&ring, &g, &mut rng), share_vec(&ring, &h, &mut rng));
    let runs = run_two_party(&SessionConfig::new(ring, seed.into()), |p| {
        let i = p.id().index();
        leafweight_online(p, "leaf", &table, &gs[i], &hs[i])
    })?;
    let w = reconstruct(&ring, &runs[0].output, &runs[1].output);
    let bad = (0..inputs)
        .filter(|&i| {
            let v = ring.decode(w[i]);
            w[i] != table.eval_fixed(g[i], h[i]) || !(-LUT_RANGE..=LUT_RANGE).contains(&v)
        })
        .count() as u64;
    Ok(Check::timed("leaf weights within [-5, 5]", started, inputs as u64, bad, String::new()))
}

/// Secure gain on random aggregates: equals the fixed-point value and obeys
/// the sign rule (positive only when the left child is lighter).
#[derive(Clone, Debug, Serialize)]
pub struct GainBench {
    pub candidates: usize,
    pub meter: Meter,
    pub fixed_mismatches: u64,
    pub sign_violations: u64,
}

pub fn bench_gain(ring: RingConfig, candidates: usize, samples: usize, seed: u64) -> Result<GainBench, crate::pipeline::RunError> {
    let k = crate::gain::gain_shift(&ring, samples, 1.0)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = samples as f64;
    let enc = |x: f64| ring.encode(x).map_err(range);
    let mut cols: [Vec<u64>; 5] = Default::default();
    for _ in 0..candidates {
        let (g_l, g_r): (f64, f64) = (rng.gen_range(-n / 2.0..n / 2.0), rng.gen_range(-n / 2.0..n / 2.0));
        let (h_l, h_r): (f64, f64) = (rng.gen_range(0.0..n / 8.0), rng.gen_range(0.0..n / 8.0));
        let (hl, hr) = (enc(h_l)?, enc(h_r)?);
        for (c, v) in cols.iter_mut().zip([enc(g_l)?, enc(g_r)?, hl, hr, ring.add(hl, hr)]) {
            c.push(v);
        }
    }
    let gamma = enc(1.0)?;
    let shared: Vec<[Vec<u64>; 2]> = cols.iter().map(|c| share_vec(&ring, c, &mut rng)).collect();
    let runs = run_two_party(&SessionConfig::new(ring, seed.into()), |p| {
        let i = p.id().index();
        let inputs = GainInputs {
            g_l: shared[0][i].clone(),
            g_r: shared[1][i].clone(),
            h_l: shared[2][i].clone(),
            h_r: shared[3][i].clone(),
            h_x: shared[4][i].clone(),
        };
        gain_online(p, "gain", &inputs, gamma, k)
    })?;
    let got = reconstruct(&ring, &runs[0].output, &runs[1].output);
    let (mut fixed_mismatches, mut sign_violations) = (0, 0);
    for (c, &v) in got.iter().enumerate() {
        let want = gain_fixed(&ring, k, cols[0][c], cols[1][c], cols[2][c], cols[3][c], cols[4][c], gamma);
        fixed_mismatches += (v != want) as u64;
        let lighter_left = 2 * ring.to_signed(cols[2][c]) < ring.to_signed(cols[4][c]);
        let sv = ring.to_signed(v);
        if sv != 0 && (sv > 0) != lighter_left {
            sign_violations += 1;
        }
    }
    Ok(GainBench { candidates, meter: runs[0].meter.clone(), fixed_mismatches, sign_violations })
}

/// For pairs of candidates sharing H_L and H_R, the division-free gain orders
/// them like the textbook gain exactly when the left child is the lighter one,
/// and in reverse otherwise.
pub fn gain_ordering(pairs: usize, seed: u64) -> Check {
    let started = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (mut cases, mut bad) = (0, 0);
    // Aggregates on the 2^-16 grid, as the secure protocol sees them.
    let grid = |x: f64| (x * 65536.0).round() / 65536.0;
    while cases < pairs as u64 {
        let g_x = grid(rng.gen_range(-100.0..100.0));
        let (a, b) = (grid(rng.gen_range(-100.0..100.0)), grid(rng.gen_range(-100.0..100.0)));
        let (h_l, h_r) = (grid(rng.gen_range(0.0..50.0)), grid(rng.gen_range(0.0..50.0)));
        let h_x = h_l + h_r;
        let star = |g_l: f64| gain_plain(g_l, g_x - g_l, h_l, h_r, h_x, 1.0);
        let exact = |g_l: f64| exact_gain_plain(g_l, g_x - g_l, g_x, h_l, h_r, h_x, 1.0);
        let (d_star, d_exact) = (star(a) - star(b), exact(a) - exact(b));
        if d_star == 0.0 || d_exact == 0.0 {
            continue;
        }
        cases += 1;
        let same = d_star.signum() == d_exact.signum();
        bad += (same != (2.0 * h_l < h_x)) as u64;
    }
    Check::timed("gain ordering for equal hessian splits", started, cases, bad, String::new())
}

/// The exhaustive small-ring oracles plus a short randomized aggregation run.
pub fn selftest(seed: u64) -> Result<Vec<Check>, ProtocolError> {
    Ok(vec![
        dcf_exhaustive(DcfMode::Tree, seed),
        lt_exhaustive(DcfMode::Tree, seed),
        agg_exhaustive(seed),
        agg_random(100_000, seed)?,
        gain_ordering(10_000, seed),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_runs_pass() {
        assert!(dcf_exhaustive(DcfMode::Ideal, 1).passed());
        assert!(agg_random(500, 2).unwrap().passed());
        let b = bench_agg(RingConfig::DEFAULT, 100, 3).unwrap();
        assert!(b.matches_formula());
        assert_eq!((b.meter.bits, b.meter.bytes), (1900, 238));
        let s = bench_sigmoid(RingConfig::DEFAULT, 12, 50, 4).unwrap();
        assert_eq!((s.table_mismatches, s.meter.rounds, s.meter.bits), (0, 1, 50 * 12 * 64));
        assert!(s.max_error <= 0.21);
        assert!(leaf_range(RingConfig::DEFAULT, 12, 50, 5).unwrap().passed());
        let g = bench_gain(RingConfig::DEFAULT, 40, 559, 6).unwrap();
        assert_eq!((g.fixed_mismatches, g.sign_violations), (0, 0));
        assert!(g.meter.rounds <= 5 && g.meter.bits <= 9 * 64 * 40);
        assert!(gain_ordering(2000, 7).passed());
    }
}
