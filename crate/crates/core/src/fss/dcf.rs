//! Distributed comparison function: keys for f(x) = beta * 1{x < alpha}.
//!
//! The tree construction walks the bits of `x` from the top, expanding a
//! 128-bit seed per level with a length-doubling PRG and correcting the path
//! that diverges from `alpha`. Keys are O(lambda * n) for an n-bit domain and
//! evaluation is n PRG calls. The payload is a pair of ring elements so one
//! key can deliver both an indicator and a masked product.
//!
//! [`DcfMode::Ideal`] hands each party a keyed mask of the true output
//! instead. It is not secure and exists to differentially test the tree keys.

use std::sync::OnceLock;

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::ring::width_mask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DcfMode {
    #[default]
    Tree,
    Ideal,
}

pub type Payload = [u64; 2];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrectionWord {
    pub seed: u128,
    pub value: Payload,
    pub t_left: bool,
    pub t_right: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DcfKey {
    Tree {
        party: u8,
        domain_bits: u32,
        out_mask: u64,
        seed: u128,
        cws: Vec<CorrectionWord>,
        last: Payload,
    },
    Ideal {
        party: u8,
        domain_bits: u32,
        out_mask: u64,
        alpha: u64,
        beta: Payload,
        salt: u64,
    },
}

const PRG_KEY: [u8; 16] = *b"dcf-prg-fixedkey";

fn cipher() -> &'static Aes128 {
    static CIPHER: OnceLock<Aes128> = OnceLock::new();
    CIPHER.get_or_init(|| Aes128::new(&PRG_KEY.into()))
}

struct Expansion {
    s: [u128; 2],
    t: [bool; 2],
    v: [Payload; 2],
}

/// Fixed-key AES in Matyas-Meyer-Oseas mode over four tweaked copies of the seed.
fn expand(seed: u128, mask: u64) -> Expansion {
    let inputs: [u128; 4] = std::array::from_fn(|j| seed ^ j as u128);
    let mut blocks = inputs.map(|x| GenericArray::from(x.to_le_bytes()));
    cipher().encrypt_blocks(&mut blocks);
    let y: [u128; 4] = std::array::from_fn(|j| u128::from_le_bytes(blocks[j].into()) ^ inputs[j]);
    Expansion {
        s: [y[0] & !1, y[1] & !1],
        t: [y[0] & 1 == 1, y[1] & 1 == 1],
        v: [convert(y[2], mask), convert(y[3], mask)],
    }
}

fn convert(x: u128, mask: u64) -> Payload {
    [(x as u64) & mask, ((x >> 64) as u64) & mask]
}

#[inline]
fn add(a: Payload, b: Payload, m: u64) -> Payload {
    [a[0].wrapping_add(b[0]) & m, a[1].wrapping_add(b[1]) & m]
}

#[inline]
fn sub(a: Payload, b: Payload, m: u64) -> Payload {
    [a[0].wrapping_sub(b[0]) & m, a[1].wrapping_sub(b[1]) & m]
}

#[inline]
fn negate_if(neg: bool, a: Payload, m: u64) -> Payload {
    if neg {
        [a[0].wrapping_neg() & m, a[1].wrapping_neg() & m]
    } else {
        a
    }
}

/// Keys for beta * 1{x < alpha} over `domain_bits`-bit inputs, with outputs
/// in Z_{2^out_bits}.
pub fn dcf_gen(rng: &mut impl RngCore, mode: DcfMode, domain_bits: u32, alpha: u64, beta: Payload, out_bits: u32) -> [DcfKey; 2] {
    assert!((1..=64).contains(&domain_bits), "domain must be 1..=64 bits");
    let out_mask = width_mask(out_bits);
    let alpha = alpha & width_mask(domain_bits);
    let beta = [beta[0] & out_mask, beta[1] & out_mask];
    match mode {
        DcfMode::Tree => gen_tree(rng, domain_bits, alpha, beta, out_mask),
        DcfMode::Ideal => {
            let salt = rng.next_u64();
            [0u8, 1].map(|party| DcfKey::Ideal { party, domain_bits, out_mask, alpha, beta, salt })
        }
    }
}

fn gen_tree(rng: &mut impl RngCore, n: u32, alpha: u64, beta: Payload, m: u64) -> [DcfKey; 2] {
    let roots: [u128; 2] = [rng.gen(), rng.gen()];
    let mut s = roots;
    let mut t = [false, true];
    let mut v_alpha = [0u64; 2];
    let mut cws = Vec::with_capacity(n as usize);
    for i in 0..n {
        let bit = (alpha >> (n - 1 - i)) & 1 == 1;
        let e = [expand(s[0], m), expand(s[1], m)];
        let (keep, lose) = if bit { (1, 0) } else { (0, 1) };
        let s_cw = e[0].s[lose] ^ e[1].s[lose];
        let mut v_cw = negate_if(t[1], sub(sub(e[1].v[lose], e[0].v[lose], m), v_alpha, m), m);
        if bit {
            v_cw = add(v_cw, negate_if(t[1], beta, m), m);
        }
        v_alpha = add(sub(add(v_alpha, e[0].v[keep], m), e[1].v[keep], m), negate_if(t[1], v_cw, m), m);
        let t_left = e[0].t[0] ^ e[1].t[0] ^ bit ^ true;
        let t_right = e[0].t[1] ^ e[1].t[1] ^ bit;
        let t_keep = if bit { t_right } else { t_left };
        for b in 0..2 {
            let fix = t[b];
            s[b] = e[b].s[keep] ^ if fix { s_cw } else { 0 };
            t[b] = e[b].t[keep] ^ (fix & t_keep);
        }
        cws.push(CorrectionWord { seed: s_cw, value: v_cw, t_left, t_right });
    }
    let last = negate_if(t[1], sub(sub(convert(s[1], m), convert(s[0], m), m), v_alpha, m), m);
    [0u8, 1].map(|party| DcfKey::Tree {
        party,
        domain_bits: n,
        out_mask: m,
        seed: roots[party as usize],
        cws: cws.clone(),
        last,
    })
}

impl DcfKey {
    /// This party's share of beta * 1{x < alpha}.
    pub fn eval(&self, x: u64) -> Payload {
        match self {
            DcfKey::Tree { party, domain_bits, out_mask, seed, cws, last } => {
                let m = *out_mask;
                let negate = *party == 1;
                let mut s = *seed;
                let mut t = negate;
                let mut acc = [0u64; 2];
                for (i, cw) in cws.iter().enumerate() {
                    let e = expand(s, m);
                    let dir = ((x >> (domain_bits - 1 - i as u32)) & 1) as usize;
                    let mut next_s = e.s[dir];
                    let mut next_t = e.t[dir];
                    let mut v = e.v[dir];
                    if t {
                        next_s ^= cw.seed;
                        next_t ^= if dir == 0 { cw.t_left } else { cw.t_right };
                        v = add(v, cw.value, m);
                    }
                    acc = add(acc, negate_if(negate, v, m), m);
                    s = next_s;
                    t = next_t;
                }
                let mut tail = convert(s, m);
                if t {
                    tail = add(tail, *last, m);
                }
                add(acc, negate_if(negate, tail, m), m)
            }
            DcfKey::Ideal { party, domain_bits, out_mask, alpha, beta, salt } => {
                let x = x & width_mask(*domain_bits);
                let r = [mix(*salt, x, 0) & out_mask, mix(*salt, x, 1) & out_mask];
                if *party == 0 {
                    r
                } else {
                    let f = if x < *alpha { *beta } else { [0, 0] };
                    sub(f, r, *out_mask)
                }
            }
        }
    }

    pub fn domain_bits(&self) -> u32 {
        match self {
            DcfKey::Tree { domain_bits, .. } | DcfKey::Ideal { domain_bits, .. } => *domain_bits,
        }
    }

    /// Size of the key material in bytes.
    pub fn size_bytes(&self) -> usize {
        match self {
            DcfKey::Tree { cws, .. } => 16 + cws.len() * (16 + 16 + 1) + 16,
            DcfKey::Ideal { .. } => 8 + 16 + 8,
        }
    }
}

fn mix(salt: u64, x: u64, lane: u64) -> u64 {
    let mut z = salt ^ x.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ lane.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
