//! Plaintext trainers used as oracles.
//!
//! `Mirror` repeats the secure computation in the clear with the same
//! integers: table sigmoid and hessian, ring sums, the truncated
//! division-free gain, first-max tie rule and the table leaf weight. A secure
//! run must reproduce its trees exactly. `Exact` is ordinary floating-point
//! boosting with the true sigmoid, the textbook gain and -G / (H + gamma)
//! leaves, for accuracy comparison.

use serde::{Deserialize, Serialize};

use crate::data::{bin_features, Buckets, Dataset};
use crate::error::SetupError;
use crate::fss::argmax_plain;
use crate::gain::{exact_gain_plain, gain_fixed};
use crate::lut::{sigmoid, LeafTable, SigmoidTable};
use crate::ring::RingConfig;
use crate::trainer::{Layout, NodeDoc, PlainModel, PlainTree, TrainConfig, PLAIN_MODEL_FORMAT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    Exact,
    Mirror,
}

impl OracleMode {
    pub fn name(self) -> &'static str {
        match self {
            OracleMode::Exact => "exact",
            OracleMode::Mirror => "mirror",
        }
    }
}

/// A trained plaintext model and the final training margins.
#[derive(Clone, Debug)]
pub struct PlainRun {
    pub model: PlainModel,
    pub margins: Vec<f64>,
}

/// Splits chosen for one node: candidate id, or the node's members.
struct Split {
    node: NodeDoc,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn split_node(ds: &Dataset, buckets: &Buckets, members: &[usize], c: usize, per_feature: usize) -> Split {
    let (z, u) = (c / per_feature, c % per_feature);
    let t = buckets.thresholds[z][u];
    let (left, right) = members.iter().partition(|&&i| ds.rows[i][z] < t);
    Split { node: NodeDoc { feature: z as i64, bucket: u as i64, threshold: Some(t) }, left, right }
}

/// Trains on a dataset with global feature order.
pub fn plain_train(ds: &Dataset, layout: Layout, cfg: &TrainConfig, mode: OracleMode) -> Result<PlainRun, SetupError> {
    let buckets = bin_features(ds, cfg.buckets)?;
    match mode {
        OracleMode::Mirror => mirror_train(ds, &buckets, layout, cfg),
        OracleMode::Exact => {
            cfg.validate(ds.len()).map(|_| ()).or_else(|e| if matches!(e, SetupError::OverflowBudget { .. }) { Ok(()) } else { Err(e) })?;
            Ok(exact_train(ds, &buckets, layout, cfg))
        }
    }
}

fn mirror_train(ds: &Dataset, buckets: &Buckets, layout: Layout, cfg: &TrainConfig) -> Result<PlainRun, SetupError> {
    let budget = cfg.validate(ds.len())?;
    let ring: RingConfig = cfg.ring;
    let sig = SigmoidTable::new(ring, cfg.segments)?;
    let leaf = LeafTable::new(ring, cfg.segments, cfg.gamma, cfg.eta)?;
    let n = ds.len();
    let per = layout.per_feature();
    let labels: Vec<u64> = ds.labels.iter().map(|&y| (y as u64) << ring.frac_bits).collect();
    let mut margins = vec![0u64; n];
    let mut trees = Vec::with_capacity(cfg.trees);
    for _ in 0..cfg.trees {
        let (g, h): (Vec<u64>, Vec<u64>) = margins
            .iter()
            .zip(&labels)
            .map(|(&m, &y)| {
                let (p, h) = sig.eval_fixed(m);
                (ring.sub(p, y), h)
            })
            .unzip();
        let sum = |idx: &[usize], v: &[u64]| idx.iter().fold(0u64, |a, &i| ring.add(a, v[i]));
        let mut spaces: Vec<Vec<usize>> = vec![(0..n).collect()];
        let mut nodes = Vec::new();
        for _ in 0..cfg.depth {
            let mut next = Vec::with_capacity(spaces.len() * 2);
            for members in &spaces {
                let (gx, hx) = (sum(members, &g), sum(members, &h));
                let gains: Vec<i128> = (0..layout.candidates())
                    .map(|c| {
                        let s = split_node(ds, buckets, members, c, per);
                        let (gl, hl) = (sum(&s.left, &g), sum(&s.left, &h));
                        let v = gain_fixed(&ring, budget.gain_shift, gl, ring.sub(gx, gl), hl, ring.sub(hx, hl), hx, leaf.gamma);
                        ring.to_signed(v) as i128
                    })
                    .collect();
                let best = split_node(ds, buckets, members, argmax_plain(&gains), per);
                nodes.push(best.node);
                next.push(best.left);
                next.push(best.right);
            }
            spaces = next;
        }
        let mut leaves = Vec::with_capacity(spaces.len());
        for members in &spaces {
            let w = leaf.eval_fixed(sum(members, &g), sum(members, &h));
            for &i in members {
                margins[i] = ring.add(margins[i], w);
            }
            leaves.push(ring.decode(w));
        }
        trees.push(PlainTree { nodes, leaves });
    }
    let model = PlainModel { format: PLAIN_MODEL_FORMAT.into(), config: cfg.clone(), layout, trees };
    Ok(PlainRun { model, margins: margins.iter().map(|&m| ring.decode(m)).collect() })
}

fn exact_train(ds: &Dataset, buckets: &Buckets, layout: Layout, cfg: &TrainConfig) -> PlainRun {
    let n = ds.len();
    let per = layout.per_feature();
    let mut margins = vec![0f64; n];
    let mut trees = Vec::with_capacity(cfg.trees);
    for _ in 0..cfg.trees {
        let p: Vec<f64> = margins.iter().map(|&m| sigmoid(m)).collect();
        let g: Vec<f64> = p.iter().zip(&ds.labels).map(|(&p, &y)| p - y as f64).collect();
        let h: Vec<f64> = p.iter().map(|&p| p * (1.0 - p)).collect();
        let sum = |idx: &[usize], v: &[f64]| idx.iter().map(|&i| v[i]).sum::<f64>();
        let mut spaces: Vec<Vec<usize>> = vec![(0..n).collect()];
        let mut nodes = Vec::new();
        for _ in 0..cfg.depth {
            let mut next = Vec::with_capacity(spaces.len() * 2);
            for members in &spaces {
                let (gx, hx) = (sum(members, &g), sum(members, &h));
                let mut best = (0, f64::NEG_INFINITY);
                for c in 0..layout.candidates() {
                    let s = split_node(ds, buckets, members, c, per);
                    let (gl, hl) = (sum(&s.left, &g), sum(&s.left, &h));
                    let v = exact_gain_plain(gl, gx - gl, gx, hl, hx - hl, hx, cfg.gamma);
                    if v > best.1 {
                        best = (c, v);
                    }
                }
                let s = split_node(ds, buckets, members, best.0, per);
                nodes.push(s.node);
                next.push(s.left);
                next.push(s.right);
            }
            spaces = next;
        }
        let mut leaves = Vec::with_capacity(spaces.len());
        for members in &spaces {
            let w = -cfg.eta * sum(members, &g) / (sum(members, &h) + cfg.gamma);
            for &i in members {
                margins[i] += w;
            }
            leaves.push(w);
        }
        trees.push(PlainTree { nodes, leaves });
    }
    let model = PlainModel { format: PLAIN_MODEL_FORMAT.into(), config: cfg.clone(), layout, trees };
    PlainRun { model, margins }
}

/// Small brute-force validators, independent of the protocol code paths.
pub mod oracles {
    use crate::ring::RingConfig;

    /// Sum of products over the integers, reduced into the ring.
    pub fn dot(ring: &RingConfig, a: &[i64], b: &[i64]) -> u64 {
        let s: i128 = a.iter().zip(b).map(|(&x, &y)| x as i128 * y as i128).sum();
        ring.reduce(s as u64)
    }

    /// 1{x < w} on the signed readings of two ring elements.
    pub fn lt_signed(ring: &RingConfig, x: u64, w: u64) -> u64 {
        (ring.to_signed(x) < ring.to_signed(w)) as u64
    }

    /// Left-endpoint lookup by scanning segments: the value at the last knot
    /// not above x, or the first value below every knot.
    pub fn piecewise(knots: &[f64], values: &[f64], x: f64) -> f64 {
        let mut out = values[0];
        for (k, v) in knots.iter().zip(values).skip(1) {
            if x >= *k {
                out = *v;
            }
        }
        out
    }

    /// s * g for one indicator and one signed value, over the integers.
    pub fn compressed_product(ring: &RingConfig, s: u64, g: i64) -> u64 {
        ring.from_signed(s as i64 * g)
    }
}
