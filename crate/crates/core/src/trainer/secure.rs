//! One party's side of secure training and prediction.
//!
//! Trees are grown level by level. Every node of a level goes through the
//! same rounds together, so the round count depends on depth and candidate
//! count but not on the number of nodes:
//!
//! 1. partition: s * test for every candidate, and the node totals G_X, H_X.
//! 2. aggregate: G_L, H_L for every (node, candidate).
//! 3. gain (three rounds) and a tournament argmax per node.
//! 4. owner: a comparison and a one-bit open tell both parties who owns the
//!    winning feature; only the non-owner then sends its share of the winner.
//! 5. children: the owner's test vector for the winner splits s.
//!
//! Leaves aggregate once more and look their weight up in the leaf table.

use std::collections::BTreeMap;

use super::model::{NodeDoc, PartyModel, PartyTree, PARTY_MODEL_FORMAT};
use super::{Budget, Layout, TrainConfig};
use crate::aggregate::{agg_begin, take_agg_key};
use crate::data::Buckets;
use crate::error::{ProtocolError, SetupError};
use crate::fss::{argmax, lt_gate, Candidates};
use crate::gain::{gain_online, GainInputs};
use crate::lut::{leafweight_online, sigmoid_online, LeafTable, SigmoidTable};
use crate::sharing::{bit_mul, bit_mul_begin, bit_scale, open_bits};
use crate::transport::{Meter, Party};

/// One party's plaintext inputs for training.
#[derive(Clone, Debug)]
pub struct PartyInput {
    /// The party's own feature columns, one row per training sample.
    pub rows: Vec<Vec<f64>>,
    /// Labels, held by P1 only.
    pub labels: Option<Vec<u8>>,
    /// Thresholds for the party's own features.
    pub buckets: Buckets,
}

/// Validated configuration plus the public tables both parties derive.
#[derive(Clone, Debug)]
pub struct SecureSetup {
    pub cfg: TrainConfig,
    pub layout: Layout,
    pub samples: usize,
    pub budget: Budget,
    pub sigmoid: SigmoidTable,
    pub leaf: LeafTable,
}

impl SecureSetup {
    pub fn new(cfg: &TrainConfig, layout: Layout, samples: usize) -> Result<Self, SetupError> {
        let budget = cfg.validate(samples)?;
        if layout.buckets != cfg.buckets {
            return Err(SetupError::Other("layout and configuration disagree on bucket count".into()));
        }
        for party in 0..2 {
            if layout.local_features(party) == 0 {
                return Err(SetupError::EmptyParty { party });
            }
        }
        Ok(SecureSetup {
            cfg: cfg.clone(),
            layout,
            samples,
            budget,
            sigmoid: SigmoidTable::new(cfg.ring, cfg.segments)?,
            leaf: LeafTable::new(cfg.ring, cfg.segments, cfg.gamma, cfg.eta)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: PartyModel,
    /// Shares of the training margins after the last tree.
    pub margins: Vec<u64>,
    /// Traffic per tree.
    pub tree_meters: Vec<Meter>,
    /// Wall time of each tree on this party's side.
    pub tree_seconds: Vec<f64>,
}

/// Correlated randomness a training run consumes, per kind, in items.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Demand(pub BTreeMap<&'static str, u64>);

impl Demand {
    pub fn training(cfg: &TrainConfig, layout: &Layout, samples: usize) -> Demand {
        let mut d = BTreeMap::new();
        let mut add = |kind: &'static str, items: usize| {
            if items > 0 {
                *d.entry(kind).or_insert(0) += items as u64;
            }
        };
        let (n, c) = (samples, layout.candidates());
        for _ in 0..cfg.trees {
            add("lt", n * cfg.segments);
            for level in 0..cfg.depth {
                let m = 1usize << level;
                add("bit-mul", m * n * c);
                add("agg", m * n * 2);
                add("agg", m * c * n * 2);
                add("lt", m * c);
                add("trunc-square", 2 * m * c);
                add("trunc-mul", 2 * m * c);
                add("triple", m * c);
                let mut size = c;
                while size > 1 {
                    add("lt", m * (size / 2));
                    add("fanout-triple", m * (size / 2) * 2);
                    size = size.div_ceil(2);
                }
                add("lt", m);
                add("bit-mul", m * n);
            }
            let leaves = cfg.leaves();
            add("agg", leaves * n * 2);
            add("lt", leaves * cfg.segments);
            add("bit-scale", leaves * n);
        }
        Demand(d)
    }
}

fn degenerate_bits(p: &Party, bits: &[u64]) -> Vec<u64> {
    if p.is_p0() {
        bits.to_vec()
    } else {
        vec![0; bits.len()]
    }
}

fn left_indicator(rows: &[Vec<f64>], z: usize, threshold: f64) -> Vec<u64> {
    rows.iter().map(|r| (r[z] < threshold) as u64).collect()
}

pub fn train_party(p: &mut Party, setup: &SecureSetup, input: &PartyInput) -> Result<TrainOutput, ProtocolError> {
    let ring = p.ring();
    let me = p.id().index();
    let cfg = &setup.cfg;
    let layout = setup.layout;
    let n = setup.samples;
    let c_total = layout.candidates();
    if input.rows.len() != n {
        return Err(ProtocolError::Length(format!("{} rows for {n} samples", input.rows.len())));
    }
    if input.buckets.thresholds.len() != layout.local_features(me) {
        return Err(ProtocolError::Length("bucket table does not match the party's features".into()));
    }

    // Degenerate shares of every candidate's left indicator: the owner holds
    // the plaintext bits and the other party holds zeros.
    let own = layout.offset(me) * layout.per_feature();
    let own_tests = input.buckets.left_indicators(&input.rows);
    let mut tests = vec![vec![0u64; n]; c_total];
    for (i, t) in own_tests.into_iter().enumerate() {
        tests[own + i] = t;
    }

    let labels: Vec<u64> = match (&input.labels, me) {
        (Some(y), 1) if y.len() == n => y.iter().map(|&y| (y as u64) << ring.frac_bits).collect(),
        (None, 0) => vec![0; n],
        _ => return Err(ProtocolError::Length("labels must be held by P1 only, one per sample".into())),
    };

    let ones = degenerate_bits(p, &vec![1; n]);
    let mut margins = vec![0u64; n];
    let mut trees = Vec::with_capacity(cfg.trees);
    let mut tree_meters = Vec::with_capacity(cfg.trees);
    let mut tree_seconds = Vec::with_capacity(cfg.trees);

    for _ in 0..cfg.trees {
        let before = p.meter().clone();
        let started = std::time::Instant::now();
        let (prob, h) = sigmoid_online(p, "sigmoid", &setup.sigmoid, &margins)?;
        let g: Vec<u64> = prob.iter().zip(&labels).map(|(&p, &y)| ring.sub(p, y)).collect();

        let mut spaces = vec![ones.clone()];
        let mut nodes = Vec::with_capacity(cfg.internal_nodes());
        for _ in 0..cfg.depth {
            let (level_nodes, children) = grow_level(p, setup, input, &tests, &spaces, &g, &h)?;
            nodes.extend(level_nodes);
            spaces = children;
        }

        // Leaves: totals, then the table weight.
        let leaves = spaces.len();
        let xs: Vec<u64> = spaces.concat();
        let g_rep = g.repeat(leaves);
        let h_rep = h.repeat(leaves);
        let key = take_agg_key(p, xs.len(), 2);
        let mut w = p.writer("agg");
        let pending = agg_begin(p, &key, &xs, &[&g_rep, &h_rep], &mut w)?;
        let mut r = p.exchange("leaf-aggregate", w)?;
        let sums = pending.finish_grouped(p, &mut r, n)?;
        let (gs, hs): (Vec<u64>, Vec<u64>) = sums.iter().map(|s| (s[0], s[1])).unzip();
        let weights = leafweight_online(p, "leaf-weight", &setup.leaf, &gs, &hs)?;

        // Margin update: each sample sits in exactly one leaf space.
        let refs: Vec<&[u64]> = spaces.iter().map(Vec::as_slice).collect();
        let contrib = bit_scale(p, "margin", &weights, &refs)?;
        for row in &contrib {
            for (m, &v) in margins.iter_mut().zip(row) {
                *m = ring.add(*m, v);
            }
        }

        trees.push(PartyTree { nodes, leaves: weights });
        tree_meters.push(p.meter().since(&before));
        tree_seconds.push(started.elapsed().as_secs_f64());
    }

    let model = PartyModel { format: PARTY_MODEL_FORMAT.into(), party: me, config: cfg.clone(), layout, trees };
    Ok(TrainOutput { model, margins, tree_meters, tree_seconds })
}

/// Chooses a split for every node of one level and returns the node records
/// together with the children's sample spaces in level order.
fn grow_level(
    p: &mut Party,
    setup: &SecureSetup,
    input: &PartyInput,
    tests: &[Vec<u64>],
    spaces: &[Vec<u64>],
    g: &[u64],
    h: &[u64],
) -> Result<(Vec<NodeDoc>, Vec<Vec<u64>>), ProtocolError> {
    let ring = p.ring();
    let me = p.id().index();
    let layout = setup.layout;
    let n = setup.samples;
    let m = spaces.len();
    let c_total = tests.len();

    // Partition: s * test for all candidates, and node totals.
    let xs: Vec<u64> = spaces.concat();
    let tests_rep: Vec<Vec<u64>> = tests.iter().map(|t| t.repeat(m)).collect();
    let test_refs: Vec<&[u64]> = tests_rep.iter().map(Vec::as_slice).collect();
    let g_rep = g.repeat(m);
    let h_rep = h.repeat(m);
    let mut w = p.writer("bit-mul");
    let lefts = bit_mul_begin(p, &xs, &test_refs, &mut w)?;
    let key = take_agg_key(p, xs.len(), 2);
    let totals = agg_begin(p, &key, &xs, &[&g_rep, &h_rep], &mut w)?;
    let mut r = p.exchange("partition", w)?;
    let lefts = lefts.finish(p, &mut r)?;
    let totals = totals.finish_grouped(p, &mut r, n)?;
    drop(tests_rep);

    // Left-child sums for every (node, candidate).
    let mut left_spaces = Vec::with_capacity(m * c_total * n);
    for j in 0..m {
        for col in &lefts {
            left_spaces.extend_from_slice(&col[j * n..(j + 1) * n]);
        }
    }
    let g_rep = g.repeat(m * c_total);
    let h_rep = h.repeat(m * c_total);
    let key = take_agg_key(p, left_spaces.len(), 2);
    let mut w = p.writer("agg");
    let pending = agg_begin(p, &key, &left_spaces, &[&g_rep, &h_rep], &mut w)?;
    let mut r = p.exchange("aggregate", w)?;
    let left_sums = pending.finish_grouped(p, &mut r, n)?;
    drop(left_spaces);

    let mut inputs = GainInputs::default();
    for j in 0..m {
        let (gx, hx) = (totals[j][0], totals[j][1]);
        for c in 0..c_total {
            let (gl, hl) = (left_sums[j * c_total + c][0], left_sums[j * c_total + c][1]);
            inputs.g_l.push(gl);
            inputs.g_r.push(ring.sub(gx, gl));
            inputs.h_l.push(hl);
            inputs.h_r.push(ring.sub(hx, hl));
            inputs.h_x.push(hx);
        }
    }
    let gains = gain_online(p, "gain", &inputs, setup.leaf.gamma, setup.budget.gain_shift)?;

    let ids: Vec<u64> = degenerate_bits(p, &(0..c_total as u64).collect::<Vec<_>>());
    let groups = (0..m).map(|j| Candidates { values: gains[j * c_total..(j + 1) * c_total].to_vec(), tags: vec![ids.clone()] }).collect();
    let winners: Vec<u64> = argmax(p, "argmax", groups)?.into_iter().map(|w| w.tags[0]).collect();

    // Who owns each winner: 1{c* < first P1 candidate}, opened as one bit.
    let bound = if p.is_p0() { layout.p0_candidates() as u64 } else { 0 };
    let shifted: Vec<u64> = winners.iter().map(|&c| ring.sub(c, bound)).collect();
    let p0_owns = lt_gate(p, "owner", &shifted, &vec![0; m])?;
    let p0_owns = open_bits(p, "owner-open", &p0_owns)?;
    let owners: Vec<usize> = p0_owns.iter().map(|&b| if b == 1 { 0 } else { 1 }).collect();

    // Only the non-owner sends its share of the winner.
    let mut w = p.writer("reveal");
    for (j, &owner) in owners.iter().enumerate() {
        if owner != me {
            w.push(winners[j], ring.bits);
        }
    }
    let mine = owners.iter().filter(|&&o| o == me).count() as u64;
    let mut r = p.exchange_expecting("reveal", w, mine * ring.bits as u64)?;

    let mut nodes = Vec::with_capacity(m);
    let mut chosen = Vec::with_capacity(m * n);
    for (j, &owner) in owners.iter().enumerate() {
        if owner == me {
            let c = ring.add(winners[j], r.read(ring.bits)?) as usize;
            if c >= c_total || layout.owner_of_candidate(c) != me {
                return Err(ProtocolError::Range(format!("revealed candidate {c} is not owned by party {me}")));
            }
            let (z, u) = layout.split(c);
            let threshold = input.buckets.thresholds[z - layout.offset(me)][u];
            nodes.push(NodeDoc { feature: z as i64, bucket: u as i64, threshold: Some(threshold) });
            chosen.extend(left_indicator(&input.rows, z - layout.offset(me), threshold));
        } else {
            nodes.push(NodeDoc::hidden());
            chosen.extend(std::iter::repeat_n(0, n));
        }
    }

    let left = bit_mul(p, "children", &xs, &[&chosen])?.remove(0);
    let mut children = Vec::with_capacity(2 * m);
    for j in 0..m {
        let l = left[j * n..(j + 1) * n].to_vec();
        let rgt = spaces[j].iter().zip(&l).map(|(&s, &l)| ring.sub(s, l)).collect();
        children.push(l);
        children.push(rgt);
    }
    Ok((nodes, children))
}

/// Leaf-path indicator for one party's view of a tree: entry k is 1 when
/// no owned split on the way to leaf k rules the row out.
fn path_bits(nodes: &[NodeDoc], depth: usize, offset: usize, row: &[f64]) -> Vec<u64> {
    (0..1usize << depth)
        .map(|k| {
            let mut i = 0;
            for level in 0..depth {
                let right = (k >> (depth - 1 - level)) & 1 == 1;
                let node = &nodes[i];
                if !node.is_hidden() {
                    let x = row[node.feature as usize - offset];
                    let left = x < node.threshold.unwrap_or(f64::INFINITY);
                    if left == right {
                        return 0;
                    }
                }
                i = 2 * i + 1 + right as usize;
            }
            1
        })
        .collect()
}

/// Shares of the margin of every row (the party's own columns). Two rounds
/// regardless of the number of trees.
pub fn predict_party(p: &mut Party, model: &PartyModel, rows: &[Vec<f64>]) -> Result<Vec<u64>, ProtocolError> {
    let ring = p.ring();
    let me = p.id().index();
    let depth = model.config.depth;
    let offset = model.layout.offset(me);
    let leaves = 1usize << depth;
    let mrows = rows.len();

    // Entry ((t * leaves + k) * M + i): my path bit for tree t, leaf k, row i.
    let mut mine = vec![0u64; model.trees.len() * leaves * mrows];
    for (t, tree) in model.trees.iter().enumerate() {
        for (i, row) in rows.iter().enumerate() {
            for (k, b) in path_bits(&tree.nodes, depth, offset, row).into_iter().enumerate() {
                mine[(t * leaves + k) * mrows + i] = b;
            }
        }
    }
    let zeros = vec![0u64; mine.len()];
    let (x, y) = if p.is_p0() { (&mine, &zeros) } else { (&zeros, &mine) };
    let both = bit_mul(p, "predict-path", x, &[y])?.remove(0);

    let weights: Vec<u64> = model.trees.iter().flat_map(|t| t.leaves.iter().copied()).collect();
    let refs: Vec<&[u64]> = both.chunks(mrows.max(1)).take(weights.len()).collect();
    let refs = if mrows == 0 { vec![&both[..0]; weights.len()] } else { refs };
    let contrib = bit_scale(p, "predict-weight", &weights, &refs)?;
    let mut margins = vec![0u64; mrows];
    for row in &contrib {
        for (m, &v) in margins.iter_mut().zip(row) {
            *m = ring.add(*m, v);
        }
    }
    Ok(margins)
}
