//! End-to-end runs: split a dataset between the parties, train in one
//! two-party session, predict, and collect traffic.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::{bin_features, Dataset, VerticalSplit};
use crate::dealer::Usage;
use crate::error::{ProtocolError, SetupError};
use crate::reference::{plain_train, OracleMode};
use crate::sharing::open_vec;
use crate::trainer::{merge_models, predict_party, train_party, Layout, PartyInput, PartyModel, PlainModel, SecureSetup, TrainConfig};
use crate::transport::{run_two_party, Meter, SessionConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Secure,
    Mirror,
    Exact,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Secure => "secure",
            Mode::Mirror => "mirror",
            Mode::Exact => "exact",
        }
    }
}

/// Traffic of one party over a whole run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Traffic {
    pub total: Meter,
    pub per_tree: Vec<Meter>,
    pub tree_seconds: Vec<f64>,
    pub prediction: Meter,
    pub dealer: BTreeMap<&'static str, Usage>,
    /// Correlated randomness consumed by training alone.
    pub dealer_training: BTreeMap<&'static str, Usage>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub model: PlainModel,
    pub party_models: Option<[PartyModel; 2]>,
    pub train_margins: Vec<f64>,
    pub test_margins: Vec<f64>,
    pub traffic: Option<[Traffic; 2]>,
}

pub fn layout_for(ds: &Dataset, split: &VerticalSplit, cfg: &TrainConfig) -> Layout {
    Layout { features: ds.n_features(), p0_features: split.p0_features, buckets: cfg.buckets }
}

/// Trains in the given mode and scores the test rows. Plaintext modes score
/// with the plaintext model; secure mode uses secure prediction and opens the
/// margins at the end.
pub fn run(train: &Dataset, test: &Dataset, split: &VerticalSplit, cfg: &TrainConfig, mode: Mode) -> Result<RunResult, RunError> {
    let layout = layout_for(train, split, cfg);
    match mode {
        Mode::Mirror | Mode::Exact => {
            let oracle = if mode == Mode::Mirror { OracleMode::Mirror } else { OracleMode::Exact };
            let run = plain_train(train, layout, cfg, oracle)?;
            let test_margins = test.rows.iter().map(|r| run.model.margin(r)).collect();
            Ok(RunResult { model: run.model, party_models: None, train_margins: run.margins, test_margins, traffic: None })
        }
        Mode::Secure => run_secure(train, test, split, cfg, layout),
    }
}

fn run_secure(train: &Dataset, test: &Dataset, split: &VerticalSplit, cfg: &TrainConfig, layout: Layout) -> Result<RunResult, RunError> {
    let setup = SecureSetup::new(cfg, layout, train.len())?;
    let views = [split.view(train, 0), split.view(train, 1)];
    let inputs = [0, 1].map(|b| -> Result<PartyInput, SetupError> {
        Ok(PartyInput {
            rows: views[b].rows.clone(),
            labels: (b == 1).then(|| views[b].labels.clone()),
            buckets: bin_features(&views[b], cfg.buckets)?,
        })
    });
    let [i0, i1] = inputs;
    let inputs = [i0?, i1?];
    let test_views = [split.view(test, 0), split.view(test, 1)];
    let session = SessionConfig { dcf: cfg.dcf, ..SessionConfig::new(cfg.ring, cfg.seed) };
    let runs = run_two_party(&session, |p| {
        let b = p.id().index();
        let trained = train_party(p, &setup, &inputs[b])?;
        let after_train = p.meter().clone();
        let usage = p.dealer_usage().clone();
        let train_margins = open_vec(p, "open-train-margins", &trained.margins)?;
        let test_shares = predict_party(p, &trained.model, &test_views[b].rows)?;
        let test_margins = open_vec(p, "open-test-margins", &test_shares)?;
        let prediction = p.meter().since(&after_train);
        Ok((trained, train_margins, test_margins, prediction, usage))
    })?;
    let ring = cfg.ring;
    let decode = |v: &[u64]| v.iter().map(|&x| ring.decode(x)).collect::<Vec<f64>>();
    let [r0, r1] = runs;
    let model = merge_models(&r0.output.0.model, &r1.output.0.model)?;
    let traffic = [&r0, &r1].map(|r| Traffic {
        total: r.meter.clone(),
        per_tree: r.output.0.tree_meters.clone(),
        tree_seconds: r.output.0.tree_seconds.clone(),
        prediction: r.output.3.clone(),
        dealer: r.usage.clone(),
        dealer_training: r.output.4.clone(),
    });
    Ok(RunResult {
        model,
        train_margins: decode(&r0.output.1),
        test_margins: decode(&r0.output.2),
        party_models: Some([r0.output.0.model, r1.output.0.model]),
        traffic: Some(traffic),
    })
}

/// Secure prediction from the two party documents of one session. Each party
/// reads only its own columns of `ds`; the margins are opened at the end.
pub fn predict_secure(models: [&PartyModel; 2], ds: &Dataset, seed: u128) -> Result<(Vec<f64>, [Meter; 2]), RunError> {
    let (m0, m1) = if models[0].party == 0 { (models[0], models[1]) } else { (models[1], models[0]) };
    if m0.party != 0 || m1.party != 1 || m0.layout != m1.layout || m0.config != m1.config {
        return Err(SetupError::Other("model documents do not belong to one session".into()).into());
    }
    if ds.n_features() != m0.layout.features {
        return Err(SetupError::Other(format!("model expects {} features, dataset has {}", m0.layout.features, ds.n_features())).into());
    }
    let split = VerticalSplit::new(m0.layout.features, Some(m0.layout.p0_features)).map_err(|e| SetupError::Other(e.to_string()))?;
    let views = [split.view(ds, 0), split.view(ds, 1)];
    let ring = m0.config.ring;
    let session = SessionConfig { dcf: m0.config.dcf, ..SessionConfig::new(ring, seed) };
    let docs = [m0, m1];
    let [r0, r1] = run_two_party(&session, |p| {
        let b = p.id().index();
        let shares = predict_party(p, docs[b], &views[b].rows)?;
        open_vec(p, "open-test-margins", &shares)
    })?;
    let margins = r0.output.iter().map(|&x| ring.decode(x)).collect();
    Ok((margins, [r0.meter, r1.meter]))
}

pub fn accuracy(margins: &[f64], labels: &[u8]) -> f64 {
    crate::trainer::accuracy_from_margins(margins, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{breast_cancer, split_train_test};
    use crate::trainer::Demand;

    #[test]
    fn secure_matches_mirror_on_a_small_subset() {
        let ds = breast_cancer().head(60);
        let (train, test) = split_train_test(&ds, 0.8, 3);
        let split = VerticalSplit::new(9, None).unwrap();
        let cfg = TrainConfig { trees: 2, depth: 2, buckets: 4, segments: 8, dcf: crate::fss::DcfMode::Tree, ..TrainConfig::default() };
        let secure = run(&train, &test, &split, &cfg, Mode::Secure).unwrap();
        let mirror = run(&train, &test, &split, &cfg, Mode::Mirror).unwrap();
        assert_eq!(secure.model, mirror.model);
        assert_eq!(secure.train_margins, mirror.train_margins);
        assert_eq!(secure.test_margins, mirror.test_margins);
        let [a, b] = secure.party_models.as_ref().unwrap();
        let (again, _) = predict_secure([b, a], &test, 9).unwrap();
        assert_eq!(again, secure.test_margins);

        let traffic = secure.traffic.unwrap();
        let layout = layout_for(&train, &split, &cfg);
        let demand = Demand::training(&cfg, &layout, train.len()).0;
        for t in &traffic {
            let used: BTreeMap<&str, u64> = t.dealer_training.iter().map(|(k, u)| (*k, u.items)).collect();
            assert_eq!(used, demand);
        }
    }
}
