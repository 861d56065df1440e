//! Exhaustive grid search with best-validation-accuracy selection.
//!
//! Candidates are the Cartesian product of the declared axes in
//! lexicographic order (first axis slowest). Candidate `i` trains with seed
//! `base_seed + i` on one worker of a pool of `parallelism` threads; every
//! candidate is single-threaded and seeded, so results do not depend on the
//! pool size or on scheduling.

use std::fmt;
use std::sync::Mutex;
use std::time::Instant;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classifiers::{
    accuracy, fit, LabeledBatch, LogReg, LogRegConfig, Mlp, MlpConfig, SavedModel, TrainConfig, TrainHistory,
    UnimodalModel,
};
use crate::dataset::{DatasetBundle, MultimodalBundle, Split};
use crate::fusion::{
    intermediate_inputs, late_inputs, GateActivation, IntermediateConfig, IntermediateFusionModel, LateStrategy,
};
use crate::nn::{argmax_rows, Objective};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridModel {
    Mlp,
    Logreg,
    LateFusion,
    IntermediateFusion,
}

impl fmt::Display for GridModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridModel::Mlp => "mlp",
            GridModel::Logreg => "logreg",
            GridModel::LateFusion => "late_fusion",
            GridModel::IntermediateFusion => "intermediate_fusion",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub model: GridModel,
    #[serde(default)]
    pub axes: IndexMap<String, Vec<Value>>,
    #[serde(default)]
    pub base_seed: u64,
}

/// Architecture settings of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSettings {
    Mlp(MlpConfig),
    Logreg(LogRegConfig),
    LateFusion { strategy: LateStrategy },
    IntermediateFusion(IntermediateConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateConfig {
    pub model: ModelSettings,
    pub train: TrainConfig,
}

impl CandidateConfig {
    /// Defaults for a model kind; fusion kinds use their own batch sizes.
    pub fn defaults(model: GridModel) -> Self {
        let (model, train) = match model {
            GridModel::Mlp => (ModelSettings::Mlp(MlpConfig::default()), TrainConfig::default()),
            GridModel::Logreg => (ModelSettings::Logreg(LogRegConfig::default()), TrainConfig::default()),
            GridModel::LateFusion => (
                ModelSettings::LateFusion {
                    strategy: LateStrategy::CrossAttention,
                },
                TrainConfig::late_fusion(),
            ),
            GridModel::IntermediateFusion => (
                ModelSettings::IntermediateFusion(IntermediateConfig::default()),
                TrainConfig::intermediate_fusion(),
            ),
        };
        Self { model, train }
    }

    /// Sets one named hyperparameter, rejecting names the model kind does not
    /// have and values of the wrong type.
    pub fn apply(&mut self, name: &str, value: &Value) -> Result<()> {
        let bad = || Error::config(name, format!("invalid value {value}"));
        let as_f64 = || value.as_f64().ok_or_else(bad);
        let as_usize = || value.as_u64().map(|v| v as usize).ok_or_else(bad);
        let as_bool = || value.as_bool().ok_or_else(bad);
        let t = &mut self.train;
        match (name, &mut self.model) {
            ("learning_rate", _) => t.learning_rate = as_f64()?,
            ("batch_size", _) => t.batch_size = as_usize()?,
            ("max_epochs", _) => t.max_epochs = as_usize()?,
            ("class_weighting", _) => t.class_weighting = as_bool()?,
            ("shuffle", _) => t.shuffle = as_bool()?,
            ("patience", _) => t.patience = Some(as_usize()?),
            ("hidden_units", ModelSettings::Mlp(m)) => {
                m.hidden_units = serde_json::from_value(value.clone()).map_err(|_| bad())?;
                if m.dropout_rates.len() != m.hidden_units.len() {
                    let rate = m.dropout_rates.first().copied().unwrap_or(0.0);
                    m.dropout_rates = vec![rate; m.hidden_units.len()];
                }
            }
            ("dropout_rate", ModelSettings::Mlp(m)) => {
                let r = as_f64()?;
                m.dropout_rates = vec![r; m.hidden_units.len()];
            }
            ("dropout_rates", ModelSettings::Mlp(m)) => {
                m.dropout_rates = serde_json::from_value(value.clone()).map_err(|_| bad())?;
            }
            ("l2_strength", ModelSettings::Logreg(l)) => l.l2_strength = as_f64()?,
            ("strategy", ModelSettings::LateFusion { strategy }) => {
                *strategy = value.as_str().ok_or_else(bad)?.parse().map_err(|e: String| Error::config(name, e))?;
            }
            ("projection_width", ModelSettings::IntermediateFusion(c)) => c.projection_width = as_usize()?,
            ("gate", ModelSettings::IntermediateFusion(c)) => {
                c.gate = value
                    .as_str()
                    .ok_or_else(bad)?
                    .parse::<GateActivation>()
                    .map_err(|e| Error::config(name, e))?;
            }
            ("dropout", ModelSettings::IntermediateFusion(c)) => c.dropout = as_f64()?,
            _ => return Err(Error::config(name, "not a hyperparameter of this model kind")),
        }
        Ok(())
    }

    /// Checks everything that can be checked without data.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        match &self.model {
            ModelSettings::Mlp(m) => {
                Mlp::new(m, 0)?;
            }
            ModelSettings::Logreg(l) => {
                LogReg::new(l)?;
            }
            ModelSettings::LateFusion { .. } => {}
            ModelSettings::IntermediateFusion(c) => {
                IntermediateFusionModel::new(1, 1, c, 0)?;
                if self.train.batch_size < 2 {
                    return Err(Error::config("batch_size", "batch norm needs batches of at least 2"));
                }
            }
        }
        Ok(())
    }
}

/// One grid point: its index, axis values and the resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub params: IndexMap<String, Value>,
    pub config: CandidateConfig,
}

/// All grid points in lexicographic order over the declared axes.
pub fn enumerate_grid(spec: &GridSpec) -> Result<Vec<Candidate>> {
    if let Some((name, _)) = spec.axes.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::config(format!("axis `{name}`"), "has no values"));
    }
    let sizes: Vec<usize> = spec.axes.values().map(Vec::len).collect();
    let total: usize = sizes.iter().product();
    let mut out = Vec::with_capacity(total);
    for index in 0..total {
        let mut rem = index;
        let mut digits = vec![0; sizes.len()];
        for (d, &size) in digits.iter_mut().zip(&sizes).rev() {
            *d = rem % size;
            rem /= size;
        }
        let mut config = CandidateConfig::defaults(spec.model);
        let mut params = IndexMap::new();
        for ((name, values), &d) in spec.axes.iter().zip(&digits) {
            config.apply(name, &values[d])?;
            params.insert(name.clone(), values[d].clone());
        }
        config.train.seed = spec.base_seed.wrapping_add(index as u64);
        config.validate()?;
        out.push(Candidate { index, params, config });
    }
    Ok(out)
}

/// The data a grid runs on. Fusion grids train heads on top of a fixed,
/// already trained FEA model.
#[derive(Debug, Clone, Copy)]
pub enum SearchData<'a> {
    Fea(&'a DatasetBundle),
    LateFusion {
        fea_model: &'a UnimodalModel,
        bundle: &'a MultimodalBundle,
    },
    IntermediateFusion {
        mlp: &'a Mlp,
        bundle: &'a MultimodalBundle,
    },
}

impl SearchData<'_> {
    fn accepts(&self, model: GridModel) -> bool {
        matches!(
            (self, model),
            (SearchData::Fea(_), GridModel::Mlp | GridModel::Logreg)
                | (SearchData::LateFusion { .. }, GridModel::LateFusion)
                | (SearchData::IntermediateFusion { .. }, GridModel::IntermediateFusion)
        )
    }
}

fn fea_split(bundle: &DatasetBundle, split: Split) -> Result<LabeledBatch<crate::nn::Matrix>> {
    let (x, y) = bundle.split_arrays(split);
    LabeledBatch::new(x, y)
}

/// Trains one configuration on the train split with val-based selection.
pub fn train_candidate(config: &CandidateConfig, data: SearchData<'_>) -> Result<(SavedModel, TrainHistory)> {
    let seed = config.train.seed;
    match (&config.model, data) {
        (ModelSettings::Mlp(m), SearchData::Fea(bundle)) => {
            let (model, h) = fit(
                Mlp::new(m, seed)?,
                &fea_split(bundle, Split::Train)?,
                &fea_split(bundle, Split::Val)?,
                &config.train,
            )?;
            Ok((model.into(), h))
        }
        (ModelSettings::Logreg(l), SearchData::Fea(bundle)) => {
            let (model, h) = fit(
                LogReg::new(l)?,
                &fea_split(bundle, Split::Train)?,
                &fea_split(bundle, Split::Val)?,
                &config.train,
            )?;
            Ok((model.into(), h))
        }
        (ModelSettings::LateFusion { strategy }, SearchData::LateFusion { fea_model, bundle }) => {
            let (head, h) = crate::fusion::train_late_fusion(*strategy, fea_model, bundle, &config.train)?;
            Ok((
                SavedModel::LateFusion {
                    head,
                    fea_model: fea_model.clone(),
                },
                h,
            ))
        }
        (ModelSettings::IntermediateFusion(c), SearchData::IntermediateFusion { mlp, bundle }) => {
            let (head, h) = crate::fusion::train_intermediate_fusion(mlp, bundle, c, &config.train)?;
            Ok((
                SavedModel::IntermediateFusion {
                    head,
                    fea_model: mlp.clone(),
                },
                h,
            ))
        }
        _ => Err(Error::config("model", "grid model kind does not match the supplied data")),
    }
}

/// Accuracy of a trained model on one split of the search data.
pub fn split_accuracy(model: &SavedModel, data: SearchData<'_>, split: Split) -> Result<f64> {
    let (labels, probs) = match (model, data) {
        (SavedModel::Unimodal(m), SearchData::Fea(bundle)) => {
            let (x, y) = bundle.split_arrays(split);
            (y, m.predict_proba(&x)?)
        }
        (SavedModel::LateFusion { head, fea_model }, SearchData::LateFusion { bundle, .. }) => {
            let d = late_inputs(fea_model, bundle, split)?;
            (d.labels, head.predict_proba(&d.input)?)
        }
        (SavedModel::IntermediateFusion { head, fea_model }, SearchData::IntermediateFusion { bundle, .. }) => {
            let d = intermediate_inputs(fea_model, bundle, split)?;
            (d.labels, head.predict_proba(&d.input)?)
        }
        _ => return Err(Error::config("model", "model kind does not match the supplied data")),
    };
    if labels.is_empty() {
        return Err(Error::EmptySplit(split));
    }
    Ok(accuracy(&argmax_rows(&probs), &labels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub rank: usize,
    pub index: usize,
    pub seed: u64,
    pub params: IndexMap<String, Value>,
    pub config: CandidateConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub parallelism: usize,
    /// Evaluate every candidate on test, not only the winner.
    pub evaluate_all: bool,
    /// Record training wall time. Off by default because it makes result
    /// files differ between otherwise identical runs.
    pub record_wall_time: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            parallelism: 1,
            evaluate_all: false,
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Ranked: val accuracy descending, then candidate index ascending;
    /// failed candidates last.
    pub results: Vec<CandidateResult>,
    pub winner_model: SavedModel,
}

impl SearchOutcome {
    pub fn winner(&self) -> &CandidateResult {
        &self.results[0]
    }

    pub fn to_jsonl(&self) -> Result<String> {
        crate::io::to_jsonl(&self.results)
    }
}

/// `true` when `a` ranks ahead of `b`.
fn ranks_before(a: (Option<f64>, usize), b: (Option<f64>, usize)) -> bool {
    match (a.0, b.0) {
        (Some(x), Some(y)) if x != y => x > y,
        (Some(_), None) => true,
        (None, Some(_)) => false,
        _ => a.1 < b.1,
    }
}

pub fn run_grid_search(spec: &GridSpec, data: SearchData<'_>, options: &SearchOptions) -> Result<SearchOutcome> {
    if options.parallelism < 1 {
        return Err(Error::config("parallelism", "must be ≥ 1"));
    }
    if !data.accepts(spec.model) {
        return Err(Error::config("model", format!("{} grid does not match the supplied data", spec.model)));
    }
    let candidates = enumerate_grid(spec)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism)
        .build()
        .map_err(|e| Error::config("parallelism", e.to_string()))?;

    // Only the best model so far is kept; the ranking key is a total order,
    // so the survivor does not depend on completion order.
    let best: Mutex<Option<((f64, usize), SavedModel)>> = Mutex::new(None);
    let mut results: Vec<CandidateResult> = pool.install(|| {
        candidates
            .par_iter()
            .map(|c| {
                let start = Instant::now();
                let trained = train_candidate(&c.config, data).and_then(|(model, h)| {
                    let test = if options.evaluate_all {
                        Some(split_accuracy(&model, data, Split::Test)?)
                    } else {
                        None
                    };
                    Ok((model, h, test))
                });
                let elapsed = options.record_wall_time.then(|| start.elapsed().as_secs_f64());
                let mut r = CandidateResult {
                    rank: 0,
                    index: c.index,
                    seed: c.config.train.seed,
                    params: c.params.clone(),
                    config: c.config.clone(),
                    val_accuracy: None,
                    test_accuracy: None,
                    selected_epoch: None,
                    wall_time_secs: elapsed,
                    error: None,
                };
                match trained {
                    Ok((model, h, test)) => {
                        // Strategies without parameters have no history; score
                        // them on val directly.
                        let val = match h.best_val_accuracy() {
                            Some(v) => Ok(v),
                            None => split_accuracy(&model, data, Split::Val),
                        };
                        match val {
                            Ok(v) => {
                                r.val_accuracy = Some(v);
                                r.selected_epoch = h.selected_epoch;
                                r.test_accuracy = test;
                                let mut guard = best.lock().expect("no panics while holding the lock");
                                if guard.as_ref().is_none_or(|(k, _)| ranks_before((Some(v), c.index), (Some(k.0), k.1)))
                                {
                                    *guard = Some(((v, c.index), model));
                                }
                            }
                            Err(e) => r.error = Some(e.to_string()),
                        }
                    }
                    Err(e) => r.error = Some(e.to_string()),
                }
                r
            })
            .collect()
    });

    results.sort_by(|a, b| {
        if ranks_before((a.val_accuracy, a.index), (b.val_accuracy, b.index)) {
            std::cmp::Ordering::Less
        } else if a.index == b.index {
            std::cmp::Ordering::Equal
        } else {
            std::cmp::Ordering::Greater
        }
    });
    for (rank, r) in results.iter_mut().enumerate() {
        r.rank = rank;
    }
    let Some((_, winner_model)) = best.into_inner().expect("lock not poisoned") else {
        return Err(Error::AllCandidatesFailed(results.len()));
    };
    if results[0].test_accuracy.is_none() {
        results[0].test_accuracy = Some(split_accuracy(&winner_model, data, Split::Test)?);
    }
    Ok(SearchOutcome { results, winner_model })
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;
    use crate::dataset::{generate_synthetic, SynthConfig, SynthMode};

    fn spec(model: GridModel, axes: Value) -> GridSpec {
        serde_json::from_value(json!({"model": model, "axes": axes, "base_seed": 10})).unwrap()
    }

    fn bundle() -> DatasetBundle {
        let cfg = SynthConfig {
            per_class_train: 6,
            per_class_val: 3,
            per_class_test: 3,
            sigma: 0.2,
            mode: SynthMode::Easy,
            seed: 0,
        };
        generate_synthetic(&cfg, 21).unwrap().0
    }

    #[test]
    fn enumeration_order_and_size() {
        let g = enumerate_grid(&spec(GridModel::Mlp, json!({"learning_rate": [0.001], "batch_size": [32]}))).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].config.train.seed, 10);

        let g = enumerate_grid(&spec(
            GridModel::Mlp,
            json!({"learning_rate": [1, 2], "shuffle": [true, false]}),
        ))
        .unwrap();
        let pairs: Vec<(f64, bool)> = g
            .iter()
            .map(|c| (c.config.train.learning_rate, c.config.train.shuffle))
            .collect();
        assert_eq!(pairs, [(1.0, true), (1.0, false), (2.0, true), (2.0, false)]);
        assert_eq!(g[3].config.train.seed, 13);

        let lr: Vec<f64> = (1..=4).map(|i| i as f64 * 1e-3).collect();
        let bs: Vec<usize> = (1..=5).map(|i| i * 8).collect();
        let l2: Vec<f64> = (0..81).map(|i| i as f64 * 1e-3).collect();
        let g = enumerate_grid(&spec(
            GridModel::Logreg,
            json!({"learning_rate": lr, "batch_size": bs, "l2_strength": l2}),
        ))
        .unwrap();
        assert_eq!(g.len(), 1620);
        assert_eq!(g.iter().map(|c| c.index).collect::<Vec<_>>(), (0..1620).collect::<Vec<_>>());
    }

    #[test]
    fn invalid_axes_are_rejected() {
        let err = enumerate_grid(&spec(GridModel::Mlp, json!({"learning_rate": []}))).unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
        assert!(enumerate_grid(&spec(GridModel::Mlp, json!({"l2_strength": [0.1]}))).is_err());
        assert!(enumerate_grid(&spec(GridModel::Mlp, json!({"learning_rate": [-1.0]}))).is_err());
        assert!(enumerate_grid(&spec(GridModel::LateFusion, json!({"strategy": ["median"]}))).is_err());
    }

    #[test]
    fn single_candidate_wins() {
        let b = bundle();
        let s = spec(GridModel::Logreg, json!({"max_epochs": [3]}));
        let out = run_grid_search(&s, SearchData::Fea(&b), &SearchOptions::default()).unwrap();
        assert_eq!(out.results.len(), 1);
        assert_eq!(out.winner().index, 0);
        assert!(out.winner().test_accuracy.is_some());
        assert!(out.winner().wall_time_secs.is_none());
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let b = bundle();
        let s = spec(
            GridModel::Mlp,
            json!({"learning_rate": [0.0005, 0.001, 0.003], "batch_size": [16, 32], "max_epochs": [2, 4]}),
        );
        let run = |p| {
            run_grid_search(&s, SearchData::Fea(&b), &SearchOptions {
                parallelism: p,
                ..SearchOptions::default()
            })
            .unwrap()
        };
        let (a, c) = (run(1), run(3));
        assert_eq!(a.results.len(), 12);
        assert_eq!(a.to_jsonl().unwrap(), c.to_jsonl().unwrap());
        assert_eq!(a.winner_model, c.winner_model);
        let best = a.results.iter().filter_map(|r| r.val_accuracy).fold(f64::MIN, f64::max);
        assert_eq!(a.winner().val_accuracy, Some(best));
    }

    #[test]
    fn ties_go_to_the_lower_index() {
        let b = bundle();
        // Identical configs with different seeds and no shuffling tie.
        let s = GridSpec {
            model: GridModel::Logreg,
            axes: [("max_epochs".to_string(), vec![json!(2), json!(2)])].into_iter().collect(),
            base_seed: 0,
        };
        let mut s2 = s.clone();
        s2.axes.insert("shuffle".into(), vec![json!(false)]);
        let out = run_grid_search(&s2, SearchData::Fea(&b), &SearchOptions::default()).unwrap();
        assert_eq!(out.results[0].val_accuracy, out.results[1].val_accuracy);
        assert_eq!(out.winner().index, 0);
        assert!(ranks_before((Some(0.5), 3), (Some(0.5), 4)));
        assert!(ranks_before((Some(0.6), 9), (Some(0.5), 0)));
        assert!(ranks_before((Some(0.0), 9), (None, 0)));
    }

    #[test]
    fn failures_are_isolated() {
        let b = bundle();
        // Class weighting fails when a class has no training samples.
        let samples: Vec<_> = b
            .samples()
            .iter()
            .filter(|s| !(s.split == Split::Train && s.label.index() == 3))
            .cloned()
            .collect();
        let holey = DatasetBundle::new(samples).unwrap();
        let s = spec(GridModel::Logreg, json!({"class_weighting": [true, false], "max_epochs": [2]}));
        let out = run_grid_search(&s, SearchData::Fea(&holey), &SearchOptions::default()).unwrap();
        let failed: Vec<_> = out.results.iter().filter(|r| r.error.is_some()).collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].index, 0);
        assert_eq!(out.results.last().unwrap().index, 0);
        assert_eq!(out.winner().index, 1);

        let s = spec(GridModel::Logreg, json!({"class_weighting": [true]}));
        assert!(matches!(
            run_grid_search(&s, SearchData::Fea(&holey), &SearchOptions::default()),
            Err(Error::AllCandidatesFailed(1))
        ));
    }

    #[test]
    fn results_round_trip_through_jsonl() {
        let b = bundle();
        let s = spec(GridModel::Mlp, json!({"hidden_units": [[16], [8, 4]], "max_epochs": [1]}));
        let out = run_grid_search(&s, SearchData::Fea(&b), &SearchOptions::default()).unwrap();
        let text = out.to_jsonl().unwrap();
        let parsed: Vec<CandidateResult> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(parsed, out.results);
        let c = &parsed.iter().find(|r| r.index == 1).unwrap().config;
        assert_eq!(c.model, ModelSettings::Mlp(MlpConfig {
            hidden_units: vec![8, 4],
            dropout_rates: vec![0.2, 0.2],
        }));
    }

    #[test]
    fn model_and_data_must_match() {
        let b = bundle();
        let s = spec(GridModel::LateFusion, json!({}));
        assert!(run_grid_search(&s, SearchData::Fea(&b), &SearchOptions::default()).is_err());
        let s = spec(GridModel::Mlp, json!({}));
        assert!(run_grid_search(
            &s,
            SearchData::Fea(&b),
            &SearchOptions {
                parallelism: 0,
                ..SearchOptions::default()
            }
        )
        .is_err());
    }

    proptest::proptest! {
        #[test]
        fn ranking_is_a_strict_total_order(
            keys in proptest::collection::vec(proptest::option::of(0u8..5), 1..12),
        ) {
            let items: Vec<(Option<f64>, usize)> =
                keys.iter().enumerate().map(|(i, k)| (k.map(|v| f64::from(v) / 4.0), i)).collect();
            for &a in &items {
                proptest::prop_assert!(!ranks_before(a, a));
                for &b in &items {
                    if a.1 != b.1 {
                        proptest::prop_assert!(ranks_before(a, b) != ranks_before(b, a));
                    }
                    for &c in &items {
                        if ranks_before(a, b) && ranks_before(b, c) {
                            proptest::prop_assert!(ranks_before(a, c));
                        }
                    }
                }
            }
        }

        #[test]
        fn grid_is_the_full_cartesian_product(sizes in proptest::collection::vec(1usize..4, 0..4)) {
            let names = ["learning_rate", "batch_size", "max_epochs", "patience"];
            let axes: IndexMap<String, Vec<Value>> = sizes
                .iter()
                .zip(names)
                .map(|(&n, name)| {
                    let values = (0..n)
                        .map(|i| match name {
                            "learning_rate" => json!(0.001 * (i + 1) as f64),
                            _ => json!(i + 1),
                        })
                        .collect();
                    (name.to_string(), values)
                })
                .collect();
            let grid = enumerate_grid(&GridSpec { model: GridModel::Logreg, axes, base_seed: 5 }).unwrap();
            proptest::prop_assert_eq!(grid.len(), sizes.iter().product::<usize>());
            let mut seen = std::collections::HashSet::new();
            for (i, c) in grid.iter().enumerate() {
                proptest::prop_assert_eq!(c.index, i);
                proptest::prop_assert_eq!(c.config.train.seed, 5 + i as u64);
                let key: Vec<usize> = c
                    .params
                    .iter()
                    .map(|(name, v)| axis_position(name, v))
                    .collect();
                proptest::prop_assert!(seen.insert(key.clone()));
                if i > 0 {
                    let prev: Vec<usize> = grid[i - 1]
                        .params
                        .iter()
                        .map(|(name, v)| axis_position(name, v))
                        .collect();
                    proptest::prop_assert!(prev < key);
                }
            }
        }
    }

    /// Position of `value` within its axis, for the generated axes above.
    fn axis_position(name: &str, value: &Value) -> usize {
        match name {
            "learning_rate" => (value.as_f64().unwrap() / 0.001).round() as usize - 1,
            _ => value.as_u64().unwrap() as usize - 1,
        }
    }
}
