//! File formats: versioned JSON documents for models and ratio estimators,
//! CSV datasets with a JSON sidecar, and CSV traces.
//!
//! Doubles are written in shortest round-trip form, so load followed by save
//! reproduces a file byte for byte.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{Categorical, Gaussian, Gmm};
use crate::eim_conditional::MixtureOfExperts;
use crate::error::{check_dim, EimError, Result};
use crate::eval::ModelRef;
use crate::nn::{Activation, Dense, Mlp};
use crate::ratio_estimator::{FeatureMap, RatioEstimator};
use crate::tasks::{SplitCounts, TaskKind, TaskSpec};

pub const FORMAT_VERSION: u32 = 1;

/// A fitted model of either family, owned.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Gmm(Gmm),
    Moe(MixtureOfExperts),
}

impl Model {
    pub fn as_ref(&self) -> ModelRef<'_> {
        match self {
            Model::Gmm(g) => ModelRef::Gmm(g),
            Model::Moe(m) => ModelRef::Moe(m),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    /// Row-major, one row per output unit.
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetDoc {
    activation: Activation,
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum Doc {
    Gmm {
        version: u32,
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        /// Lower-triangular factors, row-major.
        cholesky_factors: Vec<Vec<Vec<f64>>>,
    },
    Moe {
        version: u32,
        dim: usize,
        gating: NetDoc,
        experts: Vec<NetDoc>,
    },
    RatioEstimator {
        version: u32,
        x_dim: usize,
        context_dim: usize,
        features: Option<String>,
        shift: Vec<f64>,
        scale: Vec<f64>,
        net: NetDoc,
    },
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    for row in r {
        check_dim(ncols, row.len())?;
    }
    Ok(DMatrix::from_fn(r.len(), ncols, |i, j| r[i][j]))
}

fn net_doc(net: &Mlp) -> NetDoc {
    NetDoc {
        activation: net.activation(),
        layers: net
            .layers()
            .iter()
            .map(|l| LayerDoc {
                weight: rows(&l.weight),
                bias: l.bias.iter().copied().collect(),
            })
            .collect(),
    }
}

fn net_from_doc(doc: &NetDoc) -> Result<Mlp> {
    let layers = doc
        .layers
        .iter()
        .map(|l| {
            let ncols = l.weight.first().map_or(0, |r| r.len());
            Ok(Dense {
                weight: from_rows(&l.weight, ncols)?,
                bias: DVector::from_vec(l.bias.clone()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Mlp::from_layers(layers, doc.activation)
}

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(EimError::Format(format!("unsupported format version {v}, expected {FORMAT_VERSION}")));
    }
    Ok(())
}

fn to_json(doc: &Doc) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

pub fn model_to_string(model: &Model) -> Result<String> {
    let doc = match model {
        Model::Gmm(g) => Doc::Gmm {
            version: FORMAT_VERSION,
            weights: g.weights().probs().iter().copied().collect(),
            means: g.components().iter().map(|c| c.mean().iter().copied().collect()).collect(),
            cholesky_factors: g.components().iter().map(|c| rows(c.cholesky())).collect(),
        },
        Model::Moe(m) => Doc::Moe {
            version: FORMAT_VERSION,
            dim: m.dim(),
            gating: net_doc(m.gating()),
            experts: m.experts().iter().map(net_doc).collect(),
        },
    };
    to_json(&doc)
}

pub fn model_from_str(s: &str) -> Result<Model> {
    match serde_json::from_str::<Doc>(s)? {
        Doc::Gmm {
            version,
            weights,
            means,
            cholesky_factors,
        } => {
            check_version(version)?;
            check_dim(weights.len(), means.len())?;
            check_dim(weights.len(), cholesky_factors.len())?;
            let comps = means
                .iter()
                .zip(&cholesky_factors)
                .map(|(m, l)| {
                    let d = m.len();
                    check_dim(d, l.len())?;
                    Gaussian::from_cholesky(DVector::from_vec(m.clone()), from_rows(l, d)?)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Model::Gmm(Gmm::new(comps, Categorical::new(DVector::from_vec(weights))?)?))
        }
        Doc::Moe {
            version,
            dim,
            gating,
            experts,
        } => {
            check_version(version)?;
            let experts = experts.iter().map(net_from_doc).collect::<Result<Vec<_>>>()?;
            Ok(Model::Moe(MixtureOfExperts::new(net_from_doc(&gating)?, experts, dim)?))
        }
        Doc::RatioEstimator { .. } => Err(EimError::Format("file holds a ratio estimator, not a model".into())),
    }
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    fs::write(path, model_to_string(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    model_from_str(&fs::read_to_string(path)?)
}

pub fn estimator_to_string(est: &RatioEstimator) -> Result<String> {
    to_json(&Doc::RatioEstimator {
        version: FORMAT_VERSION,
        x_dim: est.x_dim(),
        context_dim: est.context_dim(),
        features: est.features().map(|f| f.name().to_string()),
        shift: est.shift().iter().copied().collect(),
        scale: est.scale().iter().copied().collect(),
        net: net_doc(est.net()),
    })
}

/// Reads an estimator; `features` must be the map it was trained with.
pub fn estimator_from_str(s: &str, features: Option<Arc<dyn FeatureMap>>) -> Result<RatioEstimator> {
    let Doc::RatioEstimator {
        version,
        x_dim,
        context_dim,
        features: name,
        shift,
        scale,
        net,
    } = serde_json::from_str::<Doc>(s)?
    else {
        return Err(EimError::Format("file does not hold a ratio estimator".into()));
    };
    check_version(version)?;
    let given = features.as_ref().map(|f| f.name().to_string());
    if given != name {
        return Err(EimError::Format(format!("estimator was trained with features {name:?}, got {given:?}")));
    }
    RatioEstimator::new(net_from_doc(&net)?, x_dim, context_dim, features)?
        .with_scaling(DVector::from_vec(shift), DVector::from_vec(scale))
}

/// Sidecar document of a stored dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub version: u32,
    pub name: String,
    pub seed: u64,
    pub dim: usize,
    pub context_dim: usize,
    pub counts: SplitCounts,
    /// Task constants.
    pub task: TaskKind,
}

const SPLITS: [&str; 3] = ["train", "test", "validation"];

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>, prefix: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..m.ncols()).map(|k| format!("{prefix}{k}")))?;
    for r in m.row_iter() {
        w.serialize(r.iter().copied().collect::<Vec<f64>>())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let ncols = r.headers()?.len();
    let mut data = Vec::new();
    let mut n = 0;
    for rec in r.deserialize::<Vec<f64>>() {
        let rec = rec?;
        check_dim(ncols, rec.len())?;
        data.extend(rec);
        n += 1;
    }
    Ok(DMatrix::from_row_slice(n, ncols, &data))
}

/// Writes `train.csv`, `test.csv`, `validation.csv` (plus `*_contexts.csv`
/// for conditional tasks), `meta.json`, and `target.json` when the task has
/// an analytic target.
pub fn save_task(dir: &Path, task: &TaskSpec) -> Result<()> {
    fs::create_dir_all(dir)?;
    let splits = [&task.train, &task.test, &task.validation];
    let contexts = [&task.train_contexts, &task.test_contexts, &task.validation_contexts];
    for (k, name) in SPLITS.iter().enumerate() {
        write_matrix_csv(&dir.join(format!("{name}.csv")), splits[k], "x")?;
        if let Some(c) = contexts[k] {
            write_matrix_csv(&dir.join(format!("{name}_contexts.csv")), c, "y")?;
        }
    }
    let meta = DatasetMeta {
        version: FORMAT_VERSION,
        name: task.name().to_string(),
        seed: task.seed,
        dim: task.dim(),
        context_dim: task.context_dim(),
        counts: SplitCounts {
            train: task.train.nrows(),
            test: task.test.nrows(),
            validation: task.validation.nrows(),
        },
        task: task.kind.clone(),
    };
    let mut s = serde_json::to_string_pretty(&meta)?;
    s.push('\n');
    fs::write(dir.join("meta.json"), s)?;
    if let Some(t) = &task.target {
        save_model(&dir.join("target.json"), &Model::Gmm(t.clone()))?;
    }
    Ok(())
}

pub fn load_task(dir: &Path) -> Result<TaskSpec> {
    let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    check_version(meta.version)?;
    let mut mats = Vec::new();
    let mut ctxs = Vec::new();
    for name in SPLITS {
        let m = read_matrix_csv(&dir.join(format!("{name}.csv")))?;
        check_dim(meta.dim, m.ncols())?;
        let c = if meta.context_dim > 0 {
            let c = read_matrix_csv(&dir.join(format!("{name}_contexts.csv")))?;
            check_dim(meta.context_dim, c.ncols())?;
            check_dim(m.nrows(), c.nrows())?;
            Some(c)
        } else {
            None
        };
        mats.push(m);
        ctxs.push(c);
    }
    let target_path = dir.join("target.json");
    let target = if target_path.exists() {
        match load_model(&target_path)? {
            Model::Gmm(g) => Some(g),
            Model::Moe(_) => return Err(EimError::Format("target must be a GMM".into())),
        }
    } else {
        None
    };
    let mut ctxs = ctxs.into_iter();
    let mut mats = mats.into_iter();
    Ok(TaskSpec {
        kind: meta.task,
        seed: meta.seed,
        train: mats.next().expect("three splits"),
        test: mats.next().expect("three splits"),
        validation: mats.next().expect("three splits"),
        train_contexts: ctxs.next().expect("three splits"),
        test_contexts: ctxs.next().expect("three splits"),
        validation_contexts: ctxs.next().expect("three splits"),
        target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eim_conditional::init_moe;
    use crate::rng::rng_from_seed;
    use crate::tasks::{gen_obstacle_task, gen_random_gmm_task_with};

    #[test]
    fn gmm_round_trip_is_bit_exact() {
        let t = gen_random_gmm_task_with(3, 4, 1, SplitCounts::from_train(10)).unwrap();
        let m = Model::Gmm(t.target.unwrap());
        let s = model_to_string(&m).unwrap();
        let back = model_from_str(&s).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_string(&back).unwrap(), s);
        assert!(s.contains("\"version\": 1") && s.contains("\"type\": \"gmm\""));
        assert!(s.contains("cholesky_factors") && s.contains("weights") && s.contains("means"));
    }

    #[test]
    fn moe_round_trip_is_bit_exact() {
        let t = gen_obstacle_task(5, 3, 2).unwrap();
        let mut m = init_moe(&t.train, t.train_contexts.as_ref().unwrap(), 2, &[4], 3).unwrap();
        let mut rng = rng_from_seed(4);
        for p in m.expert_mut(1).layers_mut().iter_mut() {
            p.weight.apply(|v| *v += rand::Rng::random::<f64>(&mut rng) / 3.0);
        }
        let m = Model::Moe(m);
        let s = model_to_string(&m).unwrap();
        let back = model_from_str(&s).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_string(&back).unwrap(), s);
    }

    #[test]
    fn estimator_round_trip_is_bit_exact() {
        let t = gen_obstacle_task(5, 3, 5).unwrap();
        let mut rng = rng_from_seed(6);
        let net = Mlp::new(&[9, 5, 1], Activation::Tanh, &mut rng);
        let est = RatioEstimator::new(net, 3, 3, t.feature_map())
            .unwrap()
            .with_scaling(DVector::from_element(9, 0.1 + 0.2), DVector::from_element(9, 1.0 / 3.0))
            .unwrap();
        let s = estimator_to_string(&est).unwrap();
        let back = estimator_from_str(&s, t.feature_map()).unwrap();
        assert_eq!(estimator_to_string(&back).unwrap(), s);
        let ctx = t.train_contexts.as_ref().unwrap();
        assert_eq!(back.logits(&t.train, Some(ctx)).unwrap(), est.logits(&t.train, Some(ctx)).unwrap());
        assert!(estimator_from_str(&s, None).is_err());
    }

    #[test]
    fn wrong_version_and_unknown_fields_are_rejected() {
        let m = Model::Gmm(Gmm::new(vec![Gaussian::standard(1)], Categorical::uniform(1)).unwrap());
        let s = model_to_string(&m).unwrap();
        assert!(matches!(model_from_str(&s.replace("\"version\": 1", "\"version\": 7")), Err(EimError::Format(_))));
        let extra = s.replacen('{', "{\n  \"colour\": 1,", 1);
        assert!(model_from_str(&extra).is_err());
    }

    #[test]
    fn datasets_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        for (k, t) in [
            gen_random_gmm_task_with(2, 3, 7, SplitCounts::from_train(20)).unwrap(),
            gen_obstacle_task(4, 3, 8).unwrap(),
        ]
        .into_iter()
        .enumerate()
        {
            let d = dir.path().join(k.to_string());
            save_task(&d, &t).unwrap();
            assert_eq!(load_task(&d).unwrap(), t);
        }
        let header = fs::read_to_string(dir.path().join("1/train_contexts.csv")).unwrap();
        assert!(header.starts_with("y0,y1,y2\n"));
    }
}
