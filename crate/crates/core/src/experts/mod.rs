//! Classical classifiers fitted on per-video feature vectors.
//!
//! Every kind maps an `N × d` feature table and class labels to an
//! [`ExpertModel`] whose `predict_proba` rows lie on the probability simplex
//! with columns in `classes` order. Fitting is deterministic given the seed.

mod boost;
mod knn;
mod mlp;
mod svm;
mod tree;

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

pub use boost::{BoostParams, Boosted};
pub use knn::{KnnParams, Neighbours};
pub use mlp::{Layer, LrSchedule, Mlp, MlpParams};
pub use svm::{rbf, scale_gamma, BinarySvm, OvrSvm, SvmParams};
pub use tree::{ForestParams, Node, Tree, TreeParams};

use crate::encoder::argmax;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertKind {
    DecisionTree,
    RandomForest,
    #[serde(rename = "adaboost")]
    AdaBoost,
    NearestNeighbours,
    Svm,
    Mlp,
    MlpLarge,
}

impl ExpertKind {
    pub const ALL: [ExpertKind; 7] = [
        ExpertKind::DecisionTree,
        ExpertKind::RandomForest,
        ExpertKind::AdaBoost,
        ExpertKind::NearestNeighbours,
        ExpertKind::Svm,
        ExpertKind::Mlp,
        ExpertKind::MlpLarge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExpertKind::DecisionTree => "decision_tree",
            ExpertKind::RandomForest => "random_forest",
            ExpertKind::AdaBoost => "adaboost",
            ExpertKind::NearestNeighbours => "nearest_neighbours",
            ExpertKind::Svm => "svm",
            ExpertKind::Mlp => "mlp",
            ExpertKind::MlpLarge => "mlp_large",
        }
    }

    /// Stable one-byte tag for binary containers.
    pub fn tag(self) -> u8 {
        ExpertKind::ALL.iter().position(|&k| k == self).expect("listed") as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        ExpertKind::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for ExpertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExpertKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase().replace('-', "_");
        let kind = match s.as_str() {
            "dt" => ExpertKind::DecisionTree,
            "rf" => ExpertKind::RandomForest,
            "ab" | "ada_boost" => ExpertKind::AdaBoost,
            "nn" | "knn" | "nearest_neighbors" => ExpertKind::NearestNeighbours,
            "mlp_l" => ExpertKind::MlpLarge,
            other => *ExpertKind::ALL
                .iter()
                .find(|k| k.name() == other)
                .ok_or_else(|| Error::invalid(alloc::format!("unknown expert kind {other:?}")))?,
        };
        Ok(kind)
    }
}

/// Hyperparameters for one kind; stored alongside every fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparams {
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    #[serde(rename = "adaboost")]
    AdaBoost(BoostParams),
    NearestNeighbours(KnnParams),
    Svm(SvmParams),
    Mlp(MlpParams),
    MlpLarge(MlpParams),
}

impl Hyperparams {
    pub fn defaults(kind: ExpertKind) -> Self {
        match kind {
            ExpertKind::DecisionTree => Hyperparams::DecisionTree(TreeParams::default()),
            ExpertKind::RandomForest => Hyperparams::RandomForest(ForestParams::default()),
            ExpertKind::AdaBoost => Hyperparams::AdaBoost(BoostParams::default()),
            ExpertKind::NearestNeighbours => Hyperparams::NearestNeighbours(KnnParams::default()),
            ExpertKind::Svm => Hyperparams::Svm(SvmParams::default()),
            ExpertKind::Mlp => Hyperparams::Mlp(MlpParams::small()),
            ExpertKind::MlpLarge => Hyperparams::MlpLarge(MlpParams::large()),
        }
    }

    pub fn kind(&self) -> ExpertKind {
        match self {
            Hyperparams::DecisionTree(_) => ExpertKind::DecisionTree,
            Hyperparams::RandomForest(_) => ExpertKind::RandomForest,
            Hyperparams::AdaBoost(_) => ExpertKind::AdaBoost,
            Hyperparams::NearestNeighbours(_) => ExpertKind::NearestNeighbours,
            Hyperparams::Svm(_) => ExpertKind::Svm,
            Hyperparams::Mlp(_) => ExpertKind::Mlp,
            Hyperparams::MlpLarge(_) => ExpertKind::MlpLarge,
        }
    }
}

/// Fitted state. Class indices inside are positions in `ExpertModel::classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ExpertState {
    /// Fallback when training saw a single class.
    Constant,
    Tree(Tree),
    Forest { trees: Vec<Tree> },
    Boosted(Boosted),
    Neighbours(Neighbours),
    Svm(OvrSvm),
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertModel {
    pub hyperparams: Hyperparams,
    /// Sorted original labels; column order of `predict_proba`.
    pub classes: Vec<usize>,
    pub dim: usize,
    pub fit_seed: u64,
    /// Set when training saw a single class and the model is constant.
    pub degenerate: bool,
    pub state: ExpertState,
}

fn check_table(x: &[Vec<f64>], dim: Option<usize>) -> Result<usize> {
    let d = match dim {
        Some(d) => d,
        None => x.first().map(|r| r.len()).ok_or_else(|| Error::invalid("empty feature table"))?,
    };
    if d == 0 {
        return Err(Error::invalid("feature rows are empty"));
    }
    for (i, r) in x.iter().enumerate() {
        if r.len() != d {
            return Err(Error::shape(alloc::format!("{d} features"), alloc::format!("{} in row {i}", r.len())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(alloc::format!("non-finite feature in row {i}")));
        }
    }
    Ok(d)
}

/// Fits `kind` with its committed default hyperparameters.
pub fn fit(x: &[Vec<f64>], y: &[usize], kind: ExpertKind, seed: u64) -> Result<ExpertModel> {
    fit_with(x, y, Hyperparams::defaults(kind), seed)
}

pub fn fit_with(x: &[Vec<f64>], y: &[usize], hyperparams: Hyperparams, seed: u64) -> Result<ExpertModel> {
    let d = check_table(x, None)?;
    if x.len() != y.len() {
        return Err(Error::shape(alloc::format!("{} labels", x.len()), y.len()));
    }
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let k = classes.len();
    let enc: Vec<usize> = y
        .iter()
        .map(|c| classes.binary_search(c).expect("class present"))
        .collect();
    let state = if k == 1 {
        ExpertState::Constant
    } else {
        match &hyperparams {
            Hyperparams::DecisionTree(p) => {
                let w = alloc::vec![1.0; x.len()];
                ExpertState::Tree(Tree::fit(x, &enc, k, &w, p, &mut crate::rng::stream(seed, "tree", 0)))
            }
            Hyperparams::RandomForest(p) => ExpertState::Forest {
                trees: tree::fit_forest(x, &enc, k, p, seed),
            },
            Hyperparams::AdaBoost(p) => ExpertState::Boosted(boost::fit_samme(x, &enc, k, p)),
            Hyperparams::NearestNeighbours(_) => ExpertState::Neighbours(Neighbours {
                x: x.to_vec(),
                y: enc,
            }),
            Hyperparams::Svm(p) => ExpertState::Svm(svm::fit_ovr(x, &enc, k, p)),
            Hyperparams::Mlp(p) | Hyperparams::MlpLarge(p) => ExpertState::Mlp(mlp::fit_mlp(x, &enc, k, p, seed)),
        }
    };
    Ok(ExpertModel {
        hyperparams,
        classes,
        dim: d,
        fit_seed: seed,
        degenerate: k == 1,
        state,
    })
}

impl ExpertModel {
    pub fn kind(&self) -> ExpertKind {
        self.hyperparams.kind()
    }

    fn row_proba(&self, row: &[f64]) -> Vec<f64> {
        let k = self.classes.len();
        match &self.state {
            ExpertState::Constant => alloc::vec![1.0],
            ExpertState::Tree(t) => t.leaf(row).to_vec(),
            ExpertState::Forest { trees } => tree::forest_proba(trees, k, row),
            ExpertState::Boosted(b) => b.proba(k, row),
            ExpertState::Neighbours(nn) => {
                let kk = match &self.hyperparams {
                    Hyperparams::NearestNeighbours(p) => p.k,
                    _ => KnnParams::default().k,
                };
                nn.proba(kk, k, row)
            }
            ExpertState::Svm(s) => s.proba(row),
            ExpertState::Mlp(m) => m.proba(row),
        }
    }

    /// `M × K` class probabilities, columns ordered as `classes`.
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if x.is_empty() {
            return Ok(Vec::new());
        }
        check_table(x, Some(self.dim))?;
        Ok(x.iter().map(|r| self.row_proba(r)).collect())
    }

    /// Probabilities spread over labels `0..k`; classes unseen at fit time
    /// get zero.
    pub fn predict_proba_full(&self, x: &[Vec<f64>], k: usize) -> Result<Vec<Vec<f64>>> {
        if let Some(&c) = self.classes.iter().find(|&&c| c >= k) {
            return Err(Error::invalid(alloc::format!("class {c} outside 0..{k}")));
        }
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|p| {
                let mut full = alloc::vec![0.0; k];
                for (&c, v) in self.classes.iter().zip(p) {
                    full[c] = v;
                }
                full
            })
            .collect())
    }

    /// Most probable original label per row; ties go to the lowest class.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        Ok(self
            .predict_proba(x)?
            .iter()
            .map(|p| self.classes[argmax(p)])
            .collect())
    }

    /// Fraction of rows whose predicted label equals `y`.
    pub fn accuracy(&self, x: &[Vec<f64>], y: &[usize]) -> Result<f64> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::shape(alloc::format!("{} labels", x.len()), y.len()));
        }
        let hits = self.predict(x)?.iter().zip(y).filter(|(a, b)| a == b).count();
        Ok(hits as f64 / y.len() as f64)
    }
}

/// Outcome of best-of-three selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection<T> {
    pub model: T,
    /// Validation score of the candidates fitted with `seed`, `seed+1`,
    /// `seed+2`.
    pub scores: [f64; 3],
    pub chosen: usize,
}

/// Fits three candidates with consecutive seeds and keeps the highest
/// scoring one; the lowest seed wins ties.
pub fn best_of_3<T, F, S>(seed: u64, mut fit: F, mut score: S) -> Result<Selection<T>>
where
    F: FnMut(u64) -> Result<T>,
    S: FnMut(&T) -> Result<f64>,
{
    let mut best: Option<(T, usize)> = None;
    let mut scores = [0.0; 3];
    for i in 0..3 {
        let m = fit(seed + i as u64)?;
        scores[i] = score(&m)?;
        if best.as_ref().is_none_or(|(_, b)| scores[i] > scores[*b]) {
            best = Some((m, i));
        }
    }
    let (model, chosen) = best.expect("three candidates");
    Ok(Selection { model, scores, chosen })
}

/// Best of three seeds by validation accuracy.
pub fn fit_best_of_3(
    train_x: &[Vec<f64>],
    train_y: &[usize],
    val_x: &[Vec<f64>],
    val_y: &[usize],
    kind: ExpertKind,
    seed: u64,
) -> Result<Selection<ExpertModel>> {
    if val_x.is_empty() {
        return Err(Error::invalid("empty validation set"));
    }
    best_of_3(seed, |s| fit(train_x, train_y, kind, s), |m| m.accuracy(val_x, val_y))
}
