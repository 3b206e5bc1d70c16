use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Weighted class distribution of the training samples that reached it.
    Leaf { dist: Vec<f64> },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART classification tree with Gini impurity. The root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

struct Builder<'a, R: ?Sized> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    w: &'a [f64],
    k: usize,
    params: &'a TreeParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn class_weights(&self, idx: &[usize]) -> Vec<f64> {
        let mut cw = alloc::vec![0.0; self.k];
        for &i in idx {
            cw[self.y[i]] += self.w[i];
        }
        cw
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> usize {
        let cw = self.class_weights(idx);
        let total: f64 = cw.iter().sum();
        let pure = cw.iter().filter(|&&c| c > 0.0).count() <= 1;
        let at_limit = self.params.max_depth.is_some_and(|m| depth >= m);
        let id = self.nodes.len();
        let leaf = Node::Leaf {
            dist: cw.iter().map(|c| c / total).collect(),
        };
        if pure || at_limit || idx.len() < self.params.min_samples_split {
            self.nodes.push(leaf);
            return id;
        }
        let Some(best) = self.best_split(idx) else {
            self.nodes.push(leaf);
            return id;
        };
        self.nodes.push(leaf);
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[i][best.feature] <= best.threshold);
        let left = self.build(&l, depth + 1);
        let right = self.build(&r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Lowest weighted child impurity; the first feature in visiting order
    /// and then the lowest threshold win ties.
    fn best_split(&mut self, idx: &[usize]) -> Option<Candidate> {
        let d = self.x[idx[0]].len();
        let mut order: Vec<usize> = (0..d).collect();
        let quota = match self.params.max_features {
            Some(m) if m < d => {
                order.shuffle(self.rng);
                m
            }
            _ => d,
        };
        let mut best: Option<Candidate> = None;
        let mut visited = 0;
        let mut sorted: Vec<usize> = idx.to_vec();
        for f in order {
            if visited >= quota && best.is_some() {
                break;
            }
            sorted.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let lo = self.x[sorted[0]][f];
            let hi = self.x[sorted[sorted.len() - 1]][f];
            if lo == hi {
                continue;
            }
            visited += 1;
            if let Some(c) = self.scan_feature(&sorted, f) {
                if best.as_ref().is_none_or(|b| c.score < b.score) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn scan_feature(&self, sorted: &[usize], f: usize) -> Option<Candidate> {
        let mut right = self.class_weights(sorted);
        let mut left = alloc::vec![0.0; self.k];
        let mut wl = 0.0;
        let mut wr: f64 = right.iter().sum();
        let mut best: Option<Candidate> = None;
        for p in 0..sorted.len() - 1 {
            let i = sorted[p];
            left[self.y[i]] += self.w[i];
            right[self.y[i]] -= self.w[i];
            wl += self.w[i];
            wr -= self.w[i];
            let a = self.x[i][f];
            let b = self.x[sorted[p + 1]][f];
            if a == b {
                continue;
            }
            let score = weighted_gini(&left, wl) + weighted_gini(&right, wr);
            if best.as_ref().is_none_or(|c| score < c.score) {
                let mid = a + (b - a) / 2.0;
                // guard against the midpoint rounding onto the upper value
                let threshold = if mid < b { mid } else { a };
                best = Some(Candidate {
                    feature: f,
                    threshold,
                    score,
                });
            }
        }
        best
    }
}

/// `W · gini` for class weights summing to `total`.
fn weighted_gini(cw: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    total - cw.iter().map(|c| c * c).sum::<f64>() / total
}

impl Tree {
    /// Fits on rows with positive weight. `y` holds encoded classes `< k`.
    pub fn fit<R: Rng + ?Sized>(
        x: &[Vec<f64>],
        y: &[usize],
        k: usize,
        weights: &[f64],
        params: &TreeParams,
        rng: &mut R,
    ) -> Tree {
        let idx: Vec<usize> = (0..x.len()).filter(|&i| weights[i] > 0.0).collect();
        let mut b = Builder {
            x,
            y,
            w: weights,
            k,
            params,
            rng,
            nodes: Vec::new(),
        };
        b.build(&idx, 0);
        Tree { nodes: b.nodes }
    }

    /// Class distribution of the leaf `row` falls into.
    pub fn leaf(&self, row: &[f64]) -> &[f64] {
        let mut n = 0;
        loop {
            match &self.nodes[n] {
                Node::Leaf { dist } => return dist,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => n = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        crate::encoder::argmax(self.leaf(row))
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], n: usize) -> usize {
            match &nodes[n] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    /// Per-split feature count; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            bootstrap: true,
            max_features: None,
        }
    }
}

pub(crate) fn fit_forest(
    x: &[Vec<f64>],
    y: &[usize],
    k: usize,
    params: &ForestParams,
    seed: u64,
) -> Vec<Tree> {
    let n = x.len();
    let d = x[0].len();
    let m = params.max_features.unwrap_or_else(|| ceil_sqrt(d));
    let tree_params = TreeParams {
        max_features: Some(m),
        ..TreeParams::default()
    };
    (0..params.n_trees)
        .map(|t| {
            let mut rng = crate::rng::stream(seed, "forest-tree", t as u64);
            let mut w = alloc::vec![0.0; n];
            if params.bootstrap {
                for _ in 0..n {
                    w[rng.random_range(0..n)] += 1.0;
                }
            } else {
                w.fill(1.0);
            }
            Tree::fit(x, y, k, &w, &tree_params, &mut rng)
        })
        .collect()
}

fn ceil_sqrt(d: usize) -> usize {
    let mut r = 0;
    while r * r < d {
        r += 1;
    }
    r.max(1)
}

/// Mean of the member trees' leaf distributions.
pub(crate) fn forest_proba(trees: &[Tree], k: usize, row: &[f64]) -> Vec<f64> {
    let mut p = alloc::vec![0.0; k];
    for t in trees {
        for (a, b) in p.iter_mut().zip(t.leaf(row)) {
            *a += b;
        }
    }
    let n = trees.len() as f64;
    p.iter_mut().for_each(|v| *v /= n);
    p
}
