//! Bagged decision trees for classification (Gini impurity) and regression
//! (residual sum of squares), with impurity-decrease feature importance and
//! five-fold cross-validated grid search.
//!
//! Trees grow greedily: each node evaluates candidate splits over a random
//! feature subset and keeps the one with the largest impurity decrease.
//! Continuous features split at midpoints between consecutive sorted unique
//! values; categorical features split one-vs-rest on each category. Ties
//! break toward the lowest feature index, then the lowest threshold. There
//! is no depth limit; `min_samples_leaf` is the only stopping regularizer
//! besides node purity.
//!
//! Every tree fits an independent bootstrap sample drawn with a seed
//! derived from the forest seed, so a forest is reproducible bit-for-bit
//! and trees can fit in parallel.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gini impurity of a label multiset: `1 - sum p_i^2`.
pub fn gini(labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let k = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    gini_from_counts(&counts, labels.len())
}

/// Gini impurity from per-class counts.
pub fn gini_from_counts(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut sum_sq = 0.0;
    for &c in counts {
        let p = c as f64 / n as f64;
        sum_sq += p * p;
    }
    1.0 - sum_sq
}

/// Residual sum of squares around the mean: `sum (y_i - mean)^2`.
pub fn rss(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|y| (y - mean) * (y - mean)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Classification,
    Regression,
}

/// Kind of each feature column as the tree sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Continuous,
    /// Category indices `0..n` stored as reals; split one-vs-rest.
    Categorical { n: usize },
}

/// Row-major numeric design matrix with per-column feature kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
    pub kinds: Vec<FeatureKind>,
}

impl FeatureMatrix {
    pub fn new(n_cols: usize, kinds: Vec<FeatureKind>) -> Self {
        assert_eq!(kinds.len(), n_cols);
        Self { n_rows: 0, n_cols, data: Vec::new(), kinds }
    }

    /// All-continuous matrix from rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::new(n_cols, vec![FeatureKind::Continuous; n_cols]);
        for r in rows {
            m.push_row(r);
        }
        m
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.n_cols);
        self.data.extend_from_slice(row);
        self.n_rows += 1;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n_cols + c]
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut m = Self::new(self.n_cols, self.kinds.clone());
        for &i in indices {
            m.push_row(self.row(i));
        }
        m
    }
}

/// Training targets, borrowed from the caller.
#[derive(Debug, Clone, Copy)]
pub enum ForestTargets<'a> {
    Classes { labels: &'a [usize], n_classes: usize },
    Values(&'a [f64]),
}

impl ForestTargets<'_> {
    pub fn len(&self) -> usize {
        match self {
            Self::Classes { labels, .. } => labels.len(),
            Self::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn task(&self) -> Task {
        match self {
            Self::Classes { .. } => Task::Classification,
            Self::Values(_) => Task::Regression,
        }
    }
}

/// How many features each split considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSubset {
    All,
    /// `ceil(sqrt(p))`; the classification default.
    Sqrt,
    /// `ceil(p / 3)`; the regression default.
    Third,
    Fixed(usize),
}

impl FeatureSubset {
    pub fn resolve(self, p: usize) -> usize {
        match self {
            Self::All => p,
            Self::Sqrt => (p as f64).sqrt().ceil() as usize,
            Self::Third => p.div_ceil(3),
            Self::Fixed(k) => k.min(p),
        }
        .clamp(1, p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub task: Task,
    pub n_estimators: usize,
    pub min_samples_leaf: usize,
    /// Bootstrap size cap; the draw is `min(max_samples, n)` with replacement.
    pub max_samples: usize,
    pub feature_subset: FeatureSubset,
    pub seed: u64,
}

impl ForestConfig {
    pub fn classification(seed: u64) -> Self {
        Self {
            task: Task::Classification,
            n_estimators: 60,
            min_samples_leaf: 5,
            max_samples: 10_000,
            feature_subset: FeatureSubset::Sqrt,
            seed,
        }
    }

    pub fn regression(seed: u64) -> Self {
        Self {
            task: Task::Regression,
            n_estimators: 60,
            min_samples_leaf: 5,
            max_samples: 10_000,
            feature_subset: FeatureSubset::Third,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForestError {
    #[error("schema mismatch: row has {got} features, forest expects {want}")]
    SchemaMismatch { got: usize, want: usize },
    #[error("empty training data")]
    EmptyData,
    #[error("grid search requires a non-empty grid")]
    EmptyGrid,
    #[error("cross-validation needs at least {folds} samples, got {n}")]
    TooFewSamples { folds: usize, n: usize },
}

/// Split predicate at an internal node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SplitRule {
    /// Left child takes `x[feature] <= threshold`.
    Threshold { feature: usize, threshold: f64 },
    /// Left child takes `x[feature] == category` (one-vs-rest).
    Category { feature: usize, category: usize },
}

impl SplitRule {
    pub fn feature(&self) -> usize {
        match *self {
            Self::Threshold { feature, .. } | Self::Category { feature, .. } => feature,
        }
    }

    #[inline]
    fn goes_left(&self, row: &[f64]) -> bool {
        match *self {
            Self::Threshold { feature, threshold } => row[feature] <= threshold,
            Self::Category { feature, category } => row[feature] == category as f64,
        }
    }
}

/// Tree nodes stored as a flat array; children are node indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { rule: SplitRule, left: usize, right: usize, n: usize, decrease: f64 },
    LeafClass { counts: Vec<usize> },
    LeafValue { mean: f64, n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_for(&self, row: &[f64]) -> &Node {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { rule, left, right, .. } => {
                    i = if rule.goes_left(row) { *left } else { *right };
                }
                leaf => return leaf,
            }
        }
    }

    /// Root split's impurity decrease, if the root is a split.
    pub fn root_decrease(&self) -> Option<f64> {
        match self.nodes.first() {
            Some(Node::Split { decrease, .. }) => Some(*decrease),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub task: Task,
    pub n_features: usize,
    pub n_classes: usize,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    /// Soft-vote class distribution; sums to one.
    Distribution(Vec<f64>),
    Value(f64),
}

struct NodeContext<'a> {
    data: &'a FeatureMatrix,
    targets: ForestTargets<'a>,
    min_samples_leaf: usize,
    k_features: usize,
}

struct BestSplit {
    rule: SplitRule,
    decrease: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn node_impurity(ctx: &NodeContext, indices: &[usize]) -> f64 {
    match ctx.targets {
        ForestTargets::Classes { labels, n_classes } => {
            let mut counts = vec![0usize; n_classes];
            for &i in indices {
                counts[labels[i]] += 1;
            }
            gini_from_counts(&counts, indices.len())
        }
        ForestTargets::Values(values) => {
            let ys: Vec<f64> = indices.iter().map(|&i| values[i]).collect();
            rss(&ys)
        }
    }
}

fn is_constant(ctx: &NodeContext, indices: &[usize]) -> bool {
    match ctx.targets {
        ForestTargets::Classes { labels, .. } => {
            let first = labels[indices[0]];
            indices.iter().all(|&i| labels[i] == first)
        }
        ForestTargets::Values(values) => {
            let first = values[indices[0]];
            indices.iter().all(|&i| values[i] == first)
        }
    }
}

/// Weighted-children impurity decrease; the canonical split criterion.
fn split_decrease(parent: f64, left: f64, n_left: usize, right: f64, n_right: usize) -> f64 {
    let n = (n_left + n_right) as f64;
    parent - (n_left as f64 / n * left + n_right as f64 / n * right)
}

/// Draws `k` distinct feature indices, returned in ascending order so the
/// tie-break toward low feature indices is deterministic.
fn sample_features(rng: &mut ChaCha8Rng, p: usize, k: usize) -> Vec<usize> {
    if k >= p {
        return (0..p).collect();
    }
    let mut pool: Vec<usize> = (0..p).collect();
    for i in 0..k {
        let j = rng.random_range(i..p);
        pool.swap(i, j);
    }
    let mut chosen = pool[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

fn best_split_for_feature(
    ctx: &NodeContext,
    indices: &[usize],
    feature: usize,
    parent_impurity: f64,
) -> Option<BestSplit> {
    match ctx.data.kinds[feature] {
        FeatureKind::Continuous => best_threshold_split(ctx, indices, feature, parent_impurity),
        FeatureKind::Categorical { n } => {
            best_category_split(ctx, indices, feature, n, parent_impurity)
        }
    }
}

fn best_threshold_split(
    ctx: &NodeContext,
    indices: &[usize],
    feature: usize,
    parent_impurity: f64,
) -> Option<BestSplit> {
    let mut sorted: Vec<usize> = indices.to_vec();
    sorted.sort_by(|&a, &b| ctx.data.at(a, feature).total_cmp(&ctx.data.at(b, feature)));
    let msl = ctx.min_samples_leaf;
    let n = sorted.len();

    let mut best: Option<BestSplit> = None;
    match ctx.targets {
        ForestTargets::Classes { labels, n_classes } => {
            let mut left_counts = vec![0usize; n_classes];
            let mut right_counts = vec![0usize; n_classes];
            for &i in &sorted {
                right_counts[labels[i]] += 1;
            }
            for cut in 1..n {
                let moved = sorted[cut - 1];
                left_counts[labels[moved]] += 1;
                right_counts[labels[moved]] -= 1;
                let (lo, hi) = (ctx.data.at(sorted[cut - 1], feature), ctx.data.at(sorted[cut], feature));
                if hi <= lo || cut < msl || n - cut < msl {
                    continue;
                }
                let decrease = split_decrease(
                    parent_impurity,
                    gini_from_counts(&left_counts, cut),
                    cut,
                    gini_from_counts(&right_counts, n - cut),
                    n - cut,
                );
                if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    best = Some(BestSplit {
                        rule: SplitRule::Threshold { feature, threshold: (lo + hi) / 2.0 },
                        decrease,
                        left: sorted[..cut].to_vec(),
                        right: sorted[cut..].to_vec(),
                    });
                }
            }
        }
        ForestTargets::Values(values) => {
            for cut in 1..n {
                let (lo, hi) = (ctx.data.at(sorted[cut - 1], feature), ctx.data.at(sorted[cut], feature));
                if hi <= lo || cut < msl || n - cut < msl {
                    continue;
                }
                let left_ys: Vec<f64> = sorted[..cut].iter().map(|&i| values[i]).collect();
                let right_ys: Vec<f64> = sorted[cut..].iter().map(|&i| values[i]).collect();
                let decrease = split_decrease(
                    parent_impurity,
                    rss(&left_ys),
                    cut,
                    rss(&right_ys),
                    n - cut,
                );
                if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    best = Some(BestSplit {
                        rule: SplitRule::Threshold { feature, threshold: (lo + hi) / 2.0 },
                        decrease,
                        left: sorted[..cut].to_vec(),
                        right: sorted[cut..].to_vec(),
                    });
                }
            }
        }
    }
    best
}

fn best_category_split(
    ctx: &NodeContext,
    indices: &[usize],
    feature: usize,
    n_categories: usize,
    parent_impurity: f64,
) -> Option<BestSplit> {
    let msl = ctx.min_samples_leaf;
    let n = indices.len();
    let mut best: Option<BestSplit> = None;
    for category in 0..n_categories {
        let (left, right): (Vec<usize>, Vec<usize>) =
            indices.iter().partition(|&&i| ctx.data.at(i, feature) == category as f64);
        if left.len() < msl || right.len() < msl {
            continue;
        }
        let (il, ir) = match ctx.targets {
            ForestTargets::Classes { labels, n_classes } => {
                let count = |idx: &[usize]| {
                    let mut c = vec![0usize; n_classes];
                    for &i in idx {
                        c[labels[i]] += 1;
                    }
                    c
                };
                (
                    gini_from_counts(&count(&left), left.len()),
                    gini_from_counts(&count(&right), right.len()),
                )
            }
            ForestTargets::Values(values) => {
                let ys = |idx: &[usize]| idx.iter().map(|&i| values[i]).collect::<Vec<f64>>();
                (rss(&ys(&left)), rss(&ys(&right)))
            }
        };
        let decrease = split_decrease(parent_impurity, il, left.len(), ir, n - left.len());
        if best.as_ref().is_none_or(|b| decrease > b.decrease) {
            best =
                Some(BestSplit { rule: SplitRule::Category { feature, category }, decrease, left, right });
        }
    }
    best
}

fn make_leaf(ctx: &NodeContext, indices: &[usize]) -> Node {
    match ctx.targets {
        ForestTargets::Classes { labels, n_classes } => {
            let mut counts = vec![0usize; n_classes];
            for &i in indices {
                counts[labels[i]] += 1;
            }
            Node::LeafClass { counts }
        }
        ForestTargets::Values(values) => {
            let mean = indices.iter().map(|&i| values[i]).sum::<f64>() / indices.len() as f64;
            Node::LeafValue { mean, n: indices.len() }
        }
    }
}

fn grow(ctx: &NodeContext, nodes: &mut Vec<Node>, indices: Vec<usize>, rng: &mut ChaCha8Rng) -> usize {
    let here = nodes.len();
    nodes.push(Node::LeafValue { mean: 0.0, n: 0 }); // placeholder

    let splittable = indices.len() >= 2 * ctx.min_samples_leaf && !is_constant(ctx, &indices);
    if splittable {
        let parent = node_impurity(ctx, &indices);
        let features = sample_features(rng, ctx.data.n_cols, ctx.k_features);
        let mut best: Option<BestSplit> = None;
        for f in features {
            if let Some(cand) = best_split_for_feature(ctx, &indices, f, parent) {
                if best.as_ref().is_none_or(|b| cand.decrease > b.decrease) {
                    best = Some(cand);
                }
            }
        }
        if let Some(split) = best {
            let n = indices.len();
            let left = grow(ctx, nodes, split.left, rng);
            let right = grow(ctx, nodes, split.right, rng);
            nodes[here] =
                Node::Split { rule: split.rule, left, right, n, decrease: split.decrease };
            return here;
        }
    }
    nodes[here] = make_leaf(ctx, &indices);
    here
}

/// Fits a single greedy tree over all samples with the given seed.
pub fn fit_tree(
    data: &FeatureMatrix,
    targets: &ForestTargets,
    cfg: &ForestConfig,
    seed: u64,
) -> Tree {
    let indices: Vec<usize> = (0..data.n_rows).collect();
    fit_tree_on(data, targets, cfg, seed, indices)
}

fn fit_tree_on(
    data: &FeatureMatrix,
    targets: &ForestTargets,
    cfg: &ForestConfig,
    seed: u64,
    indices: Vec<usize>,
) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ctx = NodeContext {
        data,
        targets: *targets,
        min_samples_leaf: cfg.min_samples_leaf,
        k_features: cfg.feature_subset.resolve(data.n_cols),
    };
    let mut nodes = Vec::new();
    grow(&ctx, &mut nodes, indices, &mut rng);
    Tree { nodes }
}

/// Fits `n_estimators` trees, each on a bootstrap draw of size
/// `min(max_samples, n)` with replacement. Per-tree seeds derive from the
/// forest seed, so the result is deterministic and trees fit in parallel.
pub fn fit_forest(
    data: &FeatureMatrix,
    targets: &ForestTargets,
    cfg: &ForestConfig,
) -> Result<Forest, ForestError> {
    if data.n_rows == 0 || targets.is_empty() {
        return Err(ForestError::EmptyData);
    }
    let mut seed_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tree_seeds: Vec<u64> = (0..cfg.n_estimators).map(|_| seed_rng.random()).collect();
    let sample_size = cfg.max_samples.min(data.n_rows);

    let trees: Vec<Tree> = tree_seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let indices: Vec<usize> =
                (0..sample_size).map(|_| rng.random_range(0..data.n_rows)).collect();
            let ctx_cfg = ForestConfig { seed, ..*cfg };
            // Reuse the already-advanced rng for feature subsets.
            let ctx = NodeContext {
                data,
                targets: *targets,
                min_samples_leaf: ctx_cfg.min_samples_leaf,
                k_features: ctx_cfg.feature_subset.resolve(data.n_cols),
            };
            let mut nodes = Vec::new();
            grow(&ctx, &mut nodes, indices, &mut rng);
            Tree { nodes }
        })
        .collect();

    Ok(Forest {
        task: targets.task(),
        n_features: data.n_cols,
        n_classes: match targets {
            ForestTargets::Classes { n_classes, .. } => *n_classes,
            ForestTargets::Values(_) => 0,
        },
        trees,
    })
}

/// Soft-vote prediction: the mean of per-tree leaf class distributions for
/// classification, the mean of leaf means for regression.
pub fn predict(forest: &Forest, row: &[f64]) -> Result<Prediction, ForestError> {
    if row.len() != forest.n_features {
        return Err(ForestError::SchemaMismatch { got: row.len(), want: forest.n_features });
    }
    match forest.task {
        Task::Classification => {
            let mut dist = vec![0.0; forest.n_classes];
            for tree in &forest.trees {
                if let Node::LeafClass { counts } = tree.leaf_for(row) {
                    let total: usize = counts.iter().sum();
                    for (d, &c) in dist.iter_mut().zip(counts) {
                        *d += c as f64 / total as f64;
                    }
                }
            }
            let k = forest.trees.len() as f64;
            dist.iter_mut().for_each(|d| *d /= k);
            Ok(Prediction::Distribution(dist))
        }
        Task::Regression => {
            let mut sum = 0.0;
            for tree in &forest.trees {
                if let Node::LeafValue { mean, .. } = tree.leaf_for(row) {
                    sum += mean;
                }
            }
            Ok(Prediction::Value(sum / forest.trees.len() as f64))
        }
    }
}

pub fn predict_class(forest: &Forest, row: &[f64]) -> Result<usize, ForestError> {
    match predict(forest, row)? {
        Prediction::Distribution(d) => Ok(crate::nn::argmax(&d)),
        Prediction::Value(_) => Err(ForestError::SchemaMismatch { got: 0, want: 0 }),
    }
}

pub fn predict_value(forest: &Forest, row: &[f64]) -> Result<f64, ForestError> {
    match predict(forest, row)? {
        Prediction::Value(v) => Ok(v),
        Prediction::Distribution(_) => Err(ForestError::SchemaMismatch { got: 0, want: 0 }),
    }
}

/// Mean impurity decrease per feature across all trees, weighted by the
/// fraction of samples reaching each node and normalized to sum to one.
/// Returned in descending score order.
pub fn feature_importance(forest: &Forest) -> Vec<(usize, f64)> {
    let mut scores = vec![0.0; forest.n_features];
    for tree in &forest.trees {
        let root_n = match tree.nodes.first() {
            Some(Node::Split { n, .. }) => *n as f64,
            _ => continue,
        };
        for node in &tree.nodes {
            if let Node::Split { rule, n, decrease, .. } = node {
                scores[rule.feature()] += (*n as f64 / root_n) * decrease;
            }
        }
    }
    let k = forest.trees.len().max(1) as f64;
    scores.iter_mut().for_each(|s| *s /= k);
    let total: f64 = scores.iter().sum();
    if total > 0.0 {
        scores.iter_mut().for_each(|s| *s /= total);
    }
    let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// The hyperparameter grid searched for forests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RfGrid {
    pub n_estimators: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
    pub max_samples: Vec<usize>,
    pub base: ForestConfig,
}

impl RfGrid {
    pub fn expand(&self) -> Vec<ForestConfig> {
        let mut out = Vec::new();
        for &max_samples in &self.max_samples {
            for &min_samples_leaf in &self.min_samples_leaf {
                for &n_estimators in &self.n_estimators {
                    out.push(ForestConfig {
                        n_estimators,
                        min_samples_leaf,
                        max_samples,
                        ..self.base
                    });
                }
            }
        }
        out
    }
}

/// The full published grid: 2 sample caps x 5 leaf minimums x 3 ensemble
/// sizes (30 configurations).
pub fn full_rf_grid(base: ForestConfig) -> RfGrid {
    RfGrid {
        n_estimators: vec![40, 60, 100],
        min_samples_leaf: vec![3, 5, 6, 10, 20],
        max_samples: vec![5_000, 10_000],
        base,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfCvRow {
    pub config_index: usize,
    pub n_estimators: usize,
    pub min_samples_leaf: usize,
    pub max_samples: usize,
    /// Per-fold metric: accuracy for classification, RMSE for regression.
    pub fold_metrics: Vec<f64>,
    pub mean_metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfSearchResult {
    pub best_index: usize,
    pub table: Vec<RfCvRow>,
}

/// K-fold cross-validated grid search. Folds come from one seeded shuffle
/// shared by every grid point; the best configuration maximizes accuracy
/// (classification) or minimizes RMSE (regression).
pub fn grid_search_rf(
    data: &FeatureMatrix,
    targets: &ForestTargets,
    grid: &[ForestConfig],
    folds: usize,
    seed: u64,
) -> Result<RfSearchResult, ForestError> {
    if grid.is_empty() {
        return Err(ForestError::EmptyGrid);
    }
    let n = data.n_rows;
    if n < folds {
        return Err(ForestError::TooFewSamples { folds, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let fold_of = |i: usize| i * folds / n; // balanced contiguous chunks

    let classification = matches!(targets, ForestTargets::Classes { .. });
    let table: Vec<RfCvRow> = grid
        .par_iter()
        .enumerate()
        .map(|(ci, cfg)| {
            let mut fold_metrics = Vec::with_capacity(folds);
            for fold in 0..folds {
                let (train_idx, valid_idx): (Vec<usize>, Vec<usize>) =
                    order.iter().enumerate().fold((vec![], vec![]), |mut acc, (pos, &i)| {
                        if fold_of(pos) == fold {
                            acc.1.push(i);
                        } else {
                            acc.0.push(i);
                        }
                        acc
                    });
                let train_data = data.subset(&train_idx);
                let metric = match targets {
                    ForestTargets::Classes { labels, n_classes } => {
                        let train_labels: Vec<usize> =
                            train_idx.iter().map(|&i| labels[i]).collect();
                        let t =
                            ForestTargets::Classes { labels: &train_labels, n_classes: *n_classes };
                        let forest = fit_forest(&train_data, &t, cfg).expect("non-empty fold");
                        let hits = valid_idx
                            .iter()
                            .filter(|&&i| {
                                predict_class(&forest, data.row(i)).expect("schema") == labels[i]
                            })
                            .count();
                        hits as f64 / valid_idx.len() as f64
                    }
                    ForestTargets::Values(values) => {
                        let train_values: Vec<f64> = train_idx.iter().map(|&i| values[i]).collect();
                        let t = ForestTargets::Values(&train_values);
                        let forest = fit_forest(&train_data, &t, cfg).expect("non-empty fold");
                        let sq: f64 = valid_idx
                            .iter()
                            .map(|&i| {
                                let p = predict_value(&forest, data.row(i)).expect("schema");
                                (p - values[i]) * (p - values[i])
                            })
                            .sum();
                        (sq / valid_idx.len() as f64).sqrt()
                    }
                };
                fold_metrics.push(metric);
            }
            let mean_metric = fold_metrics.iter().sum::<f64>() / fold_metrics.len() as f64;
            RfCvRow {
                config_index: ci,
                n_estimators: cfg.n_estimators,
                min_samples_leaf: cfg.min_samples_leaf,
                max_samples: cfg.max_samples,
                fold_metrics,
                mean_metric,
            }
        })
        .collect();

    let mut best = 0;
    for (i, row) in table.iter().enumerate().skip(1) {
        let better = if classification {
            row.mean_metric > table[best].mean_metric
        } else {
            row.mean_metric < table[best].mean_metric
        };
        if better {
            best = i;
        }
    }
    Ok(RfSearchResult { best_index: best, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[0, 0, 0]), 0.0);
        assert_eq!(gini(&[0, 0, 1, 1]), 0.5);
        assert!((gini(&[0, 1, 2]) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rss_examples() {
        assert_eq!(rss(&[5.0, 5.0, 5.0]), 0.0);
        assert_eq!(rss(&[0.0, 10.0]), 50.0);
        assert_eq!(rss(&[1.0, 2.0, 3.0]), 2.0);
    }

    #[test]
    fn separable_data_splits_between_the_classes() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let labels: Vec<usize> = (0..10).map(|i| usize::from(i >= 5)).collect();
        let data = FeatureMatrix::from_rows(&rows);
        let targets = ForestTargets::Classes { labels: &labels, n_classes: 2 };
        let cfg = ForestConfig {
            min_samples_leaf: 1,
            feature_subset: FeatureSubset::All,
            ..ForestConfig::classification(0)
        };
        let tree = fit_tree(&data, &targets, &cfg, 0);
        match &tree.nodes[0] {
            Node::Split { rule: SplitRule::Threshold { feature, threshold }, .. } => {
                assert_eq!(*feature, 0);
                assert!(*threshold > 4.0 && *threshold < 5.0);
            }
            other => panic!("expected a threshold split at the root, got {other:?}"),
        }
    }

    #[test]
    fn pure_input_yields_a_single_leaf() {
        let data = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let labels = vec![1, 1, 1];
        let targets = ForestTargets::Classes { labels: &labels, n_classes: 2 };
        let tree = fit_tree(&data, &targets, &ForestConfig::classification(0), 0);
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.nodes[0], Node::LeafClass { counts: vec![0, 3] });
    }

    #[test]
    fn categorical_one_vs_rest_split() {
        // Category 2 of a 3-valued feature carries all of class 1.
        let rows: Vec<Vec<f64>> =
            [0.0, 1.0, 2.0, 0.0, 1.0, 2.0, 2.0, 0.0].iter().map(|&v| vec![v]).collect();
        let labels: Vec<usize> = rows.iter().map(|r| usize::from(r[0] == 2.0)).collect();
        let mut data = FeatureMatrix::new(1, vec![FeatureKind::Categorical { n: 3 }]);
        for r in &rows {
            data.push_row(r);
        }
        let targets = ForestTargets::Classes { labels: &labels, n_classes: 2 };
        let cfg = ForestConfig {
            min_samples_leaf: 1,
            feature_subset: FeatureSubset::All,
            ..ForestConfig::classification(0)
        };
        let tree = fit_tree(&data, &targets, &cfg, 0);
        match &tree.nodes[0] {
            Node::Split { rule: SplitRule::Category { feature: 0, category: 2 }, decrease, .. } => {
                assert!(*decrease > 0.0);
            }
            other => panic!("expected one-vs-rest split on category 2, got {other:?}"),
        }
    }

    fn toy_classification(n: usize) -> (FeatureMatrix, Vec<usize>) {
        // label = x0 > 0.5, with x1 as noise.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let x0: f64 = rng.random();
            let x1: f64 = rng.random();
            rows.push(vec![x0, x1]);
            labels.push(usize::from(x0 > 0.5));
        }
        (FeatureMatrix::from_rows(&rows), labels)
    }

    #[test]
    fn forest_has_requested_tree_count_and_is_deterministic() {
        let (data, labels) = toy_classification(200);
        let targets = ForestTargets::Classes { labels: &labels, n_classes: 2 };
        let cfg = ForestConfig { n_estimators: 40, ..ForestConfig::classification(7) };
        let f1 = fit_forest(&data, &targets, &cfg).unwrap();
        let f2 = fit_forest(&data, &targets, &cfg).unwrap();
        assert_eq!(f1.trees.len(), 40);
        assert_eq!(f1, f2);
        for i in 0..data.n_rows {
            assert_eq!(
                predict_class(&f1, data.row(i)).unwrap(),
                predict_class(&f2, data.row(i)).unwrap()
            );
        }
    }

    #[test]
    fn bootstrap_size_is_capped_by_population() {
        let (data, labels) = toy_classification(60);
        let targets = ForestTargets::Classes { labels: &labels, n_classes: 2 };
        let cfg = ForestConfig {
            n_estimators: 3,
            max_samples: 5000,
            min_samples_leaf: 1,
            ..ForestConfig::classification(1)
        };
        let forest = fit_forest(&data, &targets, &cfg).unwrap();
        for tree in &forest.trees {
            if let Node::Split { n, .. } = &tree.nodes[0] {
                assert_eq!(*n, 60);
            }
        }
    }

    #[test]
    fn soft_vote_distribution_sums_to_one() {
        let (data, labels) = toy_classification(150);
        let targets = ForestTargets::Classes { labels: &labels, n_classes: 2 };
        let forest = fit_forest(&data, &targets, &ForestConfig::classification(3)).unwrap();
        for i in 0..10 {
            let Prediction::Distribution(d) = predict(&forest, data.row(i)).unwrap() else {
                panic!("classification forest must yield distributions");
            };
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pure_data_forest_matches_single_tree() {
        let data = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let labels = vec![0, 0, 0, 0];
        let targets = ForestTargets::Classes { labels: &labels, n_classes: 2 };
        let cfg = ForestConfig { n_estimators: 10, ..ForestConfig::classification(5) };
        let forest = fit_forest(&data, &targets, &cfg).unwrap();
        let tree = fit_tree(&data, &targets, &cfg, 123);
        for i in 0..data.n_rows {
            let from_forest = predict_class(&forest, data.row(i)).unwrap();
            let Node::LeafClass { counts } = tree.leaf_for(data.row(i)) else { panic!() };
            assert_eq!(from_forest, crate::nn::argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>()));
        }
    }

    #[test]
    fn regression_prediction_is_mean_of_tree_means() {
        let data = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]);
        let forest = Forest {
            task: Task::Regression,
            n_features: 1,
            n_classes: 0,
            trees: vec![
                Tree { nodes: vec![Node::LeafValue { mean: 10.0, n: 1 }] },
                Tree { nodes: vec![Node::LeafValue { mean: 20.0, n: 1 }] },
            ],
        };
        assert_eq!(predict_value(&forest, data.row(0)).unwrap(), 15.0);
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let (data, labels) = toy_classification(50);
        let targets = ForestTargets::Classes { labels: &labels, n_classes: 2 };
        let forest = fit_forest(&data, &targets, &ForestConfig::classification(0)).unwrap();
        assert!(matches!(
            predict(&forest, &[1.0, 2.0, 3.0]),
            Err(ForestError::SchemaMismatch { got: 3, want: 2 })
        ));
    }

    #[test]
    fn informative_feature_dominates_importance() {
        // Only feature 0 carries signal; 1 and 2 are noise.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..400 {
            let x0: f64 = rng.random();
            rows.push(vec![x0, rng.random(), rng.random()]);
            labels.push(usize::from(x0 > 0.5));
        }
        let data = FeatureMatrix::from_rows(&rows);
        let targets = ForestTargets::Classes { labels: &labels, n_classes: 2 };
        let forest = fit_forest(&data, &targets, &ForestConfig::classification(2)).unwrap();
        let ranked = feature_importance(&forest);
        assert_eq!(ranked[0].0, 0);
        assert!(ranked[0].1 > 0.9, "signal feature score {}", ranked[0].1);
        let total: f64 = ranked.iter().map(|(_, s)| s).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn leaf_counts_respect_min_samples_leaf() {
        let (data, labels) = toy_classification(300);
        let targets = ForestTargets::Classes { labels: &labels, n_classes: 2 };
        let cfg = ForestConfig { min_samples_leaf: 10, ..ForestConfig::classification(4) };
        let tree = fit_tree(&data, &targets, &cfg, 17);
        for node in &tree.nodes {
            if let Node::LeafClass { counts } = node {
                assert!(counts.iter().sum::<usize>() >= 10);
            }
        }
    }

    #[test]
    fn full_grid_has_30_rows_and_cv_table_matches() {
        let (data, labels) = toy_classification(120);
        let targets = ForestTargets::Classes { labels: &labels, n_classes: 2 };
        let mut grid = full_rf_grid(ForestConfig::classification(0));
        // Desk scale: tiny ensembles, same grid shape.
        grid.n_estimators = vec![2, 3, 4];
        let configs = grid.expand();
        assert_eq!(full_rf_grid(ForestConfig::classification(0)).expand().len(), 30);
        let result = grid_search_rf(&data, &targets, &configs, 5, 42).unwrap();
        assert_eq!(result.table.len(), 30);
        for row in &result.table {
            assert_eq!(row.fold_metrics.len(), 5);
        }
    }

    #[test]
    fn singleton_grid_returns_that_config() {
        let (data, labels) = toy_classification(60);
        let targets = ForestTargets::Classes { labels: &labels, n_classes: 2 };
        let cfg =
            ForestConfig { n_estimators: 5, ..ForestConfig::classification(8) };
        let result = grid_search_rf(&data, &targets, &[cfg], 5, 1).unwrap();
        assert_eq!(result.best_index, 0);
        assert_eq!(result.table.len(), 1);
    }

    #[test]
    fn stronger_leaf_minimum_has_smaller_overfit_gap() {
        // Noisy regression: y = x + heavy noise. A 20-sample leaf minimum
        // overfits less than a 3-sample minimum.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut rows = Vec::new();
        let mut values = Vec::new();
        for _ in 0..500 {
            let x: f64 = rng.random();
            let noise: f64 = rand_distr::Distribution::sample(
                &rand_distr::Normal::new(0.0, 1.0).unwrap(),
                &mut rng,
            );
            rows.push(vec![x]);
            values.push(x + noise);
        }
        let data = FeatureMatrix::from_rows(&rows);
        let n_train = 350;
        let train_data = data.subset(&(0..n_train).collect::<Vec<_>>());
        let train_vals = values[..n_train].to_vec();

        let gap = |msl: usize| {
            let cfg = ForestConfig {
                n_estimators: 20,
                min_samples_leaf: msl,
                feature_subset: FeatureSubset::All,
                ..ForestConfig::regression(9)
            };
            let t = ForestTargets::Values(&train_vals);
            let forest = fit_forest(&train_data, &t, &cfg).unwrap();
            let rmse_on = |lo: usize, hi: usize| {
                let sq: f64 = (lo..hi)
                    .map(|i| {
                        let p = predict_value(&forest, data.row(i)).unwrap();
                        (p - values[i]) * (p - values[i])
                    })
                    .sum();
                (sq / (hi - lo) as f64).sqrt()
            };
            rmse_on(n_train, 500) - rmse_on(0, n_train)
        };
        assert!(gap(20) < gap(3));
    }
}
