//! Bagged Gini decision trees over binary per-channel decisions.

use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::Label;
use crate::error::{Error, Result};

/// Subjects by channels, entries in {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionMatrix {
    column_names: Vec<String>,
    rows: Vec<Vec<u8>>,
}

impl PredictionMatrix {
    /// Column names must be unique; every row must be binary and full width.
    pub fn new(column_names: Vec<String>, rows: Vec<Vec<u8>>) -> Result<Self> {
        if column_names.is_empty() {
            return Err(Error::invalid("prediction matrix needs at least one column"));
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate column name {name:?}")));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != column_names.len() {
                return Err(Error::invalid(format!(
                    "row {i} has {} entries, expected {}",
                    row.len(),
                    column_names.len()
                )));
            }
            if row.iter().any(|&v| v > 1) {
                return Err(Error::invalid(format!("row {i} has a non-binary entry")));
            }
        }
        Ok(Self { column_names, rows })
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    /// Keeps the listed columns in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.n_cols()) {
            return Err(Error::invalid(format!("column index {c} out of range")));
        }
        let names = cols.iter().map(|&c| self.column_names[c].clone()).collect();
        let rows = self
            .rows
            .iter()
            .map(|r| cols.iter().map(|&c| r[c]).collect())
            .collect();
        Self::new(names, rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// `None` means `ceil(sqrt(n_cols))`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
            features_per_split: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        label: Label,
        /// `[control, mtbi]` bootstrap counts.
        counts: [usize; 2],
    },
    /// Rows with `feature == 0` go left.
    Split {
        feature: usize,
        left: usize,
        right: usize,
    },
}

/// Nodes in preorder; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[u8]) -> Label {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { label, .. } => return *label,
                Node::Split {
                    feature,
                    left,
                    right,
                } => at = if row[*feature] == 0 { *left } else { *right },
            }
        }
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_trees: usize,
    pub max_depth: usize,
    pub features_per_split: usize,
    pub seed: u64,
    pub column_names: Vec<String>,
    /// Accuracy of out-of-bag majority votes over subjects left out by at
    /// least one tree.
    pub oob_accuracy: Option<f64>,
}

fn class_index(l: Label) -> usize {
    match l {
        Label::Control => 0,
        Label::Mtbi => 1,
    }
}

fn majority(counts: [usize; 2]) -> Label {
    if counts[1] > counts[0] {
        Label::Mtbi
    } else {
        Label::Control
    }
}

fn gini(c: [usize; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = c[0] as f64 / n;
    2.0 * p * (1.0 - p)
}

struct Grower<'a> {
    rows: &'a [Vec<u8>],
    names: &'a [String],
    labels: &'a [Label],
    max_depth: usize,
    mtry: usize,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn counts(&self, idx: &[usize]) -> [usize; 2] {
        let mut c = [0; 2];
        for &i in idx {
            c[class_index(self.labels[i])] += 1;
        }
        c
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.counts(&idx);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf {
            label: majority(counts),
            counts,
        });
        if depth >= self.max_depth || counts[0] == 0 || counts[1] == 0 {
            return at;
        }
        let p = self.names.len();
        let parent = gini(counts);
        let n = idx.len() as f64;
        let mut best: Option<(f64, usize)> = None;
        for f in index::sample(rng, p, self.mtry) {
            let mut c = [[0usize; 2]; 2];
            for &i in &idx {
                c[self.rows[i][f] as usize][class_index(self.labels[i])] += 1;
            }
            let (nl, nr) = ((c[0][0] + c[0][1]) as f64, (c[1][0] + c[1][1]) as f64);
            if nl == 0.0 || nr == 0.0 {
                continue;
            }
            let gain = parent - (nl / n) * gini(c[0]) - (nr / n) * gini(c[1]);
            if gain <= 0.0 {
                continue;
            }
            // equal gains resolve by column name, so column order is irrelevant
            let better = match best {
                None => true,
                Some((g, b)) => gain > g || (gain == g && self.names[f] < self.names[b]),
            };
            if better {
                best = Some((gain, f));
            }
        }
        let Some((_, feature)) = best else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.rows[i][feature] == 0);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature,
            left,
            right,
        };
        at
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

/// Fits `n_trees` bootstrap trees. Each tree draws its bootstrap sample and
/// its per-node feature subsets from its own stream of the seeded generator.
pub fn fit_forest(z: &PredictionMatrix, y: &[Label], config: &ForestConfig) -> Result<ForestModel> {
    if z.n_rows() != y.len() {
        return Err(Error::invalid(format!(
            "{} rows but {} labels",
            z.n_rows(),
            y.len()
        )));
    }
    let n_ctl = y.iter().filter(|&&l| l == Label::Control).count();
    let n_mtbi = y.len() - n_ctl;
    if n_ctl == 0 || n_mtbi == 0 {
        return Err(Error::invalid("forest needs labels from both classes"));
    }
    if n_ctl < 2 || n_mtbi < 2 {
        return Err(Error::InsufficientData(
            "forest needs at least 2 subjects per class".into(),
        ));
    }
    if config.n_trees == 0 {
        return Err(Error::invalid("n_trees must be positive"));
    }
    let p = z.n_cols();
    let mtry = config
        .features_per_split
        .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize);
    if mtry == 0 || mtry > p {
        return Err(Error::invalid(format!(
            "features_per_split must be in 1..={p}, got {mtry}"
        )));
    }
    let n = y.len();

    let fitted: Vec<(Tree, Vec<bool>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(config.seed, t);
            let boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut in_bag = vec![false; n];
            for &i in &boot {
                in_bag[i] = true;
            }
            let mut g = Grower {
                rows: z.rows(),
                names: z.column_names(),
                labels: y,
                max_depth: config.max_depth,
                mtry,
                nodes: Vec::new(),
            };
            g.grow(boot, 0, &mut rng);
            (Tree { nodes: g.nodes }, in_bag)
        })
        .collect();

    let mut votes = vec![[0usize; 2]; n];
    for (tree, in_bag) in &fitted {
        for i in (0..n).filter(|&i| !in_bag[i]) {
            votes[i][class_index(tree.predict_row(&z.rows()[i]))] += 1;
        }
    }
    let scored: Vec<usize> = (0..n).filter(|&i| votes[i][0] + votes[i][1] > 0).collect();
    let oob_accuracy = (!scored.is_empty()).then(|| {
        let correct = scored.iter().filter(|&&i| majority(votes[i]) == y[i]).count();
        correct as f64 / scored.len() as f64
    });

    Ok(ForestModel {
        trees: fitted.into_iter().map(|(t, _)| t).collect(),
        n_trees: config.n_trees,
        max_depth: config.max_depth,
        features_per_split: mtry,
        seed: config.seed,
        column_names: z.column_names().to_vec(),
        oob_accuracy,
    })
}

/// Majority vote across trees; an even split goes to control.
pub fn predict_forest(model: &ForestModel, z: &PredictionMatrix) -> Result<Vec<Label>> {
    if z.n_cols() != model.column_names.len() {
        return Err(Error::invalid(format!(
            "model expects {} columns, matrix has {}",
            model.column_names.len(),
            z.n_cols()
        )));
    }
    Ok(z
        .rows()
        .iter()
        .map(|row| {
            let mut v = [0usize; 2];
            for t in &model.trees {
                v[class_index(t.predict_row(row))] += 1;
            }
            majority(v)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("c{j:03}")).collect()
    }

    fn random_matrix(n: usize, p: usize, seed: u64) -> Vec<Vec<u8>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..p).map(|_| rng.random_range(0..2u8)).collect())
            .collect()
    }

    fn balanced_labels(n: usize) -> Vec<Label> {
        (0..n)
            .map(|i| if i % 2 == 0 { Label::Control } else { Label::Mtbi })
            .collect()
    }

    fn with_perfect_column(n: usize, p: usize, col: usize, seed: u64) -> (PredictionMatrix, Vec<Label>) {
        let y = balanced_labels(n);
        let mut rows = random_matrix(n, p, seed);
        for (r, l) in rows.iter_mut().zip(&y) {
            r[col] = class_index(*l) as u8;
        }
        (PredictionMatrix::new(names(p), rows).unwrap(), y)
    }

    #[test]
    fn perfect_column_fits_training_data() {
        let (z, y) = with_perfect_column(120, 10, 3, 1);
        let cfg = ForestConfig {
            n_trees: 25,
            ..ForestConfig::default()
        };
        let m = fit_forest(&z, &y, &cfg).unwrap();
        assert_eq!(predict_forest(&m, &z).unwrap(), y);
        assert!(m.oob_accuracy.unwrap() >= 0.95);
    }

    #[test]
    fn random_labels_have_chance_oob() {
        let z = PredictionMatrix::new(names(20), random_matrix(400, 20, 5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut y = balanced_labels(400);
        use rand::seq::SliceRandom;
        y.shuffle(&mut rng);
        let m = fit_forest(&z, &y, &ForestConfig::default()).unwrap();
        let oob = m.oob_accuracy.unwrap();
        assert!((0.35..=0.65).contains(&oob), "oob={oob}");
    }

    #[test]
    fn same_seed_same_forest() {
        let z = PredictionMatrix::new(names(8), random_matrix(80, 8, 2)).unwrap();
        let y = balanced_labels(80);
        let cfg = ForestConfig {
            n_trees: 15,
            seed: 42,
            ..ForestConfig::default()
        };
        let a = fit_forest(&z, &y, &cfg).unwrap();
        let b = fit_forest(&z, &y, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(predict_forest(&a, &z).unwrap(), predict_forest(&b, &z).unwrap());
    }

    #[test]
    fn single_tree_forest_is_that_tree() {
        let z = PredictionMatrix::new(names(6), random_matrix(50, 6, 3)).unwrap();
        let y = balanced_labels(50);
        let cfg = ForestConfig {
            n_trees: 1,
            ..ForestConfig::default()
        };
        let m = fit_forest(&z, &y, &cfg).unwrap();
        let direct: Vec<Label> = z.rows().iter().map(|r| m.trees[0].predict_row(r)).collect();
        assert_eq!(predict_forest(&m, &z).unwrap(), direct);
    }

    #[test]
    fn column_permutation_invariance() {
        let p = 7;
        let z = PredictionMatrix::new(names(p), random_matrix(90, p, 4)).unwrap();
        let y: Vec<Label> = z
            .rows()
            .iter()
            .map(|r| if r[0] + r[2] + r[5] >= 2 { Label::Mtbi } else { Label::Control })
            .collect();
        let perm = [4, 6, 0, 2, 1, 5, 3];
        let zp = z.select_columns(&perm).unwrap();
        let cfg = ForestConfig {
            n_trees: 1,
            features_per_split: Some(p),
            seed: 11,
            ..ForestConfig::default()
        };
        let a = predict_forest(&fit_forest(&z, &y, &cfg).unwrap(), &z).unwrap();
        let b = predict_forest(&fit_forest(&zp, &y, &cfg).unwrap(), &zp).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn depth_limit_respected() {
        let z = PredictionMatrix::new(names(12), random_matrix(200, 12, 8)).unwrap();
        let y = balanced_labels(200);
        for max_depth in [0, 1, 3] {
            let cfg = ForestConfig {
                n_trees: 10,
                max_depth,
                ..ForestConfig::default()
            };
            let m = fit_forest(&z, &y, &cfg).unwrap();
            assert!(m.trees.iter().all(|t| t.depth() <= max_depth));
        }
    }

    #[test]
    fn input_errors() {
        let z = PredictionMatrix::new(names(3), random_matrix(10, 3, 0)).unwrap();
        assert!(matches!(
            fit_forest(&z, &[Label::Control; 10], &ForestConfig::default()),
            Err(Error::InvalidInput(_))
        ));
        let m = fit_forest(&z, &balanced_labels(10), &ForestConfig::default()).unwrap();
        let wide = PredictionMatrix::new(names(4), random_matrix(5, 4, 0)).unwrap();
        assert!(predict_forest(&m, &wide).is_err());
        assert!(PredictionMatrix::new(names(2), vec![vec![0, 2]]).is_err());
        assert!(PredictionMatrix::new(vec!["a".into(), "a".into()], vec![]).is_err());
    }
}
