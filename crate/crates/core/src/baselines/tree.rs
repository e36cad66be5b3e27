//! Greedy axis-aligned decision trees shared by the forest and boosting models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows go left when `x[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
    /// Class counts `[n0, n1]` of the training rows that reached the leaf.
    ClassLeaf { counts: [usize; 2] },
    ScoreLeaf { value: f64 },
}

impl TreeNode {
    pub fn leaf_for<'a>(&'a self, x: &[f64]) -> &'a TreeNode {
        let mut node = self;
        while let TreeNode::Split { feature, threshold, left, right } = node {
            node = if x[*feature] <= *threshold { left } else { right };
        }
        node
    }

    /// Majority class of the reached leaf (ties → 0); 0 for score leaves.
    pub fn predict_class(&self, x: &[f64]) -> u8 {
        match self.leaf_for(x) {
            TreeNode::ClassLeaf { counts } => u8::from(counts[1] > counts[0]),
            _ => 0,
        }
    }

    /// Score of the reached leaf; 0 for class leaves.
    pub fn predict_score(&self, x: &[f64]) -> f64 {
        match self.leaf_for(x) {
            TreeNode::ScoreLeaf { value } => *value,
            _ => 0.0,
        }
    }

    /// Number of splits on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
            _ => 0,
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
            _ => 1,
        }
    }
}

/// Rows and labels, validated once.
pub(crate) fn check_rows<T>(x: &[Vec<f64>], y: &[T]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::InsufficientData("tree training needs at least one row".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} targets", x.len(), y.len())));
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::Shape("rows have no features".into()));
    }
    for (i, r) in x.iter().enumerate() {
        if r.len() != d {
            return Err(Error::Shape(format!("row {i} has {} features, expected {d}", r.len())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("row {i} has a non-finite feature")));
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Gains below this are treated as no improvement.
const MIN_GAIN: f64 = 1e-12;

/// `idx` sorted by feature value, ties by row index.
fn sorted_by(x: &[Vec<f64>], idx: &[usize], feature: usize) -> Vec<usize> {
    let mut s = idx.to_vec();
    s.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]).then(a.cmp(&b)));
    s
}

/// Scans every boundary between distinct values of each candidate feature and
/// keeps the best `gain(left_stats, right_stats)`. Earlier features and lower
/// thresholds win ties.
fn best_split<S, F>(x: &[Vec<f64>], idx: &[usize], features: &[usize], stat_of: impl Fn(usize) -> S, gain: F) -> Option<SplitChoice>
where
    S: Copy + Default + std::ops::AddAssign + std::ops::Sub<Output = S>,
    F: Fn(S, S) -> f64,
{
    let mut total = S::default();
    for &i in idx {
        total += stat_of(i);
    }
    let mut best: Option<SplitChoice> = None;
    for &f in features {
        let order = sorted_by(x, idx, f);
        let mut left = S::default();
        for k in 0..order.len().saturating_sub(1) {
            left += stat_of(order[k]);
            let (lo, hi) = (x[order[k]][f], x[order[k + 1]][f]);
            if lo == hi {
                continue;
            }
            let g = gain(left, total - left);
            if g > MIN_GAIN && best.is_none_or(|b| g > b.gain) {
                best = Some(SplitChoice { feature: f, threshold: lo + (hi - lo) / 2.0, gain: g });
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct ClassStat([f64; 2]);

impl std::ops::AddAssign for ClassStat {
    fn add_assign(&mut self, o: Self) {
        self.0[0] += o.0[0];
        self.0[1] += o.0[1];
    }
}

impl std::ops::Sub for ClassStat {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        ClassStat([self.0[0] - o.0[0], self.0[1] - o.0[1]])
    }
}

pub fn gini(n0: f64, n1: f64) -> f64 {
    let n = n0 + n1;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (n0 / n, n1 / n);
    1.0 - p0 * p0 - p1 * p1
}

/// Best Gini-impurity decrease over `features`, weighted by child sizes.
pub fn best_gini_split(x: &[Vec<f64>], y: &[u8], idx: &[usize], features: &[usize]) -> Option<SplitChoice> {
    let one = |i: usize| if y[i] == 1 { ClassStat([0.0, 1.0]) } else { ClassStat([1.0, 0.0]) };
    let n = idx.len() as f64;
    let mut tot = ClassStat::default();
    for &i in idx {
        tot += one(i);
    }
    let parent = gini(tot.0[0], tot.0[1]);
    best_split(x, idx, features, one, |l, r| {
        let (nl, nr) = (l.0[0] + l.0[1], r.0[0] + r.0[1]);
        parent - (nl / n) * gini(l.0[0], l.0[1]) - (nr / n) * gini(r.0[0], r.0[1])
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct SumStat {
    n: f64,
    s: f64,
}

impl std::ops::AddAssign for SumStat {
    fn add_assign(&mut self, o: Self) {
        self.n += o.n;
        self.s += o.s;
    }
}

impl std::ops::Sub for SumStat {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        SumStat { n: self.n - o.n, s: self.s - o.s }
    }
}

/// Best squared-error decrease for regression targets `r`.
pub fn best_sse_split(x: &[Vec<f64>], r: &[f64], idx: &[usize], features: &[usize]) -> Option<SplitChoice> {
    let stat = |i: usize| SumStat { n: 1.0, s: r[i] };
    let mut tot = SumStat::default();
    for &i in idx {
        tot += stat(i);
    }
    let parent = tot.s * tot.s / tot.n;
    best_split(x, idx, features, stat, |l, rt| l.s * l.s / l.n + rt.s * rt.s / rt.n - parent)
}

fn partition(x: &[Vec<f64>], idx: &[usize], s: &SplitChoice) -> (Vec<usize>, Vec<usize>) {
    idx.iter().partition(|&&i| x[i][s.feature] <= s.threshold)
}

/// Gini tree. `pick_features` returns the candidate features for each node.
pub fn grow_class_tree(
    x: &[Vec<f64>],
    y: &[u8],
    idx: &[usize],
    depth: usize,
    max_depth: usize,
    pick_features: &mut dyn FnMut() -> Vec<usize>,
) -> TreeNode {
    let n1 = idx.iter().filter(|&&i| y[i] == 1).count();
    let leaf = TreeNode::ClassLeaf { counts: [idx.len() - n1, n1] };
    if depth >= max_depth || n1 == 0 || n1 == idx.len() {
        return leaf;
    }
    let features = pick_features();
    match best_gini_split(x, y, idx, &features) {
        None => leaf,
        Some(s) => {
            let (l, r) = partition(x, idx, &s);
            TreeNode::Split {
                feature: s.feature,
                threshold: s.threshold,
                left: Box::new(grow_class_tree(x, y, &l, depth + 1, max_depth, pick_features)),
                right: Box::new(grow_class_tree(x, y, &r, depth + 1, max_depth, pick_features)),
            }
        }
    }
}

/// Squared-error tree on `r`; each leaf's value comes from `leaf_value(rows)`.
pub fn grow_regression_tree(
    x: &[Vec<f64>],
    r: &[f64],
    idx: &[usize],
    depth: usize,
    max_depth: usize,
    leaf_value: &dyn Fn(&[usize]) -> f64,
) -> TreeNode {
    let all: Vec<usize> = (0..x[0].len()).collect();
    let split = if depth < max_depth && idx.len() >= 2 { best_sse_split(x, r, idx, &all) } else { None };
    match split {
        None => TreeNode::ScoreLeaf { value: leaf_value(idx) },
        Some(s) => {
            let (li, ri) = partition(x, idx, &s);
            TreeNode::Split {
                feature: s.feature,
                threshold: s.threshold,
                left: Box::new(grow_regression_tree(x, r, &li, depth + 1, max_depth, leaf_value)),
                right: Box::new(grow_regression_tree(x, r, &ri, depth + 1, max_depth, leaf_value)),
            }
        }
    }
}
