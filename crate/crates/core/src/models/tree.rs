//! CART regression trees with exact, presorted split search.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::FeatureMatrix;

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    feature: u32,
    threshold: f64,
    value: f64,
    right: u32,
}

/// Binary regression tree in preorder: the left child of node `i` is `i + 1`.
/// Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

/// One serialized node: `feature` is `None` for leaves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreorderNode {
    pub feature: Option<u32>,
    pub threshold: f64,
    pub value: f64,
}

impl Tree {
    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let node = &self.nodes[i];
            if node.feature == LEAF {
                return node.value;
            }
            i = if x[node.feature as usize] <= node.threshold {
                i + 1
            } else {
                node.right as usize
            };
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> (usize, usize) {
            let n = &t.nodes[i];
            if n.feature == LEAF {
                return (0, i + 1);
            }
            let (dl, next) = walk(t, i + 1);
            let (dr, end) = walk(t, next);
            (1 + dl.max(dr), end)
        }
        walk(self, 0).0
    }

    pub fn preorder(&self) -> Vec<PreorderNode> {
        self.nodes
            .iter()
            .map(|n| PreorderNode {
                feature: (n.feature != LEAF).then_some(n.feature),
                threshold: n.threshold,
                value: n.value,
            })
            .collect()
    }

    /// Rebuilds child links from a preorder listing; `None` if malformed.
    pub fn from_preorder(list: &[PreorderNode]) -> Option<Tree> {
        fn link(list: &[PreorderNode], i: usize, out: &mut Vec<Node>) -> Option<usize> {
            let p = list.get(i)?;
            match p.feature {
                None => {
                    out[i] = Node { feature: LEAF, threshold: p.threshold, value: p.value, right: 0 };
                    Some(i + 1)
                }
                Some(f) if f != LEAF => {
                    let right = link(list, i + 1, out)?;
                    let end = link(list, right, out)?;
                    out[i] = Node { feature: f, threshold: p.threshold, value: p.value, right: right as u32 };
                    Some(end)
                }
                Some(_) => None,
            }
        }
        let mut nodes = vec![Node { feature: LEAF, threshold: 0.0, value: 0.0, right: 0 }; list.len()];
        let end = link(list, 0, &mut nodes)?;
        (end == list.len()).then_some(Tree { nodes })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features considered per split; `None` means all.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: usize::MAX,
            min_samples_leaf: 1,
            max_features: None,
            seed: 0,
        }
    }
}

/// Feature columns of a fixed sample list with per-feature sort orders,
/// reusable across trees fitted to different targets.
pub struct Presorted {
    /// columns[f][s] = value of feature f for sample s
    columns: Vec<Vec<f64>>,
    /// per feature, sample ids sorted by value
    order: Vec<Vec<u32>>,
}

impl Presorted {
    /// Rows listed in `samples` (repeats allowed) become samples 0.. in order.
    pub fn new(x: &FeatureMatrix, samples: &[usize]) -> Self {
        let columns: Vec<Vec<f64>> = (0..x.n_cols())
            .map(|f| samples.iter().map(|&i| x.get(i, f)).collect())
            .collect();
        let n = samples.len() as u32;
        let order = columns
            .iter()
            .map(|col| {
                let mut ids: Vec<u32> = (0..n).collect();
                ids.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                ids
            })
            .collect();
        Presorted { columns, order }
    }

    pub fn n_samples(&self) -> usize {
        self.order.first().map_or(0, Vec::len)
    }
}

struct Builder<'a> {
    columns: &'a [Vec<f64>],
    y: &'a [f64],
    /// nodes own contiguous ranges of every feature's order
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    params: &'a TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

/// Fits a tree on the rows listed in `samples` (repeats allowed).
pub fn fit_tree(x: &FeatureMatrix, y: &[f64], samples: &[usize], params: &TreeParams) -> Tree {
    let ys: Vec<f64> = samples.iter().map(|&i| y[i]).collect();
    fit_presorted(&Presorted::new(x, samples), &ys, params)
}

/// Fits a tree where `y[s]` is the target of presorted sample `s`.
pub fn fit_presorted(data: &Presorted, y: &[f64], params: &TreeParams) -> Tree {
    let n = data.n_samples();
    if n == 0 {
        return Tree {
            nodes: vec![Node { feature: LEAF, threshold: 0.0, value: 0.0, right: 0 }],
        };
    }
    let mut b = Builder {
        columns: &data.columns,
        y,
        order: data.order.clone(),
        goes_left: vec![false; n],
        scratch: Vec::with_capacity(n),
        params,
        rng: ChaCha8Rng::seed_from_u64(params.seed),
        nodes: Vec::new(),
    };
    b.grow(0, n, 0);
    Tree { nodes: b.nodes }
}

impl Builder<'_> {
    fn grow(&mut self, start: usize, end: usize, depth: usize) {
        let idx = self.nodes.len();
        let ids = &self.order.first().map(|o| &o[start..end]).unwrap_or(&[]);
        let count = end - start;
        let (sum, first, pure) = {
            let first = self.y[ids[0] as usize];
            let mut sum = 0.0;
            let mut pure = true;
            for &s in ids.iter() {
                let v = self.y[s as usize];
                sum += v;
                pure &= v == first;
            }
            (sum, first, pure)
        };
        let mean = if pure { first } else { sum / count as f64 };
        self.nodes.push(Node { feature: LEAF, threshold: 0.0, value: mean, right: 0 });

        let min_leaf = self.params.min_samples_leaf.max(1);
        if pure || depth >= self.params.max_depth || count < 2 * min_leaf {
            return;
        }
        let Some((feature, threshold, n_left)) = self.best_split(start, end, sum, min_leaf) else {
            return;
        };
        self.partition(start, end, feature, n_left);
        self.nodes[idx].feature = feature as u32;
        self.nodes[idx].threshold = threshold;
        self.grow(start, start + n_left, depth + 1);
        self.nodes[idx].right = self.nodes.len() as u32;
        self.grow(start + n_left, end, depth + 1);
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.columns.len();
        match self.params.max_features {
            Some(k) if k < d => {
                let mut f = sample(&mut self.rng, d, k.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    /// Best (feature, threshold, left count) by squared-error reduction.
    fn best_split(&mut self, start: usize, end: usize, total: f64, min_leaf: usize) -> Option<(usize, f64, usize)> {
        let count = end - start;
        let parent = total * total / count as f64;
        let mut best: Option<(usize, f64, usize)> = None;
        let mut best_score = parent;
        for f in self.candidate_features() {
            let col = &self.columns[f];
            let ids = &self.order[f][start..end];
            let mut left_sum = 0.0;
            for pos in 0..count - 1 {
                let s = ids[pos] as usize;
                left_sum += self.y[s];
                let n_left = pos + 1;
                if n_left < min_leaf || count - n_left < min_leaf {
                    continue;
                }
                let here = col[s];
                let next = col[ids[pos + 1] as usize];
                if next <= here {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / (count - n_left) as f64;
                if score > best_score {
                    best_score = score;
                    best = Some((f, here, n_left));
                }
            }
        }
        best
    }

    /// Stable partition of every feature's range by the chosen split.
    fn partition(&mut self, start: usize, end: usize, feature: usize, n_left: usize) {
        for (pos, &s) in self.order[feature][start..end].iter().enumerate() {
            self.goes_left[s as usize] = pos < n_left;
        }
        for f in 0..self.columns.len() {
            if f == feature {
                continue;
            }
            let range = &mut self.order[f][start..end];
            self.scratch.clear();
            let mut w = 0;
            for i in 0..range.len() {
                let s = range[i];
                if self.goes_left[s as usize] {
                    range[w] = s;
                    w += 1;
                } else {
                    self.scratch.push(s);
                }
            }
            range[w..].copy_from_slice(&self.scratch);
        }
    }
}
