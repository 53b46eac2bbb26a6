//! Regression trees grown level by level with exact greedy split search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
        gain: f64,
        cover: f64,
    },
    /// `value` already includes the learning rate.
    Leaf { value: f64, cover: f64 },
}

impl Node {
    /// Hessian sum of the training rows that reached this node.
    pub fn cover(&self) -> f64 {
        match *self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    at = if row[feature as usize] < threshold { left } else { right } as usize;
                }
            }
        }
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn splits(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Split { feature, threshold, .. } => Some((feature, threshold)),
            Node::Leaf { .. } => None,
        })
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. }))
    }

    /// Structural check used after deserialization.
    pub(crate) fn validate(&self, n_features: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("empty tree".into());
        }
        let mut reached = vec![0u8; self.nodes.len()];
        reached[0] = 1;
        for (at, node) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature, left, right, ..
            } = *node
            {
                if feature as usize >= n_features {
                    return Err(format!("node {at}: feature {feature} out of range"));
                }
                for child in [left, right] {
                    let c = child as usize;
                    if c <= at || c >= self.nodes.len() {
                        return Err(format!("node {at}: bad child {child}"));
                    }
                    reached[c] += 1;
                }
            }
        }
        if reached.iter().any(|&r| r != 1) {
            return Err("nodes not forming a tree".into());
        }
        Ok(())
    }
}

/// Columns of the training matrix plus, per feature, row ids sorted by value.
pub(crate) struct Columns {
    pub values: Vec<Vec<f64>>,
    pub order: Vec<Vec<u32>>,
}

impl Columns {
    pub fn new(n_rows: usize, n_cols: usize, cell: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let values: Vec<Vec<f64>> = (0..n_cols)
            .into_par_iter()
            .map(|c| (0..n_rows).map(|r| cell(r, c)).collect())
            .collect();
        let order = values
            .par_iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n_rows as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Columns { values, order }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    left_grad: f64,
    left_hess: f64,
}

#[derive(Clone, Copy)]
struct Open {
    node: usize,
    grad: f64,
    hess: f64,
    depth: u32,
}

pub(crate) fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let g = gl + gr;
    let h = hl + hr;
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * lo + 0.5 * hi;
    if mid > lo && mid <= hi {
        mid
    } else {
        hi
    }
}

const NO_SLOT: u32 = u32::MAX;

pub(crate) fn grow(columns: &Columns, grad: &[f64], hess: &[f64], config: &TrainConfig) -> RegressionTree {
    let n = grad.len();
    let lambda = config.lambda;
    let leaf_value = |g: f64, h: f64| config.eta * (-g / (h + lambda));

    let mut nodes = vec![Node::Leaf { value: 0.0, cover: 0.0 }];
    let mut node_of = vec![0u32; n];
    let mut frontier = vec![Open {
        node: 0,
        grad: grad.iter().sum(),
        hess: hess.iter().sum(),
        depth: 0,
    }];

    while !frontier.is_empty() {
        let splittable: Vec<Open> = frontier
            .iter()
            .copied()
            .filter(|o| o.depth < config.max_depth)
            .collect();
        let mut slot_of = vec![NO_SLOT; nodes.len()];
        for (s, o) in splittable.iter().enumerate() {
            slot_of[o.node] = s as u32;
        }

        let per_feature: Vec<Vec<Option<Candidate>>> = if splittable.is_empty() {
            Vec::new()
        } else {
            (0..columns.values.len())
                .into_par_iter()
                .map(|f| best_for_feature(f, columns, grad, hess, &node_of, &slot_of, &splittable, config))
                .collect()
        };
        let mut best: Vec<Option<Candidate>> = vec![None; splittable.len()];
        for cands in &per_feature {
            for (slot, cand) in cands.iter().enumerate() {
                if let Some(c) = cand {
                    if best[slot].is_none_or(|b| c.gain > b.gain) {
                        best[slot] = Some(*c);
                    }
                }
            }
        }

        let mut next = Vec::new();
        let mut split_at: Vec<Option<(usize, f64, u32, u32)>> = vec![None; nodes.len()];
        for open in &frontier {
            let slot = slot_of[open.node];
            let chosen = if slot == NO_SLOT { None } else { best[slot as usize] };
            match chosen {
                Some(c) => {
                    let left = nodes.len() as u32;
                    let right = left + 1;
                    nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
                    nodes[open.node] = Node::Split {
                        feature: c.feature as u32,
                        threshold: c.threshold,
                        left,
                        right,
                        gain: c.gain,
                        cover: open.hess,
                    };
                    split_at[open.node] = Some((c.feature, c.threshold, left, right));
                    next.push(Open {
                        node: left as usize,
                        grad: c.left_grad,
                        hess: c.left_hess,
                        depth: open.depth + 1,
                    });
                    next.push(Open {
                        node: right as usize,
                        grad: open.grad - c.left_grad,
                        hess: open.hess - c.left_hess,
                        depth: open.depth + 1,
                    });
                }
                None => {
                    nodes[open.node] = Node::Leaf {
                        value: leaf_value(open.grad, open.hess),
                        cover: open.hess,
                    };
                }
            }
        }
        if next.is_empty() {
            break;
        }
        for (r, at) in node_of.iter_mut().enumerate() {
            if let Some(Some((f, thr, left, right))) = split_at.get(*at as usize) {
                *at = if columns.values[*f][r] < *thr { *left } else { *right };
            }
        }
        frontier = next;
    }
    RegressionTree { nodes }
}

#[allow(clippy::too_many_arguments)]
fn best_for_feature(
    feature: usize,
    columns: &Columns,
    grad: &[f64],
    hess: &[f64],
    node_of: &[u32],
    slot_of: &[u32],
    open: &[Open],
    config: &TrainConfig,
) -> Vec<Option<Candidate>> {
    let col = &columns.values[feature];
    // (grad sum, hess sum, last value) of the rows scanned so far, per open node
    let mut acc: Vec<(f64, f64, Option<f64>)> = vec![(0.0, 0.0, None); open.len()];
    let mut best: Vec<Option<Candidate>> = vec![None; open.len()];
    for &r in &columns.order[feature] {
        let r = r as usize;
        let slot = slot_of[node_of[r] as usize];
        if slot == NO_SLOT {
            continue;
        }
        let slot = slot as usize;
        let x = col[r];
        let (gl, hl, last) = acc[slot];
        if let Some(prev) = last {
            if x > prev {
                let o = &open[slot];
                let (gr, hr) = (o.grad - gl, o.hess - hl);
                if hl >= config.min_child_weight && hr >= config.min_child_weight {
                    let gain = split_gain(gl, hl, gr, hr, config.lambda, config.gamma);
                    if gain > 0.0 && best[slot].is_none_or(|b| gain > b.gain) {
                        best[slot] = Some(Candidate {
                            gain,
                            feature,
                            threshold: midpoint(prev, x),
                            left_grad: gl,
                            left_hess: hl,
                        });
                    }
                }
            }
        }
        acc[slot] = (gl + grad[r], hl + hess[r], Some(x));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_stays_between() {
        assert_eq!(midpoint(1.0, 2.0), 1.5);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a < m && m <= b);
        assert_eq!(midpoint(-1e308, 1e308), 0.0);
    }

    #[test]
    fn walks_hand_built_tree() {
        let tree = RegressionTree {
            nodes: vec![
                Node::Split {
                    feature: 1,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                    gain: 1.0,
                    cover: 2.0,
                },
                Node::Leaf { value: -0.3, cover: 1.0 },
                Node::Leaf { value: 0.7, cover: 1.0 },
            ],
        };
        assert_eq!(tree.predict(&[9.0, 0.2]), -0.3);
        assert_eq!(tree.predict(&[9.0, 0.5]), 0.7);
        assert_eq!(tree.depth(), 1);
        assert!(tree.validate(2).is_ok());
        assert!(tree.validate(1).is_err());
    }
}
