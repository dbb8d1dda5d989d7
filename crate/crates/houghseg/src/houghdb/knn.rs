//! Exact K-nearest-neighbour search over feature vectors.
//!
//! Two engines share one distance routine: a kd-tree for low dimensionality
//! and a linear scan that wins once the dimension grows (the tree degenerates
//! well before d = 128). Both return identical neighbour sets AND ordering:
//! candidates are ranked by (squared distance, record index), and the tree
//! never prunes a subtree that could still tie-and-win on index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Above this dimensionality `KnnEngine::Auto` picks the linear scan.
pub const KDTREE_MAX_DIM: usize = 16;

/// Engine selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KnnEngine {
    /// Kd-tree up to [`KDTREE_MAX_DIM`], linear scan beyond.
    #[default]
    Auto,
    BruteForce,
    KdTree,
}

/// Squared Euclidean distance with a fixed 8-lane summation order, so every
/// engine (and every call site) computes bit-identical values.
pub fn dist2(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        for l in 0..8 {
            let d = a[i * 8 + l] - b[i * 8 + l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0f32;
    for i in chunks * 8..a.len() {
        let d = a[i] - b[i];
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Candidate ordered by (squared distance, index); the heap keeps the worst
/// on top.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f32,
    index: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // distances are finite and non-negative here
        self.d2
            .partial_cmp(&other.d2)
            .unwrap()
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct TopK {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK { k, heap: BinaryHeap::with_capacity(k + 1) }
    }

    fn offer(&mut self, c: Candidate) {
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if let Some(&worst) = self.heap.peek() {
            if c < worst {
                self.heap.pop();
                self.heap.push(c);
            }
        }
    }

    /// Worst kept squared distance, or None while not full.
    fn bound(&self) -> Option<Candidate> {
        if self.heap.len() < self.k {
            None
        } else {
            self.heap.peek().copied()
        }
    }

    fn into_sorted(self) -> Vec<(u32, f32)> {
        let mut v: Vec<Candidate> = self.heap.into_vec();
        v.sort();
        v.into_iter().map(|c| (c.index, c.d2.sqrt())).collect()
    }
}

enum Node {
    Split { dim: u32, value: f32, right: u32 },
    Leaf { start: u32, count: u32 },
}

/// Kd-tree over row-major points, splitting on the widest-spread dimension.
pub struct KdTree {
    dim: usize,
    nodes: Vec<Node>,
    /// Point data reordered into leaf buckets.
    points: Vec<f32>,
    /// Original record index per reordered point.
    indices: Vec<u32>,
}

const BUCKET_SIZE: usize = 16;

impl KdTree {
    pub fn build(points: &[f32], dim: usize) -> KdTree {
        assert!(dim > 0);
        let n = points.len() / dim;
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut tree = KdTree {
            dim,
            nodes: Vec::new(),
            points: Vec::with_capacity(points.len()),
            indices: Vec::with_capacity(n),
        };
        if n > 0 {
            tree.build_rec(points, &mut order);
        }
        tree
    }

    fn build_rec(&mut self, data: &[f32], subset: &mut [u32]) -> usize {
        let pos = self.nodes.len();
        if subset.len() <= BUCKET_SIZE {
            let start = self.indices.len() as u32;
            for &i in subset.iter() {
                self.indices.push(i);
                let row = &data[i as usize * self.dim..(i as usize + 1) * self.dim];
                self.points.extend_from_slice(row);
            }
            self.nodes.push(Node::Leaf { start, count: subset.len() as u32 });
            return pos;
        }

        // widest-spread dimension
        let mut best_dim = 0;
        let mut best_spread = -1.0f32;
        for d in 0..self.dim {
            let mut lo = f32::INFINITY;
            let mut hi = f32::NEG_INFINITY;
            for &i in subset.iter() {
                let v = data[i as usize * self.dim + d];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_dim = d;
            }
        }
        if best_spread <= 0.0 {
            // all points identical along every axis: one leaf keeps ties exact
            let start = self.indices.len() as u32;
            subset.sort_unstable();
            for &i in subset.iter() {
                self.indices.push(i);
                let row = &data[i as usize * self.dim..(i as usize + 1) * self.dim];
                self.points.extend_from_slice(row);
            }
            self.nodes.push(Node::Leaf { start, count: subset.len() as u32 });
            return pos;
        }

        let mid = subset.len() / 2;
        subset.select_nth_unstable_by(mid, |&a, &b| {
            let va = data[a as usize * self.dim + best_dim];
            let vb = data[b as usize * self.dim + best_dim];
            va.partial_cmp(&vb).unwrap().then(a.cmp(&b))
        });
        let split_value = data[subset[mid] as usize * self.dim + best_dim];

        self.nodes.push(Node::Split { dim: best_dim as u32, value: split_value, right: 0 });
        let (left, right) = subset.split_at_mut(mid);
        let left_pos = self.build_rec(data, left);
        debug_assert_eq!(left_pos, pos + 1);
        let right_pos = self.build_rec(data, right);
        if let Node::Split { right, .. } = &mut self.nodes[pos] {
            *right = right_pos as u32;
        }
        pos
    }

    fn search(&self, query: &[f32], k: usize, max_dist: f32, top: &mut TopK) {
        if self.nodes.is_empty() || k == 0 {
            return;
        }
        self.search_rec(0, query, max_dist, top);
    }

    fn search_rec(&self, node: usize, query: &[f32], max_dist: f32, top: &mut TopK) {
        match &self.nodes[node] {
            Node::Leaf { start, count } => {
                for i in 0..*count as usize {
                    let p = (*start as usize + i) * self.dim;
                    let d2 = dist2(query, &self.points[p..p + self.dim]);
                    let dist = d2.sqrt();
                    if dist < max_dist {
                        top.offer(Candidate { d2, index: self.indices[*start as usize + i] });
                    }
                }
            }
            Node::Split { dim, value, right } => {
                let diff = query[*dim as usize] - value;
                let (near, far) = if diff < 0.0 {
                    (node + 1, *right as usize)
                } else {
                    (*right as usize, node + 1)
                };
                self.search_rec(near, query, max_dist, top);
                // the far side is only reachable within |diff|; keep it when
                // it could still beat (or tie by index) the current worst
                let plane_d2 = diff * diff;
                if plane_d2.sqrt() >= max_dist {
                    return;
                }
                match top.bound() {
                    None => self.search_rec(far, query, max_dist, top),
                    Some(worst) => {
                        if plane_d2 <= worst.d2 {
                            self.search_rec(far, query, max_dist, top);
                        }
                    }
                }
            }
        }
    }
}

/// Built search index over a feature table.
pub enum KnnIndex {
    Brute { dim: usize, points: Vec<f32> },
    Tree(KdTree),
}

impl KnnIndex {
    /// Build an index over `n` row-major points of width `dim`.
    pub fn build(points: Vec<f32>, dim: usize, engine: KnnEngine) -> KnnIndex {
        let use_tree = match engine {
            KnnEngine::Auto => dim <= KDTREE_MAX_DIM,
            KnnEngine::KdTree => true,
            KnnEngine::BruteForce => false,
        };
        if use_tree {
            KnnIndex::Tree(KdTree::build(&points, dim))
        } else {
            KnnIndex::Brute { dim, points }
        }
    }

    /// At most `k` records with Euclidean distance strictly below
    /// `max_dist`, exactly the smallest such, ascending by (distance,
    /// index). Ties on distance break toward the lower record index.
    pub fn query(&self, feature: &[f32], k: usize, max_dist: f32) -> Vec<(u32, f32)> {
        let mut top = TopK::new(k);
        if k == 0 {
            return Vec::new();
        }
        match self {
            KnnIndex::Brute { dim, points } => {
                for (i, row) in points.chunks_exact(*dim).enumerate() {
                    let d2 = dist2(feature, row);
                    if d2.sqrt() < max_dist {
                        top.offer(Candidate { d2, index: i as u32 });
                    }
                }
            }
            KnnIndex::Tree(tree) => tree.search(feature, k, max_dist, &mut top),
        }
        top.into_sorted()
    }
}
