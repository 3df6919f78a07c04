//! Exact nearest-neighbor search over point positions.
//!
//! A k-d tree split at the median of the axis with the widest spread, with
//! buckets of at most [`LEAF_SIZE`] points. Queries are exact, and ties in
//! squared distance resolve to the smallest original point index, so every
//! correspondence built on top of this index is deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::pointcloud::PointCloud;

pub const LEAF_SIZE: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IndexError {
    #[error("cannot index an empty cloud")]
    Empty,
    #[error("k = {k} outside [1, {size}]")]
    KOutOfRange { k: usize, size: usize },
}

/// A neighbor: original point index and squared Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub squared_distance: f64,
}

impl Neighbor {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.squared_distance
            .total_cmp(&other.squared_distance)
            .then(self.index.cmp(&other.index))
    }
}

// Max-heap ordering by (distance, index).
#[derive(Debug, Clone, Copy)]
struct HeapEntry(Neighbor);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.key_cmp(&other.0)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Immutable spatial index over the positions of one cloud.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    /// Positions permuted into tree order.
    points: Vec<[f64; 3]>,
    /// Original index of each entry of `points`.
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

#[inline]
pub fn squared_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl NeighborIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self, IndexError> {
        Self::from_positions(cloud.positions().collect())
    }

    pub fn from_positions(positions: Vec<[f64; 3]>) -> Result<Self, IndexError> {
        if positions.is_empty() {
            return Err(IndexError::Empty);
        }
        let mut entries: Vec<([f64; 3], usize)> =
            positions.into_iter().enumerate().map(|(i, p)| (p, i)).collect();
        let mut nodes = Vec::with_capacity(2 * entries.len() / LEAF_SIZE + 1);
        build_node(&mut entries, 0, &mut nodes);
        let (points, ids) = entries.into_iter().unzip();
        Ok(Self { points, ids, nodes })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Position of the point with original index `index`.
    pub fn position(&self, index: usize) -> Option<[f64; 3]> {
        self.ids.iter().position(|&id| id == index).map(|i| self.points[i])
    }

    /// The exact nearest neighbor of `query`.
    pub fn nearest(&self, query: &[f64; 3]) -> Neighbor {
        let mut best = Neighbor {
            index: usize::MAX,
            squared_distance: f64::INFINITY,
        };
        self.nearest_in(0, query, &mut best);
        best
    }

    fn nearest_in(&self, node: usize, query: &[f64; 3], best: &mut Neighbor) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let candidate = Neighbor {
                        index: self.ids[i],
                        squared_distance: squared_distance(query, &self.points[i]),
                    };
                    if candidate.key_cmp(best) == Ordering::Less {
                        *best = candidate;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_in(near, query, best);
                if diff * diff <= best.squared_distance {
                    self.nearest_in(far, query, best);
                }
            }
        }
    }

    /// The `k` exact nearest neighbors, ascending by (distance, index).
    pub fn nearest_k(&self, query: &[f64; 3], k: usize) -> Result<Vec<Neighbor>, IndexError> {
        if k == 0 || k > self.len() {
            return Err(IndexError::KOutOfRange { k, size: self.len() });
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.nearest_k_in(0, query, k, &mut heap);
        let mut out: Vec<Neighbor> = heap.into_iter().map(|e| e.0).collect();
        out.sort_by(Neighbor::key_cmp);
        Ok(out)
    }

    fn nearest_k_in(&self, node: usize, query: &[f64; 3], k: usize, heap: &mut BinaryHeap<HeapEntry>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let candidate = HeapEntry(Neighbor {
                        index: self.ids[i],
                        squared_distance: squared_distance(query, &self.points[i]),
                    });
                    if heap.len() < k {
                        heap.push(candidate);
                    } else if candidate < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(candidate);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_k_in(near, query, k, heap);
                let worst = if heap.len() < k {
                    f64::INFINITY
                } else {
                    heap.peek().unwrap().0.squared_distance
                };
                if diff * diff <= worst {
                    self.nearest_k_in(far, query, k, heap);
                }
            }
        }
    }
}

fn build_node(entries: &mut [([f64; 3], usize)], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if entries.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + entries.len(),
        });
        return id;
    }

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for (p, _) in entries.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let mut axis = 0;
    for a in 1..3 {
        if hi[a] - lo[a] > hi[axis] - lo[axis] {
            axis = a;
        }
    }

    let mid = entries.len() / 2;
    entries.select_nth_unstable_by(mid, |a, b| a.0[axis].total_cmp(&b.0[axis]).then(a.1.cmp(&b.1)));
    let value = entries[mid].0[axis];

    // Reserve the slot, then fill in children.
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (left_part, right_part) = entries.split_at_mut(mid);
    let left = build_node(left_part, offset, nodes);
    let right = build_node(right_part, offset + mid, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}
