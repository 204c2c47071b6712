//! Nearest-neighbour index over positions, backed by an immutable k-d tree.

use crate::geometry::Point;
use kiddo::{ImmutableKdTree, SquaredEuclidean};
use std::num::NonZero;

pub struct PointIndex {
    tree: Option<ImmutableKdTree<f64, 3>>,
    len: usize,
}

impl PointIndex {
    pub fn new(points: &[Point]) -> Self {
        let tree = (!points.is_empty()).then(|| ImmutableKdTree::new_from_slice(points));
        Self { tree, len: points.len() }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Up to `k` nearest items as (index, squared distance), nearest first.
    /// Ties are ordered by index.
    pub fn knn(&self, q: Point, k: usize) -> Vec<(usize, f64)> {
        let Some(tree) = &self.tree else { return Vec::new() };
        let k = k.min(self.len);
        let Some(k) = NonZero::new(k) else { return Vec::new() };
        let mut out: Vec<(usize, f64)> = tree
            .nearest_n::<SquaredEuclidean>(&q, k)
            .into_iter()
            .map(|n| (n.item as usize, n.distance))
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    pub fn nearest(&self, q: Point) -> Option<(usize, f64)> {
        let tree = self.tree.as_ref()?;
        let n = tree.nearest_one::<SquaredEuclidean>(&q);
        Some((n.item as usize, n.distance))
    }

    /// Items within squared distance `r2` (unsorted).
    pub fn within(&self, q: Point, r2: f64) -> Vec<usize> {
        let Some(tree) = &self.tree else { return Vec::new() };
        tree.within_unsorted::<SquaredEuclidean>(&q, r2).into_iter().map(|n| n.item as usize).collect()
    }
}
