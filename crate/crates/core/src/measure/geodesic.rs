use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::surface::SurfaceGraph;

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    vertex: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra shortest path from `from` to `to`. Equal-length alternatives are
/// resolved toward the smaller predecessor id.
pub fn geodesic_path(graph: &SurfaceGraph, from: usize, to: usize) -> Result<(Vec<usize>, f64)> {
    let n = graph.vertex_count();
    for v in [from, to] {
        if v >= n {
            return Err(Error::InvalidParams(format!(
                "vertex {v} not in graph of {n}"
            )));
        }
    }
    if from == to {
        return Ok((vec![from], 0.0));
    }

    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[from] = 0.0;
    heap.push(Entry {
        dist: 0.0,
        vertex: from,
    });

    while let Some(Entry { dist: d, vertex: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == to {
            break;
        }
        for &(v, w) in graph.neighbors(u) {
            let v = v as usize;
            if done[v] {
                continue;
            }
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = u;
                heap.push(Entry {
                    dist: nd,
                    vertex: v,
                });
            } else if nd == dist[v] && u < pred[v] {
                pred[v] = u;
            }
        }
    }

    if !done[to] {
        return Err(Error::Unreachable(from, to));
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = pred[cur];
        path.push(cur);
    }
    path.reverse();
    Ok((path, dist[to]))
}
