//! Vertex- and edge-labeled directed graphs and multi-resolution pyramids.
//!
//! Edges are stored sorted by destination vertex with a per-vertex offset
//! index, so the neighborhood of vertex `i` (all `j` with an edge `j -> i`)
//! is a contiguous slice of the edge arrays.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use log::warn;

use crate::error::{EccError, Result};
use crate::tensor::Tensor;

/// A directed graph with a vertex signal `[n x d]` and edge labels `[m x s]`.
///
/// Structure and labels are reference-counted, so clones that differ only
/// in their vertex signal share storage.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledGraph {
    n: usize,
    src: Arc<Vec<usize>>,
    dst: Arc<Vec<usize>>,
    offsets: Arc<Vec<usize>>,
    edge_labels: Arc<Tensor>,
    vertex_signal: Tensor,
    distinct: Option<Arc<DistinctLabels>>,
}

/// Deduplicated edge-label rows and the row each edge maps to.
#[derive(Clone, Debug, PartialEq)]
pub struct DistinctLabels {
    pub rows: Tensor,
    pub edge_to_row: Vec<usize>,
}

fn label_key(row: &[f64]) -> Vec<u64> {
    // -0.0 and 0.0 compare equal and must share a row.
    row.iter().map(|&v| if v == 0.0 { 0 } else { v.to_bits() }).collect()
}

impl DistinctLabels {
    /// Groups identical rows of `labels` in order of first appearance.
    pub fn compute(labels: &Tensor) -> Self {
        let s = labels.cols();
        let m = labels.rows();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut rows = Vec::new();
        let mut edge_to_row = Vec::with_capacity(m);
        for e in 0..m {
            let row = &labels.data()[e * s..(e + 1) * s];
            let next = index.len();
            let r = *index.entry(label_key(row)).or_insert_with(|| {
                rows.extend_from_slice(row);
                next
            });
            edge_to_row.push(r);
        }
        let k = index.len();
        DistinctLabels {
            rows: Tensor::new(&[k, s], rows).expect("row count matches"),
            edge_to_row,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_to_row.is_empty()
    }
}

impl LabeledGraph {
    /// Builds a graph from `(source, destination)` pairs.
    ///
    /// Duplicate pairs are collapsed keeping the first label. The graph is
    /// not finalized; call [`LabeledGraph::finalize`] before convolving.
    pub fn new(n: usize, edges: &[(usize, usize)], edge_labels: Tensor, vertex_signal: Tensor) -> Result<Self> {
        if edge_labels.shape().len() != 2 || edge_labels.rows() != edges.len() {
            return Err(EccError::dim("edge labels", edge_labels.shape(), &[edges.len()]));
        }
        if vertex_signal.shape().len() != 2 || vertex_signal.rows() != n {
            return Err(EccError::dim("vertex signal", vertex_signal.shape(), &[n]));
        }
        for &(j, i) in edges {
            for v in [j, i] {
                if v >= n {
                    return Err(EccError::Index {
                        what: "edge endpoint",
                        index: v,
                        len: n,
                    });
                }
            }
        }
        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.sort_by_key(|&e| (edges[e].1, edges[e].0, e));
        let s = edge_labels.cols();
        let mut src = Vec::with_capacity(edges.len());
        let mut dst = Vec::with_capacity(edges.len());
        let mut labels = Vec::with_capacity(edges.len() * s);
        let mut duplicates = 0usize;
        for e in order {
            let (j, i) = edges[e];
            if src.last() == Some(&j) && dst.last() == Some(&i) {
                duplicates += 1;
                continue;
            }
            src.push(j);
            dst.push(i);
            labels.extend_from_slice(edge_labels.row(e));
        }
        if duplicates > 0 {
            warn!("collapsed {duplicates} duplicate edges, keeping the first label of each");
        }
        let m = src.len();
        let offsets = offsets_of(n, &dst);
        Ok(LabeledGraph {
            n,
            src: Arc::new(src),
            dst: Arc::new(dst),
            offsets: Arc::new(offsets),
            edge_labels: Arc::new(Tensor::new(&[m, s], labels)?),
            vertex_signal,
            distinct: None,
        })
    }

    /// Adds a self-loop labeled `self_loop_label` to every vertex lacking one
    /// and builds the distinct-label index.
    pub fn finalize(&self, self_loop_label: &[f64]) -> Result<Self> {
        let s = self.label_width();
        if self_loop_label.len() != s {
            return Err(EccError::dim("self-loop label", &[s], &[self_loop_label.len()]));
        }
        let mut edges: Vec<(usize, usize)> = self.src.iter().copied().zip(self.dst.iter().copied()).collect();
        let mut labels = self.edge_labels.data().to_vec();
        for i in 0..self.n {
            let has_loop = self.edge_range(i).any(|e| self.src[e] == i);
            if !has_loop {
                edges.push((i, i));
                labels.extend_from_slice(self_loop_label);
            }
        }
        let m = edges.len();
        let mut g = LabeledGraph::new(self.n, &edges, Tensor::new(&[m, s], labels)?, self.vertex_signal.clone())?;
        g.distinct = Some(Arc::new(DistinctLabels::compute(&g.edge_labels)));
        Ok(g)
    }

    pub fn is_finalized(&self) -> bool {
        self.distinct.is_some()
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    pub fn sources(&self) -> &[usize] {
        &self.src
    }

    pub fn targets(&self) -> &[usize] {
        &self.dst
    }

    pub fn edge_labels(&self) -> &Tensor {
        &self.edge_labels
    }

    pub fn vertex_signal(&self) -> &Tensor {
        &self.vertex_signal
    }

    pub fn label_width(&self) -> usize {
        self.edge_labels.cols()
    }

    pub fn signal_width(&self) -> usize {
        self.vertex_signal.cols()
    }

    pub fn distinct_labels(&self) -> Option<&DistinctLabels> {
        self.distinct.as_deref()
    }

    /// Edge indices whose destination is `i`.
    pub fn edge_range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// `|N(i)|`, the number of incoming edges including the self-loop.
    pub fn neighborhood_size(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// `(j, edge index)` for every edge `j -> i`, the self-loop included.
    pub fn neighborhood(&self, i: usize) -> Result<Vec<(usize, usize)>> {
        if !self.is_finalized() {
            return Err(EccError::contract("neighborhood queried on a graph that is not finalized"));
        }
        if i >= self.n {
            return Err(EccError::Index {
                what: "vertex",
                index: i,
                len: self.n,
            });
        }
        Ok(self.edge_range(i).map(|e| (self.src[e], e)).collect())
    }

    /// Same structure with a different vertex signal.
    pub fn with_vertex_signal(&self, signal: Tensor) -> Result<Self> {
        if signal.shape().len() != 2 || signal.rows() != self.n {
            return Err(EccError::dim("vertex signal", signal.shape(), &[self.n]));
        }
        let mut g = self.clone();
        g.vertex_signal = signal;
        Ok(g)
    }

    /// Same structure with replacement edge labels (one row per stored edge,
    /// in storage order). The distinct-label index is rebuilt if present.
    pub fn with_edge_labels(&self, labels: Tensor) -> Result<Self> {
        if labels.shape().len() != 2 || labels.rows() != self.num_edges() {
            return Err(EccError::dim("edge labels", labels.shape(), &[self.num_edges()]));
        }
        let mut g = self.clone();
        g.distinct = self.distinct.as_ref().map(|_| Arc::new(DistinctLabels::compute(&labels)));
        g.edge_labels = Arc::new(labels);
        Ok(g)
    }

    /// Symmetric unweighted adjacency lists ignoring self-loops.
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (&j, &i) in self.src.iter().zip(self.dst.iter()) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Disjoint union with vertex indices of part `p` offset by the vertex
    /// counts of parts `0..p`. All parts must be finalized with equal label
    /// and signal widths.
    pub fn disjoint_union(parts: &[&LabeledGraph]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| EccError::Batching("cannot form the union of zero graphs".into()))?;
        let (s, d) = (first.label_width(), first.signal_width());
        let n: usize = parts.iter().map(|g| g.n).sum();
        let m: usize = parts.iter().map(|g| g.num_edges()).sum();
        let mut src = Vec::with_capacity(m);
        let mut dst = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m * s);
        let mut signal = Vec::with_capacity(n * d);
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut rows = Vec::new();
        let mut edge_to_row = Vec::with_capacity(m);
        let mut base = 0;
        for g in parts {
            if g.label_width() != s || g.signal_width() != d {
                return Err(EccError::Batching(format!(
                    "label/signal widths ({}, {}) differ from ({s}, {d})",
                    g.label_width(),
                    g.signal_width()
                )));
            }
            let local = g
                .distinct
                .as_ref()
                .ok_or_else(|| EccError::Batching("graphs must be finalized before batching".into()))?;
            let remap: Vec<usize> = (0..local.len())
                .map(|r| {
                    let row = local.rows.row(r);
                    let next = index.len();
                    *index.entry(label_key(row)).or_insert_with(|| {
                        rows.extend_from_slice(row);
                        next
                    })
                })
                .collect();
            src.extend(g.src.iter().map(|v| v + base));
            dst.extend(g.dst.iter().map(|v| v + base));
            labels.extend_from_slice(g.edge_labels.data());
            signal.extend_from_slice(g.vertex_signal.data());
            edge_to_row.extend(local.edge_to_row.iter().map(|&r| remap[r]));
            base += g.n;
        }
        let k = index.len();
        Ok(LabeledGraph {
            n,
            offsets: Arc::new(offsets_of(n, &dst)),
            src: Arc::new(src),
            dst: Arc::new(dst),
            edge_labels: Arc::new(Tensor::new(&[m, s], labels)?),
            vertex_signal: Tensor::new(&[n, d], signal)?,
            distinct: Some(Arc::new(DistinctLabels {
                rows: Tensor::new(&[k, s], rows)?,
                edge_to_row,
            })),
        })
    }
}

fn offsets_of(n: usize, sorted_dst: &[usize]) -> Vec<usize> {
    let mut offsets = vec![0; n + 1];
    for &i in sorted_dst {
        offsets[i + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    offsets
}

/// Total assignment of fine vertices to coarse vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolingMap {
    assignment: Vec<usize>,
    n_coarse: usize,
}

impl PoolingMap {
    pub fn new(assignment: Vec<usize>, n_coarse: usize) -> Result<Self> {
        if let Some(&bad) = assignment.iter().find(|&&c| c >= n_coarse) {
            return Err(EccError::Index {
                what: "pooling map target",
                index: bad,
                len: n_coarse,
            });
        }
        Ok(PoolingMap { assignment, n_coarse })
    }

    pub fn identity(n: usize) -> Self {
        PoolingMap {
            assignment: (0..n).collect(),
            n_coarse: n,
        }
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn n_fine(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }
}

/// Progressively coarser graphs `levels[0..=h_max]` linked by `maps[h]`,
/// where `maps[h]` sends vertices of `levels[h]` to `levels[h + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphPyramid {
    levels: Vec<LabeledGraph>,
    maps: Vec<PoolingMap>,
}

impl GraphPyramid {
    pub fn new(levels: Vec<LabeledGraph>, maps: Vec<PoolingMap>) -> Result<Self> {
        if levels.is_empty() || maps.len() + 1 != levels.len() {
            return Err(EccError::Configuration(format!(
                "a pyramid needs one map fewer than levels, got {} levels and {} maps",
                levels.len(),
                maps.len()
            )));
        }
        for (h, map) in maps.iter().enumerate() {
            if map.n_fine() != levels[h].num_vertices() || map.n_coarse() != levels[h + 1].num_vertices() {
                return Err(EccError::Configuration(format!(
                    "map {h} is {} -> {} but levels have {} and {} vertices",
                    map.n_fine(),
                    map.n_coarse(),
                    levels[h].num_vertices(),
                    levels[h + 1].num_vertices()
                )));
            }
        }
        Ok(GraphPyramid { levels, maps })
    }

    /// Single-level pyramid.
    pub fn single(graph: LabeledGraph) -> Self {
        GraphPyramid {
            levels: vec![graph],
            maps: Vec::new(),
        }
    }

    pub fn levels(&self) -> &[LabeledGraph] {
        &self.levels
    }

    pub fn maps(&self) -> &[PoolingMap] {
        &self.maps
    }

    /// Number of pooling steps, `h_max`.
    pub fn depth(&self) -> usize {
        self.maps.len()
    }

    pub fn level(&self, h: usize) -> &LabeledGraph {
        &self.levels[h]
    }

    pub fn label_widths(&self) -> Vec<usize> {
        self.levels.iter().map(LabeledGraph::label_width).collect()
    }

    pub fn into_parts(self) -> (Vec<LabeledGraph>, Vec<PoolingMap>) {
        (self.levels, self.maps)
    }

    /// Same structure with new vertex signals, one per level.
    pub fn with_signals(&self, signals: Vec<Tensor>) -> Result<Self> {
        if signals.len() != self.levels.len() {
            return Err(EccError::dim("pyramid signals", &[signals.len()], &[self.levels.len()]));
        }
        let levels = self
            .levels
            .iter()
            .zip(signals)
            .map(|(g, x)| g.with_vertex_signal(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(GraphPyramid {
            levels,
            maps: self.maps.clone(),
        })
    }

    /// Same structure with every edge label (self-loops included) replaced
    /// by the constant `[1]`.
    pub fn with_uniform_labels(&self) -> Result<Self> {
        let levels = self
            .levels
            .iter()
            .map(|g| g.with_edge_labels(Tensor::full(&[g.num_edges(), 1], 1.0)))
            .collect::<Result<Vec<_>>>()?;
        Ok(GraphPyramid {
            levels,
            maps: self.maps.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> LabeledGraph {
        let labels = Tensor::new(&[2, 1], vec![1.0, 2.0]).unwrap();
        LabeledGraph::new(3, &[(0, 1), (1, 2)], labels, Tensor::zeros(&[3, 1])).unwrap()
    }

    #[test]
    fn single_vertex_neighborhood() {
        let g = LabeledGraph::new(1, &[], Tensor::zeros(&[0, 2]), Tensor::zeros(&[1, 1]))
            .unwrap()
            .finalize(&[0.0, 0.0])
            .unwrap();
        assert_eq!(g.neighborhood(0).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn path_neighborhood_contains_predecessor_and_self() {
        let g = path3().finalize(&[9.0]).unwrap();
        let mut nbrs: Vec<usize> = g.neighborhood(1).unwrap().into_iter().map(|(j, _)| j).collect();
        nbrs.sort();
        assert_eq!(nbrs, vec![0, 1]);
    }

    #[test]
    fn neighborhood_needs_finalize_and_valid_index() {
        let g = path3();
        assert!(matches!(g.neighborhood(0), Err(EccError::Contract(_))));
        let g = g.finalize(&[0.0]).unwrap();
        assert!(matches!(g.neighborhood(3), Err(EccError::Index { .. })));
    }

    #[test]
    fn finalize_adds_missing_loops() {
        let g = LabeledGraph::new(3, &[], Tensor::zeros(&[0, 1]), Tensor::zeros(&[3, 1]))
            .unwrap()
            .finalize(&[1.0])
            .unwrap();
        assert_eq!(g.num_edges(), 3);
        assert!(g.edge_labels().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn finalize_is_idempotent() {
        let once = path3().finalize(&[5.0]).unwrap();
        let twice = once.finalize(&[5.0]).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn finalize_checks_label_width() {
        assert!(matches!(path3().finalize(&[0.0, 0.0]), Err(EccError::Dimension { .. })));
    }

    #[test]
    fn duplicates_keep_first_label() {
        let labels = Tensor::new(&[3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let g = LabeledGraph::new(2, &[(0, 1), (0, 1), (1, 0)], labels, Tensor::zeros(&[2, 1])).unwrap();
        assert_eq!(g.num_edges(), 2);
        let e = g.edge_range(1).next().unwrap();
        assert_eq!(g.edge_labels().row(e), &[1.0]);
    }

    #[test]
    fn out_of_range_endpoint() {
        let r = LabeledGraph::new(2, &[(0, 2)], Tensor::zeros(&[1, 1]), Tensor::zeros(&[2, 1]));
        assert!(matches!(r, Err(EccError::Index { .. })));
    }

    #[test]
    fn union_offsets_second_graph() {
        let a = LabeledGraph::new(3, &[(0, 1)], Tensor::zeros(&[1, 1]), Tensor::zeros(&[3, 1]))
            .unwrap()
            .finalize(&[0.0])
            .unwrap();
        let b = LabeledGraph::new(5, &[(4, 0)], Tensor::full(&[1, 1], 2.0), Tensor::zeros(&[5, 1]))
            .unwrap()
            .finalize(&[0.0])
            .unwrap();
        let u = LabeledGraph::disjoint_union(&[&a, &b]).unwrap();
        assert_eq!(u.num_vertices(), 8);
        assert_eq!(u.num_edges(), a.num_edges() + b.num_edges());
        let e = u.edge_range(3).find(|&e| u.sources()[e] != 3).unwrap();
        assert_eq!(u.sources()[e], 7);
        let d = u.distinct_labels().unwrap();
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn pooling_map_rejects_out_of_range() {
        assert!(PoolingMap::new(vec![0, 2], 2).is_err());
        assert!(PoolingMap::new(vec![0, 0], 2).is_ok());
    }

    #[test]
    fn pyramid_checks_map_sizes() {
        let g = path3().finalize(&[0.0]).unwrap();
        let coarse = LabeledGraph::new(1, &[], Tensor::zeros(&[0, 1]), Tensor::zeros(&[1, 0]))
            .unwrap()
            .finalize(&[0.0])
            .unwrap();
        assert!(GraphPyramid::new(vec![g.clone(), coarse.clone()], vec![PoolingMap::new(vec![0; 3], 1).unwrap()]).is_ok());
        assert!(GraphPyramid::new(vec![g, coarse], vec![PoolingMap::new(vec![0; 2], 1).unwrap()]).is_err());
    }
}
