//! Pyramids for general graphs.
//!
//! Each level is produced from the previous one by splitting the vertices by
//! the sign of the largest Laplacian eigenvector, Kron-reducing the Laplacian
//! onto the kept half and randomly sparsifying the result. Coarse edges are
//! labeled with their scalar Kron weights.

pub mod container;

use std::str::FromStr;

use log::debug;
use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EccError, Result};
use crate::graph::{GraphPyramid, LabeledGraph, PoolingMap};
use crate::tensor::Tensor;

pub const POWER_TOLERANCE: f64 = 1e-8;
pub const POWER_MAX_ITERATIONS: usize = 10_000;
pub const SPARSIFY_RETRIES: usize = 5;
pub const DEFAULT_Q: f64 = 4.0;

/// Dense symmetric graph Laplacian.
pub type Laplacian = DMatrix<f64>;

/// Laplacian of the symmetrized, unweighted support of `g` (self-loops ignored).
pub fn unweighted_laplacian(g: &LabeledGraph) -> Laplacian {
    let adj = g.undirected_neighbors();
    let n = g.num_vertices();
    let mut l = DMatrix::zeros(n, n);
    for (i, nbrs) in adj.iter().enumerate() {
        for &j in nbrs {
            l[(i, j)] = -1.0;
        }
        l[(i, i)] = nbrs.len() as f64;
    }
    l
}

/// Laplacian of an undirected weighted edge list.
pub fn laplacian_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Laplacian {
    let mut l = DMatrix::zeros(n, n);
    for &(i, j, w) in edges {
        if i != j {
            l[(i, j)] -= w;
            l[(j, i)] -= w;
            l[(i, i)] += w;
            l[(j, j)] += w;
        }
    }
    l
}

/// Symmetry, zero row sums, nonpositive off-diagonals (all within `tol`).
pub fn check_laplacian(l: &Laplacian, tol: f64) -> Result<()> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(EccError::Coarsening(format!("laplacian is {}x{}", n, l.ncols())));
    }
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += l[(i, j)];
            if (l[(i, j)] - l[(j, i)]).abs() > tol {
                return Err(EccError::Coarsening(format!("laplacian not symmetric at ({i}, {j})")));
            }
            if i != j && l[(i, j)] > tol {
                return Err(EccError::Coarsening(format!("positive off-diagonal {} at ({i}, {j})", l[(i, j)])));
            }
        }
        if row.abs() > tol {
            return Err(EccError::Coarsening(format!("row {i} sums to {row}")));
        }
    }
    Ok(())
}

fn neighbors_of(l: &Laplacian) -> Vec<Vec<usize>> {
    let n = l.nrows();
    (0..n)
        .map(|i| (0..n).filter(|&j| j != i && l[(i, j)] != 0.0).collect())
        .collect()
}

/// Vertex partition produced by [`largest_eigvec_split`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub keep: Vec<usize>,
    pub drop: Vec<usize>,
    /// The sign split left one side empty and even indices were kept.
    pub fallback: bool,
}

/// Unit eigenvector of the largest eigenvalue by power iteration, with the
/// first component of magnitude above 1e-9 made positive.
pub fn largest_eigenvector(l: &Laplacian) -> Vec<f64> {
    let n = l.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1e55);
    let mut v = nalgebra::DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    v /= v.norm();
    // A Laplacian is positive semidefinite, so its largest eigenvalue is also
    // the one of largest magnitude and plain iteration converges to it.
    for _ in 0..POWER_MAX_ITERATIONS {
        let w = l * &v;
        let lambda = v.dot(&w);
        let residual = (&w - lambda * &v).norm();
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        v = w / norm;
        if residual < POWER_TOLERANCE {
            break;
        }
    }
    let mut out: Vec<f64> = v.iter().copied().collect();
    if let Some(first) = out.iter().find(|x| x.abs() > 1e-9) {
        if *first < 0.0 {
            out.iter_mut().for_each(|x| *x = -*x);
        }
    }
    out
}

/// Keeps the vertices with a nonnegative component of the largest eigenvector.
pub fn largest_eigvec_split(l: &Laplacian) -> Split {
    let n = l.nrows();
    let v = largest_eigenvector(l);
    let (keep, drop): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| v[i] >= 0.0);
    if keep.is_empty() || drop.is_empty() {
        let (keep, drop) = (0..n).partition(|i| i % 2 == 0);
        return Split {
            keep,
            drop,
            fallback: true,
        };
    }
    Split {
        keep,
        drop,
        fallback: false,
    }
}

/// Moves vertices from `drop` to `keep` until every connected component of
/// the subgraph induced by `drop` has an edge to a kept vertex, which makes
/// the dropped block of the Laplacian nonsingular. Returns the number moved.
pub fn shrink_drop_set(l: &Laplacian, keep: &mut Vec<usize>, drop: &mut Vec<usize>) -> usize {
    let n = l.nrows();
    let nbrs = neighbors_of(l);
    let mut kept = vec![false; n];
    keep.iter().for_each(|&k| kept[k] = true);
    let mut moved = 0;
    let mut seen = vec![false; n];
    for &start in drop.iter() {
        if seen[start] || kept[start] {
            continue;
        }
        let mut component = vec![start];
        seen[start] = true;
        let mut touches = false;
        let mut head = 0;
        while head < component.len() {
            let u = component[head];
            head += 1;
            for &w in &nbrs[u] {
                if kept[w] {
                    touches = true;
                } else if !seen[w] {
                    seen[w] = true;
                    component.push(w);
                }
            }
        }
        if !touches {
            let lowest = *component.iter().min().expect("nonempty");
            kept[lowest] = true;
            moved += 1;
        }
    }
    *keep = (0..n).filter(|&i| kept[i]).collect();
    *drop = (0..n).filter(|&i| !kept[i]).collect();
    moved
}

fn submatrix(l: &Laplacian, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| l[(rows[r], cols[c])])
}

/// Schur complement `L_kk - L_kd L_dd^-1 L_dk`, symmetrized, with
/// positive off-diagonals clamped to zero and the diagonal recomputed so rows
/// sum to zero. `keep` must be sorted; the dropped block must be nonsingular.
pub fn kron_reduce(l: &Laplacian, keep: &[usize]) -> Result<Laplacian> {
    let n = l.nrows();
    let mut is_kept = vec![false; n];
    for &k in keep {
        if k >= n {
            return Err(EccError::Index {
                what: "kept vertex",
                index: k,
                len: n,
            });
        }
        is_kept[k] = true;
    }
    let drop: Vec<usize> = (0..n).filter(|&i| !is_kept[i]).collect();
    let mut s = submatrix(l, keep, keep);
    if !drop.is_empty() {
        let l_dd = submatrix(l, &drop, &drop);
        let l_dk = submatrix(l, &drop, keep);
        let chol = l_dd.cholesky().ok_or_else(|| {
            EccError::Coarsening(format!(
                "dropped block of {} vertices is singular; some dropped component has no kept neighbor",
                drop.len()
            ))
        })?;
        let x = chol.solve(&l_dk);
        s -= l_dk.transpose() * x;
    }
    let k = keep.len();
    let mut out = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in (i + 1)..k {
            let w = (0.5 * (s[(i, j)] + s[(j, i)])).min(0.0);
            out[(i, j)] = w;
            out[(j, i)] = w;
        }
    }
    for i in 0..k {
        let off: f64 = (0..k).filter(|&j| j != i).map(|j| out[(i, j)]).sum();
        out[(i, i)] = -off;
    }
    Ok(out)
}

/// Connected components of the support of `l`, each sorted.
pub fn components(l: &Laplacian) -> Vec<Vec<usize>> {
    let n = l.nrows();
    let nbrs = neighbors_of(l);
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut comp = vec![s];
        label[s] = id;
        let mut head = 0;
        while head < comp.len() {
            let u = comp[head];
            head += 1;
            for &w in &nbrs[u] {
                if label[w] == usize::MAX {
                    label[w] = id;
                    comp.push(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Moore-Penrose pseudoinverse of a connected-graph Laplacian,
/// `(L + J/n)^-1 - J/n`.
pub fn laplacian_pinv(l: &Laplacian) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    let inv = (l + &j)
        .try_inverse()
        .ok_or_else(|| EccError::Coarsening("laplacian of a disconnected graph has no such pseudoinverse".into()))?;
    Ok(inv - j)
}

/// Effective resistance between `a` and `b` given a pseudoinverse.
pub fn effective_resistance(pinv: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    pinv[(a, a)] + pinv[(b, b)] - 2.0 * pinv[(a, b)]
}

fn is_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == n
}

/// Spectral sparsification per connected component: draws
/// `ceil(q m ln m)` edges with replacement with probability proportional to
/// `w_e R_e` and reweights each drawn edge by `count w / (N p)`. A draw that
/// disconnects the component is retried; after the retries the component is
/// kept as is. Components with fewer than two edges are unchanged.
pub fn sparsify<R: Rng + ?Sized>(l: &Laplacian, q: f64, rng: &mut R) -> Result<Laplacian> {
    if !(q > 0.0) {
        return Err(EccError::Configuration(format!("sparsification multiplier must be positive, got {q}")));
    }
    let n = l.nrows();
    let mut out = DMatrix::zeros(n, n);
    for comp in components(l) {
        let sub = submatrix(l, &comp, &comp);
        let c = comp.len();
        let edges: Vec<(usize, usize, f64)> = (0..c)
            .flat_map(|i| ((i + 1)..c).map(move |j| (i, j)))
            .filter(|&(i, j)| sub[(i, j)] < 0.0)
            .map(|(i, j)| (i, j, -sub[(i, j)]))
            .collect();
        let m = edges.len();
        let reduced = if m < 2 {
            sub
        } else {
            let pinv = laplacian_pinv(&sub)?;
            let scores: Vec<f64> = edges
                .iter()
                .map(|&(i, j, w)| (w * effective_resistance(&pinv, i, j)).max(0.0))
                .collect();
            let total: f64 = scores.iter().sum();
            let probs: Vec<f64> = scores.iter().map(|s| s / total).collect();
            let draws = (q * m as f64 * (m as f64).ln()).ceil() as usize;
            let dist = WeightedIndex::new(&probs).map_err(|e| EccError::Coarsening(e.to_string()))?;
            let mut chosen = None;
            for attempt in 0..=SPARSIFY_RETRIES {
                let mut counts = vec![0usize; m];
                for _ in 0..draws {
                    counts[dist.sample(rng)] += 1;
                }
                let support: Vec<(usize, usize)> =
                    (0..m).filter(|&e| counts[e] > 0).map(|e| (edges[e].0, edges[e].1)).collect();
                if is_connected(c, &support) {
                    chosen = Some(counts);
                    break;
                }
                debug!("sparsification attempt {attempt} disconnected a component of {c} vertices");
            }
            match chosen {
                Some(counts) => {
                    let kept: Vec<(usize, usize, f64)> = (0..m)
                        .filter(|&e| counts[e] > 0)
                        .map(|e| {
                            let (i, j, w) = edges[e];
                            (i, j, counts[e] as f64 * w / (draws as f64 * probs[e]))
                        })
                        .collect();
                    laplacian_from_edges(c, &kept)
                }
                None => sub,
            }
        };
        for (a, &i) in comp.iter().enumerate() {
            for (b, &j) in comp.iter().enumerate() {
                out[(i, j)] = reduced[(a, b)];
            }
        }
    }
    Ok(out)
}

/// For every vertex, the kept vertex closest in hops (ties to the lowest
/// kept index), as a position in `keep`. `keep` must be sorted and reach
/// every vertex.
pub fn nearest_kept_map(neighbors: &[Vec<usize>], keep: &[usize]) -> Result<Vec<usize>> {
    let n = neighbors.len();
    let mut owner = vec![usize::MAX; n];
    let mut frontier: Vec<usize> = Vec::new();
    for (pos, &k) in keep.iter().enumerate() {
        owner[k] = pos;
        frontier.push(k);
    }
    // Layered search: a vertex first reached in some layer takes the smallest
    // owner among all frontier vertices that reach it in that layer.
    while !frontier.is_empty() {
        let mut next: Vec<usize> = Vec::new();
        let mut best: Vec<(usize, usize)> = Vec::new();
        for &u in &frontier {
            for &w in &neighbors[u] {
                if owner[w] == usize::MAX {
                    best.push((w, owner[u]));
                }
            }
        }
        best.sort_unstable();
        for (w, o) in best {
            if owner[w] == usize::MAX {
                owner[w] = o;
                next.push(w);
            }
        }
        frontier = next;
    }
    if let Some(v) = owner.iter().position(|&o| o == usize::MAX) {
        return Err(EccError::Coarsening(format!("vertex {v} cannot reach any kept vertex")));
    }
    Ok(owner)
}

/// Degree transforms appended to edge labels as `(f(deg j), f(deg i))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DegreeLabels {
    InvSqrt,
    Inv,
    Sqrt,
    Raw,
    #[default]
    None,
}

impl DegreeLabels {
    pub fn apply(self, deg: usize) -> f64 {
        let d = deg as f64;
        match self {
            DegreeLabels::InvSqrt => 1.0 / d.sqrt(),
            DegreeLabels::Inv => 1.0 / d,
            DegreeLabels::Sqrt => d.sqrt(),
            DegreeLabels::Raw | DegreeLabels::None => d,
        }
    }

    pub fn extra_width(self) -> usize {
        if self == DegreeLabels::None {
            0
        } else {
            2
        }
    }
}

impl FromStr for DegreeLabels {
    type Err = EccError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "inv_sqrt" => Ok(DegreeLabels::InvSqrt),
            "inv" => Ok(DegreeLabels::Inv),
            "sqrt" => Ok(DegreeLabels::Sqrt),
            "raw" => Ok(DegreeLabels::Raw),
            "none" => Ok(DegreeLabels::None),
            other => Err(EccError::Configuration(format!(
                "unknown degree labels {other:?}, expected none, inv_sqrt, inv, sqrt or raw"
            ))),
        }
    }
}

/// Appends `(f(deg j), f(deg i))` to the label of every edge `j -> i`,
/// with `deg` the neighborhood size including the self-loop.
pub fn append_degree_labels(g: &LabeledGraph, variant: DegreeLabels) -> Result<LabeledGraph> {
    if variant == DegreeLabels::None {
        return Ok(g.clone());
    }
    let s = g.label_width();
    let deg: Vec<f64> = (0..g.num_vertices()).map(|i| variant.apply(g.neighborhood_size(i))).collect();
    let mut data = Vec::with_capacity(g.num_edges() * (s + 2));
    for e in 0..g.num_edges() {
        data.extend_from_slice(g.edge_labels().row(e));
        data.push(deg[g.sources()[e]]);
        data.push(deg[g.targets()[e]]);
    }
    g.with_edge_labels(Tensor::new(&[g.num_edges(), s + 2], data)?)
}

/// Finalized graph whose edges are the negative off-diagonals of `l`,
/// labeled with their weight; self-loops are labeled 0.
pub fn graph_from_laplacian(l: &Laplacian, signal_width: usize) -> Result<LabeledGraph> {
    let n = l.nrows();
    let mut edges = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && l[(j, i)] < 0.0 {
                edges.push((j, i));
                labels.push(-l[(j, i)]);
            }
        }
    }
    let m = edges.len();
    LabeledGraph::new(n, &edges, Tensor::new(&[m, 1], labels)?, Tensor::zeros(&[n, signal_width]))?.finalize(&[0.0])
}

/// What happened while producing one coarse level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelReport {
    pub n_fine: usize,
    pub n_coarse: usize,
    /// The eigenvector split was one-sided and even indices were kept.
    pub even_fallback: bool,
    /// Vertices moved back from the drop set to make Kron reduction valid.
    pub shrunk: usize,
    /// Fewer than two vertices: the level was repeated unchanged.
    pub repeated: bool,
}

impl LevelReport {
    /// Any of the declared fallbacks fired.
    pub fn is_fallback(&self) -> bool {
        self.even_fallback || self.shrunk > 0 || self.repeated
    }
}

/// Coarsening parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoarsenOptions {
    pub levels: usize,
    /// Sparsification multiplier; `None` disables sparsification.
    pub q: Option<f64>,
    pub degree_labels: DegreeLabels,
}

/// Pyramid over a finalized input graph (level 0, labels kept as given).
pub fn build_pyramid<R: Rng + ?Sized>(
    g: &LabeledGraph,
    opts: &CoarsenOptions,
    rng: &mut R,
) -> Result<(GraphPyramid, Vec<LevelReport>)> {
    if !g.is_finalized() {
        return Err(EccError::contract("coarsening needs a finalized input graph"));
    }
    let mut graphs = vec![append_degree_labels(g, opts.degree_labels)?];
    let mut maps = Vec::with_capacity(opts.levels);
    let mut reports = Vec::with_capacity(opts.levels);
    let mut lap = unweighted_laplacian(g);
    for _ in 0..opts.levels {
        let n = lap.nrows();
        if n < 2 {
            let last = graphs.last().expect("level 0").clone();
            graphs.push(last);
            maps.push(PoolingMap::identity(n));
            reports.push(LevelReport {
                n_fine: n,
                n_coarse: n,
                even_fallback: false,
                shrunk: 0,
                repeated: true,
            });
            continue;
        }
        let Split {
            mut keep,
            mut drop,
            fallback,
        } = largest_eigvec_split(&lap);
        let shrunk = shrink_drop_set(&lap, &mut keep, &mut drop);
        let reduced = kron_reduce(&lap, &keep)?;
        let coarse = match opts.q {
            Some(q) => sparsify(&reduced, q, rng)?,
            None => reduced,
        };
        let assign = nearest_kept_map(&neighbors_of(&lap), &keep)?;
        maps.push(PoolingMap::new(assign, keep.len())?);
        graphs.push(append_degree_labels(&graph_from_laplacian(&coarse, 1)?, opts.degree_labels)?);
        reports.push(LevelReport {
            n_fine: n,
            n_coarse: keep.len(),
            even_fallback: fallback,
            shrunk,
            repeated: false,
        });
        lap = coarse;
    }
    Ok((GraphPyramid::new(graphs, maps)?, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Laplacian {
        laplacian_from_edges(n, &(0..n - 1).map(|i| (i, i + 1, 1.0)).collect::<Vec<_>>())
    }

    fn graph_of(n: usize, edges: &[(usize, usize)]) -> LabeledGraph {
        let mut both = Vec::new();
        for &(a, b) in edges {
            both.push((a, b));
            both.push((b, a));
        }
        LabeledGraph::new(n, &both, Tensor::zeros(&[both.len(), 1]), Tensor::zeros(&[n, 1]))
            .unwrap()
            .finalize(&[1.0])
            .unwrap()
    }

    #[test]
    fn p2_split() {
        let s = largest_eigvec_split(&path(2));
        assert_eq!((s.keep, s.drop, s.fallback), (vec![0], vec![1], false));
    }

    #[test]
    fn star_separates_hub() {
        let l = laplacian_from_edges(5, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (0, 4, 1.0)]);
        let s = largest_eigvec_split(&l);
        assert!(s.keep == vec![0] || s.drop == vec![0]);
        assert_eq!(s.keep.len() + s.drop.len(), 5);
    }

    #[test]
    fn kron_identity_and_series() {
        let l = path(3);
        assert_eq!(kron_reduce(&l, &[0, 1, 2]).unwrap(), l);
        let r = kron_reduce(&l, &[0, 2]).unwrap();
        assert!((r[(0, 1)] + 0.5).abs() < 1e-15 && (r[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn isolated_drop_set_is_shrunk() {
        // Two components; the second would be dropped entirely.
        let l = laplacian_from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        let (mut keep, mut drop) = (vec![0], vec![1, 2, 3]);
        assert_eq!(shrink_drop_set(&l, &mut keep, &mut drop), 1);
        assert_eq!(keep, vec![0, 2]);
        assert!(kron_reduce(&l, &keep).is_ok());
        assert!(kron_reduce(&l, &[0]).is_err());
    }

    #[test]
    fn tree_sparsification_keeps_weights_in_expectation() {
        let l = path(6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sparsify(&l, 4.0, &mut rng).unwrap();
        check_laplacian(&s, 1e-9).unwrap();
        // A path must keep every edge to stay connected.
        for i in 0..5 {
            assert!(s[(i, i + 1)] < 0.0);
        }
    }

    #[test]
    fn nearest_kept_ties_to_lowest() {
        // 0 - 1 - 2 with 0 and 2 kept: vertex 1 is equidistant.
        let nbrs = vec![vec![1], vec![0, 2], vec![1]];
        assert_eq!(nearest_kept_map(&nbrs, &[0, 2]).unwrap(), vec![0, 0, 1]);
    }

    #[test]
    fn cycle_halves() {
        let g = graph_of(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]);
        let opts = CoarsenOptions {
            levels: 1,
            q: Some(DEFAULT_Q),
            degree_labels: DegreeLabels::None,
        };
        let (p, rep) = build_pyramid(&g, &opts, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(p.level(1).num_vertices(), 3);
        assert!(!rep[0].is_fallback());
    }

    #[test]
    fn zero_levels_is_input() {
        let g = graph_of(3, &[(0, 1), (1, 2)]);
        let opts = CoarsenOptions {
            levels: 0,
            q: None,
            degree_labels: DegreeLabels::None,
        };
        let (p, _) = build_pyramid(&g, &opts, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(p.depth(), 0);
        assert_eq!(p.level(0), &g);
    }

    #[test]
    fn tiny_graph_repeats_level() {
        let g = graph_of(2, &[(0, 1)]);
        let opts = CoarsenOptions {
            levels: 3,
            q: None,
            degree_labels: DegreeLabels::InvSqrt,
        };
        let (p, rep) = build_pyramid(&g, &opts, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(p.depth(), 3);
        assert_eq!(p.level(3).num_vertices(), 1);
        assert!(rep[1].repeated && rep[2].repeated);
        assert_eq!(p.label_widths(), vec![3, 3, 3, 3]);
    }

    #[test]
    fn degree_labels_use_neighborhood_size() {
        let g = graph_of(3, &[(0, 1), (1, 2)]);
        let d = append_degree_labels(&g, DegreeLabels::Raw).unwrap();
        for e in 0..d.num_edges() {
            let (j, i) = (d.sources()[e], d.targets()[e]);
            let row = d.edge_labels().row(e);
            assert_eq!(row[1], g.neighborhood_size(j) as f64);
            assert_eq!(row[2], g.neighborhood_size(i) as f64);
        }
    }
}
