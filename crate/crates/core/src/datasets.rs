//! Loaders for graph benchmarks in TU text format and MNIST IDX rasters.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::{EccError, Result};
use crate::graph::LabeledGraph;
use crate::pointcloud::PointCloud;
use crate::tensor::Tensor;

/// One graph of a TU dataset with 0-based vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TuGraph {
    pub num_vertices: usize,
    /// Directed edges `(source, target)`; every undirected edge appears in
    /// both directions.
    pub edges: Vec<(usize, usize)>,
    /// Category index per edge, parallel to `edges`.
    pub edge_categories: Option<Vec<usize>>,
    pub vertex_categories: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuDataset {
    pub name: String,
    pub graphs: Vec<TuGraph>,
    /// Class index per graph in `0..num_classes`.
    pub labels: Vec<usize>,
    /// Original label value of each class index, sorted ascending.
    pub class_values: Vec<i64>,
    pub num_vertex_categories: usize,
    pub num_edge_categories: usize,
}

impl TuDataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_values.len()
    }

    /// Width of the one-hot vertex signal (1 when vertices are unlabeled).
    pub fn signal_width(&self) -> usize {
        self.num_vertex_categories.max(1)
    }

    /// Width of the edge labels: one-hot categories plus a self-loop
    /// category, or 1 when edges are unlabeled.
    pub fn label_width(&self) -> usize {
        if self.num_edge_categories == 0 {
            1
        } else {
            self.num_edge_categories + 1
        }
    }

    /// Finalized graph `index` with one-hot vertex signal and edge labels.
    /// Unlabeled edges (and their self-loops) get the constant label `[1]`.
    pub fn labeled_graph(&self, index: usize) -> Result<LabeledGraph> {
        let g = self.graphs.get(index).ok_or(EccError::Index {
            what: "graph",
            index,
            len: self.graphs.len(),
        })?;
        let d = self.signal_width();
        let mut signal = Tensor::zeros(&[g.num_vertices, d]);
        match &g.vertex_categories {
            Some(cats) => cats.iter().enumerate().for_each(|(v, &c)| signal.row_mut(v)[c] = 1.0),
            None => signal.data_mut().fill(1.0),
        }
        let s = self.label_width();
        let mut labels = Tensor::zeros(&[g.edges.len(), s]);
        let mut self_loop = vec![0.0; s];
        match &g.edge_categories {
            Some(cats) => {
                cats.iter().enumerate().for_each(|(e, &c)| labels.row_mut(e)[c] = 1.0);
                self_loop[s - 1] = 1.0;
            }
            None => {
                labels.data_mut().fill(1.0);
                self_loop[0] = 1.0;
            }
        }
        LabeledGraph::new(g.num_vertices, &g.edges, labels, signal)?.finalize(&self_loop)
    }

    pub fn mean_vertices(&self) -> f64 {
        self.graphs.iter().map(|g| g.num_vertices).sum::<usize>() as f64 / self.len().max(1) as f64
    }

    /// Mean number of undirected edges.
    pub fn mean_edges(&self) -> f64 {
        self.graphs.iter().map(|g| g.edges.len()).sum::<usize>() as f64 / 2.0 / self.len().max(1) as f64
    }
}

/// Reads `<dir>/<NAME>_A.txt`, `_graph_indicator.txt`, `_graph_labels.txt`
/// and, when present, `_node_labels.txt` and `_edge_labels.txt`. The dataset
/// name is taken from the `_A.txt` file in `dir`.
pub fn load_tu(dir: &Path) -> Result<TuDataset> {
    let entries = fs::read_dir(dir).map_err(|_| EccError::MissingFile(dir.to_path_buf()))?;
    let mut name = None;
    for entry in entries {
        let file = entry?.file_name().to_string_lossy().into_owned();
        if let Some(stem) = file.strip_suffix("_A.txt") {
            name = Some(stem.to_string());
        }
    }
    let name = name.ok_or_else(|| EccError::MissingFile(dir.join("<NAME>_A.txt")))?;
    let path = |suffix: &str| dir.join(format!("{name}_{suffix}.txt"));

    let indicator = read_ints(&path("graph_indicator"), 1)?;
    let graph_labels = read_ints(&path("graph_labels"), 1)?;
    let adjacency = read_ints(&path("A"), 2)?;
    let node_labels = optional(&path("node_labels"))?.map(|p| read_ints(&p, 1)).transpose()?;
    let edge_labels = optional(&path("edge_labels"))?.map(|p| read_ints(&p, 1)).transpose()?;

    let n_graphs = graph_labels.len();
    let n_vertices = indicator.len();
    let integrity = |file: &Path, message: String| EccError::Integrity {
        file: file.display().to_string(),
        message,
    };
    // Graph of every vertex and the local index of the vertex inside it.
    let mut graph_of = Vec::with_capacity(n_vertices);
    let mut local = Vec::with_capacity(n_vertices);
    let mut sizes = vec![0usize; n_graphs];
    for (line, row) in indicator.iter().enumerate() {
        let g = row[0];
        if g < 1 || g as usize > n_graphs {
            return Err(integrity(&path("graph_indicator"), format!("line {}: graph id {g} out of 1..={n_graphs}", line + 1)));
        }
        let g = g as usize - 1;
        if graph_of.last().is_some_and(|&p| p > g) {
            return Err(integrity(&path("graph_indicator"), format!("line {}: graph ids must be non-decreasing", line + 1)));
        }
        graph_of.push(g);
        local.push(sizes[g]);
        sizes[g] += 1;
    }
    let node_cats = match &node_labels {
        Some(rows) if rows.len() != n_vertices => {
            return Err(integrity(&path("node_labels"), format!("{} labels for {n_vertices} vertices", rows.len())))
        }
        Some(rows) => Some(categories(rows)),
        None => None,
    };
    let edge_cats = match &edge_labels {
        Some(rows) if rows.len() != adjacency.len() => {
            return Err(integrity(&path("edge_labels"), format!("{} labels for {} edges", rows.len(), adjacency.len())))
        }
        Some(rows) => Some(categories(rows)),
        None => None,
    };

    let mut graphs: Vec<TuGraph> = sizes
        .iter()
        .map(|&n| TuGraph {
            num_vertices: n,
            edges: Vec::new(),
            edge_categories: edge_cats.as_ref().map(|_| Vec::new()),
            vertex_categories: node_cats.as_ref().map(|_| Vec::new()),
        })
        .collect();
    if let Some((cats, _)) = &node_cats {
        for (v, &c) in cats.iter().enumerate() {
            graphs[graph_of[v]].vertex_categories.as_mut().expect("labeled").push(c);
        }
    }
    // Directed pairs per graph, used to add missing reverse edges.
    let mut seen: Vec<BTreeMap<(usize, usize), usize>> = vec![BTreeMap::new(); n_graphs];
    for (line, row) in adjacency.iter().enumerate() {
        let check = |v: i64| -> Result<usize> {
            if v < 1 || v as usize > n_vertices {
                Err(integrity(&path("A"), format!("line {}: vertex id {v} out of 1..={n_vertices}", line + 1)))
            } else {
                Ok(v as usize - 1)
            }
        };
        let (a, b) = (check(row[0])?, check(row[1])?);
        if graph_of[a] != graph_of[b] {
            return Err(integrity(&path("A"), format!("line {}: edge joins two graphs", line + 1)));
        }
        let g = graph_of[a];
        let cat = edge_cats.as_ref().map_or(0, |(c, _)| c[line]);
        seen[g].entry((local[a], local[b])).or_insert(cat);
    }
    for (g, pairs) in seen.iter().enumerate() {
        let mut all = pairs.clone();
        for (&(a, b), &c) in pairs {
            all.entry((b, a)).or_insert(c);
        }
        let graph = &mut graphs[g];
        for ((a, b), c) in all {
            graph.edges.push((a, b));
            if let Some(cats) = &mut graph.edge_categories {
                cats.push(c);
            }
        }
    }

    let mut class_values: Vec<i64> = graph_labels.iter().map(|r| r[0]).collect();
    class_values.sort_unstable();
    class_values.dedup();
    let labels = graph_labels
        .iter()
        .map(|r| class_values.binary_search(&r[0]).expect("present"))
        .collect();
    Ok(TuDataset {
        name,
        graphs,
        labels,
        class_values,
        num_vertex_categories: node_cats.map_or(0, |(_, k)| k),
        num_edge_categories: edge_cats.map_or(0, |(_, k)| k),
    })
}

fn optional(path: &Path) -> Result<Option<PathBuf>> {
    Ok(path.exists().then(|| path.to_path_buf()))
}

/// Maps label values to dense category indices in ascending value order.
fn categories(rows: &[Vec<i64>]) -> (Vec<usize>, usize) {
    let mut values: Vec<i64> = rows.iter().map(|r| r[0]).collect();
    values.sort_unstable();
    values.dedup();
    let idx = rows.iter().map(|r| values.binary_search(&r[0]).expect("present")).collect();
    (idx, values.len())
}

/// Parses a file of comma- or whitespace-separated integers with exactly
/// `columns` values per non-empty line.
fn read_ints(path: &Path, columns: usize) -> Result<Vec<Vec<i64>>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => EccError::MissingFile(path.to_path_buf()),
        _ => EccError::Io(e),
    })?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<i64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| EccError::Integrity {
                file: path.display().to_string(),
                message: format!("line {}: {e}", k + 1),
            })?;
        if row.len() != columns {
            return Err(EccError::Integrity {
                file: path.display().to_string(),
                message: format!("line {}: expected {columns} values, found {}", k + 1, row.len()),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

const IDX_IMAGES: u32 = 2051;
const IDX_LABELS: u32 = 2049;

/// Raw IDX image file: `count` rasters of `rows x cols` bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn len(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn image(&self, k: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[k * size..(k + 1) * size]
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => EccError::MissingFile(path.to_path_buf()),
        _ => EccError::Io(e),
    })
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("four bytes")))
        .ok_or_else(|| EccError::Format("truncated IDX header".into()))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES {
        return Err(EccError::Format(format!("image file magic {magic}, expected {IDX_IMAGES}")));
    }
    let (n, rows, cols) = (be_u32(bytes, 4)? as usize, be_u32(bytes, 8)? as usize, be_u32(bytes, 12)? as usize);
    let body = &bytes[16..];
    if body.len() != n * rows * cols {
        return Err(EccError::Format(format!(
            "image file holds {} bytes, header announces {n} x {rows} x {cols}",
            body.len()
        )));
    }
    Ok(IdxImages {
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS {
        return Err(EccError::Format(format!("label file magic {magic}, expected {IDX_LABELS}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(EccError::Format(format!("label file holds {} labels, header announces {n}", body.len())));
    }
    Ok(body.to_vec())
}

/// Point cloud of one raster: pixel at column `x`, row `y` becomes the point
/// `(x, y, 0)` with its intensity as the only feature. `sparse` drops black
/// pixels and yields `None` for an all-black image.
pub fn image_to_cloud(pixels: &[u8], rows: usize, cols: usize, sparse: bool) -> Result<Option<PointCloud>> {
    let mut points = Vec::new();
    let mut values = Vec::new();
    for y in 0..rows {
        for x in 0..cols {
            let v = pixels[y * cols + x];
            if sparse && v == 0 {
                continue;
            }
            points.push([x as f64, y as f64, 0.0]);
            values.push(f64::from(v));
        }
    }
    if points.is_empty() {
        return Ok(None);
    }
    let n = points.len();
    Ok(Some(PointCloud::new(points, Some(Tensor::new(&[n, 1], values)?))?))
}

/// Labelled point clouds from an IDX image/label file pair. In sparse mode
/// all-black images are skipped with a warning.
pub fn load_mnist(images: &Path, labels: &Path, sparse: bool) -> Result<Vec<(PointCloud, usize)>> {
    let imgs = parse_idx_images(&read_file(images)?)?;
    let labs = parse_idx_labels(&read_file(labels)?)?;
    if imgs.len() != labs.len() {
        return Err(EccError::Format(format!("{} images but {} labels", imgs.len(), labs.len())));
    }
    let mut out = Vec::with_capacity(labs.len());
    for (k, &label) in labs.iter().enumerate() {
        match image_to_cloud(imgs.image(k), imgs.rows, imgs.cols, sparse)? {
            Some(pc) => out.push((pc, label as usize)),
            None => warn!("image {k} is entirely black; skipped"),
        }
    }
    Ok(out)
}

/// Point-cloud dataset laid out as `<root>/<class>/<file>.{csv,ply}`. Class
/// indices follow the sorted subfolder names.
pub fn load_cloud_directory(root: &Path) -> Result<(Vec<(PointCloud, usize)>, Vec<String>)> {
    let mut classes: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|_| EccError::MissingFile(root.to_path_buf()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    classes.sort();
    let mut out = Vec::new();
    let mut names = Vec::with_capacity(classes.len());
    for (c, dir) in classes.iter().enumerate() {
        names.push(dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        files.sort();
        for f in files {
            let pc = match f.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
                Some("csv") => crate::pointcloud::io::read_csv(&f)?,
                Some("ply") => crate::pointcloud::io::read_ply(&f)?,
                _ => continue,
            };
            out.push((pc, c));
        }
    }
    if out.is_empty() {
        return Err(EccError::Format(format!("no .csv or .ply clouds below {}", root.display())));
    }
    Ok((out, names))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    fn fixture(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("ecc-tu-{tag}-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn single_edge_graph() {
        let dir = fixture("one");
        write(&dir, "T_A.txt", "1, 2\n");
        write(&dir, "T_graph_indicator.txt", "1\n1\n");
        write(&dir, "T_graph_labels.txt", "1\n");
        let ds = load_tu(&dir).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.graphs[0].num_vertices, 2);
        assert_eq!(ds.graphs[0].edges, vec![(0, 1), (1, 0)]);
        let g = ds.labeled_graph(0).unwrap();
        assert_eq!(g.num_edges(), 4);
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn missing_and_dangling() {
        let dir = fixture("bad");
        write(&dir, "T_A.txt", "1, 3\n");
        assert!(matches!(load_tu(&dir), Err(EccError::MissingFile(_))));
        write(&dir, "T_graph_indicator.txt", "1\n1\n");
        write(&dir, "T_graph_labels.txt", "1\n");
        assert!(matches!(load_tu(&dir), Err(EccError::Integrity { .. })));
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn idx_magic_checked() {
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 7];
        assert_eq!(parse_idx_images(&bytes).unwrap().pixels, vec![7]);
        bytes[3] = 1;
        assert!(matches!(parse_idx_images(&bytes), Err(EccError::Format(_))));
    }

    #[test]
    fn pixel_maps_to_point() {
        let mut img = vec![0u8; 28 * 28];
        img[5 * 28 + 3] = 77;
        let dense = image_to_cloud(&img, 28, 28, false).unwrap().unwrap();
        assert_eq!(dense.len(), 784);
        let sparse = image_to_cloud(&img, 28, 28, true).unwrap().unwrap();
        assert_eq!(sparse.points(), &[[3.0, 5.0, 0.0]]);
        assert_eq!(sparse.features().unwrap().data(), &[77.0]);
        assert!(image_to_cloud(&[0; 4], 2, 2, true).unwrap().is_none());
    }
}
