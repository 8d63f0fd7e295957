//! Turning loaded datasets into pyramids ready for training.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coarsen::{self, CoarsenOptions};
use crate::datasets::TuDataset;
use crate::error::Result;
use crate::graph::GraphPyramid;
use crate::pointcloud::{self, LabelScheme, PointCloud};
use crate::train::Sample;

/// Worker threads for per-graph preprocessing: `ECC_THREADS` if set to a
/// positive integer, otherwise the available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("ECC_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// `f(0..n)` evaluated on up to `threads` scoped threads, in index order.
pub fn par_map<T, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(threads);
    let parts: Vec<Result<Vec<T>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let f = &f;
                s.spawn(move || (t * chunk..((t + 1) * chunk).min(n)).map(f).collect::<Result<Vec<T>>>())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Independent generator for item `index` of a run seeded with `seed`.
pub fn item_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Graph-benchmark samples with `expand` randomized pyramids each. With
/// `uniform_labels` every edge at every level is labeled `[1]`.
pub fn tu_samples(
    ds: &TuDataset,
    opts: &CoarsenOptions,
    expand: usize,
    uniform_labels: bool,
    seed: u64,
) -> Result<Vec<Sample>> {
    par_map(ds.len(), worker_threads(), |i| {
        let g = ds.labeled_graph(i)?;
        let mut rng = item_rng(seed, i);
        let variants = (0..expand.max(1))
            .map(|_| {
                let p = coarsen::build_pyramid(&g, opts, &mut rng)?.0;
                if uniform_labels {
                    p.with_uniform_labels()
                } else {
                    Ok(p)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sample {
            variants,
            label: ds.labels[i],
        })
    })
}

/// One deterministic pyramid per cloud. Clouds whose level-0 points
/// coincide share graph storage, so only the signals are rebuilt for them.
pub fn cloud_samples(clouds: &[(PointCloud, usize)], levels: &[(f64, f64)], scheme: LabelScheme) -> Result<Vec<Sample>> {
    let first = levels
        .first()
        .ok_or_else(|| crate::EccError::Configuration("a point-cloud pyramid needs at least one level".into()))?;
    let mut cache: HashMap<Vec<u64>, GraphPyramid> = HashMap::new();
    let mut out = Vec::with_capacity(clouds.len());
    for (pc, label) in clouds {
        let mut current = pointcloud::voxelgrid(pc, first.0)?.cloud;
        let key: Vec<u64> = current.points().iter().flatten().map(|v| v.to_bits()).collect();
        let pyramid = match cache.get(&key) {
            Some(shared) => {
                let mut signals = vec![current.signal()];
                for &(r, _) in &levels[1..] {
                    current = pointcloud::voxelgrid(&current, r)?.cloud;
                    signals.push(current.signal());
                }
                shared.with_signals(signals)?
            }
            None => {
                let p = pointcloud::build_pyramid(pc, levels, scheme)?.0;
                cache.insert(key, p.clone());
                p
            }
        };
        out.push(Sample::new(pyramid, *label));
    }
    Ok(out)
}
