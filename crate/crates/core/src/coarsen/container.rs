//! Binary pyramid container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic  b"ECCG"        version u32 (= 1)
//! levels u64            maps u64 (= levels - 1)
//! per level:  n u64, m u64, s u64, d u64,
//!             src [m] u64, dst [m] u64, labels [m*s] f64, signal [n*d] f64
//! per map:    n_fine u64, n_coarse u64, assignment [n_fine] u64
//! ```
//!
//! Levels are stored finalized (self-loops included) and re-finalized on
//! load, which rebuilds the distinct-label index.

use std::io::{Read, Write};

use crate::error::{EccError, Result};
use crate::graph::{GraphPyramid, LabeledGraph, PoolingMap};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"ECCG";
const VERSION: u32 = 1;

pub fn write_pyramid<W: Write>(out: &mut W, p: &GraphPyramid) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    put(out, p.levels().len())?;
    put(out, p.maps().len())?;
    for g in p.levels() {
        for v in [g.num_vertices(), g.num_edges(), g.label_width(), g.signal_width()] {
            put(out, v)?;
        }
        for &v in g.sources().iter().chain(g.targets()) {
            put(out, v)?;
        }
        for &v in g.edge_labels().data().iter().chain(g.vertex_signal().data()) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    for m in p.maps() {
        put(out, m.n_fine())?;
        put(out, m.n_coarse())?;
        for &a in m.assignment() {
            put(out, a)?;
        }
    }
    Ok(())
}

pub fn read_pyramid<R: Read>(input: &mut R) -> Result<GraphPyramid> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(EccError::Format("not a pyramid container".into()));
    }
    let mut version = [0u8; 4];
    input.read_exact(&mut version)?;
    if u32::from_le_bytes(version) != VERSION {
        return Err(EccError::Format(format!("unsupported container version {}", u32::from_le_bytes(version))));
    }
    let (nl, nm) = (get(input)?, get(input)?);
    let mut levels = Vec::with_capacity(nl.min(64));
    for _ in 0..nl {
        let (n, m, s, d) = (get(input)?, get(input)?, get(input)?, get(input)?);
        let src = (0..m).map(|_| get(input)).collect::<Result<Vec<_>>>()?;
        let dst = (0..m).map(|_| get(input)).collect::<Result<Vec<_>>>()?;
        let labels = (0..m * s).map(|_| get_f64(input)).collect::<Result<Vec<_>>>()?;
        let signal = (0..n * d).map(|_| get_f64(input)).collect::<Result<Vec<_>>>()?;
        let edges: Vec<(usize, usize)> = src.into_iter().zip(dst).collect();
        let g = LabeledGraph::new(n, &edges, Tensor::new(&[m, s], labels)?, Tensor::new(&[n, d], signal)?)?;
        // Every vertex already has its loop, so the label passed is unused.
        levels.push(g.finalize(&vec![0.0; s])?);
    }
    let mut maps = Vec::with_capacity(nm.min(64));
    for _ in 0..nm {
        let (fine, coarse) = (get(input)?, get(input)?);
        let assign = (0..fine).map(|_| get(input)).collect::<Result<Vec<_>>>()?;
        maps.push(PoolingMap::new(assign, coarse)?);
    }
    GraphPyramid::new(levels, maps)
}

fn put<W: Write>(out: &mut W, v: usize) -> Result<()> {
    out.write_all(&(v as u64).to_le_bytes())?;
    Ok(())
}

fn get<R: Read>(input: &mut R) -> Result<usize> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    usize::try_from(u64::from_le_bytes(b)).map_err(|_| EccError::Format("count does not fit in memory".into()))
}

fn get_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarsen::{build_pyramid, CoarsenOptions, DegreeLabels};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip() {
        let edges: Vec<(usize, usize)> = (0..7).flat_map(|i| [(i, i + 1), (i + 1, i)]).collect();
        let g = LabeledGraph::new(8, &edges, Tensor::full(&[14, 1], 2.0), Tensor::full(&[8, 2], 0.5))
            .unwrap()
            .finalize(&[0.0])
            .unwrap();
        let opts = CoarsenOptions {
            levels: 2,
            q: Some(4.0),
            degree_labels: DegreeLabels::InvSqrt,
        };
        let (p, _) = build_pyramid(&g, &opts, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut buf = Vec::new();
        write_pyramid(&mut buf, &p).unwrap();
        assert_eq!(read_pyramid(&mut buf.as_slice()).unwrap(), p);
        assert!(read_pyramid(&mut &b"XXXX"[..]).is_err());
    }
}
