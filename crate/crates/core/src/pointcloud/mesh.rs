//! Uniform surface sampling of triangle meshes.

use rand::Rng;

use super::{Point, PointCloud};
use crate::error::{EccError, Result};

/// Samples `n` points uniformly by area from the triangles `faces` over
/// `vertices`.
pub fn sample_surface<R: Rng + ?Sized>(vertices: &[Point], faces: &[[usize; 3]], n: usize, rng: &mut R) -> Result<PointCloud> {
    if let Some(bad) = faces.iter().flatten().find(|&&v| v >= vertices.len()) {
        return Err(EccError::Index {
            what: "mesh vertex",
            index: *bad,
            len: vertices.len(),
        });
    }
    let mut cumulative = Vec::with_capacity(faces.len());
    let mut total = 0.0;
    for f in faces {
        let [a, b, c] = f.map(|v| vertices[v]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let w = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let cross = [u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]];
        total += 0.5 * (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(EccError::contract("mesh has no surface area"));
    }
    let points = (0..n)
        .map(|_| {
            let t = rng.random_range(0.0..total);
            let k = cumulative.partition_point(|&c| c <= t).min(faces.len() - 1);
            let [a, b, c] = faces[k].map(|v| vertices[v]);
            let (mut s, mut r): (f64, f64) = (rng.random(), rng.random());
            if s + r > 1.0 {
                s = 1.0 - s;
                r = 1.0 - r;
            }
            std::array::from_fn(|i| a[i] + s * (b[i] - a[i]) + r * (c[i] - a[i]))
        })
        .collect();
    PointCloud::new(points, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_split_by_area() {
        // Two triangles in z=0; the second has three times the area.
        let v = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [3.0, 0.0, 0.0], [3.0, 3.0, 0.0]];
        let f = [[0, 1, 2], [1, 3, 4]];
        let pc = sample_surface(&v, &f, 20_000, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let first = pc.points().iter().filter(|p| p[0] + p[1] <= 1.0 && p[0] <= 1.0).count() as f64 / 20_000.0;
        assert!((first - 0.5 / 3.5).abs() < 0.02, "{first}");
        assert!(pc.points().iter().all(|p| p[2] == 0.0));
    }
}
