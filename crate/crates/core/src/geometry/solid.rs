use nalgebra::Vector2;

use super::builder::MeshBuilder;
use super::{FamilyId, PeriodicMesh};

/// Square cell of side `size` filled with material.
pub(super) fn build(size: f64, resolution: usize) -> PeriodicMesh {
    let n = 2 * resolution;
    let h = size / n as f64;
    let mut b = MeshBuilder::default();
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    for j in 0..=n {
        for i in 0..=n {
            b.vertex(Vector2::new(i as f64 * h, j as f64 * h));
        }
    }
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            b.triangle(v00, v10, v11);
            b.triangle(v00, v11, v01);
        }
    }
    for j in 0..=n {
        b.x_pairs.push((idx(0, j), idx(n, j)));
    }
    for i in 0..=n {
        b.y_pairs.push((idx(i, 0), idx(i, n)));
    }
    for j in 0..n {
        b.x_edges
            .push(([idx(0, j), idx(0, j + 1)], [idx(n, j), idx(n, j + 1)]));
    }
    for i in 0..n {
        b.y_edges
            .push(([idx(i, 0), idx(i + 1, 0)], [idx(i, n), idx(i + 1, n)]));
    }
    let lattice = [Vector2::new(size, 0.0), Vector2::new(0.0, size)];
    b.finish(FamilyId::SolidCell, resolution, lattice)
}
