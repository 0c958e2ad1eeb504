use nalgebra::Vector2;

use crate::geometry::PeriodicMesh;

/// Linear map from the reduced unknowns to full vertex positions.
///
/// The reduced vector holds the positions of all root vertices (vertices
/// that are not the image of another one) followed by the two lattice
/// translations `t_ij`, `t_kl`. Unknowns are grouped in 2-component blocks:
/// block `r < n_free` is root `r`, then `t_ij`, then `t_kl`.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub root: Vec<usize>,
    pub shift: Vec<(i32, i32)>,
    pub free_vertices: Vec<usize>,
}

/// Reduced block index and coefficient.
pub type Term = (usize, f64);

impl DofMap {
    pub fn new(mesh: &PeriodicMesh) -> Self {
        let n = mesh.vertex_count();
        let mut parent: Vec<Option<(usize, (i32, i32))>> = vec![None; n];
        for &(i, j) in &mesh.periodic_pairs_x {
            parent[j] = Some((i, (1, 0)));
        }
        for &(k, l) in &mesh.periodic_pairs_y {
            if parent[l].is_none() {
                parent[l] = Some((k, (0, 1)));
            }
        }
        let mut root_vertex = vec![0; n];
        let mut shift = vec![(0, 0); n];
        for v in 0..n {
            let (mut r, mut s) = (v, (0, 0));
            while let Some((p, d)) = parent[r] {
                r = p;
                s = (s.0 + d.0, s.1 + d.1);
            }
            root_vertex[v] = r;
            shift[v] = s;
        }
        let mut index = vec![usize::MAX; n];
        let mut free_vertices = Vec::new();
        for v in 0..n {
            if parent[v].is_none() {
                index[v] = free_vertices.len();
                free_vertices.push(v);
            }
        }
        let root = root_vertex.iter().map(|&r| index[r]).collect();
        Self {
            root,
            shift,
            free_vertices,
        }
    }

    pub fn n_free(&self) -> usize {
        self.free_vertices.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.n_free() + 2
    }

    pub fn ndof(&self) -> usize {
        2 * self.n_blocks()
    }

    pub fn tij_block(&self) -> usize {
        self.n_free()
    }

    pub fn tkl_block(&self) -> usize {
        self.n_free() + 1
    }

    /// Blocks and coefficients of vertex `v` translated by `offset` lattice
    /// vectors: `x = x_root + (sx + ox) t_ij + (sy + oy) t_kl`.
    pub fn terms(&self, v: usize, offset: (i32, i32)) -> ([Term; 3], usize) {
        let mut out = [(0, 0.0); 3];
        out[0] = (self.root[v], 1.0);
        let mut n = 1;
        let (sx, sy) = (self.shift[v].0 + offset.0, self.shift[v].1 + offset.1);
        if sx != 0 {
            out[n] = (self.tij_block(), sx as f64);
            n += 1;
        }
        if sy != 0 {
            out[n] = (self.tkl_block(), sy as f64);
            n += 1;
        }
        (out, n)
    }

    /// Physical identity of `v` seen through `offset`: root and total shift.
    pub fn key(&self, v: usize, offset: (i32, i32)) -> (usize, i32, i32) {
        (
            self.root[v],
            self.shift[v].0 + offset.0,
            self.shift[v].1 + offset.1,
        )
    }

    fn block(q: &[f64], b: usize) -> Vector2<f64> {
        Vector2::new(q[2 * b], q[2 * b + 1])
    }

    pub fn translations(&self, q: &[f64]) -> [Vector2<f64>; 2] {
        [
            Self::block(q, self.tij_block()),
            Self::block(q, self.tkl_block()),
        ]
    }

    pub fn positions(&self, q: &[f64]) -> Vec<Vector2<f64>> {
        let [tij, tkl] = self.translations(q);
        (0..self.root.len())
            .map(|v| {
                let (sx, sy) = self.shift[v];
                Self::block(q, self.root[v]) + sx as f64 * tij + sy as f64 * tkl
            })
            .collect()
    }

    /// Reduced vector of a full configuration whose pairs satisfy the
    /// periodic relations with translations `t`.
    pub fn reduce_positions(&self, x: &[Vector2<f64>], t: [Vector2<f64>; 2]) -> Vec<f64> {
        let mut q = vec![0.0; self.ndof()];
        for (r, &v) in self.free_vertices.iter().enumerate() {
            q[2 * r] = x[v].x;
            q[2 * r + 1] = x[v].y;
        }
        for (b, tv) in [(self.tij_block(), t[0]), (self.tkl_block(), t[1])] {
            q[2 * b] = tv.x;
            q[2 * b + 1] = tv.y;
        }
        q
    }

    /// Chain rule for a gradient given per full vertex.
    pub fn reduce_gradient(&self, g: &[Vector2<f64>], out: &mut [f64]) {
        for (v, gv) in g.iter().enumerate() {
            let (terms, n) = self.terms(v, (0, 0));
            for &(b, c) in &terms[..n] {
                out[2 * b] += c * gv.x;
                out[2 * b + 1] += c * gv.y;
            }
        }
    }
}
