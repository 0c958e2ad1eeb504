use nalgebra::Vector2;
use std::collections::HashMap;

use super::{BoundarySides, FamilyId, PeriodicMesh};

/// Corner-level triangulation that is upgraded to six-node elements.
#[derive(Default)]
pub(super) struct MeshBuilder {
    pub positions: Vec<Vector2<f64>>,
    pub triangles: Vec<[usize; 3]>,
    /// Corner edges on the left side matched with their right images.
    pub x_edges: Vec<([usize; 2], [usize; 2])>,
    /// Corner edges on the bottom side matched with their top images.
    pub y_edges: Vec<([usize; 2], [usize; 2])>,
    pub x_pairs: Vec<(usize, usize)>,
    pub y_pairs: Vec<(usize, usize)>,
}

impl MeshBuilder {
    pub fn vertex(&mut self, p: Vector2<f64>) -> usize {
        self.positions.push(p);
        self.positions.len() - 1
    }

    pub fn triangle(&mut self, a: usize, b: usize, c: usize) {
        self.triangles.push([a, b, c]);
    }

    pub fn finish(
        mut self,
        family: FamilyId,
        resolution: usize,
        lattice: [Vector2<f64>; 2],
    ) -> PeriodicMesh {
        let mut midnodes: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edge_use: HashMap<(usize, usize), usize> = HashMap::new();
        let mut elements = Vec::with_capacity(self.triangles.len());
        let triangles = std::mem::take(&mut self.triangles);
        for t in &triangles {
            let mut e = [t[0], t[1], t[2], 0, 0, 0];
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *edge_use.entry(key).or_insert(0) += 1;
                let id = match midnodes.get(&key) {
                    Some(&id) => id,
                    None => {
                        let p = 0.5 * (self.positions[a] + self.positions[b]);
                        let id = self.vertex(p);
                        midnodes.insert(key, id);
                        id
                    }
                };
                e[3 + k] = id;
            }
            elements.push(e);
        }
        let mid = |a: usize, b: usize| midnodes[&(a.min(b), a.max(b))];

        let mut sides = BoundarySides::default();
        let mut pairs_x = self.x_pairs.clone();
        let mut pairs_y = self.y_pairs.clone();
        let mut on_side: HashMap<(usize, usize), ()> = HashMap::new();
        for (edges, pairs, lo, hi) in [
            (
                &self.x_edges,
                &mut pairs_x,
                &mut sides.left,
                &mut sides.right,
            ),
            (
                &self.y_edges,
                &mut pairs_y,
                &mut sides.bottom,
                &mut sides.top,
            ),
        ] {
            for &([a, b], [c, d]) in edges {
                let (m0, m1) = (mid(a, b), mid(c, d));
                pairs.push((m0, m1));
                lo.push([a, m0, b]);
                hi.push([c, m1, d]);
                on_side.insert((a.min(b), a.max(b)), ());
                on_side.insert((c.min(d), c.max(d)), ());
            }
        }

        let mut surface_segments = Vec::new();
        for (t, e) in triangles.iter().zip(&elements) {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                if edge_use[&key] == 1 && !on_side.contains_key(&key) {
                    surface_segments.push([a, e[3 + k]]);
                    surface_segments.push([e[3 + k], b]);
                }
            }
        }

        let rest_area = triangles
            .iter()
            .map(|t| {
                let p = &self.positions;
                0.5 * (p[t[1]] - p[t[0]]).perp(&(p[t[2]] - p[t[0]]))
            })
            .sum();

        PeriodicMesh {
            family,
            resolution,
            rest_positions: self.positions,
            elements,
            periodic_pairs_x: pairs_x,
            periodic_pairs_y: pairs_y,
            boundary_edges: sides,
            surface_segments,
            lattice,
            rest_area,
        }
    }
}
