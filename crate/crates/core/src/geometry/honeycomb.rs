//! Hexagonal wire network: four vertices per rectangular cell joined by
//! beams of constant half-width. Beams crossing the cell border are cut
//! there; the cut faces on opposite sides are periodic images.

use nalgebra::Vector2;

use super::builder::MeshBuilder;
use super::{FamilyId, FamilySpec, PeriodicMesh};
use crate::error::{Error, Result};

type V2 = Vector2<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

struct BeamDef {
    from: usize,
    to: usize,
    /// Lattice shift applied to the `to` vertex.
    shift: (i32, i32),
    cut: Option<Side>,
    /// Cut beams on the right/top are images of a left/bottom beam.
    image_of: Option<usize>,
}

const fn node(from: usize, to: usize) -> BeamDef {
    BeamDef {
        from,
        to,
        shift: (0, 0),
        cut: None,
        image_of: None,
    }
}

const BEAMS: [BeamDef; 9] = [
    BeamDef {
        from: 0,
        to: 3,
        shift: (0, -1),
        cut: Some(Side::Bottom),
        image_of: None,
    },
    BeamDef {
        from: 3,
        to: 0,
        shift: (0, 1),
        cut: Some(Side::Top),
        image_of: Some(0),
    },
    node(0, 1),
    node(1, 2),
    node(2, 3),
    BeamDef {
        from: 0,
        to: 1,
        shift: (-1, 0),
        cut: Some(Side::Left),
        image_of: None,
    },
    BeamDef {
        from: 1,
        to: 0,
        shift: (1, 0),
        cut: Some(Side::Right),
        image_of: Some(5),
    },
    BeamDef {
        from: 3,
        to: 2,
        shift: (-1, 0),
        cut: Some(Side::Left),
        image_of: None,
    },
    BeamDef {
        from: 2,
        to: 3,
        shift: (1, 0),
        cut: Some(Side::Right),
        image_of: Some(7),
    },
];

/// Identity of a polygon corner up to a lattice translation.
pub(super) type CornerKey = (u32, i32, i32);

#[derive(Clone, Copy, Debug)]
pub(super) struct Corner {
    pub p: V2,
    pub key: CornerKey,
}

impl Corner {
    fn shifted(&self, lattice: &[V2; 2], s: (i32, i32)) -> Corner {
        Corner {
            p: self.p + s.0 as f64 * lattice[0] + s.1 as f64 * lattice[1],
            key: (self.key.0, self.key.1 + s.0, self.key.2 + s.1),
        }
    }
}

/// Beam incident to a vertex: beam index and whether it leaves the vertex.
type Incidence = (usize, bool);

struct Layout {
    lattice: [V2; 2],
    nodes: [V2; 4],
    half_width: f64,
}

impl Layout {
    fn new(size: f64, params: &[f64]) -> Self {
        let w_cell = size;
        let a = size / 3f64.sqrt();
        let h = 3.0 * a;
        let half_width = params.first().copied().unwrap_or(0.075) * size;
        let s = params.get(1).copied().unwrap_or(0.0) * size;
        let u = params.get(2).copied().unwrap_or(0.0) * size;
        Self {
            lattice: [V2::new(w_cell, 0.0), V2::new(0.0, h)],
            nodes: [
                V2::new(0.25 * w_cell, 0.5 * a),
                V2::new(0.75 * w_cell + u, a + s),
                V2::new(0.75 * w_cell + u, 2.0 * a - s),
                V2::new(0.25 * w_cell, 2.5 * a),
            ],
            half_width,
        }
    }

    fn target(&self, b: usize) -> V2 {
        let d = &BEAMS[b];
        self.nodes[d.to] + d.shift.0 as f64 * self.lattice[0] + d.shift.1 as f64 * self.lattice[1]
    }

    fn dir(&self, b: usize) -> V2 {
        (self.target(b) - self.nodes[BEAMS[b].from]).normalize()
    }

    /// Outgoing unit direction of an incidence.
    fn out_dir(&self, (b, forward): Incidence) -> V2 {
        if forward {
            self.dir(b)
        } else {
            -self.dir(b)
        }
    }

    /// Beams around each vertex in counter-clockwise order.
    fn incidences(&self) -> [[Incidence; 3]; 4] {
        let mut lists: [Vec<Incidence>; 4] = Default::default();
        for (b, d) in BEAMS.iter().enumerate() {
            lists[d.from].push((b, true));
            if d.cut.is_none() {
                lists[d.to].push((b, false));
            }
        }
        lists.map(|mut l| {
            l.sort_by(|&x, &y| {
                let dx = self.out_dir(x);
                let dy = self.out_dir(y);
                dx.y.atan2(dx.x).total_cmp(&dy.y.atan2(dy.x))
            });
            [l[0], l[1], l[2]]
        })
    }
}

fn perp(v: V2) -> V2 {
    V2::new(-v.y, v.x)
}

/// Intersection of `p + s u` and `q + t v`.
fn intersect(p: V2, u: V2, q: V2, v: V2) -> Option<V2> {
    let det = u.perp(&(-v));
    if det.abs() < 1e-12 {
        return None;
    }
    let r = q - p;
    let s = r.perp(&(-v)) / det;
    Some(p + s * u)
}

/// Polygonal decomposition of the cell: one triangle per vertex and one
/// quadrilateral per beam.
pub(super) struct Skeleton {
    pub lattice: [V2; 2],
    order: [[Incidence; 3]; 4],
    /// Junction corners per vertex, counter-clockwise.
    pub junctions: [[Corner; 3]; 4],
    /// Per beam: start right, start left, end right, end left, relative
    /// to the beam direction.
    pub beam_ends: Vec<[Corner; 4]>,
}

fn degenerate(msg: impl Into<String>) -> Error {
    Error::DegenerateGeometry(msg.into())
}

/// With `strict` unset, folded junctions and strips are returned as-is so
/// that overlap can be inspected.
pub(super) fn skeleton(spec: &FamilySpec, params: &[f64], strict: bool) -> Result<Skeleton> {
    let size = spec.base_cell_size;
    // Connectivity is fixed by the regular layout.
    let order = Layout::new(size, &[]).incidences();
    let layout = Layout::new(size, params);
    let hw = layout.half_width;
    if !(hw > 0.0) {
        return Err(degenerate("non-positive beam width"));
    }

    let mut junctions = [[Corner {
        p: V2::zeros(),
        key: (0, 0, 0),
    }; 3]; 4];
    for (n, incs) in order.iter().enumerate() {
        let x = layout.nodes[n];
        for i in 0..3 {
            let u = layout.out_dir(incs[i]);
            let v = layout.out_dir(incs[(i + 1) % 3]);
            let p = intersect(x + hw * perp(u), u, x - hw * perp(v), v)
                .ok_or_else(|| degenerate(format!("parallel beams at vertex {n}")))?;
            junctions[n][i] = Corner {
                p,
                key: (3 * n as u32 + i as u32, 0, 0),
            };
        }
        let [c0, c1, c2] = junctions[n].map(|c| c.p);
        if strict && !((c1 - c0).perp(&(c2 - c0)) > 0.0) {
            return Err(degenerate(format!("junction {n} folds over")));
        }
    }

    // End segment (right, left) of an incidence at its vertex.
    let end_at = |n: usize, inc: Incidence| -> [Corner; 2] {
        let i = order[n].iter().position(|&x| x == inc).unwrap();
        [junctions[n][(i + 2) % 3], junctions[n][i]]
    };

    let mut beam_ends: Vec<[Corner; 4]> = Vec::with_capacity(BEAMS.len());
    for (b, d) in BEAMS.iter().enumerate() {
        let [sr, sl] = end_at(d.from, (b, true));
        let [er, el] = match (d.cut, d.image_of) {
            (None, _) => {
                let [r, l] = end_at(d.to, (b, false));
                [l, r]
            }
            (Some(_), Some(orig)) => {
                let o = &beam_ends[orig];
                // The image runs the opposite way, so right and left swap.
                let image = (-BEAMS[orig].shift.0, -BEAMS[orig].shift.1);
                [
                    o[3].shifted(&layout.lattice, image),
                    o[2].shifted(&layout.lattice, image),
                ]
            }
            (Some(side), None) => {
                let u = layout.dir(b);
                let x = layout.nodes[d.from];
                let cut = |base: V2| -> Result<V2> {
                    let (coord, along, bound, span) = match side {
                        Side::Left => (base.x, u.x, 0.0, layout.lattice[1].y),
                        Side::Right => (base.x, u.x, layout.lattice[0].x, layout.lattice[1].y),
                        Side::Bottom => (base.y, u.y, 0.0, layout.lattice[0].x),
                        Side::Top => (base.y, u.y, layout.lattice[1].y, layout.lattice[0].x),
                    };
                    if along.abs() < 1e-12 {
                        return Err(degenerate(format!("beam {b} parallel to its cut")));
                    }
                    let p = base + (bound - coord) / along * u;
                    let t = match side {
                        Side::Left | Side::Right => p.y,
                        Side::Bottom | Side::Top => p.x,
                    };
                    if strict && !(t > 0.0 && t < span) {
                        return Err(degenerate(format!("beam {b} leaves the cell off its side")));
                    }
                    Ok(p)
                };
                let key = |k: u32| (100 + 2 * b as u32 + k, 0, 0);
                [
                    Corner {
                        p: cut(x - hw * perp(u))?,
                        key: key(0),
                    },
                    Corner {
                        p: cut(x + hw * perp(u))?,
                        key: key(1),
                    },
                ]
            }
        };
        for (tri, label) in [([sr, er, el], "right"), ([sr, el, sl], "left")] {
            let [a, bb, c] = tri.map(|c| c.p);
            if strict && !((bb - a).perp(&(c - a)) > 0.0) {
                return Err(degenerate(format!(
                    "beam {b} strip folds over ({label} half)"
                )));
            }
        }
        beam_ends.push([sr, sl, er, el]);
    }

    Ok(Skeleton {
        lattice: layout.lattice,
        order,
        junctions,
        beam_ends,
    })
}

fn lerp(a: V2, b: V2, t: f64) -> V2 {
    a + t * (b - a)
}

pub(super) fn build(spec: &FamilySpec, params: &[f64], resolution: usize) -> Result<PeriodicMesh> {
    let sk = skeleton(spec, params, true)?;
    let m = resolution;
    let mut b = MeshBuilder::default();

    // Junction lattices; `edges[n][e]` lists vertices along c_e → c_{e+1}.
    let mut edges: Vec<[Vec<usize>; 3]> = Vec::with_capacity(4);
    for j in &sk.junctions {
        let [c0, c1, c2] = j.map(|c| c.p);
        let mut grid = vec![vec![0usize; m + 1]; m + 1];
        for i in 0..=m {
            for k in 0..=(m - i) {
                let p = c0 + (i as f64 / m as f64) * (c1 - c0) + (k as f64 / m as f64) * (c2 - c0);
                grid[i][k] = b.vertex(p);
            }
        }
        for i in 0..m {
            for k in 0..(m - i) {
                b.triangle(grid[i][k], grid[i + 1][k], grid[i][k + 1]);
                if i + k + 2 <= m {
                    b.triangle(grid[i + 1][k], grid[i + 1][k + 1], grid[i][k + 1]);
                }
            }
        }
        edges.push([
            (0..=m).map(|t| grid[t][0]).collect(),
            (0..=m).map(|t| grid[m - t][t]).collect(),
            (0..=m).map(|t| grid[0][m - t]).collect(),
        ]);
    }
    // Right-to-left vertex list at the vertex end of an incidence.
    let end_list = |n: usize, inc: Incidence| -> Vec<usize> {
        let i = sk.order[n].iter().position(|&x| x == inc).unwrap();
        edges[n][(i + 2) % 3].clone()
    };

    let mut cut_lists: Vec<Vec<usize>> = vec![Vec::new(); BEAMS.len()];
    for (beam, d) in BEAMS.iter().enumerate() {
        let start = end_list(d.from, (beam, true));
        let end: Vec<usize> = match (d.cut, d.image_of) {
            (None, _) => {
                let mut l = end_list(d.to, (beam, false));
                l.reverse();
                l
            }
            (Some(side), None) => {
                let [_, _, er, el] = sk.beam_ends[beam];
                let list: Vec<usize> = (0..=m)
                    .map(|t| b.vertex(lerp(er.p, el.p, t as f64 / m as f64)))
                    .collect();
                debug_assert!(matches!(side, Side::Left | Side::Bottom));
                cut_lists[beam] = list.clone();
                list
            }
            (Some(side), Some(orig)) => {
                let shift = -(BEAMS[orig].shift.0 as f64) * sk.lattice[0]
                    - BEAMS[orig].shift.1 as f64 * sk.lattice[1];
                let src = cut_lists[orig].clone();
                let list: Vec<usize> = src
                    .iter()
                    .rev()
                    .map(|&v| {
                        let p = b.positions[v] + shift;
                        b.vertex(p)
                    })
                    .collect();
                for (k, &v) in src.iter().enumerate() {
                    let img = list[m - k];
                    match side {
                        Side::Right => b.x_pairs.push((v, img)),
                        _ => b.y_pairs.push((v, img)),
                    }
                }
                for k in 0..m {
                    let e = ([src[k], src[k + 1]], [list[m - k], list[m - k - 1]]);
                    match side {
                        Side::Right => b.x_edges.push(e),
                        _ => b.y_edges.push(e),
                    }
                }
                list
            }
        };

        let n_long = if d.cut.is_some() { 2 * m } else { 4 * m };
        let mut rows: Vec<Vec<usize>> = Vec::with_capacity(n_long + 1);
        rows.push(start.clone());
        for r in 1..n_long {
            let t = r as f64 / n_long as f64;
            let row = (0..=m)
                .map(|c| {
                    let p = lerp(b.positions[start[c]], b.positions[end[c]], t);
                    b.vertex(p)
                })
                .collect();
            rows.push(row);
        }
        rows.push(end);
        for r in 0..n_long {
            for c in 0..m {
                let (v00, v10, v11, v01) = (
                    rows[r][c],
                    rows[r + 1][c],
                    rows[r + 1][c + 1],
                    rows[r][c + 1],
                );
                b.triangle(v00, v10, v11);
                b.triangle(v00, v11, v01);
            }
        }
    }

    Ok(b.finish(FamilyId::Honeycomb, resolution, sk.lattice))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_layout_has_equal_edges() {
        let l = Layout::new(1.0, &[0.05]);
        let a = 1.0 / 3f64.sqrt();
        for b in 0..BEAMS.len() {
            let len = (l.target(b) - l.nodes[BEAMS[b].from]).norm();
            assert!((len - a).abs() < 1e-14, "beam {b}: {len}");
        }
    }

    #[test]
    fn every_vertex_has_three_beams() {
        let order = Layout::new(1.0, &[]).incidences();
        let mut count = [0usize; 9];
        for incs in &order {
            for &(b, _) in incs {
                count[b] += 1;
            }
        }
        for (b, d) in BEAMS.iter().enumerate() {
            assert_eq!(count[b], if d.cut.is_some() { 1 } else { 2 });
        }
    }
}
