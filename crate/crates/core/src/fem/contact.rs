//! Log-barrier self-contact between surface points and surface segments of
//! the cell and its eight periodic neighbours.

use nalgebra::{Matrix2, Vector2};
use std::collections::HashMap;

use super::dofs::DofMap;
use super::sparse::BlockTriplets;
use crate::error::{Error, Result};
use crate::geometry::PeriodicMesh;
use crate::jet::Jet;

type V2 = Vector2<f64>;

const OFFSETS: [(i32, i32); 9] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (0, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// `b(d) = −κ (d − d̂)² ln(d/d̂)` and its first three derivatives for `d < d̂`.
pub fn barrier(d: f64, dhat: f64, kappa: f64) -> [f64; 4] {
    if d >= dhat {
        return [0.0; 4];
    }
    let r = d - dhat;
    let l = (d / dhat).ln();
    [
        -kappa * r * r * l,
        -kappa * (2.0 * r * l + r * r / d),
        -kappa * (2.0 * l + 4.0 * r / d - r * r / (d * d)),
        -kappa * (2.0 / d + 4.0 * dhat / (d * d) - 2.0 * dhat * r / (d * d * d)),
    ]
}

/// Point–segment distance with derivatives in `(p, a, b)`.
fn distance_jet(p: V2, a: V2, b: V2) -> Jet {
    let v = Jet::vars(&[p.x, p.y, a.x, a.y, b.x, b.y]);
    let e = b - a;
    let t = (p - a).dot(&e) / e.norm_squared();
    let point = |qx: Jet, qy: Jet| ((v[0] - qx).square() + (v[1] - qy).square()).sqrt();
    if t <= 0.0 {
        point(v[2], v[3])
    } else if t >= 1.0 {
        point(v[4], v[5])
    } else {
        let (ex, ey) = (v[4] - v[2], v[5] - v[3]);
        let cross = ex * (v[1] - v[3]) - ey * (v[0] - v[2]);
        let len = (ex.square() + ey.square()).sqrt();
        let d = cross / len;
        if d.v < 0.0 {
            -d
        } else {
            d
        }
    }
}

pub fn point_segment_distance(p: V2, a: V2, b: V2) -> f64 {
    let e = b - a;
    let t = ((p - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
    (p - (a + t * e)).norm()
}

#[derive(Clone, Debug)]
pub struct ContactSet {
    pub points: Vec<usize>,
    pub segments: Vec<[usize; 2]>,
}

/// Active point–segment pair: point vertex, segment, lattice offset of the
/// segment copy.
#[derive(Clone, Copy, Debug)]
struct Candidate {
    point: usize,
    seg: [usize; 2],
    offset: (i32, i32),
}

impl ContactSet {
    pub fn new(mesh: &PeriodicMesh) -> Self {
        let mut points: Vec<usize> = mesh.surface_segments.iter().flatten().copied().collect();
        points.sort_unstable();
        points.dedup();
        Self {
            points,
            segments: mesh.surface_segments.clone(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// All point–segment pairs (excluding segments incident to the point)
    /// whose distance may be below `radius`.
    fn candidates(&self, dofs: &DofMap, x: &[V2], t: [V2; 2], radius: f64) -> Vec<Candidate> {
        if self.segments.is_empty() {
            return Vec::new();
        }
        let max_len = self
            .segments
            .iter()
            .map(|s| (x[s[1]] - x[s[0]]).norm())
            .fold(0.0, f64::max);
        let h = (max_len + radius).max(1e-12);
        let cell = |p: V2| ((p.x / h).floor() as i64, (p.y / h).floor() as i64);
        let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for &p in &self.points {
            grid.entry(cell(x[p])).or_default().push(p);
        }
        let mut out = Vec::new();
        for &offset in &OFFSETS {
            let shift = offset.0 as f64 * t[0] + offset.1 as f64 * t[1];
            for &seg in &self.segments {
                let (a, b) = (x[seg[0]] + shift, x[seg[1]] + shift);
                let lo = a.inf(&b).add_scalar(-radius);
                let hi = a.sup(&b).add_scalar(radius);
                let (c0, c1) = (cell(lo), cell(hi));
                let keys = [dofs.key(seg[0], offset), dofs.key(seg[1], offset)];
                for cx in c0.0..=c1.0 {
                    for cy in c0.1..=c1.1 {
                        let Some(list) = grid.get(&(cx, cy)) else {
                            continue;
                        };
                        for &p in list {
                            let kp = dofs.key(p, (0, 0));
                            if kp == keys[0] || kp == keys[1] {
                                continue;
                            }
                            let q = x[p];
                            if q.x < lo.x || q.x > hi.x || q.y < lo.y || q.y > hi.y {
                                continue;
                            }
                            out.push(Candidate {
                                point: p,
                                seg,
                                offset,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Smallest point–segment distance among pairs closer than `radius`
    /// (`f64::INFINITY` if none).
    pub fn min_distance(&self, dofs: &DofMap, x: &[V2], t: [V2; 2], radius: f64) -> f64 {
        self.candidates(dofs, x, t, radius)
            .iter()
            .map(|c| {
                let s = c.offset.0 as f64 * t[0] + c.offset.1 as f64 * t[1];
                point_segment_distance(x[c.point], x[c.seg[0]] + s, x[c.seg[1]] + s)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Barrier energy; adds the reduced gradient to `grad` and Hessian
    /// blocks to `hess` when given. Returns `(energy, min distance)`.
    #[allow(clippy::too_many_arguments)]
    pub fn energy(
        &self,
        dofs: &DofMap,
        x: &[V2],
        t: [V2; 2],
        dhat: f64,
        kappa: f64,
        grad: Option<&mut [f64]>,
        hess: Option<&mut BlockTriplets>,
    ) -> Result<(f64, f64)> {
        let mut energy = 0.0;
        let mut dmin = f64::INFINITY;
        let mut grad = grad;
        let mut hess = hess;
        for c in self.candidates(dofs, x, t, dhat) {
            let s = c.offset.0 as f64 * t[0] + c.offset.1 as f64 * t[1];
            let (p, a, b) = (x[c.point], x[c.seg[0]] + s, x[c.seg[1]] + s);
            let d0 = point_segment_distance(p, a, b);
            dmin = dmin.min(d0);
            if d0 <= 0.0 {
                return Err(Error::InterpenetrationDetected { distance: d0 });
            }
            if d0 >= dhat {
                continue;
            }
            let bar = barrier(d0, dhat, kappa);
            energy += bar[0];
            if grad.is_none() && hess.is_none() {
                continue;
            }
            let e = distance_jet(p, a, b).compose(bar);
            let locals = [
                dofs.terms(c.point, (0, 0)),
                dofs.terms(c.seg[0], c.offset),
                dofs.terms(c.seg[1], c.offset),
            ];
            if let Some(g) = grad.as_deref_mut() {
                for (k, (terms, n)) in locals.iter().enumerate() {
                    for &(blk, coef) in &terms[..*n] {
                        g[2 * blk] += coef * e.grad(2 * k);
                        g[2 * blk + 1] += coef * e.grad(2 * k + 1);
                    }
                }
            }
            if let Some(h) = hess.as_deref_mut() {
                for (ka, (ta, na)) in locals.iter().enumerate() {
                    for (kb, (tb, nb)) in locals.iter().enumerate() {
                        let m = Matrix2::from_fn(|i, j| e.hess(2 * ka + i, 2 * kb + j));
                        for &(ba, ca) in &ta[..*na] {
                            for &(bb, cb) in &tb[..*nb] {
                                h.add(ba, bb, ca * cb * m);
                            }
                        }
                    }
                }
            }
        }
        Ok((energy, dmin))
    }

    /// Largest fraction of the step `dq` that keeps every pair at least
    /// 10% of its current distance apart, by a conservative motion bound.
    pub fn step_bound(&self, dofs: &DofMap, x: &[V2], t: [V2; 2], dx: &[V2], dt: [V2; 2]) -> f64 {
        let motion =
            |v: usize, o: (i32, i32)| (dx[v] + o.0 as f64 * dt[0] + o.1 as f64 * dt[1]).norm();
        let reach = dx.iter().map(|d| d.norm()).fold(0.0, f64::max) + dt[0].norm() + dt[1].norm();
        let mut alpha: f64 = 1.0;
        for c in self.candidates(dofs, x, t, 2.0 * reach) {
            let s = c.offset.0 as f64 * t[0] + c.offset.1 as f64 * t[1];
            let d = point_segment_distance(x[c.point], x[c.seg[0]] + s, x[c.seg[1]] + s);
            let m = motion(c.point, (0, 0))
                + motion(c.seg[0], c.offset).max(motion(c.seg[1], c.offset));
            if m > 0.0 {
                alpha = alpha.min(0.9 * d / m);
            }
        }
        alpha
    }
}
