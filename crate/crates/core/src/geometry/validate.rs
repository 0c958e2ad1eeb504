use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::honeycomb::{self, CornerKey, Skeleton};
use super::{build_mesh_unchecked, FamilyId, FamilySpec, TilingParams};

type V2 = Vector2<f64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Diagnostic {
    BoundViolation {
        index: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    ParamCount {
        expected: usize,
        got: usize,
    },
    SelfIntersection {
        detail: String,
    },
    DegenerateGeometry {
        detail: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub valid: bool,
    pub diagnostics: Vec<Diagnostic>,
}

/// Checks bounds, wire self-overlap and mesh degeneracy, collecting every
/// problem found rather than stopping at the first.
pub fn validate_params(spec: &FamilySpec, params: &TilingParams) -> Validation {
    let mut diagnostics = Vec::new();
    if params.len() != spec.param_count {
        diagnostics.push(Diagnostic::ParamCount {
            expected: spec.param_count,
            got: params.len(),
        });
        return Validation {
            valid: false,
            diagnostics,
        };
    }
    for (index, ((&value, &min), &max)) in params
        .values
        .iter()
        .zip(&spec.t_min)
        .zip(&spec.t_max)
        .enumerate()
    {
        if !(value >= min && value <= max) {
            diagnostics.push(Diagnostic::BoundViolation {
                index,
                value,
                min,
                max,
            });
        }
    }
    if spec.family_id == FamilyId::Honeycomb {
        match honeycomb::skeleton(spec, &params.values, false) {
            Ok(sk) => {
                if let Some(detail) = find_overlap(&sk) {
                    diagnostics.push(Diagnostic::SelfIntersection { detail });
                }
            }
            Err(e) => diagnostics.push(Diagnostic::DegenerateGeometry {
                detail: e.to_string(),
            }),
        }
    }
    if !diagnostics
        .iter()
        .any(|d| matches!(d, Diagnostic::DegenerateGeometry { .. }))
    {
        if let Err(e) = build_mesh_unchecked(spec, params, 1) {
            diagnostics.push(Diagnostic::DegenerateGeometry {
                detail: e.to_string(),
            });
        }
    }
    Validation {
        valid: diagnostics.is_empty(),
        diagnostics,
    }
}

struct Polygon {
    label: String,
    points: Vec<V2>,
    keys: Vec<CornerKey>,
}

impl Polygon {
    fn shifted(&self, lattice: &[V2; 2], s: (i32, i32)) -> Polygon {
        let d = s.0 as f64 * lattice[0] + s.1 as f64 * lattice[1];
        Polygon {
            label: format!("{}@({},{})", self.label, s.0, s.1),
            points: self.points.iter().map(|p| p + d).collect(),
            keys: self
                .keys
                .iter()
                .map(|k| (k.0, k.1 + s.0, k.2 + s.1))
                .collect(),
        }
    }

    fn adjacent(&self, other: &Polygon) -> bool {
        self.keys.iter().any(|k| other.keys.contains(k))
    }
}

fn polygons(sk: &Skeleton) -> Vec<Polygon> {
    let mut out = Vec::new();
    for (n, j) in sk.junctions.iter().enumerate() {
        out.push(Polygon {
            label: format!("junction {n}"),
            points: j.iter().map(|c| c.p).collect(),
            keys: j.iter().map(|c| c.key).collect(),
        });
    }
    for (b, e) in sk.beam_ends.iter().enumerate() {
        let ring = [e[0], e[2], e[3], e[1]];
        out.push(Polygon {
            label: format!("beam {b}"),
            points: ring.iter().map(|c| c.p).collect(),
            keys: ring.iter().map(|c| c.key).collect(),
        });
    }
    out
}

fn orient(a: V2, b: V2, c: V2) -> f64 {
    (b - a).perp(&(c - a))
}

fn segments_cross(a: V2, b: V2, c: V2, d: V2, tol: f64) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    ((o1 > tol && o2 < -tol) || (o1 < -tol && o2 > tol))
        && ((o3 > tol && o4 < -tol) || (o3 < -tol && o4 > tol))
}

/// Point strictly inside (by winding number, at least `tol` from edges).
fn strictly_inside(p: V2, poly: &[V2], tol: f64) -> bool {
    let n = poly.len();
    let mut winding = 0i32;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let len = (b - a).norm();
        if len > 0.0 && orient(a, b, p).abs() / len < tol {
            let t = (p - a).dot(&(b - a)) / (len * len);
            if (-1e-12..=1.0 + 1e-12).contains(&t) {
                return false;
            }
        }
        if a.y <= p.y {
            if b.y > p.y && orient(a, b, p) > 0.0 {
                winding += 1;
            }
        } else if b.y <= p.y && orient(a, b, p) < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

fn overlaps(p: &Polygon, q: &Polygon, tol: f64) -> bool {
    let (a, b) = (&p.points, &q.points);
    for i in 0..a.len() {
        for j in 0..b.len() {
            if segments_cross(
                a[i],
                a[(i + 1) % a.len()],
                b[j],
                b[(j + 1) % b.len()],
                tol * tol,
            ) {
                return true;
            }
        }
    }
    a.iter().any(|&x| strictly_inside(x, b, tol)) || b.iter().any(|&x| strictly_inside(x, a, tol))
}

fn find_overlap(sk: &Skeleton) -> Option<String> {
    let base = polygons(sk);
    let tol = 1e-9 * sk.lattice[0].norm();
    for sx in -1..=1 {
        for sy in -1..=1 {
            let copies: Vec<Polygon> = base
                .iter()
                .map(|p| p.shifted(&sk.lattice, (sx, sy)))
                .collect();
            for (i, p) in base.iter().enumerate() {
                for (j, q) in copies.iter().enumerate() {
                    if (sx, sy) == (0, 0) && j <= i {
                        continue;
                    }
                    if !p.adjacent(q) && overlaps(p, q, tol) {
                        return Some(format!("{} overlaps {}", p.label, q.label));
                    }
                }
            }
        }
    }
    None
}
