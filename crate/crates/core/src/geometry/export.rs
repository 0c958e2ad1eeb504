//! Plain-text mesh format:
//!
//! ```text
//! metanet-mesh 1
//! family honeycomb resolution 2
//! lattice <t_ij.x> <t_ij.y> <t_kl.x> <t_kl.y>
//! vertices <n>
//! <x> <y>                       (n lines)
//! elements <m>
//! <c0> <c1> <c2> <m01> <m12> <m20>
//! pairs_x <p>
//! <i> <j>
//! pairs_y <q>
//! <k> <l>
//! surface <s>
//! <a> <b>
//! ```

use nalgebra::Vector2;
use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::{BoundarySides, FamilyId, PeriodicMesh};
use crate::error::{Error, Result};

pub fn write_mesh<W: Write>(mesh: &PeriodicMesh, mut w: W) -> Result<()> {
    writeln!(w, "metanet-mesh 1")?;
    writeln!(w, "family {} resolution {}", mesh.family, mesh.resolution)?;
    let [a, b] = mesh.lattice;
    writeln!(w, "lattice {:e} {:e} {:e} {:e}", a.x, a.y, b.x, b.y)?;
    writeln!(w, "vertices {}", mesh.rest_positions.len())?;
    for p in &mesh.rest_positions {
        writeln!(w, "{:e} {:e}", p.x, p.y)?;
    }
    writeln!(w, "elements {}", mesh.elements.len())?;
    for e in &mesh.elements {
        writeln!(w, "{} {} {} {} {} {}", e[0], e[1], e[2], e[3], e[4], e[5])?;
    }
    for (name, pairs) in [
        ("pairs_x", &mesh.periodic_pairs_x),
        ("pairs_y", &mesh.periodic_pairs_y),
    ] {
        writeln!(w, "{name} {}", pairs.len())?;
        for (i, j) in pairs {
            writeln!(w, "{i} {j}")?;
        }
    }
    writeln!(w, "surface {}", mesh.surface_segments.len())?;
    for s in &mesh.surface_segments {
        writeln!(w, "{} {}", s[0], s[1])?;
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    number: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        self.number += 1;
        match self.inner.next() {
            Some(line) => Ok(line?),
            None => Err(Error::Format(format!(
                "unexpected end of file at line {}",
                self.number
            ))),
        }
    }

    fn fields<T: std::str::FromStr>(&mut self, n: usize) -> Result<Vec<T>> {
        let line = self.next_line()?;
        let v: Vec<T> = line
            .split_whitespace()
            .map(|s| s.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("bad value on line {}", self.number)))?;
        if v.len() != n {
            return Err(Error::Format(format!(
                "line {}: expected {n} fields, got {}",
                self.number,
                v.len()
            )));
        }
        Ok(v)
    }

    fn section(&mut self, name: &str) -> Result<usize> {
        let line = self.next_line()?;
        let mut it = line.split_whitespace();
        if it.next() != Some(name) {
            return Err(Error::Format(format!(
                "line {}: expected '{name}'",
                self.number
            )));
        }
        it.next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("line {}: missing count", self.number)))
    }
}

/// Reads a mesh written by [`write_mesh`]. Side edge lists are rebuilt
/// from the pairs; they are not stored in the file.
pub fn read_mesh<R: BufRead>(r: R) -> Result<PeriodicMesh> {
    let mut l = Lines {
        inner: r.lines(),
        number: 0,
    };
    if l.next_line()?.trim() != "metanet-mesh 1" {
        return Err(Error::Format("missing header".into()));
    }
    let line = l.next_line()?;
    let parts: Vec<&str> = line.split_whitespace().collect();
    let (family, resolution) = match parts.as_slice() {
        ["family", f, "resolution", r] => {
            let family = match *f {
                "solid_cell" => FamilyId::SolidCell,
                "honeycomb" => FamilyId::Honeycomb,
                other => return Err(Error::Format(format!("unknown family '{other}'"))),
            };
            let r = r
                .parse()
                .map_err(|_| Error::Format("bad resolution".into()))?;
            (family, r)
        }
        _ => return Err(Error::Format("line 2: expected family/resolution".into())),
    };
    let lat = {
        let line = l.next_line()?;
        let v: Vec<f64> = line
            .split_whitespace()
            .skip(1)
            .map(|s| s.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format("bad lattice".into()))?;
        if v.len() != 4 {
            return Err(Error::Format("lattice needs four values".into()));
        }
        [Vector2::new(v[0], v[1]), Vector2::new(v[2], v[3])]
    };
    let n = l.section("vertices")?;
    let mut rest_positions = Vec::with_capacity(n);
    for _ in 0..n {
        let v: Vec<f64> = l.fields(2)?;
        rest_positions.push(Vector2::new(v[0], v[1]));
    }
    let m = l.section("elements")?;
    let mut elements = Vec::with_capacity(m);
    for _ in 0..m {
        let v: Vec<usize> = l.fields(6)?;
        elements.push([v[0], v[1], v[2], v[3], v[4], v[5]]);
    }
    let mut read_pairs = |name: &str| -> Result<Vec<(usize, usize)>> {
        let k = l.section(name)?;
        (0..k)
            .map(|_| l.fields::<usize>(2).map(|v| (v[0], v[1])))
            .collect()
    };
    let periodic_pairs_x = read_pairs("pairs_x")?;
    let periodic_pairs_y = read_pairs("pairs_y")?;
    let s = l.section("surface")?;
    let mut surface_segments = Vec::with_capacity(s);
    for _ in 0..s {
        let v: Vec<usize> = l.fields(2)?;
        surface_segments.push([v[0], v[1]]);
    }
    let count = rest_positions.len();
    let in_range = |i: usize| i < count;
    if !elements.iter().all(|e| e.iter().all(|&i| in_range(i)))
        || !periodic_pairs_x
            .iter()
            .chain(&periodic_pairs_y)
            .all(|&(i, j)| in_range(i) && in_range(j))
        || !surface_segments
            .iter()
            .all(|s| in_range(s[0]) && in_range(s[1]))
    {
        return Err(Error::Format("vertex index out of range".into()));
    }
    let rest_area = elements
        .iter()
        .map(|e| {
            let (a, b, c) = (
                rest_positions[e[0]],
                rest_positions[e[1]],
                rest_positions[e[2]],
            );
            0.5 * (b - a).perp(&(c - a))
        })
        .sum();
    let boundary_edges = side_edges(&elements, &periodic_pairs_x, &periodic_pairs_y);
    Ok(PeriodicMesh {
        family,
        resolution,
        rest_positions,
        elements,
        periodic_pairs_x,
        periodic_pairs_y,
        boundary_edges,
        surface_segments,
        lattice: lat,
        rest_area,
    })
}

fn side_edges(
    elements: &[[usize; 6]],
    pairs_x: &[(usize, usize)],
    pairs_y: &[(usize, usize)],
) -> BoundarySides {
    let mut sides = BoundarySides::default();
    let in_set = |pairs: &[(usize, usize)], left: bool| -> std::collections::HashSet<usize> {
        pairs
            .iter()
            .map(|&(i, j)| if left { i } else { j })
            .collect()
    };
    let sets = [
        in_set(pairs_x, true),
        in_set(pairs_x, false),
        in_set(pairs_y, true),
        in_set(pairs_y, false),
    ];
    for e in elements {
        for k in 0..3 {
            let (a, m, b) = (e[k], e[3 + k], e[(k + 1) % 3]);
            for (s, set) in sets.iter().enumerate() {
                if set.contains(&a) && set.contains(&m) && set.contains(&b) {
                    let list = match s {
                        0 => &mut sides.left,
                        1 => &mut sides.right,
                        2 => &mut sides.bottom,
                        _ => &mut sides.top,
                    };
                    list.push([a, m, b]);
                }
            }
        }
    }
    sides
}

/// Free-surface segments chained into polylines, for drawing the cell
/// outline. Chains end where the surface meets a periodic side.
pub fn outline_polylines(mesh: &PeriodicMesh) -> Vec<Vec<[f64; 2]>> {
    let segs = &mesh.surface_segments;
    let mut at: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, s) in segs.iter().enumerate() {
        at.entry(s[0]).or_default().push(i);
        at.entry(s[1]).or_default().push(i);
    }
    let mut used = vec![false; segs.len()];
    let mut out = Vec::new();
    // Start open chains at vertices with a single segment, then close loops.
    let mut starts: Vec<usize> = segs
        .iter()
        .flat_map(|s| s.iter().copied())
        .filter(|v| at[v].len() == 1)
        .collect();
    starts.extend(segs.iter().map(|s| s[0]));
    for start in starts {
        let mut v = start;
        let mut chain = vec![v];
        while let Some(&i) = at[&v].iter().find(|&&i| !used[i]) {
            used[i] = true;
            v = if segs[i][0] == v {
                segs[i][1]
            } else {
                segs[i][0]
            };
            chain.push(v);
        }
        if chain.len() > 1 {
            out.push(
                chain
                    .iter()
                    .map(|&i| [mesh.rest_positions[i].x, mesh.rest_positions[i].y])
                    .collect(),
            );
        }
    }
    if out.is_empty() {
        // Solid cell: draw the square.
        let [a, b] = mesh.lattice;
        let corners = [Vector2::zeros(), a, a + b, b, Vector2::zeros()];
        out.push(corners.iter().map(|p| [p.x, p.y]).collect());
    }
    out
}
