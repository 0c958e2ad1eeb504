//! Parametric unit-cell families and their periodic quadratic-triangle meshes.
//!
//! Mesh connectivity depends only on the family and the resolution; the
//! structure parameters only move vertices.

mod builder;
mod export;
mod honeycomb;
mod solid;
mod validate;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use export::{outline_polylines, read_mesh, write_mesh};
pub use validate::{validate_params, Diagnostic, Validation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyId {
    SolidCell,
    Honeycomb,
}

impl fmt::Display for FamilyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyId::SolidCell => write!(f, "solid_cell"),
            FamilyId::Honeycomb => write!(f, "honeycomb"),
        }
    }
}

/// A parametric family together with its valid parameter box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub family_id: FamilyId,
    pub param_count: usize,
    pub t_min: Vec<f64>,
    pub t_max: Vec<f64>,
    pub base_cell_size: f64,
}

/// Structure parameter vector `T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TilingParams {
    pub values: Vec<f64>,
}

impl TilingParams {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn empty() -> Self {
        Self { values: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl From<Vec<f64>> for TilingParams {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

// Honeycomb parameter boxes, in units of the cell width:
// beam half-width, vertical offset of the inner vertex pair, horizontal
// offset of the same pair.
const HONEYCOMB_MIN: [f64; 3] = [0.03, -0.10, -0.08];
const HONEYCOMB_MAX: [f64; 3] = [0.12, 0.10, 0.08];

impl FamilySpec {
    /// Homogeneous square cell; no parameters.
    pub fn solid_cell() -> Self {
        Self {
            family_id: FamilyId::SolidCell,
            param_count: 0,
            t_min: Vec::new(),
            t_max: Vec::new(),
            base_cell_size: 1.0,
        }
    }

    /// Hexagonal wire network with `param_count` ∈ 1..=3 parameters:
    /// beam half-width, then vertex offsets.
    pub fn honeycomb(param_count: usize) -> Result<Self> {
        if !(1..=3).contains(&param_count) {
            return Err(Error::InvalidInput(format!(
                "honeycomb supports 1 to 3 parameters, got {param_count}"
            )));
        }
        Ok(Self {
            family_id: FamilyId::Honeycomb,
            param_count,
            t_min: HONEYCOMB_MIN[..param_count].to_vec(),
            t_max: HONEYCOMB_MAX[..param_count].to_vec(),
            base_cell_size: 1.0,
        })
    }

    /// Centre of the parameter box.
    pub fn midpoint(&self) -> TilingParams {
        TilingParams::new(
            self.t_min
                .iter()
                .zip(&self.t_max)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        )
    }

    pub fn check_bounds(&self, params: &TilingParams) -> Result<()> {
        if params.len() != self.param_count {
            return Err(Error::ParamCount {
                expected: self.param_count,
                got: params.len(),
            });
        }
        for (index, ((&value, &min), &max)) in params
            .values
            .iter()
            .zip(&self.t_min)
            .zip(&self.t_max)
            .enumerate()
        {
            if !(value >= min && value <= max) {
                return Err(Error::ParamOutOfBounds {
                    index,
                    value,
                    min,
                    max,
                });
            }
        }
        Ok(())
    }

    /// Clamps every component into the box.
    pub fn project(&self, values: &mut [f64]) {
        for ((v, &lo), &hi) in values.iter_mut().zip(&self.t_min).zip(&self.t_max) {
            *v = v.clamp(lo, hi);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_min.len() != self.param_count || self.t_max.len() != self.param_count {
            return Err(Error::InvalidInput(
                "bound vectors do not match param_count".into(),
            ));
        }
        if self.t_min.iter().zip(&self.t_max).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidInput("t_min must be below t_max".into()));
        }
        if !(self.base_cell_size > 0.0) {
            return Err(Error::InvalidInput(
                "base_cell_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl FromStr for FamilySpec {
    type Err = Error;

    /// `solid`, `honeycomb` (1 parameter), `honeycomb2`, `honeycomb3`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "solid" | "solid_cell" | "solidcell" => Ok(Self::solid_cell()),
            "honeycomb" | "honeycomb1" => Self::honeycomb(1),
            "honeycomb2" => Self::honeycomb(2),
            "honeycomb3" => Self::honeycomb(3),
            other => Err(Error::InvalidInput(format!("unknown family '{other}'"))),
        }
    }
}

/// Edges lying on the four periodic sides, as `[corner, midnode, corner]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundarySides {
    pub left: Vec<[usize; 3]>,
    pub right: Vec<[usize; 3]>,
    pub bottom: Vec<[usize; 3]>,
    pub top: Vec<[usize; 3]>,
}

/// Periodic quadratic-triangle mesh of one unit cell.
///
/// Elements list three corners (counter-clockwise) followed by the
/// midnodes of edges 0-1, 1-2 and 2-0. Pairs `(i, j)` satisfy
/// `X_j = X_i + lattice[0]` for `periodic_pairs_x` and `X_l = X_k + lattice[1]`
/// for `periodic_pairs_y`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicMesh {
    pub family: FamilyId,
    pub resolution: usize,
    pub rest_positions: Vec<Vector2<f64>>,
    pub elements: Vec<[usize; 6]>,
    pub periodic_pairs_x: Vec<(usize, usize)>,
    pub periodic_pairs_y: Vec<(usize, usize)>,
    pub boundary_edges: BoundarySides,
    /// Free-surface segments (corner–midnode halves of boundary edges that
    /// are not on a periodic side), used for contact.
    pub surface_segments: Vec<[usize; 2]>,
    pub lattice: [Vector2<f64>; 2],
    /// Area covered by material.
    pub rest_area: f64,
}

impl PeriodicMesh {
    pub fn vertex_count(&self) -> usize {
        self.rest_positions.len()
    }

    /// Area of the periodic cell (material and voids).
    pub fn cell_area(&self) -> f64 {
        let [a, b] = self.lattice;
        (a.x * b.y - a.y * b.x).abs()
    }

    pub fn cell_size(&self) -> f64 {
        self.lattice[0].norm().min(self.lattice[1].norm())
    }

    /// Signed area of each element's corner triangle.
    pub fn element_areas(&self) -> Vec<f64> {
        self.elements
            .iter()
            .map(|e| {
                let a = self.rest_positions[e[0]];
                let b = self.rest_positions[e[1]];
                let c = self.rest_positions[e[2]];
                0.5 * ((b - a).perp(&(c - a)))
            })
            .collect()
    }

    /// Topology fingerprint: connectivity and pairings only.
    pub fn same_topology(&self, other: &PeriodicMesh) -> bool {
        self.elements == other.elements
            && self.periodic_pairs_x == other.periodic_pairs_x
            && self.periodic_pairs_y == other.periodic_pairs_y
            && self.surface_segments == other.surface_segments
            && self.boundary_edges == other.boundary_edges
    }
}

/// Builds the periodic mesh of `spec` at `params`.
pub fn build_mesh(
    spec: &FamilySpec,
    params: &TilingParams,
    resolution: usize,
) -> Result<PeriodicMesh> {
    spec.validate()?;
    spec.check_bounds(params)?;
    build_mesh_unchecked(spec, params, resolution)
}

/// Mesh construction without the bound check, used by validation to
/// inspect out-of-box geometry.
pub(crate) fn build_mesh_unchecked(
    spec: &FamilySpec,
    params: &TilingParams,
    resolution: usize,
) -> Result<PeriodicMesh> {
    if resolution == 0 {
        return Err(Error::InvalidInput("resolution must be at least 1".into()));
    }
    let mesh = match spec.family_id {
        FamilyId::SolidCell => solid::build(spec.base_cell_size, resolution),
        FamilyId::Honeycomb => honeycomb::build(spec, &params.values, resolution)?,
    };
    let min_area = 1e-12 * mesh.cell_area();
    if let Some((i, a)) = mesh
        .element_areas()
        .into_iter()
        .enumerate()
        .find(|(_, a)| !(*a > min_area))
    {
        return Err(Error::DegenerateGeometry(format!(
            "element {i} has rest area {a:e}"
        )));
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solid_cell_tiles_unit_square() {
        let mesh = build_mesh(&FamilySpec::solid_cell(), &TilingParams::empty(), 2).unwrap();
        assert!((mesh.rest_area - 1.0).abs() < 1e-14);
        assert!(mesh.element_areas().iter().all(|&a| a > 0.0));
        assert!(mesh.surface_segments.is_empty());
    }

    #[test]
    fn honeycomb_area_matches_thickened_network() {
        // Union of 2w-thick beams of total axis length 6a per cell, minus the
        // overlap at four 120° junctions: 12 a w − 4√3 w².
        let spec = FamilySpec::honeycomb(1).unwrap();
        let params = spec.midpoint();
        let mesh = build_mesh(&spec, &params, 1).unwrap();
        let w = params.values[0];
        let a = 1.0 / 3f64.sqrt();
        let expected = 12.0 * a * w - 4.0 * 3f64.sqrt() * w * w;
        assert!(
            (mesh.rest_area - expected).abs() < 1e-6,
            "{} vs {}",
            mesh.rest_area,
            expected
        );
    }

    #[test]
    fn beam_width_below_bound_is_rejected() {
        let spec = FamilySpec::honeycomb(1).unwrap();
        let err = build_mesh(&spec, &TilingParams::new(vec![0.01]), 1).unwrap_err();
        assert_eq!(err.name(), "ParamOutOfBounds");
    }

    #[test]
    fn zero_resolution_is_invalid() {
        let spec = FamilySpec::solid_cell();
        assert!(build_mesh(&spec, &TilingParams::empty(), 0).is_err());
    }

    #[test]
    fn periodic_offsets_are_constant() {
        for spec in [FamilySpec::solid_cell(), FamilySpec::honeycomb(3).unwrap()] {
            let mesh = build_mesh(&spec, &spec.midpoint(), 2).unwrap();
            let x = &mesh.rest_positions;
            for &(i, j) in &mesh.periodic_pairs_x {
                assert!((x[j] - x[i] - mesh.lattice[0]).norm() < 1e-12);
            }
            for &(k, l) in &mesh.periodic_pairs_y {
                assert!((x[l] - x[k] - mesh.lattice[1]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn family_names_parse() {
        assert_eq!("honeycomb".parse::<FamilySpec>().unwrap().param_count, 1);
        assert_eq!("honeycomb3".parse::<FamilySpec>().unwrap().param_count, 3);
        assert!("triangle".parse::<FamilySpec>().is_err());
    }
}
