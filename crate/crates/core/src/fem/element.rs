use nalgebra::{Matrix2, Vector2};

use crate::geometry::PeriodicMesh;

/// Three-point rule on the reference triangle (weights sum to ½).
pub const QUAD_POINTS: [(f64, f64); 3] = [
    (1.0 / 6.0, 1.0 / 6.0),
    (2.0 / 3.0, 1.0 / 6.0),
    (1.0 / 6.0, 2.0 / 3.0),
];
pub const QUAD_WEIGHT: f64 = 1.0 / 6.0;

/// Reference gradients of the six quadratic shape functions at `(ξ, η)`.
fn reference_gradients(xi: f64, eta: f64) -> [Vector2<f64>; 6] {
    let l = [1.0 - xi - eta, xi, eta];
    let dl = [
        Vector2::new(-1.0, -1.0),
        Vector2::new(1.0, 0.0),
        Vector2::new(0.0, 1.0),
    ];
    [
        (4.0 * l[0] - 1.0) * dl[0],
        (4.0 * l[1] - 1.0) * dl[1],
        (4.0 * l[2] - 1.0) * dl[2],
        4.0 * (l[1] * dl[0] + l[0] * dl[1]),
        4.0 * (l[2] * dl[1] + l[1] * dl[2]),
        4.0 * (l[0] * dl[2] + l[2] * dl[0]),
    ]
}

/// Rest-configuration data of one element: physical shape gradients and
/// integration weights at each quadrature point.
#[derive(Clone, Debug)]
pub struct ElementGeometry {
    pub nodes: [usize; 6],
    pub grads: [[Vector2<f64>; 6]; 3],
    pub weights: [f64; 3],
}

impl ElementGeometry {
    /// `F = Σ x_a ⊗ ∇N_a` at quadrature point `q`.
    pub fn deformation(&self, x: &[Vector2<f64>], q: usize) -> Matrix2<f64> {
        let mut f = Matrix2::zeros();
        for (a, &n) in self.nodes.iter().enumerate() {
            f += x[n] * self.grads[q][a].transpose();
        }
        f
    }
}

pub fn precompute(mesh: &PeriodicMesh) -> Vec<ElementGeometry> {
    let refs = QUAD_POINTS.map(|(xi, eta)| reference_gradients(xi, eta));
    mesh.elements
        .iter()
        .map(|e| {
            let x = &mesh.rest_positions;
            let j = Matrix2::from_columns(&[x[e[1]] - x[e[0]], x[e[2]] - x[e[0]]]);
            let det = j.determinant();
            let jit = j.try_inverse().unwrap_or_else(Matrix2::zeros).transpose();
            let grads = refs.map(|g| g.map(|v| jit * v));
            ElementGeometry {
                nodes: *e,
                grads,
                weights: [QUAD_WEIGHT * det; 3],
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_gradients_sum_to_zero_and_reproduce_linear_fields() {
        for &(xi, eta) in &QUAD_POINTS {
            let g = reference_gradients(xi, eta);
            let s: Vector2<f64> = g.iter().sum();
            assert!(s.norm() < 1e-14);
            // Nodal coordinates of the reference element.
            let nodes = [
                (0.0, 0.0),
                (1.0, 0.0),
                (0.0, 1.0),
                (0.5, 0.0),
                (0.5, 0.5),
                (0.0, 0.5),
            ];
            let gx: Vector2<f64> = g.iter().zip(&nodes).map(|(d, n)| d * n.0).sum();
            assert!((gx - Vector2::new(1.0, 0.0)).norm() < 1e-14);
        }
    }
}
