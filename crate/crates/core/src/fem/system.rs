use nalgebra::{Matrix2, Vector2};

use super::contact::ContactSet;
use super::dofs::DofMap;
use super::element::{precompute, ElementGeometry};
use super::material::MaterialParams;
use super::sparse::{rcm_order, BlockTriplets};
use super::{LoadCase, ReducedState};
use crate::error::{Error, Result};
use crate::geometry::PeriodicMesh;
use crate::tensor::{direction, normal};

type V2 = Vector2<f64>;

/// A meshed cell with its reduced periodic unknowns, ready for solving.
#[derive(Clone, Debug)]
pub struct PeriodicProblem {
    pub mesh: PeriodicMesh,
    pub material: MaterialParams,
    pub dofs: DofMap,
    pub(crate) elements: Vec<ElementGeometry>,
    pub(crate) contact: ContactSet,
    pub(crate) block_pos: Vec<usize>,
}

impl PeriodicProblem {
    pub fn new(mesh: PeriodicMesh, material: MaterialParams) -> Result<Self> {
        material.validate()?;
        let dofs = DofMap::new(&mesh);
        let elements = precompute(&mesh);
        let contact = ContactSet::new(&mesh);
        // Order root blocks by RCM on the element graph; translations last.
        let nf = dofs.n_free();
        let mut adj = vec![Vec::new(); nf];
        for e in &mesh.elements {
            for &a in e {
                for &b in e {
                    let (ra, rb) = (dofs.root[a], dofs.root[b]);
                    if ra != rb {
                        adj[ra].push(rb);
                    }
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        let mut block_pos = rcm_order(nf, &adj);
        block_pos.push(nf);
        block_pos.push(nf + 1);
        Ok(Self {
            mesh,
            material,
            dofs,
            elements,
            contact,
            block_pos,
        })
    }

    pub fn ndof(&self) -> usize {
        self.dofs.ndof()
    }

    pub fn rest_state(&self) -> ReducedState {
        ReducedState::from_vector(
            &self
                .dofs
                .reduce_positions(&self.mesh.rest_positions, self.mesh.lattice),
        )
    }

    /// Rest configuration mapped affinely by `f`.
    pub fn affine_state(&self, f: &Matrix2<f64>) -> ReducedState {
        self.rest_state().mapped(f)
    }

    pub fn positions(&self, q: &[f64]) -> Vec<V2> {
        self.dofs.positions(q)
    }

    pub fn translations(&self, q: &[f64]) -> [V2; 2] {
        self.dofs.translations(q)
    }

    /// Barrier activation distance for a relative setting.
    pub fn dhat(&self, dhat_rel: f64) -> f64 {
        dhat_rel * self.mesh.cell_size()
    }

    /// Elastic energy; optionally the full per-vertex gradient, the reduced
    /// gradient and reduced Hessian blocks.
    pub fn elastic(
        &self,
        q: &[f64],
        full_grad: Option<&mut Vec<V2>>,
        grad: Option<&mut [f64]>,
        hess: Option<&mut BlockTriplets>,
    ) -> Result<f64> {
        let x = self.positions(q);
        let want_grad = full_grad.is_some() || grad.is_some();
        let mut gfull = if want_grad {
            vec![V2::zeros(); x.len()]
        } else {
            Vec::new()
        };
        let mut hess = hess;
        let mut energy = 0.0;
        for (ei, el) in self.elements.iter().enumerate() {
            let mut h = [[Matrix2::<f64>::zeros(); 6]; 6];
            for qp in 0..3 {
                let f = el.deformation(&x, qp);
                let w = el.weights[qp];
                let psi = self.material.energy(&f).ok_or(Error::ElementInverted {
                    element: ei,
                    jacobian: f.determinant(),
                })?;
                energy += w * psi;
                if want_grad {
                    let p = self.material.pk1(&f);
                    for a in 0..6 {
                        gfull[el.nodes[a]] += w * p * el.grads[qp][a];
                    }
                }
                if hess.is_some() {
                    let t = self.material.tangent(&f);
                    for a in 0..6 {
                        let ga = el.grads[qp][a];
                        for b in 0..6 {
                            let gb = el.grads[qp][b];
                            let mut m = Matrix2::zeros();
                            for i in 0..2 {
                                for k in 0..2 {
                                    let mut s = 0.0;
                                    for j in 0..2 {
                                        for l in 0..2 {
                                            s += t[i][j][k][l] * ga[j] * gb[l];
                                        }
                                    }
                                    m[(i, k)] = s;
                                }
                            }
                            h[a][b] += w * m;
                        }
                    }
                }
            }
            if let Some(hs) = hess.as_deref_mut() {
                for a in 0..6 {
                    let (ta, na) = self.dofs.terms(el.nodes[a], (0, 0));
                    for b in 0..6 {
                        let (tb, nb) = self.dofs.terms(el.nodes[b], (0, 0));
                        for &(ba, ca) in &ta[..na] {
                            for &(bb, cb) in &tb[..nb] {
                                hs.add(ba, bb, ca * cb * h[a][b]);
                            }
                        }
                    }
                }
            }
        }
        if let Some(g) = grad {
            self.dofs.reduce_gradient(&gfull, g);
        }
        if let Some(fg) = full_grad {
            *fg = gfull;
        }
        Ok(energy)
    }

    /// Stretch-constraint penalty acting on the lattice translations.
    pub fn penalty(
        &self,
        q: &[f64],
        load: &LoadCase,
        grad: Option<&mut [f64]>,
        hess: Option<&mut BlockTriplets>,
    ) -> f64 {
        let t = self.translations(q);
        let d = direction(load.alpha);
        let n = normal(load.alpha);
        let (sa, sl) = load.stretches();
        let w = load.penalty_weight;
        let counts = [
            self.mesh.periodic_pairs_x.len() as f64,
            self.mesh.periodic_pairs_y.len() as f64,
        ];
        let blocks = [self.dofs.tij_block(), self.dofs.tkl_block()];
        let mut energy = 0.0;
        let mut grad = grad;
        let mut hess = hess;
        for k in 0..2 {
            let rest = self.mesh.lattice[k];
            let c = w * counts[k];
            let rd = t[k].dot(&d) - sa * rest.dot(&d);
            energy += c * rd * rd;
            let mut g = 2.0 * c * rd * d;
            let mut h = 2.0 * c * d * d.transpose();
            if let Some(sl) = sl {
                let rn = t[k].dot(&n) - sl * rest.dot(&n);
                energy += c * rn * rn;
                g += 2.0 * c * rn * n;
                h += 2.0 * c * n * n.transpose();
            }
            if let Some(gr) = grad.as_deref_mut() {
                gr[2 * blocks[k]] += g.x;
                gr[2 * blocks[k] + 1] += g.y;
            }
            if let Some(hs) = hess.as_deref_mut() {
                hs.add(blocks[k], blocks[k], h);
            }
        }
        energy
    }

    /// `‖residual‖ / ‖target‖` of the projected translation targets.
    pub fn constraint_violation(&self, q: &[f64], load: &LoadCase) -> f64 {
        let t = self.translations(q);
        let d = direction(load.alpha);
        let n = normal(load.alpha);
        let (sa, sl) = load.stretches();
        let (mut r2, mut t2) = (0.0, 0.0);
        for k in 0..2 {
            let rest = self.mesh.lattice[k];
            let target = sa * rest.dot(&d);
            r2 += (t[k].dot(&d) - target).powi(2);
            t2 += target * target;
            if let Some(sl) = sl {
                let target = sl * rest.dot(&n);
                r2 += (t[k].dot(&n) - target).powi(2);
                t2 += target * target;
            }
        }
        (r2 / t2.max(f64::MIN_POSITIVE)).sqrt()
    }

    /// Barrier energy and smallest active distance.
    pub fn contact_energy(
        &self,
        q: &[f64],
        dhat: f64,
        kappa: f64,
        grad: Option<&mut [f64]>,
        hess: Option<&mut BlockTriplets>,
    ) -> Result<(f64, f64)> {
        let x = self.positions(q);
        let t = self.translations(q);
        self.contact
            .energy(&self.dofs, &x, t, dhat, kappa, grad, hess)
    }

    /// Smallest point–segment distance among pairs closer than `radius`.
    pub fn min_contact_distance(&self, q: &[f64], radius: f64) -> f64 {
        let x = self.positions(q);
        let t = self.translations(q);
        self.contact.min_distance(&self.dofs, &x, t, radius)
    }

    pub fn has_contact_surfaces(&self) -> bool {
        !self.contact.is_empty()
    }
}
