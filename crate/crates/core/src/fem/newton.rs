use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sparse::{BlockTriplets, Skyline};
use super::system::PeriodicProblem;
use super::{LoadCase, ReducedState, SolveReport, SolverConfig};
use crate::error::{Error, Result};

const ARMIJO: f64 = 1e-4;

struct Terms {
    elastic: f64,
    penalty: f64,
    contact: f64,
    min_distance: f64,
}

impl Terms {
    fn total(&self) -> f64 {
        self.elastic + self.penalty + self.contact
    }
}

/// Mean absolute diagonal over vertex unknowns; the stiff penalty rows of
/// the translations would otherwise dominate the regularization scale.
fn mean_vertex_diagonal(trip: &BlockTriplets, n_free: usize) -> f64 {
    let mut diag = vec![0.0; 2 * n_free];
    for &(i, j, m) in &trip.entries {
        if i == j && i < n_free {
            diag[2 * i] += m[(0, 0)];
            diag[2 * i + 1] += m[(1, 1)];
        }
    }
    diag.iter().map(|d| d.abs()).sum::<f64>() / diag.len().max(1) as f64
}

impl PeriodicProblem {
    fn evaluate(
        &self,
        q: &[f64],
        load: &LoadCase,
        contact: Option<(f64, f64)>,
        grad: Option<&mut [f64]>,
        hess: Option<&mut BlockTriplets>,
    ) -> Result<Terms> {
        let mut grad = grad;
        let mut hess = hess;
        let elastic = self.elastic(q, None, grad.as_deref_mut(), hess.as_deref_mut())?;
        let penalty = self.penalty(q, load, grad.as_deref_mut(), hess.as_deref_mut());
        let (contact, min_distance) = match contact {
            Some((dhat, kappa)) => self.contact_energy(q, dhat, kappa, grad, hess)?,
            None => (0.0, f64::INFINITY),
        };
        Ok(Terms {
            elastic,
            penalty,
            contact,
            min_distance,
        })
    }

    /// Minimizes elastic + penalty + barrier energy over the reduced
    /// unknowns with a regularized Newton method and backtracking.
    pub fn solve(
        &self,
        load: &LoadCase,
        init: &ReducedState,
        config: &SolverConfig,
    ) -> Result<SolveReport> {
        load.validate()?;
        let n = self.ndof();
        let mut q = init.to_vector();
        if q.len() != n {
            return Err(Error::InvalidInput(format!(
                "initial state has {} unknowns, problem has {n}",
                q.len()
            )));
        }
        if config.perturbation > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let amp = config.perturbation * self.mesh.cell_size();
            for v in q[..2 * self.dofs.n_free()].iter_mut() {
                *v += amp * rng.gen_range(-1.0..1.0);
            }
        }
        // Pin the first root vertex to remove rigid translation.
        let mut pinned = vec![false; n];
        pinned[0] = true;
        pinned[1] = true;

        let dhat = self.dhat(config.dhat_rel);
        let mut kappa = config.kappa0.unwrap_or(self.material.youngs_modulus);
        let use_contact = config.contact && self.has_contact_surfaces();
        let contact = |kappa: f64| {
            if use_contact {
                Some((dhat, kappa))
            } else {
                None
            }
        };

        let initial = self.evaluate(&q, load, contact(kappa), None, None)?;
        let mut history = vec![initial.total()];
        let mut g0 = None;
        let mut trip = BlockTriplets::default();
        let mut last_dmin = initial.min_distance;

        for iter in 0..=config.max_iterations {
            let mut g = vec![0.0; n];
            trip.clear();
            let current = self.evaluate(&q, load, contact(kappa), Some(&mut g), Some(&mut trip))?;
            for (gi, &p) in g.iter_mut().zip(&pinned) {
                if p {
                    *gi = 0.0;
                }
            }
            let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            let g0n = *g0.get_or_insert(gnorm);
            if gnorm <= config.tol_abs + config.tol_rel * g0n {
                return Ok(self.report(&q, load, current, iter, gnorm, history));
            }
            if iter == config.max_iterations {
                return Err(Error::MaxIterationsExceeded {
                    iterations: iter,
                    gradient_norm: gnorm,
                });
            }

            log::trace!(
                "newton {iter}: |g| = {gnorm:e}, E = {:e}, d_min = {:e}, kappa = {kappa}",
                current.total(),
                current.min_distance
            );
            let neg_g: Vec<f64> = g.iter().map(|x| -x).collect();
            let mut tau = 0.0;
            let md = mean_vertex_diagonal(&trip, self.dofs.n_free());
            let p = loop {
                let mut k = Skyline::assemble(&self.block_pos, &trip, tau, &pinned);
                if k.factor() {
                    let p = k.solve(&neg_g);
                    let slope: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
                    if slope < 0.0 && p.iter().all(|v| v.is_finite()) {
                        break p;
                    }
                }
                tau = if tau == 0.0 {
                    (1e-6 * md).max(1e-8)
                } else {
                    10.0 * tau
                };
                if tau > 1e30 {
                    return Err(Error::LineSearchFailed { iteration: iter });
                }
            };
            let slope: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();

            let mut alpha: f64 = 1.0;
            if use_contact {
                let x = self.positions(&q);
                let t = self.translations(&q);
                // The position map is linear, so it also maps step directions.
                let dx = self.dofs.positions(&p);
                let dt = self.dofs.translations(&p);
                alpha = alpha.min(self.contact.step_bound(&self.dofs, &x, t, &dx, dt));
            }
            let e0 = current.total();
            let mut accepted = None;
            for _ in 0..config.max_line_search {
                let trial: Vec<f64> = q.iter().zip(&p).map(|(a, b)| a + alpha * b).collect();
                if let Ok(t) = self.evaluate(&trial, load, contact(kappa), None, None) {
                    let e = t.total();
                    let roundoff = 1e-14 * e0.abs().max(1e-300);
                    if e.is_finite()
                        && (e <= e0 + ARMIJO * alpha * slope || e <= e0 + roundoff && alpha == 1.0)
                    {
                        accepted = Some((trial, t));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((trial, terms)) = accepted else {
                return Err(Error::LineSearchFailed { iteration: iter });
            };
            q = trial;
            history.push(terms.total());
            if use_contact
                && terms.min_distance < 0.5 * dhat
                && terms.min_distance < 0.5 * last_dmin
            {
                kappa *= 2.0;
                last_dmin = terms.min_distance;
            }
        }
        unreachable!()
    }

    fn report(
        &self,
        q: &[f64],
        load: &LoadCase,
        terms: Terms,
        iterations: usize,
        gnorm: f64,
        history: Vec<f64>,
    ) -> SolveReport {
        SolveReport {
            state: ReducedState::from_vector(q),
            elastic_energy: terms.elastic,
            penalty_energy: terms.penalty,
            contact_energy: terms.contact,
            newton_iterations: iterations,
            final_gradient_norm: gnorm,
            constraint_violation: self.constraint_violation(q, load),
            min_distance: terms.min_distance,
            energy_history: history,
        }
    }
}
