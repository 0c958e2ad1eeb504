use metanet_core::fem::sparse::BlockTriplets;
use metanet_core::fem::{LoadCase, MaterialParams, PeriodicProblem, ReducedState, SolverConfig};
use metanet_core::geometry::{build_mesh, FamilySpec, TilingParams};
use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn solid(res: usize) -> PeriodicProblem {
    let mesh = build_mesh(&FamilySpec::solid_cell(), &TilingParams::empty(), res).unwrap();
    PeriodicProblem::new(mesh, MaterialParams::default()).unwrap()
}

fn honeycomb(res: usize) -> PeriodicProblem {
    let spec = FamilySpec::honeycomb(1).unwrap();
    let mesh = build_mesh(&spec, &spec.midpoint(), res).unwrap();
    PeriodicProblem::new(mesh, MaterialParams::default()).unwrap()
}

fn perturbed(p: &PeriodicProblem, f: &Matrix2<f64>, amp: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = p.affine_state(f).to_vector();
    for v in &mut q {
        *v += amp * rng.gen_range(-1.0..1.0);
    }
    q
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Central differences of a scalar function along every unknown.
fn fd_gradient(q: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..q.len())
        .map(|i| {
            let mut qp = q.to_vec();
            qp[i] += h;
            let mut qm = q.to_vec();
            qm[i] -= h;
            (f(&qp) - f(&qm)) / (2.0 * h)
        })
        .collect()
}

fn vec_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    num / den
}

#[test]
fn rest_state_is_stress_free() {
    for p in [solid(1), honeycomb(1)] {
        let q = p.rest_state().to_vector();
        let mut g = vec![0.0; q.len()];
        let e = p.elastic(&q, None, Some(&mut g), None).unwrap();
        assert!(e.abs() < 1e-14);
        assert!(g.iter().all(|x| x.abs() < 1e-12));
    }
}

#[test]
fn uniform_dilation_energy_is_exact() {
    let p = solid(2);
    let f = Matrix2::new(1.1, 0.0, 0.0, 1.1);
    let q = p.affine_state(&f).to_vector();
    let e = p.elastic(&q, None, None, None).unwrap();
    let (mu, lambda) = (p.material.mu(), p.material.lambda());
    let j: f64 = 1.21;
    let psi = 0.5 * mu * (2.0 * 1.21 - 2.0) - mu * j.ln() + 0.5 * lambda * j.ln().powi(2);
    assert!(rel_err(e, psi * p.mesh.rest_area) < 1e-8);
}

#[test]
fn elastic_gradient_matches_differences() {
    let p = honeycomb(1);
    let f = Matrix2::new(1.05, 0.02, -0.01, 0.97);
    for seed in 0..20 {
        let q = perturbed(&p, &f, 2e-3, seed);
        let mut g = vec![0.0; q.len()];
        p.elastic(&q, None, Some(&mut g), None).unwrap();
        let fd = fd_gradient(&q, 1e-6, |x| p.elastic(x, None, None, None).unwrap());
        let err = vec_rel_err(&g, &fd);
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn penalty_gradient_matches_differences() {
    let p = solid(1);
    let load = LoadCase::biaxial(0.4, 0.08, -0.03);
    for seed in 0..20 {
        let q = perturbed(&p, &Matrix2::identity(), 1e-2, seed);
        let mut g = vec![0.0; q.len()];
        p.penalty(&q, &load, Some(&mut g), None);
        let fd = fd_gradient(&q, 1e-6, |x| p.penalty(x, &load, None, None));
        assert!(vec_rel_err(&g, &fd) < 1e-5);
    }
}

#[test]
fn penalty_vanishes_at_target() {
    let p = solid(1);
    let load = LoadCase::biaxial(0.7, 0.1, -0.05);
    let q = p.affine_state(&load.target_deformation(1.0)).to_vector();
    assert!(p.penalty(&q, &load, None, None) < 1e-18);
    let rest = LoadCase::biaxial(0.0, 0.0, 0.0);
    assert_eq!(
        p.penalty(&p.rest_state().to_vector(), &rest, None, None),
        0.0
    );
}

/// Honeycomb squeezed until some beams are inside the barrier range.
fn compressed_contact_state(p: &PeriodicProblem, dhat: f64) -> Vec<f64> {
    let load = LoadCase::uniaxial(std::f64::consts::FRAC_PI_2, -0.3);
    let config = SolverConfig {
        dhat_rel: dhat,
        ..SolverConfig::default()
    };
    let init = p.affine_state(&load.target_deformation(1.0));
    p.solve(&load, &init, &config).unwrap().state.to_vector()
}

#[test]
fn contact_gradient_matches_differences() {
    let p = honeycomb(1);
    // A generous barrier range makes many pairs active.
    let dhat = 0.1 * p.mesh.cell_size();
    let q0 = p.rest_state().to_vector();
    let mut active = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q: Vec<f64> = q0
            .iter()
            .map(|v| v + 1e-3 * rng.gen_range(-1.0..1.0))
            .collect();
        let mut g = vec![0.0; q.len()];
        let (e, _) = p.contact_energy(&q, dhat, 1.0, Some(&mut g), None).unwrap();
        if e == 0.0 {
            continue;
        }
        active += 1;
        let fd = fd_gradient(&q, 1e-7, |x| {
            p.contact_energy(x, dhat, 1.0, None, None).unwrap().0
        });
        let err = vec_rel_err(&g, &fd);
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
    assert!(active > 0);
}

#[test]
fn hessian_vector_products_match_gradient_differences() {
    let p = honeycomb(1);
    let load = LoadCase::biaxial(0.3, 0.05, 0.02);
    let dhat = 0.1 * p.mesh.cell_size();
    let q = perturbed(&p, &Matrix2::identity(), 1e-3, 3);
    let grad = |x: &[f64]| {
        let mut g = vec![0.0; x.len()];
        p.elastic(x, None, Some(&mut g), None).unwrap();
        p.penalty(x, &load, Some(&mut g), None);
        p.contact_energy(x, dhat, 1.0, Some(&mut g), None).unwrap();
        g
    };
    let mut h = BlockTriplets::default();
    p.elastic(&q, None, None, Some(&mut h)).unwrap();
    p.penalty(&q, &load, None, Some(&mut h));
    p.contact_energy(&q, dhat, 1.0, None, Some(&mut h)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let v: Vec<f64> = (0..q.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let hv = h.mul(&v);
        let eps = 1e-6;
        let qp: Vec<f64> = q.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
        let qm: Vec<f64> = q.iter().zip(&v).map(|(a, b)| a - eps * b).collect();
        let fd: Vec<f64> = grad(&qp)
            .iter()
            .zip(grad(&qm))
            .map(|(a, b)| (a - b) / (2.0 * eps))
            .collect();
        assert!(vec_rel_err(&hv, &fd) < 1e-4);
    }
}

#[test]
fn energies_are_translation_invariant() {
    let p = honeycomb(1);
    let load = LoadCase::uniaxial(0.2, -0.1);
    let dhat = 0.1 * p.mesh.cell_size();
    let q = perturbed(&p, &Matrix2::new(1.0, 0.05, 0.0, 0.95), 1e-3, 1);
    let mut s = ReducedState::from_vector(&q);
    let shift = Vector2::new(0.37, -1.3);
    s.free_positions.iter_mut().for_each(|x| *x += shift);
    let qs = s.to_vector();
    let e = |x: &[f64]| {
        (
            p.elastic(x, None, None, None).unwrap(),
            p.penalty(x, &load, None, None),
            p.contact_energy(x, dhat, 1.0, None, None).unwrap().0,
        )
    };
    let (a, b) = (e(&q), e(&qs));
    assert!((a.0 - b.0).abs() < 1e-12);
    assert!((a.1 - b.1).abs() < 1e-12);
    assert!((a.2 - b.2).abs() < 1e-12);
}

#[test]
fn zero_biaxial_load_converges_at_rest() {
    let p = solid(2);
    let load = LoadCase::biaxial(0.0, 0.0, 0.0);
    let r = p
        .solve(&load, &p.rest_state(), &SolverConfig::default())
        .unwrap();
    assert!(r.newton_iterations <= 2);
    assert!(r.elastic_energy.abs() < 1e-14);
}

#[test]
fn solid_uniaxial_tension_contracts_laterally() {
    let p = solid(2);
    let load = LoadCase::uniaxial(0.0, 0.1);
    let r = p
        .solve(
            &load,
            &p.affine_state(&load.target_deformation(1.0)),
            &SolverConfig::default(),
        )
        .unwrap();
    let [tij, tkl] = [r.state.t_ij, r.state.t_kl];
    let f = Matrix2::from_columns(&[tij, tkl]);
    let e = 0.5 * (f.transpose() * f - Matrix2::identity());
    assert!(e[(1, 1)] < 0.0);
    assert!((e[(0, 0)] - 0.1).abs() < 1e-6);
    assert!(r.constraint_violation < 1e-3);
    assert!(r.penalty_energy / r.elastic_energy < 1e-4);
}

#[test]
fn honeycomb_compression_stays_intersection_free() {
    let p = honeycomb(1);
    let load = LoadCase::uniaxial(0.0, -0.2);
    let config = SolverConfig::default();
    let r = p
        .solve(
            &load,
            &p.affine_state(&load.target_deformation(1.0)),
            &config,
        )
        .unwrap();
    assert!(r.contact_energy >= 0.0);
    let q = r.state.to_vector();
    let dmin = p.min_contact_distance(&q, 0.05 * p.mesh.cell_size());
    assert!(dmin > 0.0);
    for w in r.energy_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1e-12));
    }
    assert!(r.penalty_energy / r.elastic_energy < 1e-4);
}

#[test]
fn strong_compression_converges_without_interpenetration() {
    let p = honeycomb(1);
    let q = compressed_contact_state(&p, 2e-2);
    let dmin = p.min_contact_distance(&q, 0.1);
    assert!(dmin > 0.0, "{dmin}");
}
