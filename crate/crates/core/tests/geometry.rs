use metanet_core::geometry::{
    build_mesh, outline_polylines, read_mesh, validate_params, write_mesh, FamilySpec, TilingParams,
};
use proptest::prelude::*;

fn sample(spec: &FamilySpec, unit: &[f64]) -> TilingParams {
    TilingParams::new(
        unit.iter()
            .zip(spec.t_min.iter().zip(&spec.t_max))
            .map(|(u, (lo, hi))| lo + u * (hi - lo))
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn topology_is_independent_of_params(
        a in proptest::collection::vec(0.0..=1.0f64, 3),
        b in proptest::collection::vec(0.0..=1.0f64, 3),
        res in 1usize..3,
    ) {
        let spec = FamilySpec::honeycomb(3).unwrap();
        let m1 = build_mesh(&spec, &sample(&spec, &a), res).unwrap();
        let m2 = build_mesh(&spec, &sample(&spec, &b), res).unwrap();
        prop_assert!(m1.same_topology(&m2));
    }

    #[test]
    fn in_box_params_validate(u in proptest::collection::vec(0.0..=1.0f64, 3)) {
        let spec = FamilySpec::honeycomb(3).unwrap();
        let v = validate_params(&spec, &sample(&spec, &u));
        prop_assert!(v.valid, "{:?}", v.diagnostics);
    }
}

#[test]
fn vertex_positions_vary_smoothly_over_a_sweep() {
    let spec = FamilySpec::honeycomb(3).unwrap();
    let mid = spec.midpoint();
    for p in 0..3 {
        let n = 100;
        let (lo, hi) = (spec.t_min[p], spec.t_max[p]);
        let h = (hi - lo) / (n - 1) as f64;
        let at = |v: f64| {
            let mut t = mid.clone();
            t.values[p] = v.clamp(lo, hi);
            build_mesh(&spec, &t, 1).unwrap().rest_positions
        };
        let mut prev: Option<Vec<f64>> = None;
        let mut max_jump: f64 = 0.0;
        let mut max_deriv: f64 = 0.0;
        for k in 1..n - 1 {
            let v = lo + k as f64 * h;
            let (xp, xm) = (at(v + h), at(v - h));
            let d: Vec<f64> = xp
                .iter()
                .zip(&xm)
                .flat_map(|(a, b)| {
                    let g = (a - b) / (2.0 * h);
                    [g.x, g.y]
                })
                .collect();
            max_deriv = d.iter().fold(max_deriv, |m, x| m.max(x.abs()));
            if let Some(q) = &prev {
                let jump = d
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                max_jump = max_jump.max(jump);
            }
            prev = Some(d);
        }
        // Derivative changes between neighbouring sweep points are O(h).
        assert!(
            max_jump < 0.05 * max_deriv.max(1.0),
            "param {p}: jump {max_jump}, |d| {max_deriv}"
        );
    }
}

#[test]
fn mesh_text_round_trip() {
    let spec = FamilySpec::honeycomb(2).unwrap();
    let mesh = build_mesh(&spec, &spec.midpoint(), 2).unwrap();
    let mut buf = Vec::new();
    write_mesh(&mesh, &mut buf).unwrap();
    let back = read_mesh(&buf[..]).unwrap();
    assert_eq!(back.elements, mesh.elements);
    assert_eq!(back.periodic_pairs_x, mesh.periodic_pairs_x);
    assert_eq!(back.periodic_pairs_y, mesh.periodic_pairs_y);
    assert_eq!(back.surface_segments, mesh.surface_segments);
    for (a, b) in back.rest_positions.iter().zip(&mesh.rest_positions) {
        assert!((a - b).norm() < 1e-14);
    }
    assert!((back.rest_area - mesh.rest_area).abs() < 1e-12);
    let count = |s: &metanet_core::geometry::BoundarySides| {
        [s.left.len(), s.right.len(), s.bottom.len(), s.top.len()]
    };
    assert_eq!(count(&back.boundary_edges), count(&mesh.boundary_edges));
}

#[test]
fn truncated_mesh_file_is_a_format_error() {
    let spec = FamilySpec::solid_cell();
    let mesh = build_mesh(&spec, &TilingParams::empty(), 1).unwrap();
    let mut buf = Vec::new();
    write_mesh(&mesh, &mut buf).unwrap();
    let err = read_mesh(&buf[..buf.len() / 2]).unwrap_err();
    assert_eq!(err.name(), "FormatError");
}

#[test]
fn outline_has_closed_hole_boundaries() {
    let spec = FamilySpec::honeycomb(1).unwrap();
    let mesh = build_mesh(&spec, &spec.midpoint(), 1).unwrap();
    let lines = outline_polylines(&mesh);
    assert!(!lines.is_empty());
    let total: usize = lines.iter().map(|l| l.len() - 1).sum();
    assert_eq!(total, mesh.surface_segments.len());
}
