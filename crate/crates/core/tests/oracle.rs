use morse_bott::catalog;
use morse_bott::expr::Expr;
use morse_bott::f2::F2Matrix;
use morse_bott::fields::QuasiGradientField;
use morse_bott::geometry::ManifoldModel;
use morse_bott::oracle::*;

fn plane(f: &str) -> QuasiGradientField {
    let m = ManifoldModel::new(vec!["x".into(), "y".into()], vec![], None, vec![(-1.0, 1.0); 2]).unwrap();
    QuasiGradientField::gradient(f, m, Expr::parse(f, &["x", "y"]).unwrap()).unwrap()
}

fn index(f: &QuasiGradientField, bbox: &[(f64, f64)], r: usize) -> Result<Vec<usize>, OracleError> {
    let o = GridOptions {
        resolution: r,
        ..Default::default()
    };
    grid_conley_index(f, bbox, &o).map(|c| c.betti)
}

#[test]
fn classical_indices_in_the_plane() {
    let b = [(-1.0, 1.0); 2];
    assert_eq!(index(&plane("x^2 - y^2"), &b, 16).unwrap(), vec![0, 1]);
    assert_eq!(index(&plane("x^2 + y^2"), &b, 16).unwrap(), vec![1]);
    assert_eq!(index(&plane("-x^2 - y^2"), &b, 16).unwrap(), vec![0, 0, 1]);
    assert_eq!(index(&plane("x + 0.3*y"), &b, 16).unwrap(), vec![0]);
}

#[test]
fn a_line_of_fixed_points_is_not_isolated() {
    let err = index(&plane("y^2"), &[(-1.0, 1.0); 2], 16).unwrap_err();
    assert!(matches!(err, OracleError::NotIsolating { .. }), "{err}");
}

#[test]
fn local_index_of_the_north_pole() {
    let f = catalog::s2_height();
    let b = [(-1.5, 1.5), (-1.5, 1.5), (0.5, 1.5)];
    assert_eq!(index(&f, &b, 16).unwrap(), vec![0, 0, 1]);
}

#[test]
fn catalog_fields_match_their_homology() {
    for name in ["s2-height", "s2-two-max", "interval-cubic", "d2-boundary", "tilted-torus", "hopf-s2"] {
        let e = catalog::by_name(name).unwrap();
        let f = (e.build)();
        let b = index(&f, &f.manifold.bbox, 16).unwrap();
        assert!(same_betti(&b, &e.homology), "{name}: {b:?} vs {:?}", e.homology);
    }
}

#[test]
fn doubling_the_resolution_changes_nothing() {
    let cases: Vec<(QuasiGradientField, Vec<(f64, f64)>)> = vec![
        (plane("x^2 - y^2"), vec![(-1.0, 1.0); 2]),
        (plane("x^2 + y^2*(y^2 - 0.25)"), vec![(-1.0, 1.0); 2]),
        (catalog::interval_cubic(), vec![(-1.2, 1.2)]),
        (catalog::d2_boundary(), vec![(-1.3, 1.3); 2]),
        (catalog::s2_height(), vec![(-1.5, 1.5); 3]),
    ];
    for (f, b) in cases {
        let coarse = index(&f, &b, 12).unwrap();
        let fine = index(&f, &b, 24).unwrap();
        assert_eq!(coarse, fine, "{}", f.name);
    }
}

#[test]
fn cellular_models() {
    assert_eq!(cellular_homology(&CwComplex::sphere(2)).unwrap(), vec![1, 0, 1]);
    assert_eq!(cellular_homology(&CwComplex::real_projective(2)).unwrap(), vec![1, 1, 1]);
    assert_eq!(cellular_homology(&CwComplex::torus()).unwrap(), vec![1, 2, 1]);
    assert_eq!(cellular_homology(&CwComplex::point()).unwrap(), vec![1]);
    let ico = SimplicialComplex::icosahedron();
    assert_eq!(cellular_homology(&ico.as_cw("ico")).unwrap(), vec![1, 0, 1]);
}

#[test]
fn cellular_rejects_bad_boundaries() {
    let bad = CwComplex {
        name: "bad".into(),
        cells: vec![1, 1, 1],
        boundaries: vec![F2Matrix::from_rows(&[vec![1]]), F2Matrix::from_rows(&[vec![1]])],
    };
    assert_eq!(cellular_homology(&bad), Err(OracleError::DSquaredNonzero { degree: 2 }));
    let ragged = CwComplex {
        name: "ragged".into(),
        cells: vec![1, 2],
        boundaries: vec![F2Matrix::zeros(1, 1)],
    };
    assert!(matches!(cellular_homology(&ragged), Err(OracleError::ShapeMismatch { .. })));
}

#[test]
fn borel_homology_of_free_pin2_spaces() {
    let pin2 = borel_homology(&FreeInvolution::pin2(), 4).unwrap();
    assert_eq!(pin2.betti, vec![1, 0, 0, 0, 0]);

    let sh = borel_homology(&FreeInvolution::s_h(), 4).unwrap();
    assert_eq!(sh.betti, vec![1, 1, 1, 0, 0]);
    assert_eq!(sh.q_ranks.get(&1), Some(&1));
    assert_eq!(sh.q_ranks.get(&2), Some(&1));
    assert!(sh.q_cubed_zero);

    assert_eq!(
        borel_homology(&FreeInvolution::s_h(), 1).unwrap_err(),
        OracleError::TruncationTooLow { cap: 1, dim: 2 }
    );
    let mut fixed = FreeInvolution::s_h();
    fixed.vertex_map[0] = 0;
    assert!(matches!(borel_homology(&fixed, 4), Err(OracleError::BadInvolution { .. })));
}
