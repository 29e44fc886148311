use morse_bott::complex::{assemble, ComplexData, Entry, GenRef, LocusData};
use morse_bott::equivariant::*;
use morse_bott::expr::Expr;
use morse_bott::f2::F2Matrix;
use morse_bott::fields::{BoundaryKind, EquivariantField, QuasiGradientField};
use morse_bott::geometry::ManifoldModel;
use morse_bott::strata::{CellModel, TargetCell};

#[test]
fn s_h_pipeline_gives_rp2_with_q_isomorphisms() {
    let qm = s_h_example().unwrap();
    assert!(qm.residue < 1e-8, "{}", qm.residue);
    let r = pin2_pipeline(&qm, &Pin2Options::default()).unwrap();
    assert_eq!(r.full_homology.betti, vec![1, 0, 1]);
    assert_eq!(r.homology.betti, vec![1, 1, 1]);
    // The antipodal j pairs the six critical points; invariant chains are sums.
    assert!(r.invariant.names.iter().all(|n| n.contains('+')), "{:?}", r.invariant.names);
    assert_eq!(r.module.q_isomorphic_from, vec![1, 2]);
    assert!(r.module.q_cubed_zero);
    assert_eq!(r.module.q_chain_length, 3);
    assert!(r.v.check.is_zero());
    assert!(operator_degrees_consistent(&r.invariant, &r.q));
    assert!(operator_degrees_consistent(&r.invariant, &r.v));
}

#[test]
fn hopf_map_is_circle_invariant_and_j_odd() {
    let h: Vec<Expr> = hopf_map();
    let q = [0.3, -0.5, 0.7, 0.2];
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let q: Vec<f64> = q.iter().map(|x| x / n).collect();
    let ev = |x: &[f64]| h.iter().map(|e| e.eval(x)).collect::<Vec<_>>();
    let rot = (left_i() * 0.9).exp() * nalgebra::DVector::from_column_slice(&q);
    let jq = left_j() * nalgebra::DVector::from_column_slice(&q);
    let (a, b, c) = (ev(&q), ev(rot.as_slice()), ev(jq.as_slice()));
    for k in 0..3 {
        assert!((a[k] - b[k]).abs() < 1e-12);
        assert!((a[k] + c[k]).abs() < 1e-12);
    }
    assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn quotient_rejects_fixed_points_and_broken_symmetry() {
    let v4 = ["a", "b", "c", "d"];
    let shifted = ManifoldModel::new(
        v4.iter().map(|s| s.to_string()).collect(),
        vec![Expr::parse("(a - 0.5)^2 + b^2 + c^2 + d^2 - 0.25", &v4).unwrap()],
        None,
        vec![(-1.5, 1.5); 4],
    )
    .unwrap();
    let f = Expr::parse("x", &["x", "y", "z"]).unwrap();
    let through_origin = EquivariantField {
        base: QuasiGradientField::gradient("shifted", shifted, Expr::parse("a", &v4).unwrap()).unwrap(),
        i_mat: left_i(),
        j_mat: left_j(),
    };
    assert!(matches!(quotient_model(&through_origin, &f, 50, 1), Err(EquivariantError::NonFreeAction { .. })));

    let mut tilted = hopf_lift("tilted", &f).unwrap();
    tilted.base = QuasiGradientField::gradient("tilted", tilted.base.manifold.clone(), Expr::parse("a", &v4).unwrap()).unwrap();
    assert!(matches!(quotient_model(&tilted, &f, 50, 1), Err(EquivariantError::NotEquivariant { .. })));

    let mut other = hopf_lift("other", &f).unwrap();
    other.j_mat = -left_j();
    assert!(matches!(quotient_model(&other, &f, 50, 1), Err(EquivariantError::UnsupportedAction { .. })));
}

fn locus(label: &str, index: usize) -> LocusData {
    LocusData {
        label: label.into(),
        model: CellModel::Point,
        index,
        kind: BoundaryKind::Interior,
        f_value: index as f64,
    }
}

fn entry(from: &str, to: &str) -> Entry {
    let g = |l: &str| GenRef {
        locus: l.into(),
        cell: TargetCell::Zero,
    };
    Entry {
        from: g(from),
        to: g(to),
        coefficient: 1,
    }
}

#[test]
fn identity_j_keeps_the_whole_complex() {
    let c = assemble(&ComplexData {
        loci: vec![locus("A", 0), locus("B", 0), locus("C", 1)],
        entries: vec![entry("C", "A")],
    })
    .unwrap();
    let inv = invariant_subcomplex(&c, &F2Matrix::identity(3)).unwrap();
    assert_eq!(inv.basis.len(), 3);
    assert_eq!(inv.homology().betti, vec![1, 0]);
}

#[test]
fn j_that_misses_the_differential_is_rejected() {
    let c = assemble(&ComplexData {
        loci: vec![locus("A", 0), locus("B", 0), locus("C", 1)],
        entries: vec![entry("C", "A")],
    })
    .unwrap();
    let swap = F2Matrix::from_rows(&[vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 1]]);
    let err = invariant_subcomplex(&c, &swap).unwrap_err();
    assert!(matches!(err, EquivariantError::JNotChainMap { .. }), "{err}");
    let not_involution = F2Matrix::from_rows(&[vec![0, 1, 0], vec![1, 1, 0], vec![0, 0, 1]]);
    assert!(invariant_subcomplex(&c, &not_involution).is_err());
    let degree_changing = F2Matrix::from_rows(&[vec![1, 0, 1], vec![0, 1, 0], vec![0, 0, 1]]);
    assert!(invariant_subcomplex(&c, &degree_changing).is_err());
}

#[test]
fn corrupted_q_counts_are_not_a_chain_map() {
    let qm = s_h_example().unwrap();
    let r = pin2_pipeline(&qm, &Pin2Options::default()).unwrap();
    let mut records = r.q.records.clone();
    let k = records.iter().position(|c| c.crossings % 2 == 1).unwrap();
    records[k].crossings += 1;
    let err = q_operator(&r.invariant, &records).unwrap_err();
    assert!(matches!(err, EquivariantError::NotChainMap { .. }), "{err}");
}

#[test]
fn even_sections_are_rejected() {
    let qm = s_h_example().unwrap();
    let opts = Pin2Options {
        eta: Section::new("even", 1, |p| vec![p[0] * p[0] - 0.3]),
        ..Pin2Options::default()
    };
    assert!(matches!(pin2_pipeline(&qm, &opts), Err(EquivariantError::SectionNotOdd { .. })));
}

#[test]
fn v_entries_must_drop_degree_by_four() {
    let qm = s_h_example().unwrap();
    let r = pin2_pipeline(&qm, &Pin2Options::default()).unwrap();
    let bad = CutRecord {
        from: GenRef {
            locus: "B4".into(),
            cell: TargetCell::Zero,
        },
        to: GenRef {
            locus: "B0".into(),
            cell: TargetCell::Zero,
        },
        trajectories: 1,
        crossings: 1,
    };
    assert!(v_operator(&r.invariant, &[bad]).is_err());
}
