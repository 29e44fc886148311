use morse_bott::catalog;
use morse_bott::complex::{assemble, assemble_numeric, f2_homology};
use morse_bott::fields::BoundaryKind;
use morse_bott::flow::moduli::CountOptions;

#[test]
fn catalog_complexes_square_to_zero_and_match_homology() {
    for e in catalog::entries() {
        let ctx = e.context(1).unwrap();
        let (c, records) = assemble_numeric(&ctx, &CountOptions::default()).unwrap();
        assert!(c.d_check.mul(&c.d_check).is_zero(), "{}", e.name);
        assert!(c.degrees_consistent(), "{}", e.name);
        assert!(records.iter().all(|r| r.result.consistent), "{}", e.name);
        assert_eq!(f2_homology(&c).betti, e.homology, "{}", e.name);
    }
}

#[test]
fn interval_cubic_keeps_one_generator() {
    let ctx = catalog::context("interval-cubic").unwrap();
    let (c, _) = assemble_numeric(&ctx, &CountOptions::default()).unwrap();
    let g = c.check_generators();
    assert_eq!(g.len(), 1);
    assert_eq!(g[0].degree, 0);
    assert!(c.d_check.is_zero());
    let u: Vec<_> = c.generators.iter().filter(|g| g.kind == BoundaryKind::BoundaryUnstable).collect();
    assert_eq!(u.len(), 2);
    assert!(u.iter().all(|g| g.degree == 1));
}

#[test]
fn disk_uses_the_obstructed_composite() {
    let ctx = catalog::context("d2-boundary").unwrap();
    let (c, records) = assemble_numeric(&ctx, &CountOptions::default()).unwrap();
    assert!(records.iter().any(|r| r.boundary_obstructed && r.result.coefficient));
    assert_eq!(
        c.block(BoundaryKind::BoundaryStable, BoundaryKind::BoundaryUnstable).nonzeros().len(),
        4
    );
    // Each s point reaches O through both u points, so ∂̌ vanishes on C^s and
    // the s generators are killed by the interior maxima.
    assert_eq!(f2_homology(&c).betti, vec![1, 0, 0]);
}

#[test]
fn exact_data_round_trips_through_json() {
    let ctx = catalog::context("s2-two-max").unwrap();
    let (data, _) = morse_bott::complex::numeric_data(&ctx, &CountOptions::default()).unwrap();
    let text = serde_json::to_string(&data).unwrap();
    let back = serde_json::from_str(&text).unwrap();
    assert_eq!(data, back);
    assert_eq!(f2_homology(&assemble(&back).unwrap()).betti, vec![1, 0, 1]);
}
