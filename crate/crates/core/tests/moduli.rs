use morse_bott::catalog::{self, context};
use morse_bott::fields::BoundaryKind;
use morse_bott::flow::moduli::*;

fn point_count(name: &str, a: usize, b: usize, opts: &CountOptions) -> CountResult {
    let ctx = context(name).unwrap();
    count_coefficient(&ctx, Cell::point(a), Cell::point(b), opts).unwrap()
}

#[test]
fn catalog_loci_have_expected_shape() {
    let shapes: &[(&str, &[(usize, usize)])] = &[
        ("s2-height", &[(0, 0), (2, 0)]),
        ("s2-two-max", &[(0, 0), (1, 0), (2, 0), (2, 0)]),
        ("s3-morse-bott", &[(0, 2), (3, 0), (3, 0)]),
        ("tilted-torus", &[(0, 0), (1, 0), (1, 0), (2, 0)]),
        ("hopf-s2", &[(0, 0), (0, 0), (1, 0), (1, 0), (2, 0), (2, 0)]),
    ];
    for (name, want) in shapes {
        let ctx = context(name).unwrap();
        let got: Vec<(usize, usize)> = ctx.loci.iter().map(|l| (l.index, l.dim)).collect();
        assert_eq!(&got, want, "{name}");
    }
    let d2 = context("d2-boundary").unwrap();
    let kinds: Vec<char> = d2.loci.iter().map(|l| l.kind.tag()).collect();
    assert_eq!(kinds, vec!['o', 'u', 'u', 's', 's', 'o', 'o']);
    let s4 = context("s4-blowup-quotient").unwrap();
    assert_eq!(s4.loci[0].kind, BoundaryKind::BoundaryStable);
    assert_eq!((s4.loci[1].kind, s4.loci[1].index), (BoundaryKind::BoundaryUnstable, 1));
}

#[test]
fn boundary_counts_on_the_disk() {
    let o = CountOptions::default();
    // P± reach only the boundary-stable point on their side.
    assert!(point_count("d2-boundary", 6, 3, &o).coefficient);
    assert!(!point_count("d2-boundary", 6, 4, &o).coefficient);
    // Nothing in the interior converges to a boundary-unstable point.
    assert_eq!(point_count("d2-boundary", 6, 2, &o).strategy, Strategy::Empty);
    // Boundary-obstructed s → u counts run inside the boundary circle.
    assert!(point_count("d2-boundary", 3, 1, &o).coefficient);
    assert!(point_count("d2-boundary", 3, 2, &o).coefficient);
    // u → O leaves the boundary along the inward normal.
    assert!(point_count("d2-boundary", 1, 0, &o).coefficient);
}

#[test]
fn sweep_agrees_with_backward_seeds() {
    let fwd = CountOptions {
        allow_backward: false,
        ..CountOptions::default()
    };
    for (name, a, b) in [("s2-two-max", 2, 1), ("tilted-torus", 3, 2), ("d2-boundary", 6, 3)] {
        let back = point_count(name, a, b, &CountOptions::default());
        let sweep = point_count(name, a, b, &fwd);
        assert_eq!(back.strategy, Strategy::BackwardSeeds);
        assert_eq!(sweep.strategy, Strategy::ForwardSweep);
        assert_eq!(back.hits, sweep.hits, "{name} B{a} -> B{b}");
    }
}

#[test]
fn degree_onto_sphere_loci() {
    let ctx = context("s3-morse-bott").unwrap();
    let o = CountOptions { ico_level: 2, ..CountOptions::default() };
    for pole in [1, 2] {
        let r = count_coefficient(&ctx, Cell::point(pole), Cell::fundamental(0), &o).unwrap();
        assert_eq!(r.strategy, Strategy::Degree);
        assert!(r.coefficient && r.consistent);
    }
    let ctx = context("s4-blowup-quotient").unwrap();
    let r = count_coefficient(&ctx, Cell::fundamental(1), Cell::fundamental(0), &o).unwrap();
    assert!(r.coefficient && r.consistent);
}

#[test]
fn dimension_estimates_match_expectation() {
    let o = ModuliOptions::default();
    for (name, a, b) in [
        ("s2-height", 1, 0),
        ("s2-two-max", 2, 1),
        ("s2-two-max", 2, 0),
        ("d2-boundary", 3, 1),
        ("s3-morse-bott", 1, 0),
    ] {
        let ctx = context(name).unwrap();
        let m = build_moduli(&ctx, a, b, &o).unwrap();
        assert_eq!(m.est_dim.map(|d| d as i64), Some(m.expected_dim), "{name} B{a} -> B{b}");
        assert!(m.smale.unwrap().transverse());
    }
}

#[test]
fn upright_torus_fails_transversality() {
    let ctx = context("upright-torus").unwrap();
    let m = build_moduli(&ctx, 2, 1, &ModuliOptions::default()).unwrap();
    assert_eq!(m.expected_dim, -1);
    assert_eq!(m.classes.len(), 2);
    assert_eq!(m.smale.unwrap().defect, 1);
    let tilted = context("tilted-torus").unwrap();
    let m = build_moduli(&tilted, 2, 1, &ModuliOptions::default()).unwrap();
    assert!(m.classes.is_empty());
}

#[test]
fn one_parameter_family_ends_in_broken_pair() {
    let ctx = context("s2-two-max").unwrap();
    let m = build_moduli(&ctx, 2, 0, &ModuliOptions::default()).unwrap();
    assert!(!m.broken_records.is_empty());
    for r in &m.broken_records {
        assert_eq!(r.labels, vec!["B2", "B1", "B0"]);
        assert!(r.approach[0] < 1e-4);
        assert!(r.ev_mismatch < 1e-9);
    }
}

#[test]
fn taming_function_decreases_along_flow() {
    for e in catalog::entries() {
        let ctx = e.context(1).unwrap();
        let top = ctx.loci.len() - 1;
        let m = build_moduli(&ctx, top, 0, &ModuliOptions { samples: 8, ..Default::default() });
        if let Ok(m) = m {
            for t in &m.representatives {
                assert!(t.f_drift() <= 1e-9, "{}: drift {}", e.name, t.f_drift());
            }
        }
    }
}
