use morse_bott::catalog;
use morse_bott::continuation::*;
use morse_bott::expr::Expr;
use morse_bott::flow::moduli::{CountOptions, ModuliOptions};

fn map(h: Homotopy, density: f64) -> ContinuationMap {
    let cc = ContinuationContext::new(h, density, 1).unwrap();
    build_f(&cc, &CountOptions::default()).unwrap()
}

#[test]
fn constant_homotopy_is_the_identity() {
    for (field, density) in [(catalog::s2_height(), 3.0), (catalog::s2_two_max(), 4.0)] {
        let m = map(Homotopy::constant(&field), density);
        let n = m.f_check.rows();
        assert_eq!(m.f_check, morse_bott::f2::F2Matrix::identity(n), "{}", field.name);
        assert!(verify_chain_map(&m.f_check, &m.source, &m.target).holds);
        assert!(f_degrees_consistent(&m.f_check, &m.source, &m.target));
    }
}

#[test]
fn rotating_height_induces_an_isomorphism() {
    let m = map(Homotopy::rotating_height_s2(0.0, 1.0), 3.0);
    assert!(verify_chain_map(&m.f_check, &m.source, &m.target).holds);
    let induced = induced_on_homology(&m.f_check, &m.source, &m.target);
    assert!(induced.isomorphism, "{induced:?}");
    assert_eq!(induced.source_betti, vec![1, 0, 1]);
}

#[test]
fn pole_to_pole_moduli_are_zero_dimensional() {
    let cc = ContinuationContext::new(Homotopy::rotating_height_s2(0.0, 1.0), 3.0, 1).unwrap();
    let min = cc.start.loci.iter().position(|b| b.index == 0).unwrap();
    let min1 = cc.finish.loci.iter().position(|b| b.index == 0).unwrap();
    let m = continuation_moduli(&cc, min, min1, &ModuliOptions::default()).unwrap();
    assert_eq!(m.expected_dim, 0);
    assert_eq!(m.est_dim, Some(0));
    assert_eq!(m.classes.len() % 2, 1);
}

#[test]
fn a_flipped_entry_breaks_the_chain_map() {
    let m = map(Homotopy::constant(&catalog::s2_two_max()), 4.0);
    let names = basis_names(&m.source);
    let saddle = m.source.check_generators().iter().position(|g| g.degree == 1).unwrap();
    let top = m.target.check_generators().iter().position(|g| g.degree == 2).unwrap();
    let mut f = m.f_check.clone();
    f.flip(top, saddle);
    let check = verify_chain_map(&f, &m.source, &m.target);
    assert!(!check.holds);
    let (from, _) = check.offending.unwrap();
    assert!(names.contains(&from));
}

#[test]
fn chain_homotopy_identity_on_the_catalog_triple() {
    let (a, b, c) = catalog_triple(1.0);
    let r = build_psi(&a, &b, &c, &PsiOptions::default()).unwrap();
    assert!(r.gluing_holds);
    assert!(r.holds);
    assert!(psi_degrees_consistent(&r));
    require_identity(&r).unwrap();

    let mut broken = r.clone();
    broken.lhs.flip(0, 0);
    assert!(matches!(require_identity(&broken), Err(ContinuationError::IdentityFailed { .. })));
}

#[test]
fn chain_homotopy_identity_when_maxima_swap() {
    let f = catalog::s2_two_max();
    let m = f.manifold.clone();
    let up = f.f.add(&Expr::var(0).scale(0.4));
    let down = f.f.sub(&Expr::var(0).scale(0.4));
    let h01 = Homotopy::blend("tilt", m.clone(), &f.f, &up).unwrap();
    let h12 = Homotopy::blend("swap", m.clone(), &up, &down).unwrap();
    let h02 = Homotopy::blend("direct", m, &f.f, &down).unwrap();
    let r = build_psi(&h01, &h12, &h02, &PsiOptions { density: 4.0, ..Default::default() }).unwrap();
    assert!(r.gluing_holds);
    assert!(r.holds, "lhs {:?} rhs {:?}", r.lhs, r.rhs);
}
