//! Acceptance criteria, one line each. Exits nonzero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use morse_bott::catalog;
use morse_bott::complex::{assemble_numeric, f2_homology, CheckComplex};
use morse_bott::continuation::*;
use morse_bott::equivariant::{operator_degrees_consistent, pin2_pipeline, s_h_example, Pin2Options, Pin2Report};
use morse_bott::f2::F2Matrix;
use morse_bott::fields::{random_symmetric, real_spectrum_check, BoundaryKind};
use morse_bott::flow::moduli::{build_moduli, CountOptions, ModuliOptions};
use morse_bott::flow::{backward_limit, forward_limit, FlowOptions};
use morse_bott::oracle::{cellular_homology, grid_conley_index, same_betti, CwComplex, GridOptions};
use morse_bott::strata::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Default)]
struct Shared {
    complexes: Vec<(String, CheckComplex)>,
    /// `(what, degree audit passed)` from the continuation runs.
    f_audits: Vec<(String, bool)>,
    pin2: Option<Pin2Report>,
}

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn criterion_1(s: &mut Shared) -> Check {
    let mut obstructed = false;
    for e in catalog::entries() {
        let ctx = e.context(1).map_err(|x| format!("{}: {x}", e.name))?;
        let (c, _) = assemble_numeric(&ctx, &CountOptions::default()).map_err(|x| format!("{}: {x}", e.name))?;
        ensure(c.d_check.mul(&c.d_check).is_zero(), format!("{}: d^2 != 0", e.name))?;
        let kinds: BTreeSet<_> = c.generators.iter().map(|g| g.kind).collect();
        obstructed |= kinds.contains(&BoundaryKind::BoundaryStable) && kinds.contains(&BoundaryKind::BoundaryUnstable);
        s.complexes.push((e.name.to_string(), c));
    }
    ensure(s.complexes.len() >= 6, "fewer than 6 catalog complexes")?;
    ensure(obstructed, "no complex mixes boundary-stable and boundary-unstable loci")?;
    Ok(format!("d^2 = 0 on {} catalog complexes, d2-boundary has the obstructed composite", s.complexes.len()))
}

fn criterion_2(_: &mut Shared) -> Check {
    let ctx = catalog::context("s2-height").ok_or("no s2-height")?;
    let (c, _) = assemble_numeric(&ctx, &CountOptions::default()).map_err(|e| e.to_string())?;
    let betti = f2_homology(&c).betti;
    ensure(betti == [1, 0, 1], format!("homology {betti:?}"))?;
    let n = ctx.loci.iter().position(|b| b.index == 2).ok_or("no maximum")?;
    let south = ctx.loci.iter().position(|b| b.index == 0).ok_or("no minimum")?;
    let m = build_moduli(&ctx, n, south, &ModuliOptions::default()).map_err(|e| e.to_string())?;
    ensure(
        m.expected_dim == 1 && m.est_dim == Some(1),
        format!("M(N,S): expected {} estimated {:?}", m.expected_dim, m.est_dim),
    )?;
    Ok(format!("homology {betti:?}, M(N,S) expected_dim = est_dim = 1 over {} classes", m.classes.len()))
}

fn criterion_3(_: &mut Shared) -> Check {
    let ctx = catalog::context("interval-cubic").ok_or("no interval-cubic")?;
    let mut u = 0;
    let mut interior = 0;
    for b in &ctx.loci {
        let x = b.representative_points[0][0];
        match b.kind {
            BoundaryKind::BoundaryUnstable if b.index == 1 && (x.abs() - 1.0).abs() < 1e-9 => u += 1,
            BoundaryKind::Interior if b.index == 0 => interior += 1,
            _ => return Err(format!("unexpected locus {} {:?} index {} at {x}", b.label, b.kind, b.index)),
        }
    }
    ensure(u == 2 && interior == 1, format!("{u} u points, {interior} interior"))?;
    let (c, _) = assemble_numeric(&ctx, &CountOptions::default()).map_err(|e| e.to_string())?;
    let engine = f2_homology(&c).betti;
    let grid = grid_conley_index(&ctx.field, &ctx.field.manifold.bbox, &GridOptions::default()).map_err(|e| e.to_string())?;
    ensure(engine == [1], format!("engine {engine:?}"))?;
    ensure(grid.betti == engine, format!("grid {:?} vs engine {engine:?}", grid.betti))?;
    Ok(format!("u points at +-1 with index 1, interior minimum, homology {engine:?} = grid {:?}", grid.betti))
}

fn criterion_4(s: &mut Shared) -> Check {
    let map = |h: Homotopy, density: f64| -> Result<ContinuationMap, String> {
        let cc = ContinuationContext::new(h, density, 1).map_err(|e| e.to_string())?;
        build_f(&cc, &CountOptions::default()).map_err(|e| e.to_string())
    };
    for (field, density) in [(catalog::s2_height(), 3.0), (catalog::s2_two_max(), 4.0)] {
        let m = map(Homotopy::constant(&field), density)?;
        ensure(m.f_check == F2Matrix::identity(m.f_check.rows()), format!("{}: constant F is not the identity", field.name))?;
        s.f_audits.push((format!("constant {}", field.name), f_degrees_consistent(&m.f_check, &m.source, &m.target)));
    }
    let m = map(Homotopy::rotating_height_s2(0.0, 1.0), 3.0)?;
    let induced = induced_on_homology(&m.f_check, &m.source, &m.target);
    ensure(verify_chain_map(&m.f_check, &m.source, &m.target).holds, "rotation: not a chain map")?;
    ensure(induced.isomorphism && induced.source_betti == [1, 0, 1], format!("rotation: {induced:?}"))?;
    s.f_audits.push(("rotation".into(), f_degrees_consistent(&m.f_check, &m.source, &m.target)));

    let (a, b, c) = catalog_triple(1.0);
    let r = build_psi(&a, &b, &c, &PsiOptions::default()).map_err(|e| e.to_string())?;
    ensure(r.gluing_holds, "F12 F01 does not match the concatenation")?;
    require_identity(&r).map_err(|e| e.to_string())?;
    s.f_audits.push(("psi".into(), psi_degrees_consistent(&r)));
    Ok(format!(
        "constant F = id on 2 fields, rotation iso on {:?}, dPsi + Psi d = F02 + F12 F01 ({} events)",
        induced.source_betti,
        r.events.len()
    ))
}

fn criterion_5(s: &mut Shared) -> Check {
    let mut bad: Vec<String> = Vec::new();
    for (name, c) in &s.complexes {
        if !c.degrees_consistent() {
            bad.push(format!("d of {name}"));
        }
    }
    bad.extend(s.f_audits.iter().filter(|(_, ok)| !ok).map(|(w, _)| format!("F of {w}")));
    let r = pin2_pipeline(&s_h_example().map_err(|e| e.to_string())?, &Pin2Options::default()).map_err(|e| e.to_string())?;
    for op in [&r.q, &r.v] {
        if !operator_degrees_consistent(&r.invariant, op) {
            bad.push(op.name.clone());
        }
    }
    ensure(r.q.degree == -1 && r.v.degree == -4, format!("operator degrees {} and {}", r.q.degree, r.v.degree))?;
    let audited = s.complexes.len() + s.f_audits.len() + 2;
    s.pin2 = Some(r);
    ensure(s.f_audits.len() >= 4, "continuation runs missing")?;
    ensure(bad.is_empty(), format!("violations: {bad:?}"))?;
    Ok(format!("{audited} maps audited (d -1, F 0, Q -1, V -4), no violations"))
}

fn criterion_6(s: &mut Shared) -> Check {
    let r = s.pin2.take().ok_or("criterion 5 did not produce the Pin(2) run")?;
    let rp2 = cellular_homology(&CwComplex::real_projective(2)).map_err(|e| e.to_string())?;
    ensure(r.homology.betti == rp2, format!("invariant homology {:?} vs RP^2 {rp2:?}", r.homology.betti))?;
    let m = &r.module;
    ensure(m.q_isomorphic_from == [1, 2], format!("Q iso from {:?}", m.q_isomorphic_from))?;
    ensure(m.q_cubed_zero, "Q^3 != 0")?;
    ensure(r.v.check.is_zero() && m.v_ranks.values().all(|&k| k == 0), "V != 0")?;
    Ok(format!(
        "invariant homology {:?} = H(RP^2), Q iso H2 -> H1 -> H0, Q^3 = 0, V = 0",
        r.homology.betti
    ))
}

fn criterion_7(_: &mut Shared) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst, mut done) = (0.0f64, 0);
    while done < 1000 {
        let d = random_symmetric(8, &mut rng) * 4.0;
        let l = random_symmetric(8, &mut rng);
        let k = rng.gen_range(1..=3);
        let mut beta: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        let sum: f64 = beta.iter().sum();
        beta.iter_mut().for_each(|b| *b /= sum);
        let total: f64 = beta.iter().sum();
        beta[k - 1] += 1.0 - total;
        let mut t: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..6.0)).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        if t.len() < k {
            continue;
        }
        let r = real_spectrum_check(&d, &beta, &t, &l).map_err(|e| e.to_string())?;
        worst = worst.max(r.max_imag);
        done += 1;
    }
    ensure(worst < 1e-9, format!("max |Im| = {worst:e}"))?;
    Ok(format!("1000 instances of D + PL in dimension 8, max |Im| = {worst:.1e}"))
}

fn criterion_8(_: &mut Shared) -> Check {
    let opts = FlowOptions::default();
    let mut worst = f64::NEG_INFINITY;
    let mut fields = 0;
    for e in catalog::entries() {
        let ctx = e.context(1).map_err(|x| x.to_string())?;
        let starts = ctx.field.manifold.sample_points(1000, 11);
        ensure(starts.len() == 1000, format!("{}: only {} starts", e.name, starts.len()))?;
        let drifts: Vec<Result<f64, String>> = starts
            .par_iter()
            .map(|x| {
                let (_, fw) = forward_limit(&ctx.field, &ctx.loci, x, &opts).map_err(|err| format!("{} forward from {x:?}: {err}", e.name))?;
                let (_, bw) = backward_limit(&ctx.field, &ctx.loci, x, &opts).map_err(|err| format!("{} backward from {x:?}: {err}", e.name))?;
                Ok(fw.f_drift().max(bw.f_drift()))
            })
            .collect();
        for d in drifts {
            worst = worst.max(d?);
        }
        fields += 1;
    }
    ensure(worst <= 1e-9, format!("f drift {worst:e} per unit time"))?;
    Ok(format!("{fields} fields x 1000 starts resolve both limits, max f drift {worst:.1e}"))
}

/// Independent diamond test: every interval of length two has exactly two
/// middle faces.
fn diamond_holds(faces: &[(usize, usize)], covers: &[(usize, usize)]) -> bool {
    let covers: BTreeSet<(usize, usize)> = covers.iter().copied().collect();
    faces.iter().all(|&(a, _)| {
        faces.iter().all(|&(c, _)| {
            let mids = faces.iter().filter(|&&(b, _)| covers.contains(&(a, b)) && covers.contains(&(b, c))).count();
            mids == 0 || mids == 2
        })
    })
}

fn criterion_9(_: &mut Shared) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut checked, mut rejected, mut missed) = (0, 0, 0);
    for _ in 0..10_000 {
        let n = rng.gen_range(3..8);
        let d = rng.gen_range(0..n.min(4));
        let k = rng.gen_range(1..6);
        let p = random_simplicial_poset(&mut rng, n, d, k);
        let tops = p.top_faces();
        let cell = TargetCell::Zero;
        let map = tops.iter().map(|&id| (id, CellImage { cell, degree: (d == 0).then_some(1) })).collect();
        let chain = DeltaChain::new(p.clone(), ChainTarget::new("B", CellModel::Point, 0), map).map_err(|e| e.to_string())?;
        ensure(ChainSum(vec![chain]).boundary().boundary().is_zero(), "boundary of boundary is nonzero")?;
        checked += 1;
        let (faces, covers) = drop_random_cover(&mut rng, &p);
        if !diamond_holds(&faces, &covers) {
            match FacePoset::new(&faces, &covers) {
                Err(_) => rejected += 1,
                Ok(_) => missed += 1,
            }
        }
    }
    ensure(missed == 0, format!("{missed} diamond violations accepted"))?;
    ensure(rejected > 0, "no violations generated")?;
    Ok(format!("{checked} posets with d0^2 = 0, {rejected} diamond violations all rejected"))
}

fn criterion_10(_: &mut Shared) -> Check {
    let mut lines = Vec::new();
    for e in catalog::entries() {
        let f = (e.build)();
        let r = match f.dim() {
            1 | 2 => 16,
            3 => 12,
            _ => 8,
        };
        let run = |res| {
            grid_conley_index(&f, &f.manifold.bbox, &GridOptions { resolution: res, ..Default::default() })
                .map(|c| c.betti)
                .map_err(|x| format!("{} at {res}: {x}", e.name))
        };
        let (coarse, fine) = (run(r)?, run(2 * r)?);
        ensure(coarse == fine, format!("{}: {coarse:?} at {r}, {fine:?} at {}", e.name, 2 * r))?;
        ensure(same_betti(&fine, &e.homology), format!("{}: grid {fine:?} vs expected {:?}", e.name, e.homology))?;
        lines.push(format!("{} {r}->{}", e.name, 2 * r));
    }
    Ok(format!("unchanged under doubling: {}", lines.join(", ")))
}

type Criterion = fn(&mut Shared) -> Check;

fn main() {
    let criteria: [(Criterion, u64, &str); 10] = [
        (criterion_1, 120, "d^2 = 0 on the catalog"),
        (criterion_2, 60, "S^2 height complex and moduli"),
        (criterion_3, 60, "interval cubic vs grid oracle"),
        (criterion_4, 600, "continuation maps and chain homotopy"),
        (criterion_5, 0, "degree audits"),
        (criterion_6, 120, "Pin(2) module on S(H)"),
        (criterion_7, 10, "real spectrum"),
        (criterion_8, 0, "limit existence and f monotonicity"),
        (criterion_9, 30, "strata algebra"),
        (criterion_10, 0, "grid refinement stability"),
    ];
    let mut shared = Shared::default();
    let mut failed = 0;
    for (k, (run, limit, title)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| run(&mut shared)))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let took = t.elapsed();
        let slow = *limit > 0 && took > Duration::from_secs(*limit);
        let (ok, detail) = match result {
            Ok(d) if !slow => (true, d),
            Ok(d) => (false, format!("{d}; over the {limit} s budget")),
            Err(e) => (false, e),
        };
        failed += usize::from(!ok);
        let budget = if *limit > 0 { format!(" of {limit} s") } else { String::new() };
        println!(
            "criterion {:>2} {} [{:.1} s{budget}] {title}: {detail}",
            k + 1,
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
