//! Built-in example fields used by tests, the CLI `catalog` subcommand and
//! the acceptance suite.

use serde::Serialize;

use crate::expr::Expr;
use crate::fields::{find_stationary_loci, FieldError, QuasiGradientField};
use crate::flow::moduli::FieldContext;
use crate::geometry::ManifoldModel;

fn names(vars: &[&str]) -> Vec<String> {
    vars.iter().map(|s| s.to_string()).collect()
}

fn p(src: &str, vars: &[&str]) -> Expr {
    Expr::parse(src, vars).expect("catalog expression parses")
}

/// Unit sphere in `R^{vars.len()}`.
pub fn sphere(vars: &[&str]) -> ManifoldModel {
    let src: Vec<String> = vars.iter().map(|v| format!("{v}^2")).collect();
    let g = p(&format!("{} - 1", src.join(" + ")), vars);
    ManifoldModel::new(names(vars), vec![g], None, vec![(-1.5, 1.5); vars.len()])
        .expect("sphere is a regular level set")
}

const XYZ: &[&str] = &["x", "y", "z"];

/// Height function `z` on the round 2-sphere.
pub fn s2_height() -> QuasiGradientField {
    QuasiGradientField::gradient("s2-height", sphere(XYZ), p("z", XYZ)).unwrap()
}

/// `v = x(1 − x²)` on `[−1, 1]` tamed by `x²/2 − x⁴/4`.
pub fn interval_cubic() -> QuasiGradientField {
    let m = ManifoldModel::new(names(&["x"]), vec![], Some(p("x^2 - 1", &["x"])), vec![(-1.2, 1.2)])
        .unwrap();
    QuasiGradientField::new(
        "interval-cubic",
        m,
        vec![p("x*(1 - x^2)", &["x"])],
        p("x^2/2 - x^4/4", &["x"]),
    )
    .unwrap()
}

/// `f = x² + z/2` on the 2-sphere: two maxima, a saddle at the north pole
/// and a minimum at the south pole.
pub fn s2_two_max() -> QuasiGradientField {
    QuasiGradientField::gradient("s2-two-max", sphere(XYZ), p("x^2 + z/2", XYZ)).unwrap()
}

/// The unit disk with `v = ∇f − (x·∇f) x`, tangent to the boundary circle.
///
/// Interior minimum `O`, interior maxima `P±`, boundary-stable points at
/// `(±1, 0)` and boundary-unstable points at `(0, ±1)`.
pub fn d2_boundary() -> QuasiGradientField {
    let xy = &["x", "y"];
    let m = ManifoldModel::new(names(xy), vec![], Some(p("x^2 + y^2 - 1", xy)), vec![(-1.3, 1.3); 2])
        .unwrap();
    let f = p("x^2 + y^2 + 2.5*x^2 - 2*x^2*(x^2 + y^2)", xy);
    let g = f.gradient(2);
    let radial = Expr::var(0).mul(&g[0]).add(&Expr::var(1).mul(&g[1]));
    let v = (0..2).map(|i| g[i].sub(&radial.mul(&Expr::var(i)))).collect();
    QuasiGradientField::new("d2-boundary", m, v, f).unwrap()
}

/// `f = w²` on the 3-sphere in `R⁴`: the equatorial 2-sphere is a
/// Morse–Bott minimum and the poles `w = ±1` are maxima.
pub fn s3_morse_bott() -> QuasiGradientField {
    let v4 = &["x", "y", "z", "w"];
    QuasiGradientField::gradient("s3-morse-bott", sphere(v4), p("w^2", v4)).unwrap()
}

/// Torus of radii `1` and `0.4` with axis along `y`.
pub fn torus() -> ManifoldModel {
    let g = p("(x^2 + y^2 + z^2 + 1 - 0.16)^2 - 4*(x^2 + z^2)", XYZ);
    ManifoldModel::new(names(XYZ), vec![g], None, vec![(-1.5, 1.5); 3]).unwrap()
}

/// Height `z` on the torus standing on its rim. The two saddles are joined
/// by a pair of flow lines inside the plane `y = 0`, so the field is not
/// Morse–Smale.
pub fn upright_torus() -> QuasiGradientField {
    QuasiGradientField::gradient("upright-torus", torus(), p("z", XYZ)).unwrap()
}

/// Height along a direction tilted toward the torus axis: Morse–Smale.
pub fn tilted_torus() -> QuasiGradientField {
    let f = p("z*cos(0.2) + y*sin(0.2)", XYZ);
    QuasiGradientField::gradient("tilted-torus", torus(), f).unwrap()
}

/// Weights of the quadratic form on the Hopf base.
pub const HOPF_WEIGHTS: [f64; 3] = [1.0, 2.0, 3.0];

/// `F = a p₁² + b p₂² + c p₃²` on the 2-sphere, the quotient of an
/// `S¹`-invariant function on the unit quaternions under the Hopf map.
/// Six critical points; the antipodal map is a symmetry.
pub fn hopf_s2() -> QuasiGradientField {
    let [a, b, c] = HOPF_WEIGHTS;
    let f = p(&format!("{a}*x^2 + {b}*y^2 + {c}*z^2"), XYZ);
    QuasiGradientField::gradient("hopf-s2", sphere(XYZ), f).unwrap()
}

/// The quotient `S² × [−1, 1]` of a blown-up 4-sphere, with the two ends as
/// Morse–Bott boundary loci: `v = (1 − w²) ∂_w`.
pub fn s4_blowup_quotient() -> QuasiGradientField {
    let v4 = &["x", "y", "z", "w"];
    let m = ManifoldModel::new(
        names(v4),
        vec![p("x^2 + y^2 + z^2 - 1", v4)],
        Some(p("w^2 - 1", v4)),
        vec![(-1.5, 1.5); 4],
    )
    .unwrap();
    QuasiGradientField::gradient("s4-blowup-quotient", m, p("w - w^3/3", v4)).unwrap()
}

/// Description of a catalog field and what its complex should compute.
#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    /// Grid density for locus detection.
    pub density: f64,
    /// Expected mod-2 homology, by degree from 0.
    pub homology: Vec<usize>,
    /// Whether the field is expected to satisfy transversality.
    pub morse_smale: bool,
    #[serde(skip)]
    pub build: fn() -> QuasiGradientField,
}

pub fn entries() -> Vec<CatalogEntry> {
    let e = |name, summary, density, homology: &[usize], morse_smale, build| CatalogEntry {
        name,
        summary,
        density,
        homology: homology.to_vec(),
        morse_smale,
        build,
    };
    vec![
        e("s2-height", "height on the round 2-sphere", 3.0, &[1, 0, 1], true, s2_height),
        e("s2-two-max", "x^2 + z/2 on the 2-sphere", 4.0, &[1, 0, 1], true, s2_two_max),
        e("interval-cubic", "x(1 - x^2) on [-1, 1]", 10.0, &[1], true, interval_cubic),
        e("d2-boundary", "disk with boundary-stable and -unstable points", 6.0, &[1, 0, 0], true, d2_boundary),
        e("s3-morse-bott", "w^2 on the 3-sphere", 3.0, &[1, 0, 0, 1], true, s3_morse_bott),
        e("tilted-torus", "tilted height on a torus", 4.0, &[1, 2, 1], true, tilted_torus),
        e("upright-torus", "height on a torus on its rim", 4.0, &[1, 2, 1], false, upright_torus),
        e("hopf-s2", "quadratic form on the Hopf base", 3.0, &[1, 0, 1], true, hopf_s2),
        e("s4-blowup-quotient", "S^2 x [-1, 1] with Morse-Bott ends", 2.0, &[1, 0, 1], true, s4_blowup_quotient),
    ]
}

pub fn by_name(name: &str) -> Option<CatalogEntry> {
    entries().into_iter().find(|e| e.name == name)
}

impl CatalogEntry {
    /// Build the field and detect its loci.
    pub fn context(&self, seed: u64) -> Result<FieldContext, FieldError> {
        let field = (self.build)();
        let loci = find_stationary_loci(&field, self.density, seed)?;
        Ok(FieldContext::new(field, loci))
    }
}

/// Context for a named catalog field, loci detected with seed 1.
pub fn context(name: &str) -> Option<FieldContext> {
    by_name(name).map(|e| e.context(1).expect("catalog loci are nondegenerate"))
}
