//! Command-line driver: loads a field config or catalog entry, runs one
//! engine stage and writes a text or JSON report.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or the engine
//! reports an error, 2 for bad arguments or configs.

pub mod config;

use std::io::Write;

use clap::{Parser, Subcommand, ValueEnum};
use morse_bott::catalog;
use morse_bott::complex::{assemble_numeric, f2_homology, CheckComplex};
use morse_bott::continuation::{build_f, f_degrees_consistent, induced_on_homology, verify_chain_map, ContinuationContext, Homotopy};
use morse_bott::equivariant::{hopf_lift, operator_degrees_consistent, pin2_pipeline, quotient_model, s_h_example, Pin2Options, Section};
use morse_bott::fields::{find_stationary_loci, verify_quasi_gradient, QuasiGradientField};
use morse_bott::flow::moduli::{build_moduli, expected_dim, CountOptions, FieldContext, ModuliOptions};
use morse_bott::oracle::{borel_homology, grid_conley_index, same_betti, FreeInvolution, GridOptions};
use serde::Serialize;
use serde_json::{json, Value};

use config::{Config, ConfigError};

/// Version of the JSON report layout.
pub const SCHEMA: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "morse-bott", version, about = "Morse-Bott homology for manifolds with boundary")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = TolProfile::Default)]
    pub tol_profile: TolProfile,
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Text)]
    pub report: ReportFormat,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Shooting samples per moduli space.
    #[arg(long, global = true)]
    pub budget: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the quasi-gradient axioms.
    Verify { target: String },
    /// Detect and classify stationary loci.
    Stationary { target: String },
    /// Sample moduli spaces between loci.
    Moduli {
        target: String,
        /// Only pairs starting at this locus label.
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
    },
    /// Assemble the check complex and its homology.
    Complex { target: String },
    /// Continuation map of a homotopy (the constant one for catalog fields).
    Continuation { target: String },
    /// Pin(2) pipeline on S(H) for a potential on the Hopf base.
    Equivariant { target: String },
    /// Grid Conley index compared with the engine.
    Oracle { target: String },
    /// Run a catalog entry end to end, or list the catalog.
    Catalog { name: Option<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TolProfile {
    Strict,
    Default,
    Loose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

/// Module tolerances bundled per profile.
#[derive(Debug, Clone, Serialize)]
pub struct Profile {
    pub spectral_gap_tol: f64,
    pub verify_samples: usize,
    pub grid_resolution: usize,
    pub dedup_radius: f64,
    pub crossing_tol: f64,
}

impl TolProfile {
    pub fn profile(self) -> Profile {
        match self {
            TolProfile::Strict => Profile {
                spectral_gap_tol: 1e-5,
                verify_samples: 2000,
                grid_resolution: 32,
                dedup_radius: 1e-5,
                crossing_tol: 1e-4,
            },
            TolProfile::Default => Profile {
                spectral_gap_tol: 1e-4,
                verify_samples: 500,
                grid_resolution: 24,
                dedup_radius: 1e-4,
                crossing_tol: 1e-3,
            },
            TolProfile::Loose => Profile {
                spectral_gap_tol: 1e-3,
                verify_samples: 200,
                grid_resolution: 16,
                dedup_radius: 1e-3,
                crossing_tol: 1e-2,
            },
        }
    }
}

/// What a command produced.
#[derive(Debug, Serialize)]
pub struct Report {
    pub schema: u32,
    pub command: String,
    pub target: String,
    pub seed: u64,
    pub tol_profile: TolProfile,
    pub pass: bool,
    pub body: Value,
    #[serde(skip)]
    pub lines: Vec<String>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.command, self.target);
        for l in &self.lines {
            s.push_str("  ");
            s.push_str(l);
            s.push('\n');
        }
        s.push_str(if self.pass { "verdict: pass\n" } else { "verdict: FAIL\n" });
        s
    }
}

/// Outcome of one command before it is wrapped into a [`Report`].
struct Outcome {
    pass: bool,
    body: Value,
    lines: Vec<String>,
}

impl Outcome {
    fn failed(error: impl std::fmt::Display) -> Self {
        Outcome {
            pass: false,
            body: json!({ "error": error.to_string() }),
            lines: vec![format!("error: {error}")],
        }
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("engine types serialize")
}

/// A path to an existing file is loaded as a config; anything else must be
/// a catalog name.
pub fn resolve(target: &str) -> Result<Config, ConfigError> {
    if std::path::Path::new(target).is_file() {
        config::load(target)
    } else {
        config::from_catalog(target)
    }
}

struct Runner {
    seed: u64,
    profile: Profile,
    budget: Option<usize>,
}

impl Runner {
    fn count_options(&self) -> CountOptions {
        let mut c = CountOptions {
            seed: self.seed,
            crossing_tol: self.profile.crossing_tol,
            ..CountOptions::default()
        };
        if let Some(b) = self.budget {
            c.sweep_samples = b.max(4);
        }
        c
    }

    fn moduli_options(&self) -> ModuliOptions {
        let mut m = ModuliOptions {
            count: self.count_options(),
            dedup_radius: self.profile.dedup_radius,
            ..ModuliOptions::default()
        };
        if let Some(b) = self.budget {
            m.samples = b.max(1);
        }
        m
    }

    fn field(&self, cfg: &Config) -> Result<QuasiGradientField, ConfigError> {
        let mut f = cfg.field.clone().ok_or_else(|| ConfigError::ConfigParse {
            path: cfg.name.clone(),
            line: 1,
            col: 1,
            message: "this command needs a field ([manifold] and [field], or `catalog`)".into(),
        })?;
        f.spectral_gap_tol = cfg.spectral_gap_tol.unwrap_or(self.profile.spectral_gap_tol);
        Ok(f)
    }

    fn context(&self, cfg: &Config) -> Result<Result<FieldContext, String>, ConfigError> {
        let f = self.field(cfg)?;
        Ok(find_stationary_loci(&f, cfg.density, self.seed)
            .map(|loci| FieldContext::new(f, loci))
            .map_err(|e| e.to_string()))
    }

    fn verify(&self, cfg: &Config) -> Result<Outcome, ConfigError> {
        let f = self.field(cfg)?;
        let cert = verify_quasi_gradient(&f, self.profile.verify_samples, self.seed);
        let lines = cert
            .axioms
            .iter()
            .map(|a| {
                let w = a.witness.as_ref().map_or(String::new(), |w| format!(" witness {w:?}"));
                format!("{} {}: {}{w}", if a.pass { "ok  " } else { "FAIL" }, a.axiom, a.detail)
            })
            .collect();
        Ok(Outcome {
            pass: cert.pass(),
            body: to_value(&cert),
            lines,
        })
    }

    fn stationary(&self, cfg: &Config) -> Result<Outcome, ConfigError> {
        let ctx = match self.context(cfg)? {
            Ok(c) => c,
            Err(e) => return Ok(Outcome::failed(e)),
        };
        let lines = ctx
            .loci
            .iter()
            .map(|l| {
                format!(
                    "{} {:?} index {} dim {} f = {:.6} at {:.4?}",
                    l.label, l.kind, l.index, l.dim, l.f_value, l.representative_points[0]
                )
            })
            .collect();
        Ok(Outcome {
            pass: true,
            body: json!({ "loci": to_value(&ctx.loci) }),
            lines,
        })
    }

    fn moduli(&self, cfg: &Config, from: Option<&str>, to: Option<&str>) -> Result<Outcome, ConfigError> {
        let ctx = match self.context(cfg)? {
            Ok(c) => c,
            Err(e) => return Ok(Outcome::failed(e)),
        };
        let opts = self.moduli_options();
        let (mut pass, mut spaces, mut lines) = (true, Vec::new(), Vec::new());
        for (i, a) in ctx.loci.iter().enumerate() {
            for (j, b) in ctx.loci.iter().enumerate() {
                if i == j || a.f_value <= b.f_value {
                    continue;
                }
                if from.is_some_and(|l| l != a.label) || to.is_some_and(|l| l != b.label) {
                    continue;
                }
                match build_moduli(&ctx, i, j, &opts) {
                    Ok(m) => {
                        let agrees = m.classes.is_empty() || m.est_dim.is_none_or(|d| d as i64 == m.expected_dim);
                        pass &= agrees;
                        lines.push(format!(
                            "M({}, {}): {} classes, expected dim {}, estimated {}{}",
                            a.label,
                            b.label,
                            m.classes.len(),
                            m.expected_dim,
                            m.est_dim.map_or("-".into(), |d| d.to_string()),
                            if agrees { "" } else { "  MISMATCH" }
                        ));
                        spaces.push(to_value(&m));
                    }
                    Err(e) => {
                        pass = false;
                        lines.push(format!("M({}, {}): error: {e}", a.label, b.label));
                        spaces.push(json!({
                            "source_label": a.label,
                            "target_label": b.label,
                            "expected_dim": expected_dim(a, b),
                            "error": e.to_string(),
                        }));
                    }
                }
            }
        }
        Ok(Outcome {
            pass,
            body: json!({ "moduli": spaces }),
            lines,
        })
    }

    fn complex_of(&self, cfg: &Config) -> Result<Result<CheckComplex, String>, ConfigError> {
        Ok(match self.context(cfg)? {
            Ok(ctx) => assemble_numeric(&ctx, &self.count_options())
                .map(|(c, _)| c)
                .map_err(|e| e.to_string()),
            Err(e) => Err(e),
        })
    }

    fn complex(&self, cfg: &Config) -> Result<Outcome, ConfigError> {
        let c = match self.complex_of(cfg)? {
            Ok(c) => c,
            Err(e) => return Ok(Outcome::failed(e)),
        };
        Ok(complex_outcome(&c, cfg.expected_homology.as_deref()))
    }

    fn continuation(&self, cfg: &Config) -> Result<Outcome, ConfigError> {
        let h = match (&cfg.homotopy, &cfg.field) {
            (Some(h), _) => h.clone(),
            (None, Some(_)) => Homotopy::constant(&self.field(cfg)?),
            (None, None) => {
                return Err(ConfigError::ConfigParse {
                    path: cfg.name.clone(),
                    line: 1,
                    col: 1,
                    message: "continuation needs a [homotopy] section or a field".into(),
                })
            }
        };
        let cc = match ContinuationContext::new(h, cfg.density, self.seed) {
            Ok(cc) => cc,
            Err(e) => return Ok(Outcome::failed(e)),
        };
        let m = match build_f(&cc, &self.count_options()) {
            Ok(m) => m,
            Err(e) => return Ok(Outcome::failed(e)),
        };
        let chain = verify_chain_map(&m.f_check, &m.source, &m.target);
        let degrees = f_degrees_consistent(&m.f_check, &m.source, &m.target);
        let induced = induced_on_homology(&m.f_check, &m.source, &m.target);
        let lines = vec![
            format!("source homology {:?}, target homology {:?}", induced.source_betti, induced.target_betti),
            format!("F rows: {:?}", m.f_check.to_rows()),
            format!("chain map: {}", verdict(chain.holds)),
            format!("degree 0: {}", verdict(degrees)),
            format!("induced ranks {:?}, isomorphism: {}", induced.ranks, induced.isomorphism),
            format!("rate c = {}", m.rate),
        ];
        Ok(Outcome {
            pass: chain.holds && degrees && induced.isomorphism,
            body: json!({
                "map": to_value(&m),
                "chain_map": to_value(&chain),
                "degrees_consistent": degrees,
                "induced": to_value(&induced),
            }),
            lines,
        })
    }

    fn equivariant(&self, cfg: &Config) -> Result<Outcome, ConfigError> {
        let qm = match (&cfg.pin2, cfg.catalog.as_deref()) {
            (Some(p), _) => hopf_lift(&cfg.name, &p.potential).and_then(|e| quotient_model(&e, &p.potential, 400, self.seed)),
            (None, Some("hopf-s2")) => s_h_example(),
            _ => {
                return Err(ConfigError::ConfigParse {
                    path: cfg.name.clone(),
                    line: 1,
                    col: 1,
                    message: "equivariant needs a [pin2] section (or the hopf-s2 catalog entry)".into(),
                })
            }
        };
        let qm = match qm {
            Ok(q) => q,
            Err(e) => return Ok(Outcome::failed(e)),
        };
        let mut opts = Pin2Options {
            density: cfg.density,
            seed: self.seed,
            count: self.count_options(),
            moduli: self.moduli_options(),
            ..Pin2Options::default()
        };
        if let Some(p) = &cfg.pin2 {
            opts.eta = Section::linear("eta", p.eta.to_vec());
        }
        let r = match pin2_pipeline(&qm, &opts) {
            Ok(r) => r,
            Err(e) => return Ok(Outcome::failed(e)),
        };
        let dim = r.homology.betti.len().saturating_sub(1).max(2);
        let oracle = borel_homology(&FreeInvolution::s_h(), dim).expect("cap covers the quotient");
        let matches = same_betti(&r.homology.betti, &oracle.betti);
        let degrees = operator_degrees_consistent(&r.invariant, &r.q) && operator_degrees_consistent(&r.invariant, &r.v);
        let mut lines = vec![
            format!("quotient residue {:.2e}, equivariance defect {:.2e}", r.pushforward_residue, r.equivariance_defect),
            format!("check homology {:?}, invariant homology {:?}", r.full_homology.betti, r.homology.betti),
            format!("Borel oracle {:?}: {}", oracle.betti, verdict(matches)),
            format!("operator degrees: {}", verdict(degrees)),
        ];
        lines.extend(r.module.describe());
        Ok(Outcome {
            pass: matches && degrees && r.module.q_cubed_zero && r.module.qv_commute,
            body: json!({
                "pin2": to_value(&r),
                "oracle": to_value(&oracle),
                "oracle_match": matches,
                "degrees_consistent": degrees,
            }),
            lines,
        })
    }

    fn grid(&self, cfg: &Config, f: &QuasiGradientField) -> (GridOptions, Vec<(f64, f64)>) {
        // The grid grows as resolution^dim; keep high-dimensional runs small
        // unless the config asks otherwise.
        let default_res = if f.dim() >= 4 { 12 } else { self.profile.grid_resolution };
        let opts = GridOptions {
            resolution: cfg.oracle_resolution.unwrap_or(default_res),
            ..GridOptions::default()
        };
        (opts, cfg.oracle_bbox.clone().unwrap_or_else(|| f.manifold.bbox.clone()))
    }

    fn oracle(&self, cfg: &Config) -> Result<Outcome, ConfigError> {
        let f = self.field(cfg)?;
        let (opts, bbox) = self.grid(cfg, &f);
        let conley = match grid_conley_index(&f, &bbox, &opts) {
            Ok(c) => c,
            Err(e) => return Ok(Outcome::failed(e)),
        };
        let engine = self.complex_of(cfg)?.map(|c| f2_homology(&c).betti);
        let matches = engine.as_ref().is_ok_and(|b| same_betti(b, &conley.betti));
        let lines = vec![
            format!(
                "grid {}^{}: {} phase cubes, {} invariant, {} exit, tau {:.4}",
                conley.resolution,
                f.dim(),
                conley.phase_cubes,
                conley.invariant_cubes,
                conley.exit_cubes,
                conley.tau
            ),
            format!("Conley index betti {:?}", conley.betti),
            match &engine {
                Ok(b) => format!("engine betti {b:?}: {}", verdict(matches)),
                Err(e) => format!("engine error: {e}"),
            },
        ];
        Ok(Outcome {
            pass: matches,
            body: json!({
                "conley": to_value(&conley),
                "engine_betti": engine.as_ref().ok(),
                "engine_error": engine.as_ref().err(),
                "oracle_match": matches,
            }),
            lines,
        })
    }

    fn catalog(&self, name: Option<&str>) -> Result<Outcome, ConfigError> {
        let Some(name) = name else {
            let entries = catalog::entries();
            let lines = entries
                .iter()
                .map(|e| format!("{:<20} {:?}  {}", e.name, e.homology, e.summary))
                .collect();
            return Ok(Outcome {
                pass: true,
                body: json!({ "entries": to_value(&entries) }),
                lines,
            });
        };
        let cfg = config::from_catalog(name)?;
        let c = match self.complex_of(&cfg)? {
            Ok(c) => c,
            Err(e) => return Ok(Outcome::failed(e)),
        };
        let mut out = complex_outcome(&c, cfg.expected_homology.as_deref());
        let f = self.field(&cfg)?;
        let (opts, bbox) = self.grid(&cfg, &f);
        let betti = f2_homology(&c).betti;
        let (conley, matches) = match grid_conley_index(&f, &bbox, &opts) {
            Ok(k) => {
                let m = same_betti(&k.betti, &betti);
                out.lines.push(format!("grid oracle {:?} at resolution {}: {}", k.betti, k.resolution, verdict(m)));
                (to_value(&k), m)
            }
            Err(e) => {
                out.lines.push(format!("grid oracle error: {e}"));
                (json!({ "error": e.to_string() }), false)
            }
        };
        out.pass &= matches;
        out.body["oracle"] = conley;
        out.body["oracle_match"] = json!(matches);
        Ok(out)
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn complex_outcome(c: &CheckComplex, expected: Option<&[usize]>) -> Outcome {
    let h = f2_homology(c);
    let d2 = c.d_check.mul(&c.d_check).is_zero();
    let degrees = c.degrees_consistent();
    let expected_ok = expected.is_none_or(|e| same_betti(e, &h.betti));
    let gens = c.check_generators();
    let mut lines = vec![format!(
        "{} generators: {}",
        gens.len(),
        gens.iter().map(|g| format!("{}[{}]", g.name(), g.degree)).collect::<Vec<_>>().join(" ")
    )];
    lines.push(format!("betti {:?}", h.betti));
    if let Some(e) = expected {
        lines.push(format!("expected {e:?}: {}", verdict(expected_ok)));
    }
    lines.push(format!("d^2 = 0: {}", verdict(d2)));
    lines.push(format!("degree -1: {}", verdict(degrees)));
    Outcome {
        pass: d2 && degrees && expected_ok,
        body: json!({
            "generators": gens.iter().map(|g| json!({ "name": g.name(), "degree": g.degree, "kind": to_value(&g.kind) })).collect::<Vec<_>>(),
            "d_check": to_value(&c.d_check),
            "blocks": to_value(&c.d_blocks()),
            "homology": to_value(&h),
            "d_squared_zero": d2,
            "degrees_consistent": degrees,
            "expected_homology": expected,
        }),
        lines,
    }
}

/// Parse `args` (program name first), run, and write the report to `out`
/// (or `--out`). Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(&cli) {
        Ok(report) => {
            let text = match cli.report {
                ReportFormat::Text => report.to_text(),
                ReportFormat::Json => report.to_json(),
            };
            if let Some(path) = &cli.out {
                if let Err(e) = std::fs::write(path, &text) {
                    let _ = writeln!(err, "error: {path}: {e}");
                    return 2;
                }
            } else {
                let _ = out.write_all(text.as_bytes());
            }
            if report.pass {
                0
            } else {
                1
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

/// Run a parsed command.
pub fn execute(cli: &Cli) -> Result<Report, ConfigError> {
    let r = Runner {
        seed: cli.seed,
        profile: cli.tol_profile.profile(),
        budget: cli.budget,
    };
    let (name, target, outcome) = match &cli.command {
        Command::Verify { target } => ("verify", target.clone(), r.verify(&resolve(target)?)?),
        Command::Stationary { target } => ("stationary", target.clone(), r.stationary(&resolve(target)?)?),
        Command::Moduli { target, from, to } => (
            "moduli",
            target.clone(),
            r.moduli(&resolve(target)?, from.as_deref(), to.as_deref())?,
        ),
        Command::Complex { target } => ("complex", target.clone(), r.complex(&resolve(target)?)?),
        Command::Continuation { target } => ("continuation", target.clone(), r.continuation(&resolve(target)?)?),
        Command::Equivariant { target } => ("equivariant", target.clone(), r.equivariant(&resolve(target)?)?),
        Command::Oracle { target } => ("oracle", target.clone(), r.oracle(&resolve(target)?)?),
        Command::Catalog { name } => ("catalog", name.clone().unwrap_or_default(), r.catalog(name.as_deref())?),
    };
    Ok(Report {
        schema: SCHEMA,
        command: name.into(),
        target,
        seed: cli.seed,
        tol_profile: cli.tol_profile,
        pass: outcome.pass,
        body: outcome.body,
        lines: outcome.lines,
    })
}
