//! Field configs.
//!
//! A config is a TOML document. Expressions are strings in the manifold
//! variables; parse errors point at the offending character in the file.
//!
//! ```toml
//! name = "tilted"
//!
//! [manifold]
//! vars = ["x", "y", "z"]
//! constraints = ["x^2 + y^2 + z^2 - 1"]
//! # boundary = "z - 0.5"      # the manifold is where this is <= 0
//! # bbox = [[-1.5, 1.5], [-1.5, 1.5], [-1.5, 1.5]]
//!
//! [field]
//! f = "z + 0.2*x"
//! # v = ["...", "...", "..."] # defaults to the gradient of f
//! density = 3.0
//! ```
//!
//! Instead of `[manifold]` and `[field]`, `catalog = "<name>"` takes both
//! from the built-in catalog. `[homotopy]` gives a potential `P(x, s)` with
//! `s ∈ [−1, 1]` (or `from`/`to` potentials to blend), `[pin2]` a potential
//! on the Hopf base, and `[oracle]` grid settings.

use std::ops::Range;

use morse_bott::catalog;
use morse_bott::continuation::Homotopy;
use morse_bott::expr::{Expr, ExprError};
use morse_bott::fields::QuasiGradientField;
use morse_bott::geometry::ManifoldModel;
use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}:{col}: {message}")]
    ConfigParse {
        path: String,
        line: usize,
        col: usize,
        message: String,
    },
    #[error("unknown catalog entry '{name}' (try `catalog` for a list)")]
    UnknownCatalogEntry { name: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    name: Option<String>,
    catalog: Option<Spanned<String>>,
    manifold: Option<RawManifold>,
    field: Option<RawField>,
    homotopy: Option<RawHomotopy>,
    pin2: Option<RawPin2>,
    oracle: Option<RawOracle>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifold {
    vars: Spanned<Vec<String>>,
    #[serde(default)]
    constraints: Vec<Spanned<String>>,
    boundary: Option<Spanned<String>>,
    bbox: Option<Spanned<Vec<(f64, f64)>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    f: Spanned<String>,
    v: Option<Vec<Spanned<String>>>,
    density: Option<f64>,
    spectral_gap_tol: Option<f64>,
    boundary_tangent_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHomotopy {
    potential: Option<Spanned<String>>,
    from: Option<Spanned<String>>,
    to: Option<Spanned<String>>,
    rate: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPin2 {
    potential: Spanned<String>,
    eta: Option<[f64; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    resolution: Option<usize>,
    bbox: Option<Vec<(f64, f64)>>,
}

/// A loaded config.
#[derive(Debug, Clone)]
pub struct Config {
    pub name: String,
    /// Set when the field came from the catalog.
    pub catalog: Option<String>,
    pub field: Option<QuasiGradientField>,
    pub density: f64,
    /// Overrides the tolerance profile when set.
    pub spectral_gap_tol: Option<f64>,
    /// Expected homology, known for catalog fields.
    pub expected_homology: Option<Vec<usize>>,
    pub homotopy: Option<Homotopy>,
    pub pin2: Option<Pin2Config>,
    pub oracle_resolution: Option<usize>,
    pub oracle_bbox: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone)]
pub struct Pin2Config {
    pub potential: Expr,
    pub eta: [f64; 3],
}

/// Line and column (both from 1) of a byte offset.
fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

struct Ctx<'a> {
    path: &'a str,
    src: &'a str,
}

impl Ctx<'_> {
    fn at(&self, span: Range<usize>, message: impl Into<String>) -> ConfigError {
        let (line, col) = line_col(self.src, span.start);
        ConfigError::ConfigParse {
            path: self.path.to_string(),
            line,
            col,
            message: message.into(),
        }
    }

    fn expr(&self, s: &Spanned<String>, vars: &[&str]) -> Result<Expr, ConfigError> {
        Expr::parse(s.get_ref(), vars).map_err(|e: ExprError| {
            // Skip the opening quote; expression columns count from 1.
            let start = s.span().start + 1 + s.get_ref().char_indices().nth(e.column().saturating_sub(1)).map_or(s.get_ref().len(), |(i, _)| i);
            self.at(start..start, e.to_string())
        })
    }
}

/// Load a config from a file.
pub fn load(path: &str) -> Result<Config, ConfigError> {
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.into(),
        message: e.to_string(),
    })?;
    parse(path, &src)
}

/// A catalog entry as a config.
pub fn from_catalog(name: &str) -> Result<Config, ConfigError> {
    let e = catalog::by_name(name).ok_or_else(|| ConfigError::UnknownCatalogEntry { name: name.into() })?;
    Ok(Config {
        name: name.into(),
        catalog: Some(name.into()),
        field: Some((e.build)()),
        density: e.density,
        spectral_gap_tol: None,
        expected_homology: Some(e.homology.clone()),
        homotopy: None,
        pin2: None,
        oracle_resolution: None,
        oracle_bbox: None,
    })
}

/// Parse config text; `path` is only used in messages.
pub fn parse(path: &str, src: &str) -> Result<Config, ConfigError> {
    let cx = Ctx { path, src };
    let raw: Raw = toml::from_str(src).map_err(|e| {
        let span = e.span().unwrap_or(0..0);
        cx.at(span, e.message().to_string())
    })?;

    let mut cfg = match &raw.catalog {
        Some(name) => {
            if raw.manifold.is_some() || raw.field.is_some() {
                return Err(cx.at(name.span(), "`catalog` cannot be combined with [manifold] or [field]"));
            }
            from_catalog(name.get_ref()).map_err(|e| match e {
                ConfigError::UnknownCatalogEntry { .. } => cx.at(name.span(), e.to_string()),
                e => e,
            })?
        }
        None => Config {
            name: raw.name.clone().unwrap_or_else(|| "config".into()),
            catalog: None,
            field: None,
            density: 3.0,
            spectral_gap_tol: None,
            expected_homology: None,
            homotopy: None,
            pin2: None,
            oracle_resolution: None,
            oracle_bbox: None,
        },
    };
    if let Some(n) = &raw.name {
        cfg.name = n.clone();
    }

    let manifold = match &raw.manifold {
        Some(m) => Some(manifold(&cx, m)?),
        None => cfg.field.as_ref().map(|f| f.manifold.clone()),
    };

    if let Some(rf) = &raw.field {
        let Some(m) = manifold.clone() else {
            return Err(cx.at(rf.f.span(), "[field] needs a [manifold] section"));
        };
        let vars: Vec<&str> = m.vars.iter().map(String::as_str).collect();
        let f = cx.expr(&rf.f, &vars)?;
        let mut field = match &rf.v {
            None => QuasiGradientField::gradient(cfg.name.clone(), m, f),
            Some(vs) => {
                let v = vs.iter().map(|s| cx.expr(s, &vars)).collect::<Result<Vec<_>, _>>()?;
                QuasiGradientField::new(cfg.name.clone(), m, v, f)
            }
        }
        .map_err(|e| cx.at(rf.f.span(), e.to_string()))?;
        cfg.spectral_gap_tol = rf.spectral_gap_tol;
        if let Some(t) = rf.boundary_tangent_tol {
            field.boundary_tangent_tol = t;
        }
        if let Some(d) = rf.density {
            cfg.density = d;
        }
        cfg.field = Some(field);
    }

    if let Some(h) = &raw.homotopy {
        let Some(m) = manifold.clone() else {
            return Err(cx.at(0..0, "[homotopy] needs a [manifold] section or a catalog field"));
        };
        let mut vars: Vec<&str> = m.vars.iter().map(String::as_str).collect();
        let name = format!("{}-homotopy", cfg.name);
        let mut hom = match (&h.potential, &h.from, &h.to) {
            (Some(p), None, None) => {
                if vars.contains(&"s") {
                    return Err(cx.at(p.span(), "the homotopy parameter `s` clashes with a manifold variable"));
                }
                vars.push("s");
                let p_expr = cx.expr(p, &vars)?;
                Homotopy::gradient(name, m, p_expr).map_err(|e| cx.at(p.span(), e.to_string()))?
            }
            (None, Some(a), Some(b)) => {
                let (fa, fb) = (cx.expr(a, &vars)?, cx.expr(b, &vars)?);
                Homotopy::blend(name, m, &fa, &fb).map_err(|e| cx.at(a.span(), e.to_string()))?
            }
            _ => return Err(cx.at(0..0, "[homotopy] needs either `potential` or both `from` and `to`")),
        };
        if let Some(r) = h.rate {
            hom.rate = r;
        }
        cfg.homotopy = Some(hom);
    }

    if let Some(p) = &raw.pin2 {
        cfg.pin2 = Some(Pin2Config {
            potential: cx.expr(&p.potential, &["x", "y", "z"])?,
            eta: p.eta.unwrap_or([1.0, 0.37, 0.21]),
        });
    }

    if let Some(o) = &raw.oracle {
        cfg.oracle_resolution = o.resolution;
        cfg.oracle_bbox = o.bbox.clone();
    }
    Ok(cfg)
}

fn manifold(cx: &Ctx, m: &RawManifold) -> Result<ManifoldModel, ConfigError> {
    let vars: Vec<&str> = m.vars.get_ref().iter().map(String::as_str).collect();
    if vars.is_empty() {
        return Err(cx.at(m.vars.span(), "at least one variable is needed"));
    }
    let constraints = m.constraints.iter().map(|c| cx.expr(c, &vars)).collect::<Result<Vec<_>, _>>()?;
    let boundary = m.boundary.as_ref().map(|b| cx.expr(b, &vars)).transpose()?;
    let bbox = match &m.bbox {
        None => vec![(-1.5, 1.5); vars.len()],
        Some(b) if b.get_ref().len() == 1 => vec![b.get_ref()[0]; vars.len()],
        Some(b) if b.get_ref().len() == vars.len() => b.get_ref().clone(),
        Some(b) => {
            return Err(cx.at(b.span(), format!("bbox needs 1 or {} intervals", vars.len())));
        }
    };
    let names = vars.iter().map(|s| s.to_string()).collect();
    ManifoldModel::new(names, constraints, boundary, bbox).map_err(|e| cx.at(m.vars.span(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_are_one_based() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}
