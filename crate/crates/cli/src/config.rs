//! Experiment configuration: one optional TOML table per experiment.

use std::fmt;
use std::ops::Range;

use gevml_core::expr::{parse, VarSpace};
use serde::{Deserialize, Serialize};
use toml::Spanned;

/// Invalid configuration, with the offending field and its line when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigInvalid {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigInvalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config invalid at line {l}, field `{}`: {}", self.field, self.message),
            None => write!(f, "config invalid, field `{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigInvalid {}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub compose: Option<ComposeCfg>,
    pub wkb: Option<WkbCfg>,
    pub egorov: Option<EgorovCfg>,
    pub fbi: Option<FbiCfg>,
    pub sweep: Option<SweepCfg>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComposeCfg {
    /// Symbols over `(x1, t1)`.
    pub q: Spanned<String>,
    pub a: Spanned<String>,
    pub orders: Vec<usize>,
    pub h_list: Spanned<Vec<f64>>,
    pub n_points: usize,
    pub box_length: f64,
    /// Assert slope >= N - margin.
    pub slope_margin: f64,
}

impl Default for ComposeCfg {
    fn default() -> Self {
        Self {
            q: Spanned::new(0..0, "exp(i*t1)*bump(t1)".into()),
            a: Spanned::new(0..0, "exp(i*x1)*bump(x1)".into()),
            orders: vec![1, 2, 3],
            h_list: Spanned::new(0..0, vec![0.2, 0.1, 0.05, 0.025, 0.0125]),
            n_points: 1024,
            box_length: 16.0,
            slope_margin: 0.25,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct WkbCfg {
    /// `q` over `(x1, x2, t1, t2)` in the shift-model class.
    pub q: Spanned<String>,
    pub eta: f64,
    /// Initial amplitude over `(x1, x2)`, periodic on `xp_box`.
    pub a0: Spanned<String>,
    pub x1_chart: [f64; 2],
    pub xp_box: [f64; 2],
    pub n_xp: usize,
    pub probes_x1: Vec<f64>,
    pub levels: Vec<usize>,
    pub least_term: bool,
    pub max_levels: usize,
    pub h_list: Spanned<Vec<f64>>,
    /// Assert slope >= J + 1 - margin.
    pub slope_margin: f64,
    pub least_term_min_r2: f64,
}

impl Default for WkbCfg {
    fn default() -> Self {
        let pi = std::f64::consts::PI;
        Self {
            q: Spanned::new(0..0, "t2^2".into()),
            eta: 0.4,
            a0: Spanned::new(0..0, "1/(1.5430806348152437 - cos(x2))".into()),
            x1_chart: [-0.1, 0.6],
            xp_box: [-pi, pi],
            n_xp: 512,
            probes_x1: vec![0.25, 0.5],
            levels: vec![0, 1, 4],
            least_term: true,
            max_levels: 40,
            h_list: Spanned::new(0..0, vec![0.2, 0.1, 0.05, 0.025]),
            slope_margin: 0.3,
            least_term_min_r2: 0.95,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EgorovCfg {
    /// `q` over `(x1, x2, t1, t2)` in the shift-model class.
    pub q: Spanned<String>,
    pub a0: Spanned<String>,
    pub x1_box: [f64; 2],
    pub n1: usize,
    pub xp_box: [f64; 2],
    pub n_xp: usize,
    pub x0: [f64; 2],
    pub xi0: [f64; 2],
    pub levels: Vec<usize>,
    pub neumann_terms: Option<usize>,
    pub h_list: Spanned<Vec<f64>>,
    /// Assert slope >= N + margin.
    pub slope_margin: f64,
}

impl Default for EgorovCfg {
    fn default() -> Self {
        Self {
            q: Spanned::new(0..0, "t2^2".into()),
            a0: Spanned::new(0..0, "1 + 0.5*sin(0.7853981633974483*x2)".into()),
            x1_box: [-3.0, 3.0],
            n1: 128,
            xp_box: [-4.0, 4.0],
            n_xp: 256,
            x0: [0.0, 0.0],
            xi0: [0.0, 0.25],
            levels: vec![0, 1, 2],
            neumann_terms: None,
            h_list: Spanned::new(0..0, vec![0.2, 0.1, 0.05, 0.025]),
            slope_margin: 0.7,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FbiCfg {
    pub x0: f64,
    pub xi0: f64,
    /// `C` of the phase `iC(z - x)²` as `[re, im]`; `[0.5, 0]` is the Bargmann transform.
    pub c: [f64; 2],
    pub h_list: Spanned<Vec<f64>>,
    pub y_box: [f64; 2],
    pub n_y: usize,
    pub re_z: [f64; 2],
    pub im_z: [f64; 2],
    pub n_z: usize,
    pub wavefront_s: f64,
    pub c_threshold: f64,
    /// Optional `η1 + V(y)` over `(x1, t1)` for the conjugation check.
    pub egorov_model: Option<Spanned<String>>,
    pub egorov_h_list: Spanned<Vec<f64>>,
}

impl Default for FbiCfg {
    fn default() -> Self {
        Self {
            x0: 0.3,
            xi0: -0.7,
            c: [0.5, 0.0],
            h_list: Spanned::new(0..0, vec![0.05, 0.025]),
            y_box: [-4.0, 4.0],
            n_y: 1024,
            re_z: [-1.5, 1.5],
            im_z: [-1.5, 1.5],
            n_z: 128,
            wavefront_s: 2.0,
            c_threshold: 0.5,
            egorov_model: None,
            egorov_h_list: Spanned::new(0..0, vec![0.1, 0.05, 0.025, 0.0125, 0.00625]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Algebraic,
    StretchedExp,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCfg {
    pub h_list: Spanned<Vec<f64>>,
    pub residuals: Spanned<Vec<f64>>,
    pub kind: SweepKind,
    #[serde(default)]
    pub min_slope: Option<f64>,
    #[serde(default)]
    pub min_r2: Option<f64>,
}

fn line_of(src: &str, span: Range<usize>) -> Option<usize> {
    if span.start == 0 && span.end == 0 || span.start > src.len() {
        return None;
    }
    Some(src[..span.start].matches('\n').count() + 1)
}

fn invalid(src: &str, span: Range<usize>, field: &str, message: impl Into<String>) -> ConfigInvalid {
    ConfigInvalid { line: line_of(src, span), field: field.into(), message: message.into() }
}

fn check_expr(src: &str, e: &Spanned<String>, vars: &VarSpace, field: &str) -> Result<(), ConfigInvalid> {
    parse(e.get_ref(), vars).map(|_| ()).map_err(|err| {
        let msg = match &err {
            gevml_core::expr::ParseError::UnknownVariable { name, .. } => {
                format!("unknown variable `{name}` (allowed: {})", vars.names.join(", "))
            }
            other => other.to_string(),
        };
        invalid(src, e.span(), field, msg)
    })
}

fn check_h(src: &str, h: &Spanned<Vec<f64>>, field: &str, min_len: usize) -> Result<(), ConfigInvalid> {
    let v = h.get_ref();
    if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !(**x > 0.0) || !x.is_finite()) {
        return Err(invalid(src, h.span(), &format!("{field}[{i}]"), format!("h must be positive, got {x}")));
    }
    if v.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid(src, h.span(), field, "h values must be strictly decreasing"));
    }
    if v.len() < min_len {
        return Err(invalid(src, h.span(), field, format!("need at least {min_len} values, got {}", v.len())));
    }
    Ok(())
}

fn check_box(b: [f64; 2], field: &str) -> Result<(), ConfigInvalid> {
    if !(b[1] > b[0]) {
        return Err(ConfigInvalid { line: None, field: field.into(), message: format!("empty interval [{}, {}]", b[0], b[1]) });
    }
    Ok(())
}

/// Parse and validate.
pub fn parse_config(src: &str) -> Result<Config, ConfigInvalid> {
    let cfg: Config = toml::from_str(src).map_err(|e| {
        let line = e.span().and_then(|s| line_of(src, s));
        ConfigInvalid { line, field: "<document>".into(), message: e.message().to_string() }
    })?;
    validate(src, &cfg)?;
    Ok(cfg)
}

pub fn validate(src: &str, cfg: &Config) -> Result<(), ConfigInvalid> {
    let ps1 = VarSpace::phase_space(1);
    let ps2 = VarSpace::phase_space(2);
    let sp2 = VarSpace::spatial(2);
    if let Some(c) = &cfg.compose {
        check_expr(src, &c.q, &ps1, "compose.q")?;
        check_expr(src, &c.a, &ps1, "compose.a")?;
        check_h(src, &c.h_list, "compose.h_list", 4)?;
        if c.orders.is_empty() || c.orders.contains(&0) {
            return Err(invalid(src, 0..0, "compose.orders", "orders must be positive"));
        }
    }
    if let Some(w) = &cfg.wkb {
        check_expr(src, &w.q, &ps2, "wkb.q")?;
        check_expr(src, &w.a0, &sp2, "wkb.a0")?;
        check_h(src, &w.h_list, "wkb.h_list", 4)?;
        check_box(w.x1_chart, "wkb.x1_chart")?;
        check_box(w.xp_box, "wkb.xp_box")?;
    }
    if let Some(e) = &cfg.egorov {
        check_expr(src, &e.q, &ps2, "egorov.q")?;
        check_expr(src, &e.a0, &sp2, "egorov.a0")?;
        check_h(src, &e.h_list, "egorov.h_list", 4)?;
        check_box(e.x1_box, "egorov.x1_box")?;
        check_box(e.xp_box, "egorov.xp_box")?;
    }
    if let Some(f) = &cfg.fbi {
        check_h(src, &f.h_list, "fbi.h_list", 1)?;
        check_box(f.y_box, "fbi.y_box")?;
        check_box(f.re_z, "fbi.re_z")?;
        check_box(f.im_z, "fbi.im_z")?;
        if let Some(m) = &f.egorov_model {
            check_expr(src, m, &ps1, "fbi.egorov_model")?;
            check_h(src, &f.egorov_h_list, "fbi.egorov_h_list", 4)?;
        }
    }
    if let Some(s) = &cfg.sweep {
        check_h(src, &s.h_list, "sweep.h_list", 4)?;
        if s.residuals.get_ref().len() != s.h_list.get_ref().len() {
            return Err(invalid(src, s.residuals.span(), "sweep.residuals", "one residual per h value required"));
        }
        if let Some((i, r)) = s.residuals.get_ref().iter().enumerate().find(|(_, r)| !(**r >= 0.0)) {
            return Err(invalid(src, s.residuals.span(), &format!("sweep.residuals[{i}]"), format!("must be nonnegative, got {r}")));
        }
    }
    Ok(())
}
