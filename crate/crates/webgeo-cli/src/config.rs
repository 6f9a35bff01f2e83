//! Job configuration: a flat key-value file with `[sections]`, `#` comments
//! and repeatable keys. The format is documented in the repository README.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use webgeo::field::Rect;
use webgeo::web::{from_3web_with_grid, ProjParam, WebSpec};
use webgeo::ScalarField;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> CResult<T> {
    Err(ConfigError(msg.into()))
}

/// Raw parsed file: `section.key -> values` (keys may repeat).
struct RawConfig {
    entries: BTreeMap<String, Vec<String>>,
}

impl RawConfig {
    fn parse(text: &str) -> CResult<RawConfig> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return err(format!("line {}: malformed section header", lineno + 1));
                };
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(format!("line {}: expected `key = value`", lineno + 1));
            };
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            entries
                .entry(full)
                .or_default()
                .push(value.trim().to_string());
        }
        Ok(RawConfig { entries })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .get(key)
            .and_then(|v| v.last())
            .map(|s| s.as_str())
    }

    fn get_all(&self, key: &str) -> &[String] {
        self.entries.get(key).map(|v| v.as_slice()).unwrap_or(&[])
    }

    fn f64_or(&self, key: &str, default: f64) -> CResult<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| ConfigError(format!("`{key}` is not a number: `{s}`"))),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> CResult<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| ConfigError(format!("`{key}` is not an integer: `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WebSource {
    Builtin(String),
    Expression(String),
    Pair(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

/// Dual query grid: either generated forward from `(t, x, y)` ranges (always
/// solvable) or an explicit `(t, z, p)` box to probe.
#[derive(Debug, Clone)]
pub enum DualGrid {
    Forward {
        t: (f64, f64, usize),
        x: (f64, f64, usize),
        y: (f64, f64, usize),
    },
    Box {
        t: (f64, f64, usize),
        z: (f64, f64, usize),
        p: (f64, f64, usize),
    },
}

#[derive(Debug, Clone)]
pub struct JobConfig {
    pub source: WebSource,
    pub domain: Rect,
    pub t2: f64,
    pub transversality_grid: usize,
    pub curvature_grid: usize,
    pub dual_grid: DualGrid,
    pub integrator_rel: f64,
    pub integrator_abs: f64,
    pub dual_integrator_rel: f64,
    pub newton_tol: f64,
    pub newton_jacobian_step: f64,
    pub fd_step_t: f64,
    pub fd_step_k0: f64,
    pub ricci_fd_step: f64,
    pub x_ref: Option<f64>,
    pub geodesic_ics: Vec<[f64; 3]>,
    pub geodesic_x_end: Option<f64>,
    pub out_dir: String,
    pub format: OutputFormat,
    pub seed: u64,
    pub config_hash: u64,
}

impl JobConfig {
    pub fn from_file(path: &Path) -> CResult<JobConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        JobConfig::from_str_hashed(&text)
    }

    pub fn from_str_hashed(text: &str) -> CResult<JobConfig> {
        let raw = RawConfig::parse(text)?;
        let hash = fnv1a64(text.as_bytes());

        // exactly one web source
        let builtin = raw.get("web.builtin");
        let w = raw.get("web.w");
        let wx = raw.get("web.wx");
        let wy = raw.get("web.wy");
        let source = match (builtin, w, wx, wy) {
            (Some(b), None, None, None) => WebSource::Builtin(b.to_string()),
            (None, Some(e), None, None) => WebSource::Expression(e.to_string()),
            (None, None, Some(a), Some(b)) => WebSource::Pair(a.to_string(), b.to_string()),
            (None, None, None, None) => {
                return err("no web source: set web.builtin, web.w, or web.wx + web.wy")
            }
            _ => return err("exactly one web source must be specified"),
        };

        let domain = Rect::new(
            raw.f64_or("domain.x_min", 0.0)?,
            raw.f64_or("domain.x_max", 1.0)?,
            raw.f64_or("domain.y_min", 0.0)?,
            raw.f64_or("domain.y_max", 1.0)?,
        )
        .map_err(|e| ConfigError(e.to_string()))?;

        let transversality_grid = raw.usize_or("grids.transversality", 64)?;
        let curvature_grid = raw.usize_or("grids.curvature", 32)?;
        if transversality_grid < 2 || curvature_grid < 2 {
            return err("grid sizes must be >= 2");
        }

        let dual_mode = raw.get("grids.dual_mode").unwrap_or("forward");
        let nt = raw.usize_or("grids.dual_t", 5)?;
        let range = |lo_key: &str, hi_key: &str, lo: f64, hi: f64| -> CResult<(f64, f64)> {
            Ok((raw.f64_or(lo_key, lo)?, raw.f64_or(hi_key, hi)?))
        };
        let dual_grid = match dual_mode {
            "forward" => {
                let nx = raw.usize_or("grids.dual_x", 5)?;
                let ny = raw.usize_or("grids.dual_y", 5)?;
                let (t_lo, t_hi) = range("grids.dual_t_min", "grids.dual_t_max", 0.1, 0.3)?;
                let (x_lo, x_hi) = range(
                    "grids.dual_x_min",
                    "grids.dual_x_max",
                    domain.x_min + 0.2 * domain.width(),
                    domain.x_min + 0.6 * domain.width(),
                )?;
                let (y_lo, y_hi) = range(
                    "grids.dual_y_min",
                    "grids.dual_y_max",
                    domain.y_min + 0.4 * domain.height(),
                    domain.y_min + 0.6 * domain.height(),
                )?;
                DualGrid::Forward {
                    t: (t_lo, t_hi, nt),
                    x: (x_lo, x_hi, nx),
                    y: (y_lo, y_hi, ny),
                }
            }
            "box" => {
                let nz = raw.usize_or("grids.dual_z", 5)?;
                let np = raw.usize_or("grids.dual_p", 5)?;
                let (t_lo, t_hi) = range("grids.dual_t_min", "grids.dual_t_max", 0.1, 0.3)?;
                let (z_lo, z_hi) = range("grids.dual_z_min", "grids.dual_z_max", 0.3, 0.7)?;
                let (p_lo, p_hi) = range("grids.dual_p_min", "grids.dual_p_max", -0.3, 0.3)?;
                DualGrid::Box {
                    t: (t_lo, t_hi, nt),
                    z: (z_lo, z_hi, nz),
                    p: (p_lo, p_hi, np),
                }
            }
            other => {
                return err(format!(
                    "grids.dual_mode must be forward|box, got `{other}`"
                ))
            }
        };

        let positive = |name: &str, v: f64| -> CResult<f64> {
            if v > 0.0 {
                Ok(v)
            } else {
                err(format!("tolerance `{name}` must be positive, got {v}"))
            }
        };
        let integrator_rel = positive(
            "integrator_rel",
            raw.f64_or("tolerances.integrator_rel", 1e-10)?,
        )?;
        let integrator_abs = positive(
            "integrator_abs",
            raw.f64_or("tolerances.integrator_abs", 1e-12)?,
        )?;
        let dual_integrator_rel = positive(
            "dual_integrator_rel",
            raw.f64_or("tolerances.dual_integrator_rel", 1e-12)?,
        )?;
        let newton_tol = positive("newton_tol", raw.f64_or("tolerances.newton_tol", 1e-9)?)?;
        let newton_jacobian_step = positive(
            "newton_jacobian_step",
            raw.f64_or("tolerances.newton_jacobian_step", 1e-6)?,
        )?;
        let fd_step_t = positive("fd_step_t", raw.f64_or("tolerances.fd_step_t", 1e-2)?)?;
        let fd_step_k0 = positive("fd_step_k0", raw.f64_or("tolerances.fd_step_k0", 1e-2)?)?;
        let ricci_fd_step = positive(
            "ricci_fd_step",
            raw.f64_or("tolerances.ricci_fd_step", 1e-5)?,
        )?;

        let mut geodesic_ics = Vec::new();
        for ic in raw.get_all("geodesics.ic") {
            let parts: Vec<f64> = ic
                .split_whitespace()
                .map(|p| p.parse().map_err(|_| ConfigError(format!("bad ic `{ic}`"))))
                .collect::<CResult<_>>()?;
            if parts.len() != 3 {
                return err(format!("geodesics.ic needs `x0 y0 p0`, got `{ic}`"));
            }
            geodesic_ics.push([parts[0], parts[1], parts[2]]);
        }

        let format = match raw.get("output.format").unwrap_or("csv,json") {
            "csv" => OutputFormat::Csv,
            "json" => OutputFormat::Json,
            "csv,json" | "json,csv" | "both" => OutputFormat::Both,
            other => {
                return err(format!(
                    "output.format must be csv|json|csv,json, got `{other}`"
                ))
            }
        };

        Ok(JobConfig {
            source,
            domain,
            t2: raw.f64_or("web.t2", 1.0)?,
            transversality_grid,
            curvature_grid,
            dual_grid,
            integrator_rel,
            integrator_abs,
            dual_integrator_rel,
            newton_tol,
            newton_jacobian_step,
            fd_step_t,
            fd_step_k0,
            ricci_fd_step,
            x_ref: raw
                .get("grids.x_ref")
                .map(|s| s.parse().unwrap_or(f64::NAN)),
            geodesic_ics,
            geodesic_x_end: match raw.get("geodesics.x_end") {
                None => None,
                Some(s) => Some(
                    s.parse()
                        .map_err(|_| ConfigError(format!("bad geodesics.x_end `{s}`")))?,
                ),
            },
            out_dir: raw.get("output.dir").unwrap_or("out").to_string(),
            format,
            seed: raw
                .get("verify.seed")
                .map(|s| {
                    s.parse()
                        .map_err(|_| ConfigError(format!("bad seed `{s}`")))
                })
                .transpose()?
                .unwrap_or(42),
            config_hash: hash,
        })
    }

    /// Builds the configured web (transversality checked on the configured
    /// grid).
    pub fn build_web(&self) -> webgeo::Result<WebSpec> {
        match &self.source {
            WebSource::Builtin(name) => {
                if name == "flat" {
                    let w = ScalarField::parse("x+y", self.domain)?;
                    from_3web_with_grid(w, ProjParam::affine(self.t2), self.transversality_grid)
                } else if name == "bilinear" {
                    let w = ScalarField::parse("x + y + x*y", self.domain)?;
                    from_3web_with_grid(w, ProjParam::affine(self.t2), self.transversality_grid)
                } else if let Some(c) = name.strip_prefix("constant_curvature:") {
                    let c: f64 = c.parse().map_err(|_| {
                        webgeo::Error::InvalidParameter(format!(
                            "bad curvature constant in `{name}`"
                        ))
                    })?;
                    Ok(webgeo::connection::constant_curvature_web(c, self.domain))
                } else {
                    Err(webgeo::Error::InvalidParameter(format!(
                        "unknown builtin web `{name}` (flat | bilinear | constant_curvature:C)"
                    )))
                }
            }
            WebSource::Expression(text) => {
                let w = ScalarField::parse(text, self.domain)?;
                from_3web_with_grid(w, ProjParam::affine(self.t2), self.transversality_grid)
            }
            WebSource::Pair(wx, wy) => {
                let wx = ScalarField::parse(wx, self.domain)?;
                let wy = ScalarField::parse(wy, self.domain)?;
                WebSpec::from_pair(wx, wy, ProjParam::affine(self.t2))
            }
        }
    }

    pub fn step_control(&self) -> webgeo::StepControl {
        webgeo::StepControl::with_tol(self.integrator_rel, self.integrator_abs)
    }

    pub fn dual_controls(&self, web: &WebSpec) -> webgeo::duality::DualControls {
        let mut dc = webgeo::duality::DualControls::for_web(web);
        dc.h_t = self.fd_step_t;
        dc.h_k0 = self.fd_step_k0;
        dc.integ = webgeo::StepControl::with_tol(
            self.dual_integrator_rel,
            self.dual_integrator_rel * 1e-2,
        );
        dc.newton.tol = self.newton_tol;
        dc.newton.jac_step = self.newton_jacobian_step;
        if let Some(x_ref) = self.x_ref {
            dc.x_ref = x_ref;
        }
        dc
    }
}

/// Deterministic 64-bit FNV-1a, used to stamp outputs with the config hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_builtin() {
        let cfg = JobConfig::from_str_hashed("[web]\nbuiltin = flat\n").unwrap();
        assert_eq!(cfg.source, WebSource::Builtin("flat".into()));
        assert_eq!(cfg.seed, 42);
        cfg.build_web().unwrap();
    }

    #[test]
    fn rejects_multiple_sources() {
        let e = JobConfig::from_str_hashed("[web]\nbuiltin = flat\nw = x+y\n").unwrap_err();
        assert!(e.0.contains("exactly one"));
    }

    #[test]
    fn rejects_bad_tolerance_and_grid() {
        let e =
            JobConfig::from_str_hashed("[web]\nbuiltin = flat\n[tolerances]\nnewton_tol = -1\n")
                .unwrap_err();
        assert!(e.0.contains("positive"));
        let e = JobConfig::from_str_hashed("[web]\nbuiltin = flat\n[grids]\ncurvature = 1\n")
            .unwrap_err();
        assert!(e.0.contains(">= 2"));
    }

    #[test]
    fn repeated_ic_keys_collect() {
        let cfg = JobConfig::from_str_hashed(
            "[web]\nw = x + y + x*y\n[geodesics]\nic = 0.1 0.5 0.3\nic = 0.2 0.6 -0.2\n",
        )
        .unwrap();
        assert_eq!(cfg.geodesic_ics.len(), 2);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(fnv1a64(b"webgeo"), fnv1a64(b"webgeo"));
        assert_ne!(fnv1a64(b"webgeo"), fnv1a64(b"webgeo "));
    }
}
