//! TOML run configuration and its resolution into library types.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zerocurrent::ensemble::{EnsembleSpec, Representation};
use zerocurrent::expr::ExprProgram;
use zerocurrent::holomap::{Certificate, Certificates, Envelope, FamilyKind, HoloMap, PerturbationFamily, Rect, Window};
use zerocurrent::mc::{Experiment, Method};
use zerocurrent::provenance::digest_hex;
use zerocurrent::theory::TestFunction;

use crate::CliError;

pub const DEFAULT_QUAD_NODES: usize = 401;
pub const DEFAULT_TRIALS: u64 = 200;
pub const DEFAULT_HALF_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Components of `f`, one expression in `z` each.
    #[serde(default = "default_map")]
    pub map: Vec<String>,
    #[serde(default)]
    pub family: FamilyConfig,
    #[serde(default)]
    pub window: WindowConfig,
    /// Nodes per side of the theory quadrature grid.
    #[serde(default = "default_quad_nodes")]
    pub quad_nodes: usize,
    pub n: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_representation")]
    pub representation: Representation,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_rho")]
    pub rho: Vec<RhoConfig>,
    pub retain_zeros: Option<bool>,
    #[serde(default)]
    pub audit_override: bool,
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
}

fn default_map() -> Vec<String> {
    vec!["z".into()]
}
fn default_quad_nodes() -> usize {
    DEFAULT_QUAD_NODES
}
fn default_trials() -> u64 {
    DEFAULT_TRIALS
}
fn default_representation() -> Representation {
    Representation::SymmetricMultinomial
}
fn default_rho() -> Vec<RhoConfig> {
    TestFunction::BUILTIN_NAMES[..3]
        .iter()
        .map(|b| RhoConfig::Builtin { builtin: b.to_string() })
        .collect()
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("every key has a default")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoConfig {
    Builtin { builtin: String },
    Custom(TestFunction),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilyConfig {
    Builtin {
        builtin: String,
    },
    Custom {
        kind: FamilyKindConfig,
        /// `g_j`: an expression in `j` (and `z` for `kind = "expr"`).
        #[serde(default)]
        g: Option<String>,
        #[serde(default)]
        kappa: CertConfig,
        #[serde(default)]
        lambda: CertConfig,
        #[serde(default)]
        xi: CertConfig,
        #[serde(default)]
        eta: CertConfig,
        #[serde(default)]
        a: EnvConfig,
        #[serde(default)]
        b: EnvConfig,
    },
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig::Builtin { builtin: "unit".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKindConfig {
    Unit,
    ScalarSeq,
    Expr,
}

/// An integer, `"ceil_log2"`, or a formula in `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CertConfig {
    Const(u32),
    Named(String),
}

impl Default for CertConfig {
    fn default() -> Self {
        CertConfig::Const(0)
    }
}

/// A positive number, `"exp_modulus"` (`e^{|z|}`), or a formula in `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvConfig {
    Const(f64),
    Named(String),
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Const(1.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub half: Option<f64>,
    pub x0: Option<f64>,
    pub x1: Option<f64>,
    pub y0: Option<f64>,
    pub y1: Option<f64>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse_expr(what: &str, s: &str) -> Result<ExprProgram, CliError> {
    ExprProgram::parse(s).map_err(|e| config_err(format!("{what} `{s}`: {e}")))
}

impl CertConfig {
    fn resolve(&self, name: &str) -> Result<Certificate, CliError> {
        Ok(match self {
            CertConfig::Const(0) => Certificate::Zero,
            CertConfig::Const(k) => Certificate::Const(*k),
            CertConfig::Named(s) if s == "ceil_log2" => Certificate::CeilLog2,
            CertConfig::Named(s) => Certificate::Formula(parse_expr(name, s)?),
        })
    }
}

impl EnvConfig {
    fn resolve(&self, name: &str) -> Result<Envelope, CliError> {
        Ok(match self {
            EnvConfig::Const(c) => Envelope::Const(*c),
            EnvConfig::Named(s) if s == "exp_modulus" => Envelope::ExpModulus,
            EnvConfig::Named(s) => Envelope::Expr(parse_expr(name, s)?),
        })
    }
}

impl FamilyConfig {
    pub fn resolve(&self) -> Result<PerturbationFamily, CliError> {
        match self {
            FamilyConfig::Builtin { builtin } => PerturbationFamily::builtin(builtin).ok_or_else(|| {
                config_err(format!(
                    "unknown family `{builtin}`; expected one of {:?}",
                    PerturbationFamily::BUILTIN_NAMES
                ))
            }),
            FamilyConfig::Custom {
                kind,
                g,
                kappa,
                lambda,
                xi,
                eta,
                a,
                b,
            } => {
                let g_prog = || -> Result<ExprProgram, CliError> {
                    let s = g.as_deref().ok_or_else(|| config_err("family.g is required"))?;
                    parse_expr("family.g", s)
                };
                let kind = match kind {
                    FamilyKindConfig::Unit => return Ok(PerturbationFamily::unit()),
                    FamilyKindConfig::ScalarSeq => FamilyKind::ScalarSeq(g_prog()?),
                    FamilyKindConfig::Expr => FamilyKind::ExprFamily(g_prog()?),
                };
                let certs = Certificates {
                    kappa: kappa.resolve("family.kappa")?,
                    lambda: lambda.resolve("family.lambda")?,
                    xi: xi.resolve("family.xi")?,
                    eta: eta.resolve("family.eta")?,
                };
                PerturbationFamily::new(kind, certs, a.resolve("family.a")?, b.resolve("family.b")?)
                    .map_err(|e| config_err(e.to_string()))
            }
        }
    }
}

impl WindowConfig {
    pub fn resolve(&self) -> Result<Rect, CliError> {
        let sides = [self.x0, self.x1, self.y0, self.y1];
        let rect = match (self.half, sides) {
            (None, [Some(x0), Some(x1), Some(y0), Some(y1)]) => Rect::new(x0, x1, y0, y1),
            (half, [None, None, None, None]) => Rect::square(half.unwrap_or(DEFAULT_HALF_WIDTH)),
            _ => return Err(config_err("window: give either `half` or all of x0, x1, y0, y1")),
        };
        if !(rect.x0 < rect.x1 && rect.y0 < rect.y1) || !sides.iter().flatten().all(|v| v.is_finite()) {
            return Err(config_err(format!("window {rect:?} is empty")));
        }
        Ok(rect)
    }
}

impl RhoConfig {
    pub fn resolve(&self) -> Result<TestFunction, CliError> {
        match self {
            RhoConfig::Builtin { builtin } => TestFunction::builtin(builtin).ok_or_else(|| {
                config_err(format!(
                    "unknown test function `{builtin}`; expected one of {:?}",
                    TestFunction::BUILTIN_NAMES
                ))
            }),
            RhoConfig::Custom(t) => {
                TestFunction::new(t.id.clone(), t.kind.clone()).map_err(|e| config_err(e.to_string()))
            }
        }
    }
}

/// A validated configuration together with the library objects it describes.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub map: HoloMap,
    pub family: PerturbationFamily,
    pub window: Rect,
    pub quad: Window,
    pub rho: Vec<TestFunction>,
    pub digest: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    /// SHA-256 of the canonical JSON form of every key that affects results.
    pub fn digest(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        digest_hex(v.to_string().as_bytes())
    }

    pub fn resolve(self) -> Result<Resolved, CliError> {
        if self.map.is_empty() {
            return Err(config_err("map needs at least one component"));
        }
        let map = HoloMap::parse(&self.map).map_err(|e| config_err(format!("map: {e}")))?;
        let family = self.family.resolve()?;
        let window = self.window.resolve()?;
        if self.quad_nodes < 3 {
            return Err(config_err("quad_nodes must be at least 3"));
        }
        let quad = Window::new(window, self.quad_nodes, self.quad_nodes).map_err(|e| config_err(e.to_string()))?;
        let rho = self.rho.iter().map(RhoConfig::resolve).collect::<Result<Vec<_>, _>>()?;
        let mut ids: Vec<&str> = rho.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(config_err("test function ids must be distinct"));
        }
        for r in &rho {
            if !window.contains_rect(&r.support()) {
                return Err(config_err(format!("support of `{}` is not inside the window", r.id)));
            }
        }
        if let Some(list) = &self.n_list {
            if list.is_empty() || list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(config_err("n_list must be non-empty and strictly increasing"));
            }
        }
        if self.trials < 2 {
            return Err(config_err("trials must be at least 2"));
        }
        if self.threads == Some(0) {
            return Err(config_err("threads must be positive"));
        }
        let digest = self.digest();
        Ok(Resolved {
            config: self,
            map,
            family,
            window,
            quad,
            rho,
            digest,
        })
    }
}

impl Resolved {
    pub fn spec(&self, n: usize) -> Result<EnsembleSpec, CliError> {
        EnsembleSpec::new(
            self.map.clone(),
            self.family.clone(),
            n,
            self.config.representation,
            self.config.seed,
        )
        .map_err(|e| config_err(e.to_string()))
    }

    pub fn n(&self) -> Result<usize, CliError> {
        self.config
            .n
            .or_else(|| self.config.n_list.as_ref().and_then(|l| l.last().copied()))
            .ok_or_else(|| config_err("set `n` (or `n_list`)"))
    }

    pub fn n_list(&self) -> Result<Vec<usize>, CliError> {
        match (&self.config.n_list, self.config.n) {
            (Some(l), _) => Ok(l.clone()),
            (None, Some(n)) => Ok(vec![n]),
            (None, None) => Err(config_err("set `n_list` (or `n`)")),
        }
    }

    pub fn experiment(&self, n: usize) -> Result<Experiment, CliError> {
        let mut exp = Experiment::new(self.spec(n)?, self.window, self.config.trials, self.rho.clone())
            .with_method(self.config.method);
        exp.retain_zeros = self.config.retain_zeros;
        exp.audit_override = self.config.audit_override;
        Ok(exp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_kac_defaults() {
        let r = RunConfig::default().resolve().unwrap();
        assert_eq!(r.map.ell(), 1);
        assert!(r.family.is_unit());
        assert_eq!(r.window, Rect::square(2.0));
        assert_eq!(r.rho.len(), 3);
        assert!(r.n().is_err());
    }

    #[test]
    fn custom_family_and_rho_parse() {
        let cfg: RunConfig = toml::from_str(
            r#"
            map = ["z", "0.5"]
            n_list = [10, 20]
            [family]
            kind = "scalar_seq"
            g = "j + 1"
            kappa = "ceil_log2"
            b = 2.0
            [window]
            x0 = -2.5
            x1 = 2.5
            y0 = -2.0
            y1 = 2.0
            [[rho]]
            id = "ring"
            kind = "annulus"
            center = [0.0, 0.0]
            r_support_in = 1.0
            r_core_in = 1.1
            r_core_out = 1.3
            r_support_out = 1.4
            [[rho]]
            builtin = "disk"
            "#,
        )
        .unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.n().unwrap(), 20);
        assert_eq!(r.rho[0].id, "ring");
        assert!(matches!(r.family.kind(), FamilyKind::ScalarSeq(_)));
        assert!(matches!(r.family.certificates().kappa, Certificate::CeilLog2));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for text in [
            "map = []",
            "trials = 1",
            "n_list = [20, 10]",
            "[family]\nbuiltin = \"nope\"",
            "[window]\nhalf = 2.0\nx0 = 1.0",
            "[window]\nhalf = 0.5",
            "[[rho]]\nbuiltin = \"disk\"\n[[rho]]\nbuiltin = \"disk\"",
        ] {
            let cfg: RunConfig = toml::from_str(text).unwrap();
            assert!(cfg.resolve().is_err(), "{text}");
        }
        assert!(toml::from_str::<RunConfig>("unknown_key = 1").is_err());
    }

    #[test]
    fn digest_ignores_output_location() {
        let a = RunConfig::default();
        let b = RunConfig {
            output_dir: "elsewhere".into(),
            threads: Some(2),
            ..RunConfig::default()
        };
        assert_eq!(a.digest(), b.digest());
        let c = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        assert_ne!(a.digest(), c.digest());
    }
}
