//! TOML configuration.
//!
//! ```toml
//! schema = "almostgraph-config/1"
//!
//! [system]
//! name = "scalar_tanh"
//! n = 1
//! k = 1
//! r = 1.0
//! N = 256
//! delays = ["0.5*(1 + tanh(eta1))"]   # variables eta1..eta_m
//! g = ["-y1"]                         # variables y1..y_nk, y[κn+ν+1] = x_{ν+1}(t - d_{κ+1})
//! V = { kind = "full" }
//! W = { kind = "box", lo = [-10.0], hi = [10.0] }
//! witness = { constant = [0.0] }      # or { file = "witness.json" }
//!
//! [[system.L]]
//! atoms = [{ kind = "point", component = 1, time = 0.0 }]
//!
//! [chart]      # all optional
//! [verify]     # all optional
//! [integrate]  # all optional
//! ```
//!
//! Component numbers in the file are 1-based.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::blend::{FamilyMode, HOptions, PsiWidth};
use crate::chart::{ChartContext, ChartOptions};
use crate::error::{Error, Result};
use crate::exprdiff::Expression;
use crate::fnspace::{Grid, GridFnN};
use crate::integrator::IntegrateOptions;
use crate::io::read_function;
use crate::kernel_basis::KernelOptions;
use crate::system::{Atom, DomainSpec, Functional, MapL, SystemDef, SystemParts};

pub const CONFIG_SCHEMA: &str = "almostgraph-config/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    pub system: SystemConfig,
    #[serde(default)]
    pub chart: ChartConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub integrate: IntegrateConfig,
    /// Directory that relative witness paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub n: usize,
    pub k: usize,
    pub r: f64,
    #[serde(rename = "N")]
    pub intervals: usize,
    #[serde(rename = "L")]
    pub l: Vec<RowConfig>,
    pub delays: Vec<String>,
    pub g: Vec<String>,
    #[serde(rename = "V")]
    pub v: DomainConfig,
    #[serde(rename = "W")]
    pub w: DomainConfig,
    pub witness: WitnessConfig,
}

fn default_name() -> String {
    "system".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowConfig {
    pub atoms: Vec<AtomConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AtomConfig {
    Point {
        component: usize,
        time: f64,
        #[serde(default = "one")]
        weight: f64,
    },
    Integral {
        component: usize,
        #[serde(default = "one")]
        weight: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainConfig {
    Full,
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum WitnessConfig {
    Constant(Vec<f64>),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeConfig {
    Adaptive,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChartConfig {
    pub fp_tol: f64,
    pub max_iter: Option<usize>,
    pub mode: ModeConfig,
    pub h_min: Option<f64>,
    pub delta0: Option<f64>,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub samples_per_level: usize,
    #[serde(rename = "J_max")]
    pub j_max: usize,
    pub psi_width: PsiWidth,
    pub rank_tol_rel: f64,
    pub theta: f64,
}

impl Default for ChartConfig {
    fn default() -> Self {
        let h = HOptions::default();
        let c = ChartOptions::default();
        ChartConfig {
            fp_tol: c.fp_tol,
            max_iter: c.max_iter,
            mode: ModeConfig::Adaptive,
            h_min: None,
            delta0: h.delta0,
            r0: h.r0,
            samples_per_level: h.samples_per_level,
            j_max: h.j_max,
            psi_width: h.psi_width,
            rank_tol_rel: h.kernel.rank_tol_rel,
            theta: h.kernel.theta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random `φ ∈ U` and `χ ∈ 𝒪` for the inverse identities.
    pub identity_samples: usize,
    /// Lifted points and random `ζ ∈ X₀ ∩ 𝒪`.
    pub lift_samples: usize,
    /// Random `v ∈ V` for the bounds on `H`.
    pub v_samples: usize,
    /// Random `(η, v)` for the bound on `R`.
    pub r_samples: usize,
    /// Constructed members of `X₀ ∩ X_f`.
    pub member_samples: usize,
    /// Size of random functions around the witness.
    pub scale: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 42,
            identity_samples: 200,
            lift_samples: 100,
            v_samples: 200,
            r_samples: 500,
            member_samples: 50,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrateConfig {
    #[serde(rename = "T")]
    pub t_end: f64,
    pub h_s: f64,
    pub norm_bound: f64,
}

impl Default for IntegrateConfig {
    fn default() -> Self {
        let o = IntegrateOptions::default();
        IntegrateConfig {
            t_end: o.t_end,
            h_s: o.step,
            norm_bound: o.norm_bound,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(schema) = &config.schema {
            if schema != CONFIG_SCHEMA {
                return Err(Error::Config(format!("unsupported config schema `{schema}`")));
            }
        }
        config.base_dir = base_dir.map(Path::to_path_buf);
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data serializes")
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.system.r, self.system.intervals)
    }

    /// Builds and validates the system, including the witness condition.
    pub fn build_system(&self) -> Result<SystemDef> {
        let s = &self.system;
        let grid = self.grid()?;
        let rows = s
            .l
            .iter()
            .map(|row| {
                let atoms = row
                    .atoms
                    .iter()
                    .map(|a| {
                        let component = match *a {
                            AtomConfig::Point { component, .. } | AtomConfig::Integral { component, .. } => component,
                        };
                        if component == 0 || component > s.n {
                            return Err(Error::Component {
                                index: component,
                                n: s.n,
                            });
                        }
                        Ok(match *a {
                            AtomConfig::Point { time, weight, .. } => Atom::Point {
                                component: component - 1,
                                time,
                                weight,
                            },
                            AtomConfig::Integral { weight, .. } => Atom::Integral {
                                component: component - 1,
                                weight,
                            },
                        })
                    })
                    .collect::<Result<_>>()?;
                Functional::new(atoms)
            })
            .collect::<Result<_>>()?;
        let l = MapL::new(rows)?;
        let eta_vars: Vec<String> = (1..=l.dim()).map(|i| format!("eta{i}")).collect();
        let y_vars: Vec<String> = (1..=s.n * s.k).map(|i| format!("y{i}")).collect();
        let delays = s
            .delays
            .iter()
            .map(|d| Expression::parse(d, &eta_vars).map_err(Error::from))
            .collect::<Result<_>>()?;
        let g =
            s.g.iter()
                .map(|e| Expression::parse(e, &y_vars).map_err(Error::from))
                .collect::<Result<_>>()?;
        let witness = match &s.witness {
            WitnessConfig::Constant(c) => {
                if c.len() != s.n {
                    return Err(Error::Config(format!("witness must have {} components", s.n)));
                }
                GridFnN::constant(grid, c)
            }
            WitnessConfig::File(path) => {
                let path = match &self.base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                read_function(&path)?
            }
        };
        SystemDef::new(SystemParts {
            name: s.name.clone(),
            n: s.n,
            k: s.k,
            grid,
            l,
            delays,
            g,
            v_domain: domain(&s.v),
            w_domain: domain(&s.w),
            witness,
        })
    }

    pub fn h_options(&self) -> Result<HOptions> {
        let c = &self.chart;
        let mode = match c.mode {
            ModeConfig::Adaptive => FamilyMode::Adaptive,
            ModeConfig::Constant => FamilyMode::Constant {
                h_min: c
                    .h_min
                    .ok_or_else(|| Error::Config("mode = \"constant\" needs h_min".into()))?,
            },
        };
        Ok(HOptions {
            mode,
            psi_width: c.psi_width,
            delta0: c.delta0,
            r0: c.r0,
            samples_per_level: c.samples_per_level,
            j_max: c.j_max,
            kernel: KernelOptions {
                rank_tol_rel: c.rank_tol_rel,
                theta: c.theta,
            },
        })
    }

    pub fn chart_options(&self) -> ChartOptions {
        ChartOptions {
            fp_tol: self.chart.fp_tol,
            max_iter: self.chart.max_iter,
        }
    }

    pub fn integrate_options(&self) -> IntegrateOptions {
        IntegrateOptions {
            t_end: self.integrate.t_end,
            step: self.integrate.h_s,
            norm_bound: self.integrate.norm_bound,
        }
    }

    pub fn context(&self) -> Result<ChartContext> {
        ChartContext::new(Arc::new(self.build_system()?), self.h_options()?, self.chart_options())
    }
}

fn domain(d: &DomainConfig) -> DomainSpec {
    match d {
        DomainConfig::Full => DomainSpec::Full,
        DomainConfig::Ball { center, radius } => DomainSpec::Ball {
            center: center.clone(),
            radius: *radius,
        },
        DomainConfig::Box { lo, hi } => DomainSpec::Box {
            lo: lo.clone(),
            hi: hi.clone(),
        },
    }
}

/// The bundled example systems, by name.
pub const BUNDLED: [(&str, &str); 3] = [
    ("zero_rhs", include_str!("../systems/zero_rhs.toml")),
    ("scalar_tanh", include_str!("../systems/scalar_tanh.toml")),
    ("planar_two_delay", include_str!("../systems/planar_two_delay.toml")),
];

pub fn bundled(name: &str) -> Result<Config> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("no bundled system `{name}`")))
        .and_then(|(_, text)| Config::from_toml(text, None))
}
