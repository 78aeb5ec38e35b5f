//! Problem-spec JSON schema and shorthand parsers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use riskalloc::allocation::AgentSpec;
use riskalloc::distortion::{DistortionKernel, KernelPoint};
use riskalloc::distributions::{ingest_csv, LossDistribution};
use riskalloc::{Result, RiskError};

/// Kernel schema: `{"type": "var"|"cvar"|"expectation"|"prop_hazard"|"points", ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Var { alpha: f64 },
    Cvar { alpha: f64 },
    Expectation,
    PropHazard { r: f64 },
    Points { points: Vec<KernelPoint> },
}

impl KernelSpec {
    pub fn build(&self) -> Result<DistortionKernel> {
        match self {
            KernelSpec::Var { alpha } => DistortionKernel::var_at(*alpha),
            KernelSpec::Cvar { alpha } => DistortionKernel::cvar_at(*alpha),
            KernelSpec::Expectation => Ok(DistortionKernel::expectation()),
            KernelSpec::PropHazard { r } => DistortionKernel::prop_hazard(*r),
            KernelSpec::Points { points } => DistortionKernel::from_points(points),
        }
    }

    /// Compact `var:0.7`-style shorthand used on the command line.
    pub fn parse_shorthand(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| -> Result<f64> {
            p.parse()
                .map_err(|_| RiskError::Parse(format!("`{p}` is not a number in `{s}`")))
        };
        match parts.as_slice() {
            ["expectation"] | ["mean"] => Ok(KernelSpec::Expectation),
            ["var", a] => Ok(KernelSpec::Var { alpha: num(a)? }),
            ["cvar", a] => Ok(KernelSpec::Cvar { alpha: num(a)? }),
            ["prop_hazard", r] => Ok(KernelSpec::PropHazard { r: num(r)? }),
            _ => Err(RiskError::Parse(format!(
                "unknown kernel shorthand `{s}`; expected expectation, var:A, cvar:A, \
                 or prop_hazard:R"
            ))),
        }
    }

    /// Short label for reports.
    pub fn label(&self) -> String {
        match self {
            KernelSpec::Var { alpha } => format!("var:{alpha}"),
            KernelSpec::Cvar { alpha } => format!("cvar:{alpha}"),
            KernelSpec::Expectation => "expectation".into(),
            KernelSpec::PropHazard { r } => format!("prop_hazard:{r}"),
            KernelSpec::Points { points } => format!("points[{}]", points.len()),
        }
    }
}

/// Distribution schema: discrete/empirical data inline, parametric
/// families by parameters, or a CSV path with a single `loss` column.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Empirical { values: Vec<f64> },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    Uniform { lower: f64, upper: f64 },
    Exponential { rate: f64 },
    Point { value: f64 },
    Csv { path: PathBuf },
}

impl DistributionSpec {
    pub fn build(&self, base_dir: &Path) -> Result<LossDistribution> {
        match self {
            DistributionSpec::Empirical { values } => LossDistribution::empirical(values.clone()),
            DistributionSpec::Discrete { values, probs } => {
                LossDistribution::discrete(values.clone(), probs.clone())
            }
            DistributionSpec::Uniform { lower, upper } => {
                LossDistribution::uniform(*lower, *upper)
            }
            DistributionSpec::Exponential { rate } => LossDistribution::exponential(*rate),
            DistributionSpec::Point { value } => LossDistribution::point_mass(*value),
            DistributionSpec::Csv { path } => {
                let resolved = if path.is_relative() {
                    base_dir.join(path)
                } else {
                    path.clone()
                };
                ingest_csv(&resolved)
            }
        }
    }

    /// Compact `exp:1`-style shorthand used on the command line.
    pub fn parse_shorthand(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| -> Result<f64> {
            p.parse()
                .map_err(|_| RiskError::Parse(format!("`{p}` is not a number in `{s}`")))
        };
        match parts.as_slice() {
            ["exp", r] | ["exponential", r] => Ok(DistributionSpec::Exponential { rate: num(r)? }),
            ["uniform", lo, hi] => Ok(DistributionSpec::Uniform {
                lower: num(lo)?,
                upper: num(hi)?,
            }),
            ["point", v] => Ok(DistributionSpec::Point { value: num(v)? }),
            _ => Err(RiskError::Parse(format!(
                "unknown distribution shorthand `{s}`; expected exp:RATE, \
                 uniform:LO:HI, or point:V"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentField {
    pub kernel: KernelSpec,
    pub lambda: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptionsField {
    pub cells: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub iters: Option<usize>,
    pub trunc: Option<Vec<f64>>,
}

/// The problem file: agents, the total risk, optional defaults for the
/// command-line flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub agents: Vec<AgentField>,
    pub total: DistributionSpec,
    #[serde(default)]
    pub options: OptionsField,
}

impl ProblemSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RiskError::Parse(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| RiskError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn build_agents(&self) -> Result<Vec<AgentSpec>> {
        self.agents
            .iter()
            .map(|a| AgentSpec::new(a.kernel.build()?, a.lambda))
            .collect()
    }

    pub fn build_total(&self, base_dir: &Path) -> Result<LossDistribution> {
        self.total.build(base_dir)
    }
}
