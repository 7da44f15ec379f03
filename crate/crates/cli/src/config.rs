//! JSON run configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use twostep::engine::{Block, BlockProblem, Family, InnerSolverConfig, StopCriteria};
use twostep::linops::{DenseOperator, OperatorRef};
use twostep::mri::MriConfig;
use twostep::prox::{
    BoxIndicator, GroupL2Ball, LinearFunctional, PointIndicator, ProxFunction, WeightedL1, Zero,
};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    /// Families compared by the `mri` command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub families: Option<Vec<Family>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Fraction of the closed-form bound used when `alphas` is absent.
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default = "default_stop")]
    pub stop: StopCriteria,
    #[serde(default)]
    pub inner: InnerSolverConfig,
    /// Saddle point for the `rate` gap; a long run is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_safety() -> f64 {
    0.9
}

fn default_stop() -> StopCriteria {
    StopCriteria {
        max_iter: 5000,
        kkt_tol: Some(1e-10),
        ..StopCriteria::default()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Builtin(Builtin),
    Dense(DenseProblem),
    Mri(MriConfig),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    /// `min |x1| + |x2| + |x3|  s.t.  x1 + 2 x2 + 3 x3 = 3`
    Lp3,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseProblem {
    pub blocks: Vec<DenseBlock>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseBlock {
    pub f: FunctionSpec,
    pub a: MatrixSpec,
}

/// Row-major dense matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Zero,
    L1 {
        weights: Vec<f64>,
    },
    Box {
        radii: Vec<f64>,
    },
    /// Pairs `(x_j, x_{n/2+j})` constrained to the ball of radius `mu`.
    GroupL2Ball {
        mu: f64,
    },
    Linear {
        c: Vec<f64>,
    },
    Point {
        point: Vec<f64>,
    },
}

impl FunctionSpec {
    fn build(&self, n: usize) -> twostep::Result<Arc<dyn ProxFunction>> {
        Ok(match self {
            FunctionSpec::Zero => Arc::new(Zero::new(n)),
            FunctionSpec::L1 { weights } => Arc::new(WeightedL1::new(weights.clone())?),
            FunctionSpec::Box { radii } => Arc::new(BoxIndicator::new(radii.clone())?),
            FunctionSpec::GroupL2Ball { mu } => {
                if !n.is_multiple_of(2) {
                    return Err(twostep::Error::InvalidArgument(format!(
                        "group_l2_ball needs an even block size, got {n}"
                    )));
                }
                Arc::new(GroupL2Ball::new(n / 2, *mu)?)
            }
            FunctionSpec::Linear { c } => Arc::new(LinearFunctional::new(c.clone())?),
            FunctionSpec::Point { point } => Arc::new(PointIndicator::new(point.clone())?),
        })
    }
}

pub fn lp3() -> BlockProblem {
    let blocks = [1.0, 2.0, 3.0]
        .iter()
        .map(|&c| {
            let a: OperatorRef = Arc::new(DenseOperator::from_row_slice(1, 1, &[c]).unwrap());
            let f: Arc<dyn ProxFunction> = Arc::new(WeightedL1::uniform(1, 1.0).unwrap());
            Block::new(f, a)
        })
        .collect();
    BlockProblem::new(blocks, vec![3.0]).unwrap()
}

impl DenseProblem {
    pub fn build(&self) -> twostep::Result<BlockProblem> {
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, blk)| {
                let a = DenseOperator::from_row_slice(blk.a.rows, blk.a.cols, &blk.a.data)?
                    .with_label(format!("A{}", i + 1));
                let f = blk.f.build(blk.a.cols)?;
                Ok(Block::new(f, Arc::new(a)))
            })
            .collect::<twostep::Result<Vec<_>>>()?;
        BlockProblem::new(blocks, self.b.clone())
    }
}

/// Parse a config file; syntax and schema errors carry line and column.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn parse(text: &str) -> Result<RunConfig, serde_json::Error> {
    serde_json::from_str(text)
}

/// Accepts a bare name (`2sfppa`, `two_step_implicit`, ...) or a JSON object
/// such as `{"name":"offdiag","base":"explicit","theta":0.3}`.
pub fn parse_family(s: &str) -> Result<Family, CliError> {
    let value = if s.trim_start().starts_with('{') {
        serde_json::from_str(s).map_err(|e| CliError::Usage(format!("--family: {e}")))?
    } else {
        serde_json::json!({ "name": s })
    };
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("--family {s:?}: {e}")))
}
