use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::AgentOracle;
use crate::attacks::{AttackConfig, AttackKind};
use crate::envs::{EnvKind, EnvParams};
use crate::error::{Error, Result};
use crate::harness::eval::{evaluate, EvalSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AxisValue {
    Num(f64),
    Label(String),
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Num(x) => write!(f, "{x:.16e}"),
            AxisValue::Label(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<AxisValue>,
}

impl Axis {
    pub fn numeric(name: &str, values: &[f64]) -> Self {
        Self {
            name: name.to_string(),
            values: values.iter().map(|&v| AxisValue::Num(v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Position along each axis.
    pub index: Vec<usize>,
    pub mean_return: f64,
    pub std_return: f64,
    pub n: usize,
    pub per_seed_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axes: Vec<Axis>,
    /// Row-major over the axes, last axis fastest.
    pub cells: Vec<Cell>,
    /// Unattacked mean return at the default parameters.
    pub baseline_return: f64,
}

impl SweepResult {
    pub fn cell(&self, index: &[usize]) -> Option<&Cell> {
        let mut flat = 0;
        for (axis, &i) in self.axes.iter().zip(index) {
            if i >= axis.values.len() {
                return None;
            }
            flat = flat * axis.values.len() + i;
        }
        (index.len() == self.axes.len()).then(|| &self.cells[flat])
    }

    /// `mean_return / baseline_return`; undefined unless the baseline is positive.
    pub fn normalized(&self, cell: &Cell) -> Option<f64> {
        (self.baseline_return > 0.0).then(|| cell.mean_return / self.baseline_return)
    }

    /// Mean of the cell means.
    pub fn grid_mean(&self) -> f64 {
        self.cells.iter().map(|c| c.mean_return).sum::<f64>() / self.cells.len() as f64
    }

    /// Grid mean restricted to one seed position.
    pub fn grid_mean_for_seed(&self, seed_index: usize) -> f64 {
        self.cells.iter().map(|c| c.per_seed_means[seed_index]).sum::<f64>() / self.cells.len() as f64
    }
}

/// All index tuples of a grid in row-major order.
fn grid_indices(lengths: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &len in lengths {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..len).map(move |i| {
                    let mut p = prefix.clone();
                    p.push(i);
                    p
                })
            })
            .collect();
    }
    out
}

fn to_cell(index: Vec<usize>, r: crate::harness::eval::EvalResult) -> Cell {
    Cell {
        index,
        mean_return: r.mean,
        std_return: r.std,
        n: r.per_episode_returns.len(),
        per_seed_means: r.per_seed_means,
    }
}

/// Evaluates every (attack kind, epsilon) pair. `epsilons` must start at 0
/// and ascend; the baseline is the unattacked return at `params`.
pub fn sweep_attack_magnitude(
    oracle: &dyn AgentOracle,
    params: &EnvParams,
    kinds: &[AttackKind],
    epsilons: &[f64],
    template: &AttackConfig,
    spec: &EvalSpec,
) -> Result<SweepResult> {
    if kinds.is_empty() || epsilons.is_empty() {
        return Err(Error::Argument("attack sweep needs at least one kind and one epsilon".into()));
    }
    if epsilons[0] != 0.0 || epsilons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("epsilons must start at 0 and strictly ascend".into()));
    }
    let baseline = evaluate(oracle, params, &spec.with_attack(None))?;
    let indices = grid_indices(&[kinds.len(), epsilons.len()]);
    let cells = indices
        .into_par_iter()
        .map(|idx| {
            let cfg = AttackConfig {
                kind: kinds[idx[0]],
                epsilon: epsilons[idx[1]],
                ..*template
            };
            evaluate(oracle, params, &spec.with_attack(Some(cfg))).map(|r| to_cell(idx, r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        axes: vec![
            Axis {
                name: "attack".into(),
                values: kinds.iter().map(|k| AxisValue::Label(k.name().into())).collect(),
            },
            Axis::numeric("epsilon", epsilons),
        ],
        cells,
        baseline_return: baseline.mean,
    })
}

/// `points` values spread evenly over `[(1 - spread) v, (1 + spread) v]`.
pub fn default_axis_values(center: f64, points: usize, spread: f64) -> Vec<f64> {
    if points == 1 {
        return vec![center];
    }
    (0..points)
        .map(|i| center * (1.0 - spread + 2.0 * spread * i as f64 / (points - 1) as f64))
        .collect()
}

/// The default robustness grid for an environment: its two grid axes,
/// `points` values each, spread around the defaults.
pub fn default_grid(env: EnvKind, points: usize, spread: f64) -> Result<Vec<(String, Vec<f64>)>> {
    if points == 0 || !(0.0..1.0).contains(&spread) {
        return Err(Error::Argument(format!(
            "grid needs points >= 1 and spread in [0, 1), got {points} and {spread}"
        )));
    }
    let defaults = env.default_params();
    env.grid_axes()
        .iter()
        .map(|name| Ok((name.to_string(), default_axis_values(defaults.get(name)?, points, spread))))
        .collect()
}

/// Clean evaluation at every point of a physics-parameter grid. The
/// baseline is the clean return at `base`.
pub fn sweep_params_grid(
    oracle: &dyn AgentOracle,
    base: &EnvParams,
    grid: &[(String, Vec<f64>)],
    spec: &EvalSpec,
) -> Result<SweepResult> {
    if grid.is_empty() || grid.iter().any(|(_, v)| v.is_empty()) {
        return Err(Error::Argument("parameter grid has an empty axis".into()));
    }
    let spec = spec.with_attack(None);
    // resolve every cell before any rollout so bad values fail fast
    let indices = grid_indices(&grid.iter().map(|(_, v)| v.len()).collect::<Vec<_>>());
    let cell_params = indices
        .iter()
        .map(|idx| {
            idx.iter()
                .zip(grid)
                .try_fold(*base, |p, (&i, (name, values))| p.with(name, values[i]))
        })
        .collect::<Result<Vec<_>>>()?;
    let baseline = evaluate(oracle, base, &spec)?;
    let cells = indices
        .into_par_iter()
        .zip(cell_params)
        .map(|(idx, p)| evaluate(oracle, &p, &spec).map(|r| to_cell(idx, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        axes: grid.iter().map(|(n, v)| Axis::numeric(n, v)).collect(),
        cells,
        baseline_return: baseline.mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cvar {
    pub threshold_beta: f64,
    pub cvar: f64,
}

/// Mean of the returns at or below the empirical `alpha`-quantile, taken
/// with lower interpolation at index `floor(alpha * (n - 1))`.
pub fn cvar_statistic(returns: &[f64], alpha: f64) -> Result<Cvar> {
    if returns.is_empty() {
        return Err(Error::Argument("cvar of an empty sample".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Argument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if returns.iter().any(|r| r.is_nan()) {
        return Err(Error::Numeric("cvar input contains NaN".into()));
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = (alpha * (sorted.len() - 1) as f64).floor() as usize;
    let threshold = sorted[idx];
    let tail: Vec<f64> = sorted.iter().copied().take_while(|&r| r <= threshold).collect();
    Ok(Cvar {
        threshold_beta: threshold,
        cvar: tail.iter().sum::<f64>() / tail.len() as f64,
    })
}
