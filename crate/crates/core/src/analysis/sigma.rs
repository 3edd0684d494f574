use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::dynamics::HeavyBallProblem;
use crate::objectives::Objective;
use crate::ode::IntegratorConfig;

/// Grid over which the largest trajectory length is estimated.
#[derive(Debug, Clone)]
pub struct SigmaGrid {
    pub starts: Vec<Vec<f64>>,
    /// Initial speed; velocities are `r0 · direction`.
    pub r0: f64,
    pub directions: Vec<Vec<f64>>,
    pub epsilons: Vec<f64>,
    pub gamma: f64,
    pub objective: Arc<dyn Objective>,
    pub config: IntegratorConfig,
    pub early_stop: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaCell {
    pub start: Vec<f64>,
    pub velocity: Vec<f64>,
    pub epsilon: f64,
    pub length: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    /// Largest length over the cells that ran; a grid estimate of the
    /// supremum, not the supremum itself.
    pub sigma: f64,
    pub argmax: usize,
    pub cells: Vec<SigmaCell>,
}

impl SigmaEstimate {
    pub fn failed_cells(&self) -> impl Iterator<Item = &SigmaCell> {
        self.cells.iter().filter(|c| c.length.is_none())
    }

    pub fn best(&self) -> &SigmaCell {
        &self.cells[self.argmax]
    }
}

/// Runs every `(start, direction, ε)` cell in parallel and reports the
/// longest trajectory. Cells are stored in grid order, so the result does
/// not depend on scheduling. Cells whose integration fails are kept with
/// their error and skipped in the maximum.
pub fn sigma_estimate(grid: &SigmaGrid) -> Result<SigmaEstimate, AnalysisError> {
    let zero = vec![vec![0.0; grid.objective.dim()]];
    let dirs = if grid.r0 == 0.0 || grid.directions.is_empty() {
        &zero
    } else {
        &grid.directions
    };
    let mut specs = Vec::new();
    for x0 in &grid.starts {
        for d in dirs {
            for &eps in &grid.epsilons {
                let v0: Vec<f64> = d.iter().map(|c| grid.r0 * c).collect();
                specs.push((x0.clone(), v0, eps));
            }
        }
    }
    if specs.is_empty() {
        return Err(AnalysisError::EmptyGrid);
    }
    let cells: Vec<SigmaCell> = specs
        .into_par_iter()
        .map(|(start, velocity, epsilon)| {
            let outcome = HeavyBallProblem::new(
                Arc::clone(&grid.objective),
                epsilon,
                grid.gamma,
                start.clone(),
                velocity.clone(),
            )
            .map_err(|e| e.to_string())
            .and_then(|p| p.simulate(&grid.config, grid.early_stop).map_err(|e| e.to_string()))
            .and_then(|run| run.length(0.0, run.t_end()).map_err(|e| e.to_string()));
            let (length, error) = match outcome {
                Ok(l) => (Some(l), None),
                Err(e) => (None, Some(e)),
            };
            SigmaCell {
                start,
                velocity,
                epsilon,
                length,
                error,
            }
        })
        .collect();
    let (argmax, sigma) = cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.length.map(|l| (i, l)))
        .fold(
            (usize::MAX, f64::NEG_INFINITY),
            |best, (i, l)| if l > best.1 { (i, l) } else { best },
        );
    if argmax == usize::MAX {
        return Err(AnalysisError::EmptyGrid);
    }
    Ok(SigmaEstimate { sigma, argmax, cells })
}

/// `count` points evenly spaced on the circle of `radius` around `center`.
pub fn circle_points(center: [f64; 2], radius: f64, count: usize) -> Vec<Vec<f64>> {
    unit_directions(count)
        .into_iter()
        .map(|d| vec![center[0] + radius * d[0], center[1] + radius * d[1]])
        .collect()
}

/// `count` unit vectors in the plane at evenly spaced angles from `0`.
pub fn unit_directions(count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            let th = std::f64::consts::TAU * k as f64 / count as f64;
            vec![th.cos(), th.sin()]
        })
        .collect()
}
