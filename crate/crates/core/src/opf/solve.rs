use super::CanonicalProblem;
use crate::error::{Error, Result};
use crate::qp::{solve_ipm, IpmFailure, IpmSettings};

/// Reference optimum of the full relaxed problem.
#[derive(Debug, Clone)]
pub struct CentralSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Multipliers of `G x = b` and `H x ≤ d`.
    pub y_eq: Vec<f64>,
    pub y_in: Vec<f64>,
    pub iterations: usize,
}

/// Solves the whole problem with the interior-point method.
pub fn solve_centralized(prob: &CanonicalProblem, tol: f64) -> Result<CentralSolution> {
    let empty: Vec<String> = (0..prob.n())
        .filter(|&c| prob.lower[c] > prob.upper[c])
        .map(|c| format!("bounds of {}", prob.index.key(c)))
        .collect();
    if !empty.is_empty() {
        return Err(Error::Infeasible { rows: empty });
    }
    let settings = IpmSettings {
        tol,
        ..IpmSettings::default()
    };
    match solve_ipm(&prob.as_qp(), &settings) {
        Ok(sol) => Ok(CentralSolution {
            objective: prob.objective(&sol.x),
            x: sol.x,
            y_eq: sol.y_eq,
            y_in: sol.y_in,
            iterations: sol.iterations,
        }),
        Err(IpmFailure::Infeasible(rows)) => Err(Error::Infeasible {
            rows: rows
                .into_iter()
                .map(|(eq, r)| {
                    if eq {
                        prob.eq_tags[r].to_string()
                    } else {
                        prob.in_tags[r].to_string()
                    }
                })
                .collect(),
        }),
        Err(IpmFailure::IterationLimit { iterations, residual }) => Err(Error::IterationLimit { iterations, residual }),
    }
}
