//! Projected gradient ascent with Armijo backtracking in a box.

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub(crate) struct AscentSettings {
    pub max_iters: usize,
    /// Stop when an accepted step improves the objective by less than
    /// `ftol * (1 + |f|)`.
    pub ftol: f64,
    /// Stop when the projected step is smaller than this in every coordinate.
    pub xtol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct AscentOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;

fn project(x: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(lower.iter().zip(upper))
        .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
        .collect()
}

/// Maximizes `eval` (value and gradient) from `x0`, using `value` alone for
/// trial points during backtracking. Trial points whose evaluation fails
/// are treated as rejected steps.
pub(crate) fn ascend<G, V>(
    eval: G,
    value: V,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    settings: AscentSettings,
) -> Result<AscentOutcome>
where
    G: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    V: Fn(&[f64]) -> Result<f64>,
{
    let mut x = project(x0, lower, upper);
    let (mut f, mut g) = eval(&x)?;
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // first trial moves at most 0.1 in any coordinate
    let mut step = if gmax > 0.0 { 0.1 / gmax } else { 1.0 };

    for iter in 0..settings.max_iters {
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + step * gi).collect();
            let trial = project(&trial, lower, upper);
            let moved = trial
                .iter()
                .zip(&x)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if moved < settings.xtol {
                break None;
            }
            let predicted: f64 = trial
                .iter()
                .zip(&x)
                .zip(&g)
                .map(|((a, b), gi)| gi * (a - b))
                .sum();
            match value(&trial) {
                Ok(ft) if ft.is_finite() && ft >= f + ARMIJO * predicted => break Some(trial),
                _ => {
                    step *= 0.5;
                    if step < MIN_STEP {
                        break None;
                    }
                }
            }
        };
        let Some(next) = accepted else {
            return Ok(AscentOutcome {
                x,
                value: f,
                iterations: iter,
                converged: true,
            });
        };
        let (f_next, g_next) = eval(&next)?;
        let gain = f_next - f;
        x = next;
        f = f_next;
        g = g_next;
        if gain < settings.ftol * (1.0 + f.abs()) {
            return Ok(AscentOutcome {
                x,
                value: f,
                iterations: iter + 1,
                converged: true,
            });
        }
        step *= 2.0;
    }
    Ok(AscentOutcome {
        x,
        value: f,
        iterations: settings.max_iters,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn climbs_concave_quadratic() {
        // f = −(x−1)² − 4(y+2)²
        let eval = |x: &[f64]| {
            Ok((
                -(x[0] - 1.0).powi(2) - 4.0 * (x[1] + 2.0).powi(2),
                vec![-2.0 * (x[0] - 1.0), -8.0 * (x[1] + 2.0)],
            ))
        };
        let value = |x: &[f64]| eval(x).map(|(v, _)| v);
        let out = ascend(
            eval,
            value,
            &[5.0, 5.0],
            &[-10.0, -10.0],
            &[10.0, 10.0],
            AscentSettings {
                max_iters: 500,
                ftol: 1e-14,
                xtol: 1e-12,
            },
        )
        .unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-4, "{:?}", out);
        assert!((out.x[1] + 2.0).abs() < 1e-4, "{:?}", out);
    }

    #[test]
    fn stops_at_box_edge() {
        let eval = |x: &[f64]| Ok((x[0], vec![1.0]));
        let value = |x: &[f64]| Ok(x[0]);
        let out = ascend(
            eval,
            value,
            &[0.0],
            &[-1.0],
            &[2.0],
            AscentSettings {
                max_iters: 100,
                ftol: 0.0,
                xtol: 1e-12,
            },
        )
        .unwrap();
        assert_eq!(out.x, vec![2.0]);
        assert!(out.converged);
    }
}
