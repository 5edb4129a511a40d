//! Brute-force landscape of the steady-state performance over orientation.

use serde::{Deserialize, Serialize};

use super::closed_loop::{SimError, Simulation};
use super::config::SimConfig;

/// Revolutions simulated per grid point; the last one fills the window.
pub const SWEEP_REVOLUTIONS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// `(θ in degrees, steady-state performance)` over (−90°, 90°].
    pub grid: Vec<(f64, f64)>,
    /// Orientations (deg) of the strict local maxima on the wrapped grid.
    pub maxima: Vec<f64>,
}

impl SweepResult {
    /// Steady-state value range over the grid.
    pub fn range(&self) -> (f64, f64) {
        self.grid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, j)| (lo.min(j), hi.max(j)))
    }

    /// Global maximum (deg).
    pub fn argmax(&self) -> Option<f64> {
        self.grid.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|g| g.0)
    }

    /// Wrapped angular distance (deg) from `deg` to the nearest local maximum.
    pub fn distance_to_nearest_maximum(&self, deg: f64) -> Option<f64> {
        self.maxima.iter().map(|m| orientation_distance_deg(*m, deg)).min_by(f64::total_cmp)
    }
}

/// Distance between two orientations under the 180° ellipse symmetry.
pub fn orientation_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

/// Grid of orientations covering (−90°, 90°] with the given step.
pub fn sweep_grid(step_deg: f64) -> Vec<f64> {
    let n = (180.0 / step_deg).round() as usize;
    (1..=n).map(|i| -90.0 + 180.0 * i as f64 / n as f64).collect()
}

/// Indices of strict local maxima of a circular sequence.
pub fn circular_local_maxima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    if n < 3 {
        return Vec::new();
    }
    (0..n)
        .filter(|&i| {
            let v = values[i];
            v > values[(i + n - 1) % n] && v > values[(i + 1) % n]
        })
        .collect()
}

/// Steady-state windowed performance at a fixed orientation with fatigue
/// frozen at rest and the configured noise seeds.
pub fn steady_state_performance(config: &SimConfig, theta_deg: f64) -> Result<f64, SimError> {
    let mut cfg = config.clone();
    cfg.duration = SWEEP_REVOLUTIONS * config.ellipse.t_rev;
    let mut sim = Simulation::new(cfg)?;
    sim.freeze_fatigue(true);
    sim.fix_orientation(theta_deg.to_radians())?;
    let total = (SWEEP_REVOLUTIONS * config.ellipse.t_rev * config.physics_rate).round() as u64;
    let mut last = 0.0;
    while sim.steps() < total {
        last = sim.step()?.j_raw;
    }
    Ok(last)
}

/// Evaluates the landscape on a grid of `step_deg` (0.5° to 5°).
pub fn oracle_sweep(config: &SimConfig, step_deg: f64) -> Result<SweepResult, SimError> {
    assert!((0.5..=5.0).contains(&step_deg), "grid step must lie in [0.5, 5] degrees");
    config.validate()?;
    let thetas = sweep_grid(step_deg);
    let values = thetas
        .iter()
        .map(|&th| steady_state_performance(config, th))
        .collect::<Result<Vec<_>, _>>()?;
    let maxima = circular_local_maxima(&values).into_iter().map(|i| thetas[i]).collect();
    Ok(SweepResult { grid: thetas.into_iter().zip(values).collect(), maxima })
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_covers_half_open_range() {
        let g = sweep_grid(1.0);
        assert_eq!(g.len(), 180);
        assert_eq!(g[0], -89.0);
        assert_eq!(*g.last().unwrap(), 90.0);
        assert_eq!(sweep_grid(5.0).len(), 36);
    }

    #[test]
    fn wrapped_maxima() {
        assert_eq!(circular_local_maxima(&[3.0, 1.0, 2.0, 0.0, 1.0]), vec![0, 2]);
        assert_eq!(circular_local_maxima(&[1.0, 1.0, 1.0]), Vec::<usize>::new());
        assert_eq!(circular_local_maxima(&[0.0, 2.0, 2.0, 1.0]), Vec::<usize>::new());
    }

    #[test]
    fn orientation_distance_wraps() {
        assert_eq!(orientation_distance_deg(89.0, -89.0), 2.0);
        assert_eq!(orientation_distance_deg(30.0, 40.0), 10.0);
        assert_eq!(orientation_distance_deg(0.0, 90.0), 90.0);
    }
}
