//! Weighted muscle performance: a moving average of `W_m · M` over one cursor
//! revolution, followed by a second-order smoothing low-pass.

use serde::{Deserialize, Serialize};

use super::filter::{design_butterworth, Biquad, FilterError, FilterKind};
use crate::human::Activation4;

/// Per-muscle priority gains. Therapists pick 1, 3 or 5 (low, medium, high)
/// but any positive gain is accepted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(pub [f64; 4]);

impl Default for WeightVector {
    fn default() -> Self {
        Self([1.0, 5.0, 3.0, 5.0])
    }
}

impl WeightVector {
    pub fn violations(&self, prefix: &str) -> Vec<String> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, w)| !(**w > 0.0 && w.is_finite()))
            .map(|(i, w)| format!("{prefix}[{i}] must be positive (got {w})"))
            .collect()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn dot(&self, m: &Activation4) -> f64 {
        self.0.iter().zip(m.0.iter()).map(|(w, m)| w * m).sum()
    }
}

/// Ring buffer holding the last `capacity` weighted samples.
#[derive(Debug, Clone)]
pub struct PerformanceWindow {
    buf: Vec<f64>,
    capacity: usize,
    head: usize,
    sum: f64,
    since_recompute: usize,
}

impl PerformanceWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        Self { buf: Vec::with_capacity(capacity), capacity, head: 0, sum: 0.0, since_recompute: 0 }
    }

    /// Window spanning one revolution: `round(t_rev / t_s)` samples.
    pub fn for_revolution(t_rev: f64, t_s: f64) -> Self {
        Self::new(((t_rev / t_s).round() as usize).max(1))
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() == self.capacity
    }

    pub fn clear(&mut self) {
        self.buf.clear();
        self.head = 0;
        self.sum = 0.0;
        self.since_recompute = 0;
    }

    /// Pushes a sample and returns the mean of the samples held.
    pub fn push(&mut self, value: f64) -> f64 {
        if self.buf.len() < self.capacity {
            self.buf.push(value);
            self.sum += value;
        } else {
            let old = std::mem::replace(&mut self.buf[self.head], value);
            self.head = (self.head + 1) % self.capacity;
            self.sum += value - old;
        }
        self.since_recompute += 1;
        if self.since_recompute >= self.capacity {
            // Bound the drift of the running sum.
            self.sum = self.exact_sum();
            self.since_recompute = 0;
        }
        self.mean()
    }

    pub fn mean(&self) -> f64 {
        if self.buf.is_empty() {
            0.0
        } else {
            self.sum / self.buf.len() as f64
        }
    }

    /// Sum of the samples in chronological order.
    pub fn exact_sum(&self) -> f64 {
        let (newer, older) = self.buf.split_at(self.head);
        older.iter().chain(newer.iter()).sum()
    }

    pub fn running_sum(&self) -> f64 {
        self.sum
    }
}

/// Pushes `W_m · M` into the window and returns the windowed mean.
pub fn performance(window: &mut PerformanceWindow, m: &Activation4, weights: &WeightVector) -> f64 {
    window.push(weights.dot(m))
}

/// Second-order Butterworth low-pass on the performance signal.
#[derive(Debug, Clone)]
pub struct OutputSmoother {
    section: Biquad,
}

impl OutputSmoother {
    pub fn new(cutoff_hz: f64, fs: f64) -> Result<Self, FilterError> {
        Ok(Self { section: Biquad::new(design_butterworth(FilterKind::Lowpass, cutoff_hz, fs)?) })
    }

    pub fn reset(&mut self) {
        self.section.reset();
    }

    pub fn step(&mut self, j: f64) -> f64 {
        self.section.step(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const TS: f64 = 5e-4;

    #[test]
    fn default_capacity() {
        assert_eq!(PerformanceWindow::for_revolution(4.0, TS).capacity(), 8000);
    }

    #[test]
    fn constant_activation() {
        let mut w = PerformanceWindow::for_revolution(4.0, TS);
        let m = Activation4([0.2; 4]);
        let weights = WeightVector([1.0, 5.0, 3.0, 5.0]);
        let mut j = 0.0;
        for _ in 0..10_000 {
            j = performance(&mut w, &m, &weights);
        }
        assert_abs_diff_eq!(j, 2.8, epsilon = 1e-12);
    }

    #[test]
    fn silent_stream() {
        let mut w = PerformanceWindow::new(100);
        for _ in 0..500 {
            assert_eq!(performance(&mut w, &Activation4::ZERO, &WeightVector::default()), 0.0);
        }
    }

    #[test]
    fn prefill_averages_available_samples() {
        let mut w = PerformanceWindow::new(10);
        assert_eq!(w.push(1.0), 1.0);
        assert_eq!(w.push(3.0), 2.0);
        assert!(!w.is_full());
    }

    #[test]
    fn periodic_input_gives_constant_output() {
        let cap = 8000;
        let mut w = PerformanceWindow::new(cap);
        let weights = WeightVector([1.0, 5.0, 3.0, 5.0]);
        let mut first = None;
        for n in 0..3 * cap {
            let phase = 2.0 * PI * n as f64 / cap as f64;
            let m = Activation4(std::array::from_fn(|i| 0.5 + 0.4 * (phase + i as f64).sin()));
            let j = performance(&mut w, &m, &weights);
            if n >= cap {
                let f = *first.get_or_insert(j);
                assert_abs_diff_eq!(j, f, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn running_sum_tracks_exact_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut w = PerformanceWindow::new(997);
        for n in 0..200_000 {
            w.push(rng.random_range(0.0..10.0));
            if n % 10_000 == 0 {
                assert_abs_diff_eq!(w.running_sum(), w.exact_sum(), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn smoother_dc_and_ripple() {
        let fs = 2000.0;
        let mut s = OutputSmoother::new(0.5, fs).unwrap();
        let mut y = 0.0;
        for _ in 0..(10.0 * fs) as usize {
            y = s.step(2.5);
        }
        assert_abs_diff_eq!(y, 2.5, epsilon = 1e-4);

        // 10 Hz ripple: measure steady-state peak after transients die out.
        let mut s = OutputSmoother::new(0.5, fs).unwrap();
        let mut peak: f64 = 0.0;
        for n in 0..(20.0 * fs) as usize {
            let t = n as f64 / fs;
            let y = s.step((2.0 * PI * 10.0 * t).sin());
            if t > 15.0 {
                peak = peak.max(y.abs());
            }
        }
        assert!(20.0 * peak.log10() < -40.0, "peak {peak}");
    }

    #[test]
    fn smoother_step_overshoot_is_butterworth() {
        let fs = 2000.0;
        let mut s = OutputSmoother::new(0.5, fs).unwrap();
        let peak = (0..(20.0 * fs) as usize).map(|_| s.step(1.0)).fold(0.0, f64::max);
        // Second-order Butterworth step overshoot is exp(-π) ≈ 4.32 %.
        assert!(peak - 1.0 < 0.0432 + 0.01, "overshoot {}", peak - 1.0);
        assert!(peak > 1.03);
    }

    proptest! {
        #[test]
        fn linear_in_activation(c in 0.01..10.0f64, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let weights = WeightVector([1.0, 5.0, 3.0, 5.0]);
            let mut a = PerformanceWindow::new(50);
            let mut b = PerformanceWindow::new(50);
            for _ in 0..120 {
                let m = Activation4(std::array::from_fn(|_| rng.random_range(0.0..1.5)));
                let scaled = Activation4(m.0.map(|x| c * x));
                let ja = performance(&mut a, &m, &weights);
                let jb = performance(&mut b, &scaled, &weights);
                prop_assert!((jb - c * ja).abs() <= 1e-9 * (1.0 + jb.abs()));
            }
        }

        #[test]
        fn additive_in_weights(w1 in prop::array::uniform4(0.1..5.0f64), w2 in prop::array::uniform4(0.1..5.0f64), seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (wa, wb) = (WeightVector(w1), WeightVector(w2));
            let wab = WeightVector(std::array::from_fn(|i| w1[i] + w2[i]));
            let (mut a, mut b, mut ab) = (PerformanceWindow::new(40), PerformanceWindow::new(40), PerformanceWindow::new(40));
            for _ in 0..100 {
                let m = Activation4(std::array::from_fn(|_| rng.random_range(0.0..1.5)));
                let s = performance(&mut a, &m, &wa) + performance(&mut b, &m, &wb);
                let j = performance(&mut ab, &m, &wab);
                prop_assert!((j - s).abs() <= 1e-9 * (1.0 + j.abs()));
            }
        }
    }
}
