//! Linear β schedule and the closed-form forward process.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ScheduleSpec", into = "ScheduleSpec")]
pub struct NoiseSchedule {
    steps: usize,
    beta_start: f64,
    beta_end: f64,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleSpec {
    steps: usize,
    beta_start: f64,
    beta_end: f64,
}

impl From<ScheduleSpec> for NoiseSchedule {
    fn from(s: ScheduleSpec) -> Self {
        NoiseSchedule::linear(s.steps, s.beta_start, s.beta_end)
    }
}

impl From<NoiseSchedule> for ScheduleSpec {
    fn from(s: NoiseSchedule) -> Self {
        ScheduleSpec { steps: s.steps, beta_start: s.beta_start, beta_end: s.beta_end }
    }
}

impl Default for NoiseSchedule {
    /// T = 100 with β from 1e-4 to 0.1, which drives ᾱ_T to about 6e-3.
    fn default() -> Self {
        Self::linear(100, 1e-4, 0.1)
    }
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Self {
        assert!(steps >= 1, "schedule needs at least one step");
        assert!(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0, "invalid β endpoints");
        let betas: Vec<f64> = (0..steps)
            .map(|i| if steps == 1 { beta_start } else { beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64 })
            .collect();
        let mut acc = 1.0;
        let alpha_bars = betas
            .iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Self { steps, beta_start, beta_end, betas, alpha_bars }
    }

    /// Number of diffusion steps T.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn beta_range(&self) -> (f64, f64) {
        (self.beta_start, self.beta_end)
    }

    /// β_t for `1 ≤ t ≤ T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// ᾱ_t for `0 ≤ t ≤ T`, with ᾱ_0 = 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }
}

/// `√ᾱ_t·x0 + √(1−ᾱ_t)·ε`, element-wise.
pub fn forward_diffuse(x0: [f64; 3], t: usize, eps: [f64; 3], schedule: &NoiseSchedule) -> [f64; 3] {
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    [a * x0[0] + b * eps[0], a * x0[1] + b * eps[1], a * x0[2] + b * eps[2]]
}

/// Sinusoidal features of `t/T`: `sin(ω_k t/T), cos(ω_k t/T)` with
/// `ω_k = (π/2)·2^k`, interleaved, `dim/2` frequencies.
pub fn timestep_embedding(t: usize, steps: usize, dim: usize, out: &mut [f64]) {
    let s = t as f64 / steps as f64;
    for k in 0..dim / 2 {
        let w = std::f64::consts::FRAC_PI_2 * (1u64 << k) as f64;
        let (sn, cs) = (w * s).sin_cos();
        out[2 * k] = sn;
        out[2 * k + 1] = cs;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn schedule_shape() {
        let s = NoiseSchedule::default();
        assert!(s.alpha_bar(s.steps()) < 1e-2);
        for t in 1..=s.steps() {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
        }
        assert!(s.beta(1) < s.beta(s.steps()));
    }

    #[test]
    fn closed_form_examples() {
        // A one-step schedule with β = 0.75 gives ᾱ_1 = 0.25.
        let s = NoiseSchedule::linear(1, 0.75, 0.75);
        let x = forward_diffuse([0.0; 3], 1, [1.0; 3], &s);
        for v in x {
            assert!((v - 0.75f64.sqrt()).abs() < 1e-15);
        }
        let d = NoiseSchedule::default();
        let x = forward_diffuse([0.3, -0.2, 0.9], 1, [1.0; 3], &d);
        assert!((x[0] - 0.3).abs() < 0.011);
    }

    #[test]
    fn marginal_moments() {
        let s = NoiseSchedule::default();
        let mut rng = crate::rng::seeded(9);
        let x0 = [0.5, -0.25, 0.8];
        let n = 10_000;
        for t in [1, 20, 60, 100] {
            let ab = s.alpha_bar(t);
            let mut sum = [0.0; 3];
            let mut sq = [0.0; 3];
            for _ in 0..n {
                let e: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                let x = forward_diffuse(x0, t, e, &s);
                for c in 0..3 {
                    sum[c] += x[c];
                    sq[c] += x[c] * x[c];
                }
            }
            for c in 0..3 {
                let mean = sum[c] / n as f64;
                let var = sq[c] / n as f64 - mean * mean;
                let v = 1.0 - ab;
                assert!((mean - ab.sqrt() * x0[c]).abs() < 3.0 * (v / n as f64).sqrt(), "mean t={t}");
                // Standard error of a Gaussian sample variance is v·√(2/n).
                assert!((var - v).abs() < 3.0 * v * (2.0 / n as f64).sqrt(), "var t={t}");
            }
        }
    }

    #[test]
    fn serde_roundtrip_rebuilds_tables() {
        let s = NoiseSchedule::default();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"steps":100,"beta_start":0.0001,"beta_end":0.1}"#);
        assert_eq!(serde_json::from_str::<NoiseSchedule>(&j).unwrap(), s);
    }
}
