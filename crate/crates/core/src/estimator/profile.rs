use super::EstimatorError;

const MONOTONE_SLACK: f64 = 1e-12;

/// Piecewise-linear transmittance T(t) along one ray.
///
/// The CDF used for importance sampling is `F = 1 − T`; it is never stored
/// separately. Outside `[t_enter, t_exit]` the profile is held constant.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmittanceProfile {
    breakpoints: Vec<f64>,
    transmittance: Vec<f64>,
}

impl TransmittanceProfile {
    /// Validates and stores a profile. Breakpoints must be finite and strictly
    /// ascending, `T[0]` must be exactly 1, and T must be non-increasing in
    /// `[0, 1]`. Rises below 1e-12 are clamped away.
    pub fn new(breakpoints: Vec<f64>, mut transmittance: Vec<f64>) -> Result<Self, EstimatorError> {
        if breakpoints.len() < 2 || breakpoints.len() != transmittance.len() {
            return Err(EstimatorError::Profile(format!(
                "need at least two breakpoints with matching values, got {} and {}",
                breakpoints.len(),
                transmittance.len()
            )));
        }
        if breakpoints.iter().any(|t| !t.is_finite())
            || breakpoints.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(EstimatorError::Profile(
                "breakpoints must be finite and strictly ascending".into(),
            ));
        }
        if transmittance[0] != 1.0 {
            return Err(EstimatorError::Profile(format!(
                "transmittance must start at exactly 1, got {}",
                transmittance[0]
            )));
        }
        for i in 1..transmittance.len() {
            let (prev, cur) = (transmittance[i - 1], transmittance[i]);
            if !(0.0..=1.0).contains(&cur) {
                return Err(EstimatorError::Profile(format!(
                    "T[{i}] = {cur} is outside [0, 1]"
                )));
            }
            if cur > prev + MONOTONE_SLACK {
                return Err(EstimatorError::Profile(format!(
                    "T rises from {prev} to {cur} at index {i}"
                )));
            }
            transmittance[i] = cur.min(prev);
        }
        Ok(Self {
            breakpoints,
            transmittance,
        })
    }

    /// T ≡ 1 over `[t0, t1]`: nothing to sample.
    pub fn trivial(t0: f64, t1: f64) -> Self {
        debug_assert!(t1 > t0);
        Self {
            breakpoints: vec![t0, t1],
            transmittance: vec![1.0, 1.0],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn transmittance(&self) -> &[f64] {
        &self.transmittance
    }

    pub fn len(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t_enter(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn t_exit(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Linear interpolation of T.
    pub fn eval(&self, t: f64) -> f64 {
        let bp = &self.breakpoints;
        if t <= bp[0] {
            return 1.0;
        }
        if t >= self.t_exit() {
            return *self.transmittance.last().unwrap();
        }
        let j = bp.partition_point(|&b| b <= t);
        let (t0, t1) = (bp[j - 1], bp[j]);
        let (a, b) = (self.transmittance[j - 1], self.transmittance[j]);
        let w = (t - t0) / (t1 - t0);
        a + w * (b - a)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        1.0 - self.eval(t)
    }

    /// F(t_exit): the opacity the profile captures.
    pub fn total_opacity(&self) -> f64 {
        1.0 - self.transmittance.last().unwrap()
    }

    /// Maximal `[start, end]` runs on which F is strictly increasing.
    pub fn support(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for i in 0..self.len() - 1 {
            if self.transmittance[i + 1] < self.transmittance[i] {
                let (a, b) = (self.breakpoints[i], self.breakpoints[i + 1]);
                match out.last_mut() {
                    Some(last) if last.1 == a => last.1 = b,
                    _ => out.push((a, b)),
                }
            }
        }
        out
    }

    pub fn support_length(&self) -> f64 {
        self.support().iter().map(|(a, b)| b - a).sum()
    }

    /// Solves `F(t) = u · F(t_exit)` for `u ∈ [0, 1)`, only ever landing on
    /// strictly increasing segments. `None` when the profile carries no
    /// opacity.
    pub fn inverse_cdf(&self, u: f64) -> Option<f64> {
        let total = self.total_opacity();
        if !(total > 0.0) {
            return None;
        }
        let target = u.clamp(0.0, 1.0) * total;
        // F_j > target, with F_{j-1} <= target: segment [j-1, j] rises.
        let j = self
            .transmittance
            .partition_point(|&t| 1.0 - t <= target)
            .clamp(1, self.len() - 1);
        let f0 = 1.0 - self.transmittance[j - 1];
        let f1 = 1.0 - self.transmittance[j];
        let (t0, t1) = (self.breakpoints[j - 1], self.breakpoints[j]);
        if !(f1 > f0) {
            // Only reachable for u = 1 exactly: the end of the last rising segment.
            return self.support().last().map(|s| s.1);
        }
        let w = ((target - f0) / (f1 - f0)).clamp(0.0, 1.0);
        Some(t0 + w * (t1 - t0))
    }
}
