use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::RawSeries;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Parameters of the coupled-sinusoid generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub num_vars: usize,
    pub len: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    /// Weight of the neighbouring variable's oscillation in each series.
    pub coupling: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_vars: 8,
            len: 2000,
            noise: 0.1,
            coupling: 0.5,
            seed: 0,
        }
    }
}

/// `N` sinusoids, each mixed with its neighbour's phase-shifted oscillation,
/// plus seeded Gaussian noise.
///
/// Variable `v` has period `P_v ∈ [16, 64)` and phase `φ_v`; its value is
/// `sin(2πt/P_v + φ_v) + κ·sin(2πt/P_{v+1} + φ_{v+1} + π/4) + ε`.
pub fn coupled_sinusoids(spec: &SyntheticSpec) -> Result<RawSeries> {
    if spec.num_vars == 0 || spec.len == 0 {
        return Err(Error::config("synthetic", "num_vars and len must be positive"));
    }
    if !(spec.noise >= 0.0) {
        return Err(Error::config("noise", "must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_vars;
    let periods: Vec<f64> = (0..n).map(|_| rng.random_range(16.0..64.0)).collect();
    let phases: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::config("noise", e.to_string()))?;
    let mut data = Vec::with_capacity(n * spec.len);
    for v in 0..n {
        let w = (v + 1) % n;
        for t in 0..spec.len {
            let t = t as f64;
            let own = (TAU * t / periods[v] + phases[v]).sin();
            let coupled = (TAU * t / periods[w] + phases[w] + TAU / 8.0).sin();
            data.push(own + spec.coupling * coupled + noise.sample(&mut rng));
        }
    }
    Ok(RawSeries {
        values: Tensor::matrix(n, spec.len, data)?,
        variable_names: Some((0..n).map(|v| format!("s{v}")).collect()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_shaped() {
        let spec = SyntheticSpec { num_vars: 3, len: 100, ..Default::default() };
        let a = coupled_sinusoids(&spec).unwrap();
        assert_eq!((a.num_vars(), a.len()), (3, 100));
        assert_eq!(a, coupled_sinusoids(&spec).unwrap());
        let b = coupled_sinusoids(&SyntheticSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.values, b.values);
        assert!(a.values.is_finite());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = coupled_sinusoids(&SyntheticSpec { num_vars: 2, len: 30, ..Default::default() }).unwrap();
        s.write_csv(&p).unwrap();
        let back = super::super::load_series(&p, &Default::default()).unwrap();
        assert_eq!(back, s);
    }
}
