use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::nn::{Cache, Mlp, Scalar};
use super::normalize::ObsNormalizer;
use super::LearnError;

pub const LOG_STD_RANGE: (f64, f64) = (-5.0, 2.0);

/// Diagonal-Gaussian actor with a state-independent log-std and a separate
/// value network.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<S: Scalar> {
    pub pi: Mlp<S>,
    pub log_std: Vec<S>,
    pub v: Mlp<S>,
    pub norm: ObsNormalizer,
}

impl<S: Scalar> Policy<S> {
    pub fn new<R: Rng>(obs_dim: usize, act_dim: usize, hidden: &[usize], init_log_std: f64, rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        let mut pi_sizes = sizes.clone();
        pi_sizes.push(act_dim);
        sizes.push(1);
        Self {
            pi: Mlp::init(&pi_sizes, 0.01, rng),
            log_std: vec![S::of(init_log_std); act_dim],
            v: Mlp::init(&sizes, 1.0, rng),
            norm: ObsNormalizer::new(obs_dim),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.pi.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.pi.output_dim()
    }

    /// Normalizes raw observation rows into network inputs.
    pub fn prepare(&self, raw: &[f64]) -> Vec<S> {
        let d = self.obs_dim();
        let mut tmp = vec![0.0; d];
        let mut out = Vec::with_capacity(raw.len());
        for row in raw.chunks(d) {
            self.norm.normalize(row, &mut tmp);
            out.extend(tmp.iter().map(|&x| S::of(x)));
        }
        out
    }

    /// Batched forward on already-normalized inputs.
    pub fn forward_batch(&self, x: &[S], batch: usize) -> (Cache<S>, Cache<S>) {
        (self.pi.forward(x, batch), self.v.forward(x, batch))
    }

    pub fn clamp_log_std(&mut self) {
        for l in &mut self.log_std {
            *l = S::of(l.f64().clamp(LOG_STD_RANGE.0, LOG_STD_RANGE.1));
        }
    }

    pub fn cast<T: Scalar>(&self) -> Policy<T> {
        Policy {
            pi: self.pi.cast(),
            log_std: self.log_std.iter().map(|x| T::of(x.f64())).collect(),
            v: self.v.cast(),
            norm: self.norm.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pi.params.iter().chain(&self.v.params).chain(&self.log_std).all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
}

/// Deterministic single-observation forward pass on a raw observation.
pub fn forward_policy<S: Scalar>(policy: &Policy<S>, obs: &[f64]) -> Result<PolicyOutput, LearnError> {
    if obs.len() != policy.obs_dim() {
        return Err(LearnError::DimensionMismatch {
            expected: policy.obs_dim(),
            got: obs.len(),
        });
    }
    let x = policy.prepare(obs);
    let (pi, v) = policy.forward_batch(&x, 1);
    Ok(PolicyOutput {
        mean: pi.output().iter().map(|x| x.f64()).collect(),
        log_std: policy
            .log_std
            .iter()
            .map(|x| x.f64().clamp(LOG_STD_RANGE.0, LOG_STD_RANGE.1))
            .collect(),
        value: v.output()[0].f64(),
    })
}

pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), l)| {
            let z = (a - m) / l.exp();
            -0.5 * z * z - l - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|l| l + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
}

pub fn sample_action<R: Rng>(mean: &[f64], log_std: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
    let action: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(m, l)| {
            let z: f64 = rng.sample(StandardNormal);
            m + l.clamp(LOG_STD_RANGE.0, LOG_STD_RANGE.1).exp() * z
        })
        .collect();
    let clamped: Vec<f64> = log_std.iter().map(|l| l.clamp(LOG_STD_RANGE.0, LOG_STD_RANGE.1)).collect();
    let lp = gaussian_log_prob(&action, mean, &clamped);
    (action, lp)
}

/// applied = clip(nominal + scale * tanh(residual)) componentwise, with
/// per-component `scale` and bounds.
pub fn compose_residual(nominal: &[f64], residual: &[f64], scale: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    (0..nominal.len())
        .map(|i| (nominal[i] + scale[i] * residual[i].tanh()).clamp(lo[i], hi[i]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = Policy::<f64>::new(4, 2, &[8, 8], 0.0, &mut rng);
        p.pi.params.fill(0.0);
        p.v.params.fill(0.0);
        let out = forward_policy(&p, &[1.0, -2.0, 0.5, 3.0]).unwrap();
        assert_eq!(out.mean, vec![0.0, 0.0]);
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn wrong_obs_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Policy::<f32>::new(4, 2, &[8], 0.0, &mut rng);
        assert_eq!(
            forward_policy(&p, &[0.0; 3]),
            Err(LearnError::DimensionMismatch { expected: 4, got: 3 })
        );
    }

    #[test]
    fn log_prob_at_mean() {
        let lp = gaussian_log_prob(&[0.3], &[0.3], &[0.0]);
        assert!((lp + 0.918938533204673).abs() < 1e-12);
    }

    #[test]
    fn tiny_std_samples_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, _) = sample_action(&[0.5, -0.5], &[-50.0, -50.0], &mut rng);
        assert!((a[0] - 0.5).abs() < 0.05 && (a[1] + 0.5).abs() < 0.05);
    }

    #[test]
    fn sampling_is_reproducible() {
        let a = sample_action(&[0.0; 3], &[0.0; 3], &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_action(&[0.0; 3], &[0.0; 3], &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn residual_composition() {
        let lo = [-0.05, 0.0];
        let hi = [0.05, 1.0];
        assert_eq!(compose_residual(&[0.01, 0.9], &[0.0, 0.0], &[0.005, 0.1], &lo, &hi), vec![0.01, 0.9]);
        assert_eq!(compose_residual(&[0.01, 0.9], &[9.0, -3.0], &[0.0, 0.0], &lo, &hi), vec![0.01, 0.9]);
        let a = compose_residual(&[0.04], &[40.0], &[0.01], &lo[..1], &hi[..1]);
        assert!((a[0] - 0.05).abs() < 1e-15);
    }
}
