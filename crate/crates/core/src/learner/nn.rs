//! Dense tanh networks with hand-written reverse mode, batched through GEMM.

use std::fmt::Debug;

use num_traits::Float;
use rand::Rng;

/// Float types the networks can run in. Training uses `f32`; gradient
/// checks use `f64`.
pub trait Scalar: Float + Default + Debug + Send + Sync + 'static {
    fn of(x: f64) -> Self;
    fn f64(self) -> f64;

    /// c = alpha * op(a) * op(b) + beta * c, all row-major, where op(a) is
    /// m x k and op(b) is k x n.
    #[allow(clippy::too_many_arguments)]
    fn gemm(ta: bool, tb: bool, m: usize, k: usize, n: usize, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]);
}

fn strides(trans: bool, rows: usize, cols: usize) -> (isize, isize) {
    // op(x) is rows x cols; x itself is stored row-major
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:ident) => {
        impl Scalar for $t {
            fn of(x: f64) -> Self {
                x as $t
            }

            fn f64(self) -> f64 {
                self as f64
            }

            fn gemm(ta: bool, tb: bool, m: usize, k: usize, n: usize, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                let (rsa, csa) = strides(ta, m, k);
                let (rsb, csb) = strides(tb, k, n);
                // SAFETY: the asserts above bound every index the kernel touches.
                unsafe {
                    matrixmultiply::$gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, sgemm);
impl_scalar!(f64, dgemm);

/// Multi-layer perceptron: tanh on every hidden layer, linear output.
/// Parameters live in one flat vector, layer by layer, each layer as
/// (weights in x out row-major, then biases).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<S: Scalar> {
    pub sizes: Vec<usize>,
    pub params: Vec<S>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Cache<S: Scalar> {
    pub batch: usize,
    acts: Vec<Vec<S>>,
}

impl<S: Scalar> Cache<S> {
    pub fn output(&self) -> &[S] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

pub fn n_params(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<S: Scalar> Mlp<S> {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        Self {
            sizes: sizes.to_vec(),
            params: vec![S::zero(); n_params(sizes)],
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases; the
    /// last layer is scaled by `out_gain`.
    pub fn init<R: Rng>(sizes: &[usize], out_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let n_layers = sizes.len() - 1;
        let mut at = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let bound = (1.0 / w[0] as f64).sqrt() * if l + 1 == n_layers { out_gain } else { 1.0 };
            for p in &mut net.params[at..at + w[0] * w[1]] {
                *p = S::of(rng.random_range(-bound..=bound));
            }
            at += w[0] * w[1] + w[1];
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layer(&self, l: usize) -> (usize, usize, usize) {
        let at: usize = self.sizes[..l + 1].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        (at, self.sizes[l], self.sizes[l + 1])
    }

    /// Forward pass over `batch` rows of `input`.
    pub fn forward(&self, input: &[S], batch: usize) -> Cache<S> {
        assert_eq!(input.len(), batch * self.input_dim());
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(input.to_vec());
        for l in 0..n_layers {
            let (at, fan_in, fan_out) = self.layer(l);
            let w = &self.params[at..at + fan_in * fan_out];
            let b = &self.params[at + fan_in * fan_out..at + fan_in * fan_out + fan_out];
            let mut z = Vec::with_capacity(batch * fan_out);
            for _ in 0..batch {
                z.extend_from_slice(b);
            }
            S::gemm(false, false, batch, fan_in, fan_out, &acts[l], w, S::one(), &mut z);
            if l + 1 < n_layers {
                for v in &mut z {
                    *v = v.tanh();
                }
            }
            acts.push(z);
        }
        Cache { batch, acts }
    }

    /// Accumulates dL/dparams into `grad` given dL/doutput.
    pub fn backward(&self, cache: &Cache<S>, d_out: &[S], grad: &mut [S]) {
        let batch = cache.batch;
        let n_layers = self.sizes.len() - 1;
        assert_eq!(d_out.len(), batch * self.output_dim());
        assert_eq!(grad.len(), self.params.len());
        let mut delta = d_out.to_vec();
        for l in (0..n_layers).rev() {
            let (at, fan_in, fan_out) = self.layer(l);
            let x = &cache.acts[l];
            // dW += x^T delta
            S::gemm(true, false, fan_in, batch, fan_out, x, &delta, S::one(), &mut grad[at..at + fan_in * fan_out]);
            let gb = &mut grad[at + fan_in * fan_out..at + fan_in * fan_out + fan_out];
            for row in delta.chunks(fan_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g = *g + *d;
                }
            }
            if l == 0 {
                break;
            }
            // delta_prev = (delta W^T) * (1 - x^2), x being tanh outputs
            let w = &self.params[at..at + fan_in * fan_out];
            let mut prev = vec![S::zero(); batch * fan_in];
            S::gemm(false, true, batch, fan_out, fan_in, &delta, w, S::zero(), &mut prev);
            for (p, a) in prev.iter_mut().zip(x) {
                *p = *p * (S::one() - *a * *a);
            }
            delta = prev;
        }
    }

    pub fn cast<T: Scalar>(&self) -> Mlp<T> {
        Mlp {
            sizes: self.sizes.clone(),
            params: self.params.iter().map(|p| T::of(p.f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gemm_transposes() {
        // a = [[1,2,3],[4,5,6]], b = [[1,0],[0,1],[1,1]]
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0f64; 4];
        f64::gemm(false, false, 2, 3, 2, &a, &b, 0.0, &mut c);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // a^T a is 3x3
        let mut d = [0.0f64; 9];
        f64::gemm(true, false, 3, 2, 3, &a, &a, 0.0, &mut d);
        assert_eq!(d, [17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
        // a a^T is 2x2
        let mut e = [1.0f64; 4];
        f64::gemm(false, true, 2, 3, 2, &a, &a, 1.0, &mut e);
        assert_eq!(e, [15.0, 33.0, 33.0, 78.0]);
    }

    #[test]
    fn one_unit_forward_by_hand() {
        // 2 -> 1 -> 1
        let mut net = Mlp::<f64>::zeros(&[2, 1, 1]);
        net.params.copy_from_slice(&[0.5, -1.0, 0.25, 2.0, -0.5]);
        let out = net.forward(&[1.0, 2.0], 1);
        let h = (0.5 * 1.0 - 1.0 * 2.0 + 0.25f64).tanh();
        assert!((out.output()[0] - (2.0 * h - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::<f64>::init(&[3, 4, 4, 2], 1.0, &mut rng);
        let x: Vec<f64> = (0..9).map(|i| (i as f64 * 0.37).sin()).collect();
        let w = [0.3, -1.2];
        let loss = |n: &Mlp<f64>| -> f64 {
            let c = n.forward(&x, 3);
            c.output().chunks(2).map(|r| w[0] * r[0] + w[1] * r[1] * r[1]).sum()
        };
        let c = net.forward(&x, 3);
        let d_out: Vec<f64> = c.output().chunks(2).flat_map(|r| [w[0], 2.0 * w[1] * r[1]]).collect();
        let mut g = vec![0.0; net.params.len()];
        net.backward(&c, &d_out, &mut g);
        for i in 0..net.params.len() {
            let mut p = net.clone();
            p.params[i] += 1e-6;
            let mut m = net.clone();
            m.params[i] -= 1e-6;
            let fd = (loss(&p) - loss(&m)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-7 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", g[i]);
        }
    }
}
