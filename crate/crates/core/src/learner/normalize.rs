/// Running mean and variance of observations (parallel Welford merge).
#[derive(Debug, Clone, PartialEq)]
pub struct ObsNormalizer {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub clip: f64,
}

impl ObsNormalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            clip: 10.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Folds in a batch of rows.
    pub fn update(&mut self, rows: &[f64]) {
        let d = self.dim();
        let n = (rows.len() / d) as f64;
        if n == 0.0 {
            return;
        }
        let mut bm = vec![0.0; d];
        for r in rows.chunks(d) {
            for (m, x) in bm.iter_mut().zip(r) {
                *m += x;
            }
        }
        bm.iter_mut().for_each(|m| *m /= n);
        let mut bm2 = vec![0.0; d];
        for r in rows.chunks(d) {
            for ((s, x), m) in bm2.iter_mut().zip(r).zip(&bm) {
                *s += (x - m) * (x - m);
            }
        }
        let total = self.count + n;
        for i in 0..d {
            let delta = bm[i] - self.mean[i];
            self.mean[i] += delta * n / total;
            self.m2[i] += bm2[i] + delta * delta * self.count * n / total;
        }
        self.count = total;
    }

    pub fn std(&self, i: usize) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            (self.m2[i] / self.count).sqrt().max(1e-4)
        }
    }

    pub fn normalize(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = ((x[i] - self.mean[i]) / self.std(i)).clamp(-self.clip, self.clip);
        }
    }
}
