/// Running per-feature mean and variance (parallel Welford merge).
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMeanStd {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
    pub clip: f64,
}

impl RunningMeanStd {
    pub fn new(dim: usize, clip: f64) -> Self {
        Self { mean: vec![0.0; dim], var: vec![1.0; dim], count: 1e-4, clip }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Folds a batch of rows into the statistics.
    pub fn update<'a>(&mut self, rows: impl IntoIterator<Item = &'a [f64]>) {
        let d = self.dim();
        let mut n = 0.0;
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        for r in &rows {
            n += 1.0;
            for j in 0..d {
                sum[j] += r[j];
            }
        }
        if n == 0.0 {
            return;
        }
        let bmean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        for r in &rows {
            for j in 0..d {
                let e = r[j] - bmean[j];
                sq[j] += e * e;
            }
        }
        let total = self.count + n;
        for j in 0..d {
            let delta = bmean[j] - self.mean[j];
            let m2 = self.var[j] * self.count + sq[j] + delta * delta * self.count * n / total;
            self.mean[j] += delta * n / total;
            self.var[j] = m2 / total;
        }
        self.count = total;
    }

    pub fn normalize_into(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..self.dim() {
            out[j] = ((x[j] - self.mean[j]) / (self.var[j] + 1e-8).sqrt()).clamp(-self.clip, self.clip);
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.normalize_into(x, &mut out);
        out
    }
}
