use serde::Serialize;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    /// Independent samples behind the estimate (antithetic pairs count once).
    pub n: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            se: 0.0,
            n: 0,
        }
    }

    /// `(mean − reference)/se`; infinite when `se = 0` and they differ.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = self.mean - reference;
        if d == 0.0 {
            0.0
        } else {
            d / self.se
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            mean: c * self.mean,
            se: c.abs() * self.se,
            n: self.n,
        }
    }
}

/// Streaming mean and variance, mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn estimate(&self) -> Estimate {
        let se = if self.n > 1 {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        } else {
            f64::INFINITY
        };
        Estimate {
            mean: self.mean,
            se,
            n: self.n,
        }
    }
}

/// Per-path samples; with antithetic sampling, partners `2k` and `2k+1`
/// are averaged into one independent sample.
#[derive(Debug, Clone, Default)]
pub struct PathSamples {
    antithetic: bool,
    pending: Option<f64>,
    moments: Moments,
}

impl PathSamples {
    pub fn new(antithetic: bool) -> Self {
        Self {
            antithetic,
            pending: None,
            moments: Moments::default(),
        }
    }

    /// Paths must arrive in index order within a block.
    #[inline]
    pub fn push(&mut self, path: usize, v: f64) {
        if !self.antithetic {
            self.moments.push(v);
        } else if path.is_multiple_of(2) {
            if let Some(p) = self.pending.replace(v) {
                self.moments.push(p);
            }
        } else {
            let a = self.pending.take().unwrap_or(v);
            self.moments.push(0.5 * (a + v));
        }
    }

    pub fn merge(&mut self, mut other: PathSamples) {
        if let Some(p) = self.pending.take() {
            self.moments.push(p);
        }
        if let Some(p) = other.pending.take() {
            other.moments.push(p);
        }
        self.moments.merge(&other.moments);
    }

    pub fn estimate(&self) -> Estimate {
        let mut m = self.moments;
        if let Some(p) = self.pending {
            m.push(p);
        }
        m.estimate()
    }
}
