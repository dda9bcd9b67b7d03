//! Monte Carlo accumulators and a chunked parallel driver.
//!
//! Work is cut into fixed-size chunks; chunk `i` draws from
//! `base.split(i)` and partial statistics are merged in chunk order, so the
//! result depends only on the stream and `n`, never on the thread count.

use rayon::prelude::*;

use crate::rng::RandomStream;

pub const CHUNK: usize = 8192;

/// Running mean/variance (Welford), mergeable with Chan's update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScalarStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl ScalarStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &ScalarStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Per-coordinate [`ScalarStats`].
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStats {
    coords: Vec<ScalarStats>,
}

impl VectorStats {
    pub fn new(d: usize) -> Self {
        Self {
            coords: vec![ScalarStats::default(); d],
        }
    }

    pub fn push(&mut self, v: &[f64]) {
        for (c, x) in self.coords.iter_mut().zip(v) {
            c.push(*x);
        }
    }

    pub fn merge(&mut self, other: &VectorStats) {
        for (a, b) in self.coords.iter_mut().zip(&other.coords) {
            a.merge(b);
        }
    }

    pub fn count(&self) -> u64 {
        self.coords.first().map_or(0, ScalarStats::count)
    }

    pub fn mean(&self) -> Vec<f64> {
        self.coords.iter().map(ScalarStats::mean).collect()
    }

    pub fn std_err(&self) -> Vec<f64> {
        self.coords.iter().map(ScalarStats::std_err).collect()
    }

    /// Trace of the sample covariance.
    pub fn cov_trace(&self) -> f64 {
        self.coords.iter().map(ScalarStats::variance).sum()
    }
}

/// Shifted power sums up to order four, for central-moment estimates.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PowerSums {
    n: u64,
    shift: f64,
    s: [f64; 4],
}

impl PowerSums {
    pub fn with_shift(shift: f64) -> Self {
        Self {
            shift,
            ..Default::default()
        }
    }

    pub fn push(&mut self, x: f64) {
        let y = x - self.shift;
        let mut p = 1.0;
        for s in &mut self.s {
            p *= y;
            *s += p;
        }
        self.n += 1;
    }

    pub fn merge(&mut self, other: &PowerSums) {
        debug_assert_eq!(self.shift, other.shift);
        self.n += other.n;
        for (a, b) in self.s.iter_mut().zip(&other.s) {
            *a += b;
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.shift + self.s[0] / self.n as f64
    }

    pub fn central_moment_4(&self) -> f64 {
        let n = self.n as f64;
        let [e1, e2, e3, e4] = self.s.map(|v| v / n);
        let m = e1;
        (e4 - 4.0 * m * e3 + 6.0 * m * m * e2 - 3.0 * m.powi(4)).max(0.0)
    }
}

/// Run `n` scalar draws in parallel chunks; `f` receives the chunk's stream.
pub fn par_scalar<F>(stream: &mut RandomStream, n: usize, f: F) -> ScalarStats
where
    F: Fn(&mut RandomStream) -> f64 + Sync,
{
    par_fold(
        stream,
        n,
        ScalarStats::default,
        |acc, s| acc.push(f(s)),
        |a, b| a.merge(b),
    )
}

/// Vector-valued counterpart of [`par_scalar`]. `f` writes one draw into the
/// provided buffer of length `d`.
pub fn par_vector<F>(stream: &mut RandomStream, n: usize, d: usize, f: F) -> VectorStats
where
    F: Fn(&mut RandomStream, &mut [f64]) + Sync,
{
    par_fold(
        stream,
        n,
        || (VectorStats::new(d), vec![0.0; d]),
        |(acc, buf), s| {
            f(s, buf);
            acc.push(buf);
        },
        |a, b| a.0.merge(&b.0),
    )
    .0
}

/// Generic chunked fold. Advances `stream` by exactly one draw.
pub fn par_fold<A, I, P, M>(stream: &mut RandomStream, n: usize, init: I, push: P, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    P: Fn(&mut A, &mut RandomStream) + Sync,
    M: Fn(&mut A, &A),
{
    let base = stream.fork();
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut s = base.split(c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            let mut acc = init();
            for _ in 0..len {
                push(&mut acc, &mut s);
            }
            acc
        })
        .collect();
    let mut out = init();
    for p in &parts {
        merge(&mut out, p);
    }
    out
}
