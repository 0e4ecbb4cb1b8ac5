//! Small numeric helpers shared by the learners. All transcendental functions
//! go through `libm` so results are identical with and without `std`.

use alloc::vec::Vec;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// In-place softmax; returns `log(sum(exp(z)))` of the input.
pub fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = exp(*v - max);
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + ln(sum)
}

/// Index of the largest entry, the lowest index among ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = j;
        }
    }
    best
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(v: &[f64]) -> f64 {
    let mu = mean(v);
    let ss: f64 = v.iter().map(|x| (x - mu) * (x - mu)).sum();
    sqrt(ss / (v.len() as f64 - 1.0))
}

/// Per-column mean and standard deviation fitted on training rows.
///
/// Constant columns get a unit scale so they map to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, m: usize) -> Self {
        let mut sum = alloc::vec![0.0; m];
        let mut sumsq = alloc::vec![0.0; m];
        let mut n = 0usize;
        let rows: Vec<&[f64]> = rows.collect();
        for row in &rows {
            for (s, x) in sum.iter_mut().zip(row.iter()) {
                *s += x;
            }
            n += 1;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for row in &rows {
            for ((s, x), mu) in sumsq.iter_mut().zip(row.iter()).zip(&mean) {
                *s += (x - mu) * (x - mu);
            }
        }
        let scale = sumsq
            .iter()
            .map(|s| {
                let sd = if n > 1 { sqrt(s / (n as f64 - 1.0)) } else { 0.0 };
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, mu), s)| (v - mu) / s)
            .collect()
    }

    pub fn transform_into(&self, x: &[f64], out: &mut [f64]) {
        for (((o, v), mu), s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.scale) {
            *o = (v - mu) / s;
        }
    }
}
