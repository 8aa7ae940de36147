use std::collections::BinaryHeap;

use super::OptimError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Target relative error of the total.
    pub rel_tol: f64,
    /// Absolute error floor, used when the integral is (close to) zero.
    pub abs_tol: f64,
    /// Number of equal pieces (0,1) is split into before adaptation.
    pub initial_subdivisions: usize,
    pub max_subdivisions: usize,
}

impl QuadratureOptions {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self { rel_tol, ..Self::default() }
    }
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-300, initial_subdivisions: 8, max_subdivisions: 4000 }
    }
}

/// ∫₀^∞ f(y) dy to relative error `rel_tol`.
pub fn integrate_semi_infinite<F>(f: F, rel_tol: f64) -> Result<f64, OptimError>
where
    F: Fn(f64) -> f64,
{
    integrate_semi_infinite_with(f, &QuadratureOptions::with_rel_tol(rel_tol))
}

/// Globally adaptive 15-point Gauss–Kronrod on (0,1) after y = t/(1−t).
pub fn integrate_semi_infinite_with<F>(f: F, opts: &QuadratureOptions) -> Result<f64, OptimError>
where
    F: Fn(f64) -> f64,
{
    let h = |t: f64| {
        let s = 1.0 - t;
        let v = f(t / s) / (s * s);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };

    let pieces = opts.initial_subdivisions.max(1);
    let mut heap = BinaryHeap::with_capacity(pieces * 2);
    for k in 0..pieces {
        let a = k as f64 / pieces as f64;
        let b = (k + 1) as f64 / pieces as f64;
        heap.push(gk15(&h, a, b));
    }

    let target = |total: f64| (opts.rel_tol * total.abs()).max(opts.abs_tol);
    let mut count = pieces;
    loop {
        let (total, err) = heap.iter().fold((0.0, 0.0), |(s, e), seg: &Segment| (s + seg.value, e + seg.error));
        if err <= target(total) {
            return Ok(total);
        }
        if count >= opts.max_subdivisions {
            return Err(OptimError::NonConvergentQuadrature { estimate: total, error: err });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(OptimError::NonConvergentQuadrature { estimate: total, error: err });
        }
        heap.push(gk15(&h, worst.a, mid));
        heap.push(gk15(&h, mid, worst.b));
        count += 1;
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error).is_eq()
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (7-point rule).
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15<H: Fn(f64) -> f64>(h: &H, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = h(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = r * XGK[j];
        let pair = h(c - dx) + h(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * r;
    let error = ((kronrod - gauss) * r).abs();
    Segment { a, b, value, error }
}
