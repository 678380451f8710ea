#![allow(dead_code)]

use std::sync::OnceLock;

use msgate::hilbert::{FockCutoff, C64};
use msgate::magnus::CoefficientTable;

pub fn table() -> &'static CoefficientTable {
    static TABLE: OnceLock<CoefficientTable> = OnceLock::new();
    TABLE.get_or_init(|| CoefficientTable::calibrated_default().expect("calibrated table"))
}

pub fn cutoff() -> FockCutoff {
    FockCutoff::new(40)
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// ⟨m|D(α)|n⟩ through associated Laguerre polynomials evaluated by their three-term recurrence.
pub fn laguerre_displacement(m: usize, n: usize, alpha: C64) -> C64 {
    let x = alpha.norm_sqr();
    let (lo, hi) = (m.min(n), m.max(n));
    let k = (hi - lo) as f64;
    let mut l_prev = 1.0;
    let mut l = 1.0 + k - x;
    let lag = if lo == 0 {
        1.0
    } else {
        for j in 1..lo {
            let j = j as f64;
            let next = ((2.0 * j + 1.0 + k - x) * l - (j + k) * l_prev) / (j + 1.0);
            l_prev = l;
            l = next;
        }
        l
    };
    let mut ratio = 1.0;
    for j in (lo + 1)..=hi {
        ratio /= j as f64;
    }
    let pref = ratio.sqrt() * (-x / 2.0).exp() * lag;
    let power = if m >= n { alpha.powu((m - n) as u32) } else { (-alpha.conj()).powu((n - m) as u32) };
    power * pref
}

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration on P_k.
pub fn gauss_legendre(k: usize) -> Vec<(f64, f64)> {
    (0..k)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=k {
                    let j = j as f64;
                    let p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                    p0 = p1;
                    p1 = p2;
                }
                dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Composite Gauss–Legendre rule on [a, b] with `panels` panels of `k` nodes.
pub fn composite_nodes(a: f64, b: f64, panels: usize, k: usize) -> Vec<(f64, f64)> {
    let gl = gauss_legendre(k);
    let h = (b - a) / panels as f64;
    (0..panels)
        .flat_map(|p| {
            let mid = a + h * (p as f64 + 0.5);
            gl.iter().map(move |&(x, w)| (mid + 0.5 * h * x, 0.5 * h * w)).collect::<Vec<_>>()
        })
        .collect()
}
