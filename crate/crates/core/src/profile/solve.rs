//! Bounded Levenberg–Marquardt inversion of the press model.

use crate::chart::InkCoverage;
use crate::color::{lab_to_xyz, Lab};
use crate::press::Predictor;

/// Solves stop as soon as the color difference drops below this.
pub(crate) const CONVERGED_DE: f64 = 1e-3;
const MAX_ITER: usize = 40;
const STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Solution {
    pub coverage: InkCoverage,
    pub delta_e: f64,
}

/// Euclidean projection onto `{0 <= x_i <= 1, sum x <= limit}`.
fn project<const D: usize>(x: [f64; D], limit: f64) -> [f64; D] {
    let clipped = x.map(|v| v.clamp(0.0, 1.0));
    if clipped.iter().sum::<f64>() <= limit {
        return clipped;
    }
    let limit = limit.max(0.0);
    let sum_at = |tau: f64| x.iter().map(|v| (v - tau).clamp(0.0, 1.0)).sum::<f64>();
    let (mut lo, mut hi) = (
        x.iter().copied().fold(f64::INFINITY, f64::min) - 1.0,
        x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if sum_at(mid) > limit {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    x.map(|v| (v - hi).clamp(0.0, 1.0))
}

/// Gaussian elimination with partial pivoting.
fn solve_linear<const D: usize>(mut m: [[f64; D]; D], mut b: [f64; D]) -> Option<[f64; D]> {
    for col in 0..D {
        let pivot = (col..D).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..D {
            let f = m[row][col] / m[col][col];
            let pivot = m[col];
            for (x, p) in m[row][col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; D];
    for row in (0..D).rev() {
        let tail: f64 = (row + 1..D).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / m[row][row];
    }
    Some(x)
}

fn residual(lab: Lab, target: Lab) -> [f64; 3] {
    [lab.l - target.l, lab.a - target.a, lab.b - target.b]
}

/// Minimizes ΔE76 over `D` free inks; `assemble` turns the free variables
/// into a full coverage. Returns the best point over all starts.
fn minimize<const D: usize>(
    pred: &Predictor,
    target: Lab,
    limit: f64,
    accept: f64,
    starts: &[[f64; D]],
    assemble: impl Fn(&[f64; D]) -> InkCoverage,
) -> Solution {
    let eval = |x: &[f64; D]| {
        let lab = pred.predict(&assemble(x));
        (residual(lab, target), lab)
    };
    let mut best = Solution {
        coverage: assemble(&[0.0; D]),
        delta_e: f64::INFINITY,
    };
    for start in starts {
        let mut x = project(*start, limit);
        let (mut r, _) = eval(&x);
        let mut cost: f64 = r.iter().map(|v| v * v).sum();
        let mut lambda = 1e-3;
        for _ in 0..MAX_ITER {
            if cost.sqrt() < accept {
                break;
            }
            let mut jac = [[0.0; D]; 3];
            for j in 0..D {
                let mut xp = x;
                let h = if x[j] + STEP <= 1.0 { STEP } else { -STEP };
                xp[j] += h;
                let (rp, _) = eval(&xp);
                for i in 0..3 {
                    jac[i][j] = (rp[i] - r[i]) / h;
                }
            }
            let mut jtj = [[0.0; D]; D];
            let mut g = [0.0; D];
            for a in 0..D {
                g[a] = (0..3).map(|i| jac[i][a] * r[i]).sum();
                for b in 0..D {
                    jtj[a][b] = (0..3).map(|i| jac[i][a] * jac[i][b]).sum();
                }
            }
            let mut improved = false;
            for _ in 0..8 {
                let mut m = jtj;
                for d in 0..D {
                    m[d][d] += lambda * (jtj[d][d] + 1e-9);
                }
                let Some(step) = solve_linear(m, g) else {
                    lambda *= 4.0;
                    continue;
                };
                let mut cand = x;
                for d in 0..D {
                    cand[d] -= step[d];
                }
                let cand = project(cand, limit);
                let (rc, _) = eval(&cand);
                let cc: f64 = rc.iter().map(|v| v * v).sum();
                if cc < cost {
                    let moved = cand.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    x = cand;
                    r = rc;
                    let gain = cost - cc;
                    cost = cc;
                    lambda = (lambda / 3.0).max(1e-9);
                    improved = moved > 1e-10 && gain > 1e-12 * cost.max(1e-12);
                    break;
                }
                lambda *= 4.0;
            }
            if !improved {
                break;
            }
        }
        let delta_e = cost.sqrt();
        if delta_e < best.delta_e {
            best = Solution {
                coverage: assemble(&x),
                delta_e,
            };
            if delta_e < accept {
                break;
            }
        }
    }
    best
}

/// Block-dye estimate of the cyan, magenta and yellow coverages that would
/// reproduce `target`, inverted through each ink's tone curve.
pub(crate) fn block_dye_guess(pred: &Predictor, target: Lab) -> [f64; 3] {
    let t = lab_to_xyz(target).to_array();
    let white = pred.primary_xyz(0).to_array();
    let mut out = [0.0; 3];
    for (ink, slot) in out.iter_mut().enumerate() {
        let solid = pred.primary_xyz(1 << ink).to_array();
        // cyan absorbs in X, magenta in Y, yellow in Z
        let ch = ink;
        let r = t[ch] / white[ch];
        let s = solid[ch] / white[ch];
        let e = if s < 1.0 {
            ((1.0 - r) / (1.0 - s)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        *slot = pred.tone_curve(ink).inverse(e);
    }
    out
}

/// Best cyan, magenta and yellow for `target` with black fixed at `k`.
/// Stops early once the difference is below `accept`.
pub(crate) fn solve_cmy(
    pred: &Predictor,
    target: Lab,
    k: f64,
    limit: f64,
    accept: f64,
    hint: Option<[f64; 3]>,
) -> Solution {
    let guess = block_dye_guess(pred, target);
    let mut starts = Vec::with_capacity(4);
    if let Some(h) = hint {
        starts.push(h);
    }
    starts.extend([[0.0; 3], [0.5; 3], guess]);
    minimize(pred, target, (limit - k).max(0.0), accept, &starts, |x| InkCoverage {
        c: x[0],
        m: x[1],
        y: x[2],
        k,
    })
}

/// Best coverage for `target` with all four inks free.
pub(crate) fn solve_cmyk(pred: &Predictor, target: Lab, limit: f64, accept: f64, hint: Option<[f64; 4]>) -> Solution {
    let g = block_dye_guess(pred, target);
    let mut starts = Vec::with_capacity(4);
    if let Some(h) = hint {
        starts.push(h);
    }
    starts.extend([[0.0; 4], [0.5; 4], [g[0], g[1], g[2], 0.5]]);
    minimize(pred, target, limit, accept, &starts, |x| InkCoverage {
        c: x[0],
        m: x[1],
        y: x[2],
        k: x[3],
    })
}
