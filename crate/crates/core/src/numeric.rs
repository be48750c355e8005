//! Small numerical helpers shared by the models: bracketed root finding,
//! least-squares quadratic fitting and linear interpolation on sorted tables.

use crate::error::{Error, Result};

/// Bisection on a sign-changing bracket. Converges to `tol` in the abscissa.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return Err(Error::NonConvergence(format!(
            "no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 || (hi - lo) < tol {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Least-squares fit of `y = c0 + c1 x + c2 x^2`. Returns `[c0, c1, c2]`.
///
/// Abscissae are centred and scaled internally so the normal equations stay
/// well conditioned for angular-frequency inputs of order 1e15.
pub fn fit_quadratic(xs: &[f64], ys: &[f64]) -> Option<[f64; 3]> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let scale = xs
        .iter()
        .map(|x| (x - mean).abs())
        .fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return None;
    }

    let mut m = [[0.0_f64; 3]; 3];
    let mut rhs = [0.0_f64; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let t = (x - mean) / scale;
        let basis = [1.0, t, t * t];
        for r in 0..3 {
            rhs[r] += basis[r] * y;
            for c in 0..3 {
                m[r][c] += basis[r] * basis[c];
            }
        }
    }
    let [a, b, c] = solve3(m, rhs)?;

    // Undo the affine change of variable t = (x - mean) / scale.
    let c2 = c / (scale * scale);
    let c1 = b / scale - 2.0 * c2 * mean;
    let c0 = a - b * mean / scale + c2 * mean * mean;
    Some([c0, c1, c2])
}

fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let factor = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (v, p) in m[row].iter_mut().zip(pivot_row).skip(col) {
                *v -= factor * p;
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut out = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * out[k]).sum();
        out[row] = (rhs[row] - tail) / m[row][row];
    }
    Some(out)
}

/// Linear interpolation on ascending `xs`. `None` outside `[xs[0], xs[last]]`.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let (first, last) = (*xs.first()?, *xs.last()?);
    if !(first..=last).contains(&x) {
        return None;
    }
    let hi = xs.partition_point(|&v| v < x).max(1).min(xs.len() - 1);
    let lo = hi - 1;
    let span = xs[hi] - xs[lo];
    if span == 0.0 {
        return Some(ys[lo]);
    }
    let w = (x - xs[lo]) / span;
    Some(ys[lo] + w * (ys[hi] - ys[lo]))
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
