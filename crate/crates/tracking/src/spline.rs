//! Least-squares cubic smoothing splines.
//!
//! A clamped cubic B-spline is fitted by least squares; interior knots are
//! placed at data quantiles and their number grows (0, 1, 2, 4, ...) until the
//! residual sum of squares drops to the smoothing budget `s`. Data lying on a
//! cubic polynomial is therefore reproduced exactly by the knot-free fit.

const DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    knots: Vec<f64>,
    coef: Vec<f64>,
}

impl CubicSpline {
    pub fn eval(&self, t: f64) -> f64 {
        let (span, basis) = basis_functions(&self.knots, t);
        (0..=DEGREE).map(|k| basis[k] * self.coef[span - DEGREE + k]).sum()
    }

    pub fn interior_knot_count(&self) -> usize {
        self.knots.len() - 2 * (DEGREE + 1)
    }
}

/// Fit `ys` over strictly increasing `ts` (at least 4 samples) with residual
/// sum of squares at most `s`, using as few interior knots as the schedule
/// allows.
pub fn fit_smoothing_spline(ts: &[f64], ys: &[f64], s: f64) -> Option<CubicSpline> {
    let n = ts.len();
    if n < DEGREE + 1 || ys.len() != n {
        return None;
    }
    let max_interior = n - (DEGREE + 1);
    let mut interior = 0usize;
    let mut best = None;
    loop {
        let knots = clamped_knots(ts, interior);
        if let Some(fit) = least_squares(&knots, ts, ys) {
            let rss: f64 = ts.iter().zip(ys).map(|(&t, &y)| (fit.eval(t) - y).powi(2)).sum();
            best = Some(fit);
            if rss <= s {
                break;
            }
        }
        if interior >= max_interior {
            break;
        }
        interior = if interior == 0 { 1 } else { (interior * 2).min(max_interior) };
    }
    best
}

fn clamped_knots(ts: &[f64], interior: usize) -> Vec<f64> {
    let (t0, t1) = (ts[0], ts[ts.len() - 1]);
    let mut knots = vec![t0; DEGREE + 1];
    let n = ts.len();
    let mut last = t0;
    for i in 1..=interior {
        // Quantile position between data samples.
        let pos = i as f64 * (n - 1) as f64 / (interior + 1) as f64;
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        let k = if lo + 1 < n { ts[lo] + frac * (ts[lo + 1] - ts[lo]) } else { ts[lo] };
        if k > last && k < t1 {
            knots.push(k);
            last = k;
        }
    }
    knots.extend(std::iter::repeat_n(t1, DEGREE + 1));
    knots
}

fn least_squares(knots: &[f64], ts: &[f64], ys: &[f64]) -> Option<CubicSpline> {
    let m = knots.len() - DEGREE - 1;
    // Normal equations; the matrix is banded with `band[i][k] = AᵀA[i][i + k]`.
    let mut band = vec![[0.0; DEGREE + 1]; m];
    let mut aty = vec![0.0; m];
    for (&t, &y) in ts.iter().zip(ys) {
        let (span, b) = basis_functions(knots, t);
        let base = span - DEGREE;
        for r in 0..=DEGREE {
            aty[base + r] += b[r] * y;
            for c in r..=DEGREE {
                band[base + r][c - r] += b[r] * b[c];
            }
        }
    }
    let coef = solve_banded(&band, &aty).or_else(|| {
        // Rank-deficient fit (a knot span without data): regularize slightly.
        let ridge = 1e-12 * band.iter().map(|row| row[0]).sum::<f64>() / m as f64;
        let damped: Vec<[f64; DEGREE + 1]> = band
            .iter()
            .map(|row| {
                let mut r = *row;
                r[0] += ridge;
                r
            })
            .collect();
        solve_banded(&damped, &aty)
    })?;
    coef.iter().all(|c| c.is_finite()).then(|| CubicSpline { knots: knots.to_vec(), coef })
}

/// Banded Cholesky solve of a symmetric positive definite system stored as
/// `band[i][k] = M[i][i + k]`.
fn solve_banded(band: &[[f64; DEGREE + 1]], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = band.len();
    let p = DEGREE;
    // Upper factor U with M = UᵀU, stored like `band`.
    let mut u = vec![[0.0; DEGREE + 1]; n];
    for i in 0..n {
        for k in 0..=p {
            let j = i + k;
            if j >= n {
                break;
            }
            let mut sum = band[i][k];
            for l in j.saturating_sub(p)..i {
                sum -= u[l][i - l] * u[l][j - l];
            }
            if k == 0 {
                if !(sum > 0.0) {
                    return None;
                }
                u[i][0] = sum.sqrt();
            } else {
                u[i][k] = sum / u[i][0];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = rhs[i];
        for l in i.saturating_sub(p)..i {
            s -= u[l][i - l] * y[l];
        }
        y[i] = s / u[i][0];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for j in (i + 1)..n.min(i + p + 1) {
            s -= u[i][j - i] * x[j];
        }
        x[i] = s / u[i][0];
    }
    Some(x)
}

/// Knot span index `i` with `knots[i] <= t < knots[i + 1]` (the last non-empty
/// span at the right end) and the four non-zero cubic basis values on it.
fn basis_functions(knots: &[f64], t: f64) -> (usize, [f64; DEGREE + 1]) {
    let m = knots.len() - DEGREE - 1;
    let t = t.clamp(knots[DEGREE], knots[m]);
    let span = if t >= knots[m] {
        let mut s = m - 1;
        while knots[s] >= knots[s + 1] {
            s -= 1;
        }
        s
    } else {
        knots.partition_point(|&k| k <= t) - 1
    };

    let mut n = [0.0; DEGREE + 1];
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    n[0] = 1.0;
    for j in 1..=DEGREE {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom != 0.0 { n[r] / denom } else { 0.0 };
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    (span, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_a_partition_of_unity() {
        let ts: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let knots = clamped_knots(&ts, 6);
        for k in 0..=100 {
            let t = 4.9 * k as f64 / 100.0;
            let (_, b) = basis_functions(&knots, t);
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(b.iter().all(|&v| v >= -1e-15));
        }
    }

    #[test]
    fn cubic_data_needs_no_knots() {
        let ts: Vec<f64> = (0..40).map(|k| k as f64 / 30.0).collect();
        let f = |t: f64| 0.3 - 1.2 * t + 0.7 * t * t - 0.25 * t * t * t;
        let ys: Vec<f64> = ts.iter().map(|&t| f(t)).collect();
        let sp = fit_smoothing_spline(&ts, &ys, 1e-18).unwrap();
        assert_eq!(sp.interior_knot_count(), 0);
        for k in 0..=50 {
            let t = ts[39] * k as f64 / 50.0;
            assert!((sp.eval(t) - f(t)).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_budget_on_wiggly_data_adds_knots() {
        let ts: Vec<f64> = (0..60).map(|k| k as f64 / 30.0).collect();
        let ys: Vec<f64> = ts.iter().map(|&t| (6.0 * t).sin()).collect();
        let sp = fit_smoothing_spline(&ts, &ys, 1e-6).unwrap();
        assert!(sp.interior_knot_count() > 0);
        let rss: f64 = ts.iter().zip(&ys).map(|(&t, &y)| (sp.eval(t) - y).powi(2)).sum();
        assert!(rss <= 1e-6);
    }

    #[test]
    fn banded_solve_matches_dense_elimination() {
        let n = 9;
        let band: Vec<[f64; DEGREE + 1]> =
            (0..n).map(|i| [6.0 + i as f64, -1.0 + 0.1 * i as f64, 0.5, -0.2]).collect();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = solve_banded(&band, &rhs).unwrap();
        let at = |i: usize, j: usize| {
            let (a, b) = (i.min(j), i.max(j));
            if b - a <= DEGREE { band[a][b - a] } else { 0.0 }
        };
        for (i, r) in rhs.iter().enumerate() {
            let lhs: f64 = (0..n).map(|j| at(i, j) * x[j]).sum();
            assert!((lhs - r).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_samples() {
        assert!(fit_smoothing_spline(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0], 0.0).is_none());
    }
}
