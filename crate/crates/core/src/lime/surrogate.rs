//! Weighted ridge regression with an unpenalised intercept.

use super::LimeError;

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl RidgeFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, z)| b * z).sum::<f64>()
    }
}

/// In-place Cholesky solve of the symmetric positive-definite system
/// `a x = b` (`a` is `n x n`, row-major). Fails when a pivot is not
/// positive relative to the largest diagonal entry.
pub fn cholesky_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Result<(), LimeError> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 1e-12 * scale) {
            return Err(LimeError::SingularSystem);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    // forward then back substitution with L and L^T
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Ok(())
}

/// Minimises `sum_i w_i (y_i - beta . z_i - b)^2 + lambda |beta|^2`.
///
/// The intercept is eliminated by centring on the weighted means, leaving
/// the `d x d` system `(Zc' W Zc + lambda I) beta = Zc' W yc`.
pub fn fit_weighted_ridge(z: &[Vec<f64>], y: &[f64], w: &[f64], lambda: f64) -> Result<RidgeFit, LimeError> {
    let n = z.len();
    if n < 2 || y.len() != n || w.len() != n {
        return Err(LimeError::InsufficientSamples(format!("{n} rows, {} targets, {} weights", y.len(), w.len())));
    }
    let d = z[0].len();
    if z.iter().any(|r| r.len() != d) {
        return Err(LimeError::DimensionMismatch("ragged design matrix".into()));
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || !(lambda >= 0.0) {
        return Err(LimeError::InsufficientSamples("weights and lambda must be non-negative".into()));
    }
    let active: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
    let distinct = active.iter().any(|&i| z[i] != z[active[0]] || y[i] != y[active[0]]);
    if active.len() < 2 || !distinct {
        return Err(LimeError::InsufficientSamples("need at least two distinct weighted rows".into()));
    }
    let total: f64 = w.iter().sum();
    let mut zbar = vec![0.0; d];
    let mut ybar = 0.0;
    for i in 0..n {
        for (m, v) in zbar.iter_mut().zip(&z[i]) {
            *m += w[i] * v;
        }
        ybar += w[i] * y[i];
    }
    zbar.iter_mut().for_each(|m| *m /= total);
    ybar /= total;

    let mut gram = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    let mut zc = vec![0.0; d];
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        for (c, (v, m)) in zc.iter_mut().zip(z[i].iter().zip(&zbar)) {
            *c = v - m;
        }
        let yc = y[i] - ybar;
        for a in 0..d {
            let wa = w[i] * zc[a];
            rhs[a] += wa * yc;
            for b in a..d {
                gram[a * d + b] += wa * zc[b];
            }
        }
    }
    for a in 0..d {
        gram[a * d + a] += lambda;
        for b in 0..a {
            gram[a * d + b] = gram[b * d + a];
        }
    }
    cholesky_solve(&mut gram, &mut rhs, d)?;
    let intercept = ybar - rhs.iter().zip(&zbar).map(|(b, m)| b * m).sum::<f64>();
    Ok(RidgeFit { coefficients: rhs, intercept })
}

/// Weighted coefficient of determination; `None` when the targets have no
/// weighted variance.
pub fn weighted_r2(fit: &RidgeFit, z: &[Vec<f64>], y: &[f64], w: &[f64]) -> Option<f64> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let ybar = w.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / total;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..y.len() {
        ss_res += w[i] * (y[i] - fit.predict(&z[i])).powi(2);
        ss_tot += w[i] * (y[i] - ybar).powi(2);
    }
    (ss_tot > 1e-24).then(|| 1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_interpolation_without_penalty() {
        let z: Vec<Vec<f64>> = (0..8).map(|i| vec![(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]).collect();
        let y: Vec<f64> = z.iter().map(|r| 0.5 + 2.0 * r[0] - 1.0 * r[1] + 0.25 * r[2]).collect();
        let fit = fit_weighted_ridge(&z, &y, &[1.0; 8], 0.0).unwrap();
        for (b, t) in fit.coefficients.iter().zip([2.0, -1.0, 0.25]) {
            assert!((b - t).abs() < 1e-8);
        }
        assert!((fit.intercept - 0.5).abs() < 1e-8);
        assert!((weighted_r2(&fit, &z, &y, &[1.0; 8]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_without_penalty() {
        // second column duplicates the first
        let z: Vec<Vec<f64>> = (0..6).map(|i| vec![(i % 2) as f64, (i % 2) as f64]).collect();
        let y: Vec<f64> = (0..6).map(|i| i as f64).collect();
        assert!(matches!(fit_weighted_ridge(&z, &y, &[1.0; 6], 0.0), Err(LimeError::SingularSystem)));
        assert!(fit_weighted_ridge(&z, &y, &[1.0; 6], 0.1).is_ok());
    }

    #[test]
    fn needs_distinct_rows() {
        let z = vec![vec![1.0], vec![1.0]];
        assert!(matches!(fit_weighted_ridge(&z, &[1.0, 1.0], &[1.0, 1.0], 1.0), Err(LimeError::InsufficientSamples(_))));
        assert!(fit_weighted_ridge(&z[..1], &[1.0], &[1.0], 1.0).is_err());
    }
}
