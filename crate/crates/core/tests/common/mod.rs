#![allow(dead_code)]

use fairlens::bias::ConfusionMatrix;
use fairlens::dataset::GroupSelector;

pub type Counts = [[u64; 6]; 6];

/// Published row percentages, rows and columns in canonical label order.
pub type Percents = [[f64; 6]; 6];

// Published test-set matrices, transcribed as integer counts whose row
// percentages reproduce the printed figures. Row totals per group are fixed
// by the test set: female 10/12/9/9/8/10, male 11/9/7/10/7/5.

pub const B_F: Counts = [
    [8, 1, 0, 1, 0, 0],
    [0, 6, 0, 6, 0, 0],
    [0, 0, 1, 8, 0, 0],
    [0, 0, 0, 9, 0, 0],
    [3, 0, 1, 0, 4, 0],
    [0, 0, 0, 0, 0, 10],
];

pub const B_M: Counts = [
    [9, 0, 0, 0, 2, 0],
    [1, 6, 2, 0, 0, 0],
    [2, 0, 1, 2, 2, 0],
    [0, 2, 2, 5, 1, 0],
    [3, 0, 0, 0, 4, 0],
    [0, 0, 0, 0, 0, 5],
];

pub const M_M: Counts = [
    [3, 5, 0, 0, 3, 0],
    [0, 5, 2, 1, 1, 0],
    [0, 0, 5, 2, 0, 0],
    [0, 1, 4, 5, 0, 0],
    [0, 0, 1, 0, 6, 0],
    [0, 0, 0, 0, 0, 5],
];

pub const M_F: Counts = [
    [1, 0, 1, 1, 7, 0],
    [0, 6, 2, 3, 0, 1],
    [0, 0, 3, 6, 0, 0],
    [0, 0, 3, 6, 0, 0],
    [0, 0, 1, 0, 7, 0],
    [0, 0, 0, 0, 0, 10],
];

pub const F_F: Counts = [
    [5, 2, 1, 0, 0, 2],
    [0, 6, 0, 3, 0, 3],
    [0, 2, 1, 6, 0, 0],
    [0, 0, 0, 9, 0, 0],
    [2, 0, 1, 0, 5, 0],
    [0, 0, 0, 0, 0, 10],
];

pub const F_M: Counts = [
    [10, 0, 0, 0, 1, 0],
    [0, 7, 1, 0, 1, 0],
    [2, 2, 3, 0, 0, 0],
    [1, 4, 0, 3, 2, 0],
    [3, 0, 0, 0, 4, 0],
    [0, 0, 1, 0, 0, 4],
];

pub fn b_b() -> Counts {
    let mut out = [[0; 6]; 6];
    for r in 0..6 {
        for c in 0..6 {
            out[r][c] = B_F[r][c] + B_M[r][c];
        }
    }
    out
}

pub const PCT_B_B: Percents = [
    [80.95, 4.76, 0.00, 4.76, 9.52, 0.00],
    [4.76, 57.14, 9.52, 28.57, 0.00, 0.00],
    [12.50, 0.00, 12.50, 62.50, 12.50, 0.00],
    [0.00, 10.53, 10.53, 73.68, 5.26, 0.00],
    [40.00, 0.00, 6.67, 0.00, 53.33, 0.00],
    [0.00, 0.00, 0.00, 0.00, 0.00, 100.00],
];

pub const PCT_B_M: Percents = [
    [81.82, 0.00, 0.00, 0.00, 18.18, 0.00],
    [11.11, 66.67, 22.22, 0.00, 0.00, 0.00],
    [28.57, 0.00, 14.29, 28.57, 28.57, 0.00],
    [0.00, 20.00, 20.00, 50.00, 10.00, 0.00],
    [42.86, 0.00, 0.00, 0.00, 57.14, 0.00],
    [0.00, 0.00, 0.00, 0.00, 0.00, 100.00],
];

pub const PCT_B_F: Percents = [
    [80.00, 10.00, 0.00, 10.00, 0.00, 0.00],
    [0.00, 50.00, 0.00, 50.00, 0.00, 0.00],
    [0.00, 0.00, 11.11, 88.89, 0.00, 0.00],
    [0.00, 0.00, 0.00, 100.00, 0.00, 0.00],
    [37.50, 0.00, 12.50, 0.00, 50.00, 0.00],
    [0.00, 0.00, 0.00, 0.00, 0.00, 100.00],
];

pub const PCT_M_M: Percents = [
    [27.27, 45.45, 0.00, 0.00, 27.27, 0.00],
    [0.00, 55.56, 22.22, 11.11, 11.11, 0.00],
    [0.00, 0.00, 71.43, 28.57, 0.00, 0.00],
    [0.00, 10.00, 40.00, 50.00, 0.00, 0.00],
    [0.00, 0.00, 14.29, 0.00, 85.71, 0.00],
    [0.00, 0.00, 0.00, 0.00, 0.00, 100.00],
];

pub const PCT_M_F: Percents = [
    [10.00, 0.00, 10.00, 10.00, 70.00, 0.00],
    [0.00, 50.00, 16.67, 25.00, 0.00, 8.33],
    [0.00, 0.00, 33.33, 66.67, 0.00, 0.00],
    [0.00, 0.00, 33.33, 66.67, 0.00, 0.00],
    [0.00, 0.00, 12.50, 0.00, 87.50, 0.00],
    [0.00, 0.00, 0.00, 0.00, 0.00, 100.00],
];

pub const PCT_F_F: Percents = [
    [50.00, 20.00, 10.00, 0.00, 0.00, 20.00],
    [0.00, 50.00, 0.00, 25.00, 0.00, 25.00],
    [0.00, 22.22, 11.11, 66.67, 0.00, 0.00],
    [0.00, 0.00, 0.00, 100.00, 0.00, 0.00],
    [25.00, 0.00, 12.50, 0.00, 62.50, 0.00],
    [0.00, 0.00, 0.00, 0.00, 0.00, 100.00],
];

pub const PCT_F_M: Percents = [
    [90.91, 0.00, 0.00, 0.00, 9.09, 0.00],
    [0.00, 77.78, 11.11, 0.00, 11.11, 0.00],
    [28.57, 28.57, 42.86, 0.00, 0.00, 0.00],
    [10.00, 40.00, 0.00, 30.00, 20.00, 0.00],
    [42.86, 0.00, 0.00, 0.00, 57.14, 0.00],
    [0.00, 0.00, 20.00, 0.00, 0.00, 80.00],
];

pub fn matrix(id: &str, counts: Counts) -> ConfusionMatrix {
    let scope = match id.as_bytes()[2] {
        b'F' => GroupSelector::FemaleOnly,
        b'M' => GroupSelector::MaleOnly,
        _ => GroupSelector::Both,
    };
    ConfusionMatrix::from_counts(id, scope, counts)
}

/// Every published matrix with its transcription.
pub fn published() -> Vec<(&'static str, Counts, Percents)> {
    vec![
        ("B-B", b_b(), PCT_B_B),
        ("B-F", B_F, PCT_B_F),
        ("B-M", B_M, PCT_B_M),
        ("F-F", F_F, PCT_F_F),
        ("F-M", F_M, PCT_F_M),
        ("M-M", M_M, PCT_M_M),
        ("M-F", M_F, PCT_M_F),
    ]
}

/// Dense solve of `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Weighted ridge with an unpenalised intercept, solved through the full
/// `(d + 1)`-dimensional normal equations. Returns `(intercept, coefficients)`.
pub fn ridge_oracle(z: &[Vec<f64>], y: &[f64], w: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let d = z[0].len();
    let m = d + 1;
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for i in 0..z.len() {
        let mut x = vec![1.0];
        x.extend_from_slice(&z[i]);
        for r in 0..m {
            b[r] += w[i] * x[r] * y[i];
            for c in 0..m {
                a[r][c] += w[i] * x[r] * x[c];
            }
        }
    }
    for j in 1..m {
        a[j][j] += lambda;
    }
    let theta = gauss_solve(a, b);
    (theta[0], theta[1..].to_vec())
}
