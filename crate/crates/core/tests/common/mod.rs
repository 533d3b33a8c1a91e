#![allow(dead_code)]

use centile::matrix::{solve_square, Matrix};
use centile::qr_solver::total_loss;

/// Minimum check loss over every fit that interpolates some `p`-subset of
/// the observations. Some optimum of the LP is always such a vertex.
pub fn brute_force_min(x: &Matrix<f64>, y: &[f64], tau: f64) -> f64 {
    let (n, p) = (x.nrows(), x.ncols());
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..p).collect();
    loop {
        let rows: Vec<&[f64]> = idx.iter().map(|&i| x.row(i)).collect();
        let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        if let Some(beta) = solve_square(&Matrix::from_rows(&rows), &yb, 1e-12) {
            let r: Vec<f64> = (0..n)
                .map(|i| y[i] - x.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            best = best.min(total_loss(&r, tau));
        }
        // next combination
        let mut k = p;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] < n - p + k {
                idx[k] += 1;
                for j in k + 1..p {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Runs the CLI in-process and returns `(exit code, stdout, stderr)`.
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = centile::cli::run_with(std::iter::once("centile").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}
