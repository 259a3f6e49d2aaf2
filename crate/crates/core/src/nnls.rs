//! Lawson-Hanson nonnegative least squares for the small dense systems that
//! arise in multiplier estimation.

use nalgebra::{DMatrix, DVector};

/// Solves `min ||A x - b||` subject to `x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    if n == 0 {
        return x;
    }
    let scale = a.norm() * b.norm().max(1.0);
    let tol = 1e-13 * scale.max(f64::MIN_POSITIVE);
    let mut passive = vec![false; n];
    let max_outer = 3 * n + 10;

    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else {
            break;
        };
        passive[j] = true;

        for _ in 0..max_outer {
            let s = restricted_lstsq(a, b, &passive);
            let feasible = (0..n).filter(|&i| passive[i]).all(|i| s[i] > 0.0);
            if feasible {
                x = s;
                break;
            }
            let mut step = f64::INFINITY;
            for i in (0..n).filter(|&i| passive[i] && s[i] <= 0.0) {
                let denom = x[i] - s[i];
                if denom > 0.0 {
                    step = step.min(x[i] / denom);
                }
            }
            if !step.is_finite() {
                step = 0.0;
            }
            x += (s - &x) * step;
            for i in 0..n {
                if passive[i] && x[i] <= tol {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    x
}

fn restricted_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let mut out = DVector::zeros(passive.len());
    if cols.is_empty() {
        return out;
    }
    let sub = a.select_columns(&cols);
    let svd = sub.svd(true, true);
    let sol = svd
        .solve(b, 1e-12 * svd.singular_values.max())
        .unwrap_or_else(|_| DVector::zeros(cols.len()));
    for (k, &c) in cols.iter().enumerate() {
        out[c] = sol[k];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
        (a * x - b).norm()
    }

    #[test]
    fn unconstrained_solution_is_kept_when_nonnegative() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = nnls(&a, &b);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_components_are_clamped_optimally() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![-1.0, 2.0]);
        let x = nnls(&a, &b);
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn matches_grid_scan_on_coupled_problem() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.2, 1.0, -0.3, 0.4]);
        let b = DVector::from_vec(vec![0.7, -0.2, 0.9]);
        let x = nnls(&a, &b);
        let mut best = f64::INFINITY;
        for i in 0..=400 {
            for j in 0..=400 {
                let y = DVector::from_vec(vec![i as f64 / 100.0, j as f64 / 100.0]);
                best = best.min(residual(&a, &b, &y));
            }
        }
        assert!(residual(&a, &b, &x) <= best + 1e-12);
    }

    #[test]
    fn empty_system() {
        let a = DMatrix::<f64>::zeros(2, 0);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(nnls(&a, &b).len(), 0);
    }
}
