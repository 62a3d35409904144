//! Nonnegative least squares with an optional L1 term, and nonnegative ridge.
//!
//! Both reduce to the box-constrained quadratic program
//! `min ½ xᵀQx − cᵀx  s.t.  x ≥ 0`, solved with a Lawson–Hanson active set
//! on the Gram form followed by a coordinate-descent polish.

use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, cholesky_sub, Matrix};
use crate::scalar::{all_finite, Scalar};

fn check_inputs<T: Scalar>(a: &Matrix<T>, b: &[T], penalty: T) -> Result<()> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::rejected("design matrix must be at least 1x1"));
    }
    if b.len() != a.rows() {
        return Err(Error::rejected(format!("target length {} does not match {} rows", b.len(), a.rows())));
    }
    if !all_finite(a.as_slice()) || !all_finite(b) || !penalty.is_finite() {
        return Err(Error::rejected("non-finite solver input"));
    }
    if penalty < T::zero() {
        return Err(Error::rejected("penalty must be nonnegative"));
    }
    Ok(())
}

/// Minimizes `‖Ax − b‖² + l1·‖x‖₁` subject to `x ≥ 0`.
pub fn nnls_solve<T: Scalar>(a: &Matrix<T>, b: &[T], l1_penalty: T) -> Result<Vec<T>> {
    check_inputs(a, b, l1_penalty)?;
    let q = a.gram();
    let half = T::lit(0.5);
    let c: Vec<T> = a.tr_mul_vec(b).into_iter().map(|v| v - half * l1_penalty).collect();
    Ok(solve_gram(&q, &c))
}

/// Minimizes `‖Ax − b‖² + l2·‖x‖²` subject to `x ≥ 0`.
pub fn ridge_nonneg_solve<T: Scalar>(a: &Matrix<T>, b: &[T], l2_penalty: T) -> Result<Vec<T>> {
    check_inputs(a, b, l2_penalty)?;
    let mut q = a.gram();
    for i in 0..q.rows() {
        q[(i, i)] += l2_penalty;
    }
    let c = a.tr_mul_vec(b);
    Ok(solve_gram(&q, &c))
}

/// `‖Ax − b‖² + l1·Σx`.
pub fn nnls_objective<T: Scalar>(a: &Matrix<T>, b: &[T], l1_penalty: T, x: &[T]) -> T {
    let r: T = a.mul_vec(x).iter().zip(b).map(|(&p, &t)| (p - t) * (p - t)).sum();
    r + l1_penalty * x.iter().copied().sum::<T>()
}

/// Largest violation of the KKT conditions of [`nnls_solve`] at `x`, measured
/// on the gradient `2Aᵀ(Ax − b) + l1`.
pub fn kkt_residual<T: Scalar>(a: &Matrix<T>, b: &[T], l1_penalty: T, x: &[T]) -> T {
    let two = T::lit(2.0);
    let r: Vec<T> = a.mul_vec(x).iter().zip(b).map(|(&p, &t)| p - t).collect();
    let g = a.tr_mul_vec(&r);
    x.iter()
        .zip(&g)
        .map(|(&xi, &gi)| {
            let gi = two * gi + l1_penalty;
            if xi > T::zero() {
                gi.abs().max((-xi).max(T::zero()))
            } else {
                (-gi).max(T::zero())
            }
        })
        .fold(T::zero(), T::max)
}

/// Solves `min ½ xᵀQx − cᵀx, x ≥ 0` for symmetric positive semidefinite `Q`.
pub(crate) fn solve_gram<T: Scalar>(q: &Matrix<T>, c: &[T]) -> Vec<T> {
    let n = c.len();
    debug_assert_eq!(q.rows(), n);
    let eps = T::epsilon();
    let scale = c
        .iter()
        .map(|v| v.abs())
        .chain((0..n).map(|i| q[(i, i)].abs()))
        .fold(T::min_positive_value(), T::max);
    let grad_tol = eps * T::lit(64.0) * T::from_usize_lossy(n.max(1)) * scale;
    let pivot_floor = eps * T::lit(1e4);

    let mut x = vec![T::zero(); n];
    let mut passive = vec![false; n];
    let max_outer = 3 * n + 10;

    for _ in 0..max_outer {
        let w = neg_gradient(q, c, &x);
        let mut rejected = vec![false; n];
        let mut accepted = None;
        loop {
            let pick = (0..n)
                .filter(|&j| !passive[j] && !rejected[j] && w[j] > grad_tol)
                .max_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap().then(j.cmp(&i)));
            let Some(j) = pick else { break };
            passive[j] = true;
            match solve_passive(q, c, &passive, pivot_floor) {
                Some(z) if z[j] > T::zero() => {
                    accepted = Some(z);
                    break;
                }
                Some(_) => {
                    passive[j] = false;
                    rejected[j] = true;
                }
                None => {
                    passive[j] = false;
                    if !pivot_dependent(q, &mut x, &mut passive, j, pivot_floor) {
                        rejected[j] = true;
                        continue;
                    }
                    // x changed; restart pricing from the new point.
                    accepted = solve_passive(q, c, &passive, pivot_floor);
                    if accepted.is_none() {
                        passive[j] = false;
                        rejected[j] = true;
                        continue;
                    }
                    break;
                }
            }
        }
        let Some(mut z) = accepted else { break };

        // Inner loop: step back toward feasibility until the passive solve is
        // strictly positive.
        for _ in 0..=n {
            let infeasible: Vec<usize> = (0..n).filter(|&i| passive[i] && z[i] <= T::zero()).collect();
            if infeasible.is_empty() {
                break;
            }
            let (step, drop_idx) = infeasible
                .iter()
                .map(|&i| (x[i] / (x[i] - z[i]), i))
                .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
                .unwrap();
            for i in 0..n {
                if passive[i] {
                    let xi = x[i];
                    x[i] = xi + step * (z[i] - xi);
                }
            }
            for i in 0..n {
                if passive[i] && (i == drop_idx || x[i] <= T::zero()) {
                    passive[i] = false;
                    x[i] = T::zero();
                }
            }
            z = solve_passive(q, c, &passive, pivot_floor).unwrap_or_else(|| x.clone());
        }
        for i in 0..n {
            x[i] = if passive[i] { z[i].max(T::zero()) } else { T::zero() };
        }
    }

    polish(q, c, &mut x, scale);
    x
}

fn neg_gradient<T: Scalar>(q: &Matrix<T>, c: &[T], x: &[T]) -> Vec<T> {
    let qx = q.mul_vec(x);
    c.iter().zip(qx).map(|(&ci, v)| ci - v).collect()
}

/// Column `j` is numerically dependent on the passive columns, yet still has
/// a descent gradient (possible with the L1 shift). Moves along the null
/// direction `e_j − v`, `Q_PP v = Q_Pj`, which lowers the objective linearly,
/// until a passive coordinate hits zero, then swaps it out for `j`.
/// Returns false when no such step exists.
fn pivot_dependent<T: Scalar>(q: &Matrix<T>, x: &mut [T], passive: &mut [bool], j: usize, pivot_floor: T) -> bool {
    let idx: Vec<usize> = (0..x.len()).filter(|&i| passive[i]).collect();
    if idx.is_empty() {
        return false;
    }
    let Some(l) = cholesky_sub(q, &idx, pivot_floor) else { return false };
    let rhs: Vec<T> = idx.iter().map(|&i| q[(i, j)]).collect();
    let v = cholesky_solve(&l, &rhs);
    let ratio = idx
        .iter()
        .zip(&v)
        .filter(|&(_, &vi)| vi > T::zero())
        .map(|(&i, &vi)| (x[i] / vi, i))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let Some((t, leave)) = ratio else { return false };
    for (&i, &vi) in idx.iter().zip(&v) {
        x[i] = (x[i] - t * vi).max(T::zero());
    }
    x[leave] = T::zero();
    x[j] += t;
    passive[leave] = false;
    passive[j] = true;
    true
}

/// Unconstrained minimizer restricted to the passive set, embedded in `n` dims.
fn solve_passive<T: Scalar>(q: &Matrix<T>, c: &[T], passive: &[bool], pivot_floor: T) -> Option<Vec<T>> {
    let idx: Vec<usize> = (0..c.len()).filter(|&i| passive[i]).collect();
    let mut z = vec![T::zero(); c.len()];
    if idx.is_empty() {
        return Some(z);
    }
    let l = cholesky_sub(q, &idx, pivot_floor)?;
    let rhs: Vec<T> = idx.iter().map(|&i| c[i]).collect();
    for (&i, v) in idx.iter().zip(cholesky_solve(&l, &rhs)) {
        z[i] = v;
    }
    Some(z)
}

/// Projected coordinate descent until the KKT residual is at rounding level.
fn polish<T: Scalar>(q: &Matrix<T>, c: &[T], x: &mut [T], scale: T) {
    let n = c.len();
    let target = T::epsilon() * T::lit(1e3) * scale;
    for _ in 0..2000 {
        let w = neg_gradient(q, c, x);
        let worst = (0..n)
            .map(|i| if x[i] > T::zero() { w[i].abs() } else { w[i].max(T::zero()) })
            .fold(T::zero(), T::max);
        if worst <= target {
            return;
        }
        for i in 0..n {
            let d = q[(i, i)];
            if d <= T::zero() {
                continue;
            }
            let gi = c[i] - crate::linalg::dot(q.row(i), x);
            x[i] = (x[i] + gi / d).max(T::zero());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_design_recovers_target() {
        let a = Matrix::<f64>::identity(2);
        let x = nnls_solve(&a, &[3.0, 5.0], 0.0).unwrap();
        assert_eq!(x, vec![3.0, 5.0]);
    }

    #[test]
    fn negative_target_clamps_to_zero() {
        let a = Matrix::from_rows(&[vec![1.0f64]]);
        assert_eq!(nnls_solve(&a, &[-1.0], 0.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn l1_shifts_solution() {
        // min (x-3)² + 2x → x = 2
        let a = Matrix::from_rows(&[vec![1.0f64]]);
        let x = nnls_solve(&a, &[3.0], 2.0).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_scalar_cases() {
        let a = Matrix::from_rows(&[vec![1.0f64]]);
        assert_eq!(ridge_nonneg_solve(&a, &[4.0], 0.0).unwrap(), vec![4.0]);
        assert!((ridge_nonneg_solve(&a, &[4.0], 1.0).unwrap()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        let a = Matrix::from_rows(&[vec![f64::NAN]]);
        assert!(matches!(nnls_solve(&a, &[1.0], 0.0), Err(Error::RejectedInput(_))));
        let a = Matrix::from_rows(&[vec![1.0f64]]);
        assert!(nnls_solve(&a, &[f64::INFINITY], 0.0).is_err());
        assert!(nnls_solve(&a, &[1.0, 2.0], 0.0).is_err());
        assert!(ridge_nonneg_solve(&a, &[1.0], f64::NAN).is_err());
        assert!(nnls_solve(&Matrix::<f64>::zeros(0, 0), &[], 0.0).is_err());
    }

    #[test]
    fn rank_deficient_design_is_handled() {
        // Duplicate columns: any split of the mass is optimal.
        let a = Matrix::from_rows(&[vec![1.0f64, 1.0], vec![2.0, 2.0]]);
        let b = [1.0, 2.0];
        let x = nnls_solve(&a, &b, 0.0).unwrap();
        assert!((x[0] + x[1] - 1.0).abs() < 1e-10);
        assert!(kkt_residual(&a, &b, 0.0, &x) < 1e-9);
    }

    #[test]
    fn zero_column_stays_zero() {
        let a = Matrix::from_rows(&[vec![0.0f64, 1.0], vec![0.0, 1.0]]);
        let x = nnls_solve(&a, &[2.0, 2.0], 0.0).unwrap();
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn works_in_f32() {
        let a = Matrix::from_rows(&[vec![1.0f32, 0.0], vec![0.0, 2.0]]);
        let x = nnls_solve(&a, &[1.0, -4.0], 0.0).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6);
        assert_eq!(x[1], 0.0);
    }
}
