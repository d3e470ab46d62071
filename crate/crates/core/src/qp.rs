//! Nonnegative quadratic programming for the GEM dual.
//!
//! Solves `min_v vᵀQv + cᵀv  s.t. v ≥ 0` for symmetric positive semidefinite
//! `Q`. The objective carries no `½`, so its gradient is `2Qv + c`.
//!
//! The method is projected gradient descent with Barzilai–Borwein steps,
//! safeguarded by backtracking so the objective never increases.

use crate::error::{Error, Result};
use crate::scalar::{vec, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct NqpProblem<T> {
    n: usize,
    /// Row-major `n × n`.
    q: Vec<T>,
    c: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NqpOptions<T> {
    pub max_iters: usize,
    /// KKT tolerance; `None` means `1e-9 · (1 + ‖c‖)`.
    pub tol: Option<T>,
    /// Keep the objective value of every iterate.
    pub record_history: bool,
}

impl<T> Default for NqpOptions<T> {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: None,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NqpSolution<T> {
    pub v: Vec<T>,
    pub objective: T,
    pub iterations: usize,
    pub kkt_residual: T,
    /// Objective per iterate, starting at `v = 0`. Empty unless requested.
    pub history: Vec<T>,
}

impl<T: Scalar> NqpProblem<T> {
    /// Validates shape, symmetry (within 1e-10) and positive semidefiniteness
    /// (smallest eigenvalue ≥ -1e-10).
    pub fn new(q: Vec<T>, c: Vec<T>) -> Result<Self> {
        let n = c.len();
        if q.len() != n * n {
            return Err(Error::ShapeMismatch {
                what: "QP matrix",
                expected: n * n,
                found: q.len(),
            });
        }
        let tol = T::of(1e-10);
        for i in 0..n {
            for j in 0..i {
                if (q[i * n + j] - q[j * n + i]).abs() > tol {
                    return Err(Error::InvalidConfig(format!(
                        "QP matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if let Some(min) = min_eigenvalue(&q, n) {
            if min < -tol {
                return Err(Error::Domain {
                    what: "smallest QP eigenvalue",
                    value: min.to_f64_lossy(),
                });
            }
        }
        Ok(Self { n, q, c })
    }

    /// `Q = GᵀG`, `c = 2 Gᵀg` for the columns `G = (g_1 … g_m)`; PSD by
    /// construction, so no eigenvalue check is done.
    pub fn from_gram(columns: &[&[T]], g: &[T]) -> Self {
        let n = columns.len();
        let mut q = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let d = vec::dot(columns[i], columns[j]);
                q[i * n + j] = d;
                q[j * n + i] = d;
            }
        }
        let c = columns.iter().map(|col| T::of(2.0) * vec::dot(col, g)).collect();
        Self { n, q, c }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> &[T] {
        &self.q
    }

    pub fn c(&self) -> &[T] {
        &self.c
    }

    fn q_times(&self, v: &[T]) -> Vec<T> {
        self.q.chunks_exact(self.n.max(1)).take(self.n).map(|row| vec::dot(row, v)).collect()
    }

    pub fn objective(&self, v: &[T]) -> T {
        vec::dot(v, &self.q_times(v)) + vec::dot(&self.c, v)
    }

    /// `2Qv + c`
    pub fn gradient(&self, v: &[T]) -> Vec<T> {
        let two = T::of(2.0);
        self.q_times(v)
            .into_iter()
            .zip(&self.c)
            .map(|(qv, &c)| two * qv + c)
            .collect()
    }

    /// Worst violation of the optimality conditions: for each coordinate,
    /// either `v_i ≤ tol` with `grad_i ≥ -tol`, or `|grad_i| ≤ tol`.
    pub fn kkt_residual(&self, v: &[T], tol: T) -> T {
        self.gradient(v)
            .into_iter()
            .zip(v)
            .map(|(gi, &vi)| if vi <= tol { (-gi).max(T::zero()) } else { gi.abs() })
            .fold(T::zero(), T::max)
    }

    fn inf_norm(&self) -> T {
        self.q
            .chunks_exact(self.n.max(1))
            .take(self.n)
            .map(|row| row.iter().map(|x| x.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }
}

fn project<T: Scalar>(v: &mut [T]) {
    for x in v {
        *x = x.max(T::zero());
    }
}

pub fn solve_nqp<T: Scalar>(p: &NqpProblem<T>, opts: &NqpOptions<T>) -> Result<NqpSolution<T>> {
    let tol = opts
        .tol
        .unwrap_or_else(|| T::of(1e-9) * (T::one() + vec::norm(&p.c)));
    let mut v = vec![T::zero(); p.n];
    let mut f = T::zero();
    let mut grad = p.c.clone();
    let mut history = Vec::new();
    if opts.record_history {
        history.push(f);
    }

    let q_norm = p.inf_norm();
    // Lipschitz constant of the gradient is at most 2‖Q‖∞.
    let fallback = if q_norm > T::zero() {
        T::one() / (T::of(2.0) * q_norm)
    } else {
        T::one()
    };
    let mut step = fallback;
    let mut iterations = 0;
    let mut residual = p.kkt_residual(&v, tol);

    while residual > tol {
        if iterations >= opts.max_iters {
            return Err(Error::QpNonConvergence {
                iterations,
                residual: residual.to_f64_lossy(),
            });
        }
        iterations += 1;

        let mut trial_step = step;
        let mut accepted = None;
        for _ in 0..64 {
            let mut cand: Vec<T> = v.iter().zip(&grad).map(|(&x, &g)| x - trial_step * g).collect();
            project(&mut cand);
            let f_cand = p.objective(&cand);
            if f_cand <= f {
                accepted = Some((cand, f_cand));
                break;
            }
            trial_step = trial_step * T::of(0.5);
        }
        let Some((next, f_next)) = accepted else {
            // No descent is representable any more; accept if the conditions hold.
            break;
        };

        let next_grad = p.gradient(&next);
        let s: Vec<T> = next.iter().zip(&v).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = next_grad.iter().zip(&grad).map(|(&a, &b)| a - b).collect();
        let sy = vec::dot(&s, &y);
        step = if sy > T::zero() {
            vec::dot(&s, &s) / sy
        } else {
            fallback
        };

        let stalled = s.iter().all(|x| x.is_zero());
        v = next;
        f = f_next;
        grad = next_grad;
        // Once the active set has settled, jump to the minimizer on the free
        // coordinates; gradient steps alone crawl on ill-conditioned Q.
        if let Some(x) = subspace_minimizer(p, &v) {
            let fx = p.objective(&x);
            if fx <= f {
                grad = p.gradient(&x);
                v = x;
                f = fx;
            }
        }
        if opts.record_history {
            history.push(f);
        }
        residual = p.kkt_residual(&v, tol);
        if stalled {
            break;
        }
    }

    if residual > tol {
        return Err(Error::QpNonConvergence {
            iterations,
            residual: residual.to_f64_lossy(),
        });
    }
    Ok(NqpSolution {
        v,
        objective: f,
        iterations,
        kkt_residual: residual,
        history,
    })
}

/// Solves `2 Q_FF x_F = −c_F` on the free set `F = {i : v_i > 0}` with the
/// other coordinates at zero. `None` if the set is empty, the block is
/// numerically singular or the solution leaves the orthant.
fn subspace_minimizer<T: Scalar>(p: &NqpProblem<T>, v: &[T]) -> Option<Vec<T>> {
    let free: Vec<usize> = (0..p.n).filter(|&i| v[i] > T::zero()).collect();
    let m = free.len();
    if m == 0 {
        return None;
    }
    // Augmented system [2 Q_FF | −c_F], Gaussian elimination with partial pivoting.
    let mut a: Vec<Vec<T>> = free
        .iter()
        .map(|&i| {
            let mut row: Vec<T> = free.iter().map(|&j| T::of(2.0) * p.q[i * p.n + j]).collect();
            row.push(-p.c[i]);
            row
        })
        .collect();
    let scale = free
        .iter()
        .map(|&i| p.q[i * p.n + i].abs())
        .fold(T::zero(), T::max);
    let eps = T::of(1e-12) * scale.max(T::min_positive_value());
    for col in 0..m {
        let pivot = (col..m).max_by(|&x, &y| {
            a[x][col]
                .abs()
                .partial_cmp(&a[y][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() <= eps {
            return None;
        }
        a.swap(col, pivot);
        for r in col + 1..m {
            let factor = a[r][col] / a[col][col];
            if factor.is_zero() {
                continue;
            }
            for k in col..=m {
                let sub = factor * a[col][k];
                a[r][k] = a[r][k] - sub;
            }
        }
    }
    let mut x = vec![T::zero(); m];
    for r in (0..m).rev() {
        let tail: T = (r + 1..m).map(|k| a[r][k] * x[k]).sum();
        x[r] = (a[r][m] - tail) / a[r][r];
    }
    if x.iter().any(|&xi| !(xi >= T::zero())) {
        return None;
    }
    let mut out = vec![T::zero(); p.n];
    for (&i, xi) in free.iter().zip(x) {
        out[i] = xi;
    }
    Some(out)
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
fn min_eigenvalue<T: Scalar>(q: &[T], n: usize) -> Option<T> {
    if n == 0 {
        return None;
    }
    let mut a = q.to_vec();
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let diag: T = (0..n).map(|i| a[i * n + i] * a[i * n + i]).sum();
        if off <= eps * eps * diag || off.is_zero() {
            break;
        }
        for p in 0..n {
            for r in p + 1..n {
                let apr = a[p * n + r];
                if apr.is_zero() {
                    continue;
                }
                let theta = (a[r * n + r] - a[p * n + p]) / (T::of(2.0) * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akr = a[k * n + r];
                    a[k * n + p] = c * akp - s * akr;
                    a[k * n + r] = s * akp + c * akr;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let ark = a[r * n + k];
                    a[p * n + k] = c * apk - s * ark;
                    a[r * n + k] = s * apk + c * ark;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).reduce(T::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonnegative_linear_term_gives_zero() {
        let p = NqpProblem::new(vec![2.0, 0.5, 0.5, 1.0], vec![0.3, 0.0]).unwrap();
        let s = solve_nqp(&p, &NqpOptions::default()).unwrap();
        assert_eq!(s.v, vec![0.0, 0.0]);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn one_dimensional_calculus() {
        let p = NqpProblem::new(vec![1.0_f64], vec![-2.0]).unwrap();
        let s = solve_nqp(&p, &NqpOptions::default()).unwrap();
        assert!((s.v[0] - 1.0).abs() < 1e-12);
        assert!((s.objective + 1.0).abs() < 1e-12);
    }

    #[test]
    fn active_constraint_is_respected() {
        // Unconstrained optimum (1, -1); constrained optimum has v1 = 0.
        let p = NqpProblem::new(vec![1.0_f64, 0.0, 0.0, 1.0], vec![-2.0, 2.0]).unwrap();
        let s = solve_nqp(&p, &NqpOptions::default()).unwrap();
        assert!((s.v[0] - 1.0).abs() < 1e-9);
        assert_eq!(s.v[1], 0.0);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        assert!(NqpProblem::new(vec![1.0_f64, 0.5, 0.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(matches!(
            NqpProblem::new(vec![1.0_f64, 2.0, 2.0, 1.0], vec![0.0, 0.0]),
            Err(Error::Domain { .. })
        ));
        assert!(NqpProblem::new(vec![1.0_f64; 3], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn zero_matrix_with_negative_c_does_not_converge() {
        let p = NqpProblem::new(vec![0.0_f64], vec![-1.0]).unwrap();
        let opts = NqpOptions {
            max_iters: 50,
            ..NqpOptions::default()
        };
        assert!(matches!(
            solve_nqp(&p, &opts),
            Err(Error::QpNonConvergence { iterations: 50, .. })
        ));
    }

    #[test]
    fn rank_deficient_gram_matrix() {
        let a = [1.0_f64, 0.0];
        let g = [-1.0_f64, 0.0];
        let p = NqpProblem::from_gram(&[&a, &a], &g);
        let s = solve_nqp(&p, &NqpOptions::default()).unwrap();
        // Any split with v1 + v2 = 1 is optimal.
        assert!((s.v[0] + s.v[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn objective_history_never_increases() {
        let cols: Vec<Vec<f64>> = vec![
            vec![1.0, 0.2, -0.3, 0.0],
            vec![0.1, 1.0, 0.4, -0.2],
            vec![-0.5, 0.3, 1.0, 0.7],
        ];
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        let g = [-1.0, -0.8, -0.9, 0.1];
        let p = NqpProblem::from_gram(&refs, &g);
        let s = solve_nqp(
            &p,
            &NqpOptions {
                record_history: true,
                ..NqpOptions::default()
            },
        )
        .unwrap();
        assert!(s.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(s.history.len(), s.iterations + 1);
    }

    #[test]
    fn jacobi_eigenvalue() {
        let m = [2.0_f64, 1.0, 1.0, 2.0];
        assert!((min_eigenvalue(&m, 2).unwrap() - 1.0).abs() < 1e-12);
    }
}
