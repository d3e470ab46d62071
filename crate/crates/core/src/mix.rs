//! Mixed stochastic gradients.
//!
//! Every episodic-memory strategy is a choice of coefficients in
//!
//! ```text
//! mixed = α₁ · g + α₂ · g_ref
//! ```
//!
//! where `g` is the current-task gradient and `g_ref` the gradient on the
//! episodic memory (for GEM, one reference gradient per past task and a vector
//! `α₂`). The update is then a plain SGD step along `mixed`.
//!
//! | strategy | α₁ | α₂ |
//! |----------|----|----|
//! | VAN      | 1  | 0 |
//! | A-GEM    | 1  | projection coefficient when `gᵀg_ref ≤ 0`, else 0 |
//! | GEM      | 1  | dual QP solution `v*` |
//! | MEGA-I   | 1 or 0 | `ℓ_ref/ℓ_t` above the threshold ε, else 1 with α₁ = 0 |
//! | MEGA-II  | from rotating `g` by the loss-balanced angle θ | |

use crate::error::{Error, Result};
use crate::qp::{solve_nqp, NqpOptions, NqpProblem};
use crate::scalar::{vec, Scalar};

#[derive(Debug, Clone, Copy)]
pub struct MixInputs<'a, T> {
    pub g: &'a [T],
    pub loss_t: T,
    pub g_ref: &'a [T],
    pub loss_ref: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Alpha2<T> {
    Scalar(T),
    /// GEM: one multiplier per past task.
    Vector(Vec<T>),
}

/// Per-step geometry. Fields are `None` where undefined.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics<T> {
    /// Angle between `g` and `g_ref`.
    pub theta_tilde: Option<T>,
    /// Angle between `mixed` and `g`.
    pub theta: Option<T>,
    /// `ℓ_t / ℓ_ref`
    pub k1: Option<T>,
    /// `‖g‖ / ‖g_ref‖`
    pub k2: Option<T>,
    pub cos_theta1: Option<T>,
    pub cos_theta2: Option<T>,
    /// The strategy hit an undefined case and fell back.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixDecision<T> {
    pub alpha1: T,
    pub alpha2: Alpha2<T>,
    pub mixed: Vec<T>,
    pub diagnostics: Option<Diagnostics<T>>,
}

impl<T: Scalar> MixDecision<T> {
    fn pass_through(g: &[T]) -> Self {
        Self {
            alpha1: T::one(),
            alpha2: Alpha2::Scalar(T::zero()),
            mixed: g.to_vec(),
            diagnostics: None,
        }
    }

    fn with_diagnostics(mut self, d: Diagnostics<T>) -> Self {
        self.diagnostics = Some(d);
        self
    }

    pub fn alpha2_scalar(&self) -> Option<T> {
        match self.alpha2 {
            Alpha2::Scalar(a) => Some(a),
            Alpha2::Vector(_) => None,
        }
    }
}

fn ratio<T: Scalar>(num: T, den: T) -> Option<T> {
    if den.is_zero() {
        if num.is_zero() {
            None
        } else {
            Some(T::infinity())
        }
    } else {
        Some(num / den)
    }
}

/// Geometry shared by every two-gradient strategy.
pub fn pair_diagnostics<T: Scalar>(inputs: &MixInputs<'_, T>, mixed: &[T]) -> Diagnostics<T> {
    let theta_tilde = vec::angle(inputs.g, inputs.g_ref);
    let k1 = ratio(inputs.loss_t, inputs.loss_ref);
    let k2 = ratio(vec::norm(inputs.g), vec::norm(inputs.g_ref));
    let (cos_theta1, cos_theta2) = match (k1, k2, theta_tilde) {
        (Some(k1), Some(k2), Some(tt)) => cos_theta_closed_forms(k1, k2, tt)
            .map(|(a, b)| (Some(a), Some(b)))
            .unwrap_or((None, None)),
        _ => (None, None),
    };
    Diagnostics {
        theta_tilde,
        theta: vec::angle(mixed, inputs.g),
        k1,
        k2,
        cos_theta1,
        cos_theta2,
        degenerate: false,
    }
}

/// Plain SGD on the current task.
pub fn mix_van<T: Scalar>(inputs: &MixInputs<'_, T>) -> MixDecision<T> {
    MixDecision::pass_through(inputs.g)
}

/// A-GEM: project `g` onto the half-space `{x : xᵀg_ref ≥ 0}` when it points
/// against the reference gradient.
pub fn mix_agem<T: Scalar>(inputs: &MixInputs<'_, T>) -> MixDecision<T> {
    let (g, g_ref) = (inputs.g, inputs.g_ref);
    let ref_sq = vec::dot(g_ref, g_ref);
    let d = vec::dot(g, g_ref);
    let decision = if ref_sq.is_zero() || d > T::zero() {
        MixDecision::pass_through(g)
    } else {
        let alpha2 = -d / ref_sq;
        MixDecision {
            alpha1: T::one(),
            alpha2: Alpha2::Scalar(alpha2),
            mixed: vec::lin_comb(T::one(), g, alpha2, g_ref),
            diagnostics: None,
        }
    };
    let diag = pair_diagnostics(inputs, &decision.mixed);
    decision.with_diagnostics(diag)
}

/// GEM: the closest vector to `g` that is non-obtuse to every past-task
/// reference gradient, found through its nonnegative dual.
///
/// With `G = (g_1 … g_{t-1})` the dual is `min_v ½vᵀGᵀGv + gᵀGv, v ≥ 0`; it is
/// handed to the solver as `vᵀ(GᵀG)v + (2Gᵀg)ᵀv`, which has the same
/// minimizer. The result is `g + G v*`.
pub fn mix_gem<T: Scalar>(
    g: &[T],
    ref_grads: &[&[T]],
    opts: &NqpOptions<T>,
) -> Result<MixDecision<T>> {
    let m = ref_grads.len();
    if ref_grads.iter().all(|gk| vec::dot(g, gk) >= T::zero()) {
        return Ok(MixDecision {
            alpha1: T::one(),
            alpha2: Alpha2::Vector(vec![T::zero(); m]),
            mixed: g.to_vec(),
            diagnostics: None,
        });
    }
    let problem = NqpProblem::from_gram(ref_grads, g);
    let solution = solve_nqp(&problem, opts)?;
    let mut mixed = g.to_vec();
    for (&v, gk) in solution.v.iter().zip(ref_grads) {
        if !v.is_zero() {
            vec::axpy(v, gk, &mut mixed);
        }
    }
    Ok(MixDecision {
        alpha1: T::one(),
        alpha2: Alpha2::Vector(solution.v),
        mixed,
        diagnostics: None,
    })
}

/// MEGA-I: balance by the loss ratio above the sensitivity threshold
/// `epsilon`; below it follow the memory gradient alone.
pub fn mix_mega1<T: Scalar>(inputs: &MixInputs<'_, T>, epsilon: T) -> Result<MixDecision<T>> {
    if !(epsilon > T::zero()) {
        return Err(Error::Domain {
            what: "epsilon",
            value: epsilon.to_f64_lossy(),
        });
    }
    let (g, g_ref) = (inputs.g, inputs.g_ref);
    let decision = if inputs.loss_t.is_zero() && inputs.loss_ref.is_zero() {
        MixDecision::pass_through(g)
    } else if inputs.loss_t > epsilon {
        let alpha2 = inputs.loss_ref / inputs.loss_t;
        MixDecision {
            alpha1: T::one(),
            alpha2: Alpha2::Scalar(alpha2),
            mixed: vec::lin_comb(T::one(), g, alpha2, g_ref),
            diagnostics: None,
        }
    } else {
        MixDecision {
            alpha1: T::zero(),
            alpha2: Alpha2::Scalar(T::one()),
            mixed: g_ref.to_vec(),
            diagnostics: None,
        }
    };
    let diag = pair_diagnostics(inputs, &decision.mixed);
    Ok(decision.with_diagnostics(diag))
}

/// The angle `θ ∈ [0, θ̃]` maximizing `k cos β + cos(θ̃ − β)` over `β ∈ [0, π]`.
///
/// `k = +∞` is accepted. For `θ̃ ∈ (0, π)` the maximizer is
/// `π/2 − arctan((k + cos θ̃)/sin θ̃)`, evaluated as `atan2(sin θ̃, k + cos θ̃)`.
/// At `θ̃ = π` the objective reduces to `(k − 1) cos β`: `θ = 0` for `k > 1`,
/// `θ = π` for `k < 1` and the midpoint `π/2` when every β ties.
pub fn mega2_angle<T: Scalar>(k: T, theta_tilde: T) -> Result<T> {
    if !(theta_tilde >= T::zero() && theta_tilde <= T::PI()) {
        return Err(Error::Domain {
            what: "theta_tilde",
            value: theta_tilde.to_f64_lossy(),
        });
    }
    if !(k >= T::zero()) {
        return Err(Error::Domain {
            what: "k",
            value: k.to_f64_lossy(),
        });
    }
    if k.is_infinite() || theta_tilde.is_zero() {
        return Ok(T::zero());
    }
    if theta_tilde == T::PI() {
        return Ok(match k.partial_cmp(&T::one()) {
            Some(std::cmp::Ordering::Greater) => T::zero(),
            Some(std::cmp::Ordering::Less) => T::PI(),
            _ => T::FRAC_PI_2(),
        });
    }
    if k.is_zero() {
        return Ok(theta_tilde);
    }
    Ok(theta_tilde.sin().atan2(k + theta_tilde.cos()))
}

/// Coefficients `(a, b)` with `a g + b g_ref` of norm `‖g‖` at angle `θ` from
/// `g`, rotated towards `g_ref`. Solves
///
/// ```text
/// a ‖g‖²    + b gᵀg_ref  = ‖g‖² cos θ
/// a gᵀg_ref + b ‖g_ref‖² = ‖g‖ ‖g_ref‖ cos(θ̃ − θ)
/// ```
///
/// by Cramer's rule on the determinant `‖g‖²‖g_ref‖² − (gᵀg_ref)²`. A
/// (numerically) singular system means `g ∥ g_ref` or a zero vector, and
/// yields `(1, 0)`, as does `θ = 0`.
pub fn solve_coefficients<T: Scalar>(g: &[T], g_ref: &[T], theta: T) -> (T, T) {
    let gg = vec::dot(g, g);
    let rr = vec::dot(g_ref, g_ref);
    let gr = vec::dot(g, g_ref);
    let det = gg * rr - gr * gr;
    if theta.is_zero() || gg.is_zero() || rr.is_zero() || det <= T::of(1e-14) * gg * rr {
        return (T::one(), T::zero());
    }
    let theta_tilde = vec::angle(g, g_ref).expect("nonzero vectors");
    let rhs1 = gg * theta.cos();
    let rhs2 = gg.sqrt() * rr.sqrt() * (theta_tilde - theta).cos();
    let a = (rhs1 * rr - gr * rhs2) / det;
    let b = (gg * rhs2 - gr * rhs1) / det;
    (a, b)
}

/// MEGA-II: rotate `g` towards `g_ref` by the loss-balanced angle, keeping
/// its magnitude.
pub fn mix_mega2<T: Scalar>(inputs: &MixInputs<'_, T>) -> MixDecision<T> {
    let (g, g_ref) = (inputs.g, inputs.g_ref);
    if vec::is_zero(g) {
        let mut diag = pair_diagnostics(inputs, g);
        diag.degenerate = true;
        return MixDecision {
            alpha1: T::one(),
            alpha2: Alpha2::Scalar(T::zero()),
            mixed: g.to_vec(),
            diagnostics: Some(diag),
        };
    }
    let k = if inputs.loss_ref.is_zero() {
        T::infinity()
    } else {
        inputs.loss_t / inputs.loss_ref
    };
    let theta = vec::angle(g, g_ref).and_then(|tt| mega2_angle(k, tt).ok());
    let decision = match theta {
        Some(theta) if !theta.is_zero() => {
            let (a, b) = solve_coefficients(g, g_ref, theta);
            MixDecision {
                alpha1: a,
                alpha2: Alpha2::Scalar(b),
                mixed: vec::lin_comb(a, g, b, g_ref),
                diagnostics: None,
            }
        }
        _ => MixDecision::pass_through(g),
    };
    let diag = pair_diagnostics(inputs, &decision.mixed);
    decision.with_diagnostics(diag)
}

/// `cos θ₁` (MEGA-I mixing) and `cos θ₂` (MEGA-II rotation) in terms of the
/// loss ratio `k1`, the gradient-norm ratio `k2` and `θ̃`:
///
/// ```text
/// cos θ₂ = (k₁ + cos θ̃) / √(k₁² + 2k₁ cos θ̃ + 1)
/// cos θ₁ = (k₁k₂ + cos θ̃) / √(k₁²k₂² + 2k₁k₂ cos θ̃ + 1)
/// ```
pub fn cos_theta_closed_forms<T: Scalar>(k1: T, k2: T, theta_tilde: T) -> Result<(T, T)> {
    if !(theta_tilde > T::zero() && theta_tilde < T::PI()) {
        return Err(Error::Domain {
            what: "theta_tilde",
            value: theta_tilde.to_f64_lossy(),
        });
    }
    for (what, k) in [("k1", k1), ("k2", k2)] {
        if !(k >= T::zero() && k.is_finite()) {
            return Err(Error::Domain {
                what,
                value: k.to_f64_lossy(),
            });
        }
    }
    let c = theta_tilde.cos();
    let f = |k: T| -> Result<T> {
        let den = (k * k + T::of(2.0) * k * c + T::one()).sqrt();
        if den.is_zero() || !den.is_finite() {
            return Err(Error::Undefined("cos theta closed form"));
        }
        Ok((k + c) / den)
    };
    Ok((f(k1 * k2)?, f(k1)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn inputs<'a>(g: &'a [f64], g_ref: &'a [f64], lt: f64, lr: f64) -> MixInputs<'a, f64> {
        MixInputs {
            g,
            loss_t: lt,
            g_ref,
            loss_ref: lr,
        }
    }

    #[test]
    fn van_passes_through() {
        let d = mix_van(&inputs(&[1.0, -2.0], &[3.0, 3.0], 1.0, 1.0));
        assert_eq!(d.mixed, vec![1.0, -2.0]);
        assert!(d.diagnostics.is_none());
        let d = mix_van(&inputs(&[0.0, 0.0], &[3.0, 3.0], 1.0, 1.0));
        assert_eq!(d.mixed, vec![0.0, 0.0]);
    }

    #[test]
    fn agem_cases() {
        let d = mix_agem(&inputs(&[1.0, 0.0], &[1.0, 1.0], 1.0, 1.0));
        assert_eq!(d.mixed, vec![1.0, 0.0]);
        assert_eq!(d.alpha2_scalar(), Some(0.0));

        let d = mix_agem(&inputs(&[1.0, 0.0], &[-1.0, 1.0], 1.0, 1.0));
        assert_eq!(d.alpha2_scalar(), Some(0.5));
        assert_eq!(d.mixed, vec![0.5, 0.5]);
        assert_eq!(vec::dot(&d.mixed, &[-1.0, 1.0]), 0.0);

        let d = mix_agem(&inputs(&[2.0, -1.0], &[-2.0, 1.0], 1.0, 1.0));
        assert_eq!(d.alpha2_scalar(), Some(1.0));
        assert_eq!(d.mixed, vec![0.0, 0.0]);

        let d = mix_agem(&inputs(&[2.0, -1.0], &[0.0, 0.0], 1.0, 1.0));
        assert_eq!(d.mixed, vec![2.0, -1.0]);
    }

    #[test]
    fn gem_without_constraints() {
        let d = mix_gem::<f64>(&[1.0, 2.0], &[], &NqpOptions::default()).unwrap();
        assert_eq!(d.mixed, vec![1.0, 2.0]);
        assert_eq!(d.alpha2, Alpha2::Vector(vec![]));
    }

    #[test]
    fn gem_single_constraint_is_agem() {
        let g = [1.0, 0.0, 0.5];
        let g1 = [-1.0, 1.0, 0.0];
        let gem = mix_gem(&g, &[&g1], &NqpOptions::default()).unwrap();
        let agem = mix_agem(&inputs(&g, &g1, 1.0, 1.0));
        let expected_v = -vec::dot(&g, &g1) / vec::dot(&g1, &g1);
        match &gem.alpha2 {
            Alpha2::Vector(v) => assert!((v[0] - expected_v).abs() < 1e-12),
            _ => unreachable!(),
        }
        for (a, b) in gem.mixed.iter().zip(&agem.mixed) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gem_two_orthogonal_constraints_project_to_origin() {
        let g = [-1.0, -1.0, 0.0];
        let d = mix_gem(&g, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]], &NqpOptions::default()).unwrap();
        for x in &d.mixed {
            assert!(f64::abs(*x) < 1e-8);
        }
    }

    #[test]
    fn mega1_cases() {
        let g = [1.0, 0.0];
        let r = [0.0, 1.0];
        let d = mix_mega1(&inputs(&g, &r, 2.0, 1.0), 1e-3).unwrap();
        assert_eq!((d.alpha1, d.alpha2_scalar()), (1.0, Some(0.5)));
        assert_eq!(d.mixed, vec![1.0, 0.5]);

        let d = mix_mega1(&inputs(&g, &r, 1e-6, 1.0), 1e-3).unwrap();
        assert_eq!((d.alpha1, d.alpha2_scalar()), (0.0, Some(1.0)));
        assert_eq!(d.mixed, r.to_vec());

        let d = mix_mega1(&inputs(&g, &r, 0.5, 0.5), 1e-3).unwrap();
        assert_eq!((d.alpha1, d.alpha2_scalar()), (1.0, Some(1.0)));

        let d = mix_mega1(&inputs(&g, &r, 0.5, 0.0), 1e-3).unwrap();
        assert_eq!((d.alpha1, d.alpha2_scalar()), (1.0, Some(0.0)));

        let d = mix_mega1(&inputs(&g, &r, 0.0, 0.0), 1e-3).unwrap();
        assert_eq!((d.alpha1, d.alpha2_scalar()), (1.0, Some(0.0)));
        assert_eq!(d.mixed, g.to_vec());

        assert!(mix_mega1(&inputs(&g, &r, 0.5, 0.5), 0.0).is_err());
    }

    #[test]
    fn mega2_angle_special_cases() {
        assert_eq!(mega2_angle(f64::INFINITY, 1.0).unwrap(), 0.0);
        assert_eq!(mega2_angle(0.0, 1.3).unwrap(), 1.3);
        assert!((mega2_angle(1.0, FRAC_PI_2).unwrap() - FRAC_PI_4).abs() < 1e-15);
        assert!((mega2_angle(2.0, FRAC_PI_2).unwrap() - (FRAC_PI_2 - 2f64.atan())).abs() < 1e-15);
        assert_eq!(mega2_angle(3.0, 0.0).unwrap(), 0.0);
        assert_eq!(mega2_angle(2.0, PI).unwrap(), 0.0);
        assert_eq!(mega2_angle(0.5, PI).unwrap(), PI);
        assert_eq!(mega2_angle(1.0, PI).unwrap(), FRAC_PI_2);
        assert!(mega2_angle(1.0, -0.1).is_err());
        assert!(mega2_angle(1.0, 3.2).is_err());
        assert!(mega2_angle(-1.0, 1.0).is_err());
        assert!(mega2_angle(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn coefficient_degenerate_cases() {
        assert_eq!(solve_coefficients(&[1.0, 0.0], &[0.0, 1.0], 0.0), (1.0, 0.0));
        assert_eq!(solve_coefficients(&[1.0, 2.0], &[1.0, 2.0], 0.0), (1.0, 0.0));
        assert_eq!(solve_coefficients(&[1.0, 2.0], &[2.0, 4.0], 0.3), (1.0, 0.0));
        assert_eq!(solve_coefficients(&[1.0, 2.0], &[0.0, 0.0], 0.3), (1.0, 0.0));
    }

    #[test]
    fn mega2_zero_reference_loss_is_identity() {
        let g = [0.3, -1.2, 0.7];
        let d = mix_mega2(&inputs(&g, &[1.0, 1.0, 1.0], 0.8, 0.0));
        assert_eq!(d.mixed, g.to_vec());
        assert_eq!((d.alpha1, d.alpha2_scalar()), (1.0, Some(0.0)));
    }

    #[test]
    fn mega2_zero_current_loss_follows_reference() {
        let g = [0.3, -1.2, 0.7];
        let r = [1.0, 1.0, -2.0];
        let d = mix_mega2(&inputs(&g, &r, 0.0, 0.4));
        let expected = vec::norm(&g) / vec::norm(&r);
        assert!(d.alpha1.abs() < 1e-12);
        assert!((d.alpha2_scalar().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn mega2_zero_gradient_is_flagged() {
        let d = mix_mega2(&inputs(&[0.0, 0.0], &[1.0, 0.0], 1.0, 1.0));
        assert_eq!(d.mixed, vec![0.0, 0.0]);
        assert!(d.diagnostics.unwrap().degenerate);
    }

    #[test]
    fn mega2_diagnostics_are_populated() {
        let d = mix_mega2(&inputs(&[1.0, 0.0], &[0.0, 2.0], 1.0, 1.0));
        let diag = d.diagnostics.unwrap();
        assert!((diag.theta_tilde.unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((diag.theta.unwrap() - FRAC_PI_4).abs() < 1e-12);
        assert_eq!(diag.k1, Some(1.0));
        assert_eq!(diag.k2, Some(0.5));
        assert!((diag.cos_theta2.unwrap() - FRAC_PI_4.cos()).abs() < 1e-12);
    }

    #[test]
    fn closed_forms() {
        let (c1, c2) = cos_theta_closed_forms(1.0, 2.0, FRAC_PI_2).unwrap();
        assert!((c1 - 2.0 / 5f64.sqrt()).abs() < 1e-15);
        assert!((c2 - 0.5f64.sqrt()).abs() < 1e-15);
        let (c1, c2) = cos_theta_closed_forms(0.7, 1.0, 1.1).unwrap();
        assert_eq!(c1, c2);
        assert!(cos_theta_closed_forms(1.0, 1.0, 0.0).is_err());
        assert!(cos_theta_closed_forms(1.0, 1.0, PI).is_err());
        assert!(cos_theta_closed_forms(f64::INFINITY, 1.0, 1.0).is_err());
    }
}
