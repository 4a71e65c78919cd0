//! Temporal-difference loss on a consecutive pair.
//!
//! `L_α = (α/2)(Δy − Δŷ)² + ((1−α)/2)(y_next − ŷ_next)²` with
//! `Δy = y_next − y_prev`. At `α = 0` this is the halved square loss on the
//! later point; at `α = 1` it only sees increments.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdParams {
    alpha: f64,
}

impl TdParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid!("TD parameter {alpha} not in [0, 1]"));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn increments_only() -> Self {
        Self { alpha: 1.0 }
    }

    pub fn pointwise() -> Self {
        Self { alpha: 0.0 }
    }
}

pub fn td_loss(params: TdParams, y_prev: f64, y_next: f64, yhat_prev: f64, yhat_next: f64) -> f64 {
    let a = params.alpha;
    let inc = (y_next - y_prev) - (yhat_next - yhat_prev);
    let point = y_next - yhat_next;
    0.5 * a * inc * inc + 0.5 * (1.0 - a) * point * point
}

/// Partial derivatives of [`td_loss`] with respect to `(ŷ_prev, ŷ_next)`.
pub fn td_loss_output_grads(params: TdParams, y_prev: f64, y_next: f64, yhat_prev: f64, yhat_next: f64) -> (f64, f64) {
    let a = params.alpha;
    let inc = (y_next - y_prev) - (yhat_next - yhat_prev);
    let point = y_next - yhat_next;
    (a * inc, -a * inc - (1.0 - a) * point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let one = TdParams::increments_only();
        assert_eq!(td_loss(one, 0.5, -1.0, 2.5, 1.0), 0.0);
        let zero = TdParams::pointwise();
        assert_eq!(td_loss(zero, 5.0, 1.0, -7.0, 3.0), 0.5 * 4.0);
        let half = TdParams::new(0.5).unwrap();
        assert_eq!(td_loss(half, 0.0, 2.0, 0.0, 0.0), 2.0);
        assert!(TdParams::new(1.5).is_err());
        assert!(TdParams::new(-0.1).is_err());
    }

    #[test]
    fn grads_vanish_at_fit_and_ignore_prev_when_pointwise() {
        let p = TdParams::new(0.7).unwrap();
        assert_eq!(td_loss_output_grads(p, 1.0, -1.0, 1.0, -1.0), (0.0, 0.0));
        let (gp, _) = td_loss_output_grads(TdParams::pointwise(), 1.0, 2.0, 7.0, -3.0);
        assert_eq!(gp, 0.0);
    }

    proptest! {
        #[test]
        fn grads_match_central_differences(
            alpha in 0.0f64..=1.0,
            y in proptest::array::uniform4(-3.0f64..3.0),
        ) {
            let p = TdParams::new(alpha).unwrap();
            let [yp, yn, hp, hn] = y;
            let h = 1e-5;
            let fd_prev = (td_loss(p, yp, yn, hp + h, hn) - td_loss(p, yp, yn, hp - h, hn)) / (2.0 * h);
            let fd_next = (td_loss(p, yp, yn, hp, hn + h) - td_loss(p, yp, yn, hp, hn - h)) / (2.0 * h);
            let (gp, gn) = td_loss_output_grads(p, yp, yn, hp, hn);
            prop_assert!((gp - fd_prev).abs() <= 1e-6 * gp.abs().max(1.0));
            prop_assert!((gn - fd_next).abs() <= 1e-6 * gn.abs().max(1.0));
        }

        #[test]
        fn nonnegative_and_convex(
            alpha in 0.0f64..=1.0,
            y in proptest::array::uniform4(-3.0f64..3.0),
            dir in proptest::array::uniform2(-2.0f64..2.0),
        ) {
            let p = TdParams::new(alpha).unwrap();
            let [yp, yn, hp, hn] = y;
            prop_assert!(td_loss(p, yp, yn, hp, hn) >= 0.0);
            // quadratic form of the Hessian [[α, −α], [−α, 1]]
            let [u, v] = dir;
            let q = alpha * u * u - 2.0 * alpha * u * v + v * v;
            prop_assert!(q >= -1e-12);
        }

        #[test]
        fn shift_invariant_at_alpha_one(
            y in proptest::array::uniform4(-3.0f64..3.0),
            c in -5.0f64..5.0,
        ) {
            let p = TdParams::increments_only();
            let [yp, yn, hp, hn] = y;
            let base = td_loss(p, yp, yn, hp, hn);
            let shifted = td_loss(p, yp, yn, hp + c, hn + c);
            prop_assert!((base - shifted).abs() <= 1e-12 * base.max(1.0));
        }
    }
}
