use log::warn;

/// Probabilities passed to [`bce_loss`] are clamped into
/// `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-12;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a probability against a {0,1} label.
/// Returns `(loss, d_loss/d_p)`.
pub fn bce_loss(p: f64, label: u8) -> (f64, f64) {
    let clamped = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if clamped != p {
        warn!("bce_loss: probability {p} clamped to {clamped}");
    }
    let y = f64::from(label.min(1));
    let loss = -(y * clamped.ln() + (1.0 - y) * (1.0 - clamped).ln());
    let grad = -y / clamped + (1.0 - y) / (1.0 - clamped);
    (loss, grad)
}

/// Binary cross-entropy evaluated from the logit, stable for large `|z|`.
/// Returns `(loss, d_loss/d_z)`.
pub fn bce_with_logit(z: f64, label: u8) -> (f64, f64) {
    let y = f64::from(label.min(1));
    let loss = z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
    (loss, sigmoid(z) - y)
}

/// Squared error `(target - pred)²` and its gradient with respect to `pred`.
pub fn mse_loss(pred: f64, target: f64) -> (f64, f64) {
    let diff = pred - target;
    (diff * diff, 2.0 * diff)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_at_half() {
        let (l, _) = bce_loss(0.5, 1);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        let (l0, _) = bce_loss(0.5, 0);
        assert!((l0 - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let h = 1e-6;
        for &p in &[0.03, 0.2, 0.5, 0.77, 0.95] {
            for label in [0u8, 1] {
                let (_, g) = bce_loss(p, label);
                let fd = (bce_loss(p + h, label).0 - bce_loss(p - h, label).0) / (2.0 * h);
                assert!((g - fd).abs() / g.abs().max(1.0) < 1e-8, "p={p} label={label} g={g} fd={fd}");
            }
        }
    }

    #[test]
    fn bce_clamps_out_of_range() {
        let (l, g) = bce_loss(0.0, 1);
        assert!(l.is_finite() && g.is_finite());
        assert!((l + PROB_CLAMP.ln()).abs() < 1e-9);
        let (l, _) = bce_loss(1.5, 0);
        assert!(l.is_finite());
    }

    #[test]
    fn logit_form_agrees_with_probability_form() {
        for &z in &[-8.0, -1.3, 0.0, 0.4, 5.0] {
            for label in [0u8, 1] {
                let (a, gz) = bce_with_logit(z, label);
                let p = sigmoid(z);
                let (b, gp) = bce_loss(p, label);
                assert!((a - b).abs() < 1e-12);
                assert!((gz - gp * p * (1.0 - p)).abs() < 1e-12);
            }
        }
        let (l, _) = bce_with_logit(-800.0, 1);
        assert!((l - 800.0).abs() < 1e-9);
    }

    #[test]
    fn mse_zero_at_target() {
        assert_eq!(mse_loss(3.5, 3.5), (0.0, 0.0));
        assert_eq!(mse_loss(0.0, 10.0), (100.0, -20.0));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-1000.0) >= 0.0);
        assert!(sigmoid(1000.0) <= 1.0);
    }
}
