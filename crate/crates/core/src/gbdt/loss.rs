//! Binary logistic loss on the margin scale.

pub fn sigmoid(margin: f64) -> f64 {
    if margin >= 0.0 {
        1.0 / (1.0 + (-margin).exp())
    } else {
        let e = margin.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^m) without overflow.
pub fn softplus(margin: f64) -> f64 {
    margin.max(0.0) + (-margin.abs()).exp().ln_1p()
}

/// −[y ln p + (1−y) ln(1−p)] with p = sigmoid(margin).
pub fn logloss(margin: f64, label: f64) -> f64 {
    softplus(margin) - label * margin
}

/// First derivative of `logloss` in the margin.
pub fn gradient(margin: f64, label: f64) -> f64 {
    sigmoid(margin) - label
}

/// Second derivative of `logloss` in the margin.
pub fn hessian(margin: f64) -> f64 {
    let p = sigmoid(margin);
    p * (1.0 - p)
}

pub fn mean_logloss(margins: &[f64], labels: &[u8]) -> f64 {
    if margins.is_empty() {
        return 0.0;
    }
    let total: f64 = margins.iter().zip(labels).map(|(&m, &y)| logloss(m, y as f64)).sum();
    total / margins.len() as f64
}

/// Log-odds of a rate, clamped so single-class data stays finite.
pub fn clamped_logit(rate: f64, bound: f64) -> f64 {
    let logit = (rate / (1.0 - rate)).ln();
    if logit.is_nan() {
        0.0
    } else {
        logit.clamp(-bound, bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((logloss(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(logloss(800.0, 1.0).abs() < 1e-300);
        assert!((logloss(-800.0, 1.0) - 800.0).abs() < 1e-9);
        assert_eq!(gradient(0.0, 1.0), -0.5);
        assert_eq!(hessian(0.0), 0.25);
        assert_eq!(clamped_logit(1.0, 10.0), 10.0);
        assert_eq!(clamped_logit(0.0, 10.0), -10.0);
        assert!(clamped_logit(0.5, 10.0).abs() < 1e-15);
    }
}
