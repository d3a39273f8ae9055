//! Logistic link and loss.

const PROB_FLOOR: f64 = 1e-15;

/// Logistic function, kept strictly inside (0, 1).
pub fn sigmoid(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Log-loss of a raw margin against a 0/1 target, stable for large |margin|.
pub fn log_loss(margin: f64, target: f64) -> f64 {
    let softplus = margin.max(0.0) + (-margin.abs()).exp().ln_1p();
    softplus - target * margin
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
