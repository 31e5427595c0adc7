//! Step-length formulas of the damped Gauss-Newton iteration. All norms are
//! scaled norms supplied by the caller.

/// A-priori estimate `λ⁽⁰⁾ = min(1, μ)` with
/// `μ = ‖Δx_{k−1}‖ ‖Δx̄_k‖ / (ρ ‖Δx_k‖) · λ_{k−1}`; `ρ = 0` gives 1.
pub fn apriori_damping(
    prev_correction: f64,
    simplified: f64,
    correction: f64,
    rho: f64,
    prev_lambda: f64,
) -> f64 {
    let denom = rho * correction;
    if denom == 0.0 {
        return 1.0;
    }
    let mu = prev_correction * simplified / denom * prev_lambda;
    if mu.is_nan() {
        return 1.0;
    }
    mu.min(1.0)
}

/// A-posteriori correction after a failed monotonicity test:
/// `min(1, λ/2, μ/2)` with `μ = ‖Δx‖ λ² / ‖Δx̄ − (1−λ)Δx‖`.
pub fn aposteriori_damping(lambda: f64, correction: f64, deviation: f64) -> f64 {
    let mu = if deviation > 0.0 {
        correction * lambda * lambda / deviation
    } else {
        f64::INFINITY
    };
    1.0f64.min(0.5 * lambda).min(0.5 * mu)
}

/// `κ = ‖Δx̄_{k+1}‖ / ‖Δx_k‖`, zero when the correction vanishes.
pub fn incompatibility_factor(simplified: f64, correction: f64) -> f64 {
    if correction == 0.0 {
        0.0
    } else {
        simplified / correction
    }
}
