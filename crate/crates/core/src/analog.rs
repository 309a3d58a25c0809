//! Behavioural models of the analog softmax chain and the ReLU stage.
//!
//! The softmax is built from three blocks: one exponential block per
//! channel, a weighted summer, and a divider that forms `x_z / x_tot`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `a / v_t` accepted by the exponential block.
pub const EXP_GUARD: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxParams {
    /// Feedback resistance of the exponential and divider stages (ohms).
    pub r_f: f64,
    /// Saturation current (A).
    pub i_s: f64,
    /// Thermal voltage (V).
    pub v_t: f64,
    /// Input resistance of the summing amplifier (ohms).
    pub r_sum: f64,
}

impl Default for SoftmaxParams {
    fn default() -> Self {
        SoftmaxParams {
            r_f: 100e3,
            i_s: 1e-9,
            v_t: 0.026,
            r_sum: 100e3,
        }
    }
}

impl SoftmaxParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("softmax.r_f", self.r_f),
            ("softmax.i_s", self.i_s),
            ("softmax.v_t", self.v_t),
            ("softmax.r_sum", self.r_sum),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(name, v, "finite and > 0"));
            }
        }
        Ok(())
    }

    /// Full-scale output `r_f * i_s` of the exponential and divider stages.
    pub fn full_scale(&self) -> f64 {
        self.r_f * self.i_s
    }
}

/// `x = r_f * i_s * exp(a / v_t)`.
pub fn exp_block(a: f64, p: &SoftmaxParams) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::domain("exp block input", a, "finite"));
    }
    let ratio = a / p.v_t;
    if ratio > EXP_GUARD {
        return Err(Error::Overflow {
            ratio,
            limit: EXP_GUARD,
        });
    }
    Ok(p.full_scale() * ratio.exp())
}

/// `x_tot = (r_f / r_sum) * sum x_z`.
pub fn summation_block(x: &[f64], p: &SoftmaxParams) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptyInput("summation block"));
    }
    Ok(p.r_f / p.r_sum * x.iter().sum::<f64>())
}

/// `r_f * i_s * v1 / v2`.
pub fn division_block(v1: f64, v2: f64, p: &SoftmaxParams) -> Result<f64> {
    if !(v2 > 0.0) {
        return Err(Error::domain("divider denominator", v2, "> 0"));
    }
    Ok(p.full_scale() * v1 / v2)
}

/// Per-channel `r_f * i_s * exp(a_z/v_t) / sum_i exp(a_i/v_t)` through the
/// exp, summation and division blocks.
///
/// The inputs are shifted by their maximum before exponentiation; the shift
/// cancels in the divider. With `r_sum != r_f` the outputs carry the summer
/// gain, exactly as the circuit would.
pub fn softmax_circuit(a: &[f64], p: &SoftmaxParams) -> Result<Vec<f64>> {
    if a.len() < 2 {
        return Err(Error::EmptyInput("softmax circuit (needs >= 2 channels)"));
    }
    if let Some(bad) = a.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain("softmax input", *bad, "finite"));
    }
    let peak = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x: Vec<f64> = a
        .iter()
        .map(|&v| exp_block(v - peak, p))
        .collect::<Result<_>>()?;
    let total = summation_block(&x, p)?;
    x.iter().map(|&xz| division_block(xz, total, p)).collect()
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn exp_block_examples() {
        let p = SoftmaxParams::default();
        assert!(rel(exp_block(0.0, &p).unwrap(), 1e-4) < 1e-12);
        assert!(rel(exp_block(p.v_t, &p).unwrap(), 1e-4 * std::f64::consts::E) < 1e-12);
        // 1e-4 * exp(0.1 / 0.026) by scalar evaluation
        assert!(rel(exp_block(0.1, &p).unwrap(), 4.681_266_781_732_767e-3) < 1e-12);
    }

    #[test]
    fn exp_block_overflow_guard() {
        let p = SoftmaxParams::default();
        assert!(matches!(
            exp_block(701.0 * p.v_t, &p),
            Err(Error::Overflow { .. })
        ));
        assert!(exp_block(699.0 * p.v_t, &p).is_ok());
    }

    #[test]
    fn summation_block_examples() {
        let p = SoftmaxParams::default();
        assert!(rel(summation_block(&[1e-4, 1e-4], &p).unwrap(), 2e-4) < 1e-12);
        let half = SoftmaxParams {
            r_sum: 2.0 * p.r_f,
            ..p
        };
        assert!(rel(summation_block(&[2e-4], &half).unwrap(), 1e-4) < 1e-12);
        let x = [exp_block(0.0, &p).unwrap(), exp_block(p.v_t, &p).unwrap()];
        assert!(rel(summation_block(&x, &p).unwrap(), 3.718_281_828_459e-4) < 1e-12);
        assert!(matches!(
            summation_block(&[], &p),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn division_block_examples() {
        let p = SoftmaxParams::default();
        assert!(rel(division_block(3e-3, 3e-3, &p).unwrap(), 1e-4) < 1e-12);
        assert_eq!(division_block(0.0, 1e-3, &p).unwrap(), 0.0);
        assert!(rel(division_block(4.6813e-3, 9.3626e-3, &p).unwrap(), 5e-5) < 1e-12);
        assert!(division_block(1.0, 0.0, &p).is_err());
        assert!(division_block(1.0, -1.0, &p).is_err());
    }

    #[test]
    fn softmax_examples() {
        let p = SoftmaxParams::default();
        let y = softmax_circuit(&[0.3, 0.3], &p).unwrap();
        assert!(rel(y[0], 5e-5) < 1e-12 && rel(y[1], 5e-5) < 1e-12);

        // Scalar oracle: 1e-4 / (1 + exp(0.1/0.026)) and its complement.
        let y = softmax_circuit(&[0.1, 0.2], &p).unwrap();
        let lo = 1e-4 / (1.0 + (0.1f64 / 0.026).exp());
        assert!(rel(y[0], lo) < 1e-12);
        assert!(rel(y[1], 1e-4 - lo) < 1e-12);
        assert!((y[0] - 2.09e-6).abs() < 0.01e-6);
        assert!((y[1] - 9.79e-5).abs() < 0.01e-5);
    }

    #[test]
    fn softmax_rejects_bad_inputs() {
        let p = SoftmaxParams::default();
        assert!(softmax_circuit(&[0.1], &p).is_err());
        assert!(softmax_circuit(&[0.1, f64::NAN], &p).is_err());
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(-1.0), 0.0);
        assert_eq!(relu(0.0), 0.0);
        assert_eq!(relu(0.37), 0.37);
    }
}
