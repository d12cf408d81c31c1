//! Two-branch power-law scaling functions for space (volume) and time,
//! together with the optimized exponential-decay profile that appears in
//! sub-Gaussian heat kernel upper bounds.
//!
//! All quantities are piecewise power laws with a breakpoint at r = 1:
//! the volume scale uses exponents (alpha1, alpha2), the time scale uses
//! (beta1, beta2), and their ratio uses gamma_i = beta_i - alpha_i.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The exponent quadruple driving every scaling quantity.
///
/// `strict` mode enforces 2 <= beta_i <= alpha_i + 1 and alpha_i < beta_i;
/// relaxed mode only requires 0 < alpha_i < beta_i and is flagged so that
/// downstream reports can disclose it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingExponents {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default)]
    pub relaxed: bool,
}

impl ScalingExponents {
    pub fn new(alpha1: f64, alpha2: f64, beta1: f64, beta2: f64) -> Result<Self> {
        let e = ScalingExponents {
            alpha1,
            alpha2,
            beta1,
            beta2,
            relaxed: false,
        };
        e.validate_strict()?;
        Ok(e)
    }

    /// Relaxed mode: only 0 < alpha_i < beta_i required. Reports carry the flag.
    pub fn new_relaxed(alpha1: f64, alpha2: f64, beta1: f64, beta2: f64) -> Result<Self> {
        let e = ScalingExponents {
            alpha1,
            alpha2,
            beta1,
            beta2,
            relaxed: true,
        };
        e.validate_relaxed()?;
        Ok(e)
    }

    fn validate_relaxed(&self) -> Result<()> {
        for (a, b) in [(self.alpha1, self.beta1), (self.alpha2, self.beta2)] {
            if !(a > 0.0 && a < b) {
                return Err(Error::Domain(format!(
                    "need 0 < alpha < beta, got alpha={a}, beta={b}"
                )));
            }
        }
        Ok(())
    }

    fn validate_strict(&self) -> Result<()> {
        self.validate_relaxed()?;
        for (a, b) in [(self.alpha1, self.beta1), (self.alpha2, self.beta2)] {
            if !(2.0 <= b && b <= a + 1.0) {
                return Err(Error::Domain(format!(
                    "strict mode needs 2 <= beta <= alpha + 1, got alpha={a}, beta={b}"
                )));
            }
        }
        Ok(())
    }

    pub fn gamma1(&self) -> f64 {
        self.beta1 - self.alpha1
    }

    pub fn gamma2(&self) -> f64 {
        self.beta2 - self.alpha2
    }

    /// Named exponent presets for the built-in spaces.
    ///
    /// `"carpet"` accepts an optional resistance parameter via
    /// [`ScalingExponents::carpet_with_rho`]; the default uses rho = 1.25147.
    /// `"cable(X)"` sets the small-scale pair to (1, 2) and takes the large
    /// scale from preset X.
    pub fn preset(name: &str) -> Result<Self> {
        let ln2 = std::f64::consts::LN_2;
        let ln3 = 3f64.ln();
        match name {
            "interval" => Self::new(1.0, 1.0, 2.0, 2.0),
            "gasket" => {
                let a = ln3 / ln2;
                let b = 5f64.ln() / ln2;
                Self::new(a, a, b, b)
            }
            "vicsek" => {
                let a = 5f64.ln() / ln3;
                let b = 15f64.ln() / ln3;
                Self::new(a, a, b, b)
            }
            "carpet" => Self::carpet_with_rho(DEFAULT_CARPET_RHO),
            other => {
                if let Some(inner) = other
                    .strip_prefix("cable(")
                    .and_then(|s| s.strip_suffix(')'))
                {
                    let base = Self::preset(inner)?;
                    Self::new(1.0, base.alpha2, 2.0, base.beta2)
                } else {
                    Err(Error::UnknownFamily(name.to_string()))
                }
            }
        }
    }

    /// Carpet exponents with a configurable resistance-scaling parameter rho.
    pub fn carpet_with_rho(rho: f64) -> Result<Self> {
        if rho <= 0.0 {
            return Err(Error::Domain(format!("rho must be positive, got {rho}")));
        }
        let ln3 = 3f64.ln();
        let a = 8f64.ln() / ln3;
        let b = (8.0 * rho).ln() / ln3;
        Self::new(a, a, b, b)
    }
}

/// Default carpet resistance parameter; gives walk dimension ~2.09697.
pub const DEFAULT_CARPET_RHO: f64 = 1.25147;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) {
        return Err(Error::Domain(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

// Branch evaluation in log space so extreme arguments neither overflow
// nor lose the branch structure.
fn branch_pow(r: f64, expo: f64) -> f64 {
    (expo * r.ln()).exp()
}

/// Volume scale: r^alpha1 for r < 1, r^alpha2 for r >= 1.
pub fn phi(exps: &ScalingExponents, r: f64) -> Result<f64> {
    check_positive("r", r)?;
    let a = if r < 1.0 { exps.alpha1 } else { exps.alpha2 };
    Ok(branch_pow(r, a))
}

/// Time scale: r^beta1 for r < 1, r^beta2 for r >= 1.
pub fn psi(exps: &ScalingExponents, r: f64) -> Result<f64> {
    check_positive("r", r)?;
    let b = if r < 1.0 { exps.beta1 } else { exps.beta2 };
    Ok(branch_pow(r, b))
}

/// Inverse time scale: t^(1/beta1) for t < 1, t^(1/beta2) for t >= 1.
pub fn psi_inv(exps: &ScalingExponents, t: f64) -> Result<f64> {
    check_positive("t", t)?;
    let b = if t < 1.0 { exps.beta1 } else { exps.beta2 };
    Ok(branch_pow(t, 1.0 / b))
}

/// (Psi/Phi)(r) = r^gamma1 for r < 1, r^gamma2 for r >= 1.
pub fn ratio_psi_phi(exps: &ScalingExponents, r: f64) -> Result<f64> {
    check_positive("r", r)?;
    let g = if r < 1.0 { exps.gamma1() } else { exps.gamma2() };
    Ok(branch_pow(r, g))
}

/// Decay profile sup over s > 0 of R/s - t/Psi(s).
///
/// Each branch has one interior stationary point s* = (beta t / R)^(1/(beta-1));
/// the supremum is the maximum of the branch values at their clipped stationary
/// points, the breakpoint s = 1, and the s -> infinity limit 0.
pub fn upsilon(exps: &ScalingExponents, big_r: f64, t: f64) -> Result<f64> {
    check_positive("t", t)?;
    if big_r < 0.0 {
        return Err(Error::Domain(format!("R must be >= 0, got {big_r}")));
    }
    if big_r == 0.0 {
        return Ok(0.0);
    }
    let objective = |s: f64, beta: f64| big_r / s - t / branch_pow(s, beta);
    let mut best: f64 = 0.0; // s -> infinity limit
    for (beta, lo, hi) in [
        (exps.beta1, 0.0_f64, 1.0_f64),
        (exps.beta2, 1.0_f64, f64::INFINITY),
    ] {
        let s_star = branch_pow(beta * t / big_r, 1.0 / (beta - 1.0));
        let s = s_star.clamp(lo.max(f64::MIN_POSITIVE), hi).min(1e300);
        // Branch endpoint s = 1 is shared; evaluating the clipped stationary
        // point covers it because the branch objective is unimodal.
        let v = objective(s.max(f64::MIN_POSITIVE), beta);
        if v > best {
            best = v;
        }
    }
    let v1 = objective(1.0, exps.beta1);
    if v1 > best {
        best = v1;
    }
    Ok(best)
}

/// Closed-form majorant for sup over (t, s) of A * Psi^{-1}(t)/Psi^{-1}(s) - t/s,
/// namely sup over x > 0 of A * max(x^{1/beta1}, x^{1/beta2}) - x.
pub fn upsilon_gap_bound(exps: &ScalingExponents, a: f64) -> Result<f64> {
    check_positive("A", a)?;
    let mut best: f64 = 0.0; // x -> 0 limit
    for beta in [exps.beta1, exps.beta2] {
        let b = 1.0 / beta;
        // maximize A x^b - x: stationary point x* = (A b)^(1/(1-b))
        let x_star = branch_pow(a * b, 1.0 / (1.0 - b));
        for x in [x_star, 1.0] {
            let v = a * branch_pow(x, b) - x;
            if v > best {
                best = v;
            }
        }
    }
    Ok(best)
}
