use serde::{Deserialize, Serialize};

use crate::error::{CflError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Contrastive weight at the current iteration.
    pub alpha_t: f64,
    pub beta: f64,
    /// Weight of the unsupervised branch.
    pub lambda: f64,
    pub tau: f64,
    /// Uncertainty exponent.
    pub alpha: f64,
    pub k_mine: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha_t: 0.1, beta: 1.0, lambda: 2.0, tau: 0.2, alpha: 1.0, k_mine: 3 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha_t, self.beta, self.lambda, self.alpha];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(CflError::Config(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(CflError::Config(format!("temperature must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Components of the labeled-branch objective. `roi_ce` is the closed-set
/// ROI cross-entropy, non-zero only when the uncertainty loss is disabled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SupervisedTerms {
    pub rpn_cls: f64,
    pub rpn_reg: f64,
    pub roi_reg: f64,
    pub roi_ce: f64,
    pub fc: f64,
    pub uc: f64,
}

/// Components of the pseudo-labeled branch. There is no regression term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UnsupervisedTerms {
    pub rpn_cls: f64,
    pub roi_ce: f64,
    pub fc: f64,
    pub uc: f64,
}

impl SupervisedTerms {
    pub fn total(&self, w: &LossWeights) -> f64 {
        self.rpn_cls + self.rpn_reg + self.roi_reg + self.roi_ce + w.alpha_t * self.fc + w.beta * self.uc
    }
}

impl UnsupervisedTerms {
    pub fn total(&self, w: &LossWeights) -> f64 {
        self.rpn_cls + self.roi_ce + w.alpha_t * self.fc + w.beta * self.uc
    }
}

/// `L_sup + lambda * L_unsup`.
pub fn compose_total_loss(sup: &SupervisedTerms, unsup: &UnsupervisedTerms, weights: &LossWeights) -> Result<f64> {
    weights.validate()?;
    Ok(sup.total(weights) + weights.lambda * unsup.total(weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_examples() {
        let unit_sup = SupervisedTerms { rpn_cls: 1.0, rpn_reg: 1.0, roi_reg: 1.0, roi_ce: 0.0, fc: 1.0, uc: 1.0 };
        let unit_unsup = UnsupervisedTerms { rpn_cls: 1.0, roi_ce: 0.0, fc: 1.0, uc: 1.0 };
        let w = LossWeights { alpha_t: 0.1, beta: 1.0, lambda: 1.0, ..Default::default() };
        assert!((unit_sup.total(&w) - 4.1).abs() < 1e-12);
        assert!((unit_unsup.total(&w) - 2.1).abs() < 1e-12);
        assert!((compose_total_loss(&unit_sup, &unit_unsup, &w).unwrap() - 6.2).abs() < 1e-12);

        let w0 = LossWeights { lambda: 0.0, ..w };
        assert_eq!(compose_total_loss(&unit_sup, &unit_unsup, &w0).unwrap(), unit_sup.total(&w0));
        assert_eq!(compose_total_loss(&Default::default(), &Default::default(), &w).unwrap(), 0.0);
    }

    #[test]
    fn negative_weights_rejected() {
        let w = LossWeights { beta: -1.0, ..Default::default() };
        assert!(compose_total_loss(&Default::default(), &Default::default(), &w).is_err());
    }
}
