//! Closed-form evidential mathematics.
//!
//! A classifier head emits non-negative evidence `e` per class. The evidence
//! parameterizes a Dirichlet with `α = e + 1`, from which belief masses,
//! an uncertainty mass and expected class probabilities follow directly.
//! Training minimizes the Type-II maximum-likelihood loss
//! `Σ_j y_j (ln S - ln α_j)` plus an annealed KL divergence between the
//! Dirichlet with the true-class evidence removed and the uniform Dirichlet.
//!
//! Every function here is pure and works in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{digamma, lgamma, trigamma};

/// Tolerance when checking that a probability vector sums to one.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;
/// Tolerance below 1 accepted for Dirichlet parameters in the KL term.
pub const ALPHA_TOLERANCE: f64 = 1e-12;

/// Non-negative evidence for each of `K >= 2` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EvidenceVector(Vec<f64>);

impl EvidenceVector {
    pub fn new(evidence: Vec<f64>) -> Result<Self> {
        if evidence.len() < 2 {
            return Err(Error::Domain(format!(
                "evidence needs at least 2 classes, got {}",
                evidence.len()
            )));
        }
        if let Some((k, e)) = evidence.iter().enumerate().find(|(_, e)| !(e.is_finite() && **e >= 0.0)) {
            return Err(Error::Domain(format!("evidence[{k}] = {e} is not a finite non-negative value")));
        }
        Ok(Self(evidence))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for EvidenceVector {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<EvidenceVector> for Vec<f64> {
    fn from(value: EvidenceVector) -> Self {
        value.0
    }
}

/// Subjective opinion derived from one evidence vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletOpinion {
    pub alpha: Vec<f64>,
    pub strength: f64,
    pub belief: Vec<f64>,
    pub uncertainty: f64,
    pub expected_probs: Vec<f64>,
}

impl DirichletOpinion {
    pub fn num_classes(&self) -> usize {
        self.alpha.len()
    }
}

/// Form the Dirichlet opinion `α = e + 1`, `S = Σα`, `b = e/S`, `u = K/S`, `p̂ = α/S`.
pub fn opinion_from_evidence(evidence: &EvidenceVector) -> DirichletOpinion {
    let e = evidence.as_slice();
    let k = e.len() as f64;
    let alpha: Vec<f64> = e.iter().map(|x| x + 1.0).collect();
    let strength: f64 = alpha.iter().sum();
    DirichletOpinion {
        belief: e.iter().map(|x| x / strength).collect(),
        uncertainty: k / strength,
        expected_probs: alpha.iter().map(|a| a / strength).collect(),
        alpha,
        strength,
    }
}

/// Ground-truth class as a one-hot vector over `K` classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHotLabel {
    class: usize,
    num_classes: usize,
}

impl OneHotLabel {
    pub fn new(class: usize, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Domain(format!("one-hot label needs K >= 2, got {num_classes}")));
        }
        if class >= num_classes {
            return Err(Error::Domain(format!("class {class} out of range for K = {num_classes}")));
        }
        Ok(Self { class, num_classes })
    }

    /// Parse an explicit 0/1 vector with exactly one 1.
    pub fn from_vec(y: &[f64]) -> Result<Self> {
        if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::Domain("one-hot entries must be 0 or 1".into()));
        }
        let ones: Vec<usize> = y.iter().enumerate().filter(|(_, v)| **v == 1.0).map(|(i, _)| i).collect();
        match ones.as_slice() {
            [class] => Self::new(*class, y.len()),
            _ => Err(Error::Domain(format!("one-hot vector must contain exactly one 1, found {}", ones.len()))),
        }
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.num_classes).map(|k| self.value(k)).collect()
    }

    #[inline]
    pub fn value(&self, k: usize) -> f64 {
        if k == self.class {
            1.0
        } else {
            0.0
        }
    }
}

/// KL annealing coefficient `λ_t = min(1, t / saturation_epoch)` with `t` starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnealingSchedule {
    pub saturation_epoch: u32,
}

impl Default for AnnealingSchedule {
    fn default() -> Self {
        Self { saturation_epoch: 10 }
    }
}

impl AnnealingSchedule {
    pub fn new(saturation_epoch: u32) -> Result<Self> {
        if saturation_epoch == 0 {
            return Err(Error::config("annealing.saturation_epoch", "must be positive"));
        }
        Ok(Self { saturation_epoch })
    }

    pub fn lambda(&self, epoch: u32) -> Result<f64> {
        if epoch < 1 {
            return Err(Error::Domain("epochs are counted from 1".into()));
        }
        if self.saturation_epoch == 0 {
            return Err(Error::config("annealing.saturation_epoch", "must be positive"));
        }
        Ok((epoch as f64 / self.saturation_epoch as f64).min(1.0))
    }
}

fn check_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.len() < 2 {
        return Err(Error::Domain(format!("Dirichlet needs K >= 2 parameters, got {}", alpha.len())));
    }
    match alpha.iter().enumerate().find(|(_, a)| !(a.is_finite() && **a >= 1.0 - ALPHA_TOLERANCE)) {
        Some((k, a)) => Err(Error::Domain(format!("alpha[{k}] = {a} must be >= 1"))),
        None => Ok(()),
    }
}

fn check_label(alpha: &[f64], y: &OneHotLabel) -> Result<()> {
    if alpha.len() != y.num_classes() {
        return Err(Error::DimensionMismatch { expected: alpha.len(), found: y.num_classes() });
    }
    Ok(())
}

fn ln_beta(alpha: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for &a in alpha {
        acc += lgamma(a)?;
    }
    Ok(acc - lgamma(alpha.iter().sum())?)
}

/// `ln D(p | α) = -ln B(α) + Σ (α_i - 1) ln p_i` for `p` in the open simplex.
pub fn dirichlet_log_density(p: &[f64], alpha: &[f64]) -> Result<f64> {
    check_alpha(alpha)?;
    if p.len() != alpha.len() {
        return Err(Error::DimensionMismatch { expected: alpha.len(), found: p.len() });
    }
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Domain(format!("p[{i}] = {v} is outside the open simplex")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::Domain(format!("probabilities sum to {sum}, not 1")));
    }
    let kernel: f64 = p.iter().zip(alpha).map(|(pi, ai)| (ai - 1.0) * pi.ln()).sum();
    Ok(kernel - ln_beta(alpha)?)
}

/// Type-II maximum-likelihood loss `Σ_j y_j (ln S - ln α_j)`.
pub fn evidential_loss(alpha: &[f64], y: &OneHotLabel) -> Result<f64> {
    check_alpha(alpha)?;
    check_label(alpha, y)?;
    let strength: f64 = alpha.iter().sum();
    Ok(strength.ln() - alpha[y.class()].ln())
}

/// Remove the true-class evidence: `α̃ = y + (1 - y) ⊙ α`.
pub fn masked_alpha(alpha: &[f64], y: &OneHotLabel) -> Result<Vec<f64>> {
    check_label(alpha, y)?;
    Ok(alpha
        .iter()
        .enumerate()
        .map(|(k, a)| if k == y.class() { 1.0 } else { *a })
        .collect())
}

/// `KL(D(p | α̃) || D(p | 1))` in closed form.
pub fn kl_to_uniform(alpha_tilde: &[f64]) -> Result<f64> {
    check_alpha(alpha_tilde)?;
    let k = alpha_tilde.len() as f64;
    let strength: f64 = alpha_tilde.iter().sum();
    let psi_strength = digamma(strength)?;
    let mut kl = lgamma(strength)? - lgamma(k)?;
    for &a in alpha_tilde {
        kl -= lgamma(a)?;
        if a != 1.0 {
            kl += (a - 1.0) * (digamma(a)? - psi_strength);
        }
    }
    // Rounding can leave a negative residue of order 1e-16 near α̃ = 1.
    Ok(kl.max(0.0))
}

/// Per-sample objective `evidential_loss + λ · KL(masked_alpha)`.
pub fn sample_loss(alpha: &[f64], y: &OneHotLabel, lambda: f64) -> Result<f64> {
    let data_term = evidential_loss(alpha, y)?;
    if lambda == 0.0 {
        return Ok(data_term);
    }
    Ok(data_term + lambda * kl_to_uniform(&masked_alpha(alpha, y)?)?)
}

/// Annealed batch objective
/// `Σ_i evidential_loss(α_i, y_i) + λ_t Σ_i kl_to_uniform(masked_alpha(α_i, y_i))`.
pub fn total_loss(
    alphas: &[Vec<f64>],
    ys: &[OneHotLabel],
    epoch: u32,
    schedule: &AnnealingSchedule,
) -> Result<f64> {
    if alphas.is_empty() {
        return Err(Error::InvalidInput("loss over an empty batch".into()));
    }
    if alphas.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: alphas.len(), found: ys.len() });
    }
    let lambda = schedule.lambda(epoch)?;
    let mut data_term = 0.0;
    let mut kl_term = 0.0;
    for (alpha, y) in alphas.iter().zip(ys) {
        data_term += evidential_loss(alpha, y)?;
        kl_term += kl_to_uniform(&masked_alpha(alpha, y)?)?;
    }
    Ok(data_term + lambda * kl_term)
}

/// Gradient of [`sample_loss`] with respect to `α`.
///
/// The data term contributes `1/S - y_k/α_k`. The KL term differentiates to
/// `(α̃_k - 1) ψ'(α̃_k) - (S̃ - K) ψ'(S̃)` and vanishes for the true class,
/// whose masked entry is the constant 1.
pub fn loss_gradient_wrt_alpha(alpha: &[f64], y: &OneHotLabel, lambda: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    check_label(alpha, y)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!("lambda = {lambda} must lie in [0, 1]")));
    }
    let strength: f64 = alpha.iter().sum();
    let mut grad: Vec<f64> = alpha
        .iter()
        .enumerate()
        .map(|(k, a)| 1.0 / strength - y.value(k) / a)
        .collect();
    if lambda > 0.0 {
        let masked = masked_alpha(alpha, y)?;
        let k = masked.len() as f64;
        let masked_strength: f64 = masked.iter().sum();
        let shared = (masked_strength - k) * trigamma(masked_strength)?;
        for (j, g) in grad.iter_mut().enumerate() {
            if j == y.class() {
                continue;
            }
            let a = masked[j];
            *g += lambda * ((a - 1.0) * trigamma(a)? - shared);
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::LN_2;

    use proptest::prelude::*;

    use super::*;

    fn ev(v: &[f64]) -> EvidenceVector {
        EvidenceVector::new(v.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn zero_evidence_is_maximally_uncertain() {
        let o = opinion_from_evidence(&ev(&[0.0, 0.0, 0.0]));
        assert_eq!(o.alpha, vec![1.0, 1.0, 1.0]);
        assert_eq!(o.strength, 3.0);
        assert_eq!(o.uncertainty, 1.0);
        assert_eq!(o.belief, vec![0.0, 0.0, 0.0]);
        for p in o.expected_probs {
            assert!(close(p, 1.0 / 3.0, 1e-15));
        }
    }

    #[test]
    fn unit_evidence_opinion() {
        let o = opinion_from_evidence(&ev(&[1.0, 1.0, 1.0]));
        assert_eq!(o.strength, 6.0);
        assert_eq!(o.uncertainty, 0.5);
        for b in &o.belief {
            assert!(close(*b, 1.0 / 6.0, 1e-15));
        }
    }

    #[test]
    fn two_class_opinion_by_hand() {
        let o = opinion_from_evidence(&ev(&[8.0, 0.0]));
        assert_eq!(o.alpha, vec![9.0, 1.0]);
        assert_eq!(o.strength, 10.0);
        assert!(close(o.uncertainty, 0.2, 1e-15));
        assert!(close(o.belief[0], 0.8, 1e-15));
        assert_eq!(o.belief[1], 0.0);
        assert!(close(o.expected_probs[0], 0.9, 1e-15));
        assert!(close(o.expected_probs[1], 0.1, 1e-15));
    }

    #[test]
    fn evidence_rejects_negative_entries() {
        assert!(EvidenceVector::new(vec![1.0, -0.1]).is_err());
        assert!(EvidenceVector::new(vec![1.0]).is_err());
        assert!(EvidenceVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(serde_json::from_str::<EvidenceVector>("[1.0, -2.0]").is_err());
    }

    #[test]
    fn one_hot_validation() {
        assert_eq!(OneHotLabel::from_vec(&[0.0, 1.0, 0.0]).unwrap().class(), 1);
        assert!(OneHotLabel::from_vec(&[1.0, 1.0]).is_err());
        assert!(OneHotLabel::from_vec(&[0.0, 0.5]).is_err());
        assert!(OneHotLabel::new(3, 3).is_err());
        assert_eq!(OneHotLabel::new(0, 2).unwrap().to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn density_examples() {
        assert!(close(dirichlet_log_density(&[0.3, 0.7], &[1.0, 1.0]).unwrap(), 0.0, 1e-15));
        assert!(close(dirichlet_log_density(&[0.2, 0.5, 0.3], &[1.0, 1.0, 1.0]).unwrap(), LN_2, 1e-14));
        assert!(close(dirichlet_log_density(&[0.5, 0.5], &[2.0, 1.0]).unwrap(), 0.0, 1e-14));
    }

    #[test]
    fn density_rejects_points_off_the_simplex() {
        assert!(dirichlet_log_density(&[0.3, 0.8], &[1.0, 1.0]).is_err());
        assert!(dirichlet_log_density(&[0.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(dirichlet_log_density(&[0.5, 0.5], &[1.0, 1.0, 1.0]).is_err());
        assert!(dirichlet_log_density(&[0.5, 0.5], &[0.5, 1.0]).is_err());
    }

    #[test]
    fn loss_examples() {
        let y0 = OneHotLabel::new(0, 2).unwrap();
        let y1 = OneHotLabel::new(1, 2).unwrap();
        for c in 0..3 {
            let y = OneHotLabel::new(c, 3).unwrap();
            assert!(close(evidential_loss(&[1.0, 1.0, 1.0], &y).unwrap(), 3f64.ln(), 1e-15));
        }
        let right = evidential_loss(&[9.0, 1.0], &y0).unwrap();
        let wrong = evidential_loss(&[9.0, 1.0], &y1).unwrap();
        assert!(close(right, 0.105_360_515_657_826_3, 1e-12));
        assert!(close(wrong, 2.302_585_092_994_046, 1e-12));
        assert!(wrong > right);
        assert!(evidential_loss(&[1.0, 1.0, 1.0], &y0).is_err());
    }

    #[test]
    fn masking_examples() {
        let y = OneHotLabel::new(0, 3).unwrap();
        assert_eq!(masked_alpha(&[5.0, 2.0, 3.0], &y).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(masked_alpha(&[1.0, 1.0, 1.0], &y).unwrap(), vec![1.0, 1.0, 1.0]);
        let y1 = OneHotLabel::new(1, 2).unwrap();
        assert_eq!(masked_alpha(&[9.0, 1.0], &y1).unwrap(), vec![9.0, 1.0]);
        assert!(masked_alpha(&[9.0, 1.0], &y).is_err());
    }

    #[test]
    fn kl_examples() {
        for k in 2..12 {
            assert_eq!(kl_to_uniform(&vec![1.0; k]).unwrap(), 0.0);
        }
        assert!(close(kl_to_uniform(&[2.0, 1.0]).unwrap(), LN_2 - 0.5, 1e-12));
        // 40-digit reference for α̃ = (2, 2, 2).
        assert!(close(kl_to_uniform(&[2.0, 2.0, 2.0]).unwrap(), 0.244_344_562_222_100_68, 1e-12));
        assert!(kl_to_uniform(&[0.5, 2.0]).is_err());
        assert!(kl_to_uniform(&[1.0 - 1e-13, 2.0]).is_ok());
    }

    #[test]
    fn annealing_schedule() {
        let s = AnnealingSchedule::default();
        assert_eq!(s.lambda(1).unwrap(), 0.1);
        assert_eq!(s.lambda(5).unwrap(), 0.5);
        assert_eq!(s.lambda(10).unwrap(), 1.0);
        assert_eq!(s.lambda(50).unwrap(), 1.0);
        assert!(s.lambda(0).is_err());
        assert!(AnnealingSchedule::new(0).is_err());
    }

    #[test]
    fn total_loss_examples() {
        let s = AnnealingSchedule::default();
        let y = OneHotLabel::new(2, 3).unwrap();
        let l = total_loss(&[vec![1.0, 1.0, 1.0]], &[y], 1, &s).unwrap();
        assert!(close(l, 3f64.ln(), 1e-15));

        let alpha = vec![5.0, 2.0, 3.0];
        let y0 = OneHotLabel::new(0, 3).unwrap();
        let data = evidential_loss(&alpha, &y0).unwrap();
        let kl = kl_to_uniform(&masked_alpha(&alpha, &y0).unwrap()).unwrap();
        let at5 = total_loss(&[alpha.clone()], &[y0], 5, &s).unwrap();
        assert!(close(at5, data + 0.5 * kl, 1e-14));
        let at50 = total_loss(&[alpha.clone()], &[y0], 50, &s).unwrap();
        assert!(close(at50, data + kl, 1e-14));

        assert!(total_loss(&[alpha.clone()], &[y0], 0, &s).is_err());
        assert!(total_loss(&[], &[], 1, &s).is_err());
        assert!(total_loss(&[alpha], &[y0, y0], 1, &s).is_err());
    }

    #[test]
    fn gradient_by_hand() {
        let y = OneHotLabel::new(0, 2).unwrap();
        let g = loss_gradient_wrt_alpha(&[1.0, 1.0], &y, 0.0).unwrap();
        assert!(close(g[0], -0.5, 1e-15));
        assert!(close(g[1], 0.5, 1e-15));
        assert!(loss_gradient_wrt_alpha(&[1.0, 1.0], &y, 1.5).is_err());
    }

    #[test]
    fn gradient_of_true_class_vanishes_as_it_takes_all_strength() {
        let y = OneHotLabel::new(0, 3).unwrap();
        let g = loss_gradient_wrt_alpha(&[1e12, 1.0, 1.0], &y, 0.0).unwrap();
        assert!(g[0].abs() < 1e-20);
    }

    fn central_difference(alpha: &[f64], y: &OneHotLabel, lambda: f64, k: usize, h: f64) -> f64 {
        let mut plus = alpha.to_vec();
        let mut minus = alpha.to_vec();
        plus[k] += h;
        minus[k] -= h;
        (sample_loss(&plus, y, lambda).unwrap() - sample_loss(&minus, y, lambda).unwrap()) / (2.0 * h)
    }

    #[test]
    fn gradient_matches_finite_differences_on_a_fixed_case() {
        let alpha = [3.5, 1.2, 7.0, 2.25];
        let y = OneHotLabel::new(2, 4).unwrap();
        let g = loss_gradient_wrt_alpha(&alpha, &y, 0.7).unwrap();
        for k in 0..4 {
            let fd = central_difference(&alpha, &y, 0.7, k, 1e-5);
            assert!((g[k] - fd).abs() <= 1e-6 * g[k].abs().max(1e-3), "k={k} {} vs {fd}", g[k]);
        }
    }

    proptest! {
        #[test]
        fn opinion_masses_sum_to_one(e in prop::collection::vec(0.0f64..100.0, 2..21)) {
            let o = opinion_from_evidence(&EvidenceVector::new(e).unwrap());
            let b: f64 = o.belief.iter().sum();
            let p: f64 = o.expected_probs.iter().sum();
            prop_assert!((o.uncertainty + b - 1.0).abs() <= 1e-12);
            prop_assert!((p - 1.0).abs() <= 1e-12);
            prop_assert!(o.uncertainty > 0.0 && o.uncertainty <= 1.0);
            prop_assert!(o.alpha.iter().all(|a| *a >= 1.0));
        }

        #[test]
        fn scaling_evidence_reduces_uncertainty(
            e in prop::collection::vec(0.0f64..100.0, 2..21),
            c in 1.01f64..10.0,
        ) {
            prop_assume!(e.iter().sum::<f64>() > 1e-6);
            let base = opinion_from_evidence(&EvidenceVector::new(e.clone()).unwrap());
            let scaled = opinion_from_evidence(&EvidenceVector::new(e.iter().map(|x| x * c).collect()).unwrap());
            prop_assert!(scaled.uncertainty < base.uncertainty);
        }

        #[test]
        fn kl_is_non_negative(alpha in prop::collection::vec(1.0f64..50.0, 2..12)) {
            let kl = kl_to_uniform(&alpha).unwrap();
            prop_assert!(kl >= 0.0);
            if alpha.iter().any(|a| *a > 1.0 + 1e-6) {
                prop_assert!(kl > 0.0);
            }
        }

        #[test]
        fn loss_decreases_in_true_class_alpha(
            alpha in prop::collection::vec(1.0f64..50.0, 2..12),
            bump in 0.01f64..10.0,
            class in 0usize..12,
        ) {
            let class = class % alpha.len();
            let y = OneHotLabel::new(class, alpha.len()).unwrap();
            let before = evidential_loss(&alpha, &y).unwrap();
            let mut raised = alpha.clone();
            raised[class] += bump;
            prop_assert!(evidential_loss(&raised, &y).unwrap() < before);
            prop_assert!(before >= 0.0);
            let max = alpha.iter().cloned().fold(f64::MIN, f64::max);
            if alpha[class] == max {
                let s: f64 = alpha.iter().sum();
                prop_assert!(before >= s.ln() - max.ln() - 1e-15);
            }
        }
    }
}
