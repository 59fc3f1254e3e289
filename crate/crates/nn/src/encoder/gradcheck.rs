use serde::Serialize;

use euslm_core::{Error, Result};

use super::{Encoder, EncoderConfig, PretrainBatch};
use crate::graph::Graph;
use crate::params::Gradients;

pub const FD_EPSILON: f64 = 1e-5;

/// Denominator floor for groups whose true gradient is zero (the key bias
/// cannot affect a softmax over keys), where both norms are rounding noise.
pub const NORM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GroupCheck {
    pub name: String,
    pub elements: usize,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    /// `‖a − n‖ / max(‖a‖ + ‖n‖, NORM_FLOOR)`.
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
    pub tolerance: f64,
    pub max_relative_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }

    pub fn failing(&self) -> impl Iterator<Item = &GroupCheck> {
        self.groups.iter().filter(|g| g.relative_error >= self.tolerance)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            let mark = if g.relative_error < self.tolerance { "ok" } else { "FAIL" };
            out.push_str(&format!("{:<36} {:>6} {:>12.3e} {:>12.3e} {:>10.2e} {mark}\n", g.name, g.elements, g.analytic_norm, g.numeric_norm, g.relative_error));
        }
        out.push_str(&format!("max relative error {:.3e} (tolerance {:.0e})\n", self.max_relative_error, self.tolerance));
        out
    }
}

fn loss_value(encoder: &Encoder, batch: &PretrainBatch) -> Result<f64> {
    let mut g = Graph::new(&encoder.store);
    let out = encoder.forward_pretrain(&mut g, batch, None)?;
    let l = Encoder::loss(&mut g, &out, batch);
    Ok(g.value(l.total).to_scalar())
}

pub fn analytic_gradients(encoder: &Encoder, batch: &PretrainBatch) -> Result<(f64, Gradients)> {
    let mut g = Graph::new(&encoder.store);
    let out = encoder.forward_pretrain(&mut g, batch, None)?;
    let l = Encoder::loss(&mut g, &out, batch);
    Ok((g.value(l.total).to_scalar(), g.backward(l.total)))
}

/// Compares backprop against central differences for every parameter tensor.
pub fn grad_check(config: &EncoderConfig, seed: u64, batch: &PretrainBatch, tolerance: f64) -> Result<GradCheckReport> {
    if config.dropout != 0.0 {
        return Err(Error::Config("gradient check needs dropout 0".into()));
    }
    let mut encoder = Encoder::init(*config, seed)?;
    let (_, grads) = analytic_gradients(&encoder, batch)?;
    let ids: Vec<_> = encoder.store.ids().collect();
    let mut groups = Vec::with_capacity(ids.len());
    for id in ids {
        let n = encoder.store.get(id).len();
        let mut numeric = Vec::with_capacity(n);
        for i in 0..n {
            let orig = encoder.store.get(id).data()[i];
            encoder.store.get_mut(id).data_mut()[i] = orig + FD_EPSILON;
            let up = loss_value(&encoder, batch)?;
            encoder.store.get_mut(id).data_mut()[i] = orig - FD_EPSILON;
            let down = loss_value(&encoder, batch)?;
            encoder.store.get_mut(id).data_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * FD_EPSILON));
        }
        let zeros = vec![0.0; n];
        let analytic = grads.get(id).map_or(zeros.as_slice(), |g| g.data());
        let norm = |xs: &[f64]| xs.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let (na, nn) = (norm(analytic), norm(&numeric));
        let relative_error = norm(&diff) / (na + nn).max(NORM_FLOOR);
        if !relative_error.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient in {}", encoder.store.param(id).name)));
        }
        groups.push(GroupCheck { name: encoder.store.param(id).name.clone(), elements: n, analytic_norm: na, numeric_norm: nn, relative_error });
    }
    let max_relative_error = groups.iter().map(|g| g.relative_error).fold(0.0, f64::max);
    Ok(GradCheckReport { groups, tolerance, max_relative_error })
}
