//! Adam with decoupled weight decay, and the triangular2 cyclical learning rate.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimizerState {
    /// Zeroed moments for parameter groups of the given sizes.
    pub fn new(group_sizes: &[usize], weight_decay: f64) -> Self {
        Self {
            first: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.first.iter().map(Vec::len).collect()
    }
}

/// One bias-corrected Adam update. Weight decay is applied to the
/// pre-update parameter, outside the adaptive scaling.
pub fn adam_step(state: &mut OptimizerState, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
    if params.len() != state.first.len() || grads.len() != params.len() {
        return Err(Error::Shape(format!(
            "{} parameter groups, {} gradient groups, optimizer has {}",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.first[i].len() {
            return Err(Error::Shape(format!("group {i}: {} params vs {} grads", p.len(), g.len())));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: state.step as usize,
                detail: format!("non-finite gradient in parameter group {i}"),
            });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let decay = lr * state.weight_decay;
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.first[i], &mut state.second[i]);
        for j in 0..p.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let update = (m[j] / c1) / ((v[j] / c2).sqrt() + state.eps);
            p[j] = p[j] - decay * p[j] - lr * update;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClrSchedule {
    pub lr_min: f64,
    pub lr_max: f64,
    pub cycle_len: usize,
}

impl ClrSchedule {
    pub fn new(lr_min: f64, lr_max: f64, cycle_len: usize) -> Result<Self> {
        if !(lr_min > 0.0 && lr_min < lr_max && cycle_len > 0) {
            return Err(Error::InvalidArgument(format!(
                "CLR needs 0 < lr_min < lr_max and cycle_len > 0, got {lr_min}, {lr_max}, {cycle_len}"
            )));
        }
        Ok(Self { lr_min, lr_max, cycle_len })
    }
}

/// Triangular wave from `lr_min` up to the peak and back every `cycle_len`
/// steps; the peak amplitude halves after each cycle.
pub fn clr_lr(schedule: &ClrSchedule, step: usize) -> f64 {
    let cycle = step / schedule.cycle_len;
    let x = (step % schedule.cycle_len) as f64 / schedule.cycle_len as f64;
    let tri = 1.0 - (2.0 * x - 1.0).abs();
    let amp = (schedule.lr_max - schedule.lr_min) / 2f64.powi(cycle.min(1000) as i32);
    schedule.lr_min + amp * tri
}
