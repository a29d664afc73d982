use super::forward::{check_batch, Pass};
use super::params::MoEParams;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Accuracy and mean cross-entropy with every expert active and top-1 routing.
pub fn evaluate(params: &MoEParams, data: &Dataset) -> Result<Evaluation> {
    let all: Vec<usize> = (0..params.dims.num_experts).collect();
    evaluate_with(params, data, &all)
}

pub(crate) fn evaluate_with(params: &MoEParams, data: &Dataset, active: &[usize]) -> Result<Evaluation> {
    evaluate_top_k(params, data, active, 1)
}

pub fn evaluate_top_k(params: &MoEParams, data: &Dataset, active: &[usize], top_k: usize) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::input("evaluation dataset is empty"));
    }
    check_batch(params, data)?;
    let mut pass = Pass::new(params, active, top_k)?;
    let mut correct = 0usize;
    let mut loss = 0.0;
    for i in 0..data.len() {
        let (x, y) = data.sample(i);
        pass.infer(params, x);
        let logits = &pass.mixed_logits;
        let mut best = 0;
        for (c, v) in logits.iter().enumerate().skip(1) {
            if *v > logits[best] {
                best = c;
            }
        }
        if best == y {
            correct += 1;
        }
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - logits[y];
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        loss: loss / n,
    })
}
