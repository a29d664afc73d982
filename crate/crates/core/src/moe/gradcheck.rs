//! Central finite-difference check of [`loss_and_grad`].
//!
//! The analytic gradient is that of a surrogate in which each expert's own
//! loss inside the gate term is held fixed at its current value. The
//! reference objective below rebuilds that surrogate from [`forward`] calls
//! only: routed cross-entropy plus gate probabilities times losses frozen at
//! the unperturbed parameters.

use super::forward::{forward_top_k, loss_and_grad_top_k};
use super::params::{MoEDims, MoEParams};
use super::{forward, init_params};
use crate::dataset::Dataset;
use crate::error::Result;
use crate::rng::SimRng;

pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor: below this magnitude the comparison is effectively absolute.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

fn cross_entropy(logits: &[f64], y: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - logits[y]
}

/// Each active expert's own loss on each sample, `[sample][active position]`.
fn frozen_losses(params: &MoEParams, batch: &Dataset, active: &[usize]) -> Result<Vec<Vec<f64>>> {
    (0..batch.len())
        .map(|i| {
            let (x, y) = batch.sample(i);
            active
                .iter()
                .map(|&e| forward(params, x, &[e]).map(|o| cross_entropy(&o.logits, y)))
                .collect()
        })
        .collect()
}

fn surrogate(
    params: &MoEParams,
    batch: &Dataset,
    active: &[usize],
    top_k: usize,
    frozen: &[Vec<f64>],
) -> Result<(f64, Vec<Vec<usize>>)> {
    let mut total = 0.0;
    let mut routes = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let (x, y) = batch.sample(i);
        let out = forward_top_k(params, x, active, top_k)?;
        let gate_term: f64 = out.gate.iter().zip(&frozen[i]).map(|(p, l)| p * l).sum();
        total += cross_entropy(&out.logits, y) + gate_term;
        routes.push(out.routed);
    }
    Ok((total / batch.len() as f64, routes))
}

/// Human-readable name of the `index`-th scalar in [`MoEParams::values`] order.
pub fn describe_index(dims: &MoEDims, mut index: usize) -> String {
    let gate_w = dims.input_dim * dims.num_experts;
    if index < gate_w {
        return format!("gate.weight[{}][{}]", index / dims.num_experts, index % dims.num_experts);
    }
    index -= gate_w;
    if index < dims.num_experts {
        return format!("gate.bias[{index}]");
    }
    index -= dims.num_experts;
    let per = dims.expert_param_count();
    let (e, mut r) = (index / per, index % per);
    let parts = [
        ("hidden.weight", dims.input_dim * dims.hidden_dim, dims.hidden_dim),
        ("hidden.bias", dims.hidden_dim, dims.hidden_dim),
        ("output.weight", dims.hidden_dim * dims.num_classes, dims.num_classes),
        ("output.bias", dims.num_classes, dims.num_classes),
    ];
    for (name, len, cols) in parts {
        if r < len {
            return if name.ends_with("weight") {
                format!("expert[{e}].{name}[{}][{}]", r / cols, r % cols)
            } else {
                format!("expert[{e}].{name}[{r}]")
            };
        }
        r -= len;
    }
    unreachable!("index within parameter count")
}

#[derive(Clone, Debug)]
pub struct GradInstance {
    pub params: MoEParams,
    pub batch: Dataset,
    pub active: Vec<usize>,
    pub top_k: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Worst {
    pub instance: usize,
    pub parameter: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub instances: usize,
    pub checked: usize,
    /// Coordinates skipped because a perturbation changed the routing.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst: Option<Worst>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.instances > 0 && self.max_rel_error < TOLERANCE
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

/// A random small instance (input <= 6, hidden <= 8, 2 experts, 5 samples).
pub fn random_instance(seed: u64, top_k: usize) -> Result<GradInstance> {
    let mut rng = SimRng::derive(seed, &[0x6772_6164]);
    let dims = MoEDims {
        input_dim: 2 + rng.below(5),
        hidden_dim: 2 + rng.below(7),
        num_classes: 2 + rng.below(3),
        num_experts: 2,
    };
    let mut params = init_params(dims, rng.next_u64())?;
    params.values_mut().for_each(|v| *v *= 2.0);
    for b in params.experts.iter_mut().flat_map(|e| e.hidden.bias.iter_mut().chain(e.output.bias.iter_mut())) {
        *b = rng.uniform_in(-0.5, 0.5);
    }
    let mut batch = Dataset::empty(dims.input_dim);
    for _ in 0..5 {
        let x: Vec<f64> = (0..dims.input_dim).map(|_| rng.normal()).collect();
        batch.push(&x, rng.below(dims.num_classes));
    }
    Ok(GradInstance {
        params,
        batch,
        active: vec![0, 1],
        top_k,
    })
}

/// Compares analytic and central-difference gradients on every parameter.
/// `tamper` edits the analytic gradient before comparison (fault injection).
pub fn check_instance(
    inst: &GradInstance,
    index: usize,
    tamper: Option<&dyn Fn(&mut MoEParams)>,
    report: &mut GradReport,
) -> Result<()> {
    let mut analytic = loss_and_grad_top_k(&inst.params, &inst.batch, &inst.active, inst.top_k)?.grads;
    if let Some(f) = tamper {
        f(&mut analytic);
    }
    let frozen = frozen_losses(&inst.params, &inst.batch, &inst.active)?;
    let (_, base_routes) = surrogate(&inst.params, &inst.batch, &inst.active, inst.top_k, &frozen)?;
    let analytic: Vec<f64> = analytic.values().copied().collect();

    let mut probe = inst.params.clone();
    for (j, &a) in analytic.iter().enumerate() {
        let orig = *probe.values_mut().nth(j).expect("index in range");
        *probe.values_mut().nth(j).expect("index in range") = orig + STEP;
        let (plus, r_plus) = surrogate(&probe, &inst.batch, &inst.active, inst.top_k, &frozen)?;
        *probe.values_mut().nth(j).expect("index in range") = orig - STEP;
        let (minus, r_minus) = surrogate(&probe, &inst.batch, &inst.active, inst.top_k, &frozen)?;
        *probe.values_mut().nth(j).expect("index in range") = orig;
        if r_plus != base_routes || r_minus != base_routes {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * STEP);
        let err = rel_error(a, numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some(Worst {
                instance: index,
                parameter: describe_index(&inst.params.dims, j),
                analytic: a,
                numeric,
                rel_error: err,
            });
        }
    }
    report.instances += 1;
    Ok(())
}

/// The standard suite: `count` random instances, every fifth with top-2 routing.
pub fn run_suite(seed: u64, count: usize, tamper: Option<&dyn Fn(&mut MoEParams)>) -> Result<GradReport> {
    let mut report = GradReport::default();
    for i in 0..count {
        let top_k = if i % 5 == 4 { 2 } else { 1 };
        let inst = random_instance(crate::rng::derive_seed(seed, i as u64), top_k)?;
        check_instance(&inst, i, tamper, &mut report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn describe_covers_every_index() {
        let dims = MoEDims {
            input_dim: 2,
            hidden_dim: 3,
            num_classes: 2,
            num_experts: 2,
        };
        let n = MoEParams::zeros(dims).param_count();
        assert_eq!(describe_index(&dims, 0), "gate.weight[0][0]");
        assert_eq!(describe_index(&dims, 4), "gate.bias[0]");
        assert_eq!(describe_index(&dims, 6), "expert[0].hidden.weight[0][0]");
        assert_eq!(describe_index(&dims, n - 1), "expert[1].output.bias[1]");
    }

    #[test]
    fn suite_passes() {
        let report = run_suite(1, 10, None).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.checked > 100);
    }

    #[test]
    fn tampering_is_located() {
        let tamper = |g: &mut MoEParams| g.experts[1].output.bias[0] += 0.05;
        let report = run_suite(1, 3, Some(&tamper)).unwrap();
        assert!(!report.passed());
        let worst = report.worst.unwrap();
        assert_eq!(worst.parameter, "expert[1].output.bias[0]");
    }
}
