use super::params::MoEParams;
use crate::dataset::Dataset;
use crate::error::{check_index, Error, Result};

/// Result of routing one input.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    /// Class logits: the selected expert's output (gate-weighted mix under top-k > 1).
    pub logits: Vec<f64>,
    /// Active expert ids, ascending.
    pub active: Vec<usize>,
    /// Softmax over the active set, aligned with `active`.
    pub gate: Vec<f64>,
    /// Top-1 expert id.
    pub selected: usize,
    /// All routed expert ids in rank order (length = top_k).
    pub routed: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct LossAndGrad {
    /// Mean cross-entropy of the routed output.
    pub loss: f64,
    /// Gradients, same shape as the parameters. Entries of experts outside
    /// the active set are zero.
    pub grads: MoEParams,
}

pub(crate) fn normalize_active(active: &[usize], num_experts: usize) -> Result<Vec<usize>> {
    if active.is_empty() {
        return Err(Error::input("active expert set is empty"));
    }
    let mut sorted = active.to_vec();
    sorted.sort_unstable();
    for (i, &e) in sorted.iter().enumerate() {
        check_index("expert", e, num_experts)?;
        if i > 0 && sorted[i - 1] == e {
            return Err(Error::input(format!("expert {e} listed twice in active set")));
        }
    }
    Ok(sorted)
}

/// Reusable buffers for one forward/backward pass over a fixed active set.
pub(crate) struct Pass {
    pub active: Vec<usize>,
    top_k: usize,
    hidden_dim: usize,
    num_classes: usize,
    gate_all: Vec<f64>,
    pub probs: Vec<f64>,
    /// Positions into `active`, best first, length `top_k`.
    pub rank: Vec<usize>,
    mix: Vec<f64>,
    pub mixed_logits: Vec<f64>,
    /// Per active expert: tanh activations, logits and own cross-entropy.
    hidden: Vec<f64>,
    logits: Vec<f64>,
    pub expert_loss: Vec<f64>,
    computed: Vec<bool>,
    // backward scratch
    d_logits: Vec<f64>,
    d_out: Vec<f64>,
    d_hidden: Vec<f64>,
    d_gate: Vec<f64>,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    log_sum_exp(logits) - logits[label]
}

impl Pass {
    pub fn new(params: &MoEParams, active: &[usize], top_k: usize) -> Result<Self> {
        let d = params.dims;
        let active = normalize_active(active, d.num_experts)?;
        if top_k == 0 || top_k > active.len() {
            return Err(Error::config(format!(
                "top_k {top_k} must be in 1..={} (active experts)",
                active.len()
            )));
        }
        let a = active.len();
        Ok(Self {
            top_k,
            hidden_dim: d.hidden_dim,
            num_classes: d.num_classes,
            gate_all: vec![0.0; d.num_experts],
            probs: vec![0.0; a],
            rank: Vec::with_capacity(a),
            mix: vec![0.0; top_k],
            mixed_logits: vec![0.0; d.num_classes],
            hidden: vec![0.0; a * d.hidden_dim],
            logits: vec![0.0; a * d.num_classes],
            expert_loss: vec![0.0; a],
            computed: vec![false; a],
            d_logits: vec![0.0; d.num_classes],
            d_out: vec![0.0; d.num_classes],
            d_hidden: vec![0.0; d.hidden_dim],
            d_gate: vec![0.0; a],
            active,
        })
    }

    fn route(&mut self, params: &MoEParams, x: &[f64]) {
        params.gate.forward_into(x, &mut self.gate_all);
        let m = self
            .active
            .iter()
            .map(|&e| self.gate_all[e])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (p, &e) in self.probs.iter_mut().zip(&self.active) {
            *p = (self.gate_all[e] - m).exp();
            z += *p;
        }
        self.probs.iter_mut().for_each(|p| *p /= z);
        self.rank.clear();
        self.rank.extend(0..self.active.len());
        let probs = &self.probs;
        self.rank.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        self.rank.truncate(self.top_k);
        let mass: f64 = self.rank.iter().map(|&i| self.probs[i]).sum();
        for (w, &i) in self.mix.iter_mut().zip(&self.rank) {
            *w = self.probs[i] / mass;
        }
        self.computed.iter_mut().for_each(|c| *c = false);
    }

    fn expert_forward(&mut self, params: &MoEParams, x: &[f64], slot: usize, label: Option<usize>) {
        let expert = &params.experts[self.active[slot]];
        let h = &mut self.hidden[slot * self.hidden_dim..(slot + 1) * self.hidden_dim];
        expert.hidden.forward_into(x, h);
        h.iter_mut().for_each(|v| *v = v.tanh());
        let o = &mut self.logits[slot * self.num_classes..(slot + 1) * self.num_classes];
        expert.output.forward_into(h, o);
        if let Some(y) = label {
            self.expert_loss[slot] = cross_entropy(o, y);
        }
        self.computed[slot] = true;
    }

    fn slot_logits(&self, slot: usize) -> &[f64] {
        &self.logits[slot * self.num_classes..(slot + 1) * self.num_classes]
    }

    fn mix_outputs(&mut self) {
        self.mixed_logits.iter_mut().for_each(|v| *v = 0.0);
        for (k, &slot) in self.rank.iter().enumerate() {
            let w = self.mix[k];
            let o = &self.logits[slot * self.num_classes..(slot + 1) * self.num_classes];
            for (m, v) in self.mixed_logits.iter_mut().zip(o) {
                *m += w * v;
            }
        }
    }

    /// Routed experts only; enough for prediction.
    pub fn infer(&mut self, params: &MoEParams, x: &[f64]) {
        self.route(params, x);
        for k in 0..self.rank.len() {
            let slot = self.rank[k];
            self.expert_forward(params, x, slot, None);
        }
        self.mix_outputs();
    }

    pub fn selected(&self) -> usize {
        self.active[self.rank[0]]
    }

    pub fn routed_slots(&self) -> &[usize] {
        &self.rank
    }

    /// Full pass for one labelled sample: computes every active expert's own
    /// loss (needed by the gate objective), accumulates gradients into
    /// `grads`, and returns the routed cross-entropy.
    ///
    /// The per-sample objective is
    /// `CE(routed output) + sum_e p_e * stop_grad(CE(expert e))` over active experts.
    pub fn train_step(&mut self, params: &MoEParams, x: &[f64], label: usize, grads: &mut MoEParams, scale: f64) -> f64 {
        self.route(params, x);
        for slot in 0..self.active.len() {
            self.expert_forward(params, x, slot, Some(label));
        }
        self.mix_outputs();
        let loss = cross_entropy(&self.mixed_logits, label);

        // d CE / d mixed logits
        let lse = log_sum_exp(&self.mixed_logits);
        for (d, m) in self.d_logits.iter_mut().zip(&self.mixed_logits) {
            *d = (m - lse).exp() * scale;
        }
        self.d_logits[label] -= scale;

        // Gate: expected detached expert loss.
        let baseline: f64 = self.probs.iter().zip(&self.expert_loss).map(|(p, l)| p * l).sum();
        for (slot, g) in self.d_gate.iter_mut().enumerate() {
            *g = scale * self.probs[slot] * (self.expert_loss[slot] - baseline);
        }
        // Gate: mixing weights under top-k > 1 (softmax restricted to routed set).
        if self.rank.len() > 1 {
            let dots: Vec<f64> = self
                .rank
                .iter()
                .map(|&slot| {
                    self.slot_logits(slot)
                        .iter()
                        .zip(&self.d_logits)
                        .map(|(o, d)| o * d)
                        .sum::<f64>()
                })
                .collect();
            let mean: f64 = self.mix.iter().zip(&dots).map(|(w, d)| w * d).sum();
            for (k, &slot) in self.rank.iter().enumerate() {
                self.d_gate[slot] += self.mix[k] * (dots[k] - mean);
            }
        }
        let gate_grad = &mut grads.gate;
        let outputs = gate_grad.outputs;
        for (i, xi) in x.iter().enumerate() {
            let row = &mut gate_grad.weight[i * outputs..(i + 1) * outputs];
            for (slot, &e) in self.active.iter().enumerate() {
                row[e] += xi * self.d_gate[slot];
            }
        }
        for (slot, &e) in self.active.iter().enumerate() {
            gate_grad.bias[e] += self.d_gate[slot];
        }

        // Experts: only routed ones receive the CE gradient.
        for k in 0..self.rank.len() {
            let slot = self.rank[k];
            let w = self.mix[k];
            let e = self.active[slot];
            for (o, d) in self.d_out.iter_mut().zip(&self.d_logits) {
                *o = d * w;
            }
            let d_out = &self.d_out;
            let h = &self.hidden[slot * self.hidden_dim..(slot + 1) * self.hidden_dim];
            let expert = &params.experts[e];
            let g = &mut grads.experts[e];
            g.output.accumulate(h, d_out);
            expert.output.backprop_input(d_out, &mut self.d_hidden);
            for (dh, hv) in self.d_hidden.iter_mut().zip(h) {
                *dh *= 1.0 - hv * hv;
            }
            g.hidden.accumulate(x, &self.d_hidden);
        }
        loss
    }

    pub fn output(&self) -> ForwardOutput {
        debug_assert!(self.rank.iter().all(|&s| self.computed[s]));
        ForwardOutput {
            logits: self.mixed_logits.clone(),
            active: self.active.clone(),
            gate: self.probs.clone(),
            selected: self.selected(),
            routed: self.rank.iter().map(|&s| self.active[s]).collect(),
        }
    }
}

/// Routes `x` among `active` experts with top-1 selection.
pub fn forward(params: &MoEParams, x: &[f64], active: &[usize]) -> Result<ForwardOutput> {
    forward_top_k(params, x, active, 1)
}

pub fn forward_top_k(params: &MoEParams, x: &[f64], active: &[usize], top_k: usize) -> Result<ForwardOutput> {
    if x.len() != params.dims.input_dim {
        return Err(Error::input(format!(
            "input has {} features, model expects {}",
            x.len(),
            params.dims.input_dim
        )));
    }
    let mut pass = Pass::new(params, active, top_k)?;
    pass.infer(params, x);
    Ok(pass.output())
}

/// Mean routed cross-entropy and its gradient over a batch (top-1 routing).
pub fn loss_and_grad(params: &MoEParams, batch: &Dataset, active: &[usize]) -> Result<LossAndGrad> {
    loss_and_grad_top_k(params, batch, active, 1)
}

pub fn loss_and_grad_top_k(
    params: &MoEParams,
    batch: &Dataset,
    active: &[usize],
    top_k: usize,
) -> Result<LossAndGrad> {
    if batch.is_empty() {
        return Err(Error::input("batch is empty"));
    }
    check_batch(params, batch)?;
    let mut pass = Pass::new(params, active, top_k)?;
    let mut grads = MoEParams::zeros(params.dims);
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for i in 0..batch.len() {
        let (x, y) = batch.sample(i);
        loss += pass.train_step(params, x, y, &mut grads, scale);
    }
    Ok(LossAndGrad {
        loss: loss * scale,
        grads,
    })
}

pub(crate) fn check_batch(params: &MoEParams, data: &Dataset) -> Result<()> {
    if data.input_dim() != params.dims.input_dim {
        return Err(Error::input(format!(
            "dataset dim {} does not match model input_dim {}",
            data.input_dim(),
            params.dims.input_dim
        )));
    }
    if let Some(&y) = data.labels().iter().find(|&&y| y >= params.dims.num_classes) {
        return Err(Error::input(format!(
            "label {y} out of range for {} classes",
            params.dims.num_classes
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moe::{init_params, MoEDims};
    use crate::rng::SimRng;

    fn dims() -> MoEDims {
        MoEDims {
            input_dim: 5,
            hidden_dim: 6,
            num_classes: 4,
            num_experts: 3,
        }
    }

    #[test]
    fn singleton_gate_is_one() {
        let p = init_params(dims(), 3).unwrap();
        let x = [0.3, -0.2, 0.5, 1.0, 0.0];
        let out = forward(&p, &x, &[2]).unwrap();
        assert_eq!(out.gate, vec![1.0]);
        assert_eq!(out.selected, 2);
        let mut h = vec![0.0; 6];
        p.experts[2].hidden.forward_into(&x, &mut h);
        h.iter_mut().for_each(|v| *v = v.tanh());
        let mut o = vec![0.0; 4];
        p.experts[2].output.forward_into(&h, &mut o);
        assert_eq!(out.logits, o);
    }

    #[test]
    fn zero_gate_is_uniform_and_picks_lowest_id() {
        let mut p = init_params(dims(), 3).unwrap();
        p.gate = crate::moe::Dense::zeros(5, 3);
        let out = forward(&p, &[1.0, 2.0, 3.0, 4.0, 5.0], &[1, 2]).unwrap();
        assert_eq!(out.gate, vec![0.5, 0.5]);
        assert_eq!(out.selected, 1);
        let out = forward(&p, &[1.0; 5], &[2, 0, 1]).unwrap();
        assert_eq!(out.selected, 0);
        assert!((out.gate.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn top1_matches_recomputed_gate_argmax() {
        let p = init_params(dims(), 17).unwrap();
        let mut rng = SimRng::new(99);
        let active = [0, 1, 2];
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| rng.normal() * 2.0).collect();
            let out = forward(&p, &x, &active).unwrap();
            let logits: Vec<f64> = active
                .iter()
                .map(|&e| p.gate.bias[e] + (0..5).map(|i| x[i] * p.gate.weight[i * 3 + e]).sum::<f64>())
                .collect();
            let mut best = 0;
            for e in 1..3 {
                if logits[e] > logits[best] {
                    best = e;
                }
            }
            assert_eq!(out.selected, active[best]);
            assert!((out.gate.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_errors() {
        let p = init_params(dims(), 1).unwrap();
        assert!(matches!(forward(&p, &[0.0; 5], &[]), Err(Error::Input(_))));
        assert!(matches!(forward(&p, &[0.0; 4], &[0]), Err(Error::Input(_))));
        assert!(matches!(forward(&p, &[0.0; 5], &[7]), Err(Error::Index { .. })));
        assert!(forward_top_k(&p, &[0.0; 5], &[0], 2).is_err());
    }

    #[test]
    fn near_zero_init_gives_uniform_loss() {
        let mut p = init_params(dims(), 5).unwrap();
        p.values_mut().for_each(|v| *v *= 1e-3);
        let mut rng = SimRng::new(1);
        let mut data = Dataset::empty(5);
        for i in 0..64 {
            let x: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
            data.push(&x, i % 4);
        }
        let lg = loss_and_grad(&p, &data, &[0, 1, 2]).unwrap();
        assert!((lg.loss - 4f64.ln()).abs() < 0.1, "{}", lg.loss);
    }

    #[test]
    fn inactive_experts_get_no_gradient() {
        let p = init_params(dims(), 5).unwrap();
        let mut data = Dataset::empty(5);
        data.push(&[0.1, 0.2, 0.3, 0.4, 0.5], 1);
        data.push(&[-0.1, 0.2, -0.3, 0.4, -0.5], 3);
        let lg = loss_and_grad(&p, &data, &[0, 2]).unwrap();
        assert!(lg.grads.experts[1].values().all(|&v| v == 0.0));
        let col1 = (0..5).map(|i| lg.grads.gate.weight[i * 3 + 1]);
        assert!(col1.chain(std::iter::once(lg.grads.gate.bias[1])).all(|v| v == 0.0));
    }

    #[test]
    fn loss_errors() {
        let p = init_params(dims(), 5).unwrap();
        assert!(matches!(loss_and_grad(&p, &Dataset::empty(5), &[0]), Err(Error::Input(_))));
        let mut bad = Dataset::empty(5);
        bad.push(&[0.0; 5], 9);
        assert!(loss_and_grad(&p, &bad, &[0]).is_err());
    }
}
