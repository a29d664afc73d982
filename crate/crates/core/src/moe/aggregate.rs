use super::params::{Dense, ExpertParams, MoEParams};
use super::train::LocalUpdate;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub update: LocalUpdate,
}

/// Server-side merge of one round's local updates.
///
/// Each expert becomes the average of the copies returned by the clients that
/// trained it, weighted by how many samples each client routed to it. Experts
/// nobody trained (or that received zero routed samples) keep their global
/// weights. The gate is the unweighted mean over all updates. Updates are
/// reduced in ascending client id regardless of input order.
pub fn aggregate(global: &MoEParams, updates: &[ClientUpdate]) -> Result<MoEParams> {
    let mut ordered: Vec<&ClientUpdate> = updates.iter().collect();
    ordered.sort_by_key(|u| u.client_id);
    for pair in ordered.windows(2) {
        if pair[0].client_id == pair[1].client_id {
            return Err(Error::input(format!("two updates from client {}", pair[0].client_id)));
        }
    }
    for u in &ordered {
        if !u.update.gate.same_shape(&global.gate) {
            return Err(Error::input(format!("client {} gate shape mismatch", u.client_id)));
        }
        for (e, w) in &u.update.experts {
            let g = global.experts.get(*e).ok_or_else(|| {
                Error::input(format!("client {} sent unknown expert {e}", u.client_id))
            })?;
            if !w.same_shape(g) {
                return Err(Error::input(format!(
                    "client {} expert {e} shape mismatch",
                    u.client_id
                )));
            }
        }
        if u.update.stats.counts.len() != global.dims.num_experts {
            return Err(Error::input(format!("client {} stats length mismatch", u.client_id)));
        }
    }

    let mut out = global.clone();
    if ordered.is_empty() {
        return Ok(out);
    }

    let mut gate = Dense::zeros(global.gate.inputs, global.gate.outputs);
    let share = 1.0 / ordered.len() as f64;
    for u in &ordered {
        gate.axpy(share, &u.update.gate);
    }
    out.gate = gate;

    for (e, slot) in out.experts.iter_mut().enumerate() {
        let contributions: Vec<(f64, &ExpertParams)> = ordered
            .iter()
            .filter_map(|u| {
                u.update
                    .experts
                    .iter()
                    .find(|(id, _)| *id == e)
                    .map(|(_, w)| (u.update.stats.counts[e] as f64, w))
            })
            .filter(|(count, _)| *count > 0.0)
            .collect();
        let total: f64 = contributions.iter().map(|(c, _)| c).sum();
        if total <= 0.0 {
            continue;
        }
        let mut acc = ExpertParams::zeros(&global.dims);
        for (count, w) in contributions {
            acc.axpy(count / total, w);
        }
        *slot = acc;
    }
    Ok(out)
}
