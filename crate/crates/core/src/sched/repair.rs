use super::assign::{AssignmentPlan, Strategy, Weights};
use super::capacity::CapacityView;
use super::scores::ScoreState;
use crate::error::Result;

/// Gives every expert at least one trainer when some client can take it.
///
/// Orphans (experts nobody holds) are visited in ascending id. An orphan goes
/// to the lowest-id client with spare capacity; failing that, it replaces the
/// held expert with the smallest desirability margin over the orphan, among
/// held experts that at least one other client also holds (so a swap never
/// creates a new orphan). Margin ties go to the lower client id, then the
/// lower held expert id. Plans from other strategies pass through unchanged.
pub fn coverage_repair(
    plan: &AssignmentPlan,
    state: &ScoreState,
    capacity: &CapacityView<'_>,
    weights: Weights,
) -> Result<AssignmentPlan> {
    if plan.strategy != Strategy::LoadBalanced {
        return Ok(plan.clone());
    }
    let num_experts = state.num_experts();
    let mut out = plan.clone();
    let mut load = out.expert_load(num_experts);

    let mut scores = std::collections::BTreeMap::new();
    for &client in out.assignments.keys() {
        scores.insert(client, state.desirability_row(client, weights.fitness, weights.usage)?);
    }
    let candidates: std::collections::BTreeMap<usize, Vec<usize>> = out
        .assignments
        .keys()
        .map(|&c| (c, capacity.candidates(c)))
        .collect();

    for orphan in 0..num_experts {
        if load[orphan] > 0 {
            continue;
        }
        let eligible = |c: &usize| candidates[c].contains(&orphan);

        let spare = out
            .assignments
            .iter()
            .find(|(c, held)| held.len() < out.per_client_limit[*c] && eligible(c))
            .map(|(&c, _)| c);
        if let Some(client) = spare {
            let held = out.assignments.get_mut(&client).expect("client present");
            held.push(orphan);
            held.sort_unstable();
            load[orphan] += 1;
            continue;
        }

        let mut best: Option<(f64, usize, usize)> = None;
        for (&client, held) in &out.assignments {
            if !eligible(&client) {
                continue;
            }
            let row = &scores[&client];
            for &h in held {
                if load[h] < 2 {
                    continue;
                }
                let margin = row[h] - row[orphan];
                let better = match best {
                    None => true,
                    Some((m, _, _)) => margin < m,
                };
                if better {
                    best = Some((margin, client, h));
                }
            }
        }
        if let Some((_, client, h)) = best {
            let held = out.assignments.get_mut(&client).expect("client present");
            held.retain(|&e| e != h);
            held.push(orphan);
            held.sort_unstable();
            load[h] -= 1;
            load[orphan] += 1;
        }
    }
    Ok(out)
}
