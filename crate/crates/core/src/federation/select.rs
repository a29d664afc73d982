use crate::rng::SimRng;

/// Picks this round's participants, ascending.
///
/// Each client is available with its own probability; then up to
/// `clients_per_round` of the available ones are drawn uniformly.
pub fn select_clients(availability: &[f64], clients_per_round: usize, rng: &mut SimRng) -> Vec<usize> {
    let available: Vec<usize> = availability
        .iter()
        .enumerate()
        .filter(|(_, &p)| rng.uniform() < p)
        .map(|(c, _)| c)
        .collect();
    let mut chosen = rng.choose_distinct(&available, clients_per_round);
    chosen.sort_unstable();
    chosen
}
