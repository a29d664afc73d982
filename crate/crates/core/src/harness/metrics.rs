/// First 1-based round whose accuracy reaches `target`.
pub fn rounds_to_target(accuracy: &[f64], target: f64) -> Option<usize> {
    accuracy.iter().position(|&a| a >= target).map(|i| i + 1)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadStats {
    /// Population standard deviation over the mean; 0 when the mean is 0.
    pub cv: f64,
    pub gini: f64,
}

/// Spread of cumulative per-expert load.
///
/// Gini uses the sorted form `sum_i (2i - n - 1) x_(i) / (n sum x)` with
/// 1-based ranks over ascending values.
pub fn load_stats(load: &[f64]) -> LoadStats {
    let n = load.len() as f64;
    let total: f64 = load.iter().sum();
    if load.is_empty() || total <= 0.0 {
        return LoadStats { cv: 0.0, gini: 0.0 };
    }
    let mean = total / n;
    let var = load.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let mut sorted = load.to_vec();
    sorted.sort_by(f64::total_cmp);
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i + 1) as f64 - n - 1.0) * x)
        .sum();
    LoadStats {
        cv: var.sqrt() / mean,
        gini: (weighted / (n * total)).max(0.0),
    }
}

/// Fraction of clients whose highest-fitness expert (lowest id on ties) is
/// their oracle expert.
pub fn alignment_recovery(fitness: &[Vec<f64>], oracle: &[usize]) -> f64 {
    if fitness.is_empty() {
        return 0.0;
    }
    let hits = fitness
        .iter()
        .zip(oracle)
        .filter(|(row, &want)| {
            let mut best = 0;
            for (e, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = e;
                }
            }
            !row.is_empty() && best == want
        })
        .count();
    hits as f64 / fitness.len() as f64
}
