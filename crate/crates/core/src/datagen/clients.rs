use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

use super::tasks::TaskSpec;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// How each client's task mixture is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    /// Client `c` puts `skew + (1 - skew) / T` on task `c mod T` and
    /// `(1 - skew) / T` on every other task.
    Skew(f64),
    /// Mixture drawn from a symmetric Dirichlet; the dominant task is its argmax.
    Dirichlet(f64),
}

impl Partition {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Partition::Skew(s) if !(0.0..=1.0).contains(&s) => {
                Err(Error::config(format!("skew {s} not in [0, 1]")))
            }
            Partition::Dirichlet(b) if !(b.is_finite() && b > 0.0) => {
                Err(Error::config(format!("dirichlet_beta {b} must be > 0")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClientDataset {
    pub client_id: usize,
    pub data: Dataset,
    /// Task each sample was drawn from.
    pub sample_tasks: Vec<usize>,
    /// Probability of each task; sums to 1.
    pub task_mixture: Vec<f64>,
    pub dominant_task: usize,
}

impl ClientDataset {
    pub fn task_histogram(&self, num_tasks: usize) -> Vec<usize> {
        let mut h = vec![0; num_tasks];
        for &t in &self.sample_tasks {
            h[t] += 1;
        }
        h
    }
}

/// Planted ground truth: client `c` is best served by expert `c mod num_tasks`.
pub fn oracle_alignment(num_clients: usize, num_tasks: usize) -> Vec<usize> {
    if num_tasks == 0 {
        return vec![0; num_clients];
    }
    (0..num_clients).map(|c| c % num_tasks).collect()
}

fn pick(mixture: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (t, &w) in mixture.iter().enumerate() {
        acc += w;
        if u < acc {
            return t;
        }
    }
    mixture.len() - 1
}

fn check_tasks(tasks: &[TaskSpec]) -> Result<(usize, usize)> {
    let first = tasks.first().ok_or_else(|| Error::config("no tasks"))?;
    let (dim, classes) = (first.input_dim, first.num_classes());
    if tasks.iter().any(|t| t.input_dim != dim || t.num_classes() != classes) {
        return Err(Error::config("tasks disagree on input_dim or num_classes"));
    }
    Ok((dim, classes))
}

pub fn gen_client_data(
    tasks: &[TaskSpec],
    num_clients: usize,
    samples_per_client: usize,
    partition: Partition,
    seed: u64,
) -> Result<Vec<ClientDataset>> {
    partition.validate()?;
    let (dim, classes) = check_tasks(tasks)?;
    if samples_per_client == 0 {
        return Err(Error::config("samples_per_client must be > 0"));
    }
    let num_tasks = tasks.len();
    (0..num_clients)
        .map(|client_id| {
            let mut rng = SimRng::derive(seed, &[0x636c_6e74, client_id as u64]);
            let (task_mixture, dominant_task) = match partition {
                Partition::Skew(skew) => {
                    let dominant = client_id % num_tasks;
                    let base = (1.0 - skew) / num_tasks as f64;
                    let mut m = vec![base; num_tasks];
                    m[dominant] = skew + base;
                    (m, dominant)
                }
                Partition::Dirichlet(beta) => {
                    let m: Vec<f64> = if num_tasks == 1 {
                        vec![1.0]
                    } else {
                        let dist = Dirichlet::new(&vec![beta; num_tasks])
                            .map_err(|e| Error::config(format!("dirichlet: {e}")))?;
                        let raw = dist.sample(&mut rng);
                        let total: f64 = raw.iter().sum();
                        raw.into_iter().map(|v| v / total).collect()
                    };
                    let mut dominant = 0;
                    for (t, &w) in m.iter().enumerate() {
                        if w > m[dominant] {
                            dominant = t;
                        }
                    }
                    (m, dominant)
                }
            };
            let mut data = Dataset::empty(dim);
            let mut sample_tasks = Vec::with_capacity(samples_per_client);
            let mut x = Vec::with_capacity(dim);
            for _ in 0..samples_per_client {
                let t = pick(&task_mixture, rng.uniform());
                let class = rng.below(classes);
                tasks[t].sample(class, &mut rng, &mut x);
                data.push(&x, class);
                sample_tasks.push(t);
            }
            Ok(ClientDataset {
                client_id,
                data,
                sample_tasks,
                task_mixture,
                dominant_task,
            })
        })
        .collect()
}

/// Held-out set with tasks and classes drawn uniformly.
pub fn gen_test_set(tasks: &[TaskSpec], samples: usize, seed: u64) -> Result<(Dataset, Vec<usize>)> {
    let (dim, classes) = check_tasks(tasks)?;
    let mut rng = SimRng::derive(seed, &[0x7465_7374]);
    let mut data = Dataset::empty(dim);
    let mut which = Vec::with_capacity(samples);
    let mut x = Vec::with_capacity(dim);
    for _ in 0..samples {
        let t = rng.below(tasks.len());
        let class = rng.below(classes);
        tasks[t].sample(class, &mut rng, &mut x);
        data.push(&x, class);
        which.push(t);
    }
    Ok((data, which))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_tasks, TaskParams};

    fn tasks(n: usize) -> Vec<TaskSpec> {
        gen_tasks(&TaskParams::new(n, 8, 4, 0.3), 3).unwrap()
    }

    #[test]
    fn full_skew_is_single_task() {
        let t = tasks(4);
        let clients = gen_client_data(&t, 4, 200, Partition::Skew(1.0), 1).unwrap();
        for c in &clients {
            assert_eq!(c.dominant_task, c.client_id);
            assert!(c.sample_tasks.iter().all(|&s| s == c.client_id));
            assert!((c.task_mixture.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_skew_is_uniform() {
        // Multinomial with p = 1/4, n = 10,000: sd of a cell share ~ 0.0043;
        // "within 5%" of 0.25 relative is 0.0125 (~2.9 sd), absolute 0.05 is far looser.
        let t = tasks(4);
        let clients = gen_client_data(&t, 3, 10_000, Partition::Skew(0.0), 2).unwrap();
        for c in &clients {
            for count in c.task_histogram(4) {
                let share = count as f64 / 10_000.0;
                assert!((share - 0.25).abs() < 0.05 * 0.25 * 2.0, "{share}");
            }
        }
    }

    #[test]
    fn dominant_task_is_modular() {
        let t = tasks(4);
        let clients = gen_client_data(&t, 6, 10, Partition::Skew(0.9), 0).unwrap();
        assert_eq!(clients[5].dominant_task, 1);
        assert!((clients[5].task_mixture[1] - (0.9 + 0.1 / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn label_balance() {
        let t = tasks(2);
        let clients = gen_client_data(&t, 1, 8000, Partition::Skew(0.5), 5).unwrap();
        let mut h = [0usize; 4];
        for &y in clients[0].data.labels() {
            h[y] += 1;
        }
        // sd of a count ~ sqrt(8000 * .25 * .75) ~ 38.7; allow 4 sd.
        assert!(h.iter().all(|&c| (c as f64 - 2000.0).abs() < 155.0), "{h:?}");
    }

    #[test]
    fn dirichlet_partition() {
        let t = tasks(4);
        let clients = gen_client_data(&t, 5, 50, Partition::Dirichlet(0.3), 9).unwrap();
        for c in &clients {
            assert!((c.task_mixture.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let max = c.task_mixture.iter().copied().fold(0.0, f64::max);
            assert_eq!(c.task_mixture[c.dominant_task], max);
        }
        assert!(gen_client_data(&t, 1, 5, Partition::Dirichlet(0.0), 0).is_err());
    }

    #[test]
    fn invalid_inputs() {
        let t = tasks(2);
        assert!(matches!(gen_client_data(&t, 2, 10, Partition::Skew(1.5), 0), Err(Error::Config(_))));
        assert!(gen_client_data(&t, 2, 0, Partition::Skew(0.5), 0).is_err());
    }

    #[test]
    fn deterministic() {
        let t = tasks(3);
        let a = gen_client_data(&t, 3, 40, Partition::Skew(0.7), 4).unwrap();
        let b = gen_client_data(&t, 3, 40, Partition::Skew(0.7), 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oracle_map() {
        assert_eq!(oracle_alignment(4, 4), vec![0, 1, 2, 3]);
        assert_eq!(oracle_alignment(8, 4), vec![0, 1, 2, 3, 0, 1, 2, 3]);
    }
}
