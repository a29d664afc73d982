use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Geometry knobs for task generation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    pub num_tasks: usize,
    pub input_dim: usize,
    pub num_classes: usize,
    pub noise_sigma: f64,
    /// Norm of the per-task center shared by all of the task's prototypes.
    #[serde(default = "default_center_norm")]
    pub center_norm: f64,
    /// Norm of each class offset around the task center.
    #[serde(default = "default_class_norm")]
    pub class_norm: f64,
}

fn default_center_norm() -> f64 {
    3.0
}

fn default_class_norm() -> f64 {
    2.0
}

impl TaskParams {
    pub fn new(num_tasks: usize, input_dim: usize, num_classes: usize, noise_sigma: f64) -> Self {
        Self {
            num_tasks,
            input_dim,
            num_classes,
            noise_sigma,
            center_norm: default_center_norm(),
            class_norm: default_class_norm(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: usize,
    pub input_dim: usize,
    /// Orthonormal `input_dim x input_dim`, row-major.
    pub projection: Vec<f64>,
    /// `num_classes` prototypes of length `input_dim`.
    pub prototypes: Vec<Vec<f64>>,
    pub noise_sigma: f64,
}

impl TaskSpec {
    pub fn num_classes(&self) -> usize {
        self.prototypes.len()
    }

    /// `projection * prototype[class]`.
    pub fn class_mean(&self, class: usize) -> Vec<f64> {
        let d = self.input_dim;
        let p = &self.prototypes[class];
        (0..d)
            .map(|i| (0..d).map(|j| self.projection[i * d + j] * p[j]).sum())
            .collect()
    }

    /// One noisy sample of `class`.
    pub fn sample(&self, class: usize, rng: &mut SimRng, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.class_mean(class));
        if self.noise_sigma > 0.0 {
            for v in out.iter_mut() {
                *v += self.noise_sigma * rng.normal();
            }
        }
    }

    /// Smallest Euclidean distance between two prototypes.
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..self.prototypes.len() {
            for b in a + 1..self.prototypes.len() {
                best = best.min(distance(&self.prototypes[a], &self.prototypes[b]));
            }
        }
        best
    }

    /// Largest deviation of `Q^T Q` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let d = self.input_dim;
        let mut worst = 0.0_f64;
        for a in 0..d {
            for b in 0..d {
                let dot: f64 = (0..d).map(|k| self.projection[k * d + a] * self.projection[k * d + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - want).abs());
            }
        }
        worst
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn random_unit(dim: usize, rng: &mut SimRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Random orthogonal matrix: modified Gram-Schmidt on Gaussian columns,
/// applied twice for numerical orthogonality.
fn random_orthogonal(dim: usize, rng: &mut SimRng) -> Vec<f64> {
    loop {
        let mut cols: Vec<Vec<f64>> = (0..dim).map(|_| (0..dim).map(|_| rng.normal()).collect()).collect();
        let mut ok = true;
        for _pass in 0..2 {
            for i in 0..dim {
                for j in 0..i {
                    let dot: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                    let (head, tail) = cols.split_at_mut(i);
                    for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                        *a -= dot * b;
                    }
                }
                let n = cols[i].iter().map(|x| x * x).sum::<f64>().sqrt();
                if n < 1e-10 {
                    ok = false;
                    break;
                }
                cols[i].iter_mut().for_each(|x| *x /= n);
            }
        }
        if ok {
            let mut m = vec![0.0; dim * dim];
            for (j, col) in cols.iter().enumerate() {
                for (i, v) in col.iter().enumerate() {
                    m[i * dim + j] = *v;
                }
            }
            return m;
        }
    }
}

const MAX_PROTOTYPE_ATTEMPTS: usize = 1000;

/// Generates `num_tasks` tasks. Each prototype is `center_t + offset_k`, with
/// both drawn as random directions of fixed norm; offsets are redrawn until
/// every pair of prototypes in a task is at least `2 * noise_sigma` apart.
pub fn gen_tasks(params: &TaskParams, seed: u64) -> Result<Vec<TaskSpec>> {
    let TaskParams {
        num_tasks,
        input_dim,
        num_classes,
        noise_sigma,
        center_norm,
        class_norm,
    } = *params;
    if num_tasks == 0 || input_dim == 0 || num_classes == 0 {
        return Err(Error::config("num_tasks, input_dim and num_classes must be > 0"));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::config(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    if !(center_norm.is_finite() && center_norm >= 0.0 && class_norm.is_finite() && class_norm > 0.0) {
        return Err(Error::config("center_norm must be >= 0 and class_norm > 0"));
    }
    // Offsets live on a sphere of radius class_norm: at most 2 distinct
    // points fit in one dimension, and no two can be farther than 2*class_norm.
    let min_sep = 2.0 * noise_sigma;
    if (input_dim == 1 && num_classes > 2) || (num_classes > 1 && min_sep > 2.0 * class_norm) {
        return Err(Error::config(format!(
            "cannot place {num_classes} classes {min_sep} apart in {input_dim} dimensions"
        )));
    }

    (0..num_tasks)
        .map(|task_id| {
            let mut rng = SimRng::derive(seed, &[0x7461_736b, task_id as u64]);
            let projection = random_orthogonal(input_dim, &mut rng);
            let center: Vec<f64> = random_unit(input_dim, &mut rng).into_iter().map(|v| v * center_norm).collect();
            for _ in 0..MAX_PROTOTYPE_ATTEMPTS {
                let prototypes: Vec<Vec<f64>> = (0..num_classes)
                    .map(|_| {
                        random_unit(input_dim, &mut rng)
                            .into_iter()
                            .zip(&center)
                            .map(|(o, c)| c + class_norm * o)
                            .collect()
                    })
                    .collect();
                let spec = TaskSpec {
                    task_id,
                    input_dim,
                    projection: projection.clone(),
                    prototypes,
                    noise_sigma,
                };
                if spec.min_separation() >= min_sep {
                    return Ok(spec);
                }
            }
            Err(Error::config(format!(
                "could not separate {num_classes} prototypes by {min_sep} in {input_dim} dimensions"
            )))
        })
        .collect()
}
