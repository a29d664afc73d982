use crate::error::{Error, Result};

/// Dense feature matrix with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    input_dim: usize,
    /// Row-major `len x input_dim`.
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(input_dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::config("dataset input_dim must be > 0"));
        }
        if features.len() != labels.len() * input_dim {
            return Err(Error::input(format!(
                "{} features do not match {} labels of dim {input_dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self {
            input_dim,
            features,
            labels,
        })
    }

    pub fn empty(input_dim: usize) -> Self {
        Self {
            input_dim,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, x: &[f64], label: usize) {
        assert_eq!(x.len(), self.input_dim, "sample dimension");
        self.features.extend_from_slice(x);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn sample(&self, i: usize) -> (&[f64], usize) {
        (&self.features[i * self.input_dim..(i + 1) * self.input_dim], self.labels[i])
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Rows in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut out = Dataset::empty(self.input_dim);
        for &i in indices {
            let (x, y) = self.sample(i);
            out.push(x, y);
        }
        out
    }

    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let dim = parts.first().map(|d| d.input_dim).ok_or_else(|| Error::input("nothing to concatenate"))?;
        let mut out = Dataset::empty(dim);
        for p in parts {
            if p.input_dim != dim {
                return Err(Error::input("datasets differ in input_dim"));
            }
            out.features.extend_from_slice(&p.features);
            out.labels.extend_from_slice(&p.labels);
        }
        Ok(out)
    }
}
