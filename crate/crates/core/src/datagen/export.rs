//! Per-client dataset files.
//!
//! `client_NNNN.bin` holds `num_samples * input_dim` little-endian `f32`
//! features (row-major) followed by `num_samples` little-endian `u16` labels.
//! `client_NNNN.json` is the sidecar described by [`ClientSidecar`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::clients::ClientDataset;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientSidecar {
    pub format: String,
    pub version: u32,
    pub client_id: usize,
    pub num_samples: usize,
    pub input_dim: usize,
    pub num_classes: usize,
    pub seed: u64,
    pub task_mixture: Vec<f64>,
    pub dominant_task: usize,
    pub sample_tasks: Vec<usize>,
}

pub fn file_stem(client_id: usize) -> String {
    format!("client_{client_id:04}")
}

pub fn write_client(dir: &Path, client: &ClientDataset, num_classes: usize, seed: u64) -> Result<(PathBuf, PathBuf)> {
    if num_classes > usize::from(u16::MAX) + 1 {
        return Err(Error::config("labels must fit in u16"));
    }
    let stem = file_stem(client.client_id);
    let bin = dir.join(format!("{stem}.bin"));
    let json = dir.join(format!("{stem}.json"));
    let mut bytes = Vec::with_capacity(client.data.features().len() * 4 + client.data.len() * 2);
    for v in client.data.features() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    for &y in client.data.labels() {
        bytes.extend_from_slice(&(y as u16).to_le_bytes());
    }
    std::fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    let sidecar = ClientSidecar {
        format: "fedmoe-client-data".into(),
        version: 1,
        client_id: client.client_id,
        num_samples: client.data.len(),
        input_dim: client.data.input_dim(),
        num_classes,
        seed,
        task_mixture: client.task_mixture.clone(),
        dominant_task: client.dominant_task,
        sample_tasks: client.sample_tasks.clone(),
    };
    let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    text.push('\n');
    std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    Ok((bin, json))
}

pub fn read_client(dir: &Path, client_id: usize) -> Result<(ClientSidecar, ClientDataset)> {
    let stem = file_stem(client_id);
    let bin = dir.join(format!("{stem}.bin"));
    let json = dir.join(format!("{stem}.json"));
    let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let sidecar: ClientSidecar = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: json.clone(),
        message: e.to_string(),
    })?;
    let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let n = sidecar.num_samples;
    let d = sidecar.input_dim;
    if bytes.len() != n * d * 4 + n * 2 {
        return Err(Error::Format {
            path: bin,
            message: format!("expected {} bytes, found {}", n * d * 4 + n * 2, bytes.len()),
        });
    }
    let (feat, labels) = bytes.split_at(n * d * 4);
    let features = feat
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let labels = labels
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes(c.try_into().expect("2 bytes")) as usize)
        .collect();
    let data = Dataset::new(d, features, labels)?;
    let client = ClientDataset {
        client_id,
        data,
        sample_tasks: sidecar.sample_tasks.clone(),
        task_mixture: sidecar.task_mixture.clone(),
        dominant_task: sidecar.dominant_task,
    };
    Ok((sidecar, client))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_client_data, gen_tasks, Partition, TaskParams};

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let tasks = gen_tasks(&TaskParams::new(2, 3, 4, 0.2), 1).unwrap();
        let clients = gen_client_data(&tasks, 2, 25, Partition::Skew(0.8), 1).unwrap();
        write_client(dir.path(), &clients[1], 4, 1).unwrap();
        let (meta, back) = read_client(dir.path(), 1).unwrap();
        assert_eq!(meta.num_samples, 25);
        assert_eq!(back.data.labels(), clients[1].data.labels());
        for (a, b) in back.data.features().iter().zip(clients[1].data.features()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert_eq!(back.sample_tasks, clients[1].sample_tasks);
        let size = std::fs::metadata(dir.path().join("client_0001.bin")).unwrap().len();
        assert_eq!(size, 25 * 3 * 4 + 25 * 2);
    }
}
