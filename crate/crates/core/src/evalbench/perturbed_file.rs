//! On-disk container for perturbed test sets: an 8-byte magic, a JSON
//! header (attack, shape, labels, success mask), then the raw f64
//! little-endian payload. Compact enough for image sets and exact for
//! re-verifying the budget invariant later.

use super::super::attacks::{AttackSpec, PerturbedBatch};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;

const MAGIC: &[u8; 8] = b"EAEPSET1";

#[derive(Serialize, Deserialize)]
struct Header {
    attack: AttackSpec,
    shape: Vec<usize>,
    labels: Vec<usize>,
    success_mask: Vec<bool>,
}

pub struct PerturbedSetFile {
    pub attack: AttackSpec,
    pub labels: Vec<usize>,
    pub batch: PerturbedBatch,
}

pub fn write_perturbed_set(
    path: &Path,
    attack: &AttackSpec,
    labels: &[usize],
    batch: &PerturbedBatch,
) -> Result<()> {
    let header = Header {
        attack: attack.clone(),
        shape: batch.x_adv.shape().to_vec(),
        labels: labels.to_vec(),
        success_mask: batch.success_mask.clone(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Format(format!("perturbed set header encode: {e}")))?;
    let mut bytes = Vec::with_capacity(12 + header_json.len() + batch.x_adv.len() * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for v in batch.x_adv.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_perturbed_set(path: &Path) -> Result<PerturbedSetFile> {
    let bytes = std::fs::read(path)?;
    let fail = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(fail("not a perturbed-set file (bad magic)"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload_at = 12 + header_len;
    if bytes.len() < payload_at {
        return Err(fail("truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[12..payload_at])
        .map_err(|e| fail(&format!("header decode: {e}")))?;
    let numel: usize = header.shape.iter().product();
    if bytes.len() != payload_at + numel * 8 {
        return Err(fail(&format!(
            "payload length {} does not match shape {:?}",
            bytes.len() - payload_at,
            header.shape
        )));
    }
    let data: Vec<f64> = bytes[payload_at..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if header.labels.len() != header.shape[0] || header.success_mask.len() != header.shape[0] {
        return Err(fail("label or mask length does not match the batch"));
    }
    Ok(PerturbedSetFile {
        attack: header.attack,
        labels: header.labels,
        batch: PerturbedBatch {
            x_adv: Tensor::new(&header.shape, data)?,
            success_mask: header.success_mask,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.bin");
        let attack = AttackSpec::fgsm(0.05);
        let batch = PerturbedBatch {
            x_adv: Tensor::new(&[2, 3], vec![0.1, 0.9, 0.5, 0.0, 1.0, 0.25]).unwrap(),
            success_mask: vec![true, false],
        };
        write_perturbed_set(&path, &attack, &[1, 0], &batch).unwrap();
        let back = read_perturbed_set(&path).unwrap();
        assert_eq!(back.attack, attack);
        assert_eq!(back.labels, vec![1, 0]);
        assert_eq!(back.batch.x_adv.data(), batch.x_adv.data());
        assert_eq!(back.batch.success_mask, batch.success_mask);
    }

    #[test]
    fn corrupted_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"EAEPSET1\xff\xff\xff\xff").unwrap();
        assert!(matches!(read_perturbed_set(&path), Err(Error::Format(_))));
        std::fs::write(&path, b"NOTASET!").unwrap();
        assert!(matches!(read_perturbed_set(&path), Err(Error::Format(_))));
    }
}
