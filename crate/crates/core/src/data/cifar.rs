//! CIFAR-10 binary format: each record is 1 label byte followed by 3072
//! pixel bytes (1024 red, 1024 green, 1024 blue, row-major 32x32).

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::collections::HashMap;
use std::path::Path;

const RECORD_LEN: usize = 3073;
const IMAGE_LEN: usize = 3072;
const NUM_CLASSES: usize = 10;

/// Optional class filter and per-class cap, applied deterministically in
/// file order (first occurrences win).
#[derive(Debug, Clone, Default)]
pub struct SubsetSpec {
    pub classes: Option<Vec<usize>>,
    pub per_class_cap: Option<usize>,
}

impl SubsetSpec {
    fn admits(&self, label: usize) -> bool {
        match &self.classes {
            Some(wanted) => wanted.contains(&label),
            None => true,
        }
    }
}

/// Loads a CIFAR-10 binary file into an NCHW dataset with pixels scaled
/// to [0, 1] (byte 255 maps to exactly 1.0).
pub fn load_cifar10_binary(path: &Path, subset: &SubsetSpec) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    if bytes.is_empty() {
        return Err(Error::Format(format!("{}: empty file", path.display())));
    }
    if bytes.len() % RECORD_LEN != 0 {
        let offset = bytes.len() - bytes.len() % RECORD_LEN;
        return Err(Error::Format(format!(
            "{}: truncated record starting at byte {offset} (file length {} is not a multiple of {RECORD_LEN})",
            path.display(),
            bytes.len()
        )));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut class_counts: HashMap<usize, usize> = HashMap::new();
    for (idx, record) in bytes.chunks_exact(RECORD_LEN).enumerate() {
        let label = record[0] as usize;
        if label >= NUM_CLASSES {
            return Err(Error::Format(format!(
                "{}: record {idx} has label byte {label} (valid labels are 0..9)",
                path.display()
            )));
        }
        if !subset.admits(label) {
            continue;
        }
        if let Some(cap) = subset.per_class_cap {
            let count = class_counts.entry(label).or_insert(0);
            if *count >= cap {
                continue;
            }
            *count += 1;
        }
        labels.push(label);
        data.extend(record[1..].iter().map(|&b| b as f64 / 255.0));
    }
    let n = labels.len();
    Dataset::new(Tensor::new(&[n, 3, 32, 32], data)?, labels, NUM_CLASSES)
}

/// Writes a [N,3,32,32] dataset back out in CIFAR-10 binary layout.
/// Values are quantized to bytes with round-to-nearest.
pub fn write_cifar10_binary(path: &Path, dataset: &Dataset) -> Result<()> {
    if dataset.example_shape() != [3, 32, 32] {
        return Err(Error::Contract(format!(
            "CIFAR-10 writer needs [3,32,32] examples, got {:?}",
            dataset.example_shape()
        )));
    }
    let mut bytes = Vec::with_capacity(dataset.len() * RECORD_LEN);
    for (i, &label) in dataset.labels.iter().enumerate() {
        bytes.push(label as u8);
        let image = &dataset.inputs.data()[i * IMAGE_LEN..(i + 1) * IMAGE_LEN];
        bytes.extend(image.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend(std::iter::repeat_n(fill, IMAGE_LEN));
        r
    }

    #[test]
    fn loads_constructed_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.bin");
        let mut bytes = record(3, 10);
        bytes.extend(record(7, 20));
        std::fs::write(&path, &bytes).unwrap();
        let ds = load_cifar10_binary(&path, &SubsetSpec::default()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels, vec![3, 7]);
        assert_eq!(ds.example_shape(), &[3, 32, 32]);
        assert_eq!(ds.num_classes, 10);
    }

    #[test]
    fn byte_255_scales_to_exactly_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.bin");
        std::fs::write(&path, record(0, 255)).unwrap();
        let ds = load_cifar10_binary(&path, &SubsetSpec::default()).unwrap();
        assert!(ds.inputs.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn per_class_cap_keeps_first_occurrence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ten.bin");
        let mut bytes = Vec::new();
        // labels 0,1,0,1,... with distinct fills so we can tell records apart
        for i in 0..10u8 {
            bytes.extend(record(i % 2, i * 10));
        }
        std::fs::write(&path, &bytes).unwrap();
        let subset = SubsetSpec { classes: None, per_class_cap: Some(1) };
        let ds = load_cifar10_binary(&path, &subset).unwrap();
        assert_eq!(ds.labels, vec![0, 1]);
        // first record of class 0 had fill 0, first of class 1 fill 10
        assert_eq!(ds.inputs.data()[0], 0.0);
        assert!((ds.inputs.data()[IMAGE_LEN] - 10.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn class_filter_applies() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("filter.bin");
        let mut bytes = Vec::new();
        for label in [0u8, 5, 9, 5, 2] {
            bytes.extend(record(label, 1));
        }
        std::fs::write(&path, &bytes).unwrap();
        let subset = SubsetSpec { classes: Some(vec![5, 2]), per_class_cap: None };
        let ds = load_cifar10_binary(&path, &subset).unwrap();
        assert_eq!(ds.labels, vec![5, 5, 2]);
    }

    #[test]
    fn truncated_file_reports_byte_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.bin");
        let mut bytes = record(1, 0);
        bytes.extend_from_slice(&[4, 4, 4]); // partial second record
        std::fs::write(&path, &bytes).unwrap();
        match load_cifar10_binary(&path, &SubsetSpec::default()) {
            Err(Error::Format(msg)) => assert!(msg.contains("byte 3073"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn write_then_load_roundtrips_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.bin");
        let data: Vec<f64> = (0..2 * IMAGE_LEN).map(|i| (i % 256) as f64 / 255.0).collect();
        let ds = Dataset::new(
            Tensor::new(&[2, 3, 32, 32], data).unwrap(),
            vec![4, 8],
            10,
        )
        .unwrap();
        write_cifar10_binary(&path, &ds).unwrap();
        let back = load_cifar10_binary(&path, &SubsetSpec::default()).unwrap();
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.inputs.data(), ds.inputs.data());
    }
}
