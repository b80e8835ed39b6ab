#![allow(dead_code)]

use hgnn_core::dataset::{deterministic_split, row_normalize, DatasetBundle, SplitSizes, Structure};
use hgnn_core::rng::{below, seeded, uniform01};
use hgnn_core::DenseMatrix;

/// Community-structured citation dataset: links and features both lean
/// towards the vertex's class, so models can learn something.
pub fn synthetic_citations(n: usize, classes: usize, features: usize, seed: u64, sizes: SplitSizes) -> DatasetBundle {
    let mut rng = seeded(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut links = Vec::new();
    for v in 0..n {
        for _ in 0..2 {
            let same = classes == 1 || uniform01(&mut rng) < 0.8;
            let u = loop {
                let u = below(&mut rng, n);
                if u != v && (labels[u] == labels[v]) == same {
                    break u;
                }
            };
            links.push((u, v));
        }
    }
    let x = DenseMatrix::from_fn(n, features, |i, j| {
        let p = if j % classes == labels[i] { 0.5 } else { 0.1 };
        if uniform01(&mut rng) < p { 1.0 } else { 0.0 }
    });
    let split = deterministic_split(&labels, classes, sizes, None).unwrap();
    DatasetBundle {
        name: "synthetic".into(),
        features: row_normalize(&x),
        labels,
        class_names: (0..classes).map(|c| format!("c{c}")).collect(),
        structure: Structure::Citations(links),
        split,
    }
}

pub fn small_sizes() -> SplitSizes {
    SplitSizes {
        train_per_class: 4,
        val: 15,
        test: 20,
    }
}
