#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hgnn::core::dataset::{deterministic_split, row_normalize, DatasetBundle, SplitSizes, Structure};
use hgnn::core::rng::{below, seeded, uniform01};
use hgnn::core::DenseMatrix;

pub fn small_sizes() -> SplitSizes {
    SplitSizes {
        train_per_class: 4,
        val: 15,
        test: 20,
    }
}

/// Community-structured citation data as raw text: `(content, cites)`.
/// Ids are shuffled-looking strings and class names are words, so the
/// loader's remapping is exercised. Two extra link rows name unknown ids.
/// Every class needs at least two members.
pub fn citation_text(n: usize, classes: usize, features: usize, seed: u64) -> (String, String) {
    let mut rng = seeded(seed);
    let names = ["Theory", "Neural", "Rules", "Agents", "Genetic"];
    let id = |i: usize| format!("{}", (i * 7919 + 31) % 100_003);
    let mut content = String::new();
    for i in 0..n {
        let class = i % classes;
        content.push_str(&id(i));
        for j in 0..features {
            let p = if j % classes == class { 0.5 } else { 0.1 };
            content.push_str(if uniform01(&mut rng) < p { "\t1" } else { "\t0" });
        }
        let _ = writeln!(content, "\t{}", names[class]);
    }
    let mut cites = String::new();
    for v in 0..n {
        for _ in 0..2 {
            let same = classes == 1 || uniform01(&mut rng) < 0.8;
            let u = loop {
                let u = below(&mut rng, n);
                if u != v && (u % classes == v % classes) == same {
                    break u;
                }
            };
            let _ = writeln!(cites, "{} {}", id(u), id(v));
        }
    }
    let _ = writeln!(cites, "{} missing-a", id(0));
    let _ = writeln!(cites, "missing-b {}", id(1));
    (content, cites)
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Same construction as the raw text, built in memory.
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
