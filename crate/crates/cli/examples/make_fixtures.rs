//! Regenerates the bundled demo data in `crates/cli/fixtures`.
//!
//! ```text
//! cargo run -p cd-cli --example make_fixtures
//! ```

use std::fs;
use std::path::Path;

use cd_core::embedding::write_dataset;
use cd_core::synthetic::{concept_stub, multi_axis_texts, weather_corpus, BACKBONE_TEXTS, MOOD, WEATHER};
use serde_json::json;

fn write_lines<T: serde::Serialize>(path: &Path, items: impl IntoIterator<Item = T>) {
    let body: String = items
        .into_iter()
        .map(|x| serde_json::to_string(&x).unwrap() + "\n")
        .collect();
    fs::write(path, body).unwrap();
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    fs::create_dir_all(&dir).unwrap();

    let corpus = weather_corpus(7).unwrap();
    write_dataset(dir.join("train.jsonl"), &corpus.train).unwrap();
    write_dataset(dir.join("test.jsonl"), &corpus.test).unwrap();
    write_lines(&dir.join("stub.jsonl"), concept_stub(WEATHER, 5, 12, 11));

    let pretrain = |n: usize, seed: u64| {
        multi_axis_texts(&[WEATHER, MOOD], n, 3, seed)
            .into_iter()
            .map(|(text, labels)| json!({ "text": text, "labels": labels }))
    };
    write_lines(&dir.join("pretrain.jsonl"), pretrain(BACKBONE_TEXTS, 1001));
    write_lines(&dir.join("pretrain_small.jsonl"), pretrain(240, 1001));
    println!("fixtures written to {}", dir.display());
}
