//! Writes the seeded synthetic corpus and its analogy questions.
//!
//! ```text
//! cargo run -p scglove --example gen_synthetic -- crates/cli/tests/data
//! ```

use std::path::PathBuf;

use scglove::synthetic::{generate, SyntheticConfig};

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&dir)?;
    let corpus = generate(&SyntheticConfig::default());
    std::fs::write(dir.join("synthetic_corpus.txt"), corpus.corpus_text())?;
    std::fs::write(dir.join("synthetic_analogies.txt"), corpus.analogy_text())?;
    println!("{} documents, {} analogy questions -> {}", corpus.documents.len(), corpus.analogies.len(), dir.display());
    Ok(())
}
