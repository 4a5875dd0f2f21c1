//! Regenerate the bundled toy tables and corpus under `data/toy/`.

use std::path::Path;

use selfplay_csc::harness::toy;

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy");
    std::fs::write(dir.join("tables.tsv"), toy::generate_tables().to_tsv())?;
    std::fs::write(dir.join("corpus.txt"), toy::corpus_text(&toy::generate_corpus(toy::TOY_SEED)))?;
    Ok(())
}
