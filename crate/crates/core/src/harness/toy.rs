//! Synthetic toy language used by the hermetic end-to-end runs.
//!
//! Thirty clean characters starting at U+4E00, arranged in one random
//! cycle; a sentence is a window of 8 to 16 consecutive characters of that
//! cycle, so each character has exactly one possible left neighbour.
//! Homophone, near-glyph and radical rules send groups of three clean
//! characters onto one shared error character from a block of its own, so
//! undoing a substitution means choosing among three sources by context.
//! Every clean character splits into two private components and five ASCII
//! symbols serve as noise.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corruptor::ConfusionTables;
use crate::rng::{mix_seed, stream};
use crate::textcore::Sentence;

pub const ALPHABET_SIZE: usize = 30;
pub const CORPUS_SIZE: usize = 200;
pub const MIN_LEN: usize = 8;
pub const MAX_LEN: usize = 16;
/// Clean characters sharing one error character per substitution table.
pub const GROUP: usize = 3;
pub const SYMBOLS: [char; 5] = ['#', '$', '%', '&', '@'];
/// Seed used for the bundled files.
pub const TOY_SEED: u64 = 2024;

pub const TABLES_TSV: &str = include_str!("../../data/toy/tables.tsv");
pub const CORPUS_TXT: &str = include_str!("../../data/toy/corpus.txt");

fn block(base: u32, i: usize) -> char {
    char::from_u32(base + i as u32).expect("toy blocks are valid scalars")
}

pub fn alphabet() -> Vec<char> {
    (0..ALPHABET_SIZE).map(|i| block(0x4E00, i)).collect()
}

pub fn generate_tables() -> ConfusionTables {
    let mut t = ConfusionTables::new(SYMBOLS.to_vec()).expect("symbols are non-empty");
    let groups = ALPHABET_SIZE / GROUP;
    for (i, &c) in alphabet().iter().enumerate() {
        t.add_homophone(c, &[block(0x5100, i / GROUP)]).expect("fresh source");
        t.add_near_glyph(c, &[block(0x5200, i % groups)]).expect("fresh source");
        // 7 is a unit mod 30, so this is a third partition into triples
        t.add_radical(c, block(0x5300, (7 * i % ALPHABET_SIZE) / GROUP))
            .expect("fresh source");
        t.add_split(c, &[block(0x5400, 2 * i), block(0x5400, 2 * i + 1)])
            .expect("fresh source");
    }
    t
}

/// The alphabet in cycle order.
pub fn cycle(seed: u64) -> Vec<char> {
    let mut abc = alphabet();
    abc.shuffle(&mut stream(mix_seed(seed, 0, 0)));
    abc
}

pub fn generate_corpus(seed: u64) -> Vec<Sentence> {
    let ring = cycle(seed);
    let mut r = stream(mix_seed(seed, 1, 0));
    (0..CORPUS_SIZE)
        .map(|_| {
            let start = r.gen_range(0..ALPHABET_SIZE);
            let len = r.gen_range(MIN_LEN..=MAX_LEN);
            Sentence::from_chars(ring.iter().cycle().skip(start).take(len).copied().collect())
        })
        .collect()
}

/// The bundled tables.
pub fn tables() -> ConfusionTables {
    ConfusionTables::parse(TABLES_TSV).expect("bundled tables parse")
}

/// The bundled corpus.
pub fn corpus() -> Vec<Sentence> {
    CORPUS_TXT.lines().map(Sentence::new).collect()
}

pub fn corpus_text(corpus: &[Sentence]) -> String {
    corpus.iter().map(|s| format!("{s}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_files_match_generator() {
        assert_eq!(TABLES_TSV, generate_tables().to_tsv());
        assert_eq!(CORPUS_TXT, corpus_text(&generate_corpus(TOY_SEED)));
    }

    #[test]
    fn corpus_shape() {
        let c = corpus();
        assert_eq!(c.len(), CORPUS_SIZE);
        let abc = alphabet();
        for s in &c {
            assert!((MIN_LEN..=MAX_LEN).contains(&s.len()));
            assert!(s.chars().iter().all(|ch| abc.contains(ch)));
        }
    }
}
