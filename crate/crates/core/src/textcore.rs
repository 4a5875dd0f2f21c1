//! Sentences as sequences of Unicode scalar values, plus edit distance and
//! whitespace normalization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A sentence, stored as Unicode scalar values. `len()` counts scalars, not
/// bytes.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sentence(Vec<char>);

impl Sentence {
    pub fn new(s: &str) -> Self {
        Sentence(s.chars().collect())
    }

    pub fn from_chars(chars: Vec<char>) -> Self {
        Sentence(chars)
    }

    pub fn chars(&self) -> &[char] {
        &self.0
    }

    pub fn into_chars(self) -> Vec<char> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Copy with all Unicode whitespace removed.
    pub fn normalized(&self) -> Sentence {
        normalize(self)
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.0 {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sentence({:?})", self.to_string())
    }
}

impl From<&str> for Sentence {
    fn from(s: &str) -> Self {
        Sentence::new(s)
    }
}

impl From<String> for Sentence {
    fn from(s: String) -> Self {
        Sentence::new(&s)
    }
}

impl FromStr for Sentence {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Sentence::new(s))
    }
}

impl Serialize for Sentence {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Sentence {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Sentence::new(&s))
    }
}

/// Levenshtein distance with unit costs over Unicode scalar values.
pub fn edit_distance(a: &Sentence, b: &Sentence) -> usize {
    levenshtein(a.chars(), b.chars())
}

/// Two-row Levenshtein over arbitrary comparable symbols.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    // keep the shorter sequence in the inner loop
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Remove every Unicode whitespace character, preserving the order of the
/// rest.
pub fn normalize(s: &Sentence) -> Sentence {
    Sentence(s.0.iter().copied().filter(|c| !c.is_whitespace()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ed(a: &str, b: &str) -> usize {
        edit_distance(&a.into(), &b.into())
    }

    /// Full-table DP, kept separate from the two-row implementation.
    fn full_table(a: &[char], b: &[char]) -> usize {
        let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in t.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            t[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                t[i][j] = (t[i - 1][j] + 1)
                    .min(t[i][j - 1] + 1)
                    .min(t[i - 1][j - 1] + cost);
            }
        }
        t[a.len()][b.len()]
    }

    #[test]
    fn edit_distance_examples() {
        assert_eq!(ed("abc", "abc"), 0);
        assert_eq!(ed("abc", "abd"), 1);
        let k: Vec<char> = "kitten".chars().collect();
        let s: Vec<char> = "sitting".chars().collect();
        assert_eq!(full_table(&k, &s), 3);
        assert_eq!(ed("kitten", "sitting"), 3);
        assert_eq!(ed("", ""), 0);
        assert_eq!(ed("", "abc"), 3);
    }

    #[test]
    fn counts_scalars_not_bytes() {
        let s = Sentence::new("\u{8BEF}\u{5DEE}");
        assert_eq!(s.len(), 2);
        assert_eq!(ed("\u{8BEF}", "\u{8A00}\u{5434}"), 2);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&"a b  c".into()), Sentence::new("abc"));
        assert_eq!(normalize(&"".into()), Sentence::new(""));
        assert_eq!(normalize(&"abc".into()), Sentence::new("abc"));
        assert_eq!(normalize(&"a\u{3000}b\tc\n".into()), Sentence::new("abc"));
    }

    #[test]
    fn serde_as_string() {
        let s = Sentence::new("user#");
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, "\"user#\"");
        let back: Sentence = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
    }

    fn short() -> impl Strategy<Value = Vec<char>> {
        prop::collection::vec(prop::sample::select(vec!['a', 'b', 'c', '\u{8BEF}', ' ']), 0..=20)
    }

    proptest! {
        #[test]
        fn matches_full_table(a in short(), b in short()) {
            prop_assert_eq!(levenshtein(&a, &b), full_table(&a, &b));
        }

        #[test]
        fn metric_axioms(a in short(), b in short(), c in short()) {
            let (sa, sb, sc) = (Sentence::from_chars(a), Sentence::from_chars(b), Sentence::from_chars(c));
            let ab = edit_distance(&sa, &sb);
            prop_assert_eq!(ab, edit_distance(&sb, &sa));
            prop_assert!(edit_distance(&sa, &sc) <= ab + edit_distance(&sb, &sc));
            prop_assert_eq!(ab == 0, sa == sb);
            prop_assert!(sa.len().abs_diff(sb.len()) <= ab);
            prop_assert!(ab <= sa.len().max(sb.len()));
        }

        #[test]
        fn normalize_idempotent(a in short()) {
            let s = Sentence::from_chars(a);
            let n = normalize(&s);
            prop_assert_eq!(normalize(&n), n.clone());
            prop_assert!(n.chars().iter().all(|c| !c.is_whitespace()));
        }
    }
}
