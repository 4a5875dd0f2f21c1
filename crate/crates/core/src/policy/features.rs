//! Hashed indicator features for lattice actions.

use super::Action;

/// Buckets `0..NUM_KINDS` hold one bias weight per action kind; hashed
/// features live in `NUM_KINDS..buckets`, so a feature vector always has
/// exactly two distinct unit entries.
pub const NUM_KINDS: usize = 4;
pub const DEFAULT_BUCKETS: usize = 4096;

const BOS: u32 = 0x11_0000;
const NONE: u32 = 0x11_0001;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureMap {
    buckets: usize,
}

impl FeatureMap {
    pub fn new(buckets: usize) -> Self {
        assert!(buckets > NUM_KINDS, "need more than {NUM_KINDS} feature buckets");
        FeatureMap { buckets }
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    /// Active buckets of action `action` taken at a position holding `source`
    /// with `left` as the preceding input character (`None` at the start).
    /// Hash: FNV-1a over `kind as u8 ++ source ++ target ++ left`, each
    /// character as a little-endian u32.
    pub fn active(&self, action: &Action, source: char, left: Option<char>) -> [usize; 2] {
        let target = match action {
            Action::Keep => u32::from(source),
            Action::Replace(c) => u32::from(*c),
            Action::Delete => NONE,
            Action::Merge { composite, .. } => u32::from(*composite),
        };
        let kind = action.kind_index();
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(&[kind as u8]);
        eat(&u32::from(source).to_le_bytes());
        eat(&target.to_le_bytes());
        eat(&left.map_or(BOS, u32::from).to_le_bytes());
        let hashed = NUM_KINDS + (h % (self.buckets - NUM_KINDS) as u64) as usize;
        [kind, hashed]
    }

    /// Input-only features for the value baseline: bucket of each
    /// (character, left context) pair, reduced modulo `dim`.
    pub fn input_bucket(c: char, left: Option<char>, dim: usize) -> usize {
        let key = (u64::from(u32::from(c)) << 32) | u64::from(left.map_or(BOS, u32::from));
        (crate::rng::splitmix64(key) % dim as u64) as usize
    }
}

impl Default for FeatureMap {
    fn default() -> Self {
        FeatureMap::new(DEFAULT_BUCKETS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_distinct_unit_entries() {
        let f = FeatureMap::new(NUM_KINDS + 1);
        for a in [Action::Keep, Action::Replace('x'), Action::Delete, Action::Merge { composite: 'm', span: 2 }] {
            let [bias, hashed] = f.active(&a, 'q', Some('p'));
            assert_eq!(bias, a.kind_index());
            assert!(bias < NUM_KINDS && hashed >= NUM_KINDS && hashed < f.buckets());
        }
    }

    #[test]
    fn context_changes_bucket() {
        let f = FeatureMap::default();
        let a = f.active(&Action::Replace('x'), 'q', Some('p'));
        let b = f.active(&Action::Replace('x'), 'q', None);
        assert_eq!(a[0], b[0]);
        assert_ne!(a[1], b[1]);
    }
}
