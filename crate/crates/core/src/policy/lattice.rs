//! Per-position edit actions.

use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::corruptor::ConfusionTables;
use crate::textcore::Sentence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Keep,
    Replace(char),
    /// Drop a known noise symbol.
    Delete,
    /// Collapse a split expansion starting here back into its composite
    /// character, consuming `span` input positions.
    Merge { composite: char, span: usize },
}

impl Action {
    pub fn kind_index(&self) -> usize {
        match self {
            Action::Keep => 0,
            Action::Replace(_) => 1,
            Action::Delete => 2,
            Action::Merge { .. } => 3,
        }
    }

    pub fn span(&self) -> usize {
        match self {
            Action::Merge { span, .. } => *span,
            _ => 1,
        }
    }
}

/// Candidate actions for every input position. A choice sequence walks the
/// input left to right, picking one action at each visited position; a merge
/// skips the positions it consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateLattice {
    input: Sentence,
    slots: Vec<Vec<Action>>,
}

impl CandidateLattice {
    /// Order within a slot: keep, replacements in table order, delete,
    /// merges in split-table order.
    pub fn build(x: &Sentence, tables: &ConfusionTables) -> Result<Self, PolicyError> {
        if x.is_empty() {
            return Err(PolicyError::EmptyInput);
        }
        let chars = x.chars();
        let slots = (0..chars.len())
            .map(|i| {
                let c = chars[i];
                let mut acts = vec![Action::Keep];
                acts.extend(tables.sources_of(c).into_iter().map(Action::Replace));
                if tables.is_symbol(c) {
                    acts.push(Action::Delete);
                }
                for (composite, parts) in tables.split() {
                    if chars[i..].starts_with(parts) {
                        acts.push(Action::Merge {
                            composite: *composite,
                            span: parts.len(),
                        });
                    }
                }
                acts
            })
            .collect();
        Ok(CandidateLattice {
            input: x.clone(),
            slots,
        })
    }

    pub fn input(&self) -> &Sentence {
        &self.input
    }

    pub fn slots(&self) -> &[Vec<Action>] {
        &self.slots
    }

    /// Validate `choices` and return the visited (position, choice) pairs.
    pub fn walk(&self, choices: &[usize]) -> Result<Vec<(usize, usize)>, PolicyError> {
        let mut out = Vec::with_capacity(choices.len());
        let mut pos = 0;
        for (step, &c) in choices.iter().enumerate() {
            let slot = self.slots.get(pos).ok_or_else(|| {
                PolicyError::InconsistentChoices(format!("{} choices but input ends after {step}", choices.len()))
            })?;
            let action = slot.get(c).ok_or_else(|| {
                PolicyError::InconsistentChoices(format!("choice {c} at position {pos} has only {} actions", slot.len()))
            })?;
            out.push((pos, c));
            pos += action.span();
        }
        if pos != self.slots.len() {
            return Err(PolicyError::InconsistentChoices(format!(
                "choices stop at position {pos} of {}",
                self.slots.len()
            )));
        }
        Ok(out)
    }

    pub fn realize(&self, choices: &[usize]) -> Result<Sentence, PolicyError> {
        let chars = self.input.chars();
        let mut out = Vec::with_capacity(chars.len());
        for (pos, c) in self.walk(choices)? {
            match self.slots[pos][c] {
                Action::Keep => out.push(chars[pos]),
                Action::Replace(r) => out.push(r),
                Action::Delete => {}
                Action::Merge { composite, .. } => out.push(composite),
            }
        }
        Ok(Sentence::from_chars(out))
    }

    /// Number of distinct full choice sequences.
    pub fn count_sequences(&self) -> u128 {
        let n = self.slots.len();
        let mut ways = vec![0u128; n + 1];
        ways[n] = 1;
        for pos in (0..n).rev() {
            ways[pos] = self.slots[pos]
                .iter()
                .map(|a| ways[pos + a.span()])
                .fold(0u128, u128::saturating_add);
        }
        ways[0]
    }

    /// All full choice sequences, or `None` if there are more than `limit`.
    pub fn enumerate(&self, limit: usize) -> Option<Vec<Vec<usize>>> {
        if self.count_sequences() > limit as u128 {
            return None;
        }
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        self.extend(0, &mut prefix, &mut out);
        Some(out)
    }

    fn extend(&self, pos: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == self.slots.len() {
            out.push(prefix.clone());
            return;
        }
        for (c, a) in self.slots[pos].iter().enumerate() {
            prefix.push(c);
            self.extend(pos + a.span(), prefix, out);
            prefix.pop();
        }
    }
}
