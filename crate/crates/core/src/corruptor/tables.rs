//! Confusion tables and their tab-separated text format.
//!
//! One rule per line: `kind<TAB>source<TAB>target1[,target2,...]`, with kind
//! one of `hom`, `glyph`, `radical`, `split`, `symbol`. A `symbol` line
//! carries only targets (`symbol<TAB>#,$,%`). Blank lines and lines starting
//! with `#<SPACE>` or `//` are ignored. Split targets are the component
//! characters, in order.

use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TableError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid rule for {ch:?}: {msg}")]
    Invalid { ch: char, msg: String },
    #[error("no symbol entries")]
    NoSymbols,
    #[error("cannot read tables file: {0}")]
    Io(String),
}

fn invalid(source: char, msg: impl Into<String>) -> TableError {
    TableError::Invalid {
        ch: source,
        msg: msg.into(),
    }
}

/// Per-operator lookup tables. Iteration order is insertion order, which for
/// parsed tables is file order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionTables {
    homophone: IndexMap<char, Vec<char>>,
    near_glyph: IndexMap<char, Vec<char>>,
    radical: IndexMap<char, char>,
    split: IndexMap<char, Vec<char>>,
    symbols: Vec<char>,
}

impl ConfusionTables {
    pub fn new(symbols: Vec<char>) -> Result<Self, TableError> {
        if symbols.is_empty() {
            return Err(TableError::NoSymbols);
        }
        Ok(ConfusionTables {
            homophone: IndexMap::new(),
            near_glyph: IndexMap::new(),
            radical: IndexMap::new(),
            split: IndexMap::new(),
            symbols,
        })
    }

    pub fn add_homophone(&mut self, source: char, targets: &[char]) -> Result<(), TableError> {
        add_list(&mut self.homophone, source, targets)
    }

    pub fn add_near_glyph(&mut self, source: char, targets: &[char]) -> Result<(), TableError> {
        add_list(&mut self.near_glyph, source, targets)
    }

    pub fn add_radical(&mut self, source: char, target: char) -> Result<(), TableError> {
        if source == target {
            return Err(invalid(source, "maps to itself"));
        }
        if self.radical.contains_key(&source) {
            return Err(invalid(source, "duplicate radical rule"));
        }
        self.radical.insert(source, target);
        Ok(())
    }

    pub fn add_split(&mut self, source: char, components: &[char]) -> Result<(), TableError> {
        if components.len() < 2 {
            return Err(invalid(source, "split needs at least two components"));
        }
        if self.split.contains_key(&source) {
            return Err(invalid(source, "duplicate split rule"));
        }
        self.split.insert(source, components.to_vec());
        Ok(())
    }

    pub fn add_symbols(&mut self, symbols: &[char]) {
        for s in symbols {
            if !self.symbols.contains(s) {
                self.symbols.push(*s);
            }
        }
    }

    pub fn homophone(&self) -> &IndexMap<char, Vec<char>> {
        &self.homophone
    }

    pub fn near_glyph(&self) -> &IndexMap<char, Vec<char>> {
        &self.near_glyph
    }

    pub fn radical(&self) -> &IndexMap<char, char> {
        &self.radical
    }

    pub fn split(&self) -> &IndexMap<char, Vec<char>> {
        &self.split
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn is_symbol(&self, c: char) -> bool {
        self.symbols.contains(&c)
    }

    /// Characters that some substitution rule maps onto `c`: the
    /// candidates for undoing a substitution that produced `c`. Table
    /// order (homophone, near-glyph, radical), deduplicated.
    pub fn sources_of(&self, c: char) -> Vec<char> {
        let mut out: Vec<char> = Vec::new();
        let hits = self
            .homophone
            .iter()
            .chain(&self.near_glyph)
            .filter(|(_, t)| t.contains(&c))
            .map(|(s, _)| *s)
            .chain(self.radical.iter().filter(|(_, t)| **t == c).map(|(s, _)| *s));
        for s in hits {
            if s != c && !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut tables = ConfusionTables {
            homophone: IndexMap::new(),
            near_glyph: IndexMap::new(),
            radical: IndexMap::new(),
            split: IndexMap::new(),
            symbols: Vec::new(),
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |msg: String| TableError::Parse { line, msg };
            if raw.trim().is_empty() || raw.starts_with("# ") || raw.starts_with("//") {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            let kind = fields[0];
            if kind == "symbol" {
                let targets = match fields.as_slice() {
                    [_, t] => *t,
                    [_, "", t] => *t,
                    _ => return Err(err("symbol line must be `symbol<TAB>targets`".into())),
                };
                let syms = parse_targets(targets).map_err(err)?;
                tables.add_symbols(&syms);
                continue;
            }
            let [_, source, targets] = fields.as_slice() else {
                return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
            };
            let mut sc = source.chars();
            let (Some(source), None) = (sc.next(), sc.next()) else {
                return Err(err(format!("source must be one character, got {source:?}")));
            };
            let targets = parse_targets(targets).map_err(err)?;
            let res = match kind {
                "hom" => tables.add_homophone(source, &targets),
                "glyph" => tables.add_near_glyph(source, &targets),
                "radical" => match targets.as_slice() {
                    [t] => tables.add_radical(source, *t),
                    _ => Err(invalid(source, "radical rule takes exactly one target")),
                },
                "split" => tables.add_split(source, &targets),
                other => return Err(err(format!("unknown kind {other:?}"))),
            };
            res.map_err(|e| err(e.to_string()))?;
        }
        if tables.symbols.is_empty() {
            return Err(TableError::NoSymbols);
        }
        Ok(tables)
    }

    pub fn load(path: &Path) -> Result<Self, TableError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TableError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Serialize back to the text format; `parse(to_tsv())` is the identity.
    pub fn to_tsv(&self) -> String {
        let join = |v: &[char]| v.iter().map(char::to_string).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        for (s, t) in &self.homophone {
            let _ = writeln!(out, "hom\t{s}\t{}", join(t));
        }
        for (s, t) in &self.near_glyph {
            let _ = writeln!(out, "glyph\t{s}\t{}", join(t));
        }
        for (s, t) in &self.radical {
            let _ = writeln!(out, "radical\t{s}\t{t}");
        }
        for (s, t) in &self.split {
            let _ = writeln!(out, "split\t{s}\t{}", join(t));
        }
        let _ = writeln!(out, "symbol\t{}", join(&self.symbols));
        out
    }
}

fn add_list(map: &mut IndexMap<char, Vec<char>>, source: char, targets: &[char]) -> Result<(), TableError> {
    if targets.is_empty() {
        return Err(invalid(source, "empty target list"));
    }
    if targets.contains(&source) {
        return Err(invalid(source, "maps to itself"));
    }
    let entry = map.entry(source).or_default();
    for t in targets {
        if !entry.contains(t) {
            entry.push(*t);
        }
    }
    Ok(())
}

fn parse_targets(field: &str) -> Result<Vec<char>, String> {
    field
        .split(',')
        .map(|t| {
            let mut it = t.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(format!("target must be one character, got {t:?}")),
            }
        })
        .collect()
}
