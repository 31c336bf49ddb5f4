use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};

const BUNDLED_NOUNS: &str = include_str!("../../lexicon/nouns.txt");
const BUNDLED_RULES: &str = include_str!("../../lexicon/plural_rules.txt");

/// Noun lemmas plus the plural rules that map inflected forms onto them.
#[derive(Debug, Clone)]
pub struct Lexicon {
    nouns: HashSet<String>,
    irregular: HashMap<String, String>,
    suffixes: Vec<(String, String)>,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

impl Lexicon {
    /// The wordlist and rules shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_NOUNS, BUNDLED_RULES).expect("bundled lexicon is well-formed")
    }

    /// Parses a one-lemma-per-line noun list and a rule table (see the
    /// bundled `plural_rules.txt` for the format).
    pub fn parse(nouns: &str, rules: &str) -> Result<Self> {
        let bad = |line: usize, reason: String| Error::Parse {
            path: "<lexicon>".into(),
            line: line as u64,
            reason,
        };
        let nouns: HashSet<String> = content_lines(nouns).map(|(_, l)| l.to_lowercase()).collect();
        let mut irregular = HashMap::new();
        let mut suffixes = Vec::new();
        for (line, l) in content_lines(rules) {
            let fields: Vec<&str> = l.split_whitespace().collect();
            match fields.as_slice() {
                ["irregular", plural, singular] => {
                    irregular.insert(plural.to_lowercase(), singular.to_lowercase());
                }
                ["suffix", from, to] => {
                    let to = if *to == "-" { "" } else { to };
                    suffixes.push((from.to_lowercase(), to.to_lowercase()));
                }
                _ => return Err(bad(line, format!("unrecognised rule `{l}`"))),
            }
        }
        Ok(Self {
            nouns,
            irregular,
            suffixes,
        })
    }

    pub fn load(nouns: &Path, rules: &Path) -> Result<Self> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        Self::parse(&read(nouns)?, &read(rules)?)
    }

    pub fn len(&self) -> usize {
        self.nouns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nouns.is_empty()
    }

    pub fn contains(&self, lemma: &str) -> bool {
        self.nouns.contains(lemma)
    }

    /// The lemma for a lowercase word, if it is a known noun or an inflection of one.
    pub fn lemma(&self, word: &str) -> Option<String> {
        if self.nouns.contains(word) {
            return Some(word.to_string());
        }
        if let Some(s) = self.irregular.get(word) {
            return self.nouns.contains(s).then(|| s.clone());
        }
        self.suffixes.iter().find_map(|(from, to)| {
            let stem = word.strip_suffix(from.as_str())?;
            if stem.is_empty() {
                return None;
            }
            let candidate = format!("{stem}{to}");
            self.nouns.contains(&candidate).then_some(candidate)
        })
    }
}

/// Distinct noun lemmas of a caption in order of first appearance.
pub fn extract_nouns(caption: &str, lexicon: &Lexicon) -> Vec<String> {
    let mut seen = HashSet::new();
    caption
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .filter_map(|w| lexicon.lemma(&w.to_lowercase()))
        .filter(|n| seen.insert(n.clone()))
        .collect()
}
