use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BACKSPACE: char = '⌫';
pub const ENTER: char = '⏎';
pub const SHIFT: char = '⇧';
pub const TAB: char = '⇥';

/// Key symbols of the output layer. Label `i < len` is `keys[i]`; the CTC
/// blank is the last label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct Vocabulary {
    keys: Vec<char>,
    #[serde(skip)]
    index: HashMap<char, usize>,
}

impl Vocabulary {
    pub fn new(keys: impl IntoIterator<Item = char>) -> Result<Self> {
        let keys: Vec<char> = keys.into_iter().collect();
        let mut index = HashMap::with_capacity(keys.len());
        for (i, &k) in keys.iter().enumerate() {
            if index.insert(k, i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate key {k:?} in vocabulary")));
            }
        }
        if keys.is_empty() {
            return Err(Error::InvalidConfig("vocabulary has no keys".into()));
        }
        Ok(Self { keys, index })
    }

    /// Printable ASCII plus backspace, enter, shift and tab: 99 keys, blank
    /// at label 99.
    pub fn keyboard() -> Self {
        let keys = (0x20u8..=0x7e)
            .map(char::from)
            .chain([BACKSPACE, ENTER, SHIFT, TAB]);
        Self::new(keys).expect("distinct keys")
    }

    /// Number of output labels including the blank.
    pub fn size(&self) -> usize {
        self.keys.len() + 1
    }

    pub fn blank(&self) -> usize {
        self.keys.len()
    }

    pub fn keys(&self) -> &[char] {
        &self.keys
    }

    pub fn symbol(&self, label: usize) -> Option<char> {
        self.keys.get(label).copied()
    }

    pub fn label(&self, key: char) -> Result<usize> {
        self.index.get(&key).copied().ok_or(Error::UnknownSymbol(key))
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars().map(|c| self.label(c)).collect()
    }

    /// Maps labels to keys, skipping blanks.
    pub fn decode(&self, labels: &[usize]) -> String {
        labels.iter().filter_map(|&l| self.symbol(l)).collect()
    }
}

impl From<String> for Vocabulary {
    fn from(s: String) -> Self {
        Self::new(s.chars()).unwrap_or_else(|_| Self::keyboard())
    }
}

impl From<Vocabulary> for String {
    fn from(v: Vocabulary) -> Self {
        v.keys.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyboard_layout() {
        let v = Vocabulary::keyboard();
        assert_eq!(v.size(), 100);
        assert_eq!(v.blank(), 99);
        assert_eq!(v.label('a').unwrap(), 'a' as usize - 0x20);
        assert!(v.label(BACKSPACE).is_ok());
        assert_eq!(v.decode(&v.encode("hi ⌫!").unwrap()), "hi ⌫!");
        assert!(v.label('é').is_err());
    }

    #[test]
    fn duplicates_rejected() {
        assert!(Vocabulary::new("aba".chars()).is_err());
    }
}
