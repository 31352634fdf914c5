use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::TokenId;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const SEP: TokenId = 3;
pub const UNK: TokenId = 4;

pub const RESERVED: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<sep>", "<unk>"];
const VOCAB_HEADER: &str = "#textrec-vocab v1";

/// Closed word-level vocabulary. Ids `0..5` are the reserved tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    /// Only the reserved tokens.
    pub fn new() -> Self {
        let mut v = Self {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for w in RESERVED {
            v.insert(w);
        }
        v
    }

    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self::new();
        for w in words {
            let w = w.as_ref();
            if w.is_empty() || w.chars().any(char::is_whitespace) || w != w.to_lowercase() {
                return Err(Error::contract(format!("invalid vocabulary word {w:?}")));
            }
            if v.index.contains_key(w) {
                return Err(Error::contract(format!("duplicate vocabulary word {w:?}")));
            }
            v.insert(w);
        }
        Ok(v)
    }

    fn insert(&mut self, w: &str) -> TokenId {
        let id = self.words.len() as TokenId;
        self.words.push(w.to_string());
        self.index.insert(w.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: TokenId) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    /// Whitespace split, lowercased lookup, `UNK` for unknown words.
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .map(|w| self.id(&w.to_lowercase()).unwrap_or(UNK))
            .collect()
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&i| self.word(i).unwrap_or(RESERVED[UNK as usize]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One token per line after a version header; line order is id order.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.words.len() * 8);
        let _ = writeln!(s, "{VOCAB_HEADER}");
        for w in &self.words {
            let _ = writeln!(s, "{w}");
        }
        s
    }

    pub fn from_text(text: &str, path: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == VOCAB_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: 1,
                    msg: format!("expected header `{VOCAB_HEADER}`"),
                })
            }
        }
        let mut words = Vec::new();
        for (i, line) in lines {
            let w = line.trim();
            let expected = RESERVED.get(words.len());
            if let Some(&r) = expected {
                if w != r {
                    return Err(Error::Parse {
                        path: path.into(),
                        line: i + 1,
                        msg: format!("expected reserved token `{r}`, found `{w}`"),
                    });
                }
                words.push(w.to_string());
                continue;
            }
            if w.is_empty() {
                continue;
            }
            words.push(w.to_string());
        }
        if words.len() < RESERVED.len() {
            return Err(Error::Parse {
                path: path.into(),
                line: words.len() + 2,
                msg: "missing reserved tokens".into(),
            });
        }
        Self::from_words(&words[RESERVED.len()..]).map_err(|e| Error::Parse {
            path: path.into(),
            line: 0,
            msg: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        Self::from_text(&fs::read_to_string(p)?, &p.display().to_string())
    }
}
