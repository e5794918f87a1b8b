use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{tokenize, CorpusError, Result};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ id map. Id 0 is padding, id 1 is the unknown token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    firms: BTreeSet<String>,
}

impl Vocab {
    pub const PAD: u32 = 0;
    pub const UNK: u32 = 1;

    fn from_tokens(tokens: Vec<String>, firms: BTreeSet<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(CorpusError::Invalid(format!(
                "vocabulary must start with {PAD_TOKEN} and {UNK_TOKEN}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(CorpusError::Invalid(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Self { tokens, index, firms })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or [`Vocab::UNK`].
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn firms(&self) -> &BTreeSet<String> {
        &self.firms
    }

    /// One token per line; line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect(), BTreeSet::new())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }

    /// Stable digest of the vocabulary and character set, used to tie
    /// datasets and checkpoints together.
    pub fn fingerprint(&self, charset: &Charset) -> String {
        let mut h = Sha256::new();
        h.update(self.to_text().as_bytes());
        h.update(b"\0");
        h.update(charset.to_text().as_bytes());
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Builds the vocabulary from tokenised texts.
///
/// Tokens seen at least `min_count` times get ids, most frequent first (ties
/// alphabetical). Tokens of every firm name are added even when unseen.
pub fn build_vocab<'a, I>(texts: I, min_count: usize, firm_names: &[String]) -> Result<Vocab>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut any = false;
    for text in texts {
        for tok in text {
            any = true;
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    if !any {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_count.max(1) && t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend(kept.iter().map(|(t, _)| t.to_string()));
    let present: BTreeSet<String> = tokens.iter().cloned().collect();
    let firms: BTreeSet<String> = firm_names.iter().flat_map(|f| tokenize(f)).collect();
    tokens.extend(firms.iter().filter(|f| !present.contains(*f)).cloned());
    Vocab::from_tokens(tokens, firms)
}

/// Character ↔ id map. Id 0 pads short words, id 1 is an unseen character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Charset {
    chars: Vec<char>,
    index: HashMap<char, u32>,
}

impl Charset {
    pub const PAD: u32 = 0;
    pub const UNK: u32 = 1;

    pub fn build<'a, I>(texts: I) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let set: BTreeSet<char> = texts
            .into_iter()
            .flat_map(|t| t.iter())
            .flat_map(|tok| tok.chars())
            .collect();
        Self::from_chars(set.into_iter().collect())
    }

    fn from_chars(chars: Vec<char>) -> Self {
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i as u32 + 2)).collect();
        Self { chars, index }
    }

    /// Number of ids including pad and unknown.
    pub fn len(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn encode(&self, token: &str) -> Vec<u32> {
        token
            .chars()
            .map(|c| self.index.get(&c).copied().unwrap_or(Self::UNK))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{PAD_TOKEN}\n{UNK_TOKEN}\n");
        for c in &self.chars {
            s.push(*c);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(PAD_TOKEN) || lines.next() != Some(UNK_TOKEN) {
            return Err(CorpusError::Invalid(format!(
                "charset must start with {PAD_TOKEN} and {UNK_TOKEN}"
            )));
        }
        let chars = lines
            .map(|l| {
                let mut it = l.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Ok(c),
                    _ => Err(CorpusError::Invalid(format!("charset line `{l}` is not one character"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_chars(chars))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }
}
