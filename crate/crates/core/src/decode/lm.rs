//! Character n-gram language model in the text back-off format.
//!
//! ```text
//! \data\
//! ngram 1=4
//! ngram 2=2
//!
//! \1-grams:
//! -0.30103    a    -0.1
//! ...
//! \end\
//! ```
//!
//! Every token is a single character, or one of `<s>`, `</s>`, `<unk>` and
//! `<space>`. Probabilities and back-off weights are log10.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const BEGIN_ID: u32 = 0x11_0000;
const END_ID: u32 = 0x11_0001;
const UNK_ID: u32 = 0x11_0002;

/// Orders above this load with a warning.
pub const MAX_SUPPORTED_ORDER: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LmToken {
    Begin,
    End,
    Unk,
    Char(char),
}

impl LmToken {
    fn id(self) -> u32 {
        match self {
            LmToken::Begin => BEGIN_ID,
            LmToken::End => END_ID,
            LmToken::Unk => UNK_ID,
            LmToken::Char(c) => c as u32,
        }
    }

    fn from_id(id: u32) -> Self {
        match id {
            BEGIN_ID => LmToken::Begin,
            END_ID => LmToken::End,
            UNK_ID => LmToken::Unk,
            c => LmToken::Char(char::from_u32(c).expect("valid char id")),
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        Some(match text {
            "<s>" => LmToken::Begin,
            "</s>" => LmToken::End,
            "<unk>" => LmToken::Unk,
            "<space>" => LmToken::Char(' '),
            _ => {
                let mut it = text.chars();
                let c = it.next()?;
                if it.next().is_some() {
                    return None;
                }
                LmToken::Char(c)
            }
        })
    }

    pub fn text(self) -> String {
        match self {
            LmToken::Begin => "<s>".into(),
            LmToken::End => "</s>".into(),
            LmToken::Unk => "<unk>".into(),
            LmToken::Char(' ') => "<space>".into(),
            LmToken::Char(c) => c.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Entry {
    log10_prob: f64,
    backoff: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CharLm {
    /// `orders[k - 1]` holds the k-grams.
    orders: Vec<HashMap<Vec<u32>, Entry>>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::LmParse {
        line,
        msg: msg.into(),
    }
}

impl CharLm {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        fn next_nonblank<'s>(lines: &mut impl Iterator<Item = (usize, &'s str)>) -> Option<(usize, &'s str)> {
            lines.find(|(_, l)| !l.is_empty())
        }

        match next_nonblank(&mut lines) {
            Some((_, "\\data\\")) => {}
            Some((n, _)) => return Err(parse_err(n, "expected \\data\\ header")),
            None => return Err(parse_err(0, "empty file")),
        }

        let mut counts: Vec<usize> = Vec::new();
        let mut pending = None;
        for (n, line) in lines.by_ref() {
            if line.is_empty() {
                if counts.is_empty() {
                    continue;
                }
                break;
            }
            if line.starts_with('\\') {
                pending = Some((n, line));
                break;
            }
            let rest = line
                .strip_prefix("ngram ")
                .ok_or_else(|| parse_err(n, format!("malformed count line {line:?}")))?;
            let (k, c) = rest
                .split_once('=')
                .ok_or_else(|| parse_err(n, format!("malformed count line {line:?}")))?;
            let k: usize = k.trim().parse().map_err(|_| parse_err(n, "bad order"))?;
            let c: usize = c.trim().parse().map_err(|_| parse_err(n, "bad count"))?;
            if k != counts.len() + 1 {
                return Err(parse_err(n, format!("expected count for order {}", counts.len() + 1)));
            }
            counts.push(c);
        }
        if counts.is_empty() {
            return Err(parse_err(0, "no ngram counts in header"));
        }
        if counts.len() > MAX_SUPPORTED_ORDER {
            log::warn!(
                "language model order {} exceeds {MAX_SUPPORTED_ORDER}",
                counts.len()
            );
        }

        let mut orders: Vec<HashMap<Vec<u32>, Entry>> = Vec::with_capacity(counts.len());
        let mut header = match pending {
            Some(h) => Some(h),
            None => next_nonblank(&mut lines),
        };
        for (k, &expected) in counts.iter().enumerate().map(|(i, c)| (i + 1, c)) {
            let (hn, h) = header.ok_or_else(|| parse_err(0, format!("missing \\{k}-grams: section")))?;
            if h != format!("\\{k}-grams:") {
                return Err(parse_err(hn, format!("expected \\{k}-grams:, found {h:?}")));
            }
            let mut table = HashMap::with_capacity(expected);
            header = None;
            for (n, line) in lines.by_ref() {
                if line.is_empty() {
                    continue;
                }
                if line.starts_with('\\') {
                    header = Some((n, line));
                    break;
                }
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != k + 1 && fields.len() != k + 2 {
                    return Err(parse_err(n, format!("expected {k} tokens in {line:?}")));
                }
                let log10_prob: f64 = fields[0]
                    .parse()
                    .map_err(|_| parse_err(n, format!("bad log probability {:?}", fields[0])))?;
                let key = fields[1..=k]
                    .iter()
                    .map(|t| {
                        LmToken::parse(t)
                            .map(LmToken::id)
                            .ok_or_else(|| parse_err(n, format!("unsupported token {t:?}")))
                    })
                    .collect::<Result<Vec<u32>>>()?;
                let backoff = match fields.get(k + 1) {
                    Some(b) => Some(b.parse().map_err(|_| parse_err(n, format!("bad back-off {b:?}")))?),
                    None => None,
                };
                if k > 1 {
                    if !orders[k - 2].contains_key(&key[..k - 1]) {
                        return Err(parse_err(n, "context of n-gram has no entry of its own"));
                    }
                    if !orders[0].contains_key(&key[k - 1..]) {
                        return Err(parse_err(n, "final token is not a unigram"));
                    }
                }
                table.insert(key, Entry { log10_prob, backoff });
            }
            if table.len() != expected {
                return Err(parse_err(
                    hn,
                    format!("section \\{k}-grams: header declares {expected} entries, found {}", table.len()),
                ));
            }
            orders.push(table);
        }
        match header {
            Some((_, "\\end\\")) => Ok(Self { orders }),
            Some((n, h)) => Err(parse_err(n, format!("expected \\end\\, found {h:?}"))),
            None => Err(parse_err(0, "missing \\end\\")),
        }
    }

    pub fn order(&self) -> usize {
        self.orders.len()
    }

    /// Entries per order.
    pub fn counts(&self) -> Vec<usize> {
        self.orders.iter().map(HashMap::len).collect()
    }

    fn has_unk(&self) -> bool {
        self.orders[0].contains_key(&[UNK_ID][..])
    }

    fn map_id(&self, t: LmToken) -> u32 {
        let id = t.id();
        if !self.orders[0].contains_key(&[id][..]) && self.has_unk() {
            UNK_ID
        } else {
            id
        }
    }

    /// log10 P(next | context) with standard back-off. Only the last
    /// `order − 1` context tokens are used.
    pub fn log10_prob(&self, context: &[LmToken], next: LmToken) -> Result<f64> {
        let w = self.map_id(next);
        if !self.orders[0].contains_key(&[w][..]) {
            return Err(Error::UnscorableSymbol(next.text()));
        }
        let keep = context.len().min(self.order() - 1);
        let ctx: Vec<u32> = context[context.len() - keep..]
            .iter()
            .map(|&t| self.map_id(t))
            .collect();
        let mut acc = 0.0;
        let mut key = Vec::with_capacity(ctx.len() + 1);
        for start in 0..=ctx.len() {
            let h = &ctx[start..];
            key.clear();
            key.extend_from_slice(h);
            key.push(w);
            if let Some(e) = self.orders[key.len() - 1].get(&key) {
                return Ok(acc + e.log10_prob);
            }
            if let Some(e) = self.orders[h.len() - 1].get(h) {
                acc += e.backoff.unwrap_or(0.0);
            }
        }
        unreachable!("unigram presence checked above")
    }

    /// Convenience wrapper over characters; the context is prefixed with `<s>`.
    pub fn score_chars(&self, context: &str, next: char) -> Result<f64> {
        let ctx: Vec<LmToken> = std::iter::once(LmToken::Begin)
            .chain(context.chars().map(LmToken::Char))
            .collect();
        self.log10_prob(&ctx, LmToken::Char(next))
    }

    /// Tokens a prediction can land on: every unigram except `<s>`.
    pub fn predictable_tokens(&self) -> Vec<LmToken> {
        let mut v: Vec<LmToken> = self.orders[0]
            .keys()
            .map(|k| LmToken::from_id(k[0]))
            .filter(|&t| t != LmToken::Begin)
            .collect();
        v.sort();
        v
    }

    /// Largest total probability mass over predictable tokens among all
    /// explicit contexts (and the empty one).
    pub fn max_context_mass(&self) -> Result<f64> {
        let targets = self.predictable_tokens();
        let mut contexts: Vec<Vec<LmToken>> = vec![Vec::new()];
        for table in &self.orders[..self.order() - 1] {
            contexts.extend(
                table
                    .keys()
                    .map(|k| k.iter().map(|&id| LmToken::from_id(id)).collect()),
            );
        }
        let mut worst: f64 = 0.0;
        for ctx in &contexts {
            let mut mass = 0.0;
            for &t in &targets {
                mass += 10f64.powf(self.log10_prob(ctx, t)?);
            }
            worst = worst.max(mass);
        }
        Ok(worst)
    }

    /// Serializes in the text back-off format, entries sorted by token text.
    pub fn to_arpa(&self) -> String {
        let mut out = String::from("\\data\\\n");
        for (k, t) in self.orders.iter().enumerate() {
            let _ = writeln!(out, "ngram {}={}", k + 1, t.len());
        }
        for (k, table) in self.orders.iter().enumerate() {
            let _ = write!(out, "\n\\{}-grams:\n", k + 1);
            let mut rows: Vec<(String, &Entry)> = table
                .iter()
                .map(|(key, e)| {
                    let toks: Vec<String> =
                        key.iter().map(|&id| LmToken::from_id(id).text()).collect();
                    (toks.join(" "), e)
                })
                .collect();
            rows.sort_by(|a, b| a.0.cmp(&b.0));
            for (toks, e) in rows {
                match e.backoff {
                    Some(b) => {
                        let _ = writeln!(out, "{}\t{}\t{}", e.log10_prob, toks, b);
                    }
                    None => {
                        let _ = writeln!(out, "{}\t{}", e.log10_prob, toks);
                    }
                }
            }
        }
        out.push_str("\n\\end\\\n");
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_arpa())?;
        Ok(())
    }
}
