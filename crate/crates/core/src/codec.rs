//! Rendering of `(language, name)` identifiers to decoder target strings and
//! the reversible codepoint tokenizer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::LanguageCode;

/// Separates name and language in rendered identifiers.
pub const SEPARATOR: &str = " >> ";

/// How an identifier is spelled as a generation target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RenderMode {
    /// Name only.
    Canonical,
    /// `lang >> name`
    LangFirst,
    /// `name >> lang`
    #[default]
    NameFirst,
}

impl RenderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RenderMode::Canonical => "canonical",
            RenderMode::LangFirst => "lang-first",
            RenderMode::NameFirst => "name-first",
        }
    }
}

impl fmt::Display for RenderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RenderMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "canonical" => Ok(RenderMode::Canonical),
            "lang-first" => Ok(RenderMode::LangFirst),
            "name-first" => Ok(RenderMode::NameFirst),
            other => Err(format!(
                "unknown mode `{other}` (expected canonical, lang-first or name-first)"
            )),
        }
    }
}

pub fn render(lang: &LanguageCode, name: &str, mode: RenderMode) -> Result<String> {
    if name.is_empty() {
        return Err(Error::EmptyName);
    }
    if name.contains(SEPARATOR) {
        return Err(Error::SeparatorInName(name.to_owned()));
    }
    Ok(match mode {
        RenderMode::Canonical => name.to_owned(),
        RenderMode::NameFirst => format!("{name}{SEPARATOR}{lang}"),
        RenderMode::LangFirst => format!("{lang}{SEPARATOR}{name}"),
    })
}

/// Inverse of [`render`].
pub fn parse(s: &str, mode: RenderMode) -> Result<(Option<LanguageCode>, String)> {
    let fail = || Error::UnparseableIdentifier(s.to_owned(), mode);
    let (lang, name) = match mode {
        RenderMode::Canonical => {
            if s.is_empty() || s.contains(SEPARATOR) {
                return Err(fail());
            }
            return Ok((None, s.to_owned()));
        }
        RenderMode::NameFirst => {
            let (name, lang) = s.rsplit_once(SEPARATOR).ok_or_else(fail)?;
            (lang, name)
        }
        RenderMode::LangFirst => s.split_once(SEPARATOR).ok_or_else(fail)?,
    };
    if name.is_empty() || name.contains(SEPARATOR) {
        return Err(fail());
    }
    let lang = LanguageCode::new(lang).map_err(|_| fail())?;
    Ok((Some(lang), name.to_owned()))
}

/// Decoder vocabulary entry. Ids 0..=2 are reserved; codepoint `c` maps to
/// `c + 3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub const PAD: TokenId = TokenId(0);
    pub const BOS: TokenId = TokenId(1);
    pub const EOS: TokenId = TokenId(2);
    const OFFSET: u32 = 3;

    pub fn from_char(c: char) -> TokenId {
        TokenId(c as u32 + Self::OFFSET)
    }

    pub fn is_reserved(self) -> bool {
        self.0 < Self::OFFSET
    }

    pub fn to_char(self) -> Option<char> {
        self.0.checked_sub(Self::OFFSET).and_then(char::from_u32)
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TokenId::PAD => f.write_str("<pad>"),
            TokenId::BOS => f.write_str("<s>"),
            TokenId::EOS => f.write_str("</s>"),
            t => match t.to_char() {
                Some(c) => write!(f, "{c:?}"),
                None => write!(f, "#{}", t.0),
            },
        }
    }
}

/// Token ids of a decoder target, without BOS/EOS.
pub type TokenSequence = Vec<TokenId>;

pub fn tokenize(s: &str) -> TokenSequence {
    s.chars().map(TokenId::from_char).collect()
}

pub fn detokenize(tokens: &[TokenId]) -> Result<String> {
    tokens
        .iter()
        .map(|&t| {
            if t.is_reserved() {
                Err(Error::ReservedTokenInSequence(t))
            } else {
                t.to_char().ok_or(Error::InvalidToken(t))
            }
        })
        .collect()
}

pub fn render_tokens(lang: &LanguageCode, name: &str, mode: RenderMode) -> Result<TokenSequence> {
    render(lang, name, mode).map(|s| tokenize(&s))
}
