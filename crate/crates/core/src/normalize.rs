//! Canonical keys for front-end requests and back-end queries.
//!
//! Two HTTP requests are the same key when they share method, path and the
//! set of query-parameter names; parameter values never enter the key. SQL
//! queries are reduced to a lexical skeleton in which every literal is
//! replaced by `?`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::TrafficError;

/// Suffixes treated as static files when no explicit set is configured.
pub const DEFAULT_STATIC_EXTENSIONS: [&str; 8] =
    [".html", ".htm", ".css", ".js", ".png", ".jpg", ".gif", ".ico"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HttpRequestKey {
    method: String,
    path: String,
    param_names: Vec<String>,
}

impl HttpRequestKey {
    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    /// Sorted, de-duplicated parameter names.
    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    /// Parses a rendered key and rejects anything that is not already canonical.
    pub fn parse_canonical(text: &str) -> Result<Self, TrafficError> {
        let key = parse_request_line(text)?;
        if key.to_string() != text {
            return Err(TrafficError::UnparsableRequest(format!(
                "not a canonical request key: {text:?}"
            )));
        }
        Ok(key)
    }
}

/// Renders as `METHOD path` or `METHOD path?a&b`; the rendering normalizes to itself.
impl fmt::Display for HttpRequestKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.method, self.path)?;
        if !self.param_names.is_empty() {
            write!(f, "?{}", self.param_names.join("&"))?;
        }
        Ok(())
    }
}

impl Serialize for HttpRequestKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HttpRequestKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        HttpRequestKey::parse_canonical(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SqlQueryKey {
    skeleton: String,
}

impl SqlQueryKey {
    pub fn skeleton(&self) -> &str {
        &self.skeleton
    }

    pub fn parse_canonical(text: &str) -> Result<Self, String> {
        let key = normalize_sql(text);
        if key.skeleton != text {
            return Err(format!("not a canonical query skeleton: {text:?}"));
        }
        Ok(key)
    }
}

impl fmt::Display for SqlQueryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.skeleton)
    }
}

impl Serialize for SqlQueryKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.skeleton)
    }
}

impl<'de> Deserialize<'de> for SqlQueryKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        SqlQueryKey::parse_canonical(&text).map_err(serde::de::Error::custom)
    }
}

/// Case-insensitive set of file suffixes (`.css`, `.png`, ...) that mark a request as static.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticExtensions {
    suffixes: BTreeSet<String>,
}

impl StaticExtensions {
    pub fn new<I, S>(suffixes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let suffixes = suffixes
            .into_iter()
            .map(|s| {
                let s = s.as_ref().trim().to_ascii_lowercase();
                if s.starts_with('.') {
                    s
                } else {
                    format!(".{s}")
                }
            })
            .filter(|s| s.len() > 1)
            .collect();
        Self { suffixes }
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.suffixes.iter().map(String::as_str)
    }

    /// True iff the final path segment ends in one of the configured suffixes.
    pub fn is_static_path(&self, path: &str) -> bool {
        let segment = path.rsplit('/').next().unwrap_or(path);
        match segment.rfind('.') {
            Some(dot) => self
                .suffixes
                .contains(&segment[dot..].to_ascii_lowercase()),
            None => false,
        }
    }

    pub fn is_static(&self, key: &HttpRequestKey) -> bool {
        self.is_static_path(&key.path)
    }
}

impl Default for StaticExtensions {
    fn default() -> Self {
        Self::new(DEFAULT_STATIC_EXTENSIONS)
    }
}

/// Normalizes a request line `METHOD target [HTTP/x.y]` and reports whether it names a static file.
pub fn normalize_http(
    raw_request_line: &str,
    static_extensions: &StaticExtensions,
) -> Result<(HttpRequestKey, bool), TrafficError> {
    let key = parse_request_line(raw_request_line)?;
    let is_static = static_extensions.is_static(&key);
    Ok((key, is_static))
}

fn parse_request_line(raw: &str) -> Result<HttpRequestKey, TrafficError> {
    let unparsable = || TrafficError::UnparsableRequest(raw.to_string());

    let mut parts = raw.split_whitespace();
    let method = parts.next().ok_or_else(unparsable)?;
    let target = parts.next().ok_or_else(unparsable)?;
    match parts.next() {
        None => {}
        Some(version) if version.starts_with("HTTP/") && parts.next().is_none() => {}
        Some(_) => return Err(unparsable()),
    }
    if !method.bytes().all(|b| b.is_ascii_alphabetic()) {
        return Err(unparsable());
    }

    let target = target.split('#').next().unwrap_or_default();
    let (path, query) = match target.split_once('?') {
        Some((path, query)) => (path, Some(query)),
        None => (target, None),
    };
    let path = collapse_slashes(path);
    if path.is_empty() {
        return Err(unparsable());
    }

    let param_names: BTreeSet<&str> = query
        .into_iter()
        .flat_map(|q| q.split('&'))
        .map(|pair| pair.split('=').next().unwrap_or_default())
        .filter(|name| !name.is_empty())
        .collect();

    Ok(HttpRequestKey {
        method: method.to_ascii_uppercase(),
        path,
        param_names: param_names.into_iter().map(str::to_string).collect(),
    })
}

fn collapse_slashes(path: &str) -> String {
    let mut out = String::with_capacity(path.len());
    let mut prev_slash = false;
    for c in path.chars() {
        if c == '/' && prev_slash {
            continue;
        }
        prev_slash = c == '/';
        out.push(c);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Word(String),
    Placeholder,
    Punct(String),
}

const MULTI_CHAR_OPERATORS: [&str; 7] = ["<=", ">=", "<>", "!=", "==", "||", "::"];

/// Masks literals and folds case and whitespace.
///
/// Quoted strings (single or double quotes), numbers and `$n` parameters become
/// `?`. `--`, `#` and `/* */` comments are dropped. ASCII letters outside
/// literals are lowercased. Everything else passes through as punctuation.
pub fn normalize_sql(raw_sql: &str) -> SqlQueryKey {
    let tokens = tokenize_sql(raw_sql);
    SqlQueryKey {
        skeleton: render_tokens(&tokens),
    }
}

fn tokenize_sql(raw: &str) -> Vec<Token> {
    let chars: Vec<char> = raw.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;

    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();

        if c.is_whitespace() {
            i += 1;
        } else if c == '-' && next == Some('-') || c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '/' && next == Some('*') {
            i += 2;
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                i += 1;
            }
            i = (i + 2).min(chars.len());
        } else if c == '\'' || c == '"' {
            i = skip_quoted(&chars, i);
            tokens.push(Token::Placeholder);
        } else if c.is_numeric() || c == '.' && next.is_some_and(char::is_numeric) {
            i += 1;
            while i < chars.len() && (chars[i].is_alphanumeric() || matches!(chars[i], '_' | '.')) {
                i += 1;
            }
            tokens.push(Token::Placeholder);
        } else if c == '$' && next.is_some_and(|n| n.is_ascii_digit()) {
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            tokens.push(Token::Placeholder);
        } else if c == '?' {
            i += 1;
            tokens.push(Token::Placeholder);
        } else if is_word_char(c) {
            let start = i;
            while i < chars.len() && is_word_char(chars[i]) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            tokens.push(Token::Word(word.to_ascii_lowercase()));
        } else {
            let pair: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            if MULTI_CHAR_OPERATORS.contains(&pair.as_str()) {
                tokens.push(Token::Punct(pair));
                i += 2;
            } else {
                tokens.push(Token::Punct(c.to_string()));
                i += 1;
            }
        }
    }
    tokens
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

/// Index just past the closing quote, honouring doubled quotes and backslash escapes.
fn skip_quoted(chars: &[char], start: usize) -> usize {
    let quote = chars[start];
    let mut i = start + 1;
    while i < chars.len() {
        match chars[i] {
            '\\' => i += 2,
            c if c == quote => {
                if chars.get(i + 1) == Some(&quote) {
                    i += 2;
                } else {
                    return i + 1;
                }
            }
            _ => i += 1,
        }
    }
    chars.len()
}

fn render_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    let mut glue_next = true;
    for token in tokens {
        let text = match token {
            Token::Word(w) => w.as_str(),
            Token::Placeholder => "?",
            Token::Punct(p) => p.as_str(),
        };
        let glue_prev = matches!(text, "," | ")" | ";" | ".");
        if !glue_next && !glue_prev {
            out.push(' ');
        }
        out.push_str(text);
        glue_next = matches!(text, "(" | ".");
    }
    out
}
