//! Tokenization shared by chunking, the hashing embedder, the TF-IDF
//! baseline and path matching.

/// A token borrowed from its source text, with its byte span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits `text` into tokens with byte spans.
///
/// Maximal runs of alphanumerics and underscores form one token; any other
/// non-whitespace character is a token on its own; whitespace is dropped.
pub fn token_spans(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            if word_start.is_none() {
                word_start = Some(i);
            }
            continue;
        }
        if let Some(start) = word_start.take() {
            tokens.push(Token { text: &text[start..i], start, end: i });
        }
        if !c.is_whitespace() {
            let end = i + c.len_utf8();
            tokens.push(Token { text: &text[i..end], start: i, end });
        }
    }
    if let Some(start) = word_start {
        tokens.push(Token { text: &text[start..], start, end: text.len() });
    }
    tokens
}

/// Token strings of `text`, see [`token_spans`].
pub fn tokenize(text: &str) -> Vec<&str> {
    token_spans(text).into_iter().map(|t| t.text).collect()
}

/// True when `token` is an identifier-like run rather than a symbol.
pub fn is_word(token: &str) -> bool {
    token.chars().next().is_some_and(is_word_char)
}

/// Splits an identifier on underscores and camelCase boundaries and
/// lowercases the parts: `JavaElementLabels` -> `java element labels`,
/// `HTMLPageLM` -> `html page lm`, `zoom_out2` -> `zoom out2`.
pub fn split_identifier(ident: &str) -> Vec<String> {
    let mut parts = Vec::new();
    for piece in ident.split('_').filter(|p| !p.is_empty()) {
        let chars: Vec<char> = piece.chars().collect();
        let mut current = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if i > 0 && c.is_uppercase() {
                let prev = chars[i - 1];
                let next_is_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
                let boundary = prev.is_lowercase() || prev.is_numeric() || (prev.is_uppercase() && next_is_lower);
                if boundary && !current.is_empty() {
                    parts.push(std::mem::take(&mut current).to_lowercase());
                }
            }
            current.push(c);
        }
        if !current.is_empty() {
            parts.push(current.to_lowercase());
        }
    }
    parts
}

/// Lowercased terms of `text`: identifier tokens are split with
/// [`split_identifier`], symbol tokens are kept as-is.
pub fn terms(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for token in tokenize(text) {
        if is_word(token) {
            out.extend(split_identifier(token));
        } else {
            out.push(token.to_string());
        }
    }
    out
}

/// Identifier-derived terms only (symbols dropped).
pub fn word_terms(text: &str) -> Vec<String> {
    tokenize(text).into_iter().filter(|t| is_word(t)).flat_map(split_identifier).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("int add(int a)"), vec!["int", "add", "(", "int", "a", ")"]);
        assert_eq!(tokenize("foo_bar2"), vec!["foo_bar2"]);
        assert_eq!(tokenize("a+=b;\n\t"), vec!["a", "+", "=", "b", ";"]);
    }

    #[test]
    fn spans_point_into_source() {
        let text = "x.y  (zé)";
        for t in token_spans(text) {
            assert_eq!(&text[t.start..t.end], t.text);
        }
        assert_eq!(tokenize(text), vec!["x", ".", "y", "(", "zé", ")"]);
    }

    #[test]
    fn identifier_splitting() {
        assert_eq!(split_identifier("JavaElementLabels"), vec!["java", "element", "labels"]);
        assert_eq!(split_identifier("HTMLPageLM"), vec!["html", "page", "lm"]);
        assert_eq!(split_identifier("zoom_out2"), vec!["zoom", "out2"]);
        assert_eq!(split_identifier("getX2Value"), vec!["get", "x2", "value"]);
        assert_eq!(split_identifier("__"), Vec::<String>::new());
    }

    #[test]
    fn terms_keep_symbols() {
        assert_eq!(terms("zoomOut()"), vec!["zoom", "out", "(", ")"]);
        assert_eq!(word_terms("zoomOut()"), vec!["zoom", "out"]);
    }
}
