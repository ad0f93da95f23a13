//! Span-carrying s-expression reader.

use super::{Diagnostic, Span};

/// Nesting beyond this depth is rejected instead of recursing further.
pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum SexpKind {
    List(Vec<Sexp>),
    Num(f64),
    Str(String),
    Sym(String),
    /// `:key`, stored without the colon.
    Kw(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sexp {
    pub kind: SexpKind,
    pub span: Span,
}

impl Sexp {
    pub fn as_sym(&self) -> Option<&str> {
        match &self.kind {
            SexpKind::Sym(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexp]> {
        match &self.kind {
            SexpKind::List(items) => Some(items),
            _ => None,
        }
    }

    pub fn describe(&self) -> &'static str {
        match self.kind {
            SexpKind::List(_) => "list",
            SexpKind::Num(_) => "number",
            SexpKind::Str(_) => "string",
            SexpKind::Sym(_) => "symbol",
            SexpKind::Kw(_) => "keyword",
        }
    }
}

struct Reader<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

/// Read every top-level form in `src`.
pub fn read_all(src: &str) -> Result<Vec<Sexp>, Diagnostic> {
    let mut r = Reader {
        src,
        bytes: src.as_bytes(),
        pos: 0,
    };
    let mut out = Vec::new();
    loop {
        r.skip_trivia();
        if r.pos >= r.bytes.len() {
            return Ok(out);
        }
        out.push(r.read(0)?);
    }
}

fn is_delimiter(b: u8) -> bool {
    b.is_ascii_whitespace() || matches!(b, b'(' | b')' | b'"' | b';')
}

impl<'a> Reader<'a> {
    fn skip_trivia(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b if b.is_ascii_whitespace() => self.pos += 1,
                b';' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn read(&mut self, depth: usize) -> Result<Sexp, Diagnostic> {
        let start = self.pos;
        match self.bytes[self.pos] {
            b'(' => {
                if depth >= MAX_DEPTH {
                    return Err(Diagnostic::error(
                        Span::new(start, start + 1),
                        format!("nesting deeper than {MAX_DEPTH} levels"),
                    ));
                }
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    if self.pos >= self.bytes.len() {
                        return Err(Diagnostic::error(
                            Span::new(start, self.bytes.len()),
                            "unclosed '('",
                        ));
                    }
                    if self.bytes[self.pos] == b')' {
                        self.pos += 1;
                        return Ok(Sexp {
                            kind: SexpKind::List(items),
                            span: Span::new(start, self.pos),
                        });
                    }
                    items.push(self.read(depth + 1)?);
                }
            }
            b')' => Err(Diagnostic::error(
                Span::new(start, start + 1),
                "unexpected ')'",
            )),
            b'"' => self.read_string(),
            _ => self.read_atom(),
        }
    }

    fn read_string(&mut self) -> Result<Sexp, Diagnostic> {
        let start = self.pos;
        self.pos += 1;
        let mut out = String::new();
        let mut chunk_start = self.pos;
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'"' => {
                    out.push_str(&self.src[chunk_start..self.pos]);
                    self.pos += 1;
                    return Ok(Sexp {
                        kind: SexpKind::Str(out),
                        span: Span::new(start, self.pos),
                    });
                }
                b'\\' => {
                    out.push_str(&self.src[chunk_start..self.pos]);
                    let esc = self.pos;
                    self.pos += 1;
                    let c = match self.bytes.get(self.pos) {
                        Some(b'"') => '"',
                        Some(b'\\') => '\\',
                        Some(b'n') => '\n',
                        Some(b't') => '\t',
                        _ => {
                            let end = self.next_char_boundary(esc + 1);
                            return Err(Diagnostic::error(
                                Span::new(esc, end),
                                "invalid escape in string",
                            ));
                        }
                    };
                    out.push(c);
                    self.pos += 1;
                    chunk_start = self.pos;
                }
                _ => self.pos += 1,
            }
        }
        Err(Diagnostic::error(
            Span::new(start, self.bytes.len()),
            "unterminated string",
        ))
    }

    fn next_char_boundary(&self, mut i: usize) -> usize {
        if i >= self.bytes.len() {
            return self.bytes.len();
        }
        i += 1;
        while i < self.bytes.len() && !self.src.is_char_boundary(i) {
            i += 1;
        }
        i
    }

    fn read_atom(&mut self) -> Result<Sexp, Diagnostic> {
        let start = self.pos;
        while self.pos < self.bytes.len() && !is_delimiter(self.bytes[self.pos]) {
            self.pos += 1;
        }
        let span = Span::new(start, self.pos);
        let text = &self.src[start..self.pos];
        let first = text.as_bytes()[0];
        let second = text.as_bytes().get(1).copied();

        if first == b':' {
            let name = &text[1..];
            if name.is_empty() || !name.bytes().all(is_symbol_byte) {
                return Err(Diagnostic::error(
                    span,
                    format!("malformed keyword '{text}'"),
                ));
            }
            return Ok(Sexp {
                kind: SexpKind::Kw(name.to_string()),
                span,
            });
        }

        let looks_numeric = first.is_ascii_digit()
            || (matches!(first, b'+' | b'-' | b'.')
                && second.is_some_and(|b| b.is_ascii_digit() || b == b'.'));
        if looks_numeric {
            let valid_chars = text
                .bytes()
                .all(|b| b.is_ascii_digit() || matches!(b, b'+' | b'-' | b'.' | b'e' | b'E'));
            return match text.parse::<f64>() {
                Ok(v) if valid_chars && v.is_finite() => Ok(Sexp {
                    kind: SexpKind::Num(v),
                    span,
                }),
                Ok(_) if valid_chars => Err(Diagnostic::error(
                    span,
                    format!("number '{text}' is not finite"),
                )),
                _ => Err(Diagnostic::error(
                    span,
                    format!("malformed number '{text}'"),
                )),
            };
        }

        if !text.bytes().all(is_symbol_byte) {
            return Err(Diagnostic::error(
                span,
                format!("unexpected token '{text}'"),
            ));
        }
        Ok(Sexp {
            kind: SexpKind::Sym(text.to_string()),
            span,
        })
    }
}

fn is_symbol_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'.' | b'-' | b'_' | b'+' | b'*' | b'/' | b'!' | b'?')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_nested_forms_with_spans() {
        let src = "(term shape.curve :r 2.5) ; trailing";
        let forms = read_all(src).unwrap();
        assert_eq!(forms.len(), 1);
        let items = forms[0].as_list().unwrap();
        assert_eq!(items[0].as_sym(), Some("term"));
        assert_eq!(items[2].kind, SexpKind::Kw("r".into()));
        assert_eq!(items[3].kind, SexpKind::Num(2.5));
        assert_eq!(&src[items[3].span.start..items[3].span.end], "2.5");
    }

    #[test]
    fn string_escapes() {
        let forms = read_all(r#""a\"b\\c\n""#).unwrap();
        assert_eq!(forms[0].kind, SexpKind::Str("a\"b\\c\n".into()));
    }

    #[test]
    fn rejects_bad_tokens() {
        for bad in [
            "(", ")", "\"abc", "1.2.3", "1e999", "(a :)", "#", "\"\\q\"", "-",
        ] {
            let r = read_all(bad);
            if bad == "-" {
                // a lone minus is a symbol
                assert!(r.is_ok());
                continue;
            }
            assert!(r.is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn depth_limit() {
        let deep = "(".repeat(MAX_DEPTH + 5);
        let err = read_all(&deep).unwrap_err();
        assert!(err.message.contains("nesting"));
    }

    #[test]
    fn inf_and_nan_are_symbols() {
        let forms = read_all("inf nan").unwrap();
        assert_eq!(forms[0].as_sym(), Some("inf"));
    }
}
