use crate::error::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    /// Bare or double-quoted identifier. Keywords are identifiers too; the
    /// parser matches them case-insensitively.
    Ident { text: String, quoted: bool },
    Number(String),
    Str(String),
    /// `12:03` or `14:55:50`
    Clock(String),
    LParen,
    RParen,
    Comma,
    Semi,
    Dot,
    Star,
    Plus,
    Minus,
    Slash,
    Percent,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Concat,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
    /// Byte offset of the token start in the source.
    pub offset: usize,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident { text, .. } => format!("'{text}'"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Clock(c) => format!("time {c}"),
            Tok::Eof => "end of input".to_string(),
            other => format!("'{}'", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Dot => ".",
            Tok::Star => "*",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::Eq => "=",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::LtEq => "<=",
            Tok::Gt => ">",
            Tok::GtEq => ">=",
            Tok::Concat => "||",
            _ => "?",
        }
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;

    let err = |line, col, message: String| SyntaxError { line, col, message };

    while i < chars.len() {
        let (offset, c) = chars[i];
        let (tl, tc) = (line, col);
        let advance = |n: usize, i: &mut usize, line: &mut usize, col: &mut usize| {
            for _ in 0..n {
                if chars[*i].1 == '\n' {
                    *line += 1;
                    *col = 1;
                } else {
                    *col += 1;
                }
                *i += 1;
            }
        };
        let peek = |i: usize, k: usize| chars.get(i + k).map(|p| p.1);

        if c.is_whitespace() {
            advance(1, &mut i, &mut line, &mut col);
            continue;
        }
        if c == '-' && peek(i, 1) == Some('-') {
            while i < chars.len() && chars[i].1 != '\n' {
                advance(1, &mut i, &mut line, &mut col);
            }
            continue;
        }
        if c == '/' && peek(i, 1) == Some('*') {
            advance(2, &mut i, &mut line, &mut col);
            loop {
                if i >= chars.len() {
                    return Err(err(tl, tc, "unterminated comment".into()));
                }
                if chars[i].1 == '*' && peek(i, 1) == Some('/') {
                    advance(2, &mut i, &mut line, &mut col);
                    break;
                }
                advance(1, &mut i, &mut line, &mut col);
            }
            continue;
        }

        let tok = if c.is_ascii_digit() {
            let start = i;
            let mut j = i;
            while j < chars.len() && chars[j].1.is_ascii_digit() {
                j += 1;
            }
            // clock label: 12:03 or 12:03:45
            let is_digit = |k: usize| chars.get(k).is_some_and(|p| p.1.is_ascii_digit());
            if chars.get(j).map(|p| p.1) == Some(':') && is_digit(j + 1) && is_digit(j + 2) {
                let mut k = j + 3;
                if chars.get(k).map(|p| p.1) == Some(':') && is_digit(k + 1) && is_digit(k + 2) {
                    k += 3;
                }
                let text: String = chars[start..k].iter().map(|p| p.1).collect();
                advance(k - i, &mut i, &mut line, &mut col);
                Tok::Clock(text)
            } else {
                if chars.get(j).map(|p| p.1) == Some('.') && is_digit(j + 1) {
                    j += 1;
                    while j < chars.len() && chars[j].1.is_ascii_digit() {
                        j += 1;
                    }
                }
                let text: String = chars[start..j].iter().map(|p| p.1).collect();
                advance(j - i, &mut i, &mut line, &mut col);
                Tok::Number(text)
            }
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            let mut j = i;
            while j < chars.len()
                && (chars[j].1.is_alphanumeric() || chars[j].1 == '_' || chars[j].1 == '$')
            {
                j += 1;
            }
            let text: String = chars[start..j].iter().map(|p| p.1).collect();
            advance(j - i, &mut i, &mut line, &mut col);
            Tok::Ident { text, quoted: false }
        } else if c == '\'' {
            advance(1, &mut i, &mut line, &mut col);
            let mut s = String::new();
            loop {
                match chars.get(i).map(|p| p.1) {
                    None => return Err(err(tl, tc, "unterminated string literal".into())),
                    Some('\'') if peek(i, 1) == Some('\'') => {
                        s.push('\'');
                        advance(2, &mut i, &mut line, &mut col);
                    }
                    Some('\'') => {
                        advance(1, &mut i, &mut line, &mut col);
                        break;
                    }
                    Some(ch) => {
                        s.push(ch);
                        advance(1, &mut i, &mut line, &mut col);
                    }
                }
            }
            Tok::Str(s)
        } else if c == '"' {
            advance(1, &mut i, &mut line, &mut col);
            let mut s = String::new();
            loop {
                match chars.get(i).map(|p| p.1) {
                    None => return Err(err(tl, tc, "unterminated quoted identifier".into())),
                    Some('"') => {
                        advance(1, &mut i, &mut line, &mut col);
                        break;
                    }
                    Some(ch) => {
                        s.push(ch);
                        advance(1, &mut i, &mut line, &mut col);
                    }
                }
            }
            Tok::Ident { text: s, quoted: true }
        } else {
            let two = (c, peek(i, 1));
            let (t, n) = match two {
                ('!', Some('=')) => (Tok::NotEq, 2),
                ('<', Some('>')) => (Tok::NotEq, 2),
                ('<', Some('=')) => (Tok::LtEq, 2),
                ('>', Some('=')) => (Tok::GtEq, 2),
                ('|', Some('|')) => (Tok::Concat, 2),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                (',', _) => (Tok::Comma, 1),
                (';', _) => (Tok::Semi, 1),
                ('.', _) => (Tok::Dot, 1),
                ('*', _) => (Tok::Star, 1),
                ('+', _) => (Tok::Plus, 1),
                ('-', _) => (Tok::Minus, 1),
                ('/', _) => (Tok::Slash, 1),
                ('%', _) => (Tok::Percent, 1),
                ('=', _) => (Tok::Eq, 1),
                ('<', _) => (Tok::Lt, 1),
                ('>', _) => (Tok::Gt, 1),
                _ => return Err(err(tl, tc, format!("unexpected character '{c}'"))),
            };
            advance(n, &mut i, &mut line, &mut col);
            t
        };
        out.push(Token { tok, line: tl, col: tc, offset });
    }
    out.push(Token { tok: Tok::Eof, line, col, offset: src.len() });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn clock_labels_and_numbers() {
        assert_eq!(
            toks("CHANGES(T, 12:00, 'DELTA') 30.00 14:55:50"),
            vec![
                Tok::Ident { text: "CHANGES".into(), quoted: false },
                Tok::LParen,
                Tok::Ident { text: "T".into(), quoted: false },
                Tok::Comma,
                Tok::Clock("12:00".into()),
                Tok::Comma,
                Tok::Str("DELTA".into()),
                Tok::RParen,
                Tok::Number("30.00".into()),
                Tok::Clock("14:55:50".into()),
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn dollar_identifiers_and_comments() {
        let t = toks("RowID$ -- trailing\n delta$ /* block */ != 'it''s'");
        assert_eq!(t[0], Tok::Ident { text: "RowID$".into(), quoted: false });
        assert_eq!(t[1], Tok::Ident { text: "delta$".into(), quoted: false });
        assert_eq!(t[2], Tok::NotEq);
        assert_eq!(t[3], Tok::Str("it's".into()));
    }

    #[test]
    fn positions_are_one_based() {
        let t = tokenize("SELECT\n  x").unwrap();
        assert_eq!((t[1].line, t[1].col), (2, 3));
        let e = tokenize("SELECT 'abc").unwrap_err();
        assert_eq!((e.line, e.col), (1, 8));
    }
}
