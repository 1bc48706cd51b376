use super::{ParseDiagnostic, SourceSpan};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Number(u64),
    Str(String),
    LBrace,
    RBrace,
    Comma,
    Colon,
    Semi,
    Dot,
    At,
    /// `->`
    Arrow,
    /// `~>`
    Trigger,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Str(_) => "string".to_string(),
            Tok::LBrace => "`{`".to_string(),
            Tok::RBrace => "`}`".to_string(),
            Tok::Comma => "`,`".to_string(),
            Tok::Colon => "`:`".to_string(),
            Tok::Semi => "`;`".to_string(),
            Tok::Dot => "`.`".to_string(),
            Tok::At => "`@`".to_string(),
            Tok::Arrow => "`->`".to_string(),
            Tok::Trigger => "`~>`".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

/// Splits `text` into tokens. Lexical errors are reported and the offending
/// characters skipped, so the token stream is always usable.
pub(crate) fn lex(file: &str, text: &str) -> (Vec<Token>, Vec<ParseDiagnostic>) {
    let mut tokens = Vec::new();
    let mut diags = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;

    let span = |line: usize, column: usize, length: usize| SourceSpan {
        file: file.to_string(),
        line,
        column,
        length,
    };

    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                    col += 1;
                }
            }
            '{' | '}' | ',' | ':' | ';' | '.' | '@' => {
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    ',' => Tok::Comma,
                    ':' => Tok::Colon,
                    ';' => Tok::Semi,
                    '.' => Tok::Dot,
                    _ => Tok::At,
                };
                tokens.push(Token {
                    tok,
                    span: span(line, col, 1),
                });
                i += 1;
                col += 1;
            }
            '-' | '~' if chars.get(i + 1) == Some(&'>') => {
                let tok = if c == '-' { Tok::Arrow } else { Tok::Trigger };
                tokens.push(Token {
                    tok,
                    span: span(line, col, 2),
                });
                i += 2;
                col += 2;
            }
            '-' if chars.get(i + 1).is_some_and(char::is_ascii_digit) => {
                let mut len = 1;
                while chars.get(i + len).is_some_and(char::is_ascii_digit) {
                    len += 1;
                }
                diags.push(ParseDiagnostic::error(
                    "P-NUMBER",
                    "negative numbers are not allowed",
                    span(line, col, len),
                ));
                i += len;
                col += len;
            }
            '"' => {
                let mut value = String::new();
                let mut j = i + 1;
                let mut ok = false;
                let mut width = 1;
                while j < chars.len() {
                    let d = chars[j];
                    if d == '\n' {
                        break;
                    }
                    width += 1;
                    if d == '"' {
                        ok = true;
                        j += 1;
                        break;
                    }
                    if d == '\\' {
                        let escaped = chars.get(j + 1).copied();
                        let decoded = match escaped {
                            Some('n') => Some('\n'),
                            Some('t') => Some('\t'),
                            Some('"') => Some('"'),
                            Some('\\') => Some('\\'),
                            _ => None,
                        };
                        match decoded {
                            Some(d) => {
                                value.push(d);
                                j += 2;
                                width += 1;
                            }
                            None => {
                                diags.push(ParseDiagnostic::error(
                                    "P-STRING",
                                    "unknown escape in string",
                                    span(line, col + width - 1, 2),
                                ));
                                j += 1;
                            }
                        }
                        continue;
                    }
                    value.push(d);
                    j += 1;
                }
                if ok {
                    tokens.push(Token {
                        tok: Tok::Str(value),
                        span: span(start_line, start_col, width),
                    });
                } else {
                    diags.push(ParseDiagnostic::error(
                        "P-STRING",
                        "unterminated string",
                        span(start_line, start_col, width),
                    ));
                }
                col += j - i;
                i = j;
            }
            c if c.is_ascii_digit() => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let digits: String = chars[i..j].iter().collect();
                match digits.parse::<u64>() {
                    Ok(n) => tokens.push(Token {
                        tok: Tok::Number(n),
                        span: span(line, col, j - i),
                    }),
                    Err(_) => diags.push(ParseDiagnostic::error(
                        "P-NUMBER",
                        "number is too large",
                        span(line, col, j - i),
                    )),
                }
                col += j - i;
                i = j;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                tokens.push(Token {
                    tok: Tok::Ident(chars[i..j].iter().collect()),
                    span: span(line, col, j - i),
                });
                col += j - i;
                i = j;
            }
            other => {
                diags.push(ParseDiagnostic::error(
                    "P-TOKEN",
                    format!("unexpected character {other:?}"),
                    span(line, col, 1),
                ));
                i += 1;
                col += 1;
            }
        }
    }
    (tokens, diags)
}
