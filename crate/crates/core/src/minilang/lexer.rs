// SPDX-License-Identifier: Apache-2.0

use super::ast::Pos;
use super::ParseError;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    /// Unsigned literal; the sign is folded in by the parser.
    Int(u64),
    Punct(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

const PUNCTS: &[&str] = &[
    "->", "==", "!=", "<=", ">=", "&&", "||", "{", "}", "(", ")", "[", "]", ";", ",", ".", ":", "=", "<", ">", "+",
    "-", "*", "/", "%", "!",
];

pub(crate) fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    for (lineno, line) in src.lines().enumerate() {
        let line_no = lineno as u32 + 1;
        let bytes = line.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            let pos = Pos::new(line_no, i as u32 + 1);
            if c == b' ' || c == b'\t' || c == b'\r' {
                i += 1;
                continue;
            }
            if line[i..].starts_with("//") {
                break;
            }
            if c.is_ascii_alphabetic() || c == b'_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(line[start..i].to_string()),
                    pos,
                });
                continue;
            }
            if c.is_ascii_digit() {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let v: u64 = line[start..i].parse().map_err(|_| ParseError::Syntax {
                    pos,
                    msg: format!("integer literal `{}` out of range", &line[start..i]),
                })?;
                out.push(Token { tok: Tok::Int(v), pos });
                continue;
            }
            match PUNCTS.iter().find(|p| line[i..].starts_with(**p)) {
                Some(p) => {
                    out.push(Token {
                        tok: Tok::Punct(p),
                        pos,
                    });
                    i += p.len();
                }
                None => {
                    return Err(ParseError::Syntax {
                        pos,
                        msg: format!("unexpected character `{}`", c as char),
                    })
                }
            }
        }
    }
    let eof_line = src.lines().count() as u32 + 1;
    out.push(Token {
        tok: Tok::Eof,
        pos: Pos::new(eof_line, 1),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_operators_and_comments() {
        let toks = lex("a->b == 3 // trailing\n!x").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Ident("a".into()),
                Tok::Punct("->"),
                Tok::Ident("b".into()),
                Tok::Punct("=="),
                Tok::Int(3),
                Tok::Punct("!"),
                Tok::Ident("x".into()),
                Tok::Eof
            ]
        );
        assert_eq!(toks[5].pos, Pos::new(2, 1));
    }

    #[test]
    fn rejects_stray_characters() {
        let err = lex("x = 1 @ 2;").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { pos, .. } if pos == Pos::new(1, 7)));
    }
}
