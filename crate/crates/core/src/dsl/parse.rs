use thiserror::Error;

use super::{Primitive, Program, Stage, INT_LIMIT};

/// Parse failure. `pos` is a byte offset into the source text.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown primitive `{name}` at {pos}")]
    UnknownPrimitive { name: String, pos: usize },
    #[error("`{name}` at {pos} takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        pos: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid argument for `{name}` at {pos}: {message}")]
    InvalidArgument {
        name: String,
        pos: usize,
        message: String,
    },
}

#[derive(Debug, PartialEq)]
enum Token<'a> {
    Name(&'a str),
    Int(i64),
    Pipe,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token<'_>)>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b'|' {
            tokens.push((i, Token::Pipe));
            i += 1;
        } else if c.is_ascii_lowercase() || c == b'_' {
            let start = i;
            while i < bytes.len()
                && (bytes[i].is_ascii_lowercase() || bytes[i].is_ascii_digit() || bytes[i] == b'_')
            {
                i += 1;
            }
            tokens.push((start, Token::Name(&text[start..i])));
        } else if c.is_ascii_digit() || c == b'-' {
            let start = i;
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let lexeme = &text[start..i];
            if lexeme == "-" {
                return Err(ParseError::Syntax {
                    pos: start,
                    message: "expected digits after `-`".into(),
                });
            }
            let value = lexeme
                .parse::<i64>()
                .ok()
                .filter(|v| v.abs() <= INT_LIMIT)
                .ok_or_else(|| ParseError::Syntax {
                    pos: start,
                    message: format!("integer `{lexeme}` out of range"),
                })?;
            tokens.push((start, Token::Int(value)));
        } else {
            let ch = text[i..].chars().next().unwrap_or('?');
            return Err(ParseError::Syntax {
                pos: i,
                message: format!("unexpected character `{ch}`"),
            });
        }
    }
    Ok(tokens)
}

pub(super) fn check_stage(primitive: Primitive, args: &[i64], pos: usize) -> Result<(), ParseError> {
    if args.len() != primitive.arity() {
        return Err(ParseError::Arity {
            name: primitive.name().into(),
            pos,
            expected: primitive.arity(),
            found: args.len(),
        });
    }
    let invalid = |message: &str| ParseError::InvalidArgument {
        name: primitive.name().into(),
        pos,
        message: message.into(),
    };
    match primitive {
        Primitive::Mod if args[0] == 0 => Err(invalid("modulus must be non-zero")),
        Primitive::Repeat if args[0] < 0 => Err(invalid("repeat count must be non-negative")),
        _ => Ok(()),
    }
}

/// Parses program text into a validated [`Program`].
pub fn parse(text: &str) -> Result<Program, ParseError> {
    let tokens = tokenize(text)?;
    let mut stages = Vec::new();
    let mut iter = tokens.into_iter().peekable();
    loop {
        let (pos, name) = match iter.next() {
            Some((pos, Token::Name(name))) => (pos, name),
            Some((pos, tok)) => {
                let found = match tok {
                    Token::Int(_) => "an integer",
                    _ => "`|`",
                };
                return Err(ParseError::Syntax {
                    pos,
                    message: format!("expected a primitive name, found {found}"),
                });
            }
            None => {
                return Err(ParseError::Syntax {
                    pos: text.len(),
                    message: "expected a primitive name".into(),
                })
            }
        };
        let primitive = Primitive::from_name(name).ok_or_else(|| ParseError::UnknownPrimitive {
            name: name.into(),
            pos,
        })?;
        let mut args = Vec::new();
        while let Some((_, Token::Int(v))) = iter.peek() {
            args.push(*v);
            iter.next();
        }
        check_stage(primitive, &args, pos)?;
        stages.push(Stage { primitive, args });
        match iter.next() {
            None => break,
            Some((_, Token::Pipe)) => continue,
            Some((pos, _)) => {
                return Err(ParseError::Syntax {
                    pos,
                    message: "expected `|` between stages".into(),
                })
            }
        }
    }
    Ok(Program { stages })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_stage() {
        let p = parse("reverse").unwrap();
        assert_eq!(p.stages().len(), 1);
        assert_eq!(p.stages()[0].primitive(), Primitive::Reverse);
    }

    #[test]
    fn two_stages_with_args() {
        let p = parse("take 2 | add 1").unwrap();
        let stages = p.stages();
        assert_eq!(stages.len(), 2);
        assert_eq!((stages[0].primitive(), stages[0].args()), (Primitive::Take, &[2][..]));
        assert_eq!((stages[1].primitive(), stages[1].args()), (Primitive::Add, &[1][..]));
    }

    #[test]
    fn missing_argument_is_arity_error() {
        assert_eq!(
            parse("take"),
            Err(ParseError::Arity {
                name: "take".into(),
                pos: 0,
                expected: 1,
                found: 0
            })
        );
        assert!(matches!(parse("reverse 3"), Err(ParseError::Arity { .. })));
    }

    #[test]
    fn unknown_primitive_reports_position() {
        assert_eq!(
            parse("sort | tak 2"),
            Err(ParseError::UnknownPrimitive {
                name: "tak".into(),
                pos: 7
            })
        );
    }

    #[test]
    fn syntax_errors() {
        for bad in ["", "   ", "|", "sort |", "sort || reverse", "2 sort", "sort; reverse", "add -"] {
            assert!(matches!(parse(bad), Err(ParseError::Syntax { .. })), "{bad:?}");
        }
        assert!(matches!(parse("add 99999999999"), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn argument_domains() {
        assert!(matches!(parse("mod 0"), Err(ParseError::InvalidArgument { .. })));
        assert!(matches!(parse("repeat -1"), Err(ParseError::InvalidArgument { .. })));
        assert!(parse("mod -3").is_ok());
        assert!(parse("repeat 0").is_ok());
    }

    #[test]
    fn negative_arguments() {
        let p = parse("add -5|insert 1 -2").unwrap();
        assert_eq!(p.pretty(), "add -5 | insert 1 -2");
    }
}
