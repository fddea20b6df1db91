//! Recursive-descent parser for the expression grammar (see docs/grammar.md).

use super::{BinOp, Expr, Func, Node, NodeKind};
use crate::error::{Error, Result};

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(n) => format!("number {n}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Next token and its starting byte offset.
    fn next(&mut self) -> Result<(Tok, usize)> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::Eof, start));
        }
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_digit() || self.src[end] == b'.')
                {
                    end += 1;
                }
                // exponent part: e / E followed by optional sign and digits
                if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
                    let mut probe = end + 1;
                    if probe < self.src.len()
                        && (self.src[probe] == b'+' || self.src[probe] == b'-')
                    {
                        probe += 1;
                    }
                    if probe < self.src.len() && self.src[probe].is_ascii_digit() {
                        end = probe;
                        while end < self.src.len() && self.src[end].is_ascii_digit() {
                            end += 1;
                        }
                    }
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                let value: f64 = text.parse().map_err(|_| Error::Syntax {
                    offset: start,
                    message: format!("malformed number literal `{text}`"),
                })?;
                self.pos = end;
                Tok::Num(value)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
                {
                    end += 1;
                }
                let name = std::str::from_utf8(&self.src[self.pos..end])
                    .unwrap()
                    .to_string();
                self.pos = end;
                Tok::Ident(name)
            }
            other => {
                return Err(Error::Syntax {
                    offset: start,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok((tok, start))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    current: Tok,
    offset: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self> {
        let mut lexer = Lexer::new(src);
        let (current, offset) = lexer.next()?;
        Ok(Parser {
            lexer,
            current,
            offset,
        })
    }

    fn advance(&mut self) -> Result<()> {
        let (tok, offset) = self.lexer.next()?;
        self.current = tok;
        self.offset = offset;
        Ok(())
    }

    fn expect(&mut self, tok: Tok) -> Result<()> {
        if self.current == tok {
            self.advance()
        } else {
            Err(Error::Syntax {
                offset: self.offset,
                message: format!("expected {}, found {}", tok.describe(), self.current.describe()),
            })
        }
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.current {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            let offset = self.offset;
            self.advance()?;
            let rhs = self.term()?;
            lhs = Node {
                kind: NodeKind::Bin(op, Box::new(lhs), Box::new(rhs)),
                offset,
            };
        }
        Ok(lhs)
    }

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.current {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            let offset = self.offset;
            self.advance()?;
            let rhs = self.unary()?;
            lhs = Node {
                kind: NodeKind::Bin(op, Box::new(lhs), Box::new(rhs)),
                offset,
            };
        }
        Ok(lhs)
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Node> {
        if self.current == Tok::Minus {
            let offset = self.offset;
            self.advance()?;
            let inner = self.unary()?;
            return Ok(Node {
                kind: NodeKind::Neg(Box::new(inner)),
                offset,
            });
        }
        self.power()
    }

    // power := primary ('^' unary)?   (right associative; exponent may carry
    // a unary minus, so -x^2 is -(x^2) while x^-2 works as expected)
    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if self.current == Tok::Caret {
            let offset = self.offset;
            self.advance()?;
            let expo = self.unary()?;
            return Ok(Node {
                kind: NodeKind::Bin(BinOp::Pow, Box::new(base), Box::new(expo)),
                offset,
            });
        }
        Ok(base)
    }

    // primary := number | ident | ident '(' expr ')' | '(' expr ')'
    fn primary(&mut self) -> Result<Node> {
        let offset = self.offset;
        match self.current.clone() {
            Tok::Num(value) => {
                self.advance()?;
                Ok(Node {
                    kind: NodeKind::Const(value),
                    offset,
                })
            }
            Tok::Ident(name) => {
                self.advance()?;
                if self.current == Tok::LParen {
                    let func = Func::from_name(&name).ok_or(Error::UnknownFunction {
                        name: name.clone(),
                        offset,
                    })?;
                    self.advance()?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Ok(Node {
                        kind: NodeKind::Call(func, Box::new(arg)),
                        offset,
                    })
                } else {
                    Ok(Node {
                        kind: NodeKind::Var(name),
                        offset,
                    })
                }
            }
            Tok::LParen => {
                self.advance()?;
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            other => Err(Error::Syntax {
                offset,
                message: format!(
                    "expected a number, identifier or `(`, found {}",
                    other.describe()
                ),
            }),
        }
    }
}

pub(super) fn parse(source: &str) -> Result<Expr> {
    if source.trim().is_empty() {
        return Err(Error::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let mut parser = Parser::new(source)?;
    let root = parser.expr()?;
    if parser.current != Tok::Eof {
        return Err(Error::Syntax {
            offset: parser.offset,
            message: format!("unexpected trailing {}", parser.current.describe()),
        });
    }
    Ok(Expr { root })
}
