use super::{ExprError, Node};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Imag(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let ch = bytes[pos];
        if ch.is_ascii_whitespace() {
            pos += 1;
            continue;
        }
        let start = pos;
        if ch.is_ascii_digit() || (ch == b'.' && bytes.get(pos + 1).is_some_and(u8::is_ascii_digit)) {
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'.' {
                pos += 1;
                while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                    pos += 1;
                }
            }
            if pos < bytes.len() && (bytes[pos] == b'e' || bytes[pos] == b'E') {
                let mut look = pos + 1;
                if look < bytes.len() && (bytes[look] == b'+' || bytes[look] == b'-') {
                    look += 1;
                }
                if look < bytes.len() && bytes[look].is_ascii_digit() {
                    pos = look;
                    while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                        pos += 1;
                    }
                }
            }
            let value: f64 = text[start..pos].parse().map_err(|_| ExprError::Syntax {
                offset: start,
                message: format!("malformed number `{}`", &text[start..pos]),
            })?;
            let imag_suffix = pos < bytes.len()
                && bytes[pos] == b'i'
                && !bytes
                    .get(pos + 1)
                    .is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_');
            if imag_suffix {
                pos += 1;
                out.push(Token {
                    tok: Tok::Imag(value),
                    offset: start,
                });
            } else {
                out.push(Token {
                    tok: Tok::Num(value),
                    offset: start,
                });
            }
            continue;
        }
        if ch.is_ascii_alphabetic() || ch == b'_' {
            while pos < bytes.len() && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_') {
                pos += 1;
            }
            out.push(Token {
                tok: Tok::Ident(text[start..pos].to_string()),
                offset: start,
            });
            continue;
        }
        let tok = match ch {
            b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(ch as char),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            _ => {
                let c = text[start..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{c}`"),
                });
            }
        };
        pos += 1;
        out.push(Token { tok, offset: start });
    }
    out.push(Token {
        tok: Tok::End,
        offset: text.len(),
    });
    Ok(out)
}

// Binding powers: (left, right). `^` is right-associative; prefix minus sits
// between `*` and `^`, so `-z^2` is `-(z^2)`.
const PREFIX_MINUS: u8 = 5;

fn infix_power(op: char) -> Option<(u8, u8)> {
    match op {
        '+' | '-' => Some((1, 2)),
        '*' | '/' => Some((3, 4)),
        '^' => Some((7, 6)),
        _ => None,
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(t: &Token) -> ExprError {
        let what = match &t.tok {
            Tok::End => "unexpected end of input".to_string(),
            Tok::Num(x) | Tok::Imag(x) => format!("unexpected number {x}"),
            Tok::Ident(s) => format!("unexpected `{s}`"),
            Tok::Op(c) => format!("unexpected `{c}`"),
            Tok::LParen => "unexpected `(`".to_string(),
            Tok::RParen => "unexpected `)`".to_string(),
        };
        ExprError::Syntax {
            offset: t.offset,
            message: what,
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        let t = self.next();
        if t.tok == Tok::RParen {
            Ok(())
        } else {
            Err(ExprError::Syntax {
                offset: t.offset,
                message: "expected `)`".to_string(),
            })
        }
    }

    fn expr(&mut self, min_bp: u8) -> Result<Node, ExprError> {
        let t = self.next();
        let mut lhs = match t.tok {
            Tok::Num(x) => Node::Real(x),
            Tok::Imag(y) => Node::Imag(y),
            Tok::Op('-') => Node::Neg(Box::new(self.expr(PREFIX_MINUS)?)),
            Tok::LParen => {
                let inner = self.expr(0)?;
                self.expect_rparen()?;
                inner
            }
            Tok::Ident(ref name) => match name.as_str() {
                "z" => Node::Var,
                "j" => Node::Param,
                "i" => Node::Imag(1.0),
                "exp" => {
                    let open = self.next();
                    if open.tok != Tok::LParen {
                        return Err(ExprError::Syntax {
                            offset: open.offset,
                            message: "expected `(` after exp".to_string(),
                        });
                    }
                    let arg = self.expr(0)?;
                    self.expect_rparen()?;
                    Node::Exp(Box::new(arg))
                }
                _ => {
                    return Err(ExprError::UnknownIdentifier {
                        offset: t.offset,
                        name: name.clone(),
                    })
                }
            },
            _ => return Err(Self::unexpected(&t)),
        };

        loop {
            let op = match self.peek().tok {
                Tok::Op(c) => c,
                Tok::End | Tok::RParen => break,
                _ => return Err(Self::unexpected(self.peek())),
            };
            let Some((lbp, rbp)) = infix_power(op) else {
                return Err(Self::unexpected(self.peek()));
            };
            if lbp < min_bp {
                break;
            }
            self.next();
            let exponent_offset = self.peek().offset;
            let rhs = self.expr(rbp)?;
            lhs = match op {
                '+' => Node::Add(Box::new(lhs), Box::new(rhs)),
                '-' => Node::Sub(Box::new(lhs), Box::new(rhs)),
                '*' => Node::Mul(Box::new(lhs), Box::new(rhs)),
                '/' => Node::Div(Box::new(lhs), Box::new(rhs)),
                '^' => {
                    if !rhs.is_integer_valued() {
                        return Err(ExprError::NonIntegerExponent {
                            offset: exponent_offset,
                        });
                    }
                    Node::Pow(Box::new(lhs), Box::new(rhs))
                }
                _ => unreachable!(),
            };
        }
        Ok(lhs)
    }
}

pub(super) fn parse(text: &str) -> Result<Node, ExprError> {
    let mut p = Parser {
        tokens: lex(text)?,
        pos: 0,
    };
    let node = p.expr(0)?;
    let t = p.peek();
    if t.tok != Tok::End {
        return Err(Parser::unexpected(t));
    }
    Ok(node)
}
