// Infix parser for bound expressions: + - * / ^, parentheses, integer
// literals, symbols and the functions sqrt/floor/min/max.

use thiserror::Error;

use super::{frac, rat, BoundExpr, Rational};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("unexpected character `{0}` at {1}")]
    BadChar(char, usize),
    #[error("unexpected end of input")]
    Eof,
    #[error("unexpected token `{0}`")]
    Unexpected(String),
    #[error("exponent must be a rational constant")]
    Exponent,
    #[error("unknown function `{0}`")]
    Function(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(i64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<Tok>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            out.push(Tok::Num(s.parse().map_err(|_| ParseError::BadChar(c, start))?));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(ParseError::BadChar(c, i));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<Tok, ParseError> {
        let t = self.toks.get(self.pos).cloned().ok_or(ParseError::Eof)?;
        self.pos += 1;
        Ok(t)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        match self.next()? {
            Tok::Op(x) if x == c => Ok(()),
            t => Err(ParseError::Unexpected(format!("{t:?}"))),
        }
    }

    fn sum(&mut self) -> Result<BoundExpr, ParseError> {
        let mut terms = vec![self.product()?];
        loop {
            if self.eat('+') {
                terms.push(self.product()?);
            } else if self.eat('-') {
                terms.push(self.product()?.neg());
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { BoundExpr::Sum(terms) })
    }

    fn product(&mut self) -> Result<BoundExpr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*') {
                acc = acc.mul(self.unary()?);
            } else if self.eat('/') {
                acc = acc.div(self.unary()?);
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<BoundExpr, ParseError> {
        if self.eat('-') {
            return Ok(self.unary()?.neg());
        }
        let base = self.atom()?;
        if self.eat('^') {
            let e = self.exponent()?;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Rational, ParseError> {
        let neg = self.eat('-');
        let e = match self.next()? {
            Tok::Num(n) => rat(n),
            Tok::Op('(') => {
                let inner = self.sum()?;
                self.expect(')')?;
                inner.simplify().as_const().cloned().ok_or(ParseError::Exponent)?
            }
            _ => return Err(ParseError::Exponent),
        };
        Ok(if neg { -e } else { e })
    }

    fn args(&mut self) -> Result<Vec<BoundExpr>, ParseError> {
        self.expect('(')?;
        let mut v = vec![self.sum()?];
        while self.eat(',') {
            v.push(self.sum()?);
        }
        self.expect(')')?;
        Ok(v)
    }

    fn atom(&mut self) -> Result<BoundExpr, ParseError> {
        match self.next()? {
            Tok::Num(n) => Ok(BoundExpr::int(n)),
            Tok::Op('(') => {
                let e = self.sum()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) if self.peek() == Some(&Tok::Op('(')) => {
                let mut a = self.args()?;
                match (name.as_str(), a.len()) {
                    ("sqrt", 1) => Ok(a.pop().unwrap().pow(frac(1, 2))),
                    ("floor", 1) => Ok(BoundExpr::Floor(Box::new(a.pop().unwrap()))),
                    ("min", _) => Ok(BoundExpr::Min(a)),
                    ("max", _) => Ok(BoundExpr::Max(a)),
                    _ => Err(ParseError::Function(name)),
                }
            }
            Tok::Ident(name) => Ok(BoundExpr::Param(name)),
            t => Err(ParseError::Unexpected(format!("{t:?}"))),
        }
    }
}

pub fn parse(src: &str) -> Result<BoundExpr, ParseError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let e = p.sum()?;
    if let Some(t) = p.peek() {
        return Err(ParseError::Unexpected(format!("{t:?}")));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Binding;
    use num_traits::One;

    #[test]
    fn precedence_and_associativity() {
        let b = Binding::from_pairs(&[("a", 7), ("b", 3)]);
        let ev = |s: &str| parse(s).unwrap().evaluate(&b).unwrap();
        assert_eq!(ev("a - b - 1"), rat(3));
        assert_eq!(ev("a / b / 7"), frac(1, 3));
        assert_eq!(ev("2*a^2"), rat(98));
        assert_eq!(ev("-b^2"), rat(-9));
        assert_eq!(ev("a^(-1)"), frac(1, 7));
        assert_eq!(ev("sqrt(a*a)"), rat(7));
        assert!(ev("1").is_one());
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse("a +").is_err());
        assert!(parse("a $ b").is_err());
        assert!(parse("a^b").is_err());
        assert!(parse("foo(a)").is_err());
        assert!(parse("(a").is_err());
    }
}
