//! Infix parser for address expressions.
//!
//! Grammar (left-associative, usual precedence):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/' | '//' | '%') unary)*
//! unary   := '-' unary | atom
//! atom    := integer | identifier | '(' expr ')'
//! ```
//!
//! `/` and `//` both denote floor division. The right operand of `/` and `%`
//! must be a positive integer literal. Identifiers are the six coordinates
//! (`tidx` .. `bidz`), block dimensions `BX BY BZ`, grid dimensions
//! `GX GY GZ`, or one of the supplied field names.

use super::{AddressExpr, Axis, Coord, Divisor, ExprError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(u64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'0'..=b'9' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let v = text[start..i].parse::<u64>().map_err(|_| ExprError::Syntax {
                    pos: start,
                    msg: "integer literal out of range".into(),
                })?;
                out.push((start, Tok::Int(v)));
                continue;
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_string())));
                continue;
            }
            b'+' => out.push((start, Tok::Plus)),
            b'-' => out.push((start, Tok::Minus)),
            b'*' => out.push((start, Tok::Star)),
            b'/' => {
                if bytes.get(i + 1) == Some(&b'/') {
                    i += 1;
                }
                out.push((start, Tok::Slash));
            }
            b'%' => out.push((start, Tok::Percent)),
            b'(' => out.push((start, Tok::LParen)),
            b')' => out.push((start, Tok::RParen)),
            _ => {
                return Err(ExprError::Syntax {
                    pos: start,
                    msg: format!("unexpected character `{}`", text[start..].chars().next().unwrap()),
                })
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser<'a, S: AsRef<str>> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    fields: &'a [S],
}

impl<S: AsRef<str>> Parser<'_, S> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn expr(&mut self) -> Result<AddressExpr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = lhs + self.term()?;
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = lhs - self.term()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<AddressExpr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    lhs = lhs * self.unary()?;
                }
                Some(Tok::Slash) | Some(Tok::Percent) => {
                    let is_div = matches!(self.peek(), Some(Tok::Slash));
                    self.pos += 1;
                    let d = Divisor::new(self.divisor()?)?;
                    lhs = if is_div {
                        AddressExpr::FloorDiv(Box::new(lhs), d)
                    } else {
                        AddressExpr::Mod(Box::new(lhs), d)
                    };
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn divisor(&mut self) -> Result<i64, ExprError> {
        let at = self.offset();
        match self.unary()? {
            AddressExpr::Const(v) => Ok(v),
            _ => Err(ExprError::Syntax {
                pos: at,
                msg: "divisor must be an integer literal".into(),
            }),
        }
    }

    fn unary(&mut self) -> Result<AddressExpr, ExprError> {
        if let Some(Tok::Minus) = self.peek() {
            let at = self.offset();
            self.pos += 1;
            if let Some(Tok::Int(v)) = self.peek().cloned() {
                self.pos += 1;
                let neg = i64::try_from(v as i128 * -1).map_err(|_| ExprError::Syntax {
                    pos: at,
                    msg: "integer literal out of range".into(),
                })?;
                return Ok(AddressExpr::Const(neg));
            }
            let inner = self.unary()?;
            return Ok(AddressExpr::Const(0) - inner);
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<AddressExpr, ExprError> {
        let at = self.offset();
        let tok = self.peek().cloned().ok_or_else(|| ExprError::Syntax {
            pos: at,
            msg: "unexpected end of expression".into(),
        })?;
        self.pos += 1;
        match tok {
            Tok::Int(v) => i64::try_from(v)
                .map(AddressExpr::Const)
                .map_err(|_| ExprError::Syntax {
                    pos: at,
                    msg: "integer literal out of range".into(),
                }),
            Tok::Ident(name) => self.identifier(&name, at),
            Tok::LParen => {
                let e = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(e)
                    }
                    _ => Err(ExprError::Syntax {
                        pos: self.offset(),
                        msg: "expected `)`".into(),
                    }),
                }
            }
            other => Err(ExprError::Syntax {
                pos: at,
                msg: format!("unexpected token {other:?}"),
            }),
        }
    }

    fn identifier(&self, name: &str, at: usize) -> Result<AddressExpr, ExprError> {
        if let Some(c) = Coord::from_name(name) {
            return Ok(AddressExpr::Coord(c));
        }
        let axis = |s: &str| match s {
            "X" => Some(Axis::X),
            "Y" => Some(Axis::Y),
            "Z" => Some(Axis::Z),
            _ => None,
        };
        if name.len() == 2 {
            if let Some(a) = axis(&name[1..]) {
                match &name[..1] {
                    "B" => return Ok(AddressExpr::BlockDim(a)),
                    "G" => return Ok(AddressExpr::GridDim(a)),
                    _ => {}
                }
            }
        }
        if self.fields.iter().any(|f| f.as_ref() == name) {
            return Ok(AddressExpr::Base(name.to_string()));
        }
        Err(ExprError::UnknownIdentifier {
            pos: at,
            name: name.to_string(),
        })
    }
}

/// True for identifiers the grammar reserves (coordinates and launch dims).
pub fn is_reserved(name: &str) -> bool {
    Coord::from_name(name).is_some()
        || matches!(name, "BX" | "BY" | "BZ" | "GX" | "GY" | "GZ")
}

/// Parses `text` into an expression. `fields` lists the identifiers that
/// resolve to field base addresses.
pub fn parse<S: AsRef<str>>(text: &str, fields: &[S]) -> Result<AddressExpr, ExprError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
        fields,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(ExprError::Syntax {
            pos: p.offset(),
            msg: "trailing input".into(),
        });
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{BaseMap, ThreadCoord};
    use crate::kernel::LaunchConfig;

    #[test]
    fn parses_base_plus_scaled_index() {
        let e = parse("A + (tidx + bidx*BX)*8", &["A"]).unwrap();
        let expected = AddressExpr::base("A")
            + (AddressExpr::coord(Coord::TidX)
                + AddressExpr::coord(Coord::BidX) * AddressExpr::block_dim(Axis::X))
                * 8;
        assert_eq!(e, expected);
        assert_eq!(e.base_refs(), vec!["A"]);
    }

    #[test]
    fn zero_divisor_is_rejected() {
        assert_eq!(parse("tidx // 0", &[] as &[&str]), Err(ExprError::InvalidDivisor(0)));
        assert_eq!(parse("tidx % -2", &[] as &[&str]), Err(ExprError::InvalidDivisor(-2)));
    }

    #[test]
    fn phase_field_offset_evaluates_to_base_plus_eight() {
        let e = parse("phi + ((tidx+1) + tidy*642)*8", &["phi"]).unwrap();
        let launch = LaunchConfig::new([4, 4, 1], [1, 1, 1], 1);
        let bases: BaseMap = [("phi".to_string(), 4096)].into_iter().collect();
        assert_eq!(e.eval_scalar(&ThreadCoord::default(), &launch, &bases).unwrap(), 4096 + 8);
    }

    #[test]
    fn errors_carry_positions() {
        match parse("tidx + * 3", &[] as &[&str]) {
            Err(ExprError::Syntax { pos, .. }) => assert_eq!(pos, 7),
            other => panic!("unexpected {other:?}"),
        }
        match parse("tidx + foo", &["bar"]) {
            Err(ExprError::UnknownIdentifier { pos, name }) => {
                assert_eq!(pos, 7);
                assert_eq!(name, "foo");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("(tidx + 1", &[] as &[&str]), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("tidx $ 1", &[] as &[&str]), Err(ExprError::Syntax { pos: 5, .. })));
        assert!(matches!(parse("tidx 1", &[] as &[&str]), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("tidx / tidy", &[] as &[&str]), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn floor_semantics_for_negative_operands() {
        let e = parse("(tidx - 5) / 4", &[] as &[&str]).unwrap();
        let launch = LaunchConfig::new([8, 1, 1], [1, 1, 1], 1);
        let v = e.eval_scalar(&ThreadCoord::default(), &launch, &BaseMap::new()).unwrap();
        assert_eq!(v, -2);
        let m = parse("(tidx - 5) % 4", &[] as &[&str]).unwrap();
        assert_eq!(m.eval_scalar(&ThreadCoord::default(), &launch, &BaseMap::new()).unwrap(), 3);
    }

    #[test]
    fn negative_literals_and_unary_minus() {
        assert_eq!(parse("-3", &[] as &[&str]).unwrap(), AddressExpr::Const(-3));
        assert_eq!(
            parse("-tidx", &[] as &[&str]).unwrap(),
            AddressExpr::Const(0) - AddressExpr::coord(Coord::TidX)
        );
        assert_eq!(
            parse("-9223372036854775808", &[] as &[&str]).unwrap(),
            AddressExpr::Const(i64::MIN)
        );
    }
}
