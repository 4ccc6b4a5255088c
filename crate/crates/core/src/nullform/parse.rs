//! String grammar for basis combinations, e.g. `3*g + 2*E01 - 1*E23`.
//!
//! ```text
//! form  := sign? term (sign term)*
//! term  := (number '*'?)? atom
//! atom  := 'g' | 'E' digit digit | 'F' digit digit | 'G' digit
//! ```

use super::{Basis, FormTerm, NullFormError};
use crate::scalar::ScalarField;

pub(super) fn parse_terms(src: &str) -> Result<Vec<FormTerm>, NullFormError> {
    let chars: Vec<char> = src.chars().collect();
    let mut pos = 0usize;
    let mut terms = Vec::new();
    let err = |pos: usize, msg: &str| NullFormError::Parse {
        pos,
        msg: msg.to_string(),
    };
    let skip_ws = |pos: &mut usize| {
        while *pos < chars.len() && chars[*pos].is_whitespace() {
            *pos += 1;
        }
    };
    skip_ws(&mut pos);
    if pos == chars.len() {
        return Err(err(0, "empty form"));
    }
    let mut first = true;
    while pos < chars.len() {
        skip_ws(&mut pos);
        let mut sign = 1.0;
        if pos < chars.len() && (chars[pos] == '+' || chars[pos] == '-') {
            sign = if chars[pos] == '-' { -1.0 } else { 1.0 };
            pos += 1;
            skip_ws(&mut pos);
        } else if !first {
            return Err(err(pos, "expected '+' or '-'"));
        }
        first = false;
        // Optional numeric coefficient.
        // Exponents use lowercase 'e' so that `2E01` stays unambiguous.
        let start = pos;
        while pos < chars.len() && (chars[pos].is_ascii_digit() || chars[pos] == '.') {
            pos += 1;
        }
        if pos > start && pos < chars.len() && chars[pos] == 'e' {
            let mut q = pos + 1;
            if q < chars.len() && (chars[q] == '+' || chars[q] == '-') {
                q += 1;
            }
            if q < chars.len() && chars[q].is_ascii_digit() {
                while q < chars.len() && chars[q].is_ascii_digit() {
                    q += 1;
                }
                pos = q;
            }
        }
        let coeff = if pos > start {
            let text: String = chars[start..pos].iter().collect();
            let v: f64 = text
                .parse()
                .map_err(|_| err(start, &format!("bad number '{text}'")))?;
            skip_ws(&mut pos);
            if pos < chars.len() && chars[pos] == '*' {
                pos += 1;
                skip_ws(&mut pos);
            }
            v
        } else {
            1.0
        };
        if pos >= chars.len() {
            return Err(err(pos, "expected a basis element"));
        }
        let digit = |p: usize| -> Result<usize, NullFormError> {
            chars
                .get(p)
                .and_then(|c| c.to_digit(10))
                .map(|d| d as usize)
                .ok_or_else(|| err(p, "expected an index digit"))
        };
        let basis = match chars[pos] {
            'g' => {
                pos += 1;
                Basis::Metric
            }
            'E' | 'F' => {
                let (a, b) = (digit(pos + 1)?, digit(pos + 2)?);
                if a == b {
                    return Err(err(pos, "E and F need two distinct indices"));
                }
                let kind = chars[pos];
                pos += 3;
                if kind == 'E' {
                    Basis::E { a, b }
                } else {
                    Basis::F { a, b }
                }
            }
            'G' => {
                let a = digit(pos + 1)?;
                pos += 2;
                Basis::G { a }
            }
            c => return Err(err(pos, &format!("unexpected '{c}'"))),
        };
        terms.push(FormTerm {
            coeff: ScalarField::constant(sign * coeff),
            basis,
        });
        skip_ws(&mut pos);
    }
    Ok(terms)
}
