//! Just enough of an s-expression reader to parse solver models.

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed solver output: {0}")]
pub struct SexpError(pub String);

pub fn parse_all(text: &str) -> Result<Vec<Sexp>, SexpError> {
    let chars: Vec<char> = text.chars().collect();
    let mut pos = 0;
    let mut out = Vec::new();
    loop {
        skip_ws(&chars, &mut pos);
        if pos >= chars.len() {
            return Ok(out);
        }
        out.push(parse_one(&chars, &mut pos)?);
    }
}

fn skip_ws(chars: &[char], pos: &mut usize) {
    while *pos < chars.len() && chars[*pos].is_whitespace() {
        *pos += 1;
    }
}

fn parse_one(chars: &[char], pos: &mut usize) -> Result<Sexp, SexpError> {
    skip_ws(chars, pos);
    match chars.get(*pos) {
        None => Err(SexpError("unexpected end of input".into())),
        Some('(') => {
            *pos += 1;
            let mut items = Vec::new();
            loop {
                skip_ws(chars, pos);
                match chars.get(*pos) {
                    None => return Err(SexpError("unclosed list".into())),
                    Some(')') => {
                        *pos += 1;
                        return Ok(Sexp::List(items));
                    }
                    _ => items.push(parse_one(chars, pos)?),
                }
            }
        }
        Some(')') => Err(SexpError("unexpected `)`".into())),
        Some('"') => {
            let start = *pos;
            *pos += 1;
            while *pos < chars.len() {
                if chars[*pos] == '"' {
                    if chars.get(*pos + 1) == Some(&'"') {
                        *pos += 2;
                        continue;
                    }
                    *pos += 1;
                    return Ok(Sexp::Atom(chars[start..*pos].iter().collect()));
                }
                *pos += 1;
            }
            Err(SexpError("unterminated string".into()))
        }
        Some(_) => {
            let start = *pos;
            while *pos < chars.len() && !chars[*pos].is_whitespace() && !"()".contains(chars[*pos]) {
                *pos += 1;
            }
            Ok(Sexp::Atom(chars[start..*pos].iter().collect()))
        }
    }
}

/// Parses a bitvector literal (`#x..`, `#b..` or `(_ bvN w)`) into its value
/// and width.
pub fn bitvector(s: &Sexp) -> Option<(u64, u32)> {
    match s {
        Sexp::Atom(a) => {
            if let Some(hex) = a.strip_prefix("#x") {
                Some((u64::from_str_radix(hex, 16).ok()?, 4 * hex.len() as u32))
            } else if let Some(bin) = a.strip_prefix("#b") {
                Some((u64::from_str_radix(bin, 2).ok()?, bin.len() as u32))
            } else {
                None
            }
        }
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(u), Sexp::Atom(v), Sexp::Atom(w)] if u == "_" => {
                let value = v.strip_prefix("bv")?.parse().ok()?;
                Some((value, w.parse().ok()?))
            }
            _ => None,
        },
    }
}

/// Parses a Boolean literal.
pub fn boolean(s: &Sexp) -> Option<bool> {
    match s {
        Sexp::Atom(a) if a == "true" => Some(true),
        Sexp::Atom(a) if a == "false" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_pairs() {
        let parsed = parse_all("((x #x03) (y #b101) (z (_ bv7 32)) (b true))").unwrap();
        let Sexp::List(pairs) = &parsed[0] else { panic!() };
        let get = |i: usize| match &pairs[i] {
            Sexp::List(kv) => kv[1].clone(),
            _ => panic!(),
        };
        assert_eq!(bitvector(&get(0)), Some((3, 8)));
        assert_eq!(bitvector(&get(1)), Some((5, 3)));
        assert_eq!(bitvector(&get(2)), Some((7, 32)));
        assert_eq!(boolean(&get(3)), Some(true));
    }

    #[test]
    fn strings_and_errors() {
        let parsed = parse_all("(error \"line 1: a \"\"quoted\"\" word\")").unwrap();
        assert_eq!(parsed.len(), 1);
        assert!(parse_all("(a (b)").is_err());
    }
}
