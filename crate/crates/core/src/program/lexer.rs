use super::Value;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Int(Value),
    Assign,
    Arrow,
    DotDot,
    Dot,
    Comma,
    Semi,
    Colon,
    At,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Bang,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(v) => format!("integer `{v}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::Assign => ":=",
            Tok::Arrow => "->",
            Tok::DotDot => "..",
            Tok::Dot => ".",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::At => "@",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::Eq => "=",
            Tok::Ne => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::And => "&&",
            Tok::Or => "||",
            Tok::Bang => "!",
            Tok::Ident(_) | Tok::Int(_) | Tok::Eof => "",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub pos: Pos,
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Spanned>, (Pos, String)> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            bump!();
            continue;
        }
        let next = chars.get(i + 1).copied();
        if c == '/' && next == Some('/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c == '/' && next == Some('*') {
            bump!();
            bump!();
            loop {
                if i >= chars.len() {
                    return Err((pos, "unterminated block comment".to_string()));
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    bump!();
                    bump!();
                    break;
                }
                bump!();
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            out.push(Spanned {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                pos,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                bump!();
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<Value>()
                .map_err(|_| (pos, format!("integer literal `{text}` out of range")))?;
            out.push(Spanned {
                tok: Tok::Int(v),
                pos,
            });
            continue;
        }
        let two = next.map(|n| [c, n]);
        let tok2 = match two {
            Some([':', '=']) => Some(Tok::Assign),
            Some(['-', '>']) => Some(Tok::Arrow),
            Some(['.', '.']) => Some(Tok::DotDot),
            Some(['=', '=']) => Some(Tok::Eq),
            Some(['!', '=']) => Some(Tok::Ne),
            Some(['<', '=']) => Some(Tok::Le),
            Some(['>', '=']) => Some(Tok::Ge),
            Some(['&', '&']) => Some(Tok::And),
            Some(['|', '|']) => Some(Tok::Or),
            _ => None,
        };
        if let Some(tok) = tok2 {
            bump!();
            bump!();
            out.push(Spanned { tok, pos });
            continue;
        }
        let tok = match c {
            '.' => Tok::Dot,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            ':' => Tok::Colon,
            '@' => Tok::At,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '%' => Tok::Percent,
            '=' => Tok::Eq,
            '<' => Tok::Lt,
            '>' => Tok::Gt,
            '&' => Tok::And,
            '|' => Tok::Or,
            '!' => Tok::Bang,
            other => return Err((pos, format!("unexpected character `{other}`"))),
        };
        bump!();
        out.push(Spanned { tok, pos });
    }
    out.push(Spanned {
        tok: Tok::Eof,
        pos: Pos { line, col },
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_positions() {
        let toks = tokenize("x := 1; // c\n/* b */ {0..2}").unwrap();
        let kinds: Vec<Tok> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Ident("x".into()),
                Tok::Assign,
                Tok::Int(1),
                Tok::Semi,
                Tok::LBrace,
                Tok::Int(0),
                Tok::DotDot,
                Tok::Int(2),
                Tok::RBrace,
                Tok::Eof
            ]
        );
        assert_eq!(toks[4].pos, Pos { line: 2, col: 9 });
    }

    #[test]
    fn rejects_stray_characters() {
        let err = tokenize("x := #").unwrap_err();
        assert_eq!(err.0, Pos { line: 1, col: 6 });
    }
}
