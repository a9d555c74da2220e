use super::LogicError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(u32),
    LParen,
    RParen,
    Comma,
    Dot,
    Amp,
    Bar,
    Bang,
    Eq,
    Ne,
    Ge,
    Caret,
    Semi,
    Rule,
    At,
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl std::fmt::Display for Pos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

pub fn tokenize(text: &str, comment: char) -> Result<Vec<(Tok, Pos)>, LogicError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        let mut adv = 1;
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
        } else if c == comment {
            while i + adv < chars.len() && chars[i + adv] != '\n' {
                adv += 1;
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i + adv < chars.len() && (chars[i + adv].is_ascii_alphanumeric() || matches!(chars[i + adv], '_' | '\'')) {
                adv += 1;
            }
            out.push((Tok::Ident(chars[i..i + adv].iter().collect()), pos));
        } else if c.is_ascii_digit() {
            while i + adv < chars.len() && chars[i + adv].is_ascii_digit() {
                adv += 1;
            }
            let s: String = chars[i..i + adv].iter().collect();
            let n = s.parse().map_err(|_| LogicError::Syntax { pos, msg: format!("integer out of range: {s}") })?;
            out.push((Tok::Int(n), pos));
        } else {
            let next = chars.get(i + 1).copied();
            let tok = match (c, next) {
                ('!', Some('=')) => {
                    adv = 2;
                    Tok::Ne
                }
                ('>', Some('=')) => {
                    adv = 2;
                    Tok::Ge
                }
                (':', Some('-')) => {
                    adv = 2;
                    Tok::Rule
                }
                ('(', _) => Tok::LParen,
                (')', _) => Tok::RParen,
                (',', _) => Tok::Comma,
                ('.', _) => Tok::Dot,
                ('&', _) => Tok::Amp,
                ('|', _) => Tok::Bar,
                ('!', _) => Tok::Bang,
                ('=', _) => Tok::Eq,
                ('^', _) => Tok::Caret,
                (';', _) => Tok::Semi,
                ('@', _) => Tok::At,
                ('-', _) => Tok::Minus,
                _ => return Err(LogicError::Syntax { pos, msg: format!("unexpected character '{c}'") }),
            };
            out.push((tok, pos));
        }
        i += adv;
        col += adv;
    }
    Ok(out)
}

/// Cursor over a token stream.
pub struct Cursor {
    toks: Vec<(Tok, Pos)>,
    i: usize,
    end: Pos,
}

impl Cursor {
    pub fn new(toks: Vec<(Tok, Pos)>, text: &str) -> Cursor {
        let line = text.lines().count().max(1);
        let col = text.lines().last().map(|l| l.len() + 1).unwrap_or(1);
        Cursor { toks, i: 0, end: Pos { line, col } }
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|(t, _)| t)
    }

    pub fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.i + k).map(|(t, _)| t)
    }

    pub fn pos(&self) -> Pos {
        self.toks.get(self.i).map(|(_, p)| *p).unwrap_or(self.end)
    }

    pub fn at_end(&self) -> bool {
        self.i >= self.toks.len()
    }

    pub fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.i).map(|(t, _)| t.clone());
        self.i += 1;
        t
    }

    pub fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, t: &Tok, what: &str) -> Result<(), LogicError> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {what}")))
        }
    }

    pub fn ident(&mut self, what: &str) -> Result<String, LogicError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.i += 1;
                Ok(s)
            }
            _ => Err(self.error(&format!("expected {what}"))),
        }
    }

    pub fn int(&mut self, what: &str) -> Result<u32, LogicError> {
        match self.peek() {
            Some(Tok::Int(n)) => {
                let n = *n;
                self.i += 1;
                Ok(n)
            }
            _ => Err(self.error(&format!("expected {what}"))),
        }
    }

    pub fn error(&self, msg: &str) -> LogicError {
        let found = match self.peek() {
            Some(t) => format!("{t:?}"),
            None => "end of input".to_string(),
        };
        LogicError::Syntax { pos: self.pos(), msg: format!("{msg}, found {found}") }
    }
}
