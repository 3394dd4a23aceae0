use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    Text(String),
    Doc(String),
    Sym(&'static str),
    Newline,
    Eof,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

// Longest first so that `//` wins over `/` and `<=` over `<`.
const SYMBOLS: &[&str] = &[
    "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "(", ")", "{", "}", "[", "]", ",", ".",
    "=", "<", ">", "+", "-", "*", "/", "%",
];

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut lexer = Lexer {
        chars: src.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
        depth: 0,
        out: Vec::new(),
    };
    lexer.run()?;
    Ok(lexer.out)
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    col: u32,
    /// Nesting of `(` and `[`; newlines inside are insignificant.
    depth: u32,
    out: Vec<Token>,
}

impl Lexer {
    fn peek(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.pos + ahead).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn error(&self, line: u32, col: u32, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line,
            col,
            message: message.into(),
        }
    }

    fn push(&mut self, tok: Tok, line: u32, col: u32) {
        if tok == Tok::Newline
            && matches!(self.out.last(), None | Some(Token { tok: Tok::Newline, .. }))
        {
            return;
        }
        self.out.push(Token { tok, line, col });
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek(i) == Some(c))
    }

    fn run(&mut self) -> Result<(), ParseError> {
        while let Some(c) = self.peek(0) {
            let (line, col) = (self.line, self.col);
            match c {
                '\n' => {
                    self.bump();
                    if self.depth == 0 {
                        self.push(Tok::Newline, line, col);
                    }
                }
                c if c.is_whitespace() => {
                    self.bump();
                }
                '#' => {
                    while self.peek(0).is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                }
                '"' if self.starts_with("\"\"\"") => {
                    for _ in 0..3 {
                        self.bump();
                    }
                    let mut text = String::new();
                    loop {
                        if self.starts_with("\"\"\"") {
                            for _ in 0..3 {
                                self.bump();
                            }
                            break;
                        }
                        match self.bump() {
                            Some(c) => text.push(c),
                            None => return Err(self.error(line, col, "unterminated docstring")),
                        }
                    }
                    self.push(Tok::Doc(text), line, col);
                }
                '"' | '\'' => {
                    let text = self.string(c, line, col)?;
                    self.push(Tok::Text(text), line, col);
                }
                c if c.is_ascii_digit() => {
                    let tok = self.number(line, col)?;
                    self.push(tok, line, col);
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut ident = String::new();
                    while let Some(c) = self.peek(0).filter(|c| c.is_ascii_alphanumeric() || *c == '_') {
                        ident.push(c);
                        self.bump();
                    }
                    self.push(Tok::Ident(ident), line, col);
                }
                _ => {
                    let sym = SYMBOLS
                        .iter()
                        .find(|s| self.starts_with(s))
                        .ok_or_else(|| self.error(line, col, format!("unexpected character `{c}`")))?;
                    for _ in 0..sym.len() {
                        self.bump();
                    }
                    match *sym {
                        "(" | "[" => self.depth += 1,
                        ")" | "]" => self.depth = self.depth.saturating_sub(1),
                        _ => {}
                    }
                    self.push(Tok::Sym(sym), line, col);
                }
            }
        }
        let (line, col) = (self.line, self.col);
        self.push(Tok::Newline, line, col);
        self.out.push(Token {
            tok: Tok::Eof,
            line,
            col,
        });
        Ok(())
    }

    fn string(&mut self, quote: char, line: u32, col: u32) -> Result<String, ParseError> {
        self.bump();
        let mut text = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(self.error(line, col, "unterminated string")),
                Some(c) if c == quote => return Ok(text),
                Some('\\') => {
                    let esc = self.bump().ok_or_else(|| self.error(line, col, "unterminated string"))?;
                    text.push(match esc {
                        'n' => '\n',
                        't' => '\t',
                        '\\' => '\\',
                        '"' => '"',
                        '\'' => '\'',
                        other => {
                            return Err(self.error(self.line, self.col - 1, format!("unknown escape `\\{other}`")))
                        }
                    });
                }
                Some(c) => text.push(c),
            }
        }
    }

    fn number(&mut self, line: u32, col: u32) -> Result<Tok, ParseError> {
        let mut text = String::new();
        while let Some(c) = self.peek(0).filter(|c| c.is_ascii_digit()) {
            text.push(c);
            self.bump();
        }
        if self.peek(0) == Some('.') && self.peek(1).is_some_and(|c| c.is_ascii_digit()) {
            text.push('.');
            self.bump();
            while let Some(c) = self.peek(0).filter(|c| c.is_ascii_digit()) {
                text.push(c);
                self.bump();
            }
        }
        if matches!(self.peek(0), Some('e' | 'E')) {
            let sign = usize::from(matches!(self.peek(1), Some('+' | '-')));
            if self.peek(1 + sign).is_some_and(|c| c.is_ascii_digit()) {
                for _ in 0..=sign {
                    text.push(self.bump().unwrap_or('e'));
                }
                while let Some(c) = self.peek(0).filter(|c| c.is_ascii_digit()) {
                    text.push(c);
                    self.bump();
                }
            }
        }
        if self.peek(0).is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
            return Err(self.error(line, col, format!("malformed number `{text}...`")));
        }
        text.parse()
            .map(Tok::Number)
            .map_err(|_| self.error(line, col, format!("malformed number `{text}`")))
    }
}
