use super::DotError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Id { text: String, quoted: bool },
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Eq,
    Semi,
    Comma,
    Colon,
    Arrow,
    UndirectedOp,
    Html,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Id { text, .. } => format!("`{text}`"),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::UndirectedOp => "`--`".into(),
            Tok::Html => "HTML string".into(),
        }
    }

    /// Unquoted identifier matching `word`, case-insensitively (DOT keywords).
    pub(crate) fn is_keyword(&self, word: &str) -> bool {
        matches!(self, Tok::Id { text, quoted: false } if text.eq_ignore_ascii_case(word))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
    at_line_start: bool,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
            self.at_line_start = true;
        } else {
            self.column += 1;
            if !c.is_whitespace() {
                self.at_line_start = false;
            }
        }
        Some(c)
    }

    fn peek_second(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next()
    }

    fn error(&self, expected: &str, found: &str) -> DotError {
        DotError::Syntax {
            line: self.line,
            column: self.column,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

fn is_id_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || (!c.is_ascii() && !c.is_whitespace())
}

fn is_id_continue(c: char) -> bool {
    is_id_start(c) || c.is_ascii_digit()
}

pub(crate) fn lex(text: &str) -> Result<Vec<Token>, DotError> {
    let mut cur = Cursor {
        chars: text.chars().peekable(),
        line: 1,
        column: 1,
        at_line_start: true,
    };
    let mut out = Vec::new();

    while let Some(c) = cur.peek() {
        let (line, column) = (cur.line, cur.column);
        let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line, column });

        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '#' && cur.at_line_start {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if c == '/' {
            match cur.peek_second() {
                Some('/') => {
                    while let Some(c) = cur.peek() {
                        if c == '\n' {
                            break;
                        }
                        cur.bump();
                    }
                    continue;
                }
                Some('*') => {
                    cur.bump();
                    cur.bump();
                    let mut closed = false;
                    while let Some(c) = cur.bump() {
                        if c == '*' && cur.peek() == Some('/') {
                            cur.bump();
                            closed = true;
                            break;
                        }
                    }
                    if !closed {
                        return Err(DotError::Syntax {
                            line,
                            column,
                            expected: "`*/` closing the comment".into(),
                            found: "end of input".into(),
                        });
                    }
                    continue;
                }
                _ => return Err(cur.error("a statement", "`/`")),
            }
        }

        match c {
            '{' | '}' | '[' | ']' | '=' | ';' | ',' | ':' => {
                cur.bump();
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '=' => Tok::Eq,
                    ';' => Tok::Semi,
                    ',' => Tok::Comma,
                    _ => Tok::Colon,
                };
                push(&mut out, tok);
            }
            '-' => match cur.peek_second() {
                Some('>') => {
                    cur.bump();
                    cur.bump();
                    push(&mut out, Tok::Arrow);
                }
                Some('-') => {
                    cur.bump();
                    cur.bump();
                    push(&mut out, Tok::UndirectedOp);
                }
                Some(d) if d.is_ascii_digit() || d == '.' => {
                    cur.bump();
                    let text = format!("-{}", numeral(&mut cur));
                    push(&mut out, Tok::Id { text, quoted: false });
                }
                _ => return Err(cur.error("`->`", "`-`")),
            },
            '"' => {
                cur.bump();
                let mut text = String::new();
                let mut closed = false;
                while let Some(c) = cur.bump() {
                    match c {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' => match cur.peek() {
                            Some('"') | Some('\\') => text.push(cur.bump().unwrap_or('\\')),
                            Some('\n') => {
                                cur.bump();
                            }
                            _ => text.push('\\'),
                        },
                        other => text.push(other),
                    }
                }
                if !closed {
                    return Err(DotError::Syntax {
                        line,
                        column,
                        expected: "closing `\"`".into(),
                        found: "end of input".into(),
                    });
                }
                push(&mut out, Tok::Id { text, quoted: true });
            }
            '<' => {
                // HTML strings are outside the supported subset; consume so the
                // parser can name the construct.
                let mut depth = 0usize;
                while let Some(c) = cur.bump() {
                    match c {
                        '<' => depth += 1,
                        '>' => {
                            depth = depth.saturating_sub(1);
                            if depth == 0 {
                                break;
                            }
                        }
                        _ => {}
                    }
                }
                push(&mut out, Tok::Html);
            }
            c if c.is_ascii_digit() || c == '.' => {
                let text = numeral(&mut cur);
                push(&mut out, Tok::Id { text, quoted: false });
            }
            c if is_id_start(c) => {
                let mut text = String::new();
                while let Some(c) = cur.peek() {
                    if !is_id_continue(c) {
                        break;
                    }
                    text.push(c);
                    cur.bump();
                }
                push(&mut out, Tok::Id { text, quoted: false });
            }
            other => {
                return Err(cur.error("an identifier or punctuation", &format!("`{other}`")));
            }
        }
    }
    Ok(out)
}

fn numeral(cur: &mut Cursor<'_>) -> String {
    let mut text = String::new();
    let mut seen_dot = false;
    while let Some(c) = cur.peek() {
        if c.is_ascii_digit() || (c == '.' && !seen_dot) {
            seen_dot |= c == '.';
            text.push(c);
            cur.bump();
        } else {
            break;
        }
    }
    text
}
