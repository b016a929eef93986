use super::{Action, Cond, CurrentItem, Op, Pattern, PatternError, Value};
use crate::intset::MAX_INT;
use crate::trace::{port_of_name, AttrKey, ValueKind};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Int(i64),
    Quoted(String),
    Op(Op),
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Colon,
    Dot,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, PatternError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
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
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '#' || c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        let (tl, tc) = (line, col);
        let syntax = |expected: &str| PatternError::Syntax {
            line: tl,
            col: tc,
            expected: expected.to_string(),
        };
        let next = chars.get(i + 1).copied();
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                bump!();
            }
            match s.as_str() {
                "in" => Tok::Op(Op::In),
                "notin" => Tok::Op(Op::NotIn),
                "contains" => Tok::Op(Op::Contains),
                "notcontains" => Tok::Op(Op::NotContains),
                _ => Tok::Word(s),
            }
        } else if c.is_ascii_digit() || (c == '-' && next.is_some_and(|d| d.is_ascii_digit())) {
            let mut s = String::new();
            s.push(c);
            bump!();
            while i < chars.len() && chars[i].is_ascii_digit() {
                s.push(chars[i]);
                bump!();
            }
            Tok::Int(s.parse().map_err(|_| syntax("an integer in range"))?)
        } else if c == '\'' || c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(syntax("a closing quote")),
                    Some(&q) if q == c => {
                        bump!();
                        break;
                    }
                    Some('\\') if i + 1 < chars.len() => {
                        bump!();
                        s.push(chars[i]);
                        bump!();
                    }
                    Some(&ch) => {
                        s.push(ch);
                        bump!();
                    }
                }
            }
            Tok::Quoted(s)
        } else {
            let two = next.map(|n| (c, n));
            let (tok, len) = match two {
                Some(('\\', '=')) => (Tok::Op(Op::Ne), 2),
                Some(('>', '=')) => (Tok::Op(Op::Ge), 2),
                Some(('=', '<')) => (Tok::Op(Op::Le), 2),
                _ => match c {
                    '<' => (Tok::Op(Op::Lt), 1),
                    '>' => (Tok::Op(Op::Gt), 1),
                    '=' => (Tok::Op(Op::Eq), 1),
                    '(' => (Tok::LParen, 1),
                    ')' => (Tok::RParen, 1),
                    '[' => (Tok::LBrack, 1),
                    ']' => (Tok::RBrack, 1),
                    ',' => (Tok::Comma, 1),
                    ':' => (Tok::Colon, 1),
                    '.' => (Tok::Dot, 1),
                    _ => return Err(syntax("a token")),
                },
            };
            for _ in 0..len {
                bump!();
            }
            tok
        };
        out.push(Token {
            tok,
            line: tl,
            col: tc,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, PatternError>;

fn is_var_name(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_uppercase())
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, expected: &str) -> PatternError {
        let t = &self.toks[self.pos];
        PatternError::Syntax {
            line: t.line,
            col: t.col,
            expected: expected.to_string(),
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Word(s) if s == w)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.advance();
            Ok(())
        } else {
            Err(self.err(what))
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<()> {
        if self.is_word(w) {
            self.advance();
            Ok(())
        } else {
            Err(self.err(&format!("`{w}`")))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Word(s) => {
                self.advance();
                Ok(s)
            }
            _ => Err(self.err(what)),
        }
    }

    fn attribute(&mut self) -> PResult<AttrKey> {
        let t = self.toks[self.pos].clone();
        let name = self.ident("an attribute name")?;
        // varC(cstr): the constraint argument is implicit
        if name == "varC" && *self.peek() == Tok::LParen {
            self.advance();
            self.expect_word("cstr")?;
            self.expect(Tok::RParen, "`)`")?;
        }
        AttrKey::from_name(&name).ok_or(PatternError::UnknownAttribute {
            line: t.line,
            col: t.col,
            name,
        })
    }

    fn patterns(&mut self) -> PResult<Vec<Pattern>> {
        let mut out: Vec<Pattern> = Vec::new();
        while *self.peek() != Tok::Eof {
            let label = if self.is_word("when") {
                format!("p{}", out.len() + 1)
            } else {
                let l = self.ident("a pattern label or `when`")?;
                self.expect(Tok::Colon, "`:` after the label")?;
                l
            };
            self.expect_word("when")?;
            let cond = self.or_expr()?;
            let sync = match self.peek() {
                Tok::Word(w) if w == "do" => false,
                Tok::Word(w) if w == "do_synchro" || w == "dosynchro" => true,
                _ => {
                    return Err(self.err("a comparison operator, `and`, `or`, `do` or `do_synchro`"))
                }
            };
            self.advance();
            let mut actions = vec![self.action()?];
            while *self.peek() == Tok::Comma {
                self.advance();
                actions.push(self.action()?);
            }
            if *self.peek() == Tok::Dot {
                self.advance();
            }
            out.push(Pattern {
                label,
                cond,
                sync,
                actions,
            });
        }
        Ok(out)
    }

    fn action(&mut self) -> PResult<Action> {
        if self.is_word("current") {
            self.advance();
            self.expect(Tok::LParen, "`(`")?;
            let mut items = vec![self.current_item()?];
            loop {
                if *self.peek() == Tok::Comma || self.is_word("and") {
                    self.advance();
                    items.push(self.current_item()?);
                } else {
                    break;
                }
            }
            self.expect(Tok::RParen, "`,`, `and` or `)`")?;
            Ok(Action::Current(items))
        } else if self.is_word("call") {
            self.advance();
            if *self.peek() == Tok::LParen {
                self.advance();
                let name = self.ident("a procedure name")?;
                self.expect(Tok::RParen, "`)`")?;
                return Ok(Action::Call { name, args: vec![] });
            }
            let name = self.ident("a procedure name")?;
            let mut args = Vec::new();
            if *self.peek() == Tok::LParen {
                self.advance();
                if *self.peek() != Tok::RParen {
                    args.push(self.ident("an argument name")?);
                    while *self.peek() == Tok::Comma {
                        self.advance();
                        args.push(self.ident("an argument name")?);
                    }
                }
                self.expect(Tok::RParen, "`,` or `)`")?;
            }
            Ok(Action::Call { name, args })
        } else {
            Err(self.err("`current` or `call`"))
        }
    }

    fn current_item(&mut self) -> PResult<CurrentItem> {
        let key = self.attribute()?;
        let binder = if *self.peek() == Tok::Op(Op::Eq) {
            self.advance();
            match self.peek().clone() {
                Tok::Word(w) if is_var_name(&w) => {
                    self.advance();
                    Some(w)
                }
                _ => return Err(self.err("a capitalized binder name")),
            }
        } else {
            None
        };
        Ok(CurrentItem { key, binder })
    }

    fn or_expr(&mut self) -> PResult<Cond> {
        let mut c = self.and_expr()?;
        while self.is_word("or") {
            self.advance();
            c = Cond::or(c, self.and_expr()?);
        }
        Ok(c)
    }

    fn and_expr(&mut self) -> PResult<Cond> {
        let mut c = self.unary()?;
        while self.is_word("and") {
            self.advance();
            c = Cond::and(c, self.unary()?);
        }
        Ok(c)
    }

    fn unary(&mut self) -> PResult<Cond> {
        match self.peek().clone() {
            Tok::LParen => {
                self.advance();
                let c = self.or_expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(c)
            }
            Tok::Word(w) if w == "not" => {
                self.advance();
                Ok(Cond::not(self.unary()?))
            }
            Tok::Word(w) if w == "true" => {
                self.advance();
                Ok(Cond::True)
            }
            Tok::Word(w) if w == "isNamed" && *self.peek_at(1) == Tok::LParen => {
                self.advance();
                self.advance();
                let a = self.attribute()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Cond::IsNamed(a))
            }
            Tok::Word(_) => {
                let attr = self.attribute()?;
                let op = match self.peek() {
                    Tok::Op(op) => *op,
                    _ => return Err(self.err("a comparison operator")),
                };
                self.advance();
                let value = self.value(attr)?;
                Ok(Cond::leaf(attr, op, value))
            }
            _ => Err(self.err("a condition")),
        }
    }

    fn value(&mut self, attr: AttrKey) -> PResult<Value> {
        let t = self.toks[self.pos].clone();
        let port_attr = attr.kind() == ValueKind::Port;
        let text_value = |s: String| -> PResult<Value> {
            if port_attr {
                port_of_name(&s)
                    .map(Value::Port)
                    .map_err(|_| PatternError::UnknownPortName {
                        line: t.line,
                        col: t.col,
                        name: s,
                    })
            } else {
                Ok(Value::Text(s))
            }
        };
        match t.tok {
            Tok::Int(i) => {
                self.advance();
                Ok(Value::Int(i))
            }
            Tok::Quoted(s) => {
                self.advance();
                text_value(s)
            }
            Tok::Word(w) if w == "maxInt" => {
                self.advance();
                Ok(Value::Int(MAX_INT))
            }
            Tok::Word(w) if is_var_name(&w) => {
                self.advance();
                Ok(Value::Var(w))
            }
            Tok::Word(w) => {
                self.advance();
                text_value(w)
            }
            Tok::LBrack => {
                self.advance();
                let mut items = Vec::new();
                if *self.peek() != Tok::RBrack {
                    items.push(self.value(attr)?);
                    while *self.peek() == Tok::Comma {
                        self.advance();
                        items.push(self.value(attr)?);
                    }
                }
                self.expect(Tok::RBrack, "`,` or `]`")?;
                Ok(Value::List(items))
            }
            _ => Err(self.err("a value")),
        }
    }
}

/// Parses a pattern file. Patterns without a label are named `p<N>` after
/// their position. Operator precedence is `not` > `and` > `or`.
pub fn parse_patterns(src: &str) -> Result<Vec<Pattern>, PatternError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    p.patterns()
}

/// Parses a bare condition (the part between `when` and `do`).
pub fn parse_condition(src: &str) -> Result<Cond, PatternError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let c = p.or_expr()?;
    if *p.peek() != Tok::Eof {
        return Err(p.err("end of condition"));
    }
    Ok(c)
}
