//! The LTL surface language: formulas, the token vocabulary, parsing, and
//! rendering.
//!
//! The surface grammar is LL(1); binary connectives carry mandatory
//! parentheses so every well-formed token stream has exactly one parse:
//!
//! ```text
//! formula ::= prop_i | unary formula | "(" formula binary formula ")"
//! unary   ::= ¬ | ○ | ◇ | □
//! binary  ::= ∧ | ∨ | ⇒ | ∪
//! ```
//!
//! Formulas render in two notations. [`Notation::Unicode`] is the canonical
//! display form ("◇ ( prop_1 ∧ prop_2 )"); [`Notation::Ascii`] is what goes
//! into files (`F ( prop_1 AND prop_2 )`), keeping stored corpora byte-exact
//! without encoding hazards. The parser accepts both, even mixed.

use std::fmt;

use thiserror::Error;

/// Index of a token in the decoding vocabulary, in `0..vocab.size()`.
pub type TokenId = usize;

/// Unary connectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Not,
    Next,
    Eventually,
    Always,
}

/// Binary connectives. Applications always render inside parentheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    And,
    Or,
    Implies,
    Until,
}

pub const UNARY_OPS: [UnaryOp; 4] = [
    UnaryOp::Not,
    UnaryOp::Next,
    UnaryOp::Eventually,
    UnaryOp::Always,
];

pub const BINARY_OPS: [BinaryOp; 4] = [
    BinaryOp::And,
    BinaryOp::Or,
    BinaryOp::Implies,
    BinaryOp::Until,
];

/// An LTL formula over numbered atomic propositions `prop_1 .. prop_K`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Prop(u32),
    Unary(UnaryOp, Box<Formula>),
    Binary(BinaryOp, Box<Formula>, Box<Formula>),
}

/// One surface token of the target language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SurfaceToken {
    /// `prop_i`, 1-based.
    Prop(u32),
    Not,
    Next,
    Eventually,
    Always,
    And,
    Or,
    Implies,
    Until,
    LParen,
    RParen,
    /// End-of-sequence sentinel. Part of the decoding vocabulary, never part
    /// of formula text.
    Eos,
}

/// Rendering notation for formula text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Notation {
    /// Canonical display glyphs: `¬ ○ ◇ □ ∧ ∨ ⇒ ∪`.
    Unicode,
    /// File-format aliases: `NOT X F G AND OR IMPLIES UNTIL`.
    Ascii,
}

impl SurfaceToken {
    pub fn spelling(&self, notation: Notation) -> String {
        let fixed = match (self, notation) {
            (SurfaceToken::Prop(i), _) => return format!("prop_{i}"),
            (SurfaceToken::Not, Notation::Unicode) => "¬",
            (SurfaceToken::Next, Notation::Unicode) => "○",
            (SurfaceToken::Eventually, Notation::Unicode) => "◇",
            (SurfaceToken::Always, Notation::Unicode) => "□",
            (SurfaceToken::And, Notation::Unicode) => "∧",
            (SurfaceToken::Or, Notation::Unicode) => "∨",
            (SurfaceToken::Implies, Notation::Unicode) => "⇒",
            (SurfaceToken::Until, Notation::Unicode) => "∪",
            (SurfaceToken::Not, Notation::Ascii) => "NOT",
            (SurfaceToken::Next, Notation::Ascii) => "X",
            (SurfaceToken::Eventually, Notation::Ascii) => "F",
            (SurfaceToken::Always, Notation::Ascii) => "G",
            (SurfaceToken::And, Notation::Ascii) => "AND",
            (SurfaceToken::Or, Notation::Ascii) => "OR",
            (SurfaceToken::Implies, Notation::Ascii) => "IMPLIES",
            (SurfaceToken::Until, Notation::Ascii) => "UNTIL",
            (SurfaceToken::LParen, _) => "(",
            (SurfaceToken::RParen, _) => ")",
            (SurfaceToken::Eos, _) => "<eos>",
        };
        fixed.to_string()
    }

    pub fn unary_op(&self) -> Option<UnaryOp> {
        match self {
            SurfaceToken::Not => Some(UnaryOp::Not),
            SurfaceToken::Next => Some(UnaryOp::Next),
            SurfaceToken::Eventually => Some(UnaryOp::Eventually),
            SurfaceToken::Always => Some(UnaryOp::Always),
            _ => None,
        }
    }

    pub fn binary_op(&self) -> Option<BinaryOp> {
        match self {
            SurfaceToken::And => Some(BinaryOp::And),
            SurfaceToken::Or => Some(BinaryOp::Or),
            SurfaceToken::Implies => Some(BinaryOp::Implies),
            SurfaceToken::Until => Some(BinaryOp::Until),
            _ => None,
        }
    }
}

impl From<UnaryOp> for SurfaceToken {
    fn from(op: UnaryOp) -> Self {
        match op {
            UnaryOp::Not => SurfaceToken::Not,
            UnaryOp::Next => SurfaceToken::Next,
            UnaryOp::Eventually => SurfaceToken::Eventually,
            UnaryOp::Always => SurfaceToken::Always,
        }
    }
}

impl From<BinaryOp> for SurfaceToken {
    fn from(op: BinaryOp) -> Self {
        match op {
            BinaryOp::And => SurfaceToken::And,
            BinaryOp::Or => SurfaceToken::Or,
            BinaryOp::Implies => SurfaceToken::Implies,
            BinaryOp::Until => SurfaceToken::Until,
        }
    }
}

/// The decoding vocabulary for a fixed proposition budget: `max_props`
/// proposition tokens, eight operators, two parentheses, and EOS.
///
/// Token ids form a bijection with token kinds over `0..size()`: ids
/// `0..max_props` are `prop_1..prop_max`, followed by the operators in a
/// fixed order, parentheses, and EOS last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocab {
    max_props: u32,
}

impl Vocab {
    /// Hard ceiling on the proposition budget (concatenation stress tests
    /// use up to 15 APs).
    pub const MAX_PROPS_LIMIT: u32 = 15;

    const TAIL: [SurfaceToken; 11] = [
        SurfaceToken::Not,
        SurfaceToken::Next,
        SurfaceToken::Eventually,
        SurfaceToken::Always,
        SurfaceToken::And,
        SurfaceToken::Or,
        SurfaceToken::Implies,
        SurfaceToken::Until,
        SurfaceToken::LParen,
        SurfaceToken::RParen,
        SurfaceToken::Eos,
    ];

    pub fn new(max_props: u32) -> Vocab {
        assert!(
            (1..=Self::MAX_PROPS_LIMIT).contains(&max_props),
            "max_props must be in 1..={}, got {max_props}",
            Self::MAX_PROPS_LIMIT
        );
        Vocab { max_props }
    }

    pub fn max_props(&self) -> u32 {
        self.max_props
    }

    /// Vocabulary size, `max_props + 11`.
    pub fn size(&self) -> usize {
        self.max_props as usize + Self::TAIL.len()
    }

    pub fn token(&self, id: TokenId) -> SurfaceToken {
        let p = self.max_props as usize;
        if id < p {
            SurfaceToken::Prop(id as u32 + 1)
        } else {
            Self::TAIL[id - p]
        }
    }

    pub fn id(&self, token: SurfaceToken) -> TokenId {
        let p = self.max_props as usize;
        match token {
            SurfaceToken::Prop(i) => {
                assert!(
                    i >= 1 && i <= self.max_props,
                    "prop_{i} outside vocabulary (max_props = {})",
                    self.max_props
                );
                i as usize - 1
            }
            other => {
                p + Self::TAIL
                    .iter()
                    .position(|t| *t == other)
                    .expect("every non-prop token is in the tail table")
            }
        }
    }

    pub fn eos_id(&self) -> TokenId {
        self.size() - 1
    }

    /// Recognize a single word in either notation.
    pub fn lookup(&self, word: &str) -> Option<SurfaceToken> {
        let token = match word {
            "¬" | "NOT" => SurfaceToken::Not,
            "○" | "X" => SurfaceToken::Next,
            "◇" | "F" => SurfaceToken::Eventually,
            "□" | "G" => SurfaceToken::Always,
            "∧" | "AND" => SurfaceToken::And,
            "∨" | "OR" => SurfaceToken::Or,
            "⇒" | "IMPLIES" => SurfaceToken::Implies,
            "∪" | "UNTIL" => SurfaceToken::Until,
            "(" => SurfaceToken::LParen,
            ")" => SurfaceToken::RParen,
            _ => {
                let idx: u32 = word.strip_prefix("prop_")?.parse().ok()?;
                if idx >= 1 && idx <= self.max_props {
                    SurfaceToken::Prop(idx)
                } else {
                    return None;
                }
            }
        };
        Some(token)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unknown token `{word}` at position {pos}")]
    UnknownToken { pos: usize, word: String },
    #[error("unexpected token at position {pos}")]
    UnexpectedToken { pos: usize },
    #[error("unbalanced parenthesis opened at position {pos}")]
    UnbalancedParen { pos: usize },
    #[error("trailing tokens starting at position {pos}")]
    TrailingTokens { pos: usize },
}

impl ParseError {
    /// First offending token position (for end-of-input errors, the position
    /// of the construct left open).
    pub fn position(&self) -> usize {
        match self {
            ParseError::UnknownToken { pos, .. }
            | ParseError::UnexpectedToken { pos }
            | ParseError::UnbalancedParen { pos }
            | ParseError::TrailingTokens { pos } => *pos,
        }
    }
}

/// Split whitespace-separated formula text into surface tokens.
pub fn lex(vocab: &Vocab, text: &str) -> Result<Vec<SurfaceToken>, ParseError> {
    text.split_whitespace()
        .enumerate()
        .map(|(pos, word)| {
            vocab.lookup(word).ok_or_else(|| ParseError::UnknownToken {
                pos,
                word: word.to_string(),
            })
        })
        .collect()
}

/// Parse a complete token stream into a formula.
///
/// Recursive descent over the LL(1) grammar; one token of lookahead decides
/// every production, no backtracking. Every input either parses or yields
/// exactly one typed error with a position. An embedded EOS token is never
/// part of formula text and is rejected where it stands.
pub fn parse_tokens(tokens: &[SurfaceToken]) -> Result<Formula, ParseError> {
    let mut opens = Vec::new();
    let (formula, next) = parse_at(tokens, 0, &mut opens)?;
    if next != tokens.len() {
        return Err(ParseError::TrailingTokens { pos: next });
    }
    Ok(formula)
}

/// Lex and parse formula text in either notation.
pub fn parse_formula(vocab: &Vocab, text: &str) -> Result<Formula, ParseError> {
    parse_tokens(&lex(vocab, text)?)
}

fn end_of_input(opens: &[usize], pos: usize) -> ParseError {
    match opens.first() {
        // Report the earliest parenthesis that can no longer be closed.
        Some(&open) => ParseError::UnbalancedParen { pos: open },
        None => ParseError::UnexpectedToken { pos },
    }
}

fn parse_at(
    tokens: &[SurfaceToken],
    pos: usize,
    opens: &mut Vec<usize>,
) -> Result<(Formula, usize), ParseError> {
    let token = *tokens
        .get(pos)
        .ok_or_else(|| end_of_input(opens, pos))?;
    if let Some(op) = token.unary_op() {
        let (child, next) = parse_at(tokens, pos + 1, opens)?;
        return Ok((Formula::Unary(op, Box::new(child)), next));
    }
    match token {
        SurfaceToken::Prop(i) => Ok((Formula::Prop(i), pos + 1)),
        SurfaceToken::LParen => {
            opens.push(pos);
            let (left, after_left) = parse_at(tokens, pos + 1, opens)?;
            let op = tokens
                .get(after_left)
                .ok_or_else(|| end_of_input(opens, after_left))?
                .binary_op()
                .ok_or(ParseError::UnexpectedToken { pos: after_left })?;
            let (right, after_right) = parse_at(tokens, after_left + 1, opens)?;
            match tokens.get(after_right) {
                Some(SurfaceToken::RParen) => {
                    opens.pop();
                    Ok((
                        Formula::Binary(op, Box::new(left), Box::new(right)),
                        after_right + 1,
                    ))
                }
                Some(_) => Err(ParseError::UnexpectedToken { pos: after_right }),
                None => Err(end_of_input(opens, after_right)),
            }
        }
        _ => Err(ParseError::UnexpectedToken { pos }),
    }
}

impl Formula {
    /// Surface tokens of the canonical rendering (no EOS).
    pub fn surface_tokens(&self) -> Vec<SurfaceToken> {
        let mut out = Vec::new();
        self.push_tokens(&mut out);
        out
    }

    fn push_tokens(&self, out: &mut Vec<SurfaceToken>) {
        match self {
            Formula::Prop(i) => out.push(SurfaceToken::Prop(*i)),
            Formula::Unary(op, a) => {
                out.push((*op).into());
                a.push_tokens(out);
            }
            Formula::Binary(op, a, b) => {
                out.push(SurfaceToken::LParen);
                a.push_tokens(out);
                out.push((*op).into());
                b.push_tokens(out);
                out.push(SurfaceToken::RParen);
            }
        }
    }

    /// Token count of the canonical rendering.
    pub fn surface_len(&self) -> usize {
        match self {
            Formula::Prop(_) => 1,
            Formula::Unary(_, a) => 1 + a.surface_len(),
            Formula::Binary(_, a, b) => 3 + a.surface_len() + b.surface_len(),
        }
    }

    /// Render as space-separated text in the given notation.
    pub fn render(&self, notation: Notation) -> String {
        let words: Vec<String> = self
            .surface_tokens()
            .iter()
            .map(|t| t.spelling(notation))
            .collect();
        words.join(" ")
    }

    /// Token ids of the canonical rendering plus a trailing EOS — the
    /// training-target form.
    pub fn target_ids(&self, vocab: &Vocab) -> Vec<TokenId> {
        let mut ids: Vec<TokenId> = self
            .surface_tokens()
            .iter()
            .map(|t| vocab.id(*t))
            .collect();
        ids.push(vocab.eos_id());
        ids
    }

    /// Distinct proposition indices in order of first occurrence,
    /// left-to-right.
    pub fn props_in_order(&self) -> Vec<u32> {
        let mut seen = Vec::new();
        self.collect_props(&mut seen);
        seen
    }

    fn collect_props(&self, seen: &mut Vec<u32>) {
        match self {
            Formula::Prop(i) => {
                if !seen.contains(i) {
                    seen.push(*i);
                }
            }
            Formula::Unary(_, a) => a.collect_props(seen),
            Formula::Binary(_, a, b) => {
                a.collect_props(seen);
                b.collect_props(seen);
            }
        }
    }

    /// Rewrite proposition indices through `f`.
    pub fn map_props(&self, f: &impl Fn(u32) -> u32) -> Formula {
        match self {
            Formula::Prop(i) => Formula::Prop(f(*i)),
            Formula::Unary(op, a) => Formula::Unary(*op, Box::new(a.map_props(f))),
            Formula::Binary(op, a, b) => {
                Formula::Binary(*op, Box::new(a.map_props(f)), Box::new(b.map_props(f)))
            }
        }
    }

    /// Renumber propositions to `1..=K` in order of first occurrence.
    pub fn renumbered(&self) -> Formula {
        let order = self.props_in_order();
        self.map_props(&|i| {
            order.iter().position(|&p| p == i).expect("prop occurs") as u32 + 1
        })
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render(Notation::Unicode))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::new(5)
    }

    fn ev(f: Formula) -> Formula {
        Formula::Unary(UnaryOp::Eventually, Box::new(f))
    }

    #[test]
    fn vocab_size_and_bijection() {
        for max_props in [1, 5, 15] {
            let v = Vocab::new(max_props);
            assert_eq!(v.size(), max_props as usize + 11);
            for id in 0..v.size() {
                assert_eq!(v.id(v.token(id)), id);
            }
            assert_eq!(v.token(v.eos_id()), SurfaceToken::Eos);
        }
    }

    #[test]
    #[should_panic]
    fn vocab_rejects_oversized_prop_budget() {
        Vocab::new(16);
    }

    #[test]
    fn renders_both_notations() {
        let f = ev(Formula::Binary(
            BinaryOp::And,
            Box::new(Formula::Prop(1)),
            Box::new(ev(Formula::Prop(2))),
        ));
        assert_eq!(f.render(Notation::Unicode), "◇ ( prop_1 ∧ ◇ prop_2 )");
        assert_eq!(f.render(Notation::Ascii), "F ( prop_1 AND F prop_2 )");
        assert_eq!(f.to_string(), "◇ ( prop_1 ∧ ◇ prop_2 )");
        assert_eq!(ev(Formula::Prop(1)).render(Notation::Unicode), "◇ prop_1");
    }

    #[test]
    fn parses_both_notations_even_mixed() {
        let v = vocab();
        let f = parse_formula(&v, "◇ ( prop_1 ∧ ◇ prop_2 )").unwrap();
        assert_eq!(f, parse_formula(&v, "F ( prop_1 AND F prop_2 )").unwrap());
        assert_eq!(f, parse_formula(&v, "F ( prop_1 ∧ ◇ prop_2 )").unwrap());
    }

    #[test]
    fn parse_error_positions() {
        let v = vocab();
        assert_eq!(
            parse_formula(&v, "( prop_1 ∧"),
            Err(ParseError::UnbalancedParen { pos: 0 })
        );
        assert_eq!(
            parse_formula(&v, "prop_1 prop_2"),
            Err(ParseError::TrailingTokens { pos: 1 })
        );
        assert_eq!(
            parse_formula(&v, "prop_9"),
            Err(ParseError::UnknownToken {
                pos: 0,
                word: "prop_9".into()
            })
        );
        assert_eq!(
            parse_formula(&v, "∧ prop_1"),
            Err(ParseError::UnexpectedToken { pos: 0 })
        );
        // Missing a right operand: input ends inside the parenthesis opened
        // at 0, even though the left subformula parsed fine.
        assert_eq!(
            parse_formula(&v, "( ◇ prop_1 ∨"),
            Err(ParseError::UnbalancedParen { pos: 0 })
        );
        // Premature end with no parenthesis open points one past the input.
        assert_eq!(
            parse_formula(&v, "◇"),
            Err(ParseError::UnexpectedToken { pos: 1 })
        );
        assert_eq!(
            parse_formula(&v, ""),
            Err(ParseError::UnexpectedToken { pos: 0 })
        );
        // A binary application without parentheses is rejected as trailing
        // input after the complete left operand.
        assert_eq!(
            parse_formula(&v, "prop_1 ∧ prop_2"),
            Err(ParseError::TrailingTokens { pos: 1 })
        );
    }

    #[test]
    fn embedded_eos_is_rejected() {
        let toks = vec![SurfaceToken::Eos];
        assert_eq!(
            parse_tokens(&toks),
            Err(ParseError::UnexpectedToken { pos: 0 })
        );
    }

    #[test]
    fn renumbering_follows_first_occurrence() {
        let f = Formula::Binary(
            BinaryOp::Until,
            Box::new(Formula::Prop(4)),
            Box::new(Formula::Binary(
                BinaryOp::And,
                Box::new(Formula::Prop(2)),
                Box::new(Formula::Prop(4)),
            )),
        );
        assert_eq!(f.props_in_order(), vec![4, 2]);
        let r = f.renumbered();
        assert_eq!(r.render(Notation::Ascii), "( prop_1 UNTIL ( prop_2 AND prop_1 ) )");
    }

    #[test]
    fn target_ids_end_with_eos() {
        let v = vocab();
        let ids = ev(Formula::Prop(3)).target_ids(&v);
        assert_eq!(ids.len(), 3);
        assert_eq!(*ids.last().unwrap(), v.eos_id());
        assert_eq!(v.token(ids[0]), SurfaceToken::Eventually);
        assert_eq!(v.token(ids[1]), SurfaceToken::Prop(3));
    }
}
