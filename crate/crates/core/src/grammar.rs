//! Incremental recognizer for the LTL surface grammar.
//!
//! A deterministic pushdown automaton over *expectation symbols*: the stack
//! records exactly what still has to be produced for the output to become a
//! complete, terminated formula. Because the grammar is LL(1), the valid
//! next-token set is a function of the stack top alone, and the number of
//! stack symbols equals the minimum number of tokens needed to finish — each
//! symbol is dischargeable by exactly one token.

use crate::ltl::{SurfaceToken, TokenId, Vocab};
use thiserror::Error;

/// What the grammar still expects, top of stack = end of the vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    Formula,
    BinOp,
    RParen,
    Eos,
}

/// A set of token ids, bitset-backed. Vocabulary sizes are at most 26
/// (15 props + 11 fixed tokens), so one u64 always suffices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TokenSet {
    bits: u64,
}

impl TokenSet {
    pub fn empty() -> TokenSet {
        TokenSet { bits: 0 }
    }

    pub fn insert(&mut self, id: TokenId) {
        debug_assert!(id < 64);
        self.bits |= 1 << id;
    }

    pub fn remove(&mut self, id: TokenId) {
        self.bits &= !(1 << id);
    }

    pub fn contains(&self, id: TokenId) -> bool {
        id < 64 && self.bits & (1 << id) != 0
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = TokenId> + '_ {
        let bits = self.bits;
        (0..64).filter(move |i| bits & (1 << i) != 0)
    }
}

impl FromIterator<TokenId> for TokenSet {
    fn from_iter<I: IntoIterator<Item = TokenId>>(iter: I) -> TokenSet {
        let mut s = TokenSet::empty();
        for id in iter {
            s.insert(id);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("token {token:?} is not valid in the current state")]
    InvalidToken { token: SurfaceToken },
    #[error("update on a terminal state")]
    TerminalState,
}

/// Incremental recognizer state: expectation stack plus a consumed-token
/// counter. Cloning is cheap; updates are functional.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarState {
    /// Top at the end. Fresh state is `[Eos, Formula]`: produce a formula,
    /// then terminate.
    stack: Vec<Expect>,
    consumed: usize,
}

impl GrammarState {
    pub fn stack(&self) -> &[Expect] {
        &self.stack
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }
}

/// The grammar engine for a fixed vocabulary.
#[derive(Debug, Clone, Copy)]
pub struct Grammar {
    vocab: Vocab,
}

impl Grammar {
    pub fn new(vocab: Vocab) -> Grammar {
        Grammar { vocab }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn init_state(&self) -> GrammarState {
        GrammarState {
            stack: vec![Expect::Eos, Expect::Formula],
            consumed: 0,
        }
    }

    /// Accepting = nothing left to expect; only reachable through EOS.
    pub fn is_accepting(&self, state: &GrammarState) -> bool {
        state.stack.is_empty()
    }

    /// Minimum number of further tokens to reach an accepting state: every
    /// stack symbol costs exactly one token.
    pub fn min_completion_cost(&self, state: &GrammarState) -> usize {
        state.stack.len()
    }

    /// Tokens that keep the output well formed, as a function of the stack
    /// top. Empty on an accepting state.
    pub fn valid_tokens(&self, state: &GrammarState) -> TokenSet {
        let mut set = TokenSet::empty();
        let Some(top) = state.stack.last() else {
            return set;
        };
        match top {
            Expect::Formula => {
                for i in 1..=self.vocab.max_props() {
                    set.insert(self.vocab.id(SurfaceToken::Prop(i)));
                }
                for t in [
                    SurfaceToken::Not,
                    SurfaceToken::Next,
                    SurfaceToken::Eventually,
                    SurfaceToken::Always,
                    SurfaceToken::LParen,
                ] {
                    set.insert(self.vocab.id(t));
                }
            }
            Expect::BinOp => {
                for t in [
                    SurfaceToken::And,
                    SurfaceToken::Or,
                    SurfaceToken::Implies,
                    SurfaceToken::Until,
                ] {
                    set.insert(self.vocab.id(t));
                }
            }
            Expect::RParen => set.insert(self.vocab.id(SurfaceToken::RParen)),
            Expect::Eos => set.insert(self.vocab.eos_id()),
        }
        set
    }

    /// How a token changes the completion cost: propositions, binary
    /// operators, `)` and EOS each discharge one expectation (-1), unary
    /// operators keep the expectation in place (0), `(` trades one
    /// expectation for four (+3).
    fn cost_delta(token: SurfaceToken) -> isize {
        match token {
            SurfaceToken::LParen => 3,
            t if t.unary_op().is_some() => 0,
            _ => -1,
        }
    }

    /// Valid tokens that also fit a length budget: token `t` stays only if
    /// the updated state can still finish within `budget - 1` tokens. As
    /// long as `budget >= min_completion_cost`, some cost-discharging token
    /// survives, so constrained decoding can always terminate on time.
    pub fn valid_tokens_within(&self, state: &GrammarState, budget: usize) -> TokenSet {
        let cost = self.min_completion_cost(state) as isize;
        let mut set = self.valid_tokens(state);
        for id in set.iter().collect::<Vec<_>>() {
            let after = cost + Self::cost_delta(self.vocab.token(id));
            if after > budget as isize - 1 {
                set.remove(id);
            }
        }
        set
    }

    /// Consume one token, returning the successor state.
    pub fn update(
        &self,
        state: &GrammarState,
        token: SurfaceToken,
    ) -> Result<GrammarState, GrammarError> {
        let top = *state
            .stack
            .last()
            .ok_or(GrammarError::TerminalState)?;
        let mut stack = state.stack.clone();
        match (top, token) {
            (Expect::Formula, SurfaceToken::Prop(i))
                if i >= 1 && i <= self.vocab.max_props() =>
            {
                stack.pop();
            }
            (Expect::Formula, t) if t.unary_op().is_some() => {
                // Still expecting a formula: the operand.
            }
            (Expect::Formula, SurfaceToken::LParen) => {
                stack.pop();
                stack.extend([Expect::RParen, Expect::Formula, Expect::BinOp, Expect::Formula]);
            }
            (Expect::BinOp, t) if t.binary_op().is_some() => {
                stack.pop();
            }
            (Expect::RParen, SurfaceToken::RParen) => {
                stack.pop();
            }
            (Expect::Eos, SurfaceToken::Eos) => {
                stack.pop();
            }
            _ => return Err(GrammarError::InvalidToken { token }),
        }
        Ok(GrammarState {
            stack,
            consumed: state.consumed + 1,
        })
    }

    /// Run a whole sequence: true iff every update is valid and the final
    /// state accepts.
    pub fn accepts(&self, tokens: &[SurfaceToken]) -> bool {
        let mut state = self.init_state();
        for &t in tokens {
            match self.update(&state, t) {
                Ok(next) => state = next,
                Err(_) => return false,
            }
        }
        self.is_accepting(&state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::{parse_tokens, BINARY_OPS, UNARY_OPS};
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn grammar() -> Grammar {
        Grammar::new(Vocab::new(5))
    }

    #[test]
    fn fresh_state_shape() {
        let g = grammar();
        let s = g.init_state();
        assert_eq!(s.stack(), &[Expect::Eos, Expect::Formula]);
        assert_eq!(g.min_completion_cost(&s), 2);
        assert!(!g.is_accepting(&s));
        // Propositions, four unary operators, and "(".
        assert_eq!(g.valid_tokens(&s).len(), 5 + 5);
    }

    #[test]
    fn unary_token_keeps_the_expectation() {
        let g = grammar();
        let s = g.init_state();
        let after = g.update(&s, SurfaceToken::Eventually).unwrap();
        assert_eq!(after.stack(), s.stack());
        assert_eq!(after.consumed(), 1);
        assert_eq!(g.valid_tokens(&after), g.valid_tokens(&s));
    }

    #[test]
    fn after_open_paren_and_prop_only_binops_remain() {
        let g = grammar();
        let mut s = g.init_state();
        for t in [SurfaceToken::LParen, SurfaceToken::Prop(1)] {
            s = g.update(&s, t).unwrap();
        }
        let valid = g.valid_tokens(&s);
        assert_eq!(valid.len(), 4);
        for op in BINARY_OPS {
            assert!(valid.contains(g.vocab().id(op.into())));
        }
        assert_eq!(g.min_completion_cost(&s), 4);
    }

    #[test]
    fn complete_formula_only_awaits_eos() {
        let g = grammar();
        let s = g.update(&g.init_state(), SurfaceToken::Prop(1)).unwrap();
        let valid = g.valid_tokens(&s);
        assert_eq!(valid.len(), 1);
        assert!(valid.contains(g.vocab().eos_id()));
        let done = g.update(&s, SurfaceToken::Eos).unwrap();
        assert!(g.is_accepting(&done));
        assert!(g.valid_tokens(&done).is_empty());
        assert_eq!(
            g.update(&done, SurfaceToken::Eos),
            Err(GrammarError::TerminalState)
        );
    }

    #[test]
    fn invalid_token_is_rejected() {
        let g = grammar();
        assert_eq!(
            g.update(&g.init_state(), SurfaceToken::And),
            Err(GrammarError::InvalidToken {
                token: SurfaceToken::And
            })
        );
        // prop index outside the vocabulary is never valid
        assert!(g.update(&g.init_state(), SurfaceToken::Prop(9)).is_err());
    }

    #[test]
    fn max_valid_set_size_is_props_plus_five() {
        // Reachable states expose at most the formula-expectation set.
        let g = grammar();
        let mut rng = StdRng::seed_from_u64(7);
        let mut max_seen = 0;
        for _ in 0..200 {
            let mut s = g.init_state();
            loop {
                let valid: Vec<_> = g.valid_tokens(&s).iter().collect();
                if valid.is_empty() {
                    break;
                }
                max_seen = max_seen.max(valid.len());
                let pick = valid[rng.gen_range(0..valid.len())];
                s = g.update(&s, g.vocab().token(pick)).unwrap();
            }
        }
        assert_eq!(max_seen, 10);
    }

    #[test]
    fn budget_aware_set_excludes_tokens_that_cannot_finish() {
        let g = grammar();
        let s = g.init_state();
        // Budget exactly at the minimum: only a proposition discharges the
        // formula expectation without spending the slack a unary or "("
        // would need.
        let tight = g.valid_tokens_within(&s, 2);
        assert_eq!(tight.len(), 5);
        for id in tight.iter() {
            assert!(matches!(g.vocab().token(id), SurfaceToken::Prop(_)));
        }
        // One spare token admits the unary operators as well.
        assert_eq!(g.valid_tokens_within(&s, 3).len(), 9);
        // "(" commits to "( f B f ) eos": six tokens from the start.
        assert!(g
            .valid_tokens_within(&s, 6)
            .contains(g.vocab().id(SurfaceToken::LParen)));
        assert!(!g
            .valid_tokens_within(&s, 5)
            .contains(g.vocab().id(SurfaceToken::LParen)));
        // Below the minimum nothing survives.
        assert!(g.valid_tokens_within(&s, 1).is_empty());
    }

    proptest! {
        // Random walks along valid tokens: the cost moves by -1, 0, or +3,
        // some valid token always decreases it, and the valid set is never
        // empty before acceptance.
        #[test]
        fn cost_steps_and_nonemptiness(seed in any::<u64>()) {
            let g = grammar();
            let mut rng = StdRng::seed_from_u64(seed);
            let mut s = g.init_state();
            for _ in 0..64 {
                if g.is_accepting(&s) {
                    break;
                }
                let valid: Vec<_> = g.valid_tokens(&s).iter().collect();
                prop_assert!(!valid.is_empty());
                let cost = g.min_completion_cost(&s) as isize;
                let deltas: Vec<isize> = valid
                    .iter()
                    .map(|&id| {
                        let next = g.update(&s, g.vocab().token(id)).unwrap();
                        g.min_completion_cost(&next) as isize - cost
                    })
                    .collect();
                prop_assert!(deltas.iter().all(|d| [-1, 0, 3].contains(d)));
                prop_assert!(deltas.contains(&-1));
                let pick = valid[rng.gen_range(0..valid.len())];
                s = g.update(&s, g.vocab().token(pick)).unwrap();
            }
        }

        // Any sequence accepted by the engine parses, on random valid walks.
        #[test]
        fn accepted_walks_parse(seed in any::<u64>()) {
            let g = grammar();
            let mut rng = StdRng::seed_from_u64(seed);
            let mut s = g.init_state();
            let mut toks = Vec::new();
            // Budget-aware walk terminates within the budget.
            let budget = 24usize;
            while !g.is_accepting(&s) {
                let valid: Vec<_> = g
                    .valid_tokens_within(&s, budget - toks.len())
                    .iter()
                    .collect();
                prop_assert!(!valid.is_empty());
                let pick = valid[rng.gen_range(0..valid.len())];
                let tok = g.vocab().token(pick);
                toks.push(tok);
                s = g.update(&s, tok).unwrap();
            }
            prop_assert!(toks.len() <= budget);
            prop_assert_eq!(*toks.last().unwrap(), SurfaceToken::Eos);
            prop_assert!(parse_tokens(&toks[..toks.len() - 1]).is_ok());
        }
    }

    // Exhaustive enumeration oracle, built from the grammar definition
    // directly (independent of both the engine and the parser): all
    // well-formed surface streams with at most `budget` tokens.
    fn enumerate_formulas(budget: usize, max_props: u32) -> Vec<Vec<SurfaceToken>> {
        let mut out = Vec::new();
        if budget == 0 {
            return out;
        }
        for i in 1..=max_props {
            out.push(vec![SurfaceToken::Prop(i)]);
        }
        if budget >= 2 {
            for sub in enumerate_formulas(budget - 1, max_props) {
                for op in UNARY_OPS {
                    let mut t = vec![op.into()];
                    t.extend(&sub);
                    out.push(t);
                }
            }
        }
        if budget >= 5 {
            for left_len in 1..=(budget - 4) {
                let lefts: Vec<_> = enumerate_formulas(left_len, max_props)
                    .into_iter()
                    .filter(|l| l.len() == left_len)
                    .collect();
                let rights = enumerate_formulas(budget - 3 - left_len, max_props);
                for l in &lefts {
                    for r in &rights {
                        for op in BINARY_OPS {
                            let mut t = vec![SurfaceToken::LParen];
                            t.extend(l);
                            t.push(op.into());
                            t.extend(r);
                            t.push(SurfaceToken::RParen);
                            out.push(t);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn engine_accepts_exactly_the_enumerated_language_up_to_length_six() {
        // Small-scale version of the exhaustive equivalence; the acceptance
        // suite pushes this to length 8.
        let g = grammar();
        let enumerated = enumerate_formulas(5, 5);
        for f in &enumerated {
            let mut seq = f.clone();
            seq.push(SurfaceToken::Eos);
            assert!(g.accepts(&seq), "engine rejected {:?}", f);
            assert!(parse_tokens(f).is_ok());
        }
        // Count engine-accepted sequences of length <= 6 by DFS over valid
        // tokens; must equal the enumerated count (formulas of <= 5 tokens).
        fn count(g: &Grammar, s: &GrammarState, left: usize) -> usize {
            let mut n = 0;
            if left == 0 {
                return 0;
            }
            for id in g.valid_tokens(s).iter() {
                let next = g.update(s, g.vocab().token(id)).unwrap();
                if g.is_accepting(&next) {
                    n += 1;
                } else {
                    n += count(g, &next, left - 1);
                }
            }
            n
        }
        assert_eq!(count(&g, &g.init_state(), 6), enumerated.len());
    }
}
