use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// A user's history as one token sequence with a turn label per token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnedHistory {
    tokens: Vec<TokenId>,
    turn_ids: Vec<usize>,
    n_turns: usize,
}

impl TurnedHistory {
    /// Validates that turn labels start at 0, never decrease, and step by at
    /// most one, so every turn `0..n_turns` is non-empty.
    pub fn new(tokens: Vec<TokenId>, turn_ids: Vec<usize>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::contract("history must contain at least one token"));
        }
        if tokens.len() != turn_ids.len() {
            return Err(Error::contract(format!(
                "history has {} tokens but {} turn ids",
                tokens.len(),
                turn_ids.len()
            )));
        }
        if turn_ids[0] != 0 {
            return Err(Error::contract("first turn id must be 0"));
        }
        for (i, w) in turn_ids.windows(2).enumerate() {
            if w[1] != w[0] && w[1] != w[0] + 1 {
                return Err(Error::contract(format!(
                    "turn ids must be contiguous and non-decreasing (position {})",
                    i + 1
                )));
            }
        }
        let n_turns = turn_ids[turn_ids.len() - 1] + 1;
        Ok(Self {
            tokens,
            turn_ids,
            n_turns,
        })
    }

    /// A history consisting of a single turn.
    pub fn single_turn(tokens: Vec<TokenId>) -> Result<Self> {
        let n = tokens.len();
        Self::new(tokens, vec![0; n])
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn turn_ids(&self) -> &[usize] {
        &self.turn_ids
    }

    pub fn n_turns(&self) -> usize {
        self.n_turns
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}
