//! Token alphabet and sequence types.
//!
//! The vocabulary is a fixed range of integer ids. The low ids are reserved
//! for structural tokens (padding, sequence delimiters, judge labels, format
//! markers); everything from [`Vocab::first_content_id`] up is task content.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Reserved token ids, fixed across every model in a run.
pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
/// Separates the conditioning prefix from the generated suffix.
pub const SEP: TokenId = 3;
/// Marks the start of the document span in judge inputs.
pub const CTX: TokenId = 4;
/// Marks the single summary span in pointwise judge inputs.
pub const SUM: TokenId = 5;
/// Marks the first summary span in pairwise judge inputs.
pub const SUM_A: TokenId = 6;
/// Marks the second summary span in pairwise judge inputs.
pub const SUM_B: TokenId = 7;
/// Pointwise judge target: the summary is the preferred one.
pub const GOOD: TokenId = 8;
/// Pointwise judge target: the summary is the dispreferred one.
pub const BAD: TokenId = 9;
/// Pairwise judge target: first summary wins.
pub const LABEL_A: TokenId = 10;
/// Pairwise judge target: second summary wins.
pub const LABEL_B: TokenId = 11;
/// Flags the next context token as salient in task documents.
pub const MARK: TokenId = 12;

pub const NUM_RESERVED: u32 = 13;

/// Token alphabet: `NUM_RESERVED` structural ids followed by content ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub size: u32,
}

impl Vocab {
    pub fn new(size: u32) -> Result<Self> {
        if size <= NUM_RESERVED {
            return Err(Error::Config(format!(
                "vocab size {size} leaves no content tokens (need > {NUM_RESERVED})"
            )));
        }
        Ok(Self { size })
    }

    pub fn first_content_id(&self) -> TokenId {
        NUM_RESERVED
    }

    pub fn num_content(&self) -> u32 {
        self.size - NUM_RESERVED
    }

    pub fn content_ids(&self) -> impl Iterator<Item = TokenId> {
        NUM_RESERVED..self.size
    }

    pub fn is_content(&self, id: TokenId) -> bool {
        id >= NUM_RESERVED && id < self.size
    }

    /// Ids a decoder may emit: content tokens plus EOS. Structural tokens are
    /// never sampled, so EOS cannot appear inside a generated body.
    pub fn decodable_ids(&self) -> impl Iterator<Item = TokenId> {
        std::iter::once(EOS).chain(self.content_ids())
    }

    pub fn contains(&self, id: TokenId) -> bool {
        id < self.size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Context,
    Target,
}

/// A validated token sequence. Targets always terminate with EOS; contexts
/// never contain EOS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub ids: Vec<TokenId>,
    pub role: Role,
}

impl TokenSeq {
    pub fn context(ids: Vec<TokenId>, vocab: &Vocab) -> Result<Self> {
        for &id in &ids {
            if !vocab.contains(id) {
                return Err(Error::Data(format!("token id {id} out of vocab")));
            }
            if id == EOS {
                return Err(Error::Data("EOS inside a context sequence".into()));
            }
        }
        Ok(Self { ids, role: Role::Context })
    }

    /// Builds a target from a body (no terminal EOS yet); EOS is appended.
    pub fn target_from_body(body: &[TokenId], vocab: &Vocab) -> Result<Self> {
        for &id in body {
            if !vocab.contains(id) {
                return Err(Error::Data(format!("token id {id} out of vocab")));
            }
            if id == EOS {
                return Err(Error::Data("EOS inside a target body".into()));
            }
        }
        let mut ids = body.to_vec();
        ids.push(EOS);
        Ok(Self { ids, role: Role::Target })
    }

    /// Target token ids without the terminal EOS.
    pub fn body(&self) -> &[TokenId] {
        match self.role {
            Role::Target => &self.ids[..self.ids.len() - 1],
            Role::Context => &self.ids,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_rejects_degenerate_size() {
        assert!(Vocab::new(NUM_RESERVED).is_err());
        assert!(Vocab::new(16).is_ok());
    }

    #[test]
    fn reserved_ids_distinct_and_below_content() {
        let ids = [PAD, BOS, EOS, SEP, CTX, SUM, SUM_A, SUM_B, GOOD, BAD, LABEL_A, LABEL_B, MARK];
        for (i, &a) in ids.iter().enumerate() {
            assert!(a < NUM_RESERVED);
            for &b in &ids[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn decodable_excludes_structural_tokens() {
        let v = Vocab::new(20).unwrap();
        let dec: Vec<_> = v.decodable_ids().collect();
        assert!(dec.contains(&EOS));
        assert!(!dec.contains(&PAD));
        assert!(!dec.contains(&MARK));
        assert_eq!(dec.len(), 1 + v.num_content() as usize);
    }

    #[test]
    fn target_appends_eos_and_rejects_inner_eos() {
        let v = Vocab::new(20).unwrap();
        let t = TokenSeq::target_from_body(&[13, 14], &v).unwrap();
        assert_eq!(t.ids, vec![13, 14, EOS]);
        assert_eq!(t.body(), &[13, 14]);
        assert!(TokenSeq::target_from_body(&[13, EOS], &v).is_err());
        assert!(TokenSeq::context(vec![13, EOS, 14], &v).is_err());
    }
}
