//! Shared source/target token vocabulary with reserved sentinel ids.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::smiles::{tokenize, SmilesError, TokenSequence};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabWire", into = "VocabWire")]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabWire {
    tokens: Vec<String>,
}

impl From<VocabWire> for Vocabulary {
    fn from(w: VocabWire) -> Self {
        Vocabulary::from_token_list(w.tokens)
    }
}

impl From<Vocabulary> for VocabWire {
    fn from(v: Vocabulary) -> Self {
        VocabWire { tokens: v.tokens }
    }
}

impl Vocabulary {
    /// Build from raw tokens: unique, sorted, after the reserved sentinels.
    /// Vocabularies are built only from the training set(s) of a run.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let unique: BTreeSet<&str> = tokens.into_iter().collect();
        let mut list: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        list.extend(unique.into_iter().map(str::to_string));
        Vocabulary::from_token_list(list)
    }

    /// Tokenize both sides of each (product, reactants) string pair.
    pub fn from_text_pairs<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, SmilesError> {
        let mut all: BTreeSet<String> = BTreeSet::new();
        for (a, b) in pairs {
            for side in [a, b] {
                all.extend(tokenize(side)?.tokens);
            }
        }
        Ok(Vocabulary::build(all.iter().map(String::as_str)))
    }

    fn from_token_list(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, seq: &TokenSequence) -> Vec<usize> {
        seq.tokens.iter().map(|t| self.id_or_unk(t)).collect()
    }

    pub fn encode_text(&self, text: &str) -> Result<Vec<usize>, SmilesError> {
        Ok(self.encode(&tokenize(text)?))
    }

    /// Join ids back into text. Reserved ids render as their sentinel
    /// spelling, which never parses as SMILES.
    pub fn decode_text(&self, ids: &[usize]) -> String {
        ids.iter().map(|&i| self.tokens[i].as_str()).collect()
    }

    /// One token per line, id order.
    pub fn to_text_file(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    pub fn from_text_file(text: &str) -> Result<Self, String> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < 4 || tokens[..4] != RESERVED.map(str::to_string) {
            return Err("vocabulary file must start with the reserved tokens".into());
        }
        Ok(Vocabulary::from_token_list(tokens))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_fixed() {
        let v = Vocabulary::build(["C", "O", "("].into_iter());
        assert_eq!(v.token(PAD), "<pad>");
        assert_eq!(v.token(BOS), "<bos>");
        assert_eq!(v.token(EOS), "<eos>");
        assert_eq!(v.token(UNK), "<unk>");
        assert_eq!(v.size(), 7);
        // Sorted content tokens after the sentinels.
        assert_eq!(v.token(4), "(");
        assert_eq!(v.token(5), "C");
        assert_eq!(v.token(6), "O");
    }

    #[test]
    fn bijective_on_content_tokens() {
        let v = Vocabulary::build(["C", "Cl", "c", "1", "[nH]"].into_iter());
        for id in 4..v.size() {
            assert_eq!(v.id(v.token(id)), Some(id));
        }
    }

    #[test]
    fn unknown_token_maps_to_unk() {
        let v = Vocabulary::build(["C"].into_iter());
        assert_eq!(v.id_or_unk("Br"), UNK);
    }

    #[test]
    fn encode_decode_roundtrip() {
        let v = Vocabulary::from_text_pairs([("CCOC(C)=O", "CC(=O)O.CCO")].into_iter()).unwrap();
        let ids = v.encode_text("CC(=O)O.CCO").unwrap();
        assert_eq!(v.decode_text(&ids), "CC(=O)O.CCO");
    }

    #[test]
    fn text_file_roundtrip() {
        let v = Vocabulary::build(["C", "O"].into_iter());
        let text = v.to_text_file();
        let w = Vocabulary::from_text_file(&text).unwrap();
        assert_eq!(v, w);
    }

    #[test]
    fn json_roundtrip_rebuilds_index() {
        let v = Vocabulary::build(["C", "N"].into_iter());
        let json = serde_json::to_string(&v).unwrap();
        let w: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(w.id("N"), v.id("N"));
    }
}
