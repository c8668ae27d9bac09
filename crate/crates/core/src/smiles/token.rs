//! Atom-level tokenization for the seq2seq model: bracket atoms are single
//! tokens, Cl/Br are two letters, everything else is one character.

use super::SmilesError;

/// Token list whose concatenation reproduces the source string exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn joined(&self) -> String {
        self.tokens.concat()
    }
}

/// Split well-formed SMILES text into tokens.
pub fn tokenize(s: &str) -> Result<TokenSequence, SmilesError> {
    let bytes = s.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let b = bytes[pos];
        match b {
            b'[' => {
                let close = bytes[pos..]
                    .iter()
                    .position(|&c| c == b']')
                    .ok_or(SmilesError::UnclosedBracket { pos })?;
                tokens.push(s[pos..pos + close + 1].to_string());
                pos += close + 1;
            }
            b'C' if bytes.get(pos + 1) == Some(&b'l') => {
                tokens.push("Cl".to_string());
                pos += 2;
            }
            b'B' if bytes.get(pos + 1) == Some(&b'r') => {
                tokens.push("Br".to_string());
                pos += 2;
            }
            b'%' => {
                if pos + 2 < bytes.len()
                    && bytes[pos + 1].is_ascii_digit()
                    && bytes[pos + 2].is_ascii_digit()
                {
                    tokens.push(s[pos..pos + 3].to_string());
                    pos += 3;
                } else {
                    return Err(SmilesError::UnknownSymbol {
                        pos,
                        symbol: "%".into(),
                    });
                }
            }
            b'B' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I' | b'C' | b'b' | b'c' | b'n'
            | b'o' | b'p' | b's' | b'-' | b'=' | b'#' | b':' | b'/' | b'\\' | b'(' | b')'
            | b'.' | b'0'..=b'9' => {
                tokens.push((b as char).to_string());
                pos += 1;
            }
            _ => {
                return Err(SmilesError::UnknownSymbol {
                    pos,
                    symbol: (b as char).to_string(),
                })
            }
        }
    }
    Ok(TokenSequence { tokens })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s).unwrap().tokens
    }

    #[test]
    fn single_char_atoms() {
        assert_eq!(toks("CCO"), vec!["C", "C", "O"]);
    }

    #[test]
    fn two_letter_halogens() {
        assert_eq!(toks("ClCCBr"), vec!["Cl", "C", "C", "Br"]);
    }

    #[test]
    fn bracket_atom_is_one_token() {
        assert_eq!(
            toks("[nH]1cccc1"),
            vec!["[nH]", "1", "c", "c", "c", "c", "1"]
        );
    }

    #[test]
    fn join_identity() {
        for s in [
            "CC(=O)OCC",
            "c1ccccc1-c1ccccc1",
            "[13CH3+:5]C%12CC%12",
            "F/C=C/F",
            "CC(=O)O.CCO",
        ] {
            assert_eq!(tokenize(s).unwrap().joined(), s);
        }
    }

    #[test]
    fn unknown_symbol_reported() {
        assert_eq!(
            tokenize("C?C"),
            Err(SmilesError::UnknownSymbol {
                pos: 1,
                symbol: "?".into()
            })
        );
    }

    #[test]
    fn percent_needs_two_digits() {
        assert!(tokenize("C%1C").is_err());
    }
}
