use crate::error::{Error, Result};

/// One word line of a CoNLL-U sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedToken {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub upos: String,
    /// Governor index, 0 for the root.
    pub head: usize,
    pub deprel: String,
}

/// Parse the first sentence of a CoNLL-U document.
///
/// Multiword ranges (`3-4`) and empty nodes (`5.1`) are skipped. Any further
/// sentences are ignored with a warning.
pub fn parse_conllu(bytes: &[u8]) -> Result<Vec<ParsedToken>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Conllu {
        line: 0,
        msg: format!("invalid utf-8: {e}"),
    })?;

    let mut tokens = Vec::new();
    let mut finished = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !tokens.is_empty() {
                finished = true;
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        if finished {
            log::warn!("conllu input holds more than one sentence; ignoring from line {line_no}");
            break;
        }

        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Conllu {
                line: line_no,
                msg: format!("malformed line: expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let index: usize = id.parse().map_err(|_| Error::Conllu {
            line: line_no,
            msg: format!("non-integer id {id:?}"),
        })?;
        let head: usize = cols[6].parse().map_err(|_| Error::Conllu {
            line: line_no,
            msg: format!("non-integer head {:?}", cols[6]),
        })?;
        if index != tokens.len() + 1 {
            return Err(Error::Conllu {
                line: line_no,
                msg: format!("expected token id {}, found {index}", tokens.len() + 1),
            });
        }
        if head == index {
            return Err(Error::Conllu {
                line: line_no,
                msg: format!("token {index} is its own head"),
            });
        }
        tokens.push(ParsedToken {
            index,
            form: cols[1].to_string(),
            upos: cols[3].to_string(),
            head,
            deprel: cols[7].to_string(),
        });
    }

    if tokens.is_empty() {
        return Err(Error::NoSentence);
    }
    let n = tokens.len();
    if let Some(t) = tokens.iter().find(|t| t.head > n) {
        return Err(Error::Conllu {
            line: 0,
            msg: format!("token {} has head {} outside 0..={n}", t.index, t.head),
        });
    }
    // every chain must reach the root within n steps
    for t in &tokens {
        let mut cur = t.head;
        let mut steps = 0;
        while cur != 0 {
            steps += 1;
            if steps > n {
                return Err(Error::Conllu {
                    line: 0,
                    msg: format!("head cycle through token {}", t.index),
                });
            }
            cur = tokens[cur - 1].head;
        }
    }
    Ok(tokens)
}
