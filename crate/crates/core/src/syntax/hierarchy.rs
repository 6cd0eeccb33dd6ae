use serde::{Deserialize, Serialize};

use super::ParsedToken;
use crate::error::{Error, Result};

pub const HIERARCHY_FORMAT_VERSION: u32 = 1;

const VERB: &str = "VERB";
const ADJ: &str = "ADJ";

fn is_noun(upos: &str) -> bool {
    matches!(upos, "NOUN" | "PROPN" | "PRON")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    /// The single layer-1 node standing for the whole sentence.
    Overall,
    /// A node backed by a sentence token.
    Word,
    /// Synthetic layer-2 node for nouns that have no governing verb.
    Exist,
}

/// A hierarchy node. `id`, `parent` and `children` are global node ids,
/// assigned in layer order and then token order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: usize,
    pub layer: u8,
    pub kind: NodeKind,
    pub form: Option<String>,
    /// 1-based token position; absent for the overall and [EXIST] nodes.
    pub position: Option<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntaxHierarchy {
    pub format_version: u32,
    pub exist_node_used: bool,
    /// Exactly four layers: sentence, verbs, nouns, adjectives.
    pub layers: Vec<Vec<Node>>,
}

/// Walk the head chain upward from `start` and return the first ancestor
/// accepted by `stop`, or `None` once the chain reaches the root.
fn walk_up<F>(tokens: &[ParsedToken], start: usize, mut stop: F) -> Option<Ancestor>
where
    F: FnMut(&ParsedToken) -> Option<Ancestor>,
{
    let mut cur = tokens[start - 1].head;
    for _ in 0..tokens.len() {
        if cur == 0 {
            return None;
        }
        let tok = &tokens[cur - 1];
        if let Some(found) = stop(tok) {
            return Some(found);
        }
        cur = tok.head;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ancestor {
    Verb(usize),
    Noun(usize),
    Blocked,
}

/// Build the four-level hierarchy from a dependency parse.
///
/// Layer 2 holds the VERB tokens (plus an [EXIST] node when a noun has no
/// verb above it or the sentence has no verbs). Each NOUN/PROPN/PRON attaches
/// to the nearest VERB on its head chain. Each ADJ attaches to the first
/// noun on its head chain, unless a verb or the root comes first, in which
/// case it is dropped.
pub fn build_hierarchy(tokens: &[ParsedToken]) -> SyntaxHierarchy {
    let verbs: Vec<usize> = tokens
        .iter()
        .filter(|t| t.upos == VERB)
        .map(|t| t.index)
        .collect();
    let nouns: Vec<usize> = tokens
        .iter()
        .filter(|t| is_noun(&t.upos))
        .map(|t| t.index)
        .collect();

    let noun_verb: Vec<Option<usize>> = nouns
        .iter()
        .map(|&n| {
            walk_up(tokens, n, |t| (t.upos == VERB).then_some(Ancestor::Verb(t.index))).map(|a| match a {
                Ancestor::Verb(v) => v,
                _ => unreachable!(),
            })
        })
        .collect();

    let adjectives: Vec<(usize, usize)> = tokens
        .iter()
        .filter(|t| t.upos == ADJ)
        .filter_map(|t| {
            let found = walk_up(tokens, t.index, |a| {
                if a.upos == VERB {
                    Some(Ancestor::Blocked)
                } else if is_noun(&a.upos) {
                    Some(Ancestor::Noun(a.index))
                } else {
                    None
                }
            });
            match found {
                Some(Ancestor::Noun(n)) => Some((t.index, n)),
                _ => None,
            }
        })
        .collect();

    let exist = verbs.is_empty() || noun_verb.iter().any(Option::is_none);

    // global ids: overall, verbs, [EXIST], nouns, adjectives
    let verb_id = |pos: usize| 1 + verbs.iter().position(|&v| v == pos).unwrap();
    let exist_id = 1 + verbs.len();
    let layer3_start = 1 + verbs.len() + usize::from(exist);
    let noun_id = |pos: usize| layer3_start + nouns.iter().position(|&n| n == pos).unwrap();
    let layer4_start = layer3_start + nouns.len();

    let form = |pos: usize| Some(tokens[pos - 1].form.clone());

    let mut layer2: Vec<Node> = verbs
        .iter()
        .enumerate()
        .map(|(i, &v)| Node {
            id: 1 + i,
            layer: 2,
            kind: NodeKind::Word,
            form: form(v),
            position: Some(v),
            parent: Some(0),
            children: Vec::new(),
        })
        .collect();
    if exist {
        layer2.push(Node {
            id: exist_id,
            layer: 2,
            kind: NodeKind::Exist,
            form: None,
            position: None,
            parent: Some(0),
            children: Vec::new(),
        });
    }

    let mut layer3: Vec<Node> = nouns
        .iter()
        .zip(&noun_verb)
        .enumerate()
        .map(|(i, (&n, verb))| {
            let parent = verb.map_or(exist_id, verb_id);
            layer2[parent - 1].children.push(layer3_start + i);
            Node {
                id: layer3_start + i,
                layer: 3,
                kind: NodeKind::Word,
                form: form(n),
                position: Some(n),
                parent: Some(parent),
                children: Vec::new(),
            }
        })
        .collect();

    let layer4: Vec<Node> = adjectives
        .iter()
        .enumerate()
        .map(|(i, &(a, n))| {
            let parent = noun_id(n);
            layer3[parent - layer3_start].children.push(layer4_start + i);
            Node {
                id: layer4_start + i,
                layer: 4,
                kind: NodeKind::Word,
                form: form(a),
                position: Some(a),
                parent: Some(parent),
                children: Vec::new(),
            }
        })
        .collect();

    let overall = Node {
        id: 0,
        layer: 1,
        kind: NodeKind::Overall,
        form: None,
        position: None,
        parent: None,
        children: layer2.iter().map(|n| n.id).collect(),
    };

    SyntaxHierarchy {
        format_version: HIERARCHY_FORMAT_VERSION,
        exist_node_used: exist,
        layers: vec![vec![overall], layer2, layer3, layer4],
    }
}

impl SyntaxHierarchy {
    /// Nodes of layer `theta` (1-based, 1..=4).
    pub fn layer(&self, theta: usize) -> &[Node] {
        &self.layers[theta - 1]
    }

    fn layer_start(&self, theta: usize) -> usize {
        self.layers[..theta - 1].iter().map(Vec::len).sum()
    }

    /// Index within layer 2 of the parent of the `i`-th layer-3 node.
    pub fn noun_parent(&self, i: usize) -> usize {
        self.layers[2][i].parent.expect("validated hierarchy") - self.layer_start(2)
    }

    /// Indices within layer 4 of the children of the `i`-th layer-3 node.
    pub fn noun_adjectives(&self, i: usize) -> Vec<usize> {
        let start = self.layer_start(4);
        self.layers[2][i].children.iter().map(|c| c - start).collect()
    }

    /// Check every structural invariant. Run on load and in tests.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Schema(m));
        if self.format_version != HIERARCHY_FORMAT_VERSION {
            return fail(format!("unsupported format_version {}", self.format_version));
        }
        if self.layers.len() != 4 {
            return fail(format!("expected 4 layers, found {}", self.layers.len()));
        }
        if self.layers[0].len() != 1 {
            return fail("layer 1 must hold exactly one node".into());
        }
        if self.layers[1].is_empty() {
            return fail("layer 2 is empty".into());
        }

        let all: Vec<&Node> = self.layers.iter().flatten().collect();
        for (expected, node) in all.iter().enumerate() {
            if node.id != expected {
                return fail(format!("node ids must be sequential, found {} at {expected}", node.id));
            }
        }
        let mut exist_count = 0;
        let mut positions = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            let theta = li + 1;
            for node in layer {
                if usize::from(node.layer) != theta {
                    return fail(format!("node {} claims layer {} inside layer {theta}", node.id, node.layer));
                }
                match (theta, node.kind) {
                    (1, NodeKind::Overall) => {
                        if node.parent.is_some() || node.position.is_some() {
                            return fail("overall node must have no parent or position".into());
                        }
                    }
                    (2, NodeKind::Exist) => {
                        exist_count += 1;
                        if node.position.is_some() {
                            return fail("[EXIST] node must have no position".into());
                        }
                    }
                    (2..=4, NodeKind::Word) => match node.position {
                        Some(p) if p >= 1 => positions.push(p),
                        _ => return fail(format!("word node {} lacks a position", node.id)),
                    },
                    (t, k) => return fail(format!("node {} of kind {k:?} not allowed in layer {t}", node.id)),
                }
                if theta > 1 {
                    let Some(parent) = node.parent else {
                        return fail(format!("node {} has no parent", node.id));
                    };
                    let Some(p) = self.layers[theta - 2].iter().find(|n| n.id == parent) else {
                        return fail(format!("node {} parent {parent} not in layer {}", node.id, theta - 1));
                    };
                    if !p.children.contains(&node.id) {
                        return fail(format!("parent {parent} does not list child {}", node.id));
                    }
                }
                for &c in &node.children {
                    let child = self
                        .layers
                        .get(theta)
                        .and_then(|l| l.iter().find(|n| n.id == c));
                    match child {
                        Some(ch) if ch.parent == Some(node.id) => {}
                        _ => return fail(format!("child {c} of node {} is not linked back", node.id)),
                    }
                }
                let mut sorted = node.children.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted != node.children {
                    return fail(format!("children of node {} not strictly ascending", node.id));
                }
            }
        }
        if exist_count > 1 {
            return fail("more than one [EXIST] node".into());
        }
        if self.exist_node_used != (exist_count == 1) {
            return fail("exist_node_used disagrees with layer 2".into());
        }
        let n = positions.len();
        positions.sort_unstable();
        positions.dedup();
        if positions.len() != n {
            return fail("token positions repeat across nodes".into());
        }
        Ok(())
    }

    /// Canonical JSON: fixed field order, two-space indentation, trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("hierarchy serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let h: Self = serde_json::from_slice(bytes).map_err(|e| Error::Schema(e.to_string()))?;
        h.validate()?;
        Ok(h)
    }

    /// Largest token position referenced by any node.
    pub fn max_position(&self) -> usize {
        self.layers
            .iter()
            .flatten()
            .filter_map(|n| n.position)
            .max()
            .unwrap_or(0)
    }
}
