use std::collections::BTreeMap;

/// Token-level prefix trie over dictionary surfaces of one store.
#[derive(Clone, Debug)]
pub(crate) struct TokenTrie {
    nodes: Vec<Node>,
}

#[derive(Clone, Debug, Default)]
struct Node {
    children: BTreeMap<String, u32>,
    terminal: bool,
}

impl Default for TokenTrie {
    fn default() -> Self {
        TokenTrie {
            nodes: vec![Node::default()],
        }
    }
}

impl TokenTrie {

    pub fn insert<'a>(&mut self, tokens: impl IntoIterator<Item = &'a str>) {
        let mut cur = 0usize;
        for t in tokens {
            let next = match self.nodes[cur].children.get(t) {
                Some(&n) => n as usize,
                None => {
                    let id = self.nodes.len();
                    self.nodes.push(Node::default());
                    self.nodes[cur].children.insert(t.to_string(), id as u32);
                    id
                }
            };
            cur = next;
        }
        self.nodes[cur].terminal = true;
    }

    /// Number of tokens of every surface that starts at `tokens[0]`, shortest first.
    pub fn prefix_matches(&self, tokens: &[&str]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = 0usize;
        for (i, t) in tokens.iter().enumerate() {
            match self.nodes[cur].children.get(*t) {
                Some(&n) => cur = n as usize,
                None => break,
            }
            if self.nodes[cur].terminal {
                out.push(i + 1);
            }
        }
        out
    }
}
