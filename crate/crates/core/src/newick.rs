//! Rooted binary Newick trees with branch lengths.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub label: Option<String>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Length of the edge to the parent; zero for the root.
    pub branch_length: f64,
    /// Distance from the root.
    pub depth: f64,
}

impl Node {
    pub fn is_tip(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    root: usize,
}

impl Tree {
    /// Builds a tree from nodes whose `parent`, `children` and
    /// `branch_length` are set; depths are recomputed.
    pub fn from_nodes(mut nodes: Vec<Node>, root: usize) -> Result<Self> {
        if root >= nodes.len() {
            return Err(Error::InvalidTree("root index out of range".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            if !n.children.is_empty() && n.children.len() != 2 {
                return Err(Error::InvalidTree(format!(
                    "node {i} has {} children; only binary trees are supported",
                    n.children.len()
                )));
            }
            if !(n.branch_length >= 0.0) || !n.branch_length.is_finite() {
                return Err(Error::InvalidTree(format!("node {i} has invalid branch length")));
            }
        }
        let mut stack = vec![(root, 0.0)];
        let mut seen = 0usize;
        while let Some((i, d)) = stack.pop() {
            seen += 1;
            if seen > nodes.len() {
                return Err(Error::InvalidTree("cycle detected".into()));
            }
            nodes[i].depth = d;
            for &c in &nodes[i].children {
                stack.push((c, d + nodes[c].branch_length));
            }
        }
        if seen != nodes.len() {
            return Err(Error::InvalidTree("nodes unreachable from root".into()));
        }
        Ok(Self { nodes, root })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn tips(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.is_tip())
    }

    pub fn tip_count(&self) -> usize {
        self.tips().count()
    }

    pub fn max_tip_depth(&self) -> f64 {
        self.tips().map(|n| n.depth).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_newick(&self) -> String {
        let mut out = String::new();
        self.write_node(self.root, &mut out);
        out.push(';');
        out
    }

    fn write_node(&self, i: usize, out: &mut String) {
        let node = &self.nodes[i];
        if !node.is_tip() {
            out.push('(');
            for (k, &c) in node.children.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                self.write_node(c, out);
            }
            out.push(')');
        }
        if let Some(label) = &node.label {
            out.push_str(&quote_label(label));
        }
        if i != self.root {
            out.push(':');
            out.push_str(&format!("{}", node.branch_length));
        }
    }
}

fn quote_label(label: &str) -> String {
    let plain = !label.is_empty()
        && label.chars().all(|c| !c.is_whitespace() && !"()[]':;,".contains(c));
    if plain {
        label.to_string()
    } else {
        format!("'{}'", label.replace('\'', "''"))
    }
}

pub fn parse_newick(text: &str) -> Result<Tree> {
    Parser::new(text).parse()
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    nodes: Vec<Node>,
}

impl Parser {
    fn new(text: &str) -> Self {
        Self { chars: text.chars().collect(), pos: 0, nodes: Vec::new() }
    }

    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse { offset, message: message.into() })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) -> Result<()> {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += 1;
            } else if c == '[' {
                let start = self.pos;
                while self.peek().is_some_and(|c| c != ']') {
                    self.pos += 1;
                }
                if self.peek().is_none() {
                    return self.err(start, "unterminated comment");
                }
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(())
    }

    fn parse(mut self) -> Result<Tree> {
        self.skip_ws()?;
        if self.peek().is_none() {
            return self.err(0, "empty input");
        }
        let root = self.parse_subtree(true)?;
        self.skip_ws()?;
        match self.peek() {
            Some(';') => self.pos += 1,
            Some(')') => return self.err(self.pos, "unbalanced parentheses: unexpected ')'"),
            Some(c) => return self.err(self.pos, format!("expected ';', found '{c}'")),
            None => return self.err(self.pos, "missing terminating ';'"),
        }
        self.skip_ws()?;
        if self.pos < self.chars.len() {
            return self.err(self.pos, "trailing characters after ';'");
        }
        self.nodes[root].branch_length = 0.0;
        Tree::from_nodes(self.nodes, root).map_err(|e| Error::Parse { offset: 0, message: e.to_string() })
    }

    fn parse_subtree(&mut self, is_root: bool) -> Result<usize> {
        self.skip_ws()?;
        let start = self.pos;
        let mut children = Vec::new();
        if self.peek() == Some('(') {
            self.pos += 1;
            loop {
                children.push(self.parse_subtree(false)?);
                self.skip_ws()?;
                match self.peek() {
                    Some(',') => self.pos += 1,
                    Some(')') => {
                        self.pos += 1;
                        break;
                    }
                    None | Some(';') => {
                        return self.err(self.pos, "unbalanced parentheses: missing ')'")
                    }
                    Some(c) => return self.err(self.pos, format!("unexpected '{c}' in child list")),
                }
            }
            match children.len() {
                2 => {}
                1 => return self.err(start, "unary node (single child)"),
                k => return self.err(start, format!("polytomy: node has {k} children")),
            }
        }
        self.skip_ws()?;
        let label = self.parse_label()?;
        if children.is_empty() && label.is_none() && !matches!(self.peek(), Some(':')) {
            return match self.peek() {
                None => self.err(self.pos, "unexpected end of input"),
                Some(c) => self.err(self.pos, format!("unexpected '{c}'")),
            };
        }
        self.skip_ws()?;
        let branch_length = if self.peek() == Some(':') {
            self.pos += 1;
            self.skip_ws()?;
            self.parse_length()?
        } else if is_root {
            0.0
        } else {
            return self.err(self.pos, "missing branch length");
        };
        let id = self.nodes.len();
        for &c in &children {
            self.nodes[c].parent = Some(id);
        }
        self.nodes.push(Node { label, parent: None, children, branch_length, depth: 0.0 });
        Ok(id)
    }

    fn parse_label(&mut self) -> Result<Option<String>> {
        match self.peek() {
            Some('\'') => {
                let start = self.pos;
                self.pos += 1;
                let mut s = String::new();
                loop {
                    match self.peek() {
                        None => return self.err(start, "unterminated quoted label"),
                        Some('\'') => {
                            self.pos += 1;
                            if self.peek() == Some('\'') {
                                s.push('\'');
                                self.pos += 1;
                            } else {
                                break;
                            }
                        }
                        Some(c) => {
                            s.push(c);
                            self.pos += 1;
                        }
                    }
                }
                Ok(Some(s))
            }
            _ => {
                let mut s = String::new();
                while let Some(c) = self.peek() {
                    if c.is_whitespace() || "()[]':;,".contains(c) {
                        break;
                    }
                    s.push(c);
                    self.pos += 1;
                }
                Ok(if s.is_empty() { None } else { Some(s) })
            }
        }
    }

    fn parse_length(&mut self) -> Result<f64> {
        let start = self.pos;
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || "+-.eE".contains(c) {
                s.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        if s.is_empty() {
            return self.err(start, "missing branch length");
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
            Ok(_) => self.err(start, format!("invalid branch length '{s}'")),
            Err(_) => self.err(start, format!("malformed number '{s}'")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn depth_of(tree: &Tree, label: &str) -> f64 {
        tree.nodes().iter().find(|n| n.label.as_deref() == Some(label)).unwrap().depth
    }

    #[test]
    fn three_tip_depths() {
        let t = parse_newick("((A:1.2,B:1.2):0.3,C:0.6);").unwrap();
        assert_eq!(t.tip_count(), 3);
        assert!((depth_of(&t, "A") - 1.5).abs() < 1e-12);
        assert!((depth_of(&t, "B") - 1.5).abs() < 1e-12);
        assert!((depth_of(&t, "C") - 0.6).abs() < 1e-12);
        let internal: Vec<_> = t.nodes().iter().filter(|n| !n.is_tip() && n.parent.is_some()).collect();
        assert_eq!(internal.len(), 1);
        assert!((internal[0].depth - 0.3).abs() < 1e-12);
        assert_eq!(t.nodes()[t.root()].depth, 0.0);
    }

    #[test]
    fn cherry() {
        let t = parse_newick("(A:1.0,B:1.0);").unwrap();
        assert_eq!(t.tip_count(), 2);
        assert_eq!(depth_of(&t, "A"), 1.0);
        assert_eq!(depth_of(&t, "B"), 1.0);
    }

    #[test]
    fn polytomy_reports_node_offset() {
        match parse_newick("((A:1,B:1,C:1):1);") {
            Err(Error::Parse { offset, message }) => {
                assert_eq!(offset, 1);
                assert!(message.contains("polytomy"), "{message}");
            }
            other => panic!("expected polytomy error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs() {
        let cases = [
            ("", "empty"),
            ("   ", "empty"),
            ("((A:1,B:1):1,C:1;", "missing ')'"),
            ("(A:1,B:1));", "unexpected ')'"),
            ("(A:1,B);", "missing branch length"),
            ("(A:1,B:x);", "missing branch length"),
            ("(A:1,B:1)", "';'"),
            ("(A:1,B:-1);", "invalid branch length"),
            ("((A:1):1,B:1);", "unary"),
        ];
        for (text, needle) in cases {
            match parse_newick(text) {
                Err(Error::Parse { message, .. }) => {
                    assert!(message.contains(needle), "{text:?}: {message}")
                }
                other => panic!("{text:?}: expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn missing_length_offset() {
        match parse_newick("(A:1,B);") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quoted_labels_comments_and_whitespace() {
        let t = parse_newick(" ( 'x y':1 [note] , B_2 : 2.5e0 ) root ; \n").unwrap();
        assert_eq!(depth_of(&t, "x y"), 1.0);
        assert_eq!(depth_of(&t, "B_2"), 2.5);
        let again = parse_newick(&t.to_newick()).unwrap();
        assert_eq!(depth_of(&again, "x y"), 1.0);
    }

    #[test]
    fn serialization_round_trip() {
        let text = "((A:1.2,B:1.2):0.3,(C:0.6,D:0.1):0.25);";
        let t = parse_newick(text).unwrap();
        assert_eq!(t.to_newick(), text);
    }
}
