//! Rooted trees: a display/enumeration carrier (`LabeledTree`) and a generic
//! canonical form for trees whose vertices carry graded operation labels
//! (`Tree<L>`), used by every free-operad computation in the crate.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::gradedlin::{koszul_parity, q, sign_scalar, Lin, Scalar};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("no vertex with index {0}")]
    NoVertex(usize),
    #[error("no leaf numbered {0}")]
    NoLeaf(u32),
    #[error("edge color clash at graft point")]
    ColorClash,
    #[error("parse error at byte {0}: {1}")]
    Parse(usize, String),
    #[error("invalid tree: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeColor {
    Solid,
    Dashed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VertexKind {
    Plain,
    External,
    Internal,
    Square,
}

impl VertexKind {
    fn tag(self) -> char {
        match self {
            VertexKind::Plain => 'v',
            VertexKind::External => 'e',
            VertexKind::Internal => 'i',
            VertexKind::Square => 's',
        }
    }

    fn from_tag(c: char) -> Option<Self> {
        Some(match c {
            'v' => VertexKind::Plain,
            'e' => VertexKind::External,
            'i' => VertexKind::Internal,
            's' => VertexKind::Square,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Child {
    Leaf(u32, EdgeColor),
    Vertex(LVertex),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LVertex {
    pub kind: VertexKind,
    pub label: String,
    pub out: EdgeColor,
    pub children: Vec<Child>,
}

impl LVertex {
    pub fn new(kind: VertexKind, label: impl Into<String>) -> Self {
        LVertex {
            kind,
            label: label.into(),
            out: EdgeColor::Solid,
            children: Vec::new(),
        }
    }

    pub fn plain() -> Self {
        Self::new(VertexKind::Plain, "")
    }

    pub fn with_leaves(mut self, leaves: impl IntoIterator<Item = u32>) -> Self {
        for l in leaves {
            self.children.push(Child::Leaf(l, EdgeColor::Solid));
        }
        self
    }

    pub fn with_child(mut self, v: LVertex) -> Self {
        self.children.push(Child::Vertex(v));
        self
    }

    pub fn dashed(mut self) -> Self {
        self.out = EdgeColor::Dashed;
        self
    }
}

impl Child {
    fn color(&self) -> EdgeColor {
        match self {
            Child::Leaf(_, c) => *c,
            Child::Vertex(v) => v.out,
        }
    }

    fn min_leaf(&self) -> Option<u32> {
        match self {
            Child::Leaf(l, _) => Some(*l),
            Child::Vertex(v) => v.children.iter().filter_map(|c| c.min_leaf()).min(),
        }
    }

    fn encode(&self, out: &mut String) {
        if self.color() == EdgeColor::Dashed {
            out.push('~');
        }
        match self {
            Child::Leaf(l, _) => out.push_str(&l.to_string()),
            Child::Vertex(v) => v.encode_body(out),
        }
    }
}

impl LVertex {
    fn encode_body(&self, out: &mut String) {
        out.push(self.kind.tag());
        if !self.label.is_empty() {
            out.push('{');
            out.push_str(&self.label);
            out.push('}');
        }
        out.push('(');
        for (i, c) in self.children.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            c.encode(out);
        }
        out.push(')');
    }

    fn canonicalize(&mut self) {
        for c in &mut self.children {
            if let Child::Vertex(v) = c {
                v.canonicalize();
            }
        }
        let mut keyed: Vec<(String, Option<u32>, Child)> = self
            .children
            .drain(..)
            .map(|c| {
                let mut s = String::new();
                c.encode(&mut s);
                let m = c.min_leaf();
                (s, m, c)
            })
            .collect();
        keyed.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        self.children = keyed.into_iter().map(|(_, _, c)| c).collect();
    }

    fn collect_preorder<'a>(&'a self, out: &mut Vec<&'a LVertex>) {
        out.push(self);
        for c in &self.children {
            if let Child::Vertex(v) = c {
                v.collect_preorder(out);
            }
        }
    }

    fn vertex_mut(&mut self, target: usize, counter: &mut usize) -> Option<&mut LVertex> {
        if *counter == target {
            return Some(self);
        }
        *counter += 1;
        for c in &mut self.children {
            if let Child::Vertex(v) = c {
                if let Some(found) = v.vertex_mut(target, counter) {
                    return Some(found);
                }
            }
        }
        None
    }

    fn map_leaves(&mut self, f: &impl Fn(u32) -> u32) {
        for c in &mut self.children {
            match c {
                Child::Leaf(l, _) => *l = f(*l),
                Child::Vertex(v) => v.map_leaves(f),
            }
        }
    }

    fn replace_leaf(&mut self, leaf: u32, scion: &LVertex) -> Result<bool, TreeError> {
        for c in &mut self.children {
            match c {
                Child::Leaf(l, col) if *l == leaf => {
                    if *col != scion.out {
                        return Err(TreeError::ColorClash);
                    }
                    *c = Child::Vertex(scion.clone());
                    return Ok(true);
                }
                Child::Vertex(v) => {
                    if v.replace_leaf(leaf, scion)? {
                        return Ok(true);
                    }
                }
                _ => {}
            }
        }
        Ok(false)
    }

    fn check_colors(&self) -> Result<(), TreeError> {
        let mut colors = self.children.iter().map(|c| c.color());
        if let Some(first) = colors.next() {
            if colors.any(|c| c != first) {
                return Err(TreeError::Invalid("vertex with mixed input types".into()));
            }
            if first == EdgeColor::Dashed && self.out == EdgeColor::Solid {
                return Err(TreeError::Invalid(
                    "dashed inputs with a solid output".into(),
                ));
            }
        }
        for c in &self.children {
            if let Child::Vertex(v) = c {
                v.check_colors()?;
            }
        }
        Ok(())
    }
}

/// A rooted tree with numbered leaves, edge colors and vertex kinds.
/// Vertex indices are preorder positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabeledTree {
    pub root: LVertex,
}

impl LabeledTree {
    pub fn new(root: LVertex) -> Self {
        let mut t = LabeledTree { root };
        t.root.canonicalize();
        t
    }

    pub fn corolla(n: u32) -> Self {
        Self::new(LVertex::plain().with_leaves(1..=n))
    }

    pub fn encode(&self) -> String {
        let mut s = String::new();
        if self.root.out == EdgeColor::Dashed {
            s.push('~');
        }
        self.root.encode_body(&mut s);
        s
    }

    pub fn parse(s: &str) -> Result<Self, TreeError> {
        let mut p = Parser {
            bytes: s.as_bytes(),
            pos: 0,
        };
        p.skip_ws();
        let dashed = p.eat(b'~');
        let mut root = p.vertex()?;
        if dashed {
            root.out = EdgeColor::Dashed;
        }
        p.skip_ws();
        if p.pos != p.bytes.len() {
            return Err(TreeError::Parse(p.pos, "trailing input".into()));
        }
        let t = LabeledTree::new(root);
        t.validate()?;
        Ok(t)
    }

    pub fn vertices(&self) -> Vec<&LVertex> {
        let mut out = Vec::new();
        self.root.collect_preorder(&mut out);
        out
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices().len()
    }

    pub fn leaves(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for v in self.vertices() {
            for c in &v.children {
                if let Child::Leaf(l, _) = c {
                    out.push(*l);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Parent of each vertex (preorder indices); the root has none.
    pub fn parent_links(&self) -> Vec<Option<usize>> {
        fn walk(v: &LVertex, me: usize, next: &mut usize, out: &mut Vec<Option<usize>>) {
            for c in &v.children {
                if let Child::Vertex(w) = c {
                    let id = *next;
                    *next += 1;
                    out.push(Some(me));
                    walk(w, id, next, out);
                }
            }
        }
        let mut out = vec![None];
        let mut next = 1;
        walk(&self.root, 0, &mut next, &mut out);
        out
    }

    /// Number of children (leaves and vertices) per vertex in preorder.
    pub fn arities(&self) -> Vec<usize> {
        self.vertices().iter().map(|v| v.children.len()).collect()
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        let leaves = self.leaves();
        for (i, l) in leaves.iter().enumerate() {
            if *l != i as u32 + 1 {
                return Err(TreeError::Invalid(format!(
                    "leaf numbering is not 1..{}",
                    leaves.len()
                )));
            }
        }
        self.root.check_colors()
    }

    /// Attaches `scion` as a new input of vertex `vertex`; scion leaves are
    /// renumbered after the host's leaves.
    pub fn graft(&self, vertex: usize, scion: &LabeledTree) -> Result<LabeledTree, TreeError> {
        let shift = self.leaves().len() as u32;
        let mut sc = scion.root.clone();
        sc.map_leaves(&|l| l + shift);
        let mut host = self.root.clone();
        let mut counter = 0;
        let v = host
            .vertex_mut(vertex, &mut counter)
            .ok_or(TreeError::NoVertex(vertex))?;
        if let Some(c) = v.children.first() {
            if c.color() != sc.out {
                return Err(TreeError::ColorClash);
            }
        }
        if sc.out == EdgeColor::Dashed && v.out == EdgeColor::Solid {
            return Err(TreeError::ColorClash);
        }
        v.children.push(Child::Vertex(sc));
        Ok(LabeledTree::new(host))
    }

    /// Operadic partial composition at leaf `leaf`.
    pub fn graft_at_leaf(&self, leaf: u32, scion: &LabeledTree) -> Result<LabeledTree, TreeError> {
        let k = scion.leaves().len() as u32;
        let mut sc = scion.root.clone();
        sc.map_leaves(&|l| l + leaf - 1);
        let mut host = self.root.clone();
        host.map_leaves(&|l| if l > leaf { l + k - 1 } else { l });
        if !host.replace_leaf(leaf, &sc)? {
            return Err(TreeError::NoLeaf(leaf));
        }
        Ok(LabeledTree::new(host))
    }
}

impl fmt::Display for LabeledTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.encode())
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.bytes.get(self.pos) == Some(&b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn vertex(&mut self) -> Result<LVertex, TreeError> {
        let c = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| TreeError::Parse(self.pos, "unexpected end".into()))?;
        let kind = VertexKind::from_tag(c as char)
            .ok_or_else(|| TreeError::Parse(self.pos, "expected vertex tag".into()))?;
        self.pos += 1;
        let mut label = String::new();
        if self.eat(b'{') {
            let start = self.pos;
            while self.pos < self.bytes.len() && self.bytes[self.pos] != b'}' {
                self.pos += 1;
            }
            label = String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned();
            if !self.eat(b'}') {
                return Err(TreeError::Parse(self.pos, "unclosed label".into()));
            }
        }
        if !self.eat(b'(') {
            return Err(TreeError::Parse(self.pos, "expected '('".into()));
        }
        let mut v = LVertex::new(kind, label);
        loop {
            self.skip_ws();
            if self.eat(b')') {
                return Ok(v);
            }
            let dashed = self.eat(b'~');
            let color = if dashed {
                EdgeColor::Dashed
            } else {
                EdgeColor::Solid
            };
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_digit() => {
                    let start = self.pos;
                    while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                    let s = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
                    let n: u32 = s
                        .parse()
                        .map_err(|_| TreeError::Parse(start, "bad leaf number".into()))?;
                    v.children.push(Child::Leaf(n, color));
                }
                Some(_) => {
                    let mut w = self.vertex()?;
                    w.out = color;
                    v.children.push(Child::Vertex(w));
                }
                None => return Err(TreeError::Parse(self.pos, "unexpected end".into())),
            }
        }
    }
}

/// A `(p, q)`-shuffle recorded as a word over `{1, 2}`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Shuffle {
    pub p: usize,
    pub q: usize,
    pub word: Vec<u8>,
}

impl Shuffle {
    pub fn from_word(word: Vec<u8>) -> Option<Self> {
        if word.iter().any(|&b| b != 1 && b != 2) {
            return None;
        }
        let p = word.iter().filter(|&&b| b == 1).count();
        Some(Shuffle {
            p,
            q: word.len() - p,
            word,
        })
    }

    /// The permutation listing the first block's positions, then the second's (1-based).
    pub fn permutation(&self) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.word.len())
            .filter(|&i| self.word[i] == 1)
            .map(|i| i + 1)
            .collect();
        out.extend((0..self.word.len()).filter(|&i| self.word[i] == 2).map(|i| i + 1));
        out
    }

    /// The two-vertex tree with first-block leaves at the root.
    pub fn tree(&self) -> LabeledTree {
        let mut root = LVertex::plain();
        let mut upper = LVertex::plain();
        for (i, &b) in self.word.iter().enumerate() {
            let l = i as u32 + 1;
            if b == 1 {
                root.children.push(Child::Leaf(l, EdgeColor::Solid));
            } else {
                upper.children.push(Child::Leaf(l, EdgeColor::Solid));
            }
        }
        root.children.push(Child::Vertex(upper));
        LabeledTree::new(root)
    }
}

pub fn enumerate_shuffles(p: usize, q: usize) -> Vec<Shuffle> {
    let n = p + q;
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << n) {
        if mask.count_ones() as usize != q {
            continue;
        }
        let word = (0..n)
            .map(|i| if mask >> i & 1 == 1 { 2 } else { 1 })
            .collect();
        out.push(Shuffle { p, q, word });
    }
    out.sort();
    out
}

/// One representative per component of the groupoid of two-vertex trees with `n` leaves.
pub fn enumerate_tree2(n: usize) -> Vec<LabeledTree> {
    let mut out: Vec<LabeledTree> = (0..=n)
        .flat_map(|p| enumerate_shuffles(p, n - p))
        .map(|s| s.tree())
        .collect();
    out.sort_by_key(|t| t.encode());
    out
}

/// Set partitions of `0..n` into at most `r` blocks, each listed with
/// blocks in order of their minimum.
pub fn set_partitions(n: usize, r: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, n: usize, r: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..cur.len() {
            cur[b].push(i);
            rec(i + 1, n, r, cur, out);
            cur[b].pop();
        }
        if cur.len() < r {
            cur.push(vec![i]);
            rec(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, r, &mut Vec::new(), &mut out);
    out
}

/// Pitchforks: a root whose only inputs are `r` top vertices carrying all `n` leaves.
pub fn enumerate_pitchforks(n: usize, r: usize) -> Vec<LabeledTree> {
    let mut out = Vec::new();
    for parts in set_partitions(n, r) {
        let mut root = LVertex::plain();
        for b in &parts {
            root = root.with_child(LVertex::plain().with_leaves(b.iter().map(|&i| i as u32 + 1)));
        }
        for _ in parts.len()..r {
            root = root.with_child(LVertex::plain());
        }
        out.push(LabeledTree::new(root));
    }
    out.sort_by_key(|t| t.encode());
    out
}

/// Rooted trees on vertices labeled `1..=m` (pre-Lie operations of arity `m`).
pub fn enumerate_rooted_trees(m: usize) -> Vec<LabeledTree> {
    // Every parent function without cycles gives one tree.
    let mut out = Vec::new();
    if m == 0 {
        return out;
    }
    let mut parent = vec![0usize; m];
    loop {
        let roots: Vec<usize> = (0..m).filter(|&i| parent[i] == i).collect();
        if roots.len() == 1 && acyclic(&parent, roots[0]) {
            out.push(rooted_from_parents(&parent, roots[0]));
        }
        let mut i = 0;
        loop {
            if i == m {
                out.sort_by_key(|t: &LabeledTree| t.encode());
                return out;
            }
            parent[i] += 1;
            if parent[i] < m {
                break;
            }
            parent[i] = 0;
            i += 1;
        }
    }
}

fn acyclic(parent: &[usize], root: usize) -> bool {
    (0..parent.len()).all(|mut v| {
        for _ in 0..parent.len() {
            if v == root {
                return true;
            }
            v = parent[v];
        }
        v == root
    })
}

fn rooted_from_parents(parent: &[usize], root: usize) -> LabeledTree {
    fn build(v: usize, parent: &[usize]) -> LVertex {
        let mut x = LVertex::new(VertexKind::Plain, (v + 1).to_string());
        for w in 0..parent.len() {
            if w != v && parent[w] == v {
                x.children.push(Child::Vertex(build(w, parent)));
            }
        }
        x
    }
    LabeledTree::new(build(root, parent))
}

/// All ways of attaching leaves `1..=n` to the vertices of `t`.
pub fn attach_leaves(t: &LabeledTree, n: usize) -> Vec<LabeledTree> {
    let m = t.vertex_count();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut assign = vec![0usize; n];
    loop {
        let mut root = t.root.clone();
        for (leaf, &v) in assign.iter().enumerate() {
            let mut counter = 0;
            let x = root.vertex_mut(v, &mut counter).expect("vertex in range");
            x.children.push(Child::Leaf(leaf as u32 + 1, EdgeColor::Solid));
        }
        let tree = LabeledTree::new(root);
        if seen.insert(tree.encode()) {
            out.push(tree);
        }
        let mut i = 0;
        loop {
            if i == n {
                return out;
            }
            assign[i] += 1;
            if assign[i] < m {
                break;
            }
            assign[i] = 0;
            i += 1;
        }
        if m == 0 {
            return out;
        }
    }
}

/// Pre-Lie composition of rooted trees: insert `t2` at the vertex labeled
/// `at` of `t1`, reattaching that vertex's children to the vertices of `t2`
/// in all possible ways. Vertex labels of `t2` are shifted to follow `at`.
pub fn prelie_insert(t1: &LabeledTree, at: usize, t2: &LabeledTree) -> Vec<LabeledTree> {
    let m1 = t1.vertex_count();
    let m2 = t2.vertex_count();
    let relabel1 = |l: usize| if l > at { l + m2 - 1 } else { l };
    let relabel2 = |l: usize| l + at - 1;
    fn relabel(v: &LVertex, f: &dyn Fn(usize) -> usize) -> LVertex {
        let mut w = v.clone();
        w.label = f(v.label.parse().expect("numeric label")).to_string();
        w.children = v
            .children
            .iter()
            .map(|c| match c {
                Child::Vertex(x) => Child::Vertex(relabel(x, f)),
                other => other.clone(),
            })
            .collect();
        w
    }
    let _ = m1;
    fn find_and_take(v: &mut LVertex, label: &str) -> Option<Vec<Child>> {
        if v.label == label {
            return Some(std::mem::take(&mut v.children));
        }
        for c in &mut v.children {
            if let Child::Vertex(w) = c {
                if let Some(ch) = find_and_take(w, label) {
                    return Some(ch);
                }
            }
        }
        None
    }
    fn replace_vertex(v: &LVertex, label: &str, with: &LVertex) -> LVertex {
        if v.label == label {
            return with.clone();
        }
        let mut w = v.clone();
        w.children = v
            .children
            .iter()
            .map(|c| match c {
                Child::Vertex(x) => Child::Vertex(replace_vertex(x, label, with)),
                other => other.clone(),
            })
            .collect();
        w
    }
    let host = relabel(&t1.root, &relabel1);
    let scion = relabel(&t2.root, &relabel2);
    let target = at.to_string();
    let mut probe = host.clone();
    let orphans = find_and_take(&mut probe, &target).expect("vertex present");
    let scion_labels: Vec<String> = {
        let mut v = Vec::new();
        scion.collect_preorder_labels(&mut v);
        v
    };
    let mut out = Vec::new();
    let k = orphans.len();
    let mut assign = vec![0usize; k];
    loop {
        let mut sc = scion.clone();
        for (o, &s) in orphans.iter().zip(&assign) {
            let lab = &scion_labels[s];
            sc.push_child_at(lab, o.clone());
        }
        out.push(LabeledTree::new(replace_vertex(&host, &target, &sc)));
        let mut i = 0;
        loop {
            if i == k {
                out.sort_by_key(|t| t.encode());
                return out;
            }
            assign[i] += 1;
            if assign[i] < m2 {
                break;
            }
            assign[i] = 0;
            i += 1;
        }
    }
}

impl LVertex {
    fn collect_preorder_labels(&self, out: &mut Vec<String>) {
        out.push(self.label.clone());
        for c in &self.children {
            if let Child::Vertex(v) = c {
                v.collect_preorder_labels(out);
            }
        }
    }

    fn push_child_at(&mut self, label: &str, child: Child) -> bool {
        if self.label == label {
            self.children.push(child);
            return true;
        }
        for c in &mut self.children {
            if let Child::Vertex(v) = c {
                if v.push_child_at(label, child.clone()) {
                    return true;
                }
            }
        }
        false
    }
}

// ---------------------------------------------------------------------------
// Canonical trees with graded labels.

/// A vertex label in a free (colored) operad.
pub trait TreeLabel: Clone + Ord + fmt::Debug {
    fn degree(&self) -> i64;
    fn arity(&self) -> usize;
    /// Output color, used first when ordering siblings.
    fn class(&self) -> u8 {
        0
    }
    /// A leaf-like identifier carried by the vertex itself.
    fn own_key(&self) -> Option<u32> {
        None
    }
    fn leaf_class(_leaf: u32) -> u8 {
        0
    }
    /// The label `L'` with `L'(in_{perm[0]}, in_{perm[1]}, ..) = L(in_0, in_1, ..)`.
    fn permute_inputs(&self, perm: &[usize]) -> Lin<Self>;
    fn kind(&self) -> VertexKind {
        VertexKind::Plain
    }
    fn render(&self) -> String {
        format!("{:?}", self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Input {
    Leaf(u32),
    Node(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Node<L> {
    pub label: L,
    pub inputs: Vec<Input>,
}

/// Canonical tree: nodes in preorder, root at index 0, children of every
/// node sorted by (class, smallest key). No nodes means the identity.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tree<L> {
    nodes: Vec<Node<L>>,
}

/// A tree whose node order is the tensor order of its labels.
#[derive(Clone, Debug)]
pub struct RawTree<L> {
    pub nodes: Vec<Node<L>>,
    pub root: usize,
}

impl<L> RawTree<L> {
    pub fn identity() -> Self {
        RawTree {
            nodes: Vec::new(),
            root: 0,
        }
    }

    pub fn corolla(label: L, inputs: Vec<Input>) -> Self {
        RawTree {
            nodes: vec![Node { label, inputs }],
            root: 0,
        }
    }

    /// Two-vertex tree: `lower` at the root with input slot `slot` fed by `upper`.
    pub fn two_vertex(lower: L, lower_inputs: Vec<Input>, upper: L, upper_inputs: Vec<Input>) -> Self {
        RawTree {
            nodes: vec![
                Node {
                    label: lower,
                    inputs: lower_inputs,
                },
                Node {
                    label: upper,
                    inputs: upper_inputs,
                },
            ],
            root: 0,
        }
    }
}

impl<L: TreeLabel> Tree<L> {
    pub fn identity() -> Self {
        Tree { nodes: Vec::new() }
    }

    pub fn is_identity(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn corolla(label: L) -> Lin<Self> {
        let k = label.arity();
        let inputs = (1..=k as u32).map(Input::Leaf).collect();
        canonicalize(&RawTree::corolla(label, inputs))
    }

    pub fn nodes(&self) -> &[Node<L>] {
        &self.nodes
    }

    pub fn root(&self) -> Option<&Node<L>> {
        self.nodes.first()
    }

    pub fn degree(&self) -> i64 {
        self.nodes.iter().map(|n| n.label.degree()).sum()
    }

    pub fn leaves(&self) -> Vec<u32> {
        if self.nodes.is_empty() {
            return vec![1];
        }
        let mut out: Vec<u32> = self
            .nodes
            .iter()
            .flat_map(|n| n.inputs.iter())
            .filter_map(|i| match i {
                Input::Leaf(l) => Some(*l),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn arity(&self) -> usize {
        self.leaves().len()
    }

    pub fn to_raw(&self) -> RawTree<L> {
        RawTree {
            nodes: self.nodes.clone(),
            root: 0,
        }
    }

    /// Preorder index of each node's parent together with the input slot.
    pub fn parents(&self) -> Vec<Option<(usize, usize)>> {
        let mut out = vec![None; self.nodes.len()];
        for (p, n) in self.nodes.iter().enumerate() {
            for (s, i) in n.inputs.iter().enumerate() {
                if let Input::Node(c) = i {
                    out[*c] = Some((p, s));
                }
            }
        }
        out
    }

    /// Relabels leaves by `f` and re-canonicalizes.
    pub fn relabel_leaves(&self, f: impl Fn(u32) -> u32) -> Lin<Self> {
        if self.nodes.is_empty() {
            return Lin::basis(Tree::identity());
        }
        let mut raw = self.to_raw();
        for n in &mut raw.nodes {
            for i in &mut n.inputs {
                if let Input::Leaf(l) = i {
                    *l = f(*l);
                }
            }
        }
        canonicalize(&raw)
    }

    /// Applies a derivation of degree `deg` that sends each label to a sum
    /// of raw fragments; fragment leaf `j` stands for input slot `j` of the
    /// replaced node.
    pub fn derivation(&self, deg: i64, mut f: impl FnMut(&L) -> Vec<(Scalar, RawTree<L>)>) -> Lin<Self> {
        let mut out = Lin::zero();
        let mut prefix = 0i64;
        for v in 0..self.nodes.len() {
            let sgn = sign_scalar(deg & 1 == 1 && prefix & 1 == 1);
            for (c, frag) in f(&self.nodes[v].label) {
                let raw = substitute(self, v, &frag);
                out.add_scaled(&canonicalize(&raw), &(&c * &sgn));
            }
            prefix += self.nodes[v].label.degree();
        }
        out
    }

    pub fn to_labeled(&self) -> LabeledTree {
        fn build<L: TreeLabel>(t: &Tree<L>, v: usize) -> LVertex {
            let n = &t.nodes[v];
            let mut x = LVertex::new(n.label.kind(), n.label.render());
            if n.label.class() == 1 {
                x.out = EdgeColor::Dashed;
            }
            for i in &n.inputs {
                match i {
                    Input::Leaf(l) => {
                        let col = if L::leaf_class(*l) == 1 {
                            EdgeColor::Dashed
                        } else {
                            EdgeColor::Solid
                        };
                        x.children.push(Child::Leaf(*l, col));
                    }
                    Input::Node(c) => x.children.push(Child::Vertex(build(t, *c))),
                }
            }
            x
        }
        if self.nodes.is_empty() {
            return LabeledTree {
                root: LVertex::plain().with_leaves([1]),
            };
        }
        LabeledTree {
            root: build(self, 0),
        }
    }
}

impl<L: TreeLabel> fmt::Display for Tree<L> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.nodes.is_empty() {
            return write!(f, "id");
        }
        fn go<L: TreeLabel>(t: &Tree<L>, v: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let n = &t.nodes[v];
            write!(f, "{}(", n.label.render())?;
            for (k, i) in n.inputs.iter().enumerate() {
                if k > 0 {
                    write!(f, " ")?;
                }
                match i {
                    Input::Leaf(l) => write!(f, "{}", l)?,
                    Input::Node(c) => go(t, *c, f)?,
                }
            }
            write!(f, ")")
        }
        go(self, 0, f)
    }
}

/// Replaces node `v` of `tree` by `frag`, keeping the tensor order
/// (labels before `v`, fragment labels, labels after `v`).
pub fn substitute<L: TreeLabel>(tree: &Tree<L>, v: usize, frag: &RawTree<L>) -> RawTree<L> {
    let n = tree.nodes.len();
    let fl = frag.nodes.len();
    let old_inputs = tree.nodes[v].inputs.clone();
    if fl == 0 {
        // Identity fragment: splice the single input into the parent.
        let through = old_inputs[0];
        let map = |u: usize| if u < v { u } else { u - 1 };
        let remap = |i: Input| -> Input {
            match i {
                Input::Node(u) if u == v => match through {
                    Input::Node(w) => Input::Node(map(w)),
                    leaf => leaf,
                },
                Input::Node(u) => Input::Node(map(u)),
                leaf => leaf,
            }
        };
        let mut nodes = Vec::with_capacity(n - 1);
        for (u, node) in tree.nodes.iter().enumerate() {
            if u == v {
                continue;
            }
            nodes.push(Node {
                label: node.label.clone(),
                inputs: node.inputs.iter().map(|&i| remap(i)).collect(),
            });
        }
        let root = if v == 0 {
            match through {
                Input::Node(w) => map(w),
                Input::Leaf(_) => {
                    return RawTree::identity();
                }
            }
        } else {
            0
        };
        return RawTree { nodes, root };
    }
    let map_old = |u: usize| if u < v { u } else { u + fl - 1 };
    let frag_base = v;
    let frag_root = frag_base + frag.root;
    let mut nodes = Vec::with_capacity(n + fl - 1);
    let remap_old = |i: Input| -> Input {
        match i {
            Input::Node(u) if u == v => Input::Node(frag_root),
            Input::Node(u) => Input::Node(map_old(u)),
            leaf => leaf,
        }
    };
    for node in &tree.nodes[..v] {
        nodes.push(Node {
            label: node.label.clone(),
            inputs: node.inputs.iter().map(|&i| remap_old(i)).collect(),
        });
    }
    for node in &frag.nodes {
        nodes.push(Node {
            label: node.label.clone(),
            inputs: node
                .inputs
                .iter()
                .map(|&i| match i {
                    Input::Leaf(j) => remap_old(old_inputs[j as usize]),
                    Input::Node(u) => Input::Node(frag_base + u),
                })
                .collect(),
        });
    }
    for node in &tree.nodes[v + 1..] {
        nodes.push(Node {
            label: node.label.clone(),
            inputs: node.inputs.iter().map(|&i| remap_old(i)).collect(),
        });
    }
    RawTree {
        nodes,
        root: if v == 0 { frag_root } else { 0 },
    }
}

/// Grafts `t2` into leaf `leaf` of `t1`, renumbering leaves of each side
/// by the given maps. Tensor order is `t1` then `t2`.
pub fn graft_raw<L: TreeLabel>(
    t1: &Tree<L>,
    leaf: u32,
    t2: &Tree<L>,
    map1: impl Fn(u32) -> u32,
    map2: impl Fn(u32) -> u32,
) -> RawTree<L> {
    let n1 = t1.nodes.len();
    if t2.nodes.is_empty() {
        let mut raw = t1.to_raw();
        for n in &mut raw.nodes {
            for i in &mut n.inputs {
                if let Input::Leaf(l) = i {
                    *l = if *l == leaf { map2(1) } else { map1(*l) };
                }
            }
        }
        return raw;
    }
    if n1 == 0 {
        let mut raw = t2.to_raw();
        for n in &mut raw.nodes {
            for i in &mut n.inputs {
                if let Input::Leaf(l) = i {
                    *l = map2(*l);
                }
            }
        }
        return raw;
    }
    let mut nodes = Vec::with_capacity(n1 + t2.nodes.len());
    for n in &t1.nodes {
        nodes.push(Node {
            label: n.label.clone(),
            inputs: n
                .inputs
                .iter()
                .map(|&i| match i {
                    Input::Leaf(l) if l == leaf => Input::Node(n1),
                    Input::Leaf(l) => Input::Leaf(map1(l)),
                    other => other,
                })
                .collect(),
        });
    }
    for n in &t2.nodes {
        nodes.push(Node {
            label: n.label.clone(),
            inputs: n
                .inputs
                .iter()
                .map(|&i| match i {
                    Input::Leaf(l) => Input::Leaf(map2(l)),
                    Input::Node(u) => Input::Node(u + n1),
                })
                .collect(),
        });
    }
    RawTree { nodes, root: 0 }
}

/// Standard partial composition `t1 ∘_i t2` on leaves numbered `1..`.
pub fn compose_at<L: TreeLabel>(t1: &Tree<L>, i: u32, t2: &Tree<L>) -> Lin<Tree<L>> {
    let a2 = t2.arity() as u32;
    let raw = graft_raw(
        t1,
        i,
        t2,
        |l| if l > i { l + a2 - 1 } else { l },
        |l| l + i - 1,
    );
    canonicalize(&raw)
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
struct SortKey {
    class: u8,
    keyless: bool,
    min: u32,
    shape: String,
}

/// Canonical form of a raw tree as a signed combination of canonical trees.
pub fn canonicalize<L: TreeLabel>(raw: &RawTree<L>) -> Lin<Tree<L>> {
    if raw.nodes.is_empty() {
        return Lin::basis(Tree::identity());
    }
    let n = raw.nodes.len();
    let mut keys: Vec<Option<SortKey>> = vec![None; n];
    let mut perms: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut ties = false;
    fn input_key<L: TreeLabel>(i: &Input, raw: &RawTree<L>, keys: &[Option<SortKey>]) -> SortKey {
        match i {
            Input::Leaf(l) => SortKey {
                class: L::leaf_class(*l),
                keyless: false,
                min: *l,
                shape: String::new(),
            },
            Input::Node(c) => {
                let _ = raw;
                keys[*c].clone().expect("child key computed")
            }
        }
    }
    // Post-order traversal.
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![(raw.root, false)];
    while let Some((v, done)) = stack.pop() {
        if done {
            order.push(v);
            continue;
        }
        stack.push((v, true));
        for i in &raw.nodes[v].inputs {
            if let Input::Node(c) = i {
                stack.push((*c, false));
            }
        }
    }
    debug_assert_eq!(order.len(), n, "raw tree is not connected");
    for &v in &order {
        let node = &raw.nodes[v];
        let ks: Vec<SortKey> = node.inputs.iter().map(|i| input_key(i, raw, &keys)).collect();
        let mut idx: Vec<usize> = (0..ks.len()).collect();
        idx.sort_by(|&a, &b| ks[a].cmp(&ks[b]));
        for w in idx.windows(2) {
            if ks[w[0]] == ks[w[1]] {
                ties = true;
            }
        }
        let own = node.label.own_key();
        let min = ks
            .iter()
            .filter(|k| !k.keyless)
            .map(|k| k.min)
            .chain(own)
            .min();
        let shape = if min.is_none() {
            let inner: Vec<&str> = idx.iter().map(|&j| ks[j].shape.as_str()).collect();
            format!(
                "{}:{}:{}[{}]",
                node.label.class(),
                node.label.arity(),
                node.label.degree(),
                inner.join(",")
            )
        } else {
            String::new()
        };
        keys[v] = Some(SortKey {
            class: node.label.class(),
            keyless: min.is_none(),
            min: min.unwrap_or(0),
            shape,
        });
        perms[v] = idx;
    }
    // Preorder positions.
    let mut pos = vec![usize::MAX; n];
    let mut pre = Vec::with_capacity(n);
    let mut stack = vec![raw.root];
    while let Some(v) = stack.pop() {
        pos[v] = pre.len();
        pre.push(v);
        for &j in perms[v].iter().rev() {
            if let Input::Node(c) = raw.nodes[v].inputs[j] {
                stack.push(c);
            }
        }
    }
    let degrees: Vec<i64> = raw.nodes.iter().map(|x| x.label.degree()).collect();
    let sign = sign_scalar(koszul_parity(&pos, &degrees));
    let shapes: Vec<Vec<Input>> = pre
        .iter()
        .map(|&v| {
            perms[v]
                .iter()
                .map(|&j| match raw.nodes[v].inputs[j] {
                    Input::Node(c) => Input::Node(pos[c]),
                    leaf => leaf,
                })
                .collect()
        })
        .collect();
    let mut partial: Vec<(Scalar, Vec<L>)> = vec![(sign, Vec::with_capacity(n))];
    for &v in &pre {
        let lab = raw.nodes[v].label.permute_inputs(&perms[v]);
        if lab.is_zero() {
            return Lin::zero();
        }
        let mut next = Vec::with_capacity(partial.len() * lab.len());
        for (c, labs) in &partial {
            for (l, a) in lab.iter() {
                let mut ls = labs.clone();
                ls.push(l.clone());
                next.push((c * a, ls));
            }
        }
        partial = next;
    }
    let mut out = Lin::zero();
    for (c, labs) in partial {
        let nodes = labs
            .into_iter()
            .zip(shapes.iter())
            .map(|(label, inputs)| Node {
                label,
                inputs: inputs.clone(),
            })
            .collect();
        let t = Tree { nodes };
        if ties {
            if let Some((s, t)) = settle_keyless(t) {
                out.add_term(t, c * s);
            }
        } else {
            out.add_term(t, c);
        }
    }
    out
}

/// Nested view used to reorder keyless siblings.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Nested<L> {
    label: L,
    inputs: Vec<NestedInput<L>>,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
enum NestedInput<L> {
    Leaf(u32),
    Node(Box<Nested<L>>),
}

fn to_nested<L: Clone>(t: &Tree<L>, v: usize) -> Nested<L> {
    Nested {
        label: t.nodes[v].label.clone(),
        inputs: t.nodes[v]
            .inputs
            .iter()
            .map(|i| match i {
                Input::Leaf(l) => NestedInput::Leaf(*l),
                Input::Node(c) => NestedInput::Node(Box::new(to_nested(t, *c))),
            })
            .collect(),
    }
}

fn from_nested<L: Clone>(x: &Nested<L>, out: &mut Vec<Node<L>>) -> usize {
    let me = out.len();
    out.push(Node {
        label: x.label.clone(),
        inputs: Vec::new(),
    });
    let mut ins = Vec::with_capacity(x.inputs.len());
    for i in &x.inputs {
        ins.push(match i {
            NestedInput::Leaf(l) => Input::Leaf(*l),
            NestedInput::Node(c) => Input::Node(from_nested(c, out)),
        });
    }
    out[me].inputs = ins;
    me
}

fn nested_degree<L: TreeLabel>(x: &Nested<L>) -> i64 {
    x.label.degree()
        + x.inputs
            .iter()
            .map(|i| match i {
                NestedInput::Node(c) => nested_degree(c),
                _ => 0,
            })
            .sum::<i64>()
}

fn nested_keyless<L: TreeLabel>(x: &Nested<L>) -> bool {
    x.label.own_key().is_none()
        && x.inputs.iter().all(|i| match i {
            NestedInput::Leaf(_) => false,
            NestedInput::Node(c) => nested_keyless(c),
        })
}

/// Orders adjacent keyless siblings by their full structure; returns `None`
/// when a sibling transposition fixes the tree with sign −1.
fn settle_keyless<L: TreeLabel>(t: Tree<L>) -> Option<(Scalar, Tree<L>)> {
    fn settle<L: TreeLabel>(x: &mut Nested<L>) -> Option<Scalar> {
        let mut sign = q(1);
        for i in &mut x.inputs {
            if let NestedInput::Node(c) = i {
                sign *= settle(c)?;
            }
        }
        let k = x.inputs.len();
        loop {
            let mut changed = false;
            for j in 0..k.saturating_sub(1) {
                let (a, b) = (&x.inputs[j], &x.inputs[j + 1]);
                let (NestedInput::Node(na), NestedInput::Node(nb)) = (a, b) else {
                    continue;
                };
                if !nested_keyless(na) || !nested_keyless(nb) || na.label.class() != nb.label.class() {
                    continue;
                }
                if na <= nb && na != nb {
                    continue;
                }
                let mut perm: Vec<usize> = (0..k).collect();
                perm.swap(j, j + 1);
                let relabeled = x.label.permute_inputs(&perm);
                let (lab, c) = match relabeled.iter().collect::<Vec<_>>().as_slice() {
                    [(l, c)] => ((*l).clone(), (*c).clone()),
                    _ => panic!("keyless siblings under a label without a signed transposition"),
                };
                let block = sign_scalar(nested_degree(na) & 1 == 1 && nested_degree(nb) & 1 == 1);
                if na == nb {
                    if lab == x.label && c.clone() * block.clone() == q(-1) {
                        return None;
                    }
                    continue;
                }
                x.label = lab;
                x.inputs.swap(j, j + 1);
                sign *= c * block;
                changed = true;
            }
            if !changed {
                return Some(sign);
            }
        }
    }
    let mut nested = to_nested(&t, 0);
    let s = settle(&mut nested)?;
    let mut nodes = Vec::new();
    from_nested(&nested, &mut nodes);
    Some((s, Tree { nodes }))
}
