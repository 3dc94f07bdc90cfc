//! The brace operad Br_C. Operations are rooted trees whose vertices are
//! either external, numbered by the inputs and labeled by C^cu, or
//! internal, labeled by C̄[−1]. The inputs of a vertex are its children.

use std::collections::BTreeMap;
use std::fmt;

use crate::cobar::{CobarGen, CobarOperad, CobarTree};
use crate::gradedlin::{q, sign_scalar, Bigraded, Lin, Scalar};
use crate::opcore::{CoElem, CooperadData, Shape, ShapeInput};
use crate::treecomb::{canonicalize, Input, Node, RawTree, Tree, TreeLabel, VertexKind};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BrLabel {
    Ext(u32, CoElem),
    Int(CoElem),
}

impl BrLabel {
    pub fn element(&self) -> &CoElem {
        match self {
            BrLabel::Ext(_, c) | BrLabel::Int(c) => c,
        }
    }

    fn rewrap(&self, c: CoElem) -> BrLabel {
        match self {
            BrLabel::Ext(i, _) => BrLabel::Ext(*i, c),
            BrLabel::Int(_) => BrLabel::Int(c),
        }
    }
}

impl fmt::Debug for BrLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BrLabel::Ext(i, c) => write!(f, "{}:{}", i, c),
            BrLabel::Int(c) => write!(f, "•{}", c),
        }
    }
}

impl TreeLabel for BrLabel {
    fn degree(&self) -> i64 {
        match self {
            BrLabel::Ext(_, c) => c.degree(),
            BrLabel::Int(c) => c.degree() + 1,
        }
    }
    fn arity(&self) -> usize {
        self.element().arity()
    }
    fn own_key(&self) -> Option<u32> {
        match self {
            BrLabel::Ext(i, _) => Some(*i),
            BrLabel::Int(_) => None,
        }
    }
    fn permute_inputs(&self, perm: &[usize]) -> Lin<Self> {
        self.element().act(perm).map_keys(|c| self.rewrap(c.clone()))
    }
    fn kind(&self) -> VertexKind {
        match self {
            BrLabel::Ext(..) => VertexKind::External,
            BrLabel::Int(_) => VertexKind::Internal,
        }
    }
}

pub type BraceTree = Tree<BrLabel>;
pub type BraceElement = Lin<BraceTree>;

/// Number of external vertices.
pub fn brace_arity(t: &BraceTree) -> usize {
    t.nodes().iter().filter(|n| matches!(n.label, BrLabel::Ext(..))).count()
}

fn is_reduced(c: &CoElem) -> bool {
    !(c.is_unit() && c.arity() <= 1)
}

fn in_cu(c: &CooperadData, x: &CoElem) -> bool {
    (x.is_unit() && x.arity() <= 1) || c.contains(x)
}

fn understocked(t: &BraceTree) -> bool {
    t.nodes().iter().any(|n| matches!(n.label, BrLabel::Int(_)) && n.inputs.len() < 2)
}

#[derive(Clone, Debug)]
pub struct BraceOperad {
    pub cooperad: CooperadData,
    pub cap: usize,
}

pub fn brace_operad(c: &CooperadData, cap: usize) -> BraceOperad {
    let mut cc = c.clone();
    cc.cap = cap.min(c.cap);
    BraceOperad {
        cooperad: cc,
        cap: cap.min(c.cap),
    }
}

fn two_vertex_inputs(m: usize, upper: &[usize], p: usize) -> (Vec<Input>, Vec<Input>) {
    let rest: Vec<usize> = (0..m).filter(|i| !upper.contains(i)).collect();
    let mut root: Vec<Input> = rest.iter().map(|&l| Input::Leaf(l as u32)).collect();
    root.insert(p.min(root.len()), Input::Node(1));
    let up = upper.iter().map(|&l| Input::Leaf(l as u32)).collect();
    (root, up)
}

impl BraceOperad {
    /// Local replacement rules: an internal vertex splits by the reduced
    /// decomposition, an external vertex spawns an internal vertex below
    /// or above it.
    fn fragments(&self, l: &BrLabel) -> Vec<(Scalar, RawTree<BrLabel>)> {
        let c = &self.cooperad;
        let mut out = Vec::new();
        match l {
            BrLabel::Int(x) => {
                for (upper, p, d) in c.reduced_splits(x) {
                    let (ri, ui) = two_vertex_inputs(x.arity(), &upper, p);
                    for ((r, u), k) in d.iter() {
                        let s = sign_scalar(r.degree() & 1 == 0);
                        out.push((k * s, RawTree::two_vertex(BrLabel::Int(r.clone()), ri.clone(), BrLabel::Int(u.clone()), ui.clone())));
                    }
                }
            }
            BrLabel::Ext(i, x) => {
                for (upper, p, d) in c.all_splits(x) {
                    let (ri, ui) = two_vertex_inputs(x.arity(), &upper, p);
                    for ((r, u), k) in d.iter() {
                        if is_reduced(r) && in_cu(c, u) {
                            out.push((-k * sign_scalar(r.degree() & 1 == 1), RawTree::two_vertex(BrLabel::Int(r.clone()), ri.clone(), BrLabel::Ext(*i, u.clone()), ui.clone())));
                        }
                        if is_reduced(u) && in_cu(c, r) {
                            out.push((k * sign_scalar((r.degree() + u.degree()) & 1 == 1), RawTree::two_vertex(BrLabel::Ext(*i, r.clone()), ri.clone(), BrLabel::Int(u.clone()), ui.clone())));
                        }
                    }
                }
            }
        }
        out
    }

    pub fn d_tree(&self, t: &BraceTree) -> BraceElement {
        t.derivation(1, |l| self.fragments(l)).filter(|t| !understocked(t))
    }

    pub fn d(&self, x: &BraceElement) -> BraceElement {
        x.map_linear(|t| self.d_tree(t))
    }

    fn leaf(&self, id: u32, c: CoElem) -> Node<BrLabel> {
        Node {
            label: BrLabel::Ext(id, c),
            inputs: Vec::new(),
        }
    }

    /// Root `root` with childless external vertices `1..` (or `2..` for an
    /// external root) labeled by `leaves`.
    pub fn corolla(&self, root: BrLabel, leaves: &[CoElem]) -> BraceElement {
        let first = if matches!(root, BrLabel::Ext(..)) { 2 } else { 1 };
        let mut nodes = vec![Node {
            label: root,
            inputs: (1..=leaves.len()).map(Input::Node).collect(),
        }];
        for (j, c) in leaves.iter().enumerate() {
            nodes.push(self.leaf(first + j as u32, c.clone()));
        }
        canonicalize(&RawTree { nodes, root: 0 })
    }

    fn leaf_labelings(&self, m: usize) -> Vec<Vec<CoElem>> {
        let opts = self.cooperad.counital_basis(0);
        let mut out = vec![Vec::new()];
        for _ in 0..m {
            out = out
                .into_iter()
                .flat_map(|v: Vec<CoElem>| {
                    opts.iter().map(move |o| {
                        let mut w = v.clone();
                        w.push(o.clone());
                        w
                    })
                })
                .collect();
        }
        out
    }

    /// The generating corollas up to arity `m_max`: an internal root over
    /// external leaves, and an external root over external leaves.
    pub fn generators(&self, m_max: usize) -> Vec<(String, BraceElement)> {
        let mut out = Vec::new();
        for m in 0..=m_max.min(self.cap) {
            for x in self.cooperad.reduced_basis(m) {
                for leaves in self.leaf_labelings(m) {
                    let g = self.corolla(BrLabel::Int(x.clone()), &leaves);
                    out.push((format!("{}", g), g));
                }
            }
            if m >= 1 {
                for c in self.cooperad.counital_basis(m - 1) {
                    for leaves in self.leaf_labelings(m - 1) {
                        let g = self.corolla(BrLabel::Ext(1, c.clone()), &leaves);
                        out.push((format!("{}", g), g));
                    }
                }
            }
        }
        out
    }

    /// `t1 ∘ t2` at the external vertex `id` of `t1`. The children of that
    /// vertex are redistributed over the vertices of `t2` in all ways; its
    /// label is cocomposed along the resulting shape and multiplied into
    /// the labels of `t2`.
    pub fn compose(&self, t1: &BraceTree, id: u32, t2: &BraceTree) -> BraceElement {
        let n1 = t1.nodes();
        let n2 = t2.nodes();
        let v = n1.iter().position(|n| n.label.own_key() == Some(id)).expect("external vertex present");
        let c = n1[v].label.element().clone();
        let r = c.arity();
        let k2 = n2.len();
        let deg_t2: i64 = n2.iter().map(|n| n.label.degree()).sum();
        let deg_after: i64 = n1[v + 1..].iter().map(|n| n.label.degree()).sum();
        let block_sign = sign_scalar((deg_t2 * deg_after).rem_euclid(2) == 1);
        let map_old = |u: usize| if u < v { u } else { u + k2 - 1 };
        let mut out = Lin::zero();
        let mut assign = vec![0usize; r];
        loop {
            let mut extra: Vec<Vec<usize>> = vec![Vec::new(); k2];
            for (j, &w) in assign.iter().enumerate() {
                extra[w].push(j);
            }
            let shape = shape_of(n2, 0, &extra);
            for (pieces, pc) in c.cocompose(&shape).iter() {
                let mut labels: Vec<Lin<BrLabel>> = Vec::with_capacity(k2);
                let mut sign_odd = false;
                let mut piece_deg_after: Vec<i64> = vec![0; k2 + 1];
                for w in (0..k2).rev() {
                    piece_deg_after[w] = piece_deg_after[w + 1] + pieces[w].degree();
                }
                for w in 0..k2 {
                    let lab = &n2[w].label;
                    sign_odd ^= (lab.degree() * piece_deg_after[w + 1]).rem_euclid(2) == 1;
                    let own = lab.element();
                    let inflated = own.insert_inputs(own.arity() + extra[w].len(), &(0..own.arity()).collect::<Vec<_>>());
                    let mut lw = Lin::zero();
                    for (e, ec) in inflated.iter() {
                        lw.add_scaled(&pieces[w].hopf_product(e).map_keys(|p| lab.rewrap(p.clone())), ec);
                    }
                    labels.push(lw);
                }
                let base = pc * &block_sign * sign_scalar(sign_odd);
                // expand the label choices
                let mut partial: Vec<(Scalar, Vec<BrLabel>)> = vec![(base, Vec::new())];
                for lw in &labels {
                    let mut next = Vec::new();
                    for (s, ls) in &partial {
                        for (l, lc) in lw.iter() {
                            let mut v2 = ls.clone();
                            v2.push(l.clone());
                            next.push((s * lc, v2));
                        }
                    }
                    partial = next;
                }
                for (s, ls) in partial {
                    let mut nodes: Vec<Node<BrLabel>> = Vec::with_capacity(n1.len() + k2 - 1);
                    let remap1 = |i: &Input| match i {
                        Input::Node(u) if *u == v => Input::Node(v),
                        Input::Node(u) => Input::Node(map_old(*u)),
                        leaf => *leaf,
                    };
                    for n in &n1[..v] {
                        nodes.push(Node {
                            label: n.label.clone(),
                            inputs: n.inputs.iter().map(remap1).collect(),
                        });
                    }
                    for (w, l) in ls.into_iter().enumerate() {
                        let mut inputs: Vec<Input> = n2[w]
                            .inputs
                            .iter()
                            .map(|i| match i {
                                Input::Node(u) => Input::Node(v + u),
                                leaf => *leaf,
                            })
                            .collect();
                        for &j in &extra[w] {
                            inputs.push(remap1(&n1[v].inputs[j]));
                        }
                        nodes.push(Node { label: l, inputs });
                    }
                    for n in &n1[v + 1..] {
                        nodes.push(Node {
                            label: n.label.clone(),
                            inputs: n.inputs.iter().map(remap1).collect(),
                        });
                    }
                    out.add_scaled(&canonicalize(&RawTree { nodes, root: 0 }), &s);
                }
            }
            let mut i = 0;
            loop {
                if i == r {
                    return out;
                }
                assign[i] += 1;
                if assign[i] < k2 {
                    break;
                }
                assign[i] = 0;
                i += 1;
            }
        }
    }

    pub fn compose_lin(&self, a: &BraceElement, id: u32, b: &BraceElement) -> BraceElement {
        let mut out = Lin::zero();
        for (t1, c1) in a.iter() {
            for (t2, c2) in b.iter() {
                out.add_scaled(&self.compose(t1, id, t2), &(c1 * c2));
            }
        }
        out
    }
}

pub(crate) fn shape_of(nodes: &[Node<BrLabel>], v: usize, extra: &[Vec<usize>]) -> Shape {
    let mut inputs = Vec::new();
    for i in &nodes[v].inputs {
        if let Input::Node(c) = i {
            inputs.push(ShapeInput::Sub(shape_of(nodes, *c, extra)));
        }
    }
    for &j in &extra[v] {
        inputs.push(ShapeInput::Slot(j));
    }
    Shape { inputs }
}

/// Per-generator residuals of d² on Br_C.
#[derive(Clone, Debug)]
pub struct BraceReport {
    pub title: String,
    pub entries: Vec<(String, BraceElement)>,
}

impl BraceReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|(_, r)| r.is_zero())
    }

    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|(_, r)| !r.is_zero()).count()
    }
}

impl fmt::Display for BraceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.title)?;
        for (g, r) in &self.entries {
            if r.is_zero() {
                writeln!(f, "  {} -> 0", g)?;
            } else {
                writeln!(f, "  {} -> {}", g, r)?;
            }
        }
        if self.passed() {
            write!(f, "PASS ({} generators)", self.entries.len())
        } else {
            write!(f, "FAIL ({} of {} generators)", self.failures(), self.entries.len())
        }
    }
}

pub fn check_brace_d_squared(op: &BraceOperad, m_max: usize) -> BraceReport {
    let entries = op
        .generators(m_max)
        .into_iter()
        .map(|(name, g)| {
            let r = op.d(&op.d(&g));
            (name, r)
        })
        .collect();
    BraceReport {
        title: format!("Br d² on {}", op.cooperad.name),
        entries,
    }
}

/// Image of a cobar tree under a generator assignment, by composing the
/// images of its vertices in preorder.
pub fn extend_to_tree(op: &BraceOperad, t: &CobarTree, image: &dyn Fn(&CobarGen) -> BraceElement) -> BraceElement {
    if t.is_identity() {
        return op.corolla(BrLabel::Ext(1, CoElem::unit(op.cooperad.n, op.cooperad.k, 0)), &[]);
    }
    const TMP: u32 = 10_000;
    let nodes = t.nodes();
    // images of each vertex, with inputs renamed: a leaf keeps its number,
    // a child vertex c becomes TMP + c
    let mut acc: Option<BraceElement> = None;
    for (v, n) in nodes.iter().enumerate() {
        let img = image(&n.label);
        let names: Vec<u32> = n
            .inputs
            .iter()
            .map(|i| match i {
                Input::Leaf(l) => *l,
                Input::Node(c) => TMP + *c as u32,
            })
            .collect();
        let img = rename_externals(&img, &|i| names[i as usize - 1]);
        acc = Some(match acc {
            None => img,
            Some(a) => op.compose_lin(&a, TMP + v as u32, &img),
        });
    }
    acc.unwrap_or_default()
}

pub fn rename_externals(x: &BraceElement, f: &dyn Fn(u32) -> u32) -> BraceElement {
    x.map_linear(|t| {
        let raw = RawTree {
            nodes: t
                .nodes()
                .iter()
                .map(|n| Node {
                    label: match &n.label {
                        BrLabel::Ext(i, c) => BrLabel::Ext(f(*i), c.clone()),
                        other => other.clone(),
                    },
                    inputs: n.inputs.clone(),
                })
                .collect(),
            root: 0,
        };
        canonicalize(&raw)
    })
}

#[derive(Clone, Debug)]
pub struct ChainMapReport {
    pub title: String,
    pub entries: Vec<(String, BraceElement)>,
}

impl ChainMapReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|(_, r)| r.is_zero())
    }
}

impl fmt::Display for ChainMapReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.title)?;
        for (g, r) in &self.entries {
            if r.is_zero() {
                writeln!(f, "  {} -> 0", g)?;
            } else {
                writeln!(f, "  {} -> {}", g, r)?;
            }
        }
        write!(f, "chain map: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// `d F(g) − F(d g)` on every generator of the cobar operad.
pub fn check_chain_map(op: &BraceOperad, src: &CobarOperad, image: &dyn Fn(&CobarGen) -> BraceElement, title: &str) -> ChainMapReport {
    let mut entries = Vec::new();
    for g in src.all_generators() {
        let lhs = op.d(&image(&g));
        let mut rhs = Lin::zero();
        for (t, c) in src.d_generator(&g).iter() {
            rhs.add_scaled(&extend_to_tree(op, t, image), c);
        }
        entries.push((format!("{:?}", g), lhs - rhs));
    }
    ChainMapReport {
        title: title.to_string(),
        entries,
    }
}

/// `ΩC → Br_C`: a generator goes to the internal corolla over childless
/// external vertices labeled by the unit.
pub fn underlying_image(op: &BraceOperad, g: &CobarGen) -> BraceElement {
    let c = &op.cooperad;
    let unit0 = CoElem::unit(c.n, c.k, 0);
    op.corolla(BrLabel::Int(g.0.clone()), &vec![unit0; g.0.arity()])
}

/// Which family of the Poisson generators a basis element belongs to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CwFamily {
    /// Top elements: the internal corolla.
    Top,
    /// The arity-two unit: the two-term bracket.
    Bracket,
    /// A singleton input `i` next to a top block: the external corolla.
    Leibniz(usize),
    Zero,
}

pub fn cw_family(x: &CoElem) -> CwFamily {
    let m = x.arity();
    if m < 2 || !matches!(x.body, crate::opcore::Body::Mono(_)) {
        return CwFamily::Zero;
    }
    if x.is_top() {
        return CwFamily::Top;
    }
    if m == 2 && x.is_unit() {
        return CwFamily::Bracket;
    }
    if x.omega_count() + 2 == m {
        let mut touched = vec![false; m];
        for &(a, b) in x.factors() {
            touched[a as usize] = true;
            touched[b as usize] = true;
        }
        let free: Vec<usize> = (0..m).filter(|&i| !touched[i]).collect();
        if free.len() == 1 {
            return CwFamily::Leibniz(free[0]);
        }
    }
    CwFamily::Zero
}

/// The identification of the Lie-type (top weight) parts of
/// `coP_{n+1}{1}` and `coP_n`, fixed in arity 2 and extended to higher
/// arities as the unique map compatible with reduced decompositions.
#[derive(Clone, Debug)]
pub struct TopIdentification {
    pub source: CooperadData,
    pub target: CooperadData,
    pub table: BTreeMap<CoElem, Lin<CoElem>>,
}

impl TopIdentification {
    pub fn new(n: i64, cap: usize) -> Result<Self, String> {
        let src = crate::opcore::suspend(&crate::opcore::builtin_cooperad("coP_n", n + 1, cap).map_err(|e| e.to_string())?, 1);
        let tgt = crate::opcore::builtin_cooperad("coP_n", n, cap).map_err(|e| e.to_string())?;
        let mut table = BTreeMap::new();
        for m in 2..=cap {
            let tops: Vec<CoElem> = tgt.reduced_basis(m).into_iter().filter(|x| x.is_top()).collect();
            for x in src.reduced_basis(m).into_iter().filter(|x| x.is_top()) {
                let img = if m == 2 {
                    Lin::basis(CoElem::mono(n, 0, 2, x.factors().to_vec()))
                } else {
                    let splits = src.reduced_splits(&x);
                    let mut ech: crate::gradedlin::TrackedEchelon<(usize, CoElem, CoElem), CoElem> = crate::gradedlin::TrackedEchelon::new();
                    for t in &tops {
                        let mut v = Lin::zero();
                        for (si, (upper, p, _)) in splits.iter().enumerate() {
                            for ((r, u), c) in t.split2(upper, *p).iter() {
                                v.add_term((si, r.clone(), u.clone()), c.clone());
                            }
                        }
                        ech.insert(v, Lin::basis(t.clone()));
                    }
                    let mut b = Lin::zero();
                    for (si, (_, _, d)) in splits.iter().enumerate() {
                        for ((r, u), c) in d.iter() {
                            let (Some(fr), Some(fu)) = (table.get(r), table.get(u)) else {
                                return Err(format!("no image for {} or {}", r, u));
                            };
                            let fr: &Lin<CoElem> = fr;
                            let fu: &Lin<CoElem> = fu;
                            for (a, ca) in fr.iter() {
                                for (bb, cb) in fu.iter() {
                                    b.add_term((si, a.clone(), bb.clone()), c * ca * cb);
                                }
                            }
                        }
                    }
                    let (rem, combo) = ech.reduce(&b);
                    if !rem.is_zero() {
                        return Err(format!("{} has no compatible image", x));
                    }
                    combo
                };
                table.insert(x, img);
            }
        }
        Ok(TopIdentification { source: src, target: tgt, table })
    }

    pub fn image(&self, x: &CoElem) -> Lin<CoElem> {
        self.table.get(x).cloned().unwrap_or_default()
    }
}

/// The generator assignment `Ω(coP_{n+1}{1}) → Br_{coP_n}`.
pub fn cw_generator_image(op: &BraceOperad, top: &TopIdentification, g: &CobarGen) -> BraceElement {
    let c = &op.cooperad;
    let n = c.n;
    let x = &g.0;
    let m = x.arity();
    let unit0 = CoElem::unit(n, 0, 0);
    match cw_family(x) {
        CwFamily::Top => {
            let mut out = Lin::zero();
            for (y, yc) in top.image(x).iter() {
                out.add_scaled(&op.corolla(BrLabel::Int(y.clone()), &vec![unit0.clone(); m]), yc);
            }
            out
        }
        CwFamily::Bracket => {
            let u1 = CoElem::unit(n, 0, 1);
            let a = op.corolla(BrLabel::Ext(1, u1.clone()), &[unit0.clone()]);
            let b = rename_externals(&a, &|i| 3 - i);
            a - b
        }
        CwFamily::Leibniz(i) => {
            let others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
            let mut pos = vec![0usize; m];
            for (p, &o) in others.iter().enumerate() {
                pos[o] = p;
            }
            let f: Vec<(u8, u8)> = x.factors().iter().map(|&(a, b)| (pos[a as usize] as u8, pos[b as usize] as u8)).collect();
            let ys = crate::opcore::arnold_normalize(n + 1, &f).map_keys(|mm| CoElem::mono(n + 1, 1, m - 1, mm.clone()));
            let names: Vec<u32> = std::iter::once(i as u32 + 1).chain(others.iter().map(|&o| o as u32 + 1)).collect();
            let mut out = Lin::zero();
            for (y, yc) in ys.iter() {
                for (z, zc) in top.image(y).iter() {
                    let t = op.corolla(BrLabel::Ext(1, z.clone()), &vec![unit0.clone(); m - 1]);
                    out.add_scaled(&rename_externals(&t, &|e| names[e as usize - 1]), &(yc * zc));
                }
            }
            out.scale(&sign_scalar(i % 2 == 1))
        }
        CwFamily::Zero => Lin::zero(),
    }
}

/// The associative product on the symmetric coalgebra S^c(B) of a
/// symmetric brace algebra concentrated in degree zero: `(a₁⋯a_l)(b₁⋯b_m)`
/// sums over the ways of distributing the `b`'s into braces of the `a`'s,
/// leftovers multiplied in.
pub trait SymBraceAlgebra {
    fn dim(&self) -> usize;
    fn weight(&self, i: usize) -> u32;
    /// `a{b₁, …, b_k}` on basis elements.
    fn brace(&self, a: usize, bs: &[usize]) -> Lin<usize>;
}

/// A word in S^c(B): a sorted multiset of basis indices.
pub type SymWord = Vec<usize>;

pub fn sym_weight<A: SymBraceAlgebra>(alg: &A, w: &SymWord) -> u32 {
    w.iter().map(|&i| alg.weight(i)).sum()
}

fn sym_mul_words(parts: &[Lin<usize>], rest: &[usize]) -> Lin<SymWord> {
    let mut acc: Lin<SymWord> = Lin::basis(rest.to_vec());
    for p in parts {
        let mut next = Lin::zero();
        for (w, c) in acc.iter() {
            for (i, d) in p.iter() {
                let mut w2 = w.clone();
                w2.push(*i);
                w2.sort_unstable();
                next.add_term(w2, c * d);
            }
        }
        acc = next;
    }
    acc
}

pub fn koszul_product<A: SymBraceAlgebra>(alg: &A, x: &SymWord, y: &SymWord, max_weight: u32) -> Lin<SymWord> {
    let l = x.len();
    let m = y.len();
    let mut out = Lin::zero();
    let mut assign = vec![0usize; m];
    loop {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); l + 1];
        for (j, &a) in assign.iter().enumerate() {
            groups[a].push(y[j]);
        }
        let parts: Vec<Lin<usize>> = (0..l).map(|i| alg.brace(x[i], &groups[i + 1])).collect();
        if parts.iter().all(|p| !p.is_zero()) {
            out += &sym_mul_words(&parts, &groups[0]);
        }
        let mut i = 0;
        loop {
            if i == m {
                return out.filter(|w| sym_weight(alg, w) <= max_weight);
            }
            assign[i] += 1;
            if assign[i] <= l {
                break;
            }
            assign[i] = 0;
            i += 1;
        }
    }
}

pub fn koszul_product_lin<A: SymBraceAlgebra>(alg: &A, x: &Lin<SymWord>, y: &Lin<SymWord>, max_weight: u32) -> Lin<SymWord> {
    let mut out = Lin::zero();
    for (a, ca) in x.iter() {
        for (b, cb) in y.iter() {
            out.add_scaled(&koszul_product(alg, a, b, max_weight), &(ca * cb));
        }
    }
    out
}

/// Symmetric braces of a pre-Lie algebra, `a{b₁…b_k} = a{b₁…b_{k−1}}∘b_k −
/// Σ_i a{b₁…(b_i∘b_k)…b_{k−1}}`.
pub struct PreLieBraces {
    pub weights: Vec<u32>,
    /// `a ∘ b` on basis elements.
    pub table: BTreeMap<(usize, usize), Lin<usize>>,
    pub max_weight: u32,
}

impl PreLieBraces {
    pub fn circ(&self, a: &Lin<usize>, b: &Lin<usize>) -> Lin<usize> {
        let mut out = Lin::zero();
        for (i, ci) in a.iter() {
            for (j, cj) in b.iter() {
                if let Some(v) = self.table.get(&(*i, *j)) {
                    out.add_scaled(v, &(ci * cj));
                }
            }
        }
        out
    }

    fn brace_lin(&self, a: &Lin<usize>, bs: &[Lin<usize>]) -> Lin<usize> {
        let Some((last, init)) = bs.split_last() else {
            return a.clone();
        };
        let mut out = self.circ(&self.brace_lin(a, init), last);
        for i in 0..init.len() {
            let mut b2 = init.to_vec();
            b2[i] = self.circ(&init[i], last);
            out -= &self.brace_lin(a, &b2);
        }
        out
    }

    /// Truncated vector fields `x^a y^b ∂` on two variables, positive
    /// polynomial weight `a + b − 1`, with `f∂_i ∘ g∂_j = f ∂_i(g) ∂_j`.
    pub fn vector_fields(max_weight: u32) -> Self {
        let mut basis = Vec::new();
        for a in 0..=max_weight + 1 {
            for b in 0..=max_weight + 1 - a {
                for d in 0..2u32 {
                    if a + b >= 2 {
                        basis.push((a, b, d));
                    }
                }
            }
        }
        let index: BTreeMap<(u32, u32, u32), usize> = basis.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        let weights: Vec<u32> = basis.iter().map(|&(a, b, _)| a + b - 1).collect();
        let mut table = BTreeMap::new();
        for (i, &(a1, b1, d1)) in basis.iter().enumerate() {
            for (j, &(a2, b2, d2)) in basis.iter().enumerate() {
                // f ∂_{d1}(g)
                let (e, coef) = if d1 == 0 { (a2, a2) } else { (b2, b2) };
                if e == 0 {
                    continue;
                }
                let (na, nb) = if d1 == 0 { (a1 + a2 - 1, b1 + b2) } else { (a1 + a2, b1 + b2 - 1) };
                if let Some(&k) = index.get(&(na, nb, d2)) {
                    table.insert((i, j), Lin::term(k, q(coef as i64)));
                }
            }
        }
        PreLieBraces {
            weights,
            table,
            max_weight,
        }
    }
}

impl SymBraceAlgebra for PreLieBraces {
    fn dim(&self) -> usize {
        self.weights.len()
    }
    fn weight(&self, i: usize) -> u32 {
        self.weights[i]
    }
    fn brace(&self, a: usize, bs: &[usize]) -> Lin<usize> {
        let total: u32 = self.weights[a] + bs.iter().map(|&b| self.weights[b]).sum::<u32>();
        if total > self.max_weight {
            return Lin::zero();
        }
        let bl: Vec<Lin<usize>> = bs.iter().map(|&b| Lin::basis(b)).collect();
        self.brace_lin(&Lin::basis(a), &bl)
    }
}

/// The zero brace structure: `a{} = a` and all other braces vanish.
pub struct ZeroBraces {
    pub weights: Vec<u32>,
}

impl SymBraceAlgebra for ZeroBraces {
    fn dim(&self) -> usize {
        self.weights.len()
    }
    fn weight(&self, i: usize) -> u32 {
        self.weights[i]
    }
    fn brace(&self, a: usize, bs: &[usize]) -> Lin<usize> {
        if bs.is_empty() {
            Lin::basis(a)
        } else {
            Lin::zero()
        }
    }
}

/// A cochain coordinate of the center of `k[x]`: a cooperad element and
/// the exponents of the inputs, all positive.
pub type CenterKey = (CoElem, Vec<u32>);

/// The center of `k[x]` with zero bracket, `Hom(C^cu{n}(m) ⊗ (x k[x])^{⊗m}, k[x])`
/// twisted by the multiplication, which sits on the arity-2 ω element. The
/// complex is taken in one x-degree shift `s` (output
/// exponent minus total input exponent). Evaluation is restricted to total
/// input exponent at most `max_input`, which makes it a finite quotient
/// complex.
#[derive(Clone, Debug)]
pub struct CenterComplex {
    pub cooperad: CooperadData,
    pub n: i64,
    pub shift: i64,
    pub max_input: u32,
    pub max_arity: usize,
}

fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    if parts == 0 {
        return if total == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for first in 1..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

impl CenterComplex {
    pub fn new(n: i64, shift: i64, max_input: u32, max_arity: usize) -> Result<Self, String> {
        let base = crate::opcore::builtin_cooperad("coP_n", n, max_arity.max(2)).map_err(|e| e.to_string())?;
        Ok(CenterComplex {
            cooperad: crate::opcore::suspend(&base, n),
            n,
            shift,
            max_input,
            max_arity,
        })
    }

    pub fn keys(&self, m: usize) -> Vec<CenterKey> {
        let mut out = Vec::new();
        if m > self.max_arity {
            return out;
        }
        for c in self.cooperad.counital_basis(m) {
            for total in 0..=self.max_input {
                if total as i64 + self.shift < 0 {
                    continue;
                }
                for w in compositions(total, m) {
                    out.push((c.clone(), w));
                }
            }
        }
        out
    }

    pub fn all_keys(&self) -> Vec<CenterKey> {
        (0..=self.max_arity).flat_map(|m| self.keys(m)).collect()
    }

    /// Polyvector weight: arity minus the number of ω factors.
    pub fn key_weight(&self, k: &CenterKey) -> usize {
        k.0.arity() - k.0.omega_count()
    }

    /// `n` per unit of weight plus one per ω factor.
    pub fn key_degree(&self, k: &CenterKey) -> i64 {
        self.n * self.key_weight(k) as i64 + k.0.omega_count() as i64
    }

    /// The multiplication's coordinate.
    pub fn product_element(&self) -> CoElem {
        CoElem::mono(self.n, self.n, 2, vec![(0, 1)])
    }

    /// `σ·(c, w)` for the permutation `perm` of the inputs.
    fn act_key(&self, k: &CenterKey, perm: &[usize]) -> Lin<CenterKey> {
        let mut w = vec![0u32; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            w[p] = k.1[i];
        }
        k.0.act(perm).map_keys(|c| (c.clone(), w.clone()))
    }

    /// Projection of a cochain onto the equivariant cochains.
    pub fn symmetrize(&self, phi: &Lin<CenterKey>) -> Lin<CenterKey> {
        let mut out = Lin::zero();
        let mut done = std::collections::BTreeSet::new();
        for k in phi.keys() {
            let m = k.0.arity();
            let mut sorted = k.1.clone();
            sorted.sort_unstable();
            if !done.insert((m, sorted.clone())) {
                continue;
            }
            let perms = crate::gradedlin::permutations(m);
            let inv = q(1) / q(perms.len() as i64);
            let orbit: Vec<CenterKey> = self
                .keys(m)
                .into_iter()
                .filter(|k2| {
                    let mut s2 = k2.1.clone();
                    s2.sort_unstable();
                    s2 == sorted
                })
                .collect();
            for k2 in &orbit {
                let mut val = q(0);
                for perm in &perms {
                    for (k3, c3) in self.act_key(k2, perm).iter() {
                        val += &(c3 * &phi.coeff(k3));
                    }
                }
                if val != q(0) {
                    out.add_term(k2.clone(), val * &inv);
                }
            }
        }
        out
    }

    /// The twisted differential `[μ, φ]`, evaluated on every coordinate
    /// within range.
    pub fn d(&self, phi: &Lin<CenterKey>) -> Lin<CenterKey> {
        let mut out = Lin::zero();
        let mu = self.product_element();
        let deg_f = -mu.degree();
        for m in 1..=self.max_arity {
            for key in self.keys(m) {
                let (c, w) = &key;
                let mut val = q(0);
                for (upper, p, d) in self.cooperad.all_splits(c) {
                    let rest: Vec<usize> = (0..m).filter(|i| !upper.contains(i)).collect();
                    for ((r, u), coef) in d.iter() {
                        // μ above: the root is the cochain, two inputs merged
                        if *u == mu {
                            let mut wr: Vec<u32> = rest.iter().map(|&i| w[i]).collect();
                            wr.insert(p, w[upper[0]] + w[upper[1]]);
                            let k2 = (r.clone(), wr);
                            let s = sign_scalar((deg_f * r.degree()).rem_euclid(2) == 1);
                            val += &(coef * &s * &phi.coeff(&k2));
                        }
                        // μ below: the upper vertex is the cochain
                        if *r == mu && !upper.is_empty() {
                            let wu: Vec<u32> = upper.iter().map(|&i| w[i]).collect();
                            let k2 = (u.clone(), wu);
                            let deg_phi = -u.degree();
                            let s = sign_scalar((deg_phi * r.degree()).rem_euclid(2) == 1);
                            let t = -sign_scalar((deg_phi * deg_f).rem_euclid(2) == 1);
                            val += &(coef * &s * &t * &phi.coeff(&k2));
                        }
                    }
                }
                if val != q(0) {
                    out.add_term(key, val);
                }
            }
        }
        out
    }
}

/// Cohomology ranks of the equivariant center cochains, keyed by
/// `(weight, degree)`. Arities up to `max_arity` are built and only
/// arities below it are reported.
pub fn center_ranks(
    n: i64,
    shift: i64,
    max_input: u32,
    max_arity: usize,
    max_weight: usize,
) -> Result<BTreeMap<(usize, i64), usize>, String> {
    use crate::gradedlin::Echelon;
    let z = CenterComplex::new(n, shift, max_input, max_arity)?;
    let mut out = BTreeMap::new();
    for w in 0..=max_weight {
        let mut dims = Vec::new();
        let mut ranks = Vec::new();
        for m in 0..=max_arity {
            let mut ech = Echelon::new();
            let mut image = Echelon::new();
            for k in z.keys(m).into_iter().filter(|k| z.key_weight(k) == w) {
                let v = z.symmetrize(&Lin::basis(k));
                if ech.insert(v.clone()) {
                    image.insert(z.d(&v));
                }
            }
            dims.push(ech.rank());
            ranks.push(image.rank());
        }
        for m in w..max_arity {
            let h = dims[m] - ranks[m] - if m > 0 { ranks[m - 1] } else { 0 };
            if h > 0 {
                *out.entry((w, n * w as i64 + (m - w) as i64)).or_insert(0) += h;
            }
        }
    }
    Ok(out)
}

/// Center ranks in weights ≤ 1, keyed by degree.
pub fn center_low_weight_ranks(n: i64, shift: i64, max_input: u32, max_arity: usize) -> Result<BTreeMap<i64, usize>, String> {
    let mut out = BTreeMap::new();
    for ((_, deg), r) in center_ranks(n, shift, max_input, max_arity, 1)? {
        *out.entry(deg).or_insert(0) += r;
    }
    Ok(out)
}

/// Ranks of `Pol(k[x], n−1)` in weights ≤ `max_weight` and x-degree shift
/// `shift`, keyed by `(weight, degree)`.
pub fn polyvector_ranks(n: i64, shift: i64, max_weight: usize) -> BTreeMap<(usize, i64), usize> {
    let base = crate::cdga::CdgaPresentation::free(&[("x", 0)]);
    let pol = crate::polyvec::Polyvectors::absolute(&base, n - 1);
    let mut out = BTreeMap::new();
    let max_len = (shift.max(0) + max_weight as i64 + 1) as u32;
    for w in 0..=max_weight {
        let deg = n * w as i64;
        let r = pol
            .basis(deg, w as u32, max_len)
            .iter()
            .filter(|m| m.0[0] as i64 - m.0[1] as i64 == shift)
            .count();
        if r > 0 {
            out.insert((w, deg), r);
        }
    }
    out
}

/// Ranks of `Pol(k[x], n−1)` in weights ≤ 1, keyed by degree.
pub fn polyvector_low_weight_ranks(n: i64, shift: i64) -> BTreeMap<i64, usize> {
    let mut out = BTreeMap::new();
    for ((_, deg), r) in polyvector_ranks(n, shift, 1) {
        *out.entry(deg).or_insert(0) += r;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cobar::cobar;
    use crate::opcore::{builtin_cooperad, suspend};
    use proptest::prelude::*;

    fn unit(c: &CooperadData, m: usize) -> CoElem {
        CoElem::unit(c.n, c.k, m)
    }

    #[test]
    fn external_edge_differential_is_minus_internal_corolla() {
        let c = builtin_cooperad("coComm", 0, 4).unwrap();
        let op = brace_operad(&c, 4);
        let t = op.corolla(BrLabel::Ext(1, unit(&c, 1)), &[unit(&c, 0)]);
        let expected = op.corolla(BrLabel::Int(unit(&c, 2)), &[unit(&c, 0), unit(&c, 0)]);
        assert_eq!(op.d(&t), -expected);
    }

    #[test]
    fn understocked_internal_vertices_are_discarded() {
        let c = builtin_cooperad("coP_n_curved", 1, 3).unwrap();
        let op = brace_operad(&c, 3);
        let t = op.corolla(BrLabel::Ext(1, CoElem::c0(c.n, c.k)), &[]);
        let (tree, _) = t.iter().next().unwrap();
        let raw = tree.derivation(1, |l| op.fragments(l));
        assert!(!raw.is_zero());
        assert!(raw.keys().all(understocked));
        assert!(op.d(&t).is_zero());
    }

    #[test]
    fn brace_differential_squares_to_zero() {
        for n in [0i64, 1, 2] {
            for name in ["coP_n", "coP_n_curved"] {
                let c = builtin_cooperad(name, n, 4).unwrap();
                let rep = check_brace_d_squared(&brace_operad(&c, 4), 4);
                assert!(rep.passed(), "{} n={}\n{}", name, n, rep);
            }
        }
        let c = builtin_cooperad("coComm", 0, 4).unwrap();
        assert!(check_brace_d_squared(&brace_operad(&c, 4), 4).passed());
    }

    #[test]
    fn underlying_and_cw_maps_are_chain_maps() {
        for n in [0i64, 1, 2] {
            let c = builtin_cooperad("coP_n", n, 4).unwrap();
            let op = brace_operad(&c, 4);
            let src = cobar(&c, 4).unwrap();
            let rep = check_chain_map(&op, &src, &|g| underlying_image(&op, g), "underlying");
            assert!(rep.passed(), "n={}\n{}", n, rep);
            let src2 = cobar(&suspend(&builtin_cooperad("coP_n", n + 1, 4).unwrap(), 1), 4).unwrap();
            let top = TopIdentification::new(n, 4).unwrap();
            let rep = check_chain_map(&op, &src2, &|g| cw_generator_image(&op, &top, g), "cw");
            assert!(rep.passed(), "n={}\n{}", n, rep);
        }
    }

    #[test]
    fn curved_chain_maps_fail_only_on_the_curvature_generator() {
        let c = builtin_cooperad("coP_n_curved", 1, 3).unwrap();
        let op = brace_operad(&c, 3);
        let src = cobar(&c, 3).unwrap();
        let rep = check_chain_map(&op, &src, &|g| underlying_image(&op, g), "underlying");
        let bad: Vec<&String> = rep.entries.iter().filter(|e| !e.1.is_zero()).map(|e| &e.0).collect();
        assert_eq!(bad.len(), 1);
        assert!(bad[0].contains("c1"));
    }

    #[test]
    fn cw_images_of_low_generators() {
        let n = 1;
        let c = builtin_cooperad("coP_n", n, 3).unwrap();
        let op = brace_operad(&c, 3);
        let top = TopIdentification::new(n, 3).unwrap();
        let src = suspend(&builtin_cooperad("coP_n", n + 1, 3).unwrap(), 1);
        let bracket = CobarGen(CoElem::unit(n + 1, 1, 2));
        let img = cw_generator_image(&op, &top, &bracket);
        assert_eq!(img.len(), 2);
        let mut coefs: Vec<Scalar> = img.iter().map(|(_, k)| k.clone()).collect();
        coefs.sort();
        assert_eq!(coefs, vec![q(-1), q(1)]);
        for (t, _) in img.iter() {
            assert!(t.nodes().iter().all(|v| matches!(v.label, BrLabel::Ext(..))));
        }
        let prod = CobarGen(CoElem::mono(n + 1, 1, 2, vec![(0, 1)]));
        let img = cw_generator_image(&op, &top, &prod);
        assert_eq!(img.len(), 1);
        let (t, k) = img.iter().next().unwrap();
        assert!(*k == q(1) || *k == q(-1));
        assert!(matches!(t.nodes()[0].label, BrLabel::Int(_)));
        assert_eq!(t.nodes().len(), 3);
        assert!(cw_generator_image(&op, &top, &CobarGen(CoElem::unit(n + 1, 1, 3))).is_zero());
        assert!(src.contains(&prod.0));
    }

    fn pre_lie() -> PreLieBraces {
        PreLieBraces::vector_fields(3)
    }

    fn word() -> impl Strategy<Value = SymWord> {
        let d = pre_lie().dim();
        proptest::collection::vec(0..d, 0..3).prop_map(|mut v| {
            v.sort_unstable();
            v
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn koszul_product_is_associative(x in word(), y in word(), z in word()) {
            let a = pre_lie();
            let w = 3;
            let xy = koszul_product(&a, &x, &y, w);
            let left = koszul_product_lin(&a, &xy, &Lin::basis(z.clone()), w);
            let yz = koszul_product(&a, &y, &z, w);
            let right = koszul_product_lin(&a, &Lin::basis(x), &yz, w);
            prop_assert_eq!(left, right);
        }

        #[test]
        fn koszul_product_has_unit(x in word()) {
            let a = pre_lie();
            prop_assert_eq!(koszul_product(&a, &Vec::new(), &x, 3), Lin::basis(x.clone()).filter(|w| sym_weight(&a, w) <= 3));
            prop_assert_eq!(koszul_product(&a, &x, &Vec::new(), 3), Lin::basis(x.clone()).filter(|w| sym_weight(&a, w) <= 3));
        }
    }

    #[test]
    fn koszul_commutator_is_the_lie_bracket() {
        let a = pre_lie();
        for i in 0..a.dim() {
            for j in 0..a.dim() {
                let lhs = koszul_product(&a, &vec![i], &vec![j], 3) - koszul_product(&a, &vec![j], &vec![i], 3);
                let br = a.circ(&Lin::basis(i), &Lin::basis(j)) - a.circ(&Lin::basis(j), &Lin::basis(i));
                let rhs = br.filter(|&k| a.weight(k) <= 3).map_keys(|&k| vec![k]);
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn zero_braces_give_the_symmetric_product() {
        let a = ZeroBraces { weights: vec![1, 1, 2] };
        let p = koszul_product(&a, &vec![0, 2], &vec![0, 1], 10);
        assert_eq!(p, Lin::basis(vec![0, 0, 1, 2]));
    }

    #[test]
    fn center_differential_squares_to_zero() {
        for n in [0i64, 1, 2] {
            let z = CenterComplex::new(n, 0, 3, 4).unwrap();
            for k in z.all_keys() {
                let v = z.symmetrize(&Lin::basis(k.clone()));
                assert!(z.d(&z.d(&v)).is_zero(), "n={} {:?}", n, k);
            }
        }
    }

    #[test]
    fn center_of_k_is_weight_zero() {
        for n in [0i64, 1] {
            let r = center_ranks(n, 0, 0, 3, 2).unwrap();
            assert_eq!(r, BTreeMap::from([((0, 0), 1)]));
        }
    }

    #[test]
    fn center_ranks_match_polyvectors() {
        for n in [0i64, 1, 2] {
            for s in -1..=2 {
                assert_eq!(center_ranks(n, s, 4, 4, 2).unwrap(), polyvector_ranks(n, s, 2), "n={} s={}", n, s);
            }
        }
        assert_eq!(polyvector_low_weight_ranks(1, 0), BTreeMap::from([(0, 1), (1, 1)]));
        assert_eq!(polyvector_low_weight_ranks(0, -1), BTreeMap::from([(0, 1)]));
    }
}
