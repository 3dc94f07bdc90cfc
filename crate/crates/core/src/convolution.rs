//! Convolution algebras of a cooperad with values in endomorphisms of
//! finite complexes, weight-filtered (curved) L∞ algebras, Maurer–Cartan
//! residuals and twisting, and the L∞ algebra of a preLie→ triple.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::gradedlin::{
    factorial, kernel_basis, koszul_parity, permutation_parity, permutations, q, sign_scalar,
    Bigraded, Lin,
    LinearMap, Scalar,
};
use crate::cobar::{CobarGen, CobarOperad, CobarTree};
use crate::opcore::{Body, CoElem, CooperadData, Shape, ShapeInput};
use crate::treecomb::Input;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConvError {
    #[error("Maurer–Cartan computations need a weight truncation on this algebra")]
    NotPronilpotent,
    #[error("not a Maurer–Cartan element; residual {0}")]
    NotMaurerCartan(String),
    #[error("projection is not left inverse to the section")]
    NotASection,
    #[error("complex mismatch: {0}")]
    Mismatch(String),
}

/// A finite-dimensional cochain complex with a named basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteComplex {
    pub names: Vec<String>,
    pub degrees: Vec<i64>,
    /// Differential on basis vectors, degree +1.
    pub d: Vec<Lin<usize>>,
}

impl FiniteComplex {
    pub fn new(names: Vec<String>, degrees: Vec<i64>) -> Self {
        let n = names.len();
        FiniteComplex {
            names,
            degrees,
            d: vec![Lin::zero(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.degrees.len()
    }

    pub fn degree_of(&self, v: &Lin<usize>) -> Option<i64> {
        let mut it = v.keys().map(|&i| self.degrees[i]);
        let first = it.next()?;
        it.all(|d| d == first).then_some(first)
    }

    pub fn apply_d(&self, v: &Lin<usize>) -> Lin<usize> {
        v.map_linear(|&i| self.d[i].clone())
    }

    pub fn is_valid(&self) -> bool {
        (0..self.dim()).all(|i| {
            self.apply_d(&self.d[i]).is_zero()
                && self.d[i].keys().all(|&j| self.degrees[j] == self.degrees[i] + 1)
        })
    }
}

/// A finite-dimensional graded commutative algebra with unit.
#[derive(Clone, Debug)]
pub struct FiniteCommAlgebra {
    pub complex: FiniteComplex,
    pub unit: usize,
    pub mult: Vec<Vec<Lin<usize>>>,
    /// Sorted variable indices of each basis monomial.
    pub monomials: Vec<Vec<usize>>,
    pub var_degrees: Vec<i64>,
}

impl FiniteCommAlgebra {
    /// Monomials of total polynomial degree ≤ `max_len` in variables of the
    /// given cohomological degrees, with longer products set to zero.
    pub fn truncated_polynomial(vars: &[(&str, i64)], max_len: usize) -> Self {
        let mut monos: Vec<Vec<usize>> = vec![Vec::new()];
        for len in 1..=max_len {
            let mut next = Vec::new();
            for mono in monos.iter().filter(|m| m.len() == len - 1) {
                let start = mono.last().copied().unwrap_or(0);
                for v in start..vars.len() {
                    if vars[v].1.rem_euclid(2) == 1 && mono.last() == Some(&v) {
                        continue;
                    }
                    let mut m = mono.clone();
                    m.push(v);
                    next.push(m);
                }
            }
            monos.extend(next);
        }
        let index: HashMap<Vec<usize>, usize> =
            monos.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        let names = monos
            .iter()
            .map(|m| {
                if m.is_empty() {
                    "1".to_string()
                } else {
                    m.iter().map(|&v| vars[v].0).collect::<Vec<_>>().join("")
                }
            })
            .collect();
        let degrees = monos
            .iter()
            .map(|m| m.iter().map(|&v| vars[v].1).sum())
            .collect();
        let mut mult = vec![vec![Lin::zero(); monos.len()]; monos.len()];
        for (i, a) in monos.iter().enumerate() {
            for (j, b) in monos.iter().enumerate() {
                let mut cat = a.clone();
                cat.extend_from_slice(b);
                let degs: Vec<i64> = cat.iter().map(|&v| vars[v].1).collect();
                let mut order: Vec<usize> = (0..cat.len()).collect();
                order.sort_by_key(|&t| (cat[t], t));
                let mut perm = vec![0usize; cat.len()];
                for (pos, &t) in order.iter().enumerate() {
                    perm[t] = pos;
                }
                let sorted: Vec<usize> = order.iter().map(|&t| cat[t]).collect();
                let odd_repeat = sorted
                    .windows(2)
                    .any(|w| w[0] == w[1] && vars[w[0]].1.rem_euclid(2) == 1);
                if odd_repeat {
                    continue;
                }
                if let Some(&k) = index.get(&sorted) {
                    mult[i][j] = Lin::term(k, sign_scalar(koszul_parity(&perm, &degs)));
                }
            }
        }
        FiniteCommAlgebra {
            complex: FiniteComplex::new(names, degrees),
            unit: 0,
            mult,
            monomials: monos,
            var_degrees: vars.iter().map(|v| v.1).collect(),
        }
    }

    pub fn var(&self, v: usize) -> Lin<usize> {
        let i = self.monomials.iter().position(|m| m == &[v]).expect("variable present");
        Lin::basis(i)
    }

    /// Biderivation of degree `deg` extending the given brackets of
    /// variables: {u·v, w} = u{v, w} + (−1)^{|v||w|}{u, w}v and
    /// {v, w} = −(−1)^{(|v|+deg)(|w|+deg)}{w, v}.
    pub fn extend_bracket(&self, deg: i64, gen: &dyn Fn(usize, usize) -> Lin<usize>) -> Vec<Vec<Lin<usize>>> {
        let n = self.monomials.len();
        let dg = &self.complex.degrees;
        let mut out = vec![vec![Lin::zero(); n]; n];
        // {variable, monomial} by the right Leibniz rule
        let mut var_mono: HashMap<(usize, usize), Lin<usize>> = HashMap::new();
        for v in 0..self.var_degrees.len() {
            for j in 0..n {
                let mono = &self.monomials[j];
                let mut acc = Lin::zero();
                let mut before = Lin::basis(self.unit);
                let mut before_deg = 0i64;
                for (t, &w) in mono.iter().enumerate() {
                    let after: Lin<usize> = mono[t + 1..]
                        .iter()
                        .fold(Lin::basis(self.unit), |a, &u| self.multiply(&a, &self.var(u)));
                    // {v, b·w·a} = (−1)^{(|v|+deg)|b|} b{v, w}a
                    let s = sign_scalar(((self.var_degrees[v] + deg) * before_deg).rem_euclid(2) == 1);
                    let term = self.multiply(&self.multiply(&before, &gen(v, w)), &after);
                    acc.add_scaled(&term, &s);
                    before = self.multiply(&before, &self.var(w));
                    before_deg += self.var_degrees[w];
                }
                var_mono.insert((v, j), acc);
            }
        }
        for i in 0..n {
            for j in 0..n {
                let mono = &self.monomials[i];
                let mut acc = Lin::zero();
                let mut after_deg = 0i64;
                // {a·v·b, w} ∋ (−1)^{|b|(|w|+deg)} a{v, w}b
                for t in (0..mono.len()).rev() {
                    let v = mono[t];
                    let a: Lin<usize> = mono[..t]
                        .iter()
                        .fold(Lin::basis(self.unit), |acc, &u| self.multiply(&acc, &self.var(u)));
                    let b: Lin<usize> = mono[t + 1..]
                        .iter()
                        .fold(Lin::basis(self.unit), |acc, &u| self.multiply(&acc, &self.var(u)));
                    let s = sign_scalar((after_deg * (dg[j] + deg)).rem_euclid(2) == 1);
                    let vw = &var_mono[&(v, j)];
                    let term = self.multiply(&self.multiply(&a, vw), &b);
                    acc.add_scaled(&term, &s);
                    after_deg += self.var_degrees[v];
                }
                out[i][j] = acc;
            }
        }
        out
    }

    pub fn multiply(&self, a: &Lin<usize>, b: &Lin<usize>) -> Lin<usize> {
        let mut out = Lin::zero();
        for (i, x) in a.iter() {
            for (j, y) in b.iter() {
                out.add_scaled(&self.mult[*i][*j], &(x * y));
            }
        }
        out
    }
}

/// Which part of the cooperad a convolution space is built on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Domain {
    /// C̄: the usual convolution algebra.
    Reduced,
    /// C = C̄ ⊕ 1.
    Coaugmented,
    /// C^cu, with the extra unit in arity 0.
    Counital,
}

/// Basis functional `x ⊗ a_{w_1} ⊗ … ↦ e_out`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConvKey {
    pub x: CoElem,
    pub word: Vec<u8>,
    pub out: u8,
}

impl fmt::Display for ConvKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w: Vec<String> = self.word.iter().map(|c| c.to_string()).collect();
        write!(f, "[{};{}->{}]", self.x, w.join(","), self.out)
    }
}

/// Hom(D(src), tgt) for a domain D of the cooperad, truncated at an arity cap.
#[derive(Clone, Debug)]
pub struct ConvSpace {
    pub cooperad: CooperadData,
    pub domain: Domain,
    pub src: FiniteComplex,
    pub tgt: FiniteComplex,
    pub cap: usize,
}

type Table = HashMap<(CoElem, Vec<u8>), Lin<usize>>;

fn words(dim: usize, m: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for _ in 0..m {
        let mut next = Vec::with_capacity(out.len() * dim);
        for w in &out {
            for a in 0..dim {
                let mut v = w.clone();
                v.push(a as u8);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

fn in_domain(domain: Domain, x: &CoElem) -> bool {
    match domain {
        Domain::Reduced => !(x.is_unit() && x.arity() <= 1),
        Domain::Coaugmented => !(x.is_unit() && x.arity() == 0),
        Domain::Counital => true,
    }
}

impl ConvSpace {
    pub fn new(cooperad: &CooperadData, domain: Domain, src: &FiniteComplex, tgt: &FiniteComplex, cap: usize) -> Self {
        ConvSpace {
            cooperad: cooperad.clone(),
            domain,
            src: src.clone(),
            tgt: tgt.clone(),
            cap: cap.min(cooperad.cap),
        }
    }

    /// Conv(C; A).
    pub fn conv(cooperad: &CooperadData, a: &FiniteComplex, cap: usize) -> Self {
        Self::new(cooperad, Domain::Reduced, a, a, cap)
    }

    pub fn elements(&self, m: usize) -> Vec<CoElem> {
        let b = match self.domain {
            Domain::Reduced => self.cooperad.reduced_basis(m),
            _ => self.cooperad.counital_basis(m),
        };
        b.into_iter().filter(|x| in_domain(self.domain, x)).collect()
    }

    pub fn basis(&self, m: usize) -> Vec<ConvKey> {
        let mut out = Vec::new();
        for x in self.elements(m) {
            for w in words(self.src.dim(), m) {
                for o in 0..self.tgt.dim() {
                    out.push(ConvKey {
                        x: x.clone(),
                        word: w.clone(),
                        out: o as u8,
                    });
                }
            }
        }
        out
    }

    pub fn key_degree(&self, k: &ConvKey) -> i64 {
        self.tgt.degrees[k.out as usize]
            - k.x.degree()
            - k.word.iter().map(|&a| self.src.degrees[a as usize]).sum::<i64>()
    }

    /// Weight: one plus the number of cobrackets, plus one or two for the
    /// curved elements.
    pub fn key_weight(&self, k: &ConvKey) -> i64 {
        conv_weight(&k.x)
    }

    pub fn homogeneous_parts(&self, f: &Lin<ConvKey>) -> BTreeMap<i64, Lin<ConvKey>> {
        let mut out: BTreeMap<i64, Lin<ConvKey>> = BTreeMap::new();
        for (k, c) in f.iter() {
            out.entry(self.key_degree(k)).or_insert_with(Lin::zero).add_term(k.clone(), c.clone());
        }
        out
    }

    fn table(&self, f: &Lin<ConvKey>) -> Table {
        let mut t: Table = HashMap::new();
        for (k, c) in f.iter() {
            t.entry((k.x.clone(), k.word.clone()))
                .or_insert_with(Lin::zero)
                .add_term(k.out as usize, c.clone());
        }
        t
    }

    /// Value `f(x)(args)` for vector arguments, extended multilinearly.
    fn eval(table: &Table, x: &CoElem, args: &[Lin<usize>]) -> Lin<usize> {
        let mut out = Lin::zero();
        let mut combos: Vec<(Vec<u8>, Scalar)> = vec![(Vec::new(), q(1))];
        for a in args {
            let mut next = Vec::new();
            for (w, c) in &combos {
                for (i, ci) in a.iter() {
                    let mut v = w.clone();
                    v.push(*i as u8);
                    next.push((v, c * ci));
                }
            }
            combos = next;
            if combos.is_empty() {
                return out;
            }
        }
        for (w, c) in combos {
            if let Some(v) = table.get(&(x.clone(), w)) {
                out.add_scaled(v, &c);
            }
        }
        out
    }

    fn collect(&self, mut value: impl FnMut(&CoElem, &[u8]) -> Lin<usize>) -> Lin<ConvKey> {
        let mut out = Lin::zero();
        for m in 0..=self.cap {
            for x in self.elements(m) {
                for w in words(self.src.dim(), m) {
                    for (o, c) in value(&x, &w).iter() {
                        out.add_term(
                            ConvKey {
                                x: x.clone(),
                                word: w.clone(),
                                out: *o as u8,
                            },
                            c.clone(),
                        );
                    }
                }
            }
        }
        out
    }

    /// Reynolds projection onto S_m-equivariant maps.
    pub fn symmetrize(&self, f: &Lin<ConvKey>) -> Lin<ConvKey> {
        let t = self.table(f);
        self.collect(|x, w| {
            let m = w.len();
            let degs: Vec<i64> = w.iter().map(|&a| self.src.degrees[a as usize]).collect();
            let mut out = Lin::zero();
            for perm in permutations(m) {
                let mut w2 = vec![0u8; m];
                for i in 0..m {
                    w2[perm[i]] = w[i];
                }
                let s = sign_scalar(koszul_parity(&perm, &degs));
                let mut inv = vec![0usize; m];
                for i in 0..m {
                    inv[perm[i]] = i;
                }
                for (x2, c) in x.act(&inv).iter() {
                    if let Some(v) = t.get(&(x2.clone(), w2.clone())) {
                        out.add_scaled(v, &(c * &s));
                    }
                }
            }
            out.scale(&(q(1) / factorial(m)))
        })
    }

    pub fn is_equivariant(&self, f: &Lin<ConvKey>) -> bool {
        &self.symmetrize(f) == f
    }

    /// Internal differential: d_tgt ∘ f − (−1)^{|f(x)|} f(x) ∘ d_src.
    pub fn d(&self, f: &Lin<ConvKey>) -> Lin<ConvKey> {
        let t = self.table(f);
        let parts = self.homogeneous_parts(f);
        let mut out = Lin::zero();
        for (deg, part) in parts {
            let tp = self.table(&part);
            out += &self.collect(|x, w| {
                let mut v = Lin::zero();
                if let Some(val) = tp.get(&(x.clone(), w.to_vec())) {
                    v += &self.tgt.apply_d(val);
                }
                let fx = deg + x.degree();
                let mut prefix = 0i64;
                for i in 0..w.len() {
                    let mut args: Vec<Lin<usize>> =
                        w.iter().map(|&a| Lin::basis(a as usize)).collect();
                    args[i] = self.src.d[w[i] as usize].clone();
                    let s = sign_scalar((fx + 1 + prefix).rem_euclid(2) == 1);
                    v.add_scaled(&Self::eval(&tp, x, &args), &s);
                    prefix += self.src.degrees[w[i] as usize];
                }
                v
            });
        }
        let _ = t;
        out
    }

    pub fn degree_of(&self, f: &Lin<ConvKey>) -> Option<i64> {
        let parts = self.homogeneous_parts(f);
        if parts.len() == 1 {
            parts.keys().next().copied()
        } else {
            None
        }
    }

    /// θ composed with the unit: `c ↦ θ(c)·id` on arity-one elements.
    pub fn curvature(&self) -> Lin<ConvKey> {
        let mut out = Lin::zero();
        if !self.cooperad.curved || self.cap < 1 {
            return out;
        }
        for x in self.elements(1) {
            let th = self.cooperad.theta(&x);
            if th == q(0) {
                continue;
            }
            for a in 0..self.src.dim() {
                out.add_term(
                    ConvKey {
                        x: x.clone(),
                        word: vec![a as u8],
                        out: a as u8,
                    },
                    th.clone(),
                );
            }
        }
        out
    }
}

/// Additive weight: arity − 1 plus the number of cobrackets, with the
/// curved elements placed so that every decomposition preserves it.
pub fn conv_weight(x: &CoElem) -> i64 {
    match x.body {
        Body::C0 => 1,
        Body::C1 => 3,
        Body::Mono(_) => x.arity() as i64 - 1 + x.omega_count() as i64,
    }
}

/// `outer ∘ inner`: the sum over two-vertex trees of `f(root)` with the
/// output of `g(upper)` plugged into the marked input.
pub fn insert(outer: &ConvSpace, f: &Lin<ConvKey>, inner: &ConvSpace, g: &Lin<ConvKey>) -> Lin<ConvKey> {
    let mut out = Lin::zero();
    for (_, fp) in outer.homogeneous_parts(f) {
        for (gd, gp) in inner.homogeneous_parts(g) {
            out += &insert_homogeneous(outer, &fp, inner, &gp, gd);
        }
    }
    out
}

fn insert_homogeneous(outer: &ConvSpace, f: &Lin<ConvKey>, inner: &ConvSpace, g: &Lin<ConvKey>, gdeg: i64) -> Lin<ConvKey> {
    let tf = outer.table(f);
    let tg = inner.table(g);
    let reduced = outer.domain == Domain::Reduced;
    let src = &outer.src;
    outer.collect(|x, w| {
        let m = w.len();
        let splits = if reduced {
            outer.cooperad.reduced_splits(x)
        } else {
            outer.cooperad.all_splits(x)
        };
        let mut v = Lin::zero();
        for (upper, p, d) in splits {
            let rest: Vec<usize> = (0..m).filter(|i| !upper.contains(i)).collect();
            let mut planar: Vec<usize> = rest[..p].to_vec();
            planar.extend_from_slice(&upper);
            planar.extend_from_slice(&rest[p..]);
            let mut perm = vec![0usize; m];
            for (pos, &leaf) in planar.iter().enumerate() {
                perm[leaf] = pos;
            }
            let degs: Vec<i64> = w.iter().map(|&a| src.degrees[a as usize]).collect();
            let reorder = koszul_parity(&perm, &degs);
            let before: i64 = rest[..p].iter().map(|&i| degs[i]).sum();
            let uw: Vec<u8> = upper.iter().map(|&i| w[i]).collect();
            for ((r, u), c) in d.iter() {
                if !in_domain(outer.domain, r) || !in_domain(inner.domain, u) {
                    continue;
                }
                let Some(gu) = tg.get(&(u.clone(), uw.clone())) else {
                    continue;
                };
                let g_out = gdeg + u.degree();
                let odd = reorder
                    ^ ((gdeg * r.degree()).rem_euclid(2) == 1)
                    ^ ((g_out * before).rem_euclid(2) == 1);
                let mut args: Vec<Lin<usize>> = rest[..p].iter().map(|&i| Lin::basis(w[i] as usize)).collect();
                args.push(gu.clone());
                args.extend(rest[p..].iter().map(|&i| Lin::basis(w[i] as usize)));
                v.add_scaled(&ConvSpace::eval(&tf, r, &args), &(c * sign_scalar(odd)));
            }
        }
        v
    })
}

/// `f{g₁, …, g_k}`: the sum over pitchforks whose root has exactly the k
/// top vertices as inputs, the i-th top labeled by `g_i`.
pub fn brace_insert(outer: &ConvSpace, f: &Lin<ConvKey>, inner: &ConvSpace, gs: &[Lin<ConvKey>]) -> Lin<ConvKey> {
    let k = gs.len();
    let tf = outer.table(f);
    let parts: Vec<Vec<(i64, Table)>> = gs
        .iter()
        .map(|g| {
            inner
                .homogeneous_parts(g)
                .into_iter()
                .map(|(d, p)| (d, inner.table(&p)))
                .collect()
        })
        .collect();
    let src = &inner.src;
    inner.collect(|x, w| {
        let m = w.len();
        let degs: Vec<i64> = w.iter().map(|&a| src.degrees[a as usize]).collect();
        let mut v = Lin::zero();
        // ordered distributions of the leaves over the k tops
        let total = k.pow(m as u32);
        for code in 0..total.max(if k == 0 { 1 } else { 0 }) {
            let mut assign = vec![0usize; m];
            let mut cc = code;
            for a in assign.iter_mut() {
                *a = cc % k.max(1);
                cc /= k.max(1);
            }
            if k == 0 && m > 0 {
                continue;
            }
            let blocks: Vec<Vec<usize>> = (0..k).map(|j| (0..m).filter(|&i| assign[i] == j).collect()).collect();
            let shape = Shape {
                inputs: blocks
                    .iter()
                    .map(|b| ShapeInput::Sub(Shape { inputs: b.iter().map(|&i| ShapeInput::Slot(i)).collect() }))
                    .collect(),
            };
            let planar: Vec<usize> = blocks.iter().flatten().copied().collect();
            let mut perm = vec![0usize; m];
            for (pos, &leaf) in planar.iter().enumerate() {
                perm[leaf] = pos;
            }
            let reorder = koszul_parity(&perm, &degs);
            for (labels, c) in x.cocompose(&shape).iter() {
                if !in_domain(outer.domain, &labels[0]) {
                    continue;
                }
                if labels[1..].iter().any(|u| !in_domain(inner.domain, u)) {
                    continue;
                }
                // choose homogeneous parts of each g
                let mut combos: Vec<(Vec<Lin<usize>>, bool, i64)> = vec![(Vec::new(), reorder, 0)];
                let mut label_prefix = labels[0].degree();
                let mut input_prefix = 0i64;
                for j in 0..k {
                    let u = &labels[j + 1];
                    let bw: Vec<u8> = blocks[j].iter().map(|&i| w[i]).collect();
                    let bdeg: i64 = blocks[j].iter().map(|&i| degs[i]).sum();
                    let mut next = Vec::new();
                    for (args, odd, _) in &combos {
                        for (gd, tg) in &parts[j] {
                            if let Some(val) = tg.get(&(u.clone(), bw.clone())) {
                                let out_deg = gd + u.degree();
                                let s = odd
                                    ^ ((gd * label_prefix).rem_euclid(2) == 1)
                                    ^ ((out_deg * input_prefix).rem_euclid(2) == 1);
                                let mut a2 = args.clone();
                                a2.push(val.clone());
                                next.push((a2, s, 0));
                            }
                        }
                    }
                    combos = next;
                    label_prefix += u.degree();
                    input_prefix += bdeg;
                }
                for (args, odd, _) in combos {
                    v.add_scaled(&ConvSpace::eval(&tf, &labels[0], &args), &(c * sign_scalar(odd)));
                }
            }
        }
        v
    })
}

/// Convolution Lie bracket `f•g − (−1)^{|f||g|} g•f` on one space.
pub fn conv_bracket(s: &ConvSpace, f: &Lin<ConvKey>, g: &Lin<ConvKey>) -> Lin<ConvKey> {
    let mut out = Lin::zero();
    for (fd, fp) in s.homogeneous_parts(f) {
        for (gd, gp) in s.homogeneous_parts(g) {
            out += &insert(s, &fp, s, &gp);
            out.add_scaled(&insert(s, &gp, s, &fp), &sign_scalar((fd * gd).rem_euclid(2) == 0));
        }
    }
    out
}

pub fn prelie_product(s: &ConvSpace, f: &Lin<ConvKey>, g: &Lin<ConvKey>) -> Lin<ConvKey> {
    insert(s, f, s, g)
}

/// The operad map ΩC → End_A sending sx to f(x), evaluated tree by tree.
pub struct EndMorphism<'a> {
    space: &'a ConvSpace,
    table: Table,
}

impl<'a> EndMorphism<'a> {
    pub fn new(space: &'a ConvSpace, f: &Lin<ConvKey>) -> Self {
        EndMorphism {
            space,
            table: space.table(f),
        }
    }

    /// `T(a_{w_1}, …, a_{w_m})` with leaf `l` fed by `a_{w_{l-1}}`.
    pub fn eval_tree(&self, t: &CobarTree, w: &[u8]) -> Lin<usize> {
        if t.is_identity() {
            return Lin::basis(w[0] as usize);
        }
        let degs: Vec<i64> = w.iter().map(|&a| self.space.src.degrees[a as usize]).collect();
        let (val, _, _, order) = self.eval_node(t, 0, w, &degs);
        let mut perm = vec![0usize; order.len()];
        for (pos, &l) in order.iter().enumerate() {
            perm[l as usize - 1] = pos;
        }
        val.scale(&sign_scalar(koszul_parity(&perm, &degs)))
    }

    fn eval_node(&self, t: &CobarTree, v: usize, w: &[u8], degs: &[i64]) -> (Lin<usize>, i64, i64, Vec<u32>) {
        let node = &t.nodes()[v];
        let mut args = Vec::new();
        let mut odd = false;
        let mut raw_before = 0i64;
        let mut label_total = node.label.0.degree() + 1;
        let mut raw_total = 0i64;
        let mut order = Vec::new();
        for i in &node.inputs {
            let (val, labels, raw, leaves) = match i {
                Input::Leaf(l) => (Lin::basis(w[*l as usize - 1] as usize), 0, degs[*l as usize - 1], vec![*l]),
                Input::Node(c) => self.eval_node(t, *c, w, degs),
            };
            odd ^= (labels * raw_before).rem_euclid(2) == 1;
            raw_before += raw;
            raw_total += raw;
            label_total += labels;
            order.extend(leaves);
            args.push(val);
        }
        let val = ConvSpace::eval(&self.table, &node.label.0, &args).scale(&sign_scalar(odd));
        (val, label_total, raw_total, order)
    }

    /// φ(d sx) − ∂φ(sx) on every generator; zero exactly when φ is a chain map.
    pub fn defect(&self, op: &CobarOperad) -> Lin<ConvKey> {
        let s = self.space;
        s.collect(|x, w| {
            if !op.cooperad.contains(x) || (x.is_unit() && x.arity() <= 1) {
                return Lin::zero();
            }
            let g = CobarGen(x.clone());
            let mut v = Lin::zero();
            for (t, c) in op.d_generator(&g).iter() {
                v.add_scaled(&self.eval_tree(t, w), c);
            }
            let o_deg = x.degree() + 1;
            let args: Vec<Lin<usize>> = w.iter().map(|&a| Lin::basis(a as usize)).collect();
            v -= &s.tgt.apply_d(&ConvSpace::eval(&self.table, x, &args));
            let mut prefix = 0i64;
            for i in 0..w.len() {
                let mut a2 = args.clone();
                a2[i] = s.src.d[w[i] as usize].clone();
                let sg = sign_scalar((o_deg + prefix).rem_euclid(2) == 1);
                v.add_scaled(&ConvSpace::eval(&self.table, x, &a2), &sg);
                prefix += s.src.degrees[w[i] as usize];
            }
            v
        })
    }
}

// ---------------------------------------------------------------------------
// Weight-filtered L∞ algebras.

/// A (possibly curved) L∞ algebra on a bigraded basis with brackets of
/// degree 2−k, graded antisymmetric and multilinear.
pub trait Linfty {
    type B: Clone + Ord + fmt::Debug;
    fn degree(&self, b: &Self::B) -> i64;
    fn weight(&self, b: &Self::B) -> i64;
    /// Brackets vanish above this arity.
    fn max_arity(&self) -> usize;
    fn curvature(&self) -> Lin<Self::B> {
        Lin::zero()
    }
    /// `[x₁, …, x_k]_k` for k ≥ 1.
    fn bracket(&self, args: &[Lin<Self::B>]) -> Lin<Self::B>;
    /// Truncation weight W; terms of weight above W are dropped.
    fn weight_cap(&self) -> Option<i64>;
    /// Whether MC computations are meaningful without a weight cap.
    fn pronilpotent(&self) -> bool {
        true
    }

    fn truncate(&self, v: Lin<Self::B>) -> Lin<Self::B> {
        match self.weight_cap() {
            Some(w) => v.filter(|b| self.weight(b) <= w),
            None => v,
        }
    }
}

fn power_bracket<G: Linfty>(g: &G, x: &Lin<G::B>, k: usize, tail: &[Lin<G::B>]) -> Lin<G::B> {
    let mut args: Vec<Lin<G::B>> = vec![x.clone(); k];
    args.extend_from_slice(tail);
    if args.len() > g.max_arity() || args.is_empty() {
        return Lin::zero();
    }
    g.bracket(&args)
}

/// θ + dx + Σ_{n≥2} (1/n!)[x, …, x]_n, truncated at the weight cap.
pub fn mc_residual<G: Linfty>(g: &G, x: &Lin<G::B>) -> Result<Lin<G::B>, ConvError> {
    if !g.pronilpotent() && g.weight_cap().is_none() {
        return Err(ConvError::NotPronilpotent);
    }
    let mut out = g.curvature();
    let kmax = g.max_arity();
    for k in 1..=kmax {
        let b = power_bracket(g, x, k, &[]);
        out.add_scaled(&b, &(q(1) / factorial(k)));
    }
    Ok(g.truncate(out))
}

/// `g` twisted by a Maurer–Cartan element.
#[derive(Clone, Debug)]
pub struct Twisted<'a, G: Linfty> {
    pub base: &'a G,
    pub x: Lin<G::B>,
    pub residual: Lin<G::B>,
}

pub fn twist<'a, G: Linfty>(g: &'a G, x: &Lin<G::B>) -> Result<Twisted<'a, G>, ConvError> {
    let r = mc_residual(g, x)?;
    if !r.is_zero() {
        return Err(ConvError::NotMaurerCartan(format!("{:?}", r)));
    }
    Ok(Twisted {
        base: g,
        x: x.clone(),
        residual: r,
    })
}

/// Twisting without the MC requirement: the curvature becomes the residual.
pub fn twist_curved<'a, G: Linfty>(g: &'a G, x: &Lin<G::B>) -> Result<Twisted<'a, G>, ConvError> {
    let r = mc_residual(g, x)?;
    Ok(Twisted {
        base: g,
        x: x.clone(),
        residual: r,
    })
}

impl<G: Linfty> Linfty for Twisted<'_, G> {
    type B = G::B;
    fn degree(&self, b: &G::B) -> i64 {
        self.base.degree(b)
    }
    fn weight(&self, b: &G::B) -> i64 {
        self.base.weight(b)
    }
    fn max_arity(&self) -> usize {
        self.base.max_arity()
    }
    fn curvature(&self) -> Lin<G::B> {
        self.residual.clone()
    }
    fn bracket(&self, args: &[Lin<G::B>]) -> Lin<G::B> {
        let mut out = Lin::zero();
        let kmax = self.base.max_arity();
        for k in 0..=kmax {
            if k + args.len() > self.base.max_arity() {
                break;
            }
            let b = power_bracket(self.base, &self.x, k, args);
            out.add_scaled(&b, &(q(1) / factorial(k)));
        }
        self.base.truncate(out)
    }
    fn weight_cap(&self) -> Option<i64> {
        self.base.weight_cap()
    }
    fn pronilpotent(&self) -> bool {
        self.base.pronilpotent()
    }
}

/// ker p with brackets twisted by i(x); its MC elements y are exactly the
/// MC elements i(x) + y of the total algebra lying over x.
pub struct FiberTwist<'a, G: Linfty> {
    pub inner: Twisted<'a, G>,
    pub kernel: Vec<Lin<G::B>>,
}

/// `p` and `i` are strict maps given on basis vectors.
pub fn fiber_twist<'a, G: Linfty, B2: Clone + Ord + fmt::Debug>(
    g1: &'a G,
    p: &LinearMap<G::B, B2>,
    i: &LinearMap<B2, G::B>,
    x: &Lin<B2>,
) -> Result<FiberTwist<'a, G>, ConvError> {
    for b in i.source() {
        let back = p.apply(&i.apply(&Lin::basis(b.clone())));
        if back != Lin::basis(b.clone()) {
            return Err(ConvError::NotASection);
        }
    }
    let ix = i.apply(x);
    let inner = twist_curved(g1, &ix)?;
    let kernel = kernel_basis(p);
    Ok(FiberTwist { inner, kernel })
}

impl<G: Linfty> FiberTwist<'_, G> {
    pub fn residual(&self, y: &Lin<G::B>) -> Result<Lin<G::B>, ConvError> {
        mc_residual(&self.inner, y)
    }
}

/// A finite-dimensional weight-graded L∞ algebra given by structure
/// constants on increasing index tuples.
#[derive(Clone, Debug, Default)]
pub struct TableLinfty {
    pub names: Vec<String>,
    pub degrees: Vec<i64>,
    pub weights: Vec<i64>,
    pub theta: Lin<usize>,
    pub brackets: BTreeMap<Vec<usize>, Lin<usize>>,
    pub weight_cap: Option<i64>,
}

impl TableLinfty {
    pub fn new(basis: &[(&str, i64, i64)]) -> Self {
        TableLinfty {
            names: basis.iter().map(|b| b.0.to_string()).collect(),
            degrees: basis.iter().map(|b| b.1).collect(),
            weights: basis.iter().map(|b| b.2).collect(),
            ..Default::default()
        }
    }

    pub fn index(&self, name: &str) -> usize {
        self.names.iter().position(|n| n == name).expect("basis name")
    }

    pub fn vector(&self, terms: &[(&str, i64)]) -> Lin<usize> {
        Lin::from_terms(terms.iter().map(|(n, c)| (self.index(n), q(*c))))
    }

    /// Sets `[b₁, …, b_k]` for the listed basis names; the other orderings
    /// follow by graded antisymmetry.
    pub fn set(&mut self, inputs: &[&str], value: &[(&str, i64)]) {
        let idx: Vec<usize> = inputs.iter().map(|n| self.index(n)).collect();
        let v = self.vector(value);
        let (sorted, odd) = self.sort_inputs(&idx);
        self.brackets.insert(sorted, v.scale(&sign_scalar(odd)));
    }

    /// Sorted inputs and the antisymmetric Koszul sign of sorting.
    fn sort_inputs(&self, idx: &[usize]) -> (Vec<usize>, bool) {
        let mut order: Vec<usize> = (0..idx.len()).collect();
        order.sort_by_key(|&t| (idx[t], t));
        let mut perm = vec![0usize; idx.len()];
        for (pos, &t) in order.iter().enumerate() {
            perm[t] = pos;
        }
        let degs: Vec<i64> = idx.iter().map(|&i| self.degrees[i]).collect();
        let odd = koszul_parity(&perm, &degs) ^ permutation_parity(&perm);
        (order.iter().map(|&t| idx[t]).collect(), odd)
    }
}

impl Linfty for TableLinfty {
    type B = usize;
    fn degree(&self, b: &usize) -> i64 {
        self.degrees[*b]
    }
    fn weight(&self, b: &usize) -> i64 {
        self.weights[*b]
    }
    fn max_arity(&self) -> usize {
        self.brackets.keys().map(|k| k.len()).max().unwrap_or(1)
    }
    fn curvature(&self) -> Lin<usize> {
        self.theta.clone()
    }
    fn bracket(&self, args: &[Lin<usize>]) -> Lin<usize> {
        let mut out = Lin::zero();
        let mut combos: Vec<(Vec<usize>, Scalar)> = vec![(Vec::new(), q(1))];
        for a in args {
            let mut next = Vec::new();
            for (w, c) in &combos {
                for (i, ci) in a.iter() {
                    let mut v = w.clone();
                    v.push(*i);
                    next.push((v, c * ci));
                }
            }
            combos = next;
        }
        for (idx, c) in combos {
            let (sorted, odd) = self.sort_inputs(&idx);
            // repeated entries of even degree vanish by antisymmetry
            if sorted.windows(2).any(|w| w[0] == w[1] && self.degrees[w[0]].rem_euclid(2) == 0) {
                continue;
            }
            if let Some(v) = self.brackets.get(&sorted) {
                out.add_scaled(v, &(c * sign_scalar(odd)));
            }
        }
        out
    }
    fn weight_cap(&self) -> Option<i64> {
        self.weight_cap
    }
}

/// Conv(C; A) as a curved dg Lie algebra.
#[derive(Clone, Debug)]
pub struct ConvLie {
    pub space: ConvSpace,
    pub weight_cap: Option<i64>,
}

impl ConvLie {
    pub fn new(space: ConvSpace) -> Self {
        ConvLie {
            space,
            weight_cap: None,
        }
    }
}

impl Linfty for ConvLie {
    type B = ConvKey;
    fn degree(&self, b: &ConvKey) -> i64 {
        self.space.key_degree(b)
    }
    fn weight(&self, b: &ConvKey) -> i64 {
        self.space.key_weight(b)
    }
    fn max_arity(&self) -> usize {
        2
    }
    fn curvature(&self) -> Lin<ConvKey> {
        self.space.curvature()
    }
    fn bracket(&self, args: &[Lin<ConvKey>]) -> Lin<ConvKey> {
        match args.len() {
            1 => self.space.d(&args[0]),
            2 => conv_bracket(&self.space, &args[0], &args[1]),
            _ => Lin::zero(),
        }
    }
    fn weight_cap(&self) -> Option<i64> {
        self.weight_cap
    }
    fn pronilpotent(&self) -> bool {
        self.space.domain == Domain::Reduced
    }
}

// ---------------------------------------------------------------------------
// preLie→ triples.

/// Basis of C₁ ⊕ C₂[−1] ⊕ C₃.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rel<L, M, R> {
    Left(L),
    Mid(M),
    Right(R),
}

/// An algebra over the colored pre-Lie operad: pre-Lie products on the
/// outer terms, the action of the left term on the middle, and the dashed
/// corollas `r{m₁, …, m_k}`.
pub trait PreLieArrow {
    type L: Clone + Ord + fmt::Debug;
    type M: Clone + Ord + fmt::Debug;
    type R: Clone + Ord + fmt::Debug;
    fn left_degree(&self, b: &Self::L) -> i64;
    fn mid_degree(&self, b: &Self::M) -> i64;
    fn right_degree(&self, b: &Self::R) -> i64;
    fn left_weight(&self, _b: &Self::L) -> i64 {
        0
    }
    fn mid_weight(&self, _b: &Self::M) -> i64 {
        0
    }
    fn right_weight(&self, _b: &Self::R) -> i64 {
        0
    }
    fn left_circ(&self, a: &Lin<Self::L>, b: &Lin<Self::L>) -> Lin<Self::L>;
    fn right_circ(&self, a: &Lin<Self::R>, b: &Lin<Self::R>) -> Lin<Self::R>;
    fn mid_left(&self, m: &Lin<Self::M>, a: &Lin<Self::L>) -> Lin<Self::M>;
    fn right_mids(&self, r: &Lin<Self::R>, ms: &[Lin<Self::M>]) -> Lin<Self::M>;
    fn d_left(&self, a: &Lin<Self::L>) -> Lin<Self::L>;
    fn d_mid(&self, m: &Lin<Self::M>) -> Lin<Self::M>;
    fn d_right(&self, r: &Lin<Self::R>) -> Lin<Self::R>;
    fn max_dashed(&self) -> usize;
}

pub struct RelativeLinfty<'a, T: PreLieArrow> {
    pub triple: &'a T,
    pub weight_cap: Option<i64>,
}

pub fn relative_linfty<T: PreLieArrow>(triple: &T) -> RelativeLinfty<'_, T> {
    RelativeLinfty {
        triple,
        weight_cap: None,
    }
}

type RelB<T> = Rel<<T as PreLieArrow>::L, <T as PreLieArrow>::M, <T as PreLieArrow>::R>;

struct Split<T: PreLieArrow> {
    left: Lin<T::L>,
    mid: Lin<T::M>,
    right: Lin<T::R>,
}

fn split<T: PreLieArrow>(v: &Lin<RelB<T>>) -> Split<T> {
    let mut s = Split {
        left: Lin::zero(),
        mid: Lin::zero(),
        right: Lin::zero(),
    };
    for (b, c) in v.iter() {
        match b {
            Rel::Left(l) => s.left.add_term(l.clone(), c.clone()),
            Rel::Mid(m) => s.mid.add_term(m.clone(), c.clone()),
            Rel::Right(r) => s.right.add_term(r.clone(), c.clone()),
        }
    }
    s
}

impl<T: PreLieArrow> RelativeLinfty<'_, T> {
    fn deg(&self, b: &RelB<T>) -> i64 {
        match b {
            Rel::Left(l) => self.triple.left_degree(l),
            Rel::Mid(m) => self.triple.mid_degree(m) + 1,
            Rel::Right(r) => self.triple.right_degree(r),
        }
    }

    fn homogeneous(&self, v: &Lin<RelB<T>>) -> Vec<(i64, Lin<RelB<T>>)> {
        let mut by: BTreeMap<i64, Lin<RelB<T>>> = BTreeMap::new();
        for (b, c) in v.iter() {
            by.entry(self.deg(b)).or_insert_with(Lin::zero).add_term(b.clone(), c.clone());
        }
        by.into_iter().collect()
    }

    /// Bracket on homogeneous arguments in the L∞ grading.
    fn bracket_homogeneous(&self, args: &[(i64, Lin<RelB<T>>)]) -> Lin<RelB<T>> {
        let t = self.triple;
        let k = args.len();
        let mut out: Lin<RelB<T>> = Lin::zero();
        if k == 1 {
            let s = split::<T>(&args[0].1);
            out += &t.d_left(&s.left).map_keys(|l| Rel::Left(l.clone()));
            // the shift of the middle term negates its differential
            out -= &t.d_mid(&s.mid).map_keys(|m| Rel::Mid(m.clone()));
            out += &t.d_right(&s.right).map_keys(|r| Rel::Right(r.clone()));
            return out;
        }
        if k == 2 {
            let (d0, a0) = &args[0];
            let (d1, a1) = &args[1];
            let s0 = split::<T>(a0);
            let s1 = split::<T>(a1);
            let swap = sign_scalar((d0 * d1).rem_euclid(2) == 1);
            let mut l = t.left_circ(&s0.left, &s1.left);
            l.add_scaled(&t.left_circ(&s1.left, &s0.left), &-swap.clone());
            out += &l.map_keys(|x| Rel::Left(x.clone()));
            let mut r = t.right_circ(&s0.right, &s1.right);
            r.add_scaled(&t.right_circ(&s1.right, &s0.right), &-swap.clone());
            out += &r.map_keys(|x| Rel::Right(x.clone()));
            // [m, a] = m∘a and [a, m] = −(−1)^{|a||m|}[m, a]
            let ma = |m: &Lin<T::M>, a: &Lin<T::L>| t.mid_left(m, a).map_keys(|x| Rel::Mid(x.clone()));
            out += &ma(&s0.mid, &s1.left);
            out.add_scaled(&ma(&s1.mid, &s0.left), &-swap.clone());
        }
        if k >= 2 && k - 1 <= t.max_dashed() {
            for ri in 0..k {
                let sr = split::<T>(&args[ri].1);
                if sr.right.is_zero() {
                    continue;
                }
                let mids: Vec<Lin<T::M>> = args
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != ri)
                    .map(|(_, (_, a))| split::<T>(a).mid)
                    .collect();
                if mids.iter().any(|m| m.is_zero()) {
                    continue;
                }
                // move the right argument to the front
                let before: i64 = args[..ri].iter().map(|(d, _)| *d).sum();
                let odd = ((before * args[ri].0).rem_euclid(2) == 1) ^ (ri % 2 == 1) ^ (args[ri].0.rem_euclid(2) == 1);
                let val = self.dashed(&sr.right, &mids);
                out.add_scaled(&val, &sign_scalar(odd));
            }
        }
        out
    }

    /// `l_{k+1}(r, m₁, …, m_k) = (−1)^{|r|} r{m₁, …, m_k}`, the sign
    /// applied by the caller; the brace is already symmetric, so there is
    /// no sum over orderings.
    fn dashed(&self, r: &Lin<T::R>, mids: &[Lin<T::M>]) -> Lin<RelB<T>> {
        self.triple.right_mids(r, mids).map_keys(|x| Rel::Mid(x.clone()))
    }
}

impl<T: PreLieArrow> Linfty for RelativeLinfty<'_, T> {
    type B = RelB<T>;
    fn degree(&self, b: &Self::B) -> i64 {
        self.deg(b)
    }
    fn weight(&self, b: &Self::B) -> i64 {
        match b {
            Rel::Left(l) => self.triple.left_weight(l),
            Rel::Mid(m) => self.triple.mid_weight(m),
            Rel::Right(r) => self.triple.right_weight(r),
        }
    }
    fn max_arity(&self) -> usize {
        self.triple.max_dashed() + 1
    }
    fn bracket(&self, args: &[Lin<Self::B>]) -> Lin<Self::B> {
        let parts: Vec<Vec<(i64, Lin<Self::B>)>> = args.iter().map(|a| self.homogeneous(a)).collect();
        let mut out = Lin::zero();
        let mut idx = vec![0usize; args.len()];
        if parts.iter().any(|p| p.is_empty()) {
            return out;
        }
        loop {
            let chosen: Vec<(i64, Lin<Self::B>)> = idx.iter().enumerate().map(|(j, &i)| parts[j][i].clone()).collect();
            out += &self.bracket_homogeneous(&chosen);
            let mut j = 0;
            loop {
                if j == idx.len() {
                    return self.truncate(out);
                }
                idx[j] += 1;
                if idx[j] < parts[j].len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
        }
    }
    fn weight_cap(&self) -> Option<i64> {
        self.weight_cap
    }
}

/// The convolution triple (Conv⁰(C^cu; A), Conv⁰(C; A, B), Conv⁰(C^cu; B)).
#[derive(Clone, Debug)]
pub struct ConvTriple {
    pub left: ConvSpace,
    pub mid: ConvSpace,
    pub right: ConvSpace,
}

impl ConvTriple {
    pub fn new(c: &CooperadData, a: &FiniteComplex, b: &FiniteComplex, cap: usize) -> Self {
        ConvTriple {
            left: ConvSpace::new(c, Domain::Counital, a, a, cap),
            mid: ConvSpace::new(c, Domain::Coaugmented, a, b, cap),
            right: ConvSpace::new(c, Domain::Counital, b, b, cap),
        }
    }
}

impl PreLieArrow for ConvTriple {
    type L = ConvKey;
    type M = ConvKey;
    type R = ConvKey;
    fn left_degree(&self, b: &ConvKey) -> i64 {
        self.left.key_degree(b)
    }
    fn mid_degree(&self, b: &ConvKey) -> i64 {
        self.mid.key_degree(b)
    }
    fn right_degree(&self, b: &ConvKey) -> i64 {
        self.right.key_degree(b)
    }
    fn left_weight(&self, b: &ConvKey) -> i64 {
        self.left.key_weight(b)
    }
    fn mid_weight(&self, b: &ConvKey) -> i64 {
        self.mid.key_weight(b)
    }
    fn right_weight(&self, b: &ConvKey) -> i64 {
        self.right.key_weight(b)
    }
    fn left_circ(&self, a: &Lin<ConvKey>, b: &Lin<ConvKey>) -> Lin<ConvKey> {
        insert(&self.left, a, &self.left, b)
    }
    fn right_circ(&self, a: &Lin<ConvKey>, b: &Lin<ConvKey>) -> Lin<ConvKey> {
        insert(&self.right, a, &self.right, b)
    }
    fn mid_left(&self, m: &Lin<ConvKey>, a: &Lin<ConvKey>) -> Lin<ConvKey> {
        insert(&self.mid, m, &self.left, a)
    }
    fn right_mids(&self, r: &Lin<ConvKey>, ms: &[Lin<ConvKey>]) -> Lin<ConvKey> {
        brace_insert(&self.right, r, &self.mid, ms)
    }
    fn d_left(&self, a: &Lin<ConvKey>) -> Lin<ConvKey> {
        self.left.d(a)
    }
    fn d_mid(&self, m: &Lin<ConvKey>) -> Lin<ConvKey> {
        self.mid.d(m)
    }
    fn d_right(&self, r: &Lin<ConvKey>) -> Lin<ConvKey> {
        self.right.d(r)
    }
    fn max_dashed(&self) -> usize {
        self.right.cap
    }
}

/// Generalized Jacobi residual on homogeneous arguments: the coefficient of
/// ε₁⋯εₙ in the Bianchi identity Σ_k (1/k!)[X, …, X, F(X)]_{k+1} = 0 for
/// X = Σ εᵢxᵢ of total degree one, where F is the curved MC functional.
/// This is the form of the L∞ relations matching the MC and twisting
/// formulas above.
pub fn jacobi_residual<G: Linfty>(g: &G, args: &[Lin<G::B>]) -> Lin<G::B> {
    let n = args.len();
    let eps: Vec<i64> = args.iter().map(|a| 1 - lin_degree(g, a)).collect();
    let x: Lin<(u32, G::B)> = {
        let mut v = Lin::zero();
        for (i, a) in args.iter().enumerate() {
            for (b, c) in a.iter() {
                v.add_term((1u32 << i, b.clone()), c.clone());
            }
        }
        v
    };
    let full = (1u32 << n) - 1;
    let mut f: Lin<(u32, G::B)> = g.curvature().map_keys(|b| (0u32, b.clone()));
    for k in 1..=g.max_arity().min(n) {
        let b = ext_bracket(g, &eps, &vec![x.clone(); k], full);
        f.add_scaled(&b, &(q(1) / factorial(k)));
    }
    let mut out = Lin::zero();
    for k in 0..g.max_arity() {
        let mut a = vec![x.clone(); k];
        a.push(f.clone());
        let b = ext_bracket(g, &eps, &a, full);
        out.add_scaled(&b, &(q(1) / factorial(k)));
    }
    g.truncate(out.filter(|(m, _)| *m == full).map_keys(|(_, b)| b.clone()))
}

fn mask_degree(eps: &[i64], mask: u32) -> i64 {
    (0..eps.len()).filter(|&i| mask >> i & 1 == 1).map(|i| eps[i]).sum()
}

/// Sign of a_1 a_2 ⋯ for Grassmann monomials with disjoint masks, each
/// written in increasing order.
fn merge_sign(eps: &[i64], masks: &[u32]) -> bool {
    let mut odd = false;
    let mut seen = 0u32;
    for &m in masks {
        for i in 0..eps.len() {
            if m >> i & 1 == 1 && eps[i].rem_euclid(2) == 1 {
                let later_odd = (i + 1..eps.len())
                    .filter(|&j| seen >> j & 1 == 1 && eps[j].rem_euclid(2) == 1)
                    .count();
                odd ^= later_odd % 2 == 1;
            }
        }
        seen |= m;
    }
    odd
}

/// Λ-linear extension of the brackets to g ⊗ Λ[ε₁, …, εₙ].
fn ext_bracket<G: Linfty>(g: &G, eps: &[i64], args: &[Lin<(u32, G::B)>], full: u32) -> Lin<(u32, G::B)> {
    let k = args.len();
    // group every argument by (mask, degree of the g-part)
    let groups: Vec<Vec<(u32, i64, Lin<G::B>)>> = args
        .iter()
        .map(|a| {
            let mut by: BTreeMap<(u32, i64), Lin<G::B>> = BTreeMap::new();
            for ((m, b), c) in a.iter() {
                by.entry((*m, g.degree(b))).or_insert_with(Lin::zero).add_term(b.clone(), c.clone());
            }
            by.into_iter().map(|((m, d), v)| (m, d, v)).collect()
        })
        .collect();
    let mut out = Lin::zero();
    let bracket_deg = 2 - k as i64;
    let mut idx = vec![0usize; k];
    if groups.iter().any(|gr| gr.is_empty()) {
        return out;
    }
    loop {
        let chosen: Vec<&(u32, i64, Lin<G::B>)> = (0..k).map(|i| &groups[i][idx[i]]).collect();
        let mut used = 0u32;
        let mut disjoint = true;
        for c in &chosen {
            if used & c.0 != 0 {
                disjoint = false;
                break;
            }
            used |= c.0;
        }
        if disjoint && used & !full == 0 {
            let mut odd = false;
            let mut xs = 0i64;
            for c in &chosen {
                let e = mask_degree(eps, c.0);
                odd ^= (e * (bracket_deg + xs)).rem_euclid(2) == 1;
                xs += c.1;
            }
            let masks: Vec<u32> = chosen.iter().map(|c| c.0).collect();
            odd ^= merge_sign(eps, &masks);
            let vals: Vec<Lin<G::B>> = chosen.iter().map(|c| c.2.clone()).collect();
            let v = g.bracket(&vals);
            out.add_scaled(&v.map_keys(|b| (used, b.clone())), &sign_scalar(odd));
        }
        let mut j = 0;
        loop {
            if j == k {
                return out;
            }
            idx[j] += 1;
            if idx[j] < groups[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

fn lin_degree<G: Linfty>(g: &G, a: &Lin<G::B>) -> i64 {
    a.keys().next().map(|b| g.degree(b)).unwrap_or(0)
}

/// Bigraded wrapper so convolution keys can be used with generic helpers.
impl Bigraded for ConvKey {
    fn degree(&self) -> i64 {
        -self.x.degree()
    }
    fn weight(&self) -> i64 {
        conv_weight(&self.x)
    }
}
