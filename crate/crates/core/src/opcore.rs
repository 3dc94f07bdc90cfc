//! Symmetric sequences, the Arnold-algebra model of the cooperads
//! coComm ⊂ coPₙ ⊃ coLie, suspensions, curved extensions, the dual operads
//! Comm, Lie and Pₙ, free operads on graded generators and free algebras.
//!
//! coPₙ^cu(m) is the graded commutative algebra on ωᵢⱼ (0 ≤ i ≠ j < m) of
//! degree n−1 with ωⱼᵢ = (−1)ⁿωᵢⱼ, ωᵢⱼ² = 0 and the three-term Arnold
//! relation. Cocomposition is the algebra map sending ωᵢⱼ to the ω at the
//! vertex where the paths from leaves i and j meet.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::gradedlin::{
    koszul_parity, permutation_parity, permutations, q, sign_scalar, Bigraded, Echelon, Lin,
    Scalar,
};
use crate::treecomb::{canonicalize, compose_at, Input, RawTree, Tree, TreeLabel};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OperadError {
    #[error("unknown name {0}")]
    UnknownName(String),
    #[error("arity cap must be at least 1")]
    BadCap,
    #[error("operation not supported: {0}")]
    Unsupported(String),
}

/// A normal-form Arnold monomial: factors (i, j), i < j, with strictly
/// increasing j.
pub type Mono = Vec<(u8, u8)>;

thread_local! {
    static NORMAL_CACHE: RefCell<HashMap<(bool, Vec<(u8, u8)>), Lin<Mono>>> = RefCell::new(HashMap::new());
}

/// Normal form of the ordered product of the given factors in the Arnold
/// algebra with parameter `n`.
pub fn arnold_normalize(n: i64, factors: &[(u8, u8)]) -> Lin<Mono> {
    let n_odd = n.rem_euclid(2) == 1;
    let key = (n_odd, factors.to_vec());
    if let Some(hit) = NORMAL_CACHE.with(|c| c.borrow().get(&key).cloned()) {
        return hit;
    }
    let out = normalize_uncached(n_odd, factors);
    NORMAL_CACHE.with(|c| {
        let mut c = c.borrow_mut();
        if c.len() > 200_000 {
            c.clear();
        }
        c.insert(key, out.clone());
    });
    out
}

fn normalize_uncached(n_odd: bool, factors: &[(u8, u8)]) -> Lin<Mono> {
    // Generators have degree n−1: odd exactly when n is even.
    let gen_odd = !n_odd;
    let mut sign = false;
    let mut fs: Vec<(u8, u8)> = Vec::with_capacity(factors.len());
    for &(a, b) in factors {
        if a == b {
            return Lin::zero();
        }
        if a < b {
            fs.push((a, b));
        } else {
            fs.push((b, a));
            sign ^= n_odd;
        }
    }
    let keys: Vec<(u8, u8)> = fs.iter().map(|&(a, b)| (b, a)).collect();
    if gen_odd {
        let degrees = vec![1; fs.len()];
        sign ^= crate::gradedlin::sort_parity(&keys, &degrees);
    }
    fs.sort_by_key(|&(a, b)| (b, a));
    for w in fs.windows(2) {
        if w[0] == w[1] {
            return Lin::zero();
        }
    }
    for t in 0..fs.len().saturating_sub(1) {
        if fs[t].1 == fs[t + 1].1 {
            let (i, k) = fs[t];
            let (j, _) = fs[t + 1];
            // ω_ik ω_jk = ω_ij ω_jk − ω_ij ω_ik for i < j < k.
            let mut first = fs.clone();
            first[t] = (i, j);
            first[t + 1] = (j, k);
            let mut second = fs.clone();
            second[t] = (i, j);
            second[t + 1] = (i, k);
            let n = if n_odd { 1 } else { 0 };
            let mut out = arnold_normalize(n, &first);
            out -= &arnold_normalize(n, &second);
            return out.scale(&sign_scalar(sign));
        }
    }
    Lin::term(fs, sign_scalar(sign))
}

/// All normal monomials on `m` points, optionally restricted to a fixed
/// number of factors.
pub fn arnold_basis(m: usize, factors: Option<usize>) -> Vec<Mono> {
    let mut out = vec![Vec::new()];
    for j in 1..m {
        let mut next = Vec::new();
        for mono in &out {
            next.push(mono.clone());
            for i in 0..j {
                let mut x = mono.clone();
                x.push((i as u8, j as u8));
                next.push(x);
            }
        }
        out = next;
    }
    if let Some(f) = factors {
        out.retain(|x| x.len() == f);
    }
    out.sort();
    out
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Body {
    Mono(Mono),
    /// Curved arity-0 element.
    C0,
    /// Curved arity-1 element with Δ(c₁) = c₂ ⊗ c₀.
    C1,
}

/// A basis element of an Arnold-model cooperad `C{k}` with parameter `n`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoElem {
    pub n: i8,
    pub k: i8,
    pub arity: u8,
    pub body: Body,
}

impl CoElem {
    pub fn mono(n: i64, k: i64, arity: usize, mono: Mono) -> Self {
        CoElem {
            n: n as i8,
            k: k as i8,
            arity: arity as u8,
            body: Body::Mono(mono),
        }
    }

    pub fn unit(n: i64, k: i64, arity: usize) -> Self {
        Self::mono(n, k, arity, Vec::new())
    }

    pub fn c0(n: i64, k: i64) -> Self {
        CoElem {
            n: n as i8,
            k: k as i8,
            arity: 0,
            body: Body::C0,
        }
    }

    pub fn c1(n: i64, k: i64) -> Self {
        CoElem {
            n: n as i8,
            k: k as i8,
            arity: 1,
            body: Body::C1,
        }
    }

    pub fn arity(&self) -> usize {
        self.arity as usize
    }

    pub fn factors(&self) -> &[(u8, u8)] {
        match &self.body {
            Body::Mono(m) => m,
            _ => &[],
        }
    }

    pub fn omega_count(&self) -> usize {
        self.factors().len()
    }

    pub fn is_top(&self) -> bool {
        matches!(self.body, Body::Mono(ref m) if m.len() + 1 == self.arity as usize)
    }

    pub fn is_unit(&self) -> bool {
        matches!(self.body, Body::Mono(ref m) if m.is_empty())
    }

    /// Degree before suspension.
    pub fn base_degree(&self) -> i64 {
        let n = self.n as i64;
        match &self.body {
            Body::Mono(m) => m.len() as i64 * (n - 1),
            Body::C0 => -1 - n,
            Body::C1 => -2,
        }
    }

    pub fn with_suspension(&self, k: i64) -> Self {
        CoElem {
            k: k as i8,
            ..self.clone()
        }
    }

    /// Relabels inputs: `L'(in_{perm[0]}, ..) = L(in_0, ..)`.
    pub fn act(&self, perm: &[usize]) -> Lin<CoElem> {
        match &self.body {
            Body::Mono(m) => {
                let mut inv = vec![0u8; perm.len()];
                for (j, &p) in perm.iter().enumerate() {
                    inv[p] = j as u8;
                }
                let relabeled: Vec<(u8, u8)> =
                    m.iter().map(|&(a, b)| (inv[a as usize], inv[b as usize])).collect();
                let s = sign_scalar(self.k & 1 == 1 && permutation_parity(perm));
                arnold_normalize(self.n as i64, &relabeled)
                    .map_keys(|mm| CoElem::mono(self.n as i64, self.k as i64, perm.len(), mm.clone()))
                    .scale(&s)
            }
            _ => Lin::basis(self.clone()),
        }
    }

    /// Insertion into a larger arity: input `a` becomes input `slots[a]`.
    pub fn insert_inputs(&self, new_arity: usize, slots: &[usize]) -> Lin<CoElem> {
        match &self.body {
            Body::Mono(m) => {
                let relabeled: Vec<(u8, u8)> = m
                    .iter()
                    .map(|&(a, b)| (slots[a as usize] as u8, slots[b as usize] as u8))
                    .collect();
                arnold_normalize(self.n as i64, &relabeled).map_keys(|mm| {
                    CoElem::mono(self.n as i64, self.k as i64, new_arity, mm.clone())
                })
            }
            _ if new_arity == self.arity() => Lin::basis(self.clone()),
            _ => Lin::zero(),
        }
    }

    /// Hopf product in the counital cooperad (unsuspended, same arity).
    pub fn hopf_product(&self, other: &CoElem) -> Lin<CoElem> {
        debug_assert_eq!(self.arity, other.arity);
        if self.is_unit() {
            return Lin::basis(other.clone());
        }
        if other.is_unit() {
            return Lin::basis(self.clone());
        }
        match (&self.body, &other.body) {
            (Body::Mono(a), Body::Mono(b)) => {
                let mut f = a.clone();
                f.extend_from_slice(b);
                arnold_normalize(self.n as i64, &f)
                    .map_keys(|mm| CoElem::mono(self.n as i64, self.k as i64, self.arity(), mm.clone()))
            }
            _ => Lin::zero(),
        }
    }

    /// Cocomposition along the two-vertex tree whose upper vertex carries
    /// the inputs `upper` (increasing) and sits at position `p` among the
    /// root inputs; the remaining inputs feed the root in increasing order.
    pub fn split2(&self, upper: &[usize], p: usize) -> Lin<(CoElem, CoElem)> {
        let n = self.n as i64;
        let k = self.k as i64;
        let m = self.arity();
        match &self.body {
            Body::C0 => {
                if upper.is_empty() && p == 0 {
                    // Only the counit split exists in arity 0.
                    Lin::basis((CoElem::unit(n, k, 1), self.clone()))
                } else {
                    Lin::zero()
                }
            }
            Body::C1 => {
                if upper.is_empty() {
                    let root = CoElem::mono(n, k, 2, vec![(0, 1)]);
                    let upper_el = CoElem::c0(n, k);
                    let mut s = suspension_sign(k, 1, &[], 1, upper_el.base_degree());
                    let mut out = Lin::zero();
                    if p == 1 {
                        out.add_term((root, upper_el), s);
                    } else {
                        s *= q(1);
                        for (r, c) in root.act(&[1, 0]).iter() {
                            out.add_term((r.clone(), upper_el.clone()), &s * c);
                        }
                    }
                    out
                } else if upper == [0] && p == 0 {
                    let mut out = Lin::basis((CoElem::unit(n, k, 1), self.clone()));
                    out.add_term((self.clone(), CoElem::unit(n, k, 1)), q(1));
                    out
                } else {
                    Lin::zero()
                }
            }
            Body::Mono(mono) => {
                let in_upper: Vec<bool> = (0..m).map(|i| upper.contains(&i)).collect();
                let rest: Vec<usize> = (0..m).filter(|&i| !in_upper[i]).collect();
                let mut root_pos = vec![0usize; m];
                for (idx, &l) in rest.iter().enumerate() {
                    root_pos[l] = if idx < p { idx } else { idx + 1 };
                }
                let mut up_pos = vec![0usize; m];
                for (idx, &l) in upper.iter().enumerate() {
                    up_pos[l] = idx;
                    root_pos[l] = p;
                }
                let r = rest.len() + 1;
                let s = upper.len();
                let mut root_f = Vec::new();
                let mut up_f = Vec::new();
                let mut tags = Vec::new();
                for &(a, b) in mono {
                    let (a, b) = (a as usize, b as usize);
                    if in_upper[a] && in_upper[b] {
                        up_f.push((up_pos[a] as u8, up_pos[b] as u8));
                        tags.push(1usize);
                    } else {
                        root_f.push((root_pos[a] as u8, root_pos[b] as u8));
                        tags.push(0usize);
                    }
                }
                // Move all root factors before the upper ones.
                let gen_odd = (n - 1).rem_euclid(2) == 1;
                let mut parity = false;
                if gen_odd {
                    let mut ups = 0usize;
                    for &t in &tags {
                        if t == 1 {
                            ups += 1;
                        } else {
                            parity ^= ups & 1 == 1;
                        }
                    }
                }
                let roots = arnold_normalize(n, &root_f);
                let ups = arnold_normalize(n, &up_f);
                let mut out = Lin::zero();
                let up_deg = up_f.len() as i64 * (n - 1);
                let ss = suspension_sign(k, m, upper, p, up_deg);
                let base = sign_scalar(parity) * ss;
                for (rm, rc) in roots.iter() {
                    for (um, uc) in ups.iter() {
                        out.add_term(
                            (CoElem::mono(n, k, r, rm.clone()), CoElem::mono(n, k, s, um.clone())),
                            &base * rc * uc,
                        );
                    }
                }
                out
            }
        }
    }

    /// Cocomposition along an arbitrary tree shape; labels come back in
    /// the shape's preorder.
    pub fn cocompose(&self, shape: &Shape) -> Lin<Vec<CoElem>> {
        shape_cocompose(self, shape)
    }
}

/// Sign `ε(t)^k (−1)^{k|c''|(r−1)}` carried by suspension factors.
fn suspension_sign(k: i64, m: usize, upper: &[usize], p: usize, upper_base_deg: i64) -> Scalar {
    if k.rem_euclid(2) == 0 {
        return q(1);
    }
    let s = upper.len() as i64;
    let rest: Vec<usize> = (0..m).filter(|i| !upper.contains(i)).collect();
    let r = rest.len() as i64 + 1;
    let mut word: Vec<usize> = rest[..p.min(rest.len())].to_vec();
    word.extend_from_slice(upper);
    word.extend_from_slice(&rest[p.min(rest.len())..]);
    // word[i] is the leaf at planar position i; its permutation parity
    let mut perm = vec![0usize; m];
    for (pos, &leaf) in word.iter().enumerate() {
        perm[leaf] = pos;
    }
    let mut odd = permutation_parity(&perm);
    odd ^= ((s - 1) * p as i64).rem_euclid(2) == 1;
    odd ^= (upper_base_deg * (r - 1)).rem_euclid(2) == 1;
    sign_scalar(odd)
}

impl fmt::Debug for CoElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for CoElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.body {
            Body::C0 => write!(f, "c0"),
            Body::C1 => write!(f, "c1"),
            Body::Mono(m) if m.is_empty() => write!(f, "1_{}", self.arity),
            Body::Mono(m) => {
                for (i, (a, b)) in m.iter().enumerate() {
                    if i > 0 {
                        write!(f, "·")?;
                    }
                    write!(f, "w{}{}", a, b)?;
                }
                write!(f, "_{}", self.arity)
            }
        }
    }
}

impl Bigraded for CoElem {
    fn degree(&self) -> i64 {
        self.base_degree() - self.k as i64 * (self.arity as i64 - 1)
    }

    fn weight(&self) -> i64 {
        match &self.body {
            Body::Mono(m) => m.len() as i64,
            Body::C0 => -1,
            Body::C1 => 0,
        }
    }
}

/// A tree shape used for iterated cocomposition: inputs are element slots
/// or sub-shapes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shape {
    pub inputs: Vec<ShapeInput>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ShapeInput {
    Slot(usize),
    Sub(Shape),
}

impl Shape {
    fn slots(&self, out: &mut Vec<usize>) {
        for i in &self.inputs {
            match i {
                ShapeInput::Slot(s) => out.push(*s),
                ShapeInput::Sub(sh) => sh.slots(out),
            }
        }
    }

    pub fn vertex_count(&self) -> usize {
        1 + self
            .inputs
            .iter()
            .map(|i| match i {
                ShapeInput::Sub(s) => s.vertex_count(),
                _ => 0,
            })
            .sum::<usize>()
    }

    fn relabel(&self, f: &dyn Fn(usize) -> usize) -> Shape {
        Shape {
            inputs: self
                .inputs
                .iter()
                .map(|i| match i {
                    ShapeInput::Slot(s) => ShapeInput::Slot(f(*s)),
                    ShapeInput::Sub(sh) => ShapeInput::Sub(sh.relabel(f)),
                })
                .collect(),
        }
    }
}

fn shape_cocompose(x: &CoElem, shape: &Shape) -> Lin<Vec<CoElem>> {
    let last_sub = shape
        .inputs
        .iter()
        .rposition(|i| matches!(i, ShapeInput::Sub(_)));
    let Some(pos) = last_sub else {
        let perm: Vec<usize> = shape
            .inputs
            .iter()
            .map(|i| match i {
                ShapeInput::Slot(s) => *s,
                _ => unreachable!(),
            })
            .collect();
        return x.act(&perm).map_keys(|e| vec![e.clone()]);
    };
    let ShapeInput::Sub(sub) = &shape.inputs[pos] else {
        unreachable!()
    };
    let mut upper = Vec::new();
    sub.slots(&mut upper);
    upper.sort_unstable();
    let m = x.arity();
    let rest: Vec<usize> = (0..m).filter(|i| !upper.contains(i)).collect();
    let p = star_position(&rest, &upper);
    let star = p;
    let root_index = |leaf: usize| -> usize {
        let idx = rest.iter().position(|&r| r == leaf).expect("leaf in root part");
        if idx < p {
            idx
        } else {
            idx + 1
        }
    };
    let mut root_shape = shape.clone();
    root_shape.inputs[pos] = ShapeInput::Slot(usize::MAX);
    let root_shape = root_shape.relabel(&|s| if s == usize::MAX { star } else { root_index(s) });
    let sub_shape = sub.relabel(&|s| upper.iter().position(|&u| u == s).expect("leaf in upper"));
    let mut out = Lin::zero();
    for ((r, u), c) in x.split2(&upper, p).iter() {
        let left = shape_cocompose(r, &root_shape);
        if left.is_zero() {
            continue;
        }
        let right = shape_cocompose(u, &sub_shape);
        for (lv, lc) in left.iter() {
            for (rv, rc) in right.iter() {
                let mut v = lv.clone();
                v.extend(rv.iter().cloned());
                out.add_term(v, c * lc * rc);
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Part {
    /// Weight 0: coComm.
    Unit,
    /// Top weight: coLie-type.
    Top,
    /// Everything: coPₙ.
    Full,
}

/// An Arnold-model cooperad, possibly suspended and curved.
#[derive(Clone, Debug)]
pub struct CooperadData {
    pub name: String,
    pub n: i64,
    pub k: i64,
    pub part: Part,
    pub curved: bool,
    pub cap: usize,
    /// Value of θ on c₁.
    pub theta_value: Scalar,
    /// Flip the sign of the decomposition with upper inputs {0, 1} in this
    /// arity (mutation tests).
    pub flip_arity: Option<usize>,
}

pub fn builtin_cooperad(name: &str, n: i64, cap: usize) -> Result<CooperadData, OperadError> {
    if cap < 1 {
        return Err(OperadError::BadCap);
    }
    let (arnold_n, k, part, curved) = match name {
        "coComm" => (1, n, Part::Unit, false),
        "coLie" => (1, n, Part::Top, false),
        "coP_n" | "coP" => (n, 0, Part::Full, false),
        "coLie_curved" => (1, n, Part::Top, true),
        "coP_n_curved" => (n, 0, Part::Full, true),
        other => return Err(OperadError::UnknownName(other.to_string())),
    };
    let label = match name {
        "coP_n" | "coP" | "coP_n_curved" => format!("{}[n={}]", name, n),
        _ if n == 0 => name.to_string(),
        _ => format!("{}{{{}}}", name, n),
    };
    Ok(CooperadData {
        name: label,
        n: arnold_n,
        k,
        part,
        curved,
        cap,
        theta_value: q(-1),
        flip_arity: None,
    })
}

/// Operadic suspension `C{k}`: degrees drop by k(m−1) and the action
/// picks up sgn^k.
pub fn suspend(c: &CooperadData, k: i64) -> CooperadData {
    let mut out = c.clone();
    out.k += k;
    if k != 0 {
        out.name = format!("{}{{{}}}", c.name, k);
    }
    out
}

impl CooperadData {
    pub fn contains(&self, x: &CoElem) -> bool {
        match &x.body {
            Body::Mono(m) => match self.part {
                Part::Unit => m.is_empty(),
                Part::Top => m.len() + 1 == x.arity(),
                Part::Full => true,
            },
            _ => self.curved,
        }
    }

    /// Basis of the coaugmentation coideal C̄ in arity `m` (with the
    /// curved elements in arities 0 and 1 when curved).
    pub fn reduced_basis(&self, m: usize) -> Vec<CoElem> {
        if m > self.cap {
            return Vec::new();
        }
        let mut out: Vec<CoElem> = Vec::new();
        if m >= 2 {
            let f = match self.part {
                Part::Unit => Some(0),
                Part::Top => Some(m - 1),
                Part::Full => None,
            };
            out = arnold_basis(m, f)
                .into_iter()
                .map(|mono| CoElem::mono(self.n, self.k, m, mono))
                .collect();
        }
        if self.curved {
            if m == 0 {
                out.push(CoElem::c0(self.n, self.k));
            }
            if m == 1 {
                out.push(CoElem::c1(self.n, self.k));
            }
        }
        out
    }

    /// Basis of the counital extension C^cu in arity `m`.
    pub fn counital_basis(&self, m: usize) -> Vec<CoElem> {
        if m > self.cap {
            return Vec::new();
        }
        if m <= 1 {
            let mut out = vec![CoElem::unit(self.n, self.k, m)];
            if self.curved {
                out.extend(self.reduced_basis(m));
            }
            return out;
        }
        self.reduced_basis(m)
    }

    pub fn is_hopf(&self) -> bool {
        self.part != Part::Top && self.k == 0
    }

    pub fn theta(&self, x: &CoElem) -> Scalar {
        if self.curved && x.body == Body::C1 {
            self.theta_value.clone()
        } else {
            q(0)
        }
    }

    /// Reduced decompositions of `x`: every two-vertex tree whose vertices
    /// both lie in C̄, as (upper inputs, position, root ⊗ upper).
    pub fn reduced_splits(&self, x: &CoElem) -> Vec<(Vec<usize>, usize, Lin<(CoElem, CoElem)>)> {
        let m = x.arity();
let flip_here = self.flip_arity == Some(m);
        let mut out = Vec::new();
        if let Body::C1 = x.body {
            if self.curved {
                let f = if flip_here { q(-1) } else { q(1) };
                out.push((Vec::new(), 1, x.split2(&[], 1).scale(&f)));
            }
            return out;
        }
        if m < 3 {
            return out;
        }
        for mask in 1u32..(1u32 << m) {
            let s = mask.count_ones() as usize;
            if s < 2 || s > m - 1 {
                continue;
            }
            let upper: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).collect();
            let rest_below = (0..upper[0]).count();
            let p = rest_below;
            let f = if flip_here && upper == [0, 1] { q(-1) } else { q(1) };
            let d = x.split2(&upper, p).scale(&f);
            if !d.is_zero() {
                out.push((upper, p, d));
            }
        }
        out
    }

    /// Every two-vertex decomposition of `x` in the counital cooperad, one
    /// per isomorphism class of two-vertex trees. An empty upper vertex
    /// sits after all root leaves.
    pub fn all_splits(&self, x: &CoElem) -> Vec<(Vec<usize>, usize, Lin<(CoElem, CoElem)>)> {
        let m = x.arity();
        let mut out = Vec::new();
        for mask in 0u32..(1u32 << m) {
            let upper: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).collect();
            let p = match upper.first() {
                Some(&u) => u,
                None => m,
            };
            let d = x.split2(&upper, p);
            if !d.is_zero() {
                out.push((upper, p, d));
            }
        }
        out
    }

    /// Checks coassociativity of reduced decompositions on all three-vertex
    /// trees for basis elements up to the cap; returns failures.
    pub fn check_coassociativity(&self) -> Vec<String> {
        self.coassociativity_failures(false)
    }

    /// Same check on the counital cooperad, including empty vertices.
    pub fn check_counital_coassociativity(&self) -> Vec<String> {
        self.coassociativity_failures(true)
    }

    fn coassociativity_failures(&self, counital: bool) -> Vec<String> {
        let mut failures = Vec::new();
        for m in 0..=self.cap {
            let basis = if counital {
                self.counital_basis(m)
            } else {
                self.reduced_basis(m)
            };
            for x in basis {
                for shape in three_vertex_shapes(m, counital) {
                    let via_root = iterated_split(&x, &shape, true);
                    let via_top = iterated_split(&x, &shape, false);
                    if via_root != via_top {
                        failures.push(format!("{} along {:?}", x, shape));
                    }
                }
            }
        }
        failures
    }
}

/// Three-vertex shapes on `m` leaves; non-root vertices may be empty only
/// when `allow_empty`.
fn three_vertex_shapes(m: usize, allow_empty: bool) -> Vec<Shape> {
    let mut out = Vec::new();
    // chains: root ⊃ mid ⊃ top
    let n3 = 3usize.pow(m as u32);
    for code in 0..n3 {
        let mut c = code;
        let mut lv = vec![0usize; m];
        for l in lv.iter_mut() {
            *l = c % 3;
            c /= 3;
        }
        let at = |t: usize| (0..m).filter(|&i| lv[i] == t).collect::<Vec<_>>();
        let (r, a, b) = (at(0), at(1), at(2));
        if !allow_empty && (a.is_empty() || b.is_empty()) {
            continue;
        }
        let top = Shape {
            inputs: b.iter().map(|&i| ShapeInput::Slot(i)).collect(),
        };
        let mut mid_inputs: Vec<ShapeInput> = a.iter().map(|&i| ShapeInput::Slot(i)).collect();
        mid_inputs.push(ShapeInput::Sub(top));
        let mut root_inputs: Vec<ShapeInput> = r.iter().map(|&i| ShapeInput::Slot(i)).collect();
        root_inputs.push(ShapeInput::Sub(Shape { inputs: mid_inputs }));
        out.push(Shape { inputs: root_inputs });
        // pitchfork-like: root with two upper vertices
        if allow_empty || a[0] < b[0] {
            let mut inputs: Vec<ShapeInput> = r.iter().map(|&i| ShapeInput::Slot(i)).collect();
            inputs.push(ShapeInput::Sub(Shape {
                inputs: a.iter().map(|&i| ShapeInput::Slot(i)).collect(),
            }));
            inputs.push(ShapeInput::Sub(Shape {
                inputs: b.iter().map(|&i| ShapeInput::Slot(i)).collect(),
            }));
            out.push(Shape { inputs });
        }
    }
    out
}

fn star_position(rest: &[usize], upper: &[usize]) -> usize {
    match upper.first() {
        Some(&u) => rest.iter().filter(|&&r| r < u).count(),
        None => rest.len(),
    }
}

/// Cocomposes along a three-vertex shape either by splitting off the
/// innermost vertex last (`root_first`) or first.
fn iterated_split(x: &CoElem, shape: &Shape, root_first: bool) -> Lin<Vec<CoElem>> {
    if root_first {
        return shape_cocompose(x, shape);
    }
    // Split off the last sub-shape's deepest vertex first, then the rest.
    let mut out = Lin::zero();
    let subs: Vec<&Shape> = shape
        .inputs
        .iter()
        .filter_map(|i| match i {
            ShapeInput::Sub(s) => Some(s),
            _ => None,
        })
        .collect();
    if subs.len() == 2 {
        // pitchfork: peel the first upper vertex first
        let mut a = Vec::new();
        subs[0].slots(&mut a);
        a.sort_unstable();
        let m = x.arity();
        let rest: Vec<usize> = (0..m).filter(|i| !a.contains(i)).collect();
        let p = star_position(&rest, &a);
        let relabel = |s: usize| {
            let idx = rest.iter().position(|&r| r == s).unwrap();
            if idx < p {
                idx
            } else {
                idx + 1
            }
        };
        let mut r_shape = shape.clone();
        let first_pos = shape
            .inputs
            .iter()
            .position(|i| matches!(i, ShapeInput::Sub(_)))
            .unwrap();
        r_shape.inputs[first_pos] = ShapeInput::Slot(usize::MAX);
        let r_shape = r_shape.relabel(&|s| if s == usize::MAX { p } else { relabel(s) });
        for ((r, u), c) in x.split2(&a, p).iter() {
            let u_shape = subs[0].relabel(&|s| a.iter().position(|&v| v == s).unwrap());
            let left = shape_cocompose(r, &r_shape);
            let right = shape_cocompose(u, &u_shape);
            // tensor order is (root, second, first); move first before second
            for (lv, lc) in left.iter() {
                for (rv, rc) in right.iter() {
                    let d_first: i64 = rv.iter().map(|e| e.degree()).sum();
                    let d_second: i64 = lv[1..].iter().map(|e| e.degree()).sum();
                    let s = sign_scalar(d_first & 1 == 1 && d_second & 1 == 1);
                    let mut v = vec![lv[0].clone()];
                    v.extend(rv.iter().cloned());
                    v.extend(lv[1..].iter().cloned());
                    out.add_term(v, c * lc * rc * s);
                }
            }
        }
        return out;
    }
    // chain: split root from mid+top, but first split off the top from x
    let ShapeInput::Sub(mid) = shape.inputs.last().unwrap() else {
        unreachable!()
    };
    let ShapeInput::Sub(top) = mid.inputs.last().unwrap() else {
        unreachable!()
    };
    let mut b = Vec::new();
    top.slots(&mut b);
    b.sort_unstable();
    let m = x.arity();
    let rest: Vec<usize> = (0..m).filter(|i| !b.contains(i)).collect();
    let p = star_position(&rest, &b);
    let relabel = |s: usize| {
        let idx = rest.iter().position(|&r| r == s).unwrap();
        if idx < p {
            idx
        } else {
            idx + 1
        }
    };
    let mut lower = shape.clone();
    if let Some(ShapeInput::Sub(mid_l)) = lower.inputs.last_mut() {
        let last = mid_l.inputs.len() - 1;
        mid_l.inputs[last] = ShapeInput::Slot(usize::MAX);
    }
    let lower = lower.relabel(&|s| if s == usize::MAX { p } else { relabel(s) });
    for ((r, u), c) in x.split2(&b, p).iter() {
        let left = shape_cocompose(r, &lower);
        let u_shape = top.relabel(&|s| b.iter().position(|&v| v == s).unwrap());
        let right = shape_cocompose(u, &u_shape);
        for (lv, lc) in left.iter() {
            for (rv, rc) in right.iter() {
                let mut v = lv.clone();
                v.extend(rv.iter().cloned());
                out.add_term(v, c * lc * rc);
            }
        }
    }
    out
}

/// A symmetric sequence: finite bases per arity with an action by
/// signed relabeling through normal forms.
#[derive(Clone, Debug)]
pub struct SymSeq<E: Ord> {
    pub arities: BTreeMap<usize, Vec<E>>,
}

/// Elements with a symmetric-group action on their inputs.
pub trait SymElem: Clone + Ord + fmt::Debug {
    fn act(&self, perm: &[usize]) -> Lin<Self>;
    fn elem_degree(&self) -> i64;
}

impl SymElem for CoElem {
    fn act(&self, perm: &[usize]) -> Lin<Self> {
        CoElem::act(self, perm)
    }
    fn elem_degree(&self) -> i64 {
        self.degree()
    }
}

impl<E: SymElem> SymSeq<E> {
    /// Checks identity and composition of the action on all of S_m for
    /// arities up to `cap`; returns the first failure.
    pub fn check_action(&self, cap: usize) -> Result<(), String> {
        for (&m, basis) in &self.arities {
            if m > cap {
                continue;
            }
            let perms = permutations(m);
            for x in basis {
                let id: Vec<usize> = (0..m).collect();
                if x.act(&id) != Lin::basis(x.clone()) {
                    return Err(format!("identity fails on {:?}", x));
                }
                for s in &perms {
                    for t in &perms {
                        // act(act(x, s), t) = act(x, s∘t) with (s∘t)[j] = s[t[j]]
                        let st: Vec<usize> = (0..m).map(|j| s[t[j]]).collect();
                        let lhs = x.act(s).map_linear(|y| y.act(t));
                        if lhs != x.act(&st) {
                            return Err(format!("composition fails on {:?}", x));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

impl CooperadData {
    pub fn symseq(&self) -> SymSeq<CoElem> {
        SymSeq {
            arities: (0..=self.cap).map(|m| (m, self.reduced_basis(m))).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Operads dual to the Arnold cooperads.

/// Dual basis vector of a counital cooperad element.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpElem(pub CoElem);

impl fmt::Debug for OpElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*", self.0)
    }
}

impl fmt::Display for OpElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*", self.0)
    }
}

impl Bigraded for OpElem {
    fn degree(&self) -> i64 {
        -self.0.degree()
    }
    fn weight(&self) -> i64 {
        -self.0.weight()
    }
}

/// An operad presented as the arity-wise dual of an Arnold cooperad.
#[derive(Clone, Debug)]
pub struct OperadData {
    pub name: String,
    pub dual: CooperadData,
    pub unital: bool,
}

pub fn builtin_operad(name: &str, n: i64, cap: usize) -> Result<OperadData, OperadError> {
    if cap < 1 {
        return Err(OperadError::BadCap);
    }
    let (coname, arnold_n, unital) = match name {
        "Comm" => ("coComm", 0, true),
        "Comm_nonunital" => ("coComm", 0, false),
        "Lie" => ("coLie", 0, false),
        "P_n" => ("coP_n", n, true),
        "P_n_nonunital" => ("coP_n", n, false),
        other => return Err(OperadError::UnknownName(other.to_string())),
    };
    let mut dual = builtin_cooperad(coname, arnold_n, cap)?;
    if name == "Lie" {
        dual.n = n;
        dual.part = Part::Top;
    }
    Ok(OperadData {
        name: if name.starts_with("P_n") {
            format!("{}[n={}]", name, n)
        } else {
            name.to_string()
        },
        dual,
        unital,
    })
}

impl OperadData {
    pub fn basis(&self, m: usize) -> Vec<OpElem> {
        if m == 0 && !self.unital {
            return Vec::new();
        }
        let b = if m <= 1 {
            self.dual.counital_basis(m)
        } else {
            self.dual.reduced_basis(m)
        };
        b.into_iter().map(OpElem).collect()
    }

    pub fn dim(&self, m: usize) -> usize {
        self.basis(m).len()
    }

    pub fn unit(&self) -> OpElem {
        OpElem(CoElem::unit(self.dual.n, self.dual.k, 1))
    }

    /// Operadic suspension of the dual description.
    pub fn suspend(&self, k: i64) -> OperadData {
        OperadData {
            name: format!("{}{{{}}}", self.name, k),
            dual: suspend(&self.dual, -k),
            unital: self.unital,
        }
    }

    /// Partial composition `p ∘_i q` (1-based `i`), the transpose of the
    /// two-vertex cocomposition.
    pub fn compose(&self, p: &OpElem, i: usize, q_el: &OpElem) -> Lin<OpElem> {
        let a = p.0.arity();
        let b = q_el.0.arity();
        let m = a + b - 1;
        let upper: Vec<usize> = (i - 1..i - 1 + b).collect();
        let mut out = Lin::zero();
        for x in self.basis(m) {
            let d = x.0.split2(&upper, i - 1);
            let c = d.coeff(&(p.0.clone(), q_el.0.clone()));
            if c != q(0) {
                // ⟨x' ⊗ x'', p ⊗ q⟩ = (−1)^{|q||x'|} ⟨x', p⟩⟨x'', q⟩
                let s = sign_scalar(q_el.degree() & 1 == 1 && p.0.degree() & 1 == 1);
                out.add_term(x, c * s);
            }
        }
        out
    }

    /// Input relabeling on the dual basis.
    pub fn act(&self, p: &OpElem, perm: &[usize]) -> Lin<OpElem> {
        let m = perm.len();
        let mut inv = vec![0usize; m];
        for (j, &v) in perm.iter().enumerate() {
            inv[v] = j;
        }
        let mut out = Lin::zero();
        for y in self.basis(m) {
            let c = y.0.act(&inv).coeff(&p.0);
            if c != q(0) {
                out.add_term(y, c);
            }
        }
        out
    }

    /// Checks associativity (sequential and parallel) and unit laws for
    /// basis elements with total arity up to `cap`.
    pub fn check_axioms(&self, cap: usize) -> Result<(), String> {
        let unit = self.unit();
        for a in 1..=cap {
            for p in self.basis(a) {
                for i in 1..=a {
                    if self.compose(&p, i, &unit) != Lin::basis(p.clone()) {
                        return Err(format!("right unit fails on {:?}", p));
                    }
                }
                if self.compose(&unit, 1, &p) != Lin::basis(p.clone()) {
                    return Err(format!("left unit fails on {:?}", p));
                }
            }
        }
        for a in 2..=cap {
            for b in 2..=cap {
                for c in 2..=cap {
                    if a + b + c - 2 > cap {
                        continue;
                    }
                    for x in self.basis(a) {
                        for y in self.basis(b) {
                            for z in self.basis(c) {
                                for i in 1..=a {
                                    for j in 1..=b {
                                        // (x ∘_i y) ∘_{i+j-1} z = x ∘_i (y ∘_j z)
                                        let lhs = self
                                            .compose(&x, i, &y)
                                            .map_linear(|w| self.compose(w, i + j - 1, &z));
                                        let rhs = self
                                            .compose(&y, j, &z)
                                            .map_linear(|w| self.compose(&x, i, w));
                                        if lhs != rhs {
                                            return Err(format!(
                                                "sequential associativity fails: {:?} {:?} {:?}",
                                                x, y, z
                                            ));
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

impl SymElem for OpElem {
    fn act(&self, perm: &[usize]) -> Lin<Self> {
        let mut inv = vec![0usize; perm.len()];
        for (j, &v) in perm.iter().enumerate() {
            inv[v] = j;
        }
        let m = perm.len();
        let part = if self.0.is_unit() && m >= 2 {
            Some(0)
        } else if self.0.is_top() {
            Some(m.saturating_sub(1))
        } else {
            None
        };
        let mut out = Lin::zero();
        for mono in arnold_basis(m, part) {
            let y = CoElem::mono(self.0.n as i64, self.0.k as i64, m, mono);
            let c = y.act(&inv).coeff(&self.0);
            if c != q(0) {
                out.add_term(OpElem(y), c);
            }
        }
        out
    }
    fn elem_degree(&self) -> i64 {
        self.degree()
    }
}

// ---------------------------------------------------------------------------
// Free operads on graded generators.

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symmetry {
    /// The regular representation: every input order is a distinct basis element.
    Free,
    Symmetric,
    Antisymmetric,
}

/// A generating operation with a fixed symmetry type.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymGen {
    pub name: String,
    pub degree: i64,
    pub symmetry: Symmetry,
    /// Input order for the regular representation.
    pub order: Vec<u8>,
}

impl SymGen {
    pub fn new(name: &str, arity: usize, degree: i64, symmetry: Symmetry) -> Self {
        SymGen {
            name: name.to_string(),
            degree,
            symmetry,
            order: (0..arity as u8).collect(),
        }
    }
}

impl fmt::Debug for SymGen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.symmetry == Symmetry::Free {
            let o: Vec<String> = self.order.iter().map(|x| x.to_string()).collect();
            write!(f, "{}[{}]", self.name, o.join(""))
        } else {
            write!(f, "{}", self.name)
        }
    }
}

impl TreeLabel for SymGen {
    fn degree(&self) -> i64 {
        self.degree
    }
    fn arity(&self) -> usize {
        self.order.len()
    }
    fn permute_inputs(&self, perm: &[usize]) -> Lin<Self> {
        match self.symmetry {
            Symmetry::Free => {
                // slot j of the new label holds old slot perm[j]
                let order = perm.iter().map(|&j| self.order[j]).collect();
                Lin::basis(SymGen {
                    order,
                    ..self.clone()
                })
            }
            Symmetry::Symmetric => Lin::basis(self.clone()),
            Symmetry::Antisymmetric => {
                Lin::term(self.clone(), sign_scalar(permutation_parity(perm)))
            }
        }
    }
}

/// The free operad on a finite set of generators, truncated at an arity cap.
#[derive(Clone, Debug)]
pub struct FreeOperad<L: TreeLabel> {
    pub generators: Vec<L>,
    pub cap: usize,
}

pub fn free_operad<L: TreeLabel>(generators: Vec<L>, cap: usize) -> FreeOperad<L> {
    FreeOperad { generators, cap }
}

impl<L: TreeLabel> FreeOperad<L> {
    /// Canonical trees of arity `m` spanning the arity-`m` component.
    pub fn basis(&self, m: usize) -> Vec<Tree<L>> {
        let mut seen: BTreeSet<Tree<L>> = BTreeSet::new();
        let mut frontier: Vec<Tree<L>> = Vec::new();
        if m == 1 {
            seen.insert(Tree::identity());
        }
        for g in &self.generators {
            if g.arity() == 0 || g.arity() > self.cap {
                continue;
            }
            for (t, _) in Tree::corolla(g.clone()).iter() {
                if seen.insert(t.clone()) {
                    frontier.push(t.clone());
                }
            }
        }
        // Grow by grafting corollas at leaves, relabeling leaves in all ways.
        while let Some(t) = frontier.pop() {
            let a = t.arity();
            for g in &self.generators {
                let b = g.arity();
                if b < 1 || a + b - 1 > m.max(a) || a + b - 1 > self.cap {
                    continue;
                }
                for (c, _) in Tree::corolla(g.clone()).iter() {
                    for i in 1..=a as u32 {
                        for (u, _) in compose_at(&t, i, c).iter() {
                            for perm in permutations(u.arity()) {
                                for (v, _) in u.relabel_leaves(|l| perm[l as usize - 1] as u32 + 1).iter() {
                                    if seen.insert(v.clone()) {
                                        frontier.push(v.clone());
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        seen.into_iter().filter(|t| t.arity() == m).collect()
    }

    pub fn compose(&self, t1: &Tree<L>, i: u32, t2: &Tree<L>) -> Lin<Tree<L>> {
        compose_at(t1, i, t2)
    }
}

/// A free algebra over an Arnold-dual operad, up to a word-length cap:
/// coinvariants realized as symmetrized tensors.
#[derive(Clone, Debug)]
pub struct FreeAlgebra {
    pub operad: OperadData,
    pub generators: Vec<(i64, i64)>,
    pub cap: usize,
    /// Basis per word length.
    pub basis: BTreeMap<usize, Vec<Lin<(OpElem, Vec<usize>)>>>,
}

pub fn free_algebra(op: &OperadData, generators: &[(i64, i64)], cap: usize) -> FreeAlgebra {
    let mut basis = BTreeMap::new();
    for m in 0..=cap {
        let mut ech = Echelon::new();
        for word in multisets(generators.len(), m) {
            for p in op.basis(m) {
                ech.insert(symmetrize(op, &p, &word, generators));
            }
        }
        basis.insert(m, ech.basis());
    }
    FreeAlgebra {
        operad: op.clone(),
        generators: generators.to_vec(),
        cap,
        basis,
    }
}

fn multisets(k: usize, m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![Vec::new()];
    }
    if k == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for rest in multisets(k, m - 1) {
        let start = rest.last().copied().unwrap_or(0);
        for g in start..k {
            let mut w = rest.clone();
            w.push(g);
            out.push(w);
        }
    }
    out
}

/// Σ_σ σ·(p ⊗ w), the image of `p ⊗ w` in the coinvariants.
pub fn symmetrize(
    op: &OperadData,
    p: &OpElem,
    word: &[usize],
    generators: &[(i64, i64)],
) -> Lin<(OpElem, Vec<usize>)> {
    let m = word.len();
    let degs: Vec<i64> = word.iter().map(|&g| generators[g].0).collect();
    let mut out = Lin::zero();
    for perm in permutations(m) {
        // input j moves to slot perm[j]
        let mut new_word = vec![0usize; m];
        let mut pos = vec![0usize; m];
        for j in 0..m {
            new_word[perm[j]] = word[j];
            pos[j] = perm[j];
        }
        let s = sign_scalar(koszul_parity(&pos, &degs));
        let mut inv = vec![0usize; m];
        for j in 0..m {
            inv[perm[j]] = j;
        }
        for (pp, c) in op.act(p, &inv).iter() {
            out.add_term((pp.clone(), new_word.clone()), c * &s);
        }
    }
    out
}

impl FreeAlgebra {
    pub fn dim(&self, length: usize) -> usize {
        self.basis.get(&length).map_or(0, |b| b.len())
    }

    /// Whether `p(x_{w_1}, ..)` vanishes in the coinvariants.
    pub fn vanishes(&self, p: &OpElem, word: &[usize]) -> bool {
        symmetrize(&self.operad, p, word, &self.generators).is_zero()
    }
}

/// Canonical single-vertex tree for a cooperad-labeled corolla (helper for
/// tests and cobar).
pub fn corolla_raw<L: TreeLabel>(label: L) -> RawTree<L> {
    let k = label.arity();
    RawTree::corolla(label, (1..=k as u32).map(Input::Leaf).collect())
}

pub fn canonical_corolla<L: TreeLabel>(label: L) -> Lin<Tree<L>> {
    canonicalize(&corolla_raw(label))
}
