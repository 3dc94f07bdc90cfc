//! Exact rational scalars, finitely supported linear combinations, Koszul
//! signs and sparse linear algebra over ℚ.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

pub type Scalar = BigRational;

pub fn q(n: i64) -> Scalar {
    Scalar::from_integer(BigInt::from(n))
}

pub fn qf(n: i64, d: i64) -> Scalar {
    Scalar::new(BigInt::from(n), BigInt::from(d))
}

pub fn sign_scalar(odd: bool) -> Scalar {
    if odd {
        q(-1)
    } else {
        q(1)
    }
}

pub fn factorial(n: usize) -> Scalar {
    (1..=n as i64).fold(q(1), |acc, k| acc * q(k))
}

/// Renders a scalar as `n` or `n/d`.
pub fn fmt_scalar(c: &Scalar) -> String {
    if c.denom().is_one() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GradedError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("not a permutation of 0..{0}")]
    NotPermutation(usize),
    #[error("basis mismatch in composition")]
    BasisMismatch,
    #[error("image term outside the declared target basis: {0}")]
    OutOfBasis(String),
    #[error("term {label} has bidegree ({deg},{wt}), expected ({exp_deg},{exp_wt})")]
    ShiftViolation {
        label: String,
        deg: i64,
        wt: i64,
        exp_deg: i64,
        exp_wt: i64,
    },
}

/// A basis label carrying a cohomological degree and a weight.
pub trait Bigraded {
    fn degree(&self) -> i64;
    fn weight(&self) -> i64;
}

/// Finitely supported ℚ-linear combination of ordered basis labels.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lin<K: Ord> {
    terms: BTreeMap<K, Scalar>,
}

/// A bigraded element is a linear combination of bigraded labels.
pub type BigradedElement<K> = Lin<K>;

impl<K: Ord> Default for Lin<K> {
    fn default() -> Self {
        Lin {
            terms: BTreeMap::new(),
        }
    }
}

impl<K: Ord + Clone> Lin<K> {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn term(k: K, c: Scalar) -> Self {
        let mut l = Self::zero();
        l.add_term(k, c);
        l
    }

    pub fn basis(k: K) -> Self {
        Self::term(k, q(1))
    }

    pub fn add_term(&mut self, k: K, c: Scalar) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&k) {
            Some(v) => {
                *v += c;
                if v.is_zero() {
                    self.terms.remove(&k);
                }
            }
            None => {
                self.terms.insert(k, c);
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Lin<K>, c: &Scalar) {
        if c.is_zero() {
            return;
        }
        for (k, v) in &other.terms {
            self.add_term(k.clone(), v * c);
        }
    }

    pub fn scale(&self, c: &Scalar) -> Lin<K> {
        if c.is_zero() {
            return Lin::zero();
        }
        Lin {
            terms: self
                .terms
                .iter()
                .map(|(k, v)| (k.clone(), v * c))
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, k: &K) -> Scalar {
        self.terms.get(k).cloned().unwrap_or_else(Scalar::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &Scalar)> {
        self.terms.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &K> {
        self.terms.keys()
    }

    pub fn leading(&self) -> Option<(&K, &Scalar)> {
        self.terms.iter().next()
    }

    pub fn remove(&mut self, k: &K) -> Option<Scalar> {
        self.terms.remove(k)
    }

    /// Applies a linear map given on basis labels.
    pub fn map_linear<K2: Ord + Clone>(&self, mut f: impl FnMut(&K) -> Lin<K2>) -> Lin<K2> {
        let mut out = Lin::zero();
        for (k, c) in &self.terms {
            out.add_scaled(&f(k), c);
        }
        out
    }

    pub fn map_keys<K2: Ord + Clone>(&self, mut f: impl FnMut(&K) -> K2) -> Lin<K2> {
        let mut out = Lin::zero();
        for (k, c) in &self.terms {
            out.add_term(f(k), c.clone());
        }
        out
    }

    pub fn filter(&self, mut keep: impl FnMut(&K) -> bool) -> Lin<K> {
        Lin {
            terms: self
                .terms
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn into_terms(self) -> BTreeMap<K, Scalar> {
        self.terms
    }

    pub fn from_terms(it: impl IntoIterator<Item = (K, Scalar)>) -> Self {
        let mut l = Lin::zero();
        for (k, c) in it {
            l.add_term(k, c);
        }
        l
    }
}

impl<K: Ord + Clone + Bigraded> Lin<K> {
    /// The common bidegree of all terms, if homogeneous and nonzero.
    pub fn bidegree(&self) -> Option<(i64, i64)> {
        let mut it = self.terms.keys().map(|k| (k.degree(), k.weight()));
        let first = it.next()?;
        if it.all(|b| b == first) {
            Some(first)
        } else {
            None
        }
    }

    pub fn weight_part(&self, w: i64) -> Lin<K> {
        self.filter(|k| k.weight() == w)
    }

    pub fn truncate_weight(&self, max_w: i64) -> Lin<K> {
        self.filter(|k| k.weight() <= max_w)
    }
}

impl<K: Ord + Clone + fmt::Display> fmt::Display for Lin<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in &self.terms {
            let neg = c.is_negative();
            let abs = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            first = false;
            if abs.is_one() {
                write!(f, "{}", k)?;
            } else {
                write!(f, "{}*{}", fmt_scalar(&abs), k)?;
            }
        }
        Ok(())
    }
}

impl<K: Ord + fmt::Debug> fmt::Debug for Lin<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.terms.iter().map(|(k, v)| (k, fmt_scalar(v))))
            .finish()
    }
}

impl<K: Ord + Clone> AddAssign<&Lin<K>> for Lin<K> {
    fn add_assign(&mut self, rhs: &Lin<K>) {
        for (k, v) in &rhs.terms {
            self.add_term(k.clone(), v.clone());
        }
    }
}

impl<K: Ord + Clone> SubAssign<&Lin<K>> for Lin<K> {
    fn sub_assign(&mut self, rhs: &Lin<K>) {
        for (k, v) in &rhs.terms {
            self.add_term(k.clone(), -v.clone());
        }
    }
}

impl<K: Ord + Clone> Add for Lin<K> {
    type Output = Lin<K>;
    fn add(mut self, rhs: Lin<K>) -> Lin<K> {
        self += &rhs;
        self
    }
}

impl<K: Ord + Clone> Sub for Lin<K> {
    type Output = Lin<K>;
    fn sub(mut self, rhs: Lin<K>) -> Lin<K> {
        self -= &rhs;
        self
    }
}

impl<K: Ord + Clone> Neg for Lin<K> {
    type Output = Lin<K>;
    fn neg(self) -> Lin<K> {
        self.scale(&q(-1))
    }
}

impl<K: Ord + Clone> Mul<&Scalar> for &Lin<K> {
    type Output = Lin<K>;
    fn mul(self, rhs: &Scalar) -> Lin<K> {
        self.scale(rhs)
    }
}

/// Parity of the Koszul sign of `perm` acting on graded items:
/// position `i` moves to position `perm[i]`.
pub fn koszul_parity(perm: &[usize], degrees: &[i64]) -> bool {
    let mut odd = false;
    for i in 0..perm.len() {
        if degrees[i] & 1 == 0 {
            continue;
        }
        for j in (i + 1)..perm.len() {
            if perm[i] > perm[j] && degrees[j] & 1 != 0 {
                odd = !odd;
            }
        }
    }
    odd
}

fn check_permutation(perm: &[usize]) -> Result<(), GradedError> {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return Err(GradedError::NotPermutation(perm.len()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Product over inversions `i<j, σ(i)>σ(j)` of `(-1)^{deg_i deg_j}`.
/// The permutation is 0-based: item `i` moves to position `perm[i]`.
pub fn koszul_sign(perm: &[usize], degrees: &[i64]) -> Result<Scalar, GradedError> {
    if perm.len() != degrees.len() {
        return Err(GradedError::LengthMismatch(perm.len(), degrees.len()));
    }
    check_permutation(perm)?;
    Ok(sign_scalar(koszul_parity(perm, degrees)))
}

/// Koszul parity of bringing `items` (listed in current order, each with
/// a sort key and a degree) into increasing key order.
pub fn sort_parity<T: Ord>(keys: &[T], degrees: &[i64]) -> bool {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut perm = vec![0; keys.len()];
    for (newpos, &old) in idx.iter().enumerate() {
        perm[old] = newpos;
    }
    koszul_parity(&perm, degrees)
}

pub fn permutation_parity(perm: &[usize]) -> bool {
    let ones = vec![1; perm.len()];
    koszul_parity(perm, &ones)
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        let mut i = n;
        while i >= 2 && cur[i - 2] >= cur[i - 1] {
            i -= 1;
        }
        if i < 2 {
            break;
        }
        let pivot = i - 2;
        let mut j = n - 1;
        while cur[j] <= cur[pivot] {
            j -= 1;
        }
        cur.swap(pivot, j);
        cur[pivot + 1..].reverse();
    }
    out
}

/// Formal suspension marker: shifting by `a` then `-a` is the identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DegreeShift {
    pub amount: i64,
}

impl DegreeShift {
    pub fn new(amount: i64) -> Self {
        DegreeShift { amount }
    }

    /// Degree of an element of `V[amount]` that had degree `d` in `V`.
    pub fn apply(&self, d: i64) -> i64 {
        d - self.amount
    }

    pub fn then(&self, other: DegreeShift) -> DegreeShift {
        DegreeShift::new(self.amount + other.amount)
    }

    pub fn inverse(&self) -> DegreeShift {
        DegreeShift::new(-self.amount)
    }
}

/// Sparse matrix between two finite ordered bases.
#[derive(Clone, Debug)]
pub struct LinearMap<S: Ord, T: Ord> {
    source: Vec<S>,
    target: Vec<T>,
    source_index: BTreeMap<S, usize>,
    target_index: BTreeMap<T, usize>,
    cols: Vec<Lin<usize>>,
    pub degree_shift: i64,
    pub weight_shift: i64,
}

impl<S: Ord + Clone + fmt::Debug, T: Ord + Clone + fmt::Debug> LinearMap<S, T> {
    pub fn from_fn(
        source: Vec<S>,
        target: Vec<T>,
        degree_shift: i64,
        weight_shift: i64,
        mut f: impl FnMut(&S) -> Lin<T>,
    ) -> Result<Self, GradedError> {
        let target_index: BTreeMap<T, usize> = target
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let mut cols = Vec::with_capacity(source.len());
        for s in &source {
            let img = f(s);
            let mut col = Lin::zero();
            for (t, c) in img.iter() {
                let i = target_index
                    .get(t)
                    .ok_or_else(|| GradedError::OutOfBasis(format!("{:?}", t)))?;
                col.add_term(*i, c.clone());
            }
            cols.push(col);
        }
        let source_index = source
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(LinearMap {
            source,
            source_index,
            target,
            target_index,
            cols,
            degree_shift,
            weight_shift,
        })
    }

    pub fn identity(basis: Vec<S>) -> LinearMap<S, S> {
        LinearMap::from_fn(basis.clone(), basis, 0, 0, |s| Lin::basis(s.clone()))
            .expect("identity stays in basis")
    }

    pub fn source(&self) -> &[S] {
        &self.source
    }

    pub fn target(&self) -> &[T] {
        &self.target
    }

    pub fn column(&self, j: usize) -> &Lin<usize> {
        &self.cols[j]
    }

    pub fn entry(&self, i: usize, j: usize) -> Scalar {
        self.cols[j].coeff(&i)
    }

    pub fn apply(&self, v: &Lin<S>) -> Lin<T> {
        let mut out = Lin::zero();
        for (s, c) in v.iter() {
            if let Some(&j) = self.source_index.get(s) {
                for (i, a) in self.cols[j].iter() {
                    out.add_term(self.target[*i].clone(), a * c);
                }
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.cols.iter().all(|c| c.is_zero())
    }

    pub fn rank(&self) -> usize {
        let mut e = Echelon::new();
        for c in &self.cols {
            e.insert(c.clone());
        }
        e.rank()
    }

    pub fn target_position(&self, t: &T) -> Option<usize> {
        self.target_index.get(t).copied()
    }

    /// Some `x` with `self(x) = b`, if one exists.
    pub fn solve(&self, b: &Lin<T>) -> Option<Lin<S>> {
        let mut rhs = Lin::zero();
        for (t, c) in b.iter() {
            rhs.add_term(*self.target_index.get(t)?, c.clone());
        }
        let mut e = TrackedEchelon::new();
        for (j, c) in self.cols.iter().enumerate() {
            e.insert(c.clone(), Lin::basis(j));
        }
        let (rem, combo) = e.reduce(&rhs);
        if !rem.is_zero() {
            return None;
        }
        Some(combo.map_keys(|j| self.source[*j].clone()))
    }

    /// A target vector not in the image, if the map is not surjective.
    pub fn cokernel_witness(&self) -> Option<T> {
        let mut e = Echelon::new();
        for c in &self.cols {
            e.insert(c.clone());
        }
        (0..self.target.len())
            .find(|i| !e.contains(&Lin::basis(*i)))
            .map(|i| self.target[i].clone())
    }
}

impl<S: Ord + Clone + fmt::Debug + Bigraded, T: Ord + Clone + fmt::Debug + Bigraded>
    LinearMap<S, T>
{
    /// Checks that every image term has the shifted bidegree of its source.
    pub fn check_shifts(&self) -> Result<(), GradedError> {
        for (j, s) in self.source.iter().enumerate() {
            for (i, _) in self.cols[j].iter() {
                let t = &self.target[*i];
                let (ed, ew) = (s.degree() + self.degree_shift, s.weight() + self.weight_shift);
                if t.degree() != ed || t.weight() != ew {
                    return Err(GradedError::ShiftViolation {
                        label: format!("{:?}", t),
                        deg: t.degree(),
                        wt: t.weight(),
                        exp_deg: ed,
                        exp_wt: ew,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Exact kernel basis in reduced echelon form, ordered by the free source
/// columns.
pub fn kernel_basis<S: Ord + Clone + fmt::Debug, T: Ord + Clone + fmt::Debug>(
    map: &LinearMap<S, T>,
) -> Vec<Lin<S>> {
    let n = map.source.len();
    // Row-reduce the transpose view: rows indexed by target, entries by source column.
    let mut rows: BTreeMap<usize, Lin<usize>> = BTreeMap::new();
    for (j, col) in map.cols.iter().enumerate() {
        for (i, c) in col.iter() {
            rows.entry(*i).or_default().add_term(j, c.clone());
        }
    }
    let mut pivots: BTreeMap<usize, Lin<usize>> = BTreeMap::new();
    for (_, row) in rows {
        let mut r = row;
        for (p, prow) in &pivots {
            let c = r.coeff(p);
            if !c.is_zero() {
                r.add_scaled(prow, &(-c));
            }
        }
        if let Some((&lead, c)) = r.leading() {
            let inv = c.recip();
            let r = r.scale(&inv);
            let keys: Vec<usize> = pivots.keys().copied().collect();
            for p in keys {
                let prow = pivots.get_mut(&p).unwrap();
                let c = prow.coeff(&lead);
                if !c.is_zero() {
                    prow.add_scaled(&r, &(-c));
                }
            }
            pivots.insert(lead, r);
        }
    }
    let mut out = Vec::new();
    for f in 0..n {
        if pivots.contains_key(&f) {
            continue;
        }
        let mut v: Lin<S> = Lin::basis(map.source[f].clone());
        for (p, prow) in &pivots {
            let c = prow.coeff(&f);
            if !c.is_zero() {
                v.add_term(map.source[*p].clone(), -c);
            }
        }
        out.push(v);
    }
    out
}

pub fn compose_linear<S, T, U>(
    f: &LinearMap<T, U>,
    g: &LinearMap<S, T>,
) -> Result<LinearMap<S, U>, GradedError>
where
    S: Ord + Clone + fmt::Debug,
    T: Ord + Clone + fmt::Debug,
    U: Ord + Clone + fmt::Debug,
{
    if g.target != f.source {
        return Err(GradedError::BasisMismatch);
    }
    let cols = g
        .cols
        .iter()
        .map(|col| {
            let mut out = Lin::zero();
            for (k, c) in col.iter() {
                out.add_scaled(&f.cols[*k], c);
            }
            out
        })
        .collect();
    Ok(LinearMap {
        source: g.source.clone(),
        source_index: g.source_index.clone(),
        target: f.target.clone(),
        target_index: f.target_index.clone(),
        cols,
        degree_shift: f.degree_shift + g.degree_shift,
        weight_shift: f.weight_shift + g.weight_shift,
    })
}

/// Incrementally built reduced echelon basis of a subspace.
#[derive(Clone, Debug)]
pub struct Echelon<K: Ord> {
    pivots: BTreeMap<K, Lin<K>>,
}

impl<K: Ord + Clone> Default for Echelon<K> {
    fn default() -> Self {
        Echelon {
            pivots: BTreeMap::new(),
        }
    }
}

impl<K: Ord + Clone> Echelon<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reduce(&self, v: &Lin<K>) -> Lin<K> {
        let mut r = v.clone();
        loop {
            let hit = r
                .keys()
                .find(|k| self.pivots.contains_key(*k))
                .cloned();
            match hit {
                Some(k) => {
                    let c = r.coeff(&k);
                    r.add_scaled(&self.pivots[&k], &(-c));
                }
                None => return r,
            }
        }
    }

    /// Adds `v`; returns whether it was independent.
    pub fn insert(&mut self, v: Lin<K>) -> bool {
        let r = self.reduce(&v);
        let Some((lead, c)) = r.leading() else {
            return false;
        };
        let lead = lead.clone();
        let r = r.scale(&c.recip());
        for prow in self.pivots.values_mut() {
            let c = prow.coeff(&lead);
            if !c.is_zero() {
                prow.add_scaled(&r, &(-c));
            }
        }
        self.pivots.insert(lead, r);
        true
    }

    pub fn contains(&self, v: &Lin<K>) -> bool {
        self.reduce(v).is_zero()
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn basis(&self) -> Vec<Lin<K>> {
        self.pivots.values().cloned().collect()
    }
}

/// Echelon basis that remembers how each pivot row was assembled.
#[derive(Clone, Debug)]
pub struct TrackedEchelon<K: Ord, L: Ord> {
    pivots: BTreeMap<K, (Lin<K>, Lin<L>)>,
}

impl<K: Ord + Clone, L: Ord + Clone> Default for TrackedEchelon<K, L> {
    fn default() -> Self {
        TrackedEchelon {
            pivots: BTreeMap::new(),
        }
    }
}

impl<K: Ord + Clone, L: Ord + Clone> TrackedEchelon<K, L> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `(remainder, combo)` with `v = remainder + Σ combo·inputs`.
    pub fn reduce(&self, v: &Lin<K>) -> (Lin<K>, Lin<L>) {
        let mut r = v.clone();
        let mut combo = Lin::zero();
        loop {
            let hit = r
                .keys()
                .find(|k| self.pivots.contains_key(*k))
                .cloned();
            match hit {
                Some(k) => {
                    let c = r.coeff(&k);
                    let (row, tag) = &self.pivots[&k];
                    r.add_scaled(row, &(-c.clone()));
                    combo.add_scaled(tag, &c);
                }
                None => return (r, combo),
            }
        }
    }

    pub fn insert(&mut self, v: Lin<K>, tag: Lin<L>) -> bool {
        let (r, combo) = self.reduce(&v);
        let Some((lead, c)) = r.leading() else {
            return false;
        };
        let lead = lead.clone();
        let inv = c.recip();
        let mut t = tag;
        t.add_scaled(&combo, &q(-1));
        let row = r.scale(&inv);
        let t = t.scale(&inv);
        self.pivots.insert(lead, (row, t));
        true
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutations_count() {
        assert_eq!(permutations(4).len(), 24);
        assert_eq!(permutations(0).len(), 1);
    }

    #[test]
    fn tracked_solve_roundtrip() {
        let map = LinearMap::from_fn(vec![0u8, 1, 2], vec!['a', 'b'], 0, 0, |s| match s {
            0 => Lin::basis('a'),
            1 => Lin::basis('a') + Lin::basis('b'),
            _ => Lin::basis('b').scale(&q(2)),
        })
        .unwrap();
        let b = Lin::term('a', q(3)) + Lin::term('b', q(5));
        let x = map.solve(&b).unwrap();
        assert_eq!(map.apply(&x), b);
    }
}
