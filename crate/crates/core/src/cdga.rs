//! Finitely presented graded-commutative dg algebras over ℚ: semi-free
//! presentations, morphisms, Koszul resolutions of regular sequences,
//! Kähler differentials and graph morphisms.
//!
//! Every computation runs inside a box given by a monomial length cap. Each
//! generator carries a length weight (1 for ordinary generators, the length
//! of `g` for the Koszul generator killing `g`) so that differentials of
//! Koszul models stay homogeneous.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::gradedlin::{fmt_scalar, q, sign_scalar, Echelon, Lin, LinearMap, Scalar};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CdgaError {
    #[error("d({gen}) has degree {found}, expected {expected}")]
    DegreeMismatch { gen: String, expected: i64, found: i64 },
    #[error("d²({gen}) = {residual} ≠ 0")]
    NotSquareZero { gen: String, residual: String },
    #[error("image of {gen} has degree {found}, expected {expected}")]
    MorphismDegree { gen: String, expected: i64, found: i64 },
    #[error("morphism does not commute with d on {gen}: {residual}")]
    NotChainMap { gen: String, residual: String },
    #[error("expected {expected} entries, got {found}")]
    Arity { expected: usize, found: usize },
    #[error("{0} is not homogeneous")]
    NotHomogeneous(String),
    #[error("{0} is not a semi-free extension")]
    NotSemiFree(String),
    #[error("term {0} leaves the box")]
    OutOfBox(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Exponent vector over the generators of a ring.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn one(n: usize) -> Self {
        Monomial(vec![0; n])
    }

    pub fn len(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }
}

pub type Poly = Lin<Monomial>;

/// The free graded-commutative algebra on named generators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyRing {
    pub names: Vec<String>,
    pub degrees: Vec<i64>,
    pub lengths: Vec<u32>,
}

impl PolyRing {
    pub fn new(gens: &[(&str, i64)]) -> Self {
        PolyRing {
            names: gens.iter().map(|(n, _)| n.to_string()).collect(),
            degrees: gens.iter().map(|(_, d)| *d).collect(),
            lengths: vec![1; gens.len()],
        }
    }

    pub fn ngens(&self) -> usize {
        self.names.len()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn odd(&self, i: usize) -> bool {
        self.degrees[i].rem_euclid(2) == 1
    }

    pub fn one(&self) -> Poly {
        Lin::basis(Monomial::one(self.ngens()))
    }

    pub fn constant(&self, c: Scalar) -> Poly {
        Lin::term(Monomial::one(self.ngens()), c)
    }

    pub fn var(&self, i: usize) -> Poly {
        let mut m = Monomial::one(self.ngens());
        m.0[i] = 1;
        Lin::basis(m)
    }

    pub fn mono_degree(&self, m: &Monomial) -> i64 {
        m.0.iter().zip(&self.degrees).map(|(&e, &d)| e as i64 * d).sum()
    }

    pub fn mono_length(&self, m: &Monomial) -> u32 {
        m.0.iter().zip(&self.lengths).map(|(&e, &l)| e * l).sum()
    }

    /// The common degree of all terms, if any.
    pub fn degree(&self, p: &Poly) -> Option<i64> {
        let mut it = p.keys().map(|m| self.mono_degree(m));
        let d = it.next()?;
        it.all(|e| e == d).then_some(d)
    }

    pub fn max_length(&self, p: &Poly) -> u32 {
        p.keys().map(|m| self.mono_length(m)).max().unwrap_or(0)
    }

    /// Product of monomials in canonical order with its Koszul sign; `None`
    /// when an odd generator would appear twice.
    pub fn mul_mono(&self, a: &Monomial, b: &Monomial) -> Option<(Monomial, bool)> {
        let n = self.ngens();
        let mut odd = false;
        let mut later_odd_in_a = 0u32;
        let mut out = vec![0u32; n];
        for i in (0..n).rev() {
            if self.odd(i) {
                if a.0[i] + b.0[i] > 1 {
                    return None;
                }
                if b.0[i] == 1 && later_odd_in_a % 2 == 1 {
                    odd = !odd;
                }
                later_odd_in_a += a.0[i];
            }
            out[i] = a.0[i] + b.0[i];
        }
        Some((Monomial(out), odd))
    }

    pub fn mul(&self, a: &Poly, b: &Poly) -> Poly {
        let mut out = Lin::zero();
        for (ma, ca) in a.iter() {
            for (mb, cb) in b.iter() {
                if let Some((m, odd)) = self.mul_mono(ma, mb) {
                    out.add_term(m, sign_scalar(odd) * ca * cb);
                }
            }
        }
        out
    }

    pub fn pow(&self, a: &Poly, e: u32) -> Poly {
        (0..e).fold(self.one(), |acc, _| self.mul(&acc, a))
    }

    /// Left derivation of the given degree determined by its values on
    /// generators.
    pub fn derivation(&self, p: &Poly, deg: i64, img: &dyn Fn(usize) -> Poly) -> Poly {
        let mut out = Lin::zero();
        let n = self.ngens();
        for (m, c) in p.iter() {
            for i in 0..n {
                let e = m.0[i];
                if e == 0 {
                    continue;
                }
                let di = img(i);
                if di.is_zero() {
                    continue;
                }
                let mut pre = Monomial::one(n);
                pre.0[..i].copy_from_slice(&m.0[..i]);
                pre.0[i] = e - 1;
                let mut post = Monomial::one(n);
                post.0[i + 1..].copy_from_slice(&m.0[i + 1..]);
                let pre_deg: i64 = (0..i).map(|j| m.0[j] as i64 * self.degrees[j]).sum();
                let s = sign_scalar((deg * pre_deg).rem_euclid(2) == 1) * q(e as i64) * c;
                let t = self.mul(&self.mul(&Lin::basis(pre), &di), &Lin::basis(post));
                out.add_scaled(&t, &s);
            }
        }
        out
    }

    /// Left partial derivative `∂/∂x_i`.
    pub fn partial(&self, p: &Poly, i: usize) -> Poly {
        self.derivation(p, -self.degrees[i], &|j| if j == i { self.one() } else { Lin::zero() })
    }

    /// Monomials of the given degree and length weight, in a fixed order.
    pub fn monomials(&self, degree: i64, length: u32) -> Vec<Monomial> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; self.ngens()];
        self.enumerate(0, length, degree, &mut cur, &mut out);
        out.sort_by(|a, b| b.0.cmp(&a.0));
        out
    }

    fn enumerate(&self, i: usize, left: u32, deg: i64, cur: &mut Vec<u32>, out: &mut Vec<Monomial>) {
        if i == self.ngens() {
            if left == 0 && deg == 0 {
                out.push(Monomial(cur.clone()));
            }
            return;
        }
        let l = self.lengths[i];
        let max = if self.odd(i) { 1 } else if l == 0 { 0 } else { left / l };
        for e in 0..=max {
            if e * l > left {
                break;
            }
            cur[i] = e;
            self.enumerate(i + 1, left - e * l, deg - e as i64 * self.degrees[i], cur, out);
        }
        cur[i] = 0;
    }

    /// Monomials of the given degree with length weight at most `max_len`.
    pub fn monomials_upto(&self, degree: i64, max_len: u32) -> Vec<Monomial> {
        (0..=max_len).flat_map(|l| self.monomials(degree, l)).collect()
    }

    pub fn fmt_mono(&self, m: &Monomial) -> String {
        let parts: Vec<String> = m
            .0
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, &e)| if e == 1 { self.names[i].clone() } else { format!("{}^{}", self.names[i], e) })
            .collect();
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join("*")
        }
    }

    pub fn fmt(&self, p: &Poly) -> String {
        if p.is_zero() {
            return "0".into();
        }
        let mut s = String::new();
        let mut terms: Vec<(&Monomial, &Scalar)> = p.iter().collect();
        terms.sort_by(|a, b| (a.0.len(), b.0).cmp(&(b.0.len(), a.0)));
        for (k, (m, c)) in terms.into_iter().enumerate() {
            let neg = *c < q(0);
            let a = if neg { -c.clone() } else { c.clone() };
            if k > 0 {
                s.push_str(if neg { " - " } else { " + " });
            } else if neg {
                s.push('-');
            }
            if m.is_one() {
                s.push_str(&fmt_scalar(&a));
            } else if a == q(1) {
                s.push_str(&self.fmt_mono(m));
            } else {
                s.push_str(&format!("{}*{}", fmt_scalar(&a), self.fmt_mono(m)));
            }
        }
        s
    }

    /// Parses `±`-separated terms of the form `c*x^2*y` with rational `c`;
    /// `·` also multiplies.
    pub fn parse(&self, src: &str) -> Result<Poly, CdgaError> {
        let src = src.replace('·', "*").replace('−', "-");
        let mut out = Lin::zero();
        let mut rest = src.trim();
        if rest.is_empty() {
            return Err(CdgaError::Parse("empty polynomial".into()));
        }
        if rest == "0" {
            return Ok(out);
        }
        let mut sign = q(1);
        if let Some(r) = rest.strip_prefix('-') {
            sign = q(-1);
            rest = r.trim_start();
        } else if let Some(r) = rest.strip_prefix('+') {
            rest = r.trim_start();
        }
        loop {
            let end = rest.find(['+', '-']).unwrap_or(rest.len());
            let term = rest[..end].trim();
            out += &self.parse_term(term)?.scale(&sign);
            if end == rest.len() {
                break;
            }
            sign = if rest[end..].starts_with('-') { q(-1) } else { q(1) };
            rest = rest[end + 1..].trim_start();
        }
        Ok(out)
    }

    fn parse_term(&self, term: &str) -> Result<Poly, CdgaError> {
        if term.is_empty() {
            return Err(CdgaError::Parse("missing term".into()));
        }
        let mut acc = self.one();
        for f in term.split('*').map(str::trim) {
            if f.is_empty() {
                return Err(CdgaError::Parse(format!("bad term '{}'", term)));
            }
            if f.chars().next().unwrap().is_ascii_digit() {
                let c = parse_rational(f)?;
                acc = acc.scale(&c);
                continue;
            }
            let (name, e) = match f.split_once('^') {
                Some((n, e)) => (n.trim(), e.trim().parse::<u32>().map_err(|_| CdgaError::Parse(format!("bad exponent in '{}'", f)))?),
                None => (f, 1),
            };
            let i = self.index(name).ok_or_else(|| CdgaError::Parse(format!("unknown generator '{}'", name)))?;
            acc = self.mul(&acc, &self.pow(&self.var(i), e));
        }
        Ok(acc)
    }
}

pub fn parse_rational(s: &str) -> Result<Scalar, CdgaError> {
    let bad = || CdgaError::Parse(format!("bad coefficient '{}'", s));
    match s.split_once('/') {
        Some((a, b)) => {
            let a: i64 = a.trim().parse().map_err(|_| bad())?;
            let b: i64 = b.trim().parse().map_err(|_| bad())?;
            if b == 0 {
                return Err(bad());
            }
            Ok(q(a) / q(b))
        }
        None => Ok(q(s.trim().parse().map_err(|_| bad())?)),
    }
}

/// A semi-free cdga: generators with degrees and a degree +1 differential.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CdgaPresentation {
    pub ring: PolyRing,
    pub d: Vec<Poly>,
}

impl CdgaPresentation {
    pub fn new(ring: PolyRing, d: Vec<Poly>) -> Result<Self, CdgaError> {
        if d.len() != ring.ngens() {
            return Err(CdgaError::Arity {
                expected: ring.ngens(),
                found: d.len(),
            });
        }
        Ok(CdgaPresentation { ring, d })
    }

    /// Zero differential.
    pub fn free(gens: &[(&str, i64)]) -> Self {
        let ring = PolyRing::new(gens);
        let d = vec![Lin::zero(); ring.ngens()];
        CdgaPresentation { ring, d }
    }

    pub fn ngens(&self) -> usize {
        self.ring.ngens()
    }

    pub fn differential(&self, p: &Poly) -> Poly {
        self.ring.derivation(p, 1, &|i| self.d[i].clone())
    }

    pub fn has_zero_differential(&self) -> bool {
        self.d.iter().all(|p| p.is_zero())
    }

    /// Checks degrees of the differential and d² = 0 on generators;
    /// Leibniz holds by construction.
    pub fn validate(&self) -> Result<(), CdgaError> {
        for i in 0..self.ngens() {
            for m in self.d[i].keys() {
                let found = self.ring.mono_degree(m);
                if found != self.ring.degrees[i] + 1 {
                    return Err(CdgaError::DegreeMismatch {
                        gen: self.ring.names[i].clone(),
                        expected: self.ring.degrees[i] + 1,
                        found,
                    });
                }
            }
        }
        for i in 0..self.ngens() {
            let dd = self.differential(&self.d[i]);
            if !dd.is_zero() {
                return Err(CdgaError::NotSquareZero {
                    gen: self.ring.names[i].clone(),
                    residual: self.ring.fmt(&dd),
                });
            }
        }
        Ok(())
    }

    /// The differential on the box `(degree, length)` as a matrix; errors if
    /// an image term has a different length weight.
    pub fn d_matrix(&self, degree: i64, length: u32) -> Result<LinearMap<Monomial, Monomial>, CdgaError> {
        let src = self.ring.monomials(degree, length);
        let tgt = self.ring.monomials(degree + 1, length);
        let mut err = None;
        let map = LinearMap::from_fn(src, tgt, 1, 0, |m| {
            let img = self.differential(&Lin::basis(m.clone()));
            if let Some(bad) = img.keys().find(|t| self.ring.mono_length(t) != length) {
                err = Some(CdgaError::OutOfBox(self.ring.fmt_mono(bad)));
                return Lin::zero();
            }
            img
        })
        .map_err(|e| CdgaError::OutOfBox(e.to_string()))?;
        match err {
            Some(e) => Err(e),
            None => Ok(map),
        }
    }

    /// dim H^degree in the given length weight.
    pub fn cohomology_rank(&self, degree: i64, length: u32) -> Result<usize, CdgaError> {
        let out = self.d_matrix(degree, length)?;
        let inc = self.d_matrix(degree - 1, length)?;
        Ok(out.source().len() - out.rank() - inc.rank())
    }

    /// Tensor product with disjoint generators; clashing names of `other`
    /// get a prime.
    pub fn tensor(&self, other: &CdgaPresentation) -> CdgaPresentation {
        let n = self.ngens();
        let m = other.ngens();
        let mut ring = self.ring.clone();
        for j in 0..m {
            let mut name = other.ring.names[j].clone();
            while ring.names.contains(&name) {
                name.push('\'');
            }
            ring.names.push(name);
            ring.degrees.push(other.ring.degrees[j]);
            ring.lengths.push(other.ring.lengths[j]);
        }
        let left = |p: &Poly| p.map_keys(|mo| Monomial(mo.0.iter().copied().chain(std::iter::repeat_n(0, m)).collect()));
        let right = |p: &Poly| p.map_keys(|mo| Monomial(std::iter::repeat_n(0, n).chain(mo.0.iter().copied()).collect()));
        let d = self.d.iter().map(left).chain(other.d.iter().map(right)).collect();
        CdgaPresentation { ring, d }
    }
}

/// A degree-zero algebra map given on generators.
#[derive(Clone, Debug)]
pub struct CdgaMorphism {
    pub source: CdgaPresentation,
    pub target: CdgaPresentation,
    pub images: Vec<Poly>,
}

impl CdgaMorphism {
    pub fn new(source: CdgaPresentation, target: CdgaPresentation, images: Vec<Poly>) -> Result<Self, CdgaError> {
        if images.len() != source.ngens() {
            return Err(CdgaError::Arity {
                expected: source.ngens(),
                found: images.len(),
            });
        }
        for (i, img) in images.iter().enumerate() {
            for m in img.keys() {
                let found = target.ring.mono_degree(m);
                if found != source.ring.degrees[i] {
                    return Err(CdgaError::MorphismDegree {
                        gen: source.ring.names[i].clone(),
                        expected: source.ring.degrees[i],
                        found,
                    });
                }
            }
        }
        let f = CdgaMorphism { source, target, images };
        for i in 0..f.source.ngens() {
            let r = f.apply(&f.source.d[i]) - f.target.differential(&f.images[i]);
            if !r.is_zero() {
                return Err(CdgaError::NotChainMap {
                    gen: f.source.ring.names[i].clone(),
                    residual: f.target.ring.fmt(&r),
                });
            }
        }
        Ok(f)
    }

    pub fn identity(a: &CdgaPresentation) -> Self {
        let images = (0..a.ngens()).map(|i| a.ring.var(i)).collect();
        CdgaMorphism {
            source: a.clone(),
            target: a.clone(),
            images,
        }
    }

    pub fn apply(&self, p: &Poly) -> Poly {
        let t = &self.target.ring;
        let mut out = Lin::zero();
        for (m, c) in p.iter() {
            let mut acc = t.one();
            for (i, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    acc = t.mul(&acc, &t.pow(&self.images[i], e));
                }
            }
            out.add_scaled(&acc, c);
        }
        out
    }

    /// For a semi-free extension, the target generator hit by each source
    /// generator.
    pub fn extension_indices(&self) -> Result<Vec<usize>, CdgaError> {
        let mut idx = Vec::new();
        for (i, img) in self.images.iter().enumerate() {
            let hit = (0..self.target.ngens()).find(|&j| *img == self.target.ring.var(j));
            match hit {
                Some(j) if !idx.contains(&j) && self.target.d[j] == self.apply(&self.source.d[i]) => idx.push(j),
                _ => return Err(CdgaError::NotSemiFree(self.source.ring.names[i].clone())),
            }
        }
        Ok(idx)
    }
}

/// `g: A ⊗ B → B` with `g(a ⊗ 1) = f(a)` and `g(1 ⊗ b) = b`.
pub fn graph_morphism(f: &CdgaMorphism) -> Result<CdgaMorphism, CdgaError> {
    let src = f.source.tensor(&f.target);
    let mut images = f.images.clone();
    images.extend((0..f.target.ngens()).map(|j| f.target.ring.var(j)));
    CdgaMorphism::new(src, f.target.clone(), images)
}

/// Span of `m·g` over monomials `m` with total length weight at most
/// `max_len`, in the given degree.
pub fn ideal_span(ring: &PolyRing, gens: &[Poly], degree: i64, max_len: u32) -> Echelon<Monomial> {
    let mut e = Echelon::new();
    for g in gens {
        let (Some(gd), gl) = (ring.degree(g), ring.max_length(g)) else {
            continue;
        };
        if gl > max_len {
            continue;
        }
        for m in ring.monomials_upto(degree - gd, max_len - gl) {
            e.insert(ring.mul(&Lin::basis(m), g));
        }
    }
    e
}

/// Whether `p` lies in the ideal generated by `gens`, decided within the box.
pub fn in_ideal(ring: &PolyRing, gens: &[Poly], p: &Poly, max_len: u32) -> bool {
    if p.is_zero() {
        return true;
    }
    let Some(d) = ring.degree(p) else {
        let mut parts: BTreeMap<i64, Poly> = BTreeMap::new();
        for (m, c) in p.iter() {
            parts.entry(ring.mono_degree(m)).or_default().add_term(m.clone(), c.clone());
        }
        return parts.values().all(|x| in_ideal(ring, gens, x, max_len));
    };
    ideal_span(ring, gens, d, max_len.max(ring.max_length(p))).contains(p)
}

/// `A[ε₁, …, ε_k]` with `dε_i = g_i` and `|ε_i| = |g_i| − 1`.
#[derive(Clone, Debug)]
pub struct KoszulResolution {
    pub base: CdgaPresentation,
    pub seq: Vec<Poly>,
    pub model: CdgaPresentation,
    pub inclusion: CdgaMorphism,
    /// `None` when the base differential is nonzero and the rank test does
    /// not apply.
    pub regular_at_cap: Option<bool>,
    pub max_len: u32,
}

impl KoszulResolution {
    /// Indices of the Koszul generators in the model.
    pub fn koszul_generators(&self) -> std::ops::Range<usize> {
        self.base.ngens()..self.model.ngens()
    }
}

pub fn koszul_resolve(a: &CdgaPresentation, seq: &[Poly], max_len: u32) -> Result<KoszulResolution, CdgaError> {
    let n = a.ngens();
    let k = seq.len();
    let mut ring = a.ring.clone();
    for (i, g) in seq.iter().enumerate() {
        let deg = a.ring.degree(g).ok_or_else(|| CdgaError::NotHomogeneous(a.ring.fmt(g)))?;
        let lens: Vec<u32> = g.keys().map(|m| a.ring.mono_length(m)).collect();
        if lens.is_empty() || lens.iter().any(|&l| l != lens[0]) {
            return Err(CdgaError::NotHomogeneous(a.ring.fmt(g)));
        }
        ring.names.push(if k == 1 { "ε".into() } else { format!("ε{}", i + 1) });
        ring.degrees.push(deg - 1);
        ring.lengths.push(lens[0]);
    }
    let widen = |p: &Poly| p.map_keys(|m| Monomial(m.0.iter().copied().chain(std::iter::repeat_n(0, k)).collect()));
    let mut d: Vec<Poly> = a.d.iter().map(widen).collect();
    d.extend(seq.iter().map(widen));
    let model = CdgaPresentation::new(ring, d)?;
    model.validate()?;
    let images = (0..n).map(|i| model.ring.var(i)).collect();
    let inclusion = CdgaMorphism::new(a.clone(), model.clone(), images)?;
    let regular_at_cap = if a.has_zero_differential() {
        Some(koszul_ranks_match(a, &model, seq, max_len)?)
    } else {
        None
    };
    Ok(KoszulResolution {
        base: a.clone(),
        seq: seq.to_vec(),
        model,
        inclusion,
        regular_at_cap,
        max_len,
    })
}

/// Cohomology of the Koszul model vanishes off ε-count zero and equals
/// `A/I` there, weight by weight up to the cap.
fn koszul_ranks_match(a: &CdgaPresentation, model: &CdgaPresentation, seq: &[Poly], max_len: u32) -> Result<bool, CdgaError> {
    let n = a.ngens();
    let count = |m: &Monomial| m.0[n..].iter().sum::<u32>();
    let mut degrees: Vec<i64> = Vec::new();
    for l in 0..=max_len {
        for deg in degree_range(&model.ring, l) {
            if !model.ring.monomials(deg, l).is_empty() && !degrees.contains(&deg) {
                degrees.push(deg);
            }
        }
    }
    for l in 0..=max_len {
        for &deg in &degrees {
            // split the d-matrix by ε-count
            let out = model.d_matrix(deg, l)?;
            let inc = model.d_matrix(deg - 1, l)?;
            let counts: Vec<u32> = out.source().iter().map(count).collect();
            let maxc = counts.iter().copied().max().unwrap_or(0);
            for c in 0..=maxc {
                let src: Vec<Monomial> = out.source().iter().filter(|m| count(m) == c).cloned().collect();
                if src.is_empty() {
                    continue;
                }
                let tgt: Vec<Monomial> = out.target().to_vec();
                let dout = LinearMap::from_fn(src.clone(), tgt, 1, 0, |m| model.differential(&Lin::basis(m.clone())))
                    .map_err(|e| CdgaError::OutOfBox(e.to_string()))?;
                let isrc: Vec<Monomial> = inc.source().iter().filter(|m| count(m) == c + 1).cloned().collect();
                let din = LinearMap::from_fn(isrc, src.clone(), 1, 0, |m| model.differential(&Lin::basis(m.clone())))
                    .map_err(|e| CdgaError::OutOfBox(e.to_string()))?;
                let h = src.len() - dout.rank() - din.rank();
                if c >= 1 {
                    if h != 0 {
                        return Ok(false);
                    }
                } else {
                    let ideal = ideal_span(&a.ring, seq, deg, l);
                    let a_dim = a.ring.monomials(deg, l).len();
                    let i_dim = ideal_span_in_length(&a.ring, &ideal, l);
                    if h != a_dim - i_dim {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}

fn ideal_span_in_length(ring: &PolyRing, e: &Echelon<Monomial>, l: u32) -> usize {
    e.basis().iter().filter(|v| v.keys().all(|m| ring.mono_length(m) == l)).count()
}

fn degree_range(ring: &PolyRing, l: u32) -> Vec<i64> {
    let lo: i64 = ring.degrees.iter().copied().min().unwrap_or(0).min(0) * l as i64;
    let hi: i64 = ring.degrees.iter().copied().max().unwrap_or(0).max(0) * l as i64;
    (lo..=hi).collect()
}

/// Ω¹ of a semi-free algebra, or of a semi-free extension relative to its
/// source. Elements live in the ring extended by symbols `dx` with
/// `|dx| = |x|`, linear in the symbols.
#[derive(Clone, Debug)]
pub struct KaehlerModule {
    pub base: CdgaPresentation,
    pub ring: PolyRing,
    /// Base generator carrying each symbol.
    pub symbols: Vec<usize>,
}

pub fn kaehler(a: &CdgaPresentation) -> KaehlerModule {
    kaehler_on(a, (0..a.ngens()).collect())
}

/// Ω¹_{B/A} for a semi-free extension `f: A → B`: the symbols of images of
/// A-generators are killed.
pub fn relative_kaehler(f: &CdgaMorphism) -> Result<KaehlerModule, CdgaError> {
    let hit = f.extension_indices()?;
    let keep = (0..f.target.ngens()).filter(|j| !hit.contains(j)).collect();
    Ok(kaehler_on(&f.target, keep))
}

fn kaehler_on(a: &CdgaPresentation, symbols: Vec<usize>) -> KaehlerModule {
    let mut ring = a.ring.clone();
    for &i in &symbols {
        ring.names.push(format!("d{}", a.ring.names[i]));
        ring.degrees.push(a.ring.degrees[i]);
        ring.lengths.push(a.ring.lengths[i]);
    }
    KaehlerModule {
        base: a.clone(),
        ring,
        symbols,
    }
}

impl KaehlerModule {
    pub fn embed(&self, p: &Poly) -> Poly {
        let k = self.symbols.len();
        p.map_keys(|m| Monomial(m.0.iter().copied().chain(std::iter::repeat_n(0, k)).collect()))
    }

    fn symbol_of(&self, i: usize) -> Option<usize> {
        self.symbols.iter().position(|&s| s == i).map(|j| self.base.ngens() + j)
    }

    /// The de Rham differential, a degree-0 derivation into the module.
    pub fn d_dr(&self, p: &Poly) -> Poly {
        let n = self.base.ngens();
        self.ring.derivation(&self.embed(p), 0, &|i| {
            if i < n {
                self.symbol_of(i).map(|s| self.ring.var(s)).unwrap_or_default()
            } else {
                Lin::zero()
            }
        })
    }

    /// The module differential: the algebra differential on coefficients and
    /// `d(dx) = d_dR(dx)` on symbols.
    pub fn differential(&self, w: &Poly) -> Poly {
        let n = self.base.ngens();
        self.ring.derivation(w, 1, &|i| {
            if i < n {
                self.embed(&self.base.d[i])
            } else {
                self.d_dr(&self.base.d[self.symbols[i - n]])
            }
        })
    }

    /// Module basis symbols `dx`.
    pub fn symbol_names(&self) -> Vec<String> {
        self.ring.names[self.base.ngens()..].to_vec()
    }

    pub fn basis(&self, degree: i64, max_len: u32) -> Vec<Monomial> {
        let n = self.base.ngens();
        self.ring
            .monomials_upto(degree, max_len)
            .into_iter()
            .filter(|m| m.0[n..].iter().sum::<u32>() == 1)
            .collect()
    }
}

impl fmt::Display for CdgaPresentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.ngens() {
            writeln!(f, "{} : {}  d = {}", self.ring.names[i], self.ring.degrees[i], self.ring.fmt(&self.d[i]))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn validation() {
        assert!(CdgaPresentation::free(&[("x", 0)]).validate().is_ok());
        let r = PolyRing::new(&[("x", 0), ("e", -1)]);
        let a = CdgaPresentation::new(r.clone(), vec![Lin::zero(), r.var(0)]).unwrap();
        assert!(a.validate().is_ok());
        let r = PolyRing::new(&[("x", 0)]);
        let a = CdgaPresentation::new(r.clone(), vec![r.mul(&r.var(0), &r.var(0))]).unwrap();
        assert!(matches!(a.validate(), Err(CdgaError::DegreeMismatch { .. })));
        let r = PolyRing::new(&[("x", 1), ("y", 2)]);
        let a = CdgaPresentation::new(r.clone(), vec![r.var(1), r.mul(&r.var(0), &r.var(0))]).unwrap();
        assert!(a.validate().is_ok());
        // dx = y, dy = z, dz = xz gives d²y = xz ≠ 0
        let r = PolyRing::new(&[("x", 1), ("y", 2), ("z", 3)]);
        let a = CdgaPresentation::new(r.clone(), vec![r.var(1), r.var(2), r.mul(&r.var(0), &r.var(2))]).unwrap();
        assert!(matches!(a.validate(), Err(CdgaError::NotSquareZero { .. })));
    }

    #[test]
    fn koszul_signs() {
        let r = PolyRing::new(&[("a", 1), ("b", 1), ("x", 0)]);
        let ab = r.mul(&r.var(0), &r.var(1));
        let ba = r.mul(&r.var(1), &r.var(0));
        assert_eq!(ab, -ba);
        assert!(r.mul(&r.var(0), &r.var(0)).is_zero());
        assert_eq!(r.parse("a*b + 2*x^2 - 1/2").unwrap(), ab + r.parse("2*x^2").unwrap() - r.constant(q(1) / q(2)));
        assert_eq!(r.fmt(&r.parse("b*a - x").unwrap()), "-x - a*b");
    }

    fn ring3() -> PolyRing {
        PolyRing::new(&[("a", 1), ("x", 0), ("b", -1), ("y", 2)])
    }

    fn poly() -> impl Strategy<Value = Vec<(Vec<u32>, i64)>> {
        prop::collection::vec((prop::collection::vec(0u32..3, 4), -3i64..=3), 0..4)
    }

    fn build(r: &PolyRing, t: &[(Vec<u32>, i64)]) -> Poly {
        let mut p = Lin::zero();
        for (e, c) in t {
            let e: Vec<u32> = e.iter().enumerate().map(|(i, &x)| if r.degrees[i] % 2 != 0 { x.min(1) } else { x }).collect();
            p.add_term(Monomial(e), q(*c));
        }
        p
    }

    fn homogeneous(r: &PolyRing, p: &Poly) -> Vec<(i64, Poly)> {
        let mut parts: BTreeMap<i64, Poly> = BTreeMap::new();
        for (m, c) in p.iter() {
            parts.entry(r.mono_degree(m)).or_default().add_term(m.clone(), c.clone());
        }
        parts.into_iter().collect()
    }

    proptest! {
        #[test]
        fn algebra_laws(a in poly(), b in poly(), c in poly()) {
            let r = ring3();
            let (a, b, c) = (build(&r, &a), build(&r, &b), build(&r, &c));
            prop_assert_eq!(r.mul(&r.mul(&a, &b), &c), r.mul(&a, &r.mul(&b, &c)));
            for (da, pa) in homogeneous(&r, &a) {
                for (db, pb) in homogeneous(&r, &b) {
                    let s = sign_scalar((da * db).rem_euclid(2) == 1);
                    prop_assert_eq!(r.mul(&pa, &pb), r.mul(&pb, &pa).scale(&s));
                    // partial derivatives obey the graded Leibniz rule
                    for i in 0..4 {
                        let lhs = r.partial(&r.mul(&pa, &pb), i);
                        let t = sign_scalar((r.degrees[i] * da).rem_euclid(2) == 1);
                        let rhs = r.mul(&r.partial(&pa, i), &pb) + r.mul(&pa, &r.partial(&pb, i)).scale(&t);
                        prop_assert_eq!(lhs, rhs);
                    }
                }
            }
        }
    }

    #[test]
    fn koszul_resolutions() {
        let a = CdgaPresentation::free(&[("x", 0), ("y", 0)]);
        let y = a.ring.var(1);
        let k = koszul_resolve(&a, &[y], 4).unwrap();
        assert_eq!(k.regular_at_cap, Some(true));
        assert_eq!(k.model.ngens(), 3);
        assert_eq!(k.model.ring.degrees[2], -1);
        // H⁰ ≅ k[x]: one class per length
        for l in 0..=4 {
            assert_eq!(k.model.cohomology_rank(0, l).unwrap(), 1);
            assert_eq!(k.model.cohomology_rank(-1, l).unwrap(), 0);
            assert_eq!(k.model.cohomology_rank(-2, l).unwrap(), 0);
        }
        let empty = koszul_resolve(&a, &[], 4).unwrap();
        assert_eq!(empty.model, a);
        let a4 = CdgaPresentation::free(&[("x1", 0), ("x2", 0), ("y1", 0), ("y2", 0)]);
        let k = koszul_resolve(&a4, &[a4.ring.var(2), a4.ring.var(3)], 4).unwrap();
        assert_eq!(k.regular_at_cap, Some(true));
        assert_eq!(k.koszul_generators().len(), 2);
        for l in 0..=4 {
            assert_eq!(k.model.cohomology_rank(0, l).unwrap(), l as usize + 1);
        }
        // (x, x) is not regular
        let x = a.ring.var(0);
        let k = koszul_resolve(&a, &[x.clone(), x], 3).unwrap();
        assert_eq!(k.regular_at_cap, Some(false));
    }

    #[test]
    fn graph_morphisms() {
        let a = CdgaPresentation::free(&[("x", 0)]);
        let g = graph_morphism(&CdgaMorphism::identity(&a)).unwrap();
        assert_eq!(g.source.ring.names, vec!["x", "x'"]);
        let r = &g.source.ring;
        let gen = r.var(0) - r.var(1);
        assert!(g.apply(&gen).is_zero());
        let a = CdgaPresentation::free(&[("x", 0), ("y", 0)]);
        let b = CdgaPresentation::free(&[("u", 0), ("v", 0)]);
        let f = CdgaMorphism::new(a.clone(), b.clone(), vec![b.ring.var(0), b.ring.var(1)]).unwrap();
        let g = graph_morphism(&f).unwrap();
        let r = &g.source.ring;
        let gens = [r.var(0) - r.var(2), r.var(1) - r.var(3)];
        // kernel of g in each length equals the ideal (x − u, y − v)
        for l in 0..=3 {
            let map = LinearMap::from_fn(r.monomials(0, l), b.ring.monomials_upto(0, 3), 0, 0, |m| g.apply(&Lin::basis(m.clone()))).unwrap();
            let ker = crate::gradedlin::kernel_basis(&map);
            for v in &ker {
                assert!(in_ideal(r, &gens, v, l));
            }
            let ideal = ideal_span(r, &gens, 0, l);
            assert_eq!(ideal_span_in_length(r, &ideal, l), ker.len());
        }
        let f = CdgaMorphism::new(a, b.clone(), vec![b.ring.var(0), Lin::zero()]).unwrap();
        let g = graph_morphism(&f).unwrap();
        assert!(g.apply(&g.source.ring.var(1)).is_zero());
    }

    #[test]
    fn morphism_checks() {
        let r = PolyRing::new(&[("x", 0), ("e", -1)]);
        let k = CdgaPresentation::new(r.clone(), vec![Lin::zero(), r.var(0)]).unwrap();
        let a = CdgaPresentation::free(&[("t", 0)]);
        // x ↦ t does not commute with d since dε = x ↦ t ≠ 0
        let bad = CdgaMorphism::new(k.clone(), a.clone(), vec![a.ring.var(0), Lin::zero()]);
        assert!(matches!(bad, Err(CdgaError::NotChainMap { .. })));
        let good = CdgaMorphism::new(k, a.clone(), vec![Lin::zero(), Lin::zero()]);
        assert!(good.is_ok());
        let shifted = CdgaMorphism::new(a.clone(), a.clone(), vec![a.ring.var(0).scale(&q(-1))]);
        assert!(matches!(CdgaMorphism::new(a.clone(), a, vec![]), Err(CdgaError::Arity { .. })));
        assert!(shifted.is_ok());
    }

    #[test]
    fn kaehler_differentials() {
        let r = PolyRing::new(&[("x", 0), ("y", 0), ("e", -1)]);
        let b = CdgaPresentation::new(r.clone(), vec![Lin::zero(), Lin::zero(), r.mul(&r.var(0), &r.var(1))]).unwrap();
        let om = kaehler(&b);
        let p = r.parse("x^2*y + 3*x*e").unwrap();
        let s = b.ring.parse("x*y").unwrap();
        // d_dR is a derivation commuting with d
        let lhs = om.d_dr(&b.ring.mul(&p, &s));
        let rhs = om.ring.mul(&om.d_dr(&p), &om.embed(&s)) + om.ring.mul(&om.embed(&p), &om.d_dr(&s));
        assert_eq!(lhs, rhs);
        assert_eq!(om.d_dr(&b.differential(&p)), om.differential(&om.d_dr(&p)));
        for m in om.basis(-1, 3) {
            let w = Lin::basis(m);
            assert!(om.differential(&om.differential(&w)).is_zero());
        }
        let a = CdgaPresentation::free(&[("x", 0), ("y", 0)]);
        let f = CdgaMorphism::new(a.clone(), b.clone(), vec![b.ring.var(0), b.ring.var(1)]).unwrap();
        let rel = relative_kaehler(&f).unwrap();
        assert_eq!(rel.symbol_names(), vec!["de"]);
        // the relative module kills d(images)
        assert!(rel.d_dr(&b.ring.var(0)).is_zero());
        let swap = CdgaMorphism::new(a.clone(), a.clone(), vec![a.ring.var(0), a.ring.var(0)]).unwrap();
        assert!(relative_kaehler(&swap).is_err());
    }
}
