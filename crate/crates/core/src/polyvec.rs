//! Strict polyvectors and the Schouten bracket; Poisson and coisotropic
//! verdicts.
//!
//! `Pol(A, n)` is the free graded-commutative algebra on the generators of
//! `A` and symbols `∂x` of degree `n + 1 − |x|`; the weight counts symbols.
//! The Schouten bracket has degree `−n − 1` and is the biderivation with
//! `[∂x, y] = δ`. The differential is `[Q, −]` for the vector field
//! `Q = Σ d(x)∂x`. For a Koszul model `B = A[ε]`, the relative polyvectors
//! `Pol_A(B, n − 1)` carry symbols `η_i = ∂ε_i` only, and restriction sends
//! `∂x ↦ Σ_i ∂g_i/∂x · η_i`, the normal component.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::cdga::{in_ideal, koszul_resolve, CdgaError, CdgaMorphism, CdgaPresentation, KoszulResolution, Monomial, Poly, PolyRing};
use crate::gradedlin::{q, sign_scalar, Echelon, Lin, Scalar, TrackedEchelon};

pub const DEFAULT_WEIGHT_CAP: u32 = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyvecError {
    #[error(transparent)]
    Cdga(#[from] CdgaError),
    #[error("{0}")]
    Typing(String),
    #[error("restriction is not surjective: {0} is not hit")]
    NotSurjective(String),
    #[error("not a Maurer–Cartan element: {0}")]
    NotMaurerCartan(String),
    #[error("carriers differ")]
    CarrierMismatch,
}

/// A polyvector-type algebra: generators of a base cdga, some of which carry
/// a dual symbol, and a Schouten bracket of degree `−shift`.
#[derive(Clone, Debug)]
pub struct Polyvectors {
    pub base: CdgaPresentation,
    pub ring: PolyRing,
    /// Base generator dual to each symbol.
    pub duals: Vec<usize>,
    /// The bracket has degree `−shift`.
    pub shift: i64,
}

impl Polyvectors {
    /// `Pol(A, n)`.
    pub fn absolute(base: &CdgaPresentation, n: i64) -> Self {
        Self::with_duals(base, (0..base.ngens()).collect(), n + 1)
    }

    fn with_duals(base: &CdgaPresentation, duals: Vec<usize>, shift: i64) -> Self {
        let mut ring = base.ring.clone();
        for &i in &duals {
            ring.names.push(format!("∂{}", base.ring.names[i]));
            ring.degrees.push(shift - base.ring.degrees[i]);
            ring.lengths.push(1);
        }
        Polyvectors {
            base: base.clone(),
            ring,
            duals,
            shift,
        }
    }

    pub fn nbase(&self) -> usize {
        self.base.ngens()
    }

    pub fn embed(&self, p: &Poly) -> Poly {
        let k = self.duals.len();
        p.map_keys(|m| Monomial(m.0.iter().copied().chain(std::iter::repeat_n(0, k)).collect()))
    }

    /// The symbol dual to base generator `i`.
    pub fn symbol(&self, i: usize) -> Option<Poly> {
        self.duals.iter().position(|&d| d == i).map(|j| self.ring.var(self.nbase() + j))
    }

    pub fn mono_weight(&self, m: &Monomial) -> u32 {
        m.0[self.nbase()..].iter().sum()
    }

    pub fn weight_part(&self, p: &Poly, w: u32) -> Poly {
        p.filter(|m| self.mono_weight(m) == w)
    }

    pub fn truncate(&self, p: &Poly, max_w: u32) -> Poly {
        p.filter(|m| self.mono_weight(m) <= max_w)
    }

    pub fn min_weight(&self, p: &Poly) -> Option<u32> {
        p.keys().map(|m| self.mono_weight(m)).min()
    }

    pub fn parse(&self, s: &str) -> Result<Poly, PolyvecError> {
        Ok(self.ring.parse(s)?)
    }

    pub fn fmt(&self, p: &Poly) -> String {
        self.ring.fmt(p)
    }

    /// `[a, b]` on generators of the ring.
    fn gen_bracket(&self, a: usize, b: usize) -> Scalar {
        let n = self.nbase();
        let n_shift = self.shift;
        if a >= n && b < n && self.duals[a - n] == b {
            return q(1);
        }
        if a < n && b >= n && self.duals[b - n] == a {
            let x = self.ring.degrees[a];
            return -sign_scalar((x * (n_shift + 1)).rem_euclid(2) == 1);
        }
        q(0)
    }

    fn homogeneous(&self, p: &Poly) -> BTreeMap<i64, Poly> {
        let mut parts: BTreeMap<i64, Poly> = BTreeMap::new();
        for (m, c) in p.iter() {
            parts.entry(self.ring.mono_degree(m)).or_default().add_term(m.clone(), c.clone());
        }
        parts
    }

    /// `[g, Q]` for a generator `g`: a derivation of degree `|g| − shift`.
    fn ad_gen(&self, g: usize, rhs: &Poly) -> Poly {
        let deg = self.ring.degrees[g] - self.shift;
        self.ring.derivation(rhs, deg, &|h| {
            let c = self.gen_bracket(g, h);
            if c == q(0) {
                Lin::zero()
            } else {
                self.ring.constant(c)
            }
        })
    }

    fn bracket_mono(&self, m: &Monomial, rhs: &Poly, rdeg: i64) -> Poly {
        let Some(i) = m.0.iter().position(|&e| e > 0) else {
            return Lin::zero();
        };
        // m = g · rest, so [g·rest, Q] = g[rest, Q] ± [g, Q]·rest
        let mut rest = m.clone();
        rest.0[i] -= 1;
        let g = self.ring.var(i);
        let rest_p = Lin::basis(rest.clone());
        let rest_deg = self.ring.mono_degree(&rest);
        let first = self.ring.mul(&g, &self.bracket_mono(&rest, rhs, rdeg));
        let s = sign_scalar((rest_deg * (rdeg + self.shift)).rem_euclid(2) == 1);
        let second = self.ring.mul(&self.ad_gen(i, rhs), &rest_p).scale(&s);
        first + second
    }

    /// The Schouten bracket.
    pub fn schouten(&self, p: &Poly, r: &Poly) -> Poly {
        let mut out = Lin::zero();
        for (rdeg, rp) in self.homogeneous(r) {
            for (m, c) in p.iter() {
                out.add_scaled(&self.bracket_mono(m, &rp, rdeg), c);
            }
        }
        out
    }

    /// The weight-one element `Q = Σ d(x)∂x`.
    pub fn q_vector(&self) -> Poly {
        let mut out = Lin::zero();
        for (j, &i) in self.duals.iter().enumerate() {
            let sym = self.ring.var(self.nbase() + j);
            out += &self.ring.mul(&self.embed(&self.base.d[i]), &sym);
        }
        out
    }

    /// The differential: `d` on base generators and `[Q, −]` on symbols.
    pub fn differential(&self, p: &Poly) -> Poly {
        let n = self.nbase();
        let qv = self.q_vector();
        self.ring.derivation(p, 1, &|i| {
            if i < n {
                self.embed(&self.base.d[i])
            } else {
                self.schouten(&qv, &self.ring.var(i))
            }
        })
    }

    /// `{a, b} = −(−1)^{|a|−n}[[π, a], b]`, normalized so that `∂x∂y`
    /// gives `{x, y} = 1`.
    pub fn induced_bracket(&self, pi: &Poly, a: &Poly, b: &Poly) -> Poly {
        let mut out = Lin::zero();
        for (da, pa) in self.homogeneous(a) {
            let s = sign_scalar((da - self.shift + 1).rem_euclid(2) == 0);
            out.add_scaled(&self.schouten(&self.schouten(pi, &pa), b), &s);
        }
        out
    }

    /// Weight-k component scaled by `(−1)^{k+1}`.
    pub fn opposite(&self, pi: &Poly) -> Poly {
        let mut out = Lin::zero();
        for (m, c) in pi.iter() {
            let k = self.mono_weight(m);
            out.add_term(m.clone(), sign_scalar(k % 2 == 0) * c);
        }
        out
    }

    /// Monomials of the given degree and weight with coefficient length at
    /// most `max_len`.
    pub fn basis(&self, degree: i64, weight: u32, max_len: u32) -> Vec<Monomial> {
        self.ring
            .monomials_upto(degree, max_len + weight)
            .into_iter()
            .filter(|m| self.mono_weight(m) == weight)
            .collect()
    }
}

/// Verdict of the Maurer–Cartan test for a bivector-type element.
#[derive(Clone, Debug)]
pub struct PoissonVerdict {
    pub poisson: bool,
    /// `dπ + ½[π, π]` truncated at the weight cap.
    pub residual: Poly,
}

fn check_typing(pol: &Polyvectors, pi: &Poly) -> Result<(), PolyvecError> {
    for m in pi.keys() {
        if pol.mono_weight(m) < 2 {
            return Err(PolyvecError::Typing(format!("term {} has weight < 2", pol.ring.fmt_mono(m))));
        }
        if pol.ring.mono_degree(m) != pol.shift + 1 {
            return Err(PolyvecError::Typing(format!(
                "term {} has degree {}, expected {}",
                pol.ring.fmt_mono(m),
                pol.ring.mono_degree(m),
                pol.shift + 1
            )));
        }
    }
    Ok(())
}

/// `dπ + ½[π, π]` up to weight `cap`.
pub fn mc_residual(pol: &Polyvectors, pi: &Poly, cap: u32) -> Poly {
    let r = pol.differential(pi) + pol.schouten(pi, pi).scale(&(q(1) / q(2)));
    pol.truncate(&r, cap)
}

pub fn is_poisson(pol: &Polyvectors, pi: &Poly, cap: u32) -> Result<PoissonVerdict, PolyvecError> {
    check_typing(pol, pi)?;
    let residual = mc_residual(pol, pi, cap);
    Ok(PoissonVerdict {
        poisson: residual.is_zero(),
        residual,
    })
}

/// Bracket matrix `{x_i, x_j}` of a bivector on a degree-zero algebra with
/// `n = 0`, read off the coefficients.
pub fn bivector_matrix(pol: &Polyvectors, pi: &Poly) -> Result<Vec<Vec<Poly>>, PolyvecError> {
    let nb = pol.nbase();
    if pol.shift != 1 || pol.base.ring.degrees.iter().any(|&d| d != 0) || pol.duals.len() != nb {
        return Err(PolyvecError::Typing("bivector matrix needs a degree-zero base and n = 0".into()));
    }
    let mut mat = vec![vec![Lin::zero(); nb]; nb];
    for (m, c) in pi.iter() {
        let syms: Vec<usize> = (0..nb).filter(|&j| m.0[nb + j] > 0).collect();
        if syms.len() != 2 {
            return Err(PolyvecError::Typing(format!("{} is not a bivector term", pol.ring.fmt_mono(m))));
        }
        let coeff = Monomial(m.0[..nb].to_vec());
        let (i, j) = (pol.duals[syms[0]], pol.duals[syms[1]]);
        mat[i][j].add_term(coeff.clone(), c.clone());
        mat[j][i].add_term(coeff, -c.clone());
    }
    Ok(mat)
}

/// `{f, g} = Σ p_ij ∂_i f ∂_j g` for a bracket matrix over a degree-zero ring.
pub fn matrix_bracket(ring: &PolyRing, mat: &[Vec<Poly>], f: &Poly, g: &Poly) -> Poly {
    let mut out = Lin::zero();
    for (i, row) in mat.iter().enumerate() {
        let fi = ring.partial(f, i);
        if fi.is_zero() {
            continue;
        }
        for (j, p) in row.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            out += &ring.mul(&ring.mul(p, &fi), &ring.partial(g, j));
        }
    }
    out
}

/// Jacobiators `{x_i,{x_j,x_k}} + cyclic` on generator triples `i < j < k`.
pub fn generator_jacobiators(pol: &Polyvectors, pi: &Poly) -> Result<Vec<((usize, usize, usize), Poly)>, PolyvecError> {
    let mat = bivector_matrix(pol, pi)?;
    let r = &pol.base.ring;
    let br = |f: &Poly, g: &Poly| matrix_bracket(r, &mat, f, g);
    let n = pol.nbase();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (x, y, z) = (r.var(i), r.var(j), r.var(k));
                let jac = br(&x, &br(&y, &z)) + br(&y, &br(&z, &x)) + br(&z, &br(&x, &y));
                out.push(((i, j, k), jac));
            }
        }
    }
    Ok(out)
}

/// Strict P_{n+1} axioms for the induced bracket on generators: graded
/// antisymmetry, Jacobi and compatibility with `d`. Returns the first
/// failing instance.
pub fn derived_axiom_failure(pol: &Polyvectors, pi: &Poly) -> Option<String> {
    let nb = pol.nbase();
    let n = pol.shift - 1;
    let r = &pol.ring;
    let gens: Vec<(Poly, i64)> = (0..nb).map(|i| (r.var(i), pol.ring.degrees[i])).collect();
    let br = |a: &Poly, b: &Poly| pol.induced_bracket(pi, a, b);
    let par = |x: i64| sign_scalar(x.rem_euclid(2) == 1);
    for (i, (a, da)) in gens.iter().enumerate() {
        for (j, (b, db)) in gens.iter().enumerate() {
            let anti = br(a, b) + br(b, a).scale(&par((da - n) * (db - n)));
            if !anti.is_zero() {
                return Some(format!("antisymmetry on ({}, {})", r.names[i], r.names[j]));
            }
            let dcomp = pol.differential(&br(a, b))
                - br(&pol.differential(a), b)
                - br(a, &pol.differential(b)).scale(&par(da - n));
            if !dcomp.is_zero() {
                return Some(format!("d-compatibility on ({}, {})", r.names[i], r.names[j]));
            }
            for (k, (c, _)) in gens.iter().enumerate() {
                let jac = br(a, &br(b, c)) - br(&br(a, b), c) - br(b, &br(a, c)).scale(&par((da - n) * (db - n)));
                if !jac.is_zero() {
                    return Some(format!("Jacobi on ({}, {}, {})", r.names[i], r.names[j], r.names[k]));
                }
            }
        }
    }
    None
}

/// The relative polyvectors `Pol_A(B, n − 1)` of a Koszul model together
/// with the restriction from `Pol(A, n)`.
#[derive(Clone, Debug)]
pub struct RelativePolyvec {
    pub n: i64,
    pub absolute: Polyvectors,
    pub koszul: KoszulResolution,
    pub relative: Polyvectors,
    pub max_len: u32,
    exact: RefCell<BTreeMap<(i64, u32, u32), Echelon<Monomial>>>,
}

/// Builds the strict model of `Pol(f, n)` for `f: A → A[ε] ≃ A/(g)` after
/// checking that every normal symbol is hit up to exact terms.
pub fn strict_kernel(koszul: &KoszulResolution, n: i64, max_len: u32) -> Result<RelativePolyvec, PolyvecError> {
    let absolute = Polyvectors::absolute(&koszul.base, n);
    let relative = Polyvectors::with_duals(&koszul.model, koszul.koszul_generators().collect(), n);
    let rel = RelativePolyvec {
        n,
        absolute,
        koszul: koszul.clone(),
        relative,
        max_len,
        exact: RefCell::new(BTreeMap::new()),
    };
    let nb = rel.relative.nbase();
    for j in 0..rel.relative.duals.len() {
        let eta = rel.relative.ring.var(nb + j);
        let deg = rel.relative.ring.degrees[nb + j];
        let mut span = Echelon::new();
        for m in rel.absolute.basis(deg, 1, max_len) {
            span.insert(rel.reduce(&rel.restrict(&Lin::basis(m))));
        }
        if !span.contains(&rel.reduce(&eta)) {
            return Err(PolyvecError::NotSurjective(rel.relative.ring.names[nb + j].clone()));
        }
    }
    Ok(rel)
}

/// Which model of `Pol(f, n)` carries the coisotropic residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoisMode {
    Strict,
    Transferred,
}

#[derive(Clone, Debug)]
pub struct CoisotropicResidual {
    /// `dπ + ½[π, π]` in `Pol(A, n)`.
    pub absolute: Poly,
    /// Strict: the class of `r(π)` modulo exact terms. Transferred:
    /// `r(π) + dγ + ½[γ, γ]`.
    pub relative: Poly,
}

impl CoisotropicResidual {
    pub fn is_zero(&self) -> bool {
        self.absolute.is_zero() && self.relative.is_zero()
    }
}

impl RelativePolyvec {
    /// Restriction `Pol(A, n) → Pol_A(B, n − 1)`.
    pub fn restrict(&self, p: &Poly) -> Poly {
        let nb = self.absolute.nbase();
        let rel = &self.relative;
        let model = &self.koszul.model;
        let k = self.koszul.seq.len();
        let lift = |x: &Poly| -> Poly { x.map_keys(|m| Monomial(m.0.iter().copied().chain(std::iter::repeat_n(0, k)).collect())) };
        // images of generators and symbols
        let mut images: Vec<Poly> = (0..nb).map(|i| rel.embed(&lift(&self.koszul.base.ring.var(i)))).collect();
        for x in 0..nb {
            let mut img = Lin::zero();
            for (i, g) in self.koszul.seq.iter().enumerate() {
                let dg = lift(&self.koszul.base.ring.partial(g, x));
                img += &rel.ring.mul(&rel.embed(&dg), &rel.ring.var(model.ngens() + i));
            }
            images.push(img);
        }
        let mut out = Lin::zero();
        for (m, c) in p.iter() {
            let mut acc = rel.ring.one();
            for (i, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    acc = rel.ring.mul(&acc, &rel.ring.pow(&images[i], e));
                }
            }
            out.add_scaled(&acc, c);
        }
        out
    }

    fn exact_span(&self, deg: i64, weight: u32, len: u32) -> Echelon<Monomial> {
        let key = (deg, weight, len);
        if let Some(e) = self.exact.borrow().get(&key) {
            return e.clone();
        }
        let rel = &self.relative;
        let mut e = Echelon::new();
        for m in rel.ring.monomials(deg - 1, len) {
            if rel.mono_weight(&m) == weight {
                e.insert(rel.differential(&Lin::basis(m)));
            }
        }
        self.exact.borrow_mut().insert(key, e.clone());
        e
    }

    /// Normal form modulo exact terms, computed per degree, weight and
    /// length.
    pub fn reduce(&self, y: &Poly) -> Poly {
        let rel = &self.relative;
        let mut parts: BTreeMap<(i64, u32, u32), Poly> = BTreeMap::new();
        for (m, c) in y.iter() {
            let key = (rel.ring.mono_degree(m), rel.mono_weight(m), rel.ring.mono_length(m));
            parts.entry(key).or_default().add_term(m.clone(), c.clone());
        }
        let mut out = Lin::zero();
        for ((d, w, l), p) in parts {
            out += &self.exact_span(d, w, l).reduce(&p);
        }
        out
    }

    /// Whether `p` lies in the strict kernel.
    pub fn in_kernel(&self, p: &Poly) -> bool {
        self.reduce(&self.restrict(p)).is_zero()
    }

    /// Basis of the kernel in the given degree and weight.
    pub fn kernel_basis(&self, degree: i64, weight: u32) -> Vec<Poly> {
        let src = self.absolute.basis(degree, weight, self.max_len);
        let mut tracked: TrackedEchelon<Monomial, Monomial> = TrackedEchelon::new();
        let mut out = Vec::new();
        for m in src {
            let img = self.reduce(&self.restrict(&Lin::basis(m.clone())));
            let (rem, combo) = tracked.reduce(&img);
            if rem.is_zero() {
                let mut v = Lin::basis(m);
                v.add_scaled(&combo, &q(-1));
                out.push(v);
            } else {
                tracked.insert(img, Lin::basis(m));
            }
        }
        out
    }

    /// Dimension of the relative part in positive weights within the box.
    pub fn positive_weight_dim(&self, degrees: std::ops::RangeInclusive<i64>, max_weight: u32) -> usize {
        let mut dim = 0;
        for d in degrees {
            for w in 1..=max_weight {
                dim += self
                    .relative
                    .ring
                    .monomials_upto(d, self.max_len + w)
                    .iter()
                    .filter(|m| self.relative.mono_weight(m) == w)
                    .count();
            }
        }
        dim
    }

    /// Solves `dγ = −r(π)` weight by weight, if possible within the box.
    pub fn canonical_gamma(&self, pi: &Poly) -> Option<Poly> {
        let y = self.restrict(pi);
        let rel = &self.relative;
        let mut parts: BTreeMap<(i64, u32, u32), Poly> = BTreeMap::new();
        for (m, c) in y.iter() {
            let key = (rel.ring.mono_degree(m), rel.mono_weight(m), rel.ring.mono_length(m));
            parts.entry(key).or_default().add_term(m.clone(), c.clone());
        }
        let mut gamma = Lin::zero();
        for ((d, w, l), p) in parts {
            let mut tracked: TrackedEchelon<Monomial, Monomial> = TrackedEchelon::new();
            for m in rel.ring.monomials(d - 1, l) {
                if rel.mono_weight(&m) == w {
                    tracked.insert(rel.differential(&Lin::basis(m.clone())), Lin::basis(m));
                }
            }
            let (rem, combo) = tracked.reduce(&p);
            if !rem.is_zero() {
                return None;
            }
            gamma.add_scaled(&combo, &q(-1));
        }
        Some(gamma)
    }

    pub fn coisotropic_residual(&self, pi: &Poly, gamma: Option<&Poly>, mode: CoisMode, cap: u32) -> Result<CoisotropicResidual, PolyvecError> {
        check_typing(&self.absolute, pi)?;
        let absolute = mc_residual(&self.absolute, pi, cap);
        let rel = &self.relative;
        let relative = match mode {
            CoisMode::Strict => rel.truncate(&self.reduce(&self.restrict(pi)), cap),
            CoisMode::Transferred => {
                let g = match gamma {
                    Some(g) => g.clone(),
                    None => self.canonical_gamma(pi).unwrap_or_default(),
                };
                let r = self.restrict(pi) + rel.differential(&g) + rel.schouten(&g, &g).scale(&(q(1) / q(2)));
                rel.truncate(&r, cap)
            }
        };
        Ok(CoisotropicResidual { absolute, relative })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IdealVerdict {
    Coisotropic,
    /// A pair of generators whose bracket leaves the ideal, with its value.
    NotCoisotropic { pair: (usize, usize), value: Poly },
    Indeterminate,
}

/// Checks `{g_i, g_j} ∈ I` for a bivector on a degree-zero algebra, with
/// membership decided at the length bound.
pub fn classical_coisotropic_ideal_check(pol: &Polyvectors, pi: &Poly, gens: &[Poly], max_len: u32) -> Result<IdealVerdict, PolyvecError> {
    let mat = bivector_matrix(pol, pi)?;
    let r = &pol.base.ring;
    for i in 0..gens.len() {
        for j in i + 1..gens.len() {
            let v = matrix_bracket(r, &mat, &gens[i], &gens[j]);
            if r.max_length(&v) > max_len {
                return Ok(IdealVerdict::Indeterminate);
            }
            if !in_ideal(r, gens, &v, max_len) {
                return Ok(IdealVerdict::NotCoisotropic { pair: (i, j), value: v });
            }
        }
    }
    Ok(IdealVerdict::Coisotropic)
}

/// The two verdicts of the graph correspondence.
#[derive(Clone, Debug)]
pub struct GraphVerdict {
    /// `f` preserves brackets on generator pairs.
    pub preserves: bool,
    /// The graph `A ⊗ B → B` is coisotropic for `(π_A; ∓π_B)`.
    pub coisotropic: bool,
    pub residual: CoisotropicResidual,
    /// A generator pair of the graph ideal with its bracket, when the
    /// bracket leaves the ideal.
    pub witness: Option<(String, Poly)>,
}

/// `flip` uses `(π_A; +π_B)` instead of `(π_A; −π_B)`.
pub fn graph_correspondence_check(f: &CdgaMorphism, pi_a: &Poly, pi_b: &Poly, n: i64, flip: bool, max_len: u32) -> Result<GraphVerdict, PolyvecError> {
    let pa = Polyvectors::absolute(&f.source, n);
    let pb = Polyvectors::absolute(&f.target, n);
    let na = f.source.ngens();
    let nb = f.target.ngens();
    let mut preserves = true;
    for i in 0..na {
        for j in 0..na {
            let lhs = f.apply(&pa.induced_bracket(pi_a, &pa.ring.var(i), &pa.ring.var(j)).filter(|m| pa.mono_weight(m) == 0).map_keys(|m| Monomial(m.0[..na].to_vec())));
            let rhs = pb.induced_bracket(pi_b, &pb.embed(&f.images[i]), &pb.embed(&f.images[j]));
            let rhs = rhs.filter(|m| pb.mono_weight(m) == 0).map_keys(|m| Monomial(m.0[..nb].to_vec()));
            if lhs != rhs {
                preserves = false;
            }
        }
    }
    let c = f.source.tensor(&f.target);
    let pc = Polyvectors::absolute(&c, n);
    // re-index: C generators are A then B; symbols ∂A then ∂B
    let into_c = |p: &Poly, from_a: bool| -> Poly {
        p.map_keys(|m| {
            let (gens, syms) = if from_a { (na, na) } else { (nb, nb) };
            let mut e = vec![0u32; 2 * (na + nb)];
            for t in 0..gens {
                let pos = if from_a { t } else { na + t };
                e[pos] = m.0[t];
            }
            for t in 0..syms {
                let pos = if from_a { na + nb + t } else { 2 * na + nb + t };
                e[pos] = m.0[gens + t];
            }
            Monomial(e)
        })
    };
    let sign = if flip { q(1) } else { q(-1) };
    let pi_c = into_c(pi_a, true) + into_c(pi_b, false).scale(&sign);
    let seq: Vec<Poly> = (0..na)
        .map(|i| {
            let a = c.ring.var(i);
            let fb = f.images[i].map_keys(|m| Monomial(std::iter::repeat_n(0, na).chain(m.0.iter().copied()).collect()));
            a - fb
        })
        .collect();
    let res = koszul_resolve(&c, &seq, max_len)?;
    let rel = strict_kernel(&res, n, max_len)?;
    let residual = rel.coisotropic_residual(&pi_c, None, CoisMode::Strict, DEFAULT_WEIGHT_CAP)?;
    let mut witness = None;
    for i in 0..na {
        for j in i + 1..na {
            let v = pc.induced_bracket(&pi_c, &pc.embed(&seq[i]), &pc.embed(&seq[j]));
            let v = v.map_keys(|m| Monomial(m.0[..na + nb].to_vec()));
            if !in_ideal(&c.ring, &seq, &v, max_len) {
                witness = Some((format!("{{{}, {}}}", c.ring.fmt(&seq[i]), c.ring.fmt(&seq[j])), v));
                break;
            }
        }
        if witness.is_some() {
            break;
        }
    }
    let _ = &pc;
    Ok(GraphVerdict {
        preserves,
        coisotropic: residual.is_zero(),
        residual,
        witness,
    })
}

/// The mixed structures induced by strict coisotropic data: `ε_A = [π, −]`
/// on `Pol(A, n)` and its action on the quotient `Pol(A, n)/ker`, realized
/// on restrictions modulo exact terms. The ∞-morphism is the restriction
/// itself, with vanishing higher components.
pub struct MixedStructures<'a> {
    pub rel: &'a RelativePolyvec,
    pub pi: Poly,
    pub cap: u32,
}

pub fn induced_mixed_structure<'a>(rel: &'a RelativePolyvec, pi: &Poly, cap: u32) -> Result<MixedStructures<'a>, PolyvecError> {
    let r = rel.coisotropic_residual(pi, None, CoisMode::Strict, cap)?;
    if !r.is_zero() {
        return Err(PolyvecError::NotMaurerCartan(format!(
            "{} | {}",
            rel.absolute.fmt(&r.absolute),
            rel.relative.fmt(&r.relative)
        )));
    }
    Ok(MixedStructures {
        rel,
        pi: pi.clone(),
        cap,
    })
}

impl MixedStructures<'_> {
    pub fn eps_a(&self, p: &Poly) -> Poly {
        self.rel.absolute.truncate(&self.rel.absolute.schouten(&self.pi, p), self.cap)
    }

    /// A preimage of `y` under restriction modulo exact terms.
    pub fn lift(&self, y: &Poly) -> Option<Poly> {
        let rel = &self.rel.relative;
        let y = self.rel.reduce(y);
        let mut out = Lin::zero();
        let mut parts: BTreeMap<(i64, u32), Poly> = BTreeMap::new();
        for (m, c) in y.iter() {
            parts.entry((rel.ring.mono_degree(m), rel.mono_weight(m))).or_default().add_term(m.clone(), c.clone());
        }
        for ((d, w), p) in parts {
            let mut tracked: TrackedEchelon<Monomial, Monomial> = TrackedEchelon::new();
            for m in self.rel.absolute.basis(d, w, self.rel.max_len) {
                let img = self.rel.reduce(&self.rel.restrict(&Lin::basis(m.clone())));
                tracked.insert(img, Lin::basis(m));
            }
            let (rem, combo) = tracked.reduce(&p);
            if !rem.is_zero() {
                return None;
            }
            out += &combo;
        }
        Some(out)
    }

    /// `ε_B(y) = r([π, ỹ])` for a lift `ỹ`.
    pub fn eps_b(&self, y: &Poly) -> Option<Poly> {
        let l = self.lift(y)?;
        Some(self.rel.relative.truncate(&self.rel.reduce(&self.rel.restrict(&self.eps_a(&l))), self.cap))
    }

    /// `r ∘ (d + ε_A) − (d + ε_B) ∘ r` on `p`, modulo exact terms.
    pub fn intertwining_defect(&self, p: &Poly) -> Option<Poly> {
        let rel = self.rel;
        let lhs = rel.restrict(&(rel.absolute.differential(p) + self.eps_a(p)));
        let rp = rel.restrict(p);
        let rhs = rel.relative.differential(&rp) + self.eps_b(&rp)?;
        Some(rel.relative.truncate(&rel.reduce(&(lhs - rhs)), self.cap))
    }
}

/// The image of `π` under `Pois(A, n) ≃ Cois(id, n) → Pois(A, n − 1)`:
/// the weight ≥ 2 part of the relative component of the identity data,
/// which vanishes since `Pol_A(A, n − 1)` is concentrated in weight zero.
pub fn forgetful_poisson_step(a: &CdgaPresentation, pi: &Poly, n: i64, cap: u32) -> Result<(Polyvectors, Poly), PolyvecError> {
    let pol = Polyvectors::absolute(a, n);
    let v = is_poisson(&pol, pi, cap)?;
    if !v.poisson {
        return Err(PolyvecError::NotMaurerCartan(pol.fmt(&v.residual)));
    }
    let res = koszul_resolve(a, &[], 0)?;
    let rel = strict_kernel(&res, n, 0)?;
    let gamma = rel.canonical_gamma(pi).unwrap_or_default();
    let target = Polyvectors::absolute(a, n - 1);
    let image = gamma.filter(|m| rel.relative.mono_weight(m) >= 2);
    Ok((target, image))
}

impl fmt::Display for PoissonVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "POISSON: {}", if self.poisson { "yes" } else { "no" })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn xyz() -> Polyvectors {
        Polyvectors::absolute(&CdgaPresentation::free(&[("x", 0), ("y", 0), ("z", 0)]), 0)
    }

    #[test]
    fn schouten_examples() {
        let pol = xyz();
        let p = |s: &str| pol.parse(s).unwrap();
        assert_eq!(pol.schouten(&p("x*∂x"), &p("x")), p("x"));
        let c = Polyvectors::absolute(&CdgaPresentation::free(&[("x", 0), ("y", 0)]), 0);
        let b = c.parse("∂x*∂y").unwrap();
        assert!(c.schouten(&b, &b).is_zero());
        let so3 = p("z*∂x*∂y + x*∂y*∂z + y*∂z*∂x");
        assert!(pol.schouten(&so3, &so3).is_zero());
        assert_eq!(pol.induced_bracket(&so3, &p("x"), &p("y")), p("z"));
    }

    #[test]
    fn poisson_examples() {
        let pol = xyz();
        let p = |s: &str| pol.parse(s).unwrap();
        assert!(is_poisson(&pol, &Lin::zero(), 4).unwrap().poisson);
        let c = Polyvectors::absolute(&CdgaPresentation::free(&[("x", 0), ("y", 0)]), 0);
        assert!(is_poisson(&c, &c.parse("x*∂x*∂y").unwrap(), 4).unwrap().poisson);
        let bad = p("y*∂x*∂y + x*∂y*∂z");
        let v = is_poisson(&pol, &bad, 4).unwrap();
        assert!(!v.poisson);
        let jac = generator_jacobiators(&pol, &bad).unwrap();
        assert_eq!(jac[0].1, pol.base.ring.parse("-x").unwrap());
        assert!(matches!(is_poisson(&pol, &p("∂x"), 4), Err(PolyvecError::Typing(_))));
        let so3 = p("z*∂x*∂y + x*∂y*∂z + y*∂z*∂x");
        let opp = pol.opposite(&so3);
        assert_eq!(opp, -so3.clone());
        assert_eq!(pol.opposite(&opp), so3);
        assert!(is_poisson(&pol, &opp, 4).unwrap().poisson);
    }

    fn random_poly(pol: &Polyvectors, terms: &[(usize, usize, i64)], max_len: u32) -> Poly {
        let mut out = Lin::zero();
        for &(w, k, c) in terms {
            let w = w as u32 % 4;
            let mut all = Vec::new();
            for d in -2..=3 {
                all.extend(pol.basis(d, w, max_len.saturating_sub(w)));
            }
            if all.is_empty() {
                continue;
            }
            out.add_term(all[k % all.len()].clone(), q(c));
        }
        out
    }

    fn terms() -> impl Strategy<Value = Vec<(usize, usize, i64)>> {
        prop::collection::vec((0usize..4, 0usize..100_000, -3i64..=3), 1..3)
    }

    fn parts(pol: &Polyvectors, p: &Poly) -> Vec<(i64, Poly)> {
        pol.homogeneous(p).into_iter().collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

        #[test]
        fn schouten_laws(a in terms(), b in terms(), c in terms(), n in 0i64..=1) {
            let base = CdgaPresentation::free(&[("x", 0), ("y", 0), ("z", 0)]);
            let pol = Polyvectors::absolute(&base, n);
            let nn = pol.shift;
            let (a, b, c) = (random_poly(&pol, &a, 4), random_poly(&pol, &b, 4), random_poly(&pol, &c, 4));
            let par = |x: i64| sign_scalar(x.rem_euclid(2) == 1);
            for (da, pa) in parts(&pol, &a) {
                for (db, pb) in parts(&pol, &b) {
                    let ab = pol.schouten(&pa, &pb);
                    prop_assert_eq!(ab.clone(), -pol.schouten(&pb, &pa).scale(&par((da - nn) * (db - nn))));
                    for (dc, pc) in parts(&pol, &c) {
                        let jac = pol.schouten(&pa, &pol.schouten(&pb, &pc))
                            - pol.schouten(&pol.schouten(&pa, &pb), &pc)
                            - pol.schouten(&pb, &pol.schouten(&pa, &pc)).scale(&par((da - nn) * (db - nn)));
                        prop_assert!(jac.is_zero());
                        // derivation in the second slot
                        let lhs = pol.schouten(&pa, &pol.ring.mul(&pb, &pc));
                        let rhs = pol.ring.mul(&pol.schouten(&pa, &pb), &pc)
                            + pol.ring.mul(&pb, &pol.schouten(&pa, &pc)).scale(&par((da - nn) * db));
                        prop_assert_eq!(lhs, rhs);
                        let _ = dc;
                    }
                }
            }
        }
    }

    #[test]
    fn poisson_matches_jacobi_oracle() {
        let pol = xyz();
        let cases = [
            "z*∂x*∂y + x*∂y*∂z + y*∂z*∂x",
            "y*∂x*∂y + x*∂y*∂z",
            "x*y*∂x*∂y",
            "∂x*∂y + z*∂y*∂z",
            "x^2*∂y*∂z + y*∂x*∂z",
            "x*∂x*∂y + y*∂x*∂z",
        ];
        for s in cases {
            let pi = pol.parse(s).unwrap();
            let v = is_poisson(&pol, &pi, 4).unwrap();
            let jac = generator_jacobiators(&pol, &pi).unwrap();
            assert_eq!(v.poisson, jac.iter().all(|(_, j)| j.is_zero()), "{}", s);
            assert_eq!(v.poisson, derived_axiom_failure(&pol, &pi).is_none(), "{}", s);
        }
    }

    #[test]
    fn shifted_poisson() {
        let base = CdgaPresentation::free(&[("x", 0), ("y", 0), ("p", 1), ("q", 1)]);
        let pol = Polyvectors::absolute(&base, 1);
        let mut verdicts = Vec::new();
        for s in ["x*∂x*∂p", "∂x*∂p + ∂y*∂q", "y*∂x*∂p + x*∂y*∂q", "p*∂p*∂q", "x*∂y*∂p + p*∂p*∂q", "x*∂x*∂p + y*∂x*∂q"] {
            let pi = pol.parse(s).unwrap();
            let v = is_poisson(&pol, &pi, 4).unwrap();
            assert_eq!(v.poisson, derived_axiom_failure(&pol, &pi).is_none(), "{}", s);
            verdicts.push(v.poisson);
        }
        assert!(verdicts.contains(&true) && verdicts.contains(&false));
        let ring = PolyRing::new(&[("x", 0), ("e", -1)]);
        let dx = ring.parse("x").unwrap();
        let a = CdgaPresentation::new(ring, vec![Lin::zero(), dx]).unwrap();
        let pa = Polyvectors::absolute(&a, 0);
        // d∂e = 0 and d∂x = −∂e up to sign: the differential squares to zero
        for d in -1..=3 {
            for w in 0..=2 {
                for m in pa.basis(d, w, 3) {
                    let v = Lin::basis(m);
                    assert!(pa.differential(&pa.differential(&v)).is_zero());
                }
            }
        }
    }

    fn r4() -> CdgaPresentation {
        CdgaPresentation::free(&[("x1", 0), ("x2", 0), ("y1", 0), ("y2", 0)])
    }

    #[test]
    fn coisotropic_matches_classical() {
        let a = r4();
        let pol = Polyvectors::absolute(&a, 0);
        let pi = pol.parse("∂x1*∂y1 + ∂x2*∂y2").unwrap();
        let names = ["x1", "x2", "y1", "y2"];
        let mut seen = 0;
        for i in 0..4 {
            for j in i + 1..4 {
                let seq = vec![a.ring.var(i), a.ring.var(j)];
                let res = koszul_resolve(&a, &seq, 3).unwrap();
                let rel = strict_kernel(&res, 0, 3).unwrap();
                let strict = rel.coisotropic_residual(&pi, None, CoisMode::Strict, 4).unwrap();
                let transferred = rel.coisotropic_residual(&pi, None, CoisMode::Transferred, 4).unwrap();
                let oracle = classical_coisotropic_ideal_check(&pol, &pi, &seq, 3).unwrap();
                let classical = oracle == IdealVerdict::Coisotropic;
                assert_eq!(strict.is_zero(), classical, "{} {}", names[i], names[j]);
                assert_eq!(transferred.is_zero(), classical);
                seen += 1;
            }
        }
        assert_eq!(seen, 6);
    }

    #[test]
    fn kernel_is_closed() {
        let a = CdgaPresentation::free(&[("x", 0), ("y", 0)]);
        let res = koszul_resolve(&a, &[a.ring.var(1)], 3).unwrap();
        let rel = strict_kernel(&res, 0, 2).unwrap();
        let mut ker = Vec::new();
        for d in 0..=2 {
            for w in 0..=2 {
                ker.extend(rel.kernel_basis(d, w));
            }
        }
        assert!(!ker.is_empty());
        for a in &ker {
            for b in &ker {
                assert!(rel.in_kernel(&rel.absolute.ring.mul(a, b)));
                assert!(rel.in_kernel(&rel.absolute.schouten(a, b)));
            }
        }
        // one normal direction: every bivector restricts to zero
        let bi = rel.kernel_basis(2, 2);
        assert!(rel.in_kernel(&rel.absolute.parse("∂x*∂y").unwrap()));
        assert!(!rel.in_kernel(&rel.absolute.parse("∂y").unwrap()));
        assert!(rel.in_kernel(&rel.absolute.parse("∂x").unwrap()));
        assert!(bi.iter().all(|b| rel.in_kernel(b)));
        // the identity: no relative symbols, kernel is Pol^{≥1}
        let id = koszul_resolve(&a, &[], 2).unwrap();
        let rel = strict_kernel(&id, 0, 2).unwrap();
        assert_eq!(rel.positive_weight_dim(-2..=2, 3), 0);
        assert!(rel.kernel_basis(0, 0).is_empty());
        assert_eq!(rel.kernel_basis(1, 1).len(), rel.absolute.basis(1, 1, 2).len());
    }

    #[test]
    fn not_surjective_is_refused() {
        let a = CdgaPresentation::free(&[("x", 0), ("y", 0)]);
        let xy = a.ring.parse("x^2").unwrap();
        let res = koszul_resolve(&a, &[xy], 4).unwrap();
        assert!(matches!(strict_kernel(&res, 0, 1), Err(PolyvecError::NotSurjective(_))));
    }

    fn symplectic(names: [&str; 2]) -> (CdgaPresentation, Poly) {
        let a = CdgaPresentation::free(&[(names[0], 0), (names[1], 0)]);
        let pol = Polyvectors::absolute(&a, 0);
        let pi = pol.parse(&format!("∂{}*∂{}", names[0], names[1])).unwrap();
        (a, pi)
    }

    #[test]
    fn graph_examples() {
        let (a, pa) = symplectic(["x", "y"]);
        let (b, pb) = symplectic(["u", "v"]);
        let f = CdgaMorphism::new(a.clone(), b.clone(), vec![b.ring.var(0), b.ring.var(1)]).unwrap();
        let v = graph_correspondence_check(&f, &pa, &pb, 0, false, 3).unwrap();
        assert!(v.preserves && v.coisotropic);
        let w = graph_correspondence_check(&f, &pa, &pb, 0, true, 3).unwrap();
        assert!(!w.coisotropic);
        let (label, value) = w.witness.unwrap();
        assert_eq!(label, "{x - u, y - v}");
        assert_eq!(value, a.tensor(&b).ring.constant(q(2)));
        let g = CdgaMorphism::new(a.clone(), b.clone(), vec![b.ring.var(0), Lin::zero()]).unwrap();
        let v = graph_correspondence_check(&g, &pa, &pb, 0, false, 3).unwrap();
        assert!(!v.preserves && !v.coisotropic);
        let v = graph_correspondence_check(&g, &Lin::zero(), &Lin::zero(), 0, false, 3).unwrap();
        assert!(v.preserves && v.coisotropic);
    }

    #[test]
    fn mixed_structures_square_to_zero() {
        let a = r4();
        let pol = Polyvectors::absolute(&a, 0);
        let pi = pol.parse("∂x1*∂y1 + ∂x2*∂y2").unwrap();
        let res = koszul_resolve(&a, &[a.ring.var(2), a.ring.var(3)], 2).unwrap();
        let rel = strict_kernel(&res, 0, 2).unwrap();
        let mix = induced_mixed_structure(&rel, &pi, 4).unwrap();
        for d in 0..=2 {
            for w in 0..=2 {
                for m in rel.absolute.basis(d, w, 2) {
                    let p = Lin::basis(m);
                    assert!(mix.eps_a(&mix.eps_a(&p)).is_zero());
                    let y = rel.reduce(&rel.restrict(&p));
                    let e = mix.eps_b(&y).unwrap();
                    assert!(mix.eps_b(&e).unwrap().is_zero());
                    assert!(mix.intertwining_defect(&p).unwrap().is_zero());
                }
            }
        }
        let bad = koszul_resolve(&a, &[a.ring.var(0), a.ring.var(2)], 2).unwrap();
        let rel = strict_kernel(&bad, 0, 2).unwrap();
        assert!(induced_mixed_structure(&rel, &pi, 4).is_err());
    }

    #[test]
    fn forgetful_step() {
        let a = CdgaPresentation::free(&[("x", 0), ("y", 0), ("z", 0)]);
        let pol = Polyvectors::absolute(&a, 0);
        let so3 = pol.parse("z*∂x*∂y + x*∂y*∂z + y*∂z*∂x").unwrap();
        let (target, image) = forgetful_poisson_step(&a, &so3, 0, 4).unwrap();
        assert!(image.is_zero());
        assert_eq!(target.shift, 0);
        assert!(forgetful_poisson_step(&a, &Lin::zero(), 0, 4).unwrap().1.is_zero());
    }
}
