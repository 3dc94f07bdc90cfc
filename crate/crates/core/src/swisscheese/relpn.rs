//! Strict relative Poisson data: a `P_{n+1}`-algebra `A`, a `P_n`-algebra
//! `B` and a morphism `f: A → Z(B)` into the strict center
//! `Z(B) = Pol(B, n − 1)`, together with the L∞ algebra on `A[n] ⊕ B[n−1]`.

use std::fmt;

use crate::cdga::{CdgaPresentation, Monomial, Poly};
use crate::convolution::Linfty;
use crate::gradedlin::{q, sign_scalar, Lin, Scalar};
use crate::polyvec::{is_poisson, PolyvecError, Polyvectors};

#[derive(Clone, Debug)]
pub struct RelPnData {
    pub n: i64,
    /// `Pol(A, n)`, carrying the bivector of `A`.
    pub pol_a: Polyvectors,
    pub pi_a: Poly,
    /// `Z(B) = Pol(B, n − 1)`.
    pub center: Polyvectors,
    pub pi_b: Poly,
    /// `f(x_i) ∈ Z(B)` for the generators of `A`.
    pub images: Vec<Poly>,
}

impl RelPnData {
    /// Assembles `f = Σ_k f_k` from components: `components[k][i]` is
    /// `f_k(x_i)`, of weight `k` and degree `|x_i|`.
    pub fn new(a: &CdgaPresentation, pi_a: Poly, b: &CdgaPresentation, pi_b: Poly, components: &[Vec<Poly>], n: i64) -> Result<Self, PolyvecError> {
        let pol_a = Polyvectors::absolute(a, n);
        let center = Polyvectors::absolute(b, n - 1);
        let mut images = vec![Lin::zero(); a.ngens()];
        for (k, comp) in components.iter().enumerate() {
            if comp.len() != a.ngens() {
                return Err(PolyvecError::Typing(format!("f_{} has {} images, expected {}", k, comp.len(), a.ngens())));
            }
            for (i, p) in comp.iter().enumerate() {
                for m in p.keys() {
                    if center.mono_weight(m) as usize != k {
                        return Err(PolyvecError::Typing(format!("f_{}({}) has a term of weight {}", k, a.ring.names[i], center.mono_weight(m))));
                    }
                    if center.ring.mono_degree(m) != a.ring.degrees[i] {
                        return Err(PolyvecError::Typing(format!(
                            "f_{}({}) has degree {}, expected {}",
                            k,
                            a.ring.names[i],
                            center.ring.mono_degree(m),
                            a.ring.degrees[i]
                        )));
                    }
                }
                images[i] += p;
            }
        }
        Ok(RelPnData {
            n,
            pol_a,
            pi_a,
            center,
            pi_b,
            images,
        })
    }

    /// `f` on a polynomial of `A`.
    pub fn apply(&self, p: &Poly) -> Poly {
        let ring = &self.center.ring;
        p.map_linear(|m| {
            let mut out = ring.one();
            for (i, &e) in m.0.iter().enumerate() {
                out = ring.mul(&out, &ring.pow(&self.images[i], e));
            }
            out
        })
    }

    /// `d + [π_B, −]` on `Z(B)`.
    pub fn d_center(&self, z: &Poly) -> Poly {
        self.center.differential(z) + self.center.schouten(&self.pi_b, z)
    }

    pub fn bracket_a(&self, x: &Poly, y: &Poly) -> Poly {
        base_part(&self.pol_a, &self.pol_a.induced_bracket(&self.pi_a, &self.pol_a.embed(x), &self.pol_a.embed(y)))
    }

    pub fn bracket_b(&self, x: &Poly, y: &Poly) -> Poly {
        base_part(&self.center, &self.center.induced_bracket(&self.pi_b, &self.center.embed(x), &self.center.embed(y)))
    }

    /// Weight-`k` part of `f(a)`.
    pub fn component(&self, k: u32, a: &Poly) -> Poly {
        self.center.weight_part(&self.apply(a), k)
    }

    /// `f_k(a)(b₁, …, b_k) = [[f_k(a), b₁], …, b_k]`.
    pub fn contract(&self, a: &Poly, bs: &[Poly]) -> Poly {
        let mut p = self.component(bs.len() as u32, a);
        for b in bs {
            p = self.center.schouten(&p, &self.center.embed(b));
        }
        base_part(&self.center, &p)
    }
}

fn base_part(pol: &Polyvectors, p: &Poly) -> Poly {
    let nb = pol.nbase();
    p.filter(|m| pol.mono_weight(m) == 0).map_keys(|m| Monomial(m.0[..nb].to_vec()))
}

/// The tautological triple: `A = Z(B)` with differential `d + [π_B, −]`,
/// the canonical bivector pairing each generator with its symbol, and
/// `f = id`, so `f₀` is the projection to functions and `f₁` sends a symbol
/// to itself.
pub fn tautological_center(b: &CdgaPresentation, pi_b: &Poly, n: i64) -> Result<RelPnData, PolyvecError> {
    let center = Polyvectors::absolute(b, n - 1);
    let ring = center.ring.clone();
    let nb = b.ngens();
    let tmp = RelPnData {
        n,
        pol_a: Polyvectors::absolute(&CdgaPresentation::free(&[]), n),
        pi_a: Lin::zero(),
        center: center.clone(),
        pi_b: pi_b.clone(),
        images: Vec::new(),
    };
    let d: Vec<Poly> = (0..ring.ngens()).map(|g| tmp.d_center(&ring.var(g))).collect();
    let a = CdgaPresentation::new(ring.clone(), d)?;
    let pol_a = Polyvectors::absolute(&a, n);
    let mut pi_a = Lin::zero();
    for i in 0..nb {
        let pair = pol_a.ring.mul(&pol_a.symbol(i).expect("symbol"), &pol_a.symbol(nb + i).expect("symbol"));
        let x = ring.var(i);
        let s = ring.var(nb + i);
        let probe = base_part(&pol_a, &pol_a.induced_bracket(&pair, &pol_a.embed(&x), &pol_a.embed(&s)));
        let want = center.schouten(&x, &s);
        let c = want.coeff(&Monomial::one(ring.ngens())) / probe.coeff(&Monomial::one(ring.ngens()));
        pi_a.add_scaled(&pair, &c);
    }
    let images = (0..ring.ngens()).map(|g| ring.var(g)).collect();
    Ok(RelPnData {
        n,
        pol_a,
        pi_a,
        center,
        pi_b: pi_b.clone(),
        images,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelPnVerdict {
    pub holds: bool,
    /// The first failing relation.
    pub failure: Option<String>,
}

impl fmt::Display for RelPnVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.failure {
            None => write!(f, "RELATIVE POISSON: yes"),
            Some(r) => write!(f, "RELATIVE POISSON: no\n  first failing relation: {}", r),
        }
    }
}

fn fail(s: String) -> RelPnVerdict {
    RelPnVerdict {
        holds: false,
        failure: Some(s),
    }
}

/// Checks that `A` is a strict `P_{n+1}`-algebra, `B` a strict
/// `P_n`-algebra, and that `f: A → Z(B)` commutes with the differentials
/// and brackets. `f` is multiplicative by construction; both brackets are
/// biderivations, so generator pairs suffice.
pub fn strict_relpn_check(data: &RelPnData, cap: u32) -> Result<RelPnVerdict, PolyvecError> {
    let va = is_poisson(&data.pol_a, &data.pi_a, cap)?;
    if !va.poisson {
        return Ok(fail(format!("A is not P_{}: dπ + ½[π, π] = {}", data.n + 1, data.pol_a.fmt(&va.residual))));
    }
    let vb = is_poisson(&data.center, &data.pi_b, cap)?;
    if !vb.poisson {
        return Ok(fail(format!("B is not P_{}: dπ + ½[π, π] = {}", data.n, data.center.fmt(&vb.residual))));
    }
    let ra = &data.pol_a.base.ring;
    let zc = &data.center.ring;
    for i in 0..ra.ngens() {
        let lhs = data.d_center(&data.images[i]);
        let rhs = data.apply(&data.pol_a.base.d[i]);
        let r = data.center.truncate(&(lhs - rhs), cap);
        if !r.is_zero() {
            return Ok(fail(format!("d f({}) − f(d {}) = {}", ra.names[i], ra.names[i], zc.fmt(&r))));
        }
    }
    for i in 0..ra.ngens() {
        for j in i..ra.ngens() {
            let (x, y) = (ra.var(i), ra.var(j));
            let lhs = data.apply(&data.bracket_a(&x, &y));
            let rhs = data.center.schouten(&data.images[i], &data.images[j]);
            let r = data.center.truncate(&(lhs - rhs), cap);
            if !r.is_zero() {
                return Ok(fail(format!("f{{{}, {}}} − [f {}, f {}] = {}", ra.names[i], ra.names[j], ra.names[i], ra.names[j], zc.fmt(&r))));
            }
        }
    }
    Ok(RelPnVerdict { holds: true, failure: None })
}

/// Basis of `A[n] ⊕ B[n−1]`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UElem {
    A(Monomial),
    B(Monomial),
}

/// The L∞ algebra `U(A, B)[n]` on `A[n] ⊕ B[n−1]`: the Poisson brackets of
/// `A` and `B`, the differentials, and mixed brackets
/// `[a, b₁, …, b_k] = f_k(a)(b₁, …, b_k)`.
#[derive(Clone, Debug)]
pub struct UBrackets<'a> {
    pub data: &'a RelPnData,
    pub max_arity: usize,
}

pub fn u_brackets(data: &RelPnData, max_arity: usize) -> UBrackets<'_> {
    UBrackets { data, max_arity }
}

impl UBrackets<'_> {
    fn par(&self, u: &UElem) -> bool {
        self.degree(u).rem_euclid(2) == 1
    }

    fn poly_a(m: &Monomial) -> Poly {
        Lin::basis(m.clone())
    }

    fn tag_a(p: &Poly) -> Lin<UElem> {
        p.map_keys(|m| UElem::A(m.clone()))
    }

    fn tag_b(p: &Poly) -> Lin<UElem> {
        p.map_keys(|m| UElem::B(m.clone()))
    }

    fn basis_bracket(&self, us: &[UElem]) -> Lin<UElem> {
        let d = self.data;
        let k = us.len();
        if k == 1 {
            return match &us[0] {
                UElem::A(m) => {
                    let a = Self::poly_a(m);
                    let f0 = base_part(&d.center, &d.component(0, &a));
                    Self::tag_a(&d.pol_a.base.differential(&a)) + Self::tag_b(&f0)
                }
                UElem::B(m) => Self::tag_b(&d.center.base.differential(&Lin::basis(m.clone()))),
            };
        }
        let na = us.iter().filter(|u| matches!(u, UElem::A(_))).count();
        if na == 0 && k == 2 {
            let (UElem::B(x), UElem::B(y)) = (&us[0], &us[1]) else { unreachable!() };
            return Self::tag_b(&d.bracket_b(&Lin::basis(x.clone()), &Lin::basis(y.clone())));
        }
        if na == 2 && k == 2 {
            let (UElem::A(x), UElem::A(y)) = (&us[0], &us[1]) else { unreachable!() };
            return Self::tag_a(&d.bracket_a(&Lin::basis(x.clone()), &Lin::basis(y.clone())));
        }
        if na != 1 {
            return Lin::zero();
        }
        // move the A argument to the front
        let p = us.iter().position(|u| matches!(u, UElem::A(_))).expect("one A");
        let ea = self.par(&us[p]);
        let before: usize = us[..p].iter().filter(|u| self.par(u)).count();
        let mut s = sign_scalar(p % 2 == 1);
        if ea && before % 2 == 1 {
            s = -s;
        }
        let UElem::A(am) = &us[p] else { unreachable!() };
        let bs: Vec<&UElem> = us.iter().enumerate().filter(|(i, _)| *i != p).map(|(_, u)| u).collect();
        let polys: Vec<Poly> = bs
            .iter()
            .map(|u| match u {
                UElem::B(m) => Lin::basis(m.clone()),
                UElem::A(_) => unreachable!(),
            })
            .collect();
        let kk = bs.len();
        let staircase = bs.iter().enumerate().fold(false, |acc, (i, u)| acc ^ ((kk - 1 - i) % 2 == 1 && self.par(u)));
        let k_odd = kk % 2 == 1;
        // −(−1)^{k + Σ(k−i)|b_i| + k|a|}
        let s2 = sign_scalar(!(k_odd ^ staircase ^ (k_odd && ea)));
        Self::tag_b(&d.contract(&Self::poly_a(am), &polys)).scale(&(s * s2))
    }
}

impl Linfty for UBrackets<'_> {
    type B = UElem;
    fn degree(&self, b: &UElem) -> i64 {
        match b {
            UElem::A(m) => self.data.pol_a.base.ring.mono_degree(m) - self.data.n,
            UElem::B(m) => self.data.center.base.ring.mono_degree(m) - self.data.n + 1,
        }
    }
    fn weight(&self, _: &UElem) -> i64 {
        0
    }
    fn max_arity(&self) -> usize {
        self.max_arity
    }
    fn bracket(&self, args: &[Lin<UElem>]) -> Lin<UElem> {
        let mut combos: Vec<(Vec<UElem>, Scalar)> = vec![(Vec::new(), q(1))];
        for a in args {
            let mut next = Vec::new();
            for (w, c) in &combos {
                for (u, cu) in a.iter() {
                    let mut v = w.clone();
                    v.push(u.clone());
                    next.push((v, c * cu));
                }
            }
            combos = next;
        }
        let mut out = Lin::zero();
        for (us, c) in combos {
            out.add_scaled(&self.basis_bracket(&us), &c);
        }
        out
    }
    fn weight_cap(&self) -> Option<i64> {
        None
    }
    fn pronilpotent(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convolution::jacobi_residual;

    fn parse(pol: &Polyvectors, s: &str) -> Poly {
        pol.parse(s).unwrap()
    }

    fn symplectic_plane(n: i64) -> (CdgaPresentation, Poly) {
        let b = if n == 2 { CdgaPresentation::free(&[("x", 0), ("p", 1)]) } else { CdgaPresentation::free(&[("x", 0), ("y", 0)]) };
        let pol = Polyvectors::absolute(&b, n - 1);
        let pi = if n == 2 { parse(&pol, "∂x*∂p") } else { parse(&pol, "∂x*∂y") };
        (b, pi)
    }

    #[test]
    fn tautological_center_is_relative_poisson() {
        for n in [1, 2] {
            let (b, pi) = symplectic_plane(n);
            let data = tautological_center(&b, &pi, n).unwrap();
            let v = strict_relpn_check(&data, 4).unwrap();
            assert!(v.holds, "n={} {}", n, v);
        }
        let b = CdgaPresentation::free(&[("x", 0), ("y", 0)]);
        let pol = Polyvectors::absolute(&b, 0);
        let data = tautological_center(&b, &parse(&pol, "x*∂x*∂y"), 1).unwrap();
        assert!(strict_relpn_check(&data, 4).unwrap().holds);
    }

    fn systems() -> Vec<RelPnData> {
        let mut out = Vec::new();
        for n in [1, 2] {
            let (b, pi) = symplectic_plane(n);
            out.push(tautological_center(&b, &pi, n).unwrap());
        }
        let b = CdgaPresentation::free(&[("x", 0), ("y", 0)]);
        let pol = Polyvectors::absolute(&b, 0);
        out.push(tautological_center(&b, &parse(&pol, "x*∂x*∂y"), 1).unwrap());
        out
    }

    fn samples(d: &RelPnData) -> (Vec<UElem>, Vec<UElem>) {
        let ra = &d.pol_a.base.ring;
        let rb = &d.center.base.ring;
        let mut a = Vec::new();
        for len in 1..=2 {
            for deg in -3..=3 {
                for m in ra.monomials(deg, len) {
                    a.push(UElem::A(m));
                }
            }
        }
        let mut b = Vec::new();
        for len in 1..=2 {
            for deg in -3..=3 {
                for m in rb.monomials(deg, len) {
                    b.push(UElem::B(m));
                }
            }
        }
        (a, b)
    }

    fn tuples(pool: &[UElem], k: usize) -> Vec<Vec<UElem>> {
        let mut out = vec![Vec::new()];
        for _ in 0..k {
            let mut next = Vec::new();
            for t in &out {
                let start = t.last().map(|u| pool.iter().position(|v| v == u).unwrap()).unwrap_or(0);
                for v in &pool[start..] {
                    let mut t2: Vec<UElem> = t.clone();
                    t2.push(v.clone());
                    next.push(t2);
                }
            }
            out = next;
        }
        out
    }

    fn failures(u: &UBrackets, ts: &[Vec<UElem>]) -> Vec<Vec<UElem>> {
        ts.iter()
            .filter(|t| {
                let args: Vec<Lin<UElem>> = t.iter().map(|x| Lin::basis(x.clone())).collect();
                !jacobi_residual(u, &args).is_zero()
            })
            .cloned()
            .collect()
    }

    #[test]
    fn generalized_jacobi_up_to_arity_four() {
        for d in systems() {
            let u = u_brackets(&d, 4);
            let (a, b) = samples(&d);
            let a: Vec<UElem> = a.into_iter().take(8).collect();
            let b: Vec<UElem> = b.into_iter().take(4).collect();
            let mut pool = a.clone();
            pool.extend(b.iter().cloned());
            for k in 2..=3 {
                let bad = failures(&u, &tuples(&pool, k));
                assert!(bad.is_empty(), "n={} {:?}", d.n, bad);
            }
            let mut quads = Vec::new();
            for x in a.iter().take(4) {
                for t in tuples(&b, 3) {
                    quads.push([vec![x.clone()], t].concat());
                }
                for y in a.iter().take(4) {
                    for t in tuples(&b, 2) {
                        quads.push([vec![x.clone(), y.clone()], t].concat());
                    }
                }
            }
            let bad = failures(&u, &quads);
            assert!(bad.is_empty(), "n={} {:?}", d.n, bad);
        }
    }

    #[test]
    fn plain_algebra_map_with_zero_brackets() {
        let a = CdgaPresentation::free(&[("u", 0), ("v", 0)]);
        let b = CdgaPresentation::free(&[("x", 0)]);
        let z = Polyvectors::absolute(&b, 0);
        let f0 = vec![parse(&z, "x^2"), parse(&z, "x + 1")];
        let data = RelPnData::new(&a, Lin::zero(), &b, Lin::zero(), &[f0], 1).unwrap();
        assert!(strict_relpn_check(&data, 4).unwrap().holds);
        assert_eq!(data.apply(&a.ring.parse("u*v").unwrap()), parse(&z, "x^3 + x^2"));
    }

    #[test]
    fn component_typing_is_enforced() {
        let a = CdgaPresentation::free(&[("u", 0)]);
        let b = CdgaPresentation::free(&[("x", 0)]);
        let z = Polyvectors::absolute(&b, 0);
        let err = RelPnData::new(&a, Lin::zero(), &b, Lin::zero(), &[vec![parse(&z, "∂x")]], 1).unwrap_err();
        assert!(err.to_string().contains("weight"), "{}", err);
        let err = RelPnData::new(&a, Lin::zero(), &b, Lin::zero(), &[vec![Lin::zero()], vec![parse(&z, "x*∂x")]], 1).unwrap_err();
        assert!(err.to_string().contains("degree"), "{}", err);
    }

    #[test]
    fn broken_data_names_the_failing_relation() {
        let (b, pi) = symplectic_plane(1);
        let mut data = tautological_center(&b, &pi, 1).unwrap();
        data.pi_a = data.pi_a.scale(&q(-1));
        let v = strict_relpn_check(&data, 4).unwrap();
        assert!(!v.holds);
        assert!(v.failure.as_ref().unwrap().starts_with("f{x, ∂x}"), "{}", v);

        let mut data = tautological_center(&b, &pi, 1).unwrap();
        data.pol_a = Polyvectors::absolute(&CdgaPresentation::new(data.pol_a.base.ring.clone(), vec![Lin::zero(); 4]).unwrap(), 1);
        let v = strict_relpn_check(&data, 4).unwrap();
        assert!(v.failure.as_ref().unwrap().starts_with("d f(x)"), "{}", v);

        let mut data = tautological_center(&b, &pi, 1).unwrap();
        data.pi_b = parse(&data.center, "x*∂x*∂y");
        let v = strict_relpn_check(&data, 4).unwrap();
        assert!(!v.holds);
    }

    #[test]
    fn non_poisson_factor_is_reported() {
        let b = CdgaPresentation::free(&[("x", 0), ("y", 0), ("z", 0)]);
        let z = Polyvectors::absolute(&b, 0);
        let pi = parse(&z, "y*∂x*∂y + x*∂y*∂z");
        let data = RelPnData::new(&CdgaPresentation::free(&[]), Lin::zero(), &b, pi, &[], 1).unwrap();
        let v = strict_relpn_check(&data, 4).unwrap();
        assert!(v.failure.unwrap().starts_with("B is not P_1"));
    }

    #[test]
    fn vanishing_higher_components_give_a_direct_sum() {
        let a = CdgaPresentation::free(&[("u", 0), ("v", 1)]);
        let pa = Polyvectors::absolute(&a, 1);
        let (b, pi_b) = symplectic_plane(1);
        let data = RelPnData::new(&a, parse(&pa, "u*∂u*∂v"), &b, pi_b, &[vec![Lin::zero(), Lin::zero()]], 1).unwrap();
        assert!(strict_relpn_check(&data, 4).unwrap().holds);
        let u = u_brackets(&data, 4);
        let (sa, sb) = samples(&data);
        for x in &sa {
            for k in 1..=2 {
                for t in tuples(&sb, k) {
                    let mut args = vec![Lin::basis(x.clone())];
                    args.extend(t.iter().map(|y| Lin::basis(y.clone())));
                    assert!(u.bracket(&args).is_zero());
                }
            }
        }
        let mut pool = sa.clone();
        pool.extend(sb);
        assert!(failures(&u, &tuples(&pool, 3)).is_empty());
    }

    #[test]
    fn projection_to_a_is_strict() {
        for d in systems() {
            let u = u_brackets(&d, 4);
            let (a, b) = samples(&d);
            let mut pool: Vec<UElem> = a.into_iter().take(8).collect();
            pool.extend(b.into_iter().take(4));
            let proj = |v: &Lin<UElem>| v.filter(|e| matches!(e, UElem::A(_)));
            for k in 1..=3 {
                for t in tuples(&pool, k) {
                    let args: Vec<Lin<UElem>> = t.iter().map(|x| Lin::basis(x.clone())).collect();
                    let lhs = proj(&u.bracket(&args));
                    let pargs: Vec<Lin<UElem>> = args.iter().map(|x| proj(x)).collect();
                    let rhs = if k <= 2 { proj(&u.bracket(&pargs)) } else { Lin::zero() };
                    assert_eq!(lhs, rhs, "{:?}", t);
                }
            }
        }
    }

    #[test]
    fn kernel_of_projection_carries_the_twisted_center_bracket() {
        for d in systems() {
            let u = u_brackets(&d, 4);
            let ra = &d.pol_a.base.ring;
            let kernel: Vec<Monomial> = (-3..=3)
                .flat_map(|deg| ra.monomials_upto(deg, 2))
                .filter(|m| d.center.mono_weight(m) > 0)
                .collect();
            for m in &kernel {
                let p = Lin::basis(m.clone());
                let l1 = u.bracket(&[Lin::basis(UElem::A(m.clone()))]);
                assert_eq!(l1, d.d_center(&p).map_keys(|k| UElem::A(k.clone())));
                for m2 in &kernel {
                    let l2 = u.bracket(&[Lin::basis(UElem::A(m.clone())), Lin::basis(UElem::A(m2.clone()))]);
                    let want = d.center.schouten(&p, &Lin::basis(m2.clone()));
                    assert_eq!(l2, want.map_keys(|k| UElem::A(k.clone())));
                }
            }
        }
    }

    #[test]
    fn hamiltonian_map_is_a_lie_morphism() {
        for d in systems() {
            let z = &d.center;
            let rb = &z.base.ring;
            let funcs: Vec<Poly> = rb.monomials_upto(0, 2).into_iter().chain(rb.monomials_upto(1, 2)).map(Lin::basis).collect();
            let ham = |b: &Poly| z.schouten(&d.pi_b, &z.embed(b));
            for x in &funcs {
                for y in &funcs {
                    let lhs = z.schouten(&ham(x), &ham(y));
                    let rhs = ham(&d.bracket_b(x, y));
                    assert!((lhs.clone() - rhs.clone()).is_zero() || (lhs.clone() + rhs.clone()).is_zero(), "{} vs {}", z.fmt(&lhs), z.fmt(&rhs));
                }
            }
        }
    }
}
