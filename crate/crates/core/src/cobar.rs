//! The cobar construction ΩC: the free operad on C̄[−1] with the
//! differential dX = −s d₁(s⁻¹X) − Σ_t (s⊗s)(t, Δ_t(s⁻¹X)) − θ(s⁻¹X)·id, the
//! last term only on arity-one generators of a curved cooperad.

use std::fmt;

use thiserror::Error;

use crate::gradedlin::{q, sign_scalar, Bigraded, Lin, Scalar};
use crate::opcore::{Body, CoElem, CooperadData};
use crate::treecomb::{canonicalize, Input, RawTree, Tree, TreeLabel};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CobarError {
    #[error("cooperad is not conilpotent below arity {0}")]
    NotConilpotent(usize),
}

/// A generator `s x` of ΩC for a basis element `x` of C̄.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CobarGen(pub CoElem);

impl fmt::Debug for CobarGen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl TreeLabel for CobarGen {
    fn degree(&self) -> i64 {
        self.0.degree() + 1
    }
    fn arity(&self) -> usize {
        self.0.arity()
    }
    fn permute_inputs(&self, perm: &[usize]) -> Lin<Self> {
        self.0.act(perm).map_keys(|x| CobarGen(x.clone()))
    }
}

impl Bigraded for CobarGen {
    fn degree(&self) -> i64 {
        self.0.degree() + 1
    }
    fn weight(&self) -> i64 {
        self.0.weight()
    }
}

pub type CobarTree = Tree<CobarGen>;

pub fn tree_weight(t: &CobarTree) -> i64 {
    t.nodes().iter().map(|n| n.label.0.weight()).sum()
}

#[derive(Clone, Debug)]
pub struct CobarOperad {
    pub cooperad: CooperadData,
    pub cap: usize,
}

/// Builds ΩC up to the arity cap after checking that iterated reduced
/// decompositions terminate.
pub fn cobar(c: &CooperadData, cap: usize) -> Result<CobarOperad, CobarError> {
    let mut cc = c.clone();
    cc.cap = cap.min(c.cap);
    for m in 0..=cc.cap {
        for x in cc.reduced_basis(m) {
            if !terminates(&cc, &x, 0) {
                return Err(CobarError::NotConilpotent(m));
            }
        }
    }
    Ok(CobarOperad {
        cooperad: cc,
        cap: cap.min(c.cap),
    })
}

fn terminates(c: &CooperadData, x: &CoElem, depth: usize) -> bool {
    if depth > 2 * c.cap + 4 {
        return false;
    }
    c.reduced_splits(x).iter().all(|(_, _, d)| {
        d.keys()
            .all(|(r, u)| terminates(c, r, depth + 1) && terminates(c, u, depth + 1))
    })
}

impl CobarOperad {
    pub fn generators(&self, m: usize) -> Vec<CobarGen> {
        self.cooperad.reduced_basis(m).into_iter().map(CobarGen).collect()
    }

    pub fn all_generators(&self) -> Vec<CobarGen> {
        (0..=self.cap).flat_map(|m| self.generators(m)).collect()
    }

    /// The differential of a generator as raw fragments; fragment leaf `j`
    /// is input slot `j`.
    pub fn fragments(&self, g: &CobarGen) -> Vec<(Scalar, RawTree<CobarGen>)> {
        let x = &g.0;
        let mut out = Vec::new();
        let theta = self.cooperad.theta(x);
        if theta != q(0) {
            out.push((-theta, RawTree::identity()));
        }
        let m = x.arity();
        for (upper, p, d) in self.cooperad.reduced_splits(x) {
            let rest: Vec<usize> = (0..m).filter(|i| !upper.contains(i)).collect();
            let mut root_inputs: Vec<Input> = rest.iter().map(|&l| Input::Leaf(l as u32)).collect();
            root_inputs.insert(p, Input::Node(1));
            let up_inputs: Vec<Input> = upper.iter().map(|&l| Input::Leaf(l as u32)).collect();
            for ((r, u), c) in d.iter() {
                // −(s⊗s)(r⊗u) = −(−1)^{|r|} sr ⊗ su
                let s = sign_scalar(r.degree() & 1 == 0);
                out.push((
                    c * s,
                    RawTree::two_vertex(
                        CobarGen(r.clone()),
                        root_inputs.clone(),
                        CobarGen(u.clone()),
                        up_inputs.clone(),
                    ),
                ));
            }
        }
        out
    }

    pub fn d_generator(&self, g: &CobarGen) -> Lin<CobarTree> {
        let mut out = Lin::zero();
        for (c, frag) in self.fragments(g) {
            let mut raw = frag;
            shift_leaves(&mut raw);
            out.add_scaled(&canonicalize(&raw), &c);
        }
        out
    }

    pub fn d_tree(&self, t: &CobarTree) -> Lin<CobarTree> {
        t.derivation(1, |g| self.fragments(g))
    }

    pub fn d(&self, x: &Lin<CobarTree>) -> Lin<CobarTree> {
        x.map_linear(|t| self.d_tree(t))
    }
}

fn shift_leaves(raw: &mut RawTree<CobarGen>) {
    for n in &mut raw.nodes {
        for i in &mut n.inputs {
            if let Input::Leaf(l) = i {
                *l += 1;
            }
        }
    }
}

/// Per-generator residuals of d²; certified when every residual is zero.
#[derive(Clone, Debug)]
pub struct CertificationReport {
    pub name: String,
    pub entries: Vec<(String, Lin<CobarTree>)>,
}

impl CertificationReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|(_, r)| r.is_zero())
    }

    pub fn failures(&self) -> Vec<&(String, Lin<CobarTree>)> {
        self.entries.iter().filter(|(_, r)| !r.is_zero()).collect()
    }

    pub fn generator_count(&self) -> usize {
        self.entries.len()
    }
}

impl fmt::Display for CertificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "cobar {}", self.name)?;
        for (g, r) in &self.entries {
            if r.is_zero() {
                writeln!(f, "  {} -> 0", g)?;
            } else {
                writeln!(f, "  {} -> {}", g, r)?;
            }
        }
        if self.passed() {
            write!(f, "d²=0: PASS (all generators)")
        } else {
            write!(f, "d²=0: FAIL ({} generators)", self.failures().len())
        }
    }
}

pub fn check_d_squared(op: &CobarOperad) -> CertificationReport {
    let mut entries = Vec::new();
    for g in op.all_generators() {
        let dx = op.d_generator(&g);
        entries.push((format!("{:?}", g), op.d(&dx)));
    }
    CertificationReport {
        name: op.cooperad.name.clone(),
        entries,
    }
}

/// Whether every generator's differential preserves weight.
pub fn weight_preserved(op: &CobarOperad) -> bool {
    op.all_generators().iter().all(|g| {
        let w = g.0.weight();
        op.d_generator(g).keys().all(|t| tree_weight(t) == w)
    })
}

/// Whether the generator is one of the curved extras.
pub fn is_curved_generator(g: &CobarGen) -> bool {
    !matches!(g.0.body, Body::Mono(_))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcore::{builtin_cooperad, suspend};

    #[test]
    fn linfty_arity_two_has_no_quadratic_term() {
        let c = builtin_cooperad("coComm", 1, 3).unwrap();
        let op = cobar(&c, 3).unwrap();
        let g = op.generators(2);
        assert_eq!(g.len(), 1);
        assert!(op.d_generator(&g[0]).is_zero());
        assert_eq!(op.d_generator(&op.generators(3)[0]).len(), 3);
    }

    #[test]
    fn small_certifications() {
        for (name, n, k) in [("coComm", 1, 0), ("coLie", 1, 0), ("coP_n", 1, 2), ("coP_n", 2, 2), ("coP_n", 0, 1)] {
            let c = suspend(&builtin_cooperad(name, n, 4).unwrap(), k);
            let rep = check_d_squared(&cobar(&c, 4).unwrap());
            assert!(rep.passed(), "{}", rep);
        }
    }

    #[test]
    fn mutation_is_detected() {
        let mut c = builtin_cooperad("coComm", 1, 4).unwrap();
        c.flip_arity = Some(3);
        assert!(!check_d_squared(&cobar(&c, 4).unwrap()).passed());
    }

    #[test]
    fn curved_cobar_squares_to_zero() {
        let c = builtin_cooperad("coLie_curved", 1, 4).unwrap();
        let op = cobar(&c, 4).unwrap();
        assert!(check_d_squared(&op).passed());
        assert!(weight_preserved(&op));
    }
}
