//! The line-oriented input document.
//!
//! ```text
//! # comment
//! algebra A
//!   gen x 0
//!   gen e -1
//!   d e = x^2
//! end
//! morphism f : A -> B
//!   x = u
//! end
//! shift 0
//! structure pi on A = z*∂x*∂y + x*∂y*∂z + y*∂z*∂x
//! ideal I on A = y1, y2
//! graph-sign +
//! cap monomial 3
//! task check-poisson
//! ```
//!
//! `@x` is accepted for the symbol `∂x`.

use std::collections::BTreeMap;
use std::fmt;

use poisop::cdga::{CdgaMorphism, CdgaPresentation, Poly, PolyRing};
use poisop::polyvec::Polyvectors;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.msg)
    }
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line, msg: msg.into() })
}

#[derive(Clone, Debug)]
pub struct Algebra {
    pub name: String,
    pub line: usize,
    pub cdga: CdgaPresentation,
}

#[derive(Clone, Debug)]
pub struct Morphism {
    pub name: String,
    pub source: String,
    pub target: String,
    pub line: usize,
    pub map: CdgaMorphism,
}

#[derive(Clone, Debug)]
pub struct Structure {
    pub name: String,
    pub on: String,
    pub line: usize,
    pub text: String,
}

#[derive(Clone, Debug)]
pub struct Ideal {
    pub name: String,
    pub on: String,
    pub line: usize,
    pub gens: Vec<Poly>,
}

#[derive(Clone, Debug, Default)]
pub struct Document {
    pub algebras: Vec<Algebra>,
    pub morphisms: Vec<Morphism>,
    pub structures: Vec<Structure>,
    pub ideals: Vec<Ideal>,
    pub shift: Option<i64>,
    pub caps: BTreeMap<String, i64>,
    pub task: Option<String>,
    /// `+1` for `(π_A; +π_B)`, `−1` for the graph convention.
    pub graph_sign: Option<i64>,
}

enum Block {
    None,
    Algebra {
        name: String,
        line: usize,
        gens: Vec<(String, i64)>,
        ring: Option<PolyRing>,
        d: Vec<Option<Poly>>,
    },
    Morphism {
        name: String,
        line: usize,
        src: usize,
        tgt: usize,
        images: Vec<Option<Poly>>,
    },
}

fn normalize(s: &str) -> String {
    s.replace('@', "∂")
}

fn strip_comment(s: &str) -> &str {
    match s.find('#') {
        Some(i) => &s[..i],
        None => s,
    }
}

fn parse_int(line: usize, s: &str) -> Result<i64, ParseError> {
    s.parse::<i64>().or_else(|_| err(line, format!("expected an integer, found `{}`", s)))
}

fn ident(line: usize, s: &str) -> Result<String, ParseError> {
    if s.is_empty() || !s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '\'') || s.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        return err(line, format!("invalid name `{}`", s));
    }
    Ok(s.to_string())
}

impl Document {
    pub fn algebra(&self, name: &str) -> Option<&Algebra> {
        self.algebras.iter().find(|a| a.name == name)
    }

    fn algebra_index(&self, line: usize, name: &str) -> Result<usize, ParseError> {
        match self.algebras.iter().position(|a| a.name == name) {
            Some(i) => Ok(i),
            None => err(line, format!("unknown algebra `{}`", name)),
        }
    }

    /// Parses a structure in `Pol(on, n)`.
    pub fn structure_poly(&self, s: &Structure, n: i64) -> Result<(Polyvectors, Poly), ParseError> {
        let a = self.algebra(&s.on).ok_or_else(|| ParseError {
            line: s.line,
            msg: format!("unknown algebra `{}`", s.on),
        })?;
        let pol = Polyvectors::absolute(&a.cdga, n);
        let p = pol.parse(&s.text).map_err(|e| ParseError { line: s.line, msg: e.to_string() })?;
        Ok((pol, p))
    }

    pub fn parse(src: &str) -> Result<Document, ParseError> {
        let mut doc = Document::default();
        let mut block = Block::None;
        let mut last = 0;
        for (idx, raw) in src.lines().enumerate() {
            let line = idx + 1;
            last = line;
            let text = strip_comment(raw).trim();
            if text.is_empty() {
                continue;
            }
            let words: Vec<&str> = text.split_whitespace().collect();
            match &mut block {
                Block::Algebra { name, line: start, gens, ring, d } => {
                    match words[0] {
                        "gen" => {
                            if ring.is_some() {
                                return err(line, "generators must precede differentials");
                            }
                            if words.len() != 3 {
                                return err(line, "expected `gen NAME DEGREE`");
                            }
                            let g = ident(line, words[1])?;
                            if gens.iter().any(|(n, _)| *n == g) {
                                return err(line, format!("duplicate generator `{}`", g));
                            }
                            gens.push((g, parse_int(line, words[2])?));
                        }
                        "d" => {
                            if gens.is_empty() {
                                return err(line, "differential before any generator");
                            }
                            let r = ring.get_or_insert_with(|| {
                                let refs: Vec<(&str, i64)> = gens.iter().map(|(n, k)| (n.as_str(), *k)).collect();
                                PolyRing::new(&refs)
                            });
                            if d.is_empty() {
                                d.resize(gens.len(), None);
                            }
                            let rest = text[1..].trim();
                            let Some((lhs, rhs)) = rest.split_once('=') else {
                                return err(line, "expected `d GEN = POLY`");
                            };
                            let Some(i) = r.index(lhs.trim()) else {
                                return err(line, format!("unknown generator `{}`", lhs.trim()));
                            };
                            if d[i].is_some() {
                                return err(line, format!("differential of `{}` given twice", lhs.trim()));
                            }
                            d[i] = Some(r.parse(rhs.trim()).map_err(|e| ParseError { line, msg: e.to_string() })?);
                        }
                        "end" => {
                            if gens.is_empty() {
                                return err(line, format!("algebra `{}` has no generators", name));
                            }
                            let refs: Vec<(&str, i64)> = gens.iter().map(|(n, k)| (n.as_str(), *k)).collect();
                            let r = ring.take().unwrap_or_else(|| PolyRing::new(&refs));
                            let dd: Vec<Poly> = (0..gens.len()).map(|i| d.get(i).cloned().flatten().unwrap_or_default()).collect();
                            let cdga = CdgaPresentation::new(r, dd).map_err(|e| ParseError { line, msg: e.to_string() })?;
                            cdga.validate().map_err(|e| ParseError { line, msg: e.to_string() })?;
                            doc.algebras.push(Algebra {
                                name: name.clone(),
                                line: *start,
                                cdga,
                            });
                            block = Block::None;
                        }
                        other => return err(line, format!("unexpected `{}` inside algebra block", other)),
                    }
                    continue;
                }
                Block::Morphism { name, line: start, src, tgt, images } => {
                    if words[0] == "end" {
                        let s = &doc.algebras[*src];
                        let t = &doc.algebras[*tgt];
                        let mut imgs = Vec::new();
                        for (i, img) in images.iter().enumerate() {
                            match img {
                                Some(p) => imgs.push(p.clone()),
                                None => return err(line, format!("no image for generator `{}`", s.cdga.ring.names[i])),
                            }
                        }
                        let map = CdgaMorphism::new(s.cdga.clone(), t.cdga.clone(), imgs).map_err(|e| ParseError { line, msg: e.to_string() })?;
                        doc.morphisms.push(Morphism {
                            name: name.clone(),
                            source: s.name.clone(),
                            target: t.name.clone(),
                            line: *start,
                            map,
                        });
                        block = Block::None;
                        continue;
                    }
                    let Some((lhs, rhs)) = text.split_once('=') else {
                        return err(line, "expected `GEN = POLY` or `end`");
                    };
                    let s = &doc.algebras[*src].cdga.ring;
                    let Some(i) = s.index(lhs.trim()) else {
                        return err(line, format!("unknown generator `{}`", lhs.trim()));
                    };
                    if images[i].is_some() {
                        return err(line, format!("image of `{}` given twice", lhs.trim()));
                    }
                    let t = &doc.algebras[*tgt].cdga.ring;
                    images[i] = Some(t.parse(rhs.trim()).map_err(|e| ParseError { line, msg: e.to_string() })?);
                    continue;
                }
                Block::None => {}
            }
            match words[0] {
                "algebra" => {
                    if words.len() != 2 {
                        return err(line, "expected `algebra NAME`");
                    }
                    let name = ident(line, words[1])?;
                    if let Some(prev) = doc.algebra(&name) {
                        return err(line, format!("algebra `{}` already defined on line {}", name, prev.line));
                    }
                    block = Block::Algebra {
                        name,
                        line,
                        gens: Vec::new(),
                        ring: None,
                        d: Vec::new(),
                    };
                }
                "morphism" => {
                    // morphism f : A -> B
                    let rest = text["morphism".len()..].trim();
                    let Some((name, sig)) = rest.split_once(':') else {
                        return err(line, "expected `morphism NAME : SRC -> TGT`");
                    };
                    let Some((a, b)) = sig.split_once("->") else {
                        return err(line, "expected `morphism NAME : SRC -> TGT`");
                    };
                    let src = doc.algebra_index(line, a.trim())?;
                    let tgt = doc.algebra_index(line, b.trim())?;
                    let n = doc.algebras[src].cdga.ngens();
                    block = Block::Morphism {
                        name: ident(line, name.trim())?,
                        line,
                        src,
                        tgt,
                        images: vec![None; n],
                    };
                }
                "structure" | "ideal" => {
                    // structure NAME on ALG = ...
                    let Some((head, body)) = text.split_once('=') else {
                        return err(line, format!("expected `{} NAME on ALGEBRA = ...`", words[0]));
                    };
                    let hw: Vec<&str> = head.split_whitespace().collect();
                    if hw.len() != 4 || hw[2] != "on" {
                        return err(line, format!("expected `{} NAME on ALGEBRA = ...`", words[0]));
                    }
                    let name = ident(line, hw[1])?;
                    let on = hw[3].to_string();
                    let alg = doc.algebra_index(line, &on)?;
                    if words[0] == "structure" {
                        doc.structures.push(Structure {
                            name,
                            on,
                            line,
                            text: normalize(body.trim()),
                        });
                    } else {
                        let ring = &doc.algebras[alg].cdga.ring;
                        let mut gens = Vec::new();
                        for g in body.split(',') {
                            gens.push(ring.parse(g.trim()).map_err(|e| ParseError { line, msg: e.to_string() })?);
                        }
                        doc.ideals.push(Ideal { name, on, line, gens });
                    }
                }
                "shift" => {
                    if words.len() != 2 {
                        return err(line, "expected `shift N`");
                    }
                    doc.shift = Some(parse_int(line, words[1])?);
                }
                "cap" => {
                    if words.len() != 3 || !["arity", "weight", "monomial"].contains(&words[1]) {
                        return err(line, "expected `cap arity|weight|monomial N`");
                    }
                    let v = parse_int(line, words[2])?;
                    if v < 0 {
                        return err(line, "caps are nonnegative");
                    }
                    doc.caps.insert(words[1].to_string(), v);
                }
                "graph-sign" => match words.get(1).copied() {
                    Some("+") => doc.graph_sign = Some(1),
                    Some("-") | Some("−") => doc.graph_sign = Some(-1),
                    _ => return err(line, "expected `graph-sign +` or `graph-sign -`"),
                },
                "task" => {
                    if words.len() != 2 {
                        return err(line, "expected `task COMMAND`");
                    }
                    doc.task = Some(words[1].to_string());
                }
                other => return err(line, format!("unknown declaration `{}`", other)),
            }
        }
        match block {
            Block::None => Ok(doc),
            Block::Algebra { line, .. } | Block::Morphism { line, .. } => err(last.max(line), format!("block opened on line {} is not closed by `end`", line)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_document() {
        let src = "# so(3)\nalgebra A\n  gen x 0\n  gen y 0\n  gen z 0\nend\nshift 0\nstructure pi on A = z*@x*@y + x*∂y*∂z + y*∂z*∂x\nideal I on A = x, y\ncap weight 4\ntask check-poisson\n";
        let doc = Document::parse(src).unwrap();
        assert_eq!(doc.algebras.len(), 1);
        assert_eq!(doc.shift, Some(0));
        assert_eq!(doc.caps["weight"], 4);
        assert_eq!(doc.ideals[0].gens.len(), 2);
        let (pol, p) = doc.structure_poly(&doc.structures[0], 0).unwrap();
        assert_eq!(pol.fmt(&p).matches('∂').count(), 6);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("algebra A\n gen x 0\n gen x 1\nend\n", 3, "duplicate"),
            ("algebra A\n gen x zero\nend\n", 2, "integer"),
            ("algebra A\n gen x 0\n", 2, "not closed"),
            ("shift\n", 1, "shift N"),
            ("algebra A\n gen x 0\nend\nstructure p on B = x\n", 4, "unknown algebra"),
            ("algebra A\n gen x 0\nend\nideal I on A = x +\n", 4, ""),
            ("algebra A\n gen x 0\nend\nalgebra B\n gen u 0\nend\nmorphism f : A -> B\nend\n", 8, "no image"),
            ("algebra A\n gen x 0\n gen e -1\n d x = e\nend\n", 5, "degree"),
            ("frobnicate\n", 1, "unknown declaration"),
        ];
        for (src, line, needle) in cases {
            let e = Document::parse(src).unwrap_err();
            assert_eq!(e.line, line, "{:?}: {}", src, e);
            assert!(e.msg.contains(needle), "{}", e);
        }
    }

    #[test]
    fn morphism_images_are_checked() {
        let src = "algebra A\n gen x 0\n gen y 0\nend\nalgebra B\n gen u 0\n gen v 0\nend\nmorphism f : A -> B\n x = u\n y = v\nend\n";
        let doc = Document::parse(src).unwrap();
        assert_eq!(doc.morphisms[0].map.images.len(), 2);
    }
}
