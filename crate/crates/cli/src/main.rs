//! `poisop`: batch verdicts and certification suites.
//!
//! Exit status: 0 when the verdict is true or the certification passes,
//! 1 when it is false or fails, 2 on usage or parse errors.

mod doc;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use poisop::brace::{brace_operad, check_brace_d_squared, check_chain_map, cw_generator_image, polyvector_ranks, center_ranks, underlying_image, TopIdentification};
use poisop::cdga::{koszul_resolve, Poly, PolyRing};
use poisop::cobar::{check_d_squared, cobar};
use poisop::gradedlin::{q, Lin};
use poisop::opcore::{builtin_cooperad, suspend};
use poisop::polyvec::{classical_coisotropic_ideal_check, generator_jacobiators, graph_correspondence_check, induced_mixed_structure, is_poisson, strict_kernel, CoisMode, IdealVerdict, Polyvectors};
use poisop::swisscheese::{sc_check_d_squared, swiss_cheese};

use doc::{Document, Structure};

#[derive(Parser, Debug)]
#[command(name = "poisop", version, about = "Exact verdicts for shifted Poisson and coisotropic structures and operadic certification suites")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Strict,
    Transferred,
}

#[derive(Args, Debug, Clone)]
struct Opts {
    /// Arity cap for operadic suites.
    #[arg(long, alias = "cap")]
    cap_arity: Option<usize>,
    /// Weight cap for polyvector computations.
    #[arg(long)]
    cap_weight: Option<u32>,
    /// Monomial length cap.
    #[arg(long)]
    cap_monomial: Option<u32>,
    /// Inclusive window `LO..HI`.
    #[arg(long, allow_hyphen_values = true)]
    degree_window: Option<String>,
    #[arg(long, value_enum, default_value = "strict")]
    mode: Mode,
    /// Also write the report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Strict Poisson verdict for a structure in Pol(A, n).
    CheckPoisson {
        file: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Coisotropic verdict for a structure and an ideal given by a regular sequence.
    CheckCoisotropic {
        file: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Bracket preservation versus coisotropy of the graph.
    CheckGraph {
        file: PathBuf,
        /// Use (π_A; +π_B) instead of (π_A; −π_B).
        #[arg(long)]
        flip: bool,
        #[command(flatten)]
        opts: Opts,
    },
    /// Schouten bracket of the first two structures.
    Schouten {
        file: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// d² = 0 on the cobar construction of a builtin cooperad.
    CobarCheck {
        /// coComm, coLie or coP.
        kind: String,
        n: i64,
        /// Operadic suspension applied to the cooperad.
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        suspend: i64,
        #[arg(long)]
        curved: bool,
        #[command(flatten)]
        opts: Opts,
    },
    /// d² = 0 on Br_C and the chain maps into it.
    BraceCheck {
        /// coComm or coP.
        kind: String,
        n: i64,
        #[arg(long)]
        curved: bool,
        #[command(flatten)]
        opts: Opts,
    },
    /// d² = 0 on the Swiss-cheese operad, by cross-term class.
    ScCheck {
        n: i64,
        #[arg(long)]
        curved: bool,
        #[command(flatten)]
        opts: Opts,
    },
    /// Center cohomology ranks of k[x] against strict polyvectors.
    CenterRanks {
        n: i64,
        #[command(flatten)]
        opts: Opts,
    },
    /// Mixed structures induced by coisotropic data.
    MixedStructure {
        file: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
}

struct Outcome {
    text: String,
    pass: bool,
}

type Res = Result<Outcome, String>;

fn read_doc(path: &PathBuf, task: &str) -> Result<Document, String> {
    let src = std::fs::read_to_string(path).map_err(|e| format!("{}: {}", path.display(), e))?;
    let doc = Document::parse(&src).map_err(|e| format!("{}: {}", path.display(), e))?;
    if let Some(t) = &doc.task {
        if t != task {
            return Err(format!("{}: document task is `{}`, not `{}`", path.display(), t, task));
        }
    }
    Ok(doc)
}

fn cap_u32(flag: Option<u32>, doc: Option<&Document>, key: &str, default: u32) -> u32 {
    flag.or_else(|| doc.and_then(|d| d.caps.get(key)).map(|&v| v as u32)).unwrap_or(default)
}

fn cap_arity(opts: &Opts, doc: Option<&Document>, default: usize) -> usize {
    opts.cap_arity.or_else(|| doc.and_then(|d| d.caps.get("arity")).map(|&v| v as usize)).unwrap_or(default)
}

fn window(opts: &Opts, default: (i64, i64)) -> Result<(i64, i64), String> {
    let Some(w) = &opts.degree_window else {
        return Ok(default);
    };
    let parse = || -> Option<(i64, i64)> {
        let (a, b) = w.split_once("..").or_else(|| w.split_once(':'))?;
        Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
    };
    match parse() {
        Some((a, b)) if a <= b => Ok((a, b)),
        _ => Err(format!("invalid --degree-window `{}` (expected LO..HI)", w)),
    }
}

fn terms(ring: &PolyRing, p: &Poly, out: &mut String) {
    for (m, c) in p.iter() {
        let _ = writeln!(out, "  {}", ring.fmt(&Lin::term(m.clone(), c.clone())));
    }
}

fn residual_block(label: &str, ring: &PolyRing, p: &Poly, out: &mut String) {
    if p.is_zero() {
        let _ = writeln!(out, "{}: 0", label);
    } else {
        let _ = writeln!(out, "{}:", label);
        terms(ring, p, out);
    }
}

fn structure_on<'a>(doc: &'a Document, alg: &str) -> Option<&'a Structure> {
    doc.structures.iter().find(|s| s.on == alg)
}

fn first_structure(doc: &Document) -> Result<&Structure, String> {
    doc.structures.first().ok_or_else(|| "document declares no structure".to_string())
}

fn check_poisson(file: &PathBuf, opts: &Opts) -> Res {
    let doc = read_doc(file, "check-poisson")?;
    let n = doc.shift.unwrap_or(0);
    let cap = cap_u32(opts.cap_weight, Some(&doc), "weight", 4);
    let s = first_structure(&doc)?;
    let (pol, pi) = doc.structure_poly(s, n).map_err(|e| e.to_string())?;
    let v = is_poisson(&pol, &pi, cap).map_err(|e| format!("line {}: {}", s.line, e))?;
    let mut out = String::new();
    let _ = writeln!(out, "{}", v);
    residual_block("residual", &pol.ring, &v.residual, &mut out);
    let full = pol.differential(&pi) + pol.schouten(&pi, &pi).scale(&(q(1) / q(2)));
    if pol.truncate(&full, cap) != full {
        let _ = writeln!(out, "warning: residual terms above weight cap {} were dropped", cap);
    }
    if pol.base.ring.degrees.iter().all(|&d| d == 0) && n == 0 {
        if let Ok(js) = generator_jacobiators(&pol, &pi) {
            for ((i, j, k), val) in js.into_iter().filter(|(_, v)| !v.is_zero()) {
                let r = &pol.base.ring;
                let _ = writeln!(out, "jacobiator ({}, {}, {}): {}", r.names[i], r.names[j], r.names[k], r.fmt(&val));
            }
        }
    }
    Ok(Outcome { text: out, pass: v.poisson })
}

fn coisotropic_setup(doc: &Document, opts: &Opts) -> Result<(i64, u32, u32, Poly, poisop::polyvec::RelativePolyvec, Vec<Poly>, Polyvectors), String> {
    let n = doc.shift.unwrap_or(0);
    let cap = cap_u32(opts.cap_weight, Some(doc), "weight", 4);
    let max_len = cap_u32(opts.cap_monomial, Some(doc), "monomial", 3);
    let ideal = doc.ideals.first().ok_or("document declares no ideal")?;
    let s = structure_on(doc, &ideal.on).ok_or_else(|| format!("no structure on `{}`", ideal.on))?;
    let (pol, pi) = doc.structure_poly(s, n).map_err(|e| e.to_string())?;
    let a = &doc.algebra(&ideal.on).expect("checked by the parser").cdga;
    let res = koszul_resolve(a, &ideal.gens, max_len).map_err(|e| format!("line {}: {}", ideal.line, e))?;
    let rel = strict_kernel(&res, n, max_len).map_err(|e| format!("line {}: {}", ideal.line, e))?;
    Ok((n, cap, max_len, pi, rel, ideal.gens.clone(), pol))
}

fn check_coisotropic(file: &PathBuf, opts: &Opts) -> Res {
    let doc = read_doc(file, "check-coisotropic")?;
    let (_, cap, max_len, pi, rel, gens, pol) = coisotropic_setup(&doc, opts)?;
    let mode = match opts.mode {
        Mode::Strict => CoisMode::Strict,
        Mode::Transferred => CoisMode::Transferred,
    };
    let r = rel.coisotropic_residual(&pi, None, mode, cap).map_err(|e| e.to_string())?;
    let mut out = String::new();
    let _ = writeln!(out, "COISOTROPIC: {}", if r.is_zero() { "yes" } else { "no" });
    let _ = writeln!(out, "ideal: {}", doc.ideals[0].name);
    let _ = writeln!(out, "mode: {}", if mode == CoisMode::Strict { "strict" } else { "transferred" });
    residual_block("absolute residual", &rel.absolute.ring, &r.absolute, &mut out);
    residual_block("relative residual", &rel.relative.ring, &r.relative, &mut out);
    if pol.base.ring.degrees.iter().all(|&d| d == 0) {
        match classical_coisotropic_ideal_check(&pol, &pi, &gens, max_len) {
            Ok(IdealVerdict::Coisotropic) => {
                let _ = writeln!(out, "classical ideal check: closed under the bracket");
            }
            Ok(IdealVerdict::NotCoisotropic { pair: (i, j), value }) => {
                let r = &pol.base.ring;
                let _ = writeln!(out, "classical ideal check: {{{}, {}}} = {} leaves the ideal", r.fmt(&gens[i]), r.fmt(&gens[j]), r.fmt(&value));
            }
            Ok(IdealVerdict::Indeterminate) => {
                let _ = writeln!(out, "warning: classical ideal check exceeds monomial cap {}", max_len);
            }
            Err(e) => {
                let _ = writeln!(out, "classical ideal check: unavailable ({})", e);
            }
        }
    }
    Ok(Outcome { text: out, pass: r.is_zero() })
}

fn check_graph(file: &PathBuf, flip: bool, opts: &Opts) -> Res {
    let doc = read_doc(file, "check-graph")?;
    let n = doc.shift.unwrap_or(0);
    let max_len = cap_u32(opts.cap_monomial, Some(&doc), "monomial", 3);
    let m = doc.morphisms.first().ok_or("document declares no morphism")?;
    let (src, tgt) = (&m.source, &m.target);
    let parse_on = |alg: &str| -> Result<Poly, String> {
        match structure_on(&doc, alg) {
            Some(s) => Ok(doc.structure_poly(s, n).map_err(|e| e.to_string())?.1),
            None => Err(format!("no structure on `{}`", alg)),
        }
    };
    let pa = parse_on(src)?;
    let pb = parse_on(tgt)?;
    let flip = flip || doc.graph_sign == Some(1);
    let v = graph_correspondence_check(&m.map, &pa, &pb, n, flip, max_len).map_err(|e| format!("line {}: {}", m.line, e))?;
    let yes = |b: bool| if b { "yes" } else { "no" };
    let mut out = String::new();
    let _ = writeln!(out, "morphism: {} : {} -> {}", m.name, src, tgt);
    let _ = writeln!(out, "sign: (π_A; {}π_B)", if flip { "+" } else { "−" });
    let _ = writeln!(out, "BRACKET PRESERVING: {}", yes(v.preserves));
    let _ = writeln!(out, "GRAPH COISOTROPIC: {}", yes(v.coisotropic));
    let _ = writeln!(out, "equivalence: {}", if v.preserves == v.coisotropic { "holds" } else { "broken" });
    if let Some((label, value)) = &v.witness {
        let ring = m.map.source.tensor(&m.map.target).ring;
        let _ = writeln!(out, "witness: {} ↦ {}", label, ring.fmt(value));
    }
    Ok(Outcome {
        text: out,
        pass: v.preserves && v.coisotropic,
    })
}

fn schouten(file: &PathBuf) -> Res {
    let doc = read_doc(file, "schouten")?;
    let n = doc.shift.unwrap_or(0);
    if doc.structures.len() < 2 {
        return Err("schouten needs two structures".into());
    }
    let (s1, s2) = (&doc.structures[0], &doc.structures[1]);
    if s1.on != s2.on {
        return Err(format!("line {}: carriers differ (`{}` and `{}`)", s2.line, s1.on, s2.on));
    }
    let (pol, p) = doc.structure_poly(s1, n).map_err(|e| e.to_string())?;
    let (_, r) = doc.structure_poly(s2, n).map_err(|e| e.to_string())?;
    let b = pol.schouten(&p, &r);
    let text = format!("[{}, {}] = {}\n", s1.name, s2.name, pol.fmt(&b));
    Ok(Outcome { text, pass: true })
}

fn cooperad_name(kind: &str, curved: bool) -> Result<&'static str, String> {
    Ok(match (kind, curved) {
        ("coComm", false) => "coComm",
        ("coLie", false) => "coLie",
        ("coLie", true) => "coLie_curved",
        ("coP" | "coP_n", false) => "coP_n",
        ("coP" | "coP_n", true) => "coP_n_curved",
        _ => return Err(format!("unknown cooperad `{}`{}", kind, if curved { " (curved)" } else { "" })),
    })
}

fn cobar_check(kind: &str, n: i64, k: i64, curved: bool, opts: &Opts) -> Res {
    let cap = cap_arity(opts, None, 4);
    let c = builtin_cooperad(cooperad_name(kind, curved)?, n, cap).map_err(|e| e.to_string())?;
    let op = cobar(&suspend(&c, k), cap).map_err(|e| e.to_string())?;
    let rep = check_d_squared(&op);
    Ok(Outcome {
        text: format!("{}\n", rep),
        pass: rep.passed(),
    })
}

fn brace_check(kind: &str, n: i64, curved: bool, opts: &Opts) -> Res {
    let cap = cap_arity(opts, None, 4);
    let c = builtin_cooperad(cooperad_name(kind, curved)?, n, cap).map_err(|e| e.to_string())?;
    let op = brace_operad(&c, cap);
    let rep = check_brace_d_squared(&op, cap);
    let mut pass = rep.passed();
    let mut out = format!("{}\n", rep);
    let src = cobar(&c, cap).map_err(|e| e.to_string())?;
    let u = check_chain_map(&op, &src, &|g| underlying_image(&op, g), "ΩC → Br_C");
    pass &= u.passed();
    let _ = writeln!(out, "{}", u);
    if c.name.starts_with("coP") && !curved {
        let top = TopIdentification::new(n, cap)?;
        let src2 = cobar(&suspend(&builtin_cooperad("coP_n", n + 1, cap).map_err(|e| e.to_string())?, 1), cap).map_err(|e| e.to_string())?;
        let cw = check_chain_map(&op, &src2, &|g| cw_generator_image(&op, &top, g), "Ω(coP_{n+1}{1}) → Br_C");
        pass &= cw.passed();
        let _ = writeln!(out, "{}", cw);
    }
    Ok(Outcome { text: out, pass })
}

fn sc_check(n: i64, curved: bool, opts: &Opts) -> Res {
    let max = cap_arity(opts, None, 3);
    let sc = swiss_cheese(n, curved, (max + 2).max(4))?;
    let rep = sc_check_d_squared(&sc, max);
    Ok(Outcome {
        text: format!("{}\n", rep),
        pass: rep.passed(),
    })
}

fn center_ranks_cmd(n: i64, opts: &Opts) -> Res {
    let (lo, hi) = window(opts, (-1, 2))?;
    let w = cap_u32(opts.cap_weight, None, "weight", 1) as usize;
    let max_input = cap_u32(opts.cap_monomial, None, "monomial", 4);
    let arity = cap_arity(opts, None, 4);
    let mut out = String::new();
    let mut pass = true;
    for s in lo..=hi {
        let c = center_ranks(n, s, max_input, arity, w)?;
        let p = polyvector_ranks(n, s, w);
        let ok = c == p;
        pass &= ok;
        let fmt = |m: &std::collections::BTreeMap<(usize, i64), usize>| m.iter().map(|((w, d), r)| format!("w{}d{}:{}", w, d, r)).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "shift {}: center [{}] polyvectors [{}] {}", s, fmt(&c), fmt(&p), if ok { "MATCH" } else { "MISMATCH" });
    }
    let _ = writeln!(out, "ranks: {}", if pass { "PASS" } else { "FAIL" });
    Ok(Outcome { text: out, pass })
}

fn mixed_structure(file: &PathBuf, opts: &Opts) -> Res {
    let doc = read_doc(file, "mixed-structure")?;
    let (_, cap, max_len, pi, rel, _, _) = coisotropic_setup(&doc, opts)?;
    let (lo, hi) = window(opts, (0, 2))?;
    let mix = match induced_mixed_structure(&rel, &pi, cap) {
        Ok(m) => m,
        Err(e) => {
            return Ok(Outcome {
                text: format!("MIXED: no\n{}\n", e),
                pass: false,
            })
        }
    };
    let mut fails: Vec<String> = Vec::new();
    let mut checked = 0usize;
    let abs = &rel.absolute;
    let mut basis = Vec::new();
    for d in lo..=hi {
        for w in 0..=cap.min(2) {
            basis.extend(abs.basis(d, w, max_len).into_iter().map(Lin::basis));
        }
    }
    for p in &basis {
        checked += 1;
        if !mix.eps_a(&mix.eps_a(p)).is_zero() {
            fails.push(format!("ε_A² on {}", abs.fmt(p)));
        }
        let y = rel.reduce(&rel.restrict(p));
        match mix.eps_b(&y).and_then(|e| mix.eps_b(&e)) {
            Some(e2) if e2.is_zero() => {}
            Some(_) => fails.push(format!("ε_B² on {}", rel.relative.fmt(&y))),
            None => fails.push(format!("ε_B undefined on {}", rel.relative.fmt(&y))),
        }
        match mix.intertwining_defect(p) {
            Some(d) if d.is_zero() => {}
            _ => fails.push(format!("intertwining on {}", abs.fmt(p))),
        }
    }
    for p in basis.iter().take(12) {
        for r in basis.iter().take(12) {
            let lhs = mix.eps_a(&abs.ring.mul(p, r));
            let mut rhs = abs.ring.mul(&mix.eps_a(p), r);
            let deg = abs.ring.degree(p).unwrap_or(0);
            let e = abs.ring.mul(p, &mix.eps_a(r));
            rhs.add_scaled(&e, &poisop::gradedlin::sign_scalar(deg.rem_euclid(2) == 1));
            if abs.truncate(&(lhs - rhs), cap) != Lin::zero() {
                fails.push(format!("derivation on ({}, {})", abs.fmt(p), abs.fmt(r)));
            }
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "MIXED: {}", if fails.is_empty() { "yes" } else { "no" });
    let _ = writeln!(out, "checked {} basis elements (degrees {}..{}, weight cap {})", checked, lo, hi, cap);
    for f in &fails {
        let _ = writeln!(out, "  failing: {}", f);
    }
    Ok(Outcome {
        text: out,
        pass: fails.is_empty(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let (res, opts) = match &cli.cmd {
        Cmd::CheckPoisson { file, opts } => (check_poisson(file, opts), opts),
        Cmd::CheckCoisotropic { file, opts } => (check_coisotropic(file, opts), opts),
        Cmd::CheckGraph { file, flip, opts } => (check_graph(file, *flip, opts), opts),
        Cmd::Schouten { file, opts } => (schouten(file), opts),
        Cmd::CobarCheck { kind, n, suspend, curved, opts } => (cobar_check(kind, *n, *suspend, *curved, opts), opts),
        Cmd::BraceCheck { kind, n, curved, opts } => (brace_check(kind, *n, *curved, opts), opts),
        Cmd::ScCheck { n, curved, opts } => (sc_check(*n, *curved, opts), opts),
        Cmd::CenterRanks { n, opts } => (center_ranks_cmd(*n, opts), opts),
        Cmd::MixedStructure { file, opts } => (mixed_structure(file, opts), opts),
    };
    match res {
        Ok(o) => {
            print!("{}", o.text);
            eprintln!("time: {} ms", start.elapsed().as_millis());
            if let Some(path) = &opts.report {
                if let Err(e) = std::fs::write(path, &o.text) {
                    eprintln!("error: {}: {}", path.display(), e);
                    return ExitCode::from(2);
                }
            }
            ExitCode::from(if o.pass { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(2)
        }
    }
}
