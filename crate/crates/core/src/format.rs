//! Text formats for lattices, chains, cocycles, descriptors and cones.
//!
//! Blank lines and lines starting with `#` are ignored everywhere.

use crate::classify::SupergroupDescriptor;
use crate::lattice::{IntegerLattice, RationalLattice};
use crate::matrix::{self, IVec, QVec};
use crate::odometer::{ChainProvider, ExponentRule, OdometerChain};
use crate::speedup::{Cone, Facet, PiecewiseCocycle};
use num_bigint::BigInt;
use num_rational::BigRational;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("a derived chain can only be written with a reference to its cocycle")]
    MissingReference,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> FormatError {
    FormatError::Syntax { line, column, message: message.into() }
}

/// A token with its 1-based line and column.
#[derive(Debug, Clone, Copy)]
struct Tok<'a> {
    line: usize,
    column: usize,
    text: &'a str,
}

impl<'a> Tok<'a> {
    fn err(&self, message: impl Into<String>) -> FormatError {
        syntax(self.line, self.column, message)
    }

    /// Sub-token starting `offset` bytes in.
    fn slice(&self, offset: usize, text: &'a str) -> Tok<'a> {
        Tok { line: self.line, column: self.column + self.text[..offset].chars().count(), text }
    }

    fn split(&self, sep: char) -> Vec<Tok<'a>> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, c) in self.text.char_indices() {
            if c == sep {
                out.push(self.slice(start, &self.text[start..i]));
                start = i + c.len_utf8();
            }
        }
        out.push(self.slice(start, &self.text[start..]));
        out
    }

    fn split_once(&self, sep: &str) -> Option<(Tok<'a>, Tok<'a>)> {
        let i = self.text.find(sep)?;
        Some((self.slice(0, &self.text[..i]), self.slice(i + sep.len(), &self.text[i + sep.len()..])))
    }

    fn trim(&self) -> Tok<'a> {
        let lead = self.text.len() - self.text.trim_start().len();
        self.slice(lead, self.text.trim())
    }

    fn int(&self) -> Result<BigInt, FormatError> {
        self.text.trim().parse().map_err(|_| self.err(format!("expected an integer, found `{}`", self.text)))
    }

    fn small(&self) -> Result<usize, FormatError> {
        self.text.trim().parse().map_err(|_| self.err(format!("expected a nonnegative integer, found `{}`", self.text)))
    }

    fn rational(&self) -> Result<BigRational, FormatError> {
        let t = self.text.trim();
        let bad = || self.err(format!("expected a rational, found `{t}`"));
        match t.split_once('/') {
            Some((p, q)) => {
                let q: BigInt = q.parse().map_err(|_| bad())?;
                if q == BigInt::from(0) {
                    return Err(self.err("zero denominator"));
                }
                Ok(BigRational::new(p.parse().map_err(|_| bad())?, q))
            }
            None => Ok(BigRational::from_integer(t.parse().map_err(|_| bad())?)),
        }
    }
}

/// Meaningful lines with their 1-based numbers.
fn lines(text: &str) -> Vec<Tok<'_>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| Tok { line: i + 1, column: 1, text: l })
        .filter(|t| !t.text.trim().is_empty() && !t.text.trim_start().starts_with('#'))
        .collect()
}

fn words<'a>(line: &Tok<'a>) -> Vec<Tok<'a>> {
    line.split(' ').into_iter().filter(|t| !t.text.is_empty()).collect()
}

/// `key=value` fields of a header line.
fn header<'a>(line: &Tok<'a>) -> Result<BTreeMap<&'a str, Tok<'a>>, FormatError> {
    let mut out = BTreeMap::new();
    for w in words(line) {
        let (k, v) = w.split_once("=").ok_or_else(|| w.err(format!("expected key=value, found `{}`", w.text)))?;
        if out.insert(k.text, v).is_some() {
            return Err(k.err(format!("duplicate key `{}`", k.text)));
        }
    }
    Ok(out)
}

fn required<'a>(map: &BTreeMap<&str, Tok<'a>>, key: &str, line: &Tok<'_>) -> Result<Tok<'a>, FormatError> {
    map.get(key).copied().ok_or_else(|| syntax(line.line, line.column, format!("missing `{key}=`")))
}

fn only_line<'a>(text: &'a str, what: &str) -> Result<Tok<'a>, FormatError> {
    let ls = lines(text);
    match ls.as_slice() {
        [one] => Ok(*one),
        [] => Err(syntax(1, 1, format!("empty {what}"))),
        [_, second, ..] => Err(second.err(format!("unexpected second line in {what}"))),
    }
}

fn lattice_at(tok: &Tok<'_>) -> Result<IntegerLattice, FormatError> {
    let parts = tok.split(';');
    let d = parts[0].trim().small()?;
    if d == 0 {
        return Err(parts[0].err("dimension must be positive"));
    }
    if parts.len() != d + 1 {
        return Err(tok.err(format!("expected {d} rows, found {}", parts.len() - 1)));
    }
    let mut rows = Vec::with_capacity(d);
    for p in &parts[1..] {
        let entries = words(p).iter().map(Tok::int).collect::<Result<IVec, _>>()?;
        if entries.len() != d {
            return Err(p.trim().err(format!("expected {d} entries, found {}", entries.len())));
        }
        rows.push(entries);
    }
    IntegerLattice::hnf(&rows).map_err(|e| tok.err(e.to_string()))
}

/// `d; r11 r12 …; r21 …`, rows of a basis matrix whose columns generate.
pub fn parse_lattice(text: &str) -> Result<IntegerLattice, FormatError> {
    lattice_at(&only_line(text, "lattice")?.trim())
}

pub fn emit_lattice(l: &IntegerLattice) -> String {
    l.to_string()
}

/// An integer lattice literal, optionally prefixed by `1/s;`.
pub fn parse_rational_lattice(text: &str) -> Result<RationalLattice, FormatError> {
    let tok = only_line(text, "lattice")?.trim();
    if tok.text.starts_with("1/") {
        let (head, rest) = tok.split_once(";").ok_or_else(|| tok.err("expected `1/s;` before the lattice"))?;
        let s = head.slice(2, &head.text[2..]).trim().int()?;
        if s <= BigInt::from(0) {
            return Err(head.err("denominator must be positive"));
        }
        return Ok(RationalLattice::new(s, lattice_at(&rest.trim())?));
    }
    Ok(RationalLattice::from_integer(&lattice_at(&tok)?))
}

pub fn emit_rational_lattice(l: &RationalLattice) -> String {
    l.to_string()
}

fn exponent(tok: &Tok<'_>) -> Result<ExponentRule, FormatError> {
    let t = tok.text.trim();
    let bad = || tok.err(format!("expected an exponent like `j`, `2j+1` or `3`, found `{t}`"));
    let (lin, off) = match t.split_once('+') {
        Some((a, b)) => (a, b.parse::<u32>().map_err(|_| bad())?),
        None if t.contains('j') => (t, 0),
        None => return Ok(ExponentRule { slope: 0, offset: t.parse().map_err(|_| bad())? }),
    };
    let slope = match lin.strip_suffix('j') {
        Some("") => 1,
        Some(a) => a.parse().map_err(|_| bad())?,
        None => return Err(bad()),
    };
    Ok(ExponentRule { slope, offset: off })
}

/// A chain read from text. Derived chains remember the cocycle reference so
/// they can be written back.
#[derive(Debug, Clone)]
pub struct ChainSpec {
    pub chain: Arc<OdometerChain>,
    pub cocycle_ref: Option<String>,
}

/// `dim=2 provider=diagpow primes=3,2 exps=j,j`, or `provider=explicit`
/// followed by one lattice literal per line, or `provider=derived
/// cocycle=<ref>` with the reference resolved by the caller.
pub fn parse_chain(
    text: &str,
    resolve_cocycle: &mut dyn FnMut(&str) -> Result<Arc<PiecewiseCocycle>, String>,
) -> Result<ChainSpec, FormatError> {
    let ls = lines(text);
    let first = ls.first().ok_or_else(|| syntax(1, 1, "empty chain"))?;
    let map = header(first)?;
    let dim_tok = required(&map, "dim", first)?;
    let dim = dim_tok.small()?;
    let provider = required(&map, "provider", first)?;
    let rest = &ls[1..];
    let extra = |allowed: &[&str]| -> Result<(), FormatError> {
        match map.iter().find(|(k, _)| !allowed.contains(k)) {
            Some((k, v)) => Err(syntax(v.line, v.column.saturating_sub(k.chars().count() + 1), format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    };
    let (chain, cocycle_ref) = match provider.text {
        "diagpow" => {
            extra(&["dim", "provider", "primes", "exps"])?;
            if let Some(l) = rest.first() {
                return Err(l.err("diagpow chains take no further lines"));
            }
            let primes_tok = required(&map, "primes", first)?;
            let exps_tok = required(&map, "exps", first)?;
            let bases = primes_tok.split(',').iter().map(Tok::int).collect::<Result<Vec<_>, _>>()?;
            let exps = exps_tok.split(',').iter().map(exponent).collect::<Result<Vec<_>, _>>()?;
            if bases.len() != dim {
                return Err(primes_tok.err(format!("expected {dim} bases, found {}", bases.len())));
            }
            if exps.len() != dim {
                return Err(exps_tok.err(format!("expected {dim} exponents, found {}", exps.len())));
            }
            let chain = OdometerChain::new(ChainProvider::DiagonalPower { bases, exponents: exps }).map_err(|e| primes_tok.err(e.to_string()))?;
            (chain, None)
        }
        "explicit" => {
            extra(&["dim", "provider"])?;
            let mut stages = Vec::new();
            for l in rest {
                let lat = lattice_at(&l.trim())?;
                if lat.dim() != dim {
                    return Err(l.err(format!("expected dimension {dim}, found {}", lat.dim())));
                }
                stages.push(lat);
            }
            let chain = OdometerChain::explicit(stages).map_err(|e| first.err(e.to_string()))?;
            // nesting is checked as the stages are realized
            for (j, l) in rest.iter().enumerate() {
                chain.stage(j + 1).map_err(|e| l.err(e.to_string()))?;
            }
            (chain, None)
        }
        "derived" => {
            extra(&["dim", "provider", "cocycle"])?;
            if let Some(l) = rest.first() {
                return Err(l.err("derived chains take no further lines"));
            }
            let r = required(&map, "cocycle", first)?;
            let c = resolve_cocycle(r.text).map_err(|m| r.err(m))?;
            if c.target_rank() != dim {
                return Err(dim_tok.err(format!("cocycle has rank {}, not {dim}", c.target_rank())));
            }
            (OdometerChain::derived(c), Some(r.text.to_string()))
        }
        other => return Err(provider.err(format!("unknown provider `{other}`"))),
    };
    if chain.dim() != dim {
        return Err(dim_tok.err(format!("chain has dimension {}, not {dim}", chain.dim())));
    }
    Ok(ChainSpec { chain: Arc::new(chain), cocycle_ref })
}

pub fn emit_chain(chain: &OdometerChain, cocycle_ref: Option<&str>) -> Result<String, FormatError> {
    let d = chain.dim();
    Ok(match chain.provider() {
        ChainProvider::DiagonalPower { bases, exponents } => {
            let b: Vec<String> = bases.iter().map(ToString::to_string).collect();
            let e: Vec<String> = exponents.iter().map(ToString::to_string).collect();
            format!("dim={d} provider=diagpow primes={} exps={}\n", b.join(","), e.join(","))
        }
        ChainProvider::Explicit(stages) => {
            let mut s = format!("dim={d} provider=explicit\n");
            for l in stages {
                s.push_str(&emit_lattice(l));
                s.push('\n');
            }
            s
        }
        ChainProvider::Derived(_) => {
            let r = cocycle_ref.ok_or(FormatError::MissingReference)?;
            format!("dim={d} provider=derived cocycle={r}\n")
        }
    })
}

fn int_vector(tok: &Tok<'_>) -> Result<IVec, FormatError> {
    let t = tok.trim();
    let inner = t
        .text
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| t.err(format!("expected a vector like (a,b), found `{}`", t.text)))?;
    t.slice(1, inner).split(',').iter().map(Tok::int).collect()
}

/// A cocycle read from text together with its chain reference.
#[derive(Debug, Clone)]
pub struct CocycleSpec {
    pub chain_ref: String,
    pub cocycle: Arc<PiecewiseCocycle>,
}

/// Header `chain=<ref> J=<int> d2=<int>`, then for each generator a line
/// `gen i:` followed by lines `rep (a,b) -> (u,v)`, one per coset.
pub fn parse_cocycle(
    text: &str,
    resolve_chain: &mut dyn FnMut(&str) -> Result<Arc<OdometerChain>, String>,
) -> Result<CocycleSpec, FormatError> {
    let ls = lines(text);
    let first = ls.first().ok_or_else(|| syntax(1, 1, "empty cocycle"))?;
    let map = header(first)?;
    let chain_tok = required(&map, "chain", first)?;
    let depth_tok = required(&map, "J", first)?;
    let rank_tok = required(&map, "d2", first)?;
    let depth = depth_tok.small()?;
    let rank = rank_tok.small()?;
    if depth == 0 {
        return Err(depth_tok.err("J must be at least 1"));
    }
    let source = resolve_chain(chain_tok.text).map_err(|m| chain_tok.err(m))?;
    let cosets = source.cosets(depth).map_err(|e| depth_tok.err(e.to_string()))?;
    let n = cosets.len().ok_or_else(|| depth_tok.err("resolution quotient too large"))?;
    let mut tables: Vec<Vec<Option<IVec>>> = Vec::new();
    for l in &ls[1..] {
        let t = l.trim();
        if let Some(g) = t.text.strip_prefix("gen") {
            let num = t.slice(3, g).trim();
            let num = num.text.strip_suffix(':').map(|s| num.slice(0, s)).ok_or_else(|| t.err("expected `gen i:`"))?;
            let i = num.small()?;
            if i != tables.len() + 1 {
                return Err(num.err(format!("expected generator {}, found {i}", tables.len() + 1)));
            }
            tables.push(vec![None; n]);
            continue;
        }
        let table = tables.last_mut().ok_or_else(|| t.err("value line before the first `gen i:`"))?;
        let body = t.text.strip_prefix("rep").map(|s| t.slice(3, s)).ok_or_else(|| t.err("expected `rep (…) -> (…)`"))?;
        let (lhs, rhs) = body.split_once("->").ok_or_else(|| body.err("expected `->`"))?;
        let rep = int_vector(&lhs)?;
        let val = int_vector(&rhs)?;
        if rep.len() != source.dim() {
            return Err(lhs.trim().err(format!("representative must have {} coordinates", source.dim())));
        }
        if val.len() != source.dim() {
            return Err(rhs.trim().err(format!("value must have {} coordinates", source.dim())));
        }
        let a = cosets.rank_of(&rep);
        if table[a].replace(val).is_some() {
            return Err(lhs.trim().err(format!("coset {} listed twice", matrix::fmt_ivec(&cosets.unrank(a)))));
        }
    }
    let last = ls.last().map_or(1, |l| l.line);
    if tables.len() != rank {
        return Err(syntax(last, 1, format!("expected {rank} generators, found {}", tables.len())));
    }
    let mut full = Vec::with_capacity(rank);
    for (i, t) in tables.into_iter().enumerate() {
        let missing = t.iter().position(Option::is_none);
        if let Some(a) = missing {
            return Err(syntax(last, 1, format!("generator {} misses coset {}", i + 1, matrix::fmt_ivec(&cosets.unrank(a)))));
        }
        full.push(t.into_iter().map(|v| v.expect("checked")).collect());
    }
    let cocycle = PiecewiseCocycle::new(source, depth, rank, full).map_err(|e| first.err(e.to_string()))?;
    Ok(CocycleSpec { chain_ref: chain_tok.text.to_string(), cocycle: Arc::new(cocycle) })
}

pub fn emit_cocycle(chain_ref: &str, c: &PiecewiseCocycle) -> String {
    let mut s = format!("chain={chain_ref} J={} d2={}\n", c.depth(), c.target_rank());
    for (i, table) in c.tables().iter().enumerate() {
        s.push_str(&format!("gen {}:\n", i + 1));
        for (a, v) in table.iter().enumerate() {
            s.push_str(&format!("rep {} -> {}\n", matrix::fmt_ivec(&c.cosets().unrank(a)), matrix::fmt_ivec(v)));
        }
    }
    s
}

/// `dim=2 shear=1,0,-1/2,1 supports=3|2`, with `-` for an empty support.
pub fn parse_descriptor(text: &str) -> Result<SupergroupDescriptor, FormatError> {
    let line = only_line(text, "descriptor")?;
    let map = header(&line)?;
    let dim_tok = required(&map, "dim", &line)?;
    let d = dim_tok.small()?;
    let shear_tok = required(&map, "shear", &line)?;
    let sup_tok = required(&map, "supports", &line)?;
    if let Some((k, v)) = map.iter().find(|(k, _)| !["dim", "shear", "supports"].contains(k)) {
        return Err(v.err(format!("unknown key `{k}`")));
    }
    let entries = shear_tok.split(',').iter().map(Tok::rational).collect::<Result<QVec, _>>()?;
    if entries.len() != d * d {
        return Err(shear_tok.err(format!("expected {} entries, found {}", d * d, entries.len())));
    }
    let shear = entries.chunks(d).map(<[_]>::to_vec).collect();
    let groups = sup_tok.split('|');
    if groups.len() != d {
        return Err(sup_tok.err(format!("expected {d} supports, found {}", groups.len())));
    }
    let mut supports = Vec::with_capacity(d);
    for g in &groups {
        let set: BTreeSet<BigInt> =
            if g.text == "-" { BTreeSet::new() } else { g.split(',').iter().map(Tok::int).collect::<Result<_, _>>()? };
        supports.push(set);
    }
    SupergroupDescriptor::new(shear, supports).map_err(|e| line.err(e.to_string()))
}

pub fn emit_descriptor(h: &SupergroupDescriptor) -> String {
    h.to_string()
}

/// `quadrant`, `open-quadrant`, `ray`, `sector=a,b..c,d [incl=1,1]` or
/// `facets=n1;n2 strict=0,0` with rational normals.
pub fn parse_cone(text: &str) -> Result<Cone, FormatError> {
    let line = only_line(text, "cone")?.trim();
    match line.text {
        "quadrant" => return Ok(Cone::quadrant(true)),
        "open-quadrant" => return Ok(Cone::quadrant(false)),
        "ray" => return Ok(Cone::positive_ray()),
        _ => {}
    }
    let map = header(&line)?;
    let flags = |tok: Option<&Tok<'_>>, n: usize, default: bool| -> Result<Vec<bool>, FormatError> {
        let Some(t) = tok else { return Ok(vec![default; n]) };
        let fs = t
            .split(',')
            .iter()
            .map(|f| match f.text {
                "1" => Ok(true),
                "0" => Ok(false),
                other => Err(f.err(format!("expected 0 or 1, found `{other}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if fs.len() != n {
            return Err(t.err(format!("expected {n} flags")));
        }
        Ok(fs)
    };
    if let Some(sec) = map.get("sector") {
        let (a, b) = sec.split_once("..").ok_or_else(|| sec.err("expected `a,b..c,d`"))?;
        let start = a.split(',').iter().map(Tok::int).collect::<Result<IVec, _>>()?;
        let end = b.split(',').iter().map(Tok::int).collect::<Result<IVec, _>>()?;
        let incl = flags(map.get("incl"), 2, true)?;
        return Cone::sector(&start, &end, incl[0], incl[1]).map_err(|e| sec.err(e.to_string()));
    }
    if let Some(fac) = map.get("facets") {
        let normals = fac
            .split(';')
            .iter()
            .map(|n| n.split(',').iter().map(Tok::rational).collect::<Result<QVec, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let strict = flags(map.get("strict"), normals.len(), false)?;
        let dim = normals.first().map_or(0, Vec::len);
        let facets = normals.into_iter().zip(strict).map(|(normal, strict)| Facet { normal, strict }).collect();
        return Cone::from_facets(dim, facets).map_err(|e| fac.err(e.to_string()));
    }
    Err(line.err("expected `quadrant`, `open-quadrant`, `ray`, `sector=…` or `facets=…`"))
}

pub fn emit_cone(c: &Cone) -> String {
    c.to_string()
}

/// `(a,b)` or `a,b` as an integer vector.
pub fn parse_ivec(text: &str) -> Result<IVec, FormatError> {
    let t = only_line(text, "vector")?.trim();
    if t.text.starts_with('(') {
        return int_vector(&t);
    }
    t.split(',').iter().map(Tok::int).collect()
}

/// `(p/q,r/s)` or `p/q,r/s` as a rational vector.
pub fn parse_qvec(text: &str) -> Result<QVec, FormatError> {
    let t = only_line(text, "vector")?.trim();
    let inner = match t.text.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
        Some(s) => t.slice(1, s),
        None => t,
    };
    inner.split(',').iter().map(Tok::rational).collect()
}
