//! Text format for mechanisms.
//!
//! ```text
//! [elements]      NAME atomic_mass(kg/mol)
//! [species]       NAME EL:count ... [mw=kg/mol]
//! [thermo]        NAME Tlow Tmid Thigh, then 7 low-range and 7 high-range coefficients
//! [reactions]     LHS <=> RHS  A  b  Ea(kJ/mol)    (a `M` term marks a third body)
//!                 alpha NAME=VALUE ...               (efficiencies for the reaction above)
//! [state]         T kelvin | p pascal | anchor NAME=VALUE ...
//! ```
//! `#` starts a comment. Numbers in `[thermo]` may wrap across lines.

use std::path::Path;

use super::{Mechanism, Nasa7, Reaction, StateVector};
use crate::error::{Error, Result};

/// Line, name, composition and optional molar mass.
type PendingSpecies = (usize, String, Vec<(String, u32)>, Option<f64>);

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Elements,
    Species,
    Thermo,
    Reactions,
    State,
}

struct PendingReaction {
    line: usize,
    equation: String,
    lhs: Vec<(String, u32)>,
    rhs: Vec<(String, u32)>,
    third_body: bool,
    a: f64,
    b: f64,
    ea: f64,
    alpha: Vec<(String, f64)>,
}

struct PendingThermo {
    line: usize,
    name: String,
    numbers: Vec<f64>,
}

pub(super) fn parse(text: &str, path: &Path) -> Result<Mechanism> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let num = |line: usize, tok: &str| -> Result<f64> {
        tok.parse::<f64>()
            .map_err(|_| err(line, format!("expected a number, found `{tok}`")))
    };

    let mut section = Section::None;
    let mut elements: Vec<(String, f64)> = Vec::new();
    let mut species: Vec<PendingSpecies> = Vec::new();
    let mut thermo: Vec<PendingThermo> = Vec::new();
    let mut reactions: Vec<PendingReaction> = Vec::new();
    let mut temperature = None;
    let mut pressure = None;
    let mut anchor: Option<(usize, Vec<(String, f64)>)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = match line {
                "[elements]" => Section::Elements,
                "[species]" => Section::Species,
                "[thermo]" => Section::Thermo,
                "[reactions]" => Section::Reactions,
                "[state]" => Section::State,
                other => return Err(err(line_no, format!("unknown section {other}"))),
            };
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match section {
            Section::None => return Err(err(line_no, "content outside of a section".into())),
            Section::Elements => {
                if toks.len() != 2 {
                    return Err(err(line_no, "expected `NAME atomic_mass`".into()));
                }
                elements.push((toks[0].to_string(), num(line_no, toks[1])?));
            }
            Section::Species => {
                let mut comp = Vec::new();
                let mut mw = None;
                for tok in &toks[1..] {
                    if let Some(v) = tok.strip_prefix("mw=") {
                        mw = Some(num(line_no, v)?);
                    } else if let Some((el, cnt)) = tok.split_once(':') {
                        let cnt = cnt
                            .parse::<u32>()
                            .map_err(|_| err(line_no, format!("bad atom count in `{tok}`")))?;
                        comp.push((el.to_string(), cnt));
                    } else {
                        return Err(err(line_no, format!("unexpected token `{tok}`")));
                    }
                }
                species.push((line_no, toks[0].to_string(), comp, mw));
            }
            Section::Thermo => {
                let first = toks[0];
                if first.parse::<f64>().is_err() {
                    thermo.push(PendingThermo {
                        line: line_no,
                        name: first.to_string(),
                        numbers: Vec::new(),
                    });
                    for t in &toks[1..] {
                        thermo.last_mut().unwrap().numbers.push(num(line_no, t)?);
                    }
                } else {
                    let cur = thermo
                        .last_mut()
                        .ok_or_else(|| err(line_no, "coefficients before a species name".into()))?;
                    for t in &toks {
                        cur.numbers.push(num(line_no, t)?);
                    }
                }
            }
            Section::Reactions => {
                if toks[0] == "alpha" {
                    let rx = reactions
                        .last_mut()
                        .ok_or_else(|| err(line_no, "`alpha` before any reaction".into()))?;
                    if !rx.third_body {
                        return Err(err(line_no, "`alpha` given for a reaction without M".into()));
                    }
                    for tok in &toks[1..] {
                        let (name, v) = tok
                            .split_once('=')
                            .ok_or_else(|| err(line_no, format!("expected NAME=VALUE, found `{tok}`")))?;
                        rx.alpha.push((name.to_string(), num(line_no, v)?));
                    }
                    continue;
                }
                reactions.push(parse_reaction(line, line_no, &err)?);
            }
            Section::State => match toks[0] {
                "T" if toks.len() == 2 => temperature = Some(num(line_no, toks[1])?),
                "p" if toks.len() == 2 => pressure = Some(num(line_no, toks[1])?),
                "anchor" => {
                    let mut pairs = Vec::new();
                    for tok in &toks[1..] {
                        let (name, v) = tok
                            .split_once('=')
                            .ok_or_else(|| err(line_no, format!("expected NAME=VALUE, found `{tok}`")))?;
                        pairs.push((name.to_string(), num(line_no, v)?));
                    }
                    anchor = Some((line_no, pairs));
                }
                other => return Err(err(line_no, format!("unknown state entry `{other}`"))),
            },
        }
    }

    // elements
    let element_names: Vec<String> = elements.iter().map(|e| e.0.clone()).collect();
    let atomic_masses: Vec<f64> = elements.iter().map(|e| e.1).collect();

    // species
    let species_names: Vec<String> = species.iter().map(|s| s.1.clone()).collect();
    let n = species_names.len();
    let mut element_matrix = vec![vec![0u32; n]; element_names.len()];
    for (k, (line, name, comp, _)) in species.iter().enumerate() {
        for (el, cnt) in comp {
            let e = element_names
                .iter()
                .position(|x| x == el)
                .ok_or_else(|| err(*line, format!("species `{name}` uses unknown element `{el}`")))?;
            element_matrix[e][k] += cnt;
        }
    }
    let molar_masses = if species.iter().all(|s| s.3.is_some()) {
        Some(species.iter().map(|s| s.3.unwrap()).collect())
    } else if species.iter().any(|s| s.3.is_some()) {
        // mixed: compose the missing ones
        let composed: Vec<f64> = (0..n)
            .map(|k| {
                species[k].3.unwrap_or_else(|| {
                    element_matrix
                        .iter()
                        .zip(&atomic_masses)
                        .map(|(row, am)| row[k] as f64 * am)
                        .sum()
                })
            })
            .collect();
        Some(composed)
    } else {
        None
    };

    let index_of = |line: usize, name: &str| -> Result<usize> {
        species_names
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| err(line, format!("unknown species `{name}`")))
    };

    // thermo
    let mut nasa: Vec<Option<Nasa7>> = vec![None; n];
    for t in thermo {
        let k = index_of(t.line, &t.name)?;
        if t.numbers.len() != 17 {
            return Err(err(
                t.line,
                format!(
                    "thermo for `{}` needs 3 temperatures and 14 coefficients, found {} numbers",
                    t.name,
                    t.numbers.len()
                ),
            ));
        }
        let v = &t.numbers;
        let mut low = [0.0; 7];
        let mut high = [0.0; 7];
        low.copy_from_slice(&v[3..10]);
        high.copy_from_slice(&v[10..17]);
        nasa[k] = Some(Nasa7 {
            t_low: v[0],
            t_mid: v[1],
            t_high: v[2],
            low,
            high,
        });
    }

    // reactions
    let mut rxs = Vec::with_capacity(reactions.len());
    for p in reactions {
        let side = |terms: &[(String, u32)]| -> Result<Vec<(usize, u32)>> {
            let mut out: Vec<(usize, u32)> = Vec::new();
            for (name, cnt) in terms {
                let k = index_of(p.line, name)?;
                match out.iter_mut().find(|(j, _)| *j == k) {
                    Some(e) => e.1 += cnt,
                    None => out.push((k, *cnt)),
                }
            }
            Ok(out)
        };
        let third_body = if p.third_body {
            let mut eff = vec![1.0; n];
            for (name, v) in &p.alpha {
                eff[index_of(p.line, name)?] = *v;
            }
            Some(eff)
        } else {
            None
        };
        rxs.push(Reaction {
            equation: p.equation,
            reactants: side(&p.lhs)?,
            products: side(&p.rhs)?,
            a: p.a,
            b: p.b,
            ea: p.ea,
            third_body,
        });
    }

    let anchor = match anchor {
        Some((line, pairs)) => {
            let mut z = StateVector::zeros(n);
            for (name, v) in pairs {
                z[index_of(line, &name)?] = v;
            }
            Some(z)
        }
        None => None,
    };

    let temperature = temperature.ok_or_else(|| err(0, "missing `T` in [state]".into()))?;
    let pressure = pressure.ok_or_else(|| err(0, "missing `p` in [state]".into()))?;

    Mechanism::new(
        element_names,
        atomic_masses,
        species_names,
        element_matrix,
        molar_masses,
        rxs,
        nasa,
        temperature,
        pressure,
        anchor,
    )
}

fn parse_reaction(
    line: &str,
    line_no: usize,
    err: &dyn Fn(usize, String) -> Error,
) -> Result<PendingReaction> {
    let (lhs, rest) = line
        .split_once("<=>")
        .ok_or_else(|| err(line_no, "reaction must contain `<=>`".into()))?;
    let toks: Vec<&str> = rest.split_whitespace().collect();
    if toks.len() < 3 {
        return Err(err(line_no, "expected `LHS <=> RHS A b Ea`".into()));
    }
    let (rhs_toks, params) = toks.split_at(toks.len() - 3);
    let rhs = rhs_toks.join(" ");
    let parse_num = |t: &str| -> Result<f64> {
        t.parse::<f64>()
            .map_err(|_| err(line_no, format!("expected a number, found `{t}`")))
    };
    let (l_terms, l_m) = parse_side(lhs, line_no, err)?;
    let (r_terms, r_m) = parse_side(&rhs, line_no, err)?;
    if l_m != r_m {
        return Err(err(line_no, "third body `M` must appear on both sides".into()));
    }
    Ok(PendingReaction {
        line: line_no,
        equation: format!("{} <=> {}", lhs.trim(), rhs.trim()),
        lhs: l_terms,
        rhs: r_terms,
        third_body: l_m,
        a: parse_num(params[0])?,
        b: parse_num(params[1])?,
        ea: parse_num(params[2])?,
        alpha: Vec::new(),
    })
}

fn parse_side(
    side: &str,
    line_no: usize,
    err: &dyn Fn(usize, String) -> Error,
) -> Result<(Vec<(String, u32)>, bool)> {
    let mut terms = Vec::new();
    let mut third_body = false;
    for term in side.split('+') {
        let term = term.trim();
        if term.is_empty() {
            return Err(err(line_no, "empty term in reaction equation".into()));
        }
        if term == "M" {
            third_body = true;
            continue;
        }
        let (coef, name) = match term.split_once(char::is_whitespace) {
            Some((c, nm)) if c.chars().all(|ch| ch.is_ascii_digit()) => (c.parse().unwrap(), nm.trim()),
            _ => {
                let digits: String = term.chars().take_while(|c| c.is_ascii_digit()).collect();
                if digits.is_empty() {
                    (1u32, term)
                } else {
                    (digits.parse().unwrap(), &term[digits.len()..])
                }
            }
        };
        if coef == 0 || name.is_empty() {
            return Err(err(line_no, format!("malformed term `{term}`")));
        }
        terms.push((name.to_string(), coef));
    }
    Ok((terms, third_body))
}
