//! Plain-text output files and their readers.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces every value bit for bit, and identical inputs give
//! byte-identical files.

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::BeliefVector;
use crate::pcl::IndexTable;
use crate::space::{ApproxSpace, TransitionKernels};

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn syntax(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Syntax {
        line: line + 1,
        message: message.into(),
    }
}

fn parse<T: std::str::FromStr>(
    token: Option<&str>,
    line: usize,
    what: &str,
) -> Result<T, FormatError> {
    token
        .ok_or_else(|| syntax(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| syntax(line, format!("bad {what}")))
}

fn expect_key<'a>(
    tokens: &mut impl Iterator<Item = &'a str>,
    key: &str,
    line: usize,
) -> Result<(), FormatError> {
    match tokens.next() {
        Some(k) if k == key => Ok(()),
        other => Err(syntax(line, format!("expected `{key}`, found {other:?}"))),
    }
}

/// Summary and stored beliefs of one arm's space.
///
/// ```text
/// arm 0
/// steps 6
/// epsilon 0.001
/// exact_tree_count 1093
/// levels 1 4 13 40 110 228 357
/// size 357
/// 0 0.6 0.4
/// ...
/// end
/// ```
///
/// `levels` lists cumulative sizes after each enumeration level.
/// `exact_tree_count` is `overflow` when it does not fit in 64 bits.
pub fn write_space(out: &mut String, arm: usize, space: &ApproxSpace, tree_count: Option<u64>) {
    let _ = writeln!(out, "arm {arm}");
    let _ = writeln!(out, "steps {}", space.steps());
    let _ = writeln!(out, "epsilon {}", space.epsilon());
    match tree_count {
        Some(c) => {
            let _ = writeln!(out, "exact_tree_count {c}");
        }
        None => out.push_str("exact_tree_count overflow\n"),
    }
    out.push_str("levels");
    for l in space.level_sizes() {
        let _ = write!(out, " {l}");
    }
    out.push('\n');
    let _ = writeln!(out, "size {}", space.len());
    for (i, s) in space.states().iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in s.as_slice() {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out.push_str("end\n");
}

/// Reads every arm block written by [`write_space`].
pub fn read_spaces(text: &str) -> Result<Vec<ApproxSpace>, FormatError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let mut spaces = Vec::new();
    while let Some((n, header)) = lines.next() {
        let mut tok = header.split_whitespace();
        expect_key(&mut tok, "arm", n)?;
        let mut field = |key: &str| -> Result<(usize, String), FormatError> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| syntax(n, format!("missing `{key}`")))?;
            let mut tok = line.split_whitespace();
            expect_key(&mut tok, key, n)?;
            Ok((n, tok.collect::<Vec<_>>().join(" ")))
        };
        let (n_steps, steps) = field("steps")?;
        let steps: u32 = parse(Some(&steps), n_steps, "steps")?;
        let (n_eps, eps) = field("epsilon")?;
        let epsilon: f64 = parse(Some(&eps), n_eps, "epsilon")?;
        field("exact_tree_count")?;
        let (n_lev, levels) = field("levels")?;
        let level_sizes = levels
            .split_whitespace()
            .map(|t| parse(Some(t), n_lev, "level size"))
            .collect::<Result<Vec<usize>, _>>()?;
        let (n_size, size) = field("size")?;
        let size: usize = parse(Some(&size), n_size, "size")?;
        let mut states = Vec::with_capacity(size);
        for k in 0..size {
            let (n, line) = lines
                .next()
                .ok_or_else(|| syntax(n_size, "truncated state list"))?;
            let mut tok = line.split_whitespace();
            let idx: usize = parse(tok.next(), n, "state index")?;
            if idx != k {
                return Err(syntax(n, format!("expected state {k}, found {idx}")));
            }
            let values = tok
                .map(|t| parse(Some(t), n, "belief entry"))
                .collect::<Result<Vec<f64>, _>>()?;
            states.push(BeliefVector::new(values).map_err(|e| syntax(n, e.to_string()))?);
        }
        match lines.next() {
            Some((_, "end")) => {}
            Some((n, other)) => return Err(syntax(n, format!("expected `end`, found {other:?}"))),
            None => return Err(FormatError::Invalid("missing `end`".into())),
        }
        spaces.push(
            ApproxSpace::from_parts(states, epsilon, steps, level_sizes)
                .map_err(|e| FormatError::Invalid(e.to_string()))?,
        );
    }
    Ok(spaces)
}

/// Sparse kernels of one arm.
///
/// ```text
/// arm 0 states 357 beta 0.95
/// 0 0.32 1 2:0.56 3:0.44
/// ...
/// end
/// ```
///
/// Each state line holds the state index, its expected active reward, its
/// passive successor, and the active row as `column:probability` pairs.
pub fn write_kernels(out: &mut String, arm: usize, kernels: &TransitionKernels) {
    let _ = writeln!(
        out,
        "arm {arm} states {} beta {}",
        kernels.len(),
        kernels.beta()
    );
    for i in 0..kernels.len() {
        let _ = write!(
            out,
            "{i} {} {}",
            kernels.rewards()[i],
            kernels.passive_target(i)
        );
        for &(j, p) in kernels.active_row(i) {
            let _ = write!(out, " {j}:{p}");
        }
        out.push('\n');
    }
    out.push_str("end\n");
}

pub fn read_kernels(text: &str) -> Result<Vec<TransitionKernels>, FormatError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let mut all = Vec::new();
    while let Some((n, header)) = lines.next() {
        let mut tok = header.split_whitespace();
        expect_key(&mut tok, "arm", n)?;
        let _: usize = parse(tok.next(), n, "arm index")?;
        expect_key(&mut tok, "states", n)?;
        let size: usize = parse(tok.next(), n, "state count")?;
        expect_key(&mut tok, "beta", n)?;
        let beta: f64 = parse(tok.next(), n, "beta")?;
        let mut passive = Vec::with_capacity(size);
        let mut active = Vec::with_capacity(size);
        let mut rewards = Vec::with_capacity(size);
        for k in 0..size {
            let (n, line) = lines.next().ok_or_else(|| syntax(n, "truncated kernel"))?;
            let mut tok = line.split_whitespace();
            let idx: usize = parse(tok.next(), n, "state index")?;
            if idx != k {
                return Err(syntax(n, format!("expected state {k}, found {idx}")));
            }
            rewards.push(parse(tok.next(), n, "reward")?);
            passive.push(parse(tok.next(), n, "passive successor")?);
            let row = tok
                .map(|pair| {
                    let (j, p) = pair
                        .split_once(':')
                        .ok_or_else(|| syntax(n, format!("bad entry {pair:?}")))?;
                    Ok((
                        parse(Some(j), n, "column")?,
                        parse(Some(p), n, "probability")?,
                    ))
                })
                .collect::<Result<Vec<(usize, f64)>, FormatError>>()?;
            active.push(row);
        }
        match lines.next() {
            Some((_, "end")) => {}
            Some((n, other)) => return Err(syntax(n, format!("expected `end`, found {other:?}"))),
            None => return Err(FormatError::Invalid("missing `end`".into())),
        }
        all.push(
            TransitionKernels::new(passive, active, rewards, beta)
                .map_err(|e| FormatError::Invalid(e.to_string()))?,
        );
    }
    Ok(all)
}

/// Index tables of all arms.
///
/// ```text
/// # fail 0
/// # arm 0 fail 0
/// arm,state_index,gamma,rank
/// 0,0,0.4127,17
/// ```
///
/// The first line carries the combined flag (set if any arm fails); `rank`
/// is the 1-based extraction position.
pub fn write_index_csv(tables: &[IndexTable]) -> String {
    let mut out = String::new();
    let any = tables.iter().any(|t| t.fail);
    let _ = writeln!(out, "# fail {}", u8::from(any));
    for (a, t) in tables.iter().enumerate() {
        let _ = writeln!(out, "# arm {a} fail {}", u8::from(t.fail));
    }
    out.push_str("arm,state_index,gamma,rank\n");
    for (a, t) in tables.iter().enumerate() {
        let ranks = t.ranks();
        for (i, g) in t.gamma.iter().enumerate() {
            let _ = writeln!(out, "{a},{i},{g},{}", ranks[i] + 1);
        }
    }
    out
}

pub fn read_index_csv(text: &str) -> Result<Vec<IndexTable>, FormatError> {
    let mut fails: Vec<bool> = Vec::new();
    let mut rows: Vec<Vec<(usize, f64, usize)>> = Vec::new();
    let mut saw_header = false;
    for (n, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix('#') {
            let tok: Vec<&str> = rest.split_whitespace().collect();
            if let ["arm", a, "fail", f] = tok[..] {
                let a: usize = parse(Some(a), n, "arm index")?;
                if a != fails.len() {
                    return Err(syntax(n, "arm flags out of order"));
                }
                fails.push(parse::<u8>(Some(f), n, "fail flag")? == 1);
            }
            continue;
        }
        if !saw_header {
            if line != "arm,state_index,gamma,rank" {
                return Err(syntax(n, "missing column header"));
            }
            saw_header = true;
            continue;
        }
        let mut tok = line.split(',');
        let a: usize = parse(tok.next(), n, "arm index")?;
        let i: usize = parse(tok.next(), n, "state index")?;
        let g: f64 = parse(tok.next(), n, "gamma")?;
        let r: usize = parse(tok.next(), n, "rank")?;
        if a >= fails.len() {
            return Err(syntax(n, format!("arm {a} has no fail flag")));
        }
        rows.resize_with(fails.len(), Vec::new);
        rows[a].push((i, g, r));
    }
    rows.resize_with(fails.len(), Vec::new);
    rows.into_iter()
        .zip(fails)
        .map(|(r, fail)| {
            let len = r.len();
            let mut gamma = vec![0.0; len];
            let mut order = vec![usize::MAX; len];
            for (k, &(i, g, rank)) in r.iter().enumerate() {
                if i != k || rank == 0 || rank > len || order[rank - 1] != usize::MAX {
                    return Err(FormatError::Invalid(format!("bad index row for state {k}")));
                }
                gamma[i] = g;
                order[rank - 1] = i;
            }
            Ok(IndexTable { gamma, order, fail })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArmModel, ModelParts, ObservationMode};
    use crate::pcl::adaptive_greedy;
    use crate::space::{build_kernels, enumerate_approx, exact_tree_count};

    fn setup() -> (ApproxSpace, TransitionKernels) {
        let p = vec![vec![0.8, 0.2], vec![0.2, 0.8]];
        let r = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        let model = ArmModel::new(ModelParts::from_rows(
            &p,
            &p,
            &r,
            None,
            ObservationMode::ObservationOnly,
        ))
        .unwrap();
        let origin = BeliefVector::new(vec![0.6, 0.4]).unwrap();
        let space = enumerate_approx(&model, &origin, 3, 1e-3).unwrap();
        let kernels = build_kernels(&space, &model, 0.95).unwrap();
        (space, kernels)
    }

    #[test]
    fn space_round_trip() {
        let (space, _) = setup();
        let mut text = String::new();
        write_space(&mut text, 0, &space, exact_tree_count(2, 3).ok());
        write_space(&mut text, 1, &space, None);
        let back = read_spaces(&text).unwrap();
        assert_eq!(back, vec![space.clone(), space]);
    }

    #[test]
    fn kernels_round_trip() {
        let (_, kernels) = setup();
        let mut text = String::new();
        write_kernels(&mut text, 0, &kernels);
        assert_eq!(read_kernels(&text).unwrap(), vec![kernels]);
    }

    #[test]
    fn index_round_trip() {
        let (_, kernels) = setup();
        let table = adaptive_greedy(&kernels).unwrap();
        let text = write_index_csv(&[table.clone(), table.clone()]);
        assert!(text.starts_with("# fail 0\n# arm 0 fail 0\n# arm 1 fail 0\n"));
        assert_eq!(read_index_csv(&text).unwrap(), vec![table.clone(), table]);
    }

    #[test]
    fn syntax_errors_name_the_line() {
        let err = read_kernels("arm 0 states 1 beta 0.9\n0 1.0 zero 0:1\nend\n").unwrap_err();
        assert_eq!(err.to_string(), "line 2: bad passive successor");
    }
}
