//! DIMACS minimum-cost flow text format.
//!
//! `p min <nodes> <arcs>`, `n <id> <supply>`, `a <tail> <head> <low> <cap> <cost>`,
//! with 1-based node ids. Nonzero lower bounds are folded into supplies on read.

use std::fmt::Write as _;

use crate::FlowProblem;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DimacsError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing problem line")]
    MissingProblemLine,
    #[error("declared {declared} arcs but found {found}")]
    ArcCount { declared: usize, found: usize },
}

pub fn write_dimacs(problem: &FlowProblem, comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(out, "c {line}");
        }
    }
    let _ = writeln!(out, "p min {} {}", problem.num_nodes(), problem.arcs.len());
    for (v, &s) in problem.supplies.iter().enumerate() {
        if s != 0 {
            let _ = writeln!(out, "n {} {}", v + 1, s);
        }
    }
    for a in &problem.arcs {
        let _ = writeln!(out, "a {} {} 0 {} {}", a.tail + 1, a.head + 1, a.capacity, a.cost);
    }
    out
}

pub fn read_dimacs(text: &str) -> Result<FlowProblem, DimacsError> {
    let mut problem: Option<FlowProblem> = None;
    let mut declared = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |msg: &str| DimacsError::Parse { line, msg: msg.to_string() };
        let mut tok = raw.split_whitespace();
        match tok.next() {
            None | Some("c") => continue,
            Some("p") => {
                if tok.next() != Some("min") {
                    return Err(err("expected 'p min'"));
                }
                let nums = numbers(tok).map_err(|m| err(&m))?;
                let [n, m] = nums[..] else { return Err(err("expected node and arc counts")) };
                if n < 0 || m < 0 {
                    return Err(err("negative size"));
                }
                declared = m as usize;
                problem = Some(FlowProblem::new(n as usize));
            }
            Some("n") => {
                let p = problem.as_mut().ok_or(DimacsError::MissingProblemLine)?;
                let nums = numbers(tok).map_err(|m| err(&m))?;
                let [id, s] = nums[..] else { return Err(err("expected id and supply")) };
                let v = node(id, p.num_nodes()).ok_or_else(|| err("node id out of range"))?;
                p.supplies[v] += s;
            }
            Some("a") => {
                let p = problem.as_mut().ok_or(DimacsError::MissingProblemLine)?;
                let nums = numbers(tok).map_err(|m| err(&m))?;
                let [t, h, low, cap, cost] = nums[..] else {
                    return Err(err("expected tail head low cap cost"));
                };
                let n = p.num_nodes();
                let (Some(t), Some(h)) = (node(t, n), node(h, n)) else {
                    return Err(err("node id out of range"));
                };
                if low < 0 || cap < low {
                    return Err(err("invalid bounds"));
                }
                p.supplies[t] -= low;
                p.supplies[h] += low;
                p.add_arc(t, h, cap - low, cost);
            }
            Some(other) => return Err(err(&format!("unknown line type '{other}'"))),
        }
    }
    let p = problem.ok_or(DimacsError::MissingProblemLine)?;
    if p.arcs.len() != declared {
        return Err(DimacsError::ArcCount { declared, found: p.arcs.len() });
    }
    Ok(p)
}

fn numbers<'a>(tok: impl Iterator<Item = &'a str>) -> Result<Vec<i64>, String> {
    tok.map(|s| s.parse::<i64>().map_err(|_| format!("bad integer '{s}'"))).collect()
}

fn node(id: i64, n: usize) -> Option<usize> {
    (id >= 1 && id as usize <= n).then(|| id as usize - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut p = FlowProblem::new(3);
        p.supplies = vec![2, 0, -2];
        p.add_arc(0, 1, 3, -4);
        p.add_arc(1, 2, 3, 7);
        let text = write_dimacs(&p, Some("tiny"));
        assert_eq!(read_dimacs(&text).unwrap(), p);
    }

    #[test]
    fn lower_bounds_fold_into_supplies() {
        let p = read_dimacs("p min 2 1\nn 1 3\nn 2 -3\na 1 2 1 4 2\n").unwrap();
        assert_eq!(p.supplies, vec![2, -2]);
        assert_eq!(p.arcs[0].capacity, 3);
    }

    #[test]
    fn reports_bad_lines() {
        assert!(matches!(read_dimacs("p min 2 1\na 1 9 0 1 1\n"), Err(DimacsError::Parse { line: 2, .. })));
        assert_eq!(read_dimacs("c nothing\n"), Err(DimacsError::MissingProblemLine));
    }
}
