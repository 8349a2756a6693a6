//! Free-format MPS export.

use std::fmt::Write as _;

use crate::{LinearProgram, RowSense};

/// Renders `lp` as free MPS. Integer columns are wrapped in `MARKER` blocks;
/// the objective offset is written as the negated objective right-hand side.
pub fn write_mps(lp: &LinearProgram, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NAME {}", if name.is_empty() { "LP" } else { name });
    out.push_str("ROWS\n N obj\n");
    for r in 0..lp.num_rows() {
        let t = match lp.senses[r] {
            RowSense::Le => "L",
            RowSense::Ge => "G",
            RowSense::Eq => "E",
        };
        let _ = writeln!(out, " {t} {}", lp.row_name(r));
    }
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.num_vars()];
    for &(r, j, v) in &lp.entries {
        by_col[j].push((r, v));
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut markers = 0;
    for (j, col) in by_col.iter_mut().enumerate() {
        col.sort_by_key(|e| e.0);
        if lp.integer[j] != in_int {
            let kind = if lp.integer[j] { "INTORG" } else { "INTEND" };
            let _ = writeln!(out, " M{markers} 'MARKER' '{kind}'");
            markers += 1;
            in_int = lp.integer[j];
        }
        let name = lp.var_name(j);
        let _ = writeln!(out, " {name} obj {}", lp.objective[j]);
        let mut k = 0;
        while k < col.len() {
            let (r, mut v) = col[k];
            k += 1;
            while k < col.len() && col[k].0 == r {
                v += col[k].1;
                k += 1;
            }
            let _ = writeln!(out, " {name} {} {v}", lp.row_name(r));
        }
    }
    if in_int {
        let _ = writeln!(out, " M{markers} 'MARKER' 'INTEND'");
    }
    out.push_str("RHS\n");
    if lp.objective_offset != 0.0 {
        let _ = writeln!(out, " rhs obj {}", -lp.objective_offset);
    }
    for r in 0..lp.num_rows() {
        if lp.rhs[r] != 0.0 {
            let _ = writeln!(out, " rhs {} {}", lp.row_name(r), lp.rhs[r]);
        }
    }
    out.push_str("BOUNDS\n");
    for j in 0..lp.num_vars() {
        let (lo, hi, name) = (lp.lower[j], lp.upper[j], lp.var_name(j));
        if lo == hi {
            let _ = writeln!(out, " FX bnd {name} {lo}");
            continue;
        }
        match (lo.is_finite(), hi.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " FR bnd {name}");
            }
            (false, true) => {
                let _ = writeln!(out, " MI bnd {name}\n UP bnd {name} {hi}");
            }
            (true, fin_hi) => {
                if lo != 0.0 {
                    let _ = writeln!(out, " LO bnd {name} {lo}");
                }
                if fin_hi {
                    let _ = writeln!(out, " UP bnd {name} {hi}");
                } else if lp.integer[j] {
                    let _ = writeln!(out, " PL bnd {name}");
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}
