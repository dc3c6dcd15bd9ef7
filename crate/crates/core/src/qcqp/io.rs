//! Plain-text problem dump for cross-checking with external solvers.
//!
//! Format (whitespace separated, `#` starts a comment line, every number in
//! shortest round-trip decimal form, matrices row-major one row per line):
//!
//! ```text
//! qcqp 1
//! vars <n>
//! H
//! <n rows of n numbers>
//! c
//! <n numbers>
//! c0 <number>
//! equalities <me>
//! <me rows: n numbers of A followed by b>
//! inequalities <mi>
//! ineq <j>
//! P
//! <n rows of n numbers>
//! q
//! <n numbers>
//! r <number>
//! ```

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::{QuadConstraint, Qcqp};
use crate::error::{Error, Result};

fn push_row<'a>(out: &mut String, values: impl Iterator<Item = &'a f64>) {
    let parts: Vec<String> = values.map(|v| format!("{v:e}")).collect();
    out.push_str(&parts.join(" "));
    out.push('\n');
}

fn push_matrix(out: &mut String, m: &DMatrix<f64>) {
    for r in m.row_iter() {
        push_row(out, r.iter());
    }
}

/// Serializes a problem to the text format.
pub fn dump(problem: &Qcqp) -> String {
    let n = problem.nvars();
    let mut out = String::new();
    out.push_str("qcqp 1\n");
    let _ = writeln!(out, "vars {n}");
    out.push_str("H\n");
    push_matrix(&mut out, &problem.h);
    out.push_str("c\n");
    push_row(&mut out, problem.c.iter());
    let _ = writeln!(out, "c0 {:e}", problem.c0);
    let _ = writeln!(out, "equalities {}", problem.a.nrows());
    for (r, row) in problem.a.row_iter().enumerate() {
        push_row(&mut out, row.iter().chain(std::iter::once(&problem.b[r])));
    }
    let _ = writeln!(out, "inequalities {}", problem.ineqs.len());
    for (j, g) in problem.ineqs.iter().enumerate() {
        let _ = writeln!(out, "ineq {j}");
        out.push_str("P\n");
        push_matrix(&mut out, &g.p);
        out.push_str("q\n");
        push_row(&mut out, g.q.iter());
        let _ = writeln!(out, "r {:e}", g.r);
    }
    out
}

struct Tokens<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Tokens { lines, pos: 0 }
    }

    fn line(&mut self) -> Result<(usize, &'a str)> {
        let l = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::invalid("qcqp dump: unexpected end of input"))?;
        self.pos += 1;
        Ok(l)
    }

    fn keyword(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let (no, l) = self.line()?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return Err(Error::invalid(format!("qcqp dump line {no}: expected '{key}'")));
        }
        Ok(parts.collect())
    }

    fn numbers(&mut self, count: usize) -> Result<Vec<f64>> {
        let (no, l) = self.line()?;
        let vals: std::result::Result<Vec<f64>, _> = l.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|e| Error::invalid(format!("qcqp dump line {no}: {e}")))?;
        if vals.len() != count {
            return Err(Error::invalid(format!(
                "qcqp dump line {no}: expected {count} numbers, found {}",
                vals.len()
            )));
        }
        Ok(vals)
    }

    fn matrix(&mut self, n: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(n, n);
        for r in 0..n {
            let row = self.numbers(n)?;
            for (c, v) in row.into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        Ok(m)
    }
}

fn single<T: std::str::FromStr>(parts: &[&str], what: &str) -> Result<T> {
    match parts {
        [v] => v
            .parse()
            .map_err(|_| Error::invalid(format!("qcqp dump: invalid {what}"))),
        _ => Err(Error::invalid(format!("qcqp dump: expected one value for {what}"))),
    }
}

/// Parses the text format produced by [`dump`].
pub fn load(text: &str) -> Result<Qcqp> {
    let mut t = Tokens::new(text);
    let version: u32 = single(&t.keyword("qcqp")?, "version")?;
    if version != 1 {
        return Err(Error::invalid(format!("qcqp dump: unsupported version {version}")));
    }
    let n: usize = single(&t.keyword("vars")?, "vars")?;
    t.keyword("H")?;
    let h = t.matrix(n)?;
    t.keyword("c")?;
    let c = DVector::from_vec(t.numbers(n)?);
    let c0: f64 = single(&t.keyword("c0")?, "c0")?;
    let me: usize = single(&t.keyword("equalities")?, "equalities")?;
    let mut a = DMatrix::zeros(me, n);
    let mut b = DVector::zeros(me);
    for r in 0..me {
        let row = t.numbers(n + 1)?;
        for cidx in 0..n {
            a[(r, cidx)] = row[cidx];
        }
        b[r] = row[n];
    }
    let mi: usize = single(&t.keyword("inequalities")?, "inequalities")?;
    let mut ineqs = Vec::with_capacity(mi);
    for _ in 0..mi {
        t.keyword("ineq")?;
        t.keyword("P")?;
        let p = t.matrix(n)?;
        t.keyword("q")?;
        let q = DVector::from_vec(t.numbers(n)?);
        let r: f64 = single(&t.keyword("r")?, "r")?;
        ineqs.push(QuadConstraint { p, q, r });
    }
    let problem = Qcqp { h, c, c0, a, b, ineqs };
    problem.validate()?;
    Ok(problem)
}
