//! The canonical convex program
//!
//! ```text
//! minimise   1/2 x'Qx + q'x
//! subject to l <= Ax <= u
//! ```
//!
//! and its plain-text dump format:
//!
//! ```text
//! # comment lines start with '#'
//! n m nnz_q nnz_a
//! i j value        (nnz_q lines, entries of Q, both triangles)
//! i j value        (nnz_a lines, entries of A)
//! j value          (n lines, linear cost)
//! i lower upper    (m lines, bounds; infinities written as inf / -inf)
//! ```

use std::io::{BufRead, Write};

use super::matrix::CsrMatrix;
use crate::error::{Error, Result};

/// A named contiguous block of variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: &'static str,
    pub start: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalProgram {
    pub quad: CsrMatrix,
    pub lin: Vec<f64>,
    pub constraints: CsrMatrix,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub layout: Vec<Segment>,
}

impl CanonicalProgram {
    pub fn num_vars(&self) -> usize {
        self.lin.len()
    }

    pub fn num_rows(&self) -> usize {
        self.lower.len()
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.layout.iter().find(|s| s.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let m = self.num_rows();
        if self.quad.nrows() != n || self.quad.ncols() != n {
            return Err(Error::argument(format!(
                "Q is {}x{}, expected {n}x{n}",
                self.quad.nrows(),
                self.quad.ncols()
            )));
        }
        if self.constraints.ncols() != n || self.constraints.nrows() != m || self.upper.len() != m {
            return Err(Error::argument(format!(
                "A is {}x{} with {} lower and {} upper bounds, expected {m} rows and {n} columns",
                self.constraints.nrows(),
                self.constraints.ncols(),
                m,
                self.upper.len()
            )));
        }
        if self.lin.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("non-finite linear cost"));
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                return Err(Error::argument(format!("row {i} has bounds [{l}, {u}]")));
            }
        }
        for (i, j, v) in self.quad.triplets() {
            if v.to_bits() != self.quad.get(j, i).to_bits() {
                return Err(Error::argument(format!("Q is not symmetric at ({i}, {j})")));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut qx = vec![0.0; x.len()];
        self.quad.mul_vec(x, &mut qx);
        let quad: f64 = x.iter().zip(&qx).map(|(a, b)| a * b).sum();
        let lin: f64 = x.iter().zip(&self.lin).map(|(a, b)| a * b).sum();
        0.5 * quad + lin
    }

    /// Largest bound violation of `Ax` over all rows.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.num_rows()];
        self.constraints.mul_vec(x, &mut ax);
        ax.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(a, (l, u))| (l - a).max(a - u).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Bitwise equality of every matrix, vector and layout entry.
    pub fn bit_eq(&self, other: &Self) -> bool {
        let same = |a: &[f64], b: &[f64]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        };
        self.quad.bit_eq(&other.quad)
            && self.constraints.bit_eq(&other.constraints)
            && same(&self.lin, &other.lin)
            && same(&self.lower, &other.lower)
            && same(&self.upper, &other.upper)
            && self.layout == other.layout
    }

    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# canonical program: min 1/2 x'Qx + q'x s.t. l <= Ax <= u"
        )?;
        for seg in &self.layout {
            writeln!(
                w,
                "# segment {} [{}, {})",
                seg.name,
                seg.start,
                seg.start + seg.len
            )?;
        }
        writeln!(
            w,
            "{} {} {} {}",
            self.num_vars(),
            self.num_rows(),
            self.quad.nnz(),
            self.constraints.nnz()
        )?;
        for (i, j, v) in self.quad.triplets() {
            writeln!(w, "{i} {j} {v:?}")?;
        }
        for (i, j, v) in self.constraints.triplets() {
            writeln!(w, "{i} {j} {v:?}")?;
        }
        for (j, v) in self.lin.iter().enumerate() {
            writeln!(w, "{j} {v:?}")?;
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            writeln!(w, "{i} {l:?} {u:?}")?;
        }
        Ok(())
    }
}

/// Reads a program written by [`CanonicalProgram::write_dump`]. Segment
/// names are not restored.
pub fn read_program_dump<R: BufRead>(reader: R) -> Result<CanonicalProgram> {
    const SRC: &str = "program dump";
    let mut lines = reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i as u64 + 1, l))
        .filter(|(_, l)| {
            l.as_ref()
                .map(|s| !s.trim_start().starts_with('#') && !s.trim().is_empty())
                .unwrap_or(true)
        });

    let mut next_fields = |expected: usize| -> Result<(u64, Vec<String>)> {
        let (no, line) = lines
            .next()
            .ok_or_else(|| Error::format(SRC, 0, "unexpected end of file"))?;
        let line = line?;
        let fields: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        if fields.len() != expected {
            return Err(Error::format(
                SRC,
                no,
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        Ok((no, fields))
    };
    fn num<T: std::str::FromStr>(no: u64, s: &str) -> Result<T> {
        s.parse()
            .map_err(|_| Error::format(SRC, no, format!("cannot parse {s:?}")))
    }

    let (no, head) = next_fields(4)?;
    let n: usize = num(no, &head[0])?;
    let m: usize = num(no, &head[1])?;
    let nnz_q: usize = num(no, &head[2])?;
    let nnz_a: usize = num(no, &head[3])?;

    let mut read_triplets = |count: usize| -> Result<Vec<(usize, usize, f64)>> {
        (0..count)
            .map(|_| {
                let (no, f) = next_fields(3)?;
                Ok((num(no, &f[0])?, num(no, &f[1])?, num(no, &f[2])?))
            })
            .collect()
    };
    let q_trip = read_triplets(nnz_q)?;
    let a_trip = read_triplets(nnz_a)?;

    let mut lin = vec![0.0; n];
    for _ in 0..n {
        let (no, f) = next_fields(2)?;
        let j: usize = num(no, &f[0])?;
        *lin.get_mut(j)
            .ok_or_else(|| Error::format(SRC, no, "variable index out of range"))? =
            num(no, &f[1])?;
    }
    let mut lower = vec![0.0; m];
    let mut upper = vec![0.0; m];
    for _ in 0..m {
        let (no, f) = next_fields(3)?;
        let i: usize = num(no, &f[0])?;
        if i >= m {
            return Err(Error::format(SRC, no, "row index out of range"));
        }
        lower[i] = num(no, &f[1])?;
        upper[i] = num(no, &f[2])?;
    }

    let program = CanonicalProgram {
        quad: CsrMatrix::from_triplets(n, n, &q_trip)?,
        lin,
        constraints: CsrMatrix::from_triplets(m, n, &a_trip)?,
        lower,
        upper,
        layout: Vec::new(),
    };
    program.validate()?;
    Ok(program)
}
