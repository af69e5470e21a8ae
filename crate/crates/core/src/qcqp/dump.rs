//! Plain-text dump of a precoder-update problem for offline cross-checks.
//!
//! ```text
//! ratesplit-qcqp 1
//! nt 2
//! k 2
//! mode RS
//! common_rate_split 0
//! pt 1e2
//! sigma_n2 1e0
//! weights 1e0 1e0
//! user 0
//! t_c …   (likewise t, u_c, u, ups_c, ups)
//! psi_c   followed by Nt rows of "re im re im …" (row-major)
//! psi     …
//! f_c re im re im …
//! f   re im re im …
//! user 1
//! …
//! ```

use std::io::Write;

use crate::error::{Error, Result};
use crate::precoder::Mode;
use crate::saa::{SafBundle, UserSafs};
use crate::scalar::{cx, CMatrix, CVector, Real};

use super::QcqpProblem;

const MAGIC: &str = "ratesplit-qcqp 1";

fn row<T: Real>(it: impl Iterator<Item = crate::scalar::Cx<T>>) -> String {
    it.map(|z| format!("{:e} {:e}", z.re.as_f64(), z.im.as_f64()))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_dump<T: Real, W: Write>(prob: &QcqpProblem<T>, mut out: W) -> Result<()> {
    let nt = prob.nt();
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "nt {nt}")?;
    writeln!(out, "k {}", prob.k())?;
    writeln!(out, "mode {}", prob.mode.label())?;
    writeln!(out, "common_rate_split {}", u8::from(prob.common_rate_split))?;
    writeln!(out, "pt {:e}", prob.pt.as_f64())?;
    writeln!(out, "sigma_n2 {:e}", prob.sigma_n2.as_f64())?;
    let w: Vec<String> = prob.weights.iter().map(|w| format!("{:e}", w.as_f64())).collect();
    writeln!(out, "weights {}", w.join(" "))?;
    for (i, u) in prob.safs.users.iter().enumerate() {
        writeln!(out, "user {i}")?;
        for (name, v) in [
            ("t_c", u.t_c),
            ("t", u.t),
            ("u_c", u.u_c),
            ("u", u.u),
            ("ups_c", u.ups_c),
            ("ups", u.ups),
        ] {
            writeln!(out, "{name} {:e}", v.as_f64())?;
        }
        for (name, m) in [("psi_c", &u.psi_c), ("psi", &u.psi)] {
            writeln!(out, "{name}")?;
            for r in 0..nt {
                writeln!(out, "{}", row(m.row(r).iter().copied()))?;
            }
        }
        writeln!(out, "f_c {}", row(u.f_c.iter().copied()))?;
        writeln!(out, "f {}", row(u.f.iter().copied()))?;
    }
    Ok(())
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        loop {
            match self.inner.next() {
                Some((i, l)) if !l.trim().is_empty() => return Ok((i + 1, l.trim())),
                Some(_) => continue,
                None => return Err(Error::Parse("unexpected end of dump".into())),
            }
        }
    }

    /// Next line, which must start with `key`; returns the remaining fields.
    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let (n, l) = self.next()?;
        let mut it = l.split_whitespace();
        match it.next() {
            Some(k) if k == key => Ok(it.collect()),
            other => Err(Error::Parse(format!(
                "line {n}: expected '{key}', found '{}'",
                other.unwrap_or("")
            ))),
        }
    }
}

fn num<T: Real>(s: &str) -> Result<T> {
    s.parse::<f64>()
        .map(T::of)
        .map_err(|_| Error::Parse(format!("bad number '{s}'")))
}

fn single<T: Real>(fields: &[&str]) -> Result<T> {
    match fields {
        [x] => num(x),
        _ => Err(Error::Parse(format!("expected one value, found {}", fields.len()))),
    }
}

fn complex_row<T: Real>(fields: &[&str], n: usize) -> Result<Vec<crate::scalar::Cx<T>>> {
    if fields.len() != 2 * n {
        return Err(Error::Parse(format!(
            "expected {} numbers, found {}",
            2 * n,
            fields.len()
        )));
    }
    fields
        .chunks(2)
        .map(|c| Ok(cx(num(c[0])?, num(c[1])?)))
        .collect()
}

pub fn read_dump<T: Real>(text: &str) -> Result<QcqpProblem<T>> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (_, head) = lines.next()?;
    if head != MAGIC {
        return Err(Error::Parse(format!("not a problem dump: '{head}'")));
    }
    let count = |f: Vec<&str>| -> Result<usize> {
        match f.as_slice() {
            [x] => x.parse().map_err(|_| Error::Parse(format!("bad count '{x}'"))),
            _ => Err(Error::Parse("expected one count".into())),
        }
    };
    let nt = count(lines.keyed("nt")?)?;
    let k = count(lines.keyed("k")?)?;
    let mode = match lines.keyed("mode")?.as_slice() {
        ["RS"] => Mode::Rs,
        ["NoRS"] => Mode::NoRs,
        other => return Err(Error::Parse(format!("unknown mode {other:?}"))),
    };
    let split = count(lines.keyed("common_rate_split")?)? != 0;
    let pt = single(&lines.keyed("pt")?)?;
    let sigma_n2 = single(&lines.keyed("sigma_n2")?)?;
    let weights = lines
        .keyed("weights")?
        .iter()
        .map(|s| num(s))
        .collect::<Result<Vec<T>>>()?;
    let mut users = Vec::with_capacity(k);
    for i in 0..k {
        let idx = count(lines.keyed("user")?)?;
        if idx != i {
            return Err(Error::Parse(format!("expected user {i}, found {idx}")));
        }
        let t_c = single(&lines.keyed("t_c")?)?;
        let t = single(&lines.keyed("t")?)?;
        let u_c = single(&lines.keyed("u_c")?)?;
        let u = single(&lines.keyed("u")?)?;
        let ups_c = single(&lines.keyed("ups_c")?)?;
        let ups = single(&lines.keyed("ups")?)?;
        let mut mats = Vec::with_capacity(2);
        for name in ["psi_c", "psi"] {
            lines.keyed(name)?;
            let mut entries = Vec::with_capacity(nt * nt);
            for _ in 0..nt {
                let (_, l) = lines.next()?;
                let f: Vec<&str> = l.split_whitespace().collect();
                entries.extend(complex_row::<T>(&f, nt)?);
            }
            mats.push(CMatrix::from_row_slice(nt, nt, &entries));
        }
        let f_c = CVector::from_vec(complex_row(&lines.keyed("f_c")?, nt)?);
        let f = CVector::from_vec(complex_row(&lines.keyed("f")?, nt)?);
        let psi = mats.pop().expect("two matrices");
        let psi_c = mats.pop().expect("two matrices");
        users.push(UserSafs {
            psi_c,
            psi,
            f_c,
            f,
            t_c,
            t,
            u_c,
            u,
            ups_c,
            ups,
        });
    }
    QcqpProblem::new(SafBundle { users }, sigma_n2, pt, weights, mode, split)
}
