//! Text serialization of [`ValueTable`].
//!
//! ```text
//! dimcollapse-value-table 1
//! label <free text, may be empty>
//! dim <M>
//! gamma <f64>
//! d_max <f64>
//! dt <f64>
//! iterations <usize>
//! interpolation nearest|local-average
//! eigenvalue_rate <f64>
//! actions <n>        then n lines of M values
//! states <n>         then n lines of M values
//! psds <n>           then n lines of M·M values, column-major
//! values <n>         then n lines of one value
//! ```
//!
//! Values are separated by single spaces and written in shortest round-trip
//! form, so loading reproduces every float bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{DpConfig, DpSampleSet, Interpolation, ValueTable};
use crate::error::{Error, Result};
use crate::systems::State;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "dimcollapse-value-table";

fn row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        write!(out, "{v:e}").unwrap();
    }
    out.push('\n');
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("value table line {line}: {msg}"))
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::Parse("value table ends early".into()))
    }

    fn field(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok((n, rest)),
            None if line == key => Ok((n, "")),
            _ => Err(parse_err(n, format!("expected `{key}`"))),
        }
    }

    fn number<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (n, v) = self.field(key)?;
        v.trim()
            .parse()
            .map_err(|_| parse_err(n, format!("bad {key} value {v:?}")))
    }

    fn floats(&mut self, expected: usize) -> Result<Vec<f64>> {
        let (n, line) = self.next()?;
        let out = line
            .split(' ')
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_err(n, format!("bad number {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if out.len() != expected {
            return Err(parse_err(
                n,
                format!("expected {expected} numbers, found {}", out.len()),
            ));
        }
        Ok(out)
    }

    fn block(&mut self, key: &str, width: usize) -> Result<Vec<Vec<f64>>> {
        let count: usize = self.number(key)?;
        (0..count).map(|_| self.floats(width)).collect()
    }
}

impl ValueTable {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let m = self.dimension();
        let mut s = String::new();
        writeln!(s, "{MAGIC} {FORMAT_VERSION}").unwrap();
        writeln!(s, "label {}", self.label).unwrap();
        writeln!(s, "dim {m}").unwrap();
        writeln!(s, "gamma {:e}", c.gamma).unwrap();
        writeln!(s, "d_max {:e}", c.d_max).unwrap();
        writeln!(s, "dt {:e}", c.dt).unwrap();
        writeln!(s, "iterations {}", c.iterations).unwrap();
        writeln!(s, "interpolation {}", c.interpolation.name()).unwrap();
        writeln!(s, "eigenvalue_rate {:e}", self.samples.eigenvalue_rate).unwrap();
        writeln!(s, "actions {}", c.actions.len()).unwrap();
        for a in &c.actions {
            row(&mut s, a.iter().copied());
        }
        writeln!(s, "states {}", self.samples.states.len()).unwrap();
        for x in &self.samples.states {
            row(&mut s, x.iter().copied());
        }
        writeln!(s, "psds {}", self.samples.psds.len()).unwrap();
        for p in &self.samples.psds {
            row(&mut s, p.iter().copied());
        }
        writeln!(s, "values {}", self.values.len()).unwrap();
        for v in &self.values {
            row(&mut s, [*v]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines {
            inner: text.lines().enumerate(),
        };
        let version: u32 = lines.number(MAGIC)?;
        if version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported value table version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let label = lines.field("label")?.1.to_string();
        let m: usize = lines.number("dim")?;
        if m == 0 {
            return Err(Error::Parse("value table dimension is 0".into()));
        }
        let gamma = lines.number("gamma")?;
        let d_max = lines.number("d_max")?;
        let dt = lines.number("dt")?;
        let iterations = lines.number("iterations")?;
        let interpolation = Interpolation::parse(lines.field("interpolation")?.1)
            .map_err(|e| Error::Parse(e.to_string()))?;
        let rate = lines.number("eigenvalue_rate")?;
        let to_vec = |r: Vec<f64>| DVector::from_vec(r);
        let actions = lines.block("actions", m)?.into_iter().map(to_vec).collect();
        let states: Vec<State> = lines.block("states", m)?.into_iter().map(to_vec).collect();
        let psds = lines
            .block("psds", m * m)?
            .into_iter()
            .map(|r| DMatrix::from_vec(m, m, r))
            .collect();
        let values = lines
            .block("values", 1)?
            .into_iter()
            .map(|r| r[0])
            .collect();
        if let Ok((n, extra)) = lines.next() {
            if !extra.is_empty() {
                return Err(parse_err(n, "trailing content"));
            }
        }
        let config = DpConfig {
            gamma,
            d_max,
            actions,
            iterations,
            dt,
            interpolation,
        };
        let mut table = Self::new(DpSampleSet::new(states, psds, rate)?, config, values)?;
        table.label = label;
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if self.label.contains('\n') {
            return Err(Error::InvalidParameter(
                "table label must be a single line".into(),
            ));
        }
        fs::write(path, self.to_text()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }
}
