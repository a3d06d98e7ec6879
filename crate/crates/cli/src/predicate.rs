//! Row filters written on the command line, e.g. `w3==1,w2<=0.5`.

use std::fmt;

use anyhow::Result;

use crate::usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
    Ne,
}

impl Op {
    fn symbol(self) -> &'static str {
        match self {
            Op::Le => "<=",
            Op::Lt => "<",
            Op::Ge => ">=",
            Op::Gt => ">",
            Op::Eq => "==",
            Op::Ne => "!=",
        }
    }

    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Op::Le => a <= b,
            Op::Lt => a < b,
            Op::Ge => a >= b,
            Op::Gt => a > b,
            Op::Eq => a == b,
            Op::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub column: String,
    pub op: Op,
    pub value: f64,
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.column, self.op.symbol(), self.value)
    }
}

/// Conjunction of conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct PredicateSet {
    pub terms: Vec<Predicate>,
}

impl PredicateSet {
    pub fn parse(text: &str) -> Result<Self> {
        // two-character operators first so `<=` is not read as `<`
        const OPS: [(&str, Op); 6] = [
            ("<=", Op::Le),
            (">=", Op::Ge),
            ("==", Op::Eq),
            ("!=", Op::Ne),
            ("<", Op::Lt),
            (">", Op::Gt),
        ];
        let mut terms = Vec::new();
        for raw in text.split(',') {
            let term = raw.trim();
            if term.is_empty() {
                return Err(usage(format!("empty condition in '{text}'")));
            }
            let (pos, sym, op) = OPS
                .iter()
                .filter_map(|&(sym, op)| term.find(sym).map(|p| (p, sym, op)))
                .min_by_key(|&(p, sym, _)| (p, std::cmp::Reverse(sym.len())))
                .ok_or_else(|| usage(format!("condition '{term}' has no comparison operator")))?;
            let column = term[..pos].trim();
            let value = term[pos + sym.len()..].trim();
            if column.is_empty() {
                return Err(usage(format!("condition '{term}' names no column")));
            }
            let value: f64 = value
                .parse()
                .map_err(|_| usage(format!("condition '{term}': '{value}' is not a number")))?;
            terms.push(Predicate {
                column: column.to_string(),
                op,
                value,
            });
        }
        Ok(PredicateSet { terms })
    }

    /// Column positions of each term within `names`.
    pub fn bind(&self, names: &[String]) -> Result<Vec<usize>> {
        self.terms
            .iter()
            .map(|t| {
                names.iter().position(|n| *n == t.column).ok_or_else(|| {
                    usage(format!(
                        "unknown column '{}' (available: {})",
                        t.column,
                        names.join(", ")
                    ))
                })
            })
            .collect()
    }

    /// Rows of the column-major `table` satisfying every condition.
    pub fn select(&self, names: &[String], table: &[Vec<f64>]) -> Result<Vec<usize>> {
        let cols = self.bind(names)?;
        let n = table.first().map_or(0, Vec::len);
        Ok((0..n)
            .filter(|&i| {
                self.terms
                    .iter()
                    .zip(&cols)
                    .all(|(t, &c)| t.op.holds(table[c][i], t.value))
            })
            .collect())
    }
}

impl fmt::Display for PredicateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(","))
    }
}
