//! Symbolic computation-cost model in units of one hash evaluation.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::census::OpCensus;

/// Operation counts: `T_H`, `T_X`, `T_E`, `T_D`, `T_CM`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct CostExpr {
    pub hash: u32,
    pub xor: u32,
    pub encrypt: u32,
    pub decrypt: u32,
    pub chebyshev: u32,
}

impl CostExpr {
    pub const ZERO: CostExpr = CostExpr { hash: 0, xor: 0, encrypt: 0, decrypt: 0, chebyshev: 0 };

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    fn terms(&self) -> [(u32, &'static str); 5] {
        [(self.xor, "T_X"), (self.hash, "T_H"), (self.chebyshev, "T_CM"), (self.encrypt, "T_E"), (self.decrypt, "T_D")]
    }
}

impl std::ops::Add for CostExpr {
    type Output = CostExpr;

    fn add(self, rhs: CostExpr) -> CostExpr {
        CostExpr {
            hash: self.hash + rhs.hash,
            xor: self.xor + rhs.xor,
            encrypt: self.encrypt + rhs.encrypt,
            decrypt: self.decrypt + rhs.decrypt,
            chebyshev: self.chebyshev + rhs.chebyshev,
        }
    }
}

impl fmt::Display for CostExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .terms()
            .iter()
            .filter(|(n, _)| *n > 0)
            .map(|(n, sym)| if *n == 1 { sym.to_string() } else { format!("{n}{sym}") })
            .collect();
        if parts.is_empty() {
            f.write_str("0")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse cost term {0:?}")]
pub struct ParseCostError(String);

impl FromStr for CostExpr {
    type Err = ParseCostError;

    /// Parses sums such as `"5T_X+4T_H+2T_CM"`; `"0"` is the empty sum.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut expr = CostExpr::ZERO;
        let s = s.trim();
        if s == "0" {
            return Ok(expr);
        }
        for term in s.split('+') {
            let term = term.trim();
            let split = term.find('T').ok_or_else(|| ParseCostError(term.to_owned()))?;
            let (coef, sym) = term.split_at(split);
            let coef: u32 =
                if coef.is_empty() { 1 } else { coef.parse().map_err(|_| ParseCostError(term.to_owned()))? };
            let slot = match sym {
                "T_H" => &mut expr.hash,
                "T_X" => &mut expr.xor,
                "T_E" => &mut expr.encrypt,
                "T_D" => &mut expr.decrypt,
                "T_CM" => &mut expr.chebyshev,
                _ => return Err(ParseCostError(term.to_owned())),
            };
            *slot += coef;
        }
        Ok(expr)
    }
}

/// Cost of each operation in units of `T_H`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostWeights {
    pub hash: f64,
    pub xor: f64,
    pub encrypt: f64,
    pub decrypt: f64,
    pub chebyshev: f64,
}

impl CostWeights {
    /// `T_E = T_D = 2.5 T_H`, `T_CM = 175 T_H`, XOR ignored.
    pub const PUBLISHED: CostWeights =
        CostWeights { hash: 1.0, xor: 0.0, encrypt: 2.5, decrypt: 2.5, chebyshev: 175.0 };
}

impl Default for CostWeights {
    fn default() -> Self {
        Self::PUBLISHED
    }
}

pub fn cost_total(expr: &CostExpr, weights: &CostWeights) -> f64 {
    f64::from(expr.hash) * weights.hash
        + f64::from(expr.xor) * weights.xor
        + f64::from(expr.encrypt) * weights.encrypt
        + f64::from(expr.decrypt) * weights.decrypt
        + f64::from(expr.chebyshev) * weights.chebyshev
}

/// One protocol's published per-party costs and its published total.
#[derive(Clone, Debug, PartialEq)]
pub struct CostRow {
    pub name: String,
    pub user: CostExpr,
    pub third_party: Option<CostExpr>,
    pub server: CostExpr,
    pub stated_total: f64,
}

impl CostRow {
    pub fn parse(
        name: &str,
        user: &str,
        third_party: Option<&str>,
        server: &str,
        stated_total: f64,
    ) -> Result<Self, ParseCostError> {
        Ok(Self {
            name: name.to_owned(),
            user: user.parse()?,
            third_party: third_party.map(str::parse).transpose()?,
            server: server.parse()?,
            stated_total,
        })
    }

    pub fn combined(&self) -> CostExpr {
        self.user + self.third_party.unwrap_or_default() + self.server
    }
}

/// The published comparison table, transcribed column by column.
pub fn published_rows() -> Vec<CostRow> {
    let rows: [(&str, &str, Option<&str>, &str, f64); 7] = [
        ("Tseng-Jou", "T_X+3T_H+2T_CM+T_E+T_D", Some("T_X+T_H+T_CM+2T_E+2T_D"), "2T_H+T_CM+T_E+T_D", 726.0),
        ("Niu-Wang", "2T_H+2T_CM+T_E+T_D", Some("2T_E+2T_D"), "2T_H+T_CM+T_E+T_D", 724.0),
        ("Yoon-Jeon", "2T_H+2T_CM+T_E", Some("T_E+T_D"), "2T_H+T_CM+T_D", 714.0),
        ("He et al", "2T_X+4T_H+3T_CM", None, "3T_X+4T_H+3T_CM+T_D", 958.0),
        ("Lee et al", "6T_X+7T_H+2T_CM", None, "6T_X+5T_H+2T_CM", 712.0),
        ("Lee-Hsu", "5T_X+10T_H+3T_CM", None, "3T_X+7T_H+3T_CM", 967.0),
        ("proposed", "5T_X+4T_H+2T_CM", None, "4T_X+2T_H+2T_CM", 706.0),
    ];
    rows.iter()
        .map(|(name, u, t, s, total)| CostRow::parse(name, u, *t, s, *total).expect("transcribed rows parse"))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReportRow {
    pub name: String,
    pub computed: f64,
    pub stated: f64,
    pub matches: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CostReport {
    pub rows: Vec<CostReportRow>,
}

/// Recomputes each row's total. Rows whose stated total disagrees with their
/// own columns are flagged, never adjusted.
pub fn cost_table(rows: &[CostRow], weights: &CostWeights) -> CostReport {
    let rows = rows
        .iter()
        .map(|row| {
            let computed = cost_total(&row.combined(), weights);
            CostReportRow {
                name: row.name.clone(),
                computed,
                stated: row.stated_total,
                matches: computed == row.stated_total,
            }
        })
        .collect();
    CostReport { rows }
}

impl CostReport {
    pub fn flagged(&self) -> impl Iterator<Item = &CostReportRow> {
        self.rows.iter().filter(|r| !r.matches)
    }

    pub fn render_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(8);
        let mut out = format!("{:<width$}  {:>10}  {:>10}  {}\n", "protocol", "computed", "stated", "status");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<width$}  {:>10}  {:>10}  {}\n",
                r.name,
                format!("{}T_H", r.computed),
                format!("{}T_H", r.stated),
                if r.matches { "ok" } else { "MISMATCH" }
            ));
        }
        out
    }

    pub fn render_machine(&self) -> String {
        self.rows
            .iter()
            .map(|r| format!("row={:?} computed={} stated={} match={}\n", r.name, r.computed, r.stated, r.matches))
            .collect()
    }
}

/// Cost vector observed during one run, in the model's vocabulary.
pub fn measure_counts(census: &OpCensus) -> CostExpr {
    census.cost_expr()
}
