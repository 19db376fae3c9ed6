//! Mixed-precision additive Runge-Kutta coefficient arrays and their
//! order-condition residuals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::precision::DoubleDouble;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableauError {
    #[error("unknown method `{0}`; expected one of imr|sdirk|novela")]
    UnknownMethod(String),
    #[error("{method} does not support {corrections} corrections")]
    Corrections { method: Method, corrections: usize },
    #[error("malformed tableau text: {0}")]
    Parse(String),
}

/// The shipped method families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Imr,
    Sdirk,
    NovelA,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Imr, Method::Sdirk, Method::NovelA];

    pub fn name(self) -> &'static str {
        match self {
            Method::Imr => "imr",
            Method::Sdirk => "sdirk",
            Method::NovelA => "novela",
        }
    }

    /// Order of the method at uniform precision.
    pub fn design_order(self) -> u32 {
        match self {
            Method::Imr => 2,
            Method::Sdirk | Method::NovelA => 3,
        }
    }

    /// Builds the tableau with `corrections` explicit high-precision
    /// correction stages appended to each implicit stage.
    pub fn tableau(self, corrections: usize) -> Result<MpTableau, TableauError> {
        match self {
            Method::Imr => Ok(imr_tableau(corrections)),
            Method::Sdirk => Ok(sdirk_tableau(corrections + 1)),
            Method::NovelA if corrections == 0 => Ok(novel_a_tableau()),
            Method::NovelA => Err(TableauError::Corrections { method: self, corrections }),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = TableauError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "imr" => Ok(Method::Imr),
            "sdirk" => Ok(Method::Sdirk),
            "novela" => Ok(Method::NovelA),
            other => Err(TableauError::UnknownMethod(other.to_string())),
        }
    }
}

/// Coefficients `(A, A_eps, b, b_eps)` of a diagonally implicit MP-ARK method.
///
/// `A` and `b` multiply high-precision evaluations of `F`, `A_eps` and
/// `b_eps` multiply low-precision evaluations. Coefficients are held in
/// double-double so that extended-precision runs see the closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct MpTableau {
    method: Method,
    corrections: usize,
    a: Vec<Vec<DoubleDouble>>,
    a_eps: Vec<Vec<DoubleDouble>>,
    b: Vec<DoubleDouble>,
    b_eps: Vec<DoubleDouble>,
}

fn dd(x: f64) -> DoubleDouble {
    DoubleDouble::from_f64(x)
}

fn to_f64_rows(m: &[Vec<DoubleDouble>]) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.iter().map(|x| x.to_f64()).collect()).collect()
}

impl MpTableau {
    fn empty(method: Method, corrections: usize, s: usize) -> Self {
        Self {
            method,
            corrections,
            a: vec![vec![DoubleDouble::ZERO; s]; s],
            a_eps: vec![vec![DoubleDouble::ZERO; s]; s],
            b: vec![DoubleDouble::ZERO; s],
            b_eps: vec![DoubleDouble::ZERO; s],
        }
    }

    /// Builds a tableau from binary64 arrays, checking shapes only.
    pub fn from_arrays(
        method: Method,
        corrections: usize,
        a: Vec<Vec<f64>>,
        a_eps: Vec<Vec<f64>>,
        b: Vec<f64>,
        b_eps: Vec<f64>,
    ) -> Result<Self, TableauError> {
        let s = b.len();
        let square = |m: &[Vec<f64>]| m.len() == s && m.iter().all(|r| r.len() == s);
        if !square(&a) || !square(&a_eps) || b_eps.len() != s || s == 0 {
            return Err(TableauError::Parse(format!("inconsistent shapes for {s} stages")));
        }
        let conv = |m: Vec<Vec<f64>>| m.into_iter().map(|r| r.into_iter().map(dd).collect()).collect();
        Ok(Self {
            method,
            corrections,
            a: conv(a),
            a_eps: conv(a_eps),
            b: b.into_iter().map(dd).collect(),
            b_eps: b_eps.into_iter().map(dd).collect(),
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn name(&self) -> &'static str {
        self.method.name()
    }

    pub fn corrections(&self) -> usize {
        self.corrections
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn design_order(&self) -> u32 {
        self.method.design_order()
    }

    pub fn a_dd(&self, i: usize, j: usize) -> DoubleDouble {
        self.a[i][j]
    }

    pub fn a_eps_dd(&self, i: usize, j: usize) -> DoubleDouble {
        self.a_eps[i][j]
    }

    pub fn b_dd(&self, j: usize) -> DoubleDouble {
        self.b[j]
    }

    pub fn b_eps_dd(&self, j: usize) -> DoubleDouble {
        self.b_eps[j]
    }

    pub fn a(&self) -> Vec<Vec<f64>> {
        to_f64_rows(&self.a)
    }

    pub fn a_eps(&self) -> Vec<Vec<f64>> {
        to_f64_rows(&self.a_eps)
    }

    pub fn b(&self) -> Vec<f64> {
        self.b.iter().map(|x| x.to_f64()).collect()
    }

    pub fn b_eps(&self) -> Vec<f64> {
        self.b_eps.iter().map(|x| x.to_f64()).collect()
    }

    /// `A + A_eps`.
    pub fn a_tilde(&self) -> Vec<Vec<f64>> {
        self.a
            .iter()
            .zip(&self.a_eps)
            .map(|(r, re)| r.iter().zip(re).map(|(x, y)| (*x + *y).to_f64()).collect())
            .collect()
    }

    /// `b + b_eps`.
    pub fn b_tilde(&self) -> Vec<f64> {
        self.b.iter().zip(&self.b_eps).map(|(x, y)| (*x + *y).to_f64()).collect()
    }

    /// Row sums of `A + A_eps`.
    pub fn c_tilde(&self) -> Vec<f64> {
        (0..self.stages())
            .map(|i| {
                let mut acc = DoubleDouble::ZERO;
                for j in 0..self.stages() {
                    acc += self.a[i][j] + self.a_eps[i][j];
                }
                acc.to_f64()
            })
            .collect()
    }

    /// Row sums of `A_eps`.
    pub fn c_eps(&self) -> Vec<f64> {
        self.a_eps
            .iter()
            .map(|r| r.iter().fold(DoubleDouble::ZERO, |acc, x| acc + *x).to_f64())
            .collect()
    }

    /// Whether stage `i` is solved implicitly at the low precision.
    pub fn is_low_implicit(&self, i: usize) -> bool {
        self.a_eps[i][i] != DoubleDouble::ZERO
    }

    /// Whether stage `i` is solved implicitly at the high precision.
    pub fn is_high_implicit(&self, i: usize) -> bool {
        self.a[i][i] != DoubleDouble::ZERO
    }

    /// Relabels stages: stage `k` of the result is stage `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let s = self.stages();
        assert_eq!(perm.len(), s);
        let mut out = Self::empty(self.method, self.corrections, s);
        for i in 0..s {
            out.b[i] = self.b[perm[i]];
            out.b_eps[i] = self.b_eps[perm[i]];
            for j in 0..s {
                out.a[i][j] = self.a[perm[i]][perm[j]];
                out.a_eps[i][j] = self.a_eps[perm[i]][perm[j]];
            }
        }
        out
    }

    /// Plain-text form: a header line, then the sections `A`, `A_eps`, `b`,
    /// `b_eps`, each a block of whitespace-separated decimal rows.
    pub fn to_text(&self) -> String {
        let mut out = format!("# {} corrections={} stages={}\n", self.name(), self.corrections, self.stages());
        let row = |r: &[f64]| r.iter().map(|x| format!("{x:+.17e}")).collect::<Vec<_>>().join(" ");
        for (label, m) in [("A", self.a()), ("A_eps", self.a_eps())] {
            out.push_str(label);
            out.push('\n');
            for r in &m {
                out.push_str(&row(r));
                out.push('\n');
            }
        }
        for (label, v) in [("b", self.b()), ("b_eps", self.b_eps())] {
            out.push_str(label);
            out.push('\n');
            out.push_str(&row(&v));
            out.push('\n');
        }
        out
    }

    /// Parses the output of [`MpTableau::to_text`].
    pub fn from_text(text: &str) -> Result<Self, TableauError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| TableauError::Parse("empty input".into()))?;
        let mut words = header.trim_start_matches('#').split_whitespace();
        let method: Method = words.next().ok_or_else(|| TableauError::Parse("missing method".into()))?.parse()?;
        let mut corrections = 0;
        for w in words {
            if let Some(v) = w.strip_prefix("corrections=") {
                corrections = v.parse().map_err(|_| TableauError::Parse(format!("bad header field `{w}`")))?;
            }
        }
        let mut sections: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
        for line in lines {
            if line.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                sections.push((line.to_string(), Vec::new()));
                continue;
            }
            let (_, rows) = sections.last_mut().ok_or_else(|| TableauError::Parse("data before section".into()))?;
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| TableauError::Parse(format!("bad number `{t}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        let mut take = |name: &str| -> Result<Vec<Vec<f64>>, TableauError> {
            let pos = sections
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| TableauError::Parse(format!("missing section `{name}`")))?;
            Ok(sections.remove(pos).1)
        };
        let a = take("A")?;
        let a_eps = take("A_eps")?;
        let b = take("b")?.into_iter().next().unwrap_or_default();
        let b_eps = take("b_eps")?.into_iter().next().unwrap_or_default();
        Self::from_arrays(method, corrections, a, a_eps, b, b_eps)
    }
}

/// Implicit midpoint rule followed by `m` explicit high-precision corrections.
///
/// Stage 1 solves `y = u + dt/2 F_eps(y)`; stages `2..=m+1` repeat
/// `y_k = u + dt/2 F(y_{k-1})`; the update uses `F` of the last stage.
pub fn imr_tableau(m: usize) -> MpTableau {
    let s = m + 1;
    let half = dd(0.5);
    let mut t = MpTableau::empty(Method::Imr, m, s);
    t.a_eps[0][0] = half;
    for k in 1..s {
        t.a[k][k - 1] = half;
    }
    t.b[s - 1] = DoubleDouble::ONE;
    t
}

/// `(sqrt(3) + 3) / 6`, the diagonal of the two-stage third-order SDIRK.
pub fn sdirk_gamma() -> DoubleDouble {
    (dd(3.0).sqrt() + dd(3.0)) / dd(6.0)
}

/// Two-stage third-order SDIRK with each implicit stage followed by `m - 1`
/// explicit corrections, expanded into `2m` stages. `m = 1` is the
/// uncorrected method.
pub fn sdirk_tableau(m: usize) -> MpTableau {
    assert!(m >= 1, "sdirk_tableau needs m >= 1");
    let s = 2 * m;
    let g = sdirk_gamma();
    let w = DoubleDouble::ONE - dd(2.0) * g;
    let mut t = MpTableau::empty(Method::Sdirk, m - 1, s);
    t.a_eps[0][0] = g;
    for k in 1..m {
        t.a[k][k - 1] = g;
    }
    t.a[m][m - 1] = w;
    t.a_eps[m][m] = g;
    for k in m + 1..s {
        t.a[k][m - 1] = w;
        t.a[k][k - 1] = g;
    }
    t.b[m - 1] = dd(0.5);
    t.b[s - 1] = dd(0.5);
    t
}

/// Four-stage third-order MP-ARK method with two low-precision implicit stages.
pub fn novel_a_tableau() -> MpTableau {
    let lit = |s: &str| DoubleDouble::parse_decimal(s).expect("valid literal");
    let mut t = MpTableau::empty(Method::NovelA, 0, 4);
    t.a[1][0] = lit("0.211324865405187");
    t.a[2][0] = lit("0.709495523817170");
    t.a[2][1] = lit("-0.865314250619423");
    t.a[3][0] = lit("0.705123240545107");
    t.a[3][1] = lit("0.943370088535775");
    t.a[3][2] = lit("-0.859818194486069");
    t.a_eps[0][0] = lit("0.788675134594813");
    t.a_eps[2][0] = lit("0.051944240459852");
    t.a_eps[2][2] = lit("0.788675134594813");
    t.b[1] = dd(0.5);
    t.b[3] = dd(0.5);
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Vector {
    E,
    BTilde,
    BEps,
    CTilde,
    CEps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MatrixSym {
    ATilde,
    AEps,
}

/// Shape of a perturbation term: `left . right`, `left . M right`, or
/// `left . (r1 * r2)` with `*` componentwise.
#[derive(Debug, Clone, Copy)]
enum Shape {
    Dot(Vector, Vector),
    Mat(Vector, MatrixSym, Vector),
    Had(Vector, Vector, Vector),
}

/// The fifteen perturbation terms through `eps^3 dt^3`, with their
/// `(eps power, dt power)`.
const PERTURBATION_TERMS: [(Shape, u32, u32); 15] = {
    use MatrixSym::*;
    use Shape::*;
    use Vector::*;
    [
        (Dot(BEps, E), 1, 1),
        (Dot(BEps, CTilde), 1, 2),
        (Dot(BTilde, CEps), 1, 2),
        (Dot(BEps, CEps), 2, 2),
        (Mat(BEps, ATilde, CTilde), 1, 3),
        (Mat(BTilde, AEps, CTilde), 1, 3),
        (Mat(BTilde, ATilde, CEps), 1, 3),
        (Had(BEps, CTilde, CTilde), 1, 3),
        (Had(BTilde, CTilde, CEps), 1, 3),
        (Mat(BEps, AEps, CTilde), 2, 3),
        (Mat(BEps, ATilde, CEps), 2, 3),
        (Mat(BTilde, AEps, CEps), 2, 3),
        (Had(BEps, CEps, CTilde), 2, 3),
        (Mat(BEps, AEps, CEps), 3, 3),
        (Had(BEps, CEps, CEps), 3, 3),
    ]
};

impl Vector {
    fn symbol(self) -> &'static str {
        match self {
            Vector::E => "e",
            Vector::BTilde => "b_tilde",
            Vector::BEps => "b_eps",
            Vector::CTilde => "c_tilde",
            Vector::CEps => "c_eps",
        }
    }
}

impl MatrixSym {
    fn symbol(self) -> &'static str {
        match self {
            MatrixSym::ATilde => "A_tilde",
            MatrixSym::AEps => "A_eps",
        }
    }
}

fn wrap(sym: &str, abs: bool) -> String {
    if abs && sym != "e" {
        format!("abs({sym})")
    } else {
        sym.to_string()
    }
}

impl Shape {
    fn formula(self, abs: bool) -> String {
        match self {
            Shape::Dot(l, r) => format!("{}*{}", wrap(l.symbol(), abs), wrap(r.symbol(), abs)),
            Shape::Mat(l, m, r) => {
                format!("{}*{}*{}", wrap(l.symbol(), abs), wrap(m.symbol(), abs), wrap(r.symbol(), abs))
            }
            Shape::Had(l, r1, r2) => {
                // products of a vector with itself are non-negative and carry no abs
                let inner_abs = abs && r1 != r2;
                format!(
                    "{}*({}.{})",
                    wrap(l.symbol(), abs),
                    wrap(r1.symbol(), inner_abs),
                    wrap(r2.symbol(), inner_abs)
                )
            }
        }
    }
}

struct Arrays {
    a_tilde: Vec<Vec<f64>>,
    a_eps: Vec<Vec<f64>>,
    b_tilde: Vec<f64>,
    b_eps: Vec<f64>,
    c_tilde: Vec<f64>,
    c_eps: Vec<f64>,
    e: Vec<f64>,
}

impl Arrays {
    fn new(t: &MpTableau) -> Self {
        Self {
            a_tilde: t.a_tilde(),
            a_eps: t.a_eps(),
            b_tilde: t.b_tilde(),
            b_eps: t.b_eps(),
            c_tilde: t.c_tilde(),
            c_eps: t.c_eps(),
            e: vec![1.0; t.stages()],
        }
    }

    fn vector(&self, v: Vector, abs: bool) -> Vec<f64> {
        let raw = match v {
            Vector::E => &self.e,
            Vector::BTilde => &self.b_tilde,
            Vector::BEps => &self.b_eps,
            Vector::CTilde => &self.c_tilde,
            Vector::CEps => &self.c_eps,
        };
        raw.iter().map(|x| if abs { x.abs() } else { *x }).collect()
    }

    fn matrix(&self, m: MatrixSym, abs: bool) -> Vec<Vec<f64>> {
        let raw = match m {
            MatrixSym::ATilde => &self.a_tilde,
            MatrixSym::AEps => &self.a_eps,
        };
        raw.iter().map(|r| r.iter().map(|x| if abs { x.abs() } else { *x }).collect()).collect()
    }

    fn eval(&self, shape: Shape, abs: bool) -> f64 {
        let dot = |l: &[f64], r: &[f64]| l.iter().zip(r).map(|(x, y)| x * y).sum::<f64>();
        match shape {
            Shape::Dot(l, r) => dot(&self.vector(l, abs), &self.vector(r, abs)),
            Shape::Mat(l, m, r) => {
                let rv = self.vector(r, abs);
                let mv: Vec<f64> = self.matrix(m, abs).iter().map(|row| dot(row, &rv)).collect();
                dot(&self.vector(l, abs), &mv)
            }
            Shape::Had(l, r1, r2) => {
                let had: Vec<f64> =
                    self.vector(r1, abs).iter().zip(self.vector(r2, abs)).map(|(x, y)| x * y).collect();
                dot(&self.vector(l, abs), &had)
            }
        }
    }
}

/// One scheme consistency condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeResidual {
    pub condition: String,
    pub order: u32,
    pub residual: f64,
}

/// One row of the perturbation table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationResidual {
    pub nonsmooth_formula: String,
    pub smooth_formula: String,
    pub eps_power: u32,
    pub dt_power: u32,
    pub nonsmooth: f64,
    pub smooth: f64,
}

/// Consistency residuals through order 3 and all perturbation terms
/// through `eps^3 dt^3`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderReport {
    pub method: String,
    pub corrections: usize,
    pub scheme: Vec<SchemeResidual>,
    pub perturbation: Vec<PerturbationResidual>,
}

impl OrderReport {
    pub fn scheme_residual(&self, condition: &str) -> Option<f64> {
        self.scheme.iter().find(|r| r.condition == condition).map(|r| r.residual)
    }

    pub fn nonsmooth(&self, formula: &str) -> Option<f64> {
        self.perturbation.iter().find(|r| r.nonsmooth_formula == formula).map(|r| r.nonsmooth)
    }

    pub fn smooth(&self, formula: &str) -> Option<f64> {
        self.perturbation.iter().find(|r| r.smooth_formula == formula).map(|r| r.smooth)
    }

    /// Largest scheme residual among conditions of order `<= order`.
    pub fn max_scheme_residual(&self, order: u32) -> f64 {
        self.scheme.iter().filter(|r| r.order <= order).fold(0.0, |m, r| m.max(r.residual.abs()))
    }

    /// Lowest `dt` power with a non-vanishing non-smooth term (above `tol`).
    pub fn leading_nonsmooth_dt_power(&self, tol: f64) -> Option<u32> {
        self.perturbation.iter().filter(|r| r.nonsmooth.abs() > tol).map(|r| r.dt_power).min()
    }
}

impl fmt::Display for OrderReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method {} corrections {}", self.method, self.corrections)?;
        writeln!(f, "{:<34} {:>5} {:>24}", "scheme condition", "order", "residual")?;
        for r in &self.scheme {
            writeln!(f, "{:<34} {:>5} {:>24.16e}", r.condition, r.order, r.residual)?;
        }
        writeln!(f)?;
        writeln!(f, "{:<44} {:>8} {:>24} {:>24}", "perturbation term", "order", "non-smooth", "smooth")?;
        for r in &self.perturbation {
            let order = format!("e{}dt{}", r.eps_power, r.dt_power);
            writeln!(f, "{:<44} {:>8} {:>24.16e} {:>24.16e}", r.nonsmooth_formula, order, r.nonsmooth, r.smooth)?;
        }
        Ok(())
    }
}

/// Evaluates every consistency and perturbation condition of `t`.
pub fn order_report(t: &MpTableau) -> OrderReport {
    let arr = Arrays::new(t);
    let dot = |l: &[f64], r: &[f64]| l.iter().zip(r).map(|(x, y)| x * y).sum::<f64>();
    let bt = &arr.b_tilde;
    let ct = &arr.c_tilde;
    let c2: Vec<f64> = ct.iter().map(|c| c * c).collect();
    let act: Vec<f64> = arr.a_tilde.iter().map(|r| dot(r, ct)).collect();
    let scheme = vec![
        SchemeResidual { condition: "b_tilde*e - 1".into(), order: 1, residual: bt.iter().sum::<f64>() - 1.0 },
        SchemeResidual { condition: "b_tilde*c_tilde - 1/2".into(), order: 2, residual: dot(bt, ct) - 0.5 },
        SchemeResidual {
            condition: "b_tilde*(c_tilde.c_tilde) - 1/3".into(),
            order: 3,
            residual: dot(bt, &c2) - 1.0 / 3.0,
        },
        SchemeResidual {
            condition: "b_tilde*A_tilde*c_tilde - 1/6".into(),
            order: 3,
            residual: dot(bt, &act) - 1.0 / 6.0,
        },
    ];
    let perturbation = PERTURBATION_TERMS
        .iter()
        .map(|&(shape, eps_power, dt_power)| PerturbationResidual {
            nonsmooth_formula: shape.formula(true),
            smooth_formula: shape.formula(false),
            eps_power,
            dt_power,
            nonsmooth: arr.eval(shape, true),
            smooth: arr.eval(shape, false),
        })
        .collect();
    OrderReport { method: t.name().to_string(), corrections: t.corrections(), scheme, perturbation }
}
