//! Text formats: problem files, flat `key = value` configs and trace tables.
//!
//! Problem file, one directive per line, `#` starts a comment:
//!
//! ```text
//! dimension 2
//! cost -1 -1
//! bound 1 1
//! quadratic sum_square
//!   a 1 0 | -1
//!   c 0 1 | 0
//! ineq 1 1 | -1.5
//! eq 1 -1 | 0
//! ```
//!
//! `quadratic product` takes `a`, `b` and `c` lines.

use std::fmt::{self, Write as _};

use crate::config::{DualDirection, ExecutionMode, SolverConfig};
use crate::family::{Family, PerFamily};
use crate::partition::Strategy;
use crate::problem::{AffineForm, AffineMap, Problem, QuadraticConstraint, QuadraticKind};
use crate::runtime::IterationTrace;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

struct Tok<'a> {
    text: &'a str,
    col: usize,
}

fn tokens(line: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Tok { text: &line[s..i], col: s + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Tok { text: &line[s..], col: s + 1 });
    }
    out
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn err(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        column,
        message: message.into(),
    }
}

fn number<T: Real>(t: &Tok<'_>, line: usize) -> Result<T, ParseError> {
    t.text
        .parse::<T>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| err(line, t.col, format!("malformed number `{}`", t.text)))
}

fn numbers<T: Real>(toks: &[Tok<'_>], line: usize, n: usize, what: &str) -> Result<Vec<T>, ParseError> {
    if toks.len() != n {
        let col = toks.get(n).or(toks.last()).map_or(1, |t| t.col);
        return Err(err(line, col, format!("{what} needs {n} values, found {}", toks.len())));
    }
    toks.iter().map(|t| number(t, line)).collect()
}

/// `w_1 .. w_n | offset`
fn affine<T: Real>(toks: &[Tok<'_>], line: usize, n: usize, what: &str) -> Result<AffineForm<T>, ParseError> {
    let bar = toks
        .iter()
        .position(|t| t.text == "|")
        .ok_or_else(|| err(line, toks.first().map_or(1, |t| t.col), format!("{what}: expected `weights | offset`")))?;
    let weights = numbers(&toks[..bar], line, n, what)?;
    let rest = &toks[bar + 1..];
    if rest.len() != 1 {
        let col = rest.get(1).map_or(toks[bar].col, |t| t.col);
        return Err(err(line, col, format!("{what}: expected one offset after `|`")));
    }
    Ok(AffineForm::new(weights, number(&rest[0], line)?))
}

struct Pending<T> {
    kind: QuadraticKind,
    line: usize,
    a: Option<AffineForm<T>>,
    b: Option<AffineForm<T>>,
    c: Option<AffineForm<T>>,
}

impl<T: Real> Pending<T> {
    fn finish(self, n: usize) -> Result<QuadraticConstraint<T>, ParseError> {
        let missing = |name: &str| err(self.line, 1, format!("quadratic constraint missing `{name}` line"));
        let a = self.a.ok_or_else(|| missing("a"))?;
        let c = self.c.ok_or_else(|| missing("c"))?;
        Ok(match self.kind {
            QuadraticKind::SumSquare => {
                if self.b.is_some() {
                    return Err(err(self.line, 1, "sum_square constraint takes no `b` line"));
                }
                QuadraticConstraint {
                    kind: self.kind,
                    a,
                    b: AffineForm::zero(n),
                    c,
                }
            }
            QuadraticKind::ProductForm => QuadraticConstraint {
                kind: self.kind,
                a,
                b: self.b.ok_or_else(|| missing("b"))?,
                c,
            },
        })
    }
}

pub fn parse_problem<T: Real>(text: &str) -> Result<Problem<T>, ParseError> {
    let mut n: Option<usize> = None;
    let mut cost = None;
    let mut bound = None;
    let mut quadratic = Vec::new();
    let mut ineq = Vec::new();
    let mut eq = Vec::new();
    let mut pending: Option<Pending<T>> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let toks = tokens(strip_comment(raw));
        let Some(head) = toks.first() else { continue };
        let args = &toks[1..];
        let need_n = || n.ok_or_else(|| err(line, head.col, "`dimension` must come first"));
        if !matches!(head.text, "a" | "b" | "c") {
            if let Some(p) = pending.take() {
                quadratic.push(p.finish(n.unwrap_or(0))?);
            }
        }
        match head.text {
            "dimension" => {
                if n.is_some() {
                    return Err(err(line, head.col, "duplicate `dimension`"));
                }
                if args.len() != 1 {
                    return Err(err(line, head.col, "`dimension` takes one value"));
                }
                let v: usize = args[0]
                    .text
                    .parse()
                    .ok()
                    .filter(|&v| v > 0)
                    .ok_or_else(|| err(line, args[0].col, format!("bad dimension `{}`", args[0].text)))?;
                n = Some(v);
            }
            "cost" | "bound" => {
                let slot = if head.text == "cost" { &mut cost } else { &mut bound };
                if slot.is_some() {
                    return Err(err(line, head.col, format!("duplicate `{}`", head.text)));
                }
                *slot = Some(numbers(args, line, need_n()?, head.text)?);
            }
            "quadratic" => {
                need_n()?;
                let kind = match args.first().map(|t| t.text) {
                    Some("sum_square") => QuadraticKind::SumSquare,
                    Some("product") => QuadraticKind::ProductForm,
                    Some(other) => {
                        return Err(err(line, args[0].col, format!("unknown constraint kind `{other}`")))
                    }
                    None => return Err(err(line, head.col, "`quadratic` needs a kind")),
                };
                if args.len() > 1 {
                    return Err(err(line, args[1].col, "unexpected token"));
                }
                pending = Some(Pending {
                    kind,
                    line,
                    a: None,
                    b: None,
                    c: None,
                });
            }
            "a" | "b" | "c" => {
                let nn = need_n()?;
                let p = pending
                    .as_mut()
                    .ok_or_else(|| err(line, head.col, format!("`{}` outside a quadratic constraint", head.text)))?;
                let form = affine(args, line, nn, head.text)?;
                let slot = match head.text {
                    "a" => &mut p.a,
                    "b" => &mut p.b,
                    _ => &mut p.c,
                };
                if slot.is_some() {
                    return Err(err(line, head.col, format!("duplicate `{}` line", head.text)));
                }
                *slot = Some(form);
            }
            "ineq" => ineq.push(affine(args, line, need_n()?, "ineq")?),
            "eq" => eq.push(affine(args, line, need_n()?, "eq")?),
            other => return Err(err(line, head.col, format!("unknown directive `{other}`"))),
        }
    }
    let last = text.lines().count().max(1);
    let n = n.ok_or_else(|| err(last, 1, "missing `dimension`"))?;
    if let Some(p) = pending.take() {
        quadratic.push(p.finish(n)?);
    }
    let cost = cost.ok_or_else(|| err(last, 1, "missing `cost`"))?;
    let bound = bound.ok_or_else(|| err(last, 1, "missing `bound`"))?;
    Problem::new(cost, bound, quadratic, AffineMap::new(ineq), AffineMap::new(eq))
        .map_err(|e| err(last, 1, e.to_string()))
}

fn push_values<T: Real>(out: &mut String, vals: &[T]) {
    for v in vals {
        let _ = write!(out, " {v}");
    }
}

fn push_affine<T: Real>(out: &mut String, head: &str, f: &AffineForm<T>) {
    out.push_str(head);
    push_values(out, &f.weights);
    let _ = writeln!(out, " | {}", f.offset);
}

pub fn write_problem<T: Real>(p: &Problem<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dimension {}", p.n);
    out.push_str("cost");
    push_values(&mut out, &p.cost);
    out.push_str("\nbound");
    push_values(&mut out, &p.bound);
    out.push('\n');
    for q in &p.quadratic {
        let _ = writeln!(out, "quadratic {}", q.kind.key());
        push_affine(&mut out, "  a", &q.a);
        if q.kind == QuadraticKind::ProductForm {
            push_affine(&mut out, "  b", &q.b);
        }
        push_affine(&mut out, "  c", &q.c);
    }
    for r in &p.ineq.rows {
        push_affine(&mut out, "ineq", r);
    }
    for r in &p.eq.rows {
        push_affine(&mut out, "eq", r);
    }
    out
}

fn parse_list<T: Real>(v: &str, line: usize, col: usize) -> Result<Vec<T>, ParseError> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| err(line, col, format!("malformed number `{}`", s.trim())))
        })
        .collect()
}

fn parse_one<T: Real>(v: &str, line: usize, col: usize) -> Result<T, ParseError> {
    let l = parse_list(v, line, col)?;
    if l.len() != 1 {
        return Err(err(line, col, "expected a single number"));
    }
    Ok(l[0])
}

fn parse_usize(v: &str, line: usize, col: usize) -> Result<usize, ParseError> {
    v.parse().map_err(|_| err(line, col, format!("expected a nonnegative integer, got `{v}`")))
}

fn parse_bool(v: &str, line: usize, col: usize) -> Result<bool, ParseError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(line, col, format!("expected true or false, got `{v}`"))),
    }
}

/// Keys accepted by [`parse_config`]. Family-indexed keys take a `.px`, `.nx`,
/// `.f`, `.g`, `.ph` or `.nh` suffix.
pub const CONFIG_KEYS: &[&str] = &[
    "rho", "alpha.<family>", "dual_upper.<family>", "lambda_z", "lambda.<family>",
    "gamma_bound", "margin", "tau0", "gamma0", "f_curvature_bound", "schedule_cap",
    "tol", "max_iter", "inner_tol", "inner_max_iter", "scale", "target_range",
    "slack_eps", "strategy", "mode", "seed", "dual_direction",
];

/// Overlays `key = value` lines onto `base`. Unknown keys are errors.
pub fn parse_config<T: Real>(text: &str, base: SolverConfig<T>) -> Result<SolverConfig<T>, ParseError> {
    let mut c = base;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = strip_comment(raw);
        if body.trim().is_empty() {
            continue;
        }
        let eqpos = body.find('=').ok_or_else(|| err(line, 1, "expected `key = value`"))?;
        let key = body[..eqpos].trim();
        let val = body[eqpos + 1..].trim();
        let vcol = eqpos + 2 + (body[eqpos + 1..].len() - body[eqpos + 1..].trim_start().len());
        let kcol = body.len() - body.trim_start().len() + 1;
        let family = |prefix: &str| -> Result<Option<Family>, ParseError> {
            match key.strip_prefix(prefix).and_then(|s| s.strip_prefix('.')) {
                Some(f) => Family::from_key(f)
                    .map(Some)
                    .ok_or_else(|| err(line, kcol, format!("unknown family `{f}` in `{key}`"))),
                None => Ok(None),
            }
        };
        if let Some(f) = family("alpha")? {
            *c.dual_steps.get_mut(f) = Some(parse_list(val, line, vcol)?);
            continue;
        }
        if let Some(f) = family("dual_upper")? {
            *c.dual_upper.get_mut(f) = Some(parse_one(val, line, vcol)?);
            continue;
        }
        if let Some(f) = family("lambda")? {
            *c.lambda_dual.get_mut(f) = parse_one(val, line, vcol)?;
            continue;
        }
        match key {
            "rho" => c.rho = parse_list(val, line, vcol)?,
            "lambda_z" => c.lambda_z = parse_one(val, line, vcol)?,
            "gamma_bound" => c.gamma_bound = parse_one(val, line, vcol)?,
            "margin" => c.margin = parse_one(val, line, vcol)?,
            "tau0" => c.tau0 = parse_one(val, line, vcol)?,
            "gamma0" => c.gamma0 = parse_one(val, line, vcol)?,
            "f_curvature_bound" => c.f_curvature_bound = Some(parse_one(val, line, vcol)?),
            "schedule_cap" => c.schedule_cap = Some(parse_one(val, line, vcol)?),
            "tol" => c.tol = parse_one(val, line, vcol)?,
            "max_iter" => c.max_iter = parse_usize(val, line, vcol)?,
            "inner_tol" => c.inner.tol = parse_one(val, line, vcol)?,
            "inner_max_iter" => c.inner.max_iter = parse_usize(val, line, vcol)?,
            "scale" => c.scale = parse_bool(val, line, vcol)?,
            "target_range" => c.target_range = parse_one(val, line, vcol)?,
            "slack_eps" => c.slack_eps = Some(parse_one(val, line, vcol)?),
            "strategy" => {
                c.strategy = Strategy::from_key(val)
                    .ok_or_else(|| err(line, vcol, format!("unknown strategy `{val}`")))?
            }
            "mode" => {
                c.mode = ExecutionMode::from_key(val)
                    .ok_or_else(|| err(line, vcol, format!("unknown mode `{val}`")))?
            }
            "dual_direction" => {
                c.dual_direction = DualDirection::from_key(val)
                    .ok_or_else(|| err(line, vcol, format!("unknown dual direction `{val}`")))?
            }
            "seed" => c.seed = val.parse().map_err(|_| err(line, vcol, format!("bad seed `{val}`")))?,
            _ => return Err(err(line, kcol, format!("unknown key `{key}`"))),
        }
    }
    Ok(c)
}

/// Column names of [`write_trace`], in order.
pub const TRACE_HEADER: &[&str] = &[
    "k", "lagrangian", "res_px", "res_nx", "res_f", "res_g", "res_ph", "res_nh",
    "consensus", "d", "p", "sigma1_l1", "u_sum", "j", "lemma1_gap",
    "sigma1_active", "capped", "slope",
];

/// Comma-separated trace table. Wall time is left out so that identical runs
/// give identical bytes.
pub fn write_trace<T: Real>(traces: &[IterationTrace<T>]) -> String {
    let mut out = TRACE_HEADER.join(",");
    out.push('\n');
    for t in traces {
        let r: &PerFamily<T> = &t.residual;
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{:e}",
            t.k + 1,
            t.cert.l_k1,
            r.px,
            r.nx,
            r.f,
            r.g,
            r.ph,
            r.nh,
            t.consensus,
            t.cert.d,
            t.cert.p,
            t.cert.sigma1_l1,
            t.cert.u_sum,
            t.cert.j,
            t.cert.lemma1_gap,
            t.sigma1_active,
            t.capped,
            t.slope,
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let p: Problem<f64> = parse_problem("dimension 1\ncost -1\nbound 1\n").unwrap();
        assert_eq!(p.n, 1);
        assert_eq!(p.cost, vec![-1.0]);
        assert_eq!(p.constraint_count(), 0);
    }

    #[test]
    fn duplicate_dimension_names_line() {
        let e = parse_problem::<f64>("dimension 1\ncost 1\ndimension 2\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("duplicate"));
    }

    #[test]
    fn errors_carry_location() {
        let e = parse_problem::<f64>("dimension 2\ncost 1 x\n").unwrap_err();
        assert_eq!((e.line, e.column), (2, 8));
        let e = parse_problem::<f64>("dimension 2\ncost 1 1\nbound 1 1\nquadratic cubic\n").unwrap_err();
        assert_eq!((e.line, e.column), (4, 11));
        assert!(e.message.contains("cubic"));
        let e = parse_problem::<f64>("dimension 2\ncost 1 1\nbound 1\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = parse_problem::<f64>("dimension 2\ncost 1 1\nbound 1 1\nquadratic product\n a 1 0 | 0\n c 0 1 | 0\n").unwrap_err();
        assert!(e.message.contains("`b`"));
    }

    #[test]
    fn full_round_trip() {
        let text = "dimension 2\ncost -1 0.5\nbound 1 2\nquadratic sum_square\n  a 1 0 | -1\n  c 0 1 | 0\nquadratic product\n  a 1 0 | 0.5\n  b -1 0 | 0.5\n  c 0 1 | 0\nineq 1 1 | -1.5\neq 1 -1 | 0.25\n";
        let p: Problem<f64> = parse_problem(text).unwrap();
        assert_eq!(write_problem(&p), text);
        assert_eq!(parse_problem::<f64>(&write_problem(&p)).unwrap(), p);
    }

    #[test]
    fn config_keys() {
        let c = parse_config::<f64>(
            "rho = 2\nalpha.g = 0.1\nlambda.f = 0.25 # note\nmode = parallel_blocks\nmax_iter = 10\nscale = false\n",
            SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(c.rho, vec![2.0]);
        assert_eq!(c.dual_steps.g, Some(vec![0.1]));
        assert_eq!(c.lambda_dual.f, 0.25);
        assert_eq!(c.mode, ExecutionMode::ParallelBlocks);
        assert_eq!(c.max_iter, 10);
        assert!(!c.scale);
        let e = parse_config::<f64>("\nrhoo = 1\n", SolverConfig::default()).unwrap_err();
        assert_eq!((e.line, e.column), (2, 1));
        assert!(parse_config::<f64>("alpha.q = 1\n", SolverConfig::default()).is_err());
        assert!(parse_config::<f64>("tol = abc\n", SolverConfig::default()).is_err());
    }
}
