use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Node identifiers double as the ordered constant universe.
pub type NodeId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(NodeId),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.to_string())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }

    pub fn as_const(&self) -> Option<NodeId> {
        match self {
            Term::Const(c) => Some(*c),
            Term::Var(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Ge,
}

impl CmpOp {
    pub fn holds(self, a: NodeId, b: NodeId) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Ge => a >= b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quantifier {
    Exists,
    Forall,
}

impl Quantifier {
    pub fn dual(self) -> Quantifier {
        match self {
            Quantifier::Exists => Quantifier::Forall,
            Quantifier::Forall => Quantifier::Exists,
        }
    }
}

/// Bound of a relativized quantifier: the variable ranges over N^radius(center).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Range {
    pub center: Term,
    pub radius: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: &str, args: Vec<Term>) -> Atom {
        Atom { pred: pred.to_string(), args }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| matches!(t, Term::Const(_)))
    }

    pub fn consts(&self) -> Option<Vec<NodeId>> {
        self.args.iter().map(Term::as_const).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    Bool(bool),
    Atom(Atom),
    Cmp(CmpOp, Term, Term),
    /// `elem in N^radius(center)`
    InNbhd { elem: Term, center: Term, radius: u32 },
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Quant { q: Quantifier, var: String, range: Option<Range>, body: Box<Formula> },
}

impl Formula {
    pub fn atom(pred: &str, args: Vec<Term>) -> Formula {
        Formula::Atom(Atom::new(pred, args))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Formula) -> Formula {
        Formula::Not(Box::new(a))
    }

    pub fn exists(var: &str, body: Formula) -> Formula {
        Formula::Quant { q: Quantifier::Exists, var: var.to_string(), range: None, body: Box::new(body) }
    }

    pub fn forall(var: &str, body: Formula) -> Formula {
        Formula::Quant { q: Quantifier::Forall, var: var.to_string(), range: None, body: Box::new(body) }
    }

    /// Free variables in order of first occurrence.
    pub fn free_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut bound = Vec::new();
        self.collect_free(&mut bound, &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut Vec<String>) {
        let see = |t: &Term, bound: &Vec<String>, out: &mut Vec<String>| {
            if let Term::Var(v) = t {
                if !bound.contains(v) && !out.contains(v) {
                    out.push(v.clone());
                }
            }
        };
        match self {
            Formula::Bool(_) => {}
            Formula::Atom(a) => a.args.iter().for_each(|t| see(t, bound, out)),
            Formula::Cmp(_, a, b) => {
                see(a, bound, out);
                see(b, bound, out);
            }
            Formula::InNbhd { elem, center, .. } => {
                see(elem, bound, out);
                see(center, bound, out);
            }
            Formula::Not(g) => g.collect_free(bound, out),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Quant { var, range, body, .. } => {
                if let Some(r) = range {
                    see(&r.center, bound, out);
                }
                bound.push(var.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    /// Bound variables in binding (pre-)order.
    pub fn bound_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |f| {
            if let Formula::Quant { var, .. } = f {
                if !out.contains(var) {
                    out.push(var.clone());
                }
            }
        });
        out
    }

    /// Distinct constants in order of first occurrence.
    pub fn constants(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut see = |t: &Term| {
            if let Term::Const(c) = t {
                if !out.contains(c) {
                    out.push(*c);
                }
            }
        };
        self.visit(&mut |f| match f {
            Formula::Atom(a) => a.args.iter().for_each(&mut see),
            Formula::Cmp(_, a, b) => {
                see(a);
                see(b);
            }
            Formula::InNbhd { elem, center, .. } => {
                see(elem);
                see(center);
            }
            Formula::Quant { range: Some(r), .. } => see(&r.center),
            _ => {}
        });
        out
    }

    /// Pre-order traversal.
    pub fn visit<F: FnMut(&Formula)>(&self, f: &mut F) {
        f(self);
        match self {
            Formula::Not(g) => g.visit(f),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Formula::Quant { body, .. } => body.visit(f),
            _ => {}
        }
    }

    /// Relation atoms with their arities, first use wins.
    pub fn predicates(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        self.visit(&mut |f| {
            if let Formula::Atom(a) = f {
                out.entry(a.pred.clone()).or_insert(a.args.len());
            }
        });
        out
    }

    pub fn is_quantifier_free(&self) -> bool {
        let mut qf = true;
        self.visit(&mut |f| {
            if matches!(f, Formula::Quant { .. }) {
                qf = false;
            }
        });
        qf
    }

    pub fn has_relativization(&self) -> bool {
        let mut found = false;
        self.visit(&mut |f| match f {
            Formula::InNbhd { .. } | Formula::Quant { range: Some(_), .. } => found = true,
            _ => {}
        });
        found
    }

    pub fn uses_order(&self) -> bool {
        let mut found = false;
        self.visit(&mut |f| {
            if let Formula::Cmp(CmpOp::Ge, _, _) = f {
                found = true;
            }
        });
        found
    }

    pub fn is_closed(&self) -> bool {
        self.free_vars().is_empty()
    }

    /// Printed length, used by the message bit model.
    pub fn printed_len(&self) -> usize {
        self.to_string().len()
    }

    /// Key identifying a formula up to renaming of bound variables.
    pub fn canonical_key(&self) -> String {
        let mut n = 0usize;
        canonical_rename(self, &mut n, &mut Vec::new()).to_string()
    }
}

fn canonical_rename(f: &Formula, n: &mut usize, env: &mut Vec<(String, String)>) -> Formula {
    let rn = |t: &Term, env: &Vec<(String, String)>| match t {
        Term::Var(v) => env
            .iter()
            .rev()
            .find(|(from, _)| from == v)
            .map(|(_, to)| Term::Var(to.clone()))
            .unwrap_or_else(|| t.clone()),
        c => c.clone(),
    };
    match f {
        Formula::Bool(_) => f.clone(),
        Formula::Atom(a) => Formula::Atom(Atom {
            pred: a.pred.clone(),
            args: a.args.iter().map(|t| rn(t, env)).collect(),
        }),
        Formula::Cmp(op, a, b) => Formula::Cmp(*op, rn(a, env), rn(b, env)),
        Formula::InNbhd { elem, center, radius } => Formula::InNbhd {
            elem: rn(elem, env),
            center: rn(center, env),
            radius: *radius,
        },
        Formula::Not(g) => Formula::not(canonical_rename(g, n, env)),
        Formula::And(a, b) => {
            let a = canonical_rename(a, n, env);
            Formula::and(a, canonical_rename(b, n, env))
        }
        Formula::Or(a, b) => {
            let a = canonical_rename(a, n, env);
            Formula::or(a, canonical_rename(b, n, env))
        }
        Formula::Quant { q, var, range, body } => {
            let range = range.as_ref().map(|r| Range { center: rn(&r.center, env), radius: r.radius });
            let fresh = format!("_{n}");
            *n += 1;
            env.push((var.clone(), fresh.clone()));
            let body = canonical_rename(body, n, env);
            env.pop();
            Formula::Quant { q: *q, var: fresh, range, body: Box::new(body) }
        }
    }
}

// Printing. Precedence: quantifier 0, `|` 1, `&` 2, unary 3. Right operands
// get one level more so that the parser's left associativity round-trips.
impl Formula {
    fn fmt_prec(&self, ctx: u8, out: &mut String) {
        use std::fmt::Write;
        match self {
            Formula::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Formula::Atom(a) => {
                out.push_str(&a.pred);
                out.push('(');
                for (i, t) in a.args.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    let _ = write!(out, "{t}");
                }
                out.push(')');
            }
            Formula::Cmp(op, a, b) => {
                let _ = write!(out, "{a} {} {b}", op.symbol());
            }
            Formula::InNbhd { elem, center, radius } => {
                let _ = write!(out, "{elem} in N^{radius}({center})");
            }
            Formula::Not(g) => {
                out.push('!');
                g.fmt_prec(3, out);
            }
            Formula::And(a, b) => {
                let paren = ctx > 2;
                if paren {
                    out.push('(');
                }
                a.fmt_prec(2, out);
                out.push_str(" & ");
                b.fmt_prec(3, out);
                if paren {
                    out.push(')');
                }
            }
            Formula::Or(a, b) => {
                let paren = ctx > 1;
                if paren {
                    out.push('(');
                }
                a.fmt_prec(1, out);
                out.push_str(" | ");
                b.fmt_prec(2, out);
                if paren {
                    out.push(')');
                }
            }
            Formula::Quant { q, var, range, body } => {
                let paren = ctx > 0;
                if paren {
                    out.push('(');
                }
                out.push_str(match q {
                    Quantifier::Exists => "exists ",
                    Quantifier::Forall => "forall ",
                });
                out.push_str(var);
                if let Some(r) = range {
                    let _ = write!(out, " in N^{}({})", r.radius, r.center);
                }
                out.push_str(". ");
                body.fmt_prec(0, out);
                if paren {
                    out.push(')');
                }
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.fmt_prec(0, &mut s);
        f.write_str(&s)
    }
}

/// μ-query `mu T(x1..xl). body`, optionally relativized to radius k around x1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixpointQuery {
    pub name: String,
    pub vars: Vec<String>,
    pub body: Formula,
    pub radius: Option<u32>,
}

impl FixpointQuery {
    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    /// The FP_loc form of this query: body relativized around the first variable.
    pub fn localized(&self, k: u32) -> Result<FixpointQuery, super::LogicError> {
        let body = super::relativize_with_vars(&self.body, &self.vars, &self.vars[0], k)?;
        Ok(FixpointQuery { name: self.name.clone(), vars: self.vars.clone(), body, radius: Some(k) })
    }
}

impl fmt::Display for FixpointQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mu {}({}). {}", self.name, self.vars.join(","), self.body)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FormulaStats {
    /// ℓ
    pub free: usize,
    /// k
    pub bound: usize,
    /// c
    pub consts: usize,
    pub w: usize,
    pub v: usize,
}

impl FormulaStats {
    fn new(free: usize, bound: usize, consts: usize) -> Self {
        FormulaStats { free, bound, consts, w: free + bound + consts, v: free + bound }
    }
}

pub fn stats(f: &Formula) -> FormulaStats {
    FormulaStats::new(f.free_vars().len(), f.bound_vars().len(), f.constants().len())
}

pub fn fixpoint_stats(q: &FixpointQuery) -> FormulaStats {
    FormulaStats::new(q.vars.len(), q.body.bound_vars().len(), q.body.constants().len())
}

/// Variables appearing anywhere, bound or free.
pub(crate) fn all_var_names(f: &Formula) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let see = |t: &Term, out: &mut BTreeSet<String>| {
        if let Term::Var(v) = t {
            out.insert(v.clone());
        }
    };
    f.visit(&mut |g| match g {
        Formula::Atom(a) => a.args.iter().for_each(|t| see(t, &mut out)),
        Formula::Cmp(_, a, b) => {
            see(a, &mut out);
            see(b, &mut out);
        }
        Formula::InNbhd { elem, center, .. } => {
            see(elem, &mut out);
            see(center, &mut out);
        }
        Formula::Quant { var, range, .. } => {
            out.insert(var.clone());
            if let Some(r) = range {
                see(&r.center, &mut out);
            }
        }
        _ => {}
    });
    out
}
