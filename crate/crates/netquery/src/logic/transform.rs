use super::formula::*;
use super::LogicError;
use std::collections::BTreeSet;

fn subst_term(t: &Term, var: &str, c: NodeId) -> Term {
    match t {
        Term::Var(v) if v == var => Term::Const(c),
        _ => t.clone(),
    }
}

/// Replace every occurrence of `var` by `c`; a quantifier binding `var` is dropped.
pub fn substitute(f: &Formula, var: &str, c: NodeId) -> Formula {
    match f {
        Formula::Bool(_) => f.clone(),
        Formula::Atom(a) => Formula::Atom(Atom {
            pred: a.pred.clone(),
            args: a.args.iter().map(|t| subst_term(t, var, c)).collect(),
        }),
        Formula::Cmp(op, a, b) => Formula::Cmp(*op, subst_term(a, var, c), subst_term(b, var, c)),
        Formula::InNbhd { elem, center, radius } => Formula::InNbhd {
            elem: subst_term(elem, var, c),
            center: subst_term(center, var, c),
            radius: *radius,
        },
        Formula::Not(g) => Formula::not(substitute(g, var, c)),
        Formula::And(a, b) => Formula::and(substitute(a, var, c), substitute(b, var, c)),
        Formula::Or(a, b) => Formula::or(substitute(a, var, c), substitute(b, var, c)),
        Formula::Quant { q, var: v, range, body } => {
            if v == var {
                substitute(body, var, c)
            } else {
                Formula::Quant {
                    q: *q,
                    var: v.clone(),
                    range: range.as_ref().map(|r| Range { center: subst_term(&r.center, var, c), radius: r.radius }),
                    body: Box::new(substitute(body, var, c)),
                }
            }
        }
    }
}

/// Rename a variable (free occurrences only; stops at a rebinding quantifier).
pub(crate) fn rename_var(f: &Formula, from: &str, to: &str) -> Formula {
    let rt = |t: &Term| match t {
        Term::Var(v) if v == from => Term::Var(to.to_string()),
        _ => t.clone(),
    };
    match f {
        Formula::Bool(_) => f.clone(),
        Formula::Atom(a) => Formula::Atom(Atom { pred: a.pred.clone(), args: a.args.iter().map(rt).collect() }),
        Formula::Cmp(op, a, b) => Formula::Cmp(*op, rt(a), rt(b)),
        Formula::InNbhd { elem, center, radius } => {
            Formula::InNbhd { elem: rt(elem), center: rt(center), radius: *radius }
        }
        Formula::Not(g) => Formula::not(rename_var(g, from, to)),
        Formula::And(a, b) => Formula::and(rename_var(a, from, to), rename_var(b, from, to)),
        Formula::Or(a, b) => Formula::or(rename_var(a, from, to), rename_var(b, from, to)),
        Formula::Quant { q, var, range, body } => {
            let range = range.as_ref().map(|r| Range { center: rt(&r.center), radius: r.radius });
            if var == from {
                Formula::Quant { q: *q, var: var.clone(), range, body: body.clone() }
            } else {
                Formula::Quant { q: *q, var: var.clone(), range, body: Box::new(rename_var(body, from, to)) }
            }
        }
    }
}

/// Make every quantifier bind a distinct name that is also distinct from
/// the free variables.
pub fn alpha_normalize(f: &Formula) -> Formula {
    let mut taken: BTreeSet<String> = all_var_names(f);
    let mut used: BTreeSet<String> = f.free_vars().into_iter().collect();
    normalize_rec(f, &mut used, &mut taken)
}

fn normalize_rec(f: &Formula, used: &mut BTreeSet<String>, taken: &mut BTreeSet<String>) -> Formula {
    match f {
        Formula::Not(g) => Formula::not(normalize_rec(g, used, taken)),
        Formula::And(a, b) => {
            let a = normalize_rec(a, used, taken);
            Formula::and(a, normalize_rec(b, used, taken))
        }
        Formula::Or(a, b) => {
            let a = normalize_rec(a, used, taken);
            Formula::or(a, normalize_rec(b, used, taken))
        }
        Formula::Quant { q, var, range, body } => {
            let (name, body) = if used.contains(var) {
                let mut i = 1;
                let fresh = loop {
                    let cand = format!("{var}_{i}");
                    if !taken.contains(&cand) {
                        break cand;
                    }
                    i += 1;
                };
                taken.insert(fresh.clone());
                let b = rename_var(body, var, &fresh);
                (fresh, b)
            } else {
                (var.clone(), (**body).clone())
            };
            used.insert(name.clone());
            Formula::Quant {
                q: *q,
                var: name,
                range: range.clone(),
                body: Box::new(normalize_rec(&body, used, taken)),
            }
        }
        _ => f.clone(),
    }
}

/// φ^(k): all quantifiers range over N^k(center); other free variables are
/// constrained to N^k(center).
pub fn relativize(f: &Formula, center: &str, k: u32) -> Result<Formula, LogicError> {
    let free = f.free_vars();
    if !free.iter().any(|v| v == center) {
        return Err(LogicError::CenterNotFree(center.to_string()));
    }
    relativize_with_vars(f, &free, center, k)
}

pub(crate) fn relativize_with_vars(
    f: &Formula,
    vars: &[String],
    center: &str,
    k: u32,
) -> Result<Formula, LogicError> {
    if k == 0 {
        return Err(LogicError::BadRadius);
    }
    let mut out = relativize_quants(f, center, k);
    for v in vars.iter().filter(|v| v.as_str() != center) {
        out = Formula::and(out, Formula::InNbhd { elem: Term::var(v), center: Term::var(center), radius: k });
    }
    Ok(out)
}

fn relativize_quants(f: &Formula, center: &str, k: u32) -> Formula {
    match f {
        Formula::Not(g) => Formula::not(relativize_quants(g, center, k)),
        Formula::And(a, b) => Formula::and(relativize_quants(a, center, k), relativize_quants(b, center, k)),
        Formula::Or(a, b) => Formula::or(relativize_quants(a, center, k), relativize_quants(b, center, k)),
        Formula::Quant { q, var, body, .. } => Formula::Quant {
            q: *q,
            var: var.clone(),
            range: Some(Range { center: Term::var(center), radius: k }),
            body: Box::new(relativize_quants(body, center, k)),
        },
        _ => f.clone(),
    }
}

fn occurs(f: &Formula, var: &str) -> bool {
    f.free_vars().iter().any(|v| v == var)
}

/// Decide what the local facts decide and propagate boolean constants to a
/// fixed point. `facts` is asked only about ground atoms and ground
/// neighbourhood-membership atoms.
pub fn simplify(f: &Formula, facts: &dyn Fn(&Formula) -> Option<bool>) -> Formula {
    match f {
        Formula::Bool(_) => f.clone(),
        Formula::Atom(a) => {
            if a.is_ground() {
                if let Some(b) = facts(f) {
                    return Formula::Bool(b);
                }
            }
            f.clone()
        }
        Formula::Cmp(op, a, b) => match (a, b) {
            (Term::Const(x), Term::Const(y)) => Formula::Bool(op.holds(*x, *y)),
            (Term::Var(x), Term::Var(y)) if x == y => Formula::Bool(*op != CmpOp::Ne),
            _ => f.clone(),
        },
        Formula::InNbhd { elem, center, .. } => {
            if elem == center {
                return Formula::Bool(true);
            }
            if elem.as_const().is_some() && center.as_const().is_some() {
                if let Some(b) = facts(f) {
                    return Formula::Bool(b);
                }
            }
            f.clone()
        }
        Formula::Not(g) => match simplify(g, facts) {
            Formula::Bool(b) => Formula::Bool(!b),
            Formula::Not(h) => *h,
            s => Formula::not(s),
        },
        Formula::And(a, b) => match (simplify(a, facts), simplify(b, facts)) {
            (Formula::Bool(false), _) | (_, Formula::Bool(false)) => Formula::Bool(false),
            (Formula::Bool(true), s) | (s, Formula::Bool(true)) => s,
            (x, y) => Formula::and(x, y),
        },
        Formula::Or(a, b) => match (simplify(a, facts), simplify(b, facts)) {
            (Formula::Bool(true), _) | (_, Formula::Bool(true)) => Formula::Bool(true),
            (Formula::Bool(false), s) | (s, Formula::Bool(false)) => s,
            (x, y) => Formula::or(x, y),
        },
        Formula::Quant { q, var, range, body } => {
            let body = simplify(body, facts);
            // Domains are never empty (a relativized range contains its center).
            if let Formula::Bool(b) = body {
                return Formula::Bool(b);
            }
            if !occurs(&body, var) {
                return body;
            }
            Formula::Quant { q: *q, var: var.clone(), range: range.clone(), body: Box::new(body) }
        }
    }
}

/// Quantifier prefix entry of a prenex formula.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrefixEntry {
    pub q: Quantifier,
    pub var: String,
    pub range: Option<Range>,
}

/// Pull quantifiers to the front in textual order. Sound because bound names
/// are distinct and domains are non-empty.
pub fn prenex(f: &Formula) -> Formula {
    let (prefix, matrix) = split_prenex(&alpha_normalize(f));
    build_prenex(&prefix, matrix)
}

pub fn build_prenex(prefix: &[PrefixEntry], matrix: Formula) -> Formula {
    prefix.iter().rev().fold(matrix, |acc, e| Formula::Quant {
        q: e.q,
        var: e.var.clone(),
        range: e.range.clone(),
        body: Box::new(acc),
    })
}

pub fn split_prenex(f: &Formula) -> (Vec<PrefixEntry>, Formula) {
    match f {
        Formula::Not(g) => {
            let (p, m) = split_prenex(g);
            let p = p.into_iter().map(|e| PrefixEntry { q: e.q.dual(), ..e }).collect();
            (p, Formula::not(m))
        }
        Formula::And(a, b) | Formula::Or(a, b) => {
            let (mut pa, ma) = split_prenex(a);
            let (pb, mb) = split_prenex(b);
            pa.extend(pb);
            let m = if matches!(f, Formula::And(..)) { Formula::and(ma, mb) } else { Formula::or(ma, mb) };
            (pa, m)
        }
        Formula::Quant { q, var, range, body } => {
            let (mut p, m) = split_prenex(body);
            p.insert(0, PrefixEntry { q: *q, var: var.clone(), range: range.clone() });
            (p, m)
        }
        _ => (Vec::new(), f.clone()),
    }
}
