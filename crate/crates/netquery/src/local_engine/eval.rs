//! Evaluating a local formula inside one node, over its reconstructed
//! neighbourhood.

use super::topology::LocalTopology;
use super::LocalError;
use crate::logic::{CmpOp, Formula, NodeId, Quantifier, Term};
use std::collections::BTreeSet;

/// A query in local form: every quantifier and every non-centre free
/// variable is bound to N^k of the centre `vars[0]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalQuery {
    pub formula: Formula,
    pub vars: Vec<String>,
    pub k: u32,
    /// Name of the fixpoint relation, if any.
    pub fix: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Capabilities {
    pub constants: bool,
    pub order: bool,
}

fn conjuncts<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
    if let Formula::And(a, b) = f {
        conjuncts(a, out);
        conjuncts(b, out);
    } else {
        out.push(f);
    }
}

impl LocalQuery {
    /// Check locality. The centre is the first variable; `radius` is
    /// the declared k, if any.
    pub(crate) fn new(
        formula: Formula,
        vars: Vec<String>,
        radius: Option<u32>,
        fix: Option<String>,
        caps: Capabilities,
    ) -> Result<LocalQuery, LocalError> {
        let center = vars.first().ok_or_else(|| LocalError::NotLocal("no free variable to centre on".into()))?.clone();
        let is_center = |t: &Term| t.as_var() == Some(center.as_str());
        let mut k = 0;
        let mut err = None;
        formula.visit(&mut |g| {
            let e = match g {
                Formula::Quant { var, range, .. } => match range {
                    _ if *var == center => Some(LocalError::NotLocal(format!("quantifier rebinds the centre {center}"))),
                    None => Some(LocalError::NotLocal(format!("quantifier over {var} is unbounded"))),
                    Some(r) if !is_center(&r.center) => {
                        Some(LocalError::NotLocal(format!("quantifier over {var} is not centred on {center}")))
                    }
                    Some(r) => {
                        k = k.max(r.radius);
                        None
                    }
                },
                Formula::InNbhd { center: c, radius, elem } => {
                    if !is_center(c) {
                        Some(LocalError::NotLocal(format!("neighbourhood atom not centred on {center}")))
                    } else if elem.as_const().is_some() && !caps.constants {
                        Some(LocalError::Constant)
                    } else {
                        k = k.max(*radius);
                        None
                    }
                }
                Formula::Cmp(op, a, b) => {
                    if *op == CmpOp::Ge && !caps.order {
                        Some(LocalError::NoOrder)
                    } else if (a.as_const().is_some() || b.as_const().is_some()) && !caps.constants {
                        Some(LocalError::Constant)
                    } else {
                        None
                    }
                }
                Formula::Atom(a) => {
                    let consts = a.args.iter().any(|t| t.as_const().is_some());
                    if a.pred == "G" {
                        if a.args.len() != 2 || a.is_ground() {
                            Some(LocalError::Unsupported(format!("{a:?} (G needs two arguments, one a variable)")))
                        } else {
                            (consts && !caps.constants).then_some(LocalError::Constant)
                        }
                    } else if Some(&a.pred) == fix.as_ref() {
                        (a.args.len() != vars.len() || consts)
                            .then(|| LocalError::Unsupported(format!("{} needs {} variable arguments", a.pred, vars.len())))
                    } else if a.args.len() != 1 || consts {
                        Some(LocalError::Unsupported(format!("{} is neither G, unary nor the fixpoint relation", a.pred)))
                    } else {
                        None
                    }
                }
                _ => None,
            };
            if err.is_none() {
                err = e;
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        let mut cs = Vec::new();
        conjuncts(&formula, &mut cs);
        for v in vars.iter().skip(1) {
            let bound = cs.iter().any(|c| {
                matches!(c, Formula::InNbhd { elem, center: c, .. } if elem.as_var() == Some(v.as_str()) && is_center(c))
            });
            if !bound {
                return Err(LocalError::NotLocal(format!("{v} is not tied to a neighbourhood of {center}")));
            }
        }
        if let Some(r) = radius {
            if k > r {
                return Err(LocalError::NotLocal(format!("radius {k} exceeds the declared {r}")));
            }
            k = r;
        }
        Ok(LocalQuery { formula, vars, k: k.max(1), fix })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Val {
    Node(usize),
    /// A constant naming nobody in the known neighbourhood.
    Far(NodeId),
}

pub(crate) struct Eval<'a> {
    pub top: &'a LocalTopology,
    pub fix: Option<(&'a str, &'a BTreeSet<Vec<usize>>)>,
    pub steps: u64,
}

impl Eval<'_> {
    fn term(&self, t: &Term, env: &[(String, usize)]) -> Val {
        match t {
            Term::Var(v) => Val::Node(env.iter().rev().find(|(n, _)| n == v).expect("unbound variable").1),
            Term::Const(c) => match self.top.nodes.iter().position(|n| n.name == Some(*c)) {
                Some(i) => Val::Node(i),
                None => Val::Far(*c),
            },
        }
    }

    fn name(&self, v: Val) -> NodeId {
        match v {
            Val::Node(i) => self.top.nodes[i].name.expect("order needs names"),
            Val::Far(c) => c,
        }
    }

    fn holds(&mut self, f: &Formula, env: &mut Vec<(String, usize)>) -> bool {
        self.steps += 1;
        match f {
            Formula::Bool(b) => *b,
            Formula::Atom(a) => {
                let args: Vec<Val> = a.args.iter().map(|t| self.term(t, env)).collect();
                let nodes: Option<Vec<usize>> =
                    args.iter().map(|v| if let Val::Node(i) = v { Some(*i) } else { None }).collect();
                // a far constant is adjacent to nothing we can see
                let Some(nodes) = nodes else { return false };
                if a.pred == "G" {
                    self.top.adjacent(nodes[0], nodes[1])
                } else if let Some((_, rel)) = self.fix.filter(|(n, _)| *n == a.pred) {
                    rel.contains(&nodes)
                } else {
                    self.top.nodes[nodes[0]].unary.contains(&a.pred)
                }
            }
            Formula::Cmp(op, a, b) => {
                let (a, b) = (self.term(a, env), self.term(b, env));
                match op {
                    CmpOp::Eq => a == b,
                    CmpOp::Ne => a != b,
                    CmpOp::Ge => self.name(a) >= self.name(b),
                }
            }
            Formula::InNbhd { elem, radius, .. } => match self.term(elem, env) {
                Val::Node(i) => self.top.nodes[i].dist <= *radius,
                Val::Far(_) => false,
            },
            Formula::Not(g) => !self.holds(g, env),
            Formula::And(a, b) => self.holds(a, env) && self.holds(b, env),
            Formula::Or(a, b) => self.holds(a, env) || self.holds(b, env),
            Formula::Quant { q, var, range, body } => {
                let k = range.as_ref().expect("checked local").radius;
                let forall = *q == Quantifier::Forall;
                for v in self.top.within(k).collect::<Vec<_>>() {
                    env.push((var.clone(), v));
                    let b = self.holds(body, env);
                    env.pop();
                    if b != forall {
                        return b;
                    }
                }
                forall
            }
        }
    }

    /// Tuples of nodes satisfying the query, centre first.
    pub fn satisfying(&mut self, q: &LocalQuery) -> BTreeSet<Vec<usize>> {
        let cands: Vec<usize> = self.top.within(q.k).collect();
        let mut out = BTreeSet::new();
        let mut tuple = vec![self.top.center()];
        self.enumerate(q, &cands, &mut tuple, &mut out);
        out
    }

    fn enumerate(&mut self, q: &LocalQuery, cands: &[usize], tuple: &mut Vec<usize>, out: &mut BTreeSet<Vec<usize>>) {
        if tuple.len() == q.vars.len() {
            let mut env: Vec<(String, usize)> = q.vars.iter().cloned().zip(tuple.iter().copied()).collect();
            if self.holds(&q.formula, &mut env) {
                out.insert(tuple.clone());
            }
            return;
        }
        for &c in cands {
            tuple.push(c);
            self.enumerate(q, cands, tuple, out);
            tuple.pop();
        }
    }
}
