use super::formula::*;
use super::lexer::{tokenize, Cursor, Tok};
use super::transform::alpha_normalize;
use super::LogicError;
use std::collections::BTreeMap;

pub fn parse_formula(text: &str) -> Result<Formula, LogicError> {
    let mut cur = Cursor::new(tokenize(text, '#')?, text);
    let f = formula(&mut cur)?;
    if !cur.at_end() {
        return Err(cur.error("trailing input"));
    }
    check_arities(&f, &mut BTreeMap::new())?;
    Ok(alpha_normalize(&f))
}

/// Like [`parse_formula`] but every relation must be declared in `known`
/// with the given arity.
pub fn parse_formula_in(text: &str, known: &BTreeMap<String, usize>) -> Result<Formula, LogicError> {
    let f = parse_formula(text)?;
    check_known(&f, known)?;
    Ok(f)
}

pub fn check_known(f: &Formula, known: &BTreeMap<String, usize>) -> Result<(), LogicError> {
    for (p, n) in f.predicates() {
        match known.get(&p) {
            None => return Err(LogicError::UnknownPredicate(p)),
            Some(&m) if m != n => return Err(LogicError::Arity { pred: p, expected: m, found: n }),
            _ => {}
        }
    }
    Ok(())
}

pub fn parse_fixpoint(text: &str) -> Result<FixpointQuery, LogicError> {
    let mut cur = Cursor::new(tokenize(text, '#')?, text);
    match cur.bump() {
        Some(Tok::Ident(k)) if k == "mu" => {}
        _ => return Err(LogicError::Syntax { pos: super::lexer::Pos { line: 1, col: 1 }, msg: "expected 'mu'".into() }),
    }
    let name = cur.ident("fixpoint relation name")?;
    cur.expect(&Tok::LParen, "'('")?;
    let mut vars = Vec::new();
    loop {
        vars.push(cur.ident("variable")?);
        if !cur.eat(&Tok::Comma) {
            break;
        }
    }
    cur.expect(&Tok::RParen, "')'")?;
    cur.expect(&Tok::Dot, "'.'")?;
    let body = formula(&mut cur)?;
    if !cur.at_end() {
        return Err(cur.error("trailing input"));
    }
    for (i, v) in vars.iter().enumerate() {
        if vars[..i].contains(v) {
            return Err(LogicError::Invalid(format!("variable {v} declared twice")));
        }
    }
    let mut arities = BTreeMap::new();
    arities.insert(name.clone(), vars.len());
    check_arities(&body, &mut arities)?;
    let body = alpha_normalize(&body);
    for v in body.free_vars() {
        if !vars.contains(&v) {
            return Err(LogicError::Invalid(format!("free variable {v} not declared by mu {name}")));
        }
    }
    Ok(FixpointQuery { name, vars, body, radius: None })
}

fn check_arities(f: &Formula, seen: &mut BTreeMap<String, usize>) -> Result<(), LogicError> {
    seen.entry("G".to_string()).or_insert(2);
    let mut err = None;
    f.visit(&mut |g| {
        if let Formula::Atom(a) = g {
            let e = *seen.entry(a.pred.clone()).or_insert(a.args.len());
            if e != a.args.len() && err.is_none() {
                err = Some(LogicError::Arity { pred: a.pred.clone(), expected: e, found: a.args.len() });
            }
        }
    });
    err.map_or(Ok(()), Err)
}

fn is_kw(t: Option<&Tok>, kw: &str) -> bool {
    matches!(t, Some(Tok::Ident(s)) if s == kw)
}

fn formula(cur: &mut Cursor) -> Result<Formula, LogicError> {
    let mut lhs = conj(cur)?;
    while cur.eat(&Tok::Bar) {
        let rhs = conj(cur)?;
        lhs = Formula::or(lhs, rhs);
    }
    Ok(lhs)
}

fn conj(cur: &mut Cursor) -> Result<Formula, LogicError> {
    let mut lhs = unary(cur)?;
    while cur.eat(&Tok::Amp) {
        let rhs = unary(cur)?;
        lhs = Formula::and(lhs, rhs);
    }
    Ok(lhs)
}

fn unary(cur: &mut Cursor) -> Result<Formula, LogicError> {
    if cur.eat(&Tok::Bang) {
        return Ok(Formula::not(unary(cur)?));
    }
    if cur.eat(&Tok::LParen) {
        let f = formula(cur)?;
        cur.expect(&Tok::RParen, "')'")?;
        return Ok(f);
    }
    let q = if is_kw(cur.peek(), "exists") {
        Some(Quantifier::Exists)
    } else if is_kw(cur.peek(), "forall") {
        Some(Quantifier::Forall)
    } else {
        None
    };
    if let Some(q) = q {
        cur.bump();
        let var = cur.ident("quantified variable")?;
        let range = if is_kw(cur.peek(), "in") {
            cur.bump();
            let (radius, center) = nbhd(cur)?;
            Some(Range { center, radius })
        } else {
            None
        };
        cur.expect(&Tok::Dot, "'.' after quantifier")?;
        let body = formula(cur)?;
        return Ok(Formula::Quant { q, var, range, body: Box::new(body) });
    }
    atom(cur)
}

/// `N^k(c)`
fn nbhd(cur: &mut Cursor) -> Result<(u32, Term), LogicError> {
    if !is_kw(cur.peek(), "N") {
        return Err(cur.error("expected N^k(center)"));
    }
    cur.bump();
    cur.expect(&Tok::Caret, "'^'")?;
    let k = cur.int("radius")?;
    cur.expect(&Tok::LParen, "'('")?;
    let c = term(cur)?;
    cur.expect(&Tok::RParen, "')'")?;
    Ok((k, c))
}

fn term(cur: &mut Cursor) -> Result<Term, LogicError> {
    match cur.peek() {
        Some(Tok::Ident(_)) => Ok(Term::Var(cur.ident("term")?)),
        Some(Tok::Int(_)) => Ok(Term::Const(cur.int("term")?)),
        _ => Err(cur.error("expected variable or constant")),
    }
}

fn atom(cur: &mut Cursor) -> Result<Formula, LogicError> {
    if is_kw(cur.peek(), "true") {
        cur.bump();
        return Ok(Formula::Bool(true));
    }
    if is_kw(cur.peek(), "false") {
        cur.bump();
        return Ok(Formula::Bool(false));
    }
    if matches!(cur.peek(), Some(Tok::Ident(_))) && cur.peek_at(1) == Some(&Tok::LParen) {
        let pred = cur.ident("predicate")?;
        cur.bump();
        let mut args = Vec::new();
        if !cur.eat(&Tok::RParen) {
            loop {
                args.push(term(cur)?);
                if !cur.eat(&Tok::Comma) {
                    break;
                }
            }
            cur.expect(&Tok::RParen, "')'")?;
        }
        return Ok(Formula::Atom(Atom { pred, args }));
    }
    let lhs = term(cur)?;
    if is_kw(cur.peek(), "in") {
        cur.bump();
        let (radius, center) = nbhd(cur)?;
        return Ok(Formula::InNbhd { elem: lhs, center, radius });
    }
    let op = match cur.peek() {
        Some(Tok::Eq) => CmpOp::Eq,
        Some(Tok::Ne) => CmpOp::Ne,
        Some(Tok::Ge) => CmpOp::Ge,
        _ => return Err(cur.error("expected comparison")),
    };
    cur.bump();
    let rhs = term(cur)?;
    Ok(Formula::Cmp(op, lhs, rhs))
}
