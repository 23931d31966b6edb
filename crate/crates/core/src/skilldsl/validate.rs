use std::collections::BTreeSet;

use super::ast::{Call, Expr, Location, Program, Stmt};
use super::{primitive, InterpError, InterpErrorKind, SkillLibrary, BOUNDS};

/// Which callees a program may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Robot plans and skill bodies: action primitives and library skills.
    Action,
    /// Verification predicates: read-only builtins only.
    ReadOnly,
}

/// Check that every callee resolves with the right arity and every variable
/// is bound by a parameter or an earlier assignment.
pub fn validate(p: &Program, lib: &SkillLibrary, params: &[String]) -> Result<(), InterpError> {
    let mut bound: BTreeSet<String> = params.iter().cloned().collect();
    validate_with(p, lib, &mut bound, Mode::Action)
}

/// Like [`validate`], threading the set of bound names through so that
/// consecutive plan steps can share variables.
pub fn validate_with(
    p: &Program,
    lib: &SkillLibrary,
    bound: &mut BTreeSet<String>,
    mode: Mode,
) -> Result<(), InterpError> {
    for (i, stmt) in p.statements.iter().enumerate() {
        let loc = p.location(i);
        match stmt {
            Stmt::Comment(_) => {}
            Stmt::Call(c) => check_call(c, lib, bound, mode, loc)?,
            Stmt::Let(name, e) => {
                check_expr(e, lib, bound, mode, loc)?;
                bound.insert(name.clone());
            }
        }
    }
    Ok(())
}

fn check_expr(e: &Expr, lib: &SkillLibrary, bound: &BTreeSet<String>, mode: Mode, loc: Location) -> Result<(), InterpError> {
    match e {
        Expr::Num(_) | Expr::Str(_) => Ok(()),
        Expr::Var(v) => {
            if v == BOUNDS || bound.contains(v) {
                Ok(())
            } else {
                Err(InterpError::new(InterpErrorKind::UndefinedSymbol, loc, format!("undefined variable '{v}'")))
            }
        }
        Expr::Vec(items) => items.iter().try_for_each(|i| check_expr(i, lib, bound, mode, loc)),
        Expr::Index(b, _) => check_expr(b, lib, bound, mode, loc),
        Expr::Bin(_, l, r) => {
            check_expr(l, lib, bound, mode, loc)?;
            check_expr(r, lib, bound, mode, loc)
        }
        Expr::Call(c) => check_call(c, lib, bound, mode, loc),
    }
}

fn check_call(c: &Call, lib: &SkillLibrary, bound: &BTreeSet<String>, mode: Mode, loc: Location) -> Result<(), InterpError> {
    let expected = match (primitive(&c.callee), mode) {
        (Some(p), Mode::Action) if !p.verifier_only => Some(p.params.len()),
        (Some(p), Mode::ReadOnly) if p.read_only => Some(p.params.len()),
        (Some(_), Mode::ReadOnly) => {
            return Err(InterpError::new(
                InterpErrorKind::UndefinedSymbol,
                loc,
                format!("'{}' changes the world and is not allowed in a verification predicate", c.callee),
            ))
        }
        (None, Mode::Action) => lib.get(&c.callee).map(|s| s.params.len()),
        _ => None,
    };
    let Some(arity) = expected else {
        return Err(InterpError::new(
            InterpErrorKind::UndefinedSymbol,
            loc,
            format!("undefined function '{}'", c.callee),
        ));
    };
    if c.args.len() != arity {
        return Err(InterpError::new(
            InterpErrorKind::Arity,
            loc,
            format!("'{}' takes {arity} argument(s) but {} were given", c.callee, c.args.len()),
        ));
    }
    c.args.iter().try_for_each(|a| check_expr(a, lib, bound, mode, loc))
}
