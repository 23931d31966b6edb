use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{BinOp, Call, Expr, Location, Program, Stmt};
use super::{
    primitive, GroundError, GroundErrorKind, InterpError, InterpErrorKind, SkillLibrary, BOUNDS, MAX_CALL_DEPTH,
};
use crate::sim::{Bounds, Interval, Scene, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Str(String),
    Vec(Vec3),
    Bounds(Bounds),
    Interval(Interval),
    Unit,
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Num(_) => "number",
            Value::Str(_) => "string",
            Value::Vec(_) => "vector",
            Value::Bounds(_) => "bounds",
            Value::Interval(_) => "interval",
            Value::Unit => "nothing",
        }
    }
}

pub type Env = BTreeMap<String, Value>;

/// One successful primitive invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveCall {
    pub name: String,
    pub args: Vec<Value>,
}

/// Outcome of an `expect_*` builtin inside a verification predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub passed: bool,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub calls: Vec<PrimitiveCall>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
}

impl ExecutionTrace {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Calls that change the world.
    pub fn actions(&self) -> impl Iterator<Item = &PrimitiveCall> {
        self.calls.iter().filter(|c| primitive(&c.name).is_some_and(|p| !p.read_only))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Ground(#[from] GroundError),
}

/// Walks a program against a scene, expanding skill calls.
pub struct Interpreter<'a> {
    lib: &'a SkillLibrary,
    scene: &'a mut Scene,
    pub trace: ExecutionTrace,
    depth: usize,
    statement: usize,
    location: Location,
}

impl<'a> Interpreter<'a> {
    pub fn new(lib: &'a SkillLibrary, scene: &'a mut Scene) -> Self {
        Interpreter { lib, scene, trace: ExecutionTrace::default(), depth: 0, statement: 0, location: Location::default() }
    }

    pub fn scene(&self) -> &Scene {
        self.scene
    }

    /// Run a top-level program, reading and extending `env`.
    pub fn run(&mut self, p: &Program, env: &mut Env) -> Result<(), ExecError> {
        for (i, stmt) in p.statements.iter().enumerate() {
            self.statement = i;
            self.location = p.location(i);
            self.exec(stmt, env)?;
        }
        Ok(())
    }

    fn exec(&mut self, stmt: &Stmt, env: &mut Env) -> Result<(), ExecError> {
        match stmt {
            Stmt::Comment(_) => Ok(()),
            Stmt::Call(c) => self.call(c, env).map(|_| ()),
            Stmt::Let(name, e) => {
                let v = self.eval(e, env)?;
                env.insert(name.clone(), v);
                Ok(())
            }
        }
    }

    fn type_error(&self, msg: String) -> ExecError {
        ExecError::Interp(InterpError::new(InterpErrorKind::TypeMismatch, self.location, msg))
    }

    fn ground(&self, kind: GroundErrorKind, msg: String) -> ExecError {
        ExecError::Ground(GroundError::new(kind, self.statement, msg))
    }

    fn eval(&mut self, e: &Expr, env: &Env) -> Result<Value, ExecError> {
        match e {
            Expr::Num(v) => Ok(Value::Num(*v)),
            Expr::Str(s) => Ok(Value::Str(s.clone())),
            Expr::Vec(items) => {
                let mut out = [0.0; 3];
                for (slot, item) in out.iter_mut().zip(items.iter()) {
                    match self.eval(item, env)? {
                        Value::Num(v) => *slot = v,
                        other => return Err(self.type_error(format!("vector component must be a number, got {}", other.type_name()))),
                    }
                }
                Ok(Value::Vec(out.into()))
            }
            Expr::Var(name) => match env.get(name) {
                Some(v) => Ok(v.clone()),
                None if name == BOUNDS => Ok(Value::Bounds(self.scene.bounds)),
                None => Err(ExecError::Interp(InterpError::new(
                    InterpErrorKind::UndefinedSymbol,
                    self.location,
                    format!("undefined variable '{name}'"),
                ))),
            },
            Expr::Index(base, i) => {
                let v = self.eval(base, env)?;
                let out = match &v {
                    Value::Vec(p) => p.get(*i).map(Value::Num),
                    Value::Bounds(b) => b.axis(*i).map(Value::Interval),
                    Value::Interval(r) => match i {
                        0 => Some(Value::Num(r.min)),
                        1 => Some(Value::Num(r.max)),
                        _ => None,
                    },
                    _ => None,
                };
                out.ok_or_else(|| self.type_error(format!("cannot index {} with [{i}]", v.type_name())))
            }
            Expr::Bin(op, l, r) => {
                let a = self.eval(l, env)?;
                let b = self.eval(r, env)?;
                self.arith(*op, a, b)
            }
            Expr::Call(c) => self.call(c, env),
        }
    }

    fn arith(&self, op: BinOp, a: Value, b: Value) -> Result<Value, ExecError> {
        let f = |x: f64, y: f64| match op {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => x / y,
        };
        match (a, b) {
            (Value::Num(x), Value::Num(y)) => Ok(Value::Num(f(x, y))),
            (Value::Vec(u), Value::Vec(v)) => Ok(Value::Vec(u.zip(v, f))),
            (Value::Num(x), Value::Vec(v)) => Ok(Value::Vec(v.map(|c| f(x, c)))),
            (Value::Vec(u), Value::Num(y)) => Ok(Value::Vec(u.map(|c| f(c, y)))),
            (a, b) => Err(self.type_error(format!(
                "cannot apply '{}' to {} and {}",
                op.symbol(),
                a.type_name(),
                b.type_name()
            ))),
        }
    }

    fn call(&mut self, c: &Call, env: &Env) -> Result<Value, ExecError> {
        let mut args = Vec::with_capacity(c.args.len());
        for a in &c.args {
            args.push(self.eval(a, env)?);
        }
        if let Some(p) = primitive(&c.callee) {
            if args.len() != p.params.len() {
                return Err(ExecError::Interp(InterpError::new(
                    InterpErrorKind::Arity,
                    self.location,
                    format!("'{}' takes {} argument(s)", p.name, p.params.len()),
                )));
            }
            return self.primitive(p.name, args);
        }
        let Some(skill) = self.lib.get(&c.callee) else {
            return Err(ExecError::Interp(InterpError::new(
                InterpErrorKind::UndefinedSymbol,
                self.location,
                format!("undefined function '{}'", c.callee),
            )));
        };
        if args.len() != skill.params.len() {
            return Err(ExecError::Interp(InterpError::new(
                InterpErrorKind::Arity,
                self.location,
                format!("'{}' takes {} argument(s)", skill.name, skill.params.len()),
            )));
        }
        if self.depth >= MAX_CALL_DEPTH {
            return Err(self.ground(
                GroundErrorKind::ExogenousFault,
                format!("call depth exceeded {MAX_CALL_DEPTH} while expanding '{}'", skill.name),
            ));
        }
        let mut local: Env = skill.params.iter().cloned().zip(args).collect();
        self.depth += 1;
        let saved = self.location;
        let result = (|| {
            for stmt in &skill.body.statements {
                self.exec(stmt, &mut local)?;
            }
            Ok(())
        })();
        self.depth -= 1;
        self.location = saved;
        result.map(|_| Value::Unit)
    }

    fn name_arg(&self, v: &Value, prim: &str) -> Result<String, ExecError> {
        match v {
            Value::Str(s) => Ok(s.clone()),
            other => Err(self.type_error(format!("{prim} expects an object name, got {}", other.type_name()))),
        }
    }

    fn primitive(&mut self, name: &str, args: Vec<Value>) -> Result<Value, ExecError> {
        let sim = |s: &Self, e: crate::sim::SimError| ExecError::Ground(GroundError::from_sim(&e, s.statement));
        let result = match name {
            "movep" => {
                let target = match &args[0] {
                    Value::Vec(v) => *v,
                    other => return Err(self.type_error(format!("movep expects a vector, got {}", other.type_name()))),
                };
                self.scene.movep(target).map_err(|e| sim(self, e))?;
                Value::Unit
            }
            "close_gripper" => {
                self.scene.close_gripper().map_err(|e| sim(self, e))?;
                Value::Unit
            }
            "open_gripper" => {
                self.scene.open_gripper();
                Value::Unit
            }
            "go_home" => {
                self.scene.go_home();
                Value::Unit
            }
            "get_obj_position" => {
                let n = self.name_arg(&args[0], name)?;
                Value::Vec(self.scene.get_obj_position(&n).map_err(|e| sim(self, e))?)
            }
            "get_obj_dimensions" => {
                let n = self.name_arg(&args[0], name)?;
                Value::Vec(self.scene.get_obj_dimensions(&n).map_err(|e| sim(self, e))?)
            }
            "get_obj_state" => {
                let n = self.name_arg(&args[0], name)?;
                Value::Num(self.scene.get_obj_state(&n).map_err(|e| sim(self, e))?)
            }
            "abs" => match &args[0] {
                Value::Num(v) => Value::Num(v.abs()),
                Value::Vec(v) => Value::Vec(v.map(f64::abs)),
                other => return Err(self.type_error(format!("abs expects a number or vector, got {}", other.type_name()))),
            },
            "expect_near" => {
                let passed = match (&args[0], &args[1], &args[2]) {
                    (Value::Num(a), Value::Num(b), Value::Num(t)) => (a - b).abs() <= *t,
                    (Value::Vec(a), Value::Vec(b), Value::Num(t)) => {
                        let d = (*a - *b).map(f64::abs);
                        d.x <= *t && d.y <= *t && d.z <= *t
                    }
                    (a, b, t) => {
                        return Err(self.type_error(format!(
                            "expect_near cannot compare {}, {} with tolerance {}",
                            a.type_name(),
                            b.type_name(),
                            t.type_name()
                        )))
                    }
                };
                self.trace.checks.push(Check { passed, message: format!("{:?} near {:?} within {:?}", args[0], args[1], args[2]) });
                Value::Unit
            }
            "expect_less" => {
                let passed = match (&args[0], &args[1]) {
                    (Value::Num(a), Value::Num(b)) => a < b,
                    (a, b) => {
                        return Err(self.type_error(format!(
                            "expect_less compares numbers, got {} and {}",
                            a.type_name(),
                            b.type_name()
                        )))
                    }
                };
                self.trace.checks.push(Check { passed, message: format!("{:?} < {:?}", args[0], args[1]) });
                Value::Unit
            }
            other => unreachable!("unhandled primitive {other}"),
        };
        self.trace.calls.push(PrimitiveCall { name: name.to_string(), args });
        Ok(result)
    }
}

/// Interpret a program with fresh variables bound to `args`.
pub fn interpret(
    p: &Program,
    args: Env,
    lib: &SkillLibrary,
    scene: &mut Scene,
) -> Result<ExecutionTrace, (ExecError, ExecutionTrace)> {
    let mut env = args;
    interpret_in(p, &mut env, lib, scene)
}

/// Interpret a program in an existing environment (plan steps share one).
pub fn interpret_in(
    p: &Program,
    env: &mut Env,
    lib: &SkillLibrary,
    scene: &mut Scene,
) -> Result<ExecutionTrace, (ExecError, ExecutionTrace)> {
    let mut it = Interpreter::new(lib, scene);
    match it.run(p, env) {
        Ok(()) => Ok(it.trace),
        Err(e) => Err((e, it.trace)),
    }
}

/// Re-issue the world-changing calls of a trace against a scene.
pub fn replay_trace(trace: &ExecutionTrace, scene: &mut Scene) -> Result<(), crate::sim::SimError> {
    for c in trace.actions() {
        match (c.name.as_str(), c.args.first()) {
            ("movep", Some(Value::Vec(v))) => scene.movep(*v)?,
            ("close_gripper", _) => scene.close_gripper()?,
            ("open_gripper", _) => scene.open_gripper(),
            ("go_home", _) => scene.go_home(),
            _ => {}
        }
    }
    Ok(())
}
