//! The restricted skill language: straight-line programs of assignments and
//! calls over numbers, strings and 3-vectors, plus the skill library that
//! grows during exploration.

pub mod ast;
mod interp;
mod library;
mod parse;
mod validate;


use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{BinOp, Call, Expr, Location, Program, Stmt};
pub use interp::{interpret, interpret_in, replay_trace, Env, ExecError, ExecutionTrace, Interpreter, PrimitiveCall, Value};
pub use library::{parse_related, parse_signature, LibraryError, SkillDef, SkillLibrary};
pub use parse::{parse, parse_expr};
pub use validate::{validate, validate_with, Mode};

/// Name of the working-volume constant visible to every program.
pub const BOUNDS: &str = "BOUNDS";

/// Maximum nesting of skill calls during interpretation.
pub const MAX_CALL_DEPTH: usize = 16;

/// A built-in function with its documentation for prompts.
#[derive(Debug, Clone, Copy)]
pub struct Primitive {
    pub name: &'static str,
    pub params: &'static [&'static str],
    pub description: &'static str,
    /// Safe to call from a verification predicate.
    pub read_only: bool,
    /// Only available to verification predicates.
    pub verifier_only: bool,
}

impl Primitive {
    pub fn signature(&self) -> String {
        format!("{}({})", self.name, self.params.join(", "))
    }
}

pub const PRIMITIVES: &[Primitive] = &[
    Primitive {
        name: "movep",
        params: &["position"],
        description: "Move the end-effector of the robot in a straight line to the given (x, y, z) position.",
        read_only: false,
        verifier_only: false,
    },
    Primitive {
        name: "close_gripper",
        params: &[],
        description: "Close the gripper to grasp an object.",
        read_only: false,
        verifier_only: false,
    },
    Primitive {
        name: "open_gripper",
        params: &[],
        description: "Open the gripper to place an object.",
        read_only: false,
        verifier_only: false,
    },
    Primitive {
        name: "get_obj_position",
        params: &["object_name"],
        description: "Get the (x, y, z) center position of an object with the given name.",
        read_only: true,
        verifier_only: false,
    },
    Primitive {
        name: "get_obj_dimensions",
        params: &["object_name"],
        description: "Get the (width, depth, height) of an object with the given name.",
        read_only: true,
        verifier_only: false,
    },
    Primitive {
        name: "go_home",
        params: &[],
        description: "Move the gripper to the home position.",
        read_only: false,
        verifier_only: false,
    },
    Primitive {
        name: "get_obj_state",
        params: &["object_name"],
        description: "Opening fraction of an articulated object, or 1/0 for a switched object.",
        read_only: true,
        verifier_only: true,
    },
    Primitive {
        name: "abs",
        params: &["value"],
        description: "Absolute value, componentwise for vectors.",
        read_only: true,
        verifier_only: true,
    },
    Primitive {
        name: "expect_near",
        params: &["actual", "expected", "tolerance"],
        description: "Check that actual is within tolerance of expected (componentwise for vectors).",
        read_only: true,
        verifier_only: true,
    },
    Primitive {
        name: "expect_less",
        params: &["smaller", "larger"],
        description: "Check that smaller is strictly less than larger.",
        read_only: true,
        verifier_only: true,
    },
];

pub fn primitive(name: &str) -> Option<&'static Primitive> {
    PRIMITIVES.iter().find(|p| p.name == name)
}

/// Primitives a robot plan may call.
pub fn action_primitives() -> impl Iterator<Item = &'static Primitive> {
    PRIMITIVES.iter().filter(|p| !p.verifier_only)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InterpErrorKind {
    Parse,
    UndefinedSymbol,
    Arity,
    TypeMismatch,
}

/// Failure before or outside the world model: the program itself is wrong.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind:?} at {location}: {message}")]
pub struct InterpError {
    pub kind: InterpErrorKind,
    pub location: Location,
    pub message: String,
}

impl InterpError {
    pub fn new(kind: InterpErrorKind, location: Location, message: impl Into<String>) -> Self {
        InterpError { kind, location, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroundErrorKind {
    OutOfBounds,
    UnknownObject,
    AlreadyClosed,
    VerificationFailed,
    ExogenousFault,
}

impl fmt::Display for GroundErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Failure while acting in (or checking) the world.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind} at step {step_index}: {message}")]
pub struct GroundError {
    pub kind: GroundErrorKind,
    pub step_index: usize,
    pub message: String,
}

impl GroundError {
    pub fn new(kind: GroundErrorKind, step_index: usize, message: impl Into<String>) -> Self {
        GroundError { kind, step_index, message: message.into() }
    }

    pub fn from_sim(e: &crate::sim::SimError, step_index: usize) -> Self {
        use crate::sim::SimError;
        let kind = match e {
            SimError::OutOfBounds(_) => GroundErrorKind::OutOfBounds,
            SimError::UnknownObject(_) => GroundErrorKind::UnknownObject,
            SimError::AlreadyClosed => GroundErrorKind::AlreadyClosed,
            SimError::Schema(_) | SimError::Invariant(_) => GroundErrorKind::ExogenousFault,
        };
        GroundError::new(kind, step_index, e.to_string())
    }
}
