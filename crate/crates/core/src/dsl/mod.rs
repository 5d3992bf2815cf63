//! A small pipeline language over integer lists.
//!
//! A program is a sequence of stages separated by `|`; every stage is a
//! primitive name followed by its integer arguments:
//!
//! ```text
//! program := stage ("|" stage)*
//! stage   := NAME INT*
//! ```
//!
//! Every primitive is total: partial operations on short or empty lists
//! produce `[]` instead of failing, and arithmetic saturates at
//! `±(2^31 - 1)`. The only runtime failure is running out of steps.

mod eval;
mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use eval::{evaluate, evaluate_text, EvalOutcome, EvalStatus, DEFAULT_STEP_BUDGET};
pub use parse::{parse, ParseError};

/// Largest magnitude an integer may take anywhere in the interpreter.
pub const INT_LIMIT: i64 = (1 << 31) - 1;

/// Version of the primitive table. Bumped whenever primitives are added.
pub const PRIMITIVE_SET_VERSION: u32 = 1;

macro_rules! primitives {
    ($($variant:ident => $name:literal / $arity:literal),* $(,)?) => {
        /// Every primitive the interpreter knows, with its fixed arity.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
        pub enum Primitive {
            $($variant),*
        }

        impl Primitive {
            pub const ALL: &'static [Primitive] = &[$(Primitive::$variant),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Primitive::$variant => $name),*
                }
            }

            pub fn arity(self) -> usize {
                match self {
                    $(Primitive::$variant => $arity),*
                }
            }

            pub fn from_name(name: &str) -> Option<Primitive> {
                match name {
                    $($name => Some(Primitive::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

primitives! {
    Identity => "identity" / 0,
    Reverse => "reverse" / 0,
    Sort => "sort" / 0,
    Unique => "unique" / 0,
    Head => "head" / 0,
    Tail => "tail" / 0,
    Last => "last" / 0,
    Init => "init" / 0,
    Length => "length" / 0,
    Sum => "sum" / 0,
    Max => "max" / 0,
    Min => "min" / 0,
    Take => "take" / 1,
    Drop => "drop" / 1,
    Append => "append" / 1,
    Prepend => "prepend" / 1,
    Remove => "remove" / 1,
    Count => "count" / 1,
    Add => "add" / 1,
    Sub => "sub" / 1,
    Mul => "mul" / 1,
    Mod => "mod" / 1,
    RotateLeft => "rotate_left" / 1,
    RotateRight => "rotate_right" / 1,
    Repeat => "repeat" / 1,
    FilterEven => "filter_even" / 0,
    FilterOdd => "filter_odd" / 0,
    FilterGt => "filter_gt" / 1,
    FilterLt => "filter_lt" / 1,
    Index => "index" / 1,
    Slice => "slice" / 2,
    Replace => "replace" / 2,
    Insert => "insert" / 2,
    ConcatSelf => "concat_self" / 0,
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One primitive application with its arguments.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Stage {
    primitive: Primitive,
    args: Vec<i64>,
}

impl Stage {
    /// Builds a stage, checking arity and argument domains.
    pub fn new(primitive: Primitive, args: Vec<i64>) -> Result<Stage, ParseError> {
        parse::check_stage(primitive, &args, 0)?;
        Ok(Stage { primitive, args })
    }

    pub fn primitive(&self) -> Primitive {
        self.primitive
    }

    pub fn args(&self) -> &[i64] {
        &self.args
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.primitive.name())?;
        for arg in &self.args {
            write!(f, " {arg}")?;
        }
        Ok(())
    }
}

/// A parsed, validated program. Always has at least one stage.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Program {
    stages: Vec<Stage>,
}

impl Program {
    pub fn new(stages: Vec<Stage>) -> Option<Program> {
        if stages.is_empty() {
            None
        } else {
            Some(Program { stages })
        }
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Canonical text: single spaces inside a stage, `" | "` between stages.
    pub fn pretty(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, stage) in self.stages.iter().enumerate() {
            if i > 0 {
                f.write_str(" | ")?;
            }
            write!(f, "{stage}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Program {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl Serialize for Program {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.pretty())
    }
}

impl<'de> Deserialize<'de> for Program {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Canonical form of a program text if it parses.
pub fn canonicalize(text: &str) -> Option<String> {
    parse(text).ok().map(|p| p.pretty())
}

/// A short reference of the primitive table, used in implementor prompts.
pub fn primitive_reference() -> String {
    let mut out = String::new();
    for p in Primitive::ALL {
        let args = match p.arity() {
            0 => String::new(),
            1 => " N".to_string(),
            _ => " A B".to_string(),
        };
        out.push_str(&format!("- {}{}: {}\n", p.name(), args, describe(*p)));
    }
    out
}

fn describe(p: Primitive) -> &'static str {
    use Primitive::*;
    match p {
        Identity => "return the list unchanged",
        Reverse => "reverse the list",
        Sort => "sort ascending",
        Unique => "drop repeated elements, keeping first occurrences",
        Head => "first element as a one-element list",
        Tail => "everything but the first element",
        Last => "last element as a one-element list",
        Init => "everything but the last element",
        Length => "number of elements as a one-element list",
        Sum => "sum as a one-element list",
        Max => "largest element as a one-element list",
        Min => "smallest element as a one-element list",
        Take => "first N elements",
        Drop => "all but the first N elements",
        Append => "add N at the end",
        Prepend => "add N at the start",
        Remove => "remove every occurrence of N",
        Count => "number of occurrences of N as a one-element list",
        Add => "add N to every element",
        Sub => "subtract N from every element",
        Mul => "multiply every element by N",
        Mod => "every element modulo N (N != 0)",
        RotateLeft => "rotate left by N positions",
        RotateRight => "rotate right by N positions",
        Repeat => "concatenate N copies of the list (N >= 0)",
        FilterEven => "keep even elements",
        FilterOdd => "keep odd elements",
        FilterGt => "keep elements greater than N",
        FilterLt => "keep elements less than N",
        Index => "element at 1-based position N as a one-element list",
        Slice => "elements at 1-based positions A..=B",
        Replace => "replace every A with B",
        Insert => "insert B at 1-based position A",
        ConcatSelf => "the list followed by itself",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitive_table_is_consistent() {
        assert_eq!(Primitive::ALL.len(), 34);
        for p in Primitive::ALL {
            assert_eq!(Primitive::from_name(p.name()), Some(*p));
            assert!(p.arity() <= 2);
        }
    }

    #[test]
    fn pretty_canonicalizes_spacing() {
        let p = parse("  take   2|add 1 ").unwrap();
        assert_eq!(p.pretty(), "take 2 | add 1");
    }

    #[test]
    fn serde_uses_canonical_text() {
        let p = parse("slice 2  4|reverse").unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "\"slice 2 4 | reverse\"");
        let back: Program = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
