// SPDX-License-Identifier: Apache-2.0

//! Resolved syntax tree for MTC programs.
//!
//! The parser produces the `Name`/`Dot`/`Index` placeholder forms; name
//! resolution rewrites every one of them into a concrete local, parameter
//! or memory access before a [`Program`] is handed out. Downstream code can
//! treat the placeholders as unreachable.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::cfg::Cfg;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(line: u32, col: u32) -> Self {
        Pos { line, col }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Identifier of a static read or write site, assigned in source order
/// starting at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccessId(pub u32);

impl fmt::Display for AccessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifier of a `new` expression. Program sites come first, harness
/// sites continue the numbering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AllocSite(pub u32);

impl fmt::Display for AllocSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GlobalType {
    Int,
    AtomicInt,
    Mutex,
    Record(String),
    IntArray(usize),
}

impl GlobalType {
    pub fn is_scalar_int(&self) -> bool {
        matches!(self, GlobalType::Int | GlobalType::AtomicInt)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDecl {
    pub name: String,
    pub atomic: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordDecl {
    pub name: String,
    pub fields: Vec<FieldDecl>,
    pub pos: Pos,
}

impl RecordDecl {
    pub fn field(&self, name: &str) -> Option<&FieldDecl> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalDecl {
    pub name: String,
    pub ty: GlobalType,
    pub init: Option<i64>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternDecl {
    pub name: String,
    pub arity: usize,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParamType {
    Int,
    Ref(String),
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamType::Int => f.write_str("int"),
            ParamType::Ref(r) => write!(f, "ref {r}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub ty: ParamType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    pub pos: Pos,
    pub cfg: Cfg,
}

impl Function {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn int_params(&self) -> impl Iterator<Item = &Param> {
        self.params.iter().filter(|p| p.ty == ParamType::Int)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AccessKind {
    Read,
    Write,
    AtomicRead,
    AtomicWrite,
}

impl AccessKind {
    pub fn is_write(self) -> bool {
        matches!(self, AccessKind::Write | AccessKind::AtomicWrite)
    }

    pub fn is_atomic(self) -> bool {
        matches!(self, AccessKind::AtomicRead | AccessKind::AtomicWrite)
    }

    pub fn op(self) -> MemOp {
        if self.is_write() {
            MemOp::Write
        } else {
            MemOp::Read
        }
    }
}

impl fmt::Display for AccessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessKind::Read => "read",
            AccessKind::Write => "write",
            AccessKind::AtomicRead => "atomic-read",
            AccessKind::AtomicWrite => "atomic-write",
        })
    }
}

/// Read/write classification used by analysis, traces and coverage. Atomic
/// accesses map onto the plain operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MemOp {
    #[serde(rename = "R")]
    Read,
    #[serde(rename = "W")]
    Write,
}

impl fmt::Display for MemOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MemOp::Read => "R",
            MemOp::Write => "W",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Place {
    Global(String),
    GlobalField(String, String),
    Element(String, Box<Expr>),
    /// Field of the object a ref-typed parameter or local points to.
    RefField(String, String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Access {
    pub id: AccessId,
    pub kind: AccessKind,
    pub place: Place,
    pub pos: Pos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne
        )
    }

    /// Wrapping 64-bit evaluation. Division and remainder by zero yield 0.
    pub fn apply(self, a: i64, b: i64) -> i64 {
        match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::Div => {
                if b == 0 {
                    0
                } else {
                    a.wrapping_div(b)
                }
            }
            BinOp::Rem => {
                if b == 0 {
                    0
                } else {
                    a.wrapping_rem(b)
                }
            }
            BinOp::Lt => (a < b) as i64,
            BinOp::Le => (a <= b) as i64,
            BinOp::Gt => (a > b) as i64,
            BinOp::Ge => (a >= b) as i64,
            BinOp::Eq => (a == b) as i64,
            BinOp::Ne => (a != b) as i64,
            BinOp::And => (a != 0 && b != 0) as i64,
            BinOp::Or => (a != 0 || b != 0) as i64,
        }
    }
}

impl UnOp {
    pub fn apply(self, a: i64) -> i64 {
        match self {
            UnOp::Neg => a.wrapping_neg(),
            UnOp::Not => (a == 0) as i64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Int(i64),
    Local(String),
    Param(String),
    /// A global record used as an object reference (call/spawn argument).
    GlobalObj(String),
    Load(Access),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    Extern(String, Vec<Expr>),
    // Parse-only forms.
    Name(String, Pos),
    Dot(String, String, Pos),
    Index(String, Box<Expr>, Pos),
}

impl Expr {
    /// Visits this expression and its sub-expressions in textual order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Load(a) => {
                if let Place::Element(_, idx) = &a.place {
                    idx.walk(f);
                }
            }
            Expr::Unary(_, e) => e.walk(f),
            Expr::Binary(_, l, r) => {
                l.walk(f);
                r.walk(f);
            }
            Expr::Call(_, args) | Expr::Extern(_, args) => {
                for a in args {
                    a.walk(f);
                }
            }
            Expr::Index(_, e, _) => e.walk(f),
            _ => {}
        }
    }

    pub fn accesses(&self) -> Vec<&Access> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Load(a) = e {
                out.push(a);
            }
        });
        out
    }

    pub fn contains_call(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if matches!(e, Expr::Call(..)) {
                found = true;
            }
        });
        found
    }

    pub fn contains_extern(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if matches!(e, Expr::Extern(..)) {
                found = true;
            }
        });
        found
    }

    pub fn extern_calls(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |e| {
            if matches!(e, Expr::Extern(..)) {
                n += 1;
            }
        });
        n
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Expr::Int(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LValue {
    Local(String),
    Store(Access),
    // Parse-only forms.
    Name(String, Pos),
    Dot(String, String, Pos),
    Index(String, Box<Expr>, Pos),
}

impl LValue {
    pub fn access(&self) -> Option<&Access> {
        match self {
            LValue::Store(a) => Some(a),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stmt {
    Assign {
        target: LValue,
        value: Expr,
        pos: Pos,
    },
    New {
        target: String,
        record: String,
        site: AllocSite,
        pos: Pos,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
        pos: Pos,
    },
    TryLock {
        mutex: String,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
        pos: Pos,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
        pos: Pos,
    },
    Lock {
        mutex: String,
        pos: Pos,
    },
    Unlock {
        mutex: String,
        pos: Pos,
    },
    Return {
        value: Option<Expr>,
        pos: Pos,
    },
    Spawn {
        func: String,
        args: Vec<Expr>,
        pos: Pos,
    },
    Join {
        pos: Pos,
    },
    /// Expression statement; always a call or extern call.
    Call {
        expr: Expr,
        pos: Pos,
    },
}

impl Stmt {
    pub fn pos(&self) -> Pos {
        match self {
            Stmt::Assign { pos, .. }
            | Stmt::New { pos, .. }
            | Stmt::If { pos, .. }
            | Stmt::TryLock { pos, .. }
            | Stmt::While { pos, .. }
            | Stmt::Lock { pos, .. }
            | Stmt::Unlock { pos, .. }
            | Stmt::Return { pos, .. }
            | Stmt::Spawn { pos, .. }
            | Stmt::Join { pos }
            | Stmt::Call { pos, .. } => *pos,
        }
    }

    /// Memory accesses performed by a simple (non-compound) statement, in
    /// textual order.
    pub fn accesses(&self) -> Vec<&Access> {
        let mut out = Vec::new();
        match self {
            Stmt::Assign { target, value, .. } => {
                if let LValue::Store(a) = target {
                    out.push(a);
                    if let Place::Element(_, idx) = &a.place {
                        out.extend(idx.accesses());
                    }
                }
                out.extend(value.accesses());
            }
            Stmt::Return { value: Some(e), .. } | Stmt::Call { expr: e, .. } => out.extend(e.accesses()),
            Stmt::Spawn { args, .. } => {
                for a in args {
                    out.extend(a.accesses());
                }
            }
            _ => {}
        }
        out
    }

    /// Expressions evaluated by a simple statement.
    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            Stmt::Assign { target, value, .. } => {
                let mut v = Vec::new();
                if let LValue::Store(Access {
                    place: Place::Element(_, idx),
                    ..
                }) = target
                {
                    v.push(idx.as_ref());
                }
                v.push(value);
                v
            }
            Stmt::Return { value: Some(e), .. } | Stmt::Call { expr: e, .. } => vec![e],
            Stmt::Spawn { args, .. } => args.iter().collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HarnessTarget {
    Global(String),
    GlobalField(String, String),
    Element(String, usize),
    ObjectField(String, String),
}

impl fmt::Display for HarnessTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessTarget::Global(g) => f.write_str(g),
            HarnessTarget::GlobalField(g, x) | HarnessTarget::ObjectField(g, x) => {
                write!(f, "{g}.{x}")
            }
            HarnessTarget::Element(g, i) => write!(f, "{g}[{i}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HarnessArg {
    Int(i64),
    Object(String),
}

impl fmt::Display for HarnessArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessArg::Int(v) => write!(f, "{v}"),
            HarnessArg::Object(o) => f.write_str(o),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HarnessStmt {
    Assign {
        target: HarnessTarget,
        value: i64,
        pos: Pos,
    },
    New {
        name: String,
        record: String,
        site: AllocSite,
        pos: Pos,
    },
    Call {
        func: String,
        args: Vec<HarnessArg>,
        pos: Pos,
    },
    Spawn {
        func: String,
        args: Vec<HarnessArg>,
        pos: Pos,
    },
    Join {
        pos: Pos,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarnessBlock {
    pub stmts: Vec<HarnessStmt>,
    pub pos: Pos,
}

impl HarnessBlock {
    pub fn spawns(&self) -> impl Iterator<Item = (&str, &[HarnessArg])> {
        self.stmts.iter().filter_map(|s| match s {
            HarnessStmt::Spawn { func, args, .. } => Some((func.as_str(), args.as_slice())),
            _ => None,
        })
    }
}

/// One static read/write site, as listed by [`Program::access_sites`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessSite {
    pub id: AccessId,
    pub kind: AccessKind,
    pub function: String,
    pub block: usize,
    pub pos: Pos,
    /// Source rendering of the accessed place, e.g. `keys[i]` or `r.val`.
    pub place: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Program {
    pub records: Vec<RecordDecl>,
    pub globals: Vec<GlobalDecl>,
    pub externs: Vec<ExternDecl>,
    pub functions: Vec<Function>,
    pub harness: Option<HarnessBlock>,
    pub access_sites: Vec<AccessSite>,
    pub alloc_sites: u32,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn global(&self, name: &str) -> Option<&GlobalDecl> {
        self.globals.iter().find(|g| g.name == name)
    }

    pub fn record(&self, name: &str) -> Option<&RecordDecl> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn extern_decl(&self, name: &str) -> Option<&ExternDecl> {
        self.externs.iter().find(|e| e.name == name)
    }

    pub fn access(&self, id: AccessId) -> Option<&AccessSite> {
        let idx = (id.0 as usize).checked_sub(1)?;
        self.access_sites.get(idx).filter(|s| s.id == id)
    }

    pub fn is_top_level_name(&self, name: &str) -> bool {
        self.record(name).is_some()
            || self.global(name).is_some()
            || self.extern_decl(name).is_some()
            || self.function(name).is_some()
    }
}
