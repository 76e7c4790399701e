// SPDX-License-Identifier: Apache-2.0

//! Lowering of resolved functions and harness blocks to a flat op list per
//! function. Expressions become stack code so a thread can be suspended
//! before any memory access.

use std::collections::BTreeMap;

use crate::minilang::{
    AccessId, AllocSite, BinOp, Expr, Function, GlobalType, HarnessArg, HarnessBlock, HarnessStmt, HarnessTarget,
    LValue, Place, Program, Stmt, Terminator, UnOp,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Loc {
    Scalar(u32),
    /// Array element; the index is on the stack.
    Elem(u32),
    /// Field of a global record object.
    GField(u32, u32),
    /// Field of the object referenced by a frame slot.
    RField(u16, u32),
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Op {
    Int(i64),
    Local(u16),
    SetLocal(u16),
    Obj(u32),
    Load(AccessId, Loc),
    /// Value on top of the stack, array index below it for `Elem`.
    Store(AccessId, Loc),
    /// Uninstrumented harness setup write.
    Poke(Loc, i64),
    Un(UnOp),
    Bin(BinOp),
    ToBool,
    Jump(u32),
    BrFalse(u32),
    Branch {
        then_pc: u32,
        else_pc: u32,
        block: u32,
    },
    TryLock {
        mutex: u32,
        acq_pc: u32,
        busy_pc: u32,
        block: u32,
    },
    Lock(u32),
    Unlock(u32),
    Call {
        func: u32,
        argc: u16,
    },
    Extern {
        argc: u16,
    },
    Pop,
    Spawn {
        func: u32,
        argc: u16,
    },
    Join,
    JoinAll,
    New {
        slot: u16,
        site: AllocSite,
        record: u32,
    },
    Ret {
        value: bool,
    },
}

impl Op {
    /// Ops at which the scheduler may switch threads.
    pub fn is_event(&self) -> bool {
        matches!(
            self,
            Op::Load(..)
                | Op::Store(..)
                | Op::Lock(_)
                | Op::Unlock(_)
                | Op::TryLock { .. }
                | Op::Spawn { .. }
                | Op::Join
                | Op::JoinAll
        )
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Code {
    pub name: String,
    pub ops: Vec<Op>,
    pub slots: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct GlobalRecord {
    pub name: String,
    pub record: u32,
}

/// A program lowered for execution, with name tables for addresses.
#[derive(Clone, Debug)]
pub struct Compiled {
    pub(crate) functions: Vec<Code>,
    pub(crate) scalars: Vec<(String, i64)>,
    pub(crate) arrays: Vec<(String, usize)>,
    pub(crate) mutexes: Vec<String>,
    pub(crate) global_records: Vec<GlobalRecord>,
    pub(crate) record_fields: Vec<Vec<String>>,
    pub(crate) record_index: BTreeMap<String, u32>,
    fn_index: BTreeMap<String, u32>,
    scalar_index: BTreeMap<String, u32>,
    array_index: BTreeMap<String, u32>,
    mutex_index: BTreeMap<String, u32>,
    grec_index: BTreeMap<String, u32>,
}

struct Emitter<'a> {
    c: &'a Compiled,
    ops: Vec<Op>,
    slot_of: BTreeMap<String, u16>,
    /// Record type of each reference-typed slot, for field lookup.
    slot_record: BTreeMap<u16, u32>,
}

impl Compiled {
    pub fn new(p: &Program) -> Compiled {
        let mut c = Compiled {
            functions: Vec::new(),
            scalars: Vec::new(),
            arrays: Vec::new(),
            mutexes: Vec::new(),
            global_records: Vec::new(),
            record_fields: p
                .records
                .iter()
                .map(|r| r.fields.iter().map(|f| f.name.clone()).collect())
                .collect(),
            record_index: p
                .records
                .iter()
                .enumerate()
                .map(|(i, r)| (r.name.clone(), i as u32))
                .collect(),
            fn_index: p
                .functions
                .iter()
                .enumerate()
                .map(|(i, f)| (f.name.clone(), i as u32))
                .collect(),
            scalar_index: BTreeMap::new(),
            array_index: BTreeMap::new(),
            mutex_index: BTreeMap::new(),
            grec_index: BTreeMap::new(),
        };
        for g in &p.globals {
            match &g.ty {
                GlobalType::Int | GlobalType::AtomicInt => {
                    c.scalar_index.insert(g.name.clone(), c.scalars.len() as u32);
                    c.scalars.push((g.name.clone(), g.init.unwrap_or(0)));
                }
                GlobalType::IntArray(n) => {
                    c.array_index.insert(g.name.clone(), c.arrays.len() as u32);
                    c.arrays.push((g.name.clone(), *n));
                }
                GlobalType::Mutex => {
                    c.mutex_index.insert(g.name.clone(), c.mutexes.len() as u32);
                    c.mutexes.push(g.name.clone());
                }
                GlobalType::Record(r) => {
                    c.grec_index.insert(g.name.clone(), c.global_records.len() as u32);
                    c.global_records.push(GlobalRecord {
                        name: g.name.clone(),
                        record: c.record_index[r],
                    });
                }
            }
        }
        let functions = p.functions.iter().map(|f| c.lower_function(p, f)).collect();
        c.functions = functions;
        c
    }

    pub(crate) fn function_name(&self, idx: usize) -> &str {
        &self.functions[idx].name
    }

    fn field_index(&self, record: u32, field: &str) -> u32 {
        self.record_fields[record as usize]
            .iter()
            .position(|f| f == field)
            .expect("resolved fields exist") as u32
    }

    fn grec_record(&self, p: &Program, name: &str) -> u32 {
        match &p.global(name).expect("resolved globals exist").ty {
            GlobalType::Record(r) => self.record_index[r],
            _ => unreachable!("global object of non-record type"),
        }
    }

    fn lower_function(&self, p: &Program, f: &Function) -> Code {
        let mut slot_of = BTreeMap::new();
        let mut slot_record = BTreeMap::new();
        for (i, prm) in f.params.iter().enumerate() {
            slot_of.insert(prm.name.clone(), i as u16);
            if let crate::minilang::ParamType::Ref(r) = &prm.ty {
                slot_record.insert(i as u16, self.record_index[r]);
            }
        }
        let mut locals = std::collections::BTreeSet::new();
        let mut new_records = BTreeMap::new();
        for b in &f.cfg.blocks {
            for s in &b.stmts {
                match s {
                    Stmt::Assign {
                        target: LValue::Local(n),
                        ..
                    } => {
                        locals.insert(n.clone());
                    }
                    Stmt::New { target, record, .. } => {
                        locals.insert(target.clone());
                        new_records.insert(target.clone(), self.record_index[record]);
                    }
                    _ => {}
                }
                for e in s.exprs() {
                    e.walk(&mut |x| {
                        if let Expr::Local(n) = x {
                            locals.insert(n.clone());
                        }
                    });
                }
            }
            let mut scan = |e: &Expr| {
                e.walk(&mut |x| {
                    if let Expr::Local(n) = x {
                        locals.insert(n.clone());
                    }
                })
            };
            match &b.term {
                Terminator::Branch { cond, .. } => scan(cond),
                Terminator::Return { value: Some(v), .. } => scan(v),
                _ => {}
            }
        }
        for n in locals {
            let slot = slot_of.len() as u16;
            if let Some(r) = new_records.get(&n) {
                slot_record.insert(slot, *r);
            }
            slot_of.entry(n).or_insert(slot);
        }
        let mut em = Emitter {
            c: self,
            ops: Vec::new(),
            slot_of,
            slot_record,
        };
        let mut starts = vec![0u32; f.cfg.blocks.len()];
        let mut patches: Vec<(usize, usize, usize)> = Vec::new();
        for b in &f.cfg.blocks {
            starts[b.id.0] = em.ops.len() as u32;
            for s in &b.stmts {
                em.stmt(p, s);
            }
            match &b.term {
                Terminator::Jump(t) => {
                    patches.push((em.ops.len(), t.0, t.0));
                    em.ops.push(Op::Jump(0));
                }
                Terminator::Branch {
                    cond, then_to, else_to, ..
                } => {
                    em.expr(p, cond);
                    patches.push((em.ops.len(), then_to.0, else_to.0));
                    em.ops.push(Op::Branch {
                        then_pc: 0,
                        else_pc: 0,
                        block: b.id.0 as u32,
                    });
                }
                Terminator::TryLock {
                    mutex, acquired, busy, ..
                } => {
                    patches.push((em.ops.len(), acquired.0, busy.0));
                    em.ops.push(Op::TryLock {
                        mutex: self.mutex_index[mutex],
                        acq_pc: 0,
                        busy_pc: 0,
                        block: b.id.0 as u32,
                    });
                }
                Terminator::Return { value, .. } => {
                    if let Some(v) = value {
                        em.expr(p, v);
                    }
                    em.ops.push(Op::Ret { value: value.is_some() });
                }
            }
        }
        for (at, a, b) in patches {
            match &mut em.ops[at] {
                Op::Jump(t) => *t = starts[a],
                Op::Branch { then_pc, else_pc, .. } => {
                    *then_pc = starts[a];
                    *else_pc = starts[b];
                }
                Op::TryLock { acq_pc, busy_pc, .. } => {
                    *acq_pc = starts[a];
                    *busy_pc = starts[b];
                }
                _ => unreachable!("patch targets are jumps"),
            }
        }
        let slots = em.slot_of.len();
        Code {
            name: f.name.clone(),
            ops: em.ops,
            slots,
        }
    }

    /// Lowers a harness block into the code run by thread 0.
    pub(crate) fn lower_harness(&self, p: &Program, h: &HarnessBlock) -> Code {
        let mut objects: BTreeMap<String, (u16, u32)> = BTreeMap::new();
        let mut ops = Vec::new();
        let mut next_slot = 0u16;
        for s in &h.stmts {
            if let HarnessStmt::New { name, record, .. } = s {
                if !objects.contains_key(name) {
                    objects.insert(name.clone(), (next_slot, self.record_index[record]));
                    next_slot += 1;
                }
            }
        }
        let push_args = |ops: &mut Vec<Op>, args: &[HarnessArg]| {
            for a in args {
                match a {
                    HarnessArg::Int(v) => ops.push(Op::Int(*v)),
                    HarnessArg::Object(o) => match objects.get(o) {
                        Some((slot, _)) => ops.push(Op::Local(*slot)),
                        None => ops.push(Op::Obj(self.grec_index[o])),
                    },
                }
            }
        };
        for s in &h.stmts {
            match s {
                HarnessStmt::New { name, record, site, .. } => ops.push(Op::New {
                    slot: objects[name].0,
                    site: *site,
                    record: self.record_index[record],
                }),
                HarnessStmt::Assign { target, value, .. } => {
                    let loc = match target {
                        HarnessTarget::Global(g) => Loc::Scalar(self.scalar_index[g]),
                        HarnessTarget::Element(a, i) => {
                            ops.push(Op::Int(*i as i64));
                            Loc::Elem(self.array_index[a])
                        }
                        HarnessTarget::GlobalField(g, f) => {
                            let gi = self.grec_index[g];
                            Loc::GField(gi, self.field_index(self.grec_record(p, g), f))
                        }
                        HarnessTarget::ObjectField(o, f) => {
                            let (slot, rec) = objects[o];
                            Loc::RField(slot, self.field_index(rec, f))
                        }
                    };
                    ops.push(Op::Poke(loc, *value));
                }
                HarnessStmt::Call { func, args, .. } => {
                    push_args(&mut ops, args);
                    ops.push(Op::Call {
                        func: self.fn_index[func],
                        argc: args.len() as u16,
                    });
                    ops.push(Op::Pop);
                }
                HarnessStmt::Spawn { func, args, .. } => {
                    push_args(&mut ops, args);
                    ops.push(Op::Spawn {
                        func: self.fn_index[func],
                        argc: args.len() as u16,
                    });
                }
                HarnessStmt::Join { .. } => ops.push(Op::JoinAll),
            }
        }
        ops.push(Op::Ret { value: false });
        Code {
            name: "harness".to_string(),
            ops,
            slots: next_slot as usize,
        }
    }
}

impl Emitter<'_> {
    fn slot(&self, n: &str) -> u16 {
        self.slot_of[n]
    }

    fn loc(&mut self, p: &Program, place: &Place) -> Loc {
        match place {
            Place::Global(g) => Loc::Scalar(self.c.scalar_index[g]),
            Place::Element(a, idx) => {
                self.expr(p, idx);
                Loc::Elem(self.c.array_index[a])
            }
            Place::GlobalField(g, f) => {
                let gi = self.c.grec_index[g];
                Loc::GField(gi, self.c.field_index(self.c.grec_record(p, g), f))
            }
            Place::RefField(v, f) => {
                let slot = self.slot(v);
                let rec = self.slot_record[&slot];
                Loc::RField(slot, self.c.field_index(rec, f))
            }
        }
    }

    fn expr(&mut self, p: &Program, e: &Expr) {
        match e {
            Expr::Int(v) => self.ops.push(Op::Int(*v)),
            Expr::Local(n) | Expr::Param(n) => {
                let s = self.slot(n);
                self.ops.push(Op::Local(s));
            }
            Expr::GlobalObj(g) => self.ops.push(Op::Obj(self.c.grec_index[g])),
            Expr::Load(a) => {
                let loc = self.loc(p, &a.place);
                self.ops.push(Op::Load(a.id, loc));
            }
            Expr::Unary(op, x) => {
                self.expr(p, x);
                self.ops.push(Op::Un(*op));
            }
            Expr::Binary(BinOp::And, l, r) => {
                self.expr(p, l);
                let br = self.ops.len();
                self.ops.push(Op::BrFalse(0));
                self.expr(p, r);
                self.ops.push(Op::ToBool);
                let jmp = self.ops.len();
                self.ops.push(Op::Jump(0));
                let f = self.ops.len() as u32;
                self.ops.push(Op::Int(0));
                let end = self.ops.len() as u32;
                self.ops[br] = Op::BrFalse(f);
                self.ops[jmp] = Op::Jump(end);
            }
            Expr::Binary(BinOp::Or, l, r) => {
                // l || r  ==  !(!l && !r)
                self.expr(p, l);
                self.ops.push(Op::Un(UnOp::Not));
                let br = self.ops.len();
                self.ops.push(Op::BrFalse(0));
                self.expr(p, r);
                self.ops.push(Op::ToBool);
                let jmp = self.ops.len();
                self.ops.push(Op::Jump(0));
                let t = self.ops.len() as u32;
                self.ops.push(Op::Int(1));
                let end = self.ops.len() as u32;
                self.ops[br] = Op::BrFalse(t);
                self.ops[jmp] = Op::Jump(end);
            }
            Expr::Binary(op, l, r) => {
                self.expr(p, l);
                self.expr(p, r);
                self.ops.push(Op::Bin(*op));
            }
            Expr::Call(n, args) => {
                for a in args {
                    self.expr(p, a);
                }
                self.ops.push(Op::Call {
                    func: self.c.fn_index[n],
                    argc: args.len() as u16,
                });
            }
            Expr::Extern(_, args) => {
                for a in args {
                    self.expr(p, a);
                }
                self.ops.push(Op::Extern {
                    argc: args.len() as u16,
                });
            }
            Expr::Name(..) | Expr::Dot(..) | Expr::Index(..) => {
                unreachable!("placeholders are resolved before lowering")
            }
        }
    }

    fn stmt(&mut self, p: &Program, s: &Stmt) {
        match s {
            Stmt::Assign { target, value, .. } => match target {
                LValue::Local(n) => {
                    self.expr(p, value);
                    let slot = self.slot(n);
                    self.ops.push(Op::SetLocal(slot));
                }
                LValue::Store(a) => {
                    let loc = self.loc(p, &a.place);
                    self.expr(p, value);
                    self.ops.push(Op::Store(a.id, loc));
                }
                _ => unreachable!("placeholders are resolved before lowering"),
            },
            Stmt::New {
                target, record, site, ..
            } => {
                let slot = self.slot(target);
                self.ops.push(Op::New {
                    slot,
                    site: *site,
                    record: self.c.record_index[record],
                });
            }
            Stmt::Lock { mutex, .. } => self.ops.push(Op::Lock(self.c.mutex_index[mutex])),
            Stmt::Unlock { mutex, .. } => self.ops.push(Op::Unlock(self.c.mutex_index[mutex])),
            Stmt::Spawn { func, args, .. } => {
                for a in args {
                    self.expr(p, a);
                }
                self.ops.push(Op::Spawn {
                    func: self.c.fn_index[func],
                    argc: args.len() as u16,
                });
            }
            Stmt::Join { .. } => self.ops.push(Op::Join),
            Stmt::Call { expr, .. } => {
                self.expr(p, expr);
                self.ops.push(Op::Pop);
            }
            Stmt::If { .. } | Stmt::TryLock { .. } | Stmt::While { .. } | Stmt::Return { .. } => {
                unreachable!("compound statements live in terminators")
            }
        }
    }
}
