// SPDX-License-Identifier: Apache-2.0

//! Interpreter state. A [`Machine`] is cheap to clone so schedule
//! exploration can branch at every scheduling point.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::lower::{Code, Compiled, Loc, Op};
use super::{Address, Limits, TraceRecord, TraceStatus};
use crate::minilang::{AccessId, AllocSite, MemOp};

const MAX_DEPTH: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Value {
    Int(i64),
    Ref(usize),
}

impl Value {
    fn int(self) -> i64 {
        match self {
            Value::Int(v) => v,
            Value::Ref(_) => 0,
        }
    }
}

#[derive(Clone, Debug)]
struct Object {
    record: u32,
    base: ObjBase,
    fields: Vec<i64>,
}

#[derive(Clone, Debug)]
enum ObjBase {
    Global(u32),
    Heap(AllocSite, u64),
}

#[derive(Clone, Debug)]
struct Frame {
    /// Function index; `None` for the harness body.
    func: Option<u32>,
    pc: usize,
    slots: Vec<Value>,
    stack: Vec<Value>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThreadState {
    Running,
    Done,
    Faulted,
}

#[derive(Clone, Debug)]
struct Thread {
    frames: Vec<Frame>,
    state: ThreadState,
    children: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Event {
    Access(TraceRecord),
    Lock { thread: usize, mutex: String },
    Unlock { thread: usize, mutex: String },
}

/// Control-flow and execution-count side channel.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Observations {
    /// (thread, function, block, polarity) of every decision taken.
    pub edges: BTreeSet<(usize, String, usize, bool)>,
    /// (thread, access) for every executed access.
    pub accessed: BTreeSet<(usize, AccessId)>,
    pub exec_counts: BTreeMap<AccessId, u64>,
}

#[derive(Clone, Debug)]
pub struct Machine {
    code: Arc<Compiled>,
    harness: Arc<Code>,
    limits: Limits,
    scalars: Vec<i64>,
    arrays: Vec<Vec<i64>>,
    owners: Vec<Option<usize>>,
    objects: Vec<Object>,
    site_counters: BTreeMap<AllocSite, u64>,
    threads: Vec<Thread>,
    pub steps: u64,
    pub records: Vec<TraceRecord>,
    pub faults: Vec<String>,
    pub events: Option<Vec<Event>>,
    pub observations: Option<Observations>,
    out_of_steps: bool,
}

impl Machine {
    pub(crate) fn new(code: Arc<Compiled>, harness: Arc<Code>, limits: Limits) -> Machine {
        let scalars = code.scalars.iter().map(|(_, v)| *v).collect();
        let arrays = code.arrays.iter().map(|(_, n)| vec![0; *n]).collect();
        let owners = vec![None; code.mutexes.len()];
        let objects = code
            .global_records
            .iter()
            .enumerate()
            .map(|(i, g)| Object {
                record: g.record,
                base: ObjBase::Global(i as u32),
                fields: vec![0; code.record_fields[g.record as usize].len()],
            })
            .collect();
        let main = Thread {
            frames: vec![Frame {
                func: None,
                pc: 0,
                slots: vec![Value::Int(0); harness.slots],
                stack: Vec::new(),
            }],
            state: ThreadState::Running,
            children: Vec::new(),
        };
        Machine {
            code,
            harness,
            limits,
            scalars,
            arrays,
            owners,
            objects,
            site_counters: BTreeMap::new(),
            threads: vec![main],
            steps: 0,
            records: Vec::new(),
            faults: Vec::new(),
            events: None,
            observations: None,
            out_of_steps: false,
        }
    }

    fn code_of(&self, func: Option<u32>) -> &Code {
        match func {
            Some(f) => &self.code.functions[f as usize],
            None => &self.harness,
        }
    }

    fn current_op(&self, t: usize) -> Option<&Op> {
        let fr = self.threads[t].frames.last()?;
        self.code_of(fr.func).ops.get(fr.pc)
    }

    pub fn thread_count(&self) -> usize {
        self.threads.len()
    }

    pub fn thread_state(&self, t: usize) -> ThreadState {
        self.threads[t].state
    }

    /// `t` and every thread it spawned, transitively.
    pub fn descendants(&self, t: usize) -> Vec<usize> {
        let mut out = vec![t];
        let mut i = 0;
        while i < out.len() {
            out.extend(self.threads[out[i]].children.iter().copied());
            i += 1;
        }
        out
    }

    pub fn children(&self, t: usize) -> &[usize] {
        &self.threads[t].children
    }

    /// Runs every live thread up to its next event op.
    pub fn settle(&mut self) {
        for t in 0..self.threads.len() {
            self.advance(t);
        }
    }

    fn is_enabled(&self, t: usize) -> bool {
        let th = &self.threads[t];
        if th.state != ThreadState::Running {
            return false;
        }
        match self.current_op(t) {
            Some(Op::Lock(m)) => self.owners[*m as usize].is_none(),
            Some(Op::Join) => th
                .children
                .iter()
                .all(|c| self.threads[*c].state != ThreadState::Running),
            Some(Op::JoinAll) => {
                (0..self.threads.len()).all(|o| o == t || self.threads[o].state != ThreadState::Running)
            }
            Some(op) => op.is_event(),
            None => false,
        }
    }

    /// Threads whose pending event can fire now.
    pub fn enabled(&self) -> Vec<usize> {
        if self.out_of_steps {
            return Vec::new();
        }
        (0..self.threads.len()).filter(|&t| self.is_enabled(t)).collect()
    }

    pub fn status(&self) -> TraceStatus {
        if self.out_of_steps {
            TraceStatus::Incomplete
        } else if self.threads.iter().any(|t| t.state == ThreadState::Running) {
            TraceStatus::Deadlock
        } else if self.faults.is_empty() {
            TraceStatus::Complete
        } else {
            TraceStatus::Faulted
        }
    }

    fn fault(&mut self, t: usize, msg: String) {
        self.threads[t].state = ThreadState::Faulted;
        self.faults.push(format!("thread {t}: {msg}"));
    }

    fn tick(&mut self) -> bool {
        if self.steps >= self.limits.max_steps {
            self.out_of_steps = true;
            return false;
        }
        self.steps += 1;
        true
    }

    /// Executes silent ops of thread `t` until it reaches an event op or
    /// stops.
    fn advance(&mut self, t: usize) {
        while !self.out_of_steps && self.threads[t].state == ThreadState::Running {
            let Some(op) = self.current_op(t).cloned() else {
                self.threads[t].state = ThreadState::Done;
                return;
            };
            if op.is_event() || !self.tick() {
                return;
            }
            self.exec_silent(t, op);
        }
    }

    /// Fires the pending event of an enabled thread, then runs it (and any
    /// thread it spawned) to the next event.
    pub fn fire(&mut self, t: usize) {
        debug_assert!(self.is_enabled(t));
        let op = self.current_op(t).cloned().expect("enabled threads have an op");
        if !self.tick() {
            return;
        }
        let mut next_pc = self.frame(t).pc + 1;
        let mut spawned = None;
        match op {
            Op::Load(id, loc) => {
                let idx = matches!(loc, Loc::Elem(_)).then(|| self.pop(t).int());
                match self.address(t, loc, idx) {
                    Ok(addr) => {
                        let v = self.read_loc(t, loc, idx);
                        self.push(t, Value::Int(v));
                        self.record(t, MemOp::Read, id, addr);
                    }
                    Err(e) => return self.fault(t, e),
                }
            }
            Op::Store(id, loc) => {
                let v = self.pop(t).int();
                let idx = matches!(loc, Loc::Elem(_)).then(|| self.pop(t).int());
                match self.address(t, loc, idx) {
                    Ok(addr) => {
                        self.write_loc(t, loc, idx, v);
                        self.record(t, MemOp::Write, id, addr);
                    }
                    Err(e) => return self.fault(t, e),
                }
            }
            Op::Lock(m) => {
                self.owners[m as usize] = Some(t);
                self.log_lock(t, m, true);
            }
            Op::Unlock(m) => {
                if self.owners[m as usize] != Some(t) {
                    let name = self.code.mutexes[m as usize].clone();
                    return self.fault(t, format!("unlock of `{name}` which it does not hold"));
                }
                self.owners[m as usize] = None;
                self.log_lock(t, m, false);
            }
            Op::TryLock {
                mutex,
                acq_pc,
                busy_pc,
                block,
            } => {
                let free = self.owners[mutex as usize].is_none();
                if free {
                    self.owners[mutex as usize] = Some(t);
                    self.log_lock(t, mutex, true);
                }
                self.observe_edge(t, block as usize, free);
                next_pc = if free { acq_pc } else { busy_pc } as usize;
            }
            Op::Spawn { func, argc } => {
                let args = self.take_args(t, argc);
                if self.threads.len() >= self.limits.max_threads {
                    let max = self.limits.max_threads;
                    return self.fault(t, format!("spawn exceeds {max} threads"));
                }
                let code = &self.code.functions[func as usize];
                let mut slots = vec![Value::Int(0); code.slots];
                slots[..args.len()].copy_from_slice(&args);
                self.threads.push(Thread {
                    frames: vec![Frame {
                        func: Some(func),
                        pc: 0,
                        slots,
                        stack: Vec::new(),
                    }],
                    state: ThreadState::Running,
                    children: Vec::new(),
                });
                let child = self.threads.len() - 1;
                self.threads[t].children.push(child);
                spawned = Some(child);
            }
            Op::Join | Op::JoinAll => {}
            _ => unreachable!("silent ops are run by advance"),
        }
        self.frame(t).pc = next_pc;
        self.advance(t);
        if let Some(c) = spawned {
            self.advance(c);
        }
    }

    fn record(&mut self, t: usize, op: MemOp, id: AccessId, addr: Address) {
        let rec = TraceRecord {
            thread: t,
            op,
            access_id: id,
            addr,
        };
        if let Some(obs) = self.observations.as_mut() {
            obs.accessed.insert((t, id));
            *obs.exec_counts.entry(id).or_insert(0) += 1;
        }
        if let Some(ev) = self.events.as_mut() {
            ev.push(Event::Access(rec.clone()));
        }
        self.records.push(rec);
    }

    fn log_lock(&mut self, t: usize, m: u32, acquire: bool) {
        if let Some(ev) = self.events.as_mut() {
            let mutex = self.code.mutexes[m as usize].clone();
            ev.push(if acquire {
                Event::Lock { thread: t, mutex }
            } else {
                Event::Unlock { thread: t, mutex }
            });
        }
    }

    fn frame(&mut self, t: usize) -> &mut Frame {
        self.threads[t].frames.last_mut().expect("running threads have frames")
    }

    fn pop(&mut self, t: usize) -> Value {
        self.frame(t).stack.pop().expect("stack code is balanced")
    }

    fn push(&mut self, t: usize, v: Value) {
        self.frame(t).stack.push(v);
    }

    fn take_args(&mut self, t: usize, argc: u16) -> Vec<Value> {
        let st = &mut self.frame(t).stack;
        let at = st.len() - argc as usize;
        st.split_off(at)
    }

    fn exec_silent(&mut self, t: usize, op: Op) {
        let mut next_pc = self.frame(t).pc + 1;
        match op {
            Op::Int(v) => self.push(t, Value::Int(v)),
            Op::Local(s) => {
                let v = self.frame(t).slots[s as usize];
                self.push(t, v);
            }
            Op::SetLocal(s) => {
                let v = self.pop(t);
                self.frame(t).slots[s as usize] = v;
            }
            Op::Obj(g) => self.push(t, Value::Ref(g as usize)),
            Op::Poke(loc, v) => {
                let idx = matches!(loc, Loc::Elem(_)).then(|| self.pop(t).int());
                if let Err(e) = self.address(t, loc, idx) {
                    return self.fault(t, e);
                }
                self.write_loc(t, loc, idx, v);
            }
            Op::Un(u) => {
                let v = self.pop(t).int();
                self.push(t, Value::Int(u.apply(v)));
            }
            Op::Bin(b) => {
                let r = self.pop(t).int();
                let l = self.pop(t).int();
                self.push(t, Value::Int(b.apply(l, r)));
            }
            Op::ToBool => {
                let v = self.pop(t).int();
                self.push(t, Value::Int((v != 0) as i64));
            }
            Op::Jump(pc) => next_pc = pc as usize,
            Op::BrFalse(pc) => {
                if self.pop(t).int() == 0 {
                    next_pc = pc as usize;
                }
            }
            Op::Branch {
                then_pc,
                else_pc,
                block,
            } => {
                let taken = self.pop(t).int() != 0;
                self.observe_edge(t, block as usize, taken);
                next_pc = if taken { then_pc } else { else_pc } as usize;
            }
            Op::Call { func, argc } => {
                if self.threads[t].frames.len() > MAX_DEPTH {
                    return self.fault(t, format!("call depth exceeds {MAX_DEPTH}"));
                }
                let args = self.take_args(t, argc);
                self.frame(t).pc = next_pc;
                let code = &self.code.functions[func as usize];
                let mut slots = vec![Value::Int(0); code.slots];
                slots[..args.len()].copy_from_slice(&args);
                self.threads[t].frames.push(Frame {
                    func: Some(func),
                    pc: 0,
                    slots,
                    stack: Vec::new(),
                });
                return;
            }
            Op::Extern { argc } => {
                self.take_args(t, argc);
                self.push(t, Value::Int(0));
            }
            Op::Pop => {
                self.pop(t);
            }
            Op::New { slot, site, record } => {
                let counter = self.site_counters.entry(site).or_insert(0);
                *counter += 1;
                let n = self.code.record_fields[record as usize].len();
                self.objects.push(Object {
                    record,
                    base: ObjBase::Heap(site, *counter),
                    fields: vec![0; n],
                });
                let r = Value::Ref(self.objects.len() - 1);
                self.frame(t).slots[slot as usize] = r;
            }
            Op::Ret { value } => {
                let v = if value { self.pop(t) } else { Value::Int(0) };
                self.threads[t].frames.pop();
                if self.threads[t].frames.is_empty() {
                    self.threads[t].state = ThreadState::Done;
                } else {
                    self.push(t, v);
                }
                return;
            }
            _ => unreachable!("event ops are fired, not advanced"),
        }
        self.frame(t).pc = next_pc;
    }

    fn observe_edge(&mut self, t: usize, block: usize, taken: bool) {
        let Some(func) = self.threads[t].frames.last().and_then(|f| f.func) else {
            return;
        };
        if let Some(obs) = self.observations.as_mut() {
            let name = self.code.function_name(func as usize).to_string();
            obs.edges.insert((t, name, block, taken));
        }
    }

    fn object_of(&self, t: usize, slot: u16) -> Result<usize, String> {
        let fr = self.threads[t].frames.last().expect("running threads have frames");
        match fr.slots[slot as usize] {
            Value::Ref(o) => Ok(o),
            Value::Int(_) => Err("field access through a null reference".to_string()),
        }
    }

    fn object_index(&self, t: usize, loc: Loc) -> Result<usize, String> {
        match loc {
            Loc::GField(g, _) => Ok(g as usize),
            Loc::RField(slot, _) => self.object_of(t, slot),
            _ => unreachable!("only field locations name objects"),
        }
    }

    fn address(&self, t: usize, loc: Loc, idx: Option<i64>) -> Result<Address, String> {
        match loc {
            Loc::Scalar(g) => Ok(Address::Global {
                name: self.code.scalars[g as usize].0.clone(),
                field: None,
            }),
            Loc::Elem(a) => {
                let (name, len) = &self.code.arrays[a as usize];
                let i = idx.expect("element accesses carry an index");
                if i < 0 || i as usize >= *len {
                    return Err(format!("index {i} out of bounds for {name}[{len}]"));
                }
                Ok(Address::Element {
                    name: name.clone(),
                    index: i as usize,
                })
            }
            Loc::GField(_, f) | Loc::RField(_, f) => {
                let o = &self.objects[self.object_index(t, loc)?];
                let field = self.code.record_fields[o.record as usize][f as usize].clone();
                Ok(match o.base {
                    ObjBase::Global(g) => Address::Global {
                        name: self.code.global_records[g as usize].name.clone(),
                        field: Some(field),
                    },
                    ObjBase::Heap(site, counter) => Address::Heap {
                        site: site.0,
                        counter,
                        field,
                    },
                })
            }
        }
    }

    /// Reads a location whose address was already validated.
    fn read_loc(&self, t: usize, loc: Loc, idx: Option<i64>) -> i64 {
        match loc {
            Loc::Scalar(g) => self.scalars[g as usize],
            Loc::Elem(a) => self.arrays[a as usize][idx.unwrap_or(0) as usize],
            Loc::GField(_, f) | Loc::RField(_, f) => {
                let o = self.object_index(t, loc).expect("validated address");
                self.objects[o].fields[f as usize]
            }
        }
    }

    fn write_loc(&mut self, t: usize, loc: Loc, idx: Option<i64>, v: i64) {
        match loc {
            Loc::Scalar(g) => self.scalars[g as usize] = v,
            Loc::Elem(a) => self.arrays[a as usize][idx.unwrap_or(0) as usize] = v,
            Loc::GField(_, f) | Loc::RField(_, f) => {
                let o = self.object_index(t, loc).expect("validated address");
                self.objects[o].fields[f as usize] = v;
            }
        }
    }
}
