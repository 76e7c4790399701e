// SPDX-License-Identifier: Apache-2.0

//! Name resolution, type checking and id assignment.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::ast::*;
use super::cfg::{build_cfg, Terminator};
use super::parser::RawProgram;
use super::printer::place_text;
use super::ParseError;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Ty {
    Int,
    Ref(String),
}

fn type_err<T>(pos: Pos, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError::Type { pos, msg: msg.into() })
}

fn unresolved<T>(pos: Pos, name: &str) -> Result<T, ParseError> {
    Err(ParseError::Unresolved {
        pos,
        name: name.to_string(),
    })
}

/// Top-level declarations visible to every function and to harnesses.
pub(crate) struct Globals<'a> {
    records: HashMap<&'a str, &'a RecordDecl>,
    globals: HashMap<&'a str, &'a GlobalDecl>,
    externs: HashMap<&'a str, &'a ExternDecl>,
    functions: HashMap<&'a str, &'a [Param]>,
}

impl<'a> Globals<'a> {
    fn is_callable_or_record(&self, name: &str) -> bool {
        self.functions.contains_key(name) || self.externs.contains_key(name) || self.records.contains_key(name)
    }

    fn record(&self, pos: Pos, name: &str) -> Result<&'a RecordDecl, ParseError> {
        match self.records.get(name) {
            Some(r) => Ok(r),
            None => unresolved(pos, name),
        }
    }
}

struct Scope<'a> {
    params: HashMap<&'a str, &'a ParamType>,
    locals: HashMap<String, Ty>,
}

struct Ids {
    next_access: u32,
    next_site: u32,
}

impl Ids {
    fn access(&mut self) -> AccessId {
        self.next_access += 1;
        AccessId(self.next_access)
    }

    fn site(&mut self) -> AllocSite {
        self.next_site += 1;
        AllocSite(self.next_site)
    }
}

struct FnResolver<'a, 'g> {
    g: &'g Globals<'a>,
    scope: Scope<'a>,
    ids: &'g mut Ids,
}

impl<'a, 'g> FnResolver<'a, 'g> {
    fn field_kind(rec: &RecordDecl, field: &str, pos: Pos, write: bool) -> Result<AccessKind, ParseError> {
        let Some(f) = rec.field(field) else {
            return type_err(pos, format!("record `{}` has no field `{field}`", rec.name));
        };
        Ok(match (f.atomic, write) {
            (false, false) => AccessKind::Read,
            (false, true) => AccessKind::Write,
            (true, false) => AccessKind::AtomicRead,
            (true, true) => AccessKind::AtomicWrite,
        })
    }

    fn ref_type_of(&self, name: &str) -> Option<String> {
        if let Some(ParamType::Ref(r)) = self.scope.params.get(name) {
            return Some(r.clone());
        }
        if let Some(Ty::Ref(r)) = self.scope.locals.get(name) {
            return Some(r.clone());
        }
        None
    }

    fn dot_place(&mut self, base: &str, field: &str, pos: Pos, write: bool) -> Result<Access, ParseError> {
        if let Some(rec_name) = self.ref_type_of(base) {
            let rec = self.g.record(pos, &rec_name)?;
            let kind = Self::field_kind(rec, field, pos, write)?;
            return Ok(Access {
                id: self.ids.access(),
                kind,
                place: Place::RefField(base.to_string(), field.to_string()),
                pos,
            });
        }
        if self.scope.params.contains_key(base) || self.scope.locals.contains_key(base) {
            return type_err(pos, format!("`{base}` is not a record reference"));
        }
        match self.g.globals.get(base) {
            Some(GlobalDecl {
                ty: GlobalType::Record(r),
                ..
            }) => {
                let rec = self.g.record(pos, r)?;
                let kind = Self::field_kind(rec, field, pos, write)?;
                Ok(Access {
                    id: self.ids.access(),
                    kind,
                    place: Place::GlobalField(base.to_string(), field.to_string()),
                    pos,
                })
            }
            Some(_) => type_err(pos, format!("global `{base}` is not a record")),
            None => unresolved(pos, base),
        }
    }

    fn index_place(&mut self, base: &str, idx: &Expr, pos: Pos, write: bool) -> Result<Access, ParseError> {
        let len = match self.g.globals.get(base) {
            Some(GlobalDecl {
                ty: GlobalType::IntArray(n),
                ..
            }) => *n,
            Some(_) => return type_err(pos, format!("`{base}` is not an array")),
            None if self.scope.params.contains_key(base) || self.scope.locals.contains_key(base) => {
                return type_err(pos, format!("`{base}` is not an array"))
            }
            None => return unresolved(pos, base),
        };
        let id = self.ids.access();
        let (idx, ty) = self.expr(idx)?;
        if ty != Ty::Int {
            return type_err(pos, "array index must be an integer");
        }
        if let Some(k) = idx.as_int() {
            if k < 0 || k as usize >= len {
                return type_err(pos, format!("index {k} out of bounds for `{base}[{len}]`"));
            }
        }
        Ok(Access {
            id,
            kind: if write { AccessKind::Write } else { AccessKind::Read },
            place: Place::Element(base.to_string(), Box::new(idx)),
            pos,
        })
    }

    fn expr(&mut self, e: &Expr) -> Result<(Expr, Ty), ParseError> {
        match e {
            Expr::Int(v) => Ok((Expr::Int(*v), Ty::Int)),
            Expr::Name(n, pos) => {
                if let Some(pt) = self.scope.params.get(n.as_str()) {
                    let ty = match pt {
                        ParamType::Int => Ty::Int,
                        ParamType::Ref(r) => Ty::Ref(r.clone()),
                    };
                    return Ok((Expr::Param(n.clone()), ty));
                }
                if let Some(g) = self.g.globals.get(n.as_str()) {
                    return match &g.ty {
                        GlobalType::Int | GlobalType::AtomicInt => {
                            let kind = if g.ty == GlobalType::AtomicInt {
                                AccessKind::AtomicRead
                            } else {
                                AccessKind::Read
                            };
                            Ok((
                                Expr::Load(Access {
                                    id: self.ids.access(),
                                    kind,
                                    place: Place::Global(n.clone()),
                                    pos: *pos,
                                }),
                                Ty::Int,
                            ))
                        }
                        GlobalType::Record(r) => Ok((Expr::GlobalObj(n.clone()), Ty::Ref(r.clone()))),
                        GlobalType::Mutex => type_err(*pos, format!("mutex `{n}` used as a value")),
                        GlobalType::IntArray(_) => type_err(*pos, format!("array `{n}` used without an index")),
                    };
                }
                if let Some(ty) = self.scope.locals.get(n) {
                    return Ok((Expr::Local(n.clone()), ty.clone()));
                }
                if self.g.functions.contains_key(n.as_str()) || self.g.externs.contains_key(n.as_str()) {
                    return type_err(*pos, format!("function `{n}` used as a value"));
                }
                unresolved(*pos, n)
            }
            Expr::Dot(b, f, pos) => Ok((Expr::Load(self.dot_place(b, f, *pos, false)?), Ty::Int)),
            Expr::Index(b, idx, pos) => Ok((Expr::Load(self.index_place(b, idx, *pos, false)?), Ty::Int)),
            Expr::Unary(op, inner) => {
                let (inner, ty) = self.expr(inner)?;
                if ty != Ty::Int {
                    return type_err(Pos::default(), "arithmetic on a record reference");
                }
                Ok((Expr::Unary(*op, Box::new(inner)), Ty::Int))
            }
            Expr::Binary(op, l, r) => {
                let (l, lt) = self.expr(l)?;
                let (r, rt) = self.expr(r)?;
                if lt != Ty::Int || rt != Ty::Int {
                    return type_err(Pos::default(), "arithmetic on a record reference");
                }
                Ok((Expr::Binary(*op, Box::new(l), Box::new(r)), Ty::Int))
            }
            Expr::Call(name, args) => self.call(name, args, Pos::default()),
            Expr::Local(_) | Expr::Param(_) | Expr::GlobalObj(_) | Expr::Load(_) | Expr::Extern(..) => {
                Ok((e.clone(), Ty::Int))
            }
        }
    }

    fn call(&mut self, name: &str, args: &[Expr], pos: Pos) -> Result<(Expr, Ty), ParseError> {
        if let Some(params) = self.g.functions.get(name) {
            let args = self.typed_args(name, params, args, pos)?;
            return Ok((Expr::Call(name.to_string(), args), Ty::Int));
        }
        if let Some(ext) = self.g.externs.get(name) {
            if args.len() != ext.arity {
                return type_err(
                    pos,
                    format!("extern `{name}` takes {} arguments, got {}", ext.arity, args.len()),
                );
            }
            let mut out = Vec::new();
            for a in args {
                let (a, ty) = self.expr(a)?;
                if ty != Ty::Int {
                    return type_err(pos, format!("extern `{name}` takes only integers"));
                }
                out.push(a);
            }
            return Ok((Expr::Extern(name.to_string(), out), Ty::Int));
        }
        unresolved(pos, name)
    }

    fn typed_args(&mut self, name: &str, params: &[Param], args: &[Expr], pos: Pos) -> Result<Vec<Expr>, ParseError> {
        if params.len() != args.len() {
            return type_err(
                pos,
                format!("`{name}` takes {} arguments, got {}", params.len(), args.len()),
            );
        }
        let mut out = Vec::new();
        for (p, a) in params.iter().zip(args) {
            let (a, ty) = self.expr(a)?;
            let ok = match (&p.ty, &ty) {
                (ParamType::Int, Ty::Int) => true,
                (ParamType::Ref(want), Ty::Ref(got)) => want == got,
                _ => false,
            };
            if !ok {
                return type_err(pos, format!("argument `{}` of `{name}` expects {}", p.name, p.ty));
            }
            out.push(a);
        }
        Ok(out)
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<Vec<Stmt>, ParseError> {
        let mut out = Vec::with_capacity(stmts.len());
        for (i, s) in stmts.iter().enumerate() {
            if matches!(s, Stmt::Return { .. }) && i + 1 != stmts.len() {
                return Err(ParseError::Syntax {
                    pos: stmts[i + 1].pos(),
                    msg: "unreachable code after return".into(),
                });
            }
            out.push(self.stmt(s)?);
        }
        Ok(out)
    }

    fn check_mutex(&self, m: &str, pos: Pos, what: &str) -> Result<(), ParseError> {
        match self.g.globals.get(m) {
            Some(GlobalDecl {
                ty: GlobalType::Mutex, ..
            }) => Ok(()),
            Some(_) => type_err(pos, format!("{what} on non-mutex `{m}`")),
            None if self.scope.params.contains_key(m) || self.scope.locals.contains_key(m) => {
                type_err(pos, format!("{what} on non-mutex `{m}`"))
            }
            None => unresolved(pos, m),
        }
    }

    fn stmt(&mut self, s: &Stmt) -> Result<Stmt, ParseError> {
        Ok(match s {
            Stmt::Assign { target, value, pos } => {
                let target = match target {
                    LValue::Name(n, p) => {
                        if self.scope.params.contains_key(n.as_str()) {
                            return type_err(*p, format!("cannot assign to parameter `{n}`"));
                        }
                        if let Some(g) = self.g.globals.get(n.as_str()) {
                            let kind = match g.ty {
                                GlobalType::Int => AccessKind::Write,
                                GlobalType::AtomicInt => AccessKind::AtomicWrite,
                                _ => return type_err(*p, format!("cannot assign to `{n}`")),
                            };
                            LValue::Store(Access {
                                id: self.ids.access(),
                                kind,
                                place: Place::Global(n.clone()),
                                pos: *p,
                            })
                        } else {
                            match self.scope.locals.get(n) {
                                Some(Ty::Int) => LValue::Local(n.clone()),
                                Some(Ty::Ref(_)) => {
                                    return type_err(*p, format!("reference `{n}` can only be bound with `new`"))
                                }
                                None => return unresolved(*p, n),
                            }
                        }
                    }
                    LValue::Dot(b, f, p) => LValue::Store(self.dot_place(b, f, *p, true)?),
                    LValue::Index(b, idx, p) => LValue::Store(self.index_place(b, idx, *p, true)?),
                    LValue::Local(_) | LValue::Store(_) => target.clone(),
                };
                let (value, ty) = self.expr(value)?;
                if ty != Ty::Int {
                    return type_err(*pos, "cannot store a record reference");
                }
                Stmt::Assign {
                    target,
                    value,
                    pos: *pos,
                }
            }
            Stmt::New {
                target, record, pos, ..
            } => {
                self.g.record(*pos, record)?;
                Stmt::New {
                    target: target.clone(),
                    record: record.clone(),
                    site: self.ids.site(),
                    pos: *pos,
                }
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
                pos,
            } => {
                let (cond, ty) = self.expr(cond)?;
                if ty != Ty::Int {
                    return type_err(*pos, "condition must be an integer");
                }
                Stmt::If {
                    cond,
                    then_body: self.block(then_body)?,
                    else_body: self.block(else_body)?,
                    pos: *pos,
                }
            }
            Stmt::TryLock {
                mutex,
                then_body,
                else_body,
                pos,
            } => {
                self.check_mutex(mutex, *pos, "trylock")?;
                Stmt::TryLock {
                    mutex: mutex.clone(),
                    then_body: self.block(then_body)?,
                    else_body: self.block(else_body)?,
                    pos: *pos,
                }
            }
            Stmt::While { cond, body, pos } => {
                let (cond, ty) = self.expr(cond)?;
                if ty != Ty::Int {
                    return type_err(*pos, "condition must be an integer");
                }
                Stmt::While {
                    cond,
                    body: self.block(body)?,
                    pos: *pos,
                }
            }
            Stmt::Lock { mutex, pos } => {
                self.check_mutex(mutex, *pos, "lock")?;
                s.clone()
            }
            Stmt::Unlock { mutex, pos } => {
                self.check_mutex(mutex, *pos, "unlock")?;
                s.clone()
            }
            Stmt::Return { value, pos } => {
                let value = match value {
                    Some(v) => {
                        let (v, ty) = self.expr(v)?;
                        if ty != Ty::Int {
                            return type_err(*pos, "functions return integers");
                        }
                        Some(v)
                    }
                    None => None,
                };
                Stmt::Return { value, pos: *pos }
            }
            Stmt::Spawn { func, args, pos } => {
                let Some(params) = self.g.functions.get(func.as_str()) else {
                    if self.g.externs.contains_key(func.as_str()) {
                        return type_err(*pos, format!("cannot spawn extern `{func}`"));
                    }
                    return unresolved(*pos, func);
                };
                let args = self.typed_args(func, params, args, *pos)?;
                Stmt::Spawn {
                    func: func.clone(),
                    args,
                    pos: *pos,
                }
            }
            Stmt::Join { .. } => s.clone(),
            Stmt::Call { expr, pos } => {
                let Expr::Call(name, args) = expr else {
                    return type_err(*pos, "expression statement must be a call");
                };
                let (expr, _) = self.call(name, args, *pos)?;
                Stmt::Call { expr, pos: *pos }
            }
        })
    }
}

/// Collects local variable types: `x = new N` makes `x: ref N`, any other
/// assignment to an unknown bare name makes it an integer local.
fn collect_locals(
    body: &[Stmt],
    params: &HashMap<&str, &ParamType>,
    g: &Globals<'_>,
    out: &mut BTreeMap<String, (Ty, Pos)>,
) -> Result<(), ParseError> {
    for s in body {
        match s {
            Stmt::Assign {
                target: LValue::Name(n, pos),
                ..
            } => {
                if params.contains_key(n.as_str()) || g.globals.contains_key(n.as_str()) {
                    continue;
                }
                if g.is_callable_or_record(n) {
                    return type_err(*pos, format!("cannot assign to `{n}`"));
                }
                match out.get(n) {
                    Some((Ty::Ref(_), _)) => return type_err(*pos, format!("`{n}` is a reference and an integer")),
                    Some(_) => {}
                    None => {
                        out.insert(n.clone(), (Ty::Int, *pos));
                    }
                }
            }
            Stmt::New {
                target, record, pos, ..
            } => {
                if params.contains_key(target.as_str()) || g.globals.contains_key(target.as_str()) {
                    return type_err(*pos, format!("`new` must bind a local, `{target}` is not one"));
                }
                match out.get(target) {
                    Some((Ty::Ref(r), _)) if r == record => {}
                    Some(_) => return type_err(*pos, format!("conflicting types for local `{target}`")),
                    None => {
                        out.insert(target.clone(), (Ty::Ref(record.clone()), *pos));
                    }
                }
            }
            Stmt::If {
                then_body, else_body, ..
            }
            | Stmt::TryLock {
                then_body, else_body, ..
            } => {
                collect_locals(then_body, params, g, out)?;
                collect_locals(else_body, params, g, out)?;
            }
            Stmt::While { body, .. } => collect_locals(body, params, g, out)?,
            _ => {}
        }
    }
    Ok(())
}

fn block_end(body: &[Stmt], fallback: Pos) -> Pos {
    fn last_line(stmts: &[Stmt]) -> Option<u32> {
        let s = stmts.last()?;
        let nested = match s {
            Stmt::If {
                then_body, else_body, ..
            }
            | Stmt::TryLock {
                then_body, else_body, ..
            } => last_line(else_body).or_else(|| last_line(then_body)),
            Stmt::While { body, .. } => last_line(body),
            _ => None,
        };
        Some(nested.unwrap_or(s.pos().line))
    }
    match last_line(body) {
        Some(l) => Pos::new(l, 1),
        None => fallback,
    }
}

pub(crate) fn resolve_program(raw: RawProgram) -> Result<Program, ParseError> {
    // Duplicate top-level names share one namespace.
    let mut seen: HashSet<&str> = HashSet::new();
    let names = raw
        .records
        .iter()
        .map(|r| (r.name.as_str(), r.pos))
        .chain(raw.globals.iter().map(|g| (g.name.as_str(), g.pos)))
        .chain(raw.externs.iter().map(|e| (e.name.as_str(), e.pos)))
        .chain(raw.functions.iter().map(|f| (f.name.as_str(), f.pos)));
    let mut ordered: Vec<(&str, Pos)> = names.collect();
    ordered.sort_by_key(|(_, p)| *p);
    for (n, pos) in ordered {
        if !seen.insert(n) {
            return type_err(pos, format!("duplicate top-level name `{n}`"));
        }
    }

    for r in &raw.records {
        let mut fields = HashSet::new();
        for f in &r.fields {
            if !fields.insert(f.name.as_str()) {
                return type_err(r.pos, format!("duplicate field `{}` in `{}`", f.name, r.name));
            }
        }
    }

    let g = Globals {
        records: raw.records.iter().map(|r| (r.name.as_str(), r)).collect(),
        globals: raw.globals.iter().map(|d| (d.name.as_str(), d)).collect(),
        externs: raw.externs.iter().map(|e| (e.name.as_str(), e)).collect(),
        functions: raw
            .functions
            .iter()
            .map(|f| (f.name.as_str(), f.params.as_slice()))
            .collect(),
    };

    for d in &raw.globals {
        match &d.ty {
            GlobalType::Record(r) => {
                g.record(d.pos, r)?;
            }
            GlobalType::IntArray(0) => return type_err(d.pos, "arrays need at least one element"),
            _ => {}
        }
        if d.init.is_some() && !d.ty.is_scalar_int() {
            return type_err(d.pos, format!("`{}` cannot have an initializer", d.name));
        }
    }

    let mut ids = Ids {
        next_access: 0,
        next_site: 0,
    };
    let mut functions = Vec::new();
    for f in &raw.functions {
        let mut params = HashMap::new();
        for p in &f.params {
            if params.insert(p.name.as_str(), &p.ty).is_some() {
                return type_err(f.pos, format!("duplicate parameter `{}`", p.name));
            }
            if g.globals.contains_key(p.name.as_str()) {
                return type_err(f.pos, format!("parameter `{}` shadows a global", p.name));
            }
            if let ParamType::Ref(r) = &p.ty {
                g.record(f.pos, r)?;
            }
        }
        let mut locals = BTreeMap::new();
        collect_locals(&f.body, &params, &g, &mut locals)?;
        let scope = Scope {
            params,
            locals: locals.into_iter().map(|(k, (t, _))| (k, t)).collect(),
        };
        let mut fr = FnResolver {
            g: &g,
            scope,
            ids: &mut ids,
        };
        let body = fr.block(&f.body)?;
        let cfg = build_cfg(&body, f.pos.line, block_end(&body, f.pos))?;
        functions.push(Function {
            name: f.name.clone(),
            params: f.params.clone(),
            body,
            pos: f.pos,
            cfg,
        });
    }

    let mut program = Program {
        records: raw.records.clone(),
        globals: raw.globals.clone(),
        externs: raw.externs.clone(),
        functions,
        harness: None,
        access_sites: Vec::new(),
        alloc_sites: ids.next_site,
    };
    program.access_sites = collect_sites(&program);
    debug_assert_eq!(program.access_sites.len() as u32, ids.next_access);
    if let Some(h) = &raw.harness {
        program.harness = Some(resolve_harness(h, &program, &g)?);
    }
    Ok(program)
}

fn collect_sites(p: &Program) -> Vec<AccessSite> {
    let mut sites = Vec::new();
    for f in &p.functions {
        for b in &f.cfg.blocks {
            let mut push = |a: &Access| {
                sites.push(AccessSite {
                    id: a.id,
                    kind: a.kind,
                    function: f.name.clone(),
                    block: b.id.0,
                    pos: a.pos,
                    place: place_text(&a.place),
                })
            };
            for s in &b.stmts {
                for a in s.accesses() {
                    push(a);
                }
            }
            match &b.term {
                Terminator::Branch { cond, .. } => cond.accesses().into_iter().for_each(&mut push),
                Terminator::Return { value: Some(v), .. } => v.accesses().into_iter().for_each(&mut push),
                _ => {}
            }
        }
    }
    sites.sort_by_key(|s| s.id);
    sites
}

pub(crate) fn globals_of(p: &Program) -> Globals<'_> {
    Globals {
        records: p.records.iter().map(|r| (r.name.as_str(), r)).collect(),
        globals: p.globals.iter().map(|d| (d.name.as_str(), d)).collect(),
        externs: p.externs.iter().map(|e| (e.name.as_str(), e)).collect(),
        functions: p
            .functions
            .iter()
            .map(|f| (f.name.as_str(), f.params.as_slice()))
            .collect(),
    }
}

pub(crate) fn resolve_harness(h: &HarnessBlock, p: &Program, g: &Globals<'_>) -> Result<HarnessBlock, ParseError> {
    let mut objects: HashMap<String, String> = HashMap::new();
    let mut next_site = p.alloc_sites;
    let mut stmts = Vec::new();
    let object_record = |objects: &HashMap<String, String>, name: &str| -> Option<String> {
        if let Some(r) = objects.get(name) {
            return Some(r.clone());
        }
        match g.globals.get(name) {
            Some(GlobalDecl {
                ty: GlobalType::Record(r),
                ..
            }) => Some(r.clone()),
            _ => None,
        }
    };
    let check_args = |objects: &HashMap<String, String>, func: &str, args: &[HarnessArg], pos: Pos| {
        let Some(params) = g.functions.get(func) else {
            return unresolved(pos, func);
        };
        if params.len() != args.len() {
            return type_err(
                pos,
                format!("`{func}` takes {} arguments, got {}", params.len(), args.len()),
            );
        }
        for (prm, a) in params.iter().zip(args) {
            match (&prm.ty, a) {
                (ParamType::Int, HarnessArg::Int(_)) => {}
                (ParamType::Ref(want), HarnessArg::Object(o)) => match object_record(objects, o) {
                    Some(r) if &r == want => {}
                    Some(r) => {
                        return type_err(
                            pos,
                            format!("argument `{}` of `{func}` expects ref {want}, `{o}` is {r}", prm.name),
                        )
                    }
                    None => return unresolved(pos, o),
                },
                _ => return type_err(pos, format!("argument `{}` of `{func}` expects {}", prm.name, prm.ty)),
            }
        }
        Ok(())
    };
    for s in &h.stmts {
        let resolved = match s {
            HarnessStmt::New { name, record, pos, .. } => {
                g.record(*pos, record)?;
                if p.is_top_level_name(name) || objects.contains_key(name) {
                    return type_err(*pos, format!("harness object `{name}` already defined"));
                }
                objects.insert(name.clone(), record.clone());
                next_site += 1;
                HarnessStmt::New {
                    name: name.clone(),
                    record: record.clone(),
                    site: AllocSite(next_site),
                    pos: *pos,
                }
            }
            HarnessStmt::Assign { target, value, pos } => {
                let target = match target {
                    HarnessTarget::Global(n) => match g.globals.get(n.as_str()) {
                        Some(d) if d.ty.is_scalar_int() => target.clone(),
                        Some(_) => return type_err(*pos, format!("cannot assign to `{n}`")),
                        None => return unresolved(*pos, n),
                    },
                    HarnessTarget::ObjectField(o, f) | HarnessTarget::GlobalField(o, f) => {
                        let Some(rec) = object_record(&objects, o) else {
                            return unresolved(*pos, o);
                        };
                        let rec = g.record(*pos, &rec)?;
                        if rec.field(f).is_none() {
                            return type_err(*pos, format!("record `{}` has no field `{f}`", rec.name));
                        }
                        if objects.contains_key(o) {
                            HarnessTarget::ObjectField(o.clone(), f.clone())
                        } else {
                            HarnessTarget::GlobalField(o.clone(), f.clone())
                        }
                    }
                    HarnessTarget::Element(a, i) => match g.globals.get(a.as_str()) {
                        Some(GlobalDecl {
                            ty: GlobalType::IntArray(n),
                            ..
                        }) if i < n => target.clone(),
                        Some(GlobalDecl {
                            ty: GlobalType::IntArray(n),
                            ..
                        }) => return type_err(*pos, format!("index {i} out of bounds for `{a}[{n}]`")),
                        Some(_) => return type_err(*pos, format!("`{a}` is not an array")),
                        None => return unresolved(*pos, a),
                    },
                };
                HarnessStmt::Assign {
                    target,
                    value: *value,
                    pos: *pos,
                }
            }
            HarnessStmt::Call { func, args, pos } | HarnessStmt::Spawn { func, args, pos } => {
                if g.externs.contains_key(func.as_str()) {
                    return type_err(*pos, format!("harness cannot invoke extern `{func}`"));
                }
                check_args(&objects, func, args, *pos)?;
                s.clone()
            }
            HarnessStmt::Join { .. } => s.clone(),
        };
        stmts.push(resolved);
    }
    Ok(HarnessBlock { stmts, pos: h.pos })
}
