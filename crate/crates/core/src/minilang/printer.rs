// SPDX-License-Identifier: Apache-2.0

//! Canonical source printer. Printing a parsed program and parsing the
//! output yields the same tree up to source positions.

use std::fmt::Write;

use super::ast::*;

pub fn place_text(p: &Place) -> String {
    match p {
        Place::Global(g) => g.clone(),
        Place::GlobalField(b, f) | Place::RefField(b, f) => format!("{b}.{f}"),
        Place::Element(a, idx) => format!("{a}[{}]", expr_text(idx)),
    }
}

pub fn expr_text(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn expr_prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary(op, ..) => op.precedence(),
        Expr::Unary(..) => 7,
        _ => 8,
    }
}

fn write_expr(out: &mut String, e: &Expr, min_prec: u8) {
    let prec = expr_prec(e);
    let paren = prec < min_prec;
    if paren {
        out.push('(');
    }
    match e {
        Expr::Int(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Local(n) | Expr::Param(n) | Expr::GlobalObj(n) | Expr::Name(n, _) => out.push_str(n),
        Expr::Load(a) => out.push_str(&place_text(&a.place)),
        Expr::Dot(b, f, _) => {
            let _ = write!(out, "{b}.{f}");
        }
        Expr::Index(b, idx, _) => {
            let _ = write!(out, "{b}[{}]", expr_text(idx));
        }
        Expr::Unary(op, inner) => {
            out.push(match op {
                UnOp::Neg => '-',
                UnOp::Not => '!',
            });
            // `-5` would re-parse as a folded literal.
            if *op == UnOp::Neg && matches!(**inner, Expr::Int(v) if v >= 0) {
                write_expr(out, inner, 9);
            } else {
                write_expr(out, inner, 7);
            }
        }
        Expr::Binary(op, l, r) => {
            write_expr(out, l, prec);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, r, prec + 1);
        }
        Expr::Call(name, args) | Expr::Extern(name, args) => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a, 0);
            }
            out.push(')');
        }
    }
    if paren {
        out.push(')');
    }
}

fn lvalue_text(lv: &LValue) -> String {
    match lv {
        LValue::Local(n) | LValue::Name(n, _) => n.clone(),
        LValue::Store(a) => place_text(&a.place),
        LValue::Dot(b, f, _) => format!("{b}.{f}"),
        LValue::Index(b, idx, _) => format!("{b}[{}]", expr_text(idx)),
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

fn write_block(out: &mut String, stmts: &[Stmt], depth: usize) {
    out.push_str("{\n");
    for s in stmts {
        write_stmt(out, s, depth + 1);
    }
    indent(out, depth);
    out.push('}');
}

fn write_if_tail(out: &mut String, else_body: &[Stmt], depth: usize) {
    if else_body.is_empty() {
        out.push('\n');
        return;
    }
    out.push_str(" else ");
    if let [Stmt::If {
        cond,
        then_body,
        else_body,
        ..
    }] = else_body
    {
        let _ = write!(out, "if ({}) ", expr_text(cond));
        write_block(out, then_body, depth);
        write_if_tail(out, else_body, depth);
    } else {
        write_block(out, else_body, depth);
        out.push('\n');
    }
}

fn args_text(args: &[Expr]) -> String {
    args.iter().map(expr_text).collect::<Vec<_>>().join(", ")
}

fn write_stmt(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    match s {
        Stmt::Assign { target, value, .. } => {
            let _ = writeln!(out, "{} = {};", lvalue_text(target), expr_text(value));
        }
        Stmt::New { target, record, .. } => {
            let _ = writeln!(out, "{target} = new {record};");
        }
        Stmt::If {
            cond,
            then_body,
            else_body,
            ..
        } => {
            let _ = write!(out, "if ({}) ", expr_text(cond));
            write_block(out, then_body, depth);
            write_if_tail(out, else_body, depth);
        }
        Stmt::TryLock {
            mutex,
            then_body,
            else_body,
            ..
        } => {
            let _ = write!(out, "if trylock {mutex} ");
            write_block(out, then_body, depth);
            if else_body.is_empty() {
                out.push('\n');
            } else {
                out.push_str(" else ");
                write_block(out, else_body, depth);
                out.push('\n');
            }
        }
        Stmt::While { cond, body, .. } => {
            let _ = write!(out, "while ({}) ", expr_text(cond));
            write_block(out, body, depth);
            out.push('\n');
        }
        Stmt::Lock { mutex, .. } => {
            let _ = writeln!(out, "lock {mutex};");
        }
        Stmt::Unlock { mutex, .. } => {
            let _ = writeln!(out, "unlock {mutex};");
        }
        Stmt::Return { value, .. } => match value {
            Some(v) => {
                let _ = writeln!(out, "return {};", expr_text(v));
            }
            None => out.push_str("return;\n"),
        },
        Stmt::Spawn { func, args, .. } => {
            let _ = writeln!(out, "spawn {func}({});", args_text(args));
        }
        Stmt::Join { .. } => out.push_str("join;\n"),
        Stmt::Call { expr, .. } => {
            let _ = writeln!(out, "{};", expr_text(expr));
        }
    }
}

pub fn harness_text(h: &HarnessBlock) -> String {
    let mut out = String::from("harness {\n");
    for s in &h.stmts {
        out.push_str("    ");
        match s {
            HarnessStmt::Assign { target, value, .. } => {
                let _ = writeln!(out, "{target} = {value};");
            }
            HarnessStmt::New { name, record, .. } => {
                let _ = writeln!(out, "{name} = new {record};");
            }
            HarnessStmt::Call { func, args, .. } => {
                let _ = writeln!(out, "{func}({});", join_args(args));
            }
            HarnessStmt::Spawn { func, args, .. } => {
                let _ = writeln!(out, "spawn {func}({});", join_args(args));
            }
            HarnessStmt::Join { .. } => out.push_str("join;\n"),
        }
    }
    out.push_str("}\n");
    out
}

fn join_args(args: &[HarnessArg]) -> String {
    args.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn program_text(p: &Program) -> String {
    let mut out = String::new();
    for r in &p.records {
        let _ = writeln!(out, "record {} {{", r.name);
        for f in &r.fields {
            let _ = writeln!(out, "    {}int {};", if f.atomic { "atomic " } else { "" }, f.name);
        }
        out.push_str("}\n\n");
    }
    for g in &p.globals {
        let ty = match &g.ty {
            GlobalType::Int => "int".to_string(),
            GlobalType::AtomicInt => "atomic int".to_string(),
            GlobalType::Mutex => "mutex".to_string(),
            GlobalType::Record(r) => r.clone(),
            GlobalType::IntArray(n) => format!("int[{n}]"),
        };
        match g.init {
            Some(v) => {
                let _ = writeln!(out, "global {ty} {} = {v};", g.name);
            }
            None => {
                let _ = writeln!(out, "global {ty} {};", g.name);
            }
        }
    }
    for e in &p.externs {
        let params = vec!["int"; e.arity].join(", ");
        let _ = writeln!(out, "extern {}({params}) -> int;", e.name);
    }
    for f in &p.functions {
        let params = f
            .params
            .iter()
            .map(|p| format!("{}: {}", p.name, p.ty))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = write!(out, "\nfn {}({params}) ", f.name);
        write_block(&mut out, &f.body, 0);
        out.push('\n');
    }
    if let Some(h) = &p.harness {
        out.push('\n');
        out.push_str(&harness_text(h));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parse_program;

    #[test]
    fn minimal_parentheses() {
        let p = parse_program("global int g;\nfn f(x: int) { g = (x + 1) * 2 - (3 - x) + -(4) + -x; }").unwrap();
        let Stmt::Assign { value, .. } = &p.functions[0].body[0] else {
            panic!()
        };
        assert_eq!(expr_text(value), "(x + 1) * 2 - (3 - x) + -(4) + -x");
    }

    #[test]
    fn else_if_chains_print_flat() {
        let src = "global int g;\nfn f(x: int) { if (x == 1) { g = 1; } else if (x == 2) { g = 2; } else { g = 3; } }";
        let text = program_text(&parse_program(src).unwrap());
        assert!(text.contains("} else if (x == 2) {"), "{text}");
    }
}
