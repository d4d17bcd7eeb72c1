use std::fmt::Write;

use super::{
    Binding, BlockId, CastOp, Const, Function, Inst, InstKind, Item, Operand, Shape, Terminator, Ty,
    ValueId,
};
use crate::spec::ParamType;

fn value_name(f: &Function, v: ValueId) -> String {
    if v.index() < f.signature.arity() {
        f.values[v.index()].name.clone()
    } else {
        format!("{}{}", f.values[v.index()].name, v.0)
    }
}

fn const_text(c: Const) -> String {
    match c {
        Const::Int(x) => x.to_string(),
        Const::Float(x) => {
            let s = format!("{x:?}");
            if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
                s
            } else {
                format!("{s}.0")
            }
        }
        Const::Bool(b) => b.to_string(),
    }
}

fn ir_operand(f: &Function, op: Operand) -> String {
    match op {
        Operand::Value(v) => format!("%{}", value_name(f, v)),
        Operand::Const(c) => const_text(c),
        Operand::Placeholder(p) => match f.placeholders[p.0 as usize].binding {
            Some(Binding::Operand(o)) => ir_operand(f, o),
            Some(Binding::Compare(pred, a, b)) => {
                format!("({} {}, {})", pred.mnemonic(), ir_operand(f, a), ir_operand(f, b))
            }
            None => format!("?{}:{:?}", p.0, f.placeholders[p.0 as usize].role),
        },
    }
}

fn ir_inst(f: &Function, kind: &InstKind) -> String {
    let o = |x| ir_operand(f, x);
    match *kind {
        InstKind::Bin(op, a, b) => format!("{} {}, {}", op.mnemonic(), o(a), o(b)),
        InstKind::Cmp(p, a, b) => {
            let k = if f.operand_type(a) == Ty::Float { "fcmp" } else { "icmp" };
            format!("{k} {} {}, {}", p.mnemonic(), o(a), o(b))
        }
        InstKind::Select(c, a, b) => format!("select {}, {}, {}", o(c), o(a), o(b)),
        InstKind::Load { ptr, index, checked } => {
            format!("{} {}[{}]", if checked { "load.checked" } else { "load" }, o(ptr), o(index))
        }
        InstKind::Store { value, ptr, index, checked } => format!(
            "{} {}, {}[{}]",
            if checked { "store.checked" } else { "store" },
            o(value),
            o(ptr),
            o(index)
        ),
        InstKind::Cast(op, a) => {
            let m = match op {
                CastOp::IntToFloat => "sitofp",
                CastOp::FloatToInt => "fptosi",
                CastOp::BoolToInt => "zext",
            };
            format!("{m} {}", o(a))
        }
    }
}

/// Stable, line-oriented textual form.
pub fn render_ir(f: &Function) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "func {}", f.signature);
    for (bi, b) in f.blocks.iter().enumerate() {
        let _ = writeln!(s, "bb{bi}:");
        for phi in &b.phis {
            let ins: Vec<String> = phi
                .incoming
                .iter()
                .map(|(p, op)| format!("[bb{}: {}]", p.0, ir_operand(f, *op)))
                .collect();
            let _ = writeln!(
                s,
                "  %{} = phi {} {}",
                value_name(f, phi.result),
                f.values[phi.result.index()].ty,
                ins.join(", ")
            );
        }
        for it in &b.items {
            match it {
                Item::Hole(h) => {
                    let _ = writeln!(s, "  <hole {}>", h.0);
                }
                Item::Inst(inst) => match inst.result {
                    Some(r) => {
                        let _ = writeln!(s, "  %{} = {}", value_name(f, r), ir_inst(f, &inst.kind));
                    }
                    None => {
                        let _ = writeln!(s, "  {}", ir_inst(f, &inst.kind));
                    }
                },
            }
        }
        let t = match b.term {
            Terminator::Br(t) => format!("br bb{}", t.0),
            Terminator::CondBr(c, t, e) => format!("condbr {}, bb{}, bb{}", ir_operand(f, c), t.0, e.0),
            Terminator::Ret(None) => "ret".to_string(),
            Terminator::Ret(Some(v)) => format!("ret {}", ir_operand(f, v)),
        };
        let _ = writeln!(s, "  {t}");
    }
    s
}

fn c_type(t: Ty) -> &'static str {
    match t {
        Ty::Int => "int",
        Ty::Float => "float",
        Ty::Bool => "bool",
        Ty::Ptr(_) => "void *",
    }
}

fn c_operand(f: &Function, op: Operand) -> String {
    match op {
        Operand::Value(v) => value_name(f, v),
        Operand::Const(c) => const_text(c),
        Operand::Placeholder(p) => match f.placeholders[p.0 as usize].binding {
            Some(Binding::Operand(o)) => c_operand(f, o),
            Some(Binding::Compare(pred, a, b)) => {
                format!("{} {} {}", c_operand(f, a), pred.c_symbol(), c_operand(f, b))
            }
            None => format!("__placeholder{}", p.0),
        },
    }
}

fn c_expr(f: &Function, kind: &InstKind) -> String {
    let o = |x| c_operand(f, x);
    match *kind {
        InstKind::Bin(op, a, b) => format!("{} {} {}", o(a), op.c_symbol(), o(b)),
        InstKind::Cmp(p, a, b) => format!("{} {} {}", o(a), p.c_symbol(), o(b)),
        InstKind::Select(c, a, b) => format!("{} ? {} : {}", o(c), o(a), o(b)),
        InstKind::Load { ptr, index, checked: true } => format!("load_checked({}, {})", o(ptr), o(index)),
        InstKind::Load { ptr, index, checked: false } => format!("{}[{}]", o(ptr), o(index)),
        InstKind::Store { .. } => unreachable!(),
        InstKind::Cast(CastOp::IntToFloat, a) => format!("(float){}", o(a)),
        InstKind::Cast(_, a) => format!("(int){}", o(a)),
    }
}

struct CWriter<'f> {
    f: &'f Function,
    out: String,
    depth: usize,
}

impl CWriter<'_> {
    fn line(&mut self, text: &str) {
        for _ in 0..self.depth {
            self.out.push_str("  ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn items(&mut self, b: BlockId) {
        let f = self.f;
        for it in &f.block(b).items {
            match it {
                Item::Hole(h) => self.line(&format!("/* hole {} */", h.0)),
                Item::Inst(inst) => match (&inst.kind, inst.result) {
                    (InstKind::Store { value, ptr, index, checked }, _) => {
                        let (v, p, i) = (c_operand(f, *value), c_operand(f, *ptr), c_operand(f, *index));
                        if *checked {
                            self.line(&format!("store_checked({p}, {i}, {v});"));
                        } else {
                            self.line(&format!("{p}[{i}] = {v};"));
                        }
                    }
                    (k, Some(r)) => {
                        let ty = c_type(f.values[r.index()].ty);
                        self.line(&format!("{ty} {} = {};", value_name(f, r), c_expr(f, k)));
                    }
                    (_, None) => {}
                },
            }
        }
    }

    fn phi_inputs(&self, block: BlockId, from: BlockId) -> Vec<(ValueId, Operand)> {
        self.f
            .block(block)
            .phis
            .iter()
            .filter_map(|phi| {
                phi.incoming
                    .iter()
                    .find(|(p, _)| *p == from)
                    .map(|(_, op)| (phi.result, *op))
            })
            .collect()
    }

    fn assign(&mut self, dest: ValueId, op: Operand) {
        let (d, s) = (value_name(self.f, dest), c_operand(self.f, op));
        if d != s {
            self.line(&format!("{d} = {s};"));
        }
    }

    fn shape(&mut self, shape: &Shape) {
        let f = self.f;
        match shape {
            Shape::Block(b) => self.items(*b),
            Shape::Seq(parts) => parts.iter().for_each(|p| self.shape(p)),
            Shape::Loop { header, iv, bound, body, latch } => {
                let entry_edges: Vec<BlockId> = f.predecessors()[header.index()]
                    .iter()
                    .copied()
                    .filter(|p| p != latch)
                    .collect();
                let from = entry_edges.first().copied().unwrap_or(*header);
                for (v, init) in self.phi_inputs(*header, from) {
                    if v != *iv {
                        let ty = c_type(f.values[v.index()].ty);
                        let line = format!("{ty} {} = {};", value_name(f, v), c_operand(f, init));
                        self.line(&line);
                    }
                }
                let i = value_name(f, *iv);
                // an index read after the loop must outlive the `for`
                let init = if self.read_outside(*iv, shape) {
                    self.line(&format!("int {i} = 0;"));
                    String::new()
                } else {
                    format!("int {i} = 0")
                };
                match bound {
                    Some(b) => self.line(&format!("for ({init}; {i} < {}; ++{i}) {{", c_operand(f, *b))),
                    None => self.line(&format!("for ({init}; ; ++{i}) {{")),
                }
                self.depth += 1;
                if bound.is_some() {
                    // the exit test lives in the `for` header; keep only what the body reads
                    let f = self.f;
                    for it in &f.block(*header).items {
                        if let Item::Inst(Inst { result: Some(r), kind }) = it {
                            if read_elsewhere(f, *r, *header) {
                                let line = format!("{} {} = {};", c_type(f.values[r.index()].ty), value_name(f, *r), c_expr(f, kind));
                                self.line(&line);
                            }
                        }
                    }
                } else {
                    self.items(*header);
                    if let Terminator::CondBr(c, ..) = f.block(*header).term {
                        let line = format!("if (!({})) break;", c_operand(f, c));
                        self.line(&line);
                    }
                }
                self.shape(body);
                for (v, next) in self.phi_inputs(*header, *latch) {
                    if v != *iv {
                        self.assign(v, next);
                    }
                }
                self.depth -= 1;
                self.line("}");
            }
            Shape::If { cond_block, then, els, join } => {
                let preds = f.predecessors()[join.index()].clone();
                let cond = match f.block(*cond_block).term {
                    Terminator::CondBr(c, ..) => c_operand(f, c),
                    _ => "1".into(),
                };
                let merges: Vec<ValueId> = f.block(*join).phis.iter().map(|p| p.result).collect();
                let else_edge = if els.is_none() { Some(*cond_block) } else { None };
                for &m in &merges {
                    let ty = c_type(f.values[m.index()].ty);
                    match else_edge.and_then(|e| self.phi_inputs(*join, e).into_iter().find(|(v, _)| *v == m)) {
                        Some((_, op)) => {
                            let line = format!("{ty} {} = {};", value_name(f, m), c_operand(f, op));
                            self.line(&line)
                        }
                        None => self.line(&format!("{ty} {};", value_name(f, m))),
                    }
                }
                self.line(&format!("if ({cond}) {{"));
                self.depth += 1;
                self.shape(then);
                let then_pred = preds.iter().copied().find(|p| Some(*p) != else_edge && self.reaches_from(then, *p));
                if let Some(p) = then_pred {
                    for (v, op) in self.phi_inputs(*join, p) {
                        self.assign(v, op);
                    }
                }
                self.depth -= 1;
                if let Some(e) = els {
                    self.line("} else {");
                    self.depth += 1;
                    self.shape(e);
                    let else_pred = preds.iter().copied().find(|p| Some(*p) != then_pred);
                    if let Some(p) = else_pred {
                        for (v, op) in self.phi_inputs(*join, p) {
                            self.assign(v, op);
                        }
                    }
                    self.depth -= 1;
                }
                self.line("}");
            }
        }
    }

    /// Whether a block outside `shape` reads `v`.
    fn read_outside(&self, v: ValueId, shape: &Shape) -> bool {
        let hit = |op: &Operand| *op == Operand::Value(v);
        self.f.blocks.iter().enumerate().any(|(i, b)| {
            !self.reaches_from(shape, BlockId(i as u32))
                && (b.phis.iter().any(|p| p.incoming.iter().any(|(_, o)| hit(o)))
                    || b.items.iter().any(|it| matches!(it, Item::Inst(inst) if inst.kind.operands().iter().any(hit)))
                    || match b.term {
                        Terminator::CondBr(c, ..) => hit(&c),
                        Terminator::Ret(Some(o)) => hit(&o),
                        _ => false,
                    })
        })
    }

    /// Whether `b` is one of the blocks covered by `shape`.
    fn reaches_from(&self, shape: &Shape, b: BlockId) -> bool {
        match shape {
            Shape::Block(x) => *x == b,
            Shape::Seq(p) => p.iter().any(|s| self.reaches_from(s, b)),
            Shape::Loop { header, body, latch, .. } => {
                *header == b || *latch == b || self.reaches_from(body, b)
            }
            Shape::If { cond_block, then, els, join } => {
                *cond_block == b
                    || *join == b
                    || self.reaches_from(then, b)
                    || els.as_ref().is_some_and(|e| self.reaches_from(e, b))
            }
        }
    }
}

/// Whether `v` is read anywhere but the terminator of `header`.
fn read_elsewhere(f: &Function, v: ValueId, header: BlockId) -> bool {
    let hit = |op: &Operand| *op == Operand::Value(v);
    let bound = f.placeholders.iter().any(|p| match p.binding {
        Some(Binding::Operand(o)) => hit(&o),
        Some(Binding::Compare(_, a, b)) => hit(&a) || hit(&b),
        None => false,
    });
    bound
        || f.blocks.iter().enumerate().any(|(i, b)| {
            b.phis.iter().any(|p| p.incoming.iter().any(|(_, o)| hit(o)))
                || b.items.iter().any(|it| matches!(it, Item::Inst(inst) if inst.kind.operands().iter().any(hit)))
                || (i != header.index()
                    && match b.term {
                        Terminator::CondBr(c, ..) => hit(&c),
                        Terminator::Ret(Some(o)) => hit(&o),
                        _ => false,
                    })
        })
}

fn c_signature(f: &Function) -> String {
    let params: Vec<String> = f
        .signature
        .params()
        .iter()
        .map(|p| match p.ty {
            ParamType::Char => format!("char {}", p.name),
            ParamType::Int => format!("int {}", p.name),
            ParamType::Float => format!("float {}", p.name),
            ParamType::PtrChar => format!("char *{}", p.name),
            ParamType::PtrInt => format!("int *{}", p.name),
            ParamType::PtrFloat => format!("float *{}", p.name),
            ParamType::PtrOpaque => format!("void *{}", p.name),
        })
        .collect();
    format!("{} {}({})", f.signature.ret(), f.signature.name(), params.join(", "))
}

/// Pseudo-C listing. Structured when the function carries a shape,
/// goto-based otherwise.
pub fn render_c(f: &Function) -> String {
    let mut w = CWriter { f, out: String::new(), depth: 0 };
    w.line(&format!("{} {{", c_signature(f)));
    w.depth = 1;
    match &f.shape {
        Some(shape) => {
            w.shape(shape);
            let ret = f.blocks.iter().find_map(|b| match b.term {
                Terminator::Ret(v) => Some(v),
                _ => None,
            });
            if let Some(Some(v)) = ret {
                let line = format!("return {};", c_operand(f, v));
                w.line(&line);
            }
        }
        None => {
            for (bi, b) in f.blocks.iter().enumerate() {
                w.depth = 0;
                w.line(&format!("bb{bi}:"));
                w.depth = 1;
                w.items(BlockId(bi as u32));
                let edge = |w: &mut CWriter, to: BlockId| {
                    for (v, op) in w.phi_inputs(to, BlockId(bi as u32)) {
                        w.assign(v, op);
                    }
                };
                match b.term {
                    Terminator::Br(t) => {
                        edge(&mut w, t);
                        w.line(&format!("goto bb{};", t.0));
                    }
                    Terminator::CondBr(c, t, e) => {
                        let cond = c_operand(f, c);
                        w.line(&format!("if ({cond}) {{"));
                        w.depth += 1;
                        edge(&mut w, t);
                        w.line(&format!("goto bb{};", t.0));
                        w.depth -= 1;
                        w.line("}");
                        edge(&mut w, e);
                        w.line(&format!("goto bb{};", e.0));
                    }
                    Terminator::Ret(None) => w.line("return;"),
                    Terminator::Ret(Some(v)) => {
                        let line = format!("return {};", c_operand(f, v));
                        w.line(&line);
                    }
                }
            }
        }
    }
    w.depth = 0;
    w.line("}");
    w.out
}
