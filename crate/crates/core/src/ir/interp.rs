use serde::{Deserialize, Serialize};

use super::{
    validate, BinOp, Binding, BlockId, CastOp, Const, Function, InstKind, IrError, Item, Operand,
    Terminator, ENTRY,
};
use crate::spec::{Buffer, ReturnType, Value};

pub const DEFAULT_STEP_LIMIT: u64 = 100_000;

/// Memory sizing for candidate runs.
///
/// Every buffer handed to a candidate is allocated with
/// `max(length, data length)` elements; the tail past the real data is zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEnv {
    pub length: usize,
    pub max_length: usize,
}

impl Default for MemoryEnv {
    fn default() -> Self {
        MemoryEnv { length: 4, max_length: 32 }
    }
}

impl MemoryEnv {
    /// Doubles the allocation length. Returns false once at the limit.
    pub fn grow(&mut self) -> bool {
        if self.length >= self.max_length {
            return false;
        }
        self.length = (self.length * 2).min(self.max_length);
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    /// Normal return. Buffers are truncated to their input data length.
    Done { returned: Option<Value>, out_buffers: Vec<Buffer> },
    OutOfBounds { param: usize, index: i64 },
    DivByZero,
    StepLimit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Rt {
    Int(i64),
    Float(f64),
    Bool(bool),
    Ptr(u32),
}

impl Rt {
    fn int(self) -> i64 {
        match self {
            Rt::Int(x) => x,
            Rt::Bool(b) => b as i64,
            _ => 0,
        }
    }

    fn float(self) -> f64 {
        match self {
            Rt::Float(x) => x,
            _ => 0.0,
        }
    }

    fn bool(self) -> bool {
        matches!(self, Rt::Bool(true))
    }
}

/// Arguments laid out for the interpreter under one memory setting.
#[derive(Clone, Debug)]
pub(crate) struct PreparedInput {
    args: Vec<Rt>,
    buffers: Vec<Buffer>,
    data_len: Vec<usize>,
    buffer_param: Vec<usize>,
}

impl PreparedInput {
    pub(crate) fn new(inputs: &[Value], mem: &MemoryEnv) -> Self {
        let mut args = Vec::with_capacity(inputs.len());
        let mut buffers = Vec::new();
        let mut data_len = Vec::new();
        let mut buffer_param = Vec::new();
        for (i, v) in inputs.iter().enumerate() {
            args.push(match v {
                Value::Char(c) => Rt::Int(*c as i64),
                Value::Int(x) => Rt::Int(*x),
                Value::Float(x) => Rt::Float(*x),
                Value::Buffer(b) => {
                    buffers.push(b.padded(mem.length.max(b.len())));
                    data_len.push(b.len());
                    buffer_param.push(i);
                    Rt::Ptr(buffers.len() as u32 - 1)
                }
            });
        }
        PreparedInput { args, buffers, data_len, buffer_param }
    }
}

struct Machine<'f> {
    f: &'f Function,
    regs: Vec<Rt>,
    mem: Vec<Buffer>,
}

enum Trap {
    Oob(u32, i64),
    Div,
}

impl Machine<'_> {
    fn eval(&self, op: Operand) -> Rt {
        match op {
            Operand::Value(v) => self.regs[v.index()],
            Operand::Const(Const::Int(x)) => Rt::Int(x),
            Operand::Const(Const::Float(x)) => Rt::Float(x),
            Operand::Const(Const::Bool(b)) => Rt::Bool(b),
            Operand::Placeholder(p) => match self.f.placeholders[p.0 as usize].binding {
                Some(Binding::Operand(o)) => self.eval(o),
                Some(Binding::Compare(pred, a, b)) => match (self.eval(a), self.eval(b)) {
                    (Rt::Float(x), Rt::Float(y)) => Rt::Bool(pred.holds(x, y)),
                    (x, y) => Rt::Bool(pred.holds(x.int(), y.int())),
                },
                // validation rejects this before execution
                None => Rt::Int(0),
            },
        }
    }

    fn index(&self, ptr: Rt, idx: Rt) -> Result<(usize, usize), Trap> {
        let Rt::Ptr(slot) = ptr else { return Err(Trap::Oob(u32::MAX, idx.int())) };
        let i = idx.int();
        let cap = self.mem[slot as usize].len();
        if i < 0 || i as u64 >= cap as u64 {
            return Err(Trap::Oob(slot, i));
        }
        Ok((slot as usize, i as usize))
    }

    fn step(&mut self, kind: &InstKind) -> Result<Option<Rt>, Trap> {
        Ok(Some(match *kind {
            InstKind::Bin(op, a, b) => {
                let (a, b) = (self.eval(a), self.eval(b));
                match op {
                    BinOp::Add => Rt::Int(a.int().wrapping_add(b.int())),
                    BinOp::Sub => Rt::Int(a.int().wrapping_sub(b.int())),
                    BinOp::Mul => Rt::Int(a.int().wrapping_mul(b.int())),
                    BinOp::SDiv => {
                        if b.int() == 0 {
                            return Err(Trap::Div);
                        }
                        Rt::Int(a.int().wrapping_div(b.int()))
                    }
                    BinOp::FAdd => Rt::Float(a.float() + b.float()),
                    BinOp::FSub => Rt::Float(a.float() - b.float()),
                    BinOp::FMul => Rt::Float(a.float() * b.float()),
                    BinOp::FDiv => {
                        if b.float() == 0.0 {
                            return Err(Trap::Div);
                        }
                        Rt::Float(a.float() / b.float())
                    }
                }
            }
            InstKind::Cmp(pred, a, b) => match (self.eval(a), self.eval(b)) {
                (Rt::Float(x), Rt::Float(y)) => Rt::Bool(pred.holds(x, y)),
                (x, y) => Rt::Bool(pred.holds(x.int(), y.int())),
            },
            InstKind::Select(c, a, b) => {
                if self.eval(c).bool() {
                    self.eval(a)
                } else {
                    self.eval(b)
                }
            }
            InstKind::Load { ptr, index, .. } => {
                let (slot, i) = self.index(self.eval(ptr), self.eval(index))?;
                match &self.mem[slot] {
                    Buffer::Char(d) => Rt::Int(d[i] as i64),
                    Buffer::Int(d) => Rt::Int(d[i]),
                    Buffer::Float(d) => Rt::Float(d[i]),
                }
            }
            InstKind::Store { value, ptr, index, .. } => {
                let v = self.eval(value);
                let (slot, i) = self.index(self.eval(ptr), self.eval(index))?;
                match &mut self.mem[slot] {
                    Buffer::Char(d) => d[i] = v.int() as u8,
                    Buffer::Int(d) => d[i] = v.int(),
                    Buffer::Float(d) => d[i] = v.float(),
                }
                return Ok(None);
            }
            InstKind::Cast(op, a) => {
                let a = self.eval(a);
                match op {
                    CastOp::IntToFloat => Rt::Float(a.int() as f64),
                    CastOp::FloatToInt => Rt::Int(a.float() as i64),
                    CastOp::BoolToInt => Rt::Int(a.bool() as i64),
                }
            }
        }))
    }
}

/// Runs a function that is known to be well formed.
pub(crate) fn execute(f: &Function, input: &PreparedInput, step_limit: u64) -> Outcome {
    let mut m = Machine {
        f,
        regs: vec![Rt::Int(0); f.values.len()],
        mem: input.buffers.clone(),
    };
    m.regs[..input.args.len()].copy_from_slice(&input.args);
    let trap = |t: Trap| match t {
        Trap::Div => Outcome::DivByZero,
        Trap::Oob(slot, index) => Outcome::OutOfBounds {
            param: input.buffer_param.get(slot as usize).copied().unwrap_or(usize::MAX),
            index,
        },
    };

    let mut steps = 0u64;
    let mut block = ENTRY;
    let mut prev: Option<BlockId> = None;
    let mut incoming = Vec::new();
    loop {
        let b = f.block(block);
        if let Some(p) = prev {
            incoming.clear();
            for phi in &b.phis {
                let op = phi.incoming.iter().find(|(from, _)| *from == p).map(|(_, o)| *o);
                incoming.push((phi.result, op.map(|o| m.eval(o)).unwrap_or(Rt::Int(0))));
            }
            for &(r, v) in &incoming {
                m.regs[r.index()] = v;
            }
        }
        for it in &b.items {
            if let Item::Inst(inst) = it {
                steps += 1;
                if steps > step_limit {
                    return Outcome::StepLimit;
                }
                match m.step(&inst.kind) {
                    Ok(Some(v)) => {
                        if let Some(r) = inst.result {
                            m.regs[r.index()] = v;
                        }
                    }
                    Ok(None) => {}
                    Err(t) => return trap(t),
                }
            }
        }
        steps += 1;
        if steps > step_limit {
            return Outcome::StepLimit;
        }
        prev = Some(block);
        match b.term {
            Terminator::Br(t) => block = t,
            Terminator::CondBr(c, t, e) => block = if m.eval(c).bool() { t } else { e },
            Terminator::Ret(v) => {
                let returned = v.map(|op| {
                    let r = m.eval(op);
                    match f.signature.ret() {
                        ReturnType::Char => Value::Char(r.int() as u8),
                        ReturnType::Float => Value::Float(r.float()),
                        _ => Value::Int(r.int()),
                    }
                });
                let out_buffers = m
                    .mem
                    .iter()
                    .zip(&input.data_len)
                    .map(|(b, &n)| b.truncated(n))
                    .collect();
                return Outcome::Done { returned, out_buffers };
            }
        }
    }
}

/// Validates `f` and runs it on `inputs`.
pub fn interpret(f: &Function, inputs: &[Value], mem: &MemoryEnv, step_limit: u64) -> Result<Outcome, IrError> {
    validate(f)?;
    if inputs.len() != f.signature.arity()
        || inputs.iter().zip(f.signature.params()).any(|(v, p)| !v.conforms_to(p.ty))
    {
        return Err(IrError::Malformed("inputs do not match the signature".into()));
    }
    Ok(execute(f, &PreparedInput::new(inputs, mem), step_limit))
}
