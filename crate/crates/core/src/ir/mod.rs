//! A small SSA intermediate representation with holes and placeholders,
//! plus its dominance analysis and a bounds-checked interpreter.

mod dom;
mod interp;
mod render;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spec::{ParamType, ScalarKind, Signature};

pub use dom::DomTree;
pub use interp::{interpret, MemoryEnv, Outcome, DEFAULT_STEP_LIMIT};
pub(crate) use interp::{execute, PreparedInput};
pub use render::{render_c, render_ir};
pub use validate::{live_values_at, use_sites, validate, DefSite, Pos, UseSite};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ValueId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlaceholderId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HoleId(pub u32);

impl BlockId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ValueId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ty {
    Int,
    Float,
    Bool,
    Ptr(ScalarKind),
}

impl Ty {
    /// IR type of a parameter. Chars are promoted to int.
    pub fn of_param(t: ParamType) -> Ty {
        match (t.scalar(), t.pointee()) {
            (Some(ScalarKind::Float), _) => Ty::Float,
            (Some(_), _) => Ty::Int,
            (None, Some(e)) => Ty::Ptr(e),
            _ => unreachable!(),
        }
    }

    /// IR type used for values of a scalar kind.
    pub fn of_scalar(k: ScalarKind) -> Ty {
        match k {
            ScalarKind::Float => Ty::Float,
            _ => Ty::Int,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Const {
    Int(i64),
    Float(f64),
    Bool(bool),
}

impl Const {
    pub fn ty(self) -> Ty {
        match self {
            Const::Int(_) => Ty::Int,
            Const::Float(_) => Ty::Float,
            Const::Bool(_) => Ty::Bool,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Operand {
    Value(ValueId),
    Const(Const),
    Placeholder(PlaceholderId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    SDiv,
    FAdd,
    FSub,
    FMul,
    FDiv,
}

impl BinOp {
    pub fn is_float(self) -> bool {
        matches!(self, BinOp::FAdd | BinOp::FSub | BinOp::FMul | BinOp::FDiv)
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Mul | BinOp::FAdd | BinOp::FMul)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::SDiv => "sdiv",
            BinOp::FAdd => "fadd",
            BinOp::FSub => "fsub",
            BinOp::FMul => "fmul",
            BinOp::FDiv => "fdiv",
        }
    }

    pub fn c_symbol(self) -> &'static str {
        match self {
            BinOp::Add | BinOp::FAdd => "+",
            BinOp::Sub | BinOp::FSub => "-",
            BinOp::Mul | BinOp::FMul => "*",
            BinOp::SDiv | BinOp::FDiv => "/",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pred {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Pred {
    pub const ALL: [Pred; 6] = [Pred::Ne, Pred::Eq, Pred::Lt, Pred::Le, Pred::Gt, Pred::Ge];

    pub fn is_symmetric(self) -> bool {
        matches!(self, Pred::Eq | Pred::Ne)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Pred::Eq => "eq",
            Pred::Ne => "ne",
            Pred::Lt => "lt",
            Pred::Le => "le",
            Pred::Gt => "gt",
            Pred::Ge => "ge",
        }
    }

    pub fn c_symbol(self) -> &'static str {
        match self {
            Pred::Eq => "==",
            Pred::Ne => "!=",
            Pred::Lt => "<",
            Pred::Le => "<=",
            Pred::Gt => ">",
            Pred::Ge => ">=",
        }
    }

    pub fn holds<T: PartialOrd>(self, a: T, b: T) -> bool {
        match self {
            Pred::Eq => a == b,
            Pred::Ne => a != b,
            Pred::Lt => a < b,
            Pred::Le => a <= b,
            Pred::Gt => a > b,
            Pred::Ge => a >= b,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CastOp {
    IntToFloat,
    FloatToInt,
    BoolToInt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InstKind {
    Bin(BinOp, Operand, Operand),
    Cmp(Pred, Operand, Operand),
    Select(Operand, Operand, Operand),
    Load { ptr: Operand, index: Operand, checked: bool },
    Store { value: Operand, ptr: Operand, index: Operand, checked: bool },
    Cast(CastOp, Operand),
}

impl InstKind {
    pub fn operands(&self) -> Vec<Operand> {
        match *self {
            InstKind::Bin(_, a, b) | InstKind::Cmp(_, a, b) => vec![a, b],
            InstKind::Select(c, a, b) => vec![c, a, b],
            InstKind::Load { ptr, index, .. } => vec![ptr, index],
            InstKind::Store { value, ptr, index, .. } => vec![value, ptr, index],
            InstKind::Cast(_, a) => vec![a],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inst {
    pub result: Option<ValueId>,
    pub kind: InstKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phi {
    pub result: ValueId,
    pub incoming: Vec<(BlockId, Operand)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Item {
    Inst(Inst),
    Hole(HoleId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Terminator {
    Br(BlockId),
    CondBr(Operand, BlockId, BlockId),
    Ret(Option<Operand>),
}

impl Terminator {
    pub fn successors(&self) -> Vec<BlockId> {
        match *self {
            Terminator::Br(t) => vec![t],
            Terminator::CondBr(_, t, f) => vec![t, f],
            Terminator::Ret(_) => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub phis: Vec<Phi>,
    pub items: Vec<Item>,
    pub term: Terminator,
}

impl Block {
    pub fn new(term: Terminator) -> Self {
        Block { phis: Vec::new(), items: Vec::new(), term }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueInfo {
    pub ty: Ty,
    pub name: String,
}

/// What a placeholder stands for; decides its candidate bindings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    /// Array index of a gather or store.
    Index,
    AffineVar,
    AffineScale,
    AffineOffset,
    AccInit,
    AccNext,
    StoreValue,
    Return,
    Cond,
    PhiInput,
}

/// A concrete choice for a placeholder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Binding {
    Operand(Operand),
    Compare(Pred, Operand, Operand),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placeholder {
    pub ty: Ty,
    pub role: Role,
    pub binding: Option<Binding>,
}

/// Structured shape of a compiled function, used by the C renderer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Block(BlockId),
    Seq(Vec<Shape>),
    Loop {
        header: BlockId,
        /// Induction variable and its bound; `None` bound for predicate loops.
        iv: ValueId,
        bound: Option<Operand>,
        body: Box<Shape>,
        latch: BlockId,
    },
    If {
        cond_block: BlockId,
        then: Box<Shape>,
        els: Option<Box<Shape>>,
        join: BlockId,
    },
}

/// A function in the mini IR.
///
/// Values `0..signature.arity()` are the parameters. Block 0 is the entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Function {
    pub signature: Signature,
    pub blocks: Vec<Block>,
    pub values: Vec<ValueInfo>,
    pub placeholders: Vec<Placeholder>,
    pub shape: Option<Shape>,
}

pub const ENTRY: BlockId = BlockId(0);

impl Function {
    /// An empty function with one entry block ending in `ret`.
    pub fn new(signature: Signature) -> Self {
        let values = signature
            .params()
            .iter()
            .map(|p| ValueInfo { ty: Ty::of_param(p.ty), name: p.name.clone() })
            .collect();
        Function {
            signature,
            blocks: vec![Block::new(Terminator::Ret(None))],
            values,
            placeholders: Vec::new(),
            shape: None,
        }
    }

    pub fn param_value(&self, i: usize) -> ValueId {
        ValueId(i as u32)
    }

    pub fn add_block(&mut self) -> BlockId {
        self.blocks.push(Block::new(Terminator::Ret(None)));
        BlockId(self.blocks.len() as u32 - 1)
    }

    pub fn new_value(&mut self, ty: Ty, name: impl Into<String>) -> ValueId {
        self.values.push(ValueInfo { ty, name: name.into() });
        ValueId(self.values.len() as u32 - 1)
    }

    pub fn new_placeholder(&mut self, ty: Ty, role: Role) -> PlaceholderId {
        self.placeholders.push(Placeholder { ty, role, binding: None });
        PlaceholderId(self.placeholders.len() as u32 - 1)
    }

    pub fn block(&self, b: BlockId) -> &Block {
        &self.blocks[b.index()]
    }

    pub fn block_mut(&mut self, b: BlockId) -> &mut Block {
        &mut self.blocks[b.index()]
    }

    /// Appends an instruction to `b`, allocating a result when the kind
    /// produces one.
    pub fn push_inst(&mut self, b: BlockId, kind: InstKind, name: &str) -> Option<ValueId> {
        let result = self.result_type(&kind).map(|ty| self.new_value(ty, name));
        self.block_mut(b).items.push(Item::Inst(Inst { result, kind }));
        result
    }

    pub fn operand_type(&self, op: Operand) -> Ty {
        match op {
            Operand::Value(v) => self.values[v.index()].ty,
            Operand::Const(c) => c.ty(),
            Operand::Placeholder(p) => self.placeholders[p.0 as usize].ty,
        }
    }

    /// Result type of an instruction, `None` for stores.
    pub fn result_type(&self, kind: &InstKind) -> Option<Ty> {
        match kind {
            InstKind::Bin(op, ..) => Some(if op.is_float() { Ty::Float } else { Ty::Int }),
            InstKind::Cmp(..) => Some(Ty::Bool),
            InstKind::Select(_, a, _) => Some(self.operand_type(*a)),
            InstKind::Load { ptr, .. } => match self.operand_type(*ptr) {
                Ty::Ptr(e) => Some(Ty::of_scalar(e)),
                _ => Some(Ty::Int),
            },
            InstKind::Store { .. } => None,
            InstKind::Cast(CastOp::IntToFloat, _) => Some(Ty::Float),
            InstKind::Cast(_, _) => Some(Ty::Int),
        }
    }

    pub fn predecessors(&self) -> Vec<Vec<BlockId>> {
        let mut preds = vec![Vec::new(); self.blocks.len()];
        for (i, b) in self.blocks.iter().enumerate() {
            for s in b.term.successors() {
                if !preds[s.index()].contains(&BlockId(i as u32)) {
                    preds[s.index()].push(BlockId(i as u32));
                }
            }
        }
        preds
    }

    pub fn holes(&self) -> Vec<(BlockId, usize, HoleId)> {
        let mut out = Vec::new();
        for (bi, b) in self.blocks.iter().enumerate() {
            for (ii, it) in b.items.iter().enumerate() {
                if let Item::Hole(h) = it {
                    out.push((BlockId(bi as u32), ii, *h));
                }
            }
        }
        out
    }

    pub fn unbound_placeholders(&self) -> Vec<PlaceholderId> {
        self.placeholders
            .iter()
            .enumerate()
            .filter(|(_, p)| p.binding.is_none())
            .map(|(i, _)| PlaceholderId(i as u32))
            .collect()
    }

    /// Copy with every checked memory access replaced by a plain one.
    pub fn strip_bounds_checks(&self) -> Function {
        let mut f = self.clone();
        for b in &mut f.blocks {
            for it in &mut b.items {
                if let Item::Inst(Inst { kind, .. }) = it {
                    match kind {
                        InstKind::Load { checked, .. } | InstKind::Store { checked, .. } => *checked = false,
                        _ => {}
                    }
                }
            }
        }
        f
    }

    pub fn has_bounds_checks(&self) -> bool {
        self.blocks.iter().flat_map(|b| &b.items).any(|it| {
            matches!(
                it,
                Item::Inst(Inst { kind: InstKind::Load { checked: true, .. } | InstKind::Store { checked: true, .. }, .. })
            )
        })
    }

    /// Number of non-terminator instructions.
    pub fn instruction_count(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.phis.len() + b.items.iter().filter(|i| matches!(i, Item::Inst(_))).count())
            .sum()
    }
}

/// Free-standing form of [`Function::strip_bounds_checks`].
pub fn strip_bounds_checks(f: &Function) -> Function {
    f.strip_bounds_checks()
}

#[derive(Debug, Error, PartialEq)]
pub enum IrError {
    #[error("placeholder {0} is unbound")]
    UnboundPlaceholder(u32),
    #[error("function still contains hole {0}")]
    UnfilledHole(u32),
    #[error("block {0} is unreachable")]
    Unreachable(u32),
    #[error("entry block has predecessors")]
    EntryHasPredecessors,
    #[error("use of value {value} in block {block} is not dominated by its definition")]
    Dominance { value: u32, block: u32 },
    #[error("type error: {0}")]
    Type(String),
    #[error("phi in block {block} does not match its predecessors")]
    PhiEdges { block: u32 },
    #[error("malformed: {0}")]
    Malformed(String),
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Int => f.write_str("int"),
            Ty::Float => f.write_str("float"),
            Ty::Bool => f.write_str("bool"),
            Ty::Ptr(e) => write!(f, "{}*", e.name()),
        }
    }
}
