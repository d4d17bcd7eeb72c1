use serde::{Deserialize, Serialize};

use super::{FragArg, Fragment, FragmentError, FragmentKind};
use crate::ir::{
    BinOp, BlockId, Const, DomTree, Function, InstKind, IrError, Item, Operand, Phi, Pred, Role, Shape, Terminator,
    Ty, ENTRY,
};
use crate::spec::{ScalarKind, Signature};

/// A compiled fragment tree: an IR function with holes and unbound
/// placeholders, plus the fragments it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sketch {
    pub function: Function,
    pub fragment: Fragment,
    pub sequence: Vec<Fragment>,
}

impl Sketch {
    pub fn hole_count(&self) -> usize {
        self.function.holes().len()
    }
}

struct LoopCtx {
    preheader: BlockId,
    header: BlockId,
    latch: BlockId,
}

struct Builder<'s> {
    sig: &'s Signature,
    f: Function,
    cur: BlockId,
    loops: Vec<LoopCtx>,
    pending_acc: usize,
    acc_ty: Ty,
    next_hole: u32,
}

impl Builder<'_> {
    fn hole(&mut self) {
        let h = crate::ir::HoleId(self.next_hole);
        self.next_hole += 1;
        self.f.block_mut(self.cur).items.push(Item::Hole(h));
    }

    fn ph(&mut self, ty: Ty, role: Role) -> Operand {
        Operand::Placeholder(self.f.new_placeholder(ty, role))
    }

    fn ptr_operand(&self, frag: &Fragment) -> (Operand, ScalarKind) {
        let name = frag.param().expect("checked fragment");
        let i = self.sig.param_index(name).expect("checked fragment");
        let elem = self.sig.params()[i].ty.pointee().expect("checked fragment");
        (Operand::Value(self.f.param_value(i)), elem)
    }

    fn acc_phi(&mut self, pre: BlockId, header: BlockId, latch: BlockId) {
        let init = self.ph(self.acc_ty, Role::AccInit);
        let next = self.ph(self.acc_ty, Role::AccNext);
        let acc = self.f.new_value(self.acc_ty, "acc");
        self.f.block_mut(header).phis.push(Phi { result: acc, incoming: vec![(pre, init), (latch, next)] });
    }

    fn children(&mut self, frag: &Fragment, seq: &mut Vec<Shape>) {
        for c in &frag.children {
            self.node(c, seq);
        }
    }

    fn region(&mut self, frag: Option<&Fragment>) -> Shape {
        let mut seq = vec![Shape::Block(self.cur)];
        if let Some(c) = frag {
            self.node(c, &mut seq);
        }
        if seq.len() == 1 {
            seq.pop().unwrap()
        } else {
            Shape::Seq(seq)
        }
    }

    fn node(&mut self, frag: &Fragment, seq: &mut Vec<Shape>) {
        match frag.kind {
            FragmentKind::Linear => self.hole(),
            FragmentKind::Gather => {
                let (ptr, _) = self.ptr_operand(frag);
                let index = self.ph(Ty::Int, Role::Index);
                let name = format!("{}e", frag.param().unwrap());
                self.f.push_inst(self.cur, InstKind::Load { ptr, index, checked: true }, &name);
                self.children(frag, seq);
            }
            FragmentKind::AffineIndex => {
                let var = self.ph(Ty::Int, Role::AffineVar);
                let scale = self.ph(Ty::Int, Role::AffineScale);
                let off = self.ph(Ty::Int, Role::AffineOffset);
                let t = self.f.push_inst(self.cur, InstKind::Bin(BinOp::Mul, var, scale), "t").unwrap();
                self.f.push_inst(self.cur, InstKind::Bin(BinOp::Add, Operand::Value(t), off), "idx");
                self.children(frag, seq);
            }
            FragmentKind::Accumulate => {
                if frag.children.iter().any(Fragment::contains_loop) {
                    self.pending_acc += 1;
                } else if let Some(l) = self.loops.last() {
                    let (p, h, la) = (l.preheader, l.header, l.latch);
                    self.acc_phi(p, h, la);
                }
                self.children(frag, seq);
            }
            FragmentKind::StoreOutput => {
                self.hole();
                let (ptr, elem) = self.ptr_operand(frag);
                let value = self.ph(Ty::of_scalar(elem), Role::StoreValue);
                let index = self.ph(Ty::Int, Role::Index);
                self.f.push_inst(self.cur, InstKind::Store { value, ptr, index, checked: true }, "");
            }
            FragmentKind::FixedLoop | FragmentKind::ArgLoop | FragmentKind::WhileLoop => self.loop_(frag, seq),
            FragmentKind::If | FragmentKind::IfElse => self.branch(frag, seq),
            FragmentKind::Seq => self.children(frag, seq),
        }
    }

    fn loop_(&mut self, frag: &Fragment, seq: &mut Vec<Shape>) {
        let pre = self.cur;
        let header = self.f.add_block();
        let body = self.f.add_block();
        let latch = self.f.add_block();
        let exit = self.f.add_block();
        self.f.block_mut(pre).term = Terminator::Br(header);

        let iv = self.f.new_value(Ty::Int, "i");
        for _ in 0..std::mem::take(&mut self.pending_acc) {
            self.acc_phi(pre, header, latch);
        }
        let bound = match (&frag.kind, &frag.arg) {
            (FragmentKind::FixedLoop, Some(FragArg::Const(n))) => Some(Operand::Const(Const::Int(*n as i64))),
            (FragmentKind::ArgLoop, Some(FragArg::Param(p))) => {
                Some(Operand::Value(self.f.param_value(self.sig.param_index(p).unwrap())))
            }
            _ => None,
        };
        self.cur = header;
        let cond = match bound {
            Some(b) => {
                let c = self.f.push_inst(header, InstKind::Cmp(Pred::Lt, Operand::Value(iv), b), "c").unwrap();
                Operand::Value(c)
            }
            None => {
                self.hole();
                self.ph(Ty::Bool, Role::Cond)
            }
        };
        self.f.block_mut(header).term = Terminator::CondBr(cond, body, exit);

        self.loops.push(LoopCtx { preheader: pre, header, latch });
        self.cur = body;
        let body_shape = self.region(frag.children.first());
        self.f.block_mut(self.cur).term = Terminator::Br(latch);
        self.loops.pop();

        let inext = self
            .f
            .push_inst(latch, InstKind::Bin(BinOp::Add, Operand::Value(iv), Operand::Const(Const::Int(1))), "inext")
            .unwrap();
        self.f.block_mut(latch).term = Terminator::Br(header);
        // the induction phi goes first so renderers can find it
        self.f.block_mut(header).phis.insert(
            0,
            Phi { result: iv, incoming: vec![(pre, Operand::Const(Const::Int(0))), (latch, Operand::Value(inext))] },
        );

        seq.push(Shape::Loop { header, iv, bound, body: Box::new(body_shape), latch });
        self.cur = exit;
        seq.push(Shape::Block(exit));
    }

    fn branch(&mut self, frag: &Fragment, seq: &mut Vec<Shape>) {
        let cond_block = self.cur;
        let cond = self.ph(Ty::Bool, Role::Cond);
        let then = self.f.add_block();
        let els = (frag.kind == FragmentKind::IfElse).then(|| self.f.add_block());
        let join = self.f.add_block();
        self.f.block_mut(cond_block).term = Terminator::CondBr(cond, then, els.unwrap_or(join));

        self.cur = then;
        let then_shape = self.region(frag.children.first());
        let then_end = self.cur;
        self.f.block_mut(then_end).term = Terminator::Br(join);

        let (else_shape, else_end) = match els {
            Some(e) => {
                self.cur = e;
                let s = self.region(frag.children.get(1));
                let end = self.cur;
                self.f.block_mut(end).term = Terminator::Br(join);
                (Some(Box::new(s)), end)
            }
            None => (None, cond_block),
        };

        let a = self.ph(self.acc_ty, Role::PhiInput);
        let b = self.ph(self.acc_ty, Role::PhiInput);
        let m = self.f.new_value(self.acc_ty, "m");
        self.f.block_mut(join).phis.push(Phi { result: m, incoming: vec![(then_end, a), (else_end, b)] });

        seq.push(Shape::If { cond_block, then: Box::new(then_shape), els: else_shape, join });
        self.cur = join;
        seq.push(Shape::Block(join));
    }
}

/// Type of accumulators and merge values: the return type when there is
/// one, else the element type of the last pointer parameter.
fn primary_type(sig: &Signature) -> Ty {
    if let Some(k) = sig.ret().scalar() {
        return Ty::of_scalar(k);
    }
    sig.params()
        .iter()
        .rev()
        .find_map(|p| p.ty.pointee())
        .map(Ty::of_scalar)
        .unwrap_or(Ty::Int)
}

/// Compiles a composed sequence into a sketch.
pub fn compile(sig: &Signature, sequence: &[Fragment]) -> Result<Sketch, FragmentError> {
    let fragment = super::compose_all(sequence.iter().cloned())
        .ok_or_else(|| FragmentError::Parse(String::new()))?;
    fragment.check(sig)?;
    let mut b = Builder {
        sig,
        f: Function::new(sig.clone()),
        cur: ENTRY,
        loops: Vec::new(),
        pending_acc: 0,
        acc_ty: primary_type(sig),
        next_hole: 0,
    };
    let mut seq = vec![Shape::Block(ENTRY)];
    b.node(&fragment, &mut seq);
    let ret = sig.ret().scalar().map(|k| b.ph(Ty::of_scalar(k), Role::Return));
    b.f.block_mut(b.cur).term = Terminator::Ret(ret);
    b.f.shape = Some(Shape::Seq(seq));
    Ok(Sketch { function: b.f, fragment, sequence: sequence.to_vec() })
}

/// Structural checks that hold for every compiled sketch: all blocks
/// reachable, phi edges matching predecessors, and exactly one back edge
/// into every loop header.
pub fn check_sketch(f: &Function) -> Result<(), IrError> {
    let dom = DomTree::compute(f)?;
    if !f.predecessors()[ENTRY.index()].is_empty() {
        return Err(IrError::EntryHasPredecessors);
    }
    let preds = f.predecessors();
    for (bi, b) in f.blocks.iter().enumerate() {
        for phi in &b.phis {
            let mut from: Vec<_> = phi.incoming.iter().map(|(p, _)| *p).collect();
            from.sort();
            let mut want = preds[bi].clone();
            want.sort();
            if from != want {
                return Err(IrError::PhiEdges { block: bi as u32 });
            }
        }
    }
    let mut back = vec![0usize; f.blocks.len()];
    for (bi, b) in f.blocks.iter().enumerate() {
        for s in b.term.successors() {
            if dom.dominates(s, BlockId(bi as u32)) {
                back[s.index()] += 1;
            }
        }
    }
    let mut headers = Vec::new();
    collect_headers(f.shape.as_ref(), &mut headers);
    for h in &headers {
        if back[h.index()] != 1 {
            return Err(IrError::Malformed(format!("loop header {} has {} back edges", h.0, back[h.index()])));
        }
    }
    if back.iter().sum::<usize>() != headers.len() {
        return Err(IrError::Malformed("back edge outside a loop".into()));
    }
    Ok(())
}

fn collect_headers(s: Option<&Shape>, out: &mut Vec<BlockId>) {
    match s {
        None | Some(Shape::Block(_)) => {}
        Some(Shape::Seq(v)) => v.iter().for_each(|x| collect_headers(Some(x), out)),
        Some(Shape::Loop { header, body, .. }) => {
            out.push(*header);
            collect_headers(Some(body), out);
        }
        Some(Shape::If { then, els, .. }) => {
            collect_headers(Some(then), out);
            collect_headers(els.as_deref(), out);
        }
    }
}
