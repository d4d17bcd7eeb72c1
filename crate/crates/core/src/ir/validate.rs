use super::{
    Binding, BlockId, CastOp, DomTree, Function, InstKind, IrError, Item, Operand,
    Terminator, Ty, ValueId, ENTRY,
};
use crate::spec::ReturnType;

/// Where a value is defined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DefSite {
    Param(usize),
    Phi(BlockId),
    Item(BlockId, usize),
}

/// A program point inside a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pos {
    /// After the phis, before the first item.
    Entry,
    /// Immediately before item `i`.
    Item(usize),
    Term,
    /// On the incoming edge from the given predecessor (a phi operand).
    PhiEdge(BlockId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UseSite {
    pub block: BlockId,
    pub pos: Pos,
}

pub(crate) fn def_sites(f: &Function) -> Vec<Option<DefSite>> {
    let mut sites = vec![None; f.values.len()];
    for i in 0..f.signature.arity() {
        sites[i] = Some(DefSite::Param(i));
    }
    for (bi, b) in f.blocks.iter().enumerate() {
        let bid = BlockId(bi as u32);
        for phi in &b.phis {
            sites[phi.result.index()] = Some(DefSite::Phi(bid));
        }
        for (ii, it) in b.items.iter().enumerate() {
            if let Item::Inst(inst) = it {
                if let Some(r) = inst.result {
                    sites[r.index()] = Some(DefSite::Item(bid, ii));
                }
            }
        }
    }
    sites
}

/// Normalizes a phi-edge use to the end of the predecessor.
fn point(site: UseSite) -> (BlockId, Pos) {
    match site.pos {
        Pos::PhiEdge(pred) => (pred, Pos::Term),
        p => (site.block, p),
    }
}

pub(crate) fn available(dom: &DomTree, def: DefSite, site: UseSite) -> bool {
    let (ub, pos) = point(site);
    match def {
        DefSite::Param(_) => true,
        DefSite::Phi(b) => dom.dominates(b, ub),
        DefSite::Item(b, i) => {
            dom.strictly_dominates(b, ub)
                || (b == ub
                    && match pos {
                        Pos::Item(j) => j > i,
                        Pos::Term => true,
                        _ => false,
                    })
        }
    }
}

/// Values available at a program point, in definition order: parameters,
/// then definitions in dominating blocks (outermost first), then earlier
/// definitions in the block itself.
pub fn live_values_at(f: &Function, dom: &DomTree, block: BlockId, pos: Pos) -> Vec<(ValueId, Ty)> {
    let (block, pos) = point(UseSite { block, pos });
    let mut out: Vec<ValueId> = (0..f.signature.arity()).map(|i| ValueId(i as u32)).collect();
    let mut push_block = |b: BlockId, upto: Option<usize>| {
        let blk = f.block(b);
        out.extend(blk.phis.iter().map(|p| p.result));
        let n = upto.unwrap_or(blk.items.len()).min(blk.items.len());
        for it in &blk.items[..n] {
            if let Item::Inst(inst) = it {
                out.extend(inst.result);
            }
        }
    };
    for d in dom.dominators(block) {
        push_block(d, None);
    }
    let upto = match pos {
        Pos::Entry => Some(0),
        Pos::Item(i) => Some(i),
        Pos::Term | Pos::PhiEdge(_) => None,
    };
    push_block(block, upto);
    out.into_iter().map(|v| (v, f.values[v.index()].ty)).collect()
}

/// First use site of every placeholder, `None` for unused ones.
pub fn use_sites(f: &Function) -> Vec<Option<UseSite>> {
    let mut sites = vec![None; f.placeholders.len()];
    let note = |op: Operand, site: UseSite, sites: &mut Vec<Option<UseSite>>| {
        if let Operand::Placeholder(p) = op {
            sites[p.0 as usize].get_or_insert(site);
        }
    };
    for (bi, b) in f.blocks.iter().enumerate() {
        let block = BlockId(bi as u32);
        for phi in &b.phis {
            for &(pred, op) in &phi.incoming {
                note(op, UseSite { block, pos: Pos::PhiEdge(pred) }, &mut sites);
            }
        }
        for (ii, it) in b.items.iter().enumerate() {
            if let Item::Inst(inst) = it {
                for op in inst.kind.operands() {
                    note(op, UseSite { block, pos: Pos::Item(ii) }, &mut sites);
                }
            }
        }
        let site = UseSite { block, pos: Pos::Term };
        match b.term {
            Terminator::CondBr(c, ..) => note(c, site, &mut sites),
            Terminator::Ret(Some(v)) => note(v, site, &mut sites),
            _ => {}
        }
    }
    sites
}

struct Checker<'a> {
    f: &'a Function,
    dom: &'a DomTree,
    defs: Vec<Option<DefSite>>,
}

impl Checker<'_> {
    fn value_ok(&self, v: ValueId, site: UseSite) -> Result<(), IrError> {
        let def = self
            .defs
            .get(v.index())
            .copied()
            .flatten()
            .ok_or_else(|| IrError::Malformed(format!("value {} has no definition", v.0)))?;
        if available(self.dom, def, site) {
            Ok(())
        } else {
            Err(IrError::Dominance { value: v.0, block: site.block.0 })
        }
    }

    /// Checks an operand and returns its resolved type.
    fn operand(&self, op: Operand, site: UseSite) -> Result<Ty, IrError> {
        match op {
            Operand::Value(v) => {
                self.value_ok(v, site)?;
                Ok(self.f.values[v.index()].ty)
            }
            Operand::Const(c) => Ok(c.ty()),
            Operand::Placeholder(p) => {
                let ph = self
                    .f
                    .placeholders
                    .get(p.0 as usize)
                    .ok_or_else(|| IrError::Malformed(format!("unknown placeholder {}", p.0)))?;
                let ty = match ph.binding {
                    None => return Err(IrError::UnboundPlaceholder(p.0)),
                    Some(Binding::Operand(Operand::Placeholder(_))) => {
                        return Err(IrError::Malformed("placeholder bound to placeholder".into()))
                    }
                    Some(Binding::Operand(o)) => self.operand(o, site)?,
                    Some(Binding::Compare(_, a, b)) => {
                        let (ta, tb) = (self.operand(a, site)?, self.operand(b, site)?);
                        if ta != tb || !matches!(ta, Ty::Int | Ty::Float) {
                            return Err(IrError::Type("comparison operands".into()));
                        }
                        Ty::Bool
                    }
                };
                if ty != ph.ty {
                    return Err(IrError::Type(format!("placeholder {} bound to {ty}, wants {}", p.0, ph.ty)));
                }
                Ok(ty)
            }
        }
    }

    fn expect(&self, op: Operand, site: UseSite, want: Ty) -> Result<(), IrError> {
        let t = self.operand(op, site)?;
        if t == want {
            Ok(())
        } else {
            Err(IrError::Type(format!("expected {want}, found {t}")))
        }
    }

    fn inst(&self, kind: &InstKind, result: Option<ValueId>, site: UseSite) -> Result<(), IrError> {
        match *kind {
            InstKind::Bin(op, a, b) => {
                let t = if op.is_float() { Ty::Float } else { Ty::Int };
                self.expect(a, site, t)?;
                self.expect(b, site, t)?;
            }
            InstKind::Cmp(_, a, b) => {
                let ta = self.operand(a, site)?;
                if !matches!(ta, Ty::Int | Ty::Float) {
                    return Err(IrError::Type("comparison of non-scalar".into()));
                }
                self.expect(b, site, ta)?;
            }
            InstKind::Select(c, a, b) => {
                self.expect(c, site, Ty::Bool)?;
                let ta = self.operand(a, site)?;
                self.expect(b, site, ta)?;
            }
            InstKind::Load { ptr, index, .. } => {
                if !matches!(self.operand(ptr, site)?, Ty::Ptr(_)) {
                    return Err(IrError::Type("load from non-pointer".into()));
                }
                self.expect(index, site, Ty::Int)?;
            }
            InstKind::Store { value, ptr, index, .. } => {
                let Ty::Ptr(e) = self.operand(ptr, site)? else {
                    return Err(IrError::Type("store to non-pointer".into()));
                };
                self.expect(value, site, Ty::of_scalar(e))?;
                self.expect(index, site, Ty::Int)?;
            }
            InstKind::Cast(op, a) => {
                let want = match op {
                    CastOp::IntToFloat => Ty::Int,
                    CastOp::FloatToInt => Ty::Float,
                    CastOp::BoolToInt => Ty::Bool,
                };
                self.expect(a, site, want)?;
            }
        }
        let declared = result.map(|r| self.f.values[r.index()].ty);
        if declared != self.f.result_type(kind) {
            return Err(IrError::Type("instruction result type".into()));
        }
        Ok(())
    }
}

/// Structural, type and dominance validation. Returns the dominator tree.
pub fn validate(f: &Function) -> Result<DomTree, IrError> {
    let preds = f.predecessors();
    if !preds[ENTRY.index()].is_empty() {
        return Err(IrError::EntryHasPredecessors);
    }
    for b in &f.blocks {
        for s in b.term.successors() {
            if s.index() >= f.blocks.len() {
                return Err(IrError::Malformed(format!("branch to missing block {}", s.0)));
            }
        }
    }
    let dom = DomTree::compute(f)?;
    if let Some(&(_, _, h)) = f.holes().first() {
        return Err(IrError::UnfilledHole(h.0));
    }
    if let Some(p) = f.unbound_placeholders().first() {
        // unused placeholders are harmless; only report ones that are reached
        let sites = use_sites(f);
        if sites[p.0 as usize].is_some() {
            return Err(IrError::UnboundPlaceholder(p.0));
        }
    }
    let ck = Checker { f, dom: &dom, defs: def_sites(f) };
    for (bi, b) in f.blocks.iter().enumerate() {
        let block = BlockId(bi as u32);
        for phi in &b.phis {
            let mut from: Vec<BlockId> = phi.incoming.iter().map(|(p, _)| *p).collect();
            from.sort();
            let mut want = preds[bi].clone();
            want.sort();
            if from != want {
                return Err(IrError::PhiEdges { block: block.0 });
            }
            let ty = f.values[phi.result.index()].ty;
            for &(pred, op) in &phi.incoming {
                ck.expect(op, UseSite { block, pos: Pos::PhiEdge(pred) }, ty)?;
            }
        }
        for (ii, it) in b.items.iter().enumerate() {
            if let Item::Inst(inst) = it {
                ck.inst(&inst.kind, inst.result, UseSite { block, pos: Pos::Item(ii) })?;
            }
        }
        let site = UseSite { block, pos: Pos::Term };
        match b.term {
            Terminator::Br(_) => {}
            Terminator::CondBr(c, ..) => ck.expect(c, site, Ty::Bool)?,
            Terminator::Ret(v) => match (v, f.signature.ret()) {
                (None, ReturnType::Void) => {}
                (Some(op), rt) if rt != ReturnType::Void => {
                    ck.expect(op, site, Ty::of_scalar(rt.scalar().unwrap()))?
                }
                _ => return Err(IrError::Type("return value does not match signature".into())),
            },
        }
    }
    Ok(dom)
}

