//! Enumeration of instruction sequences for the holes of a sketch.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::ops::ControlFlow;
use std::rc::Rc;

use crate::ir::{
    live_values_at, BinOp, BlockId, CastOp, Const, DomTree, Function, HoleId, Inst, InstKind, Item, Operand, Pos,
    Pred, Ty, ValueId,
};

/// Where a hole instruction takes an operand from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Src {
    Value(ValueId),
    /// Instruction `pos` of hole `hole` (in plan order).
    Hole(usize, usize),
    Const(Const),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum ChoiceKind {
    Bin(BinOp, Src, Src),
    Cmp(Pred, Src, Src),
    Select(Src, Src, Src),
    Cast(CastOp, Src),
    Load(Src, Src),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Choice {
    pub kind: ChoiceKind,
    pub ty: Ty,
}

impl Choice {
    fn sources(&self) -> [Option<Src>; 3] {
        match self.kind {
            ChoiceKind::Bin(_, a, b) | ChoiceKind::Cmp(_, a, b) | ChoiceKind::Load(a, b) => [Some(a), Some(b), None],
            ChoiceKind::Select(c, a, b) => [Some(c), Some(a), Some(b)],
            ChoiceKind::Cast(_, a) => [Some(a), None, None],
        }
    }

    fn uses(&self, hole: usize, pos: usize) -> bool {
        self.sources().into_iter().flatten().any(|s| s == Src::Hole(hole, pos))
    }
}

/// Instruction sequences for every hole, in plan order.
pub(crate) type Fill = Vec<Vec<Choice>>;

pub(crate) struct HoleSite {
    pub block: BlockId,
    pub item: usize,
    pub id: HoleId,
    /// Values live at the hole, most recent first.
    base: Vec<(ValueId, Ty)>,
    /// Earlier holes whose instructions are available here.
    visible: Vec<usize>,
}

/// Per-sketch state for fill enumeration.
pub(crate) struct FillPlan<'s> {
    pub sketch: &'s Function,
    pub dom: DomTree,
    pub holes: Vec<HoleSite>,
    int_consts: Vec<i64>,
    float_consts: Vec<f64>,
    max_per_hole: usize,
    cache: RefCell<HashMap<(usize, Vec<u8>), Rc<Vec<Choice>>>>,
    longest: Cell<usize>,
}

fn ty_code(t: Ty) -> u8 {
    match t {
        Ty::Int => 1,
        Ty::Float => 2,
        Ty::Bool => 3,
        Ty::Ptr(k) => 4 + k as u8,
    }
}

fn op_order(k: &ChoiceKind) -> u8 {
    match k {
        ChoiceKind::Bin(op, ..) => *op as u8,
        ChoiceKind::Load(..) => 8,
        ChoiceKind::Cmp(..) => 9,
        ChoiceKind::Cast(..) => 10,
        ChoiceKind::Select(..) => 11,
    }
}

struct Ranked {
    src: Src,
    rank: usize,
    is_const: bool,
}

impl<'s> FillPlan<'s> {
    pub fn new(sketch: &'s Function, dom: DomTree, int_pool: &[i64], max_per_hole: usize) -> Self {
        let order: HashMap<BlockId, usize> = dom.preorder().iter().enumerate().map(|(i, b)| (*b, i)).collect();
        let mut raw = sketch.holes();
        raw.sort_by_key(|&(b, i, _)| (order[&b], i));
        let mut holes: Vec<HoleSite> = Vec::new();
        for &(block, item, id) in &raw {
            let mut base = live_values_at(sketch, &dom, block, Pos::Item(item));
            base.reverse();
            let visible = holes
                .iter()
                .enumerate()
                .filter(|(_, h)| dom.strictly_dominates(h.block, block) || (h.block == block && h.item < item))
                .map(|(j, _)| j)
                .collect();
            holes.push(HoleSite { block, item, id, base, visible });
        }
        let mut int_consts: Vec<i64> = int_pool.to_vec();
        int_consts.dedup();
        let float_consts = int_consts.iter().map(|&c| c as f64).collect();
        FillPlan { sketch, dom, holes, int_consts, float_consts, max_per_hole, cache: RefCell::new(HashMap::new()), longest: Cell::new(0) }
    }

    /// Instruction choices at position `pos` of hole `h` given the current
    /// partial fill, sorted by operand rank sum and then by opcode.
    fn choices(&self, fill: &Fill, h: usize, pos: usize) -> Rc<Vec<Choice>> {
        let site = &self.holes[h];
        let mut key = Vec::new();
        for &j in &site.visible {
            key.extend(fill[j].iter().map(|c| ty_code(c.ty)));
            key.push(0);
        }
        key.extend(fill[h][..pos].iter().map(|c| ty_code(c.ty)));
        if let Some(c) = self.cache.borrow().get(&(h, key.clone())) {
            return c.clone();
        }
        let list = Rc::new(self.build_choices(fill, h, pos));
        self.longest.set(self.longest.get().max(list.len()));
        self.cache.borrow_mut().insert((h, key), list.clone());
        list
    }

    fn build_choices(&self, fill: &Fill, h: usize, pos: usize) -> Vec<Choice> {
        let site = &self.holes[h];
        let mut ordered: Vec<(Src, Ty)> = (0..pos).rev().map(|p| (Src::Hole(h, p), fill[h][p].ty)).collect();
        for &j in site.visible.iter().rev() {
            ordered.extend((0..fill[j].len()).rev().map(|p| (Src::Hole(j, p), fill[j][p].ty)));
        }
        ordered.extend(site.base.iter().map(|&(v, t)| (Src::Value(v), t)));

        let class = |want: Ty, consts: Vec<Const>| -> Vec<Ranked> {
            let mut out: Vec<Ranked> = ordered
                .iter()
                .filter(|(_, t)| *t == want)
                .map(|(s, _)| Ranked { src: *s, rank: 0, is_const: false })
                .collect();
            for (i, r) in out.iter_mut().enumerate() {
                r.rank = i;
            }
            // the i-th constant ranks like the (i + 1)-th most recent value
            out.extend(consts.into_iter().enumerate().map(|(i, c)| Ranked { src: Src::Const(c), rank: i + 1, is_const: true }));
            out
        };
        let ints = class(Ty::Int, self.int_consts.iter().map(|&c| Const::Int(c)).collect());
        let floats = class(Ty::Float, self.float_consts.iter().map(|&c| Const::Float(c)).collect());
        let bools = class(Ty::Bool, Vec::new());
        let ptrs: Vec<(Src, Ty)> = ordered.iter().filter(|(_, t)| matches!(t, Ty::Ptr(_))).copied().collect();

        let mut out: Vec<(usize, Choice)> = Vec::new();
        let is_ident = |op: BinOp, b: &Src| match (op, b) {
            (BinOp::Add | BinOp::Sub, Src::Const(Const::Int(0))) => true,
            (BinOp::Mul | BinOp::SDiv, Src::Const(Const::Int(0 | 1))) => true,
            (BinOp::FAdd | BinOp::FSub, Src::Const(Const::Float(x))) => *x == 0.0,
            (BinOp::FMul | BinOp::FDiv, Src::Const(Const::Float(x))) => *x == 0.0 || *x == 1.0,
            _ => false,
        };
        for (ops, class, ty) in [
            ([BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::SDiv], &ints, Ty::Int),
            ([BinOp::FAdd, BinOp::FSub, BinOp::FMul, BinOp::FDiv], &floats, Ty::Float),
        ] {
            for op in ops {
                for (ia, a) in class.iter().enumerate() {
                    for (ib, b) in class.iter().enumerate() {
                        if (a.is_const && b.is_const) || is_ident(op, &b.src) {
                            continue;
                        }
                        if op.is_commutative() {
                            if ib < ia || is_ident(op, &a.src) {
                                continue;
                            }
                        } else if ia == ib || a.is_const && op == BinOp::SDiv {
                            continue;
                        }
                        let kind = ChoiceKind::Bin(op, a.src, b.src);
                        out.push((a.rank + b.rank, Choice { kind, ty }));
                    }
                }
            }
        }
        for (ptr, pty) in &ptrs {
            let Ty::Ptr(elem) = pty else { unreachable!() };
            for idx in &ints {
                let kind = ChoiceKind::Load(*ptr, idx.src);
                out.push((idx.rank, Choice { kind, ty: Ty::of_scalar(*elem) }));
            }
        }
        for class in [&ints, &floats] {
            for (ia, a) in class.iter().enumerate() {
                for b in &class[ia + 1..] {
                    if a.is_const {
                        continue;
                    }
                    for pred in Pred::ALL {
                        out.push((a.rank + b.rank, Choice { kind: ChoiceKind::Cmp(pred, a.src, b.src), ty: Ty::Bool }));
                    }
                }
            }
        }
        for (class, op, ty) in [
            (&ints, CastOp::IntToFloat, Ty::Float),
            (&floats, CastOp::FloatToInt, Ty::Int),
            (&bools, CastOp::BoolToInt, Ty::Int),
        ] {
            for a in class.iter().filter(|a| !a.is_const) {
                out.push((a.rank, Choice { kind: ChoiceKind::Cast(op, a.src), ty }));
            }
        }
        for c in &bools {
            for (class, ty) in [(&ints, Ty::Int), (&floats, Ty::Float)] {
                for (ia, a) in class.iter().enumerate() {
                    for (ib, b) in class.iter().enumerate() {
                        if ia == ib || (a.is_const && b.is_const) {
                            continue;
                        }
                        let kind = ChoiceKind::Select(c.src, a.src, b.src);
                        out.push((c.rank + a.rank + b.rank, Choice { kind, ty }));
                    }
                }
            }
        }
        out.sort_by_key(|(r, c)| (*r, op_order(&c.kind)));
        out.into_iter().map(|(_, c)| c).collect()
    }

    /// Calls `visit` on every fill with `k` instructions in total. Fills
    /// are visited by nondecreasing sum of per-position choice indices, and
    /// for each sum by hole distribution and then lexicographically.
    ///
    /// Fills with an instruction that is never used later in its own hole
    /// (other than the last one) or with repeated instructions are skipped.
    pub fn for_each_fill(&self, k: usize, visit: &mut dyn FnMut(&Fill) -> ControlFlow<()>) -> ControlFlow<()> {
        let n = self.holes.len();
        if k == 0 {
            return visit(&vec![Vec::new(); n]);
        }
        if n == 0 || k > n * self.max_per_hole {
            return ControlFlow::Continue(());
        }
        let comps = compositions(k, n, self.max_per_hole);
        for s in 0.. {
            let mut reached = false;
            for comp in &comps {
                let slots: Vec<(usize, usize)> =
                    comp.iter().enumerate().flat_map(|(h, &c)| (0..c).map(move |p| (h, p))).collect();
                let mut fill: Fill = vec![Vec::new(); n];
                self.dfs(&slots, 0, s, &mut fill, &mut reached, visit)?;
            }
            if !reached {
                break;
            }
        }
        ControlFlow::Continue(())
    }

    fn dfs(
        &self,
        slots: &[(usize, usize)],
        at: usize,
        remaining: usize,
        fill: &mut Fill,
        reached: &mut bool,
        visit: &mut dyn FnMut(&Fill) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        if at == slots.len() {
            if remaining == 0 {
                *reached = true;
                return visit(fill);
            }
            return ControlFlow::Continue(());
        }
        let (h, p) = slots[at];
        let list = self.choices(fill, h, p);
        let last = at + 1 == slots.len();
        let range = if last { remaining..remaining + 1 } else { 0..remaining + 1 };
        for idx in range {
            let Some(&c) = list.get(idx) else { break };
            // pruned prefixes still mark the sum as reachable when the
            // remaining slots could absorb what is left of it
            let rest = remaining - idx;
            let absorbable = rest <= (slots.len() - at - 1) * self.longest.get().saturating_sub(1);
            if fill[h].contains(&c) {
                *reached |= absorbable;
                continue;
            }
            fill[h].push(c);
            let hole_done = slots.get(at + 1).map_or(true, |&(nh, _)| nh != h);
            let ok = !hole_done || (0..fill[h].len() - 1).all(|q| fill[h][q + 1..].iter().any(|d| d.uses(h, q)));
            let r = if ok {
                self.dfs(slots, at + 1, rest, fill, reached, visit)
            } else {
                *reached |= absorbable;
                ControlFlow::Continue(())
            };
            fill[h].pop();
            r?;
        }
        ControlFlow::Continue(())
    }

    /// The sketch with every hole replaced by its instructions. Returns the
    /// function and the value ids of the hole instructions, per hole.
    pub fn materialize(&self, fill: &Fill) -> (Function, Vec<Vec<ValueId>>) {
        let mut f = self.sketch.clone();
        let ids: Vec<Vec<ValueId>> = fill
            .iter()
            .enumerate()
            .map(|(h, cs)| cs.iter().enumerate().map(|(p, c)| f.new_value(c.ty, format!("h{h}_{p}"))).collect())
            .collect();
        let op = |s: Src| match s {
            Src::Value(v) => Operand::Value(v),
            Src::Hole(h, p) => Operand::Value(ids[h][p]),
            Src::Const(c) => Operand::Const(c),
        };
        let by_id: HashMap<HoleId, usize> = self.holes.iter().enumerate().map(|(i, h)| (h.id, i)).collect();
        for b in &mut f.blocks {
            if !b.items.iter().any(|it| matches!(it, Item::Hole(_))) {
                continue;
            }
            let old = std::mem::take(&mut b.items);
            for it in old {
                let Item::Hole(hid) = it else {
                    b.items.push(it);
                    continue;
                };
                let h = by_id[&hid];
                for (p, c) in fill[h].iter().enumerate() {
                    let kind = match c.kind {
                        ChoiceKind::Bin(o, a, b) => InstKind::Bin(o, op(a), op(b)),
                        ChoiceKind::Cmp(pr, a, b) => InstKind::Cmp(pr, op(a), op(b)),
                        ChoiceKind::Select(c, a, b) => InstKind::Select(op(c), op(a), op(b)),
                        ChoiceKind::Cast(o, a) => InstKind::Cast(o, op(a)),
                        ChoiceKind::Load(ptr, idx) => InstKind::Load { ptr: op(ptr), index: op(idx), checked: true },
                    };
                    b.items.push(Item::Inst(Inst { result: Some(ids[h][p]), kind }));
                }
            }
        }
        (f, ids)
    }

    /// Result types of the fill's instructions, per hole. Fills with equal
    /// keys materialize to functions that differ only in instruction kinds.
    pub fn type_key(&self, fill: &Fill) -> Vec<u8> {
        let mut key = Vec::new();
        for cs in fill {
            key.extend(cs.iter().map(|c| ty_code(c.ty)));
            key.push(0);
        }
        key
    }

    /// Bit mask (over hole instructions in plan order) of results used by
    /// other hole instructions.
    pub fn static_uses(&self, fill: &Fill) -> u64 {
        let mut offsets = Vec::with_capacity(fill.len());
        let mut n = 0;
        for cs in fill {
            offsets.push(n);
            n += cs.len();
        }
        let mut mask = 0u64;
        for cs in fill {
            for c in cs {
                for s in c.sources().into_iter().flatten() {
                    if let Src::Hole(h, p) = s {
                        mask |= 1 << (offsets[h] + p);
                    }
                }
            }
        }
        mask
    }
}

/// Ways to split `k` into `n` ordered parts of at most `cap` each.
fn compositions(k: usize, n: usize, cap: usize) -> Vec<Vec<usize>> {
    fn go(k: usize, n: usize, cap: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if n == 1 {
            if k <= cap {
                cur.push(k);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        for first in (0..=k.min(cap)).rev() {
            cur.push(first);
            go(k - first, n - 1, cap, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(k, n, cap, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_counts() {
        assert_eq!(compositions(2, 2, 4), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(compositions(5, 1, 4), Vec::<Vec<usize>>::new());
        assert_eq!(compositions(0, 3, 4), vec![vec![0, 0, 0]]);
    }
}
