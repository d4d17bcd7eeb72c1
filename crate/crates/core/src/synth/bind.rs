//! Candidate bindings for the placeholders of a filled sketch.

use std::collections::HashSet;
use std::ops::ControlFlow;

use crate::ir::{
    live_values_at, use_sites, BinOp, Binding, BlockId, Const, DomTree, Function, Inst, InstKind, Item, Operand, PlaceholderId, Pred, Role,
    Shape, Ty, ValueId,
};

/// Ordered candidate bindings for one placeholder, each with the mask of
/// hole instructions it refers to, and their costs (nondecreasing).
pub(crate) struct Domain {
    pub id: PlaceholderId,
    pub options: Vec<(Binding, u64)>,
    pub costs: Vec<usize>,
}

fn shape_blocks(shape: &Shape, out: &mut Vec<BlockId>) {
    match shape {
        Shape::Block(b) => out.push(*b),
        Shape::Seq(v) => v.iter().for_each(|s| shape_blocks(s, out)),
        Shape::Loop { header, body, latch, .. } => {
            out.extend([*header, *latch]);
            shape_blocks(body, out);
        }
        Shape::If { cond_block, then, els, join } => {
            out.extend([*cond_block, *join]);
            shape_blocks(then, out);
            if let Some(e) = els {
                shape_blocks(e, out);
            }
        }
    }
}

/// Induction variables (outermost first) with the blocks of their loop
/// bodies, and the latch blocks of every loop.
fn loops(shape: Option<&Shape>, ivs: &mut Vec<(ValueId, Vec<BlockId>)>, latches: &mut Vec<BlockId>) {
    match shape {
        None | Some(Shape::Block(_)) => {}
        Some(Shape::Seq(v)) => v.iter().for_each(|s| loops(Some(s), ivs, latches)),
        Some(Shape::Loop { iv, body, latch, .. }) => {
            let mut blocks = Vec::new();
            shape_blocks(body, &mut blocks);
            ivs.push((*iv, blocks));
            latches.push(*latch);
            loops(Some(body), ivs, latches);
        }
        Some(Shape::If { then, els, .. }) => {
            loops(Some(then), ivs, latches);
            loops(els.as_deref(), ivs, latches);
        }
    }
}

fn consts(ty: Ty, pool: &[i64]) -> Vec<Operand> {
    match ty {
        Ty::Int => pool.iter().map(|&c| Operand::Const(Const::Int(c))).collect(),
        Ty::Float => pool.iter().map(|&c| Operand::Const(Const::Float(c as f64))).collect(),
        Ty::Bool => vec![Operand::Const(Const::Bool(true)), Operand::Const(Const::Bool(false))],
        Ty::Ptr(_) => Vec::new(),
    }
}

/// Domains for every placeholder the function uses, in placeholder order.
///
/// Values come most recently defined first. Index-like roles try loop
/// induction variables before other values; accumulator initial values and
/// affine coefficients try constants first. Conditions try boolean values
/// and then comparisons ordered by operand rank.
pub(crate) fn domains(f: &Function, dom: &DomTree, pool: &[i64], hole_bits: &[(ValueId, u64)]) -> Vec<Domain> {
    let mut iv_order = Vec::new();
    let mut latches = Vec::new();
    loops(f.shape.as_ref(), &mut iv_order, &mut latches);
    let ivs: HashSet<ValueId> = iv_order.iter().map(|(v, _)| *v).collect();
    // results of affine index computations
    let affine: HashSet<ValueId> = f
        .blocks
        .iter()
        .flat_map(|b| b.items.iter())
        .filter_map(|it| match it {
            Item::Inst(Inst { result: Some(r), kind: InstKind::Bin(BinOp::Add, _, Operand::Placeholder(p)) })
                if f.placeholders[p.0 as usize].role == Role::AffineOffset =>
            {
                Some(*r)
            }
            _ => None,
        })
        .collect();
    // induction steps are rarely what a placeholder wants
    let steps: HashSet<ValueId> = latches
        .iter()
        .flat_map(|b| f.block(*b).items.iter())
        .filter_map(|it| match it {
            Item::Inst(inst) => inst.result,
            _ => None,
        })
        .collect();
    let bit = |op: &Operand| match op {
        Operand::Value(v) => hole_bits.iter().find(|(h, _)| h == v).map_or(0, |(_, b)| *b),
        _ => 0,
    };
    let carried: HashSet<ValueId> = latches
        .iter()
        .flat_map(|l| f.blocks.iter().filter(move |b| b.phis.iter().any(|p| p.incoming.iter().any(|(from, _)| from == l))))
        .flat_map(|b| b.phis.iter().map(|p| p.result))
        .collect();
    let sites = use_sites(f);
    let mut out = Vec::new();
    for (i, ph) in f.placeholders.iter().enumerate() {
        let Some(site) = sites[i] else { continue };
        let mut live = live_values_at(f, dom, site.block, site.pos);
        live.reverse();
        live.sort_by_key(|(v, _)| steps.contains(v));
        let vals = |t: Ty| -> Vec<Operand> {
            live.iter().filter(|(_, lt)| *lt == t).map(|(v, _)| Operand::Value(*v)).collect()
        };
        let ops: Vec<Operand> = match ph.role {
            Role::Index => {
                // induction variables of enclosing loops and affine results first
                let enclosing: HashSet<ValueId> =
                    iv_order.iter().filter(|(_, body)| body.contains(&site.block)).map(|(v, _)| *v).collect();
                let mut first = vals(Ty::Int);
                first.sort_by_key(|o| match o {
                    Operand::Value(v) if enclosing.contains(v) || affine.contains(v) => 0,
                    Operand::Value(v) if ivs.contains(v) => 1,
                    _ => 2,
                });
                first.extend(consts(Ty::Int, pool));
                first
            }
            Role::AffineVar => {
                let live_ints = vals(Ty::Int);
                let mut v: Vec<Operand> = iv_order
                    .iter()
                    .map(|(iv, _)| Operand::Value(*iv))
                    .filter(|o| live_ints.contains(o))
                    .collect();
                v.extend(live_ints);
                v.extend(consts(Ty::Int, pool));
                v
            }
            Role::AffineScale | Role::AffineOffset => {
                let is_iv = |o: &Operand| matches!(o, Operand::Value(x) if ivs.contains(x));
                let mut rest = vals(Ty::Int);
                if ph.role == Role::AffineScale {
                    // sizes before induction variables
                    rest.sort_by_key(|o| is_iv(o));
                    let mut v = consts(Ty::Int, &[1, 2]);
                    v.extend(rest);
                    v
                } else {
                    rest.sort_by_key(|o| !is_iv(o));
                    let mut v = consts(Ty::Int, &[0, 1]);
                    v.extend(rest);
                    v
                }
            }
            Role::AccInit => {
                let mut v = consts(ph.ty, pool);
                v.extend(vals(ph.ty));
                v
            }
            Role::Cond if ph.ty == Ty::Bool => {
                let mut opts: Vec<(Binding, u64)> =
                    vals(Ty::Bool).into_iter().map(|o| (Binding::Operand(o), bit(&o))).collect();
                let nb = opts.len();
                let mut costs: Vec<usize> = (0..nb).collect();
                let mut cmps: Vec<(usize, usize, Binding, u64)> = Vec::new();
                for t in [Ty::Int, Ty::Float] {
                    let mut class = vals(t);
                    let nvals = class.len();
                    class.extend(consts(t, pool));
                    for ia in 0..nvals {
                        for ib in ia + 1..class.len() {
                            let (a, b) = (class[ia], class[ib]);
                            let rank = |i: usize| if i < nvals { i } else { i - nvals + 1 };
                            let pair = (rank(ia) + rank(ib)).saturating_sub(1);
                            for (pi, pred) in Pred::ALL.into_iter().enumerate() {
                                cmps.push((pair, pi, Binding::Compare(pred, a, b), bit(&a) | bit(&b)));
                            }
                        }
                    }
                }
                // all predicates over one operand pair cost the same
                cmps.sort_by_key(|c| (c.0, c.1));
                costs.extend(cmps.iter().map(|c| nb + c.0));
                opts.extend(cmps.into_iter().map(|c| (c.2, c.3)));
                out.push(Domain { id: PlaceholderId(i as u32), options: opts, costs });
                continue;
            }
            _ => {
                // constants interleave with values: the i-th pool entry costs i + 1
                let mut v = vals(ph.ty);
                if ph.role == Role::Return {
                    // loop-carried values first
                    v.sort_by_key(|o| !matches!(o, Operand::Value(x) if carried.contains(x)));
                }
                let c = consts(ph.ty, pool);
                let mut ranked: Vec<(usize, Operand)> = v.into_iter().enumerate().collect();
                ranked.extend(c.into_iter().enumerate().map(|(i, o)| (i + 1, o)));
                ranked.sort_by_key(|r| r.0);
                let mut seen: Vec<Operand> = Vec::new();
                let mut options = Vec::new();
                let mut costs = Vec::new();
                for (cost, o) in ranked {
                    if !seen.contains(&o) {
                        seen.push(o);
                        options.push((Binding::Operand(o), bit(&o)));
                        costs.push(cost);
                    }
                }
                out.push(Domain { id: PlaceholderId(i as u32), options, costs });
                continue;
            }
        };
        let mut uniq: Vec<Operand> = Vec::with_capacity(ops.len());
        for o in ops {
            if !uniq.contains(&o) {
                uniq.push(o);
            }
        }
        let costs = (0..uniq.len()).collect();
        let options = uniq.into_iter().map(|o| (Binding::Operand(o), bit(&o))).collect();
        out.push(Domain { id: PlaceholderId(i as u32), options, costs });
    }
    out
}

/// Visits index tuples (one index per domain) whose total cost lies in
/// `lo..=hi`, by increasing cost and then lexicographically, stopping after
/// `cap` tuples. `costs[d]` must be nondecreasing. Returns the number of
/// tuples visited and whether `visit` asked to stop.
pub(crate) fn for_each_tuple(
    costs: &[Vec<usize>],
    lo: usize,
    hi: usize,
    cap: usize,
    visit: &mut dyn FnMut(&[usize]) -> ControlFlow<()>,
) -> (usize, ControlFlow<()>) {
    if costs.iter().any(|c| c.is_empty()) {
        return (0, ControlFlow::Continue(()));
    }
    // suffix bounds let the search skip prefixes that cannot reach the sum
    let mut min_suffix = vec![0; costs.len() + 1];
    let mut max_suffix = vec![0; costs.len() + 1];
    for i in (0..costs.len()).rev() {
        min_suffix[i] = min_suffix[i + 1] + costs[i][0];
        max_suffix[i] = max_suffix[i + 1] + costs[i][costs[i].len() - 1];
    }
    struct Walk<'a> {
        costs: &'a [Vec<usize>],
        min_suffix: Vec<usize>,
        max_suffix: Vec<usize>,
        tuple: Vec<usize>,
        count: usize,
        cap: usize,
        caller: bool,
    }
    fn go(w: &mut Walk, at: usize, rem: usize, visit: &mut dyn FnMut(&[usize]) -> ControlFlow<()>) -> ControlFlow<()> {
        if at == w.costs.len() {
            if rem == 0 {
                w.count += 1;
                if visit(&w.tuple).is_break() {
                    w.caller = true;
                    return ControlFlow::Break(());
                }
                if w.count >= w.cap {
                    return ControlFlow::Break(());
                }
            }
            return ControlFlow::Continue(());
        }
        for idx in 0..w.costs[at].len() {
            let c = w.costs[at][idx];
            if c + w.min_suffix[at + 1] > rem {
                break;
            }
            if c + w.max_suffix[at + 1] < rem {
                continue;
            }
            w.tuple[at] = idx;
            go(w, at + 1, rem - c, visit)?;
        }
        ControlFlow::Continue(())
    }
    let (min_sum, max_sum) = (min_suffix[0], max_suffix[0]);
    let mut w = Walk { costs, min_suffix, max_suffix, tuple: vec![0; costs.len()], count: 0, cap, caller: false };
    for s in lo.max(min_sum)..=hi.min(max_sum) {
        if go(&mut w, 0, s, visit).is_break() {
            let flow = if w.caller { ControlFlow::Break(()) } else { ControlFlow::Continue(()) };
            return (w.count, flow);
        }
    }
    (w.count, ControlFlow::Continue(()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collect(sizes: &[usize], lo: usize, hi: usize, cap: usize) -> Vec<Vec<usize>> {
        let costs: Vec<Vec<usize>> = sizes.iter().map(|&n| (0..n).collect()).collect();
        collect_costs(&costs, lo, hi, cap)
    }

    fn collect_costs(costs: &[Vec<usize>], lo: usize, hi: usize, cap: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let _ = for_each_tuple(costs, lo, hi, cap, &mut |t| {
            out.push(t.to_vec());
            ControlFlow::Continue(())
        });
        out
    }

    #[test]
    fn tuples_by_sum() {
        assert_eq!(collect(&[2, 3], 0, 10, 100), vec![
            vec![0, 0],
            vec![0, 1],
            vec![1, 0],
            vec![0, 2],
            vec![1, 1],
            vec![1, 2]
        ]);
        assert_eq!(collect(&[2, 3], 1, 1, 100), vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(collect(&[2, 3], 0, 10, 2).len(), 2);
        assert_eq!(collect(&[], 0, 0, 10), vec![Vec::<usize>::new()]);
        assert!(collect(&[0, 3], 0, 10, 10).is_empty());
    }

    #[test]
    fn every_tuple_once() {
        let all = collect(&[3, 4, 2], 0, 100, 1000);
        assert_eq!(all.len(), 24);
        let set: HashSet<_> = all.iter().cloned().collect();
        assert_eq!(set.len(), 24);
        assert!(all.windows(2).all(|w| w[0].iter().sum::<usize>() <= w[1].iter().sum::<usize>()));
    }

    #[test]
    fn tied_costs_share_a_sum() {
        let costs = vec![vec![0, 1, 1, 1], vec![0, 2]];
        let got = collect_costs(&costs, 1, 1, 100);
        assert_eq!(got, vec![vec![1, 0], vec![2, 0], vec![3, 0]]);
        assert_eq!(collect_costs(&costs, 2, 2, 100), vec![vec![0, 1]]);
        assert_eq!(collect_costs(&costs, 0, 10, 100).len(), 8);
    }
}
