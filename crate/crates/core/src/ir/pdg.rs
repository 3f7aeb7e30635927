//! Program dependence graph construction: data edges mirror SSA operands,
//! control edges come from post-dominator control dependence on JUMPI
//! decisions. Blocks with no way to reach an exit (including unresolved-jump
//! dead ends) are treated as exits themselves so the analysis stays total.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};



use super::{BlockId, FunctionUnit, SsaProgram, ValueId};

/// Block-level control dependence: for each block, the JUMPI-terminated
/// blocks whose decision directly governs whether it executes.
#[derive(Debug, Clone, Default)]
pub struct ControlDeps {
    pub parents: BTreeMap<BlockId, BTreeSet<BlockId>>,
}

impl ControlDeps {
    pub fn parents_of(&self, block: BlockId) -> impl Iterator<Item = BlockId> + '_ {
        self.parents.get(&block).into_iter().flatten().copied()
    }
}

/// Typed dependence graph over the SSA operations of one function unit.
#[derive(Debug, Clone, Default)]
pub struct Pdg {
    pub nodes: Vec<ValueId>,
    /// (user, used) pairs mirroring SSA operands, restricted to the unit.
    pub data_edges: Vec<(ValueId, ValueId)>,
    /// (operation, governing JUMPI node) pairs.
    pub control_edges: Vec<(ValueId, ValueId)>,
}

impl Pdg {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Compute block-level control dependence for the whole program.
pub fn control_dependence(program: &SsaProgram) -> ControlDeps {
    let n = program.blocks.len();
    let mut deps = ControlDeps::default();
    if n == 0 {
        return deps;
    }

    // Exits: blocks without successors, plus anything that cannot reach one
    // (infinite loops, unresolved-jump regions).
    let mut reaches_exit = vec![false; n];
    {
        let preds: Vec<Vec<BlockId>> = (0..n).map(|b| program.predecessors(b)).collect();
        let mut queue: VecDeque<BlockId> = (0..n)
            .filter(|&b| program.blocks[b].successors.is_empty())
            .collect();
        for &b in &queue {
            reaches_exit[b] = true;
        }
        while let Some(b) = queue.pop_front() {
            for &p in &preds[b] {
                if !reaches_exit[p] {
                    reaches_exit[p] = true;
                    queue.push_back(p);
                }
            }
        }
    }
    let virtual_exit = n;
    let exit_like: Vec<bool> = (0..n)
        .map(|b| program.blocks[b].successors.is_empty() || !reaches_exit[b])
        .collect();

    // Successors including the virtual exit.
    let succs: Vec<Vec<usize>> = (0..n)
        .map(|b| {
            let mut s: Vec<usize> = program.blocks[b].successors.clone();
            if exit_like[b] {
                s.push(virtual_exit);
            }
            s
        })
        .collect();
    let mut rpreds: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for (b, ss) in succs.iter().enumerate() {
        for &s in ss {
            rpreds[s].push(b);
        }
    }

    // Iterative immediate post-dominators (Cooper-Harvey-Kennedy on the
    // reverse graph). Order: reverse postorder of the reverse CFG from exit.
    let order = {
        let mut order = Vec::with_capacity(n + 1);
        let mut seen = vec![false; n + 1];
        let mut stack = vec![(virtual_exit, 0usize)];
        seen[virtual_exit] = true;
        while let Some(&mut (node, ref mut idx)) = stack.last_mut() {
            let preds = &rpreds[node];
            if *idx < preds.len() {
                let next = preds[*idx];
                *idx += 1;
                if !seen[next] {
                    seen[next] = true;
                    stack.push((next, 0));
                }
            } else {
                order.push(node);
                stack.pop();
            }
        }
        order.reverse();
        order
    };
    let pos: HashMap<usize, usize> = order.iter().enumerate().map(|(i, &b)| (b, i)).collect();

    let mut ipdom: Vec<Option<usize>> = vec![None; n + 1];
    ipdom[virtual_exit] = Some(virtual_exit);
    let mut changed = true;
    while changed {
        changed = false;
        for &b in &order {
            if b == virtual_exit {
                continue;
            }
            let mut new_idom: Option<usize> = None;
            for &s in &succs[b] {
                if ipdom[s].is_none() {
                    continue;
                }
                new_idom = Some(match new_idom {
                    None => s,
                    Some(current) => intersect(&ipdom, &pos, s, current),
                });
            }
            if let Some(ni) = new_idom {
                if ipdom[b] != Some(ni) {
                    ipdom[b] = Some(ni);
                    changed = true;
                }
            }
        }
    }

    // Control dependence from the classic edge rule: for a 2-way block a with
    // successor s, every block from s up the post-dominator tree to (not
    // including) ipdom(a) depends on a.
    for a in 0..n {
        if program.blocks[a].successors.len() < 2 {
            continue;
        }
        let Some(stop) = ipdom[a] else { continue };
        for &s in &succs[a] {
            let mut runner = s;
            let mut guard = 0usize;
            while runner != stop && runner != virtual_exit {
                if runner != a {
                    deps.parents.entry(runner).or_default().insert(a);
                }
                let Some(up) = ipdom[runner] else { break };
                if up == runner {
                    break;
                }
                runner = up;
                guard += 1;
                if guard > n + 1 {
                    break;
                }
            }
        }
    }
    deps
}

fn intersect(ipdom: &[Option<usize>], pos: &HashMap<usize, usize>, a: usize, b: usize) -> usize {
    let (mut x, mut y) = (a, b);
    while x != y {
        while pos[&x] > pos[&y] {
            x = ipdom[x].unwrap_or(y);
        }
        while pos[&y] > pos[&x] {
            y = ipdom[y].unwrap_or(x);
        }
    }
    x
}

/// Build the dependence graph for one function unit.
pub fn build_pdg(program: &SsaProgram, unit: &FunctionUnit, deps: &ControlDeps) -> Pdg {
    let mut pdg = Pdg::default();
    let member: HashSet<ValueId> = unit
        .blocks
        .iter()
        .flat_map(|&b| program.block_nodes[b].iter().copied())
        .collect();
    pdg.nodes = {
        let mut nodes: Vec<ValueId> = member.iter().copied().collect();
        nodes.sort_unstable();
        nodes
    };

    for &id in &pdg.nodes {
        for &operand in &program.value(id).operands {
            if member.contains(&operand) {
                pdg.data_edges.push((id, operand));
            }
        }
    }

    for &id in &pdg.nodes {
        let block = program.value(id).block;
        for parent in deps.parents_of(block) {
            if !unit.blocks.contains(&parent) {
                continue;
            }
            if let Some(jumpi) = program.terminator_node(parent) {
                if member.contains(&jumpi) && jumpi != id {
                    pdg.control_edges.push((id, jumpi));
                }
            }
        }
    }
    pdg.data_edges.sort_unstable();
    pdg.control_edges.sort_unstable();
    pdg
}

/// JUMPI decision nodes governing `value`, transitively, ordered by code
/// position (entry first).
pub fn guard_chain(program: &SsaProgram, deps: &ControlDeps, value: ValueId) -> Vec<ValueId> {
    let mut blocks = BTreeSet::new();
    let mut queue = VecDeque::from([program.value(value).block]);
    let mut seen = HashSet::new();
    while let Some(b) = queue.pop_front() {
        if !seen.insert(b) {
            continue;
        }
        for parent in deps.parents_of(b) {
            blocks.insert(parent);
            queue.push_back(parent);
        }
    }
    let mut chain: Vec<(usize, ValueId)> = blocks
        .into_iter()
        .filter_map(|b| {
            program
                .terminator_node(b)
                .map(|node| (program.blocks[b].entry_offset, node))
        })
        .collect();
    chain.sort_unstable();
    chain.into_iter().map(|(_, node)| node).collect()
}

/// Maximum conditional nesting depth above `value`: the longest chain in the
/// control-dependence relation, each loop conditional counted once per path.
pub fn branch_height(program: &SsaProgram, deps: &ControlDeps, value: ValueId) -> usize {
    fn depth(
        deps: &ControlDeps,
        block: BlockId,
        path: &mut HashSet<BlockId>,
        memo: &mut HashMap<BlockId, usize>,
    ) -> usize {
        if let Some(&d) = memo.get(&block) {
            return d;
        }
        if !path.insert(block) {
            return 0; // back edge: the loop conditional was already counted
        }
        let mut best = 0;
        for parent in deps.parents_of(block) {
            best = best.max(1 + depth(deps, parent, path, memo));
        }
        path.remove(&block);
        // Memoize only clean (non-cycle-truncated) results; the path set is
        // usually empty again at this point for DAG-shaped dependence.
        if path.is_empty() {
            memo.insert(block, best);
        }
        best
    }
    let mut path = HashSet::new();
    let mut memo = HashMap::new();
    depth(deps, program.value(value).block, &mut path, &mut memo)
}
