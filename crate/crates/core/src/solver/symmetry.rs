//! Interchangeable subtrees of a tree-shaped network.
//!
//! The graph is rooted at a pinned source. Two siblings are twins when their
//! subtrees are isomorphic with identical device figures, and neither holds
//! a pinned source. Twins are interchangeable: swapping their contents keeps
//! every route and every power term unchanged.

use std::collections::BTreeMap;

use crate::embedding::Coeffs;
use crate::topology::{NodeId, PhysicalGraph};

#[derive(Debug, Clone)]
pub(crate) struct Symmetry {
    enabled: bool,
    root: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    kind: Vec<u32>,
    /// Twins with a smaller id.
    earlier_twins: Vec<Vec<usize>>,
}

impl Symmetry {
    /// Disabled (every host allowed, identity canonical form) unless the
    /// graph is a tree.
    pub fn new(graph: &PhysicalGraph, sources: &[NodeId]) -> Symmetry {
        let n = graph.len();
        let mut sym = Symmetry {
            enabled: false,
            root: 0,
            parent: vec![None; n],
            children: vec![Vec::new(); n],
            kind: (0..n as u32).collect(),
            earlier_twins: vec![Vec::new(); n],
        };
        if n == 0 || !graph.is_tree() {
            return sym;
        }
        sym.enabled = true;
        sym.root = sources.first().map_or(0, |s| s.0);

        let mut order = vec![sym.root];
        let mut seen = vec![false; n];
        seen[sym.root] = true;
        let mut i = 0;
        while i < order.len() {
            let u = order[i];
            for &v in graph.neighbors(NodeId(u)) {
                if !seen[v.0] {
                    seen[v.0] = true;
                    sym.parent[v.0] = Some(u);
                    sym.children[u].push(v.0);
                    order.push(v.0);
                }
            }
            i += 1;
        }

        let mut label = vec![0u32; n];
        for (k, s) in sources.iter().enumerate() {
            label[s.0] = k as u32 + 1;
        }
        let mut interned: BTreeMap<(String, Vec<u32>), u32> = BTreeMap::new();
        for &u in order.iter().rev() {
            let node = graph.node(NodeId(u));
            let up = sym.parent[u]
                .and_then(|p| graph.link_between(NodeId(u), NodeId(p)))
                .map_or(0, |l| l.capacity.to_bits());
            let sig = format!("{}|{:?}|{}|{}", node.class, Coeffs::of(node), up, label[u]);
            let mut kids: Vec<u32> = sym.children[u].iter().map(|&c| sym.kind[c]).collect();
            kids.sort_unstable();
            let next = interned.len() as u32;
            sym.kind[u] = *interned.entry((sig, kids)).or_insert(next);
        }
        for u in 0..n {
            for &c in &sym.children[u] {
                let twins = sym.children[u].iter().copied().filter(|&d| d < c && sym.kind[d] == sym.kind[c]).collect();
                sym.earlier_twins[c] = twins;
            }
        }
        sym
    }

    pub fn parent(&self, u: usize) -> Option<usize> {
        self.parent[u]
    }

    pub fn children(&self, u: usize) -> &[usize] {
        &self.children[u]
    }

    pub fn kind(&self, u: usize) -> u32 {
        self.kind[u]
    }

    pub fn earlier_twins(&self, u: usize) -> &[usize] {
        &self.earlier_twins[u]
    }

    /// Depth-first preorder from the root, children by id.
    pub fn preorder(&self) -> Vec<usize> {
        let n = self.parent.len();
        if !self.enabled {
            return (0..n).collect();
        }
        let mut out = Vec::with_capacity(n);
        let mut stack = vec![self.root];
        while let Some(u) = stack.pop() {
            out.push(u);
            stack.extend(self.children[u].iter().rev());
        }
        out
    }

    pub fn ancestors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(Some(node), move |&u| if self.enabled { self.parent[u] } else { None })
    }

    #[cfg(test)]
    /// A host is allowed when every empty subtree on its way to the root is
    /// the first empty one among its twins. `used[u]` counts VMs in the
    /// subtree of `u`.
    pub fn allowed(&self, host: usize, used: &[u32]) -> bool {
        if !self.enabled {
            return true;
        }
        self.ancestors(host)
            .filter(|&a| used[a] == 0)
            .all(|a| self.earlier_twins[a].iter().all(|&t| used[t] > 0))
    }

    /// Representative of the placement's symmetry class: within every twin
    /// group, subtrees are reordered by the smallest VM index they hold.
    /// `hosts[i]` is the host of VM `i`, or `usize::MAX` for a VM left out,
    /// which stays as it is.
    pub fn canonical(&self, hosts: &[usize]) -> Vec<usize> {
        if !self.enabled {
            return hosts.to_vec();
        }
        let n = self.parent.len();
        let mut first = vec![usize::MAX; n];
        for (i, &h) in hosts.iter().enumerate().filter(|(_, &h)| h != usize::MAX) {
            for a in self.ancestors(h) {
                first[a] = first[a].min(i);
            }
        }
        let mut map = vec![usize::MAX; n];
        let mut stack = vec![(self.root, self.root)];
        while let Some((src, dst)) = stack.pop() {
            map[src] = dst;
            let mut by_kind: BTreeMap<u32, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
            for &c in &self.children[src] {
                by_kind.entry(self.kind[c]).or_default().0.push(c);
            }
            for &c in &self.children[dst] {
                by_kind.entry(self.kind[c]).or_default().1.push(c);
            }
            for (_, (mut from, to)) in by_kind {
                from.sort_by_key(|&c| (first[c], c));
                stack.extend(from.into_iter().zip(to));
            }
        }
        hosts.iter().map(|&h| if h == usize::MAX { h } else { map[h] }).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;
    use crate::topology::{build_cfn, TopologyConfig};

    fn paper() -> PhysicalGraph {
        build_cfn(&TopologyConfig::paper_default(), &Catalog::default_catalog()).unwrap()
    }

    #[test]
    fn twins_in_the_default_network() {
        let g = paper();
        let s = Symmetry::new(&g, &[NodeId(0)]);
        let id = |name: &str| g.find(name).unwrap().0;
        // Zones 1..3 hang off olt0 next to the source zone.
        assert_eq!(s.earlier_twins[id("onu2")], vec![id("onu1")]);
        assert_eq!(s.earlier_twins[id("onu3")], vec![id("onu1"), id("onu2")]);
        assert!(s.earlier_twins[id("onu1")].is_empty());
        // olt1 and olt2 both serve three zones.
        assert_eq!(s.earlier_twins[id("olt2")], vec![id("olt1")]);
        assert!(s.earlier_twins[id("iot1")].is_empty());
        assert_eq!(s.earlier_twins[id("iot3")], vec![id("iot2")]);
    }

    #[test]
    fn allowed_follows_first_empty_twin() {
        let g = paper();
        let s = Symmetry::new(&g, &[NodeId(0)]);
        let id = |name: &str| g.find(name).unwrap().0;
        let mut used = vec![0u32; g.len()];
        for a in s.ancestors(0).collect::<Vec<_>>() {
            used[a] += 1;
        }
        assert!(s.allowed(id("iot2"), &used));
        assert!(!s.allowed(id("iot3"), &used));
        assert!(!s.allowed(id("iot4"), &used));
        assert!(s.allowed(id("af1"), &used));
        assert!(!s.allowed(id("af2"), &used));
        for a in s.ancestors(id("iot2")).collect::<Vec<_>>() {
            used[a] += 1;
        }
        assert!(s.allowed(id("iot3"), &used));
        assert!(s.allowed(id("iot4"), &used));
        assert!(!s.allowed(id("iot6"), &used));
    }

    #[test]
    fn canonical_merges_mirrored_placements() {
        let g = paper();
        let s = Symmetry::new(&g, &[NodeId(0)]);
        let id = |name: &str| g.find(name).unwrap().0;
        let a = s.canonical(&[0, id("iot5"), id("af2"), id("iot9")]);
        let b = s.canonical(&[0, id("iot2"), id("af1"), id("iot19")]);
        assert_eq!(a, b);
        assert_eq!(a, vec![0, id("iot2"), id("af1"), id("iot14")]);
        // Same OLT subtree for the last two VMs: a different class.
        let c = s.canonical(&[0, id("iot2"), id("af1"), id("iot13")]);
        assert_ne!(a, c);
    }

    #[test]
    fn sources_are_never_twins() {
        let g = paper();
        let s = Symmetry::new(&g, &[NodeId(0), NodeId(2)]);
        let id = |name: &str| g.find(name).unwrap().0;
        assert!(s.earlier_twins[id("onu1")].is_empty());
        assert!(s.earlier_twins[id("onu2")].is_empty());
        assert_eq!(s.earlier_twins[id("onu3")], vec![id("onu2")]);
        assert_eq!(s.earlier_twins[id("iot3")], Vec::<usize>::new());
    }
}
