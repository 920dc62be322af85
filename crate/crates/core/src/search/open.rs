use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy)]
struct Entry {
    key: f64,
    g: f64,
    order: u64,
    node: NodeId,
    stamp: u64,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    /// Max-heap order: smaller key first, then larger g, then earlier insertion.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .total_cmp(&self.key)
            .then(self.g.total_cmp(&other.g))
            .then(other.order.cmp(&self.order))
    }
}

/// Priority queue on `g + ε·h` with lazy deletion: an entry is live only while
/// its stamp matches the one recorded by the caller for that node.
#[derive(Debug, Default)]
pub struct OpenList {
    heap: BinaryHeap<Entry>,
    counter: u64,
}

impl OpenList {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert and return the stamp the caller must store for `node`.
    pub fn push(&mut self, node: NodeId, key: f64, g: f64) -> u64 {
        self.counter += 1;
        let stamp = self.counter;
        self.heap.push(Entry { key, g, order: stamp, node, stamp });
        stamp
    }

    fn drop_stale(&mut self, live: &dyn Fn(NodeId, u64) -> bool) {
        while let Some(top) = self.heap.peek() {
            if live(top.node, top.stamp) {
                break;
            }
            self.heap.pop();
        }
    }

    /// Pop the live entry with the smallest key: `(node, key)`.
    pub fn pop(&mut self, live: &dyn Fn(NodeId, u64) -> bool) -> Option<(NodeId, f64)> {
        self.drop_stale(live);
        self.heap.pop().map(|e| (e.node, e.key))
    }

    pub fn min_key(&mut self, live: &dyn Fn(NodeId, u64) -> bool) -> f64 {
        self.drop_stale(live);
        self.heap.peek().map_or(f64::INFINITY, |e| e.key)
    }

    pub fn is_empty(&mut self, live: &dyn Fn(NodeId, u64) -> bool) -> bool {
        self.drop_stale(live);
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pops_come_out_in_key_order(keys in prop::collection::vec((0.0f64..10.0, 0.0f64..5.0), 1..60)) {
            let mut open = OpenList::new();
            let mut stamps = vec![0u64; keys.len()];
            for (i, (k, g)) in keys.iter().enumerate() {
                stamps[i] = open.push(i, *k, *g);
            }
            // re-push a third of the nodes with new keys; their old entries go stale
            let mut current: Vec<(f64, f64)> = keys.clone();
            for i in (0..keys.len()).step_by(3) {
                current[i].0 += 1.5;
                stamps[i] = open.push(i, current[i].0, current[i].1);
            }
            let live = |n: NodeId, s: u64| stamps[n] == s;
            let mut prev: Option<(f64, f64)> = None;
            let mut seen = 0;
            while let Some((n, k)) = open.pop(&live) {
                prop_assert_eq!(k, current[n].0);
                if let Some((pk, pg)) = prev {
                    prop_assert!(pk < k || (pk == k && pg >= current[n].1));
                }
                prev = Some((k, current[n].1));
                seen += 1;
            }
            prop_assert_eq!(seen, keys.len());
        }
    }

    #[test]
    fn ties_prefer_deeper_then_older() {
        let mut open = OpenList::new();
        let s: Vec<u64> = vec![open.push(0, 1.0, 0.2), open.push(1, 1.0, 0.5), open.push(2, 1.0, 0.5)];
        let live = |n: NodeId, st: u64| s[n] == st;
        assert_eq!(open.pop(&live).unwrap().0, 1);
        assert_eq!(open.pop(&live).unwrap().0, 2);
        assert_eq!(open.pop(&live).unwrap().0, 0);
    }
}
