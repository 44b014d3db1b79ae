//! Directed acyclic graphs over labelled variables.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A DAG whose nodes are indexed `0..n` in label order.
///
/// Parent lists are kept sorted, so two DAGs with the same edge set compare
/// equal regardless of the order edges were inserted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dag {
    labels: Vec<String>,
    parents: Vec<Vec<usize>>,
}

/// Serialized form: labels plus `[parent, child]` label pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagRecord {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
}

impl Dag {
    /// Graph with no edges.
    pub fn empty(labels: Vec<String>) -> Self {
        let n = labels.len();
        Dag {
            labels,
            parents: vec![Vec::new(); n],
        }
    }

    /// Validates a labelled edge list and builds the graph.
    pub fn new<S: AsRef<str>>(labels: Vec<String>, edges: &[(S, S)]) -> Result<Self> {
        let index = label_index(&labels)?;
        let mut pairs = Vec::with_capacity(edges.len());
        for (p, c) in edges {
            let pi = *index
                .get(p.as_ref())
                .ok_or_else(|| Error::UnknownNode(p.as_ref().to_string()))?;
            let ci = *index
                .get(c.as_ref())
                .ok_or_else(|| Error::UnknownNode(c.as_ref().to_string()))?;
            pairs.push((pi, ci));
        }
        Self::from_index_edges(labels, &pairs)
    }

    /// Validates an index edge list and builds the graph.
    pub fn from_index_edges(labels: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let mut dag = Dag::empty(labels);
        let n = dag.len();
        for &(p, c) in edges {
            if p >= n {
                return Err(Error::UnknownNode(format!("#{p}")));
            }
            if c >= n {
                return Err(Error::UnknownNode(format!("#{c}")));
            }
            if p == c {
                return Err(Error::Cycle(vec![
                    dag.labels[p].clone(),
                    dag.labels[p].clone(),
                ]));
            }
            if dag.has_edge(p, c) {
                return Err(Error::DuplicateEdge(
                    dag.labels[p].clone(),
                    dag.labels[c].clone(),
                ));
            }
            if dag.has_edge(c, p) {
                return Err(Error::AntiparallelEdge(
                    dag.labels[p].clone(),
                    dag.labels[c].clone(),
                ));
            }
            dag.insert_parent(c, p);
        }
        if let Some(cycle) = dag.find_cycle() {
            return Err(Error::Cycle(
                cycle.into_iter().map(|i| dag.labels[i].clone()).collect(),
            ));
        }
        Ok(dag)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn parents(&self, child: usize) -> &[usize] {
        &self.parents[child]
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.parents[child].binary_search(&parent).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// All edges as `(parent, child)`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn children(&self, parent: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&c| self.has_edge(parent, c))
            .collect()
    }

    /// True if a directed path `from -> ... -> to` exists (length ≥ 0).
    pub fn reaches(&self, from: usize, to: usize) -> bool {
        if from == to {
            return true;
        }
        let children = self.child_lists();
        let mut seen = vec![false; self.len()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(v) = stack.pop() {
            for &c in &children[v] {
                if c == to {
                    return true;
                }
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        false
    }

    /// Adds `parent -> child` if it keeps the graph acyclic and simple.
    pub fn try_add_edge(&mut self, parent: usize, child: usize) -> bool {
        if parent == child
            || self.has_edge(parent, child)
            || self.has_edge(child, parent)
            || self.reaches(child, parent)
        {
            return false;
        }
        self.insert_parent(child, parent);
        true
    }

    pub fn remove_edge(&mut self, parent: usize, child: usize) -> bool {
        match self.parents[child].binary_search(&parent) {
            Ok(pos) => {
                self.parents[child].remove(pos);
                true
            }
            Err(_) => false,
        }
    }

    pub(crate) fn insert_parent(&mut self, child: usize, parent: usize) {
        if let Err(pos) = self.parents[child].binary_search(&parent) {
            self.parents[child].insert(pos, parent);
        }
    }

    /// Kahn's algorithm; ties resolved by smallest index.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.len();
        let children = self.child_lists();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: std::collections::BTreeSet<usize> =
            (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&v) = ready.iter().next() {
            ready.remove(&v);
            order.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        order
    }

    fn child_lists(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.len()];
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                ch[p].push(c);
            }
        }
        ch
    }

    /// One directed cycle as a node sequence (first node repeated at the end).
    fn find_cycle(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let children = self.child_lists();
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; n];
        let mut pred = vec![usize::MAX; n];
        for root in 0..n {
            if state[root] != 0 {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
            state[root] = 1;
            while let Some(&mut (v, ref mut next)) = stack.last_mut() {
                if *next < children[v].len() {
                    let c = children[v][*next];
                    *next += 1;
                    match state[c] {
                        0 => {
                            state[c] = 1;
                            pred[c] = v;
                            stack.push((c, 0));
                        }
                        1 => {
                            let mut cycle = vec![c];
                            let mut u = v;
                            while u != c {
                                cycle.push(u);
                                u = pred[u];
                            }
                            cycle.push(c);
                            cycle.reverse();
                            return Some(cycle);
                        }
                        _ => {}
                    }
                } else {
                    state[v] = 2;
                    stack.pop();
                }
            }
        }
        None
    }

    pub fn to_record(&self) -> DagRecord {
        DagRecord {
            nodes: self.labels.clone(),
            edges: self
                .edges()
                .into_iter()
                .map(|(p, c)| (self.labels[p].clone(), self.labels[c].clone()))
                .collect(),
        }
    }

    pub fn from_record(rec: &DagRecord) -> Result<Self> {
        Dag::new(rec.nodes.clone(), &rec.edges)
    }

    /// Graphviz rendering. `display` maps a node label to the text shown;
    /// `strength` optionally annotates each edge.
    pub fn to_dot(
        &self,
        display: impl Fn(&str) -> String,
        strength: impl Fn(usize, usize) -> Option<f64>,
    ) -> String {
        let mut out = String::from("digraph bn {\n");
        for (i, l) in self.labels.iter().enumerate() {
            let _ = writeln!(out, "  n{i} [label=\"{}\"];", escape(&display(l)));
        }
        for (p, c) in self.edges() {
            match strength(p, c) {
                Some(s) => {
                    let _ = writeln!(out, "  n{p} -> n{c} [strength={s}, label=\"{s:.3}\"];");
                }
                None => {
                    let _ = writeln!(out, "  n{p} -> n{c};");
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub(crate) fn label_index(labels: &[String]) -> Result<HashMap<&str, usize>> {
    let mut index = HashMap::with_capacity(labels.len());
    for (i, l) in labels.iter().enumerate() {
        if index.insert(l.as_str(), i).is_some() {
            return Err(Error::Validation(format!("duplicate node label `{l}`")));
        }
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn accepts_single_edge() {
        let dag = Dag::new(labels(&["a", "b"]), &[("a", "b")]).unwrap();
        assert_eq!(dag.edges(), vec![(0, 1)]);
    }

    #[test]
    fn rejects_two_cycle() {
        let err = Dag::new(labels(&["a", "b"]), &[("a", "b"), ("b", "a")]).unwrap_err();
        assert!(matches!(err, Error::AntiparallelEdge(_, _)));
    }

    #[test]
    fn rejects_three_cycle_and_names_it() {
        let err = Dag::new(
            labels(&["a", "b", "c"]),
            &[("a", "b"), ("b", "c"), ("c", "a")],
        )
        .unwrap_err();
        match err {
            Error::Cycle(c) => {
                assert_eq!(c.len(), 4);
                assert_eq!(c.first(), c.last());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicates_and_unknowns() {
        assert!(matches!(
            Dag::new(labels(&["a", "b"]), &[("a", "b"), ("a", "b")]),
            Err(Error::DuplicateEdge(_, _))
        ));
        assert!(matches!(
            Dag::new(labels(&["a"]), &[("a", "z")]),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn topological_order_respects_edges() {
        let dag = Dag::new(
            labels(&["a", "b", "c", "d"]),
            &[("d", "a"), ("a", "c"), ("b", "c")],
        )
        .unwrap();
        let order = dag.topological_order();
        let pos = |v: usize| order.iter().position(|&x| x == v).unwrap();
        for (p, c) in dag.edges() {
            assert!(pos(p) < pos(c));
        }
    }

    #[test]
    fn try_add_edge_refuses_cycles() {
        let mut dag = Dag::new(labels(&["a", "b", "c"]), &[("a", "b"), ("b", "c")]).unwrap();
        assert!(!dag.try_add_edge(2, 0));
        assert!(dag.try_add_edge(0, 2));
    }

    #[test]
    fn dot_output_lists_edges() {
        let dag = Dag::new(labels(&["X1997", "Y"]), &[("X1997", "Y")]).unwrap();
        let dot = dag.to_dot(|l| l.trim_start_matches('X').to_string(), |_, _| Some(0.7));
        assert!(dot.contains("label=\"1997\""));
        assert!(dot.contains("n0 -> n1 [strength=0.7"));
    }
}
