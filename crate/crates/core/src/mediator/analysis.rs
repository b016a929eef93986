//! Built-in analyzers: search tree, constraint table, propagation counters,
//! leaf annotations and a symbolic monitor.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::rc::Rc;

use indexmap::IndexMap;

use super::{Call, Mediator, MediatorError};
use crate::trace::{AttrKey, AttrValue, Port};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Root,
    Choice,
    Solution,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub label: u64,
    pub depth: u32,
    pub kind: NodeKind,
    pub usertime: u64,
    pub parent: Option<u64>,
    pub children: Vec<u64>,
    /// Reductions observed while this node was current.
    pub reductions: u64,
    pub awakenings: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Leaf {
    pub node: u64,
    pub depth: u32,
    pub kind: NodeKind,
}

/// Search tree rebuilt from `newChild`/`jumpTo`/`solution`/`failure`
/// messages. Node 0 is the root.
#[derive(Debug, Clone)]
pub struct SearchTreeModel {
    nodes: IndexMap<u64, TreeNode>,
    /// Labels of the open nodes from the root to the current one.
    path: Vec<u64>,
    pub leaves: Vec<Leaf>,
}

impl Default for SearchTreeModel {
    fn default() -> Self {
        let mut nodes = IndexMap::new();
        nodes.insert(
            0,
            TreeNode {
                label: 0,
                depth: 0,
                kind: NodeKind::Root,
                usertime: 0,
                parent: None,
                children: vec![],
                reductions: 0,
                awakenings: 0,
            },
        );
        SearchTreeModel {
            nodes,
            path: vec![0],
            leaves: vec![],
        }
    }
}

impl SearchTreeModel {
    pub fn node(&self, label: u64) -> Option<&TreeNode> {
        self.nodes.get(&label)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.values()
    }

    /// Choice nodes (the root excluded).
    pub fn node_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn current(&self) -> u64 {
        *self.path.last().unwrap()
    }

    pub fn solutions(&self) -> usize {
        self.leaves
            .iter()
            .filter(|l| l.kind == NodeKind::Solution)
            .count()
    }

    pub fn failures(&self) -> usize {
        self.leaves
            .iter()
            .filter(|l| l.kind == NodeKind::Failure)
            .count()
    }

    pub fn observe(
        &mut self,
        port: Port,
        node: u64,
        depth: u32,
        usertime: u64,
    ) -> Result<(), String> {
        match port {
            Port::NewChild => {
                let d = depth as usize;
                if d == 0 || d > self.path.len() {
                    return Err(format!("node {node} at depth {depth} has no open parent"));
                }
                if self.nodes.contains_key(&node) {
                    return Err(format!("node {node} created twice"));
                }
                self.path.truncate(d);
                let parent = self.path[d - 1];
                self.nodes[&parent].children.push(node);
                self.nodes.insert(
                    node,
                    TreeNode {
                        label: node,
                        depth,
                        kind: NodeKind::Choice,
                        usertime,
                        parent: Some(parent),
                        children: vec![],
                        reductions: 0,
                        awakenings: 0,
                    },
                );
                self.path.push(node);
            }
            Port::JumpTo => {
                let d = depth as usize;
                if d >= self.path.len() || self.path[d] != node {
                    return Err(format!(
                        "jump to node {node} at depth {depth} is not on the open path"
                    ));
                }
                self.path.truncate(d + 1);
            }
            Port::Solution | Port::Failure => {
                let kind = if port == Port::Solution {
                    NodeKind::Solution
                } else {
                    NodeKind::Failure
                };
                if let Some(n) = self.nodes.get_mut(&node) {
                    if n.kind != NodeKind::Root {
                        n.kind = kind;
                    }
                }
                self.leaves.push(Leaf { node, depth, kind });
            }
            _ => {}
        }
        Ok(())
    }

    fn note(&mut self, port: Port) {
        let cur = self.current();
        let n = &mut self.nodes[&cur];
        match port {
            Port::Reduce => n.reductions += 1,
            Port::Awake => n.awakenings += 1,
            _ => {}
        }
    }

    /// Reductions in the subtree rooted at `label`.
    pub fn subtree_reductions(&self, label: u64) -> u64 {
        let Some(n) = self.nodes.get(&label) else {
            return 0;
        };
        n.reductions
            + n.children
                .iter()
                .map(|&c| self.subtree_reductions(c))
                .sum::<u64>()
    }

    /// Unique labels and `depth(child) = depth(parent) + 1`.
    pub fn check(&self) -> Result<(), String> {
        for n in self.nodes.values() {
            if let Some(p) = n.parent {
                let pd = self
                    .nodes
                    .get(&p)
                    .ok_or(format!("dangling parent {p}"))?
                    .depth;
                if n.depth != pd + 1 {
                    return Err(format!(
                        "node {} at depth {} under depth {pd}",
                        n.label, n.depth
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        fn walk(t: &SearchTreeModel, label: u64, out: &mut String) {
            let n = &t.nodes[&label];
            let kind = match n.kind {
                NodeKind::Root => "root",
                NodeKind::Choice => "choice",
                NodeKind::Solution => "solution",
                NodeKind::Failure => "failure",
            };
            let _ = writeln!(
                out,
                "{}{} {kind} reductions={}",
                "  ".repeat(n.depth as usize),
                n.label,
                t.subtree_reductions(label)
            );
            for &c in &n.children {
                walk(t, c, out);
            }
        }
        walk(self, 0, &mut s);
        let _ = writeln!(
            s,
            "{} nodes, {} solutions, {} failures",
            self.node_count(),
            self.solutions(),
            self.failures()
        );
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintRow {
    pub cident: i64,
    pub rep: String,
    pub vars: Vec<i64>,
}

/// State shared by the built-in analyzers.
#[derive(Debug, Default)]
pub struct Analysis {
    pub tree: SearchTreeModel,
    pub constraints: IndexMap<i64, ConstraintRow>,
    /// Reductions per (constraint, variable).
    pub propagation: BTreeMap<(i64, String), u64>,
    pub leaf_notes: Vec<(Port, u64, u32)>,
    pub symbolic: Vec<(u64, String)>,
    pub errors: Vec<String>,
}

fn port_of(call: &Call<'_>) -> Option<Port> {
    match call.get(AttrKey::Port) {
        Some(AttrValue::Port(p)) => Some(*p),
        _ => None,
    }
}

fn missing(what: &str) -> MediatorError {
    MediatorError::Handler(format!("missing attribute `{what}`"))
}

/// Registers `search_tree`, `new_cstr`, `spy_propag`, `new_leaf` and
/// `symbolic_monitor` over a shared [`Analysis`].
pub fn register_builtins(m: &mut Mediator, a: &Rc<RefCell<Analysis>>) -> Result<(), MediatorError> {
    let st = Rc::clone(a);
    m.register_handler("search_tree", move |c| {
        let port = port_of(c).ok_or_else(|| missing("port"))?;
        let node = c.int(AttrKey::Node).ok_or_else(|| missing("node"))? as u64;
        let depth = c.int(AttrKey::Depth).ok_or_else(|| missing("depth"))? as u32;
        let time = c.int(AttrKey::Usertime).unwrap_or(0) as u64;
        let mut a = st.borrow_mut();
        let res = a
            .tree
            .observe(port, node, depth, time)
            .and_then(|_| a.tree.check());
        if let Err(e) = res {
            a.errors.push(e.clone());
            return Err(MediatorError::Handler(e));
        }
        Ok(())
    })?;

    let st = Rc::clone(a);
    m.register_handler("new_cstr", move |c| {
        let cident = c
            .int(AttrKey::Cstr)
            .or(c.int(AttrKey::Cident))
            .ok_or_else(|| missing("cstr"))?;
        let rep = match c.get(AttrKey::CstrRep) {
            Some(AttrValue::Text(s)) => s.clone(),
            _ => String::new(),
        };
        let vars = match c.get(AttrKey::VarC) {
            Some(AttrValue::Assoc(pairs)) => pairs
                .iter()
                .filter_map(|(_, v)| match v {
                    AttrValue::Int(i) => Some(*i),
                    _ => None,
                })
                .collect(),
            _ => vec![],
        };
        st.borrow_mut()
            .constraints
            .insert(cident, ConstraintRow { cident, rep, vars });
        Ok(())
    })?;

    let st = Rc::clone(a);
    m.register_handler("spy_propag", move |c| {
        let cident = c
            .int(AttrKey::Cstr)
            .or(c.int(AttrKey::Cident))
            .ok_or_else(|| missing("cstr"))?;
        let var = match c.get(AttrKey::Var) {
            Some(AttrValue::Text(s)) => s.clone(),
            _ => return Err(missing("var")),
        };
        let mut a = st.borrow_mut();
        *a.propagation.entry((cident, var)).or_default() += 1;
        a.tree.note(Port::Reduce);
        Ok(())
    })?;

    let st = Rc::clone(a);
    m.register_handler("new_leaf", move |c| {
        let port = port_of(c).ok_or_else(|| missing("port"))?;
        let node = c.int(AttrKey::Node).ok_or_else(|| missing("node"))? as u64;
        let depth = c.int(AttrKey::Depth).ok_or_else(|| missing("depth"))? as u32;
        st.borrow_mut().leaf_notes.push((port, node, depth));
        Ok(())
    })?;

    let st = Rc::clone(a);
    m.register_handler("symbolic_monitor", move |c| {
        let mut line = String::new();
        for (k, v) in &c.data {
            let _ = write!(line, "{k}={v} ");
        }
        st.borrow_mut()
            .symbolic
            .push((c.chrono, line.trim_end().to_string()));
        Ok(())
    })?;
    Ok(())
}

/// Patterns feeding the built-in analyzers: search tree, constraint table,
/// propagation spy, leaf stops and the symbolic monitor.
pub const VISUALIZATION_PATTERNS: &str = "\
visu_tree:
  when port in [choicePoint, backTo, solution, failure]
  do current(port=P and node=N and depth=D and usertime=Time),
     call search_tree(P,N,D,Time)

visu_cstr:
  when port = post
  do current(cstr=C and cstrRep=Rep
               and varC(cstr)=VarC),
     call new_cstr(C, Rep, VarC)

visu_prop:
  when port = reduce and isNamed(var)
         and (not cstrType='assign')
         and delta notcontains [maxInt]
  do current(cstr=C and var=V),
  call spy_propag(C,V)

leaf:
  when port in [solution, failure]
  do_synchro current(port=P and node=N and depth=D),
             call new_leaf(P,N,D)

symbolic:
  when port in [reduce,suspend]
       and (cstrType = 'fd_element_var'
           or cstrType = 'fd_exactly')
  do_synchro call symbolic_monitor
";
