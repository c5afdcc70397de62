//! The speculative prediction tree.
//!
//! The root is anchored at the source prefix observed when the tree was
//! built and always carries mass 1. Named nodes hold predicted source edges
//! (consumed token by token as speech arrives) and, at the leaves, the
//! target translation of the whole hypothetical sentence. Each node has at
//! most one Other child holding the mass of continuations nobody named.
//!
//! Mass is conserved by every operation: advancing conditions on the
//! surviving branches and renormalizes, pruning folds removed mass into the
//! parent's Other child, and expansion splits a leaf's mass among its
//! children.

use std::cmp::Ordering;
use std::fmt::Write as _;

use thiserror::Error;

use crate::predictor::{PredictError, PredictQuery, Prediction, PredictionSet, Predictor};
use crate::{join, Token, END, MASS_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Named,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub kind: NodeKind,
    /// Source tokens from the parent; empty for Other nodes and the root.
    pub edge: Vec<Token>,
    pub path_p: f64,
    /// Full-sentence target hypothesis; set on Named leaves built from
    /// predictions.
    pub translation: Option<Vec<Token>>,
    pub children: Vec<TreeNode>,
    /// Number of edge tokens already matched by observed speech.
    pub edge_pos: usize,
    /// Expansion round that created this node; the root is round 0.
    pub depth: usize,
}

impl TreeNode {
    fn other(path_p: f64, depth: usize) -> Self {
        Self {
            kind: NodeKind::Other,
            edge: Vec::new(),
            path_p,
            translation: None,
            children: Vec::new(),
            edge_pos: 0,
            depth,
        }
    }

    fn named(edge: Vec<Token>, path_p: f64, translation: Vec<Token>, depth: usize) -> Self {
        Self {
            kind: NodeKind::Named,
            edge,
            path_p,
            translation: Some(translation),
            children: Vec::new(),
            edge_pos: 0,
            depth,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn is_named(&self) -> bool {
        self.kind == NodeKind::Named
    }

    /// The edge ends with the end symbol: the hypothesis is a whole sentence.
    pub fn is_complete(&self) -> bool {
        self.edge.last().is_some_and(|t| &**t == END)
    }

    /// Unmatched edge tokens, ignoring a trailing end symbol.
    pub fn pending(&self) -> &[Token] {
        let rest = &self.edge[self.edge_pos..];
        match rest.last() {
            Some(t) if &**t == END => &rest[..rest.len() - 1],
            _ => rest,
        }
    }

    fn leaf_mass(&self) -> f64 {
        if self.is_leaf() {
            self.path_p
        } else {
            self.children.iter().map(TreeNode::leaf_mass).sum()
        }
    }

    fn scale(&mut self, factor: f64) {
        self.path_p *= factor;
        for c in &mut self.children {
            c.scale(factor);
        }
    }

    fn has_named_leaf(&self) -> bool {
        self.children
            .iter()
            .any(|c| c.is_named() && (c.is_leaf() || c.has_named_leaf()))
    }

    fn has_pending_leaf(&self) -> bool {
        self.children.iter().any(|c| {
            c.is_named()
                && if c.is_leaf() {
                    c.edge_pos < c.edge.len()
                } else {
                    c.has_pending_leaf()
                }
        })
    }

    fn count_named_leaves(&self) -> usize {
        self.children
            .iter()
            .map(|c| match (c.kind, c.is_leaf()) {
                (NodeKind::Named, true) => 1,
                (NodeKind::Named, false) => c.count_named_leaves(),
                _ => 0,
            })
            .sum()
    }
}

/// Named children by mass (descending) then edge; Other last.
fn child_order(a: &TreeNode, b: &TreeNode) -> Ordering {
    match (a.kind, b.kind) {
        (NodeKind::Other, NodeKind::Other) => Ordering::Equal,
        (NodeKind::Other, _) => Ordering::Greater,
        (_, NodeKind::Other) => Ordering::Less,
        _ => b
            .path_p
            .total_cmp(&a.path_p)
            .then_with(|| a.edge.cmp(&b.edge)),
    }
}

/// Folds every Other child into one, keeping it last.
fn merge_others(children: &mut Vec<TreeNode>, depth: usize) {
    let n_other = children.iter().filter(|c| !c.is_named()).count();
    if n_other > 1 {
        let mass: f64 = children.iter().filter(|c| !c.is_named()).map(|c| c.path_p).sum();
        children.retain(TreeNode::is_named);
        children.push(TreeNode::other(mass, depth));
    }
    children.sort_by(child_order);
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchOutcome {
    /// At least one branch (or only the Other bucket, when nothing had been
    /// named) is consistent with the token. Carries the surviving named
    /// leaf count.
    Matched { survivors: usize },
    /// Every named branch contradicted the token; the tree is now Other-only.
    Diverged,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("expected token index {expected}, got {got}")]
    OutOfOrderToken { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTree {
    root: TreeNode,
    observed: Vec<Token>,
    anchor_len: usize,
    max_depth: usize,
}

/// Child indices from the root down to a node.
pub type NodePath = Vec<usize>;

impl PredictionTree {
    /// One Named child per prediction plus an Other child for the residual.
    pub fn build(prefix: Vec<Token>, ps: PredictionSet, max_depth: usize) -> Self {
        let mut root = TreeNode::other(1.0, 0);
        root.kind = NodeKind::Named;
        let other = ps.other_mass();
        root.children = children_from(ps.into_items(), other, 1.0, 1);
        Self {
            anchor_len: prefix.len(),
            observed: prefix,
            root,
            max_depth: max_depth.max(1),
        }
    }

    /// A tree with no named hypotheses.
    pub fn other_only(prefix: Vec<Token>, max_depth: usize) -> Self {
        Self::build(prefix, PredictionSet::empty(), max_depth)
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    /// Every source token observed so far, including the anchor prefix.
    pub fn observed(&self) -> &[Token] {
        &self.observed
    }

    /// Length of the prefix the tree was built on.
    pub fn anchor_len(&self) -> usize {
        self.anchor_len
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn total_mass(&self) -> f64 {
        self.root.leaf_mass()
    }

    pub fn has_named(&self) -> bool {
        self.root.has_named_leaf()
    }

    /// Whether some named leaf still predicts the next source token.
    pub fn has_pending(&self) -> bool {
        self.root.has_pending_leaf()
    }

    pub fn named_leaf_count(&self) -> usize {
        self.root.count_named_leaves()
    }

    /// Conditions the tree on the next observed token.
    pub fn advance(&mut self, index: usize, token: &Token) -> Result<MatchOutcome, TreeError> {
        if index != self.observed.len() {
            return Err(TreeError::OutOfOrderToken {
                expected: self.observed.len(),
                got: index,
            });
        }
        self.observed.push(token.clone());
        let had_named = self.has_named();
        step(&mut self.root, token);

        if !self.has_named() {
            self.root.children = vec![TreeNode::other(1.0, 1)];
            self.root.path_p = 1.0;
            return Ok(if had_named {
                MatchOutcome::Diverged
            } else {
                MatchOutcome::Matched { survivors: 0 }
            });
        }
        let total = self.root.leaf_mass();
        for c in &mut self.root.children {
            c.scale(1.0 / total);
        }
        self.root.path_p = 1.0;
        recompute_internal(&mut self.root);
        Ok(MatchOutcome::Matched {
            survivors: self.named_leaf_count(),
        })
    }

    /// Named leaves whose edges are fully matched, whose hypotheses are still
    /// open, and which sit above the depth cap.
    pub fn expandable_leaves(&self) -> Vec<NodePath> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        collect_expandable(&self.root, self.max_depth, &mut path, &mut out);
        out
    }

    /// Splits the leaf at `path` among the predicted children (scaled to its
    /// mass). `None` stands for a failed prediction: the leaf gets a single
    /// Other child. Returns false, changing nothing, when the node is not
    /// expandable.
    pub fn expand_with(&mut self, path: &[usize], ps: Option<&PredictionSet>) -> bool {
        let max_depth = self.max_depth;
        let Some(node) = node_mut(&mut self.root, path) else {
            return false;
        };
        if !(node.is_named()
            && node.is_leaf()
            && node.depth > 0
            && node.edge_pos == node.edge.len()
            && node.depth < max_depth)
        {
            return false;
        }
        node.children = match ps {
            Some(ps) => children_from(ps.items().iter().cloned(), ps.other_mass(), node.path_p, node.depth + 1),
            None => children_from([], 1.0, node.path_p, node.depth + 1),
        };
        true
    }

    /// Asks `backend` for continuations of the observed prefix and expands
    /// the leaf at `path` with them.
    pub fn expand(
        &mut self,
        path: &[usize],
        backend: &dyn Predictor,
        query: &PredictQuery<'_>,
    ) -> Result<bool, PredictError> {
        let q = PredictQuery {
            prefix: &self.observed,
            ..*query
        };
        let result = backend.predict(&q);
        let expanded = self.expand_with(path, result.as_ref().ok());
        result.map(|_| expanded)
    }

    /// Removes Named nodes under `epsilon` and keeps at most `k` Named
    /// children per node, folding removed mass into the parent's Other child.
    pub fn prune(&mut self, epsilon: f64, k: usize) {
        prune_node(&mut self.root, epsilon, k);
    }

    /// Named leaves carrying a translation, in tree order.
    pub fn hypotheses(&self) -> Vec<(&[Token], f64)> {
        let mut out = Vec::new();
        collect_hypotheses(&self.root, &mut out);
        out
    }

    /// Named leaves carrying a translation, by mass then translation.
    pub fn leaf_hypotheses(&self) -> Vec<(&[Token], f64)> {
        let mut out = Vec::new();
        collect_hypotheses(&self.root, &mut out);
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        out
    }

    /// Named leaves that are consistent with the observed source being the
    /// whole utterance, by mass then translation.
    pub fn finished_hypotheses(&self) -> Vec<(&[Token], f64)> {
        let mut out = Vec::new();
        collect_finished(&self.root, &mut out);
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        out
    }

    /// Checks mass conservation and structural invariants.
    pub fn check(&self) -> Result<(), String> {
        let total = self.total_mass();
        if (total - 1.0).abs() > MASS_EPS {
            return Err(format!("total mass {total}"));
        }
        check_node(&self.root, self.max_depth)
    }

    /// Indented text rendering with masses to four decimals.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "root observed={} p={:.4}",
            self.observed.len(),
            self.root.path_p
        );
        for c in &self.root.children {
            dump_node(c, 1, &mut out);
        }
        out
    }
}

fn children_from(
    items: impl IntoIterator<Item = Prediction>,
    other_mass: f64,
    mass: f64,
    depth: usize,
) -> Vec<TreeNode> {
    let mut children: Vec<TreeNode> = items
        .into_iter()
        .map(|p| TreeNode::named(p.continuation, mass * p.p, p.translation, depth))
        .collect();
    children.push(TreeNode::other(mass * other_mass, depth));
    children.sort_by(child_order);
    children
}

fn step(node: &mut TreeNode, token: &Token) {
    let depth = node.depth + 1;
    let old = std::mem::take(&mut node.children);
    for mut c in old {
        match c.kind {
            NodeKind::Other => node.children.push(c),
            NodeKind::Named if c.edge_pos < c.edge.len() => {
                if c.edge[c.edge_pos] == *token {
                    c.edge_pos += 1;
                    node.children.push(c);
                }
            }
            // Fully matched and never expanded: its future is unknown.
            NodeKind::Named if c.is_leaf() => node.children.push(TreeNode::other(c.path_p, depth)),
            NodeKind::Named => {
                step(&mut c, token);
                if c.children.is_empty() {
                    continue;
                }
                c.path_p = c.children.iter().map(|x| x.path_p).sum();
                if c.children.iter().all(|x| !x.is_named()) {
                    node.children.push(TreeNode::other(c.path_p, depth));
                } else {
                    node.children.push(c);
                }
            }
        }
    }
    merge_others(&mut node.children, depth);
}

fn recompute_internal(node: &mut TreeNode) -> f64 {
    if !node.is_leaf() {
        node.path_p = node.children.iter_mut().map(recompute_internal).sum();
    }
    node.path_p
}

fn collect_expandable(node: &TreeNode, max_depth: usize, path: &mut NodePath, out: &mut Vec<NodePath>) {
    for (i, c) in node.children.iter().enumerate() {
        if !c.is_named() {
            continue;
        }
        path.push(i);
        if c.is_leaf() {
            if c.edge_pos == c.edge.len() && c.depth < max_depth {
                out.push(path.clone());
            }
        } else {
            collect_expandable(c, max_depth, path, out);
        }
        path.pop();
    }
}

fn node_mut<'a>(node: &'a mut TreeNode, path: &[usize]) -> Option<&'a mut TreeNode> {
    match path.split_first() {
        None => Some(node),
        Some((&i, rest)) => node_mut(node.children.get_mut(i)?, rest),
    }
}

fn prune_node(node: &mut TreeNode, epsilon: f64, k: usize) {
    if node.is_leaf() {
        return;
    }
    let depth = node.depth + 1;
    let (mut named, others): (Vec<TreeNode>, Vec<TreeNode>) =
        std::mem::take(&mut node.children).into_iter().partition(TreeNode::is_named);
    named.sort_by(child_order);
    let mut folded: f64 = others.iter().map(|c| c.path_p).sum();
    let had_other = !others.is_empty();
    let mut folded_any = false;
    let mut kept = Vec::new();
    for c in named {
        if c.path_p < epsilon || kept.len() >= k {
            folded += c.path_p;
            folded_any = true;
        } else {
            kept.push(c);
        }
    }
    for c in &mut kept {
        prune_node(c, epsilon, k);
    }
    node.children = kept;
    if had_other || folded_any {
        node.children.push(TreeNode::other(folded, depth));
    }
    node.children.sort_by(child_order);
}

fn collect_hypotheses<'a>(node: &'a TreeNode, out: &mut Vec<(&'a [Token], f64)>) {
    for c in &node.children {
        if !c.is_named() {
            continue;
        }
        if c.is_leaf() {
            if let Some(t) = &c.translation {
                out.push((t, c.path_p));
            }
        } else {
            collect_hypotheses(c, out);
        }
    }
}

fn collect_finished<'a>(node: &'a TreeNode, out: &mut Vec<(&'a [Token], f64)>) {
    for c in &node.children {
        if !c.is_named() {
            continue;
        }
        if c.is_leaf() {
            if let (Some(t), true) = (&c.translation, c.pending().is_empty()) {
                out.push((t, c.path_p));
            }
        } else {
            collect_finished(c, out);
        }
    }
}

fn check_node(node: &TreeNode, max_depth: usize) -> Result<(), String> {
    if !(0.0..=1.0 + MASS_EPS).contains(&node.path_p) {
        return Err(format!("path_p {} out of range", node.path_p));
    }
    if node.edge_pos > node.edge.len() {
        return Err("edge_pos past edge".into());
    }
    if node.depth > max_depth {
        return Err(format!("depth {} exceeds {max_depth}", node.depth));
    }
    if !node.is_leaf() {
        let sum: f64 = node.children.iter().map(|c| c.path_p).sum();
        if (sum - node.path_p).abs() > MASS_EPS {
            return Err(format!("children sum {sum} != node mass {}", node.path_p));
        }
        if node.children.iter().filter(|c| !c.is_named()).count() > 1 {
            return Err("more than one Other child".into());
        }
        for c in &node.children {
            if c.depth != node.depth + 1 {
                return Err("child depth mismatch".into());
            }
            check_node(c, max_depth)?;
        }
    }
    Ok(())
}

fn dump_node(node: &TreeNode, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match node.kind {
        NodeKind::Other => {
            let _ = writeln!(out, "{pad}<other> p={:.4}", node.path_p);
        }
        NodeKind::Named => {
            let done = join(&node.edge[..node.edge_pos]);
            let rest = join(&node.edge[node.edge_pos..]);
            let edge = match (done.is_empty(), rest.is_empty()) {
                (true, _) => format!("| {rest}"),
                (false, true) => format!("{done} |"),
                (false, false) => format!("{done} | {rest}"),
            };
            let _ = write!(out, "{pad}[{edge}] p={:.4}", node.path_p);
            if let (true, Some(t)) = (node.is_leaf(), &node.translation) {
                let _ = write!(out, " -> {}", join(t));
            }
            out.push('\n');
        }
    }
    for c in &node.children {
        dump_node(c, indent + 1, out);
    }
}
