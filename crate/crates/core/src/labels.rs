use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub type ClassId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Labels {
    Single(Vec<ClassId>),
    /// Sorted, deduplicated, non-empty label set per node.
    Multi(Vec<Vec<ClassId>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    num_classes: usize,
    labels: Labels,
}

impl LabelSet {
    pub fn single(num_classes: usize, labels: Vec<ClassId>) -> Result<Self> {
        if let Some((v, &c)) = labels.iter().enumerate().find(|(_, &c)| c >= num_classes) {
            return Err(Error::Invalid(format!(
                "node {v} has class {c} outside [0, {num_classes})"
            )));
        }
        Ok(LabelSet {
            num_classes,
            labels: Labels::Single(labels),
        })
    }

    pub fn multi(num_classes: usize, mut labels: Vec<Vec<ClassId>>) -> Result<Self> {
        for (v, set) in labels.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.is_empty() {
                return Err(Error::Invalid(format!("node {v} has an empty label set")));
            }
            if let Some(&c) = set.iter().find(|&&c| c >= num_classes) {
                return Err(Error::Invalid(format!(
                    "node {v} has class {c} outside [0, {num_classes})"
                )));
            }
        }
        Ok(LabelSet {
            num_classes,
            labels: Labels::Multi(labels),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        match &self.labels {
            Labels::Single(l) => l.len(),
            Labels::Multi(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_multi(&self) -> bool {
        matches!(self.labels, Labels::Multi(_))
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    /// Single-label view, or an error naming the operation that needs it.
    pub fn require_single(&self, op: &str) -> Result<&[ClassId]> {
        match &self.labels {
            Labels::Single(l) => Ok(l),
            Labels::Multi(_) => Err(Error::Unsupported(format!(
                "{op} is defined for single-label data only"
            ))),
        }
    }

    /// Labels of node `v` (one element in single-label mode).
    pub fn of(&self, v: usize) -> &[ClassId] {
        match &self.labels {
            Labels::Single(l) => std::slice::from_ref(&l[v]),
            Labels::Multi(l) => &l[v],
        }
    }

    /// Nodes carrying each class. Disjoint in single-label mode.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_classes];
        for v in 0..self.len() {
            for &c in self.of(v) {
                members[c].push(v);
            }
        }
        members
    }

    /// Rows selected in the given order.
    pub fn select(&self, nodes: &[usize]) -> LabelSet {
        let labels = match &self.labels {
            Labels::Single(l) => Labels::Single(nodes.iter().map(|&v| l[v]).collect()),
            Labels::Multi(l) => Labels::Multi(nodes.iter().map(|&v| l[v].clone()).collect()),
        };
        LabelSet {
            num_classes: self.num_classes,
            labels,
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for v in 0..self.len() {
            let joined: Vec<String> = self.of(v).iter().map(|c| c.to_string()).collect();
            writeln!(out, "{v}\t{}", joined.join(";"))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

/// Parses `node<TAB>label` or `node<TAB>l1;l2;...` lines. Any `;` switches
/// the whole file to multi-label mode. Node ids must cover `0..n` exactly once.
pub fn load_labels(path: &Path, num_classes: usize) -> Result<LabelSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    parse_labels(&text, path, num_classes)
}

pub fn parse_labels(text: &str, path: &Path, num_classes: usize) -> Result<LabelSet> {
    let mut entries: Vec<(usize, Vec<ClassId>, usize)> = Vec::new();
    let mut multi = false;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (node, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, lineno, "expected node<TAB>label"))?;
        let node: usize = node
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("invalid node id {node:?}")))?;
        let rest = rest.trim();
        multi |= rest.contains(';');
        let mut set = Vec::new();
        for part in rest.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let c: ClassId = part
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("invalid class id {part:?}")))?;
            if c >= num_classes {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("class {c} outside valid range [0, {num_classes})"),
                ));
            }
            set.push(c);
        }
        if set.is_empty() {
            return Err(Error::parse(path, lineno, format!("node {node} has no labels")));
        }
        entries.push((node, set, lineno));
    }

    let n = entries.len();
    let mut slots: Vec<Option<Vec<ClassId>>> = vec![None; n];
    for (node, set, lineno) in entries {
        if node >= n {
            return Err(Error::parse(
                path,
                lineno,
                format!("node id {node} leaves a gap (file lists {n} nodes)"),
            ));
        }
        if slots[node].is_some() {
            return Err(Error::parse(path, lineno, format!("node {node} listed twice")));
        }
        slots[node] = Some(set);
    }
    let sets: Vec<Vec<ClassId>> = slots.into_iter().map(Option::unwrap).collect();
    if multi {
        LabelSet::multi(num_classes, sets)
    } else {
        if let Some(v) = sets.iter().position(|s| s.len() != 1) {
            return Err(Error::format(path, format!("node {v} has more than one label")));
        }
        LabelSet::single(num_classes, sets.into_iter().map(|s| s[0]).collect())
    }
}
