//! Lineage over stored links: dataset versions, executions, workflows,
//! assets and feature values.
//!
//! Every edge reads "src relation dst" and comes from one stored row:
//!
//! | relation        | src             | dst             | stored in                         |
//! |-----------------|-----------------|-----------------|-----------------------------------|
//! | `input_to`      | version / asset | execution       | Execution_Dataset, Execution_Asset |
//! | `output_of`     | asset           | execution       | Execution_Asset                   |
//! | `generated_by`  | version / value | execution       | Dataset_Version, feature tables   |
//! | `uses_workflow` | execution       | workflow        | Execution                         |
//! | `member_of`     | asset / version | version         | Dataset_Member                    |
//!
//! Upstream means towards the things a node was derived from.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::bootstrap::{
    DATASET, DATASET_VERSION, EXECUTION, EXECUTION_ASSET, EXECUTION_DATASET, WORKFLOW,
};
use crate::catalog::{AsOf, Catalog, Filter, ReadView};
use crate::dataset::{direct_members, latest_version, versions_of, DatasetVersion, Member, SemVer};
use crate::error::{Error, Result};
use crate::execution::{execution_in, Execution};
use crate::feature::{definitions, FeatureDefinition};
use crate::rid::Rid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    DatasetVersion,
    Execution,
    Workflow,
    Asset,
    FeatureValue,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::DatasetVersion => "dataset_version",
            NodeKind::Execution => "execution",
            NodeKind::Workflow => "workflow",
            NodeKind::Asset => "asset",
            NodeKind::FeatureValue => "feature_value",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineageNode {
    pub kind: NodeKind,
    pub rid: Rid,
    /// Table holding the record.
    pub table: String,
    /// Dataset and version, for dataset versions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<Rid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<SemVer>,
}

impl LineageNode {
    fn plain(kind: NodeKind, rid: Rid, table: &str) -> Self {
        LineageNode {
            kind,
            rid,
            table: table.to_string(),
            dataset: None,
            version: None,
        }
    }

    fn version(dv: &DatasetVersion) -> Self {
        LineageNode {
            kind: NodeKind::DatasetVersion,
            rid: dv.rid.clone(),
            table: DATASET_VERSION.to_string(),
            dataset: Some(dv.dataset.clone()),
            version: Some(dv.version),
        }
    }

    pub fn label(&self) -> String {
        match (&self.dataset, &self.version) {
            (Some(d), Some(v)) => format!("{} {d}@{v}", self.kind.as_str()),
            _ => format!("{} {} {}", self.kind.as_str(), self.table, self.rid),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    InputTo,
    OutputOf,
    GeneratedBy,
    MemberOf,
    UsesWorkflow,
}

impl Relation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Relation::InputTo => "input_to",
            Relation::OutputOf => "output_of",
            Relation::GeneratedBy => "generated_by",
            Relation::MemberOf => "member_of",
            Relation::UsesWorkflow => "uses_workflow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineageEdge {
    pub src: Rid,
    pub dst: Rid,
    pub relation: Relation,
}

impl LineageEdge {
    /// (upstream end, downstream end).
    pub fn ends(&self) -> (&Rid, &Rid) {
        match self.relation {
            Relation::InputTo | Relation::MemberOf => (&self.src, &self.dst),
            _ => (&self.dst, &self.src),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Upstream,
    Downstream,
    Both,
}

impl FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upstream" | "up" => Ok(Direction::Upstream),
            "downstream" | "down" => Ok(Direction::Downstream),
            "both" => Ok(Direction::Both),
            other => Err(Error::InvalidArgument(format!("unknown direction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageGraph {
    pub root: Rid,
    /// In breadth-first discovery order, the root first.
    pub nodes: Vec<LineageNode>,
    /// Sorted.
    pub edges: Vec<LineageEdge>,
}

impl LineageGraph {
    pub fn contains(&self, rid: &Rid) -> bool {
        self.nodes.iter().any(|n| &n.rid == rid)
    }

    pub fn node(&self, rid: &Rid) -> Option<&LineageNode> {
        self.nodes.iter().find(|n| &n.rid == rid)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph lineage {\n  rankdir=BT;\n");
        for n in &self.nodes {
            let shape = match n.kind {
                NodeKind::Execution => "box",
                NodeKind::Workflow => "hexagon",
                NodeKind::DatasetVersion => "folder",
                NodeKind::Asset => "note",
                NodeKind::FeatureValue => "ellipse",
            };
            out.push_str(&format!(
                "  \"{}\" [label=\"{}\", shape={shape}];\n",
                n.rid,
                n.label().replace('"', "\\\"")
            ));
        }
        for e in &self.edges {
            out.push_str(&format!(
                "  \"{}\" -> \"{}\" [label=\"{}\"];\n",
                e.src,
                e.dst,
                e.relation.as_str()
            ));
        }
        out.push_str("}\n");
        out
    }

    /// One JSON object per line: nodes first, then edges.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let mut v = serde_json::to_value(n).expect("node serializes");
            v["type"] = "node".into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        for e in &self.edges {
            let mut v = serde_json::to_value(e).expect("edge serializes");
            v["type"] = "edge".into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }
}

/// Edge lookup at one snapshot, with caches for dataset membership.
struct Links<'a> {
    view: AsOf<'a>,
    features: Vec<FeatureDefinition>,
    versions: Option<Vec<DatasetVersion>>,
    members: HashMap<Rid, Vec<Member>>,
    nodes: HashMap<Rid, LineageNode>,
}

impl<'a> Links<'a> {
    fn new(catalog: &'a Catalog) -> Result<Self> {
        let view = catalog.at(None)?;
        let features = definitions(&view, &Filter::all())?;
        Ok(Links {
            view,
            features,
            versions: None,
            members: HashMap::new(),
            nodes: HashMap::new(),
        })
    }

    fn all_versions(&mut self) -> Result<&[DatasetVersion]> {
        if self.versions.is_none() {
            let mut out = Vec::new();
            for row in self.view.rows(DATASET_VERSION, &Filter::all())? {
                out.push(DatasetVersion::from_row(&row)?);
            }
            self.versions = Some(out);
        }
        Ok(self.versions.as_deref().unwrap_or_default())
    }

    fn version(&mut self, rid: &Rid) -> Result<DatasetVersion> {
        self.all_versions()?
            .iter()
            .find(|v| &v.rid == rid)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("dataset version {rid}")))
    }

    /// Direct members of a version's dataset as of the version's snapshot.
    fn members_of(&mut self, dv: &DatasetVersion) -> Result<Vec<Member>> {
        if let Some(m) = self.members.get(&dv.rid) {
            return Ok(m.clone());
        }
        let at = self.view.catalog.at(Some(dv.snapshot))?;
        let m = direct_members(&at, &dv.dataset)?;
        self.members.insert(dv.rid.clone(), m.clone());
        Ok(m)
    }

    /// The version of `dataset` current at `snapshot`.
    fn version_at(&mut self, dataset: &Rid, snapshot: crate::catalog::SnapshotId) -> Result<Option<DatasetVersion>> {
        Ok(self
            .all_versions()?
            .iter()
            .filter(|v| &v.dataset == dataset && v.snapshot <= snapshot)
            .max_by_key(|v| v.version)
            .cloned())
    }

    fn classify(&mut self, rid: &Rid) -> Result<LineageNode> {
        if let Some(n) = self.nodes.get(rid) {
            return Ok(n.clone());
        }
        let table = self
            .view
            .table_for(rid)
            .ok_or_else(|| Error::UnknownRid(rid.to_string()))?;
        if self.view.row(&table, rid)?.is_none() {
            return Err(Error::StaleRid { table, rid: rid.clone() });
        }
        let node = if table == DATASET_VERSION {
            LineageNode::version(&self.version(rid)?)
        } else if table == EXECUTION {
            LineageNode::plain(NodeKind::Execution, rid.clone(), &table)
        } else if table == WORKFLOW {
            LineageNode::plain(NodeKind::Workflow, rid.clone(), &table)
        } else if self.view.def(&table)?.is_asset() {
            LineageNode::plain(NodeKind::Asset, rid.clone(), &table)
        } else if self.features.iter().any(|f| f.feature_table == table) {
            LineageNode::plain(NodeKind::FeatureValue, rid.clone(), &table)
        } else {
            return Err(Error::InvalidArgument(format!(
                "{rid} ({table}) is not a lineage node"
            )));
        };
        self.nodes.insert(rid.clone(), node.clone());
        Ok(node)
    }

    /// Resolves a user-supplied RID; a dataset stands for its latest version.
    fn start(&mut self, rid: &Rid) -> Result<LineageNode> {
        if self.view.table_for(rid).as_deref() == Some(DATASET) {
            let dv = latest_version(&self.view, rid)?;
            return self.classify(&dv.rid);
        }
        self.classify(rid)
    }

    /// All edges touching `node`.
    fn incident(&mut self, node: &LineageNode) -> Result<Vec<LineageEdge>> {
        let mut out = Vec::new();
        let rid = &node.rid;
        let edge = |src: &Rid, dst: &Rid, relation| LineageEdge {
            src: src.clone(),
            dst: dst.clone(),
            relation,
        };
        match node.kind {
            NodeKind::Execution => {
                let exec = execution_in(&self.view, rid)?;
                if let Some(w) = &exec.workflow {
                    out.push(edge(rid, w, Relation::UsesWorkflow));
                }
                for row in self.view.rows(EXECUTION_DATASET, &Filter::all().eq("Execution", rid))? {
                    if let Some(dv) = row.rid_at("Dataset_Version") {
                        out.push(edge(&dv, rid, Relation::InputTo));
                    }
                }
                for row in self.view.rows(EXECUTION_ASSET, &Filter::all().eq("Execution", rid))? {
                    if let Some(a) = row.rid_at("Asset") {
                        out.push(asset_edge(&a, rid, row.text("Asset_Role")));
                    }
                }
                for row in self.view.rows(DATASET_VERSION, &Filter::all().eq("Execution", rid))? {
                    out.push(edge(&row.rid, rid, Relation::GeneratedBy));
                }
                for f in self.features.clone() {
                    for row in self.view.rows(&f.feature_table, &Filter::all().eq("Execution", rid))? {
                        out.push(edge(&row.rid, rid, Relation::GeneratedBy));
                    }
                }
            }
            NodeKind::Workflow => {
                for row in self.view.rows(EXECUTION, &Filter::all().eq("Workflow", rid))? {
                    out.push(edge(&row.rid, rid, Relation::UsesWorkflow));
                }
            }
            NodeKind::Asset => {
                for row in self.view.rows(EXECUTION_ASSET, &Filter::all().eq("Asset", rid))? {
                    if let Some(e) = row.rid_at("Execution") {
                        out.push(asset_edge(rid, &e, row.text("Asset_Role")));
                    }
                }
                for dv in self.all_versions()?.to_vec() {
                    if self.members_of(&dv)?.iter().any(|m| &m.rid == rid) {
                        out.push(edge(rid, &dv.rid, Relation::MemberOf));
                    }
                }
            }
            NodeKind::FeatureValue => {
                let row = self.view.row(&node.table, rid)?.expect("classified as live");
                if let Some(e) = row.rid_at("Execution") {
                    out.push(edge(rid, &e, Relation::GeneratedBy));
                }
            }
            NodeKind::DatasetVersion => {
                let dv = self.version(rid)?;
                if let Some(e) = &dv.execution {
                    out.push(edge(rid, e, Relation::GeneratedBy));
                }
                for row in self.view.rows(EXECUTION_DATASET, &Filter::all().eq("Dataset_Version", rid))? {
                    if let Some(e) = row.rid_at("Execution") {
                        out.push(edge(rid, &e, Relation::InputTo));
                    }
                }
                for m in self.members_of(&dv)? {
                    if m.table == DATASET {
                        if let Some(child) = self.version_at(&m.rid, dv.snapshot)? {
                            out.push(edge(&child.rid, rid, Relation::MemberOf));
                        }
                    } else if self.view.def(&m.table)?.is_asset() {
                        out.push(edge(&m.rid, rid, Relation::MemberOf));
                    }
                }
                for parent in self.all_versions()?.to_vec() {
                    if parent.snapshot < dv.snapshot {
                        continue;
                    }
                    let has_child = self
                        .members_of(&parent)?
                        .iter()
                        .any(|m| m.table == DATASET && m.rid == dv.dataset);
                    if has_child
                        && self.version_at(&dv.dataset, parent.snapshot)?.map(|v| v.rid) == Some(rid.clone())
                    {
                        out.push(edge(rid, &parent.rid, Relation::MemberOf));
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

fn asset_edge(asset: &Rid, execution: &Rid, role: Option<&str>) -> LineageEdge {
    LineageEdge {
        src: asset.clone(),
        dst: execution.clone(),
        relation: if role == Some("output") {
            Relation::OutputOf
        } else {
            Relation::InputTo
        },
    }
}

impl Catalog {
    /// Breadth-first lineage from `node` up to `max_depth` hops (`None` for
    /// no limit). A dataset RID stands for its latest version.
    pub fn lineage(&self, node: &Rid, direction: Direction, max_depth: Option<usize>) -> Result<LineageGraph> {
        if max_depth == Some(0) {
            return Err(Error::InvalidArgument("depth must be at least 1".into()));
        }
        let mut links = Links::new(self)?;
        let root = links.start(node)?;
        let mut nodes = vec![root.clone()];
        let mut seen = BTreeSet::from([root.rid.clone()]);
        let mut edges = BTreeSet::new();
        let mut queue = VecDeque::from([(root, 0usize)]);
        while let Some((n, depth)) = queue.pop_front() {
            if max_depth.is_some_and(|m| depth >= m) {
                continue;
            }
            let mut next = Vec::new();
            for e in links.incident(&n)? {
                let (up, down) = e.ends();
                let other = match direction {
                    Direction::Upstream if down == &n.rid => up.clone(),
                    Direction::Downstream if up == &n.rid => down.clone(),
                    Direction::Both => {
                        if up == &n.rid {
                            down.clone()
                        } else {
                            up.clone()
                        }
                    }
                    _ => continue,
                };
                edges.insert(e.clone());
                if !seen.contains(&other) {
                    next.push(links.classify(&other)?);
                    seen.insert(other);
                }
            }
            next.sort();
            for m in next {
                nodes.push(m.clone());
                queue.push_back((m, depth + 1));
            }
        }
        Ok(LineageGraph {
            root: nodes[0].rid.clone(),
            nodes,
            edges: edges.into_iter().collect(),
        })
    }

    /// Executions that took the dataset (one version, or any) as input.
    pub fn executions_using(&self, dataset: &Rid, version: Option<SemVer>) -> Result<Vec<Execution>> {
        let view = self.at(None)?;
        let versions: Vec<DatasetVersion> = versions_of(&view, dataset)?
            .into_iter()
            .filter(|v| version.is_none_or(|want| v.version == want))
            .collect();
        if let (Some(v), true) = (version, versions.is_empty()) {
            return Err(Error::NotFound(format!("version {v} of dataset {dataset}")));
        }
        let mut found: BTreeMap<Rid, Execution> = BTreeMap::new();
        for dv in versions {
            for row in view.rows(EXECUTION_DATASET, &Filter::all().eq("Dataset_Version", &dv.rid))? {
                if let Some(e) = row.rid_at("Execution") {
                    found.insert(e.clone(), execution_in(&view, &e)?);
                }
            }
        }
        Ok(found.into_values().collect())
    }

    /// The execution that produced an asset, feature value or dataset
    /// version. `None` for artifacts recorded outside any execution.
    pub fn origin_of(&self, rid: &Rid) -> Result<Option<Execution>> {
        let mut links = Links::new(self)?;
        let node = links.start(rid)?;
        let origins: Vec<Rid> = links
            .incident(&node)?
            .into_iter()
            .filter(|e| {
                e.src == node.rid && matches!(e.relation, Relation::OutputOf | Relation::GeneratedBy)
            })
            .map(|e| e.dst)
            .collect();
        match origins.as_slice() {
            [] => Ok(None),
            [one] => Ok(Some(execution_in(&links.view, one)?)),
            many => Err(Error::Integrity(format!(
                "{rid} is recorded as produced by {} executions",
                many.len()
            ))),
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
