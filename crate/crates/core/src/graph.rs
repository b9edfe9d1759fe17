//! Task decomposition as a DAG of skill-vector nodes, executed by
//! deterministic traversal: each node's skill vector is decoded into
//! policy parameters and run closed-loop in its environment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::EnvSpec;
use crate::distill::policy_act_fn;
use crate::env::{rollout, write_trajectory_csv, EnvParams, Outcome, TerminationSpec, Trajectory};
use crate::error::{Error, Result};
use crate::memory::{recall, SkillVector};
use crate::store::SkillStore;
use crate::Scalar;

/// A node's skill: a name resolved in the store, or a literal latent
/// vector (legal even if nothing was ever encoded there).
#[derive(Clone, Debug, PartialEq)]
pub enum SkillRef {
    Named(String),
    Literal(SkillVector),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskNode {
    pub id: String,
    pub skill: SkillRef,
    /// Optional per-node goal override applied to the node's environment.
    pub goal: Option<Vec<f64>>,
    /// Optional termination override; named skills default to their stored
    /// termination.
    pub termination: Option<TerminationSpec<Scalar>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskGraph {
    pub nodes: Vec<TaskNode>,
    pub edges: Vec<(String, String)>,
    /// Environment for literal-vector nodes; named skills carry their own.
    pub env: Option<EnvParams<Scalar>>,
}

/// Validation findings; execution refuses to start unless empty.
#[derive(Clone, Debug, PartialEq)]
pub enum GraphIssue {
    EmptyId,
    DuplicateId(String),
    DanglingEdge {
        from: String,
        to: String,
    },
    Cycle(Vec<String>),
    UnresolvedSkill {
        node: String,
        skill: String,
    },
    StaleSkill {
        node: String,
        skill: String,
    },
    LatentDimMismatch {
        node: String,
        expected: usize,
        got: usize,
    },
    MissingEnv {
        node: String,
    },
    MissingTermination {
        node: String,
    },
    BadNode {
        node: String,
        message: String,
    },
    StoreNotBuilt,
}

impl fmt::Display for GraphIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphIssue::EmptyId => write!(f, "node with empty id"),
            GraphIssue::DuplicateId(id) => write!(f, "duplicate node id `{id}`"),
            GraphIssue::DanglingEdge { from, to } => {
                write!(f, "edge ({from} -> {to}) references a missing node")
            }
            GraphIssue::Cycle(path) => write!(f, "cycle: {}", path.join(" -> ")),
            GraphIssue::UnresolvedSkill { node, skill } => {
                write!(f, "node `{node}` references unknown skill `{skill}`")
            }
            GraphIssue::StaleSkill { node, skill } => write!(
                f,
                "node `{node}`: skill `{skill}` is stale; rebuild the memory"
            ),
            GraphIssue::LatentDimMismatch {
                node,
                expected,
                got,
            } => write!(
                f,
                "node `{node}`: skill vector has {got} entries, memory expects {expected}"
            ),
            GraphIssue::MissingEnv { node } => write!(
                f,
                "node `{node}` uses a literal skill vector but the graph has no env"
            ),
            GraphIssue::MissingTermination { node } => {
                write!(f, "node `{node}` needs an explicit termination")
            }
            GraphIssue::BadNode { node, message } => write!(f, "node `{node}`: {message}"),
            GraphIssue::StoreNotBuilt => write!(f, "store has no trained memory"),
        }
    }
}

/// Everything needed to run one node.
struct ResolvedNode {
    env: EnvParams<Scalar>,
    termination: TerminationSpec<Scalar>,
    skill_vector: SkillVector,
    stored_params: Option<crate::ParamVector>,
}

fn resolve_node(graph: &TaskGraph, store: &SkillStore, node: &TaskNode) -> Result<ResolvedNode> {
    let (base_env, termination, skill_vector, stored_params) = match &node.skill {
        SkillRef::Named(name) => {
            let rec = store.get_skill(name)?;
            if rec.built_at != Some(store.rebuild_counter) || rec.skill_vector.is_none() {
                return Err(Error::InvalidGraph(format!(
                    "skill `{name}` has no current skill vector"
                )));
            }
            let term = node
                .termination
                .clone()
                .unwrap_or_else(|| rec.termination.clone());
            (
                rec.env.clone(),
                term,
                rec.skill_vector.clone().unwrap(),
                Some(rec.params.clone()),
            )
        }
        SkillRef::Literal(v) => {
            let env = graph
                .env
                .clone()
                .ok_or_else(|| Error::InvalidGraph(format!("node `{}` has no env", node.id)))?;
            let term = node.termination.clone().ok_or_else(|| {
                Error::InvalidGraph(format!("node `{}` has no termination", node.id))
            })?;
            if v.values.len() != store.ae_spec.latent_dim {
                return Err(Error::DimensionMismatch {
                    context: "literal skill vector",
                    expected: store.ae_spec.latent_dim,
                    got: v.values.len(),
                });
            }
            (env, term, v.clone(), None)
        }
    };
    let env = match &node.goal {
        Some(goal) => base_env.with_goal(goal)?,
        None => base_env,
    };
    env.validate()?;
    termination.validate()?;
    Ok(ResolvedNode {
        env,
        termination,
        skill_vector,
        stored_params,
    })
}

/// Structural and semantic validation. Findings are returned in-value,
/// never thrown mid-execution.
pub fn validate(graph: &TaskGraph, store: &SkillStore) -> Vec<GraphIssue> {
    let mut issues = Vec::new();
    let mut ids = BTreeSet::new();
    for node in &graph.nodes {
        if node.id.is_empty() {
            issues.push(GraphIssue::EmptyId);
        } else if !ids.insert(node.id.clone()) {
            issues.push(GraphIssue::DuplicateId(node.id.clone()));
        }
    }
    for (from, to) in &graph.edges {
        if !ids.contains(from) || !ids.contains(to) {
            issues.push(GraphIssue::DanglingEdge {
                from: from.clone(),
                to: to.clone(),
            });
        }
    }
    if let Some(cycle) = find_cycle(graph) {
        issues.push(GraphIssue::Cycle(cycle));
    }

    if !graph.nodes.is_empty() && (store.stats.is_none() || store.ae.is_none()) {
        issues.push(GraphIssue::StoreNotBuilt);
    }

    for node in &graph.nodes {
        match &node.skill {
            SkillRef::Named(name) => match store.get_skill(name) {
                Ok(rec) => {
                    if rec.built_at != Some(store.rebuild_counter) || rec.skill_vector.is_none() {
                        issues.push(GraphIssue::StaleSkill {
                            node: node.id.clone(),
                            skill: name.clone(),
                        });
                    }
                }
                Err(_) => issues.push(GraphIssue::UnresolvedSkill {
                    node: node.id.clone(),
                    skill: name.clone(),
                }),
            },
            SkillRef::Literal(v) => {
                if graph.env.is_none() {
                    issues.push(GraphIssue::MissingEnv {
                        node: node.id.clone(),
                    });
                }
                if node.termination.is_none() {
                    issues.push(GraphIssue::MissingTermination {
                        node: node.id.clone(),
                    });
                }
                if v.values.len() != store.ae_spec.latent_dim {
                    issues.push(GraphIssue::LatentDimMismatch {
                        node: node.id.clone(),
                        expected: store.ae_spec.latent_dim,
                        got: v.values.len(),
                    });
                }
            }
        }
        // Goal overrides and dimension fit, where resolvable.
        match resolve_node(graph, store, node) {
            Ok(resolved) => {
                if resolved.env.state_dim() > store.policy_spec.input_dim()
                    || resolved.env.action_dim() > store.policy_spec.output_dim()
                {
                    issues.push(GraphIssue::BadNode {
                        node: node.id.clone(),
                        message: "environment dims exceed the policy architecture".into(),
                    });
                }
            }
            // Bad goal overrides or invalid per-node parameters; other
            // resolution failures are already reported above.
            Err(e @ Error::DimensionMismatch { .. }) | Err(e @ Error::InvalidConfig(_)) => {
                issues.push(GraphIssue::BadNode {
                    node: node.id.clone(),
                    message: e.to_string(),
                });
            }
            Err(_) => {}
        }
    }
    issues
}

/// DFS cycle search returning a witness path `[v, .., v]`.
fn find_cycle(graph: &TaskGraph) -> Option<Vec<String>> {
    let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for node in &graph.nodes {
        adjacency.entry(node.id.as_str()).or_default();
    }
    for (from, to) in &graph.edges {
        if let Some(out) = adjacency.get_mut(from.as_str()) {
            out.push(to.as_str());
        }
    }
    for out in adjacency.values_mut() {
        out.sort_unstable();
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Gray,
        Black,
    }
    let mut color: BTreeMap<&str, Color> = adjacency.keys().map(|&k| (k, Color::White)).collect();
    let ids: Vec<&str> = adjacency.keys().copied().collect();
    for &start in &ids {
        if color[start] != Color::White {
            continue;
        }
        // Iterative DFS keeping the gray path.
        let mut stack: Vec<(&str, usize)> = vec![(start, 0)];
        let mut path: Vec<&str> = vec![start];
        *color.get_mut(start).unwrap() = Color::Gray;
        while let Some((node, next_child)) = stack.last_mut() {
            let children = &adjacency[*node];
            if *next_child < children.len() {
                let child = children[*next_child];
                *next_child += 1;
                if !adjacency.contains_key(child) {
                    continue;
                }
                match color[child] {
                    Color::Gray => {
                        let pos = path.iter().position(|&p| p == child).unwrap();
                        let mut cycle: Vec<String> =
                            path[pos..].iter().map(|s| s.to_string()).collect();
                        cycle.push(child.to_string());
                        return Some(cycle);
                    }
                    Color::White => {
                        *color.get_mut(child).unwrap() = Color::Gray;
                        stack.push((child, 0));
                        path.push(child);
                    }
                    Color::Black => {}
                }
            } else {
                *color.get_mut(*node).unwrap() = Color::Black;
                stack.pop();
                path.pop();
            }
        }
    }
    None
}

/// Kahn's topological sort; among simultaneously-ready nodes the
/// lexicographically smallest id runs first.
pub fn traversal_order(graph: &TaskGraph) -> Result<Vec<String>> {
    let mut indegree: BTreeMap<&str, usize> = BTreeMap::new();
    for node in &graph.nodes {
        indegree.entry(node.id.as_str()).or_insert(0);
    }
    let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (from, to) in &graph.edges {
        if !indegree.contains_key(from.as_str()) || !indegree.contains_key(to.as_str()) {
            return Err(Error::InvalidGraph(format!(
                "edge ({from} -> {to}) references a missing node"
            )));
        }
        adjacency
            .entry(from.as_str())
            .or_default()
            .push(to.as_str());
        *indegree.get_mut(to.as_str()).unwrap() += 1;
    }
    let mut ready: BTreeSet<&str> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&id, _)| id)
        .collect();
    let mut order = Vec::with_capacity(graph.nodes.len());
    while let Some(&next) = ready.iter().next() {
        ready.remove(next);
        order.push(next.to_string());
        if let Some(children) = adjacency.get(next) {
            for &child in children {
                let d = indegree.get_mut(child).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(child);
                }
            }
        }
    }
    if order.len() != graph.nodes.len() {
        return Err(Error::InvalidGraph("graph contains a cycle".into()));
    }
    Ok(order)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeExecution {
    pub id: String,
    /// Relative distance between the stored parameters and the recalled
    /// ones; absent for literal skill vectors.
    pub recalled_rel_error: Option<f64>,
    pub outcome: Outcome,
    pub trajectory: Trajectory<Scalar>,
    pub state_dim: usize,
    pub action_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ExecStatus {
    Completed,
    AbortedAt { node: String, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExecutionReport {
    pub status: ExecStatus,
    pub nodes: Vec<NodeExecution>,
}

impl ExecutionReport {
    /// Summary JSON: per-node outcome, steps, and final state; full
    /// trajectories are emitted as per-node CSVs.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct NodeDoc<'a> {
            id: &'a str,
            recalled_rel_error: Option<f64>,
            outcome: Outcome,
            steps: usize,
            final_state: &'a [f64],
        }
        #[derive(Serialize)]
        struct ReportDoc<'a> {
            status: &'a ExecStatus,
            nodes: Vec<NodeDoc<'a>>,
        }
        let doc = ReportDoc {
            status: &self.status,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDoc {
                    id: &n.id,
                    recalled_rel_error: n.recalled_rel_error,
                    outcome: n.outcome,
                    steps: n.trajectory.steps.len(),
                    final_state: &n.trajectory.final_state.values,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("report serializes")
    }

    /// One trajectory CSV per executed node, named `<node id>.csv`.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for node in &self.nodes {
            let mut buf = Vec::new();
            write_trajectory_csv(&node.trajectory, node.state_dim, node.action_dim, &mut buf)?;
            std::fs::write(dir.join(format!("{}.csv", node.id)), buf)?;
        }
        Ok(())
    }
}

/// Executes the graph in traversal order. Consecutive nodes in the same
/// environment hand the terminal state over exactly; an environment switch
/// resets from the seed. The first non-Success node aborts execution.
pub fn execute(graph: &TaskGraph, store: &SkillStore, seed: u64) -> Result<ExecutionReport> {
    let issues = validate(graph, store);
    if !issues.is_empty() {
        let text = issues
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::InvalidGraph(text));
    }
    let order = traversal_order(graph)?;
    let by_id: BTreeMap<&str, &TaskNode> = graph.nodes.iter().map(|n| (n.id.as_str(), n)).collect();

    let mut report = ExecutionReport {
        status: ExecStatus::Completed,
        nodes: Vec::with_capacity(order.len()),
    };
    let mut prev: Option<(crate::env::EnvId, crate::EnvState)> = None;

    for id in &order {
        let node = by_id[id.as_str()];
        let resolved = resolve_node(graph, store, node)?;
        let (stats, ae) = match (&store.stats, &store.ae) {
            (Some(stats), Some(ae)) => (stats, ae),
            _ => return Err(Error::StoreNotBuilt),
        };
        let recalled = match recall(&store.ae_spec, ae, stats, &resolved.skill_vector) {
            Ok(w) => w,
            Err(e) => {
                report.status = ExecStatus::AbortedAt {
                    node: id.clone(),
                    reason: format!("{}: {e}", e.code()),
                };
                return Ok(report);
            }
        };
        let recalled_rel_error = resolved.stored_params.as_ref().map(|stored| {
            let mut num = 0.0;
            for (a, b) in stored.data.iter().zip(&recalled.data) {
                let d = a - b;
                num += d * d;
            }
            num.sqrt() / stored.norm().max(1e-12)
        });

        let env = &resolved.env;
        let init = match &prev {
            Some((prev_id, state)) if *prev_id == env.env_id() => state.clone(),
            _ => env.reset(seed),
        };
        let act = policy_act_fn(env, &store.policy_spec, &recalled);
        let trajectory = rollout(env, act, init, &resolved.termination);
        let outcome = trajectory.outcome;
        prev = Some((env.env_id(), trajectory.final_state.clone()));
        report.nodes.push(NodeExecution {
            id: id.clone(),
            recalled_rel_error,
            outcome,
            trajectory,
            state_dim: env.state_dim(),
            action_dim: env.action_dim(),
        });
        if outcome != Outcome::Success {
            report.status = ExecStatus::AbortedAt {
                node: id.clone(),
                reason: format!("{outcome:?}"),
            };
            break;
        }
    }
    Ok(report)
}

// --- graph file format -----------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeSpec {
    id: String,
    #[serde(default)]
    skill: Option<String>,
    #[serde(default)]
    skill_vector: Option<Vec<f64>>,
    #[serde(default)]
    goal: Option<Vec<f64>>,
    #[serde(default)]
    termination: Option<TerminationSpec<Scalar>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    #[serde(default)]
    env: Option<EnvSpec>,
    nodes: Vec<NodeSpec>,
    edges: Vec<(String, String)>,
}

impl TaskGraph {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidGraph(format!("graph parse: {e}")))?;
        let env = file.env.map(|e| e.to_params()).transpose()?;
        let mut nodes = Vec::with_capacity(file.nodes.len());
        for spec in file.nodes {
            let skill = match (spec.skill, spec.skill_vector) {
                (Some(name), None) => SkillRef::Named(name),
                (None, Some(values)) => SkillRef::Literal(SkillVector { values }),
                _ => {
                    return Err(Error::InvalidGraph(format!(
                        "node `{}` needs exactly one of `skill` or `skill_vector`",
                        spec.id
                    )))
                }
            };
            nodes.push(TaskNode {
                id: spec.id,
                skill,
                goal: spec.goal,
                termination: spec.termination,
            });
        }
        Ok(TaskGraph {
            nodes,
            edges: file.edges,
            env,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}
