use std::collections::HashMap;

use crate::error::{domain, Error, Result};

use super::{check_x, ParamBound, ParamSpace, ParamSpec, Stdf, TailModel};

const ROW_SUM_TOL: f64 = 1e-12;

/// Nonnegative `d x r` factor loadings with unit row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxLinearCoeffs {
    d: usize,
    r: usize,
    b: Vec<f64>,
}

impl MaxLinearCoeffs {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let c = Self::from_rows_unchecked_columns(rows)?;
        for t in 0..c.r {
            if !((0..c.d).map(|j| c.get(j, t)).sum::<f64>() > 0.0) {
                return domain(format!("column {} of the loadings is zero", t + 1));
            }
        }
        Ok(c)
    }

    /// Row checks only; zero columns are allowed (feasibility boundary of a DAG).
    fn from_rows_unchecked_columns(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.len();
        let r = rows.first().map_or(0, Vec::len);
        if d == 0 || r == 0 || rows.iter().any(|row| row.len() != r) {
            return domain("loadings must be a non-empty rectangular matrix");
        }
        for (j, row) in rows.iter().enumerate() {
            if row.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return domain(format!("row {} has a negative or non-finite loading", j + 1));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return domain(format!("row {} sums to {s}, expected 1", j + 1));
            }
        }
        Ok(Self {
            d,
            r,
            b: rows.concat(),
        })
    }

    pub fn identity(d: usize) -> Self {
        let rows = (0..d)
            .map(|j| (0..d).map(|t| if t == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(rows).expect("identity loadings are valid")
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn get(&self, j: usize, t: usize) -> f64 {
        self.b[j * self.r + t]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.b.chunks(self.r).map(<[f64]>::to_vec).collect()
    }
}

/// `sum_t max_j b_jt x_j`.
pub fn maxlinear_stdf(x: &[f64], b: &MaxLinearCoeffs) -> Result<f64> {
    check_x(x, b.d)?;
    Ok(eval(x, b))
}

fn eval(x: &[f64], b: &MaxLinearCoeffs) -> f64 {
    let mut positive = x.iter().enumerate().filter(|(_, &v)| v > 0.0);
    match (positive.next(), positive.next()) {
        (None, _) => return 0.0,
        // unit row sums make this exact
        (Some((_, &v)), None) => return v,
        _ => {}
    }
    (0..b.r)
        .map(|t| {
            (0..b.d)
                .map(|j| b.get(j, t) * x[j])
                .fold(0.0, f64::max)
        })
        .sum()
}

impl Stdf for MaxLinearCoeffs {
    fn dim(&self) -> usize {
        self.d
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        maxlinear_stdf(x, self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DagEdge {
    pub parent: usize,
    pub child: usize,
    pub param: usize,
}

/// Directed acyclic graph with one free parameter per edge (parameters may be
/// shared between edges). Nodes are `0..d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    d: usize,
    edges: Vec<DagEdge>,
    param_names: Vec<String>,
    order: Vec<usize>,
}

impl Dag {
    pub fn new(d: usize, edges: Vec<DagEdge>, param_names: Vec<String>) -> Result<Self> {
        if d < 2 {
            return domain(format!("graph needs at least 2 nodes, got {d}"));
        }
        let p = param_names.len();
        let mut used = vec![false; p];
        for e in &edges {
            if e.parent >= d || e.child >= d || e.parent == e.child {
                return domain(format!(
                    "invalid edge {} -> {} for {d} nodes",
                    e.parent + 1,
                    e.child + 1
                ));
            }
            if e.param >= p {
                return domain(format!("edge parameter index {} out of range", e.param + 1));
            }
            used[e.param] = true;
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return domain(format!("parameter {} is not attached to any edge", param_names[i]));
        }
        let order = topological_order(d, &edges)?;
        Ok(Self {
            d,
            edges,
            param_names,
            order,
        })
    }

    /// Parse the line format `parent child param_name` (1-based nodes).
    /// Blank lines and `#` comments are ignored; an optional `nodes N` line
    /// fixes the node count, otherwise it is the largest node index.
    /// Parameters are numbered by first appearance.
    pub fn parse(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut declared: Option<usize> = None;
        let mut max_node = 0;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "nodes" {
                let n = fields
                    .get(1)
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| err("expected `nodes <count>`".into()))?;
                declared = Some(n);
                continue;
            }
            if fields.len() != 3 {
                return Err(err(format!(
                    "expected `parent child param_name`, got {} fields",
                    fields.len()
                )));
            }
            let node = |s: &str| -> Result<usize> {
                match s.parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v),
                    _ => Err(err(format!("invalid node `{s}` (1-based integer expected)"))),
                }
            };
            let parent = node(fields[0])?;
            let child = node(fields[1])?;
            max_node = max_node.max(parent).max(child);
            let name = fields[2].to_string();
            let param = *index.entry(name.clone()).or_insert_with(|| {
                names.push(name);
                names.len() - 1
            });
            edges.push(DagEdge {
                parent: parent - 1,
                child: child - 1,
                param,
            });
        }
        let d = match declared {
            Some(n) if n < max_node => {
                return domain(format!("`nodes {n}` but node {max_node} is used"));
            }
            Some(n) => n,
            None => max_node,
        };
        Self::new(d, edges, names)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn edges(&self) -> &[DagEdge] {
        &self.edges
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// The four-node graph 1 -> 2, 1 -> 3, 2 -> 4, 3 -> 4.
    pub fn diamond() -> Self {
        Self::parse("1 2 u12\n1 3 u13\n2 4 u24\n3 4 u34\n").expect("valid graph")
    }
}

fn topological_order(d: usize, edges: &[DagEdge]) -> Result<Vec<usize>> {
    let mut indeg = vec![0usize; d];
    for e in edges {
        indeg[e.child] += 1;
    }
    let mut ready: Vec<usize> = (0..d).rev().filter(|&j| indeg[j] == 0).collect();
    let mut order = Vec::with_capacity(d);
    while let Some(j) = ready.pop() {
        order.push(j);
        let mut next: Vec<usize> = Vec::new();
        for e in edges.iter().filter(|e| e.parent == j) {
            indeg[e.child] -= 1;
            if indeg[e.child] == 0 {
                next.push(e.child);
            }
        }
        next.sort_unstable_by(|a, b| b.cmp(a));
        ready.extend(next);
        ready.sort_unstable_by(|a, b| b.cmp(a));
    }
    if order.len() != d {
        return domain("graph has a cycle");
    }
    Ok(order)
}

/// Loadings implied by the structural equations
/// `Y_j = max_{k in pa(j)} u_kj Y_k  v  u_j Z_j` with unit Frechet margins.
pub fn dag_to_coeffs(dag: &Dag, theta: &[f64]) -> Result<MaxLinearCoeffs> {
    if theta.len() != dag.param_names.len() {
        return domain(format!(
            "expected {} edge parameters, got {}",
            dag.param_names.len(),
            theta.len()
        ));
    }
    if let Some(i) = theta.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Infeasible(format!(
            "{} = {} must be positive",
            dag.param_names[i], theta[i]
        )));
    }
    let d = dag.d;
    let mut rows = vec![vec![0.0; d]; d];
    for &j in &dag.order {
        let mut row = vec![0.0; d];
        for e in dag.edges.iter().filter(|e| e.child == j) {
            let u = theta[e.param];
            for (t, v) in row.iter_mut().enumerate() {
                *v = f64::max(*v, u * rows[e.parent][t]);
            }
        }
        let uj = 1.0 - row.iter().sum::<f64>();
        if uj < -ROW_SUM_TOL {
            return Err(Error::Infeasible(format!(
                "node {} would need a negative innovation weight ({uj:.6})",
                j + 1
            )));
        }
        row[j] = uj.max(0.0);
        rows[j] = row;
    }
    MaxLinearCoeffs::from_rows_unchecked_columns(rows)
}

/// Max-linear family parametrized by the edge weights of a DAG.
#[derive(Debug, Clone)]
pub struct DagModel {
    dag: Dag,
    space: ParamSpace,
}

impl DagModel {
    pub fn new(dag: Dag) -> Self {
        let params = dag
            .param_names
            .iter()
            .map(|name| ParamSpec {
                name: name.clone(),
                bound: ParamBound::Interval { lo: 0.0, hi: 1.0 },
                init: (0.05, 0.95),
            })
            .collect();
        Self {
            dag,
            space: ParamSpace { params },
        }
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }
}

impl TailModel for DagModel {
    fn dim(&self) -> usize {
        self.dag.d
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn label(&self) -> String {
        format!("max-linear DAG(d={}, p={})", self.dag.d, self.dag.param_names.len())
    }

    fn bind(&self, theta: &[f64]) -> Result<Box<dyn Stdf>> {
        self.space.check(theta)?;
        Ok(Box::new(dag_to_coeffs(&self.dag, theta)?))
    }
}
