//! Stage and terminal constraints on the joint trajectory.
//!
//! All rows are written as `g(x, u, k) <= 0`. Equality rows are stored once
//! and tagged [`ConstraintKind::Equality`]; callers that want the pure
//! inequality picture (each equality as a `<=` / `>=` pair) count them twice
//! through [`ConstraintSet::paired_running_rows`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::JointDynamics;
use crate::fd;

/// Smoothing added under distance square roots so gradients stay finite at
/// coincident points.
pub const DISTANCE_SMOOTHING: f64 = 1e-9;

/// Relative step for finite-difference constraint Jacobian fallbacks.
const FD_JACOBIAN_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    Inequality,
    Equality,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintScope {
    Joint,
    Agent(usize),
    Pair(usize, usize),
}

/// Structured description of the shipped constraint families, kept so that
/// logs and exports can reconstruct distances from raw residuals.
#[derive(Clone, Debug)]
pub enum ConstraintMeta {
    PairwiseCollision { i: usize, j: usize, min_distance: f64 },
    ControlBound { agent: usize, bound: Vec<f64> },
    SpeedBound { agent: usize, bound: f64 },
    Rod { i: usize, j: usize, length: f64 },
    Cylinder { point_agent: usize, center_agent: usize, radius: f64, half_height: f64 },
    Custom,
}

type RunningEval = dyn Fn(&DVector<f64>, &DVector<f64>, usize) -> DVector<f64> + Send + Sync;
type RunningJac =
    dyn Fn(&DVector<f64>, &DVector<f64>, usize) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync;
type TerminalEval = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type TerminalJac = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

#[derive(Clone)]
struct RunningPart {
    eval: Arc<RunningEval>,
    jac: Option<Arc<RunningJac>>,
}

#[derive(Clone)]
struct TerminalPart {
    eval: Arc<TerminalEval>,
    jac: Option<Arc<TerminalJac>>,
}

/// One constraint record contributing `rows` residuals wherever it applies.
#[derive(Clone)]
pub struct Constraint {
    label: String,
    kind: ConstraintKind,
    scope: ConstraintScope,
    meta: ConstraintMeta,
    rows: usize,
    state_dim: usize,
    control_dim: usize,
    running: Option<RunningPart>,
    terminal: Option<TerminalPart>,
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Constraint({}, {:?}, rows {})", self.label, self.kind, self.rows)
    }
}

fn smoothed_norm(v: &DVector<f64>) -> f64 {
    (v.dot(v) + DISTANCE_SMOOTHING * DISTANCE_SMOOTHING).sqrt()
}

impl Constraint {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    pub fn scope(&self) -> ConstraintScope {
        self.scope
    }

    pub fn meta(&self) -> &ConstraintMeta {
        &self.meta
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Joint `(state, control)` dimensions this constraint was built for.
    pub fn dims(&self) -> (usize, usize) {
        (self.state_dim, self.control_dim)
    }

    pub fn applies_running(&self) -> bool {
        self.running.is_some()
    }

    pub fn applies_terminal(&self) -> bool {
        self.terminal.is_some()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Keep-apart constraint `min_distance - |p_i - p_j| <= 0` between the
    /// position subvectors of two agents. Enforced at every step and at the
    /// terminal state.
    pub fn pairwise_collision(
        dynamics: &JointDynamics,
        i: usize,
        j: usize,
        pos_offset: usize,
        pos_dim: usize,
        min_distance: f64,
    ) -> Self {
        let (pi, pj) = (
            dynamics.state_block(i).start + pos_offset,
            dynamics.state_block(j).start + pos_offset,
        );
        let n = dynamics.state_dim();
        let m = dynamics.control_dim();
        let value = move |x: &DVector<f64>| {
            let d = x.rows(pi, pos_dim) - x.rows(pj, pos_dim);
            DVector::from_element(1, min_distance - smoothed_norm(&d.into_owned()))
        };
        let grad = move |x: &DVector<f64>| {
            let d = (x.rows(pi, pos_dim) - x.rows(pj, pos_dim)).into_owned();
            let dist = smoothed_norm(&d);
            let mut jac = DMatrix::zeros(1, n);
            for c in 0..pos_dim {
                jac[(0, pi + c)] = -d[c] / dist;
                jac[(0, pj + c)] = d[c] / dist;
            }
            jac
        };
        let v2 = value;
        let g2 = grad;
        Self {
            label: format!("collision({i},{j})"),
            kind: ConstraintKind::Inequality,
            scope: ConstraintScope::Pair(i, j),
            meta: ConstraintMeta::PairwiseCollision { i, j, min_distance },
            rows: 1,
            state_dim: n,
            control_dim: m,
            running: Some(RunningPart {
                eval: Arc::new(move |x, _u, _k| value(x)),
                jac: Some(Arc::new(move |x, _u, _k| {
                    (grad(x), DMatrix::zeros(1, m))
                })),
            }),
            terminal: Some(TerminalPart {
                eval: Arc::new(move |x| v2(x)),
                jac: Some(Arc::new(move |x| g2(x))),
            }),
        }
    }

    /// All-pairs collision constraints in lexicographic pair order
    /// (0,1), (0,2), ..., (N-2,N-1).
    pub fn pairwise_collision_all(
        dynamics: &JointDynamics,
        pos_offset: usize,
        pos_dim: usize,
        min_distance: f64,
    ) -> Vec<Self> {
        let n = dynamics.num_agents();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(Self::pairwise_collision(
                    dynamics,
                    i,
                    j,
                    pos_offset,
                    pos_dim,
                    min_distance,
                ));
            }
        }
        out
    }

    /// Symmetric per-entry control bounds `|u_e| <= bound_e`, two rows per
    /// entry ordered `u_e - b_e` then `-u_e - b_e`. Stage-only.
    pub fn control_bound(dynamics: &JointDynamics, agent: usize, bound: &[f64]) -> Self {
        let block = dynamics.control_block(agent);
        assert_eq!(
            bound.len(),
            block.len(),
            "bound length must match the agent's control dimension"
        );
        let n = dynamics.state_dim();
        let m = dynamics.control_dim();
        let off = block.start;
        let mc = block.len();
        let b = bound.to_vec();
        let rows = 2 * mc;
        let bounds = b.clone();
        Self {
            label: format!("bound({agent})"),
            kind: ConstraintKind::Inequality,
            scope: ConstraintScope::Agent(agent),
            meta: ConstraintMeta::ControlBound { agent, bound: b },
            rows,
            state_dim: n,
            control_dim: m,
            running: Some(RunningPart {
                eval: Arc::new(move |_x, u, _k| {
                    let mut g = DVector::zeros(rows);
                    for e in 0..mc {
                        g[2 * e] = u[off + e] - bounds[e];
                        g[2 * e + 1] = -u[off + e] - bounds[e];
                    }
                    g
                }),
                jac: Some(Arc::new(move |_x, _u, _k| {
                    let mut ju = DMatrix::zeros(rows, m);
                    for e in 0..mc {
                        ju[(2 * e, off + e)] = 1.0;
                        ju[(2 * e + 1, off + e)] = -1.0;
                    }
                    (DMatrix::zeros(rows, n), ju)
                })),
            }),
            terminal: None,
        }
    }

    /// Norm bound `|u_slice| - bound <= 0` on a contiguous slice of one
    /// agent's control vector. Stage-only.
    pub fn speed_bound(
        dynamics: &JointDynamics,
        agent: usize,
        slice_offset: usize,
        slice_dim: usize,
        bound: f64,
    ) -> Self {
        let block = dynamics.control_block(agent);
        assert!(
            slice_offset + slice_dim <= block.len(),
            "slice must fit inside the agent's control block"
        );
        let n = dynamics.state_dim();
        let m = dynamics.control_dim();
        let off = block.start + slice_offset;
        Self {
            label: format!("speed({agent})"),
            kind: ConstraintKind::Inequality,
            scope: ConstraintScope::Agent(agent),
            meta: ConstraintMeta::SpeedBound { agent, bound },
            rows: 1,
            state_dim: n,
            control_dim: m,
            running: Some(RunningPart {
                eval: Arc::new(move |_x, u, _k| {
                    let s = u.rows(off, slice_dim).into_owned();
                    DVector::from_element(1, smoothed_norm(&s) - bound)
                }),
                jac: Some(Arc::new(move |_x, u, _k| {
                    let s = u.rows(off, slice_dim).into_owned();
                    let norm = smoothed_norm(&s);
                    let mut ju = DMatrix::zeros(1, m);
                    for c in 0..slice_dim {
                        ju[(0, off + c)] = s[c] / norm;
                    }
                    (DMatrix::zeros(1, n), ju)
                })),
            }),
            terminal: None,
        }
    }

    /// Rigid-link equality `|p_i - p_j| - length = 0` between two agents'
    /// position subvectors, kept at every step and at the terminal state.
    pub fn rod(
        dynamics: &JointDynamics,
        i: usize,
        j: usize,
        pos_offset: usize,
        pos_dim: usize,
        length: f64,
    ) -> Self {
        let (pi, pj) = (
            dynamics.state_block(i).start + pos_offset,
            dynamics.state_block(j).start + pos_offset,
        );
        let n = dynamics.state_dim();
        let m = dynamics.control_dim();
        let value = move |x: &DVector<f64>| {
            let d = (x.rows(pi, pos_dim) - x.rows(pj, pos_dim)).into_owned();
            DVector::from_element(1, smoothed_norm(&d) - length)
        };
        let grad = move |x: &DVector<f64>| {
            let d = (x.rows(pi, pos_dim) - x.rows(pj, pos_dim)).into_owned();
            let dist = smoothed_norm(&d);
            let mut jac = DMatrix::zeros(1, n);
            for c in 0..pos_dim {
                jac[(0, pi + c)] = d[c] / dist;
                jac[(0, pj + c)] = -d[c] / dist;
            }
            jac
        };
        let v2 = value;
        let g2 = grad;
        Self {
            label: format!("rod({i},{j})"),
            kind: ConstraintKind::Equality,
            scope: ConstraintScope::Pair(i, j),
            meta: ConstraintMeta::Rod { i, j, length },
            rows: 1,
            state_dim: n,
            control_dim: m,
            running: Some(RunningPart {
                eval: Arc::new(move |x, _u, _k| value(x)),
                jac: Some(Arc::new(move |x, _u, _k| {
                    (grad(x), DMatrix::zeros(1, m))
                })),
            }),
            terminal: Some(TerminalPart {
                eval: Arc::new(move |x| v2(x)),
                jac: Some(Arc::new(move |x| g2(x))),
            }),
        }
    }

    /// Keep-out constraint between a point agent and a vertical cylinder
    /// carried by another agent. The cylinder is centered at three
    /// consecutive state entries `(cx, cy, cz)` of the carrying agent and
    /// spans `cz - half_height ..= cz + half_height`; the point is the three
    /// consecutive position entries of the other agent. The residual is the
    /// negated signed distance to the cylinder surface, so `g <= 0` outside.
    pub fn cylinder(
        dynamics: &JointDynamics,
        point_agent: usize,
        point_offset: usize,
        center_agent: usize,
        center_offset: usize,
        radius: f64,
        half_height: f64,
    ) -> Self {
        let p0 = dynamics.state_block(point_agent).start + point_offset;
        let c0 = dynamics.state_block(center_agent).start + center_offset;
        let n = dynamics.state_dim();
        let m = dynamics.control_dim();

        // Returns g and dg/d(dx,dy,dz) in the relative frame; joint Jacobian
        // entries follow by +/- placement.
        let eval_rel = move |dx: f64, dy: f64, dz: f64| -> (f64, [f64; 3]) {
            let rho = (dx * dx + dy * dy + DISTANCE_SMOOTHING * DISTANCE_SMOOTHING).sqrt();
            let adz = dz.abs();
            let sz = if dz >= 0.0 { 1.0 } else { -1.0 };
            if adz <= half_height {
                let side = radius - rho;
                let cap = half_height - adz;
                if rho >= radius || side <= cap {
                    // Side region, and the inside sub-case closest to the wall.
                    (side, [-dx / rho, -dy / rho, 0.0])
                } else {
                    (cap, [0.0, 0.0, -sz])
                }
            } else if rho <= radius {
                (half_height - adz, [0.0, 0.0, -sz])
            } else {
                let a = rho - radius;
                let b = adz - half_height;
                let d = (a * a + b * b).sqrt().max(1e-12);
                (
                    -d,
                    [-(a / d) * (dx / rho), -(a / d) * (dy / rho), -(b / d) * sz],
                )
            }
        };

        let value = move |x: &DVector<f64>| {
            let (g, _) = eval_rel(x[p0] - x[c0], x[p0 + 1] - x[c0 + 1], x[p0 + 2] - x[c0 + 2]);
            DVector::from_element(1, g)
        };
        let grad = move |x: &DVector<f64>| {
            let (_, dg) = eval_rel(x[p0] - x[c0], x[p0 + 1] - x[c0 + 1], x[p0 + 2] - x[c0 + 2]);
            let mut jac = DMatrix::zeros(1, n);
            for c in 0..3 {
                jac[(0, p0 + c)] = dg[c];
                jac[(0, c0 + c)] = -dg[c];
            }
            jac
        };
        let v2 = value;
        let g2 = grad;
        Self {
            label: format!("cylinder({point_agent},{center_agent})"),
            kind: ConstraintKind::Inequality,
            scope: ConstraintScope::Pair(point_agent, center_agent),
            meta: ConstraintMeta::Cylinder {
                point_agent,
                center_agent,
                radius,
                half_height,
            },
            rows: 1,
            state_dim: n,
            control_dim: m,
            running: Some(RunningPart {
                eval: Arc::new(move |x, _u, _k| value(x)),
                jac: Some(Arc::new(move |x, _u, _k| {
                    (grad(x), DMatrix::zeros(1, m))
                })),
            }),
            terminal: Some(TerminalPart {
                eval: Arc::new(move |x| v2(x)),
                jac: Some(Arc::new(move |x| g2(x))),
            }),
        }
    }

    /// Caller-supplied stage constraint; Jacobians fall back to central
    /// differences. Terminal enforcement can be added with
    /// [`Constraint::and_terminal`].
    pub fn custom(
        dynamics: &JointDynamics,
        label: impl Into<String>,
        kind: ConstraintKind,
        rows: usize,
        eval: impl Fn(&DVector<f64>, &DVector<f64>, usize) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            kind,
            scope: ConstraintScope::Joint,
            meta: ConstraintMeta::Custom,
            rows,
            state_dim: dynamics.state_dim(),
            control_dim: dynamics.control_dim(),
            running: Some(RunningPart {
                eval: Arc::new(eval),
                jac: None,
            }),
            terminal: None,
        }
    }

    pub fn and_terminal(
        mut self,
        eval: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.terminal = Some(TerminalPart {
            eval: Arc::new(eval),
            jac: None,
        });
        self
    }

    /// Attach an analytic stage Jacobian in place of the finite-difference
    /// fallback.
    pub fn with_running_jacobian(
        mut self,
        jac: impl Fn(&DVector<f64>, &DVector<f64>, usize) -> (DMatrix<f64>, DMatrix<f64>)
            + Send
            + Sync
            + 'static,
    ) -> Self {
        let part = self
            .running
            .as_mut()
            .expect("constraint has no stage part to attach a Jacobian to");
        part.jac = Some(Arc::new(jac));
        self
    }

    /// Attach an analytic terminal Jacobian in place of the
    /// finite-difference fallback.
    pub fn with_terminal_jacobian(
        mut self,
        jac: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        let part = self
            .terminal
            .as_mut()
            .expect("constraint has no terminal part to attach a Jacobian to");
        part.jac = Some(Arc::new(jac));
        self
    }

    pub fn eval_running(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> DVector<f64> {
        let part = self.running.as_ref().expect("constraint has no stage part");
        (part.eval)(x, u, k)
    }

    pub fn running_jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        k: usize,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let part = self.running.as_ref().expect("constraint has no stage part");
        match &part.jac {
            Some(jac) => jac(x, u, k),
            None => {
                let eval = Arc::clone(&part.eval);
                let e2 = Arc::clone(&part.eval);
                let jx = fd::jacobian(&|xx: &DVector<f64>| eval(xx, u, k), x, FD_JACOBIAN_STEP);
                let ju = fd::jacobian(&|uu: &DVector<f64>| e2(x, uu, k), u, FD_JACOBIAN_STEP);
                (jx, ju)
            }
        }
    }

    pub fn eval_terminal(&self, x: &DVector<f64>) -> DVector<f64> {
        let part = self.terminal.as_ref().expect("constraint has no terminal part");
        (part.eval)(x)
    }

    pub fn terminal_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let part = self.terminal.as_ref().expect("constraint has no terminal part");
        match &part.jac {
            Some(jac) => jac(x),
            None => {
                let eval = Arc::clone(&part.eval);
                fd::jacobian(&|xx: &DVector<f64>| eval(xx), x, FD_JACOBIAN_STEP)
            }
        }
    }
}

/// Ordered collection of constraints; row layout is declaration order.
#[derive(Clone, Debug, Default)]
pub struct ConstraintSet {
    items: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn empty() -> Self {
        Self { items: Vec::new() }
    }

    pub fn new(items: Vec<Constraint>) -> Self {
        Self { items }
    }

    pub fn items(&self) -> &[Constraint] {
        &self.items
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Stage rows as stored (equalities counted once).
    pub fn running_rows(&self) -> usize {
        self.items
            .iter()
            .filter(|c| c.applies_running())
            .map(|c| c.rows)
            .sum()
    }

    /// Stage rows with each equality expanded into its `<=` / `>=` pair.
    pub fn paired_running_rows(&self) -> usize {
        self.items
            .iter()
            .filter(|c| c.applies_running())
            .map(|c| match c.kind {
                ConstraintKind::Inequality => c.rows,
                ConstraintKind::Equality => 2 * c.rows,
            })
            .sum()
    }

    pub fn terminal_rows(&self) -> usize {
        self.items
            .iter()
            .filter(|c| c.applies_terminal())
            .map(|c| c.rows)
            .sum()
    }

    /// Kind of each stage row in stacking order.
    pub fn running_kinds(&self) -> Vec<ConstraintKind> {
        let mut kinds = Vec::with_capacity(self.running_rows());
        for c in self.items.iter().filter(|c| c.applies_running()) {
            kinds.extend(std::iter::repeat_n(c.kind, c.rows));
        }
        kinds
    }

    pub fn terminal_kinds(&self) -> Vec<ConstraintKind> {
        let mut kinds = Vec::with_capacity(self.terminal_rows());
        for c in self.items.iter().filter(|c| c.applies_terminal()) {
            kinds.extend(std::iter::repeat_n(c.kind, c.rows));
        }
        kinds
    }

    /// Label of the record owning stage row `row`, with its local row index.
    pub fn running_row_label(&self, row: usize) -> Option<(&str, usize)> {
        let mut base = 0;
        for c in self.items.iter().filter(|c| c.applies_running()) {
            if row < base + c.rows {
                return Some((c.label(), row - base));
            }
            base += c.rows;
        }
        None
    }

    pub fn eval_running(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> DVector<f64> {
        let mut g = DVector::zeros(self.running_rows());
        let mut at = 0;
        for c in self.items.iter().filter(|c| c.applies_running()) {
            g.rows_mut(at, c.rows).copy_from(&c.eval_running(x, u, k));
            at += c.rows;
        }
        g
    }

    pub fn running_jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        k: usize,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let rows = self.running_rows();
        let mut jx = DMatrix::zeros(rows, x.len());
        let mut ju = DMatrix::zeros(rows, u.len());
        let mut at = 0;
        for c in self.items.iter().filter(|c| c.applies_running()) {
            let (cx, cu) = c.running_jacobians(x, u, k);
            jx.rows_mut(at, c.rows).copy_from(&cx);
            ju.rows_mut(at, c.rows).copy_from(&cu);
            at += c.rows;
        }
        (jx, ju)
    }

    pub fn eval_terminal(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.terminal_rows());
        let mut at = 0;
        for c in self.items.iter().filter(|c| c.applies_terminal()) {
            g.rows_mut(at, c.rows).copy_from(&c.eval_terminal(x));
            at += c.rows;
        }
        g
    }

    pub fn terminal_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let rows = self.terminal_rows();
        let mut jx = DMatrix::zeros(rows, x.len());
        let mut at = 0;
        for c in self.items.iter().filter(|c| c.applies_terminal()) {
            jx.rows_mut(at, c.rows).copy_from(&c.terminal_jacobian(x));
            at += c.rows;
        }
        jx
    }

    /// Worst stage violation at `(x, u, k)`: `max(g, 0)` on inequality rows,
    /// `|g|` on equality rows.
    pub fn violation_running(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> f64 {
        let g = self.eval_running(x, u, k);
        let kinds = self.running_kinds();
        row_violation(&g, &kinds)
    }

    pub fn violation_terminal(&self, x: &DVector<f64>) -> f64 {
        let g = self.eval_terminal(x);
        let kinds = self.terminal_kinds();
        row_violation(&g, &kinds)
    }
}

pub(crate) fn row_violation(g: &DVector<f64>, kinds: &[ConstraintKind]) -> f64 {
    let mut worst = 0.0f64;
    for (r, kind) in kinds.iter().enumerate() {
        let v = match kind {
            ConstraintKind::Inequality => g[r].max(0.0),
            ConstraintKind::Equality => g[r].abs(),
        };
        worst = worst.max(v);
    }
    worst
}
