//! Event-triggered communication.
//!
//! Each agent emits continuous trigger signals `c` (one per sender agent) and
//! `d` (one per data category). A cell `(j, l)` of the receiving agent's
//! observation table is filled with sender `j`'s category `l` only when both
//! signals are strictly positive; every other cell holds the sentinel `-1`.
//! The table is rebuilt from scratch every control step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value written into every scalar slot of a cell that was not received.
pub const SENTINEL: f64 = -1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerSignals {
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

/// Binary receive decision of one agent for one control step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerDecision {
    /// Receive from agent `j`.
    pub w: Vec<bool>,
    /// Receive data category `l`.
    pub z: Vec<bool>,
}

impl TriggerDecision {
    pub fn uniform(n_agents: usize, n_categories: usize, value: bool) -> Self {
        Self {
            w: vec![value; n_agents],
            z: vec![value; n_categories],
        }
    }

    /// `‖w‖₁ + ‖z‖₁`, the quantity penalised in the reward.
    pub fn l1(&self) -> usize {
        self.w.iter().filter(|&&b| b).count() + self.z.iter().filter(|&&b| b).count()
    }

    /// Number of delivered (sender, category) cells: `Σ_j Σ_l w_j z_l`.
    pub fn cell_count(&self) -> usize {
        self.w.iter().filter(|&&b| b).count() * self.z.iter().filter(|&&b| b).count()
    }

    pub fn receives(&self, sender: usize, category: usize) -> bool {
        self.w[sender] && self.z[category]
    }
}

/// Strict-threshold trigger law: fire iff the signal is `> 0`.
pub fn trigger(signals: &TriggerSignals) -> TriggerDecision {
    TriggerDecision {
        w: signals.c.iter().map(|&c| c > 0.0).collect(),
        z: signals.d.iter().map(|&d| d > 0.0).collect(),
    }
}

/// Widths (in scalars) of each data category.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryLayout {
    pub names: Vec<String>,
    pub widths: Vec<usize>,
}

impl CategoryLayout {
    pub fn new(categories: &[(&str, usize)]) -> Self {
        Self {
            names: categories.iter().map(|(n, _)| n.to_string()).collect(),
            widths: categories.iter().map(|&(_, w)| w).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }

    /// Scalars per agent row.
    pub fn row_width(&self) -> usize {
        self.widths.iter().sum()
    }

    fn offsets(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.widths.iter().scan(0, |start, &w| {
            let s = *start;
            *start += w;
            Some((s, w))
        })
    }
}

/// One agent's view of every agent's data: N rows, each the concatenation of
/// the L categories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationTable {
    pub owner: usize,
    pub n_agents: usize,
    pub layout: CategoryLayout,
    values: Vec<f64>,
    received: Vec<bool>,
}

impl ObservationTable {
    /// Table with every cell blocked.
    pub fn all_sentinel(owner: usize, n_agents: usize, layout: CategoryLayout) -> Self {
        let width = layout.row_width();
        let l = layout.len();
        Self {
            owner,
            n_agents,
            layout,
            values: vec![SENTINEL; n_agents * width],
            received: vec![false; n_agents * l],
        }
    }

    /// Flattened rows in agent order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_received(&self, sender: usize, category: usize) -> bool {
        self.received[sender * self.layout.len() + category]
    }

    pub fn cell(&self, sender: usize, category: usize) -> &[f64] {
        let (start, width) = self.layout.offsets().nth(category).expect("category index");
        let row = sender * self.layout.row_width();
        &self.values[row + start..row + start + width]
    }

    pub fn received_count(&self) -> usize {
        self.received.iter().filter(|&&r| r).count()
    }
}

/// Rebuilds agent `own_index`'s table from the true per-agent data rows.
///
/// The own row is gated like every other row.
pub fn update_observation_table(
    own_index: usize,
    decision: &TriggerDecision,
    layout: &CategoryLayout,
    true_data: &[Vec<f64>],
) -> Result<ObservationTable> {
    let n = true_data.len();
    if own_index >= n {
        return Err(Error::Dimension(format!(
            "agent {own_index} out of range for {n} agents"
        )));
    }
    if decision.w.len() != n {
        return Err(Error::LengthMismatch {
            what: "w",
            expected: n,
            got: decision.w.len(),
        });
    }
    if decision.z.len() != layout.len() {
        return Err(Error::LengthMismatch {
            what: "z",
            expected: layout.len(),
            got: decision.z.len(),
        });
    }
    let width = layout.row_width();
    let mut table = ObservationTable::all_sentinel(own_index, n, layout.clone());
    for (j, row) in true_data.iter().enumerate() {
        if row.len() != width {
            return Err(Error::LengthMismatch {
                what: "agent data row",
                expected: width,
                got: row.len(),
            });
        }
        if !decision.w[j] {
            continue;
        }
        for (l, (start, w)) in layout.offsets().enumerate() {
            if decision.z[l] {
                let dst = j * width + start;
                table.values[dst..dst + w].copy_from_slice(&row[start..start + w]);
                table.received[j * layout.len() + l] = true;
            }
        }
    }
    Ok(table)
}

/// Which decisions are actually applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommSchedule {
    /// The learned trigger law.
    EventTriggered,
    /// Receive everything on steps `k` with `k % period == 0`, nothing otherwise.
    FixedRate { period: u32 },
    /// Never receive.
    None,
}

impl CommSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            CommSchedule::FixedRate { period: 0 } => {
                Err(Error::Config("fixed-rate period must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Short label used for directory names and report rows.
    pub fn label(&self) -> String {
        match self {
            CommSchedule::EventTriggered => "event".into(),
            CommSchedule::FixedRate { period } => format!("fixed{period}"),
            CommSchedule::None => "none".into(),
        }
    }

    /// Number of steps in `0..steps` on which a fixed schedule receives everything.
    pub fn firings(&self, steps: usize) -> Option<usize> {
        match *self {
            CommSchedule::EventTriggered => None,
            CommSchedule::FixedRate { period } => Some(steps.div_ceil(period as usize)),
            CommSchedule::None => Some(0),
        }
    }
}

impl std::str::FromStr for CommSchedule {
    type Err = Error;

    /// Accepts `event`, `none`, `fixed<period>` or `fixed:<period>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let schedule = match s.as_str() {
            "event" | "event_triggered" | "event-triggered" => CommSchedule::EventTriggered,
            "none" | "no_communication" => CommSchedule::None,
            other => {
                let period = other
                    .strip_prefix("fixed")
                    .map(|p| p.trim_start_matches([':', '_', '-']))
                    .and_then(|p| p.parse::<u32>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown schedule '{s}'")))?;
                CommSchedule::FixedRate { period }
            }
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

pub fn decision_from_schedule(
    schedule: &CommSchedule,
    step: usize,
    event_decision: &TriggerDecision,
) -> TriggerDecision {
    let (n, l) = (event_decision.w.len(), event_decision.z.len());
    match *schedule {
        CommSchedule::EventTriggered => event_decision.clone(),
        CommSchedule::FixedRate { period } => {
            TriggerDecision::uniform(n, l, step.is_multiple_of(period as usize))
        }
        CommSchedule::None => TriggerDecision::uniform(n, l, false),
    }
}

/// Running count of delivered (receiver, sender, category) cells.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommCostLedger {
    pub per_step: Vec<u64>,
    pub total: u64,
}

impl CommCostLedger {
    /// Adds one control step worth of decisions (one per receiving agent).
    pub fn record(&mut self, decisions: &[TriggerDecision]) -> u64 {
        let step: u64 = decisions.iter().map(|d| d.cell_count() as u64).sum();
        self.per_step.push(step);
        self.total += step;
        step
    }
}

/// Per-step receive decision of one agent, for topology plots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerTraceRecord {
    pub step: usize,
    pub agent: usize,
    pub w: Vec<u8>,
    pub z: Vec<u8>,
}

impl TriggerTraceRecord {
    pub fn new(step: usize, agent: usize, decision: &TriggerDecision) -> Self {
        Self {
            step,
            agent,
            w: decision.w.iter().map(|&b| b as u8).collect(),
            z: decision.z.iter().map(|&b| b as u8).collect(),
        }
    }
}
