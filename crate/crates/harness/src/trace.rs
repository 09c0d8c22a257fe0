use etcomm::envs::EpisodeTraceRecord;
use serde::{Deserialize, Serialize};

/// Receive pattern at one control step: `cells[i][j][l]` is 1 when agent `i`
/// received category `l` from agent `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyGrid {
    /// Zero-based control step whose decisions are shown.
    pub step: usize,
    pub cells: Vec<Vec<Vec<u8>>>,
}

impl TopologyGrid {
    pub fn filled(&self) -> usize {
        self.cells.iter().flatten().flatten().map(|&c| c as usize).sum()
    }
}

/// Grids for every `stride`-th control step of an episode trace. The reset
/// record (step 0, no decisions yet) is skipped; a stride of 0 is treated as 1.
pub fn export_topology_trace(trace: &[EpisodeTraceRecord], stride: usize) -> Vec<TopologyGrid> {
    let stride = stride.max(1);
    trace
        .iter()
        .filter(|r| r.step > 0 && (r.step - 1) % stride == 0)
        .map(|r| TopologyGrid {
            step: r.step - 1,
            cells: r
                .w
                .iter()
                .zip(&r.z)
                .map(|(w, z)| w.iter().map(|&wj| z.iter().map(|&zl| wj & zl).collect()).collect())
                .collect(),
        })
        .collect()
}
