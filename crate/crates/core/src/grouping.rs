//! Strategic anchor grouping.
//!
//! The top-K retrieved tools form group 0 as-is. Each of them then anchors
//! one more group (1..=K) that is padded with a disjoint, contiguous chunk of
//! the remaining tools in rank order. Earlier groups receive the larger
//! chunks when the tail does not divide evenly.

use serde::{Deserialize, Serialize};

use crate::retrieval::{top_k, RankedTools};

pub const DEFAULT_GROUPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupingConfig {
    /// Requested group count; the effective count is `min(k, N)`.
    pub k: usize,
    /// Cap on the size of groups 1..=K, anchor included.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_group_size: Option<usize>,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_GROUPS,
            max_group_size: None,
        }
    }
}

impl GroupingConfig {
    pub fn with_k(k: usize) -> Self {
        assert!(k >= 1, "group count must be at least 1");
        Self {
            k,
            max_group_size: None,
        }
    }

    pub fn effective_k(&self, lib_size: usize) -> usize {
        self.k.min(lib_size)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolGroup {
    pub index: usize,
    /// Library positions, anchor first for groups 1..=K.
    pub members: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<usize>,
}

impl ToolGroup {
    pub fn distractors(&self) -> &[usize] {
        match self.anchor {
            Some(_) => &self.members[1..],
            None => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupingPlan {
    pub groups: Vec<ToolGroup>,
    pub t_top: Vec<usize>,
    pub t_tail: Vec<usize>,
}

impl GroupingPlan {
    /// Number of anchored groups (K).
    pub fn k(&self) -> usize {
        self.groups.len() - 1
    }
}

/// Splits `len` items into `parts` near-equal sizes, larger ones first.
fn chunk_sizes(len: usize, parts: usize) -> Vec<usize> {
    let base = len / parts;
    let extra = len % parts;
    (0..parts).map(|j| base + usize::from(j < extra)).collect()
}

pub fn build_plan(ranked: &RankedTools, lib_size: usize, cfg: &GroupingConfig) -> GroupingPlan {
    assert!(lib_size >= 1, "cannot group an empty library");
    assert_eq!(
        ranked.len(),
        lib_size,
        "ranking must cover the whole library"
    );
    let k = cfg.effective_k(lib_size);
    let t_top = top_k(ranked, k);
    let t_tail: Vec<usize> = ranked.positions().skip(k).collect();

    let mut groups = Vec::with_capacity(k + 1);
    groups.push(ToolGroup {
        index: 0,
        members: t_top.clone(),
        anchor: None,
    });
    let mut offset = 0;
    for (j, size) in chunk_sizes(t_tail.len(), k).into_iter().enumerate() {
        let chunk = &t_tail[offset..offset + size];
        offset += size;
        let keep = match cfg.max_group_size {
            Some(cap) => size.min(cap.saturating_sub(1)),
            None => size,
        };
        let anchor = t_top[j];
        let mut members = Vec::with_capacity(keep + 1);
        members.push(anchor);
        members.extend_from_slice(&chunk[..keep]);
        groups.push(ToolGroup {
            index: j + 1,
            members,
            anchor: Some(anchor),
        });
    }
    GroupingPlan {
        groups,
        t_top,
        t_tail,
    }
}

/// One singleton group per library position, in library order, with no
/// retrieval and no group 0. Used when every tool is tried on its own.
pub fn enumeration_groups(lib_size: usize) -> Vec<ToolGroup> {
    (0..lib_size)
        .map(|p| ToolGroup {
            index: p + 1,
            members: vec![p],
            anchor: Some(p),
        })
        .collect()
}
