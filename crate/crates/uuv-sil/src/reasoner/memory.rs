//! Short-term ring of recent (prompt, strategy) pairs and a long-term
//! store of verified recoveries.
//!
//! Long-term retrieval is an exact match on the flag causes and scenario
//! kind, newest first, capped at [`TOP_K`].

use super::{ScenarioKind, StrategyTheta};
use crate::perception::Cause;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};

pub const DEFAULT_M_ST: usize = 8;
pub const TOP_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTermRecord {
    pub causes: BTreeSet<Cause>,
    pub scenario: ScenarioKind,
    /// Sim time the recovery was dispatched, s.
    pub t: f64,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStores {
    m_st: usize,
    short_term: VecDeque<(String, StrategyTheta)>,
    long_term: Vec<LongTermRecord>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryContext {
    pub short_term: Vec<(String, StrategyTheta)>,
    pub long_term: Vec<LongTermRecord>,
}

impl MemoryContext {
    pub fn is_empty(&self) -> bool {
        self.short_term.is_empty() && self.long_term.is_empty()
    }
}

impl Default for MemoryStores {
    fn default() -> Self {
        Self::new(DEFAULT_M_ST)
    }
}

impl MemoryStores {
    pub fn new(m_st: usize) -> Self {
        Self {
            m_st,
            short_term: VecDeque::with_capacity(m_st),
            long_term: Vec::new(),
        }
    }

    /// Append a pair, evicting the oldest beyond capacity.
    pub fn record(&mut self, prompt: &str, theta: &StrategyTheta) {
        if self.m_st == 0 {
            return;
        }
        if self.short_term.len() == self.m_st {
            self.short_term.pop_front();
        }
        self.short_term.push_back((prompt.to_string(), theta.clone()));
    }

    pub fn record_recovery(&mut self, record: LongTermRecord) {
        self.long_term.push(record);
    }

    pub fn short_term_len(&self) -> usize {
        self.short_term.len()
    }

    pub fn long_term(&self) -> &[LongTermRecord] {
        &self.long_term
    }

    pub fn context(&self, causes: &BTreeSet<Cause>, scenario: ScenarioKind) -> MemoryContext {
        MemoryContext {
            short_term: self.short_term.iter().cloned().collect(),
            long_term: self
                .long_term
                .iter()
                .rev()
                .filter(|r| &r.causes == causes && r.scenario == scenario)
                .take(TOP_K)
                .cloned()
                .collect(),
        }
    }
}
