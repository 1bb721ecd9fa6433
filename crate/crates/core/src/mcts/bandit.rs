use crate::lang::{ParamSpec, ParamValue};

/// UCT score of a child; unvisited children score `+∞`.
pub fn uct_score(visits: u64, q_max: f64, parent_visits: u64, c: f64) -> f64 {
    if visits == 0 {
        return f64::INFINITY;
    }
    q_max + c * ((parent_visits.max(1) as f64).ln() / visits as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub value: ParamValue,
    pub pulls: u64,
    pub q_max: f64,
}

/// Multi-armed bandit over the candidate values of one tactic parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBandit {
    pub param: String,
    pub arms: Vec<Arm>,
}

impl ParamBandit {
    pub fn new(spec: &ParamSpec) -> Self {
        ParamBandit {
            param: spec.name.clone(),
            arms: spec.candidates.iter().map(|&value| Arm { value, pulls: 0, q_max: 0.0 }).collect(),
        }
    }

    pub fn total_pulls(&self) -> u64 {
        self.arms.iter().map(|a| a.pulls).sum()
    }

    /// Index of the arm with the highest upper confidence bound; unpulled
    /// arms come first and ties go to the earlier candidate.
    pub fn select(&self, c: f64) -> usize {
        if let Some(i) = self.arms.iter().position(|a| a.pulls == 0) {
            return i;
        }
        let total = self.total_pulls();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, arm) in self.arms.iter().enumerate() {
            let score = uct_score(arm.pulls, arm.q_max, total, c);
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        best
    }

    /// Max-backup update of one arm.
    pub fn update(&mut self, arm: usize, reward: f64) {
        let a = &mut self.arms[arm];
        a.pulls += 1;
        a.q_max = a.q_max.max(reward);
    }
}

/// Value of the arm [`ParamBandit::select`] picks.
pub fn bandit_select(bandit: &ParamBandit, c: f64) -> ParamValue {
    bandit.arms[bandit.select(c)].value
}
