//! Bundled ECPE Q-matrix and the seven-setting hierarchy battery run on it.

use serde::{Deserialize, Serialize};

use crate::em::FitConfig;
use crate::error::{Error, Result};
use crate::io::parse_q;
use crate::lrt::{Method, TestOptions, TestProblem, TestReport};
use crate::models::{ModelKind, ResponseMatrix};
use crate::qmatrix::{validate_hierarchy, QMatrix};

/// 28 items × 3 attributes (morphosyntactic, cohesive, lexical rules).
pub const ECPE_Q_CSV: &str = include_str!("../fixtures/ecpe_q.csv");

pub fn ecpe_q() -> QMatrix {
    parse_q(ECPE_Q_CSV).expect("bundled ECPE Q-matrix parses")
}

/// One null/alternative pair of the battery; edges are 1-based
/// (prerequisite, dependent).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatterySetting {
    pub label: String,
    pub null_edges: Vec<(usize, usize)>,
    pub alt_edges: Vec<(usize, usize)>,
}

fn setting(label: &str, null_edges: &[(usize, usize)], alt_edges: &[(usize, usize)]) -> BatterySetting {
    BatterySetting {
        label: label.to_string(),
        null_edges: null_edges.to_vec(),
        alt_edges: alt_edges.to_vec(),
    }
}

pub fn ecpe_battery() -> Vec<BatterySetting> {
    let chain = [(3, 2), (2, 1)];
    vec![
        setting("{3->2->1} vs {}", &chain, &[]),
        setting("{3->2} vs {}", &[(3, 2)], &[]),
        setting("{2->1} vs {}", &[(2, 1)], &[]),
        setting("{3->1} vs {}", &[(3, 1)], &[]),
        setting("{3->2->1} vs {3->2}", &chain, &[(3, 2)]),
        setting("{3->2->1} vs {2->1}", &chain, &[(2, 1)]),
        setting("{3->2->1} vs {3->1}", &chain, &[(3, 1)]),
    ]
}

/// Runs every setting with every method; observed fits are shared across
/// methods within a setting. Reports come back setting-major.
pub fn run_battery(
    q: &QMatrix,
    settings: &[BatterySetting],
    kind: ModelKind,
    data: &ResponseMatrix,
    methods: &[Method],
    cfg: &FitConfig,
    opts: &TestOptions,
) -> Result<Vec<TestReport>> {
    if data.j() != q.j() {
        return Err(Error::ColumnCountMismatch {
            expected: q.j(),
            got: data.j(),
        });
    }
    let mut reports = Vec::new();
    for s in settings {
        let h0 = validate_hierarchy(q.k(), &s.null_edges)?;
        let h1 = validate_hierarchy(q.k(), &s.alt_edges)?;
        let problem = TestProblem::new(q.clone(), kind, &h0, Some(&h1))?;
        let obs = problem.observe(data, cfg)?;
        for &m in methods {
            let mut r = problem.report(&obs, data, m, cfg, opts)?;
            r.label = Some(s.label.clone());
            reports.push(r);
        }
    }
    Ok(reports)
}
