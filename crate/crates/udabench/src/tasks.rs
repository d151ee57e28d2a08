//! Transfer scenarios, task definitions, and the per-dataset task registry.
//!
//! Task names are file-system-safe: `"0-1"` reads "condition 0 transfers to
//! condition 1", and `"123-0"` reads "conditions 1, 2, 3 jointly transfer to
//! condition 0" for the multi-source scenarios.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// Transfer scenario taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    ClosedSet,
    Partial,
    OpenSet,
    Universal,
    MultiAdaptation,
    DomainGeneralization,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::ClosedSet,
        ScenarioKind::Partial,
        ScenarioKind::OpenSet,
        ScenarioKind::Universal,
        ScenarioKind::MultiAdaptation,
        ScenarioKind::DomainGeneralization,
    ];

    pub fn multi_source(self) -> bool {
        matches!(self, ScenarioKind::MultiAdaptation | ScenarioKind::DomainGeneralization)
    }

    /// Target samples may carry labels outside the source label set.
    pub fn has_unknown(self) -> bool {
        matches!(self, ScenarioKind::OpenSet | ScenarioKind::Universal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::ClosedSet => "closed-set",
            ScenarioKind::Partial => "partial",
            ScenarioKind::OpenSet => "open-set",
            ScenarioKind::Universal => "universal",
            ScenarioKind::MultiAdaptation => "multi-adaptation",
            ScenarioKind::DomainGeneralization => "domain-generalization",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Model input representation: raw 1024-sample windows or their 512-bin
/// magnitude spectra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputType {
    Time,
    Frequency,
}

impl InputType {
    pub fn window_len(self) -> usize {
        match self {
            InputType::Time => 1024,
            InputType::Frequency => 512,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InputType::Time => "time",
            InputType::Frequency => "frequency",
        }
    }
}

impl fmt::Display for InputType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One transfer task: which condition(s) act as labeled source domains,
/// which condition is the unlabeled target, and the label sets of each side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferTask {
    pub source_domains: Vec<u32>,
    pub target_domain: u32,
    pub source_labels: BTreeSet<u32>,
    pub target_labels: BTreeSet<u32>,
    pub input_type: InputType,
    pub scenario: ScenarioKind,
}

impl TransferTask {
    /// `"s-t"` for single source, `"abc-d"` for multi source.
    pub fn name(&self) -> String {
        let src: String = self.source_domains.iter().map(|d| d.to_string()).collect();
        format!("{src}-{}", self.target_domain)
    }

    pub fn common_labels(&self) -> BTreeSet<u32> {
        self.source_labels.intersection(&self.target_labels).cloned().collect()
    }

    /// Target labels outside the source label set ("unknown" at test time).
    pub fn target_private_labels(&self) -> BTreeSet<u32> {
        self.target_labels.difference(&self.source_labels).cloned().collect()
    }
}

/// Check the scenario kind against the set relations and domain counts.
pub fn validate_task(task: &TransferTask) -> Result<()> {
    if task.source_labels.is_empty() || task.target_labels.is_empty() {
        return Err(Error::Task("empty label set".into()));
    }
    if task.source_domains.contains(&task.target_domain) {
        return Err(Error::Task(format!(
            "target domain {} also appears as a source domain",
            task.target_domain
        )));
    }
    if task.source_domains.is_empty() {
        return Err(Error::Task("no source domains".into()));
    }
    {
        let mut seen = BTreeSet::new();
        if !task.source_domains.iter().all(|d| seen.insert(*d)) {
            return Err(Error::Task("duplicate source domain".into()));
        }
    }
    let n_src = task.source_domains.len();
    if task.scenario.multi_source() {
        if n_src < 2 {
            return Err(Error::Task(format!("{} requires at least two source domains", task.scenario)));
        }
    } else if n_src != 1 {
        return Err(Error::Task(format!("{} requires exactly one source domain", task.scenario)));
    }
    let s = &task.source_labels;
    let t = &task.target_labels;
    let consistent = match task.scenario {
        ScenarioKind::ClosedSet | ScenarioKind::MultiAdaptation | ScenarioKind::DomainGeneralization => s == t,
        ScenarioKind::Partial => t.is_subset(s) && t != s,
        ScenarioKind::OpenSet => s.is_subset(t) && t != s,
        ScenarioKind::Universal => {
            s.intersection(t).next().is_some()
                && s.difference(t).next().is_some()
                && t.difference(s).next().is_some()
        }
    };
    if !consistent {
        return Err(Error::Task(format!(
            "inconsistent scenario: {} does not match source labels {:?} / target labels {:?}",
            task.scenario, s, t
        )));
    }
    Ok(())
}

/// Registered datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetId {
    Cwru,
    Pu,
    PuTypes,
    Jnu,
    Phm2009,
    Seu,
    Synth,
}

impl DatasetId {
    pub const ALL: [DatasetId; 7] = [
        DatasetId::Cwru,
        DatasetId::Pu,
        DatasetId::PuTypes,
        DatasetId::Jnu,
        DatasetId::Phm2009,
        DatasetId::Seu,
        DatasetId::Synth,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cwru" => Ok(DatasetId::Cwru),
            "pu" => Ok(DatasetId::Pu),
            "pu-types" => Ok(DatasetId::PuTypes),
            "jnu" => Ok(DatasetId::Jnu),
            "phm2009" => Ok(DatasetId::Phm2009),
            "seu" => Ok(DatasetId::Seu),
            "synth" => Ok(DatasetId::Synth),
            other => Err(Error::Task(format!("unknown dataset `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::Cwru => "cwru",
            DatasetId::Pu => "pu",
            DatasetId::PuTypes => "pu-types",
            DatasetId::Jnu => "jnu",
            DatasetId::Phm2009 => "phm2009",
            DatasetId::Seu => "seu",
            DatasetId::Synth => "synth",
        }
    }

    /// Number of operating conditions (transfer domains).
    pub fn domain_count(self) -> u32 {
        match self {
            DatasetId::Cwru | DatasetId::Pu | DatasetId::Phm2009 => 4,
            DatasetId::Jnu | DatasetId::Synth => 3,
            DatasetId::PuTypes | DatasetId::Seu => 2,
        }
    }

    /// Number of health-state classes.
    pub fn class_count(self) -> u32 {
        match self {
            DatasetId::Cwru => 10,
            DatasetId::Pu => 13,
            DatasetId::PuTypes | DatasetId::Synth => 3,
            DatasetId::Jnu => 4,
            DatasetId::Phm2009 => 6,
            DatasetId::Seu => 9,
        }
    }

    pub fn full_label_set(self) -> BTreeSet<u32> {
        (0..self.class_count()).collect()
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-task-pair label sets for the label-inconsistent scenarios on CWRU.
///
/// Each entry covers two consecutive tasks of the twelve ordered condition
/// pairs; columns are (partial target, open-set source, universal source,
/// universal target). The label sets were drawn once and are fixed here for
/// reproducibility.
const CWRU_LABEL_SETS: [(&[u32], &[u32], &[u32], &[u32]); 6] = [
    (&[0, 1, 2, 4, 5, 7, 8, 9], &[0, 2, 3, 5, 6, 7, 8, 9], &[0, 1, 2, 4, 5, 6, 7, 8, 9], &[1, 2, 3, 4, 5, 7, 8, 9]),
    (&[1, 2, 4, 6, 7, 8, 9], &[0, 1, 2, 3, 4, 5, 6], &[0, 1, 2, 3, 4, 5, 7, 8], &[0, 2, 3, 4, 5, 6, 7, 8, 9]),
    (&[0, 1, 3, 7, 9], &[1, 3, 4, 5, 7, 8], &[1, 2, 4, 5, 7, 8, 9], &[1, 3, 6, 8]),
    (&[1, 2, 4, 7], &[0, 2, 4, 5, 6, 9], &[1, 3, 4, 6, 7, 8], &[0, 1, 2, 3, 5, 6, 8, 9]),
    (&[0, 2, 6], &[0, 1, 2, 5, 7], &[0, 1, 2, 7, 8], &[1, 2, 6, 9]),
    (&[5, 8], &[4, 8, 9], &[0, 1, 5, 7, 8], &[0, 4, 8]),
];

/// The four multi-source tasks on CWRU (source conditions, target condition).
const CWRU_MULTI_TASKS: [(&[u32], u32); 4] = [(&[0, 1, 2], 3), (&[1, 2, 3], 0), (&[0, 1, 3], 2), (&[2, 3, 0], 1)];

/// All ordered condition pairs `(s, t)`, `s != t`, in source-major order.
fn ordered_pairs(n: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for s in 0..n {
        for t in 0..n {
            if s != t {
                out.push((s, t));
            }
        }
    }
    out
}

/// Enumerate the registered transfer tasks for a dataset and scenario.
///
/// The enumeration is deterministic and order-stable: single-source tasks in
/// source-major order of condition pairs, multi-source tasks in registry
/// order.
pub fn enumerate_tasks(dataset: DatasetId, scenario: ScenarioKind, input_type: InputType) -> Result<Vec<TransferTask>> {
    let full = dataset.full_label_set();
    let make = |sources: Vec<u32>, target: u32, s: BTreeSet<u32>, t: BTreeSet<u32>| TransferTask {
        source_domains: sources,
        target_domain: target,
        source_labels: s,
        target_labels: t,
        input_type,
        scenario,
    };
    let tasks = match scenario {
        ScenarioKind::ClosedSet => ordered_pairs(dataset.domain_count())
            .into_iter()
            .map(|(s, t)| make(vec![s], t, full.clone(), full.clone()))
            .collect(),
        ScenarioKind::Partial | ScenarioKind::OpenSet | ScenarioKind::Universal => {
            match dataset {
                DatasetId::Cwru => ordered_pairs(4)
                    .into_iter()
                    .enumerate()
                    .map(|(i, (s, t))| {
                        let (partial_t, open_s, uni_s, uni_t) = CWRU_LABEL_SETS[i / 2];
                        let (src, tgt): (BTreeSet<u32>, BTreeSet<u32>) = match scenario {
                            ScenarioKind::Partial => (full.clone(), partial_t.iter().cloned().collect()),
                            ScenarioKind::OpenSet => (open_s.iter().cloned().collect(), full.clone()),
                            _ => (uni_s.iter().cloned().collect(), uni_t.iter().cloned().collect()),
                        };
                        make(vec![s], t, src, tgt)
                    })
                    .collect(),
                DatasetId::Synth => {
                    // fixed synthetic label sets over 3 classes
                    let (src, tgt): (BTreeSet<u32>, BTreeSet<u32>) = match scenario {
                        ScenarioKind::Partial => ([0, 1, 2].into(), [0, 1].into()),
                        ScenarioKind::OpenSet => ([0, 1].into(), [0, 1, 2].into()),
                        _ => ([0, 1].into(), [1, 2].into()),
                    };
                    ordered_pairs(dataset.domain_count())
                        .into_iter()
                        .map(|(s, t)| make(vec![s], t, src.clone(), tgt.clone()))
                        .collect()
                }
                other => {
                    return Err(Error::Task(format!(
                        "scenario {scenario} is not registered for dataset {other}; label-inconsistent task tables exist for cwru (and synth)"
                    )))
                }
            }
        }
        ScenarioKind::MultiAdaptation | ScenarioKind::DomainGeneralization => match dataset {
            DatasetId::Cwru => CWRU_MULTI_TASKS
                .iter()
                .map(|(srcs, t)| make(srcs.to_vec(), *t, full.clone(), full.clone()))
                .collect(),
            DatasetId::Synth => {
                // leave-one-out over the three synthetic domains
                let n = dataset.domain_count();
                (0..n)
                    .map(|t| make((0..n).filter(|&d| d != t).collect(), t, full.clone(), full.clone()))
                    .collect()
            }
            other => {
                return Err(Error::Task(format!(
                    "scenario {scenario} is not registered for dataset {other}; multi-domain task tables exist for cwru (and synth)"
                )))
            }
        },
    };
    Ok(tasks)
}

/// Find a registered task by its name (e.g. `"0-1"`, `"123-0"`).
pub fn find_task(
    dataset: DatasetId,
    scenario: ScenarioKind,
    input_type: InputType,
    name: &str,
) -> Result<TransferTask> {
    enumerate_tasks(dataset, scenario, input_type)?
        .into_iter()
        .find(|t| t.name() == name)
        .ok_or_else(|| Error::Task(format!("task `{name}` is not registered for {dataset}/{scenario}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[u32]) -> BTreeSet<u32> {
        v.iter().cloned().collect()
    }

    #[test]
    fn cwru_partial_table_task_is_valid() {
        let task = TransferTask {
            source_domains: vec![0],
            target_domain: 1,
            source_labels: (0..10).collect(),
            target_labels: set(&[0, 1, 2, 4, 5, 7, 8, 9]),
            input_type: InputType::Time,
            scenario: ScenarioKind::Partial,
        };
        validate_task(&task).unwrap();
    }

    #[test]
    fn closed_set_identity_is_valid() {
        let task = TransferTask {
            source_domains: vec![2],
            target_domain: 0,
            source_labels: set(&[0, 1]),
            target_labels: set(&[0, 1]),
            input_type: InputType::Frequency,
            scenario: ScenarioKind::ClosedSet,
        };
        validate_task(&task).unwrap();
    }

    #[test]
    fn partial_with_equal_sets_is_inconsistent() {
        let task = TransferTask {
            source_domains: vec![0],
            target_domain: 1,
            source_labels: set(&[0, 1]),
            target_labels: set(&[0, 1]),
            input_type: InputType::Time,
            scenario: ScenarioKind::Partial,
        };
        let err = validate_task(&task).unwrap_err();
        assert!(err.to_string().contains("inconsistent scenario"));
    }

    #[test]
    fn empty_label_set_rejected() {
        let task = TransferTask {
            source_domains: vec![0],
            target_domain: 1,
            source_labels: BTreeSet::new(),
            target_labels: set(&[0]),
            input_type: InputType::Time,
            scenario: ScenarioKind::ClosedSet,
        };
        assert!(validate_task(&task).is_err());
    }

    #[test]
    fn overlapping_domains_rejected() {
        let task = TransferTask {
            source_domains: vec![1],
            target_domain: 1,
            source_labels: set(&[0]),
            target_labels: set(&[0]),
            input_type: InputType::Time,
            scenario: ScenarioKind::ClosedSet,
        };
        assert!(validate_task(&task).is_err());
    }

    #[test]
    fn multi_source_requires_two_domains() {
        let mut task = TransferTask {
            source_domains: vec![1, 2, 3],
            target_domain: 0,
            source_labels: set(&[0, 1]),
            target_labels: set(&[0, 1]),
            input_type: InputType::Time,
            scenario: ScenarioKind::MultiAdaptation,
        };
        validate_task(&task).unwrap();
        task.source_domains = vec![1];
        assert!(validate_task(&task).is_err());
        task.source_domains = vec![1, 2];
        task.scenario = ScenarioKind::ClosedSet;
        assert!(validate_task(&task).is_err());
    }

    #[test]
    fn closed_set_counts_match_registry() {
        for (ds, n) in [
            (DatasetId::Cwru, 12),
            (DatasetId::Pu, 12),
            (DatasetId::Phm2009, 12),
            (DatasetId::Jnu, 6),
            (DatasetId::Seu, 2),
            (DatasetId::PuTypes, 2),
        ] {
            let tasks = enumerate_tasks(ds, ScenarioKind::ClosedSet, InputType::Time).unwrap();
            assert_eq!(tasks.len(), n, "{ds}");
        }
    }

    #[test]
    fn cwru_closed_set_contains_0_to_1() {
        let tasks = enumerate_tasks(DatasetId::Cwru, ScenarioKind::ClosedSet, InputType::Time).unwrap();
        assert!(tasks.iter().any(|t| t.name() == "0-1"));
        assert_eq!(tasks[0].name(), "0-1");
    }

    #[test]
    fn cwru_multi_tasks_match_registry_table() {
        for scenario in [ScenarioKind::MultiAdaptation, ScenarioKind::DomainGeneralization] {
            let tasks = enumerate_tasks(DatasetId::Cwru, scenario, InputType::Time).unwrap();
            let names: Vec<String> = tasks.iter().map(|t| t.name()).collect();
            assert_eq!(names, vec!["012-3", "123-0", "013-2", "230-1"]);
        }
    }

    #[test]
    fn cwru_label_inconsistent_tables_are_verbatim() {
        let partial = enumerate_tasks(DatasetId::Cwru, ScenarioKind::Partial, InputType::Time).unwrap();
        assert_eq!(partial.len(), 12);
        assert_eq!(partial[0].target_labels, set(&[0, 1, 2, 4, 5, 7, 8, 9]));
        assert_eq!(partial[11].target_labels, set(&[5, 8]));
        let open = enumerate_tasks(DatasetId::Cwru, ScenarioKind::OpenSet, InputType::Time).unwrap();
        assert_eq!(open[4].source_labels, set(&[1, 3, 4, 5, 7, 8]));
        assert_eq!(open[4].target_labels, (0..10).collect::<BTreeSet<u32>>());
        let uni = enumerate_tasks(DatasetId::Cwru, ScenarioKind::Universal, InputType::Time).unwrap();
        assert_eq!(uni[8].source_labels, set(&[0, 1, 2, 7, 8]));
        assert_eq!(uni[8].target_labels, set(&[1, 2, 6, 9]));
        // tasks 2-3 and 3-0 share row 4 of the table
        assert_eq!(uni[8].name(), "2-3");
        assert_eq!(uni[9].name(), "3-0");
        assert_eq!(uni[9].source_labels, uni[8].source_labels);
    }

    #[test]
    fn unsupported_scenarios_error() {
        assert!(enumerate_tasks(DatasetId::Pu, ScenarioKind::Partial, InputType::Time).is_err());
        assert!(enumerate_tasks(DatasetId::Seu, ScenarioKind::MultiAdaptation, InputType::Time).is_err());
    }

    #[test]
    fn every_enumerated_task_validates() {
        for ds in DatasetId::ALL {
            for scenario in ScenarioKind::ALL {
                let Ok(tasks) = enumerate_tasks(ds, scenario, InputType::Frequency) else {
                    continue;
                };
                for task in tasks {
                    validate_task(&task).unwrap_or_else(|e| panic!("{ds}/{scenario}/{}: {e}", task.name()));
                }
            }
        }
    }

    #[test]
    fn enumeration_is_order_stable() {
        for ds in DatasetId::ALL {
            for scenario in ScenarioKind::ALL {
                let a = enumerate_tasks(ds, scenario, InputType::Time);
                let b = enumerate_tasks(ds, scenario, InputType::Time);
                match (a, b) {
                    (Ok(a), Ok(b)) => assert_eq!(a, b),
                    (Err(_), Err(_)) => {}
                    _ => panic!("enumeration not stable for {ds}/{scenario}"),
                }
            }
        }
    }

    #[test]
    fn find_task_round_trip() {
        let t = find_task(DatasetId::Cwru, ScenarioKind::MultiAdaptation, InputType::Time, "123-0").unwrap();
        assert_eq!(t.source_domains, vec![1, 2, 3]);
        assert_eq!(t.target_domain, 0);
        assert!(find_task(DatasetId::Cwru, ScenarioKind::ClosedSet, InputType::Time, "9-9").is_err());
    }
}
