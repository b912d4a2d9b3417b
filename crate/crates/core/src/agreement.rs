//! Agreement between system verdicts and a human annotator.
//!
//! Both sides are reduced to a common four-label set before computing
//! Cohen's kappa. Score correlation pairs per-gap system points with per-gap
//! human ordinals; a per-respondent aggregate is reported alongside.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{human_to_ordinal, HumanLabel};
use crate::metrics::{cohen_kappa, spearman_rho, MetricsError};
use crate::model::{Category, EvaluationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardLabel {
    Exact,
    Acceptable,
    ClassCorrect,
    Incorrect,
}

impl StandardLabel {
    pub const ALL: [StandardLabel; 4] = [
        StandardLabel::Exact,
        StandardLabel::Acceptable,
        StandardLabel::ClassCorrect,
        StandardLabel::Incorrect,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StandardLabel::Exact => "exact",
            StandardLabel::Acceptable => "acceptable",
            StandardLabel::ClassCorrect => "class_correct",
            StandardLabel::Incorrect => "incorrect",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for StandardLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where misspelled answers land in the common label set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MisspelledAs {
    #[default]
    Exact,
    Acceptable,
}

impl MisspelledAs {
    pub fn label(self) -> StandardLabel {
        match self {
            MisspelledAs::Exact => StandardLabel::Exact,
            MisspelledAs::Acceptable => StandardLabel::Acceptable,
        }
    }
}

pub fn standardize_system(category: Category) -> StandardLabel {
    standardize_system_with(category, MisspelledAs::Exact)
}

pub fn standardize_system_with(category: Category, misspelled: MisspelledAs) -> StandardLabel {
    match category {
        Category::Exact => StandardLabel::Exact,
        Category::Misspelled => misspelled.label(),
        Category::Acceptable => StandardLabel::Acceptable,
        Category::ClassCorrect => StandardLabel::ClassCorrect,
        Category::Blank | Category::Incorrect => StandardLabel::Incorrect,
    }
}

pub fn standardize_human(label: HumanLabel) -> StandardLabel {
    match label {
        HumanLabel::Exact => StandardLabel::Exact,
        HumanLabel::Acceptable => StandardLabel::Acceptable,
        HumanLabel::ClassCorrect => StandardLabel::ClassCorrect,
        HumanLabel::Incorrect | HumanLabel::Blank => StandardLabel::Incorrect,
    }
}

/// One human judgement of one gap response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub respondent_id: String,
    pub gap_id: String,
    pub label: HumanLabel,
}

impl Annotation {
    pub fn new(respondent_id: impl Into<String>, gap_id: impl Into<String>, label: HumanLabel) -> Self {
        Self {
            respondent_id: respondent_id.into(),
            gap_id: gap_id.into(),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Per-gap system points against per-gap human ordinals.
    pub spearman: f64,
    /// Per-respondent point totals against ordinal totals, when defined.
    pub spearman_per_respondent: Option<f64>,
    pub kappa: f64,
    /// Rows: system label, columns: human label, both in `StandardLabel::ALL` order.
    pub confusion: [[usize; 4]; 4],
    pub n: usize,
    pub misspelled_as: MisspelledAs,
}

impl AgreementReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("spearman (per gap):        {:.6}\n", self.spearman));
        match self.spearman_per_respondent {
            Some(rho) => out.push_str(&format!("spearman (per respondent): {rho:.6}\n")),
            None => out.push_str("spearman (per respondent): n/a\n"),
        }
        out.push_str(&format!("cohen kappa:               {:.6}\n", self.kappa));
        out.push_str(&format!("n:                         {}\n", self.n));
        out.push_str(&format!(
            "misspelled counted as:     {}\n\n",
            self.misspelled_as.label()
        ));
        out.push_str(&format!("{:<16}", "system \\ human"));
        for l in StandardLabel::ALL {
            out.push_str(&format!("{:>14}", l.as_str()));
        }
        out.push('\n');
        for (row, l) in self.confusion.iter().zip(StandardLabel::ALL) {
            out.push_str(&format!("{:<16}", l.as_str()));
            for c in row {
                out.push_str(&format!("{c:>14}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgreementError {
    #[error("annotations without a matching verdict: {}", format_keys(.0))]
    Orphans(Vec<(String, String)>),
    #[error("duplicate annotation for {0}/{1}")]
    Duplicate(String, String),
    #[error("no annotations to compare")]
    Empty,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn format_keys(keys: &[(String, String)]) -> String {
    keys.iter()
        .map(|(r, g)| format!("{r}/{g}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Joins annotations to verdicts and computes correlation and agreement.
pub fn validate(
    reports: &[EvaluationReport],
    human: &[Annotation],
    misspelled: MisspelledAs,
) -> Result<AgreementReport, AgreementError> {
    let mut verdicts = HashMap::new();
    for report in reports {
        for v in &report.verdicts {
            verdicts.insert((report.respondent_id.as_str(), v.gap_id.as_str()), v);
        }
    }

    let mut seen = HashMap::new();
    let mut orphans = Vec::new();
    let mut joined = Vec::with_capacity(human.len());
    for a in human {
        let key = (a.respondent_id.as_str(), a.gap_id.as_str());
        if seen.insert(key, ()).is_some() {
            return Err(AgreementError::Duplicate(a.respondent_id.clone(), a.gap_id.clone()));
        }
        match verdicts.get(&key) {
            Some(v) => joined.push((a, *v)),
            None => orphans.push((a.respondent_id.clone(), a.gap_id.clone())),
        }
    }
    if !orphans.is_empty() {
        return Err(AgreementError::Orphans(orphans));
    }
    if joined.is_empty() {
        return Err(AgreementError::Empty);
    }

    let system_points: Vec<f64> = joined.iter().map(|(_, v)| v.points).collect();
    let human_ordinals: Vec<f64> = joined
        .iter()
        .map(|(a, _)| f64::from(human_to_ordinal(a.label).value()))
        .collect();
    let spearman = spearman_rho(&system_points, &human_ordinals)?;

    let mut totals: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for ((a, _), (p, o)) in joined.iter().zip(system_points.iter().zip(&human_ordinals)) {
        let t = totals.entry(a.respondent_id.as_str()).or_default();
        t.0 += p;
        t.1 += o;
    }
    let (sys_totals, hum_totals): (Vec<f64>, Vec<f64>) = totals.values().copied().unzip();
    let spearman_per_respondent = spearman_rho(&sys_totals, &hum_totals).ok();

    let system_labels: Vec<StandardLabel> = joined
        .iter()
        .map(|(_, v)| standardize_system_with(v.category, misspelled))
        .collect();
    let human_labels: Vec<StandardLabel> = joined.iter().map(|(a, _)| standardize_human(a.label)).collect();
    let kappa = cohen_kappa(&system_labels, &human_labels)?;

    let mut confusion = [[0usize; 4]; 4];
    for (s, h) in system_labels.iter().zip(&human_labels) {
        confusion[s.index()][h.index()] += 1;
    }

    Ok(AgreementReport {
        spearman,
        spearman_per_respondent,
        kappa,
        confusion,
        n: joined.len(),
        misspelled_as: misspelled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Diagnostics, GapVerdict};

    fn report(id: &str, cats: &[Category]) -> EvaluationReport {
        let verdicts = cats
            .iter()
            .enumerate()
            .map(|(i, c)| GapVerdict::new(format!("g{}", i + 1), *c, Diagnostics::default()))
            .collect();
        EvaluationReport::new(id, None, verdicts).unwrap()
    }

    fn annotations(id: &str, labels: &[HumanLabel]) -> Vec<Annotation> {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| Annotation::new(id, format!("g{}", i + 1), *l))
            .collect()
    }

    #[test]
    fn standardization_tables() {
        assert_eq!(standardize_system(Category::Misspelled), StandardLabel::Exact);
        assert_eq!(standardize_system(Category::Blank), StandardLabel::Incorrect);
        assert_eq!(standardize_system(Category::Acceptable), StandardLabel::Acceptable);
        assert_eq!(
            standardize_system_with(Category::Misspelled, MisspelledAs::Acceptable),
            StandardLabel::Acceptable
        );
        assert_eq!(standardize_human(HumanLabel::Blank), StandardLabel::Incorrect);
        assert_eq!(standardize_human(HumanLabel::Exact), StandardLabel::Exact);
        assert_eq!(standardize_human(HumanLabel::ClassCorrect), StandardLabel::ClassCorrect);

        let image: std::collections::BTreeSet<_> = Category::ALL.into_iter().map(standardize_system).collect();
        assert_eq!(image.len(), 4);
        // higher points never map to a lower label
        let rank = |l: StandardLabel| 3 - l.index();
        for a in Category::ALL {
            for b in Category::ALL {
                if a.points() > b.points() {
                    assert!(rank(standardize_system(a)) >= rank(standardize_system(b)), "{a} {b}");
                }
            }
        }
    }

    #[test]
    fn perfect_agreement() {
        use Category::*;
        use HumanLabel as H;
        let r = report("r1", &[Exact, ClassCorrect, Incorrect, Blank, Exact]);
        let h = annotations("r1", &[H::Exact, H::ClassCorrect, H::Incorrect, H::Blank, H::Exact]);
        let a = validate(&[r], &h, MisspelledAs::Exact).unwrap();
        assert_eq!(a.kappa, 1.0);
        assert_eq!(a.spearman, 1.0);
        assert_eq!(a.n, 5);
        assert_eq!(a.spearman_per_respondent, None);
        assert_eq!(a.confusion[3][3], 2);
    }

    #[test]
    fn exact_and_acceptable_tie_on_points() {
        // both score 1.0 while humans rank them 3 and 2, so identical labels
        // still give kappa 1 but rho below 1
        use Category::*;
        use HumanLabel as H;
        let r = report("r1", &[Exact, Acceptable, ClassCorrect, Incorrect]);
        let h = annotations("r1", &[H::Exact, H::Acceptable, H::ClassCorrect, H::Incorrect]);
        let a = validate(&[r], &h, MisspelledAs::Exact).unwrap();
        assert_eq!(a.kappa, 1.0);
        let expected = spearman_rho(&[1.0, 1.0, 0.5, 0.0], &[3.0, 2.0, 1.0, 0.0]).unwrap();
        assert_eq!(a.spearman, expected);
        assert!(a.spearman < 1.0);
        let total: usize = a.confusion.iter().flatten().sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn six_pair_fixture_matches_hand_kappa() {
        use Category::*;
        use HumanLabel as H;
        let r = report("r1", &[Exact, Acceptable, ClassCorrect, ClassCorrect, Incorrect, Misspelled]);
        let h = annotations("r1", &[H::Exact, H::Acceptable, H::ClassCorrect, H::Incorrect, H::Incorrect, H::Exact]);
        let a = validate(&[r], &h, MisspelledAs::Exact).unwrap();
        // system: E A C C I E ; human: E A C I I E
        // p_o = 5/6; marginals sys (E2 A1 C2 I1), human (E2 A1 C1 I2)
        // p_e = (4 + 1 + 2 + 2) / 36 = 9/36
        let p_o = 5.0 / 6.0;
        let p_e = 9.0 / 36.0;
        assert!((a.kappa - (p_o - p_e) / (1.0 - p_e)).abs() < 1e-12);
        assert_eq!(a.confusion[2][3], 1);
    }

    #[test]
    fn orphans_are_listed() {
        let r = report("r1", &[Category::Exact]);
        let h = vec![
            Annotation::new("r1", "g1", HumanLabel::Exact),
            Annotation::new("r2", "g1", HumanLabel::Exact),
            Annotation::new("r1", "g7", HumanLabel::Blank),
        ];
        let err = validate(&[r], &h, MisspelledAs::Exact).unwrap_err();
        assert_eq!(
            err,
            AgreementError::Orphans(vec![("r2".into(), "g1".into()), ("r1".into(), "g7".into())])
        );
        assert!(err.to_string().contains("r2/g1, r1/g7"));
    }

    #[test]
    fn per_respondent_correlation() {
        use Category::*;
        use HumanLabel as H;
        let reports = vec![report("a", &[Exact, Exact]), report("b", &[Blank, Exact]), report("c", &[Blank, Blank])];
        let mut h = annotations("a", &[H::Exact, H::Acceptable]);
        h.extend(annotations("b", &[H::Incorrect, H::Exact]));
        h.extend(annotations("c", &[H::Blank, H::ClassCorrect]));
        let a = validate(&reports, &h, MisspelledAs::Exact).unwrap();
        assert_eq!(a.spearman_per_respondent, Some(1.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn kappa_composes(pairs in proptest::collection::vec((0usize..6, 0usize..5), 2..30)) {
                let cats: Vec<Category> = pairs.iter().map(|p| Category::ALL[p.0]).collect();
                let labels: Vec<HumanLabel> = pairs.iter().map(|p| HumanLabel::ALL[p.1]).collect();
                let r = report("r", &cats);
                let h = annotations("r", &labels);
                let direct = cohen_kappa(
                    &cats.iter().map(|c| standardize_system(*c)).collect::<Vec<_>>(),
                    &labels.iter().map(|l| standardize_human(*l)).collect::<Vec<_>>(),
                ).unwrap();
                match validate(&[r], &h, MisspelledAs::Exact) {
                    Ok(a) => {
                        prop_assert_eq!(a.kappa, direct);
                        let total: usize = a.confusion.iter().flatten().sum();
                        prop_assert_eq!(total, a.n);
                    }
                    Err(AgreementError::Metrics(MetricsError::Constant(_))) => {}
                    Err(e) => prop_assert!(false, "{e}"),
                }
            }
        }
    }
}
