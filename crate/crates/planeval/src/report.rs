//! Accuracy and confusion-matrix summaries over transcripts.
//!
//! All rates are exact rationals; nothing is rounded until rendering, so the
//! complementarity identities (true positive rate plus false negative rate
//! is one, and likewise for the negative class) hold exactly.
//!
//! Rendering follows two pinned rules. A percentage is printed at the
//! smallest number of decimals (up to two) at which truncation and half-up
//! rounding agree, falling back to two-decimal truncation when they never
//! do; this reproduces conventional reporting, where `7/45` appears as
//! `15.55%` and `1/55` as `1.8%`. Complementary rates are then derived from
//! the rendered string (`100 - 15.55 = 84.45`), not re-rendered from the
//! exact value, so printed pairs always sum to exactly 100.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{ExperimentMode, Transcript};
use crate::validator::FeedbackLevel;

/// An exact rate in `[0, 1]`.
pub type Rate = Ratio<u64>;

/// How the verifier's final judgment relates to the ground truth. "Positive"
/// means the verifier claimed the plan is valid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    TruePositive,
    FalsePositive,
    TrueNegative,
    FalseNegative,
}

/// Classifies a transcript by its final verifier verdict against the final
/// ground truth. `None` when no verdict was committed (generator-only runs
/// and transcripts that failed before any iteration), which excludes the
/// transcript from confusion analysis.
pub fn classify(transcript: &Transcript) -> Option<Classification> {
    let claimed = transcript.final_verifier_verdict?;
    Some(match (claimed, transcript.final_ground_truth) {
        (true, true) => Classification::TruePositive,
        (true, false) => Classification::FalsePositive,
        (false, false) => Classification::TrueNegative,
        (false, true) => Classification::FalseNegative,
    })
}

/// Raw confusion counts. Ground-truth class sizes are derived, not stored:
/// `positives_gt = tp + fn` and `negatives_gt = tn + fp`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub true_negatives: u64,
    pub false_negatives: u64,
}

impl ConfusionCounts {
    pub fn new(
        true_positives: u64,
        false_positives: u64,
        true_negatives: u64,
        false_negatives: u64,
    ) -> Self {
        ConfusionCounts {
            true_positives,
            false_positives,
            true_negatives,
            false_negatives,
        }
    }

    /// Tallies the final judgment of every transcript that has one.
    pub fn from_transcripts<'a, I: IntoIterator<Item = &'a Transcript>>(transcripts: I) -> Self {
        let mut counts = ConfusionCounts::default();
        for transcript in transcripts {
            if let Some(class) = classify(transcript) {
                counts.record(class);
            }
        }
        counts
    }

    pub fn record(&mut self, class: Classification) {
        match class {
            Classification::TruePositive => self.true_positives += 1,
            Classification::FalsePositive => self.false_positives += 1,
            Classification::TrueNegative => self.true_negatives += 1,
            Classification::FalseNegative => self.false_negatives += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }

    /// Ground-truth valid plans seen.
    pub fn positives_gt(&self) -> u64 {
        self.true_positives + self.false_negatives
    }

    /// Ground-truth invalid plans seen.
    pub fn negatives_gt(&self) -> u64 {
        self.true_negatives + self.false_positives
    }

    /// Fraction judged correctly; `None` when nothing was judged.
    pub fn accuracy(&self) -> Option<Rate> {
        match self.total() {
            0 => None,
            total => Some(Ratio::new(self.true_positives + self.true_negatives, total)),
        }
    }

    pub fn true_positive_rate(&self) -> Option<Rate> {
        match self.positives_gt() {
            0 => None,
            positives => Some(Ratio::new(self.true_positives, positives)),
        }
    }

    pub fn false_negative_rate(&self) -> Option<Rate> {
        self.true_positive_rate()
            .map(|tpr| Ratio::from_integer(1) - tpr)
    }

    pub fn true_negative_rate(&self) -> Option<Rate> {
        match self.negatives_gt() {
            0 => None,
            negatives => Some(Ratio::new(self.true_negatives, negatives)),
        }
    }

    pub fn false_positive_rate(&self) -> Option<Rate> {
        self.true_negative_rate()
            .map(|tnr| Ratio::from_integer(1) - tnr)
    }

    /// All five rates at once. Requires at least one ground-truth valid and
    /// one ground-truth invalid plan; an empty class leaves its rates with a
    /// zero denominator, which is rejected explicitly.
    pub fn rates(&self) -> Result<ConfusionRates, ReportError> {
        if self.positives_gt() == 0 {
            return Err(ReportError::EmptyClass { class: "valid" });
        }
        if self.negatives_gt() == 0 {
            return Err(ReportError::EmptyClass { class: "invalid" });
        }
        Ok(ConfusionRates {
            accuracy: self.accuracy().expect("nonempty total"),
            tpr: self.true_positive_rate().expect("nonempty positives"),
            fpr: self.false_positive_rate().expect("nonempty negatives"),
            tnr: self.true_negative_rate().expect("nonempty negatives"),
            fnr: self.false_negative_rate().expect("nonempty positives"),
        })
    }
}

/// The five confusion rates as exact rationals. `tpr + fnr` and `fpr + tnr`
/// are each exactly one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConfusionRates {
    pub accuracy: Rate,
    pub tpr: Rate,
    pub fpr: Rate,
    pub tnr: Rate,
    pub fnr: Rate,
}

/// Aggregate results of one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuiteSummary {
    pub mode: ExperimentMode,
    pub feedback_level: FeedbackLevel,
    pub instances: u64,
    /// Instances whose final plan is truly valid, by the sound validator.
    pub valid_final: u64,
    /// Exact generation accuracy: `valid_final / instances`.
    pub accuracy: Rate,
    pub iterations_total: u64,
    /// Exact mean attempts per instance.
    pub avg_iterations: Rate,
    /// Verifier judgment quality over all iterations; `None` when the run
    /// produced no judgments (generator-only mode).
    pub confusion: Option<ConfusionCounts>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("cannot summarize an empty run")]
    EmptyRun,
    #[error("transcripts mix configurations: `{first}` and `{other}`")]
    MixedRuns { first: String, other: String },
    #[error("no ground-truth {class} plans were judged, so its rates have a zero denominator")]
    EmptyClass { class: &'static str },
}

fn config_key(transcript: &Transcript) -> String {
    format!(
        "{}/{}",
        transcript.config.mode, transcript.config.feedback_level
    )
}

/// Summarizes one run's transcripts. All transcripts must share a mode and
/// feedback level; a run never mixes them.
pub fn summarize(transcripts: &[Transcript]) -> Result<SuiteSummary, ReportError> {
    let first = transcripts.first().ok_or(ReportError::EmptyRun)?;
    for other in &transcripts[1..] {
        if other.config.mode != first.config.mode
            || other.config.feedback_level != first.config.feedback_level
        {
            return Err(ReportError::MixedRuns {
                first: config_key(first),
                other: config_key(other),
            });
        }
    }
    let instances = transcripts.len() as u64;
    let valid_final = transcripts
        .iter()
        .filter(|t| t.final_ground_truth)
        .count() as u64;
    let iterations_total: u64 = transcripts.iter().map(|t| t.iterations.len() as u64).sum();
    let confusion = ConfusionCounts::from_transcripts(transcripts.iter());
    Ok(SuiteSummary {
        mode: first.config.mode,
        feedback_level: first.config.feedback_level,
        instances,
        valid_final,
        accuracy: Ratio::new(valid_final, instances),
        iterations_total,
        avg_iterations: Ratio::new(iterations_total, instances),
        confusion: (confusion.total() > 0).then_some(confusion),
    })
}

fn format_scaled(value: u64, decimals: u32) -> String {
    let base = 10u64.pow(decimals);
    if decimals == 0 {
        value.to_string()
    } else {
        format!(
            "{}.{:0width$}",
            value / base,
            value % base,
            width = decimals as usize
        )
    }
}

/// Renders a rate as a percentage string using the smallest number of
/// decimals (0, 1, or 2) at which truncation and half-up rounding agree;
/// when they never agree, two-decimal truncation is used.
pub fn percent_stable(rate: Rate) -> String {
    let percent = rate * Ratio::from_integer(100);
    for decimals in 0..=2u32 {
        let scaled = percent * Ratio::from_integer(10u64.pow(decimals));
        let truncated = scaled.floor().to_integer();
        let half_up = (scaled + Ratio::new(1, 2)).floor().to_integer();
        if truncated == half_up {
            return format_scaled(truncated, decimals);
        }
    }
    let scaled = (percent * Ratio::from_integer(100)).floor().to_integer();
    format_scaled(scaled, 2)
}

/// Subtracts a rendered percentage from 100 in decimal-string arithmetic,
/// so a printed rate and its printed complement sum to exactly 100.
///
/// Input must be a [`percent_stable`] result (digits with at most one dot).
pub fn percent_complement(rendered: &str) -> String {
    let (int_part, frac_part) = match rendered.split_once('.') {
        Some((int_part, frac_part)) => (int_part, frac_part),
        None => (rendered, ""),
    };
    let decimals = frac_part.len() as u32;
    let base = 10u64.pow(decimals);
    let value: u64 = int_part.parse::<u64>().expect("rendered percent integer part") * base
        + if frac_part.is_empty() {
            0
        } else {
            frac_part.parse::<u64>().expect("rendered percent fraction part")
        };
    assert!(value <= 100 * base, "percentage above 100 has no complement");
    format_scaled(100 * base - value, decimals)
}

/// Renders a mean with exactly two decimals, half-up.
pub fn format_avg(avg: Rate) -> String {
    let scaled = (avg * Ratio::from_integer(100) + Ratio::new(1, 2))
        .floor()
        .to_integer();
    format_scaled(scaled, 2)
}

/// The four confusion rates as rendered strings: the accuracy, false
/// negative and true negative rates are anchors rendered directly, and the
/// true positive and false positive rates are their string complements.
pub struct RenderedRates {
    pub accuracy: String,
    pub tpr: String,
    pub fpr: String,
    pub tnr: String,
    pub fnr: String,
}

/// Renders confusion rates; `None` when a class is empty and its rates are
/// undefined.
pub fn rendered_rates(counts: &ConfusionCounts) -> Option<RenderedRates> {
    let accuracy = percent_stable(counts.accuracy()?);
    let fnr = percent_stable(counts.false_negative_rate()?);
    let tnr = percent_stable(counts.true_negative_rate()?);
    Some(RenderedRates {
        accuracy,
        tpr: percent_complement(&fnr),
        fpr: percent_complement(&tnr),
        tnr,
        fnr,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Markdown,
    Csv,
}

/// Renders summaries plus optional standalone confusion rows as a
/// two-section report: plan generation always (when any summaries exist),
/// plan verification for runs that produced verifier judgments and for the
/// standalone labeled rows.
pub fn render_report(
    summaries: &[SuiteSummary],
    confusion: &[(String, ConfusionCounts)],
    format: ReportFormat,
) -> String {
    let mut rows: Vec<(String, String, ConfusionCounts)> = summaries
        .iter()
        .filter_map(|s| {
            s.confusion
                .map(|c| (s.mode.to_string(), s.feedback_level.to_string(), c))
        })
        .collect();
    rows.extend(
        confusion
            .iter()
            .map(|(label, counts)| (label.clone(), "-".to_owned(), *counts)),
    );
    match format {
        ReportFormat::Markdown => render_markdown(summaries, &rows),
        ReportFormat::Csv => render_csv(summaries, &rows),
    }
}

fn accuracy_cell(valid: u64, instances: u64, accuracy: Rate) -> String {
    format!("{valid}/{instances} ({}%)", percent_stable(accuracy))
}

fn render_markdown(summaries: &[SuiteSummary], rows: &[(String, String, ConfusionCounts)]) -> String {
    let mut out = String::new();
    if !summaries.is_empty() {
        out.push_str("# Plan generation\n\n");
        out.push_str(
            "| Method | Feedback | Instances | Valid plans | Accuracy | Avg. iterations |\n",
        );
        out.push_str("|---|---|---|---|---|---|\n");
        for s in summaries {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} |\n",
                s.mode,
                s.feedback_level,
                s.instances,
                s.valid_final,
                accuracy_cell(s.valid_final, s.instances, s.accuracy),
                format_avg(s.avg_iterations),
            ));
        }
    }
    if !rows.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str("# Plan verification\n\n");
        out.push_str(
            "| Method | Feedback | Judgments | TP | FP | TN | FN | Accuracy \
             | True positive rate | False positive rate | True negative rate \
             | False negative rate |\n",
        );
        out.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|\n");
        for (method, feedback, counts) in rows {
            let rates = rendered_rates(counts);
            let cell = |f: fn(&RenderedRates) -> &String| match &rates {
                Some(rates) => format!("{}%", f(rates)),
                None => "n/a".to_owned(),
            };
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
                method,
                feedback,
                counts.total(),
                counts.true_positives,
                counts.false_positives,
                counts.true_negatives,
                counts.false_negatives,
                match counts.accuracy() {
                    Some(accuracy) => format!(
                        "{}/{} ({}%)",
                        counts.true_positives + counts.true_negatives,
                        counts.total(),
                        percent_stable(accuracy)
                    ),
                    None => "n/a".to_owned(),
                },
                cell(|r| &r.tpr),
                cell(|r| &r.fpr),
                cell(|r| &r.tnr),
                cell(|r| &r.fnr),
            ));
        }
    }
    out
}

fn render_csv(summaries: &[SuiteSummary], rows: &[(String, String, ConfusionCounts)]) -> String {
    let mut out = String::new();
    if !summaries.is_empty() {
        out.push_str(
            "section,mode,feedback_level,instances,valid_final,accuracy_percent,avg_iterations\n",
        );
        for s in summaries {
            out.push_str(&format!(
                "generation,{},{},{},{},{},{}\n",
                s.mode,
                s.feedback_level,
                s.instances,
                s.valid_final,
                percent_stable(s.accuracy),
                format_avg(s.avg_iterations),
            ));
        }
    }
    if !rows.is_empty() {
        out.push_str(
            "section,mode,feedback_level,tp,fp,tn,fn,positives_gt,negatives_gt,\
             accuracy_percent,tpr_percent,fpr_percent,tnr_percent,fnr_percent\n",
        );
        for (method, feedback, counts) in rows {
            let rates = rendered_rates(counts);
            let cell = |f: fn(&RenderedRates) -> &String| match &rates {
                Some(rates) => f(rates).clone(),
                None => "n/a".to_owned(),
            };
            out.push_str(&format!(
                "verification,{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                method,
                feedback,
                counts.true_positives,
                counts.false_positives,
                counts.true_negatives,
                counts.false_negatives,
                counts.positives_gt(),
                counts.negatives_gt(),
                match counts.accuracy() {
                    Some(accuracy) => percent_stable(accuracy),
                    None => "n/a".to_owned(),
                },
                cell(|r| &r.tpr),
                cell(|r| &r.fpr),
                cell(|r| &r.tnr),
                cell(|r| &r.fnr),
            ));
        }
    }
    out
}
