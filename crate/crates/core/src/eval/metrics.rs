use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::category::Category;
use crate::llm::{BackendError, LlmBackend};
use crate::raster::MaskSet;
use crate::request::{Answer, AnswerGroup, RequestType};
use crate::scene::{Detection, DetectionSet};

/// Guards the relative area tolerance against a zero ground truth.
pub const AREA_EPSILON: f64 = 1e-9;
pub const AREA_ABS_TOLERANCE_M2: f64 = 1.0;
pub const AREA_REL_TOLERANCE: f64 = 0.02;
pub const AP_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanMetrics {
    pub valid_count: usize,
    pub total: usize,
    /// `None` when there are no requests.
    pub vr: Option<f64>,
    pub ca: u64,
    pub ua: u64,
    pub ma: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// A planner's output for one request, reduced to its tool ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanSample<'a> {
    pub request_id: &'a str,
    /// `None` for an invalid plan.
    pub tools: Option<&'a [String]>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Tool-presence precision and recall plus the valid rate.
///
/// Each valid plan is compared to its ground truth as a set of tool ids.
/// An invalid plan misses every ground-truth tool and predicts none.
pub fn plan_metrics(pred: &[PlanSample<'_>], gt: &[(&str, &[String])]) -> Result<PlanMetrics, EvalError> {
    let mut truth: BTreeMap<&str, &[String]> = BTreeMap::new();
    for (id, tools) in gt {
        if truth.insert(id, tools).is_some() {
            return Err(EvalError::IdMismatch(format!("duplicate ground-truth id {id}")));
        }
    }
    let mut seen = BTreeSet::new();
    let (mut ca, mut ua, mut ma, mut valid) = (0u64, 0u64, 0u64, 0usize);
    for p in pred {
        if !seen.insert(p.request_id) {
            return Err(EvalError::IdMismatch(format!("duplicate prediction id {}", p.request_id)));
        }
        let g = truth
            .get(p.request_id)
            .ok_or_else(|| EvalError::IdMismatch(format!("no ground truth for {}", p.request_id)))?;
        let g: BTreeSet<&str> = g.iter().map(String::as_str).collect();
        match p.tools {
            Some(tools) => {
                valid += 1;
                let t: BTreeSet<&str> = tools.iter().map(String::as_str).collect();
                ca += t.intersection(&g).count() as u64;
                ua += t.difference(&g).count() as u64;
                ma += g.difference(&t).count() as u64;
            }
            None => ma += g.len() as u64,
        }
    }
    if let Some(missing) = truth.keys().find(|id| !seen.contains(*id)) {
        return Err(EvalError::IdMismatch(format!("no prediction for {missing}")));
    }
    Ok(PlanMetrics {
        valid_count: valid,
        total: pred.len(),
        vr: ratio(valid as u64, pred.len() as u64),
        ca,
        ua,
        ma,
        precision: ratio(ca, ca + ua),
        recall: ratio(ca, ca + ma),
    })
}

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?(?:[eE][-+]?\d+)?|[-+]?\.\d+(?:[eE][-+]?\d+)?")
            .expect("valid regex")
    })
}

/// First real number in `text`; thousands separators are accepted.
pub fn first_number(text: &str) -> Option<f64> {
    let m = number_regex().find(text)?;
    m.as_str().replace(',', "").parse().ok()
}

/// First standalone `yes` or `no`, case-insensitive.
pub fn first_yes_no(text: &str) -> Option<bool> {
    text.split(|c: char| !c.is_alphanumeric()).find_map(|w| match w.to_ascii_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    })
}

pub fn area_matches(pred: f64, gt: f64) -> bool {
    let diff = (pred - gt).abs();
    diff < AREA_ABS_TOLERANCE_M2 || diff / gt.abs().max(AREA_EPSILON) < AREA_REL_TOLERANCE
}

/// Strict answer check with the area tolerance. Unparseable answers are
/// incorrect. Perception requests have no answer to match and count as
/// correct whenever a non-empty reply was produced.
pub fn match_answer(pred: &str, gt: &Answer, rtype: RequestType) -> bool {
    match (rtype.group(), gt) {
        (AnswerGroup::Perception, _) => !pred.trim().is_empty(),
        (AnswerGroup::Area, Answer::Area(g)) => first_number(pred).is_some_and(|p| p.is_finite() && area_matches(p, *g)),
        (AnswerGroup::Counting, Answer::Count(g)) => {
            first_number(pred).is_some_and(|p| p.fract() == 0.0 && p >= 0.0 && p == *g as f64)
        }
        (AnswerGroup::Existence | AnswerGroup::Path, Answer::Bool(g)) => first_yes_no(pred) == Some(*g),
        _ => false,
    }
}

pub fn build_judge_prompt(question: &str, ground_truth: &str, prediction: &str) -> String {
    format!(
        "You are grading an answer about a disaster-scene image.\n\
         Question: {question}\n\
         Ground-truth answer: {ground_truth}\n\
         Predicted answer: {prediction}\n\
         Is the predicted answer correct given the ground truth? Reply with a single word: yes or no."
    )
}

/// Asks `judge` whether `pred` is a correct answer; a reply without a
/// yes/no verdict counts as no.
pub fn gpt_score(pred: &str, gt: &Answer, question: &str, judge: &dyn LlmBackend) -> Result<bool, BackendError> {
    let reply = judge.complete(&build_judge_prompt(question, &gt.render(), pred), 0.0)?;
    Ok(first_yes_no(&reply).unwrap_or(false))
}

/// Mean IoU over categories present in either mask set.
/// Two sets with no foreground at all score 1.
pub fn mask_miou(pred: &MaskSet, gt: &MaskSet) -> Result<f64, EvalError> {
    if pred.dims() != gt.dims() {
        return Err(EvalError::DimensionMismatch { pred: pred.dims(), gt: gt.dims() });
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for c in Category::foreground() {
        let (p, g) = (pred.get(c).filter(|m| !m.is_empty()), gt.get(c).filter(|m| !m.is_empty()));
        let iou = match (p, g) {
            (None, None) => continue,
            (Some(p), Some(g)) => p.intersection_count(g) as f64 / p.union_count(g) as f64,
            _ => 0.0,
        };
        sum += iou;
        n += 1;
    }
    Ok(if n == 0 { 1.0 } else { sum / n as f64 })
}

fn ap_for(preds: &mut [&Detection], gts: &[&Detection]) -> f64 {
    // Score descending; equal scores fall back to box order so the result
    // does not depend on input order.
    preds.sort_by(|a, b| {
        b.score.total_cmp(&a.score).then_with(|| {
            a.bbox.0.iter().zip(&b.bbox.0).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut matched = vec![false; gts.len()];
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(preds.len());
    for (k, p) in preds.iter().enumerate() {
        let best = gts
            .iter()
            .enumerate()
            .filter(|(i, _)| !matched[*i])
            .map(|(i, g)| (i, p.bbox.iou(&g.bbox)))
            .filter(|(_, iou)| *iou >= AP_IOU_THRESHOLD)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, _)) = best {
            matched[i] = true;
            tp += 1;
        }
        curve.push((tp as f64 / gts.len() as f64, tp as f64 / (k + 1) as f64));
    }
    // All-point interpolation: integrate the precision envelope over the
    // recall steps, which happen exactly at true positives.
    let mut envelope: Vec<f64> = curve.iter().map(|c| c.1).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (&(recall, _), &p) in curve.iter().zip(&envelope) {
        if recall > prev_recall {
            ap += (recall - prev_recall) * p;
            prev_recall = recall;
        }
    }
    ap
}

/// Mean all-point AP at IoU 0.5 over categories with at least one
/// ground-truth box; `None` when the ground truth has no boxes.
pub fn detection_ap50(pred: &DetectionSet, gt: &DetectionSet) -> Option<f64> {
    let mut by_cat: BTreeMap<Category, (Vec<&Detection>, Vec<&Detection>)> = BTreeMap::new();
    for g in &gt.items {
        by_cat.entry(g.category).or_default().1.push(g);
    }
    for p in &pred.items {
        if let Some(entry) = by_cat.get_mut(&p.category) {
            entry.0.push(p);
        }
    }
    if by_cat.is_empty() {
        return None;
    }
    let n = by_cat.len();
    Some(by_cat.into_values().map(|(mut p, g)| ap_for(&mut p, &g)).sum::<f64>() / n as f64)
}
