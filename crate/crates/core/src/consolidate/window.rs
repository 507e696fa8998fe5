use std::collections::BTreeSet;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

/// Half-open date window `[start, end)`; `None` bounds are unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EffectiveWindow {
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
}

impl EffectiveWindow {
    pub const ALL: Self = Self { start: None, end: None };

    /// Window from a record's start date and inclusive end date.
    pub fn of(start: Option<NaiveDate>, last_day: Option<NaiveDate>) -> Self {
        Self {
            start,
            end: last_day.and_then(|d| d.succ_opt()),
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start.is_none_or(|s| s <= date) && self.end.is_none_or(|e| date < e)
    }

    fn bounds(&self) -> (i64, i64) {
        (
            self.start.map_or(i64::MIN, |d| d.num_days_from_ce() as i64),
            self.end.map_or(i64::MAX, |d| d.num_days_from_ce() as i64),
        )
    }
}

fn date_of(point: i64) -> Option<NaiveDate> {
    if point == i64::MIN || point == i64::MAX {
        None
    } else {
        NaiveDate::from_num_days_from_ce_opt(point as i32)
    }
}

impl fmt::Display for EffectiveWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.start, self.end.and_then(|e| e.pred_opt())) {
            (None, None) => f.write_str("all dates"),
            (Some(s), None) => write!(f, "effective from {s} onward"),
            (None, Some(e)) => write!(f, "effective through {e}"),
            (Some(s), Some(e)) => write!(f, "effective {s} through {e}"),
        }
    }
}

/// Maximal disjoint sub-windows of the union of `windows`, each with the
/// indices of the windows covering it. Adjacent pieces with the same cover
/// are joined.
pub(crate) fn split(windows: &[EffectiveWindow]) -> Vec<(EffectiveWindow, Vec<usize>)> {
    let bounds: Vec<(i64, i64)> = windows.iter().map(EffectiveWindow::bounds).collect();
    let points: BTreeSet<i64> = bounds.iter().flat_map(|&(s, e)| [s, e]).collect();
    let points: Vec<i64> = points.into_iter().collect();

    let mut pieces: Vec<(i64, i64, Vec<usize>)> = Vec::new();
    for pair in points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let cover: Vec<usize> = bounds
            .iter()
            .enumerate()
            .filter(|(_, &(s, e))| s <= a && b <= e)
            .map(|(i, _)| i)
            .collect();
        if cover.is_empty() {
            continue;
        }
        match pieces.last_mut() {
            Some(last) if last.1 == a && last.2 == cover => last.1 = b,
            _ => pieces.push((a, b, cover)),
        }
    }
    pieces
        .into_iter()
        .map(|(a, b, cover)| {
            (
                EffectiveWindow {
                    start: date_of(a),
                    end: date_of(b),
                },
                cover,
            )
        })
        .collect()
}
