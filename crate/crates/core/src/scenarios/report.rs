use std::fmt;

use super::Mode;
use crate::error::{Error, Result};

/// Run metrics. Fields that do not apply to a mode are `None` and written
/// as `na`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub mode: Mode,
    pub seed: u64,
    pub frames: usize,
    pub intrusions_baseline: Option<usize>,
    pub intrusions_ours: usize,
    pub intrusions_avoided: Option<i64>,
    pub additional_time_pct: Option<f64>,
    pub mean_step_time_us: f64,
    pub collisions: usize,
    pub uncovered_entries: usize,
    pub unsafe_controls: usize,
    pub infeasible_events: usize,
    pub arrival_time_ours: Option<f64>,
    pub arrival_time_baseline: Option<f64>,
    pub loops_completed: Option<usize>,
}

fn opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "na".to_string(), T::to_string)
}

fn opt_f(v: Option<f64>) -> String {
    v.map_or_else(|| "na".to_string(), |x| format!("{x:.3}"))
}

impl fmt::Display for RunReport {
    /// One `key: value` line per field.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode: {}", self.mode.as_str())?;
        writeln!(f, "seed: {}", self.seed)?;
        writeln!(f, "frames: {}", self.frames)?;
        writeln!(f, "intrusions_baseline: {}", opt(&self.intrusions_baseline))?;
        writeln!(f, "intrusions_ours: {}", self.intrusions_ours)?;
        writeln!(f, "intrusions_avoided: {}", opt(&self.intrusions_avoided))?;
        writeln!(f, "additional_time_pct: {}", opt_f(self.additional_time_pct))?;
        writeln!(f, "mean_step_time_us: {:.3}", self.mean_step_time_us)?;
        writeln!(f, "collisions: {}", self.collisions)?;
        writeln!(f, "uncovered_entries: {}", self.uncovered_entries)?;
        writeln!(f, "unsafe_controls: {}", self.unsafe_controls)?;
        writeln!(f, "infeasible_events: {}", self.infeasible_events)?;
        writeln!(f, "arrival_time_ours: {}", opt_f(self.arrival_time_ours))?;
        writeln!(f, "arrival_time_baseline: {}", opt_f(self.arrival_time_baseline))?;
        writeln!(f, "loops_completed: {}", opt(&self.loops_completed))
    }
}

/// Reads the text written by `RunReport`'s `Display`.
pub fn parse_report(text: &str) -> Result<RunReport> {
    let mut map = std::collections::BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once(':').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: "expected `key: value`".into(),
        })?;
        map.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
    }
    let get = |key: &str| -> Result<(usize, String)> {
        map.get(key).cloned().ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("missing key `{key}`"),
        })
    };
    fn num<T: std::str::FromStr>(key: &str, (line, v): (usize, String)) -> Result<T> {
        v.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad value `{v}` for `{key}`"),
        })
    }
    fn opt_num<T: std::str::FromStr>(key: &str, (line, v): (usize, String)) -> Result<Option<T>> {
        if v == "na" {
            Ok(None)
        } else {
            num(key, (line, v)).map(Some)
        }
    }
    let (mline, mode) = get("mode")?;
    let mode = match mode.as_str() {
        "surveillance" => Mode::Surveillance,
        "intervention" => Mode::Intervention,
        "baseline" => Mode::Baseline,
        other => {
            return Err(Error::Parse {
                line: mline,
                message: format!("unknown mode `{other}`"),
            })
        }
    };
    Ok(RunReport {
        mode,
        seed: num("seed", get("seed")?)?,
        frames: num("frames", get("frames")?)?,
        intrusions_baseline: opt_num("intrusions_baseline", get("intrusions_baseline")?)?,
        intrusions_ours: num("intrusions_ours", get("intrusions_ours")?)?,
        intrusions_avoided: opt_num("intrusions_avoided", get("intrusions_avoided")?)?,
        additional_time_pct: opt_num("additional_time_pct", get("additional_time_pct")?)?,
        mean_step_time_us: num("mean_step_time_us", get("mean_step_time_us")?)?,
        collisions: num("collisions", get("collisions")?)?,
        uncovered_entries: num("uncovered_entries", get("uncovered_entries")?)?,
        unsafe_controls: num("unsafe_controls", get("unsafe_controls")?)?,
        infeasible_events: num("infeasible_events", get("infeasible_events")?)?,
        arrival_time_ours: opt_num("arrival_time_ours", get("arrival_time_ours")?)?,
        arrival_time_baseline: opt_num("arrival_time_baseline", get("arrival_time_baseline")?)?,
        loops_completed: opt_num("loops_completed", get("loops_completed")?)?,
    })
}
