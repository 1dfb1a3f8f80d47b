//! Plain-text formats: trajectory TSV, study CSV files and the 4×4 mapping
//! matrix.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::agent::{AgentId, AgentKind, GpField};
use crate::edm::{pair_label, EntitativityVector, LabeledPoint, Level, StudyResponse};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::sim::{Recording, Sample, Trajectory};

pub const TRAJECTORY_HEADER: &str = "frame\tagent_id\tkind\tx\ty";
pub const RESPONSES_HEADER: &str =
    "participant_id,pair_id,varied_param,level,friendliness,creepiness,comfort,unnerving";
pub const POINTS_HEADER: &str = "pair_id,varied_param,level,friendliness,creepiness,comfort,unnerving";

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(s: &str, name: &str, line: usize) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("bad {name} `{s}`")))
}

/// One row per agent per frame, ordered by frame then crowd order.
pub fn write_recording(rec: &Recording, mut out: impl Write) -> Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for (f, ps) in rec.frames.iter().enumerate() {
        for ((id, kind, _), p) in rec.agents.iter().zip(ps) {
            writeln!(out, "{f}\t{id}\t{}\t{:.9}\t{:.9}", kind.as_str(), p.x, p.y)?;
        }
    }
    Ok(())
}

pub fn write_trajectories(trajs: &[Trajectory], mut out: impl Write) -> Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    let mut rows: Vec<(u32, AgentId, AgentKind, Vec2)> = trajs
        .iter()
        .flat_map(|t| t.samples.iter().map(move |s| (s.frame, t.agent_id, t.kind, s.position)))
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    for (f, id, kind, p) in rows {
        writeln!(out, "{f}\t{id}\t{}\t{:.9}\t{:.9}", kind.as_str(), p.x, p.y)?;
    }
    Ok(())
}

/// Trajectories ordered by agent id.
pub fn read_trajectories(input: impl BufRead) -> Result<Vec<Trajectory>> {
    let mut lines = input.lines().enumerate();
    let header = lines.next().map(|(_, l)| l).transpose()?;
    if header.as_deref().map(str::trim_end) != Some(TRAJECTORY_HEADER) {
        return Err(parse_err(1, format!("expected header `{TRAJECTORY_HEADER}`")));
    }
    let mut by_agent: BTreeMap<AgentId, (AgentKind, Vec<Sample>)> = BTreeMap::new();
    for (i, line) in lines {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(parse_err(n, format!("expected 5 columns, found {}", cols.len())));
        }
        let frame: u32 = field(cols[0], "frame", n)?;
        let id: AgentId = field(cols[1], "agent_id", n)?;
        let kind: AgentKind = cols[2].parse().map_err(|_| parse_err(n, format!("bad kind `{}`", cols[2])))?;
        let x: f64 = field(cols[3], "x", n)?;
        let y: f64 = field(cols[4], "y", n)?;
        if !x.is_finite() || !y.is_finite() {
            return Err(parse_err(n, "non-finite coordinate"));
        }
        let entry = by_agent.entry(id).or_insert((kind, Vec::new()));
        if entry.0 != kind {
            return Err(parse_err(n, format!("agent {id} changes kind")));
        }
        entry.1.push(Sample {
            frame,
            position: Vec2::new(x, y),
        });
    }
    by_agent
        .into_iter()
        .map(|(id, (kind, mut samples))| {
            samples.sort_by_key(|s| s.frame);
            Trajectory::new(id, kind, samples)
        })
        .collect()
}

/// Contents of a study data file.
#[derive(Clone, Debug, PartialEq)]
pub enum StudyData {
    /// Individual integer ratings.
    Responses(Vec<StudyResponse>),
    /// Already aggregated per-pair means.
    Points(Vec<LabeledPoint>),
}

fn check_label(pair_id: u8, varied: &str, level: &str, line: usize) -> Result<(GpField, Level)> {
    let (f, l) = pair_label(pair_id).ok_or_else(|| parse_err(line, format!("pair_id {pair_id} out of range 1..=8")))?;
    let vf: GpField = varied
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("bad varied_param `{varied}`")))?;
    let vl: Level = level
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("bad level `{level}`")))?;
    if (vf, vl) != (f, l) {
        return Err(parse_err(
            line,
            format!("pair {pair_id} is {f}/{}, not {vf}/{}", l.as_str(), vl.as_str()),
        ));
    }
    Ok((f, l))
}

/// Reads either a responses file or an aggregated points file, told apart
/// by the header.
pub fn read_study_data(input: impl std::io::Read) -> Result<StudyData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let header = header.join(",");
    let responses = if header == RESPONSES_HEADER {
        true
    } else if header == POINTS_HEADER {
        false
    } else {
        return Err(parse_err(
            1,
            format!("expected header `{RESPONSES_HEADER}` or `{POINTS_HEADER}`"),
        ));
    };
    let mut rs = Vec::new();
    let mut ps = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if responses {
            let participant: u32 = field(&rec[0], "participant_id", line)?;
            let pair: u8 = field(&rec[1], "pair_id", line)?;
            check_label(pair, &rec[2], &rec[3], line)?;
            let mut ratings = [0i32; 4];
            for (k, r) in ratings.iter_mut().enumerate() {
                *r = field(&rec[4 + k], "rating", line)?;
            }
            rs.push(StudyResponse::new(participant, pair, ratings).map_err(|e| parse_err(line, e.to_string()))?);
        } else {
            let pair: u8 = field(&rec[0], "pair_id", line)?;
            let (f, l) = check_label(pair, &rec[1], &rec[2], line)?;
            let mut e = [0.0f64; 4];
            for (k, v) in e.iter_mut().enumerate() {
                *v = field(&rec[3 + k], "rating", line)?;
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(parse_err(line, "non-finite rating"));
            }
            ps.push(LabeledPoint::new(f, l, EntitativityVector::from_array(e)));
        }
    }
    Ok(if responses {
        StudyData::Responses(rs)
    } else {
        StudyData::Points(ps)
    })
}

pub fn write_responses(responses: &[StudyResponse], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESPONSES_HEADER.split(',')).map_err(csv_io)?;
    for r in responses {
        let mut row = vec![
            r.participant_id.to_string(),
            r.pair_id.to_string(),
            r.varied_param.name().to_string(),
            r.level.as_str().to_string(),
        ];
        row.extend(r.ratings.iter().map(i32::to_string));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_points(points: &[LabeledPoint], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(POINTS_HEADER.split(',')).map_err(csv_io)?;
    for p in points {
        let mut row = vec![
            p.pair_id.to_string(),
            p.varied_param.name().to_string(),
            p.level.as_str().to_string(),
        ];
        row.extend(p.e.to_array().iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Four lines of four space-separated values in shortest round-trip form.
pub fn write_matrix(m: &[[f64; 4]; 4], mut out: impl Write) -> Result<()> {
    for row in m {
        writeln!(out, "{} {} {} {}", row[0], row[1], row[2], row[3])?;
    }
    Ok(())
}

pub fn read_matrix(input: impl BufRead) -> Result<[[f64; 4]; 4]> {
    let mut m = [[0.0; 4]; 4];
    let mut rows = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if rows == 4 {
            return Err(parse_err(n, "more than 4 rows"));
        }
        let vals: Vec<&str> = trimmed.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        if vals.len() != 4 {
            return Err(parse_err(n, format!("expected 4 values, found {}", vals.len())));
        }
        for (k, v) in vals.iter().enumerate() {
            let x: f64 = field(v, "matrix entry", n)?;
            if !x.is_finite() {
                return Err(parse_err(n, "non-finite matrix entry"));
            }
            m[rows][k] = x;
        }
        rows += 1;
    }
    if rows != 4 {
        return Err(parse_err(rows + 1, format!("expected 4 rows, found {rows}")));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{AgentState, CrowdState};

    #[test]
    fn recording_tsv_reads_back() {
        let a = AgentState::new(4, AgentKind::Pedestrian, Vec2::new(0.1, -2.0), 0.3, Vec2::ZERO).unwrap();
        let b = AgentState::new(9, AgentKind::Robot, Vec2::new(1.0, 1.0), 0.3, Vec2::ZERO).unwrap();
        let mut crowd = CrowdState::new(vec![b, a], 0.0).unwrap();
        let mut rec = Recording::new(0.1, &crowd);
        crowd.agents[1].position.x += 0.25;
        rec.push(&crowd);
        let mut buf = Vec::new();
        write_recording(&rec, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("frame\tagent_id\tkind\tx\ty\n0\t9\trobot\t1.000000000\t1.000000000\n"));
        let trajs = read_trajectories(text.as_bytes()).unwrap();
        assert_eq!(trajs.iter().map(|t| t.agent_id).collect::<Vec<_>>(), vec![4, 9]);
        assert!((trajs[0].samples[1].position.x - 0.35).abs() < 1e-9);
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "frame\tagent_id\tkind\tx\ty\n0\t1\tpedestrian\t0\t0\n1\t1\tpedestrian\tzz\t0\n";
        match read_trajectories(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_trajectories("x\ty\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn study_file_kinds() {
        let r = format!("{RESPONSES_HEADER}\n1,3,radius,min,2,-1,0,1\n");
        match read_study_data(r.as_bytes()).unwrap() {
            StudyData::Responses(v) => assert_eq!(v[0].ratings, [2, -1, 0, 1]),
            other => panic!("{other:?}"),
        }
        let bad = format!("{RESPONSES_HEADER}\n1,3,radius,max,2,-1,0,1\n");
        assert!(matches!(read_study_data(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let p = format!("{POINTS_HEADER}\n8,group_cohesion,max,0.5,-0.25,1,0\n");
        match read_study_data(p.as_bytes()).unwrap() {
            StudyData::Points(v) => assert_eq!(v[0].e.creepiness, -0.25),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn matrix_shape_is_checked() {
        assert!(read_matrix("1 2 3 4\n1 2 3 4\n1 2 3 4\n".as_bytes()).is_err());
        assert!(read_matrix("1 2 3\n1 2 3 4\n1 2 3 4\n1 2 3 4\n".as_bytes()).is_err());
    }
}
