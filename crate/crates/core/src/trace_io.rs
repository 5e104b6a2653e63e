//! Line-oriented trace files.
//!
//! ```text
//! AOITRACE v1 <N> <M> <T>
//! # success_probs 0.5,0.7      (optional)
//! # seed 42                     (optional)
//! 1;1,2;1:2,2:-;GB;01
//! ```
//!
//! Each slot line holds the slot number, the 1-based cell of every user, the
//! 1-based `cell:user` assignment of every cell (`-` when idle), the channel
//! states as a `G`/`B` string and the success flags as a `1`/`0` string. Ages
//! are not stored; loading replays the age recursion.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::engine::{step_ages, AgeVector, Decision, Occupancy, SlotRecord, SystemParams, Trace};
use crate::error::{AoiError, Result};

const MAGIC: &str = "AOITRACE";
const VERSION: &str = "v1";

pub fn write_trace<W: Write>(trace: &Trace, mut out: W) -> Result<()> {
    let p = &trace.params;
    writeln!(out, "{MAGIC} {VERSION} {} {} {}", p.n_users, p.n_cells, trace.len())?;
    if !p.success_probs.is_empty() {
        let probs: Vec<String> = p.success_probs.iter().map(|x| x.to_string()).collect();
        writeln!(out, "# success_probs {}", probs.join(","))?;
    }
    writeln!(out, "# seed {}", p.seed)?;
    for rec in &trace.records {
        let cells: Vec<String> = rec
            .occupancy
            .as_slice()
            .iter()
            .map(|c| (c + 1).to_string())
            .collect();
        let sched: Vec<String> = rec
            .decision
            .cells()
            .iter()
            .enumerate()
            .map(|(c, u)| match u {
                Some(u) => format!("{}:{}", c + 1, u + 1),
                None => format!("{}:-", c + 1),
            })
            .collect();
        let channel: String = rec.channel.iter().map(|&g| if g { 'G' } else { 'B' }).collect();
        let success: String = rec.successes.iter().map(|&s| if s { '1' } else { '0' }).collect();
        writeln!(
            out,
            "{};{};{};{};{}",
            rec.t,
            cells.join(","),
            sched.join(","),
            channel,
            success
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    write_trace(trace, BufWriter::new(File::create(path)?))
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace> {
    read_trace(File::open(path)?)
}

fn parse_err(line: usize, msg: impl Into<String>) -> AoiError {
    AoiError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what} '{s}'")))
}

fn parse_flags(s: &str, n: usize, yes: char, no: char, line: usize, what: &str) -> Result<Vec<bool>> {
    let flags: Vec<bool> = s
        .trim()
        .chars()
        .map(|c| match c {
            c if c == yes => Ok(true),
            c if c == no => Ok(false),
            other => Err(parse_err(line, format!("unexpected '{other}' in {what}"))),
        })
        .collect::<Result<_>>()?;
    if flags.len() != n {
        return Err(parse_err(line, format!("{what} has {} entries, expected {n}", flags.len())));
    }
    Ok(flags)
}

pub fn read_trace<R: Read>(input: R) -> Result<Trace> {
    let mut lines = BufReader::new(input).lines().enumerate().map(|(i, l)| (i + 1, l));

    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != MAGIC || fields[1] != VERSION {
        return Err(parse_err(1, format!("expected '{MAGIC} {VERSION} N M T' header")));
    }
    let n: usize = parse_num(fields[2], 1, "N")?;
    let m: usize = parse_num(fields[3], 1, "M")?;
    let horizon: u64 = parse_num(fields[4], 1, "T")?;

    let mut success_probs = Vec::new();
    let mut seed = 0u64;
    let mut records = Vec::new();
    let mut ages = AgeVector::initial(n);
    let mut last_line = 1;

    for (lineno, line) in lines {
        let line = line?;
        last_line = lineno;
        let body = line.trim();
        if body.is_empty() {
            continue;
        }
        if let Some(comment) = body.strip_prefix('#') {
            let mut parts = comment.split_whitespace();
            match (parts.next(), parts.next()) {
                (Some("success_probs"), Some(v)) => {
                    success_probs = v
                        .split(',')
                        .map(|x| parse_num(x, lineno, "success probability"))
                        .collect::<Result<_>>()?;
                }
                (Some("seed"), Some(v)) => seed = parse_num(v, lineno, "seed")?,
                _ => {}
            }
            continue;
        }
        let slot = records.len() as u64 + 1;
        if slot > horizon {
            return Err(parse_err(lineno, format!("more slot lines than T = {horizon}")));
        }
        let cols: Vec<&str> = body.split(';').collect();
        if cols.len() != 5 {
            return Err(parse_err(lineno, format!("expected 5 ';'-separated fields, got {}", cols.len())));
        }
        let t: u64 = parse_num(cols[0], lineno, "slot")?;
        if t != slot {
            return Err(parse_err(lineno, format!("slot {t} out of order (expected {slot})")));
        }
        let cell_of: Vec<usize> = cols[1]
            .split(',')
            .map(|c| {
                let c: usize = parse_num(c, lineno, "cell")?;
                c.checked_sub(1).ok_or_else(|| parse_err(lineno, "cells are 1-based"))
            })
            .collect::<Result<_>>()?;
        if cell_of.len() != n {
            return Err(parse_err(lineno, format!("{} cell entries, expected {n}", cell_of.len())));
        }
        let occupancy = Occupancy::new(cell_of, m).map_err(|e| parse_err(lineno, e.to_string()))?;

        let mut decision = Decision::idle(m);
        let entries: Vec<&str> = cols[2].split(',').collect();
        if entries.len() != m {
            return Err(parse_err(lineno, format!("{} schedule entries, expected {m}", entries.len())));
        }
        for (cell, entry) in entries.iter().enumerate() {
            let (c, u) = entry
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("bad schedule entry '{entry}'")))?;
            if parse_num::<usize>(c, lineno, "cell")? != cell + 1 {
                return Err(parse_err(lineno, format!("schedule entry '{entry}' out of order")));
            }
            if u.trim() != "-" {
                let u: usize = parse_num(u, lineno, "user")?;
                if u == 0 || u > n {
                    return Err(parse_err(lineno, format!("user {u} out of range")));
                }
                decision.assign(cell, u - 1);
            }
        }
        decision
            .validate(&occupancy)
            .map_err(|e| parse_err(lineno, e.to_string()))?;

        let channel = parse_flags(cols[3], n, 'G', 'B', lineno, "channel")?;
        let successes = parse_flags(cols[4], n, '1', '0', lineno, "success")?;
        for user in 0..n {
            let expect = decision.is_scheduled(user, &occupancy) && channel[user];
            if successes[user] != expect {
                return Err(parse_err(
                    lineno,
                    format!("success flag of user {} contradicts schedule and channel", user + 1),
                ));
            }
        }
        ages = step_ages(&ages, &successes)?;
        records.push(SlotRecord {
            t,
            occupancy,
            decision,
            channel,
            successes,
            ages_after: ages.clone(),
        });
    }

    if (records.len() as u64) < horizon {
        return Err(parse_err(
            last_line + 1,
            format!("file ends before slot {} of {horizon}", records.len() + 1),
        ));
    }
    let params = SystemParams::new(n, m, success_probs, horizon, seed)
        .map_err(|e| parse_err(1, e.to_string()))?;
    Ok(Trace { params, records })
}
